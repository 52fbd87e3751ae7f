#!/usr/bin/env python3
"""Smoke test for the gfmsf Python extension.

Builds nothing itself: expects `cargo build -p gfmsf-py --release` (or a
debug build) to have produced target/<profile>/libgfmsf.so. The library is
copied into a temp directory under the importable name and exercised
end to end.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def locate_library() -> Path:
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libgfmsf.so",
        root / "target" / "debug" / "libgfmsf.so",
        root / "target" / "release" / "libgfmsf.dylib",
        root / "target" / "debug" / "libgfmsf.dylib",
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit(
        "libgfmsf not found; run `cargo build -p gfmsf-py --release` first"
    )


def import_module():
    lib = locate_library()
    tmp = Path(tempfile.mkdtemp(prefix="gfmsf_py_"))
    shutil.copy2(lib, tmp / "gfmsf.so")
    sys.path.insert(0, str(tmp))
    import gfmsf  # noqa: E402

    return gfmsf


def main() -> None:
    gfmsf = import_module()
    print(f"imported gfmsf {gfmsf.__version__}")

    # dq phasor basics
    v = gfmsf.DqVector(0.8, -0.6)
    assert abs(v.amplitude() - 1.0) < 1e-12
    r = v.rotate(math.pi / 2)
    assert abs(r.d - 0.6) < 1e-12 and abs(r.q - 0.8) < 1e-12
    print("dq vector ok")

    # Park transforms round-trip
    abc = gfmsf.park_inverse(0.3, 1.0, -0.2, 0.1)
    dq0 = gfmsf.park_forward(0.3, *abc)
    assert max(abs(a - b) for a, b in zip(dq0, (1.0, -0.2, 0.1))) < 1e-12
    print("park round-trip ok")

    # certificate anchors
    b0, _ = gfmsf.eval_certificates(0, 0, 0, 0, 0, 0, 0)
    assert b0 == -1.0
    _, v_ref = gfmsf.eval_certificates(0.9, 0, 0, 0, 0.9, 0, 0)
    assert abs(v_ref + 0.433) < 1e-12
    print("certificate anchors ok")

    # closed-form QP: projection onto a violated halfplane
    res = gfmsf.qp_solve((1.0, 1.0), (1.0, 0.0, 0.0))
    assert abs(res.u[0]) < 1e-12 and abs(res.u[1] - 1.0) < 1e-12
    assert res.active_set == "Cbf"
    print("qp projection ok")

    # sampling verifier on a modest budget
    reports = gfmsf.verify(samples=2000, seed=3)
    for condition, tested, violations in reports:
        assert violations == 0, f"{condition}: {violations} violations"
        assert tested >= 2000
    print("verifier ok:", ", ".join(c for c, _, _ in reports))

    # short fault scenario with the safety filter
    cfg = "t_end = 0.5\nt_fault_on = 0.05\nt_fault_off = 0.35\nsettle = 0.3\n"
    result = gfmsf.run_scenario(cfg)
    assert len(result) == 2500
    assert result.stable
    peak = max(result.column("i_phase_max"))
    assert peak <= 1.30 * 1.02, f"peak current {peak}"
    assert result.to_csv().startswith("t,i_d,i_q,")
    print(f"scenario ok: peak phase current {peak:.4f} p.u.")

    # fault-free run leaves the reference untouched
    quiet = gfmsf.run_scenario("fault = off\nt_end = 0.4\nsettle = 0.4\n")
    assert quiet.max_dv <= 1e-6
    print("inactivity ok")

    # worst-case phase amplitude bound
    m = gfmsf.check_abc_bound(360, 360, 1.0, 0.3)
    assert abs(m - 1.3) < 1e-3
    print("abc bound ok")

    print("smoke test passed")


if __name__ == "__main__":
    main()

//! Conventional current-limiting baselines: switched current control,
//! reference-limited proportional current control, and adaptive virtual
//! impedance. Each maps the GFM voltage reference and measurements to a
//! terminal-voltage command and is an exact pass-through while inactive.

use crate::frames::{DqVector, Impedance};
use crate::gfm::limit_current_reference;

#[derive(Clone, Copy, Debug)]
pub struct ClcParams {
    pub k_p_cc: f64,
    pub t_i_cc: f64,
    pub i_th: f64,
    pub hysteresis: f64,
    pub k_x: f64,
    pub eta_xr: f64,
}

impl Default for ClcParams {
    fn default() -> Self {
        Self {
            k_p_cc: 0.342,
            t_i_cc: 0.002,
            i_th: 1.18,
            hysteresis: 0.05,
            k_x: 10.0,
            eta_xr: 16.0,
        }
    }
}

/// Switched current control: a PI current controller that takes over
/// (shifting the converter into current-tracking operation) whenever the
/// current exceeds the threshold, with a hysteresis band on deactivation.
#[derive(Clone, Copy, Debug, Default)]
pub struct SccState {
    pub active: bool,
    pub pi_integrator: DqVector,
}

#[allow(clippy::too_many_arguments)]
pub fn scc_step(
    s: &mut SccState,
    v_ref: DqVector,
    i: DqVector,
    i_r: DqVector,
    v_pcc_f: DqVector,
    z_c: &Impedance,
    omega: f64,
    p: &ClcParams,
    dt: f64,
) -> DqVector {
    debug_assert!(dt > 0.0);
    let norm = i.amplitude();
    if !s.active && norm >= p.i_th {
        s.active = true;
    } else if s.active && norm <= p.i_th - p.hysteresis {
        s.active = false;
        s.pi_integrator = DqVector::ZERO;
    }
    if !s.active {
        return v_ref;
    }
    let e = i_r - i;
    s.pi_integrator += e * (p.k_p_cc * dt / p.t_i_cc);
    v_pcc_f + z_c.apply(omega, i_r) + e * p.k_p_cc + s.pi_integrator
}

/// Reference-limited proportional current control. The fictitious reference
/// `i_r′` is the current a proportional controller would have to track to
/// reproduce `v_ref`; while it stays below the threshold the output equals
/// `v_ref` exactly, otherwise it is clamped with d-axis priority.
pub fn rlcc_step(
    v_ref: DqVector,
    i: DqVector,
    v_pcc_f: DqVector,
    z_c: &Impedance,
    omega: f64,
    k_p: f64,
    i_th: f64,
) -> DqVector {
    assert!(k_p > 0.0);
    let i_r_fict = i + (v_ref - v_pcc_f - z_c.apply(omega, i)) * (1.0 / k_p);
    if i_r_fict.amplitude() <= i_th {
        return v_ref;
    }
    let clamped = limit_current_reference(i_r_fict, i_th);
    v_pcc_f + z_c.apply(omega, i) + (clamped - i) * k_p
}

/// Virtual impedance engaged above the current threshold.
#[derive(Clone, Copy, Debug, Default)]
pub struct AviState {
    pub x_v: f64,
    pub r_v: f64,
}

/// Adaptive virtual impedance: the reactance grows with the positive
/// deviation of the current amplitude from the threshold, the resistance
/// follows from the X/R ratio, and the resulting drop is subtracted from
/// the voltage reference.
pub fn avi_step(
    v_ref: DqVector,
    i: DqVector,
    k_x: f64,
    eta_xr: f64,
    i_th: f64,
    omega: f64,
) -> (DqVector, AviState) {
    assert!(k_x >= 0.0 && eta_xr > 0.0);
    let x_v = k_x * (i.amplitude() - i_th).max(0.0);
    if x_v == 0.0 {
        return (v_ref, AviState::default());
    }
    let r_v = x_v / eta_xr;
    let drop = DqVector::new(r_v * i.d - omega * x_v * i.q, omega * x_v * i.d + r_v * i.q);
    (v_ref - drop, AviState { x_v, r_v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn z_c() -> Impedance {
        Impedance::new(0.02, 0.16)
    }

    #[test]
    fn scc_passes_through_below_threshold() {
        let p = ClcParams::default();
        let mut s = SccState::default();
        let v_ref = DqVector::new(1.01, 0.07);
        let out = scc_step(
            &mut s,
            v_ref,
            DqVector::new(0.9, 0.0),
            DqVector::new(0.9, 0.0),
            DqVector::new(1.0, 0.0),
            &z_c(),
            1.0,
            &p,
            2e-4,
        );
        assert_eq!(out, v_ref);
        assert!(!s.active);
    }

    #[test]
    fn scc_activates_at_threshold() {
        let p = ClcParams::default();
        let mut s = SccState::default();
        scc_step(
            &mut s,
            DqVector::new(1.0, 0.0),
            DqVector::new(1.2, 0.0),
            DqVector::new(1.0, 0.0),
            DqVector::new(1.0, 0.0),
            &z_c(),
            1.0,
            &p,
            2e-4,
        );
        assert!(s.active);
    }

    #[test]
    fn scc_feed_forward_only_at_zero_error() {
        let p = ClcParams::default();
        let mut s = SccState {
            active: true,
            pi_integrator: DqVector::ZERO,
        };
        // inside the hysteresis band, so the controller stays active
        let i_r = DqVector::new(1.16, 0.0);
        let v_pcc_f = DqVector::new(0.6, 0.1);
        let out = scc_step(&mut s, DqVector::ZERO, i_r, i_r, v_pcc_f, &z_c(), 1.0, &p, 2e-4);
        let expect = v_pcc_f + z_c().apply(1.0, i_r);
        assert_abs_diff_eq!(out.d, expect.d, epsilon = 1e-15);
        assert_abs_diff_eq!(out.q, expect.q, epsilon = 1e-15);
    }

    #[test]
    fn scc_hysteresis_prevents_chatter_on_monotone_ramp() {
        let p = ClcParams::default();
        let mut s = SccState::default();
        let mut transitions = 0;
        let mut prev = s.active;
        // ramp current up through the threshold, then back down
        for k in 0..2000 {
            let norm = if k < 1000 {
                1.0 + 0.3 * k as f64 / 1000.0
            } else {
                1.3 - 0.3 * (k - 1000) as f64 / 1000.0
            };
            let i = DqVector::new(norm, 0.0);
            scc_step(
                &mut s,
                DqVector::new(1.0, 0.0),
                i,
                DqVector::new(1.0, 0.0),
                DqVector::new(1.0, 0.0),
                &z_c(),
                1.0,
                &p,
                2e-4,
            );
            if s.active != prev {
                transitions += 1;
                prev = s.active;
            }
        }
        assert_eq!(transitions, 2, "one activation and one deactivation");
        assert_eq!(s.pi_integrator, DqVector::ZERO, "integrator reset on deactivation");
    }

    #[test]
    fn rlcc_is_exact_pass_through_when_fictitious_reference_is_small() {
        // steady operating point: v_ref consistent with the actual current
        let i = DqVector::new(0.9, 0.0);
        let v_pcc_f = DqVector::new(1.0, 0.0);
        let v_ref = v_pcc_f + z_c().apply(1.0, i);
        let out = rlcc_step(v_ref, i, v_pcc_f, &z_c(), 1.0, 0.342, 1.18);
        assert_eq!(out, v_ref);
    }

    #[test]
    fn rlcc_engages_when_reference_voltage_is_offset() {
        // collapsed PCC filter voltage pushes the fictitious reference far
        // beyond the threshold
        let i = DqVector::new(1.0, 0.0);
        let v_pcc_f = DqVector::new(0.1, 0.0);
        let v_ref = DqVector::new(1.0, 0.1);
        let out = rlcc_step(v_ref, i, v_pcc_f, &z_c(), 1.0, 0.342, 1.18);
        assert!((out - v_ref).amplitude() > 0.0, "limiter must engage");
        // proportional-only control leaves a steady tracking error: the
        // output no longer reproduces v_ref
        let back = v_pcc_f + z_c().apply(1.0, i)
            + (limit_current_reference(
                i + (v_ref - v_pcc_f - z_c().apply(1.0, i)) * (1.0 / 0.342),
                1.18,
            ) - i) * 0.342;
        assert_abs_diff_eq!(out.d, back.d, epsilon = 1e-15);
        assert_abs_diff_eq!(out.q, back.q, epsilon = 1e-15);
    }

    #[test]
    fn avi_inactive_below_threshold() {
        let v_ref = DqVector::new(1.0, 0.2);
        let (out, s) = avi_step(v_ref, DqVector::new(1.0, 0.0), 10.0, 16.0, 1.18, 1.0);
        assert_eq!(out, v_ref);
        assert_eq!(s.x_v, 0.0);
    }

    #[test]
    fn avi_hand_values() {
        let (_, s) = avi_step(DqVector::ZERO, DqVector::new(1.28, 0.0), 10.0, 16.0, 1.18, 1.0);
        assert_abs_diff_eq!(s.x_v, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.r_v, 0.0625, epsilon = 1e-12);

        let v_ref = DqVector::new(1.0, 0.0);
        let (out, _) = avi_step(v_ref, DqVector::new(1.28, 0.0), 10.0, 16.0, 1.18, 1.0);
        assert_abs_diff_eq!(v_ref.d - out.d, 0.08, epsilon = 1e-12);
        assert_abs_diff_eq!(v_ref.q - out.q, 1.28, epsilon = 1e-12);
    }

    #[test]
    fn avi_drop_is_continuous_at_threshold() {
        let v_ref = DqVector::new(1.0, 0.0);
        for eps in [1e-9, 1e-6, 1e-3] {
            let i = DqVector::new(1.18 + eps, 0.0);
            let (out, _) = avi_step(v_ref, i, 10.0, 16.0, 1.18, 1.0);
            let drop = (v_ref - out).amplitude();
            assert!(drop < 20.0 * eps, "drop {drop} at eps {eps}");
        }
    }
}

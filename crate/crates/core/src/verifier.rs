//! Sampling-based verification of the certificate conditions: barrier
//! decrease on the safe-set boundary, Lyapunov decrease (jointly feasible
//! with the barrier row) in the transitional region, nominal-region
//! invariance under the refined nominal controller, set containment, and
//! the worst-case three-phase current bound.
//!
//! The checks provide falsification power and regression safety; they do
//! not prove the conditions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::frames::{park_inverse, Dq0Vector, DqVector};
use crate::plant::{NonStationaryState, SimplifiedModel, StationaryState};
use crate::sfilter::{allowable_margin, refined_nominal_control, CertificateSet, FilterParams};

/// Residuals above this are reported as violations; below it they are
/// treated as numeric noise.
pub const RESIDUAL_TOL: f64 = 1e-9;

/// Permissible ranges of the stationary and non-stationary states. With
/// `paper_sign` the four inequalities are applied with flipped sign, which
/// reproduces the printed variant of the operational region for comparison.
#[derive(Clone, Copy, Debug)]
pub struct OperationalRegion {
    pub i_max: f64,
    pub dv_max: f64,
    pub i_r_max: f64,
    pub i_0_max: f64,
    pub paper_sign: bool,
}

impl Default for OperationalRegion {
    fn default() -> Self {
        Self {
            i_max: 1.30,
            dv_max: 1.0,
            i_r_max: 1.18,
            i_0_max: 0.6,
            paper_sign: false,
        }
    }
}

impl OperationalRegion {
    /// The four region functions; every point with all values ≤ 0 is inside.
    pub fn f_op(&self, vars: &[f64; 7]) -> [f64; 4] {
        let i2 = vars[0] * vars[0] + vars[1] * vars[1];
        let dv2 = vars[2] * vars[2] + vars[3] * vars[3];
        let ir2 = vars[4] * vars[4] + vars[5] * vars[5];
        let i0 = vars[6];
        let half = self.i_0_max / 2.0;
        let mut f = [
            i2 - (self.i_max - i0) * (self.i_max - i0),
            dv2 - self.dv_max * self.dv_max,
            ir2 - (self.i_r_max - i0) * (self.i_r_max - i0),
            (i0 - half) * (i0 - half) - half * half,
        ];
        if self.paper_sign {
            for v in &mut f {
                *v = -*v;
            }
        }
        f
    }

    pub fn contains(&self, vars: &[f64; 7]) -> bool {
        self.f_op(vars).iter().all(|&f| f <= 0.0)
    }

    fn sample_box(&self, rng: &mut ChaCha8Rng) -> [f64; 7] {
        // box scaled out when reproducing the printed (exterior) variant
        let s = if self.paper_sign { 2.0 } else { 1.0 };
        let i_b = s * self.i_max;
        let dv_b = s * self.dv_max;
        let ir_b = s * self.i_r_max;
        let (i0_lo, i0_hi) = if self.paper_sign {
            (-self.i_0_max, 2.0 * self.i_0_max)
        } else {
            (0.0, self.i_0_max)
        };
        [
            rng.random_range(-i_b..i_b),
            rng.random_range(-i_b..i_b),
            rng.random_range(-dv_b..dv_b),
            rng.random_range(-dv_b..dv_b),
            rng.random_range(-ir_b..ir_b),
            rng.random_range(-ir_b..ir_b),
            rng.random_range(i0_lo..i0_hi),
        ]
    }
}

/// Uniform samples over the operational region (box sampling with
/// rejection). Deterministic for a fixed seed.
pub fn sample_region(region: &OperationalRegion, n: usize, seed: u64) -> Vec<[f64; 7]> {
    assert!(n > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        assert!(
            attempts < 10_000 * n + 10_000,
            "operational region acceptance rate too low"
        );
        let vars = region.sample_box(&mut rng);
        if region.contains(&vars) {
            out.push(vars);
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Violation {
    pub condition: &'static str,
    pub point: [f64; 7],
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub condition: &'static str,
    pub samples_tested: usize,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} samples={} violations={} {}",
            self.condition,
            self.samples_tested,
            self.violations.len(),
            if self.pass() { "PASS" } else { "FAIL" }
        )
    }
}

/// Certificate checks over an operational region.
#[derive(Clone, Debug)]
pub struct Verifier {
    pub certs: CertificateSet,
    pub params: FilterParams,
    pub model: SimplifiedModel,
    pub region: OperationalRegion,
}

struct PointEval {
    b: f64,
    v: f64,
    /// Input-channel rows `Gᵀ∇B`, `Gᵀ∇V`.
    a_b: DqVector,
    a_v: DqVector,
    /// Drift terms `∇Bᵀf`, `∇Vᵀf`.
    drift_b: f64,
    drift_v: f64,
}

fn split_vars(vars: &[f64; 7]) -> (NonStationaryState, StationaryState) {
    (
        NonStationaryState::from_array([vars[0], vars[1], vars[2], vars[3]]),
        StationaryState::new(DqVector::new(vars[4], vars[5]), vars[6]),
    )
}

impl Verifier {
    pub fn new(
        certs: CertificateSet,
        params: FilterParams,
        model: SimplifiedModel,
        region: OperationalRegion,
    ) -> Self {
        Self {
            certs,
            params,
            model,
            region,
        }
    }

    fn ball_center(&self) -> DqVector {
        // u = v_c − v_PCC around the nominal PCC voltage (1, 0)
        DqVector::new(-1.0, 0.0)
    }

    fn ball_radius(&self) -> f64 {
        self.params.m_max.sqrt()
    }

    fn eval_point(&self, vars: &[f64; 7]) -> PointEval {
        let (x, z) = split_vars(vars);
        let (b, grad_b) = self.certs.barrier.eval_with_gradient(&x, &z);
        let (v, grad_v) = self.certs.lyapunov.eval_with_gradient(&x, &z);
        let drift = self.model.drift(&x, 1.0);
        let g = self.model.input_gain();
        let dot = |grad: &[f64; 4]| grad.iter().zip(drift.iter()).map(|(a, b)| a * b).sum();
        PointEval {
            b,
            v,
            a_b: DqVector::new(g * grad_b[0], g * grad_b[1]),
            a_v: DqVector::new(g * grad_v[0], g * grad_v[1]),
            drift_b: dot(&grad_b),
            drift_v: dot(&grad_v),
        }
    }

    /// Minimum of the affine function `drift + a·u` over the input ball.
    fn ball_min(&self, a: DqVector, drift: f64) -> f64 {
        drift + a.dot(self.ball_center()) - self.ball_radius() * a.amplitude()
    }

    /// Draws a point close to the barrier boundary by radial bisection of
    /// the current magnitude, keeping the rest of the sample fixed.
    fn boundary_sample_b(&self, rng: &mut ChaCha8Rng, band: f64) -> Option<[f64; 7]> {
        let mut vars = self.region.sample_box(rng);
        if !self.region.contains(&vars) {
            return None;
        }
        let i = DqVector::new(vars[0], vars[1]);
        if i.amplitude() < 1e-6 {
            return None;
        }
        let (_, z) = split_vars(&vars);
        let b_at = |scale: f64, vars: &[f64; 7]| {
            let mut v = *vars;
            v[0] = i.d * scale;
            v[1] = i.q * scale;
            self.certs.barrier.eval_vars(&v)
        };
        // scale out to the allowable-set boundary
        let s_hi = (self.region.i_max - z.i_0).max(0.0) / i.amplitude();
        let (mut lo, mut hi) = (0.0, s_hi);
        if b_at(lo, &vars) >= 0.0 || b_at(hi, &vars) <= 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let val = b_at(mid, &vars);
            if val.abs() <= 0.25 * band {
                vars[0] = i.d * mid;
                vars[1] = i.q * mid;
                return self.region.contains(&vars).then_some(vars);
            }
            if val < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        None
    }

    /// Draws a point close to the nominal-region boundary: Newton descent to
    /// the Lyapunov minimizer in `x`, then radial bisection outward.
    fn boundary_sample_v(&self, rng: &mut ChaCha8Rng, band: f64) -> Option<[f64; 7]> {
        let vars = self.region.sample_box(rng);
        if !self.region.contains(&vars) {
            return None;
        }
        let center = self.lyapunov_center(&vars)?;
        let at = |x: &[f64; 4]| {
            let mut v = vars;
            v[..4].copy_from_slice(x);
            v
        };
        let v_of = |vars: &[f64; 7]| self.certs.lyapunov.eval_vars(vars);
        if v_of(&at(&center)) >= 0.0 {
            return None;
        }
        // expand outward along a random direction until V > 0
        let dir = {
            let mut d = [0.0; 4];
            for dk in &mut d {
                *dk = rng.random_range(-1.0..1.0);
            }
            let n: f64 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n < 1e-9 {
                return None;
            }
            d.map(|v| v / n)
        };
        let point = |s: f64| {
            let mut x = center;
            for k in 0..4 {
                x[k] += s * dir[k];
            }
            at(&x)
        };
        let mut hi = 0.05;
        let mut found = false;
        for _ in 0..40 {
            if v_of(&point(hi)) > 0.0 {
                found = true;
                break;
            }
            hi *= 1.6;
        }
        if !found {
            return None;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let p = point(mid);
            let val = v_of(&p);
            if val.abs() <= 0.25 * band {
                return self.region.contains(&p).then_some(p);
            }
            if val < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        None
    }

    /// Newton iteration on `∇_x V = 0` with a central-difference Hessian.
    /// Exact in one step for quadratic certificates.
    fn lyapunov_center(&self, vars: &[f64; 7]) -> Option<[f64; 4]> {
        let mut x = [vars[0], vars[1], vars[2], vars[3]];
        let grad_at = |x: &[f64; 4]| {
            let mut v = *vars;
            v[..4].copy_from_slice(x);
            self.certs.lyapunov.eval_vars_with_gradient(&v).1
        };
        for _ in 0..8 {
            let g = grad_at(&x);
            let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gnorm < 1e-10 {
                return Some(x);
            }
            let h = 1e-5;
            let mut hess = [[0.0; 4]; 4];
            for k in 0..4 {
                let mut xp = x;
                xp[k] += h;
                let gp = grad_at(&xp);
                let mut xm = x;
                xm[k] -= h;
                let gm = grad_at(&xm);
                for r in 0..4 {
                    hess[r][k] = (gp[r] - gm[r]) / (2.0 * h);
                }
            }
            let step = solve4(&hess, &g)?;
            for k in 0..4 {
                x[k] -= step[k];
            }
        }
        let g = grad_at(&x);
        let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        (gnorm < 1e-6).then_some(x)
    }

    fn collect_boundary<F>(&self, n: usize, mut gen: F) -> Vec<[f64; 7]>
    where
        F: FnMut() -> Option<[f64; 7]>,
    {
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while out.len() < n {
            attempts += 1;
            if attempts > 2000 * n + 10_000 {
                break; // report what was collected
            }
            if let Some(p) = gen() {
                out.push(p);
            }
        }
        out
    }

    /// Barrier condition on the safe-set boundary: some admissible input
    /// makes the barrier non-increasing.
    pub fn check_cbf_boundary(&self, n: usize, seed: u64, band: f64) -> VerificationReport {
        assert!(band > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb0da_0001);
        let samples = self.collect_boundary(n, || self.boundary_sample_b(&mut rng, band));
        let mut violations = Vec::new();
        for vars in &samples {
            let e = self.eval_point(vars);
            let residual = self.ball_min(e.a_b, e.drift_b);
            if residual > RESIDUAL_TOL {
                violations.push(Violation {
                    condition: "cbf_boundary",
                    point: *vars,
                    residual,
                });
            }
        }
        VerificationReport {
            condition: "cbf_boundary",
            samples_tested: samples.len(),
            violations,
        }
    }

    /// Lyapunov decrease over the transitional region, plus joint
    /// feasibility with the barrier row near the safe-set boundary (the
    /// conditions must hold for the same input).
    pub fn check_clf_region(&self, n: usize, seed: u64, band: f64) -> VerificationReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc1f0_0001);
        let mut violations = Vec::new();
        let mut tested = 0usize;

        // interior of the transitional region: B ≤ 0 ≤ V
        let mut attempts = 0usize;
        while tested < n {
            attempts += 1;
            if attempts > 2000 * n + 10_000 {
                break;
            }
            let vars = self.region.sample_box(&mut rng);
            if !self.region.contains(&vars) {
                continue;
            }
            let e = self.eval_point(&vars);
            if !(e.b <= 0.0 && e.v >= 0.0) {
                continue;
            }
            tested += 1;
            let d = self.params.dissipation(e.v);
            let residual = self.ball_min(e.a_v, e.drift_v) + d;
            if residual > RESIDUAL_TOL {
                violations.push(Violation {
                    condition: "clf_region",
                    point: vars,
                    residual,
                });
            }
        }

        // joint feasibility where both conditions apply
        let joint = self.collect_boundary(n, || self.boundary_sample_b(&mut rng, band));
        for vars in &joint {
            let e = self.eval_point(vars);
            if e.v < 0.0 {
                continue; // outside the transitional region
            }
            tested += 1;
            let d = self.params.dissipation(e.v);
            let residual = self.joint_residual(&e, d);
            if residual > RESIDUAL_TOL {
                violations.push(Violation {
                    condition: "clf_cbf_joint",
                    point: *vars,
                    residual,
                });
            }
        }

        VerificationReport {
            condition: "clf_region",
            samples_tested: tested,
            violations,
        }
    }

    /// Smallest joint residual `max(Ḃ, V̇ + d)` over candidate inputs on the
    /// admissible ball: the two single-row optima plus a fine angular sweep
    /// of the ball surface.
    fn joint_residual(&self, e: &PointEval, d: f64) -> f64 {
        let c = self.ball_center();
        let r = self.ball_radius();
        let eval = |u: DqVector| {
            let rb = e.drift_b + e.a_b.dot(u);
            let rv = e.drift_v + e.a_v.dot(u) + d;
            rb.max(rv)
        };
        let mut best = f64::INFINITY;
        for a in [e.a_b, e.a_v] {
            let n = a.amplitude();
            let u = if n > 1e-12 { c - a * (r / n) } else { c };
            best = best.min(eval(u));
            if best <= 0.0 {
                return best;
            }
        }
        for k in 0..3600 {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / 3600.0;
            let u = c + DqVector::new(r * phi.cos(), r * phi.sin());
            best = best.min(eval(u));
            if best <= 0.0 {
                return best;
            }
        }
        best
    }

    /// Nominal-region invariance: on the boundary of the nominal region the
    /// refined nominal controller keeps the Lyapunov function decreasing.
    pub fn check_nominal_invariance(&self, n: usize, seed: u64, band: f64) -> VerificationReport {
        assert!(band > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0a0b_0c0d);
        let samples = self.collect_boundary(n, || self.boundary_sample_v(&mut rng, band));
        let mut violations = Vec::new();
        for vars in &samples {
            let (x, z) = split_vars(vars);
            let e = self.eval_point(vars);
            let u_n = refined_nominal_control(&x, &z, &self.model.z_c, 1.0);
            let d = self.params.dissipation(e.v);
            let residual = e.drift_v + e.a_v.dot(u_n) + d;
            if residual > RESIDUAL_TOL {
                violations.push(Violation {
                    condition: "nominal_invariance",
                    point: *vars,
                    residual,
                });
            }
        }
        VerificationReport {
            condition: "nominal_invariance",
            samples_tested: samples.len(),
            violations,
        }
    }

    /// Set containment over region samples: the nominal region sits inside
    /// the safe set, which sits inside the allowable set.
    pub fn check_containment(&self, n: usize, seed: u64) -> VerificationReport {
        let samples = sample_region(&self.region, n, seed ^ 0x5e7c_0a11);
        let mut violations = Vec::new();
        for vars in &samples {
            let (x, z) = split_vars(vars);
            let b = self.certs.barrier.eval_vars(vars);
            let v = self.certs.lyapunov.eval_vars(vars);
            let mut w = allowable_margin(&x, &z, self.region.i_max);
            if self.region.paper_sign {
                w = -w;
            }
            if v <= 0.0 && b > RESIDUAL_TOL {
                violations.push(Violation {
                    condition: "containment_n_in_s",
                    point: *vars,
                    residual: b,
                });
            }
            if b <= 0.0 && w > RESIDUAL_TOL {
                violations.push(Violation {
                    condition: "containment_s_in_a",
                    point: *vars,
                    residual: w,
                });
            }
        }
        VerificationReport {
            condition: "containment",
            samples_tested: samples.len(),
            violations,
        }
    }
}

/// Brute-force worst instantaneous phase-current amplitude over electrical
/// angle and current-phasor angle grids, for a dq amplitude `i_hat` and a
/// zero-sequence component `i_0`.
pub fn check_abc_bound(n_theta: usize, n_phi: usize, i_hat: f64, i_0: f64) -> f64 {
    assert!(n_theta >= 360 && n_phi >= 360, "grid sizes must be >= 360");
    let mut max_amp: f64 = 0.0;
    for kt in 0..n_theta {
        let theta = 2.0 * std::f64::consts::PI * kt as f64 / n_theta as f64;
        for kp in 0..n_phi {
            let phi = 2.0 * std::f64::consts::PI * kp as f64 / n_phi as f64;
            let i = Dq0Vector::new(i_hat * phi.cos(), i_hat * phi.sin(), i_0);
            for ph in park_inverse(theta, i) {
                max_amp = max_amp.max(ph.abs());
            }
        }
    }
    max_amp
}

/// Gaussian elimination with partial pivoting for the 4×4 Newton step.
fn solve4(a: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut m = *a;
    let mut rhs = *b;
    for col in 0..4 {
        let mut piv = col;
        for row in col + 1..4 {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            #[allow(clippy::needless_range_loop)]
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut acc = rhs[row];
        for k in row + 1..4 {
            acc -= m[row][k] * x[k];
        }
        x[row] = acc / m[row][row];
    }
    Some(x)
}

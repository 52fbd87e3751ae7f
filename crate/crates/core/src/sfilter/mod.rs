//! Quadratic-program safety filter: polynomial barrier/Lyapunov certificate
//! evaluation, the nominal control law, and the closed-form per-step filter
//! that minimally modifies the nominal converter voltage.

mod certificate;
mod qp;

pub use certificate::{pack_vars, CertificateError, CertificateSet, PolynomialCertificate, Term, NUM_VARS};
pub use qp::{qp_solve, ActiveSet, Halfplane, QpError, QpResult};

use crate::frames::{DqVector, Impedance};
use crate::plant::{NonStationaryState, SimplifiedModel, StationaryState};

/// Proportional gain of the refined nominal controller used in the offline
/// nominal-region condition.
pub const REFINED_GAIN: f64 = 0.2;

/// Filter constants: class-K slopes of the two rows, current bounds, the
/// input-ball radius used by the verifier, and the dissipation constants.
#[derive(Clone, Copy, Debug)]
pub struct FilterParams {
    pub gamma_b: f64,
    pub gamma_v: f64,
    pub i_max: f64,
    pub i_th: f64,
    pub m_max: f64,
    pub d_r: f64,
    pub epsilon: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            gamma_b: 211.0,
            gamma_v: 683.0,
            i_max: 1.30,
            i_th: 1.18,
            m_max: 2.25,
            d_r: 0.1,
            epsilon: 1e-3,
        }
    }
}

impl FilterParams {
    /// Dissipation rate `d(x,z) = d_r · (V + ε)`.
    pub fn dissipation(&self, v: f64) -> f64 {
        self.d_r * (v + self.epsilon)
    }

    /// Whether an input lies in the admissible set
    /// `‖u + v_PCC,n‖² ≤ m_max` around the nominal PCC voltage.
    pub fn input_admissible(&self, u: DqVector) -> bool {
        let shifted = u + DqVector::new(1.0, 0.0);
        shifted.dot(shifted) <= self.m_max
    }
}

/// Nominal control `u_n = Z_c·i_r + Δv_PCC,f`.
pub fn nominal_control(
    x: &NonStationaryState,
    z: &StationaryState,
    z_c: &Impedance,
    omega: f64,
) -> DqVector {
    z_c.apply(omega, z.i_r) + x.dv_pcc_f
}

/// Refined nominal control `u_n′ = 0.2·(i_r − i) + u_n`.
pub fn refined_nominal_control(
    x: &NonStationaryState,
    z: &StationaryState,
    z_c: &Impedance,
    omega: f64,
) -> DqVector {
    nominal_control(x, z, z_c, omega) + (z.i_r - x.i) * REFINED_GAIN
}

/// Margin of the allowable set, `w(x,z) = ‖i‖² − (i_max − i_0)²`; negative
/// inside, zero on the boundary.
pub fn allowable_margin(x: &NonStationaryState, z: &StationaryState, i_max: f64) -> f64 {
    debug_assert!(z.i_0 <= i_max);
    x.i.dot(x.i) - (i_max - z.i_0) * (i_max - z.i_0)
}

/// Per-step filter diagnostics.
#[derive(Clone, Copy, Debug)]
pub struct FilterDiagnostics {
    pub barrier: f64,
    pub lyapunov: f64,
    pub delta_u: DqVector,
    pub active_set: ActiveSet,
}

/// The assembled safety filter.
#[derive(Clone, Debug)]
pub struct SafetyFilter {
    pub certs: CertificateSet,
    pub params: FilterParams,
    pub model: SimplifiedModel,
}

impl SafetyFilter {
    pub fn new(certs: CertificateSet, params: FilterParams, model: SimplifiedModel) -> Self {
        Self { certs, params, model }
    }

    /// Builds one constraint row `a·u ≤ b` from a certificate gradient:
    /// `∇·(G·u + f) ≤ −γ·value`.
    fn row(&self, grad: &[f64; 4], drift: &[f64; 4], gamma: f64, value: f64) -> Halfplane {
        let g = self.model.input_gain();
        let a = DqVector::new(g * grad[0], g * grad[1]);
        let fdot: f64 = grad.iter().zip(drift.iter()).map(|(gk, fk)| gk * fk).sum();
        Halfplane {
            a,
            b: -gamma * value - fdot,
        }
    }

    /// Evaluates the certificates, assembles the QP rows and returns the
    /// commanded terminal voltage `v_c = u + v_PCC`.
    pub fn step(
        &self,
        x: &NonStationaryState,
        z: &StationaryState,
        omega: f64,
        v_pcc: DqVector,
        use_clf: bool,
    ) -> Result<(DqVector, FilterDiagnostics), QpError> {
        let (b, grad_b) = self.certs.barrier.eval_with_gradient(x, z);
        let (v, grad_v) = self.certs.lyapunov.eval_with_gradient(x, z);
        let drift = self.model.drift(x, omega);

        let cbf = self.row(&grad_b, &drift, self.params.gamma_b, b);
        let clf = use_clf.then(|| self.row(&grad_v, &drift, self.params.gamma_v, v));

        // Anti-parallel row normals make the joint problem (effectively)
        // infeasible: the feasible set is empty or a distant sliver. Safety
        // keeps priority there, so the convergence row is dropped. An
        // angular tolerance implements "anti-parallel" robustly.
        let mut dropped = None;
        let clf = clf.filter(|r| {
            let denom = cbf.a.amplitude() * r.a.amplitude();
            let conflicting = denom > 1e-12 && cbf.a.dot(r.a) < -0.95 * denom;
            if conflicting {
                dropped = Some(*r);
            }
            !conflicting
        });

        let u_n = nominal_control(x, z, &self.model.z_c, omega);
        let mut res = qp_solve(u_n, cbf, clf)?;
        // The certificates promise a jointly feasible input only inside the
        // modulation ball. If honoring the convergence row forces the
        // solution outside it, the same priority applies.
        if let Some(r) = clf {
            if matches!(res.active_set, ActiveSet::Clf | ActiveSet::Both)
                && !self.params.input_admissible(res.u)
            {
                res = qp_solve(u_n, cbf, None)?;
                dropped = Some(r);
            }
        }
        if dropped.is_some_and(|r| !r.satisfied(res.u, 1e-9)) {
            res.active_set = ActiveSet::CbfOnlyFallback;
        }
        let diag = FilterDiagnostics {
            barrier: b,
            lyapunov: v,
            delta_u: res.u - u_n,
            active_set: res.active_set,
        };
        Ok((res.u + v_pcc, diag))
    }
}

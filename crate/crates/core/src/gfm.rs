//! Grid-forming reference generation: synchronous-reference-frame PLL,
//! inverse frequency droop, the two GFM schemes (virtual synchronous machine
//! and PLL-anchored direct power control), reactive-power voltage droop, and
//! the voltage-reference limitation that caps the steady-state current.

use thiserror::Error;

use crate::frames::{active_power, reactive_power, DqVector, Impedance};
use crate::plant::NonStationaryState;

#[derive(Debug, Error)]
pub enum GfmError {
    #[error("singular coupling impedance: cannot invert Z_c")]
    SingularImpedance,
}

/// Controller gains and set points. Set points are fixed at nominal for the
/// scenarios in this crate; dispatch-level scheduling is out of scope.
#[derive(Clone, Copy, Debug)]
pub struct GfmParams {
    pub omega_n: f64,
    pub z_c: Impedance,
    pub d_f: f64,
    pub d_v: f64,
    pub k_p_pll: f64,
    pub t_i_pll: f64,
    pub k_p_edpc: f64,
    pub t_i_edpc: f64,
    pub tau_d: f64,
    pub tau_v: f64,
    pub k_d: f64,
    pub h: f64,
    pub i_th: f64,
    pub p_star: f64,
    pub omega_star: f64,
    pub q_star: f64,
    pub v_star: f64,
}

impl Default for GfmParams {
    fn default() -> Self {
        Self {
            omega_n: 2.0 * std::f64::consts::PI * 60.0,
            z_c: Impedance::new(0.02, 0.16),
            d_f: 0.02,
            d_v: 0.05,
            k_p_pll: 0.096,
            t_i_pll: 0.085,
            k_p_edpc: 0.45,
            t_i_edpc: 0.12,
            tau_d: 0.01,
            tau_v: 0.1,
            k_d: 50.0,
            h: 3.0,
            i_th: 1.18,
            p_star: 0.0,
            omega_star: 1.0,
            q_star: 0.0,
            v_star: 1.0,
        }
    }
}

// Integrator anti-windup bounds; fault rides otherwise wind up.
const PLL_INT_LIMIT: f64 = 0.2;
const EDPC_INT_LIMIT: f64 = std::f64::consts::PI;

/// Synchronous-reference-frame PLL with a first-order filter on the raw
/// frequency estimate.
#[derive(Clone, Copy, Debug)]
pub struct PllState {
    pub theta: f64,
    pub integrator: f64,
    pub omega_filtered: f64,
}

impl Default for PllState {
    fn default() -> Self {
        Self {
            theta: 0.0,
            integrator: 0.0,
            omega_filtered: 1.0,
        }
    }
}

/// One discrete PLL update. `v_pcc` is expressed in a frame whose absolute
/// electrical angle is `frame_angle`; the phase error is the angle of the
/// voltage in the PLL's own frame.
pub fn pll_step(s: &mut PllState, v_pcc: DqVector, frame_angle: f64, p: &GfmParams, dt: f64) {
    debug_assert!(dt > 0.0);
    let v_pll = v_pcc.rotate(frame_angle - s.theta);
    let e = if v_pll.amplitude() > 1e-9 {
        v_pll.q.atan2(v_pll.d)
    } else {
        0.0
    };
    s.integrator = (s.integrator + p.k_p_pll / p.t_i_pll * e * dt).clamp(-PLL_INT_LIMIT, PLL_INT_LIMIT);
    let omega_raw = 1.0 + p.k_p_pll * e + s.integrator;
    s.omega_filtered += dt / p.tau_d * (omega_raw - s.omega_filtered);
    s.theta += p.omega_n * omega_raw * dt;
}

/// Inverse frequency droop: `p_r = p★ − (ω_PLL − ω★)/D_f`.
pub fn inverse_frequency_droop(omega_pll: f64, p_star: f64, omega_star: f64, d_f: f64) -> f64 {
    assert!(d_f > 0.0);
    p_star - (omega_pll - omega_star) / d_f
}

/// Virtual synchronous machine: swing-equation emulation of the converter
/// frequency.
#[derive(Clone, Copy, Debug)]
pub struct VsmState {
    pub omega_c: f64,
    pub theta_c: f64,
}

impl Default for VsmState {
    fn default() -> Self {
        Self {
            omega_c: 1.0,
            theta_c: 0.0,
        }
    }
}

pub fn vsm_step(s: &mut VsmState, p_r: f64, p: f64, omega_pll: f64, g: &GfmParams, dt: f64) {
    debug_assert!(dt > 0.0 && g.h > 0.0);
    let domega = ((p_r - p) - g.k_d * (s.omega_c - omega_pll)) / (2.0 * g.h);
    s.omega_c += domega * dt;
    s.theta_c += g.omega_n * s.omega_c * dt;
}

/// Direct power control anchored on the PLL phase: the PI output shifts the
/// terminal-voltage phase relative to the PLL.
#[derive(Clone, Copy, Debug, Default)]
pub struct EdpcState {
    pub integrator: f64,
    pub theta_c: f64,
}

pub fn edpc_step(s: &mut EdpcState, theta_pll: f64, p_r: f64, p: f64, g: &GfmParams, dt: f64) {
    debug_assert!(dt > 0.0);
    let e = p_r - p;
    s.integrator =
        (s.integrator + g.k_p_edpc * e * dt / g.t_i_edpc).clamp(-EDPC_INT_LIMIT, EDPC_INT_LIMIT);
    let theta_r = g.k_p_edpc * e + s.integrator;
    s.theta_c = theta_pll + theta_r;
}

/// Reactive-power voltage droop: absorbing reactive power lowers the
/// amplitude command.
pub fn voltage_droop(q: f64, v_star: f64, q_star: f64, d_v: f64) -> f64 {
    assert!(d_v > 0.0);
    v_star + d_v * (q_star - q)
}

/// Clamps a raw current reference to `‖i_r‖ ≤ i_th`, prioritizing the
/// direct component.
pub fn limit_current_reference(i_r_raw: DqVector, i_th: f64) -> DqVector {
    assert!(i_th > 0.0);
    let d = i_r_raw.d.clamp(-i_th, i_th);
    let q_cap = (i_th * i_th - d * d).max(0.0).sqrt();
    let q = i_r_raw.q.clamp(-q_cap, q_cap);
    DqVector::new(d, q)
}

/// Voltage reference behind the coupling impedance:
/// `v_cn_lim = Z_c·i_r + v_PCC,f`.
pub fn limited_voltage_reference(
    i_r: DqVector,
    v_pcc_f: DqVector,
    z_c: &Impedance,
    omega: f64,
) -> DqVector {
    z_c.apply(omega, i_r) + v_pcc_f
}

/// Current reference implied by a voltage source behind the coupling
/// impedance: `i_r = Z_c⁻¹ (v_cn − v_PCC,f)`.
pub fn compute_reference_current(
    v_cn: DqVector,
    v_pcc_f: DqVector,
    z_c: &Impedance,
    omega: f64,
) -> Result<DqVector, GfmError> {
    z_c.solve(omega, v_cn - v_pcc_f)
        .ok_or(GfmError::SingularImpedance)
}

/// GFM reference bundle produced each control step.
#[derive(Clone, Copy, Debug)]
pub struct GfmReference {
    pub v_cn: DqVector,
    pub v_cn_lim: DqVector,
    pub i_r: DqVector,
}

/// Which GFM scheme drives the terminal-voltage phase.
#[derive(Clone, Copy, Debug)]
pub enum GfmScheme {
    Vsm(VsmState),
    Edpc(EdpcState),
}

impl GfmScheme {
    pub fn theta_c(&self) -> f64 {
        match self {
            GfmScheme::Vsm(s) => s.theta_c,
            GfmScheme::Edpc(s) => s.theta_c,
        }
    }
}

/// The assembled grid-forming controller: PLL, droops, phase scheme,
/// measurement filters and the voltage-reference limitation. All dq outputs
/// are expressed in the controller frame anchored at the scheme phase.
#[derive(Clone, Debug)]
pub struct GfmStack {
    pub params: GfmParams,
    pub pll: PllState,
    pub scheme: GfmScheme,
    pub q_filtered: f64,
    /// Filtered PCC voltage, kept in the controller frame.
    pub v_pcc_f: DqVector,
}

/// Per-step controller-frame outputs of the GFM stack.
#[derive(Clone, Copy, Debug)]
pub struct GfmOutput {
    pub reference: GfmReference,
    pub theta_c: f64,
    /// Converter current rotated into the controller frame.
    pub i_ctrl: DqVector,
    /// Instantaneous PCC voltage in the controller frame.
    pub v_pcc_ctrl: DqVector,
    /// Non-stationary state seen by the safety filter.
    pub x: NonStationaryState,
    pub omega_pll: f64,
    pub p: f64,
    pub q: f64,
}

impl GfmStack {
    pub fn new(params: GfmParams, use_vsm: bool) -> Self {
        let scheme = if use_vsm {
            GfmScheme::Vsm(VsmState::default())
        } else {
            GfmScheme::Edpc(EdpcState::default())
        };
        Self {
            params,
            pll: PllState::default(),
            scheme,
            q_filtered: 0.0,
            v_pcc_f: DqVector::new(1.0, 0.0),
        }
    }

    /// One control-rate update from global-frame measurements. `theta_g` is
    /// the absolute angle of the measurement frame.
    pub fn step(&mut self, v_pcc_g: DqVector, i_g: DqVector, theta_g: f64, dt: f64) -> GfmOutput {
        let p = &self.params;
        let p_meas = active_power(v_pcc_g, i_g);
        let q_meas = reactive_power(v_pcc_g, i_g);
        self.q_filtered += dt / p.tau_d * (q_meas - self.q_filtered);

        pll_step(&mut self.pll, v_pcc_g, theta_g, p, dt);
        let p_r = inverse_frequency_droop(self.pll.omega_filtered, p.p_star, p.omega_star, p.d_f);

        let params = *p;
        match &mut self.scheme {
            GfmScheme::Vsm(s) => vsm_step(s, p_r, p_meas, self.pll.omega_filtered, &params, dt),
            GfmScheme::Edpc(s) => edpc_step(s, self.pll.theta, p_r, p_meas, &params, dt),
        }
        let theta_c = self.scheme.theta_c();

        let v_hat = voltage_droop(self.q_filtered, params.v_star, params.q_star, params.d_v);
        let v_cn = DqVector::new(v_hat, 0.0);

        // controller frame anchored at theta_c
        let delta = theta_c - theta_g;
        let v_pcc_ctrl = v_pcc_g.rotate(-delta);
        let i_ctrl = i_g.rotate(-delta);
        self.v_pcc_f += (v_pcc_ctrl - self.v_pcc_f) * (dt / params.tau_v);

        let i_r_raw = compute_reference_current(v_cn, self.v_pcc_f, &params.z_c, 1.0)
            .expect("coupling impedance is non-singular");
        let i_r = limit_current_reference(i_r_raw, params.i_th);
        let v_cn_lim = limited_voltage_reference(i_r, self.v_pcc_f, &params.z_c, 1.0);

        GfmOutput {
            reference: GfmReference { v_cn, v_cn_lim, i_r },
            theta_c,
            i_ctrl,
            v_pcc_ctrl,
            x: NonStationaryState::new(i_ctrl, self.v_pcc_f - v_pcc_ctrl),
            omega_pll: self.pll.omega_filtered,
            p: p_meas,
            q: q_meas,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params() -> GfmParams {
        GfmParams::default()
    }

    #[test]
    fn pll_stays_locked() {
        let p = params();
        let mut s = PllState::default();
        let dt = 2e-4;
        let mut t = 0.0;
        for _ in 0..1000 {
            let frame = p.omega_n * t;
            pll_step(&mut s, DqVector::new(1.0, 0.0), frame, &p, dt);
            t += dt;
        }
        assert_abs_diff_eq!(s.omega_filtered, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.theta - p.omega_n * t, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn pll_tracks_phase_jump_with_zero_steady_error() {
        let p = params();
        let mut s = PllState::default();
        let dt = 2e-4;
        let mut t = 0.0;
        let v = DqVector::new(0.1f64.cos(), 0.1f64.sin());
        for _ in 0..20_000 {
            pll_step(&mut s, v, p.omega_n * t, &p, dt);
            t += dt;
        }
        let phase = s.theta - p.omega_n * t;
        assert_abs_diff_eq!(phase, 0.1, epsilon = 1e-6);
        assert_abs_diff_eq!(s.omega_filtered, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn pll_tracks_frequency_offset() {
        let p = params();
        let mut s = PllState::default();
        let dt = 2e-4;
        let mut t = 0.0;
        for _ in 0..30_000 {
            // grid phasor rotating at 1.01 p.u. against the nominal frame
            let grid_angle = 0.01 * p.omega_n * t;
            let v = DqVector::new(grid_angle.cos(), grid_angle.sin());
            pll_step(&mut s, v, p.omega_n * t, &p, dt);
            t += dt;
        }
        assert_abs_diff_eq!(s.omega_filtered, 1.01, epsilon = 1e-4);
    }

    #[test]
    fn droop_hand_values() {
        assert_eq!(inverse_frequency_droop(1.0, 0.0, 1.0, 0.02), 0.0);
        assert_abs_diff_eq!(inverse_frequency_droop(1.02, 0.0, 1.0, 0.02), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(inverse_frequency_droop(0.99, 0.0, 1.0, 0.02), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn vsm_derivative_hand_values() {
        let g = params();
        let dt = 1e-6;
        let mut s = VsmState::default();
        vsm_step(&mut s, 0.0, 0.0, 1.0, &g, dt);
        assert_abs_diff_eq!(s.omega_c, 1.0, epsilon = 1e-15);

        let mut s = VsmState::default();
        vsm_step(&mut s, 0.6, 0.0, 1.0, &g, dt);
        assert_abs_diff_eq!((s.omega_c - 1.0) / dt, 0.1, epsilon = 1e-9);

        let mut s = VsmState {
            omega_c: 1.01,
            theta_c: 0.0,
        };
        vsm_step(&mut s, 0.0, 0.0, 1.0, &g, dt);
        assert_abs_diff_eq!((s.omega_c - 1.01) / dt, -0.5 / 6.0, epsilon = 1e-6);
    }

    #[test]
    fn edpc_pi_response() {
        let g = params();
        let dt = 1e-4;
        let mut s = EdpcState::default();
        // zero error: phase equals the PLL phase
        edpc_step(&mut s, 0.7, 0.0, 0.0, &g, dt);
        assert_abs_diff_eq!(s.theta_c, 0.7, epsilon = 1e-15);

        // constant error: offset K_p e plus integral ramp K_p e / T_i
        let mut s = EdpcState::default();
        let steps = 10_000;
        for _ in 0..steps {
            edpc_step(&mut s, 0.0, 0.1, 0.0, &g, dt);
        }
        let t = steps as f64 * dt;
        let theta_r = s.theta_c;
        assert_abs_diff_eq!(theta_r, 0.45 * 0.1 + 0.375 * t, epsilon = 1e-9);

        // error removed: the integrated part holds
        let held = s.integrator;
        edpc_step(&mut s, 0.0, 0.0, 0.0, &g, dt);
        assert_abs_diff_eq!(s.theta_c, held, epsilon = 1e-15);
    }

    #[test]
    fn voltage_droop_hand_values() {
        assert_eq!(voltage_droop(0.0, 1.0, 0.0, 0.05), 1.0);
        assert_abs_diff_eq!(voltage_droop(0.2, 1.0, 0.0, 0.05), 0.99, epsilon = 1e-12);
        assert_abs_diff_eq!(voltage_droop(-0.2, 1.0, 0.0, 0.05), 1.01, epsilon = 1e-12);
    }

    #[test]
    fn current_limit_prioritizes_d_axis() {
        let i_th = 1.18;
        let inside = DqVector::new(0.8, 0.6);
        assert_eq!(limit_current_reference(inside, i_th), inside);

        let d_clamp = limit_current_reference(DqVector::new(1.5, 0.0), i_th);
        assert_abs_diff_eq!(d_clamp.d, 1.18, epsilon = 1e-15);
        assert_abs_diff_eq!(d_clamp.q, 0.0);

        let q_cut = limit_current_reference(DqVector::new(1.18, 0.5), i_th);
        assert_abs_diff_eq!(q_cut.d, 1.18, epsilon = 1e-15);
        assert_abs_diff_eq!(q_cut.q, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn reference_voltage_hand_values() {
        let z_c = Impedance::new(0.02, 0.16);
        let v = limited_voltage_reference(DqVector::ZERO, DqVector::new(0.7, -0.1), &z_c, 1.0);
        assert_eq!(v, DqVector::new(0.7, -0.1));

        let v2 = limited_voltage_reference(
            DqVector::new(0.9, 0.0),
            DqVector::new(1.0, 0.0),
            &z_c,
            1.0,
        );
        assert_abs_diff_eq!(v2.d, 1.018, epsilon = 1e-12);
        assert_abs_diff_eq!(v2.q, 0.144, epsilon = 1e-12);

        let v3 = limited_voltage_reference(
            DqVector::new(0.0, 1.0),
            DqVector::new(1.0, 0.0),
            &z_c,
            1.0,
        );
        assert_abs_diff_eq!(v3.d, 0.84, epsilon = 1e-12);
        assert_abs_diff_eq!(v3.q, 0.02, epsilon = 1e-12);
    }

    #[test]
    fn reference_current_hand_values() {
        let z_c = Impedance::new(0.02, 0.16);
        let same = compute_reference_current(
            DqVector::new(0.8, 0.1),
            DqVector::new(0.8, 0.1),
            &z_c,
            1.0,
        )
        .unwrap();
        assert_eq!(same, DqVector::ZERO);

        let i = compute_reference_current(
            DqVector::new(1.018, 0.144),
            DqVector::new(1.0, 0.0),
            &z_c,
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(i.d, 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(i.q, 0.0, epsilon = 1e-12);

        let z_l = Impedance::new(0.0, 0.16);
        let i2 = compute_reference_current(
            DqVector::new(1.0, 0.16),
            DqVector::new(1.0, 0.0),
            &z_l,
            1.0,
        )
        .unwrap();
        assert_abs_diff_eq!(i2.d, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(i2.q, 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn limited_reference_never_exceeds_threshold(
            d in -3.0..3.0f64, q in -3.0..3.0f64, i_th in 0.1..2.0f64
        ) {
            let out = limit_current_reference(DqVector::new(d, q), i_th);
            prop_assert!(out.amplitude() <= i_th + 1e-12);
        }

        #[test]
        fn reference_round_trip_when_unclamped(
            vd in 0.85..1.1f64, vq in -0.08..0.08f64, fd in 0.85..1.1f64, fq in -0.08..0.08f64
        ) {
            let z_c = Impedance::new(0.02, 0.16);
            let v_cn = DqVector::new(vd, vq);
            let v_f = DqVector::new(fd, fq);
            let i_r = compute_reference_current(v_cn, v_f, &z_c, 1.0).unwrap();
            prop_assume!(i_r.amplitude() <= 1.18);
            let back = limited_voltage_reference(
                limit_current_reference(i_r, 1.18), v_f, &z_c, 1.0);
            prop_assert!((back.d - v_cn.d).abs() < 1e-12);
            prop_assert!((back.q - v_cn.q).abs() < 1e-12);
        }
    }
}

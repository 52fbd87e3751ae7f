//! Averaged dq-frame network: converter behind the transformer impedance, a
//! damped series-RLC harmonic filter at the PCC, one of two grid models (a
//! synchronous machine behind its impedance, or an aggregated grid-following
//! converter), and a switchable shunt fault branch.
//!
//! Everything is simulated in a global reference frame rotating at nominal
//! speed. The PCC is a purely inductive node, so its voltage is solved
//! algebraically each sub-step from the requirement that the branch current
//! derivatives satisfy KCL.

use crate::frames::{DqVector, Impedance};
use crate::plant::model::rk4_step;

/// Physical parameters of the averaged network.
#[derive(Clone, Copy, Debug)]
pub struct PlantParams {
    pub omega_n: f64,
    /// Transformer impedance between converter terminal and PCC.
    pub z_c: Impedance,
    /// Grid filter: series damping resistance, inductance and capacitance of
    /// the shunt branch at the PCC.
    pub r_f: f64,
    pub l_f: f64,
    pub c_f: f64,
    /// Synchronous-machine branch (high-inertia grid).
    pub z_sm: Impedance,
    pub h_sm: f64,
    /// Aggregated GFL branch (low-inertia grid).
    pub z_gfl: Impedance,
    /// Shunt fault branch.
    pub z_fault: Impedance,
    /// PCC measurement filter time constant (controller side).
    pub tau_v: f64,
    /// GFL DC link: capacitance time constant and DC-voltage PI.
    pub tau_dc: f64,
    pub kp_dc: f64,
    pub ti_dc: f64,
    /// GFL internal PLL and inner current-controller PI gains.
    pub kp_pll: f64,
    pub ti_pll: f64,
    pub kp_cc: f64,
    pub ti_cc: f64,
    /// Duration of the linear current ramp that models breaker interruption
    /// when the fault clears.
    pub fault_clear_ramp: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            omega_n: 2.0 * std::f64::consts::PI * 60.0,
            z_c: Impedance::new(0.02, 0.16),
            r_f: 10.0,
            l_f: 0.2,
            c_f: 0.006,
            z_sm: Impedance::new(0.01, 0.16),
            h_sm: 3.0,
            z_gfl: Impedance::new(0.01, 0.16),
            z_fault: Impedance::new(0.001, 0.016),
            tau_v: 0.1,
            tau_dc: 0.05,
            kp_dc: 2.0,
            ti_dc: 0.05,
            kp_pll: 0.096,
            ti_pll: 0.085,
            kp_cc: 0.342,
            ti_cc: 0.002,
            fault_clear_ramp: 0.004,
        }
    }
}

/// Which grid model is attached at the PCC.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    HighInertia,
    LowInertia,
}

/// State of the shunt fault branch. While clearing, the branch current
/// follows a prescribed linear ramp to zero, which keeps the node KCL
/// consistent through the switching instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaultMode {
    Off,
    On,
    Clearing { ramp_rate: DqVector, t_end: f64 },
}

/// External plant inputs, held constant over each integration step.
#[derive(Clone, Copy, Debug)]
pub struct PlantInputs {
    /// Converter terminal voltage commanded by the controller (global frame).
    pub v_c: DqVector,
    /// Mechanical power of the synchronous machine.
    pub p_m: f64,
    /// Current injected into the GFL DC link by the attached source/load.
    pub i_r_gfl: f64,
}

/// Synchronous-machine source: fixed 1 p.u. EMF amplitude, phase driven by
/// the swing equation.
#[derive(Clone, Copy, Debug, Default)]
pub struct SmGridState {
    pub omega_sm: f64,
    pub theta_sm: f64,
    pub p_m: f64,
}

/// Swing-equation derivative: `dω/dt = (p_m − p_sm)/(2H)`, `dθ/dt = ω_n·ω`.
pub fn sm_grid_derivative(g: &SmGridState, p_sm: f64, h: f64, omega_n: f64) -> (f64, f64) {
    assert!(h > 0.0, "inertia constant must be positive");
    ((g.p_m - p_sm) / (2.0 * h), omega_n * g.omega_sm)
}

/// Aggregated grid-following converter: DC-link voltage loop feeding an
/// inner current controller, synchronized by its own PLL.
#[derive(Clone, Copy, Debug)]
pub struct GflGridState {
    pub v_dc: f64,
    pub dc_int: f64,
    pub pll_theta: f64,
    pub pll_int: f64,
    pub cc_int: DqVector,
    pub i_gfl: DqVector,
    pub i_r_gfl: f64,
    /// Fast-filtered PCC voltage fed forward by the current controller.
    pub v_ff: DqVector,
}

const GFL_SUB_N: usize = 10;

impl GflGridState {
    pub fn new(i_r_gfl: f64) -> Self {
        Self {
            v_dc: 1.0,
            dc_int: 0.0,
            pll_theta: 0.0,
            pll_int: 0.0,
            cc_int: DqVector::ZERO,
            i_gfl: DqVector::ZERO,
            i_r_gfl,
            v_ff: DqVector::new(1.0, 0.0),
        }
    }

    fn to_sub(self) -> [f64; GFL_SUB_N] {
        [
            self.i_gfl.d,
            self.i_gfl.q,
            self.v_dc,
            self.dc_int,
            self.pll_theta,
            self.pll_int,
            self.cc_int.d,
            self.cc_int.q,
            self.v_ff.d,
            self.v_ff.q,
        ]
    }

    fn from_sub(s: &[f64; GFL_SUB_N], i_r_gfl: f64) -> Self {
        Self {
            i_gfl: DqVector::new(s[0], s[1]),
            v_dc: s[2],
            dc_int: s[3],
            pll_theta: s[4],
            pll_int: s[5],
            cc_int: DqVector::new(s[6], s[7]),
            i_r_gfl,
            v_ff: DqVector::new(s[8], s[9]),
        }
    }
}

const GFL_SAT: f64 = 1.5;
const GFL_FF_TAU: f64 = 1e-3;

const GFL_I_LIMIT: f64 = 1.2;
const GFL_AW_GAIN: f64 = 20.0;

/// Absorbed-current reference from the DC-voltage PI with deep-sag current
/// blocking: below ~0.25 p.u. PCC voltage the active-current command ramps
/// to zero. Returns the injected-current reference in the GFL's PLL frame
/// (absorbing means negative injected d-axis current) and the
/// back-calculation term that unwinds the integrator while blocked.
fn gfl_current_reference(sub: &[f64; GFL_SUB_N], p: &PlantParams) -> (DqVector, f64) {
    let raw = p.kp_dc * (1.0 - sub[2]) + sub[3];
    let v_amp = sub[8].hypot(sub[9]);
    let gate = ((v_amp - 0.25) / 0.15).clamp(0.0, 1.0);
    let served = gate * raw.clamp(-GFL_I_LIMIT, GFL_I_LIMIT);
    (DqVector::new(-served, 0.0), GFL_AW_GAIN * (served - raw))
}

/// GFL terminal voltage: filtered PCC feed-forward plus PI current control
/// in the GFL's PLL frame, saturated in amplitude.
fn gfl_terminal_voltage(sub: &[f64; GFL_SUB_N], theta_g: f64, p: &PlantParams) -> DqVector {
    let delta = sub[4] - theta_g;
    let i_gfl_pll = DqVector::new(sub[0], sub[1]).rotate(-delta);
    let (i_ref, _) = gfl_current_reference(sub, p);
    let e_i = i_ref - i_gfl_pll;
    let v_pi = (p.kp_cc * e_i + DqVector::new(sub[6], sub[7])).rotate(delta);
    let mut v = DqVector::new(sub[8], sub[9]) + v_pi;
    let amp = v.amplitude();
    if amp > GFL_SAT {
        v = v * (GFL_SAT / amp);
    }
    v
}

/// Derivative of the GFL subsystem with the PCC voltage and terminal voltage
/// given. Layout: [i_gfl.d, i_gfl.q, v_dc, dc_int, pll_theta, pll_int,
/// cc_int.d, cc_int.q, v_ff.d, v_ff.q].
fn gfl_subsystem_derivative(
    sub: &[f64; GFL_SUB_N],
    v_pcc: DqVector,
    v_gfl: DqVector,
    theta_g: f64,
    i_r_gfl: f64,
    p: &PlantParams,
) -> [f64; GFL_SUB_N] {
    let i_gfl = DqVector::new(sub[0], sub[1]);
    let delta = sub[4] - theta_g;

    let di = (v_gfl - v_pcc - p.z_gfl.apply(1.0, i_gfl)) * (p.omega_n / p.z_gfl.l);

    // PLL on the PCC voltage in the GFL frame.
    let v_pll = v_pcc.rotate(-delta);
    let e_pll = if v_pll.amplitude() > 1e-6 {
        v_pll.q.atan2(v_pll.d)
    } else {
        0.0
    };
    let omega_raw = 1.0 + p.kp_pll * e_pll + sub[5];
    let dtheta = p.omega_n * omega_raw;
    let dpll_int = p.kp_pll / p.ti_pll * e_pll;

    // DC link energy balance; the attached source injects i_r_gfl.
    let p_abs = -v_gfl.dot(i_gfl);
    let v_dc = sub[2].max(0.1);
    let dv_dc = (p_abs + sub[2] * i_r_gfl) / (p.tau_dc * v_dc);
    let (i_ref, anti_windup) = gfl_current_reference(sub, p);
    let ddc_int = p.kp_dc / p.ti_dc * (1.0 - sub[2]) + anti_windup;

    // Inner current-controller integrator in the PLL frame.
    let i_gfl_pll = i_gfl.rotate(-delta);
    let e_i = i_ref - i_gfl_pll;
    let dcc = e_i * (p.kp_cc / p.ti_cc);

    let dv_ff = (v_pcc - DqVector::new(sub[8], sub[9])) * (1.0 / GFL_FF_TAU);

    [
        di.d, di.q, dv_dc, ddc_int, dtheta, dpll_int, dcc.d, dcc.q, dv_ff.d, dv_ff.q,
    ]
}

/// Advances the GFL subsystem one step against a held PCC voltage and
/// returns the updated state together with the injected current.
pub fn gfl_grid_step(
    g: &GflGridState,
    v_pcc: DqVector,
    t: f64,
    p: &PlantParams,
    dt: f64,
) -> (GflGridState, DqVector) {
    assert!(dt > 0.0);
    let sub = g.to_sub();
    let i_r_gfl = g.i_r_gfl;
    let next = rk4_step(&sub, t, dt, |tt, s| {
        let theta_g = p.omega_n * tt;
        let v_gfl = gfl_terminal_voltage(s, theta_g, p);
        gfl_subsystem_derivative(s, v_pcc, v_gfl, theta_g, i_r_gfl, p)
    });
    let out = GflGridState::from_sub(&next, i_r_gfl);
    let injected = out.i_gfl;
    (out, injected)
}

// State layouts for the two full plants.
//
// High inertia (12): i_c(2) i_f(2) v_cf(2) i_sm(2) omega_sm theta_sm i_l(2)
// Low inertia  (16): i_c(2) i_f(2) v_cf(2) gfl-sub(8) i_l(2)
const SM_N: usize = 12;
const GFL_N: usize = 18;

#[derive(Clone, Debug)]
enum StateVec {
    Sm([f64; SM_N]),
    Gfl([f64; GFL_N]),
}

/// The full averaged plant for one scenario.
#[derive(Clone, Debug)]
pub struct Plant {
    pub params: PlantParams,
    pub fault: FaultMode,
    state: StateVec,
}

struct FaultView {
    mode: FaultMode,
    i_l: DqVector,
}

/// Algebraic PCC node voltage from KCL over the connected branch current
/// derivatives. `grid` carries the grid-source EMF, current and inductance.
#[allow(clippy::too_many_arguments)]
fn solve_pcc(
    p: &PlantParams,
    v_c: DqVector,
    i_c: DqVector,
    v_g: DqVector,
    i_g: DqVector,
    z_g: Impedance,
    i_f: DqVector,
    v_cf: DqVector,
    fault: &FaultView,
) -> DqVector {
    let z_filter = Impedance::new(p.r_f, p.l_f);
    let mut num = (v_c - p.z_c.apply(1.0, i_c)) * (1.0 / p.z_c.l)
        + (v_g - z_g.apply(1.0, i_g)) * (1.0 / z_g.l)
        + (v_cf + z_filter.apply(1.0, i_f)) * (1.0 / p.l_f);
    let mut den = 1.0 / p.z_c.l + 1.0 / z_g.l + 1.0 / p.l_f;
    match fault.mode {
        FaultMode::Off => {}
        FaultMode::On => {
            num += p.z_fault.apply(1.0, fault.i_l) * (1.0 / p.z_fault.l);
            den += 1.0 / p.z_fault.l;
        }
        FaultMode::Clearing { ramp_rate, .. } => {
            num = num - ramp_rate * (1.0 / p.omega_n);
        }
    }
    num * (1.0 / den)
}

impl Plant {
    pub fn new(kind: GridKind, params: PlantParams, i_r_gfl: f64) -> Self {
        let state = match kind {
            GridKind::HighInertia => {
                let mut s = [0.0; SM_N];
                s[8] = 1.0; // omega_sm
                StateVec::Sm(s)
            }
            GridKind::LowInertia => {
                let mut s = [0.0; GFL_N];
                let sub = GflGridState::new(i_r_gfl).to_sub();
                s[6..16].copy_from_slice(&sub);
                StateVec::Gfl(s)
            }
        };
        Self {
            params,
            fault: FaultMode::Off,
            state,
        }
    }

    pub fn converter_current(&self) -> DqVector {
        match &self.state {
            StateVec::Sm(s) => DqVector::new(s[0], s[1]),
            StateVec::Gfl(s) => DqVector::new(s[0], s[1]),
        }
    }

    pub fn fault_current(&self) -> DqVector {
        match &self.state {
            StateVec::Sm(s) => DqVector::new(s[10], s[11]),
            StateVec::Gfl(s) => DqVector::new(s[16], s[17]),
        }
    }

    pub fn sm_state(&self, inputs: &PlantInputs) -> Option<SmGridState> {
        match &self.state {
            StateVec::Sm(s) => Some(SmGridState {
                omega_sm: s[8],
                theta_sm: s[9],
                p_m: inputs.p_m,
            }),
            StateVec::Gfl(_) => None,
        }
    }

    pub fn gfl_state(&self, inputs: &PlantInputs) -> Option<GflGridState> {
        match &self.state {
            StateVec::Sm(_) => None,
            StateVec::Gfl(s) => {
                let mut sub = [0.0; GFL_SUB_N];
                sub.copy_from_slice(&s[6..16]);
                Some(GflGridState::from_sub(&sub, inputs.i_r_gfl))
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match &self.state {
            StateVec::Sm(s) => s.iter().all(|v| v.is_finite()),
            StateVec::Gfl(s) => s.iter().all(|v| v.is_finite()),
        }
    }

    /// Net current into the PCC node. The differentiated-KCL node solve
    /// keeps this at zero (up to floating-point drift) through fault
    /// switching; it is the structural invariant of the network model.
    pub fn kcl_residual(&self) -> f64 {
        let (i_c, i_f, i_g, i_l) = match &self.state {
            StateVec::Sm(s) => (
                DqVector::new(s[0], s[1]),
                DqVector::new(s[2], s[3]),
                DqVector::new(s[6], s[7]),
                DqVector::new(s[10], s[11]),
            ),
            StateVec::Gfl(s) => (
                DqVector::new(s[0], s[1]),
                DqVector::new(s[2], s[3]),
                DqVector::new(s[6], s[7]),
                DqVector::new(s[16], s[17]),
            ),
        };
        (i_c + i_g - i_f - i_l).amplitude()
    }

    /// Largest state magnitude, ignoring the unbounded source angles.
    /// Used to detect divergence while the state is still finite.
    pub fn max_abs(&self) -> f64 {
        let fold = |vals: &[f64]| vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match &self.state {
            // exclude theta_sm (index 9)
            StateVec::Sm(s) => fold(&s[..9]).max(fold(&s[10..])),
            // exclude pll_theta (index 10)
            StateVec::Gfl(s) => fold(&s[..10]).max(fold(&s[11..])),
        }
    }

    /// Switches the fault branch into the node solve. The branch current
    /// starts from its current state (zero on first activation).
    pub fn fault_on(&mut self) {
        self.fault = FaultMode::On;
    }

    /// Starts the breaker-interruption ramp: the fault current is driven
    /// linearly to zero over `fault_clear_ramp` seconds.
    pub fn fault_begin_clearing(&mut self, t: f64) {
        let i_l = self.fault_current();
        let tau = self.params.fault_clear_ramp;
        self.fault = FaultMode::Clearing {
            ramp_rate: i_l * (-1.0 / tau),
            t_end: t + tau,
        };
    }

    /// Removes the fault branch after the ramp; the residual current is
    /// zeroed exactly.
    pub fn fault_finish_clearing(&mut self) {
        match &mut self.state {
            StateVec::Sm(s) => {
                s[10] = 0.0;
                s[11] = 0.0;
            }
            StateVec::Gfl(s) => {
                s[16] = 0.0;
                s[17] = 0.0;
            }
        }
        self.fault = FaultMode::Off;
    }

    /// PCC node voltage for the current state (used for controller sampling
    /// and inside every integration stage).
    pub fn pcc_voltage(&self, t: f64, inputs: &PlantInputs) -> DqVector {
        match &self.state {
            StateVec::Sm(s) => Self::sm_pcc(&self.params, &self.fault, s, t, inputs),
            StateVec::Gfl(s) => Self::gfl_pcc(&self.params, &self.fault, s, t, inputs),
        }
    }

    fn sm_pcc(
        p: &PlantParams,
        fault: &FaultMode,
        s: &[f64; SM_N],
        t: f64,
        inputs: &PlantInputs,
    ) -> DqVector {
        let theta_g = p.omega_n * t;
        let e_sm = DqVector::new((s[9] - theta_g).cos(), (s[9] - theta_g).sin());
        solve_pcc(
            p,
            inputs.v_c,
            DqVector::new(s[0], s[1]),
            e_sm,
            DqVector::new(s[6], s[7]),
            p.z_sm,
            DqVector::new(s[2], s[3]),
            DqVector::new(s[4], s[5]),
            &FaultView {
                mode: *fault,
                i_l: DqVector::new(s[10], s[11]),
            },
        )
    }

    fn gfl_pcc(
        p: &PlantParams,
        fault: &FaultMode,
        s: &[f64; GFL_N],
        t: f64,
        inputs: &PlantInputs,
    ) -> DqVector {
        let theta_g = p.omega_n * t;
        let mut sub = [0.0; GFL_SUB_N];
        sub.copy_from_slice(&s[6..16]);
        let v_gfl = gfl_terminal_voltage(&sub, theta_g, p);
        solve_pcc(
            p,
            inputs.v_c,
            DqVector::new(s[0], s[1]),
            v_gfl,
            DqVector::new(s[6], s[7]),
            p.z_gfl,
            DqVector::new(s[2], s[3]),
            DqVector::new(s[4], s[5]),
            &FaultView {
                mode: *fault,
                i_l: DqVector::new(s[16], s[17]),
            },
        )
    }

    /// Shared branch derivatives around the PCC node. Returns the derivative
    /// slots for i_c, i_f, v_cf and the fault branch.
    #[allow(clippy::too_many_arguments)]
    fn node_branch_derivatives(
        p: &PlantParams,
        fault: &FaultMode,
        v_pcc: DqVector,
        v_c: DqVector,
        i_c: DqVector,
        i_f: DqVector,
        v_cf: DqVector,
        i_l: DqVector,
    ) -> ([f64; 2], [f64; 2], [f64; 2], [f64; 2]) {
        let di_c = (v_c - v_pcc - p.z_c.apply(1.0, i_c)) * (p.omega_n / p.z_c.l);
        let z_filter = Impedance::new(p.r_f, p.l_f);
        let di_f = (v_pcc - v_cf - z_filter.apply(1.0, i_f)) * (p.omega_n / p.l_f);
        let dv_cf = DqVector::new(
            p.omega_n / p.c_f * i_f.d + p.omega_n * v_cf.q,
            p.omega_n / p.c_f * i_f.q - p.omega_n * v_cf.d,
        );
        let di_l = match fault {
            FaultMode::Off => DqVector::ZERO,
            FaultMode::On => (v_pcc - p.z_fault.apply(1.0, i_l)) * (p.omega_n / p.z_fault.l),
            FaultMode::Clearing { ramp_rate, .. } => *ramp_rate,
        };
        (
            [di_c.d, di_c.q],
            [di_f.d, di_f.q],
            [dv_cf.d, dv_cf.q],
            [di_l.d, di_l.q],
        )
    }

    fn sm_derivative(
        p: &PlantParams,
        fault: &FaultMode,
        t: f64,
        s: &[f64; SM_N],
        inputs: &PlantInputs,
    ) -> [f64; SM_N] {
        let theta_g = p.omega_n * t;
        let e_sm = DqVector::new((s[9] - theta_g).cos(), (s[9] - theta_g).sin());
        let i_sm = DqVector::new(s[6], s[7]);
        let v_pcc = Self::sm_pcc(p, fault, s, t, inputs);

        let (di_c, di_f, dv_cf, di_l) = Self::node_branch_derivatives(
            p,
            fault,
            v_pcc,
            inputs.v_c,
            DqVector::new(s[0], s[1]),
            DqVector::new(s[2], s[3]),
            DqVector::new(s[4], s[5]),
            DqVector::new(s[10], s[11]),
        );

        let di_sm = (e_sm - v_pcc - p.z_sm.apply(1.0, i_sm)) * (p.omega_n / p.z_sm.l);
        let p_sm = e_sm.dot(i_sm);
        let g = SmGridState {
            omega_sm: s[8],
            theta_sm: s[9],
            p_m: inputs.p_m,
        };
        let (domega, dtheta) = sm_grid_derivative(&g, p_sm, p.h_sm, p.omega_n);

        [
            di_c[0], di_c[1], di_f[0], di_f[1], dv_cf[0], dv_cf[1], di_sm.d, di_sm.q, domega,
            dtheta, di_l[0], di_l[1],
        ]
    }

    fn gfl_derivative(
        p: &PlantParams,
        fault: &FaultMode,
        t: f64,
        s: &[f64; GFL_N],
        inputs: &PlantInputs,
    ) -> [f64; GFL_N] {
        let theta_g = p.omega_n * t;
        let mut sub = [0.0; GFL_SUB_N];
        sub.copy_from_slice(&s[6..16]);
        let v_gfl = gfl_terminal_voltage(&sub, theta_g, p);
        let v_pcc = Self::gfl_pcc(p, fault, s, t, inputs);

        let (di_c, di_f, dv_cf, di_l) = Self::node_branch_derivatives(
            p,
            fault,
            v_pcc,
            inputs.v_c,
            DqVector::new(s[0], s[1]),
            DqVector::new(s[2], s[3]),
            DqVector::new(s[4], s[5]),
            DqVector::new(s[16], s[17]),
        );

        let dsub = gfl_subsystem_derivative(&sub, v_pcc, v_gfl, theta_g, inputs.i_r_gfl, p);

        let mut out = [0.0; GFL_N];
        out[0] = di_c[0];
        out[1] = di_c[1];
        out[2] = di_f[0];
        out[3] = di_f[1];
        out[4] = dv_cf[0];
        out[5] = dv_cf[1];
        out[6..16].copy_from_slice(&dsub);
        out[16] = di_l[0];
        out[17] = di_l[1];
        out
    }

    /// Integrates one plant step with the inputs held (zero-order hold).
    pub fn step(&mut self, t: f64, dt: f64, inputs: &PlantInputs) {
        let params = self.params;
        let fault = self.fault;
        match &mut self.state {
            StateVec::Sm(s) => {
                *s = rk4_step(s, t, dt, |tt, x| {
                    Self::sm_derivative(&params, &fault, tt, x, inputs)
                });
            }
            StateVec::Gfl(s) => {
                *s = rk4_step(s, t, dt, |tt, x| {
                    Self::gfl_derivative(&params, &fault, tt, x, inputs)
                });
            }
        }
    }
}

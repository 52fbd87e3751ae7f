//! Scenario orchestration: the plant/controller loop with settling,
//! fault-event handling and trace recording.

use thiserror::Error;

use crate::clc::{avi_step, rlcc_step, scc_step, ClcParams, SccState};
use crate::frames::DqVector;
use crate::gfm::{GfmOutput, GfmStack};
use crate::plant::{FaultMode, GridKind, Plant, PlantInputs, StationaryState};
use crate::sfilter::{ActiveSet, CertificateSet, QpError, SafetyFilter};

use super::config::{ClcKind, GfmKind, ScenarioConfig};
use super::trace::{compute_metrics, Metrics, SimTrace, TraceRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("numeric blow-up at t = {t:.6} s (last finite sample at t = {last_t:.6} s)")]
    Blowup {
        t: f64,
        last_t: f64,
        last: Option<Box<TraceRecord>>,
    },
    #[error("scenario config: {0}")]
    Config(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Inputs ramp in over this window at the start of settling to avoid
/// artificial cold-start inrush.
const INPUT_RAMP: f64 = 0.2;

/// Governor-style ramp for restoring the machine's mechanical power after
/// the fault clears; an instantaneous step would re-excite the swing.
const P_M_RESTORE_RAMP: f64 = 0.6;

/// Any state magnitude beyond this is treated as numeric divergence.
const BLOWUP_BOUND: f64 = 1e6;

struct Controller {
    gfm: GfmStack,
    clc: ClcKind,
    clc_params: ClcParams,
    scc: SccState,
    filter: SafetyFilter,
    i_0: f64,
    /// Maximum terminal-voltage amplitude the converter can modulate.
    v_c_cap: f64,
}

struct ControlStep {
    v_c_global: DqVector,
    record: TraceRecord,
}

impl Controller {
    fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            gfm: GfmStack::new(cfg.gfm_params(), cfg.gfm == GfmKind::Vsm),
            clc: cfg.clc,
            clc_params: cfg.clc_params(),
            scc: SccState::default(),
            filter: SafetyFilter::new(
                CertificateSet::builtin(),
                cfg.filter_params(),
                cfg.certificate_model(),
            ),
            i_0: cfg.i_0,
            v_c_cap: cfg.m_max.sqrt(),
        }
    }

    fn step(
        &mut self,
        t: f64,
        v_pcc_g: DqVector,
        i_g: DqVector,
        theta_g: f64,
        dt: f64,
    ) -> Result<ControlStep, QpError> {
        let out: GfmOutput = self.gfm.step(v_pcc_g, i_g, theta_g, dt);
        let z = StationaryState::new(out.reference.i_r, self.i_0);
        let v_ref = out.reference.v_cn_lim;
        let z_c = self.filter.model.z_c;

        let (v_c_ctrl, active, barrier, lyapunov) = match self.clc {
            ClcKind::None => {
                let (b, v) = self.eval_certs(&out, &z);
                (v_ref, false, b, v)
            }
            ClcKind::Scc => {
                let v_c = scc_step(
                    &mut self.scc,
                    v_ref,
                    out.i_ctrl,
                    out.reference.i_r,
                    self.gfm.v_pcc_f,
                    &z_c,
                    1.0,
                    &self.clc_params,
                    dt,
                );
                let (b, v) = self.eval_certs(&out, &z);
                (v_c, self.scc.active, b, v)
            }
            ClcKind::Rlcc => {
                let v_c = rlcc_step(
                    v_ref,
                    out.i_ctrl,
                    self.gfm.v_pcc_f,
                    &z_c,
                    1.0,
                    self.clc_params.k_p_cc,
                    self.clc_params.i_th,
                );
                let (b, v) = self.eval_certs(&out, &z);
                (v_c, v_c != v_ref, b, v)
            }
            ClcKind::Avi => {
                let (v_c, avi) = avi_step(
                    v_ref,
                    out.i_ctrl,
                    self.clc_params.k_x,
                    self.clc_params.eta_xr,
                    self.clc_params.i_th,
                    1.0,
                );
                let (b, v) = self.eval_certs(&out, &z);
                (v_c, avi.x_v > 0.0, b, v)
            }
            ClcKind::Sf | ClcKind::SfNoClf => {
                let use_clf = self.clc == ClcKind::Sf;
                let (v_c, diag) = self
                    .filter
                    .step(&out.x, &z, 1.0, out.v_pcc_ctrl, use_clf)?;
                (v_c, diag.active_set != ActiveSet::None, diag.barrier, diag.lyapunov)
            }
        };

        // converter modulation capability: the averaged plant cannot apply
        // more voltage than the modulation limit allows
        let v_c_ctrl = {
            let cap = self.v_c_cap;
            let amp = v_c_ctrl.amplitude();
            if amp > cap {
                v_c_ctrl * (cap / amp)
            } else {
                v_c_ctrl
            }
        };

        let dv = v_c_ctrl - v_ref;
        let record = TraceRecord {
            t,
            i_d: out.i_ctrl.d,
            i_q: out.i_ctrl.q,
            i_norm: out.i_ctrl.amplitude(),
            i_phase_max: out.i_ctrl.amplitude() + self.i_0.abs(),
            v_cd: v_c_ctrl.d,
            v_cq: v_c_ctrl.q,
            dv_d: dv.d,
            dv_q: dv.q,
            omega_pll: out.omega_pll,
            p: out.p,
            q: out.q,
            barrier,
            lyapunov,
            active,
        };
        Ok(ControlStep {
            v_c_global: v_c_ctrl.rotate(out.theta_c - theta_g),
            record,
        })
    }

    fn eval_certs(&self, out: &GfmOutput, z: &StationaryState) -> (f64, f64) {
        (
            self.filter.certs.barrier.eval(&out.x, z),
            self.filter.certs.lyapunov.eval(&out.x, z),
        )
    }
}

/// Runs one scenario: settling, the recorded horizon with the configured
/// fault window, and metric extraction. Deterministic for a fixed config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(SimTrace, Metrics), SimError> {
    cfg.validate().map_err(|e| SimError::Config(e.to_string()))?;

    let dt = cfg.dt_plant;
    let omega_n = cfg.omega_n();
    let ctrl_every = (cfg.dt_ctrl / dt).round() as usize;
    let settle_steps = (cfg.settle / dt).round() as i64;
    let main_steps = (cfg.t_end / dt).round() as i64;
    let k_on = (cfg.t_fault_on / dt).round() as i64;
    let k_off = (cfg.t_fault_off / dt).round() as i64;
    let ramp_clear_steps = (cfg.fault_clear_ramp / dt).round().max(1.0) as i64;

    let mut plant = Plant::new(cfg.grid, cfg.plant_params(), cfg.i_r_gfl);
    let mut ctrl = Controller::new(cfg);
    let mut inputs = PlantInputs {
        v_c: DqVector::new(1.0, 0.0),
        p_m: 0.0,
        i_r_gfl: 0.0,
    };
    let mut trace = SimTrace {
        records: Vec::with_capacity((main_steps as usize / ctrl_every) + 1),
        dt: cfg.dt_ctrl,
    };
    let mut last_finite: Option<TraceRecord> = None;

    // settling phase: inputs ramp in, no fault, nothing recorded
    for k in 0..settle_steps {
        let t = (k - settle_steps) as f64 * dt;
        let ramp = if cfg.settle > 0.0 {
            ((k + 1) as f64 * dt / INPUT_RAMP.min(cfg.settle)).min(1.0)
        } else {
            1.0
        };
        inputs.p_m = cfg.p_m * ramp;
        inputs.i_r_gfl = cfg.i_r_gfl * ramp;
        if (k as usize).is_multiple_of(ctrl_every) {
            let v_pcc = plant.pcc_voltage(t, &inputs);
            if !plant.is_finite() || !v_pcc.is_finite() {
                return Err(SimError::Blowup {
                    t,
                    last_t: t - cfg.dt_ctrl,
                    last: last_finite.map(Box::new),
                });
            }
            let step = ctrl.step(t, v_pcc, plant.converter_current(), omega_n * t, cfg.dt_ctrl)?;
            inputs.v_c = step.v_c_global;
        }
        plant.step(t, dt, &inputs);
        // negated form catches NaN as well as overflow
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(plant.max_abs() < BLOWUP_BOUND) {
            return Err(SimError::Blowup {
                t,
                last_t: t,
                last: None,
            });
        }
    }

    // recorded horizon
    let mut fault_was_on = false;
    for k in 0..main_steps {
        let t = k as f64 * dt;
        if cfg.fault_enabled {
            if k == k_on {
                plant.fault_on();
                fault_was_on = true;
                // grid-side fault response
                match cfg.grid {
                    GridKind::HighInertia => inputs.p_m = 0.0,
                    GridKind::LowInertia => inputs.i_r_gfl = 0.0,
                }
            }
            if k == k_off && fault_was_on {
                plant.fault_begin_clearing(t);
            }
            if k == k_off + ramp_clear_steps && matches!(plant.fault, FaultMode::Clearing { .. }) {
                plant.fault_finish_clearing();
            }
            if fault_was_on && cfg.grid == GridKind::HighInertia && k >= k_off {
                let ramp = ((t - cfg.t_fault_off) / P_M_RESTORE_RAMP).clamp(0.0, 1.0);
                inputs.p_m = cfg.p_m * ramp;
            }
        }
        if (k as usize).is_multiple_of(ctrl_every) {
            let v_pcc = plant.pcc_voltage(t, &inputs);
            if !plant.is_finite() || !v_pcc.is_finite() {
                return Err(SimError::Blowup {
                    t,
                    last_t: last_finite.map_or(f64::NEG_INFINITY, |r| r.t),
                    last: last_finite.map(Box::new),
                });
            }
            let step = ctrl.step(t, v_pcc, plant.converter_current(), omega_n * t, cfg.dt_ctrl)?;
            inputs.v_c = step.v_c_global;
            if step.record.is_finite() {
                last_finite = Some(step.record);
            }
            trace.records.push(step.record);
        }
        plant.step(t, dt, &inputs);
        // negated form catches NaN as well as overflow
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(plant.max_abs() < BLOWUP_BOUND) {
            return Err(SimError::Blowup {
                t,
                last_t: last_finite.map_or(f64::NEG_INFINITY, |r| r.t),
                last: last_finite.map(Box::new),
            });
        }
    }

    if !plant.is_finite() {
        return Err(SimError::Blowup {
            t: cfg.t_end,
            last_t: last_finite.map_or(f64::NEG_INFINITY, |r| r.t),
            last: last_finite.map(Box::new),
        });
    }

    let t_off = (cfg.fault_enabled && fault_was_on).then_some(cfg.t_fault_off);
    let metrics = compute_metrics(&trace, cfg.i_max, t_off);
    Ok((trace, metrics))
}

/// Paired safety-filter runs with and without the convergence row, on an
/// otherwise identical scenario.
#[derive(Debug)]
pub struct ClfComparison {
    pub with_clf: (SimTrace, Metrics),
    pub without_clf: (SimTrace, Metrics),
}

pub fn compare_clf(cfg: &ScenarioConfig) -> Result<ClfComparison, SimError> {
    if cfg.clc != ClcKind::Sf {
        return Err(SimError::Config(
            "compare-clf requires clc = sf in the base configuration".into(),
        ));
    }
    let with_clf = run_scenario(cfg)?;
    let mut cfg_no = *cfg;
    cfg_no.clc = ClcKind::SfNoClf;
    let without_clf = run_scenario(&cfg_no)?;
    Ok(ClfComparison {
        with_clf,
        without_clf,
    })
}

//! Declarative scenario configuration: flat `key = value` text with dotted
//! keys, applied on top of the built-in defaults.

use std::path::Path;

use thiserror::Error;

use crate::clc::ClcParams;
use crate::frames::Impedance;
use crate::gfm::GfmParams;
use crate::plant::{GridKind, PlantParams, SimplifiedModel};
use crate::sfilter::FilterParams;
use crate::verifier::OperationalRegion;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("invalid {field}: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GfmKind {
    Vsm,
    Edpc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClcKind {
    None,
    Scc,
    Rlcc,
    Avi,
    Sf,
    SfNoClf,
}

impl ClcKind {
    pub fn label(&self) -> &'static str {
        match self {
            ClcKind::None => "none",
            ClcKind::Scc => "scc",
            ClcKind::Rlcc => "rlcc",
            ClcKind::Avi => "avi",
            ClcKind::Sf => "sf",
            ClcKind::SfNoClf => "sf_noclf",
        }
    }
}

/// A complete experiment description. Defaults reproduce the reference
/// parameter set; any field can be overridden from the config file.
#[derive(Clone, Copy, Debug)]
pub struct ScenarioConfig {
    pub grid: GridKind,
    pub gfm: GfmKind,
    pub clc: ClcKind,
    pub t_end: f64,
    pub t_fault_on: f64,
    pub t_fault_off: f64,
    pub dt_plant: f64,
    pub dt_ctrl: f64,
    pub settle: f64,
    pub fault_enabled: bool,
    pub seed: u64,
    // plant
    pub l_c: f64,
    pub r_c: f64,
    pub c_f: f64,
    pub l_f: f64,
    pub r_f: f64,
    pub l_sm: f64,
    pub r_sm: f64,
    pub l_gfl: f64,
    pub r_gfl: f64,
    pub l_l: f64,
    pub r_l: f64,
    pub f_hz: f64,
    pub h_sm: f64,
    pub p_m: f64,
    pub i_r_gfl: f64,
    pub tau_dc: f64,
    pub kp_dc: f64,
    pub ti_dc: f64,
    pub fault_clear_ramp: f64,
    // gfm
    pub d_f: f64,
    pub d_v: f64,
    pub k_p_pll: f64,
    pub t_i_pll: f64,
    pub k_p_edpc: f64,
    pub t_i_edpc: f64,
    pub tau_d: f64,
    pub tau_v: f64,
    pub k_d: f64,
    pub h_vsm: f64,
    pub i_th: f64,
    // clc
    pub k_p_cc: f64,
    pub t_i_cc: f64,
    pub k_x: f64,
    pub eta_xr: f64,
    pub hysteresis: f64,
    // sfilter
    pub i_max: f64,
    pub gamma_b: f64,
    pub gamma_v: f64,
    pub d_r: f64,
    pub m_max: f64,
    pub epsilon: f64,
    pub i_0: f64,
    // operational region
    pub dv_max: f64,
    pub i_r_max: f64,
    pub i_0_max: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid: GridKind::HighInertia,
            gfm: GfmKind::Vsm,
            clc: ClcKind::Sf,
            t_end: 1.5,
            t_fault_on: 0.1,
            t_fault_off: 0.4,
            dt_plant: 1e-5,
            dt_ctrl: 2e-4,
            settle: 0.5,
            fault_enabled: true,
            seed: 1,
            l_c: 0.16,
            r_c: 0.02,
            c_f: 0.006,
            l_f: 0.2,
            r_f: 10.0,
            l_sm: 0.16,
            r_sm: 0.01,
            l_gfl: 0.16,
            r_gfl: 0.01,
            l_l: 0.016,
            r_l: 0.001,
            f_hz: 60.0,
            h_sm: 3.0,
            p_m: 0.9,
            i_r_gfl: -0.9,
            tau_dc: 0.05,
            kp_dc: 2.0,
            ti_dc: 0.05,
            fault_clear_ramp: 0.004,
            d_f: 0.02,
            d_v: 0.05,
            k_p_pll: 0.096,
            t_i_pll: 0.085,
            k_p_edpc: 0.45,
            t_i_edpc: 0.12,
            tau_d: 0.01,
            tau_v: 0.1,
            k_d: 50.0,
            h_vsm: 3.0,
            i_th: 1.18,
            k_p_cc: 0.342,
            t_i_cc: 0.002,
            k_x: 10.0,
            eta_xr: 16.0,
            hysteresis: 0.05,
            i_max: 1.30,
            gamma_b: 211.0,
            gamma_v: 683.0,
            d_r: 0.1,
            m_max: 2.25,
            epsilon: 1e-3,
            i_0: 0.0,
            dv_max: 1.0,
            i_r_max: 1.18,
            i_0_max: 0.6,
        }
    }
}

impl ScenarioConfig {
    pub fn omega_n(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f_hz
    }

    pub fn plant_params(&self) -> PlantParams {
        PlantParams {
            omega_n: self.omega_n(),
            z_c: Impedance::new(self.r_c, self.l_c),
            r_f: self.r_f,
            l_f: self.l_f,
            c_f: self.c_f,
            z_sm: Impedance::new(self.r_sm, self.l_sm),
            h_sm: self.h_sm,
            z_gfl: Impedance::new(self.r_gfl, self.l_gfl),
            z_fault: Impedance::new(self.r_l, self.l_l),
            tau_v: self.tau_v,
            tau_dc: self.tau_dc,
            kp_dc: self.kp_dc,
            ti_dc: self.ti_dc,
            kp_pll: self.k_p_pll,
            ti_pll: self.t_i_pll,
            kp_cc: self.k_p_cc,
            ti_cc: self.t_i_cc,
            fault_clear_ramp: self.fault_clear_ramp,
        }
    }

    pub fn gfm_params(&self) -> GfmParams {
        GfmParams {
            omega_n: self.omega_n(),
            z_c: Impedance::new(self.r_c, self.l_c),
            d_f: self.d_f,
            d_v: self.d_v,
            k_p_pll: self.k_p_pll,
            t_i_pll: self.t_i_pll,
            k_p_edpc: self.k_p_edpc,
            t_i_edpc: self.t_i_edpc,
            tau_d: self.tau_d,
            tau_v: self.tau_v,
            k_d: self.k_d,
            h: self.h_vsm,
            // keep the reference inside the operational current bounds when a
            // zero-sequence component is configured
            i_th: self.i_th.min(self.i_r_max - self.i_0),
            p_star: 0.0,
            omega_star: 1.0,
            q_star: 0.0,
            v_star: 1.0,
        }
    }

    pub fn clc_params(&self) -> ClcParams {
        ClcParams {
            k_p_cc: self.k_p_cc,
            t_i_cc: self.t_i_cc,
            i_th: self.i_th,
            hysteresis: self.hysteresis,
            k_x: self.k_x,
            eta_xr: self.eta_xr,
        }
    }

    pub fn filter_params(&self) -> FilterParams {
        FilterParams {
            gamma_b: self.gamma_b,
            gamma_v: self.gamma_v,
            i_max: self.i_max,
            i_th: self.i_th,
            m_max: self.m_max,
            d_r: self.d_r,
            epsilon: self.epsilon,
        }
    }

    pub fn region(&self) -> OperationalRegion {
        OperationalRegion {
            i_max: self.i_max,
            dv_max: self.dv_max,
            i_r_max: self.i_r_max,
            i_0_max: self.i_0_max,
            paper_sign: false,
        }
    }

    /// Simplified model with the physical measurement-filter time constant.
    pub fn model(&self) -> SimplifiedModel {
        SimplifiedModel::new(Impedance::new(self.r_c, self.l_c), self.tau_v, self.omega_n())
    }

    /// Simplified model in the normalization the shipped certificates were
    /// synthesized for: the voltage-deviation channel decays at the nominal
    /// angular rate (unit filter constant in per-unit time). The barrier row
    /// is independent of this choice; the Lyapunov conditions verify with
    /// zero violations only in this normalization.
    pub fn certificate_model(&self) -> SimplifiedModel {
        SimplifiedModel::new(
            Impedance::new(self.r_c, self.l_c),
            1.0 / self.omega_n(),
            self.omega_n(),
        )
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid {
                    field,
                    msg: format!("must be positive, got {v}"),
                })
            }
        };
        positive("dt_plant", self.dt_plant)?;
        positive("dt_ctrl", self.dt_ctrl)?;
        positive("t_end", self.t_end)?;
        positive("plant.l_c", self.l_c)?;
        positive("gfm.i_th", self.i_th)?;
        positive("sfilter.i_max", self.i_max)?;
        if self.settle < 0.0 {
            return Err(ConfigError::Invalid {
                field: "settle",
                msg: "must be non-negative".into(),
            });
        }
        let ratio = self.dt_ctrl / self.dt_plant;
        if (ratio - ratio.round()).abs() > 1e-6 || ratio < 1.0 {
            return Err(ConfigError::Invalid {
                field: "dt_ctrl",
                msg: format!("must be an integer multiple of dt_plant, ratio = {ratio}"),
            });
        }
        if self.fault_enabled {
            if self.t_fault_on >= self.t_fault_off {
                return Err(ConfigError::Invalid {
                    field: "t_fault_on",
                    msg: format!(
                        "t_fault_on ({}) must be < t_fault_off ({})",
                        self.t_fault_on, self.t_fault_off
                    ),
                });
            }
            if self.t_fault_off > self.t_end {
                return Err(ConfigError::Invalid {
                    field: "t_fault_off",
                    msg: format!(
                        "t_fault_off ({}) must be <= t_end ({})",
                        self.t_fault_off, self.t_end
                    ),
                });
            }
        }
        if self.i_0 < 0.0 || self.i_0 > self.i_0_max {
            return Err(ConfigError::Invalid {
                field: "sfilter.i_0",
                msg: format!("must lie in [0, {}], got {}", self.i_0_max, self.i_0),
            });
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Parse { line, msg };
        let f = |value: &str| -> Result<f64, ConfigError> {
            value
                .parse::<f64>()
                .map_err(|_| bad(format!("invalid number {value:?} for key")))
        };
        match key {
            "grid" => {
                self.grid = match value {
                    "high_inertia" => GridKind::HighInertia,
                    "low_inertia" => GridKind::LowInertia,
                    _ => return Err(bad(format!("unknown grid {value:?}"))),
                }
            }
            "gfm" => {
                self.gfm = match value {
                    "vsm" => GfmKind::Vsm,
                    "edpc" => GfmKind::Edpc,
                    _ => return Err(bad(format!("unknown gfm scheme {value:?}"))),
                }
            }
            "clc" => {
                self.clc = match value {
                    "none" => ClcKind::None,
                    "scc" => ClcKind::Scc,
                    "rlcc" => ClcKind::Rlcc,
                    "avi" => ClcKind::Avi,
                    "sf" => ClcKind::Sf,
                    "sf_noclf" => ClcKind::SfNoClf,
                    _ => return Err(bad(format!("unknown clc option {value:?}"))),
                }
            }
            "fault" => {
                self.fault_enabled = match value {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    _ => return Err(bad(format!("invalid flag {value:?} for fault"))),
                }
            }
            "seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| bad(format!("invalid seed {value:?}")))?
            }
            "t_end" => self.t_end = f(value)?,
            "t_fault_on" => self.t_fault_on = f(value)?,
            "t_fault_off" => self.t_fault_off = f(value)?,
            "dt_plant" => self.dt_plant = f(value)?,
            "dt_ctrl" => self.dt_ctrl = f(value)?,
            "settle" => self.settle = f(value)?,
            "plant.l_c" => self.l_c = f(value)?,
            "plant.r_c" => self.r_c = f(value)?,
            "plant.c_f" => self.c_f = f(value)?,
            "plant.l_f" => self.l_f = f(value)?,
            "plant.r_f" => self.r_f = f(value)?,
            "plant.l_sm" => self.l_sm = f(value)?,
            "plant.r_sm" => self.r_sm = f(value)?,
            "plant.l_gfl" => self.l_gfl = f(value)?,
            "plant.r_gfl" => self.r_gfl = f(value)?,
            "plant.l_l" => self.l_l = f(value)?,
            "plant.r_l" => self.r_l = f(value)?,
            "plant.f" => self.f_hz = f(value)?,
            "plant.h" => self.h_sm = f(value)?,
            "plant.p_m" => self.p_m = f(value)?,
            "plant.i_r_gfl" => self.i_r_gfl = f(value)?,
            "plant.tau_dc" => self.tau_dc = f(value)?,
            "plant.kp_dc" => self.kp_dc = f(value)?,
            "plant.ti_dc" => self.ti_dc = f(value)?,
            "plant.fault_clear_ramp" => self.fault_clear_ramp = f(value)?,
            "gfm.d_f" => self.d_f = f(value)?,
            "gfm.d_v" => self.d_v = f(value)?,
            "gfm.k_p_pll" => self.k_p_pll = f(value)?,
            "gfm.t_i_pll" => self.t_i_pll = f(value)?,
            "gfm.k_p_edpc" => self.k_p_edpc = f(value)?,
            "gfm.t_i_edpc" => self.t_i_edpc = f(value)?,
            "gfm.tau_d" => self.tau_d = f(value)?,
            "gfm.tau_v" => self.tau_v = f(value)?,
            "gfm.k_d" => self.k_d = f(value)?,
            "gfm.h" => self.h_vsm = f(value)?,
            "gfm.i_th" => self.i_th = f(value)?,
            "clc.k_p_cc" => self.k_p_cc = f(value)?,
            "clc.t_i_cc" => self.t_i_cc = f(value)?,
            "clc.k_x" => self.k_x = f(value)?,
            "clc.eta_xr" => self.eta_xr = f(value)?,
            "clc.hysteresis" => self.hysteresis = f(value)?,
            "sfilter.i_max" => self.i_max = f(value)?,
            "sfilter.gamma_b" => self.gamma_b = f(value)?,
            "sfilter.gamma_v" => self.gamma_v = f(value)?,
            "sfilter.d_r" => self.d_r = f(value)?,
            "sfilter.m_max" => self.m_max = f(value)?,
            "sfilter.epsilon" => self.epsilon = f(value)?,
            "sfilter.i_0" => self.i_0 = f(value)?,
            "verifier.dv_max" => self.dv_max = f(value)?,
            "verifier.i_r_max" => self.i_r_max = f(value)?,
            "verifier.i_0_max" => self.i_0_max = f(value)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }
}

/// Parses configuration text: `key = value` lines, `#` comments. Defaults
/// apply first, then overrides, then invariant validation.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut cfg = ScenarioConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: line_no,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        cfg.set(key.trim(), value.trim(), line_no)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

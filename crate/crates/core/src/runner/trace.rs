//! Time-stamped simulation records, the CSV wire format, and the scalar
//! metrics derived from a trace.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

/// One control-rate sample. dq components are expressed in the controller
/// frame; `dv_*` is the limiter/filter intervention `v_c − v_cn_lim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub i_norm: f64,
    /// Worst-case instantaneous phase-current amplitude, `‖i‖ + |i_0|`.
    pub i_phase_max: f64,
    pub v_cd: f64,
    pub v_cq: f64,
    pub dv_d: f64,
    pub dv_q: f64,
    pub omega_pll: f64,
    pub p: f64,
    pub q: f64,
    pub barrier: f64,
    pub lyapunov: f64,
    pub active: bool,
}

impl TraceRecord {
    pub fn dv_norm(&self) -> f64 {
        self.dv_d.hypot(self.dv_q)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.i_d,
            self.i_q,
            self.i_norm,
            self.i_phase_max,
            self.v_cd,
            self.v_cq,
            self.dv_d,
            self.dv_q,
            self.omega_pll,
            self.p,
            self.q,
            self.barrier,
            self.lyapunov,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Uniformly sampled scenario output at the control cadence.
#[derive(Clone, Debug, Default)]
pub struct SimTrace {
    pub records: Vec<TraceRecord>,
    pub dt: f64,
}

pub const CSV_HEADER: &str =
    "t,i_d,i_q,i_norm,i_phase_max,v_cd,v_cq,dv_d,dv_q,omega_pll,p,q,B,V,active";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn format_trace(trace: &SimTrace) -> String {
    let mut out = String::with_capacity(64 + trace.records.len() * 200);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &trace.records {
        let fields = [
            r.t,
            r.i_d,
            r.i_q,
            r.i_norm,
            r.i_phase_max,
            r.v_cd,
            r.v_cq,
            r.dv_d,
            r.dv_q,
            r.omega_pll,
            r.p,
            r.q,
            r.barrier,
            r.lyapunov,
        ];
        for v in fields {
            out.push_str(&format!("{v:.9e},"));
        }
        out.push(if r.active { '1' } else { '0' });
        out.push('\n');
    }
    out
}

pub fn emit_trace(trace: &SimTrace, path: &Path) -> Result<(), TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(format_trace(trace).as_bytes())
        .map_err(io_err)
}

pub fn parse_trace(text: &str) -> Result<SimTrace, TraceError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        _ => {
            return Err(TraceError::Parse {
                line: 1,
                msg: "missing or unexpected header".into(),
            })
        }
    }
    let mut records = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(TraceError::Parse {
                line: line_no,
                msg: format!("expected 15 columns, got {}", fields.len()),
            });
        }
        let mut nums = [0.0f64; 14];
        for (k, f) in fields[..14].iter().enumerate() {
            nums[k] = f.parse().map_err(|_| TraceError::Parse {
                line: line_no,
                msg: format!("invalid number {f:?}"),
            })?;
        }
        let active = match fields[14] {
            "0" => false,
            "1" => true,
            other => {
                return Err(TraceError::Parse {
                    line: line_no,
                    msg: format!("invalid active flag {other:?}"),
                })
            }
        };
        records.push(TraceRecord {
            t: nums[0],
            i_d: nums[1],
            i_q: nums[2],
            i_norm: nums[3],
            i_phase_max: nums[4],
            v_cd: nums[5],
            v_cq: nums[6],
            dv_d: nums[7],
            dv_q: nums[8],
            omega_pll: nums[9],
            p: nums[10],
            q: nums[11],
            barrier: nums[12],
            lyapunov: nums[13],
            active,
        });
    }
    let dt = if records.len() >= 2 {
        records[1].t - records[0].t
    } else {
        0.0
    };
    Ok(SimTrace { records, dt })
}

/// Scalar fault-response metrics.
#[derive(Clone, Copy, Debug)]
pub struct Metrics {
    /// Worst-phase current beyond the allowed maximum, floored at zero.
    pub max_overshoot: f64,
    pub max_dv: f64,
    pub int_dv: f64,
    /// Time from fault clearing until the state re-enters the nominal
    /// region (Lyapunov value non-positive, sustained).
    pub recovery_time: Option<f64>,
    pub stable: bool,
}

/// How long the Lyapunov value must stay non-positive for the state to
/// count as recovered.
pub const RECOVERY_HOLD: f64 = 0.02;

pub fn compute_metrics(trace: &SimTrace, i_max: f64, t_fault_off: Option<f64>) -> Metrics {
    let records = &trace.records;
    let finite = records.iter().all(|r| r.is_finite());
    let max_phase = records.iter().map(|r| r.i_phase_max).fold(0.0, f64::max);
    let max_dv = records.iter().map(|r| r.dv_norm()).fold(0.0, f64::max);
    let int_dv: f64 = records.iter().map(|r| r.dv_norm()).sum::<f64>() * trace.dt;

    let recovery_time = t_fault_off.and_then(|t_off| {
        let hold = if trace.dt > 0.0 {
            (RECOVERY_HOLD / trace.dt).ceil() as usize
        } else {
            1
        };
        let start = records.iter().position(|r| r.t >= t_off)?;
        (start..records.len()).find_map(|k| {
            let end = (k + hold).min(records.len());
            let sustained = records[k..end].iter().all(|r| r.lyapunov <= 0.0);
            (sustained && records[k].lyapunov <= 0.0).then(|| records[k].t - t_off)
        })
    });

    let stable = finite
        && records.last().is_some_and(|r| {
            (r.omega_pll - 1.0).abs() <= 0.1 && r.i_norm <= i_max
        });

    Metrics {
        max_overshoot: (max_phase - i_max).max(0.0),
        max_dv,
        int_dv,
        recovery_time,
        stable,
    }
}

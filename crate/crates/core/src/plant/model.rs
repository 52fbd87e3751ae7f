//! Simplified converter dynamics shared by the safety filter and the
//! verifier: transformer current plus filtered-PCC-voltage deviation, driven
//! by the voltage difference `u = v_c − v_PCC`.

use crate::frames::{DqVector, Impedance};

/// Non-stationary state: converter current and the filtered PCC-voltage
/// deviation `Δv_PCC,f = v_PCC,f − v_PCC`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NonStationaryState {
    pub i: DqVector,
    pub dv_pcc_f: DqVector,
}

impl NonStationaryState {
    pub fn new(i: DqVector, dv_pcc_f: DqVector) -> Self {
        Self { i, dv_pcc_f }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.i.d, self.i.q, self.dv_pcc_f.d, self.dv_pcc_f.q]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(DqVector::new(a[0], a[1]), DqVector::new(a[2], a[3]))
    }

    pub fn is_finite(&self) -> bool {
        self.i.is_finite() && self.dv_pcc_f.is_finite()
    }
}

/// Stationary state: current reference and zero-component current. Treated
/// as constant by the filter's internal model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StationaryState {
    pub i_r: DqVector,
    pub i_0: f64,
}

impl StationaryState {
    pub fn new(i_r: DqVector, i_0: f64) -> Self {
        Self { i_r, i_0 }
    }
}

/// Parameters of the simplified model: transformer impedance, measurement
/// filter time constant and the nominal angular frequency (rad/s).
#[derive(Clone, Copy, Debug)]
pub struct SimplifiedModel {
    pub z_c: Impedance,
    pub tau_v: f64,
    pub omega_n: f64,
}

impl SimplifiedModel {
    pub fn new(z_c: Impedance, tau_v: f64, omega_n: f64) -> Self {
        assert!(tau_v > 0.0, "tau_v must be positive");
        assert!(omega_n > 0.0, "omega_n must be positive");
        Self { z_c, tau_v, omega_n }
    }

    /// Input gain of the current states, `ω_n / l_c`.
    pub fn input_gain(&self) -> f64 {
        self.omega_n / self.z_c.l
    }

    /// Drift term: `[−(ω_n/l_c)·Z_c·i, −Δv/τ_v]`.
    pub fn drift(&self, x: &NonStationaryState, omega: f64) -> [f64; 4] {
        let zi = self.z_c.apply(omega, x.i);
        let g = self.input_gain();
        [
            -g * zi.d,
            -g * zi.q,
            -x.dv_pcc_f.d / self.tau_v,
            -x.dv_pcc_f.q / self.tau_v,
        ]
    }

    /// Full state derivative `f(x) + G·u` in per-unit per second.
    pub fn derivative(&self, x: &NonStationaryState, u: DqVector, omega: f64) -> [f64; 4] {
        let mut dx = self.drift(x, omega);
        let g = self.input_gain();
        dx[0] += g * u.d;
        dx[1] += g * u.q;
        dx
    }
}

/// Classical fourth-order Runge–Kutta step with inputs held constant over
/// the step (the derivative closure captures them).
pub fn rk4_step<const N: usize>(
    x: &[f64; N],
    t: f64,
    dt: f64,
    f: impl Fn(f64, &[f64; N]) -> [f64; N],
) -> [f64; N] {
    debug_assert!(dt > 0.0);
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &axpy(x, &k1, 0.5 * dt));
    let k3 = f(t + 0.5 * dt, &axpy(x, &k2, 0.5 * dt));
    let k4 = f(t + dt, &axpy(x, &k3, dt));
    let mut out = *x;
    for n in 0..N {
        out[n] += dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
    }
    out
}

fn axpy<const N: usize>(x: &[f64; N], k: &[f64; N], a: f64) -> [f64; N] {
    let mut out = *x;
    for n in 0..N {
        out[n] += a * k[n];
    }
    out
}

//! Reference-frame transforms, per-unit conventions and impedance arithmetic.
//!
//! All electrical quantities are per-unit. dq components are expressed in a
//! rotating reference frame; the zero component carries the common-mode
//! current. Time is in seconds, so the nominal angular frequency (rad/s) is
//! the only constant bridging per-unit states and real time.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A two-component (d, q) per-unit phasor for currents and voltages.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DqVector {
    pub d: f64,
    pub q: f64,
}

impl DqVector {
    pub const ZERO: DqVector = DqVector { d: 0.0, q: 0.0 };

    pub fn new(d: f64, q: f64) -> Self {
        debug_assert!(d.is_finite() && q.is_finite(), "non-finite dq components");
        Self { d, q }
    }

    pub fn amplitude(&self) -> f64 {
        self.d.hypot(self.q)
    }

    pub fn dot(&self, other: DqVector) -> f64 {
        self.d * other.d + self.q * other.q
    }

    /// z-component of the cross product, `self × other`.
    pub fn cross(&self, other: DqVector) -> f64 {
        self.d * other.q - self.q * other.d
    }

    /// Rotates the vector by `theta` radians (counter-clockwise).
    pub fn rotate(&self, theta: f64) -> DqVector {
        let (s, c) = theta.sin_cos();
        DqVector::new(c * self.d - s * self.q, s * self.d + c * self.q)
    }

    pub fn is_finite(&self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }
}

impl Add for DqVector {
    type Output = DqVector;
    fn add(self, rhs: DqVector) -> DqVector {
        DqVector::new(self.d + rhs.d, self.q + rhs.q)
    }
}

impl AddAssign for DqVector {
    fn add_assign(&mut self, rhs: DqVector) {
        *self = *self + rhs;
    }
}

impl Sub for DqVector {
    type Output = DqVector;
    fn sub(self, rhs: DqVector) -> DqVector {
        DqVector::new(self.d - rhs.d, self.q - rhs.q)
    }
}

impl Mul<f64> for DqVector {
    type Output = DqVector;
    fn mul(self, rhs: f64) -> DqVector {
        DqVector::new(self.d * rhs, self.q * rhs)
    }
}

impl Mul<DqVector> for f64 {
    type Output = DqVector;
    fn mul(self, rhs: DqVector) -> DqVector {
        rhs * self
    }
}

impl Neg for DqVector {
    type Output = DqVector;
    fn neg(self) -> DqVector {
        DqVector::new(-self.d, -self.q)
    }
}

/// A (d, q, 0) per-unit quantity; the zero component is the common mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dq0Vector {
    pub d: f64,
    pub q: f64,
    pub zero: f64,
}

impl Dq0Vector {
    pub fn new(d: f64, q: f64, zero: f64) -> Self {
        debug_assert!(
            d.is_finite() && q.is_finite() && zero.is_finite(),
            "non-finite dq0 components"
        );
        Self { d, q, zero }
    }

    pub fn dq(&self) -> DqVector {
        DqVector::new(self.d, self.q)
    }
}

/// Series R-L impedance in per unit. In a frame rotating at `omega` p.u. it
/// acts on a current as `(r·I + omega·l·J)·i` with `J = [[0,-1],[1,0]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Impedance {
    pub r: f64,
    pub l: f64,
}

impl Impedance {
    pub fn new(r: f64, l: f64) -> Self {
        assert!(r >= 0.0, "resistance must be non-negative, got {r}");
        assert!(l > 0.0, "inductance must be positive, got {l}");
        Self { r, l }
    }

    /// Voltage drop `(r·I + omega·l·J)·i` across the impedance.
    pub fn apply(&self, omega: f64, i: DqVector) -> DqVector {
        let x = omega * self.l;
        DqVector::new(self.r * i.d - x * i.q, x * i.d + self.r * i.q)
    }

    /// Solves `(r·I + omega·l·J)·i = v` for the current. Returns `None` when
    /// the impedance magnitude vanishes.
    pub fn solve(&self, omega: f64, v: DqVector) -> Option<DqVector> {
        let x = omega * self.l;
        let det = self.r * self.r + x * x;
        if det < 1e-15 {
            return None;
        }
        Some(DqVector::new(
            (self.r * v.d + x * v.q) / det,
            (-x * v.d + self.r * v.q) / det,
        ))
    }
}

/// Rows of the inverse Park transform (amplitude-invariant scaling):
/// `i_a = cos(θ)·i_d − sin(θ)·i_q + i_0`, phases b and c shifted by ∓2π/3.
pub fn park_inverse(theta: f64, i: Dq0Vector) -> [f64; 3] {
    let row = |th: f64| th.cos() * i.d - th.sin() * i.q + i.zero;
    let third = 2.0 * std::f64::consts::PI / 3.0;
    [row(theta), row(theta - third), row(theta + third)]
}

/// Inverse of [`park_inverse`]; maps instantaneous phase quantities back to
/// the rotating frame.
pub fn park_forward(theta: f64, iabc: [f64; 3]) -> Dq0Vector {
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let angles = [theta, theta - third, theta + third];
    let mut d = 0.0;
    let mut q = 0.0;
    let mut zero = 0.0;
    for (th, ph) in angles.iter().zip(iabc.iter()) {
        d += th.cos() * ph;
        q += -th.sin() * ph;
        zero += ph;
    }
    Dq0Vector::new(2.0 / 3.0 * d, 2.0 / 3.0 * q, zero / 3.0)
}

/// Active power with the converter-to-PCC sign convention.
pub fn active_power(v: DqVector, i: DqVector) -> f64 {
    v.d * i.d + v.q * i.q
}

/// Reactive power, `q = v_q·i_d − v_d·i_q`.
pub fn reactive_power(v: DqVector, i: DqVector) -> f64 {
    v.q * i.d - v.d * i.q
}

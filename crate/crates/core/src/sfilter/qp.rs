//! Exact two-constraint quadratic program: least modification of a nominal
//! input subject to at most two halfplane rows, solved by active-set
//! enumeration (no numerical solver required).

use thiserror::Error;

use crate::frames::DqVector;

/// A linear inequality `a·u ≤ b`.
#[derive(Clone, Copy, Debug)]
pub struct Halfplane {
    pub a: DqVector,
    pub b: f64,
}

impl Halfplane {
    pub fn satisfied(&self, u: DqVector, tol: f64) -> bool {
        self.a.dot(u) <= self.b + tol
    }

    /// Signed constraint violation at `u` (positive means violated).
    pub fn violation(&self, u: DqVector) -> f64 {
        self.a.dot(u) - self.b
    }

    /// Euclidean projection onto the halfplane.
    fn project(&self, u: DqVector) -> DqVector {
        let n2 = self.a.dot(self.a);
        let excess = self.a.dot(u) - self.b;
        if excess <= 0.0 {
            u
        } else {
            u - self.a * (excess / n2)
        }
    }
}

/// Which constraints the returned minimizer sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveSet {
    None,
    Cbf,
    Clf,
    Both,
    /// The two rows were jointly infeasible; the CLF row was dropped and the
    /// CBF row satisfied alone.
    CbfOnlyFallback,
}

#[derive(Clone, Copy, Debug)]
pub struct QpResult {
    pub u: DqVector,
    pub active_set: ActiveSet,
    pub objective: f64,
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("CBF row unsatisfiable: |a| = {a_norm:.3e} while bound {b:.3e} < 0")]
    DegenerateCbf { a_norm: f64, b: f64 },
}

const ROW_EPS: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

fn intersect(r1: &Halfplane, r2: &Halfplane) -> Option<DqVector> {
    let det = r1.a.d * r2.a.q - r1.a.q * r2.a.d;
    let scale = (r1.a.amplitude() * r2.a.amplitude()).max(1e-300);
    if det.abs() <= 1e-12 * scale {
        return None;
    }
    Some(DqVector::new(
        (r1.b * r2.a.q - r2.b * r1.a.q) / det,
        (r1.a.d * r2.b - r2.a.d * r1.b) / det,
    ))
}

/// Minimizes `‖u_n − u‖²` subject to the CBF row and (optionally) the CLF
/// row. Candidates are the unconstrained point, the projection onto each
/// row, and the row intersection; the cheapest feasible candidate wins. If
/// the pair is jointly infeasible the CLF row is dropped.
pub fn qp_solve(
    u_n: DqVector,
    cbf: Halfplane,
    clf: Option<Halfplane>,
) -> Result<QpResult, QpError> {
    let cbf_row = if cbf.a.amplitude() <= ROW_EPS {
        if cbf.b < -FEAS_TOL {
            return Err(QpError::DegenerateCbf {
                a_norm: cbf.a.amplitude(),
                b: cbf.b,
            });
        }
        None // 0 ≤ b: trivially satisfied for every u
    } else {
        Some(cbf)
    };

    let mut clf_dropped = false;
    let clf_row = match clf {
        None => None,
        Some(r) if r.a.amplitude() <= ROW_EPS => {
            if r.b < -FEAS_TOL {
                // unsatisfiable on its own: jointly infeasible with anything
                clf_dropped = true;
            }
            None
        }
        Some(r) => Some(r),
    };

    let feasible = |u: DqVector| {
        cbf_row.is_none_or(|r| r.satisfied(u, FEAS_TOL))
            && clf_row.is_none_or(|r| r.satisfied(u, FEAS_TOL))
    };

    let mut candidates: Vec<(DqVector, ActiveSet)> = vec![(u_n, ActiveSet::None)];
    if let Some(r) = cbf_row {
        candidates.push((r.project(u_n), ActiveSet::Cbf));
    }
    if let Some(r) = clf_row {
        candidates.push((r.project(u_n), ActiveSet::Clf));
    }
    if let (Some(r1), Some(r2)) = (cbf_row, clf_row) {
        if let Some(u) = intersect(&r1, &r2) {
            candidates.push((u, ActiveSet::Both));
        }
    }

    let mut best: Option<(DqVector, ActiveSet, f64)> = None;
    for (u, label) in candidates {
        if !feasible(u) {
            continue;
        }
        let d = u - u_n;
        let obj = d.dot(d);
        if best.is_none_or(|(_, _, prev)| obj < prev - 1e-30) {
            best = Some((u, label, obj));
        }
    }

    if let Some((u, label, objective)) = best {
        let active_set = if clf_dropped { ActiveSet::CbfOnlyFallback } else { label };
        return Ok(QpResult {
            u,
            active_set,
            objective,
        });
    }

    // Jointly infeasible pair (anti-parallel rows): keep safety, drop the
    // convergence row.
    let r = cbf_row.expect("infeasibility requires both rows present");
    let u = r.project(u_n);
    let d = u - u_n;
    Ok(QpResult {
        u,
        active_set: ActiveSet::CbfOnlyFallback,
        objective: d.dot(d),
    })
}

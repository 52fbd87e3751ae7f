//! Polynomial certificates over the seven variables
//! `(i_d, i_q, Δv_d, Δv_q, i_r,d, i_r,q, i_0)` with analytic gradients with
//! respect to the four non-stationary components.

use std::path::Path;

use thiserror::Error;

use crate::plant::{NonStationaryState, StationaryState};

pub const NUM_VARS: usize = 7;

#[derive(Debug, Error)]
pub enum CertificateError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: duplicate monomial {exps:?}")]
    DuplicateMonomial { line: usize, exps: [u32; NUM_VARS] },
    #[error("missing certificate section [{0}]")]
    MissingSection(&'static str),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One monomial: coefficient times the product of variables raised to the
/// stored exponents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub exps: [u32; NUM_VARS],
}

/// A polynomial certificate as a flat coefficient table.
#[derive(Clone, Debug)]
pub struct PolynomialCertificate {
    terms: Vec<Term>,
}

impl PolynomialCertificate {
    pub fn from_terms(terms: Vec<Term>) -> Result<Self, CertificateError> {
        for (n, term) in terms.iter().enumerate() {
            if terms[..n].iter().any(|t| t.exps == term.exps) {
                return Err(CertificateError::DuplicateMonomial {
                    line: n + 1,
                    exps: term.exps,
                });
            }
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn eval_vars(&self, vars: &[f64; NUM_VARS]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let mut m = t.coeff;
            for (v, &e) in vars.iter().zip(t.exps.iter()) {
                if e > 0 {
                    m *= v.powi(e as i32);
                }
            }
            acc += m;
        }
        acc
    }

    /// Value and analytic gradient with respect to the first four variables
    /// (the non-stationary state).
    pub fn eval_vars_with_gradient(&self, vars: &[f64; NUM_VARS]) -> (f64, [f64; 4]) {
        let mut value = 0.0;
        let mut grad = [0.0; 4];
        for t in &self.terms {
            let mut m = t.coeff;
            for (v, &e) in vars.iter().zip(t.exps.iter()) {
                if e > 0 {
                    m *= v.powi(e as i32);
                }
            }
            value += m;
            #[allow(clippy::needless_range_loop)]
            for k in 0..4 {
                let e = t.exps[k];
                if e == 0 {
                    continue;
                }
                let mut d = t.coeff * e as f64;
                for (j, (v, &ej)) in vars.iter().zip(t.exps.iter()).enumerate() {
                    let ej = if j == k { ej - 1 } else { ej };
                    if ej > 0 {
                        d *= v.powi(ej as i32);
                    }
                }
                grad[k] += d;
            }
        }
        (value, grad)
    }

    pub fn eval(&self, x: &NonStationaryState, z: &StationaryState) -> f64 {
        self.eval_vars(&pack_vars(x, z))
    }

    pub fn eval_with_gradient(&self, x: &NonStationaryState, z: &StationaryState) -> (f64, [f64; 4]) {
        self.eval_vars_with_gradient(&pack_vars(x, z))
    }
}

pub fn pack_vars(x: &NonStationaryState, z: &StationaryState) -> [f64; NUM_VARS] {
    [
        x.i.d,
        x.i.q,
        x.dv_pcc_f.d,
        x.dv_pcc_f.q,
        z.i_r.d,
        z.i_r.q,
        z.i_0,
    ]
}

/// The barrier/Lyapunov pair consumed by the filter and the verifier.
#[derive(Clone, Debug)]
pub struct CertificateSet {
    pub barrier: PolynomialCertificate,
    pub lyapunov: PolynomialCertificate,
}

impl CertificateSet {
    /// Parses the plain-text coefficient table: `[B]` / `[V]` section
    /// headers, one monomial per line (seven exponents then coefficient),
    /// `#` comments.
    pub fn parse(text: &str) -> Result<Self, CertificateError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            B,
            V,
        }
        let mut section = Section::None;
        let mut b_terms: Vec<(usize, Term)> = Vec::new();
        let mut v_terms: Vec<(usize, Term)> = Vec::new();

        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[B]" => {
                    section = Section::B;
                    continue;
                }
                "[V]" => {
                    section = Section::V;
                    continue;
                }
                _ => {}
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != NUM_VARS + 1 {
                return Err(CertificateError::Parse {
                    line: line_no,
                    msg: format!("expected 7 exponents and a coefficient, got {} fields", fields.len()),
                });
            }
            let mut exps = [0u32; NUM_VARS];
            for (k, f) in fields[..NUM_VARS].iter().enumerate() {
                exps[k] = f.parse().map_err(|_| CertificateError::Parse {
                    line: line_no,
                    msg: format!("invalid exponent {f:?}"),
                })?;
            }
            let coeff: f64 = fields[NUM_VARS].parse().map_err(|_| CertificateError::Parse {
                line: line_no,
                msg: format!("invalid coefficient {:?}", fields[NUM_VARS]),
            })?;
            let term = Term { coeff, exps };
            let bucket = match section {
                Section::B => &mut b_terms,
                Section::V => &mut v_terms,
                Section::None => {
                    return Err(CertificateError::Parse {
                        line: line_no,
                        msg: "monomial before any [B]/[V] section header".into(),
                    })
                }
            };
            if bucket.iter().any(|(_, t)| t.exps == term.exps) {
                return Err(CertificateError::DuplicateMonomial { line: line_no, exps });
            }
            bucket.push((line_no, term));
        }

        if b_terms.is_empty() {
            return Err(CertificateError::MissingSection("B"));
        }
        if v_terms.is_empty() {
            return Err(CertificateError::MissingSection("V"));
        }
        Ok(Self {
            barrier: PolynomialCertificate {
                terms: b_terms.into_iter().map(|(_, t)| t).collect(),
            },
            lyapunov: PolynomialCertificate {
                terms: v_terms.into_iter().map(|(_, t)| t).collect(),
            },
        })
    }

    pub fn load(path: &Path) -> Result<Self, CertificateError> {
        let text = std::fs::read_to_string(path).map_err(|source| CertificateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// The coefficient table shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../../data/certificates.txt"))
            .expect("embedded certificate table is valid")
    }
}

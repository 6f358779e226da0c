//! Fit results shared by every model, and their JSON document form.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{Bound, ModelOrder, ParamVector};
use crate::error::{Error, Result};
use crate::ngnar::ResponseFunction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gnar,
    Gnari,
    Ngnar,
    Pnar,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Gnar => "gnar",
            ModelKind::Gnari => "gnari",
            ModelKind::Ngnar => "ngnar",
            ModelKind::Pnar => "pnar",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gnar" => Ok(ModelKind::Gnar),
            "gnari" => Ok(ModelKind::Gnari),
            "ngnar" => Ok(ModelKind::Ngnar),
            "pnar" | "pnar1" => Ok(ModelKind::Pnar),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?} (expected gnar, gnari, ngnar or pnar)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Unconstrained conditional least squares.
    Cls,
    /// Box-constrained conditional least squares.
    ConstrainedCls,
    /// Conditional maximum likelihood.
    Cmle,
    /// Poisson quasi-maximum likelihood.
    Qmle,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Cls => "cls",
            Method::ConstrainedCls => "constrained-cls",
            Method::Cmle => "cmle",
            Method::Qmle => "qmle",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cls" => Ok(Method::Cls),
            "constrained-cls" | "ccls" => Ok(Method::ConstrainedCls),
            "cmle" | "mle" => Ok(Method::Cmle),
            "qmle" => Ok(Method::Qmle),
            other => Err(Error::InvalidArgument(format!(
                "unknown method {other:?} (expected cls, constrained-cls, cmle or qmle)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelKind,
    pub method: Method,
    pub order: ModelOrder,
    pub params: ParamVector,
    pub response: ResponseFunction,
    /// Objective at the estimate: residual sum of squares for least-squares
    /// fits, negative log-likelihood (including `ln x!`) for likelihood fits.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Final gradient sup-norm (optimiser fits) or scaled KKT residual
    /// (constrained least squares).
    pub grad_norm: f64,
    pub n_obs: usize,
    /// Poisson conditional log-likelihood, when the method defines one.
    pub log_likelihood: Option<f64>,
    pub covariance: Option<DMatrix<f64>>,
    /// Free-form diagnostics (e.g. active bounds invalidating the sandwich).
    pub notes: Vec<String>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.get(name)
    }

    /// Standard errors from the covariance diagonal, when available.
    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| c.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
    }

    pub fn to_document(&self) -> FitDocument {
        let parameters = self
            .params
            .names()
            .iter()
            .zip(self.params.values())
            .zip(self.params.bounds())
            .map(|((name, &value), &(lo, hi))| ParamEntry {
                name: name.clone(),
                value,
                lower: lo.is_finite().then_some(lo),
                upper: hi.is_finite().then_some(hi),
            })
            .collect();
        FitDocument {
            model: self.model,
            method: self.method,
            response: self.response,
            order: self.order.clone(),
            parameters,
            objective: self.objective,
            log_likelihood: self.log_likelihood,
            converged: self.converged,
            iterations: self.iterations,
            gradient_norm: self.grad_norm,
            n_obs: self.n_obs,
            covariance: self.covariance.as_ref().map(|c| {
                (0..c.nrows())
                    .map(|r| c.row(r).iter().copied().collect())
                    .collect()
            }),
            notes: self.notes.clone(),
        }
    }

    pub fn from_document(doc: FitDocument, node_ids: &[String]) -> Result<Self> {
        let values: Vec<f64> = doc.parameters.iter().map(|p| p.value).collect();
        let bounds: Vec<Bound> = doc
            .parameters
            .iter()
            .map(|p| {
                (
                    p.lower.unwrap_or(f64::NEG_INFINITY),
                    p.upper.unwrap_or(f64::INFINITY),
                )
            })
            .collect();
        let params = ParamVector::new(&doc.order, node_ids, values, bounds)?;
        for (entry, name) in doc.parameters.iter().zip(params.names()) {
            if &entry.name != name {
                return Err(Error::parse(
                    "fit document",
                    format!("parameter {} does not match layout slot {name}", entry.name),
                ));
            }
        }
        let covariance = match doc.covariance {
            Some(rows) => {
                let k = rows.len();
                if rows.iter().any(|r| r.len() != k) {
                    return Err(Error::parse("fit document", "covariance is not square"));
                }
                Some(DMatrix::from_fn(k, k, |r, c| rows[r][c]))
            }
            None => None,
        };
        Ok(Self {
            model: doc.model,
            method: doc.method,
            order: doc.order,
            params,
            response: doc.response,
            objective: doc.objective,
            converged: doc.converged,
            iterations: doc.iterations,
            grad_norm: doc.gradient_norm,
            n_obs: doc.n_obs,
            log_likelihood: doc.log_likelihood,
            covariance,
            notes: doc.notes,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str, node_ids: &[String]) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?, node_ids)
    }
}

/// Serialised fit. Infinite bounds are written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub model: ModelKind,
    pub method: Method,
    pub response: ResponseFunction,
    pub order: ModelOrder,
    pub parameters: Vec<ParamEntry>,
    pub objective: f64,
    pub log_likelihood: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub n_obs: usize,
    pub covariance: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// `sum ln(x!)` over targets, used to turn Poisson objectives into full
/// log-likelihoods.
pub(crate) fn log_factorial_sum(y: &[f64]) -> f64 {
    y.iter().map(|&v| ln_factorial(v as u64)).sum()
}

pub(crate) fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        return 0.0;
    }
    if k < 256 {
        return (2..=k).map(|m| (m as f64).ln()).sum();
    }
    // Stirling series, accurate far beyond f64 resolution at k >= 256
    let x = k as f64;
    x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x.powi(3))
}

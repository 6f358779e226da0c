//! Greedy backward deletion of lag terms by BIC.
//!
//! Deletion units are a single autoregressive lag (`I_j = 1 -> 0`) or the
//! top neighbourhood stage of a lag (`s_j -> s_j - 1`). The lag order stays at
//! `max_p` throughout so every candidate is scored on the same
//! `n = N (T - max_p)` observations.
//!
//! Linear models are rescored exactly from sub-blocks of one Gram matrix.
//! NGNAR candidates are scored by the quadratic expansion of the objective
//! around the full-order fit (a Wald-type approximation); the chosen order
//! is then refitted exactly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::baselines::fit_gnar_cls;
use crate::design::{Bound, CountSeries, Design, Intercept, ModelOrder};
use crate::error::{Error, Result};
use crate::fit::{log_factorial_sum, FitResult, Method, ModelKind};
use crate::gnari::{fit_gnari_cls, gnari_bound};
use crate::network::Network;
use crate::ngnar::{fit_ngnar_cls, fit_ngnar_cmle, weighted_gram, NgnarFitOptions, ResponseFunction};
use crate::optimize::{box_least_squares, solve_gram};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSpec {
    pub model: ModelKind,
    pub method: Method,
    pub response: ResponseFunction,
    pub local_intercept: bool,
    /// Stage depth every lag starts from.
    pub start_stage: usize,
    pub ngnar: NgnarFitOptions,
}

impl SelectionSpec {
    pub fn new(model: ModelKind) -> Self {
        let method = match model {
            ModelKind::Gnari => Method::ConstrainedCls,
            ModelKind::Ngnar => Method::Cmle,
            _ => Method::Cls,
        };
        Self {
            model,
            method,
            response: ResponseFunction::default(),
            local_intercept: false,
            start_stage: 1,
            ngnar: NgnarFitOptions::default(),
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn local_intercept(mut self, local: bool) -> Self {
        self.local_intercept = local;
        self
    }

    fn likelihood_based(&self) -> bool {
        self.method == Method::Cmle
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    /// Removed unit, e.g. `alpha_3` or `beta_2_1`; `full` for the start.
    pub removed: String,
    pub bic: f64,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub order: ModelOrder,
    pub path: Vec<SelectionStep>,
    /// Criterion used for the deletions: `n ln(RSS/n) + k ln n` or
    /// `-2 loglik + k ln n`.
    pub criterion: String,
    /// Whether candidate scores came from the quadratic approximation.
    pub approximate: bool,
    /// Exact fit of the selected order.
    pub fit: FitResult,
    /// Both BIC forms at the selected order (the Poisson one only when every
    /// fitted mean is positive).
    pub bic_gaussian: f64,
    pub bic_poisson: Option<f64>,
    pub n_obs: usize,
}

/// JSON form of a selection. `order` is the selected order with empty
/// trailing lags dropped (the one to fit); `selected_order` keeps all
/// `max_lag` lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub model: ModelKind,
    pub method: Method,
    pub criterion: String,
    pub approximate: bool,
    pub max_lag: usize,
    pub n_obs: usize,
    pub order: ModelOrder,
    pub selected_order: ModelOrder,
    pub path: Vec<SelectionStep>,
    pub bic_gaussian: f64,
    pub bic_poisson: Option<f64>,
}

impl Selection {
    pub fn to_document(&self) -> SelectionDocument {
        SelectionDocument {
            model: self.fit.model,
            method: self.fit.method,
            criterion: self.criterion.clone(),
            approximate: self.approximate,
            max_lag: self.order.lags,
            n_obs: self.n_obs,
            order: trim_order(&self.order),
            selected_order: self.order.clone(),
            path: self.path.clone(),
            bic_gaussian: self.bic_gaussian,
            bic_poisson: self.bic_poisson,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

/// Reads an order from a selection document or a bare order object.
pub fn order_from_json(text: &str) -> Result<ModelOrder> {
    if let Ok(doc) = serde_json::from_str::<SelectionDocument>(text) {
        return Ok(doc.order);
    }
    let order: ModelOrder = serde_json::from_str(text)?;
    order.validate()?;
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Alpha(usize),
    Stage(usize),
}

fn unit_name(u: Unit, order: &ModelOrder) -> String {
    match u {
        Unit::Alpha(j) => format!("alpha_{j}"),
        Unit::Stage(j) => format!("beta_{j}_{}", order.stages[j - 1]),
    }
}

fn units(order: &ModelOrder) -> Vec<Unit> {
    let mut v = Vec::new();
    for j in 1..=order.lags {
        if order.alpha_mask[j - 1] {
            v.push(Unit::Alpha(j));
        }
        if order.stages[j - 1] > 0 {
            v.push(Unit::Stage(j));
        }
    }
    v
}

fn delete(order: &ModelOrder, u: Unit) -> ModelOrder {
    let mut o = order.clone();
    match u {
        Unit::Alpha(j) => o.alpha_mask[j - 1] = false,
        Unit::Stage(j) => o.stages[j - 1] -= 1,
    }
    o
}

/// Objective of a column subset, in one of the scoring regimes.
struct Scorer {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
    /// Objective at the unrestricted solution plus the constant making the
    /// quadratic exact there (linear: `yᵀy`).
    offset: f64,
    bounds: Option<Vec<Bound>>,
    quadratic: bool,
}

impl Scorer {
    fn objective(&self, cols: &[usize]) -> Option<f64> {
        if cols.is_empty() {
            return Some(self.offset);
        }
        let g = self.gram.select_rows(cols).select_columns(cols);
        let c = self.rhs.select_rows(cols);
        let beta = match &self.bounds {
            Some(b) => {
                let sub: Vec<Bound> = cols.iter().map(|&k| b[k]).collect();
                box_least_squares(&g, &c, &sub, None).ok()?.beta
            }
            None => solve_gram(&g, &c, None).ok()?,
        };
        // offset - 2cᵀb + bᵀGb, halved for the quadratic surrogate
        let q = beta.dot(&(&g * &beta)) - 2.0 * c.dot(&beta);
        Some(if self.quadratic {
            self.offset + 0.5 * q
        } else {
            (self.offset + q).max(0.0)
        })
    }
}

/// Backward BIC selection starting from `I_j = 1`, `s_j = start_stage` for
/// every lag `j <= max_p`. When no deletion improves BIC the current order is
/// returned; deleting every term leaves the intercept-only model.
pub fn backward_bic_select(series: &CountSeries, net: &Network, max_p: usize, spec: &SelectionSpec) -> Result<Selection> {
    if max_p == 0 {
        return Err(Error::InvalidArgument("maximum lag must be >= 1".into()));
    }
    if spec.model == ModelKind::Pnar {
        return Err(Error::InvalidArgument("PNAR is fitted at the fixed order p = 1".into()));
    }
    let intercept = if spec.model == ModelKind::Gnari {
        Intercept::InnovationMean
    } else {
        Intercept::Additive
    };
    let s0 = spec.start_stage.min(net.diameter());
    let full = ModelOrder::new(vec![s0; max_p])
        .with_intercept(intercept)
        .local_intercept(spec.local_intercept);
    full.validate_for(net)?;
    let design = Design::new(series, net, &full)?;
    let n = design.n_obs();
    let nf = n as f64;
    let ln_n = nf.ln();

    let (scorer, approximate) = match spec.model {
        ModelKind::Gnar | ModelKind::Gnari => {
            let bounds = (spec.model == ModelKind::Gnari)
                .then(|| design.terms.iter().map(gnari_bound).collect::<Vec<_>>());
            (
                Scorer {
                    gram: design.x.tr_mul(&design.x),
                    rhs: design.x.tr_mul(&design.y),
                    offset: design.y.norm_squared(),
                    bounds,
                    quadratic: false,
                },
                false,
            )
        }
        _ => (ngnar_scorer(series, net, &full, &design, spec)?, true),
    };
    let bic = |obj: f64, k: usize| {
        if spec.likelihood_based() {
            2.0 * obj + k as f64 * ln_n
        } else {
            nf * (obj.max(f64::MIN_POSITIVE) / nf).ln() + k as f64 * ln_n
        }
    };
    let columns = |order: &ModelOrder| -> Vec<usize> {
        order
            .layout(series.node_count())
            .iter()
            .map(|t| design.terms.iter().position(|u| u == t).expect("sub-order term"))
            .collect()
    };

    let mut order = full.clone();
    let cols = columns(&order);
    let mut current = bic(
        scorer
            .objective(&cols)
            .ok_or_else(|| Error::Numerical("full-order fit failed".into()))?,
        cols.len(),
    );
    let mut path = vec![SelectionStep {
        removed: "full".into(),
        bic: current,
        params: cols.len(),
    }];
    loop {
        let mut best: Option<(f64, Unit, usize)> = None;
        for u in units(&order) {
            let cand = delete(&order, u);
            let cols = columns(&cand);
            if let Some(obj) = scorer.objective(&cols) {
                let b = bic(obj, cols.len());
                if best.is_none_or(|(bb, _, _)| b < bb) {
                    best = Some((b, u, cols.len()));
                }
            }
        }
        match best {
            Some((b, u, k)) if b < current => {
                path.push(SelectionStep {
                    removed: unit_name(u, &order),
                    bic: b,
                    params: k,
                });
                order = delete(&order, u);
                current = b;
            }
            _ => break,
        }
    }

    let fit = refit(series, net, &order, spec)?;
    let (bic_gaussian, bic_poisson) = both_bics(series, net, &fit)?;
    Ok(Selection {
        order,
        path,
        criterion: if spec.likelihood_based() {
            "-2 loglik + k ln n".into()
        } else {
            "n ln(RSS/n) + k ln n".into()
        },
        approximate,
        fit,
        bic_gaussian,
        bic_poisson,
        n_obs: n,
    })
}

/// Quadratic surrogate `F(b) ≈ F(b̂) + ½ (b - b̂)ᵀ H (b - b̂)` around the
/// full-order NGNAR fit, with `H` the Fisher information (likelihood) or the
/// Gauss-Newton Hessian (least squares). Restricting to a column subset and
/// minimising the surrogate gives the Wald-type objective increase.
fn ngnar_scorer(
    series: &CountSeries,
    net: &Network,
    full: &ModelOrder,
    design: &Design,
    spec: &SelectionSpec,
) -> Result<Scorer> {
    let rf = spec.response;
    let fit = match spec.method {
        Method::Cmle => fit_ngnar_cmle(series, net, full, rf, &spec.ngnar)?,
        _ => fit_ngnar_cls(series, net, full, rf, &spec.ngnar)?,
    };
    let beta = DVector::from_column_slice(fit.params.values());
    let eta = &design.x * &beta;
    let (w, f_full) = if spec.likelihood_based() {
        let w = eta.map(|e| rf.grad(e).powi(2) / rf.value(e).max(1e-12));
        (w, -fit.log_likelihood.unwrap_or(f64::NAN))
    } else {
        (eta.map(|e| 2.0 * rf.grad(e).powi(2)), fit.objective)
    };
    let h = weighted_gram(&design.x, &w) * design.n_obs() as f64;
    let c = &h * &beta;
    // F(b) = F_full - ½b̂ᵀHb̂ + ½(bᵀHb - 2cᵀb) + ½ b̂ᵀHb̂ ; the scorer adds ½(...)
    let offset = f_full + 0.5 * beta.dot(&c);
    Ok(Scorer {
        gram: h,
        rhs: c,
        offset,
        bounds: None,
        quadratic: true,
    })
}

fn refit(series: &CountSeries, net: &Network, order: &ModelOrder, spec: &SelectionSpec) -> Result<FitResult> {
    match (spec.model, spec.method) {
        (ModelKind::Gnar, _) => fit_gnar_cls(series, net, order),
        (ModelKind::Gnari, _) => fit_gnari_cls(series, net, order),
        (ModelKind::Ngnar, Method::Cmle) => fit_ngnar_cmle(series, net, order, spec.response, &spec.ngnar),
        (ModelKind::Ngnar, _) => fit_ngnar_cls(series, net, order, spec.response, &spec.ngnar),
        (ModelKind::Pnar, _) => Err(Error::InvalidArgument("PNAR order is fixed".into())),
    }
}

/// Gaussian-style and Poisson BIC of a fitted order.
pub fn both_bics(series: &CountSeries, net: &Network, fit: &FitResult) -> Result<(f64, Option<f64>)> {
    let design = Design::new(series, net, &fit.order)?;
    let n = design.n_obs() as f64;
    let k = fit.params.len() as f64;
    let rf = fit.response;
    let mu = (&design.x * DVector::from_column_slice(fit.params.values())).map(|e| rf.value(e));
    let rss = (&design.y - &mu).norm_squared();
    let gaussian = n * (rss.max(f64::MIN_POSITIVE) / n).ln() + k * n.ln();
    let poisson = if mu.iter().all(|&m| m > 0.0) {
        let ll: f64 = design
            .y
            .iter()
            .zip(mu.iter())
            .map(|(&y, &m)| y * m.ln() - m)
            .sum::<f64>()
            - log_factorial_sum(design.y.as_slice());
        Some(-2.0 * ll + k * n.ln())
    } else {
        None
    };
    Ok((gaussian, poisson))
}

/// Drops trailing lags with no remaining term (keeping at least one lag).
pub fn trim_order(order: &ModelOrder) -> ModelOrder {
    let mut o = order.clone();
    while o.lags > 1 && !o.alpha_mask[o.lags - 1] && o.stages[o.lags - 1] == 0 {
        o.lags -= 1;
        o.alpha_mask.pop();
        o.stages.pop();
    }
    o
}

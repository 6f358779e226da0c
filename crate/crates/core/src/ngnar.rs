//! Nonlinear network autoregression for counts: Poisson draws around a
//! response function of the linear network predictor.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{forecast_means, CountSeries, Design, Intercept, ModelOrder, ParamVector};
use crate::dists::poisson_sample;
use crate::error::{Error, Result};
use crate::fit::{log_factorial_sum, FitResult, Method, ModelKind};
use crate::network::Network;
use crate::optimize::{adam_minimize_whitened, solve_gram, AdamOutcome, OptimizerConfig};

/// Largest linear predictor accepted by the exponential response.
pub const EXP_CAP: f64 = 700.0;

/// Above `c x > SOFTPLUS_LINEAR` softplus equals `x` to double precision.
const SOFTPLUS_LINEAR: f64 = 36.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResponseFunction {
    Identity,
    Exponential,
    Relu,
    /// `c⁻¹ ln(1 + exp(c x))`
    Softplus { c: f64 },
}

impl Default for ResponseFunction {
    fn default() -> Self {
        ResponseFunction::Softplus { c: 1.0 }
    }
}

impl std::str::FromStr for ResponseFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(c) = s.strip_prefix("softplus") {
            let c = c.trim_start_matches([':', '=', '(']).trim_end_matches(')');
            let c = if c.is_empty() {
                1.0
            } else {
                c.parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("softplus constant {c:?}")))?
            };
            if !(c > 0.0) {
                return Err(Error::InvalidArgument("softplus constant must be positive".into()));
            }
            return Ok(ResponseFunction::Softplus { c });
        }
        match s.as_str() {
            "identity" => Ok(ResponseFunction::Identity),
            "exp" | "exponential" => Ok(ResponseFunction::Exponential),
            "relu" => Ok(ResponseFunction::Relu),
            other => Err(Error::InvalidArgument(format!("unknown response function {other:?}"))),
        }
    }
}

impl std::fmt::Display for ResponseFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResponseFunction::Identity => f.write_str("identity"),
            ResponseFunction::Exponential => f.write_str("exponential"),
            ResponseFunction::Relu => f.write_str("relu"),
            ResponseFunction::Softplus { c } => write!(f, "softplus:{c}"),
        }
    }
}

impl ResponseFunction {
    /// Evaluates the response, reporting exponential overflow.
    pub fn apply(&self, x: f64) -> Result<f64> {
        if let ResponseFunction::Exponential = self {
            if x > EXP_CAP {
                return Err(Error::Saturation(x));
            }
        }
        Ok(self.value(x))
    }

    /// Saturating evaluation: the exponential is capped at `exp(EXP_CAP)`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ResponseFunction::Identity => x,
            ResponseFunction::Exponential => x.min(EXP_CAP).exp(),
            ResponseFunction::Relu => x.max(0.0),
            ResponseFunction::Softplus { c } => {
                let cx = c * x;
                if cx > SOFTPLUS_LINEAR {
                    x
                } else if cx > 0.0 {
                    x + (-cx).exp().ln_1p() / c
                } else {
                    cx.exp().ln_1p() / c
                }
            }
        }
    }

    /// First derivative.
    #[inline]
    pub fn grad(&self, x: f64) -> f64 {
        match *self {
            ResponseFunction::Identity => 1.0,
            ResponseFunction::Exponential => x.min(EXP_CAP).exp(),
            ResponseFunction::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ResponseFunction::Softplus { c } => 1.0 / (1.0 + (-c * x).exp()),
        }
    }

    /// Strictly positive everywhere, as the Poisson likelihood requires.
    pub fn is_positive(&self) -> bool {
        matches!(
            self,
            ResponseFunction::Exponential | ResponseFunction::Softplus { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgnarModel {
    pub net: Network,
    pub order: ModelOrder,
    pub params: ParamVector,
    pub response: ResponseFunction,
}

impl NgnarModel {
    pub fn new(net: Network, order: ModelOrder, params: ParamVector, response: ResponseFunction) -> Result<Self> {
        order.validate_for(&net)?;
        if params.len() != order.n_params(net.node_count()) {
            return Err(Error::Dimension("parameter vector does not match the order".into()));
        }
        Ok(Self {
            net,
            order,
            params,
            response,
        })
    }

    /// Global NGNAR with additive intercept `alpha_0`.
    pub fn global(
        net: Network,
        stages: Vec<usize>,
        alpha: &[f64],
        beta: &[Vec<f64>],
        alpha0: f64,
        response: ResponseFunction,
    ) -> Result<Self> {
        let order = ModelOrder::new(stages).with_intercept(Intercept::Additive);
        let params = ParamVector::global(&order, net.node_ids(), alpha, beta, alpha0, |_| {
            crate::design::UNBOUNDED
        })?;
        Self::new(net, order, params, response)
    }

    fn mean_from(&self, eta: f64) -> Result<f64> {
        let m = self.response.apply(eta)?;
        if !m.is_finite() || m < 0.0 {
            return Err(Error::Numerical(format!(
                "conditional mean {m} at linear predictor {eta} is not a valid Poisson mean"
            )));
        }
        Ok(m)
    }

    /// One-step conditional means given the last `p` columns of `history`.
    pub fn conditional_mean(&self, history: &CountSeries) -> Result<Vec<f64>> {
        let f = forecast_means(&self.net, &self.order, &self.params, history, 1, |e| {
            self.response.value(e)
        })?;
        Ok(f.column(0).iter().copied().collect())
    }

    /// Simulates `len` steps after discarding `burn_in`. The first `p`
    /// states are independent Poisson(g(alpha_{i,0})) draws.
    pub fn simulate<R: Rng + ?Sized>(&self, len: usize, burn_in: usize, rng: &mut R) -> Result<CountSeries> {
        let n = self.net.node_count();
        let p = self.order.lags;
        let c = self.params.coefficients(&self.order, n);
        let mut states: Vec<Vec<f64>> = Vec::with_capacity(p + burn_in + len);
        for _ in 0..p {
            let mut s = Vec::with_capacity(n);
            for i in 0..n {
                s.push(poisson_sample(self.mean_from(c.intercept[i])?, rng)? as f64);
            }
            states.push(s);
        }
        let mut out = CountSeries::zeros(n, len);
        let mut eta = vec![0.0; n];
        for step in 0..burn_in + len {
            let k = states.len();
            let lags: Vec<&[f64]> = (1..=p).map(|j| states[k - j].as_slice()).collect();
            c.linear_predictor(&self.net, &lags, &mut eta);
            let mut next = Vec::with_capacity(n);
            for &e in &eta {
                next.push(poisson_sample(self.mean_from(e)?, rng)? as f64);
            }
            if step >= burn_in {
                for (i, &v) in next.iter().enumerate() {
                    out.set(i, step - burn_in, v as u64);
                }
            }
            states.push(next);
            if states.len() > 4 * p + 64 {
                states.drain(..states.len() - p);
            }
        }
        let ids = self.net.node_ids().to_vec();
        out.with_node_ids(ids)
    }
}

/// Residual sum of squares `||Y − g(Xb)||²`; writes
/// `−2Xᵀ[(Y − g(Xb)) ⊙ g'(Xb)]` into `grad`.
pub fn cls_objective(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    response: ResponseFunction,
    beta: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    let eta = x * DVector::from_column_slice(beta);
    let mut w = DVector::zeros(eta.len());
    let mut rss = 0.0;
    for r in 0..eta.len() {
        let mu = response.apply(eta[r])?;
        let resid = y[r] - mu;
        rss += resid * resid;
        w[r] = -2.0 * resid * response.grad(eta[r]);
    }
    grad.copy_from_slice(x.tr_mul(&w).as_slice());
    Ok(rss)
}

/// Poisson negative log-likelihood without the `ln y!` constant,
/// `sum (mu − y ln mu)` with `mu = g(Xb)`; writes `Xᵀ[(1 − Y/mu) ⊙ g'(Xb)]`.
pub fn poisson_nll(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    response: ResponseFunction,
    beta: &[f64],
    grad: &mut [f64],
) -> Result<f64> {
    let eta = x * DVector::from_column_slice(beta);
    let mut w = DVector::zeros(eta.len());
    let mut nll = 0.0;
    for r in 0..eta.len() {
        let mu = response.apply(eta[r])?;
        if !(mu > 0.0) {
            if y[r] == 0.0 && mu == 0.0 {
                continue;
            }
            return Err(Error::Numerical(format!(
                "non-positive Poisson mean {mu} at row {r}"
            )));
        }
        nll += mu - y[r] * mu.ln();
        w[r] = (1.0 - y[r] / mu) * response.grad(eta[r]);
    }
    grad.copy_from_slice(x.tr_mul(&w).as_slice());
    Ok(nll)
}

/// Estimation settings for NGNAR fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgnarFitOptions {
    pub optimizer: OptimizerConfig,
    /// Extra randomly perturbed starts besides the deterministic one.
    pub multi_start: usize,
    pub seed: u64,
}

impl Default for NgnarFitOptions {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            multi_start: 0,
            seed: 0,
        }
    }
}

/// Weighted Gram `Xᵀ diag(w) X / n`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (c, mut col) in xw.column_iter_mut().enumerate() {
        let _ = c;
        col.component_mul_assign(w);
    }
    x.tr_mul(&xw) / x.nrows().max(1) as f64
}

fn run_starts<F>(
    mut objective: F,
    init: &[f64],
    metric: &DMatrix<f64>,
    options: &NgnarFitOptions,
) -> Result<AdamOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let mut best = adam_minimize_whitened(&mut objective, init, metric, &options.optimizer)?;
    if options.multi_start > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for _ in 0..options.multi_start {
            let start: Vec<f64> = init
                .iter()
                .map(|&v| v + 0.1 * (v.abs() + 0.1) * normal.sample(&mut rng))
                .collect();
            if let Ok(out) = adam_minimize_whitened(&mut objective, &start, metric, &options.optimizer) {
                if out.objective < best.objective {
                    best = out;
                }
            }
        }
    }
    Ok(best)
}

fn poisson_loglik(design: &Design, response: ResponseFunction, beta: &[f64]) -> Option<f64> {
    let mut g = vec![0.0; beta.len()];
    poisson_nll(&design.x, &design.y, response, beta, &mut g)
        .ok()
        .map(|nll| -nll - log_factorial_sum(design.y.as_slice()))
}

fn ngnar_order(order: &ModelOrder) -> ModelOrder {
    let mut o = order.clone();
    if o.intercept == Intercept::InnovationMean {
        o.intercept = Intercept::Additive;
    }
    o
}

fn normal_equation_start(design: &Design) -> Result<DVector<f64>> {
    solve_gram(&design.x.tr_mul(&design.x), &design.x.tr_mul(&design.y), Some(&design.names))
}

/// Conditional least squares by ADAM, started from the normal-equation
/// solution. The optimiser works on `RSS / n` so the gradient tolerance is
/// per observation.
pub fn fit_ngnar_cls(
    series: &CountSeries,
    net: &Network,
    order: &ModelOrder,
    response: ResponseFunction,
    options: &NgnarFitOptions,
) -> Result<FitResult> {
    let order = ngnar_order(order);
    let design = Design::new(series, net, &order)?;
    let init = normal_equation_start(&design)?;
    fit_cls_from(&design, &order, series, response, init.as_slice(), options)
}

fn fit_cls_from(
    design: &Design,
    order: &ModelOrder,
    series: &CountSeries,
    response: ResponseFunction,
    init: &[f64],
    options: &NgnarFitOptions,
) -> Result<FitResult> {
    let n = design.n_obs() as f64;
    let eta0 = &design.x * DVector::from_column_slice(init);
    let w = eta0.map(|e| response.grad(e).powi(2).max(1e-6));
    let metric = weighted_gram(&design.x, &w);
    let out = run_starts(
        |b: &[f64], g: &mut [f64]| {
            let v = cls_objective(&design.x, &design.y, response, b, g)?;
            g.iter_mut().for_each(|x| *x /= n);
            Ok(v / n)
        },
        init,
        &metric,
        options,
    )?;
    finish(design, order, series, response, Method::Cls, out, out_objective_scale(n))
}

fn out_objective_scale(n: f64) -> f64 {
    n
}

fn finish(
    design: &Design,
    order: &ModelOrder,
    series: &CountSeries,
    response: ResponseFunction,
    method: Method,
    out: AdamOutcome,
    scale: f64,
) -> Result<FitResult> {
    let params = ParamVector::unbounded(order, series.node_ids(), out.solution.clone())?;
    let mut notes = Vec::new();
    if !out.converged {
        notes.push(format!(
            "optimizer stopped after {} evaluations with gradient norm {:.3e}",
            out.iterations, out.grad_norm
        ));
    }
    let log_likelihood = poisson_loglik(design, response, &out.solution);
    Ok(FitResult {
        model: ModelKind::Ngnar,
        method,
        order: order.clone(),
        params,
        response,
        objective: match method {
            Method::Cmle => -log_likelihood.unwrap_or(f64::NAN),
            _ => out.objective * scale,
        },
        converged: out.converged,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        n_obs: design.n_obs(),
        log_likelihood,
        covariance: None,
        notes,
    })
}

/// Conditional maximum likelihood under Poisson conditionals, started from
/// the CLS estimate. Requires a strictly positive response.
pub fn fit_ngnar_cmle(
    series: &CountSeries,
    net: &Network,
    order: &ModelOrder,
    response: ResponseFunction,
    options: &NgnarFitOptions,
) -> Result<FitResult> {
    if !response.is_positive() {
        return Err(Error::InvalidArgument(format!(
            "conditional MLE needs a strictly positive response, got {response}"
        )));
    }
    let order = ngnar_order(order);
    let design = Design::new(series, net, &order)?;
    let init = normal_equation_start(&design)?;
    let cls = fit_cls_from(&design, &order, series, response, init.as_slice(), options)?;
    fit_cmle_from(&design, &order, series, response, cls.params.values(), options)
}

pub(crate) fn fit_cmle_from(
    design: &Design,
    order: &ModelOrder,
    series: &CountSeries,
    response: ResponseFunction,
    init: &[f64],
    options: &NgnarFitOptions,
) -> Result<FitResult> {
    let n = design.n_obs() as f64;
    let eta0 = &design.x * DVector::from_column_slice(init);
    let w = eta0.map(|e| {
        let mu = response.value(e).max(1e-8);
        (response.grad(e).powi(2) / mu).max(1e-8)
    });
    let metric = weighted_gram(&design.x, &w);
    let out = run_starts(
        |b: &[f64], g: &mut [f64]| {
            let v = poisson_nll(&design.x, &design.y, response, b, g)?;
            g.iter_mut().for_each(|x| *x /= n);
            Ok(v / n)
        },
        init,
        &metric,
        options,
    )?;
    finish(design, order, series, response, Method::Cmle, out, n)
}

/// Recursive mean forecasts `g(eta)` over `horizon` steps.
pub fn predict_ngnar(fit: &FitResult, net: &Network, history: &CountSeries, horizon: usize) -> Result<DMatrix<f64>> {
    let rf = fit.response;
    forecast_means(net, &fit.order, &fit.params, history, horizon, |e| rf.value(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::finite_diff_grad_check;

    #[test]
    fn response_values() {
        let sp = ResponseFunction::Softplus { c: 1.0 };
        assert!((sp.value(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((sp.value(50.0) - 50.0).abs() < 1e-12);
        assert_eq!(ResponseFunction::Relu.value(-3.0), 0.0);
        assert_eq!(ResponseFunction::Identity.value(-3.0), -3.0);
        assert!(matches!(
            ResponseFunction::Exponential.apply(800.0),
            Err(Error::Saturation(_))
        ));
        assert!((sp.value(10.0) - 10.000_045_398_899_218).abs() < 1e-12);
    }

    #[test]
    fn response_parse_roundtrip() {
        for rf in [
            ResponseFunction::Identity,
            ResponseFunction::Exponential,
            ResponseFunction::Relu,
            ResponseFunction::Softplus { c: 2.5 },
        ] {
            assert_eq!(rf.to_string().parse::<ResponseFunction>().unwrap(), rf);
        }
        assert!("softplus:-1".parse::<ResponseFunction>().is_err());
        assert!("logit".parse::<ResponseFunction>().is_err());
    }

    #[test]
    fn softplus_relu_bound_on_grid() {
        for &c in &[0.5, 1.0, 4.0, 20.0] {
            let sp = ResponseFunction::Softplus { c };
            for k in -2000..=2000 {
                let x = k as f64 / 100.0;
                let gap = sp.value(x) - ResponseFunction::Relu.value(x);
                assert!(gap >= 0.0 && gap <= std::f64::consts::LN_2 / c + 1e-15);
                assert!(sp.value(x) > 0.0 || c * x < -700.0);
            }
        }
    }

    #[test]
    fn response_gradients_match_differences() {
        let mut s = 12345u64;
        for rf in [
            ResponseFunction::Softplus { c: 1.0 },
            ResponseFunction::Softplus { c: 3.0 },
            ResponseFunction::Exponential,
            ResponseFunction::Identity,
        ] {
            for _ in 0..100 {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let x = ((s >> 11) as f64 / (1u64 << 53) as f64) * 20.0 - 10.0;
                let h = 1e-6;
                let fd = (rf.value(x + h) - rf.value(x - h)) / (2.0 * h);
                let g = rf.grad(x);
                assert!((g - fd).abs() <= 1e-6 * g.abs().max(1e-3), "{rf} at {x}");
                if let ResponseFunction::Softplus { .. } = rf {
                    assert!(g > 0.0 && g < 1.0);
                }
            }
        }
    }

    fn fixture() -> (Network, CountSeries) {
        let net = Network::five_node();
        let model = NgnarModel::global(
            net.clone(),
            vec![1],
            &[0.5],
            &[vec![-0.4]],
            10.0,
            ResponseFunction::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = model.simulate(120, 50, &mut rng).unwrap();
        (net, s)
    }

    #[test]
    fn objective_gradients() {
        let (net, s) = fixture();
        let order = ModelOrder::new(vec![1]).with_intercept(Intercept::Additive);
        let d = Design::new(&s, &net, &order).unwrap();
        let rf = ResponseFunction::default();
        let beta = [0.45, -0.3, 9.0];
        let mut g = [0.0; 3];
        cls_objective(&d.x, &d.y, rf, &beta, &mut g).unwrap();
        let f = |b: &[f64]| cls_objective(&d.x, &d.y, rf, b, &mut [0.0; 3]).unwrap();
        assert!(finite_diff_grad_check(f, &g, &beta, 1e-6) < 1e-5);
        poisson_nll(&d.x, &d.y, rf, &beta, &mut g).unwrap();
        let f = |b: &[f64]| poisson_nll(&d.x, &d.y, rf, b, &mut [0.0; 3]).unwrap();
        assert!(finite_diff_grad_check(f, &g, &beta, 1e-6) < 1e-5);
    }

    #[test]
    fn all_zero_coefficients_are_iid() {
        let net = Network::five_node();
        let model = NgnarModel::global(net, vec![1], &[0.0], &[vec![0.0]], 10.0, ResponseFunction::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = model.simulate(20_000, 0, &mut rng).unwrap();
        assert!((s.mean() - 10.000_045).abs() < 0.05, "{}", s.mean());
        let f = predict_ngnar(
            &FitResult {
                model: ModelKind::Ngnar,
                method: Method::Cls,
                order: model.order.clone(),
                params: model.params.clone(),
                response: model.response,
                objective: 0.0,
                converged: true,
                iterations: 0,
                grad_norm: 0.0,
                n_obs: 0,
                log_likelihood: None,
                covariance: None,
                notes: vec![],
            },
            &model.net,
            &s,
            5,
        )
        .unwrap();
        assert!(f.iter().all(|&v| (v - ResponseFunction::default().value(10.0)).abs() < 1e-12));
    }

    #[test]
    fn identity_single_node_fixed_point() {
        let net = Network::from_adjacency(vec![vec![0]]).unwrap();
        let model = NgnarModel::global(net, vec![0], &[0.5], &[vec![]], 3.0, ResponseFunction::Identity).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = model.simulate(100_000, 100, &mut rng).unwrap();
        // mu = 3 + 0.5 mu
        assert!((s.mean() - 6.0).abs() < 0.05, "{}", s.mean());
    }

    #[test]
    fn noiseless_recovery() {
        let (net, s) = fixture();
        let order = ModelOrder::new(vec![1]).with_intercept(Intercept::Additive);
        let d = Design::new(&s, &net, &order).unwrap();
        let truth = [0.5, -0.4, 10.0];
        let rf = ResponseFunction::default();
        let y = (&d.x * DVector::from_column_slice(&truth)).map(|e| rf.value(e));
        let design = Design { y, ..d };
        let init = normal_equation_start(&design).unwrap();
        let fit = fit_cls_from(&design, &order, &s, rf, init.as_slice(), &NgnarFitOptions::default()).unwrap();
        assert!(fit.converged);
        for (a, b) in fit.params.values().iter().zip(truth) {
            assert!((a - b).abs() < 1e-4, "{:?}", fit.params.values());
        }
    }

    #[test]
    fn saturated_single_observation() {
        let net = Network::from_adjacency(vec![vec![0]]).unwrap();
        let s = CountSeries::from_node_rows(vec![vec![4, 7]]).unwrap();
        let order = ModelOrder::new(vec![0])
            .with_alpha_mask(vec![false])
            .with_intercept(Intercept::Additive);
        let fit = fit_ngnar_cmle(&s, &net, &order, ResponseFunction::default(), &NgnarFitOptions::default()).unwrap();
        let mu = ResponseFunction::default().value(fit.params.values()[0]);
        assert!((mu - 7.0).abs() < 1e-5, "{mu}");
        assert!(fit.converged);
    }

    #[test]
    fn cmle_rejects_relu() {
        let (net, s) = fixture();
        let order = ModelOrder::new(vec![1]);
        assert!(fit_ngnar_cmle(&s, &net, &order, ResponseFunction::Relu, &NgnarFitOptions::default()).is_err());
    }

    proptest::proptest! {
        #[test]
        fn softplus_invariants(x in -30.0f64..30.0, c in 0.1f64..20.0) {
            let sp = ResponseFunction::Softplus { c };
            let v = sp.value(x);
            let g = sp.grad(x);
            proptest::prop_assert!(v > 0.0);
            proptest::prop_assert!(g > 0.0 && g < 1.0 || (c * x).abs() > 30.0);
            proptest::prop_assert!(v - x.max(0.0) <= std::f64::consts::LN_2 / c + 1e-12);
            let h = 1e-6 / c;
            let fd = (sp.value(x + h) - sp.value(x - h)) / (2.0 * h);
            proptest::prop_assert!((g - fd).abs() <= 1e-6 * g.abs().max(1e-3));
        }
    }
}

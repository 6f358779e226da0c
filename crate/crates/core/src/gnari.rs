//! Poisson-GNARI: network autoregression where every coefficient acts by
//! binomial thinning, so the process stays integer valued.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::design::{
    companion_matrix, forecast_means, stationary_mean, Bound, CountSeries, Design, Intercept, ModelOrder,
    ParamVector, Term,
};
use crate::dists::{add_bernoulli_repeated, convolve, poisson_pmf_truncated, thin_unchecked};
use crate::error::{Error, Result};
use crate::fit::{FitResult, Method, ModelKind};
use crate::network::Network;
use crate::ngnar::ResponseFunction;
use crate::optimize::{box_least_squares, solve_gram};

/// Stationary-equation iteration stops once the update is below this,
/// relative to the largest entry.
pub const AUTOCOV_TOL: f64 = 1e-12;

/// Box for each GNARI parameter: thinning probabilities in `[0, 1]`,
/// innovation means non-negative.
pub fn gnari_bound(term: &Term) -> Bound {
    match term {
        Term::Alpha { .. } | Term::Beta { .. } => (0.0, 1.0),
        Term::Intercept { .. } => (0.0, f64::INFINITY),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnariModel {
    pub net: Network,
    pub order: ModelOrder,
    pub params: ParamVector,
}

impl GnariModel {
    pub fn new(net: Network, order: ModelOrder, params: ParamVector) -> Result<Self> {
        order.validate_for(&net)?;
        if order.intercept == Intercept::Additive {
            return Err(Error::InvalidArgument(
                "GNARI takes an innovation mean, not an additive intercept".into(),
            ));
        }
        let n = net.node_count();
        if params.len() != order.n_params(n) {
            return Err(Error::Dimension("parameter vector does not match the order".into()));
        }
        for ((t, &v), name) in params.terms().iter().zip(params.values()).zip(params.names()) {
            let (lo, hi) = gnari_bound(t);
            if !(v >= lo && v <= hi) {
                return Err(Error::InvalidArgument(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(Self { net, order, params })
    }

    /// GNARI(p, [s]) with global coefficients and a common innovation mean.
    pub fn global(net: Network, stages: Vec<usize>, alpha: &[f64], beta: &[Vec<f64>], lambda: f64) -> Result<Self> {
        let order = ModelOrder::new(stages);
        let params = ParamVector::global(&order, net.node_ids(), alpha, beta, lambda, gnari_bound)?;
        Self::new(net, order, params)
    }

    pub fn from_fit(fit: &FitResult, net: &Network) -> Result<Self> {
        Self::new(net.clone(), fit.order.clone(), fit.params.clone())
    }

    fn lag_window(&self, history: &CountSeries) -> Result<Vec<Vec<u64>>> {
        let p = self.order.lags;
        if history.len() < p {
            return Err(Error::ShortSeries {
                len: history.len(),
                lags: p,
            });
        }
        if history.node_count() != self.net.node_count() {
            return Err(Error::Dimension("history and network node counts differ".into()));
        }
        Ok((1..=p).map(|j| history.column(history.len() - j)).collect())
    }

    /// One-step conditional means from the last `p` columns of `history`.
    pub fn conditional_mean(&self, history: &CountSeries) -> Result<Vec<f64>> {
        let lags = self.lag_window(history)?;
        let lags: Vec<Vec<f64>> = lags.iter().map(|l| l.iter().map(|&x| x as f64).collect()).collect();
        let refs: Vec<&[f64]> = lags.iter().map(|l| l.as_slice()).collect();
        let mut out = vec![0.0; self.net.node_count()];
        self.params
            .coefficients(&self.order, self.net.node_count())
            .linear_predictor(&self.net, &refs, &mut out);
        Ok(out)
    }

    /// One-step conditional variances: innovation mean plus the binomial
    /// variances of every thinning.
    pub fn conditional_variance(&self, history: &CountSeries) -> Result<Vec<f64>> {
        let lags = self.lag_window(history)?;
        let lags: Vec<Vec<f64>> = lags.iter().map(|l| l.iter().map(|&x| x as f64).collect()).collect();
        let refs: Vec<&[f64]> = lags.iter().map(|l| l.as_slice()).collect();
        let mut out = vec![0.0; self.net.node_count()];
        conditional_variance_at(&self.net, &self.order, &self.params, &refs, &mut out);
        Ok(out)
    }

    /// Conditional pmf of node `node` (0-based) one step past `history`.
    pub fn conditional_pmf(&self, history: &CountSeries, node: usize, tail_tol: f64) -> Result<ConditionalPmf> {
        if node >= self.net.node_count() {
            return Err(Error::NodeIndex {
                index: node,
                nodes: self.net.node_count(),
            });
        }
        let lags = self.lag_window(history)?;
        pmf_at(&self.net, &self.order, &self.params, &lags, node, tail_tol)
    }

    /// Conditional log-likelihood `sum_{t > p} sum_i ln P(X_{i,t} | past)`
    /// from the exact pmf, each Poisson innovation truncated at `tail_tol`.
    pub fn log_likelihood(&self, series: &CountSeries, tail_tol: f64) -> Result<f64> {
        let p = self.order.lags;
        if series.len() <= p {
            return Err(Error::ShortSeries {
                len: series.len(),
                lags: p,
            });
        }
        let mut ll = 0.0;
        for t in p..series.len() {
            let lags: Vec<Vec<u64>> = (1..=p).map(|j| series.column(t - j)).collect();
            for i in 0..series.node_count() {
                let pmf = pmf_at(&self.net, &self.order, &self.params, &lags, i, tail_tol)?;
                let x = series.get(i, t) as usize;
                ll += pmf.pmf.get(x).copied().unwrap_or(0.0).ln();
            }
        }
        Ok(ll)
    }

    /// Simulates the one-layer thinning form: each neighbour count is
    /// thinned with `beta_{j,r} w_{i,q}`, own lags with `alpha_{i,j}`, and a
    /// Poisson(lambda_i) innovation is added. The `p` initial states are
    /// independent Poisson(lambda_i) draws; `burn_in` steps are discarded.
    pub fn simulate<R: Rng + ?Sized>(&self, len: usize, burn_in: usize, rng: &mut R) -> Result<CountSeries> {
        let n = self.net.node_count();
        let p = self.order.lags;
        let c = self.params.coefficients(&self.order, n);
        let innovations: Vec<Option<Poisson<f64>>> = c
            .intercept
            .iter()
            .map(|&l| {
                if l > 0.0 {
                    Poisson::new(l)
                        .map(Some)
                        .map_err(|e| Error::InvalidArgument(format!("innovation mean {l}: {e}")))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        let draw = |k: usize, rng: &mut R| -> u64 {
            innovations[k].as_ref().map_or(0, |d| d.sample(rng) as u64)
        };
        // stage neighbours with their thinning probabilities, per node/lag
        let thin: Vec<Vec<Vec<(usize, f64)>>> = (0..n)
            .map(|i| {
                (0..p)
                    .map(|j| {
                        let mut v = Vec::new();
                        for (r, &b) in c.beta[j].iter().enumerate() {
                            let stage = self.net.stage(i, r + 1);
                            let w = 1.0 / stage.len().max(1) as f64;
                            v.extend(stage.iter().map(|&q| (q, b * w)));
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let mut states: Vec<Vec<u64>> = (0..p).map(|_| (0..n).map(|i| draw(i, rng)).collect()).collect();
        let mut out = CountSeries::zeros(n, len);
        for step in 0..burn_in + len {
            let k = states.len();
            let mut next = vec![0u64; n];
            for (i, x) in next.iter_mut().enumerate() {
                let mut v = 0;
                for j in 0..p {
                    let lag = &states[k - 1 - j];
                    v += thin_unchecked(c.alpha[j][i], lag[i], rng);
                    for &(q, prob) in &thin[i][j] {
                        v += thin_unchecked(prob, lag[q], rng);
                    }
                }
                *x = v + draw(i, rng);
            }
            if step >= burn_in {
                for (i, &v) in next.iter().enumerate() {
                    out.set(i, step - burn_in, v);
                }
            }
            states.push(next);
            if states.len() > 4 * p + 64 {
                states.drain(..states.len() - p);
            }
        }
        out.with_node_ids(self.net.node_ids().to_vec())
    }

    /// Autocovariances `Gamma(0..=h_max)` of the stationary process.
    ///
    /// The stacked covariance solves
    /// `G = A G Aᵀ + diag(B mu_Y) + Sigma_e` with `B = A ⊙ (1 − A)`; the
    /// fixed point is reached by squaring the iteration map (each pass doubles
    /// the number of accumulated terms) until the update is below
    /// [`AUTOCOV_TOL`]. `Gamma(h)` is the top-left block of `A^h G`.
    pub fn autocovariance(&self, h_max: usize) -> Result<Vec<DMatrix<f64>>> {
        let n = self.net.node_count();
        let p = self.order.lags;
        let c = self.params.coefficients(&self.order, n);
        let mu = stationary_mean(&self.order, &self.params, &self.net, &c.intercept)?;
        let a = companion_matrix(&self.order, &self.params, &self.net);
        let b = a.map(|v| v * (1.0 - v));
        let mu_y = DVector::from_iterator(n * p, (0..p).flat_map(|_| mu.iter().copied()));
        let mut diag = &b * &mu_y;
        for i in 0..n {
            diag[i] += c.intercept[i];
        }
        let mut gamma = DMatrix::from_diagonal(&diag);
        let mut power = a.clone();
        let mut converged = false;
        for _ in 0..200 {
            let inc = &power * &gamma * power.transpose();
            gamma += &inc;
            if inc.amax() <= AUTOCOV_TOL * gamma.amax().max(1.0) {
                converged = true;
                break;
            }
            power = &power * &power;
        }
        if !converged {
            return Err(Error::Numerical("autocovariance iteration did not converge".into()));
        }
        gamma = (&gamma + gamma.transpose()) * 0.5;
        let mut out = Vec::with_capacity(h_max + 1);
        let mut g = gamma;
        for h in 0..=h_max {
            if h > 0 {
                g = &a * &g;
            }
            out.push(g.view((0, 0), (n, n)).into_owned());
        }
        Ok(out)
    }
}

/// Normalised conditional pmf on `{0, ..., pmf.len() - 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    pub pmf: Vec<f64>,
    /// Innovation mass dropped before renormalising.
    pub truncated_mass: f64,
}

impl ConditionalPmf {
    pub fn support(&self) -> (usize, usize) {
        (0, self.pmf.len().saturating_sub(1))
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k as f64 - m).powi(2) * p)
            .sum()
    }
}

fn pmf_at(
    net: &Network,
    order: &ModelOrder,
    params: &ParamVector,
    lags: &[Vec<u64>],
    i: usize,
    tail_tol: f64,
) -> Result<ConditionalPmf> {
    if !(tail_tol > 0.0 && tail_tol <= 1e-3) {
        return Err(Error::InvalidArgument(format!(
            "tail tolerance {tail_tol} must lie in (0, 1e-3]"
        )));
    }
    let c = params.coefficients(order, net.node_count());
    let mut pmf = vec![1.0];
    for (j, lag) in lags.iter().enumerate() {
        add_bernoulli_repeated(&mut pmf, c.alpha[j][i], lag[i]);
        for (r, &b) in c.beta[j].iter().enumerate() {
            let stage = net.stage(i, r + 1);
            let w = 1.0 / stage.len().max(1) as f64;
            for &q in stage {
                add_bernoulli_repeated(&mut pmf, b * w, lag[q]);
            }
        }
    }
    let innov = poisson_pmf_truncated(c.intercept[i], tail_tol)?;
    let kept: f64 = innov.iter().sum();
    let mut pmf = convolve(&pmf, &innov);
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|v| *v /= total);
    Ok(ConditionalPmf {
        pmf,
        truncated_mass: (1.0 - kept).max(0.0),
    })
}

/// Conditional variances for all nodes given `lags[j-1]` (node values at lag
/// `j`): `lambda_i + sum_j alpha(1-alpha)X_i + sum_{j,r,q} bw(1-bw)X_q`.
pub(crate) fn conditional_variance_at(
    net: &Network,
    order: &ModelOrder,
    params: &ParamVector,
    lags: &[&[f64]],
    out: &mut [f64],
) {
    let c = params.coefficients(order, net.node_count());
    for (i, o) in out.iter_mut().enumerate() {
        let mut v = c.intercept[i];
        for (j, x) in lags.iter().enumerate() {
            let a = c.alpha[j][i];
            v += a * (1.0 - a) * x[i];
            for (r, &b) in c.beta[j].iter().enumerate() {
                let stage = net.stage(i, r + 1);
                if stage.is_empty() {
                    continue;
                }
                let bw = b / stage.len() as f64;
                v += bw * (1.0 - bw) * stage.iter().map(|&q| x[q]).sum::<f64>();
            }
        }
        *o = v;
    }
}

/// Box-constrained conditional least squares: `alpha, beta in [0, 1]`,
/// `lambda >= 0`. Feasible normal-equation solutions are returned as is.
pub fn fit_gnari_cls(series: &CountSeries, net: &Network, order: &ModelOrder) -> Result<FitResult> {
    let mut order = order.clone();
    if order.intercept == Intercept::Additive {
        order.intercept = Intercept::InnovationMean;
    }
    order.validate_for(net)?;
    let design = Design::new(series, net, &order)?;
    let mut fit = fit_gnari_design(&design, &order, series.node_ids())?;
    match asymptotic_covariance_design(&design, &fit, net, series) {
        Ok(cov) => fit.covariance = Some(cov),
        Err(e) => fit.notes.push(format!("covariance unavailable: {e}")),
    }
    Ok(fit)
}

pub(crate) fn fit_gnari_design(design: &Design, order: &ModelOrder, node_ids: &[String]) -> Result<FitResult> {
    let gram = design.x.tr_mul(&design.x);
    let rhs = design.x.tr_mul(&design.y);
    let bounds: Vec<Bound> = design.terms.iter().map(gnari_bound).collect();
    let sol = box_least_squares(&gram, &rhs, &bounds, Some(&design.names))?;
    let resid = &design.y - &design.x * &sol.beta;
    let params = ParamVector::new(order, node_ids, sol.beta.iter().copied().collect(), bounds)?;
    let mut notes = Vec::new();
    let active: Vec<&str> = params
        .active_bounds()
        .into_iter()
        .map(|k| params.names()[k].as_str())
        .collect();
    if !active.is_empty() {
        notes.push(format!(
            "active bounds at {}: sandwich covariance is not valid there",
            active.join(", ")
        ));
    }
    Ok(FitResult {
        model: ModelKind::Gnari,
        method: Method::ConstrainedCls,
        order: order.clone(),
        params,
        response: ResponseFunction::Identity,
        objective: resid.norm_squared(),
        converged: sol.kkt_residual <= 1e-8,
        iterations: sol.iterations,
        grad_norm: sol.kkt_residual,
        n_obs: design.n_obs(),
        log_likelihood: None,
        covariance: None,
        notes,
    })
}

/// Recursive mean forecasts, N×H.
pub fn predict_gnari(fit: &FitResult, net: &Network, history: &CountSeries, horizon: usize) -> Result<DMatrix<f64>> {
    forecast_means(net, &fit.order, &fit.params, history, horizon, |e| e)
}

/// Plug-in sandwich covariance of the CLS estimator, using the fitted
/// conditional variances as the meat.
pub fn asymptotic_covariance(fit: &FitResult, series: &CountSeries, net: &Network) -> Result<DMatrix<f64>> {
    let design = Design::new(series, net, &fit.order)?;
    asymptotic_covariance_design(&design, fit, net, series)
}

fn asymptotic_covariance_design(
    design: &Design,
    fit: &FitResult,
    net: &Network,
    series: &CountSeries,
) -> Result<DMatrix<f64>> {
    let p = fit.order.lags;
    let n = series.node_count();
    let rows = design.rows_per_node;
    let mut variances = DVector::zeros(design.n_obs());
    let mut v = vec![0.0; n];
    for t in p..series.len() {
        let lags: Vec<Vec<f64>> = (1..=p)
            .map(|j| series.column(t - j).into_iter().map(|x| x as f64).collect())
            .collect();
        let refs: Vec<&[f64]> = lags.iter().map(|l| l.as_slice()).collect();
        conditional_variance_at(net, &fit.order, &fit.params, &refs, &mut v);
        for i in 0..n {
            variances[i * rows + t - p] = v[i].max(0.0);
        }
    }
    sandwich_covariance(&design.x, &variances, rows, Some(&design.names))
}

/// `U⁻¹ R U⁻¹ / n` with `U = XᵀX / n`, `R = Xᵀ diag(v) X / n`, where `n`
/// counts time points (`rows_per_node`).
pub fn sandwich_covariance(
    x: &DMatrix<f64>,
    variances: &DVector<f64>,
    time_points: usize,
    names: Option<&[String]>,
) -> Result<DMatrix<f64>> {
    if variances.len() != x.nrows() {
        return Err(Error::Dimension("one variance per design row is required".into()));
    }
    let nt = time_points.max(1) as f64;
    let u = x.tr_mul(x) / nt;
    let r = crate::ngnar::weighted_gram(x, variances) * (x.nrows() as f64 / nt);
    let k = u.nrows();
    let mut u_inv = DMatrix::zeros(k, k);
    for c in 0..k {
        let mut e = DVector::zeros(k);
        e[c] = 1.0;
        u_inv.set_column(c, &solve_gram(&u, &e, names)?);
    }
    let cov = &u_inv * r * &u_inv / nt;
    Ok((&cov + cov.transpose()) * 0.5)
}

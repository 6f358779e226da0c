//! Comparator models: linear GNAR by least squares and linear Poisson
//! network autoregression of order one (PNAR(1)) by quasi-likelihood.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::design::{
    forecast_means, spectral_radius, CountSeries, Design, Intercept, ModelOrder, ParamVector, Term,
};
use crate::dists::poisson_sample;
use crate::error::{Error, Result};
use crate::fit::{log_factorial_sum, FitResult, Method, ModelKind};
use crate::network::Network;
use crate::ngnar::{weighted_gram, ResponseFunction};
use crate::optimize::{adam_minimize_whitened, solve_gram, OptimizerConfig};

/// Floor applied to PNAR intensities inside the quasi-likelihood.
pub const INTENSITY_FLOOR: f64 = 1e-10;

/// Unconstrained least squares on the shared design; errors are treated as
/// homoskedastic for the reported covariance.
pub fn fit_gnar_cls(series: &CountSeries, net: &Network, order: &ModelOrder) -> Result<FitResult> {
    order.validate_for(net)?;
    let mut order = order.clone();
    if order.intercept == Intercept::InnovationMean {
        order.intercept = Intercept::Additive;
    }
    let design = Design::new(series, net, &order)?;
    fit_gnar_design(&design, &order, series.node_ids())
}

pub(crate) fn fit_gnar_design(design: &Design, order: &ModelOrder, node_ids: &[String]) -> Result<FitResult> {
    let gram = design.x.tr_mul(&design.x);
    let beta = solve_gram(&gram, &design.x.tr_mul(&design.y), Some(&design.names))?;
    let resid = &design.y - &design.x * &beta;
    let rss = resid.norm_squared();
    let k = beta.len();
    let dof = design.n_obs().saturating_sub(k).max(1) as f64;
    let covariance = gram.try_inverse().map(|g| g * (rss / dof));
    let grad = design.x.tr_mul(&resid).amax() * 2.0;
    Ok(FitResult {
        model: ModelKind::Gnar,
        method: Method::Cls,
        order: order.clone(),
        params: ParamVector::unbounded(order, node_ids, beta.iter().copied().collect())?,
        response: ResponseFunction::Identity,
        objective: rss,
        converged: true,
        iterations: 1,
        grad_norm: grad,
        n_obs: design.n_obs(),
        log_likelihood: None,
        covariance,
        notes: Vec::new(),
    })
}

/// GNAR forecasts (identity response).
pub fn predict_gnar(fit: &FitResult, net: &Network, history: &CountSeries, horizon: usize) -> Result<DMatrix<f64>> {
    forecast_means(net, &fit.order, &fit.params, history, horizon, |e| e)
}

/// `lambda_{i,t} = beta_0 + alpha_1 X_{i,t-1} + beta_1 sum_j w_{ij} X_{j,t-1}`
/// with `w` the equal first-stage weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PnarModel {
    pub net: Network,
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl PnarModel {
    pub fn new(net: Network, beta0: f64, alpha1: f64, beta1: f64) -> Result<Self> {
        for (name, v) in [("beta_0", beta0), ("alpha_1", alpha1), ("beta_1", beta1)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("PNAR {name} must be non-negative, got {v}")));
            }
        }
        Ok(Self {
            net,
            beta0,
            alpha1,
            beta1,
        })
    }

    /// The shared order for PNAR(1): one lag, first stage only, additive
    /// intercept.
    pub fn order() -> ModelOrder {
        ModelOrder::new(vec![1]).with_intercept(Intercept::Additive)
    }

    pub fn params(&self) -> Result<ParamVector> {
        ParamVector::global(
            &Self::order(),
            self.net.node_ids(),
            &[self.alpha1],
            &[vec![self.beta1]],
            self.beta0,
            pnar_bound,
        )
    }

    /// `G = beta_1 W + alpha_1 I`.
    pub fn g_matrix(&self) -> DMatrix<f64> {
        let n = self.net.node_count();
        self.net.stage_matrix(1) * self.beta1 + DMatrix::identity(n, n) * self.alpha1
    }

    /// Spectral radius of `G`; below one is the stationarity certificate.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.g_matrix())
    }

    /// Solves `(I − G) mu = beta_0 1`.
    pub fn stationary_mean(&self) -> Result<DVector<f64>> {
        let n = self.net.node_count();
        if self.spectral_radius() >= 1.0 {
            return Err(Error::NonStationary(self.spectral_radius()));
        }
        (DMatrix::identity(n, n) - self.g_matrix())
            .lu()
            .solve(&DVector::from_element(n, self.beta0))
            .ok_or_else(|| Error::Numerical("singular PNAR mean system".into()))
    }

    /// Conditionally independent Poisson draws given the past; the initial
    /// state is Poisson(beta_0).
    pub fn simulate<R: Rng + ?Sized>(&self, len: usize, burn_in: usize, rng: &mut R) -> Result<CountSeries> {
        let n = self.net.node_count();
        let mut state: Vec<f64> = (0..n)
            .map(|_| poisson_sample(self.beta0, rng).map(|x| x as f64))
            .collect::<Result<_>>()?;
        let mut out = CountSeries::zeros(n, len);
        for step in 0..burn_in + len {
            let mut next = vec![0.0; n];
            for (i, x) in next.iter_mut().enumerate() {
                let lam = self.beta0 + self.alpha1 * state[i] + self.beta1 * self.net.stage_sum(i, 1, &state);
                *x = poisson_sample(lam, rng)? as f64;
            }
            if step >= burn_in {
                for (i, &v) in next.iter().enumerate() {
                    out.set(i, step - burn_in, v as u64);
                }
            }
            state = next;
        }
        out.with_node_ids(self.net.node_ids().to_vec())
    }
}

fn pnar_bound(_: &Term) -> (f64, f64) {
    (0.0, f64::INFINITY)
}

/// Poisson quasi-negative-log-likelihood of a linear intensity, without the
/// `ln y!` constant. Intensities below [`INTENSITY_FLOOR`] are floored (and
/// contribute no gradient); the count of floored rows is returned alongside.
pub fn pnar_qnll(x: &DMatrix<f64>, y: &DVector<f64>, beta: &[f64], grad: &mut [f64]) -> (f64, usize) {
    let eta = x * DVector::from_column_slice(beta);
    let mut w = DVector::zeros(eta.len());
    let mut v = 0.0;
    let mut floored = 0;
    for r in 0..eta.len() {
        let (lam, d) = if eta[r] < INTENSITY_FLOOR {
            floored += 1;
            (INTENSITY_FLOOR, 0.0)
        } else {
            (eta[r], 1.0)
        };
        v += lam - y[r] * lam.ln();
        w[r] = (1.0 - y[r] / lam) * d;
    }
    grad.copy_from_slice(x.tr_mul(&w).as_slice());
    (v, floored)
}

/// PNAR(1) by Poisson QMLE over the non-negative orthant, using ADAM with
/// projection in Fisher-whitened coordinates. Starts from the clipped
/// least-squares solution with a strictly positive intercept.
pub fn fit_pnar1(series: &CountSeries, net: &Network) -> Result<FitResult> {
    fit_pnar1_with(series, net, &OptimizerConfig::default())
}

pub fn fit_pnar1_with(series: &CountSeries, net: &Network, config: &OptimizerConfig) -> Result<FitResult> {
    let order = PnarModel::order();
    order.validate()?;
    if net.node_count() != series.node_count() {
        return Err(Error::Dimension("series and network node counts differ".into()));
    }
    let design = Design::new(series, net, &order)?;
    let k = design.terms.len();
    let bounds = vec![(0.0, f64::INFINITY); k];
    let mut init: Vec<f64> = match solve_gram(&design.x.tr_mul(&design.x), &design.x.tr_mul(&design.y), None) {
        Ok(b) => b.iter().map(|v| v.max(0.0)).collect(),
        Err(_) => vec![0.0; k],
    };
    let ybar = design.y.mean().max(1e-3);
    if init[k - 1] <= 0.0 {
        init[k - 1] = ybar;
    }
    init[k - 1] = init[k - 1].max(1e-3);
    let n = design.n_obs() as f64;
    let eta0 = &design.x * DVector::from_column_slice(&init);
    let metric = weighted_gram(&design.x, &eta0.map(|e| 1.0 / e.max(0.1 * ybar)));
    let config = config.clone().with_bounds(bounds.clone());
    let out = adam_minimize_whitened(
        |b: &[f64], g: &mut [f64]| {
            let (v, _) = pnar_qnll(&design.x, &design.y, b, g);
            g.iter_mut().for_each(|x| *x /= n);
            Ok(v / n)
        },
        &init,
        &metric,
        &config,
    )?;
    let mut g = vec![0.0; k];
    let (nll, floored) = pnar_qnll(&design.x, &design.y, &out.solution, &mut g);
    let mut notes = Vec::new();
    if floored > 0 {
        notes.push(format!("{floored} intensities floored at {INTENSITY_FLOOR:e}"));
    }
    if !out.converged {
        notes.push(format!(
            "optimizer stopped after {} evaluations with gradient norm {:.3e}",
            out.iterations, out.grad_norm
        ));
    }
    let ll = -nll - log_factorial_sum(design.y.as_slice());
    let params = ParamVector::new(&order, series.node_ids(), out.solution.clone(), bounds)?;
    Ok(FitResult {
        model: ModelKind::Pnar,
        method: Method::Qmle,
        order,
        params,
        response: ResponseFunction::Identity,
        objective: -ll,
        converged: out.converged,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        n_obs: design.n_obs(),
        log_likelihood: Some(ll),
        covariance: None,
        notes,
    })
}

/// PNAR forecasts: the linear intensity recursion, floored at zero.
pub fn predict_pnar(fit: &FitResult, net: &Network, history: &CountSeries, horizon: usize) -> Result<DMatrix<f64>> {
    forecast_means(net, &fit.order, &fit.params, history, horizon, |e| e.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngnar::NgnarModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pnar_checks_and_mean() {
        let net = Network::five_node();
        assert!(PnarModel::new(net.clone(), 10.0, -0.1, 0.4).is_err());
        let m = PnarModel::new(net.clone(), 10.0, 0.5, 0.4).unwrap();
        let mu = m.stationary_mean().unwrap();
        assert!(mu.iter().all(|&v| (v - 100.0).abs() < 1e-9));
        // power iteration oracle for rho(G)
        let g = m.g_matrix();
        let mut v = DVector::from_element(5, 1.0);
        let mut rho = 0.0;
        for _ in 0..500 {
            let w = &g * &v;
            rho = w.norm() / v.norm();
            v = w / rho;
        }
        assert!((m.spectral_radius() - rho).abs() < 1e-8 && rho < 1.0);
    }

    #[test]
    fn pnar_iid_and_simulated_mean() {
        let net = Network::five_node();
        let s = PnarModel::new(net.clone(), 10.0, 0.0, 0.0)
            .unwrap()
            .simulate(20_000, 0, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert!((s.mean() - 10.0).abs() < 0.1);
        let s = PnarModel::new(net, 10.0, 0.5, 0.4)
            .unwrap()
            .simulate(10_000, 500, &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        assert!((s.mean() - 100.0).abs() < 3.0, "{}", s.mean());
    }

    #[test]
    fn gnar_noiseless_and_orthogonal() {
        let net = Network::five_node();
        let s = PnarModel::new(net.clone(), 5.0, 0.3, 0.3)
            .unwrap()
            .simulate(80, 20, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        let order = PnarModel::order();
        let d = Design::new(&s, &net, &order).unwrap();
        let truth = DVector::from_vec(vec![0.2, -0.35, 4.0]);
        let exact = Design {
            y: &d.x * &truth,
            ..d.clone()
        };
        let fit = fit_gnar_design(&exact, &order, s.node_ids()).unwrap();
        for (a, b) in fit.params.values().iter().zip(truth.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
        let fit = fit_gnar_cls(&s, &net, &order).unwrap();
        let beta = DVector::from_column_slice(fit.params.values());
        let resid = &d.y - &d.x * beta;
        let xty = d.x.tr_mul(&d.y).amax();
        assert!(d.x.tr_mul(&resid).amax() <= 1e-8 * xty);
    }

    #[test]
    fn pnar_intercept_only_truth() {
        let net = Network::five_node();
        let s = PnarModel::new(net.clone(), 7.0, 0.0, 0.0)
            .unwrap()
            .simulate(400, 0, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap();
        let fit = fit_pnar1(&s, &net).unwrap();
        assert!(fit.converged, "{:?}", fit.notes);
        let v = fit.params.values();
        let d = Design::new(&s, &net, &PnarModel::order()).unwrap();
        // with both slopes pinned at zero the intercept is the sample mean
        if v[0] == 0.0 && v[1] == 0.0 {
            assert!((v[2] - d.y.mean()).abs() < 1e-4);
        } else {
            assert!((v[2] - 7.0).abs() < 1.0, "{v:?}");
        }
    }

    #[test]
    fn pnar_qnll_gradient() {
        let net = Network::five_node();
        let s = PnarModel::new(net.clone(), 8.0, 0.4, 0.3)
            .unwrap()
            .simulate(60, 20, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let d = Design::new(&s, &net, &PnarModel::order()).unwrap();
        let b = [0.35, 0.25, 6.0];
        let mut g = [0.0; 3];
        pnar_qnll(&d.x, &d.y, &b, &mut g);
        let f = |p: &[f64]| pnar_qnll(&d.x, &d.y, p, &mut [0.0; 3]).0;
        assert!(crate::optimize::finite_diff_grad_check(f, &g, &b, 1e-6) < 1e-5);
    }

    #[test]
    fn pnar_mean_is_identity_ngnar_mean() {
        let net = Network::five_node();
        let m = PnarModel::new(net.clone(), 6.0, 0.3, 0.5).unwrap();
        let ng = NgnarModel::global(net.clone(), vec![1], &[0.3], &[vec![0.5]], 6.0, ResponseFunction::Identity).unwrap();
        let h = CountSeries::from_time_rows(&[vec![3, 8, 0, 12, 5]], 5).unwrap();
        let a = ng.conditional_mean(&h).unwrap();
        let fit = FitResult {
            model: ModelKind::Pnar,
            method: Method::Qmle,
            order: PnarModel::order(),
            params: m.params().unwrap(),
            response: ResponseFunction::Identity,
            objective: 0.0,
            converged: true,
            iterations: 0,
            grad_norm: 0.0,
            n_obs: 0,
            log_likelihood: None,
            covariance: None,
            notes: vec![],
        };
        let b = predict_pnar(&fit, &net, &h, 1).unwrap();
        for i in 0..5 {
            let lam = 6.0 + 0.3 * [3.0, 8.0, 0.0, 12.0, 5.0][i] + 0.5 * net.stage_sum(i, 1, &[3.0, 8.0, 0.0, 12.0, 5.0]);
            assert!((a[i] - lam).abs() < 1e-12 && (b[(i, 0)] - lam).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coefficients_give_constant_forecasts() {
        let net = Network::five_node();
        let m = PnarModel::new(net.clone(), 4.0, 0.0, 0.0).unwrap();
        let mut fit = fit_gnar_cls(
            &m.simulate(50, 0, &mut ChaCha8Rng::seed_from_u64(6)).unwrap(),
            &net,
            &PnarModel::order(),
        )
        .unwrap();
        fit.params = ParamVector::unbounded(&fit.order, net.node_ids(), vec![0.0, 0.0, 4.0]).unwrap();
        let h = CountSeries::from_time_rows(&[vec![9, 1, 3, 7, 2]], 5).unwrap();
        let f = predict_gnar(&fit, &net, &h, 3).unwrap();
        assert!(f.iter().all(|&v| v == 4.0));
    }

    proptest::proptest! {
        #[test]
        fn pnar_mean_matches_identity_ngnar(
            b0 in 0.0f64..20.0,
            a1 in 0.0f64..1.0,
            b1 in 0.0f64..1.0,
            hist in proptest::collection::vec(0u64..200, 5),
        ) {
            let net = Network::five_node();
            let pnar = PnarModel::new(net.clone(), b0, a1, b1).unwrap();
            let ng = NgnarModel::global(net.clone(), vec![1], &[a1], &[vec![b1]], b0, ResponseFunction::Identity).unwrap();
            let x = DVector::from_iterator(5, hist.iter().map(|&v| v as f64));
            let lam = pnar.g_matrix() * x;
            let a = ng.conditional_mean(&CountSeries::from_time_rows(&[hist], 5).unwrap()).unwrap();
            for i in 0..5 {
                proptest::prop_assert!((a[i] - b0 - lam[i]).abs() <= 1e-12 * a[i].abs().max(1.0));
            }
        }

        #[test]
        fn gnar_residuals_orthogonal(seed in 0u64..1000, stages in 1usize..3) {
            let net = Network::five_node();
            let s = PnarModel::new(net.clone(), 5.0, 0.3, 0.3)
                .unwrap()
                .simulate(60, 10, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap();
            let order = ModelOrder::new(vec![stages, 1]);
            let d = Design::new(&s, &net, &order).unwrap();
            let fit = fit_gnar_cls(&s, &net, &order).unwrap();
            let resid = &d.y - &d.x * DVector::from_column_slice(fit.params.values());
            proptest::prop_assert!(d.x.tr_mul(&resid).amax() <= 1e-8 * d.x.tr_mul(&d.y).amax());
        }
    }
}

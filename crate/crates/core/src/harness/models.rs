//! Uniform fit/forecast dispatch over the four model families.

use nalgebra::DMatrix;

use crate::baselines::{fit_gnar_cls, fit_pnar1, predict_gnar, predict_pnar};
use crate::design::{CountSeries, ModelOrder};
use crate::error::{Error, Result};
use crate::fit::{FitResult, Method, ModelKind};
use crate::gnari::{fit_gnari_cls, predict_gnari};
use crate::network::Network;
use crate::ngnar::{fit_ngnar_cls, fit_ngnar_cmle, predict_ngnar, NgnarFitOptions, ResponseFunction};

pub fn default_method(model: ModelKind) -> Method {
    match model {
        ModelKind::Gnar => Method::Cls,
        ModelKind::Gnari => Method::ConstrainedCls,
        ModelKind::Ngnar => Method::Cmle,
        ModelKind::Pnar => Method::Qmle,
    }
}

pub fn check_method(model: ModelKind, method: Method) -> Result<()> {
    let ok = matches!(
        (model, method),
        (ModelKind::Gnar, Method::Cls)
            | (ModelKind::Gnari, Method::Cls | Method::ConstrainedCls)
            | (ModelKind::Ngnar, Method::Cls | Method::Cmle)
            | (ModelKind::Pnar, Method::Qmle)
    );
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "method {method} is not available for {model} models"
        )))
    }
}

/// Fits `model` at `order` (ignored for PNAR, which is always order 1).
pub fn fit_model(
    model: ModelKind,
    method: Method,
    series: &CountSeries,
    net: &Network,
    order: &ModelOrder,
    response: ResponseFunction,
    options: &NgnarFitOptions,
) -> Result<FitResult> {
    check_method(model, method)?;
    match (model, method) {
        (ModelKind::Gnar, _) => fit_gnar_cls(series, net, order),
        (ModelKind::Gnari, _) => fit_gnari_cls(series, net, order),
        (ModelKind::Ngnar, Method::Cmle) => fit_ngnar_cmle(series, net, order, response, options),
        (ModelKind::Ngnar, _) => fit_ngnar_cls(series, net, order, response, options),
        (ModelKind::Pnar, _) => fit_pnar1(series, net),
    }
}

/// Mean forecasts (N × horizon) continuing `history`.
pub fn forecast(fit: &FitResult, net: &Network, history: &CountSeries, horizon: usize) -> Result<DMatrix<f64>> {
    match fit.model {
        ModelKind::Gnar => predict_gnar(fit, net, history, horizon),
        ModelKind::Gnari => predict_gnari(fit, net, history, horizon),
        ModelKind::Ngnar => predict_ngnar(fit, net, history, horizon),
        ModelKind::Pnar => predict_pnar(fit, net, history, horizon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_table() {
        assert!(check_method(ModelKind::Gnar, Method::Cmle).is_err());
        assert!(check_method(ModelKind::Pnar, Method::Cls).is_err());
        for m in [ModelKind::Gnar, ModelKind::Gnari, ModelKind::Ngnar, ModelKind::Pnar] {
            assert!(check_method(m, default_method(m)).is_ok());
        }
    }

    #[test]
    fn dispatch_round_trip() {
        let net = Network::five_node();
        let s = CountSeries::from_node_rows((0..5).map(|i| (0..40).map(|t| ((t * 7 + i * 3) % 11) as u64 + 1).collect()).collect())
            .unwrap();
        let order = ModelOrder::new(vec![1]);
        for m in [ModelKind::Gnar, ModelKind::Gnari, ModelKind::Ngnar, ModelKind::Pnar] {
            let fit = fit_model(m, default_method(m), &s, &net, &order, ResponseFunction::default(), &Default::default()).unwrap();
            assert_eq!(fit.model, m);
            let f = forecast(&fit, &net, &s, 3).unwrap();
            assert_eq!(f.shape(), (5, 3));
            assert!(f.iter().all(|v| v.is_finite()));
        }
    }
}

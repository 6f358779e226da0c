//! Forecasting pipeline on an observed network series: split, select each
//! model's order by backward BIC, fit, forecast the test window and score.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::design::{CountSeries, ModelOrder};
use crate::error::{Error, Result};
use crate::fit::{FitResult, Method, ModelKind};
use crate::harness::eval::EvalReport;
use crate::harness::io::{split_train_test, write_fit_json, write_forecast_csv};
use crate::harness::models::{default_method, fit_model, forecast};
use crate::harness::select::{backward_bic_select, trim_order, Selection, SelectionSpec};
use crate::network::Network;
use crate::ngnar::{NgnarFitOptions, ResponseFunction};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub train: usize,
    /// Forecast length; the whole test window when `None`.
    pub horizon: Option<usize>,
    pub max_lag: usize,
    pub local_intercept: bool,
    pub response: ResponseFunction,
    pub seed: u64,
    pub models: Vec<ModelKind>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: 700,
            horizon: None,
            max_lag: 14,
            local_intercept: true,
            response: ResponseFunction::default(),
            seed: 0,
            models: vec![ModelKind::Gnar, ModelKind::Gnari, ModelKind::Ngnar, ModelKind::Pnar],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub label: String,
    pub method: Method,
    /// `None` for PNAR, whose order is fixed.
    pub selection: Option<Selection>,
    pub fit: FitResult,
    pub forecast: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub models: Vec<PipelineModel>,
    pub report: EvalReport,
    pub node_ids: Vec<String>,
}

pub fn run_pipeline(series: &CountSeries, net: &Network, config: &PipelineConfig) -> Result<PipelineOutput> {
    let (train, test) = split_train_test(series, config.train)?;
    let horizon = config.horizon.unwrap_or(test.len());
    if horizon == 0 || horizon > test.len() {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} outside the test window of {} steps",
            test.len()
        )));
    }
    let truth = DMatrix::from_fn(test.node_count(), horizon, |i, h| test.get(i, h) as f64);
    let options = NgnarFitOptions {
        seed: config.seed,
        ..Default::default()
    };
    let mut models = Vec::new();
    for &kind in &config.models {
        let method = default_method(kind);
        let (selection, fit) = if kind == ModelKind::Pnar {
            let fit = fit_model(kind, method, &train, net, &ModelOrder::new(vec![1]), config.response, &options)?;
            (None, fit)
        } else {
            let mut spec = SelectionSpec::new(kind).local_intercept(config.local_intercept);
            spec.response = config.response;
            spec.ngnar = options.clone();
            let sel = backward_bic_select(&train, net, config.max_lag, &spec)?;
            let order = trim_order(&sel.order);
            let fit = fit_model(kind, method, &train, net, &order, config.response, &options)?;
            (Some(sel), fit)
        };
        let f = forecast(&fit, net, &train, horizon)?;
        models.push(PipelineModel {
            label: kind.to_string().to_uppercase(),
            method,
            selection,
            fit,
            forecast: f,
        });
    }
    let forecasts: Vec<(String, DMatrix<f64>)> = models.iter().map(|m| (m.label.clone(), m.forecast.clone())).collect();
    let report = EvalReport::evaluate("data", &forecasts, &truth, &[])?;
    Ok(PipelineOutput {
        models,
        report,
        node_ids: series.node_ids().to_vec(),
    })
}

impl PipelineOutput {
    /// Per model: `<model>_order.json`, `<model>_fit.json`,
    /// `<model>_forecast.csv`; plus `report.csv` and `plot.csv`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for m in &self.models {
            let stem = m.label.to_lowercase();
            if let Some(sel) = &m.selection {
                let p = dir.join(format!("{stem}_order.json"));
                std::fs::write(&p, sel.to_json()? + "\n")?;
                paths.push(p);
            }
            let p = dir.join(format!("{stem}_fit.json"));
            write_fit_json(&m.fit, &p)?;
            paths.push(p);
            let p = dir.join(format!("{stem}_forecast.csv"));
            write_forecast_csv(&m.forecast, &self.node_ids, &p)?;
            paths.push(p);
        }
        let p = dir.join("report.csv");
        self.report.write_csv(std::fs::File::create(&p)?)?;
        paths.push(p);
        let p = dir.join("plot.csv");
        self.report.write_plot_csv(std::fs::File::create(&p)?)?;
        paths.push(p);
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnari::GnariModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_pipeline_runs() {
        let net = Network::five_node();
        let m = GnariModel::global(net.clone(), vec![1], &[0.5], &[vec![0.3]], 5.0).unwrap();
        let s = m.simulate(160, 50, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let cfg = PipelineConfig {
            train: 150,
            max_lag: 3,
            local_intercept: false,
            ..Default::default()
        };
        let out = run_pipeline(&s, &net, &cfg).unwrap();
        assert_eq!(out.models.len(), 4);
        assert_eq!(out.report.rows.len(), 4 * 10);
        let dir = tempfile::tempdir().unwrap();
        let files = out.write_to_dir(dir.path()).unwrap();
        assert_eq!(files.len(), 3 * 3 + 2 + 2);
        assert_eq!(run_pipeline(&s, &net, &cfg).unwrap(), out);
    }
}

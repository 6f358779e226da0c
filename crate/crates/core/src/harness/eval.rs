//! Forecast accuracy: MSPE/MAPE over nodes and leading horizons.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_shapes(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "prediction is {:?}, truth is {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Dimension("no forecasts to evaluate".into()));
    }
    Ok(())
}

/// Mean squared error over all N·h entries.
pub fn mspe(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok((pred - truth).norm_squared() / pred.len() as f64)
}

/// Mean absolute error over all N·h entries.
pub fn mape(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    check_shapes(pred, truth)?;
    Ok((pred - truth).abs().sum() / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub model: String,
    pub process: String,
    pub horizon: usize,
    pub mspe: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Forecast trajectories (N×H) per model, in evaluation order.
    pub trajectories: Vec<(String, DMatrix<f64>)>,
}

impl EvalReport {
    /// Scores every model on the leading `h` test steps for each requested
    /// horizon (all horizons `1..=H` when `horizons` is empty).
    pub fn evaluate(
        process: &str,
        forecasts: &[(String, DMatrix<f64>)],
        truth: &DMatrix<f64>,
        horizons: &[usize],
    ) -> Result<Self> {
        let mut report = EvalReport::default();
        for (model, f) in forecasts {
            let hs: Vec<usize> = if horizons.is_empty() {
                (1..=f.ncols()).collect()
            } else {
                horizons.to_vec()
            };
            for &h in &hs {
                if h == 0 || h > f.ncols() || h > truth.ncols() {
                    return Err(Error::InvalidArgument(format!(
                        "horizon {h} outside the forecast window of {} steps",
                        f.ncols().min(truth.ncols())
                    )));
                }
                let p = f.columns(0, h).into_owned();
                let t = truth.columns(0, h).into_owned();
                report.rows.push(EvalRow {
                    model: model.clone(),
                    process: process.to_string(),
                    horizon: h,
                    mspe: mspe(&p, &t)?,
                    mape: mape(&p, &t)?,
                });
            }
            report.trajectories.push((model.clone(), f.clone()));
        }
        Ok(report)
    }

    pub fn get(&self, model: &str, process: &str, horizon: usize) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.process == process && r.horizon == horizon)
    }

    /// `model,process,horizon,mspe,mape`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(&self.rows, out)
    }

    /// Plot data of MAPE against horizon: `horizon,model,mape`.
    pub fn write_plot_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["horizon", "model", "mape"])?;
        for r in &self.rows {
            w.write_record([r.horizon.to_string(), r.model.clone(), format!("{}", r.mape)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_rows<W: Write>(rows: &[EvalRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "process", "horizon", "mspe", "mape"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.process.clone(),
            r.horizon.to_string(),
            format!("{}", r.mspe),
            format!("{}", r.mape),
        ])?;
    }
    w.flush()?;
    Ok(())
}

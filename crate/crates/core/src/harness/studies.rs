//! Monte Carlo studies: parameter recovery for GNARI and NGNAR, and the
//! four-model forecast comparison.
//!
//! Replication `r` draws from `ChaCha8Rng` seeded with `seed + r`, on a
//! stream keyed by the series length (recovery studies) or the process
//! (forecast study). Results are collected in replication order, so reports
//! do not depend on thread scheduling or on which other cells are run.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::PnarModel;
use crate::design::{CountSeries, ModelOrder};
use crate::error::{Error, Result};
use crate::fit::{FitResult, Method, ModelKind};
use crate::gnari::GnariModel;
use crate::harness::eval::{mape, mspe, EvalRow};
use crate::harness::models::{fit_model, forecast};
use crate::network::Network;
use crate::ngnar::{NgnarFitOptions, NgnarModel, ResponseFunction};

pub const BURN_IN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Table1,
    Table2,
    Table3,
}

impl StudyKind {
    pub fn id(&self) -> &'static str {
        match self {
            StudyKind::Table1 => "table1",
            StudyKind::Table2 => "table2",
            StudyKind::Table3 => "table3",
        }
    }
}

impl std::str::FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table1" => Ok(StudyKind::Table1),
            "table2" => Ok(StudyKind::Table2),
            "table3" => Ok(StudyKind::Table3),
            other => Err(Error::InvalidArgument(format!(
                "unknown study {other:?} (expected table1, table2, table3 or pipeline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub reps: usize,
    /// Series lengths `T`.
    pub lengths: Vec<usize>,
    pub burn_in: usize,
    /// Training length for forecast studies; the rest of `T` is the test set.
    pub train: usize,
    pub horizons: Vec<usize>,
    pub seed: u64,
    pub net: Network,
    pub output_dir: Option<PathBuf>,
}

impl StudyConfig {
    pub fn new(kind: StudyKind, quick: bool) -> Self {
        let (reps, quick_reps, lengths) = match kind {
            StudyKind::Table1 => (1000, 50, vec![50, 200, 500]),
            StudyKind::Table2 => (100, 20, vec![50, 200, 500]),
            StudyKind::Table3 => (500, 50, vec![500]),
        };
        Self {
            kind,
            reps: if quick { quick_reps } else { reps },
            lengths,
            burn_in: BURN_IN,
            train: 450,
            horizons: vec![1, 10, 50],
            seed: 0,
            net: Network::five_node(),
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("replication count must be >= 1".into()));
        }
        if self.lengths.is_empty() || self.lengths.iter().any(|&t| t < 3) {
            return Err(Error::InvalidArgument("series lengths must be >= 3".into()));
        }
        if self.kind == StudyKind::Table3 {
            for &t in &self.lengths {
                if self.train == 0 || self.train >= t {
                    return Err(Error::InvalidArgument(format!(
                        "training length {} must leave a test set within T = {t}",
                        self.train
                    )));
                }
                if let Some(&h) = self.horizons.iter().find(|&&h| h == 0 || h > t - self.train) {
                    return Err(Error::InvalidArgument(format!(
                        "horizon {h} does not fit the test set of {} steps",
                        t - self.train
                    )));
                }
            }
        }
        Ok(())
    }
}

fn rep_rng(seed: u64, rep: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(rep as u64));
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub length: usize,
    pub method: Method,
    pub rep: usize,
    pub values: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub length: usize,
    /// Method (estimation studies) or model label (forecast study).
    pub label: String,
    pub process: Option<String>,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub length: usize,
    pub method: Method,
    pub param: String,
    pub truth: f64,
    pub mean: f64,
    pub sd: f64,
    pub median_abs_error: f64,
    /// Mean of the per-replication standard errors, when fits supply them.
    pub mean_se: Option<f64>,
    pub reference_mean: Option<f64>,
    pub reference_sd: Option<f64>,
    pub successes: usize,
    pub failures: usize,
    pub not_converged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub study: StudyKind,
    pub params: Vec<String>,
    pub truth: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub failures: Vec<Failure>,
    pub summaries: Vec<ParamSummary>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (m, sd)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Reference mean and sd per parameter for the recovery studies.
fn estimation_reference(kind: StudyKind, length: usize, method: Method) -> Option<([f64; 3], [f64; 3])> {
    match (kind, length, method) {
        (StudyKind::Table1, 50, _) => Some(([0.482, 0.370, 14.8], [0.053, 0.061, 6.57])),
        (StudyKind::Table1, 200, _) => Some(([0.496, 0.392, 11.3], [0.025, 0.031, 2.96])),
        (StudyKind::Table1, 500, _) => Some(([0.497, 0.397, 10.6], [0.015, 0.019, 1.73])),
        (StudyKind::Table2, 50, Method::Cls) => Some(([0.493, -0.407, 10.2], [0.058, 0.067, 1.14])),
        (StudyKind::Table2, 50, Method::Cmle) => Some(([0.493, -0.404, 10.2], [0.053, 0.065, 1.05])),
        (StudyKind::Table2, 200, Method::Cls) => Some(([0.504, -0.399, 9.92], [0.029, 0.039, 0.639])),
        (StudyKind::Table2, 200, Method::Cmle) => Some(([0.503, -0.400, 9.96], [0.027, 0.037, 0.622])),
        (StudyKind::Table2, 500, Method::Cls) => Some(([0.500, -0.397, 9.96], [0.018, 0.024, 0.382])),
        (StudyKind::Table2, 500, Method::Cmle) => Some(([0.500, -0.397, 9.97], [0.018, 0.021, 0.365])),
        _ => None,
    }
}

impl EstimationReport {
    pub fn summary(&self, length: usize, method: Method, param: &str) -> Option<&ParamSummary> {
        self.summaries
            .iter()
            .find(|s| s.length == length && s.method == method && s.param == param)
    }

    /// Estimates of parameter `k` for one `(T, method)` cell.
    pub fn values(&self, length: usize, method: Method, k: usize) -> Vec<f64> {
        self.estimates
            .iter()
            .filter(|e| e.length == length && e.method == method)
            .map(|e| e.values[k])
            .collect()
    }

    fn summarise(&mut self, lengths: &[usize], methods: &[Method]) {
        for &t in lengths {
            for &m in methods {
                let cell: Vec<&Estimate> = self
                    .estimates
                    .iter()
                    .filter(|e| e.length == t && e.method == m)
                    .collect();
                let failures = self
                    .failures
                    .iter()
                    .filter(|f| f.length == t && f.label == m.as_str())
                    .count();
                let reference = estimation_reference(self.study, t, m);
                for (k, name) in self.params.iter().enumerate() {
                    let v: Vec<f64> = cell.iter().map(|e| e.values[k]).collect();
                    let (mean, sd) = mean_sd(&v);
                    let ses: Vec<f64> = cell
                        .iter()
                        .filter_map(|e| e.std_errors.as_ref().map(|s| s[k]))
                        .filter(|s| s.is_finite())
                        .collect();
                    self.summaries.push(ParamSummary {
                        length: t,
                        method: m,
                        param: name.clone(),
                        truth: self.truth[k],
                        mean,
                        sd,
                        median_abs_error: median(v.iter().map(|x| (x - self.truth[k]).abs()).collect()),
                        mean_se: (!ses.is_empty()).then(|| mean_sd(&ses).0),
                        reference_mean: reference.map(|r| r.0[k]),
                        reference_sd: reference.map(|r| r.1[k]),
                        successes: cell.len(),
                        failures,
                        not_converged: cell.iter().filter(|e| !e.converged).count(),
                    });
                }
            }
        }
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "study",
            "T",
            "method",
            "parameter",
            "truth",
            "mean",
            "sd",
            "median_abs_error",
            "mean_se",
            "reference_mean",
            "reference_sd",
            "successes",
            "failures",
            "not_converged",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.summaries {
            w.write_record([
                self.study.id().to_string(),
                s.length.to_string(),
                s.method.to_string(),
                s.param.clone(),
                s.truth.to_string(),
                s.mean.to_string(),
                s.sd.to_string(),
                s.median_abs_error.to_string(),
                opt(s.mean_se),
                opt(s.reference_mean),
                opt(s.reference_sd),
                s.successes.to_string(),
                s.failures.to_string(),
                s.not_converged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_estimates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["T".to_string(), "method".into(), "rep".into(), "converged".into()];
        header.extend(self.params.iter().cloned());
        header.extend(self.params.iter().map(|p| format!("se_{p}")));
        w.write_record(&header)?;
        for e in &self.estimates {
            let mut row = vec![e.length.to_string(), e.method.to_string(), e.rep.to_string(), e.converged.to_string()];
            row.extend(e.values.iter().map(f64::to_string));
            match &e.std_errors {
                Some(se) => row.extend(se.iter().map(f64::to_string)),
                None => row.extend(self.params.iter().map(|_| String::new())),
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_failures_csv<W: Write>(&self, out: W) -> Result<()> {
        write_failures(&self.failures, out)
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let id = self.study.id();
        let paths = [
            dir.join(format!("{id}_summary.csv")),
            dir.join(format!("{id}_estimates.csv")),
            dir.join(format!("{id}_failures.csv")),
        ];
        self.write_summary_csv(std::fs::File::create(&paths[0])?)?;
        self.write_estimates_csv(std::fs::File::create(&paths[1])?)?;
        self.write_failures_csv(std::fs::File::create(&paths[2])?)?;
        Ok(paths.to_vec())
    }

    /// Plain-text table: `mean (sd)` per parameter with reference values.
    pub fn render(&self) -> String {
        let mut s = format!("{:>5} {:>6}", "T", "method");
        for p in &self.params {
            s += &format!(" {:>24}", p);
        }
        s += "   ok fail\n";
        let mut cells: Vec<(usize, Method)> = Vec::new();
        for x in &self.summaries {
            if !cells.contains(&(x.length, x.method)) {
                cells.push((x.length, x.method));
            }
        }
        for (t, m) in cells {
            let rows: Vec<&ParamSummary> = self.summaries.iter().filter(|x| x.length == t && x.method == m).collect();
            s += &format!("{t:>5} {:>6}", m.as_str());
            for r in &rows {
                s += &format!(" {:>24}", format!("{:.3} ({:.3})", r.mean, r.sd));
            }
            s += &format!(" {:>4} {:>4}\n", rows[0].successes, rows[0].failures);
            if rows[0].reference_mean.is_some() {
                s += &format!("{:>5} {:>6}", "", "ref");
                for r in &rows {
                    s += &format!(
                        " {:>24}",
                        format!("{} ({})", r.reference_mean.unwrap(), r.reference_sd.unwrap())
                    );
                }
                s += "\n";
            }
        }
        s += &format!("{:>12}", "truth");
        for t in &self.truth {
            s += &format!(" {:>24}", t);
        }
        s + "\n"
    }
}

fn write_failures<W: Write>(failures: &[Failure], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["T", "label", "process", "rep", "message"])?;
    for f in failures {
        w.write_record([
            f.length.to_string(),
            f.label.clone(),
            f.process.clone().unwrap_or_default(),
            f.rep.to_string(),
            f.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The recovery-study processes: GNARI(1,[1]) with `(0.5, 0.4, lambda 10)`
/// and softplus NGNAR(1,[1]) with `(0.5, -0.4, alpha_0 10)`.
pub fn table1_model(net: &Network) -> Result<GnariModel> {
    GnariModel::global(net.clone(), vec![1], &[0.5], &[vec![0.4]], 10.0)
}

pub fn table2_model(net: &Network) -> Result<NgnarModel> {
    NgnarModel::global(net.clone(), vec![1], &[0.5], &[vec![-0.4]], 10.0, ResponseFunction::default())
}

fn run_estimation<S, F>(
    config: &StudyConfig,
    params: Vec<String>,
    truth: Vec<f64>,
    methods: &[Method],
    simulate: S,
    fit: F,
) -> Result<EstimationReport>
where
    S: Fn(usize, &mut ChaCha8Rng) -> Result<CountSeries> + Sync,
    F: Fn(&CountSeries, Method, usize) -> Result<FitResult> + Sync,
{
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.lengths.len())
        .flat_map(|ti| (0..config.reps).map(move |r| (ti, r)))
        .collect();
    let outcomes: Vec<Vec<std::result::Result<FitResult, String>>> = jobs
        .par_iter()
        .map(|&(ti, rep)| {
            let t = config.lengths[ti];
            let mut rng = rep_rng(config.seed, rep, t as u64);
            match simulate(t, &mut rng) {
                Ok(series) => methods
                    .iter()
                    .map(|&m| fit(&series, m, rep).map_err(|e| e.to_string()))
                    .collect(),
                Err(e) => methods.iter().map(|_| Err(format!("simulation: {e}"))).collect(),
            }
        })
        .collect();
    let mut report = EstimationReport {
        study: config.kind,
        params,
        truth,
        estimates: Vec::new(),
        failures: Vec::new(),
        summaries: Vec::new(),
    };
    for (&(ti, rep), fits) in jobs.iter().zip(outcomes) {
        let length = config.lengths[ti];
        for (&method, fit) in methods.iter().zip(fits) {
            match fit {
                Ok(f) => report.estimates.push(Estimate {
                    length,
                    method,
                    rep,
                    values: f.params.values().to_vec(),
                    std_errors: f.standard_errors(),
                    converged: f.converged,
                }),
                Err(message) => report.failures.push(Failure {
                    length,
                    label: method.to_string(),
                    process: None,
                    rep,
                    message,
                }),
            }
        }
    }
    report.summarise(&config.lengths, methods);
    Ok(report)
}

/// GNARI(1,[1]) parameter recovery by constrained CLS.
pub fn run_table1(config: &StudyConfig) -> Result<EstimationReport> {
    let model = table1_model(&config.net)?;
    let order = model.order.clone();
    run_estimation(
        config,
        vec!["alpha_1".into(), "beta_1_1".into(), "lambda".into()],
        vec![0.5, 0.4, 10.0],
        &[Method::ConstrainedCls],
        |t, rng| model.simulate(t, config.burn_in, rng),
        |s, _, _| crate::gnari::fit_gnari_cls(s, &config.net, &order),
    )
}

/// Softplus NGNAR(1,[1]) parameter recovery by CLS and CMLE.
pub fn run_table2(config: &StudyConfig) -> Result<EstimationReport> {
    let model = table2_model(&config.net)?;
    let order = model.order.clone();
    let rf = model.response;
    run_estimation(
        config,
        vec!["alpha_1".into(), "beta_1_1".into(), "alpha_0".into()],
        vec![0.5, -0.4, 10.0],
        &[Method::Cls, Method::Cmle],
        |t, rng| model.simulate(t, config.burn_in, rng),
        |s, m, rep| {
            let options = NgnarFitOptions {
                seed: config.seed.wrapping_add(rep as u64),
                ..Default::default()
            };
            fit_model(ModelKind::Ngnar, m, s, &config.net, &order, rf, &options)
        },
    )
}

/// Models compared in the forecast study.
pub const FORECAST_MODELS: [(&str, ModelKind, Method); 4] = [
    ("A", ModelKind::Gnari, Method::ConstrainedCls),
    ("B", ModelKind::Ngnar, Method::Cls),
    ("C", ModelKind::Ngnar, Method::Cmle),
    ("D", ModelKind::Pnar, Method::Qmle),
];

pub const PROCESSES: [&str; 4] = ["P1", "P2", "P3", "P4"];

/// Simulating processes of the forecast study.
#[derive(Debug, Clone)]
pub enum Process {
    Gnari(GnariModel),
    Ngnar(NgnarModel),
    Pnar(PnarModel),
}

impl Process {
    /// `P1` GNARI(0.5, 0.4, lambda 10); `P2` softplus NGNAR(0.5, 0.4, 10);
    /// `P3` softplus NGNAR(0.1, -0.8, 10); `P4` PNAR(0.5, 0.4, beta_0 10).
    pub fn standard(name: &str, net: &Network) -> Result<Self> {
        let sp = ResponseFunction::default();
        Ok(match name {
            "P1" => Process::Gnari(GnariModel::global(net.clone(), vec![1], &[0.5], &[vec![0.4]], 10.0)?),
            "P2" => Process::Ngnar(NgnarModel::global(net.clone(), vec![1], &[0.5], &[vec![0.4]], 10.0, sp)?),
            "P3" => Process::Ngnar(NgnarModel::global(net.clone(), vec![1], &[0.1], &[vec![-0.8]], 10.0, sp)?),
            "P4" => Process::Pnar(PnarModel::new(net.clone(), 10.0, 0.5, 0.4)?),
            other => return Err(Error::InvalidArgument(format!("unknown process {other:?}"))),
        })
    }

    pub fn simulate(&self, len: usize, burn_in: usize, rng: &mut ChaCha8Rng) -> Result<CountSeries> {
        match self {
            Process::Gnari(m) => m.simulate(len, burn_in, rng),
            Process::Ngnar(m) => m.simulate(len, burn_in, rng),
            Process::Pnar(m) => m.simulate(len, burn_in, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepScore {
    pub process: String,
    pub rep: usize,
    pub model: String,
    pub horizon: usize,
    pub mspe: f64,
    pub mape: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub model: String,
    pub process: String,
    pub horizon: usize,
    /// Averages over successful replications (NaN when none succeeded).
    pub mspe: f64,
    pub mape: f64,
    pub successes: usize,
    pub failures: usize,
    pub reference_mspe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub cells: Vec<GridCell>,
    pub scores: Vec<RepScore>,
    pub failures: Vec<Failure>,
}

/// Reference average MSPE of the forecast comparison at horizons 1, 10, 50.
pub fn forecast_reference(model: &str, process: &str, horizon: usize) -> Option<f64> {
    let m = ["A", "B", "C", "D"].iter().position(|&x| x == model)?;
    let p = PROCESSES.iter().position(|&x| x == process)?;
    let grid: [[[f64; 4]; 4]; 3] = [
        [
            [68.6, 100.2, 9.1, 98.2],
            [68.6, 100.2, 5.9, 98.2],
            [68.7, 100.2, 5.9, 98.2],
            [68.8, 100.2, 9.01, 98.3],
        ],
        [
            [119.3, 173.6, 9.1, 166.9],
            [119.3, 173.6, 8.5, 167.0],
            [119.3, 173.6, 8.5, 166.9],
            [119.9, 173.8, 9.7, 167.4],
        ],
        [
            [145.0, 209.5, 9.08, 211.0],
            [145.0, 209.5, 8.96, 211.0],
            [145.1, 209.4, 8.96, 211.0],
            [145.2, 209.7, 9.08, 211.8],
        ],
    ];
    let h = [1, 10, 50].iter().position(|&x| x == horizon)?;
    Some(grid[h][m][p])
}

impl ForecastReport {
    pub fn cell(&self, model: &str, process: &str, horizon: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.process == process && c.horizon == horizon)
    }

    pub fn rep_scores(&self, model: &str, process: &str, horizon: usize) -> Vec<(usize, f64)> {
        self.scores
            .iter()
            .filter(|s| s.model == model && s.process == process && s.horizon == horizon)
            .map(|s| (s.rep, s.mspe))
            .collect()
    }

    /// Fraction of replications (where both fits succeeded) in which
    /// `better` has strictly smaller MSPE than `worse`, with the count.
    pub fn win_rate(&self, better: &str, worse: &str, process: &str, horizon: usize) -> (f64, usize) {
        let w = self.rep_scores(worse, process, horizon);
        let mut wins = 0;
        let mut n = 0;
        for (rep, b) in self.rep_scores(better, process, horizon) {
            if let Some(&(_, v)) = w.iter().find(|(r, _)| *r == rep) {
                n += 1;
                wins += (b < v) as usize;
            }
        }
        (if n == 0 { f64::NAN } else { wins as f64 / n as f64 }, n)
    }

    /// Report rows `model,process,horizon,mspe,mape`.
    pub fn rows(&self) -> Vec<EvalRow> {
        self.cells
            .iter()
            .map(|c| EvalRow {
                model: c.model.clone(),
                process: c.process.clone(),
                horizon: c.horizon,
                mspe: c.mspe,
                mape: c.mape,
            })
            .collect()
    }

    pub fn write_grid_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "model",
            "process",
            "horizon",
            "mspe",
            "mape",
            "successes",
            "failures",
            "reference_mspe",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.model.clone(),
                c.process.clone(),
                c.horizon.to_string(),
                c.mspe.to_string(),
                c.mape.to_string(),
                c.successes.to_string(),
                c.failures.to_string(),
                c.reference_mspe.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_scores_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["process", "rep", "model", "horizon", "mspe", "mape"])?;
        for s in &self.scores {
            w.write_record([
                s.process.clone(),
                s.rep.to_string(),
                s.model.clone(),
                s.horizon.to_string(),
                s.mspe.to_string(),
                s.mape.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let paths = [
            dir.join("table3_report.csv"),
            dir.join("table3_grid.csv"),
            dir.join("table3_replications.csv"),
            dir.join("table3_failures.csv"),
        ];
        crate::harness::eval::write_rows(&self.rows(), std::fs::File::create(&paths[0])?)?;
        self.write_grid_csv(std::fs::File::create(&paths[1])?)?;
        self.write_scores_csv(std::fs::File::create(&paths[2])?)?;
        write_failures(&self.failures, std::fs::File::create(&paths[3])?)?;
        Ok(paths.to_vec())
    }

    /// One block per horizon: models by rows, processes by columns, each
    /// entry `mspe [reference]`.
    pub fn render(&self) -> String {
        let mut horizons: Vec<usize> = self.cells.iter().map(|c| c.horizon).collect();
        horizons.dedup();
        horizons.sort_unstable();
        horizons.dedup();
        let mut s = String::new();
        for h in horizons {
            s += &format!("horizon {h}\n{:>3}", "");
            for p in PROCESSES {
                s += &format!(" {:>18}", p);
            }
            s += "\n";
            for (m, kind, method) in FORECAST_MODELS {
                s += &format!("{m:>3}");
                for p in PROCESSES {
                    let entry = match self.cell(m, p, h) {
                        Some(c) => {
                            let mut e = format!("{:.2}", c.mspe);
                            if let Some(r) = c.reference_mspe {
                                e += &format!(" [{r}]");
                            }
                            if c.failures > 0 {
                                e += &format!(" !{}", c.failures);
                            }
                            e
                        }
                        None => "-".into(),
                    };
                    s += &format!(" {entry:>18}");
                }
                s += &format!("   {kind} {method}\n");
            }
        }
        s
    }
}

/// Forecast comparison: every process in `PROCESSES`, every model in
/// `FORECAST_MODELS`, fitted on the first `train` steps and scored on the
/// leading `h` test steps for each requested horizon.
pub fn run_table3(config: &StudyConfig) -> Result<ForecastReport> {
    run_forecast_study(config, &PROCESSES)
}

pub fn run_forecast_study(config: &StudyConfig, processes: &[&str]) -> Result<ForecastReport> {
    config.validate()?;
    let t = *config.lengths.last().expect("validated");
    let test_len = t - config.train;
    let procs: Vec<Process> = processes
        .iter()
        .map(|p| Process::standard(p, &config.net))
        .collect::<Result<_>>()?;
    let order = ModelOrder::new(vec![1]);
    let sp = ResponseFunction::default();
    let jobs: Vec<(usize, usize)> = (0..procs.len())
        .flat_map(|pi| (0..config.reps).map(move |r| (pi, r)))
        .collect();
    type ModelOutcome = std::result::Result<Vec<(f64, f64)>, String>;
    let outcomes: Vec<Vec<ModelOutcome>> = jobs
        .par_iter()
        .map(|&(pi, rep)| {
            let stream = 100 + PROCESSES.iter().position(|p| *p == processes[pi]).unwrap_or(pi) as u64;
            let mut rng = rep_rng(config.seed, rep, stream);
            let series = match procs[pi].simulate(t, config.burn_in, &mut rng) {
                Ok(s) => s,
                Err(e) => return FORECAST_MODELS.iter().map(|_| Err(format!("simulation: {e}"))).collect(),
            };
            let (train, test) = match (series.slice(0, config.train), series.slice(config.train, t)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return FORECAST_MODELS.iter().map(|_| Err(e.to_string())).collect(),
            };
            let truth = nalgebra::DMatrix::from_fn(test.node_count(), test_len, |i, h| test.get(i, h) as f64);
            let options = NgnarFitOptions {
                seed: config.seed.wrapping_add(rep as u64),
                ..Default::default()
            };
            FORECAST_MODELS
                .iter()
                .map(|&(_, kind, method)| {
                    let scored = fit_model(kind, method, &train, &config.net, &order, sp, &options)
                        .and_then(|fit| forecast(&fit, &config.net, &train, test_len))
                        .and_then(|f| {
                            config
                                .horizons
                                .iter()
                                .map(|&h| {
                                    let p = f.columns(0, h).into_owned();
                                    let q = truth.columns(0, h).into_owned();
                                    Ok((mspe(&p, &q)?, mape(&p, &q)?))
                                })
                                .collect::<Result<Vec<_>>>()
                        });
                    scored.map_err(|e| e.to_string())
                })
                .collect()
        })
        .collect();

    let mut scores = Vec::new();
    let mut failures = Vec::new();
    for (&(pi, rep), per_model) in jobs.iter().zip(outcomes) {
        for (&(label, _, _), outcome) in FORECAST_MODELS.iter().zip(per_model) {
            match outcome {
                Ok(v) => {
                    for (&h, (ms, ma)) in config.horizons.iter().zip(v) {
                        scores.push(RepScore {
                            process: processes[pi].to_string(),
                            rep,
                            model: label.to_string(),
                            horizon: h,
                            mspe: ms,
                            mape: ma,
                        });
                    }
                }
                Err(message) => failures.push(Failure {
                    length: t,
                    label: label.to_string(),
                    process: Some(processes[pi].to_string()),
                    rep,
                    message,
                }),
            }
        }
    }
    let mut cells = Vec::new();
    for &h in &config.horizons {
        for &(label, _, _) in &FORECAST_MODELS {
            for &p in processes {
                let v: Vec<&RepScore> = scores
                    .iter()
                    .filter(|s| s.model == label && s.process == p && s.horizon == h)
                    .collect();
                let n = v.len();
                let avg = |f: fn(&RepScore) -> f64| {
                    if n == 0 {
                        f64::NAN
                    } else {
                        v.iter().map(|s| f(s)).sum::<f64>() / n as f64
                    }
                };
                cells.push(GridCell {
                    model: label.to_string(),
                    process: p.to_string(),
                    horizon: h,
                    mspe: avg(|s| s.mspe),
                    mape: avg(|s| s.mape),
                    successes: n,
                    failures: failures
                        .iter()
                        .filter(|f: &&Failure| f.label == label && f.process.as_deref() == Some(p))
                        .count(),
                    reference_mspe: forecast_reference(label, p, h),
                });
            }
        }
    }
    Ok(ForecastReport { cells, scores, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: StudyKind, reps: usize) -> StudyConfig {
        let mut c = StudyConfig::new(kind, true);
        c.reps = reps;
        c
    }

    #[test]
    fn config_defaults_and_validation() {
        assert_eq!(StudyConfig::new(StudyKind::Table1, false).reps, 1000);
        assert_eq!(StudyConfig::new(StudyKind::Table2, false).reps, 100);
        assert_eq!(StudyConfig::new(StudyKind::Table3, false).reps, 500);
        assert_eq!(StudyConfig::new(StudyKind::Table2, true).reps, 20);
        let mut c = small(StudyKind::Table3, 0);
        assert!(c.validate().is_err());
        c.reps = 1;
        c.train = 500;
        assert!(c.validate().is_err());
        c.train = 490;
        assert!(c.validate().is_err(), "horizon 50 exceeds 10 test steps");
    }

    #[test]
    fn table1_small_run_is_reproducible() {
        let mut c = small(StudyKind::Table1, 6);
        c.lengths = vec![100];
        c.seed = 3;
        let a = run_table1(&c).unwrap();
        let b = run_table1(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.estimates.len() + a.failures.len(), 6);
        let s = a.summary(100, Method::ConstrainedCls, "alpha_1").unwrap();
        assert!((s.mean - 0.5).abs() < 0.15);
        assert!(a.render().contains("alpha_1"));
        let mut buf = Vec::new();
        a.write_summary_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }

    #[test]
    fn forecast_grid_is_complete() {
        let mut c = small(StudyKind::Table3, 2);
        c.lengths = vec![120];
        c.train = 100;
        c.horizons = vec![1, 20];
        let r = run_table3(&c).unwrap();
        assert_eq!(r.cells.len(), 4 * 4 * 2);
        for cell in &r.cells {
            assert_eq!(cell.successes + cell.failures, 2);
        }
        assert_eq!(r.rows().len(), 32);
        assert!(r.render().contains("P3"));
        let (rate, n) = r.win_rate("B", "A", "P3", 1);
        assert!(n <= 2 && (0.0..=1.0).contains(&rate));
    }

    #[test]
    fn references() {
        assert_eq!(forecast_reference("B", "P3", 1), Some(5.9));
        assert_eq!(forecast_reference("D", "P3", 10), Some(9.7));
        assert_eq!(forecast_reference("A", "P1", 2), None);
        assert!(estimation_reference(StudyKind::Table1, 500, Method::ConstrainedCls).is_some());
    }

    #[test]
    fn stats_helpers() {
        let (m, sd) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(sd, 1.0);
        assert_eq!(median(vec![3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}

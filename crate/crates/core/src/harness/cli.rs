//! `countnet` command line.
//!
//! Exit status: 0 on success, 1 for invalid input (flags, files, formats,
//! parameter values), 2 for numerical failures (singular designs,
//! non-stationary parameters, overflow).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::PnarModel;
use crate::design::{CountSeries, Intercept, ModelOrder, ParamVector};
use crate::error::{Error, Result};
use crate::fit::{Method, ModelKind};
use crate::gnari::{gnari_bound, GnariModel};
use crate::harness::config::{merge_config, read_config};
use crate::harness::eval::EvalReport;
use crate::harness::fixture::{write_fixture, FIXTURE_SEED};
use crate::harness::io::{
    read_adjacency_csv, read_edge_list_csv, read_fit_json, read_forecast_csv, read_series_csv, split_train_test,
    write_fit_json, write_forecast_csv, write_series_csv,
};
use crate::harness::models::{default_method, fit_model, forecast};
use crate::harness::pipeline::{run_pipeline, PipelineConfig};
use crate::harness::select::{backward_bic_select, order_from_json, SelectionSpec};
use crate::harness::studies::{run_table1, run_table2, run_table3, StudyConfig, StudyKind};
use crate::network::Network;
use crate::ngnar::{NgnarFitOptions, NgnarModel, ResponseFunction};

#[derive(Parser, Debug)]
#[command(name = "countnet", version, about = "Count network time series: simulate, fit, forecast, evaluate")]
struct Cli {
    /// Plain-text `key = value` file supplying defaults for the flags.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a GNARI, NGNAR or PNAR process to a series CSV.
    Simulate(SimulateArgs),
    /// Fit a model to a series and write the fit JSON.
    Fit(FitArgs),
    /// Forecast from a fit JSON.
    Forecast(ForecastArgs),
    /// Score forecast CSVs against the held-out part of a series.
    Eval(EvalArgs),
    /// Backward BIC order selection.
    SelectOrder(SelectArgs),
    /// Simulation studies (table1, table2, table3) or the forecasting pipeline.
    Study(StudyArgs),
    /// Write the synthetic county fixture.
    Fixture(FixtureArgs),
}

#[derive(Args, Debug)]
struct NetArgs {
    /// Adjacency matrix CSV (0/1, optional header of node ids).
    #[arg(long, value_name = "PATH")]
    net: Option<PathBuf>,
    /// Undirected edge list CSV (`from,to` over node ids).
    #[arg(long, value_name = "PATH", conflicts_with = "net")]
    edges: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: String,
    #[command(flatten)]
    net: NetArgs,
    /// Autoregressive coefficients per lag, `;`-separated (empty entry drops the lag).
    #[arg(long, allow_hyphen_values = true)]
    alpha: String,
    /// Network coefficients: lags separated by `;`, stages by `,`.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    beta: String,
    /// GNARI innovation mean: one value, or one per node (`,`-separated).
    #[arg(long)]
    lambda: Option<String>,
    /// NGNAR intercept: one value, or one per node.
    #[arg(long, allow_hyphen_values = true)]
    alpha0: Option<String>,
    /// PNAR intercept.
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long, default_value = "softplus")]
    response: String,
    #[arg(long = "T", value_name = "T")]
    length: usize,
    #[arg(long, default_value_t = 100)]
    burn_in: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OrderArgs {
    /// Stage depth per lag, `,`-separated; its length is the lag order.
    #[arg(long, default_value = "1")]
    stages: String,
    /// Autoregressive inclusion flags per lag (`1,0,1`); all lags by default.
    #[arg(long)]
    alpha_lags: Option<String>,
    /// Order from a `select-order` JSON (overrides `--stages`).
    #[arg(long, value_name = "PATH")]
    order: Option<PathBuf>,
    /// One intercept per node.
    #[arg(long)]
    local_intercept: bool,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    model: String,
    /// cls, constrained-cls, cmle or qmle (model default when omitted).
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    series: PathBuf,
    #[command(flatten)]
    net: NetArgs,
    /// Fit on the first N steps only.
    #[arg(long)]
    train: Option<usize>,
    #[command(flatten)]
    order: OrderArgs,
    #[arg(long, default_value = "softplus")]
    response: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra perturbed optimizer starts (NGNAR).
    #[arg(long, default_value_t = 0)]
    multi_start: usize,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    series: PathBuf,
    #[command(flatten)]
    net: NetArgs,
    /// Forecast from the end of the first N steps.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    series: PathBuf,
    /// Training length; the test set is the rest of the series.
    #[arg(long)]
    train: usize,
    /// Forecast CSV, optionally labelled `LABEL=PATH`; repeatable.
    #[arg(long, required = true)]
    forecast: Vec<String>,
    /// Horizons to report, `,`-separated (every horizon by default).
    #[arg(long)]
    horizons: Option<String>,
    #[arg(long, default_value = "data")]
    process: String,
    #[arg(long)]
    out: PathBuf,
    /// Plot data (horizon, model, mape).
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    series: PathBuf,
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    max_lag: usize,
    #[arg(long, default_value_t = 1)]
    start_stage: usize,
    #[arg(long)]
    local_intercept: bool,
    #[arg(long, default_value = "softplus")]
    response: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct StudyArgs {
    /// table1, table2, table3 or pipeline.
    study: String,
    #[arg(long)]
    reps: Option<usize>,
    /// Reduced replication counts (50/20/50).
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Series lengths, `,`-separated.
    #[arg(long = "T", value_name = "T")]
    lengths: Option<String>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Series for the pipeline study.
    #[arg(long)]
    series: Option<PathBuf>,
    #[command(flatten)]
    net: NetArgs,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Forecast-study horizons, `,`-separated.
    #[arg(long)]
    horizons: Option<String>,
    #[arg(long, default_value_t = 14)]
    max_lag: usize,
    #[arg(long)]
    local_intercept: bool,
    #[arg(long, default_value = "softplus")]
    response: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = FIXTURE_SEED)]
    seed: u64,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("invalid {what} value {t:?}")))
        })
        .collect()
}

/// `alpha` per lag (`None` when dropped) and `beta` per lag and stage.
type LagCoefficients = (Vec<Option<f64>>, Vec<Vec<f64>>);

fn parse_coefficients(alpha: &str, beta: &str) -> Result<LagCoefficients> {
    let a: Vec<Option<f64>> = alpha
        .split(';')
        .map(|t| {
            let t = t.trim();
            if t.is_empty() {
                Ok(None)
            } else {
                t.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::InvalidArgument(format!("invalid alpha value {t:?}")))
            }
        })
        .collect::<Result<_>>()?;
    let b: Vec<Vec<f64>> = if beta.trim().is_empty() {
        Vec::new()
    } else {
        beta.split(';').map(|lag| parse_list(lag, "beta")).collect::<Result<_>>()?
    };
    let p = a.len().max(b.len());
    let mut a = a;
    let mut b = b;
    a.resize(p, None);
    b.resize(p, Vec::new());
    Ok((a, b))
}

fn values_for(order: &ModelOrder, alpha: &[Option<f64>], beta: &[Vec<f64>], intercept: &[f64], nodes: usize) -> Vec<f64> {
    use crate::design::Term;
    order
        .layout(nodes)
        .iter()
        .map(|t| match *t {
            Term::Alpha { lag, .. } => alpha[lag - 1].unwrap_or(0.0),
            Term::Beta { lag, stage } => beta[lag - 1][stage - 1],
            Term::Intercept { node } => intercept[node.unwrap_or(0).min(intercept.len() - 1)],
        })
        .collect()
}

fn load_net(args: &NetArgs, series: Option<&CountSeries>) -> Result<Network> {
    let ids = series.map(|s| s.node_ids().to_vec());
    let net = match (&args.net, &args.edges) {
        (Some(p), _) => read_adjacency_csv(p)?,
        (None, Some(p)) => read_edge_list_csv(p, ids.clone())?,
        (None, None) => {
            return Err(Error::InvalidArgument(
                "a network is required: pass --net ADJACENCY.csv or --edges EDGES.csv".into(),
            ))
        }
    };
    match ids {
        Some(ids) if ids != net.node_ids() => {
            let default: Vec<String> = (1..=net.node_count()).map(|i| i.to_string()).collect();
            if net.node_ids() == default.as_slice() && ids.len() == net.node_count() {
                net.with_node_ids(ids)
            } else {
                Err(Error::InvalidArgument(format!(
                    "series nodes ({}) do not match network nodes ({})",
                    ids.join(","),
                    net.node_ids().join(",")
                )))
            }
        }
        _ => Ok(net),
    }
}

/// Reads a series and matches it to a network; series columns are
/// reordered to the network's node order when the id sets agree.
fn load_series_and_net(series: &Path, net: &NetArgs) -> Result<(CountSeries, Network)> {
    let s = read_series_csv(series)?;
    let network = load_net(net, Some(&s))?;
    let s = if s.node_ids() != network.node_ids() {
        let perm: Option<Vec<usize>> = network
            .node_ids()
            .iter()
            .map(|id| s.node_ids().iter().position(|x| x == id))
            .collect();
        match perm {
            Some(perm) => s.relabel(&perm)?,
            None => return Err(Error::InvalidArgument("series and network node ids differ".into())),
        }
    } else {
        s
    };
    Ok((s, network))
}

fn training_part(series: CountSeries, train: Option<usize>) -> Result<CountSeries> {
    match train {
        None => Ok(series),
        Some(n) => Ok(split_train_test(&series, n)?.0),
    }
}

fn parse_model(text: &str) -> Result<ModelKind> {
    text.parse()
}

fn parse_method(model: ModelKind, text: Option<&str>) -> Result<Method> {
    match text {
        None => Ok(default_method(model)),
        Some(t) => t.parse(),
    }
}

fn parse_response(text: &str) -> Result<ResponseFunction> {
    text.parse()
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let model = parse_model(&args.model)?;
    let net = match (&args.net.net, &args.net.edges) {
        (None, None) => Network::five_node(),
        _ => load_net(&args.net, None)?,
    };
    let n = net.node_count();
    let (alpha, beta) = parse_coefficients(&args.alpha, &args.beta)?;
    let stages: Vec<usize> = beta.iter().map(Vec::len).collect();
    let mask: Vec<bool> = alpha.iter().map(Option::is_some).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let intercept = |text: Option<&String>, flag: &str| -> Result<Vec<f64>> {
        let v: Vec<f64> = parse_list(
            text.ok_or_else(|| Error::InvalidArgument(format!("--{flag} is required for {model}")))?,
            flag,
        )?;
        if v.len() != 1 && v.len() != n {
            return Err(Error::InvalidArgument(format!(
                "--{flag} takes one value or one per node ({n})"
            )));
        }
        Ok(v)
    };
    let series = match model {
        ModelKind::Gnari => {
            let lam = intercept(args.lambda.as_ref(), "lambda")?;
            let order = ModelOrder::new(stages).with_alpha_mask(mask).local_intercept(lam.len() > 1);
            let values = values_for(&order, &alpha, &beta, &lam, n);
            let bounds = order.layout(n).iter().map(gnari_bound).collect();
            let m = GnariModel::new(net.clone(), order.clone(), ParamVector::new(&order, net.node_ids(), values, bounds)?)?;
            m.simulate(args.length, args.burn_in, &mut rng)?
        }
        ModelKind::Ngnar => {
            let a0 = intercept(args.alpha0.as_ref(), "alpha0")?;
            let order = ModelOrder::new(stages)
                .with_alpha_mask(mask)
                .with_intercept(Intercept::Additive)
                .local_intercept(a0.len() > 1);
            let values = values_for(&order, &alpha, &beta, &a0, n);
            let m = NgnarModel::new(
                net.clone(),
                order.clone(),
                ParamVector::unbounded(&order, net.node_ids(), values)?,
                parse_response(&args.response)?,
            )?;
            m.simulate(args.length, args.burn_in, &mut rng)?
        }
        ModelKind::Pnar => {
            if alpha.len() != 1 || beta[0].len() != 1 {
                return Err(Error::InvalidArgument("PNAR(1) takes one alpha and one beta".into()));
            }
            let beta0 = args
                .beta0
                .ok_or_else(|| Error::InvalidArgument("--beta0 is required for pnar".into()))?;
            PnarModel::new(net.clone(), beta0, alpha[0].unwrap_or(0.0), beta[0][0])?.simulate(
                args.length,
                args.burn_in,
                &mut rng,
            )?
        }
        ModelKind::Gnar => {
            return Err(Error::InvalidArgument(
                "gnar is a real-valued comparator; simulate gnari, ngnar or pnar".into(),
            ))
        }
    };
    let series = series.with_node_ids(net.node_ids().to_vec())?;
    write_series_csv(&series, &args.out)?;
    println!("wrote {} ({} steps x {} nodes)", args.out.display(), series.len(), n);
    Ok(())
}

fn order_from_args(args: &OrderArgs) -> Result<ModelOrder> {
    if let Some(path) = &args.order {
        let text = std::fs::read_to_string(path)?;
        let mut order = order_from_json(&text)?;
        if args.local_intercept {
            order.local_intercept = true;
        }
        return Ok(order);
    }
    let stages: Vec<usize> = parse_list(&args.stages, "stage")?;
    let mask = match &args.alpha_lags {
        Some(t) => parse_list::<u8>(t, "alpha lag flag")?.into_iter().map(|v| v != 0).collect(),
        None => vec![true; stages.len()],
    };
    let order = ModelOrder::new(stages)
        .with_alpha_mask(mask)
        .local_intercept(args.local_intercept);
    order.validate()?;
    Ok(order)
}

fn fit(args: FitArgs) -> Result<()> {
    let model = parse_model(&args.model)?;
    let method = parse_method(model, args.method.as_deref())?;
    let (series, net) = load_series_and_net(&args.series, &args.net)?;
    let train = training_part(series, args.train)?;
    let order = order_from_args(&args.order)?;
    let mut options = NgnarFitOptions {
        seed: args.seed,
        multi_start: args.multi_start,
        ..Default::default()
    };
    if let Some(m) = args.max_iter {
        options.optimizer.max_iter = m;
    }
    let fit = fit_model(model, method, &train, &net, &order, parse_response(&args.response)?, &options)?;
    write_fit_json(&fit, &args.out)?;
    println!(
        "{model} {method}: objective {:.6} converged {} iterations {}",
        fit.objective, fit.converged, fit.iterations
    );
    for (name, v) in fit.params.names().iter().zip(fit.params.values()).take(12) {
        println!("  {name:<16} {v:.6}");
    }
    if fit.params.len() > 12 {
        println!("  ... {} more", fit.params.len() - 12);
    }
    for note in &fit.notes {
        eprintln!("note: {note}");
    }
    if !fit.converged {
        eprintln!("warning: optimizer did not converge");
    }
    Ok(())
}

fn forecast_cmd(args: ForecastArgs) -> Result<()> {
    let (series, net) = load_series_and_net(&args.series, &args.net)?;
    let history = training_part(series, args.train)?;
    let fit = read_fit_json(&args.fit, net.node_ids())?;
    let f = forecast(&fit, &net, &history, args.horizon)?;
    write_forecast_csv(&f, net.node_ids(), &args.out)?;
    println!("wrote {} ({} steps)", args.out.display(), args.horizon);
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let series = read_series_csv(&args.series)?;
    let (_, test) = split_train_test(&series, args.train)?;
    let mut forecasts: Vec<(String, DMatrix<f64>)> = Vec::new();
    for spec in &args.forecast {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) => (l.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (stem, p)
            }
        };
        let (f, ids) = read_forecast_csv(&path)?;
        // align forecast rows with the series' node order
        let perm: Option<Vec<usize>> = series.node_ids().iter().map(|id| ids.iter().position(|x| x == id)).collect();
        let perm = perm.ok_or_else(|| {
            Error::InvalidArgument(format!("forecast {} does not cover the series nodes", path.display()))
        })?;
        let f = DMatrix::from_fn(perm.len(), f.ncols(), |i, h| f[(perm[i], h)]);
        forecasts.push((label, f));
    }
    let h_max = forecasts.iter().map(|(_, f)| f.ncols()).max().unwrap_or(0).min(test.len());
    let truth = DMatrix::from_fn(test.node_count(), h_max, |i, h| test.get(i, h) as f64);
    let forecasts: Vec<(String, DMatrix<f64>)> = forecasts
        .into_iter()
        .map(|(l, f)| {
            let k = f.ncols().min(h_max);
            (l, f.columns(0, k).into_owned())
        })
        .collect();
    let horizons: Vec<usize> = match &args.horizons {
        Some(t) => parse_list(t, "horizon")?,
        None => Vec::new(),
    };
    let report = EvalReport::evaluate(&args.process, &forecasts, &truth, &horizons)?;
    report.write_csv(create(&args.out)?)?;
    if let Some(p) = &args.plot {
        report.write_plot_csv(create(p)?)?;
    }
    for (label, _) in &forecasts {
        let rows: Vec<_> = report.rows.iter().filter(|r| &r.model == label).collect();
        if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
            println!(
                "{label}: h={} mspe {:.4} mape {:.4}; h={} mspe {:.4} mape {:.4}",
                first.horizon, first.mspe, first.mape, last.horizon, last.mspe, last.mape
            );
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::fs::File::create(path)?)
}

fn select_order(args: SelectArgs) -> Result<()> {
    let model = parse_model(&args.model)?;
    let (series, net) = load_series_and_net(&args.series, &args.net)?;
    let train = training_part(series, args.train)?;
    let mut spec = SelectionSpec::new(model).local_intercept(args.local_intercept);
    if let Some(m) = &args.method {
        spec = spec.with_method(m.parse()?);
    }
    spec.response = parse_response(&args.response)?;
    spec.start_stage = args.start_stage;
    spec.ngnar.seed = args.seed;
    let sel = backward_bic_select(&train, &net, args.max_lag, &spec)?;
    let doc = sel.to_document();
    let mut out = create(&args.out)?;
    std::io::Write::write_all(&mut out, (sel.to_json()? + "\n").as_bytes())?;
    println!("criterion: {}{}", sel.criterion, if sel.approximate { " (quadratic approximation)" } else { "" });
    for step in &sel.path {
        println!("  {:<12} bic {:.4} ({} params)", step.removed, step.bic, step.params);
    }
    println!(
        "selected: p = {}, alpha lags {:?}, stages {:?}",
        doc.order.lags,
        doc.order
            .alpha_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(j, _)| j + 1)
            .collect::<Vec<_>>(),
        doc.order.stages
    );
    match sel.bic_poisson {
        Some(p) => println!("BIC at selection: gaussian {:.4}, poisson {:.4}", sel.bic_gaussian, p),
        None => println!("BIC at selection: gaussian {:.4}, poisson n/a", sel.bic_gaussian),
    }
    Ok(())
}

fn study(args: StudyArgs) -> Result<()> {
    if args.study == "pipeline" {
        let series = args
            .series
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("study pipeline needs --series".into()))?;
        let (series, net) = load_series_and_net(series, &args.net)?;
        let cfg = PipelineConfig {
            train: args.train.unwrap_or(700),
            horizon: args.horizon,
            max_lag: args.max_lag,
            local_intercept: args.local_intercept,
            response: parse_response(&args.response)?,
            seed: args.seed,
            ..Default::default()
        };
        let out = run_pipeline(&series, &net, &cfg)?;
        for m in &out.models {
            let last = out.report.rows.iter().filter(|r| r.model == m.label).last();
            println!(
                "{:<6} params {:>3} converged {} mspe(1) {:.3} mape(H) {:.3}",
                m.label,
                m.fit.params.len(),
                m.fit.converged,
                out.report.get(&m.label, "data", 1).map_or(f64::NAN, |r| r.mspe),
                last.map_or(f64::NAN, |r| r.mape)
            );
        }
        if let Some(dir) = &args.out {
            out.write_to_dir(dir)?;
            println!("wrote {}", dir.display());
        }
        return Ok(());
    }
    let kind: StudyKind = args.study.parse()?;
    let mut cfg = StudyConfig::new(kind, args.quick);
    cfg.seed = args.seed;
    if let Some(r) = args.reps {
        cfg.reps = r;
    }
    if let Some(t) = &args.lengths {
        cfg.lengths = parse_list(t, "T")?;
    }
    if let Some(b) = args.burn_in {
        cfg.burn_in = b;
    }
    if let Some(t) = args.train {
        cfg.train = t;
    }
    if let Some(h) = &args.horizons {
        cfg.horizons = parse_list(h, "horizon")?;
    }
    if args.net.net.is_some() || args.net.edges.is_some() {
        cfg.net = load_net(&args.net, None)?;
    }
    match kind {
        StudyKind::Table1 | StudyKind::Table2 => {
            let report = if kind == StudyKind::Table1 { run_table1(&cfg)? } else { run_table2(&cfg)? };
            print!("{}", report.render());
            if !report.failures.is_empty() {
                eprintln!("{} fits failed; see the failures file", report.failures.len());
            }
            if let Some(dir) = &args.out {
                for p in report.write_to_dir(dir)? {
                    println!("wrote {}", p.display());
                }
            }
        }
        StudyKind::Table3 => {
            let report = run_table3(&cfg)?;
            print!("{}", report.render());
            if !report.failures.is_empty() {
                eprintln!("{} fits failed; see the failures file", report.failures.len());
            }
            if let Some(dir) = &args.out {
                for p in report.write_to_dir(dir)? {
                    println!("wrote {}", p.display());
                }
            }
        }
    }
    Ok(())
}

fn fixture(args: FixtureArgs) -> Result<()> {
    for p in write_fixture(&args.out, args.seed)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn run(argv: Vec<String>) -> Result<std::result::Result<(), clap::Error>> {
    let argv = match config_path(&argv) {
        Some(p) => merge_config(&argv, &read_config(p)?),
        None => argv,
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => return Ok(Err(e)),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a)?,
        Command::Fit(a) => fit(a)?,
        Command::Forecast(a) => forecast_cmd(a)?,
        Command::Eval(a) => eval(a)?,
        Command::SelectOrder(a) => select_order(a)?,
        Command::Study(a) => study(a)?,
        Command::Fixture(a) => fixture(a)?,
    }
    Ok(Ok(()))
}

/// Runs the command line (`argv[0]` is the program name) and returns the
/// process exit status.
pub fn cli_main(argv: Vec<String>) -> i32 {
    match run(argv) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            let _ = e.print();
            match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

//! Model orders, parameter layout and the shared regression design.
//!
//! Every model in the crate has a conditional mean of the form
//! `g(eta_{i,t})` where the linear predictor is
//!
//! ```text
//! eta_{i,t} = c_i + sum_j ( a_{i,j} X_{i,t-j} + sum_{r<=s_j} b_{j,r} S_{t,i,r,j} )
//! S_{t,i,r,j} = sum_{q in N^(r)(i)} w_{i,q} X_{q,t-j}
//! ```
//!
//! so one design matrix and one parameter layout serve GNAR, GNARI, NGNAR
//! and PNAR(1). Parameters are laid out lag by lag: the autoregressive
//! coefficient(s) of lag `j` (one column when global, one per node when
//! local, node-within-lag), then `b_{j,1..s_j}`, and finally the intercept
//! column(s). Rows are node-major: all times of node 1, then node 2, ...

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// N×T matrix of non-negative counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountSeries {
    nodes: usize,
    len: usize,
    /// node-major: `data[i * len + t]`
    data: Vec<u64>,
    node_ids: Vec<String>,
    time_index: Vec<String>,
}

impl CountSeries {
    /// One inner vector per node.
    pub fn from_node_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let nodes = rows.len();
        if nodes == 0 {
            return Err(Error::Dimension("series needs at least one node".into()));
        }
        let len = rows[0].len();
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::Dimension("ragged node rows".into()));
        }
        Ok(Self {
            nodes,
            len,
            data: rows.concat(),
            node_ids: (1..=nodes).map(|i| i.to_string()).collect(),
            time_index: (1..=len).map(|t| t.to_string()).collect(),
        })
    }

    /// One inner vector per time step.
    pub fn from_time_rows(rows: &[Vec<u64>], nodes: usize) -> Result<Self> {
        let len = rows.len();
        let mut data = vec![0; nodes * len];
        for (t, row) in rows.iter().enumerate() {
            if row.len() != nodes {
                return Err(Error::Dimension(format!(
                    "time step {} has {} values, expected {nodes}",
                    t + 1,
                    row.len()
                )));
            }
            for (i, &x) in row.iter().enumerate() {
                data[i * len + t] = x;
            }
        }
        Ok(Self {
            nodes,
            len,
            data,
            node_ids: (1..=nodes).map(|i| i.to_string()).collect(),
            time_index: (1..=len).map(|t| t.to_string()).collect(),
        })
    }

    pub fn zeros(nodes: usize, len: usize) -> Self {
        Self {
            nodes,
            len,
            data: vec![0; nodes * len],
            node_ids: (1..=nodes).map(|i| i.to_string()).collect(),
            time_index: (1..=len).map(|t| t.to_string()).collect(),
        }
    }

    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.nodes {
            return Err(Error::Dimension(format!(
                "{} node ids for {} nodes",
                ids.len(),
                self.nodes
            )));
        }
        self.node_ids = ids;
        Ok(self)
    }

    pub fn with_time_index(mut self, index: Vec<String>) -> Result<Self> {
        if index.len() != self.len {
            return Err(Error::Dimension(format!(
                "{} time labels for {} steps",
                index.len(),
                self.len
            )));
        }
        self.time_index = index;
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn time_index(&self) -> &[String] {
        &self.time_index
    }

    #[inline]
    pub fn get(&self, node: usize, t: usize) -> u64 {
        self.data[node * self.len + t]
    }

    #[inline]
    pub(crate) fn set(&mut self, node: usize, t: usize, x: u64) {
        self.data[node * self.len + t] = x;
    }

    pub fn node(&self, i: usize) -> &[u64] {
        &self.data[i * self.len..(i + 1) * self.len]
    }

    /// Counts of all nodes at time `t`.
    pub fn column(&self, t: usize) -> Vec<u64> {
        (0..self.nodes).map(|i| self.get(i, t)).collect()
    }

    /// Sub-series over the time range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len {
            return Err(Error::Dimension(format!(
                "time range {start}..{end} outside 0..{}",
                self.len
            )));
        }
        let rows = (0..self.nodes)
            .map(|i| self.node(i)[start..end].to_vec())
            .collect();
        let mut s = Self::from_node_rows(rows)?;
        s.node_ids = self.node_ids.clone();
        s.time_index = self.time_index[start..end].to_vec();
        Ok(s)
    }

    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.nodes {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut rows = vec![Vec::new(); self.nodes];
        let mut ids = vec![String::new(); self.nodes];
        for i in 0..self.nodes {
            rows[perm[i]] = self.node(i).to_vec();
            ids[perm[i]] = self.node_ids[i].clone();
        }
        Self::from_node_rows(rows)?.with_node_ids(ids)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&x| x as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// How the model's constant enters the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intercept {
    /// Mean of the additive count innovation (GNARI `lambda`).
    InnovationMean,
    /// Additive constant inside the predictor (`alpha_0`, PNAR `beta_0`).
    Additive,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOrder {
    /// Lag order `p`.
    pub lags: usize,
    /// Stage depths `[s_1 .. s_p]`.
    pub stages: Vec<usize>,
    /// Autoregressive inclusion flags `[I_1 .. I_p]`.
    pub alpha_mask: Vec<bool>,
    pub global_alpha: bool,
    pub intercept: Intercept,
    pub local_intercept: bool,
}

impl ModelOrder {
    /// Global order with every autoregressive lag included and one
    /// innovation-mean intercept.
    pub fn new(stages: Vec<usize>) -> Self {
        let p = stages.len();
        Self {
            lags: p,
            stages,
            alpha_mask: vec![true; p],
            global_alpha: true,
            intercept: Intercept::InnovationMean,
            local_intercept: false,
        }
    }

    pub fn with_alpha_mask(mut self, mask: Vec<bool>) -> Self {
        self.alpha_mask = mask;
        self
    }

    pub fn with_intercept(mut self, intercept: Intercept) -> Self {
        self.intercept = intercept;
        self
    }

    pub fn local_alpha(mut self, local: bool) -> Self {
        self.global_alpha = !local;
        self
    }

    pub fn local_intercept(mut self, local: bool) -> Self {
        self.local_intercept = local;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lags == 0 {
            return Err(Error::InvalidArgument("lag order must be >= 1".into()));
        }
        if self.stages.len() != self.lags || self.alpha_mask.len() != self.lags {
            return Err(Error::InvalidArgument(format!(
                "order with p = {} needs {0} stage depths and {0} alpha flags (got {} and {})",
                self.lags,
                self.stages.len(),
                self.alpha_mask.len()
            )));
        }
        Ok(())
    }

    /// Checks the order against a network: stage depths cannot exceed the
    /// deepest non-empty stage of any node.
    pub fn validate_for(&self, net: &Network) -> Result<()> {
        self.validate()?;
        let d = net.diameter();
        if let Some(&s) = self.stages.iter().find(|&&s| s > d) {
            return Err(Error::InvalidArgument(format!(
                "stage depth {s} exceeds the network's deepest stage {d}"
            )));
        }
        Ok(())
    }

    pub fn max_stage(&self) -> usize {
        self.stages.iter().copied().max().unwrap_or(0)
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept != Intercept::None
    }

    /// Parameter layout for a network of `nodes` nodes.
    pub fn layout(&self, nodes: usize) -> Vec<Term> {
        let mut terms = Vec::new();
        for j in 1..=self.lags {
            if self.alpha_mask[j - 1] {
                if self.global_alpha {
                    terms.push(Term::Alpha { lag: j, node: None });
                } else {
                    terms.extend((0..nodes).map(|i| Term::Alpha {
                        lag: j,
                        node: Some(i),
                    }));
                }
            }
            terms.extend((1..=self.stages[j - 1]).map(|r| Term::Beta { lag: j, stage: r }));
        }
        if self.has_intercept() {
            if self.local_intercept {
                terms.extend((0..nodes).map(|i| Term::Intercept { node: Some(i) }));
            } else {
                terms.push(Term::Intercept { node: None });
            }
        }
        terms
    }

    pub fn n_params(&self, nodes: usize) -> usize {
        let per_alpha = if self.global_alpha { 1 } else { nodes };
        let alphas: usize = self.alpha_mask.iter().filter(|&&m| m).count() * per_alpha;
        let betas: usize = self.stages.iter().sum();
        let intercepts = match (self.has_intercept(), self.local_intercept) {
            (false, _) => 0,
            (true, false) => 1,
            (true, true) => nodes,
        };
        alphas + betas + intercepts
    }

    /// Number of removable lag terms (`alpha` lags plus `beta` stages).
    pub fn term_count(&self) -> usize {
        self.alpha_mask.iter().filter(|&&m| m).count() + self.stages.iter().sum::<usize>()
    }
}

/// One coefficient slot in the parameter layout. Lags and stages are 1-based,
/// nodes 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Term {
    Alpha { lag: usize, node: Option<usize> },
    Beta { lag: usize, stage: usize },
    Intercept { node: Option<usize> },
}

impl Term {
    pub fn name(&self, intercept: Intercept, node_ids: &[String]) -> String {
        match *self {
            Term::Alpha { lag, node: None } => format!("alpha_{lag}"),
            Term::Alpha {
                lag,
                node: Some(i),
            } => format!("alpha_{lag}[{}]", node_ids[i]),
            Term::Beta { lag, stage } => format!("beta_{lag}_{stage}"),
            Term::Intercept { node } => {
                let base = match intercept {
                    Intercept::InnovationMean => "lambda",
                    _ => "alpha_0",
                };
                match node {
                    None => base.to_string(),
                    Some(i) => format!("{base}[{}]", node_ids[i]),
                }
            }
        }
    }
}

/// Closed interval bound on one parameter.
pub type Bound = (f64, f64);

pub const UNBOUNDED: Bound = (f64::NEG_INFINITY, f64::INFINITY);

/// Coefficient values in the shared layout, with names and box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    terms: Vec<Term>,
    names: Vec<String>,
    values: Vec<f64>,
    bounds: Vec<Bound>,
}

impl ParamVector {
    pub fn new(
        order: &ModelOrder,
        node_ids: &[String],
        values: Vec<f64>,
        bounds: Vec<Bound>,
    ) -> Result<Self> {
        order.validate()?;
        let terms = order.layout(node_ids.len());
        if values.len() != terms.len() || bounds.len() != terms.len() {
            return Err(Error::Dimension(format!(
                "order needs {} parameters, got {} values and {} bounds",
                terms.len(),
                values.len(),
                bounds.len()
            )));
        }
        let names: Vec<String> = terms
            .iter()
            .map(|t| t.name(order.intercept, node_ids))
            .collect();
        for ((v, b), name) in values.iter().zip(&bounds).zip(&names) {
            if !v.is_finite() || *v < b.0 || *v > b.1 {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} outside its bound [{}, {}]",
                    b.0, b.1
                )));
            }
        }
        Ok(Self {
            terms,
            names,
            values,
            bounds,
        })
    }

    pub fn unbounded(order: &ModelOrder, node_ids: &[String], values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(order, node_ids, values, vec![UNBOUNDED; n])
    }

    /// Global coefficients: `alpha[j]` for each included lag, `beta[j][r]`,
    /// and a single intercept (ignored when the order has none).
    pub fn global(
        order: &ModelOrder,
        node_ids: &[String],
        alpha: &[f64],
        beta: &[Vec<f64>],
        intercept: f64,
        bounds: impl Fn(&Term) -> Bound,
    ) -> Result<Self> {
        let terms = order.layout(node_ids.len());
        let mut values = Vec::with_capacity(terms.len());
        for t in &terms {
            values.push(match *t {
                Term::Alpha { lag, .. } => *alpha.get(lag - 1).ok_or_else(|| {
                    Error::Dimension(format!("missing alpha for lag {lag}"))
                })?,
                Term::Beta { lag, stage } => *beta
                    .get(lag - 1)
                    .and_then(|b| b.get(stage - 1))
                    .ok_or_else(|| {
                        Error::Dimension(format!("missing beta for lag {lag} stage {stage}"))
                    })?,
                Term::Intercept { .. } => intercept,
            });
        }
        let b = terms.iter().map(bounds).collect();
        Self::new(order, node_ids, values, b)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| self.values[k])
    }

    /// Indices of parameters sitting on a finite bound.
    pub fn active_bounds(&self) -> Vec<usize> {
        self.values
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .filter(|(_, (v, b))| **v == b.0 || **v == b.1)
            .map(|(k, _)| k)
            .collect()
    }

    /// Expanded per-node/per-lag view.
    pub fn coefficients(&self, order: &ModelOrder, nodes: usize) -> Coefficients {
        let mut c = Coefficients {
            alpha: vec![vec![0.0; nodes]; order.lags],
            beta: order.stages.iter().map(|&s| vec![0.0; s]).collect(),
            intercept: vec![0.0; nodes],
        };
        for (t, &v) in self.terms.iter().zip(&self.values) {
            match *t {
                Term::Alpha { lag, node: None } => c.alpha[lag - 1].iter_mut().for_each(|a| *a = v),
                Term::Alpha {
                    lag,
                    node: Some(i),
                } => c.alpha[lag - 1][i] = v,
                Term::Beta { lag, stage } => c.beta[lag - 1][stage - 1] = v,
                Term::Intercept { node: None } => c.intercept.iter_mut().for_each(|a| *a = v),
                Term::Intercept { node: Some(i) } => c.intercept[i] = v,
            }
        }
        c
    }
}

/// Per-node, per-lag expansion of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    /// `alpha[j-1][i]`, zero for excluded lags.
    pub alpha: Vec<Vec<f64>>,
    /// `beta[j-1][r-1]`.
    pub beta: Vec<Vec<f64>>,
    /// `intercept[i]`, zero when the order has none.
    pub intercept: Vec<f64>,
}

impl Coefficients {
    /// Linear predictor for every node given lagged states
    /// (`lags[j-1][q]` = value of node `q` at lag `j`).
    pub fn linear_predictor(&self, net: &Network, lags: &[&[f64]], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut eta = self.intercept[i];
            for (j, x) in lags.iter().enumerate() {
                eta += self.alpha[j][i] * x[i];
                for (r, &b) in self.beta[j].iter().enumerate() {
                    if b != 0.0 {
                        eta += b * net.stage_sum(i, r + 1, x);
                    }
                }
            }
            *o = eta;
        }
    }
}

fn check_length(series: &CountSeries, lags: usize) -> Result<()> {
    if series.len() <= lags {
        return Err(Error::ShortSeries {
            len: series.len(),
            lags,
        });
    }
    Ok(())
}

/// Stacked regression targets `(X_{1,p+1..T}, ..., X_{N,p+1..T})`.
pub fn build_target(series: &CountSeries, lags: usize) -> Result<DVector<f64>> {
    check_length(series, lags)?;
    let n = series.node_count();
    let rows = series.len() - lags;
    Ok(DVector::from_iterator(
        n * rows,
        (0..n).flat_map(|i| series.node(i)[lags..].iter().map(|&x| x as f64)),
    ))
}

/// Design matrix matching [`build_target`] row for row and the order's
/// parameter layout column for column.
pub fn build_design(series: &CountSeries, net: &Network, order: &ModelOrder) -> Result<DMatrix<f64>> {
    order.validate()?;
    let p = order.lags;
    check_length(series, p)?;
    let n = series.node_count();
    if net.node_count() != n {
        return Err(Error::Dimension(format!(
            "series has {n} nodes, network has {}",
            net.node_count()
        )));
    }
    let terms = order.layout(n);
    let per_node = series.len() - p;
    let mut x = DMatrix::zeros(n * per_node, terms.len());
    // column-by-column; neighbour sums computed once per (stage, time)
    let as_f64: Vec<Vec<f64>> = (0..series.len())
        .map(|t| series.column(t).into_iter().map(|v| v as f64).collect())
        .collect();
    for (c, term) in terms.iter().enumerate() {
        let mut col = x.column_mut(c);
        match *term {
            Term::Alpha { lag, node } => {
                for i in 0..n {
                    if node.is_some_and(|k| k != i) {
                        continue;
                    }
                    for t in p..series.len() {
                        col[i * per_node + t - p] = as_f64[t - lag][i];
                    }
                }
            }
            Term::Beta { lag, stage } => {
                for i in 0..n {
                    for t in p..series.len() {
                        col[i * per_node + t - p] = net.stage_sum(i, stage, &as_f64[t - lag]);
                    }
                }
            }
            Term::Intercept { node } => {
                for i in 0..n {
                    if node.is_some_and(|k| k != i) {
                        continue;
                    }
                    for t in 0..per_node {
                        col[i * per_node + t] = 1.0;
                    }
                }
            }
        }
    }
    Ok(x)
}

/// Target, design and bookkeeping for one `(series, network, order)`.
#[derive(Debug, Clone)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub terms: Vec<Term>,
    pub names: Vec<String>,
    pub nodes: usize,
    pub rows_per_node: usize,
}

impl Design {
    pub fn new(series: &CountSeries, net: &Network, order: &ModelOrder) -> Result<Self> {
        let x = build_design(series, net, order)?;
        let y = build_target(series, order.lags)?;
        let terms = order.layout(series.node_count());
        let names = terms
            .iter()
            .map(|t| t.name(order.intercept, series.node_ids()))
            .collect();
        Ok(Self {
            x,
            y,
            terms,
            names,
            nodes: series.node_count(),
            rows_per_node: series.len() - order.lags,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    /// Node owning design row `row`.
    pub fn row_node(&self, row: usize) -> usize {
        row / self.rows_per_node
    }
}

/// `max_i sum_j (|alpha_{i,j}| + sum_r |beta_{j,r}|)`; below 1 certifies the
/// sufficient stationarity condition for both GNARI and softplus NGNAR.
pub fn stationarity_margin(order: &ModelOrder, params: &ParamVector, nodes: usize) -> f64 {
    let c = params.coefficients(order, nodes);
    (0..nodes)
        .map(|i| {
            (0..order.lags)
                .map(|j| c.alpha[j][i].abs() + c.beta[j].iter().map(|b| b.abs()).sum::<f64>())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Lag matrices `A_j = diag(alpha_{.,j}) + sum_r beta_{j,r} W^(r)`.
pub fn lag_matrices(order: &ModelOrder, params: &ParamVector, net: &Network) -> Vec<DMatrix<f64>> {
    let n = net.node_count();
    let c = params.coefficients(order, n);
    let stage_mats: Vec<DMatrix<f64>> = (1..=order.max_stage()).map(|r| net.stage_matrix(r)).collect();
    (0..order.lags)
        .map(|j| {
            let mut a = DMatrix::from_diagonal(&DVector::from_column_slice(&c.alpha[j]));
            for (r, &b) in c.beta[j].iter().enumerate() {
                a += &stage_mats[r] * b;
            }
            a
        })
        .collect()
}

/// Block companion matrix of the stacked first-order representation.
pub fn companion_matrix(order: &ModelOrder, params: &ParamVector, net: &Network) -> DMatrix<f64> {
    let n = net.node_count();
    let p = order.lags;
    let blocks = lag_matrices(order, params, net);
    let mut a = DMatrix::zeros(n * p, n * p);
    for (j, b) in blocks.iter().enumerate() {
        a.view_mut((0, j * n), (n, n)).copy_from(b);
    }
    for k in 1..p {
        a.view_mut((k * n, (k - 1) * n), (n, n))
            .copy_from(&DMatrix::identity(n, n));
    }
    a
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Solves `(I - sum_j A_j) mu = lambda`.
pub fn stationary_mean(
    order: &ModelOrder,
    params: &ParamVector,
    net: &Network,
    innovation_means: &[f64],
) -> Result<DVector<f64>> {
    let n = net.node_count();
    if innovation_means.len() != n {
        return Err(Error::Dimension(format!(
            "{} innovation means for {n} nodes",
            innovation_means.len()
        )));
    }
    let rho = spectral_radius(&companion_matrix(order, params, net));
    if rho >= 1.0 {
        return Err(Error::NonStationary(stationarity_margin(order, params, n)));
    }
    let mut m = DMatrix::identity(n, n);
    for a in lag_matrices(order, params, net) {
        m -= a;
    }
    m.lu()
        .solve(&DVector::from_column_slice(innovation_means))
        .ok_or(Error::Singular {
            condition: f64::INFINITY,
            columns: Vec::new(),
        })
}

/// Multi-step mean forecasts: the one-step conditional mean
/// `response(eta)` is iterated with earlier forecasts standing in for
/// unobserved values. Returns an N×H matrix.
pub fn forecast_means(
    net: &Network,
    order: &ModelOrder,
    params: &ParamVector,
    history: &CountSeries,
    horizon: usize,
    response: impl Fn(f64) -> f64,
) -> Result<DMatrix<f64>> {
    let p = order.lags;
    let n = history.node_count();
    if history.len() < p {
        return Err(Error::ShortSeries {
            len: history.len(),
            lags: p,
        });
    }
    if net.node_count() != n {
        return Err(Error::Dimension("history and network node counts differ".into()));
    }
    let coeffs = params.coefficients(order, n);
    // states[k] is the N-vector at time (T - p + k)
    let mut states: Vec<Vec<f64>> = (history.len() - p..history.len())
        .map(|t| history.column(t).into_iter().map(|x| x as f64).collect())
        .collect();
    let mut out = DMatrix::zeros(n, horizon);
    let mut eta = vec![0.0; n];
    for h in 0..horizon {
        let len = states.len();
        let lags: Vec<&[f64]> = (1..=p).map(|j| states[len - j].as_slice()).collect();
        coeffs.linear_predictor(net, &lags, &mut eta);
        let next: Vec<f64> = eta.iter().map(|&e| response(e)).collect();
        for (i, &v) in next.iter().enumerate() {
            out[(i, h)] = v;
        }
        states.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(rows: Vec<Vec<u64>>) -> CountSeries {
        CountSeries::from_node_rows(rows).unwrap()
    }

    fn gnari_params(net: &Network, alpha: f64, beta: f64, lambda: f64) -> (ModelOrder, ParamVector) {
        let order = ModelOrder::new(vec![1]);
        let p = ParamVector::global(&order, net.node_ids(), &[alpha], &[vec![beta]], lambda, |_| {
            UNBOUNDED
        })
        .unwrap();
        (order, p)
    }

    fn power_iteration(m: &DMatrix<f64>) -> f64 {
        // works for the non-negative matrices used here
        let mut v = DVector::from_element(m.nrows(), 1.0);
        let mut rho = 0.0;
        for _ in 0..5000 {
            let w = m * &v;
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            rho = norm / v.norm();
            v = w / norm;
        }
        rho
    }

    #[test]
    fn target_ordering() {
        let s = series(vec![vec![1, 2, 3], vec![4, 5, 6]]);
        assert_eq!(build_target(&s, 1).unwrap().as_slice(), &[2.0, 3.0, 5.0, 6.0]);
        let s = series(vec![vec![7, 9]]);
        assert_eq!(build_target(&s, 1).unwrap().as_slice(), &[9.0]);
        assert!(matches!(build_target(&s, 2), Err(Error::ShortSeries { .. })));
        let s = CountSeries::zeros(5, 500);
        assert_eq!(build_target(&s, 1).unwrap().len(), 2495);
    }

    #[test]
    fn design_shapes() {
        let net = Network::five_node();
        let s = CountSeries::zeros(5, 500);
        let x = build_design(&s, &net, &ModelOrder::new(vec![1])).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (2495, 3));

        let edgeless = Network::from_adjacency(vec![vec![0; 2]; 2]).unwrap();
        let s = series(vec![vec![1, 2, 3], vec![4, 5, 6]]);
        let x = build_design(&s, &edgeless, &ModelOrder::new(vec![1])).unwrap();
        assert!(x.column(1).iter().all(|&v| v == 0.0));

        let single = Network::from_adjacency(vec![vec![0]]).unwrap();
        let s = series(vec![vec![1, 2, 3, 4]]);
        let x = build_design(&s, &single, &ModelOrder::new(vec![0, 0])).unwrap();
        assert_eq!(x.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 1.0, 1.0]);
        assert_eq!(x.row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn design_neighbour_sums() {
        let net = Network::five_node();
        let s = series(vec![
            vec![1, 0],
            vec![2, 0],
            vec![3, 0],
            vec![4, 0],
            vec![5, 0],
        ]);
        let x = build_design(&s, &net, &ModelOrder::new(vec![2]).with_alpha_mask(vec![false])).unwrap();
        // node 1: stage 1 = {2,4,5} -> (2+4+5)/3; stage 2 = {3}
        assert!((x[(0, 0)] - 11.0 / 3.0).abs() < 1e-12);
        assert!((x[(0, 1)] - 3.0).abs() < 1e-12);
        assert_eq!(x[(0, 2)], 1.0);
    }

    #[test]
    fn local_layout_names() {
        let order = ModelOrder::new(vec![1, 0])
            .local_alpha(true)
            .local_intercept(true)
            .with_intercept(Intercept::Additive);
        let ids: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let names: Vec<String> = order
            .layout(2)
            .iter()
            .map(|t| t.name(order.intercept, &ids))
            .collect();
        assert_eq!(
            names,
            ["alpha_1[a]", "alpha_1[b]", "beta_1_1", "alpha_2[a]", "alpha_2[b]", "alpha_0[a]", "alpha_0[b]"]
        );
        assert_eq!(order.n_params(2), 7);
    }

    #[test]
    fn noiseless_linear_identity() {
        let net = Network::five_node();
        let order = ModelOrder::new(vec![1, 2]);
        let s = series((0..5).map(|i| (0..30).map(|t| ((i * 7 + t * 3) % 11) as u64).collect()).collect());
        let x = build_design(&s, &net, &order).unwrap();
        let beta = DVector::from_vec(vec![0.3, 0.2, 0.1, 0.05, 0.02, 1.5]);
        let fitted = &x * &beta;
        // row (i, t) recomputed from the predictor path
        let params = ParamVector::unbounded(&order, net.node_ids(), beta.as_slice().to_vec()).unwrap();
        let c = params.coefficients(&order, 5);
        let mut eta = vec![0.0; 5];
        for t in 2..30 {
            let l1: Vec<f64> = s.column(t - 1).iter().map(|&v| v as f64).collect();
            let l2: Vec<f64> = s.column(t - 2).iter().map(|&v| v as f64).collect();
            c.linear_predictor(&net, &[&l1, &l2], &mut eta);
            for i in 0..5 {
                assert!((eta[i] - fitted[i * 28 + t - 2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn margin_examples() {
        let net = Network::five_node();
        let (order, p) = gnari_params(&net, 0.5, 0.4, 10.0);
        assert!((stationarity_margin(&order, &p, 5) - 0.9).abs() < 1e-15);
        let (order, p) = gnari_params(&net, 0.7, 0.4, 10.0);
        assert!((stationarity_margin(&order, &p, 5) - 1.1).abs() < 1e-15);
        let (order, p) = gnari_params(&net, 0.0, 0.0, 0.0);
        assert_eq!(stationarity_margin(&order, &p, 5), 0.0);
        let (order, p) = gnari_params(&net, 0.5, -0.4, 10.0);
        assert!((stationarity_margin(&order, &p, 5) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn companion_and_mean() {
        let net = Network::five_node();
        let (order, p) = gnari_params(&net, 0.5, 0.4, 10.0);
        let a = companion_matrix(&order, &p, &net);
        assert_eq!(a.nrows(), 5);
        for l in 0..5 {
            assert!((a.row(l).sum() - 0.9).abs() < 1e-12);
        }
        let rho = spectral_radius(&a);
        assert!((rho - power_iteration(&a)).abs() < 1e-8);
        assert!(rho < 1.0);
        let mu = stationary_mean(&order, &p, &net, &[10.0; 5]).unwrap();
        // oracle: direct LU on (I - A1)
        let direct = (DMatrix::identity(5, 5) - &a).lu().solve(&DVector::from_element(5, 10.0)).unwrap();
        for i in 0..5 {
            assert!((mu[i] - 100.0).abs() < 1e-9);
            assert!((mu[i] - direct[i]).abs() < 1e-9);
        }

        let (order, p) = gnari_params(&net, 0.0, 0.0, 7.0);
        let mu = stationary_mean(&order, &p, &net, &[7.0; 5]).unwrap();
        assert!(mu.iter().all(|&m| (m - 7.0).abs() < 1e-12));

        let single = Network::from_adjacency(vec![vec![0]]).unwrap();
        let order = ModelOrder::new(vec![0]);
        let p = ParamVector::global(&order, single.node_ids(), &[0.5], &[vec![]], 5.0, |_| UNBOUNDED).unwrap();
        let mu = stationary_mean(&order, &p, &single, &[5.0]).unwrap();
        assert!((mu[0] - 10.0).abs() < 1e-12);

        let (order, p) = gnari_params(&net, 0.7, 0.4, 10.0);
        assert!(stationary_mean(&order, &p, &net, &[10.0; 5]).is_err());
    }

    #[test]
    fn companion_padding() {
        let net = Network::five_node();
        let order = ModelOrder::new(vec![1, 1]);
        let p = ParamVector::global(&order, net.node_ids(), &[0.3, 0.2], &[vec![0.2], vec![0.1]], 1.0, |_| UNBOUNDED).unwrap();
        let a = companion_matrix(&order, &p, &net);
        assert_eq!(a.nrows(), 10);
        for k in 0..5 {
            assert_eq!(a[(5 + k, k)], 1.0);
            assert!((a.row(k).sum() - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn forecast_decay() {
        let single = Network::from_adjacency(vec![vec![0]]).unwrap();
        let order = ModelOrder::new(vec![0]);
        let p = ParamVector::global(&order, single.node_ids(), &[0.5], &[vec![]], 0.0, |_| UNBOUNDED).unwrap();
        let h = CountSeries::from_node_rows(vec![vec![3, 8]]).unwrap();
        let f = forecast_means(&single, &order, &p, &h, 4, |x| x).unwrap();
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), vec![4.0, 2.0, 1.0, 0.5]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn spectral_radius_below_one_when_margin_below_one(
                alpha in proptest::collection::vec(0.0f64..1.0, 2),
                beta in proptest::collection::vec(-1.0f64..1.0, 3),
                scale in 0.01f64..0.999,
            ) {
                let net = Network::five_node();
                let order = ModelOrder::new(vec![2, 1]);
                let raw = [alpha[0], beta[0], beta[1], alpha[1], beta[2]];
                let total: f64 = raw.iter().map(|v| v.abs()).sum();
                let scaled: Vec<f64> = raw.iter().map(|v| v * scale / total.max(1e-12)).collect();
                let p = ParamVector::global(
                    &order, net.node_ids(),
                    &[scaled[0], scaled[3]],
                    &[vec![scaled[1], scaled[2]], vec![scaled[4]]],
                    1.0, |_| UNBOUNDED).unwrap();
                prop_assert!(stationarity_margin(&order, &p, 5) < 1.0);
                prop_assert!(spectral_radius(&companion_matrix(&order, &p, &net)) < 1.0);
            }

            #[test]
            fn relabelling_permutes_row_blocks(seed in 0u64..500) {
                let net = Network::five_node();
                let mut perm: Vec<usize> = (0..5).collect();
                let mut s = seed;
                for k in (1..5).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    perm.swap(k, (s >> 33) as usize % (k + 1));
                }
                let data = series((0..5).map(|i| (0..12).map(|t| ((i * 5 + t * 7 + seed as usize) % 13) as u64).collect()).collect());
                let order = ModelOrder::new(vec![2, 1]);
                let x = build_design(&data, &net, &order).unwrap();
                let x2 = build_design(&data.relabel(&perm).unwrap(), &net.relabel(&perm).unwrap(), &order).unwrap();
                let per = 10;
                for i in 0..5 {
                    for r in 0..per {
                        for c in 0..x.ncols() {
                            prop_assert!((x[(i * per + r, c)] - x2[(perm[i] * per + r, c)]).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}

//! Shared numerical optimisation: ADAM, box projection, normal equations,
//! box-constrained least squares and finite-difference gradient checks.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::Bound;
use crate::error::{Error, Result};

/// Relative objective change treated as rounding noise by the ADAM
/// acceptance test.
pub const ROUNDING_SLACK: f64 = 8.0 * f64::EPSILON;

/// Condition number above which a Gram matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub step: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    /// Stop once the (projected) gradient sup-norm drops to this value.
    pub grad_tol: f64,
    pub bounds: Option<Vec<Bound>>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_iter: 50_000,
            grad_tol: 1e-6,
            bounds: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let decay = |b: f64| b > 0.0 && b < 1.0;
        if !(self.step > 0.0) || !decay(self.beta1) || !decay(self.beta2) || !(self.grad_tol > 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "optimizer config needs step > 0, decays in (0, 1) and tolerance > 0: {self:?}"
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn with_bounds(mut self, bounds: Vec<Bound>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamOutcome {
    pub solution: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    /// Objective evaluations spent, accepted or not.
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

fn project(x: &mut [f64], bounds: Option<&[Bound]>) {
    if let Some(b) = bounds {
        for (v, &(lo, hi)) in x.iter_mut().zip(b) {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Sup-norm of the projected gradient: components pushing out of an active
/// bound do not count.
pub fn projected_grad_norm(x: &[f64], g: &[f64], bounds: Option<&[Bound]>) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let mut gk = g[k];
        if let Some(b) = bounds {
            let (lo, hi) = b[k];
            if x[k] <= lo && gk > 0.0 || x[k] >= hi && gk < 0.0 {
                gk = 0.0;
            }
        }
        worst = worst.max(gk.abs());
    }
    worst
}

fn evaluate<F>(f: &mut F, x: &[f64], g: &mut [f64]) -> Result<f64>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let v = f(x, g)?;
    if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite objective or gradient at {x:?} (objective {v})"
        )));
    }
    Ok(v)
}

/// ADAM with bias correction and optional projection onto the box after each
/// step. A step that increases the objective is rejected and retried with
/// half the step size, so the accepted iterates are monotone up to
/// [`ROUNDING_SLACK`] (within that band a step is accepted only if it lowers
/// the gradient norm); the step grows back toward its configured value after
/// each accepted move.
///
/// `f(x, grad)` returns the objective and writes the gradient.
pub fn adam_minimize<F>(mut f: F, init: &[f64], config: &OptimizerConfig) -> Result<AdamOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    config.validate()?;
    let bounds = config.bounds.as_deref();
    if let Some(b) = bounds {
        if b.len() != init.len() {
            return Err(Error::Dimension("bounds and initial point lengths differ".into()));
        }
    }
    let mut x = init.to_vec();
    project(&mut x, bounds);
    let k = x.len();
    let mut g = vec![0.0; k];
    let mut fx = evaluate(&mut f, &x, &mut g)?;
    let mut state = AdamState::new(k, config.step);
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: fx,
        grad_norm: projected_grad_norm(&x, &g, bounds),
    }];
    let mut evals = 0;
    let mut cand = vec![0.0; k];
    let mut gc = vec![0.0; k];
    let mut converged = false;
    while evals < config.max_iter {
        if projected_grad_norm(&x, &g, bounds) <= config.grad_tol {
            converged = true;
            break;
        }
        if state.lr < config.step * 1e-14 {
            break;
        }
        let dir = state.direction(&g, config);
        for j in 0..k {
            cand[j] = x[j] - state.lr * dir[j];
        }
        project(&mut cand, bounds);
        evals += 1;
        let fc = match evaluate(&mut f, &cand, &mut gc) {
            Ok(v) => v,
            Err(_) => f64::INFINITY,
        };
        // below rounding resolution of the objective, let the gradient decide
        let tied = fc <= fx + ROUNDING_SLACK * fx.abs().max(1.0)
            && projected_grad_norm(&cand, &gc, bounds) < projected_grad_norm(&x, &g, bounds);
        if fc <= fx || tied {
            state.accept();
            x.copy_from_slice(&cand);
            g.copy_from_slice(&gc);
            fx = fc;
            trace.push(TraceRow {
                iteration: evals,
                objective: fx,
                grad_norm: projected_grad_norm(&x, &g, bounds),
            });
        } else {
            state.reject();
        }
    }
    if !converged {
        converged = projected_grad_norm(&x, &g, bounds) <= config.grad_tol;
    }
    Ok(AdamOutcome {
        grad_norm: projected_grad_norm(&x, &g, bounds),
        solution: x,
        objective: fx,
        iterations: evals,
        converged,
        trace,
    })
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    m_next: Vec<f64>,
    v_next: Vec<f64>,
    /// Accepted updates since the first moment was last reset.
    t1: i32,
    t2: i32,
    lr: f64,
    base: f64,
}

impl AdamState {
    fn new(k: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; k],
            v: vec![0.0; k],
            m_next: vec![0.0; k],
            v_next: vec![0.0; k],
            t1: 0,
            t2: 0,
            lr,
            base: lr,
        }
    }

    /// Tentative moment update for gradient `g`; returns the bias-corrected
    /// step direction.
    fn direction(&mut self, g: &[f64], c: &OptimizerConfig) -> Vec<f64> {
        let c1 = 1.0 - c.beta1.powi(self.t1 + 1);
        let c2 = 1.0 - c.beta2.powi(self.t2 + 1);
        (0..g.len())
            .map(|j| {
                self.m_next[j] = c.beta1 * self.m[j] + (1.0 - c.beta1) * g[j];
                self.v_next[j] = c.beta2 * self.v[j] + (1.0 - c.beta2) * g[j] * g[j];
                (self.m_next[j] / c1) / ((self.v_next[j] / c2).sqrt() + c.epsilon)
            })
            .collect()
    }

    fn accept(&mut self) {
        std::mem::swap(&mut self.m, &mut self.m_next);
        std::mem::swap(&mut self.v, &mut self.v_next);
        self.t1 += 1;
        self.t2 += 1;
        self.lr = (self.lr * 1.25).min(self.base);
    }

    /// Halves the step and drops the momentum, whose stale direction need
    /// not descend at the current point; the retry is then a diagonally
    /// scaled gradient step.
    fn reject(&mut self) {
        self.lr *= 0.5;
        self.m.iter_mut().for_each(|m| *m = 0.0);
        self.t1 = 0;
    }
}

/// Linear change of variables `x = T z` built from a positive semi-definite
/// metric (typically a Gram or Fisher matrix), so that the metric becomes
/// close to the identity in `z`.
#[derive(Debug, Clone)]
pub struct Whitening {
    forward: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl Whitening {
    pub fn from_metric(metric: &DMatrix<f64>) -> Result<Self> {
        let k = metric.nrows();
        let mut scale = DVector::zeros(k);
        for j in 0..k {
            let d = metric[(j, j)];
            scale[j] = if d > 0.0 { 1.0 / d.sqrt() } else { 1.0 };
        }
        let mut m = metric.clone();
        for a in 0..k {
            for b in 0..k {
                m[(a, b)] *= scale[a] * scale[b];
            }
        }
        let chol = match m.clone().cholesky() {
            Some(c) => c,
            None => {
                for j in 0..k {
                    m[(j, j)] += 1e-8;
                }
                m.cholesky()
                    .ok_or_else(|| Error::Numerical("metric is not positive definite".into()))?
            }
        };
        // m = L L^T; x = D L^{-T} z, z = L^T D^{-1} x
        let l = chol.l();
        let lt_inv = l
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("triangular factor is singular".into()))?;
        let d = DMatrix::from_diagonal(&scale);
        let d_inv = DMatrix::from_diagonal(&scale.map(|s| 1.0 / s));
        Ok(Self {
            forward: &d * lt_inv,
            inverse: l.transpose() * d_inv,
        })
    }

    pub fn to_x(&self, z: &[f64]) -> Vec<f64> {
        (&self.forward * DVector::from_column_slice(z)).data.into()
    }

    pub fn to_z(&self, x: &[f64]) -> Vec<f64> {
        (&self.inverse * DVector::from_column_slice(x)).data.into()
    }

    /// Gradient in `z` from a gradient in `x`.
    pub fn pull_back(&self, gx: &[f64]) -> Vec<f64> {
        (self.forward.transpose() * DVector::from_column_slice(gx))
            .data
            .into()
    }
}

/// ADAM run in whitened coordinates. Without bounds this is plain ADAM on
/// `z`; with bounds an outer active-set loop fixes coordinates whose bound is
/// binding (gradient pointing outward), runs whitened ADAM on the remaining
/// coordinates with projection in the original space, and releases fixed
/// coordinates whose gradient turns inward. Gradient norms and the stopping
/// rule are always evaluated on the original coordinates.
pub fn adam_minimize_whitened<F>(
    mut f: F,
    init: &[f64],
    metric: &DMatrix<f64>,
    config: &OptimizerConfig,
) -> Result<AdamOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    config.validate()?;
    let k = init.len();
    if metric.nrows() != k || metric.ncols() != k {
        return Err(Error::Dimension("metric size does not match parameter count".into()));
    }
    let bounds = config.bounds.clone();
    let mut x = init.to_vec();
    project(&mut x, bounds.as_deref());
    let mut fixed = vec![false; k];
    let mut g = vec![0.0; k];
    let mut fx = evaluate(&mut f, &x, &mut g)?;
    if let Some(b) = &bounds {
        if snap_binding(&mut x, &g, b, metric, &mut fixed) {
            fx = evaluate(&mut f, &x, &mut g)?;
        }
    }
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: fx,
        grad_norm: projected_grad_norm(&x, &g, bounds.as_deref()),
    }];
    let mut evals = 0;
    for _outer in 0..20 {
        let free: Vec<usize> = (0..k).filter(|&j| !fixed[j]).collect();
        if !free.is_empty() {
            let sub = metric.select_rows(&free).select_columns(&free);
            let w = Whitening::from_metric(&sub)?;
            let base = x.clone();
            let free_bounds: Option<Vec<Bound>> =
                bounds.as_ref().map(|b| free.iter().map(|&j| b[j]).collect());
            let z0 = w.to_z(&free.iter().map(|&j| x[j]).collect::<Vec<_>>());
            let mut full = base.clone();
            let mut gfull = vec![0.0; k];
            let sub_config = OptimizerConfig {
                bounds: None,
                max_iter: config.max_iter.saturating_sub(evals),
                ..config.clone()
            };
            // objective in z, with projection applied on the x side
            let inner = adam_minimize(
                |z: &[f64], gz: &mut [f64]| {
                    let mut xf = w.to_x(z);
                    project(&mut xf, free_bounds.as_deref());
                    for (a, &j) in free.iter().enumerate() {
                        full[j] = xf[a];
                    }
                    let v = f(&full, &mut gfull)?;
                    let gf: Vec<f64> = free.iter().map(|&j| gfull[j]).collect();
                    // chain rule through the projection: clipped coordinates
                    // whose gradient pushes outward do not move
                    let mut gp = gf.clone();
                    if let Some(fb) = &free_bounds {
                        for (a, v) in gp.iter_mut().enumerate() {
                            let (lo, hi) = fb[a];
                            if xf[a] <= lo && *v > 0.0 || xf[a] >= hi && *v < 0.0 {
                                *v = 0.0;
                            }
                        }
                    }
                    let pulled = w.pull_back(&gp);
                    gz.copy_from_slice(&pulled);
                    // stop on the x-space projected gradient, not the z one
                    let xg = projected_grad_norm(&xf, &gf, free_bounds.as_deref());
                    if xg <= config.grad_tol {
                        gz.iter_mut().for_each(|v| *v = 0.0);
                    }
                    Ok(v)
                },
                &z0,
                &OptimizerConfig {
                    grad_tol: f64::MIN_POSITIVE,
                    ..sub_config
                },
            )?;
            evals += inner.iterations;
            let mut xf = w.to_x(&inner.solution);
            project(&mut xf, free_bounds.as_deref());
            for (a, &j) in free.iter().enumerate() {
                x[j] = xf[a];
            }
            fx = evaluate(&mut f, &x, &mut g)?;
            let offset = trace.last().map_or(0, |r| r.iteration);
            trace.extend(inner.trace.iter().skip(1).map(|r| TraceRow {
                iteration: offset + r.iteration,
                ..*r
            }));
        }
        let Some(b) = &bounds else { break };
        let before = fixed.clone();
        if snap_binding(&mut x, &g, b, metric, &mut fixed) {
            fx = evaluate(&mut f, &x, &mut g)?;
        }
        if fixed == before || evals >= config.max_iter {
            break;
        }
    }
    let grad_norm = projected_grad_norm(&x, &g, bounds.as_deref());
    Ok(AdamOutcome {
        converged: grad_norm <= config.grad_tol,
        grad_norm,
        solution: x,
        objective: fx,
        iterations: evals,
        trace,
    })
}

/// Marks coordinates as binding when they sit within one diagonally scaled
/// gradient step of a bound that the gradient pushes against, and snaps them
/// onto it. Returns whether any coordinate moved.
fn snap_binding(x: &mut [f64], g: &[f64], b: &[Bound], metric: &DMatrix<f64>, fixed: &mut [bool]) -> bool {
    let step = |j: usize| {
        let d = metric[(j, j)];
        if d > 0.0 {
            g[j] / d
        } else {
            g[j]
        }
    };
    let width = (0..x.len())
        .map(|j| (x[j] - (x[j] - step(j)).clamp(b[j].0, b[j].1)).abs())
        .fold(0.0, f64::max);
    let mut moved = false;
    for j in 0..x.len() {
        let (lo, hi) = b[j];
        let near_lo = x[j] - lo <= width && g[j] > 0.0;
        let near_hi = hi - x[j] <= width && g[j] < 0.0;
        fixed[j] = near_lo || near_hi;
        let target = if near_lo {
            lo
        } else if near_hi {
            hi
        } else {
            x[j]
        };
        if target != x[j] {
            x[j] = target;
            moved = true;
        }
    }
    moved
}

/// Writes an optimizer trace as CSV (`iteration,objective,grad_norm`).
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "objective", "grad_norm"])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            format!("{:e}", r.objective),
            format!("{:e}", r.grad_norm),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn column_label(names: Option<&[String]>, k: usize) -> String {
    names
        .and_then(|n| n.get(k).cloned())
        .unwrap_or_else(|| format!("column {}", k + 1))
}

/// Solves `G b = c` for a symmetric positive definite Gram matrix after
/// diagonal equilibration. Fails with the near-dependent columns when the
/// equilibrated condition number exceeds [`CONDITION_LIMIT`].
pub fn solve_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>, names: Option<&[String]>) -> Result<DVector<f64>> {
    let k = gram.nrows();
    if gram.ncols() != k || rhs.len() != k {
        return Err(Error::Dimension("Gram system sizes differ".into()));
    }
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let zero: Vec<String> = (0..k)
        .filter(|&j| !(gram[(j, j)] > 0.0))
        .map(|j| column_label(names, j))
        .collect();
    if !zero.is_empty() {
        return Err(Error::Singular {
            condition: f64::INFINITY,
            columns: zero,
        });
    }
    let scale = DVector::from_iterator(k, (0..k).map(|j| 1.0 / gram[(j, j)].sqrt()));
    let mut m = gram.clone();
    for a in 0..k {
        for b in 0..k {
            m[(a, b)] *= scale[a] * scale[b];
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let (mut lo, mut lo_idx, mut hi) = (f64::INFINITY, 0, 0.0f64);
    for (j, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < lo {
            lo = ev;
            lo_idx = j;
        }
        hi = hi.max(ev);
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > CONDITION_LIMIT {
        let v = eig.eigenvectors.column(lo_idx);
        let columns = (0..k)
            .filter(|&j| v[j].abs() > 0.1)
            .map(|j| column_label(names, j))
            .collect();
        return Err(Error::Singular { condition, columns });
    }
    let scaled_rhs = rhs.component_mul(&scale);
    let sol = m
        .cholesky()
        .ok_or(Error::Singular {
            condition,
            columns: Vec::new(),
        })?
        .solve(&scaled_rhs);
    Ok(sol.component_mul(&scale))
}

/// Least squares through the normal equations `XᵀX b = XᵀY`.
pub fn solve_normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "design has {} rows, target has {}",
            x.nrows(),
            y.len()
        )));
    }
    let gram = x.tr_mul(x);
    let rhs = x.tr_mul(y);
    solve_gram(&gram, &rhs, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxLsSolution {
    pub beta: DVector<f64>,
    /// Scaled projected-gradient sup-norm, see [`box_least_squares`].
    pub kkt_residual: f64,
    /// True when the unconstrained optimum was already feasible.
    pub interior: bool,
    pub iterations: usize,
}

/// Minimises `||Y - X b||²` over a box, given `G = XᵀX` and `c = XᵀY`.
///
/// The unconstrained normal-equation solution is returned unchanged when it
/// is feasible. Otherwise the clipped solution is refined by a primal
/// active-set method, which terminates exactly at the KKT point of the
/// convex quadratic. The reported KKT residual is the projected-gradient
/// sup-norm of `½bᵀGb − cᵀb` divided by `max(1, ‖c‖∞)`.
pub fn box_least_squares(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    bounds: &[Bound],
    names: Option<&[String]>,
) -> Result<BoxLsSolution> {
    let k = rhs.len();
    if bounds.len() != k {
        return Err(Error::Dimension("bounds length".into()));
    }
    let scale = rhs.amax().max(1.0);
    let residual = |b: &DVector<f64>| {
        let g = gram * b - rhs;
        projected_grad_norm(b.as_slice(), g.as_slice(), Some(bounds)) / scale
    };
    let unconstrained = solve_gram(gram, rhs, names)?;
    let feasible = unconstrained
        .iter()
        .zip(bounds)
        .all(|(v, b)| *v >= b.0 && *v <= b.1);
    if feasible {
        return Ok(BoxLsSolution {
            kkt_residual: residual(&unconstrained),
            beta: unconstrained,
            interior: true,
            iterations: 0,
        });
    }
    let mut x = unconstrained.clone();
    for (v, b) in x.iter_mut().zip(bounds) {
        *v = v.clamp(b.0, b.1);
    }
    let mut at_bound: Vec<bool> = x
        .iter()
        .zip(bounds)
        .map(|(v, b)| *v == b.0 || *v == b.1)
        .collect();
    let max_iter = 10 * k + 50;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let free: Vec<usize> = (0..k).filter(|&j| !at_bound[j]).collect();
        let fixed: Vec<usize> = (0..k).filter(|&j| at_bound[j]).collect();
        let z = if free.is_empty() {
            DVector::zeros(0)
        } else {
            let g_ff = gram.select_rows(&free).select_columns(&free);
            let mut c_f = DVector::from_iterator(free.len(), free.iter().map(|&j| rhs[j]));
            for (a, &j) in free.iter().enumerate() {
                for &b in &fixed {
                    c_f[a] -= gram[(j, b)] * x[b];
                }
            }
            let sub_names: Option<Vec<String>> =
                names.map(|n| free.iter().map(|&j| n[j].clone()).collect());
            solve_gram(&g_ff, &c_f, sub_names.as_deref())?
        };
        // longest feasible step toward z
        let mut t = 1.0;
        let mut blocking = None;
        for (a, &j) in free.iter().enumerate() {
            let (lo, hi) = bounds[j];
            let d = z[a] - x[j];
            if z[a] < lo && d < 0.0 {
                let s = (lo - x[j]) / d;
                if s < t {
                    t = s;
                    blocking = Some((j, lo));
                }
            } else if z[a] > hi && d > 0.0 {
                let s = (hi - x[j]) / d;
                if s < t {
                    t = s;
                    blocking = Some((j, hi));
                }
            }
        }
        for (a, &j) in free.iter().enumerate() {
            x[j] += t * (z[a] - x[j]);
        }
        if let Some((j, v)) = blocking {
            x[j] = v;
            at_bound[j] = true;
            continue;
        }
        let g = gram * &x - rhs;
        let mut worst = None;
        let mut worst_val = 0.0;
        for &j in &fixed {
            let (lo, hi) = bounds[j];
            let violation = if x[j] <= lo { -g[j] } else if x[j] >= hi { g[j] } else { 0.0 };
            let scaled = violation / gram[(j, j)].sqrt().max(f64::MIN_POSITIVE);
            if violation > 0.0 && scaled > worst_val {
                worst_val = scaled;
                worst = Some(j);
            }
        }
        match worst {
            Some(j) => at_bound[j] = false,
            None => break,
        }
    }
    Ok(BoxLsSolution {
        kkt_residual: residual(&x),
        beta: x,
        interior: false,
        iterations,
    })
}

/// Worst coordinate relative error between an analytic gradient and central
/// differences, `|g_k - fd_k| / max(|fd_k|, 1e-8)`. The step for
/// coordinate `k` is `h * max(1, |x_k|)`.
pub fn finite_diff_grad_check<F>(mut f: F, grad: &[f64], point: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let step = h * x[k].abs().max(1.0);
        let orig = x[k];
        x[k] = orig + step;
        let fp = f(&x);
        x[k] = orig - step;
        let fm = f(&x);
        x[k] = orig;
        let fd = (fp - fm) / (2.0 * step);
        worst = worst.max((grad[k] - fd).abs() / fd.abs().max(1e-8));
    }
    worst
}

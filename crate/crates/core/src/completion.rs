//! Rank-efficient Frank-Wolfe tensor completion over circular unfoldings.
//!
//! The iterate is kept dense alongside its per-mode factorization
//! `X = sum_k fold(U_k diag(sigma_k) V_k^T, (k, d))`. Each iteration takes
//! the masked residual `X(I) - T(I)` as the gradient, picks one mode,
//! builds a step direction from the top singular triplets of that mode's
//! unfolding normalized to nuclear norm `beta`, and moves against it with
//! an exact line search. The number of appended components is capped by
//! the global rank budget `R` and by each unfolding's smaller dimension.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{dominant_sigma, truncated_svd, SvdTriplet};
use crate::tensor::{fold, masked_residual, DenseTensor, Matrix, Shape, SparseTensor, UnfoldSpec, Unfoldable};

/// Early exit once the observed-entry RSE falls below this.
pub const RSE_FLOOR: f64 = 1e-12;

/// Singular values at or below this fraction of the leading one are
/// treated as numerically zero and never appended.
const RELATIVE_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeSelection {
    /// Mode whose gradient unfolding has the largest singular value.
    #[default]
    SigmaMax,
    /// Mode whose unfolding has the smallest side; needs no SVDs.
    MinDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateRule {
    /// Top `r_k` triplets weighted by their singular values.
    #[default]
    MultiRank,
    /// Leading singular pair only, unweighted.
    RankOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwConfig {
    pub rank_budget: usize,
    pub beta: f64,
    pub shift: usize,
    pub max_iter: usize,
    pub mode_selection: ModeSelection,
    pub update_rule: UpdateRule,
    pub seed: u64,
}

impl Default for FwConfig {
    fn default() -> Self {
        FwConfig {
            rank_budget: 8,
            beta: 1e5,
            shift: 1,
            max_iter: 1000,
            mode_selection: ModeSelection::SigmaMax,
            update_rule: UpdateRule::MultiRank,
            seed: 0,
        }
    }
}

impl FwConfig {
    pub fn validate(&self, order: usize) -> Result<()> {
        if self.rank_budget == 0 {
            return Err(Error::InvalidConfig("rank budget must be at least 1".into()));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if self.shift == 0 || self.shift >= order {
            return Err(Error::InvalidConfig(format!(
                "shift {} outside 1..={}",
                self.shift,
                order - 1
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }

    fn spec(&self, mode: usize) -> UnfoldSpec {
        UnfoldSpec::new(mode, self.shift)
    }
}

/// Factors of one mode's component `X_k`, unfolded along `(k, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComponent {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl ModeComponent {
    fn empty(rows: usize, cols: usize) -> Self {
        ModeComponent { u: Matrix::zeros(rows, 0), sigma: Vec::new(), v: Matrix::zeros(cols, 0) }
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn unfolded(&self) -> Matrix {
        self.u.scaled_outer(&self.sigma, &self.v)
    }
}

/// Per-mode factorizations of the iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComponents {
    shape: Shape,
    shift: usize,
    modes: Vec<ModeComponent>,
}

impl ModeComponents {
    fn new(shape: &Shape, shift: usize) -> Result<Self> {
        let modes = (0..shape.order())
            .map(|k| {
                let (r, c) = UnfoldSpec::new(k, shift).dims(shape)?;
                Ok(ModeComponent::empty(r, c))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ModeComponents { shape: shape.clone(), shift, modes })
    }

    pub fn mode(&self, k: usize) -> &ModeComponent {
        &self.modes[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModeComponent> {
        self.modes.iter()
    }

    pub fn total_rank(&self) -> usize {
        self.modes.iter().map(ModeComponent::rank).sum()
    }

    /// `sum_k fold(U_k diag(sigma_k) V_k^T, (k, d))`.
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(self.shape.clone());
        for (k, comp) in self.modes.iter().enumerate() {
            if comp.rank() == 0 {
                continue;
            }
            let part = fold(&comp.unfolded(), UnfoldSpec::new(k, self.shift), &self.shape)?;
            out.axpy(1.0, &part)?;
        }
        Ok(out)
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub rse: f64,
    pub elapsed_s: f64,
    /// Selected mode, zero-based; `None` on the initial row.
    pub mode: Option<usize>,
    pub gamma: f64,
    pub beta_gamma: f64,
    /// `sum_k R_k` after the iteration.
    pub total_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// `sum_k R_k` reached the rank budget.
    BudgetExhausted,
    /// Every mode is saturated.
    AllModesSaturated,
    MaxIterations,
    /// Observed-entry RSE dropped below [`RSE_FLOOR`].
    RseFloor,
    /// Zero gradient, or every candidate mode stalled.
    Stationary,
}

#[derive(Debug, Clone)]
pub struct FwState {
    pub x: DenseTensor,
    pub components: ModeComponents,
    /// Rank ledger `R_k`.
    pub mode_ranks: Vec<usize>,
    /// Active mode set; `false` once a mode is saturated.
    pub active: Vec<bool>,
    /// Most recent budget `r_k` per mode.
    pub r_next: Vec<usize>,
    pub trace: Vec<TraceRow>,
    pub stop: Option<StopReason>,
    shift: usize,
    rank_budget: usize,
}

impl FwState {
    pub fn new(shape: &Shape, cfg: &FwConfig) -> Result<Self> {
        cfg.validate(shape.order())?;
        let n = shape.order();
        Ok(FwState {
            x: DenseTensor::zeros(shape.clone()),
            components: ModeComponents::new(shape, cfg.shift)?,
            mode_ranks: vec![0; n],
            active: vec![true; n],
            r_next: vec![0; n],
            trace: Vec::new(),
            stop: None,
            shift: cfg.shift,
            rank_budget: cfg.rank_budget,
        })
    }

    pub fn shape(&self) -> &Shape {
        self.x.shape()
    }

    pub fn total_rank(&self) -> usize {
        self.mode_ranks.iter().sum()
    }

    pub fn active_modes(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&k| self.active[k]).collect()
    }

    fn mode_cap(&self, k: usize) -> usize {
        UnfoldSpec::new(k, self.shift).min_dim(self.shape()).expect("validated shift")
    }

    fn deactivate(&mut self, k: usize) {
        self.active[k] = false;
    }

    /// Relative deviation of the dense iterate from its factorization.
    pub fn representation_error(&self) -> Result<f64> {
        let rec = self.components.reconstruct()?;
        let diff: f64 = self
            .x
            .values()
            .iter()
            .zip(rec.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let scale = self.x.fro_norm();
        Ok(if scale == 0.0 { diff } else { diff / scale })
    }
}

/// A step direction `S` built from one mode's gradient unfolding.
///
/// `S = fold(U diag(weights) V^T)` with `weights = beta * sigma / sum(sigma)`
/// for multi-rank updates and `weights = [beta]` for rank-one updates, so
/// the mode's nuclear norm of `S` equals `beta` either way.
///
/// The step is stored relative to `S / beta`: the iterate moves by
/// `beta_gamma * S / beta`, which is the same point as `gamma * S`.
#[derive(Debug, Clone)]
pub struct GradientStep {
    pub mode: usize,
    pub factors: SvdTriplet,
    /// Component weights of `S / beta`.
    pub unit_weights: Vec<f64>,
    pub beta: f64,
    /// Step length `gamma * beta`.
    pub beta_gamma: f64,
}

impl GradientStep {
    pub fn rank(&self) -> usize {
        self.unit_weights.len()
    }

    /// Component weights of `S`.
    pub fn weights(&self) -> Vec<f64> {
        self.unit_weights.iter().map(|w| self.beta * w).collect()
    }

    pub fn gamma(&self) -> f64 {
        self.beta_gamma / self.beta
    }

    /// `beta / sum(sigma)` for multi-rank steps, `beta` for rank-one.
    pub fn beta_scale(&self) -> f64 {
        self.beta * self.unit_weights[0] / self.factors.sigma[0]
    }

    pub fn unfolded_direction(&self) -> Matrix {
        self.factors.u.scaled_outer(&self.weights(), &self.factors.v)
    }

    /// Dense `S`.
    pub fn direction(&self, shape: &Shape, shift: usize) -> Result<DenseTensor> {
        fold(&self.unfolded_direction(), UnfoldSpec::new(self.mode, shift), shape)
    }

    /// Dense `S / beta`.
    pub fn unit_direction(&self, shape: &Shape, shift: usize) -> Result<DenseTensor> {
        let m = self.factors.u.scaled_outer(&self.unit_weights, &self.factors.v);
        fold(&m, UnfoldSpec::new(self.mode, shift), shape)
    }
}

/// Active modes ordered best-first under `cfg.mode_selection`, ties to
/// the smaller mode. The head of the list is the selected mode; the rest
/// are fallbacks when a step stalls.
pub fn rank_modes(grad: &impl Unfoldable, cfg: &FwConfig, active: &[usize]) -> Result<Vec<(usize, f64)>> {
    if active.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    let shape = grad.shape();
    let mut scored = active
        .iter()
        .map(|&k| {
            let spec = cfg.spec(k);
            let score = match cfg.mode_selection {
                ModeSelection::SigmaMax => dominant_sigma(&grad.unfolding(spec)?)?,
                ModeSelection::MinDim => spec.min_dim(shape)? as f64,
            };
            Ok((k, score))
        })
        .collect::<Result<Vec<_>>>()?;
    match cfg.mode_selection {
        ModeSelection::SigmaMax => scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))),
        ModeSelection::MinDim => scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))),
    }
    Ok(scored)
}

/// The selected mode `k*`.
pub fn select_mode(grad: &impl Unfoldable, cfg: &FwConfig, active: &[usize]) -> Result<usize> {
    Ok(rank_modes(grad, cfg, active)?[0].0)
}

/// Step direction from the top `r` singular triplets of the gradient's
/// `(mode, shift)` unfolding. Numerically zero singular values are dropped,
/// so the returned step may carry fewer than `r` components.
pub fn gradient_step(
    grad: &impl Unfoldable,
    mode: usize,
    shift: usize,
    r: usize,
    beta: f64,
    rule: UpdateRule,
    seed: u64,
) -> Result<GradientStep> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidConfig(format!("beta must be positive, got {beta}")));
    }
    let spec = UnfoldSpec::new(mode, shift);
    let cap = spec.min_dim(grad.shape())?;
    if r == 0 || r > cap {
        return Err(Error::RankOutOfRange { rank: r, max: cap });
    }
    let unfolded = grad.unfolding(spec)?;
    let depth = match rule {
        UpdateRule::MultiRank => r,
        UpdateRule::RankOne => 1,
    };
    let mut factors = truncated_svd(&unfolded, depth, seed)?;
    let lead = factors.sigma[0];
    if lead <= 0.0 {
        return Err(Error::DegenerateGradient);
    }
    let keep = factors.sigma.iter().take_while(|&&s| s > RELATIVE_RANK_TOL * lead).count();
    factors.truncate(keep);
    let unit_weights = match rule {
        UpdateRule::MultiRank => {
            let total: f64 = factors.sigma.iter().sum();
            factors.sigma.iter().map(|s| s / total).collect()
        }
        UpdateRule::RankOne => vec![1.0],
    };
    Ok(GradientStep { mode, factors, unit_weights, beta, beta_gamma: 0.0 })
}

/// Exact line search over the observed entries: `max(b / a, 0)` with
/// `a = ||S(I)||^2` and `b = <X(I) - T(I), S(I)>`.
pub fn line_search(x: &DenseTensor, t: &SparseTensor, s: &DenseTensor) -> Result<f64> {
    let residual = masked_residual(x, t)?;
    let s_obs = t.gather(s)?;
    line_search_observed(residual.values(), &s_obs)
}

/// [`line_search`] on values already gathered at the observed entries.
pub fn line_search_observed(residual: &[f64], s_obs: &[f64]) -> Result<f64> {
    let a: f64 = s_obs.iter().map(|v| v * v).sum();
    if a == 0.0 {
        return Err(Error::ZeroOverlap);
    }
    let b: f64 = residual.iter().zip(s_obs).map(|(r, s)| r * s).sum();
    Ok((b / a).max(0.0))
}

/// `X <- X - gamma * S`, appending `-U`, `gamma * weights` and `V` to the
/// selected mode's factors and advancing its rank ledger. A zero step
/// leaves the iterate and factors untouched but still advances the ledger.
pub fn apply_update(state: &mut FwState, step: &GradientStep) -> Result<()> {
    let shape = state.shape().clone();
    let k = step.mode;
    if step.beta_gamma > 0.0 {
        let s = step.unit_direction(&shape, state.shift)?;
        state.x.axpy(-step.beta_gamma, &s)?;
        if !state.x.is_finite() {
            return Err(Error::NonFinite("iterate"));
        }
        let comp = &mut state.components.modes[k];
        let neg_u = Matrix::from_fn(step.factors.u.rows(), step.rank(), |r, c| -step.factors.u.get(r, c));
        comp.u.append_columns(&neg_u);
        comp.v.append_columns(&step.factors.v);
        comp.sigma.extend(step.unit_weights.iter().map(|w| step.beta_gamma * w));
    }
    state.mode_ranks[k] += step.rank();
    Ok(())
}

/// Refreshes `r_k = min(rows_k - R_k, cols_k - R_k, R - sum_i R_i)`,
/// floored at zero. A mode whose unfolding is exhausted leaves the active
/// set; a zero from the global budget means the solve is over.
pub fn update_rank_budget(state: &mut FwState, k: usize) -> usize {
    let (rows, cols) = UnfoldSpec::new(k, state.shift).dims(state.shape()).expect("validated shift");
    let used = state.mode_ranks[k];
    let global = state.rank_budget.saturating_sub(state.total_rank());
    let r = rows.saturating_sub(used).min(cols.saturating_sub(used)).min(global);
    state.r_next[k] = r;
    if r == 0 && used >= rows.min(cols) {
        state.deactivate(k);
    }
    r
}

/// `0.5 * ||X(I) - T(I)||^2`.
pub fn objective(x: &DenseTensor, t: &SparseTensor) -> Result<f64> {
    let r = masked_residual(x, t)?;
    Ok(0.5 * r.values().iter().map(|v| v * v).sum::<f64>())
}

/// `||X(I) - T(I)|| / ||T(I)||`; zero when `T(I)` vanishes.
pub fn rse(x: &DenseTensor, t: &SparseTensor) -> Result<f64> {
    let r = masked_residual(x, t)?;
    Ok(rse_of(r.values(), t))
}

fn rse_of(residual: &[f64], t: &SparseTensor) -> f64 {
    let num = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    let den = t.fro_norm();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Outcome of one solver iteration.
#[derive(Debug, Clone)]
pub struct Iteration {
    pub mode: usize,
    pub rank: usize,
    pub gamma: f64,
    /// Modes tried and skipped because their step stalled.
    pub stalled: Vec<usize>,
}

/// Iterative driver; [`complete`] runs it to the end.
pub struct FwSolver<'a> {
    observed: &'a SparseTensor,
    cfg: FwConfig,
    state: FwState,
    started: Instant,
    iter: usize,
}

impl<'a> FwSolver<'a> {
    pub fn new(observed: &'a SparseTensor, cfg: &FwConfig) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::EmptyObservations);
        }
        if observed.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observed tensor"));
        }
        let mut state = FwState::new(observed.shape(), cfg)?;
        state.trace.push(TraceRow {
            iter: 0,
            rse: rse(&state.x, observed)?,
            elapsed_s: 0.0,
            mode: None,
            gamma: 0.0,
            beta_gamma: 0.0,
            total_rank: 0,
        });
        Ok(FwSolver { observed, cfg: cfg.clone(), state, started: Instant::now(), iter: 0 })
    }

    pub fn state(&self) -> &FwState {
        &self.state
    }

    pub fn into_state(self) -> FwState {
        self.state
    }

    fn finish(&mut self, reason: StopReason) -> Option<Iteration> {
        self.state.stop = Some(reason);
        None
    }

    /// Runs one iteration; `Ok(None)` once the solver has stopped.
    pub fn step(&mut self) -> Result<Option<Iteration>> {
        if self.state.stop.is_some() {
            return Ok(None);
        }
        if self.iter >= self.cfg.max_iter {
            return Ok(self.finish(StopReason::MaxIterations));
        }
        let last_rse = self.state.trace.last().map_or(1.0, |r| r.rse);
        if last_rse < RSE_FLOOR {
            return Ok(self.finish(StopReason::RseFloor));
        }
        if self.state.total_rank() >= self.cfg.rank_budget {
            return Ok(self.finish(StopReason::BudgetExhausted));
        }
        let active = self.state.active_modes();
        if active.is_empty() {
            return Ok(self.finish(StopReason::AllModesSaturated));
        }
        let grad = masked_residual(&self.state.x, self.observed)?;
        if grad.values().iter().all(|&v| v == 0.0) {
            return Ok(self.finish(StopReason::Stationary));
        }
        let candidates = rank_modes(&grad, &self.cfg, &active)?;
        let shape = self.state.shape().clone();
        let mut stalled = Vec::new();
        for (k, _) in candidates {
            let r = update_rank_budget(&mut self.state, k);
            if r == 0 {
                if self.state.total_rank() >= self.cfg.rank_budget {
                    return Ok(self.finish(StopReason::BudgetExhausted));
                }
                continue;
            }
            let mut step = match gradient_step(
                &grad,
                k,
                self.cfg.shift,
                r,
                self.cfg.beta,
                self.cfg.update_rule,
                self.cfg.seed.wrapping_add(self.iter as u64),
            ) {
                Ok(step) => step,
                Err(Error::DegenerateGradient) => {
                    stalled.push(k);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let s = step.unit_direction(&shape, self.cfg.shift)?;
            let s_obs = self.observed.gather(&s)?;
            let beta_gamma = match line_search_observed(grad.values(), &s_obs) {
                Ok(g) if g > 0.0 => g,
                Ok(_) | Err(Error::ZeroOverlap) => {
                    stalled.push(k);
                    continue;
                }
                Err(e) => return Err(e),
            };
            step.beta_gamma = beta_gamma;
            let gamma = step.gamma();
            apply_update(&mut self.state, &step)?;
            let cap = self.state.mode_cap(k);
            if self.state.mode_ranks[k] >= cap {
                self.state.deactivate(k);
            }
            self.iter += 1;
            let rse_now = rse(&self.state.x, self.observed)?;
            self.state.trace.push(TraceRow {
                iter: self.iter,
                rse: rse_now,
                elapsed_s: self.started.elapsed().as_secs_f64(),
                mode: Some(k),
                gamma,
                beta_gamma,
                total_rank: self.state.total_rank(),
            });
            log::debug!("iter {} mode {} rank {} gamma {gamma:e} rse {rse_now:e}", self.iter, k + 1, step.rank());
            return Ok(Some(Iteration { mode: k, rank: step.rank(), gamma, stalled }));
        }
        if self.state.active_modes().is_empty() {
            return Ok(self.finish(StopReason::AllModesSaturated));
        }
        Ok(self.finish(StopReason::Stationary))
    }

    pub fn run(mut self) -> Result<FwState> {
        while self.step()?.is_some() {}
        Ok(self.state)
    }
}

/// Completes `observed` under `cfg`. The returned state carries the
/// iterate, its factorization and the RSE trace (first row at RSE 1).
pub fn complete(observed: &SparseTensor, cfg: &FwConfig) -> Result<FwState> {
    FwSolver::new(observed, cfg)?.run()
}

/// Largest deviations across runs that differ only in `beta`.
#[derive(Debug, Clone)]
pub struct BetaInvarianceReport {
    pub betas: Vec<f64>,
    pub max_iterate_deviation: f64,
    pub max_beta_gamma_deviation: f64,
    pub modes_agree: bool,
    pub final_rse: Vec<f64>,
}

impl BetaInvarianceReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.modes_agree && self.max_iterate_deviation <= tol && self.max_beta_gamma_deviation <= tol
    }
}

/// Elementwise relative deviation `|a - b| / max(|a|, |b|)`, with entries
/// below `1e-12 * scale` in magnitude compared against that floor instead.
pub fn relative_deviation(a: &[f64], b: &[f64], scale: f64) -> f64 {
    let floor = 1e-12 * scale;
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let denom = x.abs().max(y.abs()).max(floor);
            if denom == 0.0 {
                0.0
            } else {
                (x - y).abs() / denom
            }
        })
        .fold(0.0, f64::max)
}

pub fn beta_invariance_report(observed: &SparseTensor, cfg: &FwConfig, betas: &[f64]) -> Result<BetaInvarianceReport> {
    if betas.len() < 2 {
        return Err(Error::InvalidConfig("need at least two beta values".into()));
    }
    let runs = betas
        .iter()
        .map(|&beta| complete(observed, &FwConfig { beta, ..cfg.clone() }))
        .collect::<Result<Vec<_>>>()?;
    compare_beta_runs(betas, &runs)
}

/// Compares finished runs that differ only in `beta`, `runs[i]` having
/// used `betas[i]`.
pub fn compare_beta_runs(betas: &[f64], runs: &[FwState]) -> Result<BetaInvarianceReport> {
    if betas.len() != runs.len() || runs.len() < 2 {
        return Err(Error::InvalidConfig("need one run per beta and at least two runs".into()));
    }
    let base = &runs[0];
    let scale = base.x.max_abs();
    let mut report = BetaInvarianceReport {
        betas: betas.to_vec(),
        max_iterate_deviation: 0.0,
        max_beta_gamma_deviation: 0.0,
        modes_agree: true,
        final_rse: runs.iter().map(|r| r.trace.last().map_or(1.0, |t| t.rse)).collect(),
    };
    let modes = |s: &FwState| s.trace.iter().map(|r| r.mode).collect::<Vec<_>>();
    let products = |s: &FwState| s.trace.iter().map(|r| r.beta_gamma).collect::<Vec<_>>();
    for run in &runs[1..] {
        report.max_iterate_deviation =
            report.max_iterate_deviation.max(relative_deviation(base.x.values(), run.x.values(), scale));
        if modes(base) != modes(run) {
            report.modes_agree = false;
            continue;
        }
        let (pa, pb) = (products(base), products(run));
        let pscale = pa.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        report.max_beta_gamma_deviation = report.max_beta_gamma_deviation.max(relative_deviation(&pa, &pb, pscale));
    }
    Ok(report)
}

/// True when runs at every `beta` agree to `1e-8` relative in the final
/// iterate and in the per-iteration products `gamma * beta`.
pub fn beta_invariance_check(observed: &SparseTensor, cfg: &FwConfig, betas: &[f64]) -> Result<bool> {
    Ok(beta_invariance_report(observed, cfg, betas)?.holds(1e-8))
}

pub const TRACE_HEADER: &str = "iter,rse,elapsed_s,mode,gamma,beta_gamma";

/// Writes the trace as CSV with one-based mode numbers.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[TraceRow]) -> std::io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for row in trace {
        let mode = row.mode.map(|m| (m + 1).to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{:.6},{},{},{}",
            row.iter, row.rse, row.elapsed_s, mode, row.gamma, row.beta_gamma
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape4(d: [usize; 4]) -> Shape {
        Shape::new(d.to_vec()).unwrap()
    }

    /// Tensor of shape 2x2x1x1 whose mode-0 (d=1) unfolding is `m`.
    fn from_unfolding(m: &Matrix, mode: usize, shape: &Shape) -> DenseTensor {
        fold(m, UnfoldSpec::new(mode, 1), shape).unwrap()
    }

    #[test]
    fn min_dim_selection_on_caching_shape() {
        let shape = shape4([128, 128, 3, 10]);
        let grad = SparseTensor::new(shape, vec![(vec![0, 0, 0, 0], 1.0)]).unwrap();
        let cfg = FwConfig { mode_selection: ModeSelection::MinDim, ..FwConfig::default() };
        assert_eq!(select_mode(&grad, &cfg, &[0, 1, 2, 3]).unwrap(), 2);
        assert_eq!(select_mode(&grad, &cfg, &[3]).unwrap(), 3);
        assert!(matches!(select_mode(&grad, &cfg, &[]), Err(Error::EmptyActiveSet)));
    }

    #[test]
    fn sigma_max_singleton() {
        let shape = shape4([2, 3, 2, 2]);
        let grad = DenseTensor::from_fn(shape, |i| (i[0] + i[1] * i[2]) as f64 + 0.5);
        assert_eq!(select_mode(&grad, &FwConfig::default(), &[3]).unwrap(), 3);
    }

    #[test]
    fn multi_rank_direction_on_diagonal() {
        let shape = shape4([2, 2, 1, 1]);
        let grad = from_unfolding(&Matrix::from_diagonal(&[3.0, 1.0]), 0, &shape);
        let step = gradient_step(&grad, 0, 1, 2, 1.0, UpdateRule::MultiRank, 0).unwrap();
        let s = step.unfolded_direction();
        let want = [0.75, 0.0, 0.0, 0.25];
        for (a, b) in s.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{:?}", s.values());
        }
        assert!((step.beta_scale() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rank_one_direction_on_diagonal() {
        let shape = shape4([2, 2, 1, 1]);
        let grad = from_unfolding(&Matrix::from_diagonal(&[3.0, 1.0]), 0, &shape);
        let step = gradient_step(&grad, 0, 1, 2, 1.0, UpdateRule::RankOne, 0).unwrap();
        let s = step.unfolded_direction();
        let want = [1.0, 0.0, 0.0, 0.0];
        for (a, b) in s.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(step.rank(), 1);
    }

    #[test]
    fn doubling_beta_doubles_direction() {
        let shape = shape4([3, 2, 2, 2]);
        let grad = DenseTensor::from_fn(shape.clone(), |i| ((i[0] * 7 + i[1] * 3 + i[2] + 2 * i[3]) % 5) as f64 - 2.0);
        let a = gradient_step(&grad, 1, 1, 2, 1.5, UpdateRule::MultiRank, 0).unwrap();
        let b = gradient_step(&grad, 1, 1, 2, 3.0, UpdateRule::MultiRank, 0).unwrap();
        let (sa, sb) = (a.direction(&shape, 1).unwrap(), b.direction(&shape, 1).unwrap());
        for (x, y) in sa.values().iter().zip(sb.values()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn zero_gradient_is_degenerate() {
        let shape = shape4([2, 2, 2, 2]);
        let grad = DenseTensor::zeros(shape);
        assert!(matches!(
            gradient_step(&grad, 0, 1, 1, 1.0, UpdateRule::MultiRank, 0),
            Err(Error::DegenerateGradient)
        ));
    }

    #[test]
    fn gradient_step_rank_bounds() {
        let grad = DenseTensor::from_fn(shape4([2, 3, 2, 2]), |i| i[0] as f64 + 1.0);
        assert!(gradient_step(&grad, 0, 1, 3, 1.0, UpdateRule::MultiRank, 0).is_err());
        assert!(gradient_step(&grad, 0, 1, 0, 1.0, UpdateRule::MultiRank, 0).is_err());
    }

    fn two_cell_fixture() -> (SparseTensor, DenseTensor) {
        let shape = shape4([2, 2, 1, 1]);
        let t = SparseTensor::new(shape.clone(), vec![(vec![0, 0, 0, 0], 3.0), (vec![1, 1, 0, 0], 4.0)]).unwrap();
        let mut s = DenseTensor::zeros(shape);
        s.set(&[0, 0, 0, 0], -3.0);
        s.set(&[1, 1, 0, 0], -4.0);
        (t, s)
    }

    #[test]
    fn line_search_two_cell_fit() {
        let (t, s) = two_cell_fixture();
        let x = DenseTensor::zeros(t.shape().clone());
        let gamma = line_search(&x, &t, &s).unwrap();
        assert!((gamma - 1.0).abs() < 1e-15);
        let mut x1 = x.clone();
        x1.axpy(-gamma, &s).unwrap();
        assert!(rse(&x1, &t).unwrap() < 1e-15);
    }

    #[test]
    fn line_search_clamps_and_detects_zero_overlap() {
        let (t, s) = two_cell_fixture();
        let x = DenseTensor::zeros(t.shape().clone());
        let mut neg = s.clone();
        neg.scale(-1.0);
        assert_eq!(line_search(&x, &t, &neg).unwrap(), 0.0);
        let mut off = DenseTensor::zeros(t.shape().clone());
        off.set(&[0, 1, 0, 0], 1.0);
        assert!(matches!(line_search(&x, &t, &off), Err(Error::ZeroOverlap)));
    }

    #[test]
    fn zero_step_advances_ledger_only() {
        let (t, _) = two_cell_fixture();
        let cfg = FwConfig { rank_budget: 4, ..FwConfig::default() };
        let mut state = FwState::new(t.shape(), &cfg).unwrap();
        let grad = masked_residual(&state.x, &t).unwrap();
        let mut step = gradient_step(&grad, 0, 1, 2, 1.0, UpdateRule::MultiRank, 0).unwrap();
        step.beta_gamma = 0.0;
        apply_update(&mut state, &step).unwrap();
        assert!(state.x.values().iter().all(|&v| v == 0.0));
        assert_eq!(state.mode_ranks[0], 2);
        assert_eq!(state.components.total_rank(), 0);
    }

    #[test]
    fn one_iteration_fits_two_cells() {
        let (t, _) = two_cell_fixture();
        let cfg = FwConfig { rank_budget: 4, ..FwConfig::default() };
        let state = complete(&t, &cfg).unwrap();
        assert_eq!(state.trace[0].rse, 1.0);
        assert!(state.trace[1].rse <= 1e-12);
        assert!(state.representation_error().unwrap() <= 1e-8);
    }

    #[test]
    fn rank_budget_formula() {
        let shape = shape4([128, 128, 3, 10]);
        let cfg = FwConfig { rank_budget: 8, ..FwConfig::default() };
        let mut state = FwState::new(&shape, &cfg).unwrap();
        assert_eq!(update_rank_budget(&mut state, 2), 3);
        assert!(state.active[2]);
        state.mode_ranks[2] = 3;
        assert_eq!(update_rank_budget(&mut state, 2), 0);
        assert!(!state.active[2]);
        state.mode_ranks[0] = 5;
        for k in [0, 1, 3] {
            assert_eq!(update_rank_budget(&mut state, k), 0);
            assert!(state.active[k]);
        }
    }

    #[test]
    fn empty_observations_rejected() {
        let t = SparseTensor::new(shape4([2, 2, 2, 2]), Vec::new()).unwrap();
        assert!(matches!(complete(&t, &FwConfig::default()), Err(Error::EmptyObservations)));
    }

    #[test]
    fn trace_csv_layout() {
        let (t, _) = two_cell_fixture();
        let state = complete(&t, &FwConfig { rank_budget: 2, ..FwConfig::default() }).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &state.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert!(lines[1].starts_with("0,1,0.000000,,0,0"));
        assert_eq!(lines.len(), state.trace.len() + 1);
    }
}

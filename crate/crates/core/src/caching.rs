//! Most-popular cache placement, hit-rate accounting and the online
//! observe / complete / predict / place / score loop.

use std::collections::BTreeMap;
use std::fmt;

use crate::completion::{complete, FwConfig};
use crate::error::{Error, Result};
use crate::ingest::{window_tensor, SlotData};
use crate::prediction::{normalize_demands, predict_all, Aggregation, DemandHistory, PredictorConfig, PredictorMode};
use crate::tensor::{DenseTensor, SparseTensor};

/// Cache contents of one base station: `weights[f]` is the cached
/// fraction of file `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct CachePlan {
    pub weights: Vec<f64>,
    pub capacity: usize,
}

impl CachePlan {
    pub fn cached_files(&self) -> Vec<usize> {
        self.weights.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(f, _)| f).collect()
    }

    pub fn is_feasible(&self) -> bool {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().all(|&w| (0.0..=1.0).contains(&w)) && (total - self.capacity as f64).abs() <= 1e-9
    }
}

/// Caches the `capacity` files with the largest scores; ties go to the
/// smaller file index.
pub fn mpc_place(scores: &[f64], capacity: usize) -> Result<CachePlan> {
    if capacity > scores.len() {
        return Err(Error::CapacityExceeded { capacity, files: scores.len() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("placement scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut weights = vec![0.0; scores.len()];
    for &f in &order[..capacity] {
        weights[f] = 1.0;
    }
    Ok(CachePlan { weights, capacity })
}

/// Total demand `sum_i D[f, i, b]` of each primary file at base station `b`
/// of an `F x F x N_BS` slot tensor.
pub fn file_mass(slot: &DenseTensor, b: usize) -> Vec<f64> {
    let f = slot.shape().dim(0);
    let vals = slot.values();
    let mut mass = vec![0.0; f];
    for i in 0..f {
        let col = &vals[f * (i + f * b)..f * (i + f * b + 1)];
        for (m, v) in mass.iter_mut().zip(col) {
            *m += v;
        }
    }
    mass
}

/// Hit accounting of one base station in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub hit_rate: f64,
    pub requests: f64,
    pub hits: f64,
    /// No demand in the slot; the hit rate is reported as 0.
    pub zero_demand: bool,
}

/// Share of the slot's weighted requests whose primary file is cached.
pub fn hit_rate(slot: &DenseTensor, plan: &CachePlan, b: usize) -> Result<SlotOutcome> {
    let dims = slot.shape().dims();
    if dims.len() != 3 || dims[0] != dims[1] || dims[0] != plan.weights.len() {
        return Err(Error::InvalidShape(format!(
            "slot {} does not match a plan over {} files",
            slot.shape(),
            plan.weights.len()
        )));
    }
    if b >= dims[2] {
        return Err(Error::IndexOutOfRange { index: vec![b], shape: vec![dims[2]] });
    }
    let mass = file_mass(slot, b);
    let requests: f64 = mass.iter().sum();
    let hits: f64 = mass.iter().zip(&plan.weights).map(|(m, w)| m * w).sum();
    if requests <= 0.0 {
        return Ok(SlotOutcome { hit_rate: 0.0, requests: 0.0, hits: 0.0, zero_demand: true });
    }
    Ok(SlotOutcome { hit_rate: (hits / requests).clamp(0.0, 1.0), requests, hits, zero_demand: false })
}

/// Placement that knows the realized demand: the per-slot upper bound.
pub fn oracle_place(slot: &DenseTensor, b: usize, capacity: usize) -> Result<CachePlan> {
    mpc_place(&file_mass(slot, b), capacity)
}

/// A placement strategy evaluated by the online loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Predicted {
        predictor: PredictorMode,
        /// Rank budget of the completion step, or `None` for raw history.
        completion_rank: Option<usize>,
    },
    Oracle,
}

impl Method {
    pub fn predictor_name(&self) -> &'static str {
        match self {
            Method::Predicted { predictor: PredictorMode::LeastSquares, .. } => "lp",
            Method::Predicted { predictor: PredictorMode::Mean, .. } => "mp",
            Method::Oracle => "oracle",
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            Method::Predicted { completion_rank, .. } => *completion_rank,
            Method::Oracle => None,
        }
    }

    /// Name without the rank, e.g. `lp-completed`.
    pub fn family(&self) -> String {
        match self {
            Method::Predicted { completion_rank: None, .. } => format!("{}-raw", self.predictor_name()),
            Method::Predicted { completion_rank: Some(_), .. } => format!("{}-completed", self.predictor_name()),
            Method::Oracle => "oracle".into(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rank() {
            Some(r) => write!(f, "{}-r{r}", self.family()),
            None => f.write_str(&self.family()),
        }
    }
}

/// Settings shared by every method of an online run.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineConfig {
    pub window: usize,
    pub order: usize,
    pub capacity: usize,
    pub aggregation: Aggregation,
    /// Template for the completion solver; `rank_budget` is taken from the
    /// method. Defaults to shift 2, whose unfoldings pair files with files
    /// and base stations with slots.
    pub solver: FwConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            window: 10,
            order: 6,
            capacity: 32,
            aggregation: Aggregation::Primary,
            solver: FwConfig { shift: 2, ..FwConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// Slot whose realized demand was scored.
    pub slot: usize,
    pub bs: usize,
    pub method: Method,
    pub outcome: SlotOutcome,
    pub predictor_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineRunReport {
    pub config: OnlineConfig,
    pub methods: Vec<Method>,
    pub records: Vec<SlotRecord>,
}

impl OnlineRunReport {
    /// Mean hit rate of `method` over all scored (slot, BS) pairs with demand.
    pub fn average(&self, method: Method) -> Option<f64> {
        let (sum, n) = self
            .records
            .iter()
            .filter(|r| r.method == method && !r.outcome.zero_demand)
            .fold((0.0, 0usize), |(s, n), r| (s + r.outcome.hit_rate, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn averages(&self) -> Vec<(Method, Option<f64>)> {
        self.methods.iter().map(|&m| (m, self.average(m))).collect()
    }

    pub fn zero_demand_count(&self) -> usize {
        self.records.iter().filter(|r| r.method == Method::Oracle && r.outcome.zero_demand).count()
    }

    /// Per-slot hit rates of `method`, ordered by (slot, bs).
    pub fn series(&self, method: Method) -> Vec<&SlotRecord> {
        self.records.iter().filter(|r| r.method == method).collect()
    }
}

fn completed_history(
    window: &DenseTensor,
    cfg: &OnlineConfig,
    rank: usize,
    seed: u64,
) -> Result<DemandHistory> {
    let observed = SparseTensor::from_dense_nonzeros(window);
    if observed.is_empty() {
        return normalize_demands(window, cfg.aggregation);
    }
    let solver = FwConfig { rank_budget: rank, seed, ..cfg.solver.clone() };
    let state = complete(&observed, &solver)?;
    normalize_demands(&state.x, cfg.aggregation)
}

/// Runs every method over the stream. At each slot `t >= window - 1` the
/// last `window` observed slots form the history, each method forecasts
/// slot `t + 1`, and the placement is scored against its realized demand.
pub fn run_methods(stream: &[SlotData], cfg: &OnlineConfig, methods: &[Method]) -> Result<OnlineRunReport> {
    if stream.len() <= cfg.window {
        return Err(Error::InvalidConfig(format!(
            "stream of {} slots is not longer than the window {}",
            stream.len(),
            cfg.window
        )));
    }
    PredictorConfig { order: cfg.order, mode: PredictorMode::Mean }.validate(cfg.window)?;
    let first = &stream[0].realized;
    let dims = first.shape().dims();
    if dims.len() != 3 || dims[0] != dims[1] {
        return Err(Error::InvalidShape(format!("slot tensors must be F x F x N_BS, got {}", first.shape())));
    }
    if cfg.capacity > dims[0] {
        return Err(Error::CapacityExceeded { capacity: cfg.capacity, files: dims[0] });
    }
    for (t, s) in stream.iter().enumerate() {
        if s.observed.shape() != first.shape() || s.realized.shape() != first.shape() {
            return Err(Error::ShapeMismatch { expected: dims.to_vec(), found: s.realized.shape().dims().to_vec() }
                .at_slot(t));
        }
    }
    let num_bs = dims[2];
    let mut records = Vec::new();
    for t in cfg.window - 1..stream.len() - 1 {
        let run_slot = || -> Result<Vec<SlotRecord>> {
            let observed: Vec<DenseTensor> =
                stream[t + 1 - cfg.window..=t].iter().map(|s| s.observed.clone()).collect();
            let window = window_tensor(&observed)?;
            let mut histories: BTreeMap<Option<usize>, DemandHistory> = BTreeMap::new();
            let realized = &stream[t + 1].realized;
            let mut out = Vec::new();
            for &method in methods {
                let (plans, fallback) = match method {
                    Method::Oracle => {
                        let plans = (0..num_bs).map(|b| oracle_place(realized, b, cfg.capacity)).collect::<Result<Vec<_>>>()?;
                        (plans, vec![false; num_bs])
                    }
                    Method::Predicted { predictor, completion_rank } => {
                        if !histories.contains_key(&completion_rank) {
                            let h = match completion_rank {
                                None => normalize_demands(&window, cfg.aggregation)?,
                                Some(r) => completed_history(&window, cfg, r, cfg.solver.seed.wrapping_add(t as u64))?,
                            };
                            histories.insert(completion_rank, h);
                        }
                        let forecast = predict_all(&histories[&completion_rank], &PredictorConfig { order: cfg.order, mode: predictor })?;
                        let plans = forecast
                            .per_bs
                            .iter()
                            .map(|f| mpc_place(&f.shares, cfg.capacity))
                            .collect::<Result<Vec<_>>>()?;
                        (plans, forecast.per_bs.iter().map(|f| f.fallback).collect())
                    }
                };
                for (b, plan) in plans.iter().enumerate() {
                    out.push(SlotRecord {
                        slot: t + 1,
                        bs: b,
                        method,
                        outcome: hit_rate(realized, plan, b)?,
                        predictor_fallback: fallback[b],
                    });
                }
            }
            Ok(out)
        };
        records.extend(run_slot().map_err(|e| e.at_slot(t + 1))?);
    }
    Ok(OnlineRunReport { config: cfg.clone(), methods: methods.to_vec(), records })
}

/// One predictor, with or without completion, alongside the oracle.
pub fn run_online(
    stream: &[SlotData],
    cfg: &OnlineConfig,
    predictor: PredictorMode,
    completion_rank: Option<usize>,
) -> Result<OnlineRunReport> {
    run_methods(stream, cfg, &[Method::Predicted { predictor, completion_rank }, Method::Oracle])
}

/// The `{lp, mp} x {raw, completed}` grid over `ranks`, plus the oracle.
pub fn method_grid(ranks: &[usize]) -> Vec<Method> {
    let mut methods = Vec::new();
    for predictor in [PredictorMode::LeastSquares, PredictorMode::Mean] {
        methods.push(Method::Predicted { predictor, completion_rank: None });
        for &r in ranks {
            methods.push(Method::Predicted { predictor, completion_rank: Some(r) });
        }
    }
    methods.push(Method::Oracle);
    methods
}

pub const REPORT_HEADER: &str = "slot,bs,method,hit_rate";
pub const SUMMARY_HEADER: &str = "method,rank,avg_hit_rate";

/// Per-slot rows with one-based slot and BS indices.
pub fn write_report_csv<W: std::io::Write>(mut w: W, report: &OnlineRunReport) -> std::io::Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in &report.records {
        writeln!(w, "{},{},{},{:.12}", r.slot + 1, r.bs + 1, r.method, r.outcome.hit_rate)?;
    }
    Ok(())
}

/// One row per method family and rank. Raw methods do not depend on the
/// rank and are repeated for each entry of `ranks` so the grid is complete.
pub fn write_summary_csv<W: std::io::Write>(mut w: W, report: &OnlineRunReport, ranks: &[usize]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    let fmt_avg = |a: Option<f64>| a.map_or_else(String::new, |v| format!("{v:.12}"));
    for &r in ranks {
        for predictor in [PredictorMode::LeastSquares, PredictorMode::Mean] {
            for rank in [None, Some(r)] {
                let m = Method::Predicted { predictor, completion_rank: rank };
                if report.methods.contains(&m) {
                    writeln!(w, "{},{r},{}", m.family(), fmt_avg(report.average(m)))?;
                }
            }
        }
    }
    if report.methods.contains(&Method::Oracle) {
        writeln!(w, "oracle,,{}", fmt_avg(report.average(Method::Oracle)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{synth_demand_stream, StreamSpec};
    use crate::tensor::Shape;

    fn diag_slot(mass: &[f64]) -> DenseTensor {
        let f = mass.len();
        let mut t = DenseTensor::zeros(Shape::new(vec![f, f, 1]).unwrap());
        for (i, &m) in mass.iter().enumerate() {
            t.set(&[i, i, 0], m);
        }
        t
    }

    #[test]
    fn mpc_picks_top_shares() {
        let plan = mpc_place(&[0.5, 0.3, 0.1, 0.1], 2).unwrap();
        assert_eq!(plan.cached_files(), vec![0, 1]);
        assert!(plan.is_feasible());
        let plan = mpc_place(&[0.1, 0.1, 0.5, 0.3], 3).unwrap();
        assert_eq!(plan.cached_files(), vec![0, 2, 3]);
    }

    #[test]
    fn ties_prefer_smaller_index() {
        assert_eq!(mpc_place(&[0.25; 4], 2).unwrap().cached_files(), vec![0, 1]);
    }

    #[test]
    fn capacity_checked() {
        assert!(matches!(mpc_place(&[1.0, 0.0], 3), Err(Error::CapacityExceeded { capacity: 3, files: 2 })));
        assert!(mpc_place(&[f64::NAN, 0.0], 1).is_err());
    }

    #[test]
    fn hit_rate_examples() {
        let slot = diag_slot(&[6.0, 3.0, 1.0]);
        let plan = mpc_place(&[1.0, 0.0, 0.0], 1).unwrap();
        assert!((hit_rate(&slot, &plan, 0).unwrap().hit_rate - 0.6).abs() < 1e-15);
        let all = mpc_place(&[0.0; 3], 3).unwrap();
        assert_eq!(hit_rate(&slot, &all, 0).unwrap().hit_rate, 1.0);
        let one = diag_slot(&[0.0, 0.0, 5.0]);
        assert_eq!(hit_rate(&one, &plan, 0).unwrap().hit_rate, 0.0);
        let cached = mpc_place(&[0.0, 0.0, 1.0], 1).unwrap();
        assert_eq!(hit_rate(&one, &cached, 0).unwrap().hit_rate, 1.0);
    }

    #[test]
    fn indirect_requests_count_for_primary_file() {
        let mut slot = DenseTensor::zeros(Shape::new(vec![2, 2, 1]).unwrap());
        slot.set(&[0, 1, 0], 4.0);
        slot.set(&[1, 1, 0], 1.0);
        let plan = mpc_place(&[1.0, 0.0], 1).unwrap();
        assert!((hit_rate(&slot, &plan, 0).unwrap().hit_rate - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_demand_flagged() {
        let out = hit_rate(&diag_slot(&[0.0, 0.0]), &mpc_place(&[1.0, 0.0], 1).unwrap(), 0).unwrap();
        assert!(out.zero_demand);
        assert_eq!(out.hit_rate, 0.0);
    }

    #[test]
    fn method_labels() {
        let grid = method_grid(&[8, 16]);
        let names: Vec<String> = grid.iter().map(ToString::to_string).collect();
        assert_eq!(
            names,
            ["lp-raw", "lp-completed-r8", "lp-completed-r16", "mp-raw", "mp-completed-r8", "mp-completed-r16", "oracle"]
        );
    }

    #[test]
    fn online_loop_scores_each_slot_after_window() {
        let spec = StreamSpec { files: 12, slots: 8, mask_fraction: 0.0, ..StreamSpec::default() };
        let stream = synth_demand_stream(&spec).unwrap();
        let cfg = OnlineConfig { window: 4, order: 2, capacity: 3, ..OnlineConfig::default() };
        let report = run_online(&stream, &cfg, PredictorMode::Mean, None).unwrap();
        let slots: Vec<usize> = report.series(Method::Oracle).iter().map(|r| r.slot).collect();
        assert_eq!(slots, vec![4, 4, 4, 5, 5, 5, 6, 6, 6, 7, 7, 7]);
        let lp = report.series(report.methods[0]);
        for (p, o) in lp.iter().zip(report.series(Method::Oracle)) {
            assert!(p.outcome.hit_rate <= o.outcome.hit_rate + 1e-12);
        }
    }

    #[test]
    fn short_stream_rejected() {
        let spec = StreamSpec { files: 4, slots: 3, ..StreamSpec::default() };
        let stream = synth_demand_stream(&spec).unwrap();
        let cfg = OnlineConfig { window: 3, order: 1, capacity: 1, ..OnlineConfig::default() };
        assert!(run_online(&stream, &cfg, PredictorMode::Mean, None).is_err());
    }

    #[test]
    fn summary_grid_rows() {
        let spec = StreamSpec { files: 8, slots: 6, ..StreamSpec::default() };
        let stream = synth_demand_stream(&spec).unwrap();
        let cfg = OnlineConfig {
            window: 4,
            order: 2,
            capacity: 2,
            solver: FwConfig { max_iter: 5, ..FwConfig::default() },
            ..OnlineConfig::default()
        };
        let ranks = [2, 4];
        let report = run_methods(&stream, &cfg, &method_grid(&ranks)).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &report, &ranks).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * ranks.len() + 1);
        assert!(text.lines().last().unwrap().starts_with("oracle,,"));
    }
}

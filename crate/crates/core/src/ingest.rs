//! Demand tensors from MovieLens-style ratings, and synthetic fixtures
//! with known ground truth.

use std::collections::HashMap;
use std::io::BufRead;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{fold, DenseTensor, Matrix, Shape, SparseTensor, UnfoldSpec};

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingsRecord {
    pub user_id: u64,
    pub movie_id: u64,
    pub rating: f64,
    /// Epoch seconds.
    pub timestamp: i64,
}

/// How the second (recommendation) axis is populated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pairing {
    /// Every rating of `f` counts once at `(f, f)`.
    SelfDiagonal,
    /// Direct counts as in `SelfDiagonal`, plus one count at `(f, i)` when
    /// a user rates `i` right after `f` within `gap_hours`.
    CoSession { gap_hours: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// One per rating event.
    Count,
    /// The star value of the rating.
    Stars,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub top_f: usize,
    pub num_bs: usize,
    pub slot_days: u32,
    pub pairing: Pairing,
    pub weighting: Weighting,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            top_f: 128,
            num_bs: 3,
            slot_days: 30,
            pairing: Pairing::SelfDiagonal,
            weighting: Weighting::Count,
            seed: 0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_f == 0 || self.num_bs == 0 || self.slot_days == 0 {
            return Err(Error::InvalidConfig("top_f, num_bs and slot_days must be positive".into()));
        }
        if let Pairing::CoSession { gap_hours } = self.pairing {
            if !(gap_hours > 0.0) {
                return Err(Error::InvalidConfig("session gap must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Per-slot `F x F x N_BS` demand tensors.
#[derive(Debug, Clone)]
pub struct DemandStream {
    pub slots: Vec<DenseTensor>,
    /// Original movie id of each kept file index.
    pub movie_ids: Vec<u64>,
    /// Epoch second at which slot 0 starts.
    pub start: i64,
    pub kept_ratings: usize,
}

/// Parses `user_id,movie_id,rating,timestamp` lines separated by commas,
/// tabs or `::`. A non-numeric first line is taken as a header.
pub fn parse_ratings<R: BufRead>(r: R) -> Result<Vec<RatingsRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains("::") {
            line.split("::").collect()
        } else if line.contains('\t') {
            line.split('\t').collect()
        } else {
            line.split(',').collect()
        };
        if fields.len() < 4 {
            return Err(Error::Parse { line: lineno, msg: format!("expected 4 fields, found {}", fields.len()) });
        }
        let parsed = (
            fields[0].trim().parse::<u64>(),
            fields[1].trim().parse::<u64>(),
            fields[2].trim().parse::<f64>(),
            fields[3].trim().parse::<i64>(),
        );
        match parsed {
            (Ok(user_id), Ok(movie_id), Ok(rating), Ok(timestamp)) => {
                if timestamp <= 0 || !(rating >= 0.0) {
                    return Err(Error::Parse { line: lineno, msg: "timestamp must be > 0 and rating >= 0".into() });
                }
                out.push(RatingsRecord { user_id, movie_id, rating, timestamp });
            }
            _ if out.is_empty() && lineno == 1 => continue,
            _ => return Err(Error::Parse { line: lineno, msg: format!("malformed record {line:?}") }),
        }
    }
    Ok(out)
}

/// SplitMix64 finalizer; fixed across platforms and releases.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Base station serving `user_id`.
pub fn assign_bs(user_id: u64, num_bs: usize, seed: u64) -> usize {
    (mix64(user_id ^ mix64(seed)) % num_bs as u64) as usize
}

/// Bins ratings into `slot_days` windows and accumulates the demand
/// tensor of each slot over the `top_f` most rated movies.
pub fn build_demand_tensor(records: &[RatingsRecord], cfg: &IngestConfig) -> Result<DemandStream> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyRatings);
    }
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for r in records {
        *counts.entry(r.movie_id).or_default() += 1;
    }
    if counts.len() < cfg.top_f {
        return Err(Error::InsufficientMovies { found: counts.len(), required: cfg.top_f });
    }
    let mut ranked: Vec<(u64, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(cfg.top_f);
    let movie_ids: Vec<u64> = ranked.iter().map(|&(m, _)| m).collect();
    let file_of: HashMap<u64, usize> = movie_ids.iter().enumerate().map(|(f, &m)| (m, f)).collect();

    let start = records.iter().map(|r| r.timestamp).min().expect("nonempty");
    let slot_len = i64::from(cfg.slot_days) * SECONDS_PER_DAY;
    let slot_of = |ts: i64| ((ts - start) / slot_len) as usize;
    let num_slots = records.iter().map(|r| slot_of(r.timestamp)).max().expect("nonempty") + 1;

    let f = cfg.top_f;
    let shape = Shape::new(vec![f, f, cfg.num_bs])?;
    let mut slots = vec![DenseTensor::zeros(shape); num_slots];
    let weight = |r: &RatingsRecord| match cfg.weighting {
        Weighting::Count => 1.0,
        Weighting::Stars => r.rating,
    };

    let mut kept = 0;
    for r in records {
        if let Some(&fi) = file_of.get(&r.movie_id) {
            let b = assign_bs(r.user_id, cfg.num_bs, cfg.seed);
            let t = &mut slots[slot_of(r.timestamp)];
            let v = t.get(&[fi, fi, b]);
            t.set(&[fi, fi, b], v + weight(r));
            kept += 1;
        }
    }

    if let Pairing::CoSession { gap_hours } = cfg.pairing {
        let gap = (gap_hours * 3600.0) as i64;
        let mut by_user: HashMap<u64, Vec<&RatingsRecord>> = HashMap::new();
        for r in records {
            by_user.entry(r.user_id).or_default().push(r);
        }
        let mut users: Vec<u64> = by_user.keys().copied().collect();
        users.sort_unstable();
        for u in users {
            let mut hist = by_user.remove(&u).expect("present");
            // stable: equal timestamps keep file order
            hist.sort_by_key(|r| r.timestamp);
            let b = assign_bs(u, cfg.num_bs, cfg.seed);
            for pair in hist.windows(2) {
                let (prev, next) = (pair[0], pair[1]);
                if next.timestamp - prev.timestamp > gap || prev.movie_id == next.movie_id {
                    continue;
                }
                if let (Some(&fi), Some(&ii)) = (file_of.get(&prev.movie_id), file_of.get(&next.movie_id)) {
                    let t = &mut slots[slot_of(next.timestamp)];
                    let v = t.get(&[fi, ii, b]);
                    t.set(&[fi, ii, b], v + weight(next));
                }
            }
        }
    }

    Ok(DemandStream { slots, movie_ids, start, kept_ratings: kept })
}

/// Stacks consecutive `F x F x N_BS` slots into an `F x F x N_BS x tau`
/// window, oldest slot first.
pub fn window_tensor(slots: &[DenseTensor]) -> Result<DenseTensor> {
    let first = slots.first().ok_or_else(|| Error::InvalidConfig("empty window".into()))?;
    let mut dims = first.shape().dims().to_vec();
    let mut values = Vec::with_capacity(first.values().len() * slots.len());
    for s in slots {
        first.shape().check_same(s.shape())?;
        values.extend_from_slice(s.values());
    }
    dims.push(slots.len());
    DenseTensor::from_vec(Shape::new(dims)?, values)
}

/// Parameters of [`synth_low_rank`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub shape: Shape,
    /// Rank of each mode's component in its own circular unfolding.
    pub ranks: Vec<usize>,
    pub shift: usize,
    pub noise_sigma: f64,
    pub observe_fraction: f64,
    pub seed: u64,
}

/// Ground truth `sum_k fold(A_k B_k^T, (k, d))` with Gaussian factors, and
/// a uniformly sampled subset of its entries (plus optional noise).
pub fn synth_low_rank(spec: &SynthSpec) -> Result<(SparseTensor, DenseTensor)> {
    let shape = &spec.shape;
    if spec.ranks.len() != shape.order() {
        return Err(Error::InvalidConfig(format!(
            "{} ranks for an order-{} tensor",
            spec.ranks.len(),
            shape.order()
        )));
    }
    if !(spec.observe_fraction > 0.0 && spec.observe_fraction <= 1.0) {
        return Err(Error::InvalidConfig("observe_fraction must be in (0, 1]".into()));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::InvalidConfig("noise_sigma must be nonnegative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = DenseTensor::zeros(shape.clone());
    for (k, &r) in spec.ranks.iter().enumerate() {
        let unfold_spec = UnfoldSpec::new(k, spec.shift);
        let (rows, cols) = unfold_spec.dims(shape)?;
        if r > rows.min(cols) {
            return Err(Error::RankOutOfRange { rank: r, max: rows.min(cols) });
        }
        if r == 0 {
            continue;
        }
        let a = Matrix::from_fn(rows, r, |_, _| StandardNormal.sample(&mut rng));
        let b = Matrix::from_fn(cols, r, |_, _| StandardNormal.sample(&mut rng));
        let w = vec![1.0 / (r as f64).sqrt(); r];
        truth.axpy(1.0, &fold(&a.scaled_outer(&w, &b), unfold_spec, shape)?)?;
    }
    let total = shape.len();
    let count = ((spec.observe_fraction * total as f64).round() as usize).clamp(1, total);
    let mut offsets = sample(&mut rng, total, count).into_vec();
    offsets.sort_unstable();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let entries: Vec<(Vec<usize>, f64)> = offsets
        .iter()
        .map(|&lin| {
            let mut v = truth.values()[lin];
            if spec.noise_sigma > 0.0 {
                v += noise.sample(&mut rng);
            }
            (shape.multi_index(lin), v)
        })
        .collect();
    Ok((SparseTensor::new(shape.clone(), entries)?, truth))
}

/// One slot of a caching stream: what the base stations observed and the
/// full demand the placement is scored against.
#[derive(Debug, Clone)]
pub struct SlotData {
    pub observed: DenseTensor,
    pub realized: DenseTensor,
}

impl SlotData {
    pub fn fully_observed(t: DenseTensor) -> Self {
        SlotData { observed: t.clone(), realized: t }
    }
}

/// Parameters of [`synth_demand_stream`].
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub files: usize,
    pub num_bs: usize,
    pub slots: usize,
    /// Number of latent popularity profiles.
    pub components: usize,
    pub zipf_exponent: f64,
    /// Amplitude of periodic popularity swings, 0 for a stationary stream.
    pub drift: f64,
    /// Period of the swings, in slots.
    pub period: f64,
    /// Fraction of entries hidden from the observed tensor.
    pub mask_fraction: f64,
    /// Expected requests per base station and slot.
    pub requests_per_slot: f64,
    /// Sample counts from a Poisson law around the expected demand.
    pub poisson: bool,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        StreamSpec {
            files: 128,
            num_bs: 3,
            slots: 200,
            components: 2,
            zipf_exponent: 0.8,
            drift: 0.5,
            period: 24.0,
            mask_fraction: 0.95,
            requests_per_slot: 2000.0,
            poisson: true,
            seed: 0,
        }
    }
}

fn zipf_profile(n: usize, exponent: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut p = vec![0.0; n];
    for (rank, &f) in order.iter().enumerate() {
        p[f] = 1.0 / ((rank + 1) as f64).powf(exponent);
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// Low-rank nonnegative demand stream: each latent profile couples a Zipf
/// popularity over requested files, a Zipf profile over recommended files,
/// per-BS weights and a (possibly periodic) temporal weight.
pub fn synth_demand_stream(spec: &StreamSpec) -> Result<Vec<SlotData>> {
    if spec.files == 0 || spec.num_bs == 0 || spec.slots == 0 || spec.components == 0 {
        return Err(Error::InvalidConfig("stream dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.mask_fraction) {
        return Err(Error::InvalidConfig("mask_fraction must be in [0, 1)".into()));
    }
    if !(spec.drift >= 0.0 && spec.drift < 1.0) {
        return Err(Error::InvalidConfig("drift must be in [0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let f = spec.files;
    let profiles: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> = (0..spec.components)
        .map(|_| {
            let primary = zipf_profile(f, spec.zipf_exponent, &mut rng);
            let recommended = zipf_profile(f, spec.zipf_exponent, &mut rng);
            let bs: Vec<f64> = (0..spec.num_bs).map(|_| rng.random_range(0.5..1.5)).collect();
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            (primary, recommended, bs, phase)
        })
        .collect();
    let shape = Shape::new(vec![f, f, spec.num_bs])?;
    let mut out = Vec::with_capacity(spec.slots);
    for t in 0..spec.slots {
        let mut expected = DenseTensor::zeros(shape.clone());
        for (primary, recommended, bs, phase) in &profiles {
            let temporal = 1.0 + spec.drift * (std::f64::consts::TAU * t as f64 / spec.period + phase).sin();
            let vals = expected.values_mut();
            for b in 0..spec.num_bs {
                let wb = temporal * bs[b];
                for i in 0..f {
                    let wi = wb * recommended[i];
                    let base = f * (i + f * b);
                    for (ff, p) in primary.iter().enumerate() {
                        vals[base + ff] += wi * p;
                    }
                }
            }
        }
        // scale each BS slice to the requested volume
        let per_bs = f * f;
        let vals = expected.values_mut();
        for b in 0..spec.num_bs {
            let slice = &mut vals[b * per_bs..(b + 1) * per_bs];
            let total: f64 = slice.iter().sum();
            slice.iter_mut().for_each(|v| *v *= spec.requests_per_slot / total);
        }
        let realized = if spec.poisson {
            let mut r = expected.clone();
            for v in r.values_mut() {
                *v = if *v > 0.0 { Poisson::new(*v).expect("positive mean").sample(&mut rng) } else { 0.0 };
            }
            r
        } else {
            expected
        };
        let mut observed = realized.clone();
        if spec.mask_fraction > 0.0 {
            for v in observed.values_mut() {
                if rng.random::<f64>() < spec.mask_fraction {
                    *v = 0.0;
                }
            }
        }
        out.push(SlotData { observed, realized });
    }
    Ok(out)
}

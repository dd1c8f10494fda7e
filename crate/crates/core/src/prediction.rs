//! Normalized demand shares and linear prediction of the next slot.
//!
//! Lag `m` of the forecast for slot `t + 1` is slot `t - m + 1`, so the
//! forecast always combines the `M` most recent slots.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Gram matrices whose eigenvalue spread exceeds this are treated as singular.
const CONDITION_LIMIT: f64 = 1e12;
const SIMPLEX_TOL: f64 = 1e-9;

/// Which index of `D_{f,i,b,t}` survives aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Share of file `f` as a primary request, summed over recommendations.
    #[default]
    Primary,
    /// Share of file `i` as a recommendation, summed over primary requests.
    Recommended,
}

/// Per-slot, per-BS demand shares over `F` files.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandHistory {
    num_files: usize,
    num_bs: usize,
    window: usize,
    /// Index `f + F * (b + N_BS * t)`.
    shares: Vec<f64>,
}

impl DemandHistory {
    /// Builds a history from `slots[t][b]` share vectors, checking that each
    /// is a probability vector.
    pub fn from_shares(slots: &[Vec<Vec<f64>>]) -> Result<Self> {
        let window = slots.len();
        let num_bs = slots.first().map_or(0, Vec::len);
        let num_files = slots.first().and_then(|s| s.first()).map_or(0, Vec::len);
        if window == 0 || num_bs == 0 || num_files == 0 {
            return Err(Error::InvalidConfig("history must have slots, base stations and files".into()));
        }
        let mut shares = Vec::with_capacity(window * num_bs * num_files);
        for slot in slots {
            if slot.len() != num_bs {
                return Err(Error::ShapeMismatch { expected: vec![num_bs], found: vec![slot.len()] });
            }
            for row in slot {
                if row.len() != num_files {
                    return Err(Error::ShapeMismatch { expected: vec![num_files], found: vec![row.len()] });
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(Error::InvalidConfig("share vectors must be nonnegative and sum to 1".into()));
                }
                shares.extend_from_slice(row);
            }
        }
        Ok(DemandHistory { num_files, num_bs, window, shares })
    }

    pub fn num_files(&self) -> usize {
        self.num_files
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Shares of base station `b` in slot `t`.
    pub fn slot(&self, b: usize, t: usize) -> &[f64] {
        let start = self.num_files * (b + self.num_bs * t);
        &self.shares[start..start + self.num_files]
    }
}

/// Clips negatives and turns an `F x F x N_BS x tau` demand tensor into
/// per-slot shares. Slots without demand get the uniform distribution.
pub fn normalize_demands(d: &DenseTensor, axis: Aggregation) -> Result<DemandHistory> {
    let dims = d.shape().dims();
    if dims.len() != 4 || dims[0] != dims[1] {
        return Err(Error::InvalidShape(format!("expected F x F x N_BS x tau, got {}", d.shape())));
    }
    let (f, num_bs, window) = (dims[0], dims[2], dims[3]);
    let vals = d.values();
    let mut shares = vec![0.0; f * num_bs * window];
    for t in 0..window {
        for b in 0..num_bs {
            let base = f * f * (b + num_bs * t);
            let out = &mut shares[f * (b + num_bs * t)..f * (b + num_bs * t + 1)];
            for i in 0..f {
                for p in 0..f {
                    let v = vals[base + p + f * i].max(0.0);
                    match axis {
                        Aggregation::Primary => out[p] += v,
                        Aggregation::Recommended => out[i] += v,
                    }
                }
            }
            let total: f64 = out.iter().sum();
            if total > 0.0 {
                out.iter_mut().for_each(|v| *v /= total);
            } else {
                out.fill(1.0 / f as f64);
            }
        }
    }
    Ok(DemandHistory { num_files: f, num_bs, window, shares })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum PredictorMode {
    #[default]
    LeastSquares,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorConfig {
    pub order: usize,
    pub mode: PredictorMode,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig { order: 6, mode: PredictorMode::LeastSquares }
    }
}

impl PredictorConfig {
    pub fn validate(&self, window: usize) -> Result<()> {
        if self.order == 0 || self.order >= window {
            return Err(Error::InvalidConfig(format!(
                "prediction order {} must be in 1..{window}",
                self.order
            )));
        }
        Ok(())
    }
}

/// Next-slot forecast for one base station.
#[derive(Debug, Clone, PartialEq)]
pub struct BsForecast {
    /// Predicted shares, on the simplex.
    pub shares: Vec<f64>,
    /// Lag coefficients `c_1..c_M`; they sum to one.
    pub coefficients: Vec<f64>,
    /// Least-squares residual over the history.
    pub residual: f64,
    /// Set when the least-squares system was singular and the mean was used.
    pub fallback: bool,
}

/// Forecast for all base stations.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub per_bs: Vec<BsForecast>,
}

impl Forecast {
    pub fn shares(&self, b: usize) -> &[f64] {
        &self.per_bs[b].shares
    }

    pub fn any_fallback(&self) -> bool {
        self.per_bs.iter().any(|f| f.fallback)
    }
}

/// Least-squares lag coefficients under `sum(c) = 1`, with the last
/// coefficient eliminated. `None` when the reduced normal equations are
/// numerically singular.
fn constrained_coefficients(h: &DemandHistory, b: usize, order: usize) -> Option<Vec<f64>> {
    if order == 1 {
        return Some(vec![1.0]);
    }
    let p = order - 1;
    let f = h.num_files;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut z = vec![0.0; p];
    for s in order..h.window {
        let base = h.slot(b, s - order);
        let target = h.slot(b, s);
        for fi in 0..f {
            for (m, zm) in z.iter_mut().enumerate() {
                *zm = h.slot(b, s - m - 1)[fi] - base[fi];
            }
            let y = target[fi] - base[fi];
            for i in 0..p {
                rhs[i] += z[i] * y;
                for j in 0..p {
                    gram[(i, j)] += z[i] * z[j];
                }
            }
        }
    }
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !(max > 0.0) || !(min > max / CONDITION_LIMIT) {
        return None;
    }
    let reduced = gram.cholesky()?.solve(&rhs);
    let mut c: Vec<f64> = reduced.iter().copied().collect();
    c.push(1.0 - c.iter().sum::<f64>());
    c.iter().all(|v| v.is_finite()).then_some(c)
}

fn residual(h: &DemandHistory, b: usize, c: &[f64]) -> f64 {
    let order = c.len();
    let mut sum = 0.0;
    for s in order..h.window {
        for fi in 0..h.num_files {
            let pred: f64 = c.iter().enumerate().map(|(m, cm)| cm * h.slot(b, s - m - 1)[fi]).sum();
            sum += (h.slot(b, s)[fi] - pred).powi(2);
        }
    }
    sum
}

/// Fits the lag coefficients of base station `b` and forecasts the slot
/// after the window.
pub fn fit_predict(h: &DemandHistory, cfg: &PredictorConfig, b: usize) -> Result<BsForecast> {
    cfg.validate(h.window)?;
    if b >= h.num_bs {
        return Err(Error::IndexOutOfRange { index: vec![b], shape: vec![h.num_bs] });
    }
    let mean = || vec![1.0 / cfg.order as f64; cfg.order];
    let (coefficients, fallback) = match cfg.mode {
        PredictorMode::Mean => (mean(), false),
        PredictorMode::LeastSquares => match constrained_coefficients(h, b, cfg.order) {
            Some(c) => (c, false),
            None => {
                log::warn!("singular least-squares system at bs {b}; using the mean predictor");
                (mean(), true)
            }
        },
    };
    let t = h.window - 1;
    let mut shares = vec![0.0; h.num_files];
    for (m, cm) in coefficients.iter().enumerate() {
        for (out, v) in shares.iter_mut().zip(h.slot(b, t - m)) {
            *out += cm * v;
        }
    }
    shares.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = shares.iter().sum();
    if total > 0.0 {
        shares.iter_mut().for_each(|v| *v /= total);
    } else {
        shares.fill(1.0 / h.num_files as f64);
    }
    let residual = residual(h, b, &coefficients);
    Ok(BsForecast { shares, coefficients, residual, fallback })
}

/// [`fit_predict`] for every base station.
pub fn predict_all(h: &DemandHistory, cfg: &PredictorConfig) -> Result<Forecast> {
    let per_bs = (0..h.num_bs).map(|b| fit_predict(h, cfg, b)).collect::<Result<_>>()?;
    Ok(Forecast { per_bs })
}

pub const FORECAST_HEADER: &str = "bs,file,predicted_share";

/// Writes `bs,file,predicted_share` rows with one-based indices.
pub fn write_forecast_csv<W: std::io::Write>(mut w: W, forecast: &Forecast) -> std::io::Result<()> {
    writeln!(w, "{FORECAST_HEADER}")?;
    for (b, f) in forecast.per_bs.iter().enumerate() {
        for (i, s) in f.shares.iter().enumerate() {
            writeln!(w, "{},{},{:.12}", b + 1, i + 1, s)?;
        }
    }
    Ok(())
}

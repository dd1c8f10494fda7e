use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use tcache::caching::{method_grid, run_methods, write_report_csv, write_summary_csv, Method, OnlineConfig};
use tcache::completion::FwConfig;
use tcache::ingest::{synth_demand_stream, IngestConfig, SlotData, StreamSpec};
use tcache::prediction::PredictorMode;

use super::ingest::{ingest, read_ratings};
use super::{PairingArg, PredictorArg, ToggleArg};
use crate::config::{out_dir, pick, SimulateSection};
use crate::manifest::ManifestBuilder;
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ratings file; a synthetic stream is used when absent.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// History window in slots [default: 10].
    #[arg(long)]
    pub tau: Option<usize>,
    /// Prediction order M [default: 6].
    #[arg(long)]
    pub order: Option<usize>,
    /// Cache capacity per base station [default: 32].
    #[arg(long)]
    pub cache: Option<usize>,
    /// Number of base stations [default: 3].
    #[arg(long)]
    pub bs: Option<usize>,
    /// Number of files [default: 128].
    #[arg(long)]
    pub files: Option<usize>,
    /// Completion rank budgets, comma separated [default: 8,16,24].
    #[arg(long, value_delimiter = ',')]
    pub rank: Option<Vec<usize>>,
    /// Run methods with completion, without, or both [default: both].
    #[arg(long, value_enum)]
    pub completion: Option<ToggleArg>,
    /// Predictor [default: both].
    #[arg(long, value_enum)]
    pub predictor: Option<PredictorArg>,
    /// Shift of the completion unfoldings [default: 2].
    #[arg(long)]
    pub shift: Option<usize>,
    /// Completion beta [default: 1e5].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Completion iteration cap [default: 1000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Length of the synthetic stream [default: 200].
    #[arg(long)]
    pub slots: Option<usize>,
    /// Fraction of synthetic entries hidden from observation [default: 0.95].
    #[arg(long)]
    pub mask: Option<f64>,
    /// Slot length in days for ratings input [default: 30].
    #[arg(long)]
    pub slot_days: Option<u32>,
    /// Pairing for ratings input [default: self].
    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,
    /// Session gap for co-session pairing [default: 6].
    #[arg(long)]
    pub gap_hours: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $TCACHE_OUT_DIR or ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SimulateArgs, file: SimulateSection) -> CliResult<()> {
    let seed = pick(args.seed, file.seed, 0);
    let files = pick(args.files, file.files, 128);
    let num_bs = pick(args.bs, file.bs, 3);
    let ranks = pick(args.rank, file.rank, vec![8, 16, 24]);
    let completion = pick(args.completion, file.completion, ToggleArg::Both);
    let predictor = pick(args.predictor, file.predictor, PredictorArg::Both);
    let cfg = OnlineConfig {
        window: pick(args.tau, file.tau, 10),
        order: pick(args.order, file.order, 6),
        capacity: pick(args.cache, file.cache, 32),
        solver: FwConfig {
            shift: pick(args.shift, file.shift, 2),
            beta: pick(args.beta, file.beta, 1e5),
            max_iter: pick(args.max_iter, file.max_iter, 1000),
            seed,
            ..FwConfig::default()
        },
        ..OnlineConfig::default()
    };
    if cfg.solver.shift == 0 || cfg.solver.shift >= 4 {
        return Err(CliError::Input(format!("--shift must be 1, 2 or 3, got {}", cfg.solver.shift)));
    }
    if completion != ToggleArg::Off && (ranks.is_empty() || ranks.contains(&0)) {
        return Err(CliError::Input("--rank needs positive values".into()));
    }

    let ratings = args.ratings.or(file.ratings);
    let (stream, source) = match &ratings {
        Some(path) => {
            let pairing = pick(args.pairing, file.pairing, PairingArg::SelfDiagonal);
            let gap_hours = pick(args.gap_hours, file.gap_hours, 6.0);
            let ingest_cfg = IngestConfig {
                top_f: files,
                num_bs,
                slot_days: pick(args.slot_days, file.slot_days, 30),
                pairing: pairing.resolve(gap_hours),
                seed,
                ..IngestConfig::default()
            };
            let demand = ingest(&read_ratings(path)?, &ingest_cfg)?;
            let stream: Vec<SlotData> = demand.slots.into_iter().map(SlotData::fully_observed).collect();
            (stream, json!({ "ratings": path, "pairing": pairing, "gap_hours": gap_hours, "slot_days": ingest_cfg.slot_days }))
        }
        None => {
            let spec = StreamSpec {
                files,
                num_bs,
                slots: pick(args.slots, file.slots, 200),
                mask_fraction: pick(args.mask, file.mask, 0.95),
                seed,
                ..StreamSpec::default()
            };
            let stream = synth_demand_stream(&spec)?;
            (stream, json!({ "synthetic": format!("{spec:?}") }))
        }
    };

    let mut methods: Vec<Method> = method_grid(&ranks)
        .into_iter()
        .filter(|m| match m {
            Method::Oracle => true,
            Method::Predicted { predictor: p, completion_rank } => {
                let p_ok = match predictor {
                    PredictorArg::Both => true,
                    PredictorArg::Lp => *p == PredictorMode::LeastSquares,
                    PredictorArg::Mean => *p == PredictorMode::Mean,
                };
                let c_ok = match completion {
                    ToggleArg::Both => true,
                    ToggleArg::On => completion_rank.is_some(),
                    ToggleArg::Off => completion_rank.is_none(),
                };
                p_ok && c_ok
            }
        })
        .collect();
    methods.dedup();

    let dir = out_dir(args.out, file.out);
    let echo = json!({
        "source": source,
        "files": files,
        "bs": num_bs,
        "tau": cfg.window,
        "order": cfg.order,
        "cache": cfg.capacity,
        "rank": ranks,
        "completion": completion,
        "predictor": predictor,
        "shift": cfg.solver.shift,
        "beta": cfg.solver.beta,
        "max_iter": cfg.solver.max_iter,
        "slots": stream.len(),
        "methods": methods.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "out": dir,
    });
    let mut manifest = ManifestBuilder::new(&dir, "simulate", seed, echo)?;
    let report = run_methods(&stream, &cfg, &methods)?;
    manifest.write_file("hit_rates.csv", |w| write_report_csv(w, &report))?;
    manifest.write_file("summary.csv", |w| write_summary_csv(w, &report, &ranks))?;
    let zero = report.zero_demand_count();
    if zero > 0 {
        manifest.note(format!("{zero} (slot, bs) pairs had no demand and are excluded from averages"));
    }
    let fallbacks = report.records.iter().filter(|r| r.predictor_fallback).count();
    if fallbacks > 0 {
        manifest.note(format!("{fallbacks} forecasts fell back to the mean predictor"));
    }
    for (m, avg) in report.averages() {
        match avg {
            Some(a) => println!("{m:<22} {a:.4}"),
            None => println!("{m:<22} n/a"),
        }
    }
    let path = manifest.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

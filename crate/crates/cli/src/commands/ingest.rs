use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::json;

use tcache::ingest::{build_demand_tensor, parse_ratings, DemandStream, IngestConfig, RatingsRecord};
use tcache::tensor::{write_coo, SparseTensor};

use super::{PairingArg, WeightingArg};
use crate::config::{out_dir, pick, IngestSection};
use crate::manifest::ManifestBuilder;
use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Ratings file: user_id,movie_id,rating,timestamp.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Number of most-rated movies kept [default: 128].
    #[arg(long)]
    pub top_f: Option<usize>,
    /// Number of base stations [default: 3].
    #[arg(long)]
    pub bs: Option<usize>,
    /// Slot length in days [default: 30].
    #[arg(long)]
    pub slot_days: Option<u32>,
    /// How the recommendation axis is filled [default: self].
    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,
    /// Session gap for co-session pairing [default: 6].
    #[arg(long)]
    pub gap_hours: Option<f64>,
    /// Count rating events or sum stars [default: count].
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $TCACHE_OUT_DIR or ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn read_ratings(path: &Path) -> CliResult<Vec<RatingsRecord>> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let records = parse_ratings(BufReader::new(file))?;
    if records.is_empty() {
        return Err(CliError::Input(format!("{}: no ratings records", path.display())));
    }
    Ok(records)
}

pub fn ingest(records: &[RatingsRecord], cfg: &IngestConfig) -> CliResult<DemandStream> {
    let stream = build_demand_tensor(records, cfg)?;
    log::info!(
        "{} ratings kept of {}, {} slots",
        stream.kept_ratings,
        records.len(),
        stream.slots.len()
    );
    Ok(stream)
}

pub fn run(args: IngestArgs, file: IngestSection) -> CliResult<()> {
    let ratings = args
        .ratings
        .or(file.ratings)
        .ok_or_else(|| CliError::Input("missing --ratings file".into()))?;
    let pairing = pick(args.pairing, file.pairing, PairingArg::SelfDiagonal);
    let gap_hours = pick(args.gap_hours, file.gap_hours, 6.0);
    let weighting = pick(args.weighting, file.weighting, WeightingArg::Count);
    let cfg = IngestConfig {
        top_f: pick(args.top_f, file.top_f, 128),
        num_bs: pick(args.bs, file.bs, 3),
        slot_days: pick(args.slot_days, file.slot_days, 30),
        pairing: pairing.resolve(gap_hours),
        weighting: weighting.into(),
        seed: pick(args.seed, file.seed, 0),
    };
    cfg.validate()?;
    let records = read_ratings(&ratings)?;
    let stream = ingest(&records, &cfg)?;
    let dir = out_dir(args.out, file.out);
    let echo = json!({
        "ratings": ratings,
        "top_f": cfg.top_f,
        "bs": cfg.num_bs,
        "slot_days": cfg.slot_days,
        "pairing": pairing,
        "gap_hours": gap_hours,
        "weighting": weighting,
        "records": records.len(),
        "kept_ratings": stream.kept_ratings,
        "slots": stream.slots.len(),
        "start_epoch_s": stream.start,
        "out": dir,
    });
    let mut manifest = ManifestBuilder::new(&dir, "ingest", cfg.seed, echo)?;
    for (t, slot) in stream.slots.iter().enumerate() {
        let sparse = SparseTensor::from_dense_nonzeros(slot);
        manifest.write_file(&format!("slot_{:04}.coo", t + 1), |w| write_coo(w, &sparse))?;
    }
    manifest.write_file("movies.csv", |w| {
        use std::io::Write;
        writeln!(w, "file,movie_id")?;
        stream.movie_ids.iter().enumerate().try_for_each(|(f, m)| writeln!(w, "{},{m}", f + 1))
    })?;
    let path = manifest.finish()?;
    println!(
        "{} slots of {}x{}x{} from {} ratings; wrote {}",
        stream.slots.len(),
        cfg.top_f,
        cfg.top_f,
        cfg.num_bs,
        stream.kept_ratings,
        path.display()
    );
    Ok(())
}

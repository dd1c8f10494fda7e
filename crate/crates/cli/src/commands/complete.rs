use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use tcache::completion::{compare_beta_runs, complete, write_trace_csv, FwConfig, FwState};
use tcache::tensor::read_coo_file;

use super::{ModeSelectArg, UpdateArg};
use crate::config::{out_dir, pick, CompleteSection};
use crate::manifest::ManifestBuilder;
use crate::{CliError, CliResult};

const BETA_TOL: f64 = 1e-8;

#[derive(Debug, Args)]
pub struct CompleteArgs {
    /// Observed tensor in COO format.
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Rank budgets, comma separated [default: 2N].
    #[arg(long, value_delimiter = ',')]
    pub rank: Option<Vec<usize>>,
    /// Scale of the nuclear-norm ball, comma separated [default: 1e5].
    #[arg(long, value_delimiter = ',')]
    pub beta: Option<Vec<f64>>,
    /// Number of modes grouped into rows [default: 1].
    #[arg(long)]
    pub shift: Option<usize>,
    /// Mode selection rule [default: sigma].
    #[arg(long, value_enum)]
    pub mode_select: Option<ModeSelectArg>,
    /// Update rule [default: multi].
    #[arg(long, value_enum)]
    pub update: Option<UpdateArg>,
    /// Iteration cap [default: 1000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: $TCACHE_OUT_DIR or ./out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn beta_label(beta: f64) -> String {
    format!("{beta:e}").replace('+', "")
}

pub fn run(args: CompleteArgs, file: CompleteSection) -> CliResult<()> {
    let input = args
        .input
        .or(file.input)
        .ok_or_else(|| CliError::Input("missing --input tensor file".into()))?;
    let observed = read_coo_file(&input)?;
    let order = observed.shape().order();
    let ranks = pick(args.rank, file.rank, vec![2 * order]);
    let betas = pick(args.beta, file.beta, vec![1e5]);
    if ranks.is_empty() || betas.is_empty() {
        return Err(CliError::Input("--rank and --beta need at least one value".into()));
    }
    let mode_select = pick(args.mode_select, file.mode_select, ModeSelectArg::Sigma);
    let update = pick(args.update, file.update, UpdateArg::Multi);
    let base = FwConfig {
        shift: pick(args.shift, file.shift, 1),
        max_iter: pick(args.max_iter, file.max_iter, 1000),
        seed: pick(args.seed, file.seed, 0),
        mode_selection: mode_select.into(),
        update_rule: update.into(),
        ..FwConfig::default()
    };
    let dir = out_dir(args.out, file.out);
    let echo = json!({
        "input": input,
        "shape": observed.shape().to_string(),
        "observed": observed.nnz(),
        "rank": ranks,
        "beta": betas,
        "shift": base.shift,
        "mode_select": mode_select,
        "update": update,
        "max_iter": base.max_iter,
        "out": dir,
    });
    let mut manifest = ManifestBuilder::new(&dir, "complete", base.seed, echo)?;
    let mut summary = Vec::new();
    for &rank in &ranks {
        let mut runs: Vec<FwState> = Vec::new();
        for &beta in &betas {
            let cfg = FwConfig { rank_budget: rank, beta, ..base.clone() };
            let state = complete(&observed, &cfg)?;
            let name = format!("trace_r{rank}_beta{}.csv", beta_label(beta));
            manifest.write_file(&name, |w| write_trace_csv(w, &state.trace))?;
            let last = state.trace.last().expect("trace has an initial row");
            println!(
                "R={rank} beta={beta:e}: {} iterations, RSE {:.3e}, {:.3}s, stop {:?}",
                last.iter, last.rse, last.elapsed_s, state.stop
            );
            summary.push(format!(
                "{rank},{},{},{},{:?},{:.6}",
                beta,
                last.iter,
                last.rse,
                state.stop.expect("finished run"),
                last.elapsed_s
            ));
            runs.push(state);
        }
        if runs.len() > 1 {
            let report = compare_beta_runs(&betas, &runs)?;
            let verdict = if report.holds(BETA_TOL) { "holds" } else { "VIOLATED" };
            let line = format!(
                "R={rank}: beta invariance {verdict} (iterate dev {:.2e}, beta*gamma dev {:.2e})",
                report.max_iterate_deviation, report.max_beta_gamma_deviation
            );
            println!("{line}");
            manifest.note(line);
        }
    }
    manifest.write_file("summary.csv", |w| {
        use std::io::Write;
        writeln!(w, "rank,beta,iterations,final_rse,stop,elapsed_s")?;
        summary.iter().try_for_each(|l| writeln!(w, "{l}"))
    })?;
    let path = manifest.finish()?;
    println!("wrote {}", path.display());
    Ok(())
}

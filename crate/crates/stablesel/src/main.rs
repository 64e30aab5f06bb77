use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stablesel::config::RunConfig;
use stablesel::core::baselines::Method;
use stablesel::core::diffusion::{train_prior, NoiseSchedule, PriorConfig, BETA_END, BETA_START};
use stablesel::core::icp::invariance_scores;
use stablesel::core::pool::build_pool;
use stablesel::core::rng;
use stablesel::core::selection::uncertainty_stats;
use stablesel::harness::{self, seed_dir};
use stablesel::{csvio, Error, Result};

#[derive(Parser)]
#[command(name = "stablesel", version, about = "Stable feature selection with a diffusion prior over masks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file (`[section]` / `key = value`); defaults are used if absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `[run] output`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic shift dataset and its ground truth.
    Synth(Common),
    /// Build environments and write their split summary.
    Envs(Common),
    /// Score invariance and write the candidate mask pool.
    Pool(Common),
    /// Train the diffusion prior on the pool.
    TrainPrior(Common),
    /// Run the full selection pipeline.
    Select(Common),
    /// Run one baseline selector.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        method: String,
    },
    /// Compare the method, its ablations and all baselines.
    Compare(Common),
    /// Summarize the uncertainty of a finished run directory.
    Report {
        #[command(flatten)]
        common: Common,
        /// Run directory containing `inclusion.csv`.
        #[arg(long)]
        run: PathBuf,
    },
    /// Time each pipeline stage.
    Time(Common),
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &c.out {
        cfg.output = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn snapshot(dir: &Path, cfg: &RunConfig) -> Result<()> {
    csvio::write_text(&dir.join("config.snapshot"), &cfg.snapshot())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => {
            let cfg = resolve(&c)?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let (d, truth) = harness::load_data(&cfg, seed)?;
                snapshot(&dir, &cfg)?;
                csvio::write_dataset(&dir.join("data.csv"), &d)?;
                csvio::write_env_summary(&dir.join("envs.csv"), &d)?;
                if let Some(t) = truth {
                    csvio::write_indices(&dir.join("causal.csv"), &t.causal)?;
                    csvio::write_indices(&dir.join("spurious.csv"), &t.spurious)?;
                }
                println!("{}: {} rows, {} features, {} environments", dir.display(), d.n_rows(), d.n_features(), d.n_envs());
            }
        }
        Command::Envs(c) => {
            let cfg = resolve(&c)?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let (d, _) = harness::load_data(&cfg, seed)?;
                d.validate()?;
                snapshot(&dir, &cfg)?;
                csvio::write_dataset(&dir.join("data.csv"), &d)?;
                csvio::write_env_summary(&dir.join("envs.csv"), &d)?;
                for (e, s) in d.splits().iter().enumerate() {
                    println!("env {e} ({}): train {} val {} test {}", d.env_labels[e], s.train.len(), s.val.len(), s.test.len());
                }
            }
        }
        Command::Pool(c) => {
            let cfg = resolve(&c)?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let prep = harness::prepare(&cfg, seed)?;
                let pc = &cfg.pipeline;
                let scores = invariance_scores(&prep.data)?;
                let bias = pc.use_icp.then_some(scores.scores.as_slice());
                let pool = build_pool(&prep.data, pc.pool_size, pc.sigma_mask, bias, pc.gamma, rng::derive_seed(seed, 1))?;
                snapshot(&dir, &cfg)?;
                csvio::write_scores(&dir.join("invariance.csv"), &scores.scores)?;
                csvio::write_pool(&dir.join("pool.csv"), &pool)?;
                println!("{}: {} masks", dir.display(), pool.len());
            }
        }
        Command::TrainPrior(c) => {
            let cfg = resolve(&c)?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let prep = harness::prepare(&cfg, seed)?;
                let pc = &cfg.pipeline;
                let scores = invariance_scores(&prep.data)?;
                let bias = pc.use_icp.then_some(scores.scores.as_slice());
                let pool = build_pool(&prep.data, pc.pool_size, pc.sigma_mask, bias, pc.gamma, rng::derive_seed(seed, 1))?;
                let schedule = NoiseSchedule::linear(pc.diffusion_steps, BETA_START, BETA_END)?;
                let prior = PriorConfig { seed: rng::derive_seed(seed, 2), ..pc.prior.clone() };
                let (net, curve) = train_prior(&pool, schedule, &prior)?;
                snapshot(&dir, &cfg)?;
                csvio::write_pool(&dir.join("pool.csv"), &pool)?;
                let path = dir.join("prior.bin");
                std::fs::write(&path, net.to_bytes()).map_err(|source| Error::Io { path, source })?;
                let mut loss = String::from("epoch,loss\n");
                for (i, l) in curve.iter().enumerate() {
                    loss += &format!("{},{l}\n", i + 1);
                }
                csvio::write_text(&dir.join("prior_loss.csv"), &loss)?;
                println!("{}: loss {:.4} -> {:.4}", dir.display(), curve[0], curve[curve.len() - 1]);
            }
        }
        Command::Select(c) => {
            let cfg = resolve(&c)?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let prep = harness::prepare(&cfg, seed)?;
                let run = harness::run_stablesel(&prep.data, &cfg.pipeline, seed)?;
                let report = harness::selection_report(&prep, run, seed)?;
                harness::write_compare_dir(&dir, &report, &prep, &cfg)?;
                let names: Vec<&str> = report.rows[0].subset.iter().map(|&j| prep.data.feature_names[j].as_str()).collect();
                println!("{}: selected {}", dir.display(), names.join(" "));
            }
        }
        Command::Baseline { common, method } => {
            let cfg = resolve(&common)?;
            let m = Method::parse(&method).ok_or_else(|| Error::Config(format!("unknown method `{method}`")))?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let prep = harness::prepare(&cfg, seed)?;
                let r = harness::run_baseline(&prep.data, &cfg, m, seed)?;
                snapshot(&dir, &cfg)?;
                csvio::write_baseline(&dir.join(format!("baseline_{}.csv", m.as_str())), &r)?;
                println!("{}: {} selected {:?}", dir.display(), m.as_str(), r.subset);
            }
        }
        Command::Compare(c) => {
            let cfg = resolve(&c)?;
            let mut reports = Vec::new();
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let prep = harness::prepare(&cfg, seed)?;
                let report = harness::compare_methods(&prep, &cfg, seed)?;
                harness::write_compare_dir(&dir, &report, &prep, &cfg)?;
                println!("seed {seed}");
                for row in &report.rows {
                    println!("  {:<24} {} {:.4} ± {:.4}  {:?}", row.method, report.metric, row.eval.mean, row.eval.std, row.subset);
                }
                reports.push(report);
            }
            snapshot(&cfg.output, &cfg)?;
            csvio::write_text(&cfg.output.join("overlap.csv"), &harness::overlap_csv(&reports)?)?;
        }
        Command::Report { run, .. } => {
            let pi = csvio::read_inclusion(&run.join("inclusion.csv"))?;
            let stats = uncertainty_stats(&pi)?;
            let text = harness::uncertainty_text(&stats);
            csvio::write_text(&run.join("uncertainty.txt"), &text)?;
            print!("{text}");
        }
        Command::Time(c) => {
            let cfg = resolve(&c)?;
            for &seed in &cfg.seeds {
                let dir = seed_dir(&cfg, seed);
                let prep = harness::prepare(&cfg, seed)?;
                let times = harness::timing_report(&prep.data, &cfg.pipeline, seed)?;
                snapshot(&dir, &cfg)?;
                csvio::write_text(&dir.join("timing.csv"), &harness::timing_csv(&times, &[]))?;
                for (stage, t) in &times.0 {
                    println!("{:<12} {t:.3}s", stage.as_str());
                }
                println!("{:<12} {:.3}s", "total", times.total());
            }
        }
    }
    Ok(())
}

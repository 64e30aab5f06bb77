//! Orchestration: data preparation, timed selection runs, method
//! comparison and the files of a run directory.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use stablesel_core::baselines::{grad_stab, run_data_baseline, Method};
use stablesel_core::data::{self, make_environments, ScalingParams};
use stablesel_core::eval::{evaluate_subset, overlap_across_seeds, SubsetEvaluation};
use stablesel_core::pipeline::StageObserver;
use stablesel_core::predictors::PredictorConfig;
use stablesel_core::selection::{uncertainty_stats, UncertaintyStats};
use stablesel_core::synth::{synth_shift, SynthSpec, SynthTruth};
use stablesel_core::{rng, run_pipeline, EnvDataset, PipelineConfig, PipelineOutput, Stage, StabilityObjective};

use crate::config::{RunConfig, Source};
use crate::csvio;
use crate::error::Result;

/// Label of the full method in reports.
pub const METHOD_LABEL: &str = "stablesel";

/// A standardized dataset ready for selection.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: EnvDataset,
    pub truth: Option<SynthTruth>,
    pub scaling: ScalingParams,
}

/// The raw (unstandardized) dataset described by the config.
pub fn load_data(cfg: &RunConfig, seed: u64) -> Result<(EnvDataset, Option<SynthTruth>)> {
    let dc = &cfg.data;
    let (mut d, truth) = match dc.source {
        Source::Synth => {
            let spec = SynthSpec {
                seed: dc.seed.unwrap_or(seed),
                task: dc.task,
                ..dc.synth.clone()
            };
            let (d, t) = synth_shift(&spec)?;
            (d, Some(t))
        }
        Source::Csv => {
            let d = csvio::load_csv(&dc.path, &dc.target, dc.env_column.as_deref(), dc.task)?;
            (d, None)
        }
    };
    if let Some(strategy) = dc.strategy() {
        d = make_environments(&d, &strategy)?;
    }
    if d.split_seed() != dc.split_seed {
        d = d.resplit(dc.split_seed);
    }
    Ok((d, truth))
}

pub fn prepare(cfg: &RunConfig, seed: u64) -> Result<Prepared> {
    let (raw, truth) = load_data(cfg, seed)?;
    raw.validate()?;
    let (data, scaling) = data::standardize(&raw);
    Ok(Prepared {
        data,
        truth,
        scaling,
    })
}

/// Wall-clock seconds per pipeline stage, in pipeline order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimes(pub Vec<(Stage, f64)>);

impl StageTimes {
    pub fn total(&self) -> f64 {
        self.0.iter().map(|s| s.1).sum()
    }

    pub fn get(&self, stage: Stage) -> Option<f64> {
        self.0.iter().find(|s| s.0 == stage).map(|s| s.1)
    }
}

#[derive(Default)]
struct Timer {
    started: Option<Instant>,
    times: StageTimes,
}

impl StageObserver for Timer {
    fn begin(&mut self, _: Stage) {
        self.started = Some(Instant::now());
    }

    fn end(&mut self, stage: Stage) {
        let t = self.started.take().map_or(0.0, |s| s.elapsed().as_secs_f64());
        self.times.0.push((stage, t));
    }
}

#[derive(Debug, Clone)]
pub struct SelectionRun {
    pub output: PipelineOutput,
    pub times: StageTimes,
}

/// Runs the full pipeline; `seed` replaces the config's seed.
pub fn run_stablesel(d: &EnvDataset, pc: &PipelineConfig, seed: u64) -> Result<SelectionRun> {
    let cfg = PipelineConfig {
        seed,
        ..pc.clone()
    };
    let mut timer = Timer::default();
    let output = run_pipeline(d, &cfg, &mut timer)?;
    Ok(SelectionRun {
        output,
        times: timer.times,
    })
}

/// Stage wall times of one pipeline run.
pub fn timing_report(d: &EnvDataset, pc: &PipelineConfig, seed: u64) -> Result<StageTimes> {
    Ok(run_stablesel(d, pc, seed)?.times)
}

/// The energy a pipeline with this seed samples from; `grad_stab` descends
/// on the same one.
pub fn pipeline_objective<'a>(
    d: &'a EnvDataset,
    pc: &PipelineConfig,
    seed: u64,
) -> Result<StabilityObjective<'a>> {
    let cfg = PredictorConfig {
        seed: rng::derive_seed(seed, 3),
        ..pc.predictor.clone()
    };
    Ok(StabilityObjective::fit(d, &cfg, pc.lambda_var)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub subset: Vec<usize>,
    pub eval: SubsetEvaluation,
    pub n_causal: Option<usize>,
    pub n_spurious: Option<usize>,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub seed: u64,
    pub metric: &'static str,
    pub rows: Vec<MethodRow>,
    pub uncertainty: UncertaintyStats,
    pub selection: SelectionRun,
}

impl EvalReport {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

fn metric_name(d: &EnvDataset) -> &'static str {
    match d.task() {
        stablesel_core::Task::Classification => "f1_macro",
        stablesel_core::Task::Regression => "mse",
    }
}

/// Runs the method, its ablations and every configured baseline on the same
/// standardized data, splits and budget, and scores each subset on the
/// evaluation environments.
pub fn compare_methods(prep: &Prepared, cfg: &RunConfig, seed: u64) -> Result<EvalReport> {
    let d = &prep.data;
    let pc = &cfg.pipeline;
    let k = pc.k;
    let mut rows = Vec::new();
    let mut push = |method: String, subset: Vec<usize>, wall_time: f64| -> Result<()> {
        let eval = evaluate_subset(d, &subset)?;
        rows.push(MethodRow {
            n_causal: prep.truth.as_ref().map(|t| t.count_causal(&subset)),
            n_spurious: prep.truth.as_ref().map(|t| t.count_spurious(&subset)),
            method,
            subset,
            eval,
            wall_time,
        });
        Ok(())
    };

    let clock = Instant::now();
    let selection = run_stablesel(d, pc, seed)?;
    push(
        METHOD_LABEL.into(),
        selection.output.summary.final_subset.clone(),
        clock.elapsed().as_secs_f64(),
    )?;

    let objective = pipeline_objective(d, pc, seed)?;
    if cfg.ablations {
        for (label, cfg) in [
            ("no_prior", PipelineConfig { use_prior: false, ..pc.clone() }),
            ("no_icp", PipelineConfig { use_icp: false, ..pc.clone() }),
        ] {
            let clock = Instant::now();
            let run = run_stablesel(d, &cfg, seed)?;
            push(
                format!("{METHOD_LABEL}_{label}"),
                run.output.summary.final_subset,
                clock.elapsed().as_secs_f64(),
            )?;
        }
        // Without sampling the method reduces to descending the energy.
        let clock = Instant::now();
        let (r, _) = grad_stab(&objective, k, &cfg.grad_stab)?;
        push(
            format!("{METHOD_LABEL}_no_sampling"),
            r.subset,
            clock.elapsed().as_secs_f64(),
        )?;
    }

    for &m in &cfg.methods {
        let clock = Instant::now();
        let subset = match run_data_baseline(d, m, k, seed) {
            Some(r) => r?.subset,
            None => grad_stab(&objective, k, &cfg.grad_stab)?.0.subset,
        };
        push(m.as_str().into(), subset, clock.elapsed().as_secs_f64())?;
    }

    let uncertainty = uncertainty_stats(&selection.output.summary.pi)?;
    Ok(EvalReport {
        seed,
        metric: metric_name(d),
        rows,
        uncertainty,
        selection,
    })
}

/// Report holding only the method's own row, for `select`.
pub fn selection_report(prep: &Prepared, selection: SelectionRun, seed: u64) -> Result<EvalReport> {
    let subset = selection.output.summary.final_subset.clone();
    let truth = prep.truth.as_ref();
    let row = MethodRow {
        method: METHOD_LABEL.into(),
        eval: evaluate_subset(&prep.data, &subset)?,
        n_causal: truth.map(|t| t.count_causal(&subset)),
        n_spurious: truth.map(|t| t.count_spurious(&subset)),
        subset,
        wall_time: selection.times.total(),
    };
    Ok(EvalReport {
        seed,
        metric: metric_name(&prep.data),
        rows: vec![row],
        uncertainty: uncertainty_stats(&selection.output.summary.pi)?,
        selection,
    })
}

/// Runs a single baseline (including `grad_stab`).
pub fn run_baseline(
    d: &EnvDataset,
    cfg: &RunConfig,
    method: Method,
    seed: u64,
) -> Result<stablesel_core::baselines::BaselineResult> {
    let clock = Instant::now();
    let mut r = match run_data_baseline(d, method, cfg.pipeline.k, seed) {
        Some(r) => r?,
        None => {
            let obj = pipeline_objective(d, &cfg.pipeline, seed)?;
            grad_stab(&obj, cfg.pipeline.k, &cfg.grad_stab)?.0
        }
    };
    r.wall_time = clock.elapsed().as_secs_f64();
    Ok(r)
}

fn join(idx: &[usize]) -> String {
    idx.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// One row per method. Wall times are kept out so that identical runs give
/// identical bytes; they go to `timing.csv`.
pub fn report_csv(r: &EvalReport) -> String {
    let mut out = String::from("method,subset,metric,mean,std,n_causal,n_spurious\n");
    for row in &r.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.method,
            join(&row.subset),
            r.metric,
            row.eval.mean,
            row.eval.std,
            opt(row.n_causal),
            opt(row.n_spurious)
        );
    }
    out
}

/// Long format `method,env,label,metric,value`; doubles as the
/// metric-by-environment plot table.
pub fn per_env_csv(r: &EvalReport, d: &EnvDataset) -> String {
    let mut out = String::from("method,env,label,metric,value\n");
    for row in &r.rows {
        for &(e, v) in &row.eval.per_env {
            let _ = writeln!(out, "{},{e},{},{},{v}", row.method, d.env_labels[e], r.metric);
        }
    }
    out
}

/// Bars for the full method and its ablations.
pub fn ablation_csv(r: &EvalReport) -> String {
    let mut out = String::from("variant,metric,mean,std\n");
    for row in r.rows.iter().filter(|row| row.method.starts_with(METHOD_LABEL)) {
        let variant = row
            .method
            .strip_prefix(METHOD_LABEL)
            .and_then(|v| v.strip_prefix('_'))
            .unwrap_or("full");
        let _ = writeln!(out, "{variant},{},{},{}", r.metric, row.eval.mean, row.eval.std);
    }
    out
}

pub fn timing_csv(times: &StageTimes, rows: &[MethodRow]) -> String {
    let mut out = String::from("kind,name,seconds\n");
    for &(stage, t) in &times.0 {
        let _ = writeln!(out, "stage,{},{t}", stage.as_str());
    }
    let _ = writeln!(out, "stage,total,{}", times.total());
    for row in rows {
        let _ = writeln!(out, "method,{},{}", row.method, row.wall_time);
    }
    out
}

/// Key-value summary of the inclusion-frequency uncertainty.
pub fn uncertainty_text(s: &UncertaintyStats) -> String {
    format!(
        "mean_uncertainty = {}\nmedian_uncertainty = {}\nsd_uncertainty = {}\nmin_uncertainty = {}\nmax_uncertainty = {}\nq1_share = {}\nq2_share = {}\nq3_share = {}\nmean_confidence = {}\n",
        s.mean, s.median, s.sd, s.min, s.max, s.q1_share, s.q2_share, s.q3_share, s.mean_confidence
    )
}

/// Artifacts of one pipeline run.
pub fn write_selection_artifacts(
    dir: &Path,
    run: &SelectionRun,
    d: &EnvDataset,
    cfg: &RunConfig,
) -> Result<()> {
    let summary = &run.output.summary;
    csvio::write_text(&dir.join("config.snapshot"), &cfg.snapshot())?;
    csvio::write_selection(&dir.join("selection.csv"), summary, &d.feature_names)?;
    csvio::write_inclusion(&dir.join("inclusion.csv"), summary, &d.feature_names)?;
    csvio::write_text(&dir.join("uncertainty.txt"), &uncertainty_text(&summary.stats()))?;
    if cfg.trace {
        csvio::write_trace(&dir.join("trace.csv"), &run.output.chains)?;
    }
    Ok(())
}

/// Everything `compare` writes for one seed.
pub fn write_compare_dir(dir: &Path, r: &EvalReport, prep: &Prepared, cfg: &RunConfig) -> Result<()> {
    write_selection_artifacts(dir, &r.selection, &prep.data, cfg)?;
    csvio::write_text(&dir.join("report.csv"), &report_csv(r))?;
    csvio::write_text(&dir.join("per_env.csv"), &per_env_csv(r, &prep.data))?;
    csvio::write_text(&dir.join("plot_ablation.csv"), &ablation_csv(r))?;
    csvio::write_text(&dir.join("timing.csv"), &timing_csv(&r.selection.times, &r.rows))?;
    Ok(())
}

/// Mean pairwise Jaccard overlap of each method's subsets across seeds.
pub fn overlap_csv(reports: &[EvalReport]) -> Result<String> {
    let mut out = String::from("method,overlap\n");
    if reports.len() < 2 {
        return Ok(out);
    }
    for row in &reports[0].rows {
        let subsets: Vec<Vec<usize>> = reports
            .iter()
            .filter_map(|r| r.row(&row.method).map(|x| x.subset.clone()))
            .collect();
        let _ = writeln!(out, "{},{}", row.method, overlap_across_seeds(&subsets)?);
    }
    Ok(out)
}

/// Direct subdirectory for one seed's artifacts.
pub fn seed_dir(cfg: &RunConfig, seed: u64) -> std::path::PathBuf {
    cfg.output.join(format!("seed_{seed}"))
}

use proptest::prelude::*;

use stablesel_core::diffusion::PriorConfig;
use stablesel_core::pipeline::StageObserver;
use stablesel_core::predictors::PredictorConfig;
use stablesel_core::sampler::SamplerConfig;
use stablesel_core::synth::{synth_shift, SynthSpec};
use stablesel_core::{data, run_pipeline, EnvDataset, Error, PipelineConfig, Stage};

fn small_data(seed: u64) -> EnvDataset {
    let spec = SynthSpec {
        p: 8,
        k_causal: 2,
        k_spurious: 2,
        n_per_env: 60,
        seed,
        ..SynthSpec::default()
    };
    data::standardize(&synth_shift(&spec).unwrap().0).0
}

fn tiny(seed: u64, steps: usize, chains: usize) -> PipelineConfig {
    PipelineConfig {
        k: 3,
        pool_size: 40,
        prior: PriorConfig {
            hidden: 16,
            epochs: 3,
            ..PriorConfig::default()
        },
        predictor: PredictorConfig {
            hidden: 16,
            epochs: 5,
            ..PredictorConfig::default()
        },
        sampler: SamplerConfig {
            steps,
            chains,
            ..SamplerConfig::default()
        },
        seed,
        ..PipelineConfig::default()
    }
}

#[derive(Default)]
struct Log(Vec<(bool, Stage)>);

impl StageObserver for Log {
    fn begin(&mut self, s: Stage) {
        self.0.push((true, s));
    }
    fn end(&mut self, s: Stage) {
        self.0.push((false, s));
    }
}

#[test]
fn single_chain_single_step_smoke() {
    let d = small_data(1);
    let mut log = Log::default();
    let out = run_pipeline(&d, &tiny(1, 1, 1), &mut log).unwrap();
    assert_eq!(out.chains.len(), 1);
    assert_eq!(out.chains[0].energies.len(), 1);
    assert_eq!(out.summary.final_subset.len(), 3);
    assert!(out.summary.check_invariants().is_ok());
    let expect: Vec<(bool, Stage)> = Stage::ALL
        .iter()
        .flat_map(|&s| [(true, s), (false, s)])
        .collect();
    assert_eq!(log.0, expect);
}

#[test]
fn identical_config_gives_identical_output() {
    let d = small_data(2);
    let cfg = tiny(7, 10, 3);
    let a = run_pipeline(&d, &cfg, &mut ()).unwrap();
    let b = run_pipeline(&d, &cfg, &mut ()).unwrap();
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.chains, b.chains);
    assert_eq!(a.prior.unwrap().to_bytes(), b.prior.unwrap().to_bytes());
}

#[test]
fn ablations_skip_their_stages() {
    let d = small_data(3);
    let cfg = PipelineConfig {
        use_prior: false,
        use_icp: false,
        ..tiny(3, 5, 2)
    };
    let out = run_pipeline(&d, &cfg, &mut ()).unwrap();
    assert!(out.pool.is_none() && out.prior.is_none() && out.invariance.is_none());
    assert!(out.prior_loss.is_empty());
    assert_eq!(out.summary.final_subset.len(), 3);
}

#[test]
fn budget_errors_are_reported() {
    let d = small_data(4);
    let cfg = PipelineConfig {
        k: 9,
        ..tiny(4, 1, 1)
    };
    let err = run_pipeline(&d, &cfg, &mut ()).unwrap_err();
    assert_eq!(err.error, Error::BudgetError { k: 9, p: 8 });
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn summary_invariants_hold_after_every_run(seed in 0u64..1000, k in 1usize..=8) {
        let d = small_data(seed);
        let cfg = PipelineConfig { k, ..tiny(seed, 4, 3) };
        let out = run_pipeline(&d, &cfg, &mut ()).unwrap();
        prop_assert!(out.summary.check_invariants().is_ok());
        prop_assert!(out.chains.iter().all(|c| c.final_mask.iter().all(|v| (0.0..=1.0).contains(v))));
    }
}

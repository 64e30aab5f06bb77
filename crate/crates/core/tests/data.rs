use proptest::prelude::*;

use stablesel_core::synth::{synth_shift, SynthSpec};
use stablesel_core::{data, rng, EnvDataset, Matrix, Split, Task};

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn column(d: &EnvDataset, j: usize, rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| d.features().get(i, j)).collect()
}

fn targets(d: &EnvDataset, rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| d.target()[i]).collect()
}

#[test]
fn non_causal_features_are_uncorrelated_without_spurious() {
    let spec = SynthSpec {
        k_spurious: 0,
        ..SynthSpec::default()
    };
    let (d, truth) = synth_shift(&spec).unwrap();
    let all: Vec<usize> = (0..d.n_rows()).collect();
    let y = targets(&d, &all);
    for j in (0..d.n_features()).filter(|j| !truth.causal.contains(j)) {
        let r = pearson(&column(&d, j, &all), &y);
        assert!(r.abs() < 0.15, "feature {j}: r = {r}");
    }
}

#[test]
fn flip_reverses_spurious_correlation_sign() {
    for seed in 0..5 {
        let spec = SynthSpec {
            n_envs: 2,
            seed,
            ..SynthSpec::default()
        };
        let (d, truth) = synth_shift(&spec).unwrap();
        let rows = |e: usize| -> Vec<usize> { (0..d.n_rows()).filter(|&i| d.env_ids()[i] == e).collect() };
        let (r0, r1) = (rows(0), rows(1));
        for &j in &truth.spurious {
            let c0 = pearson(&column(&d, j, &r0), &targets(&d, &r0));
            let c1 = pearson(&column(&d, j, &r1), &targets(&d, &r1));
            assert!(c0.signum() == -c1.signum(), "feature {j}: {c0} vs {c1}");
        }
    }
}

#[test]
fn synth_is_deterministic() {
    let spec = SynthSpec {
        seed: 42,
        held_out_envs: 1,
        task: Task::Classification,
        ..SynthSpec::default()
    };
    let (a, ta) = synth_shift(&spec).unwrap();
    let (b, tb) = synth_shift(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta, tb);
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.features()), bits(b.features()));
}

#[test]
fn explicit_splits_are_validated() {
    let x = Matrix::from_vec(6, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let d = EnvDataset::new(x, vec![0.0; 6], vec![0, 0, 0, 1, 1, 1], Task::Regression).unwrap();
    let good = vec![
        data::EnvSplits { train: vec![0], val: vec![1], test: vec![2] },
        data::EnvSplits { train: vec![3], val: vec![4], test: vec![5] },
    ];
    assert!(d.clone().with_splits(good).is_ok());
    let foreign = vec![
        data::EnvSplits { train: vec![0], val: vec![1], test: vec![3] },
        data::EnvSplits { train: vec![2], val: vec![4], test: vec![5] },
    ];
    assert!(d.with_splits(foreign).is_err());
}

fn arb_dataset() -> impl Strategy<Value = EnvDataset> {
    (2usize..5, 6usize..40, 1usize..5, any::<u64>()).prop_map(|(e, n, p, seed)| {
        let mut r = rng::seeded(seed);
        let rows = e * n;
        let mut x = Matrix::zeros(rows, p);
        for i in 0..rows {
            for j in 0..p {
                // The last column is constant whenever p > 2.
                let v = if j == p - 1 && p > 2 { 3.0 } else { 10.0 * rng::normal(&mut r) + j as f64 };
                x.set(i, j, v);
            }
        }
        let y = rng::normals(&mut r, rows);
        let env = (0..rows).map(|i| i % e).collect();
        EnvDataset::new(x, y, env, Task::Regression).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardized_training_columns(d in arb_dataset()) {
        let (s, _) = data::standardize(&d);
        let rows = s.pooled(Split::Train);
        let n = rows.len() as f64;
        for j in 0..s.n_features() {
            let c = column(&s, j, &rows);
            let m = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
            prop_assert!(m.abs() < 1e-9);
            if sd > 1e-12 {
                prop_assert!((sd - 1.0).abs() < 1e-9, "sd {}", sd);
            }
        }
    }

    #[test]
    fn splits_partition_each_environment(d in arb_dataset()) {
        for e in 0..d.n_envs() {
            let n_e = d.env_ids().iter().filter(|&&v| v == e).count();
            let s = &d.splits()[e];
            prop_assert_eq!(s.train.len() + s.val.len() + s.test.len(), n_e);
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), n_e);
            prop_assert!(all.iter().all(|&i| d.env_ids()[i] == e));
        }
        prop_assert!(d.validate().is_ok());
    }
}

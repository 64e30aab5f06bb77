//! CSV ingestion and the flat-file formats of every artifact.
//!
//! Conventions: UTF-8, comma separated, a header row, `.` as decimal point.

use std::collections::BTreeSet;
use std::fs;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use stablesel_core::pool::{MaskPool, Provenance};
use stablesel_core::sampler::ChainTrace;
use stablesel_core::{EnvDataset, Matrix, PosteriorSummary, Task};

use crate::error::{Error, Result};

/// Reads a dataset. Every column other than `target` and `env_column` is a
/// numeric feature. Environment labels are mapped to ids in lexicographic
/// order; without an environment column all rows land in environment 0.
pub fn load_csv(path: &Path, target: &str, env_column: Option<&str>, task: Task) -> Result<EnvDataset> {
    let file = File::open(path).map_err(Error::io(path))?;
    read_dataset(file, target, env_column, task)
}

pub fn read_dataset(
    input: impl Read,
    target: &str,
    env_column: Option<&str>,
    task: Task,
) -> Result<EnvDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::NamedColumnAbsent(name.to_owned()))
    };
    let t_col = find(target)?;
    let e_col = env_column.map(find).transpose()?;
    let f_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != t_col && Some(c) != e_col)
        .collect();

    let number = |row: usize, col: usize, cell: &str| {
        cell.parse::<f64>().map_err(|_| Error::ParseFailure {
            row,
            column: header[col].clone(),
            value: cell.to_owned(),
        })
    };
    let mut values = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        for &c in &f_cols {
            values.push(number(row, c, &rec[c])?);
        }
        y.push(number(row, t_col, &rec[t_col])?);
        labels.push(e_col.map_or(String::new(), |c| rec[c].to_owned()));
    }
    if y.len() < 2 {
        return Err(stablesel_core::Error::InsufficientData(format!(
            "{} data rows; at least 2 are needed",
            y.len()
        ))
        .into());
    }
    let distinct: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let env_ids: Vec<usize> = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label collected above"))
        .collect();
    let x = Matrix::from_vec(y.len(), f_cols.len(), values)?;
    let mut d = EnvDataset::new(x, y, env_ids, task)?;
    d.feature_names = f_cols.iter().map(|&c| header[c].clone()).collect();
    if e_col.is_some() {
        d.env_labels = distinct;
    }
    Ok(d)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(Error::io(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn num(v: f64) -> String {
    format!("{v}")
}

/// Features, then `y`, then `env` (the environment label).
pub fn write_dataset(path: &Path, d: &EnvDataset) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = d.feature_names.clone();
    header.push("y".into());
    header.push("env".into());
    w.write_record(&header)?;
    for i in 0..d.n_rows() {
        let mut rec: Vec<String> = d.features().row(i).iter().map(|&v| num(v)).collect();
        rec.push(num(d.target()[i]));
        rec.push(d.env_labels[d.env_ids()[i]].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// Per-environment row counts and split sizes.
pub fn write_env_summary(path: &Path, d: &EnvDataset) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["env", "label", "rows", "train", "val", "test", "held_out"])?;
    for (e, s) in d.splits().iter().enumerate() {
        w.write_record([
            e.to_string(),
            d.env_labels[e].clone(),
            s.len().to_string(),
            s.train.len().to_string(),
            s.val.len().to_string(),
            s.test.len().to_string(),
            u8::from(d.held_out().contains(&e)).to_string(),
        ])?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// One line of comma-separated indices.
pub fn write_indices(path: &Path, idx: &[usize]) -> Result<()> {
    let line: Vec<String> = idx.iter().map(usize::to_string).collect();
    fs::write(path, line.join(",") + "\n").map_err(Error::io(path))
}

pub fn read_indices(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.trim()
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.trim().parse().map_err(|_| Error::ParseFailure {
                row: 1,
                column: "index".into(),
                value: s.to_owned(),
            })
        })
        .collect()
}

/// `feature_index,score`.
pub fn write_scores(path: &Path, scores: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["feature_index", "score"])?;
    for (j, &s) in scores.iter().enumerate() {
        w.write_record([j.to_string(), num(s)])?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// Columns `m0..m{p-1}` and `provenance`.
pub fn write_pool(path: &Path, pool: &MaskPool) -> Result<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = (0..pool.dim()).map(|j| format!("m{j}")).collect();
    header.push("provenance".into());
    w.write_record(&header)?;
    for (row, prov) in pool.masks.iter_rows().zip(&pool.provenance) {
        let mut rec: Vec<String> = row.iter().map(|&v| num(v)).collect();
        rec.push(prov.as_str().into());
        w.write_record(&rec)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

pub fn read_pool(path: &Path, sigma_mask: f64) -> Result<MaskPool> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    let p = header
        .iter()
        .position(|h| h == "provenance")
        .ok_or_else(|| Error::NamedColumnAbsent("provenance".into()))?;
    let mut rows = Vec::new();
    let mut prov = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(p);
        for c in 0..p {
            row.push(rec[c].parse::<f64>().map_err(|_| Error::ParseFailure {
                row: i + 1,
                column: header[c].to_owned(),
                value: rec[c].to_owned(),
            })?);
        }
        rows.push(row);
        prov.push(Provenance::parse(&rec[p]).ok_or_else(|| Error::ParseFailure {
            row: i + 1,
            column: "provenance".into(),
            value: rec[p].to_owned(),
        })?);
    }
    Ok(MaskPool::new(Matrix::from_rows(&rows)?, prov, sigma_mask)?)
}

/// `feature_index,feature,pi,uncertainty,selected`.
pub fn write_inclusion(path: &Path, summary: &PosteriorSummary, names: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["feature_index", "feature", "pi", "uncertainty", "selected"])?;
    for j in 0..summary.pi.len() {
        let selected = summary.final_subset.contains(&j);
        w.write_record([
            j.to_string(),
            names[j].clone(),
            num(summary.pi[j]),
            num(summary.uncertainty[j]),
            u8::from(selected).to_string(),
        ])?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// Reads the `pi` column back from an inclusion file.
pub fn read_inclusion(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).map_err(Error::io(path))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers()?.clone();
    let c = header
        .iter()
        .position(|h| h == "pi")
        .ok_or_else(|| Error::NamedColumnAbsent("pi".into()))?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            rec[c].parse().map_err(|_| Error::ParseFailure {
                row: i + 1,
                column: "pi".into(),
                value: rec[c].to_owned(),
            })
        })
        .collect()
}

/// The final subset: `rank,feature_index,feature,pi`.
pub fn write_selection(path: &Path, summary: &PosteriorSummary, names: &[String]) -> Result<()> {
    let mut order = summary.final_subset.clone();
    // the subset is index-sorted; list it by inclusion frequency
    order.sort_by(|&a, &b| summary.pi[b].total_cmp(&summary.pi[a]).then(a.cmp(&b)));
    let mut w = writer(path)?;
    w.write_record(["rank", "feature_index", "feature", "pi"])?;
    for (r, &j) in order.iter().enumerate() {
        w.write_record([(r + 1).to_string(), j.to_string(), names[j].clone(), num(summary.pi[j])])?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// `chain,step,U,density`; step 0 is the uniform start.
pub fn write_trace(path: &Path, chains: &[ChainTrace]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["chain", "step", "U", "density"])?;
    for (c, t) in chains.iter().enumerate() {
        w.write_record([c.to_string(), "0".into(), num(t.initial_energy), num(t.initial_density)])?;
        for (k, (u, dens)) in t.energies.iter().zip(&t.densities).enumerate() {
            w.write_record([c.to_string(), (k + 1).to_string(), num(*u), num(*dens)])?;
        }
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// `method,indices,scores`, with indices and scores space-separated.
pub fn write_baseline(path: &Path, r: &stablesel_core::baselines::BaselineResult) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["method", "indices", "scores"])?;
    let idx: Vec<String> = r.subset.iter().map(usize::to_string).collect();
    let sc: Vec<String> = r.scores.iter().map(|&v| num(v)).collect();
    w.write_record([r.method.as_str().to_owned(), idx.join(" "), sc.join(" ")])?;
    w.flush().map_err(Error::io(path))?;
    Ok(())
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let mut f = File::create(path).map_err(Error::io(path))?;
    f.write_all(text.as_bytes()).map_err(Error::io(path))
}

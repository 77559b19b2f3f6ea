//! `report`: aggregate test metrics over seeds, gate-curve samples and
//! depth histograms.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use eirehn_core::cells::elastic::gate_value;
use eirehn_core::train::{mean_std, parse_csv, Metric, Split, CSV_HEADER};
use eirehn_core::{Error, Result};

use crate::{parse_list, ReportArgs};

fn list_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.to_string_lossy().ends_with(suffix))
        .collect();
    files.sort();
    Ok(files)
}

/// Upper-bound gate curve `max(β + e^α − e^{α r}, 0)` for `r = 1..=depth`.
pub fn gate_curve(alpha: f64, beta: f64, depth: usize) -> Vec<(usize, f64)> {
    (1..=depth).map(|r| (r, gate_value(alpha, beta, 0.0, r))).collect()
}

fn strip_seed(stem: &str) -> &str {
    match stem.rfind("-seed") {
        Some(i) if stem[i + 5..].chars().all(|c| c.is_ascii_digit()) => &stem[..i],
        _ => stem,
    }
}

pub fn run(a: &ReportArgs) -> Result<()> {
    if !a.metrics.is_dir() {
        return Err(Error::MissingData {
            root: a.metrics.clone(),
            missing: vec![a.metrics.clone()],
        });
    }
    let out = a.out.clone().unwrap_or_else(|| a.metrics.clone());
    std::fs::create_dir_all(&out)?;

    // (label, metric) -> values, one per run
    let mut table: BTreeMap<(String, Metric), Vec<f64>> = BTreeMap::new();
    let mut runs = 0;
    for path in list_files(&a.metrics, ".csv")? {
        let text = std::fs::read_to_string(&path)?;
        if !text.starts_with(CSV_HEADER) {
            continue;
        }
        runs += 1;
        for r in parse_csv(&text)? {
            if r.split == Split::Test {
                table.entry((r.run, r.metric)).or_default().push(r.value);
            }
        }
    }
    if runs == 0 {
        return Err(Error::MissingData {
            root: a.metrics.clone(),
            missing: vec![a.metrics.join("*.csv")],
        });
    }

    let mut summary = String::from("label,metric,mean,std,runs\n");
    println!("{:<40} {:<14} {:>28} {:>5}", "run", "metric", "mean ± std", "n");
    for ((label, metric), values) in &table {
        let (mean, std) = mean_std(values);
        println!(
            "{label:<40} {metric:<14} {:>28} {:>5}",
            format!("{mean:.4e} ± {std:.2e}"),
            values.len()
        );
        summary += &format!("{label},{metric},{mean:?},{std:?},{}\n", values.len());
    }
    std::fs::write(out.join("summary.csv"), summary)?;

    for alpha in parse_list::<f64>(&a.alpha, "alpha")? {
        for beta in parse_list::<f64>(&a.beta, "beta")? {
            let mut text = String::from("r,d\n");
            for (r, d) in gate_curve(alpha, beta, a.curve_depth) {
                text += &format!("{r},{d:?}\n");
            }
            std::fs::write(out.join(format!("gate-curve-a{alpha}-b{beta}.csv")), text)?;
        }
    }

    let mut hists: BTreeMap<String, BTreeMap<usize, usize>> = BTreeMap::new();
    for path in list_files(&a.metrics, ".depths.csv")? {
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_string();
        let label = strip_seed(name.trim_end_matches(".depths.csv")).to_string();
        let text = std::fs::read_to_string(&path)?;
        let hist = hists.entry(label).or_default();
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let bad = || Error::Parse {
                context: path.display().to_string(),
                detail: format!("bad row `{line}`"),
            };
            let (d, c) = line.split_once(',').ok_or_else(bad)?;
            *hist.entry(d.parse().map_err(|_| bad())?).or_default() += c.parse::<usize>().map_err(|_| bad())?;
        }
    }
    for (label, hist) in hists {
        let mut text = String::from("depth,count\n");
        for (d, c) in hist {
            text += &format!("{d},{c}\n");
        }
        std::fs::write(out.join(format!("depth-histogram-{label}.csv")), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_curve_example() {
        let c = gate_curve(std::f64::consts::LN_2, 0.5, 3);
        assert!((c[0].1 - 0.5).abs() < 1e-15);
        assert_eq!(c[1], (2, 0.0));
        assert_eq!(c[2], (3, 0.0));
    }

    #[test]
    fn seed_suffix_removed() {
        assert_eq!(strip_seed("synthetic-rnn-h20-seed3"), "synthetic-rnn-h20");
        assert_eq!(strip_seed("odd-seedx"), "odd-seedx");
    }
}

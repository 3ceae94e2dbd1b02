//! Learning curves: mean and standard deviation of F1 per category,
//! strategy and training-set size.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use activelabel::evaluation::{aggregate_runs, read_results, ResultRow};
use anyhow::Context;
use serde::Serialize;

use crate::{create, open, Classify, Outcome};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub category: String,
    pub strategy: String,
    pub labeled_count: usize,
    pub runs: usize,
    pub mean_f1: f64,
    pub sd_f1: f64,
    pub single_run: bool,
}

/// One point per (category, strategy, labeled_count), in that order.
/// Strategies keep the order they first appear in.
pub fn curve_points(rows: &[ResultRow]) -> Vec<CurvePoint> {
    let mut strategy_order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(&str, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let rank = match strategy_order.iter().position(|s| *s == r.strategy) {
            Some(i) => i,
            None => {
                strategy_order.push(&r.strategy);
                strategy_order.len() - 1
            }
        };
        groups
            .entry((r.category.as_str(), rank, r.labeled_count))
            .or_default()
            .push(r.f1);
    }
    groups
        .into_iter()
        .map(|((category, rank, labeled_count), f)| {
            let agg = aggregate_runs(&f).expect("groups are non-empty");
            CurvePoint {
                category: category.to_owned(),
                strategy: strategy_order[rank].to_owned(),
                labeled_count,
                runs: agg.runs,
                mean_f1: agg.mean,
                sd_f1: agg.sd,
                single_run: agg.single_run,
            }
        })
        .collect()
}

/// Per category: one line per labeled count, one `mean±sd` column per
/// strategy, blank where a strategy has no point.
pub fn render_table(points: &[CurvePoint]) -> String {
    let mut out = String::new();
    let categories: Vec<&str> = {
        let mut seen = BTreeSet::new();
        points
            .iter()
            .filter(|p| seen.insert(p.category.as_str()))
            .map(|p| p.category.as_str())
            .collect()
    };
    for category in categories {
        let here: Vec<&CurvePoint> = points.iter().filter(|p| p.category == category).collect();
        let mut strategies: Vec<&str> = Vec::new();
        for p in &here {
            if !strategies.contains(&p.strategy.as_str()) {
                strategies.push(&p.strategy);
            }
        }
        let grid: BTreeSet<usize> = here.iter().map(|p| p.labeled_count).collect();
        out.push_str(&format!("# {category}\nlabeled"));
        for s in &strategies {
            out.push_str(&format!("\t{s}"));
        }
        out.push('\n');
        for n in grid {
            out.push_str(&n.to_string());
            for s in &strategies {
                match here.iter().find(|p| p.labeled_count == n && p.strategy == *s) {
                    Some(p) => out.push_str(&format!("\t{:.3}±{:.3}", p.mean_f1, p.sd_f1)),
                    None => out.push('\t'),
                }
            }
            out.push('\n');
        }
    }
    out
}

pub fn cmd_curve(results: &Path, out: Option<&Path>) -> Outcome<()> {
    let rows = read_results(open(results)?)
        .with_context(|| format!("reading {}", results.display()))
        .data()?;
    let points = curve_points(&rows);
    print!("{}", render_table(&points));
    if let Some(path) = out {
        let mut w = csv::Writer::from_writer(create(path)?);
        for p in &points {
            w.serialize(p).runtime()?;
        }
        w.flush().runtime()?;
        std::io::stdout().flush().runtime()?;
        eprintln!("wrote {} curve points to {}", points.len(), path.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use activelabel::evaluation::ConfusionCounts;

    fn row(strategy: &str, run: usize, n: usize, tp: u64) -> ResultRow {
        ResultRow::new("bonds", strategy, run, n, 0, ConfusionCounts { tp, fp: 1, fn_: 1, tn: 10 })
    }

    #[test]
    fn points_match_an_independent_mean_and_sd() {
        let rows = vec![row("uncertainty", 0, 3, 1), row("uncertainty", 1, 3, 3), row("random", 0, 6, 2)];
        let points = curve_points(&rows);
        assert_eq!(points.len(), 2);
        let u = &points[0];
        assert_eq!((u.strategy.as_str(), u.runs), ("uncertainty", 2));
        let f = [rows[0].f1, rows[1].f1];
        let mean = (f[0] + f[1]) / 2.0;
        let sd = ((f[0] - mean).powi(2) + (f[1] - mean).powi(2)).sqrt();
        assert!((u.mean_f1 - mean).abs() < 1e-15);
        assert!((u.sd_f1 - sd).abs() < 1e-15);
        assert!(points[1].single_run && points[1].sd_f1 == 0.0);

        let table = render_table(&points);
        assert!(table.starts_with("# bonds\nlabeled\tuncertainty\trandom\n3\t"));
        assert!(table.contains("\n6\t\t"));
    }
}

//! The five subcommands. Each loads nothing itself: it receives a parsed
//! config, writes into an [`OutputDir`] and returns the manifest path.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use gbcosface_core::eval::{self, ClusterStats, VerificationReport};
use gbcosface_core::geometry::{trace_boundary, BoundarySpec};
use gbcosface_core::gradcheck;
use gbcosface_core::toy::{self, TrainOutcome, TrajectoryReport};
use gbcosface_core::{SphereBatch, Variant};
use serde_json::{json, Value};

use crate::config::{
    BoundaryMapConfig, CheckGradientsConfig, EvalConfig, EvalPairsConfig, SweepAlphaConfig, TrainToyConfig,
};
use crate::error::{CliError, Result};
use crate::output::{num, OutputDir, Table};

pub fn check_gradients(cfg: &CheckGradientsConfig, out: &Path) -> Result<PathBuf> {
    let report = gradcheck::run_suite(&cfg.suite)?;
    let mut dir = OutputDir::create(out)?;
    dir.write_json("gradient_report.json", &report)?;
    for c in &report.checks {
        println!(
            "{:<6} {:<40} worst {:.3e} (tol {:.0e}, {} draws)",
            if c.passed { "ok" } else { "FAILED" },
            c.name,
            c.worst_error,
            c.tolerance,
            c.draws
        );
    }
    let manifest = dir.finish("check-gradients", cfg)?;
    if !report.passed {
        let mut ops: Vec<&str> = report.failures().map(|c| c.op.as_str()).collect();
        ops.dedup();
        return Err(CliError::Tolerance(format!(
            "gradient checks failed in {}; worst draws are in gradient_report.json",
            ops.join(", ")
        )));
    }
    Ok(manifest)
}

fn embeddings_table(batch: &SphereBatch) -> Table {
    let mut t = Table::new(std::iter::once("id".to_string()).chain((1..=batch.dim()).map(|k| format!("x{k}"))));
    for (row, l) in batch.rows().zip(batch.labels()) {
        t.push(std::iter::once(l.to_string()).chain(row.iter().map(|&x| num(x))).collect());
    }
    t
}

fn train_log_table(outcome: &TrainOutcome) -> Table {
    let mut t = Table::new([
        "iter",
        "epoch",
        "loss",
        "p_v",
        "p_vg",
        "p_hat_v_mean",
        "g_t_mean",
        "g_n_mean",
        "intra_class_mean_cosine",
        "inter_class_max_cosine",
    ]);
    for r in &outcome.log {
        t.push(vec![
            r.iter.to_string(),
            r.epoch.to_string(),
            num(r.loss),
            num(r.p_v_mean),
            num(r.p_vg),
            num(r.p_hat_v_mean),
            num(r.g_t_mean),
            num(r.g_n_mean),
            num(r.intra_class_mean_cosine),
            num(r.inter_class_max_cosine),
        ]);
    }
    t
}

/// Pair construction, TAR@FAR and cluster statistics for one batch.
fn evaluate(batch: &SphereBatch, cfg: &EvalConfig) -> Result<(VerificationReport, ClusterStats, usize, usize)> {
    let pairs = eval::build_pairs(batch, cfg.max_pairs_per_class, cfg.pair_seed)?;
    let report = eval::tar_at_far(&pairs, batch, &cfg.far_levels)?;
    let stats = eval::cluster_stats(batch)?;
    Ok((report, stats, pairs.genuine.len(), pairs.impostor.len()))
}

fn print_eval(report: &VerificationReport, stats: &ClusterStats) {
    println!("intra-class mean cosine  {:.6}", stats.intra_class_mean_cosine);
    println!("inter-class max cosine   {:.6}", stats.inter_class_max_cosine);
    println!("{:>10}  {:>8}  {:>10}  {:>10}", "FAR", "TAR", "threshold", "achieved");
    for t in &report.tar_at_far {
        println!(
            "{:>10}  {:>8.4}  {:>10.6}  {:>10.3e}",
            num(t.far_level),
            t.tar,
            t.threshold,
            t.achieved_far
        );
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
}

fn trajectory(outcome: &TrainOutcome) -> Option<TrajectoryReport> {
    toy::gradient_trajectory_report(&outcome.log).ok()
}

pub fn train_toy(cfg: &TrainToyConfig, out: &Path) -> Result<PathBuf> {
    let data = toy::generate_dataset(&cfg.dataset)?;
    let outcome = toy::train(&data.batch, &cfg.loss, &cfg.optimizer)?;
    let (report, stats, _, _) = evaluate(&outcome.state.embeddings, &cfg.eval)?;

    let mut dir = OutputDir::create(out)?;
    dir.write_csv("train_log.csv", &train_log_table(&outcome))?;
    dir.write_csv("embeddings_final.csv", &embeddings_table(&outcome.state.embeddings))?;
    let protos = &outcome.state.prototypes;
    let mut t = Table::new(std::iter::once("id".to_string()).chain((1..=protos.dim()).map(|k| format!("x{k}"))));
    for (row, l) in protos.rows().zip(protos.labels()) {
        t.push(std::iter::once(l.to_string()).chain(row.iter().map(|&x| num(x))).collect());
    }
    dir.write_csv("prototypes_final.csv", &t)?;

    print_eval(&report, &stats);
    match trajectory(&outcome) {
        Some(tr) => println!(
            "final-window g_t/g_n    {:.4} ({}), p_vg {:.6} +- {:.2e}",
            tr.ratio,
            if tr.balanced { "balanced" } else { "unbalanced" },
            tr.p_vg_window_mean,
            tr.p_vg_window_std
        ),
        None => println!("trajectory report skipped: fewer than 100 logged steps"),
    }
    dir.finish("train-toy", cfg)
}

pub fn sweep_alpha(cfg: &SweepAlphaConfig, out: &Path) -> Result<PathBuf> {
    if cfg.loss.variant != Variant::GbCosFace {
        return Err(CliError::Usage("sweep-alpha needs loss.variant = gb_cosface".into()));
    }
    if cfg.alphas.is_empty() {
        return Err(CliError::Usage("alphas is empty".into()));
    }
    let data = toy::generate_dataset(&cfg.dataset)?;
    let mut header = vec!["alpha".to_string()];
    header.extend(cfg.eval.far_levels.iter().map(|f| format!("tar_at_far_{}", num(*f))));
    header.extend(
        ["intra_class_mean_cosine", "inter_class_max_cosine", "g_t_g_n_ratio", "final_p_vg"].map(String::from),
    );
    let mut table = Table::new(header);
    println!("{:>6}  {:>10}  {:>10}  {:>8}", "alpha", "intra", "inter", "ratio");
    for &alpha in &cfg.alphas {
        let loss = gbcosface_core::LossConfig { alpha, ..cfg.loss };
        let outcome = toy::train(&data.batch, &loss, &cfg.optimizer)?;
        let (report, stats, _, _) = evaluate(&outcome.state.embeddings, &cfg.eval)?;
        let ratio = trajectory(&outcome).map(|t| t.ratio);
        let mut row = vec![num(alpha)];
        row.extend(report.tar_at_far.iter().map(|t| num(t.tar)));
        row.push(num(stats.intra_class_mean_cosine));
        row.push(num(stats.inter_class_max_cosine));
        row.push(ratio.map(num).unwrap_or_default());
        row.push(num(outcome.state.boundary.p_vg()));
        table.push(row);
        println!(
            "{:>6}  {:>10.6}  {:>10.6}  {:>8}",
            num(alpha),
            stats.intra_class_mean_cosine,
            stats.inter_class_max_cosine,
            ratio.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    let mut dir = OutputDir::create(out)?;
    dir.write_csv("alpha_sweep.csv", &table)?;
    dir.finish("sweep-alpha", cfg)
}

pub fn boundary_map(cfg: &BoundaryMapConfig, out: &Path) -> Result<PathBuf> {
    if cfg.maps.is_empty() {
        return Err(CliError::Usage("maps is empty".into()));
    }
    let mut dir = OutputDir::create(out)?;
    for (k, m) in cfg.maps.iter().enumerate() {
        let spec = BoundarySpec::symmetric(cfg.angle_deg, m.variant, m.m, m.alpha, m.p_vg, cfg.grid_resolution)?;
        let map = trace_boundary(&spec)?;
        let stem = format!("map{k:02}_{}_m{}_alpha{}", m.variant.name(), num(m.m), num(m.alpha));

        let mut grid = Table::new(["x", "y", "z", "lat_deg", "lon_deg", "residual", "residual_p2"]);
        for p in &map.points {
            grid.push(vec![
                num(p.xyz[0]),
                num(p.xyz[1]),
                num(p.xyz[2]),
                num(p.lat_deg),
                num(p.lon_deg),
                num(p.residual),
                num(p.residual_p2),
            ]);
        }
        dir.write_csv(&format!("{stem}_grid.csv"), &grid)?;

        let mut line = Table::new(["x", "y", "z", "lat_deg", "lon_deg", "residual"]);
        for v in &map.boundary_polyline {
            line.push(vec![
                num(v.xyz[0]),
                num(v.xyz[1]),
                num(v.xyz[2]),
                num(v.lat_deg),
                num(v.lon_deg),
                num(v.residual),
            ]);
        }
        dir.write_csv(&format!("{stem}_boundary.csv"), &line)?;
        println!("{stem}: {} boundary vertices", map.boundary_polyline.len());
    }
    dir.finish("boundary-map", cfg)
}

/// Parses an embeddings CSV with an `id` column followed by coordinates.
///
/// Ids are arbitrary strings; classes are numbered in sorted id order, with
/// integer ids sorted numerically. Rows are normalized on load.
pub fn read_embeddings(path: &Path, bytes: &[u8]) -> Result<SphereBatch> {
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().from_reader(bytes);
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.get(0) != Some("id") || header.len() < 2 {
        return Err(bad("expected a header starting with id and at least one coordinate".into()));
    }
    let dim = header.len() - 1;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        ids.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            let x: f64 = cell
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}: {cell:?} is not a number", line + 1)))?;
            data.push(x);
        }
    }
    let mut distinct: Vec<&String> = ids.iter().collect();
    distinct.sort_by_key(|s| {
        let n = s.parse::<i128>().ok();
        (n.is_none(), n, s.as_str())
    });
    distinct.dedup();
    let index: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let labels = ids.iter().map(|s| index[s.as_str()]).collect();
    Ok(SphereBatch::from_raw_rows(dim, data, labels, index.len())?)
}

fn report_json(report: &VerificationReport, stats: &ClusterStats, cfg: &EvalConfig, counts: (usize, usize)) -> Value {
    let tar: serde_json::Map<String, Value> = report
        .tar_at_far
        .iter()
        .map(|t| {
            (
                num(t.far_level),
                json!({"tar": t.tar, "threshold": t.threshold, "achieved_far": t.achieved_far}),
            )
        })
        .collect();
    json!({
        "roc": report.thinned_roc(cfg.roc_points),
        "tar_at_far": tar,
        "warnings": report.warnings,
        "n_genuine": counts.0,
        "n_impostor": counts.1,
        "cluster_stats": {
            "intra_class_mean_cosine": stats.intra_class_mean_cosine,
            "inter_class_max_cosine": stats.inter_class_max_cosine,
            "singleton_classes": stats.singleton_classes,
        },
    })
}

pub fn eval_pairs(cfg: &EvalPairsConfig, out: &Path) -> Result<PathBuf> {
    let bytes = fs::read(&cfg.input).map_err(|e| CliError::io(&cfg.input, e))?;
    let batch = read_embeddings(&cfg.input, &bytes)?;
    let (report, stats, g, i) = evaluate(&batch, &cfg.eval)?;
    let mut dir = OutputDir::create(out)?;
    dir.record_input(&cfg.input, &bytes);
    dir.write_json("verification_report.json", &report_json(&report, &stats, &cfg.eval, (g, i)))?;
    print_eval(&report, &stats);
    dir.finish("eval-pairs", cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embeddings_parse_with_string_ids_sorted() {
        let csv = b"id,x1,x2\n10,1,0\n2,0,2\nb,3,0\n2,0,1\n";
        let b = read_embeddings(Path::new("e.csv"), csv).unwrap();
        assert_eq!(b.labels(), &[1, 0, 2, 0]);
        assert_eq!(b.row(1), &[0.0, 1.0]);
        assert_eq!(b.n_classes(), 3);
    }

    #[test]
    fn malformed_embeddings_are_usage_errors() {
        for bad in [&b"name,x1\na,1\n"[..], b"id,x1\na,oops\n", b"id\na\n"] {
            let err = read_embeddings(Path::new("e.csv"), bad).unwrap_err();
            assert_eq!(err.exit_code(), 2);
        }
    }
}

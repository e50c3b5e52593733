use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::Command;

use structevo_cli::report::{compute_stats, read_rows, Metric, Row};
use structevo_cli::CSV_HEADER;

fn row(treatment: &str, replicate: usize, generation: usize, best_fitness: f64, median_q: f64) -> Row {
    Row {
        generation,
        treatment: treatment.to_string(),
        replicate,
        best_fitness,
        median_q,
        median_delta_to_mrec: 0.5,
        median_mod_diversity: 0.25,
    }
}

fn csv_text(rows: &[Row]) -> String {
    let mut out = String::from("# a comment line\n");
    writeln!(out, "{CSV_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.generation, r.treatment, r.replicate, r.best_fitness, r.median_q, r.median_delta_to_mrec, r.median_mod_diversity
        )
        .unwrap();
    }
    out
}

#[test]
fn identical_treatments_are_not_significant() {
    let mut rows = Vec::new();
    for rep in 0..10 {
        let q = rep as f64 / 10.0;
        rows.push(row("A", rep, 5, 0.9, q));
        rows.push(row("B", rep, 5, 0.9, q));
    }
    let report = compute_stats(&rows, Metric::MedianQ, 5).unwrap();
    let c = report.comparison("A", "B").unwrap();
    assert!((c.p_value - 1.0).abs() < 1e-9, "p = {}", c.p_value);
    assert!(!c.significant);
    assert_eq!(report.treatment("A").unwrap().median, report.treatment("B").unwrap().median);
}

#[test]
fn disjoint_twenty_versus_twenty_is_flagged() {
    let mut rows = Vec::new();
    for rep in 0..20 {
        rows.push(row("low", rep, 3, 0.5, rep as f64));
        rows.push(row("high", rep, 3, 0.5, 100.0 + rep as f64));
    }
    let report = compute_stats(&rows, Metric::MedianQ, 3).unwrap();
    let c = report.comparison("low", "high").unwrap();
    assert_eq!(c.u_a, 0.0);
    assert!(c.p_value < 0.05 && c.significant);
    let text = report.to_string();
    assert!(text.lines().any(|l| l.starts_with("low") && l.contains(" vs ") && l.ends_with(" *")), "{text}");
}

#[test]
fn intervals_bracket_the_medians() {
    let mut rows = Vec::new();
    for rep in 0..15 {
        rows.push(row("x", rep, 0, 0.5, (rep * 7 % 15) as f64));
        rows.push(row("y", rep, 0, 0.5, (rep * rep) as f64));
        rows.push(row("z", rep, 0, 0.5, 3.0));
    }
    let report = compute_stats(&rows, Metric::MedianQ, 0).unwrap();
    assert_eq!(report.comparisons.len(), 3);
    for t in &report.treatments {
        assert!(t.ci.0 <= t.median && t.median <= t.ci.1, "{t:?}");
    }
    assert_eq!(report.treatment("z").unwrap().ci, (3.0, 3.0));
    // fixed bootstrap seed
    assert_eq!(report, compute_stats(&rows, Metric::MedianQ, 0).unwrap());
}

#[test]
fn single_treatment_is_an_error() {
    let rows: Vec<Row> = (0..5).map(|rep| row("only", rep, 0, 0.5, 0.1)).collect();
    let err = compute_stats(&rows, Metric::MedianQ, 0).unwrap_err().to_string();
    assert!(err.contains("need at least two treatments"), "{err}");
}

#[test]
fn absent_generation_is_an_error() {
    let rows: Vec<Row> = (0..4).flat_map(|rep| [row("a", rep, 0, 0.5, 0.1), row("b", rep, 0, 0.5, 0.1)]).collect();
    let err = compute_stats(&rows, Metric::BestFitness, 7).unwrap_err().to_string();
    assert!(err.contains("generation 7"), "{err}");
    let err = compute_stats(&rows, Metric::GenerationsToOptimum, 7).unwrap_err().to_string();
    assert!(err.contains("generation 7"), "{err}");
}

#[test]
fn generations_to_optimum_is_censored_one_past_the_horizon() {
    let mut rows = Vec::new();
    let solve_at = [Some(2), None, Some(0), Some(4)];
    for (rep, solved) in solve_at.iter().enumerate() {
        for g in 0..=4 {
            let f = if solved.is_some_and(|s| g >= s) { 1.0 } else { 0.75 };
            rows.push(row("t", rep, g, f, 0.0));
            rows.push(row("u", rep, g, 0.75, 0.0));
        }
    }
    let report = compute_stats(&rows, Metric::GenerationsToOptimum, 4).unwrap();
    assert_eq!(report.treatment("t").unwrap().values, vec![2.0, 5.0, 0.0, 4.0]);
    assert_eq!(report.treatment("u").unwrap().values, vec![5.0; 4]);
    // an earlier horizon censors the late solver too
    let early = compute_stats(&rows, Metric::GenerationsToOptimum, 3).unwrap();
    assert_eq!(early.treatment("t").unwrap().values, vec![2.0, 4.0, 0.0, 4.0]);
}

#[test]
fn duplicate_rows_are_rejected() {
    let rows = vec![row("a", 0, 0, 0.5, 0.1), row("a", 0, 0, 0.5, 0.2), row("b", 0, 0, 0.5, 0.1)];
    assert!(compute_stats(&rows, Metric::MedianQ, 0).unwrap_err().to_string().contains("duplicate"));
}

fn write(dir: &Path, name: &str, rows: &[Row]) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, csv_text(rows)).unwrap();
    p
}

#[test]
fn csv_files_are_merged_and_comments_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let a: Vec<Row> = (0..6).map(|rep| row("a", rep, 2, 0.5, rep as f64)).collect();
    let b: Vec<Row> = (0..6).map(|rep| row("b", rep, 2, 0.5, 10.0 + rep as f64)).collect();
    let pa = write(dir.path(), "a.csv", &a);
    let pb = write(dir.path(), "b.csv", &b);
    let rows = read_rows(&[&pa, &pb]).unwrap();
    assert_eq!(rows, [a, b].concat());

    let out = Command::new(env!("CARGO_BIN_EXE_structevo"))
        .args(["stats", pa.to_str().unwrap(), pb.to_str().unwrap(), "--metric", "median_q", "--generation", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("metric median_q at generation 2"), "{text}");
    assert!(text.lines().any(|l| l.starts_with('a') && l.contains(" vs ") && l.ends_with(" *")), "{text}");

    let one = Command::new(env!("CARGO_BIN_EXE_structevo"))
        .args(["stats", pa.to_str().unwrap(), "--metric", "median_q", "--generation", "2"])
        .output()
        .unwrap();
    assert_eq!(one.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&one.stderr).contains("need at least two treatments"));
}

#[test]
fn metric_names_round_trip() {
    for m in Metric::ALL {
        assert_eq!(m.name().parse::<Metric>().unwrap(), m);
    }
    assert!("fitness".parse::<Metric>().is_err());
}

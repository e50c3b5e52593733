//! Summary statistics over experiment CSV logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use structevo::stats::DEFAULT_RESAMPLES;
use structevo::{bootstrap_median_ci, mann_whitney_u, SampleSet};

pub const SIGNIFICANCE: f64 = 0.05;
pub const CONFIDENCE: f64 = 0.95;
const BOOTSTRAP_SEED: u64 = 0x5EED;

#[derive(Clone, Debug, Deserialize, PartialEq)]
pub struct Row {
    pub generation: usize,
    pub treatment: String,
    pub replicate: usize,
    pub best_fitness: f64,
    pub median_q: f64,
    pub median_delta_to_mrec: f64,
    pub median_mod_diversity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    BestFitness,
    MedianQ,
    MedianDeltaToMrec,
    MedianModDiversity,
    /// First generation with best fitness 1, censored at `generation + 1`.
    GenerationsToOptimum,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::BestFitness,
        Metric::MedianQ,
        Metric::MedianDeltaToMrec,
        Metric::MedianModDiversity,
        Metric::GenerationsToOptimum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::BestFitness => "best_fitness",
            Metric::MedianQ => "median_q",
            Metric::MedianDeltaToMrec => "median_delta_to_mrec",
            Metric::MedianModDiversity => "median_mod_diversity",
            Metric::GenerationsToOptimum => "generations_to_optimum",
        }
    }

    fn column(self, row: &Row) -> f64 {
        match self {
            Metric::BestFitness => row.best_fitness,
            Metric::MedianQ => row.median_q,
            Metric::MedianDeltaToMrec => row.median_delta_to_mrec,
            Metric::MedianModDiversity => row.median_mod_diversity,
            Metric::GenerationsToOptimum => unreachable!("derived metric"),
        }
    }
}

impl FromStr for Metric {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Metric::ALL.iter().map(|m| m.name()).collect();
            anyhow!("unknown metric `{s}` (expected one of {})", names.join(", "))
        })
    }
}

/// Reads CSV logs; `#` lines are metadata and skipped.
pub fn read_rows(paths: &[impl AsRef<Path>]) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        for row in reader.deserialize() {
            rows.push(row.with_context(|| format!("malformed row in {}", path.display()))?);
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreatmentSummary {
    pub label: String,
    pub values: Vec<f64>,
    pub median: f64,
    pub ci: (f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairComparison {
    pub a: String,
    pub b: String,
    pub u_a: f64,
    pub p_value: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    pub metric: Metric,
    pub generation: usize,
    pub treatments: Vec<TreatmentSummary>,
    pub comparisons: Vec<PairComparison>,
}

impl StatsReport {
    pub fn treatment(&self, label: &str) -> Option<&TreatmentSummary> {
        self.treatments.iter().find(|t| t.label == label)
    }

    pub fn comparison(&self, a: &str, b: &str) -> Option<&PairComparison> {
        self.comparisons.iter().find(|c| (c.a == a && c.b == b) || (c.a == b && c.b == a))
    }
}

/// Per-replicate values of `metric` at `generation`, grouped by treatment in
/// order of first appearance.
pub fn collect_samples(rows: &[Row], metric: Metric, generation: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let mut order: Vec<String> = Vec::new();
    let mut per_cell: BTreeMap<(usize, usize), Option<f64>> = BTreeMap::new();
    let mut seen: BTreeSet<(usize, usize, usize)> = BTreeSet::new();
    for row in rows {
        let t = match order.iter().position(|l| *l == row.treatment) {
            Some(t) => t,
            None => {
                order.push(row.treatment.clone());
                order.len() - 1
            }
        };
        if !seen.insert((t, row.replicate, row.generation)) {
            bail!(
                "duplicate row for treatment {} replicate {} generation {}",
                row.treatment,
                row.replicate,
                row.generation
            );
        }
        let slot = per_cell.entry((t, row.replicate)).or_insert(None);
        match metric {
            Metric::GenerationsToOptimum => {
                if row.generation <= generation && row.best_fitness >= 1.0 {
                    let g = row.generation as f64;
                    *slot = Some(slot.map_or(g, |old: f64| old.min(g)));
                }
            }
            _ if row.generation == generation => *slot = Some(metric.column(row)),
            _ => {}
        }
    }
    let mut samples: Vec<(String, Vec<f64>)> = order.iter().map(|l| (l.clone(), Vec::new())).collect();
    for (&(t, replicate), value) in &per_cell {
        let value = match (metric, value) {
            (_, Some(v)) => *v,
            (Metric::GenerationsToOptimum, None) => {
                if !seen.contains(&(t, replicate, generation)) {
                    bail!("generation {generation} is absent for treatment {} replicate {replicate}", order[t]);
                }
                (generation + 1) as f64
            }
            (_, None) => {
                bail!("generation {generation} is absent for treatment {} replicate {replicate}", order[t]);
            }
        };
        samples[t].1.push(value);
    }
    Ok(samples)
}

pub fn compute_stats(rows: &[Row], metric: Metric, generation: usize) -> Result<StatsReport> {
    if rows.is_empty() {
        bail!("no data rows");
    }
    let samples = collect_samples(rows, metric, generation)?;
    if samples.len() < 2 {
        bail!("need at least two treatments, found {}", samples.len());
    }
    let sets: Vec<SampleSet> =
        samples.into_iter().map(|(label, values)| SampleSet::new(label, values)).collect::<structevo::Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(BOOTSTRAP_SEED);
    let mut treatments = Vec::with_capacity(sets.len());
    for s in &sets {
        let ci = bootstrap_median_ci(s, DEFAULT_RESAMPLES, CONFIDENCE, &mut rng)?;
        treatments.push(TreatmentSummary { label: s.label.clone(), values: s.values.clone(), median: s.median(), ci });
    }
    let mut comparisons = Vec::new();
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let mw = mann_whitney_u(&sets[i], &sets[j])?;
            comparisons.push(PairComparison {
                a: sets[i].label.clone(),
                b: sets[j].label.clone(),
                u_a: mw.u_a,
                p_value: mw.p_value,
                significant: mw.p_value < SIGNIFICANCE,
            });
        }
    }
    Ok(StatsReport { metric, generation, treatments, comparisons })
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric {} at generation {}", self.metric.name(), self.generation)?;
        let width = self.treatments.iter().map(|t| t.label.len()).max().unwrap_or(0).max("treatment".len());
        writeln!(f, "{:<width$}  {:>3}  {:>12}  {:>27}", "treatment", "n", "median", "95% CI")?;
        for t in &self.treatments {
            let ci = format!("[{:.6}, {:.6}]", t.ci.0, t.ci.1);
            writeln!(f, "{:<width$}  {:>3}  {:>12.6}  {:>27}", t.label, t.values.len(), t.median, ci)?;
        }
        writeln!(f)?;
        writeln!(f, "pairwise Mann-Whitney U (two-sided), * marks p < {SIGNIFICANCE}")?;
        for c in &self.comparisons {
            let mark = if c.significant { " *" } else { "" };
            writeln!(f, "{:<width$} vs {:<width$}  U = {:>8.1}  p = {:.3e}{mark}", c.a, c.b, c.u_a, c.p_value)?;
        }
        Ok(())
    }
}

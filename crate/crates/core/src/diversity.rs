//! Average distance of each individual to the whole population, with the
//! distance either [`delta_decomp`] between decomposition patterns or the
//! normalized Hamming distance between behavior vectors. The self term is
//! included in the sum and contributes zero.

use std::collections::HashMap;
use std::hash::Hash;

use crate::decomp::{delta_compact, delta_decomp, CompactLabels, DecompPattern};
use crate::error::{Error, Result};
use crate::retina::BehaviorVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiversityMetric {
    Modular,
    Behavioral,
}

#[derive(Clone, Debug, Default)]
pub struct PopulationDescriptors {
    pub patterns: Option<Vec<DecompPattern>>,
    pub behaviors: Option<Vec<BehaviorVector>>,
}

impl PopulationDescriptors {
    pub fn modular(patterns: Vec<DecompPattern>) -> Self {
        PopulationDescriptors { patterns: Some(patterns), behaviors: None }
    }

    pub fn behavioral(behaviors: Vec<BehaviorVector>) -> Self {
        PopulationDescriptors { patterns: None, behaviors: Some(behaviors) }
    }
}

fn missing(metric: DiversityMetric) -> Error {
    Error::Argument(format!("no {metric:?} descriptors for this population"))
}

pub fn behavior_distance(a: &BehaviorVector, b: &BehaviorVector) -> f64 {
    a.hamming(b) as f64 / BehaviorVector::LEN as f64
}

/// `(1/N) * sum_j d(x_i, x_j)`, with `x_i` as the evolved pattern for the
/// modular metric.
pub fn diversity_score(i: usize, descriptors: &PopulationDescriptors, metric: DiversityMetric) -> Result<f64> {
    match metric {
        DiversityMetric::Modular => {
            let pats = descriptors.patterns.as_ref().ok_or_else(|| missing(metric))?;
            let me = pats.get(i).ok_or(Error::Index { index: i, len: pats.len() })?;
            let mut total = 0.0;
            for other in pats {
                total += delta_decomp(me, other)?;
            }
            Ok(total / pats.len() as f64)
        }
        DiversityMetric::Behavioral => {
            let vecs = descriptors.behaviors.as_ref().ok_or_else(|| missing(metric))?;
            let me = vecs.get(i).ok_or(Error::Index { index: i, len: vecs.len() })?;
            Ok(vecs.iter().map(|o| behavior_distance(me, o)).sum::<f64>() / vecs.len() as f64)
        }
    }
}

/// Scores for the whole population at once. Identical descriptors are
/// grouped so the pairwise work is quadratic in the number of distinct ones.
pub fn diversity_scores(descriptors: &PopulationDescriptors, metric: DiversityMetric) -> Result<Vec<f64>> {
    match metric {
        DiversityMetric::Modular => {
            let pats = descriptors.patterns.as_ref().ok_or_else(|| missing(metric))?;
            if let Some(compact) = compact_population(pats) {
                return grouped_scores(&compact, |a, b| Ok(delta_compact(a, b)));
            }
            let canon: Vec<DecompPattern> = pats.iter().map(DecompPattern::canonical).collect();
            grouped_scores(&canon, |a, b| delta_decomp(a, b))
        }
        DiversityMetric::Behavioral => {
            let vecs = descriptors.behaviors.as_ref().ok_or_else(|| missing(metric))?;
            grouped_scores(vecs, |a, b| Ok(behavior_distance(a, b)))
        }
    }
}

/// Compact labels when every pattern lists the same small neuron set.
fn compact_population(pats: &[DecompPattern]) -> Option<Vec<CompactLabels>> {
    let measured = pats.first()?.measured_set();
    pats.iter().map(|p| CompactLabels::new(p, &measured)).collect()
}

fn grouped_scores<T: Eq + Hash>(items: &[T], dist: impl Fn(&T, &T) -> Result<f64>) -> Result<Vec<f64>> {
    let mut index: HashMap<&T, usize> = HashMap::new();
    let mut uniques: Vec<&T> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let group_of: Vec<usize> = items
        .iter()
        .map(|it| {
            *index.entry(it).or_insert_with(|| {
                uniques.push(it);
                counts.push(0);
                uniques.len() - 1
            })
        })
        .collect();
    for &g in &group_of {
        counts[g] += 1;
    }
    let n = items.len() as f64;
    let per_group = uniques
        .iter()
        .map(|a| {
            let mut total = 0.0;
            for (b, &c) in uniques.iter().zip(&counts) {
                total += c as f64 * dist(a, b)?;
            }
            Ok(total / n)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(group_of.iter().map(|&g| per_group[g]).collect())
}

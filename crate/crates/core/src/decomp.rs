//! Distance between two modular decompositions of a measured neuron set.
//!
//! A [`DecompPattern`] lists modules as lists of neuron IDs. When comparing an
//! evolved pattern against another one, the evolved pattern's module index is
//! the "color" of each of its neurons. [`uniformity`] asks whether neurons the
//! compared pattern groups together share a color; [`conflicts`] asks whether
//! neurons it separates share a color. [`delta_decomp`] folds both into a
//! distance where 0 is a perfect match.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::ann::{ArchSpec, NodeId};
use crate::error::{Error, Result};
use crate::modularity::Partition;

const NO_COLOR: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DecompPattern {
    modules: Vec<Vec<NodeId>>,
    /// Module index per neuron ID; `NO_COLOR` for unlisted neurons.
    colors: Vec<u32>,
}

impl DecompPattern {
    pub fn new(modules: Vec<Vec<NodeId>>) -> Result<Self> {
        if modules.is_empty() {
            return Err(Error::Pattern("a pattern needs at least one module".into()));
        }
        let max_id = modules.iter().flatten().copied().max().unwrap_or(0);
        let mut colors = vec![NO_COLOR; max_id + 1];
        for (c, module) in modules.iter().enumerate() {
            if module.is_empty() {
                return Err(Error::Pattern(format!("module {} is empty", c + 1)));
            }
            for &n in module {
                if colors[n] != NO_COLOR {
                    return Err(Error::Pattern(format!("neuron {n} appears in two modules")));
                }
                colors[n] = c as u32;
            }
        }
        Ok(DecompPattern { modules, colors })
    }

    pub fn modules(&self) -> &[Vec<NodeId>] {
        &self.modules
    }

    pub fn module_count(&self) -> usize {
        self.modules.len()
    }

    /// Module index of `neuron`, if it is listed.
    pub fn color(&self, neuron: NodeId) -> Option<usize> {
        match self.colors.get(neuron) {
            Some(&c) if c != NO_COLOR => Some(c as usize),
            _ => None,
        }
    }

    /// Every listed neuron, ascending.
    pub fn measured_set(&self) -> Vec<NodeId> {
        let mut all: Vec<NodeId> = self.modules.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    pub fn neuron_count(&self) -> usize {
        self.modules.iter().map(Vec::len).sum()
    }

    /// Same decomposition with neurons sorted inside modules and modules
    /// ordered by their smallest neuron. Equal canonical forms describe the
    /// same grouping.
    pub fn canonical(&self) -> DecompPattern {
        let mut modules = self.modules.clone();
        for m in modules.iter_mut() {
            m.sort_unstable();
        }
        modules.sort_unstable_by_key(|m| m[0]);
        DecompPattern::new(modules).expect("reordering keeps a valid pattern")
    }

    /// Bracket literal such as `[[i1,i2],[i3,i4]]`.
    pub fn format(&self, arch: &ArchSpec) -> String {
        let mut out = String::from("[");
        for (c, module) in self.modules.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push('[');
            for (k, &n) in module.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{}", arch.neuron_name(n)).unwrap();
            }
            out.push(']');
        }
        out.push(']');
        out
    }

    /// Parses a bracket literal of neuron names, e.g. `[[i1,i2,i3,i4],[i5,i6,i7,i8]]`.
    pub fn parse(text: &str, arch: &ArchSpec) -> Result<Self> {
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let inner = compact
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::Pattern(format!("expected `[[...],...]`, got `{text}`")))?;
        let mut modules = Vec::new();
        let mut rest = inner;
        while !rest.is_empty() {
            let body_start = rest
                .strip_prefix('[')
                .ok_or_else(|| Error::Pattern(format!("expected `[` at `{rest}`")))?;
            let close = body_start
                .find(']')
                .ok_or_else(|| Error::Pattern(format!("unclosed module in `{text}`")))?;
            let body = &body_start[..close];
            if body.contains('[') {
                return Err(Error::Pattern(format!("nested brackets in `{text}`")));
            }
            let module = body
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|name| arch.neuron_by_name(name))
                .collect::<Result<Vec<_>>>()?;
            modules.push(module);
            rest = &body_start[close + 1..];
            if let Some(r) = rest.strip_prefix(',') {
                if r.is_empty() {
                    return Err(Error::Pattern(format!("trailing comma in `{text}`")));
                }
                rest = r;
            } else if !rest.is_empty() {
                return Err(Error::Pattern(format!("expected `,` between modules in `{text}`")));
            }
        }
        DecompPattern::new(modules)
    }
}

/// Groups `measured` neurons by their partition label, one module per label
/// in order of first appearance.
pub fn restrict_partition(partition: &Partition, measured: &[NodeId]) -> Result<DecompPattern> {
    let labels = partition.module_of();
    let mut index_of_label: HashMap<usize, usize> = HashMap::new();
    let mut modules: Vec<Vec<NodeId>> = Vec::new();
    for &n in measured {
        let label = *labels.get(n).ok_or_else(|| Error::UnknownNeuron(n.to_string()))?;
        let idx = *index_of_label.entry(label).or_insert_with(|| {
            modules.push(Vec::new());
            modules.len() - 1
        });
        modules[idx].push(n);
    }
    DecompPattern::new(modules)
}

fn colors_of(m_evo: &DecompPattern, neurons: &[NodeId]) -> Result<Vec<usize>> {
    neurons
        .iter()
        .map(|&n| m_evo.color(n).ok_or_else(|| Error::Coverage(n.to_string())))
        .collect()
}

/// Most frequent color; the smallest color wins ties.
fn most_common_color(colors: &[usize]) -> (usize, usize) {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    for &c in colors {
        match counts.iter_mut().find(|(color, _)| *color == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((c, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("modules are non-empty")
}

/// Fraction of `m_comp`'s neurons that carry the main color of their module.
pub fn uniformity(m_evo: &DecompPattern, m_comp: &DecompPattern) -> Result<f64> {
    let mut uniform_neurons = 0usize;
    for module in m_comp.modules() {
        let evolved_colors = colors_of(m_evo, module)?;
        let (_main_color, occurrences) = most_common_color(&evolved_colors);
        uniform_neurons += occurrences;
    }
    Ok(uniform_neurons as f64 / m_comp.neuron_count() as f64)
}

/// One minus the fraction of cross-module neuron pairs of `m_comp` that share
/// a color in `m_evo`. Both orders of every module pair are visited. A
/// single-module `m_comp` has no pairs and scores 1.
pub fn conflicts(m_evo: &DecompPattern, m_comp: &DecompPattern) -> Result<f64> {
    let module_colors = m_comp
        .modules()
        .iter()
        .map(|m| colors_of(m_evo, m))
        .collect::<Result<Vec<_>>>()?;
    let mut num_conflicts = 0usize;
    let mut max_num_conflicts = 0usize;
    for (a, colors_a) in module_colors.iter().enumerate() {
        for (b, colors_b) in module_colors.iter().enumerate() {
            if a == b {
                continue;
            }
            num_conflicts += count_matches(colors_a, colors_b);
            max_num_conflicts += colors_a.len() * colors_b.len();
        }
    }
    if max_num_conflicts == 0 {
        return Ok(1.0);
    }
    Ok((max_num_conflicts - num_conflicts) as f64 / max_num_conflicts as f64)
}

fn count_matches(a: &[usize], b: &[usize]) -> usize {
    a.iter().map(|x| b.iter().filter(|y| *y == x).count()).sum()
}

/// Largest measured set handled by [`CompactLabels`].
pub const MAX_COMPACT: usize = 16;

/// A decomposition of a fixed ordered neuron list as one bitmask per module,
/// bit `k` standing for the `k`-th neuron and modules ordered by their first
/// neuron. Equal values describe the same grouping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CompactLabels {
    len: u8,
    modules: u8,
    masks: [u16; MAX_COMPACT],
}

impl CompactLabels {
    /// `None` unless `pattern` lists exactly the neurons of `measured`
    /// and there are at most [`MAX_COMPACT`] of them.
    pub fn new(pattern: &DecompPattern, measured: &[NodeId]) -> Option<Self> {
        if measured.len() > MAX_COMPACT || pattern.neuron_count() != measured.len() {
            return None;
        }
        let mut masks = [0u16; MAX_COMPACT];
        let mut slot_of_color = [u8::MAX; MAX_COMPACT];
        let mut modules = 0u8;
        for (k, &n) in measured.iter().enumerate() {
            let c = pattern.color(n)?;
            if slot_of_color[c] == u8::MAX {
                slot_of_color[c] = modules;
                modules += 1;
            }
            masks[slot_of_color[c] as usize] |= 1 << k;
        }
        Some(CompactLabels { len: measured.len() as u8, modules, masks })
    }

    fn module_masks(&self) -> &[u16] {
        &self.masks[..self.modules as usize]
    }
}

/// [`delta_decomp`] for two compact patterns over the same neuron list,
/// computed from the module/color contingency table. Uniformity and
/// conflicts come out as the same integer ratios as the pairwise loops.
pub fn delta_compact(m_evo: &CompactLabels, m_comp: &CompactLabels) -> f64 {
    debug_assert_eq!(m_evo.len, m_comp.len);
    let n = m_comp.len as u32;
    let mut uniform = 0u32;
    let mut same_cell_pairs = 0u32;
    for &module in m_comp.module_masks() {
        let mut main = 0u32;
        for &color in m_evo.module_masks() {
            let cell = (module & color).count_ones();
            main = main.max(cell);
            same_cell_pairs += cell * cell;
        }
        uniform += main;
    }
    let squares = |p: &CompactLabels| p.module_masks().iter().map(|m| m.count_ones().pow(2)).sum::<u32>();
    let num_conflicts = squares(m_evo) - same_cell_pairs;
    let max_conflicts = n * n - squares(m_comp);
    let uniformity = uniform as f64 / n as f64;
    let conflicts = if max_conflicts == 0 {
        1.0
    } else {
        (max_conflicts - num_conflicts) as f64 / max_conflicts as f64
    };
    1.0 - (uniformity + conflicts) / 2.0
}

/// `1 - (uniformity + conflicts) / 2`. Not symmetric in its arguments.
pub fn delta_decomp(m_evo: &DecompPattern, m_comp: &DecompPattern) -> Result<f64> {
    Ok(1.0 - (uniformity(m_evo, m_comp)? + conflicts(m_evo, m_comp)?) / 2.0)
}

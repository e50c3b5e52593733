//! The retina classification task.
//!
//! Patterns are 8-bit integers; the high nibble is the left half of the
//! retina (`i1..i4`, `i1` most significant) and the low nibble the right
//! half (`i5..i8`). In modular mode a pattern is a target when both halves
//! are targets of their side; in non-modular mode 64 of the 256 patterns are
//! targets with no structure.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;

use crate::ann::Genome;
use crate::error::{Error, Result};

pub const PATTERN_COUNT: usize = 256;
pub const INPUT_BITS: usize = 8;
const HALF_TARGETS: usize = 8;
const NONMODULAR_TARGETS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RetinaTask {
    Modular { left: BTreeSet<u8>, right: BTreeSet<u8> },
    NonModular { targets: BTreeSet<u8> },
}

impl RetinaTask {
    pub fn modular(left: BTreeSet<u8>, right: BTreeSet<u8>) -> Result<Self> {
        for (side, set) in [("left", &left), ("right", &right)] {
            if set.len() != HALF_TARGETS {
                return Err(Error::Config(format!("expected {HALF_TARGETS} {side} patterns, got {}", set.len())));
            }
            if let Some(p) = set.iter().find(|&&p| p > 0xF) {
                return Err(Error::Config(format!("{side} pattern {p} does not fit in 4 bits")));
            }
        }
        Ok(RetinaTask::Modular { left, right })
    }

    pub fn nonmodular(targets: BTreeSet<u8>) -> Result<Self> {
        if targets.len() != NONMODULAR_TARGETS {
            return Err(Error::Config(format!(
                "expected {NONMODULAR_TARGETS} target patterns, got {}",
                targets.len()
            )));
        }
        Ok(RetinaTask::NonModular { targets })
    }

    pub fn is_modular(&self) -> bool {
        matches!(self, RetinaTask::Modular { .. })
    }

    pub fn classify(&self, pattern: u8) -> bool {
        match self {
            RetinaTask::Modular { left, right } => left.contains(&(pattern >> 4)) && right.contains(&(pattern & 0xF)),
            RetinaTask::NonModular { targets } => targets.contains(&pattern),
        }
    }

    /// Expected answers for patterns `0..256`.
    pub fn truth_table(&self) -> Vec<bool> {
        (0..PATTERN_COUNT).map(|p| self.classify(p as u8)).collect()
    }

    pub fn target_count(&self) -> usize {
        self.truth_table().iter().filter(|&&t| t).count()
    }

    /// Text form accepted by [`load_task`].
    pub fn to_pattern_file(&self) -> String {
        let mut out = String::new();
        match self {
            RetinaTask::Modular { left, right } => {
                out.push_str("left:\n");
                for p in left {
                    writeln!(out, "{p:04b}").unwrap();
                }
                out.push_str("right:\n");
                for p in right {
                    writeln!(out, "{p:04b}").unwrap();
                }
            }
            RetinaTask::NonModular { targets } => {
                out.push_str("targets:\n");
                for p in targets {
                    writeln!(out, "{p:08b}").unwrap();
                }
            }
        }
        out
    }
}

/// 64 distinct targets drawn uniformly without replacement.
pub fn make_nonmodular_task<R: Rng + ?Sized>(rng: &mut R) -> RetinaTask {
    let targets = sample(rng, PATTERN_COUNT, NONMODULAR_TARGETS)
        .into_iter()
        .map(|p| p as u8)
        .collect();
    RetinaTask::nonmodular(targets).expect("sample has the right size")
}

pub fn load_task(path: &Path) -> Result<RetinaTask> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read pattern file {}: {e}", path.display())))?;
    parse_task(&text)
}

/// Parses a pattern file: a `left:` and a `right:` section of 4-bit strings,
/// or a single `targets:` section of 8-bit strings, one pattern per line.
/// `#` starts a comment.
pub fn parse_task(text: &str) -> Result<RetinaTask> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Left,
        Right,
        Targets,
    }
    let mut section = Section::None;
    let mut left = BTreeSet::new();
    let mut right = BTreeSet::new();
    let mut targets = BTreeSet::new();
    let mut saw_targets = false;
    let mut saw_halves = false;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let perr = |message: String| Error::Parse { line: line_no, message };
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "left:" => {
                section = Section::Left;
                saw_halves = true;
                continue;
            }
            "right:" => {
                section = Section::Right;
                saw_halves = true;
                continue;
            }
            "targets:" => {
                section = Section::Targets;
                saw_targets = true;
                continue;
            }
            _ => {}
        }
        if saw_halves && saw_targets {
            return Err(perr("cannot mix `targets:` with `left:`/`right:` sections".into()));
        }
        let (width, set, side) = match section {
            Section::None => return Err(perr(format!("pattern `{line}` before any section header"))),
            Section::Left => (4, &mut left, "left"),
            Section::Right => (4, &mut right, "right"),
            Section::Targets => (8, &mut targets, "target"),
        };
        if line.len() != width || !line.chars().all(|c| c == '0' || c == '1') {
            return Err(perr(format!("expected a {width}-bit pattern, got `{line}`")));
        }
        let value = u8::from_str_radix(line, 2).unwrap();
        if !set.insert(value) {
            return Err(perr(format!("duplicate {side} pattern {line}")));
        }
    }

    let count_err = |what: &str, want: usize, got: usize| Error::Parse {
        line: last_line,
        message: format!("expected {want} {what} patterns, found {got}"),
    };
    if saw_targets {
        if targets.len() != NONMODULAR_TARGETS {
            return Err(count_err("target", NONMODULAR_TARGETS, targets.len()));
        }
        return RetinaTask::nonmodular(targets);
    }
    if left.len() != HALF_TARGETS {
        return Err(count_err("left", HALF_TARGETS, left.len()));
    }
    if right.len() != HALF_TARGETS {
        return Err(count_err("right", HALF_TARGETS, right.len()));
    }
    RetinaTask::modular(left, right)
}

/// Thresholded network answers over all 256 patterns, index = pattern value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BehaviorVector([u64; 4]);

impl BehaviorVector {
    pub const LEN: usize = PATTERN_COUNT;

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        if bits.len() != Self::LEN {
            return Err(Error::Dimension { expected: Self::LEN, actual: bits.len() });
        }
        let mut words = [0u64; 4];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(BehaviorVector(words))
    }

    pub fn get(&self, index: usize) -> bool {
        (self.0[index / 64] >> (index % 64)) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }

    pub fn hamming(&self, other: &Self) -> u32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a ^ b).count_ones()).sum()
    }

    pub fn len(&self) -> usize {
        Self::LEN
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn check_interface(genome: &Genome) {
    let arch = genome.arch();
    assert_eq!(arch.input_count(), INPUT_BITS, "retina networks need 8 inputs");
    assert_eq!(arch.output_count(), 1, "retina networks need 1 output");
}

/// Bit `p` is set when the network output for pattern `p` is strictly positive.
pub fn behavior_vector(genome: &Genome) -> BehaviorVector {
    check_interface(genome);
    BehaviorVector::from_bits(&genome.positive_outputs_over_binary_inputs()).expect("256 answers")
}

/// `1 - errorCount / 256`; a zero output counts as "false".
pub fn fitness(genome: &Genome, task: &RetinaTask) -> f64 {
    fitness_from_behavior(&behavior_vector(genome), task)
}

pub fn fitness_from_behavior(behavior: &BehaviorVector, task: &RetinaTask) -> f64 {
    let errors = (0..PATTERN_COUNT).filter(|&p| behavior.get(p) != task.classify(p as u8)).count();
    1.0 - errors as f64 / PATTERN_COUNT as f64
}

//! Experiment configuration files.
//!
//! A configuration is TOML with top-level run settings, a `[task]` table,
//! an optional `[mutation]` table and one `[[treatment]]` block per
//! treatment:
//!
//! ```toml
//! population = 200
//! generations = 2000
//! replicates = 20
//! base_seed = 1
//! m_rec = "[[i1,i2,i3,i4],[i5,i6,i7,i8]]"
//! output_dir = "results"
//!
//! [task]
//! mode = "modular"
//! pattern_file = "retina_default.txt"
//!
//! [[treatment]]
//! name = "PA"
//!
//! [[treatment]]
//! name = "UserMod"
//! objective_probability = 0.5
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::HashSet;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use toml::Spanned;

use structevo::retina::{load_task, make_nonmodular_task};
use structevo::{
    ArchSpec, DecompPattern, EvolutionConfig, Execution, MutationConfig, RetinaTask, Treatment, TreatmentKind,
};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    population: Spanned<usize>,
    generations: Spanned<usize>,
    replicates: Spanned<usize>,
    #[serde(default)]
    base_seed: u64,
    p_init: Option<Spanned<f64>>,
    objective_probability: Option<Spanned<f64>>,
    m_rec: Option<Spanned<String>>,
    output_dir: Option<String>,
    execution: Option<Spanned<String>>,
    task: Spanned<RawTask>,
    #[serde(default)]
    mutation: RawMutation,
    #[serde(default)]
    treatment: Vec<Spanned<RawTreatment>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    mode: Spanned<String>,
    pattern_file: Option<Spanned<String>>,
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawMutation {
    p_add_conn: Option<f64>,
    p_remove_conn: Option<f64>,
    p_move_conn: Option<f64>,
    p_weight_change: Option<f64>,
    p_bias_change: Option<f64>,
    move_keeps_weight: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTreatment {
    name: Spanned<String>,
    label: Option<Spanned<String>>,
    m_rec: Option<Spanned<String>>,
    objective_probability: Option<Spanned<f64>>,
}

/// Where the retina targets come from.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskSource {
    PatternFile(PathBuf),
    NonModularSeed(u64),
}

/// One configured treatment and the name it gets in the CSV output.
#[derive(Clone, Debug)]
pub struct TreatmentSpec {
    pub label: String,
    pub treatment: Treatment,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub task_source: TaskSource,
    pub task: RetinaTask,
    pub treatments: Vec<TreatmentSpec>,
    /// Shared evolution settings; `m_rec` is the pattern every treatment logs against.
    pub evolution: EvolutionConfig,
    pub replicates: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Parses configuration text, resolving relative paths against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| anyhow!("{}", e.to_string().trim_end()))?;
        let at = |span: Range<usize>, key: &str, msg: String| anyhow!("line {}: `{key}`: {msg}", line_of(text, span.start));

        let arch = Arc::new(ArchSpec::retina());
        let pattern = |s: &Spanned<String>, key: &str| {
            DecompPattern::parse(s.get_ref(), &arch).map_err(|e| at(s.span(), key, e.to_string()))
        };

        let positive = |v: &Spanned<usize>, key: &str| {
            if *v.get_ref() == 0 {
                Err(at(v.span(), key, "must be at least 1".into()))
            } else {
                Ok(*v.get_ref())
            }
        };
        let population = positive(&raw.population, "population")?;
        let replicates = positive(&raw.replicates, "replicates")?;
        let generations = *raw.generations.get_ref();
        if raw.base_seed.checked_add(replicates as u64 - 1).is_none() {
            bail!("`base_seed` + replicates overflows 64 bits");
        }

        let mut evolution = EvolutionConfig { population, generations, arch: arch.clone(), ..EvolutionConfig::retina() };
        if let Some(p) = &raw.p_init {
            if !(0.0..=1.0).contains(p.get_ref()) {
                return Err(at(p.span(), "p_init", format!("must lie in [0, 1], got {}", p.get_ref())));
            }
            evolution.p_init = *p.get_ref();
        }
        if let Some(m) = &raw.m_rec {
            evolution.m_rec = pattern(m, "m_rec")?;
        }
        if let Some(e) = &raw.execution {
            evolution.execution = match e.get_ref().as_str() {
                "serial" => Execution::Serial,
                "parallel" => Execution::Parallel,
                other => return Err(at(e.span(), "execution", format!("expected `serial` or `parallel`, got `{other}`"))),
            };
        }
        let defaults = MutationConfig::default();
        let m = &raw.mutation;
        evolution.mutation = MutationConfig {
            p_add_conn: m.p_add_conn.unwrap_or(defaults.p_add_conn),
            p_remove_conn: m.p_remove_conn.unwrap_or(defaults.p_remove_conn),
            p_move_conn: m.p_move_conn.unwrap_or(defaults.p_move_conn),
            p_weight_change: m.p_weight_change.unwrap_or(defaults.p_weight_change),
            p_bias_change: m.p_bias_change.unwrap_or(defaults.p_bias_change),
            move_keeps_weight: m.move_keeps_weight.unwrap_or(defaults.move_keeps_weight),
        };
        evolution.mutation.validate().map_err(|e| anyhow!("[mutation]: {e}"))?;

        let task_span = raw.task.span();
        let task_raw = raw.task.into_inner();
        let (task_source, task) = match task_raw.mode.get_ref().as_str() {
            "modular" => {
                let file = task_raw
                    .pattern_file
                    .as_ref()
                    .ok_or_else(|| at(task_span.clone(), "task.pattern_file", "required for modular mode".into()))?;
                let path = base_dir.join(file.get_ref());
                let task = load_task(&path).map_err(|e| at(file.span(), "task.pattern_file", e.to_string()))?;
                if !task.is_modular() {
                    return Err(at(file.span(), "task.pattern_file", "modular mode needs `left:` and `right:` sections".into()));
                }
                (TaskSource::PatternFile(path), task)
            }
            "nonmodular" => match (&task_raw.pattern_file, task_raw.seed) {
                (Some(file), _) => {
                    let path = base_dir.join(file.get_ref());
                    let task = load_task(&path).map_err(|e| at(file.span(), "task.pattern_file", e.to_string()))?;
                    if task.is_modular() {
                        return Err(at(file.span(), "task.pattern_file", "nonmodular mode needs a `targets:` section".into()));
                    }
                    (TaskSource::PatternFile(path), task)
                }
                (None, Some(seed)) => {
                    (TaskSource::NonModularSeed(seed), make_nonmodular_task(&mut ChaCha8Rng::seed_from_u64(seed)))
                }
                (None, None) => {
                    return Err(at(task_span, "task", "nonmodular mode needs `seed` or `pattern_file`".into()));
                }
            },
            other => {
                return Err(at(task_raw.mode.span(), "task.mode", format!("expected `modular` or `nonmodular`, got `{other}`")))
            }
        };

        if raw.treatment.is_empty() {
            bail!("at least one [[treatment]] block is required");
        }
        let default_probability = match &raw.objective_probability {
            Some(p) => check_probability(p).map_err(|msg| at(p.span(), "objective_probability", msg))?,
            None => 1.0,
        };
        let mut labels = HashSet::new();
        let mut treatments = Vec::with_capacity(raw.treatment.len());
        for block in &raw.treatment {
            let t = block.get_ref();
            let kind: TreatmentKind =
                t.name.get_ref().parse().map_err(|e: structevo::Error| at(t.name.span(), "treatment.name", e.to_string()))?;
            let probability = match &t.objective_probability {
                Some(p) => check_probability(p).map_err(|msg| at(p.span(), "treatment.objective_probability", msg))?,
                None => default_probability,
            };
            let m_rec = match &t.m_rec {
                Some(m) => pattern(m, "treatment.m_rec")?,
                None => evolution.m_rec.clone(),
            };
            let label = match &t.label {
                Some(l) if !valid_label(l.get_ref()) => {
                    return Err(at(l.span(), "treatment.label", "use letters, digits, `-` or `_`".into()))
                }
                Some(l) => l.get_ref().clone(),
                None => kind.to_string(),
            };
            if !labels.insert(label.clone()) {
                return Err(at(block.span(), "treatment", format!("duplicate treatment label `{label}`")));
            }
            let treatment = Treatment::new(kind, Some(m_rec), probability).map_err(|e| at(block.span(), "treatment", e.to_string()))?;
            evolution.validate(&treatment).map_err(|e| at(block.span(), "treatment", e.to_string()))?;
            treatments.push(TreatmentSpec { label, treatment });
        }

        let output_dir = base_dir.join(raw.output_dir.as_deref().unwrap_or("results"));
        Ok(ExperimentConfig {
            task_source,
            task,
            treatments,
            evolution,
            replicates,
            base_seed: raw.base_seed,
            output_dir,
        })
    }

    pub fn seed(&self, replicate: usize) -> u64 {
        self.base_seed + replicate as u64
    }
}

fn check_probability(p: &Spanned<f64>) -> std::result::Result<f64, String> {
    let v = *p.get_ref();
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1], got {v}"))
    }
}

fn valid_label(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

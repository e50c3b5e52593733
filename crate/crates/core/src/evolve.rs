//! Elitist NSGA-II over retina networks with one optional structural
//! objective per treatment.
//!
//! Every individual maximizes task fitness. The treatment adds at most one
//! secondary objective: match with a recommended decomposition (`UserMod`),
//! Q-modularity (`QMod`), modular diversity (`ModDiv`) or behavioral
//! diversity (`BehavDiv`). With `objective_probability < 1` each pairwise
//! dominance comparison includes the secondary objective only with that
//! probability.
//!
//! Randomness: one ChaCha stream per replicate drives every sequential
//! decision (tournaments, per-child seeds, stochastic dominance masks). Each
//! child is mutated with its own stream seeded from it, so serial and
//! parallel execution produce identical populations.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ann::{mutate, random_genome, ArchSpec, Genome, MutationConfig, NodeId};
use crate::decomp::{delta_decomp, restrict_partition, DecompPattern};
use crate::diversity::{diversity_scores, DiversityMetric, PopulationDescriptors};
use crate::error::{Error, Result};
use crate::modularity::best_partition;
use crate::retina::{behavior_vector, fitness_from_behavior, BehaviorVector, RetinaTask};
use crate::stats::median;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TreatmentKind {
    /// Performance alone.
    PA,
    UserMod,
    QMod,
    ModDiv,
    BehavDiv,
}

impl TreatmentKind {
    pub const ALL: [TreatmentKind; 5] =
        [TreatmentKind::PA, TreatmentKind::UserMod, TreatmentKind::QMod, TreatmentKind::ModDiv, TreatmentKind::BehavDiv];

    pub fn has_secondary(self) -> bool {
        self != TreatmentKind::PA
    }
}

impl fmt::Display for TreatmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TreatmentKind::PA => "PA",
            TreatmentKind::UserMod => "UserMod",
            TreatmentKind::QMod => "QMod",
            TreatmentKind::ModDiv => "ModDiv",
            TreatmentKind::BehavDiv => "BehavDiv",
        };
        f.write_str(s)
    }
}

impl FromStr for TreatmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TreatmentKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("Q-Mod") && *k == TreatmentKind::QMod))
            .ok_or_else(|| Error::Config(format!("unknown treatment `{s}` (expected PA, UserMod, QMod, ModDiv or BehavDiv)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Treatment {
    pub kind: TreatmentKind,
    /// Recommended decomposition; required by `UserMod`, ignored otherwise.
    pub m_rec: Option<DecompPattern>,
    /// Chance that a dominance comparison looks at the secondary objective.
    pub objective_probability: f64,
}

impl Treatment {
    pub fn new(kind: TreatmentKind, m_rec: Option<DecompPattern>, objective_probability: f64) -> Result<Self> {
        if !(objective_probability > 0.0 && objective_probability <= 1.0) {
            return Err(Error::Config(format!(
                "objective_probability must lie in (0, 1], got {objective_probability}"
            )));
        }
        if kind == TreatmentKind::UserMod && m_rec.is_none() {
            return Err(Error::Config("UserMod needs a recommended decomposition".into()));
        }
        Ok(Treatment { kind, m_rec, objective_probability })
    }

    pub fn simple(kind: TreatmentKind) -> Self {
        Treatment { kind, m_rec: None, objective_probability: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveVector {
    pub primary: f64,
    pub secondary: Option<f64>,
}

impl ObjectiveVector {
    pub fn new(primary: f64, secondary: Option<f64>) -> Self {
        ObjectiveVector { primary, secondary }
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.primary).chain(self.secondary)
    }
}

/// Whether `a` dominates `b` (maximization), optionally ignoring the secondary.
fn dominates(a: &ObjectiveVector, b: &ObjectiveVector, with_secondary: bool) -> bool {
    let mut strictly = a.primary > b.primary;
    if a.primary < b.primary {
        return false;
    }
    if with_secondary {
        if let (Some(x), Some(y)) = (a.secondary, b.secondary) {
            if x < y {
                return false;
            }
            strictly |= x > y;
        }
    }
    strictly
}

/// Fast nondominated sorting. `include_secondary(i, j)` is asked once per
/// unordered pair `i < j` (in lexicographic order) when both vectors carry a
/// secondary objective. Fronts list indices in ascending order.
pub fn nondominated_sort(
    vectors: &[ObjectiveVector],
    mut include_secondary: impl FnMut(usize, usize) -> bool,
) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in i + 1..n {
            let both = vectors[i].secondary.is_some() && vectors[j].secondary.is_some();
            let with = both && include_secondary(i, j);
            if dominates(&vectors[i], &vectors[j], with) {
                dominated_by_me[i].push(j);
                domination_count[j] += 1;
            } else if dominates(&vectors[j], &vectors[i], with) {
                dominated_by_me[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by_me[i] {
                domination_count[j] -= 1;
                if domination_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// NSGA-II crowding distance over every objective present in the front.
/// Boundary members of each objective are infinite.
pub fn crowding_distance(front: &[ObjectiveVector]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let arity = front.iter().map(|v| v.values().count()).min().unwrap();
    for obj in 0..arity {
        let value = |i: usize| front[i].values().nth(obj).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = value(order[n - 1]) - value(order[0]);
        if range <= 0.0 {
            continue;
        }
        for w in order.windows(3) {
            dist[w[1]] += (value(w[2]) - value(w[0])) / range;
        }
    }
    dist
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Serial,
    /// Per-individual work on the current rayon pool.
    Parallel,
}

#[derive(Clone, Debug)]
pub struct EvolutionConfig {
    pub arch: Arc<ArchSpec>,
    pub population: usize,
    pub generations: usize,
    pub p_init: f64,
    pub mutation: MutationConfig,
    /// Neurons the decomposition patterns are measured on.
    pub measured: Vec<NodeId>,
    /// Pattern the logged distance-to-recommendation is measured against.
    pub m_rec: DecompPattern,
    pub execution: Execution,
}

impl EvolutionConfig {
    /// Retina defaults: population 200, 2000 generations, patterns on the
    /// inputs, recommendation `[[i1..i4],[i5..i8]]`.
    pub fn retina() -> Self {
        let arch = Arc::new(ArchSpec::retina());
        EvolutionConfig {
            measured: arch.input_ids(),
            m_rec: default_retina_m_rec(),
            arch,
            population: 200,
            generations: 2000,
            p_init: 0.2,
            mutation: MutationConfig::default(),
            execution: Execution::Parallel,
        }
    }

    pub fn validate(&self, treatment: &Treatment) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Config("population must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_init) {
            return Err(Error::Config(format!("p_init must lie in [0, 1], got {}", self.p_init)));
        }
        self.mutation.validate()?;
        if self.measured.is_empty() {
            return Err(Error::Config("measured neuron set is empty".into()));
        }
        if let Some(&n) = self.measured.iter().find(|&&n| n >= self.arch.node_count()) {
            return Err(Error::Config(format!("measured neuron {n} is not in the network")));
        }
        let recs = std::iter::once(&self.m_rec).chain(treatment.m_rec.as_ref());
        for rec in recs {
            if let Some(n) = rec.measured_set().into_iter().find(|n| !self.measured.contains(n)) {
                return Err(Error::Config(format!(
                    "recommended pattern lists {} outside the measured neurons",
                    if n < self.arch.node_count() { self.arch.neuron_name(n) } else { n.to_string() }
                )));
            }
        }
        Treatment::new(treatment.kind, treatment.m_rec.clone(), treatment.objective_probability)?;
        Ok(())
    }
}

pub fn default_retina_m_rec() -> DecompPattern {
    DecompPattern::new(vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]).unwrap()
}

#[derive(Clone, Debug)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
    /// Q of the approximate best partition.
    pub q: f64,
    /// That partition restricted to the measured neurons.
    pub pattern: DecompPattern,
    pub behavior: BehaviorVector,
    pub delta_to_mrec: f64,
    pub objectives: ObjectiveVector,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    fn evaluate(genome: Genome, structure: Structure, task: &RetinaTask) -> Individual {
        let behavior = behavior_vector(&genome);
        let fitness = fitness_from_behavior(&behavior, task);
        Individual {
            genome,
            fitness,
            q: structure.q,
            pattern: structure.pattern,
            behavior,
            delta_to_mrec: structure.delta_to_mrec,
            objectives: ObjectiveVector::new(fitness, None),
            rank: 0,
            crowding: 0.0,
        }
    }
}

/// Descriptors that depend only on which connections exist.
#[derive(Clone, Debug)]
struct Structure {
    q: f64,
    pattern: DecompPattern,
    delta_to_mrec: f64,
}

impl Structure {
    fn of(genome: &Genome, cfg: &EvolutionConfig) -> Structure {
        let partition = best_partition(&genome.to_graph());
        let pattern = restrict_partition(&partition, &cfg.measured).expect("measured neurons exist");
        let delta_to_mrec = delta_decomp(&pattern, &cfg.m_rec).expect("validated coverage");
        Structure { q: partition.q(), pattern, delta_to_mrec }
    }
}

/// Topologies remembered per replicate before the cache is emptied.
const STRUCTURE_CACHE_LIMIT: usize = 100_000;

#[derive(Clone, Debug)]
pub struct EvoState {
    pub generation: usize,
    pub population: Vec<Individual>,
    pub rng: ChaCha8Rng,
    structures: HashMap<Vec<u64>, Structure>,
}

fn par_map<T, R, F>(items: Vec<T>, execution: Execution, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match execution {
        Execution::Serial => items.into_iter().map(f).collect(),
        Execution::Parallel => items.into_par_iter().map(f).collect(),
    }
}

/// Evaluates `genomes`, computing each unseen topology's partition once.
fn evaluate_all(
    genomes: Vec<Genome>,
    cache: &mut HashMap<Vec<u64>, Structure>,
    task: &RetinaTask,
    cfg: &EvolutionConfig,
) -> Vec<Individual> {
    if cache.len() > STRUCTURE_CACHE_LIMIT {
        cache.clear();
    }
    let keys: Vec<Vec<u64>> = genomes.iter().map(Genome::topology_key).collect();
    let mut fresh: HashMap<&Vec<u64>, &Genome> = HashMap::new();
    for (k, g) in keys.iter().zip(&genomes) {
        if !cache.contains_key(k) {
            fresh.entry(k).or_insert(g);
        }
    }
    let fresh: Vec<(&Vec<u64>, &Genome)> = fresh.into_iter().collect();
    let computed = par_map(fresh, cfg.execution, |(k, g)| (k.clone(), Structure::of(g, cfg)));
    cache.extend(computed);
    let work: Vec<(Genome, Structure)> =
        genomes.into_iter().zip(&keys).map(|(g, k)| (g, cache[k].clone())).collect();
    par_map(work, cfg.execution, |(g, st)| Individual::evaluate(g, st, task))
}

/// Secondary objective of every member of `pool`, against `pool` for the
/// diversity treatments.
fn secondary_objectives(pool: &[Individual], treatment: &Treatment) -> Result<Vec<Option<f64>>> {
    Ok(match treatment.kind {
        TreatmentKind::PA => vec![None; pool.len()],
        TreatmentKind::UserMod => {
            let rec = treatment.m_rec.as_ref().expect("validated");
            pool.iter()
                .map(|ind| delta_decomp(&ind.pattern, rec).map(|d| Some(1.0 - d)))
                .collect::<Result<_>>()?
        }
        TreatmentKind::QMod => pool.iter().map(|ind| Some(ind.q)).collect(),
        TreatmentKind::ModDiv => {
            let d = PopulationDescriptors::modular(pool.iter().map(|i| i.pattern.clone()).collect());
            diversity_scores(&d, DiversityMetric::Modular)?.into_iter().map(Some).collect()
        }
        TreatmentKind::BehavDiv => {
            let d = PopulationDescriptors::behavioral(pool.iter().map(|i| i.behavior).collect());
            diversity_scores(&d, DiversityMetric::Behavioral)?.into_iter().map(Some).collect()
        }
    })
}

/// Sorts `pool` into fronts, assigns rank and crowding, and keeps `keep`
/// members front by front, cutting the last front by descending crowding.
fn select(mut pool: Vec<Individual>, keep: usize, treatment: &Treatment, rng: &mut ChaCha8Rng) -> Vec<Individual> {
    let vectors: Vec<ObjectiveVector> = pool.iter().map(|i| i.objectives).collect();
    let p = treatment.objective_probability;
    let fronts = nondominated_sort(&vectors, |_, _| p >= 1.0 || rng.random_bool(p));

    let mut chosen = Vec::with_capacity(keep);
    for (rank, front) in fronts.iter().enumerate() {
        if chosen.len() >= keep {
            break;
        }
        let members: Vec<ObjectiveVector> = front.iter().map(|&i| vectors[i]).collect();
        let crowd = crowding_distance(&members);
        for (&i, &c) in front.iter().zip(&crowd) {
            pool[i].rank = rank;
            pool[i].crowding = c;
        }
        let mut order: Vec<usize> = (0..front.len()).collect();
        if chosen.len() + front.len() > keep {
            order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]).then(a.cmp(&b)));
            order.truncate(keep - chosen.len());
        }
        chosen.extend(order.into_iter().map(|k| front[k]));
    }
    let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    chosen.into_iter().map(|i| slots[i].take().unwrap()).collect()
}

fn assign_objectives(pool: &mut [Individual], treatment: &Treatment) -> Result<()> {
    let secondary = secondary_objectives(pool, treatment)?;
    for (ind, s) in pool.iter_mut().zip(secondary) {
        ind.objectives = ObjectiveVector::new(ind.fitness, s);
    }
    Ok(())
}

/// Binary tournament on (rank, crowding); the first contestant wins ties.
fn tournament(pop: &[Individual], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.random_range(0..pop.len());
    let b = rng.random_range(0..pop.len());
    let better = |x: &Individual, y: &Individual| match x.rank.cmp(&y.rank) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => x.crowding >= y.crowding,
    };
    if better(&pop[a], &pop[b]) {
        a
    } else {
        b
    }
}

/// Random initial population, evaluated and ranked.
pub fn initialize(cfg: &EvolutionConfig, treatment: &Treatment, task: &RetinaTask, seed: u64) -> Result<EvoState> {
    cfg.validate(treatment)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..cfg.population).map(|_| rng.random()).collect();
    let genomes = par_map(seeds, cfg.execution, |s| {
        random_genome(&mut ChaCha8Rng::seed_from_u64(s), &cfg.arch, cfg.p_init)
    });
    let mut structures = HashMap::new();
    let mut population = evaluate_all(genomes, &mut structures, task, cfg);
    assign_objectives(&mut population, treatment)?;
    let n = population.len();
    let population = select(population, n, treatment, &mut rng);
    Ok(EvoState { generation: 0, population, rng, structures })
}

/// One generation: tournaments and mutation produce μ children, the
/// combined 2μ pool is scored and the best μ survive.
pub fn step_generation(
    mut state: EvoState,
    treatment: &Treatment,
    task: &RetinaTask,
    cfg: &EvolutionConfig,
) -> Result<EvoState> {
    let mu = state.population.len();
    let births: Vec<(usize, u64)> = (0..mu)
        .map(|_| {
            let parent = tournament(&state.population, &mut state.rng);
            (parent, state.rng.random())
        })
        .collect();
    let parents = &state.population;
    let genomes = par_map(births, cfg.execution, |(parent, seed)| {
        mutate(&parents[parent].genome, &mut ChaCha8Rng::seed_from_u64(seed), &cfg.mutation)
    });
    let children = evaluate_all(genomes, &mut state.structures, task, cfg);
    let mut pool = std::mem::take(&mut state.population);
    pool.extend(children);
    assign_objectives(&mut pool, treatment)?;
    state.population = select(pool, mu, treatment, &mut state.rng);
    state.generation += 1;
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub median_q: f64,
    pub median_delta_to_mrec: f64,
    /// Median modular diversity of the population against itself.
    pub median_mod_diversity: f64,
}

pub fn record(state: &EvoState) -> Result<GenerationRecord> {
    let pop = &state.population;
    let best_fitness = pop.iter().map(|i| i.fitness).fold(f64::NEG_INFINITY, f64::max);
    let qs: Vec<f64> = pop.iter().map(|i| i.q).collect();
    let deltas: Vec<f64> = pop.iter().map(|i| i.delta_to_mrec).collect();
    let d = PopulationDescriptors::modular(pop.iter().map(|i| i.pattern.clone()).collect());
    let div = diversity_scores(&d, DiversityMetric::Modular)?;
    Ok(GenerationRecord {
        generation: state.generation,
        best_fitness,
        median_q: median(&qs),
        median_delta_to_mrec: median(&deltas),
        median_mod_diversity: median(&div),
    })
}

#[derive(Clone, Debug)]
pub struct RunHistory {
    pub records: Vec<GenerationRecord>,
    pub winner: Genome,
    pub winner_objectives: ObjectiveVector,
}

impl RunHistory {
    /// First generation whose best fitness is 1, if any.
    pub fn generations_to_optimum(&self) -> Option<usize> {
        self.records.iter().find(|r| r.best_fitness >= 1.0).map(|r| r.generation)
    }

    pub fn last(&self) -> &GenerationRecord {
        self.records.last().expect("history holds at least generation 0")
    }
}

/// Highest primary objective, then highest secondary, then lowest index.
pub fn winner_index(population: &[Individual]) -> usize {
    let key = |i: &Individual| (i.objectives.primary, i.objectives.secondary.unwrap_or(0.0));
    let mut best = 0;
    for (idx, ind) in population.iter().enumerate().skip(1) {
        let (p, s) = key(ind);
        let (bp, bs) = key(&population[best]);
        if p > bp || (p == bp && s > bs) {
            best = idx;
        }
    }
    best
}

pub fn run_replicate(cfg: &EvolutionConfig, treatment: &Treatment, task: &RetinaTask, seed: u64) -> Result<RunHistory> {
    let mut state = initialize(cfg, treatment, task, seed)?;
    let mut records = Vec::with_capacity(cfg.generations + 1);
    records.push(record(&state)?);
    for _ in 0..cfg.generations {
        state = step_generation(state, treatment, task, cfg)?;
        records.push(record(&state)?);
    }
    let w = &state.population[winner_index(&state.population)];
    Ok(RunHistory { records, winner: w.genome.clone(), winner_objectives: w.objectives })
}

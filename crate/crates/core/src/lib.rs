//! Neuroevolution of layered feed-forward networks on the retina task,
//! guided by structural objectives: match with a recommended modular
//! decomposition, Q-modularity, or diversity of decompositions across the
//! population.

pub mod ann;
pub mod decomp;
pub mod diversity;
pub mod error;
pub mod evolve;
pub mod modularity;
pub mod retina;
pub mod stats;

pub use ann::{ArchSpec, Genome, MutationConfig, NodeId};
pub use decomp::{conflicts, delta_decomp, restrict_partition, uniformity, DecompPattern};
pub use diversity::{diversity_score, diversity_scores, DiversityMetric, PopulationDescriptors};
pub use error::{Error, Result};
pub use evolve::{
    run_replicate, EvolutionConfig, Execution, GenerationRecord, ObjectiveVector, RunHistory, Treatment,
    TreatmentKind,
};
pub use modularity::{best_partition, brute_force_partition, q_score, Graph, Partition};
pub use retina::{BehaviorVector, RetinaTask};
pub use stats::{bootstrap_median_ci, mann_whitney_u, MannWhitney, SampleSet};

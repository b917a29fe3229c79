//! Random instances and end-to-end numerical checks of the norm/testing
//! equivalence and of each step of its proof.

pub mod checks;
pub mod config;
pub mod energy;
pub mod generate;
pub mod levels;
pub mod suite;

pub use checks::{
    check_box_comparability, check_max_principle, sample_kernel_comparisons, ComparabilityReport,
    ComparisonCase, ComparisonReport, MaxPrincipleReport,
};
pub use config::{ExperimentConfig, MpConstantMode, SamplingWindow};
pub use energy::{decompose_energy, translate_levels_bound, qualifying_bound, EnergyConfig, EnergyReport};
pub use generate::{gen_instance, GeneratedInstance};
pub use levels::{build_levels, LevelStructure};
pub use suite::{run_equivalence_suite, Aggregate, CsvRow, Failure, InstanceRecord, TestReport};

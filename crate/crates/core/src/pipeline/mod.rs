//! Training triples, the composed model, staged training, generation and
//! the work-directory steps behind the CLI.

pub mod config;
pub mod generate;
pub mod model;
pub mod run;
pub mod train;
pub mod triples;

pub use config::{RunConfig, StageConfig};
pub use generate::{GeneratedSentence, GeneratedSketch, GenerationResult, Generator};
pub use model::{Factors, FactorTotals, Model, Sizes, WordPerplexity};
pub use run::{Artifacts, Split, WorkDir};
pub use train::{train, EpochRecord, Stage, TrainOptions, TrainReport};
pub use triples::{build_tables, build_triples, read_triples, write_triples, TrainingTriple};

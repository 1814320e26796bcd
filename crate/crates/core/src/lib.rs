//! Pre-computed aggregation and arithmetic cubes for table question answering.
//!
//! The pipeline ingests QA datasets over tables, enumerates first-order cube
//! items that are relevant to each question, ranks them, and serializes the
//! top items next to the linearized table as augmented model input. The
//! evaluation side measures how often the gold answer is among the items.

pub mod config;
pub mod cube;
pub mod dataset;
pub mod eval;
pub mod golden;
pub mod numeric;
pub mod pipeline;
pub mod question;
pub mod rank;
pub mod serialize;
pub mod synth;
pub mod table;

pub use config::PipelineConfig;
pub use cube::{brute_force_cube, compute, generate_cube, CubeItem, GenerationLimits, Pattern};
pub use dataset::{ingest_dataset, DatasetFormat, GoldAnswer, QAInstance};
pub use eval::{answer_matches, evaluate_coverage, extract_gold_operator, CoverageReport, Tolerance};
pub use numeric::{parse_numeric, NumericValue, Scale};
pub use pipeline::run_pipeline;
pub use question::{normalize, Operator, OperatorGroup, QuestionAnalysis};
pub use rank::{rank, score_heuristic, RankedCube, RankerMode};
pub use serialize::{build_model_input, linearize_cube_item, linearize_table, SerializedInput};
pub use table::{Cell, CellRef, Table};

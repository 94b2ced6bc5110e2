//! Guided A* planning.
//!
//! Classic grid planners, a differentiable A* whose guidance costs come from
//! a small U-shaped convolutional encoder, desk-scale motion-planning map
//! generators, and the evaluation metrics used to compare planners.

pub mod datasets;
pub mod diff_astar;
pub mod encoder;
pub mod grid;
pub mod metrics;
pub mod search;
pub mod tensor;
pub mod training;

pub use datasets::{
    build_mixed_set, generate_map, load_dataset, sample_instance, save_dataset, Dataset,
    DatasetEntry, DatasetError, MapKind, MixedSetConfig, Split,
};
pub use diff_astar::{
    closed_list_loss, differentiable_plan, DiffAstarConfig, DiffAstarError, SelectionMode,
    SoftTrace, TauSpec, Temperature,
};
pub use encoder::{assemble_input, Encoder, EncoderConfig, EncoderError, InputMode};
pub use grid::{
    heuristic, validate_instance, GridError, GridMap, GuidanceMap, Node, ProblemInstance,
};
pub use metrics::{
    bootstrap_ci, evaluate, exp_ratio, hmean_pair, opt_indicator, path_len_ratio, summarize,
    summary_table_csv, BootstrapConfig, ClassicPlanner, Evaluation, InstanceResult, Interval,
    MetricError, MetricSummary, NeuralPlanner, Planner,
};
pub use search::{
    dijkstra_oracle, plan, GuidancePlacement, SearchError, SearchPolicy, SearchTrace, SearchVariant,
};
pub use tensor::{Tensor, TensorError};
pub use training::{
    history_csv, train, validate, EpochRecord, TrainConfig, TrainError, TrainOutcome,
    TrainingSample,
};

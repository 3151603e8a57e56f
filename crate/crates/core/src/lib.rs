//! Assign-and-refine semantic grouping for continual-learning task streams.
//!
//! Tasks arrive one at a time. Each is warmed up on a toy prompted backbone
//! to obtain a semantic vector, assigned to a group by a radius threshold,
//! and groups inside a neighborhood are periodically refined by simulating
//! other arrival orders. Groups share a prompt and key; inference routes by
//! the nearest key.
#![no_std]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod grouping;
pub mod learner;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod prospective;
pub mod refinement;
pub mod rng;
pub mod scenarios;

pub use error::{Error, Result};
pub use geometry::{avg_distance, centroid, trial_distance, Partition, RadiusStats, SemanticVector, TaskId};
pub use grouping::{sequential_grouping, AssignmentKind, AssignmentOutcome, GroupingConfig, GroupingState, TaskRecord};
pub use learner::{extract_semantic, prompted_feature, warmup_train, TaskDataset, ToyBackbone, WarmupConfig, WarmupPrompt};
pub use metrics::{adjusted_rand_index, forgetting, last_accuracy, normalized_mutual_information, AccuracyMatrix};
pub use models::{avg_merge, infer_group, make_baseline, predict, tune, GroupModel, Policy, SharedClassifier, TuningConfig};
pub use prospective::{collect_prospective, kmeans, silhouette_score, ProspectiveRepository};
pub use refinement::{exhaustive_min_groups, find_minimum_group_order, RefinementResult};
pub use pipeline::{run_experiment, ExperimentConfig, ExperimentReport};
pub use scenarios::{generate, ScenarioConfig, ScenarioStream, Regime};

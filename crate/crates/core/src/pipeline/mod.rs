//! The staged classifier: G-Net graph construction, W-Net edge weighting,
//! U-Net graph update and a second W-Net iteration, each followed by GLR.

mod attention;
mod batches;
mod config;
mod passes;
mod predict;
mod rank;
mod run;
mod stages;
mod state;

pub use attention::{attention, node_gates, pair_attention, phi};
pub use batches::{build_batches, Batch};
pub use config::{BatchConfig, Ladder, PipelineConfig, StageConfig, Variant};
pub use passes::{
    concat_cols, encode_label, initial_graph, masked_signs, run_pass, strongest_neighbors, unet_inputs,
    weight_graph, Iteration, Model, Pass, PassInput,
};
pub use predict::{predict, resolve_sign, stratified_groups, stratified_pick, transduce};
pub use rank::{clamp_k, rank_sampling, top_k, RankScores};
pub use run::{Pipeline, RunManifest, RUN_MANIFEST_VERSION};
pub use stages::{
    batch_labels, fit, grid_search_gamma, knn_vote, train_gnet, train_unet, train_wnet1, train_wnet2, StageReport,
};
pub use state::{diagnostic_pass, diagnostic_state, labeled_nodes, labeled_subsample, IterationState, PipelineState};

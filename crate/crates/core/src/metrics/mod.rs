//! Accuracy, local client forgetting, summary statistics and exports.

pub mod forgetting;
pub mod heatmap;
pub mod report;

pub use forgetting::{
    accuracy, accuracy_from_logits, accuracy_vector, argmax, average_forgetting, client_accuracy_grid,
    forgetting_from_accuracies, forgetting_matrix, mean_defined, ClientMatrix, ForgettingMatrix, MatrixKind,
};
pub use heatmap::{export_heatmap, ColorScale};
pub use report::{late_forgetting, round_log_line, trailing_accuracy, RoundLog, RoundReport, ROUND_LOG_HEADER};

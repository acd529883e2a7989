//! On-disk formats.

pub mod checkpoint;
pub mod dataset;
pub mod heatmap;
pub mod report;
pub mod solution;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use dataset::{format_coord, parse_coordinates, parse_dataset, read_dataset, write_dataset};
pub use heatmap::{parse_heatmap, read_heatmap, write_heatmap};
pub use report::{report_csv, write_report};
pub use solution::{Gap, SolutionLine};

//! File formats: TUM trajectories, depth, mask and discrepancy PNGs, PLY clouds, TOML
//! configs, sequence bundles and JSONL run reports.

mod bundle;
mod config;
mod image;
mod ply;
mod report;
mod tum;

pub use bundle::{write_bundle, BundleFrame, SequenceBundle, BUNDLE_MANIFEST};
pub use config::{load_config, save_config, FullConfig};
pub use image::{
    depth_to_raw, read_depth_png, read_depth_raw, read_discrepancy_png, read_mask_png,
    write_depth_png, write_discrepancy_png, write_mask_png, DEFAULT_DEPTH_SCALE, DISCREPANCY_SCALE,
};
pub use ply::{read_ply, write_ply, PlyStreamWriter};
pub use report::{read_report, FrameRecord, Record, ReportWriter, ResetRecord};
pub use tum::{
    format_line, parse_line, read_trajectory, write_trajectory, TrajectoryWriter, POSE_DIGITS,
    QUATERNION_NORM_TOL,
};

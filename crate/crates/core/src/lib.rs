//! Viewport-aware optical flow for 360-degree video.
//!
//! The pipeline renders distortion-free perspective tiles on a lattice of
//! sliding windows, precomputes one scalar flow value per window and frame,
//! and answers "how much motion does this viewer see right now" with a
//! constant-time overlap-weighted lookup. That estimate drives the opacity
//! of a body-fixed granulated rest frame overlay.

pub mod epof;
pub mod flow;
pub mod grf;
pub mod grid;
pub mod matrix;
pub mod plane;
pub mod projection;
pub mod ssq;
pub mod stats;
pub mod store;

pub use epof::{epof, epof_trace, session_summary, EpofError, EpofSample, HeadSample, SessionSummary, DEFAULT_K};
pub use flow::{aggregate_window_flow, estimate_flow, Aggregation, FlowError, FlowField, FlowParams};
pub use grf::{generate_grains, global_opacity, radial_envelope, render_mask, GrainSet, GrfConfig, GrfError, HeadPose};
pub use grid::{build_grid, overlap_fraction, GridError, GridHash, GridParams, GridSpec, WindowId};
pub use matrix::{build_flow_matrix, FlowMatrix, FrameSource, MatrixError, MatrixJob};
pub use plane::Plane;
pub use projection::{
    angular_ratios, build_pixel_map, direction_to_equirect, project_direction, render_viewport, rotate_direction,
    EquirectFrame, PixelMap, ProjectionError, Vec3, ViewportSpec,
};

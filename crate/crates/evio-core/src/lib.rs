//! Stereo event-camera visual-inertial odometry.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`events`]: event ingestion and time-surface rendering
//! - [`geometry`]: pinhole cameras, rigid-body poses, twists and warps
//! - [`mapping`]: per-event stereo inverse-depth estimation and map fusion
//! - [`tracking`]: semi-dense edge alignment against the time-surface negative
//! - [`inertial`]: IMU samples, static initialization, midpoint strapdown integration
//! - [`eskf`]: the 15-state error-state Kalman filter fusing vision and IMU
//! - [`sim`]: a synthetic stereo event/IMU rig with exact ground truth
//! - [`eval`]: trajectory I/O and APE/RPE metrics
//! - [`config`]: flat key-value configuration files (calibration, noise, runtime knobs)
//! - [`pipeline`]: the full odometry loop tying everything together

pub mod config;
pub mod eskf;
pub mod eval;
pub mod events;
pub mod geometry;
pub mod inertial;
pub mod mapping;
pub mod pipeline;
pub mod sim;
pub mod tracking;

// pub use eskf::{Eskf, NominalState, NoiseConfig, Observation};
// pub use eval::{MetricReport, Trajectory};
pub use events::{CameraSide, Event, EventStream, LastTimestampMap, TimeSurface};
pub use geometry::{PinholeCamera, Pose, StereoRig, Twist};
pub use inertial::{GravityModel, ImuBiases, ImuSample, KinematicState};
// pub use mapping::{InverseDepthEstimate, MappingConfig, SemiDenseMap};
// pub use tracking::{TrackingConfig, TrackingProblem, TrackingResult};

//! Multi-agent shepherding: sheep flock dynamics, barrier-function control
//! of the dogs through a quadratic program, LiDAR mapping, skeleton path
//! planning and polynomial reference trajectories.
//!
//! Every numeric type is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`.

pub mod cbf;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod mapping;
pub mod planner;
pub mod qp;
pub mod scalar;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Vec2 = geometry::Vec2<f64>;
pub type Polygon = geometry::Polygon<f64>;
pub type FlockParams = dynamics::FlockParams<f64>;
pub type WorldState = dynamics::WorldState<f64>;
pub type ControllerGains = cbf::ControllerGains<f64>;
pub type ControllerConfig = cbf::ControllerConfig<f64>;
pub type QpProblem = qp::QpProblem<f64>;
pub type QpSettings = qp::QpSettings<f64>;
pub type OccupancyGrid = mapping::OccupancyGrid<f64>;
pub type GroundTruthWorld = mapping::GroundTruthWorld<f64>;
pub type GridPath = planner::GridPath<f64>;
pub type TrajectorySegment = trajectory::TrajectorySegment<f64>;
pub type TrajectorySample = trajectory::TrajectorySample<f64>;
pub type Scenario = sim::Scenario<f64>;
pub type SimConfig = sim::SimConfig<f64>;
pub type RunLog = sim::RunLog<f64>;

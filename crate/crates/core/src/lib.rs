//! Numerical machinery for intrinsic graphs in the Heisenberg groups H^n.

pub mod builtins;
pub mod diff;
pub mod error;
pub mod extension;
pub mod graph;
pub mod group;
pub mod measure;
pub mod metrics;
pub mod rng;
pub mod sampled;
pub mod splitting;

pub use error::{Error, Result};
pub use group::{flow_horizontal, group_axioms_check, homogeneous_dim, GroupAxiomResiduals, HorizontalControl, Point, MAX_N};
pub use metrics::{triangle_check, Metric, TriangleReport};
pub use sampled::{Axis, Grid, Interpolation, Orientation, SampledFunction};
pub use splitting::{Base, Cone, Splitting, SplittingSpec};
pub mod verify;

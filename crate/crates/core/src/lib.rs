//! Distance-profile matching of point clouds and metric-measure data.
//!
//! Every point is summarised by its *distance profile*: the empirical
//! distribution of distances from that point to all points of its own cloud.
//! Profiles are invariant to rigid motions, so matching on them recovers
//! correspondences without estimating a pose first.
//!
//! The crate provides
//!
//! - [`geometry`]: point clouds, distance matrices and profile extraction,
//! - [`wasserstein1d`]: exact Wasserstein-p distances on the line,
//! - [`matching`]: argmin profile matching with an inlier threshold,
//! - [`assignment`]: one-to-one matching through a linear assignment solver,
//! - [`gw`]: exact discrete optimal transport, the third lower bound to the
//!   Gromov-Wasserstein distance and the GW objective at a coupling,
//! - [`synthetic`]: seeded generators for mixtures, rigid motions and noisy
//!   correspondence instances, plus k-means,
//! - [`theory`]: separation constants, noise ceilings, accuracy metrics and
//!   the simulation drivers,
//! - [`io`]: the CSV/JSON interchange formats used by the command line tool.
//!
//! Row-wise work (distance matrices, discrepancy matrices, replicates) runs on
//! rayon when the `parallel` feature is enabled. Results never depend on the
//! thread count.

pub mod assignment;
pub mod error;
pub mod geometry;
pub mod gw;
pub mod io;
pub mod matching;
pub mod par;
pub mod synthetic;
pub mod theory;
pub mod wasserstein1d;

pub use error::{Error, Result};
pub use geometry::{DistanceMatrix, DistanceProfile, PointCloud};
pub use matching::{DiscrepancyMatrix, MatchResult};

//! Concrete geometries.

mod disk;
mod euclidean;
mod fixed_rank;
mod grassmann;
mod spd;
mod sphere;

pub use disk::{disk_distance, disk_exp, disk_log, PoincareDisk, DISK_BOUNDARY_GUARD};
pub use euclidean::EuclideanSpace;
pub use fixed_rank::{FixedRankPsd, RANK_FLOOR};
pub use grassmann::{grassmann_geodesic_step, qr_retract, subspace_angle, Grassmann};
pub use spd::{kl_gaussian, spd_dist, spd_exp, spd_geodesic, spd_log, SpdCone};
pub use sphere::Sphere;

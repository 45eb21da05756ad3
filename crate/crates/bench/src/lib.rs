//! Fixtures shared by the pipeline benchmarks.

use mvdet_core::geometry::{BoxDims, OrientedBox3D};
use mvdet_core::kitti::{GroundPlane, Point, RawPointCloud};
use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform points over the default BEV extent, a little wider than it so
/// some fall outside.
pub fn random_cloud(n: usize, seed: u64) -> RawPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-5.0..75.0),
                rng.random_range(-45.0..45.0),
                rng.random_range(-2.0..1.5),
                rng.random_range(0.0..1.0),
            )
        })
        .collect();
    RawPointCloud::new(points)
}

/// Flat ground 1.73 m below the sensor, LIDAR frame.
pub fn flat_ground() -> GroundPlane {
    GroundPlane::from_coefficients(0.0, 0.0, 1.0, 1.73).expect("unit normal")
}

/// Pairs of car-sized boxes with random overlap and heading.
pub fn box_pairs(n: usize, seed: u64) -> Vec<(OrientedBox3D, OrientedBox3D)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = BoxDims::new(4.0, 1.7, 1.5);
    (0..n)
        .map(|_| {
            let a = OrientedBox3D::new(Point3::new(20.0, 0.0, -1.0), dims, rng.random_range(-3.1..3.1));
            let c = Point3::new(20.0 + rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5), -1.0);
            (a, OrientedBox3D::new(c, dims, rng.random_range(-3.1..3.1)))
        })
        .collect()
}

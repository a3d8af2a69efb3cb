//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wiretie::perception::{CloudFrame, PointCloud};
use wiretie::Vec3;

/// `clusters` blobs of `per_cluster` points each, spread inside a 4 m cube.
pub fn blob_cloud(clusters: usize, per_cluster: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(clusters * per_cluster);
    for _ in 0..clusters {
        let c = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..4.0));
        for _ in 0..per_cluster {
            let d = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
            points.push(c + d);
        }
    }
    PointCloud::new(CloudFrame::World, points)
}

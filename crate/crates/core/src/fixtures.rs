//! Synthetic corpora: disk-clump and dumbbell images, n-D Gaussian blob
//! scatter sets, and a dense-core-with-arm 2-D distribution. Each fixture
//! carries its truth set and a tuned pipeline configuration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::ScalarField;
use crate::metrics::TruthSet;
use crate::pipeline::PipelineConfig;
use crate::scalar::{real, Real};

pub struct ImageFixture<T> {
    pub image: ScalarField<T>,
    pub truth: TruthSet<T>,
    pub config: PipelineConfig<T>,
}

pub struct ScatterFixture<T> {
    pub points: Vec<Vec<T>>,
    pub truth: TruthSet<T>,
    pub config: PipelineConfig<T>,
}

const FOREGROUND: f64 = 200.0;
const BACKGROUND: f64 = 5.0;

/// Rasterize filled disks onto a flat background.
pub fn disk_image<T: Real>(
    dims: [usize; 2],
    disks: &[((f64, f64), f64)],
) -> ScalarField<T> {
    let mut image = ScalarField::filled(&dims, real(BACKGROUND));
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let inside = disks.iter().any(|&((ci, cj), r)| {
                (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2) <= r * r
            });
            if inside {
                image.set(&[i, j], real(FOREGROUND));
            }
        }
    }
    image
}

/// Two overlapping disks (radius 20, centers 30 apart): one clump, two
/// true centers.
pub fn two_disks<T: Real>() -> ImageFixture<T> {
    two_disks_scaled(1.0)
}

/// The two-disk clump at an integer magnification; rs/ra/r0 scale with it,
/// λ_max stays fixed (that is the point of the scale-invariant potential).
pub fn two_disks_scaled<T: Real>(scale: f64) -> ImageFixture<T> {
    let radius = 20.0 * scale;
    let c0 = (35.0 * scale, 35.0 * scale);
    let c1 = (35.0 * scale, 35.0 * scale + 30.0 * scale);
    let dims = [
        (70.0 * scale) as usize,
        (100.0 * scale) as usize,
    ];
    let image = disk_image(dims, &[(c0, radius), (c1, radius)]);
    let mut truth = TruthSet::default();
    truth.objects.insert(
        1,
        vec![
            vec![real(c0.0), real(c0.1)],
            vec![real(c1.0), real(c1.1)],
        ],
    );
    let mut config = PipelineConfig::default();
    config.rs = real(5.0 * scale);
    config.ra = real(13.0 * scale);
    config.r0 = real(2.0 * scale);
    ImageFixture {
        image,
        truth,
        config,
    }
}

/// One convex disk plus a 3-cell object, for the short-circuit paths.
pub fn disk_and_triplet<T: Real>() -> ImageFixture<T> {
    let dims = [64usize, 96];
    let mut image = disk_image(dims, &[((32.0, 32.0), 20.0)]);
    for j in 80..83 {
        image.set(&[4, j], real(FOREGROUND));
    }
    let mut truth = TruthSet::default();
    // Scan order: the triplet's first cell (row 4) precedes the disk's.
    truth.objects.insert(1, vec![vec![real(4.0), real(81.0)]]);
    truth.objects.insert(2, vec![vec![real(32.0), real(32.0)]]);
    let mut config = PipelineConfig::default();
    config.min_object_cells = 1;
    ImageFixture {
        image,
        truth,
        config,
    }
}

/// Dumbbell: two disks joined by a thick bar. The bar's distance-transform
/// plateau gives the DT baseline a spurious third maximum.
pub fn dumbbell<T: Real>() -> ImageFixture<T> {
    let dims = [80usize, 140];
    let (c0, c1) = ((40.0, 30.0), (40.0, 110.0));
    let radius = 16.0;
    let halfwidth = 10.0;
    let mut image = disk_image(dims, &[(c0, radius), (c1, radius)]);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let within_bar = (i as f64 - 40.0).abs() <= halfwidth
                && (j as f64) >= c0.1
                && (j as f64) <= c1.1;
            if within_bar {
                image.set(&[i, j], real(FOREGROUND));
            }
        }
    }
    let mut truth = TruthSet::default();
    truth.objects.insert(
        1,
        vec![
            vec![real(c0.0), real(c0.1)],
            vec![real(c1.0), real(c1.1)],
        ],
    );
    ImageFixture {
        image,
        truth,
        config: PipelineConfig::default(),
    }
}

/// Isotropic Gaussian blobs in n dimensions.
pub fn gaussian_blobs<T: Real>(
    centers: &[Vec<f64>],
    sigma: f64,
    points_each: usize,
    seed: u64,
) -> ScatterFixture<T> {
    let n = centers[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(centers.len() * points_each);
    for c in centers {
        for _ in 0..points_each {
            let p: Vec<T> = (0..n)
                .map(|axis| real::<T>(c[axis] + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)))
                .collect();
            points.push(p);
        }
    }
    let mut truth = TruthSet::default();
    truth.objects.insert(
        0,
        centers
            .iter()
            .map(|c| c.iter().map(|&v| real::<T>(v)).collect())
            .collect(),
    );
    ScatterFixture {
        points,
        truth,
        config: PipelineConfig::default(),
    }
}

/// Seven well-separated 3-D blobs (σ = 6 cells) mirroring the published
/// 3-D validation: centered octahedron arrangement, ~79 particles at
/// rs ≈ 9 with the tuned support threshold.
pub fn seven_blobs_3d<T: Real>(seed: u64) -> ScatterFixture<T> {
    let arm = 40.0;
    let c = 70.0;
    let centers: Vec<Vec<f64>> = vec![
        vec![c, c, c],
        vec![c + arm, c, c],
        vec![c - arm, c, c],
        vec![c, c + arm, c],
        vec![c, c - arm, c],
        vec![c, c, c + arm],
        vec![c, c, c - arm],
    ];
    let mut fixture = gaussian_blobs(&centers, 6.0, 150_000, seed);
    let cfg = &mut fixture.config;
    // Grid in data units: cubic cells of width ≈ 1.
    cfg.scale_by_std = false;
    cfg.bins_per_axis = 140;
    cfg.rs = real(9.0);
    cfg.density_threshold = real(9.0);
    cfg.density_smooth_sigma = real(2.0);
    cfg.strategy = None; // uniform-random (scatter default)
    cfg.replicates = Some(20);
    cfg.consensus_min_support = real(0.25);
    cfg.consensus_link_radius = Some(real(4.0));
    fixture
}

/// Dense 2-D core plus a thin radial arm whose density decreases
/// monotonically away from the core (no local maximum on the arm).
pub fn core_with_arm_2d<T: Real>(seed: u64) -> ScatterFixture<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let core_center = (48.0, 34.0);
    let core_sigma = 8.0;
    let core_points = 100_000usize;
    let arm_len = 60.0;
    let arm_decay = 12.0;
    let arm_width = 2.0;
    let arm_points = 5_000usize;

    let mut points = Vec::with_capacity(core_points + arm_points);
    for _ in 0..core_points {
        let x: f64 = rng.sample(rand_distr::StandardNormal);
        let y: f64 = rng.sample(rand_distr::StandardNormal);
        points.push(vec![
            real::<T>(core_center.0 + core_sigma * x),
            real::<T>(core_center.1 + core_sigma * y),
        ]);
    }
    // Exponential decay along the arm, truncated at arm_len.
    let trunc = 1.0 - f64::exp(-arm_len / arm_decay);
    for _ in 0..arm_points {
        let u: f64 = rng.random();
        let r = -arm_decay * (1.0 - u * trunc).ln();
        let lateral: f64 = rng.sample(rand_distr::StandardNormal);
        points.push(vec![
            real::<T>(core_center.0 + arm_width * lateral),
            real::<T>(core_center.1 + r),
        ]);
    }

    let mut truth = TruthSet::default();
    truth
        .objects
        .insert(0, vec![vec![real(core_center.0), real(core_center.1)]]);

    let mut config = PipelineConfig::default();
    config.scale_by_std = false;
    config.bins_per_axis = 100;
    config.rs = real(5.0);
    config.beta = real(0.0);
    config.density_threshold = real(2.0);
    config.density_smooth_sigma = real(3.0);
    config.replicates = Some(5);
    config.consensus_min_support = real(0.25);
    config.consensus_link_radius = Some(real(4.0));
    ScatterFixture {
        points,
        truth,
        config,
    }
}

/// Arm geometry of [`core_with_arm_2d`]: (core center, arm length along
/// axis 1), for assertions about seeds beyond half the arm.
pub fn arm_geometry() -> ((f64, f64), f64) {
    ((48.0, 34.0), 60.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_disk_truth_has_one_object_two_centers() {
        let f: ImageFixture<f64> = two_disks();
        assert_eq!(f.truth.objects.len(), 1);
        assert_eq!(f.truth.objects[&1].len(), 2);
        assert_eq!(f.image.dims(), &[70, 100]);
    }

    #[test]
    fn blob_fixture_counts() {
        let f: ScatterFixture<f64> = gaussian_blobs(
            &[vec![0.0, 0.0], vec![30.0, 0.0]],
            2.0,
            500,
            9,
        );
        assert_eq!(f.points.len(), 1000);
        assert_eq!(f.truth.objects[&0].len(), 2);
    }

    #[test]
    fn arm_fixture_density_is_monotone_along_arm() {
        let f: ScatterFixture<f64> = core_with_arm_2d(42);
        let ((cx, cy), len) = arm_geometry();
        // Count points in consecutive arm segments; counts must decrease.
        let seg = 10.0;
        let mut counts = Vec::new();
        let mut y = cy + 4.0;
        while y + seg <= cy + len {
            let c = f
                .points
                .iter()
                .filter(|p| {
                    (p[0] - cx).abs() < 6.0 && p[1] >= y && p[1] < y + seg
                })
                .count();
            counts.push(c);
            y += seg;
        }
        for pair in counts.windows(2) {
            assert!(pair[0] > pair[1], "arm counts not decreasing: {counts:?}");
        }
    }
}

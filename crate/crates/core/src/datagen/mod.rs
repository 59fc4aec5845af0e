//! Synthetic scenes for the three benchmark problems and the
//! correspondence-free setup.
//!
//! Outliers are always chosen by exact count (a random permutation prefix),
//! so the realized inlier fraction is exactly `1 - outlier_ratio` after
//! rounding.

use nalgebra::{Vector2, Vector3};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{Pair2D2D, Pair3D2D, Pair3D3D};
use crate::geometry::{random_rotation, random_unit_vector, RigidTransform};
use crate::pipeline::CorrespondenceSource;
use crate::rng::{derive_tagged, rng_from_seed, SimRng};

mod ply;

pub use ply::{load_ply, parse_ply, write_ply, PlyEncoding};

/// Pose rejection attempts before giving up.
pub const MAX_POSE_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n: usize,
    pub sigma: f64,
    pub outlier_ratio: f64,
}

impl SceneConfig {
    pub fn new(n: usize, sigma: f64, outlier_ratio: f64) -> Self {
        Self { n, sigma, outlier_ratio }
    }

    pub fn validate(&self, minimal_size: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.outlier_ratio) {
            return Err(Error::InvalidConfig(format!(
                "outlier ratio must lie in [0, 1), got {}",
                self.outlier_ratio
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise must be non-negative, got {}", self.sigma)));
        }
        if self.n < minimal_size {
            return Err(Error::InsufficientPoints { needed: minimal_size, got: self.n });
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.outlier_ratio * self.n as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Camera 1 to camera 2 (two-view problems) or source to target.
    pub pose: RigidTransform,
    pub inlier_mask: Vec<bool>,
}

impl GroundTruth {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

fn gaussian2(rng: &mut SimRng, sigma: f64) -> Vector2<f64> {
    Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)) * sigma
}

fn gaussian3(rng: &mut SimRng, sigma: f64) -> Vector3<f64> {
    Vector3::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    ) * sigma
}

fn uniform_image_point(rng: &mut SimRng) -> Vector2<f64> {
    Vector2::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
}

/// A point in view 1: `d (u, v, 1)` with `u, v ~ U[-1, 1]`, `d ~ U[0.1, 10]`.
fn view_one_point(rng: &mut SimRng) -> Vector3<f64> {
    let d = rng.random_range(0.1..=10.0);
    Vector3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), 1.0) * d
}

fn visible_in_view_two(pose: &RigidTransform, p: &Vector3<f64>) -> Option<Vector2<f64>> {
    let q = pose.apply(p);
    if q.z <= 0.1 {
        return None;
    }
    let x = q.xy() / q.z;
    (x.x.abs() <= 1.0 && x.y.abs() <= 1.0).then_some(x)
}

/// Scene points seen by both cameras: view-1 points, their view-2 images,
/// and the camera-1-to-camera-2 pose.
///
/// Camera 2 sits at unit distance from camera 1 with a uniformly random
/// orientation. Each point is drawn by rejection until it has depth above
/// 0.1 and lies inside `[-1, 1]^2` in view 2. Poses where fewer than one in
/// ten candidate points qualify are redrawn, so point sampling stays cheap.
fn two_view_scene(n: usize, rng: &mut SimRng) -> Result<(RigidTransform, Vec<(Vector3<f64>, Vector2<f64>)>)> {
    const PROBES: usize = 200;
    let mut pose = None;
    for _ in 0..MAX_POSE_ATTEMPTS {
        let rotation = random_rotation(rng);
        let center = random_unit_vector(rng);
        let candidate = RigidTransform::new(rotation, -(rotation * center));
        let hits = (0..PROBES)
            .filter(|_| visible_in_view_two(&candidate, &view_one_point(rng)).is_some())
            .count();
        if hits * 10 >= PROBES {
            pose = Some(candidate);
            break;
        }
    }
    let pose = pose.ok_or(Error::PoseSamplingFailed { attempts: MAX_POSE_ATTEMPTS })?;
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let p = view_one_point(rng);
        if let Some(x2) = visible_in_view_two(&pose, &p) {
            points.push((p, x2));
        }
    }
    Ok((pose, points))
}

fn outlier_mask(n: usize, outliers: usize, rng: &mut SimRng) -> Vec<bool> {
    let mut mask = vec![true; n];
    for i in index::sample(rng, n, outliers) {
        mask[i] = false;
    }
    mask
}

pub fn gen_relpose(config: &SceneConfig, seed: u64) -> Result<(Vec<Pair2D2D>, GroundTruth)> {
    config.validate(5)?;
    let mut rng = rng_from_seed(derive_tagged(seed, "relpose", 0));
    let (pose, points) = two_view_scene(config.n, &mut rng)?;
    let mask = outlier_mask(config.n, config.outlier_count(), &mut rng);
    let pairs = points
        .iter()
        .zip(&mask)
        .map(|((p, x2), &inlier)| {
            if inlier {
                Pair2D2D::new(
                    p.xy() / p.z + gaussian2(&mut rng, config.sigma),
                    x2 + gaussian2(&mut rng, config.sigma),
                )
            } else {
                Pair2D2D::new(uniform_image_point(&mut rng), uniform_image_point(&mut rng))
            }
        })
        .collect();
    Ok((pairs, GroundTruth { pose, inlier_mask: mask }))
}

/// World points are expressed in the camera-1 frame; noise and outliers
/// affect only the view-2 observation.
pub fn gen_pnp(config: &SceneConfig, seed: u64) -> Result<(Vec<Pair3D2D>, GroundTruth)> {
    config.validate(3)?;
    let mut rng = rng_from_seed(derive_tagged(seed, "pnp", 0));
    let (pose, points) = two_view_scene(config.n, &mut rng)?;
    let mask = outlier_mask(config.n, config.outlier_count(), &mut rng);
    let pairs = points
        .iter()
        .zip(&mask)
        .map(|((p, x2), &inlier)| {
            let image = if inlier {
                x2 + gaussian2(&mut rng, config.sigma)
            } else {
                uniform_image_point(&mut rng)
            };
            Pair3D2D::new(*p, image)
        })
        .collect();
    Ok((pairs, GroundTruth { pose, inlier_mask: mask }))
}

fn random_translation(rng: &mut SimRng) -> Vector3<f64> {
    Vector3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
}

/// Uniform point in the ball of `radius` around `center`.
fn in_ball(rng: &mut SimRng, center: &Vector3<f64>, radius: f64) -> Vector3<f64> {
    loop {
        let d = random_translation(rng);
        if d.norm_squared() <= 1.0 {
            return center + d * radius;
        }
    }
}

/// Sources uniform in the unit cube; outlier targets uniform in the sphere
/// circumscribing the transformed cube.
pub fn gen_pcr(config: &SceneConfig, seed: u64) -> Result<(Vec<Pair3D3D>, GroundTruth)> {
    config.validate(3)?;
    let mut rng = rng_from_seed(derive_tagged(seed, "pcr", 0));
    let pose = RigidTransform::new(random_rotation(&mut rng), random_translation(&mut rng));
    let mask = outlier_mask(config.n, config.outlier_count(), &mut rng);
    let center = pose.apply(&Vector3::repeat(0.5));
    let radius = 3f64.sqrt() / 2.0;
    let pairs = mask
        .iter()
        .map(|&inlier| {
            let p = Vector3::new(rng.random(), rng.random(), rng.random());
            let q = if inlier {
                pose.apply(&p) + gaussian3(&mut rng, config.sigma)
            } else {
                in_ball(&mut rng, &center, radius)
            };
            Pair3D3D::new(p, q)
        })
        .collect();
    Ok((pairs, GroundTruth { pose, inlier_mask: mask }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorfreeConfig {
    pub points_per_cloud: usize,
    /// Fraction of each cloud shared with the other.
    pub overlap: f64,
    pub sigma: f64,
}

impl Default for CorfreeConfig {
    fn default() -> Self {
        Self {
            points_per_cloud: 500,
            overlap: 0.5,
            sigma: 0.01,
        }
    }
}

impl CorfreeConfig {
    pub fn shared(&self) -> usize {
        (self.overlap * self.points_per_cloud as f64).round() as usize
    }

    /// Distinct input points needed.
    pub fn required_points(&self) -> usize {
        2 * self.points_per_cloud - self.shared()
    }
}

/// Every source point paired with every target point, materialized on
/// demand: pair `id` is `(source[id / B], target[id % B])`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllToAll {
    pub source: Vec<Vector3<f64>>,
    pub target: Vec<Vector3<f64>>,
}

impl AllToAll {
    pub fn pair_indices(&self, id: usize) -> (usize, usize) {
        (id / self.target.len(), id % self.target.len())
    }
}

impl CorrespondenceSource<Pair3D3D> for AllToAll {
    fn len(&self) -> usize {
        self.source.len() * self.target.len()
    }

    fn get(&self, id: usize) -> Pair3D3D {
        let (i, j) = self.pair_indices(id);
        Pair3D3D::new(self.source[i], self.target[j])
    }
}

/// Isotropic scale and shift taking the bounding box into `[0, 1]^3`.
pub fn fit_unit_cube(points: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let lo = points.iter().fold(Vector3::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = points.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    let extent = (hi - lo).max();
    let scale = if extent > 0.0 { 1.0 / extent } else { 1.0 };
    points.iter().map(|p| (p - lo) * scale).collect()
}

/// Two overlapping subsets of `cloud`; the target subset is moved by a
/// random rigid motion plus noise. The inlier mask marks the pair ids whose
/// endpoints come from the same input point.
pub fn gen_corfree(cloud: &[Vector3<f64>], config: &CorfreeConfig, seed: u64) -> Result<(AllToAll, GroundTruth)> {
    if !(0.0..=1.0).contains(&config.overlap) || !(config.sigma >= 0.0) || config.points_per_cloud < 3 {
        return Err(Error::InvalidConfig(format!("bad correspondence-free config {config:?}")));
    }
    let needed = config.required_points();
    if cloud.len() < needed {
        return Err(Error::InsufficientPoints { needed, got: cloud.len() });
    }
    let mut rng = rng_from_seed(derive_tagged(seed, "corfree", 0));
    let scaled = fit_unit_cube(cloud);
    let (p, shared) = (config.points_per_cloud, config.shared());
    let chosen = index::sample(&mut rng, cloud.len(), needed).into_vec();
    let source_ids: Vec<usize> = chosen[..p].to_vec();
    let mut target_ids: Vec<usize> = chosen[..shared].iter().chain(&chosen[p..]).copied().collect();
    // Shuffle the target order so the true matches are not on the diagonal.
    let order = index::sample(&mut rng, p, p).into_vec();
    target_ids = order.iter().map(|&k| target_ids[k]).collect();

    let pose = RigidTransform::new(random_rotation(&mut rng), random_translation(&mut rng));
    let source = source_ids.iter().map(|&i| scaled[i]).collect();
    let target = target_ids
        .iter()
        .map(|&i| pose.apply(&scaled[i]) + gaussian3(&mut rng, config.sigma))
        .collect();
    let mut inlier_mask = vec![false; p * p];
    for (si, s) in source_ids.iter().enumerate() {
        if let Some(ti) = target_ids.iter().position(|t| t == s) {
            inlier_mask[si * p + ti] = true;
        }
    }
    Ok((AllToAll { source, target }, GroundTruth { pose, inlier_mask }))
}

/// Points on a lumpy closed surface: a union of overlapping ellipsoids
/// (body, head, two ears, tail) with points on covered parts removed.
/// Deliberately asymmetric, which registration from distances needs.
pub fn surface_cloud(n: usize, seed: u64) -> Vec<Vector3<f64>> {
    // (center, semi-axes)
    const PARTS: [([f64; 3], [f64; 3]); 5] = [
        ([0.0, 0.0, 0.0], [1.0, 0.7, 0.75]),
        ([0.85, 0.1, 0.55], [0.45, 0.4, 0.42]),
        ([1.0, 0.2, 1.15], [0.12, 0.08, 0.45]),
        ([0.8, -0.05, 1.1], [0.1, 0.08, 0.4]),
        ([-1.0, 0.0, 0.15], [0.18, 0.18, 0.18]),
    ];
    let inside = |p: &Vector3<f64>, k: usize| {
        let (c, a) = PARTS[k];
        (0..3).map(|i| ((p[i] - c[i]) / a[i]).powi(2)).sum::<f64>() < 1.0
    };
    // Rough areas so parts get points in proportion to their size.
    let weights: Vec<f64> = PARTS
        .iter()
        .map(|(_, a)| (a[0] * a[1] + a[1] * a[2] + a[0] * a[2]) / 3.0)
        .collect();
    let total: f64 = weights.iter().sum();
    let mut rng = rng_from_seed(derive_tagged(seed, "surface", 0));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut pick = rng.random_range(0.0..total);
        let k = weights
            .iter()
            .position(|w| {
                pick -= w;
                pick < 0.0
            })
            .unwrap_or(PARTS.len() - 1);
        let (c, a) = PARTS[k];
        let u = random_unit_vector(&mut rng);
        let p = Vector3::new(c[0] + a[0] * u.x, c[1] + a[1] * u.y, c[2] + a[2] * u.z);
        if (0..PARTS.len()).all(|j| j == k || !inside(&p, j)) {
            out.push(p);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::pcr::registration_residual;
    use crate::estimator::pnp::reprojection_error;
    use crate::geometry::{procrustes, sampson_error, EssentialMatrix};

    #[test]
    fn noiseless_relpose_is_consistent() {
        let (pairs, gt) = gen_relpose(&SceneConfig::new(500, 0.0, 0.0), 1).unwrap();
        let e = EssentialMatrix::from_pose(&gt.pose).unwrap();
        assert!((gt.pose.translation.norm() - 1.0).abs() < 1e-12);
        for p in &pairs {
            assert!(sampson_error(&p.x1, &p.x2, &e) < 1e-12);
            assert!(p.x1.amax() <= 1.0 && p.x2.amax() <= 1.0);
        }
    }

    #[test]
    fn exact_outlier_counts() {
        let (_, gt) = gen_relpose(&SceneConfig::new(10_000, 0.002, 0.65), 2).unwrap();
        assert_eq!(gt.inlier_count(), 3500);
        let (_, gt) = gen_pnp(&SceneConfig::new(1000, 0.005, 0.92), 3).unwrap();
        assert_eq!(gt.inlier_count(), 80);
        let (_, gt) = gen_pcr(&SceneConfig::new(20_000, 0.01, 0.99), 4).unwrap();
        assert_eq!(gt.inlier_count(), 200);
    }

    #[test]
    fn noiseless_pnp_reprojects_exactly() {
        let (pairs, gt) = gen_pnp(&SceneConfig::new(500, 0.0, 0.0), 5).unwrap();
        for p in &pairs {
            assert!(reprojection_error(&gt.pose, p) < 1e-12);
            assert!(gt.pose.apply(&p.world).z > 0.1);
        }
    }

    #[test]
    fn pcr_scene_construction() {
        let (pairs, gt) = gen_pcr(&SceneConfig::new(2000, 0.0, 0.5), 6).unwrap();
        let center = gt.pose.apply(&Vector3::repeat(0.5));
        for (p, &inlier) in pairs.iter().zip(&gt.inlier_mask) {
            if inlier {
                assert!(registration_residual(&gt.pose, p) < 1e-12);
            } else {
                assert!((p.target - center).norm() <= 3f64.sqrt() / 2.0 + 1e-12);
            }
        }
        let inl: Vec<_> = pairs.iter().zip(&gt.inlier_mask).filter(|(_, &m)| m).map(|(p, _)| *p).collect();
        let est = procrustes(&[inl[0].source, inl[1].source, inl[2].source], &[inl[0].target, inl[1].target, inl[2].target]).unwrap();
        assert!((est.rotation.matrix() - gt.pose.rotation.matrix()).norm() < 1e-9);
    }

    #[test]
    fn corfree_counts() {
        let cloud = surface_cloud(1000, 7);
        let cfg = CorfreeConfig { points_per_cloud: 500, overlap: 0.5, sigma: 0.01 };
        let (pairs, gt) = gen_corfree(&cloud, &cfg, 1).unwrap();
        assert_eq!(pairs.len(), 250_000);
        assert_eq!(gt.inlier_count(), 250);
        let cfg = CorfreeConfig { points_per_cloud: 200, ..cfg };
        let (pairs, gt) = gen_corfree(&cloud, &cfg, 2).unwrap();
        assert_eq!(pairs.len(), 40_000);
        assert_eq!(gt.inlier_count(), 100);
        for (id, &inlier) in gt.inlier_mask.iter().enumerate() {
            if inlier {
                assert!(registration_residual(&gt.pose, &pairs.get(id)) < 0.1);
            }
        }
        assert!(gen_corfree(&cloud[..500], &CorfreeConfig::default(), 1).is_err());
    }

    #[test]
    fn corfree_full_overlap_identity() {
        let cloud = surface_cloud(50, 8);
        let cfg = CorfreeConfig { points_per_cloud: 50, overlap: 1.0, sigma: 0.0 };
        let (pairs, gt) = gen_corfree(&cloud, &cfg, 3).unwrap();
        // Each source point has exactly one exact partner.
        for i in 0..50 {
            let row = &gt.inlier_mask[i * 50..(i + 1) * 50];
            assert_eq!(row.iter().filter(|&&b| b).count(), 1);
            let j = row.iter().position(|&b| b).unwrap();
            assert!(registration_residual(&gt.pose, &pairs.get(i * 50 + j)) < 1e-12);
        }
    }

    #[test]
    fn lazy_indexing_is_a_bijection() {
        let pairs = AllToAll {
            source: vec![Vector3::zeros(); 7],
            target: vec![Vector3::zeros(); 5],
        };
        let mut seen = vec![false; 35];
        for id in 0..35 {
            let (i, j) = pairs.pair_indices(id);
            assert!(i < 7 && j < 5);
            assert!(!seen[i * 5 + j]);
            seen[i * 5 + j] = true;
        }
    }

    #[test]
    fn unit_cube_fit() {
        let cloud = fit_unit_cube(&surface_cloud(500, 9));
        let hi = cloud.iter().fold(0.0f64, |m, p| m.max(p.max()));
        let lo = cloud.iter().fold(1.0f64, |m, p| m.min(p.min()));
        assert!(lo >= 0.0 && lo < 1e-12);
        assert!((hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generators_are_deterministic() {
        let cfg = SceneConfig::new(100, 0.01, 0.3);
        assert_eq!(gen_relpose(&cfg, 5).unwrap(), gen_relpose(&cfg, 5).unwrap());
        assert_ne!(gen_relpose(&cfg, 5).unwrap().1, gen_relpose(&cfg, 6).unwrap().1);
        assert!(gen_pcr(&SceneConfig::new(100, 0.0, 1.0), 1).is_err());
    }
}

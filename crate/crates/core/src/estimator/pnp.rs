//! Camera pose from 3D-2D correspondences.
//!
//! P3P in Grunert's formulation: with bearings `f_i` and depths `s_i`, write
//! `s2 = u s1`, `s3 = v s1`. The three law-of-cosines equations reduce to
//! `u = N(v) / D(v)` and a quartic in `v`; each positive root gives the three
//! camera-frame points, and the pose follows from a rigid fit.

use nalgebra::linalg::Schur;
use nalgebra::{Matrix4, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{ransac, CoreEstimator, EstimatorOutput, MinimalSolver, Model, RansacConfig};
use crate::error::Result;
use crate::geometry::{procrustes, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair3D2D {
    pub world: Vector3<f64>,
    /// Normalized image point.
    pub image: Vector2<f64>,
}

impl Pair3D2D {
    pub fn new(world: Vector3<f64>, image: Vector2<f64>) -> Self {
        Self { world, image }
    }
}

/// Reprojection distance in the normalized image plane; `+inf` for points
/// on or behind the camera.
pub fn reprojection_error(pose: &RigidTransform, pair: &Pair3D2D) -> f64 {
    let c = pose.apply(&pair.world);
    if c.z <= 0.0 {
        return f64::INFINITY;
    }
    (c.xy() / c.z - pair.image).norm()
}

// Polynomials in ascending powers.
fn pmul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn padd(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

fn pscale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

fn peval(a: &[f64], x: f64) -> f64 {
    a.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots of a polynomial of degree at most 4 (ascending coefficients).
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut c: Vec<f64> = coeffs.iter().map(|x| x / scale).collect();
    while c.len() > 1 && c.last().unwrap().abs() < 1e-12 {
        c.pop();
    }
    let degree = c.len() - 1;
    let roots: Vec<f64> = match degree {
        0 => Vec::new(),
        1 => vec![-c[0] / c[1]],
        _ => {
            let lead = c[degree];
            let mut companion = Matrix4::<f64>::zeros();
            for i in 0..degree {
                companion[(0, i)] = -c[degree - 1 - i] / lead;
                if i + 1 < degree {
                    companion[(i + 1, i)] = 1.0;
                }
            }
            let m = companion.view((0, 0), (degree, degree)).clone_owned();
            if m.iter().any(|v| !v.is_finite()) {
                return Vec::new();
            }
            let Some(schur) = Schur::try_new(m, f64::EPSILON, 1000) else {
                return Vec::new();
            };
            schur
                .complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
                .map(|z| z.re)
                .collect()
        }
    };
    let derivative: Vec<f64> = c.iter().enumerate().skip(1).map(|(i, x)| i as f64 * x).collect();
    roots
        .into_iter()
        .map(|mut x| {
            for _ in 0..4 {
                let d = peval(&derivative, x);
                if d.abs() < 1e-300 {
                    break;
                }
                let step = peval(&c, x) / d;
                x -= step;
                if step.abs() < 1e-15 * (1.0 + x.abs()) {
                    break;
                }
            }
            x
        })
        .collect()
}

/// Camera poses (world to camera, at most four) consistent with three
/// correspondences. Collinear or duplicated world points return nothing.
pub fn p3p_solve(pairs: &[Pair3D2D; 3]) -> Vec<RigidTransform> {
    let [p1, p2, p3] = [pairs[0].world, pairs[1].world, pairs[2].world];
    let extent = (p2 - p1).norm().max((p3 - p1).norm()).max((p3 - p2).norm());
    if extent == 0.0 || (p2 - p1).cross(&(p3 - p1)).norm() < 1e-10 * extent * extent {
        return Vec::new();
    }
    let f: [Vector3<f64>; 3] =
        std::array::from_fn(|i| Vector3::new(pairs[i].image.x, pairs[i].image.y, 1.0).normalize());
    let (c12, c13, c23) = (f[0].dot(&f[1]), f[0].dot(&f[2]), f[1].dot(&f[2]));
    let d12 = (p1 - p2).norm_squared();
    let d13 = (p1 - p3).norm_squared();
    let d23 = (p2 - p3).norm_squared();
    let (k1, k2) = (d12 / d13, d23 / d13);

    let g = [1.0, -2.0 * c13, 1.0];
    let n = padd(&[1.0, 0.0, -1.0], &pscale(&g, k2 - k1));
    let d = [2.0 * c12, -2.0 * c23];
    let quartic = padd(
        &padd(&pmul(&n, &n), &pscale(&pmul(&n, &d), -2.0 * c12)),
        &pmul(&padd(&[1.0], &pscale(&g, -k1)), &pmul(&d, &d)),
    );

    let world = [p1, p2, p3];
    let mut out: Vec<RigidTransform> = Vec::new();
    for v in real_roots(&quartic) {
        if !(v > 0.0) {
            continue;
        }
        let dv = peval(&d, v);
        if dv.abs() < 1e-12 {
            continue;
        }
        let u = peval(&n, v) / dv;
        let gv = peval(&g, v);
        if !(u > 0.0) || !(gv > 0.0) {
            continue;
        }
        let s1 = (d13 / gv).sqrt();
        let camera = [f[0] * s1, f[1] * (u * s1), f[2] * (v * s1)];
        let Ok(pose) = procrustes(&world, &camera) else { continue };
        let duplicate = out.iter().any(|o| {
            (o.rotation.matrix() - pose.rotation.matrix()).norm() < 1e-9
                && (o.translation - pose.translation).norm() < 1e-9 * (1.0 + pose.translation.norm())
        });
        if !duplicate {
            out.push(pose);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct P3P;

impl MinimalSolver for P3P {
    type Datum = Pair3D2D;
    type Hypothesis = RigidTransform;

    fn sample_size(&self) -> usize {
        3
    }

    fn solve(&self, data: &[Pair3D2D], minimal: &[usize], out: &mut Vec<RigidTransform>) {
        let pairs = [data[minimal[0]], data[minimal[1]], data[minimal[2]]];
        out.extend(p3p_solve(&pairs));
    }

    fn residual(&self, pose: &RigidTransform, d: &Pair3D2D) -> f64 {
        reprojection_error(pose, d)
    }
}

pub fn estimate_pnp(sample: &[Pair3D2D], config: &RansacConfig) -> Result<EstimatorOutput<Model>> {
    Ok(ransac(sample, &P3P, config)?.map_model(Model::Rigid))
}

/// RANSAC + P3P with a reprojection threshold of `5 sigma` (unsquared).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnpEstimator {
    pub iterations: usize,
    pub inlier_threshold: f64,
}

impl PnpEstimator {
    pub fn for_noise(sigma: f64, iterations: usize) -> Self {
        Self {
            iterations,
            inlier_threshold: 5.0 * sigma,
        }
    }
}

impl CoreEstimator for PnpEstimator {
    type Datum = Pair3D2D;

    fn name(&self) -> &'static str {
        "pnp"
    }

    fn minimal_size(&self) -> usize {
        3
    }

    fn inlier_threshold(&self) -> f64 {
        self.inlier_threshold
    }

    fn estimate(
        &self,
        sample: &[Pair3D2D],
        seed: u64,
        budget_scale: usize,
    ) -> Result<EstimatorOutput<Model>> {
        let config = RansacConfig {
            iterations: self.iterations * budget_scale.max(1),
            inlier_threshold: self.inlier_threshold,
            seed,
        };
        estimate_pnp(sample, &config)
    }

    fn residual(&self, model: &Model, d: &Pair3D2D) -> f64 {
        reprojection_error(model.pose(), d)
    }
}

//! Relative pose from 2D-2D correspondences in normalized image coordinates.
//!
//! The five-point solver follows the action-matrix formulation: the 5x9
//! epipolar constraint matrix has a 4D null space `E = xX + yY + zZ + W`;
//! the rank and trace constraints on `E` give ten cubics in `(x, y, z)`,
//! which after Gauss-Jordan elimination yield a 10x10 action matrix for
//! multiplication by `x`. Its real eigenvectors are the solutions.

use nalgebra::linalg::Schur;
use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use super::{ransac, CoreEstimator, EstimatorOutput, MinimalSolver, Model, RansacConfig};
use crate::error::{Error, Result};
use crate::geometry::{decompose_essential, sampson_error, EssentialMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pair2D2D {
    pub x1: Vector2<f64>,
    pub x2: Vector2<f64>,
}

impl Pair2D2D {
    pub fn new(x1: Vector2<f64>, x2: Vector2<f64>) -> Self {
        Self { x1, x2 }
    }
}

// Monomials in (x, y, z) up to degree 3, degree-major:
// x^3 x^2y xy^2 y^3 x^2z xyz y^2z xz^2 yz^2 z^3 | x^2 xy y^2 xz yz z^2 x y z 1
const MAX_QR_SWEEPS: usize = 1000;

const MONOMIALS: [[u8; 3]; 20] = [
    [3, 0, 0],
    [2, 1, 0],
    [1, 2, 0],
    [0, 3, 0],
    [2, 0, 1],
    [1, 1, 1],
    [0, 2, 1],
    [1, 0, 2],
    [0, 1, 2],
    [0, 0, 3],
    [2, 0, 0],
    [1, 1, 0],
    [0, 2, 0],
    [1, 0, 1],
    [0, 1, 1],
    [0, 0, 2],
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [0, 0, 0],
];

const fn monomial_index(e: [u8; 3]) -> usize {
    let mut i = 0;
    while i < 20 {
        let m = MONOMIALS[i];
        if m[0] == e[0] && m[1] == e[1] && m[2] == e[2] {
            return i;
        }
        i += 1;
    }
    panic!("monomial degree above 3");
}

/// Polynomial of degree <= 3 in (x, y, z).
#[derive(Clone, Copy)]
struct Poly([f64; 20]);

impl Poly {
    fn zero() -> Self {
        Poly([0.0; 20])
    }

    fn linear(x: f64, y: f64, z: f64, w: f64) -> Self {
        let mut p = Self::zero();
        p.0[16] = x;
        p.0[17] = y;
        p.0[18] = z;
        p.0[19] = w;
        p
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (i, &a) in self.0.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.0.iter().enumerate() {
                if b == 0.0 {
                    continue;
                }
                let (ei, ej) = (MONOMIALS[i], MONOMIALS[j]);
                let e = [ei[0] + ej[0], ei[1] + ej[1], ei[2] + ej[2]];
                out.0[monomial_index(e)] += a * b;
            }
        }
        out
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = *self;
        out.0.iter_mut().zip(other.0).for_each(|(a, b)| *a += b);
        out
    }

    fn scale(&self, s: f64) -> Poly {
        let mut out = *self;
        out.0.iter_mut().for_each(|a| *a *= s);
        out
    }
}

type Mat3Poly = [[Poly; 3]; 3];

fn mat_mul(a: &Mat3Poly, b: &Mat3Poly) -> Mat3Poly {
    let mut out = [[Poly::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = Poly::zero();
            for k in 0..3 {
                acc = acc.add(&a[i][k].mul(&b[k][j]));
            }
            out[i][j] = acc;
        }
    }
    out
}

/// The ten cubic constraints `det(E) = 0` and `2 E E^T E - tr(E E^T) E = 0`.
fn constraint_matrix(basis: &[SVector<f64, 9>; 4]) -> SMatrix<f64, 10, 20> {
    let mut e = [[Poly::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            let k = 3 * r + c;
            e[r][c] = Poly::linear(basis[0][k], basis[1][k], basis[2][k], basis[3][k]);
        }
    }
    let mut et = e;
    for r in 0..3 {
        for c in 0..3 {
            et[r][c] = e[c][r];
        }
    }
    let eet = mat_mul(&e, &et);
    let trace = eet[0][0].add(&eet[1][1]).add(&eet[2][2]);
    let eete = mat_mul(&eet, &e);

    let mut rows = SMatrix::<f64, 10, 20>::zeros();
    let det = e[0][0]
        .mul(&e[1][1].mul(&e[2][2]).add(&e[1][2].mul(&e[2][1]).scale(-1.0)))
        .add(&e[0][1].mul(&e[1][0].mul(&e[2][2]).add(&e[1][2].mul(&e[2][0]).scale(-1.0))).scale(-1.0))
        .add(&e[0][2].mul(&e[1][0].mul(&e[2][1]).add(&e[1][1].mul(&e[2][0]).scale(-1.0))));
    for (c, v) in det.0.iter().enumerate() {
        rows[(0, c)] = *v;
    }
    for r in 0..3 {
        for c in 0..3 {
            let p = eete[r][c].scale(2.0).add(&trace.mul(&e[r][c]).scale(-1.0));
            for (k, v) in p.0.iter().enumerate() {
                rows[(1 + 3 * r + c, k)] = *v;
            }
        }
    }
    rows
}

/// Gauss-Jordan on the cubic block; `None` if it is singular.
fn eliminate(mut a: SMatrix<f64, 10, 20>) -> Option<SMatrix<f64, 10, 10>> {
    for col in 0..10 {
        let (pivot, value) = (col..10)
            .map(|r| (r, a[(r, col)].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if value < 1e-12 {
            return None;
        }
        a.swap_rows(col, pivot);
        let p = a[(col, col)];
        for c in 0..20 {
            a[(col, c)] /= p;
        }
        for r in 0..10 {
            if r != col {
                let f = a[(r, col)];
                if f != 0.0 {
                    for c in 0..20 {
                        a[(r, c)] -= f * a[(col, c)];
                    }
                }
            }
        }
    }
    Some(a.fixed_columns::<10>(10).into_owned())
}

/// All essential matrices (at most ten) consistent with five correspondences.
/// Degenerate configurations return an empty list.
pub fn five_point_solve(pairs: &[Pair2D2D; 5]) -> Vec<EssentialMatrix> {
    let mut q = SMatrix::<f64, 9, 9>::zeros();
    for (r, p) in pairs.iter().enumerate() {
        let a = [p.x1.x, p.x1.y, 1.0];
        let b = [p.x2.x, p.x2.y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                q[(r, 3 * i + j)] = b[i] * a[j];
            }
        }
    }
    let svd = q.svd(false, true);
    let Some(v_t) = svd.v_t else {
        return Vec::new();
    };
    // Rows of v_t come with singular values in descending order; the last
    // four span the null space of the five constraints.
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv_max = svd.singular_values[order[0]];
    if !(sv_max > 0.0) || svd.singular_values[order[4]] < 1e-10 * sv_max {
        return Vec::new();
    }
    let basis: [SVector<f64, 9>; 4] =
        std::array::from_fn(|k| v_t.row(order[5 + k]).transpose().into_owned());

    let Some(b) = eliminate(constraint_matrix(&basis)) else {
        return Vec::new();
    };
    let mut action = SMatrix::<f64, 10, 10>::zeros();
    // Leading monomials x * {x^2, xy, y^2, xz, yz, z^2} are rows 0,1,2,4,5,7.
    for (i, &row) in [0usize, 1, 2, 4, 5, 7].iter().enumerate() {
        for c in 0..10 {
            action[(i, c)] = -b[(row, c)];
        }
    }
    // x * {x, y, z, 1} = {x^2, xy, xz, x}: basis positions 0, 1, 3, 6.
    action[(6, 0)] = 1.0;
    action[(7, 1)] = 1.0;
    action[(8, 3)] = 1.0;
    action[(9, 6)] = 1.0;

    if action.iter().any(|v| !v.is_finite()) {
        return Vec::new();
    }
    // The QR iteration can stall on badly conditioned inputs; give up then.
    let Some(schur) = Schur::try_new(action, f64::EPSILON, MAX_QR_SWEEPS) else {
        return Vec::new();
    };
    let eigenvalues = schur.complex_eigenvalues();
    let mut out: Vec<EssentialMatrix> = Vec::new();
    for lambda in eigenvalues.iter() {
        if lambda.im.abs() > 1e-8 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let shifted = action - SMatrix::<f64, 10, 10>::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let Some(vt) = svd.v_t else { continue };
        let (min_idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let v = vt.row(min_idx);
        if v[9].abs() < 1e-12 {
            continue;
        }
        let (x, y, z) = (v[6] / v[9], v[7] / v[9], v[8] / v[9]);
        let e = basis[0] * x + basis[1] * y + basis[2] * z + basis[3];
        let m = nalgebra::Matrix3::from_row_slice(e.as_slice());
        if let Some(e) = EssentialMatrix::new(m) {
            if out.iter().all(|o| o.distance(&e) > 1e-9) {
                out.push(e);
            }
        }
    }
    out
}

/// Five-point solver with Sampson residuals, for use inside [`ransac`].
#[derive(Debug, Clone, Copy, Default)]
pub struct FivePoint;

impl MinimalSolver for FivePoint {
    type Datum = Pair2D2D;
    type Hypothesis = EssentialMatrix;

    fn sample_size(&self) -> usize {
        5
    }

    fn solve(&self, data: &[Pair2D2D], minimal: &[usize], out: &mut Vec<EssentialMatrix>) {
        let pairs: [Pair2D2D; 5] = std::array::from_fn(|i| data[minimal[i]]);
        out.extend(five_point_solve(&pairs));
    }

    fn residual(&self, e: &EssentialMatrix, d: &Pair2D2D) -> f64 {
        sampson_error(&d.x1, &d.x2, e)
    }
}

/// RANSAC + five-point + Sampson test. The threshold applies to the squared
/// Sampson error, so `(5 sigma)^2` for image noise `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelPoseEstimator {
    pub iterations: usize,
    pub inlier_threshold: f64,
}

impl RelPoseEstimator {
    pub fn for_noise(sigma: f64, iterations: usize) -> Self {
        Self {
            iterations,
            inlier_threshold: (5.0 * sigma).powi(2),
        }
    }
}

pub fn estimate_relpose(
    sample: &[Pair2D2D],
    config: &RansacConfig,
) -> Result<EstimatorOutput<Model>> {
    let out = ransac(sample, &FivePoint, config)?;
    let pairs: Vec<_> = out
        .inlier_indices
        .iter()
        .map(|&i| (sample[i].x1, sample[i].x2))
        .collect();
    let decomposition = decompose_essential(&out.model, &pairs)
        .map_err(|e| Error::EstimationFailed(e.to_string()))?;
    Ok(out.map_model(|essential| Model::Relative {
        essential,
        pose: decomposition.pose,
    }))
}

impl CoreEstimator for RelPoseEstimator {
    type Datum = Pair2D2D;

    fn name(&self) -> &'static str {
        "relpose"
    }

    fn minimal_size(&self) -> usize {
        5
    }

    fn inlier_threshold(&self) -> f64 {
        self.inlier_threshold
    }

    fn estimate(
        &self,
        sample: &[Pair2D2D],
        seed: u64,
        budget_scale: usize,
    ) -> Result<EstimatorOutput<Model>> {
        let config = RansacConfig {
            iterations: self.iterations * budget_scale.max(1),
            inlier_threshold: self.inlier_threshold,
            seed,
        };
        estimate_relpose(sample, &config)
    }

    fn residual(&self, model: &Model, d: &Pair2D2D) -> f64 {
        match model {
            Model::Relative { essential, .. } => sampson_error(&d.x1, &d.x2, essential),
            Model::Rigid(pose) => EssentialMatrix::from_pose(pose)
                .map_or(f64::INFINITY, |e| sampson_error(&d.x1, &d.x2, &e)),
        }
    }
}

#![allow(dead_code)]

use lpvlfr::lfr::{DeltaStructure, LfrPlant, WellPosedFactors};
use lpvlfr::linalg::Mat;
use nalgebra::DMatrix;
use rand::Rng;

pub fn random_mat<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

/// Spectral radius from the full eigendecomposition.
pub fn eig_radius(m: &Mat) -> f64 {
    to_na(m)
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

pub fn random_factors<R: Rng>(rng: &mut R, n_w: usize, scale: f64) -> WellPosedFactors {
    let da = (0..WellPosedFactors::lower_len(n_w))
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    let db = (0..WellPosedFactors::upper_len(n_w))
        .map(|_| rng.gen_range(-scale..scale))
        .collect();
    let dd = (0..n_w).map(|_| rng.gen_range(-1.5..1.5)).collect();
    WellPosedFactors::new(n_w, da, db, dd, 1e-3).unwrap()
}

pub fn random_eta<R: Rng>(rng: &mut R, n_w: usize) -> Vec<usize> {
    let mut eta = Vec::new();
    let mut left = n_w;
    while left > 0 {
        let k = rng.gen_range(1..=left);
        eta.push(k);
        left -= k;
    }
    eta
}

/// Random plant with a well-posed `D_zw` (rational) or `D_zw = 0` (affine)
/// and a mildly contractive state matrix.
pub fn random_plant<R: Rng>(
    rng: &mut R,
    n_x: usize,
    n_u: usize,
    n_y: usize,
    eta: Vec<usize>,
    rational: bool,
) -> LfrPlant {
    let delta = DeltaStructure::new(eta).unwrap();
    let n_w = delta.n_w();
    let mut plant = LfrPlant::zeros(n_x, n_u, n_y, delta);
    plant.a_x = random_mat(rng, n_x, n_x, 0.8 / n_x as f64);
    plant.b_w = random_mat(rng, n_x, n_w, 0.3);
    plant.b_u = random_mat(rng, n_x, n_u, 1.0);
    plant.c_z = random_mat(rng, n_w, n_x, 1.0);
    plant.d_zu = random_mat(rng, n_w, n_u, 1.0);
    plant.c_y = random_mat(rng, n_y, n_x, 1.0);
    plant.d_yw = random_mat(rng, n_y, n_w, 1.0);
    plant.d_yu = random_mat(rng, n_y, n_u, 1.0);
    if rational {
        plant.d_zw = random_factors(rng, n_w, 1.0).build_dzw().unwrap();
    }
    plant
}

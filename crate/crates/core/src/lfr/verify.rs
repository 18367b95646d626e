use rand::Rng;
use serde::Serialize;

use super::{loop_matrix, LfrError, LfrPlant, SchedulingBox};
use crate::linalg::{det, norm2, spectral_radius};

/// `|det|` at or below this counts as a singular sample.
pub const SINGULAR_DET_TOL: f64 = 1e-12;

const BISECTION_STEPS: usize = 60;

/// Outcome of [`is_well_posed`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WellPosednessReport {
    /// `σ_max(D_zw)`.
    pub sigma_max: f64,
    /// `σ_max(D_zw) < 1`: small-gain certificate, sufficient for any
    /// contraction Δ.
    pub small_gain_certified: bool,
    /// `ρ(D_zw)`.
    pub spectral_radius: f64,
    /// `ρ(D_zw) < 1`.
    pub spectral_radius_below_one: bool,
    /// Minimum of `|det(I − D_zw Δ(p))|` over all samples.
    pub min_abs_det: f64,
    /// Scheduling point attaining `min_abs_det`.
    pub argmin_p: Vec<f64>,
    /// Some samples had a determinant of the opposite sign.
    pub sign_change: bool,
    /// No singular sample and no sign change.
    pub empirical_ok: bool,
    /// Singular (or near-singular) scheduling point when the empirical
    /// check fails.
    pub counterexample: Option<Vec<f64>>,
    pub samples: usize,
}

fn loop_det(plant: &LfrPlant, p: &[f64], diag: &mut [f64]) -> f64 {
    plant.delta.expand_into(p, diag);
    det(&loop_matrix(plant, diag)).unwrap_or(0.0)
}

/// Checks invertibility of `I − D_zw Δ(p)` over `bbox`.
///
/// Samples a tensor grid with `grid_per_dim` points per axis (endpoints
/// included) plus `random_samples` uniform draws. Since the determinant is
/// continuous on the connected box, a sign change between two samples
/// proves a singular point exists; it is located by bisection along the
/// segment joining them and reported as the counterexample.
pub fn is_well_posed<R: Rng + ?Sized>(
    plant: &LfrPlant,
    bbox: &SchedulingBox,
    grid_per_dim: usize,
    random_samples: usize,
    rng: &mut R,
) -> Result<WellPosednessReport, LfrError> {
    plant.validate()?;
    let n_p = plant.n_p();
    if bbox.dim() != n_p {
        return Err(LfrError::DimensionMismatch(format!(
            "box has dimension {}, plant has n_p = {n_p}",
            bbox.dim()
        )));
    }
    if grid_per_dim < 2 {
        return Err(LfrError::InvalidStructure(
            "grid_per_dim must be >= 2".into(),
        ));
    }

    let sigma_max = norm2(&plant.d_zw);
    let rho = if plant.d_zw.rows() == 0 {
        0.0
    } else {
        spectral_radius(&plant.d_zw).value
    };

    let mut diag = vec![0.0; plant.delta.n_w()];
    let mut samples = 0usize;
    let mut min_abs = f64::INFINITY;
    let mut argmin = vec![0.0; n_p];
    let mut reference: Option<(Vec<f64>, f64)> = None;
    let mut opposite: Option<(Vec<f64>, f64)> = None;

    let mut visit = |p: &[f64]| {
        let d = loop_det(plant, p, &mut diag);
        samples += 1;
        if d.abs() < min_abs {
            min_abs = d.abs();
            argmin.copy_from_slice(p);
        }
        match &reference {
            None => reference = Some((p.to_vec(), d)),
            Some((_, d0)) => {
                if opposite.is_none() && d != 0.0 && *d0 != 0.0 && d.signum() != d0.signum() {
                    opposite = Some((p.to_vec(), d));
                }
            }
        }
    };

    let total = grid_per_dim.checked_pow(n_p as u32).unwrap_or(usize::MAX);
    let mut idx = vec![0usize; n_p];
    let mut p = vec![0.0; n_p];
    for _ in 0..total {
        for i in 0..n_p {
            let t = idx[i] as f64 / (grid_per_dim - 1) as f64;
            p[i] = bbox.p_min()[i] + t * (bbox.p_max()[i] - bbox.p_min()[i]);
        }
        visit(&p);
        for i in 0..n_p {
            idx[i] += 1;
            if idx[i] < grid_per_dim {
                break;
            }
            idx[i] = 0;
        }
    }
    for _ in 0..random_samples {
        for i in 0..n_p {
            p[i] = rng.gen_range(bbox.p_min()[i]..=bbox.p_max()[i]);
        }
        visit(&p);
    }

    let sign_change = opposite.is_some();
    let counterexample = if min_abs <= SINGULAR_DET_TOL {
        Some(argmin.clone())
    } else if let (Some((pa, da)), Some((pb, _))) = (&reference, &opposite) {
        Some(bisect_root(plant, pa, *da, pb))
    } else {
        None
    };
    let empirical_ok = counterexample.is_none();
    Ok(WellPosednessReport {
        sigma_max,
        small_gain_certified: sigma_max < 1.0,
        spectral_radius: rho,
        spectral_radius_below_one: rho < 1.0,
        min_abs_det: min_abs,
        argmin_p: argmin,
        sign_change,
        empirical_ok,
        counterexample,
        samples,
    })
}

fn bisect_root(plant: &LfrPlant, pa: &[f64], da: f64, pb: &[f64]) -> Vec<f64> {
    let mut diag = vec![0.0; plant.delta.n_w()];
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let at = |t: f64| -> Vec<f64> { pa.iter().zip(pb).map(|(a, b)| a + t * (b - a)).collect() };
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let d = loop_det(plant, &at(mid), &mut diag);
        if d.abs() <= SINGULAR_DET_TOL {
            return at(mid);
        }
        if d.signum() == da.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

use serde::{Deserialize, Serialize};

use super::LfrError;
use crate::linalg::Mat;

/// Repetition pattern of the diagonal scheduling block
/// `Δ(p) = diag(p₁ I_{η₁}, …, p_{n_p} I_{η_{n_p}})`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DeltaStructure {
    eta: Vec<usize>,
}

impl DeltaStructure {
    /// Every repetition count must be at least one. An empty `eta` is the
    /// LTI case (no latent channels).
    pub fn new(eta: Vec<usize>) -> Result<Self, LfrError> {
        if let Some(i) = eta.iter().position(|&e| e == 0) {
            return Err(LfrError::InvalidStructure(format!(
                "eta[{i}] is zero; every repetition count must be >= 1"
            )));
        }
        Ok(Self { eta })
    }

    /// One repetition per scheduling variable.
    pub fn ones(n_p: usize) -> Self {
        Self { eta: vec![1; n_p] }
    }

    pub fn eta(&self) -> &[usize] {
        &self.eta
    }

    pub fn n_p(&self) -> usize {
        self.eta.len()
    }

    pub fn n_w(&self) -> usize {
        self.eta.iter().sum()
    }

    /// Diagonal of `Δ(p)` written into `out` (length `n_w`).
    #[inline]
    pub fn expand_into(&self, p: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for (&pi, &e) in p.iter().zip(&self.eta) {
            out[k..k + e].fill(pi);
            k += e;
        }
    }

    /// Diagonal of `Δ(p)`.
    pub fn expand(&self, p: &[f64]) -> Result<Vec<f64>, LfrError> {
        self.check_p(p)?;
        let mut out = vec![0.0; self.n_w()];
        self.expand_into(p, &mut out);
        Ok(out)
    }

    /// Sums a latent-channel vector back onto scheduling variables; the
    /// adjoint of [`expand_into`](Self::expand_into).
    #[inline]
    pub fn reduce_add(&self, latent: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for (o, &e) in out.iter_mut().zip(&self.eta) {
            *o += latent[k..k + e].iter().sum::<f64>();
            k += e;
        }
    }

    /// `Δ(p)` as a dense matrix.
    pub fn delta_of_p(&self, p: &[f64]) -> Result<Mat, LfrError> {
        Ok(Mat::from_diag(&self.expand(p)?))
    }

    fn check_p(&self, p: &[f64]) -> Result<(), LfrError> {
        if p.len() != self.n_p() {
            return Err(LfrError::DimensionMismatch(format!(
                "scheduling vector has length {}, expected n_p = {}",
                p.len(),
                self.n_p()
            )));
        }
        Ok(())
    }
}

impl TryFrom<Vec<usize>> for DeltaStructure {
    type Error = LfrError;

    fn try_from(eta: Vec<usize>) -> Result<Self, Self::Error> {
        Self::new(eta)
    }
}

impl From<DeltaStructure> for Vec<usize> {
    fn from(d: DeltaStructure) -> Self {
        d.eta
    }
}

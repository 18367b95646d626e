use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::linalg::Mat;

/// Sampled input/output record.
///
/// `u` is `N×n_u`, `d` is `N×n_d` (possibly zero columns), `y` is `N×n_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub u: Mat,
    pub d: Mat,
    pub y: Mat,
    pub meta: DatasetMeta,
}

/// Sidecar metadata. `y_noiseless` is only known for synthetic data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(rename = "T_s")]
    pub ts: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub sigma_e2: Option<f64>,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_noiseless: Option<Mat>,
}

impl DatasetMeta {
    pub fn with_ts(ts: f64) -> Self {
        Self {
            ts,
            seed: None,
            sigma_e2: None,
            snr_db: None,
            y_noiseless: None,
        }
    }
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        u: Mat,
        d: Mat,
        y: Mat,
        meta: DatasetMeta,
    ) -> Result<Self, BenchError> {
        let ds = Self {
            name: name.into(),
            u,
            d,
            y,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let n = self.len();
        if self.d.rows() != n || self.y.rows() != n {
            return Err(BenchError::Schema(format!(
                "channel lengths differ: u {}, d {}, y {}",
                self.u.rows(),
                self.d.rows(),
                self.y.rows()
            )));
        }
        if !(self.meta.ts > 0.0) {
            return Err(BenchError::Schema(format!(
                "sample period must be positive, got {}",
                self.meta.ts
            )));
        }
        if let Some(yn) = &self.meta.y_noiseless {
            if yn.shape() != self.y.shape() {
                return Err(BenchError::Schema(
                    "noiseless output shape differs from y".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.u.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_u(&self) -> usize {
        self.u.cols()
    }

    pub fn n_d(&self) -> usize {
        self.d.cols()
    }

    pub fn n_y(&self) -> usize {
        self.y.cols()
    }

    /// Fails unless the channel counts equal `(n_u, n_d, n_y)`.
    pub fn check_channels(&self, n_u: usize, n_d: usize, n_y: usize) -> Result<(), BenchError> {
        if (self.n_u(), self.n_d(), self.n_y()) != (n_u, n_d, n_y) {
            return Err(BenchError::Schema(format!(
                "dataset '{}' has (n_u, n_d, n_y) = ({}, {}, {}), expected ({n_u}, {n_d}, {n_y})",
                self.name,
                self.n_u(),
                self.n_d(),
                self.n_y()
            )));
        }
        Ok(())
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let cut = |m: &Mat| m.block(0, 0, n, m.cols());
        Dataset {
            name: self.name.clone(),
            u: cut(&self.u),
            d: cut(&self.d),
            y: cut(&self.y),
            meta: DatasetMeta {
                y_noiseless: self.meta.y_noiseless.as_ref().map(cut),
                ..self.meta.clone()
            },
        }
    }
}

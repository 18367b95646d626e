use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{multisine, BenchError, Dataset, DatasetMeta};
use crate::linalg::Mat;

/// Discrete-time nonlinear mass-spring-damper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsdParams {
    pub ts: f64,
    pub m: f64,
    pub k1: f64,
    pub k2: f64,
    pub d1: f64,
}

impl Default for MsdParams {
    fn default() -> Self {
        Self {
            ts: 0.1,
            m: 1.0,
            k1: 0.1,
            k2: 1.0,
            d1: 1.0,
        }
    }
}

/// One step of the forward-Euler MSD recursion. The output is `x[0]`.
pub fn msd_step(params: &MsdParams, x: [f64; 2], u: f64) -> [f64; 2] {
    let MsdParams { ts, m, k1, k2, d1 } = *params;
    let [x1, x2] = x;
    let force = u - 0.6 * x1 * u - k1 * x1 - k2 * x1 * x1 * x1 - d1 * x2;
    [x1 + ts * x2, x2 + ts / m * force]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn len(self) -> usize {
        match self {
            Split::Train | Split::Val => 6000,
            Split::Test => 30000,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(BenchError::Schema(format!("unknown split '{other}'"))),
        }
    }
}

/// How the output noise is sized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLevel {
    /// Fixed variance `σ_e²`.
    Variance(f64),
    /// Variance chosen per record as `var(y_noiseless) / 10^(snr/10)`.
    SnrDb(f64),
}

impl Default for NoiseLevel {
    fn default() -> Self {
        NoiseLevel::SnrDb(20.0)
    }
}

/// Nominal noise variance of the benchmark, available as an explicit option.
pub const NOMINAL_SIGMA_E2: f64 = 0.063;

/// Excitation and noise settings of the MSD benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsdProtocol {
    pub params: MsdParams,
    pub f_lo: f64,
    pub f_hi: f64,
    pub u_std: f64,
    pub noise: NoiseLevel,
}

impl Default for MsdProtocol {
    fn default() -> Self {
        Self {
            params: MsdParams::default(),
            f_lo: 1.0 / 6.0,
            f_hi: 5.0,
            u_std: 4.0,
            noise: NoiseLevel::default(),
        }
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

/// Simulates the MSD from rest; returns the noiseless output.
pub fn simulate_msd(params: &MsdParams, u: &[f64]) -> Result<Vec<f64>, BenchError> {
    let mut x = [0.0, 0.0];
    let mut y = Vec::with_capacity(u.len());
    for (k, &uk) in u.iter().enumerate() {
        y.push(x[0]);
        x = msd_step(params, x, uk);
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(BenchError::Diverged(k));
        }
    }
    Ok(y)
}

/// Generates one split with the default protocol.
pub fn generate_msd_dataset(split: Split, seed: u64) -> Result<Dataset, BenchError> {
    generate_msd_dataset_with(&MsdProtocol::default(), split, seed)
}

/// Excitations that drive the MSD unstable are re-drawn at most this often.
pub const MAX_REDRAWS: u64 = 32;

/// Generates one split. Each split draws from its own ChaCha stream of
/// `seed`, so train, validation and test excitations are independent.
///
/// Some phase realizations push the Euler-discretized system past its
/// stability region. Those are discarded and the phases re-drawn from the
/// next stream, so the result stays a deterministic function of the seed.
pub fn generate_msd_dataset_with(
    protocol: &MsdProtocol,
    split: Split,
    seed: u64,
) -> Result<Dataset, BenchError> {
    let n = split.len();
    let p = &protocol.params;
    let mut attempt = 0;
    let (u, y0, mut rng) = loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(split.stream() + 3 * attempt);
        let u = multisine(
            n,
            p.ts,
            protocol.f_lo,
            protocol.f_hi,
            protocol.u_std,
            &mut rng,
        )?;
        match simulate_msd(p, &u) {
            Ok(y0) => break (u, y0, rng),
            Err(BenchError::Diverged(k)) if attempt + 1 < MAX_REDRAWS => {
                log::info!(
                    "{} excitation for seed {seed} diverged at step {k}; re-drawing",
                    split.name()
                );
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let signal_var = variance(&y0);
    let sigma2 = match protocol.noise {
        NoiseLevel::Variance(v) => v,
        NoiseLevel::SnrDb(db) => signal_var / 10f64.powf(db / 10.0),
    };
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(BenchError::Schema(format!(
            "invalid noise variance {sigma2}"
        )));
    }
    let normal = Normal::new(0.0, sigma2.sqrt()).map_err(|e| BenchError::Schema(e.to_string()))?;
    let y: Vec<f64> = y0.iter().map(|v| v + normal.sample(&mut rng)).collect();
    let noise: Vec<f64> = y.iter().zip(&y0).map(|(a, b)| a - b).collect();
    let realized = variance(&noise);
    let snr_db = if realized > 0.0 {
        10.0 * (signal_var / realized).log10()
    } else {
        f64::INFINITY
    };
    let meta = DatasetMeta {
        ts: p.ts,
        seed: Some(seed),
        sigma_e2: Some(sigma2),
        snr_db: snr_db.is_finite().then_some(snr_db),
        y_noiseless: Some(Mat::column(&y0)),
    };
    Dataset::new(
        format!("nl-msd-{}", split.name()),
        Mat::column(&u),
        Mat::zeros(n, 0),
        Mat::column(&y),
        meta,
    )
}

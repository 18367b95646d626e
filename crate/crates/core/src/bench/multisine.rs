use std::f64::consts::PI;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::BenchError;

/// Indices `k` of the DFT grid `k / (N T_s)` lying in `[f_lo, f_hi]`,
/// excluding DC and the Nyquist bin.
pub fn band_bins(n: usize, ts: f64, f_lo: f64, f_hi: f64) -> std::ops::Range<usize> {
    let record = n as f64 * ts;
    // tolerance absorbs round-off in f * N * T_s for grid-aligned band edges
    let lo = ((f_lo * record) - 1e-9).ceil().max(1.0) as usize;
    let hi_inclusive = ((f_hi * record) + 1e-9).floor();
    let nyquist_excl = n.div_ceil(2);
    let hi = if hi_inclusive < 0.0 {
        0
    } else {
        (hi_inclusive as usize + 1).min(nyquist_excl)
    };
    lo..hi.max(lo)
}

/// Random-phase multisine with a flat amplitude spectrum on the DFT grid of
/// the full record, rescaled to standard deviation `target_std`.
///
/// The record holds an integer number of periods of every component, so the
/// signal is periodic and zero-mean, and its DFT vanishes outside the band.
pub fn multisine<R: Rng + ?Sized>(
    n: usize,
    ts: f64,
    f_lo: f64,
    f_hi: f64,
    target_std: f64,
    rng: &mut R,
) -> Result<Vec<f64>, BenchError> {
    let nyquist = 0.5 / ts;
    if !(ts > 0.0 && f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist && target_std > 0.0) {
        return Err(BenchError::InvalidBand(format!(
            "need 0 <= f_lo < f_hi <= 1/(2 T_s) = {nyquist}, T_s > 0 and std > 0; got [{f_lo}, {f_hi}], T_s = {ts}, std = {target_std}"
        )));
    }
    let bins = band_bins(n, ts, f_lo, f_hi);
    if bins.is_empty() {
        return Err(BenchError::EmptyBand { f_lo, f_hi });
    }
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for k in bins {
        let phase = rng.gen_range(0.0..2.0 * PI);
        let c = Complex64::from_polar(1.0, phase);
        spectrum[k] = c;
        spectrum[n - k] = c.conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut signal: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let mean = signal.iter().sum::<f64>() / n as f64;
    let std = (signal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = target_std / std;
    for v in &mut signal {
        *v = (*v - mean) * scale;
    }
    Ok(signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn std(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    /// Direct DFT magnitude at bin k.
    fn dft_mag(v: &[f64], k: usize) -> f64 {
        let n = v.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &x) in v.iter().enumerate() {
            let ang = -2.0 * PI * k as f64 * t as f64 / n;
            re += x * ang.cos();
            im += x * ang.sin();
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn single_component_is_a_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // N T_s = 10 s: grid spacing 0.1 Hz, only 0.3 Hz is in [0.25, 0.35]
        let s = multisine(100, 0.1, 0.25, 0.35, 2.0, &mut rng).unwrap();
        assert!((std(&s) - 2.0).abs() < 1e-12);
        // a single cosine of std 2 has amplitude 2*sqrt(2)
        let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak <= 2.0 * 2f64.sqrt() + 1e-12);
        assert!(dft_mag(&s, 3) > 1.0);
        for k in [0, 1, 2, 4, 10, 49] {
            assert!(dft_mag(&s, k) < 1e-9 * dft_mag(&s, 3));
        }
    }

    #[test]
    fn settings_of_the_benchmark() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = multisine(6000, 0.1, 1.0 / 6.0, 5.0, 4.0, &mut rng).unwrap();
        assert_eq!(s.len(), 6000);
        assert!((std(&s) - 4.0).abs() < 1e-9);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 1e-10 * 4.0);
        // 1/6 Hz is bin 100 on this grid
        assert_eq!(band_bins(6000, 0.1, 1.0 / 6.0, 5.0), 100..3000);
    }

    #[test]
    fn spectrum_vanishes_outside_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = multisine(512, 0.1, 1.0, 2.0, 1.0, &mut rng).unwrap();
        let bins = band_bins(512, 0.1, 1.0, 2.0);
        let peak = dft_mag(&s, bins.start);
        for k in (0..bins.start).chain(bins.end..256).step_by(7) {
            assert!(dft_mag(&s, k) < 1e-9 * peak, "bin {k}");
        }
    }

    #[test]
    fn empty_and_invalid_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!(matches!(
            multisine(100, 0.1, 0.31, 0.39, 1.0, &mut rng),
            Err(BenchError::EmptyBand { .. })
        ));
        assert!(matches!(
            multisine(100, 0.1, 1.0, 6.0, 1.0, &mut rng),
            Err(BenchError::InvalidBand(_))
        ));
    }
}

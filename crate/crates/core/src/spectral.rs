//! Frequency-domain core.
//!
//! Convention: the forward DFT is unnormalized,
//! `X[k] = Σ_n x[n]·exp(-2πi·k·n/N)`, so a zero-phase cosine of amplitude
//! `a` sampled `N` times lands as `a·N/2` in its bin (for `0 < k < N/2`)
//! and a constant `c` lands as `c·N` in bin 0. Only the non-negative half
//! of the spectrum (`k = 0..=N/2`) is kept; with the 4 Hz unit rate this is
//! the 0–2 Hz band.
//!
//! Any length is supported. `rustfft` plans mixed-radix, Rader and
//! Bluestein kernels as needed, so naturalistic corpora with e.g. nine
//! units per sentence get bins at multiples of 4/9 Hz.

use std::cell::RefCell;
use std::f64::consts::TAU;
use std::sync::Arc;

pub use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Tolerance for matching a requested frequency to a bin center.
pub const BIN_TOLERANCE_HZ: f64 = 1e-9;

/// Half width of the neighbourhood a peak is compared against.
pub const NEIGHBOR_HALF_WIDTH_HZ: f64 = 0.5;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

/// One-sided spectrum of a real series.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    freqs: Vec<f64>,
    coeffs: Vec<Complex64>,
    n_input: usize,
    rate_hz: f64,
}

impl Spectrum {
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn n_input(&self) -> usize {
        self.n_input
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn spacing_hz(&self) -> f64 {
        self.rate_hz / self.n_input as f64
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm()).collect()
    }

    /// Index of the bin centered on `freq_hz` (within [`BIN_TOLERANCE_HZ`]).
    pub fn bin_index(&self, freq_hz: f64) -> Result<usize> {
        self.nearest_bin(freq_hz, BIN_TOLERANCE_HZ)
    }

    /// Index of the bin nearest `freq_hz`, provided it is within `tol_hz`.
    pub fn nearest_bin(&self, freq_hz: f64, tol_hz: f64) -> Result<usize> {
        bin_of(freq_hz, self.n_input, self.rate_hz, tol_hz)
    }

    pub fn same_grid(&self, other: &Spectrum) -> bool {
        self.n_input == other.n_input && self.rate_hz == other.rate_hz
    }
}

/// Bin centers `k·rate/N` for `k = 0..=N/2`.
pub fn bin_grid(n_input: usize, rate_hz: f64) -> Vec<f64> {
    (0..=n_input / 2).map(|k| k as f64 * rate_hz / n_input as f64).collect()
}

/// Index of the one-sided bin within `tol_hz` of `freq_hz` for an
/// `n_input`-sample series at `rate_hz`.
pub fn bin_of(freq_hz: f64, n_input: usize, rate_hz: f64, tol_hz: f64) -> Result<usize> {
    let spacing = rate_hz / n_input as f64;
    let grid_err = || Error::FrequencyGrid { freq_hz, spacing_hz: spacing };
    if !freq_hz.is_finite() || freq_hz < -tol_hz {
        return Err(grid_err());
    }
    let k = (freq_hz / spacing).round();
    if k < 0.0 || k as usize > n_input / 2 || (k * spacing - freq_hz).abs() > tol_hz {
        return Err(grid_err());
    }
    Ok(k as usize)
}

fn check_series(series: &[f64]) -> Result<()> {
    if series.len() < 2 {
        return Err(Error::Validation(format!("DFT needs at least 2 samples, got {}", series.len())));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite sample at index {i}")));
    }
    Ok(())
}

/// Full two-sided unnormalized DFT (all `N` bins).
pub fn full_dft(series: &[f64]) -> Result<Vec<Complex64>> {
    check_series(series)?;
    let mut buf: Vec<Complex64> = series.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    forward_plan(buf.len()).process(&mut buf);
    Ok(buf)
}

/// One-sided unnormalized DFT of a real series sampled at `rate_hz`.
pub fn dft(series: &[f64], rate_hz: f64) -> Result<Spectrum> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::Validation(format!("sampling rate must be positive, got {rate_hz}")));
    }
    let mut coeffs = full_dft(series)?;
    let n = series.len();
    coeffs.truncate(n / 2 + 1);
    Ok(Spectrum { freqs: bin_grid(n, rate_hz), coeffs, n_input: n, rate_hz })
}

/// [`dft`] for `f32` samples.
pub fn dft_f32(series: &[f32], rate_hz: f64) -> Result<Spectrum> {
    let xs: Vec<f64> = series.iter().map(|&v| f64::from(v)).collect();
    dft(&xs, rate_hz)
}

/// Precomputed `exp(-2πi·k·n/N)` for evaluating one bin in `O(N)`.
///
/// Permutation tests evaluate a single bin thousands of times; this is much
/// cheaper than a full transform per permutation.
#[derive(Debug, Clone)]
pub struct BinKernel {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl BinKernel {
    pub fn new(k: usize, n: usize) -> Self {
        let (sin, cos) = (0..n)
            .map(|i| {
                // reduce k·i mod n first so large products keep full precision
                let phase = TAU * ((k * i) % n) as f64 / n as f64;
                (-phase.sin(), phase.cos())
            })
            .unzip();
        BinKernel { cos, sin }
    }

    pub fn len(&self) -> usize {
        self.cos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cos.is_empty()
    }

    pub fn eval(&self, series: &[f64]) -> Complex64 {
        debug_assert_eq!(series.len(), self.cos.len());
        let mut re = 0.0;
        let mut im = 0.0;
        for ((x, c), s) in series.iter().zip(&self.cos).zip(&self.sin) {
            re += x * c;
            im += x * s;
        }
        Complex64::new(re, im)
    }

    /// Real part only.
    pub fn eval_re(&self, series: &[f64]) -> f64 {
        series.iter().zip(&self.cos).map(|(x, c)| x * c).sum()
    }
}

/// Which scalar summarizes a complex coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmpMode {
    /// `Re X(f)`.
    #[default]
    Real,
    /// `|X(f)|`.
    Magnitude,
}

impl AmpMode {
    pub fn apply(self, c: Complex64) -> f64 {
        match self {
            AmpMode::Real => c.re,
            AmpMode::Magnitude => c.norm(),
        }
    }
}

/// Amplitude statistic at the bin centered on `freq_hz`.
pub fn amp_stat(s: &Spectrum, freq_hz: f64, mode: AmpMode) -> Result<f64> {
    Ok(mode.apply(s.coeffs[s.bin_index(freq_hz)?]))
}

/// Outcome of [`peak_test`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakTestResult {
    pub target_hz: f64,
    /// One-sample t over replicate differences.
    pub statistic: f64,
    /// One-sided p-value for "target exceeds its neighbours".
    pub p_value: f64,
    pub neighbor_bins: Vec<usize>,
}

/// Bins with `0 < |f - target| <= 0.5 Hz`.
pub fn neighbor_bins(freqs: &[f64], target_bin: usize) -> Vec<usize> {
    let target = freqs[target_bin];
    freqs
        .iter()
        .enumerate()
        .filter(|&(k, &f)| k != target_bin && (f - target).abs() <= NEIGHBOR_HALF_WIDTH_HZ + BIN_TOLERANCE_HZ)
        .map(|(k, _)| k)
        .collect()
}

/// Peak test on per-replicate amplitude curves sharing the bin grid `freqs`.
///
/// For every replicate the difference between the amplitude at the target
/// bin and the mean amplitude over the neighbour bins is formed; the
/// differences are tested against zero with a one-sided one-sample t-test.
/// A zero statistic (including the all-zero, zero-variance case) gives
/// `p = 0.5`.
pub fn peak_test_curves(freqs: &[f64], curves: &[Vec<f64>], target_hz: f64) -> Result<PeakTestResult> {
    if curves.len() < 3 {
        return Err(Error::PopulationTooSmall { needed: 3, got: curves.len() });
    }
    if let Some(c) = curves.iter().find(|c| c.len() != freqs.len()) {
        return Err(Error::ShapeMismatch(format!(
            "curve has {} bins, grid has {}",
            c.len(),
            freqs.len()
        )));
    }
    let target_bin = freqs
        .iter()
        .position(|f| (f - target_hz).abs() <= BIN_TOLERANCE_HZ)
        .ok_or(Error::FrequencyGrid {
            freq_hz: target_hz,
            spacing_hz: freqs.get(1).copied().unwrap_or(f64::NAN) - freqs[0],
        })?;
    let neighbors = neighbor_bins(freqs, target_bin);
    if neighbors.is_empty() {
        return Err(Error::GridTooCoarse { target_hz, half_width_hz: NEIGHBOR_HALF_WIDTH_HZ });
    }
    let diffs: Vec<f64> = curves
        .iter()
        .map(|c| {
            let around = neighbors.iter().map(|&k| c[k]).sum::<f64>() / neighbors.len() as f64;
            c[target_bin] - around
        })
        .collect();
    let m = stats::mean(&diffs);
    let sd = stats::sample_sd(&diffs);
    let n = diffs.len() as f64;
    let statistic = if sd > 0.0 {
        m / (sd / n.sqrt())
    } else if m > 0.0 {
        f64::INFINITY
    } else if m < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let p_value = if statistic == 0.0 { 0.5 } else { stats::t_sf(statistic, n - 1.0) };
    Ok(PeakTestResult { target_hz, statistic, p_value, neighbor_bins: neighbors })
}

/// Peak test on replicate spectra (partitions or channels), using magnitudes.
pub fn peak_test(replicates: &[Spectrum], target_hz: f64) -> Result<PeakTestResult> {
    let first = replicates
        .first()
        .ok_or(Error::PopulationTooSmall { needed: 3, got: 0 })?;
    if replicates.iter().any(|s| !s.same_grid(first)) {
        return Err(Error::ShapeMismatch("replicate spectra use different bin grids".into()));
    }
    let curves: Vec<Vec<f64>> = replicates.iter().map(Spectrum::magnitudes).collect();
    peak_test_curves(first.freqs(), &curves, target_hz)
}

/// Benjamini–Hochberg step-up at `q = 0.05`.
pub fn fdr_correct(pvals: &[f64]) -> Vec<bool> {
    fdr_correct_at(pvals, 0.05)
}

/// Benjamini–Hochberg step-up at level `q`: reject the `k` smallest
/// p-values where `k` is the largest rank with `p_(k) <= q·k/m`.
pub fn fdr_correct_at(pvals: &[f64], q: f64) -> Vec<bool> {
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let cutoff = order
        .iter()
        .enumerate()
        .rev()
        .find(|&(rank, &i)| pvals[i] <= q * (rank + 1) as f64 / m as f64)
        .map(|(rank, _)| rank + 1)
        .unwrap_or(0);
    let mut mask = vec![false; m];
    for &i in &order[..cutoff] {
        mask[i] = true;
    }
    mask
}

/// Min–max scaling to `[0, 1]`. A constant curve maps to all zeros.
pub fn normalize01(curve: &[f64]) -> Vec<f64> {
    let (lo, hi) = curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if range > 0.0 {
        curve.iter().map(|x| (x - lo) / range).collect()
    } else {
        vec![0.0; curve.len()]
    }
}

/// Order of averaging and magnitude when summarizing several trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialAveraging {
    /// `mean_t |X_t(f)|`.
    #[default]
    MagnitudeThenMean,
    /// `|mean_t X_t(f)|`.
    MeanThenMagnitude,
}

/// Trial-averaged amplitude spectrum. All trials must have equal length.
pub fn mean_amplitude<S: AsRef<[f64]>>(
    trials: &[S],
    rate_hz: f64,
    averaging: TrialAveraging,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = trials.first().ok_or(Error::PopulationTooSmall { needed: 1, got: 0 })?;
    let n = first.as_ref().len();
    let mut complex_sum = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
    let mut mag_sum = vec![0.0; n / 2 + 1];
    for trial in trials {
        let trial = trial.as_ref();
        if trial.len() != n {
            return Err(Error::ShapeMismatch(format!("trial of {} samples, expected {n}", trial.len())));
        }
        let s = dft(trial, rate_hz)?;
        for (k, c) in s.coeffs().iter().enumerate() {
            complex_sum[k] += c;
            mag_sum[k] += c.norm();
        }
    }
    let t = trials.len() as f64;
    let amps = match averaging {
        TrialAveraging::MagnitudeThenMean => mag_sum.iter().map(|m| m / t).collect(),
        TrialAveraging::MeanThenMagnitude => complex_sum.iter().map(|c| c.norm() / t).collect(),
    };
    Ok((bin_grid(n, rate_hz), amps))
}

/// Mean curve with ±1 standard error band, for spectrum plots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub freqs: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
}

pub fn summarize_curves(freqs: &[f64], curves: &[Vec<f64>]) -> Result<CurveSummary> {
    if curves.is_empty() {
        return Err(Error::PopulationTooSmall { needed: 1, got: 0 });
    }
    if curves.iter().any(|c| c.len() != freqs.len()) {
        return Err(Error::ShapeMismatch("curves and grid differ in length".into()));
    }
    let n = curves.len() as f64;
    let mut mean = Vec::with_capacity(freqs.len());
    let mut sem = Vec::with_capacity(freqs.len());
    for k in 0..freqs.len() {
        let column: Vec<f64> = curves.iter().map(|c| c[k]).collect();
        mean.push(stats::mean(&column));
        sem.push(stats::sample_sd(&column) / n.sqrt());
    }
    Ok(CurveSummary { freqs: freqs.to_vec(), mean, sem })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[f64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let phase = -TAU * (k * i) as f64 / n as f64;
                        Complex64::new(v * phase.cos(), v * phase.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn cosine(n: usize, rate: f64, f: f64, a: f64) -> Vec<f64> {
        (0..n).map(|i| a * (TAU * f * i as f64 / rate).cos()).collect()
    }

    #[test]
    fn constant_series() {
        for n in [2, 7, 32, 33] {
            let s = dft(&vec![2.5; n], 4.0).unwrap();
            assert!((s.coeffs()[0].re - 2.5 * n as f64).abs() < 1e-9);
            assert!(s.coeffs()[1..].iter().all(|c| c.norm() < 1e-9));
            assert!((amp_stat(&s, 0.0, AmpMode::Real).unwrap() - 2.5 * n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn cosine_lands_in_one_bin() {
        let s = dft(&cosine(32, 4.0, 1.0, 1.0), 4.0).unwrap();
        let k = s.bin_index(1.0).unwrap();
        assert_eq!(k, 8);
        for (i, c) in s.coeffs().iter().enumerate() {
            if i == k {
                assert!((c.re - 16.0).abs() < 1e-9 && c.im.abs() < 1e-9);
            } else {
                assert!(c.norm() < 1e-9, "bin {i}: {c}");
            }
        }
        let a = 0.7;
        let s = dft(&cosine(32, 4.0, 1.0, a), 4.0).unwrap();
        assert!((amp_stat(&s, 1.0, AmpMode::Real).unwrap() - 16.0 * a).abs() < 1e-9);
        assert!((amp_stat(&s, 1.0, AmpMode::Magnitude).unwrap() - 16.0 * a).abs() < 1e-9);
    }

    #[test]
    fn grid_and_errors() {
        let s = dft(&[0.0; 32], 4.0).unwrap();
        assert_eq!(s.freqs().len(), 17);
        assert_eq!(s.freqs()[16], 2.0);
        assert!(matches!(amp_stat(&s, 1.06, AmpMode::Real), Err(Error::FrequencyGrid { .. })));
        assert!(amp_stat(&s, 2.125, AmpMode::Real).is_err());
        assert!(dft(&[1.0], 4.0).is_err());
        assert!(dft(&[1.0, f64::NAN], 4.0).is_err());
    }

    #[test]
    fn nine_unit_grid_has_four_ninths_bins() {
        let s = dft(&[0.0; 36], 4.0).unwrap();
        for m in 1..=4 {
            assert!(s.bin_index(4.0 * m as f64 / 9.0).is_ok());
        }
    }

    #[test]
    fn bin_kernel_matches_fft() {
        let x: Vec<f64> = (0..45).map(|i| ((i * 37 % 11) as f64).sin()).collect();
        let full = full_dft(&x).unwrap();
        for k in [0, 1, 5, 22] {
            let c = BinKernel::new(k, x.len()).eval(&x);
            assert!((c - full[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn matches_naive_on_awkward_lengths() {
        for n in [2, 3, 17, 31, 49, 64, 97, 100] {
            let x: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.37).cos() + i as f64 * 0.01).collect();
            let fast = full_dft(&x).unwrap();
            let slow = naive_dft(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-9, "n={n}");
            }
        }
    }

    #[test]
    fn fdr_examples() {
        assert_eq!(fdr_correct(&[0.001, 0.2, 0.9]), vec![true, false, false]);
        assert_eq!(fdr_correct(&[1.0; 4]), vec![false; 4]);
        assert_eq!(fdr_correct(&[0.0; 4]), vec![true; 4]);
        assert!(fdr_correct(&[]).is_empty());
        // step-up: 0.04 at rank 4 of 4 passes (0.04 <= 0.05) and pulls in all smaller ones
        assert_eq!(fdr_correct(&[0.03, 0.04, 0.035, 0.032]), vec![true; 4]);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize01(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize01(&[5.0, 5.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn peak_test_flat_and_coarse() {
        let freqs = bin_grid(32, 4.0);
        let flat = vec![vec![1.0; freqs.len()]; 5];
        let r = peak_test_curves(&freqs, &flat, 1.0).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 0.5);
        // 0.125 Hz spacing: 4 bins on each side
        assert_eq!(r.neighbor_bins, vec![4, 5, 6, 7, 9, 10, 11, 12]);

        let coarse = bin_grid(4, 4.0); // 0, 1, 2 Hz
        let curves = vec![vec![0.0, 1.0, 0.0]; 3];
        assert!(matches!(
            peak_test_curves(&coarse, &curves, 1.0),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(peak_test_curves(&freqs, &flat[..2], 1.0).is_err());
    }

    #[test]
    fn peak_test_detects_peak() {
        let freqs = bin_grid(32, 4.0);
        let curves: Vec<Vec<f64>> = (0..10)
            .map(|r| {
                freqs
                    .iter()
                    .enumerate()
                    .map(|(k, _)| if k == 8 { 5.0 + 0.1 * r as f64 } else { 1.0 + 0.05 * ((r * k) % 3) as f64 })
                    .collect()
            })
            .collect();
        let r = peak_test_curves(&freqs, &curves, 1.0).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn mean_amplitude_orders() {
        let a = cosine(16, 4.0, 1.0, 1.0);
        let b: Vec<f64> = a.iter().map(|v| -v).collect();
        let (_, mag_first) = mean_amplitude(&[a.clone(), b.clone()], 4.0, TrialAveraging::MagnitudeThenMean).unwrap();
        let (_, mean_first) = mean_amplitude(&[a, b], 4.0, TrialAveraging::MeanThenMagnitude).unwrap();
        assert!((mag_first[4] - 8.0).abs() < 1e-9);
        assert!(mean_first[4].abs() < 1e-9);
    }
}

//! Inter-trial phase coherence and channel classification.
//!
//! ITPC at a frequency is the length of the mean unit phase vector across
//! trials: 1 when every trial has the same phase, about `√π / (2√T)` for
//! `T` trials of random phase. A channel is tested the same way a neuron is,
//! except that the permutation scrambles sample order inside each trial.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ChannelMeta, Hemisphere, Roi, RoiMap, TrialRecording};
use crate::probe_model::{stream_rng, PermutationConfig, PermutationResult, UnitClass, FREQ_SNAP_HZ};
use crate::spectral::{bin_grid, bin_of, dft, BinKernel};
use crate::stats::{self, Correlation};

/// A coefficient smaller than this fraction of the trial's L1 norm has no
/// meaningful phase and is left out of the mean.
pub const ZERO_COEFF_REL: f64 = 1e-12;

/// ITPC per bin for one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ItpcSpectrum {
    pub channel_id: usize,
    pub freqs: Vec<f64>,
    pub itpc: Vec<f64>,
    pub complex_mean: Vec<Complex64>,
    pub n_trials: usize,
    /// Trials left out of each bin because their coefficient vanished.
    pub excluded: Vec<usize>,
}

impl ItpcSpectrum {
    pub fn bin(&self, freq_hz: f64) -> Result<usize> {
        let spacing = self.freqs.get(1).copied().unwrap_or(f64::NAN);
        let k = (freq_hz / spacing).round();
        if !(k >= 0.0 && (k as usize) < self.freqs.len() && (k * spacing - freq_hz).abs() <= FREQ_SNAP_HZ) {
            return Err(Error::FrequencyGrid { freq_hz, spacing_hz: spacing });
        }
        Ok(k as usize)
    }

    pub fn at(&self, freq_hz: f64) -> Result<f64> {
        Ok(self.itpc[self.bin(freq_hz)?])
    }

    /// Index of the bin nearest to `freq_hz`.
    pub fn nearest(&self, freq_hz: f64) -> usize {
        let mut best = 0;
        for (k, f) in self.freqs.iter().enumerate() {
            if (f - freq_hz).abs() < (self.freqs[best] - freq_hz).abs() {
                best = k;
            }
        }
        best
    }

    pub fn has_exclusions(&self) -> bool {
        self.excluded.iter().any(|&e| e > 0)
    }
}

fn l1(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.abs()).sum()
}

/// Unit phase vector of `c`, or `None` when `c` is numerically zero.
fn phase(c: Complex64, scale: f64) -> Option<Complex64> {
    let norm = c.norm();
    (norm > ZERO_COEFF_REL * scale && norm > 0.0).then(|| c / norm)
}

fn mean_resultant(phases: impl Iterator<Item = Option<Complex64>>, n_trials: usize) -> (Complex64, usize) {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut used = 0;
    for p in phases.flatten() {
        sum += p;
        used += 1;
    }
    let excluded = n_trials - used;
    if used == 0 {
        (Complex64::new(0.0, 0.0), excluded)
    } else {
        (sum / used as f64, excluded)
    }
}

/// ITPC over the given trials (equal length, sampled at `rate_hz`).
pub fn itpc_trials<S: AsRef<[f64]>>(channel_id: usize, trials: &[S], rate_hz: f64) -> Result<ItpcSpectrum> {
    if trials.len() < 2 {
        return Err(Error::PopulationTooSmall { needed: 2, got: trials.len() });
    }
    let n = trials[0].as_ref().len();
    if trials.iter().any(|t| t.as_ref().len() != n) {
        return Err(Error::ShapeMismatch("trials differ in length".into()));
    }
    let spectra = trials
        .iter()
        .map(|t| dft(t.as_ref(), rate_hz).map(|s| (s, l1(t.as_ref()))))
        .collect::<Result<Vec<_>>>()?;
    let freqs = bin_grid(n, rate_hz);
    let mut itpc = Vec::with_capacity(freqs.len());
    let mut complex_mean = Vec::with_capacity(freqs.len());
    let mut excluded = Vec::with_capacity(freqs.len());
    for k in 0..freqs.len() {
        let (m, e) = mean_resultant(spectra.iter().map(|(s, scale)| phase(s.coeffs()[k], *scale)), trials.len());
        itpc.push(m.norm().min(1.0));
        complex_mean.push(m);
        excluded.push(e);
    }
    Ok(ItpcSpectrum { channel_id, freqs, itpc, complex_mean, n_trials: trials.len(), excluded })
}

fn channel_trials(r: &TrialRecording, channel: usize) -> Result<Vec<Vec<f64>>> {
    r.channel(channel)?;
    Ok((0..r.n_trials())
        .map(|t| r.trial(channel, t).iter().map(|&v| v as f64).collect())
        .collect())
}

/// ITPC spectrum of one channel over all of its trials.
pub fn itpc(r: &TrialRecording, channel: usize) -> Result<ItpcSpectrum> {
    itpc_trials(channel, &channel_trials(r, channel)?, r.rate_hz())
}

fn itpc_at(kernels: &[BinKernel], trials: &[Vec<f64>], scales: &[f64]) -> Vec<f64> {
    kernels
        .iter()
        .map(|k| {
            let phases = trials.iter().zip(scales).map(|(t, &s)| phase(k.eval(t), s));
            mean_resultant(phases, trials.len()).0.norm().min(1.0)
        })
        .collect()
}

/// Permutation test of ITPC at several frequencies; each shuffle is scored
/// at all of them. The RNG stream is the channel index.
pub fn channel_permutation_multi(
    r: &TrialRecording,
    channel: usize,
    freqs_hz: &[f64],
    cfg: &PermutationConfig,
) -> Result<Vec<PermutationResult>> {
    cfg.validate()?;
    if r.n_trials() < 2 {
        return Err(Error::PopulationTooSmall { needed: 2, got: r.n_trials() });
    }
    let mut trials = channel_trials(r, channel)?;
    let n = r.n_samples();
    let kernels = freqs_hz
        .iter()
        .map(|&f| bin_of(f, n, r.rate_hz(), FREQ_SNAP_HZ).map(|k| BinKernel::new(k, n)))
        .collect::<Result<Vec<_>>>()?;
    // shuffling preserves each trial's L1 norm
    let scales: Vec<f64> = trials.iter().map(|t| l1(t)).collect();
    let observed = itpc_at(&kernels, &trials, &scales);
    let mut nulls = vec![Vec::with_capacity(cfg.n_perm); kernels.len()];
    let mut rng = stream_rng(cfg.seed, channel as u64);
    for _ in 0..cfg.n_perm {
        for t in trials.iter_mut() {
            t.shuffle(&mut rng);
        }
        for (v, null) in itpc_at(&kernels, &trials, &scales).into_iter().zip(nulls.iter_mut()) {
            null.push(v);
        }
    }
    Ok(freqs_hz
        .iter()
        .zip(observed)
        .zip(nulls)
        .map(|((&f, obs), null)| PermutationResult::from_null(f, obs, null, cfg.alpha))
        .collect())
}

/// Permutation confidence interval of a channel's ITPC at `freq_hz`.
pub fn channel_permutation_ci(
    r: &TrialRecording,
    channel: usize,
    freq_hz: f64,
    cfg: &PermutationConfig,
) -> Result<PermutationResult> {
    Ok(channel_permutation_multi(r, channel, &[freq_hz], cfg)?.remove(0))
}

/// Trailing window applied to every trial before analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialWindow {
    pub n_units: usize,
    pub unit_sec: f64,
}

impl Default for TrialWindow {
    /// The last 32 syllables of 250 ms: an 8 s window, 0.125 Hz bins.
    fn default() -> Self {
        TrialWindow { n_units: 32, unit_sec: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrainProbeConfig {
    pub permutation: PermutationConfig,
    pub sentence_hz: f64,
    pub phrase_hz: f64,
    /// `None` analyses the trials as stored.
    pub window: Option<TrialWindow>,
}

impl Default for BrainProbeConfig {
    fn default() -> Self {
        BrainProbeConfig {
            permutation: PermutationConfig::default(),
            sentence_hz: 1.0,
            phrase_hz: 2.0,
            window: Some(TrialWindow::default()),
        }
    }
}

impl BrainProbeConfig {
    pub fn apply_window(&self, r: &TrialRecording) -> Result<TrialRecording> {
        match self.window {
            Some(w) => r.slice_last(w.n_units, w.unit_sec),
            None => Ok(r.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub meta: ChannelMeta,
    pub class: UnitClass,
    pub sentence: PermutationResult,
    pub phrase: PermutationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelClassification {
    pub rows: Vec<ChannelRow>,
}

impl ChannelClassification {
    pub fn significant(&self) -> impl Iterator<Item = &ChannelRow> {
        self.rows.iter().filter(|r| r.class.is_syntactic())
    }

    pub fn class_of(&self, channel: usize) -> Option<UnitClass> {
        self.rows.get(channel).map(|r| r.class)
    }
}

/// Classifies every channel of `r` (already windowed) at the sentence and
/// phrase rates.
pub fn classify_channels(r: &TrialRecording, cfg: &BrainProbeConfig) -> Result<ChannelClassification> {
    cfg.permutation.validate()?;
    let freqs = [cfg.sentence_hz, cfg.phrase_hz];
    let rows = (0..r.n_channels())
        .into_par_iter()
        .map(|ch| {
            let res = channel_permutation_multi(r, ch, &freqs, &cfg.permutation)?;
            Ok(ChannelRow {
                meta: r.channels()[ch].clone(),
                class: UnitClass::from_hits(res[0].significant, res[1].significant),
                sentence: res[0],
                phrase: res[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelClassification { rows })
}

/// Counts for one (ROI, hemisphere) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiRow {
    pub roi: Roi,
    pub hemisphere: Hemisphere,
    pub n_channels: usize,
    pub n_sentence: usize,
    pub n_phrase: usize,
    pub n_both: usize,
    /// Significant channels over channels in the cell.
    pub proportion: f64,
    /// Significant channels in the cell over all significant channels.
    pub share_of_significant: f64,
}

impl RoiRow {
    pub fn n_significant(&self) -> usize {
        self.n_sentence + self.n_phrase + self.n_both
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiDistribution {
    /// One row per ROI and hemisphere, ROI-major in the map's ROI order.
    pub rows: Vec<RoiRow>,
}

impl RoiDistribution {
    pub fn hemisphere(&self, h: Hemisphere) -> impl Iterator<Item = &RoiRow> {
        self.rows.iter().filter(move |r| r.hemisphere == h)
    }

    pub fn cell(&self, roi: Roi, h: Hemisphere) -> &RoiRow {
        self.rows
            .iter()
            .find(|r| r.roi == roi && r.hemisphere == h)
            .expect("every cell is present")
    }
}

/// Tallies classified channels by ROI (resolved through `m`) and hemisphere.
pub fn roi_distribution(c: &ChannelClassification, m: &RoiMap) -> Result<RoiDistribution> {
    let mut rows: Vec<RoiRow> = Roi::ALL
        .iter()
        .flat_map(|&roi| {
            Hemisphere::BOTH.iter().map(move |&hemisphere| RoiRow {
                roi,
                hemisphere,
                n_channels: 0,
                n_sentence: 0,
                n_phrase: 0,
                n_both: 0,
                proportion: 0.0,
                share_of_significant: 0.0,
            })
        })
        .collect();
    for ch in &c.rows {
        let roi = m.resolve(&ch.meta.aal_label)?;
        let row = rows
            .iter_mut()
            .find(|r| r.roi == roi && r.hemisphere == ch.meta.hemisphere)
            .expect("every cell is present");
        row.n_channels += 1;
        match ch.class {
            UnitClass::Sentence => row.n_sentence += 1,
            UnitClass::Phrase => row.n_phrase += 1,
            UnitClass::Both => row.n_both += 1,
            UnitClass::None => {}
        }
    }
    let total: usize = rows.iter().map(RoiRow::n_significant).sum();
    for row in &mut rows {
        if row.n_channels > 0 {
            row.proportion = row.n_significant() as f64 / row.n_channels as f64;
        }
        if total > 0 {
            row.share_of_significant = row.n_significant() as f64 / total as f64;
        }
    }
    Ok(RoiDistribution { rows })
}

/// Pearson correlation across the ROIs of one hemisphere between sentence
/// and phrase channel counts (dual channels count towards both, as for
/// neurons).
pub fn roi_correlation(d: &RoiDistribution, h: Hemisphere) -> Result<Correlation> {
    let (s, p): (Vec<f64>, Vec<f64>) = d
        .hemisphere(h)
        .map(|r| ((r.n_sentence + r.n_both) as f64, (r.n_phrase + r.n_both) as f64))
        .unzip();
    stats::pearson(&s, &p)
}

/// Everything the brain probe produces for one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct BrainProbeReport {
    pub spectra: Vec<ItpcSpectrum>,
    pub classification: ChannelClassification,
    pub distribution: RoiDistribution,
    pub correlation_left: Correlation,
    pub correlation_right: Correlation,
}

pub fn probe_brain(r: &TrialRecording, m: &RoiMap, cfg: &BrainProbeConfig) -> Result<BrainProbeReport> {
    let r = cfg.apply_window(r)?;
    let spectra = (0..r.n_channels())
        .into_par_iter()
        .map(|ch| itpc(&r, ch))
        .collect::<Result<Vec<_>>>()?;
    let classification = classify_channels(&r, cfg)?;
    let distribution = roi_distribution(&classification, m)?;
    Ok(BrainProbeReport {
        spectra,
        correlation_left: roi_correlation(&distribution, Hemisphere::L)?,
        correlation_right: roi_correlation(&distribution, Hemisphere::R)?,
        classification,
        distribution,
    })
}

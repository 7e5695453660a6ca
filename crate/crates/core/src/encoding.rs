//! Predictive encoding control.
//!
//! Instead of comparing dissimilarity structure, a small ridge model
//! predicts a channel's ITPC spectrum from a layer's complex spectrum. Each
//! block (one condition half) contributes one row per frequency bin in
//! `[0.5, 2]` Hz with the real and imaginary parts as the two features.
//! Held-out Spearman correlation, averaged over random 70/30 splits, is the
//! predictive score `P(L_j, C_i)`; scores then go through the same top-`k`
//! aggregation as RSA correlations.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{aggregate_scores, combine_pools, CombinedColumn, HemisphereAggregate, NeuronPool, PoolReport, ScoreTable};
use crate::error::{Error, Result};
use crate::ingest::{ActivationTensor, ChannelMeta, RoiMap, TrialRecording, UnitId};
use crate::probe_brain::itpc_trials;
use crate::probe_model::{stream_rng, NeuronClassification, UnitClass};
use crate::spectral::{bin_grid, dft, BIN_TOLERANCE_HZ};
use crate::stats;

pub const BAND_LOW_HZ: f64 = 0.5;
pub const BAND_HIGH_HZ: f64 = 2.0;

/// Rows of the design: blocks × bins, block-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodingDesign {
    pub layer: usize,
    pub freqs: Vec<f64>,
    pub n_blocks: usize,
    /// `(re, im)` per row.
    pub x: Vec<[f64; 2]>,
}

impl EncodingDesign {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }
}

fn band_indices(freqs: &[f64]) -> Vec<usize> {
    freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= BAND_LOW_HZ - BIN_TOLERANCE_HZ && f <= BAND_HIGH_HZ + BIN_TOLERANCE_HZ)
        .map(|(k, _)| k)
        .collect()
}

/// Mean over member neurons and over trials of one block's windowed series.
pub fn block_sequence(t: &ActivationTensor, layer: usize, members: &[usize]) -> Result<Vec<f64>> {
    if members.is_empty() {
        return Err(Error::PopulationTooSmall { needed: 1, got: 0 });
    }
    let per = t.units_per_trial.unwrap_or(t.n_timepoints());
    let mut acc = vec![0.0; per];
    let mut count = 0usize;
    for &n in members {
        let unit = UnitId::new(layer, n);
        if !t.contains(unit) {
            return Err(Error::Bounds(format!("{unit} outside the model")));
        }
        for trial in t.series(unit).chunks_exact(per) {
            for (a, &v) in acc.iter_mut().zip(trial) {
                *a += f64::from(v);
            }
            count += 1;
        }
    }
    Ok(acc.into_iter().map(|a| a / count as f64).collect())
}

/// Design matrix for one layer. `Ok(None)` when the layer has no member
/// neurons; such layers are skipped.
pub fn build_model_features(blocks: &[&ActivationTensor], layer: usize, members: &[usize]) -> Result<Option<EncodingDesign>> {
    if members.is_empty() {
        return Ok(None);
    }
    if blocks.is_empty() {
        return Err(Error::PopulationTooSmall { needed: 1, got: 0 });
    }
    let mut freqs: Option<Vec<f64>> = None;
    let mut x = Vec::new();
    for t in blocks {
        let seq = block_sequence(t, layer, members)?;
        let s = dft(&seq, t.rate_hz())?;
        let keep = band_indices(s.freqs());
        let f: Vec<f64> = keep.iter().map(|&k| s.freqs()[k]).collect();
        match &freqs {
            Some(prev) if *prev != f => return Err(Error::ShapeMismatch("blocks use different bin grids".into())),
            _ => freqs = Some(f),
        }
        x.extend(keep.iter().map(|&k| [s.coeffs()[k].re, s.coeffs()[k].im]));
    }
    let freqs = freqs.unwrap_or_default();
    if freqs.is_empty() {
        return Err(Error::GridTooCoarse { target_hz: BAND_LOW_HZ, half_width_hz: BAND_HIGH_HZ - BAND_LOW_HZ });
    }
    Ok(Some(EncodingDesign { layer, freqs, n_blocks: blocks.len(), x }))
}

/// ITPC amplitudes aligned to the design rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetVector {
    pub channel: usize,
    pub y: Vec<f64>,
    /// Largest distance between a model bin and its matched recording bin.
    pub max_mismatch_hz: f64,
    pub warning: Option<String>,
}

/// Nearest recording bin for each model frequency.
pub fn nearest_bins(grid: &[f64], targets: &[f64]) -> Vec<usize> {
    targets
        .iter()
        .map(|&f| {
            let mut best = 0;
            for (k, g) in grid.iter().enumerate() {
                if (g - f).abs() < (grid[best] - f).abs() {
                    best = k;
                }
            }
            best
        })
        .collect()
}

pub fn build_brain_targets(blocks: &[&TrialRecording], channel: usize, model_freqs: &[f64]) -> Result<TargetVector> {
    let spacing = if model_freqs.len() > 1 { model_freqs[1] - model_freqs[0] } else { f64::INFINITY };
    let mut y = Vec::with_capacity(blocks.len() * model_freqs.len());
    let mut max_mismatch: f64 = 0.0;
    for r in blocks {
        r.channel(channel)?;
        let trials: Vec<Vec<f64>> = (0..r.n_trials())
            .map(|t| r.trial(channel, t).iter().map(|&v| f64::from(v)).collect())
            .collect();
        let s = itpc_trials(channel, &trials, r.rate_hz())?;
        let grid = bin_grid(r.n_samples(), r.rate_hz());
        for (k, &f) in nearest_bins(&grid, model_freqs).iter().zip(model_freqs) {
            max_mismatch = max_mismatch.max((grid[*k] - f).abs());
            y.push(s.itpc[*k]);
        }
    }
    let warning = (max_mismatch > spacing / 2.0).then(|| {
        format!("channel {channel}: nearest recording bin is {max_mismatch:.4} Hz from a model bin")
    });
    Ok(TargetVector { channel, y, max_mismatch_hz: max_mismatch, warning })
}

/// Column-wise z-scoring fitted on training rows. A constant column is
/// only centered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Standardizer {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
}

impl Standardizer {
    pub fn fit(rows: &[[f64; 2]]) -> Self {
        let mut mean = [0.0; 2];
        let mut sd = [1.0; 2];
        for j in 0..2 {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            mean[j] = stats::mean(&col);
            let s = stats::sample_sd(&col);
            if s > 0.0 {
                sd[j] = s;
            }
        }
        Standardizer { mean, sd }
    }

    pub fn apply(&self, row: [f64; 2]) -> [f64; 2] {
        [(row[0] - self.mean[0]) / self.sd[0], (row[1] - self.mean[1]) / self.sd[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgeFit {
    pub beta: [f64; 2],
    pub intercept: f64,
    pub alpha: f64,
}

impl RidgeFit {
    pub fn predict(&self, row: [f64; 2]) -> f64 {
        self.intercept + self.beta[0] * row[0] + self.beta[1] * row[1]
    }
}

/// Minimizes `‖y − b0 − Xβ‖² + α‖β‖²` in closed form; the intercept is
/// not penalized.
pub fn ridge_fit(x: &[[f64; 2]], y: &[f64], alpha: f64) -> Result<RidgeFit> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::ShapeMismatch(format!("{} rows vs {} targets", x.len(), y.len())));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("ridge penalty must be finite and non-negative, got {alpha}")));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite value in ridge inputs".into()));
    }
    let n = x.len() as f64;
    let mx = [x.iter().map(|r| r[0]).sum::<f64>() / n, x.iter().map(|r| r[1]).sum::<f64>() / n];
    let my = y.iter().sum::<f64>() / n;
    let (mut a, mut b, mut d, mut u, mut v) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, &t) in x.iter().zip(y) {
        let (p, q, z) = (r[0] - mx[0], r[1] - mx[1], t - my);
        a += p * p;
        b += p * q;
        d += q * q;
        u += p * z;
        v += q * z;
    }
    a += alpha;
    d += alpha;
    let det = a * d - b * b;
    if det.abs() <= f64::EPSILON * (a * d).abs() || det == 0.0 {
        return Err(Error::DegenerateFeature("ridge normal equations are singular".into()));
    }
    let beta = [(d * u - b * v) / det, (a * v - b * u) / det];
    Ok(RidgeFit { beta, intercept: my - beta[0] * mx[0] - beta[1] * mx[1], alpha })
}

/// 13 points log-spaced over `[1e-3, 1e3]`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-3.0 + 0.5 * i as f64)).collect()
}

/// Penalty minimizing mean squared error over `folds` contiguous folds of
/// the given rows. Ties go to the smaller penalty.
pub fn ridge_cv_alpha(x: &[[f64; 2]], y: &[f64], grid: &[f64], folds: usize) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    if folds < 2 || x.len() < folds {
        return Err(Error::PopulationTooSmall { needed: folds.max(2), got: x.len() });
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() == 1 {
        return Ok(sorted[0]);
    }
    let n = x.len();
    let bounds: Vec<(usize, usize)> = (0..folds).map(|i| (i * n / folds, (i + 1) * n / folds)).collect();
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &sorted {
        let mut mse_sum = 0.0;
        for &(lo, hi) in &bounds {
            let tx: Vec<[f64; 2]> = x[..lo].iter().chain(&x[hi..]).copied().collect();
            let ty: Vec<f64> = y[..lo].iter().chain(&y[hi..]).copied().collect();
            let fit = ridge_fit(&tx, &ty, alpha)?;
            let err: f64 = (lo..hi).map(|i| (y[i] - fit.predict(x[i])).powi(2)).sum();
            mse_sum += err / (hi - lo) as f64;
        }
        let mse = mse_sum / folds as f64;
        if best.is_none_or(|(_, b)| mse < b) {
            best = Some((alpha, mse));
        }
    }
    Ok(best.expect("nonempty grid").0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingConfig {
    pub n_splits: usize,
    pub test_frac: f64,
    pub inner_folds: usize,
    pub alpha_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig { n_splits: 5, test_frac: 0.3, inner_folds: 5, alpha_grid: default_alpha_grid(), seed: 0 }
    }
}

impl EncodingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_splits == 0 {
            return Err(Error::Config("n_splits must be positive".into()));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(Error::Config(format!("test_frac must lie in (0, 1), got {}", self.test_frac)));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("alpha grid must be nonempty and positive".into()));
        }
        Ok(())
    }
}

/// Random train/test partition with `⌈test_frac·n⌉` test rows, both sorted.
pub fn split_indices(n: usize, test_frac: f64, rng: &mut impl rand::Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_test = ((test_frac * n as f64).ceil() as usize).clamp(1, n - 1);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Everything fitted on one split, exposed so leakage can be checked.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitOutcome {
    pub standardizer: Standardizer,
    pub alpha: f64,
    pub fit: RidgeFit,
    pub predictions: Vec<f64>,
    pub score: f64,
    pub degenerate: bool,
}

/// Standardize, select the penalty and fit on `train`; score on `test`.
pub fn fit_split(x: &[[f64; 2]], y: &[f64], train: &[usize], test: &[usize], cfg: &EncodingConfig) -> Result<SplitOutcome> {
    let raw_train: Vec<[f64; 2]> = train.iter().map(|&i| x[i]).collect();
    let standardizer = Standardizer::fit(&raw_train);
    let xt: Vec<[f64; 2]> = raw_train.iter().map(|&r| standardizer.apply(r)).collect();
    let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let alpha = ridge_cv_alpha(&xt, &yt, &cfg.alpha_grid, cfg.inner_folds)?;
    let fit = ridge_fit(&xt, &yt, alpha)?;
    let predictions: Vec<f64> = test.iter().map(|&i| fit.predict(standardizer.apply(x[i]))).collect();
    let actual: Vec<f64> = test.iter().map(|&i| y[i]).collect();
    let c = stats::spearman(&predictions, &actual)?;
    Ok(SplitOutcome { standardizer, alpha, fit, predictions, score: c.r, degenerate: c.degenerate })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictiveScore {
    pub layer: usize,
    pub channel: usize,
    pub p_score: f64,
    pub split_scores: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Splits whose test ranks were constant (scored 0).
    pub degenerate_splits: usize,
}

/// `P(L_j, C_i)`: mean held-out Spearman correlation over random splits.
/// `stream` selects the RNG stream so pairs are independent of scheduling.
pub fn predictive_score(
    x: &[[f64; 2]],
    y: &[f64],
    cfg: &EncodingConfig,
    layer: usize,
    channel: usize,
) -> Result<PredictiveScore> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} rows vs {} targets", x.len(), y.len())));
    }
    if x.len() < 10 {
        return Err(Error::PopulationTooSmall { needed: 10, got: x.len() });
    }
    let mut rng = stream_rng(cfg.seed, ((layer as u64) << 32) | channel as u64);
    let mut split_scores = Vec::with_capacity(cfg.n_splits);
    let mut alphas = Vec::with_capacity(cfg.n_splits);
    let mut degenerate_splits = 0;
    for _ in 0..cfg.n_splits {
        let (train, test) = split_indices(x.len(), cfg.test_frac, &mut rng);
        let out = fit_split(x, y, &train, &test, cfg)?;
        split_scores.push(out.score);
        alphas.push(out.alpha);
        degenerate_splits += usize::from(out.degenerate);
    }
    Ok(PredictiveScore { layer, channel, p_score: stats::mean(&split_scores), split_scores, alphas, degenerate_splits })
}

/// Arranges scores into a table over their layers and `channels`.
pub fn score_table(scores: &[PredictiveScore], channels: &[ChannelMeta]) -> Result<ScoreTable> {
    let mut layers: Vec<usize> = scores.iter().map(|s| s.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    let mut grid = vec![vec![f64::NAN; channels.len()]; layers.len()];
    for s in scores {
        let i = layers.binary_search(&s.layer).expect("layer listed");
        let c = channels
            .iter()
            .position(|m| m.channel_id == s.channel)
            .ok_or_else(|| Error::Bounds(format!("channel {} has no metadata", s.channel)))?;
        grid[i][c] = s.p_score;
    }
    if grid.iter().flatten().any(|v| v.is_nan()) {
        return Err(Error::IncompleteDesign("predictive scores do not cover every layer and channel".into()));
    }
    ScoreTable::new(layers, channels.to_vec(), grid)
}

/// Same top-`k` aggregation as the RSA scores.
pub fn aggregate_predictive(
    scores: &[PredictiveScore],
    channels: &[ChannelMeta],
    m: &RoiMap,
    k: usize,
) -> Result<Vec<HemisphereAggregate>> {
    aggregate_scores(&score_table(scores, channels)?, m, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodeConfig {
    pub encoding: EncodingConfig,
    pub k: usize,
    pub pools: Vec<NeuronPool>,
    pub combine: Vec<NeuronPool>,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        let a = crate::alignment::AlignConfig::default();
        EncodeConfig { encoding: EncodingConfig::default(), k: a.k, pools: a.combine.clone(), combine: a.combine }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodingPool {
    pub report: PoolReport,
    pub scores: Vec<PredictiveScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodingReport {
    pub k: usize,
    pub pools: Vec<EncodingPool>,
    pub combined: Vec<CombinedColumn>,
    pub warnings: Vec<String>,
}

/// Runs the encoding control over two blocks of one stimulus class.
pub fn encode(
    model_blocks: &[&ActivationTensor],
    brain_blocks: &[&TrialRecording],
    neurons: Option<&NeuronClassification>,
    m: &RoiMap,
    cfg: &EncodeConfig,
) -> Result<EncodingReport> {
    cfg.encoding.validate()?;
    if cfg.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let first_model = model_blocks.first().ok_or(Error::PopulationTooSmall { needed: 1, got: 0 })?;
    let first_brain = brain_blocks.first().ok_or(Error::PopulationTooSmall { needed: 1, got: 0 })?;
    if model_blocks.len() != brain_blocks.len() {
        return Err(Error::ShapeMismatch("model and brain block counts differ".into()));
    }
    let channels = first_brain.channels().to_vec();
    let mut warnings = Vec::new();
    let (pools, combine) = match neurons {
        Some(_) => (cfg.pools.clone(), cfg.combine.clone()),
        None => {
            warnings.push("no neuron classification; every neuron feeds its layer".into());
            (vec![NeuronPool::AllNeurons], vec![NeuronPool::AllNeurons])
        }
    };
    let class_of = |u: UnitId| neurons.map_or(UnitClass::None, |c| c.get(u));

    // targets depend on the model grid only, which is shared by all layers
    let mut target_cache: Option<(Vec<f64>, Vec<TargetVector>)> = None;
    let mut out_pools = Vec::with_capacity(pools.len());
    for &pool in &pools {
        let mut designs = Vec::new();
        let mut skipped = Vec::new();
        for layer in 0..first_model.n_layers() {
            let members: Vec<usize> = (0..first_model.n_neurons())
                .filter(|&n| pool.admits(class_of(UnitId::new(layer, n))))
                .collect();
            match build_model_features(model_blocks, layer, &members)? {
                Some(d) => designs.push(d),
                None => skipped.push(layer),
            }
        }
        if designs.is_empty() {
            warnings.push(format!("pool {} has no neurons; skipped", pool.as_str()));
            out_pools.push(EncodingPool {
                report: PoolReport { pool, layers_skipped: skipped, table: None, hemispheres: Vec::new(), overlap: Vec::new() },
                scores: Vec::new(),
            });
            continue;
        }
        let freqs = designs[0].freqs.clone();
        if target_cache.as_ref().is_none_or(|(f, _)| *f != freqs) {
            let targets = (0..channels.len())
                .into_par_iter()
                .map(|c| build_brain_targets(brain_blocks, channels[c].channel_id, &freqs))
                .collect::<Result<Vec<_>>>()?;
            for t in &targets {
                if let Some(w) = &t.warning {
                    warnings.push(w.clone());
                }
            }
            target_cache = Some((freqs, targets));
        }
        let targets = &target_cache.as_ref().expect("filled above").1;
        let pairs: Vec<(usize, usize)> =
            (0..designs.len()).flat_map(|d| (0..targets.len()).map(move |t| (d, t))).collect();
        let scores = pairs
            .par_iter()
            .map(|&(d, t)| predictive_score(&designs[d].x, &targets[t].y, &cfg.encoding, designs[d].layer, targets[t].channel))
            .collect::<Result<Vec<_>>>()?;
        let table = score_table(&scores, &channels)?;
        let hemispheres = aggregate_scores(&table, m, cfg.k)?;
        out_pools.push(EncodingPool {
            report: PoolReport { pool, layers_skipped: skipped, table: Some(table), hemispheres, overlap: Vec::new() },
            scores,
        });
    }
    let reports: Vec<PoolReport> = out_pools.iter().map(|p| p.report.clone()).collect();
    Ok(EncodingReport { k: cfg.k, combined: combine_pools(&reports, &combine), pools: out_pools, warnings })
}

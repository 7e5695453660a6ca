//! Model–brain alignment through representational similarity.
//!
//! Every neuron and every channel is summarized by six feature vectors, one
//! per experimental condition (sentence / phrase / random × split A / B).
//! Pairwise cosine dissimilarities between those vectors form a 6×6 SRDM.
//! Neuron SRDMs are averaged per layer, each layer SRDM is rank-correlated
//! with every channel SRDM, and the best `k` channels per layer feed the
//! model–brain (`S(m,b)`) and model–region (`S(m,b_r)`) similarity scores.
//!
//! ```
//! use hftp::alignment::{rsa_spearman, Owner, Srdm};
//!
//! let mut d = [[0.0; 6]; 6];
//! for a in 0..6 {
//!     for b in 0..6 {
//!         if a != b {
//!             d[a][b] = (a + b) as f64 / 10.0;
//!         }
//!     }
//! }
//! let x = Srdm::new(Owner::Layer(0), d).unwrap();
//! assert_eq!(rsa_spearman(&x, &x).unwrap().r, 1.0);
//! ```

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    ActivationTensor, ChannelMeta, ConditionLabel, Hemisphere, Roi, RoiMap, SplitPolicy, StimulusClass, TrialRecording,
    UnitId,
};
use crate::probe_brain::{itpc_trials, ChannelClassification, TrialWindow};
use crate::probe_model::{NeuronClassification, UnitClass};
use crate::spectral::{mean_amplitude, TrialAveraging, BIN_TOLERANCE_HZ};
use crate::stats::{self, Anova, Correlation};

pub const DEFAULT_TOP_K: usize = 100;

/// Features keep the bins in `(0, FEATURE_MAX_HZ]`.
pub const FEATURE_MAX_HZ: f64 = 2.0;

/// Trailing window, in linguistic units, analysed per trial.
pub const DEFAULT_WINDOW_UNITS: usize = 32;

/// What a feature set or SRDM describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Unit(UnitId),
    Channel(usize),
    Layer(usize),
}

impl std::fmt::Display for Owner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Owner::Unit(u) => write!(f, "neuron {u}"),
            Owner::Channel(c) => write!(f, "channel {c}"),
            Owner::Layer(l) => write!(f, "layer {l}"),
        }
    }
}

/// One feature vector per condition, all on the same bin grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionFeatures {
    pub owner: Owner,
    pub freqs: Vec<f64>,
    /// Indexed by [`ConditionLabel::index`].
    pub features: [Vec<f64>; 6],
}

impl ConditionFeatures {
    pub fn new(owner: Owner, freqs: Vec<f64>, features: [Vec<f64>; 6]) -> Result<Self> {
        if features.iter().any(|f| f.len() != freqs.len()) {
            return Err(Error::ShapeMismatch(format!("{owner}: conditions use different bin grids")));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("{owner}: non-finite feature")));
        }
        Ok(ConditionFeatures { owner, freqs, features })
    }

    pub fn get(&self, label: ConditionLabel) -> &[f64] {
        &self.features[label.index()]
    }
}

fn band(freqs: &[f64]) -> std::ops::Range<usize> {
    let lo = freqs.iter().position(|&f| f > BIN_TOLERANCE_HZ).unwrap_or(freqs.len());
    let hi = freqs
        .iter()
        .rposition(|&f| f <= FEATURE_MAX_HZ + BIN_TOLERANCE_HZ)
        .map_or(lo, |i| i + 1);
    lo..hi.max(lo)
}

fn six<T>(mut map: BTreeMap<ConditionLabel, T>, what: &str) -> Result<[T; 6]> {
    let missing: Vec<String> = ConditionLabel::ALL
        .iter()
        .filter(|c| !map.contains_key(c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteDesign(format!("{what}: missing {}", missing.join(", "))));
    }
    let items: Vec<T> = ConditionLabel::ALL.iter().map(|c| map.remove(c).unwrap()).collect();
    Ok(items.try_into().ok().expect("six conditions"))
}

/// Model activations for the six conditions.
#[derive(Debug, Clone)]
pub struct ModelConditions {
    tensors: [ActivationTensor; 6],
    pub averaging: TrialAveraging,
}

impl ModelConditions {
    /// Wraps per-condition tensors (already windowed). Tensors without
    /// trial structure are treated as a single trial.
    pub fn new(map: BTreeMap<ConditionLabel, ActivationTensor>) -> Result<Self> {
        let tensors = six(map, "model activations")?;
        let t0 = &tensors[0];
        for t in &tensors[1..] {
            if (t.n_layers(), t.n_neurons(), t.rate_hz()) != (t0.n_layers(), t0.n_neurons(), t0.rate_hz()) {
                return Err(Error::ShapeMismatch("condition tensors describe different models".into()));
            }
            if t.units_per_trial.unwrap_or(t.n_timepoints()) != t0.units_per_trial.unwrap_or(t0.n_timepoints()) {
                return Err(Error::ShapeMismatch("condition tensors differ in trial length".into()));
            }
        }
        Ok(ModelConditions { tensors, averaging: TrialAveraging::default() })
    }

    /// Splits one tensor per stimulus class into its two halves, keeping the
    /// last `window_units` units of every trial.
    pub fn from_classes(
        classes: [&ActivationTensor; 3],
        policy: SplitPolicy,
        window_units: Option<usize>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (class, t) in StimulusClass::ALL.into_iter().zip(classes) {
            let t = match window_units {
                Some(n) => t.slice_last(n)?,
                None => t.clone(),
            };
            for (label, half) in t.split_conditions(class, policy)? {
                map.insert(label, half);
            }
        }
        Self::new(map)
    }

    pub fn n_layers(&self) -> usize {
        self.tensors[0].n_layers()
    }

    pub fn n_neurons(&self) -> usize {
        self.tensors[0].n_neurons()
    }

    pub fn tensor(&self, label: ConditionLabel) -> &ActivationTensor {
        &self.tensors[label.index()]
    }

    /// Trial-averaged DFT magnitudes of one neuron in each condition.
    pub fn features(&self, unit: UnitId) -> Result<ConditionFeatures> {
        let mut freqs = Vec::new();
        let mut out: [Vec<f64>; 6] = Default::default();
        for (i, t) in self.tensors.iter().enumerate() {
            if !t.contains(unit) {
                return Err(Error::Bounds(format!("{unit} outside the model")));
            }
            let series = t.series_f64(unit);
            let per = t.units_per_trial.unwrap_or(t.n_timepoints());
            let trials: Vec<&[f64]> = series.chunks_exact(per).collect();
            let (f, amps) = mean_amplitude(&trials, t.rate_hz(), self.averaging)?;
            let keep = band(&f);
            out[i] = amps[keep.clone()].to_vec();
            freqs = f[keep].to_vec();
        }
        ConditionFeatures::new(Owner::Unit(unit), freqs, out)
    }
}

/// Recordings for the six conditions.
#[derive(Debug, Clone)]
pub struct BrainConditions {
    recordings: [TrialRecording; 6],
}

impl BrainConditions {
    pub fn new(map: BTreeMap<ConditionLabel, TrialRecording>) -> Result<Self> {
        let recordings = six(map, "recordings")?;
        let r0 = &recordings[0];
        for r in &recordings[1..] {
            if r.channels() != r0.channels() || r.n_samples() != r0.n_samples() || r.rate_hz() != r0.rate_hz() {
                return Err(Error::ShapeMismatch("condition recordings differ in channels or sampling".into()));
            }
        }
        Ok(BrainConditions { recordings })
    }

    pub fn from_classes(
        classes: [&TrialRecording; 3],
        policy: SplitPolicy,
        window: Option<TrialWindow>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (class, r) in StimulusClass::ALL.into_iter().zip(classes) {
            let r = match window {
                Some(w) => r.slice_last(w.n_units, w.unit_sec)?,
                None => r.clone(),
            };
            for (label, half) in r.split_conditions(class, policy)? {
                map.insert(label, half);
            }
        }
        Self::new(map)
    }

    pub fn channels(&self) -> &[ChannelMeta] {
        self.recordings[0].channels()
    }

    pub fn n_channels(&self) -> usize {
        self.recordings[0].n_channels()
    }

    pub fn recording(&self, label: ConditionLabel) -> &TrialRecording {
        &self.recordings[label.index()]
    }

    /// ITPC of one channel in each condition.
    pub fn features(&self, channel: usize) -> Result<ConditionFeatures> {
        let mut freqs = Vec::new();
        let mut out: [Vec<f64>; 6] = Default::default();
        for (i, r) in self.recordings.iter().enumerate() {
            r.channel(channel)?;
            let trials: Vec<Vec<f64>> = (0..r.n_trials())
                .map(|t| r.trial(channel, t).iter().map(|&v| f64::from(v)).collect())
                .collect();
            let s = itpc_trials(channel, &trials, r.rate_hz())?;
            let keep = band(&s.freqs);
            out[i] = s.itpc[keep.clone()].to_vec();
            freqs = s.freqs[keep].to_vec();
        }
        ConditionFeatures::new(Owner::Channel(channel), freqs, out)
    }
}

/// Structure representational dissimilarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Srdm {
    pub owner: Owner,
    pub d: [[f64; 6]; 6],
}

impl Srdm {
    /// Checks symmetry, zero diagonal and the `[0, 2]` range.
    pub fn new(owner: Owner, d: [[f64; 6]; 6]) -> Result<Self> {
        for a in 0..6 {
            if d[a][a] != 0.0 {
                return Err(Error::Validation(format!("{owner}: nonzero diagonal")));
            }
            for b in 0..6 {
                if d[a][b] != d[b][a] || !(0.0..=2.0).contains(&d[a][b]) {
                    return Err(Error::Validation(format!("{owner}: entry ({a}, {b}) = {}", d[a][b])));
                }
            }
        }
        Ok(Srdm { owner, d })
    }

    /// The 15 entries above the diagonal, row by row.
    pub fn upper(&self) -> Vec<f64> {
        (0..6).flat_map(|a| (a + 1..6).map(move |b| (a, b))).map(|(a, b)| self.d[a][b]).collect()
    }
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nx * ny)
}

/// `d[a][b] = 1 − cos(f_a, f_b)`.
pub fn srdm(f: &ConditionFeatures) -> Result<Srdm> {
    if let Some(c) = f.features.iter().position(|v| v.iter().all(|&x| x == 0.0)) {
        return Err(Error::DegenerateFeature(format!("{} in condition {}", f.owner, ConditionLabel::ALL[c])));
    }
    let mut d = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in a + 1..6 {
            let v = (1.0 - cosine(&f.features[a], &f.features[b])).clamp(0.0, 2.0);
            d[a][b] = v;
            d[b][a] = v;
        }
    }
    Ok(Srdm { owner: f.owner, d })
}

/// Layer SRDM: entrywise mean of the similarities `1 − d`, turned back into
/// a dissimilarity. That is the mean of `d`, which is how it is computed.
pub fn layer_srdm(layer: usize, members: &[Srdm]) -> Result<Srdm> {
    if members.is_empty() {
        return Err(Error::PopulationTooSmall { needed: 1, got: 0 });
    }
    let n = members.len() as f64;
    let mut d = [[0.0; 6]; 6];
    for a in 0..6 {
        for b in a + 1..6 {
            let v = (members.iter().map(|m| m.d[a][b]).sum::<f64>() / n).clamp(0.0, 2.0);
            d[a][b] = v;
            d[b][a] = v;
        }
    }
    Ok(Srdm { owner: Owner::Layer(layer), d })
}

/// Spearman correlation of the upper triangles; a constant triangle gives
/// `r = 0` with the degenerate flag set.
pub fn rsa_spearman(a: &Srdm, b: &Srdm) -> Result<Correlation> {
    stats::spearman(&a.upper(), &b.upper())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedChannel {
    pub channel: usize,
    pub score: f64,
}

/// The best `k` channels of a pool for one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub layer: usize,
    pub hemisphere: Option<Hemisphere>,
    pub k: usize,
    /// Every candidate channel id.
    pub pool: Vec<usize>,
    /// Best first; ties by channel id.
    pub top: Vec<RankedChannel>,
    /// `k` exceeded the pool and all channels were kept.
    pub clipped: bool,
}

impl Selection {
    pub fn mean_score(&self) -> Option<f64> {
        (!self.top.is_empty()).then(|| self.top.iter().map(|c| c.score).sum::<f64>() / self.top.len() as f64)
    }

    pub fn contains(&self, channel: usize) -> bool {
        self.top.iter().any(|c| c.channel == channel)
    }
}

/// Ranks `(channel, score)` pairs and keeps the best `k`.
pub fn select_top_k(layer: usize, hemisphere: Option<Hemisphere>, scored: &[(usize, f64)], k: usize) -> Selection {
    let mut ranked: Vec<RankedChannel> = scored.iter().map(|&(channel, score)| RankedChannel { channel, score }).collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.channel.cmp(&b.channel)));
    let mut pool: Vec<usize> = scored.iter().map(|s| s.0).collect();
    pool.sort_unstable();
    let clipped = k > ranked.len();
    ranked.truncate(k);
    Selection { layer, hemisphere, k, pool, top: ranked, clipped }
}

/// RSA of a layer against every channel, then the top `k` by ρ.
pub fn top_k_channels(layer: &Srdm, channels: &[Srdm], k: usize) -> Result<Selection> {
    let Owner::Layer(layer_id) = layer.owner else {
        return Err(Error::Validation(format!("{} is not a layer SRDM", layer.owner)));
    };
    let scored = channels
        .iter()
        .map(|c| match c.owner {
            Owner::Channel(id) => Ok((id, rsa_spearman(layer, c)?.r)),
            other => Err(Error::Validation(format!("{other} is not a channel SRDM"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(select_top_k(layer_id, None, &scored, k))
}

/// Pearson chi-square on a 2×2 table, one degree of freedom, no continuity
/// correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub table: [[usize; 2]; 2],
    pub chi2: f64,
    pub p: f64,
}

pub fn chi_square_2x2(table: [[usize; 2]; 2]) -> Result<ChiSquare> {
    let rows = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let cols = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return Err(Error::UndefinedTest(format!(
            "contingency table {table:?} has an empty row or column; chi-square needs both outcomes on both axes"
        )));
    }
    let n = (rows[0] + rows[1]) as f64;
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = rows[i] as f64 * cols[j] as f64 / n;
            chi2 += (table[i][j] as f64 - expected).powi(2) / expected;
        }
    }
    Ok(ChiSquare { table, chi2, p: stats::chi2_sf(chi2, 1.0) })
}

/// Is membership in the top `k` associated with being a significant
/// (sentence, phrase or dual) channel? Rows: selected / not selected;
/// columns: significant / not.
pub fn overlap_chi_square(selection: &Selection, c: &ChannelClassification) -> Result<ChiSquare> {
    let mut table = [[0usize; 2]; 2];
    for &ch in &selection.pool {
        let class = c
            .class_of(ch)
            .ok_or_else(|| Error::Bounds(format!("channel {ch} has no classification")))?;
        let row = usize::from(!selection.contains(ch));
        let col = usize::from(!class.is_syntactic());
        table[row][col] += 1;
    }
    chi_square_2x2(table)
}

/// `S(m,b)`: mean over layers of the mean score of each layer's selection.
pub fn model_brain_similarity(selections: &[Selection]) -> Result<f64> {
    if selections.is_empty() {
        return Err(Error::PopulationTooSmall { needed: 1, got: 0 });
    }
    let means = selections
        .iter()
        .map(|s| {
            s.mean_score()
                .ok_or_else(|| Error::IncompleteDesign(format!("layer {} has an empty selection", s.layer)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(stats::mean(&means))
}

fn region_of(meta: &ChannelMeta, m: &RoiMap) -> Result<Roi> {
    m.resolve(&meta.aal_label)
}

fn meta_of(channels: &[ChannelMeta], id: usize) -> Result<&ChannelMeta> {
    channels
        .iter()
        .find(|c| c.channel_id == id)
        .ok_or_else(|| Error::Bounds(format!("channel {id} has no metadata")))
}

/// `S(m,b_r)`: like [`model_brain_similarity`] but only over selected
/// channels in `roi` and `hemisphere`. Layers without such channels are
/// skipped; `None` when no layer has any.
pub fn model_region_similarity(
    selections: &[Selection],
    channels: &[ChannelMeta],
    m: &RoiMap,
    roi: Roi,
    hemisphere: Hemisphere,
) -> Result<Option<f64>> {
    let mut layer_means = Vec::new();
    for s in selections {
        let mut sum = 0.0;
        let mut n = 0usize;
        for c in &s.top {
            let meta = meta_of(channels, c.channel)?;
            if meta.hemisphere == hemisphere && region_of(meta, m)? == roi {
                sum += c.score;
                n += 1;
            }
        }
        if n > 0 {
            layer_means.push(sum / n as f64);
        }
    }
    Ok((!layer_means.is_empty()).then(|| stats::mean(&layer_means)))
}

/// `CR_r(L_j)`: the region's share of the selection over its share of the
/// candidate pool.
pub fn contribution_ratio(selection: &Selection, channels: &[ChannelMeta], m: &RoiMap, roi: Roi) -> Result<f64> {
    let in_region = |id: usize| -> Result<bool> { Ok(region_of(meta_of(channels, id)?, m)? == roi) };
    let mut total_r = 0usize;
    for &id in &selection.pool {
        total_r += usize::from(in_region(id)?);
    }
    if total_r == 0 {
        return Err(Error::UndefinedRatio(format!("no candidate channel lies in {roi}")));
    }
    if selection.top.is_empty() {
        return Err(Error::UndefinedRatio(format!("layer {} selected no channels", selection.layer)));
    }
    let mut top_r = 0usize;
    for c in &selection.top {
        top_r += usize::from(in_region(c.channel)?);
    }
    let top_share = top_r as f64 / selection.top.len() as f64;
    let total_share = total_r as f64 / selection.pool.len() as f64;
    Ok(top_share / total_share)
}

/// One-way ANOVA across models, each group holding one model's scores.
pub fn compare_models(groups: &[Vec<f64>]) -> Result<Anova> {
    stats::one_way_anova(groups)
}

/// Scores of every (layer, channel) pair: RSA ρ or encoding predictive
/// scores. Both go through the same aggregation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreTable {
    pub layers: Vec<usize>,
    pub channels: Vec<ChannelMeta>,
    /// `scores[i][c]` pairs `layers[i]` with `channels[c]`.
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(layers: Vec<usize>, channels: Vec<ChannelMeta>, scores: Vec<Vec<f64>>) -> Result<Self> {
        if scores.len() != layers.len() || scores.iter().any(|r| r.len() != channels.len()) {
            return Err(Error::ShapeMismatch("score table does not match its layers and channels".into()));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite score".into()));
        }
        Ok(ScoreTable { layers, channels, scores })
    }

    /// Top-`k` selection per layer among the channels of `hemisphere`
    /// (`None`: all channels).
    pub fn select(&self, k: usize, hemisphere: Option<Hemisphere>) -> Vec<Selection> {
        self.layers
            .iter()
            .zip(&self.scores)
            .map(|(&layer, row)| {
                let scored: Vec<(usize, f64)> = self
                    .channels
                    .iter()
                    .zip(row)
                    .filter(|(c, _)| hemisphere.is_none_or(|h| c.hemisphere == h))
                    .map(|(c, &s)| (c.channel_id, s))
                    .collect();
                select_top_k(layer, hemisphere, &scored, k)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionScore {
    pub roi: Roi,
    /// `None` prints as `/`.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionRow {
    pub layer: usize,
    pub roi: Roi,
    /// `None` when the hemisphere has no channel in the region.
    pub ratio: Option<f64>,
}

/// Aggregates for one hemisphere's column.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HemisphereAggregate {
    pub hemisphere: Hemisphere,
    pub selections: Vec<Selection>,
    /// `None` when the hemisphere has no channels.
    pub model_brain: Option<f64>,
    pub regions: Vec<RegionScore>,
    pub contributions: Vec<ContributionRow>,
}

impl HemisphereAggregate {
    pub fn region(&self, roi: Roi) -> Option<f64> {
        self.regions.iter().find(|r| r.roi == roi).and_then(|r| r.similarity)
    }

    /// Per-layer mean selected score, the unit of the model ANOVA.
    pub fn layer_means(&self) -> Vec<f64> {
        self.selections.iter().filter_map(Selection::mean_score).collect()
    }
}

/// Hemisphere-partitioned selection and every similarity metric.
pub fn aggregate_scores(table: &ScoreTable, m: &RoiMap, k: usize) -> Result<Vec<HemisphereAggregate>> {
    Hemisphere::BOTH
        .iter()
        .map(|&h| {
            let selections = table.select(k, Some(h));
            let has_channels = selections.first().is_some_and(|s| !s.pool.is_empty());
            let model_brain = if has_channels { Some(model_brain_similarity(&selections)?) } else { None };
            let regions = Roi::ALL
                .iter()
                .map(|&roi| {
                    Ok(RegionScore { roi, similarity: model_region_similarity(&selections, &table.channels, m, roi, h)? })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut contributions = Vec::new();
            for s in &selections {
                for &roi in Roi::ALL.iter() {
                    let ratio = match contribution_ratio(s, &table.channels, m, roi) {
                        Ok(r) => Some(r),
                        Err(Error::UndefinedRatio(_)) => None,
                        Err(e) => return Err(e),
                    };
                    contributions.push(ContributionRow { layer: s.layer, roi, ratio });
                }
            }
            Ok(HemisphereAggregate { hemisphere: h, selections, model_brain, regions, contributions })
        })
        .collect()
}

/// Which neurons feed a layer SRDM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronPool {
    Sentence,
    Phrase,
    Both,
    /// Union of the three classes.
    Syntactic,
    /// Every neuron, classified or not.
    AllNeurons,
}

impl NeuronPool {
    pub fn admits(self, class: UnitClass) -> bool {
        match self {
            NeuronPool::Sentence => class == UnitClass::Sentence,
            NeuronPool::Phrase => class == UnitClass::Phrase,
            NeuronPool::Both => class == UnitClass::Both,
            NeuronPool::Syntactic => class.is_syntactic(),
            NeuronPool::AllNeurons => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NeuronPool::Sentence => "sentence",
            NeuronPool::Phrase => "phrase",
            NeuronPool::Both => "both",
            NeuronPool::Syntactic => "syntactic",
            NeuronPool::AllNeurons => "all_neurons",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub k: usize,
    pub pools: Vec<NeuronPool>,
    /// Pools whose scores are averaged into the headline numbers.
    pub combine: Vec<NeuronPool>,
    /// Also report, per classified neuron, its best-matching channel.
    pub neuron_diagnostics: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            k: DEFAULT_TOP_K,
            pools: vec![NeuronPool::Sentence, NeuronPool::Phrase, NeuronPool::Both, NeuronPool::Syntactic],
            combine: vec![NeuronPool::Sentence, NeuronPool::Phrase, NeuronPool::Both],
            neuron_diagnostics: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapRow {
    pub layer: usize,
    pub hemisphere: Hemisphere,
    pub test: Option<ChiSquare>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolReport {
    pub pool: NeuronPool,
    pub layers_skipped: Vec<usize>,
    pub table: Option<ScoreTable>,
    pub hemispheres: Vec<HemisphereAggregate>,
    pub overlap: Vec<OverlapRow>,
}

impl PoolReport {
    pub fn hemisphere(&self, h: Hemisphere) -> Option<&HemisphereAggregate> {
        self.hemispheres.iter().find(|a| a.hemisphere == h)
    }
}

/// Arithmetic mean over the combined pools of one hemisphere's scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedColumn {
    pub hemisphere: Hemisphere,
    pub model_brain: Option<f64>,
    pub regions: Vec<RegionScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeuronDiagnostic {
    pub unit: UnitId,
    pub class: UnitClass,
    pub best_channel: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignmentReport {
    pub k: usize,
    pub pools: Vec<PoolReport>,
    pub combined: Vec<CombinedColumn>,
    pub neuron_diagnostics: Vec<NeuronDiagnostic>,
    pub warnings: Vec<String>,
}

impl AlignmentReport {
    pub fn pool(&self, pool: NeuronPool) -> Option<&PoolReport> {
        self.pools.iter().find(|p| p.pool == pool)
    }

    pub fn column(&self, h: Hemisphere) -> Option<&CombinedColumn> {
        self.combined.iter().find(|c| c.hemisphere == h)
    }
}

fn mean_of_some(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| stats::mean(&v))
}

/// Combines pool reports into one column per hemisphere.
pub fn combine_pools(pools: &[PoolReport], combine: &[NeuronPool]) -> Vec<CombinedColumn> {
    let chosen: Vec<&PoolReport> = pools.iter().filter(|p| combine.contains(&p.pool)).collect();
    Hemisphere::BOTH
        .iter()
        .map(|&h| {
            let columns: Vec<&HemisphereAggregate> = chosen.iter().filter_map(|p| p.hemisphere(h)).collect();
            CombinedColumn {
                hemisphere: h,
                model_brain: mean_of_some(columns.iter().map(|c| c.model_brain)),
                regions: Roi::ALL
                    .iter()
                    .map(|&roi| RegionScore { roi, similarity: mean_of_some(columns.iter().map(|c| c.region(roi))) })
                    .collect(),
            }
        })
        .collect()
}

/// Runs RSA alignment end to end.
///
/// Without a neuron classification every neuron of a layer feeds its SRDM
/// (a single [`NeuronPool::AllNeurons`] pool). With a channel
/// classification the top-`k` overlap with significant channels is tested
/// for every layer and hemisphere.
pub fn align(
    model: &ModelConditions,
    brain: &BrainConditions,
    neurons: Option<&NeuronClassification>,
    channels: Option<&ChannelClassification>,
    m: &RoiMap,
    cfg: &AlignConfig,
) -> Result<AlignmentReport> {
    if cfg.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let mut warnings = Vec::new();
    for h in Hemisphere::BOTH {
        let n = brain.channels().iter().filter(|c| c.hemisphere == h).count();
        if n < cfg.k {
            warnings.push(format!("k = {} exceeds the {n} channels of hemisphere {h}; all are used", cfg.k));
        }
    }
    let (pools, combine) = match neurons {
        Some(c) => {
            if (c.n_layers, c.n_neurons) != (model.n_layers(), model.n_neurons()) {
                return Err(Error::ShapeMismatch("neuron classification does not match the model".into()));
            }
            (cfg.pools.clone(), cfg.combine.clone())
        }
        None => {
            warnings.push("no neuron classification; every neuron feeds its layer SRDM".into());
            (vec![NeuronPool::AllNeurons], vec![NeuronPool::AllNeurons])
        }
    };
    let class_of = |u: UnitId| neurons.map_or(UnitClass::None, |c| c.get(u));

    let channel_srdms = (0..brain.n_channels())
        .into_par_iter()
        .map(|ch| srdm(&brain.features(ch)?))
        .collect::<Result<Vec<_>>>()?;

    let needed: BTreeSet<UnitId> = (0..model.n_layers())
        .flat_map(|l| (0..model.n_neurons()).map(move |n| UnitId::new(l, n)))
        .filter(|&u| pools.iter().any(|p| p.admits(class_of(u))))
        .collect();
    let needed: Vec<UnitId> = needed.into_iter().collect();
    let neuron_srdms: BTreeMap<UnitId, Srdm> = needed
        .par_iter()
        .map(|&u| Ok((u, srdm(&model.features(u)?)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let mut reports = Vec::with_capacity(pools.len());
    for &pool in &pools {
        let mut layers = Vec::new();
        let mut skipped = Vec::new();
        let mut layer_srdms = Vec::new();
        for layer in 0..model.n_layers() {
            let members: Vec<Srdm> = neuron_srdms
                .iter()
                .filter(|(u, _)| u.layer == layer && pool.admits(class_of(**u)))
                .map(|(_, s)| s.clone())
                .collect();
            if members.is_empty() {
                skipped.push(layer);
            } else {
                layers.push(layer);
                layer_srdms.push(layer_srdm(layer, &members)?);
            }
        }
        if layers.is_empty() {
            warnings.push(format!("pool {} has no neurons; skipped", pool.as_str()));
            reports.push(PoolReport { pool, layers_skipped: skipped, table: None, hemispheres: Vec::new(), overlap: Vec::new() });
            continue;
        }
        let scores = layer_srdms
            .par_iter()
            .map(|l| channel_srdms.iter().map(|c| Ok(rsa_spearman(l, c)?.r)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let table = ScoreTable::new(layers, brain.channels().to_vec(), scores)?;
        let hemispheres = aggregate_scores(&table, m, cfg.k)?;
        let mut overlap = Vec::new();
        if let Some(cc) = channels {
            for agg in &hemispheres {
                for s in &agg.selections {
                    let (test, note) = match overlap_chi_square(s, cc) {
                        Ok(t) => (Some(t), None),
                        Err(e @ Error::UndefinedTest(_)) => (None, Some(e.to_string())),
                        Err(e) => return Err(e),
                    };
                    overlap.push(OverlapRow { layer: s.layer, hemisphere: agg.hemisphere, test, note });
                }
            }
        }
        reports.push(PoolReport { pool, layers_skipped: skipped, table: Some(table), hemispheres, overlap });
    }

    let mut neuron_diagnostics = Vec::new();
    if cfg.neuron_diagnostics {
        for (&unit, s) in &neuron_srdms {
            let class = class_of(unit);
            if neurons.is_some() && !class.is_syntactic() {
                continue;
            }
            let mut best = (0usize, f64::NEG_INFINITY);
            for c in &channel_srdms {
                let Owner::Channel(id) = c.owner else { unreachable!() };
                let r = rsa_spearman(s, c)?.r;
                if r > best.1 {
                    best = (id, r);
                }
            }
            neuron_diagnostics.push(NeuronDiagnostic { unit, class, best_channel: best.0, rho: best.1 });
        }
    }

    Ok(AlignmentReport {
        k: cfg.k,
        combined: combine_pools(&reports, &combine),
        pools: reports,
        neuron_diagnostics,
        warnings,
    })
}

//! Significance testing and classification of MLP neurons.
//!
//! The probe runs in two stages:
//!
//! 1. **Permutation significance.** For each neuron the amplitude statistic
//!    at a target frequency is compared against the 95% interval of the same
//!    statistic over random reorderings of the neuron's time series. Units
//!    outside the interval form the significant set `S_f`.
//! 2. **Deviation threshold.** Amplitudes of the experimental corpus and its
//!    word-order-randomized control are z-scored, their difference `z_dev`
//!    taken, and members of `S_f` with `z_dev >= μ + 2σ` are kept. At 1 Hz
//!    these are sentence neurons, at 2 Hz phrase neurons.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{ActivationTensor, UnitId};
use crate::spectral::{bin_of, AmpMode, BinKernel};
use crate::stats::{self, Correlation};

/// Frequencies are snapped to the nearest bin within this distance.
pub const FREQ_SNAP_HZ: f64 = 1e-6;

/// Minimum permutation count; below this the 2.5% / 97.5% quantiles are
/// too unstable to mean anything.
pub const MIN_PERMUTATIONS: usize = 100;

/// Threshold in standard deviations above the mean deviation.
pub const Z_THRESHOLD_SD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub n_perm: usize,
    pub alpha: f64,
    pub seed: u64,
    pub mode: AmpMode,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig { n_perm: 1000, alpha: 0.05, seed: 0, mode: AmpMode::Real }
    }
}

impl PermutationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_perm < MIN_PERMUTATIONS {
            return Err(Error::Config(format!(
                "n_perm = {} is below the minimum of {MIN_PERMUTATIONS}",
                self.n_perm
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Observed statistic against its permutation interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub freq_hz: f64,
    pub observed: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_perm: usize,
    pub significant: bool,
}

impl PermutationResult {
    /// Builds the result from the permuted statistics (consumed and sorted).
    pub fn from_null(freq_hz: f64, observed: f64, mut null: Vec<f64>, alpha: f64) -> Self {
        null.sort_by(f64::total_cmp);
        let ci_low = stats::quantile_sorted(&null, alpha / 2.0);
        let ci_high = stats::quantile_sorted(&null, 1.0 - alpha / 2.0);
        PermutationResult {
            freq_hz,
            observed,
            ci_low,
            ci_high,
            n_perm: null.len(),
            significant: observed < ci_low || observed > ci_high,
        }
    }
}

/// RNG for one unit: the global seed picks the key, the unit picks the
/// stream, so results do not depend on scheduling.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn unit_stream(unit: UnitId) -> u64 {
    ((unit.layer as u64) << 32) | unit.neuron as u64
}

/// Permutation test of one series at several frequencies at once; every
/// permutation is scored at all frequencies.
pub fn permutation_ci_multi(
    series: &[f64],
    rate_hz: f64,
    freqs_hz: &[f64],
    cfg: &PermutationConfig,
    stream: u64,
) -> Result<Vec<PermutationResult>> {
    cfg.validate()?;
    let n = series.len();
    let kernels = freqs_hz
        .iter()
        .map(|&f| bin_of(f, n, rate_hz, FREQ_SNAP_HZ).map(|k| BinKernel::new(k, n)))
        .collect::<Result<Vec<_>>>()?;
    let score = |k: &BinKernel, xs: &[f64]| match cfg.mode {
        AmpMode::Real => k.eval_re(xs),
        AmpMode::Magnitude => k.eval(xs).norm(),
    };
    let observed: Vec<f64> = kernels.iter().map(|k| score(k, series)).collect();
    let mut nulls = vec![Vec::with_capacity(cfg.n_perm); kernels.len()];
    let mut rng = stream_rng(cfg.seed, stream);
    let mut shuffled = series.to_vec();
    for _ in 0..cfg.n_perm {
        shuffled.shuffle(&mut rng);
        for (k, null) in kernels.iter().zip(nulls.iter_mut()) {
            null.push(score(k, &shuffled));
        }
    }
    Ok(freqs_hz
        .iter()
        .zip(observed)
        .zip(nulls)
        .map(|((&f, obs), null)| PermutationResult::from_null(f, obs, null, cfg.alpha))
        .collect())
}

/// Permutation confidence interval of the amplitude statistic at `freq_hz`.
///
/// The time order of `series` is shuffled `n_perm` times; the interval is
/// the empirical `[α/2, 1 − α/2]` quantile range (linear interpolation).
pub fn permutation_ci(series: &[f64], rate_hz: f64, freq_hz: f64, cfg: &PermutationConfig) -> Result<PermutationResult> {
    Ok(permutation_ci_multi(series, rate_hz, &[freq_hz], cfg, 0)?.remove(0))
}

/// The significant set `S_f` together with every unit's test result.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificantSet {
    pub freq_hz: f64,
    pub members: BTreeSet<UnitId>,
    pub results: BTreeMap<UnitId, PermutationResult>,
}

impl SignificantSet {
    pub fn contains(&self, unit: UnitId) -> bool {
        self.members.contains(&unit)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members in one layer, by neuron index.
    pub fn layer_members(&self, layer: usize) -> Vec<usize> {
        self.members.iter().filter(|u| u.layer == layer).map(|u| u.neuron).collect()
    }
}

/// Runs the permutation test on every unit of `t` at each frequency.
pub fn significant_sets(t: &ActivationTensor, freqs_hz: &[f64], cfg: &PermutationConfig) -> Result<Vec<SignificantSet>> {
    cfg.validate()?;
    let units: Vec<UnitId> = t.unit_ids().collect();
    let per_unit = units
        .par_iter()
        .map(|&u| permutation_ci_multi(&t.series_f64(u), t.rate_hz(), freqs_hz, cfg, unit_stream(u)))
        .collect::<Result<Vec<_>>>()?;
    Ok(freqs_hz
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let results: BTreeMap<UnitId, PermutationResult> =
                units.iter().zip(&per_unit).map(|(&u, r)| (u, r[i])).collect();
            let members = results.iter().filter(|(_, r)| r.significant).map(|(&u, _)| u).collect();
            SignificantSet { freq_hz: f, members, results }
        })
        .collect())
}

/// `S_f`: units whose statistic falls outside its permutation interval.
pub fn significant_neurons(t: &ActivationTensor, freq_hz: f64, cfg: &PermutationConfig) -> Result<SignificantSet> {
    Ok(significant_sets(t, &[freq_hz], cfg)?.remove(0))
}

/// Population over which amplitudes are standardized and the deviation
/// threshold is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZPopulation {
    /// Every unit of the tensor.
    #[default]
    AllUnits,
    /// Only members of `S_f`.
    Significant,
}

/// Whether statistics are pooled across layers or computed per layer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZScope {
    #[default]
    Pooled,
    PerLayer,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZScoreOptions {
    pub population: ZPopulation,
    pub scope: ZScope,
    pub mode: AmpMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZScoreEntry {
    pub unit: UnitId,
    pub z_exp: f64,
    pub z_ctrl: f64,
    pub z_dev: f64,
}

/// Mean and standard deviation of `z_dev` over the reference population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZThreshold {
    pub mu: f64,
    pub sigma: f64,
}

impl ZThreshold {
    pub fn cutoff(&self) -> f64 {
        self.mu + Z_THRESHOLD_SD * self.sigma
    }
}

/// Deviations for the members of `S_f` at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZScoreTable {
    pub freq_hz: f64,
    pub n_layers: usize,
    pub n_neurons: usize,
    pub entries: Vec<ZScoreEntry>,
    /// One threshold when pooled, one per layer otherwise.
    pub thresholds: Vec<ZThreshold>,
    pub scope: ZScope,
}

impl ZScoreTable {
    pub fn threshold_for(&self, layer: usize) -> ZThreshold {
        match self.scope {
            ZScope::Pooled => self.thresholds[0],
            ZScope::PerLayer => self.thresholds[layer],
        }
    }

    pub fn entry(&self, unit: UnitId) -> Option<&ZScoreEntry> {
        self.entries.iter().find(|e| e.unit == unit)
    }
}

fn amplitudes(t: &ActivationTensor, freq_hz: f64, mode: AmpMode) -> Result<Vec<f64>> {
    let n = t.n_timepoints();
    let kernel = BinKernel::new(bin_of(freq_hz, n, t.rate_hz(), FREQ_SNAP_HZ)?, n);
    let units: Vec<UnitId> = t.unit_ids().collect();
    Ok(units
        .par_iter()
        .map(|&u| mode.apply(kernel.eval(&t.series_f64(u))))
        .collect())
}

fn standardize(values: &[f64], population: &[usize], what: &str) -> Result<Vec<(usize, f64)>> {
    let pop: Vec<f64> = population.iter().map(|&i| values[i]).collect();
    let m = stats::mean(&pop);
    let sd = stats::sample_sd(&pop);
    if !(sd > 0.0) {
        return Err(Error::DegeneratePopulation(format!("{what} amplitudes have zero variance")));
    }
    Ok(population.iter().map(|&i| (i, (values[i] - m) / sd)).collect())
}

/// z-score deviation between the experimental and control corpora at `freq_hz`.
///
/// Within each corpus the amplitude of every unit in the reference
/// population is z-scored against that population; `z_dev = z_exp − z_ctrl`.
/// The table keeps the members of `s` only, while `μ` and `σ` describe
/// `z_dev` over the whole reference population.
pub fn zscore_deviation(
    exp: &ActivationTensor,
    ctrl: &ActivationTensor,
    s: &SignificantSet,
    freq_hz: f64,
    opts: &ZScoreOptions,
) -> Result<ZScoreTable> {
    if (exp.n_layers(), exp.n_neurons(), exp.n_timepoints()) != (ctrl.n_layers(), ctrl.n_neurons(), ctrl.n_timepoints())
        || exp.rate_hz() != ctrl.rate_hz()
    {
        return Err(Error::ShapeMismatch("experimental and control tensors differ in shape".into()));
    }
    let n_neurons = exp.n_neurons();
    let index = |u: &UnitId| u.layer * n_neurons + u.neuron;
    let a_exp = amplitudes(exp, freq_hz, opts.mode)?;
    let a_ctrl = amplitudes(ctrl, freq_hz, opts.mode)?;

    let groups: Vec<Vec<usize>> = match opts.scope {
        ZScope::Pooled => vec![(0..exp.n_units()).collect()],
        ZScope::PerLayer => (0..exp.n_layers())
            .map(|l| (l * n_neurons..(l + 1) * n_neurons).collect())
            .collect(),
    };

    let mut entries = Vec::new();
    let mut thresholds = Vec::with_capacity(groups.len());
    for group in groups {
        let population: Vec<usize> = match opts.population {
            ZPopulation::AllUnits => group,
            ZPopulation::Significant => {
                s.members.iter().map(index).filter(|i| group.contains(i)).collect()
            }
        };
        if population.len() < 3 {
            return Err(Error::PopulationTooSmall { needed: 3, got: population.len() });
        }
        let z_exp = standardize(&a_exp, &population, "experimental")?;
        let z_ctrl = standardize(&a_ctrl, &population, "control")?;
        let dev: Vec<(usize, f64, f64, f64)> = z_exp
            .iter()
            .zip(&z_ctrl)
            .map(|(&(i, ze), &(_, zc))| (i, ze, zc, ze - zc))
            .collect();
        let devs: Vec<f64> = dev.iter().map(|d| d.3).collect();
        thresholds.push(ZThreshold { mu: stats::mean(&devs), sigma: stats::sample_sd(&devs) });
        for (i, z_exp, z_ctrl, z_dev) in dev {
            let unit = UnitId::new(i / n_neurons, i % n_neurons);
            if s.contains(unit) {
                entries.push(ZScoreEntry { unit, z_exp, z_ctrl, z_dev });
            }
        }
    }
    entries.sort_by_key(|e| e.unit);
    Ok(ZScoreTable {
        freq_hz,
        n_layers: exp.n_layers(),
        n_neurons,
        entries,
        thresholds,
        scope: opts.scope,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitClass {
    #[default]
    None,
    Sentence,
    Phrase,
    Both,
}

impl UnitClass {
    pub fn from_hits(sentence: bool, phrase: bool) -> Self {
        match (sentence, phrase) {
            (true, true) => UnitClass::Both,
            (true, false) => UnitClass::Sentence,
            (false, true) => UnitClass::Phrase,
            (false, false) => UnitClass::None,
        }
    }

    pub fn is_syntactic(self) -> bool {
        self != UnitClass::None
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnitClass::None => "none",
            UnitClass::Sentence => "sentence",
            UnitClass::Phrase => "phrase",
            UnitClass::Both => "both",
        }
    }
}

/// Class of every unit of a tensor, `(layer, neuron)` row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronClassification {
    pub n_layers: usize,
    pub n_neurons: usize,
    pub classes: Vec<UnitClass>,
}

impl NeuronClassification {
    pub fn empty(n_layers: usize, n_neurons: usize) -> Self {
        NeuronClassification { n_layers, n_neurons, classes: vec![UnitClass::None; n_layers * n_neurons] }
    }

    pub fn get(&self, unit: UnitId) -> UnitClass {
        self.classes[unit.layer * self.n_neurons + unit.neuron]
    }

    pub fn set(&mut self, unit: UnitId, class: UnitClass) {
        self.classes[unit.layer * self.n_neurons + unit.neuron] = class;
    }

    pub fn iter(&self) -> impl Iterator<Item = (UnitId, UnitClass)> + '_ {
        self.classes
            .iter()
            .enumerate()
            .map(move |(i, &c)| (UnitId::new(i / self.n_neurons, i % self.n_neurons), c))
    }

    /// Neuron indices of `layer` whose class passes `filter`.
    pub fn layer_members(&self, layer: usize, filter: impl Fn(UnitClass) -> bool) -> Vec<usize> {
        (0..self.n_neurons)
            .filter(|&n| filter(self.get(UnitId::new(layer, n))))
            .collect()
    }
}

fn hits(table: &ZScoreTable) -> Result<BTreeSet<UnitId>> {
    let mut out = BTreeSet::new();
    for e in &table.entries {
        let th = table.threshold_for(e.unit.layer);
        if !(th.sigma > 0.0) {
            return Err(Error::DegeneratePopulation(format!(
                "z deviations at {} Hz have zero spread",
                table.freq_hz
            )));
        }
        if e.z_dev >= th.cutoff() {
            out.insert(e.unit);
        }
    }
    Ok(out)
}

/// Sentence iff the 1 Hz table passes alone, phrase iff the 2 Hz table
/// passes alone, both iff both pass. The comparison is inclusive.
pub fn classify_neurons(z_sentence: &ZScoreTable, z_phrase: &ZScoreTable) -> Result<NeuronClassification> {
    if (z_sentence.n_layers, z_sentence.n_neurons) != (z_phrase.n_layers, z_phrase.n_neurons) {
        return Err(Error::ShapeMismatch("z tables describe different tensors".into()));
    }
    let s = hits(z_sentence)?;
    let p = hits(z_phrase)?;
    let mut out = NeuronClassification::empty(z_sentence.n_layers, z_sentence.n_neurons);
    for &u in s.union(&p) {
        out.set(u, UnitClass::from_hits(s.contains(&u), p.contains(&u)));
    }
    Ok(out)
}

/// Per-layer counts of exclusive sentence, exclusive phrase and dual units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub layer: usize,
    pub width: usize,
    pub n_sentence: usize,
    pub n_phrase: usize,
    pub n_both: usize,
    /// `(sentence + phrase + both) / width`.
    pub proportion: f64,
    /// Share of all syntactic units of the model that sit in this layer.
    pub share_of_syntactic: f64,
}

impl LayerRow {
    pub fn n_syntactic(&self) -> usize {
        self.n_sentence + self.n_phrase + self.n_both
    }
}

pub fn layer_distribution(c: &NeuronClassification) -> Vec<LayerRow> {
    let mut rows: Vec<LayerRow> = (0..c.n_layers)
        .map(|layer| {
            let mut row = LayerRow {
                layer,
                width: c.n_neurons,
                n_sentence: 0,
                n_phrase: 0,
                n_both: 0,
                proportion: 0.0,
                share_of_syntactic: 0.0,
            };
            for n in 0..c.n_neurons {
                match c.get(UnitId::new(layer, n)) {
                    UnitClass::Sentence => row.n_sentence += 1,
                    UnitClass::Phrase => row.n_phrase += 1,
                    UnitClass::Both => row.n_both += 1,
                    UnitClass::None => {}
                }
            }
            row.proportion = row.n_syntactic() as f64 / c.n_neurons as f64;
            row
        })
        .collect();
    let total: usize = rows.iter().map(LayerRow::n_syntactic).sum();
    if total > 0 {
        for row in &mut rows {
            row.share_of_syntactic = row.n_syntactic() as f64 / total as f64;
        }
    }
    rows
}

/// Pearson correlation across layers between sentence-neuron and
/// phrase-neuron counts. Dual units count towards both.
pub fn covariance_trend(rows: &[LayerRow]) -> Result<Correlation> {
    let sentence: Vec<f64> = rows.iter().map(|r| (r.n_sentence + r.n_both) as f64).collect();
    let phrase: Vec<f64> = rows.iter().map(|r| (r.n_phrase + r.n_both) as f64).collect();
    stats::pearson(&sentence, &phrase)
}

/// Per-layer overlap of the syntactic units found for two languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BilingualRow {
    pub layer: usize,
    pub first_only: usize,
    pub second_only: usize,
    pub shared: usize,
}

/// Set algebra over two classifications of the same model (e.g. Chinese
/// and English corpora). A unit is syntactic in a language iff its class is
/// not `none` there.
pub fn bilingual_sets(first: &NeuronClassification, second: &NeuronClassification) -> Result<Vec<BilingualRow>> {
    if (first.n_layers, first.n_neurons) != (second.n_layers, second.n_neurons) {
        return Err(Error::Validation(format!(
            "classifications differ in shape: {}x{} vs {}x{}",
            first.n_layers, first.n_neurons, second.n_layers, second.n_neurons
        )));
    }
    Ok((0..first.n_layers)
        .map(|layer| {
            let mut row = BilingualRow { layer, first_only: 0, second_only: 0, shared: 0 };
            for n in 0..first.n_neurons {
                let u = UnitId::new(layer, n);
                match (first.get(u).is_syntactic(), second.get(u).is_syntactic()) {
                    (true, true) => row.shared += 1,
                    (true, false) => row.first_only += 1,
                    (false, true) => row.second_only += 1,
                    (false, false) => {}
                }
            }
            row
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelProbeConfig {
    pub permutation: PermutationConfig,
    pub zscore: ZScoreOptions,
    pub sentence_hz: f64,
    pub phrase_hz: f64,
}

impl Default for ModelProbeConfig {
    fn default() -> Self {
        ModelProbeConfig {
            permutation: PermutationConfig::default(),
            zscore: ZScoreOptions::default(),
            sentence_hz: 1.0,
            phrase_hz: 2.0,
        }
    }
}

/// Everything the model probe produces for one experimental/control pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelProbeReport {
    pub sentence_set: SignificantSet,
    pub phrase_set: SignificantSet,
    pub z_sentence: ZScoreTable,
    pub z_phrase: ZScoreTable,
    pub classification: NeuronClassification,
    pub layers: Vec<LayerRow>,
    pub covariance: Option<Correlation>,
}

// An empty table never consults its thresholds, so it is always pooled.
fn empty_table(t: &ActivationTensor, freq_hz: f64) -> ZScoreTable {
    ZScoreTable {
        freq_hz,
        n_layers: t.n_layers(),
        n_neurons: t.n_neurons(),
        entries: Vec::new(),
        thresholds: vec![ZThreshold { mu: f64::NAN, sigma: f64::NAN }],
        scope: ZScope::Pooled,
    }
}

/// Runs both stages at the sentence and phrase rates.
pub fn probe_model(exp: &ActivationTensor, ctrl: &ActivationTensor, cfg: &ModelProbeConfig) -> Result<ModelProbeReport> {
    let mut sets = significant_sets(exp, &[cfg.sentence_hz, cfg.phrase_hz], &cfg.permutation)?;
    let phrase_set = sets.pop().expect("two sets");
    let sentence_set = sets.pop().expect("two sets");
    let table = |s: &SignificantSet| {
        if s.is_empty() {
            Ok(empty_table(exp, s.freq_hz))
        } else {
            zscore_deviation(exp, ctrl, s, s.freq_hz, &cfg.zscore)
        }
    };
    let z_sentence = table(&sentence_set)?;
    let z_phrase = table(&phrase_set)?;
    let classification = classify_neurons(&z_sentence, &z_phrase)?;
    let layers = layer_distribution(&classification);
    let covariance = if layers.len() >= 2 { Some(covariance_trend(&layers)?) } else { None };
    Ok(ModelProbeReport { sentence_set, phrase_set, z_sentence, z_phrase, classification, layers, covariance })
}

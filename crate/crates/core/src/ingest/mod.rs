//! Data model and interchange formats.
//!
//! Model activations live in an [`ActivationTensor`] (layers × neurons ×
//! timepoints, one timepoint per syllable or word). Intracranial recordings
//! live in a [`TrialRecording`] (channels × trials × samples) with one
//! [`ChannelMeta`] per channel. Both serialize to small custom binary
//! formats, see [`format`].

mod format;
mod roi;
mod scenario;
mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{
    activation_bytes, activation_from_bytes, read_activation_file, read_trial_recording, recording_bytes,
    recording_from_bytes, write_activation_file, write_trial_recording,
    ACTIVATION_MAGIC, RECORDING_MAGIC,
};
pub use roi::{load_roi_map, Roi, RoiMap};
pub use scenario::{generate_scenario, scenario_specs, Scenario, ScenarioConfig};
pub use synth::{synth_generate, ChannelSpec, Plant, SynthOutput, SynthShape, SynthSpec, UnitSelector};

/// Address of one MLP neuron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UnitId {
    pub layer: usize,
    pub neuron: usize,
}

impl UnitId {
    pub fn new(layer: usize, neuron: usize) -> Self {
        UnitId { layer, neuron }
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}N{}", self.layer, self.neuron)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StimulusClass {
    Sentence,
    Phrase,
    Random,
}

impl StimulusClass {
    pub const ALL: [StimulusClass; 3] =
        [StimulusClass::Sentence, StimulusClass::Phrase, StimulusClass::Random];

    pub fn as_str(self) -> &'static str {
        match self {
            StimulusClass::Sentence => "sentence",
            StimulusClass::Phrase => "phrase",
            StimulusClass::Random => "random",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    A,
    B,
}

/// One of the six experimental conditions: stimulus class × trial half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditionLabel {
    pub stimulus_class: StimulusClass,
    pub split: Split,
}

impl ConditionLabel {
    pub const ALL: [ConditionLabel; 6] = [
        ConditionLabel::new(StimulusClass::Sentence, Split::A),
        ConditionLabel::new(StimulusClass::Sentence, Split::B),
        ConditionLabel::new(StimulusClass::Phrase, Split::A),
        ConditionLabel::new(StimulusClass::Phrase, Split::B),
        ConditionLabel::new(StimulusClass::Random, Split::A),
        ConditionLabel::new(StimulusClass::Random, Split::B),
    ];

    pub const fn new(stimulus_class: StimulusClass, split: Split) -> Self {
        ConditionLabel { stimulus_class, split }
    }

    /// Position in [`ConditionLabel::ALL`].
    pub fn index(self) -> usize {
        let class = match self.stimulus_class {
            StimulusClass::Sentence => 0,
            StimulusClass::Phrase => 1,
            StimulusClass::Random => 2,
        };
        class * 2 + usize::from(self.split == Split::B)
    }
}

impl fmt::Display for ConditionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let split = match self.split {
            Split::A => "A",
            Split::B => "B",
        };
        write!(f, "{}-{}", self.stimulus_class.as_str(), split)
    }
}

/// How a block of trials is cut into the A and B halves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    /// First half of the trials is A, second half is B.
    #[default]
    Contiguous,
    /// Even-indexed trials are A, odd-indexed trials are B.
    Interleaved,
}

impl SplitPolicy {
    /// Trial indices for halves A and B. `n_trials` must be even.
    pub fn partition(self, n_trials: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if n_trials < 2 || n_trials % 2 != 0 {
            return Err(Error::Validation(format!(
                "cannot split {n_trials} trials into two equal halves"
            )));
        }
        Ok(match self {
            SplitPolicy::Contiguous => {
                let half = n_trials / 2;
                ((0..half).collect(), (half..n_trials).collect())
            }
            SplitPolicy::Interleaved => (
                (0..n_trials).step_by(2).collect(),
                (1..n_trials).step_by(2).collect(),
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hemisphere {
    L,
    R,
}

impl Hemisphere {
    pub const BOTH: [Hemisphere; 2] = [Hemisphere::L, Hemisphere::R];
}

impl fmt::Display for Hemisphere {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hemisphere::L => "L",
            Hemisphere::R => "R",
        })
    }
}

/// Anatomy of one recording channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub channel_id: usize,
    pub hemisphere: Hemisphere,
    pub aal_label: String,
    pub roi: Roi,
}

impl ChannelMeta {
    /// Resolves the ROI through `map`.
    pub fn resolve(
        channel_id: usize,
        hemisphere: Hemisphere,
        aal_label: impl Into<String>,
        map: &RoiMap,
    ) -> Result<Self> {
        let aal_label = aal_label.into();
        let roi = map.resolve(&aal_label)?;
        Ok(ChannelMeta { channel_id, hemisphere, aal_label, roi })
    }
}

fn check_finite(values: &[f32], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Validation(format!("{what}: non-finite value at flat index {i}"))),
        None => Ok(()),
    }
}

fn check_rate(rate_hz: f64) -> Result<()> {
    if rate_hz.is_finite() && rate_hz > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("sampling rate must be positive, got {rate_hz}")))
    }
}

/// Activations of every MLP neuron of a model over one corpus.
///
/// Values are stored as `f32` (the on-disk precision) so a file round trip
/// is bit-exact. Layout is `(layer, neuron, timepoint)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    n_layers: usize,
    n_neurons: usize,
    n_timepoints: usize,
    rate_hz: f64,
    values: Vec<f32>,
    pub corpus_tag: String,
    pub condition: Option<ConditionLabel>,
    /// Number of timepoints per trial when the tensor concatenates trials.
    pub units_per_trial: Option<usize>,
    /// Free-form provenance (e.g. the synthetic spec that produced it).
    pub provenance: Option<serde_json::Value>,
}

impl ActivationTensor {
    pub fn new(
        n_layers: usize,
        n_neurons: usize,
        n_timepoints: usize,
        rate_hz: f64,
        values: Vec<f32>,
    ) -> Result<Self> {
        check_rate(rate_hz)?;
        if n_layers == 0 || n_neurons == 0 {
            return Err(Error::Validation("tensor needs at least one layer and one neuron".into()));
        }
        if n_timepoints < 2 {
            return Err(Error::Validation(format!(
                "tensor needs at least 2 timepoints, got {n_timepoints}"
            )));
        }
        let expected = n_layers * n_neurons * n_timepoints;
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} values for {n_layers}x{n_neurons}x{n_timepoints}, got {}",
                values.len()
            )));
        }
        check_finite(&values, "activation tensor")?;
        Ok(ActivationTensor {
            n_layers,
            n_neurons,
            n_timepoints,
            rate_hz,
            values,
            corpus_tag: String::new(),
            condition: None,
            units_per_trial: None,
            provenance: None,
        })
    }

    /// Builds a tensor from a function of `(unit, timepoint)`.
    pub fn from_fn(
        n_layers: usize,
        n_neurons: usize,
        n_timepoints: usize,
        rate_hz: f64,
        mut f: impl FnMut(UnitId, usize) -> f32,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_layers * n_neurons * n_timepoints);
        for layer in 0..n_layers {
            for neuron in 0..n_neurons {
                let unit = UnitId::new(layer, neuron);
                values.extend((0..n_timepoints).map(|t| f(unit, t)));
            }
        }
        Self::new(n_layers, n_neurons, n_timepoints, rate_hz, values)
    }

    pub fn with_corpus_tag(mut self, tag: impl Into<String>) -> Self {
        self.corpus_tag = tag.into();
        self
    }

    pub fn with_condition(mut self, condition: ConditionLabel) -> Self {
        self.condition = Some(condition);
        self
    }

    pub fn with_units_per_trial(mut self, units: usize) -> Result<Self> {
        if units == 0 || self.n_timepoints % units != 0 {
            return Err(Error::Validation(format!(
                "{} timepoints are not a whole number of {units}-unit trials",
                self.n_timepoints
            )));
        }
        self.units_per_trial = Some(units);
        Ok(self)
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_neurons(&self) -> usize {
        self.n_neurons
    }

    pub fn n_timepoints(&self) -> usize {
        self.n_timepoints
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn n_units(&self) -> usize {
        self.n_layers * self.n_neurons
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Number of trials, when trial structure is declared.
    pub fn n_trials(&self) -> Option<usize> {
        self.units_per_trial.map(|u| self.n_timepoints / u)
    }

    pub fn contains(&self, unit: UnitId) -> bool {
        unit.layer < self.n_layers && unit.neuron < self.n_neurons
    }

    /// Time series of one unit.
    ///
    /// # Panics
    /// If `unit` is outside the tensor.
    pub fn series(&self, unit: UnitId) -> &[f32] {
        assert!(self.contains(unit), "{unit} outside {}x{} tensor", self.n_layers, self.n_neurons);
        let start = (unit.layer * self.n_neurons + unit.neuron) * self.n_timepoints;
        &self.values[start..start + self.n_timepoints]
    }

    pub fn series_f64(&self, unit: UnitId) -> Vec<f64> {
        self.series(unit).iter().map(|&v| f64::from(v)).collect()
    }

    /// Iterates over all units in `(layer, neuron)` order.
    pub fn unit_ids(&self) -> impl Iterator<Item = UnitId> + '_ {
        (0..self.n_layers)
            .flat_map(move |layer| (0..self.n_neurons).map(move |neuron| UnitId::new(layer, neuron)))
    }

    /// Trial `trial` of a unit when trial structure is declared.
    pub fn trial_series(&self, unit: UnitId, trial: usize) -> Result<&[f32]> {
        let per = self
            .units_per_trial
            .ok_or_else(|| Error::Validation("tensor has no trial structure".into()))?;
        let n_trials = self.n_timepoints / per;
        if trial >= n_trials {
            return Err(Error::Bounds(format!("trial {trial} of {n_trials}")));
        }
        Ok(&self.series(unit)[trial * per..(trial + 1) * per])
    }

    /// Keeps the trailing `n_units` timepoints.
    ///
    /// With trial structure the window is taken from the end of every
    /// trial; otherwise from the end of the whole series.
    pub fn slice_last(&self, n_units: usize) -> Result<Self> {
        let per = self.units_per_trial.unwrap_or(self.n_timepoints);
        if n_units > per {
            return Err(Error::Bounds(format!(
                "window of {n_units} units exceeds {per} available"
            )));
        }
        if n_units < 2 {
            return Err(Error::Bounds(format!("window of {n_units} units is too short")));
        }
        let n_trials = self.n_timepoints / per;
        let mut values = Vec::with_capacity(self.n_units() * n_trials * n_units);
        for chunk in self.values.chunks_exact(per) {
            values.extend_from_slice(&chunk[per - n_units..]);
        }
        Ok(ActivationTensor {
            n_timepoints: n_trials * n_units,
            values,
            units_per_trial: self.units_per_trial.map(|_| n_units),
            corpus_tag: self.corpus_tag.clone(),
            condition: self.condition,
            provenance: self.provenance.clone(),
            ..*self
        })
    }

    /// Keeps the listed trials, in the given order.
    pub fn select_trials(&self, trials: &[usize]) -> Result<Self> {
        let per = self
            .units_per_trial
            .ok_or_else(|| Error::Validation("tensor has no trial structure".into()))?;
        let n_trials = self.n_timepoints / per;
        if let Some(&bad) = trials.iter().find(|&&t| t >= n_trials) {
            return Err(Error::Bounds(format!("trial {bad} of {n_trials}")));
        }
        let mut values = Vec::with_capacity(self.n_units() * trials.len() * per);
        for series in self.values.chunks_exact(self.n_timepoints) {
            for &t in trials {
                values.extend_from_slice(&series[t * per..(t + 1) * per]);
            }
        }
        let mut out = ActivationTensor::new(
            self.n_layers,
            self.n_neurons,
            trials.len() * per,
            self.rate_hz,
            values,
        )?;
        out.corpus_tag = self.corpus_tag.clone();
        out.condition = self.condition;
        out.units_per_trial = Some(per);
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    /// Cuts the trials of one stimulus class into its two condition halves.
    pub fn split_conditions(
        &self,
        class: StimulusClass,
        policy: SplitPolicy,
    ) -> Result<[(ConditionLabel, Self); 2]> {
        let n_trials = self
            .n_trials()
            .ok_or_else(|| Error::Validation("tensor has no trial structure".into()))?;
        let (a, b) = policy.partition(n_trials)?;
        let la = ConditionLabel::new(class, Split::A);
        let lb = ConditionLabel::new(class, Split::B);
        Ok([
            (la, self.select_trials(&a)?.with_condition(la)),
            (lb, self.select_trials(&b)?.with_condition(lb)),
        ])
    }
}

/// Trial-structured recording: channels × trials × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecording {
    n_channels: usize,
    n_trials: usize,
    n_samples: usize,
    rate_hz: f64,
    values: Vec<f32>,
    channels: Vec<ChannelMeta>,
    pub condition: Option<ConditionLabel>,
    pub provenance: Option<serde_json::Value>,
}

impl TrialRecording {
    pub fn new(
        n_trials: usize,
        n_samples: usize,
        rate_hz: f64,
        channels: Vec<ChannelMeta>,
        values: Vec<f32>,
    ) -> Result<Self> {
        check_rate(rate_hz)?;
        let n_channels = channels.len();
        if n_channels == 0 || n_trials == 0 || n_samples < 2 {
            return Err(Error::Validation(format!(
                "recording needs channels, trials and >= 2 samples (got {n_channels}x{n_trials}x{n_samples})"
            )));
        }
        let expected = n_channels * n_trials * n_samples;
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} values for {n_channels}x{n_trials}x{n_samples}, got {}",
                values.len()
            )));
        }
        for (i, ch) in channels.iter().enumerate() {
            if ch.channel_id != i {
                return Err(Error::Validation(format!(
                    "channel metadata out of order: position {i} has id {}",
                    ch.channel_id
                )));
            }
        }
        check_finite(&values, "trial recording")?;
        Ok(TrialRecording {
            n_channels,
            n_trials,
            n_samples,
            rate_hz,
            values,
            channels,
            condition: None,
            provenance: None,
        })
    }

    pub fn with_condition(mut self, condition: ConditionLabel) -> Self {
        self.condition = Some(condition);
        self
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_trials(&self) -> usize {
        self.n_trials
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channels(&self) -> &[ChannelMeta] {
        &self.channels
    }

    pub fn channel(&self, channel: usize) -> Result<&ChannelMeta> {
        self.channels
            .get(channel)
            .ok_or_else(|| Error::Bounds(format!("channel {channel} of {}", self.n_channels)))
    }

    /// Samples of one trial of one channel.
    ///
    /// # Panics
    /// If either index is out of range.
    pub fn trial(&self, channel: usize, trial: usize) -> &[f32] {
        assert!(channel < self.n_channels && trial < self.n_trials);
        let start = (channel * self.n_trials + trial) * self.n_samples;
        &self.values[start..start + self.n_samples]
    }

    /// Samples per linguistic unit of duration `unit_sec`.
    pub fn samples_per_unit(&self, unit_sec: f64) -> Result<usize> {
        let exact = unit_sec * self.rate_hz;
        let rounded = exact.round();
        if rounded < 1.0 || (exact - rounded).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "a {unit_sec} s unit is {exact} samples at {} Hz, not a whole number",
                self.rate_hz
            )));
        }
        Ok(rounded as usize)
    }

    /// Keeps the trailing `n_units` units (each `unit_sec` long) of every trial.
    pub fn slice_last(&self, n_units: usize, unit_sec: f64) -> Result<Self> {
        let per_unit = self.samples_per_unit(unit_sec)?;
        let keep = n_units * per_unit;
        if keep > self.n_samples {
            return Err(Error::Bounds(format!(
                "window of {n_units} units ({keep} samples) exceeds {} samples",
                self.n_samples
            )));
        }
        if keep < 2 {
            return Err(Error::Bounds(format!("window of {keep} samples is too short")));
        }
        let mut values = Vec::with_capacity(self.n_channels * self.n_trials * keep);
        for trial in self.values.chunks_exact(self.n_samples) {
            values.extend_from_slice(&trial[self.n_samples - keep..]);
        }
        Ok(TrialRecording {
            n_samples: keep,
            values,
            channels: self.channels.clone(),
            provenance: self.provenance.clone(),
            ..*self
        })
    }

    pub fn select_trials(&self, trials: &[usize]) -> Result<Self> {
        if let Some(&bad) = trials.iter().find(|&&t| t >= self.n_trials) {
            return Err(Error::Bounds(format!("trial {bad} of {}", self.n_trials)));
        }
        let mut values = Vec::with_capacity(self.n_channels * trials.len() * self.n_samples);
        for ch in 0..self.n_channels {
            for &t in trials {
                values.extend_from_slice(self.trial(ch, t));
            }
        }
        let mut out =
            TrialRecording::new(trials.len(), self.n_samples, self.rate_hz, self.channels.clone(), values)?;
        out.condition = self.condition;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    /// Cuts the trials of one stimulus class into its two condition halves.
    pub fn split_conditions(
        &self,
        class: StimulusClass,
        policy: SplitPolicy,
    ) -> Result<[(ConditionLabel, Self); 2]> {
        let (a, b) = policy.partition(self.n_trials)?;
        let la = ConditionLabel::new(class, Split::A);
        let lb = ConditionLabel::new(class, Split::B);
        Ok([
            (la, self.select_trials(&a)?.with_condition(la)),
            (lb, self.select_trials(&b)?.with_condition(lb)),
        ])
    }
}

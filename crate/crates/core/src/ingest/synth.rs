//! Synthetic data with known planted periodicities, used as a ground-truth
//! oracle throughout the test suites.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ActivationTensor, ChannelMeta, ConditionLabel, Hemisphere, RoiMap, TrialRecording, UnitId};
use crate::error::{Error, Result};

/// Which units a [`Plant`] applies to. Ranges are half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "select", rename_all = "snake_case", deny_unknown_fields)]
pub enum UnitSelector {
    Neurons { layer: usize, start: usize, end: usize },
    Channels { start: usize, end: usize },
}

impl UnitSelector {
    pub fn neuron(unit: UnitId) -> Self {
        UnitSelector::Neurons { layer: unit.layer, start: unit.neuron, end: unit.neuron + 1 }
    }

    pub fn channel(channel: usize) -> Self {
        UnitSelector::Channels { start: channel, end: channel + 1 }
    }
}

/// A cosine `amplitude · cos(2π·freq·t + phase)` added to the selected units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plant {
    #[serde(flatten)]
    pub target: UnitSelector,
    pub freq_hz: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub hemisphere: Hemisphere,
    pub aal_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthShape {
    Activation {
        n_layers: usize,
        n_neurons: usize,
        n_timepoints: usize,
        rate_hz: f64,
        #[serde(default)]
        corpus_tag: String,
        #[serde(default)]
        condition: Option<ConditionLabel>,
        #[serde(default)]
        units_per_trial: Option<usize>,
    },
    Recording {
        n_channels: usize,
        n_trials: usize,
        n_samples: usize,
        rate_hz: f64,
        #[serde(default)]
        condition: Option<ConditionLabel>,
        /// Defaults to alternating hemispheres cycling through the shipped
        /// AAL labels.
        #[serde(default)]
        channels: Option<Vec<ChannelSpec>>,
    },
}

impl SynthShape {
    fn rate_hz(&self) -> f64 {
        match *self {
            SynthShape::Activation { rate_hz, .. } | SynthShape::Recording { rate_hz, .. } => rate_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub shape: SynthShape,
    #[serde(default)]
    pub planted: Vec<Plant>,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthOutput {
    Activation(ActivationTensor),
    Recording(TrialRecording),
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Validation(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        let nyquist = self.shape.rate_hz() / 2.0;
        for p in &self.planted {
            // the phrase rate of a 4 Hz corpus sits exactly at Nyquist
            if !(p.freq_hz >= 0.0 && p.freq_hz <= nyquist) {
                return Err(Error::Validation(format!(
                    "planted frequency {} Hz must lie in [0, {nyquist}] Hz",
                    p.freq_hz
                )));
            }
            if !p.amplitude.is_finite() || !p.phase.is_finite() {
                return Err(Error::Validation("planted amplitude and phase must be finite".into()));
            }
            let ok = match (&self.shape, &p.target) {
                (SynthShape::Activation { n_layers, n_neurons, .. }, UnitSelector::Neurons { layer, start, end }) => {
                    layer < n_layers && start < end && end <= n_neurons
                }
                (SynthShape::Recording { n_channels, .. }, UnitSelector::Channels { start, end }) => {
                    start < end && end <= n_channels
                }
                _ => false,
            };
            if !ok {
                return Err(Error::Validation(format!("plant selector {:?} does not fit the shape", p.target)));
            }
        }
        Ok(())
    }
}

fn plant_value(plants: &[&Plant], t: f64) -> f64 {
    plants
        .iter()
        .map(|p| p.amplitude * (TAU * p.freq_hz * t + p.phase).cos())
        .sum()
}

fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generates the tensor or recording described by `spec`.
///
/// Each unit (or channel) draws its noise from its own ChaCha stream, so the
/// output is a pure function of the spec.
pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Validation(e.to_string()))?;
    let provenance = serde_json::to_value(spec).ok();
    match &spec.shape {
        SynthShape::Activation {
            n_layers,
            n_neurons,
            n_timepoints,
            rate_hz,
            corpus_tag,
            condition,
            units_per_trial,
        } => {
            let mut values = Vec::with_capacity(n_layers * n_neurons * n_timepoints);
            for layer in 0..*n_layers {
                for neuron in 0..*n_neurons {
                    let plants: Vec<&Plant> = spec
                        .planted
                        .iter()
                        .filter(|p| matches!(p.target, UnitSelector::Neurons { layer: l, start, end }
                            if l == layer && (start..end).contains(&neuron)))
                        .collect();
                    let mut rng = noise_rng(spec.seed, (layer * n_neurons + neuron) as u64);
                    values.extend((0..*n_timepoints).map(|i| {
                        let v = plant_value(&plants, i as f64 / rate_hz);
                        let noise = if spec.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                        (v + noise) as f32
                    }));
                }
            }
            let mut t = ActivationTensor::new(*n_layers, *n_neurons, *n_timepoints, *rate_hz, values)?
                .with_corpus_tag(corpus_tag.clone());
            t.condition = *condition;
            t.provenance = provenance;
            if let Some(per) = units_per_trial {
                t = t.with_units_per_trial(*per)?;
            }
            Ok(SynthOutput::Activation(t))
        }
        SynthShape::Recording { n_channels, n_trials, n_samples, rate_hz, condition, channels } => {
            let map = RoiMap::default_map();
            let metas = match channels {
                Some(specs) => {
                    if specs.len() != *n_channels {
                        return Err(Error::Validation(format!(
                            "{} channel specs for {n_channels} channels",
                            specs.len()
                        )));
                    }
                    specs
                        .iter()
                        .enumerate()
                        .map(|(i, c)| ChannelMeta::resolve(i, c.hemisphere, c.aal_label.clone(), &map))
                        .collect::<Result<Vec<_>>>()?
                }
                None => {
                    let labels: Vec<&str> = map.labels().map(|(l, _)| l).collect();
                    (0..*n_channels)
                        .map(|i| {
                            let hemi = if i % 2 == 0 { Hemisphere::L } else { Hemisphere::R };
                            ChannelMeta::resolve(i, hemi, labels[(i / 2) % labels.len()], &map)
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            let mut values = Vec::with_capacity(n_channels * n_trials * n_samples);
            for ch in 0..*n_channels {
                let plants: Vec<&Plant> = spec
                    .planted
                    .iter()
                    .filter(|p| matches!(p.target, UnitSelector::Channels { start, end } if (start..end).contains(&ch)))
                    .collect();
                let mut rng = noise_rng(spec.seed, ch as u64);
                for _ in 0..*n_trials {
                    values.extend((0..*n_samples).map(|i| {
                        let v = plant_value(&plants, i as f64 / rate_hz);
                        let noise = if spec.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                        (v + noise) as f32
                    }));
                }
            }
            let mut r = TrialRecording::new(*n_trials, *n_samples, *rate_hz, metas, values)?;
            r.condition = *condition;
            r.provenance = provenance;
            Ok(SynthOutput::Recording(r))
        }
    }
}

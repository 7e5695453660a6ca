//! A complete synthetic experiment: one activation tensor and one recording
//! per stimulus class, sharing a planted condition structure.
//!
//! Sentence stimuli carry 1 Hz and 2 Hz rhythms, phrase stimuli only 2 Hz,
//! random stimuli none. The rhythms are planted in a block of neurons of
//! one layer and in a block of channels; everything else is noise.

use serde::{Deserialize, Serialize};

use super::synth::{synth_generate, Plant, SynthOutput, SynthShape, SynthSpec, UnitSelector};
use super::{ActivationTensor, StimulusClass, TrialRecording};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_layers: usize,
    pub n_neurons: usize,
    pub planted_layer: usize,
    pub planted_neurons: usize,
    pub n_trials: usize,
    /// Linguistic units (250 ms syllables) per trial.
    pub units_per_trial: usize,
    pub model_amplitude: f64,
    pub model_noise: f64,
    pub n_channels: usize,
    pub planted_channels: usize,
    pub recording_rate_hz: f64,
    pub brain_amplitude: f64,
    pub brain_noise: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_layers: 4,
            n_neurons: 16,
            planted_layer: 2,
            planted_neurons: 8,
            n_trials: 40,
            units_per_trial: 36,
            model_amplitude: 1.0,
            model_noise: 1.0,
            n_channels: 32,
            planted_channels: 4,
            recording_rate_hz: 64.0,
            brain_amplitude: 0.5,
            brain_noise: 1.0,
            seed: 7,
        }
    }
}

/// Tensors and recordings indexed like [`StimulusClass::ALL`].
#[derive(Debug, Clone)]
pub struct Scenario {
    pub activations: [ActivationTensor; 3],
    pub recordings: [TrialRecording; 3],
}

fn rates(class: StimulusClass) -> &'static [f64] {
    match class {
        StimulusClass::Sentence => &[1.0, 2.0],
        StimulusClass::Phrase => &[2.0],
        StimulusClass::Random => &[],
    }
}

/// Per-class synthesis specs, in [`StimulusClass::ALL`] order.
pub fn scenario_specs(cfg: &ScenarioConfig) -> Result<Vec<(SynthSpec, SynthSpec)>> {
    if cfg.planted_layer >= cfg.n_layers
        || cfg.planted_neurons > cfg.n_neurons
        || cfg.planted_channels > cfg.n_channels
    {
        return Err(Error::Validation("planted block does not fit the scenario".into()));
    }
    Ok(StimulusClass::ALL
        .iter()
        .enumerate()
        .map(|(i, &class)| {
            let neurons = UnitSelector::Neurons { layer: cfg.planted_layer, start: 0, end: cfg.planted_neurons };
            let channels = UnitSelector::Channels { start: 0, end: cfg.planted_channels };
            let plants = |target: &UnitSelector, amplitude: f64| -> Vec<Plant> {
                if cfg.planted_neurons == 0 && matches!(target, UnitSelector::Neurons { .. })
                    || cfg.planted_channels == 0 && matches!(target, UnitSelector::Channels { .. })
                {
                    return Vec::new();
                }
                rates(class)
                    .iter()
                    .map(|&freq_hz| Plant { target: target.clone(), freq_hz, amplitude, phase: 0.0 })
                    .collect()
            };
            let model = SynthSpec {
                shape: SynthShape::Activation {
                    n_layers: cfg.n_layers,
                    n_neurons: cfg.n_neurons,
                    n_timepoints: cfg.n_trials * cfg.units_per_trial,
                    rate_hz: 4.0,
                    corpus_tag: format!("synthetic-{}", class.as_str()),
                    condition: None,
                    units_per_trial: Some(cfg.units_per_trial),
                },
                planted: plants(&neurons, cfg.model_amplitude),
                noise_sigma: cfg.model_noise,
                seed: cfg.seed.wrapping_add(i as u64),
            };
            let brain = SynthSpec {
                shape: SynthShape::Recording {
                    n_channels: cfg.n_channels,
                    n_trials: cfg.n_trials,
                    n_samples: (cfg.units_per_trial as f64 * 0.25 * cfg.recording_rate_hz).round() as usize,
                    rate_hz: cfg.recording_rate_hz,
                    condition: None,
                    channels: None,
                },
                planted: plants(&channels, cfg.brain_amplitude),
                noise_sigma: cfg.brain_noise,
                seed: cfg.seed.wrapping_add(100 + i as u64),
            };
            (model, brain)
        })
        .collect())
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    let mut acts = Vec::with_capacity(3);
    let mut recs = Vec::with_capacity(3);
    for (model, brain) in scenario_specs(cfg)? {
        match (synth_generate(&model)?, synth_generate(&brain)?) {
            (SynthOutput::Activation(a), SynthOutput::Recording(r)) => {
                acts.push(a);
                recs.push(r);
            }
            _ => unreachable!("specs have fixed kinds"),
        }
    }
    Ok(Scenario {
        activations: acts.try_into().expect("three classes"),
        recordings: recs.try_into().expect("three classes"),
    })
}

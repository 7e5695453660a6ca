//! Run configuration: one JSON file, unknown keys rejected, every field
//! defaulted. Relative input paths are resolved against the file's
//! directory.

use std::path::{Path, PathBuf};

use hftp::alignment::{NeuronPool, DEFAULT_TOP_K, DEFAULT_WINDOW_UNITS};
use hftp::encoding::{default_alpha_grid, EncodingConfig};
use hftp::ingest::SplitPolicy;
use hftp::probe_brain::TrialWindow;
use hftp::probe_model::{PermutationConfig, ZPopulation, ZScope, ZScoreOptions};
use hftp::spectral::{AmpMode, TrialAveraging};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One input file per stimulus class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassFiles {
    pub sentence: PathBuf,
    pub phrase: PathBuf,
    pub random: PathBuf,
}

impl ClassFiles {
    pub fn paths(&self) -> [&Path; 3] {
        [&self.sentence, &self.phrase, &self.random]
    }

    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.sentence, &mut self.phrase, &mut self.random] {
            *p = base.join(&*p);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    /// Synthesis specs for `synth`, one output file each.
    pub synth: Vec<PathBuf>,
    /// Scenario description for `synth`; generates all six class files.
    pub scenario: Option<PathBuf>,
    /// Activations over the structured corpus (`probe-model`).
    pub experimental: Option<PathBuf>,
    /// Activations over the word-order-randomized corpus (`probe-model`).
    pub control: Option<PathBuf>,
    /// Recording to probe (`probe-brain`).
    pub recording: Option<PathBuf>,
    pub model: Option<ClassFiles>,
    pub brain: Option<ClassFiles>,
    /// `neuron_classes.json` written by `probe-model`.
    pub neuron_classes: Option<PathBuf>,
    /// `channel_classes.json` written by `probe-brain`.
    pub channel_classes: Option<PathBuf>,
    /// AAL label → ROI table; the built-in table when absent.
    pub roi_map: Option<PathBuf>,
    /// Stage output directories merged by `report`.
    pub stages: Vec<PathBuf>,
}

impl Inputs {
    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| *p = base.join(&*p);
        self.synth.iter_mut().for_each(join);
        self.stages.iter_mut().for_each(join);
        for p in [
            &mut self.scenario,
            &mut self.experimental,
            &mut self.control,
            &mut self.recording,
            &mut self.neuron_classes,
            &mut self.channel_classes,
            &mut self.roi_map,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        for c in [&mut self.model, &mut self.brain].into_iter().flatten() {
            c.rebase(base);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingOptions {
    pub n_splits: usize,
    pub test_frac: f64,
    pub inner_folds: usize,
    pub alpha_grid: Vec<f64>,
}

impl Default for EncodingOptions {
    fn default() -> Self {
        let d = EncodingConfig::default();
        EncodingOptions { n_splits: d.n_splits, test_frac: d.test_frac, inner_folds: d.inner_folds, alpha_grid: default_alpha_grid() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub n_perm: usize,
    pub alpha: f64,
    /// Top channels per layer.
    pub k: usize,
    pub sentence_hz: f64,
    pub phrase_hz: f64,
    pub split_policy: SplitPolicy,
    pub amp_mode: AmpMode,
    pub z_population: ZPopulation,
    pub z_scope: ZScope,
    pub trial_averaging: TrialAveraging,
    /// Trailing units of every model trial used by `align`/`encode`.
    pub model_window_units: Option<usize>,
    /// Trailing window of every recorded trial (`probe-brain`, `align`, `encode`).
    pub brain_window: Option<TrialWindow>,
    pub pools: Vec<NeuronPool>,
    pub combine: Vec<NeuronPool>,
    pub neuron_diagnostics: bool,
    pub encoding: EncodingOptions,
    pub out_dir: PathBuf,
    /// Worker threads; all cores when absent.
    pub workers: Option<usize>,
    pub svg: bool,
    pub inputs: Inputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        let align = hftp::alignment::AlignConfig::default();
        RunConfig {
            seed: 0,
            n_perm: 1000,
            alpha: 0.05,
            k: DEFAULT_TOP_K,
            sentence_hz: 1.0,
            phrase_hz: 2.0,
            split_policy: SplitPolicy::Contiguous,
            amp_mode: AmpMode::Real,
            z_population: ZPopulation::AllUnits,
            z_scope: ZScope::Pooled,
            trial_averaging: TrialAveraging::MagnitudeThenMean,
            model_window_units: Some(DEFAULT_WINDOW_UNITS),
            brain_window: Some(TrialWindow::default()),
            pools: align.pools,
            combine: align.combine,
            neuron_diagnostics: false,
            encoding: EncodingOptions::default(),
            out_dir: PathBuf::from("hftp-out"),
            workers: None,
            svg: false,
            inputs: Inputs::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.inputs.rebase(base);
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn permutation(&self) -> PermutationConfig {
        PermutationConfig { n_perm: self.n_perm, alpha: self.alpha, seed: self.seed, mode: self.amp_mode }
    }

    pub fn zscore(&self) -> ZScoreOptions {
        ZScoreOptions { population: self.z_population, scope: self.z_scope, mode: self.amp_mode }
    }

    pub fn encoding(&self) -> EncodingConfig {
        EncodingConfig {
            n_splits: self.encoding.n_splits,
            test_frac: self.encoding.test_frac,
            inner_folds: self.encoding.inner_folds,
            alpha_grid: self.encoding.alpha_grid.clone(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.permutation().validate()?;
        self.encoding().validate()?;
        if self.k == 0 {
            return Err(CliError::config("k must be positive"));
        }
        for (name, f) in [("sentence_hz", self.sentence_hz), ("phrase_hz", self.phrase_hz)] {
            if !(f.is_finite() && f > 0.0) {
                return Err(CliError::config(format!("{name} must be positive, got {f}")));
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::config("workers must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    // the guide lists every default; keep it honest
    #[test]
    fn guide_example_is_the_default() {
        let guide = include_str!("../../../book/src/cli.md");
        let block = guide.split("```json\n").nth(1).unwrap().split("```").next().unwrap();
        let cfg: RunConfig = serde_json::from_str(block).unwrap();
        let d = RunConfig::default();
        assert_eq!(
            (cfg.seed, cfg.n_perm, cfg.alpha, cfg.k, cfg.sentence_hz, cfg.phrase_hz),
            (d.seed, d.n_perm, d.alpha, d.k, d.sentence_hz, d.phrase_hz)
        );
        assert_eq!((cfg.split_policy, cfg.amp_mode, cfg.z_population, cfg.z_scope), (d.split_policy, d.amp_mode, d.z_population, d.z_scope));
        assert_eq!((cfg.trial_averaging, cfg.model_window_units, cfg.brain_window), (d.trial_averaging, d.model_window_units, d.brain_window));
        assert_eq!((&cfg.pools, &cfg.combine, cfg.neuron_diagnostics), (&d.pools, &d.combine, d.neuron_diagnostics));
        assert_eq!((&cfg.encoding, &cfg.out_dir, cfg.svg), (&d.encoding, &d.out_dir, d.svg));
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"seeed": 3}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"inputs": {"recordings": "x"}}"#).is_err());
    }

    #[test]
    fn relative_inputs_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"inputs": {"recording": "data/r.tri"}, "out_dir": "out"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.inputs.recording.unwrap(), dir.path().join("data/r.tri"));
        assert_eq!(cfg.out_dir, dir.path().join("out"));
    }
}

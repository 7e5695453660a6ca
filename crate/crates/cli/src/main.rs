//! `hftp`: command-line pipeline over the hftp library.
//!
//! Exit codes: 0 success, 2 configuration error, 3 input-format error,
//! 4 statistical degeneracy.

mod commands;
mod config;
mod output;
mod report;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ClassFiles, RunConfig};
use crate::output::OutDir;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }

    pub fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl From<hftp::Error> for CliError {
    fn from(e: hftp::Error) -> Self {
        let code = match &e {
            hftp::Error::Config(_) => 2,
            e if e.is_degeneracy() => 4,
            _ => 3,
        };
        CliError { code, message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Parser, Debug)]
#[command(name = "hftp", version, about = "Hierarchical frequency tagging probe for language models and sEEG recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every stage. Each overrides the matching config field.
#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON run configuration
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// RNG seed (also read from HFTP_SEED)
    #[arg(long, env = "HFTP_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    n_perm: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Top channels per layer
    #[arg(long)]
    k: Option<usize>,
    /// Worker threads (results do not depend on this)
    #[arg(long)]
    workers: Option<usize>,
    /// AAL label → ROI table (JSON)
    #[arg(long)]
    roi_map: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct ClassArgs {
    #[arg(long)]
    model_sentence: Option<PathBuf>,
    #[arg(long)]
    model_phrase: Option<PathBuf>,
    #[arg(long)]
    model_random: Option<PathBuf>,
    #[arg(long)]
    brain_sentence: Option<PathBuf>,
    #[arg(long)]
    brain_phrase: Option<PathBuf>,
    #[arg(long)]
    brain_random: Option<PathBuf>,
    /// neuron_classes.json from probe-model
    #[arg(long)]
    neuron_classes: Option<PathBuf>,
    /// channel_classes.json from probe-brain
    #[arg(long)]
    channel_classes: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic activation tensors and recordings
    Synth {
        #[command(flatten)]
        common: Common,
        /// Synthesis spec (JSON); repeatable
        #[arg(long)]
        spec: Vec<PathBuf>,
        /// Scenario description (JSON) producing all six class files
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Generate the built-in scenario
        #[arg(long, conflicts_with = "scenario")]
        default_scenario: bool,
    },
    /// Detect and classify frequency-tagged neurons
    ProbeModel {
        #[command(flatten)]
        common: Common,
        /// Activations over the structured corpus
        #[arg(long)]
        exp: Option<PathBuf>,
        /// Activations over the randomized control corpus
        #[arg(long)]
        ctrl: Option<PathBuf>,
    },
    /// Compute ITPC and classify recording channels
    ProbeBrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        recording: Option<PathBuf>,
    },
    /// RSA alignment between model layers and channels
    Align {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        classes: ClassArgs,
    },
    /// Predictive encoding control
    Encode {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        classes: ClassArgs,
    },
    /// Merge stage outputs into one report
    Report {
        #[command(flatten)]
        common: Common,
        /// Stage output directory; repeatable
        #[arg(long)]
        stage: Vec<PathBuf>,
        /// Also draw SVG figures
        #[arg(long)]
        svg: bool,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &common.out {
        cfg.out_dir = v.clone();
    }
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.n_perm {
        cfg.n_perm = v;
    }
    if let Some(v) = common.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = common.k {
        cfg.k = v;
    }
    if let Some(v) = common.workers {
        cfg.workers = Some(v);
    }
    if let Some(v) = &common.roi_map {
        cfg.inputs.roi_map = Some(v.clone());
    }
    Ok(cfg)
}

fn class_override(slot: &mut Option<ClassFiles>, s: &Option<PathBuf>, p: &Option<PathBuf>, r: &Option<PathBuf>) -> Result<(), CliError> {
    if s.is_none() && p.is_none() && r.is_none() {
        return Ok(());
    }
    let pick = |flag: &Option<PathBuf>, old: Option<&PathBuf>, name: &str| {
        flag.clone().or_else(|| old.cloned()).ok_or_else(|| CliError::config(format!("missing {name} file")))
    };
    let old = slot.as_ref();
    *slot = Some(ClassFiles {
        sentence: pick(s, old.map(|c| &c.sentence), "sentence")?,
        phrase: pick(p, old.map(|c| &c.phrase), "phrase")?,
        random: pick(r, old.map(|c| &c.random), "random")?,
    });
    Ok(())
}

fn apply_classes(cfg: &mut RunConfig, a: &ClassArgs) -> Result<(), CliError> {
    class_override(&mut cfg.inputs.model, &a.model_sentence, &a.model_phrase, &a.model_random)?;
    class_override(&mut cfg.inputs.brain, &a.brain_sentence, &a.brain_phrase, &a.brain_random)?;
    if let Some(v) = &a.neuron_classes {
        cfg.inputs.neuron_classes = Some(v.clone());
    }
    if let Some(v) = &a.channel_classes {
        cfg.inputs.channel_classes = Some(v.clone());
    }
    Ok(())
}

type Stage = fn(&RunConfig, &mut OutDir) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let (cfg, stage): (RunConfig, Stage) = match cli.command {
        Command::Synth { common, spec, scenario, default_scenario } => {
            let mut cfg = resolve(&common)?;
            cfg.inputs.synth.extend(spec);
            if scenario.is_some() {
                cfg.inputs.scenario = scenario;
            }
            if default_scenario {
                let cfg = cfg;
                cfg.validate()?;
                let mut out = OutDir::create(&cfg.out_dir)?;
                commands::scenario(&Default::default(), &mut out)?;
                return Ok(out.written);
            }
            (cfg, commands::synth)
        }
        Command::ProbeModel { common, exp, ctrl } => {
            let mut cfg = resolve(&common)?;
            if exp.is_some() {
                cfg.inputs.experimental = exp;
            }
            if ctrl.is_some() {
                cfg.inputs.control = ctrl;
            }
            (cfg, commands::probe_model_cmd)
        }
        Command::ProbeBrain { common, recording } => {
            let mut cfg = resolve(&common)?;
            if recording.is_some() {
                cfg.inputs.recording = recording;
            }
            (cfg, commands::probe_brain_cmd)
        }
        Command::Align { common, classes } => {
            let mut cfg = resolve(&common)?;
            apply_classes(&mut cfg, &classes)?;
            (cfg, commands::align_cmd)
        }
        Command::Encode { common, classes } => {
            let mut cfg = resolve(&common)?;
            apply_classes(&mut cfg, &classes)?;
            (cfg, commands::encode_cmd)
        }
        Command::Report { common, stage, svg } => {
            let mut cfg = resolve(&common)?;
            if !stage.is_empty() {
                cfg.inputs.stages = stage;
            }
            cfg.svg |= svg;
            (cfg, report::report_cmd)
        }
    };
    cfg.validate()?;
    if let Some(n) = cfg.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {n} workers: {e}")))?;
    }
    let mut out = OutDir::create(&cfg.out_dir)?;
    stage(&cfg, &mut out)?;
    Ok(out.written)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(written) => {
            for name in written {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("hftp: {e}");
            ExitCode::from(e.code)
        }
    }
}

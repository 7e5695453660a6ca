//! One function per pipeline stage. Each reads its inputs, runs the library
//! and writes a fixed set of artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hftp::alignment::{align, AlignConfig, AlignmentReport, BrainConditions, CombinedColumn, ModelConditions, PoolReport};
use hftp::encoding::{encode, EncodeConfig, EncodingReport};
use hftp::ingest::{
    activation_bytes, generate_scenario, load_roi_map, read_activation_file, read_trial_recording, recording_bytes,
    synth_generate, ActivationTensor, Roi, RoiMap, ScenarioConfig, StimulusClass, SynthOutput, SynthSpec,
    TrialRecording, UnitId,
};
use hftp::probe_brain::{probe_brain, BrainProbeConfig, ChannelClassification};
use hftp::probe_model::{probe_model, ModelProbeConfig, NeuronClassification, UnitClass, ZScoreTable};
use hftp::spectral::{dft_f32, Complex64};
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::config::{ClassFiles, Inputs, RunConfig};
use crate::output::{num, opt, OutDir};
use crate::CliError;

fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::config(format!("missing input: {what}")))
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: hftp::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn read_act(path: &Path) -> Result<ActivationTensor, CliError> {
    with_path(path, read_activation_file(path))
}

fn read_tri(path: &Path) -> Result<TrialRecording, CliError> {
    with_path(path, read_trial_recording(path))
}

fn roi_map(inputs: &Inputs) -> Result<RoiMap, CliError> {
    match &inputs.roi_map {
        Some(p) => with_path(p, load_roi_map(p)),
        None => Ok(RoiMap::default_map()),
    }
}

fn class_tensors(files: &ClassFiles) -> Result<[ActivationTensor; 3], CliError> {
    let [s, p, r] = files.paths();
    Ok([read_act(s)?, read_act(p)?, read_act(r)?])
}

fn class_recordings(files: &ClassFiles) -> Result<[TrialRecording; 3], CliError> {
    let [s, p, r] = files.paths();
    Ok([read_tri(s)?, read_tri(p)?, read_tri(r)?])
}

fn neuron_classes(inputs: &Inputs) -> Result<Option<NeuronClassification>, CliError> {
    inputs.neuron_classes.as_deref().map(read_json).transpose()
}

fn channel_classes(inputs: &Inputs) -> Result<Option<ChannelClassification>, CliError> {
    inputs.channel_classes.as_deref().map(read_json).transpose()
}

// ---------------------------------------------------------------- synth

pub fn synth(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let inputs = &cfg.inputs;
    if inputs.synth.is_empty() && inputs.scenario.is_none() {
        return Err(CliError::config("synth needs at least one spec or a scenario"));
    }
    for path in &inputs.synth {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let spec: SynthSpec =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().map_or("synth".into(), |s| s.to_string_lossy().into_owned());
        match with_path(path, synth_generate(&spec))? {
            SynthOutput::Activation(t) => out.bytes(&format!("{stem}.act"), &activation_bytes(&t)?)?,
            SynthOutput::Recording(r) => out.bytes(&format!("{stem}.tri"), &recording_bytes(&r)?)?,
        }
    }
    if let Some(path) = &inputs.scenario {
        let sc: ScenarioConfig = read_config_json(path)?;
        scenario(&sc, out)?;
    }
    Ok(())
}

fn read_config_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Writes the six class files of a scenario plus a run config that points
/// at them, so later stages can be run with `--config <out>/run.json`.
pub fn scenario(sc: &ScenarioConfig, out: &mut OutDir) -> Result<(), CliError> {
    let s = generate_scenario(sc)?;
    let mut model = Vec::new();
    let mut brain = Vec::new();
    for (i, class) in StimulusClass::ALL.into_iter().enumerate() {
        let m = format!("model_{}.act", class.as_str());
        let b = format!("brain_{}.tri", class.as_str());
        out.bytes(&m, &activation_bytes(&s.activations[i])?)?;
        out.bytes(&b, &recording_bytes(&s.recordings[i])?)?;
        model.push(PathBuf::from(m));
        brain.push(PathBuf::from(b));
    }
    out.json("scenario.json", sc)?;
    let files = |v: &[PathBuf]| ClassFiles { sentence: v[0].clone(), phrase: v[1].clone(), random: v[2].clone() };
    let run = RunConfig {
        k: 5,
        out_dir: PathBuf::from("results"),
        inputs: Inputs {
            experimental: Some(model[0].clone()),
            control: Some(model[2].clone()),
            recording: Some(brain[0].clone()),
            model: Some(files(&model)),
            brain: Some(files(&brain)),
            stages: vec![PathBuf::from("results")],
            ..Inputs::default()
        },
        ..RunConfig::default()
    };
    out.json("run.json", &run)
}

// ---------------------------------------------------------------- probe-model

const UNIT_HEADER: [&str; 17] = [
    "layer", "neuron", "class",
    "sentence_observed", "sentence_ci_low", "sentence_ci_high", "sentence_significant",
    "sentence_z_exp", "sentence_z_ctrl", "sentence_z_dev",
    "phrase_observed", "phrase_ci_low", "phrase_ci_high", "phrase_significant",
    "phrase_z_exp", "phrase_z_ctrl", "phrase_z_dev",
];

fn freq_summary(n_significant: usize, z: &ZScoreTable) -> serde_json::Value {
    // an empty S_f never computes thresholds
    let thresholds: Vec<serde_json::Value> = if z.entries.is_empty() {
        Vec::new()
    } else {
        z.thresholds.iter().map(|t| json!({ "mu": t.mu, "sigma": t.sigma, "cutoff": t.cutoff() })).collect()
    };
    json!({ "freq_hz": z.freq_hz, "n_significant": n_significant, "thresholds": thresholds })
}

fn class_counts(iter: impl Iterator<Item = UnitClass>) -> BTreeMap<&'static str, usize> {
    let mut counts: BTreeMap<&'static str, usize> =
        [UnitClass::None, UnitClass::Sentence, UnitClass::Phrase, UnitClass::Both].iter().map(|c| (c.as_str(), 0)).collect();
    for c in iter {
        *counts.get_mut(c.as_str()).expect("all classes present") += 1;
    }
    counts
}

pub fn probe_model_cmd(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let exp_path = required(&cfg.inputs.experimental, "experimental activations")?;
    let ctrl_path = required(&cfg.inputs.control, "control activations")?;
    let exp = read_act(exp_path)?;
    let ctrl = read_act(ctrl_path)?;
    let pcfg = ModelProbeConfig {
        permutation: cfg.permutation(),
        zscore: cfg.zscore(),
        sentence_hz: cfg.sentence_hz,
        phrase_hz: cfg.phrase_hz,
    };
    let report = probe_model(&exp, &ctrl, &pcfg)?;

    out.json("neuron_classes.json", &report.classification)?;
    out.json(
        "probe_model.json",
        &json!({
            "config": pcfg,
            "experimental": file_name(exp_path),
            "control": file_name(ctrl_path),
            "n_layers": exp.n_layers(),
            "n_neurons": exp.n_neurons(),
            "n_timepoints": exp.n_timepoints(),
            "rate_hz": exp.rate_hz(),
            "sentence": freq_summary(report.sentence_set.len(), &report.z_sentence),
            "phrase": freq_summary(report.phrase_set.len(), &report.z_phrase),
            "counts": class_counts(report.classification.iter().map(|(_, c)| c)),
            "layers": report.layers,
            "covariance": report.covariance,
        }),
    )?;

    let z_cols = |z: &ZScoreTable, u: UnitId| match z.entry(u) {
        Some(e) => vec![num(e.z_exp), num(e.z_ctrl), num(e.z_dev)],
        None => vec!["/".into(); 3],
    };
    let rows = report.classification.iter().map(|(u, class)| {
        let mut row = vec![u.layer.to_string(), u.neuron.to_string(), class.as_str().to_string()];
        for (set, z) in [(&report.sentence_set, &report.z_sentence), (&report.phrase_set, &report.z_phrase)] {
            let r = &set.results[&u];
            row.extend([num(r.observed), num(r.ci_low), num(r.ci_high), r.significant.to_string()]);
            row.extend(z_cols(z, u));
        }
        row
    });
    out.csv("model_units.csv", &UNIT_HEADER, rows)?;

    out.csv(
        "model_layers.csv",
        &["layer", "width", "n_sentence", "n_phrase", "n_both", "proportion", "share_of_syntactic"],
        report.layers.iter().map(|r| {
            vec![
                r.layer.to_string(),
                r.width.to_string(),
                r.n_sentence.to_string(),
                r.n_phrase.to_string(),
                r.n_both.to_string(),
                num(r.proportion),
                num(r.share_of_syntactic),
            ]
        }),
    )?;

    let mut rows = Vec::new();
    for (label, t) in [("experimental", &exp), ("control", &ctrl)] {
        for layer in 0..t.n_layers() {
            let spectra = (0..t.n_neurons())
                .map(|n| dft_f32(t.series(UnitId::new(layer, n)), t.rate_hz()))
                .collect::<hftp::Result<Vec<_>>>()?;
            let freqs = spectra[0].freqs().to_vec();
            let mags: Vec<Vec<f64>> = spectra.iter().map(|s| s.magnitudes()).collect();
            let summary = hftp::spectral::summarize_curves(&freqs, &mags)?;
            for (k, f) in freqs.iter().enumerate() {
                let sum: Complex64 = spectra.iter().map(|s| s.coeffs()[k]).sum();
                let c = sum / spectra.len() as f64;
                rows.push(vec![
                    label.to_string(),
                    layer.to_string(),
                    num(*f),
                    num(c.re),
                    num(c.im),
                    num(summary.mean[k]),
                    num(summary.sem[k]),
                ]);
            }
        }
    }
    out.csv("model_spectrum.csv", &["condition", "layer", "freq_hz", "re", "im", "magnitude", "sem"], rows)
}

// ---------------------------------------------------------------- probe-brain

pub fn probe_brain_cmd(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let path = required(&cfg.inputs.recording, "recording")?;
    let r = read_tri(path)?;
    let m = roi_map(&cfg.inputs)?;
    let bcfg = BrainProbeConfig {
        permutation: cfg.permutation(),
        sentence_hz: cfg.sentence_hz,
        phrase_hz: cfg.phrase_hz,
        window: cfg.brain_window,
    };
    let report = probe_brain(&r, &m, &bcfg)?;
    let c = &report.classification;
    out.json("channel_classes.json", c)?;
    let excluded: Vec<usize> =
        report.spectra.iter().filter(|s| s.has_exclusions()).map(|s| s.channel_id).collect();
    out.json(
        "probe_brain.json",
        &json!({
            "config": bcfg,
            "recording": file_name(path),
            "n_channels": r.n_channels(),
            "n_trials": r.n_trials(),
            "rate_hz": r.rate_hz(),
            "counts": class_counts(c.rows.iter().map(|row| row.class)),
            "correlation": { "L": report.correlation_left, "R": report.correlation_right },
            "distribution": report.distribution.rows,
            "channels_with_excluded_bins": excluded,
        }),
    )?;
    out.csv(
        "brain_channels.csv",
        &[
            "channel_id", "hemisphere", "aal_label", "roi", "class",
            "sentence_itpc", "sentence_ci_low", "sentence_ci_high", "sentence_significant",
            "phrase_itpc", "phrase_ci_low", "phrase_ci_high", "phrase_significant",
        ],
        c.rows.iter().map(|row| {
            let mut v = vec![
                row.meta.channel_id.to_string(),
                row.meta.hemisphere.to_string(),
                row.meta.aal_label.clone(),
                row.meta.roi.name().to_string(),
                row.class.as_str().to_string(),
            ];
            for p in [&row.sentence, &row.phrase] {
                v.extend([num(p.observed), num(p.ci_low), num(p.ci_high), p.significant.to_string()]);
            }
            v
        }),
    )?;
    let mut rows = Vec::new();
    for s in &report.spectra {
        for k in 0..s.freqs.len() {
            rows.push(vec![
                s.channel_id.to_string(),
                num(s.freqs[k]),
                num(s.itpc[k]),
                num(s.complex_mean[k].re),
                num(s.complex_mean[k].im),
                s.excluded[k].to_string(),
            ]);
        }
    }
    out.csv("brain_itpc.csv", &["channel_id", "freq_hz", "itpc", "re", "im", "excluded"], rows)?;
    out.csv(
        "brain_rois.csv",
        &["roi", "hemisphere", "n_channels", "n_sentence", "n_phrase", "n_both", "proportion", "share_of_significant"],
        report.distribution.rows.iter().map(|row| {
            vec![
                row.roi.name().to_string(),
                row.hemisphere.to_string(),
                row.n_channels.to_string(),
                row.n_sentence.to_string(),
                row.n_phrase.to_string(),
                row.n_both.to_string(),
                num(row.proportion),
                num(row.share_of_significant),
            ]
        }),
    )
}

// ---------------------------------------------------------------- align / encode

/// Region rows plus the model–brain row, one column per hemisphere.
fn similarity_rows(pool: &str, columns: &[CombinedColumn]) -> Vec<Vec<String>> {
    let col = |h: usize| columns.get(h);
    let mut rows: Vec<Vec<String>> = Roi::ALL
        .iter()
        .map(|&roi| {
            let cell = |h| col(h).and_then(|c: &CombinedColumn| c.regions.iter().find(|r| r.roi == roi)).and_then(|r| r.similarity);
            vec![pool.to_string(), roi.name().to_string(), opt(cell(0)), opt(cell(1))]
        })
        .collect();
    rows.push(vec![
        pool.to_string(),
        "S(m,b)".into(),
        opt(col(0).and_then(|c| c.model_brain)),
        opt(col(1).and_then(|c| c.model_brain)),
    ]);
    rows
}

fn pool_columns(p: &PoolReport) -> Vec<CombinedColumn> {
    hftp::alignment::combine_pools(std::slice::from_ref(p), &[p.pool])
}

fn write_pool_tables(prefix: &str, pools: &[&PoolReport], combined: &[CombinedColumn], out: &mut OutDir) -> Result<(), CliError> {
    let mut rows = similarity_rows("combined", combined);
    for p in pools {
        rows.extend(similarity_rows(p.pool.as_str(), &pool_columns(p)));
    }
    out.csv(&format!("{prefix}_table.csv"), &["pool", "region", "L", "R"], rows)?;

    let mut sel = Vec::new();
    let mut contrib = Vec::new();
    for p in pools {
        for h in &p.hemispheres {
            for s in &h.selections {
                for (rank, c) in s.top.iter().enumerate() {
                    sel.push(vec![
                        p.pool.as_str().to_string(),
                        h.hemisphere.to_string(),
                        s.layer.to_string(),
                        (rank + 1).to_string(),
                        c.channel.to_string(),
                        num(c.score),
                    ]);
                }
            }
            for c in &h.contributions {
                contrib.push(vec![
                    p.pool.as_str().to_string(),
                    h.hemisphere.to_string(),
                    c.layer.to_string(),
                    c.roi.name().to_string(),
                    opt(c.ratio),
                ]);
            }
        }
    }
    out.csv(&format!("{prefix}_selection.csv"), &["pool", "hemisphere", "layer", "rank", "channel_id", "score"], sel)?;
    out.csv(&format!("{prefix}_contribution.csv"), &["pool", "hemisphere", "layer", "roi", "ratio"], contrib)
}

fn score_rows(p: &PoolReport) -> Vec<Vec<String>> {
    let Some(t) = &p.table else { return Vec::new() };
    let mut rows = Vec::new();
    for (i, layer) in t.layers.iter().enumerate() {
        for (j, ch) in t.channels.iter().enumerate() {
            rows.push(vec![
                p.pool.as_str().to_string(),
                layer.to_string(),
                ch.channel_id.to_string(),
                ch.hemisphere.to_string(),
                ch.roi.name().to_string(),
                num(t.scores[i][j]),
            ]);
        }
    }
    rows
}

pub fn align_cmd(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let model_files = required(&cfg.inputs.model, "model class files")?;
    let brain_files = required(&cfg.inputs.brain, "brain class files")?;
    let acts = class_tensors(model_files)?;
    let recs = class_recordings(brain_files)?;
    let m = roi_map(&cfg.inputs)?;
    let neurons = neuron_classes(&cfg.inputs)?;
    let channels = channel_classes(&cfg.inputs)?;

    let [a0, a1, a2] = &acts;
    let mut model = ModelConditions::from_classes([a0, a1, a2], cfg.split_policy, cfg.model_window_units)?;
    model.averaging = cfg.trial_averaging;
    let [r0, r1, r2] = &recs;
    let brain = BrainConditions::from_classes([r0, r1, r2], cfg.split_policy, cfg.brain_window)?;
    let acfg = AlignConfig {
        k: cfg.k,
        pools: cfg.pools.clone(),
        combine: cfg.combine.clone(),
        neuron_diagnostics: cfg.neuron_diagnostics,
    };
    let report: AlignmentReport = align(&model, &brain, neurons.as_ref(), channels.as_ref(), &m, &acfg)?;
    out.json("alignment.json", &report)?;
    let pools: Vec<&PoolReport> = report.pools.iter().collect();
    write_pool_tables("alignment", &pools, &report.combined, out)?;
    out.csv(
        "alignment_scores.csv",
        &["pool", "layer", "channel_id", "hemisphere", "roi", "rho"],
        report.pools.iter().flat_map(score_rows),
    )?;
    let mut overlap = Vec::new();
    for p in &report.pools {
        for o in &p.overlap {
            let mut row = vec![p.pool.as_str().to_string(), o.layer.to_string(), o.hemisphere.to_string()];
            match &o.test {
                Some(t) => {
                    row.extend(t.table.iter().flatten().map(|n| n.to_string()));
                    row.extend([num(t.chi2), num(t.p)]);
                }
                None => row.extend(std::iter::repeat_n("/".to_string(), 6)),
            }
            row.push(o.note.clone().unwrap_or_default());
            overlap.push(row);
        }
    }
    out.csv(
        "alignment_overlap.csv",
        &["pool", "layer", "hemisphere", "top_sig", "top_nonsig", "rest_sig", "rest_nonsig", "chi2", "p", "note"],
        overlap,
    )
}

pub fn encode_cmd(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let model_files = required(&cfg.inputs.model, "model class files")?;
    let brain_files = required(&cfg.inputs.brain, "brain class files")?;
    let class = StimulusClass::Sentence;
    let t = read_act(&model_files.sentence)?;
    let r = read_tri(&brain_files.sentence)?;
    let t = match cfg.model_window_units {
        Some(n) => t.slice_last(n)?,
        None => t,
    };
    let r = match cfg.brain_window {
        Some(w) => r.slice_last(w.n_units, w.unit_sec)?,
        None => r,
    };
    let [(_, ma), (_, mb)] = t.split_conditions(class, cfg.split_policy)?;
    let [(_, ba), (_, bb)] = r.split_conditions(class, cfg.split_policy)?;
    let m = roi_map(&cfg.inputs)?;
    let neurons = neuron_classes(&cfg.inputs)?;
    let ecfg = EncodeConfig { encoding: cfg.encoding(), k: cfg.k, pools: cfg.combine.clone(), combine: cfg.combine.clone() };
    let report: EncodingReport = encode(&[&ma, &mb], &[&ba, &bb], neurons.as_ref(), &m, &ecfg)?;
    out.json("encoding.json", &report)?;
    let pools: Vec<&PoolReport> = report.pools.iter().map(|p| &p.report).collect();
    write_pool_tables("encoding", &pools, &report.combined, out)?;
    let mut rows = Vec::new();
    for p in &report.pools {
        for s in &p.scores {
            rows.push(vec![
                p.report.pool.as_str().to_string(),
                s.layer.to_string(),
                s.channel.to_string(),
                num(s.p_score),
                s.split_scores.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";"),
                s.alphas.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";"),
                s.degenerate_splits.to_string(),
            ]);
        }
    }
    out.csv(
        "encoding_scores.csv",
        &["pool", "layer", "channel_id", "p_score", "split_scores", "alphas", "degenerate_splits"],
        rows,
    )
}

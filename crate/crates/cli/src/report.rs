//! Merges the JSON summaries of earlier stages into one report, compares
//! models when several alignment runs are given, and optionally draws the
//! figures.

use std::collections::BTreeMap;
use std::path::Path;

use hftp::alignment::compare_models;
use hftp::ingest::Roi;
use hftp::stats;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::output::{num, OutDir, MISSING};
use crate::svg::{bar_chart, line_chart, Series};
use crate::CliError;

/// Stage name → the summary file it leaves behind.
pub const STAGES: [(&str, &str); 4] = [
    ("probe_model", "probe_model.json"),
    ("probe_brain", "probe_brain.json"),
    ("alignment", "alignment.json"),
    ("encoding", "encoding.json"),
];

fn load(path: &Path) -> Result<Option<Value>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map(Some).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn f(v: &Value) -> Option<f64> {
    v.as_f64()
}

/// Mean top-`k` score of every layer, averaged over pools and hemispheres.
pub fn layer_means(alignment: &Value) -> Vec<f64> {
    let mut per_layer: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for pool in alignment["pools"].as_array().into_iter().flatten() {
        for h in pool["hemispheres"].as_array().into_iter().flatten() {
            for s in h["selections"].as_array().into_iter().flatten() {
                let scores: Vec<f64> = s["top"].as_array().into_iter().flatten().filter_map(|c| f(&c["score"])).collect();
                if let (Some(layer), false) = (s["layer"].as_u64(), scores.is_empty()) {
                    per_layer.entry(layer).or_default().push(stats::mean(&scores));
                }
            }
        }
    }
    per_layer.values().map(|v| stats::mean(v)).collect()
}

fn cell(v: Option<&Value>) -> String {
    match v.and_then(f) {
        Some(x) => num(x),
        None => MISSING.into(),
    }
}

fn summary_rows(source: &str, stage: &str, v: &Value, rows: &mut Vec<Vec<String>>) {
    let mut push = |metric: &str, key: &str, value: String| {
        rows.push(vec![source.into(), stage.into(), metric.into(), key.into(), value]);
    };
    match stage {
        "probe_model" | "probe_brain" => {
            if let Some(counts) = v["counts"].as_object() {
                for (class, n) in counts {
                    push("count", class, n.to_string());
                }
            }
            if stage == "probe_model" {
                for freq in ["sentence", "phrase"] {
                    push("n_significant", freq, v[freq]["n_significant"].to_string());
                }
                push("covariance_r", "", cell(v["covariance"].get("r")));
                for row in v["layers"].as_array().into_iter().flatten() {
                    push("layer_proportion", &row["layer"].to_string(), cell(row.get("proportion")));
                }
            } else {
                for h in ["L", "R"] {
                    push("roi_correlation_r", h, cell(v["correlation"][h].get("r")));
                }
            }
        }
        _ => {
            for col in v["combined"].as_array().into_iter().flatten() {
                let h = col["hemisphere"].as_str().unwrap_or("?");
                push("S(m,b)", h, cell(col.get("model_brain")));
                for r in col["regions"].as_array().into_iter().flatten() {
                    let key = format!("{h}:{}", r["roi"].as_str().unwrap_or("?"));
                    push("S(m,b_r)", &key, cell(r.get("similarity")));
                }
            }
        }
    }
}

fn read_csv(path: &Path) -> Result<Option<Vec<csv::StringRecord>>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    r.records()
        .collect::<Result<Vec<_>, _>>()
        .map(Some)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn parse(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

/// Layer-averaged magnitude spectrum per condition with a ±1 s.e.m. band
/// (the standard errors are combined as for a mean of independent layers).
fn spectrum_svg(dir: &Path) -> Result<Option<String>, CliError> {
    let Some(rows) = read_csv(&dir.join("model_spectrum.csv"))? else { return Ok(None) };
    let mut curves: BTreeMap<(String, u64), Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in &rows {
        let key = (r[0].to_string(), r[1].parse().unwrap_or(0));
        curves.entry(key).or_default().push((parse(&r[2]), parse(&r[5]), parse(&r[6])));
    }
    let mut series = Vec::new();
    for cond in ["experimental", "control"] {
        let layers: Vec<&Vec<(f64, f64, f64)>> = curves.iter().filter(|(k, _)| k.0 == cond).map(|(_, v)| v).collect();
        let Some(first) = layers.first() else { continue };
        let n = layers.len() as f64;
        let x: Vec<f64> = first.iter().skip(1).map(|p| p.0).collect();
        let y: Vec<f64> = (1..first.len()).map(|i| layers.iter().map(|l| l[i].1).sum::<f64>() / n).collect();
        let band: Vec<f64> =
            (1..first.len()).map(|i| layers.iter().map(|l| l[i].2 * l[i].2).sum::<f64>().sqrt() / n).collect();
        series.push(Series { name: cond.into(), x, y, band: Some(band) });
    }
    Ok(Some(line_chart("Model activation spectrum", "frequency (Hz)", "mean |X(f)|", &series)))
}

fn itpc_svg(dir: &Path) -> Result<Option<String>, CliError> {
    let Some(rows) = read_csv(&dir.join("brain_itpc.csv"))? else { return Ok(None) };
    let mut by_freq: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in &rows {
        let freq = parse(&r[1]);
        by_freq.entry(freq.to_bits()).or_insert((freq, Vec::new())).1.push(parse(&r[2]));
    }
    let mut pts: Vec<(f64, f64, f64)> = by_freq
        .into_values()
        .filter(|(freq, _)| *freq > 0.0)
        .map(|(freq, v)| (freq, stats::mean(&v), stats::sample_sd(&v) / (v.len() as f64).sqrt()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let band = pts.iter().map(|p| if p.2.is_finite() { p.2 } else { 0.0 }).collect();
    let series = Series { name: "all channels".into(), x: pts.iter().map(|p| p.0).collect(), y: pts.iter().map(|p| p.1).collect(), band: Some(band) };
    Ok(Some(line_chart("Inter-trial phase coherence", "frequency (Hz)", "ITPC", &[series])))
}

fn layers_svg(v: &Value) -> String {
    let rows: Vec<&Value> = v["layers"].as_array().into_iter().flatten().collect();
    let cats: Vec<String> = rows.iter().map(|r| format!("L{}", r["layer"])).collect();
    let groups = ["n_sentence", "n_phrase", "n_both"]
        .iter()
        .map(|k| (k.trim_start_matches("n_").to_string(), rows.iter().map(|r| f(&r[*k])).collect()))
        .collect::<Vec<_>>();
    bar_chart("Syntactic neurons per layer", "neurons", &cats, &groups)
}

fn rois_svg(v: &Value) -> String {
    let rows: Vec<&Value> = v["distribution"].as_array().into_iter().flatten().collect();
    let cats: Vec<String> = Roi::ALL.iter().map(|r| r.name().to_string()).collect();
    let mut groups = Vec::new();
    for h in ["L", "R"] {
        let vals = Roi::ALL
            .iter()
            .map(|roi| {
                rows.iter()
                    .find(|r| r["roi"].as_str() == Some(roi.name()) && r["hemisphere"].as_str() == Some(h))
                    .and_then(|r| f(&r["proportion"]))
            })
            .collect();
        groups.push((format!("{h} hemisphere"), vals));
    }
    bar_chart("Significant channels per region", "proportion of channels", &cats, &groups)
}

fn regions_svg(title: &str, v: &Value) -> String {
    let cats: Vec<String> = Roi::ALL.iter().map(|r| r.name().to_string()).collect();
    let mut groups = Vec::new();
    for col in v["combined"].as_array().into_iter().flatten() {
        let regions: Vec<&Value> = col["regions"].as_array().into_iter().flatten().collect();
        let vals = Roi::ALL
            .iter()
            .map(|roi| regions.iter().find(|r| r["roi"].as_str() == Some(roi.name())).and_then(|r| f(&r["similarity"])))
            .collect();
        groups.push((format!("{} hemisphere", col["hemisphere"].as_str().unwrap_or("?")), vals));
    }
    bar_chart(title, "similarity", &cats, &groups)
}

pub fn report_cmd(cfg: &RunConfig, out: &mut OutDir) -> Result<(), CliError> {
    let dirs = &cfg.inputs.stages;
    if dirs.is_empty() {
        return Err(CliError::config("report needs at least one stage directory"));
    }
    let mut merged = Map::new();
    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let mut sources = Vec::new();
    let mut svgs: Vec<(String, String)> = Vec::new();
    for (i, dir) in dirs.iter().enumerate() {
        let source = dir.display().to_string();
        sources.push(source.clone());
        for (stage, file) in STAGES {
            let Some(v) = load(&dir.join(file))? else { continue };
            summary_rows(&source, stage, &v, &mut rows);
            if cfg.svg {
                match stage {
                    "probe_model" => svgs.push((format!("layer_distribution_{i}.svg"), layers_svg(&v))),
                    "probe_brain" => svgs.push((format!("roi_distribution_{i}.svg"), rois_svg(&v))),
                    "alignment" => svgs.push((format!("region_similarity_{i}.svg"), regions_svg("Model-region similarity (RSA)", &v))),
                    _ => svgs.push((format!("region_encoding_{i}.svg"), regions_svg("Model-region similarity (encoding)", &v))),
                }
            }
            if stage == "alignment" {
                groups.push((source.clone(), layer_means(&v)));
            }
            let entry = merged.entry(stage.to_string()).or_insert_with(|| Value::Array(Vec::new()));
            entry.as_array_mut().expect("array").push(json!({ "source": source, "data": v }));
        }
        if cfg.svg {
            if let Some(s) = spectrum_svg(dir)? {
                svgs.push((format!("spectrum_{i}.svg"), s));
            }
            if let Some(s) = itpc_svg(dir)? {
                svgs.push((format!("itpc_{i}.svg"), s));
            }
        }
    }
    for (stage, _) in STAGES {
        if !merged.contains_key(stage) {
            gaps.push(stage.to_string());
            merged.insert(stage.to_string(), Value::Null);
        }
    }
    let comparison = if groups.len() < 2 {
        json!({ "note": "fewer than two alignment runs; no comparison" })
    } else {
        let values: Vec<Vec<f64>> = groups.iter().map(|g| g.1.clone()).collect();
        let models: Vec<Value> = groups.iter().map(|(s, v)| json!({ "source": s, "layer_means": v })).collect();
        match compare_models(&values) {
            Ok(a) => json!({ "models": models, "anova": a }),
            Err(e) => json!({ "models": models, "error": e.to_string() }),
        }
    };
    merged.insert("sources".into(), json!(sources));
    merged.insert("gaps".into(), json!(gaps));
    merged.insert("model_comparison".into(), comparison);
    out.json("report.json", &Value::Object(merged))?;
    out.csv("report.csv", &["source", "stage", "metric", "key", "value"], rows)?;
    for (name, body) in svgs {
        out.text(&name, &body)?;
    }
    Ok(())
}

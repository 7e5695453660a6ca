//! The full chain on a synthetic experiment: probe the model, align it with
//! the recordings, and check that the planted channels come out on top.

use hftp::alignment::{align, AlignConfig, BrainConditions, ModelConditions, NeuronPool, DEFAULT_WINDOW_UNITS};
use hftp::ingest::{generate_scenario, RoiMap, ScenarioConfig, SplitPolicy};
use hftp::probe_brain::TrialWindow;
use hftp::probe_model::{probe_model, ModelProbeConfig};

#[test]
fn planted_channels_rank_first_for_planted_layer() {
    let cfg = ScenarioConfig::default();
    let s = generate_scenario(&cfg).unwrap();
    let [sentence, phrase, random] = &s.activations;
    let probe = probe_model(sentence, random, &ModelProbeConfig::default()).unwrap();

    let model = ModelConditions::from_classes([sentence, phrase, random], SplitPolicy::Contiguous, Some(DEFAULT_WINDOW_UNITS)).unwrap();
    let [rs, rp, rr] = &s.recordings;
    let brain = BrainConditions::from_classes([rs, rp, rr], SplitPolicy::Contiguous, Some(TrialWindow::default())).unwrap();
    let report = align(
        &model,
        &brain,
        Some(&probe.classification),
        None,
        &RoiMap::default_map(),
        &AlignConfig { k: 5, ..Default::default() },
    )
    .unwrap();

    let pool = report.pool(NeuronPool::Syntactic).unwrap();
    let table = pool.table.as_ref().unwrap();
    let sel = table.select(5, None);
    let planted = sel.iter().find(|s| s.layer == cfg.planted_layer).expect("planted layer scored");
    let hits = planted.top.iter().filter(|c| c.channel < cfg.planted_channels).count();
    assert!(hits >= 3, "{hits} planted channels in the top 5");
}

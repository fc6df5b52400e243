//! Replays the checked-in fuzz seeds, and random mutations of them, through
//! every parser on the stable toolchain. Parsers must return errors, never panic.

use std::fs;
use std::path::PathBuf;

use motion_saliency::data::{dataset_to_string, decode_feature_cache, parse_dataset};
use motion_saliency::nn::parse_checkpoint;
use motion_saliency::pipeline::PipelineConfig;
use motion_saliency::saliency::{parse_heatmap, parse_scores, scores_to_string};
use proptest::prelude::*;

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<Vec<u8>> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| fs::read(e.unwrap().path()).unwrap())
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn run(target: &str, data: &[u8]) {
    if target == "decode_feature_cache" {
        if let Ok(c) = decode_feature_cache(data) {
            assert!(c.matrices.iter().all(|m| m.rows() == c.t_max && m.cols() == c.features));
        }
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else { return };
    match target {
        "parse_dataset" => {
            if let Ok(m) = parse_dataset(text) {
                assert_eq!(parse_dataset(&dataset_to_string(&m)).unwrap(), m);
            }
        }
        "parse_checkpoint" => {
            if let Ok(model) = parse_checkpoint(text) {
                let x = vec![0.0; model.architecture.input_dim()];
                model.predict(&x).unwrap();
            }
        }
        "parse_scores" => {
            if let Ok(t) = parse_scores(text) {
                assert_eq!(parse_scores(&scores_to_string(&t)).unwrap().len(), t.len());
            }
        }
        "parse_heatmap" => {
            let _ = parse_heatmap(text);
        }
        "parse_config" => {
            if let Ok(cfg) = PipelineConfig::from_toml_str(text) {
                let _ = cfg.synth.validate();
                let _ = cfg.sweep.settings();
            }
        }
        other => panic!("unknown target {other}"),
    }
}

const TARGETS: [&str; 6] = [
    "parse_dataset",
    "decode_feature_cache",
    "parse_checkpoint",
    "parse_scores",
    "parse_heatmap",
    "parse_config",
];

#[test]
fn valid_seeds_parse() {
    let d = seeds("parse_dataset");
    assert!(d.iter().any(|s| parse_dataset(std::str::from_utf8(s).unwrap()).is_ok()));
    assert!(seeds("decode_feature_cache")
        .iter()
        .any(|s| decode_feature_cache(s).is_ok()));
    assert!(seeds("parse_checkpoint")
        .iter()
        .any(|s| parse_checkpoint(std::str::from_utf8(s).unwrap()).is_ok()));
    assert!(seeds("parse_scores")
        .iter()
        .any(|s| parse_scores(std::str::from_utf8(s).unwrap()).is_ok()));
    assert!(seeds("parse_heatmap")
        .iter()
        .all(|s| parse_heatmap(std::str::from_utf8(s).unwrap()).is_ok()));
    assert!(seeds("parse_config")
        .iter()
        .all(|s| PipelineConfig::from_toml_str(std::str::from_utf8(s).unwrap()).is_ok()));
}

#[test]
fn seeds_replay_without_panics() {
    for t in TARGETS {
        for s in seeds(t) {
            run(t, &s);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mutated_seeds_never_panic(
        target in prop::sample::select(TARGETS.to_vec()),
        pick in any::<prop::sample::Index>(),
        edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>(), 0u8..3), 1..8),
    ) {
        let all = seeds(target);
        let mut data = all[pick.index(all.len())].clone();
        for (at, byte, op) in edits {
            if data.is_empty() {
                data.push(byte);
                continue;
            }
            let i = at.index(data.len());
            match op {
                0 => data[i] = byte,
                1 => data.truncate(i),
                _ => data.insert(i, byte),
            }
        }
        run(target, &data);
    }
}

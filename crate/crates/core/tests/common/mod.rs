#![allow(dead_code)]

pub mod bca_ref;
pub mod kkt;

use std::path::{Path, PathBuf};

use switchbench::config::RunConfig;
use switchbench::stats::factor::DeltaMatrix;
use switchbench::stats::matrix::parse_delta_table;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("data")
        .join(name)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn delta_fixture(name: &str) -> DeltaMatrix {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    parse_delta_table(&text).unwrap().to_delta_matrix().unwrap()
}

/// Offline CoQA config over the synthetic stories: `models` all served by
/// one mock backend (optionally scripted), writing under `dir`.
pub fn mock_coqa_config(
    dir: &Path,
    models: &[&str],
    sample_size: usize,
    turns: usize,
    script: Option<&Path>,
    workers: usize,
) -> RunConfig {
    let script_line = script
        .map(|p| format!("script = {:?}\n", p.display().to_string()))
        .unwrap_or_default();
    let mut toml = format!(
        "task = \"coqa\"\n\
         dataset = {:?}\n\
         sample_size = {sample_size}\n\
         turns = {turns}\n\
         workers = {workers}\n\
         cache_root = \"cache\"\n\
         output_dir = \"out\"\n\
         [bootstrap]\nresamples = 1000\nseed = 0\n\
         [backends.mock]\nkind = \"mock\"\n{script_line}",
        fixture("mock/coqa.jsonl").display().to_string(),
    );
    for m in models {
        toml.push_str(&format!("[[models]]\nname = \"{m}\"\nbackend = \"mock\"\n"));
    }
    RunConfig::from_toml(&toml, dir).expect("test config parses")
}

/// `(id, gold answer per question)` for every well-formed fixture story.
pub fn fixture_stories() -> Vec<(String, Vec<String>)> {
    std::fs::read_to_string(fixture("mock/coqa.jsonl"))
        .unwrap()
        .lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .map(|v| {
            let answers = v["answers"]["input_text"]
                .as_array()
                .unwrap()
                .iter()
                .map(|a| a.as_str().unwrap().to_string())
                .collect();
            (v["id"].as_str().unwrap().to_string(), answers)
        })
        .collect()
}

/// Script where each model's final answer ignores who wrote the prefix:
/// correct on even-numbered stories, wrong on the rest.
pub fn author_independent_script(dir: &Path, models: &[&str], turn: usize) -> PathBuf {
    let mut entries = Vec::new();
    for (i, (id, answers)) in fixture_stories().iter().enumerate() {
        if answers.len() < turn {
            continue;
        }
        for m in models {
            let text = if i % 2 == 0 {
                answers[turn - 1].clone()
            } else {
                "no idea".into()
            };
            entries.push(serde_json::json!({
                "model": m, "task": "coqa", "episode_id": id, "turn": turn,
                "text": format!("<answer>{text}</answer>"),
            }));
        }
    }
    let path = dir.join("independent_script.json");
    std::fs::write(&path, serde_json::to_string(&entries).unwrap()).unwrap();
    path
}

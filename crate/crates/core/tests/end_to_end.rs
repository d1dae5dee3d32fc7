//! Full pipeline on the mock backend: run, resume, stats, replay.

mod common;

use std::collections::BTreeMap;

use switchbench::cache::CorruptionPolicy;
use switchbench::commands::{cmd_replay, cmd_run, cmd_stats};
use switchbench::model::{IntervalMethod, StarLevel};
use switchbench::runner::{load_results, RESULTS_FILE, SUMMARY_FILE};
use switchbench::stats::BootstrapConfig;
use tempfile::tempdir;

const MODELS: [&str; 3] = ["alpha", "beta", "gamma"];

#[test]
fn run_writes_every_cell_and_resumes_without_calls() {
    let dir = tempdir().unwrap();
    let cfg = common::mock_coqa_config(dir.path(), &MODELS, 2, 4, None, 4);
    let first = cmd_run(&cfg).unwrap();
    assert_eq!(
        (first.planned, first.completed, first.skipped, first.failed),
        (18, 18, 0, 0)
    );
    // Three models x two episodes, each prefix generated once (3 turns).
    assert_eq!(first.prefix_generations, 6);
    let results_path = cfg.output_dir.join(RESULTS_FILE);
    let bytes = std::fs::read(&results_path).unwrap();
    assert_eq!(load_results(&results_path, false).unwrap().len(), 18);
    assert!(cfg.output_dir.join(SUMMARY_FILE).is_file());

    let second = cmd_run(&cfg).unwrap();
    assert_eq!(
        (second.skipped, second.completed, second.generation_calls),
        (18, 0, 0)
    );
    assert_eq!(std::fs::read(&results_path).unwrap(), bytes);
}

#[test]
fn bad_dataset_path_fails_before_any_output() {
    let dir = tempdir().unwrap();
    let mut cfg = common::mock_coqa_config(dir.path(), &MODELS, 2, 4, None, 1);
    cfg.dataset = dir.path().join("missing.jsonl");
    let err = cmd_run(&cfg).unwrap_err().to_string();
    assert!(err.contains("missing.jsonl"), "{err}");
    assert!(!cfg.output_dir.exists());
    assert!(!cfg.cache_root.exists());
}

#[test]
fn stats_means_and_deltas_match_hand_computation() {
    let dir = tempdir().unwrap();
    let cfg = common::mock_coqa_config(dir.path(), &MODELS, 10, 4, None, 4);
    cmd_run(&cfg).unwrap();
    let results_path = cfg.output_dir.join(RESULTS_FILE);
    let out = dir.path().join("matrix.json");
    let matrix = cmd_stats(&results_path, &BootstrapConfig::default(), None, Some(&out)).unwrap();
    assert!(out.is_file());

    let mut by_cell: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in load_results(&results_path, false).unwrap() {
        by_cell
            .entry((r.cell.prefix.name.clone(), r.cell.suffix.name.clone()))
            .or_default()
            .push(r.score);
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    for a in MODELS {
        for b in MODELS {
            let cell = matrix.cell(a, b).unwrap();
            let expected = mean(&by_cell[&(a.to_string(), b.to_string())]);
            assert!((cell.mean - expected).abs() < 1e-12, "{a}->{b}");
            let delta = cell.delta.as_ref().unwrap();
            let baseline = mean(&by_cell[&(b.to_string(), b.to_string())]);
            assert!(
                (delta.delta - (expected - baseline)).abs() < 1e-12,
                "{a}->{b}"
            );
            if a == b {
                assert_eq!((delta.delta, delta.star), (0.0, StarLevel::None));
            }
        }
    }
}

#[test]
fn single_model_results_give_means_only() {
    let dir = tempdir().unwrap();
    let cfg = common::mock_coqa_config(dir.path(), &["solo"], 4, 4, None, 1);
    cmd_run(&cfg).unwrap();
    let m = cmd_stats(
        &cfg.output_dir.join(RESULTS_FILE),
        &BootstrapConfig::default(),
        None,
        None,
    )
    .unwrap();
    assert_eq!(m.cells.len(), 1);
    let d = m.cells[0].delta.as_ref().unwrap();
    assert_eq!((d.delta, d.star), (0.0, StarLevel::None));
}

#[test]
fn author_independent_suffixes_give_zero_width_deltas() {
    let dir = tempdir().unwrap();
    let script = common::author_independent_script(dir.path(), &MODELS, 4);
    let cfg = common::mock_coqa_config(dir.path(), &MODELS, 10, 4, Some(&script), 4);
    cmd_run(&cfg).unwrap();
    let m = cmd_stats(
        &cfg.output_dir.join(RESULTS_FILE),
        &BootstrapConfig::default(),
        None,
        None,
    )
    .unwrap();
    for cell in &m.cells {
        let d = cell.delta.as_ref().unwrap();
        assert_eq!(d.delta, 0.0);
        assert_eq!((d.ci.lo, d.ci.hi), (0.0, 0.0));
        assert_eq!(d.star, StarLevel::None);
        // Scores vary across episodes, so the mean interval is not degenerate.
        assert!(cell.mean_ci.hi > cell.mean_ci.lo);
    }
}

#[test]
fn identical_scores_give_degenerate_mean_intervals() {
    let dir = tempdir().unwrap();
    let cfg = common::mock_coqa_config(dir.path(), &MODELS, 3, 4, None, 1);
    cmd_run(&cfg).unwrap();
    let path = cfg.output_dir.join(RESULTS_FILE);
    let mut results = load_results(&path, false).unwrap();
    for r in &mut results {
        r.score = 0.5;
    }
    let lines: Vec<String> = results
        .iter()
        .map(|r| serde_json::to_string(r).unwrap())
        .collect();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let m = cmd_stats(&path, &BootstrapConfig::default(), None, None).unwrap();
    for cell in &m.cells {
        assert_eq!((cell.mean_ci.lo, cell.mean_ci.hi), (0.5, 0.5));
        assert_eq!(cell.mean_ci.method, IntervalMethod::Degenerate);
    }
}

#[test]
fn corrupt_cache_entries_fail_loudly_unless_regeneration_is_allowed() {
    let dir = tempdir().unwrap();
    let cfg = common::mock_coqa_config(dir.path(), &MODELS, 2, 4, None, 1);
    cmd_run(&cfg).unwrap();
    let victim = walk(&cfg.cache_root)
        .into_iter()
        .find(|p| p.is_file())
        .unwrap();
    std::fs::write(&victim, b"garbage").unwrap();
    std::fs::remove_dir_all(&cfg.output_dir).unwrap();

    let err = cmd_run(&cfg).unwrap_err().to_string();
    let name = victim.file_name().unwrap().to_string_lossy().to_string();
    assert!(err.contains(&name), "error should name {name}: {err}");

    let mut lenient = cfg.clone();
    lenient.cache_corruption = CorruptionPolicy::Regenerate;
    // The aborted run leaves resumable results behind.
    let summary = cmd_run(&lenient).unwrap();
    assert_eq!(summary.completed + summary.skipped, 18);
    assert_eq!(summary.failed, 0);
}

#[test]
fn replay_needs_cached_prefixes() {
    let dir = tempdir().unwrap();
    let cfg = common::mock_coqa_config(dir.path(), &MODELS, 2, 4, None, 1);
    let err = cmd_replay(&cfg, "alpha", "beta").unwrap_err().to_string();
    assert!(err.contains("no cached"), "{err}");
}

fn walk(root: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            let mut children: Vec<_> = std::fs::read_dir(&p)
                .unwrap()
                .map(|e| e.unwrap().path())
                .collect();
            children.sort();
            stack.extend(children);
        } else {
            out.push(p);
        }
    }
    out
}

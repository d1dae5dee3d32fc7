//! BCa intervals checked against the from-scratch reference in
//! `common::bca_ref`.

mod common;

use common::bca_ref::{datasets, phi, phi_inv, reference_bca};
use switchbench::model::{CellId, CellResult, ModelId, Task};
use switchbench::stats::{bca_ci, paired_bca_ci, paired_deltas};

const LEVELS: [f64; 3] = [0.90, 0.95, 0.99];
const RESAMPLES: usize = 2000;

#[test]
fn reference_inverse_normal_is_accurate() {
    for &p in &[1e-6, 0.005, 0.025, 0.05, 0.3, 0.5, 0.77, 0.975, 0.999] {
        let x = phi_inv(p);
        assert!((phi(x) - p).abs() < 1e-14 * p.max(1e-2), "p={p}");
    }
}

#[test]
fn bca_matches_reference_on_fixed_datasets() {
    for (i, data) in datasets().iter().enumerate() {
        for level in LEVELS {
            let seed = 100 + i as u64;
            let got = bca_ci(data, RESAMPLES, seed, level).unwrap();
            let (lo, hi) = reference_bca(data, RESAMPLES, seed, level);
            assert!(
                (got.lo - lo).abs() <= 1e-9 && (got.hi - hi).abs() <= 1e-9,
                "dataset {i} (n={}) level {level}: got [{}, {}], reference [{lo}, {hi}]",
                data.len(),
                got.lo,
                got.hi
            );
        }
    }
}

fn results(prefix: &str, suffix: &str, scores: &[f64]) -> Vec<CellResult> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| CellResult {
            task: Task::Coqa,
            cell: CellId::new(ModelId::new("p", prefix), ModelId::new("p", suffix)),
            episode_id: format!("ep-{i:03}"),
            score: s,
            final_response: String::new(),
            refusal: false,
            seed: 0,
            params_digest: "d".into(),
        })
        .collect()
}

#[test]
fn paired_bca_matches_reference_on_score_differences() {
    let sets = datasets();
    for i in 0..sets.len() - 1 {
        let n = sets[i].len().min(sets[i + 1].len());
        let (switched, baseline) = (&sets[i][..n], &sets[i + 1][..n]);
        let cell =
            paired_deltas(&results("a", "b", switched), &results("b", "b", baseline)).unwrap();
        let diffs: Vec<f64> = switched.iter().zip(baseline).map(|(s, b)| s - b).collect();
        assert_eq!(cell.deltas, diffs);
        for level in LEVELS {
            let got = paired_bca_ci(&cell, RESAMPLES, 7, level).unwrap();
            let (lo, hi) = reference_bca(&diffs, RESAMPLES, 7, level);
            assert!(
                (got.lo - lo).abs() <= 1e-9 && (got.hi - hi).abs() <= 1e-9,
                "pair {i} level {level}: got [{}, {}], reference [{lo}, {hi}]",
                got.lo,
                got.hi
            );
        }
    }
}

//! Aggregation of result streams into a [`SwitchMatrix`], plus the CSV
//! table format used for published Δ and mean matrices.

use std::collections::{BTreeMap, BTreeSet};

use super::bootstrap::Bootstrap;
use super::factor::DeltaMatrix;
use super::paired::{paired_deltas, stars_from};
use super::{mean, BootstrapConfig, StatsError};
use crate::digest::derive_seed;
use crate::model::{
    CellResult, CellSummary, DeltaSummary, Interval, IntervalMethod, StarLevel, SwitchMatrix, Task,
};
use crate::{SCHEMA_VERSION, TOOL_VERSION};

/// Name recorded in every matrix for how failed cell-episodes are handled.
pub const FAILURE_POLICY: &str = "pairwise_drop";

#[derive(Debug, Clone)]
pub struct MatrixOptions {
    pub bootstrap: BootstrapConfig,
    pub mean_level: f64,
    pub delta_level: f64,
    /// Row/column order; defaults to order of first appearance.
    pub models: Option<Vec<String>>,
    pub input_digest: String,
}

impl Default for MatrixOptions {
    fn default() -> Self {
        Self {
            bootstrap: BootstrapConfig::default(),
            mean_level: 0.95,
            delta_level: 0.95,
            models: None,
            input_digest: String::new(),
        }
    }
}

fn point(v: f64) -> Interval {
    Interval {
        lo: v,
        hi: v,
        method: IntervalMethod::Degenerate,
    }
}

pub fn build_switch_matrix(
    results: &[CellResult],
    opts: &MatrixOptions,
) -> Result<SwitchMatrix, StatsError> {
    opts.bootstrap.validate()?;
    let mut task: Option<Task> = None;
    let mut seen = BTreeSet::new();
    let mut groups: BTreeMap<(String, String), Vec<CellResult>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for r in results {
        match task {
            Some(t) if t != r.task => {
                return Err(StatsError::MixedTasks(t.to_string(), r.task.to_string()));
            }
            _ => task = Some(r.task),
        }
        if !seen.insert(r.key()) {
            return Err(StatsError::DuplicateResult {
                prefix: r.cell.prefix.name.clone(),
                suffix: r.cell.suffix.name.clone(),
                episode: r.episode_id.clone(),
            });
        }
        for name in [&r.cell.prefix.name, &r.cell.suffix.name] {
            if !order.contains(name) {
                order.push(name.clone());
            }
        }
        groups
            .entry((r.cell.prefix.name.clone(), r.cell.suffix.name.clone()))
            .or_default()
            .push(r.clone());
    }
    let models = match &opts.models {
        Some(given) => {
            let mut m = given.clone();
            m.extend(order.into_iter().filter(|n| !given.contains(n)));
            m
        }
        None => order,
    };

    let seed = opts.bootstrap.seed;
    let resamples = opts.bootstrap.resamples;
    let mut cells = Vec::new();
    for a in &models {
        for b in &models {
            let Some(group) = groups.get(&(a.clone(), b.clone())) else {
                continue;
            };
            let scores: Vec<f64> = group.iter().map(|r| r.score).collect();
            let mean_ci = if scores.len() >= 2 {
                Bootstrap::new(
                    &scores,
                    resamples,
                    derive_seed(seed, &format!("mean/{a}/{b}")),
                )?
                .interval(opts.mean_level)
            } else {
                point(scores[0])
            };
            let delta = if a == b {
                DeltaSummary {
                    n: group.len(),
                    delta: 0.0,
                    ci: point(0.0),
                    star: StarLevel::None,
                }
            } else {
                let baseline = groups
                    .get(&(b.clone(), b.clone()))
                    .ok_or_else(|| StatsError::MissingDiagonal(b.clone()))?;
                let paired = paired_deltas(group, baseline)?;
                let delta = paired.delta();
                if paired.n() >= 2 {
                    let boot = Bootstrap::new(
                        &paired.deltas,
                        resamples,
                        derive_seed(seed, &format!("delta/{a}/{b}")),
                    )?;
                    DeltaSummary {
                        n: paired.n(),
                        delta,
                        ci: boot.interval(opts.delta_level),
                        star: stars_from(&boot, &opts.bootstrap.levels),
                    }
                } else {
                    DeltaSummary {
                        n: 1,
                        delta,
                        ci: point(delta),
                        star: StarLevel::None,
                    }
                }
            };
            cells.push(CellSummary {
                prefix: a.clone(),
                suffix: b.clone(),
                n: scores.len(),
                mean: mean(&scores),
                mean_ci,
                delta: Some(delta),
            });
        }
    }
    let episodes: BTreeSet<&str> = results.iter().map(|r| r.episode_id.as_str()).collect();
    Ok(SwitchMatrix {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION.to_string(),
        input_digest: opts.input_digest.clone(),
        task,
        models,
        n: episodes.len(),
        resamples,
        seed,
        mean_ci_level: opts.mean_level,
        delta_ci_level: opts.delta_level,
        failure_policy: FAILURE_POLICY.to_string(),
        cells,
    })
}

/// Off-diagonal Δ values of a matrix, for factor fitting.
pub fn delta_matrix(m: &SwitchMatrix) -> Result<DeltaMatrix, StatsError> {
    let values = m
        .models
        .iter()
        .map(|a| {
            m.models
                .iter()
                .map(|b| m.cell(a, b).and_then(|c| c.delta.as_ref()).map(|d| d.delta))
                .collect()
        })
        .collect();
    DeltaMatrix::new(m.models.clone(), values)
}

/// A square table read from CSV: header `prefix,<models...>`, one row per
/// prefix model in the same order. Empty, `-` or `n/a` cells are missing;
/// lines starting with `#` are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct Table<T> {
    pub models: Vec<String>,
    pub cells: Vec<Vec<Option<T>>>,
}

impl<T: Clone> Table<T> {
    pub fn get(&self, prefix: &str, suffix: &str) -> Option<&T> {
        let a = self.models.iter().position(|m| m == prefix)?;
        let b = self.models.iter().position(|m| m == suffix)?;
        self.cells[a][b].as_ref()
    }
}

pub type DeltaTable = Table<(f64, StarLevel)>;
/// Mean with its interval endpoints.
pub type MeansTable = Table<(f64, f64, f64)>;

fn parse_table<T>(
    text: &str,
    cell: impl Fn(&str) -> Result<T, String>,
) -> Result<Table<T>, StatsError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| StatsError::Table(e.to_string()))?
        .clone();
    let models: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    if models.is_empty() {
        return Err(StatsError::Table("no model columns".into()));
    }
    let mut cells = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| StatsError::Table(e.to_string()))?;
        let row_name = record.get(0).unwrap_or_default();
        if models.get(i).map(String::as_str) != Some(row_name) {
            return Err(StatsError::Table(format!(
                "row {} is `{row_name}`, expected rows in column order",
                i + 1
            )));
        }
        if record.len() != models.len() + 1 {
            return Err(StatsError::Table(format!(
                "row `{row_name}` has {} cells",
                record.len() - 1
            )));
        }
        let row = record
            .iter()
            .skip(1)
            .map(|c| match c {
                "" | "-" | "n/a" => Ok(None),
                c => cell(c)
                    .map(Some)
                    .map_err(|e| StatsError::Table(format!("row `{row_name}`: {e}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(row);
    }
    if cells.len() != models.len() {
        return Err(StatsError::Table(format!(
            "{} rows for {} models",
            cells.len(),
            models.len()
        )));
    }
    Ok(Table { models, cells })
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .trim_start_matches('+')
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Parses cells such as `-0.021***`.
pub fn parse_delta_table(text: &str) -> Result<DeltaTable, StatsError> {
    parse_table(text, |c| {
        let stars_at = c.find('*').unwrap_or(c.len());
        let star =
            StarLevel::from_stars(&c[stars_at..]).ok_or_else(|| format!("bad stars in `{c}`"))?;
        Ok((number(&c[..stars_at])?, star))
    })
}

/// Parses cells such as `0.689 [0.636, 0.738]`.
pub fn parse_means_table(text: &str) -> Result<MeansTable, StatsError> {
    parse_table(text, |c| {
        let (m, rest) = c
            .split_once('[')
            .ok_or_else(|| format!("missing interval in `{c}`"))?;
        let (lo, hi) = rest
            .trim_end()
            .strip_suffix(']')
            .and_then(|r| r.split_once(','))
            .ok_or_else(|| format!("malformed interval in `{c}`"))?;
        Ok((number(m)?, number(lo)?, number(hi)?))
    })
}

impl DeltaTable {
    pub fn to_delta_matrix(&self) -> Result<DeltaMatrix, StatsError> {
        DeltaMatrix::new(
            self.models.clone(),
            self.cells
                .iter()
                .map(|r| r.iter().map(|c| c.map(|v| v.0)).collect())
                .collect(),
        )
    }
}

/// One off-diagonal pair compared across a Δ table and a means table.
#[derive(Debug, Clone, PartialEq)]
pub struct Consistency {
    pub prefix: String,
    pub suffix: String,
    pub table_delta: f64,
    pub means_delta: f64,
}

impl Consistency {
    pub fn gap(&self) -> f64 {
        (self.table_delta - self.means_delta).abs()
    }
}

/// For every off-diagonal pair in both tables, the tabulated Δ next to
/// `mean(A→B) − mean(B→B)`.
pub fn cross_table_consistency(deltas: &DeltaTable, means: &MeansTable) -> Vec<Consistency> {
    let mut out = Vec::new();
    for a in &deltas.models {
        for b in &deltas.models {
            if a == b {
                continue;
            }
            if let (Some(d), Some(ab), Some(bb)) =
                (deltas.get(a, b), means.get(a, b), means.get(b, b))
            {
                out.push(Consistency {
                    prefix: a.clone(),
                    suffix: b.clone(),
                    table_delta: d.0,
                    means_delta: ab.0 - bb.0,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CellId, ModelId};

    fn result(prefix: &str, suffix: &str, ep: usize, score: f64) -> CellResult {
        CellResult {
            task: Task::Coqa,
            cell: CellId::new(ModelId::new("mock", prefix), ModelId::new("mock", suffix)),
            episode_id: format!("e{ep}"),
            score,
            final_response: String::new(),
            refusal: false,
            seed: 0,
            params_digest: String::new(),
        }
    }

    #[test]
    fn hand_computed_means_and_deltas() {
        let mut rs = Vec::new();
        for (ep, (bb, ab, aa, ba)) in [
            (1.0, 0.5, 0.0, 0.5),
            (0.5, 0.5, 1.0, 1.0),
            (0.0, 0.5, 0.5, 0.0),
        ]
        .iter()
        .enumerate()
        {
            rs.push(result("b", "b", ep, *bb));
            rs.push(result("a", "b", ep, *ab));
            rs.push(result("a", "a", ep, *aa));
            rs.push(result("b", "a", ep, *ba));
        }
        let m = build_switch_matrix(&rs, &MatrixOptions::default()).unwrap();
        assert_eq!(m.models, ["b", "a"]);
        assert_eq!(m.n, 3);
        let ab = m.cell("a", "b").unwrap();
        assert!((ab.mean - 0.5).abs() < 1e-12);
        assert!((ab.delta.as_ref().unwrap().delta - 0.0).abs() < 1e-12);
        let ba = m.cell("b", "a").unwrap();
        assert!((ba.delta.as_ref().unwrap().delta - 0.0).abs() < 1e-12);
        let bb = m.cell("b", "b").unwrap();
        assert_eq!(bb.delta.as_ref().unwrap().star, StarLevel::None);
        assert!((bb.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_diagonal_names_the_model() {
        let rs = vec![result("a", "b", 0, 1.0), result("a", "a", 0, 1.0)];
        assert_eq!(
            build_switch_matrix(&rs, &MatrixOptions::default()),
            Err(StatsError::MissingDiagonal("b".into()))
        );
    }

    #[test]
    fn identical_scores_give_zero_width() {
        let rs: Vec<_> = (0..5)
            .flat_map(|e| {
                [
                    result("a", "a", e, 0.7),
                    result("b", "b", e, 0.7),
                    result("a", "b", e, 0.7),
                    result("b", "a", e, 0.7),
                ]
            })
            .collect();
        let m = build_switch_matrix(&rs, &MatrixOptions::default()).unwrap();
        for c in &m.cells {
            assert_eq!(c.mean_ci.width(), 0.0);
            assert_eq!(c.delta.as_ref().unwrap().ci.width(), 0.0);
        }
    }

    #[test]
    fn single_model_has_no_switch_cells() {
        let rs: Vec<_> = (0..4)
            .map(|e| result("a", "a", e, e as f64 / 4.0))
            .collect();
        let m = build_switch_matrix(&rs, &MatrixOptions::default()).unwrap();
        assert_eq!(m.cells.len(), 1);
        assert!(delta_matrix(&m).unwrap().off_diagonal().is_empty());
    }

    #[test]
    fn duplicates_and_mixed_tasks_are_rejected() {
        let rs = vec![result("a", "a", 0, 1.0), result("a", "a", 0, 0.0)];
        assert!(matches!(
            build_switch_matrix(&rs, &MatrixOptions::default()),
            Err(StatsError::DuplicateResult { .. })
        ));
        let mut other = result("a", "a", 1, 1.0);
        other.task = Task::MultiIf;
        let rs = vec![result("a", "a", 0, 1.0), other];
        assert!(matches!(
            build_switch_matrix(&rs, &MatrixOptions::default()),
            Err(StatsError::MixedTasks(..))
        ));
    }

    #[test]
    fn parses_tables() {
        let d = parse_delta_table("prefix,x,y\nx,0.000,-0.021***\ny,+0.010*,\n").unwrap();
        assert_eq!(d.get("x", "y"), Some(&(-0.021, StarLevel::P99)));
        assert_eq!(d.get("y", "x"), Some(&(0.010, StarLevel::P90)));
        assert_eq!(d.get("y", "y"), None);
        let m = parse_means_table("prefix,x,y\nx,\"0.5 [0.4, 0.6]\",\"0.7 [0.6, 0.8]\"\ny,\"0.55 [0.5, 0.6]\",\"0.6 [0.5, 0.7]\"\n").unwrap();
        let c = cross_table_consistency(&d, &m);
        assert_eq!(c.len(), 2);
        let xy = c.iter().find(|c| c.prefix == "x").unwrap();
        assert!((xy.means_delta - 0.1).abs() < 1e-12);
        assert!(parse_delta_table("prefix,x,y\ny,0,0\nx,0,0\n").is_err());
        assert!(parse_delta_table("prefix,x\nx,0.1****\n").is_err());
    }
}

//! Multi-IF: three-turn episodes whose verifiable constraints accumulate.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::verifiers::{self, Check};
use super::{read_to_string, sample_indices, LoadError, LoadReport, ScoreError};
use crate::model::{Episode, Gold, Instruction, Task, Transcript};

pub const TURNS: usize = 3;

/// Which assistant turns must satisfy their accumulated instructions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuccessMode {
    /// Only the last response, judged against every instruction so far.
    #[default]
    FinalTurnOnly,
    /// Every response, each judged against the instructions up to its turn.
    AllTurns,
}

impl SuccessMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SuccessMode::FinalTurnOnly => "final_turn_only",
            SuccessMode::AllTurns => "all_turns",
        }
    }
}

impl std::str::FromStr for SuccessMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "final_turn_only" => Ok(SuccessMode::FinalTurnOnly),
            "all_turns" => Ok(SuccessMode::AllTurns),
            other => Err(format!(
                "unknown success mode `{other}` (final_turn_only | all_turns)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiIfEpisode {
    pub id: String,
    pub language: String,
    pub prompts: Vec<String>,
    /// Instructions introduced at each turn (not yet accumulated).
    pub instructions: Vec<Vec<Instruction>>,
}

impl MultiIfEpisode {
    pub fn to_episode(&self) -> Episode {
        Episode {
            task: Task::MultiIf,
            episode_id: self.id.clone(),
            user_turns: self.prompts.clone(),
            gold: Gold::MultiIf {
                instructions: self.instructions.clone(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiIfLoad {
    pub episodes: Vec<MultiIfEpisode>,
    pub report: LoadReport,
}

/// Loads a line-delimited Multi-IF dump, keeps three-turn episodes in
/// `language` (case-insensitive; `None` keeps all) whose instructions are
/// all supported, then draws a seeded sample.
///
/// Instruction arguments of kept episodes are validated here; a malformed
/// argument is an error rather than a skip.
pub fn load_multiif(
    path: &Path,
    sample_size: usize,
    seed: u64,
    language: Option<&str>,
) -> Result<MultiIfLoad, LoadError> {
    let text = read_to_string(path)?;
    let mut report = LoadReport::default();
    let mut usable = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        let row: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping malformed Multi-IF line {}: {e}", index + 1);
                report.skipped_malformed += 1;
                continue;
            }
        };
        let ep = match parse_row(&row, index) {
            Ok(ep) => ep,
            Err(RowIssue::Malformed(reason)) => {
                log::warn!("skipping malformed Multi-IF line {}: {reason}", index + 1);
                report.skipped_malformed += 1;
                continue;
            }
            Err(RowIssue::Short(n)) => {
                log::warn!(
                    "skipping Multi-IF line {}: {n} turns, need {TURNS}",
                    index + 1
                );
                report.skipped_short += 1;
                continue;
            }
        };
        if let Some(wanted) = language {
            if !ep.language.eq_ignore_ascii_case(wanted) {
                report.skipped_language += 1;
                continue;
            }
        }
        let unsupported: Vec<&str> = ep
            .instructions
            .iter()
            .flatten()
            .map(|i| i.id.as_str())
            .filter(|id| !verifiers::is_supported(id))
            .collect();
        if !unsupported.is_empty() {
            log::warn!(
                "skipping Multi-IF episode {}: unsupported instructions {}",
                ep.id,
                unsupported.join(", ")
            );
            report.skipped_unsupported += 1;
            continue;
        }
        for inst in ep.instructions.iter().flatten() {
            Check::parse(&inst.id, &inst.kwargs).map_err(|e| LoadError::BadArguments {
                episode: ep.id.clone(),
                reason: e.to_string(),
            })?;
        }
        usable.push(ep);
    }
    report.usable = usable.len();
    if sample_size > usable.len() {
        return Err(report.shortfall(sample_size));
    }
    let picked = sample_indices(usable.len(), sample_size, seed);
    let episodes = picked.into_iter().map(|i| usable[i].clone()).collect();
    Ok(MultiIfLoad { episodes, report })
}

#[derive(Debug)]
enum RowIssue {
    Malformed(String),
    Short(usize),
}

fn parse_row(row: &Value, index: usize) -> Result<MultiIfEpisode, RowIssue> {
    let obj = row
        .as_object()
        .ok_or_else(|| RowIssue::Malformed("row is not an object".into()))?;
    let id = match obj.get("key") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("row-{index}"),
    };
    let language = obj
        .get("language")
        .and_then(Value::as_str)
        .unwrap_or("English")
        .to_string();

    let mut prompts = Vec::new();
    let mut instructions = Vec::new();
    for turn in 1..=TURNS {
        let prompt = obj
            .get(&format!("turn_{turn}_prompt"))
            .and_then(prompt_text)
            .filter(|p| !p.trim().is_empty());
        let Some(prompt) = prompt else {
            return Err(RowIssue::Short(turn - 1));
        };
        prompts.push(prompt);
        instructions.push(
            parse_instructions(obj, turn)
                .map_err(|e| RowIssue::Malformed(format!("turn {turn}: {e}")))?,
        );
    }
    Ok(MultiIfEpisode {
        id,
        language,
        prompts,
        instructions,
    })
}

/// Prompts are either plain strings or JSON-encoded `{"role", "content"}`.
fn prompt_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => match serde_json::from_str::<Value>(s) {
            Ok(Value::Object(m)) => m.get("content").and_then(Value::as_str).map(str::to_string),
            _ => Some(s.clone()),
        },
        Value::Object(m) => m.get("content").and_then(Value::as_str).map(str::to_string),
        _ => None,
    }
}

/// Decodes a value that may itself be a JSON string.
fn decoded(v: &Value) -> Value {
    match v {
        Value::String(s) => serde_json::from_str(s).unwrap_or_else(|_| v.clone()),
        other => other.clone(),
    }
}

fn parse_instructions(obj: &Map<String, Value>, turn: usize) -> Result<Vec<Instruction>, String> {
    let ids = match obj
        .get(&format!("turn_{turn}_instruction_id_list"))
        .map(decoded)
    {
        Some(Value::Array(items)) => items
            .iter()
            .map(|i| {
                i.as_str()
                    .map(str::to_string)
                    .ok_or("instruction id is not a string")
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(Value::Null) | None => Vec::new(),
        Some(_) => return Err("instruction id list is not an array".into()),
    };
    let kwargs = match obj.get(&format!("turn_{turn}_kwargs")).map(decoded) {
        Some(Value::Array(items)) => items
            .iter()
            .map(|k| match decoded(k) {
                Value::Object(m) => Ok(m.into_iter().filter(|(_, v)| !v.is_null()).collect()),
                Value::Null => Ok(Map::new()),
                _ => Err("kwargs entry is not an object"),
            })
            .collect::<Result<Vec<Map<String, Value>>, _>>()?,
        Some(Value::Null) | None => Vec::new(),
        Some(_) => return Err("kwargs is not an array".into()),
    };
    if !kwargs.is_empty() && kwargs.len() != ids.len() {
        return Err(format!(
            "{} instruction ids but {} kwargs",
            ids.len(),
            kwargs.len()
        ));
    }
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| Instruction {
            id,
            kwargs: kwargs.get(i).cloned().unwrap_or_default(),
        })
        .collect())
}

/// Union of instructions introduced in turns `1..=upto`, in first-seen
/// order, with exact duplicates removed.
pub fn accumulated(per_turn: &[Vec<Instruction>], upto: usize) -> Vec<Instruction> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for inst in per_turn.iter().take(upto).flatten() {
        let key = (
            inst.id.clone(),
            Value::Object(inst.kwargs.clone()).to_string(),
        );
        if seen.insert(key) {
            out.push(inst.clone());
        }
    }
    out
}

fn passes_all(instructions: &[Instruction], response: &str) -> Result<bool, ScoreError> {
    for inst in instructions {
        let check = Check::parse(&inst.id, &inst.kwargs)
            .map_err(|e| ScoreError::Instruction(e.to_string()))?;
        if !check.check(response) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Strict success: 1.0 iff the judged responses pass every accumulated
/// instruction, else 0.0.
pub fn score_episode_multiif(
    transcript: &Transcript,
    episode: &Episode,
    mode: SuccessMode,
) -> Result<f64, ScoreError> {
    let Gold::MultiIf { instructions } = &episode.gold else {
        return Err(ScoreError::WrongGold(Task::MultiIf));
    };
    let turns = episode.turns();
    let found = transcript.assistant_count();
    if found < turns {
        return Err(ScoreError::MissingTurn {
            expected: turns,
            found,
        });
    }
    let judged: Vec<usize> = match mode {
        SuccessMode::FinalTurnOnly => vec![turns],
        SuccessMode::AllTurns => (1..=turns).collect(),
    };
    for turn in judged {
        let response = transcript.assistant_turn(turn).unwrap_or_default();
        let ok = passes_all(&accumulated(instructions, turn), response)?;
        log::debug!(
            "{} turn {turn}: {}",
            episode.episode_id,
            if ok { "pass" } else { "fail" }
        );
        if !ok {
            return Ok(0.0);
        }
    }
    Ok(1.0)
}

//! Domain types shared across the harness.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// A chat model as addressed by the harness.
///
/// `provider` selects the backend that serves the model; `name` is the
/// canonical model string and is what appears in cache paths, result records
/// and reports. Two models in one run must not share a name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelId {
    pub provider: String,
    pub name: String,
}

impl ModelId {
    pub fn new(provider: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            name: name.into(),
        }
    }

    pub fn is_valid(&self) -> bool {
        !self.name.is_empty()
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Coqa,
    MultiIf,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Coqa => "coqa",
            Task::MultiIf => "multi_if",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "coqa" => Ok(Task::Coqa),
            "multi_if" | "multiif" => Ok(Task::MultiIf),
            other => Err(format!(
                "unknown task `{other}` (expected coqa or multi_if)"
            )),
        }
    }
}

/// One verifiable instruction attached to a Multi-IF turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    #[serde(default)]
    pub kwargs: Map<String, Value>,
}

/// Task-specific scoring payload, one entry per user turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gold {
    /// Acceptable answers for each question.
    Coqa { answers: Vec<Vec<String>> },
    /// Instructions introduced at each turn.
    MultiIf { instructions: Vec<Vec<Instruction>> },
}

impl Gold {
    pub fn len(&self) -> usize {
        match self {
            Gold::Coqa { answers } => answers.len(),
            Gold::MultiIf { instructions } => instructions.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Gold::Coqa { .. } => Task::Coqa,
            Gold::MultiIf { .. } => Task::MultiIf,
        }
    }
}

/// A multi-turn benchmark instance: the user turns to replay plus gold data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub task: Task,
    pub episode_id: String,
    pub user_turns: Vec<String>,
    pub gold: Gold,
}

impl Episode {
    /// Number of user (and therefore assistant) turns, `L`.
    pub fn turns(&self) -> usize {
        self.user_turns.len()
    }
}

/// Checks the episode invariants. Returns one message per violation; an empty
/// list means the episode is well formed.
pub fn validate_episode(episode: &Episode) -> Vec<String> {
    let mut violations = Vec::new();
    if episode.episode_id.trim().is_empty() {
        violations.push("empty episode_id".to_string());
    }
    if episode.user_turns.len() < 2 {
        violations.push(format!(
            "user_turns has {} entries, need at least 2",
            episode.user_turns.len()
        ));
    }
    if episode.user_turns.len() != episode.gold.len() {
        violations.push("gold length mismatch".to_string());
    }
    if episode.gold.task() != episode.task {
        violations.push(format!(
            "gold payload is for task {} but episode task is {}",
            episode.gold.task(),
            episode.task
        ));
    }
    violations
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub author: Option<ModelId>,
}

/// Ordered dialogue. Assistant messages record which model wrote them.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_system(&mut self, text: impl Into<String>) {
        self.messages.push(Message {
            role: Role::System,
            text: text.into(),
            author: None,
        });
    }

    pub fn push_user(&mut self, text: impl Into<String>) {
        self.messages.push(Message {
            role: Role::User,
            text: text.into(),
            author: None,
        });
    }

    pub fn push_assistant(&mut self, text: impl Into<String>, author: ModelId) {
        self.messages.push(Message {
            role: Role::Assistant,
            text: text.into(),
            author: Some(author),
        });
    }

    pub fn assistant_messages(&self) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(|m| m.role == Role::Assistant)
    }

    pub fn assistant_count(&self) -> usize {
        self.assistant_messages().count()
    }

    /// Text of the `n`-th assistant turn, 1-based.
    pub fn assistant_turn(&self, n: usize) -> Option<&str> {
        n.checked_sub(1)
            .and_then(|i| self.assistant_messages().nth(i))
            .map(|m| m.text.as_str())
    }

    pub fn last_role(&self) -> Option<Role> {
        self.messages.last().map(|m| m.role)
    }

    /// Author of the first assistant turn, if any.
    pub fn first_author(&self) -> Option<&ModelId> {
        self.assistant_messages()
            .next()
            .and_then(|m| m.author.as_ref())
    }

    /// Checks role alternation and assistant authorship.
    pub fn validate(&self) -> Result<(), String> {
        let mut expected = Role::User;
        for (i, message) in self.messages.iter().enumerate() {
            if message.role == Role::System {
                if i == 0 {
                    continue;
                }
                return Err(format!("system message at position {i}"));
            }
            if message.role != expected {
                return Err(format!(
                    "expected {} at position {i}, found {}",
                    expected.as_str(),
                    message.role.as_str()
                ));
            }
            match (message.role, &message.author) {
                (Role::Assistant, None) => {
                    return Err(format!("assistant message at position {i} has no author"))
                }
                (Role::User, Some(_)) => {
                    return Err(format!("user message at position {i} has an author"))
                }
                _ => {}
            }
            expected = match expected {
                Role::User => Role::Assistant,
                _ => Role::User,
            };
        }
        Ok(())
    }

    /// Canonical byte rendering used for hashing.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(m.role.as_str());
            out.push('\u{1f}');
            out.push_str(&m.text);
            out.push('\u{1e}');
        }
        out
    }
}

/// Ordered (prefix, suffix) pair identifying a switch cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub prefix: ModelId,
    pub suffix: ModelId,
}

impl CellId {
    pub fn new(prefix: ModelId, suffix: ModelId) -> Self {
        Self { prefix, suffix }
    }

    pub fn is_diagonal(&self) -> bool {
        self.prefix == self.suffix
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.prefix.name, self.suffix.name)
    }
}

/// Score of one episode under one switch cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "CellRecord", try_from = "CellRecord")]
pub struct CellResult {
    pub task: Task,
    pub cell: CellId,
    pub episode_id: String,
    pub score: f64,
    pub final_response: String,
    pub refusal: bool,
    pub seed: u64,
    pub params_digest: String,
}

impl CellResult {
    pub fn key(&self) -> (String, String, String) {
        (
            self.cell.prefix.name.clone(),
            self.cell.suffix.name.clone(),
            self.episode_id.clone(),
        )
    }
}

/// Flat on-disk form of [`CellResult`], one JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellRecord {
    task: Task,
    prefix_model: String,
    suffix_model: String,
    episode_id: String,
    score: f64,
    final_response: String,
    seed: u64,
    params_digest: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    refusal: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    prefix_provider: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    suffix_provider: String,
}

impl From<CellResult> for CellRecord {
    fn from(r: CellResult) -> Self {
        CellRecord {
            task: r.task,
            prefix_model: r.cell.prefix.name,
            suffix_model: r.cell.suffix.name,
            episode_id: r.episode_id,
            score: r.score,
            final_response: r.final_response,
            seed: r.seed,
            params_digest: r.params_digest,
            refusal: r.refusal,
            prefix_provider: r.cell.prefix.provider,
            suffix_provider: r.cell.suffix.provider,
        }
    }
}

impl TryFrom<CellRecord> for CellResult {
    type Error = String;

    fn try_from(r: CellRecord) -> Result<Self, Self::Error> {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(format!("score {} outside [0, 1]", r.score));
        }
        if r.prefix_model.is_empty() || r.suffix_model.is_empty() {
            return Err("empty model name".into());
        }
        Ok(CellResult {
            task: r.task,
            cell: CellId::new(
                ModelId::new(r.prefix_provider, r.prefix_model),
                ModelId::new(r.suffix_provider, r.suffix_model),
            ),
            episode_id: r.episode_id,
            score: r.score,
            final_response: r.final_response,
            refusal: r.refusal,
            seed: r.seed,
            params_digest: r.params_digest,
        })
    }
}

/// Highest confidence level at which a switch effect's interval excludes 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StarLevel {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "90")]
    P90,
    #[serde(rename = "95")]
    P95,
    #[serde(rename = "99")]
    P99,
}

impl StarLevel {
    pub fn stars(self) -> &'static str {
        match self {
            StarLevel::None => "",
            StarLevel::P90 => "*",
            StarLevel::P95 => "**",
            StarLevel::P99 => "***",
        }
    }

    pub fn from_stars(stars: &str) -> Option<Self> {
        match stars {
            "" => Some(StarLevel::None),
            "*" => Some(StarLevel::P90),
            "**" => Some(StarLevel::P95),
            "***" => Some(StarLevel::P99),
            _ => None,
        }
    }

    /// Star level for a confidence level such as 0.95.
    pub fn for_level(level: f64) -> Option<Self> {
        const EPS: f64 = 1e-9;
        if (level - 0.90).abs() < EPS {
            Some(StarLevel::P90)
        } else if (level - 0.95).abs() < EPS {
            Some(StarLevel::P95)
        } else if (level - 0.99).abs() < EPS {
            Some(StarLevel::P99)
        } else {
            None
        }
    }
}

/// How an interval was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Bca,
    /// Bias correction undefined, plain percentile interval used instead.
    PercentileFallback,
    /// Every sample equal; the interval collapses to a point.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn excludes_zero(&self) -> bool {
        self.lo > 0.0 || self.hi < 0.0
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Switch effect of one off-diagonal cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub n: usize,
    pub delta: f64,
    pub ci: Interval,
    pub star: StarLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub prefix: String,
    pub suffix: String,
    pub n: usize,
    pub mean: f64,
    pub mean_ci: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaSummary>,
}

/// K×K aggregation of cell means and switch effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchMatrix {
    pub schema_version: u32,
    pub tool_version: String,
    pub input_digest: String,
    pub task: Option<Task>,
    pub models: Vec<String>,
    /// Number of distinct episodes seen across all cells.
    pub n: usize,
    pub resamples: usize,
    pub seed: u64,
    pub mean_ci_level: f64,
    pub delta_ci_level: f64,
    pub failure_policy: String,
    pub cells: Vec<CellSummary>,
}

impl SwitchMatrix {
    pub fn cell(&self, prefix: &str, suffix: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.prefix == prefix && c.suffix == suffix)
    }
}

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_request, BackendError, ChatBackend, ChatRequest, Generation};
use crate::model::{Task, Transcript};

/// One scripted reply.
///
/// `turn` is the 1-based assistant turn index. When `prefix_author` is set
/// the entry only applies if the first assistant turn of the transcript was
/// written by that model; such entries take precedence over unconditional
/// ones for the same key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub model: String,
    pub task: Task,
    pub episode_id: String,
    pub turn: usize,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_author: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub refusal: bool,
}

type ScriptKey = (String, Task, String, usize);

#[derive(Debug, Clone, Default)]
pub struct MockScript {
    entries: HashMap<ScriptKey, Vec<ScriptEntry>>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    List(Vec<ScriptEntry>),
    Wrapped { entries: Vec<ScriptEntry> },
}

impl MockScript {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Self {
        let mut script = Self::default();
        for e in entries {
            script.push(e);
        }
        script
    }

    pub fn push(&mut self, entry: ScriptEntry) {
        let key = (
            entry.model.clone(),
            entry.task,
            entry.episode_id.clone(),
            entry.turn,
        );
        self.entries.entry(key).or_default().push(entry);
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let entries = match serde_json::from_str::<ScriptFile>(text)? {
            ScriptFile::List(v) => v,
            ScriptFile::Wrapped { entries } => entries,
        };
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BackendError::Config(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        Self::from_json(&text).map_err(|e| {
            BackendError::Config(format!("invalid mock script {}: {e}", path.display()))
        })
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(
        &self,
        model: &str,
        task: Task,
        episode_id: &str,
        turn: usize,
        prefix_author: Option<&str>,
    ) -> Option<&ScriptEntry> {
        let candidates =
            self.entries
                .get(&(model.to_string(), task, episode_id.to_string(), turn))?;
        candidates
            .iter()
            .find(|e| e.prefix_author.is_some() && e.prefix_author.as_deref() == prefix_author)
            .or_else(|| candidates.iter().find(|e| e.prefix_author.is_none()))
    }
}

/// Deterministic, pure backend used for tests and dry runs.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    script: MockScript,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self { script }
    }

    /// Reply used when no script entry matches: a pure function of the
    /// model name and the transcript.
    pub fn fallback(model_name: &str, transcript: &Transcript) -> String {
        let mut hasher = Sha256::new();
        hasher.update(model_name.as_bytes());
        hasher.update([0u8]);
        hasher.update(transcript.render().as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);

        // A short span of everything the user has said, passage included,
        // so scripted-free runs still produce partially correct answers.
        let words: Vec<&str> = transcript
            .messages
            .iter()
            .filter(|m| m.role == crate::model::Role::User)
            .flat_map(|m| m.text.split_whitespace())
            .collect();
        let answer = if words.is_empty() {
            String::new()
        } else {
            let len = rng.random_range(1..=12usize).min(words.len());
            let start = rng.random_range(0..=words.len() - len);
            words[start..start + len].join(" ")
        };
        format!(
            "[{}] <answer>{}</answer>",
            hex::encode(&digest[..4]),
            answer
        )
    }
}

impl ChatBackend for MockBackend {
    fn generate(&self, request: &ChatRequest<'_>) -> Result<Generation, BackendError> {
        check_request(request)?;
        let turn = request.transcript.assistant_count() + 1;
        let prefix_author = request.transcript.first_author().map(|m| m.name.as_str());
        match self.script.lookup(
            &request.model.name,
            request.task,
            request.episode_id,
            turn,
            prefix_author,
        ) {
            Some(entry) if entry.refusal => Ok(Generation {
                text: String::new(),
                refusal: true,
            }),
            Some(entry) => Ok(Generation::text(entry.text.clone())),
            None => Ok(Generation::text(Self::fallback(
                &request.model.name,
                request.transcript,
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::GenerationParams;
    use crate::model::ModelId;

    fn ask(backend: &MockBackend, model: &ModelId, t: &Transcript) -> Generation {
        backend
            .generate(&ChatRequest {
                model,
                transcript: t,
                params: &GenerationParams::default(),
                task: Task::Coqa,
                episode_id: "e1",
            })
            .unwrap()
    }

    fn script() -> MockScript {
        MockScript::from_json(
            r#"[
              {"model":"m1","task":"coqa","episode_id":"e1","turn":1,"text":"<answer>first</answer>"},
              {"model":"m1","task":"coqa","episode_id":"e1","turn":2,"text":"own"},
              {"model":"m1","task":"coqa","episode_id":"e1","turn":2,"text":"foreign","prefix_author":"m2"}
            ]"#,
        )
        .unwrap()
    }

    #[test]
    fn scripted_entry_is_returned_verbatim() {
        let backend = MockBackend::new(script());
        let mut t = Transcript::new();
        t.push_user("Q1?");
        let m1 = ModelId::new("mock", "m1");
        assert_eq!(ask(&backend, &m1, &t).text, "<answer>first</answer>");
        assert_eq!(ask(&backend, &m1, &t), ask(&backend, &m1, &t));
    }

    #[test]
    fn prefix_conditioned_entries_take_precedence() {
        let backend = MockBackend::new(script());
        let m1 = ModelId::new("mock", "m1");
        let m2 = ModelId::new("mock", "m2");
        let mut own = Transcript::new();
        own.push_user("Q1?");
        own.push_assistant("x", m1.clone());
        own.push_user("Q2?");
        assert_eq!(ask(&backend, &m1, &own).text, "own");
        let mut foreign = Transcript::new();
        foreign.push_user("Q1?");
        foreign.push_assistant("x", m2);
        foreign.push_user("Q2?");
        assert_eq!(ask(&backend, &m1, &foreign).text, "foreign");
    }

    #[test]
    fn fallback_is_deterministic_and_model_specific() {
        let backend = MockBackend::default();
        let mut t = Transcript::new();
        t.push_user("Who wrote the letter to the mayor?");
        let a = ModelId::new("mock", "alpha");
        let b = ModelId::new("mock", "beta");
        assert_eq!(ask(&backend, &a, &t), ask(&backend, &a, &t));
        assert_ne!(ask(&backend, &a, &t).text, ask(&backend, &b, &t).text);
    }

    #[test]
    fn fallback_texts_do_not_collide_across_fixture_set() {
        let mut seen = std::collections::HashSet::new();
        let models: Vec<String> = (0..9).map(|i| format!("model-{i}")).collect();
        let mut total = 0;
        for q in 0..50 {
            let mut t = Transcript::new();
            t.push_user(format!("question number {q} about the story"));
            for m in &models {
                seen.insert(MockBackend::fallback(m, &t));
                total += 1;
            }
        }
        assert_eq!(seen.len(), total);
    }

    #[test]
    fn refusal_entries_produce_empty_flagged_text() {
        let backend = MockBackend::new(MockScript::new([ScriptEntry {
            model: "m".into(),
            task: Task::Coqa,
            episode_id: "e1".into(),
            turn: 1,
            text: "ignored".into(),
            prefix_author: None,
            refusal: true,
        }]));
        let mut t = Transcript::new();
        t.push_user("q");
        let g = ask(&backend, &ModelId::new("mock", "m"), &t);
        assert!(g.refusal);
        assert!(g.text.is_empty());
    }

    #[test]
    fn rejects_transcript_not_ending_in_user_turn() {
        let backend = MockBackend::default();
        let m = ModelId::new("mock", "m");
        let mut t = Transcript::new();
        t.push_user("q");
        t.push_assistant("a", m.clone());
        let err = backend
            .generate(&ChatRequest {
                model: &m,
                transcript: &t,
                params: &GenerationParams::default(),
                task: Task::Coqa,
                episode_id: "e",
            })
            .unwrap_err();
        assert!(matches!(err, BackendError::InvalidRequest(_)));
    }
}

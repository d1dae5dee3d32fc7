//! CoQA conversational QA: loading, prompts, answer extraction, token F1.

use std::collections::HashMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{read_to_string, sample_indices, LoadError, LoadReport, ScoreError};
use crate::model::{Episode, Gold, Task, Transcript};

/// Default number of question/answer turns kept per story.
pub const DEFAULT_TURNS: usize = 10;

/// Fixed instruction placed in the first user turn. Changing this text
/// changes every prompt, so it is versioned with the crate.
pub const ANSWER_INSTRUCTION: &str = "Answer with exactly one <answer>...</answer> tag.";

const PREAMBLE: &str =
    "Read the passage below and answer the questions that follow, one per turn. \
Keep each answer short, using words from the passage where possible.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoqaEpisode {
    pub id: String,
    pub passage: String,
    pub questions: Vec<String>,
    /// Acceptable answers per question: the primary answer first, then any
    /// additional annotator answers.
    pub gold_answers: Vec<Vec<String>>,
}

impl CoqaEpisode {
    pub fn to_episode(&self) -> Episode {
        Episode {
            task: Task::Coqa,
            episode_id: self.id.clone(),
            user_turns: (0..self.questions.len())
                .map(|i| build_turn(&self.passage, &self.questions, i))
                .collect(),
            gold: Gold::Coqa {
                answers: self.gold_answers.clone(),
            },
        }
    }
}

/// User message for question `index`. The first turn carries the passage
/// and the answer-tag instruction; later turns are the bare question.
pub fn build_turn(passage: &str, questions: &[String], index: usize) -> String {
    let question = &questions[index];
    if index == 0 {
        format!("{PREAMBLE} {ANSWER_INSTRUCTION}\n\nPassage:\n{passage}\n\n{question}")
    } else {
        question.clone()
    }
}

#[derive(Debug, Clone)]
pub struct CoqaLoad {
    pub episodes: Vec<CoqaEpisode>,
    pub report: LoadReport,
}

/// Loads a CoQA dump, keeps stories with at least `turns` questions
/// (truncated to exactly `turns`), and draws a seeded sample.
///
/// Accepted layouts: the original `{"data": [...]}` release, a JSON array
/// of rows, or one JSON row per line (the HuggingFace export).
pub fn load_coqa(
    path: &Path,
    turns: usize,
    sample_size: usize,
    seed: u64,
) -> Result<CoqaLoad, LoadError> {
    let text = read_to_string(path)?;
    let rows = parse_rows(&text).map_err(|reason| LoadError::Format {
        path: path.display().to_string(),
        reason,
    })?;
    let mut report = LoadReport {
        rows: rows.len(),
        ..LoadReport::default()
    };
    let mut usable = Vec::new();
    for (index, row) in rows.iter().enumerate() {
        match parse_story(row, index) {
            Ok(mut ep) => {
                if ep.questions.len() < turns {
                    log::warn!(
                        "skipping CoQA story {}: {} turns, need {turns}",
                        ep.id,
                        ep.questions.len()
                    );
                    report.skipped_short += 1;
                    continue;
                }
                ep.questions.truncate(turns);
                ep.gold_answers.truncate(turns);
                usable.push(ep);
            }
            Err(reason) => {
                log::warn!("skipping malformed CoQA row {index}: {reason}");
                report.skipped_malformed += 1;
            }
        }
    }
    report.usable = usable.len();
    if sample_size > usable.len() {
        return Err(report.shortfall(sample_size));
    }
    let picked = sample_indices(usable.len(), sample_size, seed);
    let episodes = picked.into_iter().map(|i| usable[i].clone()).collect();
    Ok(CoqaLoad { episodes, report })
}

fn parse_rows(text: &str) -> Result<Vec<Value>, String> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        if let Ok(v) = serde_json::from_str::<Value>(text) {
            return match v {
                Value::Array(rows) => Ok(rows),
                Value::Object(mut obj) => match obj.remove("data") {
                    Some(Value::Array(rows)) => Ok(rows),
                    _ => Ok(vec![Value::Object(obj)]),
                },
                _ => Err("top-level JSON is neither an object nor an array".into()),
            };
        }
    }
    // One JSON object per line; unparsable lines become malformed rows.
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap_or(Value::Null))
        .collect())
}

fn text_items(v: &Value) -> Option<Vec<String>> {
    match v {
        Value::Array(items) => items
            .iter()
            .map(|item| match item {
                Value::String(s) => Some(s.clone()),
                Value::Object(o) => o
                    .get("input_text")
                    .and_then(Value::as_str)
                    .map(str::to_string),
                _ => None,
            })
            .collect(),
        Value::Object(o) => text_items(o.get("input_text")?),
        _ => None,
    }
}

fn parse_story(row: &Value, index: usize) -> Result<CoqaEpisode, String> {
    let obj = row.as_object().ok_or("row is not an object")?;
    let passage = obj
        .get("story")
        .and_then(Value::as_str)
        .ok_or("missing story")?
        .to_string();
    let id = match obj.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => format!("row-{index}"),
    };
    let questions = obj
        .get("questions")
        .and_then(text_items)
        .ok_or("missing or malformed questions")?;
    let answers = obj
        .get("answers")
        .and_then(text_items)
        .ok_or("missing or malformed answers")?;
    if answers.len() < questions.len() {
        return Err(format!(
            "{} questions but {} answers",
            questions.len(),
            answers.len()
        ));
    }
    let mut gold: Vec<Vec<String>> = answers
        .into_iter()
        .take(questions.len())
        .map(|a| vec![a])
        .collect();
    if let Some(Value::Object(extra)) = obj.get("additional_answers") {
        let mut annotators: Vec<_> = extra.iter().collect();
        annotators.sort_by(|a, b| a.0.cmp(b.0));
        for (_, list) in annotators {
            if let Some(items) = text_items(list) {
                for (slot, answer) in gold.iter_mut().zip(items) {
                    if !slot.contains(&answer) {
                        slot.push(answer);
                    }
                }
            }
        }
    }
    Ok(CoqaEpisode {
        id,
        passage,
        questions,
        gold_answers: gold,
    })
}

static ANSWER_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<answer>(.*?)</answer>").unwrap());

/// Leading phrases removed from the fallback answer line, matched
/// case-insensitively, longest first. Phrases marked `true` are only
/// removed when followed by `:` or `-`.
pub const ANSWER_PREFIXES: &[(&str, bool)] = &[
    ("the final answer is", false),
    ("my final answer is", false),
    ("the answer is", false),
    ("my answer is", false),
    ("final answer", true),
    ("answer", true),
    ("a", true),
];

/// Pulls the answer out of a model response.
///
/// The body of the last well-formed `<answer>...</answer>` tag wins. Without
/// a tag, markdown emphasis, inline code markers and fence lines are
/// stripped, and the last non-empty line is returned after dropping one
/// answer-announcing prefix such as "The answer is:".
pub fn extract_answer(response: &str) -> String {
    if let Some(last) = ANSWER_TAG.captures_iter(response).last() {
        return last[1].trim().to_string();
    }
    let cleaned: String = response
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .map(|line| {
            line.replace("<answer>", "")
                .replace("</answer>", "")
                .replace("**", "")
                .replace("__", "")
                .replace(['*', '`'], "")
        })
        .collect::<Vec<_>>()
        .join("\n");
    let Some(line) = cleaned.lines().map(str::trim).rev().find(|l| !l.is_empty()) else {
        return String::new();
    };
    strip_answer_prefix(line).to_string()
}

fn strip_answer_prefix(line: &str) -> &str {
    let lower = line.to_lowercase();
    if lower.len() != line.len() {
        return line;
    }
    for &(prefix, needs_separator) in ANSWER_PREFIXES {
        if !lower.starts_with(prefix) {
            continue;
        }
        let rest = &line[prefix.len()..];
        let trimmed = rest.trim_start();
        let separated = trimmed.starts_with([':', '-']);
        let word_boundary = rest.is_empty() || rest.starts_with(char::is_whitespace);
        if separated || (!needs_separator && word_boundary) {
            return trimmed.trim_start_matches([':', '-']).trim();
        }
    }
    line
}

static ARTICLES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(a|an|the)\b").unwrap());

/// SQuAD/CoQA answer normalisation: lowercase, delete ASCII punctuation
/// (no space inserted), replace the articles a/an/the with spaces, then
/// split on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let no_articles = ARTICLES.replace_all(&no_punct, " ");
    no_articles.split_whitespace().map(str::to_string).collect()
}

/// Token-overlap F1 in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct F1Score(f64);

impl F1Score {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn f1_single(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in gold {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Maximum token F1 of `prediction` over the gold answer set.
pub fn token_f1<S: AsRef<str>>(prediction: &str, gold: &[S]) -> F1Score {
    let pred = normalize(prediction);
    let best = gold
        .iter()
        .map(|g| f1_single(&pred, &normalize(g.as_ref())))
        .fold(0.0, f64::max);
    F1Score(best)
}

/// Last-turn F1: the answer extracted from assistant turn L scored against
/// the gold answers for question L.
pub fn score_episode_coqa(transcript: &Transcript, episode: &Episode) -> Result<f64, ScoreError> {
    let Gold::Coqa { answers } = &episode.gold else {
        return Err(ScoreError::WrongGold(Task::Coqa));
    };
    let turns = episode.turns();
    let found = transcript.assistant_count();
    let response = transcript
        .assistant_turn(turns)
        .filter(|_| found >= turns)
        .ok_or(ScoreError::MissingTurn {
            expected: turns,
            found,
        })?;
    let gold = answers.get(turns - 1).map(Vec::as_slice).unwrap_or(&[]);
    Ok(token_f1(&extract_answer(response), gold).value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelId;
    use proptest::prelude::*;

    #[test]
    fn extraction_examples() {
        assert_eq!(extract_answer("<answer>Paris</answer>"), "Paris");
        assert_eq!(
            extract_answer(
                "Reasoning… <answer> 42 </answer>. Hope that helps! <answer>43</answer>"
            ),
            "43"
        );
        assert_eq!(extract_answer("The answer is:\n**Paris**"), "Paris");
        assert_eq!(extract_answer(""), "");
        assert_eq!(extract_answer("The answer is Paris"), "Paris");
        assert_eq!(extract_answer("Answer: the red barn"), "the red barn");
        assert_eq!(
            extract_answer("```\ncode\n```\nfinal: *blue*"),
            "final: blue"
        );
        assert_eq!(extract_answer("a cat"), "a cat");
        assert_eq!(extract_answer("<ANSWER>Yes</ANSWER>"), "Yes");
        assert_eq!(extract_answer("<answer>unterminated"), "unterminated");
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize("The Cat!"), vec!["cat"]);
        assert_eq!(normalize("a  white-cat"), vec!["whitecat"]);
        assert!(normalize("").is_empty());
        assert_eq!(normalize("Theater, an apple"), vec!["theater", "apple"]);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1("Cotton", &["Cotton"]).value(), 1.0);
        assert_eq!(token_f1("the cat", &["cat"]).value(), 1.0);
        assert!((token_f1("white and black", &["black"]).value() - 0.5).abs() < 1e-12);
        assert_eq!(token_f1("", &["cat"]).value(), 0.0);
        assert_eq!(token_f1("the", &["a"]).value(), 1.0);
        assert_eq!(token_f1("x", &[] as &[&str]).value(), 0.0);
    }

    #[test]
    fn build_turn_template() {
        let qs = vec!["Who?".to_string(), "When?".to_string()];
        let first = build_turn("Once upon a time.", &qs, 0);
        assert!(first.contains("Once upon a time."));
        assert!(first.contains(ANSWER_INSTRUCTION));
        assert!(first.ends_with("Who?"));
        assert_eq!(build_turn("Once upon a time.", &qs, 1), "When?");
        assert_eq!(first, build_turn("Once upon a time.", &qs, 0));
    }

    fn episode() -> Episode {
        CoqaEpisode {
            id: "s1".into(),
            passage: "p".into(),
            questions: vec!["q1".into(), "q2".into(), "q3".into()],
            gold_answers: vec![
                vec!["one".into()],
                vec!["two".into()],
                vec!["Buckingham Palace".into()],
            ],
        }
        .to_episode()
    }

    #[test]
    fn scores_only_the_last_turn() {
        let ep = episode();
        let m = ModelId::new("mock", "m");
        let mut t = Transcript::new();
        for (i, ans) in ["one", "two", "<answer>Buckingham Palace</answer>"]
            .iter()
            .enumerate()
        {
            t.push_user(ep.user_turns[i].clone());
            t.push_assistant(*ans, m.clone());
        }
        assert_eq!(score_episode_coqa(&t, &ep).unwrap(), 1.0);

        let mut wrong_last = Transcript::new();
        for (i, ans) in [
            "<answer>one</answer>",
            "<answer>two</answer>",
            "<answer>Windsor</answer>",
        ]
        .iter()
        .enumerate()
        {
            wrong_last.push_user(ep.user_turns[i].clone());
            wrong_last.push_assistant(*ans, m.clone());
        }
        assert_eq!(score_episode_coqa(&wrong_last, &ep).unwrap(), 0.0);

        let mut short = Transcript::new();
        short.push_user("q1");
        short.push_assistant("x", m);
        assert_eq!(
            score_episode_coqa(&short, &ep),
            Err(ScoreError::MissingTurn {
                expected: 3,
                found: 1
            })
        );
    }

    #[test]
    fn parses_both_dataset_layouts() {
        let original = r#"{"version":"1.0","data":[{"id":"abc","story":"S","questions":[{"input_text":"Q1","turn_id":1},{"input_text":"Q2","turn_id":2}],"answers":[{"input_text":"A1"},{"input_text":"A2"}],"additional_answers":{"0":[{"input_text":"A1b"},{"input_text":"A2"}]}}]}"#;
        let rows = parse_rows(original).unwrap();
        let ep = parse_story(&rows[0], 0).unwrap();
        assert_eq!(ep.id, "abc");
        assert_eq!(ep.questions, ["Q1", "Q2"]);
        assert_eq!(
            ep.gold_answers,
            vec![vec!["A1".to_string(), "A1b".into()], vec!["A2".into()]]
        );

        let hf = "{\"source\":\"x\",\"story\":\"S\",\"questions\":[\"Q1\",\"Q2\"],\"answers\":{\"input_text\":[\"A1\",\"A2\"],\"answer_start\":[0,1],\"answer_end\":[1,2]}}\nnot json\n";
        let rows = parse_rows(hf).unwrap();
        assert_eq!(rows.len(), 2);
        let ep = parse_story(&rows[0], 0).unwrap();
        assert_eq!(ep.id, "row-0");
        assert_eq!(ep.gold_answers[1], vec!["A2"]);
        assert!(parse_story(&rows[1], 1).is_err());
    }

    proptest! {
        #[test]
        fn tag_body_is_always_extracted(body in "[^<>]{0,40}", noise in "[^<>]{0,20}") {
            let response = format!("{noise}<answer>{body}</answer>");
            prop_assert_eq!(extract_answer(&response), body.trim());
        }

        #[test]
        fn f1_of_self_is_one(text in "[A-Za-z ,.!]{1,40}") {
            prop_assume!(!normalize(&text).is_empty());
            prop_assert_eq!(token_f1(&text, &[&text]).value(), 1.0);
        }

        #[test]
        fn f1_ignores_case_and_articles(words in proptest::collection::vec("[a-z]{2,8}", 1..6), gold in "[a-z ]{1,30}") {
            let plain = words.join(" ");
            let decorated = format!("The {}", plain.to_uppercase());
            prop_assert_eq!(token_f1(&plain, &[&gold]), token_f1(&decorated, &[&gold]));
        }

        #[test]
        fn f1_is_bounded_and_max_over_gold(pred in "[a-z ]{0,30}", g1 in "[a-z ]{0,30}", g2 in "[a-z ]{0,30}") {
            let both = token_f1(&pred, &[&g1, &g2]).value();
            let one = token_f1(&pred, &[&g1]).value();
            prop_assert!((0.0..=1.0).contains(&both));
            prop_assert!(both >= one);
        }
    }
}

//! IFEval-style instruction verifiers (English subset).
//!
//! Each verifier reproduces the rule of the public IFEval reference
//! implementation, with two documented differences:
//!
//! * language detection is not performed; the casing checks only test
//!   letter case, since episodes are filtered to English at load time;
//! * sentences are counted by splitting on `.`, `!` or `?` followed by
//!   whitespace (or end of text), instead of a trained sentence tokenizer.
//!
//! Word counting follows the reference: the number of `\w+` runs.

use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifierError {
    #[error("unsupported instruction `{0}`")]
    Unsupported(String),
    #[error("instruction `{id}`: {reason}")]
    BadArguments { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessThan,
    AtLeast,
}

impl Relation {
    fn parse(id: &str, v: Option<&Value>) -> Result<Self, VerifierError> {
        match v.and_then(Value::as_str) {
            Some("less than") => Ok(Relation::LessThan),
            Some("at least") => Ok(Relation::AtLeast),
            other => Err(bad(
                id,
                format!("relation must be \"less than\" or \"at least\", got {other:?}"),
            )),
        }
    }

    fn holds(self, actual: usize, threshold: usize) -> bool {
        match self {
            Relation::LessThan => actual < threshold,
            Relation::AtLeast => actual >= threshold,
        }
    }
}

/// Registry entry: id, argument names, one-line description.
#[derive(Debug, Clone, Copy)]
pub struct VerifierInfo {
    pub id: &'static str,
    pub args: &'static [&'static str],
    pub description: &'static str,
}

pub const REGISTRY: &[VerifierInfo] = &[
    VerifierInfo {
        id: "keywords:existence",
        args: &["keywords"],
        description: "every keyword appears (case-insensitive)",
    },
    VerifierInfo {
        id: "keywords:forbidden_words",
        args: &["forbidden_words"],
        description: "no forbidden word appears as a whole word",
    },
    VerifierInfo {
        id: "keywords:frequency",
        args: &["keyword", "frequency", "relation"],
        description: "keyword count compared with a threshold",
    },
    VerifierInfo {
        id: "change_case:english_capital",
        args: &[],
        description: "all letters uppercase",
    },
    VerifierInfo {
        id: "change_case:english_lowercase",
        args: &[],
        description: "all letters lowercase",
    },
    VerifierInfo {
        id: "length_constraints:number_words",
        args: &["num_words", "relation"],
        description: "word count compared with a threshold",
    },
    VerifierInfo {
        id: "length_constraints:number_sentences",
        args: &["num_sentences", "relation"],
        description: "sentence count compared with a threshold",
    },
    VerifierInfo {
        id: "length_constraints:number_paragraphs",
        args: &["num_paragraphs"],
        description: "exact number of paragraphs separated by ***",
    },
    VerifierInfo {
        id: "detectable_format:number_bullet_lists",
        args: &["num_bullets"],
        description: "exact number of markdown bullet points",
    },
    VerifierInfo {
        id: "detectable_format:json_format",
        args: &[],
        description: "whole response is JSON (optionally fenced)",
    },
    VerifierInfo {
        id: "detectable_format:title",
        args: &[],
        description: "contains a title wrapped in << >>",
    },
    VerifierInfo {
        id: "detectable_format:number_highlighted_sections",
        args: &["num_highlights"],
        description: "at least N *highlighted* sections",
    },
    VerifierInfo {
        id: "startend:quotation",
        args: &[],
        description: "wrapped in double quotes",
    },
    VerifierInfo {
        id: "startend:end_checker",
        args: &["end_phrase"],
        description: "ends with the given phrase",
    },
    VerifierInfo {
        id: "punctuation:no_comma",
        args: &[],
        description: "contains no commas",
    },
    VerifierInfo {
        id: "detectable_content:postscript",
        args: &["postscript_marker"],
        description: "contains a postscript starting with the marker",
    },
    VerifierInfo {
        id: "combination:repeat_prompt",
        args: &["prompt_to_repeat"],
        description: "starts by repeating the prompt",
    },
];

pub fn is_supported(id: &str) -> bool {
    REGISTRY.iter().any(|v| v.id == id)
}

/// A parsed instruction, ready to check responses.
#[derive(Debug, Clone)]
pub enum Check {
    KeywordsExistence(Vec<Regex>),
    ForbiddenWords(Vec<Regex>),
    KeywordFrequency {
        keyword: Regex,
        frequency: usize,
        relation: Relation,
    },
    EnglishCapital,
    EnglishLowercase,
    NumberWords {
        num_words: usize,
        relation: Relation,
    },
    NumberSentences {
        num_sentences: usize,
        relation: Relation,
    },
    NumberParagraphs(usize),
    NumberBulletLists(usize),
    JsonFormat,
    Title,
    HighlightedSections(usize),
    Quotation,
    EndChecker(String),
    NoComma,
    Postscript(Regex),
    RepeatPrompt(String),
}

fn bad(id: &str, reason: impl Into<String>) -> VerifierError {
    VerifierError::BadArguments {
        id: id.to_string(),
        reason: reason.into(),
    }
}

fn get_str<'a>(
    id: &str,
    args: &'a Map<String, Value>,
    name: &str,
) -> Result<&'a str, VerifierError> {
    args.get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| bad(id, format!("missing string argument `{name}`")))
}

fn get_count(id: &str, args: &Map<String, Value>, name: &str) -> Result<usize, VerifierError> {
    let v = args
        .get(name)
        .ok_or_else(|| bad(id, format!("missing integer argument `{name}`")))?;
    if let Some(n) = v.as_u64() {
        return Ok(n as usize);
    }
    match v.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 => Ok(f as usize),
        _ => Err(bad(
            id,
            format!("`{name}` must be a non-negative integer, got {v}"),
        )),
    }
}

fn get_list(id: &str, args: &Map<String, Value>, name: &str) -> Result<Vec<String>, VerifierError> {
    args.get(name)
        .and_then(Value::as_array)
        .and_then(|items| {
            items
                .iter()
                .map(|i| i.as_str().map(str::to_string))
                .collect()
        })
        .ok_or_else(|| bad(id, format!("missing string-list argument `{name}`")))
}

/// Compiles a user-supplied pattern the way the reference does (as a
/// regular expression); falls back to a literal match if it does not parse.
fn pattern(source: &str, case_insensitive: bool) -> Regex {
    RegexBuilder::new(source)
        .case_insensitive(case_insensitive)
        .multi_line(true)
        .build()
        .unwrap_or_else(|_| {
            RegexBuilder::new(&regex::escape(source))
                .case_insensitive(case_insensitive)
                .multi_line(true)
                .build()
                .expect("escaped pattern")
        })
}

impl Check {
    /// Parses an instruction id and its arguments. Null-valued arguments
    /// are ignored, matching the dataset's padded kwargs.
    pub fn parse(id: &str, kwargs: &Map<String, Value>) -> Result<Self, VerifierError> {
        let args: Map<String, Value> = kwargs
            .iter()
            .filter(|(_, v)| !v.is_null())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let check = match id {
            "keywords:existence" => Check::KeywordsExistence(
                get_list(id, &args, "keywords")?
                    .iter()
                    .map(|k| pattern(k, true))
                    .collect(),
            ),
            "keywords:forbidden_words" => Check::ForbiddenWords(
                get_list(id, &args, "forbidden_words")?
                    .iter()
                    .map(|w| pattern(&format!(r"\b{w}\b"), true))
                    .collect(),
            ),
            "keywords:frequency" => Check::KeywordFrequency {
                keyword: pattern(get_str(id, &args, "keyword")?, true),
                frequency: get_count(id, &args, "frequency")?,
                relation: Relation::parse(id, args.get("relation"))?,
            },
            "change_case:english_capital" => Check::EnglishCapital,
            "change_case:english_lowercase" => Check::EnglishLowercase,
            "length_constraints:number_words" => Check::NumberWords {
                num_words: get_count(id, &args, "num_words")?,
                relation: Relation::parse(id, args.get("relation"))?,
            },
            "length_constraints:number_sentences" => Check::NumberSentences {
                num_sentences: get_count(id, &args, "num_sentences")?,
                relation: Relation::parse(id, args.get("relation"))?,
            },
            "length_constraints:number_paragraphs" => {
                Check::NumberParagraphs(get_count(id, &args, "num_paragraphs")?)
            }
            "detectable_format:number_bullet_lists" => {
                Check::NumberBulletLists(get_count(id, &args, "num_bullets")?)
            }
            "detectable_format:json_format" => Check::JsonFormat,
            "detectable_format:title" => Check::Title,
            "detectable_format:number_highlighted_sections" => {
                Check::HighlightedSections(get_count(id, &args, "num_highlights")?)
            }
            "startend:quotation" => Check::Quotation,
            "startend:end_checker" => {
                Check::EndChecker(get_str(id, &args, "end_phrase")?.to_string())
            }
            "punctuation:no_comma" => Check::NoComma,
            "detectable_content:postscript" => {
                let marker = get_str(id, &args, "postscript_marker")?;
                let source = match marker {
                    "P.P.S" => r"\s*p\.\s?p\.\s?s.*$".to_string(),
                    "P.S." => r"\s*p\.\s?s\..*$".to_string(),
                    other => format!(r"\s*{}.*$", other.to_lowercase()),
                };
                Check::Postscript(pattern(&source, false))
            }
            "combination:repeat_prompt" => {
                Check::RepeatPrompt(get_str(id, &args, "prompt_to_repeat")?.to_string())
            }
            other => return Err(VerifierError::Unsupported(other.to_string())),
        };
        Ok(check)
    }

    pub fn check(&self, response: &str) -> bool {
        match self {
            Check::KeywordsExistence(patterns) => patterns.iter().all(|p| p.is_match(response)),
            Check::ForbiddenWords(patterns) => !patterns.iter().any(|p| p.is_match(response)),
            Check::KeywordFrequency {
                keyword,
                frequency,
                relation,
            } => relation.holds(keyword.find_iter(response).count(), *frequency),
            Check::EnglishCapital => is_upper(response),
            Check::EnglishLowercase => is_lower(response),
            Check::NumberWords {
                num_words,
                relation,
            } => relation.holds(count_words(response), *num_words),
            Check::NumberSentences {
                num_sentences,
                relation,
            } => relation.holds(count_sentences(response), *num_sentences),
            Check::NumberParagraphs(n) => paragraphs_match(response, *n),
            Check::NumberBulletLists(n) => count_bullets(response) == *n,
            Check::JsonFormat => is_json(response),
            Check::Title => has_title(response),
            Check::HighlightedSections(n) => count_highlights(response) >= *n,
            Check::Quotation => {
                let v = response.trim();
                v.chars().count() > 1 && v.starts_with('"') && v.ends_with('"')
            }
            Check::EndChecker(phrase) => response
                .trim()
                .trim_matches('"')
                .to_lowercase()
                .ends_with(&phrase.trim().to_lowercase()),
            Check::NoComma => !response.contains(','),
            Check::Postscript(p) => p.is_match(&response.to_lowercase()),
            Check::RepeatPrompt(prompt) => response
                .trim()
                .to_lowercase()
                .starts_with(&prompt.trim().to_lowercase()),
        }
    }
}

/// Parses and checks in one step.
pub fn verify(
    id: &str,
    kwargs: &Map<String, Value>,
    response: &str,
) -> Result<bool, VerifierError> {
    Ok(Check::parse(id, kwargs)?.check(response))
}

fn is_cased(c: char) -> bool {
    c.is_uppercase() || c.is_lowercase()
}

/// At least one cased letter and none lowercase.
fn is_upper(s: &str) -> bool {
    s.chars().any(is_cased) && !s.chars().any(char::is_lowercase)
}

fn is_lower(s: &str) -> bool {
    s.chars().any(is_cased) && !s.chars().any(char::is_uppercase)
}

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+").unwrap());
static SENTENCE_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[.!?]+(\s+|$)").unwrap());

pub fn count_words(text: &str) -> usize {
    WORD.find_iter(text).count()
}

/// Number of non-blank segments after splitting on `.`/`!`/`?` runs
/// followed by whitespace or the end of the text.
pub fn count_sentences(text: &str) -> usize {
    SENTENCE_END
        .split(text)
        .filter(|s| !s.trim().is_empty())
        .count()
}

static PARAGRAPH_SPLIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s?\*\*\*\s?").unwrap());

fn paragraphs_match(text: &str, expected: usize) -> bool {
    let parts: Vec<&str> = PARAGRAPH_SPLIT.split(text).collect();
    let mut count = parts.len();
    for (i, p) in parts.iter().enumerate() {
        if p.trim().is_empty() {
            if i == 0 || i == parts.len() - 1 {
                count -= 1;
            } else {
                return false;
            }
        }
    }
    count == expected
}

static STAR_BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*\*[^\*].*$").unwrap());
static DASH_BULLET: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\s*-.*$").unwrap());

fn count_bullets(text: &str) -> usize {
    STAR_BULLET.find_iter(text).count() + DASH_BULLET.find_iter(text).count()
}

fn is_json(text: &str) -> bool {
    let mut v = text.trim();
    for fence in ["```json", "```Json", "```JSON", "```"] {
        if let Some(rest) = v.strip_prefix(fence) {
            v = rest;
            break;
        }
    }
    let v = v.strip_suffix("```").unwrap_or(v).trim();
    serde_json::from_str::<Value>(v).is_ok()
}

static TITLE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<<[^\n]+>>").unwrap());

fn has_title(text: &str) -> bool {
    TITLE.find_iter(text).any(|m| {
        !m.as_str()
            .trim_start_matches('<')
            .trim_end_matches('>')
            .trim()
            .is_empty()
    })
}

static SINGLE_HIGHLIGHT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\*[^\n\*]*\*").unwrap());
static DOUBLE_HIGHLIGHT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\*\*[^\n\*]*\*\*").unwrap());

fn count_highlights(text: &str) -> usize {
    let single = SINGLE_HIGHLIGHT
        .find_iter(text)
        .filter(|m| !m.as_str().trim_matches('*').trim().is_empty())
        .count();
    let double = DOUBLE_HIGHLIGHT
        .find_iter(text)
        .filter(|m| {
            let s = m.as_str();
            let s = s.strip_prefix("**").unwrap_or(s);
            let s = s.strip_suffix("**").unwrap_or(s);
            !s.trim().is_empty()
        })
        .count();
    single + double
}

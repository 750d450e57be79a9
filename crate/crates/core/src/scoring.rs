//! Answer normalization, pass/fail verdicts and string-similarity metrics.
//!
//! Verification is case-insensitive: both sides go through
//! [`normalize_answer`] before comparison.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoringError {
    #[error("ground truth is empty after normalization")]
    EmptyTruth,
    #[error("invalid choice label {0:?}, expected A-E")]
    InvalidLabel(String),
}

/// Keeps ASCII letters and digits, uppercased.
pub fn normalize_answer(raw: &str) -> String {
    raw.chars().filter(char::is_ascii_alphanumeric).map(|c| c.to_ascii_uppercase()).collect()
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - d / max(|a|, |b|)`, or 1.0 when both strings are empty.
pub fn levenshtein_ratio(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Ratcliff/Obershelp gestalt ratio `2M / (|a| + |b|)`.
///
/// Matches Python's `difflib.SequenceMatcher(None, a, b).ratio()` exactly,
/// including its tie-breaking and the popular-element heuristic applied when
/// `b` has 200 or more characters. The ratio is not symmetric in general.
pub fn similarity_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    let matched = Matcher::new(&a, &b).matched_chars();
    2.0 * matched as f64 / total as f64
}

struct Matcher<'a> {
    a: &'a [char],
    b: &'a [char],
    b2j: HashMap<char, Vec<usize>>,
}

impl<'a> Matcher<'a> {
    fn new(a: &'a [char], b: &'a [char]) -> Self {
        let mut b2j: HashMap<char, Vec<usize>> = HashMap::new();
        for (j, c) in b.iter().enumerate() {
            b2j.entry(*c).or_default().push(j);
        }
        if b.len() >= 200 {
            let limit = b.len() / 100 + 1;
            b2j.retain(|_, idxs| idxs.len() <= limit);
        }
        Self { a, b, b2j }
    }

    /// Longest block `a[i..i+k] == b[j..j+k]` inside the given window; ties go
    /// to the smallest `i`, then the smallest `j`.
    fn longest_match(&self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
        let (mut besti, mut bestj, mut best) = (alo, blo, 0);
        let mut j2len: HashMap<usize, usize> = HashMap::new();
        for i in alo..ahi {
            let mut next: HashMap<usize, usize> = HashMap::new();
            if let Some(idxs) = self.b2j.get(&self.a[i]) {
                for &j in idxs {
                    if j < blo {
                        continue;
                    }
                    if j >= bhi {
                        break;
                    }
                    let k = j.checked_sub(1).and_then(|p| j2len.get(&p)).copied().unwrap_or(0) + 1;
                    next.insert(j, k);
                    if k > best {
                        besti = i + 1 - k;
                        bestj = j + 1 - k;
                        best = k;
                    }
                }
            }
            j2len = next;
        }
        // Characters dropped as popular can still extend a block at its edges.
        while besti > alo && bestj > blo && self.a[besti - 1] == self.b[bestj - 1] {
            besti -= 1;
            bestj -= 1;
            best += 1;
        }
        while besti + best < ahi && bestj + best < bhi && self.a[besti + best] == self.b[bestj + best] {
            best += 1;
        }
        (besti, bestj, best)
    }

    fn matched_chars(&self) -> usize {
        let mut queue = vec![(0, self.a.len(), 0, self.b.len())];
        let mut matched = 0;
        while let Some((alo, ahi, blo, bhi)) = queue.pop() {
            let (i, j, k) = self.longest_match(alo, ahi, blo, bhi);
            if k == 0 {
                continue;
            }
            matched += k;
            if alo < i && blo < j {
                queue.push((alo, i, blo, j));
            }
            if i + k < ahi && j + k < bhi {
                queue.push((i + k, ahi, j + k, bhi));
            }
        }
        matched
    }
}

/// Outcome of grading a free-text answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    pub normalized_truth: String,
    pub normalized_guess: String,
    /// Gestalt ratio of truth against guess, in `[0, 1]`.
    pub similarity: f64,
    pub edit_distance: usize,
    pub levenshtein_ratio: f64,
}

/// Grades `guess` against `truth` after normalizing both.
pub fn grade(truth: &str, guess: &str) -> Result<Verdict, ScoringError> {
    let normalized_truth = normalize_answer(truth);
    if normalized_truth.is_empty() {
        return Err(ScoringError::EmptyTruth);
    }
    let normalized_guess = normalize_answer(guess);
    Ok(Verdict {
        passed: normalized_truth == normalized_guess,
        similarity: similarity_ratio(&normalized_truth, &normalized_guess),
        edit_distance: levenshtein(&normalized_truth, &normalized_guess),
        levenshtein_ratio: levenshtein_ratio(&normalized_truth, &normalized_guess),
        normalized_truth,
        normalized_guess,
    })
}

/// One of the five answer options of a multiple-choice question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChoiceLabel {
    A,
    B,
    C,
    D,
    E,
}

impl ChoiceLabel {
    pub const ALL: [ChoiceLabel; 5] = [Self::A, Self::B, Self::C, Self::D, Self::E];

    pub fn from_char(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'A' => Some(Self::A),
            'B' => Some(Self::B),
            'C' => Some(Self::C),
            'D' => Some(Self::D),
            'E' => Some(Self::E),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        (b'A' + self.index() as u8) as char
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ChoiceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl std::str::FromStr for ChoiceLabel {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Self::from_char(c).ok_or_else(|| ScoringError::InvalidLabel(s.into())),
            _ => Err(ScoringError::InvalidLabel(s.into())),
        }
    }
}

/// Outcome of grading a multiple-choice response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceVerdict {
    pub passed: bool,
    /// The single letter the response reduced to, if any.
    pub parsed: Option<char>,
    /// The response was not a lone letter as the prompt demands.
    pub unparseable: bool,
}

/// Grades a raw model response against the correct option.
///
/// The response is trimmed and stripped of surrounding punctuation; it must
/// then be exactly one letter. Anything else fails and is flagged.
pub fn grade_choice(truth: ChoiceLabel, raw: &str) -> ChoiceVerdict {
    let core = raw.trim().trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    let mut chars = core.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => {
            let c = c.to_ascii_uppercase();
            ChoiceVerdict { passed: c == truth.as_char(), parsed: Some(c), unparseable: false }
        }
        _ => ChoiceVerdict { passed: false, parsed: None, unparseable: true },
    }
}

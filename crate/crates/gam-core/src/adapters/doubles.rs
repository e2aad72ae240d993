//! Deterministic offline doubles for every adapter contract.
//!
//! Each double is a pure function of its inputs plus a fixed seed: the test
//! suite, the CLI under `--adapters doubles`, and the acceptance runs all
//! reproduce bit-identically.

use std::collections::{BTreeSet, HashMap};

use regex::Regex;

use crate::error::{Error, Result};
use crate::vecmath;

use super::{
    Embedder, Generator, Ner, PresentedSentence, Rewriter, Segmenter, SufficiencyJudge,
    SupportJudge, TimeExtractor,
};

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn lower_alnum_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Token-hash bag-of-features embedder.
///
/// Each lowercase alphanumeric token hashes to one of `dim` signed buckets;
/// the bucket vector is then L2-normalized. Identical strings embed to
/// identical vectors (cosine 1), token overlap yields high-but-below-one
/// cosine, and disjoint token sets land near zero.
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
    id: String,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashEmbedder {
            dim,
            seed,
            id: format!("hash{dim}-seed{seed}"),
        }
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = vec![0.0f32; self.dim];
        for tok in lower_alnum_tokens(text) {
            let h = fnv1a(self.seed, tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        if v.iter().all(|x| *x == 0.0) {
            // Degenerate input with no tokens still embeds deterministically.
            v[0] = 1.0;
        }
        vecmath::normalize(&mut v);
        Ok(v)
    }
}

/// Rule-based segmenter: splits after sentence-final `.`, `?`, or `!` runs
/// followed by whitespace or end of text. Text with no terminator is a single
/// sentence. Spans are byte offsets into the original text.
pub struct RuleSegmenter;

impl Segmenter for RuleSegmenter {
    fn id(&self) -> &str {
        "rule-segmenter"
    }

    fn segment(&self, text: &str) -> Result<Vec<(String, (usize, usize))>> {
        let bytes = text.as_bytes();
        let mut out = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c == '.' || c == '?' || c == '!' {
                // Consume the full terminator run.
                let mut end = i + 1;
                while end < bytes.len() && matches!(bytes[end] as char, '.' | '?' | '!') {
                    end += 1;
                }
                let at_boundary =
                    end == bytes.len() || (bytes[end] as char).is_whitespace();
                if at_boundary {
                    push_trimmed(text, start, end, &mut out);
                    start = end;
                }
                i = end;
            } else {
                i += 1;
            }
        }
        push_trimmed(text, start, bytes.len(), &mut out);
        Ok(out)
    }
}

fn push_trimmed(text: &str, start: usize, end: usize, out: &mut Vec<(String, (usize, usize))>) {
    let slice = &text[start..end];
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        return;
    }
    let lead = slice.len() - slice.trim_start().len();
    let s = start + lead;
    let e = s + trimmed.len();
    out.push((trimmed.to_string(), (s, e)));
}

/// Canonical entity form: lowercase, internal whitespace collapsed, edge
/// punctuation stripped.
pub fn canonicalize_surface(surface: &str) -> String {
    let trimmed = surface.trim_matches(|c: char| !c.is_alphanumeric());
    trimmed
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

const NER_STOPWORDS: &[&str] = &[
    "the", "a", "an", "it", "he", "she", "they", "we", "you", "i", "this", "that", "these",
    "those", "there", "here", "in", "on", "at", "by", "to", "of", "and", "but", "or", "if",
    "as", "so", "is", "was", "were", "are", "be", "been", "when", "where", "what", "who",
    "why", "how", "with", "for", "from", "not", "no", "yes", "after", "before", "during",
    "while", "my", "your", "his", "her", "its", "our", "their",
];

/// NER double: maximal runs of capitalized tokens, excluding a sentence-initial
/// token when it is a common stopword. Surfaces are canonicalized and
/// deduplicated within the sentence.
pub struct CapitalizedNer {
    stopwords: BTreeSet<&'static str>,
}

impl CapitalizedNer {
    pub fn new() -> Self {
        CapitalizedNer {
            stopwords: NER_STOPWORDS.iter().copied().collect(),
        }
    }

    fn is_capitalized(token: &str) -> bool {
        token.chars().next().is_some_and(|c| c.is_uppercase())
    }
}

impl Default for CapitalizedNer {
    fn default() -> Self {
        Self::new()
    }
}

impl Ner for CapitalizedNer {
    fn id(&self) -> &str {
        "capitalized-ner"
    }

    fn extract(&self, sentence: &str) -> Result<Vec<String>> {
        let mut surfaces: Vec<String> = Vec::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut run: Vec<&str> = Vec::new();
        let mut flush = |run: &mut Vec<&str>| {
            if run.is_empty() {
                return;
            }
            let canon = canonicalize_surface(&run.join(" "));
            if !canon.is_empty() && seen.insert(canon.clone()) {
                surfaces.push(canon);
            }
            run.clear();
        };
        for (idx, raw) in sentence.split_whitespace().enumerate() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let capitalized = Self::is_capitalized(word);
            let initial_stopword =
                idx == 0 && self.stopwords.contains(word.to_lowercase().as_str());
            if capitalized && !initial_stopword {
                run.push(word);
                // Trailing punctuation on the raw token closes the run.
                if raw.ends_with(|c: char| !c.is_alphanumeric()) {
                    flush(&mut run);
                }
            } else {
                flush(&mut run);
            }
        }
        flush(&mut run);
        Ok(surfaces)
    }
}

/// Regex time-extractor double: 4-digit years, month-year phrases, and
/// year-range phrases ("between 1998 and 2003", "from 1990 to 1995").
pub struct RegexTimeExtractor {
    pattern: Regex,
}

impl RegexTimeExtractor {
    pub fn new() -> Self {
        let months = "january|february|march|april|may|june|july|august|september|october|november|december";
        let pattern = Regex::new(&format!(
            r"(?i)\b(?:between\s+\d{{4}}\s+and\s+\d{{4}}|from\s+\d{{4}}\s+to\s+\d{{4}}|(?:{months})\s+\d{{4}}|\d{{4}})\b"
        ))
        .expect("static time regex compiles");
        RegexTimeExtractor { pattern }
    }
}

impl Default for RegexTimeExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl TimeExtractor for RegexTimeExtractor {
    fn id(&self) -> &str {
        "regex-time"
    }

    fn extract_time(&self, text: &str) -> Result<Option<String>> {
        Ok(self.pattern.find(text).map(|m| m.as_str().to_string()))
    }
}

/// Sufficiency double with a fixed answer, for loop-shape tests.
pub struct FixedSufficiency {
    verdict: bool,
    id: &'static str,
}

impl FixedSufficiency {
    pub fn always_yes() -> Self {
        FixedSufficiency {
            verdict: true,
            id: "sufficiency-always-yes",
        }
    }

    pub fn always_no() -> Self {
        FixedSufficiency {
            verdict: false,
            id: "sufficiency-always-no",
        }
    }
}

impl SufficiencyJudge for FixedSufficiency {
    fn id(&self) -> &str {
        self.id
    }

    fn judge(&self, _question: &str, _sentences: &[PresentedSentence]) -> Result<bool> {
        Ok(self.verdict)
    }
}

/// Oracle sufficiency judge: sufficient exactly when every gold support
/// sentence for the question is among the presented sentences.
pub struct OracleSufficiency {
    gold: HashMap<String, BTreeSet<u32>>,
}

impl OracleSufficiency {
    pub fn new(gold: HashMap<String, BTreeSet<u32>>) -> Self {
        OracleSufficiency { gold }
    }

    pub fn single(question: &str, ids: impl IntoIterator<Item = u32>) -> Self {
        let mut gold = HashMap::new();
        gold.insert(question.to_string(), ids.into_iter().collect());
        OracleSufficiency { gold }
    }
}

impl SufficiencyJudge for OracleSufficiency {
    fn id(&self) -> &str {
        "sufficiency-oracle"
    }

    fn judge(&self, question: &str, sentences: &[PresentedSentence]) -> Result<bool> {
        let shown: BTreeSet<u32> = sentences.iter().map(|s| s.id).collect();
        match self.gold.get(question) {
            Some(gold) if !gold.is_empty() => Ok(gold.is_subset(&shown)),
            _ => Ok(false),
        }
    }
}

/// Oracle support judge: returns the gold support ids that were presented.
pub struct OracleSupport {
    gold: HashMap<String, BTreeSet<u32>>,
}

impl OracleSupport {
    pub fn new(gold: HashMap<String, BTreeSet<u32>>) -> Self {
        OracleSupport { gold }
    }

    pub fn single(question: &str, ids: impl IntoIterator<Item = u32>) -> Self {
        let mut gold = HashMap::new();
        gold.insert(question.to_string(), ids.into_iter().collect());
        OracleSupport { gold }
    }
}

impl SupportJudge for OracleSupport {
    fn id(&self) -> &str {
        "support-oracle"
    }

    fn support(
        &self,
        question: &str,
        _predicted_answer: &str,
        sentences: &[PresentedSentence],
    ) -> Result<Vec<u32>> {
        let gold = match self.gold.get(question) {
            Some(g) => g,
            None => return Ok(Vec::new()),
        };
        Ok(sentences
            .iter()
            .map(|s| s.id)
            .filter(|id| gold.contains(id))
            .collect())
    }
}

/// Support double that never marks anything supportive.
pub struct EmptySupport;

impl SupportJudge for EmptySupport {
    fn id(&self) -> &str {
        "support-empty"
    }

    fn support(
        &self,
        _question: &str,
        _predicted_answer: &str,
        _sentences: &[PresentedSentence],
    ) -> Result<Vec<u32>> {
        Ok(Vec::new())
    }
}

/// Rewriter double: a pinned table of word-order transforms that preserve
/// entity surfaces, with an identity fallback when no rule matches.
pub struct TableRewriter {
    who_directed: Regex,
    where_did: Regex,
    when_did: Regex,
}

impl TableRewriter {
    pub fn new() -> Self {
        TableRewriter {
            who_directed: Regex::new(r"^(?i)who directed (.+)\?$").unwrap(),
            where_did: Regex::new(r"^(?i)where did (.+)\?$").unwrap(),
            when_did: Regex::new(r"^(?i)when did (.+)\?$").unwrap(),
        }
    }
}

impl Default for TableRewriter {
    fn default() -> Self {
        Self::new()
    }
}

impl Rewriter for TableRewriter {
    fn id(&self) -> &str {
        "table-rewriter"
    }

    fn rewrite(&self, question: &str) -> Result<String> {
        if question.is_empty() {
            return Err(Error::Adapter("rewrite: empty question".into()));
        }
        if let Some(c) = self.who_directed.captures(question) {
            return Ok(format!("{} was directed by whom?", &c[1]));
        }
        if let Some(c) = self.where_did.captures(question) {
            return Ok(format!("in which place did {}?", &c[1]));
        }
        if let Some(c) = self.when_did.captures(question) {
            return Ok(format!("at what time did {}?", &c[1]));
        }
        Ok(question.to_string())
    }
}

/// Generator double: concatenates the retrieved passage texts. Keeps
/// answer-containment metrics a pure function of retrieval quality.
pub struct ExtractiveGenerator;

impl Generator for ExtractiveGenerator {
    fn id(&self) -> &str {
        "extractive-generator"
    }

    fn generate(&self, _question: &str, passages: &[&str]) -> Result<String> {
        Ok(passages.join(" "))
    }
}

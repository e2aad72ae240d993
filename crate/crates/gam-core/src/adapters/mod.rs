//! Boundary contracts for every model-backed function, plus deterministic
//! offline doubles and an HTTP client implementation.
//!
//! The engine never talks to a model directly: embedding, segmentation, NER,
//! time extraction, sufficiency/support judging, query rewriting, and answer
//! generation all go through the traits below. [`AdapterRegistry`] bundles one
//! implementation per function, validates contracts at the call boundary
//! (embedding dimension and unit norm, support-id subsets), and accounts for
//! token usage and adapter wall time.
//!
//! Doubles are pure functions of their inputs plus a fixed seed, so any test
//! or run wired to [`AdapterRegistry::doubles`] is bit-for-bit reproducible.

pub mod doubles;
pub mod http;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::vecmath;

pub const NO_TIME_SENTINEL: &str = "[NO_TIME]";

/// A sentence shown to a judge, with its stable id.
#[derive(Debug, Clone)]
pub struct PresentedSentence {
    pub id: u32,
    pub text: String,
}

/// Outcome of a sufficiency check plus any supporting sentence ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgeVerdict {
    pub sufficient: bool,
    pub support_ids: Vec<u32>,
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>>;
}

pub trait Segmenter: Send + Sync {
    fn id(&self) -> &str;
    /// Splits `text` into sentences with byte spans into the original text.
    fn segment(&self, text: &str) -> Result<Vec<(String, (usize, usize))>>;
}

pub trait Ner: Send + Sync {
    fn id(&self) -> &str;
    /// Canonicalized entity surfaces found in one sentence, deduplicated.
    fn extract(&self, sentence: &str) -> Result<Vec<String>>;
}

pub trait TimeExtractor: Send + Sync {
    fn id(&self) -> &str;
    /// Short time-constraint phrase, or `None` when the text carries none.
    fn extract_time(&self, text: &str) -> Result<Option<String>>;
}

pub trait SufficiencyJudge: Send + Sync {
    fn id(&self) -> &str;
    fn judge(&self, question: &str, sentences: &[PresentedSentence]) -> Result<bool>;
}

pub trait SupportJudge: Send + Sync {
    fn id(&self) -> &str;
    fn support(
        &self,
        question: &str,
        predicted_answer: &str,
        sentences: &[PresentedSentence],
    ) -> Result<Vec<u32>>;
}

pub trait Rewriter: Send + Sync {
    fn id(&self) -> &str;
    fn rewrite(&self, question: &str) -> Result<String>;
}

pub trait Generator: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, question: &str, passages: &[&str]) -> Result<String>;
}

/// Monotone clock used for latency accounting. The doubles registry installs a
/// deterministic tick clock so episode traces and reports are reproducible.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> f64;
}

pub struct SystemClock {
    epoch: std::time::Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            epoch: std::time::Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1e3
    }
}

/// Deterministic clock: every reading advances time by one millisecond.
pub struct TickClock {
    ticks: AtomicU64,
}

impl TickClock {
    pub fn new() -> Self {
        TickClock {
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for TickClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for TickClock {
    fn now_ms(&self) -> f64 {
        self.ticks.fetch_add(1, Ordering::SeqCst) as f64
    }
}

/// Running token and wall-time accounting across all adapter calls.
///
/// Backends that report exact token counts add those; everything else is
/// estimated as ceil(chars / 4). Time is tracked in integer microseconds so
/// the meter stays exact under concurrent updates.
#[derive(Default)]
pub struct CallMeter {
    tokens_in: AtomicU64,
    tokens_out: AtomicU64,
    adapter_us: AtomicU64,
}

/// Point-in-time snapshot of a [`CallMeter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MeterReading {
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub adapter_us: u64,
}

impl MeterReading {
    pub fn delta_since(&self, earlier: &MeterReading) -> MeterReading {
        MeterReading {
            tokens_in: self.tokens_in - earlier.tokens_in,
            tokens_out: self.tokens_out - earlier.tokens_out,
            adapter_us: self.adapter_us - earlier.adapter_us,
        }
    }
}

pub fn estimate_tokens(text_len: usize) -> u64 {
    (text_len as u64).div_ceil(4)
}

impl CallMeter {
    pub fn add(&self, tokens_in: u64, tokens_out: u64, elapsed_ms: f64) {
        self.tokens_in.fetch_add(tokens_in, Ordering::Relaxed);
        self.tokens_out.fetch_add(tokens_out, Ordering::Relaxed);
        self.adapter_us
            .fetch_add((elapsed_ms * 1e3).round() as u64, Ordering::Relaxed);
    }

    pub fn reading(&self) -> MeterReading {
        MeterReading {
            tokens_in: self.tokens_in.load(Ordering::Relaxed),
            tokens_out: self.tokens_out.load(Ordering::Relaxed),
            adapter_us: self.adapter_us.load(Ordering::Relaxed),
        }
    }
}

/// One named implementation per adapter function.
///
/// The registry is the engine's only call surface for adapters: its methods
/// forward to the configured implementations, meter the call, and enforce the
/// cross-cutting contracts (non-empty inputs, embedding dimension and unit
/// norm, support ids being a subset of the presented sentences).
pub struct AdapterRegistry {
    pub embedder: Arc<dyn Embedder>,
    pub segmenter: Arc<dyn Segmenter>,
    pub ner: Arc<dyn Ner>,
    pub time_extractor: Arc<dyn TimeExtractor>,
    pub sufficiency: Arc<dyn SufficiencyJudge>,
    pub support: Arc<dyn SupportJudge>,
    pub rewriter: Arc<dyn Rewriter>,
    pub generator: Arc<dyn Generator>,
    pub clock: Arc<dyn Clock>,
    meter: Arc<CallMeter>,
}

impl AdapterRegistry {
    /// Default offline registry: hash embedder (d=64), rule segmenter,
    /// capitalized-run NER, regex time extractor, always-insufficient judge,
    /// empty support judge, table rewriter, extractive generator, tick clock.
    pub fn doubles(seed: u64) -> Self {
        Self::doubles_with_dim(seed, 64)
    }

    pub fn doubles_with_dim(seed: u64, dim: usize) -> Self {
        AdapterRegistry {
            embedder: Arc::new(doubles::HashEmbedder::new(dim, seed)),
            segmenter: Arc::new(doubles::RuleSegmenter),
            ner: Arc::new(doubles::CapitalizedNer::new()),
            time_extractor: Arc::new(doubles::RegexTimeExtractor::new()),
            sufficiency: Arc::new(doubles::FixedSufficiency::always_no()),
            support: Arc::new(doubles::EmptySupport),
            rewriter: Arc::new(doubles::TableRewriter::new()),
            generator: Arc::new(doubles::ExtractiveGenerator),
            clock: Arc::new(TickClock::new()),
            meter: Arc::new(CallMeter::default()),
        }
    }

    /// Registry with every function backed by the same HTTP endpoint.
    pub fn http(cfg: http::HttpConfig) -> Result<Self> {
        let backend = Arc::new(http::HttpAdapters::new(cfg)?);
        Ok(AdapterRegistry {
            embedder: backend.clone(),
            segmenter: backend.clone(),
            ner: backend.clone(),
            time_extractor: backend.clone(),
            sufficiency: backend.clone(),
            support: backend.clone(),
            rewriter: backend.clone(),
            generator: backend,
            clock: Arc::new(SystemClock::new()),
            meter: Arc::new(CallMeter::default()),
        })
    }

    pub fn meter_reading(&self) -> MeterReading {
        self.meter.reading()
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn with_sufficiency(mut self, judge: Arc<dyn SufficiencyJudge>) -> Self {
        self.sufficiency = judge;
        self
    }

    pub fn with_support(mut self, judge: Arc<dyn SupportJudge>) -> Self {
        self.support = judge;
        self
    }

    pub fn with_time_extractor(mut self, extractor: Arc<dyn TimeExtractor>) -> Self {
        self.time_extractor = extractor;
        self
    }

    pub fn with_rewriter(mut self, rewriter: Arc<dyn Rewriter>) -> Self {
        self.rewriter = rewriter;
        self
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim()
    }

    fn metered<T>(
        &self,
        tokens_in: u64,
        out_len: impl Fn(&T) -> u64,
        call: impl FnOnce() -> Result<T>,
    ) -> Result<T> {
        let t0 = self.clock.now_ms();
        let out = call();
        let elapsed = self.clock.now_ms() - t0;
        if let Ok(v) = &out {
            self.meter.add(tokens_in, out_len(v), elapsed);
        } else {
            self.meter.add(tokens_in, 0, elapsed);
        }
        out
    }

    /// Embeds `text` and validates dimension and unit norm.
    pub fn embed(&self, text: &str) -> Result<Vec<f32>> {
        if text.is_empty() {
            return Err(Error::Adapter("embed: empty input text".into()));
        }
        let v = self.metered(estimate_tokens(text.len()), |_| 0, || self.embedder.embed(text))?;
        if v.len() != self.embedder.dim() {
            return Err(Error::Adapter(format!(
                "embedder {} returned dimension {}, expected {}",
                self.embedder.id(),
                v.len(),
                self.embedder.dim()
            )));
        }
        if !vecmath::is_unit(&v, 1e-6) {
            return Err(Error::Adapter(format!(
                "embedder {} returned non-unit vector (norm {})",
                self.embedder.id(),
                vecmath::l2_norm(&v)
            )));
        }
        Ok(v)
    }

    pub fn segment(&self, text: &str) -> Result<Vec<(String, (usize, usize))>> {
        if text.is_empty() {
            return Err(Error::Adapter("segment: empty input text".into()));
        }
        self.metered(
            estimate_tokens(text.len()),
            |spans: &Vec<(String, (usize, usize))>| {
                spans.iter().map(|(s, _)| estimate_tokens(s.len())).sum()
            },
            || self.segmenter.segment(text),
        )
    }

    pub fn extract_entities(&self, sentence: &str) -> Result<Vec<String>> {
        if sentence.is_empty() {
            return Err(Error::Adapter("ner: empty input sentence".into()));
        }
        self.metered(
            estimate_tokens(sentence.len()),
            |ents: &Vec<String>| ents.iter().map(|e| estimate_tokens(e.len())).sum(),
            || self.ner.extract(sentence),
        )
    }

    pub fn extract_time(&self, text: &str) -> Result<Option<String>> {
        self.metered(
            estimate_tokens(text.len()),
            |t: &Option<String>| t.as_ref().map_or(1, |s| estimate_tokens(s.len())),
            || self.time_extractor.extract_time(text),
        )
    }

    pub fn judge_sufficiency(
        &self,
        question: &str,
        sentences: &[PresentedSentence],
    ) -> Result<bool> {
        if sentences.is_empty() {
            return Err(Error::Adapter(
                "judge_sufficiency: no sentences presented".into(),
            ));
        }
        let in_len = question.len() + sentences.iter().map(|s| s.text.len()).sum::<usize>();
        self.metered(estimate_tokens(in_len), |_| 1, || {
            self.sufficiency.judge(question, sentences)
        })
    }

    /// Labels supporting sentences. The returned ids are validated to be a
    /// subset of the presented ids; anything else is an adapter failure.
    pub fn judge_support(
        &self,
        question: &str,
        predicted_answer: &str,
        sentences: &[PresentedSentence],
    ) -> Result<Vec<u32>> {
        let in_len = question.len()
            + predicted_answer.len()
            + sentences.iter().map(|s| s.text.len()).sum::<usize>();
        let ids = self.metered(
            estimate_tokens(in_len),
            |ids: &Vec<u32>| ids.len() as u64,
            || self.support.support(question, predicted_answer, sentences),
        )?;
        for id in &ids {
            if !sentences.iter().any(|s| s.id == *id) {
                return Err(Error::Adapter(format!(
                    "support judge returned unpresented sentence id {id}"
                )));
            }
        }
        Ok(ids)
    }

    pub fn rewrite(&self, question: &str) -> Result<String> {
        if question.is_empty() {
            return Err(Error::Adapter("rewrite: empty question".into()));
        }
        let out = self.metered(
            estimate_tokens(question.len()),
            |s: &String| estimate_tokens(s.len()),
            || self.rewriter.rewrite(question),
        )?;
        if out.is_empty() {
            return Err(Error::Adapter("rewriter returned an empty question".into()));
        }
        Ok(out)
    }

    pub fn generate(&self, question: &str, passages: &[&str]) -> Result<String> {
        let in_len = question.len() + passages.iter().map(|p| p.len()).sum::<usize>();
        self.metered(
            estimate_tokens(in_len),
            |s: &String| estimate_tokens(s.len()),
            || self.generator.generate(question, passages),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_clock_is_deterministic() {
        let c = TickClock::new();
        assert_eq!(c.now_ms(), 0.0);
        assert_eq!(c.now_ms(), 1.0);
        assert_eq!(c.now_ms(), 2.0);
    }

    #[test]
    fn meter_tracks_deltas() {
        let reg = AdapterRegistry::doubles(0);
        let r0 = reg.meter_reading();
        reg.embed("hello world").unwrap();
        let r1 = reg.meter_reading();
        let d = r1.delta_since(&r0);
        assert_eq!(d.tokens_in, 3); // ceil(11 / 4)
        assert!(d.adapter_us > 0);
    }

    #[test]
    fn registry_rejects_empty_inputs() {
        let reg = AdapterRegistry::doubles(0);
        assert!(matches!(reg.embed(""), Err(Error::Adapter(_))));
        assert!(matches!(reg.rewrite(""), Err(Error::Adapter(_))));
        assert!(matches!(reg.judge_sufficiency("q", &[]), Err(Error::Adapter(_))));
    }

    #[test]
    fn support_subset_guard_rejects_unpresented_ids() {
        struct Leaky;
        impl SupportJudge for Leaky {
            fn id(&self) -> &str {
                "leaky"
            }
            fn support(
                &self,
                _q: &str,
                _a: &str,
                _s: &[PresentedSentence],
            ) -> Result<Vec<u32>> {
                Ok(vec![7])
            }
        }
        let reg = AdapterRegistry {
            support: Arc::new(Leaky),
            ..AdapterRegistry::doubles(0)
        };
        let shown = vec![PresentedSentence {
            id: 3,
            text: "x".into(),
        }];
        assert!(matches!(
            reg.judge_support("q", "a", &shown),
            Err(Error::Adapter(_))
        ));

        let oracle = AdapterRegistry {
            support: Arc::new(doubles::OracleSupport::single("q", [3u32, 7])),
            ..AdapterRegistry::doubles(0)
        };
        assert_eq!(oracle.judge_support("q", "a", &shown).unwrap(), vec![3]);
    }
}

//! Generator for a planted two-hop benchmark.
//!
//! Each question asks where the partner of a subject settled. The subject
//! appears in one bridge sentence together with the partner, and the partner
//! appears in exactly one other sentence together with the answer. Distractor
//! sentences mention the subject with question-like phrasing but carry no
//! onward entity, and junk mentions keep the subject's neighborhood busy, so
//! a memoryless pass gets pulled toward the distractors while judged feedback
//! progressively promotes the true chain.
//!
//! Layout per question k: passage 2k hosts the bridge sentence, two foreign
//! distractors, and an entity-free filler phrased like the questions (it keeps
//! the dense passage prior pointed at bridge hosts rather than answer hosts);
//! passage 2k+1 hosts the answer sentence, four foreign subject mentions, and
//! one foreign partner mention (the partner mention widens the bridge
//! entity's neighborhood so its averaged reactivation stays too weak to
//! surface the answer without accumulated feedback). All placements rotate by
//! seeded offsets, names are seeded consonant-vowel strings of fixed length
//! (so no name is a substring of another), and the whole corpus is a pure
//! function of the spec.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::RawPassage;

use super::QaItem;

#[derive(Debug, Clone, Copy)]
pub struct TwoHopSpec {
    pub questions: usize,
    pub seed: u64,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn fresh_name(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let mut name = String::with_capacity(8);
        for i in 0..4 {
            let c = CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char;
            let v = VOWELS[rng.random_range(0..VOWELS.len())] as char;
            if i == 0 {
                name.push(c.to_ascii_uppercase());
            } else {
                name.push(c);
            }
            name.push(v);
        }
        if taken.insert(name.clone()) {
            return name;
        }
    }
}

/// Distinct rotation offsets used to scatter foreign sentences across hosts.
fn rotations(rng: &mut ChaCha8Rng, count: usize, modulus: usize, exclude_zero: bool) -> Vec<usize> {
    let lo = usize::from(exclude_zero);
    assert!(
        modulus - lo >= count,
        "cannot draw {count} distinct offsets from {lo}..{modulus}"
    );
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = rng.random_range(lo..modulus);
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// Builds the corpus (2 passages per question) and the question set with
/// gold support sentence ids matching the rule-based segmentation order.
pub fn two_hop_benchmark(spec: &TwoHopSpec) -> (Vec<RawPassage>, Vec<QaItem>) {
    assert!(spec.questions >= 4, "need at least four questions to rotate placements");
    let n = spec.questions;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = BTreeSet::new();
    let subjects: Vec<String> = (0..n).map(|_| fresh_name(&mut rng, &mut taken)).collect();
    let bridges: Vec<String> = (0..n).map(|_| fresh_name(&mut rng, &mut taken)).collect();
    let answers: Vec<String> = (0..n).map(|_| fresh_name(&mut rng, &mut taken)).collect();

    // Question i's foreign sentences land at host (i + r) mod n.
    let d_rot = rotations(&mut rng, 2, n, true);
    let j_rot = rotations(&mut rng, 4, n, false);
    let b_rot = rotations(&mut rng, 1, n, false);

    // Inverse placement: host k shows question (k - r) mod n.
    let inv = |k: usize, r: usize| (k + n - r) % n;

    let bridge_sentence =
        |i: usize| format!("meanwhile {} kept the ledgers beside {} quietly.", subjects[i], bridges[i]);
    let answer_sentence = |i: usize| {
        format!(
            "later {} finally went to settle near {} after the long war.",
            bridges[i], answers[i]
        )
    };
    let distractor =
        |i: usize| format!("people asked where {} would wander before the war.", subjects[i]);
    let junk = |i: usize| format!("old records list {} among quiet travelers.", subjects[i]);
    let bridge_junk = |i: usize| format!("old ledgers name {} among the crews.", bridges[i]);
    let filler = "a travel column asked where anyone would finally settle after the long war.";

    let mut passages = Vec::with_capacity(2 * n);
    let mut sentence_id = 0u32;
    let mut gold: Vec<(u32, u32)> = vec![(0, 0); n];
    for k in 0..n {
        // Bridge host for question k.
        let texts = [
            bridge_sentence(k),
            distractor(inv(k, d_rot[0])),
            distractor(inv(k, d_rot[1])),
            filler.to_string(),
        ];
        gold[k].0 = sentence_id;
        sentence_id += texts.len() as u32;
        passages.push(RawPassage {
            id: format!("hop1-{k}"),
            title: None,
            text: texts.join(" "),
        });

        // Answer host for question k.
        let texts = [
            answer_sentence(k),
            junk(inv(k, j_rot[0])),
            junk(inv(k, j_rot[1])),
            junk(inv(k, j_rot[2])),
            junk(inv(k, j_rot[3])),
            bridge_junk(inv(k, b_rot[0])),
        ];
        gold[k].1 = sentence_id;
        sentence_id += texts.len() as u32;
        passages.push(RawPassage {
            id: format!("hop2-{k}"),
            title: None,
            text: texts.join(" "),
        });
    }

    let items = (0..n)
        .map(|i| QaItem {
            question: format!(
                "where did the partner of {} finally settle after the long war?",
                subjects[i]
            ),
            answers: vec![answers[i].clone()],
            question_type: Some(
                if i % 2 == 0 { "compositional" } else { "comparison" }.to_string(),
            ),
            gold_support_ids: Some(vec![gold[i].0, gold[i].1]),
        })
        .collect();
    (passages, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::AdapterRegistry;
    use crate::graph::build_graph;

    #[test]
    fn benchmark_structure_is_consistent() {
        let (corpus, items) = two_hop_benchmark(&TwoHopSpec {
            questions: 20,
            seed: 0,
        });
        assert_eq!(corpus.len(), 40);
        assert_eq!(items.len(), 20);

        let reg = AdapterRegistry::doubles(0);
        let graph = build_graph(&corpus, &reg).unwrap();
        assert_eq!(graph.sentences().len(), 200);

        for item in &items {
            let gold = item.gold_support_ids.as_ref().unwrap();
            assert_eq!(gold.len(), 2);
            let bridge = &graph.sentences()[gold[0] as usize];
            let answer_sent = &graph.sentences()[gold[1] as usize];
            assert!(bridge.text.contains("ledgers"), "{}", bridge.text);
            assert!(answer_sent.text.contains("settle near"));
            // The answer name occurs in the answer sentence and nowhere else.
            let answer = &item.answers[0];
            let hits = graph
                .sentences()
                .iter()
                .filter(|s| s.text.contains(answer.as_str()))
                .count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = TwoHopSpec {
            questions: 5,
            seed: 123,
        };
        let (c1, i1) = two_hop_benchmark(&spec);
        let (c2, i2) = two_hop_benchmark(&spec);
        assert_eq!(
            serde_json::to_string(&c1).unwrap(),
            serde_json::to_string(&c2).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&i1).unwrap(),
            serde_json::to_string(&i2).unwrap()
        );
        let (c3, _) = two_hop_benchmark(&TwoHopSpec {
            questions: 5,
            seed: 124,
        });
        assert_ne!(
            serde_json::to_string(&c1).unwrap(),
            serde_json::to_string(&c3).unwrap()
        );
    }
}

//! Seeded synthetic document corpus with link facts embedded in filler text.
//!
//! Each fact reads `link-<A> points to <B>` and lives in exactly one document,
//! past the search snippet window, so a solver has to open the page to read it.
//! Facts chain: the object of hop `h` is the subject of hop `h + 1`.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::token::truncate_words;

pub const SNIPPET_TOKENS: usize = 512;
pub const PAGE_TOKENS: usize = 4096;
pub const DEFAULT_TOPK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactId(pub u32);

impl fmt::Display for FactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

impl std::str::FromStr for FactId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim_start_matches('f').parse().map(FactId)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    pub id: FactId,
    pub chain: usize,
    pub hop: usize,
    pub subject: String,
    pub object: String,
    /// Index into the corpus documents.
    pub doc: usize,
}

impl Fact {
    pub fn key(&self) -> String {
        link_key(&self.subject)
    }

    pub fn text(&self) -> String {
        format!("{} points to {}", self.key(), self.object)
    }
}

pub fn link_key(entity: &str) -> String {
    format!("link-{entity}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub url: String,
    pub body: String,
    pub words: usize,
    terms: HashSet<String>,
}

impl Document {
    fn new(index: usize, body: String) -> Self {
        let doc_id = format!("d{index:05}");
        let url = format!("https://corpus.sim/page/{doc_id}");
        let terms = body.split_whitespace().map(str::to_lowercase).collect();
        let words = body.split_whitespace().count();
        Self { doc_id, url, body, words, terms }
    }

    pub fn contains_term(&self, term: &str) -> bool {
        self.terms.contains(term)
    }

    pub fn snippet(&self) -> &str {
        truncate_words(&self.body, SNIPPET_TOKENS)
    }

    pub fn page(&self) -> &str {
        truncate_words(&self.body, PAGE_TOKENS)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub seed: u64,
    /// Hop count of every fact chain to generate.
    pub chains: Vec<usize>,
    pub distractors: usize,
    pub min_doc_words: usize,
    pub max_doc_words: usize,
}

impl CorpusParams {
    pub fn new(seed: u64, chains: Vec<usize>) -> Self {
        Self { seed, chains, distractors: 8, min_doc_words: 3600, max_doc_words: 6144 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    params: CorpusParams,
    docs: Vec<Document>,
    facts: Vec<Fact>,
    chains: Vec<Vec<FactId>>,
    chain_start: Vec<String>,
    by_id: HashMap<String, usize>,
    by_url: HashMap<String, usize>,
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ven", "tor", "sal", "qui", "ber", "dan", "ro", "fel", "nu", "gar", "zi", "pol", "ith", "mar",
    "ent", "sor", "val",
];

fn vocabulary() -> Vec<String> {
    let mut words = Vec::with_capacity(SYLLABLES.len() * SYLLABLES.len());
    for a in SYLLABLES {
        for b in SYLLABLES {
            words.push(format!("{a}{b}"));
        }
    }
    words
}

impl SyntheticCorpus {
    pub fn generate(params: CorpusParams) -> Self {
        assert!(params.min_doc_words > SNIPPET_TOKENS + 8, "documents must extend past the snippet window");
        assert!(params.min_doc_words <= params.max_doc_words);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let vocab = vocabulary();
        let mut entity_counter = 0usize;
        let mut entity = |rng: &mut ChaCha8Rng| {
            entity_counter += 1;
            let a = SYLLABLES.choose(rng).unwrap();
            let b = SYLLABLES.choose(rng).unwrap();
            format!("{a}{b}-{entity_counter:04}")
        };

        let mut facts = Vec::new();
        let mut chains = Vec::new();
        let mut chain_start = Vec::new();
        for (c, &hops) in params.chains.iter().enumerate() {
            assert!(hops >= 1, "a chain needs at least one hop");
            let mut subject = entity(&mut rng);
            chain_start.push(subject.clone());
            let mut ids = Vec::with_capacity(hops);
            for hop in 0..hops {
                let object = entity(&mut rng);
                let id = FactId(facts.len() as u32);
                facts.push(Fact { id, chain: c, hop, subject: subject.clone(), object: object.clone(), doc: 0 });
                ids.push(id);
                subject = object;
            }
            chains.push(ids);
        }

        // One document per fact plus distractors, in a seeded shuffled order.
        let total_docs = facts.len() + params.distractors;
        let mut slots: Vec<Option<usize>> =
            (0..facts.len()).map(Some).chain((0..params.distractors).map(|_| None)).collect();
        for i in (1..slots.len()).rev() {
            let j = rng.random_range(0..=i);
            slots.swap(i, j);
        }
        let mut docs = Vec::with_capacity(total_docs);
        for (index, slot) in slots.iter().enumerate() {
            let len = rng.random_range(params.min_doc_words..=params.max_doc_words);
            let mut words: Vec<String> = (0..len).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
            if let Some(f) = slot {
                let text = facts[*f].text();
                let fact_words: Vec<String> = text.split_whitespace().map(str::to_string).collect();
                let hi = len.min(PAGE_TOKENS) - fact_words.len();
                let offset = rng.random_range(SNIPPET_TOKENS..=hi);
                words.splice(offset..offset + fact_words.len(), fact_words);
                facts[*f].doc = index;
            }
            docs.push(Document::new(index, words.join(" ")));
        }
        let by_id = docs.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), i)).collect();
        let by_url = docs.iter().enumerate().map(|(i, d)| (d.url.clone(), i)).collect();
        Self { params, docs, facts, chains, chain_start, by_id, by_url }
    }

    pub fn params(&self) -> &CorpusParams {
        &self.params
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn fact(&self, id: FactId) -> Option<&Fact> {
        self.facts.get(id.0 as usize)
    }

    pub fn chains(&self) -> &[Vec<FactId>] {
        &self.chains
    }

    pub fn chain_start(&self, chain: usize) -> &str {
        &self.chain_start[chain]
    }

    pub fn doc_by_id(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn doc_by_url(&self, url: &str) -> Option<usize> {
        self.by_url.get(url).copied()
    }

    /// Ranks documents by the number of distinct query terms they contain, ties
    /// broken by doc id. Documents sharing no term are omitted.
    pub fn rank(&self, query: &str, topk: usize) -> Vec<usize> {
        let mut terms: Vec<String> = query.split_whitespace().map(str::to_lowercase).collect();
        terms.sort();
        terms.dedup();
        let mut scored: Vec<(usize, usize)> = self
            .docs
            .iter()
            .enumerate()
            .filter_map(|(i, d)| {
                let score = terms.iter().filter(|t| d.contains_term(t)).count();
                (score > 0).then_some((score, i))
            })
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| self.docs[a.1].doc_id.cmp(&self.docs[b.1].doc_id)));
        scored.into_iter().take(topk).map(|(_, i)| i).collect()
    }

    /// Documents a solver must open to establish the given facts: each fact's own
    /// document plus those of every earlier hop on its chain.
    pub fn need_set(&self, facts: &[FactId]) -> HashSet<usize> {
        let mut out = HashSet::new();
        for id in facts {
            if let Some(f) = self.fact(*id) {
                for prior in &self.chains[f.chain][..=f.hop] {
                    out.insert(self.facts[prior.0 as usize].doc);
                }
            }
        }
        out
    }

    /// Order-sensitive FNV-64 digest of all document bodies.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for d in &self.docs {
            for b in d.doc_id.bytes().chain(d.body.bytes()) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        format!("{h:016x}")
    }
}

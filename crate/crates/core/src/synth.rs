//! Deterministic synthetic parallel corpora with planted technical terms.
//!
//! The source language is SOV with postpositional particles; the target is
//! SVO with prepositions. General words translate one-to-one. Terms are
//! runs of 2-4 noun-like morphemes whose translations are non-compositional.
//! A fraction of the terms is held out so that test sets can contain terms
//! never seen in training.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Morpheme, ParallelPair, TaggedSentence};
use crate::term_align::PhraseTable;
use crate::{Error, Result};

/// Which terms fill term slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermPool {
    Seen,
    Heldout,
    Any,
    /// Held-out term with this probability, otherwise a seen one.
    Mixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrammarConfig {
    /// Seeds the lexicon; the corpus seed only drives sentence sampling.
    pub lexicon_seed: u64,
    pub n_pronouns: usize,
    pub n_adjectives: usize,
    pub n_adverbs: usize,
    pub n_verbs: usize,
    pub n_nouns: usize,
    pub n_prefixes: usize,
    pub n_suffixes: usize,
    pub n_terms: usize,
    pub heldout_fraction: f64,
    pub max_slots: usize,
    pub term_prob: f64,
    pub adj_prob: f64,
    pub adv_prob: f64,
    /// Zipf exponent for term frequencies.
    pub zipf: f64,
    pub term_pool: TermPool,
    pub distractors_per_term: usize,
    pub with_alignment: bool,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            lexicon_seed: 2016,
            n_pronouns: 8,
            n_adjectives: 20,
            n_adverbs: 8,
            n_verbs: 24,
            n_nouns: 60,
            n_prefixes: 6,
            n_suffixes: 6,
            n_terms: 100,
            heldout_fraction: 0.3,
            max_slots: 3,
            term_prob: 0.6,
            adj_prob: 0.3,
            adv_prob: 0.3,
            zipf: 1.0,
            term_pool: TermPool::Any,
            distractors_per_term: 2,
            with_alignment: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTerm {
    pub source: Vec<Morpheme>,
    pub target: Vec<String>,
    pub heldout: bool,
}

impl SyntheticTerm {
    pub fn source_phrase(&self) -> String {
        self.source.iter().map(|m| m.surface.as_str()).collect::<Vec<_>>().join(" ")
    }

    pub fn target_phrase(&self) -> String {
        self.target.join(" ")
    }
}

/// Everything the generator knows about the two languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grammar {
    pub pronouns: Vec<String>,
    pub adjectives: Vec<String>,
    pub adverbs: Vec<String>,
    pub verbs: Vec<String>,
    /// Source particle for each slot position.
    pub particles: Vec<String>,
    pub period: String,
    /// One-to-one translation of every general word.
    pub word_map: BTreeMap<String, String>,
    pub terms: Vec<SyntheticTerm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub pairs: Vec<ParallelPair>,
    pub phrase_table: PhraseTable,
    pub grammar: Grammar,
}

const CONSONANTS: &[&str] = &["k", "s", "t", "n", "h", "m", "r", "g", "z", "d", "b", "p"];
const VOWELS: &[&str] = &["a", "i", "u", "e", "o"];
const TGT_ONSETS: &[&str] = &["zh", "x", "q", "j", "l", "sh", "ch", "w", "y", "f", "c", "b"];
const TGT_RIMES: &[&str] = &["ang", "ing", "ao", "ou", "ian", "uo", "ei", "an", "en", "ong"];

fn make_words(rng: &mut ChaCha8Rng, n: usize, used: &mut BTreeSet<String>, target: bool) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    let mut syllables = 2;
    let mut attempts = 0;
    while out.len() < n {
        let mut w = String::new();
        for _ in 0..syllables {
            if target {
                w.push_str(TGT_ONSETS.choose(rng).unwrap());
                w.push_str(TGT_RIMES.choose(rng).unwrap());
            } else {
                w.push_str(CONSONANTS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
            }
        }
        if used.insert(w.clone()) {
            out.push(w);
        } else {
            attempts += 1;
            if attempts > 50 {
                syllables += 1;
                attempts = 0;
            }
        }
    }
    out
}

impl Grammar {
    pub fn build(config: &GrammarConfig) -> Result<Self> {
        if config.max_slots == 0 || config.max_slots > 3 {
            return Err(Error::Config("max_slots must be 1..=3".into()));
        }
        if !(0.0..=1.0).contains(&config.heldout_fraction) {
            return Err(Error::Config("heldout_fraction must lie in [0, 1]".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.lexicon_seed);
        let mut src_used = BTreeSet::new();
        let mut tgt_used = BTreeSet::new();
        let mut word_map = BTreeMap::new();

        let mut general = |rng: &mut ChaCha8Rng, n: usize| {
            let src = make_words(rng, n, &mut src_used, false);
            let tgt = make_words(rng, n, &mut tgt_used, true);
            for (s, t) in src.iter().zip(&tgt) {
                word_map.insert(s.clone(), t.clone());
            }
            src
        };
        let pronouns = general(&mut rng, config.n_pronouns.max(1));
        let adjectives = general(&mut rng, config.n_adjectives.max(1));
        let adverbs = general(&mut rng, config.n_adverbs.max(1));
        let verbs = general(&mut rng, config.n_verbs.max(1));
        let particles: Vec<String> = ["ga", "wo", "ni"].iter().map(|s| s.to_string()).collect();
        for (p, t) in particles.iter().zip(["de", "ba", "gei"]) {
            word_map.insert(p.clone(), t.to_string());
        }
        let period = "。".to_string();
        word_map.insert(period.clone(), period.clone());

        let n_nouns = config.n_nouns.max(2);
        let nouns = make_words(&mut rng, n_nouns, &mut src_used, false);
        let prefixes = make_words(&mut rng, config.n_prefixes, &mut src_used, false);
        let suffixes = make_words(&mut rng, config.n_suffixes, &mut src_used, false);
        let heldout_nouns = ((n_nouns as f64 * config.heldout_fraction).round() as usize).min(n_nouns - 1);
        let (seen_nouns, new_nouns) = nouns.split_at(n_nouns - heldout_nouns);

        let n_heldout_terms = (config.n_terms as f64 * config.heldout_fraction).round() as usize;
        let mut terms = Vec::with_capacity(config.n_terms);
        let mut seen_src: BTreeSet<Vec<String>> = BTreeSet::new();
        let mut seen_tgt: BTreeSet<Vec<String>> = BTreeSet::new();
        while terms.len() < config.n_terms {
            let heldout = terms.len() >= config.n_terms - n_heldout_terms && !new_nouns.is_empty();
            let mut source = Vec::new();
            if !prefixes.is_empty() && rng.gen_bool(0.3) {
                source.push(Morpheme::new(prefixes.choose(&mut rng).unwrap().clone(), "prefix"));
            }
            let n_core = rng.gen_range(1..=2);
            let anchor = rng.gen_range(0..n_core);
            for k in 0..n_core {
                let pool = if heldout && k == anchor { new_nouns } else { seen_nouns };
                source.push(Morpheme::new(pool.choose(&mut rng).unwrap().clone(), "noun"));
            }
            if source.len() < 2 || (!suffixes.is_empty() && rng.gen_bool(0.3)) {
                if suffixes.is_empty() {
                    source.push(Morpheme::new(seen_nouns.choose(&mut rng).unwrap().clone(), "noun"));
                } else {
                    source.push(Morpheme::new(suffixes.choose(&mut rng).unwrap().clone(), "suffix"));
                }
            }
            let key: Vec<String> = source.iter().map(|m| m.surface.clone()).collect();
            if seen_src.contains(&key) {
                continue;
            }
            let n_tgt = rng.gen_range(1..=2);
            let target = make_words(&mut rng, n_tgt, &mut tgt_used, true);
            if !seen_tgt.insert(target.clone()) {
                continue;
            }
            seen_src.insert(key);
            terms.push(SyntheticTerm { source, target, heldout });
        }

        Ok(Grammar {
            pronouns,
            adjectives,
            adverbs,
            verbs,
            particles,
            period,
            word_map,
            terms,
        })
    }

    fn translate_word(&self, w: &str) -> &str {
        &self.word_map[w]
    }

    /// Phrase table: every term with probability 1, lower-probability
    /// distractors, and lexical entries for all single morphemes.
    pub fn phrase_table(&self, config: &GrammarConfig, rng: &mut ChaCha8Rng) -> PhraseTable {
        let mut table = PhraseTable::new();
        for (s, t) in &self.word_map {
            table.insert(s, t, 1.0);
        }
        for (i, term) in self.terms.iter().enumerate() {
            table.insert(&term.source_phrase(), &term.target_phrase(), 1.0);
            for _ in 0..config.distractors_per_term {
                let j = rng.gen_range(0..self.terms.len());
                if j != i {
                    let p = (rng.gen_range(5..50) as f64) / 100.0;
                    table.insert(&term.source_phrase(), &self.terms[j].target_phrase(), p);
                }
            }
        }
        // Constituent glosses for compositional fallback.
        let mut glossed = BTreeSet::new();
        for term in &self.terms {
            for (k, m) in term.source.iter().enumerate() {
                if glossed.insert(m.surface.clone()) {
                    let gloss = &term.target[k.min(term.target.len() - 1)];
                    table.insert(&m.surface, gloss, 0.5);
                }
            }
        }
        table
    }

    fn pick_term(&self, pool: TermPool, zipf: f64, rng: &mut ChaCha8Rng) -> usize {
        let heldout = match pool {
            TermPool::Seen => false,
            TermPool::Heldout => true,
            TermPool::Any => rng.gen_bool(self.heldout_share()),
            TermPool::Mixed(p) => rng.gen_bool(p.clamp(0.0, 1.0)),
        };
        let mut candidates: Vec<usize> = (0..self.terms.len()).filter(|&i| self.terms[i].heldout == heldout).collect();
        if candidates.is_empty() {
            candidates = (0..self.terms.len()).collect();
        }
        // Zipf weights by position within the pool.
        let weights: Vec<f64> = (1..=candidates.len()).map(|r| 1.0 / (r as f64).powf(zipf)).collect();
        let total: f64 = weights.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        for (c, w) in candidates.iter().zip(&weights) {
            if x < *w {
                return *c;
            }
            x -= w;
        }
        *candidates.last().unwrap()
    }

    fn heldout_share(&self) -> f64 {
        let h = self.terms.iter().filter(|t| t.heldout).count();
        h as f64 / self.terms.len().max(1) as f64
    }

    /// Samples one sentence pair.
    pub fn sample_pair(&self, config: &GrammarConfig, rng: &mut ChaCha8Rng) -> ParallelPair {
        // Each source token records its target tokens.
        struct Chunk {
            source: Vec<Morpheme>,
            target: Vec<String>,
        }
        let word = |w: &str, pos: &str| Chunk {
            source: vec![Morpheme::new(w, pos)],
            target: vec![self.translate_word(w).to_string()],
        };

        let n_slots = rng.gen_range(1..=config.max_slots);
        let mut slots: Vec<Vec<Chunk>> = Vec::with_capacity(n_slots);
        for s in 0..n_slots {
            let mut chunks = Vec::new();
            if rng.gen_bool(config.adj_prob) {
                chunks.push(word(self.adjectives.choose(rng).unwrap(), "adj"));
            }
            if self.terms.is_empty() || !rng.gen_bool(config.term_prob) {
                chunks.push(word(self.pronouns.choose(rng).unwrap(), "pronoun"));
            } else {
                let t = &self.terms[self.pick_term(config.term_pool, config.zipf, rng)];
                chunks.push(Chunk {
                    source: t.source.clone(),
                    target: t.target.clone(),
                });
            }
            chunks.push(word(&self.particles[s], "particle"));
            slots.push(chunks);
        }
        let mut verb_phrase = Vec::new();
        if rng.gen_bool(config.adv_prob) {
            verb_phrase.push(word(self.adverbs.choose(rng).unwrap(), "adverb"));
        }
        verb_phrase.push(word(self.verbs.choose(rng).unwrap(), "verb"));
        let end = word(&self.period, "symbol");

        // Source: slots, verb phrase, period.
        let mut source_chunks: Vec<&Chunk> = slots.iter().flatten().collect();
        source_chunks.extend(verb_phrase.iter());
        source_chunks.push(&end);

        // Target: first slot, verb phrase, remaining slots, period; inside a
        // slot the particle's translation moves to the front.
        fn slot_target<T>(slot: &[T]) -> impl Iterator<Item = &T> {
            let (particle, rest) = slot.split_last().unwrap();
            std::iter::once(particle).chain(rest)
        }
        let mut target_chunks: Vec<&Chunk> = slot_target(&slots[0]).collect();
        target_chunks.extend(verb_phrase.iter());
        for slot in &slots[1..] {
            target_chunks.extend(slot_target(slot));
        }
        target_chunks.push(&end);

        let mut src_offset = BTreeMap::new();
        let mut source = Vec::new();
        for c in &source_chunks {
            src_offset.insert(*c as *const Chunk, source.len());
            source.extend(c.source.iter().cloned());
        }
        let mut target = Vec::new();
        let mut links = BTreeSet::new();
        for c in &target_chunks {
            let s0 = src_offset[&(*c as *const Chunk)];
            let t0 = target.len();
            let (ns, nt) = (c.source.len(), c.target.len());
            for i in 0..ns {
                // Surjective onto the target tokens when ns >= nt.
                links.insert((s0 + i, t0 + (i * nt) / ns));
            }
            for j in 0..nt {
                links.insert((s0 + (j * ns) / nt, t0 + j));
            }
            target.extend(c.target.iter().map(|t| Morpheme::new(t.clone(), "word")));
        }
        ParallelPair {
            source: TaggedSentence::new(source),
            target: TaggedSentence::new(target),
            word_alignment: config.with_alignment.then_some(links),
        }
    }
}

/// Generates `n_pairs` sentence pairs plus the phrase table and term
/// lexicon. Identical `(seed, n_pairs, config)` give identical output.
pub fn generate_synthetic_corpus(seed: u64, n_pairs: i64, config: &GrammarConfig) -> Result<SyntheticCorpus> {
    if n_pairs < 0 {
        return Err(Error::Config(format!("n_pairs must be non-negative, got {n_pairs}")));
    }
    let grammar = Grammar::build(config)?;
    let mut table_rng = ChaCha8Rng::seed_from_u64(config.lexicon_seed ^ 0x7ab1e);
    let phrase_table = grammar.phrase_table(config, &mut table_rng);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n_pairs).map(|_| grammar.sample_pair(config, &mut rng)).collect();
    Ok(SyntheticCorpus {
        pairs,
        phrase_table,
        grammar,
    })
}

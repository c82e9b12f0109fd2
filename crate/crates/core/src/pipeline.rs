//! End-to-end flows: training-corpus preprocessing, decoding with term
//! tokens, and n-best reranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Morpheme, ParallelPair, TaggedSentence, Vocabulary, UNK};
use crate::nmt::{beam_decode, init_model, train_with_callback, with_eos, Checkpoint, EvalPoint, IdPair, NmtConfig, TrainHistory};
use crate::rerank::{combine_and_rank, rescore_candidates, NmtScoreNorm, RankedCandidate};
use crate::smt_bridge::{translate_term, NBestEntry};
use crate::term_align::{identify_pair_phrase_table, identify_term_pairs_with_outcomes, AlignConfig, PairMethod, PhraseTable, TermOutcome};
use crate::term_extract::{extract_candidate_terms, ExtractConfig};
use crate::token_sub::{restore_tokens, tokenize_candidate, tokenize_source, tokenize_training_pair, TokenizedPair};
use crate::{Error, Result};

/// Per-occurrence counts of how extracted source terms were paired.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairingStats {
    pub pairs: usize,
    pub terms: usize,
    pub step1: usize,
    pub step2: usize,
    pub unmatched: usize,
    /// Included in `unmatched`.
    pub conflicts: usize,
}

impl PairingStats {
    fn record(&mut self, outcome: TermOutcome) {
        self.terms += 1;
        match outcome {
            TermOutcome::Paired(PairMethod::PhraseTable) | TermOutcome::Repeat(PairMethod::PhraseTable) => self.step1 += 1,
            TermOutcome::Paired(PairMethod::WordAlignment) | TermOutcome::Repeat(PairMethod::WordAlignment) => self.step2 += 1,
            TermOutcome::Unmatched => self.unmatched += 1,
            TermOutcome::Conflict => {
                self.unmatched += 1;
                self.conflicts += 1;
            }
        }
    }
}

/// One line of the term dictionary written by preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryEntry {
    pub source: String,
    pub target: String,
    pub method: PairMethod,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub tokenized: Vec<TokenizedPair>,
    pub stats: PairingStats,
    pub dictionary: Vec<DictionaryEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub extract: ExtractConfig,
    pub align: AlignConfig,
    pub num_placeholders: usize,
    /// When false, terms are extracted and counted but never replaced.
    pub substitute: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            extract: ExtractConfig::default(),
            align: AlignConfig::default(),
            num_placeholders: crate::corpus::DEFAULT_PLACEHOLDERS,
            substitute: true,
        }
    }
}

/// Extracts terms, pairs them, and tokenizes every pair.
pub fn preprocess(pairs: &[ParallelPair], table: &PhraseTable, config: &PreprocessConfig) -> Preprocessed {
    let mut stats = PairingStats::default();
    let mut dict: BTreeMap<(String, String, PairMethod), usize> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut tokenized = Vec::with_capacity(pairs.len());
    for (n, pair) in pairs.iter().enumerate() {
        stats.pairs += 1;
        let terms = extract_candidate_terms(&pair.source, &config.extract);
        let (term_pairs, outcomes) = identify_term_pairs_with_outcomes(pair, &terms, table, &config.align);
        outcomes.into_iter().for_each(|o| stats.record(o));
        for tp in &term_pairs {
            let key = (tp.source_span.tokens(&pair.source).join(" "), tp.target_surface.clone(), tp.method);
            *dict.entry(key).or_insert(0) += 1;
        }
        if config.substitute {
            let t = tokenize_training_pair(pair, &term_pairs, config.num_placeholders);
            warnings.extend(t.warnings.into_iter().map(|w| format!("pair {}: {w}", n + 1)));
            tokenized.push(t.value);
        } else {
            tokenized.push(TokenizedPair {
                source_tokens: pair.source.surfaces().into_iter().map(String::from).collect(),
                target_tokens: Some(pair.target.surfaces().into_iter().map(String::from).collect()),
                term_map: BTreeMap::new(),
            });
        }
    }
    let dictionary = dict
        .into_iter()
        .map(|((source, target, method), count)| DictionaryEntry { source, target, method, count })
        .collect();
    Preprocessed {
        tokenized,
        stats,
        dictionary,
        warnings,
    }
}

fn target_of(p: &TokenizedPair) -> &[String] {
    p.target_tokens.as_deref().unwrap_or(&[])
}

/// Source and target vocabularies over tokenized pairs.
pub fn build_vocabularies(
    tokenized: &[TokenizedPair],
    source_cap: usize,
    target_cap: usize,
    num_placeholders: usize,
) -> Result<(Vocabulary, Vocabulary)> {
    let src = Vocabulary::build(tokenized.iter().map(|p| p.source_tokens.iter()), source_cap, num_placeholders)?;
    let tgt = Vocabulary::build(tokenized.iter().map(|p| target_of(p).iter()), target_cap, num_placeholders)?;
    Ok((src, tgt))
}

/// Maps tokenized pairs to ids; targets get a closing EOS.
pub fn to_id_pairs(tokenized: &[TokenizedPair], source_vocab: &Vocabulary, target_vocab: &Vocabulary) -> Vec<IdPair> {
    tokenized
        .iter()
        .map(|p| (source_vocab.encode(&p.source_tokens), with_eos(&target_vocab.encode(target_of(p)))))
        .collect()
}

/// Builds vocabularies capped at `config.source_vocab`/`config.target_vocab`,
/// shrinks the model to the actual vocabulary sizes, and trains.
pub fn train_checkpoint(
    config: &NmtConfig,
    num_placeholders: usize,
    train_set: &[TokenizedPair],
    dev_set: &[TokenizedPair],
    on_eval: impl FnMut(&EvalPoint),
) -> Result<(Checkpoint, TrainHistory)> {
    use rand::SeedableRng;
    let (sv, tv) = build_vocabularies(train_set, config.source_vocab, config.target_vocab, num_placeholders)?;
    let mut cfg = config.clone();
    cfg.source_vocab = sv.len();
    cfg.target_vocab = tv.len();
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(&cfg, &mut rng)?;
    let train_ids = to_id_pairs(train_set, &sv, &tv);
    let dev_ids = to_id_pairs(dev_set, &sv, &tv);
    let history = train_with_callback(&mut model, &train_ids, &dev_ids, on_eval)?;
    Ok((Checkpoint::new(model, sv, tv), history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub extract: ExtractConfig,
    pub num_placeholders: usize,
    pub substitute: bool,
    pub beam_size: usize,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        let nmt = NmtConfig::default();
        DecodeConfig {
            extract: ExtractConfig::default(),
            num_placeholders: crate::corpus::DEFAULT_PLACEHOLDERS,
            substitute: true,
            beam_size: nmt.beam_size,
            max_len: nmt.max_decode_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermTranslation {
    pub index: usize,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Translation {
    pub text: String,
    /// Source tokens fed to the model.
    pub source_tokens: Vec<String>,
    /// Raw model output before restoration.
    pub output_tokens: Vec<String>,
    pub unknown_tokens: usize,
    pub terms: Vec<TermTranslation>,
    pub logprob: f64,
    pub finished: bool,
    pub warnings: Vec<String>,
}

/// Tokenize, decode, translate terms with the phrase table, restore.
pub fn translate_sentence(
    checkpoint: &Checkpoint,
    table: &PhraseTable,
    sentence: &TaggedSentence,
    config: &DecodeConfig,
) -> Result<Translation> {
    let mut warnings = Vec::new();
    let (source_tokens, listed) = if config.substitute {
        let terms = extract_candidate_terms(sentence, &config.extract);
        let t = tokenize_source(sentence, &terms, config.num_placeholders);
        warnings.extend(t.warnings);
        t.value
    } else {
        (sentence.surfaces().into_iter().map(String::from).collect(), Vec::new())
    };
    let ids = checkpoint.source_vocab.encode(&source_tokens);
    let beam = beam_decode(&checkpoint.model, &ids, config.beam_size, config.max_len)?;
    let output_tokens = checkpoint.target_vocab.decode(&beam.tokens);
    let unknown_tokens = output_tokens.iter().filter(|t| *t == UNK).count();

    let mut translations = BTreeMap::new();
    let mut terms = Vec::with_capacity(listed.len());
    for (i, span) in listed.iter().enumerate() {
        let constituents = span.tokens(sentence);
        let t = translate_term(&span.surface, &constituents, table);
        warnings.extend(t.warnings);
        translations.insert(i + 1, t.value.clone());
        terms.push(TermTranslation {
            index: i + 1,
            source: constituents.join(" "),
            target: t.value,
        });
    }
    let restored = restore_tokens(&output_tokens, &translations);
    warnings.extend(restored.warnings);
    Ok(Translation {
        text: restored.value,
        source_tokens,
        output_tokens,
        unknown_tokens,
        terms,
        logprob: beam.logprob,
        finished: beam.finished,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RerankConfig {
    pub extract: ExtractConfig,
    pub num_placeholders: usize,
    /// False scores candidates as plain words, for models trained without
    /// term tokens.
    pub substitute: bool,
    pub norm: NmtScoreNorm,
}

impl Default for RerankConfig {
    fn default() -> Self {
        RerankConfig {
            extract: ExtractConfig::default(),
            num_placeholders: crate::corpus::DEFAULT_PLACEHOLDERS,
            substitute: true,
            norm: NmtScoreNorm::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reranked {
    pub sentence_index: usize,
    pub ranked: Vec<RankedCandidate>,
    /// Final sentence of each ranked candidate, in ranked order.
    pub restored: Vec<String>,
    pub warnings: Vec<String>,
}

impl Reranked {
    pub fn best(&self) -> &str {
        &self.restored[0]
    }
}

/// Target-side term translations for one candidate: the most probable
/// phrase-table translation present in the candidate, else the decode-time
/// term translation.
fn candidate_term_map(
    sentence: &TaggedSentence,
    listed: &[crate::term_extract::TermSpan],
    candidate: &[String],
    table: &PhraseTable,
) -> (BTreeMap<usize, String>, Vec<String>) {
    let as_pair = ParallelPair::new(
        sentence.clone(),
        TaggedSentence::new(candidate.iter().map(|t| Morpheme::new(t.clone(), "word")).collect()),
    );
    let mut map = BTreeMap::new();
    let mut warnings = Vec::new();
    for (i, span) in listed.iter().enumerate() {
        let t = match identify_pair_phrase_table(&as_pair, span, table) {
            Some(tp) => tp.target_surface,
            None => {
                let t = translate_term(&span.surface, &span.tokens(sentence), table);
                warnings.extend(t.warnings);
                t.value
            }
        };
        map.insert(i + 1, t);
    }
    (map, warnings)
}

/// Reranks one sentence's n-best group by the mean of SMT and NMT scores.
pub fn rerank_sentence(
    checkpoint: &Checkpoint,
    table: &PhraseTable,
    sentence: &TaggedSentence,
    group: &[NBestEntry],
    config: &RerankConfig,
) -> Result<Reranked> {
    let sentence_index = group.first().map(|e| e.sentence_index).ok_or(Error::Empty("n-best group"))?;
    let terms = if config.substitute {
        extract_candidate_terms(sentence, &config.extract)
    } else {
        Vec::new()
    };
    let src = tokenize_source(sentence, &terms, config.num_placeholders);
    let mut warnings = src.warnings;
    let (source_tokens, listed) = src.value;
    let source_ids = checkpoint.source_vocab.encode(&source_tokens);

    let mut tokenized = Vec::with_capacity(group.len());
    let mut maps = Vec::with_capacity(group.len());
    for entry in group {
        let (map, w) = candidate_term_map(sentence, &listed, &entry.candidate_tokens, table);
        warnings.extend(w);
        let t = tokenize_candidate(&entry.candidate_tokens, &map);
        warnings.extend(t.warnings);
        tokenized.push(t.value);
        maps.push(map);
    }
    let candidate_ids: Vec<Vec<usize>> = tokenized
        .iter()
        .map(|t| with_eos(&checkpoint.target_vocab.encode(t)))
        .collect();
    let nmt = rescore_candidates(&checkpoint.model, &source_ids, &candidate_ids)?;
    let ranked = combine_and_rank(group, &nmt, config.norm)?;
    let restored = ranked
        .iter()
        .map(|r| {
            let i = r.smt_rank - 1;
            let out = restore_tokens(&tokenized[i], &maps[i]);
            out.value
        })
        .collect();
    Ok(Reranked {
        sentence_index,
        ranked,
        restored,
        warnings,
    })
}

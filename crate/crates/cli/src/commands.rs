use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use termnmt::corpus::{load_tagged_corpus, load_tagged_sentences, write_corpus, ParallelPair, TaggedSentence};
use termnmt::eval::evaluate;
use termnmt::nmt::Checkpoint;
use termnmt::pipeline::{preprocess, rerank_sentence, train_checkpoint, translate_sentence};
use termnmt::smt_bridge::{group_nbest, load_nbest, write_nbest, NBestEntry};
use termnmt::synth::{generate_synthetic_corpus, Grammar, GrammarConfig, SyntheticCorpus};
use termnmt::term_align::{find_subsequence, load_phrase_table, PhraseTable};
use termnmt::term_extract::extract_candidate_terms;
use termnmt::token_sub::TokenizedPair;

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::Manifest;

type Result<T> = std::result::Result<T, CliError>;

/// Checks every required input up front so a run fails before doing work.
fn require<const N: usize>(inputs: [(&str, &Option<PathBuf>); N]) -> Result<[PathBuf; N]> {
    let mut missing = Vec::new();
    for (key, p) in &inputs {
        match p {
            None => missing.push(format!("paths.{key} is not set")),
            Some(p) if !p.is_file() => missing.push(format!("paths.{key} = {} does not exist", p.display())),
            Some(_) => {}
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Missing(missing.join("; ")));
    }
    Ok(inputs.map(|(_, p)| p.clone().expect("checked")))
}

fn optional(key: &str, p: &Option<PathBuf>) -> Result<Option<PathBuf>> {
    match p {
        Some(p) if !p.is_file() => Err(CliError::Missing(format!("paths.{key} = {} does not exist", p.display()))),
        other => Ok(other.clone()),
    }
}

fn read(m: &mut Manifest, role: &str, path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    m.input(role, path, &bytes);
    Ok(bytes)
}

fn load_corpus(m: &mut Manifest, role: &str, path: &Path, cfg: &PipelineConfig) -> Result<(Vec<ParallelPair>, usize)> {
    let bytes = read(m, role, path)?;
    let loaded = load_tagged_corpus(&bytes[..], &cfg.corpus_format()).map_err(|e| CliError::input(path, e))?;
    Ok((loaded.pairs, loaded.long_lines.len()))
}

fn load_table(m: &mut Manifest, path: &Path, cfg: &PipelineConfig) -> Result<PhraseTable> {
    let bytes = read(m, "phrase_table", path)?;
    load_phrase_table(&bytes[..], &cfg.table_format()).map_err(|e| CliError::input(path, e))
}

fn load_sources(m: &mut Manifest, path: &Path) -> Result<Vec<TaggedSentence>> {
    let bytes = read(m, "input", path)?;
    load_tagged_sentences(&bytes[..]).map_err(|e| CliError::input(path, e))
}

fn load_checkpoint(m: &mut Manifest, path: &Path) -> Result<Checkpoint> {
    let bytes = read(m, "checkpoint", path)?;
    Checkpoint::read(&bytes[..]).map_err(|e| CliError::input(path, e))
}

fn lines(items: impl IntoIterator<Item = String>) -> String {
    let mut out = String::new();
    for l in items {
        out.push_str(&l);
        out.push('\n');
    }
    out
}

fn json_bytes(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s.into_bytes()
}

/// `source tokens<TAB>target tokens`, one pair per line.
pub fn write_tokenized(pairs: &[TokenizedPair]) -> String {
    lines(pairs.iter().map(|p| {
        format!(
            "{}\t{}",
            p.source_tokens.join(" "),
            p.target_tokens.as_deref().unwrap_or(&[]).join(" ")
        )
    }))
}

pub fn parse_tokenized(text: &str, path: &Path) -> Result<Vec<TokenizedPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (src, tgt) = line
            .split_once('\t')
            .ok_or_else(|| CliError::input(path, format!("line {}: expected source<TAB>target", i + 1)))?;
        out.push(TokenizedPair {
            source_tokens: src.split_whitespace().map(String::from).collect(),
            target_tokens: Some(tgt.split_whitespace().map(String::from).collect()),
            term_map: Default::default(),
        });
    }
    Ok(out)
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// One perturbation of `tokens`; the closing symbol stays in place.
fn perturb(tokens: &[String], distractors: &[(Vec<String>, Vec<String>)], rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut t = tokens.to_vec();
    let body = t.len().saturating_sub(1);
    match rng.gen_range(0..4) {
        0 if body >= 2 => {
            let i = rng.gen_range(0..body - 1);
            t.swap(i, i + 1);
        }
        1 if body >= 2 => {
            t.remove(rng.gen_range(0..body));
        }
        2 if body >= 1 => {
            let i = rng.gen_range(0..body);
            t.insert(i, t[i].clone());
        }
        _ => {
            let present: Vec<_> = distractors
                .iter()
                .filter_map(|(from, to)| find_subsequence(&t, from).map(|s| (s, from.len(), to)))
                .collect();
            if let Some(&(s, len, to)) = present.choose(rng) {
                t.splice(s..s + len, to.iter().cloned());
            }
        }
    }
    t
}

/// A synthetic SMT n-best list: the reference plus perturbed copies, with
/// random two-feature scores, sorted best first.
fn synthetic_nbest(corpus: &SyntheticCorpus, size: usize, seed: u64) -> Vec<NBestEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e_be57);
    let g: &Grammar = &corpus.grammar;
    // (term translation, another table translation of the same term)
    let mut distractors = Vec::new();
    for term in &g.terms {
        let key: Vec<&str> = term.source.iter().map(|m| m.surface.as_str()).collect();
        for (cand, _) in corpus.phrase_table.term_candidates(&key) {
            let cand: Vec<String> = cand.split_whitespace().map(String::from).collect();
            if cand != term.target {
                distractors.push((term.target.clone(), cand));
            }
        }
    }
    let mut out = Vec::new();
    for (idx, pair) in corpus.pairs.iter().enumerate() {
        let reference: Vec<String> = pair.target.surfaces().into_iter().map(String::from).collect();
        let mut cands = vec![reference];
        let mut attempts = 0;
        while cands.len() < size && attempts < size * 20 {
            attempts += 1;
            let base = cands.choose(&mut rng).expect("non-empty").clone();
            let c = perturb(&base, &distractors, &mut rng);
            if !cands.contains(&c) {
                cands.push(c);
            }
        }
        let mut group: Vec<NBestEntry> = cands
            .into_iter()
            .map(|c| {
                let feats = vec![round4(rng.gen_range(-6.0..0.0)), round4(rng.gen_range(-6.0..0.0))];
                NBestEntry {
                    sentence_index: idx,
                    candidate_tokens: c,
                    total_score: round4(feats.iter().sum()),
                    feature_scores: feats,
                }
            })
            .collect();
        group.sort_by(|a, b| b.total_score.total_cmp(&a.total_score));
        out.extend(group);
    }
    out
}

pub fn synth(cfg: &PipelineConfig, m: &mut Manifest) -> Result<serde_json::Value> {
    let s = &cfg.synth;
    let out = &cfg.paths.out_dir;
    let grammar = |pool| GrammarConfig {
        term_pool: pool,
        ..s.grammar.clone()
    };
    let train = generate_synthetic_corpus(cfg.seed, s.train_pairs as i64, &grammar(s.train_pool))?;
    let dev = generate_synthetic_corpus(cfg.seed.wrapping_add(1), s.dev_pairs as i64, &grammar(s.train_pool))?;
    let test = generate_synthetic_corpus(cfg.seed.wrapping_add(2), s.test_pairs as i64, &grammar(s.test_pool))?;

    m.write_output("train_corpus", &out.join("train.tsv"), write_corpus(&train.pairs).as_bytes())?;
    m.write_output("dev_corpus", &out.join("dev.tsv"), write_corpus(&dev.pairs).as_bytes())?;
    m.write_output("test_corpus", &out.join("test.tsv"), write_corpus(&test.pairs).as_bytes())?;
    let src = lines(test.pairs.iter().map(|p| p.source.to_string()));
    m.write_output("test_source", &out.join("test.src"), src.as_bytes())?;
    let refs = lines(test.pairs.iter().map(|p| p.target.surface_text()));
    m.write_output("test_reference", &out.join("test.ref"), refs.as_bytes())?;
    m.write_output("phrase_table", &out.join("phrase-table.txt"), train.phrase_table.to_moses_string().as_bytes())?;
    let nbest = synthetic_nbest(&test, s.nbest_size, cfg.seed);
    m.write_output("test_nbest", &out.join("test.nbest"), write_nbest(&nbest).as_bytes())?;
    let lexicon = lines(train.grammar.terms.iter().map(|t| {
        format!(
            "{}\t{}\t{}",
            t.source_phrase(),
            t.target_phrase(),
            if t.heldout { "heldout" } else { "seen" }
        )
    }));
    m.write_output("term_lexicon", &out.join("lexicon.tsv"), lexicon.as_bytes())?;

    Ok(json!({
        "train_pairs": train.pairs.len(),
        "dev_pairs": dev.pairs.len(),
        "test_pairs": test.pairs.len(),
        "phrase_table_entries": train.phrase_table.len(),
        "terms": train.grammar.terms.len(),
        "heldout_terms": train.grammar.terms.iter().filter(|t| t.heldout).count(),
        "nbest_entries": nbest.len(),
    }))
}

pub fn extract_terms(cfg: &PipelineConfig, m: &mut Manifest) -> Result<serde_json::Value> {
    let [input] = require([("input", &cfg.paths.input)])?;
    let sentences = load_sources(m, &input)?;
    let mut out = String::new();
    let mut count = 0;
    for (i, s) in sentences.iter().enumerate() {
        for span in extract_candidate_terms(s, &cfg.extract) {
            writeln!(out, "{}\t{}\t{}\t{}", i + 1, span.start, span.end, span.surface).expect("string write");
            count += 1;
        }
    }
    m.write_output("terms", &cfg.paths.out_dir.join("terms.tsv"), out.as_bytes())?;
    Ok(json!({ "sentences": sentences.len(), "terms": count }))
}

pub fn preprocess_cmd(cfg: &PipelineConfig, m: &mut Manifest) -> Result<serde_json::Value> {
    let [corpus, table_path] = require([("corpus", &cfg.paths.corpus), ("phrase_table", &cfg.paths.phrase_table)])?;
    let dev_path = optional("dev_corpus", &cfg.paths.dev_corpus)?;
    let out = &cfg.paths.out_dir;
    let (pairs, long) = load_corpus(m, "corpus", &corpus, cfg)?;
    let table = load_table(m, &table_path, cfg)?;
    let pc = cfg.preprocess_config();

    let p = preprocess(&pairs, &table, &pc);
    m.write_output("train_tokens", &out.join("train.tok.tsv"), write_tokenized(&p.tokenized).as_bytes())?;
    let dict = lines(p.dictionary.iter().map(|d| {
        let method = serde_json::to_value(d.method).expect("enum");
        format!("{}\t{}\t{}\t{}", d.source, d.target, method.as_str().unwrap_or(""), d.count)
    }));
    m.write_output("term_dictionary", &out.join("term-dictionary.tsv"), dict.as_bytes())?;

    let mut dev_stats = None;
    if let Some(dev_path) = dev_path {
        let (dev_pairs, _) = load_corpus(m, "dev_corpus", &dev_path, cfg)?;
        let d = preprocess(&dev_pairs, &table, &pc);
        m.write_output("dev_tokens", &out.join("dev.tok.tsv"), write_tokenized(&d.tokenized).as_bytes())?;
        dev_stats = Some(d.stats);
    }
    let stats = json!({
        "train": p.stats,
        "dev": dev_stats,
        "long_sentences": long,
        "warnings": p.warnings,
    });
    m.write_output("stats", &out.join("preprocess-stats.json"), &json_bytes(&stats))?;
    Ok(json!({
        "pairs": p.stats.pairs,
        "terms": p.stats.terms,
        "step1": p.stats.step1,
        "step2": p.stats.step2,
        "unmatched": p.stats.unmatched,
        "dictionary_entries": p.dictionary.len(),
        "warnings": p.warnings.len(),
    }))
}

pub fn train(cfg: &PipelineConfig, m: &mut Manifest, progress: bool) -> Result<serde_json::Value> {
    let [train_path] = require([("train_tokens", &cfg.paths.train_tokens)])?;
    let dev_path = optional("dev_tokens", &cfg.paths.dev_tokens)?;
    let out = &cfg.paths.out_dir;
    let text = String::from_utf8(read(m, "train_tokens", &train_path)?).map_err(|e| CliError::input(&train_path, e))?;
    let train_set = parse_tokenized(&text, &train_path)?;
    let dev_set = match &dev_path {
        Some(p) => {
            let text = String::from_utf8(read(m, "dev_tokens", p)?).map_err(|e| CliError::input(p, e))?;
            parse_tokenized(&text, p)?
        }
        None => Vec::new(),
    };
    let (ck, history) = train_checkpoint(&cfg.nmt, cfg.terms.num_placeholders, &train_set, &dev_set, |e| {
        if progress {
            eprintln!("batch {:>6}  dev ppl {:>10.4}  lr {:.6}", e.batch, e.dev_perplexity, e.lr);
        }
    })?;
    let ck_path = cfg.paths.checkpoint.clone().unwrap_or_else(|| out.join("model.json"));
    let mut bytes = Vec::new();
    ck.write(&mut bytes)?;
    m.write_output("checkpoint", &ck_path, &bytes)?;
    m.write_output("history", &out.join("train-history.json"), &json_bytes(&history))?;
    Ok(json!({
        "pairs": train_set.len(),
        "dev_pairs": dev_set.len(),
        "epochs": history.epoch_losses.len(),
        "final_epoch_loss": history.epoch_losses.last(),
        "final_dev_perplexity": history.evals.last().map(|e| e.dev_perplexity),
        "final_lr": history.final_lr,
        "parameters": ck.model.num_parameters(),
        "source_vocab": ck.source_vocab.len(),
        "target_vocab": ck.target_vocab.len(),
    }))
}

pub fn translate(cfg: &PipelineConfig, m: &mut Manifest) -> Result<serde_json::Value> {
    let [input, ck_path] = require([("input", &cfg.paths.input), ("checkpoint", &cfg.paths.checkpoint)])?;
    let table_path = if cfg.terms.substitute {
        let [p] = require([("phrase_table", &cfg.paths.phrase_table)])?;
        Some(p)
    } else {
        optional("phrase_table", &cfg.paths.phrase_table)?
    };
    let ck = load_checkpoint(m, &ck_path)?;
    let table = match table_path {
        Some(p) => load_table(m, &p, cfg)?,
        None => PhraseTable::new(),
    };
    let sentences = load_sources(m, &input)?;
    let dc = cfg.decode_config();

    let mut text = Vec::with_capacity(sentences.len());
    let mut diag = String::new();
    let (mut unknown, mut terms, mut unfinished, mut warnings) = (0, 0, 0, 0);
    for (i, s) in sentences.iter().enumerate() {
        let t = translate_sentence(&ck, &table, s, &dc)?;
        unknown += t.unknown_tokens;
        terms += t.terms.len();
        unfinished += usize::from(!t.finished);
        warnings += t.warnings.len();
        let mut record = serde_json::to_value(&t).expect("serializes");
        record["index"] = json!(i);
        diag.push_str(&record.to_string());
        diag.push('\n');
        text.push(t.text);
    }
    let out = &cfg.paths.out_dir;
    m.write_output("translations", &out.join("translations.txt"), lines(text).as_bytes())?;
    m.write_output("diagnostics", &out.join("translate-diagnostics.jsonl"), diag.as_bytes())?;
    Ok(json!({
        "sentences": sentences.len(),
        "unknown_tokens": unknown,
        "terms": terms,
        "unfinished": unfinished,
        "warnings": warnings,
    }))
}

pub fn rerank(cfg: &PipelineConfig, m: &mut Manifest) -> Result<serde_json::Value> {
    let [input, nbest_path, ck_path, table_path] = require([
        ("input", &cfg.paths.input),
        ("nbest", &cfg.paths.nbest),
        ("checkpoint", &cfg.paths.checkpoint),
        ("phrase_table", &cfg.paths.phrase_table),
    ])?;
    let ck = load_checkpoint(m, &ck_path)?;
    let table = load_table(m, &table_path, cfg)?;
    let sentences = load_sources(m, &input)?;
    let bytes = read(m, "nbest", &nbest_path)?;
    let entries = load_nbest(&bytes[..]).map_err(|e| CliError::input(&nbest_path, e))?;
    let groups = group_nbest(&entries);
    if groups.len() != sentences.len() {
        return Err(CliError::Mismatch(format!(
            "{} n-best groups for {} source sentences",
            groups.len(),
            sentences.len()
        )));
    }
    for (i, (idx, _)) in groups.iter().enumerate() {
        if i != *idx {
            return Err(CliError::Mismatch(format!(
                "n-best group {} has sentence index {idx}; expected one group per source line numbered from 0",
                i + 1
            )));
        }
    }

    let rc = cfg.rerank_config();
    let mut table_out = String::new();
    let mut best = Vec::with_capacity(groups.len());
    let mut warnings = String::new();
    let mut changed = 0;
    for (idx, group) in &groups {
        let r = rerank_sentence(&ck, &table, &sentences[*idx], group, &rc)?;
        for (c, restored) in r.ranked.iter().zip(&r.restored) {
            writeln!(
                table_out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                idx, c.rank, c.entry.total_score, c.nmt_score, c.combined, restored
            )
            .expect("string write");
        }
        changed += usize::from(r.ranked[0].smt_rank != 1);
        for w in &r.warnings {
            writeln!(warnings, "{idx}\t{w}").expect("string write");
        }
        best.push(r.best().to_string());
    }
    let out = &cfg.paths.out_dir;
    m.write_output("ranked", &out.join("rerank.tsv"), table_out.as_bytes())?;
    m.write_output("best", &out.join("rerank.best.txt"), lines(best).as_bytes())?;
    m.write_output("warnings", &out.join("rerank-warnings.tsv"), warnings.as_bytes())?;
    Ok(json!({
        "sentences": groups.len(),
        "candidates": entries.len(),
        "top1_changed": changed,
        "warnings": warnings.lines().count(),
    }))
}

fn tokenized_lines(bytes: &[u8], path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::input(path, e))?;
    Ok(text.lines().map(|l| l.split_whitespace().map(String::from).collect()).collect())
}

pub fn evaluate_cmd(cfg: &PipelineConfig, m: &mut Manifest) -> Result<serde_json::Value> {
    let [hyp_path, ref_path] = require([("hypotheses", &cfg.paths.hypotheses), ("references", &cfg.paths.references)])?;
    let hyps = tokenized_lines(&read(m, "hypotheses", &hyp_path)?, &hyp_path)?;
    let refs = tokenized_lines(&read(m, "references", &ref_path)?, &ref_path)?;
    let report = evaluate(&hyps, &refs)?;
    m.write_output("report", &cfg.paths.out_dir.join("eval.json"), &json_bytes(&report))?;
    Ok(json!({ "bleu": report.bleu, "ribes": report.ribes, "sentences": report.sentences }))
}

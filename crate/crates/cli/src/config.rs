//! Pipeline configuration: one TOML file, `--set key=value` overrides, then
//! per-command flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use termnmt::corpus::{CorpusFormat, DEFAULT_MAX_LEN, DEFAULT_PLACEHOLDERS};
use termnmt::nmt::NmtConfig;
use termnmt::pipeline::{DecodeConfig, PreprocessConfig, RerankConfig};
use termnmt::rerank::NmtScoreNorm;
use termnmt::synth::{GrammarConfig, TermPool};
use termnmt::term_align::{AlignConfig, PhraseTableFormat};
use termnmt::term_extract::ExtractConfig;

use crate::error::CliError;

/// Input and output locations. Relative paths in a config file resolve
/// against the file's directory; paths given as flags resolve against the
/// working directory. An unset path falls back to the file of the same role
/// in `out_dir` when that file exists, so commands chain on one directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub dev_corpus: Option<PathBuf>,
    pub phrase_table: Option<PathBuf>,
    /// Tokenized corpora written by `preprocess`.
    pub train_tokens: Option<PathBuf>,
    pub dev_tokens: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Tagged source sentences for `extract-terms`, `translate`, `rerank`.
    pub input: Option<PathBuf>,
    pub nbest: Option<PathBuf>,
    pub hypotheses: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            dev_corpus: None,
            phrase_table: None,
            train_tokens: None,
            dev_tokens: None,
            checkpoint: None,
            input: None,
            nbest: None,
            hypotheses: None,
            references: None,
            out_dir: PathBuf::from("."),
        }
    }
}

impl Paths {
    fn all_mut(&mut self) -> [&mut Option<PathBuf>; 10] {
        [
            &mut self.corpus,
            &mut self.dev_corpus,
            &mut self.phrase_table,
            &mut self.train_tokens,
            &mut self.dev_tokens,
            &mut self.checkpoint,
            &mut self.input,
            &mut self.nbest,
            &mut self.hypotheses,
            &mut self.references,
        ]
    }

    /// Fills unset paths with the standard names in `out_dir` that exist.
    pub fn fill_defaults(&mut self) {
        let names = [
            "train.tsv",
            "dev.tsv",
            "phrase-table.txt",
            "train.tok.tsv",
            "dev.tok.tsv",
            "model.json",
            "test.src",
            "test.nbest",
            "translations.txt",
            "test.ref",
        ];
        let out = self.out_dir.clone();
        for (slot, name) in self.all_mut().into_iter().zip(names) {
            let candidate = out.join(name);
            if slot.is_none() && candidate.is_file() {
                *slot = Some(candidate);
            }
        }
    }

    fn rebase(&mut self, dir: &Path) {
        for p in self.all_mut().into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        if self.out_dir.is_relative() {
            self.out_dir = dir.join(&self.out_dir);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Longer sentences are kept but reported.
    pub max_len: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection { max_len: DEFAULT_MAX_LEN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermsSection {
    /// K, the number of `TT_i` placeholders.
    pub num_placeholders: usize,
    /// False runs the plain-NMT baseline.
    pub substitute: bool,
    /// Score column of the phrase table holding P(target | source).
    pub prob_column: usize,
}

impl Default for TermsSection {
    fn default() -> Self {
        TermsSection {
            num_placeholders: DEFAULT_PLACEHOLDERS,
            substitute: true,
            prob_column: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RerankSection {
    pub norm: NmtScoreNorm,
}

impl Default for RerankSection {
    fn default() -> Self {
        RerankSection { norm: NmtScoreNorm::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub train_pairs: usize,
    pub dev_pairs: usize,
    pub test_pairs: usize,
    /// Terms in train and dev come from this pool.
    pub train_pool: TermPool,
    pub test_pool: TermPool,
    /// Candidates per sentence in the synthetic n-best list.
    pub nbest_size: usize,
    pub grammar: GrammarConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            train_pairs: 2000,
            dev_pairs: 100,
            test_pairs: 200,
            train_pool: TermPool::Seen,
            test_pool: TermPool::Mixed(0.5),
            nbest_size: 5,
            grammar: GrammarConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Drives synthesis and model initialization; copied into `nmt.seed`.
    pub seed: u64,
    pub corpus: CorpusSection,
    pub terms: TermsSection,
    pub extract: ExtractConfig,
    pub align: AlignConfig,
    pub nmt: NmtConfig,
    pub rerank: RerankSection,
    pub synth: SynthSection,
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        // Vocabulary sizes are caps; the model shrinks to the real vocabulary.
        let mut nmt = NmtConfig::desk_scale(40_000, 40_000);
        nmt.epochs = 20;
        nmt.beam_size = 4;
        nmt.max_decode_len = 40;
        PipelineConfig {
            seed: nmt.seed,
            corpus: CorpusSection::default(),
            terms: TermsSection::default(),
            extract: ExtractConfig::default(),
            align: AlignConfig::default(),
            nmt,
            rerank: RerankSection::default(),
            synth: SynthSection::default(),
            paths: Paths::default(),
        }
    }
}

/// Parses `key.path=value`; values that are not TOML literals are strings.
fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{raw}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("override `{raw}` has an empty key segment")));
    }
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((path, parsed))
}

fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut table = root;
    for seg in parents {
        let entry = table
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{}` is not a table", path.join("."))))?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

impl PipelineConfig {
    /// Reads `file` (or defaults), applies overrides, rebases file paths.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match file {
            Some(f) => {
                let text = std::fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
                toml::from_str::<toml::Table>(&text)
                    .map_err(|e| CliError::Config(format!("{}: {}", f.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (path, value) = parse_override(o)?;
            apply_override(&mut table, &path, value)?;
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        if let Some(dir) = file.and_then(Path::parent) {
            cfg.paths.rebase(dir);
        }
        cfg.nmt.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Settings with file locations removed, so moving files around does not
    /// change the hash.
    pub fn experiment_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("paths");
        }
        v
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&self.experiment_json()).expect("json");
        format!("sha256:{:x}", Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.nmt.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.synth.nbest_size == 0 {
            return Err(CliError::Config("synth.nbest_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn corpus_format(&self) -> CorpusFormat {
        CorpusFormat {
            max_len: self.corpus.max_len,
        }
    }

    pub fn table_format(&self) -> PhraseTableFormat {
        PhraseTableFormat {
            prob_column: self.terms.prob_column,
        }
    }

    pub fn preprocess_config(&self) -> PreprocessConfig {
        PreprocessConfig {
            extract: self.extract.clone(),
            align: self.align,
            num_placeholders: self.terms.num_placeholders,
            substitute: self.terms.substitute,
        }
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            extract: self.extract.clone(),
            num_placeholders: self.terms.num_placeholders,
            substitute: self.terms.substitute,
            beam_size: self.nmt.beam_size,
            max_len: self.nmt.max_decode_len,
        }
    }

    pub fn rerank_config(&self) -> RerankConfig {
        RerankConfig {
            extract: self.extract.clone(),
            num_placeholders: self.terms.num_placeholders,
            substitute: self.terms.substitute,
            norm: self.rerank.norm,
        }
    }
}

//! POS-tagged parallel corpora and frequency-capped vocabularies.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const PAD: &str = "<pad>";

pub const UNK_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const PAD_ID: usize = 3;

/// Number of special tokens that precede the placeholders.
pub const NUM_SPECIAL: usize = 4;

/// Default number of `TT_i` placeholder tokens.
pub const DEFAULT_PLACEHOLDERS: usize = 20;

/// Default sentence length limit in morphemes.
pub const DEFAULT_MAX_LEN: usize = 40;

/// Surface form of the `index`-th placeholder (1-based).
pub fn placeholder(index: usize) -> String {
    format!("TT_{index}")
}

/// Parses `TT_<digits>` and returns the index.
pub fn placeholder_index(token: &str) -> Option<usize> {
    let digits = token.strip_prefix("TT_")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn is_placeholder(token: &str) -> bool {
    placeholder_index(token).is_some()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Morpheme {
    pub surface: String,
    pub pos: String,
}

impl Morpheme {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>) -> Self {
        Morpheme {
            surface: surface.into(),
            pos: pos.into(),
        }
    }

    /// Parses `surface/POS`, splitting on the last slash.
    pub fn parse(token: &str) -> Option<Self> {
        let (surface, pos) = token.rsplit_once('/')?;
        if surface.is_empty() || pos.is_empty() {
            return None;
        }
        Some(Morpheme::new(surface, pos))
    }
}

impl fmt::Display for Morpheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.surface, self.pos)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaggedSentence {
    pub morphemes: Vec<Morpheme>,
}

impl TaggedSentence {
    pub fn new(morphemes: Vec<Morpheme>) -> Self {
        TaggedSentence { morphemes }
    }

    pub fn len(&self) -> usize {
        self.morphemes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.morphemes.is_empty()
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.morphemes.iter().map(|m| m.surface.as_str()).collect()
    }

    /// Surface tokens joined by single spaces.
    pub fn surface_text(&self) -> String {
        self.surfaces().join(" ")
    }

    /// Parses a space-separated list of `surface/POS` tokens. Returns the
    /// offending token on failure.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut morphemes = Vec::new();
        for token in text.split_whitespace() {
            let m = Morpheme::parse(token).ok_or_else(|| format!("malformed token `{token}`"))?;
            if is_placeholder(&m.surface) {
                return Err(format!("reserved placeholder `{}` in corpus", m.surface));
            }
            morphemes.push(m);
        }
        Ok(TaggedSentence { morphemes })
    }
}

impl fmt::Display for TaggedSentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.morphemes.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub source: TaggedSentence,
    pub target: TaggedSentence,
    /// Pharaoh-style `(source index, target index)` links.
    pub word_alignment: Option<BTreeSet<(usize, usize)>>,
}

impl ParallelPair {
    pub fn new(source: TaggedSentence, target: TaggedSentence) -> Self {
        ParallelPair {
            source,
            target,
            word_alignment: None,
        }
    }

    /// Serializes the pair as one corpus line (without newline).
    pub fn to_line(&self) -> String {
        let mut line = format!("{}\t{}", self.source, self.target);
        if let Some(links) = &self.word_alignment {
            line.push('\t');
            let joined: Vec<String> = links.iter().map(|(s, t)| format!("{s}-{t}")).collect();
            line.push_str(&joined.join(" "));
        }
        line
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusFormat {
    /// Sentences longer than this are accepted but reported.
    pub max_len: usize,
}

impl Default for CorpusFormat {
    fn default() -> Self {
        CorpusFormat {
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadedCorpus {
    pub pairs: Vec<ParallelPair>,
    /// 1-based line numbers of pairs with a side over `max_len`.
    pub long_lines: Vec<usize>,
}

fn parse_alignment(field: &str, src_len: usize, tgt_len: usize, line: usize) -> Result<BTreeSet<(usize, usize)>> {
    let mut links = BTreeSet::new();
    for link in field.split_whitespace() {
        let (s, t) = link
            .split_once('-')
            .ok_or_else(|| Error::parse(line, format!("malformed alignment link `{link}`")))?;
        let s: usize = s
            .parse()
            .map_err(|_| Error::parse(line, format!("malformed alignment link `{link}`")))?;
        let t: usize = t
            .parse()
            .map_err(|_| Error::parse(line, format!("malformed alignment link `{link}`")))?;
        if s >= src_len || t >= tgt_len {
            return Err(Error::parse(
                line,
                format!("alignment link {s}-{t} out of range for lengths {src_len}/{tgt_len}"),
            ));
        }
        links.insert((s, t));
    }
    Ok(links)
}

/// Parses a single corpus line. `line_no` is 1-based and only used in errors.
pub fn parse_corpus_line(text: &str, line_no: usize) -> Result<ParallelPair> {
    let fields: Vec<&str> = text.split('\t').collect();
    if fields.len() < 2 || fields.len() > 3 {
        return Err(Error::parse(
            line_no,
            format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
        ));
    }
    let source = TaggedSentence::parse(fields[0]).map_err(|m| Error::parse(line_no, m))?;
    let target = TaggedSentence::parse(fields[1]).map_err(|m| Error::parse(line_no, m))?;
    let word_alignment = match fields.get(2) {
        Some(f) => Some(parse_alignment(f, source.len(), target.len(), line_no)?),
        None => None,
    };
    Ok(ParallelPair {
        source,
        target,
        word_alignment,
    })
}

/// Reads `SRC<TAB>TGT[<TAB>ALIGN]` records. Blank lines are skipped.
pub fn load_tagged_corpus<R: BufRead>(reader: R, format: &CorpusFormat) -> Result<LoadedCorpus> {
    let mut out = LoadedCorpus::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let pair = parse_corpus_line(line, idx + 1)?;
        if pair.source.len() > format.max_len || pair.target.len() > format.max_len {
            out.long_lines.push(idx + 1);
        }
        out.pairs.push(pair);
    }
    Ok(out)
}

/// Reads one tagged sentence per line (source-only input).
pub fn load_tagged_sentences<R: BufRead>(reader: R) -> Result<Vec<TaggedSentence>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        // Accept corpus lines too; only the source field is used.
        let src = line.split('\t').next().unwrap_or("");
        out.push(TaggedSentence::parse(src).map_err(|m| Error::parse(idx + 1, m))?);
    }
    Ok(out)
}

pub fn write_corpus(pairs: &[ParallelPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.to_line());
        out.push('\n');
    }
    out
}

/// Bijective token/id map. Ids `0..4` are the special tokens, the next `K`
/// ids are `TT_1..TT_K`, then corpus tokens by descending frequency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
    num_placeholders: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    num_placeholders: usize,
    tokens: Vec<String>,
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            num_placeholders: v.num_placeholders,
            tokens: v.id_to_token,
        }
    }
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = String;

    fn try_from(r: VocabularyRepr) -> std::result::Result<Self, String> {
        let reserved = reserved_tokens(r.num_placeholders);
        if r.tokens.len() < reserved.len() || r.tokens[..reserved.len()] != reserved[..] {
            return Err("vocabulary does not start with the reserved tokens".into());
        }
        let mut token_to_id = HashMap::with_capacity(r.tokens.len());
        for (i, t) in r.tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(format!("duplicate vocabulary token `{t}`"));
            }
        }
        Ok(Vocabulary {
            id_to_token: r.tokens,
            token_to_id,
            num_placeholders: r.num_placeholders,
        })
    }
}

fn reserved_tokens(k: usize) -> Vec<String> {
    let mut v: Vec<String> = [UNK, BOS, EOS, PAD].iter().map(|s| s.to_string()).collect();
    v.extend((1..=k).map(placeholder));
    v
}

impl Vocabulary {
    /// Builds a vocabulary of at most `cap` entries from token sequences.
    /// Reserved tokens appearing in the input are not counted.
    pub fn build<S, T>(sentences: S, cap: usize, num_placeholders: usize) -> Result<Self>
    where
        S: IntoIterator<Item = T>,
        T: IntoIterator,
        T::Item: AsRef<str>,
    {
        let reserved = reserved_tokens(num_placeholders);
        if cap <= reserved.len() {
            return Err(Error::VocabCapTooSmall {
                cap,
                reserved: reserved.len(),
            });
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for sentence in sentences {
            for tok in sentence {
                let tok = tok.as_ref();
                *counts.entry(tok.to_string()).or_default() += 1;
            }
        }
        for r in &reserved {
            counts.remove(r);
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(cap - reserved.len());

        let mut id_to_token = reserved;
        id_to_token.extend(ranked.into_iter().map(|(t, _)| t));
        let token_to_id = id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Ok(Vocabulary {
            id_to_token,
            token_to_id,
            num_placeholders,
        })
    }

    /// Vocabulary over the surface forms of tagged sentences.
    pub fn from_tagged(sentences: &[TaggedSentence], cap: usize, num_placeholders: usize) -> Result<Self> {
        Self::build(sentences.iter().map(|s| s.surfaces()), cap, num_placeholders)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn num_placeholders(&self) -> usize {
        self.num_placeholders
    }

    pub fn num_reserved(&self) -> usize {
        NUM_SPECIAL + self.num_placeholders
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Maps tokens to ids, sending unknown tokens to `UNK_ID`.
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<usize> {
        tokens.iter().map(|t| self.id_or_unk(t.as_ref())).collect()
    }

    /// Maps ids back to tokens; ids outside the vocabulary render as `UNK`.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(UNK).to_string())
            .collect()
    }
}

//! Examples, vocabularies, JSONL ingestion and synthetic task generators.

mod aspect;
mod finite;
mod synth;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aspect::{anchor_patterns, extract_aspect};
pub use finite::FiniteTask;
pub use synth::{gen_degeneration_dataset, gen_planted_dataset, DegenerationSpec, PlantedSpec};

/// Reserved id of the padding / mask symbol.
pub const MASK_ID: usize = 0;
/// Reserved id of out-of-vocabulary words.
pub const UNK_ID: usize = 1;
pub const MASK_WORD: &str = "<mask>";
pub const UNK_WORD: &str = "<unk>";

/// One example: token ids, label and an optional 0/1 rationale annotation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<Vec<String>>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_mask: Option<Vec<u8>>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<usize>, label: usize) -> Self {
        Self {
            tokens,
            raw: None,
            label,
            gold_mask: None,
        }
    }

    pub fn with_gold(mut self, gold: Vec<u8>) -> Self {
        self.gold_mask = Some(gold);
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Word ↔ id mapping. Ids 0 and 1 are always `<mask>` and `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut v = Self {
            words: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(MASK_WORD);
        v.insert(UNK_WORD);
        v
    }

    /// Vocabulary for integer-token data: ids keep their value and get
    /// placeholder names.
    pub fn placeholder(size: usize) -> Self {
        let mut v = Self::new();
        for id in 2..size {
            v.insert(&format!("w{id}"));
        }
        v
    }

    /// Returns the id of `word`, adding it if new.
    pub fn insert(&mut self, word: &str) -> usize {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len();
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    /// Id of `word`, or [`UNK_ID`].
    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    /// Always false: the reserved symbols are present.
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

impl From<Vec<String>> for Vocab {
    fn from(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Self { words, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

/// Words with frequency ≥ `min_count`, numbered in order of first
/// occurrence after the two reserved ids.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Vocab {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for doc in corpus {
        for w in doc {
            let w = w.as_ref();
            let c = counts.entry(w).or_insert(0);
            if *c == 0 {
                order.push(w);
            }
            *c += 1;
        }
    }
    let mut vocab = Vocab::new();
    for w in order {
        if counts[w] >= min_count {
            vocab.insert(w);
        }
    }
    vocab
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<TokenSequence>,
    pub vocab: Vocab,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Fraction of examples carrying the most common label.
    pub fn majority_rate(&self) -> f64 {
        if self.examples.is_empty() {
            return 0.0;
        }
        let mut counts = vec![0usize; self.num_classes.max(1)];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        *counts.iter().max().unwrap() as f64 / self.examples.len() as f64
    }

    /// Deterministic split: the first `n` examples and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.examples.len());
        let mk = |ex: &[TokenSequence]| Dataset {
            examples: ex.to_vec(),
            vocab: self.vocab.clone(),
            num_classes: self.num_classes,
        };
        (mk(&self.examples[..n]), mk(&self.examples[n..]))
    }

    /// Writes one JSONL record per example, tokens as words.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for ex in &self.examples {
            let words: Vec<&str> = ex
                .tokens
                .iter()
                .map(|&t| self.vocab.word(t).unwrap_or(UNK_WORD))
                .collect();
            let rec = OutRecord {
                tokens: &words,
                label: ex.label,
                rationale: ex.gold_mask.as_deref(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Serialize)]
struct OutRecord<'a> {
    tokens: &'a [&'a str],
    label: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    rationale: Option<&'a [u8]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawTokens {
    Ids(Vec<usize>),
    Words(Vec<String>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    tokens: RawTokens,
    label: usize,
    #[serde(default)]
    rationale: Option<Vec<u8>>,
}

struct ParsedLine {
    line: usize,
    tokens: RawTokens,
    label: usize,
    rationale: Option<Vec<u8>>,
}

/// Reads a JSONL dataset, building the vocabulary from the file itself.
pub fn load_jsonl(path: &Path) -> Result<Dataset> {
    load_impl(path, None)
}

/// Reads a JSONL dataset against an existing vocabulary (e.g. a dev split
/// read with the training vocabulary). Unknown words map to `<unk>`.
pub fn load_jsonl_with_vocab(path: &Path, vocab: &Vocab) -> Result<Dataset> {
    load_impl(path, Some(vocab))
}

fn load_impl(path: &Path, vocab: Option<&Vocab>) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut parsed = Vec::new();
    let mut uses_words: Option<bool> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(line_no, e.to_string()))?;
        let (len, words) = match &rec.tokens {
            RawTokens::Ids(v) => (v.len(), false),
            RawTokens::Words(v) => (v.len(), true),
        };
        if len == 0 {
            return Err(parse_err(line_no, "example has no tokens".into()));
        }
        match uses_words {
            None => uses_words = Some(words),
            Some(prev) if prev != words => {
                return Err(parse_err(
                    line_no,
                    "mixes word tokens and integer tokens across lines".into(),
                ))
            }
            _ => {}
        }
        if let Some(r) = &rec.rationale {
            if r.len() != len {
                return Err(Error::Annotation {
                    path: path.to_path_buf(),
                    line: line_no,
                    expected: len,
                    got: r.len(),
                });
            }
            if r.iter().any(|&b| b > 1) {
                return Err(parse_err(line_no, "rationale entries must be 0 or 1".into()));
            }
        }
        parsed.push(ParsedLine {
            line: line_no,
            tokens: rec.tokens,
            label: rec.label,
            rationale: rec.rationale,
        });
    }

    let vocab = match vocab {
        Some(v) => v.clone(),
        None if uses_words == Some(true) => {
            let corpus: Vec<Vec<&str>> = parsed
                .iter()
                .map(|p| match &p.tokens {
                    RawTokens::Words(w) => w.iter().map(String::as_str).collect(),
                    RawTokens::Ids(_) => Vec::new(),
                })
                .collect();
            build_vocab(&corpus, 1)
        }
        None => {
            let max_id = parsed
                .iter()
                .filter_map(|p| match &p.tokens {
                    RawTokens::Ids(ids) => ids.iter().max().copied(),
                    RawTokens::Words(_) => None,
                })
                .max()
                .unwrap_or(UNK_ID);
            Vocab::placeholder((max_id + 1).max(2))
        }
    };

    let mut examples = Vec::with_capacity(parsed.len());
    for p in parsed {
        let (tokens, raw) = match p.tokens {
            RawTokens::Words(w) => (w.iter().map(|x| vocab.id(x)).collect(), Some(w)),
            RawTokens::Ids(ids) => {
                if let Some(&bad) = ids.iter().find(|&&t| t >= vocab.len()) {
                    return Err(parse_err(
                        p.line,
                        format!("token id {bad} outside vocabulary of {}", vocab.len()),
                    ));
                }
                (ids, None)
            }
        };
        examples.push(TokenSequence {
            tokens,
            raw,
            label: p.label,
            gold_mask: p.rationale,
        });
    }
    let num_classes = examples.iter().map(|e| e.label + 1).max().unwrap_or(0);
    Ok(Dataset {
        examples,
        vocab,
        num_classes,
    })
}

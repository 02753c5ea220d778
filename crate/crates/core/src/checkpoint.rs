//! Binary checkpoints and the JSONL training log.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"TPGCKPT\0"
//! version u32
//! header  u64 length, then JSON (configs, seed, vocabulary, class count)
//! count   u32
//! tensor  u32 name length, name ("group/param"), u64 rows, u64 cols,
//!         rows·cols f64 values in row-major order
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::numkit::{ParamSet, Tensor2};
use crate::players::{GameConfig, PlayerParams};
use crate::trainer::{EpochRecord, TrainConfig, TrainState};

const MAGIC: &[u8; 8] = b"TPGCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub game: GameConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub vocab: Vocab,
    pub num_classes: usize,
    pub epoch: usize,
    pub baseline: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: PlayerParams,
}

impl Checkpoint {
    pub fn from_state(state: &TrainState, params: &PlayerParams, game: &GameConfig, train: &TrainConfig, vocab: &Vocab) -> Self {
        Self {
            header: CheckpointHeader {
                game: game.clone(),
                train: train.clone(),
                seed: state.seed,
                vocab: vocab.clone(),
                num_classes: params.num_classes,
                epoch: state.epoch,
                baseline: state.baseline,
            },
            params: params.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&self.header)?;
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let tensors: Vec<(String, &Tensor2)> = self
            .params
            .groups()
            .into_iter()
            .flat_map(|(group, set)| set.iter().map(move |(name, p)| (format!("{group}/{name}"), &p.value)))
            .collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let header_len = r.u64()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)?;
        let count = r.u32()?;
        let mut groups: [ParamSet; 4] = Default::default();
        let mut seen_classifier = false;
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let (group, param) = name
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("tensor name `{name}` has no group")))?;
            let slot = match group {
                "generator" => 0,
                "predictor" => 1,
                "complement_predictor" => 2,
                "introspection_classifier" => {
                    seen_classifier = true;
                    3
                }
                other => return Err(Error::Checkpoint(format!("unknown parameter group `{other}`"))),
            };
            groups[slot].insert(param, Tensor2::from_vec(rows, cols, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after the last tensor".into()));
        }
        let [generator, predictor, complement_predictor, classifier] = groups;
        Ok(Self {
            params: PlayerParams {
                generator,
                predictor,
                complement_predictor,
                introspection_classifier: seen_classifier.then_some(classifier),
                num_classes: header.num_classes,
            },
            header,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Writes one JSON object per epoch.
pub fn write_training_log(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for rec in history {
        serde_json::to_writer(&mut f, rec)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_training_log(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

//! Unit-norm reasoning embeddings: loading from JSONL and a built-in
//! lexical embedder based on signed feature hashing of character 3-grams.

use std::io::BufRead;
use std::path::PathBuf;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rollout::PromptGroup;

/// Vectors whose norm is within this distance of 1 are treated as unit.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm { context: None });
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes` starting from a seed-dependent basis, followed by
/// the MurmurHash3 64-bit finalizer so low bits are usable as a bucket index.
pub fn gram_hash(bytes: &[u8], seed: u64) -> u64 {
    let mut h = FNV_OFFSET ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^ (h >> 33)
}

/// Deterministic lexical embedding of `reasoning`.
///
/// Each character 3-gram (Unicode scalar values; texts shorter than three
/// characters form a single gram) adds `±1` to bucket `hash % dim`, the sign
/// taken from the hash's top bit. The result is L2-normalized. Empty text, or
/// text whose grams cancel exactly, maps to the basis vector `e_1`.
pub fn lexical_embed(reasoning: &str, dim: usize, seed: u64) -> Vec<f64> {
    assert!(dim >= 8, "lexical embedding dimension must be >= 8");
    let mut v = vec![0.0; dim];
    let chars: Vec<char> = reasoning.chars().collect();
    let mut add = |gram: &[char]| {
        let s: String = gram.iter().collect();
        let h = gram_hash(s.as_bytes(), seed);
        let bucket = (h % dim as u64) as usize;
        v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    };
    match chars.len() {
        0 => {}
        1..=2 => add(&chars),
        _ => chars.windows(3).for_each(&mut add),
    }
    l2_normalize(&v).unwrap_or_else(|_| {
        let mut e = vec![0.0; dim];
        e[0] = 1.0;
        e
    })
}

/// Unit vectors keyed by rollout id, all of one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: IndexMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, vectors: IndexMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    /// Insert a vector, normalizing it unless it is already unit to within
    /// [`UNIT_NORM_TOLERANCE`]. The first insertion fixes the dimension of an
    /// empty table created with `dim == 0`.
    pub fn insert(&mut self, id: impl Into<String>, v: &[f64]) -> Result<()> {
        let id = id.into();
        if self.dim == 0 && self.vectors.is_empty() {
            self.dim = v.len();
        }
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: v.len() });
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let unit = if (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE {
            v.to_vec()
        } else {
            l2_normalize(v).map_err(|_| Error::ZeroNorm { context: Some(id.clone()) })?
        };
        self.vectors.insert(id, unit);
        Ok(())
    }

    pub fn require(&self, ids: &[&str]) -> Result<()> {
        let missing: Vec<String> =
            ids.iter().filter(|id| !self.vectors.contains_key(**id)).map(|s| s.to_string()).collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingIds(missing))
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f64>,
}

/// Load `{"id":..,"vector":[..]}` lines; every id in `expected_ids` must be present.
pub fn load_embedding_table<R: BufRead>(reader: R, expected_ids: &[&str]) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(0);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
        if rec.vector.is_empty() {
            return Err(Error::Parse { line: idx + 1, message: "empty vector".into() });
        }
        table.insert(rec.id, &rec.vector)?;
    }
    table.require(expected_ids)?;
    Ok(table)
}

/// Where reasoning embeddings come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    /// Use the `embedding` field carried on each rollout line.
    Inline,
    File(PathBuf),
    Lexical {
        dim: usize,
        seed: u64,
    },
}

impl FromStr for Embedder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "inline" {
            return Ok(Embedder::Inline);
        }
        if let Some(path) = s.strip_prefix("file:") {
            if path.is_empty() {
                return Err(Error::InvalidArgument("file embedder needs a path".into()));
            }
            return Ok(Embedder::File(PathBuf::from(path)));
        }
        if let Some(rest) = s.strip_prefix("lexical:") {
            let mut parts = rest.splitn(2, ':');
            let dim = parts.next().and_then(|d| d.parse::<usize>().ok());
            let seed = parts.next().and_then(|d| d.parse::<u64>().ok());
            return match (dim, seed) {
                (Some(dim), Some(seed)) if dim >= 8 => Ok(Embedder::Lexical { dim, seed }),
                _ => Err(Error::InvalidArgument(format!("expected lexical:<dim>:<seed> with dim >= 8, got `{s}`"))),
            };
        }
        Err(Error::InvalidArgument(format!("unknown embedder `{s}`")))
    }
}

impl Embedder {
    /// Resolve embeddings for the valid rollouts of `group`.
    pub fn resolve(&self, group: &PromptGroup, exec: Exec) -> Result<EmbeddingTable> {
        let valid: Vec<_> = group.rollouts.iter().filter(|r| r.is_valid()).collect();
        let ids: Vec<&str> = valid.iter().map(|r| r.id.as_str()).collect();
        match self {
            Embedder::Inline => {
                let mut table = EmbeddingTable::new(0);
                let mut missing = Vec::new();
                for r in &valid {
                    match &r.embedding {
                        Some(v) => table.insert(r.id.clone(), v)?,
                        None => missing.push(r.id.clone()),
                    }
                }
                if missing.is_empty() {
                    Ok(table)
                } else {
                    Err(Error::MissingIds(missing))
                }
            }
            Embedder::File(path) => {
                let file = std::fs::File::open(path)?;
                load_embedding_table(std::io::BufReader::new(file), &ids)
            }
            Embedder::Lexical { dim, seed } => {
                let vectors = exec.map_slice(&valid, |r| lexical_embed(&r.reasoning, *dim, *seed));
                let mut table = EmbeddingTable::new(*dim);
                for (r, v) in valid.iter().zip(&vectors) {
                    table.insert(r.id.clone(), v)?;
                }
                Ok(table)
            }
        }
    }
}

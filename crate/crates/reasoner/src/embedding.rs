//! Vector vocabulary: word-vector loading, seeded random embeddings, and
//! similarity queries.
//!
//! Node symbols draw their vectors from a word-vector file (GloVe text
//! format: one word followed by its components per line). Relation symbols
//! and template slots use seeded random embeddings instead. The generator is
//! pinned for portability: ChaCha20 keyed with the SHA-256 digest of
//! `(seed, tag)`, components drawn i.i.d. from the unit normal, so the same
//! `(seed, tag, dim)` triple yields bitwise-identical vectors on every
//! platform and run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("failed to read word vectors: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected} vector components, found {found}")]
    RaggedLine {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse '{token}' as a number")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: component '{token}' is not finite")]
    NotFinite { line: usize, token: String },
    #[error("word vector file contains no entries")]
    EmptyFile,
    #[error("cosine is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("nearest-word query against an empty vocabulary")]
    EmptyStore,
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("word '{word}' is not in the vocabulary")]
    UnknownWord { word: String },
}

/// A dense real vector attached to a node, edge, or rule slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Normalized dot product of two embeddings, clamped into [-1, 1] against
/// floating-point rounding.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Deterministic random embedding for `(seed, tag)`.
///
/// ChaCha20 is keyed with SHA-256(seed || tag); components are i.i.d. unit
/// normals. Distinct tags give independent vectors under the same seed.
pub fn random_embedding(seed: u64, tag: &str, dim: usize) -> Embedding {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha20Rng::from_seed(key);
    let values = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Embedding(values)
}

/// An immutable word-to-vector map with a fixed dimension.
///
/// Entries are kept sorted by word so queries are independent of load order.
#[derive(Debug, Clone)]
pub struct VocabStore {
    dim: usize,
    entries: BTreeMap<String, Embedding>,
}

impl VocabStore {
    pub fn new(dim: usize) -> Self {
        VocabStore {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&Embedding> {
        self.entries.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    /// Inserts a word unless already present; the first occurrence wins.
    pub fn insert_if_absent(&mut self, word: &str, embedding: Embedding) {
        assert_eq!(embedding.dim(), self.dim, "vector dimension mismatch");
        self.entries.entry(word.to_string()).or_insert(embedding);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.entries.iter().map(|(w, e)| (w.as_str(), e))
    }
}

/// Loads a GloVe-format word-vector file: one entry per line, the word
/// followed by its components, whitespace-separated, no header.
///
/// The dimension is inferred from the first line; `limit` keeps only the
/// first entries. Duplicate words keep the first occurrence.
pub fn load_word_vectors(
    path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<VocabStore, EmbeddingError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut store: Option<VocabStore> = None;
    let mut loaded = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(max) = limit {
            if loaded >= max {
                break;
            }
        }
        let line_no = idx + 1;
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field");
        let mut values = Vec::new();
        for token in fields {
            let value: f64 = token.parse().map_err(|_| EmbeddingError::BadNumber {
                line: line_no,
                token: token.to_string(),
            })?;
            if !value.is_finite() {
                return Err(EmbeddingError::NotFinite {
                    line: line_no,
                    token: token.to_string(),
                });
            }
            values.push(value);
        }
        match &mut store {
            None => {
                if values.is_empty() {
                    return Err(EmbeddingError::RaggedLine {
                        line: line_no,
                        expected: 1,
                        found: 0,
                    });
                }
                let mut s = VocabStore::new(values.len());
                s.insert_if_absent(word, Embedding(values));
                store = Some(s);
            }
            Some(s) => {
                if values.len() != s.dim() {
                    return Err(EmbeddingError::RaggedLine {
                        line: line_no,
                        expected: s.dim(),
                        found: values.len(),
                    });
                }
                s.insert_if_absent(word, Embedding(values));
            }
        }
        loaded += 1;
    }
    store.ok_or(EmbeddingError::EmptyFile)
}

/// Word with the highest cosine to `v`; ties go to the lexicographically
/// smaller word.
pub fn nearest_word<'a>(
    v: &Embedding,
    store: &'a VocabStore,
) -> Result<(&'a str, f64), EmbeddingError> {
    if store.is_empty() {
        return Err(EmbeddingError::EmptyStore);
    }
    let mut best: Option<(&str, f64)> = None;
    for (word, emb) in store.iter() {
        let score = cosine(v, emb)?;
        match best {
            Some((_, s)) if score <= s => {}
            _ => best = Some((word, score)),
        }
    }
    Ok(best.expect("store is non-empty"))
}

/// The two symbol namespaces of a run: node words and relation words.
///
/// Node vectors come from a loaded word-vector store when one is supplied,
/// otherwise they are seeded like relations. Relation vectors are always
/// seeded random embeddings keyed by the relation name.
#[derive(Debug, Clone)]
pub struct Lexicon {
    seed: u64,
    dim: usize,
    nodes: VocabStore,
    relations: VocabStore,
    fixed_nodes: bool,
}

impl Lexicon {
    /// A lexicon with no word-vector file: every symbol is seeded.
    pub fn seeded(seed: u64, dim: usize) -> Self {
        Lexicon {
            seed,
            dim,
            nodes: VocabStore::new(dim),
            relations: VocabStore::new(dim),
            fixed_nodes: false,
        }
    }

    /// A lexicon whose node words come from a loaded store.
    pub fn with_node_vocab(seed: u64, nodes: VocabStore) -> Self {
        let dim = nodes.dim();
        Lexicon {
            seed,
            dim,
            nodes,
            relations: VocabStore::new(dim),
            fixed_nodes: true,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_store(&self) -> &VocabStore {
        &self.nodes
    }

    pub fn relation_store(&self) -> &VocabStore {
        &self.relations
    }

    /// Embedding for a node word. With a fixed vocabulary an unknown word is
    /// an error; otherwise it is seeded and interned.
    pub fn node_embedding(&mut self, word: &str) -> Result<Embedding, EmbeddingError> {
        if let Some(e) = self.nodes.get(word) {
            return Ok(e.clone());
        }
        if self.fixed_nodes {
            return Err(EmbeddingError::UnknownWord {
                word: word.to_string(),
            });
        }
        let e = random_embedding(self.seed, &format!("node/{word}"), self.dim);
        self.nodes.insert_if_absent(word, e.clone());
        Ok(e)
    }

    /// Embedding for a relation word; seeded and interned on first use.
    pub fn relation_embedding(&mut self, word: &str) -> Embedding {
        if let Some(e) = self.relations.get(word) {
            return e.clone();
        }
        let e = random_embedding(self.seed, &format!("rel/{word}"), self.dim);
        self.relations.insert_if_absent(word, e.clone());
        e
    }

    /// Embedding for a trainable template slot, keyed by a unique tag.
    pub fn slot_embedding(&self, tag: &str) -> Embedding {
        random_embedding(self.seed, &format!("slot/{tag}"), self.dim)
    }
}

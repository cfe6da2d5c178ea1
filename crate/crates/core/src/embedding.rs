//! Text and claim–evidence encoders.
//!
//! [`HashProvider`] is a deterministic feature-hashing encoder usable without
//! any model weights. [`PrecomputedProvider`] serves vectors produced
//! elsewhere (e.g. by a transformer) from a vector file.
//!
//! Feature hashing: for a feature string `f` in namespace `ns`, the key bytes
//! are `seed (u64 LE) ++ ns ++ 0x1F ++ utf8(f)`. The bucket is
//! `fnv1a64(key) mod d` and the sign is `+1` when `fnv1a64(0xFF ++ key)` is
//! even, `-1` otherwise.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokens;

pub const DEFAULT_DIM: usize = 1024;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const VECTOR_FILE_MAGIC: [u8; 4] = *b"EGVF";
pub const VECTOR_FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no stored vector for key {key:#018x} ({what})")]
    MissingKey { key: u64, what: String },
    #[error("malformed vector file: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// FNV-1a, 64 bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// A dense embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= n);
        }
        self
    }
}

impl From<Vec<f64>> for Vector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Encoder contract behind node features and evidence scoring.
pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn encode_text(&self, text: &str) -> Result<Vector, EmbeddingError>;
    fn encode_pair(&self, claim: &str, evidence: &str) -> Result<Vector, EmbeddingError>;
}

/// Bucket and sign of one hashed feature.
pub fn feature_slot(seed: u64, namespace: &str, feature: &str, dim: usize) -> (usize, f64) {
    let mut key = Vec::with_capacity(8 + namespace.len() + 1 + feature.len() + 1);
    key.push(0xFF);
    key.extend_from_slice(&seed.to_le_bytes());
    key.extend_from_slice(namespace.as_bytes());
    key.push(0x1F);
    key.extend_from_slice(feature.as_bytes());
    let index = (fnv1a64(&key[1..]) % dim as u64) as usize;
    let sign = if fnv1a64(&key) & 1 == 0 { 1.0 } else { -1.0 };
    (index, sign)
}

fn accumulate(v: &mut [f64], seed: u64, namespace: &str, feature: &str) {
    let (i, s) = feature_slot(seed, namespace, feature, v.len());
    v[i] += s;
}

/// Unit-normalized hashed bag of unigrams (namespace `U`) and bigrams
/// (namespace `B`). Empty text gives the zero vector.
pub fn hash_embed_text(text: &str, dim: usize, seed: u64) -> Vector {
    assert!(dim >= 2, "hash embedding dimension must be at least 2");
    let toks = tokens(text);
    let mut v = vec![0.0; dim];
    for t in &toks {
        accumulate(&mut v, seed, "U", t);
    }
    for w in toks.windows(2) {
        accumulate(&mut v, seed, "B", &format!("{} {}", w[0], w[1]));
    }
    Vector(v).normalized()
}

/// Unit-normalized hashed features of a claim–evidence pair: claim unigrams
/// (`C`), evidence unigrams (`E`) and every claim×evidence token pair (`X`).
pub fn hash_embed_pair(claim: &str, evidence: &str, dim: usize, seed: u64) -> Vector {
    assert!(dim >= 2, "hash embedding dimension must be at least 2");
    let ct = tokens(claim);
    let et = tokens(evidence);
    let mut v = vec![0.0; dim];
    for t in &ct {
        accumulate(&mut v, seed, "C", t);
    }
    for t in &et {
        accumulate(&mut v, seed, "E", t);
    }
    for c in &ct {
        for e in &et {
            accumulate(&mut v, seed, "X", &format!("{c}\u{1f}{e}"));
        }
    }
    Vector(v).normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashProvider {
    pub dim: usize,
    pub seed: u64,
}

impl HashProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 2, "hash embedding dimension must be at least 2");
        Self { dim, seed }
    }
}

impl EmbeddingProvider for HashProvider {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str) -> Result<Vector, EmbeddingError> {
        Ok(hash_embed_text(text, self.dim, self.seed))
    }

    fn encode_pair(&self, claim: &str, evidence: &str) -> Result<Vector, EmbeddingError> {
        Ok(hash_embed_pair(claim, evidence, self.dim, self.seed))
    }
}

/// Lookup key of a single text.
pub fn text_key(text: &str) -> u64 {
    fnv1a64(text.as_bytes())
}

/// Lookup key of a claim–evidence pair: the hash of `claim ++ 0x00 ++ evidence`.
pub fn pair_key(claim: &str, evidence: &str) -> u64 {
    let mut bytes = Vec::with_capacity(claim.len() + evidence.len() + 1);
    bytes.extend_from_slice(claim.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(evidence.as_bytes());
    fnv1a64(&bytes)
}

/// Vectors keyed by text hash, loaded from a vector file.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedProvider {
    dim: usize,
    vectors: HashMap<u64, Vec<f32>>,
}

/// One line of the JSON-lines debug vector format. `evidence` present means
/// the entry is keyed as a claim–evidence pair with `text` as the claim.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
    pub vector: Vec<f32>,
}

impl VectorRecord {
    pub fn key(&self) -> u64 {
        match &self.evidence {
            Some(e) => pair_key(&self.text, e),
            None => text_key(&self.text),
        }
    }
}

impl PrecomputedProvider {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, key: u64, vector: Vec<f32>) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn lookup(&self, key: u64, what: impl FnOnce() -> String) -> Result<Vector, EmbeddingError> {
        self.vectors
            .get(&key)
            .map(|v| Vector(v.iter().map(|&x| f64::from(x)).collect()))
            .ok_or_else(|| EmbeddingError::MissingKey { key, what: what() })
    }

    /// Write the binary format: header (magic, version u32, dim u32,
    /// count u64) then records (key u64, dim × f32), all little-endian,
    /// records sorted by key.
    pub fn write_binary(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&VECTOR_FILE_MAGIC)?;
        w.write_all(&VECTOR_FILE_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.vectors.len() as u64).to_le_bytes())?;
        let mut keys: Vec<&u64> = self.vectors.keys().collect();
        keys.sort();
        for k in keys {
            w.write_all(&k.to_le_bytes())?;
            for x in &self.vectors[k] {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, text: &str) -> Result<Vector, EmbeddingError> {
        self.lookup(text_key(text), || format!("text {text:?}"))
    }

    fn encode_pair(&self, claim: &str, evidence: &str) -> Result<Vector, EmbeddingError> {
        self.lookup(pair_key(claim, evidence), || {
            format!("pair ({claim:?}, {evidence:?})")
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, EmbeddingError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| EmbeddingError::Malformed(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64, EmbeddingError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| EmbeddingError::Malformed(format!("truncated record: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

/// Load a vector file, binary or JSON-lines (detected from the magic bytes).
/// With `expected_dim` set, a file of any other dimension is rejected.
pub fn load_precomputed(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<PrecomputedProvider, EmbeddingError> {
    let mut reader = BufReader::new(File::open(path)?);
    let is_binary = reader.fill_buf()?.starts_with(&VECTOR_FILE_MAGIC);
    let provider = if is_binary {
        read_binary(&mut reader)?
    } else {
        read_jsonl(reader)?
    };
    if let Some(expected) = expected_dim {
        if provider.dim != expected {
            return Err(EmbeddingError::DimensionMismatch {
                expected,
                found: provider.dim,
            });
        }
    }
    Ok(provider)
}

fn read_binary(r: &mut impl Read) -> Result<PrecomputedProvider, EmbeddingError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    let version = read_u32(r)?;
    if version != VECTOR_FILE_VERSION {
        return Err(EmbeddingError::Malformed(format!(
            "unsupported version {version}"
        )));
    }
    let dim = read_u32(r)? as usize;
    if dim == 0 {
        return Err(EmbeddingError::Malformed("zero dimension".into()));
    }
    let count = read_u64(r)?;
    let mut provider = PrecomputedProvider::new(dim);
    let mut buf = vec![0u8; dim * 4];
    for _ in 0..count {
        let key = read_u64(r)?;
        r.read_exact(&mut buf)
            .map_err(|e| EmbeddingError::Malformed(format!("truncated vector: {e}")))?;
        let v = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        provider.insert(key, v)?;
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(EmbeddingError::Malformed("trailing bytes after records".into()));
    }
    Ok(provider)
}

fn read_jsonl(r: impl BufRead) -> Result<PrecomputedProvider, EmbeddingError> {
    let mut provider: Option<PrecomputedProvider> = None;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: VectorRecord = serde_json::from_str(&line)
            .map_err(|e| EmbeddingError::Malformed(format!("line {}: {e}", n + 1)))?;
        let p = provider.get_or_insert_with(|| PrecomputedProvider::new(rec.vector.len()));
        if p.dim == 0 {
            return Err(EmbeddingError::Malformed("zero dimension".into()));
        }
        p.insert(rec.key(), rec.vector)?;
    }
    provider.ok_or_else(|| EmbeddingError::Malformed("no records".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        // published FNV-1a 64 test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_zero() {
        let v = hash_embed_text("", 16, 1);
        assert!(v.iter().all(|&x| x == 0.0));
        assert_eq!(cosine(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn cosine_examples() {
        let u = [1.0, 2.0, 2.0];
        let v = [2.0, 0.0, 1.0];
        let expected = 4.0 / (3.0 * 5f64.sqrt());
        assert!((cosine(&u, &v).unwrap() - expected).abs() < 1e-15);
        assert!((cosine(&u, &v).unwrap() - 0.5963).abs() < 1e-4);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine(&u, &[1.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn disjoint_texts_match_direct_hash_computation() {
        let a = hash_embed_text("aa bb", 1024, 7);
        let b = hash_embed_text("cc dd", 1024, 7);
        // oracle: build both vectors straight from the slot definition
        let build = |feats: &[(&str, &str)]| {
            let mut v = vec![0.0; 1024];
            for (ns, f) in feats {
                let mut key = vec![0xFFu8];
                key.extend_from_slice(&7u64.to_le_bytes());
                key.extend_from_slice(ns.as_bytes());
                key.push(0x1F);
                key.extend_from_slice(f.as_bytes());
                let idx = (fnv1a64(&key[1..]) % 1024) as usize;
                v[idx] += if fnv1a64(&key) % 2 == 0 { 1.0 } else { -1.0 };
            }
            let n: f64 = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let oa = build(&[("U", "aa"), ("U", "bb"), ("B", "aa bb")]);
        let ob = build(&[("U", "cc"), ("U", "dd"), ("B", "cc dd")]);
        assert_eq!(&*a, &oa[..]);
        assert_eq!(&*b, &ob[..]);
        let dot: f64 = oa.iter().zip(&ob).map(|(x, y)| x * y).sum();
        assert!((cosine(&a, &b).unwrap() - dot).abs() < 1e-15);
    }

    #[test]
    fn pair_features_enumerated() {
        let v = hash_embed_pair("red car", "blue sky", 4096, 3);
        let feats = [
            ("C", "red".to_string()),
            ("C", "car".to_string()),
            ("E", "blue".to_string()),
            ("E", "sky".to_string()),
            ("X", "red\u{1f}blue".to_string()),
            ("X", "red\u{1f}sky".to_string()),
            ("X", "car\u{1f}blue".to_string()),
            ("X", "car\u{1f}sky".to_string()),
        ];
        let mut expected = vec![0.0; 4096];
        for (ns, f) in &feats {
            let (i, s) = feature_slot(3, ns, f, 4096);
            expected[i] += s;
        }
        let active = expected.iter().filter(|x| **x != 0.0).count();
        assert_eq!(active, 8, "a collision in the fixture would hide features");
        let n = (8f64).sqrt();
        for (a, e) in v.iter().zip(&expected) {
            assert!((a - e / n).abs() < 1e-15);
        }
    }

    #[test]
    fn pair_is_asymmetric_and_deterministic() {
        let a = hash_embed_pair("claim text", "evidence words", 256, 1);
        let b = hash_embed_pair("evidence words", "claim text", 256, 1);
        assert_ne!(a, b);
        assert_eq!(a, hash_embed_pair("claim text", "evidence words", 256, 1));
    }

    #[test]
    fn precomputed_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.bin");
        let mut p = PrecomputedProvider::new(3);
        p.insert(text_key("hello"), vec![0.1, -2.5, 3.25]).unwrap();
        p.write_binary(&path).unwrap();

        let loaded = load_precomputed(&path, Some(3)).unwrap();
        let v = loaded.encode_text("hello").unwrap();
        assert_eq!(&*v, &[f64::from(0.1f32), -2.5, 3.25]);
        assert!(matches!(
            loaded.encode_text("absent"),
            Err(EmbeddingError::MissingKey { .. })
        ));
        assert!(matches!(
            load_precomputed(&path, Some(1024)),
            Err(EmbeddingError::DimensionMismatch {
                expected: 1024,
                found: 3
            })
        ));
    }

    #[test]
    fn precomputed_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.jsonl");
        std::fs::write(
            &path,
            "{\"text\": \"c\", \"evidence\": \"e\", \"vector\": [1.0, 2.0]}\n{\"text\": \"t\", \"vector\": [3.0, 4.0]}\n",
        )
        .unwrap();
        let p = load_precomputed(&path, None).unwrap();
        assert_eq!(p.dimension(), 2);
        assert_eq!(&*p.encode_pair("c", "e").unwrap(), &[1.0, 2.0]);
        assert_eq!(&*p.encode_text("t").unwrap(), &[3.0, 4.0]);

        std::fs::write(&path, "{\"text\": \"a\", \"vector\": [1.0]}\n{\"text\": \"b\", \"vector\": [1.0, 2.0]}\n").unwrap();
        assert!(load_precomputed(&path, None).is_err());
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            load_precomputed(&path, None),
            Err(EmbeddingError::Malformed(_))
        ));
    }

    proptest! {
        #[test]
        fn unit_norm_or_zero(text in "[a-z ]{0,40}", seed in 0u64..100, dim in 2usize..300) {
            let n = hash_embed_text(&text, dim, seed).norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
            let n = hash_embed_pair(&text, "some evidence", dim, seed).norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }
    }
}

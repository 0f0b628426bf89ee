//! Dense-vector retrieval: embedding providers, flat and IVF-style cosine
//! indexes, top-k search.
//!
//! Two providers are built in. The precomputed provider reads unit vectors
//! from a text file produced offline by any sentence encoder (`DIM <D>`
//! header, then `<id><TAB><floats>` lines). The hashed provider embeds by
//! signed feature hashing of token unigrams and bigrams into `D` buckets,
//! L2-normalized; it is fully deterministic and needs no model files.
//!
//! The IVF index partitions the corpus with seeded spherical k-means and
//! scans only the `nprobe` clusters whose centroids are most similar to the
//! query. With `nprobe = nlist` it degenerates to the exact flat search.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Requirement;
use crate::error::{Error, Result};
use crate::extract::normalize_tokens;

/// Default embedding dimensionality for precomputed sentence encoders.
pub const DEFAULT_DIMENSION: usize = 768;
/// k-means iteration cap for IVF clustering.
pub const KMEANS_MAX_ITERS: usize = 25;
/// Default k-means seed.
pub const DEFAULT_KMEANS_SEED: u64 = 42;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// A requirement's embedding; unit-length after provider normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub requirement_id: String,
    pub values: Vec<f64>,
    pub norm: f64,
}

impl EmbeddingVector {
    /// Normalize raw values to unit length. A zero vector cannot be
    /// normalized and is rejected.
    pub fn normalized(requirement_id: impl Into<String>, mut values: Vec<f64>) -> Result<Self> {
        let id = requirement_id.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "embedding for '{id}' contains non-finite entries"
            )));
        }
        let norm = l2_norm(&values);
        if norm == 0.0 {
            return Err(Error::Validation(format!(
                "embedding for '{id}' is the zero vector"
            )));
        }
        for v in &mut values {
            *v /= norm;
        }
        let norm = l2_norm(&values);
        Ok(EmbeddingVector {
            requirement_id: id,
            values,
            norm,
        })
    }

    /// Wrap values that are already unit length (within 1e-6) without
    /// renormalizing, so persisted vectors reload bit-exact.
    pub fn from_unit(requirement_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = requirement_id.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "embedding for '{id}' contains non-finite entries"
            )));
        }
        let norm = l2_norm(&values);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "embedding for '{id}' is not unit length (norm {norm})"
            )));
        }
        Ok(EmbeddingVector {
            requirement_id: id,
            values,
            norm,
        })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

pub fn l2_norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity of two equal-dimension, nonzero vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Validation(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Validation(
            "cosine undefined for the zero vector".into(),
        ));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(dot / (nu * nv))
}

/// Source of embedding vectors.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;

    /// Deterministic embedding for a requirement; identical text (or id,
    /// for the precomputed provider) yields identical vectors.
    fn embed(&self, req: &Requirement) -> Result<EmbeddingVector>;
}

/// Looks vectors up in a file produced offline; never runs an encoder.
#[derive(Debug, Clone)]
pub struct PrecomputedProvider {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedProvider {
    pub fn load(path: &Path) -> Result<PrecomputedProvider> {
        Self::parse(&fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn parse(raw: &str, origin: &str) -> Result<PrecomputedProvider> {
        let mut lines = raw.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            location: format!("{origin}:line 1"),
            message: "empty embeddings file".into(),
        })?;
        let dimension = header
            .strip_prefix("DIM ")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .filter(|&d| d >= 1)
            .ok_or_else(|| Error::Parse {
                location: format!("{origin}:line 1"),
                message: format!("expected 'DIM <D>' header, found '{header}'"),
            })?;
        let mut vectors = HashMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let location = format!("{origin}:line {}", i + 1);
            let (id, floats) = line.split_once('\t').ok_or_else(|| Error::Parse {
                location: location.clone(),
                message: "expected '<id><TAB><floats>'".into(),
            })?;
            let values: Vec<f64> = floats
                .split_whitespace()
                .map(|f| {
                    f.parse::<f64>().map_err(|e| Error::Parse {
                        location: location.clone(),
                        message: format!("bad float '{f}': {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if values.len() != dimension {
                return Err(Error::Config(format!(
                    "{location}: vector for '{id}' has dimension {}, expected {dimension}",
                    values.len()
                )));
            }
            vectors.insert(id.to_string(), values);
        }
        Ok(PrecomputedProvider { dimension, vectors })
    }
}

impl EmbeddingProvider for PrecomputedProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, req: &Requirement) -> Result<EmbeddingVector> {
        let values = self.vectors.get(&req.id).ok_or_else(|| {
            Error::Lookup(format!(
                "no precomputed embedding for requirement '{}'",
                req.id
            ))
        })?;
        EmbeddingVector::normalized(req.id.clone(), values.clone())
    }
}

/// Signed feature hashing of token unigrams and bigrams (FNV-1a 64-bit:
/// bucket = hash % D, sign = high bit), L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedProvider {
    dimension: usize,
}

impl HashedProvider {
    pub fn new(dimension: usize) -> Result<HashedProvider> {
        if dimension == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        Ok(HashedProvider { dimension })
    }

    pub fn embed_text(&self, id: &str, text: &str) -> Result<EmbeddingVector> {
        let tokens = normalize_tokens(text);
        let mut values = vec![0.0f64; self.dimension];
        let mut add = |feature: &str| {
            let h = fnv1a(feature.as_bytes());
            let idx = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            values[idx] += sign;
        };
        for t in &tokens {
            add(t);
        }
        for pair in tokens.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]));
        }
        EmbeddingVector::normalized(id, values)
    }
}

impl EmbeddingProvider for HashedProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, req: &Requirement) -> Result<EmbeddingVector> {
        self.embed_text(&req.id, &req.text)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Index layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Flat,
    Ivf,
}

#[derive(Debug, Clone)]
struct IvfData {
    nlist: usize,
    centroids: Vec<Vec<f64>>,
    /// vector position -> cluster.
    assignments: Vec<usize>,
    /// cluster -> vector positions.
    posting: Vec<Vec<usize>>,
    default_nprobe: usize,
}

/// One search hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineHit {
    pub id: String,
    pub cosine: f64,
}

/// Immutable cosine index over unit vectors.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    kind: IndexKind,
    dimension: usize,
    vectors: Vec<EmbeddingVector>,
    ivf: Option<IvfData>,
}

impl VectorIndex {
    /// Build an index. For IVF, `nlist` defaults to `ceil(sqrt(N))` and the
    /// k-means seed fixes the clustering.
    pub fn build(
        vectors: Vec<EmbeddingVector>,
        kind: IndexKind,
        nlist: Option<usize>,
        seed: u64,
    ) -> Result<VectorIndex> {
        if vectors.is_empty() {
            return Err(Error::Validation("cannot index an empty vector set".into()));
        }
        let dimension = vectors[0].dimension();
        for v in &vectors {
            if v.dimension() != dimension {
                return Err(Error::Config(format!(
                    "vector '{}' has dimension {}, expected {dimension}",
                    v.requirement_id,
                    v.dimension()
                )));
            }
        }
        let ivf = match kind {
            IndexKind::Flat => None,
            IndexKind::Ivf => {
                let n = vectors.len();
                let nlist = nlist.unwrap_or_else(|| (n as f64).sqrt().ceil() as usize);
                if nlist == 0 || nlist > n {
                    return Err(Error::Config(format!(
                        "nlist must be in [1, {n}], got {nlist}"
                    )));
                }
                let (centroids, assignments) = spherical_kmeans(&vectors, nlist, seed);
                let mut posting = vec![Vec::new(); nlist];
                for (pos, &c) in assignments.iter().enumerate() {
                    posting[c].push(pos);
                }
                let default_nprobe = (nlist.div_ceil(8)).max(1);
                Some(IvfData {
                    nlist,
                    centroids,
                    assignments,
                    posting,
                    default_nprobe,
                })
            }
        };
        Ok(VectorIndex {
            kind,
            dimension,
            vectors,
            ivf,
        })
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nlist(&self) -> Option<usize> {
        self.ivf.as_ref().map(|i| i.nlist)
    }

    /// Top-k by descending cosine, ties by ascending id; the query's own id
    /// is excluded when present in the index. IVF scans only the `nprobe`
    /// most similar clusters.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        nprobe: Option<usize>,
    ) -> Result<Vec<CosineHit>> {
        if k == 0 {
            return Err(Error::Validation("k must be >= 1".into()));
        }
        if query.dimension() != self.dimension {
            return Err(Error::Validation(format!(
                "query dimension {} does not match index dimension {}",
                query.dimension(),
                self.dimension
            )));
        }
        let positions: Vec<usize> = match &self.ivf {
            None => (0..self.vectors.len()).collect(),
            Some(ivf) => {
                let nprobe = nprobe.unwrap_or(ivf.default_nprobe).clamp(1, ivf.nlist);
                let mut ranked: Vec<(usize, f64)> = ivf
                    .centroids
                    .iter()
                    .enumerate()
                    .map(|(c, centroid)| (c, dot(&query.values, centroid)))
                    .collect();
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                ranked
                    .into_iter()
                    .take(nprobe)
                    .flat_map(|(c, _)| ivf.posting[c].iter().copied())
                    .collect()
            }
        };
        // Same arithmetic as [`cosine`] (cached norms are recomputed with
        // the identical l2_norm), so results match an exhaustive oracle
        // bit for bit.
        let mut hits: Vec<CosineHit> = positions
            .into_iter()
            .map(|pos| &self.vectors[pos])
            .filter(|v| v.requirement_id != query.requirement_id)
            .map(|v| CosineHit {
                id: v.requirement_id.clone(),
                cosine: dot(&query.values, &v.values) / (query.norm * v.norm),
            })
            .collect();
        hits.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k);
        Ok(hits)
    }

    /// Persist as text: the embeddings-file format plus `CENTROID` and
    /// `ASSIGN` records for IVF.
    pub fn save_to_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "DIM {}", self.dimension);
        for v in &self.vectors {
            let floats: Vec<String> = v.values.iter().map(|f| format!("{f}")).collect();
            let _ = writeln!(out, "{}\t{}", v.requirement_id, floats.join(" "));
        }
        if let Some(ivf) = &self.ivf {
            for (c, centroid) in ivf.centroids.iter().enumerate() {
                let floats: Vec<String> = centroid.iter().map(|f| format!("{f}")).collect();
                let _ = writeln!(out, "CENTROID\t{c}\t{}", floats.join(" "));
            }
            for (pos, &c) in ivf.assignments.iter().enumerate() {
                let _ = writeln!(out, "ASSIGN\t{}\t{c}", self.vectors[pos].requirement_id);
            }
        }
        out
    }

    pub fn load_from_string(raw: &str, origin: &str) -> Result<VectorIndex> {
        let mut dimension: Option<usize> = None;
        let mut vectors: Vec<EmbeddingVector> = Vec::new();
        let mut centroids: Vec<Vec<f64>> = Vec::new();
        let mut assigns: HashMap<String, usize> = HashMap::new();
        for (i, line) in raw.lines().enumerate() {
            let location = format!("{origin}:line {}", i + 1);
            if line.trim().is_empty() {
                continue;
            }
            if let Some(d) = line.strip_prefix("DIM ") {
                dimension = Some(d.trim().parse().map_err(|e| Error::Parse {
                    location: location.clone(),
                    message: format!("bad dimension: {e}"),
                })?);
            } else if let Some(rest) = line.strip_prefix("CENTROID\t") {
                let (_, floats) = rest.split_once('\t').ok_or_else(|| Error::Parse {
                    location: location.clone(),
                    message: "expected 'CENTROID<TAB>i<TAB><floats>'".into(),
                })?;
                centroids.push(parse_floats(floats, &location)?);
            } else if let Some(rest) = line.strip_prefix("ASSIGN\t") {
                let (id, c) = rest.split_once('\t').ok_or_else(|| Error::Parse {
                    location: location.clone(),
                    message: "expected 'ASSIGN<TAB>id<TAB>cluster'".into(),
                })?;
                let cluster = c.trim().parse().map_err(|e| Error::Parse {
                    location: location.clone(),
                    message: format!("bad cluster: {e}"),
                })?;
                assigns.insert(id.to_string(), cluster);
            } else {
                let (id, floats) = line.split_once('\t').ok_or_else(|| Error::Parse {
                    location: location.clone(),
                    message: "expected '<id><TAB><floats>'".into(),
                })?;
                let values = parse_floats(floats, &location)?;
                vectors.push(EmbeddingVector::from_unit(id, values)?);
            }
        }
        let dimension = dimension.ok_or_else(|| Error::Parse {
            location: format!("{origin}:line 1"),
            message: "missing DIM header".into(),
        })?;
        if centroids.is_empty() {
            return VectorIndex::build(vectors, IndexKind::Flat, None, DEFAULT_KMEANS_SEED);
        }
        let nlist = centroids.len();
        let assignments: Vec<usize> = vectors
            .iter()
            .map(|v| {
                assigns.get(&v.requirement_id).copied().ok_or_else(|| {
                    Error::Integrity(format!("missing ASSIGN record for '{}'", v.requirement_id))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(&bad) = assignments.iter().find(|&&c| c >= nlist) {
            return Err(Error::Integrity(format!(
                "assignment references cluster {bad} but only {nlist} centroids are declared"
            )));
        }
        let mut posting = vec![Vec::new(); nlist];
        for (pos, &c) in assignments.iter().enumerate() {
            posting[c].push(pos);
        }
        let default_nprobe = (nlist.div_ceil(8)).max(1);
        Ok(VectorIndex {
            kind: IndexKind::Ivf,
            dimension,
            vectors,
            ivf: Some(IvfData {
                nlist,
                centroids,
                assignments,
                posting,
                default_nprobe,
            }),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.save_to_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<VectorIndex> {
        Self::load_from_string(&fs::read_to_string(path)?, &path.display().to_string())
    }
}

fn parse_floats(raw: &str, location: &str) -> Result<Vec<f64>> {
    raw.split_whitespace()
        .map(|f| {
            f.parse::<f64>().map_err(|e| Error::Parse {
                location: location.to_string(),
                message: format!("bad float '{f}': {e}"),
            })
        })
        .collect()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Seeded spherical k-means: assignment by maximum dot product against
/// unit-length centroids, ties to the lowest cluster index; empty clusters
/// keep their previous centroid. Stops when assignments stabilize or after
/// [`KMEANS_MAX_ITERS`] rounds.
fn spherical_kmeans(
    vectors: &[EmbeddingVector],
    nlist: usize,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = vectors.len();
    let dim = vectors[0].dimension();
    let init = rand::seq::index::sample(&mut rng, n, nlist);
    let mut centroids: Vec<Vec<f64>> = init.iter().map(|i| vectors[i].values.clone()).collect();
    let mut assignments = vec![0usize; n];

    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (pos, v) in vectors.iter().enumerate() {
            let mut best = 0usize;
            let mut best_dot = f64::NEG_INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = dot(&v.values, centroid);
                if d > best_dot {
                    best_dot = d;
                    best = c;
                }
            }
            if assignments[pos] != best {
                assignments[pos] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0f64; dim]; nlist];
        let mut counts = vec![0usize; nlist];
        for (pos, v) in vectors.iter().enumerate() {
            let c = assignments[pos];
            counts[c] += 1;
            for (s, val) in sums[c].iter_mut().zip(&v.values) {
                *s += val;
            }
        }
        for c in 0..nlist {
            if counts[c] == 0 {
                continue;
            }
            let norm = l2_norm(&sums[c]);
            if norm > 0.0 {
                for s in &mut sums[c] {
                    *s /= norm;
                }
                centroids[c] = sums[c].clone();
            }
        }
        if !changed {
            break;
        }
    }
    (centroids, assignments)
}

/// Embed every requirement of a corpus with the given provider.
pub fn embed_corpus(
    provider: &dyn EmbeddingProvider,
    requirements: &[Requirement],
) -> Result<Vec<EmbeddingVector>> {
    requirements.iter().map(|r| provider.embed(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<EmbeddingVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let values: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                EmbeddingVector::normalized(format!("r{i:04}"), values).unwrap()
            })
            .collect()
    }

    fn brute_force(
        vectors: &[EmbeddingVector],
        query: &EmbeddingVector,
        k: usize,
    ) -> Vec<CosineHit> {
        let mut hits: Vec<CosineHit> = vectors
            .iter()
            .filter(|v| v.requirement_id != query.requirement_id)
            .map(|v| CosineHit {
                id: v.requirement_id.clone(),
                cosine: cosine(&query.values, &v.values).unwrap(),
            })
            .collect();
        hits.sort_by(|a, b| b.cosine.total_cmp(&a.cosine).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k);
        hits
    }

    #[test]
    fn cosine_identity_orthogonal_and_hand_case() {
        let v = vec![0.3, -0.4, 0.5];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap()).abs() < 1e-12);
        let half_sqrt2 = 2.0f64.sqrt() / 2.0;
        let c = cosine(&[1.0, 0.0], &[half_sqrt2, half_sqrt2]).unwrap();
        let expected = 7071.0 / 10_000.0;
        assert!((c - expected).abs() < 1e-4);
    }

    #[test]
    fn cosine_rejects_zero_vector_and_dim_mismatch() {
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn precomputed_provider_round_trip() {
        let raw = "DIM 4\nr1\t1 0 0 0\nr2\t0 2 0 0\n";
        let p = PrecomputedProvider::parse(raw, "test").unwrap();
        let req = Requirement {
            id: "r2".into(),
            source: "t".into(),
            text: "ignored".into(),
        };
        let v = p.embed(&req).unwrap();
        assert_eq!(v.values, vec![0.0, 1.0, 0.0, 0.0]);
        assert!((v.norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn precomputed_provider_missing_id_names_it() {
        let p = PrecomputedProvider::parse("DIM 2\nr1\t1 0\n", "test").unwrap();
        let req = Requirement {
            id: "r9".into(),
            source: "t".into(),
            text: "x".into(),
        };
        match p.embed(&req) {
            Err(Error::Lookup(m)) => assert!(m.contains("r9")),
            other => panic!("expected lookup error, got {other:?}"),
        }
    }

    #[test]
    fn precomputed_dimension_mismatch_is_config_error() {
        assert!(matches!(
            PrecomputedProvider::parse("DIM 3\nr1\t1 0\n", "test"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hashed_provider_is_deterministic() {
        let p = HashedProvider::new(64).unwrap();
        let a = p.embed_text("x", "the uav shall land").unwrap();
        let b = p.embed_text("x", "the uav shall land").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hashed_provider_distinguishes_texts() {
        let p = HashedProvider::new(8).unwrap();
        let a = p.embed_text("a", "uav shall land").unwrap();
        let b = p.embed_text("b", "uav shall hover").unwrap();
        let c = cosine(&a.values, &b.values).unwrap();
        assert!(c < 1.0 - 1e-9, "cosine {c} should drop below 1");
    }

    #[test]
    fn flat_search_finds_duplicate_text_at_cosine_one() {
        let p = HashedProvider::new(64).unwrap();
        let texts = [
            ("r1", "the uav shall land"),
            ("r2", "the uav shall land"),
            ("r3", "completely different words here"),
        ];
        let vectors: Vec<EmbeddingVector> = texts
            .iter()
            .map(|(id, t)| p.embed_text(id, t).unwrap())
            .collect();
        let query = vectors[0].clone();
        let index = VectorIndex::build(vectors, IndexKind::Flat, None, 42).unwrap();
        let hits = index.search(&query, 1, None).unwrap();
        assert_eq!(hits[0].id, "r2");
        assert!((hits[0].cosine - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_matches_brute_force_on_random_corpora() {
        for trial in 0..20 {
            let vectors = random_vectors(60, 16, trial);
            let index = VectorIndex::build(vectors.clone(), IndexKind::Flat, None, 42).unwrap();
            let query = vectors[(trial as usize * 7) % vectors.len()].clone();
            let k = 1 + (trial as usize % 10);
            assert_eq!(index.search(&query, k, None).unwrap(), brute_force(&vectors, &query, k));
        }
    }

    #[test]
    fn ivf_posting_lists_partition_all_ids() {
        let vectors = random_vectors(100, 8, 7);
        let index = VectorIndex::build(vectors, IndexKind::Ivf, Some(10), 42).unwrap();
        let ivf = index.ivf.as_ref().unwrap();
        assert_eq!(ivf.centroids.len(), 10);
        let total: usize = ivf.posting.iter().map(Vec::len).sum();
        assert_eq!(total, 100);
        let mut seen = [false; 100];
        for list in &ivf.posting {
            for &pos in list {
                assert!(!seen[pos], "position {pos} in two posting lists");
                seen[pos] = true;
            }
        }
    }

    #[test]
    fn nlist_above_n_is_config_error() {
        let vectors = random_vectors(4, 4, 1);
        assert!(matches!(
            VectorIndex::build(vectors, IndexKind::Ivf, Some(5), 42),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ivf_full_probe_equals_flat() {
        let vectors = random_vectors(120, 12, 3);
        let flat = VectorIndex::build(vectors.clone(), IndexKind::Flat, None, 42).unwrap();
        let ivf = VectorIndex::build(vectors.clone(), IndexKind::Ivf, Some(11), 42).unwrap();
        // nlist = N: every vector seeds its own centroid.
        let singleton = VectorIndex::build(vectors.clone(), IndexKind::Ivf, Some(120), 42).unwrap();
        for q in [0, 17, 63] {
            let query = &vectors[q];
            let exact = flat.search(query, 5, None).unwrap();
            assert_eq!(ivf.search(query, 5, Some(11)).unwrap(), exact);
            assert_eq!(singleton.search(query, 5, Some(120)).unwrap(), exact);
        }
    }

    #[test]
    fn ivf_recall_non_decreasing_in_nprobe() {
        let vectors = random_vectors(150, 10, 9);
        let nlist = 12;
        let flat = VectorIndex::build(vectors.clone(), IndexKind::Flat, None, 42).unwrap();
        let ivf = VectorIndex::build(vectors.clone(), IndexKind::Ivf, Some(nlist), 42).unwrap();
        let query = &vectors[5];
        let k = 10;
        let exact: Vec<String> = flat
            .search(query, k, None)
            .unwrap()
            .into_iter()
            .map(|h| h.id)
            .collect();
        let mut prev = 0usize;
        for nprobe in 1..=nlist {
            let got = ivf.search(query, k, Some(nprobe)).unwrap();
            let overlap = got.iter().filter(|h| exact.contains(&h.id)).count();
            assert!(
                overlap >= prev,
                "recall dropped from {prev} to {overlap} at nprobe {nprobe}"
            );
            prev = overlap;
        }
        assert_eq!(prev, k);
    }

    #[test]
    fn output_size_and_ordering_invariants() {
        let vectors = random_vectors(30, 8, 11);
        let index = VectorIndex::build(vectors.clone(), IndexKind::Flat, None, 42).unwrap();
        let hits = index.search(&vectors[0], 100, None).unwrap();
        assert_eq!(hits.len(), 29, "own id excluded");
        for w in hits.windows(2) {
            assert!(w[0].cosine >= w[1].cosine);
        }
    }

    #[test]
    fn index_save_load_round_trip() {
        let vectors = random_vectors(40, 6, 13);
        let index = VectorIndex::build(vectors.clone(), IndexKind::Ivf, Some(6), 42).unwrap();
        let saved = index.save_to_string();
        let back = VectorIndex::load_from_string(&saved, "test").unwrap();
        for q in [0, 10, 39] {
            assert_eq!(
                back.search(&vectors[q], 7, Some(6)).unwrap(),
                index.search(&vectors[q], 7, Some(6)).unwrap()
            );
        }
    }

    #[test]
    fn dimension_mismatch_on_search_is_error() {
        let vectors = random_vectors(5, 8, 1);
        let index = VectorIndex::build(vectors, IndexKind::Flat, None, 42).unwrap();
        let query = EmbeddingVector::normalized("q", vec![1.0, 0.0]).unwrap();
        assert!(index.search(&query, 1, None).is_err());
    }
}

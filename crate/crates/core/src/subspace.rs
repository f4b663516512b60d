//! Bias subspaces: orthonormal sets of directions tied to a concept.
//!
//! Directions come from a word-pair difference (`he - she`), from the top
//! principal components of a mean-centered word set, or from a seeded random
//! draw used as a control.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingSet;
use crate::numeric::{dot, norm};

/// Unit-norm and pairwise-orthogonality tolerance for basis vectors.
pub const BASIS_TOLERANCE: f64 = 1e-9;
/// Pair differences shorter than this have no usable direction.
pub const DEGENERATE_PAIR_NORM: f64 = 1e-12;
/// Power iteration stops once `1 - |cos|` between successive iterates is below this.
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 5_000;

// Eigenvalues below this fraction of the trace are treated as exactly zero.
const NULL_EIGENVALUE: f64 = 1e-13;
const START_SEED: u64 = 0x5eed_0f_5ca1e;

#[derive(Debug, Error, PartialEq)]
pub enum SubspaceError {
    #[error("word {0:?} is not in the embedding set")]
    MissingWord(String),
    #[error("pair difference has norm {norm:e}, too small to define a direction")]
    DegenerateDirection { norm: f64 },
    #[error("need at least 2 words, got {0}")]
    TooFewWords(usize),
    #[error("requested {requested} components but at most {max} are available")]
    RankOutOfRange { requested: usize, max: usize },
    #[error("component {component} did not converge within {iterations} iterations")]
    NotConverged { component: usize, iterations: usize },
    #[error("all words coincide after centering; no principal direction exists")]
    DegenerateSpectrum,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    PairDifference,
    PrincipalComponents,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: Method,
    pub source_words: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// An orthonormal basis of `k >= 1` directions in a `dimension`-dimensional space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSubspace")]
pub struct BiasSubspace {
    dimension: usize,
    basis: Vec<Vec<f64>>,
    provenance: Provenance,
}

#[derive(Deserialize)]
struct RawSubspace {
    dimension: usize,
    basis: Vec<Vec<f64>>,
    provenance: Provenance,
}

impl TryFrom<RawSubspace> for BiasSubspace {
    type Error = SubspaceError;

    fn try_from(raw: RawSubspace) -> Result<Self, Self::Error> {
        let subspace = BiasSubspace::new(raw.basis, raw.provenance)?;
        if subspace.dimension != raw.dimension {
            return Err(SubspaceError::DimensionMismatch {
                expected: raw.dimension,
                found: subspace.dimension,
            });
        }
        Ok(subspace)
    }
}

impl BiasSubspace {
    pub fn new(basis: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self, SubspaceError> {
        let Some(first) = basis.first() else {
            return Err(SubspaceError::InvalidBasis("basis is empty".into()));
        };
        let dimension = first.len();
        if dimension == 0 {
            return Err(SubspaceError::InvalidBasis("zero-dimensional basis".into()));
        }
        if basis.len() > dimension {
            return Err(SubspaceError::InvalidBasis(format!(
                "{} vectors exceed dimension {dimension}",
                basis.len()
            )));
        }
        for (i, b) in basis.iter().enumerate() {
            if b.len() != dimension {
                return Err(SubspaceError::DimensionMismatch {
                    expected: dimension,
                    found: b.len(),
                });
            }
            if b.iter().any(|x| !x.is_finite()) {
                return Err(SubspaceError::InvalidBasis(format!("vector {i} is not finite")));
            }
            let n = norm(b);
            if (n - 1.0).abs() > BASIS_TOLERANCE {
                return Err(SubspaceError::InvalidBasis(format!(
                    "vector {i} has norm {n}, expected 1"
                )));
            }
            for (j, other) in basis[..i].iter().enumerate() {
                let c = dot(b, other);
                if c.abs() > BASIS_TOLERANCE {
                    return Err(SubspaceError::InvalidBasis(format!(
                        "vectors {j} and {i} have inner product {c:e}"
                    )));
                }
            }
        }
        Ok(Self {
            dimension,
            basis,
            provenance,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of basis directions.
    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn top(&self) -> &[f64] {
        &self.basis[0]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

/// Singular-value decay of a word set plus alignment with a reference direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// σ_1..σ_m of the mean-centered word matrix, descending.
    pub singular_values: Vec<f64>,
    /// σ_x / σ_1 for x = 2..m.
    pub ratios: Vec<f64>,
    /// |cos| between the top principal direction and the reference's top direction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_alignment: Option<f64>,
}

fn lookup<'a>(set: &'a EmbeddingSet, word: &str) -> Result<&'a [f64], SubspaceError> {
    set.get(word)
        .ok_or_else(|| SubspaceError::MissingWord(word.to_string()))
}

/// The normalized difference `v_w1 - v_w2` as a one-dimensional subspace.
pub fn direction_from_pair(
    set: &EmbeddingSet,
    w1: &str,
    w2: &str,
) -> Result<BiasSubspace, SubspaceError> {
    let a = lookup(set, w1)?;
    let b = lookup(set, w2)?;
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = norm(&diff);
    if n < DEGENERATE_PAIR_NORM {
        return Err(SubspaceError::DegenerateDirection { norm: n });
    }
    let direction = diff.into_iter().map(|x| x / n).collect();
    BiasSubspace::new(
        vec![direction],
        Provenance {
            method: Method::PairDifference,
            source_words: vec![w1.to_string(), w2.to_string()],
            seed: None,
        },
    )
}

/// Top-`k` principal directions of the mean-centered vectors of `words`.
///
/// Each direction is sign-normalized so that its largest-magnitude component
/// is positive.
pub fn principal_subspace(
    set: &EmbeddingSet,
    words: &[impl AsRef<str>],
    k: usize,
) -> Result<BiasSubspace, SubspaceError> {
    let pca = CenteredWords::new(set, words)?;
    pca.check_rank(k)?;
    let components = pca.components(k)?;
    BiasSubspace::new(
        components.directions,
        Provenance {
            method: Method::PrincipalComponents,
            source_words: words.iter().map(|w| w.as_ref().to_string()).collect(),
            seed: None,
        },
    )
}

/// Ratios of the leading `m` singular values of the centered word matrix.
pub fn spectrum(
    set: &EmbeddingSet,
    words: &[impl AsRef<str>],
    m: usize,
    reference: Option<&BiasSubspace>,
) -> Result<SpectrumReport, SubspaceError> {
    let pca = CenteredWords::new(set, words)?;
    pca.check_rank(m)?;
    if let Some(r) = reference {
        if r.dimension() != set.dimension() {
            return Err(SubspaceError::DimensionMismatch {
                expected: set.dimension(),
                found: r.dimension(),
            });
        }
    }
    let components = pca.components(m)?;
    let singular_values = components.singular_values;
    let top = singular_values[0];
    let mut ratios = Vec::with_capacity(m.saturating_sub(1));
    let mut previous = 1.0_f64;
    for s in &singular_values[1..] {
        let r = (s / top).clamp(0.0, previous);
        ratios.push(r);
        previous = r;
    }
    let top_alignment = reference.map(|r| dot(&components.directions[0], r.top()).abs().min(1.0));
    Ok(SpectrumReport {
        singular_values,
        ratios,
        top_alignment,
    })
}

/// |cos| between the top directions of two subspaces.
pub fn subspace_alignment(a: &BiasSubspace, b: &BiasSubspace) -> Result<f64, SubspaceError> {
    if a.dimension() != b.dimension() {
        return Err(SubspaceError::DimensionMismatch {
            expected: a.dimension(),
            found: b.dimension(),
        });
    }
    Ok(dot(a.top(), b.top()).abs().min(1.0))
}

/// A seeded unit vector drawn uniformly from the sphere.
pub fn random_direction(dimension: usize, seed: u64) -> BiasSubspace {
    assert!(dimension >= 1, "dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = loop {
        let v: Vec<f64> = (0..dimension).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 1e-8 {
            break v.into_iter().map(|x| x / n).collect();
        }
    };
    BiasSubspace::new(
        vec![direction],
        Provenance {
            method: Method::Random,
            source_words: Vec::new(),
            seed: Some(seed),
        },
    )
    .expect("normalized gaussian draw is a valid basis")
}

/// Mean-centered rows for a word list, stored row-major.
struct CenteredWords {
    rows: Vec<f64>,
    count: usize,
    dimension: usize,
}

struct Components {
    directions: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
}

impl CenteredWords {
    fn new(set: &EmbeddingSet, words: &[impl AsRef<str>]) -> Result<Self, SubspaceError> {
        if words.len() < 2 {
            return Err(SubspaceError::TooFewWords(words.len()));
        }
        let dimension = set.dimension();
        let mut rows = Vec::with_capacity(words.len() * dimension);
        for w in words {
            rows.extend_from_slice(lookup(set, w.as_ref())?);
        }
        let count = words.len();
        let mut mean = vec![0.0; dimension];
        for row in rows.chunks_exact(dimension) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        for row in rows.chunks_exact_mut(dimension) {
            for (x, m) in row.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        Ok(Self {
            rows,
            count,
            dimension,
        })
    }

    fn check_rank(&self, k: usize) -> Result<(), SubspaceError> {
        let max = self.count.min(self.dimension);
        if k == 0 || k > max {
            return Err(SubspaceError::RankOutOfRange { requested: k, max });
        }
        Ok(())
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Works on the `count x count` Gram matrix, which is small for word
    /// lists and exactly invariant under rotations of the embedding space.
    fn components(&self, k: usize) -> Result<Components, SubspaceError> {
        let n = self.count;
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let g = dot(self.row(i), self.row(j));
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
        if trace <= 0.0 {
            return Err(SubspaceError::DegenerateSpectrum);
        }
        let pairs = top_eigenpairs(&mut gram, n, k, trace)?;

        let mut directions: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut singular_values = Vec::with_capacity(k);
        for (value, left) in pairs {
            singular_values.push(value.max(0.0).sqrt());
            let mut v = vec![0.0; self.dimension];
            if value > 0.0 {
                for (i, u) in left.iter().enumerate() {
                    for (vd, x) in v.iter_mut().zip(self.row(i)) {
                        *vd += u * x;
                    }
                }
            }
            orthogonalize(&mut v, &directions);
            if norm(&v) <= 1e-12 {
                v = completion(self.dimension, &directions);
            }
            normalize(&mut v);
            sign_normalize(&mut v);
            directions.push(v);
        }
        Ok(Components {
            directions,
            singular_values,
        })
    }
}

/// Leading eigenpairs of a symmetric positive semidefinite matrix by power
/// iteration with Hotelling deflation. `matrix` is deflated in place.
fn top_eigenpairs(
    matrix: &mut [f64],
    n: usize,
    k: usize,
    trace: f64,
) -> Result<Vec<(f64, Vec<f64>)>, SubspaceError> {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let null_level = NULL_EIGENVALUE * trace;
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut pairs = Vec::with_capacity(k);
    let mut next = vec![0.0; n];

    for component in 0..k {
        let mut v = start.clone();
        orthogonalize(&mut v, &found);
        if norm(&v) <= 1e-12 {
            v = completion(n, &found);
        }
        normalize(&mut v);

        let mut converged = false;
        let mut is_null = false;
        for _ in 0..POWER_MAX_ITERATIONS {
            mat_vec(matrix, n, &v, &mut next);
            orthogonalize(&mut next, &found);
            let len = norm(&next);
            if len <= null_level {
                is_null = true;
                break;
            }
            next.iter_mut().for_each(|x| *x /= len);
            let cos = dot(&next, &v).abs();
            std::mem::swap(&mut v, &mut next);
            if 1.0 - cos <= POWER_TOLERANCE {
                converged = true;
                break;
            }
        }
        if is_null {
            let v = completion(n, &found);
            pairs.push((0.0, v.clone()));
            found.push(v);
            continue;
        }
        if !converged {
            return Err(SubspaceError::NotConverged {
                component: component + 1,
                iterations: POWER_MAX_ITERATIONS,
            });
        }
        mat_vec(matrix, n, &v, &mut next);
        let mut value = dot(&v, &next);
        if value <= null_level {
            value = 0.0;
        }
        for i in 0..n {
            for j in 0..n {
                matrix[i * n + j] -= value * v[i] * v[j];
            }
        }
        pairs.push((value, v.clone()));
        found.push(v);
    }
    Ok(pairs)
}

fn mat_vec(matrix: &[f64], n: usize, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&matrix[i * n..(i + 1) * n], v);
    }
}

/// Removes the components along an orthonormal set, twice for stability.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    v.iter_mut().for_each(|x| *x /= n);
}

/// A unit vector orthogonal to `basis`, taken from the standard basis.
fn completion(dimension: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for axis in 0..dimension {
        let mut e = vec![0.0; dimension];
        e[axis] = 1.0;
        orthogonalize(&mut e, basis);
        let n = norm(&e);
        if n > 0.5 {
            normalize(&mut e);
            return e;
        }
        if best.as_ref().is_none_or(|(b, _)| n > *b) {
            best = Some((n, e));
        }
    }
    let (_, mut e) = best.expect("dimension is positive");
    normalize(&mut e);
    e
}

/// Flips `v` so its largest-magnitude component (first on ties) is positive.
fn sign_normalize(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

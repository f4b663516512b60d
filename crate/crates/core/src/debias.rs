//! Projection debiasing: `v' = v - sum_j <v, b_j> b_j`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::embedding::EmbeddingSet;
use crate::numeric::dot;
use crate::subspace::BiasSubspace;

/// Largest tolerated |<v', b_j>| after a table-wide projection.
pub const MAX_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum DebiasError {
    #[error("dimension mismatch: vector has {found} components, subspace has {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("word {0:?} is not in the embedding set")]
    MissingWord(String),
    #[error("projection residual {residual:e} exceeds {MAX_RESIDUAL:e}; subspace is corrupted")]
    ResidualExceeded { residual: f64 },
}

/// Summary of a table-wide projection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DebiasRun {
    pub subspace: BiasSubspace,
    /// Rows whose vector actually changed.
    pub words_modified: usize,
    pub max_residual: f64,
}

pub fn project_out(v: &[f64], s: &BiasSubspace) -> Result<Vec<f64>, DebiasError> {
    if v.len() != s.dimension() {
        return Err(DebiasError::DimensionMismatch {
            expected: s.dimension(),
            found: v.len(),
        });
    }
    let mut out = v.to_vec();
    for b in s.basis() {
        let c = dot(v, b);
        out.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
    }
    Ok(out)
}

fn residual(v: &[f64], s: &BiasSubspace) -> f64 {
    s.basis()
        .iter()
        .map(|b| dot(v, b).abs())
        .fold(0.0, f64::max)
}

/// Projects every vector of `set`. Order and vocabulary are unchanged.
pub fn debias_all(
    set: &EmbeddingSet,
    s: &BiasSubspace,
) -> Result<(EmbeddingSet, DebiasRun), DebiasError> {
    let selected = vec![true; set.len()];
    apply(set, s, &selected)
}

/// Projects only the vectors of `words`; all other rows stay bit-identical.
pub fn debias_selected(
    set: &EmbeddingSet,
    s: &BiasSubspace,
    words: &[impl AsRef<str>],
) -> Result<(EmbeddingSet, DebiasRun), DebiasError> {
    let mut selected = vec![false; set.len()];
    for w in words {
        let w = w.as_ref();
        let i = set
            .position(w)
            .ok_or_else(|| DebiasError::MissingWord(w.to_string()))?;
        selected[i] = true;
    }
    apply(set, s, &selected)
}

fn apply(
    set: &EmbeddingSet,
    s: &BiasSubspace,
    selected: &[bool],
) -> Result<(EmbeddingSet, DebiasRun), DebiasError> {
    if set.dimension() != s.dimension() {
        return Err(DebiasError::DimensionMismatch {
            expected: s.dimension(),
            found: set.dimension(),
        });
    }
    let rows: Vec<(Vec<f64>, bool, f64)> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let row = set.row(i);
            if !selected[i] {
                return (row.to_vec(), false, 0.0);
            }
            let projected = project_out(row, s).expect("dimension checked above");
            let changed = projected.as_slice() != row;
            let r = residual(&projected, s);
            (projected, changed, r)
        })
        .collect();

    let max_residual = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    if max_residual > MAX_RESIDUAL {
        return Err(DebiasError::ResidualExceeded {
            residual: max_residual,
        });
    }
    let words_modified = rows.iter().filter(|r| r.1).count();
    let out = set.with_rows(rows.into_iter().map(|r| r.0).collect());
    Ok((
        out,
        DebiasRun {
            subspace: s.clone(),
            words_modified,
            max_residual,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::{direction_from_pair, Method, Provenance};

    fn axis(v: Vec<f64>) -> BiasSubspace {
        BiasSubspace::new(
            vec![v],
            Provenance {
                method: Method::Random,
                source_words: vec![],
                seed: None,
            },
        )
        .unwrap()
    }

    fn table() -> EmbeddingSet {
        EmbeddingSet::from_entries(
            2,
            vec![
                ("he".to_string(), vec![1.0, 0.0]),
                ("she".to_string(), vec![0.0, 1.0]),
                ("it".to_string(), vec![2.0, 2.0]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn axis_projection_examples() {
        let s = axis(vec![1.0, 0.0]);
        assert_eq!(project_out(&[1.0, 1.0], &s).unwrap(), vec![0.0, 1.0]);
        assert_eq!(project_out(&[0.0, 3.0], &s).unwrap(), vec![0.0, 3.0]);
        assert_eq!(project_out(&[2.0, 0.0], &s).unwrap(), vec![0.0, 0.0]);
        assert_eq!(
            project_out(&[1.0, 2.0, 3.0], &s),
            Err(DebiasError::DimensionMismatch { expected: 2, found: 3 })
        );
    }

    #[test]
    fn he_she_collapse_to_midpoint() {
        let set = table();
        let s = direction_from_pair(&set, "he", "she").unwrap();
        let (out, run) = debias_all(&set, &s).unwrap();
        for w in ["he", "she"] {
            let v = out.get(w).unwrap();
            assert!((v[0] - 0.5).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15, "{w}: {v:?}");
        }
        // (2,2) is orthogonal to (1,-1)/sqrt2.
        assert_eq!(out.get("it"), Some(&[2.0, 2.0][..]));
        assert_eq!(run.words_modified, 2);
        assert!(run.max_residual <= 1e-15);
        assert_eq!(out.words(), set.words());
    }

    #[test]
    fn debias_twice_is_idempotent() {
        let set = table();
        let s = axis(vec![0.6, 0.8]);
        let (once, _) = debias_all(&set, &s).unwrap();
        let (twice, _) = debias_all(&once, &s).unwrap();
        for (a, b) in once.iter().zip(twice.iter()) {
            for (x, y) in a.1.iter().zip(b.1) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn selected_subsets() {
        let set = table();
        let s = axis(vec![0.6, 0.8]);
        let all = debias_all(&set, &s).unwrap().0;
        let words: Vec<&str> = set.words().iter().map(String::as_str).collect();
        assert_eq!(debias_selected(&set, &s, &words).unwrap().0, all);
        let none: [&str; 0] = [];
        assert_eq!(debias_selected(&set, &s, &none).unwrap().0, set);

        let (one, run) = debias_selected(&set, &s, &["he"]).unwrap();
        let differing = set.iter().zip(one.iter()).filter(|(a, b)| a.1 != b.1).count();
        assert_eq!(differing, 1);
        assert_eq!(run.words_modified, 1);
        assert_eq!(one.get("she"), set.get("she"));

        assert_eq!(
            debias_selected(&set, &s, &["nobody"]).unwrap_err(),
            DebiasError::MissingWord("nobody".into())
        );
    }

    #[test]
    fn table_dimension_must_match() {
        let s = axis(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            debias_all(&table(), &s),
            Err(DebiasError::DimensionMismatch { .. })
        ));
    }
}

//! Field-error metrics against a reference solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::GridSolution;

/// Errors of one species over all snapshots and nodes. Relative metrics
/// are `None` when the reference norm is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesError {
    pub mse: f64,
    pub rel_l2: Option<f64>,
    pub rel_linf: Option<f64>,
    /// `|pred − ref|` per snapshot and node.
    pub abs_error: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub activator: SpeciesError,
    pub substrate: SpeciesError,
}

impl ErrorReport {
    pub fn species(&self, i: usize) -> &SpeciesError {
        if i == 0 {
            &self.activator
        } else {
            &self.substrate
        }
    }
}

/// Metrics for flat field arrays of equal length.
pub fn field_errors(pred: &[f64], reference: &[f64]) -> Result<(f64, Option<f64>, Option<f64>)> {
    if pred.len() != reference.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "field lengths {} and {}",
            pred.len(),
            reference.len()
        )));
    }
    let mut sq = 0.0;
    let mut ref_sq = 0.0;
    let mut max_err: f64 = 0.0;
    let mut max_ref: f64 = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        let e = p - r;
        sq += e * e;
        ref_sq += r * r;
        max_err = max_err.max(e.abs());
        max_ref = max_ref.max(r.abs());
    }
    let mse = sq / pred.len() as f64;
    let rel_l2 = (ref_sq > 0.0).then(|| (sq / ref_sq).sqrt());
    let rel_linf = (max_ref > 0.0).then(|| max_err / max_ref);
    Ok((mse, rel_l2, rel_linf))
}

pub fn compare(pred: &GridSolution, reference: &GridSolution) -> Result<ErrorReport> {
    if !pred.same_grid(reference) {
        return Err(Error::Shape(format!(
            "prediction grid {:?}×{} times does not match reference grid {:?}×{} times",
            pred.axes.iter().map(Vec::len).collect::<Vec<_>>(),
            pred.times.len(),
            reference.axes.iter().map(Vec::len).collect::<Vec<_>>(),
            reference.times.len()
        )));
    }
    let one = |i: usize| -> Result<SpeciesError> {
        let (p, r) = (pred.species(i), reference.species(i));
        if p.iter().zip(r).any(|(a, b)| a.len() != b.len()) || p.len() != r.len() {
            return Err(Error::Shape("field arrays do not match the grid".into()));
        }
        let flat_p: Vec<f64> = p.iter().flatten().copied().collect();
        let flat_r: Vec<f64> = r.iter().flatten().copied().collect();
        let (mse, rel_l2, rel_linf) = field_errors(&flat_p, &flat_r)?;
        let abs_error = p
            .iter()
            .zip(r)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect())
            .collect();
        Ok(SpeciesError {
            mse,
            rel_l2,
            rel_linf,
            abs_error,
        })
    };
    Ok(ErrorReport {
        activator: one(0)?,
        substrate: one(1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_examples() {
        let (m, l2, li) = field_errors(&[3.0, 5.0], &[3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(l2.unwrap(), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(li.unwrap(), 0.25, epsilon = 1e-15);
        let (m, l2, li) = field_errors(&[1.1; 7], &[1.0; 7]).unwrap();
        assert_abs_diff_eq!(m, 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(l2.unwrap(), 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(li.unwrap(), 0.1, epsilon = 1e-14);
        let (_, l2, li) = field_errors(&[1.0], &[0.0]).unwrap();
        assert_eq!((l2, li), (None, None));
    }

    #[test]
    fn grid_mismatch_is_shape_error() {
        let g = |n: usize| GridSolution {
            axes: vec![(0..n).map(|i| i as f64).collect()],
            times: vec![0.0],
            c_a: vec![vec![1.0; n]],
            c_s: vec![vec![1.0; n]],
            meta: None,
        };
        assert!(matches!(compare(&g(3), &g(4)), Err(Error::Shape(_))));
        let r = compare(&g(3), &g(3)).unwrap();
        assert_eq!(r.activator.mse, 0.0);
        assert_eq!(r.substrate.rel_l2, Some(0.0));
    }
}

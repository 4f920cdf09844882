//! Label propagation with class normalization.
//!
//! Starting from a column-normalized one-hot label matrix `Y0`, the solver
//! iterates
//!
//! ```text
//! Y(t+1) = alpha * S * Y(t) + (1 - alpha) * Y0
//! ```
//!
//! until the largest absolute entry change drops below `tolerance`. The fixed
//! point is `(1 - alpha) (I - alpha S)^{-1} Y0`, which [`solve_closed_form`]
//! computes directly. It minimizes `|f - Y|^2 + lambda f^T L_sym f` column by
//! column with `alpha = 1 / (1 + lambda)`; only `alpha` is exposed.
//!
//! Holdout nodes are ordinary unlabeled nodes here. This module knows nothing
//! about roles.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `n x C` matrix of non-negative soft labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: DMatrix<f64>,
}

impl LabelMatrix {
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        if let Some((idx, _)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            let n = values.nrows().max(1);
            return Err(Error::InvalidInput(format!(
                "label matrix entry ({}, {}) must be finite and non-negative",
                idx % n,
                idx / n
            )));
        }
        Ok(LabelMatrix { values })
    }

    pub fn zeros(n: usize, classes: usize) -> Self {
        LabelMatrix {
            values: DMatrix::zeros(n, classes),
        }
    }

    pub fn nodes(&self) -> usize {
        self.values.nrows()
    }

    pub fn classes(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Divides every column by its sum. All-zero columns stay all-zero.
    pub fn normalize_columns(mut self) -> Self {
        for mut col in self.values.column_iter_mut() {
            let total: f64 = col.sum();
            if total > 0.0 {
                col /= total;
            }
        }
        self
    }

    pub fn hard_labels(&self) -> Vec<usize> {
        argmax_rows(&self.values)
    }

    /// Rows whose entries are all zero, i.e. nodes no label reached.
    pub fn unreached_rows(&self) -> Vec<usize> {
        self.values
            .row_iter()
            .enumerate()
            .filter(|(_, r)| r.iter().all(|&v| v == 0.0))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Row-wise argmax; ties go to the lowest column index.
pub fn argmax_rows(values: &DMatrix<f64>) -> Vec<usize> {
    values
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// One-hot rows for known nodes, zero rows elsewhere, then column-normalized.
pub fn init_label_matrix(n: usize, classes: usize, known: &[(usize, usize)]) -> Result<LabelMatrix> {
    let mut values = DMatrix::zeros(n, classes);
    for &(node, class) in known {
        if node >= n || class >= classes {
            return Err(Error::InvalidInput(format!(
                "known label ({node}, {class}) out of range for {n} nodes x {classes} classes"
            )));
        }
        if values.row(node).iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidInput(format!(
                "node {node} has more than one known label"
            )));
        }
        values[(node, class)] = 1.0;
    }
    Ok(LabelMatrix { values }.normalize_columns())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpConfig {
    pub alpha: f64,
    pub max_iterations: usize,
    /// Stop once the max-abs entry change of one iteration falls below this.
    pub tolerance: f64,
    /// Kernel width for graph construction.
    pub sigma: f64,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            alpha: 0.99,
            max_iterations: 5000,
            tolerance: 1e-9,
            sigma: 0.22,
        }
    }
}

impl LpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub soft_labels: LabelMatrix,
    pub hard_labels: Vec<usize>,
    pub iterations_used: usize,
    pub converged: bool,
    pub final_delta: f64,
    /// Max-abs entry change of every iteration, in order.
    pub deltas: Vec<f64>,
}

impl PropagationResult {
    /// Writes the per-iteration trace as `iteration,delta` CSV.
    pub fn write_trace_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "iteration,delta")?;
        for (i, d) in self.deltas.iter().enumerate() {
            writeln!(out, "{},{d:e}", i + 1)?;
        }
        Ok(())
    }
}

fn check_shapes(s: &DMatrix<f64>, y0: &LabelMatrix) -> Result<()> {
    if s.nrows() != s.ncols() || s.nrows() != y0.nodes() {
        return Err(Error::DimensionMismatch(format!(
            "operator is {} x {}, label matrix has {} rows",
            s.nrows(),
            s.ncols(),
            y0.nodes()
        )));
    }
    Ok(())
}

/// Runs the fixed-point iteration from `Y(0) = y0`.
pub fn propagate(s: &DMatrix<f64>, y0: &LabelMatrix, config: &LpConfig) -> Result<PropagationResult> {
    config.validate()?;
    check_shapes(s, y0)?;

    let alpha = config.alpha;
    let anchor = &y0.values * (1.0 - alpha);
    let mut current = y0.values.clone();
    let mut next = DMatrix::zeros(current.nrows(), current.ncols());
    let mut deltas = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        next.copy_from(&anchor);
        next.gemm(alpha, s, &current, 1.0);

        let mut delta = 0.0f64;
        for (a, b) in next.iter().zip(current.iter()) {
            if !a.is_finite() {
                return Err(Error::Numeric { iteration });
            }
            delta = delta.max((a - b).abs());
        }
        std::mem::swap(&mut current, &mut next);
        deltas.push(delta);
        if delta < config.tolerance {
            converged = true;
            break;
        }
    }

    let soft_labels = LabelMatrix { values: current };
    Ok(PropagationResult {
        hard_labels: soft_labels.hard_labels(),
        iterations_used: deltas.len(),
        converged,
        final_delta: deltas.last().copied().unwrap_or(0.0),
        deltas,
        soft_labels,
    })
}

/// Solves `(I - alpha S) F = Y0` by dense LU and returns `(1 - alpha) F`.
pub fn solve_closed_form(s: &DMatrix<f64>, y0: &LabelMatrix, alpha: f64) -> Result<LabelMatrix> {
    check_shapes(s, y0)?;
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let n = s.nrows();
    let system = DMatrix::identity(n, n) - s * alpha;
    let solution = system
        .clone()
        .lu()
        .solve(&y0.values)
        .ok_or(Error::Singular {
            residual: f64::INFINITY,
        })?;
    let residual = (&system * &solution - &y0.values).abs().max();
    if residual.is_nan() || residual > 1e-8 {
        return Err(Error::Singular { residual });
    }
    Ok(LabelMatrix {
        values: solution * (1.0 - alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(alpha: f64) -> LpConfig {
        LpConfig {
            alpha,
            ..LpConfig::default()
        }
    }

    #[test]
    fn init_normalizes_columns() {
        let y = init_label_matrix(3, 2, &[(0, 0), (1, 0), (2, 1)]).unwrap();
        assert_eq!(
            y.values(),
            &DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.5, 0.0, 0.0, 1.0])
        );
    }

    #[test]
    fn init_leaves_empty_class_zero() {
        let y = init_label_matrix(2, 2, &[(0, 0)]).unwrap();
        assert_eq!(y.values(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn init_full_coverage_sums_to_one() {
        let y = init_label_matrix(4, 2, &[(0, 0), (1, 1), (2, 0), (3, 1)]).unwrap();
        for col in y.values().column_iter() {
            assert!((col.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn init_rejects_bad_input() {
        assert!(init_label_matrix(2, 2, &[(2, 0)]).is_err());
        assert!(init_label_matrix(2, 2, &[(0, 2)]).is_err());
        assert!(init_label_matrix(2, 2, &[(0, 0), (0, 1)]).is_err());
    }

    #[test]
    fn single_step_matches_unrolled_formula() {
        let s = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, 0.2, 0.4, 0.0, 0.3, 0.2, 0.3, 0.0]);
        let y0 = init_label_matrix(3, 2, &[(0, 0), (2, 1)]).unwrap();
        let config = LpConfig {
            alpha: 0.5,
            max_iterations: 1,
            ..LpConfig::default()
        };
        let r = propagate(&s, &y0, &config).unwrap();
        let expected = &s * y0.values() * 0.5 + y0.values() * 0.5;
        assert_eq!(r.iterations_used, 1);
        assert!(!r.converged);
        assert!((r.soft_labels.values() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn zero_labels_converge_immediately() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let r = propagate(&s, &LabelMatrix::zeros(2, 3), &cfg(0.99)).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations_used, 1);
        assert_eq!(r.soft_labels.values(), &DMatrix::zeros(2, 3));
        assert_eq!(r.soft_labels.unreached_rows(), vec![0, 1]);
    }

    #[test]
    fn argmax_tie_goes_to_lowest_index() {
        let m = DMatrix::from_row_slice(3, 3, &[0.2, 0.2, 0.1, 0.0, 0.0, 0.0, 0.1, 0.3, 0.3]);
        assert_eq!(argmax_rows(&m), vec![0, 0, 1]);
    }

    #[test]
    fn closed_form_identity_limit() {
        let s = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 0.0]);
        let y0 = init_label_matrix(3, 2, &[(0, 0), (1, 1)]).unwrap();
        let f = solve_closed_form(&s, &y0, 1e-12).unwrap();
        assert!((f.values() - y0.values()).abs().max() < 1e-10);
    }

    #[test]
    fn closed_form_decoupled_nodes() {
        let y0 = init_label_matrix(3, 2, &[(0, 0), (1, 1), (2, 0)]).unwrap();
        let f = solve_closed_form(&DMatrix::zeros(3, 3), &y0, 0.7).unwrap();
        assert_eq!(f.values(), &(y0.values() * (1.0 - 0.7)));
    }

    #[test]
    fn path_graph_matches_closed_form() {
        // 0 - 1 - 2 with unit weights: degrees (1, 2, 1)
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let g = crate::graph::AffinityGraph::from_weights(w, 1.0).unwrap();
        let y0 = init_label_matrix(3, 2, &[(0, 0), (2, 1)]).unwrap();
        let config = LpConfig {
            alpha: 0.9,
            ..LpConfig::default()
        };
        let r = propagate(g.normalized(), &y0, &config).unwrap();
        let oracle = solve_closed_form(g.normalized(), &y0, 0.9).unwrap();
        assert!(r.converged);
        assert!((r.soft_labels.values() - oracle.values()).abs().max() < 1e-8);
        assert_eq!(r.hard_labels, oracle.hard_labels());
        // the middle node is equidistant, so both classes score equally and
        // the lowest index wins
        let mid = oracle.values().row(1);
        assert!((mid[0] - mid[1]).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let y0 = LabelMatrix::zeros(3, 2);
        assert!(matches!(
            propagate(&DMatrix::zeros(2, 2), &y0, &cfg(0.5)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            solve_closed_form(&DMatrix::zeros(3, 2), &y0, 0.5),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn non_finite_iterate_names_iteration() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, f64::MAX, f64::MAX, 0.0]);
        let y0 = init_label_matrix(2, 1, &[(0, 0)]).unwrap();
        let err = propagate(&s, &y0, &cfg(0.9)).unwrap_err();
        assert!(matches!(err, Error::Numeric { iteration: 2 }), "{err}");
    }

    #[test]
    fn invalid_alpha_rejected() {
        let s = DMatrix::zeros(1, 1);
        let y0 = LabelMatrix::zeros(1, 1);
        for alpha in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(propagate(&s, &y0, &cfg(alpha)), Err(Error::Config(_))));
        }
    }

    #[test]
    fn trace_csv_has_one_line_per_iteration() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let y0 = init_label_matrix(2, 2, &[(0, 0)]).unwrap();
        let r = propagate(&s, &y0, &cfg(0.5)).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), r.iterations_used + 1);
        assert!(text.starts_with("iteration,delta\n1,"));
    }
}

//! Fully connected Gaussian-kernel affinity graphs over utterance embeddings.
//!
//! Edge weights are `W[i][j] = exp(-|x_i - x_j|^2 / sigma^2)` for `i != j`
//! (squared Euclidean distance over `sigma^2`, no factor of two) and
//! `W[i][i] = 0`. The propagation operator is the symmetrically normalized
//! matrix `S = D^{-1/2} W D^{-1/2}`, and `L_sym = I - S`.
//!
//! All graph arithmetic is `f64` even though embeddings are stored as `f32`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::data::EmbeddingMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph {
    weights: DMatrix<f64>,
    degrees: DVector<f64>,
    normalized: DMatrix<f64>,
    sigma: f64,
}

impl AffinityGraph {
    /// Wraps a precomputed weight matrix. `sigma` is only recorded.
    pub fn from_weights(weights: DMatrix<f64>, sigma: f64) -> Result<Self> {
        let n = weights.nrows();
        if weights.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix must be square, got {n} x {}",
                weights.ncols()
            )));
        }
        for i in 0..n {
            if weights[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("W[{i}][{i}] must be zero")));
            }
            for j in 0..i {
                let w = weights[(i, j)];
                if !(w.is_finite() && w >= 0.0) || w != weights[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "W must be symmetric, finite and non-negative (entry {i},{j})"
                    )));
                }
            }
        }
        let degrees = DVector::from_iterator(n, weights.row_iter().map(|r| r.sum()));
        if let Some(node) = degrees.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedNode { node, sigma });
        }
        let normalized = normalized_operator(&weights, &degrees);
        Ok(AffinityGraph {
            weights,
            degrees,
            normalized,
            sigma,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    /// `S = D^{-1/2} W D^{-1/2}`.
    pub fn normalized(&self) -> &DMatrix<f64> {
        &self.normalized
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        symmetric_laplacian(&self.normalized)
    }
}

/// Builds the dense affinity graph over every row of `embeddings`.
pub fn build_affinity(embeddings: &EmbeddingMatrix, sigma: f64) -> Result<AffinityGraph> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let n = embeddings.rows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "affinity graph needs at least 2 nodes, got {n}"
        )));
    }
    let inv_sigma2 = 1.0 / (sigma * sigma);
    let mut weights = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = embeddings.row(i);
        for j in 0..i {
            let d2: f64 = xi
                .iter()
                .zip(embeddings.row(j))
                .map(|(&a, &b)| {
                    let d = f64::from(a) - f64::from(b);
                    d * d
                })
                .sum();
            let w = (-d2 * inv_sigma2).exp();
            weights[(i, j)] = w;
            weights[(j, i)] = w;
        }
    }
    AffinityGraph::from_weights(weights, sigma)
}

/// `S[i][j] = W[i][j] / sqrt(d_i d_j)`. Degrees must be positive.
pub fn normalized_operator(weights: &DMatrix<f64>, degrees: &DVector<f64>) -> DMatrix<f64> {
    let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    DMatrix::from_fn(weights.nrows(), weights.ncols(), |i, j| {
        weights[(i, j)] * inv_sqrt[i] * inv_sqrt[j]
    })
}

/// `L_sym = I - S`.
pub fn symmetric_laplacian(normalized: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::identity(normalized.nrows(), normalized.ncols()) - normalized
}

/// Writes a matrix as row-major CSV using shortest round-trip scientific notation.
pub fn write_matrix_csv<W: Write>(out: &mut W, matrix: &DMatrix<f64>) -> std::io::Result<()> {
    for row in matrix.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, dim: usize, data: &[f32]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(rows, dim, data.to_vec()).unwrap()
    }

    #[test]
    fn identical_embeddings_have_unit_weight() {
        let g = build_affinity(&matrix(2, 2, &[0.3, 0.4, 0.3, 0.4]), 0.22).unwrap();
        assert_eq!(g.weights()[(0, 1)], 1.0);
        assert_eq!(g.weights()[(0, 0)], 0.0);
        assert_eq!(g.weights()[(1, 1)], 0.0);
    }

    #[test]
    fn distance_sigma_gives_inverse_e() {
        let sigma = 0.5;
        let g = build_affinity(&matrix(2, 2, &[0.0, 0.0, 0.5, 0.0]), sigma).unwrap();
        assert!((g.weights()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((g.weights()[(0, 1)] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn two_node_operator_and_laplacian() {
        let w = 0.3;
        let g = AffinityGraph::from_weights(DMatrix::from_row_slice(2, 2, &[0.0, w, w, 0.0]), 1.0)
            .unwrap();
        assert_eq!(g.degrees().as_slice(), &[w, w]);
        assert!((g.normalized()[(0, 1)] - 1.0).abs() < 1e-15);
        let l = g.laplacian();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        assert!((l - &expected).abs().max() < 1e-15);
        let mut eig: Vec<f64> = expected.symmetric_eigenvalues().iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        assert!(eig[0].abs() < 1e-12 && (eig[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unit_degrees_leave_weights_unchanged() {
        let w = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 0.5 });
        let g = AffinityGraph::from_weights(w.clone(), 1.0).unwrap();
        assert_eq!(g.degrees().as_slice(), &[1.0, 1.0, 1.0]);
        assert!((g.normalized() - &w).abs().max() < 1e-15);
    }

    #[test]
    fn identity_operator_has_zero_laplacian() {
        let l = symmetric_laplacian(&DMatrix::identity(4, 4));
        assert_eq!(l, DMatrix::zeros(4, 4));
    }

    #[test]
    fn isolated_node_is_reported() {
        // node 2 sits far from the others; its weights underflow to exactly 0
        let m = matrix(3, 1, &[0.0, 0.01, 1000.0]);
        let err = build_affinity(&m, 0.22).unwrap_err();
        assert!(matches!(err, Error::IsolatedNode { node: 2, .. }), "{err}");
        assert!(err.to_string().contains("larger sigma"));
    }

    #[test]
    fn bad_sigma_is_config_error() {
        let m = matrix(2, 1, &[0.0, 1.0]);
        assert!(matches!(build_affinity(&m, 0.0), Err(Error::Config(_))));
        assert!(matches!(build_affinity(&m, -1.0), Err(Error::Config(_))));
        assert!(matches!(build_affinity(&m, f64::NAN), Err(Error::Config(_))));
    }

    #[test]
    fn single_node_rejected() {
        assert!(build_affinity(&matrix(1, 2, &[1.0, 2.0]), 1.0).is_err());
    }

    #[test]
    fn csv_dump_round_trips_full_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.1234567890123456, 1e-300, 2.0 / 3.0]);
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let parsed: Vec<f64> = text
            .lines()
            .flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>())
            .collect();
        assert_eq!(parsed, vec![0.0, 0.1234567890123456, 1e-300, 2.0 / 3.0]);
        assert!(text.contains('e'));
    }
}

//! Scalar brute-force oracles.

#![allow(clippy::needless_range_loop)]

pub type Mat = Vec<Vec<f64>>;

pub fn zeros(rows: usize, cols: usize) -> Mat {
    vec![vec![0.0; cols]; rows]
}

pub fn identity(n: usize) -> Mat {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let cols = b.first().map_or(0, Vec::len);
    let mut out = zeros(a.len(), cols);
    for i in 0..a.len() {
        for k in 0..b.len() {
            for j in 0..cols {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// `exp(-|xi - xj|^2 / sigma^2)` off the diagonal, zero on it.
pub fn affinity(points: &[Vec<f64>], sigma: f64) -> Mat {
    let n = points.len();
    let mut w = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let mut d2 = 0.0;
                for d in 0..points[i].len() {
                    d2 += (points[i][d] - points[j][d]).powi(2);
                }
                w[i][j] = (-d2 / (sigma * sigma)).exp();
            }
        }
    }
    w
}

pub fn degrees(w: &Mat) -> Vec<f64> {
    w.iter().map(|r| r.iter().sum()).collect()
}

/// `W[i][j] / sqrt(d_i d_j)`.
pub fn normalized(w: &Mat) -> Mat {
    let d = degrees(w);
    let n = w.len();
    let mut s = zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[i][j] = w[i][j] / (d[i] * d[j]).sqrt();
        }
    }
    s
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Mat, mut b: Mat) -> Mat {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            for k in 0..b[row].len() {
                b[row][k] -= f * b[col][k];
            }
        }
    }
    let cols = b.first().map_or(0, Vec::len);
    let mut x = zeros(n, cols);
    for row in (0..n).rev() {
        for k in 0..cols {
            let mut acc = b[row][k];
            for j in row + 1..n {
                acc -= a[row][j] * x[j][k];
            }
            x[row][k] = acc / a[row][row];
        }
    }
    x
}

/// One-hot known labels, column-normalized, empty columns left at zero.
pub fn init_labels(n: usize, classes: usize, known: &[(usize, usize)]) -> Mat {
    let mut y = zeros(n, classes);
    for &(i, c) in known {
        y[i][c] = 1.0;
    }
    for c in 0..classes {
        let total: f64 = (0..n).map(|i| y[i][c]).sum();
        if total > 0.0 {
            for row in y.iter_mut() {
                row[c] /= total;
            }
        }
    }
    y
}

/// `(1 - alpha) (I - alpha S)^{-1} Y0`.
pub fn closed_form(s: &Mat, y0: &Mat, alpha: f64) -> Mat {
    let n = s.len();
    let mut a = identity(n);
    for i in 0..n {
        for j in 0..n {
            a[i][j] -= alpha * s[i][j];
        }
    }
    solve(a, y0.clone())
        .into_iter()
        .map(|r| r.into_iter().map(|v| v * (1.0 - alpha)).collect())
        .collect()
}

/// First index of the maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..row.len() {
        if row[j] > row[best] {
            best = j;
        }
    }
    best
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Mean cosine of `query` to each class's reference points.
pub fn cs_scores(refs: &[(Vec<f64>, usize)], query: &[f64], classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|c| {
            let members: Vec<&Vec<f64>> = refs.iter().filter(|(_, k)| *k == c).map(|(p, _)| p).collect();
            members.iter().map(|p| cosine(query, p)).sum::<f64>() / members.len() as f64
        })
        .collect()
}

/// Cosine of `query` to each class's mean of unit-normalized references.
pub fn csea_scores(refs: &[(Vec<f64>, usize)], query: &[f64], classes: usize) -> Vec<f64> {
    let dim = query.len();
    (0..classes)
        .map(|c| {
            let mut centroid = vec![0.0; dim];
            let mut count = 0.0;
            for (p, k) in refs {
                if *k == c {
                    let u = unit(p);
                    for d in 0..dim {
                        centroid[d] += u[d];
                    }
                    count += 1.0;
                }
            }
            for v in centroid.iter_mut() {
                *v /= count;
            }
            cosine(query, &centroid)
        })
        .collect()
}

type ScoreFn = fn(&[(Vec<f64>, usize)], &[f64], usize) -> Vec<f64>;

fn predict_with(f: ScoreFn, refs: &[(Vec<f64>, usize)], queries: &[Vec<f64>], classes: usize) -> Vec<usize> {
    queries.iter().map(|q| argmax(&f(refs, q, classes))).collect()
}

fn two_step(
    f: ScoreFn,
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    holdout: &[Vec<f64>],
    classes: usize,
) -> Vec<usize> {
    let pseudo = predict_with(f, labeled, unlabeled, classes);
    let mut refs = labeled.to_vec();
    refs.extend(unlabeled.iter().cloned().zip(pseudo));
    predict_with(f, &refs, holdout, classes)
}

pub fn predict_cs(labeled: &[(Vec<f64>, usize)], holdout: &[Vec<f64>], classes: usize) -> Vec<usize> {
    predict_with(cs_scores, labeled, holdout, classes)
}

pub fn predict_csea(labeled: &[(Vec<f64>, usize)], holdout: &[Vec<f64>], classes: usize) -> Vec<usize> {
    predict_with(csea_scores, labeled, holdout, classes)
}

pub fn predict_2cs(
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    holdout: &[Vec<f64>],
    classes: usize,
) -> Vec<usize> {
    two_step(cs_scores, labeled, unlabeled, holdout, classes)
}

pub fn predict_2csea(
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    holdout: &[Vec<f64>],
    classes: usize,
) -> Vec<usize> {
    two_step(csea_scores, labeled, unlabeled, holdout, classes)
}

/// Closed-form soft labels over `points` with the given known labels.
pub fn lp_soft(points: &[Vec<f64>], known: &[(usize, usize)], classes: usize, sigma: f64, alpha: f64) -> Mat {
    let s = normalized(&affinity(points, sigma));
    closed_form(&s, &init_labels(points.len(), classes, known), alpha)
}

fn lp_known(labeled: &[(Vec<f64>, usize)]) -> Vec<(usize, usize)> {
    labeled.iter().enumerate().map(|(i, (_, c))| (i, *c)).collect()
}

/// LP over labeled, unlabeled then holdout points; holdout argmax.
pub fn predict_lp(
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    holdout: &[Vec<f64>],
    classes: usize,
    sigma: f64,
    alpha: f64,
) -> Vec<usize> {
    predict_lp_with_pseudo(labeled, unlabeled, &[], holdout, classes, sigma, alpha)
}

fn predict_lp_with_pseudo(
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    pseudo: &[usize],
    holdout: &[Vec<f64>],
    classes: usize,
    sigma: f64,
    alpha: f64,
) -> Vec<usize> {
    let mut points: Vec<Vec<f64>> = labeled.iter().map(|(p, _)| p.clone()).collect();
    points.extend(unlabeled.iter().cloned());
    points.extend(holdout.iter().cloned());
    let mut known = lp_known(labeled);
    known.extend(pseudo.iter().enumerate().map(|(i, &c)| (labeled.len() + i, c)));
    let soft = lp_soft(&points, &known, classes, sigma, alpha);
    soft[labeled.len() + unlabeled.len()..]
        .iter()
        .map(|r| argmax(r))
        .collect()
}

/// Step-1 pseudo-labels: LP over labeled + unlabeled points only.
pub fn lp_pseudo_labels(
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    classes: usize,
    sigma: f64,
    alpha: f64,
) -> Vec<usize> {
    if unlabeled.is_empty() {
        return Vec::new();
    }
    let mut points: Vec<Vec<f64>> = labeled.iter().map(|(p, _)| p.clone()).collect();
    points.extend(unlabeled.iter().cloned());
    let soft = lp_soft(&points, &lp_known(labeled), classes, sigma, alpha);
    soft[labeled.len()..].iter().map(|r| argmax(r)).collect()
}

pub fn predict_2lp(
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    holdout: &[Vec<f64>],
    classes: usize,
    sigma: f64,
    alpha: f64,
) -> Vec<usize> {
    let pseudo = lp_pseudo_labels(labeled, unlabeled, classes, sigma, alpha);
    predict_lp_with_pseudo(labeled, unlabeled, &pseudo, holdout, classes, sigma, alpha)
}

pub fn predict_2lpea(
    labeled: &[(Vec<f64>, usize)],
    unlabeled: &[Vec<f64>],
    holdout: &[Vec<f64>],
    classes: usize,
    sigma: f64,
    alpha: f64,
) -> Vec<usize> {
    let pseudo = lp_pseudo_labels(labeled, unlabeled, classes, sigma, alpha);
    let mut refs = labeled.to_vec();
    refs.extend(unlabeled.iter().cloned().zip(pseudo));
    predict_csea(&refs, holdout, classes)
}

/// Largest eigenvalue magnitude of a symmetric matrix by power iteration.
pub fn spectral_radius(m: &Mat, iterations: usize) -> f64 {
    let n = m.len();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w: Vec<f64> = (0..n).map(|i| dot(&m[i], &v)).collect();
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = norm / dot(&v, &v).sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    estimate
}

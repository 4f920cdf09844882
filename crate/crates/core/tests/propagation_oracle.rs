use hearth_lp::graph::build_affinity;
use hearth_lp::propagation::argmax_rows;
use hearth_lp::{init_label_matrix, propagate, solve_closed_form, LabelMatrix, LpConfig};
use hearth_lp_testkit::instances::{clustered_points, matrix, rng, to_f64};
use hearth_lp_testkit::oracle;
use nalgebra::DMatrix;
use rand::Rng;

struct Instance {
    s: DMatrix<f64>,
    s_oracle: oracle::Mat,
    known: Vec<(usize, usize)>,
    classes: usize,
}

fn random_instance(seed: u64, max_n: usize, max_classes: usize) -> Instance {
    let mut rng = rng(seed);
    let classes = rng.random_range(2..=max_classes);
    let n = rng.random_range(classes + 2..=max_n);
    let points = clustered_points(&mut rng, n, 4, classes, 0.4);
    let sigma = rng.random_range(0.8..2.0);
    let graph = build_affinity(&matrix(&points), sigma).unwrap();
    let s_oracle = oracle::normalized(&oracle::affinity(&to_f64(&points), sigma));
    // one label per class plus a few extra, never two labels on one node
    let mut known: Vec<(usize, usize)> = (0..classes).map(|c| (c, c)).collect();
    for node in classes..n {
        if rng.random_bool(0.15) {
            known.push((node, rng.random_range(0..classes)));
        }
    }
    Instance {
        s: graph.normalized().clone(),
        s_oracle,
        known,
        classes,
    }
}

fn config(alpha: f64) -> LpConfig {
    LpConfig {
        alpha,
        max_iterations: 100_000,
        tolerance: 1e-9,
        ..LpConfig::default()
    }
}

#[test]
fn iterative_matches_oracle_closed_form() {
    for seed in 0..40 {
        let inst = random_instance(seed, 60, 6);
        let n = inst.s.nrows();
        let alpha = [0.5, 0.9, 0.99][seed as usize % 3];
        let y0 = init_label_matrix(n, inst.classes, &inst.known).unwrap();
        let result = propagate(&inst.s, &y0, &config(alpha)).unwrap();
        assert!(result.converged);
        let expected = oracle::closed_form(
            &inst.s_oracle,
            &oracle::init_labels(n, inst.classes, &inst.known),
            alpha,
        );
        for i in 0..n {
            for j in 0..inst.classes {
                let got = result.soft_labels.values()[(i, j)];
                assert!(
                    (got - expected[i][j]).abs() < 1e-6,
                    "seed {seed} ({i},{j}): {got} vs {}",
                    expected[i][j]
                );
            }
            assert_eq!(result.hard_labels[i], oracle::argmax(&expected[i]), "seed {seed} node {i}");
        }
    }
}

#[test]
fn closed_form_matches_iteration_on_ten_nodes() {
    let inst = random_instance(1234, 10, 3);
    let y0 = init_label_matrix(inst.s.nrows(), inst.classes, &inst.known).unwrap();
    let iterative = propagate(&inst.s, &y0, &config(0.9)).unwrap();
    let direct = solve_closed_form(&inst.s, &y0, 0.9).unwrap();
    assert!((iterative.soft_labels.values() - direct.values()).abs().max() < 1e-6);
}

#[test]
fn iteration_count_within_analytic_bound() {
    for seed in 100..130 {
        let inst = random_instance(seed, 50, 5);
        let y0 = init_label_matrix(inst.s.nrows(), inst.classes, &inst.known).unwrap();
        for alpha in [0.5, 0.9, 0.99] {
            let cfg = config(alpha);
            let r = propagate(&inst.s, &y0, &cfg).unwrap();
            assert!(r.converged);
            let first = r.deltas[0];
            let bound = ((cfg.tolerance / first).ln() / alpha.ln()).ceil() as usize;
            assert!(
                r.iterations_used <= bound + 1,
                "seed {seed} alpha {alpha}: {} iterations, bound {bound} + 1",
                r.iterations_used
            );
        }
    }
}

#[test]
fn hard_labels_invariant_to_positive_scaling() {
    for seed in 200..220 {
        let inst = random_instance(seed, 40, 5);
        let y0 = init_label_matrix(inst.s.nrows(), inst.classes, &inst.known).unwrap();
        let r = propagate(&inst.s, &y0, &config(0.99)).unwrap();
        let scaled = r.soft_labels.values() * 7.3;
        assert_eq!(argmax_rows(&scaled), r.hard_labels);
    }
}

#[test]
fn small_alpha_keeps_given_labels() {
    for seed in 300..320 {
        let inst = random_instance(seed, 40, 5);
        let y0 = init_label_matrix(inst.s.nrows(), inst.classes, &inst.known).unwrap();
        let r = propagate(&inst.s, &y0, &config(1e-6)).unwrap();
        for &(node, class) in &inst.known {
            assert_eq!(r.hard_labels[node], class, "seed {seed} node {node}");
        }
    }
}

#[test]
fn permuting_nodes_permutes_soft_labels() {
    for seed in 400..410 {
        let inst = random_instance(seed, 40, 4);
        let n = inst.s.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = rng(seed ^ 0xabc);
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        // node perm[k] of the original becomes node k
        let s_perm = DMatrix::from_fn(n, n, |i, j| inst.s[(perm[i], perm[j])]);
        let inverse: Vec<usize> = {
            let mut inv = vec![0; n];
            for (k, &p) in perm.iter().enumerate() {
                inv[p] = k;
            }
            inv
        };
        let known_perm: Vec<(usize, usize)> = inst.known.iter().map(|&(i, c)| (inverse[i], c)).collect();
        let y0 = init_label_matrix(n, inst.classes, &inst.known).unwrap();
        let y0_perm = init_label_matrix(n, inst.classes, &known_perm).unwrap();
        let a = propagate(&inst.s, &y0, &config(0.9)).unwrap();
        let b = propagate(&s_perm, &y0_perm, &config(0.9)).unwrap();
        for k in 0..n {
            for c in 0..inst.classes {
                let diff = (a.soft_labels.values()[(perm[k], c)] - b.soft_labels.values()[(k, c)]).abs();
                assert!(diff < 1e-12, "seed {seed}: {diff}");
            }
        }
    }
}

#[test]
fn doubling_one_class_enrollment_mass_changes_nothing() {
    for seed in 500..510 {
        let inst = random_instance(seed, 40, 4);
        let n = inst.s.nrows();
        let mut raw = DMatrix::zeros(n, inst.classes);
        for &(i, c) in &inst.known {
            raw[(i, c)] = 1.0;
        }
        let mut doubled = raw.clone();
        doubled.column_mut(0).scale_mut(2.0);
        let a = LabelMatrix::from_matrix(raw).unwrap().normalize_columns();
        let b = LabelMatrix::from_matrix(doubled).unwrap().normalize_columns();
        assert_eq!(a, b);
        let ra = propagate(&inst.s, &a, &config(0.99)).unwrap();
        let rb = propagate(&inst.s, &b, &config(0.99)).unwrap();
        assert!((ra.soft_labels.values() - rb.soft_labels.values()).abs().max() <= 1e-12);
    }
}

#[test]
fn class_normalization_balances_columns() {
    // class 0 has one enrollment, class 1 has five
    let known = [(0, 0), (1, 1), (2, 1), (3, 1), (4, 1), (5, 1)];
    let y0 = init_label_matrix(8, 2, &known).unwrap();
    for col in y0.values().column_iter() {
        assert!((col.sum() - 1.0).abs() < 1e-12);
    }
    assert_eq!(y0.values()[(0, 0)], 1.0);
    assert!((y0.values()[(1, 1)] - 0.2).abs() < 1e-15);
}

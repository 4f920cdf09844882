//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any required criterion fails.
//!
//! The optional real-data check runs when `HEARTH_LP_REAL_MANIFEST` points at
//! a manifest of externally extracted embeddings (`HEARTH_LP_REAL_SPLIT` may
//! name an existing split file; otherwise households are built with defaults).

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use hearth_lp::evaluation::{cell_households, evaluate_household, HouseholdTally};
use hearth_lp::graph::build_affinity;
use hearth_lp::propagation::argmax_rows;
use hearth_lp::{
    build_households, compute_sier, generate_synthetic, init_label_matrix, load_dataset, propagate, run_sweep,
    solve_closed_form, Catalog, Count, EmbeddingMatrix, LabelMatrix, LpConfig, Method, SierResult,
    SimulationConfig, SpeakerId, Split, SplitFile, SweepDataset, SweepSpec, SynthConfig,
};
use hearth_lp_testkit::instances::{clustered_points, matrix, random_scoring_instance, rng};
use nalgebra::DMatrix;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

// ---------------------------------------------------------------- propagation

struct LpInstance {
    s: DMatrix<f64>,
    y0: LabelMatrix,
}

/// n <= 100 nodes, 2..=8 classes, one label per class plus ~10% extra.
fn lp_instance(seed: u64) -> LpInstance {
    let mut r = rng(seed);
    let classes = r.random_range(2..=8);
    let n = r.random_range(classes + 2..=100);
    let points = clustered_points(&mut r, n, 4, classes, 0.4);
    let sigma = r.random_range(0.8..2.0);
    let graph = build_affinity(&matrix(&points), sigma).expect("connected instance");
    let mut known: Vec<(usize, usize)> = (0..classes).map(|c| (c, c)).collect();
    for node in classes..n {
        if r.random_bool(0.1) {
            known.push((node, r.random_range(0..classes)));
        }
    }
    LpInstance {
        s: graph.normalized().clone(),
        y0: init_label_matrix(n, classes, &known).unwrap(),
    }
}

fn lp_config(alpha: f64) -> LpConfig {
    LpConfig {
        alpha,
        tolerance: 1e-9,
        ..LpConfig::default()
    }
}

fn oracle_equivalence() -> Outcome {
    let count = 150;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for seed in 0..count {
        let alpha = [0.5, 0.9, 0.99][seed as usize % 3];
        let inst = lp_instance(seed);
        let iterative = propagate(&inst.s, &inst.y0, &lp_config(alpha)).unwrap();
        let direct = solve_closed_form(&inst.s, &inst.y0, alpha).unwrap();
        let diff = (iterative.soft_labels.values() - direct.values()).abs().max();
        worst = worst.max(diff);
        if !iterative.converged || diff > 1e-6 || iterative.hard_labels != argmax_rows(direct.values()) {
            failures.push(seed);
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{}/{count} instances agree (max entry diff {worst:.2e}, tol 1e-6, argmax exact){}",
            count - failures.len() as u64,
            if failures.is_empty() { String::new() } else { format!("; failing seeds {failures:?}") }
        ),
    )
}

/// Frobenius norms of successive iterate differences, recomputed outside the
/// library. Run only as long as the library iterated, which keeps the
/// differences far above rounding noise.
fn frobenius_deltas(s: &DMatrix<f64>, y0: &DMatrix<f64>, alpha: f64, steps: usize) -> Vec<f64> {
    let mut y = y0.clone();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = s * &y * alpha + y0 * (1.0 - alpha);
        out.push((&next - &y).norm());
        y = next;
    }
    out
}

fn convergence_bound() -> Outcome {
    let alpha = 0.99;
    let count = 100;
    let limit = alpha * (1.0 + 1e-9);
    let mut contraction_failures = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut bound_failures = 0;
    let mut frobenius_failures = 0;
    for seed in 1000..1000 + count {
        let inst = lp_instance(seed);
        let r = propagate(&inst.s, &inst.y0, &lp_config(alpha)).unwrap();
        let ratio = r
            .deltas
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .fold(0.0, f64::max);
        worst_ratio = worst_ratio.max(ratio);
        if ratio > limit {
            contraction_failures += 1;
        }
        let bound = ((1e-9 / r.deltas[0]).ln() / alpha.ln()).ceil() as usize + 1;
        if !r.converged || r.iterations_used > bound {
            bound_failures += 1;
        }
        let fro = frobenius_deltas(&inst.s, inst.y0.values(), alpha, r.iterations_used);
        if fro.windows(2).any(|w| w[1] > w[0] * limit) {
            frobenius_failures += 1;
        }
    }
    Outcome::new(
        contraction_failures == 0 && bound_failures == 0,
        format!(
            "max-abs delta ratio <= 0.99(1+1e-9) on {}/{count} (worst {worst_ratio:.4}); \
             iteration bound met on {}/{count}; Frobenius-norm delta ratio <= 0.99 on {}/{count}",
            count - contraction_failures,
            count - bound_failures,
            count - frobenius_failures
        ),
    )
}

// -------------------------------------------------------------------- scorers

fn scorer_lp() -> LpConfig {
    LpConfig {
        sigma: 1.0,
        ..LpConfig::default()
    }
}

fn scorer_oracles() -> Outcome {
    let count = 200;
    let methods = [Method::Cs, Method::Csea, Method::TwoCs, Method::TwoCsea];
    let mut failures = Vec::new();
    for seed in 0..count {
        let inst = random_scoring_instance(&mut rng(50_000 + seed), 4, 30, 8, 0.5, true);
        let input = inst.input(scorer_lp());
        for method in methods {
            let got: Vec<usize> = method
                .score(&input)
                .unwrap()
                .holdout
                .iter()
                .map(|h| h.speaker_index)
                .collect();
            if got != inst.expected(method, &scorer_lp()) {
                failures.push((method.name(), seed));
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} instances x 4 methods, {} mismatches against the brute-force reference{}",
            count,
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(": {failures:?}") }
        ),
    )
}

fn reduction_identities() -> Outcome {
    let count = 60;
    let pairs = [
        (Method::TwoCs, Method::Cs),
        (Method::TwoCsea, Method::Csea),
        (Method::TwoLp, Method::Lp),
        (Method::TwoLpea, Method::Csea),
    ];
    let mut failures = Vec::new();
    for seed in 0..count {
        let inst = random_scoring_instance(&mut rng(70_000 + seed), 4, 30, 8, 0.5, true).without_unlabeled();
        let input = inst.input(scorer_lp());
        for (two, one) in pairs {
            let a: Vec<SpeakerId> = two.score(&input).unwrap().speakers().cloned().collect();
            let b: Vec<SpeakerId> = one.score(&input).unwrap().speakers().cloned().collect();
            if a != b {
                failures.push((two.name(), seed));
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!("{count} instances with U = 0, {} prediction mismatches", failures.len()),
    )
}

// ----------------------------------------------------------- synthetic world

const SPEAKERS_PER_HOUSEHOLD: usize = 4;
const DEV: usize = 20;
const VAL: usize = 50;
const UTTERANCES: usize = 70;
const SEED: u64 = 0;

struct World {
    embeddings: EmbeddingMatrix,
    catalog: Catalog,
    split: SplitFile,
}

impl World {
    fn new(spread: f64) -> Self {
        let (embeddings, catalog) = generate_synthetic(&SynthConfig {
            n_speakers: SPEAKERS_PER_HOUSEHOLD * (DEV + VAL),
            dim: 16,
            utterances_per_speaker: UTTERANCES,
            intra_class_spread: spread,
            seed: SEED,
        })
        .unwrap();
        let split = build_households(
            &catalog,
            &SimulationConfig {
                household_size: SPEAKERS_PER_HOUSEHOLD,
                dev_households: DEV,
                val_households: VAL,
                seed: SEED,
                ..SimulationConfig::default()
            },
        )
        .unwrap();
        World {
            embeddings,
            catalog,
            split,
        }
    }

    fn dataset(&self) -> SweepDataset<'_> {
        SweepDataset {
            embeddings: &self.embeddings,
            catalog: &self.catalog,
            split_file: &self.split,
        }
    }

    fn sweep(&self, split: Split, methods: &[Method], unlabeled: &[Count], lp: LpConfig) -> Vec<SierResult> {
        let spec = SweepSpec {
            methods: methods.to_vec(),
            labeled_values: vec![Count::N(2)],
            unlabeled_values: unlabeled.to_vec(),
            split,
            seed: SEED,
        };
        run_sweep(&spec, self.dataset(), lp, jobs()).unwrap()
    }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sier(results: &[SierResult], method: Method, unlabeled: Count) -> f64 {
    results
        .iter()
        .find(|r| r.method == method && r.unlabeled == unlabeled)
        .expect("cell present")
        .micro_sier
}

struct Benchmark {
    world: World,
    spread: f64,
    lp: LpConfig,
    dev_cs: f64,
    val: Vec<SierResult>,
    seconds: f64,
}

/// Tunes the world and the propagation hyperparameters on dev households,
/// then evaluates every method once on val.
fn benchmark() -> Benchmark {
    let start = Instant::now();
    let mut best: Option<(f64, f64, f64)> = None;
    for spread in [0.20, 0.22, 0.24, 0.26, 0.28, 0.30] {
        let world = World::new(spread);
        let cs = world.sweep(Split::Dev, &[Method::Cs], &[Count::All], LpConfig::default())[0].micro_sier;
        let gap = (cs - 0.065).abs();
        if best.is_none_or(|(g, _, _)| gap < g) {
            best = Some((gap, spread, cs));
        }
    }
    let (_, spread, dev_cs) = best.unwrap();
    let world = World::new(spread);
    let mut lp = LpConfig::default();
    let mut best_dev = f64::INFINITY;
    for sigma in [0.22, 0.3, 0.4, 0.5, 0.6] {
        for alpha in [0.5, 0.7, 0.8, 0.9, 0.99] {
            let candidate = LpConfig {
                sigma,
                alpha,
                ..LpConfig::default()
            };
            let e = world.sweep(Split::Dev, &[Method::TwoLp], &[Count::All], candidate)[0].micro_sier;
            if e < best_dev {
                best_dev = e;
                lp = candidate;
            }
        }
    }
    let val = world.sweep(Split::Val, &Method::ALL, &[Count::N(0), Count::N(200), Count::All], lp);
    Benchmark {
        world,
        spread,
        lp,
        dev_cs,
        val,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn table_ordering(b: &Benchmark) -> Outcome {
    let s = |m| sier(&b.val, m, Count::All);
    let (cs, csea, two_csea, lp, two_lp) = (
        s(Method::Cs),
        s(Method::Csea),
        s(Method::TwoCsea),
        s(Method::Lp),
        s(Method::TwoLp),
    );
    let in_band = (0.03..=0.10).contains(&b.dev_cs);
    let pass = in_band && two_lp < two_csea && two_csea < csea && lp < cs && b.seconds < 60.0;
    let row = Method::ALL
        .iter()
        .map(|&m| format!("{} {:.2}", m.name(), 100.0 * s(m)))
        .collect::<Vec<_>>()
        .join(", ");
    let checks = format!(
        "2lp<2csea {}, 2csea<csea {}, lp<cs {}, dev CS in 3-10% {}",
        two_lp < two_csea,
        two_csea < csea,
        lp < cs,
        in_band
    );
    Outcome::new(
        pass,
        format!(
            "{checks} | val SIER % at L=2 U=All: {row} | spread {}, dev CS {:.2}%, sigma {}, alpha {}, {:.1}s",
            b.spread,
            100.0 * b.dev_cs,
            b.lp.sigma,
            b.lp.alpha,
            b.seconds
        ),
    )
}

fn unlabeled_trend(b: &Benchmark) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for m in [Method::TwoCs, Method::TwoLp] {
        let (u0, u200) = (sier(&b.val, m, Count::N(0)), sier(&b.val, m, Count::N(200)));
        pass &= u200 <= u0 + 0.01;
        parts.push(format!("{} U=0 {:.2}% -> U=200 {:.2}%", m.name(), 100.0 * u0, 100.0 * u200));
    }
    Outcome::new(pass, parts.join(", "))
}

fn baseline_u_invariance(b: &Benchmark) -> Outcome {
    let mut mismatches = 0;
    let mut compared = 0;
    for method in [Method::Cs, Method::Csea] {
        let predictions = |u: Count| -> Vec<Vec<SpeakerId>> {
            cell_households(b.world.dataset(), Split::Val, Count::N(2), u, SEED)
                .unwrap()
                .iter()
                .map(|h| evaluate_household(h, &b.world.embeddings, method, b.lp).unwrap().predictions)
                .collect()
        };
        let base = predictions(Count::N(0));
        for u in [Count::N(40), Count::N(200), Count::All] {
            compared += 1;
            if predictions(u) != base {
                mismatches += 1;
            }
        }
    }
    let reports_equal = [Method::Cs, Method::Csea].iter().all(|&m| {
        let cells: Vec<&SierResult> = b.val.iter().filter(|r| r.method == m).collect();
        cells.windows(2).all(|w| w[0].per_household == w[1].per_household)
    });
    Outcome::new(
        mismatches == 0 && reports_equal,
        format!(
            "CS/CSEA predictions identical in {}/{compared} U cells vs U=0 (50 val households); report rows identical: {reports_equal}",
            compared - mismatches
        ),
    )
}

// -------------------------------------------------------------------- metrics

fn spk(s: &str) -> SpeakerId {
    SpeakerId::new(s).unwrap()
}

fn metric_correctness() -> Outcome {
    let mut checks = Vec::new();
    // 40 holdouts with 2 errors, 10 holdouts with 1 error
    let tallies = vec![
        HouseholdTally {
            household_id: "a".into(),
            errors: 2,
            holdout_count: 40,
        },
        HouseholdTally {
            household_id: "b".into(),
            errors: 1,
            holdout_count: 10,
        },
    ];
    let r = SierResult::from_tallies(Method::Cs, Count::N(2), Count::All, tallies).unwrap();
    checks.push(((r.micro_sier - 0.06).abs() < 1e-12, format!("micro {}", r.micro_sier)));
    checks.push(((r.macro_sier - 0.075).abs() < 1e-12, format!("macro {:.4}", r.macro_sier)));
    checks.push((r.errors() == 3 && r.holdouts() == 50, "pooled 3/50".into()));

    let truth = [spk("x"), spk("y"), spk("x"), spk("z")];
    let exact = compute_sier(&truth, &truth).unwrap();
    checks.push((exact.sier == 0.0, format!("all correct {}", exact.sier)));
    let wrong = [spk("y"), spk("x"), spk("y"), spk("x")];
    let all_wrong = compute_sier(&wrong, &truth).unwrap();
    checks.push((all_wrong.sier == 1.0, format!("all wrong {}", all_wrong.sier)));
    let one = compute_sier(&[spk("x"), spk("y"), spk("y"), spk("z")], &truth).unwrap();
    checks.push((one.errors == 1 && one.sier == 0.25, format!("one of four {}", one.sier)));
    checks.push((compute_sier(&truth[..2], &truth).is_err(), "length mismatch rejected".into()));

    let pass = checks.iter().all(|(ok, _)| *ok);
    let detail = checks.into_iter().map(|(_, d)| d).collect::<Vec<_>>().join("; ");
    Outcome::new(pass, detail)
}

// ---------------------------------------------------------------- determinism

fn hearth_lp(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_hearth-lp"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let setup = [
        vec!["gen-synth", "--manifest", "m.json", "--speakers", "24", "--dim", "16", "--utterances", "40", "--spread", "0.25", "--seed", "4"],
        vec!["build-households", "--manifest", "m.json", "--split-file", "s.json", "--dev-households", "2", "--val-households", "4", "--seed", "4"],
    ];
    for args in &setup {
        if let Err(e) = hearth_lp(d, args) {
            return Outcome::new(false, format!("setup failed: {e}"));
        }
    }
    let mut reports = Vec::new();
    for (i, jobs) in ["1", "4", "1", "3"].iter().enumerate() {
        let out = format!("r{i}");
        let args = [
            "sweep", "--manifest", "m.json", "--split-file", "s.json", "--out", &out, "--seed", "9", "--jobs", jobs,
            "--unlabeled", "0,20,All", "--labeled", "1,2", "--format", "csv",
        ];
        if let Err(e) = hearth_lp(d, &args) {
            return Outcome::new(false, format!("sweep failed: {e}"));
        }
        reports.push(std::fs::read(d.join(&out).join("report.csv")).unwrap());
    }
    let identical = reports.windows(2).all(|w| w[0] == w[1]);
    Outcome::new(
        identical,
        format!("4 CLI sweeps (jobs 1, 4, 1, 3; 42 rows) byte-identical: {identical}"),
    )
}

// ------------------------------------------------------------------ real data

/// Reference SIER % at L=2, U=All for 512-d embeddings, in method order.
const REFERENCE: [(Method, f64); 7] = [
    (Method::Cs, 3.36),
    (Method::Csea, 3.06),
    (Method::TwoCs, 1.69),
    (Method::TwoCsea, 1.39),
    (Method::Lp, 1.38),
    (Method::TwoLp, 1.25),
    (Method::TwoLpea, 1.31),
];

fn ranking(values: &[(Method, f64)]) -> Vec<Method> {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.1.total_cmp(&b.1));
    v.into_iter().map(|(m, _)| m).collect()
}

fn real_data() -> Option<Outcome> {
    let manifest = PathBuf::from(std::env::var_os("HEARTH_LP_REAL_MANIFEST")?);
    let run = || -> Result<Outcome, String> {
        let (embeddings, catalog) = load_dataset(&manifest).map_err(|e| e.to_string())?;
        let split = match std::env::var_os("HEARTH_LP_REAL_SPLIT") {
            Some(p) => SplitFile::read(Path::new(&p)).map_err(|e| e.to_string())?,
            None => build_households(&catalog, &SimulationConfig::default()).map_err(|e| e.to_string())?,
        };
        let spec = SweepSpec {
            methods: Method::ALL.to_vec(),
            labeled_values: vec![Count::N(2)],
            unlabeled_values: vec![Count::All],
            split: Split::Val,
            seed: 0,
        };
        let dataset = SweepDataset {
            embeddings: &embeddings,
            catalog: &catalog,
            split_file: &split,
        };
        let results = run_sweep(&spec, dataset, LpConfig::default(), jobs()).map_err(|e| e.to_string())?;
        let measured: Vec<(Method, f64)> = results.iter().map(|r| (r.method, 100.0 * r.micro_sier)).collect();
        let same = ranking(&measured) == ranking(&REFERENCE);
        let deltas = measured
            .iter()
            .zip(REFERENCE)
            .map(|((m, v), (_, p))| format!("{} {v:.2} ({:+.2})", m.name(), v - p))
            .collect::<Vec<_>>()
            .join(", ");
        Ok(Outcome::new(same, format!("ranking preserved: {same}; SIER % (vs reference): {deltas}")))
    };
    Some(run().unwrap_or_else(|e| Outcome::new(false, format!("could not run: {e}"))))
}

// ----------------------------------------------------------------------- main

fn main() -> ExitCode {
    // `cargo test -- --list` and name filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        println!("{} {name}: {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    };
    report("oracle equivalence (propagation)", oracle_equivalence());
    report("convergence bound", convergence_bound());
    report("scorer oracles", scorer_oracles());
    report("reduction identities", reduction_identities());
    let bench = benchmark();
    report("method ordering on synthetic households", table_ordering(&bench));
    report("unlabeled-data trend on synthetic households", unlabeled_trend(&bench));
    report("metric correctness", metric_correctness());
    report("determinism", determinism());
    report("baseline U-invariance", baseline_u_invariance(&bench));
    match real_data() {
        Some(outcome) => {
            println!(
                "{} real-data ranking (optional, not gated): {}",
                if outcome.pass { "PASS" } else { "FAIL" },
                outcome.detail
            );
        }
        None => println!("SKIP real-data ranking (optional, not gated): HEARTH_LP_REAL_MANIFEST not set"),
    }
    println!("acceptance: {failed} required criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::{Duration, Instant};

use essreg::align::{align, aligned_error};
use essreg::cv::cv_score_partition;
use essreg::estimation::{dantzig_solve, estimate_beta, predict_z_blp, EstimationConfig};
use essreg::inference::{variance_vk_general, variance_vk_simplified, SimplifiedMode, VarianceInputs};
use essreg::pipeline::{fit_summary, fit_with_partition, FitConfig};
use essreg::simulation::{
    generate_truth, run_experiment, sample_dataset, DeltaChoice, DgpConfig, ExperimentConfig,
    ExperimentResult, SigmaZKind,
};
use essreg::{center, sample_covariance, Execution, PurePartition};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: &'static str, pass: bool, detail: String) -> Outcome {
    println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    Outcome { id, pass, detail }
}

fn within_rel(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

// ---------------------------------------------------------------------------
// 1. population exactness

fn random_truth_config(rng: &mut ChaCha8Rng, i: u64) -> DgpConfig {
    let k = rng.random_range(1..=6);
    let m = rng.random_range(2..=4);
    let p = rng.random_range(k * m + 1..=40);
    let sigma_z_kind = match rng.random_range(0..3) {
        0 => SigmaZKind::DecayingAr,
        1 => SigmaZKind::IdentityScaled,
        _ => SigmaZKind::ArRho(rng.random_range(-0.6..0.6)),
    };
    DgpConfig {
        sigma_z_kind,
        sigma_z_scale: rng.random_range(0.5..3.0),
        rng_seed: 1000 + i,
        ..DgpConfig::standard(500, p, k, m)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = FitConfig {
        competitors: false,
        exec: Execution::Sequential,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    let mut problems = Vec::new();
    for i in 0..100 {
        let dgp = random_truth_config(&mut rng, i);
        let truth = generate_truth(&dgp).expect("truth");
        let summary = truth.population_summary(dgp.n);
        let fit = match fit_summary(&summary, 1e-9, None, &cfg) {
            Ok(f) => f,
            Err(e) => {
                problems.push(format!("truth {i}: {e}"));
                continue;
            }
        };
        let m = &fit.model;
        if m.k_hat() != dgp.k {
            problems.push(format!("truth {i}: K_hat {} vs {}", m.k_hat(), dgp.k));
            continue;
        }
        let al = align(
            &m.beta(),
            &truth.beta_true,
            m.partition.groups(),
            &m.pure_signs,
            &truth.partition_true,
            &truth.pure_signs(),
        )
        .expect("alignment");
        for &(k, a, s) in &al.pairs {
            worst = worst.max((m.beta_hat[k] - s * truth.beta_true[a]).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = problems.is_empty() && worst <= 1e-10 && elapsed < Duration::from_secs(5);
    report(
        "1 (population exactness)",
        pass,
        format!(
            "100 truths, max |beta_hat - P beta| = {worst:.3e} (<= 1e-10), runtime {:.2}s (< 5s), problems {problems:?}",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. regression on the best linear predictor reproduces beta_hat

fn ols_qr(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r().solve_upper_triangular(&qty).expect("full rank")
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..50 {
        let dgp = DgpConfig {
            rng_seed: 2000 + i,
            ..DgpConfig::standard(200, 50, 4, 3)
        };
        let truth = generate_truth(&dgp).expect("truth");
        let (raw, _) = sample_dataset(&truth, 200, 3000 + i).expect("sample");
        let data = center(&raw);
        let summary = sample_covariance(&data).expect("covariance");
        let cfg = FitConfig {
            competitors: false,
            exec: Execution::Sequential,
            ..Default::default()
        };
        let part = PurePartition::new(truth.partition_true.clone()).expect("partition");
        let fit = fit_with_partition(&summary, part, 0.0, None, &cfg).expect("fit");
        let theta = &fit.model.theta_hat;
        let (beta, _) =
            estimate_beta(theta, &summary.sigma_xy_hat, &EstimationConfig::default()).expect("beta");
        let z_hat = predict_z_blp(&data, theta, &summary.sigma_hat).expect("blp");
        let beta_ols = ols_qr(&z_hat, &data.y);
        worst = worst.max((beta - beta_ols).amax());
    }
    report(
        "2 (regression on the factor predictor)",
        worst <= 1e-8,
        format!("50 instances, max |beta_hat - beta_ols| = {worst:.3e} (<= 1e-8)"),
    )
}

// ---------------------------------------------------------------------------
// 3-5. simulation tables

fn table_run(n: usize, p: usize, k: usize, m: usize, delta: DeltaChoice) -> (ExperimentResult, f64) {
    let mut cfg = ExperimentConfig::new(
        DgpConfig {
            rng_seed: 1,
            ..DgpConfig::standard(n, p, k, m)
        },
        200,
    );
    cfg.delta = delta;
    let start = Instant::now();
    let res = run_experiment(&cfg).expect("experiment");
    (res, start.elapsed().as_secs_f64())
}

fn summary_line(res: &ExperimentResult) -> String {
    let a = &res.aggregate;
    format!(
        "mse {:.4}, coverage {:.1}%, length {:.3}, mean K_hat {:.2}, failures {} {:?}",
        a.mean_mse.main.unwrap_or(f64::NAN),
        100.0 * a.coverage.unwrap_or(f64::NAN),
        a.mean_ci_length.unwrap_or(f64::NAN),
        a.mean_k_hat,
        a.failures,
        a.failure_codes
    )
}

fn table_check(res: &ExperimentResult, err: f64, cov: f64, len: f64) -> (bool, String) {
    let a = &res.aggregate;
    let e = a.mean_mse.main.unwrap_or(f64::NAN);
    let c = 100.0 * a.coverage.unwrap_or(f64::NAN);
    let l = a.mean_ci_length.unwrap_or(f64::NAN);
    let ok_e = within_rel(e, err, 0.30);
    let ok_c = (c - cov).abs() <= 3.0;
    let ok_l = within_rel(l, len, 0.15);
    (
        ok_e && ok_c && ok_l,
        format!(
            "error {e:.4} vs {err} ±30% [{}], coverage {c:.1}% vs {cov} ± 3pp [{}], length {l:.3} vs {len} ±15% [{}]",
            if ok_e { "ok" } else { "out" },
            if ok_c { "ok" } else { "out" },
            if ok_l { "ok" } else { "out" }
        ),
    )
}

fn criteria_3_to_5() -> Vec<Outcome> {
    // delta at 3 sqrt(log(p v n) / n); the cross-validated runs are printed for reference
    let rate = DeltaChoice::Rate(3.0);
    let start = Instant::now();
    let (base, _) = table_run(400, 400, 10, 5, rate.clone());
    println!("info: (400,400,10,5) with rate delta: {}", summary_line(&base));
    let (small_n, _) = table_run(200, 400, 10, 5, rate.clone());
    let (big_m, _) = table_run(300, 400, 10, 20, rate.clone());
    let elapsed = start.elapsed().as_secs_f64();

    let rows = [
        ("(400,400,10,5)", &base, 0.019, 95.0, 0.53),
        ("(200,400,10,5)", &small_n, 0.045, 91.0, 0.76),
        ("(300,400,10,20)", &big_m, 0.008, 96.5, 0.35),
    ];
    let mut pass3 = elapsed < 600.0;
    let mut lines = Vec::new();
    for (name, res, e, c, l) in rows {
        let (ok, text) = table_check(res, e, c, l);
        pass3 &= ok;
        lines.push(format!("{name}: {text}"));
    }
    let mut out = vec![report(
        "3 (table reproduction)",
        pass3,
        format!("{}; runtime {elapsed:.1}s (< 600s)", lines.join("; ")),
    )];

    let mse = &base.aggregate.mean_mse;
    let (o, b, i, nv) = (
        mse.oracle.unwrap_or(f64::NAN),
        mse.main.unwrap_or(f64::NAN),
        mse.i_based.unwrap_or(f64::NAN),
        mse.naive.unwrap_or(f64::NAN),
    );
    out.push(report(
        "4 (estimator ordering)",
        o <= b && b <= i && i <= nv,
        format!("oracle {o:.4} <= beta_hat {b:.4} <= beta_I {i:.4} <= naive {nv:.4} (beta_A {:.4})", mse.a_based.unwrap_or(f64::NAN)),
    ));

    let correct = base
        .successes()
        .filter(|r| r.k_hat == 10)
        .count() as f64
        / base.aggregate.reps as f64;
    let mut weak = ExperimentConfig::new(
        DgpConfig {
            sigma_z_kind: SigmaZKind::IdentityScaled,
            sigma_z_scale: 3.0,
            weak_column_theta: Some(0.1),
            weak_column_count: 1,
            rng_seed: 1,
            ..DgpConfig::standard(300, 400, 10, 5)
        },
        200,
    );
    weak.delta = rate;
    let weak = run_experiment(&weak).expect("experiment");
    let mean_k = weak.aggregate.mean_k_hat;
    out.push(report(
        "5 (K selection)",
        correct >= 0.95 && (8.8..=9.4).contains(&mean_k),
        format!(
            "baseline K_hat = K in {:.1}% of all replications (>= 95%); weak last column: mean K_hat {mean_k:.2} in [8.8, 9.4] (histogram {:?})",
            100.0 * correct,
            weak.aggregate.k_hat_histogram
        ),
    ));

    for (n, m) in [(400, 5), (200, 5), (300, 20)] {
        let (cv, t) = table_run(n, 400, 10, m, DeltaChoice::Cv);
        println!("info: ({n},400,10,{m}) with cross-validated delta: {} ({t:.1}s)", summary_line(&cv));
    }
    out
}

// ---------------------------------------------------------------------------
// 6. variance consistency

fn criterion_6() -> Outcome {
    let mut cfg = ExperimentConfig::new(
        DgpConfig {
            rng_seed: 1,
            // non-pure rows kept away from the pure ones
            max_nonpure_loading: Some(0.8),
            ..DgpConfig::standard(2000, 100, 3, 5)
        },
        2000,
    );
    cfg.regenerate_truth = false;
    cfg.delta = DeltaChoice::Rate(3.0);
    let res = run_experiment(&cfg).expect("experiment");
    let n = cfg.dgp.n as f64;
    let recs: Vec<_> = res.successes().filter_map(|r| r.ci_main.clone()).collect();
    let dev: Vec<f64> = recs.iter().map(|c| c.standardized * c.variance.sqrt()).collect();
    let st: Vec<f64> = recs.iter().map(|c| c.standardized).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64]| {
        let mu = mean(v);
        v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
    };
    let emp = var(&dev);
    let v_bar = mean(&recs.iter().map(|c| c.variance).collect::<Vec<_>>());
    let (sm, sv) = (mean(&st), var(&st));
    let pass = recs.len() >= 2
        && within_rel(emp, v_bar, 0.15)
        && sm.abs() <= 0.1
        && (0.85..=1.15).contains(&sv);
    report(
        "6 (variance consistency)",
        pass,
        format!(
            "{} of 2000 reps at n = {n}; var of sqrt(n)(beta_hat_1 - beta_1) = {emp:.4} vs mean V_1 = {v_bar:.4} (ratio {:.3}, ±15%); standardized mean {sm:.4} (±0.1), variance {sv:.4} ([0.85, 1.15])",
            recs.len(),
            emp / v_bar
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. formula equivalences

fn random_spd(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(k, k) * 0.5
}

fn homogeneous_equivalence() -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = rng.random_range(1..=5);
        let m = rng.random_range(2..=5);
        let p = k * m + rng.random_range(0..10);
        let groups: Vec<Vec<usize>> = (0..k).map(|a| (a * m..(a + 1) * m).collect()).collect();
        let theta = DMatrix::from_fn(p, k, |_, _| rng.random_range(-2.0..2.0));
        let tau = rng.random_range(0.1..3.0);
        let inputs = VarianceInputs::new(
            theta,
            random_spd(&mut rng, k),
            DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0)),
            DVector::from_element(p, tau),
            rng.random_range(0.1..2.0),
            PurePartition::new(groups).expect("partition"),
            DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0)),
        )
        .expect("inputs");
        for a in 0..k {
            let g = variance_vk_general(&inputs, a).expect("general");
            let s = variance_vk_simplified(&inputs, a, SimplifiedMode::Full).expect("simplified");
            worst = worst.max((g - s).abs() / s.abs());
        }
    }
    (worst <= 1e-12, worst)
}

/// Minimum of `||b||_1` over `{b : |S b - t|_inf <= r}` by enumerating every
/// vertex of the arrangement of constraint and coordinate hyperplanes.
fn l1_brute_force(s: &DMatrix<f64>, t: &DVector<f64>, r: f64) -> f64 {
    let k = s.nrows();
    let mut planes: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..k {
        planes.push((DVector::from_fn(k, |j, _| f64::from(u8::from(i == j))), 0.0));
        planes.push((s.row(i).transpose(), t[i] + r));
        planes.push((s.row(i).transpose(), t[i] - r));
    }
    let mut best = f64::INFINITY;
    let mut choose = vec![0usize; k];
    fn rec(
        start: usize,
        depth: usize,
        choose: &mut Vec<usize>,
        planes: &[(DVector<f64>, f64)],
        s: &DMatrix<f64>,
        t: &DVector<f64>,
        r: f64,
        best: &mut f64,
    ) {
        let k = choose.len();
        if depth == k {
            let m = DMatrix::from_fn(k, k, |i, j| planes[choose[i]].0[j]);
            let rhs = DVector::from_fn(k, |i, _| planes[choose[i]].1);
            if let Some(b) = m.lu().solve(&rhs) {
                if (s * &b - t).amax() <= r + 1e-9 {
                    *best = best.min(b.lp_norm(1));
                }
            }
            return;
        }
        for c in start..planes.len() {
            choose[depth] = c;
            rec(c + 1, depth + 1, choose, planes, s, t, r, best);
        }
    }
    rec(0, 0, &mut choose, &planes, s, t, r, &mut best);
    best
}

fn dantzig_equivalence() -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let k = rng.random_range(1..=3);
        let s = random_spd(&mut rng, k);
        let t = DVector::from_fn(k, |_, _| rng.random_range(-3.0..3.0));
        let r = rng.random_range(0.01..1.0);
        let b = dantzig_solve(&s, &t, r).expect("lp");
        let feasible = (&s * &b - &t).amax() <= r + 1e-9;
        let gap = (b.lp_norm(1) - l1_brute_force(&s, &t, r)).abs();
        worst = worst.max(if feasible { gap } else { f64::INFINITY });
    }
    (worst <= 1e-6, worst)
}

fn signed_permutations(k: usize) -> Vec<Vec<(usize, f64)>> {
    fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let head = rest.remove(i);
            for mut p in perms(rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }
    let mut out = Vec::new();
    for p in perms((0..k).collect()) {
        for mask in 0..(1usize << k) {
            out.push(
                p.iter()
                    .enumerate()
                    .map(|(i, &a)| (a, if mask >> i & 1 == 1 { -1.0 } else { 1.0 }))
                    .collect(),
            );
        }
    }
    out
}

fn alignment_equivalence() -> (bool, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let k = rng.random_range(1..=3);
        let m = 2;
        let beta = DVector::from_fn(k, |_, _| rng.random_range(1.0..3.0));
        let groups_true: Vec<Vec<usize>> = (0..k).map(|a| (a * m..(a + 1) * m).collect()).collect();
        let signs_true = vec![1.0; k * m];
        // estimated factor j is true factor perm[j] with sign flips[j]
        let all = signed_permutations(k);
        let sp = &all[rng.random_range(0..all.len())];
        let groups_hat: Vec<Vec<usize>> = sp.iter().map(|&(a, _)| groups_true[a].clone()).collect();
        let mut signs_hat = vec![1.0; k * m];
        for &(a, s) in sp {
            for &i in &groups_true[a] {
                signs_hat[i] = s;
            }
        }
        let beta_hat = DVector::from_fn(k, |j, _| sp[j].1 * beta[sp[j].0] + rng.random_range(-0.05..0.05));
        let got = aligned_error(&beta_hat, &beta, &groups_hat, &signs_hat, &groups_true, &signs_true)
            .expect("alignment");
        let brute = signed_permutations(k)
            .iter()
            .map(|q| {
                q.iter()
                    .enumerate()
                    .map(|(j, &(a, s))| (beta_hat[j] - s * beta[a]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((got - brute).abs());
    }
    (worst <= 1e-12, worst)
}

fn criterion_7() -> Outcome {
    let (a, wa) = homogeneous_equivalence();
    let (b, wb) = dantzig_equivalence();
    let (c, wc) = alignment_equivalence();
    report(
        "7 (formula equivalences)",
        a && b && c,
        format!(
            "general vs simplified max rel diff {wa:.2e} (<= 1e-12); Dantzig vs vertex enumeration max l1 gap {wb:.2e} (<= 1e-6); aligned error vs 48-way brute force max diff {wc:.2e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. cross-validation separates the true partition

fn set_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let (first, rest) = (items[0], &items[1..]);
    let mut out = Vec::new();
    for part in set_partitions(rest) {
        for i in 0..part.len() {
            let mut p = part.clone();
            p[i].insert(0, first);
            out.push(p);
        }
        let mut p = part.clone();
        p.push(vec![first]);
        out.push(p);
    }
    out
}

fn criterion_8() -> Outcome {
    let tau = 2.0;
    let eps = tau / 10.0;
    let a = DMatrix::from_row_slice(
        8,
        3,
        &[
            1.0, 0.0, 0.0, //
            -1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, -1.0, //
            0.0, 0.0, -1.0, //
            0.4, 0.6, 0.0, //
            -0.5, 0.0, 0.4,
        ],
    );
    let sigma = &a * a.transpose() * tau + DMatrix::identity(8, 8);
    let truth = PurePartition::new(vec![vec![0, 1], vec![2, 3], vec![4, 5]]).expect("partition");
    let competitors: Vec<PurePartition> = set_partitions(&[0, 1, 2, 3, 4, 5])
        .into_iter()
        .filter(|p| p.iter().all(|g| g.len() >= 2))
        .map(|mut p| {
            for g in &mut p {
                g.sort_unstable();
            }
            p.sort();
            p
        })
        .filter(|p| p != truth.groups())
        .map(|p| PurePartition::new(p).expect("partition"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let perturbed = |rng: &mut ChaCha8Rng| {
        let mut s = sigma.clone();
        for i in 0..8 {
            for j in 0..i {
                let e = rng.random_range(-eps..=eps);
                s[(i, j)] += e;
                s[(j, i)] += e;
            }
        }
        s
    };
    let mut min_margin = f64::INFINITY;
    for _ in 0..200 {
        let s1 = perturbed(&mut rng);
        let s2 = perturbed(&mut rng);
        let own = cv_score_partition(&s1, &s2, &truth);
        for c in &competitors {
            min_margin = min_margin.min(cv_score_partition(&s1, &s2, c) - own);
        }
    }
    report(
        "8 (cross-validation sanity)",
        min_margin > 0.0,
        format!(
            "tau = {tau}, eps = tau/10, 200 perturbations x {} competing partitions; smallest score gap {min_margin:.4} (> 0)",
            competitors.len()
        ),
    )
}

fn main() {
    // the libtest harness is off; ignore its flags (e.g. --list) gracefully
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut outcomes = vec![criterion_1(), criterion_2()];
    outcomes.extend(criteria_3_to_5());
    outcomes.push(criterion_6());
    outcomes.push(criterion_7());
    outcomes.push(criterion_8());
    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        outcomes.len() - failed.len(),
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        for o in &failed {
            eprintln!("failed criterion {}: {}", o.id, o.detail);
        }
        std::process::exit(1);
    }
}

//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// The training-based criteria saturate both cores; serialize them so each
/// gets its stated CPU budget under the parallel test runner.
static TRAINER_GATE: Mutex<()> = Mutex::new(());

use lcsm::code::{ModelCode, Psi};
use lcsm::gradcheck::{run_layer_suite, GRADCHECK_TOL};
use lcsm::model::{forward_eval, init_model_params, ModelConfig, SampleStats};
use lcsm::mqar::{generate, MqarConfig};
use lcsm::scan::{forward_scan, oracle_forward, OscSeq, ScanInputs};
use lcsm::state::{compute_eos, gate, init_layer_params, Osc};
use lcsm::train::{train, RunConfig, RunStatus};
use lcsm::zoo;

// criterion 1
const GRAD_SUITE_BUDGET_SECS: f64 = 60.0;
// criterion 2
const ORACLE_TOL: f64 = 1e-10;
const ORACLE_INSTANCES: usize = 200;
const ORACLE_BUDGET_SECS: f64 = 10.0;
// criterion 3 tolerances live in lcsm::zoo
// criterion 4
const DATA_DEPENDENT_MIN_ACC: f64 = 0.95;
const DATA_INDEPENDENT_MAX_ACC: f64 = 0.70;
// criterion 5
const TAU_GRID: [f64; 7] = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0];
const TAU_NOISE: f64 = 0.02;
// criterion 7
const LOSS_SANITY_REL: f64 = 0.05;

fn line(criterion: &str, pass: bool, detail: &str) {
    println!("criterion {criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn criterion_1_gradient_suite() {
    let start = Instant::now();
    let reports = run_layer_suite(0xACCE);
    let elapsed = start.elapsed().as_secs_f64();
    let worst = reports.iter().fold(0.0f64, |m, r| m.max(r.max_err));
    let all_pass = reports.iter().all(|r| r.pass) && elapsed < GRAD_SUITE_BUDGET_SECS;
    line(
        "1 [gradient suite]",
        all_pass,
        &format!(
            "{} configs, worst err {:.2e} vs tol {:.0e}, {:.2}s",
            reports.len(),
            worst,
            GRADCHECK_TOL,
            elapsed
        ),
    );
    for r in &reports {
        assert!(r.pass, "{} failed: max err {:.3e}", r.label, r.max_err);
    }
    assert!(
        elapsed < GRAD_SUITE_BUDGET_SECS,
        "gradient suite took {elapsed:.1}s, budget {GRAD_SUITE_BUDGET_SECS}s"
    );
}

#[test]
fn criterion_2_oracle_equivalence() {
    let start = Instant::now();
    let mut instances = 0usize;
    let mut worst = 0.0f64;
    let mut rng = ChaCha12Rng::seed_from_u64(0x0AC1E);
    // span every oscillation construction (and the ssm code) under both psi
    // by driving the scan through state-calc outputs on random layers
    'outer: loop {
        for psi in [Psi::Elementwise, Psi::Matrix] {
            for code_text in [
                "1-0-1-0", "1-1-1-0", "1-2-1-0", "1-3-1-0", "1-4-1-0", "1-5-1-0", "1-6-1-0",
                "1-7-1-0", "1-8-1-0", "1-9-1-0", "1-10-1-0", "1-11-1-0", "0",
            ] {
                let code = ModelCode::parse(code_text).unwrap().with_psi(psi);
                let n = rng.random_range(2..=16usize);
                let k = rng.random_range(1..=8usize);
                let d = rng.random_range(1..=4usize);
                let d_model = rng.random_range(2..=6usize);
                let params = init_layer_params(&code, d_model, k, d, &mut rng);
                let mut e = Vec::new();
                let mut s = Vec::new();
                let mut i = Vec::new();
                let mut o_real: Vec<lcsm::Matrix> = Vec::new();
                let mut o_complex: Vec<lcsm::CMatrix> = Vec::new();
                for _ in 0..n {
                    let x: Vec<f64> =
                        (0..d_model).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let (states, _) = compute_eos(&params, &code, &x);
                    e.push(states.e);
                    s.push(states.s);
                    i.push(states.i);
                    match states.o {
                        Osc::Real(m) => o_real.push(m),
                        Osc::Complex(m) => o_complex.push(m),
                    }
                }
                // under psi=times the materialized constructions are not
                // contractions (row broadcasts have spectral radius up to
                // k/2), so scale them into the bounded regime where an
                // absolute tolerance is meaningful for both routes
                if psi == Psi::Matrix {
                    let inv_k = 1.0 / k as f64;
                    for m in o_real.iter_mut() {
                        for v in m.data.iter_mut() {
                            *v *= inv_k;
                        }
                    }
                    for m in o_complex.iter_mut() {
                        for v in m.data.iter_mut() {
                            *v *= inv_k;
                        }
                    }
                }
                let o = if o_complex.is_empty() {
                    OscSeq::Real(o_real)
                } else {
                    OscSeq::Complex(o_complex)
                };
                let inputs = ScanInputs { e, o, s, i, psi };
                let fast = forward_scan(&inputs).expect("scan").y;
                let slow = oracle_forward(&inputs).expect("oracle");
                for (yf, ys) in fast.iter().zip(&slow) {
                    for (a, b) in yf.iter().zip(ys) {
                        worst = worst.max((a - b).abs());
                    }
                }
                instances += 1;
                if instances >= ORACLE_INSTANCES {
                    break 'outer;
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= ORACLE_TOL && elapsed < ORACLE_BUDGET_SECS;
    line(
        "2 [oracle equivalence]",
        pass,
        &format!("{instances} instances, max |diff| {worst:.2e} vs {ORACLE_TOL:.0e}, {elapsed:.2}s"),
    );
    assert!(worst <= ORACLE_TOL, "scan/oracle disagreement {worst:.3e}");
    assert!(elapsed < ORACLE_BUDGET_SECS);
}

#[test]
fn criterion_3_zoo_fidelity_and_reductions() {
    let rows = zoo::run_all(0x200);
    let fidelity_rows = rows
        .iter()
        .filter(|r| {
            r.check == "fidelity" || r.check.contains("dual route") || r.check.contains("cosine")
        })
        .count();
    let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.max_abs_err));
    let pass = rows.iter().all(|r| r.pass) && fidelity_rows == 17;
    line(
        "3 [zoo fidelity + reductions]",
        pass,
        &format!("{fidelity_rows} methods + {} reductions, worst err {worst:.2e}", rows.len() - fidelity_rows),
    );
    assert_eq!(fidelity_rows, 17);
    for r in &rows {
        assert!(r.pass, "{} {} err {:.3e} > tol {:.0e}", r.method, r.check, r.max_abs_err, r.tol);
    }
}

fn desk_run(code: &str, tau: f64, lr: f64, steps: usize) -> RunConfig {
    RunConfig {
        code: code.to_string(),
        psi: "odot".to_string(),
        tau,
        d_model: 64,
        expand_k: 64,
        n_layers: 2,
        lr,
        steps,
        batch_size: 32,
        seed: 7,
        eval_interval: 150,
        eval_max_examples: 512,
        ..RunConfig::default()
    }
}

#[test]
fn criterion_4_mqar_qualitative_ordering() {
    let _gate = TRAINER_GATE.lock().unwrap();
    // 20k train / 1k eval at the pinned desk scale
    let train_cfg = MqarConfig { seq_len: 64, vocab_size: 128, num_kv_pairs: 8, num_examples: 20_000, seed: 31 };
    let eval_cfg = MqarConfig { num_examples: 1_000, seed: 32, ..train_cfg };
    let train_set = generate(&train_cfg).unwrap();
    let eval_set = generate(&eval_cfg).unwrap();

    let dd = train(&desk_run("1-1-1-2", 16.0, 2e-3, 1200), &train_set, &eval_set).unwrap();
    let di = train(&desk_run("0-0-0-0", 16.0, 2e-3, 600), &train_set, &eval_set).unwrap();

    let pass = dd.best_eval_acc >= DATA_DEPENDENT_MIN_ACC
        && di.best_eval_acc <= DATA_INDEPENDENT_MAX_ACC
        && dd.status == RunStatus::Ok;
    line(
        "4 [mqar qualitative ordering]",
        pass,
        &format!(
            "1-1-1-2 acc {:.3} (need >= {DATA_DEPENDENT_MIN_ACC}), 0-0-0-0 acc {:.3} (need <= {DATA_INDEPENDENT_MAX_ACC})",
            dd.best_eval_acc, di.best_eval_acc
        ),
    );
    assert!(dd.status == RunStatus::Ok, "data-dependent run failed to finish");
    assert!(
        dd.best_eval_acc >= DATA_DEPENDENT_MIN_ACC,
        "1-1-1-2 reached only {:.3}",
        dd.best_eval_acc
    );
    assert!(
        di.best_eval_acc <= DATA_INDEPENDENT_MAX_ACC,
        "0-0-0-0 unexpectedly reached {:.3}",
        di.best_eval_acc
    );
}

#[test]
fn criterion_5_tau_monotonics() {
    // analytic part: gate(0, tau) strictly increasing toward 1
    let mut prev = 0.0;
    let mut monotone = true;
    for &tau in &TAU_GRID {
        let v = gate(&[0.0], tau)[0];
        monotone &= v > prev;
        prev = v;
    }
    let limit_ok = gate(&[0.0], 1e12)[0] > 1.0 - 1e-9;

    // training part: a reduced desk sweep over the tau grid; larger tau must
    // not fall more than the noise band below the tau=1 run
    let _gate = TRAINER_GATE.lock().unwrap();
    let train_cfg = MqarConfig { seq_len: 32, vocab_size: 64, num_kv_pairs: 4, num_examples: 8_000, seed: 41 };
    let eval_cfg = MqarConfig { num_examples: 512, seed: 42, ..train_cfg };
    let train_set = generate(&train_cfg).unwrap();
    let eval_set = generate(&eval_cfg).unwrap();
    let mut accs = Vec::new();
    for &tau in &TAU_GRID {
        let run = RunConfig {
            code: "1-1-1-2".to_string(),
            tau,
            d_model: 48,
            expand_k: 48,
            n_layers: 2,
            lr: 3e-3,
            steps: 700,
            batch_size: 32,
            seed: 11,
            eval_interval: 175,
            eval_max_examples: 512,
            ..RunConfig::default()
        };
        let result = train(&run, &train_set, &eval_set).unwrap();
        accs.push(result.best_eval_acc);
    }
    let base = accs[0];
    let sweep_ok = accs.iter().all(|&a| a >= base - TAU_NOISE);
    let pass = monotone && limit_ok && sweep_ok;
    line(
        "5 [tau monotonics]",
        pass,
        &format!(
            "gate(0,tau) increasing: {monotone}, limit->1: {limit_ok}, sweep accs {:?} vs tau=1 {:.3}",
            accs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            base
        ),
    );
    assert!(monotone && limit_ok, "gate(0, tau) monotonicity violated");
    assert!(
        sweep_ok,
        "larger tau degraded accuracy beyond noise: {accs:?} (tau=1 gives {base:.3})"
    );
}

#[test]
fn criterion_6_determinism() {
    let _gate = TRAINER_GATE.lock().unwrap();
    let data_cfg = MqarConfig { seq_len: 32, vocab_size: 64, num_kv_pairs: 4, num_examples: 600, seed: 51 };
    let eval_cfg = MqarConfig { num_examples: 128, seed: 52, ..data_cfg };
    let train_set = generate(&data_cfg).unwrap();
    let eval_set = generate(&eval_cfg).unwrap();
    let run = RunConfig {
        code: "1-1-1-2".to_string(),
        d_model: 32,
        expand_k: 32,
        n_layers: 2,
        lr: 3e-3,
        steps: 60,
        batch_size: 16,
        seed: 99,
        eval_interval: 20,
        eval_max_examples: 128,
        ..RunConfig::default()
    };
    let a = train(&run, &train_set, &eval_set).unwrap();
    let b = train(&run, &train_set, &eval_set).unwrap();
    // byte-identical CSV lines once the wall-clock column is dropped
    let strip = |rows: &[lcsm::train::MetricsRow]| -> Vec<String> {
        rows.iter()
            .map(|r| {
                let line = r.csv_line();
                let cols: Vec<&str> = line.split(',').collect();
                let mut kept = cols[..6].to_vec();
                kept.push(cols[7]);
                kept.join(",")
            })
            .collect()
    };
    let sa = strip(&a.rows);
    let sb = strip(&b.rows);
    let pass = sa == sb && !sa.is_empty();
    line("6 [determinism]", pass, &format!("{} metric rows identical modulo wall_ms", sa.len()));
    assert_eq!(sa, sb, "metric rows differ between identical runs");
}

#[test]
fn criterion_7_initial_loss_sanity() {
    // the sweep grid: the data-dependence block, every oscillation type,
    // every activation, and the ssm parameterization
    let mut grid: Vec<String> = vec![
        "0-0-0-0".into(),
        "0-0-1-0".into(),
        "0-1-0-0".into(),
        "0-1-1-0".into(),
        "1-0-0-0".into(),
        "1-0-1-0".into(),
        "1-1-0-0".into(),
        "0".into(),
    ];
    for o in 0..=11u8 {
        grid.push(format!("1-{o}-1-0"));
    }
    for a in 1..=7u8 {
        grid.push(format!("1-1-1-{a}"));
    }

    let vocab = 128usize;
    let ln_v = (vocab as f64).ln();
    let mut rng = ChaCha12Rng::seed_from_u64(0x70);
    let tokens: Vec<u16> = (0..32).map(|_| rng.random_range(0..vocab as u16)).collect();
    let targets: Vec<i32> = (0..32)
        .map(|t| if t % 4 == 3 { rng.random_range(0..vocab as i32) } else { -1 })
        .collect();

    let mut worst_rel = 0.0f64;
    let mut worst_code = String::new();
    for code_text in &grid {
        let code = ModelCode::parse(code_text).unwrap();
        let cfg = ModelConfig::new(64, 64, 2, vocab, code);
        let mut rng = ChaCha12Rng::seed_from_u64(0x71);
        let params = init_model_params(&cfg, &mut rng);
        let mut stats = SampleStats::default();
        for rep in 0..4 {
            let offset = rep * 7;
            let toks: Vec<u16> =
                tokens.iter().map(|&t| ((t as usize + offset) % vocab) as u16).collect();
            stats.merge(&forward_eval(&cfg, &params, &toks, &targets).unwrap());
        }
        let rel = (stats.mean_loss() - ln_v).abs() / ln_v;
        if rel > worst_rel {
            worst_rel = rel;
            worst_code = code_text.clone();
        }
    }
    let pass = worst_rel < LOSS_SANITY_REL;
    line(
        "7 [initial loss sanity]",
        pass,
        &format!(
            "{} codes, worst |loss - ln V|/ln V = {:.4} ({}), tol {LOSS_SANITY_REL}",
            grid.len(),
            worst_rel,
            worst_code
        ),
    );
    assert!(pass, "initial loss off by {worst_rel:.4} for {worst_code}");
}

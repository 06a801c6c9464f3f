//! Single executable exposing the laboratory: dataset generation, training,
//! sweeps, gradient checks, and method-equivalence verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use lcsm::code::Psi;
use lcsm::gradcheck::{self, GradCheckReport, LayerDims};
use lcsm::mqar::{self, MqarConfig};
use lcsm::train::{self, holdout_split, RunConfig, RunStatus, TrainResult};
use lcsm::zoo;

#[derive(Parser)]
#[command(name = "lcsm", version, about = "Expand-Oscillation-Shrink recurrence laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a multi-query associative recall dataset.
    Mqar(MqarArgs),
    /// Train one configuration on a dataset.
    Train(TrainArgs),
    /// Train the cross product of code, learning-rate, and tau grids.
    Sweep(SweepArgs),
    /// Finite-difference verification of the analytical backward passes.
    Gradcheck(GradcheckArgs),
    /// Verify the method zoo against hand-coded reference recurrences.
    Equiv(EquivArgs),
}

#[derive(Args)]
struct MqarArgs {
    #[arg(long, default_value_t = 64)]
    seq_len: usize,
    #[arg(long, default_value_t = 128)]
    vocab: usize,
    /// Key-value pairs per example (one query per pair).
    #[arg(long, default_value_t = 8)]
    kv: usize,
    #[arg(long, default_value_t = 21000)]
    num: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the binary dataset.
    #[arg(long)]
    out: PathBuf,
    /// Also write a JSON-lines debug dump here.
    #[arg(long)]
    jsonl: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ModelFlags {
    #[arg(long)]
    code: Option<String>,
    /// odot (elementwise) or times (matrix).
    #[arg(long)]
    psi: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    expand_k: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    eval_interval: Option<usize>,
    /// constant, cosine, or inverse-sqrt.
    #[arg(long)]
    lr_schedule: Option<String>,
}

impl ModelFlags {
    fn apply(&self, run: &mut RunConfig) {
        if let Some(v) = &self.code {
            run.code = v.clone();
        }
        if let Some(v) = &self.psi {
            run.psi = v.clone();
        }
        if let Some(v) = self.tau {
            run.tau = v;
        }
        if let Some(v) = self.d_model {
            run.d_model = v;
        }
        if let Some(v) = self.expand_k {
            run.expand_k = v;
        }
        if let Some(v) = self.layers {
            run.n_layers = v;
        }
        if let Some(v) = self.lr {
            run.lr = v;
        }
        if let Some(v) = self.steps {
            run.steps = v;
        }
        if let Some(v) = self.batch {
            run.batch_size = v;
        }
        if let Some(v) = self.seed {
            run.seed = v;
        }
        if let Some(v) = self.weight_decay {
            run.weight_decay = v;
        }
        if let Some(v) = self.eval_interval {
            run.eval_interval = v;
        }
        if let Some(v) = &self.lr_schedule {
            run.lr_schedule = v.clone();
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Separate eval set; defaults to a trailing holdout of --data.
    #[arg(long)]
    eval_data: Option<PathBuf>,
    /// Flat TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Expected sequence length; errors if the dataset disagrees.
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long, default_value = "runs/train")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    eval_data: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated model codes.
    #[arg(long, value_delimiter = ',', default_value = "1-1-1-2")]
    grid_codes: Vec<String>,
    /// Comma-separated learning rates.
    #[arg(long, value_delimiter = ',', default_value = "2e-3")]
    grid_lr: Vec<f64>,
    /// Comma-separated tau values.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    grid_tau: Vec<f64>,
    #[arg(long, default_value = "runs/sweep")]
    out: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Check only this code; otherwise run the full grid.
    #[arg(long)]
    code: Option<String>,
    #[arg(long, default_value = "odot")]
    psi: String,
    #[arg(long, default_value_t = 16.0)]
    tau: f64,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    expand_k: usize,
    /// Inner value dimension of the checked layer.
    #[arg(long, default_value_t = 3)]
    d_inner: usize,
    #[arg(long, default_value_t = 5)]
    d_model: usize,
    #[arg(long, default_value_t = 1234)]
    seed: u64,
    /// Also run full-model checks over the o_code grid.
    #[arg(long, default_value_t = false)]
    full_model: bool,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Write the pass/fail table as CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    config_path: Option<String>,
    seed: u64,
    code: String,
    out_dir: String,
    config_hash: String,
    artifacts: Vec<String>,
}

fn config_hash(run: &RunConfig) -> String {
    let digest = Sha256::digest(run.canonical_string().as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    hex[..12].to_string()
}

fn load_run_config(config: Option<&Path>, flags: &ModelFlags) -> Result<RunConfig, String> {
    let mut run = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            RunConfig::from_toml(&text).map_err(|e| e.to_string())?
        }
        None => RunConfig::default(),
    };
    flags.apply(&mut run);
    run.model_code().map_err(|e| e.to_string())?;
    Ok(run)
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let text = serde_json::to_string_pretty(manifest).map_err(|e| e.to_string())?;
    fs::write(dir.join("manifest.json"), text).map_err(|e| e.to_string())
}

fn cmd_mqar(args: &MqarArgs) -> Result<(), String> {
    let cfg = MqarConfig {
        seq_len: args.seq_len,
        vocab_size: args.vocab,
        num_kv_pairs: args.kv,
        num_examples: args.num,
        seed: args.seed,
    };
    let data = mqar::generate(&cfg).map_err(|e| e.to_string())?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| e.to_string())?;
        }
    }
    mqar::write_binary(&data, &args.out).map_err(|e| e.to_string())?;
    println!(
        "wrote {} examples (seq_len {}, vocab {}, {} kv pairs) to {}",
        data.num_examples,
        data.seq_len,
        data.vocab_size,
        args.kv,
        args.out.display()
    );
    if let Some(jsonl) = &args.jsonl {
        mqar::write_jsonl(&data, jsonl).map_err(|e| e.to_string())?;
        println!("wrote debug dump to {}", jsonl.display());
    }
    Ok(())
}

fn load_datasets(
    data: &Path,
    eval_data: Option<&Path>,
    eval_fraction: f64,
) -> Result<(mqar::MqarDataset, mqar::MqarDataset), String> {
    let full = mqar::read_binary(data).map_err(|e| e.to_string())?;
    match eval_data {
        Some(path) => {
            let eval = mqar::read_binary(path).map_err(|e| e.to_string())?;
            if eval.seq_len != full.seq_len || eval.vocab_size != full.vocab_size {
                return Err("eval dataset shape does not match training data".to_string());
            }
            Ok((full, eval))
        }
        None => Ok(holdout_split(&full, eval_fraction)),
    }
}

fn run_one_cell(
    run: &RunConfig,
    train_set: &mqar::MqarDataset,
    eval_set: &mqar::MqarDataset,
    out_dir: &Path,
    command: &str,
    config_path: Option<&Path>,
) -> Result<TrainResult, String> {
    use std::io::Write;
    let hash = config_hash(run);
    fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    // stream rows so long runs can be monitored and interruptions keep logs
    let live = fs::File::create(out_dir.join("metrics.csv")).map_err(|e| e.to_string())?;
    let mut live = std::io::BufWriter::new(live);
    writeln!(live, "{}", train::CSV_HEADER).map_err(|e| e.to_string())?;
    let result = train::train_with(run, train_set, eval_set, |row| {
        let _ = writeln!(live, "{}", row.csv_line());
        let _ = live.flush();
    })
    .map_err(|e| e.to_string())?;
    drop(live);
    train::save_checkpoint(&out_dir.join("best.ckpt"), &hash, &run.code, &result.best_params)
        .map_err(|e| e.to_string())?;
    fs::write(out_dir.join("config.toml"), run.canonical_string()).map_err(|e| e.to_string())?;
    write_manifest(
        out_dir,
        &RunManifest {
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            seed: run.seed,
            code: run.code.clone(),
            out_dir: out_dir.display().to_string(),
            config_hash: hash,
            artifacts: vec!["metrics.csv".into(), "best.ckpt".into(), "config.toml".into()],
        },
    )?;
    Ok(result)
}

fn cmd_train(args: &TrainArgs) -> Result<(), String> {
    let run = load_run_config(args.config.as_deref(), &args.model)?;
    let (train_set, eval_set) =
        load_datasets(&args.data, args.eval_data.as_deref(), run.eval_fraction)?;
    if let Some(expect) = args.seq_len {
        if expect != train_set.seq_len {
            return Err(format!(
                "--seq-len {} does not match dataset seq_len {}",
                expect, train_set.seq_len
            ));
        }
    }
    let result = run_one_cell(&run, &train_set, &eval_set, &args.out, "train", args.config.as_deref())?;
    println!(
        "{}: status={} best_eval_acc={:.4} best_eval_loss={:.4} steps={} params={}",
        run.code,
        result.status.as_str(),
        result.best_eval_acc,
        result.best_eval_loss,
        result.steps_done,
        result.num_params
    );
    if result.status == RunStatus::Diverged {
        eprintln!("run diverged; marked failed in metrics.csv");
    }
    Ok(())
}

fn sanitize(text: &str) -> String {
    text.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), String> {
    let base = load_run_config(args.config.as_deref(), &args.model)?;
    let (train_set, eval_set) =
        load_datasets(&args.data, args.eval_data.as_deref(), base.eval_fraction)?;

    let mut cells = Vec::new();
    for code in &args.grid_codes {
        for &lr in &args.grid_lr {
            for &tau in &args.grid_tau {
                let mut run = base.clone();
                run.code = code.clone();
                run.lr = lr;
                run.tau = tau;
                run.model_code().map_err(|e| e.to_string())?;
                cells.push(run);
            }
        }
    }
    let grid_size = cells.len();
    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;

    let outcomes: Vec<(RunConfig, Result<TrainResult, String>)> = cells
        .into_par_iter()
        .map(|run| {
            let cell_dir = args
                .out
                .join(sanitize(&format!("{}_lr{}_tau{}", run.code, run.lr, run.tau)));
            let outcome = run_one_cell(
                &run,
                &train_set,
                &eval_set,
                &cell_dir,
                "sweep",
                args.config.as_deref(),
            );
            (run, outcome)
        })
        .collect();

    let summary_path = args.out.join("summary.csv");
    let mut lines = vec!["code,psi,tau,lr,status,best_eval_acc,best_eval_loss,steps,params".to_string()];
    let mut hard_failures = 0usize;
    for (run, outcome) in &outcomes {
        match outcome {
            Ok(result) => lines.push(format!(
                "{},{},{},{},{},{:.6},{:.6},{},{}",
                run.code,
                run.psi,
                run.tau,
                run.lr,
                result.status.as_str(),
                result.best_eval_acc,
                result.best_eval_loss,
                result.steps_done,
                result.num_params
            )),
            Err(err) => {
                hard_failures += 1;
                lines.push(format!(
                    "{},{},{},{},error,,,,{}",
                    run.code,
                    run.psi,
                    run.tau,
                    run.lr,
                    sanitize(err)
                ));
            }
        }
    }
    fs::write(&summary_path, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
    println!("sweep complete: {grid_size} cells, summary at {}", summary_path.display());
    if hard_failures > 0 {
        return Err(format!("{hard_failures} sweep cells failed with errors"));
    }
    Ok(())
}

fn print_gradcheck_report(report: &GradCheckReport) {
    let verdict = if report.pass { "PASS" } else { "FAIL" };
    println!("{verdict}  {:<28} max_err {:.3e}", report.label, report.max_err);
    if !report.pass {
        for g in &report.groups {
            if g.max_err > gradcheck::GRADCHECK_TOL {
                println!("      {:<24} {:.3e}", g.name, g.max_err);
            }
        }
    }
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), String> {
    let dims = LayerDims { n: args.n, k: args.expand_k, d: args.d_inner, d_model: args.d_model };
    let reports: Vec<GradCheckReport> = match &args.code {
        Some(code_text) => {
            let psi = Psi::parse(&args.psi).ok_or("psi must be odot or times")?;
            let code = lcsm::ModelCode::parse(code_text)
                .map_err(|e| e.to_string())?
                .with_psi(psi)
                .with_tau(args.tau)
                .map_err(|e| e.to_string())?;
            let mut reports = vec![gradcheck::check_layer(&code, dims, args.seed)];
            if args.full_model {
                reports.push(gradcheck::check_model(&code, args.seed));
            }
            reports
        }
        None => {
            let mut reports = gradcheck::run_layer_suite(args.seed);
            if args.full_model {
                reports.extend(gradcheck::run_model_suite(args.seed));
            }
            reports
        }
    };
    let mut all_pass = true;
    for report in &reports {
        print_gradcheck_report(report);
        all_pass &= report.pass;
    }
    let worst = reports.iter().fold(0.0f64, |m, r| m.max(r.max_err));
    println!(
        "gradcheck: {}/{} configurations pass (tol {:.0e}, worst {:.3e})",
        reports.iter().filter(|r| r.pass).count(),
        reports.len(),
        gradcheck::GRADCHECK_TOL,
        worst
    );
    if all_pass {
        Ok(())
    } else {
        Err("gradient check failed".to_string())
    }
}

fn cmd_equiv(args: &EquivArgs) -> Result<(), String> {
    let rows = zoo::run_all(args.seed);
    let mut lines = vec!["method,check,max_abs_err,tol,status".to_string()];
    println!("{:<16} {:<24} {:>12} {:>8}  status", "method", "check", "max_abs_err", "tol");
    let mut all_pass = true;
    for row in &rows {
        let status = if row.pass { "PASS" } else { "FAIL" };
        println!(
            "{:<16} {:<24} {:>12.3e} {:>8.0e}  {status}",
            row.method, row.check, row.max_abs_err, row.tol
        );
        lines.push(format!(
            "{},{},{:e},{:e},{status}",
            row.method, row.check, row.max_abs_err, row.tol
        ));
        all_pass &= row.pass;
    }
    if let Some(path) = &args.out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| e.to_string())?;
            }
        }
        fs::write(path, lines.join("\n") + "\n").map_err(|e| e.to_string())?;
    }
    if all_pass {
        Ok(())
    } else {
        Err("equivalence verification failed".to_string())
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("LCSM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Mqar(args) => cmd_mqar(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Sweep(args) => cmd_sweep(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
        Cmd::Equiv(args) => cmd_equiv(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

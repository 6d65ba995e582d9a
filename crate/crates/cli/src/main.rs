use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use slotlab::compfun::io::save_generator;
use slotlab::error::{Error, Result};
use slotlab::evalkit::EvalReport;
use slotlab::experiment::{
    encode_inferred, prepare_data, replay_encoder, run_experiment, score_inferred, search_inferred,
    train_best_autoencoder, train_supervised_encoder, write_experiment, Arm, ExperimentConfig, Inferred, RunData,
};
use slotlab::learnkit::{Checkpoint, LossLog};
use slotlab::linalg::{serde_mat, Mat};
use slotlab::synthlab::Dataset;
use slotlab::theory::{run_suites, Suite};

#[derive(Parser)]
#[command(name = "slotlab", version, about = "Slot-structured generators, decoder inversion and theory certificates")]
struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "SLOTLAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,

    /// Run only this seed instead of the config's list.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct ModelInputs {
    /// Checkpoint written by `train` or `replay`.
    #[arg(long)]
    checkpoint: PathBuf,

    /// Dataset written by `gen-data`; regenerated from the config when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a generator and its in-domain / out-of-domain dataset.
    GenData(Common),
    /// Run theory suites and write one certificate file per suite.
    VerifyTheory {
        #[command(flatten)]
        common: Common,
        /// Suite to run (repeatable, `all` for every suite); overrides the config.
        #[arg(long)]
        suite: Vec<String>,
    },
    /// Train the model behind an arm and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "decoder")]
        arm: Arm,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Invert a checkpoint's decoder by latent search from its encoder.
    Search {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: ModelInputs,
    },
    /// Retrain a checkpoint's encoder on decoded slot recombinations.
    Replay {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: ModelInputs,
    },
    /// Score a checkpoint's encoder, or latents written by `search`.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: ModelInputs,
        #[arg(long)]
        latents: Option<PathBuf>,
    },
    /// Run every configured arm over every seed and write the report.
    RunExperiment {
        #[command(flatten)]
        common: Common,
        /// Restrict to these arms (repeatable).
        #[arg(long)]
        arm: Vec<Arm>,
    },
}

/// Latents inferred for both partitions, as written by `search`.
#[derive(Serialize, Deserialize)]
struct LatentFile {
    #[serde(with = "serde_mat")]
    id: Mat,
    #[serde(with = "serde_mat")]
    ood: Mat,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed_override {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_out(common: &Common) -> Result<&Path> {
    std::fs::create_dir_all(&common.out)?;
    Ok(&common.out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

fn write_loss_csv(path: &Path, log: &LossLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "recon", "penalty", "total"])?;
    for e in &log.entries {
        w.write_record([e.step.to_string(), e.recon.to_string(), e.penalty.to_string(), e.total.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Data of the first configured seed, optionally replaced by a saved dataset.
fn run_data(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<RunData> {
    let rd = prepare_data(cfg, cfg.seeds[0])?;
    match data {
        Some(p) => rd.with_dataset(Dataset::load(p)?),
        None => Ok(rd),
    }
}

fn gen_data(common: &Common) -> Result<u8> {
    let cfg = load_config(common)?;
    let out = create_out(common)?;
    let rd = prepare_data(&cfg, cfg.seeds[0])?;
    rd.dataset.save(&out.join("dataset.slds"))?;
    rd.dataset.write_csv(std::fs::File::create(out.join("dataset.csv"))?)?;
    save_generator(&rd.generator, &out.join("generator.json"))?;
    println!(
        "wrote {} in-domain and {} out-of-domain records (generator {})",
        rd.id.len(),
        rd.ood.len(),
        rd.dataset.header.generator_hash
    );
    Ok(0)
}

fn verify_theory(common: &Common, suite: &[String]) -> Result<u8> {
    let cfg = load_config(common)?;
    let selectors = if suite.is_empty() { &cfg.theory.suites } else { suite };
    let mut suites = Vec::new();
    for s in selectors {
        for x in Suite::parse_selector(s)? {
            if !suites.contains(&x) {
                suites.push(x);
            }
        }
    }
    // Preconditions are checked by `run_suites` before any instance runs.
    let bundle = run_suites(&suites, &cfg.theory.theory)?;
    let out = create_out(common)?;
    let dir = out.join("certificates");
    std::fs::create_dir_all(&dir)?;
    for r in &bundle.suites {
        write_json(&dir.join(format!("{}.json", r.suite.name())), &r.certificates)?;
        println!("{:<16} passed {:>4}  failed {:>4}", r.suite.name(), r.passed, r.failed);
    }
    let summary: serde_json::Value = serde_json::json!({
        "passed": bundle.passed,
        "failed": bundle.failed,
        "suites": bundle.suites.iter().map(|r| serde_json::json!({
            "suite": r.suite.name(),
            "passed": r.passed,
            "failed": r.failed,
        })).collect::<Vec<_>>(),
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(u8::from(!bundle.all_passed()))
}

fn train(common: &Common, arm: Arm, data: Option<&Path>) -> Result<u8> {
    let cfg = load_config(common)?;
    let rd = run_data(&cfg, data)?;
    let out = create_out(common)?;
    let (ck, log, info) = match arm {
        Arm::EncoderOnly => {
            let (enc, log) = train_supervised_encoder(&cfg, &rd)?;
            (Checkpoint { encoder: Some(enc), decoder: None }, log, serde_json::json!({}))
        }
        _ => {
            let ae = train_best_autoencoder(&cfg, &rd, arm == Arm::DenseDecoder)?;
            let info = serde_json::json!({ "restart": ae.restart, "id_mse": ae.id_mse });
            (Checkpoint { encoder: Some(ae.encoder), decoder: Some(ae.decoder) }, ae.log, info)
        }
    };
    ck.save(&out.join("checkpoint.ckpt"))?;
    write_loss_csv(&out.join("loss.csv"), &log)?;
    let meta = serde_json::json!({
        "arm": arm,
        "seed": cfg.seeds[0],
        "checksum": ck.checksum()?,
        "training": info,
    });
    write_json(&out.join("train.json"), &meta)?;
    println!("trained {arm} for seed {}: final loss {:.6e}", cfg.seeds[0], log.entries.last().map_or(0.0, |e| e.total));
    Ok(0)
}

fn load_model(inputs: &ModelInputs, need_decoder: bool) -> Result<Checkpoint> {
    let ck = Checkpoint::load(&inputs.checkpoint)?;
    if ck.encoder.is_none() || (need_decoder && ck.decoder.is_none()) {
        return Err(Error::Config(format!(
            "checkpoint {} lacks the {} this command needs",
            inputs.checkpoint.display(),
            if ck.encoder.is_none() { "encoder" } else { "decoder" }
        )));
    }
    Ok(ck)
}

fn search(common: &Common, inputs: &ModelInputs) -> Result<u8> {
    let cfg = load_config(common)?;
    let ck = load_model(inputs, true)?;
    let rd = run_data(&cfg, inputs.data.as_deref())?;
    let (enc, dec) = (ck.encoder.as_ref().unwrap(), ck.decoder.as_ref().unwrap());
    let (inf, trace) = search_inferred(&cfg, dec, enc, &rd)?;
    let out = create_out(common)?;
    write_json(&out.join("latents.json"), &LatentFile { id: inf.id.clone(), ood: inf.ood.clone() })?;
    let mut w = csv::Writer::from_path(out.join("search_trace.csv"))?;
    w.write_record(["step", "mean_ood_residual"])?;
    for (s, v) in trace.iter().enumerate() {
        w.write_record([s.to_string(), v.to_string()])?;
    }
    w.flush()?;
    let summary = inf.search.expect("search summary");
    write_json(&out.join("search.json"), &summary)?;
    for warning in &summary.warnings {
        eprintln!("warning: {warning}");
    }
    println!(
        "out-of-domain residual {:.6e} -> {:.6e}, never worse: {}",
        summary.ood_initial_mean, summary.ood_final_mean, summary.never_worse
    );
    Ok(0)
}

fn replay(common: &Common, inputs: &ModelInputs) -> Result<u8> {
    let cfg = load_config(common)?;
    let ck = load_model(inputs, true)?;
    let rd = run_data(&cfg, inputs.data.as_deref())?;
    let dec = ck.decoder.clone().unwrap();
    let (enc, log) = replay_encoder(&cfg, &rd, ck.encoder.as_ref().unwrap(), &dec)?;
    let out = create_out(common)?;
    let updated = Checkpoint { encoder: Some(enc), decoder: Some(dec) };
    updated.save(&out.join("checkpoint.ckpt"))?;
    log.write_csv(std::fs::File::create(out.join("replay_loss.csv"))?)?;
    println!(
        "replay held-out loss {:.6e} -> {:.6e}",
        log.holdout_start,
        log.holdout_end
    );
    Ok(0)
}

fn eval(common: &Common, inputs: &ModelInputs, latents: Option<&Path>) -> Result<u8> {
    let cfg = load_config(common)?;
    let ck = load_model(inputs, false)?;
    let rd = run_data(&cfg, inputs.data.as_deref())?;
    let inf = match latents {
        Some(p) => {
            let f: LatentFile = serde_json::from_slice(&std::fs::read(p)?)?;
            if f.id.nrows() != rd.id.len() || f.ood.nrows() != rd.ood.len() {
                return Err(Error::Dimension { context: "latent file rows", expected: rd.id.len(), got: f.id.nrows() });
            }
            Inferred { id: f.id, ood: f.ood, decoder: ck.decoder.clone(), search: None }
        }
        None => encode_inferred(ck.encoder.as_ref().unwrap(), ck.decoder.as_ref(), &rd),
    };
    let report: EvalReport = score_inferred(&cfg, &rd, &inf)?;
    let out = create_out(common)?;
    write_json(&out.join("eval.json"), &report)?;
    report.write_csv(std::fs::File::create(out.join("eval.csv"))?)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "mean R2 id {:.4} ood {}; readout accuracy id {:.4} ood {}",
        report.mean_r2_id,
        report.mean_r2_ood.map_or("-".into(), |v| format!("{v:.4}")),
        report.readout_accuracy_id,
        report.readout_accuracy_ood.map_or("-".into(), |v| format!("{v:.4}")),
    );
    Ok(0)
}

fn run_experiment_cmd(common: &Common, arms: &[Arm]) -> Result<u8> {
    let mut cfg = load_config(common)?;
    if !arms.is_empty() {
        cfg.arms = arms.to_vec();
    }
    let out = run_experiment(&cfg)?;
    write_experiment(&out, create_out(common)?)?;
    for s in &out.report.summary {
        let f = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
        println!(
            "{:<22} ok {:>2} failed {:>2}  R2 id {} ood {}  accuracy id {} ood {}",
            s.arm.name(),
            s.completed,
            s.failed,
            f(s.mean_r2_id),
            f(s.mean_r2_ood),
            f(s.mean_readout_accuracy_id),
            f(s.mean_readout_accuracy_ood)
        );
    }
    for a in out.report.arms.iter().filter(|a| a.error.is_some()) {
        eprintln!("{} seed {} failed: {}", a.arm, a.seed, a.error.as_deref().unwrap_or(""));
    }
    let theory_failed = out.report.theory.as_ref().is_some_and(|t| t.failed > 0);
    Ok(u8::from(out.report.any_failed() || theory_failed))
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::VerifyTheory { common, suite } => verify_theory(common, suite),
        Command::Train { common, arm, data } => train(common, *arm, data.as_deref()),
        Command::Search { common, inputs } => search(common, inputs),
        Command::Replay { common, inputs } => replay(common, inputs),
        Command::Eval { common, inputs, latents } => eval(common, inputs, latents.as_deref()),
        Command::RunExperiment { common, arm } => run_experiment_cmd(common, arm),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

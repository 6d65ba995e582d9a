use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Arm, ExperimentConfig, RunSeeds};
use crate::compfun::generator::InteractionGenerator;
use crate::compfun::io::generator_hash;
use crate::error::{Error, Result};
use crate::evalkit::{slot_match_and_score, EvalReport, SlotData};
use crate::inversion::{replay_train, residuals, search_invert, RecombinationSampler, ReplayLog, SearchResult};
use crate::learnkit::{
    reconstruction_mse, train_autoencoder, train_regressor, Decoder, LossLog, Network, SlotwiseDecoder,
};
use crate::linalg::Mat;
use crate::rng;
use crate::synthlab::{sample_dataset, Dataset, Partition, SplitTag};
use crate::theory::{run_suites, Suite, TheoryBundle};

pub const REPORT_VERSION: u32 = 1;

/// Generator and dataset of one run seed.
#[derive(Clone, Debug)]
pub struct RunData {
    pub seeds: RunSeeds,
    pub generator: InteractionGenerator,
    pub dataset: Dataset,
    pub id: Partition,
    pub ood: Partition,
}

pub fn prepare_data(cfg: &ExperimentConfig, run: u64) -> Result<RunData> {
    let seeds = cfg.stage_seeds.for_run(run);
    let generator = cfg.generator.build(seeds.generator)?;
    let grid = cfg.grid()?;
    let dataset = sample_dataset(&generator, &grid, cfg.data.n_id, cfg.data.n_ood, seeds.data)?;
    let id = dataset.partition(SplitTag::Id);
    let ood = dataset.partition(SplitTag::Ood);
    Ok(RunData { seeds, generator, dataset, id, ood })
}

impl RunData {
    /// Replaces the sampled records with `dataset`, which must come from the
    /// same generator.
    pub fn with_dataset(mut self, dataset: Dataset) -> Result<Self> {
        let expected = generator_hash(&self.generator)?;
        if dataset.header.generator_hash != expected {
            return Err(Error::Config(format!(
                "dataset was drawn from generator {}, the config builds {expected}",
                dataset.header.generator_hash
            )));
        }
        self.id = dataset.partition(SplitTag::Id);
        self.ood = dataset.partition(SplitTag::Ood);
        self.dataset = dataset;
        Ok(self)
    }
}

pub fn build_encoder(cfg: &ExperimentConfig, d_x: usize, d_z: usize, seed: u64) -> Result<Network> {
    let widths: Vec<usize> =
        std::iter::once(d_x).chain(cfg.encoder.hidden.iter().copied()).chain(std::iter::once(d_z)).collect();
    Network::new(&widths, cfg.encoder.activation, seed)
}

pub fn build_slotwise_decoder(cfg: &ExperimentConfig, gen: &InteractionGenerator, seed: u64) -> Result<Decoder> {
    let d = &cfg.decoder;
    SlotwiseDecoder::new(gen.slots(), d.degree, &d.hidden, gen.observation_dim(), d.activation, seed)?
        .with_table(d.interaction)
        .map(Decoder::Slotwise)
}

pub fn build_dense_decoder(cfg: &ExperimentConfig, gen: &InteractionGenerator, seed: u64) -> Result<Decoder> {
    let widths: Vec<usize> = std::iter::once(gen.latent_dim())
        .chain(cfg.decoder.dense_hidden.iter().copied())
        .chain(std::iter::once(gen.observation_dim()))
        .collect();
    Network::new(&widths, cfg.decoder.activation, seed).map(Decoder::Dense)
}

/// Trained autoencoder and the restart it came from.
#[derive(Clone, Debug)]
pub struct TrainedAutoencoder {
    pub encoder: Network,
    pub decoder: Decoder,
    pub log: LossLog,
    pub restart: usize,
    pub id_mse: f64,
}

/// Trains `restarts` autoencoders from independent initialisations and keeps
/// the one with the lowest in-domain reconstruction error.
pub fn train_best_autoencoder(cfg: &ExperimentConfig, data: &RunData, dense: bool) -> Result<TrainedAutoencoder> {
    let slots = data.generator.slots();
    let mut best: Option<TrainedAutoencoder> = None;
    let mut last_err = None;
    for restart in 0..cfg.autoencoder.restarts {
        let seed = rng::mix(data.seeds.train, 2 * restart as u64 + u64::from(dense));
        let mut enc = build_encoder(cfg, data.id.x.ncols(), slots.latent_dim(), rng::mix(seed, 1))?;
        let mut dec = if dense {
            build_dense_decoder(cfg, &data.generator, rng::mix(seed, 2))?
        } else {
            build_slotwise_decoder(cfg, &data.generator, rng::mix(seed, 2))?
        };
        let mut tc = cfg.autoencoder.train.clone();
        tc.seed = seed;
        if dense {
            tc.penalty_weight = cfg.decoder.dense_penalty_weight;
        }
        match train_autoencoder(&mut enc, &mut dec, &data.id.x, &slots, &tc) {
            Ok(log) => {
                let id_mse = reconstruction_mse(&enc, &dec, &data.id.x);
                if best.as_ref().is_none_or(|b| id_mse < b.id_mse) {
                    best = Some(TrainedAutoencoder { encoder: enc, decoder: dec, log, restart, id_mse });
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Config("no autoencoder restarts".into())))
}

/// Copy of `encoder` retrained on decoded recombinations of its own in-domain
/// slot estimates.
pub fn replay_encoder(cfg: &ExperimentConfig, data: &RunData, encoder: &Network, dec: &Decoder) -> Result<(Network, ReplayLog)> {
    let pool = encoder.forward_batch(&data.id.x);
    let sampler = RecombinationSampler::from_latents(data.generator.slots(), &pool, data.seeds.replay)?;
    let mut enc = encoder.clone();
    let mut rc = cfg.replay.clone();
    rc.seed = data.seeds.replay;
    let log = replay_train(dec, &mut enc, &sampler, &rc)?;
    Ok((enc, log))
}

/// Encoder regressed on the ground-truth latents of the in-domain data.
pub fn train_supervised_encoder(cfg: &ExperimentConfig, data: &RunData) -> Result<(Network, LossLog)> {
    let seed = rng::mix(data.seeds.train, 1 << 32);
    let mut enc = build_encoder(cfg, data.id.x.ncols(), data.id.z.ncols(), seed)?;
    let mut tc = cfg.supervised.clone();
    tc.seed = seed;
    let log = train_regressor(&mut enc, &data.id.x, &data.id.z, &tc)?;
    Ok((enc, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub id_initial_mean: f64,
    pub id_final_mean: f64,
    pub ood_initial_mean: f64,
    pub ood_final_mean: f64,
    /// Every point ends with a residual at most its starting residual.
    pub never_worse: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArmStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmOutcome {
    pub arm: Arm,
    pub seed: u64,
    pub status: ArmStatus,
    pub error: Option<String>,
    pub report: Option<EvalReport>,
    pub search: Option<SearchSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub completed: usize,
    pub failed: usize,
    pub mean_readout_accuracy_id: Option<f64>,
    pub mean_readout_accuracy_ood: Option<f64>,
    pub mean_r2_id: Option<f64>,
    pub mean_r2_ood: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub passed: usize,
    pub failed: usize,
    pub suites: BTreeMap<String, (usize, usize)>,
}

impl From<&TheoryBundle> for TheorySummary {
    fn from(b: &TheoryBundle) -> Self {
        TheorySummary {
            passed: b.passed,
            failed: b.failed,
            suites: b.suites.iter().map(|s| (s.suite.name().to_string(), (s.passed, s.failed))).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub name: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub arms: Vec<ArmOutcome>,
    pub summary: Vec<ArmSummary>,
    pub theory: Option<TheorySummary>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn summary_for(&self, arm: Arm) -> Option<&ArmSummary> {
        self.summary.iter().find(|s| s.arm == arm)
    }

    pub fn any_failed(&self) -> bool {
        self.arms.iter().any(|a| a.status == ArmStatus::Failed)
    }
}

/// Logs and wall times of one run seed, kept out of the report.
#[derive(Clone, Debug, Default)]
pub struct SeedArtifacts {
    pub autoencoder: Option<LossLog>,
    pub dense_autoencoder: Option<LossLog>,
    pub supervised: Option<LossLog>,
    pub replay: Option<ReplayLog>,
    /// Mean out-of-domain residual per search step, per arm.
    pub search_traces: BTreeMap<Arm, Vec<f64>>,
    pub timings: BTreeMap<String, f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn mse(dec: &Decoder, x: &Mat, z: &Mat) -> Option<f64> {
    (x.nrows() > 0).then(|| mean(&residuals(dec, x, z)))
}

/// Latents inferred for both partitions by one arm.
#[derive(Clone, Debug)]
pub struct Inferred {
    pub id: Mat,
    pub ood: Mat,
    pub decoder: Option<Decoder>,
    pub search: Option<SearchSummary>,
}

pub fn score_inferred(cfg: &ExperimentConfig, data: &RunData, inf: &Inferred) -> Result<EvalReport> {
    let slots = data.generator.slots();
    let id_labels = data.id.slot_labels();
    let ood_labels = data.ood.slot_labels();
    let mut rep = slot_match_and_score(
        &slots,
        SlotData { z_hat: &inf.id, z: &data.id.z, labels: &id_labels },
        (!data.ood.is_empty()).then_some(SlotData { z_hat: &inf.ood, z: &data.ood.z, labels: &ood_labels }),
        cfg.grid.bins_per_slot,
        &cfg.eval,
    )?;
    if let Some(dec) = &inf.decoder {
        rep.recon_mse_id = mse(dec, &data.id.x, &inf.id);
        rep.recon_mse_ood = mse(dec, &data.ood.x, &inf.ood);
    }
    rep.config_hash = Some(cfg.hash()?);
    rep.seeds = data.seeds.as_map();
    Ok(rep)
}

/// Searches from the encoder's guess on both partitions; also returns the mean
/// out-of-domain residual per step.
pub fn search_inferred(cfg: &ExperimentConfig, dec: &Decoder, enc: &Network, data: &RunData) -> Result<(Inferred, Vec<f64>)> {
    let run = |x: &Mat| -> Result<SearchResult> {
        let z0 = enc.forward_batch(x);
        search_invert(dec, x, &z0, &cfg.search, None)
    };
    let id = run(&data.id.x)?;
    let ood = if data.ood.is_empty() { None } else { Some(run(&data.ood.x)?) };
    let never_worse = std::iter::once(&id)
        .chain(ood.as_ref())
        .all(|r| r.best_residual.iter().zip(&r.initial_residual).all(|(b, i)| b <= i));
    let trace = ood.as_ref().map(|r| r.trace.iter().map(|s| mean(s)).collect()).unwrap_or_default();
    let summary = SearchSummary {
        id_initial_mean: mean(&id.initial_residual),
        id_final_mean: mean(&id.best_residual),
        ood_initial_mean: ood.as_ref().map_or(0.0, |r| mean(&r.initial_residual)),
        ood_final_mean: ood.as_ref().map_or(0.0, |r| mean(&r.best_residual)),
        never_worse,
        warnings: std::iter::once(&id).chain(ood.as_ref()).filter_map(|r| r.warning.clone()).collect(),
    };
    let ood_z = ood.map_or_else(|| Mat::zeros(0, dec.latent_dim()), |r| r.z);
    Ok((Inferred { id: id.z, ood: ood_z, decoder: Some(dec.clone()), search: Some(summary) }, trace))
}

pub fn encode_inferred(enc: &Network, dec: Option<&Decoder>, data: &RunData) -> Inferred {
    Inferred {
        id: enc.forward_batch(&data.id.x),
        ood: enc.forward_batch(&data.ood.x),
        decoder: dec.cloned(),
        search: None,
    }
}

fn timed<T>(timings: &mut BTreeMap<String, f64>, key: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    timings.insert(key.to_string(), t.elapsed().as_secs_f64());
    out
}

/// Runs the requested arms for one run seed; arm failures are recorded, not
/// propagated.
pub fn run_seed(cfg: &ExperimentConfig, run: u64) -> Result<(Vec<ArmOutcome>, SeedArtifacts)> {
    let mut art = SeedArtifacts::default();
    let data = timed(&mut art.timings, "data", || prepare_data(cfg, run))?;
    let wants = |a: Arm| cfg.arms.contains(&a);
    let mut inferred: BTreeMap<Arm, Result<Inferred>> = BTreeMap::new();

    if wants(Arm::EncoderOnly) {
        let r = timed(&mut art.timings, "supervised", || train_supervised_encoder(cfg, &data));
        inferred.insert(
            Arm::EncoderOnly,
            r.map(|(enc, log)| {
                art.supervised = Some(log);
                encode_inferred(&enc, None, &data)
            }),
        );
    }
    if wants(Arm::DenseDecoder) {
        let r = timed(&mut art.timings, "dense-autoencoder", || train_best_autoencoder(cfg, &data, true));
        inferred.insert(
            Arm::DenseDecoder,
            r.map(|ae| {
                art.dense_autoencoder = Some(ae.log.clone());
                encode_inferred(&ae.encoder, Some(&ae.decoder), &data)
            }),
        );
    }
    if cfg.arms.iter().any(|a| a.needs_slotwise_decoder()) {
        match timed(&mut art.timings, "autoencoder", || train_best_autoencoder(cfg, &data, false)) {
            Ok(ae) => {
                art.autoencoder = Some(ae.log.clone());
                let dec = &ae.decoder;
                if wants(Arm::Decoder) {
                    inferred.insert(Arm::Decoder, Ok(encode_inferred(&ae.encoder, Some(dec), &data)));
                }
                if wants(Arm::DecoderSearch) {
                    let r = timed(&mut art.timings, "search", || search_inferred(cfg, dec, &ae.encoder, &data));
                    inferred.insert(
                        Arm::DecoderSearch,
                        r.map(|(inf, trace)| {
                            art.search_traces.insert(Arm::DecoderSearch, trace);
                            inf
                        }),
                    );
                }
                if wants(Arm::DecoderReplay) || wants(Arm::DecoderSearchReplay) {
                    let replayed = timed(&mut art.timings, "replay", || -> Result<Network> {
                        let (enc, log) = replay_encoder(cfg, &data, &ae.encoder, dec)?;
                        art.replay = Some(log);
                        Ok(enc)
                    });
                    match replayed {
                        Ok(enc) => {
                            if wants(Arm::DecoderReplay) {
                                inferred.insert(Arm::DecoderReplay, Ok(encode_inferred(&enc, Some(dec), &data)));
                            }
                            if wants(Arm::DecoderSearchReplay) {
                                let r = timed(&mut art.timings, "search-replay", || search_inferred(cfg, dec, &enc, &data));
                                inferred.insert(
                                    Arm::DecoderSearchReplay,
                                    r.map(|(inf, trace)| {
                                        art.search_traces.insert(Arm::DecoderSearchReplay, trace);
                                        inf
                                    }),
                                );
                            }
                        }
                        Err(e) => {
                            let msg = e.to_string();
                            for a in [Arm::DecoderReplay, Arm::DecoderSearchReplay].into_iter().filter(|&a| wants(a)) {
                                inferred.insert(a, Err(Error::Config(format!("replay failed: {msg}"))));
                            }
                        }
                    }
                }
            }
            Err(e) => {
                let msg = e.to_string();
                for a in cfg.arms.iter().copied().filter(|a| a.needs_slotwise_decoder()) {
                    inferred.insert(a, Err(Error::Config(format!("autoencoder training failed: {msg}"))));
                }
            }
        }
    }

    let outcomes = cfg
        .arms
        .iter()
        .map(|&arm| {
            let result = match inferred.remove(&arm) {
                Some(Ok(inf)) => score_inferred(cfg, &data, &inf).map(|rep| (rep, inf.search)),
                Some(Err(e)) => Err(e),
                None => Err(Error::Config(format!("arm {arm} was not run"))),
            };
            match result {
                Ok((report, search)) => {
                    ArmOutcome { arm, seed: run, status: ArmStatus::Ok, error: None, report: Some(report), search }
                }
                Err(e) => ArmOutcome {
                    arm,
                    seed: run,
                    status: ArmStatus::Failed,
                    error: Some(e.to_string()),
                    report: None,
                    search: None,
                },
            }
        })
        .collect();
    Ok((outcomes, art))
}

fn summarize(arm: Arm, outcomes: &[ArmOutcome]) -> ArmSummary {
    let reports: Vec<&EvalReport> = outcomes.iter().filter(|o| o.arm == arm).filter_map(|o| o.report.as_ref()).collect();
    let failed = outcomes.iter().filter(|o| o.arm == arm && o.status == ArmStatus::Failed).count();
    let avg = |f: &dyn Fn(&EvalReport) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = reports.iter().filter_map(|r| f(r)).collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    ArmSummary {
        arm,
        completed: reports.len(),
        failed,
        mean_readout_accuracy_id: avg(&|r| Some(r.readout_accuracy_id)),
        mean_readout_accuracy_ood: avg(&|r| r.readout_accuracy_ood),
        mean_r2_id: avg(&|r| Some(r.mean_r2_id)),
        mean_r2_ood: avg(&|r| r.mean_r2_ood),
    }
}

/// Everything a run produces: the deterministic report plus logs and timings.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub artifacts: Vec<(u64, SeedArtifacts)>,
    pub theory_seconds: f64,
}

/// Runs every seed (in parallel on the current rayon pool) and assembles the
/// report in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut notes = vec![
        "latents are uniform within each bin; the in-domain distribution beyond its support is a modelling choice".into(),
        format!(
            "slot matching cost: 1 - R^2 of a degree-{} ridge regression per slot pair, fit on in-domain data",
            cfg.eval.poly_degree
        ),
    ];
    let per_seed: Vec<Result<(Vec<ArmOutcome>, SeedArtifacts)>> =
        cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect();
    let mut arms = Vec::new();
    let mut artifacts = Vec::new();
    for (&seed, r) in cfg.seeds.iter().zip(per_seed) {
        let (outcomes, art) = r?;
        arms.extend(outcomes);
        artifacts.push((seed, art));
    }
    let t = Instant::now();
    let theory = if cfg.theory.enabled {
        let mut suites = Vec::new();
        for s in &cfg.theory.suites {
            suites.extend(Suite::parse_selector(s)?);
        }
        match run_suites(&suites, &cfg.theory.theory) {
            Ok(b) => Some(TheorySummary::from(&b)),
            Err(e) => {
                notes.push(format!("theory summary failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    let theory_seconds = t.elapsed().as_secs_f64();
    let summary = cfg.arms.iter().map(|&a| summarize(a, &arms)).collect();
    let report = ExperimentReport {
        version: REPORT_VERSION,
        name: cfg.name.clone(),
        config_hash: cfg.hash()?,
        config: cfg.clone(),
        arms,
        summary,
        theory,
        notes,
    };
    Ok(ExperimentOutput { report, artifacts, theory_seconds })
}

fn write_loss_log(path: &Path, log: &LossLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "recon", "penalty", "total"])?;
    for e in &log.entries {
        w.write_record([e.step.to_string(), e.recon.to_string(), e.penalty.to_string(), e.total.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `ood_accuracy.csv`, per-seed logs under `logs/` and
/// `timings.json` into `dir`.
pub fn write_experiment(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&out.report)?)?;
    let mut table = csv::Writer::from_path(dir.join("ood_accuracy.csv"))?;
    table.write_record([
        "arm",
        "seed",
        "status",
        "readout_accuracy_id",
        "readout_accuracy_ood",
        "mean_r2_id",
        "mean_r2_ood",
        "recon_mse_id",
        "recon_mse_ood",
    ])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for a in &out.report.arms {
        let r = a.report.as_ref();
        table.write_record([
            a.arm.name().to_string(),
            a.seed.to_string(),
            format!("{:?}", a.status).to_lowercase(),
            opt(r.map(|r| r.readout_accuracy_id)),
            opt(r.and_then(|r| r.readout_accuracy_ood)),
            opt(r.map(|r| r.mean_r2_id)),
            opt(r.and_then(|r| r.mean_r2_ood)),
            opt(r.and_then(|r| r.recon_mse_id)),
            opt(r.and_then(|r| r.recon_mse_ood)),
        ])?;
    }
    table.flush()?;
    let mut timings: BTreeMap<String, f64> = BTreeMap::new();
    for (seed, art) in &out.artifacts {
        let logs = dir.join("logs").join(format!("seed-{seed}"));
        std::fs::create_dir_all(&logs)?;
        if let Some(l) = &art.autoencoder {
            write_loss_log(&logs.join("autoencoder_loss.csv"), l)?;
        }
        if let Some(l) = &art.dense_autoencoder {
            write_loss_log(&logs.join("dense_autoencoder_loss.csv"), l)?;
        }
        if let Some(l) = &art.supervised {
            write_loss_log(&logs.join("supervised_loss.csv"), l)?;
        }
        if let Some(l) = &art.replay {
            l.write_csv(std::fs::File::create(logs.join("replay_loss.csv"))?)?;
        }
        if !art.search_traces.is_empty() {
            let mut w = csv::Writer::from_path(logs.join("search_trace.csv"))?;
            w.write_record(["arm", "step", "mean_ood_residual"])?;
            for (arm, trace) in &art.search_traces {
                for (s, v) in trace.iter().enumerate() {
                    w.write_record([arm.name().to_string(), s.to_string(), v.to_string()])?;
                }
            }
            w.flush()?;
        }
        for (k, v) in &art.timings {
            timings.insert(format!("seed-{seed}/{k}"), *v);
        }
    }
    timings.insert("theory".into(), out.theory_seconds);
    std::fs::write(dir.join("timings.json"), serde_json::to_vec_pretty(&timings)?)?;
    Ok(())
}

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compfun::generator::InteractionGenerator;
use crate::error::{Error, Result};
use crate::evalkit::EvalConfig;
use crate::inversion::{ReplayConfig, SearchConfig};
use crate::learnkit::{Activation, InteractionTable, TrainConfig};
use crate::rng;
use crate::synthlab::{
    make_pixel_partition_generator, random_interaction_generator, InteractionSpec, MaskSpec, PixelPartitionSpec,
    SlotBinGrid,
};
use crate::theory::TheoryConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Encoder regressed on ground-truth latents of in-domain data; no decoder.
    EncoderOnly,
    /// Autoencoder encoder with the slot-wise decoder.
    Decoder,
    /// Latent search on the slot-wise decoder, started at the encoder.
    DecoderSearch,
    /// Encoder retrained by replaying recombined slots through the decoder.
    DecoderReplay,
    /// Search started at the replay-trained encoder.
    DecoderSearchReplay,
    /// Autoencoder with an unconstrained dense decoder.
    DenseDecoder,
}

impl Arm {
    pub const ALL: [Arm; 6] =
        [Arm::EncoderOnly, Arm::Decoder, Arm::DecoderSearch, Arm::DecoderReplay, Arm::DecoderSearchReplay, Arm::DenseDecoder];

    pub fn name(self) -> &'static str {
        match self {
            Arm::EncoderOnly => "encoder-only",
            Arm::Decoder => "decoder",
            Arm::DecoderSearch => "decoder-search",
            Arm::DecoderReplay => "decoder-replay",
            Arm::DecoderSearchReplay => "decoder-search-replay",
            Arm::DenseDecoder => "dense-decoder",
        }
    }

    pub fn needs_slotwise_decoder(self) -> bool {
        !matches!(self, Arm::EncoderOnly | Arm::DenseDecoder)
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            Error::Config(format!("unknown arm {s:?}; expected one of {}", Arm::ALL.map(Arm::name).join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorConfig {
    Interaction(InteractionSpec),
    PixelPartition(PixelPartitionSpec),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Interaction(InteractionSpec::default())
    }
}

impl GeneratorConfig {
    pub fn slots(&self) -> usize {
        match self {
            GeneratorConfig::Interaction(s) => s.slots,
            GeneratorConfig::PixelPartition(s) => s.group_sizes.len(),
        }
    }

    pub fn slot_dim(&self) -> usize {
        match self {
            GeneratorConfig::Interaction(s) => s.slot_dim,
            GeneratorConfig::PixelPartition(s) => s.slot_dim,
        }
    }

    pub fn build(&self, seed: u64) -> Result<InteractionGenerator> {
        match self {
            GeneratorConfig::Interaction(s) => random_interaction_generator(s, seed),
            GeneratorConfig::PixelPartition(s) => make_pixel_partition_generator(s, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub bins_per_slot: usize,
    pub lo: f64,
    pub hi: f64,
    pub mask: MaskSpec,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { bins_per_slot: 4, lo: -1.0, hi: 1.0, mask: MaskSpec::LShape { width: 1 } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub n_id: usize,
    pub n_ood: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { n_id: 2000, n_ood: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { hidden: vec![64, 64], activation: Activation::Tanh }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    /// Hidden widths of each slot network.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Interaction degree of the slot-wise decoder.
    pub degree: u32,
    pub interaction: InteractionTable,
    /// Hidden widths of the dense decoder of the `dense-decoder` arm.
    pub dense_hidden: Vec<usize>,
    /// Hessian penalty weight for the dense decoder.
    pub dense_penalty_weight: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
            degree: 2,
            interaction: InteractionTable::Cross,
            dense_hidden: vec![64, 64],
            dense_penalty_weight: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    /// Independent initialisations; the lowest final in-domain reconstruction error wins.
    pub restarts: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig { train: TrainConfig { steps: 30_000, ..TrainConfig::default() }, restarts: 2 }
    }
}

/// Base seeds per stage; each run seed is mixed into every stage seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageSeeds {
    pub generator: u64,
    pub data: u64,
    pub train: u64,
    pub replay: u64,
    pub eval: u64,
}

impl Default for StageSeeds {
    fn default() -> Self {
        StageSeeds { generator: 1, data: 2, train: 3, replay: 4, eval: 5 }
    }
}

/// Concrete seeds of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub run: u64,
    pub generator: u64,
    pub data: u64,
    pub train: u64,
    pub replay: u64,
    pub eval: u64,
}

impl StageSeeds {
    pub fn for_run(&self, run: u64) -> RunSeeds {
        RunSeeds {
            run,
            generator: rng::mix(self.generator, run),
            data: rng::mix(self.data, run),
            train: rng::mix(self.train, run),
            replay: rng::mix(self.replay, run),
            eval: rng::mix(self.eval, run),
        }
    }
}

impl RunSeeds {
    pub fn as_map(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("run".to_string(), self.run),
            ("generator".to_string(), self.generator),
            ("data".to_string(), self.data),
            ("train".to_string(), self.train),
            ("replay".to_string(), self.replay),
            ("eval".to_string(), self.eval),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheorySummaryConfig {
    pub enabled: bool,
    pub suites: Vec<String>,
    #[serde(flatten)]
    pub theory: TheoryConfig,
}

impl Default for TheorySummaryConfig {
    fn default() -> Self {
        TheorySummaryConfig {
            enabled: true,
            suites: vec!["all".into()],
            theory: TheoryConfig { instances: 20, converse_instances: 10, construct_instances: 5, ..Default::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub stage_seeds: StageSeeds,
    pub generator: GeneratorConfig,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub autoencoder: AutoencoderConfig,
    /// Supervised training of the `encoder-only` arm.
    pub supervised: TrainConfig,
    pub search: SearchConfig,
    pub replay: ReplayConfig,
    pub eval: EvalConfig,
    pub theory: TheorySummaryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seeds: vec![0],
            arms: vec![Arm::EncoderOnly, Arm::Decoder, Arm::DecoderSearch, Arm::DecoderReplay, Arm::DecoderSearchReplay],
            stage_seeds: StageSeeds::default(),
            generator: GeneratorConfig::default(),
            grid: GridConfig::default(),
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            decoder: DecoderConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            supervised: TrainConfig { steps: 30_000, ..TrainConfig::default() },
            search: SearchConfig { lr: 1e-2, ..Default::default() },
            replay: ReplayConfig::default(),
            eval: EvalConfig::default(),
            theory: TheorySummaryConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; unknown keys anywhere are collected and reported together.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: ExperimentConfig =
            serde_ignored::deserialize(de, |path| unknown.push(path.to_string())).map_err(|e| Error::Config(e.to_string()))?;
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown configuration keys: {}", unknown.join(", "))));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.arms.is_empty() {
            return Err(Error::Config("at least one arm is required".into()));
        }
        if self.data.n_id == 0 {
            return Err(Error::Config("n_id must be positive".into()));
        }
        if self.autoencoder.restarts == 0 {
            return Err(Error::Config("autoencoder restarts must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SlotBinGrid> {
        let g = &self.grid;
        SlotBinGrid::uniform(self.generator.slots(), self.generator.slot_dim(), g.bins_per_slot, g.lo, g.hi, &g.mask)
    }

    /// SHA-256 of the compact JSON of the resolved configuration.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_listed() {
        let e = ExperimentConfig::from_toml("seeds = [1]\nbogus = 3\n[search]\nstepz = 4\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("bogus") && msg.contains("search.stepz"), "{msg}");
    }

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn arm_names_parse() {
        for a in Arm::ALL {
            assert_eq!(a.name().parse::<Arm>().unwrap(), a);
        }
        assert!("nope".parse::<Arm>().is_err());
    }
}

//! JSON files holding a single interaction generator.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generator::InteractionGenerator;
use crate::error::{Error, Result};

pub const GENERATOR_FORMAT: &str = "slotlab-generator";
pub const GENERATOR_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    format: String,
    version: u32,
    generator: InteractionGenerator,
}

pub fn generator_to_json(g: &InteractionGenerator) -> Result<String> {
    Ok(serde_json::to_string_pretty(&GeneratorFile {
        format: GENERATOR_FORMAT.into(),
        version: GENERATOR_VERSION,
        generator: g.clone(),
    })?)
}

pub fn generator_from_json(text: &str) -> Result<InteractionGenerator> {
    let file: GeneratorFile = serde_json::from_str(text)?;
    if file.format != GENERATOR_FORMAT {
        return Err(Error::Format(format!("expected format {GENERATOR_FORMAT:?}, found {:?}", file.format)));
    }
    if file.version != GENERATOR_VERSION {
        return Err(Error::Format(format!("unsupported generator version {}", file.version)));
    }
    file.generator.validate()?;
    Ok(file.generator)
}

pub fn save_generator(g: &InteractionGenerator, path: &Path) -> Result<()> {
    std::fs::write(path, generator_to_json(g)?)?;
    Ok(())
}

pub fn load_generator(path: &Path) -> Result<InteractionGenerator> {
    generator_from_json(&std::fs::read_to_string(path)?)
}

/// Hex SHA-256 of the canonical (compact) JSON encoding.
pub fn generator_hash(g: &InteractionGenerator) -> Result<String> {
    let bytes = serde_json::to_vec(g)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

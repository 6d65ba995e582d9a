//! Binary checkpoints: `SLCK`, a little-endian `u32` version, a length-prefixed
//! JSON architecture header, then every parameter as little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::decoder::{table_indices, Decoder, InteractionTable, SlotwiseDecoder};
use super::network::{Activation, Network};
use crate::compfun::generator::SlotStructure;
use crate::error::{Error, Result};
use crate::linalg::Mat;

const MAGIC: &[u8; 4] = b"SLCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NetworkArch {
    widths: Vec<usize>,
    activation: Activation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum DecoderArch {
    Slotwise {
        slots: SlotStructure,
        degree: u32,
        #[serde(default)]
        table: InteractionTable,
        net: NetworkArch,
        output_dim: usize,
    },
    Dense { net: NetworkArch },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    encoder: Option<NetworkArch>,
    decoder: Option<DecoderArch>,
    param_count: usize,
}

/// Encoder and/or decoder parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub encoder: Option<Network>,
    pub decoder: Option<Decoder>,
}

fn arch(n: &Network) -> NetworkArch {
    NetworkArch { widths: n.widths().to_vec(), activation: n.activation() }
}

impl Checkpoint {
    fn params(&self) -> Vec<&Mat> {
        let mut p: Vec<&Mat> = self.encoder.iter().flat_map(|e| e.params()).collect();
        if let Some(d) = &self.decoder {
            p.extend(d.params());
        }
        p
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.params();
        let header = Header {
            encoder: self.encoder.as_ref().map(arch),
            decoder: self.decoder.as_ref().map(|d| match d {
                Decoder::Slotwise(s) => DecoderArch::Slotwise {
                    slots: s.slots(),
                    degree: s.degree(),
                    table: s.table(),
                    net: arch(&s.nets()[0]),
                    output_dim: s.output_dim(),
                },
                Decoder::Dense(n) => DecoderArch::Dense { net: arch(n) },
            }),
            param_count: params.iter().map(|p| p.len()).sum(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.write_all(MAGIC)?;
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u64::<LittleEndian>(json.len() as u64)?;
        out.write_all(&json)?;
        for p in params {
            // Row-major so the layout does not depend on the matrix library.
            for r in 0..p.nrows() {
                for c in 0..p.ncols() {
                    out.write_f64::<LittleEndian>(p[(r, c)])?;
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = bytes;
        let mut magic = [0u8; 4];
        rd.read_exact(&mut magic).map_err(|_| Error::Format("checkpoint truncated".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = rd.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = rd.read_u64::<LittleEndian>()? as usize;
        if len > rd.len() {
            return Err(Error::Format("checkpoint header truncated".into()));
        }
        let header: Header = serde_json::from_slice(&rd[..len])?;
        rd = &rd[len..];
        let encoder = header.encoder.as_ref().map(|a| Network::zeros(&a.widths, a.activation)).transpose()?;
        let decoder = match &header.decoder {
            None => None,
            Some(DecoderArch::Dense { net }) => Some(Decoder::Dense(Network::zeros(&net.widths, net.activation)?)),
            Some(DecoderArch::Slotwise { slots, degree, table, net, output_dim }) => {
                let nets = (0..slots.slots())
                    .map(|_| Network::zeros(&net.widths, net.activation))
                    .collect::<Result<Vec<_>>>()?;
                let rows = table_indices(*slots, *degree, *table)?.len();
                let coefficients = Mat::zeros(rows, *output_dim);
                Some(Decoder::Slotwise(SlotwiseDecoder::from_parts(*slots, *degree, *table, nets, coefficients)?))
            }
        };
        let mut ck = Checkpoint { encoder, decoder };
        let expected: usize = ck.params().iter().map(|p| p.len()).sum();
        if expected != header.param_count || rd.len() != 8 * expected {
            return Err(Error::Format(format!(
                "checkpoint holds {} bytes of parameters, expected {}",
                rd.len(),
                8 * expected
            )));
        }
        let mut params: Vec<&mut Mat> = ck.encoder.iter_mut().flat_map(|e| e.params_mut()).collect();
        if let Some(d) = &mut ck.decoder {
            params.extend(d.params_mut());
        }
        for p in params {
            for r in 0..p.nrows() {
                for c in 0..p.ncols() {
                    p[(r, c)] = rd.read_f64::<LittleEndian>()?;
                }
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the serialised bytes.
    pub fn checksum(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

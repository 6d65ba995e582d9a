use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{make_split, SlotBinGrid};
use crate::compfun::generator::{InteractionGenerator, SmoothMap};
use crate::compfun::io::generator_hash;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng;

const MAGIC: &[u8; 4] = b"SLDS";
const VERSION: u32 = 1;
/// Observation coordinates written to the CSV export.
pub const CSV_X_COLUMNS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Id,
    Ood,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Id => "id",
            SplitTag::Ood => "ood",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub generator_hash: String,
    pub grid: SlotBinGrid,
    pub seed: u64,
    pub n_id: usize,
    pub n_ood: usize,
    pub latent_dim: usize,
    pub observation_dim: usize,
}

/// Records `0..n_id` are in-domain, the rest out-of-domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    /// `N x d_z`.
    pub z: Mat,
    /// `N x d_x`.
    pub x: Mat,
    /// Bin index per slot, one row per record.
    pub bins: Vec<Vec<usize>>,
    pub tags: Vec<SplitTag>,
}

/// The records of one split tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    pub z: Mat,
    pub x: Mat,
    pub bins: Vec<Vec<usize>>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bin labels grouped per slot: `labels[k][i]` is record `i`'s bin in slot `k`.
    pub fn slot_labels(&self) -> Vec<Vec<usize>> {
        let k = self.bins.first().map_or(0, Vec::len);
        (0..k).map(|s| self.bins.iter().map(|b| b[s]).collect()).collect()
    }
}

fn select_rows(m: &Mat, rows: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn partition(&self, tag: SplitTag) -> Partition {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| self.tags[i] == tag).collect();
        Partition {
            z: select_rows(&self.z, &rows),
            x: select_rows(&self.x, &rows),
            bins: rows.iter().map(|&i| self.bins[i].clone()).collect(),
        }
    }

    /// Largest deviation between stored observations and the generator applied
    /// to the stored latents.
    pub fn max_recompute_error(&self, generator: &InteractionGenerator) -> Result<f64> {
        let x = generator.evaluate_batch(&self.z)?;
        Ok((&x - &self.x).abs().max())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(16 + header.len() + self.len() * 8 * (self.z.ncols() + self.x.ncols() + 1));
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION)?;
        out.write_u64::<LittleEndian>(header.len() as u64)?;
        out.extend_from_slice(&header);
        for i in 0..self.len() {
            for v in self.z.row(i).iter().chain(self.x.row(i).iter()) {
                out.write_f64::<LittleEndian>(*v)?;
            }
            for &b in &self.bins[i] {
                out.write_u32::<LittleEndian>(b as u32)?;
            }
            out.write_u8(match self.tags[i] {
                SplitTag::Id => 0,
                SplitTag::Ood => 1,
            })?;
        }
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let mut magic = [0u8; 4];
        bytes.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let version = bytes.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let len = bytes.read_u64::<LittleEndian>()? as usize;
        if len > bytes.len() {
            return Err(Error::Format("truncated dataset header".into()));
        }
        let header: DatasetHeader = serde_json::from_slice(&bytes[..len])?;
        header.grid.validate()?;
        bytes = &bytes[len..];
        let (dz, dx, k) = (header.latent_dim, header.observation_dim, header.grid.slots());
        let n = header.n_id + header.n_ood;
        let record = 8 * (dz + dx) + 4 * k + 1;
        if bytes.len() != n * record {
            return Err(Error::Format(format!("expected {} record bytes, found {}", n * record, bytes.len())));
        }
        let mut z = Mat::zeros(n, dz);
        let mut x = Mat::zeros(n, dx);
        let mut bins = Vec::with_capacity(n);
        let mut tags = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..dz {
                z[(i, j)] = bytes.read_f64::<LittleEndian>()?;
            }
            for j in 0..dx {
                x[(i, j)] = bytes.read_f64::<LittleEndian>()?;
            }
            bins.push((0..k).map(|_| bytes.read_u32::<LittleEndian>().map(|b| b as usize)).collect::<std::io::Result<_>>()?);
            tags.push(match bytes.read_u8()? {
                0 => SplitTag::Id,
                1 => SplitTag::Ood,
                t => return Err(Error::Format(format!("invalid split tag {t}"))),
            });
        }
        Ok(Dataset { header, z, x, bins, tags })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Dataset::from_bytes(&std::fs::read(path)?)
    }

    /// Human-readable export: index, split, bins, latents and the first
    /// [`CSV_X_COLUMNS`] observation coordinates.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let xc = self.x.ncols().min(CSV_X_COLUMNS);
        let mut head = vec!["index".to_string(), "split".to_string()];
        head.extend((0..self.header.grid.slots()).map(|k| format!("bin_{k}")));
        head.extend((0..self.z.ncols()).map(|j| format!("z_{j}")));
        head.extend((0..xc).map(|j| format!("x_{j}")));
        out.write_record(&head)?;
        for i in 0..self.len() {
            let mut row = vec![i.to_string(), self.tags[i].as_str().to_string()];
            row.extend(self.bins[i].iter().map(usize::to_string));
            row.extend(self.z.row(i).iter().map(f64::to_string));
            row.extend(self.x.row(i).iter().take(xc).map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Draws `n_id` in-domain and `n_ood` out-of-domain records. Each record picks
/// a tuple uniformly from its split and then each slot uniformly inside its
/// bin, using the stream `(seed, record index)`.
pub fn sample_dataset(
    generator: &InteractionGenerator,
    grid: &SlotBinGrid,
    n_id: usize,
    n_ood: usize,
    seed: u64,
) -> Result<Dataset> {
    let split = make_split(grid)?;
    if n_ood > 0 && split.ood.is_empty() {
        return Err(Error::Config("out-of-domain records requested but the mask covers every tuple".into()));
    }
    let slots = generator.slots();
    if slots.slots() != grid.slots() || slots.slot_dim() != grid.slot_dim() {
        return Err(Error::Config(format!(
            "grid has {} slots of dim {}, generator {} of dim {}",
            grid.slots(),
            grid.slot_dim(),
            slots.slots(),
            slots.slot_dim()
        )));
    }
    let records: Vec<(Vec<f64>, Vec<usize>, SplitTag)> = (0..n_id + n_ood)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let (pool, tag) = if i < n_id { (&split.id, SplitTag::Id) } else { (&split.ood, SplitTag::Ood) };
            let tuple = pool[r.random_range(0..pool.len())].clone();
            let mut z = Vec::with_capacity(slots.latent_dim());
            for (k, &b) in tuple.iter().enumerate() {
                let bin = &grid.bins()[k][b];
                for (lo, hi) in bin.lo.iter().zip(&bin.hi) {
                    z.push(if lo < hi { r.random_range(*lo..*hi) } else { *lo });
                }
            }
            (z, tuple, tag)
        })
        .collect();
    let n = records.len();
    let z = Mat::from_fn(n, slots.latent_dim(), |i, j| records[i].0[j]);
    let xs: Vec<Vec<f64>> = records.par_iter().map(|(z, _, _)| generator.eval(z)).collect();
    let x = Mat::from_fn(n, generator.observation_dim(), |i, j| xs[i][j]);
    if let Some(i) = (0..n).find(|&i| xs[i].iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite { context: "generator output while sampling", offset: records[i].0.clone() });
    }
    Ok(Dataset {
        header: DatasetHeader {
            generator_hash: generator_hash(generator)?,
            grid: grid.clone(),
            seed,
            n_id,
            n_ood,
            latent_dim: slots.latent_dim(),
            observation_dim: generator.observation_dim(),
        },
        z,
        x,
        bins: records.iter().map(|r| r.1.clone()).collect(),
        tags: records.iter().map(|r| r.2).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthlab::generators::{random_interaction_generator, InteractionSpec};
    use crate::synthlab::grid::MaskSpec;

    fn setup() -> (InteractionGenerator, SlotBinGrid) {
        let g = random_interaction_generator(&InteractionSpec::default(), 0).unwrap();
        let grid = SlotBinGrid::uniform(2, 1, 4, -1.0, 1.0, &MaskSpec::LShape { width: 1 }).unwrap();
        (g, grid)
    }

    #[test]
    fn records_respect_mask_and_bins() {
        let (g, grid) = setup();
        let d = sample_dataset(&g, &grid, 200, 100, 7).unwrap();
        for i in 0..d.len() {
            assert_eq!(grid.is_id(&d.bins[i]), d.tags[i] == SplitTag::Id);
            for k in 0..2 {
                assert!(grid.bins()[k][d.bins[i][k]].contains(&[d.z[(i, k)]]));
            }
        }
        assert!(d.max_recompute_error(&g).unwrap() <= 1e-12);
    }

    #[test]
    fn binary_roundtrip_and_determinism() {
        let (g, grid) = setup();
        let a = sample_dataset(&g, &grid, 30, 20, 1).unwrap();
        let b = sample_dataset(&g, &grid, 30, 20, 1).unwrap();
        let bytes = a.to_bytes().unwrap();
        assert_eq!(bytes, b.to_bytes().unwrap());
        assert_eq!(Dataset::from_bytes(&bytes).unwrap(), a);
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn ood_request_on_full_mask_is_config_error() {
        let (g, _) = setup();
        let grid = SlotBinGrid::uniform(2, 1, 4, -1.0, 1.0, &MaskSpec::Full).unwrap();
        assert!(matches!(sample_dataset(&g, &grid, 5, 5, 0), Err(Error::Config(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let (g, grid) = setup();
        let d = sample_dataset(&g, &grid, 3, 2, 0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("index,split,bin_0,bin_1,z_0,z_1,x_0"));
    }
}

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of enumerated bin tuples.
pub const MAX_TUPLES: usize = 1 << 20;

/// Axis-aligned box in one slot's value space; `lo == hi` gives an anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bin {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.dim() && v.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a <= x && x <= b)
    }
}

/// Shape of the in-domain set of bin tuples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MaskSpec {
    /// Every tuple is in-domain.
    Full,
    /// Tuples with at least one slot among its first `width` bins.
    LShape { width: usize },
    /// Tuples whose bin indices sum to an even number.
    Checkerboard,
    /// Tuples with all bin indices equal.
    Diagonal,
    Explicit { tuples: Vec<Vec<usize>> },
}

/// Per-slot value bins and the in-domain mask over bin tuples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotBinGrid {
    bins: Vec<Vec<Bin>>,
    id: BTreeSet<Vec<usize>>,
}

/// Exact in-domain and out-of-domain tuple sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub id: Vec<Vec<usize>>,
    pub ood: Vec<Vec<usize>>,
}

fn tuple_count(bins: &[Vec<Bin>]) -> Result<usize> {
    bins.iter()
        .try_fold(1usize, |acc, b| acc.checked_mul(b.len()))
        .filter(|&n| n <= MAX_TUPLES)
        .ok_or_else(|| Error::Config(format!("grid has more than {MAX_TUPLES} bin tuples")))
}

/// Every bin tuple in lexicographic order.
pub fn all_tuples(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &s in sizes {
        out = out.into_iter().flat_map(|t| (0..s).map(move |b| [t.clone(), vec![b]].concat())).collect();
    }
    out
}

impl SlotBinGrid {
    pub fn new(bins: Vec<Vec<Bin>>, id: impl IntoIterator<Item = Vec<usize>>) -> Result<Self> {
        let grid = SlotBinGrid { bins, id: id.into_iter().collect() };
        grid.validate()?;
        Ok(grid)
    }

    /// `bins_per_slot` equal-width bins of `[lo, hi]` in every coordinate of
    /// every slot; for `m > 1` a bin is the same interval in each coordinate.
    pub fn uniform(slots: usize, slot_dim: usize, bins_per_slot: usize, lo: f64, hi: f64, mask: &MaskSpec) -> Result<Self> {
        if slots == 0 || slot_dim == 0 || bins_per_slot == 0 || !(lo < hi) {
            return Err(Error::Config(format!(
                "invalid grid: {slots} slots, slot dim {slot_dim}, {bins_per_slot} bins on [{lo}, {hi}]"
            )));
        }
        let w = (hi - lo) / bins_per_slot as f64;
        let slot_bins: Vec<Bin> = (0..bins_per_slot)
            .map(|b| Bin { lo: vec![lo + w * b as f64; slot_dim], hi: vec![lo + w * (b + 1) as f64; slot_dim] })
            .collect();
        let bins = vec![slot_bins; slots];
        let id = mask_tuples(&vec![bins_per_slot; slots], mask)?;
        SlotBinGrid::new(bins, id)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.bins.len();
        if k == 0 || self.bins.iter().any(Vec::is_empty) {
            return Err(Error::Config("every slot needs at least one bin".into()));
        }
        let m = self.bins[0][0].dim();
        for b in self.bins.iter().flatten() {
            if b.dim() != m || b.hi.len() != m || b.lo.iter().zip(&b.hi).any(|(a, c)| !(a <= c) || !a.is_finite() || !c.is_finite()) {
                return Err(Error::Config("bins must be finite boxes of equal dimension".into()));
            }
        }
        tuple_count(&self.bins)?;
        if self.id.is_empty() {
            return Err(Error::Config("in-domain mask is empty".into()));
        }
        for t in &self.id {
            if t.len() != k || t.iter().zip(&self.bins).any(|(&b, bins)| b >= bins.len()) {
                return Err(Error::Config(format!("mask tuple {t:?} does not index the grid")));
            }
        }
        for (slot, bins) in self.bins.iter().enumerate() {
            for bin in 0..bins.len() {
                if !self.id.iter().any(|t| t[slot] == bin) {
                    return Err(Error::SupportViolation { slot, bin });
                }
            }
        }
        Ok(())
    }

    pub fn slots(&self) -> usize {
        self.bins.len()
    }

    pub fn slot_dim(&self) -> usize {
        self.bins[0][0].dim()
    }

    pub fn bins(&self) -> &[Vec<Bin>] {
        &self.bins
    }

    pub fn bin_counts(&self) -> Vec<usize> {
        self.bins.iter().map(Vec::len).collect()
    }

    pub fn id_tuples(&self) -> &BTreeSet<Vec<usize>> {
        &self.id
    }

    pub fn is_id(&self, tuple: &[usize]) -> bool {
        self.id.contains(tuple)
    }
}

pub fn mask_tuples(sizes: &[usize], mask: &MaskSpec) -> Result<Vec<Vec<usize>>> {
    let all = all_tuples(sizes);
    Ok(match mask {
        MaskSpec::Full => all,
        MaskSpec::LShape { width } => {
            if *width == 0 {
                return Err(Error::Config("L-shape width must be positive".into()));
            }
            all.into_iter().filter(|t| t.iter().any(|b| b < width)).collect()
        }
        MaskSpec::Checkerboard => all.into_iter().filter(|t| t.iter().sum::<usize>() % 2 == 0).collect(),
        MaskSpec::Diagonal => all.into_iter().filter(|t| t.iter().all(|b| *b == t[0])).collect(),
        MaskSpec::Explicit { tuples } => tuples.clone(),
    })
}

/// Out-of-domain tuples are every tuple of the product of bins that is not in
/// the mask.
pub fn make_split(grid: &SlotBinGrid) -> Result<Split> {
    grid.validate()?;
    let (id, ood) = all_tuples(&grid.bin_counts()).into_iter().partition(|t| grid.is_id(t));
    Ok(Split { id, ood })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(k: usize, b: usize, id: Vec<Vec<usize>>) -> Result<SlotBinGrid> {
        let slot_bins: Vec<Bin> = (0..b).map(|i| Bin { lo: vec![i as f64], hi: vec![i as f64 + 1.0] }).collect();
        SlotBinGrid::new(vec![slot_bins; k], id)
    }

    #[test]
    fn two_by_two_diagonal() {
        let s = make_split(&grid(2, 2, vec![vec![0, 0], vec![1, 1]]).unwrap()).unwrap();
        assert_eq!(s.ood, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn full_mask_has_no_ood() {
        let g = SlotBinGrid::uniform(3, 1, 3, -1.0, 1.0, &MaskSpec::Full).unwrap();
        assert!(make_split(&g).unwrap().ood.is_empty());
    }

    #[test]
    fn three_slots_four_id_tuples() {
        let id = vec![vec![0, 0, 0], vec![1, 1, 1], vec![0, 1, 0], vec![1, 0, 1]];
        let s = make_split(&grid(3, 2, id).unwrap()).unwrap();
        assert_eq!(s.ood.len(), 4);
    }

    #[test]
    fn uncovered_bin_is_a_support_violation() {
        let e = grid(2, 2, vec![vec![0, 0], vec![0, 1]]).unwrap_err();
        assert!(matches!(e, Error::SupportViolation { slot: 0, bin: 1 }));
    }

    #[test]
    fn l_shape_counts() {
        let g = SlotBinGrid::uniform(2, 1, 4, -1.0, 1.0, &MaskSpec::LShape { width: 1 }).unwrap();
        let s = make_split(&g).unwrap();
        assert_eq!((s.id.len(), s.ood.len()), (7, 9));
        let g = SlotBinGrid::uniform(2, 1, 4, -1.0, 1.0, &MaskSpec::LShape { width: 2 }).unwrap();
        assert_eq!(make_split(&g).unwrap().ood.len(), 4);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(grid(2, 2, vec![]), Err(Error::Config(_))));
    }
}

use proptest::prelude::*;
use slotlab::compfun::{cross_slot_residual, FdSteps, Scheme};
use slotlab::synthlab::{
    all_tuples, make_pixel_partition_generator, make_split, random_interaction_generator, sample_dataset, Dataset,
    InteractionSpec, MaskSpec, PixelPartitionSpec, SlotBinGrid, SplitTag,
};

fn mask_strategy() -> impl Strategy<Value = MaskSpec> {
    prop_oneof![
        (1usize..3).prop_map(|width| MaskSpec::LShape { width }),
        Just(MaskSpec::Checkerboard),
        Just(MaskSpec::Diagonal),
        Just(MaskSpec::Full),
    ]
}

proptest! {
    #[test]
    fn split_partitions_every_tuple(slots in 2usize..5, bins in 1usize..5, mask in mask_strategy()) {
        let grid = SlotBinGrid::uniform(slots, 1, bins, -1.0, 1.0, &mask).unwrap();
        let split = make_split(&grid).unwrap();
        let mut joined: Vec<Vec<usize>> = split.id.iter().chain(&split.ood).cloned().collect();
        joined.sort();
        let before = joined.len();
        joined.dedup();
        prop_assert_eq!(before, joined.len());
        prop_assert_eq!(joined, all_tuples(&vec![bins; slots]));
        prop_assert!(split.id.iter().all(|t| grid.is_id(t)));
        prop_assert!(split.ood.iter().all(|t| !grid.is_id(t)));
    }
}

#[test]
fn unseen_slot_values_violate_support() {
    // One slot under an L-shape never sees bins past the width in-domain.
    let e = SlotBinGrid::uniform(1, 1, 3, -1.0, 1.0, &MaskSpec::LShape { width: 1 }).unwrap_err();
    assert!(matches!(e, slotlab::Error::SupportViolation { slot: 0, bin: 1 }), "{e:?}");
}

fn interaction_data(seed: u64) -> (slotlab::compfun::InteractionGenerator, SlotBinGrid, Dataset) {
    let g = random_interaction_generator(&InteractionSpec::default(), seed).unwrap();
    let grid = SlotBinGrid::uniform(2, 1, 4, -1.0, 1.0, &MaskSpec::LShape { width: 1 }).unwrap();
    let d = sample_dataset(&g, &grid, 120, 60, seed).unwrap();
    (g, grid, d)
}

#[test]
fn records_fall_in_their_bins_and_tags() {
    let (g, grid, d) = interaction_data(1);
    assert_eq!(d.len(), 180);
    assert!(d.tags[..120].iter().all(|t| *t == SplitTag::Id));
    assert!(d.tags[120..].iter().all(|t| *t == SplitTag::Ood));
    for (i, bins) in d.bins.iter().enumerate() {
        assert_eq!(grid.is_id(bins), d.tags[i] == SplitTag::Id);
        for (k, &b) in bins.iter().enumerate() {
            assert!(grid.bins()[k][b].contains(&[d.z[(i, k)]]));
        }
    }
    assert!(d.max_recompute_error(&g).unwrap() < 1e-12);
}

#[test]
fn dataset_bytes_roundtrip() {
    let (_, _, d) = interaction_data(2);
    let bytes = d.to_bytes().unwrap();
    assert_eq!(Dataset::from_bytes(&bytes).unwrap(), d);
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    assert!(Dataset::from_bytes(&bad).is_err());
    assert!(Dataset::from_bytes(&bytes[..bytes.len() / 2]).is_err());
}

#[test]
fn sampling_is_seeded() {
    let (_, _, a) = interaction_data(4);
    let (_, _, b) = interaction_data(4);
    let (_, _, c) = interaction_data(5);
    assert_eq!(a, b);
    assert_ne!(a.z, c.z);
}

#[test]
fn pixel_partition_has_disjoint_slot_supports() {
    let spec = PixelPartitionSpec::default();
    let g = make_pixel_partition_generator(&spec, 0).unwrap();
    assert_eq!(g.degree(), 0);
    assert_eq!(g.observation_dim(), 16);
    let r = cross_slot_residual(&g, &g.slots(), &[0.2, -0.3], 0, Scheme::Analytic, &FdSteps::default()).unwrap();
    assert!(r.value() < 1e-12, "{r:?}");
    // Moving one slot leaves the other slot's coordinates untouched.
    let a = g.evaluate(&[0.2, -0.3]).unwrap();
    let b = g.evaluate(&[0.5, -0.3]).unwrap();
    assert!(a[8..] == b[8..] && a[..8] != b[..8]);
}

#[test]
fn full_mask_cannot_supply_ood_records() {
    let g = random_interaction_generator(&InteractionSpec::default(), 0).unwrap();
    let grid = SlotBinGrid::uniform(2, 1, 4, -1.0, 1.0, &MaskSpec::Full).unwrap();
    assert!(sample_dataset(&g, &grid, 10, 5, 0).is_err());
    assert_eq!(sample_dataset(&g, &grid, 10, 0, 0).unwrap().len(), 10);
}

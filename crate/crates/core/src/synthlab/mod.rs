//! Ground-truth generators, in-domain/out-of-domain bin grids and datasets.

pub mod dataset;
pub mod generators;
pub mod grid;

pub use dataset::{sample_dataset, Dataset, DatasetHeader, Partition, SplitTag};
pub use generators::{
    make_pixel_partition_generator, random_interaction_generator, random_slot_net, InteractionSpec, PixelPartitionSpec,
    SlotNetSpec,
};
pub use grid::{all_tuples, make_split, mask_tuples, Bin, MaskSpec, SlotBinGrid, Split};

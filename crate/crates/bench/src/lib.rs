//! Inputs shared by the benchmarks.

use occlubench::dataio::{gen_synthetic, SyntheticSpec};
use occlubench::{LabeledDataset, Split};

/// Small synthetic split used by the benchmarks.
pub fn bench_dataset(per_class: usize, size: usize) -> LabeledDataset {
    let spec = SyntheticSpec { num_classes: 3, per_class, size, seed: 7, ..SyntheticSpec::default() };
    gen_synthetic(&spec, Split::Test).expect("synthetic spec is valid")
}

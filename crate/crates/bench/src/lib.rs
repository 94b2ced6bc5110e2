//! Shared fixtures for the benchmarks.

use gal_core::{build_mixed_set, MapKind, MixedSetConfig, ProblemInstance};

/// One instance of every map kind at `size`, fixed seed.
pub fn fixtures(size: usize) -> Vec<(&'static str, ProblemInstance)> {
    let set = build_mixed_set(&MixedSetConfig::new(MapKind::ALL.to_vec(), size, 1, 17))
        .expect("fixture generation");
    set.entries
        .into_iter()
        .map(|e| (e.kind.name(), e.instance))
        .collect()
}

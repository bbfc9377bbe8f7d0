use rand::seq::SliceRandom;

use crate::dataio::Manifest;
use crate::rng::rng_from;
use crate::{Error, Result};

/// Number of groups that go to the first subset: the integer closest to
/// `ratio · groups`, kept within `[1, groups - 1]` so neither side is empty.
pub fn train_group_count(groups: usize, ratio: f64) -> usize {
    ((ratio * groups as f64).round() as usize).clamp(1, groups - 1)
}

/// Splits by `config_id`: every configuration lands entirely in train or in
/// test. Sample order within each subset follows the input manifest.
pub fn split_by_config(manifest: &Manifest, ratio: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let mut groups: Vec<&str> = Vec::new();
    for s in &manifest.samples {
        if !groups.contains(&s.config_id.as_str()) {
            groups.push(&s.config_id);
        }
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientGroups(groups.len()));
    }
    groups.shuffle(&mut rng_from(seed));
    let n_train = train_group_count(groups.len(), ratio);
    let train_groups: std::collections::HashSet<&str> = groups[..n_train].iter().copied().collect();

    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, s) in manifest.samples.iter().enumerate() {
        if train_groups.contains(s.config_id.as_str()) {
            train.push(i);
        } else {
            test.push(i);
        }
    }
    Ok((manifest.select(&train), manifest.select(&test)))
}

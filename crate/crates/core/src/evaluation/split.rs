use std::collections::{BTreeSet, HashSet};

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Interaction};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, SPLIT};

/// Warm/cold partition of a dataset's interactions.
///
/// Every interaction with a cold item goes to `test`; the rest form `train`.
/// Users that only appear in `test` are cold users.
#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartSplit {
    pub train: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub cold_items: BTreeSet<u32>,
    pub cold_users: BTreeSet<u32>,
    pub seed: u64,
    pub ratio: f64,
}

impl ColdStartSplit {
    /// Digest of the partition, equal for equal splits.
    pub fn content_hash(&self) -> u64 {
        let mut h = Sha256::new();
        let mut put = |xs: &mut dyn Iterator<Item = u32>| {
            for x in xs {
                h.update(x.to_le_bytes());
            }
            h.update(u32::MAX.to_le_bytes());
        };
        put(&mut self.cold_items.iter().copied());
        put(&mut self.cold_users.iter().copied());
        put(&mut self.train.iter().flat_map(|i| [i.user, i.item]));
        put(&mut self.test.iter().flat_map(|i| [i.user, i.item]));
        u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
    }

    /// Items with at least one training interaction.
    pub fn warm_items(&self) -> BTreeSet<u32> {
        self.train.iter().map(|i| i.item).collect()
    }

    /// Checks the partition invariants against `dataset`.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        let bad_id = |i: &Interaction| i.user as usize >= dataset.n_users() || i.item as usize >= dataset.n_items();
        if let Some(i) = self.train.iter().chain(&self.test).find(|i| bad_id(i)) {
            return Err(Error::Integrity(format!(
                "split references unknown entity (user {}, item {})",
                i.user, i.item
            )));
        }
        if self.cold_items.iter().any(|&i| i as usize >= dataset.n_items())
            || self.cold_users.iter().any(|&u| u as usize >= dataset.n_users())
        {
            return Err(Error::Integrity("split marks an unknown entity as cold".into()));
        }
        if self.train.iter().any(|i| self.cold_items.contains(&i.item) || self.cold_users.contains(&i.user)) {
            return Err(Error::Integrity("training interaction touches a cold entity".into()));
        }
        if self.test.iter().any(|i| !self.cold_items.contains(&i.item) && !self.cold_users.contains(&i.user)) {
            return Err(Error::Integrity("test interaction has no cold entity".into()));
        }
        Ok(())
    }
}

/// Holds out `ceil(ratio * n)` of the `n` interacted items, chosen uniformly
/// with a seeded generator, together with all of their interactions.
pub fn make_cold_split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<ColdStartSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("cold ratio {ratio} must lie in (0, 1)")));
    }
    let interacted: BTreeSet<u32> = dataset.interactions.iter().map(|i| i.item).collect();
    if interacted.len() < 2 {
        return Err(Error::DegenerateSplit("need at least two interacted items".into()));
    }
    let n_cold = (ratio * interacted.len() as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT, 0));
    let cold_items: BTreeSet<u32> = interacted.iter().copied().choose_multiple(&mut rng, n_cold).into_iter().collect();

    let (test, train): (Vec<Interaction>, Vec<Interaction>) =
        dataset.interactions.iter().partition(|i| cold_items.contains(&i.item));
    if train.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "holding out {n_cold} of {} items leaves no training interactions",
            interacted.len()
        )));
    }
    let warm_users: HashSet<u32> = train.iter().map(|i| i.user).collect();
    let cold_users = test.iter().map(|i| i.user).filter(|u| !warm_users.contains(u)).collect();
    Ok(ColdStartSplit { train, test, cold_items, cold_users, seed, ratio })
}

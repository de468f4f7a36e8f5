use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pipeline::QuestionTask;

/// Draws `fraction` of each database's questions (at least one per database),
/// deterministically for a seed. Original order is preserved.
pub fn stratified_sample(tasks: &[QuestionTask], fraction: f64, seed: u64) -> Vec<QuestionTask> {
    let fraction = fraction.clamp(0.0, 1.0);
    let mut by_db: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in tasks.iter().enumerate() {
        by_db.entry(&t.db_id).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (_, mut idx) in by_db {
        let n = ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len());
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..n]);
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| tasks[i].clone()).collect()
}

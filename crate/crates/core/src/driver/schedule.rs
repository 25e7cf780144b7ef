//! Work queue for multi-unit runs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(ic, jc)` origins of all `mc x nc` blocks of an `m x n` output, column
/// block major. A seed shuffles the order.
pub fn task_queue(m: usize, n: usize, mc: usize, nc: usize, seed: Option<u64>) -> Vec<(usize, usize)> {
    let mut tasks: Vec<(usize, usize)> =
        (0..n).step_by(nc).flat_map(|jc| (0..m).step_by(mc).map(move |ic| (ic, jc))).collect();
    if let Some(s) = seed {
        tasks.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
    }
    tasks
}

//! Seeded block streams.
//!
//! Samples are produced in fixed-size blocks. Block `b` of a run with seed `s`
//! draws from `ChaCha20Rng::seed_from_u64(s)` switched to stream `b`, so the
//! output depends only on `(s, b)` and never on how blocks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

/// Samples per block.
pub const BLOCK_SIZE: usize = 4096;

pub fn block_rng(seed: u64, block: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Fills `m` rows of width `width` block by block, in parallel, with rows laid
/// out in sample order. `fill` receives the block rng and the block's rows.
pub fn fill_blocks<F>(seed: u64, m: usize, width: usize, fill: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha20Rng, &mut [f64]) + Sync,
{
    let mut out = vec![0.0; m * width];
    if width == 0 {
        return out;
    }
    out.par_chunks_mut(BLOCK_SIZE * width)
        .enumerate()
        .for_each(|(b, chunk)| {
            let mut rng = block_rng(seed, b as u64);
            fill(&mut rng, chunk);
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_differ_and_repeat() {
        let a: u64 = block_rng(7, 0).random();
        let b: u64 = block_rng(7, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, block_rng(7, 0).random::<u64>());
    }

    #[test]
    fn fill_is_thread_count_independent() {
        let f = |rng: &mut ChaCha20Rng, rows: &mut [f64]| {
            for x in rows {
                *x = rng.random::<f64>();
            }
        };
        let m = 3 * BLOCK_SIZE + 17;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| fill_blocks(3, m, 2, f));
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| fill_blocks(3, m, 2, f));
        assert_eq!(one, many);
    }
}

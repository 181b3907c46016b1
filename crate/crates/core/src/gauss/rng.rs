//! Seeded random streams and the deterministic parallel block layout.
//!
//! Every random quantity in the crate is drawn from a [`RngStream`]: a
//! `(seed, stream_id)` pair hashed into a ChaCha8 key. Parallel work is split
//! into fixed-size blocks, block `b` draws from `stream.substream(b)`, and the
//! per-block results are combined in block order, so outputs do not depend on
//! the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// A child stream; distinct tags give independent streams.
    pub fn substream(&self, tag: u64) -> RngStream {
        let id = mix64(self.stream_id.wrapping_mul(GOLDEN) ^ mix64(tag.wrapping_add(GOLDEN)));
        RngStream {
            seed: self.seed,
            stream_id: id,
        }
    }

    /// Generator positioned at the start of this stream.
    pub fn rng(&self) -> StreamRng {
        let mut state = self.seed ^ mix64(self.stream_id ^ GOLDEN);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(GOLDEN);
            chunk.copy_from_slice(&mix64(state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Fill `out` with iid standard normals.
pub fn fill_normals<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Run `total` units of work in blocks of `block` units.
///
/// `f(stream, start, len)` handles units `start..start + len` and must draw
/// only from `stream`. Results come back in block order.
pub fn par_blocks<T, F>(stream: RngStream, total: usize, block: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(RngStream, usize, usize) -> T + Sync + Send,
{
    let block = block.max(1);
    let nblocks = total.div_ceil(block);
    (0..nblocks)
        .into_par_iter()
        .map(|b| {
            let start = b * block;
            let len = block.min(total - start);
            f(stream.substream(b as u64), start, len)
        })
        .collect()
}

/// Run `f` on a dedicated pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn same_stream_same_sequence() {
        let s = RngStream::new(7, 3);
        let a: Vec<u64> = (0..8).map({
            let mut r = s.rng();
            move |_| r.next_u64()
        }).collect();
        let mut r = s.rng();
        let b: Vec<u64> = (0..8).map(|_| r.next_u64()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 3).rng();
        let mut b = RngStream::new(7, 4).rng();
        let mut c = RngStream::new(8, 3).rng();
        let mut d = RngStream::new(7, 3).substream(0).rng();
        let x = a.next_u64();
        assert_ne!(x, b.next_u64());
        assert_ne!(x, c.next_u64());
        assert_ne!(x, d.next_u64());
    }

    #[test]
    fn blocks_independent_of_worker_count() {
        let run = || {
            par_blocks(RngStream::new(1, 2), 1000, 64, |s, start, len| {
                let mut r = s.rng();
                (start, (0..len).map(|_| r.next_u64() % 1000).sum::<u64>())
            })
        };
        let one = with_workers(1, run);
        let four = with_workers(4, run);
        assert_eq!(one, four);
        assert_eq!(one.len(), 16);
    }

    #[test]
    fn normals_have_unit_variance() {
        let mut r = RngStream::new(11, 0).rng();
        let mut v = vec![0.0; 200_000];
        fill_normals(&mut r, &mut v);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        assert!(m.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.01);
    }
}

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream addressed by `(master_seed, stream_id, counter)`.
///
/// The generator is ChaCha8 keyed by the master seed, with the stream id selecting
/// the ChaCha stream and the counter the word position. Distinct stream ids give
/// disjoint keystreams; identical triples replay identical words on every platform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::at(master_seed, stream_id, 0)
    }

    /// Stream positioned at `counter` 32-bit words from its start.
    pub fn at(master_seed: u64, stream_id: u64, counter: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        rng.set_word_pos(counter as u128);
        Self { master_seed, stream_id, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn counter(&self) -> u64 {
        self.rng.get_word_pos() as u64
    }

    /// Child stream for task `index`. Depends only on this stream's identity, not
    /// on how many words have been consumed, so children can be derived in any order.
    pub fn substream(&self, index: u64) -> Self {
        let id = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)));
        Self::new(self.master_seed, id)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform<T: Real>(&mut self) -> T {
        T::lit(self.rng.random::<f64>())
    }

    pub fn uniform_index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn normal<T: Real>(&mut self) -> T {
        T::lit(self.rng.sample::<f64, _>(StandardNormal))
    }

    pub fn normals<T: Real>(&mut self, n: usize) -> Vec<T> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// Uniform direction on the unit sphere of `R^dim`.
    pub fn unit_vector<T: Real>(&mut self, dim: usize) -> Vec<T> {
        loop {
            let mut v: Vec<T> = self.normals(dim);
            let nrm = crate::scalar::norm(&v);
            if nrm > T::zero() {
                v.iter_mut().for_each(|x| *x /= nrm);
                return v;
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replays_identically() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let xa: Vec<u64> = (0..100).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..100).map(|_| b.next_u64()).collect();
        assert_eq!(xa, xb);
    }

    #[test]
    fn counter_addresses_position() {
        let mut a = RngStream::new(1, 9);
        for _ in 0..10 {
            a.next_u32();
        }
        assert_eq!(a.counter(), 10);
        let mut b = RngStream::at(1, 9, 10);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(1, 0);
        let mut b = RngStream::new(1, 1);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn substream_ignores_consumption() {
        let mut a = RngStream::new(5, 2);
        let before = a.substream(4);
        a.next_u64();
        assert_eq!(before, a.substream(4));
        assert_ne!(a.substream(4).stream_id(), a.substream(5).stream_id());
    }

    #[test]
    fn independent_streams_are_uncorrelated() {
        let n = 200_000;
        let mut a = RngStream::new(42, 0);
        let mut b = RngStream::new(42, 1);
        let mut sxy = 0.0;
        for _ in 0..n {
            let x: f64 = a.normal();
            let y: f64 = b.normal();
            sxy += x * y;
        }
        // correlation estimate has stderr 1/sqrt(n)
        assert!((sxy / n as f64).abs() < 5.0 / (n as f64).sqrt());
    }

    #[test]
    fn unit_vectors_have_unit_norm() {
        let mut r = RngStream::new(0, 0);
        for d in 1..6 {
            let v: Vec<f64> = r.unit_vector(d);
            assert!((crate::scalar::norm(&v) - 1.0).abs() < 1e-14);
        }
    }
}

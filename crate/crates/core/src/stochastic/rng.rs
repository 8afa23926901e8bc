use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Splittable seed. Children are derived by hashing, so the stream a path or
/// epoch sees depends only on its index, not on evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    key: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            key: splitmix64(seed),
        }
    }

    pub fn child(&self, index: u64) -> Self {
        RandomSource {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d))),
        }
    }

    /// Child keyed by a label, for separating roles (init, epochs, noise).
    pub fn named(&self, label: &str) -> Self {
        // FNV-1a
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in label.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        self.child(h)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }
}

/// Source of standard normal draws. Implemented for every [`Rng`]; tests can
/// substitute [`ZeroNoise`] to switch the diffusion off.
pub trait GaussianNoise {
    fn standard_normal(&mut self) -> f64;

    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for z in out {
            *z = self.standard_normal();
        }
    }
}

impl<R: Rng> GaussianNoise for R {
    fn standard_normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }
}

/// Always returns zero.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroNoise;

impl GaussianNoise for ZeroNoise {
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<f64> = {
            let mut r = RandomSource::new(7).child(3).rng();
            (0..5).map(|_| r.standard_normal()).collect()
        };
        let b: Vec<f64> = {
            let mut r = RandomSource::new(7).child(3).rng();
            (0..5).map(|_| r.standard_normal()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn children_differ() {
        let s = RandomSource::new(1);
        assert_ne!(s.child(0), s.child(1));
        assert_ne!(s.named("init"), s.named("epoch"));
        assert_ne!(s.child(0).child(1), s.child(1).child(0));
    }
}

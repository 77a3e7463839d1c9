//! Counter-based deterministic randomness.
//!
//! Every random draw in the simulator is produced by a keyed mixing function
//! indexed by `(purpose, trial, party, round, counter)`. There is no shared
//! mutable generator state, so independent trials can run on independent
//! workers and still reproduce bit-identically from the same root seed.

/// Domain-separation tags for the counter PRF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Setup-bundle sampling.
    Setup,
    /// Per-round party coins.
    Coin,
    /// Adversary-internal randomness (splits, abort sets, estimation tapes).
    Adversary,
    /// Trial-level auxiliary draws (input shuffles, mutation picks in tests).
    Aux,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Setup => 0x5e70,
            Purpose::Coin => 0xc011,
            Purpose::Adversary => 0xadfe,
            Purpose::Aux => 0xa0a0,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed counter PRF. Cheap, portable, and stable across platforms; not
/// cryptographic, which is fine for a simulation harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeededPrf {
    key: u64,
}

impl SeededPrf {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed ^ 0x42a5_a511_ba5e_ba11),
        }
    }

    /// The PRF value at a fully qualified index.
    pub fn value(&self, purpose: Purpose, trial: u64, a: u64, b: u64, counter: u64) -> u64 {
        let mut h = self.key ^ purpose.tag().wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for x in [trial, a, b, counter] {
            h = splitmix64(h ^ x.wrapping_mul(0xff51_afd7_ed55_8ccd));
        }
        h
    }

    /// A sequential stream rooted at `(purpose, trial, a, b)`.
    pub fn stream(&self, purpose: Purpose, trial: u64, a: u64, b: u64) -> CounterRng {
        CounterRng {
            prf: *self,
            purpose,
            trial,
            a,
            b,
            counter: 0,
        }
    }
}

/// Sequential view over one PRF index prefix.
#[derive(Debug, Clone)]
pub struct CounterRng {
    prf: SeededPrf,
    purpose: Purpose,
    trial: u64,
    a: u64,
    b: u64,
    counter: u64,
}

impl CounterRng {
    pub fn next_u64(&mut self) -> u64 {
        let v = self
            .prf
            .value(self.purpose, self.trial, self.a, self.b, self.counter);
        self.counter += 1;
        v
    }

    /// Uniform value in `[0, bound)`. `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Rejection-sample the top range to avoid modulo bias.
        let zone = u64::MAX - u64::MAX % bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Uniform f64 in [0, 1).
    pub fn f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Fair coin.
    pub fn bit(&mut self) -> u8 {
        (self.next_u64() & 1) as u8
    }

    /// Bernoulli(p).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.f64() < p
    }

    /// Fork an independent child stream; the child's index space does not
    /// collide with this stream's remaining counters.
    pub fn fork(&mut self, label: u64) -> CounterRng {
        let mix = self.next_u64();
        CounterRng {
            prf: SeededPrf::new(mix ^ splitmix64(label)),
            purpose: self.purpose,
            trial: self.trial,
            a: self.a,
            b: self.b ^ splitmix64(label.wrapping_add(1)),
            counter: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_index_same_value() {
        let p1 = SeededPrf::new(7);
        let p2 = SeededPrf::new(7);
        assert_eq!(
            p1.value(Purpose::Coin, 3, 4, 5, 6),
            p2.value(Purpose::Coin, 3, 4, 5, 6)
        );
    }

    #[test]
    fn different_purposes_decorrelate() {
        let p = SeededPrf::new(7);
        assert_ne!(
            p.value(Purpose::Coin, 3, 4, 5, 6),
            p.value(Purpose::Setup, 3, 4, 5, 6)
        );
    }

    #[test]
    fn below_is_in_range() {
        let p = SeededPrf::new(11);
        let mut rng = p.stream(Purpose::Aux, 0, 0, 0);
        for bound in [1u64, 2, 3, 10, 1000] {
            for _ in 0..100 {
                assert!(rng.below(bound) < bound);
            }
        }
    }

    #[test]
    fn f64_in_unit_interval() {
        let p = SeededPrf::new(13);
        let mut rng = p.stream(Purpose::Aux, 0, 0, 0);
        for _ in 0..1000 {
            let x = rng.f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn bits_are_roughly_fair() {
        let p = SeededPrf::new(17);
        let mut rng = p.stream(Purpose::Aux, 0, 0, 0);
        let ones: u32 = (0..10_000).map(|_| rng.bit() as u32).sum();
        assert!((4_500..5_500).contains(&ones), "ones = {ones}");
    }
}

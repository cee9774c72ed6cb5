use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named, independent random streams derived from one run seed.
///
/// Each purpose (initialization, dropout, shuffling, ...) gets its own ChaCha
/// stream keyed by a hash of its name, so drawing more numbers for one purpose
/// never shifts the sequence seen by another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, name: &str) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(fnv1a(name.as_bytes()));
        rng
    }

    /// Stream for the `index`-th use of a purpose, e.g. the shuffle of epoch 7.
    pub fn indexed(&self, name: &str, index: u64) -> ChaCha8Rng {
        self.stream(&format!("{name}#{index}"))
    }

    /// Derived integer seed for APIs that take a plain seed.
    pub fn derive_seed(&self, name: &str, index: u64) -> u64 {
        let mut h = fnv1a(format!("{name}#{index}").as_bytes()) ^ self.seed.rotate_left(17);
        // splitmix64 finalizer
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

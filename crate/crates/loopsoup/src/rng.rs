//! Deterministic stream derivation.
//!
//! Every random draw in the crate flows from one master seed through a named
//! derivation path (`root(seed).child("soup").index(replica).child("site").index(x)`…).
//! Streams with different paths are statistically independent for simulation
//! purposes, and any sub-stream can be re-created in isolation — which is what
//! makes replica-level parallelism and layered-soup mark sharing deterministic
//! regardless of worker count or scheduling order.
//!
//! The path hash is a splitmix64 sponge over the path components, expanded into
//! a 256-bit ChaCha seed. Not cryptographic; collision-resistant enough for
//! the handful of short labels used here.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A point in the seed-derivation tree. Cheap to clone; deriving a child never
/// mutates the parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    state: [u64; 4],
}

impl StreamKey {
    pub fn root(master_seed: u64) -> Self {
        let mut k = StreamKey {
            state: [
                0x6c6f_6f70_736f_7570, // "loopsoup"
                0x0123_4567_89ab_cdef,
                0xfedc_ba98_7654_3210,
                0x0f1e_2d3c_4b5a_6978,
            ],
        };
        k.absorb(master_seed);
        k
    }

    fn absorb(&mut self, word: u64) {
        for (i, s) in self.state.iter_mut().enumerate() {
            *s = splitmix64(*s ^ word.rotate_left(16 * i as u32));
        }
        // cross-mix so later words see earlier ones through every lane
        let mixed = splitmix64(self.state[0] ^ self.state[1] ^ self.state[2] ^ self.state[3]);
        self.state[0] ^= mixed;
    }

    /// Derive by label, e.g. `"bridge"`, `"marks"`.
    pub fn child(&self, label: &str) -> Self {
        let mut k = *self;
        let bytes = label.as_bytes();
        k.absorb(bytes.len() as u64);
        for chunk in bytes.chunks(8) {
            let mut w = [0u8; 8];
            w[..chunk.len()].copy_from_slice(chunk);
            k.absorb(u64::from_le_bytes(w));
        }
        k
    }

    /// Derive by numeric component (replica index, site index, loop length…).
    pub fn index(&self, i: u64) -> Self {
        let mut k = *self;
        k.absorb(0x81d8_a1b6_59c2_ef37); // tag so index(0) != absorbing nothing
        k.absorb(i);
        k
    }

    /// Materialize the stream at this path.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        for (i, s) in self.state.iter().enumerate() {
            seed[8 * i..8 * (i + 1)].copy_from_slice(&s.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

//! Deterministic seed derivation for independent RNG streams.

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Named substreams used across the toolkit so that e.g. the noise stream of
/// member k never collides with the sample-draw stream.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    SampleDraw,
    Noise,
    MeshPerturb,
    Member,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::SampleDraw => 0x5a11,
            Stream::Noise => 0x1701,
            Stream::MeshPerturb => 0x3e5f,
            Stream::Member => 0x7b2d,
        }
    }
}

/// Derive a child seed from a base seed, a stream tag and an index.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(base ^ stream.tag().wrapping_mul(0x0100_0000_01b3)) ^ index)
}

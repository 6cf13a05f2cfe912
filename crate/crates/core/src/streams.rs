//! Named random substreams derived from a single run seed, so that changing how
//! many draws one stage makes does not shift the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Substream {
    Split,
    Fit,
    Refine,
    Eval,
}

impl Substream {
    fn id(self) -> u64 {
        match self {
            Substream::Split => 1,
            Substream::Fit => 2,
            Substream::Refine => 3,
            Substream::Eval => 4,
        }
    }
}

pub fn substream(seed: u64, which: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

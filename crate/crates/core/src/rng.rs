use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one experiment seed, so that
/// e.g. changing the query strategy does not perturb weight initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Split = 1,
    Toy = 2,
    Init = 3,
    Warmup = 4,
    Query = 5,
    Train = 6,
    Lipschitz = 8,
}

pub(crate) fn seeded(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

//! Deterministic random streams.
//!
//! Every source of randomness in a run is a ChaCha stream derived from the
//! master seed and a structured stream id. Streams are independent of thread
//! scheduling, so seeded runs replay bit-exactly regardless of `--parallel`.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

pub type RunRng = ChaCha8Rng;

/// Identifies one named random stream within a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamId {
    /// Policy network initialization.
    PolicyInit,
    /// Candidate sampling for checkpoint `t`.
    Candidates { t: u32 },
    /// Data order of the single primary trainee (pseudo epoch, transfer and
    /// static baseline runs).
    PrimaryData,
    /// Data order of population member `j`.
    MemberData { member: usize },
    /// Multiplicative weight jitter at checkpoint `t` (population baseline).
    Perturb { t: u32 },
    /// Static weight draws for random search.
    RandomWeights,
    /// Synthetic dataset generation (seeded from the trainee spec, not the
    /// master seed).
    Dataset,
}

impl StreamId {
    pub fn label(&self) -> String {
        match self {
            StreamId::PolicyInit => "policy-init".to_string(),
            StreamId::Candidates { t } => format!("candidates/t={t}"),
            StreamId::PrimaryData => "trainee/primary".to_string(),
            StreamId::MemberData { member } => format!("trainee/member/{member}"),
            StreamId::Perturb { t } => format!("perturb/t={t}"),
            StreamId::RandomWeights => "random-weights".to_string(),
            StreamId::Dataset => "dataset".to_string(),
        }
    }

    fn words(&self) -> (u64, u64) {
        match self {
            StreamId::PolicyInit => (1, 0),
            StreamId::Candidates { t } => (2, u64::from(*t)),
            StreamId::PrimaryData => (3, 0),
            StreamId::MemberData { member } => (4, *member as u64),
            StreamId::Perturb { t } => (5, u64::from(*t)),
            StreamId::RandomWeights => (6, 0),
            StreamId::Dataset => (7, 0),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with a stream id into a fresh 64-bit stream seed.
pub fn derive_seed(seed: u64, id: &StreamId) -> u64 {
    let (tag, index) = id.words();
    let mut acc = splitmix64(seed);
    acc = splitmix64(acc ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    splitmix64(acc ^ index)
}

/// Derive the named stream from the given seed.
pub fn derive_rng(seed: u64, id: &StreamId) -> RunRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, id))
}

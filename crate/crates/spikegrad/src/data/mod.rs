//! Dataset ingestion and spike encodings.
//!
//! * IDX image/label files with latency coding ([`idx`], [`encode`])
//! * AER event files with time binning ([`aer`])
//! * seeded random spike trains for the matching task
//! * synthetic, format-faithful stand-in datasets ([`synth`]) for
//!   environments without the originals

pub mod aer;
pub mod encode;
pub mod idx;
pub mod synth;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use aer::{bin_events, load_nmnist_sample, parse_aer_bytes, Event, EventStream};
pub use encode::latency_encode;
pub use idx::{load_idx, load_idx_images, load_idx_labels, IdxFile, IdxImages};

/// Supervision target of one sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Class index.
    Label(usize),
    /// Per-output target spike trains, time-major `[t * n_out + o]`.
    Trains(Vec<u8>),
    /// Per-output target spike counts.
    Counts(Vec<f64>),
}

/// One input spike tensor plus its supervision target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Time-major input spikes `[t * n_in + i]`.
    pub input_spikes: Vec<u8>,
    pub target: Target,
}

impl Sample {
    pub fn label(&self) -> Option<usize> {
        match self.target {
            Target::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// Seeded random spike trains: per neuron, `spikes_per_neuron` distinct
/// steps drawn uniformly without replacement from `0..t_max`.
pub fn random_spiketrain(
    seed: u64,
    n_neurons: usize,
    spikes_per_neuron: usize,
    t_max: usize,
) -> Vec<u8> {
    assert!(spikes_per_neuron <= t_max, "cannot place {spikes_per_neuron} spikes in {t_max} steps");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0u8; t_max * n_neurons];
    let mut slots: Vec<usize> = (0..t_max).collect();
    for j in 0..n_neurons {
        // Partial Fisher-Yates: the first `spikes_per_neuron` slots end up
        // uniformly chosen without replacement.
        for k in 0..spikes_per_neuron {
            let pick = rng.gen_range(k..t_max);
            slots.swap(k, pick);
        }
        for &t in &slots[..spikes_per_neuron] {
            out[t * n_neurons + j] = 1;
        }
        slots.sort_unstable();
    }
    out
}

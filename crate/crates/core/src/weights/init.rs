use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{WeightStore, WeightTensor};
use crate::graph::{GraphSpec, ParamRole};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// Weights from U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases from
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    KaimingUniform,
    Zeros,
    /// Delta kernels on matching channels, zero elsewhere; zero biases.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitSpec {
    pub seed: u64,
    pub scheme: InitScheme,
    /// Multiplies the KaimingUniform bounds. 1.0 gives the plain scheme.
    pub gain: f32,
}

impl InitSpec {
    pub fn new(seed: u64, scheme: InitScheme) -> Self {
        Self {
            seed,
            scheme,
            gain: 1.0,
        }
    }

    pub fn with_gain(self, gain: f32) -> Self {
        Self { gain, ..self }
    }
}

/// FNV-1a, used to give each tensor its own stream.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

pub fn kaiming_bound(fan_in: usize) -> f32 {
    (6.0 / fan_in as f32).sqrt()
}

/// Fills every tensor the graph needs. Each tensor draws from its own
/// stream keyed by (seed, name), so the result does not depend on
/// iteration order.
pub fn init_random(g: &GraphSpec, spec: &InitSpec) -> WeightStore {
    let mut store = WeightStore::new();
    for p in g.param_specs() {
        let numel: usize = p.dims.iter().product();
        let data = match spec.scheme {
            InitScheme::Zeros => vec![0.0; numel],
            InitScheme::Identity => identity(&p.dims, p.role),
            InitScheme::KaimingUniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ name_hash(&p.name));
                let bound = spec.gain
                    * match p.role {
                        ParamRole::Weight { fan_in } => kaiming_bound(fan_in),
                        ParamRole::Bias { fan_in } => 1.0 / (fan_in as f32).sqrt(),
                    };
                (0..numel).map(|_| rng.gen_range(-bound..=bound)).collect()
            }
        };
        store.insert(p.name, WeightTensor { dims: p.dims, data });
    }
    store
}

fn identity(dims: &[usize], role: ParamRole) -> Vec<f32> {
    let numel: usize = dims.iter().product();
    let mut data = vec![0.0; numel];
    if let (ParamRole::Weight { .. }, [o, i, kh, kw]) = (role, dims) {
        let centre = (kh / 2) * kw + kw / 2;
        for c in 0..(*o).min(*i) {
            data[(c * i + c) * kh * kw + centre] = 1.0;
        }
    }
    data
}

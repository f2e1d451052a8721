//! Shared fixtures for the benchmarks.

use label_audit::dataset::{generate_synthetic, split_aux};
use label_audit::model::{best_checkpoint, train};
use label_audit::noise::inject_uniform;
use label_audit::{Activation, AuxiliarySet, Dataset, ModelCheckpoint, ModelConfig, NoiseReport, SynthSpec};

pub struct Fixture {
    pub noisy: Dataset,
    pub aux: AuxiliarySet,
    pub noise: NoiseReport,
}

/// The default synthetic setup: 8 classes in 32 dimensions, 10% uniform noise.
pub fn fixture(per_class: usize, aux_size: usize) -> Fixture {
    let d = generate_synthetic(&SynthSpec {
        per_class,
        ..SynthSpec::default()
    })
    .expect("valid spec");
    let (audited, aux) = split_aux(&d, aux_size, 16).expect("aux fits");
    let (noisy, noise) = inject_uniform(&audited, 0.10, 16).expect("valid rate");
    Fixture { noisy, aux, noise }
}

pub fn model_config(epochs: usize) -> ModelConfig {
    ModelConfig {
        hidden: 32,
        activation: Activation::Relu,
        epochs,
        ..ModelConfig::default()
    }
}

pub fn trained(f: &Fixture, epochs: usize) -> ModelCheckpoint {
    let checkpoints = train(&f.noisy, f.aux.dataset(), &model_config(epochs)).expect("training converges");
    best_checkpoint(&checkpoints).expect("at least one epoch").clone()
}

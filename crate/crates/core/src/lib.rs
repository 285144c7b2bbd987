//! Class-incremental learning with generative pseudo-rehearsal.
//!
//! A classifier receives a stream of datasets, each holding classes it has
//! not seen before. Old classes are replayed from a class-conditional GAN
//! instead of stored data, and knowledge is transferred either from the
//! previous classifier ([`incremental::increment_model_distillation`]) or
//! from the auxiliary class head of the freshly trained GAN discriminator
//! ([`incremental::increment_ac_distillation`]). Baselines (finetuning,
//! LwF-style distillation and herded exemplar rehearsal) share the same
//! strategy interface, and [`bench`] runs the evaluation protocol.

pub mod bench;
pub mod classify;
pub mod config;
pub mod data;
pub mod diffcore;
pub mod distill;
pub mod gan;
pub mod incremental;
pub mod error;
pub mod models;
pub mod rng;

pub use error::{Error, Result};

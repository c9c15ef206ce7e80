//! Controllable sequence-to-sequence acoustic feature prediction with an
//! LPCNet feature backend.
//!
//! The crate is split into a signal side and a network side:
//!
//! * [`signal`] extracts the 22-value LPCNet feature set (20 band cepstra,
//!   quantized log-pitch, pitch correlation) and 80-channel log mel-spectra
//!   from 22 050 Hz audio.
//! * [`lp`] turns band cepstra or mel frames into linear-prediction filters.
//! * [`diff`] is a small reverse-mode differentiation tape used by the model.
//! * [`attention`] holds the location-sensitive attention and the augmented
//!   candidate soft-selection built on top of it.
//! * [`model`] and [`training`] implement the encoder/decoder network, its
//!   combined loss and a teacher-forced training loop.
//! * [`io`] reads and writes WAV input and the binary feature, LP and weight
//!   containers; [`bench`] measures real-time factors.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`). Training and
//! gradient checks run in `f64`; the type aliases below name the common
//! concrete instantiations.

pub mod attention;
pub mod bench;
pub mod diff;
mod error;
pub mod io;
pub mod lp;
pub mod model;
pub mod signal;
pub mod training;

use std::fmt;

pub use error::{Error, Result};

/// Scalar type accepted by every numeric routine in the crate.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + rustfft::FftNum
    + std::iter::Sum
    + Default
    + fmt::Display
    + fmt::LowerExp
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sample rate every signal-side operation expects.
pub const SAMPLE_RATE: u32 = 22_050;

pub type AudioClip64 = signal::AudioClip<f64>;
pub type AudioClip32 = signal::AudioClip<f32>;
pub type FeatureFrame64 = signal::FeatureFrame<f64>;
pub type FeatureFrame32 = signal::FeatureFrame<f32>;
pub type MelFrame64 = signal::MelFrame<f64>;
pub type LpFilter64 = lp::LpFilter<f64>;
pub type Tape64 = diff::Tape<f64>;
pub type Tensor64 = diff::Tensor<f64>;
pub type Model64 = model::Model<f64>;
pub type ParamStore64 = model::ParamStore<f64>;

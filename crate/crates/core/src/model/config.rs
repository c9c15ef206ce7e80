use serde::{Deserialize, Serialize};

use crate::attention::{PrevAlignment, DEFAULT_CANDIDATES};
use crate::error::Error;
use crate::Result;

/// Convolutional residual post-net shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostnetSpec {
    pub layers: usize,
    pub filters: usize,
    pub kernel: usize,
}

/// Network dimensions and decoding switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `"toy"` or `"full"`; informational once loaded.
    pub profile: String,
    pub vocab: usize,
    pub embedding: usize,
    pub encoder_conv_layers: usize,
    pub encoder_kernel: usize,
    /// Width of the bidirectional encoder output (half per direction).
    pub encoder: usize,
    pub prenet: usize,
    pub prenet_dropout: f64,
    pub decoder: usize,
    pub attention: usize,
    pub location_filters: usize,
    pub location_kernel: usize,
    pub lpc_hidden: [usize; 2],
    pub postnet_cepstra: PostnetSpec,
    pub postnet_pitch: PostnetSpec,
    pub candidates: usize,
    pub prev_alignment: PrevAlignment,
    /// Feed back `[previous target, previous prediction]` while training.
    pub double_feedback: bool,
}

impl ModelConfig {
    /// Small dimensions used for tests and the toy corpus.
    pub fn toy(vocab: usize) -> Self {
        Self {
            profile: "toy".into(),
            vocab,
            embedding: 64,
            encoder_conv_layers: 3,
            encoder_kernel: 5,
            encoder: 64,
            prenet: 64,
            prenet_dropout: 0.5,
            decoder: 128,
            attention: 64,
            location_filters: 32,
            location_kernel: 31,
            lpc_hidden: [64, 32],
            postnet_cepstra: PostnetSpec {
                layers: 5,
                filters: 32,
                kernel: 5,
            },
            postnet_pitch: PostnetSpec {
                layers: 5,
                filters: 16,
                kernel: 5,
            },
            candidates: DEFAULT_CANDIDATES,
            prev_alignment: PrevAlignment::Initial,
            double_feedback: true,
        }
    }

    /// Full-size dimensions.
    pub fn full(vocab: usize) -> Self {
        Self {
            profile: "full".into(),
            embedding: 512,
            encoder: 512,
            prenet: 256,
            decoder: 1024,
            attention: 128,
            lpc_hidden: [512, 256],
            postnet_cepstra: PostnetSpec {
                layers: 5,
                filters: 512,
                kernel: 5,
            },
            postnet_pitch: PostnetSpec {
                layers: 5,
                filters: 64,
                kernel: 5,
            },
            ..Self::toy(vocab)
        }
    }

    /// Feedback width fed to the pre-net.
    pub fn feedback_dim(&self) -> usize {
        if self.double_feedback {
            2 * super::N_MEL
        } else {
            super::N_MEL
        }
    }

    /// Width of one encoding vector including the two prosody slots.
    pub fn encoding_dim(&self) -> usize {
        self.encoder + super::PROSODY_DIM
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab", self.vocab),
            ("embedding", self.embedding),
            ("encoder_conv_layers", self.encoder_conv_layers),
            ("encoder", self.encoder),
            ("prenet", self.prenet),
            ("decoder", self.decoder),
            ("attention", self.attention),
            ("location_filters", self.location_filters),
            ("lpc_hidden[0]", self.lpc_hidden[0]),
            ("lpc_hidden[1]", self.lpc_hidden[1]),
            ("postnet_cepstra.layers", self.postnet_cepstra.layers),
            ("postnet_cepstra.filters", self.postnet_cepstra.filters),
            ("postnet_pitch.layers", self.postnet_pitch.layers),
            ("postnet_pitch.filters", self.postnet_pitch.filters),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.encoder % 2 != 0 {
            return Err(Error::Config("encoder width must be even".into()));
        }
        let kernels = [
            ("encoder_kernel", self.encoder_kernel),
            ("location_kernel", self.location_kernel),
            ("postnet_cepstra.kernel", self.postnet_cepstra.kernel),
            ("postnet_pitch.kernel", self.postnet_pitch.kernel),
        ];
        if let Some((name, k)) = kernels.iter().find(|(_, k)| k % 2 == 0) {
            return Err(Error::Config(format!("{name} must be odd, got {k}")));
        }
        if self.candidates < DEFAULT_CANDIDATES {
            return Err(Error::Config(format!(
                "candidates must be at least 3, got {}",
                self.candidates
            )));
        }
        if !(0.0..1.0).contains(&self.prenet_dropout) {
            return Err(Error::Config(format!(
                "prenet_dropout must lie in [0, 1), got {}",
                self.prenet_dropout
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model config serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        ModelConfig::toy(10).validate().unwrap();
        let p = ModelConfig::full(10);
        p.validate().unwrap();
        assert_eq!(p.lpc_hidden, [512, 256]);
        assert_eq!((p.postnet_cepstra.layers, p.postnet_cepstra.filters, p.postnet_cepstra.kernel), (5, 512, 5));
        assert_eq!((p.postnet_pitch.layers, p.postnet_pitch.filters, p.postnet_pitch.kernel), (5, 64, 5));
    }

    #[test]
    fn toml_roundtrip() {
        let mut c = ModelConfig::toy(7);
        c.prev_alignment = PrevAlignment::Final;
        assert_eq!(ModelConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ModelConfig::toy(7);
        c.encoder = 63;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(7);
        c.location_kernel = 30;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(0);
        c.candidates = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::toy(3);
        c.prenet_dropout = 1.0;
        assert!(c.validate().is_err());
    }
}

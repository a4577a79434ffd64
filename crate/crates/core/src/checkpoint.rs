//! JSON checkpoints.
//!
//! A checkpoint holds both networks with their RMSProp accumulators, the
//! latent mixture, the positions of the latent and evaluation random streams
//! and the run configuration. Floats are written in shortest round-trip form,
//! so loading a saved checkpoint gives back bit-identical parameters.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "step": 200, "assigner_steps": 1000,
//!   "generator": { "layers": [ { "input_dim": .., "output_dim": .., "weights": [..], "bias": [..], "activation": "leaky_relu" }, .. ] },
//!   "generator_opt": { "learning_rate": .., "decay": .., "epsilon": .., "accumulators": [[..], ..] },
//!   "assigner": { .. }, "assigner_opt": { .. },
//!   "latent_means": { "shape": [k, dim], "data": [..] }, "latent_sigma": 0.1,
//!   "latent_rng": { "seed": [..32 bytes], "stream": 4, "word_pos": ".." },
//!   "eval_rng": { .. },
//!   "config": { .. }
//! }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::net::DenseNet;
use crate::optim::RmsProp;
use crate::tensor::Tensor;

pub const FORMAT_VERSION: u32 = 1;

/// Exact position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// 128-bit word position, as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().unwrap_or(0));
        rng
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub step: usize,
    pub assigner_steps: usize,
    pub generator: DenseNet,
    pub generator_opt: RmsProp,
    pub assigner: DenseNet,
    pub assigner_opt: RmsProp,
    pub latent_means: Tensor,
    pub latent_sigma: f64,
    pub latent_rng: RngState,
    pub eval_rng: RngState,
    pub config: TrainConfig,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        ckpt.check()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        ckpt.check()?;
        Ok(ckpt)
    }

    fn check(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.word_pos_invalid() {
            return Err(Error::Checkpoint("bad random stream position".into()));
        }
        if self.latent_means.cols() != self.generator.input_dim() {
            return Err(Error::Checkpoint(format!(
                "latent dimension {} does not match generator input {}",
                self.latent_means.cols(),
                self.generator.input_dim()
            )));
        }
        if self.assigner.input_dim() != self.generator.output_dim() {
            return Err(Error::Checkpoint(format!(
                "assigner input {} does not match generator output {}",
                self.assigner.input_dim(),
                self.generator.output_dim()
            )));
        }
        Ok(())
    }

    fn word_pos_invalid(&self) -> bool {
        [&self.latent_rng, &self.eval_rng]
            .iter()
            .any(|r| r.word_pos.parse::<u128>().is_err())
    }
}

//! The learned proximal operator: a small two-channel residual CNN, its
//! K-step unrolled form, training with a Jacobian-norm penalty, and weight
//! serialization.

mod net;
mod train;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{purpose, Rng};

pub use net::{jacobian_penalty_estimate, net_backward, net_forward, proximator_forward};
pub use train::{train, training_loss, TrainOutcome};

#[cfg(test)]
pub(crate) use net::hutchinson_estimate;

/// Architecture of the denoising network and its unrolling.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    /// Feature channels of the hidden conv layers.
    pub filters: usize,
    /// Number of conv layers (first maps 2->filters, last filters->2).
    pub depth: usize,
    /// Unrolled proximal steps sharing the network weights.
    pub unroll_steps: usize,
    /// Mixing weight of the inner iteration `g = x + alpha (v - x)`.
    pub inner_alpha: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            filters: 16,
            depth: 4,
            unroll_steps: 3,
            inner_alpha: 0.5,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 {
            return Err(Error::Parameter("filters must be at least 1".into()));
        }
        if self.depth < 2 {
            return Err(Error::Parameter(format!("depth must be at least 2, got {}", self.depth)));
        }
        if self.unroll_steps == 0 {
            return Err(Error::Parameter("unroll_steps must be at least 1".into()));
        }
        if !(self.inner_alpha > 0.0 && self.inner_alpha < 1.0) {
            return Err(Error::Parameter(format!(
                "inner_alpha must be in (0, 1), got {}",
                self.inner_alpha
            )));
        }
        Ok(())
    }
}

/// Training hyperparameters. `penalty_weight` defaults to `noise_sigma^2`
/// as in the training objective.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub noise_sigma: f64,
    pub penalty_weight: f64,
    pub probes: usize,
    pub probe_eps: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let sigma = 0.03;
        TrainConfig {
            noise_sigma: sigma,
            penalty_weight: sigma * sigma,
            probes: 1,
            probe_eps: 1e-3,
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Default configuration for a given noise level (penalty weight
    /// tracks `sigma^2`).
    pub fn for_sigma(sigma: f64) -> Self {
        TrainConfig {
            noise_sigma: sigma,
            penalty_weight: sigma * sigma,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::Parameter("noise sigma must be nonnegative".into()));
        }
        if self.penalty_weight < 0.0 {
            return Err(Error::Parameter("penalty weight must be nonnegative".into()));
        }
        if self.probes == 0 {
            return Err(Error::Parameter("probes must be at least 1".into()));
        }
        if self.probe_eps <= 0.0 {
            return Err(Error::Parameter("probe eps must be positive".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Parameter("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Training provenance stored alongside the weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainMeta {
    pub sigma: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// Network parameters plus architecture and training metadata.
///
/// The flat buffer holds, per layer in order, the kernels
/// `[out][in][ky][kx]` followed by the biases `[out]`, all 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserWeights {
    pub config: NetConfig,
    pub params: Vec<f64>,
    pub meta: TrainMeta,
}

impl DenoiserWeights {
    /// All-zero parameters: the network is exactly the identity map
    /// (residual connection only).
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let len = net::param_len(&config);
        Ok(DenoiserWeights {
            config,
            params: vec![0.0; len],
            meta: TrainMeta::default(),
        })
    }

    /// He-style random initialization from a derived stream of `seed`.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut weights = Self::zeros(config)?;
        let dims = net::layer_dims(&weights.config);
        let offsets = net::layer_offsets(&weights.config);
        for (l, &(in_ch, out_ch)) in dims.iter().enumerate() {
            let mut rng = Rng::from_stream(seed, purpose::WEIGHT_INIT, l as u64);
            let scale = (2.0 / (in_ch as f64 * 9.0)).sqrt();
            let (koff, _) = offsets[l];
            for i in 0..out_ch * in_ch * 9 {
                weights.params[koff + i] = scale * rng.normal();
            }
            // biases stay zero
        }
        Ok(weights)
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.params.len() != net::param_len(&self.config) {
            return Err(Error::Format(format!(
                "parameter count {} does not match architecture ({} expected)",
                self.params.len(),
                net::param_len(&self.config)
            )));
        }
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(Error::Numeric("weights contain non-finite values".into()));
        }
        Ok(())
    }
}

const WEIGHTS_MAGIC: &[u8; 4] = b"WGT1";
const WEIGHTS_VERSION: u32 = 1;

/// Writes weights in the WGT1 format: magic, version, header length, a
/// UTF-8 `key=value` header, then the raw little-endian f64 parameter blob
/// in layer order.
pub fn save_weights(weights: &DenoiserWeights, path: &Path) -> Result<()> {
    weights.validate()?;
    let mut header = String::new();
    header.push_str(&format!("filters={}\n", weights.config.filters));
    header.push_str(&format!("depth={}\n", weights.config.depth));
    header.push_str(&format!("kernel={}\n", net::KERNEL));
    header.push_str(&format!("unroll_steps={}\n", weights.config.unroll_steps));
    header.push_str(&format!("inner_alpha={:e}\n", weights.config.inner_alpha));
    header.push_str(&format!("sigma={:e}\n", weights.meta.sigma));
    header.push_str(&format!("epochs={}\n", weights.meta.epochs));
    header.push_str(&format!("seed={}\n", weights.meta.seed));

    let mut out = Vec::with_capacity(16 + header.len() + weights.params.len() * 8);
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for p in &weights.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Reads a WGT1 file, validating magic, version, header fields and the
/// payload length against the declared architecture.
pub fn load_weights(path: &Path) -> Result<DenoiserWeights> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 {
        return Err(Error::Format("weights file truncated before header".into()));
    }
    if &bytes[0..4] != WEIGHTS_MAGIC {
        return Err(Error::Format("bad magic, expected WGT1".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != WEIGHTS_VERSION {
        return Err(Error::Format(format!("unsupported weights version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(Error::Format("weights file truncated inside header".into()));
    }
    let header = std::str::from_utf8(&bytes[12..12 + header_len])
        .map_err(|_| Error::Format("weights header is not UTF-8".into()))?;

    let mut fields = BTreeMap::new();
    for line in header.lines() {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("malformed header line: {line}")))?;
        fields.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| Error::Format(format!("missing header field {key}")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad integer for {key}")))
    };
    let parse_f64 = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| Error::Format(format!("bad float for {key}")))
    };

    let kernel = parse_usize("kernel")?;
    if kernel != net::KERNEL {
        return Err(Error::Format(format!("unsupported kernel size {kernel}")));
    }
    let config = NetConfig {
        filters: parse_usize("filters")?,
        depth: parse_usize("depth")?,
        unroll_steps: parse_usize("unroll_steps")?,
        inner_alpha: parse_f64("inner_alpha")?,
    };
    config.validate().map_err(|e| Error::Format(format!("invalid architecture header: {e}")))?;
    let meta = TrainMeta {
        sigma: parse_f64("sigma")?,
        epochs: parse_usize("epochs")?,
        seed: get("seed")?
            .parse()
            .map_err(|_| Error::Format("bad integer for seed".into()))?,
    };

    let payload = &bytes[12 + header_len..];
    let expected = net::param_len(&config);
    if payload.len() != expected * 8 {
        return Err(Error::Format(format!(
            "payload holds {} bytes, architecture needs {}",
            payload.len(),
            expected * 8
        )));
    }
    let params: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let weights = DenoiserWeights { config, params, meta };
    weights.validate()?;
    Ok(weights)
}

//! The dense recurrent convolutional network and its checkpoints.

mod config;
pub mod layout;
mod network;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use autodiff::ops::{BatchNormMode, RunningStats};
use autodiff::{Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::container::{self, Manifest};
use crate::error::{format_err, invalid, Error, Result};
use crate::prediction::PredictionTrack;
use crate::prep::PreparedRecord;

pub use config::{Activation, ModelConfig, ABLATIONS, DEFAULT_DILATIONS};
pub use layout::{param_specs, Init, ParamSpec};
pub use network::Bound;

pub const CHECKPOINT_FORMAT: &str = "sleepnet-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Tensor>,
    pub stats: BTreeMap<String, RunningStats>,
}

impl Model {
    /// Fresh parameters drawn in layout order from `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for spec in param_specs(config) {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::FanIn(fan_in) => {
                    let dist = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
                    (0..n).map(|_| dist.sample(&mut rng)).collect()
                }
                Init::Ones => vec![1.0; n],
                Init::Zeros => vec![0.0; n],
                Init::ForgetBias(h) => (0..n).map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }).collect(),
            };
            params.insert(spec.name, Tensor::new(spec.shape, data)?);
        }
        let stats = layout::norm_layers(config)
            .into_iter()
            .map(|(name, c)| (name, RunningStats::new(c)))
            .collect();
        Ok(Self {
            config: config.clone(),
            params,
            stats,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Parameters as graph leaves; `trainable` decides whether gradients are
    /// recorded.
    pub fn bind(&self, trainable: bool) -> BTreeMap<String, Var> {
        self.params
            .iter()
            .map(|(k, t)| {
                let v = if trainable {
                    Var::parameter(t.clone())
                } else {
                    Var::constant(t.clone())
                };
                (k.clone(), v)
            })
            .collect()
    }

    /// Inference with running statistics; no graph is kept.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let vars = self.bind(false);
        let mut stats = self.stats.clone();
        let mut net = Bound {
            config: &self.config,
            vars: &vars,
            stats: &mut stats,
            mode: BatchNormMode::Eval,
        };
        let out = net.forward(&Var::constant(input.clone()))?;
        let probs = out.value().clone();
        if !probs.is_finite() {
            return Err(Error::Numerical("model output is not finite".into()));
        }
        Ok(probs)
    }

    pub fn predict_record(&self, record: &PreparedRecord) -> Result<PredictionTrack> {
        let probs = self.predict(&record.input_tensor())?;
        PredictionTrack::from_tensor(&record.source_id, &probs, record.valid_length_s)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with_meta(dir, &BTreeMap::new())
    }

    /// Writes `manifest`, `config.toml` and one little-endian `f64` blob.
    pub fn save_with_meta(&self, dir: &Path, meta: &BTreeMap<String, String>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut m = Manifest::new();
        m.push("format", format!("{CHECKPOINT_FORMAT} {CHECKPOINT_VERSION}"));
        for (k, v) in meta {
            if k.contains(char::is_whitespace) || matches!(k.as_str(), "format" | "tensor" | "stats") {
                return Err(invalid(format!("bad checkpoint metadata key `{k}`")));
            }
            m.push(k, v);
        }
        let mut blob = Vec::new();
        let mut offset = 0usize;
        for (name, t) in &self.params {
            let dims: Vec<String> = t.shape().iter().map(ToString::to_string).collect();
            m.push("tensor", format!("{name} {offset} {}", dims.join("x")));
            blob.extend(container::f64_to_bytes(t.data()));
            offset += t.numel();
        }
        for (name, s) in &self.stats {
            m.push("stats", format!("{name} {offset} {} {}", s.mean.len(), s.momentum));
            blob.extend(container::f64_to_bytes(&s.mean));
            blob.extend(container::f64_to_bytes(&s.var));
            offset += 2 * s.mean.len();
        }
        let config = toml::to_string(&self.config).map_err(|e| format_err(e.to_string()))?;
        container::write_file(&dir.join("config.toml"), config.as_bytes())?;
        container::write_file(&dir.join("params.bin"), &blob)?;
        m.write(dir)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self::load_with_meta(dir)?.0)
    }

    pub fn load_with_meta(dir: &Path) -> Result<(Self, Manifest)> {
        let m = Manifest::read(dir)?;
        m.expect_format(CHECKPOINT_FORMAT, CHECKPOINT_VERSION)?;
        let path = dir.join("config.toml");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let config: ModelConfig = toml::from_str(&text).map_err(|e| format_err(format!("{}: {e}", path.display())))?;
        let blob = container::f64_from_bytes(&container::read_file(&dir.join("params.bin"))?)?;
        let slice = |offset: usize, len: usize| -> Result<Vec<f64>> {
            blob.get(offset..offset + len)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| format_err("parameter blob is truncated"))
        };
        let bad = |line: &str| format_err(format!("bad checkpoint line `{line}`"));
        let mut params = BTreeMap::new();
        for line in m.get_all("tensor") {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(bad(line));
            }
            let offset: usize = f[1].parse().map_err(|_| bad(line))?;
            let shape: Vec<usize> = f[2]
                .split('x')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(line))?;
            let n = shape.iter().product();
            params.insert(f[0].to_string(), Tensor::new(shape, slice(offset, n)?)?);
        }
        let mut stats = BTreeMap::new();
        for line in m.get_all("stats") {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad(line));
            }
            let offset: usize = f[1].parse().map_err(|_| bad(line))?;
            let c: usize = f[2].parse().map_err(|_| bad(line))?;
            let momentum: f64 = f[3].parse().map_err(|_| bad(line))?;
            stats.insert(
                f[0].to_string(),
                RunningStats {
                    mean: slice(offset, c)?,
                    var: slice(offset + c, c)?,
                    momentum,
                },
            );
        }
        let model = Self { config, params, stats };
        model.check_layout()?;
        Ok((model, m))
    }

    /// Parameter names and shapes must match what the configuration implies.
    pub fn check_layout(&self) -> Result<()> {
        self.config.validate()?;
        let specs = param_specs(&self.config);
        if specs.len() != self.params.len() {
            return Err(format_err(format!(
                "checkpoint has {} tensors, configuration implies {}",
                self.params.len(),
                specs.len()
            )));
        }
        for s in specs {
            match self.params.get(&s.name) {
                Some(t) if t.shape() == s.shape.as_slice() => {}
                _ => return Err(format_err(format!("tensor {} missing or misshapen", s.name))),
            }
        }
        for (name, c) in layout::norm_layers(&self.config) {
            if self.stats.get(&name).map(|s| s.mean.len()) != Some(c) {
                return Err(format_err(format!("running statistics {name} missing or misshapen")));
            }
        }
        Ok(())
    }
}

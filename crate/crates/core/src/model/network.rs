//! Forward pass of the dense recurrent convolutional network.

use std::collections::BTreeMap;

use autodiff::ops::{self, BatchNormMode, ConvSpec, LstmWeights, RunningStats};
use autodiff::Var;

use super::config::{Activation, ModelConfig};
use super::layout::{units, UnitShape};
use crate::error::{invalid, Result};

/// Parameters bound as graph leaves plus the mutable normalization state.
pub struct Bound<'a> {
    pub config: &'a ModelConfig,
    pub vars: &'a BTreeMap<String, Var>,
    pub stats: &'a mut BTreeMap<String, RunningStats>,
    pub mode: BatchNormMode,
}

impl Bound<'_> {
    fn var(&self, name: &str) -> Result<&Var> {
        self.vars
            .get(name)
            .ok_or_else(|| invalid(format!("model has no parameter {name}")))
    }

    /// Effective weight of a layer: `g·v/‖v‖` when stored weight-normalized.
    fn weight(&self, prefix: &str) -> Result<Var> {
        match self.vars.get(&format!("{prefix}.v")) {
            Some(v) => Ok(ops::weight_norm(v, self.var(&format!("{prefix}.g"))?)?),
            None => Ok(self.var(&format!("{prefix}.w"))?.clone()),
        }
    }

    fn conv(&self, x: &Var, prefix: &str, spec: ConvSpec, with_bias: bool) -> Result<Var> {
        let w = self.weight(prefix)?;
        let b = if with_bias { Some(self.var(&format!("{prefix}.b"))?) } else { None };
        Ok(ops::conv1d(x, &w, b, spec)?)
    }

    fn activate(&self, x: &Var) -> Result<Var> {
        Ok(match self.config.activation {
            Activation::Selu => ops::selu(x)?,
            Activation::Relu => ops::relu(x)?,
        })
    }

    /// Depthwise dilated convolution, 1×1 mixing, optional position-wise
    /// normalization, batch normalization, activation.
    fn sublayer(&mut self, x: &Var, prefix: &str, unit: &UnitShape) -> Result<Var> {
        let channels = x.shape()[0];
        let dw = self.conv(
            x,
            &format!("{prefix}.dw"),
            ConvSpec {
                dilation: unit.dilation,
                groups: channels,
            },
            false,
        )?;
        let mut h = self.conv(&dw, &format!("{prefix}.pw"), ConvSpec::default(), true)?;
        if unit.positionwise {
            h = ops::positionwise_norm(&h)?;
        }
        let bn = format!("{prefix}.bn");
        let gamma = self.var(&format!("{bn}.gamma"))?.clone();
        let beta = self.var(&format!("{bn}.beta"))?.clone();
        let stats = self
            .stats
            .get_mut(&bn)
            .ok_or_else(|| invalid(format!("model has no running statistics {bn}")))?;
        let h = ops::batch_norm(&h, &gamma, &beta, stats, self.mode)?;
        self.activate(&h)
    }

    /// Densely connected unit: sub-layer `i` reads the concatenation of the
    /// unit input and the outputs of sub-layers `0..i`; the last sub-layer's
    /// output is the unit output.
    pub fn unit(&mut self, x: &Var, unit: &UnitShape) -> Result<Var> {
        if x.shape()[0] != unit.input {
            return Err(invalid(format!(
                "{} expects {} channels, got {}",
                unit.prefix,
                unit.input,
                x.shape()[0]
            )));
        }
        let mut features = vec![x.clone()];
        for i in 0..unit.sublayers {
            let input = if features.len() == 1 {
                features[0].clone()
            } else {
                ops::concat(&features.iter().collect::<Vec<_>>())?
            };
            let out = self.sublayer(&input, &format!("{}.sub{i}", unit.prefix), unit)?;
            if i + 1 == unit.sublayers {
                return Ok(out);
            }
            features.push(out);
        }
        unreachable!("units have at least one sub-layer")
    }

    fn lstm_weights(&self, dir: &str) -> Result<LstmWeights> {
        Ok(LstmWeights {
            w_ih: self.weight(&format!("lstm.{dir}.w_ih"))?,
            w_hh: self.weight(&format!("lstm.{dir}.w_hh"))?,
            bias: self.var(&format!("lstm.{dir}.bias"))?.clone(),
        })
    }

    /// `conv_b(tanh(conv_a(bilstm(x) + residual(x))))`, pre-softmax.
    pub fn recurrent_block(&self, x: &Var) -> Result<Var> {
        let recurrent = if self.config.use_lstm {
            Some(ops::bilstm(x, &self.lstm_weights("fwd")?, &self.lstm_weights("bwd")?)?)
        } else {
            None
        };
        let residual = if self.config.use_residual_in_lstm_block {
            Some(self.conv(x, "head.res", ConvSpec::default(), true)?)
        } else {
            None
        };
        let mixed = match (recurrent, residual) {
            (Some(r), Some(s)) => ops::add(&r, &s)?,
            (Some(r), None) => r,
            (None, Some(s)) => s,
            (None, None) => return Err(invalid("recurrent block has no path")),
        };
        let a = ops::tanh(&self.conv(&mixed, "head.a", ConvSpec::default(), true)?)?;
        self.conv(&a, "head.b", ConvSpec::default(), true)
    }

    /// Full network: `12 × L` input to `4 × L/50` class probabilities.
    pub fn forward(&mut self, input: &Var) -> Result<Var> {
        let c = self.config;
        let shape = input.shape();
        if shape.len() != 2 || shape[0] != c.input_channels {
            return Err(invalid(format!(
                "input must be {} × T, got {shape:?}",
                c.input_channels
            )));
        }
        let pool = c.total_pool();
        if shape[1] == 0 || !shape[1].is_multiple_of(pool) {
            return Err(invalid(format!("input length {} is not a positive multiple of {pool}", shape[1])));
        }
        let all = units(c);
        let mut h = input.clone();
        for (u, &w) in all.iter().zip(&c.pool_widths) {
            h = self.unit(&h, u)?;
            h = ops::maxpool1d(&h, w)?;
        }
        for u in &all[c.dcu1_count()..] {
            h = self.unit(&h, u)?;
        }
        let logits = self.recurrent_block(&h)?;
        Ok(ops::softmax(&logits)?)
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
    Relu,
}

/// Architecture hyperparameters and the switches exercised by the ablation
/// experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_channels: usize,
    /// Output width of each first-stage unit; one unit per pooling layer.
    pub dcu1_widths: Vec<usize>,
    /// Width of the inner sub-layers of first-stage units.
    pub dcu1_growth: usize,
    /// Output width of every second-stage unit.
    pub dcu2_width: usize,
    pub dcu2_growth: usize,
    /// Separable convolution sub-layers per unit.
    pub sublayers: usize,
    pub kernel_size: usize,
    /// One dilation per second-stage unit.
    pub dilation_schedule: Vec<usize>,
    pub pool_widths: Vec<usize>,
    pub lstm_hidden: usize,
    /// Width of the first 1×1 convolution after the recurrent layer.
    pub head_width: usize,
    pub activation: Activation,
    pub positionwise_in_dcu1: bool,
    pub positionwise_in_dcu2: bool,
    pub use_lstm: bool,
    pub use_residual_in_lstm_block: bool,
    pub use_weight_norm: bool,
    pub multi_task: bool,
    /// Moving-window standardization during preparation.
    pub moving_normalization: bool,
}

pub const DEFAULT_DILATIONS: [usize; 11] = [1, 2, 4, 8, 16, 32, 16, 8, 4, 2, 1];

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_channels: 12,
            dcu1_widths: vec![32, 64, 64],
            dcu1_growth: 16,
            dcu2_width: 64,
            dcu2_growth: 16,
            sublayers: 4,
            kernel_size: 3,
            dilation_schedule: DEFAULT_DILATIONS.to_vec(),
            pool_widths: vec![2, 5, 5],
            lstm_hidden: 64,
            head_width: 64,
            activation: Activation::Selu,
            positionwise_in_dcu1: false,
            positionwise_in_dcu2: true,
            use_lstm: true,
            use_residual_in_lstm_block: true,
            use_weight_norm: true,
            multi_task: true,
            moving_normalization: true,
        }
    }
}

/// One line per ablation experiment, numbered from 1.
pub const ABLATIONS: [&str; 10] = [
    "baseline model",
    "ReLU instead of SELU activations",
    "position-wise normalization added to first-stage units",
    "position-wise normalization removed from second-stage units",
    "bidirectional LSTM removed",
    "moving-window signal normalization removed",
    "residual mapping removed from the recurrent block",
    "weight normalization removed everywhere",
    "single-task (arousal only) training",
    "dilations of the last five second-stage units fixed to one",
];

impl ModelConfig {
    /// Reduced widths for desk-scale training (all widths ≤ 16).
    pub fn desk() -> Self {
        Self {
            dcu1_widths: vec![8, 16, 16],
            dcu1_growth: 8,
            dcu2_width: 16,
            dcu2_growth: 8,
            lstm_hidden: 8,
            head_width: 16,
            ..Self::default()
        }
    }

    pub fn dcu1_count(&self) -> usize {
        self.dcu1_widths.len()
    }

    pub fn dcu2_count(&self) -> usize {
        self.dilation_schedule.len()
    }

    /// Input samples per output step.
    pub fn total_pool(&self) -> usize {
        self.pool_widths.iter().product()
    }

    /// Width entering the recurrent block.
    pub fn trunk_width(&self) -> usize {
        if self.dcu2_count() > 0 {
            self.dcu2_width
        } else {
            *self.dcu1_widths.last().unwrap_or(&self.input_channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.dcu1_growth == 0 || self.dcu2_growth == 0 || self.dcu2_width == 0 {
            return Err(invalid("widths must be positive"));
        }
        if self.dcu1_widths.is_empty() || self.dcu1_widths.contains(&0) {
            return Err(invalid("first-stage widths must be non-empty and positive"));
        }
        if self.dcu1_widths.len() != self.pool_widths.len() {
            return Err(invalid("one pooling layer is needed per first-stage unit"));
        }
        if self.pool_widths.contains(&0) {
            return Err(invalid("pool widths must be positive"));
        }
        if self.sublayers == 0 {
            return Err(invalid("units need at least one sub-layer"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(invalid("kernel size must be odd"));
        }
        if self.dilation_schedule.contains(&0) {
            return Err(invalid("dilations must be positive"));
        }
        if self.lstm_hidden == 0 || self.head_width == 0 {
            return Err(invalid("recurrent block widths must be positive"));
        }
        if !self.use_lstm && !self.use_residual_in_lstm_block {
            return Err(invalid("the recurrent block needs the LSTM, the residual mapping, or both"));
        }
        Ok(())
    }

    /// Configuration for ablation experiment `experiment` (1..=10); each
    /// changes exactly one setting, and 1 is the unchanged baseline.
    pub fn apply_ablation(&self, experiment: usize) -> Result<Self> {
        let mut c = self.clone();
        match experiment {
            1 => {}
            2 => c.activation = Activation::Relu,
            3 => c.positionwise_in_dcu1 = true,
            4 => c.positionwise_in_dcu2 = false,
            5 => c.use_lstm = false,
            6 => c.moving_normalization = false,
            7 => c.use_residual_in_lstm_block = false,
            8 => c.use_weight_norm = false,
            9 => c.multi_task = false,
            10 => {
                let n = c.dilation_schedule.len();
                for d in &mut c.dilation_schedule[n.saturating_sub(5)..] {
                    *d = 1;
                }
            }
            other => return Err(invalid(format!("ablation experiment {other} outside 1..=10"))),
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.total_pool(), 50);
        assert_eq!(c.dcu2_count(), 11);
        ModelConfig::desk().validate().unwrap();
    }

    #[test]
    fn ablation_changes() {
        let base = ModelConfig::default();
        assert_eq!(base.apply_ablation(1).unwrap(), base);
        let relu = base.apply_ablation(2).unwrap();
        assert_eq!(relu.activation, Activation::Relu);
        assert_eq!(ModelConfig { activation: Activation::Selu, ..relu }, base);
        assert_eq!(base.apply_ablation(10).unwrap().dilation_schedule, vec![1, 2, 4, 8, 16, 32, 1, 1, 1, 1, 1]);
        assert!(base.apply_ablation(11).is_err());
        assert!(base.apply_ablation(0).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ModelConfig::desk().apply_ablation(7).unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ModelConfig>(&text).unwrap(), c);
    }
}

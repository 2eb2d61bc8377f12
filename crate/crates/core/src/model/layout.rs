//! Names, shapes and initial values of every learnable tensor.

use super::config::ModelConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with standard deviation `1/sqrt(fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
    /// Zeros except 1 on the forget-gate block of a `4H` bias.
    ForgetBias(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

/// Where a unit sits in the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    First,
    Second,
}

/// Geometry of one densely connected unit.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitShape {
    pub prefix: String,
    pub stage: Stage,
    pub input: usize,
    pub growth: usize,
    pub output: usize,
    pub sublayers: usize,
    pub dilation: usize,
    pub weight_norm: bool,
    pub positionwise: bool,
}

impl UnitShape {
    /// `(input width, output width)` of sub-layer `i`: it sees the unit input
    /// and all earlier sub-layer outputs; the last one produces the unit
    /// output.
    pub fn sublayer(&self, i: usize) -> (usize, usize) {
        let cin = self.input + i * self.growth;
        let cout = if i + 1 == self.sublayers { self.output } else { self.growth };
        (cin, cout)
    }
}

pub fn units(c: &ModelConfig) -> Vec<UnitShape> {
    let mut out = Vec::new();
    let mut width = c.input_channels;
    for (u, &w) in c.dcu1_widths.iter().enumerate() {
        out.push(UnitShape {
            prefix: format!("dcu1.{u}"),
            stage: Stage::First,
            input: width,
            growth: c.dcu1_growth,
            output: w,
            sublayers: c.sublayers,
            dilation: 1,
            weight_norm: false,
            positionwise: c.positionwise_in_dcu1,
        });
        width = w;
    }
    for (u, &d) in c.dilation_schedule.iter().enumerate() {
        out.push(UnitShape {
            prefix: format!("dcu2.{u}"),
            stage: Stage::Second,
            input: width,
            growth: c.dcu2_growth,
            output: c.dcu2_width,
            sublayers: c.sublayers,
            dilation: d,
            weight_norm: c.use_weight_norm,
            positionwise: c.positionwise_in_dcu2,
        });
        width = c.dcu2_width;
    }
    out
}

/// A weight (`.v`/`.g` when weight-normalized, `.w` otherwise) of shape
/// `rows × rest` with fan-in `fan_in`.
fn weight(specs: &mut Vec<ParamSpec>, prefix: &str, shape: Vec<usize>, fan_in: usize, wn: bool) {
    if wn {
        specs.push(ParamSpec {
            name: format!("{prefix}.g"),
            shape: vec![shape[0]],
            init: Init::Ones,
        });
        specs.push(ParamSpec {
            name: format!("{prefix}.v"),
            shape,
            init: Init::FanIn(fan_in),
        });
    } else {
        specs.push(ParamSpec {
            name: format!("{prefix}.w"),
            shape,
            init: Init::FanIn(fan_in),
        });
    }
}

fn bias(specs: &mut Vec<ParamSpec>, prefix: &str, n: usize) {
    specs.push(ParamSpec {
        name: format!("{prefix}.b"),
        shape: vec![n],
        init: Init::Zeros,
    });
}

pub fn unit_params(u: &UnitShape, k: usize, specs: &mut Vec<ParamSpec>) {
    for i in 0..u.sublayers {
        let (cin, cout) = u.sublayer(i);
        let p = format!("{}.sub{i}", u.prefix);
        weight(specs, &format!("{p}.dw"), vec![cin, 1, k], k, u.weight_norm);
        weight(specs, &format!("{p}.pw"), vec![cout, cin, 1], cin, u.weight_norm);
        bias(specs, &format!("{p}.pw"), cout);
        specs.push(ParamSpec {
            name: format!("{p}.bn.gamma"),
            shape: vec![cout],
            init: Init::Ones,
        });
        specs.push(ParamSpec {
            name: format!("{p}.bn.beta"),
            shape: vec![cout],
            init: Init::Zeros,
        });
    }
}

/// Batch-norm layers `(name, channels)` with running statistics.
pub fn norm_layers(c: &ModelConfig) -> Vec<(String, usize)> {
    units(c)
        .iter()
        .flat_map(|u| (0..u.sublayers).map(move |i| (format!("{}.sub{i}.bn", u.prefix), u.sublayer(i).1)))
        .collect()
}

pub fn lstm_block_params(c: &ModelConfig, specs: &mut Vec<ParamSpec>) {
    let cin = c.trunk_width();
    let h = c.lstm_hidden;
    let wn = c.use_weight_norm;
    if c.use_lstm {
        for dir in ["fwd", "bwd"] {
            let p = format!("lstm.{dir}");
            weight(specs, &format!("{p}.w_ih"), vec![4 * h, cin], cin, wn);
            weight(specs, &format!("{p}.w_hh"), vec![4 * h, h], h, wn);
            specs.push(ParamSpec {
                name: format!("{p}.bias"),
                shape: vec![4 * h],
                init: Init::ForgetBias(h),
            });
        }
    }
    if c.use_residual_in_lstm_block {
        weight(specs, "head.res", vec![2 * h, cin, 1], cin, wn);
        bias(specs, "head.res", 2 * h);
    }
    weight(specs, "head.a", vec![c.head_width, 2 * h, 1], 2 * h, wn);
    bias(specs, "head.a", c.head_width);
    weight(specs, "head.b", vec![4, c.head_width, 1], c.head_width, wn);
    bias(specs, "head.b", 4);
}

/// Every learnable tensor in a fixed order (the order initial values are
/// drawn in).
pub fn param_specs(c: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    for u in units(c) {
        unit_params(&u, c.kernel_size, &mut specs);
    }
    lstm_block_params(c, &mut specs);
    specs
}

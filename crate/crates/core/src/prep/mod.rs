//! Turns 200 Hz raw records into fixed-length 50 Hz model inputs with
//! per-second target classes.

mod fir;
mod normalize;

use std::fs;
use std::path::Path;

use crate::container::{self, Manifest};
use crate::error::{format_err, invalid, Error, Result};
use crate::record::{RawRecord, RAW_SAMPLE_RATE, RECORD_FORMAT, RECORD_FORMAT_VERSION, SAO2, STANDARD_CHANNELS};
use crate::remap::{output_bin, OutputBin, TaskLabelTriple};

pub use fir::{
    default_kernel, design_antialias_fir, filter_decimate, filter_decimate_raw, FilterKernel, CUTOFF_3DB_HZ,
    DECIMATION, DEFAULT_TAPS,
};
pub use normalize::{moving_normalize, scale_sao2, window_bounds, MOVING_WINDOW_SAMPLES, RMS_FLOOR};

pub const PREPARED_RATE: usize = 50;
/// Seconds every prepared record is padded to (7 hours).
pub const FULL_NIGHT_SECONDS: usize = 7 * 3600;
pub const INPUT_CHANNELS: usize = 12;

/// Model input channels: every standard channel except ECG.
pub fn input_channel_names() -> &'static [&'static str] {
    &STANDARD_CHANNELS[..INPUT_CHANNELS]
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrepOptions {
    /// Length every record is zero-padded to.
    pub pad_seconds: usize,
    /// Moving-window standardization of the non-SaO2 channels.
    pub moving_normalization: bool,
    pub window: usize,
}

impl Default for PrepOptions {
    fn default() -> Self {
        Self {
            pad_seconds: FULL_NIGHT_SECONDS,
            moving_normalization: true,
            window: MOVING_WINDOW_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedRecord {
    pub source_id: String,
    /// `12 × pad_seconds·50` samples, stored in single precision.
    pub signals: Vec<Vec<f32>>,
    /// One class per second.
    pub bins: Vec<OutputBin>,
    pub valid_length_s: usize,
}

impl PreparedRecord {
    pub fn samples(&self) -> usize {
        self.signals.first().map_or(0, Vec::len)
    }

    pub fn seconds(&self) -> usize {
        self.bins.len()
    }

    /// Signals as a `12 × T` double-precision tensor.
    pub fn input_tensor(&self) -> autodiff::Tensor {
        let t = self.samples();
        let data = self.signals.iter().flat_map(|row| row.iter().map(|&v| v as f64)).collect();
        autodiff::Tensor::new(vec![self.signals.len(), t], data).expect("rectangular signals")
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.samples();
        if self.signals.len() != INPUT_CHANNELS || self.signals.iter().any(|r| r.len() != t) {
            return Err(invalid("prepared record must have 12 equal-length channels"));
        }
        if t != self.bins.len() * PREPARED_RATE {
            return Err(invalid(format!("{t} samples do not match {} labelled seconds", self.bins.len())));
        }
        if self.valid_length_s > self.bins.len() {
            return Err(invalid("valid length exceeds the padded length"));
        }
        if self.signals.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("prepared signals contain non-finite values"));
        }
        Ok(())
    }
}

/// Reduces 200 Hz label vectors to one triple per second: the centre sample
/// of each second, unless some sample of the second is a target arousal, in
/// which case the first such sample's triple is used.
pub fn downsample_labels(arousal: &[i8], apnea: &[i8], sleep: &[i8], rate: usize) -> Vec<TaskLabelTriple> {
    let n = arousal.len();
    (0..n.div_ceil(rate))
        .map(|s| {
            let start = s * rate;
            let end = (start + rate).min(n);
            let pick = (start..end)
                .find(|&i| arousal[i] == 1)
                .unwrap_or(start + (end - start) / 2);
            TaskLabelTriple::new(arousal[pick], apnea[pick], sleep[pick])
        })
        .collect()
}

pub fn record_label_triples(record: &RawRecord) -> Vec<TaskLabelTriple> {
    downsample_labels(&record.arousal, &record.apnea, &record.sleep, record.sample_rate as usize)
}

pub fn prepare_record(record: &RawRecord, opts: &PrepOptions) -> Result<PreparedRecord> {
    record.validate_standard()?;
    if record.sample_rate != RAW_SAMPLE_RATE {
        return Err(invalid(format!("expected {RAW_SAMPLE_RATE} Hz input, got {}", record.sample_rate)));
    }
    let valid_length_s = record.duration_samples().div_ceil(RAW_SAMPLE_RATE as usize);
    if valid_length_s > opts.pad_seconds {
        return Err(invalid(format!(
            "record {} lasts {valid_length_s} s, longer than the {} s input length",
            record.record_id, opts.pad_seconds
        )));
    }
    let total = opts.pad_seconds * PREPARED_RATE;
    let kernel = default_kernel();
    let mut signals = Vec::with_capacity(INPUT_CHANNELS);
    for &name in input_channel_names() {
        let raw: Vec<f64> = record.channel(name)?.iter().map(|&v| v as f64).collect();
        let processed = if name == SAO2 {
            scale_sao2(&filter_decimate_raw(&raw, &kernel, DECIMATION)?)?
        } else {
            let x = filter_decimate(&raw, &kernel, DECIMATION)?;
            if opts.moving_normalization {
                moving_normalize(&x, opts.window)?
            } else {
                x
            }
        };
        let mut row: Vec<f32> = processed.into_iter().map(|v| v as f32).collect();
        row.resize(total, 0.0);
        signals.push(row);
    }
    let mut bins = record_label_triples(record)
        .into_iter()
        .map(output_bin)
        .collect::<Result<Vec<_>>>()?;
    bins.resize(opts.pad_seconds, OutputBin::Ignore);
    let prepared = PreparedRecord {
        source_id: record.record_id.clone(),
        signals,
        bins,
        valid_length_s,
    };
    prepared.validate()?;
    Ok(prepared)
}

const BINS_FILE: &str = "bins.txt";

pub fn write_prepared(record: &PreparedRecord, dir: &Path) -> Result<()> {
    record.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut m = Manifest::new();
    m.push("format", format!("{RECORD_FORMAT} {RECORD_FORMAT_VERSION}"));
    m.push("record_id", &record.source_id);
    m.push("sample_rate", PREPARED_RATE);
    m.push("duration_samples", record.samples());
    m.push("prepared", "true");
    m.push("source_id", &record.source_id);
    m.push("valid_length_s", record.valid_length_s);
    for (i, (name, data)) in input_channel_names().iter().zip(&record.signals).enumerate() {
        let file = format!("ch{i:02}.f32");
        container::write_file(&dir.join(&file), &container::f32_to_bytes(data))?;
        m.push("channel", format!("{name} {file}"));
    }
    let codes: Vec<i8> = record.bins.iter().map(|b| b.code() as i8).collect();
    container::write_file(&dir.join(BINS_FILE), container::render_runs(&codes, 0).as_bytes())?;
    m.write(dir)
}

pub fn read_prepared(dir: &Path) -> Result<PreparedRecord> {
    let m = Manifest::read(dir)?;
    m.expect_format(RECORD_FORMAT, RECORD_FORMAT_VERSION)?;
    if m.get("prepared") != Some("true") {
        return Err(format_err(format!("{} is not a prepared record", dir.display())));
    }
    let rate: usize = m.parse("sample_rate")?;
    if rate != PREPARED_RATE {
        return Err(format_err(format!("prepared record at {rate} Hz, expected {PREPARED_RATE}")));
    }
    let t: usize = m.parse("duration_samples")?;
    if !t.is_multiple_of(PREPARED_RATE) {
        return Err(format_err("prepared length is not a whole number of seconds"));
    }
    let mut signals = Vec::with_capacity(INPUT_CHANNELS);
    for (line, expected) in m.get_all("channel").zip(input_channel_names()) {
        let (name, file) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| format_err(format!("bad channel line `{line}`")))?;
        if name != *expected {
            return Err(format_err(format!("channel {name} where {expected} was expected")));
        }
        let data = container::f32_from_bytes(&container::read_file(&dir.join(file.trim()))?)?;
        if data.len() != t {
            return Err(invalid(format!("channel {name} has {} samples, expected {t}", data.len())));
        }
        signals.push(data);
    }
    let path = dir.join(BINS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let codes = container::expand_runs(&text, t / PREPARED_RATE, 0, &[0, 1, 5, 7, 10], "bins")?;
    let bins = codes
        .into_iter()
        .map(|c| OutputBin::from_code(c as u8).expect("checked codes"))
        .collect();
    let record = PreparedRecord {
        source_id: m.require("source_id")?.to_string(),
        signals,
        bins,
        valid_length_s: m.parse("valid_length_s")?,
    };
    record.validate()?;
    Ok(record)
}

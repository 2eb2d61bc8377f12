//! Raw 200 Hz recordings, their annotations and the on-disk container.

mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::container::{self, Manifest};
use crate::error::{format_err, invalid, Error, Result};

pub use synth::{generate_synthetic, random_plan, PlanOptions, SignatureParams};

pub const RAW_SAMPLE_RATE: u32 = 200;
pub const RECORD_FORMAT: &str = "sleepnet-record";
pub const RECORD_FORMAT_VERSION: u32 = 1;

/// The thirteen recorded channels, in model input order (ECG last; it is
/// dropped during preparation).
pub const STANDARD_CHANNELS: [&str; 13] = [
    "F3-M2",
    "F4-M1",
    "C3-M2",
    "C4-M1",
    "O1-M2",
    "O2-M1",
    "E1-M2",
    "Chin1-Chin2",
    "ABD",
    "CHEST",
    "AIRFLOW",
    "SaO2",
    "ECG",
];
pub const SAO2: &str = "SaO2";
pub const ECG: &str = "ECG";

pub const AROUSAL_DEFAULT: i8 = 0;
pub const APNEA_DEFAULT: i8 = 0;
pub const SLEEP_DEFAULT: i8 = -1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Arousal,
    Apnea,
    Sleep,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Arousal, Task::Apnea, Task::Sleep];

    pub fn name(self) -> &'static str {
        match self {
            Task::Arousal => "arousal",
            Task::Apnea => "apnea",
            Task::Sleep => "sleep",
        }
    }

    pub fn allowed_values(self) -> &'static [i8] {
        match self {
            Task::Arousal | Task::Sleep => &[-1, 0, 1],
            Task::Apnea => &[0, 1],
        }
    }

    pub fn default_value(self) -> i8 {
        match self {
            Task::Arousal => AROUSAL_DEFAULT,
            Task::Apnea => APNEA_DEFAULT,
            Task::Sleep => SLEEP_DEFAULT,
        }
    }

    fn file_name(self) -> String {
        format!("{}.txt", self.name())
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arousal" => Ok(Task::Arousal),
            "apnea" => Ok(Task::Apnea),
            "sleep" => Ok(Task::Sleep),
            other => Err(format_err(format!("unknown task `{other}`"))),
        }
    }
}

/// Run of identical label values, `[start_sample, end_sample)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnnotationInterval {
    pub task: Task,
    pub start_sample: usize,
    pub end_sample: usize,
    pub value: i8,
}

impl AnnotationInterval {
    pub fn new(task: Task, start_sample: usize, end_sample: usize, value: i8) -> Self {
        Self {
            task,
            start_sample,
            end_sample,
            value,
        }
    }

    pub fn len(&self) -> usize {
        self.end_sample - self.start_sample
    }

    pub fn is_empty(&self) -> bool {
        self.end_sample <= self.start_sample
    }
}

/// Event plans are stored as lines `task start end value`.
pub fn parse_plan(text: &str) -> Result<Vec<AnnotationInterval>> {
    let mut plan = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || format_err(format!("plan line {}: expected `task start end value`", n + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        plan.push(AnnotationInterval {
            task: f[0].parse()?,
            start_sample: f[1].parse().map_err(|_| bad())?,
            end_sample: f[2].parse().map_err(|_| bad())?,
            value: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(plan)
}

pub fn render_plan(plan: &[AnnotationInterval]) -> String {
    plan.iter()
        .map(|i| format!("{} {} {} {}\n", i.task, i.start_sample, i.end_sample, i.value))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub record_id: String,
    pub sample_rate: u32,
    /// Channel name → samples; samples are kept in the on-disk precision so
    /// that a write/read cycle is exact.
    pub channels: BTreeMap<String, Vec<f32>>,
    pub arousal: Vec<i8>,
    pub apnea: Vec<i8>,
    pub sleep: Vec<i8>,
}

impl RawRecord {
    pub fn duration_samples(&self) -> usize {
        self.arousal.len()
    }

    pub fn labels(&self, task: Task) -> &[i8] {
        match task {
            Task::Arousal => &self.arousal,
            Task::Apnea => &self.apnea,
            Task::Sleep => &self.sleep,
        }
    }

    pub fn channel(&self, name: &str) -> Result<&[f32]> {
        self.channels
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| format_err(format!("record {} has no channel {name}", self.record_id)))
    }

    /// Length, label-domain and finiteness checks.
    pub fn validate(&self) -> Result<()> {
        let n = self.duration_samples();
        if self.channels.is_empty() {
            return Err(invalid("record has no channels"));
        }
        if self.sample_rate == 0 {
            return Err(invalid("sample rate must be positive"));
        }
        for task in Task::ALL {
            let labels = self.labels(task);
            if labels.len() != n {
                return Err(invalid(format!("{task} labels have {} samples, expected {n}", labels.len())));
            }
            if let Some(v) = labels.iter().find(|v| !task.allowed_values().contains(v)) {
                return Err(invalid(format!("{task} label {v} not in {:?}", task.allowed_values())));
            }
        }
        for (name, data) in &self.channels {
            if data.len() != n {
                return Err(invalid(format!("channel {name} has {} samples, expected {n}", data.len())));
            }
            if let Some(i) = data.iter().position(|v| !v.is_finite()) {
                return Err(invalid(format!("channel {name} sample {i} is not finite")));
            }
        }
        Ok(())
    }

    /// Requires exactly the thirteen standard channels.
    pub fn validate_standard(&self) -> Result<()> {
        self.validate()?;
        for name in STANDARD_CHANNELS {
            if !self.channels.contains_key(name) {
                return Err(invalid(format!("record {} lacks channel {name}", self.record_id)));
            }
        }
        if self.channels.len() != STANDARD_CHANNELS.len() {
            return Err(invalid(format!(
                "record {} has {} channels, expected the {} standard ones",
                self.record_id,
                self.channels.len(),
                STANDARD_CHANNELS.len()
            )));
        }
        Ok(())
    }

    /// Non-default runs of every task.
    pub fn intervals(&self) -> Vec<AnnotationInterval> {
        let mut out = Vec::new();
        for task in Task::ALL {
            let labels = self.labels(task);
            let mut i = 0;
            while i < labels.len() {
                let v = labels[i];
                let mut j = i + 1;
                while j < labels.len() && labels[j] == v {
                    j += 1;
                }
                if v != task.default_value() {
                    out.push(AnnotationInterval::new(task, i, j, v));
                }
                i = j;
            }
        }
        out
    }
}

fn channel_file(index: usize) -> String {
    format!("ch{index:02}.f32")
}

/// Writes the container: manifest, one `.f32` file per channel and one
/// interval file per task. Creates the directory if needed.
pub fn write_record(record: &RawRecord, dir: &Path) -> Result<()> {
    record.validate()?;
    if record.record_id.chars().any(char::is_whitespace) || record.record_id.is_empty() {
        return Err(invalid("record id must be a non-empty token without whitespace"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut m = Manifest::new();
    m.push("format", format!("{RECORD_FORMAT} {RECORD_FORMAT_VERSION}"));
    m.push("record_id", &record.record_id);
    m.push("sample_rate", record.sample_rate);
    m.push("duration_samples", record.duration_samples());
    m.push("prepared", "false");
    for (i, (name, data)) in record.channels.iter().enumerate() {
        if name.chars().any(char::is_whitespace) {
            return Err(invalid(format!("channel name `{name}` contains whitespace")));
        }
        let file = channel_file(i);
        container::write_file(&dir.join(&file), &container::f32_to_bytes(data))?;
        m.push("channel", format!("{name} {file}"));
    }
    for task in Task::ALL {
        let text = container::render_runs(record.labels(task), task.default_value());
        container::write_file(&dir.join(task.file_name()), text.as_bytes())?;
    }
    m.write(dir)
}

pub fn read_record(dir: &Path) -> Result<RawRecord> {
    let m = Manifest::read(dir)?;
    m.expect_format(RECORD_FORMAT, RECORD_FORMAT_VERSION)?;
    if m.get("prepared") == Some("true") {
        return Err(format_err(format!("{} holds a prepared record", dir.display())));
    }
    let n: usize = m.parse("duration_samples")?;
    let mut channels = BTreeMap::new();
    for line in m.get_all("channel") {
        let (name, file) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| format_err(format!("bad channel line `{line}`")))?;
        let path = dir.join(file.trim());
        if !path.is_file() {
            return Err(format_err(format!("missing channel file {}", path.display())));
        }
        let data = container::f32_from_bytes(&container::read_file(&path)?)?;
        if data.len() != n {
            return Err(invalid(format!("channel {name} has {} samples, manifest says {n}", data.len())));
        }
        channels.insert(name.to_string(), data);
    }
    let mut labels = Vec::with_capacity(3);
    for task in Task::ALL {
        let path = dir.join(task.file_name());
        let text = if path.exists() {
            fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?
        } else {
            String::new()
        };
        labels.push(container::expand_runs(&text, n, task.default_value(), task.allowed_values(), task.name())?);
    }
    let sleep = labels.pop().expect("three tasks");
    let apnea = labels.pop().expect("three tasks");
    let arousal = labels.pop().expect("three tasks");
    let record = RawRecord {
        record_id: m.require("record_id")?.to_string(),
        sample_rate: m.parse("sample_rate")?,
        channels,
        arousal,
        apnea,
        sleep,
    };
    record.validate()?;
    Ok(record)
}

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sleepnet::record::{
    generate_synthetic, random_plan, read_record, write_record, AnnotationInterval, PlanOptions, RawRecord, Task,
    RAW_SAMPLE_RATE, STANDARD_CHANNELS,
};
use sleepnet::remap::{full_index, TaskLabelTriple};
use sleepnet::Error;

fn random_labels(rng: &mut ChaCha8Rng, n: usize, allowed: &[i8]) -> Vec<i8> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = allowed[rng.random_range(0..allowed.len())];
        let run = rng.random_range(1..=40).min(n - out.len());
        out.extend(std::iter::repeat_n(v, run));
    }
    out
}

fn random_record(seed: u64, n: usize) -> RawRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels: BTreeMap<String, Vec<f32>> = ["C3-M2", "SaO2", "ECG"]
        .iter()
        .map(|name| {
            let data = (0..n).map(|_| rng.random_range(-1e4f32..1e4)).collect();
            (name.to_string(), data)
        })
        .collect();
    RawRecord {
        record_id: format!("rand{seed}"),
        sample_rate: RAW_SAMPLE_RATE,
        channels,
        arousal: random_labels(&mut rng, n, Task::Arousal.allowed_values()),
        apnea: random_labels(&mut rng, n, Task::Apnea.allowed_values()),
        sleep: random_labels(&mut rng, n, Task::Sleep.allowed_values()),
    }
}

fn standard_record(n: usize) -> RawRecord {
    RawRecord {
        record_id: "std".to_string(),
        sample_rate: RAW_SAMPLE_RATE,
        channels: STANDARD_CHANNELS
            .iter()
            .map(|c| (c.to_string(), (0..n).map(|i| (i as f32 * 0.1).sin()).collect()))
            .collect(),
        arousal: vec![0; n],
        apnea: vec![0; n],
        sleep: vec![-1; n],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn write_then_read_is_identity(seed in any::<u64>(), n in 1usize..600) {
        let dir = tempfile::tempdir().unwrap();
        let rec = random_record(seed, n);
        write_record(&rec, dir.path()).unwrap();
        let back = read_record(dir.path()).unwrap();
        prop_assert_eq!(&back, &rec);
        for (name, data) in &rec.channels {
            let bits: Vec<u32> = data.iter().map(|v| v.to_bits()).collect();
            let back_bits: Vec<u32> = back.channels[name].iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(bits, back_bits);
        }
    }

    #[test]
    fn intervals_expand_back_to_labels(seed in any::<u64>(), n in 1usize..400) {
        let rec = random_record(seed, n);
        let mut rebuilt: BTreeMap<Task, Vec<i8>> =
            Task::ALL.iter().map(|&t| (t, vec![t.default_value(); n])).collect();
        for iv in rec.intervals() {
            prop_assert!(iv.start_sample < iv.end_sample && iv.end_sample <= n);
            prop_assert_ne!(iv.value, iv.task.default_value());
            rebuilt.get_mut(&iv.task).unwrap()[iv.start_sample..iv.end_sample].fill(iv.value);
        }
        for task in Task::ALL {
            prop_assert_eq!(&rebuilt[&task], &rec.labels(task).to_vec());
        }
    }
}

#[test]
fn thirteen_channels_without_intervals_default_fill() {
    let dir = tempfile::tempdir().unwrap();
    let rec = standard_record(1000);
    write_record(&rec, dir.path()).unwrap();
    for task in ["arousal", "apnea", "sleep"] {
        fs::write(dir.path().join(format!("{task}.txt")), "").unwrap();
    }
    let back = read_record(dir.path()).unwrap();
    back.validate_standard().unwrap();
    assert_eq!(back.duration_samples(), 1000);
    assert!(back.sleep.iter().all(|&v| v == -1));
    assert!(back.arousal.iter().all(|&v| v == 0));
    assert!(back.apnea.iter().all(|&v| v == 0));
}

#[test]
fn arousal_interval_expands_over_its_span() {
    let dir = tempfile::tempdir().unwrap();
    write_record(&standard_record(1000), dir.path()).unwrap();
    fs::write(dir.path().join("arousal.txt"), "100 200 1\n").unwrap();
    let back = read_record(dir.path()).unwrap();
    assert_eq!(back.arousal[99], 0);
    assert_eq!(back.arousal[100], 1);
    assert_eq!(back.arousal[150], 1);
    assert_eq!(back.arousal[199], 1);
    assert_eq!(back.arousal[200], 0);
}

#[test]
fn two_second_record_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mut rec = standard_record(2 * RAW_SAMPLE_RATE as usize);
    rec.sleep[50..300].fill(1);
    rec.arousal[120..180].fill(1);
    write_record(&rec, dir.path()).unwrap();
    assert_eq!(read_record(dir.path()).unwrap(), rec);
}

#[test]
fn malformed_containers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_record(&standard_record(400), dir.path()).unwrap();

    fs::write(dir.path().join("apnea.txt"), "300 401 1\n").unwrap();
    assert!(matches!(read_record(dir.path()), Err(Error::Validation(_))));
    fs::write(dir.path().join("apnea.txt"), "").unwrap();

    let ch = dir.path().join("ch03.f32");
    let bytes = fs::read(&ch).unwrap();
    fs::write(&ch, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(read_record(dir.path()), Err(Error::Validation(_))));

    fs::remove_file(&ch).unwrap();
    assert!(matches!(read_record(dir.path()), Err(Error::Format(_))));
}

#[test]
fn nan_sample_is_not_written() {
    let dir = tempfile::tempdir().unwrap();
    let mut rec = standard_record(100);
    rec.channels.get_mut("SaO2").unwrap()[7] = f32::NAN;
    assert!(write_record(&rec, dir.path()).unwrap_err().is_validation());
    assert!(!dir.path().join("manifest").exists());
}

// Four bytes per sample per channel, plus small label and manifest files.
#[test]
fn on_disk_size_follows_sample_count() {
    let n = 3000;
    let dir = tempfile::tempdir().unwrap();
    write_record(&standard_record(n), dir.path()).unwrap();
    let mut channel_bytes = 0;
    let mut other_bytes = 0;
    for entry in fs::read_dir(dir.path()).unwrap() {
        let entry = entry.unwrap();
        let len = entry.metadata().unwrap().len();
        if entry.path().extension().is_some_and(|e| e == "f32") {
            assert_eq!(len, 4 * n as u64);
            channel_bytes += len;
        } else {
            other_bytes += len;
        }
    }
    assert_eq!(channel_bytes, 13 * n as u64 * 4);
    assert!(other_bytes < 4096);
    let night = 7 * 3600 * RAW_SAMPLE_RATE as u64;
    assert_eq!(night, 5_040_000);
    assert_eq!(13 * night * 4, 262_080_000);
}

#[test]
fn generator_is_deterministic() {
    let plan = random_plan(5, 300, &PlanOptions::default());
    let a = generate_synthetic(42, 300, &plan).unwrap();
    let b = generate_synthetic(42, 300, &plan).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(43, 300, &plan).unwrap();
    assert_ne!(a.channels, c.channels);
    a.validate_standard().unwrap();
}

#[test]
fn apnea_while_awake_is_rejected() {
    let fs = RAW_SAMPLE_RATE as usize;
    let plan = vec![
        AnnotationInterval::new(Task::Sleep, 0, 60 * fs, 0),
        AnnotationInterval::new(Task::Apnea, 10 * fs, 30 * fs, 1),
    ];
    assert!(generate_synthetic(1, 60, &plan).unwrap_err().is_validation());
}

#[test]
fn target_arousal_while_awake_is_rejected() {
    let fs = RAW_SAMPLE_RATE as usize;
    let plan = vec![
        AnnotationInterval::new(Task::Sleep, 0, 60 * fs, 0),
        AnnotationInterval::new(Task::Arousal, 10 * fs, 20 * fs, 1),
    ];
    assert!(generate_synthetic(1, 60, &plan).is_err());
}

// Full label-combination indices reachable from a consistent night: the
// undefined prefix plus the six sleep-defined combinations.
#[test]
fn generated_labels_cover_exactly_the_consistent_combinations() {
    let mut seen = BTreeSet::new();
    for i in 0..100u64 {
        let duration = 600;
        let plan = random_plan(1000 + i, duration, &PlanOptions::default());
        let rec = generate_synthetic(i, duration, &plan).unwrap();
        for s in 0..rec.duration_samples() {
            let t = TaskLabelTriple::new(rec.arousal[s], rec.apnea[s], rec.sleep[s]);
            seen.insert(full_index(t).expect("generator emits only non-empty combinations"));
        }
    }
    let undefined_prefix = full_index(TaskLabelTriple::new(0, 0, -1)).unwrap();
    let mut expected: BTreeSet<usize> = [(-1, 0, 0), (-1, 0, 1), (-1, 1, 0), (-1, 1, 1), (0, 0, 1), (1, 0, 1)]
        .iter()
        .map(|&(a, p, s)| full_index(TaskLabelTriple::new(a, p, s)).unwrap())
        .collect();
    expected.insert(undefined_prefix);
    assert_eq!(seen, expected);
}

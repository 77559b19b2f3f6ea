//! Smartphone human-activity windows in the published text layout:
//!
//! ```text
//! <root>/train/Inertial Signals/<signal>_train.txt   one window per line
//! <root>/train/y_train.txt                           one label (1..=6) per line
//! <root>/test/...                                    same with _test
//! ```
//!
//! Channels are stacked in the fixed order of [`CHANNELS`].

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHANNELS: [&str; 9] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];

pub const ACTIVITIES: [&str; 6] = [
    "walking",
    "walking_upstairs",
    "walking_downstairs",
    "sitting",
    "standing",
    "laying",
];

pub const TRAIN_COUNT: usize = 7352;
pub const TEST_COUNT: usize = 2947;

#[derive(Clone, Debug, PartialEq)]
pub struct HarSample {
    /// `[T_w, C]`, one row per timestep.
    pub signal: Tensor,
    /// Zero-based activity index into [`ACTIVITIES`].
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarData {
    pub train: Vec<HarSample>,
    pub test: Vec<HarSample>,
    pub window: usize,
    pub channels: usize,
}

/// Per-channel mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn split_paths(root: &Path, split: &str) -> (Vec<PathBuf>, PathBuf) {
    let dir = root.join(split);
    let signals = CHANNELS
        .iter()
        .map(|c| dir.join("Inertial Signals").join(format!("{c}_{split}.txt")))
        .collect();
    (signals, dir.join(format!("y_{split}.txt")))
}

/// Every file the loader reads under `root`.
pub fn expected_paths(root: &Path) -> Vec<PathBuf> {
    ["train", "test"]
        .iter()
        .flat_map(|s| {
            let (mut files, labels) = split_paths(root, s);
            files.push(labels);
            files
        })
        .collect()
}

fn parse_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::parse(format!("{}:{}", path.display(), i + 1), e))
                })
                .collect()
        })
        .collect()
}

/// Loads one split without checking the published sample counts.
pub fn load_split(root: &Path, split: &str) -> Result<Vec<HarSample>> {
    let (signal_paths, label_path) = split_paths(root, split);
    let labels: Vec<usize> = parse_rows(&label_path)?
        .into_iter()
        .enumerate()
        .map(|(i, row)| match row.as_slice() {
            [v] if v.fract() == 0.0 && (1.0..=6.0).contains(v) => Ok(*v as usize - 1),
            _ => Err(Error::parse(
                format!("{}:{}", label_path.display(), i + 1),
                "expected one label in 1..=6",
            )),
        })
        .collect::<Result<_>>()?;
    let channels = signal_paths
        .iter()
        .map(|p| parse_rows(p))
        .collect::<Result<Vec<_>>>()?;
    let window = channels[0].first().map_or(0, Vec::len);
    for (c, rows) in channels.iter().enumerate() {
        if rows.len() != labels.len() || rows.iter().any(|r| r.len() != window) {
            return Err(Error::Integrity(format!(
                "{} has {} rows (labels: {}); every row must hold {window} values",
                signal_paths[c].display(),
                rows.len(),
                labels.len()
            )));
        }
    }
    labels
        .iter()
        .enumerate()
        .map(|(n, &label)| {
            let mut data = Vec::with_capacity(window * CHANNELS.len());
            for t in 0..window {
                data.extend(channels.iter().map(|rows| rows[n][t]));
            }
            let signal = Tensor::matrix(window, CHANNELS.len(), data)?;
            if !signal.is_finite() {
                return Err(Error::Integrity(format!("{split} sample {n} has non-finite values")));
            }
            Ok(HarSample { signal, label })
        })
        .collect()
}

/// Loads both splits without checking the published sample counts.
pub fn load_har_unchecked(root: &Path) -> Result<HarData> {
    let missing: Vec<PathBuf> = expected_paths(root).into_iter().filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingData {
            root: root.to_path_buf(),
            missing,
        });
    }
    let train = load_split(root, "train")?;
    let test = load_split(root, "test")?;
    let window = train.first().map_or(0, |s| s.signal.rows());
    if test.iter().any(|s| s.signal.rows() != window) {
        return Err(Error::Integrity("train and test windows differ in length".into()));
    }
    Ok(HarData {
        train,
        test,
        window,
        channels: CHANNELS.len(),
    })
}

/// Loads the published dataset and checks its 7352 / 2947 split sizes.
pub fn load_har(root: &Path) -> Result<HarData> {
    let data = load_har_unchecked(root)?;
    if data.train.len() != TRAIN_COUNT || data.test.len() != TEST_COUNT {
        return Err(Error::Integrity(format!(
            "expected {TRAIN_COUNT} train and {TEST_COUNT} test windows, found {} and {}",
            data.train.len(),
            data.test.len()
        )));
    }
    Ok(data)
}

impl HarData {
    pub fn channel_stats(samples: &[HarSample]) -> ChannelStats {
        let c = samples.first().map_or(0, |s| s.signal.cols());
        let mut sum = vec![0.0; c];
        let mut sq = vec![0.0; c];
        let mut n = 0usize;
        for s in samples {
            for row in s.signal.data().chunks(c) {
                for (k, v) in row.iter().enumerate() {
                    sum[k] += v;
                    sq[k] += v * v;
                }
                n += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n.max(1) as f64 - m * m).max(0.0);
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        ChannelStats { mean, std }
    }

    /// Zero-mean, unit-variance channels using statistics of the train split only.
    pub fn standardize(&mut self) -> ChannelStats {
        let stats = Self::channel_stats(&self.train);
        for s in self.train.iter_mut().chain(self.test.iter_mut()) {
            let c = s.signal.cols();
            for row in s.signal.data_mut().chunks_mut(c) {
                for (k, v) in row.iter_mut().enumerate() {
                    *v = (*v - stats.mean[k]) / stats.std[k];
                }
            }
        }
        stats
    }

    pub fn class_counts(samples: &[HarSample]) -> [usize; 6] {
        let mut counts = [0; 6];
        for s in samples {
            counts[s.label] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(root: &Path, split: &str, labels: &[usize], window: usize) {
        let dir = root.join(split).join("Inertial Signals");
        std::fs::create_dir_all(&dir).unwrap();
        for (c, name) in CHANNELS.iter().enumerate() {
            let rows: Vec<String> = (0..labels.len())
                .map(|n| {
                    (0..window)
                        .map(|t| format!("{:e}", (c * 100 + n * 10 + t) as f64))
                        .collect::<Vec<_>>()
                        .join("  ")
                })
                .collect();
            std::fs::write(dir.join(format!("{name}_{split}.txt")), rows.join("\n")).unwrap();
        }
        let y: Vec<String> = labels.iter().map(|l| format!("{l}")).collect();
        std::fs::write(root.join(split).join(format!("y_{split}.txt")), y.join("\n")).unwrap();
    }

    #[test]
    fn empty_directory_lists_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        match load_har(dir.path()).unwrap_err() {
            Error::MissingData { missing, .. } => assert_eq!(missing.len(), 20),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn fixture_loads_in_channel_order() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "train", &[1, 6, 3], 4);
        write_fixture(dir.path(), "test", &[2], 4);
        let data = load_har_unchecked(dir.path()).unwrap();
        assert_eq!((data.train.len(), data.test.len()), (3, 1));
        assert_eq!((data.window, data.channels), (4, 9));
        assert_eq!(data.train[1].label, 5);
        assert_eq!(data.test[0].label, 1);
        let s = &data.train[2].signal;
        assert_eq!(s.shape(), &[4, 9]);
        // channel c, sample n, step t holds c * 100 + n * 10 + t
        assert_eq!(s.at(3, 4), 423.0);
        assert_eq!(HarData::class_counts(&data.train).iter().sum::<usize>(), 3);
        assert!(matches!(load_har(dir.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn bad_label_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "train", &[7], 2);
        write_fixture(dir.path(), "test", &[1], 2);
        assert!(matches!(load_har_unchecked(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn standardize_uses_train_statistics() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "train", &[1, 2, 3, 4], 5);
        write_fixture(dir.path(), "test", &[5, 6], 5);
        let mut data = load_har_unchecked(dir.path()).unwrap();
        data.standardize();
        let after = HarData::channel_stats(&data.train);
        for c in 0..9 {
            assert!(after.mean[c].abs() < 1e-12);
            assert!((after.std[c] - 1.0).abs() < 1e-12);
        }
        let test_stats = HarData::channel_stats(&data.test);
        assert!(test_stats.mean[0] < -0.5);
    }
}

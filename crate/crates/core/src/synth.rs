//! Synthetic sequence-regression data with input-dependent latent depth.
//!
//! Each sequence follows a 2-D latent state. At step `t` the latent state is
//! pushed through `R_t` noisy rotations, where `R_t` grows with the squared
//! norm of the previous state, and the observation is scaled by `R_t / R_max`:
//!
//! ```text
//! h_0 ~ U[-1, 1]^2
//! R_t = round((R_max - 1) * ||h_{t-1}||²) + 1          (ties away from zero)
//! h_t^r = tanh(Rot(θ) h_t^{r-1} + n_r),  n_r ~ N(0, 0.1 I),  r = 1..R_t
//! x_t = (R_t / R_max) [tanh(h_t(1) + h_t(2)); tanh(h_t(1) - h_t(2))]
//! ```
//!
//! `R_t` is not clamped: since `||h||²` can reach 2, depths up to
//! `2 (R_max - 1) + 1` occur, and `|x_t|` is bounded by `R_t / R_max` only.
//!
//! Draw order per sample (stream `Rng::derive(seed, sample_index)`): the two
//! components of `h_0`, then for every micro-step the two noise components.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Variance of the rotation noise at the default `noise_sigma`.
const BASE_NOISE_VARIANCE: f64 = 0.1;
const DEFAULT_NOISE: f64 = 0.1;
const MAGIC: &str = "# eirehn-synth 1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub t: usize,
    pub r_max: usize,
    pub theta: f64,
    /// Noise level; the per-component standard deviation is
    /// `sqrt(0.1) * noise_sigma / 0.1`, so the default reproduces `N(0, 0.1 I)`.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            t: 21,
            r_max: 10,
            theta: std::f64::consts::FRAC_PI_6,
            noise_sigma: DEFAULT_NOISE,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 || self.r_max == 0 {
            return Err(Error::Config("N, T and R_max must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.theta.is_finite() {
            return Err(Error::Config(
                "noise_sigma must be non-negative and theta finite".into(),
            ));
        }
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        BASE_NOISE_VARIANCE.sqrt() * self.noise_sigma / DEFAULT_NOISE
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub xs: Vec<[f64; 2]>,
    /// Latent depths `R_t`, kept for diagnostics only.
    pub depths: Vec<usize>,
    /// Latent states `h_t`, kept for diagnostics only.
    pub hidden: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub samples: Vec<SequenceSample>,
}

/// Depth for a latent state. `f64::round` rounds ties away from zero.
pub fn latent_depth(h: [f64; 2], r_max: usize) -> usize {
    let sq = h[0] * h[0] + h[1] * h[1];
    ((r_max - 1) as f64 * sq).round() as usize + 1
}

pub fn rotate(theta: f64, h: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * h[0] - s * h[1], s * h[0] + c * h[1]]
}

pub fn observe(h: [f64; 2], depth: usize, r_max: usize) -> [f64; 2] {
    let scale = depth as f64 / r_max as f64;
    [scale * (h[0] + h[1]).tanh(), scale * (h[0] - h[1]).tanh()]
}

/// Advances the latent state by one observed step from `h_prev`.
pub fn advance(cfg: &SynthConfig, h_prev: [f64; 2], rng: &mut Rng) -> ([f64; 2], usize) {
    let depth = latent_depth(h_prev, cfg.r_max);
    let std = cfg.noise_std();
    let mut h = h_prev;
    for _ in 0..depth {
        let n0 = std * rng.normal();
        let n1 = std * rng.normal();
        let rot = rotate(cfg.theta, h);
        h = [(rot[0] + n0).tanh(), (rot[1] + n1).tanh()];
    }
    (h, depth)
}

pub fn generate_sample(cfg: &SynthConfig, index: usize) -> SequenceSample {
    let mut rng = Rng::derive(cfg.seed, index as u64);
    let mut h = [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)];
    let mut sample = SequenceSample {
        xs: Vec::with_capacity(cfg.t),
        depths: Vec::with_capacity(cfg.t),
        hidden: Vec::with_capacity(cfg.t),
    };
    for _ in 0..cfg.t {
        let (next, depth) = advance(cfg, h, &mut rng);
        h = next;
        sample.xs.push(observe(h, depth, cfg.r_max));
        sample.depths.push(depth);
        sample.hidden.push(h);
    }
    sample
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    Ok(SynthDataset {
        config: *cfg,
        samples: (0..cfg.n).map(|i| generate_sample(cfg, i)).collect(),
    })
}

/// Splits in generation order into (train, validation, test).
pub fn split(
    samples: &[SequenceSample],
    sizes: (usize, usize, usize),
) -> Result<(Vec<SequenceSample>, Vec<SequenceSample>, Vec<SequenceSample>)> {
    let (a, b, c) = sizes;
    if a + b + c != samples.len() {
        return Err(Error::Config(format!(
            "split sizes {a}+{b}+{c} do not add up to {}",
            samples.len()
        )));
    }
    Ok((
        samples[..a].to_vec(),
        samples[a..a + b].to_vec(),
        samples[a + b..].to_vec(),
    ))
}

/// Sizes for an 80/10/10 split; the remainder of the rounding goes to train.
pub fn default_split_sizes(n: usize) -> (usize, usize, usize) {
    let val = n / 10;
    let test = n / 10;
    (n - val - test, val, test)
}

/// Next-step prediction pairs: inputs `x_1..x_{T-1}` and targets
/// `x_2..x_T` as a `[T-1, 2]` tensor.
pub fn regression_pairs(sample: &SequenceSample) -> Result<(Vec<[f64; 2]>, Tensor)> {
    let t = sample.xs.len();
    if t < 2 {
        return Err(Error::Config(format!(
            "next-step regression needs T >= 2, got {t}"
        )));
    }
    let inputs = sample.xs[..t - 1].to_vec();
    let targets = sample.xs[1..].iter().flat_map(|x| x.iter().copied()).collect();
    Ok((inputs, Tensor::matrix(t - 1, 2, targets)?))
}

impl SynthDataset {
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(
            out,
            "# n={} t={} r_max={} theta={:.17e} noise_sigma={:.17e} seed={}",
            c.n, c.t, c.r_max, c.theta, c.noise_sigma, c.seed
        )
        .unwrap();
        writeln!(out, "sample t depth x0 x1 h0 h1").unwrap();
        for (i, s) in self.samples.iter().enumerate() {
            for t in 0..s.xs.len() {
                writeln!(
                    out,
                    "{i} {} {} {:.17e} {:.17e} {:.17e} {:.17e}",
                    t + 1,
                    s.depths[t],
                    s.xs[t][0],
                    s.xs[t][1],
                    s.hidden[t][0],
                    s.hidden[t][1]
                )
                .unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::parse("synthetic dataset", "missing header"));
        }
        let cfg_line = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| Error::parse("synthetic dataset", "missing config line"))?;
        let mut cfg = SynthConfig::default();
        for kv in cfg_line.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::parse("synthetic dataset config", kv))?;
            let bad = |e: &dyn std::fmt::Display| Error::parse("synthetic dataset config", format!("{k}: {e}"));
            match k {
                "n" => cfg.n = v.parse().map_err(|e| bad(&e))?,
                "t" => cfg.t = v.parse().map_err(|e| bad(&e))?,
                "r_max" => cfg.r_max = v.parse().map_err(|e| bad(&e))?,
                "theta" => cfg.theta = v.parse().map_err(|e| bad(&e))?,
                "noise_sigma" => cfg.noise_sigma = v.parse().map_err(|e| bad(&e))?,
                "seed" => cfg.seed = v.parse().map_err(|e| bad(&e))?,
                _ => return Err(bad(&"unknown key")),
            }
        }
        lines.next();
        let mut samples: Vec<SequenceSample> = Vec::with_capacity(cfg.n);
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ctx = || format!("synthetic dataset row {}", lineno + 1);
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 7 {
                return Err(Error::parse(ctx(), "expected 7 columns"));
            }
            let idx: usize = f[0].parse().map_err(|e| Error::parse(ctx(), e))?;
            let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(ctx(), e));
            if idx == samples.len() {
                samples.push(SequenceSample {
                    xs: Vec::new(),
                    depths: Vec::new(),
                    hidden: Vec::new(),
                });
            } else if idx + 1 != samples.len() {
                return Err(Error::parse(ctx(), "samples out of order"));
            }
            let s = samples.last_mut().unwrap();
            s.depths.push(f[2].parse().map_err(|e| Error::parse(ctx(), e))?);
            s.xs.push([num(f[3])?, num(f[4])?]);
            s.hidden.push([num(f[5])?, num(f[6])?]);
        }
        if samples.len() != cfg.n || samples.iter().any(|s| s.xs.len() != cfg.t) {
            return Err(Error::Integrity(format!(
                "dataset header promises {} x {} steps",
                cfg.n, cfg.t
            )));
        }
        Ok(Self {
            config: cfg,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_state_without_noise_stays_zero() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let (h, depth) = advance(&cfg, [0.0, 0.0], &mut Rng::new(0));
        assert_eq!(depth, 1);
        assert_eq!(h, [0.0, 0.0]);
        assert_eq!(observe(h, depth, cfg.r_max), [0.0, 0.0]);
    }

    #[test]
    fn unit_state_without_noise_matches_scripted_oracle() {
        // Values from a standalone script iterating h <- tanh(Rot(pi/6) h)
        // ten times from (1, 0).
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            ..SynthConfig::default()
        };
        let (h, depth) = advance(&cfg, [1.0, 0.0], &mut Rng::new(0));
        assert_eq!(depth, 10);
        let x = observe(h, depth, cfg.r_max);
        let expect_h = [0.212_530_531_050_260_4, -0.346_345_898_934_444_2];
        let expect_x = [-0.133_022_323_696_997_12, 0.507_143_314_373_532_7];
        for i in 0..2 {
            assert!((h[i] - expect_h[i]).abs() < 1e-12, "{h:?}");
            assert!((x[i] - expect_x[i]).abs() < 1e-12, "{x:?}");
        }
    }

    #[test]
    fn rounding_ties_go_up() {
        // (3 - 1) * 0.25 = 0.5 exactly, rounds to 1.
        assert_eq!(latent_depth([0.5, 0.0], 3), 2);
        // 4 * 0.625 = 2.5 exactly, rounds to 3.
        assert_eq!(latent_depth([0.75, 0.25], 5), 4);
        assert_eq!(latent_depth([0.0, 0.0], 10), 1);
        assert_eq!(latent_depth([1.0, 0.0], 10), 10);
        assert_eq!(latent_depth([0.5, 0.5], 3), 2);
    }

    #[test]
    fn rotation_is_orthonormal() {
        for k in 0..12 {
            let theta = k as f64 * 0.37;
            let h = [0.3, -0.8];
            let r = rotate(theta, h);
            let n0 = h[0] * h[0] + h[1] * h[1];
            let n1 = r[0] * r[0] + r[1] * r[1];
            assert!((n0 - n1).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_and_order_independent() {
        let cfg = SynthConfig {
            n: 20,
            seed: 5,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(generate_sample(&cfg, 13), a.samples[13]);
        let other = generate(&SynthConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a.samples[0], other.samples[0]);
    }

    #[test]
    fn observations_bounded_by_depth_ratio() {
        let cfg = SynthConfig {
            n: 200,
            seed: 1,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        for s in &data.samples {
            for (x, &d) in s.xs.iter().zip(&s.depths) {
                assert!(d >= 1 && d <= 2 * (cfg.r_max - 1) + 1);
                let bound = d as f64 / cfg.r_max as f64;
                assert!(x[0].abs() <= bound && x[1].abs() <= bound);
            }
        }
    }

    #[test]
    fn split_sizes() {
        let data = generate(&SynthConfig {
            n: 30,
            ..SynthConfig::default()
        })
        .unwrap();
        let (a, b, c) = split(&data.samples, (24, 3, 3)).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (24, 3, 3));
        assert_eq!(c[2], data.samples[29]);
        let (all, none, _) = split(&data.samples, (30, 0, 0)).unwrap();
        assert_eq!((all.len(), none.len()), (30, 0));
        assert!(split(&data.samples, (10, 10, 5)).is_err());
        assert_eq!(default_split_sizes(10_000), (8000, 1000, 1000));
    }

    #[test]
    fn regression_pairs_shape() {
        let data = generate(&SynthConfig {
            n: 1,
            ..SynthConfig::default()
        })
        .unwrap();
        let (inputs, targets) = regression_pairs(&data.samples[0]).unwrap();
        assert_eq!(inputs.len(), 20);
        assert_eq!(targets.shape(), &[20, 2]);
        assert_eq!(targets.at(0, 1), data.samples[0].xs[1][1]);
        let short = SequenceSample {
            xs: vec![[0.0, 0.0]],
            depths: vec![1],
            hidden: vec![[0.0, 0.0]],
        };
        assert!(regression_pairs(&short).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let data = generate(&SynthConfig {
            n: 7,
            t: 5,
            seed: 99,
            ..SynthConfig::default()
        })
        .unwrap();
        let back = SynthDataset::from_text(&data.to_text()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            SynthConfig { n: 0, ..SynthConfig::default() },
            SynthConfig { t: 0, ..SynthConfig::default() },
            SynthConfig { r_max: 0, ..SynthConfig::default() },
            SynthConfig { noise_sigma: -1.0, ..SynthConfig::default() },
        ] {
            assert!(generate(&cfg).is_err());
        }
    }
}

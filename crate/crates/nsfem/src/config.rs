//! Experiment configuration: a plain key=value file format with `#` comments,
//! hard errors on unknown keys (with a nearest-key suggestion), and validated
//! defaults so a minimal file is enough to run.

use crate::femspace::ElementPair;
use crate::twolevel::FineLevelRule;
use crate::{Error, Result};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Galerkin,
    TwoLevel,
    ConvergenceStudy,
    SingularityStudy,
    Comparison,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Galerkin => "galerkin",
            Mode::TwoLevel => "two-level",
            Mode::ConvergenceStudy => "convergence-study",
            Mode::SingularityStudy => "singularity-study",
            Mode::Comparison => "comparison",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtRule {
    /// dt = min(h^2/4, t_final/64) with h the finest mesh size of the run.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixture {
    Smooth,
    Nonsmooth,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub nu: f64,
    pub element: ElementPair,
    pub n_coarse: usize,
    pub fine_levels: usize,
    pub coupling: FineLevelRule,
    pub t_final: f64,
    pub dt: DtRule,
    pub fixture: Fixture,
    /// Empty means "sample at t_final only".
    pub sample_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub deterministic: bool,
    /// Concurrent study cells; 0 means one per available core.
    pub jobs: usize,
}

impl ExperimentConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            nu: 1.0,
            element: ElementPair::Mini,
            n_coarse: 4,
            fine_levels: 2,
            coupling: FineLevelRule::HSquared,
            t_final: 1.0,
            dt: DtRule::Auto,
            fixture: Fixture::Smooth,
            sample_times: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            deterministic: false,
            jobs: 1,
        }
    }

    pub fn effective_sample_times(&self) -> Vec<f64> {
        if self.sample_times.is_empty() {
            vec![self.t_final]
        } else {
            self.sample_times.clone()
        }
    }

    /// Resolves the dt rule against a mesh size.
    pub fn dt_for(&self, finest_h: f64) -> f64 {
        match self.dt {
            DtRule::Fixed(v) => v,
            DtRule::Auto => (finest_h * finest_h / 4.0).min(self.t_final / 64.0),
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        let fail = |key: &str, why: String| {
            Err(Error::Config(format!("{path}: invalid `{key}`: {why}")))
        };
        if !self.nu.is_finite() || self.nu <= 0.0 {
            return fail("nu", format!("must be positive, got {}", self.nu));
        }
        if self.n_coarse == 0 {
            return fail("n_coarse", "must be at least 1".into());
        }
        if !self.t_final.is_finite() || self.t_final < 0.0 {
            return fail("t_final", format!("must be nonnegative, got {}", self.t_final));
        }
        if self.t_final == 0.0 && self.mode != Mode::Galerkin {
            return fail("t_final", "zero is only meaningful in galerkin mode".into());
        }
        if let DtRule::Fixed(v) = self.dt {
            if !v.is_finite() || v <= 0.0 {
                return fail("dt", format!("must be positive or `auto`, got {v}"));
            }
        }
        for &t in &self.sample_times {
            if !t.is_finite() || t < 0.0 || t > self.t_final {
                return fail(
                    "sample_times",
                    format!("time {t} outside [0, t_final = {}]", self.t_final),
                );
            }
        }
        if let FineLevelRule::Explicit(k) = self.coupling {
            if k > self.fine_levels {
                return fail(
                    "coupling",
                    format!("explicit level {k} exceeds fine_levels = {}", self.fine_levels),
                );
            }
        }
        if self.fixture == Fixture::Nonsmooth && self.mode != Mode::SingularityStudy {
            return fail(
                "fixture",
                "nonsmooth has no closed form; it is only usable in \
                 singularity-study mode (self-convergence)"
                    .into(),
            );
        }
        if self.mode == Mode::SingularityStudy && self.fine_levels == 0 {
            return fail(
                "fine_levels",
                "singularity-study needs at least one level beyond the \
                 reference mesh"
                    .into(),
            );
        }
        Ok(())
    }
}

const KNOWN_KEYS: &[&str] = &[
    "mode",
    "nu",
    "viscosity",
    "element",
    "n_coarse",
    "fine_levels",
    "coupling",
    "t_final",
    "dt",
    "fixture",
    "sample_times",
    "output_dir",
    "seed",
    "deterministic",
];

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn suggest(key: &str) -> String {
    let best = KNOWN_KEYS
        .iter()
        .map(|k| (levenshtein(key, k), *k))
        .min()
        .unwrap();
    if best.0 <= 3 {
        format!("; did you mean `{}`?", best.1)
    } else {
        String::new()
    }
}

fn normalize(word: &str) -> String {
    word.trim().to_ascii_lowercase().replace('_', "-")
}

pub fn parse_config_str(text: &str, path: &str) -> Result<ExperimentConfig> {
    let mut mode: Option<Mode> = None;
    let mut cfg = ExperimentConfig::with_mode(Mode::Galerkin);
    let bad = |line_no: usize, key: &str, why: String| {
        Error::Config(format!("{path}:{line_no}: bad value for `{key}`: {why}"))
    };
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key_raw, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{path}:{line_no}: expected `key = value`, got `{line}`"
            )));
        };
        let key = key_raw.trim().to_ascii_lowercase();
        let value = value.trim();
        match key.as_str() {
            "mode" => {
                mode = Some(match normalize(value).as_str() {
                    "galerkin" => Mode::Galerkin,
                    "two-level" => Mode::TwoLevel,
                    "convergence-study" => Mode::ConvergenceStudy,
                    "singularity-study" => Mode::SingularityStudy,
                    "comparison" => Mode::Comparison,
                    other => {
                        return Err(bad(
                            line_no,
                            "mode",
                            format!(
                                "`{other}` is not one of galerkin, two-level, \
                                 convergence-study, singularity-study, comparison"
                            ),
                        ))
                    }
                });
            }
            "nu" | "viscosity" => {
                cfg.nu = value
                    .parse()
                    .map_err(|_| bad(line_no, "nu", format!("`{value}` is not a number")))?;
            }
            "element" => {
                cfg.element = match normalize(value).as_str() {
                    "mini" => ElementPair::Mini,
                    "taylor-hood" => ElementPair::TaylorHood,
                    other => {
                        return Err(bad(
                            line_no,
                            "element",
                            format!("`{other}` is not one of mini, taylor-hood"),
                        ))
                    }
                };
            }
            "n_coarse" => {
                cfg.n_coarse = value
                    .parse()
                    .map_err(|_| bad(line_no, "n_coarse", format!("`{value}` is not a positive integer")))?;
            }
            "fine_levels" => {
                cfg.fine_levels = value
                    .parse()
                    .map_err(|_| bad(line_no, "fine_levels", format!("`{value}` is not a nonnegative integer")))?;
            }
            "coupling" => {
                let v = normalize(value);
                cfg.coupling = if v == "h-squared" {
                    FineLevelRule::HSquared
                } else if let Some(k) = v.strip_prefix("explicit:") {
                    FineLevelRule::Explicit(k.trim().parse().map_err(|_| {
                        bad(line_no, "coupling", format!("`{value}`: level is not an integer"))
                    })?)
                } else {
                    return Err(bad(
                        line_no,
                        "coupling",
                        format!("`{value}` is not `h-squared` or `explicit:<level>`"),
                    ));
                };
            }
            "t_final" => {
                cfg.t_final = value
                    .parse()
                    .map_err(|_| bad(line_no, "t_final", format!("`{value}` is not a number")))?;
            }
            "dt" => {
                cfg.dt = if normalize(value) == "auto" {
                    DtRule::Auto
                } else {
                    DtRule::Fixed(value.parse().map_err(|_| {
                        bad(line_no, "dt", format!("`{value}` is not a number or `auto`"))
                    })?)
                };
            }
            "fixture" => {
                cfg.fixture = match normalize(value).as_str() {
                    "smooth" => Fixture::Smooth,
                    "nonsmooth" | "non-smooth" => Fixture::Nonsmooth,
                    other => {
                        return Err(bad(
                            line_no,
                            "fixture",
                            format!("`{other}` is not one of smooth, nonsmooth"),
                        ))
                    }
                };
            }
            "sample_times" => {
                let mut times = Vec::new();
                for part in value.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    times.push(part.parse().map_err(|_| {
                        bad(line_no, "sample_times", format!("`{part}` is not a number"))
                    })?);
                }
                cfg.sample_times = times;
            }
            "output_dir" => {
                if value.is_empty() {
                    return Err(bad(line_no, "output_dir", "must not be empty".into()));
                }
                cfg.output_dir = PathBuf::from(value);
            }
            "seed" => {
                cfg.seed = value
                    .parse()
                    .map_err(|_| bad(line_no, "seed", format!("`{value}` is not an integer")))?;
            }
            "deterministic" => {
                cfg.deterministic = match normalize(value).as_str() {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    other => {
                        return Err(bad(
                            line_no,
                            "deterministic",
                            format!("`{other}` is not a boolean"),
                        ))
                    }
                };
            }
            unknown => {
                return Err(Error::Config(format!(
                    "{path}:{line_no}: unknown key `{unknown}`{}",
                    suggest(unknown)
                )));
            }
        }
    }
    let Some(mode) = mode else {
        return Err(Error::Config(format!("{path}: missing required key `mode`")));
    };
    cfg.mode = mode;
    cfg.validate(path)?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_str(&text, &path.display().to_string())
}

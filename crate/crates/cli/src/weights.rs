//! Policy weights file.
//!
//! ```text
//! # cartpole policy weights
//! arch = 4,36,10,2
//! scale = 1.0000000000000000e1
//! seed = 7
//! trained_on = lab
//! W1 = <36x4 row-major>
//! b1 = <36>
//! W2 = <10x36 row-major>
//! b2 = <10>
//! W_mean = <10>
//! b_mean = <1>
//! W_std = <10>
//! b_std = <1>
//! ```
//!
//! Values are comma-separated with 17 significant digits, so reading a
//! written file reproduces the weights exactly.

use std::fmt::Write as _;
use std::path::Path;

use cartpole_core::dynamics::Model;
use cartpole_core::policy::{MlpPolicy, ARCH, BLOCKS, NUM_PARAMS, VOLTAGE_SCALE};

use crate::error::CliError;
use crate::kv;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub policy: MlpPolicy,
    pub seed: u64,
    pub trained_on: Model,
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl WeightsFile {
    pub fn to_text(&self) -> String {
        let mut s = String::from("# cartpole policy weights\n");
        let arch: Vec<String> = ARCH.iter().map(|a| a.to_string()).collect();
        writeln!(s, "arch = {}", arch.join(",")).unwrap();
        writeln!(s, "scale = {}", fmt_f64(VOLTAGE_SCALE)).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "trained_on = {}", self.trained_on).unwrap();
        let theta = self.policy.params();
        for b in BLOCKS {
            let vals: Vec<String> = theta[b.range()].iter().map(|&v| fmt_f64(v)).collect();
            writeln!(s, "{} = {}", b.name, vals.join(",")).unwrap();
        }
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let entries = kv::parse(text, origin)?;
        let mut theta = vec![f64::NAN; NUM_PARAMS];
        let mut seen = vec![false; BLOCKS.len()];
        let mut seed = None;
        let mut trained_on = None;
        let mut arch_ok = false;
        for e in &entries {
            if e.section.is_some() {
                return Err(CliError::parse(
                    origin,
                    e.line,
                    "weights files have no sections",
                ));
            }
            match e.key.as_str() {
                "arch" => {
                    let arch = kv::parse_list(e, origin)?;
                    if arch != ARCH.map(|a| a as f64) {
                        return Err(CliError::parse(
                            origin,
                            e.line,
                            format!(
                                "unsupported architecture `{}` (expected 4,36,10,2)",
                                e.value
                            ),
                        ));
                    }
                    arch_ok = true;
                }
                "scale" => {
                    if kv::parse_f64(e, origin)? != VOLTAGE_SCALE {
                        return Err(CliError::parse(origin, e.line, "scale must be 10"));
                    }
                }
                "seed" => seed = Some(kv::parse_usize(e, origin)? as u64),
                "trained_on" => {
                    trained_on = Some(match e.value.as_str() {
                        "lab" => Model::Lab,
                        "lti" => Model::Lti,
                        v => {
                            return Err(CliError::parse(
                                origin,
                                e.line,
                                format!("trained_on must be lab or lti, got `{v}`"),
                            ))
                        }
                    })
                }
                key => {
                    let (idx, block) = BLOCKS
                        .iter()
                        .enumerate()
                        .find(|(_, b)| b.name == key)
                        .ok_or_else(|| {
                            CliError::parse(origin, e.line, format!("unknown key `{key}`"))
                        })?;
                    let vals = kv::parse_list(e, origin)?;
                    if vals.len() != block.len() {
                        return Err(CliError::parse(
                            origin,
                            e.line,
                            format!("{key} has {} values, expected {}", vals.len(), block.len()),
                        ));
                    }
                    theta[block.range()].copy_from_slice(&vals);
                    seen[idx] = true;
                }
            }
        }
        let missing = |what: &str| CliError::parse(origin, 0, format!("missing `{what}`"));
        if !arch_ok {
            return Err(missing("arch"));
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(missing(BLOCKS[i].name));
        }
        Ok(WeightsFile {
            policy: MlpPolicy::from_flat(theta)?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            trained_on: trained_on.ok_or_else(|| missing("trained_on"))?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cartpole_core::trainer::initial_policy;

    #[test]
    fn round_trip_is_exact() {
        let w = WeightsFile {
            policy: initial_policy(12),
            seed: 12,
            trained_on: Model::Lti,
        };
        let text = w.to_text();
        let back = WeightsFile::parse(&text, "w").unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn header_fields() {
        let text = WeightsFile {
            policy: MlpPolicy::zeros(),
            seed: 3,
            trained_on: Model::Lab,
        }
        .to_text();
        assert!(text.contains("arch = 4,36,10,2\n"));
        assert!(text.contains("scale = 1.0000000000000000e1\n"));
        assert!(text.contains("trained_on = lab\n"));
    }

    #[test]
    fn wrong_lengths_and_missing_blocks() {
        let text = WeightsFile {
            policy: MlpPolicy::zeros(),
            seed: 3,
            trained_on: Model::Lab,
        }
        .to_text();
        let short = text.replace("b_mean = 0.0000000000000000e0", "b_mean = 0,0");
        assert!(WeightsFile::parse(&short, "w")
            .unwrap_err()
            .to_string()
            .contains("b_mean has 2 values"));
        let dropped: String = text
            .lines()
            .filter(|l| !l.starts_with("W2"))
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(WeightsFile::parse(&dropped, "w")
            .unwrap_err()
            .to_string()
            .contains("missing `W2`"));
        let arch = text.replace("arch = 4,36,10,2", "arch = 4,16,2");
        assert!(WeightsFile::parse(&arch, "w").is_err());
    }
}

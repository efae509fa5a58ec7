//! Run settings gathered from defaults, a configuration file and flags.
//!
//! The configuration file is flat `key = value` text. Blank lines and lines
//! starting with `#` are ignored; a key may appear once. Keys use the flag
//! names with `_` or `-`: `lanes`, `kernel`, `n`, `tile`, `sew`,
//! `mem_latency`, `fpu_depth`, `opq_depth`, `out`, `seed`, `trace`, `alpha`,
//! `c_out`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use lanesim::isa::Sew;
use lanesim::kernels::{KernelError, KernelKind, KernelSpec};
use lanesim::{ConfigError, MachineConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SettingsError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    Value {
        line: usize,
        key: String,
        value: String,
    },
    #[error(transparent)]
    Machine(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Matmul,
    Daxpy,
    Dconv,
}

impl FromStr for KernelName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "matmul" => Ok(KernelName::Matmul),
            "daxpy" => Ok(KernelName::Daxpy),
            "dconv" => Ok(KernelName::Dconv),
            _ => Err(format!("unknown kernel `{s}` (matmul, daxpy, dconv)")),
        }
    }
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelName::Matmul => "matmul",
            KernelName::Daxpy => "daxpy",
            KernelName::Dconv => "dconv",
        })
    }
}

/// Partially specified settings; `None` falls through to the next layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub lanes: Option<usize>,
    pub kernel: Option<KernelName>,
    pub n: Option<usize>,
    pub tile: Option<usize>,
    pub sew: Option<Sew>,
    pub mem_latency: Option<u64>,
    pub fpu_depth: Option<u64>,
    pub opq_depth: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trace: Option<bool>,
    pub alpha: Option<f64>,
    pub c_out: Option<usize>,
}

fn value<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, SettingsError> {
    v.parse().map_err(|_| SettingsError::Value {
        line,
        key: key.to_string(),
        value: v.to_string(),
    })
}

fn set<T>(slot: &mut Option<T>, v: T, line: usize, key: &str) -> Result<(), SettingsError> {
    if slot.is_some() {
        return Err(SettingsError::Duplicate {
            line,
            key: key.to_string(),
        });
    }
    *slot = Some(v);
    Ok(())
}

impl Settings {
    pub fn parse(text: &str) -> Result<Settings, SettingsError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.trim();
            if body.is_empty() || body.starts_with('#') {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or(SettingsError::Syntax { line })?;
            let key = k.trim().replace('-', "_");
            let v = v.trim();
            match key.as_str() {
                "lanes" => set(&mut s.lanes, value(line, &key, v)?, line, &key)?,
                "kernel" => set(&mut s.kernel, value(line, &key, v)?, line, &key)?,
                "n" => set(&mut s.n, value(line, &key, v)?, line, &key)?,
                "tile" => set(&mut s.tile, value(line, &key, v)?, line, &key)?,
                "sew" => set(&mut s.sew, value(line, &key, v)?, line, &key)?,
                "mem_latency" => set(&mut s.mem_latency, value(line, &key, v)?, line, &key)?,
                "fpu_depth" => set(&mut s.fpu_depth, value(line, &key, v)?, line, &key)?,
                "opq_depth" => set(&mut s.opq_depth, value(line, &key, v)?, line, &key)?,
                "out" => set(&mut s.out, PathBuf::from(v), line, &key)?,
                "seed" => set(&mut s.seed, value(line, &key, v)?, line, &key)?,
                "trace" => set(&mut s.trace, value(line, &key, v)?, line, &key)?,
                "alpha" => set(&mut s.alpha, value(line, &key, v)?, line, &key)?,
                "c_out" => set(&mut s.c_out, value(line, &key, v)?, line, &key)?,
                _ => return Err(SettingsError::UnknownKey { line, key }),
            }
        }
        Ok(s)
    }

    /// Fields of `top` win over fields of `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        Settings {
            lanes: top.lanes.or(self.lanes),
            kernel: top.kernel.or(self.kernel),
            n: top.n.or(self.n),
            tile: top.tile.or(self.tile),
            sew: top.sew.or(self.sew),
            mem_latency: top.mem_latency.or(self.mem_latency),
            fpu_depth: top.fpu_depth.or(self.fpu_depth),
            opq_depth: top.opq_depth.or(self.opq_depth),
            out: top.out.or(self.out),
            seed: top.seed.or(self.seed),
            trace: top.trace.or(self.trace),
            alpha: top.alpha.or(self.alpha),
            c_out: top.c_out.or(self.c_out),
        }
    }

    /// Fills unset fields with defaults and validates the result.
    pub fn resolve(&self) -> Result<RunConfig, SettingsError> {
        let mut machine = MachineConfig::with_lanes(self.lanes.unwrap_or(4));
        if let Some(v) = self.mem_latency {
            machine.mem_latency = v;
        }
        if let Some(v) = self.fpu_depth {
            machine.fpu_depth = v;
        }
        if let Some(v) = self.opq_depth {
            machine.opq_fpu_depth = v;
        }
        machine.validate()?;
        let kind = match self.kernel.unwrap_or(KernelName::Matmul) {
            KernelName::Matmul => {
                let base = KernelKind::matmul(self.n.unwrap_or(64));
                match (base, self.tile) {
                    (KernelKind::Matmul { n, .. }, Some(tile)) => KernelKind::Matmul { n, tile },
                    (k, _) => k,
                }
            }
            KernelName::Daxpy => KernelKind::Daxpy {
                n: self.n.unwrap_or(256),
                alpha: self.alpha.unwrap_or(1.5),
            },
            KernelName::Dconv => match KernelKind::dconv() {
                KernelKind::Dconv {
                    c_out,
                    c_in,
                    k,
                    h,
                    w,
                    tile_co,
                } => KernelKind::Dconv {
                    c_out: self.c_out.unwrap_or(c_out),
                    c_in,
                    k,
                    h: self.n.unwrap_or(h),
                    w: self.n.unwrap_or(w),
                    tile_co: self.tile.unwrap_or(tile_co),
                },
                k => k,
            },
        };
        kind.validate()?;
        let sew = self.sew.unwrap_or(Sew::E64);
        if sew != Sew::E64 {
            return Err(KernelError::Sew(sew).into());
        }
        Ok(RunConfig {
            machine,
            spec: KernelSpec {
                kind,
                seed: self.seed.unwrap_or(1),
                sew,
            },
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
            trace: self.trace.unwrap_or(false),
        })
    }
}

/// A fully specified and validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub machine: MachineConfig,
    pub spec: KernelSpec,
    pub out: PathBuf,
    pub trace: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dashes() {
        let s =
            Settings::parse("# machine\nlanes = 8\nmem-latency=12\n\nkernel = DAXPY\n").unwrap();
        assert_eq!(s.lanes, Some(8));
        assert_eq!(s.mem_latency, Some(12));
        assert_eq!(s.kernel, Some(KernelName::Daxpy));
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(
            Settings::parse("lanes 4"),
            Err(SettingsError::Syntax { line: 1 })
        );
        assert!(matches!(
            Settings::parse("x = 1"),
            Err(SettingsError::UnknownKey { line: 1, .. })
        ));
        assert!(matches!(
            Settings::parse("n = 1\nn = 2"),
            Err(SettingsError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            Settings::parse("lanes = four"),
            Err(SettingsError::Value { .. })
        ));
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = Settings::parse("lanes = 8\nn = 32\nseed = 9").unwrap();
        let flags = Settings {
            lanes: Some(2),
            ..Settings::default()
        };
        let cfg = file.overlay(flags).resolve().unwrap();
        assert_eq!(cfg.machine.lanes, 2);
        assert_eq!(cfg.spec.kind, KernelKind::matmul(32));
        assert_eq!(cfg.spec.seed, 9);
        assert_eq!(cfg.machine.fpu_depth, MachineConfig::default().fpu_depth);
    }

    #[test]
    fn invalid_values_fail_before_simulation() {
        let bad = |s: Settings| s.resolve().is_err();
        assert!(bad(Settings {
            lanes: Some(3),
            ..Settings::default()
        }));
        assert!(bad(Settings {
            n: Some(0),
            ..Settings::default()
        }));
        assert!(bad(Settings {
            sew: Some(Sew::E32),
            ..Settings::default()
        }));
        assert!(bad(Settings {
            fpu_depth: Some(0),
            ..Settings::default()
        }));
    }
}

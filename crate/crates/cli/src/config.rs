//! Optional declarative config file and flag/default resolution.
//!
//! The file is flat TOML whose keys match the long flag names
//! (`m_max = [4, 8]`, `tol = 1e-8`, `solver = "aa-fib"`); command-line
//! flags override file values, which override built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use aafib::anderson::AaParams;
use aafib::fib::SolveParams;
use aafib::sim::{ResamplePolicy, SimParams};

use crate::args::{ResampleArg, SolverFlags, SolverKind, OUT_DIR_ENV};

fn int_or_list<'de, D>(deserializer: D) -> std::result::Result<Option<Vec<usize>>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match Option::<OneOrMany>::deserialize(deserializer)? {
        None => None,
        Some(OneOrMany::One(v)) => Some(vec![v]),
        Some(OneOrMany::Many(v)) => Some(v),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub problem: Option<String>,
    pub solver: Option<String>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default, deserialize_with = "int_or_list")]
    pub m_max: Option<Vec<usize>>,
    pub eta: Option<f64>,
    pub safeguard_d: Option<f64>,
    pub safeguard_phi: Option<f64>,
    pub safeguard_ns: Option<usize>,
    #[serde(default, deserialize_with = "int_or_list")]
    pub sample_size: Option<Vec<usize>>,
    pub resample: Option<String>,
    pub episodes: Option<usize>,
    pub horizon: Option<usize>,
    pub seeds: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config file {}", p.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("invalid config file {}", p.display()))
            }
        }
    }

    pub fn solver_kind(&self) -> Result<Option<SolverKind>> {
        Ok(match self.solver.as_deref() {
            None => None,
            Some("fib") => Some(SolverKind::Fib),
            Some("aa-fib") => Some(SolverKind::AaFib),
            Some("aa-fib-sim") => Some(SolverKind::AaFibSim),
            Some("qmdp") => Some(SolverKind::Qmdp),
            Some(other) => anyhow::bail!(
                "unknown solver `{other}` in config (expected fib|aa-fib|aa-fib-sim|qmdp)"
            ),
        })
    }

    pub fn resample_policy(&self) -> Result<Option<ResamplePolicy>> {
        Ok(match self.resample.as_deref() {
            None => None,
            Some("fresh") => Some(ResamplePolicy::Fresh),
            Some("frozen") => Some(ResamplePolicy::Frozen),
            Some(other) => {
                anyhow::bail!("unknown resample policy `{other}` (expected fresh|frozen)")
            }
        })
    }
}

/// Fully resolved solver settings for one run.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub aa: AaParams,
    pub sim: SimParams,
}

impl SolverSettings {
    pub fn resolve(
        flags: &SolverFlags,
        file: &FileConfig,
        seed: u64,
        m_max: usize,
        sample_size: usize,
    ) -> Result<Self> {
        let defaults = AaParams::default();
        let solve = SolveParams {
            tol: flags.tol.or(file.tol).unwrap_or(1e-6),
            max_iter: flags.max_iter.or(file.max_iter).unwrap_or(100_000),
            seed,
            record_iterates: false,
        };
        let aa = AaParams {
            m_max,
            eta: flags.eta.or(file.eta).unwrap_or(defaults.eta),
            d: flags.safeguard_d.or(file.safeguard_d).unwrap_or(defaults.d),
            phi: flags
                .safeguard_phi
                .or(file.safeguard_phi)
                .unwrap_or(defaults.phi),
            n_s: flags
                .safeguard_ns
                .or(file.safeguard_ns)
                .unwrap_or(defaults.n_s),
            solve,
        };
        let resample = match flags.resample {
            Some(ResampleArg::Fresh) => ResamplePolicy::Fresh,
            Some(ResampleArg::Frozen) => ResamplePolicy::Frozen,
            None => file.resample_policy()?.unwrap_or_default(),
        };
        let sim = SimParams {
            sample_size,
            seed,
            resample,
        };
        Ok(Self { aa, sim })
    }
}

/// The default output directory: `$AAFIB_OUT_DIR` when set, else the
/// current directory.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use padic_salem::analysis::sampling::{DEFAULT_SHELL_CAP, DEFAULT_SHELL_SAMPLES};
use padic_salem::construction::{ConstructionParams, Growth, Ratio, Shape};
use padic_salem::{Error, Result};
use serde_json::{json, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Faithful,
    Toy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Construct the measures; write the manifest and the step densities.
    Build,
    /// Run the lemma suite; exits 1 if an exact clause fails.
    Verify,
    /// Shell maxima of the transform and the normalized decay ratio.
    Decay,
    /// Maximal ball masses against the regularity bound.
    Regularity,
    /// Truncated Riesz energies, spatial and Fourier side.
    Energy,
    /// Restriction ratios over a seeded test family.
    Restrict,
    /// Fourier-dimension estimate from the shell maxima.
    Dim,
    /// Closed forms and recursions against the brute-force oracle.
    OracleDiff,
    /// Transform tables and support cells.
    Dump,
}

#[derive(Debug, Parser)]
#[command(name = "padic-salem", version, about, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[arg(long = "p", global = true, default_value_t = 3)]
    pub p: u64,

    /// NUM/DEN
    #[arg(long, global = true, default_value = "5/2")]
    pub tau: Ratio,

    /// `scalar` or `mxn M N`
    #[arg(long, global = true, num_args = 1..=3, default_value = "scalar")]
    pub shape: Vec<String>,

    /// name[:param]: sqrt, power:G, log, logroot:J
    #[arg(long = "g", global = true, default_value = "sqrt")]
    pub growth: Growth,

    #[arg(long, global = true)]
    pub depth: Option<usize>,

    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,

    /// Comma-separated toy schedule M_1,...,M_K.
    #[arg(long = "M-list", global = true, value_delimiter = ',')]
    pub m_list: Option<Vec<u32>>,

    #[arg(long = "M0", global = true)]
    pub m0: Option<u32>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Shells up to this many points are enumerated; larger ones are sampled.
    #[arg(long = "cap-shell", global = true, default_value_t = DEFAULT_SHELL_CAP)]
    pub cap_shell: u128,

    /// Points drawn from each sampled shell.
    #[arg(long, global = true, default_value_t = DEFAULT_SHELL_SAMPLES)]
    pub samples: usize,

    /// Restrict the scans to this level; all built levels otherwise.
    #[arg(long, global = true)]
    pub k: Option<usize>,

    /// Energy exponent; defaults to half the dimension.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,

    /// Restriction exponent; defaults to the endpoint.
    #[arg(long, global = true)]
    pub q: Option<f64>,

    /// Restriction test functions.
    #[arg(long, global = true, default_value_t = 32)]
    pub tests: usize,

    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,

    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Splices the config file in front of the explicit flags so that later
/// (explicit) occurrences override it.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let path = argv.windows(2).find(|w| w[0] == "--config").map(|w| PathBuf::from(&w[1]));
    let path = match path.or_else(|| {
        argv.iter()
            .filter_map(|a| a.to_str()?.strip_prefix("--config=").map(PathBuf::from))
            .next()
    }) {
        Some(p) => p,
        None => return Ok(argv),
    };
    let text = fs::read_to_string(&path)?;
    let mut injected = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("{}:{}: expected key = value", path.display(), no + 1)))?;
        let key = key.trim();
        if key == "config" {
            return Err(Error::Parse("config files cannot include other config files".into()));
        }
        injected.push(OsString::from(format!("--{key}")));
        injected.extend(value.split_whitespace().map(OsString::from));
    }
    // Global flags are accepted after the subcommand name.
    let at = if argv.len() > 1 { 2 } else { argv.len() };
    let mut out: Vec<OsString> = argv[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[at..]);
    Ok(out)
}

impl Cli {
    pub fn shape(&self) -> Result<Shape> {
        self.shape.join(" ").parse()
    }

    pub fn params(&self) -> Result<ConstructionParams> {
        let shape = self.shape()?;
        let toy = match (self.mode, &self.m_list) {
            (Some(Mode::Faithful), Some(_)) => {
                return Err(Error::InvalidParams("--M-list requires --mode toy".into()));
            }
            (Some(Mode::Toy), None) => return Err(Error::InvalidParams("--mode toy requires --M-list".into())),
            (_, ms) => ms.clone(),
        };
        let mut params = match toy {
            Some(ms) => {
                if let Some(d) = self.depth.filter(|&d| d != ms.len()) {
                    return Err(Error::InvalidParams(format!(
                        "--depth {d} disagrees with an M-list of length {}",
                        ms.len()
                    )));
                }
                ConstructionParams::toy(self.p, self.tau, ms)
            }
            None => ConstructionParams::scalar(self.p, self.tau, self.depth.unwrap_or(1)),
        }
        .with_shape(shape)
        .with_growth(self.growth.clone());
        if let Some(m0) = self.m0 {
            params = params.with_m0(m0);
        }
        params.validate()?;
        Ok(params)
    }

    /// Settings that determine the build and the scans. The subcommand,
    /// output format, directory and worker count are left out so that they
    /// do not change the manifest hash.
    pub fn echo(&self) -> Value {
        json!({
            "p": self.p,
            "tau": self.tau.to_string(),
            "shape": self.shape.join(" "),
            "g": self.growth.to_string(),
            "depth": self.depth,
            "mode": self.mode.map(|m| format!("{m:?}").to_lowercase()),
            "M_list": self.m_list,
            "M0": self.m0,
            "seed": self.seed,
            "cap_shell": self.cap_shell.to_string(),
            "samples": self.samples,
            "k": self.k,
            "alpha": self.alpha,
            "q": self.q,
            "tests": self.tests,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn args(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_lines_precede_explicit_flags() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "p = 5  # comment\n\nshape = mxn 2 1\nseed=4").unwrap();
        let path = file.path().to_str().unwrap();
        let argv = expand_config(args(&["bin", "build", "--config", path, "--p", "3"])).unwrap();
        let cli = Cli::try_parse_from(argv).unwrap();
        assert_eq!(cli.p, 3);
        assert_eq!(cli.seed, 4);
        assert_eq!(cli.shape().unwrap(), Shape::Matrix { m: 2, n: 1 });
    }

    #[test]
    fn malformed_config_is_rejected() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "p 5").unwrap();
        let path = file.path().to_str().unwrap();
        assert!(matches!(
            expand_config(args(&["bin", "build", "--config", path])),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn toy_mode_needs_a_list() {
        let cli = Cli::try_parse_from(args(&["bin", "build", "--mode", "toy"])).unwrap();
        assert!(matches!(cli.params(), Err(Error::InvalidParams(_))));
        let cli = Cli::try_parse_from(args(&["bin", "build", "--M-list", "1,2", "--depth", "3"])).unwrap();
        assert!(matches!(cli.params(), Err(Error::InvalidParams(_))));
        let cli = Cli::try_parse_from(args(&["bin", "build", "--M-list", "1,2"])).unwrap();
        assert_eq!(cli.params().unwrap().depth, 2);
    }

    #[test]
    fn echo_leaves_out_presentation_settings() {
        let a = Cli::try_parse_from(args(&["bin", "decay", "--out", "x", "--threads", "2"])).unwrap();
        let b = Cli::try_parse_from(args(&["bin", "build", "--format", "json"])).unwrap();
        assert_eq!(a.echo(), b.echo());
    }
}

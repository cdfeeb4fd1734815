use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use sdym_core::frobenius::DEFAULT_SERIES_ORDER;
use sdym_core::mapping::DEFAULT_MAP_ORDER;
use sdym_core::profile::{DEFAULT_EPSILON, DEFAULT_R_MAX, DEFAULT_TOL, PRECISION_R_MAX, PRECISION_TOL};
use sdym_core::PhiIntegrator;

/// Flags shared by every subcommand. Each one overrides the same key in
/// the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Mass parameter; the horizon sits at r = 2m.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub m: Option<f64>,
    /// Family parameter of the p = -1 solutions.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Scan range as START:END:COUNT.
    #[arg(long, global = true, allow_hyphen_values = true, value_name = "A:B:N")]
    pub kappa_range: Option<String>,
    /// Winding at the horizon, phi(2m) = p / 4m.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub p: Option<i32>,
    /// Free horizon coefficient for windings other than -1.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub free_coeff: Option<f64>,
    /// Offset from the horizon where integration starts.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Outer radius.
    #[arg(long, global = true)]
    pub rmax: Option<f64>,
    /// Integrator tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Order of the horizon series.
    #[arg(long, global = true)]
    pub series_order: Option<usize>,
    /// Truncation order of the compactified series.
    #[arg(long, global = true)]
    pub map_order: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat TOML file with any of the keys above.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Ordering pairs for `check`, as "k1,k2" separated by ';'.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub pairs: Option<String>,
    #[arg(long, global = true, hide = true, allow_hyphen_values = true)]
    pub inject_dphi: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    m: Option<f64>,
    kappa: Option<f64>,
    kappa_range: Option<String>,
    p: Option<i32>,
    free_coeff: Option<f64>,
    epsilon: Option<f64>,
    rmax: Option<f64>,
    tol: Option<f64>,
    series_order: Option<usize>,
    map_order: Option<usize>,
    out: Option<PathBuf>,
    pairs: Option<String>,
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Scan,
    Map,
    Check,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Scan => "scan",
            Command::Map => "map",
            Command::Check => "check",
        }
    }
}

/// Fully resolved and validated inputs of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub m: f64,
    pub kappa: Option<f64>,
    pub kappa_range: Option<(f64, f64, usize)>,
    pub p: i32,
    pub free_coeff: Option<f64>,
    pub epsilon: f64,
    pub r_max: f64,
    pub tol: f64,
    pub series_order: usize,
    pub map_order: usize,
    pub out: PathBuf,
    pub pairs: Option<Vec<(f64, f64)>>,
    pub inject_dphi: f64,
}

fn parse_range(text: &str) -> Result<(f64, f64, usize)> {
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        bail!("kappa range must look like A:B:N, got {text:?}");
    };
    let a: f64 = a.trim().parse().with_context(|| format!("bad range start {a:?}"))?;
    let b: f64 = b.trim().parse().with_context(|| format!("bad range end {b:?}"))?;
    let n: usize = n.trim().parse().with_context(|| format!("bad range count {n:?}"))?;
    Ok((a, b, n))
}

fn parse_pairs(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (a, b) = pair
                .split_once(',')
                .ok_or_else(|| anyhow!("pair must look like k1,k2, got {pair:?}"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        })
        .collect()
}

impl RunConfig {
    pub fn resolve(command: Command, flags: &Flags) -> Result<Self> {
        let file = match &flags.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        let m = flags.m.or(file.m).unwrap_or(1.0);
        if !(m.is_finite() && m > 0.0) {
            bail!("m must be positive and finite, got {m}");
        }
        let precision = matches!(command, Command::Solve | Command::Scan);
        let default_r_max = match command {
            Command::Solve | Command::Scan => PRECISION_R_MAX * m,
            Command::Map => 20.0 * m,
            Command::Check => DEFAULT_R_MAX * m,
        };
        let kappa_range = flags
            .kappa_range
            .clone()
            .or(file.kappa_range)
            .map(|t| parse_range(&t))
            .transpose()?;
        let pairs = flags.pairs.clone().or(file.pairs).map(|t| parse_pairs(&t)).transpose()?;
        let cfg = RunConfig {
            command,
            m,
            kappa: flags.kappa.or(file.kappa),
            kappa_range,
            p: flags.p.or(file.p).unwrap_or(-1),
            free_coeff: flags.free_coeff.or(file.free_coeff),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON * m),
            r_max: flags.rmax.or(file.rmax).unwrap_or(default_r_max),
            tol: flags
                .tol
                .or(file.tol)
                .unwrap_or(if precision { PRECISION_TOL } else { DEFAULT_TOL }),
            series_order: flags.series_order.or(file.series_order).unwrap_or(DEFAULT_SERIES_ORDER),
            map_order: flags.map_order.or(file.map_order).unwrap_or(DEFAULT_MAP_ORDER),
            out: flags.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            pairs,
            inject_dphi: flags.inject_dphi.unwrap_or(0.0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn integrator(&self) -> PhiIntegrator {
        PhiIntegrator {
            m: self.m,
            epsilon: self.epsilon,
            r_max: self.r_max,
            tol: self.tol,
            series_order: self.series_order,
        }
    }

    fn validate(&self) -> Result<()> {
        self.integrator().validate()?;
        if let Some(k) = self.kappa {
            if !k.is_finite() {
                bail!("kappa must be finite");
            }
        }
        if let Some(c) = self.free_coeff {
            if !c.is_finite() {
                bail!("free-coeff must be finite");
            }
        }
        match self.command {
            Command::Solve => {
                if self.p == -1 {
                    if self.kappa.is_none() {
                        bail!("solve needs --kappa");
                    }
                    if self.free_coeff.is_some() {
                        bail!("give either --kappa or --free-coeff for p = -1, not both");
                    }
                } else {
                    if !(-4..=2).contains(&self.p) {
                        bail!("p must lie in [-4, 2], got {}", self.p);
                    }
                    if self.free_coeff.is_none() {
                        bail!("solve with p = {} needs --free-coeff", self.p);
                    }
                    if self.kappa.is_some() {
                        bail!("--kappa only applies to p = -1");
                    }
                }
            }
            Command::Scan => {
                if self.p != -1 {
                    bail!("scan runs over the p = -1 family");
                }
                let (a, b, n) = self.scan_range()?;
                if n == 0 {
                    bail!("kappa range needs at least one point");
                }
                if !(a.is_finite() && b.is_finite() && a <= b) {
                    bail!("kappa range must have start <= end, got {a}:{b}");
                }
                if a < -4.0 || b > -1.0 {
                    bail!("kappa range must lie within [-4, -1], got {a}:{b}");
                }
                if n == 1 && a != b {
                    bail!("a single-point range needs start == end");
                }
            }
            Command::Map => {
                if self.p != -1 {
                    bail!("map runs over the p = -1 family");
                }
                if self.kappa.is_none() {
                    bail!("map needs --kappa");
                }
                if self.map_order < 5 {
                    bail!("map-order must be at least 5, got {}", self.map_order);
                }
            }
            Command::Check => {
                for &(a, b) in self.pairs.iter().flatten() {
                    if !(a < b && b <= -2.0) {
                        bail!("ordering pairs need k1 < k2 <= -2, got ({a}, {b})");
                    }
                }
            }
        }
        Ok(())
    }

    fn scan_range(&self) -> Result<(f64, f64, usize)> {
        match (self.kappa_range, self.kappa) {
            (Some(r), _) => Ok(r),
            (None, Some(k)) => Ok((k, k, 1)),
            (None, None) => bail!("scan needs --kappa-range"),
        }
    }

    pub fn scan_kappas(&self) -> Vec<f64> {
        let (a, b, n) = self.scan_range().expect("validated");
        if n == 1 {
            return vec![a];
        }
        (0..n)
            .map(|j| if j == n - 1 { b } else { a + (b - a) * j as f64 / (n - 1) as f64 })
            .collect()
    }

    /// `key = value` lines describing every input that affects results.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let opt = |x: Option<f64>| x.map(|v| format!("{v:?}")).unwrap_or_else(|| "none".into());
        let _ = writeln!(out, "command = {}", self.command.name());
        let _ = writeln!(out, "m = {:?}", self.m);
        let _ = writeln!(out, "p = {}", self.p);
        let _ = writeln!(out, "kappa = {}", opt(self.kappa));
        if let Some((a, b, n)) = self.kappa_range {
            let _ = writeln!(out, "kappa_range = {a:?}:{b:?}:{n}");
        }
        let _ = writeln!(out, "free_coeff = {}", opt(self.free_coeff));
        let _ = writeln!(out, "epsilon = {:?}", self.epsilon);
        let _ = writeln!(out, "rmax = {:?}", self.r_max);
        let _ = writeln!(out, "tol = {:?}", self.tol);
        let _ = writeln!(out, "series_order = {}", self.series_order);
        let _ = writeln!(out, "map_order = {}", self.map_order);
        if let Some(pairs) = &self.pairs {
            let text: Vec<String> = pairs.iter().map(|(a, b)| format!("{a:?},{b:?}")).collect();
            let _ = writeln!(out, "pairs = {}", text.join(";"));
        }
        if self.inject_dphi != 0.0 {
            let _ = writeln!(out, "inject_dphi = {:?}", self.inject_dphi);
        }
        out
    }

    /// Git-style blob hash of [`RunConfig::echo`].
    pub fn input_hash(&self) -> String {
        let echo = self.echo();
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", echo.len()).as_bytes());
        h.update(echo.as_bytes());
        format!("{:x}", h.finalize())
    }

    /// Comment block placed at the top of every CSV file.
    pub fn csv_header(&self) -> String {
        let mut out = String::from("# sdym\n");
        for line in self.echo().lines() {
            let _ = writeln!(out, "# {line}");
        }
        let _ = writeln!(out, "# input_sha256 = {}", self.input_hash());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags::default()
    }

    #[test]
    fn defaults_depend_on_the_command() {
        let f = Flags {
            kappa: Some(-2.5),
            ..flags()
        };
        let solve = RunConfig::resolve(Command::Solve, &f).unwrap();
        assert_eq!(solve.r_max, PRECISION_R_MAX);
        assert_eq!(solve.tol, PRECISION_TOL);
        let map = RunConfig::resolve(Command::Map, &f).unwrap();
        assert_eq!(map.r_max, 20.0);
        assert_eq!(map.tol, DEFAULT_TOL);
        let check = RunConfig::resolve(Command::Check, &flags()).unwrap();
        assert_eq!(check.r_max, DEFAULT_R_MAX);
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "kappa = -2.25\ntol = 1e-10\nm = 2.0\n").unwrap();
        let f = Flags {
            config: Some(path),
            tol: Some(1e-11),
            ..flags()
        };
        let cfg = RunConfig::resolve(Command::Solve, &f).unwrap();
        assert_eq!(cfg.kappa, Some(-2.25));
        assert_eq!(cfg.tol, 1e-11);
        assert_eq!(cfg.m, 2.0);
        assert_eq!(cfg.r_max, 2.0 * PRECISION_R_MAX);
    }

    #[test]
    fn unknown_file_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "kapa = -2.25\n").unwrap();
        let f = Flags {
            config: Some(path),
            ..flags()
        };
        assert!(RunConfig::resolve(Command::Solve, &f).is_err());
    }

    #[test]
    fn validation() {
        let bad = [
            (Command::Solve, Flags { ..flags() }),
            (Command::Solve, Flags { kappa: Some(-2.5), tol: Some(1e-3), ..flags() }),
            (Command::Solve, Flags { kappa: Some(-2.5), m: Some(-1.0), ..flags() }),
            (Command::Solve, Flags { p: Some(0), ..flags() }),
            (Command::Scan, Flags { kappa_range: Some("-5:-2:3".into()), ..flags() }),
            (Command::Scan, Flags { kappa_range: Some("-2:-3:3".into()), ..flags() }),
            (Command::Scan, Flags { kappa_range: Some("-3:-2".into()), ..flags() }),
            (Command::Map, Flags { kappa: Some(-2.5), map_order: Some(4), ..flags() }),
            (Command::Check, Flags { pairs: Some("-2,-3".into()), ..flags() }),
        ];
        for (cmd, f) in bad {
            assert!(RunConfig::resolve(cmd, &f).is_err(), "{cmd:?} {f:?}");
        }
    }

    #[test]
    fn scan_grid() {
        let f = Flags {
            kappa_range: Some("-3:-2:11".into()),
            ..flags()
        };
        let k = RunConfig::resolve(Command::Scan, &f).unwrap().scan_kappas();
        assert_eq!(k.len(), 11);
        assert_eq!(k[0], -3.0);
        assert_eq!(k[10], -2.0);
        let single = Flags {
            kappa: Some(-2.5),
            ..flags()
        };
        assert_eq!(RunConfig::resolve(Command::Scan, &single).unwrap().scan_kappas(), vec![-2.5]);
    }

    #[test]
    fn pairs_parse() {
        assert_eq!(parse_pairs("-3,-2; -2.5,-2.1").unwrap(), vec![(-3.0, -2.0), (-2.5, -2.1)]);
        assert!(parse_pairs("-3").is_err());
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = Flags {
            kappa: Some(-2.5),
            out: Some("a".into()),
            ..flags()
        };
        let b = Flags {
            out: Some("b".into()),
            ..a.clone()
        };
        let ca = RunConfig::resolve(Command::Solve, &a).unwrap();
        let cb = RunConfig::resolve(Command::Solve, &b).unwrap();
        assert_eq!(ca.input_hash(), cb.input_hash());
        assert_eq!(ca.input_hash().len(), 64);
        assert!(ca.csv_header().starts_with("# sdym\n# command = solve\n"));
    }
}

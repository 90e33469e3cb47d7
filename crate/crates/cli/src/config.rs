//! The flat `key = value` run configuration.
//!
//! ```text
//! schema = jflow-config-v1
//! command = flow
//! n = 1
//! N = 64
//! g0 = 4
//! chi = 2
//! phi0 = 0:1:0.2:0
//! ```
//!
//! Matrices are either a single number (a multiple of the identity) or, for
//! n = 2, the four reals `g11, g22, re g12, im g12`. Potentials are comma
//! lists of harmonics `axes:freq:amp[:phase]`, where `axes` names one real
//! axis or a signed combination such as `0+2` or `1-3`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use jflow_core::flow::FlowSettings;
use jflow_core::harmonics::{Harmonic, HarmonicCocktail, RandomModes};
use jflow_core::kahler::KahlerStructure;
use jflow_core::{Complex64, HMat, Lattice};

pub const SCHEMA: &str = "jflow-config-v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Flow,
    Geodesic,
    Contract,
    Diagnose,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Geodesic => "geodesic",
            Command::Contract => "contract",
            Command::Diagnose => "diagnose",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "flow" => Ok(Command::Flow),
            "geodesic" => Ok(Command::Geodesic),
            "contract" => Ok(Command::Contract),
            "diagnose" => Ok(Command::Diagnose),
            _ => Err("must be one of flow, geodesic, contract, diagnose".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigIssue {
    Parse { line: usize, message: String },
    Validation { key: String, reason: String },
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigIssue::Parse { line, message } => write!(f, "line {line}: {message}"),
            ConfigIssue::Validation { key, reason } => write!(f, "{key}: {reason}"),
        }
    }
}

/// Every problem found in a configuration, in source order.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// A potential given as explicit harmonics plus optional seeded random modes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PotentialSpec {
    pub harmonics: Vec<Harmonic>,
    /// (count, amplitude, max frequency); the seed comes from the run.
    pub random: Option<(usize, f64, i32)>,
}

impl PotentialSpec {
    /// `salt` keeps the random modes of different potentials independent.
    pub fn cocktail(&self, seed: u64, salt: u64) -> HarmonicCocktail {
        let mut c = HarmonicCocktail::new(self.harmonics.clone());
        if let Some((count, amplitude, max_freq)) = self.random {
            c = c.with_random(RandomModes { count, amplitude, max_freq, seed: seed.wrapping_add(salt) });
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicConfig {
    pub epsilon: f64,
    pub m: usize,
    pub tol: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub n: usize,
    pub points: usize,
    pub period: f64,
    pub g0: HMat,
    pub chi: HMat,
    pub chi_potential: PotentialSpec,
    pub phi0: PotentialSpec,
    pub phi_a: PotentialSpec,
    pub phi_b: PotentialSpec,
    pub seed: u64,
    pub flow: FlowSettings,
    pub geodesic: GeodesicConfig,
    pub t_flow: f64,
    pub out: PathBuf,
    /// Write a snapshot every K accepted steps; 0 disables intermediate snapshots.
    pub snapshot_every: usize,
    /// Directory a diagnose run reads from; defaults to `out`.
    pub run_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.n, self.points, self.period).expect("validated")
    }

    pub fn run_dir(&self) -> &Path {
        self.run_dir.as_deref().unwrap_or(&self.out)
    }

    pub fn structure(&self) -> jflow_core::Result<KahlerStructure> {
        let lat = self.lattice();
        if self.chi_potential.harmonics.is_empty() && self.chi_potential.random.is_none() {
            KahlerStructure::constant(lat, self.g0, self.chi)
        } else {
            let psi = self.chi_potential.cocktail(self.seed, 3).evaluate(lat);
            KahlerStructure::with_chi_potential(lat, self.g0, self.chi, psi)
        }
    }
}

const KEYS: &[&str] = &[
    "schema",
    "command",
    "n",
    "N",
    "L",
    "g0",
    "chi",
    "chi_potential",
    "chi_potential_random",
    "phi0",
    "phi0_random",
    "phi_a",
    "phi_a_random",
    "phi_b",
    "phi_b_random",
    "seed",
    "t_max",
    "residual_tol",
    "dt0",
    "dt_growth",
    "cfl_safety",
    "max_halvings",
    "max_steps",
    "c0_margin",
    "epsilon",
    "m",
    "geodesic_tol",
    "newton_max_iterations",
    "t_flow",
    "out",
    "snapshot_every",
    "run_dir",
];

struct Entries {
    map: BTreeMap<String, String>,
    issues: Vec<ConfigIssue>,
}

impl Entries {
    fn invalid(&mut self, key: &str, reason: impl Into<String>) {
        self.issues.push(ConfigIssue::Validation { key: key.into(), reason: reason.into() });
    }

    fn get<T>(&mut self, key: &str, default: T, parse: impl Fn(&str) -> Result<T, String>) -> T {
        match self.map.get(key).cloned() {
            None => default,
            Some(raw) => parse(&raw).unwrap_or_else(|reason| {
                self.invalid(key, reason);
                default
            }),
        }
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        self.get(key, default, |s| {
            let v = parse_f64(s)?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err("must be positive".into())
            }
        })
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

fn parse_usize(s: &str) -> Result<usize, String> {
    s.parse::<usize>().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn parse_matrix(s: &str, n: usize) -> Result<HMat, String> {
    let parts: Vec<f64> = s.split(',').map(|p| parse_f64(p.trim())).collect::<Result<_, _>>()?;
    match (parts.len(), n) {
        (1, _) => Ok(HMat::scalar(n, parts[0])),
        (4, 2) => Ok(HMat::hermitian(&[parts[0], parts[1]], Complex64::new(parts[2], parts[3]))),
        _ => Err("expected one number or, for n = 2, four numbers `g11, g22, re g12, im g12`".into()),
    }
}

fn parse_axes(s: &str, real_dim: usize, freq: i32) -> Result<[i32; 4], String> {
    let mut wave = [0; 4];
    let mut sign = 1;
    let mut digits = String::new();
    let mut flush = |digits: &mut String, sign: i32| -> Result<(), String> {
        let axis: usize = digits.parse().map_err(|_| format!("bad axis list `{s}`"))?;
        if axis >= real_dim {
            return Err(format!("axis {axis} out of range for {real_dim} real dimensions"));
        }
        wave[axis] += sign * freq;
        digits.clear();
        Ok(())
    };
    for ch in s.chars() {
        match ch {
            '0'..='9' => digits.push(ch),
            '+' | '-' => {
                flush(&mut digits, sign)?;
                sign = if ch == '+' { 1 } else { -1 };
            }
            _ => return Err(format!("bad axis list `{s}`")),
        }
    }
    flush(&mut digits, sign)?;
    Ok(wave)
}

fn parse_harmonics(s: &str, real_dim: usize) -> Result<Vec<Harmonic>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|item| {
            let f: Vec<&str> = item.trim().split(':').map(str::trim).collect();
            if f.len() != 3 && f.len() != 4 {
                return Err(format!("harmonic `{}` must be axes:freq:amp[:phase]", item.trim()));
            }
            let freq: i32 = f[1].parse().map_err(|_| format!("bad frequency `{}`", f[1]))?;
            let wave = parse_axes(f[0], real_dim, freq)?;
            let amp = parse_f64(f[2])?;
            let phase = if f.len() == 4 { parse_f64(f[3])? } else { 0.0 };
            Ok(Harmonic { wave, amp, phase })
        })
        .collect()
}

fn parse_random(s: &str) -> Result<(usize, f64, i32), String> {
    let f: Vec<&str> = s.split(':').map(str::trim).collect();
    if f.len() != 3 {
        return Err("expected count:amplitude:max_freq".into());
    }
    let count = parse_usize(f[0])?;
    let amp = parse_f64(f[1])?;
    let max_freq: i32 = f[2].parse().map_err(|_| format!("bad frequency `{}`", f[2]))?;
    if amp < 0.0 || max_freq < 1 {
        return Err("amplitude must be ≥ 0 and max_freq ≥ 1".into());
    }
    Ok((count, amp, max_freq))
}

/// Split the text into key/value pairs, reporting syntax errors, unknown and duplicate keys.
fn tokenize(text: &str) -> Entries {
    let mut map = BTreeMap::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut issues = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            issues.push(ConfigIssue::Parse { line, message: format!("expected `key = value`, got `{content}`") });
            continue;
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            issues.push(ConfigIssue::Parse { line, message: "empty key".into() });
        } else if !KEYS.contains(&k) {
            issues.push(ConfigIssue::Parse { line, message: format!("unknown key `{k}`") });
        } else if let Some(first) = seen.get(k) {
            issues.push(ConfigIssue::Parse { line, message: format!("duplicate key `{k}` (first set on line {first})") });
        } else {
            seen.insert(k.to_string(), line);
            map.insert(k.to_string(), v.to_string());
        }
    }
    Entries { map, issues }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let mut e = tokenize(text);
    match e.map.get("schema").map(String::as_str) {
        Some(SCHEMA) => {}
        Some(other) => e.invalid("schema", format!("unsupported schema `{other}`, expected `{SCHEMA}`")),
        None => e.invalid("schema", format!("missing; expected `{SCHEMA}`")),
    }
    let command = e.get("command", Command::Flow, |s| s.parse());
    let n = e.get("n", 1, |s| match parse_usize(s)? {
        v @ (1 | 2) => Ok(v),
        _ => Err("must be 1 or 2".into()),
    });
    let points = e.get("N", 32, |s| match parse_usize(s) {
        Ok(v) if v >= 8 && v.is_power_of_two() => Ok(v),
        _ => Err("must be a power of two ≥ 8".into()),
    });
    let period = e.positive("L", 1.0);
    let g0 = e.get("g0", HMat::identity(n), |s| parse_matrix(s, n));
    let chi = e.get("chi", HMat::identity(n), |s| parse_matrix(s, n));
    for (key, m) in [("g0", &g0), ("chi", &chi)] {
        if m.hermitian_eigs().0 <= 0.0 {
            e.invalid(key, "must be positive definite");
        }
    }
    let real_dim = 2 * n;
    let potential = |e: &mut Entries, name: &str| PotentialSpec {
        harmonics: e.get(name, Vec::new(), |s| parse_harmonics(s, real_dim)),
        random: e.get(&format!("{name}_random"), None, |s| parse_random(s).map(Some)),
    };
    let chi_potential = potential(&mut e, "chi_potential");
    let phi0 = potential(&mut e, "phi0");
    let phi_a = potential(&mut e, "phi_a");
    let phi_b = potential(&mut e, "phi_b");
    let seed = e.get("seed", 0, |s| s.parse::<u64>().map_err(|_| format!("`{s}` is not a u64")));

    let d = FlowSettings::default();
    let flow = FlowSettings {
        t_max: e.positive("t_max", d.t_max),
        residual_tol: e.positive("residual_tol", d.residual_tol),
        dt0: e.get("dt0", None, |s| match parse_f64(s)? {
            v if v > 0.0 => Ok(Some(v)),
            _ => Err("must be positive".into()),
        }),
        dt_growth: e.get("dt_growth", d.dt_growth, |s| match parse_f64(s)? {
            v if v >= 1.0 => Ok(v),
            _ => Err("must be ≥ 1".into()),
        }),
        cfl_safety: e.positive("cfl_safety", d.cfl_safety),
        max_halvings: e.get("max_halvings", d.max_halvings, parse_usize),
        max_steps: e.get("max_steps", d.max_steps, parse_usize),
        c0_margin: e.positive("c0_margin", d.c0_margin),
    };
    let geodesic = GeodesicConfig {
        epsilon: e.positive("epsilon", 1e-3),
        m: e.get("m", 16, |s| match parse_usize(s)? {
            v if v >= 2 => Ok(v),
            _ => Err("must be at least 2".into()),
        }),
        tol: e.positive("geodesic_tol", 1e-8),
        max_iterations: e.get("newton_max_iterations", 60, parse_usize),
    };
    let t_flow = e.positive("t_flow", 1.0);
    let out = e.get("out", PathBuf::from("out"), |s| Ok(PathBuf::from(s)));
    let snapshot_every = e.get("snapshot_every", 0, parse_usize);
    let run_dir = e.get("run_dir", None, |s| Ok(Some(PathBuf::from(s))));

    if !e.issues.is_empty() {
        return Err(ConfigErrors(e.issues));
    }
    Ok(RunConfig {
        command,
        n,
        points,
        period,
        g0,
        chi,
        chi_potential,
        phi0,
        phi_a,
        phi_b,
        seed,
        flow,
        geodesic,
        t_flow,
        out,
        snapshot_every,
        run_dir,
    })
}

/// Parse and reconcile with the command given on the command line.
pub fn parse_config_for(text: &str, command: Command) -> Result<RunConfig, ConfigErrors> {
    let explicit = tokenize(text).map.contains_key("command");
    let mut cfg = parse_config(text)?;
    if explicit && cfg.command != command {
        return Err(ConfigErrors(vec![ConfigIssue::Validation {
            key: "command".into(),
            reason: format!("config says `{}` but `{}` was requested", cfg.command.name(), command.name()),
        }]));
    }
    cfg.command = command;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema = jflow-config-v1\nn = 1\nN = 32\nchi = 1\n";

    #[test]
    fn minimal_flow_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.command, Command::Flow);
        assert_eq!(c.points, 32);
        assert_eq!(c.flow, FlowSettings::default());
        assert_eq!(c.geodesic.m, 16);
        assert_eq!(c.out, PathBuf::from("out"));
    }

    #[test]
    fn bad_point_count() {
        let err = parse_config("schema = jflow-config-v1\nN = 7\n").unwrap_err();
        assert_eq!(
            err.0,
            vec![ConfigIssue::Validation { key: "N".into(), reason: "must be a power of two ≥ 8".into() }]
        );
    }

    #[test]
    fn duplicate_key_names_line() {
        let err = parse_config("schema = jflow-config-v1\nn = 1\n\nn = 2\n").unwrap_err();
        assert!(matches!(&err.0[..], [ConfigIssue::Parse { line: 4, message }] if message.contains("duplicate")));
    }

    #[test]
    fn collects_every_error() {
        let err = parse_config("bogus = 1\nN = 12\nt_max = -1\nno equals sign\n").unwrap_err();
        assert_eq!(err.0.len(), 5, "{err}");
    }

    #[test]
    fn harmonics_and_matrices() {
        let c = parse_config(
            "schema = jflow-config-v1\nn = 2\ng0 = 2\nchi = 1.5, 1.0, 0.3, 0.2\nphi0 = 0+2:1:0.03, 1-3:1:0.02:1.5707963267948966\n",
        )
        .unwrap();
        assert_eq!(c.phi0.harmonics[0].wave, [1, 0, 1, 0]);
        assert_eq!(c.phi0.harmonics[1].wave, [0, 1, 0, -1]);
        assert_eq!(c.chi.get(0, 1), Complex64::new(0.3, 0.2));
        assert!(parse_config("schema = jflow-config-v1\nphi0 = 2:1:0.1\n").is_err());
    }

    #[test]
    fn command_conflict() {
        let text = format!("{MINIMAL}command = flow\n");
        assert!(parse_config_for(&text, Command::Geodesic).is_err());
        assert_eq!(parse_config_for(MINIMAL, Command::Geodesic).unwrap().command, Command::Geodesic);
    }
}

//! Scan configuration: TOML file values overridden by command-line flags.

use std::path::{Path, PathBuf};

use hpchain::chain::{Lattice, Statistics};
use hpchain::gww;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fig1,
    Fig2,
    Polyakov,
    Gww,
    IdentityCheck,
    OracleCompare,
    Nested,
    ComplexTemp,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Fig1 => "fig1",
            Mode::Fig2 => "fig2",
            Mode::Polyakov => "polyakov",
            Mode::Gww => "gww",
            Mode::IdentityCheck => "identity-check",
            Mode::OracleCompare => "oracle-compare",
            Mode::Nested => "nested",
            Mode::ComplexTemp => "complex-temp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub fn parse_lattice(s: &str) -> Result<Lattice, CliError> {
    match s.trim() {
        "inf" | "infinite" | "INFINITE" => Ok(Lattice::Infinite),
        t => t
            .parse::<usize>()
            .map(Lattice::Finite)
            .map_err(|_| CliError::Usage(format!("lattice must be 'inf' or a ring size, got '{s}'"))),
    }
}

/// Everything a scan can read from a config file. All fields are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub mode: Option<Mode>,
    pub n_list: Option<Vec<usize>>,
    pub lattice: Option<toml::Value>,
    pub l_list: Option<Vec<usize>>,
    pub a_list: Option<Vec<f64>>,
    pub t_list: Option<Vec<f64>>,
    pub profile: Option<Vec<f64>>,
    pub a_vec: Option<Vec<f64>>,
    pub b: Option<f64>,
    pub phi: Option<f64>,
    pub shift: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub j_list: Option<Vec<f64>>,
    pub statistics: Option<String>,
    pub quad_rel_tol: Option<f64>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub output_path: Option<PathBuf>,
    pub output_format: Option<Format>,
    pub manifest: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Resolved configuration of one scan. Serialized into the output header, so
/// it holds only what determines the numbers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanConfig {
    pub mode: Mode,
    pub n_list: Vec<usize>,
    pub lattice: String,
    pub l_list: Vec<usize>,
    /// Pairs `(a, T)` with `a = a(T)`.
    pub points: Vec<(f64, f64)>,
    pub temperature_input: bool,
    pub profile: Vec<f64>,
    pub a_vec: Option<Vec<f64>>,
    pub b: f64,
    pub phi: f64,
    pub shift: usize,
    pub k_list: Vec<usize>,
    pub j_list: Vec<f64>,
    pub statistics: String,
    pub quad_rel_tol: f64,
    pub mc_samples: Option<usize>,
    pub seed: u64,
    pub timings: bool,
    #[serde(skip)]
    pub format: Format,
    #[serde(skip)]
    pub output_path: Option<PathBuf>,
    #[serde(skip)]
    pub manifest: Option<PathBuf>,
}

fn non_empty<T>(name: &str, v: Vec<T>) -> Result<Vec<T>, CliError> {
    if v.is_empty() {
        return Err(CliError::Usage(format!("{name} must not be empty")));
    }
    Ok(v)
}

/// `lo, lo + step, …, hi` built from integers so the values print cleanly.
fn tenths(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|i| i as f64 / 10.0).collect()
}

fn quarters(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|i| i as f64 / 4.0).collect()
}

/// Round trip `a ↔ T` must hold to this accuracy for every row.
pub const ROUND_TRIP_TOL: f64 = 1e-10;

fn temperature_points(a_list: Option<Vec<f64>>, t_list: Option<Vec<f64>>, default: Defaults) -> Result<(Vec<(f64, f64)>, bool), CliError> {
    let (list, is_t) = match (a_list, t_list) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either an a-list or a T-list, not both".into())),
        (Some(a), None) => (non_empty("a-list", a)?, false),
        (None, Some(t)) => (non_empty("T-list", t)?, true),
        (None, None) => match default {
            Defaults::A(a) => (a, false),
            Defaults::T(t) => (t, true),
        },
    };
    let mut points = Vec::with_capacity(list.len());
    for x in list {
        let (a, t) = if is_t {
            (gww::a_of_t(x).map_err(CliError::from)?, x)
        } else {
            (x, gww::t_of_a(x).map_err(CliError::from)?)
        };
        let back = gww::a_of_t(t).map_err(CliError::from)?;
        if (back - a).abs() >= ROUND_TRIP_TOL * a.max(1.0) {
            return Err(CliError::Numerical(format!("a/T round trip failed at a = {a}, T = {t}")));
        }
        points.push((a, t));
    }
    Ok((points, is_t))
}

enum Defaults {
    A(Vec<f64>),
    T(Vec<f64>),
}

/// Flag values; `None` means "not given on the command line".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n_list: Option<Vec<usize>>,
    pub lattice: Option<String>,
    pub l_list: Option<Vec<usize>>,
    pub a_list: Option<Vec<f64>>,
    pub t_list: Option<Vec<f64>>,
    pub profile: Option<Vec<f64>>,
    pub a_vec: Option<Vec<f64>>,
    pub b: Option<f64>,
    pub phi: Option<f64>,
    pub shift: Option<usize>,
    pub k_list: Option<Vec<usize>>,
    pub j_list: Option<Vec<f64>>,
    pub statistics: Option<String>,
    pub tol: Option<f64>,
    pub mc_samples: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub manifest: Option<PathBuf>,
    pub timings: bool,
}

fn lattice_from_file(v: &toml::Value) -> Result<String, CliError> {
    match v {
        toml::Value::Integer(i) if *i > 0 => Ok(i.to_string()),
        toml::Value::String(s) => Ok(s.clone()),
        other => Err(CliError::Usage(format!("lattice must be 'inf' or a ring size, got {other}"))),
    }
}

impl ScanConfig {
    /// Merges file and flags (flags win) and fills per-mode defaults.
    pub fn resolve(mode: Mode, file: FileConfig, flags: Overrides) -> Result<Self, CliError> {
        if let Some(m) = file.mode {
            if m != mode {
                return Err(CliError::Usage(format!(
                    "config is for mode '{}' but the subcommand is '{}'",
                    m.name(),
                    mode.name()
                )));
            }
        }
        let n_default: Vec<usize> = match mode {
            Mode::Fig1 => vec![1, 2, 4, 8, 16, 32],
            Mode::Fig2 => (2..=8).collect(),
            Mode::Polyakov => vec![16],
            Mode::Nested => vec![8, 16],
            Mode::ComplexTemp => vec![8],
            Mode::OracleCompare => (1..=4).collect(),
            Mode::Gww | Mode::IdentityCheck => vec![],
        };
        let n_list = flags.n_list.or(file.n_list).unwrap_or(n_default);
        if !matches!(mode, Mode::Gww | Mode::IdentityCheck) {
            non_empty("N-list", n_list.clone())?;
            if n_list.contains(&0) {
                return Err(CliError::Usage("N must be >= 1".into()));
            }
        }
        let lattice_default = if mode == Mode::Fig2 { "18" } else { "inf" };
        let lattice = match (flags.lattice, file.lattice.as_ref()) {
            (Some(l), _) => l,
            (None, Some(v)) => lattice_from_file(v)?,
            (None, None) => lattice_default.to_string(),
        };
        let lattice = parse_lattice(&lattice)?.to_string();

        let defaults = match mode {
            Mode::Fig1 => Defaults::T(vec![0.30, 0.45]),
            Mode::Fig2 | Mode::Gww => Defaults::A(tenths(1, 30)),
            Mode::Polyakov => Defaults::A(quarters(1, 12)),
            Mode::Nested | Mode::ComplexTemp => Defaults::A(vec![0.5, 2.0]),
            Mode::OracleCompare | Mode::IdentityCheck => Defaults::A(vec![]),
        };
        let (points, temperature_input) = match mode {
            Mode::OracleCompare | Mode::IdentityCheck => (vec![], false),
            _ => temperature_points(flags.a_list.or(file.a_list), flags.t_list.or(file.t_list), defaults)?,
        };

        let profile = flags.profile.or(file.profile).unwrap_or_else(|| vec![1.0]);
        non_empty("profile", profile.clone())?;
        let a_vec = flags.a_vec.or(file.a_vec);
        if let Some(v) = &a_vec {
            non_empty("a-vec", v.clone())?;
        }
        let quad_rel_tol = flags.tol.or(file.quad_rel_tol).unwrap_or(hpchain::average::DEFAULT_REL_TOL);
        if !(quad_rel_tol > 0.0 && quad_rel_tol <= 1e-3) {
            return Err(CliError::Usage(format!("tolerance must lie in (0, 1e-3], got {quad_rel_tol}")));
        }
        let statistics = flags.statistics.or(file.statistics).unwrap_or_else(|| "spin".into());
        parse_statistics(&statistics)?;
        let l_list = flags.l_list.or(file.l_list).unwrap_or_else(|| vec![8, 10, 12]);
        let k_list = flags.k_list.or(file.k_list).unwrap_or_else(|| vec![1, 2]);
        let j_list = flags.j_list.or(file.j_list).unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
        if mode == Mode::OracleCompare {
            non_empty("L-list", l_list.clone())?;
            non_empty("K-list", k_list.clone())?;
            non_empty("J-list", j_list.clone())?;
        }
        let mc_samples = flags.mc_samples.or(file.mc_samples);
        if mc_samples.is_some_and(|s| s < 2) {
            return Err(CliError::Usage("Monte Carlo needs at least two samples".into()));
        }
        Ok(ScanConfig {
            mode,
            n_list,
            lattice,
            l_list,
            points,
            temperature_input,
            profile,
            a_vec,
            b: flags.b.or(file.b).unwrap_or(0.1),
            phi: flags.phi.or(file.phi).unwrap_or(0.5),
            shift: flags.shift.or(file.shift).unwrap_or(1),
            k_list,
            j_list,
            statistics,
            quad_rel_tol,
            mc_samples,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            timings: flags.timings,
            format: flags.format.or(file.output_format).unwrap_or_default(),
            output_path: flags.out.or(file.output_path),
            manifest: flags.manifest.or(file.manifest),
        })
    }

    pub fn lattice(&self) -> Lattice {
        parse_lattice(&self.lattice).expect("validated at resolve time")
    }

    /// Canonical JSON of the fields that determine the numbers.
    pub fn fingerprint(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

pub fn parse_statistics(s: &str) -> Result<Statistics, CliError> {
    match s {
        "spin" => Ok(Statistics::Spin),
        "jordan-wigner" | "jw" => Ok(Statistics::JordanWigner),
        _ => Err(CliError::Usage(format!("statistics must be 'spin' or 'jordan-wigner', got '{s}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let file = FileConfig {
            n_list: Some(vec![2, 4]),
            a_list: Some(vec![0.5]),
            seed: Some(3),
            ..Default::default()
        };
        let flags = Overrides {
            n_list: Some(vec![8]),
            ..Default::default()
        };
        let c = ScanConfig::resolve(Mode::Fig1, file, flags).unwrap();
        assert_eq!(c.n_list, vec![8]);
        assert_eq!(c.seed, 3);
        assert_eq!(c.points.len(), 1);
        assert!(!c.temperature_input);
    }

    #[test]
    fn defaults_per_mode() {
        let c = ScanConfig::resolve(Mode::Fig1, FileConfig::default(), Overrides::default()).unwrap();
        assert_eq!(c.n_list, vec![1, 2, 4, 8, 16, 32]);
        assert_eq!(c.lattice, "inf");
        assert_eq!(c.points.len(), 2);
        assert!(c.points[0].0 < 1.0 && c.points[1].0 > 1.0);
        let c = ScanConfig::resolve(Mode::Fig2, FileConfig::default(), Overrides::default()).unwrap();
        assert_eq!(c.lattice, "18");
        assert_eq!(c.points.first().unwrap().0, 0.1);
        assert_eq!(c.points.last().unwrap().0, 3.0);
    }

    #[test]
    fn both_lists_rejected() {
        let flags = Overrides {
            a_list: Some(vec![1.0]),
            t_list: Some(vec![0.4]),
            ..Default::default()
        };
        assert!(matches!(
            ScanConfig::resolve(Mode::Fig1, FileConfig::default(), flags),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn round_trip_holds() {
        let c = ScanConfig::resolve(Mode::Fig2, FileConfig::default(), Overrides::default()).unwrap();
        for (a, t) in c.points {
            assert!((gww::a_of_t(t).unwrap() - a).abs() < ROUND_TRIP_TOL);
        }
    }

    #[test]
    fn toml_file_parses() {
        let f: FileConfig = toml::from_str(
            "mode = \"fig2\"\nn_list = [2, 3]\nlattice = 18\na_list = [0.5, 1.0]\nquad_rel_tol = 1e-8\n",
        )
        .unwrap();
        let c = ScanConfig::resolve(Mode::Fig2, f, Overrides::default()).unwrap();
        assert_eq!(c.lattice, "18");
        assert_eq!(c.quad_rel_tol, 1e-8);
        let bad: Result<FileConfig, _> = toml::from_str("nlist = [2]\n");
        assert!(bad.is_err());
    }
}

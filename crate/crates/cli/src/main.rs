//! `hpchain`: parameter scans, planar reference data, identity audits and
//! oracle comparisons written as versioned CSV or JSON tables.

mod cache;
mod config;
mod output;
mod scan;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hpchain::identities::{self, Manifest, Perturbation};

use config::{FileConfig, Format, Mode, Overrides, ScanConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IDENTITY: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<hpchain::Error> for CliError {
    fn from(e: hpchain::Error) -> Self {
        if scan::error_code(&e) == EXIT_USAGE {
            CliError::Usage(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Parser)]
#[command(name = "hpchain", version, about = "Coupling-averaged Loschmidt echo scans and matrix-model checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// ln <sqrt(L_N)> against N at two temperatures on the infinite chain.
    Fig1,
    /// ln <sqrt(L_N)> against a on a finite ring (L = 18 by default).
    Fig2,
    /// Polyakov loop from impurity echoes, with the planar reference.
    Polyakov,
    /// Planar solution: saddle, entropy density, phase and Polyakov loop.
    Gww,
    /// Audit of the determinant, Bessel, fermion and Heine-Szego identities.
    IdentityCheck,
    /// Determinant amplitudes against exact diagonalization on small rings.
    OracleCompare,
    /// Echo averaged over a Gaussian spread of a.
    Nested,
    /// Echo averaged at complex coupling.
    ComplexTemp,
}

impl Command {
    fn mode(self) -> Mode {
        match self {
            Command::Fig1 => Mode::Fig1,
            Command::Fig2 => Mode::Fig2,
            Command::Polyakov => Mode::Polyakov,
            Command::Gww => Mode::Gww,
            Command::IdentityCheck => Mode::IdentityCheck,
            Command::OracleCompare => Mode::OracleCompare,
            Command::Nested => Mode::Nested,
            Command::ComplexTemp => Mode::ComplexTemp,
        }
    }
}

#[derive(Args, Clone)]
struct Opts {
    /// TOML file with scan settings; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file (stdout if absent). An existing compatible file is resumed.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (all cores by default).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    a_list: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    t_list: Option<Vec<f64>>,
    /// `inf` or a ring size.
    #[arg(long, global = true)]
    lattice: Option<String>,
    /// Coupling profile J_n = profile[n-1] * J (K-neighbour chains).
    #[arg(long, global = true, value_delimiter = ',')]
    profile: Option<Vec<f64>>,
    /// Independent couplings with widths a * a_vec[n] (infinite chain, K <= 3).
    #[arg(long, global = true, value_delimiter = ',')]
    a_vec: Option<Vec<f64>>,
    /// Width parameter of the nested average.
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Phase of the complex coupling.
    #[arg(long, global = true, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Impurity displacement for the Polyakov loop.
    #[arg(long, global = true)]
    shift: Option<usize>,
    /// Monte Carlo samples per row instead of quadrature.
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
    #[arg(long, global = true, value_delimiter = ',')]
    j_list: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    l_list: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    /// `spin` or `jordan-wigner`.
    #[arg(long, global = true)]
    statistics: Option<String>,
    /// JSON identity manifest (identity-check).
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,
    /// Add a wall_time_ms column (breaks byte-for-byte reproducibility).
    #[arg(long, global = true)]
    timings: bool,
    #[arg(long, global = true, hide = true, allow_hyphen_values = true)]
    perturb: Option<f64>,
    #[arg(long, global = true, hide = true, default_value_t = 0)]
    perturb_offset: usize,
}

impl Opts {
    fn overrides(&self) -> Overrides {
        Overrides {
            n_list: self.n_list.clone(),
            lattice: self.lattice.clone(),
            l_list: self.l_list.clone(),
            a_list: self.a_list.clone(),
            t_list: self.t_list.clone(),
            profile: self.profile.clone(),
            a_vec: self.a_vec.clone(),
            b: self.b,
            phi: self.phi,
            shift: self.shift,
            k_list: self.k_list.clone(),
            j_list: self.j_list.clone(),
            statistics: self.statistics.clone(),
            tol: self.tol,
            mc_samples: self.mc_samples,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            manifest: self.manifest.clone(),
            timings: self.timings,
        }
    }
}

fn run_identity(cfg: &ScanConfig, perturb: Option<Perturbation>) -> Result<i32, CliError> {
    let manifest = match &cfg.manifest {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
            serde_json::from_str::<Manifest>(&text)
                .map_err(|e| CliError::Usage(format!("invalid manifest {}: {e}", path.display())))?
        }
        None => Manifest::default(),
    };
    manifest.validate()?;
    let reports = identities::run_manifest(&manifest, perturb)?;
    print!("{}", identities::render_table(&reports));
    let passed = reports.iter().all(|r| r.passed);
    if let Some(out) = &cfg.output_path {
        let doc = serde_json::json!({
            "schema": output::SCHEMA,
            "mode": Mode::IdentityCheck.name(),
            "manifest": manifest,
            "perturbation": perturb,
            "passed": passed,
            "reports": reports,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("report serializes");
        text.push('\n');
        std::fs::write(out, text).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    }
    Ok(if passed { EXIT_OK } else { EXIT_IDENTITY })
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(jobs) = cli.opts.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let file = match &cli.opts.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mode = cli.command.mode();
    let cfg = ScanConfig::resolve(mode, file, cli.opts.overrides())?;
    if mode == Mode::IdentityCheck {
        let perturb = cli.opts.perturb.map(|delta| Perturbation {
            offset: cli.opts.perturb_offset,
            delta,
        });
        return run_identity(&cfg, perturb);
    }
    scan::run(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("hpchain: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

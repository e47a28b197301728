//! Scan grids, per-row evaluation and the ordered, resumable writer loop.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use hpchain::average::{self, AverageParams, ChainKind, EchoFunction, NestedParams};
use hpchain::chain::{self, ChainSpec, Lattice};
use hpchain::gww::{self, Phase};
use hpchain::specfun::CouplingVector;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cache::{hash64, RowCache};
use crate::config::{parse_statistics, Mode, ScanConfig};
use crate::output::{self, num, Header, TableWriter, STATUS_OK};
use crate::CliError;

/// One grid point of a scan.
#[derive(Debug, Clone, Copy)]
enum Task {
    /// `(N, a, T)` on the configured lattice.
    Point { n: usize, a: f64, t: f64 },
    Planar { a: f64, t: f64 },
    Oracle { l: usize, n: usize, k: usize, j: f64 },
}

fn key_columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Gww => &["a", "T"],
        Mode::OracleCompare => &["L", "N", "K", "J"],
        _ => &["N", "L", "a", "T"],
    }
}

fn result_columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Fig1 | Mode::Fig2 => &["value", "error_estimate", "evaluations"],
        Mode::Polyakov => &["value", "reference", "plain", "impurity", "error_estimate"],
        Mode::Nested => &["value", "single", "error_estimate", "evaluations"],
        Mode::ComplexTemp => &["value", "sign", "error_estimate", "evaluations"],
        Mode::Gww => &["s", "sigma_star", "free_energy", "phase", "polyakov"],
        Mode::OracleCompare => &["determinant", "exact_diagonalization", "rel_error"],
        Mode::IdentityCheck => &[],
    }
}

fn notes(cfg: &ScanConfig) -> Vec<String> {
    let mut v = Vec::new();
    match cfg.mode {
        Mode::Fig1 | Mode::Fig2 => {
            v.push("value = ln <sqrt(L_N)>_{2a}, the coupling-averaged echo".into());
            if let Some(w) = &cfg.a_vec {
                v.push(format!(
                    "independent couplings J_1..J_{} averaged with widths a*{w:?} on the infinite chain",
                    w.len()
                ));
            }
            if let Some(s) = cfg.mc_samples {
                v.push(format!(
                    "Monte Carlo with {s} samples per row; error_estimate is the relative standard error; row seeds derive from seed and the row key"
                ));
            } else {
                v.push("error_estimate is the relative change between the last two quadrature refinements".into());
            }
        }
        Mode::Polyakov => {
            v.push(format!(
                "value = P = <sqrt(L_N^x)>_{{2a}} / <sqrt(L_N)>_{{2a}} / N with impurity shift p = {}",
                cfg.shift
            ));
            v.push(
                "normalization: the unnormalized ratio equals <Tr U> of the matrix model (checked against direct eigenvalue integrals for N <= 3), so dividing by N gives <Tr U>/N"
                    .into(),
            );
            v.push("reference = planar Polyakov loop at the same a; plain and impurity are ln of the two averages".into());
        }
        Mode::Nested => {
            v.push(format!(
                "value = ln of the average over a of <sqrt(L_N)>_{{2a}} with weight exp(-N^2 (mu - a)^2 / 4b) dmu/mu, normalized; b = {}",
                cfg.b
            ));
            v.push("single = ln <sqrt(L_N)>_{2a} without the outer average".into());
        }
        Mode::ComplexTemp => {
            v.push(format!(
                "value = ln |<L_N>| at complex coupling |a| e^{{i phi}}, phi = {}; sign is the sign of the average",
                cfg.phi
            ));
        }
        Mode::Gww => {
            v.push("planar solution: s = entropy density, sigma_star = saddle, free_energy = F(sigma_star), polyakov = F'(sigma_star)".into());
        }
        Mode::OracleCompare => {
            v.push(format!(
                "determinant amplitude vs exact diagonalization with {} statistics, couplings J_1..J_K all equal to J",
                cfg.statistics
            ));
        }
        Mode::IdentityCheck => {}
    }
    v
}

fn tasks(cfg: &ScanConfig) -> Vec<Task> {
    let mut out = Vec::new();
    match cfg.mode {
        Mode::Gww => {
            for &(a, t) in &cfg.points {
                out.push(Task::Planar { a, t });
            }
        }
        Mode::OracleCompare => {
            for &l in &cfg.l_list {
                for &n in &cfg.n_list {
                    for &k in &cfg.k_list {
                        for &j in &cfg.j_list {
                            out.push(Task::Oracle { l, n, k, j });
                        }
                    }
                }
            }
        }
        _ => {
            for &n in &cfg.n_list {
                for &(a, t) in &cfg.points {
                    out.push(Task::Point { n, a, t });
                }
            }
        }
    }
    out
}

fn key_cells(cfg: &ScanConfig, task: &Task) -> Vec<Value> {
    match *task {
        Task::Point { n, a, t } => vec![Value::from(n as u64), Value::from(cfg.lattice.clone()), num(a), num(t)],
        Task::Planar { a, t } => vec![num(a), num(t)],
        Task::Oracle { l, n, k, j } => vec![Value::from(l as u64), Value::from(n as u64), Value::from(k as u64), num(j)],
    }
}

/// Configuration fields that change a row's result for a fixed key.
fn result_settings(cfg: &ScanConfig) -> Value {
    json!({
        "lattice": cfg.lattice,
        "profile": cfg.profile,
        "a_vec": cfg.a_vec,
        "b": cfg.b,
        "phi": cfg.phi,
        "shift": cfg.shift,
        "statistics": cfg.statistics,
        "quad_rel_tol": cfg.quad_rel_tol,
        "mc_samples": cfg.mc_samples,
        "seed": cfg.seed,
    })
}

fn chain_kind(cfg: &ScanConfig) -> ChainKind {
    let lattice = cfg.lattice();
    if cfg.profile == [1.0] {
        ChainKind::xx(lattice)
    } else {
        ChainKind::Generalized {
            lattice,
            profile: cfg.profile.clone(),
        }
    }
}

/// Seed of a Monte-Carlo row: independent of grid order and thread count.
pub fn row_seed(seed: u64, key: &[Value]) -> u64 {
    hash64(&format!("{seed}:{}", Value::from(key.to_vec())))
}

fn averaged_cells(r: &average::Averaged) -> Vec<Value> {
    vec![num(r.ln()), num(r.error_estimate.abs()), Value::from(r.nodes as u64)]
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Gapped => "GAPPED",
        Phase::Ungapped => "UNGAPPED",
    }
}

fn evaluate(cfg: &ScanConfig, task: &Task, key: &[Value]) -> hpchain::Result<Vec<Value>> {
    let params = |a: f64| AverageParams::real(a)?.with_tolerance(cfg.quad_rel_tol);
    match *task {
        Task::Point { n, a, .. } => match cfg.mode {
            Mode::Fig1 | Mode::Fig2 => {
                if let Some(w) = &cfg.a_vec {
                    let a_vec: Vec<f64> = w.iter().map(|x| a * x).collect();
                    if let Some(samples) = cfg.mc_samples {
                        return monte_carlo_multi(n, &a_vec, samples, row_seed(cfg.seed, key));
                    }
                    return Ok(averaged_cells(&average::multi_gaussian_average(n, &a_vec, cfg.quad_rel_tol)?));
                }
                let kind = chain_kind(cfg);
                if let Some(samples) = cfg.mc_samples {
                    if n == 1 {
                        return Ok(vec![num(0.0), num(0.0), Value::from(samples as u64)]);
                    }
                    let f = EchoFunction::new(|j| average::sqrt_echo(&kind, n, j));
                    let r = average::monte_carlo_average(&f, a, samples, row_seed(cfg.seed, key))?;
                    return Ok(vec![num(r.value.ln_magnitude()), num(r.rel_std_error), Value::from(r.samples as u64)]);
                }
                Ok(averaged_cells(&average::averaged_echo(n, &params(a)?, &kind)?))
            }
            Mode::Polyakov => {
                let r = average::polyakov_ratio(n, &params(a)?, &chain_kind(cfg), cfg.shift)?;
                let err = r.plain.error_estimate.abs() + r.impurity.error_estimate.abs();
                Ok(vec![
                    num(r.ratio),
                    num(gww::planar_polyakov(a)?),
                    num(r.plain.ln()),
                    num(r.impurity.ln()),
                    num(err),
                ])
            }
            Mode::Nested => {
                let p = NestedParams::new(a, cfg.b, n)?;
                let kind = chain_kind(cfg);
                let r = average::nested_average(&p, &kind, cfg.quad_rel_tol)?;
                let norm = average::nested_normalization(&p)?;
                let single = average::averaged_echo(n, &params(a)?, &kind)?;
                Ok(vec![
                    num(r.ln() - norm),
                    num(single.ln()),
                    num(r.error_estimate.abs()),
                    Value::from(r.nodes as u64),
                ])
            }
            Mode::ComplexTemp => {
                let p = AverageParams::complex(a, cfg.phi)?.with_tolerance(cfg.quad_rel_tol)?;
                let r = average::complex_temperature_average(n, &p)?;
                Ok(vec![
                    num(r.ln()),
                    Value::from(r.value.sign() as i64),
                    num(r.error_estimate.abs()),
                    Value::from(r.nodes as u64),
                ])
            }
            _ => unreachable!("point tasks only exist for averaging modes"),
        },
        Task::Planar { a, .. } => {
            let r = gww::saddle_entropy(a)?;
            Ok(vec![
                num(r.entropy_density),
                num(r.sigma_star),
                num(r.free_energy),
                Value::from(phase_name(r.phase)),
                num(gww::planar_polyakov(a)?),
            ])
        }
        Task::Oracle { l, n, k, j } => {
            let stats = parse_statistics(&cfg.statistics).expect("validated at resolve time");
            let spec = ChainSpec::new(Lattice::Finite(l), CouplingVector::new(vec![j; k])?)?;
            let s = chain::psi0(n, spec.lattice())?;
            let det = chain::amplitude(&spec, &s, &s)?.value();
            let ed = chain::ed_oracle_echo_with(&spec, &s, &s, stats)?;
            let rel = if ed == 0.0 { (det - ed).abs() } else { ((det - ed) / ed).abs() };
            Ok(vec![num(det), num(ed), num(rel)])
        }
    }
}

/// Plain Monte Carlo over `K` independent couplings on the infinite chain.
fn monte_carlo_multi(n: usize, a_vec: &[f64], samples: usize, seed: u64) -> hpchain::Result<Vec<Value>> {
    use rand::{Rng, SeedableRng};
    if samples < 2 {
        return Err(hpchain::Error::InvalidArgument("need at least two samples".into()));
    }
    if n == 1 {
        return Ok(vec![num(0.0), num(0.0), Value::from(samples as u64)]);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            a_vec
                .iter()
                .map(|a| (-4.0 * a * (1.0 - rng.gen::<f64>()).ln()).sqrt())
                .collect()
        })
        .collect();
    let lns = draws
        .par_iter()
        .map(|js| {
            let spec = ChainSpec::new(Lattice::Infinite, CouplingVector::new(js.clone())?)?;
            Ok(chain::normalized_echo(&spec, n)?.sqrt_abs().ln_magnitude())
        })
        .collect::<hpchain::Result<Vec<f64>>>()?;
    let m = samples as f64;
    let ln_mean = hpchain::logvalue::log_sum_exp(&lns) - m.ln();
    let ln_second = hpchain::logvalue::log_sum_exp(&lns.iter().map(|v| 2.0 * v).collect::<Vec<_>>()) - m.ln();
    let var_rel = ((ln_second - 2.0 * ln_mean).exp() - 1.0).max(0.0);
    Ok(vec![
        num(ln_mean),
        num((var_rel / (m - 1.0)).sqrt()),
        Value::from(samples as u64),
    ])
}

/// Exit code class of a library error.
pub fn error_code(e: &hpchain::Error) -> i32 {
    use hpchain::Error::*;
    match e {
        InvalidArgument(_) | CostGuard { .. } | SizeMismatch { .. } => crate::EXIT_USAGE,
        NonConvergence { .. } | DegenerateRange(_) | ZeroNormalization(_) => crate::EXIT_NUMERICAL,
    }
}

/// Checks that hold for the whole grid and would otherwise fail every row.
fn precheck(cfg: &ScanConfig) -> Result<(), CliError> {
    match cfg.mode {
        Mode::Polyakov if cfg.n_list.iter().any(|&n| n < 2) => {
            Err(CliError::Usage("the Polyakov ratio needs N >= 2".into()))
        }
        Mode::Polyakov if cfg.shift == 0 => Err(CliError::Usage("the impurity shift must be >= 1".into())),
        Mode::OracleCompare => {
            let l_max = cfg.l_list.iter().copied().max().unwrap_or(0);
            if l_max > chain::ed::MAX_SITES {
                return Err(CliError::from(hpchain::Error::CostGuard {
                    what: "ring size L",
                    value: l_max,
                    limit: chain::ed::MAX_SITES,
                }));
            }
            Ok(())
        }
        Mode::Fig1 | Mode::Fig2 if cfg.a_vec.is_some() => {
            if cfg.lattice() != Lattice::Infinite {
                return Err(CliError::Usage("--a-vec averages are only available on the infinite chain".into()));
            }
            if cfg.profile != [1.0] {
                return Err(CliError::Usage("--a-vec and --profile cannot be combined".into()));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

fn partial_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

fn same_config(a: &str, b: &str) -> bool {
    match (serde_json::from_str::<Value>(a), serde_json::from_str::<Value>(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Runs a scan and returns the exit code.
pub fn run(cfg: &ScanConfig) -> Result<i32, CliError> {
    precheck(cfg)?;
    let mut columns: Vec<String> = key_columns(cfg.mode).iter().map(|s| s.to_string()).collect();
    let key_len = columns.len();
    columns.extend(result_columns(cfg.mode).iter().map(|s| s.to_string()));
    columns.push("status".into());
    if cfg.timings {
        columns.push("wall_time_ms".into());
    }
    let header = Header {
        mode: cfg.mode.name().into(),
        config: cfg.fingerprint(),
        notes: notes(cfg),
        columns,
    };

    // Rows finished by an earlier run with the same configuration.
    let mut done: HashMap<Vec<String>, Vec<Value>> = HashMap::new();
    if let Some(out) = &cfg.output_path {
        if let Some(prev) = output::read_table(out)? {
            if prev.header.mode != header.mode
                || !same_config(&prev.header.config, &header.config)
                || prev.header.columns != header.columns
            {
                return Err(CliError::Usage(format!(
                    "{} holds a scan with a different configuration; remove it or choose another --out",
                    out.display()
                )));
            }
            done = prev.completed(key_len);
        }
        // Leftovers of an interrupted rewrite count too, when compatible.
        if let Ok(Some(part)) = output::read_table(&partial_path(out)) {
            if part.header == header {
                for (k, v) in part.completed(key_len) {
                    done.entry(k).or_insert(v);
                }
            }
        }
    }

    let tasks = tasks(cfg);
    let keys: Vec<Vec<Value>> = tasks.iter().map(|t| key_cells(cfg, t)).collect();
    let cache = RowCache::from_env();
    let settings = result_settings(cfg);
    let n_results = result_columns(cfg.mode).len();

    let sink: Box<dyn Write> = match &cfg.output_path {
        Some(out) => Box::new(
            std::fs::File::create(partial_path(out))
                .map_err(|e| CliError::Io(format!("{}: {e}", partial_path(out).display())))?,
        ),
        None => Box::new(std::io::stdout()),
    };
    let mut writer = TableWriter::new(cfg.format, header, sink)?;

    let (tx, rx) = mpsc::channel::<(usize, Vec<Value>, i32)>();
    let mut exit = crate::EXIT_OK;
    std::thread::scope(|scope| -> Result<(), CliError> {
        let keys = &keys;
        let tasks = &tasks;
        let done = &done;
        let cache = cache.as_ref();
        let settings = &settings;
        scope.spawn(move || {
            (0..tasks.len()).into_par_iter().for_each_with(tx, |tx, i| {
                let key = &keys[i];
                let rendered: Vec<String> = key.iter().map(output::render_cell).collect();
                if let Some(row) = done.get(&rendered) {
                    let _ = tx.send((i, row.clone(), crate::EXIT_OK));
                    return;
                }
                let start = Instant::now();
                let cache_key = cache.map(|_| RowCache::key(cfg.mode.name(), key, settings));
                let cached = cache.zip(cache_key.as_ref()).and_then(|(c, k)| c.get(k));
                let (results, status, code) = match cached {
                    Some(cells) if cells.len() == n_results => (cells, STATUS_OK.to_string(), crate::EXIT_OK),
                    _ => match evaluate(cfg, &tasks[i], key) {
                        Ok(cells) => {
                            if let (Some(c), Some(k)) = (cache, cache_key.as_ref()) {
                                c.put(k, &cells);
                            }
                            (cells, STATUS_OK.to_string(), crate::EXIT_OK)
                        }
                        Err(e) => (vec![Value::Null; n_results], e.to_string(), crate::EXIT_NUMERICAL),
                    },
                };
                let mut row = key.clone();
                row.extend(results);
                row.push(Value::from(status));
                if cfg.timings {
                    row.push(Value::from(start.elapsed().as_millis() as u64));
                }
                let _ = tx.send((i, row, code));
            });
        });
        // Emit in grid order whatever order the rows finish in.
        let mut pending = BTreeMap::new();
        let mut next = 0;
        for (i, row, code) in rx {
            exit = exit.max(code);
            pending.insert(i, row);
            while let Some(row) = pending.remove(&next) {
                writer.row(&row)?;
                next += 1;
            }
        }
        Ok(())
    })?;
    writer.finish()?;
    if let Some(out) = &cfg.output_path {
        std::fs::rename(partial_path(out), out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    }
    if cfg.mode == Mode::OracleCompare {
        summarize_oracle(cfg)?;
    }
    Ok(exit)
}

/// Prints the largest relative error of a finished oracle comparison.
fn summarize_oracle(cfg: &ScanConfig) -> Result<(), CliError> {
    let Some(out) = &cfg.output_path else { return Ok(()) };
    let Some(table) = output::read_table(out)? else { return Ok(()) };
    let col = table.header.columns.iter().position(|c| c == "rel_error").expect("oracle column");
    let worst = table
        .rows
        .iter()
        .filter_map(|r| r.get(col).and_then(|c| c.parse::<f64>().ok()))
        .fold(0.0f64, f64::max);
    eprintln!("oracle-compare: {} rows, max rel error {worst:.3e}", table.rows.len());
    Ok(())
}

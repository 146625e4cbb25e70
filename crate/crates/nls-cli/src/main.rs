//! `nls`: command-line harness for the normal-form verification suites and
//! the truncated NLS simulator.
//!
//! Exit codes: 0 pass, 1 usage error, 2 verification failure, 3 numerical
//! failure. A `--config file` of `key = value` lines supplies defaults; flags
//! override. Reports are JSON with the fully resolved configuration embedded;
//! bulk data goes to CSV.

use clap::{Args, Parser, Subcommand};
use nls_core::coeffs::{
    admissible_partitions, chain_sum, chain_sum_p3_total, h_coeff_recurrence, h_coeff_trees,
    ratio_to_f64, sample_constrained_points, verify_vanishing, CoeffCache, CoeffError,
};
use nls_core::counting::{
    count_constrained_tuples, count_cubic_resonances, count_cubic_resonances_brute, divisor_count,
    divisor_counts_upto, scaling_report, CountQuery,
};
use nls_core::forest::generate_forest;
use nls_core::sim::{theorem1_experiment, RunConfig, SimError};
use serde::Serialize;
use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_USAGE: u8 = 1;
const EXIT_VERIFICATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "nls", version, about = "Normal-form machinery for cubic NLS on a torus")]
struct Cli {
    /// key = value defaults, overridden by flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustively check that the order-d coefficient vanishes on the
    /// constrained resonance set inside a box
    VerifyVanishing(VerifyArgs),
    /// Counting tables: divisors, cubic resonances, constrained tuples
    Count(CountArgs),
    /// Dump a coefficient table on random surface tuples (both computation paths)
    Coeff(CoeffArgs),
    /// Partition-chain sums against the closed form on sampled resonance tuples
    Chains(ChainArgs),
    /// Evolve Gaussian data and compare against the modified-scattering profile
    Simulate(SimArgs),
    /// Empirical growth of the resonant coefficient sums across L
    Scaling(ScalingArgs),
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "box")]
    box_k: Option<i64>,
    #[arg(long)]
    l: Option<i64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    #[arg(long, allow_hyphen_values = true)]
    mu_min: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    mu_max: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    mu_prime_min: Option<i64>,
    #[arg(long, allow_hyphen_values = true)]
    mu_prime_max: Option<i64>,
    /// also sweep divisor counts 1..=this against the sieve oracle
    #[arg(long)]
    divisors_upto: Option<i64>,
    /// count constrained tuples along the first depth-1 tree with |Ω| = this
    #[arg(long)]
    tuple_mu: Option<i64>,
    #[arg(long = "box")]
    box_k: Option<i64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CoeffArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long = "box")]
    box_k: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    tuples: Option<usize>,
    #[arg(long = "box")]
    box_k: Option<i64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    l: Option<i64>,
    #[arg(long)]
    n: Option<i64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    amp: Option<f64>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    with_q: bool,
    /// run the ε, ε/2, ε/4 grid and check the error trend
    #[arg(long)]
    grid: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    /// trajectory CSV (t, k, re, im at samples)
    #[arg(long)]
    traj: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    d: Option<usize>,
    /// comma-separated, e.g. 4,8,16,32
    #[arg(long)]
    l_list: Option<String>,
    #[arg(long)]
    ell: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// key = value defaults from --config; `#` starts a comment.
struct FileDefaults(HashMap<String, String>);

impl FileDefaults {
    fn load(path: Option<&PathBuf>) -> Result<Self, String> {
        let mut map = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            for line in text.lines() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| format!("malformed config line: {line}"))?;
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(FileDefaults(map))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| format!("config key {key}: cannot parse {v:?}")),
        }
    }
}

macro_rules! resolve {
    ($flag:expr, $cfg:expr, $key:literal, $default:expr) => {
        match $flag {
            Some(v) => v,
            None => $cfg.get($key)?.unwrap_or($default),
        }
    };
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not usage errors
            use clap::error::ErrorKind::*;
            let _ = e.print();
            return match e.kind() {
                DisplayHelp | DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let defaults = match FileDefaults::load(cli.config.as_ref()) {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let result = match cli.command {
        Command::VerifyVanishing(a) => cmd_verify(a, &defaults),
        Command::Count(a) => cmd_count(a, &defaults),
        Command::Coeff(a) => cmd_coeff(a, &defaults),
        Command::Chains(a) => cmd_chains(a, &defaults),
        Command::Simulate(a) => cmd_simulate(a, &defaults),
        Command::Scaling(a) => cmd_scaling(a, &defaults),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn write_output(path: Option<&PathBuf>, contents: &str) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            println!("{contents}");
            Ok(())
        }
    }
}

fn cmd_verify(a: VerifyArgs, cfg: &FileDefaults) -> Result<u8, String> {
    #[derive(Serialize)]
    struct Report<'a> {
        config: std::collections::BTreeMap<&'a str, i64>,
        #[serde(flatten)]
        result: nls_core::VanishingReport,
    }
    let d = resolve!(a.d, cfg, "d", 2);
    let box_k = resolve!(a.box_k, cfg, "box", 8);
    let l = resolve!(a.l, cfg, "l", 4);
    let result = match verify_vanishing(d, box_k, l) {
        Ok(r) => r,
        Err(CoeffError::OrderRange(d, lo, hi)) => {
            return Err(format!("d = {d} outside supported range {lo}..={hi}"))
        }
        Err(e) => return Err(e.to_string()),
    };
    let passed = result.passed();
    let report = Report {
        config: std::collections::BTreeMap::from([("L", l), ("box", box_k), ("d", d as i64)]),
        result,
    };
    write_output(
        a.output.as_ref(),
        &serde_json::to_string_pretty(&report).unwrap(),
    )?;
    Ok(if passed { 0 } else { EXIT_VERIFICATION })
}

fn cmd_count(a: CountArgs, cfg: &FileDefaults) -> Result<u8, String> {
    let mu_min = resolve!(a.mu_min, cfg, "mu_min", -20);
    let mu_max = resolve!(a.mu_max, cfg, "mu_max", 20);
    let mp_min = resolve!(a.mu_prime_min, cfg, "mu_prime_min", -20);
    let mp_max = resolve!(a.mu_prime_max, cfg, "mu_prime_max", 20);
    let mut out = String::from("kind,mu,mu_prime,n,closed_form,brute_force,agree\n");
    let mut all_agree = true;
    for mu in mu_min..=mu_max {
        for mu_prime in mp_min..=mp_max {
            let q = CountQuery { mu, mu_prime };
            let closed = count_cubic_resonances(q);
            let brute = count_cubic_resonances_brute(q);
            all_agree &= closed == brute;
            out.push_str(&format!(
                "cubic,{mu},{mu_prime},{},{closed},{brute},{}\n",
                mu_prime as i128 - (mu as i128).pow(2),
                closed == brute
            ));
        }
    }
    if let Some(upto) = a.divisors_upto.or(cfg.get("divisors_upto")?) {
        let sieve = divisor_counts_upto(upto.max(0) as usize);
        for n in 1..=upto.max(0) {
            let exact = divisor_count(n).map_err(|e| e.to_string())?;
            let agree = exact == sieve[n as usize] as u64;
            all_agree &= agree;
            out.push_str(&format!(
                "divisor,{n},,,{exact},{},{agree}\n",
                sieve[n as usize]
            ));
        }
    }
    if let Some(mu) = a.tuple_mu.or(cfg.get("tuple_mu")?) {
        let box_k = resolve!(a.box_k, cfg, "box", 8);
        let forest = generate_forest(1).map_err(|e| e.to_string())?;
        let c = count_constrained_tuples(&forest.trees[0], &[mu], box_k)
            .map_err(|e| e.to_string())?;
        out.push_str(&format!("constrained,{mu},,,{c},{c},true\n"));
    }
    write_output(a.output.as_ref(), out.trim_end())?;
    Ok(if all_agree { 0 } else { EXIT_VERIFICATION })
}

fn cmd_coeff(a: CoeffArgs, cfg: &FileDefaults) -> Result<u8, String> {
    let d = resolve!(a.d, cfg, "d", 2);
    let count = resolve!(a.count, cfg, "count", 100);
    let box_k = resolve!(a.box_k, cfg, "box", 6);
    let seed = resolve!(a.seed, cfg, "seed", 1);
    use nls_core::lattice::{linear_numer, ModeTuple};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut cache = CoeffCache::new();
    let mut out =
        String::from("d,tuple,target,value_recurrence,value_trees,two_pi_power,killed,agree\n");
    let mut all_agree = true;
    for _ in 0..count {
        let mut numers = vec![0i64; 2 * d + 1];
        for v in &mut numers {
            *v = rng.gen_range(-box_k..=box_k);
        }
        let target = linear_numer(&numers, 0);
        let t = ModeTuple::from_numerators(&numers, target);
        let (rec, tree) = match (
            h_coeff_recurrence(d, &t, &mut cache),
            h_coeff_trees(d, &t),
        ) {
            (Ok(r), Ok(v)) => (r, v),
            (Err(CoeffError::OrderRange(d, lo, hi)), _) => {
                return Err(format!("d = {d} outside supported range {lo}..={hi}"))
            }
            (r, v) => return Err(format!("coefficient evaluation failed: {r:?} / {v:?}")),
        };
        let agree = rec.value == tree.value && rec.two_pi_power == tree.two_pi_power;
        all_agree &= agree;
        out.push_str(&format!(
            "{d},\"{:?}\",{target},{:.12e},{:.12e},{},{},{agree}\n",
            numers,
            ratio_to_f64(&rec.value),
            ratio_to_f64(&tree.value),
            rec.two_pi_power,
            rec.killed
        ));
    }
    write_output(a.output.as_ref(), out.trim_end())?;
    Ok(if all_agree { 0 } else { EXIT_VERIFICATION })
}

fn cmd_chains(a: ChainArgs, cfg: &FileDefaults) -> Result<u8, String> {
    #[derive(Serialize)]
    struct Report {
        d: usize,
        tuples_checked: usize,
        chains_checked: usize,
        mismatches: usize,
        p3_sum_zero_failures: usize,
    }
    let d = resolve!(a.d, cfg, "d", 2);
    let tuples = resolve!(a.tuples, cfg, "tuples", 50);
    let box_k = resolve!(a.box_k, cfg, "box", 10);
    let seed = resolve!(a.seed, cfg, "seed", 1);
    let points = sample_constrained_points(d, box_k, tuples, seed).map_err(|e| e.to_string())?;
    let mut report = Report {
        d,
        tuples_checked: 0,
        chains_checked: 0,
        mismatches: 0,
        p3_sum_zero_failures: 0,
    };
    use num_traits::Zero;
    for t in &points {
        if t.differences().iter().any(|&l| l == 0) {
            continue;
        }
        report.tuples_checked += 1;
        for blocks in (3..=2 * d + 1).step_by(2) {
            for part in admissible_partitions(2 * d + 1, blocks) {
                let check = chain_sum(&part, t).map_err(|e| e.to_string())?;
                report.chains_checked += 1;
                if !check.equal {
                    report.mismatches += 1;
                }
            }
        }
        if !chain_sum_p3_total(t).map_err(|e| e.to_string())?.is_zero() {
            report.p3_sum_zero_failures += 1;
        }
    }
    let passed = report.mismatches == 0 && report.p3_sum_zero_failures == 0;
    write_output(
        a.output.as_ref(),
        &serde_json::to_string_pretty(&report).unwrap(),
    )?;
    Ok(if passed { 0 } else { EXIT_VERIFICATION })
}

fn cmd_simulate(a: SimArgs, cfg: &FileDefaults) -> Result<u8, String> {
    let base = RunConfig::default();
    let config = RunConfig {
        l: resolve!(a.l, cfg, "l", base.l),
        n: resolve!(a.n, cfg, "n", base.n),
        eps: resolve!(a.eps, cfg, "eps", base.eps),
        amp: resolve!(a.amp, cfg, "amp", base.amp),
        ell: resolve!(a.ell, cfg, "ell", base.ell),
        m: resolve!(a.m, cfg, "m", base.m),
        dt: resolve!(a.dt, cfg, "dt", base.dt),
        samples: resolve!(a.samples, cfg, "samples", base.samples),
        p_order: resolve!(a.p, cfg, "p", base.p_order),
        with_q: a.with_q || cfg.get("with_q")?.unwrap_or(false),
    };
    config.validate().map_err(|e| e.to_string())?;

    if a.grid {
        #[derive(Serialize)]
        struct GridReport {
            config: RunConfig,
            eps_grid: Vec<f64>,
            sup_errors: Vec<f64>,
            monotone_decreasing: bool,
            reports: Vec<nls_core::ExperimentReport>,
        }
        let mut reports = Vec::new();
        for divisor in [1.0, 2.0, 4.0] {
            let run = RunConfig { eps: config.eps / divisor, ..config.clone() };
            match run_experiment(&run)? {
                Ok(r) => reports.push(r),
                Err(code) => return Ok(code),
            }
        }
        let sup_errors: Vec<f64> = reports.iter().map(|r| r.sup_profile_error).collect();
        let monotone = sup_errors.windows(2).all(|w| w[1] < w[0]);
        let report = GridReport {
            eps_grid: reports.iter().map(|r| r.config.eps).collect(),
            sup_errors,
            monotone_decreasing: monotone,
            config,
            reports,
        };
        write_output(
            a.report.as_ref(),
            &serde_json::to_string_pretty(&report).unwrap(),
        )?;
        return Ok(if monotone { 0 } else { EXIT_VERIFICATION });
    }

    let report = match run_experiment(&config)? {
        Ok(r) => r,
        Err(code) => return Ok(code),
    };
    if let Some(path) = &a.traj {
        let traj = trajectory_csv(&config)?;
        fs::write(path, traj).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    let passed = report.passed;
    write_output(
        a.report.as_ref(),
        &serde_json::to_string_pretty(&report).unwrap(),
    )?;
    Ok(if passed { 0 } else { EXIT_NUMERICAL })
}

/// Outer Err: usage-level problem. Inner Err: a numerical-failure exit code,
/// already reported on stderr (integrator instability shows up as mass drift).
fn run_experiment(
    config: &RunConfig,
) -> Result<Result<nls_core::ExperimentReport, u8>, String> {
    match theorem1_experiment(config) {
        Ok(r) => Ok(Ok(r)),
        Err(e @ SimError::MassDrift { .. }) => {
            eprintln!("numerical failure: {e}");
            Ok(Err(EXIT_NUMERICAL))
        }
        Err(e) => Err(e.to_string()),
    }
}

fn trajectory_csv(config: &RunConfig) -> Result<String, String> {
    use nls_core::sim::{evolve_with, gaussian_profile, SpectralState};
    let f0 = gaussian_profile(config.amp, config.n, config.l);
    let state = SpectralState::new(f0, config.n, config.l, config.eps);
    let steps = (config.t_end() / config.dt).ceil() as usize;
    let stride = (steps / config.samples.max(1)).max(1);
    let mut out = String::from("t,k,re,im\n");
    evolve_with(&state, config.t_end(), config.dt, stride, |s| {
        for k in -s.n..=s.n {
            let u = s.amp(k);
            out.push_str(&format!("{:.9e},{k},{:.12e},{:.12e}\n", s.t, u.re, u.im));
        }
    })
    .map_err(|e| e.to_string())?;
    Ok(out)
}

fn cmd_scaling(a: ScalingArgs, cfg: &FileDefaults) -> Result<u8, String> {
    let d = resolve!(a.d, cfg, "d", 2);
    let l_list_str = resolve!(a.l_list, cfg, "l_list", "4,8,16,32".to_string());
    let ell = resolve!(a.ell, cfg, "ell", 1.5);
    let trials = resolve!(a.trials, cfg, "trials", 4);
    let seed = resolve!(a.seed, cfg, "seed", 1);
    let l_list: Vec<i64> = l_list_str
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("bad L value {s:?}")))
        .collect::<Result<_, _>>()?;
    let rows = scaling_report(d, &l_list, ell, trials, seed).map_err(|e| e.to_string())?;
    let mut out = String::from("L,sum_value,bound_exponent,fitted_slope\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{:.9e},{},{:.6}\n",
            r.l, r.sum_value, r.bound_exponent, r.fitted_slope
        ));
    }
    write_output(a.output.as_ref(), out.trim_end())?;
    let ok = rows
        .first()
        .map(|r| r.fitted_slope <= r.bound_exponent + 0.5)
        .unwrap_or(true);
    Ok(if ok { 0 } else { EXIT_VERIFICATION })
}

//! The `demcoh` command line: `audit`, `bounds` and `oracle`.
//!
//! Exit codes: 0 for success (audit verdict pass or inconclusive), 2 for an
//! audit verdict of fail, 1 for any usage or runtime error. Errors are
//! written to standard output as a JSON object `{"error": {...}}`.

pub mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::bounds::{
    exact_max_information, gamma_approx_dp, gamma_from_maxinfo, gamma_pure_dp, max_epsilon_for, ApproxFormula,
    CoherenceParams, DpRegime, JointTable,
};
use crate::concentration::{
    azuma_tail, claim2_boundary_mu, claim2_incoherence_bound, claim2_size_terms, hypergeom_exact,
    hypergeom_tail_bound, mcdiarmid_without_replacement, HypergeomParams,
};
use crate::data::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::experiment::Verdict;
use crate::metric::{wasserstein1, wasserstein1_transport, TRANSPORT_ORACLE_MAX_SUPPORT};

pub use config::{load_csv, run_audit, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "demcoh", version, about = "Demographic coherence auditing and bound calculators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the coherence experiment described by a JSON config.
    Audit(AuditArgs),
    /// Evaluate a coherence bound, or invert it for epsilon.
    Bounds(BoundsArgs),
    /// Exact oracles and tail bounds.
    Oracle {
        #[command(subcommand)]
        which: OracleCommand,
    },
}

fn real(s: &str) -> std::result::Result<f64, String> {
    s.trim().parse::<f64>().map_err(|e| format!("`{s}` is not a number: {e}"))
}

/// Non-negative integer, also accepting forms like `1e3`.
fn count(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v = real(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v <= 9_007_199_254_740_992.0 {
        Ok(v as u64)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

/// A comma-separated list of reals.
#[derive(Clone, Debug)]
struct Sample(Vec<f64>);

fn reals(s: &str) -> std::result::Result<Sample, String> {
    s.split(',').map(real).collect::<std::result::Result<_, _>>().map(Sample)
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = real)]
    alpha: Option<f64>,
    /// A positive integer or `from-bounds`.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long, value_parser = count)]
    trials: Option<u64>,
    #[arg(long, value_parser = count)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    null_token: Option<String>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, value_parser = count)]
    threads: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RegimeArg {
    Maxinfo,
    Pure,
    Approx,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormulaArg {
    ProofBacked,
    Printed265,
    Printed133,
}

impl From<FormulaArg> for ApproxFormula {
    fn from(f: FormulaArg) -> Self {
        match f {
            FormulaArg::ProofBacked => ApproxFormula::ProofBacked,
            FormulaArg::Printed265 => ApproxFormula::Printed265,
            FormulaArg::Printed133 => ApproxFormula::Printed133,
        }
    }
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long, value_enum, default_value = "maxinfo")]
    regime: RegimeArg,
    #[arg(long, value_parser = real)]
    alpha: f64,
    #[arg(long, value_parser = real)]
    beta: f64,
    #[arg(long, value_parser = count, default_value = "1")]
    collection_size: u64,
    /// Total dataset size; the curator sees half of it.
    #[arg(long, value_parser = count)]
    n: Option<u64>,
    #[arg(long, value_parser = real)]
    zeta: Option<f64>,
    #[arg(long, value_parser = real)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = real)]
    delta: Option<f64>,
    #[arg(long, value_enum, default_value = "proof-backed")]
    formula: FormulaArg,
    /// Return the largest epsilon meeting --target-gamma.
    #[arg(long, requires = "target_gamma")]
    invert: bool,
    #[arg(long, value_parser = real)]
    target_gamma: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Exact hypergeometric pmf for `s` draws from `b` items with `a` special.
    Hypergeom {
        #[arg(long, value_parser = count)]
        b: u64,
        #[arg(long, value_parser = count)]
        a: u64,
        #[arg(long, value_parser = count)]
        s: u64,
        /// Also report exact tails and the closed-form bound at this deviation.
        #[arg(long, value_parser = real)]
        dev: Option<f64>,
    },
    /// Wasserstein-1 distance between two comma-separated samples.
    W1 {
        #[arg(long, allow_hyphen_values = true, value_parser = reals)]
        p: Sample,
        #[arg(long, allow_hyphen_values = true, value_parser = reals)]
        q: Sample,
    },
    /// Exact approximate max-information of a joint table stored as JSON rows.
    MaxinfoExact {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, value_parser = real, default_value = "0")]
        beta_level: f64,
    },
    /// McDiarmid bound for sampling `m` of `n` without replacement.
    Mcdiarmid {
        #[arg(long, value_parser = count)]
        n: u64,
        #[arg(long, value_parser = count)]
        m: u64,
        #[arg(long, value_parser = real)]
        sensitivity: f64,
        #[arg(long, value_parser = real)]
        t: f64,
    },
    /// Azuma tail for a bounded-difference sequence with drift.
    Azuma {
        #[arg(long, value_parser = count)]
        n: u64,
        #[arg(long, value_parser = real)]
        step: f64,
        #[arg(long, value_parser = real, default_value = "0")]
        drift: f64,
        #[arg(long, value_parser = real)]
        t: f64,
    },
    /// Split-independent incoherence bound `2(1+m)μ`.
    Claim2 {
        #[arg(long, value_parser = count)]
        m: u64,
        #[arg(long, value_parser = real)]
        alpha: f64,
        /// Defaults to the smallest μ the size hypotheses allow.
        #[arg(long, value_parser = real)]
        mu: Option<f64>,
    },
}

/// Entry point used by the binary; returns the process exit code.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    run(std::env::args_os(), &mut stdout.lock())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let _ = writeln!(
                out,
                "{}",
                json!({ "error": { "kind": "usage", "message": e.kind().to_string(), "detail": e.to_string() } })
            );
            return EXIT_ERROR;
        }
    };
    let result = match cli.command {
        Command::Audit(a) => cmd_audit(a, out),
        Command::Bounds(b) => cmd_bounds(b).and_then(|v| emit(out, &v).map(|_| EXIT_OK)),
        Command::Oracle { which } => cmd_oracle(which).and_then(|v| emit(out, &v).map(|_| EXIT_OK)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "{}", e.to_json());
            EXIT_ERROR
        }
    }
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_audit(args: AuditArgs, out: &mut dyn Write) -> Result<i32> {
    let mut config = RunConfig::from_path(&args.config)?;
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(g) = &args.gamma {
        config.gamma = config::GammaSpec::parse(g)?;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(d) = args.dataset {
        config.dataset = d;
    }
    if let Some(n) = args.null_token {
        config.null_token = n;
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let threads = args.threads.map(|t| t as usize);
    let report = run_audit(&config, &base, threads)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    match &args.out {
        Some(path) => std::fs::write(path, &text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(match report.verdict {
        Verdict::Fail => EXIT_FAIL,
        Verdict::Pass | Verdict::Inconclusive => EXIT_OK,
    })
}

fn need<T>(v: Option<T>, flag: &str, regime: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("--{flag} is required for the {regime} regime")))
}

fn cmd_bounds(a: BoundsArgs) -> Result<serde_json::Value> {
    let n = a.n.unwrap_or(0);
    let p = CoherenceParams::new(a.alpha, a.beta, a.collection_size, n);
    if a.invert {
        let target = need(a.target_gamma, "target-gamma", "inverse")?;
        let regime = match a.regime {
            RegimeArg::Pure => DpRegime::Pure,
            RegimeArg::Approx => DpRegime::Approx {
                delta: need(a.delta, "delta", "approx")?,
                formula: a.formula.into(),
            },
            RegimeArg::Maxinfo => return Err(Error::Config("--invert needs --regime pure or approx".into())),
        };
        need(a.n, "n", "inverse")?;
        return Ok(serde_json::to_value(max_epsilon_for(target, &p, regime)?)?);
    }
    let result = match a.regime {
        RegimeArg::Maxinfo => gamma_from_maxinfo(need(a.zeta, "zeta", "maxinfo")?, &p)?,
        RegimeArg::Pure => {
            need(a.n, "n", "pure")?;
            gamma_pure_dp(need(a.epsilon, "epsilon", "pure")?, &p)?
        }
        RegimeArg::Approx => {
            need(a.n, "n", "approx")?;
            gamma_approx_dp(
                need(a.epsilon, "epsilon", "approx")?,
                need(a.delta, "delta", "approx")?,
                &p,
                a.formula.into(),
            )?
        }
    };
    Ok(serde_json::to_value(result)?)
}

fn cmd_oracle(which: OracleCommand) -> Result<serde_json::Value> {
    match which {
        OracleCommand::Hypergeom { b, a, s, dev } => {
            let params = HypergeomParams::new(b, a, s)?;
            let table = hypergeom_exact(&params)?;
            let pmf: Vec<_> = (table.k_min..=table.k_max())
                .map(|k| json!({ "k": k, "p": table.pmf_at(k) }))
                .collect();
            let mut v = json!({
                "population": b,
                "special": a,
                "sample": s,
                "mean": params.mean(),
                "tail_constant": params.tail_constant(),
                "pmf": pmf,
            });
            if let Some(dev) = dev {
                let mean = params.mean();
                v["deviation"] = json!({
                    "dev": dev,
                    "upper_tail": table.upper_tail(mean + dev),
                    "lower_tail": table.lower_tail(mean - dev),
                    "bound": hypergeom_tail_bound(&params, dev)?,
                });
            }
            Ok(v)
        }
        OracleCommand::W1 { p, q } => {
            let (dp, dq) = (EmpiricalDistribution::new(p.0)?, EmpiricalDistribution::new(q.0)?);
            let transport = match wasserstein1_transport(&dp, &dq) {
                Ok(t) => json!(t),
                Err(Error::OracleScope(_)) => serde_json::Value::Null,
                Err(e) => return Err(e),
            };
            Ok(json!({
                "distance": wasserstein1(&dp, &dq),
                "transport": transport,
                "transport_max_support": TRANSPORT_ORACLE_MAX_SUPPORT,
            }))
        }
        OracleCommand::MaxinfoExact { table, beta_level } => {
            let rows: Vec<Vec<f64>> = serde_json::from_str(&std::fs::read_to_string(&table)?)?;
            let joint = JointTable::new(rows)?;
            let value = exact_max_information(&joint, beta_level)?;
            Ok(json!({ "beta_level": beta_level, "max_information": value, "bits": value / std::f64::consts::LN_2 }))
        }
        OracleCommand::Mcdiarmid { n, m, sensitivity, t } => {
            Ok(serde_json::to_value(mcdiarmid_without_replacement(n, m, sensitivity, t)?)?)
        }
        OracleCommand::Azuma { n, step, drift, t } => Ok(serde_json::to_value(azuma_tail(n, step, drift, t)?)?),
        OracleCommand::Claim2 { m, alpha, mu } => {
            let mu = mu.unwrap_or_else(|| claim2_boundary_mu(m, alpha));
            let bound = claim2_incoherence_bound(m, alpha, mu)?;
            let terms: serde_json::Map<String, serde_json::Value> = claim2_size_terms(alpha, mu)
                .into_iter()
                .map(|(k, v)| (k.to_string(), json!(v)))
                .collect();
            Ok(json!({ "m": m, "alpha": alpha, "mu": mu, "size_terms": terms, "bound": bound }))
        }
    }
}

//! `zetasize`: size estimates, oracles and validation suites from the command line.
//!
//! Exit codes: 0 finite (or all checks passed), 3 infinite, 2 estimate/oracle
//! disagreement or failed suite, 1 error.

mod family;
mod input;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use zetasize::arp::{regularize_integral, sample_theta_integral, ArpExpr, InnerMethod, ThetaOptions};
use zetasize::estimator::{estimate, is_finite, local_slack, Denominator};
use zetasize::germ::{Germ, GermFamily};
use zetasize::oracle::{
    compare, integrate_disk, integrate_disk_mc, ArpIntegrand, ComparePair, DiskOptions, OracleError, OracleResult,
};
use zetasize::polynomial::vanishing_order;
use zetasize::scales::{absolute_scales, ScaleTable, EXACT_SCALES_LIMIT, F_R_DEGREE_LIMIT, R_DISCRIMINANT_LIMIT};
use zetasize::stability::{
    continuity_probe, critical_exponent, distribution_mu, iterated_estimate_2d, perturbation_probe, IteratedOptions,
    PerturbationOptions, Verdict, WeierstrassOptions,
};
use zetasize::suite::{run_all, run_suite, SuiteConfig, SUITE_NAMES};
use zetasize::{ComplexPoly, EstimateOptions, ExponentPair};

use family::{FamilySpec, OracleKind};

const EXIT_FINITE: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_DISAGREE: u8 = 2;
const EXIT_INFINITE: u8 = 3;

#[derive(Parser)]
#[command(name = "zetasize", version, about = "Size estimates for integrals of |P|^ε/|Q|^δ")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
struct Common {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Root clustering tolerance; defaults to a per-polynomial value.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Relative accuracy target for quadrature oracles.
    #[arg(long, global = true, default_value_t = 1e-2)]
    rel_target: f64,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Serialize)]
struct RationalInput {
    /// Numerator, JSON `[[re, im], …]` in ascending powers, or `@file`.
    #[arg(long = "P", value_parser = input::poly, default_value = "[[1,0]]")]
    #[serde(rename = "P")]
    p: ComplexPoly,
    /// Denominator, same encoding as `--P`.
    #[arg(long = "Q", value_parser = input::poly)]
    #[serde(rename = "Q")]
    q: ComplexPoly,
    /// Numerator exponent ε as `p/q`.
    #[arg(long, value_parser = input::rational, default_value = "0")]
    eps: String,
    /// Denominator exponent δ as `p/q`.
    #[arg(long, value_parser = input::rational)]
    delta: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Size of ∫_{B_Λ} |P|^ε/|Q|^δ from the root scales.
    Estimate(RationalInput),
    /// Exact finiteness verdict with the per-root slack 2 − mδ + νε.
    Finiteness(RationalInput),
    /// Local and absolute scale tables of the roots of Q.
    Scales {
        #[arg(long = "Q", value_parser = input::poly)]
        #[serde(rename = "Q")]
        q: ComplexPoly,
    },
    /// Estimates against oracles over a family of instances.
    Compare {
        /// Family spec as JSON or `@file`.
        #[arg(long, value_parser = input::json::<FamilySpec>)]
        family: FamilySpec,
    },
    /// Critical integrability exponent of a germ.
    Lct {
        #[arg(long, value_parser = input::germ)]
        germ: Germ,
        /// Bisection bracket for two variables.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.1, 3.9])]
        bracket: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        precision: f64,
    },
    /// Runs a validation suite by name, or `all`.
    Suite {
        name: String,
        /// A tenth of the instances.
        #[arg(long)]
        quick: bool,
    },
    /// Phase-grid infimum for a sum of absolute values in the denominator.
    ThetaSample {
        #[arg(long = "P", value_parser = input::poly, default_value = "[[1,0]]")]
        #[serde(rename = "P")]
        p: ComplexPoly,
        /// One denominator term per occurrence.
        #[arg(long = "Q", value_parser = input::poly, required = true)]
        #[serde(rename = "Q")]
        qs: Vec<ComplexPoly>,
        #[arg(long, value_parser = input::rational, default_value = "0")]
        eps: String,
        #[arg(long, value_parser = input::rational)]
        delta: String,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Inner integrals by quadrature instead of the size estimate.
        #[arg(long)]
        oracle_inner: bool,
    },
    /// Trace of ∫ |P|^ε/(|Q| + μ^N)^δ as μ decreases.
    Regularize {
        #[command(flatten)]
        #[serde(flatten)]
        input: RationalInput,
        /// Decreasing μ values, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6])]
        mus: Vec<f64>,
        /// Cap on integrand evaluations.
        #[arg(long, default_value_t = 100_000_000)]
        budget: u64,
    },
    /// Several-variable probes.
    #[command(subcommand)]
    Stability(StabilityCommand),
    /// Sublevel volumes Vol{|f| < α} on a polydisk.
    Distfn {
        /// One germ per occurrence; the tuple uses the Euclidean norm.
        #[arg(long, value_parser = input::germ, required = true)]
        germ: Vec<Germ>,
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        /// Also checks the Chebychev bound Vol ≤ α^δ ∫|f|^{−δ}.
        #[arg(long)]
        delta: Option<f64>,
    },
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "probe")]
enum StabilityCommand {
    /// ∫|f|^{−δ} over a polydisk in two variables by iterated slice estimates.
    Iterated {
        #[arg(long, value_parser = input::germ)]
        germ: Germ,
        #[arg(long)]
        delta: f64,
        #[arg(long, num_args = 2, value_names = ["R1", "R2"], default_values_t = [1.0, 1.0])]
        radii: Vec<f64>,
    },
    /// I(c) along a path in the family parameter, with grid refinement.
    Continuity {
        #[arg(long, value_parser = input::family)]
        family: GermFamily,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
        /// Parameter values as JSON `[[re, im], …]`.
        #[arg(long, value_parser = input::complex_list)]
        path: input::Points,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Relative change of the integral under random perturbations of size ρ.
    Perturbation {
        #[arg(long, value_parser = input::germ, required = true)]
        germ: Vec<Germ>,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-1, 1e-2, 1e-3])]
        rhos: Vec<f64>,
        #[arg(long, default_value_t = 4)]
        perturbations: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

/// Everything needed to reproduce a run; embedded in every output.
#[derive(Serialize)]
struct RunConfig<'a> {
    version: &'static str,
    seed: u64,
    root_tol: Option<f64>,
    rel_target: f64,
    guards: Guards,
    format: Format,
    out: Option<&'a PathBuf>,
    params: &'a Command,
}

#[derive(Serialize)]
struct Guards {
    exact_scales_limit: usize,
    r_discriminant_limit: usize,
    f_r_degree_limit: usize,
}

struct Output {
    result: Value,
    csv: Option<String>,
    code: u8,
}

impl Output {
    fn json(result: impl Serialize, code: u8) -> Result<Self, String> {
        Ok(Self {
            result: serde_json::to_value(result).map_err(|e| e.to_string())?,
            csv: None,
            code,
        })
    }
}

fn verdict_code(infinite: bool) -> u8 {
    if infinite {
        EXIT_INFINITE
    } else {
        EXIT_FINITE
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn pair(eps: &str, delta: &str) -> Result<ExponentPair, String> {
    ExponentPair::parse(eps, delta).map_err(err)
}

fn estimate_options(common: &Common) -> EstimateOptions {
    EstimateOptions {
        tol: common.tol,
        ..EstimateOptions::default()
    }
}

fn run(common: &Common, command: &Command) -> Result<Output, String> {
    let opts = estimate_options(common);
    match command {
        Command::Estimate(i) => {
            let est = estimate(&i.p, &i.q, &pair(&i.eps, &i.delta)?, i.lambda, &opts).map_err(err)?;
            let code = verdict_code(est.is_infinite());
            Output::json(est, code)
        }
        Command::Finiteness(i) => {
            let pr = pair(&i.eps, &i.delta)?;
            let finite = is_finite(&i.p, &i.q, &pr, &opts).map_err(err)?;
            let den = Denominator::from_poly(&i.q, opts.tol).map_err(err)?;
            let roots = den
                .roots
                .roots()
                .iter()
                .map(|r| {
                    let nu = vanishing_order(&i.p, r.z, opts.vanish_tol).map_err(err)?;
                    Ok(json!({
                        "root": [r.z.re, r.z.im],
                        "multiplicity": r.multiplicity,
                        "nu": nu,
                        "slack": local_slack(&pr, r.multiplicity, nu).to_string(),
                    }))
                })
                .collect::<Result<Vec<_>, String>>()?;
            Output::json(json!({ "finite": finite, "roots": roots }), verdict_code(!finite))
        }
        Command::Scales { q } => {
            let den = Denominator::from_poly(q, opts.tol).map_err(err)?;
            let table = ScaleTable::build(&den.roots);
            let abs = absolute_scales(&den.roots);
            let csv = scales_csv(&table).map_err(err)?;
            let mut out = Output::json(json!({ "table": table, "absolute": abs.0 }), EXIT_FINITE)?;
            out.csv = Some(csv);
            Ok(out)
        }
        Command::Compare { family } => run_compare(common, family),
        Command::Lct {
            germ,
            bracket,
            precision,
        } => {
            let io = IteratedOptions {
                weierstrass: WeierstrassOptions {
                    seed: common.seed,
                    ..WeierstrassOptions::default()
                },
                rel_target: common.rel_target,
                ..IteratedOptions::default()
            };
            let r = critical_exponent(germ, (bracket[0], bracket[1]), *precision, &io).map_err(err)?;
            Output::json(r, EXIT_FINITE)
        }
        Command::Suite { name, quick } => {
            let cfg = SuiteConfig {
                seed: common.seed,
                quick: *quick,
            };
            let reports = if name == "all" {
                run_all(&cfg)
            } else {
                vec![run_suite(name, &cfg).map_err(|e| format!("usage: {e}"))?]
            };
            for r in &reports {
                eprintln!("{}", r.line());
            }
            let code = if reports.iter().all(|r| r.passed) {
                EXIT_FINITE
            } else {
                EXIT_DISAGREE
            };
            Output::json(reports, code)
        }
        Command::ThetaSample {
            p,
            qs,
            eps,
            delta,
            lambda,
            oracle_inner,
        } => {
            let to = ThetaOptions {
                inner: if *oracle_inner {
                    InnerMethod::Oracle
                } else {
                    InnerMethod::Estimator
                },
                rel_target: common.rel_target,
                ..ThetaOptions::default()
            };
            let r = sample_theta_integral(p, qs, &pair(eps, delta)?, *lambda, 2, &to).map_err(err)?;
            let code = verdict_code(r.inf.is_infinite());
            Output::json(r, code)
        }
        Command::Regularize { input, mus, budget } => {
            let expr = ArpExpr::rational(input.p.clone(), input.q.clone(), pair(&input.eps, &input.delta)?).map_err(err)?;
            let t = regularize_integral(&expr, mus, input.lambda, *budget, common.rel_target).map_err(err)?;
            let code = verdict_code(t.diverging);
            Output::json(t, code)
        }
        Command::Stability(s) => run_stability(common, s),
        Command::Distfn {
            germ,
            alphas,
            radius,
            samples,
            delta,
        } => {
            let pts = distribution_mu(germ, alphas, *radius, *samples, common.seed, *delta).map_err(err)?;
            let code = if pts.iter().any(|p| p.violated) {
                EXIT_DISAGREE
            } else {
                EXIT_FINITE
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            for p in &pts {
                w.serialize(p).map_err(err)?;
            }
            let csv = String::from_utf8(w.into_inner().map_err(err)?).map_err(err)?;
            let mut out = Output::json(pts, code)?;
            out.csv = Some(csv);
            Ok(out)
        }
    }
}

fn scales_csv(table: &ScaleTable) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let n = table.scales.first().map_or(0, Vec::len);
    let mut header = vec!["root_re".to_string(), "root_im".into(), "multiplicity".into()];
    header.extend((0..n).map(|k| format!("L{k}")));
    w.write_record(&header)?;
    for ((z, m), row) in table.roots.iter().zip(&table.multiplicities).zip(&table.scales) {
        let mut rec = vec![z.re.to_string(), z.im.to_string(), m.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

fn run_compare(common: &Common, spec: &FamilySpec) -> Result<Output, String> {
    let pr = pair(&spec.eps, &spec.delta)?;
    let instances = spec.expand(common.seed)?;
    if instances.is_empty() {
        return Err("usage: the family has no instances".into());
    }
    let opts = estimate_options(common);
    let disk = DiskOptions {
        rel_target: common.rel_target,
        ..DiskOptions::default()
    };
    let mut pairs = Vec::with_capacity(instances.len());
    let mut mc_pairs = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        let est = estimate(&inst.p, &inst.q, &pr, spec.lambda, &opts).map_err(err)?;
        let id = inst.id.clone().unwrap_or_else(|| i.to_string());
        let oracle = match spec.oracle {
            OracleKind::Stub => OracleResult::exact(est.value, "stub"),
            OracleKind::Disk => {
                let f = ArpIntegrand::from_polys(&inst.p, &inst.q, pr.eps_f64(), pr.delta_f64()).map_err(err)?;
                if let Some(n) = spec.mc_samples {
                    mc_pairs.push(ComparePair {
                        id: id.clone(),
                        algebraic: est.value,
                        oracle: integrate_disk_mc(&f, spec.lambda, n, common.seed ^ i as u64),
                    });
                }
                integrate_disk(&f, spec.lambda, &disk)
            }
        };
        pairs.push(ComparePair {
            id,
            algebraic: est.value,
            oracle,
        });
    }
    let sweep: Option<Vec<f64>> = instances
        .iter()
        .all(|i| i.sweep.is_some())
        .then(|| instances.iter().filter_map(|i| i.sweep).collect());
    let report = |ps: &[ComparePair]| match compare(ps, sweep.as_deref()) {
        Ok(r) => Ok(Ok(r)),
        Err(OracleError::MixedFinitenessDisagreement { index }) => Ok(Err(index)),
        Err(e) => Err(err(e)),
    };
    let main = match report(&pairs)? {
        Ok(r) => r,
        Err(index) => {
            let p = &pairs[index];
            let result = json!({
                "disagreement": {
                    "instance_id": p.id,
                    "algebraic": if p.algebraic.is_infinite() { json!("inf") } else { json!(p.algebraic) },
                    "oracle": p.oracle,
                }
            });
            eprintln!("estimate and oracle disagree on finiteness at instance {}", p.id);
            return Output::json(result, EXIT_DISAGREE);
        }
    };
    let mc = if mc_pairs.is_empty() {
        None
    } else {
        Some(report(&mc_pairs)?.map_err(|i| format!("Monte Carlo finiteness disagreement at instance {i}")))
    };
    let csv = main.to_csv().map_err(err)?;
    let mut out = Output::json(
        json!({ "report": main, "spread": main.spread(), "mc_report": mc.transpose().ok().flatten() }),
        EXIT_FINITE,
    )?;
    out.csv = Some(csv);
    Ok(out)
}

fn run_stability(common: &Common, s: &StabilityCommand) -> Result<Output, String> {
    match s {
        StabilityCommand::Iterated { germ, delta, radii } => {
            let io = IteratedOptions {
                weierstrass: WeierstrassOptions {
                    seed: common.seed,
                    ..WeierstrassOptions::default()
                },
                rel_target: common.rel_target,
                ..IteratedOptions::default()
            };
            let r = iterated_estimate_2d(germ, *delta, (radii[0], radii[1]), &io).map_err(err)?;
            let code = match r.verdict {
                Verdict::Finite => EXIT_FINITE,
                Verdict::Infinite => EXIT_INFINITE,
                Verdict::Abstain => EXIT_DISAGREE,
            };
            Output::json(r, code)
        }
        StabilityCommand::Continuity {
            family,
            delta,
            radii,
            path,
            samples,
        } => {
            let r = continuity_probe(family, *delta, radii, &path.0, *samples, common.seed).map_err(err)?;
            let code = if r.passes { EXIT_FINITE } else { EXIT_DISAGREE };
            Output::json(r, code)
        }
        StabilityCommand::Perturbation {
            germ,
            delta,
            radii,
            rhos,
            perturbations,
            samples,
        } => {
            let po = PerturbationOptions {
                n_perturbations: *perturbations,
                n_samples: *samples,
                seed: common.seed,
            };
            let r = perturbation_probe(germ, *delta, radii, rhos, &po).map_err(err)?;
            let code = if r.passes { EXIT_FINITE } else { EXIT_DISAGREE };
            Output::json(r, code)
        }
    }
}

fn input_hash(params: &Command) -> String {
    let canonical = serde_json::to_vec(params).expect("parameters serialize");
    hex::encode(Sha256::digest(canonical))
}

fn emit(common: &Common, command: &Command, out: Output) -> Result<(), String> {
    let config = RunConfig {
        version: env!("CARGO_PKG_VERSION"),
        seed: common.seed,
        root_tol: common.tol,
        rel_target: common.rel_target,
        guards: Guards {
            exact_scales_limit: EXACT_SCALES_LIMIT,
            r_discriminant_limit: R_DISCRIMINANT_LIMIT,
            f_r_degree_limit: F_R_DEGREE_LIMIT,
        },
        format: common.format,
        out: common.out.as_ref(),
        params: command,
    };
    let hash = input_hash(command);
    let text = match (common.format, out.csv) {
        (Format::Csv, Some(csv)) => {
            let cfg = serde_json::to_string(&config).map_err(err)?;
            format!("# config: {cfg}\n# input_sha256: {hash}\n{csv}")
        }
        (Format::Csv, None) => return Err("this command has no CSV output; use --format json".into()),
        (Format::Json, _) => {
            let doc = json!({ "config": config, "input_sha256": hash, "result": out.result });
            serde_json::to_string_pretty(&doc).map_err(err)? + "\n"
        }
    };
    match &common.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_FINITE };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Command::Suite { name, .. } = &cli.command {
        if name != "all" && !SUITE_NAMES.contains(&name.as_str()) {
            eprintln!("error: unknown suite {name:?}; expected one of: all, {}", SUITE_NAMES.join(", "));
            return ExitCode::from(EXIT_ERROR);
        }
    }
    let result = run(&cli.common, &cli.command).and_then(|out| {
        let code = out.code;
        emit(&cli.common, &cli.command, out).map(|_| code)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

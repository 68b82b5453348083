//! `parisi-lab` command-line tool. Every command prints a JSON document with
//! the resolved configuration and the result; `--out` writes the same
//! document to a file, or the command's table when the path ends in `.csv`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use parisi_lab::duality::{alpha_continuity_scan, solve_gap, DualityError, GapOptions};
use parisi_lab::fenchel::{extend_phi, extreme_set_search, find_concavity_witness, fm_roundtrip, ConcaveFunctional};
use parisi_lab::hopf::{hj_finite_dim, hopf_lax_point, s_t_hopf, s_t_sup, PlConvexFn};
use parisi_lab::measures::{kr_norm, kr_norm_closed_form, measure_leq, DiscreteMeasure, SignedAtoms};
use parisi_lab::models::MixtureModel;
use parisi_lab::montecarlo::{enriched_free_energy, potts_perturbation_check, sample_free_energy};
use parisi_lab::optimize::stream_rng;
use parisi_lab::parisi::{psi_cascade_mc, psi_star, PsiEvaluator, PsiOptions, PsiStarSearch};
use parisi_suite::{jensen_instances, random_chi, random_measure, reference_pieces};

const THREADS_ENV: &str = "PARISI_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "parisi-lab", version, about = "Numerical bounds and checks for mean-field spin-glass free energies")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command. A `--config` file supplies defaults for
/// any of them; explicit flags win.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GlobalArgs {
    /// Model JSON file, or `sk`.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    t: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to PARISI_LAB_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Scaled conjugate `t xi*(y/t)`, or the conjugate restricted to [0, 1].
    Conjugate {
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
        #[arg(long)]
        restricted: bool,
    },
    /// Parisi functional of a measure, e.g. --mu '{"atoms":[0],"weights":[1]}'.
    Psi {
        #[arg(long)]
        mu: String,
    },
    /// Concave conjugate of psi over measures with a few atoms.
    PsiStar {
        /// `{"knots":[...],"slopes":[...]}`.
        #[arg(long)]
        chi: String,
        #[arg(long, default_value_t = 2)]
        atoms: usize,
        #[arg(long, default_value_t = 1.0)]
        q_max: f64,
        #[arg(long, default_value_t = 8)]
        multistarts: usize,
        #[arg(long, default_value_t = 1500)]
        max_evals: usize,
    },
    /// Hopf-Lax value at points, in both forms.
    Hopf {
        #[arg(long)]
        chi: String,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
    /// Compares the two Hopf-Lax forms on random functions.
    HopfCheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[arg(long, default_value_t = 3.0)]
        x_max: f64,
    },
    /// Finite-dimensional Hopf formula against the scalar value.
    HjDim {
        #[arg(long)]
        chi: String,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
    },
    /// Kantorovich-Rubinstein norm of a signed measure.
    KrNorm {
        #[arg(long, allow_hyphen_values = true)]
        nu: String,
    },
    /// Order comparison of two measures.
    Leq {
        #[arg(long)]
        mu: String,
        #[arg(long)]
        nu: String,
    },
    /// Two-sided bounds on the limiting free energy.
    Gap {
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Bounds along the perturbation `xi + alpha |x|^2`.
    AlphaScan {
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Fenchel-Moreau round trip of a minimum of affine functionals.
    FmCheck {
        /// `[{"chi":{...},"offset":...}, ...]`; a built-in set by default.
        #[arg(long)]
        pieces: Option<String>,
        #[arg(long, default_value_t = 20)]
        measures: usize,
        #[arg(long, default_value_t = 20)]
        chis: usize,
        #[arg(long, default_value_t = 2000)]
        witness_trials: usize,
    },
    /// Jensen's inequality on random chain mixtures and the extreme-set search.
    Jensen {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 10_000)]
        extreme_trials: usize,
    },
    /// Concave extension of values known on a family of measures.
    Extend {
        /// `[[measure, value], ...]`.
        #[arg(long)]
        family: String,
        #[arg(long)]
        mu: String,
    },
    /// Finite-volume free energy by exact enumeration.
    Mc {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Strength of the independent two-body perturbation.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Finite-volume free energy with an external field of variance `2q`.
    Enriched {
        #[arg(long)]
        q: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Recursion against a simulated cascade.
    CascadeOracle {
        #[arg(long)]
        mu: String,
        #[arg(long, default_value_t = 2000)]
        children: usize,
        #[arg(long, default_value_t = 200)]
        replicates: usize,
    },
    /// Test batteries.
    Suite {
        #[command(subcommand)]
        which: Suite,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Suite {
    /// Runs the acceptance criteria and prints a pass/fail table.
    Acceptance {
        /// Criterion ids to run; all by default.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Args, Debug, Clone, Serialize)]
struct SolverArgs {
    #[arg(long, default_value_t = 4)]
    atoms: usize,
    #[arg(long, default_value_t = 64)]
    knots: usize,
    #[arg(long, default_value_t = 8)]
    multistarts: usize,
    #[arg(long, default_value_t = 3)]
    max_outer: usize,
    #[arg(long, default_value_t = 2500)]
    max_evals: usize,
    #[arg(long, default_value_t = 9)]
    lattice: usize,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{message}")]
    Numerical { message: String, detail: Option<Value> },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Numerical { .. } => 2,
            _ => 1,
        }
    }

    fn body(&self) -> Value {
        let kind = match self {
            CliError::Invalid(_) => "validation",
            CliError::Numerical { .. } => "numerical",
            CliError::Io(_) => "io",
        };
        let mut body = json!({ "error": kind, "message": self.to_string() });
        if let CliError::Numerical { detail: Some(d), .. } = self {
            body["detail"] = d.clone();
        }
        body
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn numerical(message: impl Into<String>, detail: Option<Value>) -> CliError {
    CliError::Numerical { message: message.into(), detail }
}

fn duality(e: DualityError) -> CliError {
    match e {
        DualityError::NonConvergence(report) => {
            numerical("upper bound did not stabilise", serde_json::to_value(&*report).ok())
        }
        DualityError::Lp(e) => numerical(e.to_string(), None),
        other => invalid(other),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(what: &str, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| invalid(format!("--{what}: {e}")))
}

/// Flags after merging the config file, the environment and the defaults.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    version: &'static str,
    model_source: String,
    model: MixtureModel,
    t: f64,
    seed: u64,
    tol: Option<f64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    args: Value,
}

fn load_model(source: &str) -> Result<MixtureModel, CliError> {
    if source == "sk" {
        return Ok(MixtureModel::sk());
    }
    let text = fs::read_to_string(source).map_err(|e| invalid(format!("model {source}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("model {source}: {e}")))
}

fn resolve(flags: &GlobalArgs, command: &Command) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| invalid(format!("config {}: {e}", path.display())))?;
            serde_json::from_str::<GlobalArgs>(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))?
        }
        None => GlobalArgs::default(),
    };
    let env_threads = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(v.parse::<usize>().map_err(|_| invalid(format!("{THREADS_ENV} must be a positive integer")))?),
        Err(_) => None,
    };
    let threads = flags.threads.or(file.threads).or(env_threads);
    if threads == Some(0) {
        return Err(invalid("threads must be positive"));
    }
    let model_source = flags.model.clone().or(file.model).unwrap_or_else(|| "sk".into());
    let t = flags.t.or(file.t).unwrap_or(1.0);
    if !t.is_finite() || t < 0.0 {
        return Err(invalid(format!("t must be finite and nonnegative, got {t}")));
    }
    let tol = flags.tol.or(file.tol);
    if tol.is_some_and(|v| v.is_nan() || v <= 0.0) {
        return Err(invalid("tol must be positive"));
    }
    Ok(RunConfig {
        version: env!("CARGO_PKG_VERSION"),
        model: load_model(&model_source)?,
        model_source,
        t,
        seed: flags.seed.or(file.seed).unwrap_or(0),
        tol,
        threads,
        out: flags.out.clone().or(file.out),
        args: serde_json::to_value(command).map_err(invalid)?,
    })
}

struct Output {
    result: Value,
    /// CSV body of the command's table, if it has one.
    table: Option<Vec<u8>>,
    /// A failed check: the output is still written, the exit code is 2.
    failed: Option<String>,
}

impl Output {
    fn new(result: impl Serialize) -> Result<Self, CliError> {
        Ok(Output { result: serde_json::to_value(result).map_err(invalid)?, table: None, failed: None })
    }

    fn with_table<T: Serialize>(mut self, rows: &[T]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(invalid)?;
        }
        self.table = Some(w.into_inner().map_err(|e| invalid(e.to_string()))?);
        Ok(self)
    }

    fn fail_unless(mut self, ok: bool, message: &str) -> Self {
        if !ok {
            self.failed = Some(message.into());
        }
        self
    }
}

fn psi_evaluator(model: &MixtureModel) -> Result<PsiEvaluator, CliError> {
    PsiEvaluator::new(model, PsiOptions::default()).map_err(invalid)
}

fn gap_options(cfg: &RunConfig, s: &SolverArgs) -> GapOptions {
    GapOptions {
        atoms: s.atoms,
        knots: s.knots,
        multistarts: s.multistarts,
        max_outer: s.max_outer,
        max_evals: s.max_evals,
        lattice: s.lattice,
        seed: cfg.seed,
        tol: cfg.tol.unwrap_or(GapOptions::default().tol),
        ..GapOptions::default()
    }
}

fn execute(cfg: &RunConfig, command: &Command) -> Result<Output, CliError> {
    let model = &cfg.model;
    let t = cfg.t;
    match command {
        Command::Conjugate { y, restricted } => {
            if *restricted {
                let value = model.conjugate_restricted(*y).map_err(invalid)?;
                Output::new(json!({ "y": y, "value": value }))
            } else {
                let p = model.scaled_conjugate_point(*y, t).map_err(invalid)?;
                Output::new(json!({ "y": y, "t": t, "value": p.value, "argmax": p.argmax }))
            }
        }
        Command::Psi { mu } => {
            let mu: DiscreteMeasure = parse("mu", mu)?;
            let value = psi_evaluator(model)?.psi(&mu).map_err(invalid)?;
            Output::new(json!({ "value": value, "mu": mu }))
        }
        Command::PsiStar { chi, atoms, q_max, multistarts, max_evals } => {
            let chi: PlConvexFn = parse("chi", chi)?;
            let search = PsiStarSearch { atoms: *atoms, q_max: *q_max, multistarts: *multistarts, seed: cfg.seed, max_evals: *max_evals };
            let v = psi_star(model, &|x| chi.eval(x), &search, &PsiOptions::default()).map_err(invalid)?;
            Output::new(v)
        }
        Command::Hopf { chi, x } => {
            let chi: PlConvexFn = parse("chi", chi)?;
            #[derive(Serialize)]
            struct Row {
                x: f64,
                sup_form: f64,
                hopf_form: f64,
                argmax: f64,
            }
            let rows = x
                .iter()
                .map(|&x| {
                    Ok(Row {
                        x,
                        sup_form: s_t_sup(model, t, &chi, x).map_err(invalid)?,
                        hopf_form: s_t_hopf(model, t, &chi, x).map_err(invalid)?,
                        argmax: hopf_lax_point(model, t, &chi, x).map_err(invalid)?.1,
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Output::new(&rows)?.with_table(&rows)
        }
        Command::HopfCheck { trials, points, x_max } => {
            let tol = cfg.tol.unwrap_or(1e-6);
            let mut worst = (0.0f64, 0usize, 0.0f64);
            for k in 0..*trials {
                let chi = random_chi(&mut stream_rng(cfg.seed, &[k as u64]), 2.0, 6);
                for i in 0..*points {
                    let x = x_max * i as f64 / (points.max(&2) - 1) as f64;
                    let d = (s_t_sup(model, t, &chi, x).map_err(invalid)? - s_t_hopf(model, t, &chi, x).map_err(invalid)?).abs();
                    if d > worst.0 {
                        worst = (d, k, x);
                    }
                }
            }
            Output::new(json!({ "max_abs_diff": worst.0, "worst_trial": worst.1, "worst_x": worst.2, "trials": trials, "tol": tol }))
                .map(|o| o.fail_unless(worst.0 <= tol, "Hopf forms differ beyond tolerance"))
        }
        Command::HjDim { chi, x } => {
            let chi: PlConvexFn = parse("chi", chi)?;
            let v = hj_finite_dim(model, t, &chi, x).map_err(invalid)?;
            Output::new(json!({ "direct": v.direct, "separable": v.separable, "diff": (v.direct - v.separable).abs() }))
        }
        Command::KrNorm { nu } => {
            let raw: SignedAtoms = parse("nu", nu)?;
            let nu = SignedAtoms::new(raw.atoms, raw.weights).map_err(invalid)?;
            let lp = kr_norm(&nu).map_err(|e| numerical(e.to_string(), None))?;
            Output::new(json!({ "lp": lp, "closed_form": kr_norm_closed_form(&nu) }))
        }
        Command::Leq { mu, nu } => {
            let mu: DiscreteMeasure = parse("mu", mu)?;
            let nu: DiscreteMeasure = parse("nu", nu)?;
            let tol = cfg.tol.unwrap_or(1e-12);
            Output::new(json!({ "mu_leq_nu": measure_leq(&mu, &nu, tol), "nu_leq_mu": measure_leq(&nu, &mu, tol) }))
        }
        Command::Gap { solver } => {
            let r = solve_gap(model, t, &gap_options(cfg, solver)).map_err(duality)?;
            Output::new(&r)?.with_table(&r.trace)
        }
        Command::AlphaScan { alphas, solver } => {
            let s = alpha_continuity_scan(model, t, alphas, &gap_options(cfg, solver)).map_err(duality)?;
            #[derive(Serialize)]
            struct Row {
                alpha: f64,
                lower: f64,
                upper: f64,
                midpoint: f64,
            }
            let rows: Vec<Row> = (0..s.alphas.len())
                .map(|i| Row { alpha: s.alphas[i], lower: s.lower[i], upper: s.upper[i], midpoint: s.midpoints[i] })
                .collect();
            let ok = s.within_bound;
            Output::new(&s)?.with_table(&rows).map(|o| o.fail_unless(ok, "slopes exceed the continuity constant"))
        }
        Command::FmCheck { pieces, measures, chis, witness_trials } => {
            let pieces = match pieces {
                Some(p) => parse("pieces", p)?,
                None => reference_pieces(),
            };
            if pieces.is_empty() {
                return Err(invalid("--pieces must not be empty"));
            }
            let x_max = pieces.iter().flat_map(|p: &parisi_lab::fenchel::AffinePiece| p.chi.knots().last().copied()).fold(1.0, f64::max);
            let mut tests: Vec<PlConvexFn> = pieces.iter().map(|p| p.chi.clone()).collect();
            tests.extend((0..*chis).map(|k| random_chi(&mut stream_rng(cfg.seed, &[1, k as u64]), x_max, 4)));
            let mus: Vec<DiscreteMeasure> =
                (0..*measures).map(|k| random_measure(&mut stream_rng(cfg.seed, &[2, k as u64]), x_max, 3)).collect();
            let tol = cfg.tol.unwrap_or(1e-6);
            let report = fm_roundtrip(&ConcaveFunctional::MinOfAffine(pieces.clone()), &tests, &mus, &[], tol).map_err(invalid)?;
            // the maximum of the pieces is convex, so a witness should exist
            let witness = if pieces.len() >= 2 {
                let convex_pieces = pieces.clone();
                let lipschitz = pieces.iter().map(|p| p.chi.last_slope()).fold(0.0, f64::max);
                let convex = ConcaveFunctional::Oracle {
                    eval: Box::new(move |mu| convex_pieces.iter().map(|p| p.eval(mu)).fold(f64::NEG_INFINITY, f64::max)),
                    lipschitz,
                };
                find_concavity_witness(&convex, &tests, &mus, x_max, *witness_trials, cfg.seed).map_err(invalid)?
            } else {
                None
            };
            let ok = report.max_abs_error <= tol;
            let rows = report.rows.clone();
            Output::new(json!({ "round_trip": report, "non_concave_witness": witness }))?
                .with_table(&rows)
                .map(|o| o.fail_unless(ok, "round trip exceeds tolerance"))
        }
        Command::Jensen { trials, extreme_trials } => {
            let holds = jensen_instances(*trials, cfg.seed).map_err(invalid)?;
            let ext = extreme_set_search(2, *extreme_trials, cfg.seed).map_err(invalid)?;
            let ok = holds == *trials && ext.counterexamples == 0 && ext.incomparable_chain_failures == 0;
            Output::new(json!({ "jensen_holds": holds, "jensen_trials": trials, "extreme_set": ext }))
                .map(|o| o.fail_unless(ok, "a Jensen or extreme-set check failed"))
        }
        Command::Extend { family, mu } => {
            let family: Vec<(DiscreteMeasure, f64)> = parse("family", family)?;
            let mu: DiscreteMeasure = parse("mu", mu)?;
            Output::new(extend_phi(&family, &mu).map_err(invalid)?)
        }
        Command::Mc { n, samples, alpha } => {
            let e = match alpha {
                None => sample_free_energy(model, t, *n, *samples, cfg.seed).map_err(invalid)?,
                Some(a) => {
                    potts_perturbation_check(model, t, *n, &[*a], *samples, cfg.seed).map_err(invalid)?.estimates.remove(0)
                }
            };
            let rows: Vec<(usize, f64)> = e.values.iter().copied().enumerate().collect();
            Output::new(&e)?.with_table(&rows)
        }
        Command::Enriched { q, n, samples } => {
            let e = enriched_free_energy(model, t, &[*q], *n, *samples, cfg.seed).map_err(invalid)?;
            let rows: Vec<(usize, f64)> = e.values.iter().copied().enumerate().collect();
            Output::new(&e)?.with_table(&rows)
        }
        Command::CascadeOracle { mu, children, replicates } => {
            let mu: DiscreteMeasure = parse("mu", mu)?;
            let recursion = psi_evaluator(model)?.psi(&mu).map_err(invalid)?;
            let mc = psi_cascade_mc(model, &mu, *children, *replicates, cfg.seed).map_err(invalid)?;
            let z = (recursion - mc.mean).abs() / mc.stderr;
            Output::new(json!({ "recursion": recursion, "cascade": mc, "stderr_multiple": z }))
        }
        Command::Suite { which: Suite::Acceptance { only } } => {
            if let Some(bad) = only.iter().find(|&&i| !(1..=13).contains(&i)) {
                return Err(invalid(format!("no criterion {bad}")));
            }
            let results = parisi_suite::run(only);
            for r in &results {
                eprintln!("{}", r.line());
            }
            let passed = results.iter().filter(|r| r.passed).count();
            let ok = passed == results.len();
            let message = format!("{} of {} criteria failed", results.len() - passed, results.len());
            Output::new(json!({ "passed": passed, "total": results.len(), "criteria": results }))?
                .with_table(&results)
                .map(|o| o.fail_unless(ok, &message))
        }
    }
}

fn write_out(path: &Path, cfg: &RunConfig, document: &Value, table: Option<&[u8]>) -> Result<(), CliError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mut file = fs::File::create(path)?;
    if is_csv {
        let table = table.ok_or_else(|| invalid("this command has no tabular output; use a .json path"))?;
        writeln!(file, "# {}", serde_json::to_string(cfg).map_err(invalid)?)?;
        file.write_all(table)?;
    } else {
        serde_json::to_writer_pretty(&mut file, document).map_err(invalid)?;
        writeln!(file)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Option<String>, CliError> {
    let cfg = resolve(&cli.global, &cli.command)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(invalid)?;
    }
    let out = execute(&cfg, &cli.command)?;
    let mut document = json!({ "config": cfg, "result": out.result });
    if let Some(message) = &out.failed {
        document["failed"] = json!(message);
    }
    println!("{}", serde_json::to_string_pretty(&document).map_err(invalid)?);
    if let Some(path) = &cfg.out {
        write_out(path, &cfg, &document, out.table.as_deref())?;
    }
    Ok(out.failed)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => {
                    eprintln!("{}", json!({ "error": "usage", "message": e.kind().to_string() }));
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(message)) => {
            eprintln!("{}", json!({ "error": "check_failed", "message": message }));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{}", e.body());
            ExitCode::from(e.code())
        }
    }
}

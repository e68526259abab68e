use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exprprob::classes::{parse_expression, ClassError};
use exprprob::cnf::{string_probability, CnfError};
use exprprob::derivation::sample;
use exprprob::family::classify_family;
use exprprob::prob::{expression_probability, ExprProbability, Mode};
use exprprob::regress::{run_search, Dataset, RegressError};
use exprprob::transforms::{
    consistency_estimate, find_linear_cycles, p_epsilon, remove_linear_cycles, TransformError,
};
use exprprob::{parse_grammar, Pcfg};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "exprprob",
    version,
    about = "Probabilities of expressions under a PCFG"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a grammar and print the validation report.
    Validate { file: PathBuf },
    /// Sample strings and print the most frequent ones.
    Sample {
        file: PathBuf,
        #[command(flatten)]
        run: SampleArgs,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Probability of one string, summed over its parse trees.
    ProbString {
        file: PathBuf,
        #[arg(long)]
        tokens: String,
    },
    /// Probability of an expression class.
    ProbExpr {
        file: PathBuf,
        #[arg(long)]
        expr: String,
        #[arg(long, conflicts_with = "epsilon")]
        exact: bool,
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Grammar transformations.
    Transform {
        #[command(subcommand)]
        kind: Transform,
    },
    /// Probability that a nonterminal derives the empty string.
    PEpsilon {
        file: PathBuf,
        #[arg(long)]
        nonterminal: String,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
    },
    /// Fixed-point and Monte-Carlo termination probability.
    Consistency {
        file: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 10_000)]
        max_steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample templates, fit their constants and rank them.
    Fit {
        grammar: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1000)]
        count: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write the per-iteration counts of the approximation as CSV.
    ReportTerms {
        file: PathBuf,
        #[arg(long)]
        expr: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = 1000)]
    count: u64,
    #[arg(long, default_value_t = 10_000)]
    max_steps: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Transform {
    /// Remove linear (unit-rule) cycles.
    RemoveCycles {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

/// A failure carrying its exit code.
struct Failure {
    code: u8,
    error: &'static str,
    detail: String,
}

impl Failure {
    fn usage(detail: impl Display) -> Self {
        Self::new(1, "usage", detail)
    }

    fn input(error: &'static str, detail: impl Display) -> Self {
        Self::new(2, error, detail)
    }

    fn numeric(error: &'static str, detail: impl Display) -> Self {
        Self::new(3, error, detail)
    }

    fn new(code: u8, error: &'static str, detail: impl Display) -> Self {
        Failure {
            code,
            error,
            detail: detail.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn emit<T: Serialize>(value: &T) -> Outcome {
    let text = serde_json::to_string(value).map_err(|e| Failure::numeric("output", e))?;
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        // a closed pipe downstream is not our failure
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure::input("io", e)),
        _ => Ok(()),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::input("io", format!("{}: {e}", path.display())))
}

fn load_unchecked(path: &Path) -> Result<Pcfg, Failure> {
    parse_grammar(&read(path)?).map_err(|e| Failure::input("grammar", e))
}

/// Parses and validates; any validation error rejects the grammar.
fn load(path: &Path) -> Result<Pcfg, Failure> {
    let g = load_unchecked(path)?;
    let report = g.validate();
    match report.errors.first() {
        None => Ok(g),
        Some(d) => Err(Failure::input("validation", &d.message)),
    }
}

fn positive(name: &str, v: f64) -> Outcome {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!(
            "--{name} must be a positive number"
        )))
    }
}

fn class_failure(e: ClassError) -> Failure {
    match e {
        ClassError::Prob(p) => Failure::numeric("probability", p),
        ClassError::TooManyStrings(_) => Failure::numeric("guard", e),
        other => Failure::input("expression", other),
    }
}

fn transform_failure(e: TransformError) -> Failure {
    match e {
        TransformError::NullRules | TransformError::UnknownNonterminal(_) => {
            Failure::input("transform", e)
        }
        TransformError::InvalidTolerance => Failure::usage(e),
        TransformError::StepLimit(_) | TransformError::NoConvergence { .. } => {
            Failure::numeric("transform", e)
        }
    }
}

fn regress_failure(e: RegressError) -> Failure {
    match e {
        RegressError::NonLinear(_) => Failure::numeric("unsupported", e),
        RegressError::NonFinite(_) => Failure::numeric("overflow", e),
        RegressError::Class(c) => class_failure(c),
        other => Failure::input("regression", other),
    }
}

fn expr_probability(file: &Path, expr: &str, mode: Mode) -> Result<ExprProbability, Failure> {
    let g = load(file)?;
    let family = classify_family(&g).map_err(|u| {
        Failure::numeric(
            "unsupported",
            format!(
                "expression probability is undecidable for general context-free grammars: {}",
                u.reason
            ),
        )
    })?;
    let class = parse_expression(&family, expr).map_err(class_failure)?;
    expression_probability(&family, &class, mode).map_err(class_failure)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { file } => {
            let report = load_unchecked(&file)?.validate();
            emit(&report)?;
            match report.errors.first() {
                None => Ok(()),
                Some(d) => Err(Failure::input("validation", &d.message)),
            }
        }
        Command::Sample { file, run, top } => {
            let g = load(&file)?;
            let mut report = sample(&g, run.count, run.max_steps, run.seed);
            report.truncate(top);
            emit(&report)
        }
        Command::ProbString { file, tokens } => {
            let g = load(&file)?;
            let tokens: Vec<&str> = tokens.split_whitespace().collect();
            let r = string_probability(&g, &tokens).map_err(|e| match e {
                CnfError::Transform(t) => transform_failure(t),
                other => Failure::input("grammar", other),
            })?;
            emit(&r)
        }
        Command::ProbExpr {
            file,
            expr,
            exact: _,
            epsilon,
        } => {
            let mode = match epsilon {
                Some(e) => {
                    positive("epsilon", e)?;
                    Mode::Approx { epsilon: e }
                }
                None => Mode::Exact,
            };
            emit(&expr_probability(&file, &expr, mode)?)
        }
        Command::Transform {
            kind: Transform::RemoveCycles { file, output },
        } => {
            let g = load(&file)?;
            let report = find_linear_cycles(&g);
            let h = remove_linear_cycles(&g).map_err(transform_failure)?;
            write(&output, &h.serialize())?;
            emit(&report)
        }
        Command::PEpsilon {
            file,
            nonterminal,
            tol,
        } => {
            positive("tol", tol)?;
            let g = load(&file)?;
            let a = g.nonterminal_id(&nonterminal).ok_or_else(|| {
                Failure::input("grammar", format!("unknown nonterminal {nonterminal:?}"))
            })?;
            let v = p_epsilon(&g, a, tol).map_err(transform_failure)?;
            emit(&json!({ "p_epsilon": v }))
        }
        Command::Consistency {
            file,
            samples,
            max_steps,
            seed,
        } => {
            if samples == 0 {
                return Err(Failure::usage("--samples must be at least 1"));
            }
            let g = load(&file)?;
            emit(&consistency_estimate(&g, samples, max_steps, seed))
        }
        Command::Fit {
            grammar,
            data,
            count,
            seed,
        } => {
            let g = load(&grammar)?;
            let data = Dataset::from_csv_str(&read(&data)?).map_err(regress_failure)?;
            let out = run_search(&g, &data, count, seed).map_err(regress_failure)?;
            emit(&out)
        }
        Command::ReportTerms {
            file,
            expr,
            epsilon,
            csv,
        } => {
            positive("epsilon", epsilon)?;
            let r = expr_probability(&file, &expr, Mode::Approx { epsilon })?;
            let ExprProbability::Approx(report) = r else {
                return Err(Failure::numeric(
                    "unsupported",
                    "per-iteration counts exist only for linear and polynomial classes",
                ));
            };
            let mut text = String::from("i,included,total\n");
            for it in &report.iterations {
                text += &format!("{},{},{}\n", it.i, it.included, it.total);
            }
            write(&csv, &text)?;
            emit(&json!({
                "estimate": report.estimate,
                "error_bound": report.error_bound,
                "M": report.m,
                "rows": report.iterations.len(),
            }))
        }
    }
}

fn main() -> ExitCode {
    let outcome = match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) if !e.use_stderr() => {
            // help and version
            print!("{e}");
            Ok(())
        }
        Err(e) => Err(Failure::usage(e.to_string().trim_end())),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": f.error, "detail": f.detail }));
            ExitCode::from(f.code)
        }
    }
}

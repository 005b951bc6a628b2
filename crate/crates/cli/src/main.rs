use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hitchin_core::flow::{integrate, restricted_integrate};
use hitchin_core::io::{self, exit_code_for, IoError};
use hitchin_core::search::{search, DEFAULT_MIN_METRIC_RATIO};
use hitchin_core::stable::complete_su3;
use hitchin_core::{CoframeAlgebra, FlowState, KForm, Profile, RestrictedFlowState, SearchProblem};

#[derive(Parser)]
#[command(name = "hitchin", version, about = "SU(3)- and G2-structures on coframe algebras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Pair {
    /// Algebra file, or a built-in name (iwasawa, n-algebra, torus6).
    #[arg(long)]
    algebra: String,
    /// 2-form file.
    #[arg(long)]
    omega: PathBuf,
    /// 3-form file.
    #[arg(long = "psi")]
    psi: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Print the d^2 residual of an algebra file.
    CheckAlgebra { file: PathBuf },
    /// Torsion, classification and the coupled report for one structure.
    Analyze {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        json: bool,
    },
    /// Integrate the Hitchin flow (or the restricted coupled flow).
    Flow {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        restricted: bool,
        /// Constant nu for the restricted flow.
        #[arg(long, default_value_t = 1.0, requires = "restricted")]
        nu: f64,
        /// Write the trace here as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Torsion of the G2-structure on an interval times the structure.
    G2 {
        #[command(flatten)]
        pair: Pair,
        /// cylinder, cone or sincone.
        #[arg(long)]
        mode: String,
        /// Comma-separated slice times.
        #[arg(long = "t", value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Multistart search for a coupled structure.
    Search {
        #[arg(long)]
        algebra: String,
        #[arg(long)]
        require_dw2_prop: bool,
        #[arg(long, default_value_t = 50)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MIN_METRIC_RATIO)]
        min_metric_ratio: f64,
        #[arg(long)]
        json: bool,
    },
}

/// Message and exit code.
struct Failure(String, u8);

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure(e.to_string(), e.exit_code() as u8)
    }
}

impl From<hitchin_core::Error> for Failure {
    fn from(e: hitchin_core::Error) -> Self {
        let code = exit_code_for(&e) as u8;
        Failure(e.to_string(), code)
    }
}

fn load_algebra(arg: &str) -> Result<CoframeAlgebra, Failure> {
    let path = Path::new(arg);
    if !path.exists() && CoframeAlgebra::builtin_names().contains(&arg) {
        return Ok(CoframeAlgebra::builtin(arg)?);
    }
    Ok(io::parse_algebra(path)?)
}

fn load_pair(p: &Pair) -> Result<(CoframeAlgebra, KForm, KForm), Failure> {
    let alg = load_algebra(&p.algebra)?;
    if alg.dim() != 6 {
        return Err(Failure(format!("structures need a 6-dimensional algebra, got dim {}", alg.dim()), 1));
    }
    let omega = io::parse_form(&p.omega, 6)?;
    let psi = io::parse_form(&p.psi, 6)?;
    if omega.degree() != 2 || psi.degree() != 3 {
        return Err(Failure(format!("expected a 2-form and a 3-form, got degrees {} and {}", omega.degree(), psi.degree()), 1));
    }
    Ok((alg, omega, psi))
}

fn emit(json: bool, value: &impl serde::Serialize, human: String) {
    let text = if json { io::to_json(value) + "\n" } else { human };
    // a closed pipe (`| head`) is not an error
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn write_csv(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure(format!("cannot write {}: {e}", path.display()), 2))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::CheckAlgebra { file } => match io::parse_algebra(&file) {
            Ok(alg) => println!("d^2 residual = {:e}", alg.check_d_squared()),
            Err(IoError::Validation(m)) => {
                println!("invalid algebra: {m}");
                return Err(Failure(m, 1));
            }
            Err(e) => return Err(e.into()),
        },
        Command::Analyze { pair, json } => {
            let (alg, omega, psi) = load_pair(&pair)?;
            let r = io::analyze(&alg, &omega, &psi)?;
            emit(json, &r, io::render_analyze(&r));
        }
        Command::Flow { pair, t_end, tol, restricted, nu, csv, json } => {
            let (alg, omega, psi) = load_pair(&pair)?;
            if !(t_end > 0.0 && tol > 0.0) {
                return Err(Failure("--t-end and --tol must be positive".into(), 1));
            }
            let s = complete_su3(&omega, &psi)?;
            let summary = if restricted {
                let seed = RestrictedFlowState::from_structure(&s, &alg)?;
                let tr = restricted_integrate(&seed, &alg, &|_| nu, &KForm::zero(6, 3), t_end, tol)?;
                if let Some(p) = &csv {
                    write_csv(p, &tr.to_csv())?;
                }
                io::restricted_summary(&tr)
            } else {
                let tr = integrate(&FlowState::from_structure(&s), &alg, t_end, tol)?;
                if let Some(p) = &csv {
                    write_csv(p, &tr.to_csv())?;
                }
                io::flow_summary(&tr)
            };
            emit(json, &summary, io::render_flow(&summary));
        }
        Command::G2 { pair, mode, t, json } => {
            let (alg, omega, psi) = load_pair(&pair)?;
            let profile = Profile::parse(&mode).ok_or_else(|| Failure(format!("unknown mode `{mode}`"), 2))?;
            let s = complete_su3(&omega, &psi)?;
            let r = io::g2_report(&s, &alg, &profile, &t)?;
            emit(json, &r, io::render_g2(&r));
        }
        Command::Search { algebra, require_dw2_prop, starts, seed, min_metric_ratio, json } => {
            let alg = load_algebra(&algebra)?;
            let mut prob = SearchProblem::new(alg);
            prob.require_dw2_prop = require_dw2_prop;
            prob.starts = starts;
            prob.seed = seed;
            prob.min_metric_ratio = min_metric_ratio;
            let r = search(&prob)?;
            let s = io::search_json(&r, &prob);
            emit(json, &s, io::render_search(&s));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg, code)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

//! Command-line front end: wraps the verification tasks in subcommands,
//! prints one line per check, writes JSON/CSV artifacts, and exits 0 only
//! when every verdict passes (2 on config errors, 1 on computation errors
//! or failing checks).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use reebflow::report::{
    load_config, run, GridConfig, ModelSpec, OutputConfig, Params, Report, RunConfig, RunError,
    TaskKind, Tolerances,
};

#[derive(Parser)]
#[command(
    name = "reebflow",
    version,
    about = "Model contact forms, tight Dehn-surgery planning, branched-cover lifts, and Reeb-flow orbit analysis on 3-manifold charts"
)]
struct Cli {
    /// Reserved: all computations are deterministic; the value is recorded
    /// in the report and otherwise ignored.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the contact condition of a named model or inline form
    VerifyForm(VerifyFormArgs),
    /// Dehn surgery arithmetic and planning
    Surgery {
        #[command(subcommand)]
        command: SurgeryCommand,
    },
    /// Branched-cover constructions
    Branch {
        #[command(subcommand)]
        command: BranchCommand,
    },
    /// Reeb-flow dynamics
    Flow {
        #[command(subcommand)]
        command: FlowCommand,
    },
    /// Lens-space covers
    Lens {
        #[command(subcommand)]
        command: LensCommand,
    },
    /// Execute a checked-in run config (TOML, or JSON by extension)
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct CommonOutput {
    /// Write the full JSON report here
    #[arg(long)]
    json: Option<String>,
    /// Write CSV data here (tasks that export trajectories)
    #[arg(long)]
    csv: Option<String>,
}

#[derive(Args)]
struct VerifyFormArgs {
    /// Model reference: alpha_r:r=R | alpha_r:r2=R2 | tube | t3
    #[arg(long, conflicts_with_all = ["chart", "coeffs"])]
    model: Option<String>,
    /// Chart for inline coefficients: tube | model_torus | t3
    #[arg(long, requires = "coeffs")]
    chart: Option<String>,
    /// Inline coefficient expressions "a_1;a_2;a_3"
    #[arg(long, requires = "chart")]
    coeffs: Option<String>,
    /// Grid as N1xN2xN3 (default 50x16x16)
    #[arg(long)]
    grid: Option<String>,
    /// Contact degeneracy tolerance
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    output: CommonOutput,
}

#[derive(Subcommand)]
enum SurgeryCommand {
    /// Plan a tight (p, q) surgery on the model unknot and verify the gluing
    Plan {
        #[arg(short, long, allow_hyphen_values = true)]
        p: i64,
        #[arg(short, long, allow_hyphen_values = true)]
        q: i64,
        #[command(flatten)]
        output: CommonOutput,
    },
}

#[derive(Subcommand)]
enum BranchCommand {
    /// Lift a model form through a branch map and verify the result
    Lift {
        /// Model reference (case 2 wants alpha_r; cases 1 and hyp want tube)
        #[arg(long)]
        model: String,
        /// Meridional branching degree (>= 1)
        #[arg(short, long)]
        m: i64,
        /// Off-diagonal boundary twisting
        #[arg(short, long, default_value_t = 0, allow_hyphen_values = true)]
        k: i64,
        /// Longitudinal degree (>= 1)
        #[arg(short, long)]
        l: i64,
        /// Construction: 2 (action-angle pullback), 1 (equivariant
        /// perturbation), hyp (smooth lift + bump)
        #[arg(long, default_value = "2")]
        case: String,
        /// Case-1 prefactor expression over (rho, theta, phi)
        #[arg(long)]
        f: Option<String>,
        /// Bump inner radius
        #[arg(long)]
        r0: Option<f64>,
        /// Bump outer radius
        #[arg(long)]
        r1: Option<f64>,
        /// Requested perturbation strength (case hyp)
        #[arg(long)]
        epsilon: Option<f64>,
        /// Grid as N1xN2xN3
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        output: CommonOutput,
    },
}

#[derive(Subcommand)]
enum FlowCommand {
    /// Hunt periodic orbits from a seed set and classify them
    Orbits {
        #[arg(long)]
        model: String,
        /// Seed set: grid:AxB | point:x,y,z
        #[arg(long, default_value = "grid:4x4")]
        seeds: String,
        /// Section coordinate index (default 1)
        #[arg(long)]
        section_coord: Option<usize>,
        /// Section value (default 0.1)
        #[arg(long)]
        section_value: Option<f64>,
        /// Fixed point of the k-th return map
        #[arg(long)]
        returns: Option<usize>,
        #[command(flatten)]
        output: CommonOutput,
    },
}

#[derive(Subcommand)]
enum LensCommand {
    /// Branched cover of L(p, q) over its Heegaard cores
    Cover {
        #[arg(short, long, allow_hyphen_values = true)]
        p: i64,
        #[arg(short, long, allow_hyphen_values = true)]
        q: i64,
        /// Covering data m,k,l over the first core
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        b1: Vec<i64>,
        /// Covering data m,k,l over the second core
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        b2: Vec<i64>,
        #[command(flatten)]
        output: CommonOutput,
    },
}

fn parse_grid(s: &str) -> Result<[usize; 3], RunError> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| RunError::Config(format!("bad grid `{s}`; want N1xN2xN3")))?;
    if parts.len() != 3 {
        return Err(RunError::Config(format!("bad grid `{s}`; want N1xN2xN3")));
    }
    Ok([parts[0], parts[1], parts[2]])
}

fn build_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut config = match &cli.command {
        Command::Run { config } => load_config(config)?,
        Command::VerifyForm(args) => {
            let model = if let Some(name) = &args.model {
                ModelSpec {
                    name: Some(name.clone()),
                    ..ModelSpec::default()
                }
            } else if let (Some(chart), Some(coeffs)) = (&args.chart, &args.coeffs) {
                let parts: Vec<String> =
                    coeffs.split(';').map(|s| s.trim().to_owned()).collect();
                if parts.len() != 3 {
                    return Err(RunError::Config(
                        "--coeffs wants three `;`-separated expressions".into(),
                    ));
                }
                ModelSpec {
                    chart: Some(chart.clone()),
                    coeffs: Some([parts[0].clone(), parts[1].clone(), parts[2].clone()]),
                    ..ModelSpec::default()
                }
            } else {
                return Err(RunError::Config(
                    "verify-form needs --model or --chart/--coeffs".into(),
                ));
            };
            RunConfig {
                task: TaskKind::VerifyForm,
                model: Some(model),
                params: Params::default(),
                grid: match &args.grid {
                    Some(g) => GridConfig { n: parse_grid(g)? },
                    None => GridConfig::default(),
                },
                tolerances: Tolerances {
                    contact: args.tol.unwrap_or(Tolerances::default().contact),
                },
                output: OutputConfig {
                    json: args.output.json.clone(),
                    csv: args.output.csv.clone(),
                },
                seed: None,
            }
        }
        Command::Surgery {
            command: SurgeryCommand::Plan { p, q, output },
        } => RunConfig {
            task: TaskKind::SurgeryPlan,
            model: None,
            params: Params {
                p: Some(*p),
                q: Some(*q),
                ..Params::default()
            },
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig {
                json: output.json.clone(),
                csv: output.csv.clone(),
            },
            seed: None,
        },
        Command::Branch {
            command:
                BranchCommand::Lift {
                    model,
                    m,
                    k,
                    l,
                    case,
                    f,
                    r0,
                    r1,
                    epsilon,
                    grid,
                    output,
                },
        } => RunConfig {
            task: TaskKind::BranchLift,
            model: Some(ModelSpec {
                name: Some(model.clone()),
                ..ModelSpec::default()
            }),
            params: Params {
                m: Some(*m),
                k: Some(*k),
                l: Some(*l),
                case: Some(case.clone()),
                f: f.clone(),
                r0: *r0,
                r1: *r1,
                epsilon: *epsilon,
                ..Params::default()
            },
            grid: match grid {
                Some(g) => GridConfig { n: parse_grid(g)? },
                None => GridConfig { n: [40, 12, 12] },
            },
            tolerances: Tolerances::default(),
            output: OutputConfig {
                json: output.json.clone(),
                csv: output.csv.clone(),
            },
            seed: None,
        },
        Command::Flow {
            command:
                FlowCommand::Orbits {
                    model,
                    seeds,
                    section_coord,
                    section_value,
                    returns,
                    output,
                },
        } => RunConfig {
            task: TaskKind::FlowOrbits,
            model: Some(ModelSpec {
                name: Some(model.clone()),
                ..ModelSpec::default()
            }),
            params: Params {
                seeds: Some(seeds.clone()),
                section_coord: *section_coord,
                section_value: *section_value,
                returns: *returns,
                ..Params::default()
            },
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            output: OutputConfig {
                json: output.json.clone(),
                csv: output.csv.clone(),
            },
            seed: None,
        },
        Command::Lens {
            command: LensCommand::Cover { p, q, b1, b2, output },
        } => {
            let tri = |v: &[i64], name: &str| -> Result<[i64; 3], RunError> {
                if v.len() != 3 {
                    return Err(RunError::Config(format!("--{name} wants m,k,l")));
                }
                Ok([v[0], v[1], v[2]])
            };
            RunConfig {
                task: TaskKind::LensCover,
                model: None,
                params: Params {
                    p: Some(*p),
                    q: Some(*q),
                    b1: Some(tri(b1, "b1")?),
                    b2: Some(tri(b2, "b2")?),
                    ..Params::default()
                },
                grid: GridConfig::default(),
                tolerances: Tolerances::default(),
                output: OutputConfig {
                    json: output.json.clone(),
                    csv: output.csv.clone(),
                },
                seed: None,
            }
        }
    };
    if config.seed.is_none() {
        config.seed = cli.seed;
    }
    Ok(config)
}

fn print_report(report: &Report) {
    println!("task: {}", report.task);
    for check in &report.checks {
        let op = match check.op {
            reebflow::report::CmpOp::Gt => ">",
            reebflow::report::CmpOp::Ge => ">=",
            reebflow::report::CmpOp::Lt => "<",
            reebflow::report::CmpOp::Le => "<=",
        };
        println!(
            "[{}] {}: {:.6e} {} {:.6e}",
            if check.verdict { "PASS" } else { "FAIL" },
            check.name,
            check.margin.0,
            op,
            check.tolerance.0
        );
    }
    for artifact in &report.artifacts {
        println!("wrote {artifact}");
    }
    println!(
        "result: {}",
        if report.all_passed() { "PASS" } else { "FAIL" }
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&config) {
        Ok(report) => {
            print_report(&report);
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

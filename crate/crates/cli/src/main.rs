//! `mqv`: command-line front end for the representation / diagram / space
//! toolkit. Every command reads and writes flat JSON; all randomness is
//! controlled by --seed; reports are byte-identical across runs for identical
//! inputs and flags.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

use mqv_core::curve::{DimensionVector, NodalCurveGraph};
use mqv_core::diagrams::{self, Diagram, PhiPsiDiagram, UVDiagram};
use mqv_core::linalg::{self, ComplexMatrix, ScalarFunction, ToleranceConfig, TWO_PI_I};
use mqv_core::mpa::{self, LocalModel, Representation};
use mqv_core::qham::{self, AssembledSpace, QHSpace};

#[derive(Parser)]
#[command(name = "mqv", version, about = "nodal-curve moduli toolkit")]
struct Cli {
    /// Equality tolerance for pass/fail checks (defaults to 1e-10).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for all randomized operations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this path.
    #[arg(long, global = true, value_name = "PATH")]
    json_out: Option<PathBuf>,
    /// Suppress stdout (useful with --json-out).
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FtMode {
    J,
    I,
}

#[derive(Clone, Copy, ValueEnum)]
enum RhDirection {
    ToBetti,
    ToDerham,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the vertex relations of a representation against a graph.
    ValidateRep {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        rep: PathBuf,
    },
    /// Apply the Fourier transform to a diagram, k times.
    Ft {
        #[arg(long)]
        diagram: PathBuf,
        #[arg(long, value_enum)]
        mode: FtMode,
        #[arg(long, default_value_t = 1)]
        times: u32,
    },
    /// Convert node data between the de Rham and Betti descriptions.
    Rh {
        #[arg(long)]
        node: PathBuf,
        #[arg(long, value_enum)]
        direction: RhDirection,
    },
    /// Rebuild a representation from local node diagrams.
    Glue {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        local: PathBuf,
    },
    /// Expand a representation into local node diagrams.
    Expand {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        rep: PathBuf,
    },
    /// Verify the quasi-Hamiltonian axioms on a space.
    QhCheck {
        /// Catalog name (double(n), fused_double(n), vdb(n1,n2)) or a path
        /// to an assembled-space JSON file.
        #[arg(long)]
        space: String,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 10)]
        triples: usize,
    },
    /// Assemble the moduli space of a decorated graph.
    Assemble {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dims: PathBuf,
    },
    /// Find a point of the moment fiber over a target.
    SolveFiber {
        #[arg(long)]
        space: String,
        /// JSON file with one matrix per slot; defaults to the identity.
        #[arg(long)]
        target: Option<PathBuf>,
        /// Use (re,im)·identity on every slot as the target.
        #[arg(long, value_name = "RE,IM", allow_hyphen_values = true)]
        target_scalar: Option<String>,
        #[arg(long, default_value_t = 80)]
        max_iter: usize,
    },
    /// Reduction report at a solved point of the identity moment fiber.
    Reduce {
        #[arg(long)]
        space: String,
        /// Comma-separated gauged slot indices; defaults to all slots.
        #[arg(long)]
        slots: Option<String>,
        /// Optional point file (one matrix per layout block); when absent
        /// the point is located by the fiber solver.
        #[arg(long)]
        point: Option<PathBuf>,
        #[arg(long, default_value_t = 80)]
        max_iter: usize,
    },
    /// Generate a deterministic random representation.
    Randgen {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        dims: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
    },
}

#[derive(Serialize)]
struct CheckResult {
    name: String,
    residual: f64,
    tol: f64,
    pass: bool,
}

#[derive(Serialize)]
struct Summary {
    passed: usize,
    failed: usize,
}

#[derive(Serialize)]
struct RunReport {
    command: String,
    version: String,
    config: Config,
    checks: Vec<CheckResult>,
    summary: Summary,
    payload: Value,
}

#[derive(Serialize)]
struct Config {
    eq_tol: f64,
    rank_tol: f64,
    fd_tol: f64,
    seed: u64,
}

enum CliError {
    /// Parse/shape/usage problems → exit 2.
    Usage(String),
}

impl From<mqv_core::Error> for CliError {
    fn from(e: mqv_core::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

/// Read a JSON value of type T from `path`. A full run report produced by
/// --json-out is also accepted; its payload is used.
fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    match serde_json::from_value::<T>(value.clone()) {
        Ok(t) => Ok(t),
        Err(e) => {
            if let Some(payload) = value.get("payload") {
                if let Ok(t) = serde_json::from_value::<T>(payload.clone()) {
                    return Ok(t);
                }
            }
            Err(CliError::Usage(format!("{}: {e}", path.display())))
        }
    }
}

fn check(name: impl Into<String>, residual: f64, tol: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        residual,
        tol,
        pass: residual <= tol,
    }
}

struct Outcome {
    payload: Value,
    checks: Vec<CheckResult>,
}

fn load_space(spec: &str) -> Result<QHSpace, CliError> {
    if let Some(space) = qham::catalog(spec) {
        return Ok(space);
    }
    let path = PathBuf::from(spec);
    if path.exists() {
        let asm: AssembledSpace = read_json(&path)?;
        return Ok(asm.space);
    }
    Err(CliError::Usage(format!(
        "unknown space '{spec}' (not a catalog name or readable file)"
    )))
}

fn parse_scalar(s: &str) -> Result<Complex64, CliError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("expected RE,IM, got '{s}'")));
    }
    let re = parts[0]
        .trim()
        .parse::<f64>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let im = parts[1]
        .trim()
        .parse::<f64>()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(Complex64::new(re, im))
}

fn run(cli: &Cli, cfg: &ToleranceConfig) -> Result<Outcome, CliError> {
    match &cli.cmd {
        Cmd::ValidateRep { graph, rep } => {
            let g: NodalCurveGraph = read_json(graph)?;
            let r: Representation = read_json(rep)?;
            let report = mpa::check_relations(&r, &g, cfg)?;
            let mut checks: Vec<CheckResult> = report
                .norms
                .iter()
                .map(|(v, &n)| check(format!("relation.vertex.{v}"), n, cfg.eq_tol))
                .collect();
            for f in &report.invertibility_failures {
                checks.push(CheckResult {
                    name: format!("invariant.{f}"),
                    residual: f64::INFINITY,
                    tol: cfg.eq_tol,
                    pass: false,
                });
            }
            Ok(Outcome {
                payload: serde_json::to_value(&report)?,
                checks,
            })
        }
        Cmd::Ft {
            diagram,
            mode,
            times,
        } => {
            let d: Diagram = read_json(diagram)?;
            let out = match (d, mode) {
                (Diagram::PhiPsi(mut d), FtMode::J) => {
                    for _ in 0..*times {
                        d = diagrams::ft_j(&d, cfg)?;
                    }
                    Diagram::PhiPsi(d)
                }
                (Diagram::Uv(mut d), FtMode::I) => {
                    for _ in 0..*times {
                        d = diagrams::ft_i(&d)?;
                    }
                    Diagram::Uv(d)
                }
                _ => {
                    return Err(CliError::Usage(
                        "mode J needs a phi_psi diagram, mode I a uv diagram".into(),
                    ))
                }
            };
            Ok(Outcome {
                payload: serde_json::to_value(&out)?,
                checks: vec![],
            })
        }
        Cmd::Rh { node, direction } => {
            let d: Diagram = read_json(node)?;
            match direction {
                RhDirection::ToBetti => {
                    let uv = match d {
                        Diagram::Uv(uv) => uv,
                        Diagram::DerhamNode(n) => UVDiagram::new(n.u, n.v)?,
                        _ => {
                            return Err(CliError::Usage(
                                "to-betti expects a uv or derham_node input".into(),
                            ))
                        }
                    };
                    let j = diagrams::malgrange_to_j(&uv, cfg)?;
                    let checks = rh_checks(&uv, &j, cfg)?;
                    Ok(Outcome {
                        payload: serde_json::to_value(Diagram::PhiPsi(j))?,
                        checks,
                    })
                }
                RhDirection::ToDerham => {
                    let j = match d {
                        Diagram::PhiPsi(j) => j,
                        _ => {
                            return Err(CliError::Usage(
                                "to-derham expects a phi_psi input".into(),
                            ))
                        }
                    };
                    let uv = diagrams::malgrange_from_j(&j, cfg)?;
                    let checks = rh_checks(&uv, &j, cfg)?;
                    Ok(Outcome {
                        payload: serde_json::to_value(Diagram::Uv(uv))?,
                        checks,
                    })
                }
            }
        }
        Cmd::Glue { graph, local } => {
            let g: NodalCurveGraph = read_json(graph)?;
            let model: LocalModel = read_json(local)?;
            match mpa::glue_from_local(&g, &model, cfg) {
                Ok(rep) => Ok(Outcome {
                    payload: serde_json::to_value(&rep)?,
                    checks: vec![check("glue.ft_consistency", 0.0, cfg.eq_tol)],
                }),
                Err(mqv_core::Error::FtConsistency(msg)) => Ok(Outcome {
                    payload: Value::String(msg),
                    checks: vec![CheckResult {
                        name: "glue.ft_consistency".into(),
                        residual: f64::INFINITY,
                        tol: cfg.eq_tol,
                        pass: false,
                    }],
                }),
                Err(e) => Err(e.into()),
            }
        }
        Cmd::Expand { graph, rep } => {
            let g: NodalCurveGraph = read_json(graph)?;
            let r: Representation = read_json(rep)?;
            let model = mpa::expand_all(&r, &g, cfg)?;
            Ok(Outcome {
                payload: serde_json::to_value(&model)?,
                checks: vec![],
            })
        }
        Cmd::QhCheck {
            space,
            points,
            triples,
        } => {
            let sp = load_space(space)?;
            let report = qham::check_qh_axioms(&sp, *points, *triples, cli.seed, cfg)?;
            let checks = vec![
                check("qh1.dual", report.qh1_max_dual, report.qh1_tol),
                check("qh1.fd", report.qh1_max_fd, report.qh1_fd_tol),
                check("qh2", report.qh2_max, report.qh2_tol),
                check("qh3.angle", report.qh3_max_angle, report.qh3_angle_tol),
                check(
                    "qh3.kernel_dims",
                    report.qh3_dim_mismatches as f64,
                    0.0,
                ),
            ];
            Ok(Outcome {
                payload: serde_json::to_value(&report)?,
                checks,
            })
        }
        Cmd::Assemble { graph, dims } => {
            let g: NodalCurveGraph = read_json(graph)?;
            let d: DimensionVector = read_json(dims)?;
            let asm = qham::assemble_moduli(&g, &d)?;
            Ok(Outcome {
                payload: serde_json::to_value(&asm)?,
                checks: vec![],
            })
        }
        Cmd::SolveFiber {
            space,
            target,
            target_scalar,
            max_iter,
        } => {
            let sp = load_space(space)?;
            let target = match (target, target_scalar) {
                (Some(path), None) => read_json::<Vec<ComplexMatrix>>(path)?,
                (None, Some(s)) => {
                    let z = parse_scalar(s)?;
                    sp.identity_tuple()
                        .into_iter()
                        .map(|m| m.scale(z))
                        .collect()
                }
                (None, None) => sp.identity_tuple(),
                (Some(_), Some(_)) => {
                    return Err(CliError::Usage(
                        "--target and --target-scalar are mutually exclusive".into(),
                    ))
                }
            };
            let sol = qham::solve_moment_fiber(&sp, &target, cli.seed, *max_iter)?;
            let checks = vec![check("fiber.residual", sol.residual, 1e-10)];
            Ok(Outcome {
                payload: serde_json::to_value(&sol)?,
                checks,
            })
        }
        Cmd::Reduce {
            space,
            slots,
            point,
            max_iter,
        } => {
            let sp = load_space(space)?;
            let gauged: Vec<usize> = match slots {
                Some(s) => s
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<usize>()
                            .map_err(|e| CliError::Usage(e.to_string()))
                    })
                    .collect::<Result<_, _>>()?,
                None => (0..sp.slot_count()).collect(),
            };
            let x = match point {
                Some(path) => read_json::<Vec<ComplexMatrix>>(path)?,
                None => {
                    let sol =
                        qham::solve_moment_fiber(&sp, &sp.identity_tuple(), cli.seed, *max_iter)?;
                    sol.point.ok_or_else(|| {
                        CliError::Usage(format!(
                            "fiber solver failed (best residual {:.3e})",
                            sol.residual
                        ))
                    })?
                }
            };
            let report = qham::reduction_report(&sp, &x, &gauged, cfg)?;
            let checks = vec![check(
                "reduce.nondegenerate",
                if report.nondegenerate { 0.0 } else { 1.0 },
                0.0,
            )];
            Ok(Outcome {
                payload: serde_json::to_value(&report)?,
                checks,
            })
        }
        Cmd::Randgen {
            graph,
            dims,
            radius,
        } => {
            let g: NodalCurveGraph = read_json(graph)?;
            let d: DimensionVector = read_json(dims)?;
            let rep = mpa::random_representation(&g, &d, cli.seed, *radius)?;
            Ok(Outcome {
                payload: serde_json::to_value(&rep)?,
                checks: vec![],
            })
        }
    }
}

/// Consistency block for the Riemann–Hilbert commands:
/// ‖(1+ba) − exp(2πi·vu)‖ and the roundtrip residual.
fn rh_checks(
    uv: &UVDiagram,
    j: &PhiPsiDiagram,
    cfg: &ToleranceConfig,
) -> Result<Vec<CheckResult>, CliError> {
    let n = j.dim_phi();
    let t_phi = &ComplexMatrix::identity(n) + &(&j.b * &j.a);
    let exp_vu = linalg::matrix_function_cfg(&uv.vu().scale(TWO_PI_I), ScalarFunction::Exp, cfg)?;
    let monodromy_defect = (&t_phi - &exp_vu).frobenius_norm();
    let back = diagrams::malgrange_from_j(j, cfg)?;
    let roundtrip = (&back.u - &uv.u)
        .frobenius_norm()
        .max((&back.v - &uv.v).frobenius_norm());
    Ok(vec![
        check("rh.monodromy", monodromy_defect, cfg.eq_tol * 10.0),
        check("rh.roundtrip", roundtrip, 1e-8),
    ])
}

fn command_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::ValidateRep { .. } => "validate-rep",
        Cmd::Ft { .. } => "ft",
        Cmd::Rh { .. } => "rh",
        Cmd::Glue { .. } => "glue",
        Cmd::Expand { .. } => "expand",
        Cmd::QhCheck { .. } => "qh-check",
        Cmd::Assemble { .. } => "assemble",
        Cmd::SolveFiber { .. } => "solve-fiber",
        Cmd::Reduce { .. } => "reduce",
        Cmd::Randgen { .. } => "randgen",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = ToleranceConfig::default();
    if let Some(t) = cli.tol {
        cfg.eq_tol = t;
    }
    let outcome = match run(&cli, &cfg) {
        Ok(o) => o,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let failed = outcome.checks.iter().filter(|c| !c.pass).count();
    let passed = outcome.checks.len() - failed;
    let report = RunReport {
        command: command_name(&cli.cmd).to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: Config {
            eq_tol: cfg.eq_tol,
            rank_tol: cfg.rank_tol,
            fd_tol: cfg.fd_tol,
            seed: cli.seed,
        },
        checks: outcome.checks,
        summary: Summary { passed, failed },
        payload: outcome.payload,
    };
    let text = serde_json::to_string_pretty(&report).expect("report serialization");
    if !cli.quiet {
        println!("{text}");
    }
    if let Some(path) = &cli.json_out {
        if let Err(e) = std::fs::write(path, format!("{text}\n")) {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

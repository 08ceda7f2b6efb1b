//! Argument parsing and dispatch for the `morinflow` binary.
//!
//! [`run`] maps a parsed [`Cli`] to the text that should go to stdout, plus
//! any SVG side output. Output records are plain serde types so every JSON
//! line the tool prints parses back into the value that produced it.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use morinflow::bounds::{self, BoundIndexing};
use morinflow::divisors::{multiplicities_with, MuRounding};
use morinflow::genericity::{self, ConfluentSystem, SubspaceConfig};
use morinflow::jets::{self, MultiPoly, SmoothHandle, DEFAULT_PSI_TOL};
use morinflow::linalg::DEFAULT_RANK_TOL;
use morinflow::models::{self, STRATUM_TOL};
use morinflow::patterns::{self, ClassifiedPattern, Context};
use morinflow::sweep::{self, SweepMeasure};
use morinflow::{
    omega_of, trajectory_divisor, Divisor, ModelSpec, OmegaPattern, StratumLabel, Variant,
};

#[derive(Debug, Parser)]
#[command(
    name = "morinflow",
    version,
    about = "Local models of vector fields on manifolds with boundary"
)]
pub struct Cli {
    /// Numerical tolerance; each command has its own default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Seed for the randomized commands.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON output (the default).
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,
    /// CSV output, for `sweep` and `reconstruct`.
    #[arg(long, global = true)]
    pub csv: bool,
    /// Also write a number-line diagram of the model(s) involved.
    #[arg(long, global = true, value_name = "PATH")]
    pub svg: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stratum label of the chart point `u`.
    Strata {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, allow_hyphen_values = true)]
        u: f64,
    },
    /// Trajectory divisor and its multiplicities.
    Divisor {
        #[command(flatten)]
        model: ModelArg,
        /// Rounding of the half-multiplicities in `mu`: ceil or floor.
        #[arg(long, default_value = "ceil", value_parser = parse_rounding)]
        mu: MuRounding,
    },
    /// Enumerate tangency patterns.
    Patterns {
        #[command(subcommand)]
        which: PatternsCommand,
    },
    /// Witness model for a pattern.
    Realize {
        /// Pattern such as `(1,2,1)`.
        #[arg(long)]
        pattern: OmegaPattern,
        /// Realize near a type-K Morin point.
        #[arg(
            long,
            value_name = "K",
            conflicts_with = "traversal",
            required_unless_present = "traversal"
        )]
        local: Option<usize>,
        /// Realize along a trajectory in dimension N + 1.
        #[arg(long, value_name = "N")]
        traversal: Option<usize>,
        #[arg(long, default_value = "PgeqEplus")]
        variant: Variant,
    },
    /// Rank of a confluent Vandermonde matrix.
    Vandermonde {
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        mults: Vec<usize>,
        #[arg(long)]
        d: usize,
    },
    /// General position of a subspace configuration.
    Genpos {
        /// Config JSON, or `@path`.
        #[arg(long)]
        config: String,
    },
    /// Versality rank check of a product model.
    Versality {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Monte Carlo estimate of the localization constant.
    Rho {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Count root escapes under the localization bound.
    Confine {
        #[arg(long)]
        k: usize,
        /// Defaults to the known supremum `k`.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Coefficient indexing: proof or statement.
        #[arg(long, default_value = "proof", value_parser = parse_indexing)]
        indexing: BoundIndexing,
    },
    /// Pattern census of perturbations around a model.
    Sweep {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        count: usize,
        /// uniform, lattice or mixed.
        #[arg(long, default_value = "mixed")]
        measure: SweepMeasure,
    },
    /// Lie-derivative chain of a boundary function along a field.
    Psi {
        /// `{"field": [poly, ...], "z": poly}`, or `@path`.
        #[arg(long)]
        handles: String,
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        point: Vec<f64>,
        #[arg(long)]
        depth: usize,
        /// Also report the stratum label read off the chain.
        #[arg(long)]
        label: bool,
    },
    /// Recover a field from its extended jet map on a grid.
    Reconstruct {
        /// JSON array of n + 2 polynomials, or `@path`.
        #[arg(long)]
        theta: String,
        /// One `lo:hi:count` range per chart coordinate, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        grid: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum PatternsCommand {
    /// Patterns near a type-K Morin point.
    Local {
        #[arg(long)]
        k: usize,
    },
    /// Patterns of trajectories of traversally generic fields.
    Traversal {
        #[arg(long)]
        n: usize,
        /// Include the singleton pattern `(2)` of a trajectory tangent at one point.
        #[arg(long)]
        singleton: bool,
    },
    /// The quartic catalog with polarities.
    P4,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model spec JSON, or `@path`.
    #[arg(long)]
    pub model: String,
}

impl ModelArg {
    fn load(&self) -> Result<ModelSpec, CliError> {
        parse_json(&self.model)
    }
}

fn parse_rounding(s: &str) -> Result<MuRounding, String> {
    match s {
        "ceil" => Ok(MuRounding::Ceil),
        "floor" => Ok(MuRounding::Floor),
        _ => Err(format!("expected ceil or floor, got {s:?}")),
    }
}

fn parse_indexing(s: &str) -> Result<BoundIndexing, String> {
    match s {
        "proof" => Ok(BoundIndexing::Proof),
        "statement" => Ok(BoundIndexing::Statement),
        _ => Err(format!("expected proof or statement, got {s:?}")),
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Exit code 2.
    Usage(String),
    /// Exit code 1.
    Domain(morinflow::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Domain(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl From<morinflow::Error> for CliError {
    fn from(e: morinflow::Error) -> Self {
        CliError::Domain(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Reads `@path` arguments from disk, then parses the JSON.
fn parse_json<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T, CliError> {
    let text = match arg.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path)?,
        None => arg.to_string(),
    };
    serde_json::from_str(&text)
        .map_err(|e| CliError::Domain(morinflow::Error::InvalidSpec(e.to_string())))
}

// ---------------------------------------------------------------------------
// Output records

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorReport {
    pub divisor: Divisor,
    pub pattern: OmegaPattern,
    pub m: usize,
    pub m_reduced: usize,
    pub mu: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternList<T> {
    pub count: usize,
    pub patterns: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenposReport {
    pub pass: bool,
    pub intersection_dimension: usize,
    pub expected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiReport {
    pub psi: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<StratumLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Handles {
    pub field: Vec<MultiPoly>,
    pub z: MultiPoly,
}

/// What a command produced.
#[derive(Debug, Default)]
pub struct Output {
    pub stdout: String,
    pub svg: Option<String>,
    /// Per-point diagnostics for stderr.
    pub warnings: Vec<String>,
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("output records serialize")
}

fn svg_rows(rows: Vec<(String, ModelSpec)>) -> Result<Option<String>, CliError> {
    Ok(Some(patterns::render_svg(&rows)?))
}

/// Confluent matrix rows under a `u^{d-1},...,u^0` header.
fn matrix_csv(sys: &ConfluentSystem) -> String {
    let m = genericity::confluent_vandermonde(sys);
    let d = m.ncols();
    let mut out = (0..d)
        .map(|k| format!("u^{}", d - 1 - k))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Parses `lo:hi:count,...` into the tensor grid, first coordinate slowest.
pub fn parse_grid(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let axes = s
        .split(',')
        .map(|r| {
            let parts: Vec<&str> = r.split(':').collect();
            let bad = || CliError::Usage(format!("grid range {r:?} is not lo:hi:count"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
            let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
            if n == 0 {
                return Err(bad());
            }
            Ok((0..n)
                .map(|i| {
                    if n == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (n - 1) as f64
                    }
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    Ok(grid)
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let csv_ok = matches!(
        cli.command,
        Command::Sweep { .. } | Command::Reconstruct { .. } | Command::Vandermonde { .. }
    );
    if cli.csv && !csv_ok {
        return Err(CliError::Usage(
            "--csv applies to sweep, reconstruct and vandermonde only".into(),
        ));
    }
    let svg_ok = matches!(
        cli.command,
        Command::Strata { .. }
            | Command::Divisor { .. }
            | Command::Patterns { .. }
            | Command::Realize { .. }
            | Command::Versality { .. }
            | Command::Sweep { .. }
    );
    if cli.svg.is_some() && !svg_ok {
        return Err(CliError::Usage(
            "--svg has no diagram for this command".into(),
        ));
    }
    let want_svg = cli.svg.is_some();
    let mut out = Output::default();
    match &cli.command {
        Command::Strata { model, u } => {
            let m = model.load()?;
            let label = models::label_point(&m, *u, cli.tol.unwrap_or(STRATUM_TOL))?;
            out.stdout = json(&label);
            if want_svg {
                out.svg = svg_rows(vec![(format!("u = {u}"), m)])?;
            }
        }
        Command::Divisor { model, mu } => {
            let m = model.load()?;
            let divisor = trajectory_divisor(&m)?;
            let pattern = omega_of(&divisor);
            let r = multiplicities_with(&pattern, *mu);
            out.stdout = json(&DivisorReport {
                divisor,
                pattern: pattern.clone(),
                m: r.m,
                m_reduced: r.m_reduced,
                mu: r.mu,
            });
            if want_svg {
                out.svg = svg_rows(vec![(pattern.to_string(), m)])?;
            }
        }
        Command::Patterns { which } => {
            let (list, ctx) = match which {
                PatternsCommand::Local { k } => {
                    (patterns::enumerate_local(*k), Some(Context::Local(*k)))
                }
                PatternsCommand::Traversal { n, singleton } => (
                    patterns::enumerate_traversal(*n, *singleton),
                    Some(Context::Traversal(*n)),
                ),
                PatternsCommand::P4 => (Vec::new(), None),
            };
            match ctx {
                Some(ctx) => {
                    if want_svg {
                        let rows = list
                            .iter()
                            .map(|w| {
                                Ok((
                                    w.to_string(),
                                    patterns::realize_pattern(w, ctx, Variant::PgeqEplus)?,
                                ))
                            })
                            .collect::<Result<Vec<_>, CliError>>()?;
                        out.svg = svg_rows(rows)?;
                    }
                    out.stdout = json(&PatternList {
                        count: list.len(),
                        patterns: list,
                    });
                }
                None => {
                    let classified: Vec<ClassifiedPattern> = patterns::classify_p4()?;
                    if want_svg {
                        let rows = classified
                            .iter()
                            .map(|c| {
                                let spec = patterns::realize_pattern(
                                    &c.pattern,
                                    Context::Local(4),
                                    Variant::PgeqEplus,
                                )?;
                                Ok((c.pattern.to_string(), spec))
                            })
                            .collect::<Result<Vec<_>, CliError>>()?;
                        out.svg = svg_rows(rows)?;
                    }
                    out.stdout = json(&PatternList {
                        count: classified.len(),
                        patterns: classified,
                    });
                }
            }
        }
        Command::Realize {
            pattern,
            local,
            traversal,
            variant,
        } => {
            let ctx = match (local, traversal) {
                (Some(k), None) => Context::Local(*k),
                (None, Some(n)) => Context::Traversal(*n),
                _ => {
                    return Err(CliError::Usage(
                        "give exactly one of --local and --traversal".into(),
                    ))
                }
            };
            let spec = patterns::realize_pattern(pattern, ctx, *variant)?;
            out.stdout = json(&spec);
            if want_svg {
                out.svg = svg_rows(vec![(pattern.to_string(), spec)])?;
            }
        }
        Command::Vandermonde { alphas, mults, d } => {
            let sys = ConfluentSystem::new(alphas.clone(), mults.clone(), *d)?;
            out.stdout = if cli.csv {
                matrix_csv(&sys)
            } else {
                json(&genericity::rank_test(
                    &sys,
                    cli.tol.unwrap_or(DEFAULT_RANK_TOL),
                ))
            };
        }
        Command::Genpos { config } => {
            let cfg: SubspaceConfig = parse_json(config)?;
            let tol = cli.tol.unwrap_or(DEFAULT_RANK_TOL);
            let expected = cfg.n().saturating_sub(cfg.codims().iter().sum());
            out.stdout = json(&GenposReport {
                pass: genericity::general_position(&cfg, tol),
                intersection_dimension: genericity::intersection_dimension(&cfg, tol),
                expected,
            });
        }
        Command::Versality { model } => {
            let m = model.load()?;
            out.stdout = json(&genericity::versality_check(
                &m,
                cli.tol.unwrap_or(DEFAULT_RANK_TOL),
            )?);
            if want_svg {
                out.svg = svg_rows(vec![("versality".into(), m)])?;
            }
        }
        Command::Rho { k, samples } => {
            if *k == 0 {
                return Err(CliError::Domain(morinflow::Error::InvalidSpec(
                    "k must be >= 1".into(),
                )));
            }
            out.stdout = json(&bounds::rho_report(*k, *samples, cli.seed));
        }
        Command::Confine {
            k,
            rho,
            eps,
            trials,
            indexing,
        } => {
            if *k == 0 || !(*eps > 0.0) {
                return Err(CliError::Domain(morinflow::Error::InvalidSpec(
                    "need k >= 1 and eps > 0".into(),
                )));
            }
            let rho = rho.unwrap_or_else(|| bounds::rho_bound(*k));
            out.stdout = json(&bounds::verify_confinement(
                *k, rho, *eps, *trials, cli.seed, *indexing,
            ));
        }
        Command::Sweep {
            model,
            radius,
            count,
            measure,
        } => {
            let m = model.load()?;
            if *count == 0 {
                return Err(CliError::Domain(morinflow::Error::InvalidSpec(
                    "count must be >= 1".into(),
                )));
            }
            let census =
                sweep::empirical_pattern_census_with(&m, *radius, *count, cli.seed, *measure)?;
            out.stdout = if cli.csv {
                census.to_csv()
            } else {
                json(&census)
            };
            if want_svg {
                out.svg = svg_rows(vec![("center".into(), m)])?;
            }
        }
        Command::Psi {
            handles,
            point,
            depth,
            label,
        } => {
            let h: Handles = parse_json(handles)?;
            let field: Vec<&dyn SmoothHandle> =
                h.field.iter().map(|p| p as &dyn SmoothHandle).collect();
            let psi = jets::psi_chain(&field, &h.z, point, *depth)?;
            let label = if *label {
                let tol = cli.tol.unwrap_or(DEFAULT_PSI_TOL);
                Some(jets::morse_label_general(&field, &h.z, point, *depth, tol)?)
            } else {
                None
            };
            out.stdout = json(&PsiReport { psi, label });
        }
        Command::Reconstruct { theta, grid } => {
            let theta: Vec<MultiPoly> = parse_json(theta)?;
            let handles: Vec<&dyn SmoothHandle> =
                theta.iter().map(|p| p as &dyn SmoothHandle).collect();
            let grid = parse_grid(grid)?;
            let rec =
                jets::reconstruct_field(&handles, &grid, cli.tol.unwrap_or(DEFAULT_RANK_TOL))?;
            out.warnings = rec
                .degenerate
                .iter()
                .map(|d| d.to_error().to_string())
                .collect();
            out.stdout = if cli.csv { rec.to_csv() } else { json(&rec) };
        }
    }
    if !out.stdout.ends_with('\n') {
        out.stdout.push('\n');
    }
    Ok(out)
}

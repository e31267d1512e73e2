//! Command-line front end: `run`, `study` and `plot`.
//!
//! Settings come from flags, then an optional TOML file (`--config`), then
//! defaults. The defaults reproduce the first benchmark table: example1,
//! ε = 10, σ = 1, levels 2 to 64, at most 30 iterations, tolerance 1e-6.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for solver or I/O failures.
//!
//! Plots color each triangle by the mean of its nodal values on a linear ramp
//! from blue `#3b4cc0` (minimum) through white `#f7f7f7` (midpoint) to red
//! `#b40426` (maximum). Bubble coefficients are not drawn.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{convergence_rates, find_case, run_level, run_levels, study_notes, LevelResult, StudyConfig, DEFAULT_LEVELS, ERROR_DEGREE};
use crate::assembly::ASSEMBLY_DEGREE;
use crate::dd::{FixedPointConfig, FreezingMode};
use crate::mesh::{Diagonal, Mesh};
use crate::spaces::FieldCoefficients;
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ddfem", version, about = "Dynamic-diffusion finite elements for convection-diffusion-reaction benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one level and write its error row.
    Run(RunArgs),
    /// Solve a sequence of levels and write the convergence table.
    Study(StudyArgs),
    /// Solve one level and write an SVG of the nodal field.
    Plot(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalArg {
    SwNe,
    NwSe,
}

impl From<DiagonalArg> for Diagonal {
    fn from(d: DiagonalArg) -> Self {
        match d {
            DiagonalArg::SwNe => Diagonal::SouthWestNorthEast,
            DiagonalArg::NwSe => Diagonal::NorthWestSouthEast,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreezingArg {
    Element,
    Global,
    Never,
}

impl From<FreezingArg> for FreezingMode {
    fn from(f: FreezingArg) -> Self {
        match f {
            FreezingArg::Element => FreezingMode::PerElement,
            FreezingArg::Global => FreezingMode::Global,
            FreezingArg::Never => FreezingMode::Never,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Markdown,
}

/// Settings shared by all subcommands. Unset flags fall back to the config file.
#[derive(Debug, Clone, Args, Default)]
pub struct CommonArgs {
    /// Benchmark case: example1 or example2.
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub diagonal: Option<DiagonalArg>,
    /// Exactness degree of the assembly quadrature.
    #[arg(long)]
    pub assembly_degree: Option<usize>,
    /// Exactness degree of the error quadrature.
    #[arg(long)]
    pub error_degree: Option<usize>,
    /// Maximum number of nonlinear iterations (M).
    #[arg(long = "max-iterations", short = 'M')]
    pub max_iterations: Option<usize>,
    /// Relative increment tolerance (δ).
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, value_enum)]
    pub freezing: Option<FreezingArg>,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// TOML file with any of the settings above (snake_case keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Subdivisions per side.
    #[arg(long, short)]
    pub n: Option<usize>,
    /// Also write an SVG of the solution (default path solution.svg).
    #[arg(long, num_args = 0..=1, default_missing_value = "solution.svg")]
    pub plot: Option<PathBuf>,
    /// Write the iteration trace as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated subdivision counts.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Run levels on separate threads.
    #[arg(long)]
    pub parallel: bool,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub case: Option<String>,
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub n: Option<usize>,
    pub levels: Option<Vec<usize>>,
    pub diagonal: Option<DiagonalArg>,
    pub assembly_degree: Option<usize>,
    pub error_degree: Option<usize>,
    pub max_iterations: Option<usize>,
    pub delta: Option<f64>,
    pub freezing: Option<FreezingArg>,
    pub format: Option<Format>,
    pub parallel: Option<bool>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: String,
    pub epsilon: f64,
    pub sigma: f64,
    pub n: usize,
    pub levels: Vec<usize>,
    pub study: StudyConfig,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub plot: Option<PathBuf>,
    pub trace: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: "example1".into(),
            epsilon: 10.0,
            sigma: 1.0,
            n: 16,
            levels: DEFAULT_LEVELS.to_vec(),
            study: StudyConfig::default(),
            output: None,
            format: Format::Csv,
            plot: None,
            trace: None,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Failure(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidSubdivision(_)
            | Error::UnsupportedQuadrature(_)
            | Error::InvalidProblem(_)
            | Error::UnknownCase(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl RunConfig {
    fn resolve(common: &CommonArgs, n: Option<usize>, levels: Option<Vec<usize>>, parallel: bool) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let d = RunConfig::default();
        let fp = FixedPointConfig::default();
        let config = RunConfig {
            case: common.case.clone().or(file.case).unwrap_or(d.case),
            epsilon: common.epsilon.or(file.epsilon).unwrap_or(d.epsilon),
            sigma: common.sigma.or(file.sigma).unwrap_or(d.sigma),
            n: n.or(file.n).unwrap_or(d.n),
            levels: levels.or(file.levels).unwrap_or(d.levels),
            study: StudyConfig {
                fixed_point: FixedPointConfig {
                    max_iterations: common.max_iterations.or(file.max_iterations).unwrap_or(fp.max_iterations),
                    tolerance: common.delta.or(file.delta).unwrap_or(fp.tolerance),
                    freezing: common.freezing.or(file.freezing).map_or(fp.freezing, Into::into),
                    assembly_degree: common.assembly_degree.or(file.assembly_degree).unwrap_or(ASSEMBLY_DEGREE),
                },
                diagonal: common.diagonal.or(file.diagonal).map_or(Diagonal::default(), Into::into),
                error_degree: common.error_degree.or(file.error_degree).unwrap_or(ERROR_DEGREE),
                parallel: parallel || file.parallel.unwrap_or(false),
            },
            output: common.output.clone(),
            format: common.format.or(file.format).unwrap_or_default(),
            plot: None,
            trace: None,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        find_case(&self.case)?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(CliError::Usage(format!("--epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(CliError::Usage(format!("--sigma must be nonnegative, got {}", self.sigma)));
        }
        if self.n == 0 {
            return Err(CliError::Usage("--n must be at least 1".into()));
        }
        if self.levels.is_empty() || self.levels[0] == 0 || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Usage(format!("--levels must be positive and strictly increasing, got {:?}", self.levels)));
        }
        if self.study.fixed_point.max_iterations == 0 {
            return Err(CliError::Usage("--max-iterations must be at least 1".into()));
        }
        if !(self.study.fixed_point.tolerance > 0.0) {
            return Err(CliError::Usage("--delta must be positive".into()));
        }
        for degree in [self.study.fixed_point.assembly_degree, self.study.error_degree] {
            crate::spaces::quadrature_rule(degree)?;
        }
        Ok(())
    }
}

/// One line of `run` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub case: String,
    pub epsilon: f64,
    pub sigma: f64,
    pub n: usize,
    pub l2: f64,
    pub h1_semi: f64,
    pub energy: f64,
    pub star: f64,
    pub dissipation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_increment: f64,
}

impl RunRow {
    fn new(config: &RunConfig, level: &LevelResult) -> Self {
        Self {
            case: config.case.clone(),
            epsilon: config.epsilon,
            sigma: config.sigma,
            n: level.n,
            l2: level.errors.l2,
            h1_semi: level.errors.h1_semi,
            energy: level.errors.energy,
            star: level.errors.star,
            dissipation: level.errors.dissipation,
            iterations: level.report.iterations,
            converged: level.report.converged,
            final_increment: level.report.final_increment,
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, false, stdout, stderr),
        Command::Plot(args) => cmd_run(args, true, stdout, stderr),
        Command::Study(args) => cmd_study(args, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}\n\nFor more information, try '--help'.");
            EXIT_USAGE
        }
        Err(CliError::Failure(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

fn open_output(path: &Option<PathBuf>, stdout: &mut dyn Write, body: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, body),
        None => Ok(stdout.write_all(body)?),
    }
}

fn write_file(path: &Path, body: &[u8]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?);
    w.write_all(body)?;
    w.flush()?;
    Ok(())
}

fn cmd_run(args: &RunArgs, plot_only: bool, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let mut config = RunConfig::resolve(&args.common, args.n, None, false)?;
    config.plot = args.plot.clone();
    config.trace = args.trace.clone();
    let case = find_case(&config.case)?;
    let level = run_level(&case, config.epsilon, config.sigma, config.n, &config.study)?;
    if !level.report.converged {
        let _ = writeln!(
            stderr,
            "warning: no convergence after {} iterations (increment {:e})",
            level.report.iterations, level.report.final_increment
        );
    }
    if let Some(trace) = &config.trace {
        let mut buf = Vec::new();
        level.report.write_trace_csv(&mut buf)?;
        write_file(trace, &buf)?;
    }
    let mesh = Mesh::unit_square(config.n, config.study.diagonal)?;
    let title = format!("{} ε={} σ={} n={}", config.case, config.epsilon, config.sigma, config.n);
    if plot_only {
        let svg = render_svg(&mesh, &level.solution, &title);
        let path = config.output.clone().or(config.plot.clone());
        open_output(&path, stdout, svg.as_bytes())?;
        return Ok(EXIT_OK);
    }
    if let Some(plot) = &config.plot {
        write_file(plot, render_svg(&mesh, &level.solution, &title).as_bytes())?;
    }
    let row = RunRow::new(&config, &level);
    let body = match config.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.serialize(&row).map_err(Error::from)?;
            w.into_inner().map_err(|e| CliError::Failure(e.to_string()))?
        }
        Format::Markdown => format!(
            "| case | ε | σ | n | ‖e‖₀ | |e|₁ | |||e||| | |||e|||_* | iters | converged |\n|---|---|---|---|---|---|---|---|---|---|\n| {} | {} | {} | {} | {:.4e} | {:.4e} | {:.4e} | {:.4e} | {} | {} |\n",
            row.case, row.epsilon, row.sigma, row.n, row.l2, row.h1_semi, row.energy, row.star, row.iterations, row.converged
        )
        .into_bytes(),
    };
    open_output(&config.output, stdout, &body)?;
    Ok(EXIT_OK)
}

fn cmd_study(args: &StudyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let config = RunConfig::resolve(&args.common, None, args.levels.clone(), args.parallel)?;
    let case = find_case(&config.case)?;
    let results = run_levels(&case, config.epsilon, config.sigma, &config.levels, &config.study)?;
    let mut ok = Vec::new();
    let mut failed = false;
    {
        // Per-level summaries go to stdout unless stdout carries the table.
        let summary: &mut dyn Write = if config.output.is_some() { &mut *stdout } else { &mut *stderr };
        for r in results {
            match r {
                Ok(level) => {
                    let _ = writeln!(
                        summary,
                        "n={:<3} l2={:.4e} h1={:.4e} star={:.4e} iters={} converged={}",
                        level.n, level.errors.l2, level.errors.h1_semi, level.errors.star, level.report.iterations, level.report.converged
                    );
                    ok.push(level);
                }
                Err(e) => {
                    failed = true;
                    let _ = writeln!(summary, "failed: {e}");
                }
            }
        }
    }
    let mut table = convergence_rates(&ok);
    table.notes = study_notes(&case, config.epsilon);
    let body = match config.format {
        Format::Csv => {
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            buf
        }
        Format::Markdown => table.to_markdown().into_bytes(),
    };
    open_output(&config.output, stdout, &body)?;
    Ok(if failed { EXIT_FAILURE } else { EXIT_OK })
}

/// Color of `t ∈ [0, 1]` on the blue-white-red ramp.
pub fn ramp(t: f64) -> [u8; 3] {
    const LOW: [f64; 3] = [59.0, 76.0, 192.0];
    const MID: [f64; 3] = [247.0, 247.0, 247.0];
    const HIGH: [f64; 3] = [180.0, 4.0, 38.0];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.5 };
    let (a, b, s) = if t < 0.5 { (LOW, MID, 2.0 * t) } else { (MID, HIGH, 2.0 * t - 1.0) };
    [0, 1, 2].map(|i| (a[i] + s * (b[i] - a[i])).round() as u8)
}

/// SVG 1.1 drawing of the nodal field: one filled polygon per triangle and a color bar.
pub fn render_svg(mesh: &Mesh, u: &FieldCoefficients, title: &str) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 40.0;
    let lo = u.nodal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.nodal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let px = |p: [f64; 2]| (MARGIN + p[0] * SIZE, MARGIN + (1.0 - p[1]) * SIZE);
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = SIZE + 2.0 * MARGIN + 80.0,
        h = SIZE + 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="14">{}</text>"#, MARGIN - 12.0, escape(title));
    for tri in mesh.triangles() {
        let mean = tri.iter().map(|&v| u.nodal[v]).sum::<f64>() / 3.0;
        let [r, g, b] = ramp((mean - lo) / span);
        let pts: Vec<String> = tri
            .iter()
            .map(|&v| {
                let (x, y) = px(mesh.vertices()[v]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r##"<polygon points="{}" fill="#{r:02x}{g:02x}{b:02x}" stroke="#555555" stroke-width="0.3"/>"##,
            pts.join(" ")
        );
    }
    let bar_x = MARGIN + SIZE + 20.0;
    let steps = 32;
    let step_h = SIZE / steps as f64;
    for i in 0..steps {
        let t = 1.0 - (i as f64 + 0.5) / steps as f64;
        let [r, g, b] = ramp(t);
        let _ = writeln!(
            s,
            r##"<rect x="{bar_x}" y="{:.2}" width="16" height="{:.2}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
            MARGIN + i as f64 * step_h,
            step_h + 0.5
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{hi:.3e}</text>"#, bar_x, MARGIN - 4.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{lo:.3e}</text>"#, bar_x, MARGIN + SIZE + 14.0);
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

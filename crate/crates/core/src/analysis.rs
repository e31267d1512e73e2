//! Error norms, convergence tables and the two manufactured benchmarks.
//!
//! Errors are measured against the exact solution with a degree-8 rule:
//!
//! ```text
//! |||v|||²   = ε |v|₁² + γ ‖v‖₀²
//! |||v|||_*² = |||v|||² + Σ_T ξ_T ‖∇u_hb‖²_{0,T}
//! ```

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{ExactSolution, Gamma, ProblemSpec, ScalarField, VelocityField};
use crate::dd::{self, fixed_point_solve, FixedPointConfig, SolveReport};
use crate::mesh::{Diagonal, Mesh};
use crate::spaces::{evaluate_local, quadrature_rule, FieldCoefficients, LocalBasis};
use crate::{Error, Point, Result};

/// Default exactness degree of the error quadrature.
pub const ERROR_DEGREE: usize = 8;

/// Benchmark refinement levels.
pub const DEFAULT_LEVELS: [usize; 6] = [2, 4, 8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub l2: f64,
    pub h1_semi: f64,
    pub energy: f64,
    pub star: f64,
    pub dissipation: f64,
}

/// Errors of `u` against the exact solution of `problem`, with the degree-8 rule.
pub fn compute_errors(problem: &ProblemSpec, mesh: &Mesh, u: &FieldCoefficients, xi: &[f64]) -> Result<ErrorReport> {
    compute_errors_with_degree(problem, mesh, u, xi, ERROR_DEGREE)
}

pub fn compute_errors_with_degree(
    problem: &ProblemSpec,
    mesh: &Mesh,
    u: &FieldCoefficients,
    xi: &[f64],
    degree: usize,
) -> Result<ErrorReport> {
    let exact = problem.exact.as_ref().ok_or(Error::MissingExactSolution)?;
    if xi.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_elements(),
            got: xi.len(),
        });
    }
    let rule = quadrature_rule(degree)?;
    let mut l2_sq = 0.0;
    let mut h1_sq = 0.0;
    for (t, geometry) in mesh.geometries()?.iter().enumerate() {
        let coeffs = u.local(mesh, t);
        let mut local_l2 = 0.0;
        let mut local_h1 = 0.0;
        for (b, w) in rule.iter() {
            let p = geometry.point(*b);
            let (value, grad) = evaluate_local(&coeffs, &LocalBasis::at(geometry, *b));
            let g = (exact.gradient)(p);
            let e = (exact.value)(p) - value;
            local_l2 += w * e * e;
            local_h1 += w * ((g[0] - grad[0]).powi(2) + (g[1] - grad[1]).powi(2));
        }
        l2_sq += geometry.area * local_l2;
        h1_sq += geometry.area * local_h1;
    }
    let gamma = problem.gamma_value(mesh, &rule)?;
    let energy_sq = problem.epsilon * h1_sq + gamma * l2_sq;
    let dissipation = dd::dissipation(xi, mesh, u, &rule)?;
    Ok(ErrorReport {
        l2: l2_sq.sqrt(),
        h1_semi: h1_sq.sqrt(),
        energy: energy_sq.sqrt(),
        star: (energy_sq + dissipation).sqrt(),
        dissipation,
    })
}

/// Observed order between two levels: `log(e_c/e_f) / log(n_f/n_c)`, which is
/// `log2(e_c/e_f)` for a halving of h. `None` when either error is zero.
pub fn rate(coarse: f64, fine: f64, n_coarse: usize, n_fine: usize) -> Option<f64> {
    if coarse > 0.0 && fine > 0.0 && coarse.is_finite() && fine.is_finite() && n_fine > n_coarse {
        Some((coarse / fine).ln() / (n_fine as f64 / n_coarse as f64).ln())
    } else {
        None
    }
}

/// Rates of an error column over successive halvings; the first entry is blank.
pub fn rate_column(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len().min(1)];
    out.extend(errors.windows(2).map(|w| rate(w[0], w[1], 1, 2)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub h: f64,
    pub err_l2: f64,
    pub rate_l2: Option<f64>,
    pub err_h1: f64,
    pub rate_h1: Option<f64>,
    pub err_star: f64,
    pub rate_star: Option<f64>,
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    /// Free-text remarks appended to the Markdown rendering.
    pub notes: Vec<String>,
}

impl RateTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for row in &self.rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let rows = reader.deserialize().collect::<std::result::Result<Vec<RateRow>, _>>()?;
        Ok(Self { rows, notes: Vec::new() })
    }

    /// Aligned Markdown table in the usual mesh / error / rate layout.
    pub fn to_markdown(&self) -> String {
        let header = [
            "mesh", "‖u−u_hb‖₀", "rate", "|u−u_hb|₁", "rate", "|||u−u_hb|||_*", "rate", "iters", "converged",
        ];
        let body: Vec<[String; 9]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    format!("{0}×{0}", r.n),
                    format_error(r.err_l2),
                    format_rate(r.rate_l2),
                    format_error(r.err_h1),
                    format_rate(r.rate_h1),
                    format_error(r.err_star),
                    format_rate(r.rate_star),
                    r.iters.to_string(),
                    if r.converged { "yes".into() } else { "no".into() },
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &mut dyn Iterator<Item = &str>| {
            let mut s = String::from("|");
            for (cell, w) in cells.zip(widths) {
                let pad = w - cell.chars().count();
                let _ = write!(s, " {cell}{} |", " ".repeat(pad));
            }
            s.push('\n');
            s
        };
        let mut out = line(&mut header.iter().copied());
        out.push('|');
        for w in widths {
            let _ = write!(out, "{}|", "-".repeat(w + 2));
        }
        out.push('\n');
        for row in &body {
            out.push_str(&line(&mut row.iter().map(String::as_str)));
        }
        for note in &self.notes {
            let _ = write!(out, "\n> {note}\n");
        }
        out
    }
}

fn format_error(e: f64) -> String {
    if e >= 1e-3 {
        format!("{e:.4}")
    } else {
        format!("{e:.2e}")
    }
}

fn format_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "--".into(), |r| format!("{r:.4}"))
}

/// Builds the rate table from per-level results (sorted by n).
pub fn convergence_rates(levels: &[LevelResult]) -> RateTable {
    let mut rows: Vec<RateRow> = Vec::with_capacity(levels.len());
    for (i, level) in levels.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &levels[j]);
        let r = |f: fn(&ErrorReport) -> f64| prev.and_then(|p| rate(f(&p.errors), f(&level.errors), p.n, level.n));
        rows.push(RateRow {
            n: level.n,
            h: 1.0 / level.n as f64,
            err_l2: level.errors.l2,
            rate_l2: r(|e| e.l2),
            err_h1: level.errors.h1_semi,
            rate_h1: r(|e| e.h1_semi),
            err_star: level.errors.star,
            rate_star: r(|e| e.star),
            iters: level.report.iterations,
            converged: level.report.converged,
        });
    }
    RateTable { rows, notes: Vec::new() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CaseKind {
    Smooth,
    BoundaryLayer,
}

/// A manufactured-solution benchmark on the unit square with homogeneous
/// Dirichlet data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkCase {
    pub name: &'static str,
    pub description: &'static str,
    pub beta: Point,
    kind: CaseKind,
}

impl BenchmarkCase {
    pub fn exact(&self, epsilon: f64) -> ExactSolution {
        match self.kind {
            CaseKind::Smooth => ExactSolution {
                value: Arc::new(|p: Point| 100.0 * smooth_x(p[0]).0 * smooth_y(p[1]).0),
                gradient: Arc::new(|p: Point| {
                    let (x, dx, _) = smooth_x(p[0]);
                    let (y, dy, _) = smooth_y(p[1]);
                    [100.0 * dx * y, 100.0 * x * dy]
                }),
            },
            CaseKind::BoundaryLayer => ExactSolution {
                value: Arc::new(move |p: Point| layer(p[0], epsilon).0 * layer(p[1], epsilon).0),
                gradient: Arc::new(move |p: Point| {
                    let (x, dx) = layer(p[0], epsilon);
                    let (y, dy) = layer(p[1], epsilon);
                    [dx * y, x * dy]
                }),
            },
        }
    }

    /// `f = −εΔu + β·∇u + σu` for the exact solution.
    pub fn source(&self, epsilon: f64, sigma: f64) -> ScalarField {
        match self.kind {
            CaseKind::Smooth => {
                let [b1, b2] = self.beta;
                ScalarField::function(move |p: Point| {
                    let (x, dx, ddx) = smooth_x(p[0]);
                    let (y, dy, ddy) = smooth_y(p[1]);
                    100.0 * (-epsilon * (ddx * y + x * ddy) + b1 * dx * y + b2 * x * dy + sigma * x * y)
                })
            }
            // −εX'' + X' = 1 for each factor, and β = (1, 1).
            CaseKind::BoundaryLayer => ScalarField::function(move |p: Point| {
                let x = layer(p[0], epsilon).0;
                let y = layer(p[1], epsilon).0;
                x + y + sigma * x * y
            }),
        }
    }

    /// The benchmark problem with γ = σ.
    pub fn problem(&self, epsilon: f64, sigma: f64) -> Result<ProblemSpec> {
        Ok(ProblemSpec::new(
            epsilon,
            VelocityField::Constant(self.beta),
            ScalarField::Constant(sigma),
            self.source(epsilon, sigma),
        )?
        .with_gamma(Gamma::Fixed(sigma))
        .with_exact(self.exact(epsilon)))
    }

    /// Whether the solution has layers too thin for a fixed error rule on coarse meshes.
    pub fn layer_under_resolved(&self, epsilon: f64) -> bool {
        self.kind == CaseKind::BoundaryLayer && epsilon <= 1e-3
    }
}

/// `x²(1−x)²` with first and second derivatives.
fn smooth_x(x: f64) -> (f64, f64, f64) {
    (
        x * x * (1.0 - x) * (1.0 - x),
        2.0 * x - 6.0 * x * x + 4.0 * x * x * x,
        2.0 - 12.0 * x + 12.0 * x * x,
    )
}

/// `y(1−y)(1−2y)` with first and second derivatives.
fn smooth_y(y: f64) -> (f64, f64, f64) {
    (
        y - 3.0 * y * y + 2.0 * y * y * y,
        1.0 - 6.0 * y + 6.0 * y * y,
        -6.0 + 12.0 * y,
    )
}

/// `(e^{(x−1)/ε} − 1)/(e^{−1/ε} − 1) + x − 1` and its derivative.
fn layer(x: f64, epsilon: f64) -> (f64, f64) {
    let denom = (-1.0 / epsilon).exp_m1();
    (
        ((x - 1.0) / epsilon).exp_m1() / denom + x - 1.0,
        ((x - 1.0) / epsilon).exp() / (epsilon * denom) + 1.0,
    )
}

pub fn builtin_cases() -> Vec<BenchmarkCase> {
    vec![
        BenchmarkCase {
            name: "example1",
            description: "u = 100 x²(1−x)² y(1−y)(1−2y), β = (3,2); no layers",
            beta: [3.0, 2.0],
            kind: CaseKind::Smooth,
        },
        BenchmarkCase {
            name: "example2",
            description: "product of exponential layers at x = 1 and y = 1, β = (1,1)",
            beta: [1.0, 1.0],
            kind: CaseKind::BoundaryLayer,
        },
    ]
}

pub fn find_case(name: &str) -> Result<BenchmarkCase> {
    builtin_cases()
        .into_iter()
        .find(|c| c.name == name)
        .ok_or_else(|| Error::UnknownCase(name.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub fixed_point: FixedPointConfig,
    pub diagonal: Diagonal,
    pub error_degree: usize,
    /// Run levels on separate threads. Results do not depend on this.
    pub parallel: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            fixed_point: FixedPointConfig::default(),
            diagonal: Diagonal::default(),
            error_degree: ERROR_DEGREE,
            parallel: false,
        }
    }
}

/// Outcome of one refinement level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub n: usize,
    pub errors: ErrorReport,
    pub report: SolveReport,
    pub solution: FieldCoefficients,
    pub xi: Vec<f64>,
}

impl LevelResult {
    pub fn nodal_min(&self) -> f64 {
        self.solution.nodal.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn nodal_max(&self) -> f64 {
        self.solution.nodal.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Solves one level and measures its errors.
pub fn run_level(case: &BenchmarkCase, epsilon: f64, sigma: f64, n: usize, config: &StudyConfig) -> Result<LevelResult> {
    let problem = case.problem(epsilon, sigma)?;
    let mesh = Mesh::unit_square(n, config.diagonal)?;
    let sol = fixed_point_solve(&problem, &mesh, &config.fixed_point)?;
    let errors = compute_errors_with_degree(&problem, &mesh, &sol.u, &sol.coefficients.xi, config.error_degree)?;
    Ok(LevelResult {
        n,
        errors,
        report: sol.report,
        solution: sol.u,
        xi: sol.coefficients.xi,
    })
}

/// Runs every level, keeping failures alongside successes (in level order).
pub fn run_levels(
    case: &BenchmarkCase,
    epsilon: f64,
    sigma: f64,
    levels: &[usize],
    config: &StudyConfig,
) -> Result<Vec<Result<LevelResult>>> {
    validate_levels(levels)?;
    let annotate = |n: usize, r: Result<LevelResult>| {
        r.map_err(|e| Error::Level {
            level: n,
            source: Box::new(e),
        })
    };
    if config.parallel {
        Ok(std::thread::scope(|s| {
            let handles: Vec<_> = levels
                .iter()
                .map(|&n| s.spawn(move || run_level(case, epsilon, sigma, n, config)))
                .collect();
            handles
                .into_iter()
                .zip(levels)
                .map(|(h, &n)| annotate(n, h.join().expect("level thread panicked")))
                .collect()
        }))
    } else {
        Ok(levels
            .iter()
            .map(|&n| annotate(n, run_level(case, epsilon, sigma, n, config)))
            .collect())
    }
}

/// Full refinement study; the first failing level aborts it.
pub fn run_study(case: &BenchmarkCase, epsilon: f64, sigma: f64, levels: &[usize], config: &StudyConfig) -> Result<RateTable> {
    let results = run_levels(case, epsilon, sigma, levels, config)?
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut table = convergence_rates(&results);
    table.notes = study_notes(case, epsilon);
    Ok(table)
}

/// Remarks attached to a study's Markdown output.
pub fn study_notes(case: &BenchmarkCase, epsilon: f64) -> Vec<String> {
    let mut notes = vec![format!("{}: {}, ε = {epsilon:e}", case.name, case.description)];
    if case.layer_under_resolved(epsilon) {
        notes.push(format!(
            "layers of width O(ε) are not resolved by the degree-{ERROR_DEGREE} error rule on coarse meshes; errors are quadrature-limited"
        ));
    }
    notes
}

fn validate_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidProblem("no refinement levels given".into()));
    }
    if let Some(&0) = levels.first() {
        return Err(Error::InvalidSubdivision(0));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidProblem(format!("levels must be strictly increasing, got {levels:?}")));
    }
    Ok(())
}

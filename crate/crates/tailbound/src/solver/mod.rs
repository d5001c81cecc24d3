//! Worst-case tail probability over OU distributions: the moment-problem
//! solver.
//!
//! For a fixed tail mass `c`, the worst case over OU tail distributions
//! meeting the calibrated constraints is attained by a discrete mixture of
//! uniform distributions on staircase sets. Each staircase contributes a
//! column of constraint coefficients (all ratios against its area), and
//! the mixture weights solve a small LP:
//!
//! ```text
//! max  c * sum_l p_l * area(S ∩ R_l)/area(R_l)
//! s.t. sum p_l = 1
//!      sum p_l * R_l^Y/area(R_l) <= uX / c
//!      sum p_l * R_l^X/area(R_l) <= uY / c
//!      a_i <= sum p_l * area(rect_i ∩ R_l)/area(R_l) <= b_i
//! ```
//!
//! Columns are generated on demand: the master LP produces duals, and a
//! multistart derivative-free search looks for a staircase of positive
//! reduced cost. The sweep over `c` in `[lF, uF]` happens in [`solve`].
//!
//! Because every two-sided row occupies a single basis slot, the final
//! basis carries at most `n + 3` staircase atoms, which matches the
//! support bound for the discrete optimizer of the moment problem.

pub(crate) mod engine;
mod pricing;

pub use engine::master_lp_solve;
pub use engine::{MasterDuals, MasterOutcome, MasterSpec};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::ConstraintSet;
use crate::geometry::{AxisRectangle, GeometryError, RareEventBoundary, StaircaseAtom};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    BadProblem(String),
    #[error("degenerate atom: area {0} below floor")]
    DegenerateAtom(f64),
    #[error("atom has {got} steps, problem allows {max}")]
    TooManySteps { got: usize, max: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// One moment row after resolving the conditional flag: bounds apply to
/// the probability ratio `P(rect) / F(x0, y0)`.
#[derive(Debug, Clone)]
pub struct ResolvedRow {
    pub rect: AxisRectangle,
    pub a: f64,
    pub b: f64,
}

/// The finite-dimensional moment problem at a fixed tail mass.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    pub c: f64,
    /// Step budget for mixture atoms, `3(4n - n' + 1)` where `n'` counts
    /// trivial rectangle corners.
    pub k: usize,
    pub x0: f64,
    pub y0: f64,
    pub u_x: f64,
    pub u_y: f64,
    pub boundary: RareEventBoundary,
    pub rows: Vec<ResolvedRow>,
    pub warnings: Vec<String>,
}

/// Constraint coefficients of one staircase column, all normalized by the
/// staircase area.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnEvaluation {
    /// `c * area(S ∩ R) / area(R)`.
    pub objective_coeff: f64,
    /// `R^Y / area(R)`, priced against the X-marginal cap.
    pub ux_coeff: f64,
    /// `R^X / area(R)`, priced against the Y-marginal cap.
    pub uy_coeff: f64,
    /// `area(rect_i ∩ R) / area(R)` per moment row.
    pub row_coeffs: Vec<f64>,
}

/// Probability weights over staircase atoms; the solver's decision object
/// and the recovered worst-case distribution.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscreteMixture {
    pub atoms: Vec<StaircaseAtom>,
    pub probs: Vec<f64>,
}

impl DiscreteMixture {
    pub fn empty() -> Self {
        Self {
            atoms: Vec::new(),
            probs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Search budget for one pricing round.
#[derive(Debug, Clone)]
pub struct PricingBudget {
    pub restarts: usize,
    pub max_iters: usize,
    /// Upper edge of the search box for widths and heights.
    pub box_bound: f64,
    /// Scale-free floor applied to widths and the first height increment.
    pub epsilon: f64,
    pub seed: u64,
    /// Distinguishes pricing rounds so restarts explore fresh directions.
    pub round: u64,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Reduced-cost stopping tolerance; defaults to `1e-7 * c`.
    pub tol_rc: Option<f64>,
    /// Column-generation iteration cap per fixed-c solve.
    pub max_iters: usize,
    pub pricing_restarts: usize,
    pub pricing_iters: usize,
    /// Pricing box; defaults to `1e3 * max(largest finite rect offset, 10)`.
    pub box_bound: Option<f64>,
    pub seed: u64,
    /// Number of grid points for the tail-mass sweep.
    pub c_grid: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_rc: None,
            max_iters: 200,
            pricing_restarts: 64,
            pricing_iters: 200,
            box_bound: None,
            seed: 0,
            c_grid: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    pub columns_generated: usize,
    pub pricing_restarts: usize,
    pub tol_rc: f64,
    pub box_bound: f64,
    pub warnings: Vec<String>,
    /// `(c, value)` per grid point; `null` value marks an infeasible point.
    pub per_c: Vec<(f64, Option<f64>)>,
}

/// Solver output: bound, optimizing mixture, per-constraint slacks and
/// run diagnostics. `verification` is appended by the audit pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub value: f64,
    pub best_c: f64,
    pub feasible: bool,
    pub mixture: DiscreteMixture,
    /// Signed satisfaction margins: nonnegative means inside the bound.
    pub slacks: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<serde_json::Value>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    fn infeasible(c: f64, diagnostics: Diagnostics) -> Self {
        Self {
            value: 0.0,
            best_c: c,
            feasible: false,
            mixture: DiscreteMixture::empty(),
            slacks: BTreeMap::new(),
            diagnostics,
            verification: None,
        }
    }
}

/// Assemble the moment problem for a fixed tail mass: unconditional rows
/// are rescaled by `1/c` (clipping into `[0, 1]` with a warning when the
/// rescale overshoots), and the step budget is computed from the count of
/// trivial rectangle corners.
pub fn build_problem(
    constraints: &ConstraintSet,
    boundary: &RareEventBoundary,
    c: f64,
) -> Result<MomentProblem, SolverError> {
    constraints
        .validate()
        .map_err(|e| SolverError::BadProblem(e.to_string()))?;
    let tol = 1e-12 * (1.0 + constraints.u_f);
    if !(c > 0.0) || c < constraints.l_f - tol || c > constraints.u_f + tol {
        return Err(SolverError::BadProblem(format!(
            "c = {c} outside the tail-mass interval [{}, {}]",
            constraints.l_f, constraints.u_f
        )));
    }
    if (boundary.x0() - constraints.x0).abs() > 1e-9 || (boundary.y0() - constraints.y0).abs() > 1e-9
    {
        return Err(SolverError::BadProblem(format!(
            "boundary mode ({}, {}) does not match constraint mode ({}, {})",
            boundary.x0(),
            boundary.y0(),
            constraints.x0,
            constraints.y0
        )));
    }
    let (x0, y0) = (constraints.x0, constraints.y0);
    let n = constraints.rows.len();
    let mut n_trivial = 0usize;
    let mut rows = Vec::with_capacity(n);
    let mut warnings = Vec::new();
    for (i, row) in constraints.rows.iter().enumerate() {
        let r = &row.rect;
        n_trivial += usize::from(r.x1 == x0)
            + usize::from(r.x2 == f64::INFINITY)
            + usize::from(r.y1 == y0)
            + usize::from(r.y2 == f64::INFINITY);
        let (mut a, mut b) = if row.conditional {
            (row.a, row.b)
        } else {
            (row.a / c, row.b / c)
        };
        if a > 1.0 {
            warnings.push(format!(
                "row {i}: lower bound {a:.6} exceeds 1 after rescaling by c; clipped (likely infeasible)"
            ));
            a = 1.0;
        }
        if b > 1.0 {
            b = 1.0;
        }
        rows.push(ResolvedRow {
            rect: r.clone(),
            a,
            b: b.max(a),
        });
    }
    let k = 3 * (4 * n - n_trivial + 1);
    Ok(MomentProblem {
        c,
        k,
        x0,
        y0,
        u_x: constraints.u_x,
        u_y: constraints.u_y,
        boundary: boundary.clone(),
        rows,
        warnings,
    })
}

impl MomentProblem {
    /// Default edge of the pricing box.
    pub fn default_box_bound(&self) -> f64 {
        let mut largest: f64 = 0.0;
        for row in &self.rows {
            for v in [
                row.rect.x1 - self.x0,
                row.rect.x2 - self.x0,
                row.rect.y1 - self.y0,
                row.rect.y2 - self.y0,
            ] {
                if v.is_finite() {
                    largest = largest.max(v);
                }
            }
        }
        1e3 * largest.max(10.0)
    }

    pub(crate) fn master_spec(&self) -> MasterSpec {
        MasterSpec {
            cap_x: self.u_x.is_finite().then_some(self.u_x / self.c),
            cap_y: self.u_y.is_finite().then_some(self.u_y / self.c),
            rows: self.rows.iter().map(|r| (r.a, r.b)).collect(),
        }
    }
}

/// Constraint coefficients of a staircase atom against the problem.
pub fn evaluate_column(
    problem: &MomentProblem,
    atom: &StaircaseAtom,
) -> Result<ColumnEvaluation, SolverError> {
    if atom.steps() > problem.k {
        return Err(SolverError::TooManySteps {
            got: atom.steps(),
            max: problem.k,
        });
    }
    let area = atom.area();
    if !(area > 1e-12) {
        return Err(SolverError::DegenerateAtom(area));
    }
    let (rx, ry) = atom.intercepts();
    let objective_coeff = problem.c * atom.rare_event_overlap_area(&problem.boundary) / area;
    let row_coeffs = problem
        .rows
        .iter()
        .map(|r| atom.rect_overlap_area(&r.rect) / area)
        .collect();
    Ok(ColumnEvaluation {
        objective_coeff,
        ux_coeff: ry / area,
        uy_coeff: rx / area,
        row_coeffs,
    })
}

/// Column generation at fixed `c`: seed with structured rectangles, then
/// alternate master solves and reduced-cost pricing until no column beats
/// the tolerance. The final support is re-solved restricted to the basic
/// columns, which also enforces the `n + 3` support bound.
pub fn solve_fixed_c(problem: &MomentProblem, opts: &SolverOptions) -> SolveReport {
    solve_fixed_c_seeded(problem, opts, Vec::new())
}

/// As [`solve_fixed_c`], with extra atoms injected into the seed pool
/// (used by warm starts and invariance tests).
pub fn solve_fixed_c_seeded(
    problem: &MomentProblem,
    opts: &SolverOptions,
    extra_seeds: Vec<StaircaseAtom>,
) -> SolveReport {
    let tol_rc = opts.tol_rc.unwrap_or(1e-7 * problem.c);
    let box_bound = opts.box_bound.unwrap_or_else(|| problem.default_box_bound());
    let budget = PricingBudget {
        restarts: opts.pricing_restarts,
        max_iters: opts.pricing_iters,
        box_bound,
        epsilon: 1e-9 * box_bound.max(1.0),
        seed: opts.seed,
        round: 0,
    };
    let mut seeds = seed_atoms(problem, box_bound);
    seeds.extend(extra_seeds);
    let space = pricing::StaircaseSpace { problem };
    let outcome = engine::run_column_generation(
        &space,
        &problem.master_spec(),
        seeds,
        budget,
        tol_rc,
        opts.max_iters,
    );

    let mut diagnostics = Diagnostics {
        iterations: outcome.iterations,
        columns_generated: outcome.columns_generated,
        pricing_restarts: outcome.pricing_restarts,
        tol_rc,
        box_bound,
        warnings: problem.warnings.clone(),
        per_c: Vec::new(),
    };

    let Some((atoms, probs)) = outcome.support else {
        diagnostics
            .warnings
            .push(format!("infeasible: phase-1 residual {:.3e}", outcome.residual));
        return SolveReport::infeasible(problem.c, diagnostics);
    };

    let total: f64 = probs.iter().sum();
    let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
    let mixture = DiscreteMixture { atoms, probs };
    let (value, slacks) = audit_mixture(problem, &mixture);
    SolveReport {
        value,
        best_c: problem.c,
        feasible: true,
        mixture,
        slacks,
        diagnostics,
        verification: None,
    }
}

/// Exact objective and signed constraint slacks of a mixture, recomputed
/// from closed-form geometry rather than LP numbers.
pub fn audit_mixture(
    problem: &MomentProblem,
    mixture: &DiscreteMixture,
) -> (f64, BTreeMap<String, f64>) {
    let mut value = 0.0;
    let mut ux = 0.0;
    let mut uy = 0.0;
    let mut rows = vec![0.0; problem.rows.len()];
    let mut mass = 0.0;
    for (atom, &p) in mixture.atoms.iter().zip(&mixture.probs) {
        let area = atom.area();
        let (rx, ry) = atom.intercepts();
        value += p * problem.c * atom.rare_event_overlap_area(&problem.boundary) / area;
        ux += p * ry / area;
        uy += p * rx / area;
        for (acc, row) in rows.iter_mut().zip(&problem.rows) {
            *acc += p * atom.rect_overlap_area(&row.rect) / area;
        }
        mass += p;
    }
    let mut slacks = BTreeMap::new();
    slacks.insert("normalization".into(), -(mass - 1.0).abs());
    if problem.u_x.is_finite() {
        slacks.insert("uX".into(), problem.u_x / problem.c - ux);
    }
    if problem.u_y.is_finite() {
        slacks.insert("uY".into(), problem.u_y / problem.c - uy);
    }
    for (i, (v, row)) in rows.iter().zip(&problem.rows).enumerate() {
        slacks.insert(format!("row_{i}"), (v - row.a).min(row.b - v));
    }
    (value, slacks)
}

fn seed_atoms(problem: &MomentProblem, box_bound: f64) -> Vec<StaircaseAtom> {
    let (x0, y0) = (problem.x0, problem.y0);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for row in &problem.rows {
        for v in [row.rect.x1 - x0, row.rect.x2 - x0] {
            if v.is_finite() && v > 0.0 {
                xs.push(v);
            }
        }
        for v in [row.rect.y1 - y0, row.rect.y2 - y0] {
            if v.is_finite() && v > 0.0 {
                ys.push(v);
            }
        }
    }
    for piece in problem.boundary.pieces() {
        let v = piece.x_start - x0;
        if v > 0.0 && v.is_finite() {
            xs.push(v);
        }
        let g0 = problem.boundary.value(piece.x_start.max(x0)) - y0;
        if g0.is_finite() && g0 > 0.0 {
            ys.push(g0);
        }
    }
    xs.push(box_bound);
    ys.push(box_bound);
    if xs.len() == 1 {
        xs.push(1.0);
    }
    if ys.len() == 1 {
        ys.push(1.0);
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut seeds = Vec::with_capacity(xs.len() * ys.len());
    for &w in &xs {
        for &h in &ys {
            if let Ok(a) = StaircaseAtom::rectangle(x0, y0, w, h) {
                seeds.push(a);
            }
        }
    }
    seeds
}

/// Multistart pricing against master duals; see the module docs. Exposed
/// with the engine's semantics: returns the best atom found and its
/// reduced cost, even when nonpositive.
pub fn price_column(
    problem: &MomentProblem,
    duals: &MasterDuals,
    budget: &PricingBudget,
) -> (StaircaseAtom, f64) {
    let space = pricing::StaircaseSpace { problem };
    engine::price_with_space(&space, duals, budget, false)
}

/// Sweep the tail mass over a grid in `[lF, uF]` (three points by
/// default) and keep the best report; equal values resolve to the
/// smallest `c`.
pub fn solve(
    constraints: &ConstraintSet,
    boundary: &RareEventBoundary,
    opts: &SolverOptions,
) -> Result<SolveReport, SolverError> {
    let grid = c_grid(constraints, opts.c_grid);
    if grid.is_empty() {
        return Err(SolverError::BadProblem(
            "tail-mass interval contains no positive grid point".into(),
        ));
    }
    let mut best: Option<SolveReport> = None;
    let mut per_c: Vec<(f64, Option<f64>)> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    for &c in &grid {
        let problem = build_problem(constraints, boundary, c)?;
        let report = solve_fixed_c(&problem, opts);
        if report.feasible {
            per_c.push((c, Some(report.value)));
            let better = best
                .as_ref()
                .map_or(true, |b| !b.feasible || report.value > b.value);
            if better {
                best = Some(report);
            }
        } else {
            per_c.push((c, None));
            warnings.extend(report.diagnostics.warnings.clone());
            if best.is_none() {
                best = Some(report);
            }
        }
    }
    let mut report = best.expect("grid nonempty");
    report.diagnostics.per_c = per_c;
    for w in warnings {
        if !report.diagnostics.warnings.contains(&w) {
            report.diagnostics.warnings.push(w);
        }
    }
    Ok(report)
}

fn c_grid(constraints: &ConstraintSet, points: usize) -> Vec<f64> {
    let (lo, hi) = (constraints.l_f, constraints.u_f);
    let points = points.max(1);
    let mut grid: Vec<f64> = if lo >= hi {
        vec![lo]
    } else if points == 1 {
        vec![0.5 * (lo + hi)]
    } else {
        (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect()
    };
    grid.retain(|&c| c > 0.0);
    grid
}

/// The recovered worst-case density: a mixture of uniform densities on
/// staircase sets, scaled to total mass `c`.
#[derive(Debug, Clone)]
pub struct MixtureDensity {
    pub c: f64,
    pub mixture: DiscreteMixture,
}

impl MixtureDensity {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut f = 0.0;
        for (atom, &p) in self.mixture.atoms.iter().zip(&self.mixture.probs) {
            if x >= atom.x0() && x <= atom.x_end() && y >= atom.y0() {
                if let Ok(h) = atom.height(x) {
                    if y <= h {
                        f += p / atom.area();
                    }
                }
            }
        }
        self.c * f
    }

    /// Exact integral over an axis rectangle.
    pub fn rect_integral(&self, rect: &AxisRectangle) -> f64 {
        self.c
            * self
                .mixture
                .atoms
                .iter()
                .zip(&self.mixture.probs)
                .map(|(a, &p)| p * a.rect_overlap_area(rect) / a.area())
                .sum::<f64>()
    }

    pub fn total_mass(&self) -> f64 {
        self.c * self.mixture.probs.iter().sum::<f64>()
    }

    pub fn mode(&self) -> (f64, f64) {
        self.mixture
            .atoms
            .first()
            .map(|a| (a.x0(), a.y0()))
            .unwrap_or((0.0, 0.0))
    }
}

/// Worst-case density from a feasible report.
pub fn recover_density(report: &SolveReport) -> MixtureDensity {
    MixtureDensity {
        c: report.best_c,
        mixture: report.mixture.clone(),
    }
}

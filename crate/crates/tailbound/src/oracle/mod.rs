//! Independent verification of solver output.
//!
//! Three mutually independent routes:
//!
//! - [`grid_lp_bound`]: a lower bound on the true optimum from the LP
//!   over cell-constant monotone densities on a truncated box. Any such
//!   density is a feasible OU density, so the LP value can never exceed
//!   the solver's target optimum. The LP is solved exactly by
//!   Dantzig-Wolfe decomposition: cell-constant monotone densities are
//!   nonnegative combinations of grid-staircase indicators, the master
//!   reuses the same simplex as the mixture solver, and pricing is an
//!   exact O(N^2) dynamic program over grid staircases — no local search
//!   anywhere.
//! - [`mc_probability`]: Monte Carlo re-estimation on the recovered
//!   mixture. Points are drawn uniformly from a staircase by picking a
//!   step with probability proportional to its *area* (width-weighting
//!   would skew the draw) and then uniformly within that step.
//! - [`verify_report`]: closed-form recomputation of the objective and
//!   every constraint from the mixture, an OU monotonicity sweep, and the
//!   Monte Carlo cross-check.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::ConstraintSet;
use crate::geometry::{AxisRectangle, RareEventBoundary, StaircaseAtom};
use crate::simplex::{LinearProgram, LpOutcome, RowRange};
use crate::solver::{audit_mixture, build_problem, recover_density, MixtureDensity, SolveReport, SolverError};
use crate::substream;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("grid LP infeasible: residual {residual}")]
    Infeasible { residual: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Truncated box for the grid oracle: `[x0, x0+extent] x [y0, y0+extent]`
/// with `cells_per_axis` cells each way.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub box_extent: f64,
    pub cells_per_axis: usize,
}

impl GridSpec {
    pub fn new(box_extent: f64, cells_per_axis: usize) -> Result<Self, OracleError> {
        if !(box_extent > 0.0) || cells_per_axis < 4 {
            return Err(OracleError::BadGrid(format!(
                "need extent > 0 and at least 4 cells, got {box_extent} / {cells_per_axis}"
            )));
        }
        Ok(Self {
            box_extent,
            cells_per_axis,
        })
    }
}

/// Audit outcome; appended to report JSON under `verification`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationResult {
    pub feasible: bool,
    pub objective_recomputed: f64,
    /// |recomputed - reported| within 1e-9.
    pub value_consistent: bool,
    /// Signed slacks recomputed from closed forms (>= 0 means satisfied).
    pub residuals: BTreeMap<String, f64>,
    pub max_violation: f64,
    pub normalization_residual: f64,
    pub ou_check: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_consistent: Option<bool>,
    /// Share of mixture mass outside the oracle box, reported so grid
    /// gaps can be attributed to truncation instead of guessing an
    /// extent.
    pub boundary_mass: f64,
}

/// Lower bound on the OU-DRO optimum at fixed tail mass `c` from
/// cell-constant monotone densities on the truncated box.
pub fn grid_lp_bound(
    constraints: &ConstraintSet,
    boundary: &RareEventBoundary,
    c: f64,
    grid: &GridSpec,
) -> Result<f64, OracleError> {
    let problem = build_problem(constraints, boundary, c)?;
    let n = grid.cells_per_axis;
    let delta = grid.box_extent / n as f64;
    let (x0, y0) = (problem.x0, problem.y0);
    let n_rows = problem.rows.len();

    // Per-cell tables via the exact geometry closed forms: a cell is a
    // rectangle atom anchored at its own corner.
    let mut cell_obj = vec![0.0; n * n];
    let mut cell_rect = vec![vec![0.0; n * n]; n_rows];
    for j in 0..n {
        let yj = y0 + j as f64 * delta;
        let row_boundary = RareEventBoundary::new(x0, yj, boundary.pieces().to_vec())
            .expect("pieces already validated");
        for i in 0..n {
            let xi = x0 + i as f64 * delta;
            let cell = StaircaseAtom::rectangle(xi, yj, delta, delta).expect("cell atom");
            cell_obj[i * n + j] = cell.rare_event_overlap_area(&row_boundary);
            for (k, row) in problem.rows.iter().enumerate() {
                cell_rect[k][i * n + j] = cell.rect_overlap_area(&row.rect);
            }
        }
    }

    // Master rows: total mass pinned at c, marginal density caps at the
    // mode, then the moment rows scaled back to probabilities.
    let mut rows = vec![RowRange::equal(c)];
    let mut layout = vec![GridRow::Mass];
    if problem.u_x.is_finite() {
        rows.push(RowRange::at_most(problem.u_x));
        layout.push(GridRow::CapX);
    }
    if problem.u_y.is_finite() {
        rows.push(RowRange::at_most(problem.u_y));
        layout.push(GridRow::CapY);
    }
    for (k, row) in problem.rows.iter().enumerate() {
        rows.push(RowRange::between(row.a * c, row.b * c));
        layout.push(GridRow::Moment(k));
    }

    let column_of = |heights: &[usize]| -> (f64, Vec<f64>) {
        let mut obj = 0.0;
        let mut coeffs = vec![0.0; layout.len()];
        for (i, &t) in heights.iter().enumerate() {
            for j in 0..t {
                obj += cell_obj[i * n + j];
                for (pos, kind) in layout.iter().enumerate() {
                    coeffs[pos] += match kind {
                        GridRow::Mass => delta * delta,
                        GridRow::CapX => {
                            if i == 0 {
                                delta
                            } else {
                                0.0
                            }
                        }
                        GridRow::CapY => {
                            if j == 0 {
                                delta
                            } else {
                                0.0
                            }
                        }
                        GridRow::Moment(k) => cell_rect[*k][i * n + j],
                    };
                }
            }
        }
        (obj, coeffs)
    };

    // Exact pricing: max over non-increasing height profiles of the
    // reduced cell weights, by a suffix-max dynamic program.
    let price = |duals: &[f64], with_objective: bool| -> (Vec<usize>, f64) {
        let mut weight = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut w = if with_objective { cell_obj[i * n + j] } else { 0.0 };
                for (pos, kind) in layout.iter().enumerate() {
                    let coeff = match kind {
                        GridRow::Mass => delta * delta,
                        GridRow::CapX => {
                            if i == 0 {
                                delta
                            } else {
                                0.0
                            }
                        }
                        GridRow::CapY => {
                            if j == 0 {
                                delta
                            } else {
                                0.0
                            }
                        }
                        GridRow::Moment(k) => cell_rect[*k][i * n + j],
                    };
                    w -= duals[pos] * coeff;
                }
                weight[i * n + j] = w;
            }
        }
        // Column value prefix sums, then DP over non-increasing heights.
        let mut colval = vec![0.0; n * (n + 1)];
        for i in 0..n {
            let mut acc = 0.0;
            for t in 1..=n {
                acc += weight[i * n + (t - 1)];
                colval[i * (n + 1) + t] = acc;
            }
        }
        let mut best = vec![0.0; n * (n + 1)];
        let mut choice = vec![0usize; n * (n + 1)];
        for t in 0..=n {
            best[t] = colval[t];
        }
        for i in 1..n {
            // suffix max of best[i-1][t..]
            let mut suff = vec![(f64::NEG_INFINITY, 0usize); n + 2];
            for t in (0..=n).rev() {
                let prev = best[(i - 1) * (n + 1) + t];
                suff[t] = if prev > suff[t + 1].0 {
                    (prev, t)
                } else {
                    suff[t + 1]
                };
            }
            for t in 0..=n {
                best[i * (n + 1) + t] = colval[i * (n + 1) + t] + suff[t].0;
                choice[i * (n + 1) + t] = suff[t].1;
            }
        }
        let mut t_last = 0;
        let mut best_val = f64::NEG_INFINITY;
        for t in 0..=n {
            if best[(n - 1) * (n + 1) + t] > best_val {
                best_val = best[(n - 1) * (n + 1) + t];
                t_last = t;
            }
        }
        let mut heights = vec![0usize; n];
        heights[n - 1] = t_last;
        for i in (1..n).rev() {
            heights[i - 1] = choice[i * (n + 1) + heights[i]];
        }
        (heights, best_val)
    };

    // Seed staircases.
    let mut lp = LinearProgram::new(rows);
    let mut pool: Vec<Vec<usize>> = vec![
        vec![n; n],
        vec![n / 2; n],
        {
            let mut t = vec![0; n];
            t[0] = n;
            t
        },
        vec![1; n],
    ];
    pool.dedup();
    for heights in &pool {
        let (obj, coeffs) = column_of(heights);
        lp.add_column(obj, coeffs, f64::INFINITY);
    }

    let tol = 1e-12 * (1.0 + c);
    for _ in 0..2000 {
        match lp.solve() {
            LpOutcome::Optimal(sol) => {
                let (heights, rc) = price(&sol.duals, true);
                if rc <= tol || pool.contains(&heights) {
                    return Ok(sol.value);
                }
                let (obj, coeffs) = column_of(&heights);
                lp.add_column(obj, coeffs, f64::INFINITY);
                pool.push(heights);
            }
            LpOutcome::Infeasible { residual, duals } => {
                let (heights, rc) = price(&duals, false);
                if rc <= tol || pool.contains(&heights) {
                    return Err(OracleError::Infeasible { residual });
                }
                let (obj, coeffs) = column_of(&heights);
                lp.add_column(obj, coeffs, f64::INFINITY);
                pool.push(heights);
            }
            LpOutcome::Unbounded => {
                unreachable!("mass row bounds the grid LP")
            }
        }
    }
    match lp.solve() {
        LpOutcome::Optimal(sol) => Ok(sol.value),
        LpOutcome::Infeasible { residual, .. } => Err(OracleError::Infeasible { residual }),
        LpOutcome::Unbounded => unreachable!(),
    }
}

#[derive(Clone, Copy)]
enum GridRow {
    Mass,
    CapX,
    CapY,
    Moment(usize),
}

/// True iff `f` is non-increasing along both axes on the grid points.
pub fn check_ou_grid(
    f: impl Fn(f64, f64) -> f64,
    x0: f64,
    y0: f64,
    grid: &GridSpec,
) -> bool {
    let n = grid.cells_per_axis;
    let delta = grid.box_extent / n as f64;
    let at = |i: usize, j: usize| f(x0 + (i as f64 + 0.5) * delta, y0 + (j as f64 + 0.5) * delta);
    for i in 0..n {
        for j in 0..n {
            let v = at(i, j);
            let tol = 1e-12 * (1.0 + v.abs());
            if i + 1 < n && at(i + 1, j) > v + tol {
                return false;
            }
            if j + 1 < n && at(i, j + 1) > v + tol {
                return false;
            }
        }
    }
    true
}

/// OU check for a recovered mixture density.
pub fn check_ou_density(density: &MixtureDensity, grid: &GridSpec) -> bool {
    let (x0, y0) = density.mode();
    check_ou_grid(|x, y| density.eval(x, y), x0, y0, grid)
}

/// Region whose probability is estimated by Monte Carlo.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    Rect(&'a AxisRectangle),
    Tail(&'a RareEventBoundary),
}

impl Region<'_> {
    fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Region::Rect(r) => x >= r.x1 && x <= r.x2 && y >= r.y1 && y <= r.y2,
            Region::Tail(b) => b.contains(x, y),
        }
    }
}

/// Monte Carlo probability of a region under the normalized mixture.
/// Draws an atom by probability, a step by area share within the atom,
/// then a uniform point in the step rectangle; batches run concurrently
/// on per-batch substreams and merge by index, so a fixed seed gives an
/// identical estimate regardless of scheduling.
pub fn mc_probability(
    mixture: &crate::solver::DiscreteMixture,
    region: Region<'_>,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    assert!(draws >= 10_000, "need at least 1e4 draws, got {draws}");
    // Atom CDF and per-atom step-area CDFs.
    let mut atom_cdf = Vec::with_capacity(mixture.probs.len());
    let mut acc = 0.0;
    for &p in &mixture.probs {
        acc += p;
        atom_cdf.push(acc);
    }
    let step_tables: Vec<(Vec<f64>, &StaircaseAtom)> = mixture
        .atoms
        .iter()
        .map(|a| {
            let mut cdf = Vec::with_capacity(a.steps());
            let mut s = 0.0;
            let mut left = a.x0();
            for (idx, &right) in a.breakpoints().iter().enumerate() {
                s += (right - left) * (a.step_heights()[idx] - a.y0());
                cdf.push(s);
                left = right;
            }
            let total = *cdf.last().unwrap();
            for v in &mut cdf {
                *v /= total;
            }
            (cdf, a)
        })
        .collect();

    const BATCH: usize = 65_536;
    let batches = draws.div_ceil(BATCH);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, &[0x6d63, b as u64]);
            let count = BATCH.min(draws - b * BATCH);
            let mut h = 0u64;
            for _ in 0..count {
                let u: f64 = rng.gen();
                let idx = atom_cdf.partition_point(|&cdf| cdf < u).min(atom_cdf.len() - 1);
                let (cdf, atom) = &step_tables[idx];
                let v: f64 = rng.gen();
                let step = cdf.partition_point(|&cv| cv < v).min(cdf.len() - 1);
                let left = if step == 0 {
                    atom.x0()
                } else {
                    atom.breakpoints()[step - 1]
                };
                let right = atom.breakpoints()[step];
                let x = left + rng.gen::<f64>() * (right - left);
                let y = atom.y0() + rng.gen::<f64>() * (atom.step_heights()[step] - atom.y0());
                if region.contains(x, y) {
                    h += 1;
                }
            }
            h
        })
        .sum();
    let est = hits as f64 / draws as f64;
    let se = (est * (1.0 - est) / draws as f64).sqrt();
    (est, se)
}

/// Recompute every constraint and the objective from the mixture with
/// exact geometry, run the OU check, and cross-check the objective with
/// Monte Carlo (`mc_draws = 0` skips the Monte Carlo stage).
/// Discrepancies are reported, never thrown.
pub fn verify_report(
    report: &SolveReport,
    constraints: &ConstraintSet,
    boundary: &RareEventBoundary,
    mc_draws: usize,
    seed: u64,
) -> Result<VerificationResult, OracleError> {
    let problem = build_problem(constraints, boundary, report.best_c)?;
    let (value, residuals) = audit_mixture(&problem, &report.mixture);
    let normalization_residual = (report.mixture.probs.iter().sum::<f64>() - 1.0).abs();
    let max_violation = residuals
        .values()
        .map(|&s| (-s).max(0.0))
        .fold(0.0, f64::max);
    let value_consistent = (value - report.value).abs() <= 1e-9 * (1.0 + report.value.abs());

    let density = recover_density(report);
    let extent = report
        .mixture
        .atoms
        .iter()
        .map(|a| {
            let (rx, ry) = a.intercepts();
            rx.max(ry)
        })
        .fold(1.0, f64::max)
        .min(1e4);
    let grid = GridSpec::new(extent, 64).expect("static grid is valid");
    let ou_check = report.mixture.is_empty() || check_ou_density(&density, &grid);

    let (mc_estimate, mc_stderr, mc_consistent) = if mc_draws >= 10_000 && !report.mixture.is_empty()
    {
        let (est, se) = mc_probability(&report.mixture, Region::Tail(boundary), mc_draws, seed);
        // The mixture is normalized; scale back to tail mass.
        let scaled = est * report.best_c;
        let scaled_se = se * report.best_c;
        let consistent = (scaled - report.value).abs() <= 4.0 * scaled_se.max(1e-15);
        (Some(scaled), Some(scaled_se), Some(consistent))
    } else {
        (None, None, None)
    };

    let feasible = value_consistent
        && max_violation <= 1e-7
        && normalization_residual <= 1e-9
        && ou_check
        && mc_consistent.unwrap_or(true);
    // Mass share the grid oracle would truncate away at this extent.
    let boundary_mass = {
        let box_rect = AxisRectangle::new(
            problem.x0,
            problem.x0 + grid.box_extent,
            problem.y0,
            problem.y0 + grid.box_extent,
        )
        .expect("oracle box is a rectangle");
        report
            .mixture
            .atoms
            .iter()
            .zip(&report.mixture.probs)
            .map(|(a, &p)| p * (1.0 - a.rect_overlap_area(&box_rect) / a.area()))
            .sum::<f64>()
    };
    Ok(VerificationResult {
        feasible,
        objective_recomputed: value,
        value_consistent,
        residuals,
        max_violation,
        normalization_residual,
        ou_check,
        mc_estimate,
        mc_stderr,
        mc_consistent,
        boundary_mass,
    })
}

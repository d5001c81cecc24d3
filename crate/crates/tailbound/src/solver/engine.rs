//! Generic column-generation engine shared by the OU and 1-POU solvers:
//! master LP assembly, dual extraction, feasibility pricing, and the
//! generate/solve loop. The atom type and its pricing parametrization
//! come from a [`PricingSource`].

use std::cmp::Ordering;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::simplex::{LinearProgram, LpOutcome, RowRange};
use crate::substream;

use super::{ColumnEvaluation, PricingBudget};

/// Master layout: convexity row, optional density caps (already divided
/// by the tail mass), and two-sided moment rows.
#[derive(Debug, Clone)]
pub struct MasterSpec {
    pub cap_x: Option<f64>,
    pub cap_y: Option<f64>,
    pub rows: Vec<(f64, f64)>,
}

/// Row duals of the master, keyed by constraint role.
#[derive(Debug, Clone)]
pub struct MasterDuals {
    pub convexity: f64,
    pub cap_x: f64,
    pub cap_y: f64,
    pub rows: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum MasterOutcome {
    Optimal {
        value: f64,
        probs: Vec<f64>,
        duals: MasterDuals,
    },
    Infeasible {
        residual: f64,
        duals: MasterDuals,
    },
}

/// Solve the restricted master over the given columns.
pub fn master_lp_solve(spec: &MasterSpec, columns: &[ColumnEvaluation]) -> MasterOutcome {
    let mut rows = vec![RowRange::equal(1.0)];
    if let Some(ux) = spec.cap_x {
        rows.push(RowRange::at_most(ux));
    }
    if let Some(uy) = spec.cap_y {
        rows.push(RowRange::at_most(uy));
    }
    for &(a, b) in &spec.rows {
        rows.push(RowRange::between(a, b));
    }
    let mut lp = LinearProgram::new(rows);
    for col in columns {
        lp.add_column(col.objective_coeff, stack_coeffs(spec, col), f64::INFINITY);
    }
    let unpack = |duals: &[f64]| -> MasterDuals {
        let mut it = duals.iter().copied();
        let convexity = it.next().unwrap_or(0.0);
        let cap_x = if spec.cap_x.is_some() {
            it.next().unwrap_or(0.0)
        } else {
            0.0
        };
        let cap_y = if spec.cap_y.is_some() {
            it.next().unwrap_or(0.0)
        } else {
            0.0
        };
        MasterDuals {
            convexity,
            cap_x,
            cap_y,
            rows: it.collect(),
        }
    };
    match lp.solve() {
        LpOutcome::Optimal(s) => MasterOutcome::Optimal {
            value: s.value,
            duals: unpack(&s.duals),
            probs: s.x,
        },
        LpOutcome::Infeasible { residual, duals } => MasterOutcome::Infeasible {
            residual,
            duals: unpack(&duals),
        },
        // Columns are probabilities on a simplex; the master cannot be
        // unbounded unless the caller broke the convexity row.
        LpOutcome::Unbounded => unreachable!("mixture master is bounded by the convexity row"),
    }
}

fn stack_coeffs(spec: &MasterSpec, col: &ColumnEvaluation) -> Vec<f64> {
    let mut coeffs = Vec::with_capacity(1 + 2 + col.row_coeffs.len());
    coeffs.push(1.0);
    if spec.cap_x.is_some() {
        coeffs.push(col.ux_coeff);
    }
    if spec.cap_y.is_some() {
        coeffs.push(col.uy_coeff);
    }
    coeffs.extend_from_slice(&col.row_coeffs);
    coeffs
}

/// Reduced cost of a column against master duals. In feasibility mode the
/// true objective is ignored (phase-1 costs are zero on structurals).
pub(crate) fn reduced_cost(
    col: &ColumnEvaluation,
    duals: &MasterDuals,
    feasibility: bool,
) -> f64 {
    let obj = if feasibility { 0.0 } else { col.objective_coeff };
    let mut rc = obj - duals.convexity - duals.cap_x * col.ux_coeff - duals.cap_y * col.uy_coeff;
    for (d, v) in duals.rows.iter().zip(&col.row_coeffs) {
        rc -= d * v;
    }
    rc
}

/// Atom space searched by the pricing step.
pub(crate) trait PricingSource: Sync {
    type Atom: Clone + Send + Sync + PartialEq;

    fn evaluate(&self, atom: &Self::Atom) -> Option<ColumnEvaluation>;
    /// Initial search point for the given restart index.
    fn init_params(&self, restart: usize, rng: &mut ChaCha8Rng, budget: &PricingBudget) -> Vec<f64>;
    /// Decode a parameter vector into an atom (clamping into the box).
    fn decode(&self, restart: usize, params: &[f64], budget: &PricingBudget) -> Option<Self::Atom>;
    /// Deterministic tie-break order.
    fn lex_cmp(&self, a: &Self::Atom, b: &Self::Atom) -> Ordering;
}

/// Multistart derivative-free pricing: Nelder-Mead descents from random
/// initial points, run concurrently with per-restart substreams; the
/// winner is chosen by reduced cost with a lexicographic atom tie-break,
/// so the result does not depend on scheduling.
pub(crate) fn price_with_space<S: PricingSource>(
    space: &S,
    duals: &MasterDuals,
    budget: &PricingBudget,
    feasibility: bool,
) -> (S::Atom, f64) {
    let restarts = budget.restarts.max(1);
    let per_restart: Vec<Option<(S::Atom, f64)>> = (0..restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = substream(budget.seed, &[0x7072, budget.round, restart as u64]);
            let x0 = space.init_params(restart, &mut rng, budget);
            let score = |params: &[f64]| -> f64 {
                match space.decode(restart, params, budget).and_then(|a| {
                    space.evaluate(&a).map(|c| reduced_cost(&c, duals, feasibility))
                }) {
                    Some(rc) => -rc,
                    None => f64::INFINITY,
                }
            };
            let (best_params, _) = nelder_mead(&score, x0, budget.max_iters);
            let atom = space.decode(restart, &best_params, budget)?;
            let col = space.evaluate(&atom)?;
            Some((atom, reduced_cost(&col, duals, feasibility)))
        })
        .collect();
    per_restart
        .into_iter()
        .flatten()
        .max_by(|a, b| match a.1.total_cmp(&b.1) {
            Ordering::Equal => space.lex_cmp(&b.0, &a.0),
            ord => ord,
        })
        .expect("at least one restart decodes")
}

/// Nelder-Mead simplex descent (minimization), tolerant of infinite
/// scores on infeasible decodes.
pub(crate) fn nelder_mead(
    f: &dyn Fn(&[f64]) -> f64,
    x0: Vec<f64>,
    max_iters: usize,
) -> (Vec<f64>, f64) {
    let dim = x0.len();
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let fx0 = f(&x0);
    simplex.push((x0.clone(), fx0));
    for i in 0..dim {
        let mut p = x0.clone();
        p[i] += if p[i].abs() > 1e-8 { 0.35 * p[i].abs().max(0.5) } else { 0.35 };
        let fp = f(&p);
        simplex.push((p, fp));
    }
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if worst.is_finite() && (worst - best).abs() <= 1e-12 * (1.0 + best.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|(p, _)| p[k]).sum::<f64>() / dim as f64)
            .collect();
        let combine = |t: f64| -> Vec<f64> {
            (0..dim)
                .map(|k| centroid[k] + t * (centroid[k] - simplex[dim].0[k]))
                .collect()
        };
        let reflected = combine(alpha);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(gamma);
            let fe = f(&expanded);
            simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[dim].1 {
                combine(rho)
            } else {
                combine(-rho)
            };
            let fc = f(&contracted);
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (contracted, fc);
            } else {
                // Shrink toward the best vertex.
                let best_point = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for k in 0..dim {
                        entry.0[k] = best_point[k] + sigma * (entry.0[k] - best_point[k]);
                    }
                    entry.1 = f(&entry.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

pub(crate) struct CgOutcome<A> {
    /// Final support (atoms and probabilities); `None` when infeasible.
    pub support: Option<(Vec<A>, Vec<f64>)>,
    pub residual: f64,
    pub iterations: usize,
    pub columns_generated: usize,
    pub pricing_restarts: usize,
}

const MAX_FEASIBILITY_ROUNDS: usize = 40;
const POOL_CAP: usize = 600;

/// The generate/solve loop: alternate restricted-master solves with
/// pricing until no column improves by more than `tol_rc`, then re-solve
/// restricted to the optimal basis to produce the pruned support.
pub(crate) fn run_column_generation<S: PricingSource>(
    space: &S,
    spec: &MasterSpec,
    seeds: Vec<S::Atom>,
    budget: PricingBudget,
    tol_rc: f64,
    max_iters: usize,
) -> CgOutcome<S::Atom> {
    let mut atoms: Vec<S::Atom> = Vec::new();
    let mut evals: Vec<ColumnEvaluation> = Vec::new();
    for atom in seeds {
        if let Some(col) = space.evaluate(&atom) {
            if !atoms.contains(&atom) {
                atoms.push(atom);
                evals.push(col);
            }
        }
    }
    let mut outcome = CgOutcome {
        support: None,
        residual: f64::INFINITY,
        iterations: 0,
        columns_generated: atoms.len(),
        pricing_restarts: 0,
    };
    if atoms.is_empty() {
        return outcome;
    }

    let mut feasibility_rounds = 0usize;
    let mut last: Option<(f64, Vec<f64>)> = None;
    for iter in 0..max_iters {
        outcome.iterations = iter + 1;
        let round_budget = PricingBudget {
            round: iter as u64,
            ..budget.clone()
        };
        match master_lp_solve(spec, &evals) {
            MasterOutcome::Infeasible { residual, duals } => {
                outcome.residual = residual;
                last = None;
                if feasibility_rounds >= MAX_FEASIBILITY_ROUNDS {
                    return outcome;
                }
                feasibility_rounds += 1;
                let (atom, rc) = price_with_space(space, &duals, &round_budget, true);
                outcome.pricing_restarts += round_budget.restarts;
                if rc <= 1e-10 || atoms.contains(&atom) {
                    return outcome;
                }
                if let Some(col) = space.evaluate(&atom) {
                    atoms.push(atom);
                    evals.push(col);
                    outcome.columns_generated += 1;
                } else {
                    return outcome;
                }
            }
            MasterOutcome::Optimal { value, probs, duals } => {
                outcome.residual = 0.0;
                last = Some((value, probs));
                let (atom, rc) = price_with_space(space, &duals, &round_budget, false);
                outcome.pricing_restarts += round_budget.restarts;
                if rc <= tol_rc || atoms.contains(&atom) {
                    break;
                }
                if let Some(col) = space.evaluate(&atom) {
                    atoms.push(atom);
                    evals.push(col);
                    outcome.columns_generated += 1;
                } else {
                    break;
                }
            }
        }
        if evals.len() > POOL_CAP {
            let keep_from = evals.len() - POOL_CAP / 2;
            let (_, probs) = last.clone().unwrap_or((0.0, vec![0.0; evals.len()]));
            let mut kept_atoms = Vec::new();
            let mut kept_evals = Vec::new();
            for i in 0..evals.len() {
                if i >= keep_from || probs.get(i).copied().unwrap_or(0.0) > 1e-12 {
                    kept_atoms.push(atoms[i].clone());
                    kept_evals.push(evals[i].clone());
                }
            }
            atoms = kept_atoms;
            evals = kept_evals;
            last = None;
        }
    }

    let Some((value, probs)) = last.or_else(|| match master_lp_solve(spec, &evals) {
        MasterOutcome::Optimal { value, probs, .. } => Some((value, probs)),
        MasterOutcome::Infeasible { residual, .. } => {
            outcome.residual = residual;
            None
        }
    }) else {
        return outcome;
    };

    // Prune to the positive support and re-solve, confirming the value.
    let mut sel_atoms = Vec::new();
    let mut sel_evals = Vec::new();
    for (i, &p) in probs.iter().enumerate() {
        if p > 1e-12 {
            sel_atoms.push(atoms[i].clone());
            sel_evals.push(evals[i].clone());
        }
    }
    if sel_atoms.is_empty() {
        outcome.support = Some((Vec::new(), Vec::new()));
        return outcome;
    }
    match master_lp_solve(spec, &sel_evals) {
        MasterOutcome::Optimal {
            value: v2,
            probs: p2,
            ..
        } if (v2 - value).abs() <= 1e-7 * (1.0 + value.abs()) => {
            let mut out_atoms = Vec::new();
            let mut out_probs = Vec::new();
            for (i, &p) in p2.iter().enumerate() {
                if p > 1e-12 {
                    out_atoms.push(sel_atoms[i].clone());
                    out_probs.push(p);
                }
            }
            outcome.support = Some((out_atoms, out_probs));
        }
        _ => {
            // Restricted resolve drifted; fall back to the unrestricted
            // solution filtered to its support.
            let mut out_atoms = Vec::new();
            let mut out_probs = Vec::new();
            for (i, &p) in probs.iter().enumerate() {
                if p > 1e-12 {
                    out_atoms.push(atoms[i].clone());
                    out_probs.push(p);
                }
            }
            outcome.support = Some((out_atoms, out_probs));
        }
    }
    outcome
}

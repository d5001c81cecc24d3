//! Tail bounds when only the first coordinate is in its tail.
//!
//! Under partial orthounimodality in the first coordinate, the worst case
//! is a mixture of distributions that are uniform on a segment
//! `[x10, Z1]` in the first coordinate and a point mass in the others.
//! An atom is therefore just a point `z` in the tail domain with
//! `z1 > x10`, and the moment problem over atom mixtures reads
//!
//! ```text
//! max  c * sum_l p_l (min(g2(z_l,2..), z_l1) - min(g1(z_l,2..), z_l1)) / (z_l1 - x10)
//! s.t. sum p_l / (z_l1 - x10) <= uX1 / c
//!      a_i <= sum p_l (min(z_l1, hi_1i) - min(z_l1, lo_1i)) / (z_l1 - x10)
//!                 * I(box_i holds on coords >= 2)  <= b_i
//!      sum p_l = 1
//! ```
//!
//! solved by the same column-generation engine as the OU problem; the
//! basis carries at most `n + 2` atoms. Recovery yields a sampler
//! `(x10 + U (Z1 - x10), Z2, ...)` and the closed-form first-coordinate
//! marginal density `sum_l p_l I(z_l1 >= x) / (z_l1 - x10)`; mass in the
//! remaining coordinates stays discrete, which the report flags.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::jsonio;
use crate::solver::engine::{run_column_generation, PricingSource};
use crate::solver::{
    ColumnEvaluation, Diagnostics, MasterSpec, PricingBudget, SolverError, SolverOptions,
};

/// Piecewise-affine piece for band functions of a single coordinate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BandPiece {
    pub start: f64,
    pub slope: f64,
    #[serde(with = "jsonio::ext")]
    pub intercept: f64,
}

/// Band function of the coordinates `>= 2`, evaluated pointwise. The
/// problem clamps values into `[x10, +inf]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "lowercase")]
pub enum BandFn {
    /// Constant, possibly `"inf"`.
    Const(#[serde(with = "jsonio::ext")] f64),
    /// Affine in the coordinates `>= 2`.
    Affine {
        coeffs: Vec<f64>,
        intercept: f64,
    },
    /// Piecewise affine in the single coordinate `z2` (bivariate case);
    /// pieces apply from `start` to the next piece.
    Pieces(Vec<BandPiece>),
}

impl BandFn {
    pub fn eval(&self, rest: &[f64]) -> f64 {
        match self {
            BandFn::Const(v) => *v,
            BandFn::Affine { coeffs, intercept } => {
                let mut acc = *intercept;
                for (c, z) in coeffs.iter().zip(rest) {
                    acc += c * z;
                }
                acc
            }
            BandFn::Pieces(pieces) => {
                let z = rest.first().copied().unwrap_or(0.0);
                let idx = pieces.partition_point(|p| p.start <= z);
                match pieces.get(idx.saturating_sub(1)) {
                    Some(p) if idx > 0 => {
                        if p.intercept.is_infinite() {
                            f64::INFINITY
                        } else {
                            p.slope * z + p.intercept
                        }
                    }
                    // Left of every piece: no band there.
                    _ => f64::INFINITY,
                }
            }
        }
    }
}

/// One box constraint in `d` dimensions with probability bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PouRow {
    /// Per-coordinate `[lo, hi]`; entries may be infinite.
    #[serde(rename = "box", with = "crate::jsonio::ext_pairs")]
    pub bounds: Vec<(f64, f64)>,
    pub a: f64,
    pub b: f64,
    pub conditional: bool,
}

/// The 1-POU problem: first coordinate in its tail above `x10`, target
/// band `g1 <= x1 <= g2` as functions of the remaining coordinates.
#[derive(Debug, Clone)]
pub struct PouProblem {
    pub d: usize,
    pub x10: f64,
    /// Lower thresholds of coordinates `>= 2`; `-inf` leaves a coordinate
    /// unbounded below.
    pub lower_thresholds: Vec<f64>,
    pub l_f: f64,
    pub u_f: f64,
    pub u_x1: f64,
    pub rows: Vec<PouRow>,
    pub g1: BandFn,
    pub g2: BandFn,
}

impl PouProblem {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.d < 1 {
            return Err(SolverError::BadProblem("dimension must be >= 1".into()));
        }
        if !self.x10.is_finite() {
            return Err(SolverError::BadProblem("x10 must be finite".into()));
        }
        if self.lower_thresholds.len() != self.d - 1 {
            return Err(SolverError::BadProblem(format!(
                "need {} lower thresholds, got {}",
                self.d - 1,
                self.lower_thresholds.len()
            )));
        }
        if !(self.l_f <= self.u_f) || !(self.u_f > 0.0) {
            return Err(SolverError::BadProblem(format!(
                "bad tail-mass interval [{}, {}]",
                self.l_f, self.u_f
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.bounds.len() != self.d {
                return Err(SolverError::BadProblem(format!(
                    "row {i}: box dimension {} != {}",
                    row.bounds.len(),
                    self.d
                )));
            }
            if !(0.0 <= row.a && row.a <= row.b) {
                return Err(SolverError::BadProblem(format!("row {i}: a > b")));
            }
        }
        // g1 <= g2 spot-checked on a probe grid over the box hull.
        for probe in self.probe_points() {
            let (g1, g2) = self.band_at(&probe);
            if g1 > g2 {
                return Err(SolverError::BadProblem(format!(
                    "band inverted at probe {probe:?}: g1 = {g1} > g2 = {g2}"
                )));
            }
        }
        Ok(())
    }

    fn probe_points(&self) -> Vec<Vec<f64>> {
        if self.d == 1 {
            return vec![vec![]];
        }
        let mut probes = vec![Vec::new()];
        for j in 0..self.d - 1 {
            let lo = self.lower_thresholds[j].max(-1e3);
            let mut next = Vec::new();
            for base in &probes {
                for t in [lo, lo + 1.0, lo + 10.0, lo + 100.0] {
                    let mut p = base.clone();
                    p.push(t);
                    next.push(p);
                }
            }
            probes = next;
        }
        probes
    }

    /// Band values clamped into `[x10, +inf]`.
    pub fn band_at(&self, rest: &[f64]) -> (f64, f64) {
        let g1 = self.g1.eval(rest).max(self.x10);
        let g2 = self.g2.eval(rest).max(self.x10);
        (g1, g2)
    }

    pub fn default_box_bound(&self) -> f64 {
        let mut largest: f64 = 0.0;
        for row in &self.rows {
            for (j, &(lo, hi)) in row.bounds.iter().enumerate() {
                let base = if j == 0 {
                    self.x10
                } else {
                    self.lower_thresholds[j - 1].max(-1e308)
                };
                for v in [lo - base, hi - base] {
                    if v.is_finite() {
                        largest = largest.max(v);
                    }
                }
            }
        }
        1e3 * largest.max(10.0)
    }
}

/// Fixed-`c` view of the problem with resolved rows.
pub struct PouFixed<'a> {
    pub problem: &'a PouProblem,
    pub c: f64,
    pub rows: Vec<(f64, f64)>,
    epsilon: f64,
}

impl<'a> PouFixed<'a> {
    pub fn new(problem: &'a PouProblem, c: f64, epsilon: f64) -> Result<Self, SolverError> {
        if !(c > 0.0) {
            return Err(SolverError::BadProblem("c must be positive".into()));
        }
        let rows = problem
            .rows
            .iter()
            .map(|r| {
                if r.conditional {
                    (r.a, r.b)
                } else {
                    ((r.a / c).min(1.0), (r.b / c).min(1.0))
                }
            })
            .collect();
        Ok(Self {
            problem,
            c,
            rows,
            epsilon,
        })
    }
}

/// Constraint coefficients of a point atom. The density coefficient
/// `1/(z1 - x10)` rides in `ux_coeff`; there is no second cap.
pub fn evaluate_pou_column(
    fixed: &PouFixed,
    atom: &[f64],
) -> Result<ColumnEvaluation, SolverError> {
    let p = fixed.problem;
    let z1 = atom[0];
    let spread = z1 - p.x10;
    if !(spread > fixed.epsilon * 0.5) {
        return Err(SolverError::DegenerateAtom(spread));
    }
    let rest = &atom[1..];
    let (g1, g2) = p.band_at(rest);
    let objective_coeff = fixed.c * (g2.min(z1) - g1.min(z1)) / spread;
    let row_coeffs = p
        .rows
        .iter()
        .map(|row| {
            let inside = row.bounds[1..]
                .iter()
                .zip(rest)
                .all(|(&(lo, hi), &z)| z >= lo && z <= hi);
            if !inside {
                return 0.0;
            }
            let (lo1, hi1) = row.bounds[0];
            let lo1 = lo1.max(p.x10);
            (z1.min(hi1) - z1.min(lo1)).max(0.0) / spread
        })
        .collect();
    Ok(ColumnEvaluation {
        objective_coeff,
        ux_coeff: 1.0 / spread,
        uy_coeff: 0.0,
        row_coeffs,
    })
}

struct PouSpace<'a> {
    fixed: &'a PouFixed<'a>,
}

impl PricingSource for PouSpace<'_> {
    type Atom = Vec<f64>;

    fn evaluate(&self, atom: &Vec<f64>) -> Option<ColumnEvaluation> {
        evaluate_pou_column(self.fixed, atom).ok()
    }

    fn init_params(&self, _restart: usize, rng: &mut ChaCha8Rng, budget: &PricingBudget) -> Vec<f64> {
        let p = self.fixed.problem;
        let hi = budget.box_bound;
        let lo = (1e-6 * hi).max(budget.epsilon);
        let span = hi.ln() - lo.ln();
        let mut params = Vec::with_capacity(p.d);
        params.push(lo.ln() + rng.gen::<f64>() * span);
        for j in 0..p.d - 1 {
            let base = p.lower_thresholds[j];
            let (a, b) = if base.is_finite() {
                (base, base + hi)
            } else {
                (-hi, hi)
            };
            params.push(a + rng.gen::<f64>() * (b - a));
        }
        params
    }

    fn decode(&self, _restart: usize, params: &[f64], budget: &PricingBudget) -> Option<Vec<f64>> {
        let p = self.fixed.problem;
        let hi = budget.box_bound;
        let mut atom = Vec::with_capacity(p.d);
        atom.push(p.x10 + params[0].exp().clamp(budget.epsilon, hi));
        for j in 0..p.d - 1 {
            let base = p.lower_thresholds[j];
            let (a, b) = if base.is_finite() {
                (base, base + hi)
            } else {
                (-hi, hi)
            };
            atom.push(params[j + 1].clamp(a, b));
        }
        Some(atom)
    }

    fn lex_cmp(&self, a: &Vec<f64>, b: &Vec<f64>) -> Ordering {
        a.partial_cmp(b).unwrap_or(Ordering::Equal)
    }
}

/// Mixture over point atoms; the solver's decision object.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PouMixture {
    pub atoms: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

/// Report for the 1-POU problem; same shape as the OU report with atoms
/// as plain points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PouSolveReport {
    pub value: f64,
    pub best_c: f64,
    pub feasible: bool,
    pub mixture: PouMixture,
    pub slacks: BTreeMap<String, f64>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<serde_json::Value>,
}

impl PouSolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Sweep the tail mass over a grid and solve each fixed-`c` moment
/// problem by column generation.
pub fn solve_1pou(
    problem: &PouProblem,
    c_grid: &[f64],
    opts: &SolverOptions,
) -> Result<PouSolveReport, SolverError> {
    problem.validate()?;
    let grid: Vec<f64> = if c_grid.is_empty() {
        default_grid(problem.l_f, problem.u_f, opts.c_grid)
    } else {
        c_grid.to_vec()
    };
    let grid: Vec<f64> = grid.into_iter().filter(|&c| c > 0.0).collect();
    if grid.is_empty() {
        return Err(SolverError::BadProblem("no positive grid point".into()));
    }
    let box_bound = opts.box_bound.unwrap_or_else(|| problem.default_box_bound());
    let epsilon = 1e-9 * box_bound.max(1.0);
    let mut best: Option<PouSolveReport> = None;
    let mut per_c = Vec::new();
    for &c in &grid {
        let fixed = PouFixed::new(problem, c, epsilon)?;
        let tol_rc = opts.tol_rc.unwrap_or(1e-7 * c);
        let budget = PricingBudget {
            restarts: opts.pricing_restarts,
            max_iters: opts.pricing_iters,
            box_bound,
            epsilon,
            seed: opts.seed,
            round: 0,
        };
        let spec = MasterSpec {
            cap_x: Some(problem.u_x1 / c),
            cap_y: None,
            rows: fixed.rows.clone(),
        };
        let space = PouSpace { fixed: &fixed };
        let outcome =
            run_column_generation(&space, &spec, seed_atoms(&fixed, box_bound), budget, tol_rc, opts.max_iters);
        let mut diagnostics = Diagnostics {
            iterations: outcome.iterations,
            columns_generated: outcome.columns_generated,
            pricing_restarts: outcome.pricing_restarts,
            tol_rc,
            box_bound,
            warnings: Vec::new(),
            per_c: Vec::new(),
        };
        // Point masses in the non-tail coordinates are inherent to the
        // recovered optimum; flag rather than smooth.
        if problem.d > 1 {
            diagnostics
                .warnings
                .push("worst case is singular in coordinates >= 2 (point masses)".into());
        }
        match outcome.support {
            Some((atoms, probs)) => {
                let total: f64 = probs.iter().sum();
                let probs: Vec<f64> = probs.iter().map(|p| p / total).collect();
                let mixture = PouMixture { atoms, probs };
                let (value, slacks) = audit_pou_mixture(&fixed, &mixture);
                per_c.push((c, Some(value)));
                let report = PouSolveReport {
                    value,
                    best_c: c,
                    feasible: true,
                    mixture,
                    slacks,
                    diagnostics,
                    verification: None,
                };
                if best.as_ref().map_or(true, |b| !b.feasible || report.value > b.value) {
                    best = Some(report);
                }
            }
            None => {
                per_c.push((c, None));
                diagnostics
                    .warnings
                    .push(format!("infeasible: phase-1 residual {:.3e}", outcome.residual));
                if best.is_none() {
                    best = Some(PouSolveReport {
                        value: 0.0,
                        best_c: c,
                        feasible: false,
                        mixture: PouMixture {
                            atoms: Vec::new(),
                            probs: Vec::new(),
                        },
                        slacks: BTreeMap::new(),
                        diagnostics,
                        verification: None,
                    });
                }
            }
        }
    }
    let mut report = best.expect("grid nonempty");
    report.diagnostics.per_c = per_c;
    Ok(report)
}

fn default_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if lo >= hi {
        return vec![lo];
    }
    let points = points.max(2);
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

fn seed_atoms(fixed: &PouFixed, box_bound: f64) -> Vec<Vec<f64>> {
    let p = fixed.problem;
    let mut firsts: Vec<f64> = vec![p.x10 + box_bound];
    for row in &p.rows {
        for v in [row.bounds[0].0, row.bounds[0].1] {
            if v.is_finite() && v > p.x10 {
                firsts.push(v);
            }
        }
    }
    firsts.push(p.x10 + 1.0);
    firsts.sort_by(f64::total_cmp);
    firsts.dedup();
    let mut rests: Vec<Vec<f64>> = vec![Vec::new()];
    for j in 0..p.d - 1 {
        let mut cands: Vec<f64> = vec![p.lower_thresholds[j].max(-box_bound)];
        for row in &p.rows {
            for v in [row.bounds[j + 1].0, row.bounds[j + 1].1] {
                if v.is_finite() {
                    cands.push(v);
                }
            }
        }
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let mut next = Vec::new();
        for base in &rests {
            for &cand in &cands {
                let mut r = base.clone();
                r.push(cand);
                next.push(r);
            }
        }
        rests = next;
    }
    let mut seeds = Vec::new();
    for &z1 in &firsts {
        for rest in &rests {
            let mut atom = Vec::with_capacity(p.d);
            atom.push(z1);
            atom.extend_from_slice(rest);
            seeds.push(atom);
        }
    }
    seeds
}

/// Exact objective and signed slacks of a point-atom mixture.
pub fn audit_pou_mixture(
    fixed: &PouFixed,
    mixture: &PouMixture,
) -> (f64, BTreeMap<String, f64>) {
    let mut value = 0.0;
    let mut density = 0.0;
    let mut rows = vec![0.0; fixed.rows.len()];
    let mut mass = 0.0;
    for (atom, &p) in mixture.atoms.iter().zip(&mixture.probs) {
        if let Ok(col) = evaluate_pou_column(fixed, atom) {
            value += p * col.objective_coeff;
            density += p * col.ux_coeff;
            for (acc, v) in rows.iter_mut().zip(&col.row_coeffs) {
                *acc += p * v;
            }
        }
        mass += p;
    }
    let mut slacks = BTreeMap::new();
    slacks.insert("normalization".into(), -(mass - 1.0).abs());
    slacks.insert(
        "uX1".into(),
        fixed.problem.u_x1 / fixed.c - density,
    );
    for (i, (v, &(a, b))) in rows.iter().zip(&fixed.rows).enumerate() {
        slacks.insert(format!("row_{i}"), (v - a).min(b - v));
    }
    (value, slacks)
}

/// Sampler and closed-form first-coordinate marginal density of the
/// recovered worst case, normalized to a probability on the tail domain.
#[derive(Debug, Clone)]
pub struct PouSamplerDensity {
    pub x10: f64,
    pub mixture: PouMixture,
}

impl PouSamplerDensity {
    /// Draw `(x10 + U (z1 - x10), z2, ..., zd)`.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u: f64 = rng.gen();
        let pick: f64 = rng.gen();
        let mut acc = 0.0;
        let mut idx = self.mixture.atoms.len() - 1;
        for (i, &p) in self.mixture.probs.iter().enumerate() {
            acc += p;
            if pick <= acc {
                idx = i;
                break;
            }
        }
        let atom = &self.mixture.atoms[idx];
        let mut out = atom.clone();
        out[0] = self.x10 + u * (atom[0] - self.x10);
        out
    }

    /// `f_{X1}(x) = sum_l p_l I(z_l1 >= x) / (z_l1 - x10)` for `x >= x10`.
    pub fn marginal_density(&self, x: f64) -> f64 {
        if x < self.x10 {
            return 0.0;
        }
        self.mixture
            .atoms
            .iter()
            .zip(&self.mixture.probs)
            .filter(|(a, _)| a[0] >= x)
            .map(|(a, &p)| p / (a[0] - self.x10))
            .sum()
    }

    /// CDF of the first-coordinate marginal.
    pub fn marginal_cdf(&self, x: f64) -> f64 {
        if x <= self.x10 {
            return 0.0;
        }
        self.mixture
            .atoms
            .iter()
            .zip(&self.mixture.probs)
            .map(|(a, &p)| p * ((x - self.x10) / (a[0] - self.x10)).min(1.0))
            .sum()
    }
}

/// Recover the sampler and marginal density from a feasible report.
pub fn recover_1pou(x10: f64, report: &PouSolveReport) -> PouSamplerDensity {
    PouSamplerDensity {
        x10,
        mixture: report.mixture.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_problem() -> PouProblem {
        // One pinned slab on [0, 1], density cap 1, target X1 >= 2.
        PouProblem {
            d: 1,
            x10: 0.0,
            lower_thresholds: vec![],
            l_f: 1.0,
            u_f: 1.0,
            u_x1: 1.0,
            rows: vec![PouRow {
                bounds: vec![(0.0, 1.0)],
                a: 0.4975,
                b: 0.5025,
                conditional: true,
            }],
            g1: BandFn::Const(2.0),
            g2: BandFn::Const(f64::INFINITY),
        }
    }

    #[test]
    fn pou_column_spec_examples() {
        let p = desk_problem();
        let fixed = PouFixed::new(&p, 1.0, 1e-9).unwrap();
        // x10=0, z1=2, g1=1, g2=inf: objective c/2.
        let mut q = desk_problem();
        q.g1 = BandFn::Const(1.0);
        let fixed_q = PouFixed::new(&q, 1.0, 1e-9).unwrap();
        let col = evaluate_pou_column(&fixed_q, &[2.0]).unwrap();
        assert!((col.objective_coeff - 0.5).abs() < 1e-12);

        // Row [0,1]: coefficient min(z1,1)/z1 = 0.5 at z1 = 2.
        let col = evaluate_pou_column(&fixed, &[2.0]).unwrap();
        assert!((col.row_coeffs[0] - 0.5).abs() < 1e-12);
        assert!((col.ux_coeff - 0.5).abs() < 1e-12);

        // Box violated on coords >= 2 zeroes the row coefficient.
        let mut r = desk_problem();
        r.d = 2;
        r.lower_thresholds = vec![f64::NEG_INFINITY];
        r.rows[0].bounds.push((0.0, 1.0));
        let fixed_r = PouFixed::new(&r, 1.0, 1e-9).unwrap();
        let col = evaluate_pou_column(&fixed_r, &[2.0, 5.0]).unwrap();
        assert_eq!(col.row_coeffs[0], 0.0);

        assert!(evaluate_pou_column(&fixed, &[1e-12]).is_err());
    }

    /// Brute-force two-atom oracle on a log grid of z1.
    fn two_atom_oracle(p: &PouProblem, box_bound: f64) -> f64 {
        let fixed = PouFixed::new(p, 1.0, 1e-9).unwrap();
        let grid: Vec<f64> = (0..400)
            .map(|i| {
                let t = i as f64 / 399.0;
                (1e-4f64.ln() + t * (box_bound.ln() - 1e-4f64.ln())).exp()
            })
            .collect();
        let (a_lo, a_hi) = (fixed.rows[0].0, fixed.rows[0].1);
        let mut best = 0.0f64;
        for &za in &grid {
            let ca = evaluate_pou_column(&fixed, &[za]).unwrap();
            for &zb in &grid {
                let cb = evaluate_pou_column(&fixed, &[zb]).unwrap();
                // Weight satisfying the pinned row as tightly as possible.
                let denom = ca.row_coeffs[0] - cb.row_coeffs[0];
                for target in [a_lo, a_hi] {
                    if denom.abs() < 1e-15 {
                        continue;
                    }
                    let w = (target - cb.row_coeffs[0]) / denom;
                    if !(0.0..=1.0).contains(&w) {
                        continue;
                    }
                    let dens = w * ca.ux_coeff + (1.0 - w) * cb.ux_coeff;
                    if dens > p.u_x1 + 1e-12 {
                        continue;
                    }
                    best = best.max(w * ca.objective_coeff + (1.0 - w) * cb.objective_coeff);
                }
            }
        }
        best
    }

    #[test]
    fn desk_instance_matches_two_atom_oracle() {
        let p = desk_problem();
        let opts = SolverOptions {
            box_bound: Some(100.0),
            pricing_restarts: 32,
            pricing_iters: 120,
            seed: 4,
            ..SolverOptions::default()
        };
        let report = solve_1pou(&p, &[1.0], &opts).unwrap();
        assert!(report.feasible);
        let oracle = two_atom_oracle(&p, 100.0);
        assert!(
            (report.value - oracle).abs() < 5e-3,
            "solver {} vs oracle {oracle}",
            report.value
        );
        assert!((report.value - 0.49).abs() <= 0.01, "value {}", report.value);
        assert!(report.mixture.atoms.len() <= p.rows.len() + 2);
        // Density constraint honored with slack.
        assert!(report.slacks["uX1"] >= -1e-9);
    }

    #[test]
    fn no_rows_and_full_band_reach_c() {
        let p = PouProblem {
            d: 1,
            x10: 0.0,
            lower_thresholds: vec![],
            l_f: 0.7,
            u_f: 0.7,
            u_x1: 5.0,
            rows: vec![],
            g1: BandFn::Const(0.0),
            g2: BandFn::Const(f64::INFINITY),
        };
        let opts = SolverOptions {
            pricing_restarts: 8,
            pricing_iters: 40,
            ..SolverOptions::default()
        };
        let report = solve_1pou(&p, &[0.7], &opts).unwrap();
        assert!((report.value - 0.7).abs() < 1e-9);
    }

    #[test]
    fn density_cap_forces_long_segments() {
        // uX1/c = 0.02 forces every supported atom to satisfy
        // 1/(z1 - x10) <= 0.02 in expectation; a single atom must sit at
        // z1 >= 50.
        let p = PouProblem {
            d: 1,
            x10: 0.0,
            lower_thresholds: vec![],
            l_f: 1.0,
            u_f: 1.0,
            u_x1: 0.02,
            rows: vec![],
            g1: BandFn::Const(0.0),
            g2: BandFn::Const(f64::INFINITY),
        };
        let opts = SolverOptions {
            box_bound: Some(1000.0),
            pricing_restarts: 8,
            pricing_iters: 60,
            ..SolverOptions::default()
        };
        let report = solve_1pou(&p, &[1.0], &opts).unwrap();
        assert!(report.feasible);
        let mean_inv: f64 = report
            .mixture
            .atoms
            .iter()
            .zip(&report.mixture.probs)
            .map(|(a, &pr)| pr / a[0])
            .sum();
        assert!(mean_inv <= 0.02 + 1e-9, "density {mean_inv}");
    }

    #[test]
    fn sampler_matches_closed_form_marginal() {
        let mixture = PouMixture {
            atoms: vec![vec![1.0], vec![4.0]],
            probs: vec![0.6, 0.4],
        };
        let sd = PouSamplerDensity { x10: 0.0, mixture };
        // Uniform on [0,1] with weight 0.6 plus uniform on [0,4] with 0.4.
        assert!((sd.marginal_density(0.5) - (0.6 + 0.1)).abs() < 1e-12);
        assert!((sd.marginal_density(2.0) - 0.1).abs() < 1e-12);
        assert_eq!(sd.marginal_density(5.0), 0.0);
        // Non-increasing in x.
        assert!(sd.marginal_density(0.2) >= sd.marginal_density(3.0));

        let mut rng = crate::substream(10, &[1]);
        let n = 1_000_000;
        let mut draws: Vec<f64> = (0..n).map(|_| sd.sample(&mut rng)[0]).collect();
        draws.sort_by(f64::total_cmp);
        // KS distance between the empirical CDF and the closed form.
        let mut ks: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate().step_by(997) {
            let emp = (i + 1) as f64 / n as f64;
            ks = ks.max((emp - sd.marginal_cdf(x)).abs());
        }
        assert!(ks < 0.002, "ks = {ks}");
    }

    #[test]
    fn single_atom_recovery_is_uniform() {
        let report = PouSolveReport {
            value: 1.0,
            best_c: 1.0,
            feasible: true,
            mixture: PouMixture {
                atoms: vec![vec![1.0]],
                probs: vec![1.0],
            },
            slacks: BTreeMap::new(),
            diagnostics: Diagnostics::default(),
            verification: None,
        };
        let sd = recover_1pou(0.0, &report);
        assert!((sd.marginal_density(0.3) - 1.0).abs() < 1e-12);
        assert!((sd.marginal_density(0.0) - 1.0).abs() < 1e-12); // right-continuous at x10
        assert_eq!(sd.marginal_density(1.5), 0.0);
    }

    #[test]
    fn band_functions_evaluate() {
        let pieces = BandFn::Pieces(vec![
            BandPiece {
                start: 0.0,
                slope: 1.0,
                intercept: 0.0,
            },
            BandPiece {
                start: 2.0,
                slope: 0.0,
                intercept: f64::INFINITY,
            },
        ]);
        assert_eq!(pieces.eval(&[1.0]), 1.0);
        assert_eq!(pieces.eval(&[3.0]), f64::INFINITY);
        assert_eq!(pieces.eval(&[-1.0]), f64::INFINITY);
        let aff = BandFn::Affine {
            coeffs: vec![2.0],
            intercept: 1.0,
        };
        assert_eq!(aff.eval(&[3.0]), 7.0);
    }

    #[test]
    fn pou_report_round_trips() {
        let p = desk_problem();
        let opts = SolverOptions {
            box_bound: Some(100.0),
            pricing_restarts: 8,
            pricing_iters: 40,
            ..SolverOptions::default()
        };
        let report = solve_1pou(&p, &[1.0], &opts).unwrap();
        let back = PouSolveReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report.value, back.value);
        assert_eq!(report.mixture, back.mixture);
    }
}

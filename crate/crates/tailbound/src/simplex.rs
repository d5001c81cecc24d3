//! Bounded-variable primal simplex over dense columns.
//!
//! Solves `max c'x` subject to range rows `rlo_i <= a_i'x <= rhi_i` and
//! variable bounds `lo_j <= x_j <= hi_j`. Every row is converted to an
//! equality `a_i'x + s_i = b_i` with a bounded slack, so two-sided rows
//! cost one basis slot each; that keeps the basic support of a moment
//! master at the row count, which is exactly the support bound the
//! mixture recovery relies on.
//!
//! Phase 1 drives out-of-range basics back inside their bounds by
//! maximizing the negative total infeasibility; phase 2 then runs the
//! usual bounded-variable iteration with bound flips. Entering variables
//! follow Dantzig's rule with lowest-index tie-breaks, switching to
//! Bland's rule for good after 1000 degenerate pivots, so runs are
//! deterministic and cycle-free.

const PIVOT_TOL: f64 = 1e-11;
/// Minimum pivot magnitude accepted for a basis exchange; smaller pivots
/// amplify rounding error through the eta update, so the factorization is
/// rebuilt and the iteration retried instead.
const PIVOT_ACCEPT: f64 = 1e-8;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const BLAND_AFTER: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowRange {
    pub lo: f64,
    pub hi: f64,
}

impl RowRange {
    pub fn equal(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn at_most(v: f64) -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: v,
        }
    }

    pub fn between(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    /// Structural variable values.
    pub x: Vec<f64>,
    /// Row duals `y` with the reduced-cost convention `d_j = c_j - y·A_j`.
    pub duals: Vec<f64>,
    /// Indices of structural variables in the final basis.
    pub basic_structurals: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal(LpSolution),
    /// Sum of bound violations at the phase-1 stall, plus the phase-1 row
    /// duals (useful for feasibility pricing).
    Infeasible { residual: f64, duals: Vec<f64> },
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

/// Column-oriented LP: rows are fixed up front, columns stream in.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    rows: Vec<RowRange>,
    cols: Vec<Vec<f64>>,
    obj: Vec<f64>,
    upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(rows: Vec<RowRange>) -> Self {
        assert!(
            rows.iter().all(|r| r.lo.is_finite() || r.hi.is_finite()),
            "each row needs at least one finite bound"
        );
        Self {
            rows,
            cols: Vec::new(),
            obj: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    /// Add a structural variable `x_j in [0, upper]` with dense row
    /// coefficients; returns its index.
    pub fn add_column(&mut self, objective: f64, coeffs: Vec<f64>, upper: f64) -> usize {
        assert_eq!(coeffs.len(), self.rows.len());
        self.cols.push(coeffs);
        self.obj.push(objective);
        self.upper.push(upper);
        self.cols.len() - 1
    }

    pub fn solve(&self) -> LpOutcome {
        Worker::new(self).run()
    }
}

/// Why a simplex step could not complete.
enum StepError {
    Unbounded,
    Singular,
}

#[derive(Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Worker<'a> {
    lp: &'a LinearProgram,
    m: usize,
    /// structurals, then slacks, then one artificial per row.
    n_total: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    anchor: Vec<f64>,
    /// Sign of each artificial column, chosen so the initial artificial
    /// value is nonnegative.
    art_sign: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    degenerate_pivots: usize,
    pivots_since_refactor: usize,
}

impl<'a> Worker<'a> {
    fn new(lp: &'a LinearProgram) -> Self {
        let m = lp.rows.len();
        let n = lp.cols.len();
        let n_total = n + 2 * m;
        let mut lo = vec![0.0; n_total];
        let mut hi = vec![f64::INFINITY; n_total];
        let mut cost = vec![0.0; n_total];
        let mut anchor = vec![0.0; m];
        for j in 0..n {
            hi[j] = lp.upper[j];
            cost[j] = lp.obj[j];
        }
        for (i, r) in lp.rows.iter().enumerate() {
            // a'x + s + sign*art = b with s in [b - rhi, b - rlo]; the
            // anchor sits at a finite bound.
            let b = if r.hi.is_finite() { r.hi } else { r.lo };
            anchor[i] = b;
            lo[n + i] = b - r.hi;
            hi[n + i] = b - r.lo;
        }
        let mut w = Self {
            lp,
            m,
            n_total,
            lo,
            hi,
            cost,
            anchor,
            art_sign: vec![1.0; m],
            basis: Vec::new(),
            state: Vec::new(),
            binv: Vec::new(),
            xb: vec![0.0; m],
            degenerate_pivots: 0,
            pivots_since_refactor: 0,
        };
        w.reset();
        w
    }

    /// Start (or restart) from the canonical basis: structurals at zero,
    /// each slack at the bound nearest its target value, artificials
    /// absorbing the residuals.
    fn reset(&mut self) {
        let n = self.lp.cols.len();
        let m = self.m;
        self.state = vec![VarState::AtLower; self.n_total];
        self.basis = (n + m..self.n_total).collect();
        for i in 0..m {
            // Residual with the slack at its lower or upper bound.
            let slack = n + i;
            let (slo, shi) = (self.lo[slack], self.hi[slack]);
            let pick = if slo.is_finite() && (!shi.is_finite() || slo.abs() <= shi.abs()) {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            self.state[slack] = pick;
            let sval = match pick {
                VarState::AtLower => slo,
                _ => shi,
            };
            let residual = self.anchor[i] - sval;
            self.art_sign[i] = if residual >= 0.0 { 1.0 } else { -1.0 };
        }
        for (r, &b) in self.basis.iter().enumerate() {
            self.state[b] = VarState::Basic(r);
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            // basis column i is the artificial with sign art_sign[i]
            self.binv[i * m + i] = self.art_sign[i];
        }
        self.pivots_since_refactor = 0;
        self.recompute_xb();
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.lp.cols.len() + self.m
    }

    fn col_entry(&self, j: usize, i: usize) -> f64 {
        let n = self.lp.cols.len();
        if j < n {
            self.lp.cols[j][i]
        } else if j < n + self.m {
            if j - n == i {
                1.0
            } else {
                0.0
            }
        } else if j - n - self.m == i {
            self.art_sign[i]
        } else {
            0.0
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lo[j],
            VarState::AtUpper => self.hi[j],
            VarState::Basic(r) => self.xb[r],
        }
    }

    /// alpha = B^{-1} A_j
    fn ftran(&self, j: usize) -> Vec<f64> {
        let n = self.lp.cols.len();
        let m = self.m;
        let mut out = vec![0.0; m];
        if j >= n + m {
            let i = j - n - m;
            for r in 0..m {
                out[r] = self.binv[r * m + i] * self.art_sign[i];
            }
        } else if j >= n {
            let i = j - n;
            for r in 0..m {
                out[r] = self.binv[r * m + i];
            }
        } else {
            let col = &self.lp.cols[j];
            for r in 0..m {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += self.binv[r * m + i] * col[i];
                }
                out[r] = acc;
            }
        }
        out
    }

    fn recompute_xb(&mut self) {
        // x_B = B^{-1} (b - N x_N)
        let m = self.m;
        let mut rhs = self.anchor.clone();
        for j in 0..self.n_total {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.col_entry(j, i) * v;
                }
            }
        }
        for r in 0..m {
            let mut acc = 0.0;
            for i in 0..m {
                acc += self.binv[r * m + i] * rhs[i];
            }
            self.xb[r] = acc;
        }
    }

    fn refactor(&mut self) -> bool {
        // Gauss-Jordan inverse of the basis matrix.
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                a[i * m + r] = self.col_entry(j, i);
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if a[r * m + col].abs() > a[piv * m + col].abs() {
                    piv = r;
                }
            }
            if a[piv * m + col].abs() < 1e-13 {
                return false;
            }
            if piv != col {
                for k in 0..m {
                    a.swap(col * m + k, piv * m + k);
                    inv.swap(col * m + k, piv * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[col * m + k];
                            inv[r * m + k] -= f * inv[col * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        true
    }

    fn duals_for(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (r, &j) in self.basis.iter().enumerate() {
                acc += cost[j] * self.binv[r * m + i];
            }
            *yi = acc;
        }
        y
    }

    /// One simplex iteration against the supplied cost vector. Returns
    /// `Ok(None)` when optimal for that cost.
    fn iterate(&mut self, cost: &[f64]) -> Result<Option<()>, StepError> {
        let y = self.duals_for(cost);
        let use_bland = self.degenerate_pivots >= BLAND_AFTER;
        let mut enter: Option<(usize, f64, bool)> = None; // (var, |d|, increasing)
        for j in 0..self.n_total {
            let (at_lower, at_upper) = match self.state[j] {
                VarState::Basic(_) => continue,
                VarState::AtLower => (true, false),
                VarState::AtUpper => (false, true),
            };
            let mut d = cost[j];
            for i in 0..self.m {
                let a = self.col_entry(j, i);
                if a != 0.0 {
                    d -= y[i] * a;
                }
            }
            let candidate = if at_lower && d > COST_TOL {
                Some((j, d, true))
            } else if at_upper && d < -COST_TOL {
                Some((j, -d, false))
            } else {
                None
            };
            if let Some(c) = candidate {
                if use_bland {
                    enter = Some(c);
                    break;
                }
                if enter.as_ref().map_or(true, |b| c.1 > b.1) {
                    enter = Some(c);
                }
            }
        }
        let Some((j_in, _, increasing)) = enter else {
            return Ok(None);
        };

        let alpha = self.ftran(j_in);
        let span = self.hi[j_in] - self.lo[j_in];
        // Entering moves by t >= 0 with sign `direction`; basic r changes
        // at rate -direction * alpha_r.
        let direction = if increasing { 1.0 } else { -1.0 };
        let row_limit = |r: usize| -> Option<(f64, bool)> {
            let rate = -direction * alpha[r];
            if rate.abs() < PIVOT_TOL {
                return None;
            }
            let b = self.basis[r];
            let v = self.xb[r];
            let (limit, hits_upper) = if rate > 0.0 {
                ((self.hi[b] - v) / rate, true)
            } else {
                ((self.lo[b] - v) / rate, false)
            };
            Some((limit.max(0.0), hits_upper))
        };
        let mut t_max = span;
        for r in 0..self.m {
            if let Some((limit, _)) = row_limit(r) {
                t_max = t_max.min(limit);
            }
        }
        // Among rows blocking within a whisker of the minimum ratio, pivot
        // on the one with the largest magnitude for numerical stability.
        let window = t_max + 1e-9 * (1.0 + t_max.abs());
        let mut leaving: Option<(usize, bool)> = None;
        if t_max < span {
            let mut best_rate = 0.0;
            for r in 0..self.m {
                if let Some((limit, hits_upper)) = row_limit(r) {
                    if limit <= window && alpha[r].abs() > best_rate {
                        best_rate = alpha[r].abs();
                        leaving = Some((r, hits_upper));
                    }
                }
            }
        }

        if t_max.is_infinite() {
            // Trust an unbounded signal only from a fresh factorization.
            if self.pivots_since_refactor > 0 {
                if !self.refactor() {
                    return Err(StepError::Singular);
                }
                self.recompute_xb();
                return Ok(Some(()));
            }
            return Err(StepError::Unbounded);
        }
        if t_max < PIVOT_TOL {
            self.degenerate_pivots += 1;
        }

        match leaving {
            None => {
                // Bound flip: entering crosses its own range, basis unchanged.
                self.state[j_in] = if increasing {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                for r in 0..self.m {
                    self.xb[r] -= direction * alpha[r] * t_max;
                }
            }
            Some((r_out, hits_upper)) => {
                if alpha[r_out].abs() < PIVOT_ACCEPT && self.pivots_since_refactor > 0 {
                    // A small pivot through a stale eta chain amplifies
                    // rounding error; rebuild the inverse and retry. Fresh
                    // factorizations fall through: a genuinely small pivot
                    // is then real data and is cleaned up right after.
                    if !self.refactor() {
                        return Err(StepError::Singular);
                    }
                    self.recompute_xb();
                    self.degenerate_pivots += 1;
                    return Ok(Some(()));
                }
                let j_out = self.basis[r_out];
                let entering_value = self.nonbasic_value(j_in) + direction * t_max;
                for r in 0..self.m {
                    self.xb[r] -= direction * alpha[r] * t_max;
                }
                self.state[j_out] = if hits_upper {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                self.basis[r_out] = j_in;
                self.state[j_in] = VarState::Basic(r_out);
                self.xb[r_out] = entering_value;
                // Eta update of B^{-1} on the pivot column.
                let m = self.m;
                let piv = alpha[r_out];
                if piv.abs() < PIVOT_ACCEPT || self.pivots_since_refactor >= 64 {
                    if !self.refactor() {
                        return Err(StepError::Singular);
                    }
                    self.recompute_xb();
                } else {
                    for k in 0..m {
                        self.binv[r_out * m + k] /= piv;
                    }
                    for r in 0..m {
                        if r != r_out {
                            let f = alpha[r];
                            if f != 0.0 {
                                for k in 0..m {
                                    self.binv[r * m + k] -= f * self.binv[r_out * m + k];
                                }
                            }
                        }
                    }
                    self.pivots_since_refactor += 1;
                }
            }
        }
        Ok(Some(()))
    }

    fn unfreeze_artificials(&mut self) {
        let n_art_base = self.lp.cols.len() + self.m;
        for j in n_art_base..self.n_total {
            self.hi[j] = f64::INFINITY;
        }
    }

    fn infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for r in 0..self.m {
            let b = self.basis[r];
            total += (self.lo[b] - self.xb[r]).max(0.0) + (self.xb[r] - self.hi[b]).max(0.0);
        }
        total
    }

    /// Worst bound violation of the current solution, measured directly
    /// on the original rows and the structural values.
    fn primal_violation(&self) -> f64 {
        let n = self.lp.cols.len();
        let mut worst = 0.0f64;
        for r in 0..self.m {
            let b = self.basis[r];
            worst = worst
                .max(self.lo[b] - self.xb[r])
                .max(self.xb[r] - self.hi[b]);
        }
        for (i, row) in self.lp.rows.iter().enumerate() {
            let mut act = 0.0;
            for j in 0..n {
                let v = self.nonbasic_value(j);
                if v != 0.0 {
                    act += self.lp.cols[j][i] * v;
                }
            }
            worst = worst.max(row.lo - act).max(act - row.hi);
        }
        worst
    }

    fn run(mut self) -> LpOutcome {
        let max_iters = 500 + 60 * (self.n_total + self.m);
        let tolerance = 1e-7 * (1.0 + self.m as f64);
        // Two-phase rounds with a final feasibility audit; a round that
        // ends outside tolerance restarts from the artificial basis under
        // conservative pivot rules before anything is reported optimal.
        let mut phase1_duals: Vec<f64> = vec![0.0; self.m];
        'repair: for repair in 0..4 {
            if repair > 0 {
                self.reset();
                self.degenerate_pivots = BLAND_AFTER;
            }
            // Phase 1: drive the artificials to zero under fixed costs.
            let n_art_base = self.lp.cols.len() + self.m;
            let mut cost1 = vec![0.0; self.n_total];
            for j in n_art_base..self.n_total {
                cost1[j] = -1.0;
            }
            let mut iters = 0;
            loop {
                match self.iterate(&cost1) {
                    Ok(Some(())) => {}
                    Ok(None) => break,
                    // Phase 1 is bounded below; any failure is numeric.
                    Err(_) => continue 'repair,
                }
                iters += 1;
                if iters > max_iters {
                    break;
                }
            }
            phase1_duals = self.duals_for(&cost1);
            let art_mass: f64 = (n_art_base..self.n_total)
                .map(|j| match self.state[j] {
                    VarState::Basic(r) => self.xb[r].abs(),
                    VarState::AtLower => self.lo[j],
                    VarState::AtUpper => self.hi[j],
                })
                .sum();
            if art_mass > FEAS_TOL * (1.0 + self.m as f64) {
                return LpOutcome::Infeasible {
                    residual: art_mass,
                    duals: phase1_duals,
                };
            }
            // Freeze the artificials for phase 2.
            for j in n_art_base..self.n_total {
                self.hi[j] = 0.0;
            }

            // Phase 2.
            let cost = self.cost.clone();
            let mut iters = 0;
            loop {
                match self.iterate(&cost) {
                    Ok(Some(())) => {}
                    Ok(None) => break,
                    Err(StepError::Unbounded) => return LpOutcome::Unbounded,
                    Err(StepError::Singular) => {
                        self.unfreeze_artificials();
                        continue 'repair;
                    }
                }
                iters += 1;
                if iters > max_iters {
                    break; // stalled: the audit below decides whether to retry
                }
            }

            // Audit against the original data, not the factorized state.
            if !self.refactor() {
                self.unfreeze_artificials();
                continue 'repair;
            }
            self.recompute_xb();
            if self.primal_violation() <= tolerance {
                break;
            }
            self.unfreeze_artificials();
        }
        if self.primal_violation() > tolerance {
            return LpOutcome::Infeasible {
                residual: self.infeasibility(),
                duals: phase1_duals,
            };
        }
        let n = self.lp.cols.len();
        let mut x = vec![0.0; n];
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = self.nonbasic_value(j);
        }
        let value: f64 = (0..n).map(|j| self.cost[j] * x[j]).sum();
        let duals = self.duals_for(&self.cost);
        let mut basic_structurals: Vec<usize> =
            self.basis.iter().copied().filter(|&j| j < n).collect();
        basic_structurals.sort_unstable();
        LpOutcome::Optimal(LpSolution {
            value,
            x,
            duals,
            basic_structurals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substream;
    use rand::Rng;

    fn solve_simple(rows: Vec<RowRange>, cols: Vec<(f64, Vec<f64>)>) -> LpOutcome {
        let mut lp = LinearProgram::new(rows);
        for (c, a) in cols {
            lp.add_column(c, a, f64::INFINITY);
        }
        lp.solve()
    }

    #[test]
    fn solves_textbook_lp() {
        // max 3x + 2y s.t. x + y <= 4, x + 3y <= 6
        let out = solve_simple(
            vec![RowRange::at_most(4.0), RowRange::at_most(6.0)],
            vec![(3.0, vec![1.0, 1.0]), (2.0, vec![1.0, 3.0])],
        );
        let s = out.optimal().unwrap();
        assert!((s.value - 12.0).abs() < 1e-9);
        assert!((s.x[0] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn handles_equality_and_ranges() {
        // max x1 s.t. x1 + x2 = 1 and the second row pins x2 to [0.3, 0.6]
        let out = solve_simple(
            vec![RowRange::equal(1.0), RowRange::between(0.3, 0.6)],
            vec![(1.0, vec![1.0, 0.0]), (0.0, vec![1.0, 1.0])],
        );
        let s = out.optimal().unwrap();
        assert!((s.value - 0.7).abs() < 1e-9, "value {}", s.value);
        assert!((s.x[1] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn reports_infeasible_with_residual() {
        let out = solve_simple(
            vec![RowRange::between(2.0, 3.0), RowRange::at_most(1.0)],
            vec![(1.0, vec![1.0, 1.0])],
        );
        match out {
            LpOutcome::Infeasible { residual, .. } => assert!(residual >= 1.0 - 1e-6),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn reports_unbounded() {
        let out = solve_simple(vec![RowRange::at_most(5.0)], vec![(1.0, vec![-1.0])]);
        assert!(matches!(out, LpOutcome::Unbounded));
    }

    #[test]
    fn respects_upper_bounds_via_flips() {
        let mut lp = LinearProgram::new(vec![RowRange::at_most(3.0)]);
        lp.add_column(2.0, vec![1.0], 2.0);
        lp.add_column(1.0, vec![1.0], f64::INFINITY);
        let s = lp.solve().optimal().unwrap();
        assert!((s.value - 5.0).abs() < 1e-9);
        assert!((s.x[0] - 2.0).abs() < 1e-9);
        assert!((s.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duals_price_columns_correctly() {
        // Convexity plus one cap, the same shape as a mixture master.
        let mut lp = LinearProgram::new(vec![RowRange::equal(1.0), RowRange::at_most(0.5)]);
        lp.add_column(1.0, vec![1.0, 1.0], f64::INFINITY);
        lp.add_column(0.4, vec![1.0, 0.0], f64::INFINITY);
        let s = lp.solve().optimal().unwrap();
        assert!((s.value - 0.7).abs() < 1e-9);
        for (c, a) in [(1.0, [1.0, 1.0]), (0.4, [1.0, 0.0])] {
            let d: f64 = c - s.duals[0] * a[0] - s.duals[1] * a[1];
            assert!(d.abs() < 1e-9, "reduced cost {d}");
        }
    }

    /// Brute-force oracle: enumerate every basis and nonbasic bound
    /// assignment for tiny LPs.
    fn brute_force(lp: &LinearProgram) -> Option<f64> {
        let m = lp.rows.len();
        let n = lp.cols.len();
        let total = n + m;
        let mut best: Option<f64> = None;
        let col = |j: usize, i: usize| -> f64 {
            if j < n {
                lp.cols[j][i]
            } else if j - n == i {
                1.0
            } else {
                0.0
            }
        };
        let mut lo = vec![0.0; total];
        let mut hi = vec![f64::INFINITY; total];
        let mut anchor = vec![0.0; m];
        for j in 0..n {
            hi[j] = lp.upper[j];
        }
        for i in 0..m {
            let r = lp.rows[i];
            let b = if r.hi.is_finite() { r.hi } else { r.lo };
            anchor[i] = b;
            lo[n + i] = b - r.hi;
            hi[n + i] = b - r.lo;
        }
        let mut idx = vec![0usize; m];
        fn rec(total: usize, idx: &mut Vec<usize>, depth: usize, start: usize, f: &mut dyn FnMut(&[usize])) {
            if depth == idx.len() {
                f(idx);
                return;
            }
            for k in start..total {
                idx[depth] = k;
                rec(total, idx, depth + 1, k + 1, f);
            }
        }
        rec(total, &mut idx, 0, 0, &mut |basis: &[usize]| {
            let nonbasic: Vec<usize> = (0..total).filter(|j| !basis.contains(j)).collect();
            for mask in 0..(1usize << nonbasic.len()) {
                let mut vals = vec![0.0; total];
                let mut ok = true;
                for (b, &j) in nonbasic.iter().enumerate() {
                    let v = if mask >> b & 1 == 1 { hi[j] } else { lo[j] };
                    if !v.is_finite() {
                        ok = false;
                        break;
                    }
                    vals[j] = v;
                }
                if !ok {
                    continue;
                }
                let mut a = vec![0.0; m * m];
                let mut rhs = anchor.clone();
                for (c, &j) in basis.iter().enumerate() {
                    for i in 0..m {
                        a[i * m + c] = col(j, i);
                    }
                }
                for &j in &nonbasic {
                    for (i, r) in rhs.iter_mut().enumerate() {
                        *r -= col(j, i) * vals[j];
                    }
                }
                if !gauss_solve(&mut a, &mut rhs, m) {
                    continue;
                }
                let mut feasible = true;
                for (c, &j) in basis.iter().enumerate() {
                    vals[j] = rhs[c];
                    if rhs[c] < lo[j] - 1e-7 || rhs[c] > hi[j] + 1e-7 {
                        feasible = false;
                        break;
                    }
                }
                if feasible {
                    let v: f64 = (0..n).map(|j| lp.obj[j] * vals[j]).sum();
                    best = Some(best.map_or(v, |b: f64| b.max(v)));
                }
            }
        });
        best
    }

    fn gauss_solve(a: &mut [f64], rhs: &mut [f64], m: usize) -> bool {
        for c in 0..m {
            let mut piv = c;
            for r in c + 1..m {
                if a[r * m + c].abs() > a[piv * m + c].abs() {
                    piv = r;
                }
            }
            if a[piv * m + c].abs() < 1e-10 {
                return false;
            }
            if piv != c {
                for k in 0..m {
                    a.swap(c * m + k, piv * m + k);
                }
                rhs.swap(c, piv);
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c] / a[c * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                        }
                        rhs[r] -= f * rhs[c];
                    }
                }
            }
        }
        for c in 0..m {
            rhs[c] /= a[c * m + c];
        }
        true
    }

    #[test]
    fn matches_vertex_enumeration_on_random_instances() {
        let mut rng = substream(1234, &[77]);
        let mut checked = 0;
        for _ in 0..200 {
            let m = 1 + rng.gen_range(0..3);
            let n = 1 + rng.gen_range(0..4);
            let mut lp = LinearProgram::new(
                (0..m)
                    .map(|_| match rng.gen_range(0..3) {
                        0 => RowRange::at_most(rng.gen::<f64>() * 4.0),
                        1 => RowRange::equal(rng.gen::<f64>() * 2.0 + 0.2),
                        _ => {
                            let lo = rng.gen::<f64>();
                            RowRange::between(lo, lo + rng.gen::<f64>() * 2.0)
                        }
                    })
                    .collect(),
            );
            for _ in 0..n {
                let coeffs: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() * 2.0 - 0.25).collect();
                let upper = if rng.gen::<bool>() {
                    f64::INFINITY
                } else {
                    rng.gen::<f64>() * 3.0
                };
                lp.add_column(rng.gen::<f64>() * 2.0 - 0.5, coeffs, upper);
            }
            let brute = brute_force(&lp);
            match (lp.solve(), brute) {
                (LpOutcome::Optimal(s), Some(b)) => {
                    assert!(
                        (s.value - b).abs() <= 1e-6 * (1.0 + b.abs()),
                        "simplex {} vs brute {b}",
                        s.value
                    );
                    checked += 1;
                }
                (LpOutcome::Infeasible { .. }, None) => checked += 1,
                (LpOutcome::Unbounded, _) => {}
                (LpOutcome::Optimal(s), None) => {
                    panic!("simplex found {} where brute force saw infeasible", s.value)
                }
                (LpOutcome::Infeasible { residual, .. }, Some(b)) => {
                    panic!("simplex infeasible (residual {residual}) but brute force found {b}")
                }
            }
        }
        assert!(checked > 100, "only {checked} conclusive instances");
    }
}

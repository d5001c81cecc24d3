//! Staircase pricing space: the reduced-cost landscape over `(z, w)`.
//!
//! Widths and the first height increment are searched in log coordinates
//! (restarts then cover many orders of magnitude for free); the remaining
//! height increments are linear with a clamp at zero, so searches can
//! switch steps off. Restart `r` uses a step count from a fixed cycle
//! biased toward few steps — an atom with fewer distinct steps is the
//! same set as one padded with zero increments, so small-dimension
//! descents still search inside the full step budget.

use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::engine::PricingSource;
use super::{evaluate_column, ColumnEvaluation, MomentProblem, PricingBudget};
use crate::geometry::StaircaseAtom;

const STEP_CYCLE: [usize; 10] = [1, 2, 1, 3, 2, 4, 1, 6, 2, 8];

pub(crate) struct StaircaseSpace<'a> {
    pub problem: &'a MomentProblem,
}

impl StaircaseSpace<'_> {
    fn steps_for(&self, restart: usize) -> usize {
        STEP_CYCLE[restart % STEP_CYCLE.len()].min(self.problem.k)
    }
}

impl PricingSource for StaircaseSpace<'_> {
    type Atom = StaircaseAtom;

    fn evaluate(&self, atom: &StaircaseAtom) -> Option<ColumnEvaluation> {
        evaluate_column(self.problem, atom).ok()
    }

    fn init_params(&self, restart: usize, rng: &mut ChaCha8Rng, budget: &PricingBudget) -> Vec<f64> {
        let s = self.steps_for(restart);
        let hi = budget.box_bound;
        let lo = (1e-6 * hi).max(budget.epsilon);
        let log_span = (hi.ln() - lo.ln()).max(1e-9);
        let mut params = Vec::with_capacity(2 * s);
        for _ in 0..s {
            params.push(lo.ln() + rng.gen::<f64>() * log_span);
        }
        params.push(lo.ln() + rng.gen::<f64>() * log_span); // w[0], log scale
        for _ in 1..s {
            // Half the starts switch the extra increment off entirely.
            if rng.gen::<bool>() {
                params.push(0.0);
            } else {
                params.push((lo.ln() + rng.gen::<f64>() * log_span).exp());
            }
        }
        params
    }

    fn decode(&self, restart: usize, params: &[f64], budget: &PricingBudget) -> Option<StaircaseAtom> {
        let s = self.steps_for(restart);
        let hi = budget.box_bound;
        let eps = budget.epsilon;
        let z: Vec<f64> = params[..s].iter().map(|t| t.exp().clamp(eps, hi)).collect();
        let mut w = Vec::with_capacity(s);
        w.push(params[s].exp().clamp(eps, hi));
        for t in &params[s + 1..2 * s] {
            w.push(t.clamp(0.0, hi));
        }
        StaircaseAtom::new(self.problem.x0, self.problem.y0, z, w).ok()
    }

    fn lex_cmp(&self, a: &StaircaseAtom, b: &StaircaseAtom) -> Ordering {
        a.lex_cmp(b)
    }
}

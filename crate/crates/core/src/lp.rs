//! Dense two-phase primal simplex for small linear programs of the form
//!
//! ```text
//! minimize    c·x
//! subject to  A x <= b
//!             E x  = d
//!             0 <= x <= u      (u may be +inf)
//! ```
//!
//! Upper bounds are handled by complementing variables (`x = u - x'`) so every
//! nonbasic variable sits at zero. Pivoting uses Dantzig's rule and switches to
//! Bland's smallest-index rule during runs of degenerate pivots, which rules
//! out cycling. The solver is deterministic: identical input bits give
//! identical output bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primal feasibility tolerance (absolute, problem units).
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Reduced-cost tolerance for optimality.
pub const OPTIMALITY_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_STEP: f64 = 1e-12;
const BLAND_AFTER: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub upper: Vec<f64>,
    /// Rows of the form `terms · x <= rhs`.
    pub inequalities: Vec<LinearConstraint>,
    /// Rows of the form `terms · x == rhs`.
    pub equalities: Vec<LinearConstraint>,
}

impl LpProblem {
    /// `n` nonnegative variables with zero cost and no upper bound.
    pub fn new(n: usize) -> Self {
        LpProblem {
            objective: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.inequalities.len() + self.equalities.len()
    }

    pub fn add_le(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.inequalities.push(LinearConstraint { terms, rhs });
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearConstraint { terms, rhs });
    }

    /// Checks dimensions and that every number is finite (bounds may be +inf).
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.upper.len() != n {
            return Err(Error::LengthMismatch {
                what: "upper bounds".into(),
                expected: n,
                actual: self.upper.len(),
            });
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("objective coefficient {j} is not finite")));
        }
        if let Some(j) = self.upper.iter().position(|u| u.is_nan() || *u < 0.0) {
            return Err(Error::invalid(format!("upper bound {j} is negative or NaN")));
        }
        for (kind, rows) in [("inequality", &self.inequalities), ("equality", &self.equalities)] {
            for (r, row) in rows.iter().enumerate() {
                if !row.rhs.is_finite() {
                    return Err(Error::invalid(format!("{kind} {r} has a non-finite rhs")));
                }
                for &(j, a) in &row.terms {
                    if j >= n {
                        return Err(Error::invalid(format!("{kind} {r} references variable {j}")));
                    }
                    if !a.is_finite() {
                        return Err(Error::invalid(format!("{kind} {r} has a non-finite coefficient")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Row multipliers: inequalities first (all `<= 0`), then equalities.
    pub duals: Vec<f64>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationSite {
    LowerBound(usize),
    UpperBound(usize),
    Inequality(usize),
    Equality(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_violation: f64,
    pub worst: Option<ViolationSite>,
}

impl ResidualReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Largest violation of any bound or row by `x`.
pub fn check_feasible(p: &LpProblem, x: &[f64]) -> Result<ResidualReport> {
    if x.len() != p.num_vars() {
        return Err(Error::LengthMismatch {
            what: "LP point".into(),
            expected: p.num_vars(),
            actual: x.len(),
        });
    }
    let mut report = ResidualReport {
        max_violation: 0.0,
        worst: None,
    };
    let mut note = |v: f64, site: ViolationSite| {
        if v > report.max_violation || (v.is_nan() && report.max_violation.is_finite()) {
            report.max_violation = if v.is_nan() { f64::INFINITY } else { v };
            report.worst = Some(site);
        }
    };
    for (j, (&v, &u)) in x.iter().zip(&p.upper).enumerate() {
        note(-v, ViolationSite::LowerBound(j));
        note(v - u, ViolationSite::UpperBound(j));
    }
    let lhs = |row: &LinearConstraint| row.terms.iter().map(|&(j, a)| a * x[j]).sum::<f64>();
    for (r, row) in p.inequalities.iter().enumerate() {
        note(lhs(row) - row.rhs, ViolationSite::Inequality(r));
    }
    for (r, row) in p.equalities.iter().enumerate() {
        note((lhs(row) - row.rhs).abs(), ViolationSite::Equality(r));
    }
    Ok(report)
}

/// Solves `p` to optimality. Never panics on infeasible or unbounded input;
/// those outcomes are reported through [`LpSolution::status`].
pub fn solve(p: &LpProblem) -> LpSolution {
    Tableau::build(p).run(p)
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
}

struct Tableau {
    rows: usize,
    width: usize,
    n: usize,
    first_artificial: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    dj: Vec<f64>,
    basis: Vec<usize>,
    upper: Vec<f64>,
    flipped: Vec<bool>,
    row_sign: Vec<f64>,
    /// Column whose original form is the unit vector of each row, with the
    /// sign relating its reduced cost to the row dual.
    unit_col: Vec<(usize, f64)>,
    iterations: usize,
    degenerate_run: usize,
}

impl Tableau {
    fn build(p: &LpProblem) -> Self {
        let n = p.num_vars();
        let mi = p.inequalities.len();
        let m = p.num_rows();

        let rows_iter = p
            .inequalities
            .iter()
            .map(|r| (r, true))
            .chain(p.equalities.iter().map(|r| (r, false)));
        let mut row_sign = Vec::with_capacity(m);
        let mut needs_art = Vec::with_capacity(m);
        for (row, is_ineq) in rows_iter.clone() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            row_sign.push(sign);
            needs_art.push(!(is_ineq && sign > 0.0));
        }
        let n_art = needs_art.iter().filter(|&&a| a).count();
        let first_artificial = n + mi;
        let width = first_artificial + n_art;

        let mut t = vec![0.0; m * width];
        let mut beta = vec![0.0; m];
        let mut basis = vec![0; m];
        let mut unit_col = vec![(0, 0.0); m];
        let mut art = first_artificial;
        for (r, (row, is_ineq)) in rows_iter.enumerate() {
            let sign = row_sign[r];
            let line = &mut t[r * width..(r + 1) * width];
            for &(j, a) in &row.terms {
                line[j] += sign * a;
            }
            beta[r] = sign * row.rhs;
            if is_ineq {
                let slack = n + r;
                line[slack] = sign;
                unit_col[r] = (slack, -1.0);
                basis[r] = slack;
            }
            if needs_art[r] {
                line[art] = 1.0;
                basis[r] = art;
                if !is_ineq {
                    unit_col[r] = (art, -sign);
                }
                art += 1;
            }
        }

        let mut upper = p.upper.clone();
        upper.resize(width, f64::INFINITY);

        Tableau {
            rows: m,
            width,
            n,
            first_artificial,
            t,
            beta,
            dj: vec![0.0; width],
            basis,
            upper,
            flipped: vec![false; width],
            row_sign,
            unit_col,
            iterations: 0,
            degenerate_run: 0,
        }
    }

    fn run(mut self, p: &LpProblem) -> LpSolution {
        let max_iter = 200 * (self.rows + self.width) + 1000;
        let n_art = self.width - self.first_artificial;

        if n_art > 0 {
            self.price(|j, fa| if j >= fa { 1.0 } else { 0.0 });
            match self.iterate(max_iter) {
                Some(Step::Optimal) => {}
                // Phase one is bounded below by zero; only round-off gets here.
                Some(_) => return self.finish(p, LpStatus::Infeasible),
                None => return self.finish(p, LpStatus::IterationLimit),
            }
            let infeasibility: f64 = (0..self.rows)
                .filter(|&r| self.basis[r] >= self.first_artificial)
                .map(|r| self.beta[r].max(0.0))
                .sum();
            let scale = 1.0 + self.beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeasibility > FEASIBILITY_TOL * scale {
                return self.finish(p, LpStatus::Infeasible);
            }
            self.drive_out_artificials();
        }

        let cost: Vec<f64> = (0..self.width)
            .map(|j| {
                let c = if j < self.n { p.objective[j] } else { 0.0 };
                if self.flipped[j] {
                    -c
                } else {
                    c
                }
            })
            .collect();
        self.price(|j, _| cost[j]);
        self.degenerate_run = 0;
        let status = match self.iterate(max_iter) {
            Some(Step::Optimal) => LpStatus::Optimal,
            Some(Step::Unbounded) => LpStatus::Unbounded,
            Some(Step::Moved) => unreachable!(),
            None => LpStatus::IterationLimit,
        };
        self.finish(p, status)
    }

    /// Recomputes reduced costs `d_j = c_j - c_B B^-1 a_j` for the given costs.
    fn price(&mut self, cost: impl Fn(usize, usize) -> f64) {
        let fa = self.first_artificial;
        for j in 0..self.width {
            self.dj[j] = cost(j, fa);
        }
        for r in 0..self.rows {
            let cb = cost(self.basis[r], fa);
            if cb != 0.0 {
                let line = &self.t[r * self.width..(r + 1) * self.width];
                for (d, a) in self.dj.iter_mut().zip(line) {
                    *d -= cb * a;
                }
            }
        }
        for r in 0..self.rows {
            self.dj[self.basis[r]] = 0.0;
        }
    }

    fn iterate(&mut self, max_iter: usize) -> Option<Step> {
        loop {
            if self.iterations >= max_iter {
                return None;
            }
            match self.step() {
                Step::Moved => self.iterations += 1,
                done => return Some(done),
            }
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.first_artificial {
            let d = self.dj[j];
            if d >= -OPTIMALITY_TOL || self.upper[j] == 0.0 {
                continue;
            }
            if bland {
                // Basic columns have d = 0, so the first candidate is nonbasic.
                return Some(j);
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        best.map(|(j, _)| j)
    }

    fn step(&mut self) -> Step {
        let bland = self.degenerate_run >= BLAND_AFTER;
        let Some(j) = self.entering(bland) else {
            return Step::Optimal;
        };

        // Ratio test. `leave = None` means the entering variable hits its own bound.
        let mut theta = self.upper[j];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_alpha = 0.0f64;
        for r in 0..self.rows {
            let alpha = self.t[r * self.width + j];
            let b = self.basis[r];
            let (limit, to_upper) = if alpha > PIVOT_TOL {
                (self.beta[r].max(0.0) / alpha, false)
            } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                ((self.upper[b] - self.beta[r]).max(0.0) / -alpha, true)
            } else {
                continue;
            };
            let better = match leave {
                _ if limit < theta - 1e-12 => true,
                Some((lr, _)) if limit <= theta + 1e-12 => {
                    if bland {
                        b < self.basis[lr]
                    } else {
                        alpha.abs() > leave_alpha.abs()
                    }
                }
                // Prefer a pivot over a bound flip only when strictly tighter.
                _ => false,
            };
            if better {
                theta = limit;
                leave = Some((r, to_upper));
                leave_alpha = alpha;
            }
        }

        if theta.is_infinite() {
            return Step::Unbounded;
        }
        if theta <= DEGENERATE_STEP {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }

        match leave {
            None => self.complement_column(j),
            Some((r, to_upper)) => {
                if to_upper {
                    self.complement_basic(r);
                }
                self.pivot(r, j);
            }
        }
        Step::Moved
    }

    /// Substitutes `x_j = u_j - x_j'` for a nonbasic column.
    fn complement_column(&mut self, j: usize) {
        let u = self.upper[j];
        for r in 0..self.rows {
            let a = &mut self.t[r * self.width + j];
            self.beta[r] -= *a * u;
            *a = -*a;
        }
        self.dj[j] = -self.dj[j];
        self.flipped[j] = !self.flipped[j];
    }

    /// Substitutes `x_B = u_B - x_B'` for the basic variable of row `r`.
    fn complement_basic(&mut self, r: usize) {
        let b = self.basis[r];
        let line = &mut self.t[r * self.width..(r + 1) * self.width];
        for a in line.iter_mut() {
            *a = -*a;
        }
        line[b] = 1.0;
        self.beta[r] = self.upper[b] - self.beta[r];
        self.flipped[b] = !self.flipped[b];
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.width;
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        let inv = 1.0 / prow[j];
        for a in prow.iter_mut() {
            *a *= inv;
        }
        prow[j] = 1.0;
        self.beta[r] *= inv;
        let br = self.beta[r];

        let eliminate = |line: &mut [f64], rhs: &mut f64| {
            let f = line[j];
            if f != 0.0 {
                for (a, p) in line.iter_mut().zip(prow.iter()) {
                    *a -= f * p;
                }
                line[j] = 0.0;
                *rhs -= f * br;
            }
        };
        for (i, line) in before.chunks_exact_mut(w).enumerate() {
            eliminate(line, &mut self.beta[i]);
        }
        for (i, line) in after.chunks_exact_mut(w).enumerate() {
            eliminate(line, &mut self.beta[r + 1 + i]);
        }
        let f = self.dj[j];
        if f != 0.0 {
            for (d, p) in self.dj.iter_mut().zip(prow.iter()) {
                *d -= f * p;
            }
            self.dj[j] = 0.0;
        }
        self.basis[r] = j;
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.rows {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let line = &self.t[r * self.width..(r + 1) * self.width];
            let mut best: Option<(usize, f64)> = None;
            for (j, &a) in line[..self.first_artificial].iter().enumerate() {
                if a.abs() > 1e-9 && best.is_none_or(|(_, ba)| a.abs() > ba) {
                    best = Some((j, a.abs()));
                }
            }
            if let Some((j, _)) = best {
                self.beta[r] = 0.0;
                self.pivot(r, j);
            }
        }
    }

    fn finish(&self, p: &LpProblem, status: LpStatus) -> LpSolution {
        let mut value = vec![0.0; self.width];
        for r in 0..self.rows {
            value[self.basis[r]] = self.beta[r];
        }
        let x: Vec<f64> = (0..self.n)
            .map(|j| {
                let v = if self.flipped[j] { self.upper[j] - value[j] } else { value[j] };
                // Snap round-off at the bounds.
                if v.abs() < 1e-13 {
                    0.0
                } else if self.upper[j].is_finite() && (v - self.upper[j]).abs() < 1e-13 {
                    self.upper[j]
                } else {
                    v
                }
            })
            .collect();
        let duals = (0..self.rows)
            .map(|r| {
                let (col, sign) = self.unit_col[r];
                debug_assert!(self.row_sign[r].abs() == 1.0);
                sign * self.dj[col]
            })
            .collect();
        LpSolution {
            status,
            objective: p.objective_value(&x),
            x,
            iterations: self.iterations,
            duals,
        }
    }
}

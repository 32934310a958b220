//! Two-phase revised simplex with bounded variables.
//!
//! Variable bounds never become rows: nonbasic variables sit at either bound
//! and the ratio test accounts for both the basic variables' bounds and the
//! entering variable's own range (bound flips). The basis inverse is kept
//! explicitly and updated by elementary row operations, with a fresh
//! Gauss-Jordan inversion every [`REFACTOR_EVERY`] pivots.

use super::{LpError, LpProblem, LpSolution, LpStatus, Relation, SolverOptions};

const REFACTOR_EVERY: usize = 100;
/// Smallest pivot magnitude accepted in the ratio test.
const PIVOT_EPS: f64 = 1e-9;
/// Steps shorter than this count as degenerate.
const DEGENERATE_STEP: f64 = 1e-12;

pub(super) struct Outcome {
    pub solution: LpSolution,
    #[allow(dead_code)]
    pub iterations: usize,
    /// Largest reduced-cost violation at termination; at most `tol_pivot`
    /// for optimal solutions.
    #[allow(dead_code)]
    pub dual_infeasibility: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

enum Step {
    Optimal,
    Unbounded,
    Pivoted,
}

struct Tableau {
    m: usize,
    n_struct: usize,
    /// Column-compressed constraint matrix (structural, slack, artificial).
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    at_upper: Vec<bool>,
    basis: Vec<usize>,
    /// Basis position of each variable, `usize::MAX` when nonbasic.
    pos: Vec<usize>,
    artificial_start: usize,
    /// Dense row-major basis inverse.
    binv: Vec<f64>,
    y: Vec<f64>,
    tol_feas: f64,
    tol_dual: f64,
    iterations: usize,
    max_iterations: usize,
    since_refactor: usize,
    degenerate_run: usize,
}

impl Tableau {
    fn build(p: &LpProblem, opts: &SolverOptions) -> Self {
        let m = p.n_rows();
        let n = p.n_vars();

        let scale: Vec<f64> = p
            .rows()
            .iter()
            .map(|r| {
                let mx = r.coeffs.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
                if mx > 0.0 { 1.0 / mx } else { 1.0 }
            })
            .collect();

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in p.rows().iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a * scale[i]));
                }
            }
        }
        let b: Vec<f64> = p.rows().iter().zip(&scale).map(|(r, s)| r.rhs * s).collect();

        let mut lo = p.lower().to_vec();
        let mut up = p.upper().to_vec();
        let mut x = lo.clone();

        let mut residual = b.clone();
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                residual[i] -= a * x[j];
            }
        }

        let mut basis = vec![usize::MAX; m];
        let mut basis_coef = vec![1.0; m];
        for (i, row) in p.rows().iter().enumerate() {
            let sigma = match row.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            let j = cols.len();
            cols.push(vec![(i, sigma)]);
            lo.push(0.0);
            up.push(f64::INFINITY);
            let value = sigma * residual[i];
            if value >= 0.0 {
                x.push(value);
                basis[i] = j;
                basis_coef[i] = sigma;
            } else {
                x.push(0.0);
            }
        }
        let artificial_start = cols.len();
        for i in 0..m {
            if basis[i] != usize::MAX {
                continue;
            }
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            let j = cols.len();
            cols.push(vec![(i, sign)]);
            lo.push(0.0);
            up.push(f64::INFINITY);
            x.push(residual[i].abs());
            basis[i] = j;
            basis_coef[i] = sign;
        }

        let total = cols.len();
        let mut col_ptr = Vec::with_capacity(total + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for col in &cols {
            for &(i, a) in col {
                row_idx.push(i);
                vals.push(a);
            }
            col_ptr.push(row_idx.len());
        }

        let mut pos = vec![usize::MAX; total];
        for (i, &j) in basis.iter().enumerate() {
            pos[j] = i;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0 / basis_coef[i];
        }

        let max_iterations = opts.max_iterations.unwrap_or(50 * (n + m));
        Tableau {
            m,
            n_struct: n,
            col_ptr,
            row_idx,
            vals,
            b,
            lo,
            up,
            cost: vec![0.0; total],
            x,
            at_upper: vec![false; total],
            basis,
            pos,
            artificial_start,
            binv,
            y: vec![0.0; m],
            tol_feas: opts.tol_feas,
            tol_dual: opts.tol_pivot,
            iterations: 0,
            max_iterations,
            since_refactor: 0,
            degenerate_run: 0,
        }
    }

    fn n_total(&self) -> usize {
        self.col_ptr.len() - 1
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        self.cost[j] - self.column(j).map(|(i, a)| self.y[i] * a).sum::<f64>()
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &j) in self.basis.iter().enumerate() {
            let c = self.cost[j];
            if c != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, &bk) in y.iter_mut().zip(row) {
                    *yk += c * bk;
                }
            }
        }
        self.y = y;
    }

    fn set_phase(&mut self, phase: Phase, objective: &[f64]) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        match phase {
            Phase::One => {
                for j in self.artificial_start..self.n_total() {
                    self.cost[j] = -1.0;
                }
            }
            Phase::Two => self.cost[..self.n_struct].copy_from_slice(objective),
        }
        self.recompute_duals();
        self.degenerate_run = 0;
    }

    /// Rebuilds the basis inverse from scratch and recomputes basic values
    /// and duals.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        if m == 0 {
            return Ok(());
        }
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (k, &j) in self.basis.iter().enumerate() {
            for (i, a) in self.column(j) {
                aug[i * w + k] = a;
            }
        }
        for i in 0..m {
            aug[i * w + m + i] = 1.0;
        }
        let mut nz = Vec::with_capacity(w);
        for k in 0..m {
            let mut p = k;
            let mut best = aug[k * w + k].abs();
            for i in k + 1..m {
                let v = aug[i * w + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < 1e-12 {
                return Err(LpError::Backend("singular basis during refactorization".into()));
            }
            if p != k {
                for c in 0..w {
                    aug.swap(k * w + c, p * w + c);
                }
            }
            let inv = 1.0 / aug[k * w + k];
            nz.clear();
            for c in 0..w {
                let v = aug[k * w + c];
                if v != 0.0 {
                    aug[k * w + c] = v * inv;
                    nz.push(c);
                }
            }
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = aug[i * w + k];
                if f == 0.0 {
                    continue;
                }
                for &c in &nz {
                    aug[i * w + c] -= f * aug[k * w + c];
                }
                aug[i * w + k] = 0.0;
            }
        }
        // Row k of the reduced identity block is row k of B^-1, where basis
        // position k corresponds to column k of B.
        for k in 0..m {
            self.binv[k * m..(k + 1) * m].copy_from_slice(&aug[k * w + m..(k + 1) * w]);
        }

        let mut rhs = self.b.clone();
        for j in 0..self.n_total() {
            if self.pos[j] == usize::MAX && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, a) in self.column(j) {
                    rhs[i] -= a * xj;
                }
            }
        }
        for k in 0..m {
            let row = &self.binv[k * m..(k + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, r)| a * r).sum();
            self.x[self.basis[k]] = v;
        }
        self.recompute_duals();
        self.since_refactor = 0;
        Ok(())
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n_total() {
            if self.pos[j] != usize::MAX || self.up[j] <= self.lo[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let eligible = if self.at_upper[j] { d < -self.tol_dual } else { d > self.tol_dual };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    fn step(&mut self) -> Result<Step, LpError> {
        let bland = self.degenerate_run > 3 * self.m;
        let Some((q, dq)) = self.choose_entering(bland) else {
            return Ok(Step::Optimal);
        };
        if self.iterations >= self.max_iterations {
            return Err(LpError::IterationLimit {
                limit: self.max_iterations,
            });
        }
        self.iterations += 1;

        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (k, a) in self.column(q) {
            for (i, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[i * m + k] * a;
            }
        }
        let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

        // Harris two-pass ratio test. `rate[i]` is the change of basic
        // variable i per unit step.
        let tol = self.tol_feas;
        let mut theta_max = f64::INFINITY;
        for (i, &a) in alpha.iter().enumerate() {
            let rate = -dir * a;
            let v = self.basis[i];
            if rate < -PIVOT_EPS {
                theta_max = theta_max.min((self.x[v] - self.lo[v] + tol) / -rate);
            } else if rate > PIVOT_EPS && self.up[v].is_finite() {
                theta_max = theta_max.min((self.up[v] + tol - self.x[v]) / rate);
            }
        }
        let flip = self.up[q] - self.lo[q];
        if theta_max.is_infinite() && flip.is_infinite() {
            return Ok(Step::Unbounded);
        }

        let mut leave: Option<(usize, f64)> = None;
        if flip > theta_max {
            let mut best_mag = 0.0;
            let mut best_ratio = f64::INFINITY;
            for (i, &a) in alpha.iter().enumerate() {
                let rate = -dir * a;
                let v = self.basis[i];
                let ratio = if rate < -PIVOT_EPS {
                    (self.x[v] - self.lo[v]) / -rate
                } else if rate > PIVOT_EPS && self.up[v].is_finite() {
                    (self.up[v] - self.x[v]) / rate
                } else {
                    continue;
                };
                if bland {
                    let better = ratio < best_ratio - DEGENERATE_STEP
                        || (ratio <= best_ratio + DEGENERATE_STEP
                            && leave.is_some_and(|(r, _)| v < self.basis[r]));
                    if leave.is_none() || better {
                        best_ratio = ratio;
                        leave = Some((i, ratio.max(0.0)));
                    }
                } else if ratio <= theta_max && rate.abs() > best_mag {
                    best_mag = rate.abs();
                    leave = Some((i, ratio.max(0.0)));
                }
            }
        }

        let theta = match leave {
            Some((_, ratio)) => ratio,
            None => flip,
        };
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let v = self.basis[i];
                self.x[v] -= dir * theta * a;
            }
        }
        self.x[q] += dir * theta;

        if theta <= DEGENERATE_STEP {
            self.degenerate_run += 1;
        } else {
            self.degenerate_run = 0;
        }

        let Some((r, _)) = leave else {
            self.at_upper[q] = !self.at_upper[q];
            self.x[q] = if self.at_upper[q] { self.up[q] } else { self.lo[q] };
            return Ok(Step::Pivoted);
        };

        let out = self.basis[r];
        let rate_r = -dir * alpha[r];
        if rate_r < 0.0 {
            self.x[out] = self.lo[out];
            self.at_upper[out] = false;
        } else {
            self.x[out] = self.up[out];
            self.at_upper[out] = true;
        }
        if out >= self.artificial_start {
            // artificials never re-enter once driven out
            self.up[out] = 0.0;
            self.x[out] = 0.0;
            self.at_upper[out] = false;
        }
        self.pos[out] = usize::MAX;
        self.basis[r] = q;
        self.pos[q] = r;
        self.at_upper[q] = false;

        let ar = alpha[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        let mut nz = Vec::new();
        for (c, v) in pivot_row.iter_mut().enumerate() {
            if *v != 0.0 {
                *v /= ar;
                nz.push(c);
            }
        }
        for (i, &a) in alpha.iter().enumerate() {
            if i == r || a == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut before[i * m..(i + 1) * m]
            } else {
                &mut after[(i - r - 1) * m..(i - r) * m]
            };
            for &c in &nz {
                row[c] -= a * pivot_row[c];
            }
        }
        for &c in &nz {
            self.y[c] += dq * pivot_row[c];
        }

        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        }
        Ok(Step::Pivoted)
    }

    fn run(&mut self) -> Result<Step, LpError> {
        loop {
            match self.step()? {
                Step::Pivoted => continue,
                done => return Ok(done),
            }
        }
    }

    fn dual_infeasibility(&self) -> f64 {
        (0..self.n_total())
            .filter(|&j| self.pos[j] == usize::MAX && self.up[j] > self.lo[j])
            .map(|j| {
                let d = self.reduced_cost(j);
                if self.at_upper[j] { (-d).max(0.0) } else { d.max(0.0) }
            })
            .fold(0.0, f64::max)
    }
}

pub(super) fn solve(p: &LpProblem, opts: &SolverOptions) -> Result<Outcome, LpError> {
    let mut t = Tableau::build(p, opts);
    let done = |status: LpStatus, t: &Tableau, dual: f64| {
        let x = t.x[..t.n_struct].to_vec();
        let objective_value = if status == LpStatus::Optimal { p.objective_value(&x) } else { f64::NAN };
        Outcome {
            solution: LpSolution {
                status,
                x,
                objective_value,
            },
            iterations: t.iterations,
            dual_infeasibility: dual,
        }
    };

    if t.artificial_start < t.n_total() {
        t.set_phase(Phase::One, p.objective());
        t.run()?;
        t.refactor()?;
        let worst = (t.artificial_start..t.n_total()).map(|j| t.x[j]).fold(0.0, f64::max);
        if worst > t.tol_feas {
            return Ok(done(LpStatus::Infeasible, &t, f64::NAN));
        }
        for j in t.artificial_start..t.n_total() {
            t.up[j] = 0.0;
            if t.pos[j] == usize::MAX {
                t.x[j] = 0.0;
            }
        }
    }

    t.set_phase(Phase::Two, p.objective());
    loop {
        match t.run()? {
            Step::Unbounded => return Ok(done(LpStatus::Unbounded, &t, f64::NAN)),
            _ => {
                t.refactor()?;
                // Refactoring can expose reduced costs that drifted across the
                // tolerance; keep pivoting until a clean factorization agrees.
                if t.choose_entering(false).is_none() {
                    break;
                }
            }
        }
    }
    let dual = t.dual_infeasibility();
    Ok(done(LpStatus::Optimal, &t, dual))
}

#[cfg(test)]
pub(super) fn solve_with_certificate(p: &LpProblem, opts: &SolverOptions) -> Result<(LpSolution, f64), LpError> {
    solve(p, opts).map(|o| (o.solution, o.dual_infeasibility))
}

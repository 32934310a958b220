use super::{LpError, LpProblem, LpSolution, LpStatus, Relation, Row, SolverOptions};

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so component order is stable
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Eliminates fixed variables, splits the remainder into independent blocks
/// and solves each block with `solve_block`.
///
/// Within a block, variables and rows keep their original relative order.
pub(super) fn solve_decomposed<F>(problem: &LpProblem, options: &SolverOptions, solve_block: F) -> Result<LpSolution, LpError>
where
    F: Fn(&LpProblem) -> Result<LpSolution, LpError>,
{
    let n = problem.n_vars();
    let lower = problem.lower();
    let upper = problem.upper();
    let fixed: Vec<bool> = (0..n).map(|j| lower[j] == upper[j]).collect();
    let mut x: Vec<f64> = lower.to_vec();

    let fail = |status: LpStatus, x: Vec<f64>| LpSolution {
        status,
        objective_value: f64::NAN,
        x,
    };

    // Reduce rows to their free part.
    let mut reduced: Vec<Option<Row>> = Vec::with_capacity(problem.n_rows());
    for row in problem.rows() {
        let mut rhs = row.rhs;
        let mut coeffs = Vec::with_capacity(row.coeffs.len());
        let mut scale: f64 = 0.0;
        for &(j, a) in &row.coeffs {
            scale = scale.max(a.abs());
            if a == 0.0 {
                continue;
            }
            if fixed[j] {
                rhs -= a * lower[j];
            } else {
                coeffs.push((j, a));
            }
        }
        if coeffs.is_empty() {
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let slack = rhs / scale;
            let ok = match row.relation {
                Relation::Eq => slack.abs() <= options.tol_feas,
                Relation::Le => slack >= -options.tol_feas,
                Relation::Ge => slack <= options.tol_feas,
            };
            if !ok {
                return Ok(fail(LpStatus::Infeasible, x));
            }
            reduced.push(None);
        } else {
            reduced.push(Some(Row {
                coeffs,
                relation: row.relation,
                rhs,
            }));
        }
    }

    let mut sets = DisjointSet::new(n);
    let mut in_row = vec![false; n];
    for row in reduced.iter().flatten() {
        let first = row.coeffs[0].0;
        for &(j, _) in &row.coeffs {
            in_row[j] = true;
            sets.union(first, j);
        }
    }

    // Variables untouched by any row are set from their objective sign.
    let objective = problem.objective();
    let mut unbounded = false;
    for j in 0..n {
        if fixed[j] || in_row[j] {
            continue;
        }
        if objective[j] > 0.0 {
            if upper[j].is_finite() {
                x[j] = upper[j];
            } else {
                unbounded = true;
            }
        }
    }

    // Group blocks by root; roots are the smallest index in each block.
    let mut block_of = vec![usize::MAX; n];
    let mut blocks: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for j in 0..n {
        if fixed[j] || !in_row[j] {
            continue;
        }
        let root = sets.find(j);
        if block_of[root] == usize::MAX {
            block_of[root] = blocks.len();
            blocks.push((Vec::new(), Vec::new()));
        }
        let b = block_of[root];
        block_of[j] = b;
        blocks[b].0.push(j);
    }
    for (i, row) in reduced.iter().enumerate() {
        if let Some(row) = row {
            let b = block_of[sets.find(row.coeffs[0].0)];
            blocks[b].1.push(i);
        }
    }

    let mut local = vec![usize::MAX; n];
    let mut infeasible = false;
    for (vars, rows) in &blocks {
        let mut sub = LpProblem::new();
        for (k, &j) in vars.iter().enumerate() {
            local[j] = k;
            sub.add_var(problem.var_name(j), lower[j], upper[j], objective[j]);
        }
        for &i in rows {
            let row = reduced[i].as_ref().expect("block rows are nonempty");
            let coeffs = row.coeffs.iter().map(|&(j, a)| (local[j], a)).collect();
            sub.add_row(coeffs, row.relation, row.rhs);
        }
        let solved = solve_block(&sub)?;
        match solved.status {
            LpStatus::Optimal => {
                for (k, &j) in vars.iter().enumerate() {
                    x[j] = solved.x[k];
                }
            }
            LpStatus::Infeasible => infeasible = true,
            LpStatus::Unbounded => unbounded = true,
        }
        if infeasible {
            break;
        }
    }

    if infeasible {
        return Ok(fail(LpStatus::Infeasible, x));
    }
    if unbounded {
        return Ok(fail(LpStatus::Unbounded, x));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: problem.objective_value(&x),
        x,
    })
}

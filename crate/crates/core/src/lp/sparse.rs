//! Adapter onto the `microlp` sparse simplex.

use microlp::{ComparisonOp, Error as MicroError, OptimizationDirection, Problem};

use super::{LpError, LpProblem, LpSolution, LpStatus, Relation};

pub(super) fn solve(p: &LpProblem) -> Result<LpSolution, LpError> {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..p.n_vars())
        .map(|j| problem.add_var(p.objective()[j], (p.lower()[j], p.upper()[j])))
        .collect();
    for row in p.rows() {
        let op = match row.relation {
            Relation::Eq => ComparisonOp::Eq,
            Relation::Le => ComparisonOp::Le,
            Relation::Ge => ComparisonOp::Ge,
        };
        let terms: Vec<_> = row.coeffs.iter().map(|&(j, a)| (vars[j], a)).collect();
        problem.add_constraint(terms.as_slice(), op, row.rhs);
    }

    let failed = |status| LpSolution {
        status,
        x: p.lower().to_vec(),
        objective_value: f64::NAN,
    };
    match problem.solve() {
        Ok(outcome) => {
            let solution = outcome
                .into_solution()
                .map_err(|e| LpError::Backend(format!("interrupted: {:?}", e.termination_reason())))?;
            let x: Vec<f64> = vars.iter().map(|&v| solution.var_value_raw(v)).collect();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value: p.objective_value(&x),
                x,
            })
        }
        Err(MicroError::Infeasible) => Ok(failed(LpStatus::Infeasible)),
        Err(MicroError::Unbounded) => Ok(failed(LpStatus::Unbounded)),
        Err(e) => Err(LpError::Backend(e.to_string())),
    }
}

use std::fmt::Write;

use super::LpProblem;

/// Fixed-width text rendering of a problem for triage: one line per variable
/// (name, bounds, objective) followed by one line per row.
pub fn dump(problem: &LpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "MAXIMIZE  vars={} rows={}", problem.n_vars(), problem.n_rows());
    let _ = writeln!(out, "{:<6} {:<24} {:>14} {:>14} {:>14}", "index", "name", "lower", "upper", "objective");
    for j in 0..problem.n_vars() {
        let _ = writeln!(
            out,
            "{:<6} {:<24} {:>14.6e} {:>14.6e} {:>14.6e}",
            j,
            problem.var_name(j),
            problem.lower()[j],
            problem.upper()[j],
            problem.objective()[j]
        );
    }
    let _ = writeln!(out, "ROWS");
    for (i, row) in problem.rows().iter().enumerate() {
        let _ = write!(out, "{:<6} {:<2} {:>14.6e} :", i, row.relation.to_string(), row.rhs);
        for &(j, a) in &row.coeffs {
            let _ = write!(out, " {:+.6e}*{}", a, problem.var_name(j));
        }
        out.push('\n');
    }
    out
}

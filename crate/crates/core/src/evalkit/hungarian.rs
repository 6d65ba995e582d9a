use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Optimal assignment cost of a square matrix (Kuhn–Munkres with potentials),
/// together with one optimal assignment `row -> column`.
fn solve(cost: &Mat) -> (f64, Vec<usize>) {
    let n = cost.nrows();
    // 1-based arrays; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    (assignment_cost(cost, &assign), assign)
}

/// Sum of `cost[(i, perm[i])]` in row order.
pub fn assignment_cost(cost: &Mat, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum()
}

fn without(cost: &Mat, row: usize, col: usize) -> Mat {
    let n = cost.nrows();
    Mat::from_fn(n - 1, n - 1, |i, j| cost[(i + usize::from(i >= row), j + usize::from(j >= col))])
}

/// Minimum-cost assignment `row -> column` of a square matrix. Among optimal
/// assignments the lexicographically smallest is returned; costs within
/// `1e-12 (1 + Σ|c|)` of the optimum count as ties.
pub fn hungarian(cost: &Mat) -> Result<(Vec<usize>, f64)> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(Error::Dimension { context: "assignment cost columns", expected: n, got: cost.ncols() });
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite { context: "assignment cost", offset: vec![] });
    }
    if n == 0 {
        return Ok((vec![], 0.0));
    }
    let tol = 1e-12 * (1.0 + cost.iter().map(|c| c.abs()).sum::<f64>());
    // Fix rows in order, each to the smallest column that keeps the optimum.
    let mut rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    let mut sub = cost.clone();
    let mut perm = vec![0; n];
    let mut target = solve(&sub).0;
    while sub.nrows() > 1 {
        let mut chosen = None;
        for c in 0..sub.ncols() {
            let rest = without(&sub, 0, c);
            let total = sub[(0, c)] + solve(&rest).0;
            if total <= target + tol {
                chosen = Some((c, rest, total - sub[(0, c)]));
                break;
            }
        }
        let (c, rest, rest_cost) = chosen.expect("some column attains the optimum");
        perm[rows[0]] = cols[c];
        rows.remove(0);
        cols.remove(c);
        sub = rest;
        target = rest_cost;
    }
    perm[rows[0]] = cols[0];
    Ok((perm.clone(), assignment_cost(cost, &perm)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_for_zero_diagonal() {
        let c = Mat::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 });
        assert_eq!(hungarian(&c).unwrap(), (vec![0, 1, 2, 3], 0.0));
    }

    #[test]
    fn three_by_three_example() {
        let c = Mat::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        assert_eq!(hungarian(&c).unwrap().1, 5.0);
    }

    #[test]
    fn constant_matrix_gives_identity() {
        let c = Mat::from_element(5, 5, 0.7);
        let (p, cost) = hungarian(&c).unwrap();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
        assert!((cost - 3.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut c = Mat::zeros(2, 2);
        c[(0, 1)] = f64::NAN;
        assert!(hungarian(&c).is_err());
    }
}

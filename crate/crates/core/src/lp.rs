//! Dense two-phase simplex for small linear programs of the form
//! `min c'x  s.t.  A x <= b,  x >= 0` (entries of `b` may be negative).

use nalgebra::DMatrix;

const EPS: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpError {
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    /// rows x (cols + 1); the last column is the right-hand side
    t: DMatrix<f64>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.cols + 1;
        let pv = self.t[(row, col)];
        for j in 0..w {
            self.t[(row, j)] /= pv;
        }
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for j in 0..w {
                    let v = self.t[(row, j)];
                    self.t[(i, j)] -= f * v;
                }
            }
        }
        self.basis[row] = col;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &bi) in self.basis.iter().enumerate() {
            let cb = cost[bi];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.t[(i, j)];
                }
            }
        }
        d
    }

    /// Runs simplex iterations for `cost` over columns where `allowed` is true.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<(), LpError> {
        let m = self.t.nrows();
        let rhs = self.cols;
        let max_iter = 50 * (m + self.cols) + 1000;
        let mut degenerate_run = 0usize;
        for _ in 0..max_iter {
            let d = self.reduced_costs(cost);
            let bland = degenerate_run > 2 * m;
            let mut enter = None;
            let mut best = -EPS;
            for j in 0..self.cols {
                if !allowed[j] || d[j] >= -EPS {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if d[j] < best {
                    best = d[j];
                    enter = Some(j);
                }
            }
            let Some(col) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[(i, col)];
                if a > EPS {
                    let ratio = self.t[(i, rhs)] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best_ratio)) => {
                            if ratio < best_ratio - EPS
                                || (ratio <= best_ratio + EPS && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best_ratio))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            if ratio.abs() <= EPS {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
        }
        Err(LpError::IterationLimit)
    }
}

/// Minimizes `c'x` subject to `a x <= b` and `x >= 0`.
pub fn minimize(c: &[f64], a: &DMatrix<f64>, b: &[f64]) -> Result<LpSolution, LpError> {
    let m = a.nrows();
    let n = a.ncols();
    assert_eq!(c.len(), n, "cost length must match column count");
    assert_eq!(b.len(), m, "rhs length must match row count");

    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < 0.0).collect();
    let n_art = negative.len();
    let cols = n + m + n_art;
    let mut t = DMatrix::zeros(m, cols + 1);
    let mut basis = vec![0; m];
    let mut art = 0;
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(i, j)] = sign * a[(i, j)];
        }
        t[(i, n + i)] = sign;
        t[(i, cols)] = sign * b[i];
        if b[i] < 0.0 {
            t[(i, n + m + art)] = 1.0;
            basis[i] = n + m + art;
            art += 1;
        } else {
            basis[i] = n + i;
        }
    }
    let mut tab = Tableau { t, basis, cols };

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for v in phase1.iter_mut().skip(n + m) {
            *v = 1.0;
        }
        let all = vec![true; cols];
        tab.optimize(&phase1, &all)?;
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n + m)
            .map(|i| tab.t[(i, cols)])
            .sum();
        let scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        if infeas > 1e-9 * scale {
            return Err(LpError::Infeasible);
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if tab.basis[i] >= n + m {
                if let Some(j) = (0..n + m).find(|&j| tab.t[(i, j)].abs() > 1e-9) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    let allowed: Vec<bool> = (0..cols).map(|j| j < n + m).collect();
    tab.optimize(&cost, &allowed)?;

    let mut x = vec![0.0; n];
    for (i, &bi) in tab.basis.iter().enumerate() {
        if bi < n {
            x[bi] = tab.t[(i, cols)].max(0.0);
        }
    }
    let objective = x.iter().zip(c).map(|(xi, ci)| xi * ci).sum();
    Ok(LpSolution { x, objective })
}

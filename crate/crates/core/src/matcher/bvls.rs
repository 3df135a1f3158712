//! Bounded-variable least squares (active-set, Stark–Parker style) and an
//! equality-constrained variant built on it by the method of multipliers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::lstsq_min_norm;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    AtLo,
    AtHi,
    Free,
}

/// Relative KKT tolerance on the gradient.
pub const KKT_RTOL: f64 = 1e-8;

/// KKT gradient tolerance used for `(G, d)`.
pub fn kkt_tolerance(g: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    let gtd = g.transpose() * d;
    (KKT_RTOL * gtd.amax()).max(f64::MIN_POSITIVE)
}

/// Largest KKT violation of `c` for `min ‖Gc − d‖²` on `[lo, hi]`, in units
/// of the gradient `Gᵀ(d − Gc)`.
pub fn kkt_violation(g: &DMatrix<f64>, d: &DVector<f64>, c: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let x = DVector::from_column_slice(c);
    let w = g.transpose() * (d - g * &x);
    (0..c.len())
        .map(|i| {
            if lo[i] == hi[i] {
                0.0
            } else if c[i] <= lo[i] {
                w[i].max(0.0)
            } else if c[i] >= hi[i] {
                (-w[i]).max(0.0)
            } else {
                w[i].abs()
            }
        })
        .fold(0.0, f64::max)
}

/// `argmin ‖Gc − d‖²` subject to `lo ≤ c ≤ hi`.
///
/// Starts with every coordinate at its lower bound and frees the coordinate
/// with the largest KKT violation until none remain. Coordinates whose column
/// is zero never become free, so they stay at `lo`. Free-set subproblems use
/// the minimum-norm solution, which splits weight evenly across identical
/// columns.
pub fn bvls(g: &DMatrix<f64>, d: &DVector<f64>, lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let k = g.ncols();
    if lo.len() != k || hi.len() != k || g.nrows() != d.len() || g.nrows() == 0 {
        return Err(Error::Domain(format!(
            "bvls: G is {}x{}, d has {} rows, bounds have {} and {} entries",
            g.nrows(),
            k,
            d.len(),
            lo.len(),
            hi.len()
        )));
    }
    if let Some(i) = (0..k).find(|&i| !(lo[i] <= hi[i])) {
        return Err(Error::Domain(format!(
            "bvls: lower bound {} exceeds upper bound {} at {}",
            lo[i], hi[i], i
        )));
    }
    let tol = kkt_tolerance(g, d);
    let mut x = DVector::from_column_slice(lo);
    let mut state = vec![State::AtLo; k];
    for i in 0..k {
        if lo[i] == hi[i] {
            state[i] = State::AtHi;
        }
    }
    let cap = 50 + 30 * k;
    // Coordinates that were just freed and immediately fell back; skipped
    // until the iterate moves.
    let mut skip = vec![false; k];

    for _ in 0..cap {
        let w = g.transpose() * (d - g * &x);
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..k {
            if skip[i] || lo[i] == hi[i] {
                continue;
            }
            let v = match state[i] {
                State::AtLo => w[i],
                State::AtHi => -w[i],
                State::Free => continue,
            };
            if v > tol && pick.is_none_or(|(_, best)| v > best) {
                pick = Some((i, v));
            }
        }
        let Some((t, _)) = pick else {
            polish(g, d, &mut x, &state, &w, tol, lo, hi);
            return Ok(x.iter().copied().collect());
        };
        let came_from = state[t];
        state[t] = State::Free;

        let mut first = true;
        loop {
            let free: Vec<usize> = (0..k).filter(|&i| state[i] == State::Free).collect();
            let z = solve_free(g, d, &x, &free);
            if first
                && !within(
                    z[free.iter().position(|&i| i == t).unwrap()],
                    t,
                    came_from,
                    lo,
                    hi,
                )
            {
                // The freed coordinate wants to move out of the box on the
                // side it came from: rounding noise, not a real violation.
                state[t] = came_from;
                skip[t] = true;
                break;
            }
            first = false;
            let feasible = free
                .iter()
                .zip(z.iter())
                .all(|(&i, &zi)| zi > lo[i] && zi < hi[i]);
            if feasible {
                for (&i, &zi) in free.iter().zip(z.iter()) {
                    x[i] = zi;
                }
                skip.iter_mut().for_each(|s| *s = false);
                break;
            }
            // Step from x toward z until the first free coordinate hits a bound.
            let mut alpha = 1.0f64;
            let mut blocking = None;
            for (&i, &zi) in free.iter().zip(z.iter()) {
                let bound = if zi <= lo[i] {
                    lo[i]
                } else if zi >= hi[i] {
                    hi[i]
                } else {
                    continue;
                };
                let step = zi - x[i];
                let a = if step != 0.0 {
                    ((bound - x[i]) / step).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                if blocking.is_none() || a < alpha {
                    alpha = a;
                    blocking = Some((i, bound == lo[i]));
                }
            }
            let (j, j_at_lo) = blocking.expect("an infeasible free coordinate exists");
            for (&i, &zi) in free.iter().zip(z.iter()) {
                x[i] = (x[i] + alpha * (zi - x[i])).clamp(lo[i], hi[i]);
            }
            if alpha > 0.0 {
                skip.iter_mut().for_each(|s| *s = false);
            }
            x[j] = if j_at_lo { lo[j] } else { hi[j] };
            for &i in &free {
                if i == j {
                    state[i] = if j_at_lo { State::AtLo } else { State::AtHi };
                } else if x[i] <= lo[i] {
                    state[i] = State::AtLo;
                } else if x[i] >= hi[i] {
                    state[i] = State::AtHi;
                }
            }
            if free.iter().all(|&i| state[i] != State::Free) {
                break;
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cap,
        best: x.iter().copied().collect(),
    })
}

/// Among equally good solutions, prefer the minimum-norm one over the free
/// set together with every bound coordinate whose gradient vanishes. This
/// makes duplicated columns share their weight instead of one taking all.
#[allow(clippy::too_many_arguments)]
fn polish(
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    x: &mut DVector<f64>,
    state: &[State],
    w: &DVector<f64>,
    tol: f64,
    lo: &[f64],
    hi: &[f64],
) {
    let k = x.len();
    let free: Vec<usize> = (0..k).filter(|&i| state[i] == State::Free).collect();
    let tied: Vec<usize> = (0..k)
        .filter(|&i| {
            state[i] != State::Free
                && lo[i] < hi[i]
                && w[i].abs() <= tol
                && g.column(i).amax() > 0.0
        })
        .collect();
    if tied.is_empty() || free.is_empty() {
        return;
    }
    let mut cand = free;
    cand.extend(tied);
    cand.sort_unstable();
    let z = solve_free(g, d, x, &cand);
    if cand
        .iter()
        .zip(z.iter())
        .any(|(&i, &zi)| !(zi >= lo[i] && zi <= hi[i]))
    {
        return;
    }
    let mut y = x.clone();
    for (&i, &zi) in cand.iter().zip(z.iter()) {
        y[i] = zi;
    }
    let (before, after) = ((d - g * &*x).norm_squared(), (d - g * &y).norm_squared());
    if after <= before + 1e-12 * d.norm_squared().max(f64::MIN_POSITIVE) {
        *x = y;
    }
}

fn within(zt: f64, t: usize, came_from: State, lo: &[f64], hi: &[f64]) -> bool {
    match came_from {
        State::AtLo => zt > lo[t],
        State::AtHi => zt < hi[t],
        State::Free => true,
    }
}

/// Least squares over the free coordinates with the bound ones held fixed.
fn solve_free(
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    x: &DVector<f64>,
    free: &[usize],
) -> DVector<f64> {
    let mut rhs = d.clone();
    for i in 0..g.ncols() {
        if !free.contains(&i) && x[i] != 0.0 {
            rhs -= g.column(i) * x[i];
        }
    }
    let gf = g.select_columns(free);
    lstsq_min_norm(&gf, &rhs)
}

/// Solution of [`bvls_eq`] together with how well the equalities hold.
#[derive(Clone, Debug, PartialEq)]
pub struct EqSolution {
    pub x: Vec<f64>,
    /// `‖E x − f‖ / max(‖f‖, ‖x‖)` with the rows of `E` scaled to unit norm.
    pub eq_residual: f64,
}

/// `argmin ‖Gc − d‖²` subject to `E c = f` and `lo ≤ c ≤ hi`, by the method
/// of multipliers: each round solves a bounded problem with the equalities
/// added as heavily weighted rows, then shifts their right-hand side by the
/// accumulated residual. Infeasible equalities show up as a residual that
/// will not go to zero; the caller decides what is acceptable.
pub fn bvls_eq(
    g: &DMatrix<f64>,
    d: &DVector<f64>,
    e: &DMatrix<f64>,
    f: &DVector<f64>,
    lo: &[f64],
    hi: &[f64],
) -> Result<EqSolution> {
    let k = g.ncols();
    let p = e.nrows();
    if e.ncols() != k || f.len() != p {
        return Err(Error::Domain(format!(
            "bvls_eq: E is {}x{} and f has {} rows for {} unknowns",
            p,
            e.ncols(),
            f.len(),
            k
        )));
    }
    let mut en = e.clone();
    let mut fnorm = f.clone();
    for r in 0..p {
        let n = e.row(r).norm();
        if n > 0.0 {
            en.row_mut(r).scale_mut(1.0 / n);
            fnorm[r] /= n;
        }
    }
    let gn = g.norm();
    let mu = if gn > 0.0 {
        1e4 * gn * gn / p.max(1) as f64
    } else {
        1.0
    };
    let sq = mu.sqrt();
    let mut stacked = DMatrix::zeros(g.nrows() + p, k);
    stacked.rows_mut(0, g.nrows()).copy_from(g);
    stacked.rows_mut(g.nrows(), p).copy_from(&(&en * sq));
    let mut rhs = DVector::zeros(g.nrows() + p);
    rhs.rows_mut(0, g.nrows()).copy_from(d);

    let mut y = DVector::zeros(p);
    let mut best: Option<EqSolution> = None;
    let mut stall = 0;
    for _ in 0..300 {
        rhs.rows_mut(g.nrows(), p).copy_from(&((&fnorm - &y) * sq));
        let x = match bvls(&stacked, &rhs, lo, hi) {
            Ok(x) => x,
            Err(Error::NonConvergence { best, .. }) => best,
            Err(other) => return Err(other),
        };
        let xv = DVector::from_column_slice(&x);
        let r = &en * &xv - &fnorm;
        let scale = fnorm.norm().max(xv.norm()).max(f64::MIN_POSITIVE);
        let res = r.norm() / scale;
        let improved = best.as_ref().is_none_or(|b| res < 0.5 * b.eq_residual);
        if best.as_ref().is_none_or(|b| res <= b.eq_residual) {
            best = Some(EqSolution {
                x,
                eq_residual: res,
            });
        }
        if res < 1e-13 {
            break;
        }
        stall = if improved { 0 } else { stall + 1 };
        if stall >= 20 {
            break;
        }
        y += r;
    }
    Ok(best.expect("at least one round ran"))
}

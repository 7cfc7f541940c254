//! Attempt-probability allocation for heterogeneous users.
//!
//! With `P_n = α_n / N` and `c = 1/(NK)`, user `n`'s normalized expected rate
//! is `(α_n/N) Π_{i≠n} (1 − c α_i)`. We maximize user 1's rate subject to the
//! other users' demands. In the log domain every term is concave, so the
//! program is solved by a primal log-barrier method with Newton steps, after a
//! phase-I search for a strictly feasible point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaAllocation {
    pub alpha: Vec<f64>,
    /// `P_n = α_n / N`.
    pub caps_implied: Vec<f64>,
    /// `E{u_n(k*)} (α_n/N) Π_{i≠n}(1 − α_i/(NK))`.
    pub achieved_rates: Vec<f64>,
    /// One flag per demand constraint, users `2..=N` in order.
    pub binding: Vec<bool>,
    /// User 1's normalized rate `(α_1/N) Π_{i≠1}(1 − α_i/(NK))`.
    pub objective: f64,
}

const GAP_TOL: f64 = 1e-11;
const BINDING_TOL: f64 = 1e-6;

/// A concave function's value, gradient and Hessian at a point.
struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

type Concave<'a> = Box<dyn Fn(&DVector<f64>) -> Eval + 'a>;

struct Program<'a> {
    objective: Concave<'a>,
    /// Each must stay strictly positive.
    constraints: Vec<Concave<'a>>,
}

impl Program<'_> {
    fn barrier(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let mut total = t * (self.objective)(x).value;
        for c in &self.constraints {
            let v = (c)(x).value;
            if !(v > 0.0) || !v.is_finite() {
                return None;
            }
            total += v.ln();
        }
        total.is_finite().then_some(total)
    }

    fn newton_system(&self, x: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let f = (self.objective)(x);
        let mut grad = f.grad * t;
        let mut hess = f.hess * t;
        for c in &self.constraints {
            let e = (c)(x);
            grad += &e.grad / e.value;
            hess += &e.hess / e.value - (&e.grad * e.grad.transpose()) / (e.value * e.value);
        }
        (grad, hess)
    }

    /// Maximizes the objective from a strictly feasible `x`. `stop` is checked
    /// after every Newton step and ends the search early when it returns true.
    fn maximize(&self, mut x: DVector<f64>, stop: &dyn Fn(&DVector<f64>) -> bool) -> DVector<f64> {
        let m = self.constraints.len().max(1) as f64;
        let mut t = 1.0;
        loop {
            for _ in 0..200 {
                let (grad, hess) = self.newton_system(&x, t);
                let neg = -hess;
                let step = match neg.clone().cholesky() {
                    Some(ch) => ch.solve(&grad),
                    None => match neg.lu().solve(&grad) {
                        Some(s) => s,
                        None => break,
                    },
                };
                let decrement = grad.dot(&step);
                if !(decrement > 1e-14) {
                    break;
                }
                let current = match self.barrier(&x, t) {
                    Some(v) => v,
                    None => break,
                };
                let mut s = 1.0;
                let mut moved = false;
                for _ in 0..80 {
                    let cand = &x + &step * s;
                    if let Some(v) = self.barrier(&cand, t) {
                        if v >= current + 0.25 * s * decrement {
                            x = cand;
                            moved = true;
                            break;
                        }
                    }
                    s *= 0.5;
                }
                if !moved || stop(&x) {
                    break;
                }
            }
            if stop(&x) || m / t < GAP_TOL {
                return x;
            }
            t *= 10.0;
        }
    }
}

fn zero_eval(dim: usize) -> Eval {
    Eval {
        value: 0.0,
        grad: DVector::zeros(dim),
        hess: DMatrix::zeros(dim, dim),
    }
}

/// `ln α_n − ln N + Σ_{i≠n} ln(1 − c α_i) − shift`, on the first `n_users`
/// coordinates of a `dim`-vector.
fn log_rate(n: usize, n_users: usize, dim: usize, c: f64, shift: f64) -> impl Fn(&DVector<f64>) -> Eval {
    move |x: &DVector<f64>| {
        let mut e = zero_eval(dim);
        let an = x[n];
        e.value = an.ln() - (n_users as f64).ln() - shift;
        e.grad[n] = 1.0 / an;
        e.hess[(n, n)] = -1.0 / (an * an);
        for i in (0..n_users).filter(|&i| i != n) {
            let rest = 1.0 - c * x[i];
            e.value += rest.ln();
            e.grad[i] = -c / rest;
            e.hess[(i, i)] = -(c * c) / (rest * rest);
        }
        e
    }
}

fn linear(dim: usize, coeffs: Vec<(usize, f64)>, constant: f64) -> impl Fn(&DVector<f64>) -> Eval {
    move |x: &DVector<f64>| {
        let mut e = zero_eval(dim);
        e.value = constant;
        for &(i, a) in &coeffs {
            e.value += a * x[i];
            e.grad[i] = a;
        }
        e
    }
}

/// Normalized rate of user `n` at `alpha`.
fn normalized_rate(alpha: &[f64], n: usize, c: f64) -> f64 {
    let n_users = alpha.len() as f64;
    alpha[n] / n_users
        * alpha
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != n)
            .map(|(_, &a)| 1.0 - c * a)
            .product::<f64>()
}

/// Maximizes user 1's expected rate subject to demands `R_n^T` of users
/// `2..=N` and `0 ≤ α_n ≤ N p_max`.
///
/// `expected_best` holds `E{u_n(k*_n)}` for every user; `demands` holds the
/// `N − 1` targets of users `2..=N`.
pub fn solve_alpha_allocation(
    expected_best: &[f64],
    demands: &[f64],
    n_channels: usize,
    p_max: f64,
) -> Result<AlphaAllocation> {
    let n_users = expected_best.len();
    if n_users == 0 || n_channels == 0 {
        return Err(Error::Dimension("need at least one user and one channel".into()));
    }
    if demands.len() + 1 != n_users {
        return Err(Error::Dimension(format!(
            "{} demands for {} users; expected N − 1",
            demands.len(),
            n_users
        )));
    }
    if let Some(n) = expected_best.iter().position(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidValue(format!(
            "E{{u_{}(k*)}} = {} must be positive",
            n + 1,
            expected_best[n]
        )));
    }
    if demands.iter().any(|&d| !(d >= 0.0 && d.is_finite())) {
        return Err(Error::InvalidValue("demands must be finite and non-negative".into()));
    }
    if !(p_max > 0.0 && p_max < 1.0) {
        return Err(Error::InvalidValue(format!("p_max = {p_max} must lie in (0, 1)")));
    }

    let nf = n_users as f64;
    let c = 1.0 / (nf * n_channels as f64);
    let upper = nf * p_max;
    let normalized: Vec<f64> = demands
        .iter()
        .zip(&expected_best[1..])
        .map(|(&d, &e)| d / e)
        .collect();

    // A user alone can reach at most P_n = p_max.
    if let Some(&worst) = normalized.iter().find(|&&r| r >= p_max) {
        return Err(Error::Infeasible { margin: p_max.ln() - worst.ln() });
    }

    // (user index, ln R̄_n) for every active demand.
    let active: Vec<(usize, f64)> = normalized
        .iter()
        .enumerate()
        .filter(|&(_, &r)| r > 0.0)
        .map(|(i, &r)| (i + 1, r.ln()))
        .collect();

    let mut start = DVector::from_element(n_users, upper / 2.0);
    let worst_margin = |x: &DVector<f64>| -> f64 {
        active
            .iter()
            .map(|&(n, shift)| log_rate(n, n_users, n_users, c, shift)(x).value)
            .fold(f64::INFINITY, f64::min)
    };

    if !active.is_empty() && worst_margin(&start) <= 0.0 {
        start = phase_one(&start, &active, n_users, c, upper)?;
    }

    let mut constraints: Vec<Concave> = Vec::new();
    for &(n, shift) in &active {
        constraints.push(Box::new(log_rate(n, n_users, n_users, c, shift)));
    }
    for i in 0..n_users {
        constraints.push(Box::new(linear(n_users, vec![(i, 1.0)], 0.0)));
        constraints.push(Box::new(linear(n_users, vec![(i, -1.0)], upper)));
    }
    let program = Program {
        objective: Box::new(log_rate(0, n_users, n_users, c, 0.0)),
        constraints,
    };
    let x = program.maximize(start, &|_| false);

    let alpha: Vec<f64> = x.iter().copied().collect();
    let binding = (1..n_users)
        .map(|n| {
            let target = normalized[n - 1];
            if target > 0.0 {
                (normalized_rate(&alpha, n, c) - target) <= BINDING_TOL * target
            } else {
                alpha[n] <= BINDING_TOL
            }
        })
        .collect();
    Ok(AlphaAllocation {
        caps_implied: alpha.iter().map(|a| a / nf).collect(),
        achieved_rates: (0..n_users)
            .map(|n| expected_best[n] * normalized_rate(&alpha, n, c))
            .collect(),
        objective: normalized_rate(&alpha, 0, c),
        binding,
        alpha,
    })
}

/// Maximizes `s` subject to `g_n(α) ≥ s` and the box; returns the first
/// strictly feasible `α` found.
fn phase_one(
    start: &DVector<f64>,
    active: &[(usize, f64)],
    n_users: usize,
    c: f64,
    upper: f64,
) -> Result<DVector<f64>> {
    let dim = n_users + 1;
    let slack = n_users;
    let mut constraints: Vec<Concave> = Vec::new();
    for &(n, shift) in active {
        let g = log_rate(n, n_users, dim, c, shift);
        constraints.push(Box::new(move |x: &DVector<f64>| {
            let mut e = g(x);
            e.value -= x[slack];
            e.grad[slack] = -1.0;
            e
        }));
    }
    for i in 0..n_users {
        constraints.push(Box::new(linear(dim, vec![(i, 1.0)], 0.0)));
        constraints.push(Box::new(linear(dim, vec![(i, -1.0)], upper)));
    }
    let program = Program {
        objective: Box::new(linear(dim, vec![(slack, 1.0)], 0.0)),
        constraints,
    };

    let margin0 = active
        .iter()
        .map(|&(n, shift)| log_rate(n, n_users, n_users, c, shift)(start).value)
        .fold(f64::INFINITY, f64::min);
    let mut z = DVector::zeros(dim);
    z.rows_mut(0, n_users).copy_from(start);
    z[slack] = margin0 - 1.0;

    let z = program.maximize(z, &|z| z[slack] > 0.0);
    if z[slack] > 0.0 {
        Ok(z.rows(0, n_users).into_owned())
    } else {
        Err(Error::Infeasible { margin: z[slack] })
    }
}

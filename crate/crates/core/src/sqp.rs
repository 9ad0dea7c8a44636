//! Small dense SQP for inequality-constrained minimization.
//!
//! Quasi-Newton (damped BFGS) Hessian, Goldfarb–Idnani dual active-set QP
//! subproblems, ℓ1 merit line search with a second-order correction.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// min f(x) subject to c(x) ≥ 0.
pub(crate) trait Nlp {
    fn dim(&self) -> usize;
    fn n_constraints(&self) -> usize;
    /// Objective and gradient.
    fn objective(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
    /// Constraint values and Jacobian (row i is ∇c_i).
    fn constraints(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SqpOptions {
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    pub feasibility_tolerance: f64,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            kkt_tolerance: 1e-6,
            feasibility_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SqpOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ‖∇f − Jᵀλ‖∞ combined with complementarity max |λ_i c_i|.
    pub kkt: f64,
    pub violation: f64,
}

pub(crate) struct QpSolution {
    pub x: DVector<f64>,
    pub multipliers: DVector<f64>,
}

/// Goldfarb–Idnani: min ½xᵀGx + aᵀx subject to Nᵀx ≥ b, G positive definite.
/// Columns of `normals` are the constraint normals.
pub(crate) fn solve_qp(
    g: &DMatrix<f64>,
    a: &DVector<f64>,
    normals: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<QpSolution> {
    let n = a.len();
    let m = b.len();
    let ginv = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::OptimizationFailed("QP Hessian is not positive definite".into()))?
        .inverse();
    let mut x = -(&ginv * a);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let max_steps = 20 * (n + m) + 50;
    let mut steps = 0;

    let slack = |x: &DVector<f64>, i: usize| normals.column(i).dot(x) - b[i];

    loop {
        let mut worst = None;
        let mut worst_s = 0.0;
        for i in (0..m).filter(|i| !active.contains(i)) {
            let s = slack(&x, i);
            let scale = 1.0 + b[i].abs() + normals.column(i).norm() * x.norm();
            if s < -1e-13 * scale && s < worst_s {
                worst_s = s;
                worst = Some(i);
            }
        }
        let Some(p) = worst else { break };
        let np = normals.column(p).clone_owned();
        let mut u_plus = u.clone();
        u_plus.push(0.0);

        loop {
            steps += 1;
            if steps > max_steps {
                return Err(Error::OptimizationFailed(
                    "QP iteration limit reached".into(),
                ));
            }
            let q = active.len();
            let gi_np = &ginv * &np;
            let (z, r) = if q == 0 {
                (gi_np.clone(), DVector::zeros(0))
            } else {
                let nmat = DMatrix::from_fn(n, q, |row, col| normals[(row, active[col])]);
                let gi_n = &ginv * &nmat;
                let mmat = nmat.transpose() * &gi_n;
                let r = mmat
                    .cholesky()
                    .ok_or_else(|| {
                        Error::OptimizationFailed("dependent active constraints".into())
                    })?
                    .solve(&(gi_n.transpose() * &np));
                (&gi_np - &gi_n * &r, r)
            };

            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for j in 0..q {
                if r[j] > 0.0 {
                    let ratio = u_plus[j] / r[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }
            let zn = z.dot(&np);
            let t2 = if zn <= 1e-14 * np.dot(&gi_np) {
                f64::INFINITY
            } else {
                -slack(&x, p) / zn
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(Error::OptimizationFailed(
                    "QP subproblem is infeasible".into(),
                ));
            }
            for j in 0..q {
                u_plus[j] -= t * r[j];
            }
            u_plus[q] += t;
            if t2.is_finite() {
                x += &z * t;
            }
            if t2 <= t1 {
                active.push(p);
                u = u_plus;
                break;
            }
            let l = drop.expect("partial step needs a blocking multiplier");
            active.remove(l);
            u_plus.remove(l);
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (&i, &ui) in active.iter().zip(&u) {
        multipliers[i] = ui.max(0.0);
    }
    Ok(QpSolution { x, multipliers })
}

fn violation(c: &[f64]) -> f64 {
    c.iter().fold(0.0_f64, |acc, &ci| acc.max(-ci))
}

fn l1_violation(c: &[f64]) -> f64 {
    c.iter().map(|&ci| (-ci).max(0.0)).sum()
}

struct Iterate {
    x: DVector<f64>,
    f: f64,
    grad: DVector<f64>,
    c: Vec<f64>,
    jac: DMatrix<f64>,
}

fn evaluate<P: Nlp>(problem: &P, x: DVector<f64>) -> Result<Iterate> {
    let (f, g) = problem.objective(x.as_slice())?;
    if !f.is_finite() {
        return Err(Error::OptimizationFailed("objective is not finite".into()));
    }
    let (c, jac) = problem.constraints(x.as_slice());
    Ok(Iterate {
        x,
        f,
        grad: DVector::from_vec(g),
        c,
        jac,
    })
}

fn subproblem(
    b: &DMatrix<f64>,
    grad: &DVector<f64>,
    jac: &DMatrix<f64>,
    rhs: &[f64],
) -> Result<QpSolution> {
    solve_qp(
        b,
        grad,
        &jac.transpose(),
        &DVector::from_iterator(rhs.len(), rhs.iter().map(|&ci| -ci)),
    )
}

fn kkt_measure(it: &Iterate, lambda: &DVector<f64>) -> f64 {
    let stationarity = (&it.grad - it.jac.transpose() * lambda).amax();
    let complementarity =
        it.c.iter()
            .zip(lambda.iter())
            .fold(0.0_f64, |acc, (&ci, &li)| acc.max((li * ci).abs()));
    stationarity.max(complementarity)
}

/// Runs SQP from `x0`, which should be feasible or nearly so.
pub(crate) fn minimize<P: Nlp>(
    problem: &P,
    x0: &[f64],
    options: &SqpOptions,
) -> Result<SqpOutcome> {
    let n = problem.dim();
    let mut it = evaluate(problem, DVector::from_column_slice(x0))?;
    let mut hess = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut penalty: f64 = 1.0;
    let mut kkt = f64::INFINITY;

    for iteration in 0..options.max_iterations {
        let qp = subproblem(&hess, &it.grad, &it.jac, &it.c)?;
        let d = qp.x;
        let lambda = qp.multipliers;
        kkt = kkt_measure(&it, &lambda);
        let viol = violation(&it.c);
        if kkt < options.kkt_tolerance && viol < options.feasibility_tolerance {
            return Ok(SqpOutcome {
                x: it.x.as_slice().to_vec(),
                f: it.f,
                iterations: iteration,
                converged: true,
                kkt,
                violation: viol,
            });
        }
        if d.amax() < 1e-15 * (1.0 + it.x.amax()) {
            break;
        }

        penalty = penalty.max(1.5 * lambda.amax() + 1e-3);
        let merit = |f: f64, c: &[f64]| f + penalty * l1_violation(c);
        let merit0 = merit(it.f, &it.c);
        let slope = it.grad.dot(&d) - penalty * l1_violation(&it.c);
        let slope = slope.min(-1e-3 * d.dot(&(&hess * &d)));

        let mut accepted = None;
        if let Ok(trial) = evaluate(problem, &it.x + &d) {
            if merit(trial.f, &trial.c) <= merit0 + 1e-4 * slope {
                accepted = Some(trial);
            } else {
                // second-order correction for curved active constraints
                let shifted: Vec<f64> = trial
                    .c
                    .iter()
                    .zip((&it.jac * &d).iter())
                    .map(|(&ct, &jd)| ct - jd)
                    .collect();
                if let Ok(soc) = subproblem(&hess, &it.grad, &it.jac, &shifted) {
                    if let Ok(corrected) = evaluate(problem, &it.x + &soc.x) {
                        if merit(corrected.f, &corrected.c) <= merit0 + 1e-4 * slope {
                            accepted = Some(corrected);
                        }
                    }
                }
            }
        }
        if accepted.is_none() {
            let mut alpha = 0.5;
            while alpha > 1e-12 {
                if let Ok(trial) = evaluate(problem, &it.x + &d * alpha) {
                    if merit(trial.f, &trial.c) <= merit0 + 1e-4 * alpha * slope {
                        accepted = Some(trial);
                        break;
                    }
                }
                alpha *= 0.5;
            }
        }
        let Some(next) = accepted else { break };

        let s = &next.x - &it.x;
        let jt_lambda_new = next.jac.transpose() * &lambda;
        let jt_lambda_old = it.jac.transpose() * &lambda;
        let mut y = (&next.grad - jt_lambda_new) - (&it.grad - jt_lambda_old);
        let sy = s.dot(&y);
        if first_update && sy > 0.0 {
            hess *= y.dot(&y) / sy;
            first_update = false;
        }
        let bs = &hess * &s;
        let sbs = s.dot(&bs);
        if sbs > 1e-300 {
            if sy < 0.2 * sbs {
                let theta = 0.8 * sbs / (sbs - sy);
                y = &y * theta + &bs * (1.0 - theta);
            }
            let sy = s.dot(&y);
            if sy > 1e-300 {
                hess += &y * y.transpose() / sy - &bs * bs.transpose() / sbs;
                hess = (&hess + hess.transpose()) * 0.5;
            }
            if hess.clone().cholesky().is_none() {
                // round-off destroyed definiteness; restart from a scaled identity
                let scale = hess.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64;
                hess = DMatrix::identity(n, n) * scale.max(1e-8);
            }
        }
        it = next;
    }

    let viol = violation(&it.c);
    Ok(SqpOutcome {
        x: it.x.as_slice().to_vec(),
        f: it.f,
        iterations: options.max_iterations,
        converged: false,
        kkt,
        violation: viol,
    })
}

//! Proximal subproblem solver.
//!
//! Solves problems of the form
//!
//! ```text
//! minimize  f(x) + g'x + (w/2) ||x - c||^2
//! over      x in X,  h_j(x) <= 0
//! ```
//!
//! where `f` is convex (smooth plus an optional pointwise max), `X` is a
//! polyhedron, and the `h_j` are convex. A nonsmooth objective is lifted to
//! its epigraph (extra coordinate `t`, pieces become constraints `m_k <= t`);
//! nonsmooth constraints split into one smooth constraint per piece. The
//! smooth core is an accelerated projected-gradient method with backtracking
//! and adaptive restart. Extra constraints are handled by dual bisection when
//! there is exactly one and by an augmented Lagrangian loop otherwise.

use nalgebra::DVector;

use crate::funcs::{Atom, ConvexFunction, SmoothConvexFunction};
use crate::sets::Polyhedron;
use crate::util::{pos, spectral_upper_bound};
use crate::{Error, Result};

/// One proximal subproblem instance.
#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    /// Convex objective `f` (smooth part plus optional max part).
    pub objective: ConvexFunction,
    /// Extra linear term `g'x` (typically a negated gradient).
    pub linear: DVector<f64>,
    /// Proximal weight `w >= 0`.
    pub prox_weight: f64,
    /// Proximal center `c`.
    pub prox_center: DVector<f64>,
    /// Feasible polyhedron `X`.
    pub set: Polyhedron,
    /// Additional convex constraints `h_j(x) <= 0`.
    pub constraints: Vec<ConvexFunction>,
    /// Optional warm start (defaults to the projected proximal center).
    pub start: Option<DVector<f64>>,
}

impl SubproblemSpec {
    /// Unconstrained-beyond-`X` prox subproblem, warm-started at the center.
    pub fn prox_step(
        objective: ConvexFunction,
        linear: DVector<f64>,
        prox_weight: f64,
        prox_center: DVector<f64>,
        set: Polyhedron,
    ) -> SubproblemSpec {
        SubproblemSpec {
            objective,
            linear,
            prox_weight,
            start: Some(prox_center.clone()),
            prox_center,
            set,
            constraints: Vec::new(),
        }
    }
}

/// Solver output.
#[derive(Debug, Clone)]
pub struct SubproblemResult {
    /// Minimizer (in the original coordinates).
    pub x: DVector<f64>,
    /// Objective value `f(x) + g'x + (w/2)||x - c||^2` at the minimizer.
    pub objective_value: f64,
    /// Stationarity measure: the norm of the unit-step projected gradient
    /// mapping, combined with the worst extra-constraint violation.
    pub kkt_residual: f64,
    /// Total inner iterations across all stages.
    pub iterations: usize,
    /// Multipliers for the expanded extra constraints (pieces first).
    pub multipliers: Vec<f64>,
}

/// Inner-solver tolerances.
#[derive(Debug, Clone)]
pub struct SubsolverOptions {
    /// Target on the projected gradient mapping norm.
    pub tol: f64,
    /// Iteration cap for each smooth solve.
    pub max_iter: usize,
    /// Acceptable violation of extra constraints.
    pub feas_tol: f64,
}

impl Default for SubsolverOptions {
    fn default() -> Self {
        SubsolverOptions {
            tol: 1e-10,
            max_iter: 100_000,
            feas_tol: 1e-8,
        }
    }
}

/// Feasibility probe outcome.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    /// Point of least constraint violation found.
    pub witness: DVector<f64>,
    /// Sum of positive parts of the constraint values at the witness.
    pub residual: f64,
}

// ---------------------------------------------------------------------------
// Smooth evaluator
// ---------------------------------------------------------------------------

/// Penalty attached to the expanded constraints during a smooth solve.
enum Penalty<'a> {
    None,
    /// Fixed linear multipliers (Lagrangian).
    Linear(&'a [f64]),
    /// Augmented Lagrangian with multipliers and penalty strength.
    Augmented(&'a [f64], f64),
}

/// Smooth total objective over the (possibly lifted) variable.
struct SmoothProblem<'a> {
    base: &'a SmoothConvexFunction,
    linear: &'a DVector<f64>,
    prox_weight: f64,
    prox_center: &'a DVector<f64>,
    /// Number of leading coordinates the prox term applies to.
    prox_dim: usize,
    constraints: &'a [SmoothConvexFunction],
    penalty: Penalty<'a>,
}

impl SmoothProblem<'_> {
    fn value(&self, y: &DVector<f64>) -> Result<f64> {
        let mut v = self.base.value(y)? + self.linear.dot(y);
        if self.prox_weight > 0.0 {
            let mut d2 = 0.0;
            for i in 0..self.prox_dim {
                let d = y[i] - self.prox_center[i];
                d2 += d * d;
            }
            v += 0.5 * self.prox_weight * d2;
        }
        match self.penalty {
            Penalty::None => {}
            Penalty::Linear(lambda) => {
                for (j, c) in self.constraints.iter().enumerate() {
                    if lambda[j] != 0.0 {
                        v += lambda[j] * c.value(y)?;
                    }
                }
            }
            Penalty::Augmented(lambda, rho) => {
                for (j, c) in self.constraints.iter().enumerate() {
                    let shifted = pos(lambda[j] / rho + c.value(y)?);
                    let base = lambda[j] / rho;
                    v += 0.5 * rho * (shifted * shifted - base * base);
                }
            }
        }
        Ok(v)
    }

    fn gradient(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = self.base.gradient(y)?;
        g += self.linear;
        if self.prox_weight > 0.0 {
            for i in 0..self.prox_dim {
                g[i] += self.prox_weight * (y[i] - self.prox_center[i]);
            }
        }
        match self.penalty {
            Penalty::None => {}
            Penalty::Linear(lambda) => {
                for (j, c) in self.constraints.iter().enumerate() {
                    if lambda[j] != 0.0 {
                        g.axpy(lambda[j], &c.gradient(y)?, 1.0);
                    }
                }
            }
            Penalty::Augmented(lambda, rho) => {
                for (j, c) in self.constraints.iter().enumerate() {
                    let weight = pos(lambda[j] + rho * c.value(y)?);
                    if weight > 0.0 {
                        g.axpy(weight, &c.gradient(y)?, 1.0);
                    }
                }
            }
        }
        Ok(g)
    }

    fn curvature_guess(&self) -> f64 {
        let mut l = spectral_upper_bound(&self.base.quadratic_hessian()) + self.prox_weight;
        if let Penalty::Linear(lambda) = self.penalty {
            for (j, c) in self.constraints.iter().enumerate() {
                if lambda[j] > 0.0 {
                    l += lambda[j] * spectral_upper_bound(&c.quadratic_hessian());
                }
            }
        }
        l
    }
}

// ---------------------------------------------------------------------------
// Accelerated projected gradient with backtracking
// ---------------------------------------------------------------------------

struct SmoothSolve {
    x: DVector<f64>,
    iterations: usize,
}

fn accelerated_solve(
    problem: &SmoothProblem<'_>,
    set: &Polyhedron,
    start: &DVector<f64>,
    opts: &SubsolverOptions,
) -> Result<SmoothSolve> {
    let proj_tol = (opts.tol * 1e-2).max(1e-13);
    let mut x = set.project(start, proj_tol)?;
    let mut fx = problem.value(&x).map_err(|e| {
        Error::DomainViolation(format!("objective undefined at the starting point: {e}"))
    })?;
    let mut t_cur = 1.0f64;
    let mut l = problem.curvature_guess().max(1e-6);
    let mut y = x.clone();
    let mut mapping_norm = f64::INFINITY;

    for iter in 0..opts.max_iter {
        // Evaluate at the momentum point, falling back to the last accepted
        // iterate when extrapolation left the objective's domain.
        let (fy, gy) = match (problem.value(&y), problem.gradient(&y)) {
            (Ok(v), Ok(g)) => (v, g),
            _ => {
                y = x.clone();
                t_cur = 1.0;
                (fx, problem.gradient(&x)?)
            }
        };

        // Backtracking line search on the curvature estimate.
        l = (l * 0.9).max(1e-6);
        let mut cand = x.clone();
        let mut fc = fx;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = set.project(&(&y - &gy / l), proj_tol)?;
            match problem.value(&trial) {
                Ok(ft) => {
                    let d = &trial - &y;
                    let model = fy + gy.dot(&d) + 0.5 * l * d.norm_squared();
                    if ft <= model + 1e-12 * (1.0 + ft.abs()) {
                        cand = trial;
                        fc = ft;
                        accepted = true;
                        break;
                    }
                }
                Err(_) => {}
            }
            l *= 2.0;
            if l > 1e16 {
                return Err(Error::NonConvergence(
                    "line search exhausted: curvature estimate exceeded 1e16".into(),
                ));
            }
        }
        if !accepted {
            return Err(Error::NonConvergence(
                "line search failed to find a decreasing step".into(),
            ));
        }

        // Monotone safeguard with restart.
        let diff = if fc <= fx + 1e-12 * (1.0 + fx.abs()) {
            let d = &cand - &x;
            x = cand;
            fx = fc;
            d
        } else {
            t_cur = 1.0;
            DVector::zeros(x.len())
        };

        // Projected gradient mapping at the accepted iterate, with the step
        // matched to the line-search curvature. A unit step would be useless
        // here: under a penalty weight of 1e8 the gradient at a
        // machine-precision minimizer still has norm around 1e-8, so an
        // absolute tolerance could never be met.
        let gx = problem.gradient(&x)?;
        let mapped = set.project(&(&x - &gx / l), proj_tol)?;
        mapping_norm = (&x - &mapped).norm();
        if mapping_norm <= opts.tol * (1.0 + x.norm()) {
            return Ok(SmoothSolve {
                x,
                iterations: iter + 1,
            });
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_cur * t_cur).sqrt());
        let beta = (t_cur - 1.0) / t_next;
        y = &x + diff * beta;
        t_cur = t_next;
    }

    // Iteration cap reached: accept only a loosely stationary point.
    if mapping_norm <= 1e-6 * (1.0 + x.norm()) {
        Ok(SmoothSolve {
            x,
            iterations: opts.max_iter,
        })
    } else {
        Err(Error::NonConvergence(format!(
            "projected gradient mapping stalled at {mapping_norm:.3e} after {} iterations",
            opts.max_iter
        )))
    }
}

/// Length of one projected-gradient step whose curvature is found by the same
/// backtracking rule the solver uses. This measures accuracy in the argument,
/// so it stays meaningful no matter how large the objective's curvature is.
fn stationarity_measure(
    problem: &SmoothProblem<'_>,
    set: &Polyhedron,
    x: &DVector<f64>,
    proj_tol: f64,
) -> Result<f64> {
    let fx = problem.value(x)?;
    let gx = problem.gradient(x)?;
    let mut l = problem.curvature_guess().max(1.0);
    let mut last = f64::INFINITY;
    for _ in 0..80 {
        let trial = set.project(&(x - &gx / l), proj_tol)?;
        if let Ok(ft) = problem.value(&trial) {
            let d = &trial - x;
            last = d.norm();
            if ft <= fx + gx.dot(&d) + 0.5 * l * d.norm_squared() + 1e-12 * (1.0 + ft.abs()) {
                return Ok(last);
            }
        }
        l *= 2.0;
    }
    Ok(last)
}

// ---------------------------------------------------------------------------
// Constraint expansion and the epigraph lift
// ---------------------------------------------------------------------------

/// Splits `h(x) <= 0` with a nonsmooth `h` into per-piece smooth constraints
/// (a max is nonpositive exactly when every piece is).
fn expand_constraint(c: &ConvexFunction) -> Result<Vec<SmoothConvexFunction>> {
    match &c.max_part {
        None => Ok(vec![c.smooth.clone()]),
        Some(mp) => mp
            .pieces()
            .iter()
            .map(|piece| c.smooth.add(piece))
            .collect(),
    }
}

struct Lifted {
    dim: usize,
    base: SmoothConvexFunction,
    linear: DVector<f64>,
    prox_center: DVector<f64>,
    prox_dim: usize,
    set: Polyhedron,
    constraints: Vec<SmoothConvexFunction>,
    start: DVector<f64>,
}

fn assemble(spec: &SubproblemSpec) -> Result<Lifted> {
    let n = spec.objective.dim();
    if spec.linear.len() != n || spec.prox_center.len() != n || spec.set.dim() != n {
        return Err(Error::InvalidParams(format!(
            "subproblem pieces disagree on the dimension {n}"
        )));
    }
    if !(spec.prox_weight >= 0.0 && spec.prox_weight.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "proximal weight must be finite and nonnegative, got {}",
            spec.prox_weight
        )));
    }
    for c in &spec.constraints {
        if c.dim() != n {
            return Err(Error::InvalidParams(format!(
                "constraint of dimension {} in a problem of dimension {n}",
                c.dim()
            )));
        }
    }
    let start0 = spec.start.clone().unwrap_or_else(|| spec.prox_center.clone());
    if start0.len() != n {
        return Err(Error::InvalidParams(format!(
            "warm start of dimension {} in a problem of dimension {n}",
            start0.len()
        )));
    }

    let mut constraints: Vec<SmoothConvexFunction> = Vec::new();
    let lift = match &spec.objective.max_part {
        Some(mp) if mp.len() > 1 => true,
        _ => false,
    };

    if !lift {
        let mut base = spec.objective.smooth.clone();
        if let Some(mp) = &spec.objective.max_part {
            base = base.add(mp.piece(0))?;
        }
        for c in &spec.constraints {
            constraints.extend(expand_constraint(c)?);
        }
        return Ok(Lifted {
            dim: n,
            base,
            linear: spec.linear.clone(),
            prox_center: spec.prox_center.clone(),
            prox_dim: n,
            set: spec.set.clone(),
            constraints,
            start: start0,
        });
    }

    // Epigraph lift: minimize ... + t with m_k(x) - t <= 0 for each piece.
    let mp = spec.objective.max_part.as_ref().unwrap();
    let dim = n + 1;
    let base = spec.objective.smooth.pad_to(dim);
    let mut linear = DVector::zeros(dim);
    linear.rows_mut(0, n).copy_from(&spec.linear);
    linear[n] = 1.0;
    let mut prox_center = DVector::zeros(dim);
    prox_center.rows_mut(0, n).copy_from(&spec.prox_center);
    let set = spec.set.with_free_coordinate(f64::NEG_INFINITY, f64::INFINITY);

    let mut t_axis = DVector::zeros(dim);
    t_axis[n] = -1.0;
    let minus_t = SmoothConvexFunction::from_atom(Atom::affine(t_axis, 0.0));
    for piece in mp.pieces() {
        constraints.push(piece.pad_to(dim).add(&minus_t)?);
    }
    for c in &spec.constraints {
        for s in expand_constraint(c)? {
            constraints.push(s.pad_to(dim));
        }
    }

    let mut start = DVector::zeros(dim);
    start.rows_mut(0, n).copy_from(&start0);
    start[n] = mp.value(&start0)?;

    Ok(Lifted {
        dim,
        base,
        linear,
        prox_center,
        prox_dim: n,
        set,
        constraints,
        start,
    })
}

// ---------------------------------------------------------------------------
// Constrained drivers
// ---------------------------------------------------------------------------

fn solve_dual_bisection(
    lifted: &Lifted,
    opts: &SubsolverOptions,
) -> Result<(DVector<f64>, Vec<f64>, usize)> {
    let constraint = &lifted.constraints[0];
    let mut iterations = 0;
    let mut lambda_pair = [0.0f64];
    let solve_at = |lambda: &[f64; 1], start: &DVector<f64>, iters: &mut usize| -> Result<SmoothSolve> {
        let problem = SmoothProblem {
            base: &lifted.base,
            linear: &lifted.linear,
            prox_weight: 0.0,
            prox_center: &lifted.prox_center,
            prox_dim: lifted.prox_dim,
            constraints: std::slice::from_ref(constraint),
            penalty: Penalty::Linear(lambda),
        };
        let out = accelerated_solve(&problem, &lifted.set, start, opts)?;
        *iters += out.iterations;
        Ok(out)
    };

    let relaxed = solve_at(&lambda_pair, &lifted.start, &mut iterations)?;
    let h0 = constraint.value(&relaxed.x)?;
    if h0 <= opts.feas_tol {
        return Ok((relaxed.x, vec![0.0], iterations));
    }

    // Doubling search for a weight on the feasible side. When the constraint
    // is active at the optimum with no finite multiplier (the linearized set
    // has empty interior there, so no Slater point exists), the violation
    // decays to zero strictly from above and no finite weight brackets. The
    // weight cap keeps the inner curvature within what the line search can
    // certify, and on exhaustion the least-violating feasible-to-tolerance
    // iterate stands in for the unattainable exact solution — by then it is
    // within solver precision of it.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut x_hi = relaxed.x.clone();
    let mut bracketed = false;
    let mut best_tol: Option<(f64, DVector<f64>, f64)> = None;
    let mut last_violation = h0;
    while hi <= 4e13 {
        lambda_pair[0] = hi;
        // At degenerate pinches the weighted term carries a large constant
        // whose cancellation noise eventually drowns the line search; once a
        // feasible-to-tolerance iterate is banked, an inner failure at a
        // larger weight just means the exact answer is out of reach.
        let out = match solve_at(&lambda_pair, &x_hi, &mut iterations) {
            Ok(out) => out,
            Err(e) => {
                if best_tol.is_some() {
                    break;
                }
                return Err(e);
            }
        };
        x_hi = out.x;
        last_violation = constraint.value(&x_hi)?;
        if last_violation <= 0.0 {
            bracketed = true;
            break;
        }
        if last_violation <= opts.feas_tol
            && best_tol
                .as_ref()
                .map_or(true, |(v, _, _)| last_violation < *v)
        {
            best_tol = Some((last_violation, x_hi.clone(), hi));
        }
        lo = hi;
        hi *= 2.0;
    }
    if !bracketed {
        if let Some((_, x, lambda)) = best_tol {
            return Ok((x, vec![lambda], iterations));
        }
        return Err(Error::Infeasible(format!(
            "the extra constraint stayed above tolerance through the dual search (residual \
             {last_violation:.3e} at weight {lo:.3e}); the constrained subproblem is infeasible \
             or its multiplier is unbounded"
        )));
    }

    // Refine toward complementarity, keeping the feasible-side iterate. Once
    // that iterate sits within feas_tol of the boundary the slack is as tight
    // as the feasibility contract asks for; further bisection only burns
    // high-curvature inner solves.
    let mut x_best = x_hi.clone();
    for _ in 0..60 {
        if constraint.value(&x_best)? >= -opts.feas_tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        lambda_pair[0] = mid;
        let out = solve_at(&lambda_pair, &x_best, &mut iterations)?;
        if constraint.value(&out.x)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            x_best = out.x;
        }
    }
    Ok((x_best, vec![hi], iterations))
}

fn solve_augmented(
    lifted: &Lifted,
    prox_weight: f64,
    opts: &SubsolverOptions,
) -> Result<(DVector<f64>, Vec<f64>, usize)> {
    let m = lifted.constraints.len();
    let mut lambda = vec![0.0f64; m];
    let mut rho = 10.0f64;
    let mut x = lifted.start.clone();
    let mut iterations = 0;
    let mut prev_worst = f64::INFINITY;

    for _outer in 0..60 {
        let problem = SmoothProblem {
            base: &lifted.base,
            linear: &lifted.linear,
            prox_weight,
            prox_center: &lifted.prox_center,
            prox_dim: lifted.prox_dim,
            constraints: &lifted.constraints,
            penalty: Penalty::Augmented(&lambda, rho),
        };
        let out = accelerated_solve(&problem, &lifted.set, &x, opts)?;
        iterations += out.iterations;
        x = out.x;

        let mut worst = 0.0f64;
        let mut values = Vec::with_capacity(m);
        for c in &lifted.constraints {
            let v = c.value(&x)?;
            values.push(v);
            worst = worst.max(pos(v));
        }
        if worst <= opts.feas_tol {
            for j in 0..m {
                lambda[j] = pos(lambda[j] + rho * values[j]);
            }
            return Ok((x, lambda, iterations));
        }
        for j in 0..m {
            lambda[j] = pos(lambda[j] + rho * values[j]);
        }
        if worst > 0.25 * prev_worst {
            rho = (rho * 10.0).min(1e8);
        }
        prev_worst = worst;
    }
    Err(Error::NonConvergence(format!(
        "augmented Lagrangian loop left a constraint violation of {prev_worst:.3e}"
    )))
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

/// Solves the proximal subproblem described by `spec`.
pub fn solve(spec: &SubproblemSpec, opts: &SubsolverOptions) -> Result<SubproblemResult> {
    let lifted = assemble(spec)?;
    let n = spec.objective.dim();

    let (x_full, multipliers, iterations) = if lifted.constraints.is_empty() {
        let problem = SmoothProblem {
            base: &lifted.base,
            linear: &lifted.linear,
            prox_weight: spec.prox_weight,
            prox_center: &lifted.prox_center,
            prox_dim: lifted.prox_dim,
            constraints: &[],
            penalty: Penalty::None,
        };
        let out = accelerated_solve(&problem, &lifted.set, &lifted.start, opts)?;
        (out.x, Vec::new(), out.iterations)
    } else if lifted.constraints.len() == 1 && spec.prox_weight > 0.0 {
        // Fold the prox term into the base so the dual inner solves stay
        // strongly convex, then run the bisection.
        let mut folded = lifted;
        let mut q = nalgebra::DMatrix::zeros(folded.dim, folded.dim);
        for i in 0..folded.prox_dim {
            q[(i, i)] = spec.prox_weight;
        }
        let mut c = DVector::zeros(folded.dim);
        for i in 0..folded.prox_dim {
            c[i] = -spec.prox_weight * folded.prox_center[i];
        }
        folded.base = folded
            .base
            .add(&SmoothConvexFunction::from_atom(Atom::quadratic_unchecked(
                q, c, 0.0,
            )))?;
        solve_dual_bisection(&folded, opts)?
    } else if lifted.constraints.len() == 1 {
        solve_dual_bisection(&lifted, opts)?
    } else {
        solve_augmented(&lifted, spec.prox_weight, opts)?
    };

    let x = DVector::from_fn(n, |i, _| x_full[i]);

    // Report the objective in the caller's terms and a stationarity measure
    // for the final Lagrangian in the lifted space.
    let mut objective_value = spec.objective.value(&x)? + spec.linear.dot(&x);
    if spec.prox_weight > 0.0 {
        objective_value += 0.5 * spec.prox_weight * (&x - &spec.prox_center).norm_squared();
    }

    let lifted2 = assemble(spec)?;
    let lagrangian = SmoothProblem {
        base: &lifted2.base,
        linear: &lifted2.linear,
        prox_weight: spec.prox_weight,
        prox_center: &lifted2.prox_center,
        prox_dim: lifted2.prox_dim,
        constraints: &lifted2.constraints,
        penalty: if multipliers.is_empty() {
            Penalty::None
        } else {
            Penalty::Linear(&multipliers)
        },
    };
    let mut kkt_residual = stationarity_measure(
        &lagrangian,
        &lifted2.set,
        &x_full,
        (opts.tol * 1e-2).max(1e-13),
    )?;
    for c in &lifted2.constraints {
        kkt_residual = kkt_residual.max(pos(c.value(&x_full)?));
    }

    Ok(SubproblemResult {
        x,
        objective_value,
        kkt_residual,
        iterations,
        multipliers,
    })
}

/// Searches for a point of `X` satisfying all constraints by minimizing the
/// squared-hinge surrogate; reports the best point and its true residual.
pub fn feasibility_probe(
    constraints: &[ConvexFunction],
    set: &Polyhedron,
    start: &DVector<f64>,
    opts: &SubsolverOptions,
) -> Result<FeasibilityReport> {
    let n = set.dim();
    let residual_at = |x: &DVector<f64>| -> Result<f64> {
        let mut r = 0.0;
        for c in constraints {
            r += pos(c.value(x)?);
        }
        Ok(r)
    };

    let projected = set.project(start, 1e-12)?;
    if let Ok(r0) = residual_at(&projected) {
        if r0 == 0.0 {
            return Ok(FeasibilityReport {
                witness: projected,
                residual: 0.0,
            });
        }
    }

    let mut expanded: Vec<SmoothConvexFunction> = Vec::new();
    for c in constraints {
        expanded.extend(expand_constraint(c)?);
    }
    let base = SmoothConvexFunction::zero(n);
    let linear = DVector::zeros(n);
    let lambda = vec![0.0f64; expanded.len()];
    let problem = SmoothProblem {
        base: &base,
        linear: &linear,
        prox_weight: 1e-6,
        prox_center: &projected,
        prox_dim: n,
        constraints: &expanded,
        penalty: Penalty::Augmented(&lambda, 2.0),
    };
    let out = accelerated_solve(&problem, set, &projected, opts)?;
    let residual = residual_at(&out.x)?;
    Ok(FeasibilityReport {
        witness: out.x,
        residual,
    })
}

//! Stationarity certificates.
//!
//! Three graded checks for a point of a dc program, ordered from sharpest to
//! weakest:
//!
//! * `check_d_stationary` — every active piece's proximal subproblem returns
//!   the point itself;
//! * `check_critical` — some convex combination of active-piece gradients
//!   does (the fixed-point condition of the classical iteration);
//! * `check_clarke` — the smooth gradient is covered by the convex hull of
//!   active-piece gradients plus the normal cone (smooth convex part only).
//!
//! A Pass at a sharper level implies a Pass at the weaker ones; the reverse
//! fails on well-known one-dimensional examples, which the test corpus pins.

use nalgebra::{DMatrix, DVector};

use crate::dca::DcProgram;
use crate::funcs::{Atom, ConvexFunction, SmoothConvexFunction, TOL_ACTIVE};
use crate::sets::Polyhedron;
use crate::subsolver::{self, SubproblemSpec, SubsolverOptions};
use crate::{Error, Result};

/// Which stationarity notion a certificate speaks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    D,
    Critical,
    Clarke,
    B,
}

impl CertificateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertificateKind::D => "d",
            CertificateKind::Critical => "critical",
            CertificateKind::Clarke => "clarke",
            CertificateKind::B => "b",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// Outcome of a stationarity check.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub verdict: Verdict,
    /// Largest stationarity violation found (0 means exactly stationary).
    pub residual: f64,
    /// On Fail: an improving point (d/critical/B) or an uncovered gradient
    /// direction (Clarke).
    pub witness: Option<DVector<f64>>,
    /// For B certificates: whether the constraint-qualification probe held
    /// at every active constraint piece. `None` for the other kinds.
    pub cq_verified: Option<bool>,
    /// Free-form diagnostics (search incompleteness, per-piece outcomes).
    pub notes: Vec<String>,
}

/// Active-set margin used by all checks: never tighter than the global
/// numeric tie band, never looser than the requested tolerance.
pub(crate) fn certificate_margin(tol: f64) -> f64 {
    TOL_ACTIVE.max(tol)
}

fn require_feasible(set: &Polyhedron, x: &DVector<f64>, tol: f64) -> Result<()> {
    if !set.contains(x, tol.max(1e-12)) {
        return Err(Error::NotFeasible(format!(
            "certificate query at an infeasible point (violation {:.3e})",
            set.violation(x)
        )));
    }
    Ok(())
}

/// One proximal subproblem for a fixed linearization gradient, returning the
/// minimizer, its displacement from the center, and the subproblem decrease.
fn prox_probe(
    phi: &ConvexFunction,
    set: &Polyhedron,
    center: &DVector<f64>,
    grad: &DVector<f64>,
    sub: &SubsolverOptions,
) -> Result<(DVector<f64>, f64, f64)> {
    let spec = SubproblemSpec::prox_step(
        phi.clone(),
        -grad.clone(),
        1.0,
        center.clone(),
        set.clone(),
    );
    let sol = subsolver::solve(&spec, sub)?;
    let displacement = (&sol.x - center).norm();
    let val_at = phi.value(&sol.x)? - grad.dot(&(&sol.x - center))
        + 0.5 * displacement * displacement;
    let decrease = phi.value(center)? - val_at;
    Ok((sol.x, displacement, decrease))
}

/// Directional stationarity: for every numerically active piece, the
/// proximal subproblem linearized at that piece must return the point
/// itself (within `tol`).
pub fn check_d_stationary(
    program: &DcProgram,
    x_bar: &DVector<f64>,
    tol: f64,
) -> Result<Certificate> {
    let group = single_group(program)?;
    require_feasible(&program.set, x_bar, tol)?;
    let sub = SubsolverOptions::default();
    let margin = certificate_margin(tol);
    let active = group.active_indices(x_bar, margin)?;

    let mut worst = 0.0f64;
    let mut best_witness: Option<(f64, DVector<f64>)> = None;
    for &i in &active {
        let grad = group.piece(i).gradient(x_bar)?;
        let (x_hat, displacement, decrease) =
            prox_probe(&program.phi, &program.set, x_bar, &grad, &sub)?;
        worst = worst.max(displacement);
        if displacement > tol {
            let replace = match &best_witness {
                None => true,
                Some((d, _)) => decrease > *d,
            };
            if replace {
                best_witness = Some((decrease, x_hat));
            }
        }
    }

    Ok(Certificate {
        kind: CertificateKind::D,
        verdict: if worst <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        residual: worst,
        witness: best_witness.map(|(_, x)| x),
        cq_verified: None,
        notes: vec![],
    })
}

/// Criticality: searches for a convex combination of active-piece gradients
/// whose proximal subproblem keeps the point fixed. The search is projected
/// supergradient ascent over the simplex (sound on Pass; a Fail may in
/// principle miss a certifying combination, which the notes record).
pub fn check_critical(
    program: &DcProgram,
    x_bar: &DVector<f64>,
    tol: f64,
) -> Result<Certificate> {
    let group = single_group(program)?;
    require_feasible(&program.set, x_bar, tol)?;
    let sub = SubsolverOptions::default();
    let margin = certificate_margin(tol);
    let active = group.active_indices(x_bar, margin)?;
    let gradients: Vec<DVector<f64>> = active
        .iter()
        .map(|&i| group.piece(i).gradient(x_bar))
        .collect::<Result<_>>()?;
    let ell = gradients.len();
    let phi_at = program.phi.value(x_bar)?;

    // Inner value of a mixed-gradient subproblem, <= 0 with equality exactly
    // when the point is a fixed point for that combination.
    let mut warm = x_bar.clone();
    let evaluate = |lambda: &DVector<f64>,
                        warm: &mut DVector<f64>|
     -> Result<(f64, DVector<f64>, DVector<f64>)> {
        let mut g = DVector::zeros(x_bar.len());
        for (l, gi) in lambda.iter().zip(&gradients) {
            g.axpy(*l, gi, 1.0);
        }
        let spec = SubproblemSpec {
            objective: program.phi.clone(),
            linear: -&g,
            prox_weight: 1.0,
            prox_center: x_bar.clone(),
            set: program.set.clone(),
            constraints: vec![],
            start: Some(warm.clone()),
        };
        let sol = subsolver::solve(&spec, &sub)?;
        let d = &sol.x - x_bar;
        let value = program.phi.value(&sol.x)? - g.dot(&d) + 0.5 * d.norm_squared() - phi_at;
        let supergrad = DVector::from_fn(ell, |i, _| -gradients[i].dot(&d));
        *warm = sol.x.clone();
        Ok((value, sol.x, supergrad))
    };

    let mut best_value = f64::NEG_INFINITY;
    let mut best_point = x_bar.clone();

    // Vertices first (these coincide with the per-piece d-subproblems).
    for i in 0..ell {
        let mut e = DVector::zeros(ell);
        e[i] = 1.0;
        let (v, x_hat, _) = evaluate(&e, &mut warm)?;
        if v > best_value {
            best_value = v;
            best_point = x_hat;
        }
        if best_value >= -tol {
            break;
        }
    }

    if best_value < -tol && ell > 1 {
        let mut lambda = DVector::from_element(ell, 1.0 / ell as f64);
        for k in 0..500 {
            let (v, x_hat, sg) = evaluate(&lambda, &mut warm)?;
            if v > best_value {
                best_value = v;
                best_point = x_hat;
            }
            if best_value >= -tol {
                break;
            }
            let step = 0.5 / ((k + 1) as f64).sqrt() / (1.0 + sg.norm());
            lambda = crate::util::project_simplex(&(&lambda + sg * step));
        }
    }

    let pass = best_value >= -tol;
    let mut notes = vec![];
    if !pass {
        notes.push(
            "simplex search exhausted without a certifying combination; a Fail from this \
             search is strong evidence but not a proof of non-criticality"
                .into(),
        );
    }
    Ok(Certificate {
        kind: CertificateKind::Critical,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        residual: (-best_value).max(0.0),
        witness: if pass { None } else { Some(best_point) },
        cq_verified: None,
        notes,
    })
}

/// Clarke stationarity for programs whose convex part is smooth: distance
/// from the gradient to the convex hull of active-piece gradients plus the
/// normal cone, computed by one convex quadratic solve.
pub fn check_clarke(program: &DcProgram, x_bar: &DVector<f64>, tol: f64) -> Result<Certificate> {
    if program.phi.max_part.is_some() {
        return Err(Error::UnsupportedStructure(
            "the Clarke check needs a smooth convex part; it is exact only there".into(),
        ));
    }
    let group = single_group(program)?;
    require_feasible(&program.set, x_bar, tol)?;
    let margin = certificate_margin(tol);
    let active = group.active_indices(x_bar, margin)?;
    let v = program.phi.smooth.gradient(x_bar)?;
    let normals = program.set.normal_generators(x_bar, margin)?;
    let n = x_bar.len();
    let ell = active.len();
    let m = normals.len();

    // minimize (1/2) || v - G lambda + W mu ||^2 over the simplex in lambda
    // and mu >= 0, with B = [G | -W].
    let mut b_mat = DMatrix::zeros(n, ell + m);
    for (col, &i) in active.iter().enumerate() {
        b_mat.column_mut(col).copy_from(&group.piece(i).gradient(x_bar)?);
    }
    for (k, w) in normals.iter().enumerate() {
        b_mat.column_mut(ell + k).copy_from(&(-w));
    }

    let q = &b_mat.transpose() * &b_mat;
    let c = -(&b_mat.transpose() * &v);
    let objective = ConvexFunction::smooth_only(SmoothConvexFunction::from_atom(
        Atom::quadratic(q, c, 0.5 * v.norm_squared())?,
    ));
    let mut lower = DVector::zeros(ell + m);
    let mut upper = DVector::from_element(ell + m, f64::INFINITY);
    for i in 0..ell {
        lower[i] = 0.0;
        upper[i] = 1.0;
    }
    for i in ell..ell + m {
        lower[i] = 0.0;
    }
    let mut rows = DMatrix::zeros(2, ell + m);
    for i in 0..ell {
        rows[(0, i)] = 1.0;
        rows[(1, i)] = -1.0;
    }
    let rhs = DVector::from_vec(vec![1.0, -1.0]);
    let simplex_cross = Polyhedron::new(lower, upper, rows, rhs)?;

    let mut start = DVector::zeros(ell + m);
    for i in 0..ell {
        start[i] = 1.0 / ell as f64;
    }
    let spec = SubproblemSpec {
        objective,
        linear: DVector::zeros(ell + m),
        prox_weight: 0.0,
        prox_center: start.clone(),
        set: simplex_cross,
        constraints: vec![],
        start: Some(start),
    };
    let sol = subsolver::solve(&spec, &SubsolverOptions::default())?;
    let residual_vec = &v - &b_mat * &sol.x;
    let residual = residual_vec.norm();
    let pass = residual <= tol;

    Ok(Certificate {
        kind: CertificateKind::Clarke,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        residual,
        witness: if pass { None } else { Some(residual_vec) },
        cq_verified: None,
        notes: vec![],
    })
}

fn single_group(program: &DcProgram) -> Result<&crate::funcs::PiecewiseMaxConvex> {
    if program.groups.len() != 1 {
        return Err(Error::InvalidParams(
            "certificates need a single-group program; call flatten_groups first".into(),
        ));
    }
    Ok(&program.groups[0])
}

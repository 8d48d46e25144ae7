//! Dc-constrained dc programs.
//!
//! One dc constraint `phi_c(x) - max_j psi_{c,j}(x) <= 0` on top of a
//! [`DcProgram`]. Several such constraints are merged into one by the
//! max-function identity, so the rest of the module only ever deals with a
//! single constraint. Two solution approaches:
//!
//! * [`algorithm_two`] keeps every iterate feasible by working over the
//!   convex inner approximations obtained by linearizing one active concave
//!   piece (hard feasible-start precondition);
//! * [`penalty_solve`] moves the constraint into the objective with a growing
//!   weight and classifies the limit.
//!
//! [`check_B_stationary`] grades a candidate point against the piecewise
//! tangent structure, with a pointwise Slater probe per active piece.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::certify::{certificate_margin, Certificate, CertificateKind, Verdict};
use crate::dca::{
    self, admit_start, initial_row, DcProgram, SolveOptions, SolveReport, Termination, TraceRow,
    TUPLE_CAP,
};
use crate::funcs::{
    tuple_sum, Atom, ConvexFunction, PiecewiseMaxConvex, SmoothConvexFunction,
};
use crate::subsolver::{self, SubproblemSpec, SubsolverOptions};
use crate::{Error, Result};

/// A single dc constraint `phi_c(x) - max_j psi_{c,j}(x) <= 0`.
#[derive(Debug, Clone)]
pub struct DcConstraint {
    /// Convex side (smooth plus optional max part).
    pub phi_c: ConvexFunction,
    /// Concave side, as the pointwise max of smooth convex pieces.
    pub psi_c: PiecewiseMaxConvex,
}

impl DcConstraint {
    pub fn new(phi_c: ConvexFunction, psi_c_pieces: Vec<SmoothConvexFunction>) -> Result<DcConstraint> {
        let psi_c = PiecewiseMaxConvex::new(psi_c_pieces)?;
        if phi_c.dim() != psi_c.dim() {
            return Err(Error::InvalidParams(format!(
                "constraint sides disagree on dimension: {} vs {}",
                phi_c.dim(),
                psi_c.dim()
            )));
        }
        Ok(DcConstraint { phi_c, psi_c })
    }

    pub fn dim(&self) -> usize {
        self.phi_c.dim()
    }

    /// Constraint residual `phi_c(x) - max_j psi_{c,j}(x)`; feasible iff <= 0.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.phi_c.value(x)? - self.psi_c.value(x)?)
    }

    /// Active concave-piece indices (the set the linearizations range over).
    pub fn active_indices(&self, x: &DVector<f64>, margin: f64) -> Result<Vec<usize>> {
        self.psi_c.active_indices(x, margin)
    }

    /// The convex function `x -> phi_c(x) - psi_{c,j}(x_bar) - grad'(x - x_bar)`
    /// whose 0-sublevel set (intersected with the base polyhedron) is the
    /// inner approximation of the dc feasible set at `x_bar`.
    pub(crate) fn linearized_at(&self, j: usize, x_bar: &DVector<f64>) -> Result<ConvexFunction> {
        let piece = self.psi_c.piece(j);
        let g = piece.gradient(x_bar)?;
        let b = g.dot(x_bar) - piece.value(x_bar)?;
        let smooth = self
            .phi_c
            .smooth
            .add(&SmoothConvexFunction::from_atom(Atom::affine(-g, b)))?;
        ConvexFunction::new(smooth, self.phi_c.max_part.clone())
    }
}

/// A dc program together with one dc constraint.
#[derive(Debug, Clone)]
pub struct ConstrainedDcProgram {
    pub base: DcProgram,
    pub constraint: DcConstraint,
}

impl ConstrainedDcProgram {
    pub fn new(base: DcProgram, constraint: DcConstraint) -> Result<ConstrainedDcProgram> {
        if base.dim() != constraint.dim() {
            return Err(Error::InvalidParams(format!(
                "objective dimension {} does not match constraint dimension {}",
                base.dim(),
                constraint.dim()
            )));
        }
        Ok(ConstrainedDcProgram { base, constraint })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Constraint residual at `x` (nonpositive on the dc feasible set).
    pub fn constraint_value(&self, x: &DVector<f64>) -> Result<f64> {
        self.constraint.value(x)
    }

    /// Membership in the dc feasible set, with a relative band on the
    /// constraint residual.
    pub fn is_feasible(&self, x: &DVector<f64>, tol: f64) -> Result<bool> {
        if !self.base.set.contains(x, tol) {
            return Ok(false);
        }
        let scale = 1.0 + self.constraint.psi_c.value(x)?.abs();
        Ok(self.constraint_value(x)? <= tol * scale)
    }

    /// Same program with the base's grouped concave part flattened to a
    /// single max (the form the constrained solvers need).
    pub fn flatten_base(&self) -> Result<ConstrainedDcProgram> {
        Ok(ConstrainedDcProgram {
            base: self.base.flatten_groups()?,
            constraint: self.constraint.clone(),
        })
    }
}

/// Merges finitely many dc constraints with smooth concave sides into one,
/// pointwise equal to their max: the new convex side is
/// `max_j (phi_{c,j} + sum_{l != j} varphi_{c,l})`, the new concave side the
/// single smooth piece `sum_l varphi_{c,l}`.
pub fn merge_constraints(
    items: &[(ConvexFunction, SmoothConvexFunction)],
) -> Result<DcConstraint> {
    if items.is_empty() {
        return Err(Error::InvalidParams(
            "merge needs at least one constraint".into(),
        ));
    }
    let dim = items[0].0.dim();
    for (phi_cj, varphi_cj) in items {
        if phi_cj.dim() != dim || varphi_cj.dim() != dim {
            return Err(Error::InvalidParams(
                "all constraints must share a dimension".into(),
            ));
        }
    }
    if items.len() == 1 {
        return DcConstraint::new(items[0].0.clone(), vec![items[0].1.clone()]);
    }

    let mut total = items[0].1.clone();
    for (_, v) in &items[1..] {
        total = total.add(v)?;
    }

    let mut pieces = Vec::new();
    for j in 0..items.len() {
        let mut partial = SmoothConvexFunction::zero(dim);
        for (l, (_, v)) in items.iter().enumerate() {
            if l != j {
                partial = partial.add(v)?;
            }
        }
        for p in items[j].0.as_pieces()? {
            pieces.push(p.add(&partial)?);
        }
    }
    let phi_c = ConvexFunction::new(
        SmoothConvexFunction::zero(dim),
        Some(PiecewiseMaxConvex::new(pieces)?),
    )?;
    DcConstraint::new(phi_c, vec![total])
}

/// Generalization of [`merge_constraints`] to nonsmooth concave sides: each
/// `sum_{l != j} varphi_{c,l}` becomes a max over index tuples, so the piece
/// counts multiply. Refuses beyond `cap` pieces.
pub fn merge_dc_constraints(
    items: &[(ConvexFunction, PiecewiseMaxConvex)],
    cap: usize,
) -> Result<DcConstraint> {
    if items.is_empty() {
        return Err(Error::InvalidParams(
            "merge needs at least one constraint".into(),
        ));
    }
    let dim = items[0].0.dim();
    for (phi_cj, varphi_cj) in items {
        if phi_cj.dim() != dim || varphi_cj.dim() != dim {
            return Err(Error::InvalidParams(
                "all constraints must share a dimension".into(),
            ));
        }
    }
    if items.len() == 1 {
        return Ok(DcConstraint {
            phi_c: items[0].0.clone(),
            psi_c: items[0].1.clone(),
        });
    }

    let concaves: Vec<PiecewiseMaxConvex> = items.iter().map(|(_, v)| v.clone()).collect();
    let varphi_c = tuple_sum(&concaves, cap)?;

    let mut pieces = Vec::new();
    for j in 0..items.len() {
        let others: Vec<PiecewiseMaxConvex> = concaves
            .iter()
            .enumerate()
            .filter(|(l, _)| *l != j)
            .map(|(_, v)| v.clone())
            .collect();
        let others_sum = tuple_sum(&others, cap)?;
        let own = items[j].0.as_pieces()?;
        let count = pieces.len() + own.len() * others_sum.len();
        if count > cap {
            return Err(Error::TupleExplosion { count, cap });
        }
        for p in &own {
            for o in others_sum.pieces() {
                pieces.push(p.add(o)?);
            }
        }
    }
    Ok(DcConstraint {
        phi_c: ConvexFunction::new(
            SmoothConvexFunction::zero(dim),
            Some(PiecewiseMaxConvex::new(pieces)?),
        )?,
        psi_c: varphi_c,
    })
}

/// Outcome of a pointwise Slater probe.
#[derive(Debug, Clone)]
pub struct SlaterReport {
    /// Whether a strictly feasible direction for the linearized constraint
    /// exists at the queried piece.
    pub holds: bool,
    /// Minimizer of the linearized constraint over the base polyhedron.
    pub witness: DVector<f64>,
    /// Its linearized-constraint value (negative iff the probe holds).
    pub value: f64,
}

/// Pointwise Slater probe at `x_bar` for active concave piece `j`: minimizes
/// the linearized constraint over the base polyhedron (with a tiny proximal
/// term for uniqueness) and reports whether the minimum is strictly negative.
/// Pass `delta <= 0` to use the scale-relative default threshold.
pub fn slater_check(
    program: &ConstrainedDcProgram,
    x_bar: &DVector<f64>,
    j: usize,
    delta: f64,
) -> Result<SlaterReport> {
    let margin = certificate_margin(delta.max(0.0));
    if !program.base.set.contains(x_bar, margin.max(1e-8)) {
        return Err(Error::NotFeasible(
            "Slater probe queried outside the base polyhedron".into(),
        ));
    }
    if j >= program.constraint.psi_c.len() {
        return Err(Error::InvalidParams(format!(
            "piece index {j} out of range for a {}-piece concave side",
            program.constraint.psi_c.len()
        )));
    }
    let piece = program.constraint.psi_c.piece(j);
    let psi_j = piece.value(x_bar)?;
    let varphi = program.constraint.psi_c.value(x_bar)?;
    let phi_c = program.constraint.phi_c.value(x_bar)?;
    let scale = 1.0 + varphi.abs();
    if phi_c < varphi - margin.max(1e-8) * scale {
        return Err(Error::NotOnBoundary(format!(
            "constraint inactive at the query point (slack {:.3e}); the tangent cone is the \
             polyhedron's there and the probe is moot",
            varphi - phi_c
        )));
    }
    if psi_j < varphi - margin * scale {
        return Err(Error::InvalidParams(format!(
            "piece {j} is not active at the query point"
        )));
    }

    let g = piece.gradient(x_bar)?;
    let spec = SubproblemSpec {
        objective: program.constraint.phi_c.clone(),
        linear: -&g,
        prox_weight: 1e-6,
        prox_center: x_bar.clone(),
        set: program.base.set.clone(),
        constraints: vec![],
        start: Some(x_bar.clone()),
    };
    let sol = subsolver::solve(&spec, &SubsolverOptions::default())?;
    let value =
        program.constraint.phi_c.value(&sol.x)? - psi_j - g.dot(&(&sol.x - x_bar));
    let delta_eff = if delta > 0.0 {
        delta
    } else {
        1e-8 * (1.0 + psi_j.abs())
    };
    Ok(SlaterReport {
        holds: value < -delta_eff,
        witness: sol.x,
        value,
    })
}

/// B-stationarity certificate. Where the dc constraint is inactive this is
/// the plain directional check on the polyhedron; on the boundary it runs one
/// proximal subproblem per (objective piece, constraint piece) pair over the
/// corresponding inner approximation, and reports whether the Slater probe
/// backed every piece (`cq_verified`).
#[allow(non_snake_case)]
pub fn check_B_stationary(
    program: &ConstrainedDcProgram,
    x_bar: &DVector<f64>,
    tol: f64,
) -> Result<Certificate> {
    let group = program.base.single_group()?;
    let margin = certificate_margin(tol);
    if !program.base.set.contains(x_bar, tol.max(1e-12)) {
        return Err(Error::NotFeasible(
            "B-stationarity queried outside the base polyhedron".into(),
        ));
    }
    let zc = program.constraint_value(x_bar)?;
    let scale = 1.0 + program.constraint.psi_c.value(x_bar)?.abs();
    if zc > margin * scale {
        return Err(Error::NotFeasible(format!(
            "B-stationarity queried at a dc-infeasible point (violation {zc:.3e})"
        )));
    }

    if zc < -margin * scale {
        let inner = crate::certify::check_d_stationary(&program.base, x_bar, tol)?;
        let mut notes = inner.notes;
        notes.push(
            "dc constraint inactive here; the feasible set is locally the base polyhedron and \
             the directional check applies verbatim"
                .into(),
        );
        return Ok(Certificate {
            kind: CertificateKind::B,
            verdict: inner.verdict,
            residual: inner.residual,
            witness: inner.witness,
            cq_verified: Some(true),
            notes,
        });
    }

    let actives_i = group.active_indices(x_bar, margin)?;
    let actives_j = program.constraint.active_indices(x_bar, margin)?;
    let sub = SubsolverOptions::default();
    let phi_at = program.base.phi.value(x_bar)?;

    let mut cq_all = true;
    let mut notes = vec![];
    let mut worst = 0.0f64;
    let mut best_witness: Option<(f64, DVector<f64>)> = None;
    for &j in &actives_j {
        match slater_check(program, x_bar, j, 0.0) {
            Ok(r) => {
                if !r.holds {
                    cq_all = false;
                    notes.push(format!(
                        "Slater probe failed for concave piece {j} (linearized minimum {:.3e}); \
                         the inner approximation may not span the tangent cone",
                        r.value
                    ));
                }
            }
            Err(Error::NotOnBoundary(_)) | Err(Error::InvalidParams(_)) => {
                cq_all = false;
                notes.push(format!("Slater probe inconclusive for concave piece {j}"));
            }
            Err(e) => return Err(e),
        }

        let c_j = program.constraint.linearized_at(j, x_bar)?;
        for &i in &actives_i {
            let grad = group.piece(i).gradient(x_bar)?;
            let spec = SubproblemSpec {
                objective: program.base.phi.clone(),
                linear: -&grad,
                prox_weight: 1.0,
                prox_center: x_bar.clone(),
                set: program.base.set.clone(),
                constraints: vec![c_j.clone()],
                start: Some(x_bar.clone()),
            };
            match subsolver::solve(&spec, &sub) {
                Ok(sol) => {
                    let d = &sol.x - x_bar;
                    let displacement = d.norm();
                    worst = worst.max(displacement);
                    if displacement > tol {
                        let decrease = phi_at
                            - (program.base.phi.value(&sol.x)? - grad.dot(&d)
                                + 0.5 * displacement * displacement);
                        let replace = match &best_witness {
                            None => true,
                            Some((dec, _)) => decrease > *dec,
                        };
                        if replace {
                            best_witness = Some((decrease, sol.x));
                        }
                    }
                }
                Err(Error::Infeasible(_)) => {
                    notes.push(format!(
                        "inner approximation for pieces ({i}, {j}) numerically empty; no descent \
                         available in that branch"
                    ));
                }
                Err(e) => return Err(e),
            }
        }
    }

    Ok(Certificate {
        kind: CertificateKind::B,
        verdict: if worst <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        residual: worst,
        witness: best_witness.map(|(_, x)| x),
        cq_verified: Some(cq_all),
        notes,
    })
}

struct PairCandidate {
    x: DVector<f64>,
    merit: f64,
    kkt: f64,
    fallback: bool,
}

/// The feasible-start method: per iteration, one strongly convex subproblem
/// per (epsilon-active objective piece, epsilon-active constraint piece) over
/// the inner approximation for that constraint piece; numerically empty
/// approximations fall back to the current iterate. Requires a dc-feasible
/// start and keeps every iterate dc-feasible.
pub fn algorithm_two(
    program: &ConstrainedDcProgram,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let group = program.base.single_group()?;
    let fb = opts.subsolver.feas_tol.max(1e-12);
    if !program.is_feasible(x0, fb)? {
        return Err(Error::InfeasibleStart(format!(
            "the feasible-start method needs a dc-feasible start; constraint residual {:.3e}, \
             polyhedron violation {:.3e}",
            program.constraint_value(x0)?,
            program.base.set.violation(x0)
        )));
    }

    let mut x = x0.clone();
    let mut zeta = program.base.zeta(&x)?;
    let mut trace = vec![initial_row(&x, zeta)];
    let mut termination = Termination::MaxIter;
    let mut stall_count = 0usize;

    for iter in 1..=opts.max_iter {
        let t0 = Instant::now();
        let actives_i = group.active_indices(&x, opts.epsilon)?;
        let actives_j = program.constraint.active_indices(&x, opts.epsilon)?;

        // One linearized constraint per active concave piece, with a
        // feasibility probe deciding emptiness of its inner approximation.
        struct Branch {
            c: ConvexFunction,
            start: DVector<f64>,
            feasible: bool,
        }
        let mut branches = Vec::with_capacity(actives_j.len());
        for &j in &actives_j {
            let c = program.constraint.linearized_at(j, &x)?;
            let probe = subsolver::feasibility_probe(
                std::slice::from_ref(&c),
                &program.base.set,
                &x,
                &opts.subsolver,
            )?;
            let feasible = probe.residual <= fb;
            branches.push(Branch {
                c,
                start: probe.witness,
                feasible,
            });
        }

        let mut jobs = Vec::with_capacity(actives_i.len() * branches.len());
        for &i in &actives_i {
            let grad = group.piece(i).gradient(&x)?;
            for branch in &branches {
                jobs.push((grad.clone(), branch));
            }
        }

        let solve_job = |grad: &DVector<f64>, branch: &Branch| -> Result<PairCandidate> {
            if !branch.feasible {
                return Ok(PairCandidate {
                    x: x.clone(),
                    merit: zeta,
                    kkt: 0.0,
                    fallback: true,
                });
            }
            let spec = SubproblemSpec {
                objective: program.base.phi.clone(),
                linear: -grad,
                prox_weight: 1.0,
                prox_center: x.clone(),
                set: program.base.set.clone(),
                constraints: vec![branch.c.clone()],
                start: Some(branch.start.clone()),
            };
            match subsolver::solve(&spec, &opts.subsolver) {
                Ok(sol) => {
                    // The descent argument needs candidates that sit exactly
                    // inside the linearized set. A positive residual means the
                    // set pinched below solver resolution (no Slater point, no
                    // finite multiplier), so the branch offers no certifiable
                    // progress and the method stays put.
                    if branch.c.value(&sol.x)? > 0.0 {
                        return Ok(PairCandidate {
                            x: x.clone(),
                            merit: zeta,
                            kkt: 0.0,
                            fallback: true,
                        });
                    }
                    let merit = program.base.zeta(&sol.x)? + 0.5 * (&sol.x - &x).norm_squared();
                    Ok(PairCandidate {
                        x: sol.x,
                        merit,
                        kkt: sol.kkt_residual,
                        fallback: false,
                    })
                }
                Err(Error::Infeasible(_)) => Ok(PairCandidate {
                    x: x.clone(),
                    merit: zeta,
                    kkt: 0.0,
                    fallback: true,
                }),
                Err(e) => Err(e),
            }
        };

        let candidates: Vec<Result<PairCandidate>> = if opts.parallel {
            jobs.par_iter().map(|(g, b)| solve_job(g, *b)).collect()
        } else {
            jobs.iter().map(|(g, b)| solve_job(g, *b)).collect()
        };

        let mut best: Option<(usize, PairCandidate)> = None;
        for (idx, c) in candidates.into_iter().enumerate() {
            let c = c.map_err(|e| {
                Error::NonConvergence(format!("pair subproblem {idx} failed: {e}"))
            })?;
            let better = match &best {
                None => true,
                Some((_, b)) => c.merit < b.merit,
            };
            if better {
                best = Some((idx, c));
            }
        }
        let (pos, cand) = best.expect("candidate grid is never empty");

        // Every accepted iterate must stay dc-feasible (the linearization
        // under-estimates the concave side, so this can only fail by solver
        // error).
        if !cand.fallback {
            let scale = 1.0 + program.constraint.psi_c.value(&cand.x)?.abs();
            let viol = program.constraint_value(&cand.x)?;
            if viol > 1e-6 * scale {
                return Err(Error::NonConvergence(format!(
                    "iterate left the dc feasible set (violation {viol:.3e}); inner solves are \
                     not tight enough"
                )));
            }
        }

        let step = (&cand.x - &x).norm();
        let improvement = zeta - cand.merit;
        let new_zeta = program.base.zeta(&cand.x)?;
        trace.push(TraceRow {
            iter,
            x: cand.x.clone(),
            zeta: new_zeta,
            step_norm: step,
            chosen_index: pos,
            subproblem_kkt: cand.kkt,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            active_count: jobs.len(),
            rho: None,
            consensus_residual: None,
            chosen_k: None,
        });
        x = cand.x;
        zeta = new_zeta;
        if step <= opts.tol_step {
            termination = Termination::StepBelowTol;
            break;
        }
        if improvement <= f64::EPSILON * (1.0 + zeta.abs()) {
            stall_count += 1;
            if stall_count >= 10 {
                termination = Termination::Stalled;
                break;
            }
        } else {
            stall_count = 0;
        }
    }

    Ok(SolveReport {
        x,
        zeta,
        termination,
        trace,
        projected_start: false,
    })
}

/// Geometric growth schedule for the penalty weight.
#[derive(Debug, Clone)]
pub struct PenaltySchedule {
    pub rho0: f64,
    pub gamma: f64,
    pub rho_max: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        PenaltySchedule {
            rho0: 1.0,
            gamma: 10.0,
            rho_max: 1e8,
        }
    }
}

impl PenaltySchedule {
    fn validate(&self) -> Result<()> {
        if !(self.rho0 > 0.0) || !(self.gamma > 1.0) || !(self.rho_max >= self.rho0) {
            return Err(Error::InvalidParams(format!(
                "penalty schedule needs rho0 > 0, gamma > 1, rho_max >= rho0; got ({}, {}, {})",
                self.rho0, self.gamma, self.rho_max
            )));
        }
        Ok(())
    }
}

/// How the limit of a penalty run relates to the dc feasible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Residual stayed positive through the schedule: the limit is a
    /// stationary point of the constraint violation itself.
    InfeasibleStationary,
    /// Constraint strictly inactive at the limit: plain directional
    /// stationarity on the polyhedron applies.
    InteriorDStationary,
    /// On the constraint boundary with a single active concave piece.
    BoundaryBStationary,
    /// On the boundary with several active concave pieces; no claim is made.
    Unclassified,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::InfeasibleStationary => "infeasible-stationary",
            Classification::InteriorDStationary => "interior-d-stationary",
            Classification::BoundaryBStationary => "boundary-b-stationary",
            Classification::Unclassified => "unclassified",
        }
    }
}

/// Penalty run outcome.
#[derive(Debug, Clone)]
pub struct PenaltyReport {
    pub report: SolveReport,
    pub classification: Classification,
    pub rho_final: f64,
    /// `max(0, constraint value)` at the final point.
    pub constraint_residual: f64,
}

/// The dc program `phi + rho*max(phi_c, varphi_c) - max_{i,j}(psi_i + rho*psi_{c,j})`,
/// pointwise equal to `zeta + rho*max(0, constraint value)`. Piece counts
/// multiply; refuses beyond the tuple cap.
pub fn penalized_program(program: &ConstrainedDcProgram, rho: f64) -> Result<DcProgram> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParams(format!(
            "penalty weight must be positive and finite, got {rho}"
        )));
    }
    let group = program.base.single_group()?;

    let mut pieces_c = program.constraint.phi_c.as_pieces()?;
    pieces_c.extend(program.constraint.psi_c.pieces().iter().cloned());
    let scaled: Vec<SmoothConvexFunction> = pieces_c
        .iter()
        .map(|p| p.scale(rho))
        .collect::<Result<_>>()?;

    let phi_pen = match &program.base.phi.max_part {
        None => ConvexFunction::new(
            program.base.phi.smooth.clone(),
            Some(PiecewiseMaxConvex::new(scaled)?),
        )?,
        Some(p) => {
            let count = p.len().saturating_mul(scaled.len());
            if count > TUPLE_CAP {
                return Err(Error::TupleExplosion {
                    count,
                    cap: TUPLE_CAP,
                });
            }
            let mut pairs = Vec::with_capacity(count);
            for base_piece in p.pieces() {
                for c in &scaled {
                    pairs.push(base_piece.add(c)?);
                }
            }
            ConvexFunction::new(
                program.base.phi.smooth.clone(),
                Some(PiecewiseMaxConvex::new(pairs)?),
            )?
        }
    };

    let count = group
        .len()
        .saturating_mul(program.constraint.psi_c.len());
    if count > TUPLE_CAP {
        return Err(Error::TupleExplosion {
            count,
            cap: TUPLE_CAP,
        });
    }
    let mut concave = Vec::with_capacity(count);
    for psi_i in group.pieces() {
        for psi_cj in program.constraint.psi_c.pieces() {
            concave.push(psi_i.add(&psi_cj.scale(rho)?)?);
        }
    }
    DcProgram::new(
        phi_pen,
        vec![PiecewiseMaxConvex::new(concave)?],
        program.base.set.clone(),
    )
}

/// Penalty method: solves the penalized program for a growing weight, warm
/// starting each phase at the previous solution, and classifies the limit by
/// its final constraint residual. Does not assume a feasible start (or a
/// nonempty dc feasible set).
pub fn penalty_solve(
    program: &ConstrainedDcProgram,
    x0: &DVector<f64>,
    schedule: &PenaltySchedule,
    opts: &SolveOptions,
) -> Result<PenaltyReport> {
    opts.validate()?;
    schedule.validate()?;
    program.base.single_group()?;

    let (mut x, projected_start) = admit_start(&program.base.set, x0, 1e-8)?;
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut rho = schedule.rho0;
    let termination;
    let mut iter_counter = 0usize;

    let mut phases = 0usize;
    loop {
        let pen = penalized_program(program, rho)?;
        let inner = dca::algorithm_one(&pen, &x, opts)?;
        let outer_step = (&inner.x - &x).norm();
        x = inner.x;
        phases += 1;
        for (k, mut row) in inner.trace.into_iter().enumerate() {
            if k == 0 && !trace.is_empty() {
                continue; // phase start duplicates the previous final point
            }
            row.iter = iter_counter;
            iter_counter += 1;
            row.rho = Some(rho);
            trace.push(row);
        }

        let zc = program.constraint_value(&x)?;
        let scale = 1.0 + program.constraint.psi_c.value(&x)?.abs();
        let band = opts.subsolver.feas_tol.max(1e-12) * scale;
        if zc <= band && outer_step <= opts.tol_step {
            termination = Termination::StepBelowTol;
            break;
        }
        if phases >= 200 {
            termination = Termination::MaxIter;
            break;
        }
        if zc <= band {
            // Feasible but not yet settled: rerun at the current weight. The
            // penalty is exact, so once phases end feasible nothing is gained
            // by a larger rho — it only slows the inner iteration down (its
            // per-step contraction degrades as 1 - O(1/rho)).
            continue;
        }
        if rho >= schedule.rho_max {
            termination = Termination::RhoMax;
            break;
        }
        rho = (rho * schedule.gamma).min(schedule.rho_max);
    }

    let zc = program.constraint_value(&x)?;
    let scale = 1.0 + program.constraint.psi_c.value(&x)?.abs();
    let band = opts.subsolver.feas_tol.max(1e-12) * scale;
    let classification = if zc > band {
        Classification::InfeasibleStationary
    } else if zc < -band {
        Classification::InteriorDStationary
    } else {
        let margin = certificate_margin(opts.subsolver.feas_tol);
        let mc = program.constraint.psi_c.active_indices(&x, margin * scale)?;
        if mc.len() == 1 {
            Classification::BoundaryBStationary
        } else {
            Classification::Unclassified
        }
    };

    let zeta = program.base.zeta(&x)?;
    Ok(PenaltyReport {
        report: SolveReport {
            x,
            zeta,
            termination,
            trace,
            projected_start,
        },
        classification,
        rho_final: rho,
        constraint_residual: zc.max(0.0),
    })
}

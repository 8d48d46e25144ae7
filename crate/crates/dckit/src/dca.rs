//! Difference-of-convex solvers for piecewise-smooth concave parts.
//!
//! The problem is
//!
//! ```text
//! minimize  zeta(x) = phi(x) - sum_i max_k psi_{i,k}(x)   over x in X
//! ```
//!
//! with `phi` convex, every `psi_{i,k}` smooth convex, and `X` polyhedral.
//! `algorithm_one` solves one proximal subproblem per epsilon-active piece
//! each iteration and keeps the best candidate; `algorithm_one_randomized`
//! samples a single active piece per iteration; `dca_baseline` is the
//! classical single-subgradient scheme, kept for comparison because it can
//! stop at points the piecewise-aware method escapes.

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::time::Instant;

use crate::funcs::{tuple_sum, ConvexFunction, PiecewiseMaxConvex, TOL_ACTIVE};
use crate::sets::Polyhedron;
use crate::subsolver::{self, SubproblemSpec, SubsolverOptions};
use crate::{Error, Result};

/// Cap on the number of expanded tuple pieces (also used by the penalty and
/// constraint-merging paths).
pub const TUPLE_CAP: usize = 4096;

/// A dc program with grouped concave part.
#[derive(Debug, Clone)]
pub struct DcProgram {
    /// Convex part `phi` (smooth plus optional max part).
    pub phi: ConvexFunction,
    /// One piecewise max per group; the concave part is minus their sum.
    pub groups: Vec<PiecewiseMaxConvex>,
    /// Feasible polyhedron.
    pub set: Polyhedron,
}

impl DcProgram {
    pub fn new(
        phi: ConvexFunction,
        groups: Vec<PiecewiseMaxConvex>,
        set: Polyhedron,
    ) -> Result<DcProgram> {
        if groups.is_empty() {
            return Err(Error::InvalidParams(
                "a dc program needs at least one group".into(),
            ));
        }
        let n = phi.dim();
        if set.dim() != n || groups.iter().any(|g| g.dim() != n) {
            return Err(Error::InvalidParams(
                "objective, groups, and feasible set must share a dimension".into(),
            ));
        }
        Ok(DcProgram { phi, groups, set })
    }

    pub fn dim(&self) -> usize {
        self.phi.dim()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// The concave part's magnitude: `sum_i max_k psi_{i,k}(x)`.
    pub fn concave_value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut v = 0.0;
        for g in &self.groups {
            v += g.value(x)?;
        }
        Ok(v)
    }

    /// Objective value.
    pub fn zeta(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.phi.value(x)? - self.concave_value(x)?)
    }

    /// Rewrites the grouped concave part as a single max over index tuples;
    /// the objective is pointwise unchanged. Fails with `TupleExplosion`
    /// when the product of group sizes exceeds the cap.
    pub fn flatten_groups(&self) -> Result<DcProgram> {
        if self.groups.len() == 1 {
            return Ok(self.clone());
        }
        let merged = tuple_sum(&self.groups, TUPLE_CAP)?;
        Ok(DcProgram {
            phi: self.phi.clone(),
            groups: vec![merged],
            set: self.set.clone(),
        })
    }

    pub(crate) fn single_group(&self) -> Result<&PiecewiseMaxConvex> {
        if self.groups.len() != 1 {
            return Err(Error::InvalidParams(format!(
                "this method needs a single-group program; call flatten_groups on the {}-group \
                 input first",
                self.groups.len()
            )));
        }
        Ok(&self.groups[0])
    }
}

/// Options shared by the iterative solvers.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Margin for the epsilon-active piece sets (strictly positive).
    pub epsilon: f64,
    /// Step-norm termination threshold.
    pub tol_step: f64,
    /// Outer iteration cap.
    pub max_iter: usize,
    /// Margin for the numerically-active sets used by certificates.
    pub tol_active: f64,
    /// Inner solver tolerances.
    pub subsolver: SubsolverOptions,
    /// Seed for the randomized variant.
    pub seed: u64,
    /// Solve per-piece candidates concurrently (results are identical either
    /// way; the merge is index-ordered).
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            epsilon: 1e-3,
            tol_step: 1e-8,
            max_iter: 500,
            tol_active: TOL_ACTIVE,
            subsolver: SubsolverOptions::default(),
            seed: 0,
            parallel: true,
        }
    }
}

impl SolveOptions {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be strictly positive, got {}",
                self.epsilon
            )));
        }
        if !(self.tol_step > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParams(
                "tol_step must be positive and max_iter nonzero".into(),
            ));
        }
        Ok(())
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Step norm fell below `tol_step`.
    StepBelowTol,
    /// Iteration cap reached.
    MaxIter,
    /// No measurable objective improvement for 10 iterations while the step
    /// stayed above `tol_step`.
    Stalled,
    /// A penalty/consensus schedule exhausted its parameter cap.
    RhoMax,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::StepBelowTol => "step-below-tol",
            Termination::MaxIter => "max-iter",
            Termination::Stalled => "stalled",
            Termination::RhoMax => "rho-max",
        }
    }
}

/// One recorded iterate.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub x: DVector<f64>,
    pub zeta: f64,
    pub step_norm: f64,
    /// Candidate index that produced this iterate (position in the
    /// enumeration order of the candidate set; 0 for the initial row).
    pub chosen_index: usize,
    pub subproblem_kkt: f64,
    pub wall_ms: f64,
    /// Size of the candidate set this iterate was selected from.
    pub active_count: usize,
    /// Penalty strength, on consensus/penalty traces.
    pub rho: Option<f64>,
    /// `max_i ||z_i - x||`, on consensus traces.
    pub consensus_residual: Option<f64>,
    /// Per-agent piece choices, on consensus traces.
    pub chosen_k: Option<Vec<usize>>,
}

/// Result of an iterative run.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: DVector<f64>,
    pub zeta: f64,
    pub termination: Termination,
    pub trace: Vec<TraceRow>,
    /// True when the supplied start was projected onto the set first.
    pub projected_start: bool,
}

impl SolveReport {
    /// Renders the trace as CSV. The base columns are fixed; the consensus
    /// columns (`rho`, `consensus_residual`, `k_i`) appear only when any row
    /// carries them.
    pub fn trace_csv(&self) -> String {
        let extended = self.trace.iter().any(|r| r.rho.is_some());
        let mut out = String::from("iter,zeta,step_norm,chosen_index,subproblem_kkt,wall_ms");
        if extended {
            out.push_str(",rho,consensus_residual,k_i");
        }
        out.push('\n');
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.iter, r.zeta, r.step_norm, r.chosen_index, r.subproblem_kkt, r.wall_ms
            ));
            if extended {
                let ks = r
                    .chosen_k
                    .as_ref()
                    .map(|ks| {
                        ks.iter()
                            .map(|k| k.to_string())
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default();
                out.push_str(&format!(
                    ",{},{},{}",
                    r.rho.unwrap_or(f64::NAN),
                    r.consensus_residual.unwrap_or(f64::NAN),
                    ks
                ));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn initial_row(x: &DVector<f64>, zeta: f64) -> TraceRow {
    TraceRow {
        iter: 0,
        x: x.clone(),
        zeta,
        step_norm: 0.0,
        chosen_index: 0,
        subproblem_kkt: 0.0,
        wall_ms: 0.0,
        active_count: 0,
        rho: None,
        consensus_residual: None,
        chosen_k: None,
    }
}

/// Projects a start point into the set if needed, reporting whether it moved.
pub(crate) fn admit_start(
    set: &Polyhedron,
    x0: &DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, bool)> {
    if set.contains(x0, tol) {
        Ok((x0.clone(), false))
    } else {
        Ok((set.project(x0, 1e-12)?, true))
    }
}

struct Candidate {
    x: DVector<f64>,
    merit: f64,
    kkt: f64,
}

/// Solves the proximal subproblem for one linearization gradient and scores
/// it by `zeta(x_hat) + (1/2)||x_hat - x||^2`.
fn candidate_for_gradient(
    program: &DcProgram,
    x: &DVector<f64>,
    grad: DVector<f64>,
    opts: &SolveOptions,
) -> Result<Candidate> {
    let spec = SubproblemSpec::prox_step(
        program.phi.clone(),
        -grad,
        1.0,
        x.clone(),
        program.set.clone(),
    );
    let sol = subsolver::solve(&spec, &opts.subsolver)?;
    let merit = program.zeta(&sol.x)? + 0.5 * (&sol.x - x).norm_squared();
    Ok(Candidate {
        x: sol.x,
        merit,
        kkt: sol.kkt_residual,
    })
}

fn best_candidate(
    program: &DcProgram,
    x: &DVector<f64>,
    gradients: Vec<DVector<f64>>,
    opts: &SolveOptions,
) -> Result<(usize, Candidate)> {
    let candidates: Vec<Result<Candidate>> = if opts.parallel {
        gradients
            .into_par_iter()
            .map(|g| candidate_for_gradient(program, x, g, opts))
            .collect()
    } else {
        gradients
            .into_iter()
            .map(|g| candidate_for_gradient(program, x, g, opts))
            .collect()
    };
    let mut best: Option<(usize, Candidate)> = None;
    for (idx, c) in candidates.into_iter().enumerate() {
        let c = c.map_err(|e| {
            Error::NonConvergence(format!("candidate {idx} subproblem failed: {e}"))
        })?;
        let better = match &best {
            None => true,
            Some((_, b)) => c.merit < b.merit,
        };
        if better {
            best = Some((idx, c));
        }
    }
    Ok(best.expect("candidate set is never empty"))
}

/// The piecewise-aware proximal method: per iteration, one subproblem per
/// epsilon-active piece, keeping the candidate with the least
/// `zeta + (1/2)||step||^2` (ties to the lowest index).
pub fn algorithm_one(
    program: &DcProgram,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let group = program.single_group()?;
    let (mut x, projected_start) = admit_start(&program.set, x0, 1e-8)?;
    let mut zeta = program.zeta(&x)?;
    let mut trace = vec![initial_row(&x, zeta)];
    let mut termination = Termination::MaxIter;
    let mut stall_count = 0usize;

    for iter in 1..=opts.max_iter {
        let t0 = Instant::now();
        let active = group.active_indices(&x, opts.epsilon)?;
        let gradients: Vec<DVector<f64>> = active
            .iter()
            .map(|&i| group.piece(i).gradient(&x))
            .collect::<Result<_>>()?;
        let (pos, cand) = best_candidate(program, &x, gradients, opts)?;
        let step = (&cand.x - &x).norm();
        let improvement = zeta - cand.merit;
        let new_zeta = program.zeta(&cand.x)?;
        trace.push(TraceRow {
            iter,
            x: cand.x.clone(),
            zeta: new_zeta,
            step_norm: step,
            chosen_index: active[pos],
            subproblem_kkt: cand.kkt,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            active_count: active.len(),
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
        projected_start,
    })
}

/// Randomized variant: one uniformly sampled epsilon-active piece per
/// iteration. Before accepting termination it sweeps every active piece
/// deterministically, so a run cannot stop just because the sampler kept
/// drawing a non-improving piece.
pub fn algorithm_one_randomized(
    program: &DcProgram,
    x0: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    opts.validate()?;
    let group = program.single_group()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut x, projected_start) = admit_start(&program.set, x0, 1e-8)?;
    let mut zeta = program.zeta(&x)?;
    let mut trace = vec![initial_row(&x, zeta)];
    let mut termination = Termination::MaxIter;

    for iter in 1..=opts.max_iter {
        let t0 = Instant::now();
        let active = group.active_indices(&x, opts.epsilon)?;
        let pick = active[rng.random_range(0..active.len())];
        let grad = group.piece(pick).gradient(&x)?;
        let cand = candidate_for_gradient(program, &x, grad, opts)?;

        // Reject ascent (possible when the sampled piece is only
        // epsilon-active); a rejected step keeps the iterate in place.
        let (mut next, mut kkt, mut chosen) = if cand.merit <= zeta + 1e-12 * (1.0 + zeta.abs()) {
            (cand.x, cand.kkt, pick)
        } else {
            (x.clone(), 0.0, pick)
        };
        let mut step = (&next - &x).norm();

        if step <= opts.tol_step {
            // Deterministic confirmation sweep over the whole active set.
            let gradients: Vec<DVector<f64>> = active
                .iter()
                .map(|&i| group.piece(i).gradient(&x))
                .collect::<Result<_>>()?;
            let (pos, best) = best_candidate(program, &x, gradients, opts)?;
            let best_step = (&best.x - &x).norm();
            if best_step > opts.tol_step && best.merit <= zeta + 1e-12 * (1.0 + zeta.abs()) {
                next = best.x;
                kkt = best.kkt;
                chosen = active[pos];
                step = best_step;
            }
        }

        let new_zeta = program.zeta(&next)?;
        trace.push(TraceRow {
            iter,
            x: next.clone(),
            zeta: new_zeta,
            step_norm: step,
            chosen_index: chosen,
            subproblem_kkt: kkt,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            active_count: active.len(),
            rho: None,
            consensus_residual: None,
            chosen_k: None,
        });
        x = next;
        zeta = new_zeta;
        if step <= opts.tol_step {
            termination = Termination::StepBelowTol;
            break;
        }
    }

    Ok(SolveReport {
        x,
        zeta,
        termination,
        trace,
        projected_start,
    })
}

/// Subgradient selection rule for the classical baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineSelection {
    /// Lowest-index piece of the numerically active set.
    FirstActive,
    /// Active piece with the largest gradient norm (ties to lowest index).
    MaxGradientNorm,
}

/// Classical regularized difference-of-convex iteration: one active piece's
/// gradient per step, chosen by `selection`. Kept as a comparison baseline;
/// it can converge to points `algorithm_one` improves on.
pub fn dca_baseline(
    program: &DcProgram,
    x0: &DVector<f64>,
    opts: &SolveOptions,
    selection: BaselineSelection,
) -> Result<SolveReport> {
    opts.validate()?;
    let group = program.single_group()?;
    let (mut x, projected_start) = admit_start(&program.set, x0, 1e-8)?;
    let mut zeta = program.zeta(&x)?;
    let mut trace = vec![initial_row(&x, zeta)];
    let mut termination = Termination::MaxIter;

    for iter in 1..=opts.max_iter {
        let t0 = Instant::now();
        let active = group.active_indices(&x, opts.tol_active)?;
        let pick = match selection {
            BaselineSelection::FirstActive => active[0],
            BaselineSelection::MaxGradientNorm => {
                let mut best = active[0];
                let mut best_norm = f64::NEG_INFINITY;
                for &i in &active {
                    let n = group.piece(i).gradient(&x)?.norm();
                    if n > best_norm {
                        best_norm = n;
                        best = i;
                    }
                }
                best
            }
        };
        let grad = group.piece(pick).gradient(&x)?;
        let cand = candidate_for_gradient(program, &x, grad, opts)?;
        let step = (&cand.x - &x).norm();
        let new_zeta = program.zeta(&cand.x)?;
        trace.push(TraceRow {
            iter,
            x: cand.x.clone(),
            zeta: new_zeta,
            step_norm: step,
            chosen_index: pick,
            subproblem_kkt: cand.kkt,
            wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            active_count: active.len(),
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
    }

    Ok(SolveReport {
        x,
        zeta,
        termination,
        trace,
        projected_start,
    })
}

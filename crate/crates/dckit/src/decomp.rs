//! Explicit dc decompositions of finite-support bivariate value functions.
//!
//! The object being decomposed is
//!
//! ```text
//! theta(x) = sum_i  max_{lambda in Lambda_i}  sum_j h_{i,j}(lambda) * f_{i,j}(x)
//! ```
//!
//! with each `Lambda_i` a finite list, `h` an arbitrary table of weights, and
//! each factor `f_{i,j}` either convex or concave. Extracting the extremal
//! weight of every factor (the minimum of `h_{i,j}` over `Lambda_i` for convex
//! factors, the maximum for concave ones) leaves every maximand a nonnegative
//! combination of convex functions, hence convex. What was extracted is split
//! by sign into a differentiable concave summand `u` and smooth convex terms,
//! giving `theta = u + v` with `v` convex. The construction is exact — no
//! approximation anywhere — so it is checked against brute-force enumeration
//! at tight tolerance.
//!
//! Only finite `Lambda_i` lists are accepted; value functions over continuum
//! index sets can fail to be directionally differentiable and are out of
//! scope here.

use nalgebra::DVector;

use crate::dca::DcProgram;
use crate::funcs::{ConvexFunction, PiecewiseMaxConvex, SmoothConvexFunction};
use crate::sets::Polyhedron;
use crate::{Error, Result};

/// Curvature of a modeled factor. Concave factors are stored as their
/// negation, so the struct always holds a convex function; this makes a
/// curvature mismatch unrepresentable rather than checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Convex,
    Concave,
}

/// One factor `f_{i,j}`.
#[derive(Debug, Clone)]
pub struct Factor {
    stored: SmoothConvexFunction,
    curvature: Curvature,
}

impl Factor {
    pub fn convex(f: SmoothConvexFunction) -> Factor {
        Factor {
            stored: f,
            curvature: Curvature::Convex,
        }
    }

    /// A concave factor, passed as its negation: `concave(g)` models the
    /// factor `x -> -g(x)`.
    pub fn concave(negation: SmoothConvexFunction) -> Factor {
        Factor {
            stored: negation,
            curvature: Curvature::Concave,
        }
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    /// The convex function held internally (the factor itself when convex,
    /// its negation when concave).
    pub fn stored(&self) -> &SmoothConvexFunction {
        &self.stored
    }

    pub fn dim(&self) -> usize {
        self.stored.dim()
    }

    /// Value of the modeled factor.
    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let v = self.stored.value(x)?;
        Ok(match self.curvature {
            Curvature::Convex => v,
            Curvature::Concave => -v,
        })
    }
}

/// One agent: a finite support, the weight table over it, and the factors.
#[derive(Debug, Clone)]
pub struct BivariateAgent {
    /// The points of `Lambda_i`; kept for reporting, the construction only
    /// consumes the tabulated weights below.
    pub lambdas: Vec<DVector<f64>>,
    /// `h[l][j]` = weight of factor `j` at `lambdas[l]`.
    pub h: Vec<Vec<f64>>,
    pub factors: Vec<Factor>,
}

#[derive(Debug, Clone)]
pub struct BivariateModel {
    dim: usize,
    pub agents: Vec<BivariateAgent>,
}

impl BivariateModel {
    pub fn new(agents: Vec<BivariateAgent>) -> Result<BivariateModel> {
        if agents.is_empty() {
            return Err(Error::InvalidParams("model needs at least one agent".into()));
        }
        let mut dim = None;
        for (i, agent) in agents.iter().enumerate() {
            if agent.lambdas.is_empty() {
                return Err(Error::InvalidParams(format!(
                    "agent {i} has an empty support; only finite nonempty lists are accepted"
                )));
            }
            if agent.factors.is_empty() {
                return Err(Error::InvalidParams(format!("agent {i} has no factors")));
            }
            if agent.h.len() != agent.lambdas.len() {
                return Err(Error::InvalidParams(format!(
                    "agent {i}: {} weight rows for {} support points",
                    agent.h.len(),
                    agent.lambdas.len()
                )));
            }
            for (l, row) in agent.h.iter().enumerate() {
                if row.len() != agent.factors.len() {
                    return Err(Error::InvalidParams(format!(
                        "agent {i}, support point {l}: {} weights for {} factors",
                        row.len(),
                        agent.factors.len()
                    )));
                }
                if row.iter().any(|w| !w.is_finite()) {
                    return Err(Error::InvalidParams(format!(
                        "agent {i}, support point {l}: non-finite weight"
                    )));
                }
            }
            for (j, f) in agent.factors.iter().enumerate() {
                match dim {
                    None => dim = Some(f.dim()),
                    Some(d) if d == f.dim() => {}
                    Some(d) => {
                        return Err(Error::InvalidParams(format!(
                            "agent {i}, factor {j}: dimension {} does not match {d}",
                            f.dim()
                        )));
                    }
                }
            }
        }
        Ok(BivariateModel {
            dim: dim.expect("agents have factors"),
            agents,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Per-agent extremal weights: `rho_max[i][j]` / `rho_min[i][j]` are the
/// exact maximum / minimum of `h_{i,j}` over the agent's support, found by
/// enumeration.
#[derive(Debug, Clone)]
pub struct ExtremalWeights {
    pub rho_max: Vec<Vec<f64>>,
    pub rho_min: Vec<Vec<f64>>,
}

pub fn extremal_weights(model: &BivariateModel) -> ExtremalWeights {
    let mut rho_max = Vec::with_capacity(model.agents.len());
    let mut rho_min = Vec::with_capacity(model.agents.len());
    for agent in &model.agents {
        let j_count = agent.factors.len();
        let mut hi = vec![f64::NEG_INFINITY; j_count];
        let mut lo = vec![f64::INFINITY; j_count];
        for row in &agent.h {
            for j in 0..j_count {
                hi[j] = hi[j].max(row[j]);
                lo[j] = lo[j].min(row[j]);
            }
        }
        rho_max.push(hi);
        rho_min.push(lo);
    }
    ExtremalWeights { rho_max, rho_min }
}

/// Where the extracted weighted factor of one `(i, j)` went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Summand {
    /// Convex factor, `rho_min <= 0`: the extracted term is concave.
    MinusCvx,
    /// Convex factor, `rho_min > 0`: the extracted term is convex smooth.
    PlusCvx,
    /// Concave factor, `rho_max >= 0`: the extracted term is concave.
    PlusCve,
    /// Concave factor, `rho_max < 0`: the extracted term is convex smooth.
    MinusCve,
}

impl Summand {
    fn classify(curvature: Curvature, rho_min: f64, rho_max: f64) -> Summand {
        // A zero extremal weight makes the extracted term vanish; it is
        // routed to the concave summand so the choice is deterministic.
        match curvature {
            Curvature::Convex => {
                if rho_min <= 0.0 {
                    Summand::MinusCvx
                } else {
                    Summand::PlusCvx
                }
            }
            Curvature::Concave => {
                if rho_max >= 0.0 {
                    Summand::PlusCve
                } else {
                    Summand::MinusCve
                }
            }
        }
    }

    /// True when the extracted term lands in the concave summand `u`.
    pub fn goes_to_u(self) -> bool {
        matches!(self, Summand::MinusCvx | Summand::PlusCve)
    }
}

/// The decomposition `theta = u + v`: `u` is differentiable concave (stored
/// as nonnegative weights on convex functions, to be negated), `v` is the sum
/// of smooth convex terms and one convex max per agent.
#[derive(Debug, Clone)]
pub struct DcDecomposition {
    dim: usize,
    /// `u(x) = -sum_k w_k F_k(x)` with `w_k >= 0` and `F_k` convex.
    pub u_negated: Vec<(f64, SmoothConvexFunction)>,
    /// Smooth convex part of `v`: `sum_k w_k F_k(x)`, `w_k >= 0`.
    pub v_smooth: Vec<(f64, SmoothConvexFunction)>,
    /// One `g_i` per agent, each a max of `|Lambda_i|` convex pieces.
    pub v_max: Vec<PiecewiseMaxConvex>,
    /// `index_sets[i][j]`: which summand the extracted `(i, j)` term joined.
    pub index_sets: Vec<Vec<Summand>>,
}

impl DcDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The differentiable concave summand.
    pub fn u_value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut v = 0.0;
        for (w, f) in &self.u_negated {
            v -= w * f.value(x)?;
        }
        Ok(v)
    }

    pub fn u_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.dim);
        for (w, f) in &self.u_negated {
            g.axpy(-*w, &f.gradient(x)?, 1.0);
        }
        Ok(g)
    }

    /// The convex summand.
    pub fn v_value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut v = 0.0;
        for (w, f) in &self.v_smooth {
            v += w * f.value(x)?;
        }
        for g in &self.v_max {
            v += g.value(x)?;
        }
        Ok(v)
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.u_value(x)? + self.v_value(x)?)
    }
}

/// Builds the decomposition and a `DcProgram` whose objective is `-theta`
/// (so maximizing `theta` is the program's minimization) over the free space.
/// The program's convex part collects `-u`, and its concave part gets one
/// group per agent (pieces are the agent's maximands) plus, when present, a
/// single-piece group holding the smooth convex terms of `v`.
pub fn build_dc(model: &BivariateModel) -> Result<(DcDecomposition, DcProgram)> {
    let weights = extremal_weights(model);
    let dim = model.dim();

    let mut u_negated: Vec<(f64, SmoothConvexFunction)> = Vec::new();
    let mut v_smooth: Vec<(f64, SmoothConvexFunction)> = Vec::new();
    let mut v_max = Vec::with_capacity(model.agents.len());
    let mut index_sets = Vec::with_capacity(model.agents.len());

    for (i, agent) in model.agents.iter().enumerate() {
        let mut sets = Vec::with_capacity(agent.factors.len());
        // Extracted weights: rho_min for convex factors, rho_max for concave
        // ones — exactly the choice that leaves every maximand coefficient
        // nonnegative below.
        for (j, factor) in agent.factors.iter().enumerate() {
            let (rho_min, rho_max) = (weights.rho_min[i][j], weights.rho_max[i][j]);
            let set = Summand::classify(factor.curvature(), rho_min, rho_max);
            sets.push(set);
            let (weight, extracted) = match set {
                // rho_min * f with f convex, rho_min <= 0: concave, weight -rho_min.
                Summand::MinusCvx => (-rho_min, factor.stored().clone()),
                // rho_min * f, rho_min > 0: convex smooth.
                Summand::PlusCvx => (rho_min, factor.stored().clone()),
                // rho_max * f with f = -F concave, rho_max >= 0: concave,
                // equals -(rho_max * F).
                Summand::PlusCve => (rho_max, factor.stored().clone()),
                // rho_max * f, rho_max < 0: equals (-rho_max) * F, convex.
                Summand::MinusCve => (-rho_max, factor.stored().clone()),
            };
            if set.goes_to_u() {
                u_negated.push((weight, extracted));
            } else {
                v_smooth.push((weight, extracted));
            }
        }
        index_sets.push(sets);

        // One maximand per support point; every coefficient is h - min >= 0
        // (convex factor) or max - h >= 0 (concave factor, applied to the
        // stored negation), both exact differences of table entries.
        let mut pieces = Vec::with_capacity(agent.lambdas.len());
        for row in &agent.h {
            let mut piece = SmoothConvexFunction::zero(dim);
            for (j, factor) in agent.factors.iter().enumerate() {
                let coeff = match factor.curvature() {
                    Curvature::Convex => row[j] - weights.rho_min[i][j],
                    Curvature::Concave => weights.rho_max[i][j] - row[j],
                };
                if coeff != 0.0 {
                    piece = piece.add(&factor.stored().scale(coeff)?)?;
                }
            }
            pieces.push(piece);
        }
        v_max.push(PiecewiseMaxConvex::new(pieces)?);
    }

    let decomposition = DcDecomposition {
        dim,
        u_negated,
        v_smooth,
        v_max,
        index_sets,
    };

    // -theta = (-u) - [v_smooth + sum_i g_i]: convex part from u, one
    // concave group per agent, plus the smooth v terms as a 1-piece group.
    let mut phi_smooth = SmoothConvexFunction::zero(dim);
    for (w, f) in &decomposition.u_negated {
        phi_smooth = phi_smooth.add(&f.scale(*w)?)?;
    }
    let mut groups = Vec::new();
    if !decomposition.v_smooth.is_empty() {
        let mut vs = SmoothConvexFunction::zero(dim);
        for (w, f) in &decomposition.v_smooth {
            vs = vs.add(&f.scale(*w)?)?;
        }
        groups.push(PiecewiseMaxConvex::new(vec![vs])?);
    }
    groups.extend(decomposition.v_max.iter().cloned());
    let program = DcProgram::new(
        ConvexFunction::smooth_only(phi_smooth),
        groups,
        Polyhedron::free(dim),
    )?;

    Ok((decomposition, program))
}

/// Seeded random instance for regression sweeps: up to 2 agents, 4 factors,
/// 8 support points, on 1 to 3 variables, with diagonal quadratic factors of
/// either curvature and weights in `[-2, 2]`.
pub fn random_model(seed: u64) -> BivariateModel {
    use rand::RngExt;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=3usize);
    let agent_count = rng.random_range(1..=2usize);
    let agents = (0..agent_count)
        .map(|_| {
            let j_count = rng.random_range(1..=4usize);
            let l_count = rng.random_range(1..=8usize);
            let factors = (0..j_count)
                .map(|_| {
                    let mut q = nalgebra::DMatrix::zeros(dim, dim);
                    for k in 0..dim {
                        q[(k, k)] = rng.random_range(0.0..2.0);
                    }
                    let c = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                    let d = rng.random_range(-1.0..1.0);
                    let f = SmoothConvexFunction::from_atom(
                        crate::funcs::Atom::quadratic(q, c, d).expect("diagonal nonneg"),
                    );
                    if rng.random_range(0.0..1.0) < 0.5 {
                        Factor::convex(f)
                    } else {
                        Factor::concave(f)
                    }
                })
                .collect();
            let h = (0..l_count)
                .map(|_| (0..j_count).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            BivariateAgent {
                lambdas: (0..l_count)
                    .map(|_| DVector::from_fn(2, |_, _| rng.random_range(0.0..1.0)))
                    .collect(),
                h,
                factors,
            }
        })
        .collect();
    BivariateModel::new(agents).expect("generated agents are well-formed")
}

/// Exact evaluation of `theta` by enumerating every support point. This is
/// the oracle `build_dc` is tested against.
pub fn theta_bruteforce(model: &BivariateModel, x: &DVector<f64>) -> Result<f64> {
    let mut total = 0.0;
    for agent in &model.agents {
        let mut best = f64::NEG_INFINITY;
        for row in &agent.h {
            let mut s = 0.0;
            for (j, factor) in agent.factors.iter().enumerate() {
                s += row[j] * factor.value(x)?;
            }
            best = best.max(s);
        }
        total += best;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcs::Atom;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x_squared() -> SmoothConvexFunction {
        SmoothConvexFunction::from_atom(
            Atom::quadratic(
                DMatrix::from_row_slice(1, 1, &[2.0]),
                DVector::zeros(1),
                0.0,
            )
            .unwrap(),
        )
    }

    fn simplex_vertex_agent() -> BivariateAgent {
        BivariateAgent {
            lambdas: vec![
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0]),
            ],
            h: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            factors: vec![Factor::convex(x_squared()), Factor::concave(x_squared())],
        }
    }

    #[test]
    fn vertex_supports_give_unit_and_zero_weights() {
        let m = BivariateModel::new(vec![simplex_vertex_agent()]).unwrap();
        let w = extremal_weights(&m);
        assert_eq!(w.rho_max[0], vec![1.0, 1.0]);
        assert_eq!(w.rho_min[0], vec![0.0, 0.0]);
    }

    #[test]
    fn constant_tables_collapse_both_weights() {
        let agent = BivariateAgent {
            lambdas: vec![DVector::zeros(1); 3],
            h: vec![vec![2.5]; 3],
            factors: vec![Factor::convex(x_squared())],
        };
        let m = BivariateModel::new(vec![agent]).unwrap();
        let w = extremal_weights(&m);
        assert_eq!(w.rho_max[0], vec![2.5]);
        assert_eq!(w.rho_min[0], vec![2.5]);

        // All maximands coincide, and the split is exact anyway.
        let (dec, _) = build_dc(&m).unwrap();
        let x = DVector::from_vec(vec![1.3]);
        for p in 0..3 {
            assert_relative_eq!(
                dec.v_max[0].piece(p).value(&x).unwrap(),
                dec.v_max[0].piece(0).value(&x).unwrap(),
                epsilon = 0.0
            );
        }
        assert_relative_eq!(
            dec.value(&x).unwrap(),
            theta_bruteforce(&m, &x).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn random_tables_match_a_direct_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let agent = BivariateAgent {
            lambdas: vec![DVector::zeros(1); 5],
            h: h.clone(),
            factors: vec![
                Factor::convex(x_squared()),
                Factor::concave(x_squared()),
                Factor::convex(SmoothConvexFunction::zero(1)),
            ],
        };
        let m = BivariateModel::new(vec![agent]).unwrap();
        let w = extremal_weights(&m);
        for j in 0..3 {
            let col: Vec<f64> = h.iter().map(|r| r[j]).collect();
            assert_eq!(w.rho_max[0][j], col.iter().cloned().fold(f64::MIN, f64::max));
            assert_eq!(w.rho_min[0][j], col.iter().cloned().fold(f64::MAX, f64::min));
        }
    }

    #[test]
    fn worked_two_factor_example_splits_into_minus_x_squared_and_a_max() {
        let m = BivariateModel::new(vec![simplex_vertex_agent()]).unwrap();
        let (dec, program) = build_dc(&m).unwrap();

        assert_eq!(dec.index_sets[0], vec![Summand::MinusCvx, Summand::PlusCve]);
        // u picks up only the concave factor at weight rho_max = 1 (the
        // convex factor's rho_min is 0, its term vanishes).
        let x = DVector::from_vec(vec![1.7]);
        assert_relative_eq!(dec.u_value(&x).unwrap(), -x[0] * x[0], epsilon = 1e-12);
        // g_1 = max(2x^2, 0).
        assert_eq!(dec.v_max[0].pieces().len(), 2);
        assert_relative_eq!(
            dec.v_max[0].piece(0).value(&x).unwrap(),
            2.0 * x[0] * x[0],
            epsilon = 1e-12
        );
        assert_relative_eq!(dec.v_max[0].piece(1).value(&x).unwrap(), 0.0, epsilon = 0.0);

        for t in [-2.0, -0.3, 0.0, 1.0, 2.0] {
            let x = DVector::from_vec(vec![t]);
            assert_relative_eq!(dec.value(&x).unwrap(), t * t, epsilon = 1e-12);
            assert_relative_eq!(
                program.zeta(&x).unwrap(),
                -theta_bruteforce(&m, &x).unwrap(),
                epsilon = 1e-12
            );
        }

        assert_relative_eq!(
            theta_bruteforce(&m, &DVector::from_vec(vec![2.0])).unwrap(),
            4.0,
            epsilon = 0.0
        );
        assert_relative_eq!(
            theta_bruteforce(&m, &DVector::zeros(1)).unwrap(),
            0.0,
            epsilon = 0.0
        );
    }

    #[test]
    fn single_support_point_is_a_plain_weighted_sum() {
        let agent = BivariateAgent {
            lambdas: vec![DVector::zeros(1)],
            h: vec![vec![3.0, -2.0]],
            factors: vec![Factor::convex(x_squared()), Factor::concave(x_squared())],
        };
        let m = BivariateModel::new(vec![agent]).unwrap();
        let x = DVector::from_vec(vec![1.5]);
        // 3 x^2 + (-2)(-x^2) = 5 x^2.
        assert_relative_eq!(
            theta_bruteforce(&m, &x).unwrap(),
            5.0 * x[0] * x[0],
            epsilon = 1e-12
        );
        let (dec, _) = build_dc(&m).unwrap();
        assert_relative_eq!(
            dec.value(&x).unwrap(),
            5.0 * x[0] * x[0],
            epsilon = 1e-12
        );
    }

    #[test]
    fn random_models_agree_with_the_bruteforce_oracle() {
        for seed in 0..20u64 {
            let m = random_model(seed);
            let (dec, program) = build_dc(&m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            for _ in 0..100 {
                let x = DVector::from_fn(m.dim(), |_, _| rng.random_range(-3.0..3.0));
                let oracle = theta_bruteforce(&m, &x).unwrap();
                let split = dec.value(&x).unwrap();
                assert!(
                    (oracle - split).abs() <= 1e-10 * (1.0 + oracle.abs()),
                    "seed {seed}: split {split} vs oracle {oracle}"
                );
                let zeta = program.zeta(&x).unwrap();
                assert!(
                    (zeta + oracle).abs() <= 1e-10 * (1.0 + oracle.abs()),
                    "seed {seed}: program objective {zeta} vs -theta {}",
                    -oracle
                );
            }
        }
    }

    #[test]
    fn u_is_midpoint_concave_and_v_midpoint_convex() {
        for seed in [3u64, 11, 29] {
            let m = random_model(seed);
            let (dec, _) = build_dc(&m).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            for _ in 0..200 {
                let a = DVector::from_fn(m.dim(), |_, _| rng.random_range(-3.0..3.0));
                let b = DVector::from_fn(m.dim(), |_, _| rng.random_range(-3.0..3.0));
                let mid = (&a + &b) * 0.5;
                let (ua, ub, um) = (
                    dec.u_value(&a).unwrap(),
                    dec.u_value(&b).unwrap(),
                    dec.u_value(&mid).unwrap(),
                );
                let scale = 1.0 + ua.abs().max(ub.abs());
                assert!(
                    um >= 0.5 * (ua + ub) - 1e-10 * scale,
                    "u failed midpoint concavity on seed {seed}"
                );
                let (va, vb, vm) = (
                    dec.v_value(&a).unwrap(),
                    dec.v_value(&b).unwrap(),
                    dec.v_value(&mid).unwrap(),
                );
                let scale = 1.0 + va.abs().max(vb.abs());
                assert!(
                    vm <= 0.5 * (va + vb) + 1e-10 * scale,
                    "v failed midpoint convexity on seed {seed}"
                );
            }
        }
    }

    #[test]
    fn empty_supports_are_rejected() {
        let agent = BivariateAgent {
            lambdas: vec![],
            h: vec![],
            factors: vec![Factor::convex(x_squared())],
        };
        assert!(matches!(
            BivariateModel::new(vec![agent]),
            Err(Error::InvalidParams(_))
        ));
    }
}

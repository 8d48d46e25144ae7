//! Instance builders: the secrecy sum-rate power-control program, quadratic
//! programs with complementarity constraints, seeded random generators for
//! the regression corpus, and a small gallery of named one-dimensional
//! instances with machine-readable expected verdicts.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::certify::CertificateKind;
use crate::dca::{DcProgram, TUPLE_CAP};
use crate::dcc::{merge_dc_constraints, ConstrainedDcProgram, DcConstraint};
use crate::funcs::{tuple_sum, Atom, ConvexFunction, PiecewiseMaxConvex, SmoothConvexFunction};
use crate::sets::Polyhedron;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Secrecy sum-rate power control
// ---------------------------------------------------------------------------

/// Channel data for the secrecy sum-rate model.
///
/// `q_count` transmitter/receiver pairs share `n_tones` tones while
/// `j_count` friendly jammers inject noise. Receiver index 0 is the
/// eavesdropper; receiver `q + 1` is the intended receiver of user `q`.
///
/// The decision variable stacks all transmit powers:
/// user `q`'s power on tone `k` sits at index `q * n_tones + k`, jammer
/// `j`'s at `q_count * n_tones + j * n_tones + k`.
#[derive(Debug, Clone)]
pub struct SecrecyParams {
    pub q_count: usize,
    pub n_tones: usize,
    pub j_count: usize,
    /// `gain[q][r][k]`: user `q`'s transmitter into receiver `r` on tone `k`.
    pub gain: Vec<Vec<Vec<f64>>>,
    /// `jam_gain[j][r][k]`: jammer `j` into receiver `r` on tone `k`.
    pub jam_gain: Vec<Vec<Vec<f64>>>,
    /// `noise[r][k]`: strictly positive receiver noise floor.
    pub noise: Vec<Vec<f64>>,
    /// Per-user total power budget (also used as the per-tone cap).
    pub budget: Vec<f64>,
    /// Per-jammer total power budget.
    pub jam_budget: Vec<f64>,
    /// Optional per-user minimum secrecy rates; when present the build also
    /// returns the constrained program.
    pub floors: Option<Vec<f64>>,
}

impl SecrecyParams {
    pub fn dim(&self) -> usize {
        (self.q_count + self.j_count) * self.n_tones
    }

    fn receiver_count(&self) -> usize {
        self.q_count + 1
    }

    fn user_index(&self, q: usize, k: usize) -> usize {
        q * self.n_tones + k
    }

    fn jam_index(&self, j: usize, k: usize) -> usize {
        self.q_count * self.n_tones + j * self.n_tones + k
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_count == 0 || self.n_tones == 0 {
            return Err(Error::InvalidParams(
                "need at least one user and one tone".into(),
            ));
        }
        let table_ok = |t: &Vec<Vec<Vec<f64>>>, outer: usize| {
            t.len() == outer
                && t.iter().all(|per_rx| {
                    per_rx.len() == self.receiver_count()
                        && per_rx
                            .iter()
                            .all(|row| row.len() == self.n_tones && row.iter().all(|g| g.is_finite() && *g >= 0.0))
                })
        };
        if !table_ok(&self.gain, self.q_count) {
            return Err(Error::InvalidParams(
                "gain table must be q_count x (q_count + 1) x n_tones with finite nonnegative entries".into(),
            ));
        }
        if !table_ok(&self.jam_gain, self.j_count) {
            return Err(Error::InvalidParams(
                "jam_gain table must be j_count x (q_count + 1) x n_tones with finite nonnegative entries".into(),
            ));
        }
        let noise_ok = self.noise.len() == self.receiver_count()
            && self
                .noise
                .iter()
                .all(|row| row.len() == self.n_tones && row.iter().all(|s| s.is_finite() && *s > 0.0));
        if !noise_ok {
            return Err(Error::InvalidParams(
                "noise table must be (q_count + 1) x n_tones with strictly positive entries".into(),
            ));
        }
        let budget_ok = |b: &Vec<f64>, len: usize| {
            b.len() == len && b.iter().all(|v| v.is_finite() && *v > 0.0)
        };
        if !budget_ok(&self.budget, self.q_count) || !budget_ok(&self.jam_budget, self.j_count) {
            return Err(Error::InvalidParams(
                "budgets must be positive, one per transmitter".into(),
            ));
        }
        if let Some(f) = &self.floors {
            if f.len() != self.q_count || f.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidParams(
                    "rate floors must be nonnegative, one per user".into(),
                ));
            }
        }
        Ok(())
    }

    /// Affine coefficients of the interference-plus-noise power seen at
    /// receiver `r` on tone `k`, excluding user `exclude`'s own signal.
    fn interference(&self, r: usize, k: usize, exclude: usize) -> (DVector<f64>, f64) {
        let mut a = DVector::zeros(self.dim());
        for q in 0..self.q_count {
            if q != exclude {
                a[self.user_index(q, k)] = self.gain[q][r][k];
            }
        }
        for j in 0..self.j_count {
            a[self.jam_index(j, k)] = self.jam_gain[j][r][k];
        }
        (a, self.noise[r][k])
    }

    /// The convex pair whose pointwise structure encodes user `q`'s secrecy
    /// rate on tone `k`: with `S/I` the signal/interference powers at the
    /// intended receiver (subscript 1) and the eavesdropper (subscript 2),
    ///
    ///   g1 = -log S1 - log I2,   g2 = -log S2 - log I1,
    ///
    /// so that `g1 - max(g1, g2) = -max(0, R1 - R2)` is exactly the negated
    /// clipped rate difference while both pieces stay smooth and convex.
    fn rate_pair(&self, q: usize, k: usize) -> Result<(SmoothConvexFunction, SmoothConvexFunction)> {
        let dim = self.dim();
        let legit = q + 1;
        let (i1_a, i1_b) = self.interference(legit, k, q);
        let (i2_a, i2_b) = self.interference(0, k, q);
        let mut s1_a = i1_a.clone();
        s1_a[self.user_index(q, k)] = self.gain[q][legit][k];
        let mut s2_a = i2_a.clone();
        s2_a[self.user_index(q, k)] = self.gain[q][0][k];
        let g1 = SmoothConvexFunction::new(
            dim,
            vec![
                (1.0, Atom::neglog(s1_a, i1_b)),
                (1.0, Atom::neglog(i2_a.clone(), i2_b)),
            ],
        )?;
        let g2 = SmoothConvexFunction::new(
            dim,
            vec![
                (1.0, Atom::neglog(s2_a, i2_b)),
                (1.0, Atom::neglog(i1_a, i1_b)),
            ],
        )?;
        Ok((g1, g2))
    }

    /// Nonnegative powers capped per tone, plus one total-budget row per
    /// transmitter when there is more than one tone (with a single tone the
    /// cap and the budget coincide, so the box alone is exact).
    fn feasible_set(&self) -> Result<Polyhedron> {
        let dim = self.dim();
        let lower = DVector::zeros(dim);
        let mut upper = DVector::zeros(dim);
        for q in 0..self.q_count {
            for k in 0..self.n_tones {
                upper[self.user_index(q, k)] = self.budget[q];
            }
        }
        for j in 0..self.j_count {
            for k in 0..self.n_tones {
                upper[self.jam_index(j, k)] = self.jam_budget[j];
            }
        }
        if self.n_tones == 1 {
            return Polyhedron::bounds_only(lower, upper);
        }
        let tx = self.q_count + self.j_count;
        let mut a = DMatrix::zeros(tx, dim);
        let mut b = DVector::zeros(tx);
        for q in 0..self.q_count {
            for k in 0..self.n_tones {
                a[(q, self.user_index(q, k))] = 1.0;
            }
            b[q] = self.budget[q];
        }
        for j in 0..self.j_count {
            for k in 0..self.n_tones {
                a[(self.q_count + j, self.jam_index(j, k))] = 1.0;
            }
            b[self.q_count + j] = self.jam_budget[j];
        }
        Polyhedron::new(lower, upper, a, b)
    }
}

/// A built secrecy instance: the grouped objective, plus the same objective
/// under one merged rate-floor constraint when floors are present.
#[derive(Debug, Clone)]
pub struct SecrecyBuild {
    pub program: DcProgram,
    pub constrained: Option<ConstrainedDcProgram>,
}

/// Builds `minimize sum g1 - sum max(g1, g2)` over the power polyhedron:
/// the negated secrecy sum rate, with one two-piece group per user/tone.
/// Rate floors `rate_q(p) >= s_q` become the merged dc constraint
/// `max_q (s_q - rate_q(p)) <= 0`.
pub fn secrecy_rate_program(params: &SecrecyParams) -> Result<SecrecyBuild> {
    params.validate()?;
    let dim = params.dim();
    let mut phi = SmoothConvexFunction::zero(dim);
    let mut groups = Vec::new();
    for q in 0..params.q_count {
        for k in 0..params.n_tones {
            let (g1, g2) = params.rate_pair(q, k)?;
            phi = phi.add(&g1)?;
            groups.push(PiecewiseMaxConvex::new(vec![g1, g2])?);
        }
    }
    let program = DcProgram::new(
        ConvexFunction::smooth_only(phi),
        groups,
        params.feasible_set()?,
    )?;
    let constrained = match &params.floors {
        None => None,
        Some(floors) => {
            let mut items = Vec::new();
            for q in 0..params.q_count {
                let mut smooth =
                    SmoothConvexFunction::from_atom(Atom::affine(DVector::zeros(dim), floors[q]));
                let mut user_groups = Vec::new();
                for k in 0..params.n_tones {
                    let (g1, g2) = params.rate_pair(q, k)?;
                    smooth = smooth.add(&g1)?;
                    user_groups.push(PiecewiseMaxConvex::new(vec![g1, g2])?);
                }
                let varphi = tuple_sum(&user_groups, TUPLE_CAP)?;
                items.push((ConvexFunction::smooth_only(smooth), varphi));
            }
            let constraint = merge_dc_constraints(&items, TUPLE_CAP)?;
            Some(ConstrainedDcProgram::new(program.clone(), constraint)?)
        }
    };
    Ok(SecrecyBuild {
        program,
        constrained,
    })
}

/// Per-user secrecy rates `sum_k max(0, R1 - R2)` evaluated directly from
/// the channel tables. Serves as the independent check on the built
/// programs and feeds rate reports.
pub fn secrecy_user_rates(params: &SecrecyParams, p: &DVector<f64>) -> Result<Vec<f64>> {
    params.validate()?;
    if p.len() != params.dim() {
        return Err(Error::InvalidParams(format!(
            "power vector length {} does not match instance dimension {}",
            p.len(),
            params.dim()
        )));
    }
    let mut rates = Vec::with_capacity(params.q_count);
    for q in 0..params.q_count {
        let mut rate = 0.0;
        for k in 0..params.n_tones {
            let mut i1 = params.noise[q + 1][k];
            let mut i2 = params.noise[0][k];
            for q2 in 0..params.q_count {
                if q2 != q {
                    i1 += params.gain[q2][q + 1][k] * p[params.user_index(q2, k)];
                    i2 += params.gain[q2][0][k] * p[params.user_index(q2, k)];
                }
            }
            for j in 0..params.j_count {
                i1 += params.jam_gain[j][q + 1][k] * p[params.jam_index(j, k)];
                i2 += params.jam_gain[j][0][k] * p[params.jam_index(j, k)];
            }
            let own = p[params.user_index(q, k)];
            let r1 = ((i1 + params.gain[q][q + 1][k] * own) / i1).ln();
            let r2 = ((i2 + params.gain[q][0][k] * own) / i2).ln();
            rate += (r1 - r2).max(0.0);
        }
        rates.push(rate);
    }
    Ok(rates)
}

/// Seeded random channel tables: direct gains uniform in [0, 1), noise
/// floors uniform in [0.1, 1), unit budgets, no rate floors. The
/// distribution is this generator's own convention. Draw order: gains by
/// (transmitter, receiver, tone), then jammer gains, then noise by
/// (receiver, tone).
pub fn random_secrecy_params(
    q_count: usize,
    n_tones: usize,
    j_count: usize,
    seed: u64,
) -> Result<SecrecyParams> {
    if q_count == 0 || n_tones == 0 {
        return Err(Error::InvalidParams(
            "need at least one user and one tone".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rx = q_count + 1;
    let table = |outer: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<Vec<f64>>> {
        (0..outer)
            .map(|_| {
                (0..rx)
                    .map(|_| (0..n_tones).map(|_| rng.random_range(0.0..1.0)).collect())
                    .collect()
            })
            .collect()
    };
    let gain = table(q_count, &mut rng);
    let jam_gain = table(j_count, &mut rng);
    let noise = (0..rx)
        .map(|_| (0..n_tones).map(|_| rng.random_range(0.1..1.0)).collect())
        .collect();
    let params = SecrecyParams {
        q_count,
        n_tones,
        j_count,
        gain,
        jam_gain,
        noise,
        budget: vec![1.0; q_count],
        jam_budget: vec![1.0; j_count],
        floors: None,
    };
    params.validate()?;
    Ok(params)
}

// ---------------------------------------------------------------------------
// Quadratic programs with complementarity constraints
// ---------------------------------------------------------------------------

/// A quadratic program with a linear complementarity condition between
/// `y` and `w = r + N x + M y`, in the stacked variable `z = (x, y)`:
///
///   minimize (1/2) z'Qz + c'z + d
///   over     z in Z,  y >= 0,  w >= 0,  y'w <= 0.
#[derive(Debug, Clone)]
pub struct QpccData {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub d: f64,
    /// Bounds and extra rows on the stacked variable `z`.
    pub z_set: Polyhedron,
    pub r: DVector<f64>,
    /// `m x nx` map from the leading block of `z`.
    pub n_mat: DMatrix<f64>,
    /// `m x m` map from the trailing block of `z`.
    pub m_mat: DMatrix<f64>,
}

impl QpccData {
    fn validate(&self) -> Result<(usize, usize)> {
        let m = self.r.len();
        let nx = self.n_mat.ncols();
        if self.n_mat.nrows() != m || self.m_mat.nrows() != m || self.m_mat.ncols() != m {
            return Err(Error::InvalidParams(format!(
                "complementarity blocks must be {m} rows with a square trailing map; got N {}x{}, M {}x{}",
                self.n_mat.nrows(),
                self.n_mat.ncols(),
                self.m_mat.nrows(),
                self.m_mat.ncols()
            )));
        }
        let dim = nx + m;
        if self.z_set.dim() != dim || self.q.nrows() != dim || self.q.ncols() != dim || self.c.len() != dim {
            return Err(Error::InvalidParams(format!(
                "objective and set must live on the stacked dimension {dim}"
            )));
        }
        Ok((nx, m))
    }
}

/// Splits a symmetric matrix into a difference of positive semidefinite
/// parts by eigendecomposition, zeroing eigenvalues within 1e-10 of zero so
/// the split is deterministic near the semidefinite boundary.
fn split_indefinite(q: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, bool) {
    let n = q.nrows();
    let sym = 0.5 * (q + q.transpose());
    let eig = sym.symmetric_eigen();
    let mut plus = DMatrix::zeros(n, n);
    let mut minus = DMatrix::zeros(n, n);
    let mut any_minus = false;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= 1e-10 {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        let outer = &v * v.transpose();
        if lambda > 0.0 {
            plus += lambda * &outer;
        } else {
            minus += (-lambda) * &outer;
            any_minus = true;
        }
    }
    (plus, minus, any_minus)
}

fn quarter_square_atom(g: &DMatrix<f64>, g0: &DVector<f64>) -> Result<Atom> {
    Atom::quadratic(
        0.5 * g.transpose() * g,
        0.5 * g.transpose() * g0,
        0.25 * g0.dot(g0),
    )
}

/// Builds the dc form of a complementarity-constrained quadratic program.
/// The linear conditions `y >= 0` and `w >= 0` merge into the polyhedron;
/// the bilinear condition `y'w <= 0` becomes the difference of the convex
/// quadratics `(1/4)||y + w||^2 - (1/4)||y - w||^2`; an indefinite
/// objective splits into a difference of semidefinite quadratics.
pub fn qpcc_program(data: &QpccData) -> Result<ConstrainedDcProgram> {
    let (nx, m) = data.validate()?;
    let dim = nx + m;

    let mut lower = data.z_set.lower().clone();
    for i in 0..m {
        lower[nx + i] = lower[nx + i].max(0.0);
    }
    let (za, zb) = data.z_set.rows();
    let mut a = DMatrix::zeros(za.nrows() + m, dim);
    let mut b = DVector::zeros(za.nrows() + m);
    a.view_mut((0, 0), (za.nrows(), dim)).copy_from(za);
    b.rows_mut(0, za.nrows()).copy_from(zb);
    for i in 0..m {
        for col in 0..nx {
            a[(za.nrows() + i, col)] = -data.n_mat[(i, col)];
        }
        for col in 0..m {
            a[(za.nrows() + i, nx + col)] = -data.m_mat[(i, col)];
        }
        b[za.nrows() + i] = data.r[i];
    }
    let set = Polyhedron::new(lower, data.z_set.upper().clone(), a, b)?;

    let (q_plus, q_minus, any_minus) = split_indefinite(&data.q);
    let phi = ConvexFunction::smooth_only(SmoothConvexFunction::from_atom(Atom::quadratic(
        q_plus,
        data.c.clone(),
        data.d,
    )?));
    let concave_piece = if any_minus {
        SmoothConvexFunction::from_atom(Atom::quadratic(q_minus, DVector::zeros(dim), 0.0)?)
    } else {
        SmoothConvexFunction::zero(dim)
    };
    let base = DcProgram::new(phi, vec![PiecewiseMaxConvex::new(vec![concave_piece])?], set)?;

    // y + w = r + [N | M + I] z and y - w = -r + [-N | I - M] z.
    let mut g_plus = DMatrix::zeros(m, dim);
    let mut g_minus = DMatrix::zeros(m, dim);
    for i in 0..m {
        for col in 0..nx {
            g_plus[(i, col)] = data.n_mat[(i, col)];
            g_minus[(i, col)] = -data.n_mat[(i, col)];
        }
        for col in 0..m {
            let kron = if i == col { 1.0 } else { 0.0 };
            g_plus[(i, nx + col)] = data.m_mat[(i, col)] + kron;
            g_minus[(i, nx + col)] = kron - data.m_mat[(i, col)];
        }
    }
    let phi_c = ConvexFunction::smooth_only(SmoothConvexFunction::from_atom(quarter_square_atom(
        &g_plus, &data.r,
    )?));
    let psi_c_piece = SmoothConvexFunction::from_atom(quarter_square_atom(&g_minus, &(-&data.r))?);
    let constraint = DcConstraint::new(phi_c, vec![psi_c_piece])?;
    ConstrainedDcProgram::new(base, constraint)
}

// ---------------------------------------------------------------------------
// Random corpus generator
// ---------------------------------------------------------------------------

/// Seeded random test instance: a strongly convex quadratic smooth part
/// minus a single max of `pieces` random affine functions, over the box
/// [-5, 5]^n. The quadratic is `A'A + I` with `A` drawn row-major from
/// [-1, 1), then the linear term, then each piece's slope and offset — the
/// draw order is part of the deterministic contract.
pub fn random_dc_program(n: usize, pieces: usize, seed: u64) -> Result<DcProgram> {
    if n == 0 || pieces == 0 {
        return Err(Error::InvalidParams(
            "need at least one variable and one piece".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let a = DMatrix::from_row_slice(n, n, &entries);
    let p = a.transpose() * &a + DMatrix::identity(n, n);
    let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let phi = ConvexFunction::smooth_only(SmoothConvexFunction::from_atom(Atom::quadratic(
        p, c, 0.0,
    )?));
    let mut piece_fns = Vec::with_capacity(pieces);
    for _ in 0..pieces {
        let slope = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let offset = rng.random_range(-1.0..1.0);
        piece_fns.push(SmoothConvexFunction::from_atom(Atom::affine(slope, offset)));
    }
    let set = Polyhedron::bounds_only(
        DVector::from_element(n, -5.0),
        DVector::from_element(n, 5.0),
    )?;
    DcProgram::new(phi, vec![PiecewiseMaxConvex::new(piece_fns)?], set)
}

// ---------------------------------------------------------------------------
// Gallery of named instances
// ---------------------------------------------------------------------------

/// What a certificate check should conclude at a gallery point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedOutcome {
    Pass,
    Fail,
    /// The check refuses this structure (only exact checks are offered).
    Unsupported,
}

/// A pinned verdict: running `kind`'s check at `point` must conclude
/// `expected`.
#[derive(Debug, Clone)]
pub struct TaxonomyExpectation {
    pub point: DVector<f64>,
    pub kind: CertificateKind,
    pub expected: ExpectedOutcome,
}

#[derive(Debug, Clone)]
pub enum GalleryProblem {
    Unconstrained(DcProgram),
    Constrained(ConstrainedDcProgram),
}

/// A named instance with its regression metadata.
#[derive(Debug, Clone)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub blurb: &'static str,
    pub problem: GalleryProblem,
    /// Canonical starting point for solver regressions.
    pub start: DVector<f64>,
    /// Known stationary set (solution set for constrained entries).
    pub stationary_points: Vec<DVector<f64>>,
    pub expectations: Vec<TaxonomyExpectation>,
}

pub fn gallery_names() -> Vec<&'static str> {
    vec![
        "example3",
        "abs-square",
        "neg-abs",
        "plus-abs",
        "quartic-constraint",
        "qpcc-toy",
    ]
}

fn v1(t: f64) -> DVector<f64> {
    DVector::from_vec(vec![t])
}

fn affine1(slope: f64, offset: f64) -> SmoothConvexFunction {
    SmoothConvexFunction::from_atom(Atom::affine(v1(slope), offset))
}

fn quad1(half_curvature: f64, linear: f64, constant: f64) -> Result<SmoothConvexFunction> {
    Ok(SmoothConvexFunction::from_atom(Atom::quadratic(
        DMatrix::from_vec(1, 1, vec![2.0 * half_curvature]),
        v1(linear),
        constant,
    )?))
}

fn expect(point: f64, kind: CertificateKind, expected: ExpectedOutcome) -> TaxonomyExpectation {
    TaxonomyExpectation {
        point: v1(point),
        kind,
        expected,
    }
}

/// The toy data behind the "qpcc-toy" gallery entry: objective
/// `(x-1)^2 + (y-1)^2` over `[0,2]^2` with `w = y - x`; the branch optima
/// are `(0,0)` on the `y = 0` branch and `(1,1)` on the `y = x` branch,
/// and `(1,1)` is globally optimal with value 0.
pub fn toy_qpcc_data() -> QpccData {
    QpccData {
        q: DMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 2.0]),
        c: DVector::from_vec(vec![-2.0, -2.0]),
        d: 2.0,
        z_set: Polyhedron::bounds_only(
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![2.0, 2.0]),
        )
        .expect("static bounds"),
        r: DVector::from_vec(vec![0.0]),
        n_mat: DMatrix::from_vec(1, 1, vec![-1.0]),
        m_mat: DMatrix::from_vec(1, 1, vec![1.0]),
    }
}

/// Returns the named instance with its pinned expectations.
pub fn toy_gallery(name: &str) -> Result<GalleryEntry> {
    use CertificateKind as K;
    use ExpectedOutcome as O;
    match name {
        "example3" => {
            let program = DcProgram::new(
                ConvexFunction::smooth_only(quad1(0.5, 0.0, 0.0)?),
                vec![PiecewiseMaxConvex::new(vec![
                    affine1(-1.0, 0.0),
                    SmoothConvexFunction::zero(1),
                ])?],
                Polyhedron::interval(-5.0, 5.0)?,
            )?;
            Ok(GalleryEntry {
                name: "example3",
                blurb: "half x squared minus the positive part of -x; the only point every piece certifies is -1",
                problem: GalleryProblem::Unconstrained(program),
                start: v1(1.0),
                stationary_points: vec![v1(-1.0)],
                expectations: vec![
                    expect(0.0, K::Critical, O::Pass),
                    expect(0.0, K::D, O::Fail),
                    expect(-1.0, K::D, O::Pass),
                ],
            })
        }
        "abs-square" => {
            let program = DcProgram::new(
                ConvexFunction::smooth_only(quad1(1.0, 0.0, 1.0)?),
                vec![PiecewiseMaxConvex::new(vec![
                    affine1(2.0, 0.0),
                    affine1(-2.0, 0.0),
                ])?],
                Polyhedron::interval(-5.0, 5.0)?,
            )?;
            Ok(GalleryEntry {
                name: "abs-square",
                blurb: "1 + x^2 - 2|x|: the origin clears the Clarke test yet no piece certifies it; the true stationary points are +-1",
                problem: GalleryProblem::Unconstrained(program),
                start: v1(0.0),
                stationary_points: vec![v1(-1.0), v1(1.0)],
                expectations: vec![
                    expect(0.0, K::Clarke, O::Pass),
                    expect(0.0, K::Critical, O::Pass),
                    expect(0.0, K::D, O::Fail),
                    expect(-1.0, K::D, O::Pass),
                    expect(1.0, K::D, O::Pass),
                ],
            })
        }
        "neg-abs" => {
            let program = DcProgram::new(
                ConvexFunction::smooth_only(SmoothConvexFunction::zero(1)),
                vec![PiecewiseMaxConvex::new(vec![
                    affine1(1.0, 0.0),
                    affine1(-1.0, 0.0),
                ])?],
                Polyhedron::interval(-1.0, 1.0)?,
            )?;
            Ok(GalleryEntry {
                name: "neg-abs",
                blurb: "-|x| on [-1, 1]: the origin is a local maximum that still clears the Clarke and criticality tests",
                problem: GalleryProblem::Unconstrained(program),
                start: v1(0.3),
                stationary_points: vec![v1(-1.0), v1(1.0)],
                expectations: vec![
                    expect(0.0, K::Clarke, O::Pass),
                    expect(0.0, K::Critical, O::Pass),
                    expect(0.0, K::D, O::Fail),
                    expect(-1.0, K::D, O::Pass),
                    expect(1.0, K::D, O::Pass),
                ],
            })
        }
        "plus-abs" => {
            let phi = ConvexFunction::new(
                SmoothConvexFunction::zero(1),
                Some(PiecewiseMaxConvex::new(vec![
                    affine1(2.0, 0.0),
                    SmoothConvexFunction::zero(1),
                ])?),
            )?;
            let program = DcProgram::new(
                phi,
                vec![PiecewiseMaxConvex::new(vec![
                    affine1(1.0, 0.0),
                    affine1(-1.0, 0.0),
                ])?],
                Polyhedron::interval(-1.0, 1.0)?,
            )?;
            Ok(GalleryEntry {
                name: "plus-abs",
                blurb: "(x + |x|) - |x| = x on [-1, 1] with a nonsmooth convex part: one piece certifies the origin but not all of them, and the exact Clarke test refuses the structure",
                problem: GalleryProblem::Unconstrained(program),
                start: v1(0.5),
                stationary_points: vec![v1(-1.0)],
                expectations: vec![
                    expect(0.0, K::Clarke, O::Unsupported),
                    expect(0.0, K::Critical, O::Pass),
                    expect(0.0, K::D, O::Fail),
                    expect(-1.0, K::D, O::Pass),
                ],
            })
        }
        "quartic-constraint" => {
            let base = DcProgram::new(
                ConvexFunction::smooth_only(quad1(0.5, -2.0, 2.0)?),
                vec![PiecewiseMaxConvex::new(vec![SmoothConvexFunction::zero(1)])?],
                Polyhedron::interval(-3.0, 3.0)?,
            )?;
            let phi_c = ConvexFunction::smooth_only(SmoothConvexFunction::from_atom(
                Atom::even_power(v1(1.0), 0.0, 4)?,
            ));
            let constraint = DcConstraint::new(phi_c, vec![quad1(1.0, 0.0, 0.0)?])?;
            let program = ConstrainedDcProgram::new(base, constraint)?;
            Ok(GalleryEntry {
                name: "quartic-constraint",
                blurb: "half (x-2)^2 subject to x^4 - x^2 <= 0: the feasible set is [-1, 1] but the linearized constraint has no strictly feasible point at the origin",
                problem: GalleryProblem::Constrained(program),
                start: v1(0.5),
                stationary_points: vec![v1(1.0)],
                expectations: vec![expect(1.0, K::B, O::Pass)],
            })
        }
        "qpcc-toy" => {
            let program = qpcc_program(&toy_qpcc_data())?;
            Ok(GalleryEntry {
                name: "qpcc-toy",
                blurb: "complementarity toy: minimize (x-1)^2 + (y-1)^2 over [0,2]^2 with y complementary to y - x; branch optima (0,0) and (1,1)",
                problem: GalleryProblem::Constrained(program),
                start: DVector::from_vec(vec![2.0, 2.0]),
                stationary_points: vec![DVector::from_vec(vec![1.0, 1.0])],
                expectations: vec![TaxonomyExpectation {
                    point: DVector::from_vec(vec![1.0, 1.0]),
                    kind: CertificateKind::B,
                    expected: ExpectedOutcome::Pass,
                }],
            })
        }
        other => Err(Error::UnknownName(format!(
            "no gallery instance named '{other}'; known names: {}",
            gallery_names().join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{check_clarke, check_critical, check_d_stationary, Verdict};
    use crate::consensus::{consensus_solve, ConsensusOptions};
    use crate::dca::SolveOptions;
    use crate::dcc::{check_B_stationary, penalty_solve, slater_check, PenaltySchedule};
    use crate::subsolver::{self, SubproblemSpec, SubsolverOptions};
    use approx::assert_relative_eq;

    fn sample_feasible(params: &SecrecyParams, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let mut p = DVector::zeros(params.dim());
        for q in 0..params.q_count {
            for k in 0..params.n_tones {
                p[params.user_index(q, k)] =
                    rng.random_range(0.0..params.budget[q] / params.n_tones as f64);
            }
        }
        for j in 0..params.j_count {
            for k in 0..params.n_tones {
                p[params.jam_index(j, k)] =
                    rng.random_range(0.0..params.jam_budget[j] / params.n_tones as f64);
            }
        }
        p
    }

    /// Clipped-rate oracle written in the 1 + SNR form, a different
    /// arithmetic path from both the atom evaluation and the public helper.
    fn direct_negated_sum_rate(params: &SecrecyParams, p: &DVector<f64>) -> f64 {
        let mut total = 0.0;
        for q in 0..params.q_count {
            for k in 0..params.n_tones {
                let mut i1 = params.noise[q + 1][k];
                let mut i2 = params.noise[0][k];
                for q2 in 0..params.q_count {
                    if q2 != q {
                        i1 += params.gain[q2][q + 1][k] * p[params.user_index(q2, k)];
                        i2 += params.gain[q2][0][k] * p[params.user_index(q2, k)];
                    }
                }
                for j in 0..params.j_count {
                    i1 += params.jam_gain[j][q + 1][k] * p[params.jam_index(j, k)];
                    i2 += params.jam_gain[j][0][k] * p[params.jam_index(j, k)];
                }
                let own = p[params.user_index(q, k)];
                let r1 = (params.gain[q][q + 1][k] * own / i1).ln_1p();
                let r2 = (params.gain[q][0][k] * own / i2).ln_1p();
                total += (r1 - r2).max(0.0);
            }
        }
        -total
    }

    #[test]
    fn deaf_eavesdropper_collapses_to_the_plain_sum_rate() {
        let mut params = random_secrecy_params(2, 2, 1, 5).unwrap();
        for q in 0..params.q_count {
            for k in 0..params.n_tones {
                params.gain[q][0][k] = 0.0;
            }
        }
        let build = secrecy_rate_program(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            let p = sample_feasible(&params, &mut rng);
            let mut plain = 0.0;
            for q in 0..params.q_count {
                for k in 0..params.n_tones {
                    let mut i1 = params.noise[q + 1][k];
                    for q2 in 0..params.q_count {
                        if q2 != q {
                            i1 += params.gain[q2][q + 1][k] * p[params.user_index(q2, k)];
                        }
                    }
                    for j in 0..params.j_count {
                        i1 += params.jam_gain[j][q + 1][k] * p[params.jam_index(j, k)];
                    }
                    plain += (params.gain[q][q + 1][k] * p[params.user_index(q, k)] / i1).ln_1p();
                }
            }
            let zeta = build.program.zeta(&p).unwrap();
            assert!(
                (zeta + plain).abs() <= 1e-10 * (1.0 + plain.abs()),
                "zeta {zeta} vs negated plain rate {}",
                -plain
            );
        }
    }

    #[test]
    fn symmetric_single_user_instance_has_zero_rate() {
        let params = SecrecyParams {
            q_count: 1,
            n_tones: 1,
            j_count: 0,
            gain: vec![vec![vec![0.7], vec![0.7]]],
            jam_gain: vec![],
            noise: vec![vec![0.4], vec![0.4]],
            budget: vec![1.0],
            jam_budget: vec![],
            floors: None,
        };
        let build = secrecy_rate_program(&params).unwrap();
        for &t in &[0.0, 0.3, 1.0] {
            assert!(build.program.zeta(&v1(t)).unwrap().abs() <= 1e-12);
            assert!(secrecy_user_rates(&params, &v1(t)).unwrap()[0].abs() <= 1e-12);
        }
    }

    #[test]
    fn seeded_instance_matches_the_direct_secrecy_formula() {
        let params = random_secrecy_params(2, 2, 1, 42).unwrap();
        let build = secrecy_rate_program(&params).unwrap();
        assert_eq!(build.program.dim(), 6);
        assert_eq!(build.program.num_groups(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(420);
        for _ in 0..100 {
            let p = sample_feasible(&params, &mut rng);
            let direct = direct_negated_sum_rate(&params, &p);
            let zeta = build.program.zeta(&p).unwrap();
            assert!(
                (zeta - direct).abs() <= 1e-10 * (1.0 + direct.abs()),
                "zeta {zeta} vs direct {direct}"
            );
            let rate_sum: f64 = secrecy_user_rates(&params, &p).unwrap().iter().sum();
            assert!((zeta + rate_sum).abs() <= 1e-10 * (1.0 + rate_sum.abs()));
        }
    }

    #[test]
    fn rate_floors_become_one_merged_constraint() {
        let mut params = random_secrecy_params(2, 2, 0, 9).unwrap();
        params.floors = Some(vec![0.01, 0.02]);
        let build = secrecy_rate_program(&params).unwrap();
        let constrained = build.constrained.expect("floors present");
        let floors = params.floors.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(90);
        for _ in 0..20 {
            let p = sample_feasible(&params, &mut rng);
            let rates = secrecy_user_rates(&params, &p).unwrap();
            let want = (0..params.q_count)
                .map(|q| floors[q] - rates[q])
                .fold(f64::NEG_INFINITY, f64::max);
            let got = constrained.constraint_value(&p).unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * (1.0 + want.abs()),
                "merged constraint {got} vs direct worst floor gap {want}"
            );
        }
        let unfloored = secrecy_rate_program(&SecrecyParams {
            floors: None,
            ..params.clone()
        })
        .unwrap();
        let p = sample_feasible(&params, &mut rng);
        assert_relative_eq!(
            build.program.zeta(&p).unwrap(),
            unfloored.program.zeta(&p).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn qpcc_toy_splits_into_the_known_quadratics() {
        let data = toy_qpcc_data();
        let program = qpcc_program(&data).unwrap();
        assert_eq!(program.base.num_groups(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let z: DVector<f64> = DVector::from_fn(2, |_, _| rng.random_range(-1.0..3.0));
            let direct = (z[0] - 1.0).powi(2) + (z[1] - 1.0).powi(2);
            assert_relative_eq!(program.base.zeta(&z).unwrap(), direct, epsilon = 1e-12);
            let w = z[1] - z[0];
            assert_relative_eq!(
                program.constraint_value(&z).unwrap(),
                z[1] * w,
                epsilon = 1e-12
            );
        }
        assert!(program.base.set.contains(&DVector::from_vec(vec![1.0, 1.0]), 1e-9));
        assert!(!program.base.set.contains(&DVector::from_vec(vec![2.0, 0.5]), 1e-9));
    }

    #[test]
    fn qpcc_toy_penalty_run_lands_on_the_good_branch() {
        let program = qpcc_program(&toy_qpcc_data()).unwrap();
        let report = penalty_solve(
            &program,
            &DVector::from_vec(vec![2.0, 2.0]),
            &PenaltySchedule::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        let x = &report.report.x;
        // Branch enumeration: (0,0) with value 2 on the y = 0 branch,
        // (1,1) with value 0 on the y = x branch.
        assert!((x[0] - 1.0).abs() <= 1e-4 && (x[1] - 1.0).abs() <= 1e-4, "got {x:?}");
        let comp = x[1] * (x[1] - x[0]);
        assert!(comp.abs() <= 1e-6, "complementarity residual {comp}");
        assert!(report.constraint_residual <= 1e-6);
    }

    #[test]
    fn qpcc_psd_slack_instance_matches_the_plain_qp() {
        // minimize (x-1)^2 + (y+1)^2 over [0,2]^2 with w = 2 + x + y, which
        // stays strictly positive, so complementarity just pins y = 0 and
        // the answer matches the quadratic program without the bilinear
        // condition.
        let data = QpccData {
            q: DMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 2.0]),
            c: DVector::from_vec(vec![-2.0, 2.0]),
            d: 2.0,
            z_set: Polyhedron::bounds_only(
                DVector::from_vec(vec![0.0, 0.0]),
                DVector::from_vec(vec![2.0, 2.0]),
            )
            .unwrap(),
            r: DVector::from_vec(vec![2.0]),
            n_mat: DMatrix::from_vec(1, 1, vec![1.0]),
            m_mat: DMatrix::from_vec(1, 1, vec![1.0]),
        };
        let program = qpcc_program(&data).unwrap();
        let report = penalty_solve(
            &program,
            &DVector::from_vec(vec![0.5, 0.5]),
            &PenaltySchedule::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        // Plain-QP oracle: proximal-point iteration with the subsolver on
        // the merged polyhedron, ignoring the bilinear condition.
        let mut z = DVector::from_vec(vec![0.5, 0.5]);
        let sub_opts = SubsolverOptions::default();
        for _ in 0..60 {
            let spec = SubproblemSpec {
                objective: program.base.phi.clone(),
                linear: DVector::zeros(2),
                prox_weight: 1.0,
                prox_center: z.clone(),
                set: program.base.set.clone(),
                constraints: vec![],
                start: Some(z.clone()),
            };
            z = subsolver::solve(&spec, &sub_opts).unwrap().x;
        }
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(z[1], 0.0, epsilon = 1e-8);
        assert!((report.report.x[0] - z[0]).abs() <= 1e-5, "{:?}", report.report.x);
        assert!((report.report.x[1] - z[1]).abs() <= 1e-5, "{:?}", report.report.x);
        assert!(report.constraint_residual <= 1e-6);
    }

    #[test]
    fn qpcc_x_free_complementarity_matches_enumeration() {
        // w = 1 - y does not involve x, so complementarity pins y to {0, 1}
        // and the objective splits: x goes to 1.5 on its own, and y = 1
        // wins because (1 - 0.8)^2 < (0 - 0.8)^2.
        let data = QpccData {
            q: DMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 2.0]),
            c: DVector::from_vec(vec![-3.0, -1.6]),
            d: 1.5 * 1.5 + 0.8 * 0.8,
            z_set: Polyhedron::bounds_only(
                DVector::from_vec(vec![0.0, 0.0]),
                DVector::from_vec(vec![2.0, 2.0]),
            )
            .unwrap(),
            r: DVector::from_vec(vec![1.0]),
            n_mat: DMatrix::from_vec(1, 1, vec![0.0]),
            m_mat: DMatrix::from_vec(1, 1, vec![-1.0]),
        };
        let program = qpcc_program(&data).unwrap();
        let report = penalty_solve(
            &program,
            &DVector::from_vec(vec![0.3, 0.75]),
            &PenaltySchedule::default(),
            &SolveOptions::default(),
        )
        .unwrap();
        let x = &report.report.x;
        let enumerated: Vec<(f64, f64)> = vec![(1.5, 0.0), (1.5, 1.0)];
        let best = enumerated
            .iter()
            .min_by(|a, b| {
                let va = (a.0 - 1.5).powi(2) + (a.1 - 0.8).powi(2);
                let vb = (b.0 - 1.5).powi(2) + (b.1 - 0.8).powi(2);
                va.partial_cmp(&vb).unwrap()
            })
            .unwrap();
        assert!((x[0] - best.0).abs() <= 1e-4 && (x[1] - best.1).abs() <= 1e-4, "got {x:?}");
        let comp = x[1] * (1.0 - x[1]);
        assert!(comp.abs() <= 1e-6, "complementarity residual {comp}");
    }

    #[test]
    fn indefinite_objectives_split_into_psd_parts() {
        let q = DMatrix::from_vec(2, 2, vec![2.0, 3.0, 3.0, -1.0]);
        let data = QpccData {
            q: q.clone(),
            c: DVector::from_vec(vec![0.3, -0.7]),
            d: 0.1,
            z_set: Polyhedron::bounds_only(
                DVector::from_vec(vec![-2.0, -2.0]),
                DVector::from_vec(vec![2.0, 2.0]),
            )
            .unwrap(),
            r: DVector::from_vec(vec![1.0]),
            n_mat: DMatrix::from_vec(1, 1, vec![1.0]),
            m_mat: DMatrix::from_vec(1, 1, vec![1.0]),
        };
        let program = qpcc_program(&data).unwrap();
        let group_piece = program.base.groups[0].piece(0);
        assert!(!group_piece.is_zero(), "an indefinite objective needs a concave part");
        for h in [
            program.base.phi.smooth.quadratic_hessian(),
            group_piece.quadratic_hessian(),
        ] {
            let min_eig = h
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(min_eig >= -1e-9, "split part has eigenvalue {min_eig}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let z = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let direct = 0.5 * (&q * &z).dot(&z) + data.c.dot(&z) + data.d;
            let zeta = program.base.zeta(&z).unwrap();
            assert!(
                (zeta - direct).abs() <= 1e-10 * (1.0 + direct.abs()),
                "zeta {zeta} vs direct {direct}"
            );
        }
    }

    #[test]
    fn gallery_expectations_hold() {
        for name in gallery_names() {
            let entry = toy_gallery(name).unwrap();
            for exp in &entry.expectations {
                let outcome = match (&entry.problem, exp.kind) {
                    (GalleryProblem::Unconstrained(p), CertificateKind::D) => {
                        verdict_to_outcome(check_d_stationary(p, &exp.point, 1e-6).map(|c| c.verdict))
                    }
                    (GalleryProblem::Unconstrained(p), CertificateKind::Critical) => {
                        verdict_to_outcome(check_critical(p, &exp.point, 1e-6).map(|c| c.verdict))
                    }
                    (GalleryProblem::Unconstrained(p), CertificateKind::Clarke) => {
                        verdict_to_outcome(check_clarke(p, &exp.point, 1e-6).map(|c| c.verdict))
                    }
                    (GalleryProblem::Constrained(p), CertificateKind::B) => {
                        verdict_to_outcome(check_B_stationary(p, &exp.point, 1e-6).map(|c| c.verdict))
                    }
                    other => panic!("{name}: unsupported expectation pairing {other:?}"),
                };
                assert_eq!(
                    outcome, exp.expected,
                    "{name}: {:?} at {:?}",
                    exp.kind, exp.point
                );
            }
        }
    }

    fn verdict_to_outcome(v: Result<Verdict>) -> ExpectedOutcome {
        match v {
            Ok(Verdict::Pass) => ExpectedOutcome::Pass,
            Ok(Verdict::Fail) => ExpectedOutcome::Fail,
            Err(Error::UnsupportedStructure(_)) => ExpectedOutcome::Unsupported,
            Err(e) => panic!("unexpected certificate error: {e}"),
        }
    }

    #[test]
    fn quartic_constraint_slater_verdicts() {
        let entry = toy_gallery("quartic-constraint").unwrap();
        let GalleryProblem::Constrained(program) = &entry.problem else {
            panic!("expected a constrained entry");
        };
        let at_zero = slater_check(program, &v1(0.0), 0, 0.0).unwrap();
        assert!(!at_zero.holds, "linearized probe value {}", at_zero.value);
        for t in [-1.0, 1.0] {
            let rep = slater_check(program, &v1(t), 0, 0.0).unwrap();
            assert!(rep.holds && rep.value < -1e-8, "at {t}: value {}", rep.value);
        }
    }

    #[test]
    fn unknown_gallery_names_are_rejected() {
        assert!(matches!(
            toy_gallery("example4"),
            Err(Error::UnknownName(_))
        ));
    }

    #[test]
    fn random_generators_are_deterministic() {
        let a = random_dc_program(4, 3, 11).unwrap();
        let b = random_dc_program(4, 3, 11).unwrap();
        assert_eq!(a.dim(), 4);
        assert_eq!(a.num_groups(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = DVector::from_fn(4, |_, _| rng.random_range(-5.0..5.0));
            assert_eq!(a.zeta(&x).unwrap(), b.zeta(&x).unwrap());
        }
        let pa = random_secrecy_params(2, 2, 1, 7).unwrap();
        let pb = random_secrecy_params(2, 2, 1, 7).unwrap();
        let ba = secrecy_rate_program(&pa).unwrap();
        let bb = secrecy_rate_program(&pb).unwrap();
        let p = sample_feasible(&pa, &mut rng);
        assert_eq!(ba.program.zeta(&p).unwrap(), bb.program.zeta(&p).unwrap());
    }

    #[test]
    fn budget_rows_cap_total_power_per_transmitter() {
        let params = random_secrecy_params(2, 3, 1, 3).unwrap();
        let build = secrecy_rate_program(&params).unwrap();
        let set = &build.program.set;
        let full = set.upper().clone();
        assert!(!set.contains(&full, 1e-9), "full per-tone power must break the budget rows");
        let projected = set.project(&full, 1e-10).unwrap();
        for q in 0..params.q_count {
            let total: f64 = (0..params.n_tones)
                .map(|k| projected[params.user_index(q, k)])
                .sum();
            assert!(total <= params.budget[q] + 1e-8, "user {q} spends {total}");
        }
    }

    #[test]
    fn desk_consensus_run_certifies_the_secrecy_instance() {
        // Seed chosen so the limit does not sit on a rate-sign kink: at a
        // kink the per-agent piece selection freezes once the penalty is
        // large (candidate steps differ by O(1/rho^2)) and the run can only
        // satisfy the selected piece's condition, which the certificate
        // rightly reports as a downgraded claim.
        let params = random_secrecy_params(2, 2, 1, 1).unwrap();
        let build = secrecy_rate_program(&params).unwrap();
        let mut opts = ConsensusOptions::default();
        opts.rho_max = 1e8;
        opts.cert_tol = 1e-5;
        opts.base.max_iter = 2000;
        let start = DVector::from_element(build.program.dim(), 0.25);
        let report = consensus_solve(&build.program, &start, &opts).unwrap();
        assert!(
            report.consensus_residual <= 1e-6,
            "consensus residual {}",
            report.consensus_residual
        );
        // Within every fixed-penalty phase the duplicated objective must not
        // increase (small slack for floating-point accumulation).
        let mut prev: Option<(f64, f64)> = None;
        for &(rho, theta) in &report.theta_trace {
            if let Some((prev_rho, prev_theta)) = prev {
                if prev_rho == rho {
                    assert!(
                        theta <= prev_theta + 1e-9 * (1.0 + prev_theta.abs()),
                        "theta rose from {prev_theta} to {theta} at rho {rho}"
                    );
                }
            }
            prev = Some((rho, theta));
        }
        assert!(
            report.certificate.residual <= 1e-5,
            "certificate residual {}",
            report.certificate.residual
        );
    }
}

//! Convex function atoms and the piecewise structures built from them.
//!
//! Everything downstream works with three layers:
//!
//! 1. [`Atom`]: a single smooth convex primitive (affine, PSD quadratic,
//!    negative log of an affine form, or an even power of an affine form);
//! 2. [`SmoothConvexFunction`]: a nonnegative weighted sum of atoms;
//! 3. [`PiecewiseMaxConvex`]: a pointwise maximum of finitely many smooth
//!    convex functions, and [`ConvexFunction`] = smooth part + optional max part.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Default margin for deciding which pieces of a max are "numerically active".
pub const TOL_ACTIVE: f64 = 1e-9;

/// Smallest eigenvalue a quadratic atom may have before construction fails.
pub const PSD_TOL: f64 = -1e-10;

/// A smooth convex primitive on `R^n`.
#[derive(Debug, Clone)]
pub enum Atom {
    /// `a'x + b`.
    Affine { a: DVector<f64>, b: f64 },
    /// `x'Qx/2 + c'x + d` with `Q` symmetric positive semidefinite.
    Quadratic {
        q: DMatrix<f64>,
        c: DVector<f64>,
        d: f64,
    },
    /// `-log(a'x + b)`, defined where `a'x + b > 0`.
    NegLogAffine { a: DVector<f64>, b: f64 },
    /// `(a'x + b)^p` with `p` even and at least 2.
    EvenPowerAffine { a: DVector<f64>, b: f64, p: u32 },
}

impl Atom {
    pub fn affine(a: DVector<f64>, b: f64) -> Atom {
        Atom::Affine { a, b }
    }

    /// Builds a quadratic atom. `q` is symmetrized as `(Q + Q')/2` and its
    /// smallest eigenvalue must be at least [`PSD_TOL`].
    pub fn quadratic(q: DMatrix<f64>, c: DVector<f64>, d: f64) -> Result<Atom> {
        if q.nrows() != q.ncols() {
            return Err(Error::InvalidParams(format!(
                "quadratic atom needs a square matrix, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.nrows() != c.len() {
            return Err(Error::InvalidParams(format!(
                "quadratic atom dimension mismatch: Q is {}x{}, c has length {}",
                q.nrows(),
                q.ncols(),
                c.len()
            )));
        }
        let sym = (&q + q.transpose()) * 0.5;
        let min_eig = sym
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < PSD_TOL {
            return Err(Error::InvalidParams(format!(
                "quadratic atom is not positive semidefinite: min eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(Atom::Quadratic { q: sym, c, d })
    }

    /// Internal constructor for matrices already known to be symmetric PSD
    /// (eigenvalue-clamped splits, zero-padded copies).
    pub(crate) fn quadratic_unchecked(q: DMatrix<f64>, c: DVector<f64>, d: f64) -> Atom {
        Atom::Quadratic { q, c, d }
    }

    pub fn neglog(a: DVector<f64>, b: f64) -> Atom {
        Atom::NegLogAffine { a, b }
    }

    /// Builds `(a'x + b)^p`; `p` must be even and at least 2 so the atom is
    /// convex on all of `R^n`.
    pub fn even_power(a: DVector<f64>, b: f64, p: u32) -> Result<Atom> {
        if p < 2 || p % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "even-power atom needs an even exponent >= 2, got {p}"
            )));
        }
        Ok(Atom::EvenPowerAffine { a, b, p })
    }

    pub fn dim(&self) -> usize {
        match self {
            Atom::Affine { a, .. } => a.len(),
            Atom::Quadratic { c, .. } => c.len(),
            Atom::NegLogAffine { a, .. } => a.len(),
            Atom::EvenPowerAffine { a, .. } => a.len(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        match self {
            Atom::Affine { a, b } => Ok(a.dot(x) + b),
            Atom::Quadratic { q, c, d } => Ok(0.5 * x.dot(&(q * x)) + c.dot(x) + d),
            Atom::NegLogAffine { a, b } => {
                let t = a.dot(x) + b;
                if t <= 0.0 {
                    return Err(Error::DomainViolation(format!(
                        "neglog argument {t:.6e} is not positive"
                    )));
                }
                Ok(-t.ln())
            }
            Atom::EvenPowerAffine { a, b, p } => Ok((a.dot(x) + b).powi(*p as i32)),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Atom::Affine { a, .. } => Ok(a.clone()),
            Atom::Quadratic { q, c, .. } => Ok(q * x + c),
            Atom::NegLogAffine { a, b } => {
                let t = a.dot(x) + b;
                if t <= 0.0 {
                    return Err(Error::DomainViolation(format!(
                        "neglog argument {t:.6e} is not positive"
                    )));
                }
                Ok(a * (-1.0 / t))
            }
            Atom::EvenPowerAffine { a, b, p } => {
                let t = a.dot(x) + b;
                Ok(a * (*p as f64 * t.powi(*p as i32 - 1)))
            }
        }
    }

    /// Zero-pads the atom to a larger ambient dimension (new coordinates do
    /// not participate).
    pub(crate) fn pad_to(&self, dim: usize) -> Atom {
        let pad = |v: &DVector<f64>| {
            let mut out = DVector::zeros(dim);
            out.rows_mut(0, v.len()).copy_from(v);
            out
        };
        match self {
            Atom::Affine { a, b } => Atom::Affine { a: pad(a), b: *b },
            Atom::Quadratic { q, c, d } => {
                let mut qq = DMatrix::zeros(dim, dim);
                qq.view_mut((0, 0), (q.nrows(), q.ncols())).copy_from(q);
                Atom::Quadratic {
                    q: qq,
                    c: pad(c),
                    d: *d,
                }
            }
            Atom::NegLogAffine { a, b } => Atom::NegLogAffine { a: pad(a), b: *b },
            Atom::EvenPowerAffine { a, b, p } => Atom::EvenPowerAffine {
                a: pad(a),
                b: *b,
                p: *p,
            },
        }
    }
}

/// A nonnegative weighted sum of atoms; the empty sum is the zero function.
#[derive(Debug, Clone)]
pub struct SmoothConvexFunction {
    dim: usize,
    terms: Vec<(f64, Atom)>,
}

impl SmoothConvexFunction {
    pub fn new(dim: usize, terms: Vec<(f64, Atom)>) -> Result<SmoothConvexFunction> {
        for (w, atom) in &terms {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "atom weight {w} must be finite and nonnegative"
                )));
            }
            if atom.dim() != dim {
                return Err(Error::InvalidParams(format!(
                    "atom dimension {} does not match function dimension {dim}",
                    atom.dim()
                )));
            }
        }
        Ok(SmoothConvexFunction { dim, terms })
    }

    pub fn zero(dim: usize) -> SmoothConvexFunction {
        SmoothConvexFunction { dim, terms: vec![] }
    }

    pub fn from_atom(atom: Atom) -> SmoothConvexFunction {
        SmoothConvexFunction {
            dim: atom.dim(),
            terms: vec![(1.0, atom)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[(f64, Atom)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut v = 0.0;
        for (w, atom) in &self.terms {
            v += w * atom.value(x)?;
        }
        Ok(v)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(self.dim);
        for (w, atom) in &self.terms {
            g.axpy(*w, &atom.gradient(x)?, 1.0);
        }
        Ok(g)
    }

    /// Sum of the quadratic-atom Hessians (the constant part of the Hessian).
    pub fn quadratic_hessian(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (w, atom) in &self.terms {
            if let Atom::Quadratic { q, .. } = atom {
                h += *w * q;
            }
        }
        h
    }

    /// True if the function has atoms whose curvature varies over the domain
    /// (neglog or even-power), so step-size backtracking is required.
    pub fn has_varying_curvature(&self) -> bool {
        self.terms.iter().any(|(_, a)| {
            matches!(
                a,
                Atom::NegLogAffine { .. } | Atom::EvenPowerAffine { .. }
            )
        })
    }

    /// Pointwise sum: concatenates the term lists.
    pub fn add(&self, other: &SmoothConvexFunction) -> Result<SmoothConvexFunction> {
        if self.dim != other.dim {
            return Err(Error::InvalidParams(format!(
                "cannot add functions of dimensions {} and {}",
                self.dim, other.dim
            )));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(SmoothConvexFunction {
            dim: self.dim,
            terms,
        })
    }

    /// Scales every weight by `s >= 0`.
    pub fn scale(&self, s: f64) -> Result<SmoothConvexFunction> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::InvalidParams(format!(
                "scale factor {s} must be finite and nonnegative"
            )));
        }
        Ok(SmoothConvexFunction {
            dim: self.dim,
            terms: self.terms.iter().map(|(w, a)| (w * s, a.clone())).collect(),
        })
    }

    pub(crate) fn pad_to(&self, dim: usize) -> SmoothConvexFunction {
        SmoothConvexFunction {
            dim,
            terms: self
                .terms
                .iter()
                .map(|(w, a)| (*w, a.pad_to(dim)))
                .collect(),
        }
    }
}

/// A pointwise maximum of smooth convex functions (at least one piece).
#[derive(Debug, Clone)]
pub struct PiecewiseMaxConvex {
    pieces: Vec<SmoothConvexFunction>,
}

impl PiecewiseMaxConvex {
    pub fn new(pieces: Vec<SmoothConvexFunction>) -> Result<PiecewiseMaxConvex> {
        if pieces.is_empty() {
            return Err(Error::InvalidParams(
                "piecewise max needs at least one piece".into(),
            ));
        }
        let dim = pieces[0].dim();
        if pieces.iter().any(|p| p.dim() != dim) {
            return Err(Error::InvalidParams(
                "piecewise max pieces must share a dimension".into(),
            ));
        }
        Ok(PiecewiseMaxConvex { pieces })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn pieces(&self) -> &[SmoothConvexFunction] {
        &self.pieces
    }

    pub fn piece(&self, i: usize) -> &SmoothConvexFunction {
        &self.pieces[i]
    }

    pub fn piece_values(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        self.pieces.iter().map(|p| p.value(x)).collect()
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self
            .piece_values(x)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Indices of pieces within `margin` of the maximum at `x`.
    ///
    /// With `margin = TOL_ACTIVE` this is the numerical active set; larger
    /// margins give the epsilon-active sets the iterative methods enumerate.
    pub fn active_indices(&self, x: &DVector<f64>, margin: f64) -> Result<Vec<usize>> {
        let vals = self.piece_values(x)?;
        let vmax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(vals
            .iter()
            .enumerate()
            .filter(|(_, v)| **v >= vmax - margin)
            .map(|(i, _)| i)
            .collect())
    }

    /// Directional derivative of the max at `x` along `d`: the maximum of the
    /// active pieces' gradient inner products.
    pub fn directional_derivative(
        &self,
        x: &DVector<f64>,
        d: &DVector<f64>,
        margin: f64,
    ) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for i in self.active_indices(x, margin)? {
            best = best.max(self.pieces[i].gradient(x)?.dot(d));
        }
        Ok(best)
    }
}

/// Sum of pointwise maxima expanded into a single maximum over all index
/// tuples: `sum_i max_k f_{i,k} = max_{(k_1..k_I)} sum_i f_{i,k_i}`.
///
/// Tuples enumerate with the last group's index varying fastest, so the
/// result order is the lexicographic order of the tuples. Errors with
/// `TupleExplosion` when the product of piece counts exceeds `cap`.
pub(crate) fn tuple_sum(
    groups: &[PiecewiseMaxConvex],
    cap: usize,
) -> Result<PiecewiseMaxConvex> {
    if groups.is_empty() {
        return Err(Error::InvalidParams(
            "tuple expansion needs at least one group".into(),
        ));
    }
    let mut count: usize = 1;
    for g in groups {
        count = count.saturating_mul(g.len());
        if count > cap {
            return Err(Error::TupleExplosion { count, cap });
        }
    }
    let mut pieces: Vec<SmoothConvexFunction> = groups[0].pieces().to_vec();
    for g in &groups[1..] {
        let mut next = Vec::with_capacity(pieces.len() * g.len());
        for base in &pieces {
            for extra in g.pieces() {
                next.push(base.add(extra)?);
            }
        }
        pieces = next;
    }
    PiecewiseMaxConvex::new(pieces)
}

/// Smooth convex part plus an optional piecewise-max part.
#[derive(Debug, Clone)]
pub struct ConvexFunction {
    pub smooth: SmoothConvexFunction,
    pub max_part: Option<PiecewiseMaxConvex>,
}

impl ConvexFunction {
    pub fn smooth_only(smooth: SmoothConvexFunction) -> ConvexFunction {
        ConvexFunction {
            smooth,
            max_part: None,
        }
    }

    pub fn new(
        smooth: SmoothConvexFunction,
        max_part: Option<PiecewiseMaxConvex>,
    ) -> Result<ConvexFunction> {
        if let Some(m) = &max_part {
            if m.dim() != smooth.dim() {
                return Err(Error::InvalidParams(format!(
                    "max part dimension {} does not match smooth dimension {}",
                    m.dim(),
                    smooth.dim()
                )));
            }
        }
        Ok(ConvexFunction { smooth, max_part })
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn is_smooth(&self) -> bool {
        self.max_part.is_none()
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let mut v = self.smooth.value(x)?;
        if let Some(m) = &self.max_part {
            v += m.value(x)?;
        }
        Ok(v)
    }

    /// Directional derivative at `x` along `d` (one-sided; exists everywhere).
    pub fn directional_derivative(
        &self,
        x: &DVector<f64>,
        d: &DVector<f64>,
        margin: f64,
    ) -> Result<f64> {
        let mut v = self.smooth.gradient(x)?.dot(d);
        if let Some(m) = &self.max_part {
            v += m.directional_derivative(x, d, margin)?;
        }
        Ok(v)
    }

    /// The max of `self` and a list of smooth functions, flattened to pieces:
    /// `max(s + max_k m_k, extra_1, ...)` has pieces `{s + m_k} ∪ {extra_j}`.
    pub fn max_with(&self, extra: Vec<SmoothConvexFunction>) -> Result<ConvexFunction> {
        let mut pieces: Vec<SmoothConvexFunction> = match &self.max_part {
            Some(m) => m
                .pieces()
                .iter()
                .map(|p| self.smooth.add(p))
                .collect::<Result<_>>()?,
            None => vec![self.smooth.clone()],
        };
        pieces.extend(extra);
        Ok(ConvexFunction {
            smooth: SmoothConvexFunction::zero(self.dim()),
            max_part: Some(PiecewiseMaxConvex::new(pieces)?),
        })
    }

    /// All pieces of the function viewed as a pure max (smooth part folded in).
    pub fn as_pieces(&self) -> Result<Vec<SmoothConvexFunction>> {
        match &self.max_part {
            None => Ok(vec![self.smooth.clone()]),
            Some(m) => m.pieces().iter().map(|p| self.smooth.add(p)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Result<ConvexFunction> {
        let smooth = self.smooth.scale(s)?;
        let max_part = match &self.max_part {
            None => None,
            Some(m) => Some(PiecewiseMaxConvex::new(
                m.pieces()
                    .iter()
                    .map(|p| p.scale(s))
                    .collect::<Result<_>>()?,
            )?),
        };
        Ok(ConvexFunction { smooth, max_part })
    }
}

/// Directional derivative of the dc function `phi - max_i psi_i` at `x` along `d`:
/// `phi'(x; d) - max over active i of grad psi_i(x)' d`.
pub fn directional_derivative(
    phi: &ConvexFunction,
    varphi: &PiecewiseMaxConvex,
    x: &DVector<f64>,
    d: &DVector<f64>,
    margin: f64,
) -> Result<f64> {
    Ok(phi.directional_derivative(x, d, margin)? - varphi.directional_derivative(x, d, margin)?)
}

/// Central-difference gradient, used by tests to cross-check analytic gradients.
pub fn fd_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> f64,
{
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        g[i] = (f(&xp) - f(&xm)) / (2.0 * h);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    /// 1 + x^2 as a quadratic atom on R^1.
    fn one_plus_x_squared() -> SmoothConvexFunction {
        let q = DMatrix::from_element(1, 1, 2.0);
        SmoothConvexFunction::from_atom(
            Atom::quadratic(q, DVector::zeros(1), 1.0).unwrap(),
        )
    }

    /// max(2x, -2x) = 2|x|.
    fn two_abs() -> PiecewiseMaxConvex {
        PiecewiseMaxConvex::new(vec![
            SmoothConvexFunction::from_atom(Atom::affine(vec1(2.0), 0.0)),
            SmoothConvexFunction::from_atom(Atom::affine(vec1(-2.0), 0.0)),
        ])
        .unwrap()
    }

    #[test]
    fn quadratic_rejects_indefinite() {
        let q = DMatrix::from_element(1, 1, -1.0);
        assert!(Atom::quadratic(q, DVector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn quadratic_symmetrizes() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let atom = Atom::quadratic(q, DVector::zeros(2), 0.0).unwrap();
        if let Atom::Quadratic { q, .. } = &atom {
            assert_eq!(q[(0, 1)], 0.5);
            assert_eq!(q[(1, 0)], 0.5);
        } else {
            panic!("expected quadratic");
        }
    }

    #[test]
    fn neglog_domain() {
        let atom = Atom::neglog(vec1(1.0), 0.0);
        assert!(atom.value(&vec1(-1.0)).is_err());
        assert_relative_eq!(atom.value(&vec1(1.0)).unwrap(), 0.0);
        assert_relative_eq!(
            atom.value(&vec1(std::f64::consts::E)).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn even_power_rejects_odd() {
        assert!(Atom::even_power(vec1(1.0), 0.0, 3).is_err());
        assert!(Atom::even_power(vec1(1.0), 0.0, 0).is_err());
        let quartic = Atom::even_power(vec1(1.0), 0.0, 4).unwrap();
        assert_relative_eq!(quartic.value(&vec1(-2.0)).unwrap(), 16.0);
    }

    #[test]
    fn weights_must_be_nonnegative() {
        let atom = Atom::affine(vec1(1.0), 0.0);
        assert!(SmoothConvexFunction::new(1, vec![(-1.0, atom)]).is_err());
    }

    #[test]
    fn active_set_margins() {
        let m = two_abs();
        // At x = 0 both pieces are tied.
        assert_eq!(m.active_indices(&vec1(0.0), TOL_ACTIVE).unwrap(), vec![0, 1]);
        // Slightly off the kink only one piece is active at the tight margin,
        // but a margin larger than the gap picks up both.
        let x = vec1(1e-7);
        assert_eq!(m.active_indices(&x, TOL_ACTIVE).unwrap(), vec![0]);
        assert_eq!(m.active_indices(&x, 1e-3).unwrap(), vec![0, 1]);
    }

    #[test]
    fn dc_directional_derivative_matches_hand_values() {
        // zeta = (1 + x^2) - 2|x| at 0: zeta'(0; +-1) = -2.
        let phi = ConvexFunction::smooth_only(one_plus_x_squared());
        let varphi = two_abs();
        let x = vec1(0.0);
        for d in [1.0, -1.0] {
            let dd = directional_derivative(&phi, &varphi, &x, &vec1(d), TOL_ACTIVE).unwrap();
            assert_relative_eq!(dd, -2.0, epsilon = 1e-12);
        }
        // At x = 1 the function is smooth: zeta'(1; d) = (2x - 2) d = 0.
        let dd = directional_derivative(&phi, &varphi, &vec1(1.0), &vec1(1.0), TOL_ACTIVE).unwrap();
        assert_relative_eq!(dd, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let n = 3;
        let q = {
            let r = DMatrix::from_row_slice(
                n,
                n,
                &[1.0, 0.2, 0.0, 0.2, 2.0, 0.3, 0.0, 0.3, 1.5],
            );
            &r * r.transpose()
        };
        let f = SmoothConvexFunction::new(
            n,
            vec![
                (
                    0.7,
                    Atom::quadratic(q, DVector::from_vec(vec![0.1, -0.2, 0.3]), 0.5).unwrap(),
                ),
                (1.3, Atom::affine(DVector::from_vec(vec![1.0, -1.0, 2.0]), 0.0)),
                (0.5, Atom::neglog(DVector::from_vec(vec![0.5, 0.5, 0.0]), 2.0)),
                (
                    0.9,
                    Atom::even_power(DVector::from_vec(vec![1.0, 0.0, -1.0]), 0.3, 4).unwrap(),
                ),
            ],
        )
        .unwrap();
        let x = DVector::from_vec(vec![0.4, -0.3, 0.2]);
        let g = f.gradient(&x).unwrap();
        let fd = fd_gradient(|y| f.value(y).unwrap(), &x, 1e-6);
        for i in 0..n {
            assert_relative_eq!(g[i], fd[i], max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn max_with_flattens_pieces() {
        // max(x^2 + max(2x, -2x), 7) has three pieces.
        let f = ConvexFunction::new(one_plus_x_squared(), Some(two_abs())).unwrap();
        let merged = f
            .max_with(vec![SmoothConvexFunction::from_atom(Atom::affine(
                vec1(0.0),
                7.0,
            ))])
            .unwrap();
        let m = merged.max_part.as_ref().unwrap();
        assert_eq!(m.len(), 3);
        for x in [-3.0, -0.5, 0.0, 0.5, 3.0] {
            let direct = f.value(&vec1(x)).unwrap().max(7.0);
            assert_relative_eq!(merged.value(&vec1(x)).unwrap(), direct, epsilon = 1e-12);
        }
    }
}

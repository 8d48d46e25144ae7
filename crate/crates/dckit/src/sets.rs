//! Polyhedral feasible sets: bound boxes intersected with halfspaces.
//!
//! Projection uses exact clamping when only bounds are present and Dykstra's
//! alternating projections otherwise (the box is projected last in each sweep,
//! so returned points satisfy the bounds exactly and the rows to tolerance).

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Cap on Dykstra sweeps before a projection reports no convergence.
pub const DYKSTRA_MAX_SWEEPS: usize = 10_000;

/// `{x : lower <= x <= upper, A x <= b}`. Bounds may be infinite.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    lower: DVector<f64>,
    upper: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

/// Indices of constraints active at a point: bound indices and row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveSet {
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    pub rows: Vec<usize>,
}

impl Polyhedron {
    /// Validates shapes, bound ordering, and nonemptiness (via a projection
    /// probe from the box midpoint when rows are present).
    pub fn new(
        lower: DVector<f64>,
        upper: DVector<f64>,
        a: DMatrix<f64>,
        b: DVector<f64>,
    ) -> Result<Polyhedron> {
        let n = lower.len();
        if upper.len() != n {
            return Err(Error::InvalidParams(format!(
                "bound vectors disagree: lower has {n} entries, upper {}",
                upper.len()
            )));
        }
        if a.ncols() != n && a.nrows() > 0 {
            return Err(Error::InvalidParams(format!(
                "row matrix has {} columns for dimension {n}",
                a.ncols()
            )));
        }
        if a.nrows() != b.len() {
            return Err(Error::InvalidParams(format!(
                "{} rows but {} right-hand sides",
                a.nrows(),
                b.len()
            )));
        }
        for i in 0..n {
            if lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i] {
                return Err(Error::Infeasible(format!(
                    "bound ordering violated at coordinate {i}: [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        for r in 0..a.nrows() {
            let row_norm = a.row(r).norm();
            if row_norm == 0.0 && b[r] < 0.0 {
                return Err(Error::Infeasible(format!(
                    "row {r} is 0 <= {} which never holds",
                    b[r]
                )));
            }
        }
        let set = Polyhedron { lower, upper, a, b };
        if set.a.nrows() > 0 {
            let probe = set.project(&set.box_midpoint(), 1e-10).map_err(|e| {
                Error::Infeasible(format!("nonemptiness probe did not converge: {e}"))
            })?;
            if !set.contains(&probe, 1e-7) {
                return Err(Error::Infeasible(format!(
                    "projection probe stopped {:.3e} away from the constraints",
                    set.violation(&probe)
                )));
            }
        }
        Ok(set)
    }

    /// A box with no rows.
    pub fn bounds_only(lower: DVector<f64>, upper: DVector<f64>) -> Result<Polyhedron> {
        let n = lower.len();
        Polyhedron::new(lower, upper, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// A 1-D interval.
    pub fn interval(lo: f64, hi: f64) -> Result<Polyhedron> {
        Polyhedron::bounds_only(DVector::from_vec(vec![lo]), DVector::from_vec(vec![hi]))
    }

    /// All of `R^n`.
    pub fn free(dim: usize) -> Polyhedron {
        Polyhedron {
            lower: DVector::from_element(dim, f64::NEG_INFINITY),
            upper: DVector::from_element(dim, f64::INFINITY),
            a: DMatrix::zeros(0, dim),
            b: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn rows(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    /// A finite point inside the bound box (used to seed probes).
    pub fn box_midpoint(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| {
            match (self.lower[i].is_finite(), self.upper[i].is_finite()) {
                (true, true) => 0.5 * (self.lower[i] + self.upper[i]),
                (true, false) => self.lower[i] + 1.0,
                (false, true) => self.upper[i] - 1.0,
                (false, false) => 0.0,
            }
        })
    }

    /// Worst raw constraint violation at `x` (0 when feasible).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim() {
            worst = worst.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        for r in 0..self.a.nrows() {
            worst = worst.max(self.a.row(r).transpose().dot(x) - self.b[r]);
        }
        worst.max(0.0)
    }

    /// True when every constraint holds within `tol * (1 + scale)`, where the
    /// scale is the magnitude of the constraint's own right-hand side.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        for i in 0..self.dim() {
            if self.lower[i].is_finite() && self.lower[i] - x[i] > tol * (1.0 + self.lower[i].abs())
            {
                return false;
            }
            if self.upper[i].is_finite() && x[i] - self.upper[i] > tol * (1.0 + self.upper[i].abs())
            {
                return false;
            }
        }
        for r in 0..self.a.nrows() {
            if self.a.row(r).transpose().dot(x) - self.b[r] > tol * (1.0 + self.b[r].abs()) {
                return false;
            }
        }
        true
    }

    fn clamp_to_box(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = x[i].max(self.lower[i]).min(self.upper[i]);
        }
    }

    /// Euclidean projection onto the set.
    ///
    /// Exact clamp when there are no rows; otherwise Dykstra sweeps over the
    /// halfspaces then the box until the iterate stabilizes within `tol` and
    /// every row holds within `tol * (1 + |b|)`.
    pub fn project(&self, z: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
        if z.len() != self.dim() {
            return Err(Error::InvalidParams(format!(
                "projecting a point of dimension {} onto a set of dimension {}",
                z.len(),
                self.dim()
            )));
        }
        let mut x = z.clone();
        if self.a.nrows() == 0 {
            self.clamp_to_box(&mut x);
            return Ok(x);
        }

        let m = self.a.nrows();
        let b_scale = 1.0 + self.b.norm();
        // Correction vectors: one per halfspace, one for the box.
        let mut corrections: Vec<DVector<f64>> = vec![DVector::zeros(self.dim()); m + 1];
        let row_norms2: Vec<f64> = (0..m).map(|r| self.a.row(r).norm_squared()).collect();

        for _sweep in 0..DYKSTRA_MAX_SWEEPS {
            let x_prev = x.clone();
            for r in 0..m {
                let y = &x + &corrections[r];
                let mut proj = y.clone();
                if row_norms2[r] > 0.0 {
                    let slack = self.a.row(r).transpose().dot(&proj) - self.b[r];
                    if slack > 0.0 {
                        proj.axpy(-slack / row_norms2[r], &self.a.row(r).transpose(), 1.0);
                    }
                }
                corrections[r] = y - &proj;
                x = proj;
            }
            let y = &x + &corrections[m];
            let mut proj = y.clone();
            self.clamp_to_box(&mut proj);
            corrections[m] = y - &proj;
            x = proj;

            let moved = (&x - &x_prev).norm();
            let feasible = (0..m)
                .all(|r| self.a.row(r).transpose().dot(&x) - self.b[r] <= tol * b_scale);
            if moved <= tol * (1.0 + x.norm()) && feasible {
                return Ok(x);
            }
        }
        Err(Error::NonConvergence(format!(
            "Dykstra projection did not stabilize in {DYKSTRA_MAX_SWEEPS} sweeps \
             (residual {:.3e})",
            self.violation(&x)
        )))
    }

    /// Constraints active at `x` within `tol * (1 + scale)`.
    ///
    /// Fails with `NotFeasible` when `x` is not in the set at that tolerance.
    pub fn active_rows(&self, x: &DVector<f64>, tol: f64) -> Result<ActiveSet> {
        if !self.contains(x, tol) {
            return Err(Error::NotFeasible(format!(
                "active-set query at an infeasible point (violation {:.3e})",
                self.violation(x)
            )));
        }
        let mut active = ActiveSet {
            lower: vec![],
            upper: vec![],
            rows: vec![],
        };
        for i in 0..self.dim() {
            if self.lower[i].is_finite() && (x[i] - self.lower[i]).abs() <= tol * (1.0 + self.lower[i].abs()) {
                active.lower.push(i);
            }
            if self.upper[i].is_finite() && (self.upper[i] - x[i]).abs() <= tol * (1.0 + self.upper[i].abs()) {
                active.upper.push(i);
            }
        }
        for r in 0..self.a.nrows() {
            let slack = self.b[r] - self.a.row(r).transpose().dot(x);
            if slack.abs() <= tol * (1.0 + self.b[r].abs()) {
                active.rows.push(r);
            }
        }
        Ok(active)
    }

    /// Outward normal generators at `x`: `-e_i` for active lower bounds,
    /// `+e_i` for active upper bounds, and the active row vectors.
    pub fn normal_generators(&self, x: &DVector<f64>, tol: f64) -> Result<Vec<DVector<f64>>> {
        let act = self.active_rows(x, tol)?;
        let n = self.dim();
        let mut gens = Vec::new();
        for i in act.lower {
            let mut e = DVector::zeros(n);
            e[i] = -1.0;
            gens.push(e);
        }
        for i in act.upper {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            gens.push(e);
        }
        for r in act.rows {
            gens.push(self.a.row(r).transpose().clone_owned());
        }
        Ok(gens)
    }

    /// Appends one free coordinate (used for epigraph lifts).
    pub(crate) fn with_free_coordinate(&self, lo: f64, hi: f64) -> Polyhedron {
        let n = self.dim();
        let mut lower = DVector::from_element(n + 1, lo);
        let mut upper = DVector::from_element(n + 1, hi);
        lower.rows_mut(0, n).copy_from(&self.lower);
        upper.rows_mut(0, n).copy_from(&self.upper);
        let mut a = DMatrix::zeros(self.a.nrows(), n + 1);
        a.view_mut((0, 0), (self.a.nrows(), n)).copy_from(&self.a);
        Polyhedron {
            lower,
            upper,
            a,
            b: self.b.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn simplexish() -> Polyhedron {
        // x >= 0, x1 + x2 <= 1
        Polyhedron::new(
            DVector::zeros(2),
            DVector::from_element(2, f64::INFINITY),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
        )
        .unwrap()
    }

    #[test]
    fn box_projection_is_exact_clamp() {
        let set = Polyhedron::bounds_only(
            DVector::from_vec(vec![0.0, -1.0]),
            DVector::from_vec(vec![2.0, 1.0]),
        )
        .unwrap();
        let p = set
            .project(&DVector::from_vec(vec![-3.0, 0.5]), 1e-12)
            .unwrap();
        assert_eq!(p, DVector::from_vec(vec![0.0, 0.5]));
    }

    #[test]
    fn dykstra_matches_hand_projection() {
        let set = simplexish();
        let p = set
            .project(&DVector::from_vec(vec![1.0, 1.0]), 1e-12)
            .unwrap();
        assert_relative_eq!(p[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(p[1], 0.5, epsilon = 1e-9);
        // Idempotent on feasible points.
        let q = set.project(&p, 1e-12).unwrap();
        assert_relative_eq!((p - q).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn contains_and_violation() {
        let set = Polyhedron::bounds_only(DVector::zeros(2), DVector::from_element(2, 2.0)).unwrap();
        let x = DVector::from_vec(vec![-0.5, 1.0]);
        assert!(!set.contains(&x, 1e-8));
        assert_relative_eq!(set.violation(&x), 0.5);
    }

    #[test]
    fn empty_set_detected() {
        // x <= -1 and x >= 0 cannot hold together.
        let r = Polyhedron::new(
            DVector::zeros(1),
            DVector::from_element(1, f64::INFINITY),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_vec(vec![-1.0]),
        );
        assert!(matches!(r, Err(Error::Infeasible(_))));
        // Crossed bounds too.
        assert!(Polyhedron::interval(1.0, -1.0).is_err());
    }

    #[test]
    fn active_rows_on_box_edge() {
        let set = Polyhedron::interval(-1.0, 1.0).unwrap();
        let act = set.active_rows(&DVector::from_vec(vec![1.0]), 1e-9).unwrap();
        assert!(act.lower.is_empty());
        assert_eq!(act.upper, vec![0]);
        assert!(set
            .active_rows(&DVector::from_vec(vec![2.0]), 1e-9)
            .is_err());
    }

    #[test]
    fn free_set_projection_is_identity() {
        let set = Polyhedron::free(3);
        let z = DVector::from_vec(vec![5.0, -7.0, 0.0]);
        assert_eq!(set.project(&z, 1e-12).unwrap(), z);
        assert!(set.contains(&z, 0.0));
    }
}

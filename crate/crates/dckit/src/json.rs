//! Wire formats: a JSON problem schema built from the convex atoms (no
//! expression parser), and the JSON run-report emitted by the command-line
//! front end.
//!
//! A problem document looks like
//!
//! ```json
//! {
//!   "dim": 1,
//!   "phi": { "smooth": [ { "weight": 1.0,
//!                          "atom": { "type": "quadratic", "q": [[1.0]], "c": [0.0], "d": 0.0 } } ] },
//!   "groups": [ [ [ { "weight": 1.0, "atom": { "type": "affine", "a": [-1.0], "b": 0.0 } } ],
//!               [] ] ],
//!   "X": { "lower": [-5.0], "upper": [5.0] },
//!   "constraint": null
//! }
//! ```
//!
//! Groups are arrays of pieces; a piece is an array of weighted atoms and an
//! empty array is the zero function. Atom types are `affine`, `quadratic`,
//! `neglog`, and `evenpower`. Bound entries may be `null` for an unbounded
//! coordinate, and the optional `A`/`b` carry extra `A x <= b` rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::certify::Certificate;
use crate::dca::DcProgram;
use crate::dcc::{ConstrainedDcProgram, DcConstraint};
use crate::funcs::{Atom, ConvexFunction, PiecewiseMaxConvex, SmoothConvexFunction};
use crate::sets::Polyhedron;
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum AtomDto {
    Affine { a: Vec<f64>, b: f64 },
    Quadratic { q: Vec<Vec<f64>>, c: Vec<f64>, d: f64 },
    Neglog { a: Vec<f64>, b: f64 },
    Evenpower { a: Vec<f64>, b: f64, p: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermDto {
    weight: f64,
    atom: AtomDto,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConvexDto {
    #[serde(default)]
    smooth: Vec<TermDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max: Option<Vec<Vec<TermDto>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetDto {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    #[serde(rename = "A", default, skip_serializing_if = "Vec::is_empty")]
    a: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintDto {
    phi_c: ConvexDto,
    psi_c: Vec<Vec<TermDto>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDto {
    dim: usize,
    phi: ConvexDto,
    groups: Vec<Vec<Vec<TermDto>>>,
    #[serde(rename = "X")]
    set: SetDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    constraint: Option<ConstraintDto>,
}

fn atom_to_dto(atom: &Atom) -> AtomDto {
    match atom {
        Atom::Affine { a, b } => AtomDto::Affine {
            a: a.iter().cloned().collect(),
            b: *b,
        },
        Atom::Quadratic { q, c, d } => AtomDto::Quadratic {
            q: q.row_iter()
                .map(|row| row.iter().cloned().collect())
                .collect(),
            c: c.iter().cloned().collect(),
            d: *d,
        },
        Atom::NegLogAffine { a, b } => AtomDto::Neglog {
            a: a.iter().cloned().collect(),
            b: *b,
        },
        Atom::EvenPowerAffine { a, b, p } => AtomDto::Evenpower {
            a: a.iter().cloned().collect(),
            b: *b,
            p: *p,
        },
    }
}

fn atom_from_dto(dto: &AtomDto) -> Result<Atom> {
    match dto {
        AtomDto::Affine { a, b } => Ok(Atom::affine(DVector::from_vec(a.clone()), *b)),
        AtomDto::Quadratic { q, c, d } => {
            let n = q.len();
            if q.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidParams(
                    "quadratic atom matrix must be square (ragged rows found)".into(),
                ));
            }
            let flat: Vec<f64> = q.iter().flatten().cloned().collect();
            Atom::quadratic(
                DMatrix::from_row_slice(n, n, &flat),
                DVector::from_vec(c.clone()),
                *d,
            )
        }
        AtomDto::Neglog { a, b } => Ok(Atom::neglog(DVector::from_vec(a.clone()), *b)),
        AtomDto::Evenpower { a, b, p } => Atom::even_power(DVector::from_vec(a.clone()), *b, *p),
    }
}

fn smooth_to_dto(f: &SmoothConvexFunction) -> Vec<TermDto> {
    f.terms()
        .iter()
        .map(|(w, atom)| TermDto {
            weight: *w,
            atom: atom_to_dto(atom),
        })
        .collect()
}

fn smooth_from_dto(dim: usize, terms: &[TermDto]) -> Result<SmoothConvexFunction> {
    let built: Result<Vec<(f64, Atom)>> = terms
        .iter()
        .map(|t| Ok((t.weight, atom_from_dto(&t.atom)?)))
        .collect();
    SmoothConvexFunction::new(dim, built?)
}

fn pieces_to_dto(m: &PiecewiseMaxConvex) -> Vec<Vec<TermDto>> {
    m.pieces().iter().map(smooth_to_dto).collect()
}

fn pieces_from_dto(dim: usize, pieces: &[Vec<TermDto>]) -> Result<PiecewiseMaxConvex> {
    let built: Result<Vec<SmoothConvexFunction>> = pieces
        .iter()
        .map(|p| smooth_from_dto(dim, p))
        .collect();
    PiecewiseMaxConvex::new(built?)
}

fn convex_to_dto(f: &ConvexFunction) -> ConvexDto {
    ConvexDto {
        smooth: smooth_to_dto(&f.smooth),
        max: f.max_part.as_ref().map(pieces_to_dto),
    }
}

fn convex_from_dto(dim: usize, dto: &ConvexDto) -> Result<ConvexFunction> {
    let smooth = smooth_from_dto(dim, &dto.smooth)?;
    let max_part = match &dto.max {
        None => None,
        Some(pieces) => Some(pieces_from_dto(dim, pieces)?),
    };
    ConvexFunction::new(smooth, max_part)
}

fn set_to_dto(set: &Polyhedron) -> SetDto {
    let opt = |v: f64| if v.is_finite() { Some(v) } else { None };
    let (a, b) = set.rows();
    SetDto {
        lower: set.lower().iter().map(|&v| opt(v)).collect(),
        upper: set.upper().iter().map(|&v| opt(v)).collect(),
        a: a.row_iter()
            .map(|row| row.iter().cloned().collect())
            .collect(),
        b: b.iter().cloned().collect(),
    }
}

fn set_from_dto(dim: usize, dto: &SetDto) -> Result<Polyhedron> {
    if dto.lower.len() != dim || dto.upper.len() != dim {
        return Err(Error::InvalidParams(format!(
            "bound arrays must have length {dim}, got {} and {}",
            dto.lower.len(),
            dto.upper.len()
        )));
    }
    let lower = DVector::from_fn(dim, |i, _| dto.lower[i].unwrap_or(f64::NEG_INFINITY));
    let upper = DVector::from_fn(dim, |i, _| dto.upper[i].unwrap_or(f64::INFINITY));
    let rows = dto.a.len();
    if dto.b.len() != rows {
        return Err(Error::InvalidParams(format!(
            "A has {rows} rows but b has {} entries",
            dto.b.len()
        )));
    }
    if dto.a.iter().any(|row| row.len() != dim) {
        return Err(Error::InvalidParams(format!(
            "every A row must have length {dim}"
        )));
    }
    let flat: Vec<f64> = dto.a.iter().flatten().cloned().collect();
    Polyhedron::new(lower, upper, DMatrix::from_row_slice(rows, dim, &flat), DVector::from_vec(dto.b.clone()))
}

/// A problem loaded from JSON: constrained iff the document carried a
/// `constraint` block.
#[derive(Debug, Clone)]
pub enum LoadedProblem {
    Unconstrained(DcProgram),
    Constrained(ConstrainedDcProgram),
}

impl LoadedProblem {
    /// The objective-and-set part, constrained or not.
    pub fn base(&self) -> &DcProgram {
        match self {
            LoadedProblem::Unconstrained(p) => p,
            LoadedProblem::Constrained(p) => &p.base,
        }
    }

    pub fn constrained(&self) -> Option<&ConstrainedDcProgram> {
        match self {
            LoadedProblem::Unconstrained(_) => None,
            LoadedProblem::Constrained(p) => Some(p),
        }
    }
}

/// Serializes a program (with an optional dc constraint) to pretty JSON.
pub fn problem_to_json(program: &DcProgram, constraint: Option<&DcConstraint>) -> Result<String> {
    let dto = ProblemDto {
        dim: program.dim(),
        phi: convex_to_dto(&program.phi),
        groups: program.groups.iter().map(pieces_to_dto).collect(),
        set: set_to_dto(&program.set),
        constraint: constraint.map(|c| ConstraintDto {
            phi_c: convex_to_dto(&c.phi_c),
            psi_c: pieces_to_dto(&c.psi_c),
        }),
    };
    serde_json::to_string_pretty(&dto)
        .map_err(|e| Error::InvalidParams(format!("problem serialization failed: {e}")))
}

/// Parses and validates a problem document; schema violations surface with
/// serde's line/column diagnostics, and every atom is revalidated on entry.
pub fn problem_from_json(text: &str) -> Result<LoadedProblem> {
    let dto: ProblemDto = serde_json::from_str(text)
        .map_err(|e| Error::InvalidParams(format!("problem JSON: {e}")))?;
    let dim = dto.dim;
    let phi = convex_from_dto(dim, &dto.phi)?;
    let groups: Result<Vec<PiecewiseMaxConvex>> = dto
        .groups
        .iter()
        .map(|g| pieces_from_dto(dim, g))
        .collect();
    let set = set_from_dto(dim, &dto.set)?;
    let program = DcProgram::new(phi, groups?, set)?;
    match &dto.constraint {
        None => Ok(LoadedProblem::Unconstrained(program)),
        Some(c) => {
            let phi_c = convex_from_dto(dim, &c.phi_c)?;
            let psi_pieces: Result<Vec<SmoothConvexFunction>> =
                c.psi_c.iter().map(|p| smooth_from_dto(dim, p)).collect();
            let constraint = DcConstraint::new(phi_c, psi_pieces?)?;
            Ok(LoadedProblem::Constrained(ConstrainedDcProgram::new(
                program, constraint,
            )?))
        }
    }
}

// ---------------------------------------------------------------------------
// Run report
// ---------------------------------------------------------------------------

/// One certificate line in a run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub kind: String,
    pub verdict: String,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cq_verified: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl From<&Certificate> for CertificateSummary {
    fn from(c: &Certificate) -> CertificateSummary {
        CertificateSummary {
            kind: c.kind.as_str().to_string(),
            verdict: c.verdict.as_str().to_string(),
            residual: c.residual,
            cq_verified: c.cq_verified,
            notes: c.notes.clone(),
        }
    }
}

/// The JSON document written by the command-line front end after a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub x: Vec<f64>,
    pub zeta: f64,
    pub termination: String,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub certificates: Vec<CertificateSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_residual: Option<f64>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidParams(format!("report serialization failed: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{
        random_dc_program, random_secrecy_params, secrecy_rate_program, toy_gallery,
        GalleryProblem,
    };
    use rand::RngExt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_points(set: &Polyhedron, count: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let raw = DVector::from_fn(set.dim(), |_, _| rng.random_range(-3.0..3.0));
                set.project(&raw, 1e-10).expect("projection")
            })
            .collect()
    }

    #[test]
    fn round_trip_preserves_values_on_the_gallery() {
        for name in crate::models::gallery_names() {
            let entry = toy_gallery(name).unwrap();
            let (program, constraint) = match &entry.problem {
                GalleryProblem::Unconstrained(p) => (p.clone(), None),
                GalleryProblem::Constrained(p) => (p.base.clone(), Some(p.constraint.clone())),
            };
            let text = problem_to_json(&program, constraint.as_ref()).unwrap();
            let loaded = problem_from_json(&text).unwrap();
            for x in sample_points(&program.set, 25, 17) {
                let want = program.zeta(&x).unwrap();
                let got = loaded.base().zeta(&x).unwrap();
                assert!(
                    (want - got).abs() <= 1e-12 * (1.0 + want.abs()),
                    "{name}: zeta drifted through JSON ({want} vs {got})"
                );
                if let (Some(c), Some(lc)) = (&constraint, loaded.constrained()) {
                    let want_c = c.value(&x).unwrap();
                    let got_c = lc.constraint_value(&x).unwrap();
                    assert!((want_c - got_c).abs() <= 1e-12 * (1.0 + want_c.abs()));
                }
            }
        }
    }

    #[test]
    fn random_and_secrecy_instances_round_trip() {
        let random = random_dc_program(5, 4, 2).unwrap();
        let text = problem_to_json(&random, None).unwrap();
        let loaded = problem_from_json(&text).unwrap();
        for x in sample_points(&random.set, 25, 3) {
            let want = random.zeta(&x).unwrap();
            let got = loaded.base().zeta(&x).unwrap();
            assert!((want - got).abs() <= 1e-12 * (1.0 + want.abs()));
        }

        let params = random_secrecy_params(2, 2, 1, 42).unwrap();
        let build = secrecy_rate_program(&params).unwrap();
        let text = problem_to_json(&build.program, None).unwrap();
        let loaded = problem_from_json(&text).unwrap();
        for x in sample_points(&build.program.set, 25, 4) {
            let want = build.program.zeta(&x).unwrap();
            let got = loaded.base().zeta(&x).unwrap();
            assert!((want - got).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn infinite_bounds_round_trip_as_nulls() {
        let set = Polyhedron::new(
            DVector::from_vec(vec![f64::NEG_INFINITY, 0.0]),
            DVector::from_vec(vec![f64::INFINITY, 2.0]),
            DMatrix::zeros(0, 2),
            DVector::zeros(0),
        )
        .unwrap();
        let program = DcProgram::new(
            ConvexFunction::smooth_only(SmoothConvexFunction::from_atom(
                Atom::quadratic(DMatrix::identity(2, 2), DVector::zeros(2), 0.0).unwrap(),
            )),
            vec![PiecewiseMaxConvex::new(vec![SmoothConvexFunction::zero(2)]).unwrap()],
            set,
        )
        .unwrap();
        let text = problem_to_json(&program, None).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["X"]["lower"][0].is_null());
        assert_eq!(value["X"]["upper"][1], 2.0);
        let loaded = problem_from_json(&text).unwrap();
        assert!(loaded.base().set.lower()[0] == f64::NEG_INFINITY);
        assert!(loaded.base().set.upper()[0] == f64::INFINITY);
    }

    #[test]
    fn wire_format_shape_is_stable() {
        let entry = toy_gallery("example3").unwrap();
        let GalleryProblem::Unconstrained(program) = &entry.problem else {
            panic!("example3 is unconstrained")
        };
        let text = problem_to_json(program, None).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["dim"], 1);
        assert_eq!(value["phi"]["smooth"][0]["atom"]["type"], "quadratic");
        assert_eq!(value["groups"][0].as_array().unwrap().len(), 2);
        assert_eq!(value["groups"][0][0][0]["atom"]["type"], "affine");
        assert!(value["X"]["lower"].is_array());
        assert!(value.get("constraint").is_none());
    }

    #[test]
    fn malformed_documents_report_their_position() {
        let err = problem_from_json("{ \"dim\": ").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "wanted a position in: {msg}");

        let bad_atom = r#"{
            "dim": 1,
            "phi": { "smooth": [ { "weight": 1.0, "atom": { "type": "cubic", "a": [1.0], "b": 0.0 } } ] },
            "groups": [ [ [] ] ],
            "X": { "lower": [0.0], "upper": [1.0] }
        }"#;
        let err = problem_from_json(bad_atom).unwrap_err();
        assert!(err.to_string().contains("cubic"), "got: {err}");
    }

    #[test]
    fn reports_serialize_with_certificates() {
        let report = RunReport {
            method: "algorithm1".into(),
            x: vec![-1.0],
            zeta: -0.5,
            termination: "step-below-tol".into(),
            iterations: 7,
            certificates: vec![CertificateSummary {
                kind: "d".into(),
                verdict: "pass".into(),
                residual: 0.0,
                cq_verified: None,
                notes: vec![],
            }],
            classification: None,
            rho_final: None,
            constraint_residual: None,
            consensus_residual: None,
        };
        let text = report.to_json().unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(value["certificates"][0]["verdict"], "pass");
        assert_eq!(value["x"][0], -1.0);
        assert!(value.get("classification").is_none());
    }
}

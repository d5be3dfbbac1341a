//! Pointwise algebra of almost complex structures on a real plane.
//!
//! A point is a real 2×2 J with J² = −I. Tangent tensors at J are the H
//! with HJ = −JH. Operators on tensors are 4×4 matrices acting on the
//! column-major vectorization of a 2×2 matrix.

use crate::error::{Error, Result};
use crate::linalg::C64;
use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type M2 = Matrix2<f64>;
pub type M4 = Matrix4<f64>;

/// Relative tolerance for the anticommutation and commutation preconditions.
pub const STRUCTURE_TOLERANCE: f64 = 1e-12;

fn standard_j() -> M2 {
    M2::new(0.0, -1.0, 1.0, 0.0)
}

fn anticomm(a: &M2, b: &M2) -> M2 {
    a * b + b * a
}

fn comm(a: &M2, b: &M2) -> M2 {
    a * b - b * a
}

fn scale_of(ms: &[&M2]) -> f64 {
    ms.iter().map(|m| m.norm()).fold(1.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ACPoint {
    j: M2,
    g: M2,
}

impl ACPoint {
    pub fn standard() -> Self {
        Self { j: standard_j(), g: M2::identity() }
    }

    /// J = [[a, b], [c, −a]] with b = −(1 + a²)/c, so J² = (a² + bc)I = −I
    /// by construction. c > 0 is the positive orientation.
    pub fn from_params(a: f64, c: f64) -> Result<Self> {
        if !(c > 0.0) || !a.is_finite() || !c.is_finite() {
            return Err(Error::InvalidInput(format!("need finite a and c > 0, got a = {a}, c = {c}")));
        }
        let b = -(1.0 + a * a) / c;
        let j = M2::new(a, b, c, -a);
        // J = A J₀ A⁻¹ with A = [[1, a], [0, c]]·diag-free choice; g = (A Aᵀ)⁻¹
        let amat = M2::new(1.0, a, 0.0, c);
        let g = (amat * amat.transpose()).try_inverse().expect("A is invertible for c > 0");
        Ok(Self { j, g })
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let a = rng.gen_range(-1.0..1.0);
        let c = rng.gen_range(0.5..2.0);
        Self::from_params(a, c).expect("c is positive")
    }

    pub fn j(&self) -> &M2 {
        &self.j
    }

    /// Compatible inner product: Jᵀ g J = g.
    pub fn g(&self) -> &M2 {
        &self.g
    }

    /// ½(X + JXJ), the projection onto the tangent space at J.
    pub fn project(&self, x: &M2) -> M2 {
        (x + self.j * x * self.j) * 0.5
    }

    pub fn random_tangent(&self, rng: &mut impl Rng) -> TangentTensor {
        // unit Frobenius norm; a zero projection has probability zero
        let x = M2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let h = self.project(&x);
        TangentTensor { h: h / h.norm() }
    }

    pub fn tangent(&self, h: M2) -> Result<TangentTensor> {
        let d = anticomm(&h, &self.j).norm();
        if d > STRUCTURE_TOLERANCE * scale_of(&[&h, &self.j]) {
            return Err(Error::Hypothesis(format!("tensor does not anticommute with J (‖HJ + JH‖ = {d:.2e})")));
        }
        Ok(TangentTensor { h })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentTensor {
    h: M2,
}

impl TangentTensor {
    pub fn matrix(&self) -> &M2 {
        &self.h
    }
}

fn vec4(m: &M2) -> Vector4<f64> {
    Vector4::new(m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)])
}

fn unvec(v: &Vector4<f64>) -> M2 {
    M2::new(v[0], v[2], v[1], v[3])
}

/// The 4×4 matrix of a linear map on 2×2 matrices.
fn operator_matrix(f: impl Fn(&M2) -> M2) -> M4 {
    let mut out = M4::zeros();
    for k in 0..4 {
        let mut e = Vector4::zeros();
        e[k] = 1.0;
        out.set_column(k, &vec4(&f(&unvec(&e))));
    }
    out
}

/// Apply an operator-on-tensors to a matrix.
pub fn apply(op: &M4, h: &M2) -> M2 {
    unvec(&(op * vec4(h)))
}

/// θ⁺(N) = ½NJ.
pub fn theta_plus(p: &ACPoint, n: &TangentTensor) -> M2 {
    n.h * p.j * 0.5
}

/// θ⁻(N): H ↦ −½J{N, H}.
pub fn theta_minus(p: &ACPoint, n: &TangentTensor) -> M4 {
    let j = p.j;
    let n = n.h;
    operator_matrix(|x| -(j * anticomm(&n, x)) * 0.5)
}

/// ‖[∇⁺_N, J]‖ = ‖d_N J + [θ⁺(N), J]‖ = ‖N + [θ⁺(N), J]‖. θ⁺(N)
/// anticommutes with J, so the bracket is −N rather than 0.
pub fn theta_plus_compatibility(p: &ACPoint, n: &TangentTensor) -> f64 {
    (n.h + comm(&theta_plus(p, n), &p.j)).norm()
}

/// ‖(−½[M,N] + ¼[MJ,NJ]) − (−¼[M,N])‖.
pub fn lemma10_plus_identity(p: &ACPoint, m: &TangentTensor, n: &TangentTensor) -> f64 {
    let (m, n, j) = (m.h, n.h, p.j);
    let lhs = comm(&m, &n) * -0.5 + comm(&(m * j), &(n * j)) * 0.25;
    let rhs = comm(&m, &n) * -0.25;
    (lhs - rhs).norm()
}

/// −½[M,N]H + ½(−MHN + NHM) − ¼[{M,H},{N,H}].
pub fn lemma10_minus_curvature(m: &TangentTensor, n: &TangentTensor, h: &TangentTensor) -> M2 {
    let (m, n, h) = (m.h, n.h, h.h);
    comm(&m, &n) * h * -0.5 + (-(m * h * n) + n * h * m) * 0.5 - comm(&anticomm(&m, &h), &anticomm(&n, &h)) * 0.25
}

/// Curvature of the projected connection d + θ⁻ assembled as dθ⁻ + θ⁻∧θ⁻
/// on all 2×2 matrices. θ⁻_J(N) is linear in J, so its derivative along M
/// is θ⁻ with J replaced by M.
pub fn minus_curvature_oracle(p: &ACPoint, m: &TangentTensor, n: &TangentTensor) -> M4 {
    let th = |jj: M2, a: M2| operator_matrix(move |x| -(jj * anticomm(&a, x)) * 0.5);
    let d_theta = th(m.h, n.h) - th(n.h, m.h);
    let tm = th(p.j, m.h);
    let tn = th(p.j, n.h);
    d_theta + tm * tn - tn * tm
}

/// Which trace convention the pointwise complexified trace uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceConvention {
    /// ½(tr A − i tr JA), the trace on the +i eigenspace of J
    #[default]
    Calibrated,
    /// tr A + i tr JA
    Literal,
}

pub fn complexified_trace(a: &M2, p: &ACPoint, convention: TraceConvention) -> Result<C64> {
    let d = comm(a, &p.j).norm();
    if d > STRUCTURE_TOLERANCE * scale_of(&[a, &p.j]) {
        return Err(Error::Hypothesis(format!("A does not commute with J (‖[A, J]‖ = {d:.2e})")));
    }
    let ja = p.j * a;
    Ok(match convention {
        TraceConvention::Calibrated => C64::new(0.5 * a.trace(), -0.5 * ja.trace()),
        TraceConvention::Literal => C64::new(a.trace(), ja.trace()),
    })
}

/// Anchor verdict for one convention: A = I → 1 and A = J → i, up to the
/// rounding of tr J² (exact at the standard J).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceAnchors {
    pub convention: TraceConvention,
    pub identity: C64,
    pub j: C64,
    pub satisfied: bool,
}

pub fn trace_anchors(p: &ACPoint, convention: TraceConvention) -> Result<TraceAnchors> {
    let identity = complexified_trace(&M2::identity(), p, convention)?;
    let j = complexified_trace(&p.j, p, convention)?;
    let tol = 8.0 * f64::EPSILON * p.j.norm_squared().max(1.0);
    let satisfied = (identity - C64::new(1.0, 0.0)).norm() <= tol && (j - C64::new(0.0, 1.0)).norm() <= tol;
    Ok(TraceAnchors { convention, identity, j, satisfied })
}

/// Plus and minus parts of the pointwise integrand.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CurvatureIntegrand {
    /// J[M, N]
    pub plus_part: M2,
    /// H ↦ ½J[M,N]H − ½(−MHN + NHM) + ¼J[{M,H},{N,H}]
    pub minus_part: M4,
    /// plus_part in the J-adapted form [[γ, δ], [−δ, γ]]
    pub gamma: f64,
    pub delta: f64,
    /// distance of plus_part from the commutant of J
    pub pattern_defect: f64,
    /// pointwise trace of the plus part, 2γ
    pub plus_trace: f64,
}

pub fn prop11_integrand(p: &ACPoint, m: &TangentTensor, n: &TangentTensor) -> CurvatureIntegrand {
    let (m, n, j) = (m.h, n.h, p.j);
    let plus = j * comm(&m, &n);
    let minus_part = operator_matrix(|h| {
        j * comm(&m, &n) * h * 0.5 - (-(m * h * n) + n * h * m) * 0.5 + j * comm(&anticomm(&m, h), &anticomm(&n, h)) * 0.25
    });
    // commutant of J is span{I, J}: plus = γI + δ'J, and in the standard
    // frame γI + δ'J₀ = [[γ, −δ'], [δ', γ]], so δ = −δ'
    let gamma = 0.5 * plus.trace();
    let dprime = -0.5 * (j * plus).trace();
    let pattern_defect = (plus - (M2::identity() * gamma + j * dprime)).norm();
    CurvatureIntegrand { plus_part: plus, minus_part, gamma, delta: -dprime, pattern_defect, plus_trace: plus.trace() }
}

/// Symbol-level splitting of a covector ξ into (1,0) and (0,1) parts:
/// ξ^{1,0} = ½(ξ − iξ∘J), ξ^{0,1} = ½(ξ + iξ∘J). Returns the largest of
/// the defects ‖ξ^{1,0} + ξ^{0,1} − ξ‖, ‖ξ^{1,0}∘J − iξ^{1,0}‖ and
/// ‖ξ^{0,1}∘J + iξ^{0,1}‖.
pub fn cauchy_riemann_split_defect(p: &ACPoint, xi: [f64; 2]) -> f64 {
    let j = p.j;
    let compose = |v: [C64; 2]| [v[0] * j[(0, 0)] + v[1] * j[(1, 0)], v[0] * j[(0, 1)] + v[1] * j[(1, 1)]];
    let x = [C64::from(xi[0]), C64::from(xi[1])];
    let xj = compose(x);
    let i = C64::new(0.0, 1.0);
    let p10 = [(x[0] - i * xj[0]) * 0.5, (x[1] - i * xj[1]) * 0.5];
    let p01 = [(x[0] + i * xj[0]) * 0.5, (x[1] + i * xj[1]) * 0.5];
    let c10 = compose(p10);
    let c01 = compose(p01);
    let d = |a: [C64; 2], b: [C64; 2]| ((a[0] - b[0]).norm_sqr() + (a[1] - b[1]).norm_sqr()).sqrt();
    let sum = [p10[0] + p01[0], p10[1] + p01[1]];
    d(sum, x).max(d(c10, [i * p10[0], i * p10[1]])).max(d(c01, [-i * p01[0], -i * p01[1]]))
}

/// Largest defects over random trials, each divided by max(1, ‖J‖)²
/// (tangent tensors have unit norm).
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct AcsReport {
    pub trials: usize,
    pub plus_identity: f64,
    pub theta_plus_compatibility: f64,
    pub minus_antisymmetry: f64,
    pub minus_tangency: f64,
    pub minus_oracle: f64,
    pub prop11_pattern: f64,
    pub parity: f64,
    pub calibrated_anchors: bool,
    pub literal_anchors: bool,
    pub cauchy_riemann: f64,
    /// largest |plus-part trace| seen; nonzero in general
    pub max_plus_trace: f64,
}

pub fn acs_identities(trials: usize, seed: u64) -> Result<AcsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = AcsReport { trials, calibrated_anchors: true, literal_anchors: true, ..Default::default() };
    for _ in 0..trials {
        let p = ACPoint::random(&mut rng);
        let scale = p.j.norm().max(1.0).powi(2);
        let up = |slot: &mut f64, v: f64| *slot = slot.max(v / scale);
        let (m, n, h) = (p.random_tangent(&mut rng), p.random_tangent(&mut rng), p.random_tangent(&mut rng));
        up(&mut r.plus_identity, lemma10_plus_identity(&p, &m, &n));
        up(&mut r.theta_plus_compatibility, theta_plus_compatibility(&p, &n));
        let c = lemma10_minus_curvature(&m, &n, &h);
        up(&mut r.minus_antisymmetry, (c + lemma10_minus_curvature(&n, &m, &h)).norm());
        up(&mut r.minus_tangency, anticomm(&c, &p.j).norm());
        up(&mut r.minus_oracle, (apply(&minus_curvature_oracle(&p, &m, &n), &h.h) - c).norm());
        let it = prop11_integrand(&p, &m, &n);
        up(&mut r.prop11_pattern, it.pattern_defect);
        r.max_plus_trace = r.max_plus_trace.max(it.plus_trace.abs());
        let even = m.h * n.h;
        let odd = m.h * n.h * h.h;
        up(&mut r.parity, comm(&even, &p.j).norm().max(anticomm(&odd, &p.j).norm()));
        r.calibrated_anchors &= trace_anchors(&p, TraceConvention::Calibrated)?.satisfied;
        r.literal_anchors &= trace_anchors(&p, TraceConvention::Literal)?.satisfied;
        let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        up(&mut r.cauchy_riemann, cauchy_riemann_split_defect(&ACPoint::standard(), xi));
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructed_points_square_to_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = ACPoint::random(&mut rng);
            assert!((p.j * p.j + M2::identity()).norm() < 1e-14);
            assert!((p.j.determinant() - 1.0).abs() < 1e-14);
            assert!((p.j.transpose() * p.g * p.j - p.g).norm() < 1e-12 * p.g.norm());
        }
    }

    #[test]
    fn hand_expanded_minus_curvature() {
        // J₀, M = σ_z, N = σ_x: the bracket sends σ_z ↦ σ_x and σ_x ↦ −σ_z
        let p = ACPoint::standard();
        let sz = p.tangent(M2::new(1.0, 0.0, 0.0, -1.0)).unwrap();
        let sx = p.tangent(M2::new(0.0, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(lemma10_minus_curvature(&sz, &sx, &sz), sx.h);
        assert_eq!(lemma10_minus_curvature(&sz, &sx, &sx), -sz.h);
        assert_eq!(lemma10_plus_identity(&p, &sz, &sx), 0.0);
    }

    #[test]
    fn rejects_non_tangent() {
        let p = ACPoint::standard();
        assert!(p.tangent(M2::identity()).is_err());
        assert!(complexified_trace(&M2::new(1.0, 0.0, 0.0, -1.0), &p, TraceConvention::Calibrated).is_err());
    }

    #[test]
    fn calibrated_trace_matches_eigenvalue_on_plus_i_space() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = ACPoint::random(&mut rng);
            let (a, b): (f64, f64) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mat = M2::identity() * a + p.j * b;
            // J v = i v for v = (J₀₁, i − J₀₀)
            let v = [C64::from(p.j[(0, 1)]), C64::new(-p.j[(0, 0)], 1.0)];
            let av0 = v[0] * mat[(0, 0)] + v[1] * mat[(0, 1)];
            let eig = av0 / v[0];
            let t = complexified_trace(&mat, &p, TraceConvention::Calibrated).unwrap();
            assert!((t - eig).norm() < 1e-12 * (1.0 + eig.norm()), "{t} vs {eig}");
            assert!((t - C64::new(a, b)).norm() < 1e-12 * (1.0 + a.abs() + b.abs()));
        }
    }

    #[test]
    fn literal_convention_misses_anchors() {
        let p = ACPoint::standard();
        let lit = trace_anchors(&p, TraceConvention::Literal).unwrap();
        assert_eq!(lit.identity, C64::new(2.0, 0.0));
        assert_eq!(lit.j, C64::new(0.0, -2.0));
        assert!(!lit.satisfied);
        let cal = trace_anchors(&p, TraceConvention::Calibrated).unwrap();
        assert!(cal.satisfied);
        assert_eq!((cal.identity, cal.j), (C64::new(1.0, 0.0), C64::new(0.0, 1.0)));
    }

    #[test]
    fn random_trials_within_machine_precision() {
        let r = acs_identities(2000, 7).unwrap();
        for (name, v) in [
            ("plus", r.plus_identity),
            ("compat", r.theta_plus_compatibility),
            ("antisym", r.minus_antisymmetry),
            ("tangent", r.minus_tangency),
            ("oracle", r.minus_oracle),
            ("pattern", r.prop11_pattern),
            ("parity", r.parity),
            ("cr", r.cauchy_riemann),
        ] {
            assert!(v <= 1e-14, "{name}: {v:e}");
        }
        assert!(r.calibrated_anchors && !r.literal_anchors);
        assert!(r.max_plus_trace > 1e-3);
    }

    #[test]
    fn equal_arguments_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ACPoint::random(&mut rng);
        let m = p.random_tangent(&mut rng);
        let h = p.random_tangent(&mut rng);
        assert_eq!(lemma10_minus_curvature(&m, &m, &h), M2::zeros());
        let it = prop11_integrand(&p, &m, &m);
        assert_eq!(it.plus_part, M2::zeros());
        assert_eq!(theta_plus(&p, &TangentTensor { h: M2::zeros() }), M2::zeros());
    }
}

//! Determinant-bundle geometry over a two-parameter base.
//!
//! A family is an odd self-adjoint L(b) = [[0, L⁻], [L⁺, 0]] with
//! L⁻ = (L⁺)^*, together with a connection ∇ = d + θ on ℰ = ℰ⁺ ⊕ ℰ⁻.
//! Everything is evaluated fiberwise on dense matrices: per base point, the
//! blocks Q⁺ = L⁻L⁺ and Q⁻ = L⁺L⁻ are diagonalized once, and every
//! ε-dependent quantity is a finite sum Σ c_k e^{-ελ_k} over that spectrum.

use crate::error::{Error, Result};
use crate::jlo::{Grading, TraceForm};
use crate::linalg::{exp_integral_e1, gauss_legendre, hermitian_eigen, pairwise_sum, CMat, C64, ZERO};
use crate::renorm::{fit_expansion, AsymptoticExpansion, ExponentLattice, FitOptions};
use crate::specops::{OpMatrix, OperatorExpr, SpectralOperator, SuperOperator, Weight};
use crate::traces::{log_renormalized_determinant, TraceOptions, NOISE_RELATIVE};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A point of the base ℝ².
pub type Point = [f64; 2];

/// Smallest admissible singular value of L⁺.
pub const INJECTIVITY_THRESHOLD: f64 = 1e-8;

/// A two-form on ℝ², stored as its value on (∂₁, ∂₂).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormValue {
    pub d12: C64,
}

impl FormValue {
    pub fn new(d12: C64) -> Self {
        Self { d12 }
    }

    /// ω(M, N) = (M₁N₂ − M₂N₁) ω(∂₁, ∂₂); antisymmetric by construction.
    pub fn eval(&self, m: Point, n: Point) -> C64 {
        self.d12 * (m[0] * n[1] - m[1] * n[0])
    }
}

/// A family of odd self-adjoint operators with a connection on ℰ.
pub trait OperatorFamily: Sync {
    /// Rank of each of ℰ⁺ and ℰ⁻.
    fn block_dim(&self) -> usize;

    /// Fourier cutoff N when the blocks are mode truncations (rank 2N + 1).
    fn cutoff(&self) -> Option<usize> {
        None
    }

    fn l_plus(&self, b: Point) -> CMat;

    /// ∂_i L⁺ in closed form, when available.
    fn dl_plus(&self, _b: Point, _i: usize) -> Option<CMat> {
        None
    }

    /// (θ⁺_i, θ⁻_i), the connection one-form evaluated on ∂_i.
    fn theta(&self, b: Point, i: usize) -> (CMat, CMat);

    /// ∂_j θ_i in closed form, when available.
    fn dtheta(&self, _b: Point, _i: usize, _j: usize) -> Option<(CMat, CMat)> {
        None
    }

    fn fd_step(&self) -> f64 {
        1e-3
    }

    /// Order of L; the weight Q = L² has twice this order.
    fn order(&self) -> f64 {
        1.0
    }
}

fn shift(b: Point, i: usize, t: f64) -> Point {
    let mut p = b;
    p[i] += t;
    p
}

/// Central difference at steps h and h/2 combined by Richardson
/// extrapolation; error O(h⁴).
fn richardson<F: Fn(f64) -> CMat>(f: F, h: f64) -> CMat {
    let d1 = (f(h) - f(-h)) * C64::from(1.0 / (2.0 * h));
    let d2 = (f(h / 2.0) - f(-h / 2.0)) * C64::from(1.0 / h);
    d2 * C64::from(4.0 / 3.0) - d1 * C64::from(1.0 / 3.0)
}

/// ∂_i L⁺ at b.
pub fn dl_plus<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize) -> CMat {
    fam.dl_plus(b, i).unwrap_or_else(|| richardson(|t| fam.l_plus(shift(b, i, t)), fam.fd_step()))
}

/// ∂_j θ_i at b.
pub fn dtheta<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize, j: usize) -> (CMat, CMat) {
    fam.dtheta(b, i, j).unwrap_or_else(|| {
        let h = fam.fd_step();
        let p = richardson(|t| fam.theta(shift(b, j, t), i).0, h);
        let m = richardson(|t| fam.theta(shift(b, j, t), i).1, h);
        (p, m)
    })
}

/// [∇_i, L⁺] = ∂_i L⁺ + θ⁻_i L⁺ − L⁺ θ⁺_i : ℰ⁺ → ℰ⁻.
pub fn nabla_l_plus<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize) -> CMat {
    let l = fam.l_plus(b);
    let (tp, tm) = fam.theta(b, i);
    dl_plus(fam, b, i) + &tm * &l - &l * &tp
}

/// [∇_i, L⁻] = (∂_i L⁺)^* + θ⁺_i L⁻ − L⁻ θ⁻_i : ℰ⁻ → ℰ⁺.
pub fn nabla_l_minus<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize) -> CMat {
    let lm = fam.l_plus(b).adjoint();
    let (tp, tm) = fam.theta(b, i);
    dl_plus(fam, b, i).adjoint() + &tp * &lm - &lm * &tm
}

/// Ω^ℰ(∂₁, ∂₂) = ∂₁θ₂ − ∂₂θ₁ + [θ₁, θ₂], blockwise.
pub fn bundle_curvature<F: OperatorFamily + ?Sized>(fam: &F, b: Point) -> (CMat, CMat) {
    let (d12p, d12m) = dtheta(fam, b, 1, 0);
    let (d21p, d21m) = dtheta(fam, b, 0, 1);
    let (t1p, t1m) = fam.theta(b, 0);
    let (t2p, t2m) = fam.theta(b, 1);
    let p = d12p - d21p + &t1p * &t2p - &t2p * &t1p;
    let m = d12m - d21m + &t1m * &t2m - &t2m * &t1m;
    (p, m)
}

/// Σ_k c_k e^{-tλ_k}: the (super)trace of A e^{-tQ} with A frozen in the
/// eigenbasis of Q.
#[derive(Debug, Clone, Default)]
pub struct SpectralSum {
    terms: Vec<(f64, C64)>,
}

impl SpectralSum {
    pub fn new(terms: Vec<(f64, C64)>) -> Self {
        Self { terms }
    }

    pub fn terms(&self) -> &[(f64, C64)] {
        &self.terms
    }

    pub fn at(&self, t: f64) -> C64 {
        let v: Vec<C64> = self.terms.iter().map(|(l, c)| c * (-t * l).exp()).collect();
        pairwise_sum(&v)
    }

    /// Σ c_k, the t → 0 value for finite rank.
    pub fn total(&self) -> C64 {
        let v: Vec<C64> = self.terms.iter().map(|(_, c)| *c).collect();
        pairwise_sum(&v)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<(f64, C64)> {
        grid.iter().map(|&t| (t, self.at(t))).collect()
    }

    /// Fit on the grid with the noise floor set by the roundoff level of
    /// the sum.
    pub fn fit(&self, grid: &[f64], lattice: &ExponentLattice, opts: &FitOptions) -> Result<AsymptoticExpansion> {
        let t0 = grid.iter().copied().fold(f64::INFINITY, f64::min);
        let modulus: f64 = self.terms.iter().map(|(l, c)| c.norm() * (-t0 * l).exp()).sum();
        let opts = opts.clone().with_noise_floor(opts.noise_floor.max(NOISE_RELATIVE * modulus));
        fit_expansion(&self.sample(grid), lattice, &opts)
    }

    fn push_scaled(&mut self, other: &SpectralSum, s: f64) {
        self.terms.extend(other.terms.iter().map(|(l, c)| (*l, c * s)));
    }
}

impl std::ops::Sub for SpectralSum {
    type Output = SpectralSum;
    fn sub(mut self, rhs: SpectralSum) -> SpectralSum {
        self.push_scaled(&rhs, -1.0);
        self
    }
}

impl std::ops::Add for SpectralSum {
    type Output = SpectralSum;
    fn add(mut self, rhs: SpectralSum) -> SpectralSum {
        self.push_scaled(&rhs, 1.0);
        self
    }
}

impl std::ops::Mul<f64> for SpectralSum {
    type Output = SpectralSum;
    fn mul(mut self, s: f64) -> SpectralSum {
        for t in &mut self.terms {
            t.1 *= s;
        }
        self
    }
}

/// diag(U^* M U).
fn diag_in_basis(u: &CMat, m: &CMat) -> Vec<C64> {
    let mu = m * u;
    (0..u.ncols()).map(|k| u.column(k).iter().zip(mu.column(k).iter()).map(|(x, y)| x.conj() * y).sum()).collect()
}

/// Spectral data of the fiber at one base point.
#[derive(Debug, Clone)]
pub struct Fiber {
    pub b: Point,
    pub l_plus: CMat,
    pub eig_plus: Vec<f64>,
    pub basis_plus: CMat,
    pub eig_minus: Vec<f64>,
    pub basis_minus: CMat,
}

impl Fiber {
    pub fn new<F: OperatorFamily + ?Sized>(fam: &F, b: Point) -> Result<Self> {
        let l_plus = fam.l_plus(b);
        let d = fam.block_dim();
        if l_plus.nrows() != d || l_plus.ncols() != d {
            return Err(Error::InvalidInput(format!("L⁺ is {}×{}, expected {d}×{d}", l_plus.nrows(), l_plus.ncols())));
        }
        let qp = l_plus.adjoint() * &l_plus;
        let qm = &l_plus * l_plus.adjoint();
        let (eig_plus, basis_plus) = hermitian_eigen(&qp);
        let (eig_minus, basis_minus) = hermitian_eigen(&qm);
        let smin = eig_plus.iter().copied().fold(f64::INFINITY, f64::min).max(0.0).sqrt();
        if !(smin > INJECTIVITY_THRESHOLD) {
            return Err(Error::Singular(format!("L⁺ has singular value {smin:.3e} at b = {b:?}")));
        }
        Ok(Self { b, l_plus, eig_plus, basis_plus, eig_minus, basis_minus })
    }

    fn plus_sum(&self, m: &CMat) -> SpectralSum {
        SpectralSum::new(self.eig_plus.iter().copied().zip(diag_in_basis(&self.basis_plus, m)).collect())
    }

    /// str(A e^{-εQ}) for an even A = A⁺ ⊕ A⁻.
    fn super_sum(&self, a_plus: &CMat, a_minus: &CMat) -> SpectralSum {
        let mut s = self.plus_sum(a_plus);
        let minus = diag_in_basis(&self.basis_minus, a_minus);
        s.terms.extend(self.eig_minus.iter().zip(minus).map(|(l, c)| (*l, -c)));
        s
    }

    /// Q = Q⁺ ⊕ Q⁻ as a weight on the graded space (Fourier families only).
    pub fn weight(&self, cutoff: usize, order: f64) -> Result<Weight> {
        let qp = self.l_plus.adjoint() * &self.l_plus;
        let qm = &self.l_plus * self.l_plus.adjoint();
        Weight::from_super_blocks(cutoff, &qp, &qm, order)
    }

    /// Q⁺ alone as a plain weight.
    pub fn weight_plus(&self, cutoff: usize, order: f64) -> Result<Weight> {
        Weight::from_hermitian(cutoff, &(self.l_plus.adjoint() * &self.l_plus), order)
    }

    /// log det_ε Q⁺ = −Σ E₁(ελ).
    pub fn log_cutoff_det_plus(&self, eps: f64) -> f64 {
        let v: Vec<C64> = self.eig_plus.iter().map(|l| C64::from(-exp_integral_e1(eps * l))).collect();
        pairwise_sum(&v).re
    }
}

fn inverse(m: &CMat) -> Result<CMat> {
    m.clone().try_inverse().ok_or_else(|| Error::Singular("block is not invertible".into()))
}

/// ε ↦ tr((L⁺)^{-1}[∇_i, L⁺] e^{-εQ⁺}), the connection form on ∂_i.
pub fn connection_sum<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize) -> Result<SpectralSum> {
    // only the ℰ⁺ spectrum enters
    let l_plus = fam.l_plus(b);
    let (eig, basis) = hermitian_eigen(&(l_plus.adjoint() * &l_plus));
    if !(eig.first().copied().unwrap_or(0.0).max(0.0).sqrt() > INJECTIVITY_THRESHOLD) {
        return Err(Error::Singular(format!("L⁺ is not injective at b = {b:?}")));
    }
    let x = nabla_l_plus(fam, b, i);
    let m = l_plus.lu().solve(&x).ok_or_else(|| Error::Singular("L⁺ is not invertible".into()))?;
    Ok(SpectralSum::new(eig.into_iter().zip(diag_in_basis(&basis, &m)).collect()))
}

fn connection_sum_at<F: OperatorFamily + ?Sized>(fam: &F, fiber: &Fiber, i: usize) -> Result<SpectralSum> {
    let x = nabla_l_plus(fam, fiber.b, i);
    let m = fiber.l_plus.clone().lu().solve(&x).ok_or_else(|| Error::Singular("L⁺ is not invertible".into()))?;
    Ok(fiber.plus_sum(&m))
}

/// ε ↦ str(L^{-1}[∇_i, L] e^{-εQ}); L^{-1}[∇, L] is even with blocks
/// (L⁺)^{-1}[∇, L⁺] and (L⁻)^{-1}[∇, L⁻].
fn log_derivative_supertrace<F: OperatorFamily + ?Sized>(fam: &F, fiber: &Fiber, i: usize) -> Result<SpectralSum> {
    let lp_inv = inverse(&fiber.l_plus)?;
    let lm_inv = lp_inv.adjoint();
    let yp = &lp_inv * nabla_l_plus(fam, fiber.b, i);
    let ym = &lm_inv * nabla_l_minus(fam, fiber.b, i);
    Ok(fiber.super_sum(&yp, &ym))
}

/// The two expressions of the connection form of the determinant bundle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConnectionForms {
    /// tr((L⁺)^{-1}[∇, L⁺] e^{-εQ⁺})
    pub direct: C64,
    /// ½(d log det_ε Q⁺ + str(L^{-1}[∇, L] e^{-εQ}))
    pub split: C64,
}

/// Connection form on ∂_i at heat time ε by both routes.
pub fn bf_connection_form<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize, eps: f64) -> Result<ConnectionForms> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("ε must be positive, got {eps}")));
    }
    let fiber = Fiber::new(fam, b)?;
    let direct = connection_sum_at(fam, &fiber, i)?.at(eps);
    let h = fam.fd_step();
    let fibers: Vec<Fiber> = [h, -h, h / 2.0, -h / 2.0].iter().map(|&t| Fiber::new(fam, shift(b, i, t))).collect::<Result<_>>()?;
    let v: Vec<f64> = fibers.iter().map(|f| f.log_cutoff_det_plus(eps)).collect();
    let dlogdet = (4.0 * (v[2] - v[3]) / h - (v[0] - v[1]) / (2.0 * h)) / 3.0;
    let s = log_derivative_supertrace(fam, &fiber, i)?.at(eps);
    Ok(ConnectionForms { direct, split: 0.5 * (dlogdet + s) })
}

/// μ-renormalized connection form on ∂_i by both routes; the split route
/// differentiates log det_μ Q⁺ numerically.
pub fn bf_connection_form_renormalized<F: OperatorFamily + ?Sized>(
    fam: &F,
    b: Point,
    i: usize,
    mu: f64,
    opts: &TraceOptions,
) -> Result<ConnectionForms> {
    let cutoff = fam.cutoff().ok_or_else(|| Error::InvalidInput("renormalized forms need a Fourier family".into()))?;
    let q = 2.0 * fam.order();
    let fiber = Fiber::new(fam, b)?;
    let lattice = lattice_order_zero(q)?;
    let direct = connection_sum_at(fam, &fiber, i)?.fit(&opts.grid, &lattice, &opts.fit)?.renormalized_limit(mu);
    let s = log_derivative_supertrace(fam, &fiber, i)?.fit(&opts.grid, &lattice, &opts.fit)?.renormalized_limit(mu);
    let h = fam.fd_step();
    let logdet = |t: f64| -> Result<f64> {
        let f = Fiber::new(fam, shift(b, i, t))?;
        log_renormalized_determinant(&f.weight_plus(cutoff, q)?, mu, opts)
    };
    let v = [logdet(h)?, logdet(-h)?, logdet(h / 2.0)?, logdet(-h / 2.0)?];
    let dlogdet = (4.0 * (v[2] - v[3]) / h - (v[0] - v[1]) / (2.0 * h)) / 3.0;
    Ok(ConnectionForms { direct, split: 0.5 * (dlogdet + s) })
}

/// Heat lattice for operators of order 0 against a weight of order q.
fn lattice_order_zero(q: f64) -> Result<ExponentLattice> {
    ExponentLattice::for_heat_trace(0.0, 1, q.round() as u32)
}

/// ε ↦ Ω^{Det,ε}(∂₁, ∂₂) = ∂₁A₂ − ∂₂A₁ for the connection form A, by
/// Richardson-extrapolated central differences. `error` is the spread
/// between step h and step h/2, a monitor of finite-difference noise.
#[derive(Debug, Clone)]
pub struct DetCurvature {
    pub value: SpectralSum,
    pub error: SpectralSum,
    pub step: f64,
}

fn curvature_at_step<F: OperatorFamily + ?Sized>(fam: &F, b: Point, h: f64) -> Result<SpectralSum> {
    // Richardson of central differences: ∂_j A_i ≈ Σ w·A_i(b + t e_j)
    let stencil = [(h / 2.0, 4.0 / (3.0 * h)), (-h / 2.0, -4.0 / (3.0 * h)), (h, -1.0 / (6.0 * h)), (-h, 1.0 / (6.0 * h))];
    let jobs: Vec<(usize, usize, f64, f64)> = [(1usize, 0usize, 1.0), (0, 1, -1.0)]
        .iter()
        .flat_map(|&(i, j, sign)| stencil.iter().map(move |&(t, w)| (i, j, t, sign * w)))
        .collect();
    let parts: Vec<SpectralSum> = jobs.par_iter().map(|&(i, j, t, w)| Ok(connection_sum(fam, shift(b, j, t), i)? * w)).collect::<Result<_>>()?;
    let mut it = parts.into_iter();
    let first = it.next().expect("stencil is non-empty");
    Ok(it.fold(first, |acc, p| acc + p))
}

pub fn det_curvature<F: OperatorFamily + ?Sized>(fam: &F, b: Point) -> Result<DetCurvature> {
    let h = fam.fd_step();
    let (coarse, fine) = rayon::join(|| curvature_at_step(fam, b, h), || curvature_at_step(fam, b, h / 2.0));
    let coarse = coarse?;
    let error = coarse.clone() - fine?;
    Ok(DetCurvature { value: coarse, error, step: h })
}

impl DetCurvature {
    /// Value at ε, failing when the finite-difference monitor exceeds tol.
    pub fn at(&self, eps: f64, tol: f64) -> Result<C64> {
        let e = self.error.at(eps).norm();
        if e > tol {
            return Err(Error::Numerical(format!("finite-difference noise {e:.2e} exceeds {tol:.1e} at ε = {eps}")));
        }
        Ok(self.value.at(eps))
    }
}

/// Curvature at ε with one step refinement before giving up.
pub fn det_curvature_at<F: OperatorFamily + ?Sized>(fam: &F, b: Point, eps: f64, tol: f64) -> Result<C64> {
    let c = det_curvature(fam, b)?;
    match c.at(eps, tol) {
        Ok(v) => Ok(v),
        Err(_) => {
            let h = fam.fd_step() / 4.0;
            let coarse = curvature_at_step(fam, b, h)?;
            let fine = curvature_at_step(fam, b, h / 2.0)?;
            DetCurvature { error: coarse.clone() - fine, value: coarse, step: h }.at(eps, tol)
        }
    }
}

/// ε ↦ r₁^{Q,ε}(∂₁, ∂₂) = str(Ω^ℰ(∂₁, ∂₂) e^{-εQ}).
pub fn chern_sum<F: OperatorFamily + ?Sized>(fam: &F, b: Point) -> Result<SpectralSum> {
    let fiber = Fiber::new(fam, b)?;
    let (op, om) = bundle_curvature(fam, b);
    Ok(fiber.super_sum(&op, &om))
}

/// Weighted first Chern form at ε as a two-form.
pub fn chern_form<F: OperatorFamily + ?Sized>(fam: &F, b: Point, eps: f64) -> Result<FormValue> {
    Ok(FormValue::new(chern_sum(fam, b)?.at(eps)))
}

/// R₁^{Q,μ}, the μ-renormalized first Chern form, with its fit.
pub fn chern_form_renormalized<F: OperatorFamily + ?Sized>(fam: &F, b: Point, mu: f64, opts: &TraceOptions) -> Result<(FormValue, AsymptoticExpansion)> {
    let exp = chern_sum(fam, b)?.fit(&opts.grid, &lattice_order_zero(2.0 * fam.order())?, &opts.fit)?;
    Ok((FormValue::new(exp.renormalized_limit(mu)), exp))
}

/// The degree-two trace-form term of the Chern character,
/// ε ↦ ε⟨I, [∇, L], [∇, L]⟩_{ε,2,Q}(∂₁, ∂₂) = −ε(T₁₂ − T₂₁), where
/// T_ij = ⟨I, X_i, X_j⟩ for X_i = [∇_i, L]. The sign comes from moving the
/// odd db₂ past the odd X₁.
pub struct JloTerm {
    t12: TraceForm,
    t21: TraceForm,
    odd: [TraceForm; 2],
    weight: Weight,
}

fn odd_nabla_l<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize, cutoff: usize) -> Result<SpectralOperator> {
    SuperOperator::odd(nabla_l_plus(fam, b, i), nabla_l_minus(fam, b, i)).to_operator(cutoff, fam.order())
}

fn require_cutoff<F: OperatorFamily + ?Sized>(fam: &F) -> Result<usize> {
    fam.cutoff().ok_or_else(|| Error::InvalidInput("this check needs a Fourier family".into()))
}

impl JloTerm {
    pub fn new<F: OperatorFamily + ?Sized>(fam: &F, b: Point) -> Result<Self> {
        let cutoff = require_cutoff(fam)?;
        let fiber = Fiber::new(fam, b)?;
        let weight = fiber.weight(cutoff, 2.0 * fam.order())?;
        let x1 = weight.to_eigenbasis(&odd_nabla_l(fam, b, 0, cutoff)?)?;
        let x2 = weight.to_eigenbasis(&odd_nabla_l(fam, b, 1, cutoff)?)?;
        let id = weight.to_eigenbasis(&SpectralOperator::identity(cutoff, weight.space()))?;
        let ord = 2.0 * fam.order();
        let form = |m: Vec<&OpMatrix>, o: f64| TraceForm::from_eigenbasis(m.into_iter().cloned().collect(), o, &weight, Grading::Super);
        Ok(Self {
            t12: form(vec![&id, &x1, &x2], ord)?,
            t21: form(vec![&id, &x2, &x1], ord)?,
            odd: [form(vec![&id, &x1], ord / 2.0)?, form(vec![&id, &x2], ord / 2.0)?],
            weight,
        })
    }

    pub fn at(&self, eps: f64) -> Result<C64> {
        Ok(-eps * (self.t12.at(eps)? - self.t21.at(eps)?))
    }

    /// Largest degree-one component √ε⟨I, X_i⟩_{ε,1}; the supertrace of an
    /// odd operator, so it vanishes.
    pub fn odd_component(&self, eps: f64) -> Result<f64> {
        let a = self.odd[0].at(eps)?.norm();
        let c = self.odd[1].at(eps)?.norm();
        Ok(eps.sqrt() * a.max(c))
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }
}

/// One row of the cutoff curvature identity Ω^{Det,ε} = −r₁^{Q,ε} + ε⟨I, ∇L, ∇L⟩.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CutoffCurvatureReport {
    pub eps: f64,
    pub lhs: C64,
    pub r1: C64,
    pub jlo: C64,
    pub defect: f64,
    pub relative_defect: f64,
    pub odd_component: f64,
    pub fd_error: f64,
}

pub fn prop4_check<F: OperatorFamily + ?Sized>(fam: &F, b: Point, eps: &[f64]) -> Result<Vec<CutoffCurvatureReport>> {
    if let Some(e) = eps.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidInput(format!("ε must be positive, got {e}")));
    }
    let curv = det_curvature(fam, b)?;
    let r1 = chern_sum(fam, b)?;
    let jlo = JloTerm::new(fam, b)?;
    eps.iter()
        .map(|&e| {
            let lhs = curv.value.at(e);
            let r = r1.at(e);
            let j = jlo.at(e)?;
            let defect = (lhs - (-r + j)).norm();
            let scale = lhs.norm().max(r.norm()).max(j.norm());
            Ok(CutoffCurvatureReport {
                eps: e,
                lhs,
                r1: r,
                jlo: j,
                defect,
                relative_defect: if scale > 0.0 { defect / scale } else { 0.0 },
                odd_component: jlo.odd_component(e)?,
                fd_error: curv.error.at(e).norm(),
            })
        })
        .collect()
}

/// The renormalized identity Ω^{Det,μ} = −R₁^{Q,μ} + 𝓡 with the obstruction
/// 𝓡 computed two ways: as res(C)/(2q) for the composite
/// C = [log Q, Y₁]Y₂ − Y₂[∇₁, log Q] + Y₁[∇₂, log Q], Y_i = L^{-1}[∇_i, L],
/// and as Lim^μ of the trace-form term.
#[derive(Debug, Clone, Serialize)]
pub struct RenormalizedCurvatureReport {
    pub mu: f64,
    pub omega_det: C64,
    pub r1: C64,
    pub obstruction_residue: C64,
    pub obstruction_trace_form: C64,
    /// |Ω^{Det,μ} + R₁^{Q,μ} − 𝓡|
    pub identity_defect: f64,
    /// |𝓡(residue) − 𝓡(trace form)|
    pub cross_defect: f64,
    /// (Ω^{Det,μ} + R₁^{Q,μ}) / 𝓡(residue); 1 when the normalization holds.
    pub ratio: C64,
    /// log ε coefficients of the curvature and Chern fits (μ-dependence)
    pub log_coefficients: [C64; 2],
    pub max_fit_residual: f64,
}

/// ∂_i log Q blockwise in the eigenbasis (Daleckii–Krein): entries
/// (U^*∂Q U)_{kl}·(log λ_k − log λ_l)/(λ_k − λ_l).
fn dlog_in_basis(g: &CMat, lam: &[f64]) -> CMat {
    CMat::from_fn(g.nrows(), g.ncols(), |k, l| {
        let (a, c) = (lam[k], lam[l]);
        let f = if (a - c).abs() > 1e-10 * a.max(c) { (a.ln() - c.ln()) / (a - c) } else { 2.0 / (a + c) };
        g[(k, l)] * f
    })
}

/// Block of the composite C in the eigenbasis of Q^± (diagonal only).
#[allow(clippy::too_many_arguments)]
fn composite_diagonal(u: &CMat, lam: &[f64], y1: &CMat, y2: &CMat, dq: [&CMat; 2], th: [&CMat; 2]) -> Vec<C64> {
    let ua = u.adjoint();
    let tr = |m: &CMat| &ua * m * u;
    let (y1, y2) = (tr(y1), tr(y2));
    let logs: Vec<f64> = lam.iter().map(|l| l.ln()).collect();
    // [∇_i, log Q] = ∂_i log Q + [θ_i, log Q]
    let g: Vec<CMat> = (0..2)
        .map(|i| {
            let t = tr(th[i]);
            let comm = CMat::from_fn(t.nrows(), t.ncols(), |k, l| t[(k, l)] * (logs[l] - logs[k]));
            dlog_in_basis(&tr(dq[i]), lam) + comm
        })
        .collect();
    let d = lam.len();
    (0..d)
        .map(|k| {
            let mut acc = ZERO;
            for l in 0..d {
                acc += (logs[k] - logs[l]) * y1[(k, l)] * y2[(l, k)];
                acc -= y2[(k, l)] * g[0][(l, k)];
                acc += y1[(k, l)] * g[1][(l, k)];
            }
            acc
        })
        .collect()
}

/// ε ↦ str(C e^{-εQ}) for the composite C whose constant term is the obstruction.
pub fn obstruction_composite_sum<F: OperatorFamily + ?Sized>(fam: &F, b: Point) -> Result<SpectralSum> {
    let fiber = Fiber::new(fam, b)?;
    let lp = &fiber.l_plus;
    let lm = lp.adjoint();
    let lp_inv = inverse(lp)?;
    let lm_inv = lp_inv.adjoint();
    let y_plus: Vec<CMat> = (0..2).map(|i| &lp_inv * nabla_l_plus(fam, b, i)).collect();
    let y_minus: Vec<CMat> = (0..2).map(|i| &lm_inv * nabla_l_minus(fam, b, i)).collect();
    let dl: Vec<CMat> = (0..2).map(|i| dl_plus(fam, b, i)).collect();
    let dq_plus: Vec<CMat> = dl.iter().map(|d| d.adjoint() * lp + &lm * d).collect();
    let dq_minus: Vec<CMat> = dl.iter().map(|d| d * &lm + lp * d.adjoint()).collect();
    let th: Vec<(CMat, CMat)> = (0..2).map(|i| fam.theta(b, i)).collect();
    let cp = composite_diagonal(&fiber.basis_plus, &fiber.eig_plus, &y_plus[0], &y_plus[1], [&dq_plus[0], &dq_plus[1]], [&th[0].0, &th[1].0]);
    let cm = composite_diagonal(&fiber.basis_minus, &fiber.eig_minus, &y_minus[0], &y_minus[1], [&dq_minus[0], &dq_minus[1]], [&th[0].1, &th[1].1]);
    let mut terms: Vec<(f64, C64)> = fiber.eig_plus.iter().copied().zip(cp).collect();
    terms.extend(fiber.eig_minus.iter().zip(cm).map(|(l, c)| (*l, -c)));
    Ok(SpectralSum::new(terms))
}

fn check_family_tail(w: &Weight, opts: &TraceOptions) -> Result<()> {
    let eps_min = opts.grid.iter().copied().fold(f64::INFINITY, f64::min);
    let tb = w.tail_bound(eps_min, 0.0);
    if opts.check_tail && !(tb <= opts.tail_tolerance) {
        return Err(Error::TailTooLarge { bound: tb, tolerance: opts.tail_tolerance, cutoff: w.cutoff() });
    }
    Ok(())
}

pub fn theorem3_check<F: OperatorFamily + ?Sized>(fam: &F, b: Point, mu: f64, opts: &TraceOptions) -> Result<RenormalizedCurvatureReport> {
    let q = 2.0 * fam.order();
    let lattice = lattice_order_zero(q)?;
    let fit = |s: &SpectralSum| s.fit(&opts.grid, &lattice, &opts.fit);
    let jlo = JloTerm::new(fam, b)?;
    check_family_tail(jlo.weight(), opts)?;
    let curv = fit(&det_curvature(fam, b)?.value)?;
    let chern = fit(&chern_sum(fam, b)?)?;
    let comp = fit(&obstruction_composite_sum(fam, b)?)?;
    let samples: Vec<(f64, C64)> = opts.grid.par_iter().map(|&e| Ok((e, jlo.at(e)?))).collect::<Result<_>>()?;
    let jfit = fit_expansion(&samples, &lattice, &opts.fit)?;
    let omega = curv.renormalized_limit(mu);
    let r1 = chern.renormalized_limit(mu);
    // res C = −q b₀ and 2𝓡 = res(C)/q
    let res_obs = -comp.log_coefficient(0.0) * q / (2.0 * q);
    let jlo_obs = jfit.renormalized_limit(mu);
    let lhs = omega + r1;
    Ok(RenormalizedCurvatureReport {
        mu,
        omega_det: omega,
        r1,
        obstruction_residue: res_obs,
        obstruction_trace_form: jlo_obs,
        identity_defect: (lhs - res_obs).norm(),
        cross_defect: (res_obs - jlo_obs).norm(),
        ratio: if res_obs.norm() > 0.0 { lhs / res_obs } else { C64::new(f64::NAN, f64::NAN) },
        log_coefficients: [curv.log_coefficient(0.0), chern.log_coefficient(0.0)],
        max_fit_residual: [curv.residual, chern.residual, comp.residual, jfit.residual].into_iter().fold(0.0, f64::max),
    })
}

/// Integrated transgression: ch₂(ε₂) − ch₂(ε₁) = −∫_{ε₁}^{ε₂} dβ_t dt with
/// β_t(∂_i) = ½⟨L, [∇_i, L]⟩_{t,1,Q}, the degree-one part of
/// str(Ȧ_t e^{-A_t²}) for A_t = ∇ + √t L.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TransgressionReport {
    pub lhs: C64,
    pub rhs: C64,
    pub defect: f64,
    /// |d/dt str(e^{-tQ}) + str(Q e^{-tQ})| at t = ε₁
    pub degree0_defect: f64,
}

fn beta<F: OperatorFamily + ?Sized>(fam: &F, b: Point, i: usize, cutoff: usize) -> Result<TraceForm> {
    let fiber = Fiber::new(fam, b)?;
    let w = fiber.weight(cutoff, 2.0 * fam.order())?;
    let l = SuperOperator::odd(fiber.l_plus.clone(), fiber.l_plus.adjoint()).to_operator(cutoff, fam.order())?;
    let x = odd_nabla_l(fam, b, i, cutoff)?;
    TraceForm::new(&[l, x], &w, Grading::Super)
}

pub fn transgression_check<F: OperatorFamily + ?Sized>(fam: &F, b: Point, eps1: f64, eps2: f64) -> Result<TransgressionReport> {
    if !(0.0 < eps1 && eps1 < eps2) {
        return Err(Error::InvalidInput(format!("need 0 < ε₁ < ε₂, got {eps1}, {eps2}")));
    }
    let cutoff = require_cutoff(fam)?;
    let h = fam.fd_step();
    let ch2 = {
        let r1 = chern_sum(fam, b)?;
        let jlo = JloTerm::new(fam, b)?;
        move |t: f64| -> Result<C64> { Ok(-r1.at(t) + jlo.at(t)?) }
    };
    let lhs = ch2(eps2)? - ch2(eps1)?;
    // dβ(∂₁, ∂₂) = ∂₁β₂ − ∂₂β₁, Richardson in b
    let mut forms = Vec::new();
    for (i, j, sign) in [(1usize, 0usize, 1.0), (0, 1, -1.0)] {
        for (t, w) in [(h, -1.0 / (6.0 * h)), (-h, 1.0 / (6.0 * h)), (h / 2.0, 4.0 / (3.0 * h)), (-h / 2.0, -4.0 / (3.0 * h))] {
            forms.push((beta(fam, shift(b, j, t), i, cutoff)?, sign * w * 0.5));
        }
    }
    let (x, wq) = gauss_legendre(24);
    let mut acc = ZERO;
    for (xi, wi) in x.iter().zip(&wq) {
        let t = eps1 + (eps2 - eps1) * 0.5 * (xi + 1.0);
        let mut db = ZERO;
        for (f, w) in &forms {
            db += f.at(t)? * *w;
        }
        acc += db * (wi * 0.5 * (eps2 - eps1));
    }
    let rhs = -acc;
    let fiber = Fiber::new(fam, b)?;
    let plain = fiber.super_sum(&CMat::identity(fam.block_dim(), fam.block_dim()), &CMat::identity(fam.block_dim(), fam.block_dim()));
    let dt = 1e-4 * eps1;
    let deriv = (plain.at(eps1 + dt) - plain.at(eps1 - dt)) / (2.0 * dt);
    let moment: Vec<C64> = plain.terms().iter().map(|(l, c)| c * *l * (-eps1 * l).exp()).collect();
    Ok(TransgressionReport { lhs, rhs, defect: (lhs - rhs).norm(), degree0_defect: (deriv + pairwise_sum(&moment)).norm() })
}

// ---------------------------------------------------------------------------
// Families

/// Which blocks a connection term acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    #[default]
    Plus,
    Minus,
    Both,
}

/// Operator depending affinely on the base point: base + b₁·b1 + b₂·b2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineOperator {
    pub base: OperatorExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<OperatorExpr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<OperatorExpr>,
}

/// One term (c₀ + c₁b₁ + c₂b₂)·op db_direction of θ. Coefficients are
/// complex `[re, im]`; θ should be skew-adjoint for a unitary connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaLiteral {
    pub direction: usize,
    #[serde(default)]
    pub block: Block,
    pub coeff: [[f64; 2]; 3],
    pub op: OperatorExpr,
}

fn default_fd_step() -> f64 {
    1e-3
}

/// Scenario-file description of a family on S¹.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyLiteral {
    pub l_plus: AffineOperator,
    #[serde(default)]
    pub theta: Vec<ThetaLiteral>,
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
}

impl FamilyLiteral {
    /// L⁺(b) = (|ξ| + 1) + b₁ cos x + b₂ sin x with θ = i b₂(1 + sin x) db₁
    /// on ℰ⁺.
    pub fn shipped() -> Self {
        let abs_plus_one = OperatorExpr::Multiplier { coeffs: vec![vec![1.0, 1.0, 1.0], vec![0.0, 1.0]], power: None };
        let phi = OperatorExpr::Multiplication { trig: vec![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0]], modes: vec![] };
        Self {
            l_plus: AffineOperator { base: abs_plus_one, b1: Some(OperatorExpr::cos(1)), b2: Some(OperatorExpr::sin(1)) },
            theta: vec![ThetaLiteral { direction: 0, block: Block::Plus, coeff: [[0.0, 0.0], [0.0, 0.0], [0.0, 1.0]], op: phi }],
            fd_step: 1e-3,
        }
    }

    /// The same family without a connection.
    pub fn flat(&self) -> Self {
        Self { theta: Vec::new(), ..self.clone() }
    }
}

#[derive(Debug, Clone)]
struct ThetaTerm {
    direction: usize,
    block: Block,
    coeff: [C64; 3],
    op: CMat,
}

/// Family of mode-truncated operators built from a literal.
#[derive(Debug, Clone)]
pub struct FourierFamily {
    cutoff: usize,
    l0: CMat,
    l1: CMat,
    l2: CMat,
    theta: Vec<ThetaTerm>,
    fd_step: f64,
    order: f64,
}

impl FourierFamily {
    pub fn new(lit: &FamilyLiteral, cutoff: usize) -> Result<Self> {
        let d = 2 * cutoff + 1;
        let dense = |e: &OperatorExpr| -> Result<CMat> { Ok(e.quantize(cutoff)?.to_dense()) };
        let opt = |e: &Option<OperatorExpr>| -> Result<CMat> { e.as_ref().map(dense).unwrap_or_else(|| Ok(CMat::zeros(d, d))) };
        let order = lit.l_plus.base.order()?;
        if !(order > 0.0) {
            return Err(Error::InvalidInput(format!("l_plus.base must have positive order, got {order}")));
        }
        for (k, e) in [&lit.l_plus.b1, &lit.l_plus.b2].iter().enumerate() {
            if let Some(e) = e {
                if e.order()? >= order {
                    return Err(Error::InvalidInput(format!("l_plus.b{}: perturbation order must be below {order}", k + 1)));
                }
            }
        }
        let mut theta = Vec::new();
        for (k, t) in lit.theta.iter().enumerate() {
            if t.direction > 1 {
                return Err(Error::InvalidInput(format!("theta[{k}].direction must be 0 or 1")));
            }
            theta.push(ThetaTerm {
                direction: t.direction,
                block: t.block,
                coeff: t.coeff.map(|c| C64::new(c[0], c[1])),
                op: dense(&t.op)?,
            });
        }
        if !(lit.fd_step > 0.0) {
            return Err(Error::InvalidInput("fd_step must be positive".into()));
        }
        Ok(Self { cutoff, l0: dense(&lit.l_plus.base)?, l1: opt(&lit.l_plus.b1)?, l2: opt(&lit.l_plus.b2)?, theta, fd_step: lit.fd_step, order })
    }

    /// Smallest cutoff (from a geometric ladder) whose weight tail at ε and
    /// b stays below tol.
    pub fn cutoff_for_tail(lit: &FamilyLiteral, b: Point, eps: f64, tol: f64) -> Result<usize> {
        let mut n = 8usize;
        loop {
            let fam = Self::new(lit, n)?;
            let w = Fiber::new(&fam, b)?.weight(n, 2.0 * fam.order)?;
            if w.tail_bound(eps, 1.0) <= tol {
                return Ok(n);
            }
            if n > 4096 {
                return Err(Error::TailTooLarge { bound: w.tail_bound(eps, 1.0), tolerance: tol, cutoff: n });
            }
            n = n * 5 / 4 + 1;
        }
    }
}

impl OperatorFamily for FourierFamily {
    fn block_dim(&self) -> usize {
        2 * self.cutoff + 1
    }
    fn cutoff(&self) -> Option<usize> {
        Some(self.cutoff)
    }
    fn l_plus(&self, b: Point) -> CMat {
        &self.l0 + &self.l1 * C64::from(b[0]) + &self.l2 * C64::from(b[1])
    }
    fn dl_plus(&self, _b: Point, i: usize) -> Option<CMat> {
        Some(if i == 0 { self.l1.clone() } else { self.l2.clone() })
    }
    fn theta(&self, b: Point, i: usize) -> (CMat, CMat) {
        let d = self.block_dim();
        let (mut p, mut m) = (CMat::zeros(d, d), CMat::zeros(d, d));
        for t in self.theta.iter().filter(|t| t.direction == i) {
            let c = t.coeff[0] + t.coeff[1] * b[0] + t.coeff[2] * b[1];
            if t.block != Block::Minus {
                p += &t.op * c;
            }
            if t.block != Block::Plus {
                m += &t.op * c;
            }
        }
        (p, m)
    }
    fn dtheta(&self, _b: Point, i: usize, j: usize) -> Option<(CMat, CMat)> {
        let d = self.block_dim();
        let (mut p, mut m) = (CMat::zeros(d, d), CMat::zeros(d, d));
        for t in self.theta.iter().filter(|t| t.direction == i) {
            let c = t.coeff[1 + j];
            if t.block != Block::Minus {
                p += &t.op * c;
            }
            if t.block != Block::Plus {
                m += &t.op * c;
            }
        }
        Some((p, m))
    }
    fn fd_step(&self) -> f64 {
        self.fd_step
    }
    fn order(&self) -> f64 {
        self.order
    }
}

/// Polynomial in b with matrix coefficients: Σ b₁^p b₂^q M_pq.
#[derive(Debug, Clone)]
pub struct MatrixPolynomial {
    pub terms: Vec<(u32, u32, CMat)>,
}

impl MatrixPolynomial {
    pub fn eval(&self, b: Point, dim: usize) -> CMat {
        let mut out = CMat::zeros(dim, dim);
        for (p, q, m) in &self.terms {
            out += m * C64::from(b[0].powi(*p as i32) * b[1].powi(*q as i32));
        }
        out
    }

    pub fn derivative(&self, b: Point, i: usize, dim: usize) -> CMat {
        let mut out = CMat::zeros(dim, dim);
        for (p, q, m) in &self.terms {
            let c = if i == 0 {
                if *p == 0 { 0.0 } else { *p as f64 * b[0].powi(*p as i32 - 1) * b[1].powi(*q as i32) }
            } else if *q == 0 {
                0.0
            } else {
                *q as f64 * b[0].powi(*p as i32) * b[1].powi(*q as i32 - 1)
            };
            out += m * C64::from(c);
        }
        out
    }
}

/// Finite-rank superbundle over ℝ² with polynomial L⁺ and θ.
#[derive(Debug, Clone)]
pub struct MatrixFamily {
    pub rank: usize,
    pub l_plus: MatrixPolynomial,
    /// θ^±_i for i = 0, 1: [[θ⁺₀, θ⁻₀], [θ⁺₁, θ⁻₁]]
    pub theta: [[MatrixPolynomial; 2]; 2],
    pub fd_step: f64,
}

const MONOMIALS: [(u32, u32); 10] = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)];

impl MatrixFamily {
    /// Random cubic family with L⁺ kept near 3·I so it stays invertible on
    /// |b| ≤ 1.
    pub fn random(rank: usize, seed: u64, fd_step: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |s: f64| CMat::from_fn(rank, rank, |_, _| C64::new(rng.gen_range(-s..s), rng.gen_range(-s..s)));
        let mut poly = |lead: Option<CMat>, s: f64| {
            let terms = MONOMIALS
                .iter()
                .map(|&(p, q)| {
                    let m = if p + q == 0 { lead.clone().unwrap_or_else(|| mat(s)) + mat(s) } else { mat(s / (1 + p + q) as f64) };
                    (p, q, m)
                })
                .collect();
            MatrixPolynomial { terms }
        };
        let l_plus = poly(Some(CMat::identity(rank, rank) * C64::from(3.0)), 0.3);
        let theta = [[poly(None, 0.5), poly(None, 0.5)], [poly(None, 0.5), poly(None, 0.5)]];
        Self { rank, l_plus, theta, fd_step }
    }
}

impl OperatorFamily for MatrixFamily {
    fn block_dim(&self) -> usize {
        self.rank
    }
    fn l_plus(&self, b: Point) -> CMat {
        self.l_plus.eval(b, self.rank)
    }
    fn dl_plus(&self, b: Point, i: usize) -> Option<CMat> {
        Some(self.l_plus.derivative(b, i, self.rank))
    }
    fn theta(&self, b: Point, i: usize) -> (CMat, CMat) {
        (self.theta[i][0].eval(b, self.rank), self.theta[i][1].eval(b, self.rank))
    }
    fn dtheta(&self, b: Point, i: usize, j: usize) -> Option<(CMat, CMat)> {
        Some((self.theta[i][0].derivative(b, j, self.rank), self.theta[i][1].derivative(b, j, self.rank)))
    }
    fn fd_step(&self) -> f64 {
        self.fd_step
    }
}

/// Finite-rank determinant curvature: the exterior derivative of
/// tr((L⁺)^{-1}[∇, L⁺]) by plain central differences at step h (error
/// O(h²)), against −str Ω^ℰ assembled from dθ + θ∧θ.
pub fn findim_det_curvature<F: OperatorFamily + ?Sized>(fam: &F, b: Point, h: f64) -> Result<(C64, C64)> {
    let a = |i: usize, p: Point| -> Result<C64> { Ok(connection_sum(fam, p, i)?.total()) };
    let d1a2 = (a(1, shift(b, 0, h))? - a(1, shift(b, 0, -h))?) / (2.0 * h);
    let d2a1 = (a(0, shift(b, 1, h))? - a(0, shift(b, 1, -h))?) / (2.0 * h);
    let (op, om) = bundle_curvature(fam, b);
    let str_omega = crate::linalg::trace(&op) - crate::linalg::trace(&om);
    Ok((d1a2 - d2a1, -str_omega))
}

// ---------------------------------------------------------------------------
// Lemma 2: non-cyclicity and non-flatness of weighted traces

/// Two sides of a trace identity, each from its own route.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CheckPair {
    pub lhs: C64,
    pub rhs: C64,
    pub defect: f64,
}

impl CheckPair {
    pub fn new(lhs: C64, rhs: C64) -> Self {
        Self { lhs, rhs, defect: (lhs - rhs).norm() }
    }

    /// Defect relative to max(|lhs|, |rhs|, floor).
    pub fn relative(&self, floor: f64) -> f64 {
        self.defect / self.lhs.norm().max(self.rhs.norm()).max(floor)
    }
}

/// str^{Q,μ}[α, β] against −(1/q) res([log Q, α]β).
pub fn lemma2_commutator_check(alpha: &SpectralOperator, beta: &SpectralOperator, q: &Weight, mu: f64, opts: &TraceOptions) -> Result<CheckPair> {
    let comm = alpha.compose(beta)?.sub(&beta.compose(alpha)?)?;
    let lhs = crate::traces::weighted_trace(&comm, q, mu, opts)?.value;
    let log_q = q.log_weight();
    let inner = log_q.compose(alpha)?.sub(&alpha.compose(&log_q)?)?.with_order(alpha.order() - 1.0).compose(beta)?;
    let res = crate::traces::wodzicki_residue_zeta(&inner, q, opts)?.value;
    Ok(CheckPair::new(lhs, -res / q.order()))
}

/// A b-dependent weight and operator with trivial connection.
pub struct WeightFamily<'a> {
    pub weight: &'a (dyn Fn(Point) -> Result<Weight> + Sync),
    pub alpha: &'a (dyn Fn(Point) -> Result<SpectralOperator> + Sync),
    pub fd_step: f64,
}

/// ∂_i str^{Q(b),μ}(α(b)) against str^{Q,μ}(∂_i α) − (1/q) res(α ∂_i log Q).
pub fn lemma2_derivative_check(fam: &WeightFamily, b: Point, i: usize, mu: f64, opts: &TraceOptions) -> Result<CheckPair> {
    let h = fam.fd_step;
    let trace_at = |t: f64| -> Result<f64> {
        let p = shift(b, i, t);
        Ok(crate::traces::weighted_trace(&(fam.alpha)(p)?, &(fam.weight)(p)?, mu, opts)?.value.re)
    };
    // real and imaginary parts separately so the Richardson helper works on f64
    let trace_at_im = |t: f64| -> Result<f64> {
        let p = shift(b, i, t);
        Ok(crate::traces::weighted_trace(&(fam.alpha)(p)?, &(fam.weight)(p)?, mu, opts)?.value.im)
    };
    let fd = |f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let v = [f(h)?, f(-h)?, f(h / 2.0)?, f(-h / 2.0)?];
        Ok((4.0 * (v[2] - v[3]) / h - (v[0] - v[1]) / (2.0 * h)) / 3.0)
    };
    let lhs = C64::new(fd(&trace_at)?, fd(&trace_at_im)?);
    let q = (fam.weight)(b)?;
    let a = (fam.alpha)(b)?;
    let dense_at = |t: f64| -> Result<(CMat, CMat)> {
        let p = shift(b, i, t);
        Ok(((fam.alpha)(p)?.to_dense(), (fam.weight)(p)?.log_weight().to_dense()))
    };
    let pts = [dense_at(h)?, dense_at(-h)?, dense_at(h / 2.0)?, dense_at(-h / 2.0)?];
    let comb = |k: usize| -> CMat {
        let g = |j: usize| if k == 0 { &pts[j].0 } else { &pts[j].1 };
        (g(2) - g(3)) * C64::from(4.0 / (3.0 * h)) - (g(0) - g(1)) * C64::from(1.0 / (6.0 * h))
    };
    let space = a.space();
    let da = SpectralOperator::dense(q.cutoff(), space, comb(0), a.order(), a.parity())?;
    let dlog = SpectralOperator::dense(q.cutoff(), space, comb(1), 0.0, crate::specops::Parity::Even)?;
    let first = if da.matrix().max_abs() < 1e-14 { ZERO } else { crate::traces::weighted_trace(&da, &q, mu, opts)?.value };
    let res = crate::traces::wodzicki_residue_zeta(&a.compose(&dlog)?, &q, opts)?.value;
    Ok(CheckPair::new(lhs, first - res / q.order()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    #[test]
    fn form_values_are_antisymmetric() {
        let f = FormValue::new(c64(1.5, -0.5));
        let (m, n) = ([0.3, 1.0], [-2.0, 0.7]);
        assert_eq!(f.eval(m, n), -f.eval(n, m));
        assert_eq!(f.eval(m, m), ZERO);
    }

    #[test]
    fn flat_constant_family_has_no_curvature() {
        let lit = FamilyLiteral {
            l_plus: AffineOperator { base: FamilyLiteral::shipped().l_plus.base, b1: None, b2: None },
            theta: vec![],
            fd_step: 1e-3,
        };
        let fam = FourierFamily::new(&lit, 10).unwrap();
        let b = [0.2, 0.1];
        let c = bf_connection_form(&fam, b, 0, 0.3).unwrap();
        assert_eq!(c.direct, ZERO);
        assert!(c.split.norm() < 1e-12);
        let rows = prop4_check(&fam, b, &[0.5]).unwrap();
        assert!(rows[0].lhs.norm() < 1e-12 && rows[0].r1.norm() < 1e-12 && rows[0].jlo.norm() < 1e-12);
    }

    #[test]
    fn finite_rank_curvature_on_random_rank4_families() {
        let fam = MatrixFamily::random(4, 7, 1e-4);
        let (od, ms) = findim_det_curvature(&fam, [0.2, -0.1], 1e-4).unwrap();
        assert!((od - ms).norm() < 1e-6, "{od} vs {ms}");
    }

    #[test]
    fn rank_one_blocks_reproduce_difference_of_curvatures() {
        // rank 1: Ω^Det = ω⁻ − ω⁺ for scalar curvatures ω^±
        let fam = MatrixFamily::random(1, 3, 1e-4);
        let b = [0.1, 0.3];
        let (od, _) = findim_det_curvature(&fam, b, 1e-4).unwrap();
        let (p, m) = bundle_curvature(&fam, b);
        assert!((od - (m[(0, 0)] - p[(0, 0)])).norm() < 1e-6);
    }

    #[test]
    fn shipped_family_connection_forms_agree() {
        let fam = FourierFamily::new(&FamilyLiteral::shipped(), 16).unwrap();
        for i in 0..2 {
            let c = bf_connection_form(&fam, [0.3, -0.2], i, 0.5).unwrap();
            assert!((c.direct - c.split).norm() < 1e-6, "{c:?}");
        }
    }

    #[test]
    fn singular_family_is_rejected() {
        let lit = FamilyLiteral {
            l_plus: AffineOperator { base: OperatorExpr::Multiplier { coeffs: vec![vec![1.0, 1.0]], power: None }, b1: None, b2: None },
            theta: vec![],
            fd_step: 1e-3,
        };
        let fam = FourierFamily::new(&lit, 4).unwrap();
        assert!(matches!(Fiber::new(&fam, [0.0, 0.0]), Err(Error::Singular(_))));
    }
}

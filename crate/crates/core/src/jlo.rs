//! Simplex-integrated heat trace forms ⟨A₀, …, A_k⟩_{ε,k,Q}, their
//! evaluation by divided differences, Volterra sums, and the small-ε
//! expansion by iterated brackets with Q.

use crate::error::{Error, Result};
use crate::linalg::{expm, factorial, gamma, gauss_legendre, is_integer, pairwise_sum, CMat, C64, ONE, ZERO};
use crate::renorm::{fit_expansion, AsymptoticExpansion, ExponentLattice};
use crate::specops::{OpMatrix, OperatorExpr, SpectralOperator, Weight};
use crate::traces::{residue_of_expr, wodzicki_residue_zeta, TraceOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Largest k accepted by the index-tuple enumeration.
pub const MAX_FORM_DEGREE: usize = 3;

/// Below this node spread the divided difference switches to a Taylor
/// series about the mean; above it the recursive quotient loses at most
/// a factor 4 per level.
const TAYLOR_SPREAD: f64 = 0.25;
const TAYLOR_TERMS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Grading {
    #[default]
    Super,
    Plain,
}

/// [y₀, …, y_k] of u ↦ e^{-u} for sorted nodes.
fn dd_sorted(y: &[f64]) -> f64 {
    let k = y.len() - 1;
    if k == 0 {
        return (-y[0]).exp();
    }
    if y[k] - y[0] < TAYLOR_SPREAD {
        return dd_taylor(y);
    }
    (dd_sorted(&y[1..]) - dd_sorted(&y[..k])) / (y[k] - y[0])
}

/// e^{-c} Σ_m (−1)^{k+m} h_m(y − c)/(k+m)!, with h_m the complete
/// homogeneous symmetric polynomials.
fn dd_taylor(y: &[f64]) -> f64 {
    let k = y.len() - 1;
    let c = y.iter().sum::<f64>() / y.len() as f64;
    let mut h = [0.0; TAYLOR_TERMS];
    h[0] = 1.0;
    for &yi in y {
        let z = yi - c;
        for m in 1..TAYLOR_TERMS {
            h[m] += z * h[m - 1];
        }
    }
    let mut s = 0.0;
    let mut inv_fact = 1.0 / factorial(k as u32);
    for (m, hm) in h.iter().enumerate() {
        let sign = if (k + m).is_multiple_of(2) { 1.0 } else { -1.0 };
        s += sign * hm * inv_fact;
        inv_fact /= (k + m + 1) as f64;
    }
    (-c).exp() * s
}

/// k-th divided difference of u ↦ e^{-u} at arbitrary (unsorted) nodes.
pub fn exp_divided_difference(nodes: &[f64]) -> Result<f64> {
    if nodes.is_empty() || nodes.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("divided difference needs finite nodes".into()));
    }
    let mut y = nodes.to_vec();
    y.sort_by(f64::total_cmp);
    Ok(dd_sorted(&y))
}

/// ∫_{Δ^k} exp(−ε Σ σ_i x_i) dσ = e^{−ε min x} (−1)^k [y₀, …, y_k]e^{-u}
/// with y_i = ε(x_i − min x).
pub fn simplex_weight(eps: f64, nodes: &[f64]) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("ε must be positive, got {eps}")));
    }
    if nodes.is_empty() || nodes.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("simplex weight needs finite nodes".into()));
    }
    let mut buf = [0.0; 8];
    let mut y: Vec<f64>;
    let ys: &mut [f64] = if nodes.len() <= 8 {
        buf[..nodes.len()].copy_from_slice(nodes);
        &mut buf[..nodes.len()]
    } else {
        y = nodes.to_vec();
        &mut y
    };
    Ok(simplex_weight_in_place(eps, ys))
}

fn simplex_weight_in_place(eps: f64, ys: &mut [f64]) -> f64 {
    ys.sort_by(f64::total_cmp);
    let m = ys[0];
    for v in ys.iter_mut() {
        *v = eps * (*v - m);
    }
    let k = ys.len() - 1;
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    (-eps * m).exp() * sign * dd_sorted(ys)
}

/// Trace form with operators cached in the eigenbasis of Q.
#[derive(Debug, Clone)]
pub struct TraceForm {
    rows: Vec<Vec<Vec<(usize, C64)>>>,
    last: OpMatrix,
    eigenvalues: Vec<f64>,
    signs: Vec<f64>,
    order: f64,
    dim_m: u32,
    q_order: f64,
}

impl TraceForm {
    pub fn new(ops: &[SpectralOperator], q: &Weight, grading: Grading) -> Result<Self> {
        if ops.is_empty() || ops.len() > MAX_FORM_DEGREE + 1 {
            return Err(Error::InvalidInput(format!(
                "trace forms take 1 to {} operators, got {}",
                MAX_FORM_DEGREE + 1,
                ops.len()
            )));
        }
        let mut mats = Vec::with_capacity(ops.len());
        for op in ops {
            if op.cutoff() != q.cutoff() || op.dim() != q.eigenvalues().len() {
                return Err(Error::CutoffMismatch { left: op.cutoff(), right: q.cutoff() });
            }
            mats.push(q.to_eigenbasis(op)?);
        }
        let order = ops.iter().map(|o| o.order()).sum();
        Self::from_eigenbasis(mats, order, q, grading)
    }

    /// Trace form of operators already expressed in the eigenbasis of Q,
    /// so transformed operators can be shared between forms.
    pub fn from_eigenbasis(mut mats: Vec<OpMatrix>, order: f64, q: &Weight, grading: Grading) -> Result<Self> {
        if mats.is_empty() || mats.len() > MAX_FORM_DEGREE + 1 {
            return Err(Error::InvalidInput(format!("trace forms take 1 to {} operators, got {}", MAX_FORM_DEGREE + 1, mats.len())));
        }
        if let Some(m) = mats.iter().find(|m| m.dim() != q.eigenvalues().len()) {
            return Err(Error::InvalidInput(format!("operator of dimension {} against a weight of dimension {}", m.dim(), q.eigenvalues().len())));
        }
        let last = mats.pop().expect("nonempty");
        let rows = mats.iter().map(|m| m.sparse_rows()).collect();
        let signs = match grading {
            Grading::Super => q.grading().to_vec(),
            Grading::Plain => vec![1.0; q.eigenvalues().len()],
        };
        Ok(Self {
            rows,
            last,
            eigenvalues: q.eigenvalues().to_vec(),
            signs,
            order,
            dim_m: q.dim_m(),
            q_order: q.order(),
        })
    }

    pub fn degree(&self) -> usize {
        self.rows.len()
    }

    /// Σ sign(n₀) (A₀)_{n₀n₁}⋯(A_k)_{n_k n₀} · w(ε; λ_{n₀}, …, λ_{n_k}).
    pub fn at(&self, eps: f64) -> Result<C64> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput(format!("ε must be positive, got {eps}")));
        }
        let d = self.eigenvalues.len();
        let per_row: Vec<C64> = (0..d)
            .into_par_iter()
            .map(|n0| {
                let mut acc = Vec::new();
                let mut nodes = [0.0; MAX_FORM_DEGREE + 1];
                nodes[0] = self.eigenvalues[n0];
                self.walk(n0, n0, 0, ONE, &mut nodes, eps, &mut acc);
                pairwise_sum(&acc) * self.signs[n0]
            })
            .collect();
        Ok(pairwise_sum(&per_row))
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(&self, n0: usize, cur: usize, level: usize, coef: C64, nodes: &mut [f64; MAX_FORM_DEGREE + 1], eps: f64, acc: &mut Vec<C64>) {
        if level == self.rows.len() {
            let v = self.last.get(cur, n0);
            if v == ZERO {
                return;
            }
            let k = level;
            let mut ys = [0.0; MAX_FORM_DEGREE + 1];
            ys[..=k].copy_from_slice(&nodes[..=k]);
            acc.push(coef * v * simplex_weight_in_place(eps, &mut ys[..=k]));
            return;
        }
        for &(next, v) in &self.rows[level][cur] {
            if v == ZERO {
                continue;
            }
            nodes[level + 1] = self.eigenvalues[next];
            self.walk(n0, next, level + 1, coef * v, nodes, eps, acc);
        }
    }

    /// Expansion lattice λ_j = (j − Σ ord A_i − dim M)/q.
    pub fn lattice(&self) -> Result<ExponentLattice> {
        let q = self.q_order;
        if (q - q.round()).abs() > 1e-12 || q < 1.0 {
            return Err(Error::Hypothesis(format!("weight order {q} is not a positive integer")));
        }
        ExponentLattice::for_heat_trace(self.order, self.dim_m, q.round() as u32)
    }

    /// Fit of ε ↦ ⟨…⟩_ε over the grid in `opts`.
    pub fn expansion(&self, opts: &TraceOptions) -> Result<AsymptoticExpansion> {
        let samples: Vec<(f64, C64)> = opts
            .grid
            .iter()
            .map(|&e| self.at(e).map(|v| (e, v)))
            .collect::<Result<_>>()?;
        fit_expansion(&samples, &self.lattice()?, &opts.fit)
    }
}

/// ⟨A₀, …, A_k⟩_{ε,k,Q}.
pub fn trace_form(ops: &[SpectralOperator], q: &Weight, eps: f64, grading: Grading) -> Result<C64> {
    TraceForm::new(ops, q, grading)?.at(eps)
}

/// ⟨A₀, …, A_k⟩_{ε,k,Q} by Gauss–Legendre quadrature of
/// str(e^{−σ₀εQ}A₀ e^{−σ₁εQ}A₁ ⋯ e^{−σ_kεQ}A_k) over the simplex in
/// collapsed coordinates, with dense products. Independent of the divided
/// differences and meant for small cutoffs.
pub fn trace_form_quadrature(ops: &[SpectralOperator], q: &Weight, eps: f64, grading: Grading, nodes: usize) -> Result<C64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("ε must be positive, got {eps}")));
    }
    if ops.is_empty() || ops.len() > MAX_FORM_DEGREE + 1 {
        return Err(Error::InvalidInput(format!("trace forms take 1 to {} operators, got {}", MAX_FORM_DEGREE + 1, ops.len())));
    }
    let mats: Vec<CMat> = ops.iter().map(|o| q.to_eigenbasis(o).map(|m| m.to_dense())).collect::<Result<_>>()?;
    let lam = q.eigenvalues();
    let d = lam.len();
    let signs = match grading {
        Grading::Super => q.grading().to_vec(),
        Grading::Plain => vec![1.0; d],
    };
    let k = ops.len() - 1;
    let (x, w) = gauss_legendre(nodes);
    let u: Vec<(f64, f64)> = x.iter().zip(&w).map(|(xi, wi)| (0.5 * (xi + 1.0), 0.5 * wi)).collect();
    let integrand = |sigma: &[f64]| -> C64 {
        let mut p = CMat::identity(d, d);
        for (s, a) in sigma.iter().zip(&mats) {
            for n in 0..d {
                let f = (-s * eps * lam[n]).exp();
                for m in 0..d {
                    p[(m, n)] *= f;
                }
            }
            p *= a;
        }
        (0..d).map(|n| p[(n, n)] * signs[n]).sum()
    };
    // σ_i = u_i Π_{l<i}(1 − u_l) for i = 1..k, σ₀ = Π(1 − u_l);
    // Jacobian Π_l (1 − u_l)^{k−1−l}
    let mut total = ZERO;
    let mut idx = vec![0usize; k];
    loop {
        let mut sigma = vec![0.0; k + 1];
        let mut rest = 1.0;
        let mut jac = 1.0;
        for (l, &i) in idx.iter().enumerate() {
            let (ul, wl) = u[i];
            sigma[l + 1] = ul * rest;
            jac *= wl * rest;
            rest *= 1.0 - ul;
        }
        sigma[0] = rest;
        total += integrand(&sigma) * jac;
        // odometer over the k quadrature indices
        let mut l = 0;
        while l < k {
            idx[l] += 1;
            if idx[l] < nodes {
                break;
            }
            idx[l] = 0;
            l += 1;
        }
        if l == k {
            break;
        }
    }
    Ok(total)
}

/// Σ_{k ≤ K} (−ε)^k ⟨1, Q₁, …, Q₁⟩_{ε,k,Q₀}.
pub fn volterra_sum(q0: &Weight, q1: &SpectralOperator, eps: f64, k_max: usize, grading: Grading) -> Result<C64> {
    if k_max > MAX_FORM_DEGREE {
        return Err(Error::InvalidInput(format!("Volterra order {k_max} above {MAX_FORM_DEGREE}")));
    }
    let id = SpectralOperator::identity(q0.cutoff(), q0.space());
    let mut s = ZERO;
    for k in 0..=k_max {
        let mut ops = vec![id.clone()];
        ops.extend(std::iter::repeat_n(q1.clone(), k));
        s += trace_form(&ops, q0, eps, grading)? * (-eps).powi(k as i32);
    }
    Ok(s)
}

/// str(expm(−ε(Q₀ + Q₁))) by dense scaling and squaring.
pub fn volterra_oracle(q0: &Weight, q1: &SpectralOperator, eps: f64, grading: Grading) -> Result<C64> {
    let q0m = q0.functional_calculus(C64::from, q0.order()).to_dense();
    let m = expm(&((q0m + q1.to_dense()) * C64::from(-eps)));
    let signs = match grading {
        Grading::Super => q0.space().grading(q0.cutoff()),
        Grading::Plain => vec![1.0; m.nrows()],
    };
    Ok((0..m.nrows()).map(|i| m[(i, i)] * signs[i]).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MomentConvention {
    /// ∫_{Δ^k} Π_i (σ₀ + … + σ_{i−1})^{j_i} dσ, the moment produced by
    /// commuting the heat factors to the right.
    #[default]
    Simplex,
    /// Π_i 1/(j_i + 1), the product of one-dimensional moments.
    Cube,
}

/// ∫_{Δ^k} σ₀^{p₀}⋯σ_k^{p_k} dσ = Π p_i! / (k + Σ p_i)!.
pub fn dirichlet_moment(p: &[u32]) -> f64 {
    let k = p.len().saturating_sub(1) as u32;
    let num: f64 = p.iter().map(|&x| factorial(x)).product();
    num / factorial(k + p.iter().sum::<u32>())
}

/// Moment attached to the multi-index J = (j₁, …, j_k).
pub fn simplex_moment(j: &[u32], convention: MomentConvention) -> f64 {
    match convention {
        MomentConvention::Cube => j.iter().map(|&x| 1.0 / (x as f64 + 1.0)).product(),
        MomentConvention::Simplex => {
            let k = j.len();
            // polynomial in σ₀..σ_k as exponent-vector → coefficient
            let mut poly: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            poly.insert(vec![0; k + 1], 1.0);
            for (i, &ji) in j.iter().enumerate() {
                // multiply by (σ₀ + … + σ_i)^{j_i}, where i here is 0-based
                // so the sum covers σ₀..σ_i = the first i+1 variables
                for _ in 0..ji {
                    let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
                    for (mono, c) in &poly {
                        for v in 0..=i {
                            let mut m = mono.clone();
                            m[v] += 1;
                            *next.entry(m).or_insert(0.0) += c;
                        }
                    }
                    poly = next;
                }
            }
            poly.iter().map(|(m, c)| c * dirichlet_moment(m)).sum()
        }
    }
}

/// All multi-indices J with 0 ≤ j_i ≤ limits[i].
fn multi_indices(limits: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &l in limits {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..=l).map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

/// Right side of the bracket expansion
/// Σ_J (−ε)^{|J|}/J! · M_J · str(A₀[A₁]^{j₁}⋯[A_k]^{j_k} e^{−εQ}).
pub fn prop_b3_expansion(ops: &[SpectralOperator], q: &Weight, eps: f64, limits: &[u32], grading: Grading, convention: MomentConvention) -> Result<C64> {
    if ops.len() != limits.len() + 1 {
        return Err(Error::InvalidInput("need one truncation limit per operator after the first".into()));
    }
    let mats: Vec<CMat> = ops.iter().map(|o| q.to_eigenbasis(o).map(|m| m.to_dense())).collect::<Result<_>>()?;
    let lam = q.eigenvalues();
    let d = lam.len();
    let signs = match grading {
        Grading::Super => q.grading().to_vec(),
        Grading::Plain => vec![1.0; d],
    };
    // [A]^j in the eigenbasis: (λ_m − λ_n)^j A_mn
    let bracket = |a: &CMat, j: u32| CMat::from_fn(d, d, |m, n| a[(m, n)] * (lam[m] - lam[n]).powi(j as i32));
    let mut total = ZERO;
    for jv in multi_indices(limits) {
        let mut p = mats[0].clone();
        for (i, &j) in jv.iter().enumerate() {
            p *= bracket(&mats[i + 1], j);
        }
        let tr: C64 = (0..d).map(|n| p[(n, n)] * (signs[n] * (-eps * lam[n]).exp())).sum();
        let jabs: u32 = jv.iter().sum();
        let jfact: f64 = jv.iter().map(|&x| factorial(x)).product();
        total += tr * ((-eps).powi(jabs as i32) / jfact * simplex_moment(&jv, convention));
    }
    Ok(total)
}

/// [A]_Q^j as an operator literal: [Q, [A]_Q^{j−1}].
pub fn bracket_expr(a: &OperatorExpr, q: &OperatorExpr, j: u32) -> OperatorExpr {
    let mut cur = a.clone();
    for _ in 0..j {
        cur = OperatorExpr::Sum {
            terms: vec![
                OperatorExpr::product(vec![q.clone(), cur.clone()]),
                OperatorExpr::Scaled { factor: [-1.0, 0.0], op: Box::new(OperatorExpr::product(vec![cur, q.clone()])) },
            ],
        };
    }
    cur
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResidueRoute {
    #[default]
    Symbol,
    Zeta,
}

/// Inputs of the coefficient prediction. `cutoff` and `trace` are used by
/// the zeta route only.
#[derive(Debug, Clone)]
pub struct CoefficientRequest<'a> {
    pub ops: &'a [OperatorExpr],
    pub weight: &'a OperatorExpr,
    pub j: u32,
    pub convention: MomentConvention,
    pub route: ResidueRoute,
    pub cutoff: usize,
    pub trace: TraceOptions,
    /// Evaluate the formula at non-integer λ_j ≥ 0 as well. Outside λ_j < 0
    /// the formula is an extrapolation and must be checked against a fit.
    pub allow_nonnegative: bool,
}

/// Predicted coefficient of ε^{λ_j} in ⟨A₀, …, A_k⟩_{ε,k,Q}:
/// Σ_{|J| ≤ j} (−1)^{|J|}/J! · M_J · Γ(−λ′)/q · res(A₀[A₁]^{j₁}⋯ Q^{λ′}),
/// λ′ = λ_j − |J|. Terms whose λ′ is a non-negative integer carry no
/// ε^{λ′} coefficient of this form and are rejected by the hypothesis.
pub fn thm_b4_coefficient(req: &CoefficientRequest) -> Result<C64> {
    let q = req.weight.order()?;
    let a: f64 = req.ops.iter().map(|o| o.order()).sum::<Result<f64>>()?;
    let qi = q.round() as u32;
    let lattice = ExponentLattice::for_heat_trace(a, 1, qi)?;
    let lam = lattice.lambda(req.j);
    if lam >= 0.0 && !(req.allow_nonnegative && !is_integer(lam)) {
        return Err(Error::Hypothesis(format!("λ_{} = {lam} is not negative", req.j)));
    }
    let k = req.ops.len() - 1;
    let limit = req.j;
    let mut total = ZERO;
    for jv in multi_indices(&vec![limit; k]) {
        let jabs: u32 = jv.iter().sum();
        if jabs > limit {
            continue;
        }
        let lp = lam - jabs as f64;
        if lp >= 0.0 && is_integer(lp) {
            return Err(Error::Hypothesis(format!("Γ(−λ′) has a pole at λ′ = {lp}")));
        }
        let mut factors = vec![req.ops[0].clone()];
        for (i, &ji) in jv.iter().enumerate() {
            factors.push(bracket_expr(&req.ops[i + 1], req.weight, ji));
        }
        let composite = OperatorExpr::product(factors);
        let res = match req.route {
            ResidueRoute::Symbol => {
                residue_of_expr(&OperatorExpr::product(vec![composite, req.weight.clone().power_of(lp)?]))?
            }
            ResidueRoute::Zeta => {
                let op = OperatorExpr::product(vec![composite, req.weight.clone().power_of(lp)?]).quantize(req.cutoff)?;
                let w = Weight::from_expr(req.weight, req.cutoff)?;
                wodzicki_residue_zeta(&op, &w, &req.trace)?.value
            }
        };
        let jfact: f64 = jv.iter().map(|&x| factorial(x)).product();
        let sign = if jabs.is_multiple_of(2) { 1.0 } else { -1.0 };
        total += res * gamma(C64::from(-lp)) * (sign / jfact * simplex_moment(&jv, req.convention) / q);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, integrate};
    use crate::specops::Space;

    #[test]
    fn divided_difference_small_cases() {
        assert!((simplex_weight(0.7, &[2.0]).unwrap() - (-1.4f64).exp()).abs() < 1e-16);
        // equal nodes: e^{-εx}/k!
        let w = simplex_weight(0.3, &[5.0; 4]).unwrap();
        assert!((w - (-1.5f64).exp() / 6.0).abs() < 1e-16);
        let (e, x0, x1) = (0.2, 3.0, 7.5);
        let w = simplex_weight(e, &[x0, x1]).unwrap();
        let want = ((-e * x1).exp() - (-e * x0).exp()) / (e * (x0 - x1));
        assert!((w - want).abs() < 1e-15);
        assert!(simplex_weight(0.0, &[1.0]).is_err());
    }

    #[test]
    fn simplex_weight_matches_quadrature_for_two_simplex() {
        // ∫_0^1∫_0^{1-s} exp(-ε(s x0 + t x1 + (1-s-t) x2)) dt ds
        let (e, x) = (0.4, [1.0, 1.0 + 1e-9, 9.0]);
        let outer = integrate(
            |s| integrate(|t| C64::from((-e * (s * x[0] + t * x[1] + (1.0 - s - t) * x[2])).exp()), 0.0, 1.0 - s, 8, 16),
            0.0,
            1.0,
            8,
            16,
        );
        assert!((simplex_weight(e, &x).unwrap() - outer.re).abs() < 1e-13);
    }

    #[test]
    fn dirichlet_and_moments() {
        assert!((dirichlet_moment(&[3, 0]) - 0.25).abs() < 1e-16);
        assert!((simplex_moment(&[0, 0], MomentConvention::Simplex) - 0.5).abs() < 1e-16);
        assert!((simplex_moment(&[0, 0], MomentConvention::Cube) - 1.0).abs() < 1e-16);
        for j in 0..5 {
            assert!((simplex_moment(&[j], MomentConvention::Simplex) - 1.0 / (j as f64 + 1.0)).abs() < 1e-15);
        }
        // ∫_{Δ²} σ₀ (σ₀+σ₁) = ∫σ₀² + ∫σ₀σ₁ = 2/24 + 1/24
        assert!((simplex_moment(&[1, 1], MomentConvention::Simplex) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn identities_give_heat_trace_over_factorial() {
        let q = Weight::from_expr(&OperatorExpr::laplacian_plus_one(), 10).unwrap();
        let id = SpectralOperator::identity(10, Space::Plain);
        let h: f64 = q.eigenvalues().iter().map(|l| (-0.3 * l).exp()).sum();
        for k in 0..=3 {
            let v = trace_form(&vec![id.clone(); k + 1], &q, 0.3, Grading::Plain).unwrap();
            assert!((v.re - h / factorial(k as u32)).abs() < 1e-14 * h);
        }
        assert!(trace_form(&vec![id; 5], &q, 0.3, Grading::Plain).is_err());
    }

    #[test]
    fn quadrature_matches_divided_differences() {
        let q = Weight::from_expr(&OperatorExpr::laplacian_plus_one(), 5).unwrap();
        let c = OperatorExpr::cos(1).quantize(5).unwrap();
        let s = OperatorExpr::sin(2).quantize(5).unwrap();
        let id = SpectralOperator::identity(5, Space::Plain);
        for ops in [vec![c.clone()], vec![id.clone(), c.clone()], vec![c.clone(), s.clone(), c.clone()], vec![id, c.clone(), s, c]] {
            let a = trace_form(&ops, &q, 0.2, Grading::Plain).unwrap();
            let b = trace_form_quadrature(&ops, &q, 0.2, Grading::Plain, 24).unwrap();
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn volterra_with_zero_perturbation() {
        let q = Weight::from_expr(&OperatorExpr::laplacian_plus_one(), 6).unwrap();
        let z = SpectralOperator::zero(6, Space::Plain);
        let h: f64 = q.eigenvalues().iter().map(|l| (-0.1 * l).exp()).sum();
        for k in 0..=3 {
            assert!((volterra_sum(&q, &z, 0.1, k, Grading::Plain).unwrap().re - h).abs() < 1e-14);
        }
        let o = volterra_oracle(&q, &z, 0.1, Grading::Plain).unwrap();
        assert!((o.re - h).abs() < 1e-12);
    }

    #[test]
    fn commuting_operators_need_one_term() {
        let q = Weight::from_expr(&OperatorExpr::laplacian_plus_one(), 8).unwrap();
        let a = OperatorExpr::laplacian_plus_one().power_of(-0.5).unwrap().quantize(8).unwrap();
        let b = OperatorExpr::identity().quantize(8).unwrap();
        let ops = [a.clone(), b, a];
        let tf = trace_form(&ops, &q, 0.05, Grading::Plain).unwrap();
        let b3 = prop_b3_expansion(&ops, &q, 0.05, &[0, 0], Grading::Plain, MomentConvention::Simplex).unwrap();
        assert!((tf - b3).norm() < 1e-13 * tf.norm());
        let _ = c64(0.0, 0.0);
    }
}

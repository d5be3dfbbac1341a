//! Heat, weighted and zeta-regularized (super)traces, Wodzicki residues and
//! regularized determinants.

use crate::error::{Error, Result};
use crate::linalg::{
    digamma, exp_integral_e1, factorial, gamma, gauss_legendre, is_integer, pairwise_sum, rgamma, C64, EULER_GAMMA,
    LATTICE_EPS, ZERO,
};
use crate::renorm::{
    default_grid, fit_expansion, AsymptoticExpansion, ExponentLattice, FitOptions, LogTerms,
};
use crate::specops::{ClassicalSymbol, OperatorExpr, SpectralOperator, Weight};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// μ = 0: plain constant term of the heat expansion.
pub const MU_HEAT: f64 = 0.0;
/// μ = γ: the convention under which heat and zeta renormalizations agree.
pub const MU_ZETA: f64 = EULER_GAMMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuPreset {
    Heat,
    Zeta,
}

impl MuPreset {
    pub fn value(self) -> f64 {
        match self {
            MuPreset::Heat => MU_HEAT,
            MuPreset::Zeta => MU_ZETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Heat,
    Zeta,
    Symbol,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceReport {
    pub value: C64,
    pub route: Route,
    pub tail_bound: f64,
    pub expansion: Option<AsymptoticExpansion>,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptions {
    pub tail_tolerance: f64,
    /// Enforce the tail tolerance (otherwise it is only reported).
    pub check_tail: bool,
    pub grid: Vec<f64>,
    pub fit: FitOptions,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { tail_tolerance: 1e-12, check_tail: true, grid: default_grid(), fit: FitOptions::default() }
    }
}

impl TraceOptions {
    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }
    pub fn with_fit(mut self, fit: FitOptions) -> Self {
        self.fit = fit;
        self
    }
    pub fn unchecked(mut self) -> Self {
        self.check_tail = false;
        self
    }
    fn eps_min(&self) -> f64 {
        self.grid.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Relative roundoff level of a sum of exponentials, as a fraction of
/// Σ|c_k|e^{-tλ_k}.
pub const NOISE_RELATIVE: f64 = 1e-13;

/// t ↦ str(A e^{-tQ}) in the eigenbasis of Q. The diagonal of A in that
/// basis does not depend on t, so it is computed once.
#[derive(Debug, Clone)]
pub struct HeatSeries {
    terms: Vec<(f64, C64)>,
    order_a: f64,
    weight: Weight,
    smoothing: bool,
}

impl HeatSeries {
    /// Graded by the weight's grading (the plain trace on ungraded spaces).
    pub fn new(a: &SpectralOperator, q: &Weight) -> Result<Self> {
        Self::with_grading(a, q, true)
    }

    pub fn with_grading(a: &SpectralOperator, q: &Weight, graded: bool) -> Result<Self> {
        let diag = q.eigen_diagonal(a)?;
        let terms = q
            .eigenvalues()
            .iter()
            .zip(&diag)
            .zip(q.grading())
            .map(|((l, d), g)| (*l, if graded { d * *g } else { *d }))
            .collect();
        Ok(Self { terms, order_a: a.order(), weight: q.clone(), smoothing: !a.order().is_finite() })
    }

    /// Heat series of the identity.
    pub fn identity(q: &Weight, graded: bool) -> Self {
        let terms = q
            .eigenvalues()
            .iter()
            .zip(q.grading())
            .map(|(l, g)| (*l, C64::from(if graded { *g } else { 1.0 })))
            .collect();
        Self { terms, order_a: 0.0, weight: q.clone(), smoothing: false }
    }

    pub fn at(&self, t: f64) -> C64 {
        let v: Vec<C64> = self.terms.iter().map(|(l, d)| d * (-t * l).exp()).collect();
        pairwise_sum(&v)
    }

    /// Σ λ^k d e^{-tλ}; (-d/dt)^k of the series.
    pub fn moment(&self, t: f64, k: i32) -> C64 {
        let v: Vec<C64> = self.terms.iter().map(|(l, d)| d * l.powi(k) * (-t * l).exp()).collect();
        pairwise_sum(&v)
    }

    pub fn terms(&self) -> &[(f64, C64)] {
        &self.terms
    }

    pub fn order_a(&self) -> f64 {
        self.order_a
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    /// Truncation bound at t: the weight's Gaussian tail with growth ord A,
    /// scaled by the size of the diagonal near the cutoff.
    pub fn tail_bound(&self, t: f64) -> f64 {
        let growth = if self.smoothing { 0.0 } else { self.order_a.max(0.0) };
        let n = self.terms.len();
        let edge = (n / 10).max(1);
        let half = self.weight.cutoff() as f64 + 1.0;
        let c = self
            .terms
            .iter()
            .take(edge)
            .chain(self.terms.iter().skip(n - edge))
            .map(|(_, d)| d.norm())
            .fold(0.0, f64::max)
            / half.powf(growth).max(1.0);
        c * self.weight.tail_bound(t, growth)
    }

    /// Heat-expansion lattice: α = ord A, n = dim M = 1, m = ord Q.
    pub fn lattice(&self) -> Result<ExponentLattice> {
        let q = self.weight.order();
        if !is_integer(q) || q < 1.0 - LATTICE_EPS {
            return Err(Error::Hypothesis(format!("weight order {q} is not a positive integer")));
        }
        ExponentLattice::for_heat_trace(self.order_a.max(-1e6), self.weight.dim_m(), q.round() as u32)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<(f64, C64)> {
        grid.par_iter().map(|&e| (e, self.at(e))).collect()
    }

    /// Fit of the heat series on its lattice over the grid.
    pub fn expansion(&self, opts: &TraceOptions) -> Result<AsymptoticExpansion> {
        let tail = self.check_tail(opts)?;
        let mut fit = opts.fit.clone();
        // samples below truncation plus roundoff carry no information
        let t0 = opts.eps_min();
        let modulus: f64 = self.terms.iter().map(|(l, d)| d.norm() * (-t0 * l).exp()).sum();
        fit.noise_floor = fit.noise_floor.max(tail + NOISE_RELATIVE * modulus);
        let lattice = if self.smoothing {
            // smoothing operators: ε ↦ str(A e^{-εQ}) is analytic at 0
            fit.logs = LogTerms::None;
            ExponentLattice::new(1, 0, 0.0)?
        } else {
            self.lattice()?
        };
        fit_expansion(&self.sample(&opts.grid), &lattice, &fit)
    }

    fn check_tail(&self, opts: &TraceOptions) -> Result<f64> {
        let tb = self.tail_bound(opts.eps_min());
        if opts.check_tail && !(tb <= opts.tail_tolerance) {
            return Err(Error::TailTooLarge { bound: tb, tolerance: opts.tail_tolerance, cutoff: self.weight.cutoff() });
        }
        Ok(tb)
    }
}

/// str(A e^{-εQ}) with its truncation bound.
pub fn heat_trace(a: &SpectralOperator, q: &Weight, eps: f64) -> Result<TraceReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("heat time must be positive, got {eps}")));
    }
    let s = HeatSeries::new(a, q)?;
    Ok(TraceReport { value: s.at(eps), route: Route::Heat, tail_bound: s.tail_bound(eps), expansion: None, mu: 0.0 })
}

/// Heat-route μ-renormalized (super)trace tr^{Q,μ}(A).
pub fn weighted_trace(a: &SpectralOperator, q: &Weight, mu: f64, opts: &TraceOptions) -> Result<TraceReport> {
    weighted_trace_of_series(&HeatSeries::new(a, q)?, mu, opts)
}

pub fn weighted_trace_of_series(s: &HeatSeries, mu: f64, opts: &TraceOptions) -> Result<TraceReport> {
    let tail = s.check_tail(opts)?;
    let exp = s.expansion(opts)?;
    Ok(TraceReport { value: exp.renormalized_limit(mu), route: Route::Heat, tail_bound: tail, expansion: Some(exp), mu })
}

/// Wodzicki residue of a symbol: (1/2π)∫(a_{-1}(x,+1) + a_{-1}(x,-1))dx.
pub fn wodzicki_residue_symbol(sym: &ClassicalSymbol) -> Result<C64> {
    sym.residue()
}

/// Symbol-route residue of an operator literal.
pub fn residue_of_expr(expr: &OperatorExpr) -> Result<C64> {
    let order = expr.order()?;
    let depth = (order + 1.0).ceil().max(0.0) as u32 + 2;
    expr.symbol(depth)?.residue()
}

/// Residue through the heat expansion: res A = −q·b₀, with b₀ the ε⁰ log ε
/// coefficient of str(A e^{-εQ}). This is q times the z = 0 residue of
/// str(A Q^{-z}).
pub fn wodzicki_residue_zeta(a: &SpectralOperator, q: &Weight, opts: &TraceOptions) -> Result<TraceReport> {
    let s = HeatSeries::new(a, q)?;
    let tail = s.check_tail(opts)?;
    let exp = s.expansion(opts)?;
    let value = -exp.log_coefficient(0.0) * q.order();
    Ok(TraceReport { value, route: Route::Zeta, tail_bound: tail, expansion: Some(exp), mu: 0.0 })
}

/// Value of a meromorphic trace function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ZetaValue {
    Finite { value: C64 },
    Pole { residue: C64, finite_part: C64 },
}

impl ZetaValue {
    pub fn finite(&self) -> Result<C64> {
        match self {
            ZetaValue::Finite { value } => Ok(*value),
            ZetaValue::Pole { residue, .. } => Err(Error::Pole { residue_re: residue.re, residue_im: residue.im }),
        }
    }
    pub fn finite_part(&self) -> C64 {
        match self {
            ZetaValue::Finite { value } => *value,
            ZetaValue::Pole { finite_part, .. } => *finite_part,
        }
    }
    pub fn residue(&self) -> C64 {
        match self {
            ZetaValue::Finite { .. } => ZERO,
            ZetaValue::Pole { residue, .. } => *residue,
        }
    }
}

/// Laurent data at a point: c₋₂, c₋₁ (residue), c₀, c₁.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Laurent {
    pub c_m2: C64,
    pub residue: C64,
    pub finite_part: C64,
    pub derivative: C64,
}

/// z ↦ str(A Q^{-z}) continued by the split Mellin integral
/// Γ(z)ζ(z) = ∫₀^{t_f} t^{z-1}h + ∫_{t_f}^∞ t^{z-1}h,
/// where the first piece integrates the fitted small-t model in closed form
/// and the second uses quadrature of the exact heat series. t_f is the top
/// of the fit range so the model is never used outside it.
#[derive(Debug, Clone)]
pub struct ZetaFunction {
    expansion: AsymptoticExpansion,
    split: f64,
    nodes: Vec<(f64, C64)>, // (t, w·h(t)) for the substitution t = t_f e^u
    direct: HeatSeries,
    tail_bound: f64,
}

impl ZetaFunction {
    pub fn new(a: &SpectralOperator, q: &Weight, opts: &TraceOptions) -> Result<Self> {
        Self::from_series(HeatSeries::new(a, q)?, opts)
    }

    pub fn from_series(s: HeatSeries, opts: &TraceOptions) -> Result<Self> {
        let tail_bound = s.check_tail(opts)?;
        let expansion = s.expansion(opts)?;
        let split = opts.grid.iter().copied().fold(0.0, f64::max);
        let lmin = s.terms().iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let dsum: f64 = s.terms().iter().map(|t| t.1.norm()).sum();
        // integrate in u = ln(t/t_f) until e^{-tλ_min} kills everything,
        // allowing for polynomial growth t^{Re z} up to Re z = 8
        let mut tmax = split.max(1.0 / lmin);
        while dsum * tmax.powi(8) * (-tmax * lmin).exp() > 1e-20 {
            tmax *= 1.5;
        }
        let umax = (tmax / split).ln();
        let panels = (umax * 3.0).ceil().max(4.0) as usize;
        let (x, w) = gauss_legendre(24);
        let hw = umax / panels as f64;
        let mut pts = Vec::with_capacity(panels * x.len());
        for p in 0..panels {
            for (xi, wi) in x.iter().zip(&w) {
                let u = hw * (p as f64 + 0.5 * (xi + 1.0));
                pts.push((u, 0.5 * hw * wi));
            }
        }
        let nodes = pts.par_iter().map(|&(u, w)| {
            let t = split * u.exp();
            (t, s.at(t) * w)
        }).collect();
        Ok(Self { expansion, split, nodes, direct: s, tail_bound })
    }

    pub fn expansion(&self) -> &AsymptoticExpansion {
        &self.expansion
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// Exponents s at which the model integral has poles (s = z + λ = 0).
    fn term_exponents(&self) -> Vec<f64> {
        let l = &self.expansion.lattice;
        let mut e: Vec<f64> = self.expansion.a_terms().keys().map(|j| l.lambda(*j)).collect();
        e.extend(self.expansion.b_terms().keys().map(|j| l.lambda(*j)));
        e.extend(self.expansion.c_terms().keys().map(|k| *k as f64));
        e
    }

    /// Γ(z)ζ(z), valid away from z = −λ for model exponents λ.
    fn gamma_times_zeta(&self, z: C64) -> C64 {
        let tf = C64::from(self.split);
        let ltf = self.split.ln();
        let l = &self.expansion.lattice;
        let mut s = ZERO;
        for (j, v) in self.expansion.a_terms() {
            let e = z + l.lambda(*j);
            s += v * tf.powc(e) / e;
        }
        for (k, v) in self.expansion.c_terms() {
            let e = z + *k as f64;
            s += v * tf.powc(e) / e;
        }
        for (j, v) in self.expansion.b_terms() {
            let e = z + l.lambda(*j);
            s += v * tf.powc(e) * (ltf / e - 1.0 / (e * e));
        }
        let tail: Vec<C64> = self.nodes.iter().map(|(t, wh)| wh * C64::from(*t).powc(z)).collect();
        s + pairwise_sum(&tail)
    }

    /// ζ(z) by the Mellin formula; exact poles of the model make this
    /// infinite, use `laurent` there.
    pub fn mellin(&self, z: C64) -> C64 {
        rgamma(z) * self.gamma_times_zeta(z)
    }

    /// Laurent coefficients at z0 from the Cauchy integral on a circle
    /// avoiding all other candidate poles.
    pub fn laurent(&self, z0: C64) -> Laurent {
        let mut r: f64 = 0.25;
        for e in self.term_exponents() {
            let d = (z0 + e).norm();
            if d > 1e-9 {
                r = r.min(0.5 * d);
            }
        }
        let m = 96;
        let mut c = [ZERO; 4]; // c_{-2}, c_{-1}, c_0, c_1
        for k in 0..m {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / m as f64;
            let w = C64::from_polar(r, th);
            let f = self.mellin(z0 + w);
            // c_n = (1/m) Σ f(z0 + w) w^{-n}
            c[0] += f * w * w;
            c[1] += f * w;
            c[2] += f;
            c[3] += f / w;
        }
        let s = 1.0 / m as f64;
        Laurent { c_m2: c[0] * s, residue: c[1] * s, finite_part: c[2] * s, derivative: c[3] * s }
    }

    /// ζ(z), reporting a pole when z is a pole with non-negligible residue.
    pub fn value(&self, z: C64) -> ZetaValue {
        let near_pole = self.term_exponents().iter().any(|e| (z + e).norm() < 1e-8);
        if !near_pole {
            return ZetaValue::Finite { value: self.mellin(z) };
        }
        let lz = self.laurent(z);
        let scale = lz.finite_part.norm().max(1.0);
        if lz.residue.norm() > 1e-9 * scale || lz.c_m2.norm() > 1e-9 * scale {
            ZetaValue::Pole { residue: lz.residue, finite_part: lz.finite_part }
        } else {
            ZetaValue::Finite { value: lz.finite_part }
        }
    }

    /// Σ d_k λ_k^{-z} over the truncated spectrum; meaningful only where
    /// the series converges, Re z > (dim M + ord A)/ord Q.
    pub fn direct(&self, z: C64) -> Result<C64> {
        direct_zeta(&self.direct, z)
    }
}

fn direct_zeta(s: &HeatSeries, z: C64) -> Result<C64> {
    let q = s.weight().order();
    let abscissa = (s.weight().dim_m() as f64 + s.order_a()) / q;
    if z.re <= abscissa {
        return Err(Error::InvalidInput(format!(
            "direct summation needs Re z > {abscissa}, got {}",
            z.re
        )));
    }
    let v: Vec<C64> = s.terms().iter().map(|(l, d)| d * C64::from(*l).powc(-z)).collect();
    Ok(pairwise_sum(&v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZetaRoute {
    #[default]
    Mellin,
    Direct,
}

/// str(A Q^{-z}) by the chosen route.
pub fn zeta_trace(a: &SpectralOperator, q: &Weight, z: C64, route: ZetaRoute, opts: &TraceOptions) -> Result<ZetaValue> {
    match route {
        ZetaRoute::Direct => Ok(ZetaValue::Finite { value: direct_zeta(&HeatSeries::new(a, q)?, z)? }),
        ZetaRoute::Mellin => Ok(ZetaFunction::new(a, q, opts)?.value(z)),
    }
}

/// ζ_A′(0) for z ↦ str(A Q^{-z}); requires regularity at 0.
pub fn zeta_derivative_at_zero(a: &SpectralOperator, q: &Weight, opts: &TraceOptions) -> Result<C64> {
    let zf = ZetaFunction::new(a, q, opts)?;
    let l = zf.laurent(ZERO);
    if l.residue.norm() > 1e-9 * l.finite_part.norm().max(1.0) {
        return Err(Error::Pole { residue_re: l.residue.re, residue_im: l.residue.im });
    }
    Ok(l.derivative)
}

/// log det_ε Q = −∫_ε^∞ t^{-1} str(e^{-tQ}) dt, summed eigenvalue by
/// eigenvalue as −Σ ± E₁(ελ).
pub fn log_cutoff_determinant(q: &Weight, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("cutoff must be positive, got {eps}")));
    }
    let v: Vec<C64> = q
        .eigenvalues()
        .iter()
        .zip(q.grading())
        .map(|(l, g)| C64::from(-g * exp_integral_e1(eps * l)))
        .collect();
    Ok(pairwise_sum(&v).re)
}

pub fn cutoff_determinant(q: &Weight, eps: f64) -> Result<f64> {
    Ok(log_cutoff_determinant(q, eps)?.exp())
}

/// Expansion of ε ↦ log det_ε Q: the heat lattice with the log term at ε⁰.
pub fn log_determinant_expansion(q: &Weight, opts: &TraceOptions) -> Result<AsymptoticExpansion> {
    let s = HeatSeries::identity(q, true);
    s.check_tail(opts)?;
    let lattice = s.lattice()?;
    let samples: Vec<(f64, C64)> = opts
        .grid
        .par_iter()
        .map(|&e| log_cutoff_determinant(q, e).map(|v| (e, C64::from(v))))
        .collect::<Result<_>>()?;
    fit_expansion(&samples, &lattice, &opts.fit)
}

/// log det_μ Q = Lim^μ log det_ε Q.
pub fn log_renormalized_determinant(q: &Weight, mu: f64, opts: &TraceOptions) -> Result<f64> {
    Ok(log_determinant_expansion(q, opts)?.renormalized_limit(mu).re)
}

pub fn renormalized_determinant(q: &Weight, mu: f64, opts: &TraceOptions) -> Result<f64> {
    Ok(log_renormalized_determinant(q, mu, opts)?.exp())
}

/// Quillen norm √det.
pub fn quillen_norm(det: f64) -> f64 {
    det.sqrt()
}

/// Heat-coefficient predictions from residues of A Q^{-z}.
pub mod coefficient_laws {
    use super::*;

    /// Coefficient of ε^λ for λ not a non-negative integer:
    /// Γ(−λ)/q · res(A Q^{λ}).
    pub fn alpha(res_a_q_lambda: C64, lambda: f64, q: f64) -> C64 {
        gamma(C64::from(-lambda)) / q * res_a_q_lambda
    }

    /// Coefficient of ε^k log ε for k ≥ 0: (−1)^{k+1} res(A Q^k)/(q k!).
    pub fn beta(res_a_q_k: C64, k: u32, q: f64) -> C64 {
        let sign = if k.is_multiple_of(2) { -1.0 } else { 1.0 };
        res_a_q_k * (sign / (q * factorial(k)))
    }

    /// Residue and finite part of ζ at z = −k produced by a heat term
    /// c ε^k + b ε^k log ε.
    pub fn laurent_at_negative_integer(c: C64, b: C64, k: u32) -> (C64, C64) {
        let s = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let kf = factorial(k);
        (b * (-s * kf), (c + b * digamma(k as f64 + 1.0)) * (s * kf))
    }

    /// Symbol-route residue of A·Q^{p} for multiplier-class literals.
    pub fn residue_with_power(a: &OperatorExpr, q: &OperatorExpr, p: f64) -> Result<C64> {
        let prod = OperatorExpr::product(vec![a.clone(), q.clone().power_of(p)?]);
        residue_of_expr(&prod)
    }

    /// Predicted α_j of str(A e^{-εQ}) at λ_j (λ_j not a non-negative integer).
    pub fn predicted_alpha(a: &OperatorExpr, q: &OperatorExpr, lattice: &ExponentLattice, j: u32) -> Result<C64> {
        let lam = lattice.lambda(j);
        if lam > -LATTICE_EPS && is_integer(lam) {
            return Err(Error::Hypothesis(format!("λ_{j} = {lam} is a non-negative integer")));
        }
        let qo = q.order()?;
        Ok(alpha(residue_with_power(a, q, lam)?, lam, qo))
    }

    /// Predicted log coefficient at ε^k.
    pub fn predicted_beta(a: &OperatorExpr, q: &OperatorExpr, k: u32) -> Result<C64> {
        let qo = q.order()?;
        Ok(beta(residue_with_power(a, q, k as f64)?, k, qo))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn lap(n: usize) -> Weight {
        Weight::from_expr(&OperatorExpr::laplacian_plus_one(), n).unwrap()
    }

    fn ident(n: usize) -> SpectralOperator {
        OperatorExpr::identity().quantize(n).unwrap()
    }

    #[test]
    fn heat_trace_direct_values() {
        let q = lap(40);
        let r = heat_trace(&ident(40), &q, 10.0).unwrap();
        // eigenvalues 1, 2, 2, 5, 5, ...
        let want = (-10.0f64).exp() + 2.0 * (-20.0f64).exp() + 2.0 * (-50.0f64).exp();
        assert!((r.value.re - want).abs() < 1e-15 * want, "{} vs {want}", r.value.re);
        assert!(r.tail_bound < 1e-300);
        let z = SpectralOperator::zero(40, q.space());
        assert_eq!(heat_trace(&z, &q, 0.5).unwrap().value, ZERO);
        assert!(heat_trace(&ident(40), &q, 0.0).is_err());
    }

    #[test]
    fn weighted_trace_of_identity_vanishes() {
        let q = lap(600);
        let r = weighted_trace(&ident(600), &q, 0.0, &TraceOptions::default()).unwrap();
        assert!(r.value.norm() < 1e-8, "{}", r.value);
        let exp = r.expansion.unwrap();
        assert!((exp.a(0).re - std::f64::consts::PI.sqrt()).abs() < 1e-6 * std::f64::consts::PI.sqrt());
    }

    #[test]
    fn tail_tolerance_is_enforced() {
        let q = lap(40);
        assert!(matches!(
            weighted_trace(&ident(40), &q, 0.0, &TraceOptions::default()),
            Err(Error::TailTooLarge { .. })
        ));
    }

    #[test]
    fn trace_class_operator_gives_ordinary_trace() {
        // e^{-Q} is smoothing: its weighted trace is Σ e^{-λ_n}
        let q = lap(80);
        let a = q.heat_operator(1.0).unwrap();
        let r = weighted_trace(&a, &q, 0.0, &TraceOptions::default()).unwrap();
        let want: f64 = q.eigenvalues().iter().map(|l| (-l).exp()).sum();
        assert!((r.value.re - want).abs() < 1e-10, "{} vs {want}", r.value.re);
        let z = zeta_trace(&a, &q, ZERO, ZetaRoute::Mellin, &TraceOptions::default()).unwrap();
        assert!((z.finite().unwrap().re - want).abs() < 1e-8);
    }

    #[test]
    fn residue_routes_agree_on_inverse_square_root() {
        let e = OperatorExpr::laplacian_plus_one().power_of(-0.5).unwrap();
        assert!((residue_of_expr(&e).unwrap() - 2.0).norm() < 1e-14);
        let q = lap(600);
        let a = e.quantize(600).unwrap();
        let r = wodzicki_residue_zeta(&a, &q, &TraceOptions::default()).unwrap();
        assert!((r.value - 2.0).norm() < 1e-4 * 2.0, "{}", r.value);
        let r0 = wodzicki_residue_zeta(&ident(600), &q, &TraceOptions::default()).unwrap();
        assert!(r0.value.norm() < 1e-8);
    }

    #[test]
    fn zeta_routes_agree_at_two() {
        let q = lap(600);
        let zf = ZetaFunction::new(&ident(600), &q, &TraceOptions::default()).unwrap();
        let mellin = zf.value(c64(2.0, 0.0)).finite().unwrap();
        // Σ (n²+1)^{-2} = (π coth π + π² csch² π)/2 over all n ∈ ℤ
        let pi = std::f64::consts::PI;
        let exact = 0.5 * (pi / pi.tanh() + pi * pi / pi.sinh().powi(2));
        assert!((mellin.re - exact).abs() < 1e-8 * exact, "{} vs {}", mellin.re, exact);
        let direct = zf.direct(c64(2.0, 0.0)).unwrap();
        assert!((direct.re - exact).abs() < 1e-8 * exact);
        assert!(zf.direct(c64(0.3, 0.0)).is_err());
    }

    #[test]
    fn zeta_pole_at_one_half() {
        let q = lap(600);
        let zf = ZetaFunction::new(&ident(600), &q, &TraceOptions::default()).unwrap();
        match zf.value(c64(0.5, 0.0)) {
            ZetaValue::Pole { residue, .. } => assert!((residue - 1.0).norm() < 1e-6),
            v => panic!("expected a pole, got {v:?}"),
        }
        // ζ_Q(0) = 0 and ζ_Q'(0) = −log(4 sinh² π)
        let l = zf.laurent(ZERO);
        assert!(l.residue.norm() < 1e-9 && l.finite_part.norm() < 1e-8);
        let want = -(4.0 * std::f64::consts::PI.sinh().powi(2)).ln();
        assert!((l.derivative.re - want).abs() < 1e-7, "{} vs {want}", l.derivative.re);
    }

    #[test]
    fn determinants() {
        // a single eigenvalue λ: det_ε → λ ε e^γ
        let w = Weight::from_diagonal(0, crate::specops::Space::Plain, vec![3.0], 2.0).unwrap();
        let eps = 1e-7;
        let d = cutoff_determinant(&w, eps).unwrap();
        assert!((d / (3.0 * eps * EULER_GAMMA.exp()) - 1.0).abs() < 1e-5);
        // the quadrature form of the same integral
        let q = lap(20);
        let h = HeatSeries::identity(&q, true);
        let integral = crate::linalg::integrate(|u| h.at(0.3 * u.exp()), 0.0, 8.0, 64, 20);
        assert!((log_cutoff_determinant(&q, 0.3).unwrap() + integral.re).abs() < 1e-10);
        assert!(cutoff_determinant(&q, 0.2).unwrap() < cutoff_determinant(&q, 0.3).unwrap());
        let q = lap(600);
        let ld = log_renormalized_determinant(&q, MU_ZETA, &TraceOptions::default()).unwrap();
        let want = (4.0 * std::f64::consts::PI.sinh().powi(2)).ln();
        assert!((ld - want).abs() < 1e-7, "{ld} vs {want}");
    }

    #[test]
    fn coefficient_laws_for_inverse_square_root() {
        let qe = OperatorExpr::laplacian_plus_one();
        let lat = ExponentLattice::for_heat_trace(0.0, 1, 2).unwrap();
        let a0 = coefficient_laws::predicted_alpha(&OperatorExpr::identity(), &qe, &lat, 0).unwrap();
        assert!((a0.re - std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let a = qe.clone().power_of(-0.5).unwrap();
        let b0 = coefficient_laws::predicted_beta(&a, &qe, 0).unwrap();
        assert!((b0 + 1.0).norm() < 1e-12);
    }
}

//! Asymptotic expansions on the lattice ε^{λ_j}, ε^{λ_j} log ε, ε^k and the
//! μ-renormalized limit extracted from them.

use crate::error::{Error, Result};
use crate::linalg::{is_integer, C64, LATTICE_EPS, ZERO};
use nalgebra::DMatrix;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use twofloat::TwoFloat;

/// λ_j = (j − alpha − n)/m, j = 0, 1, 2, …
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentLattice {
    pub m: u32,
    pub n: u32,
    pub alpha: f64,
}

impl ExponentLattice {
    pub fn new(m: u32, n: u32, alpha: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("lattice denominator m must be ≥ 1".into()));
        }
        if !alpha.is_finite() {
            return Err(Error::InvalidInput("lattice shift alpha must be finite".into()));
        }
        Ok(Self { m, n, alpha })
    }

    /// Lattice of tr(A e^{-εQ}) on a manifold of dimension `dim` for
    /// ord A = `order_a` and ord Q = `q`.
    pub fn for_heat_trace(order_a: f64, dim: u32, q: u32) -> Result<Self> {
        Self::new(q, dim, order_a)
    }

    pub fn lambda(&self, j: u32) -> f64 {
        (j as f64 - self.alpha - self.n as f64) / self.m as f64
    }

    /// Index j with λ_j = `value`, if the lattice hits it.
    pub fn index_of(&self, value: f64) -> Option<u32> {
        let j = value * self.m as f64 + self.alpha + self.n as f64;
        if j < -LATTICE_EPS || !is_integer(j) {
            return None;
        }
        Some(j.round() as u32)
    }

    /// The j at which λ_j = 0, present iff α + n is a non-negative integer.
    pub fn zero_index(&self) -> Option<u32> {
        self.index_of(0.0)
    }

    /// Lattice indices with λ_j ≤ top.
    pub fn indices_up_to(&self, top: f64) -> Vec<u32> {
        (0..).take_while(|&j| self.lambda(j) <= top + LATTICE_EPS).collect()
    }
}

/// Which integer exponents receive a log ε column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LogTerms {
    None,
    /// Integer lattice points λ_j ≥ 0, the only places classical heat
    /// expansions carry logarithms.
    #[default]
    NonNegative,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Default,
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Lattice steps past ε⁰ kept in the model; the top exponent is J/m.
    pub truncation_j: u32,
    /// Overrides J/m when set.
    pub top_exponent: Option<f64>,
    pub logs: LogTerms,
    pub residual_threshold: f64,
    pub max_condition: f64,
    pub min_decades: f64,
    pub precision: Precision,
    /// Absolute level below which samples are indistinguishable from
    /// truncation or roundoff noise. Data entirely below it fits to the zero
    /// expansion, and a fit whose absolute misfit stays below it is accepted.
    pub noise_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            truncation_j: 8,
            top_exponent: None,
            logs: LogTerms::NonNegative,
            residual_threshold: 1e-6,
            max_condition: 1e14,
            min_decades: 2.0,
            precision: Precision::Default,
            noise_floor: 0.0,
        }
    }
}

impl FitOptions {
    pub fn top(&self, lattice: &ExponentLattice) -> f64 {
        self.top_exponent.unwrap_or(self.truncation_j as f64 / lattice.m as f64)
    }
    pub fn with_top(mut self, top: f64) -> Self {
        self.top_exponent = Some(top);
        self
    }
    pub fn with_logs(mut self, logs: LogTerms) -> Self {
        self.logs = logs;
        self
    }
    pub fn with_precision(mut self, p: Precision) -> Self {
        self.precision = p;
        self
    }
    pub fn with_noise_floor(mut self, floor: f64) -> Self {
        self.noise_floor = floor;
        self
    }
}

/// f(ε) ≈ Σ a_j ε^{λ_j} + Σ b_j ε^{λ_j} log ε + Σ c_k ε^k.
///
/// `a` and `b` are keyed by lattice index j, `c` by the integer power k.
/// Fitted expansions are canonical: a never holds an entry whose λ_j is a
/// non-negative integer (that coefficient lives in c). Hand-built
/// expansions may split a constant between a_{j0} and c₀; only the sum
/// matters downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ExpansionRecord", try_from = "ExpansionRecord")]
pub struct AsymptoticExpansion {
    pub lattice: ExponentLattice,
    pub truncation_j: u32,
    a: BTreeMap<u32, C64>,
    b: BTreeMap<u32, C64>,
    c: BTreeMap<u32, C64>,
    pub residual: f64,
    pub condition: f64,
}

impl AsymptoticExpansion {
    pub fn new(lattice: ExponentLattice, truncation_j: u32) -> Self {
        Self {
            lattice,
            truncation_j,
            a: BTreeMap::new(),
            b: BTreeMap::new(),
            c: BTreeMap::new(),
            residual: 0.0,
            condition: 1.0,
        }
    }

    pub fn a(&self, j: u32) -> C64 {
        self.a.get(&j).copied().unwrap_or(ZERO)
    }
    pub fn b(&self, j: u32) -> C64 {
        self.b.get(&j).copied().unwrap_or(ZERO)
    }
    pub fn c(&self, k: u32) -> C64 {
        self.c.get(&k).copied().unwrap_or(ZERO)
    }
    pub fn a_terms(&self) -> &BTreeMap<u32, C64> {
        &self.a
    }
    pub fn b_terms(&self) -> &BTreeMap<u32, C64> {
        &self.b
    }
    pub fn c_terms(&self) -> &BTreeMap<u32, C64> {
        &self.c
    }

    pub fn set_a(&mut self, j: u32, v: C64) -> &mut Self {
        self.a.insert(j, v);
        self
    }

    pub fn set_b(&mut self, j: u32, v: C64) -> Result<&mut Self> {
        if !is_integer(self.lattice.lambda(j)) {
            return Err(Error::InvalidInput(format!("log term at non-integer exponent λ_{j} = {}", self.lattice.lambda(j))));
        }
        self.b.insert(j, v);
        Ok(self)
    }

    pub fn set_c(&mut self, k: u32, v: C64) -> &mut Self {
        self.c.insert(k, v);
        self
    }

    /// Coefficient of ε^λ (a and c combined).
    pub fn power_coefficient(&self, lambda: f64) -> C64 {
        let mut v = ZERO;
        if let Some(j) = self.lattice.index_of(lambda) {
            v += self.a(j);
        }
        if lambda > -LATTICE_EPS && is_integer(lambda) {
            v += self.c(lambda.round() as u32);
        }
        v
    }

    /// Coefficient of ε^λ log ε.
    pub fn log_coefficient(&self, lambda: f64) -> C64 {
        self.lattice.index_of(lambda).map_or(ZERO, |j| self.b(j))
    }

    /// Full constant term a_{j0} + c₀.
    pub fn constant_term(&self) -> C64 {
        self.power_coefficient(0.0)
    }

    /// Lim^μ f = a_{j0} + c₀ − μ b_{j0}.
    pub fn renormalized_limit(&self, mu: f64) -> C64 {
        self.constant_term() - self.log_coefficient(0.0) * mu
    }

    pub fn evaluate(&self, eps: f64) -> C64 {
        let le = eps.ln();
        let mut s = ZERO;
        for (&j, &v) in &self.a {
            s += v * eps.powf(self.lattice.lambda(j));
        }
        for (&j, &v) in &self.b {
            s += v * eps.powf(self.lattice.lambda(j)) * le;
        }
        for (&k, &v) in &self.c {
            s += v * eps.powi(k as i32);
        }
        s
    }

    /// Moves a_{j} at non-negative integer λ_j into c.
    pub fn canonicalize(&mut self) {
        let moves: Vec<u32> = self
            .a
            .keys()
            .copied()
            .filter(|&j| {
                let l = self.lattice.lambda(j);
                l > -LATTICE_EPS && is_integer(l)
            })
            .collect();
        for j in moves {
            let v = self.a.remove(&j).unwrap();
            let k = self.lattice.lambda(j).round() as u32;
            *self.c.entry(k).or_insert(ZERO) += v;
        }
    }

    /// Smallest exponent carrying a nonzero coefficient.
    pub fn leading_exponent(&self) -> Option<f64> {
        let la = self.a.iter().filter(|(_, v)| v.norm() > 0.0).map(|(j, _)| self.lattice.lambda(*j));
        let lb = self.b.iter().filter(|(_, v)| v.norm() > 0.0).map(|(j, _)| self.lattice.lambda(*j));
        let lc = self.c.iter().filter(|(_, v)| v.norm() > 0.0).map(|(k, _)| *k as f64);
        la.chain(lb).chain(lc).reduce(f64::min)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpansionRecord {
    lattice: ExponentLattice,
    #[serde(default = "default_j")]
    truncation_j: u32,
    a: Vec<[f64; 3]>,
    b: Vec<[f64; 3]>,
    c: Vec<[f64; 3]>,
    residual: f64,
    #[serde(default = "one")]
    condition: f64,
}

fn default_j() -> u32 {
    8
}
fn one() -> f64 {
    1.0
}

fn to_rows(m: &BTreeMap<u32, C64>) -> Vec<[f64; 3]> {
    m.iter().map(|(j, v)| [*j as f64, v.re, v.im]).collect()
}

fn from_rows(rows: &[[f64; 3]], what: &str) -> std::result::Result<BTreeMap<u32, C64>, String> {
    rows.iter()
        .map(|r| {
            if r[0] < 0.0 || r[0].fract() != 0.0 {
                Err(format!("{what}: index {} is not a non-negative integer", r[0]))
            } else {
                Ok((r[0] as u32, C64::new(r[1], r[2])))
            }
        })
        .collect()
}

impl From<AsymptoticExpansion> for ExpansionRecord {
    fn from(e: AsymptoticExpansion) -> Self {
        Self {
            lattice: e.lattice,
            truncation_j: e.truncation_j,
            a: to_rows(&e.a),
            b: to_rows(&e.b),
            c: to_rows(&e.c),
            residual: e.residual,
            condition: e.condition,
        }
    }
}

impl TryFrom<ExpansionRecord> for AsymptoticExpansion {
    type Error = String;
    fn try_from(r: ExpansionRecord) -> std::result::Result<Self, String> {
        let lattice = ExponentLattice::new(r.lattice.m, r.lattice.n, r.lattice.alpha).map_err(|e| e.to_string())?;
        let b = from_rows(&r.b, "b")?;
        if let Some(j) = b.keys().find(|&&j| !is_integer(lattice.lambda(j))) {
            return Err(format!("b: log term at non-integer exponent (j = {j})"));
        }
        Ok(Self {
            lattice,
            truncation_j: r.truncation_j,
            a: from_rows(&r.a, "a")?,
            b,
            c: from_rows(&r.c, "c")?,
            residual: r.residual,
            condition: r.condition,
        })
    }
}

/// Geometrically spaced grid including both endpoints.
pub fn geometric_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min) || points < 2 {
        return Err(Error::InvalidInput(format!("bad grid [{min}, {max}] with {points} points")));
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

/// Default sampling: 72 points over [1e-4, 1e-1], i.e. 48 per two decades.
pub fn default_grid() -> Vec<f64> {
    geometric_grid(1e-4, 1e-1, 72).expect("static grid")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    Power(f64),
    Log(f64),
}

fn model_columns(lattice: &ExponentLattice, top: f64, logs: LogTerms) -> Vec<Column> {
    let mut exps: Vec<f64> = lattice.indices_up_to(top).into_iter().map(|j| lattice.lambda(j)).collect();
    for k in 0..=(top.floor().max(-1.0) as i64) {
        let k = k as f64;
        if !exps.iter().any(|e| (e - k).abs() < LATTICE_EPS) {
            exps.push(k);
        }
    }
    exps.sort_by(f64::total_cmp);
    let mut cols: Vec<Column> = exps.iter().map(|&e| Column::Power(e)).collect();
    for j in lattice.indices_up_to(top) {
        let l = lattice.lambda(j);
        let take = match logs {
            LogTerms::None => false,
            LogTerms::NonNegative => is_integer(l) && l > -LATTICE_EPS,
            LogTerms::All => is_integer(l),
        };
        if take {
            cols.push(Column::Log(l.round()));
        }
    }
    cols
}

/// Least squares by Householder QR on a column-major m×n matrix with
/// several right-hand sides. Returns None when R has a zero pivot.
fn householder_lstsq<T: Float>(mut a: Vec<T>, rows: usize, cols: usize, mut rhs: Vec<Vec<T>>) -> Option<Vec<Vec<T>>> {
    let idx = |i: usize, j: usize| j * rows + i;
    for k in 0..cols {
        let mut norm = T::zero();
        for i in k..rows {
            norm = norm + a[idx(i, k)] * a[idx(i, k)];
        }
        let norm = norm.sqrt();
        if norm == T::zero() {
            return None;
        }
        let akk = a[idx(k, k)];
        let alpha = if akk > T::zero() { -norm } else { norm };
        // v = x - alpha e_k, stored in place
        let mut v: Vec<T> = (k..rows).map(|i| a[idx(i, k)]).collect();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &x| s + x * x);
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::one() + T::one();
        for j in k..cols {
            let dot = v.iter().enumerate().fold(T::zero(), |s, (t, &x)| s + x * a[idx(k + t, j)]);
            let f = two * dot / vnorm2;
            for (t, &x) in v.iter().enumerate() {
                a[idx(k + t, j)] = a[idx(k + t, j)] - f * x;
            }
        }
        for y in rhs.iter_mut() {
            let dot = v.iter().enumerate().fold(T::zero(), |s, (t, &x)| s + x * y[k + t]);
            let f = two * dot / vnorm2;
            for (t, &x) in v.iter().enumerate() {
                y[k + t] = y[k + t] - f * x;
            }
        }
    }
    let mut out = Vec::with_capacity(rhs.len());
    for y in rhs {
        let mut x = vec![T::zero(); cols];
        for k in (0..cols).rev() {
            let mut s = y[k];
            for j in k + 1..cols {
                s = s - a[idx(k, j)] * x[j];
            }
            let d = a[idx(k, k)];
            if d == T::zero() {
                return None;
            }
            x[k] = s / d;
        }
        out.push(x);
    }
    Some(out)
}

fn solve_in<T: Float>(design: &[f64], rows: usize, cols: usize, rhs: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let cv = |x: f64| T::from(x).expect("finite");
    let a: Vec<T> = design.iter().map(|&x| cv(x)).collect();
    let r: Vec<Vec<T>> = rhs.iter().map(|y| y.iter().map(|&x| cv(x)).collect()).collect();
    householder_lstsq(a, rows, cols, r).map(|xs| xs.into_iter().map(|x| x.into_iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect()).collect())
}

/// f64 solve plus one refinement step whose residual is accumulated in
/// double-double; recovers most of the accuracy lost to conditioning when
/// the system is nearly consistent.
fn solve_refined(design: &[f64], rows: usize, cols: usize, rhs: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let x = solve_in::<f64>(design, rows, cols, rhs)?;
    let resid: Vec<Vec<f64>> = rhs
        .iter()
        .zip(&x)
        .map(|(y, xv)| {
            (0..rows)
                .map(|i| {
                    let mut acc = TwoFloat::from(y[i]);
                    for j in 0..cols {
                        acc -= TwoFloat::new_mul(design[j * rows + i], xv[j]);
                    }
                    f64::from(acc)
                })
                .collect()
        })
        .collect();
    let dx = solve_in::<f64>(design, rows, cols, &resid)?;
    Some(x.iter().zip(&dx).map(|(a, d)| a.iter().zip(d).map(|(u, v)| u + v).collect()).collect())
}

fn check_samples(samples: &[(f64, C64)], ncols: usize, opts: &FitOptions) -> Result<()> {
    if samples.len() < 2 * ncols {
        return Err(Error::InvalidInput(format!("{} samples for {} model terms; need at least twice as many", samples.len(), ncols)));
    }
    let mut eps: Vec<f64> = samples.iter().map(|s| s.0).collect();
    if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidInput("sample abscissae must be positive and finite".into()));
    }
    if samples.iter().any(|s| !(s.1.re.is_finite() && s.1.im.is_finite())) {
        return Err(Error::InvalidInput("sample values must be finite".into()));
    }
    eps.sort_by(f64::total_cmp);
    if eps.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("sample abscissae must be distinct".into()));
    }
    let decades = (eps[eps.len() - 1] / eps[0]).log10();
    if decades < opts.min_decades - 1e-9 {
        return Err(Error::InvalidInput(format!("samples span {decades:.2} decades; at least {} required", opts.min_decades)));
    }
    Ok(())
}

/// Least-squares fit of samples (ε, f(ε)) to the truncated lattice model.
///
/// Rows are weighted by t^{-λ_min} with t = ε/ε_max so the leading term is
/// O(1) everywhere, and columns are scaled to unit norm before the
/// Householder solve. Fails instead of returning a poorly determined fit.
pub fn fit_expansion(samples: &[(f64, C64)], lattice: &ExponentLattice, opts: &FitOptions) -> Result<AsymptoticExpansion> {
    let top = opts.top(lattice);
    let cols = model_columns(lattice, top, opts.logs);
    if cols.is_empty() {
        return Err(Error::InvalidInput(format!("no lattice exponent below the top exponent {top}")));
    }
    check_samples(samples, cols.len(), opts)?;
    if samples.iter().all(|s| s.1.norm() <= opts.noise_floor) {
        let mut zero = AsymptoticExpansion::new(*lattice, opts.truncation_j);
        zero.residual = 0.0;
        return Ok(zero);
    }
    let rows = samples.len();
    let ncols = cols.len();
    let scale = samples.iter().map(|s| s.0).fold(0.0, f64::max);
    let lmin = cols
        .iter()
        .map(|c| match c {
            Column::Power(e) | Column::Log(e) => *e,
        })
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = samples.iter().map(|s| (s.0 / scale).powf(-lmin)).collect();

    let mut design = vec![0.0; rows * ncols];
    for (j, col) in cols.iter().enumerate() {
        for (i, s) in samples.iter().enumerate() {
            let t = s.0 / scale;
            let v = match col {
                Column::Power(e) => t.powf(*e),
                Column::Log(e) => t.powf(*e) * t.ln(),
            };
            design[j * rows + i] = v * weights[i];
        }
    }
    let mut colnorm = vec![0.0; ncols];
    for j in 0..ncols {
        let n = design[j * rows..(j + 1) * rows].iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::RankDeficient { condition: f64::INFINITY });
        }
        colnorm[j] = n;
        design[j * rows..(j + 1) * rows].iter_mut().for_each(|x| *x /= n);
    }

    let dm = DMatrix::from_column_slice(rows, ncols, &design);
    let sv = dm.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= opts.max_condition) {
        return Err(Error::RankDeficient { condition });
    }

    let rhs: Vec<Vec<f64>> = vec![
        samples.iter().zip(&weights).map(|(s, w)| s.1.re * w).collect(),
        samples.iter().zip(&weights).map(|(s, w)| s.1.im * w).collect(),
    ];
    let sol = match opts.precision {
        Precision::Default => solve_refined(&design, rows, ncols, &rhs),
        Precision::Extended => solve_in::<TwoFloat>(&design, rows, ncols, &rhs),
    }
    .ok_or(Error::RankDeficient { condition })?;

    let mut exp = AsymptoticExpansion::new(*lattice, opts.truncation_j);
    exp.condition = condition;
    let ls = scale.ln();
    for (j, col) in cols.iter().enumerate() {
        let v = C64::new(sol[0][j], sol[1][j]) / colnorm[j];
        match col {
            Column::Power(e) => add_power(&mut exp, *e, v * scale.powf(-e)),
            Column::Log(e) => {
                let w = v * scale.powf(-e);
                let jj = lattice.index_of(*e).expect("log columns sit on the lattice");
                *exp.b.entry(jj).or_insert(ZERO) += w;
                add_power(&mut exp, *e, -w * ls);
            }
        }
    }

    let mut worst: f64 = 0.0;
    let mut ymax: f64 = 0.0;
    let mut abs_worst: f64 = 0.0;
    for (s, w) in samples.iter().zip(&weights) {
        let r = (exp.evaluate(s.0) - s.1).norm();
        worst = worst.max(r * w);
        abs_worst = abs_worst.max(r);
        ymax = ymax.max(s.1.norm() * w);
    }
    exp.residual = if ymax > 0.0 { worst / ymax } else { worst };
    if !(exp.residual <= opts.residual_threshold || abs_worst <= opts.noise_floor) {
        return Err(Error::FitResidual { residual: exp.residual, threshold: opts.residual_threshold });
    }
    Ok(exp)
}

fn add_power(exp: &mut AsymptoticExpansion, e: f64, v: C64) {
    if e > -LATTICE_EPS && is_integer(e) {
        *exp.c.entry(e.round() as u32).or_insert(ZERO) += v;
    } else {
        let j = exp.lattice.index_of(e).expect("non-integer exponents come from the lattice");
        *exp.a.entry(j).or_insert(ZERO) += v;
    }
}

/// Samples f on the grid in parallel (order preserved) and fits.
pub fn fit_function<F>(f: F, grid: &[f64], lattice: &ExponentLattice, opts: &FitOptions) -> Result<AsymptoticExpansion>
where
    F: Fn(f64) -> Result<C64> + Sync,
{
    let samples: Vec<(f64, C64)> = grid.par_iter().map(|&e| f(e).map(|v| (e, v))).collect::<Result<_>>()?;
    fit_expansion(&samples, lattice, opts)
}

/// Lim^μ of an expansion; free-function form of the method.
pub fn renormalized_limit(exp: &AsymptoticExpansion, mu: f64) -> C64 {
    exp.renormalized_limit(mu)
}

/// Model value at ε; free-function form of the method.
pub fn evaluate(exp: &AsymptoticExpansion, eps: f64) -> C64 {
    exp.evaluate(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn half() -> ExponentLattice {
        ExponentLattice::new(2, 1, 0.0).unwrap()
    }

    #[test]
    fn lattice_indices() {
        let l = half();
        assert_eq!(l.lambda(0), -0.5);
        assert_eq!(l.zero_index(), Some(1));
        assert_eq!(ExponentLattice::new(2, 1, 0.5).unwrap().zero_index(), None);
        assert_eq!(l.indices_up_to(1.0), vec![0, 1, 2, 3]);
        assert!(ExponentLattice::new(0, 1, 0.0).is_err());
    }

    #[test]
    fn constructed_function_is_recovered() {
        let grid = geometric_grid(1e-4, 1e-1, 40).unwrap();
        let s: Vec<_> = grid.iter().map(|&e| (e, C64::from(e.powf(-0.5) + 2.0 + 3.0 * e * e.ln()))).collect();
        let fit = fit_expansion(&s, &half(), &FitOptions::default().with_top(2.0)).unwrap();
        assert!((fit.a(0) - 1.0).norm() < 1e-9);
        assert!((fit.c(0) - 2.0).norm() < 1e-9);
        assert!((fit.log_coefficient(1.0) - 3.0).norm() < 1e-7);
        assert!(fit.residual < 1e-10);
        for e in [2e-4, 3e-3, 0.05] {
            let f = e.powf(-0.5) + 2.0 + 3.0 * e * e.ln();
            assert!((fit.evaluate(e).re - f).abs() < 1e-9 * f.abs());
        }
    }

    #[test]
    fn constant_function() {
        let grid = default_grid();
        let s: Vec<_> = grid.iter().map(|&e| (e, c64(5.0, 0.0))).collect();
        let fit = fit_expansion(&s, &half(), &FitOptions::default()).unwrap();
        assert!((fit.c(0) - 5.0).norm() < 1e-10);
        assert!((fit.evaluate(0.0123) - 5.0).norm() < 1e-10);
        assert!(fit.a(0).norm() < 1e-9);
    }

    #[test]
    fn extended_precision_agrees() {
        let grid = default_grid();
        let s: Vec<_> = grid.iter().map(|&e| (e, C64::from(e.powf(-0.5) * (-e).exp()))).collect();
        let o = FitOptions::default().with_top(4.0);
        let a = fit_expansion(&s, &half(), &o).unwrap();
        let b = fit_expansion(&s, &half(), &o.clone().with_precision(Precision::Extended)).unwrap();
        assert!((a.a(0) - b.a(0)).norm() < 1e-10);
        assert!((b.a(0) - 1.0).norm() < 1e-10);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let grid = geometric_grid(1e-2, 1e-1, 60).unwrap();
        let s: Vec<_> = grid.iter().map(|&e| (e, C64::from(e))).collect();
        assert!(matches!(fit_expansion(&s, &half(), &FitOptions::default()), Err(Error::InvalidInput(_))));
        let few: Vec<_> = default_grid().into_iter().take(5).map(|e| (e, C64::from(e))).collect();
        assert!(fit_expansion(&few, &half(), &FitOptions::default()).is_err());
        // ε^{-0.8} is more singular than anything on the declared lattice
        let s: Vec<_> = default_grid().into_iter().map(|e| (e, C64::from(e.powf(-0.8)))).collect();
        assert!(matches!(fit_expansion(&s, &half(), &FitOptions::default()), Err(Error::FitResidual { .. })));
    }

    #[test]
    fn limit_conventions() {
        let l = ExponentLattice::new(2, 1, 0.5).unwrap();
        let mut e = AsymptoticExpansion::new(l, 8);
        e.set_c(0, c64(2.0, 0.0));
        assert_eq!(e.renormalized_limit(0.0), c64(2.0, 0.0));
        assert_eq!(e.renormalized_limit(7.0), c64(2.0, 0.0));
        let mut e = AsymptoticExpansion::new(half(), 8);
        e.set_c(0, c64(2.0, 0.0));
        e.set_b(1, c64(4.0, 0.0)).unwrap();
        assert_eq!(e.renormalized_limit(1.0), c64(-2.0, 0.0));
        assert!(e.set_b(0, ZERO).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut e = AsymptoticExpansion::new(half(), 8);
        e.set_a(0, c64(1.5, -0.5)).set_c(0, c64(2.0, 0.0));
        e.set_b(3, c64(0.0, 1.0)).unwrap();
        e.residual = 1e-12;
        let s = serde_json::to_string(&e).unwrap();
        assert!(s.contains("\"lattice\":{\"m\":2,\"n\":1,\"alpha\":0.0}"));
        let back: AsymptoticExpansion = serde_json::from_str(&s).unwrap();
        assert_eq!(back, e);
        let bad = s.replace("[3.0,0.0,1.0]", "[0.0,0.0,1.0]");
        assert!(serde_json::from_str::<AsymptoticExpansion>(&bad).is_err());
    }
}

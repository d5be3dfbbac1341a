use super::operator::{BandMatrix, OpMatrix, Parity, Space, SpectralOperator};
use super::symbol::{ClassicalSymbol, SymbolComponent};
use super::trig::TrigPoly;
use crate::error::{Error, Result};
use crate::linalg::{is_integer, C64, ONE, ZERO};
use serde::{Deserialize, Serialize};

/// Number of homogeneous components kept below the leading one when a
/// symbol is expanded.
pub const DEFAULT_SYMBOL_DEPTH: u32 = 12;

/// Operator literal: the scenario-file representation of an operator on S¹.
///
/// * `multiplier`: Fourier multiplier (Σ_i c_i(ξ))^power. Each entry of
///   `coeffs` is `[degree, value]` (value·ξ^degree for integer degree,
///   value·|ξ|^degree otherwise) or `[degree, plus, minus]` (the coefficient
///   of |ξ|^degree on ξ > 0 and on ξ < 0).
/// * `multiplication`: multiplication by Σ a cos kx + b sin kx given as
///   `trig: [[k, a, b], ...]`, plus optional complex Fourier modes
///   `modes: [[k, re, im], ...]` for e^{ikx}.
/// * `product`, `sum`, `scaled`: closure under composition and linear
///   combination.
/// * `matrix`: explicit entries `[m, n, re, im]` indexed by Fourier mode,
///   with a declared order. Has no symbol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorExpr {
    Multiplier {
        coeffs: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        power: Option<f64>,
    },
    Multiplication {
        #[serde(default)]
        trig: Vec<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        modes: Vec<[f64; 3]>,
    },
    Product {
        factors: Vec<OperatorExpr>,
    },
    Sum {
        terms: Vec<OperatorExpr>,
    },
    Scaled {
        factor: [f64; 2],
        op: Box<OperatorExpr>,
    },
    Matrix {
        entries: Vec<[f64; 4]>,
        order: f64,
    },
}

/// (degree, coefficient on ξ > 0, coefficient on ξ < 0)
type MultComp = (f64, f64, f64);

fn multiplier_components(coeffs: &[Vec<f64>]) -> Result<Vec<MultComp>> {
    let mut out = Vec::with_capacity(coeffs.len());
    for (i, c) in coeffs.iter().enumerate() {
        match c.as_slice() {
            [d, v] => {
                let minus = if is_integer(*d) && (d.round() as i64) % 2 != 0 { -v } else { *v };
                out.push((*d, *v, minus));
            }
            [d, p, m] => out.push((*d, *p, *m)),
            _ => return Err(Error::Parse(format!("coeffs[{i}]: expected [degree, value] or [degree, plus, minus]"))),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("coeffs: multiplier needs at least one component".into()));
    }
    Ok(out)
}

fn multiplier_base(comps: &[MultComp], n: i64) -> Result<f64> {
    let mut v = 0.0;
    for &(d, p, m) in comps {
        if n == 0 {
            if d == 0.0 {
                v += 0.5 * (p + m);
            } else if d < 0.0 {
                return Err(Error::InvalidInput(format!("multiplier component of degree {d} is singular at the zero mode")));
            }
        } else {
            let c = if n > 0 { p } else { m };
            v += c * (n.unsigned_abs() as f64).powf(d);
        }
    }
    Ok(v)
}

fn multiplier_value(comps: &[MultComp], power: Option<f64>, n: i64) -> Result<C64> {
    let b = multiplier_base(comps, n)?;
    match power {
        None => Ok(C64::from(b)),
        Some(p) => {
            if b == 0.0 && p < 0.0 {
                return Err(Error::InvalidInput(format!("negative power of a multiplier vanishing at mode {n}")));
            }
            if is_integer(p) {
                Ok(C64::from(b.powi(p.round() as i32)))
            } else if b > 0.0 {
                Ok(C64::from(b.powf(p)))
            } else {
                Ok(C64::from(b).powf(p))
            }
        }
    }
}

/// Homogeneous expansion of (base)^p on one half-line, where `side` lists
/// (degree, coefficient) pairs.
fn power_series_side(side: &[(f64, f64)], p: f64, depth: u32) -> Result<Vec<(f64, C64)>> {
    let (dtop, ctop) = side
        .iter()
        .filter(|(_, c)| *c != 0.0)
        .fold((f64::NEG_INFINITY, 0.0), |acc, &(d, c)| if d > acc.0 { (d, c) } else { acc });
    if ctop == 0.0 {
        return Ok(Vec::new());
    }
    let mut r = vec![0.0; depth as usize + 1];
    for &(d, c) in side {
        let k = dtop - d;
        if !is_integer(k) {
            return Err(Error::UnsupportedSymbol("multiplier degrees must differ by integers to take powers".into()));
        }
        let k = k.round() as usize;
        if k <= depth as usize {
            r[k] += c / ctop;
        }
    }
    // g = (1 + Σ_{k≥1} r_k t^k)^p via g_n = (1/n) Σ_{k=1}^n ((p+1)k - n) r_k g_{n-k}
    let mut g = vec![0.0; depth as usize + 1];
    g[0] = 1.0;
    for n in 1..=depth as usize {
        let mut s = 0.0;
        for k in 1..=n {
            s += ((p + 1.0) * k as f64 - n as f64) * r[k] * g[n - k];
        }
        g[n] = s / n as f64;
    }
    let lead = C64::from(ctop).powf(p);
    Ok(g.iter()
        .enumerate()
        .map(|(n, gn)| (p * dtop - n as f64, lead * *gn))
        .collect())
}

impl OperatorExpr {
    pub fn identity() -> Self {
        OperatorExpr::Multiplier { coeffs: vec![vec![0.0, 1.0]], power: None }
    }

    pub fn cos(k: i64) -> Self {
        OperatorExpr::Multiplication { trig: vec![[k as f64, 1.0, 0.0]], modes: vec![] }
    }

    pub fn sin(k: i64) -> Self {
        OperatorExpr::Multiplication { trig: vec![[k as f64, 0.0, 1.0]], modes: vec![] }
    }

    /// -d²/dx² + 1, i.e. the multiplier n² + 1.
    pub fn laplacian_plus_one() -> Self {
        OperatorExpr::Multiplier { coeffs: vec![vec![2.0, 1.0], vec![0.0, 1.0]], power: None }
    }

    pub fn power_of(self, p: f64) -> Result<Self> {
        match self {
            OperatorExpr::Multiplier { coeffs, power } => Ok(OperatorExpr::Multiplier { coeffs, power: Some(power.unwrap_or(1.0) * p) }),
            _ => Err(Error::UnsupportedSymbol("powers are only defined for multipliers".into())),
        }
    }

    pub fn product(factors: Vec<OperatorExpr>) -> Self {
        OperatorExpr::Product { factors }
    }

    /// Declared order (upper bound for sums).
    pub fn order(&self) -> Result<f64> {
        Ok(match self {
            OperatorExpr::Multiplier { coeffs, power } => {
                let comps = multiplier_components(coeffs)?;
                let top = comps
                    .iter()
                    .filter(|c| c.1 != 0.0 || c.2 != 0.0)
                    .map(|c| c.0)
                    .fold(f64::NEG_INFINITY, f64::max);
                top * power.unwrap_or(1.0)
            }
            OperatorExpr::Multiplication { .. } => 0.0,
            OperatorExpr::Product { factors } => factors.iter().map(|f| f.order()).sum::<Result<f64>>()?,
            OperatorExpr::Sum { terms } => terms
                .iter()
                .map(|t| t.order())
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max),
            OperatorExpr::Scaled { op, .. } => op.order()?,
            OperatorExpr::Matrix { order, .. } => *order,
        })
    }

    /// Bandwidth of the exact (infinite) matrix.
    pub fn bandwidth(&self) -> usize {
        match self {
            OperatorExpr::Multiplier { .. } => 0,
            OperatorExpr::Multiplication { .. } => self.trig_poly().max_mode() as usize,
            OperatorExpr::Product { factors } => factors.iter().map(|f| f.bandwidth()).sum(),
            OperatorExpr::Sum { terms } => terms.iter().map(|t| t.bandwidth()).max().unwrap_or(0),
            OperatorExpr::Scaled { op, .. } => op.bandwidth(),
            OperatorExpr::Matrix { entries, .. } => entries
                .iter()
                .map(|e| (e[0] - e[1]).abs() as usize)
                .max()
                .unwrap_or(0),
        }
    }

    fn trig_poly(&self) -> TrigPoly {
        match self {
            OperatorExpr::Multiplication { trig, modes } => {
                let t: Vec<(i64, f64, f64)> = trig.iter().map(|e| (e[0].round() as i64, e[1], e[2])).collect();
                let mut p = TrigPoly::from_cos_sin(&t);
                for m in modes {
                    p.add_mode(m[0].round() as i64, C64::new(m[1], m[2]));
                }
                p
            }
            _ => TrigPoly::zero(),
        }
    }

    /// True when the literal is a Fourier multiplier (diagonal matrix).
    pub fn is_multiplier(&self) -> bool {
        match self {
            OperatorExpr::Multiplier { .. } => true,
            OperatorExpr::Product { factors } => factors.iter().all(|f| f.is_multiplier()),
            OperatorExpr::Sum { terms } => terms.iter().all(|t| t.is_multiplier()),
            OperatorExpr::Scaled { op, .. } => op.is_multiplier(),
            _ => false,
        }
    }

    /// Value of a multiplier literal at Fourier mode n.
    pub fn multiplier_at(&self, n: i64) -> Result<C64> {
        match self {
            OperatorExpr::Multiplier { coeffs, power } => multiplier_value(&multiplier_components(coeffs)?, *power, n),
            OperatorExpr::Product { factors } => factors.iter().try_fold(ONE, |acc, f| Ok(acc * f.multiplier_at(n)?)),
            OperatorExpr::Sum { terms } => terms.iter().try_fold(ZERO, |acc, t| Ok(acc + t.multiplier_at(n)?)),
            OperatorExpr::Scaled { factor, op } => Ok(C64::new(factor[0], factor[1]) * op.multiplier_at(n)?),
            _ => Err(Error::InvalidInput("not a Fourier multiplier".into())),
        }
    }

    /// Matrix of the operator on modes [-cutoff, cutoff]. Products are formed
    /// at an enlarged cutoff and restricted, so the section is exact.
    pub fn quantize(&self, cutoff: usize) -> Result<SpectralOperator> {
        let m = self.quantize_matrix(cutoff)?;
        let order = self.order()?;
        let herm = {
            let adj = m.adjoint();
            let scale = m.max_abs().max(1.0);
            m.lin_comb(ONE, &adj, -ONE).max_abs() <= 1e-14 * scale
        };
        SpectralOperator::new(cutoff, Space::Plain, m, order, Parity::Even, herm)
    }

    fn quantize_matrix(&self, cutoff: usize) -> Result<OpMatrix> {
        let dim = 2 * cutoff + 1;
        let n0 = cutoff as i64;
        Ok(match self {
            OperatorExpr::Multiplier { .. } => {
                let diag = (0..dim as i64).map(|i| self.multiplier_at(i - n0)).collect::<Result<Vec<_>>>()?;
                OpMatrix::Banded(BandMatrix::from_diagonal(&diag))
            }
            OperatorExpr::Multiplication { .. } => {
                let p = self.trig_poly();
                let bw = p.max_mode() as usize;
                let mut b = BandMatrix::zeros(dim, bw);
                for i in 0..dim {
                    for j in b.row_range(i) {
                        b.set(i, j, p.coeff(i as i64 - j as i64));
                    }
                }
                OpMatrix::Banded(b)
            }
            OperatorExpr::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::Parse("product needs at least one factor".into()));
                }
                let ext = cutoff + self.bandwidth();
                let mut acc = factors[0].quantize_matrix(ext)?;
                for f in &factors[1..] {
                    acc = acc.mul(&f.quantize_matrix(ext)?);
                }
                restrict(&acc, ext, cutoff)
            }
            OperatorExpr::Sum { terms } => {
                let mut acc = OpMatrix::Banded(BandMatrix::zeros(dim, 0));
                for t in terms {
                    acc = acc.lin_comb(ONE, &t.quantize_matrix(cutoff)?, ONE);
                }
                acc
            }
            OperatorExpr::Scaled { factor, op } => op.quantize_matrix(cutoff)?.scale(C64::new(factor[0], factor[1])),
            OperatorExpr::Matrix { entries, .. } => {
                let bw = self.bandwidth();
                let mut b = BandMatrix::zeros(dim, bw);
                for e in entries {
                    let (m, n) = (e[0].round() as i64, e[1].round() as i64);
                    if m.abs() <= n0 && n.abs() <= n0 {
                        let (i, j) = ((m + n0) as usize, (n + n0) as usize);
                        b.set(i, j, b.get(i, j) + C64::new(e[2], e[3]));
                    }
                }
                OpMatrix::Banded(b)
            }
        })
    }

    /// Classical symbol, expanded `depth` degrees below the leading order.
    pub fn symbol(&self, depth: u32) -> Result<ClassicalSymbol> {
        let order = self.order()?;
        let floor = order - depth as f64;
        Ok(match self {
            OperatorExpr::Multiplier { coeffs, power } => {
                let comps = multiplier_components(coeffs)?;
                match power {
                    None => ClassicalSymbol::exact(
                        comps
                            .iter()
                            .map(|&(d, p, m)| SymbolComponent {
                                degree: d,
                                plus: TrigPoly::constant(C64::from(p)),
                                minus: TrigPoly::constant(C64::from(m)),
                            })
                            .collect(),
                    ),
                    Some(pw) => {
                        let plus: Vec<(f64, f64)> = comps.iter().map(|c| (c.0, c.1)).collect();
                        let minus: Vec<(f64, f64)> = comps.iter().map(|c| (c.0, c.2)).collect();
                        let sp = power_series_side(&plus, *pw, depth)?;
                        let sm = power_series_side(&minus, *pw, depth)?;
                        let mut out = Vec::new();
                        for (d, c) in &sp {
                            out.push(SymbolComponent { degree: *d, plus: TrigPoly::constant(*c), minus: TrigPoly::zero() });
                        }
                        for (d, c) in &sm {
                            out.push(SymbolComponent { degree: *d, plus: TrigPoly::zero(), minus: TrigPoly::constant(*c) });
                        }
                        ClassicalSymbol::new(out, floor)
                    }
                }
            }
            OperatorExpr::Multiplication { .. } => ClassicalSymbol::multiplication(self.trig_poly()),
            OperatorExpr::Product { factors } => {
                // Intermediate products must reach further down when later
                // factors have negative order.
                let extra: f64 = factors.iter().map(|f| f.order().map(|o| o.abs().ceil())).sum::<Result<f64>>()?;
                let inner_depth = depth + extra as u32;
                let mut acc = ClassicalSymbol::identity();
                for f in factors {
                    acc = acc.compose(&f.symbol(inner_depth)?, floor - extra);
                }
                acc.truncate(floor)
            }
            OperatorExpr::Sum { terms } => {
                let mut acc = ClassicalSymbol::zero();
                for t in terms {
                    acc = acc.add(&t.symbol(depth)?);
                }
                acc.truncate(floor)
            }
            OperatorExpr::Scaled { factor, op } => op.symbol(depth)?.scale(C64::new(factor[0], factor[1])),
            OperatorExpr::Matrix { .. } => {
                return Err(Error::UnsupportedSymbol("explicit matrices carry no symbol".into()));
            }
        })
    }
}

/// Central block of a matrix quantized at cutoff `from`.
fn restrict(m: &OpMatrix, from: usize, to: usize) -> OpMatrix {
    let off = from - to;
    let dim = 2 * to + 1;
    match m {
        OpMatrix::Banded(b) => {
            let mut out = BandMatrix::zeros(dim, b.bandwidth());
            for i in 0..dim {
                for j in out.row_range(i) {
                    out.set(i, j, b.get(i + off, j + off));
                }
            }
            OpMatrix::Banded(out)
        }
        OpMatrix::Dense(d) => OpMatrix::Dense(d.view((off, off), (dim, dim)).into_owned()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(op: &SpectralOperator, m: i64, n: i64) -> C64 {
        op.get(op.mode_index(m), op.mode_index(n))
    }

    #[test]
    fn quantize_identity_and_laplacian() {
        let i = OperatorExpr::identity().quantize(5).unwrap();
        assert_eq!(i.bandwidth(), 0);
        assert!(i.matrix().is_identity());
        let q = OperatorExpr::laplacian_plus_one().quantize(5).unwrap();
        for n in -5..=5 {
            assert_eq!(entry(&q, n, n), C64::from((n * n + 1) as f64));
        }
        assert!(q.is_self_adjoint());
    }

    #[test]
    fn cosine_has_half_entries_off_diagonal() {
        let c = OperatorExpr::cos(1).quantize(4).unwrap();
        assert_eq!(c.bandwidth(), 1);
        for m in -4i64..=4 {
            for n in -4i64..=4 {
                let want = if (m - n).abs() == 1 { 0.5 } else { 0.0 };
                assert_eq!(entry(&c, m, n), C64::from(want));
            }
        }
    }

    #[test]
    fn product_literal_is_exact_at_the_edges() {
        let cc = OperatorExpr::product(vec![OperatorExpr::cos(1), OperatorExpr::cos(1)]).quantize(3).unwrap();
        let c2 = OperatorExpr::Multiplication { trig: vec![[0.0, 0.5, 0.0], [2.0, 0.5, 0.0]], modes: vec![] }
            .quantize(3)
            .unwrap();
        assert!((cc.to_dense() - c2.to_dense()).norm() < 1e-15);
    }

    #[test]
    fn inverse_square_root_symbol() {
        let a = OperatorExpr::laplacian_plus_one().power_of(-0.5).unwrap();
        assert_eq!(a.order().unwrap(), -1.0);
        let s = a.symbol(6).unwrap();
        let c = s.component(-1.0).unwrap();
        assert_eq!(c.plus.mean(), C64::from(1.0));
        assert_eq!(c.minus.mean(), C64::from(1.0));
        // next term -1/2 |ξ|^{-3}
        assert!((s.component(-3.0).unwrap().plus.mean().re + 0.5).abs() < 1e-15);
        assert_eq!(s.residue().unwrap(), C64::from(2.0));
        // quantized values are exact
        let q = a.quantize(3).unwrap();
        assert!((entry(&q, 2, 2).re - 5f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn sign_multiplier_and_shift() {
        let s = OperatorExpr::Multiplier { coeffs: vec![vec![0.0, 1.0, -1.0]], power: None }.quantize(2).unwrap();
        let d: Vec<f64> = s.matrix().diagonal().iter().map(|v| v.re).collect();
        assert_eq!(d, vec![-1.0, -1.0, 0.0, 1.0, 1.0]);
        let sh = OperatorExpr::Multiplier { coeffs: vec![vec![1.0, 1.0], vec![0.0, 0.5]], power: None }.quantize(1).unwrap();
        let d: Vec<f64> = sh.matrix().diagonal().iter().map(|v| v.re).collect();
        assert_eq!(d, vec![-0.5, 0.5, 1.5]);
    }

    #[test]
    fn matrix_literal_has_no_symbol() {
        let m = OperatorExpr::Matrix { entries: vec![[0.0, 1.0, 1.0, 0.0]], order: 0.0 };
        assert!(matches!(m.symbol(4), Err(Error::UnsupportedSymbol(_))));
        assert_eq!(m.quantize(2).unwrap().bandwidth(), 1);
    }

    #[test]
    fn literal_parses_from_json() {
        let j = r#"{"kind":"product","factors":[{"kind":"multiplication","trig":[[1,1,0]]},{"kind":"multiplier","coeffs":[[2,1],[0,1]],"power":-0.5}]}"#;
        let e: OperatorExpr = serde_json::from_str(j).unwrap();
        assert_eq!(e.order().unwrap(), -1.0);
        let bad = r#"{"kind":"multiplier","coefs":[[0,1]]}"#;
        let err = serde_json::from_str::<OperatorExpr>(bad).unwrap_err().to_string();
        assert!(err.contains("coefs"), "{err}");
    }
}

//! Task execution: each task maps to one or more report rows.

use super::report::Row;
use super::scenario::{CutoffPolicy, Scenario, TaskKind, TaskSpec};
use crate::acsalg::{acs_identities, trace_anchors, ACPoint, TraceConvention};
use crate::detbundle::{
    bf_connection_form, findim_det_curvature, lemma2_commutator_check, lemma2_derivative_check, prop4_check, theorem3_check, transgression_check, FamilyLiteral,
    FourierFamily, MatrixFamily, Point, WeightFamily,
};
use crate::error::{Error, Result};
use crate::jlo::{prop_b3_expansion, thm_b4_coefficient, trace_form, trace_form_quadrature, volterra_oracle, volterra_sum, CoefficientRequest, Grading, TraceForm};
use crate::linalg::C64;
use crate::renorm::{fit_expansion, AsymptoticExpansion, ExponentLattice, FitOptions, Precision};
use crate::specops::{OperatorExpr, SpectralOperator, Weight, DEFAULT_SYMBOL_DEPTH};
use crate::traces::{coefficient_laws, heat_trace, weighted_trace, wodzicki_residue_symbol, wodzicki_residue_zeta, HeatSeries, TraceOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shared settings for one scenario run.
pub struct Context<'a> {
    pub scenario: &'a Scenario,
    pub precision: Option<Precision>,
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Numerical(format!("log-log slope needs ≥ 2 positive points, got x = {x:?}, y = {y:?}")));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

impl Context<'_> {
    pub fn trace_options(&self) -> Result<TraceOptions> {
        let mut o = TraceOptions::default().with_grid(self.scenario.eps_grid.points()?);
        if let CutoffPolicy::TailTolerance(t) = self.scenario.cutoff {
            o.tail_tolerance = t;
        }
        if let Some(p) = self.precision {
            o.fit.precision = p;
        }
        Ok(o)
    }

    fn eps_min(&self) -> Result<f64> {
        Ok(self.scenario.eps_grid.points()?[0])
    }

    fn op(&self, name: &str) -> Result<&OperatorExpr> {
        self.scenario.operators.get(name).ok_or_else(|| Error::InvalidInput(format!("unknown operator {name:?}")))
    }

    fn weight_expr(&self, name: &str) -> Result<&OperatorExpr> {
        self.scenario.weights.get(name).ok_or_else(|| Error::InvalidInput(format!("unknown weight {name:?}")))
    }

    /// Cutoff for heat sums against `weight` with entries growing like
    /// |n|^growth, down to ε = eps.
    fn cutoff(&self, spec: &TaskSpec, weight: &OperatorExpr, growth: f64, eps: f64) -> Result<usize> {
        if let Some(n) = spec.cutoff {
            return Ok(n);
        }
        match self.scenario.cutoff {
            CutoffPolicy::N(n) => Ok(n),
            CutoffPolicy::TailTolerance(t) => Weight::cutoff_for_tail(weight, eps, growth.max(0.0), t),
        }
    }

    fn family_cutoff(&self, spec: &TaskSpec, lit: &FamilyLiteral, b: Point, eps: f64) -> Result<usize> {
        if let Some(n) = spec.cutoff {
            return Ok(n);
        }
        match self.scenario.cutoff {
            CutoffPolicy::N(n) => Ok(n),
            CutoffPolicy::TailTolerance(t) => FourierFamily::cutoff_for_tail(lit, b, eps, t),
        }
    }

    pub fn run_task(&self, spec: &TaskSpec) -> Result<Vec<Row>> {
        let id = spec.id.as_str();
        let mu = self.scenario.mu;
        let seed = self.scenario.seed;
        let mut rows = Vec::new();
        match &spec.kind {
            TaskKind::Lemma1Findim { rank, trials, b, fd_step, tolerance, slope_steps, slope_tolerance } => {
                for k in 0..*trials as u64 {
                    let fam = MatrixFamily::random(*rank, seed + k, *fd_step);
                    let (od, ms) = findim_det_curvature(&fam, *b, *fd_step)?;
                    rows.push(Row::absolute(id, format!("curvature_defect[seed={}]", seed + k), od, ms, *tolerance));
                }
                if !slope_steps.is_empty() {
                    let fam = MatrixFamily::random(*rank, seed, *fd_step);
                    let d: Vec<f64> = slope_steps
                        .iter()
                        .map(|&h| findim_det_curvature(&fam, *b, h).map(|(od, ms)| (od - ms).norm()))
                        .collect::<Result<_>>()?;
                    let s = loglog_slope(slope_steps, &d)?;
                    rows.push(Row::absolute(id, "fd_order", c(s), c(2.0), *slope_tolerance));
                }
            }
            TaskKind::HeatAnchor { weight, tolerance, constant_tolerance, operator, indices, log_powers, coefficient_tolerance } => {
                let opts = self.trace_options()?;
                let wexpr = self.weight_expr(weight)?;
                let n = self.cutoff(spec, wexpr, 0.0, self.eps_min()?)?;
                let q = Weight::from_expr(wexpr, n)?;
                let series = HeatSeries::identity(&q, false);
                let lattice = series.lattice()?;
                let exp = series.expansion(&opts)?;
                let lead = exp.power_coefficient(lattice.lambda(0));
                let predicted = coefficient_laws::predicted_alpha(&OperatorExpr::identity(), wexpr, &lattice, 0)?;
                rows.push(Row::relative(id, "leading_coefficient", lead, predicted, *tolerance, 1e-300));
                rows.push(Row::absolute(id, "constant_term", exp.constant_term(), c(0.0), *constant_tolerance));
                rows.push(Row::info(id, "cutoff", c(n as f64)));
                if let Some(name) = operator {
                    let aexpr = self.op(name)?;
                    let n = self.cutoff(spec, wexpr, aexpr.order()?, self.eps_min()?)?;
                    let q = Weight::from_expr(wexpr, n)?;
                    let series = HeatSeries::new(&aexpr.quantize(n)?, &q)?;
                    let lattice = series.lattice()?;
                    let exp = series.expansion(&opts)?;
                    for &j in indices {
                        let lam = lattice.lambda(j);
                        let p = coefficient_laws::predicted_alpha(aexpr, wexpr, &lattice, j)?;
                        rows.push(Row::relative(id, format!("alpha[lambda={lam}]"), exp.power_coefficient(lam), p, *coefficient_tolerance, 1.0));
                    }
                    for &k in log_powers {
                        let p = coefficient_laws::predicted_beta(aexpr, wexpr, k)?;
                        rows.push(Row::relative(id, format!("beta[k={k}]"), exp.log_coefficient(k as f64), p, *coefficient_tolerance, 1.0));
                    }
                }
            }
            TaskKind::ResidueCalibration { operator, weight, reference, tolerance } => {
                let opts = self.trace_options()?;
                let aexpr = self.op(operator)?;
                let wexpr = self.weight_expr(weight)?;
                let sym = wodzicki_residue_symbol(&aexpr.symbol(DEFAULT_SYMBOL_DEPTH)?)?;
                rows.push(Row::relative(id, "residue_symbol", sym, c(*reference), *tolerance, 1e-300));
                let n = self.cutoff(spec, wexpr, aexpr.order()?, self.eps_min()?)?;
                let q = Weight::from_expr(wexpr, n)?;
                let z = wodzicki_residue_zeta(&aexpr.quantize(n)?, &q, &opts)?.value;
                rows.push(Row::relative(id, "residue_zeta", z, c(*reference), *tolerance, 1e-300));
            }
            TaskKind::Lemma2Commutator { alpha, beta, weight, tolerance, floor, expect_zero, zero_tolerance } => {
                let opts = self.trace_options()?;
                let (ae, be) = (self.op(alpha)?, self.op(beta)?);
                let wexpr = self.weight_expr(weight)?;
                let n = self.cutoff(spec, wexpr, ae.order()? + be.order()?, self.eps_min()?)?;
                let q = Weight::from_expr(wexpr, n)?;
                let pair = lemma2_commutator_check(&ae.quantize(n)?, &be.quantize(n)?, &q, mu, &opts)?;
                rows.push(Row::with_defect(id, "commutator_identity", pair.lhs, pair.rhs, pair.relative(*floor), *tolerance));
                if *expect_zero {
                    rows.push(Row::absolute(id, "lhs", pair.lhs, c(0.0), *zero_tolerance));
                    rows.push(Row::absolute(id, "rhs", pair.rhs, c(0.0), *zero_tolerance));
                }
            }
            TaskKind::Lemma2Derivative { weight, alpha, shift, b, direction, fd_step, tolerance } => {
                let opts = self.trace_options()?;
                let ae = self.op(alpha)?;
                let wexpr = self.weight_expr(weight)?.clone();
                let n = self.cutoff(spec, &wexpr, ae.order()?, self.eps_min()?)?;
                let a = ae.quantize(n)?;
                let sh = *shift;
                let wf = move |p: Point| -> Result<Weight> {
                    let s = sh[0] * p[0] + sh[1] * p[1];
                    let e = OperatorExpr::Sum { terms: vec![wexpr.clone(), OperatorExpr::Scaled { factor: [s, 0.0], op: Box::new(OperatorExpr::identity()) }] };
                    Weight::from_expr(&e, n)
                };
                let af = move |_: Point| -> Result<SpectralOperator> { Ok(a.clone()) };
                let fam = WeightFamily { weight: &wf, alpha: &af, fd_step: *fd_step };
                let pair = lemma2_derivative_check(&fam, *b, *direction, mu, &opts)?;
                rows.push(Row::with_defect(id, "derivative_identity", pair.lhs, pair.rhs, pair.relative(1e-12), *tolerance));
            }
            TaskKind::Prop4 { family, b, eps, tolerance, odd_tolerance } => {
                let lit = family.clone().unwrap_or_else(FamilyLiteral::shipped);
                let emin = eps.iter().copied().fold(f64::INFINITY, f64::min);
                let n = self.family_cutoff(spec, &lit, *b, emin)?;
                let fam = FourierFamily::new(&lit, n)?;
                rows.push(Row::info(id, "cutoff", c(n as f64)));
                for r in prop4_check(&fam, *b, eps)? {
                    let e = r.eps;
                    rows.push(Row::info(id, format!("omega_det[eps={e}]"), r.lhs));
                    rows.push(Row::info(id, format!("r1[eps={e}]"), r.r1));
                    rows.push(Row::info(id, format!("trace_form_term[eps={e}]"), r.jlo));
                    rows.push(Row::with_defect(id, format!("curvature_identity[eps={e}]"), r.lhs, -r.r1 + r.jlo, r.relative_defect, *tolerance));
                    rows.push(Row::absolute(id, format!("odd_component[eps={e}]"), c(r.odd_component), c(0.0), *odd_tolerance));
                }
            }
            TaskKind::Transgression { family, b, eps1, eps2, tolerance } => {
                let lit = family.clone().unwrap_or_else(FamilyLiteral::shipped);
                let n = self.family_cutoff(spec, &lit, *b, *eps1)?;
                let fam = FourierFamily::new(&lit, n)?;
                let r = transgression_check(&fam, *b, *eps1, *eps2)?;
                rows.push(Row::relative(id, "transgression", r.lhs, r.rhs, *tolerance, 1e-12));
                rows.push(Row::info(id, "degree0_defect", c(r.degree0_defect)));
            }
            TaskKind::ConnectionForms { family, b, eps, tolerance } => {
                let lit = family.clone().unwrap_or_else(FamilyLiteral::shipped);
                let n = self.family_cutoff(spec, &lit, *b, *eps)?;
                let fam = FourierFamily::new(&lit, n)?;
                for i in 0..2 {
                    let f = bf_connection_form(&fam, *b, i, *eps)?;
                    rows.push(Row::relative(id, format!("connection_form[{}]", i + 1), f.split, f.direct, *tolerance, 1e-6));
                }
            }
            TaskKind::Theorem3 { family, b, top, tolerance } => {
                let lit = family.clone().unwrap_or_else(FamilyLiteral::shipped);
                let mut opts = self.trace_options()?;
                opts.fit = FitOptions { top_exponent: Some(*top), ..opts.fit };
                let n = self.family_cutoff(spec, &lit, *b, self.eps_min()?)?;
                let fam = FourierFamily::new(&lit, n)?;
                let r = theorem3_check(&fam, *b, mu, &opts)?;
                rows.push(Row::info(id, "cutoff", c(n as f64)));
                rows.push(Row::info(id, "omega_det_renormalized", r.omega_det));
                rows.push(Row::info(id, "r1_renormalized", r.r1));
                rows.push(Row::info(id, "obstruction_residue", r.obstruction_residue));
                rows.push(Row::info(id, "obstruction_trace_form", r.obstruction_trace_form));
                rows.push(Row::relative(id, "renormalized_identity", r.omega_det + r.r1, r.obstruction_residue, *tolerance, 1e-12));
                rows.push(Row::relative(id, "obstruction_routes", r.obstruction_trace_form, r.obstruction_residue, *tolerance, 1e-12));
                rows.push(Row::info(id, "log_coefficient_omega", r.log_coefficients[0]));
                rows.push(Row::info(id, "log_coefficient_r1", r.log_coefficients[1]));
            }
            TaskKind::TraceFormQuadrature { operators, weight, eps, grading, nodes, cutoff, tolerance } => {
                let q = Weight::from_expr(self.weight_expr(weight)?, *cutoff)?;
                let ops: Vec<SpectralOperator> = operators.iter().map(|o| self.op(o)?.quantize(*cutoff)).collect::<Result<_>>()?;
                let dd = trace_form(&ops, &q, *eps, *grading)?;
                let quad = trace_form_quadrature(&ops, &q, *eps, *grading, *nodes)?;
                rows.push(Row::absolute(id, format!("trace_form[k={}]", ops.len() - 1), dd, quad, *tolerance));
            }
            TaskKind::VolterraOrder { weight, perturbation, eps, orders, cutoff, grading, tolerance } => {
                let q0 = Weight::from_expr(self.weight_expr(weight)?, *cutoff)?;
                let q1 = self.op(perturbation)?.quantize(*cutoff)?;
                let exact: Vec<C64> = eps.iter().map(|&e| volterra_oracle(&q0, &q1, e, *grading)).collect::<Result<_>>()?;
                for &k in orders {
                    let err: Vec<f64> = eps
                        .iter()
                        .zip(&exact)
                        .map(|(&e, x)| volterra_sum(&q0, &q1, e, k, *grading).map(|v| (v - x).norm()))
                        .collect::<Result<_>>()?;
                    let s = loglog_slope(eps, &err)?;
                    rows.push(Row::absolute(id, format!("truncation_order[K={k}]"), c(s), c(k as f64 + 1.0), *tolerance));
                }
            }
            TaskKind::PropB3Slope { operators, weight, limits, eps, min_slope, convention, grading, tolerance } => {
                let wexpr = self.weight_expr(weight)?;
                let order: f64 = operators.iter().map(|o| self.op(o)?.order()).sum::<Result<f64>>()?;
                let emin = eps.iter().copied().fold(f64::INFINITY, f64::min);
                let n = self.cutoff(spec, wexpr, order, emin)?;
                let q = Weight::from_expr(wexpr, n)?;
                let ops: Vec<SpectralOperator> = operators.iter().map(|o| self.op(o)?.quantize(n)).collect::<Result<_>>()?;
                let d: Vec<f64> = eps
                    .iter()
                    .map(|&e| Ok((prop_b3_expansion(&ops, &q, e, limits, *grading, *convention)? - trace_form(&ops, &q, e, *grading)?).norm()))
                    .collect::<Result<_>>()?;
                let s = loglog_slope(eps, &d)?;
                rows.push(Row::with_defect(id, "defect_slope", c(s), c(*min_slope), (min_slope - s).max(0.0), *tolerance));
            }
            TaskKind::ThmB4 { operators, weight, indices, allow_nonnegative, convention, route, tolerance } => {
                let opts = self.trace_options()?;
                let wexpr = self.weight_expr(weight)?;
                let exprs: Vec<OperatorExpr> = operators.iter().map(|o| self.op(o).cloned()).collect::<Result<_>>()?;
                let order: f64 = exprs.iter().map(|e| e.order()).sum::<Result<f64>>()?;
                let n = self.cutoff(spec, wexpr, order, self.eps_min()?)?;
                let q = Weight::from_expr(wexpr, n)?;
                let ops: Vec<SpectralOperator> = exprs.iter().map(|e| e.quantize(n)).collect::<Result<_>>()?;
                let tf = TraceForm::new(&ops, &q, Grading::Plain)?;
                let lattice = tf.lattice()?;
                let exp = tf.expansion(&opts)?;
                for &j in indices {
                    let lam = lattice.lambda(j);
                    let req = CoefficientRequest {
                        ops: &exprs,
                        weight: wexpr,
                        j,
                        convention: *convention,
                        route: *route,
                        cutoff: n,
                        trace: opts.clone(),
                        allow_nonnegative: *allow_nonnegative,
                    };
                    let p = thm_b4_coefficient(&req)?;
                    rows.push(Row::relative(id, format!("coefficient[lambda={lam}]"), exp.power_coefficient(lam), p, *tolerance, 1e-300));
                }
            }
            TaskKind::RenormSynthetic { terms, trials, mus, tolerance } => {
                rows.extend(renorm_synthetic(id, *terms, *trials, mus, *tolerance, seed, self)?);
            }
            TaskKind::AcsIdentities { trials, seed: s, tolerance } => {
                let r = acs_identities(*trials, s.unwrap_or(seed))?;
                for (q, v) in [
                    ("lemma10_plus_identity", r.plus_identity),
                    ("theta_plus_compatibility", r.theta_plus_compatibility),
                    ("minus_curvature_antisymmetry", r.minus_antisymmetry),
                    ("minus_curvature_tangency", r.minus_tangency),
                    ("minus_curvature_vs_connection", r.minus_oracle),
                    ("prop11_pattern", r.prop11_pattern),
                    ("even_odd_parity", r.parity),
                    ("cauchy_riemann_split", r.cauchy_riemann),
                ] {
                    rows.push(Row::absolute(id, q, c(v), c(0.0), *tolerance));
                }
                let p = ACPoint::standard();
                let cal = trace_anchors(&p, TraceConvention::Calibrated)?;
                rows.push(Row::absolute(id, "calibrated_trace(I)", cal.identity, c(1.0), *tolerance));
                rows.push(Row::absolute(id, "calibrated_trace(J)", cal.j, C64::new(0.0, 1.0), *tolerance));
                rows.push(Row::absolute(id, "calibrated_anchors_random_J", c(if r.calibrated_anchors { 1.0 } else { 0.0 }), c(1.0), 0.5));
                let lit = trace_anchors(&p, TraceConvention::Literal)?;
                rows.push(Row::info(id, "literal_trace(I)", lit.identity).note(if lit.satisfied { "meets anchors" } else { "misses anchors" }));
                rows.push(Row::info(id, "literal_trace(J)", lit.j));
                rows.push(Row::info(id, "max_plus_part_trace", c(r.max_plus_trace)));
            }
            TaskKind::WeightedTrace { operator, weight, mu: m, reference, tolerance } => {
                let opts = self.trace_options()?;
                let (ae, wexpr) = (self.op(operator)?, self.weight_expr(weight)?);
                let n = self.cutoff(spec, wexpr, ae.order()?, self.eps_min()?)?;
                let q = Weight::from_expr(wexpr, n)?;
                let v = weighted_trace(&ae.quantize(n)?, &q, m.unwrap_or(mu), &opts)?.value;
                rows.push(match reference {
                    Some([re, im]) => Row::relative(id, "weighted_trace", v, C64::new(*re, *im), *tolerance, 1e-12),
                    None => Row::info(id, "weighted_trace", v),
                });
            }
            TaskKind::HeatTrace { operator, weight, eps, reference, tolerance } => {
                let (ae, wexpr) = (self.op(operator)?, self.weight_expr(weight)?);
                let n = self.cutoff(spec, wexpr, ae.order()?, *eps)?;
                let q = Weight::from_expr(wexpr, n)?;
                let v = heat_trace(&ae.quantize(n)?, &q, *eps)?.value;
                rows.push(match reference {
                    Some([re, im]) => Row::relative(id, "heat_trace", v, C64::new(*re, *im), *tolerance, 1e-300),
                    None => Row::info(id, "heat_trace", v),
                });
            }
        }
        Ok(rows)
    }
}

/// Random expansions on the lattice λ_j = (j − 1)/2 with top exponent 2:
/// powers −½, ½, 3/2, integer powers 0, 1, 2 and logs at 0, 1, 2.
fn renorm_synthetic(id: &str, terms: usize, trials: usize, mus: &[f64], tol: f64, seed: u64, ctx: &Context) -> Result<Vec<Row>> {
    const SLOTS: usize = 9;
    if terms == 0 || terms > SLOTS {
        return Err(Error::InvalidInput(format!("terms must be in 1..={SLOTS}, got {terms}")));
    }
    let lattice = ExponentLattice::new(2, 1, 0.0)?;
    let opts = ctx.trace_options()?;
    let fit_opts = FitOptions { top_exponent: Some(2.0), ..opts.fit.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for t in 0..trials {
        let mut truth = AsymptoticExpansion::new(lattice, 5);
        let mut slots: Vec<usize> = (0..SLOTS).collect();
        // partial Fisher–Yates for the nonzero slots
        for i in 0..terms {
            let k = rng.gen_range(i..SLOTS);
            slots.swap(i, k);
        }
        for &s in &slots[..terms] {
            let v = C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            match s {
                0..=2 => {
                    truth.set_a(2 * s as u32, v);
                }
                3..=5 => {
                    truth.set_c((s - 3) as u32, v);
                }
                _ => {
                    truth.set_b(2 * (s - 6) as u32 + 1, v)?;
                }
            }
        }
        let samples: Vec<(f64, C64)> = opts.grid.iter().map(|&e| (e, truth.evaluate(e))).collect();
        let fit = fit_expansion(&samples, &lattice, &fit_opts)?;
        let mut worst: f64 = 0.0;
        for lam in [-0.5, 0.5, 1.5, 0.0, 1.0, 2.0] {
            worst = worst.max((fit.power_coefficient(lam) - truth.power_coefficient(lam)).norm());
        }
        for lam in [0.0, 1.0, 2.0] {
            worst = worst.max((fit.log_coefficient(lam) - truth.log_coefficient(lam)).norm());
        }
        rows.push(Row::absolute(id, format!("max_coefficient_error[trial={t}]"), c(worst), c(0.0), tol));
        for &m in mus {
            rows.push(Row::absolute(id, format!("lim[trial={t}][mu={m}]"), fit.renormalized_limit(m), truth.renormalized_limit(m), tol));
        }
        if mus.len() >= 2 {
            let (m0, m1) = (mus[0], mus[mus.len() - 1]);
            let slope = (fit.renormalized_limit(m1) - fit.renormalized_limit(m0)) / (m1 - m0);
            rows.push(Row::absolute(id, format!("lim_slope[trial={t}]"), slope, -truth.log_coefficient(0.0), tol));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.5)).collect();
        assert!((loglog_slope(&x, &y).unwrap() - 2.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 1.0]).is_err());
    }
}

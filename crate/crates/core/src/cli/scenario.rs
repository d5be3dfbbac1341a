//! Scenario files: operators, weights, sampling and an ordered task list.

use crate::detbundle::FamilyLiteral;
use crate::error::{Error, Result};
use crate::jlo::{Grading, MomentConvention, ResidueRoute};
use crate::renorm::geometric_grid;
use crate::specops::OperatorExpr;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub eps_grid: EpsGrid,
    #[serde(default)]
    pub cutoff: CutoffPolicy,
    #[serde(default)]
    pub operators: BTreeMap<String, OperatorExpr>,
    #[serde(default)]
    pub weights: BTreeMap<String, OperatorExpr>,
    pub tasks: Vec<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsGrid {
    pub min: f64,
    pub max: f64,
    pub points_per_decade: f64,
}

impl Default for EpsGrid {
    fn default() -> Self {
        Self { min: 1e-4, max: 1e-1, points_per_decade: 24.0 }
    }
}

impl EpsGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.min > 0.0 && self.max > self.min && self.points_per_decade > 0.0) {
            return Err(Error::InvalidInput(format!("eps_grid: need 0 < min < max and points_per_decade > 0, got {self:?}")));
        }
        let n = ((self.max / self.min).log10() * self.points_per_decade).round() as usize + 1;
        geometric_grid(self.min, self.max, n.max(2))
    }
}

/// Fixed cutoff N, or the smallest N whose heat-tail bound at the smallest
/// ε is below the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffPolicy {
    N(usize),
    TailTolerance(f64),
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy::TailTolerance(1e-12)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    /// Fixed cutoff for this task, overriding the scenario policy.
    #[serde(default)]
    pub cutoff: Option<usize>,
    #[serde(flatten)]
    pub kind: TaskKind,
}

fn shipped() -> Option<FamilyLiteral> {
    None
}

macro_rules! default_fns {
    ($($name:ident: $t:ty = $v:expr;)*) => { $(fn $name() -> $t { $v })* };
}

default_fns! {
    d_rank: usize = 4;
    d_trials20: usize = 20;
    d_b_small: [f64; 2] = [0.2, -0.1];
    d_b_family: [f64; 2] = [0.3, -0.2];
    d_fd_step: f64 = 1e-4;
    d_finite_rank_tol: f64 = 1e-6;
    d_slope_steps: Vec<f64> = vec![4e-2, 2e-2, 1e-2];
    d_slope_tol: f64 = 0.2;
    d_rel6: f64 = 1e-6;
    d_abs8: f64 = 1e-8;
    d_rel3: f64 = 1e-3;
    d_rel4: f64 = 1e-4;
    d_two: f64 = 2.0;
    d_floor: f64 = 1e-8;
    d_shift: [f64; 2] = [1.0, 0.0];
    d_b_deriv: [f64; 2] = [0.2, 0.0];
    d_fd3: f64 = 1e-3;
    d_cutoff_eps: Vec<f64> = vec![0.5, 0.1];
    d_odd_tol: f64 = 1e-10;
    d_eps1: f64 = 0.2;
    d_eps2: f64 = 0.5;
    d_half: f64 = 0.5;
    d_top4: f64 = 4.0;
    d_quad_eps: f64 = 0.3;
    d_nodes: usize = 24;
    d_quad_cutoff: usize = 8;
    d_volterra_eps: Vec<f64> = vec![1e-3, 2e-3, 5e-3, 1e-2];
    d_orders: Vec<usize> = vec![0, 1, 2, 3];
    d_b3_eps: Vec<f64> = vec![1e-2, 2e-2, 5e-2, 1e-1];
    d_slack: f64 = 0.05;
    d_terms: usize = 8;
    d_trials5: usize = 5;
    d_mus: Vec<f64> = vec![0.0, crate::linalg::EULER_GAMMA, 1.0];
    d_trials_acs: usize = 10_000;
    d_acs_tol: f64 = 1e-14;
}

/// One check. Tolerances are relative unless the field name says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskKind {
    /// Determinant curvature against −str of the bundle curvature on random
    /// finite-rank families, plus the finite-difference order.
    Lemma1Findim {
        #[serde(default = "d_rank")]
        rank: usize,
        #[serde(default = "d_trials20")]
        trials: usize,
        #[serde(default = "d_b_small")]
        b: [f64; 2],
        #[serde(default = "d_fd_step")]
        fd_step: f64,
        /// absolute
        #[serde(default = "d_finite_rank_tol")]
        tolerance: f64,
        #[serde(default = "d_slope_steps")]
        slope_steps: Vec<f64>,
        #[serde(default = "d_slope_tol")]
        slope_tolerance: f64,
    },
    /// Heat-trace coefficients of the weight itself, and optionally the
    /// residue law for the coefficients of an operator.
    HeatAnchor {
        weight: String,
        #[serde(default = "d_rel6")]
        tolerance: f64,
        #[serde(default = "d_abs8")]
        constant_tolerance: f64,
        #[serde(default)]
        operator: Option<String>,
        /// Lattice indices of non-integer exponents to compare.
        #[serde(default)]
        indices: Vec<u32>,
        /// Integer powers k whose ε^k log ε coefficients are compared.
        #[serde(default)]
        log_powers: Vec<u32>,
        /// Relative above unit magnitude, absolute below.
        #[serde(default = "d_rel3")]
        coefficient_tolerance: f64,
    },
    ResidueCalibration {
        operator: String,
        weight: String,
        #[serde(default = "d_two")]
        reference: f64,
        #[serde(default = "d_rel4")]
        tolerance: f64,
    },
    Lemma2Commutator {
        alpha: String,
        beta: String,
        weight: String,
        #[serde(default = "d_rel4")]
        tolerance: f64,
        /// relative defects use max(|lhs|, |rhs|, floor) as the scale
        #[serde(default = "d_floor")]
        floor: f64,
        /// also require both sides to vanish to `zero_tolerance`
        #[serde(default)]
        expect_zero: bool,
        #[serde(default = "d_rel6")]
        zero_tolerance: f64,
    },
    /// Family Q(b) = weight + (shift·b)·I with a fixed operator α.
    Lemma2Derivative {
        weight: String,
        alpha: String,
        #[serde(default = "d_shift")]
        shift: [f64; 2],
        #[serde(default = "d_b_deriv")]
        b: [f64; 2],
        #[serde(default)]
        direction: usize,
        #[serde(default = "d_fd3")]
        fd_step: f64,
        #[serde(default = "d_rel3")]
        tolerance: f64,
    },
    Prop4 {
        #[serde(default = "shipped")]
        family: Option<FamilyLiteral>,
        #[serde(default = "d_b_family")]
        b: [f64; 2],
        #[serde(default = "d_cutoff_eps")]
        eps: Vec<f64>,
        #[serde(default = "d_rel4")]
        tolerance: f64,
        /// absolute
        #[serde(default = "d_odd_tol")]
        odd_tolerance: f64,
    },
    Transgression {
        #[serde(default = "shipped")]
        family: Option<FamilyLiteral>,
        #[serde(default = "d_b_family")]
        b: [f64; 2],
        #[serde(default = "d_eps1")]
        eps1: f64,
        #[serde(default = "d_eps2")]
        eps2: f64,
        #[serde(default = "d_rel6")]
        tolerance: f64,
    },
    ConnectionForms {
        #[serde(default = "shipped")]
        family: Option<FamilyLiteral>,
        #[serde(default = "d_b_family")]
        b: [f64; 2],
        #[serde(default = "d_half")]
        eps: f64,
        #[serde(default = "d_rel6")]
        tolerance: f64,
    },
    /// Renormalized curvature identity and the two obstruction routes; uses
    /// the scenario grid, μ and cutoff.
    Theorem3 {
        #[serde(default = "shipped")]
        family: Option<FamilyLiteral>,
        #[serde(default = "d_b_family")]
        b: [f64; 2],
        #[serde(default = "d_top4")]
        top: f64,
        #[serde(default = "d_rel3")]
        tolerance: f64,
    },
    TraceFormQuadrature {
        operators: Vec<String>,
        weight: String,
        #[serde(default = "d_quad_eps")]
        eps: f64,
        #[serde(default)]
        grading: Grading,
        #[serde(default = "d_nodes")]
        nodes: usize,
        #[serde(default = "d_quad_cutoff")]
        cutoff: usize,
        /// absolute
        #[serde(default = "d_abs8")]
        tolerance: f64,
    },
    /// Log-log slope of the K-term Volterra truncation error, expected K + 1.
    VolterraOrder {
        weight: String,
        perturbation: String,
        #[serde(default = "d_volterra_eps")]
        eps: Vec<f64>,
        #[serde(default = "d_orders")]
        orders: Vec<usize>,
        #[serde(default = "d_quad_cutoff")]
        cutoff: usize,
        #[serde(default)]
        grading: Grading,
        /// absolute, on the slope
        #[serde(default = "d_slope_tol")]
        tolerance: f64,
    },
    /// Log-log slope of the bracket-expansion defect, required ≥ min_slope.
    PropB3Slope {
        operators: Vec<String>,
        weight: String,
        limits: Vec<u32>,
        #[serde(default = "d_b3_eps")]
        eps: Vec<f64>,
        #[serde(default = "d_two")]
        min_slope: f64,
        #[serde(default)]
        convention: MomentConvention,
        #[serde(default)]
        grading: Grading,
        #[serde(default = "d_slack")]
        tolerance: f64,
    },
    /// Predicted expansion coefficients of a trace form against a fit.
    ThmB4 {
        operators: Vec<String>,
        weight: String,
        indices: Vec<u32>,
        #[serde(default)]
        allow_nonnegative: bool,
        #[serde(default)]
        convention: MomentConvention,
        #[serde(default)]
        route: ResidueRoute,
        #[serde(default = "d_rel3")]
        tolerance: f64,
    },
    /// Recovery of random expansions with `terms` nonzero coefficients and
    /// the affine dependence of Lim^μ on μ.
    RenormSynthetic {
        #[serde(default = "d_terms")]
        terms: usize,
        #[serde(default = "d_trials5")]
        trials: usize,
        #[serde(default = "d_mus")]
        mus: Vec<f64>,
        /// absolute
        #[serde(default = "d_abs8")]
        tolerance: f64,
    },
    AcsIdentities {
        #[serde(default = "d_trials_acs")]
        trials: usize,
        #[serde(default)]
        seed: Option<u64>,
        /// absolute, after scaling by ‖J‖²
        #[serde(default = "d_acs_tol")]
        tolerance: f64,
    },
    WeightedTrace {
        operator: String,
        weight: String,
        #[serde(default)]
        mu: Option<f64>,
        #[serde(default)]
        reference: Option<[f64; 2]>,
        #[serde(default = "d_rel6")]
        tolerance: f64,
    },
    HeatTrace {
        operator: String,
        weight: String,
        eps: f64,
        #[serde(default)]
        reference: Option<[f64; 2]>,
        #[serde(default = "d_rel6")]
        tolerance: f64,
    },
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Lemma1Findim { .. } => "lemma1_findim",
            TaskKind::HeatAnchor { .. } => "heat_anchor",
            TaskKind::ResidueCalibration { .. } => "residue_calibration",
            TaskKind::Lemma2Commutator { .. } => "lemma2_commutator",
            TaskKind::Lemma2Derivative { .. } => "lemma2_derivative",
            TaskKind::Prop4 { .. } => "prop4",
            TaskKind::Transgression { .. } => "transgression",
            TaskKind::ConnectionForms { .. } => "connection_forms",
            TaskKind::Theorem3 { .. } => "theorem3",
            TaskKind::TraceFormQuadrature { .. } => "trace_form_quadrature",
            TaskKind::VolterraOrder { .. } => "volterra_order",
            TaskKind::PropB3Slope { .. } => "prop_b3_slope",
            TaskKind::ThmB4 { .. } => "thm_b4",
            TaskKind::RenormSynthetic { .. } => "renorm_synthetic",
            TaskKind::AcsIdentities { .. } => "acs_identities",
            TaskKind::WeightedTrace { .. } => "weighted_trace",
            TaskKind::HeatTrace { .. } => "heat_trace",
        }
    }

    /// (kind, one-line description) for every task kind.
    pub fn catalogue() -> &'static [(&'static str, &'static str)] {
        &[
            ("lemma1_findim", "finite-rank determinant curvature vs −str Ω, and fd order"),
            ("heat_anchor", "heat coefficients of tr e^{-εQ} and residue-law coefficients"),
            ("residue_calibration", "Wodzicki residue by symbol and by zeta pole"),
            ("lemma2_commutator", "weighted trace of a commutator vs the residue formula"),
            ("lemma2_derivative", "derivative of a weighted trace along a weight family"),
            ("prop4", "ε-cutoff curvature identity on an operator family"),
            ("transgression", "integrated transgression of the degree-two Chern character"),
            ("connection_forms", "direct and split connection forms of the determinant bundle"),
            ("theorem3", "renormalized curvature identity and both obstruction routes"),
            ("trace_form_quadrature", "trace form by divided differences vs simplex quadrature"),
            ("volterra_order", "Volterra truncation order"),
            ("prop_b3_slope", "bracket-expansion defect slope"),
            ("thm_b4", "predicted trace-form coefficients vs fit"),
            ("renorm_synthetic", "expansion recovery and Lim^μ affinity"),
            ("acs_identities", "pointwise almost-complex-structure identities"),
            ("weighted_trace", "μ-renormalized weighted trace"),
            ("heat_trace", "ε-cutoff heat trace"),
        ]
    }
}

impl Scenario {
    /// Parse and validate; errors carry the line and column or the key.
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(format!("{e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (table, map) in [("operators", &self.operators), ("weights", &self.weights)] {
            for (name, expr) in map {
                expr.order().and_then(|_| expr.quantize(1).map(|_| ())).map_err(|e| {
                    let msg = match e {
                        Error::Parse(m) => m,
                        other => other.to_string(),
                    };
                    Error::Parse(format!("{table}.{name}: {msg}"))
                })?;
            }
        }
        self.eps_grid.points().map_err(|e| Error::Parse(format!("eps_grid: {e}")))?;
        match self.cutoff {
            CutoffPolicy::N(0) => return Err(Error::Parse("cutoff.n: must be positive".into())),
            CutoffPolicy::TailTolerance(t) if !(t > 0.0) => return Err(Error::Parse("cutoff.tail_tolerance: must be positive".into())),
            _ => {}
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, t) in self.tasks.iter().enumerate() {
            if !ids.insert(t.id.as_str()) {
                return Err(Error::Parse(format!("tasks[{i}].id: duplicate id {:?}", t.id)));
            }
            for (key, name, table) in self.references(&t.kind) {
                let map = if table == "weights" { &self.weights } else { &self.operators };
                if !map.contains_key(name) {
                    return Err(Error::Parse(format!("tasks[{i}].{key}: unknown {} {name:?}", &table[..table.len() - 1])));
                }
            }
            for (key, v) in tolerances(&t.kind) {
                if !(v > 0.0) {
                    return Err(Error::Parse(format!("tasks[{i}].{key}: tolerance must be positive, got {v}")));
                }
            }
        }
        if self.tasks.is_empty() {
            return Err(Error::Parse("tasks: scenario has no tasks".into()));
        }
        Ok(())
    }

    /// (key, name, table) for each name a task refers to.
    fn references<'a>(&self, k: &'a TaskKind) -> Vec<(String, &'a str, &'static str)> {
        let op = |key: &str, n: &'a String| (key.to_string(), n.as_str(), "operators");
        let w = |n: &'a String| ("weight".to_string(), n.as_str(), "weights");
        let ops = |v: &'a [String]| v.iter().enumerate().map(|(i, n)| (format!("operators[{i}]"), n.as_str(), "operators")).collect::<Vec<_>>();
        match k {
            TaskKind::HeatAnchor { weight, operator, .. } => {
                let mut v = vec![w(weight)];
                if let Some(o) = operator {
                    v.push(op("operator", o));
                }
                v
            }
            TaskKind::ResidueCalibration { operator, weight, .. }
            | TaskKind::WeightedTrace { operator, weight, .. }
            | TaskKind::HeatTrace { operator, weight, .. } => vec![op("operator", operator), w(weight)],
            TaskKind::Lemma2Commutator { alpha, beta, weight, .. } => vec![op("alpha", alpha), op("beta", beta), w(weight)],
            TaskKind::Lemma2Derivative { weight, alpha, .. } => vec![op("alpha", alpha), w(weight)],
            TaskKind::TraceFormQuadrature { operators, weight, .. }
            | TaskKind::PropB3Slope { operators, weight, .. }
            | TaskKind::ThmB4 { operators, weight, .. } => {
                let mut v = ops(operators);
                v.push(w(weight));
                v
            }
            TaskKind::VolterraOrder { weight, perturbation, .. } => vec![op("perturbation", perturbation), w(weight)],
            _ => Vec::new(),
        }
    }
}

fn tolerances(k: &TaskKind) -> Vec<(&'static str, f64)> {
    match k {
        TaskKind::Lemma1Findim { tolerance, slope_tolerance, fd_step, .. } => vec![("tolerance", *tolerance), ("slope_tolerance", *slope_tolerance), ("fd_step", *fd_step)],
        TaskKind::HeatAnchor { tolerance, constant_tolerance, coefficient_tolerance, .. } => {
            vec![("tolerance", *tolerance), ("constant_tolerance", *constant_tolerance), ("coefficient_tolerance", *coefficient_tolerance)]
        }
        TaskKind::Lemma2Commutator { tolerance, zero_tolerance, floor, .. } => vec![("tolerance", *tolerance), ("zero_tolerance", *zero_tolerance), ("floor", *floor)],
        TaskKind::Prop4 { tolerance, odd_tolerance, .. } => vec![("tolerance", *tolerance), ("odd_tolerance", *odd_tolerance)],
        TaskKind::Lemma2Derivative { tolerance, fd_step, .. } => vec![("tolerance", *tolerance), ("fd_step", *fd_step)],
        TaskKind::ResidueCalibration { tolerance, .. }
        | TaskKind::Transgression { tolerance, .. }
        | TaskKind::ConnectionForms { tolerance, .. }
        | TaskKind::Theorem3 { tolerance, .. }
        | TaskKind::TraceFormQuadrature { tolerance, .. }
        | TaskKind::VolterraOrder { tolerance, .. }
        | TaskKind::PropB3Slope { tolerance, .. }
        | TaskKind::ThmB4 { tolerance, .. }
        | TaskKind::RenormSynthetic { tolerance, .. }
        | TaskKind::AcsIdentities { tolerance, .. }
        | TaskKind::WeightedTrace { tolerance, .. }
        | TaskKind::HeatTrace { tolerance, .. } => vec![("tolerance", *tolerance)],
    }
}

//! Bound certificates assembled from estimated or exact terms, and the
//! analytic pixel-level crop bounds.

use crate::decomposition::EmbeddedWorld;
use crate::error::{invalid, Result};
use crate::math;
use crate::pixel_model::{analytic_delta_mu, analytic_sigma, GenerativeConfig, SemanticMap};
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// `τ_K` at or above this is treated as 1.
pub const VACUITY_THRESHOLD: f64 = 1.0 - 1e-12;

/// Default tolerance on the centering residual.
pub const CENTERING_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Exhaustive enumeration or closed form.
    Exact,
    MonteCarlo,
    /// A sampled lower estimate of a supremum.
    Estimated,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    pub std_error: Option<f64>,
    pub provenance: Provenance,
}

impl Quantity {
    pub fn exact(value: f64) -> Self {
        Quantity { value, std_error: None, provenance: Provenance::Exact }
    }

    pub fn monte_carlo(value: f64, std_error: f64) -> Self {
        Quantity { value, std_error: Some(std_error), provenance: Provenance::MonteCarlo }
    }

    pub fn estimated(value: f64) -> Self {
        Quantity { value, std_error: None, provenance: Provenance::Estimated }
    }

    pub fn supplied(value: f64) -> Self {
        Quantity { value, std_error: None, provenance: Provenance::Supplied }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub std_error: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: String,
    pub terms: Vec<Term>,
    pub lhs: Option<f64>,
    /// `None` when the bound is vacuous.
    pub rhs: Option<f64>,
    /// `rhs − lhs` when both exist.
    pub slack: Option<f64>,
    pub flags: BTreeMap<String, bool>,
}

impl BoundReport {
    fn new(theorem: &str) -> Self {
        BoundReport {
            theorem: theorem.to_string(),
            terms: Vec::new(),
            lhs: None,
            rhs: None,
            slack: None,
            flags: BTreeMap::new(),
        }
    }

    fn term(&mut self, name: &str, q: Quantity) {
        self.terms.push(Term {
            name: name.to_string(),
            value: q.value,
            std_error: q.std_error,
            provenance: q.provenance,
        });
    }

    fn flag(&mut self, name: &str, value: bool) {
        self.flags.insert(name.to_string(), value);
    }

    fn finish(mut self, lhs: Option<Quantity>, rhs: Option<f64>) -> Self {
        if let Some(l) = lhs {
            self.term("lhs", l);
        }
        self.lhs = lhs.map(|q| q.value);
        self.rhs = rhs;
        self.slack = match (self.lhs, rhs) {
            (Some(l), Some(r)) => Some(r - l),
            _ => None,
        };
        self
    }

    pub fn is_vacuous(&self) -> bool {
        self.flags.get("vacuous").copied().unwrap_or(false)
    }

    pub fn term_value(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// Shared inputs of the population bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub r_un: Quantity,
    pub tau: Quantity,
    pub col_term: Quantity,
    pub min_term: Quantity,
    pub max_term: Quantity,
    /// Supervised risk to certify, if estimated.
    pub r_sup: Option<Quantity>,
}

fn check_tau(tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(invalid("tau_K must lie in [0, 1]"));
    }
    Ok(())
}

// (1/(1−τ))·[risk − τ·col + dist], or `None` when vacuous.
fn scaled(tau: f64, risk: f64, col: f64, dist: f64) -> Option<f64> {
    (tau < VACUITY_THRESHOLD).then(|| (risk - tau * col + dist) / (1.0 - tau))
}

fn base_report(theorem: &str, inputs: &BoundInputs, risk_name: &str) -> Result<BoundReport> {
    check_tau(inputs.tau.value)?;
    let mut r = BoundReport::new(theorem);
    r.term(risk_name, inputs.r_un);
    r.term("tau_k", inputs.tau);
    r.term("col_term", inputs.col_term);
    r.term("min_term", inputs.min_term);
    r.term("max_term", inputs.max_term);
    r.flag("vacuous", inputs.tau.value >= VACUITY_THRESHOLD);
    Ok(r)
}

/// `(1/(1−τ_K))[R_un − τ_K·col + min_term + 5·max_term]`
pub fn bound_thm1(inputs: &BoundInputs) -> Result<BoundReport> {
    let r = base_report("thm1", inputs, "r_un")?;
    let rhs = scaled(
        inputs.tau.value,
        inputs.r_un.value,
        inputs.col_term.value,
        inputs.min_term.value + 5.0 * inputs.max_term.value,
    );
    Ok(r.finish(inputs.r_sup, rhs))
}

/// The improved bound with coefficient 1 on `max_term`. It is only valid for
/// centered representations; `centered` records whether every residual is
/// within `tolerance`.
pub fn bound_thm2(inputs: &BoundInputs, centering_residuals: &[f64], tolerance: f64) -> Result<BoundReport> {
    let mut r = base_report("thm2", inputs, "r_un")?;
    let worst = centering_residuals.iter().copied().fold(0.0, f64::max);
    r.term("max_centering_residual", Quantity::monte_carlo(worst, 0.0));
    r.flag("centering_checked", !centering_residuals.is_empty());
    r.flag("centered", !centering_residuals.is_empty() && worst <= tolerance);
    let rhs = scaled(
        inputs.tau.value,
        inputs.r_un.value,
        inputs.col_term.value,
        inputs.min_term.value + inputs.max_term.value,
    );
    Ok(r.finish(inputs.r_sup, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationInputs {
    /// Population-level terms; `r_un` holds the empirical risk.
    pub base: BoundInputs,
    pub rademacher: Quantity,
    /// Norm bound on embeddings.
    pub r: f64,
    /// Bound on the loss.
    pub b: f64,
    pub n: usize,
    pub delta: f64,
}

/// `(1/(1−τ_K))[R̂_un + 12R·Rad/n + 3B·√(ln(2/δ)/(2n)) − τ_K·col + min + 5·max]`
pub fn bound_thm3(inputs: &GeneralizationInputs) -> Result<BoundReport> {
    if inputs.n == 0 {
        return Err(invalid("n must be positive"));
    }
    if !(inputs.delta > 0.0 && inputs.delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    let base = &inputs.base;
    let mut r = base_report("thm3", base, "r_un_empirical")?;
    let n = inputs.n as f64;
    let complexity = 12.0 * inputs.r * inputs.rademacher.value / n;
    let concentration = 3.0 * inputs.b * math::sqrt(math::ln(2.0 / inputs.delta) / (2.0 * n));
    r.term("rademacher", inputs.rademacher);
    r.term("complexity_term", Quantity::exact(complexity));
    r.term("concentration_term", Quantity::exact(concentration));
    let rhs = scaled(
        base.tau.value,
        base.r_un.value + complexity + concentration,
        base.col_term.value,
        base.min_term.value + 5.0 * base.max_term.value,
    );
    Ok(r.finish(base.r_sup, rhs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelBoundInputs {
    /// `min_term`/`max_term` hold pixel-level distances.
    pub base: BoundInputs,
    pub c_l: Quantity,
    pub centering_residuals: Vec<f64>,
    pub centering_tolerance: f64,
}

/// `(1/(1−τ_K))[R_un − τ_K·col + c_L·(pixel_min + pixel_max)]`
pub fn bound_thm6(inputs: &PixelBoundInputs) -> Result<BoundReport> {
    if !(inputs.c_l.value >= 0.0) {
        return Err(invalid("c_L must be nonnegative"));
    }
    let base = &inputs.base;
    let mut r = base_report("thm6", base, "r_un")?;
    r.term("c_l", inputs.c_l);
    let worst = inputs.centering_residuals.iter().copied().fold(0.0, f64::max);
    r.flag("centered", !inputs.centering_residuals.is_empty() && worst <= inputs.centering_tolerance);
    // A sampled c_L only bounds the true constant from below.
    r.flag("lipschitz_exact", inputs.c_l.provenance == Provenance::Exact);
    let dist = inputs.c_l.value * base.min_term.value + inputs.c_l.value * base.max_term.value;
    let rhs = scaled(base.tau.value, base.r_un.value, base.col_term.value, dist);
    Ok(r.finish(base.r_sup, rhs))
}

/// Semantic content of a crop, as used by the analytic crop bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropStats {
    /// Semantic labels present in the crop.
    pub present: Vec<usize>,
    /// Pixels whose label differs from the majority label.
    pub offmax_pixel_count: usize,
}

impl CropStats {
    pub fn single_semantic(&self) -> bool {
        self.present.len() <= 1
    }
}

pub fn crop_stats(map: &SemanticMap) -> CropStats {
    let present: Vec<usize> = map.present().into_iter().map(usize::from).collect();
    let majority =
        present.iter().map(|&s| map.labels().iter().filter(|&&l| usize::from(l) == s).count()).max().unwrap_or(0);
    CropStats { present, offmax_pixel_count: map.labels().len() - majority }
}

/// `2σ` (crop only) or `σ` (with brightness), plus `√(offmax)·Δμ_max` for
/// crops spanning several semantics. `σ` and `Δμ` are maxima over the
/// semantics present.
pub fn analytic_crop_bound(config: &GenerativeConfig, stats: &CropStats, with_color: bool) -> Result<f64> {
    config.validate()?;
    if let Some(&s) = stats.present.iter().find(|&&s| s >= config.num_semantics) {
        return Err(invalid(alloc::format!("semantic {s} out of range")));
    }
    let sigma = stats.present.iter().map(|&s| analytic_sigma(config, s, config.side)).fold(0.0, f64::max);
    let spread = if with_color { sigma } else { 2.0 * sigma };
    if stats.single_semantic() {
        return Ok(spread);
    }
    let mut delta = 0.0_f64;
    for (i, &s) in stats.present.iter().enumerate() {
        for &t in &stats.present[i + 1..] {
            delta = delta.max(analytic_delta_mu(config, s, t));
        }
    }
    Ok(spread + math::sqrt(stats.offmax_pixel_count as f64) * delta)
}

/// Theorem-1 certificate on a discrete world with every term exact. The LHS
/// is the supervised risk with negative classes sampled given no collision.
pub fn certify_thm1_discrete(world: &EmbeddedWorld<'_>) -> Result<BoundReport> {
    let rbar = world.rbar_bound()?;
    let rel = world.curl_relation();
    let inputs = BoundInputs {
        r_un: Quantity::exact(rbar.r_un),
        tau: Quantity::exact(rel.tau),
        col_term: Quantity::exact(rel.col_term),
        min_term: Quantity::exact(rbar.min_term),
        max_term: Quantity::exact(rbar.max_term),
        r_sup: rel.r_sup_conditional.map(Quantity::exact),
    };
    let mut report = bound_thm1(&inputs)?;
    report.term("r_sup_all_classes", Quantity::exact(rel.r_sup_all));
    report.flag("unit_norm", true);
    Ok(report)
}

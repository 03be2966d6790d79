//! Closed-form calculators turning max-information and differential-privacy
//! budgets into the minimum subgroup size `γ` at which `(α, β)`
//! Wasserstein-coherence is enforced.
//!
//! All logarithms are natural. `γ` is returned as a real number; a subgroup
//! qualifies when its size is at least `γ`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::concentration::TailBound;
use crate::error::{Error, Result};

/// Constant floor shared by every `γ` formula.
pub const GAMMA_FLOOR: f64 = 80.0;

/// Largest joint table (in cells) [`exact_max_information`] will enumerate.
pub const EXACT_MAX_INFO_MAX_CELLS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceParams {
    pub alpha: f64,
    pub beta: f64,
    pub collection_size: u64,
    /// Total dataset size; the curator sees `n/2` records.
    pub n: u64,
}

impl CoherenceParams {
    pub fn new(alpha: f64, beta: f64, collection_size: u64, n: u64) -> Self {
        CoherenceParams {
            alpha,
            beta,
            collection_size,
            n,
        }
    }

    fn check(&self, beta_closed: bool) -> Result<()> {
        in_half_open("alpha", self.alpha, 0.0, 1.0)?;
        if beta_closed {
            in_half_open("beta", self.beta, 0.0, 1.0)?;
        } else if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::domain("beta", format!("must lie in (0, 1), got {}", self.beta)));
        }
        if self.collection_size == 0 {
            return Err(Error::domain("collection_size", "must be at least 1"));
        }
        Ok(())
    }

    fn check_dp(&self) -> Result<()> {
        self.check(true)?;
        if self.n < 2 {
            return Err(Error::domain("n", format!("must be at least 2, got {}", self.n)));
        }
        Ok(())
    }

    /// Failure level `β / (2|𝒞|)` handed to the max-information theorems.
    pub fn per_subgroup_failure(&self) -> f64 {
        self.beta / (2.0 * self.collection_size as f64)
    }
}

fn in_half_open(name: &'static str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if v > lo && v <= hi {
        Ok(())
    } else {
        Err(Error::domain(name, format!("must lie in ({lo}, {hi}], got {v}")))
    }
}

fn finite_non_negative(name: &'static str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(name, format!("must be finite and non-negative, got {v}")))
    }
}

/// The five arguments of the `γ` maximum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaTerm {
    /// `8.3·(ζ + ln(16|𝒞|/β)) / α²`
    InfoOverAlphaSquared,
    /// `36·ln(3/α) / α²`
    LogOverAlphaSquared,
    /// `16.6·(ζ + ln(16|𝒞|/β))`
    InfoLinear,
    /// `5.3 / α`
    InverseAlpha,
    /// `80`
    Floor,
}

impl GammaTerm {
    pub const ALL: [GammaTerm; 5] = [
        GammaTerm::InfoOverAlphaSquared,
        GammaTerm::LogOverAlphaSquared,
        GammaTerm::InfoLinear,
        GammaTerm::InverseAlpha,
        GammaTerm::Floor,
    ];

    /// True when the term grows with the information budget.
    pub fn depends_on_budget(self) -> bool {
        matches!(self, GammaTerm::InfoOverAlphaSquared | GammaTerm::InfoLinear)
    }
}

impl fmt::Display for GammaTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GammaTerm::InfoOverAlphaSquared => "8.3(zeta + ln(16|C|/beta))/alpha^2",
            GammaTerm::LogOverAlphaSquared => "36 ln(3/alpha)/alpha^2",
            GammaTerm::InfoLinear => "16.6(zeta + ln(16|C|/beta))",
            GammaTerm::InverseAlpha => "5.3/alpha",
            GammaTerm::Floor => "floor 80",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTerms {
    pub info_over_alpha_squared: f64,
    pub log_over_alpha_squared: f64,
    pub info_linear: f64,
    pub inverse_alpha: f64,
    pub floor: f64,
}

impl GammaTerms {
    pub fn get(&self, term: GammaTerm) -> f64 {
        match term {
            GammaTerm::InfoOverAlphaSquared => self.info_over_alpha_squared,
            GammaTerm::LogOverAlphaSquared => self.log_over_alpha_squared,
            GammaTerm::InfoLinear => self.info_linear,
            GammaTerm::InverseAlpha => self.inverse_alpha,
            GammaTerm::Floor => self.floor,
        }
    }

    /// The maximum and the first term attaining it.
    pub fn max(&self) -> (f64, GammaTerm) {
        GammaTerm::ALL
            .iter()
            .fold((f64::NEG_INFINITY, GammaTerm::Floor), |(best, at), &t| {
                let v = self.get(t);
                if v > best {
                    (v, t)
                } else {
                    (best, at)
                }
            })
    }
}

/// Which constants the approximate-DP `γ` uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApproxFormula {
    /// `ζ = (265/2)ε²n + 12ε√((n/2)·ln(4|𝒞|/β))`, fed through the max-information theorem.
    #[default]
    ProofBacked,
    /// Printed statement with `265ε²n + 12ε√(n ln(4|𝒞|/β))`, `ln(32|𝒞|/β)` and `16/3`.
    Printed265,
    /// Printed statement with `133ε²n + 9ε√(n ln(4|𝒞|/β))`, `ln(32|𝒞|/β)` and `16/3`.
    Printed133,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum BoundRegime {
    MaxInfo { zeta: f64 },
    PureDp { epsilon: f64 },
    ApproxDp {
        epsilon: f64,
        delta: f64,
        formula: ApproxFormula,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub gamma: f64,
    pub active_term: GammaTerm,
    pub terms: GammaTerms,
    /// Max-information budget `ζ` that entered the formula.
    pub zeta: f64,
    pub params: CoherenceParams,
    #[serde(flatten)]
    pub regime: BoundRegime,
}

/// `max{8.3·I/α², 36 ln(3/α)/α², 16.6·I, c/α, 80}` with `I = ζ + ln(k|𝒞|/β)`.
fn five_terms(zeta: f64, log_multiplier: f64, inverse_alpha_const: f64, p: &CoherenceParams) -> GammaTerms {
    let a2 = p.alpha * p.alpha;
    let info = zeta + (log_multiplier * p.collection_size as f64 / p.beta).ln();
    GammaTerms {
        info_over_alpha_squared: 8.3 * info / a2,
        log_over_alpha_squared: 36.0 * (3.0 / p.alpha).ln() / a2,
        info_linear: 16.6 * info,
        inverse_alpha: inverse_alpha_const / p.alpha,
        floor: GAMMA_FLOOR,
    }
}

fn result(zeta: f64, terms: GammaTerms, params: CoherenceParams, regime: BoundRegime) -> BoundResult {
    let (gamma, active_term) = terms.max();
    BoundResult {
        gamma,
        active_term,
        terms,
        zeta,
        params,
        regime,
    }
}

/// `γ` for a curator whose `(β/2|𝒞|)`-approximate max-information on `n/2`
/// records is below `zeta`.
pub fn gamma_from_maxinfo(zeta: f64, p: &CoherenceParams) -> Result<BoundResult> {
    p.check(false)?;
    finite_non_negative("zeta", zeta)?;
    Ok(result(
        zeta,
        five_terms(zeta, 16.0, 5.3, p),
        *p,
        BoundRegime::MaxInfo { zeta },
    ))
}

/// Split-dependent incoherence bound `2μ(m + 1)e^ζ + η` for a curator with
/// `η`-approximate max-information below `ζ`.
pub fn lemma_incoherence_bound(m: u64, alpha: f64, mu: f64, zeta: f64, eta: f64) -> Result<TailBound> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::domain("mu", "must be positive and finite"));
    }
    finite_non_negative("zeta", zeta)?;
    finite_non_negative("eta", eta)?;
    let l = (4.0 / mu).ln();
    let terms = [
        ("4.15 ln(4/mu)/alpha^2", 4.15 * l / (alpha * alpha)),
        ("(16/3)/alpha", 16.0 / 3.0 / alpha),
        ("8.3 ln(4/mu)", 8.3 * l),
        ("40", 40.0),
    ];
    for (name, needed) in terms {
        if (m as f64) < needed {
            return Err(Error::Hypothesis(format!(
                "|X ∩ C| = {m} is below the size term {name} = {needed:.6}"
            )));
        }
    }
    Ok(TailBound::new(2.0 * mu * (m as f64 + 1.0) * zeta.exp() + eta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxInfoBudget {
    /// Bound on max-information, in nats.
    pub zeta: f64,
    /// Approximation level the bound holds at.
    pub failure: f64,
}

/// `ε²n/4 + ε√(n ln(2/γ)/4)` for an order-invariant `ε`-DP curator on `n/2`
/// of `dataset_size = n` records, at failure level `γ`.
pub fn maxinfo_pure_dp(epsilon: f64, dataset_size: u64, failure: f64) -> Result<MaxInfoBudget> {
    finite_non_negative("epsilon", epsilon)?;
    if dataset_size < 2 {
        return Err(Error::domain("n", format!("must be at least 2, got {dataset_size}")));
    }
    if !(failure > 0.0 && failure < 1.0) {
        return Err(Error::domain("failure", format!("must lie in (0, 1), got {failure}")));
    }
    let n = dataset_size as f64;
    Ok(MaxInfoBudget {
        zeta: epsilon * epsilon * n / 4.0 + epsilon * (n * (2.0 / failure).ln() / 4.0).sqrt(),
        failure,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralApproxBound {
    pub zeta: f64,
    /// `β(t, δ̂) = e^{-t²/2} + n(2δ/δ̂ + (2δ̂ + 2δ)/(1 - e^{-3ε}))`.
    pub beta_level: f64,
}

fn check_approx_epsilon(epsilon: f64) -> Result<()> {
    in_half_open("epsilon", epsilon, 0.0, 0.5)
}

/// Max-information of an `(ε, δ)`-DP curator on `curator_arity` records,
/// with free parameters `δ̂` and `t`.
pub fn maxinfo_approx_dp_general(
    epsilon: f64,
    delta: f64,
    delta_hat: f64,
    t: f64,
    curator_arity: u64,
) -> Result<GeneralApproxBound> {
    check_approx_epsilon(epsilon)?;
    if !(delta > 0.0 && delta < epsilon) {
        return Err(Error::domain("delta", format!("must lie in (0, epsilon), got {delta}")));
    }
    in_half_open("delta_hat", delta_hat, 0.0, epsilon / 15.0)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain("t", format!("must be positive and finite, got {t}")));
    }
    if curator_arity == 0 {
        return Err(Error::domain("n", "curator arity must be at least 1"));
    }
    let n = curator_arity as f64;
    let per_record = 347.0 * delta_hat
        + 75.0 * (delta_hat / epsilon).powi(2)
        + 24.0 * delta_hat * delta_hat / epsilon
        + 240.0 * epsilon * epsilon;
    let zeta = n * per_record + 6.0 * t * epsilon * n.sqrt();
    let beta_level = (-t * t / 2.0).exp()
        + n * (2.0 * delta / delta_hat
            + (2.0 * delta_hat + 2.0 * delta) / (1.0 - (-3.0 * epsilon).exp()));
    Ok(GeneralApproxBound { zeta, beta_level })
}

/// Largest `δ` the specific approximate-DP bound admits: `ε²γ²/(120n)²`.
pub fn approx_delta_ceiling(epsilon: f64, failure: f64, curator_arity: f64) -> f64 {
    (epsilon * failure).powi(2) / (120.0 * curator_arity).powi(2)
}

/// `265ε²n + 12ε√(n ln(2/γ))` for an `(ε, δ)`-DP curator on `curator_arity = n` records.
pub fn maxinfo_approx_dp(epsilon: f64, delta: f64, failure: f64, curator_arity: u64) -> Result<MaxInfoBudget> {
    if curator_arity == 0 {
        return Err(Error::domain("n", "curator arity must be at least 1"));
    }
    approx_budget(epsilon, delta, failure, curator_arity as f64)
}

fn approx_budget(epsilon: f64, delta: f64, failure: f64, n: f64) -> Result<MaxInfoBudget> {
    check_approx_epsilon(epsilon)?;
    in_half_open("failure", failure, 0.0, 1.0)?;
    if !(delta > 0.0) {
        return Err(Error::domain("delta", format!("must be positive, got {delta}")));
    }
    let ceiling = approx_delta_ceiling(epsilon, failure, n);
    if delta > ceiling {
        return Err(Error::DeltaAboveCeiling { delta, ceiling });
    }
    Ok(MaxInfoBudget {
        zeta: 265.0 * epsilon * epsilon * n + 12.0 * epsilon * (n * (2.0 / failure).ln()).sqrt(),
        failure,
    })
}

/// `γ` for an order-invariant `ε`-DP curator, via the pure-DP max-information
/// bound at failure `β/(2|𝒞|)`.
pub fn gamma_pure_dp(epsilon: f64, p: &CoherenceParams) -> Result<BoundResult> {
    in_half_open("epsilon", epsilon, 0.0, 1.0)?;
    p.check_dp()?;
    Ok(pure_unchecked(epsilon, p))
}

fn pure_unchecked(epsilon: f64, p: &CoherenceParams) -> BoundResult {
    let zeta = maxinfo_pure_dp(epsilon, p.n, p.per_subgroup_failure())
        .expect("ranges checked by caller")
        .zeta;
    result(
        zeta,
        five_terms(zeta, 16.0, 5.3, p),
        *p,
        BoundRegime::PureDp { epsilon },
    )
}

/// The pure-DP `γ` written out as one closed-form expression.
pub fn gamma_pure_dp_printed(epsilon: f64, p: &CoherenceParams) -> Result<f64> {
    in_half_open("epsilon", epsilon, 0.0, 1.0)?;
    p.check_dp()?;
    let (e, n, c, a, b) = (epsilon, p.n as f64, p.collection_size as f64, p.alpha, p.beta);
    let inner = e * e * n / 4.0 + e * (n * (4.0 * c / b).ln()).sqrt() / 2.0 + (16.0 * c / b).ln();
    Ok([
        8.3 * inner / (a * a),
        36.0 * (3.0 / a).ln() / (a * a),
        16.6 * inner,
        5.3 / a,
        80.0,
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max))
}

/// Admissible `δ` ceiling `ε²β²/((120n)²|𝒞|²)` for the approximate-DP `γ`.
pub fn gamma_approx_delta_ceiling(epsilon: f64, p: &CoherenceParams) -> f64 {
    (epsilon * p.beta).powi(2) / ((120.0 * p.n as f64).powi(2) * (p.collection_size as f64).powi(2))
}

/// `γ` for an order-invariant `(ε, δ)`-DP curator.
pub fn gamma_approx_dp(
    epsilon: f64,
    delta: f64,
    p: &CoherenceParams,
    formula: ApproxFormula,
) -> Result<BoundResult> {
    check_approx_epsilon(epsilon)?;
    p.check_dp()?;
    let regime = BoundRegime::ApproxDp {
        epsilon,
        delta,
        formula,
    };
    match formula {
        ApproxFormula::ProofBacked => {
            let zeta = approx_budget(epsilon, delta, p.per_subgroup_failure(), p.n as f64 / 2.0)?.zeta;
            Ok(result(zeta, five_terms(zeta, 16.0, 5.3, p), *p, regime))
        }
        ApproxFormula::Printed265 | ApproxFormula::Printed133 => {
            if !(delta > 0.0) {
                return Err(Error::domain("delta", format!("must be positive, got {delta}")));
            }
            let ceiling = gamma_approx_delta_ceiling(epsilon, p);
            if delta > ceiling {
                return Err(Error::DeltaAboveCeiling { delta, ceiling });
            }
            let (quad, root) = if formula == ApproxFormula::Printed265 {
                (265.0, 12.0)
            } else {
                (133.0, 9.0)
            };
            let n = p.n as f64;
            let c = p.collection_size as f64;
            let zeta = quad * epsilon * epsilon * n + root * epsilon * (n * (4.0 * c / p.beta).ln()).sqrt();
            Ok(result(zeta, five_terms(zeta, 32.0, 16.0 / 3.0, p), *p, regime))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "kebab-case")]
pub enum DpRegime {
    Pure,
    Approx { delta: f64, formula: ApproxFormula },
}

impl DpRegime {
    pub fn epsilon_cap(&self) -> f64 {
        match self {
            DpRegime::Pure => 1.0,
            DpRegime::Approx { .. } => 0.5,
        }
    }

    fn gamma(&self, epsilon: f64, p: &CoherenceParams) -> Result<BoundResult> {
        match *self {
            DpRegime::Pure => gamma_pure_dp(epsilon, p),
            DpRegime::Approx { delta, formula } => gamma_approx_dp(epsilon, delta, p, formula),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBudget {
    pub epsilon: f64,
    pub target_gamma: f64,
    /// `γ` at the returned `ε`.
    pub gamma: f64,
    /// True when the theorem's `ε` range, not the target, set the answer.
    pub capped: bool,
    #[serde(flatten)]
    pub regime: DpRegime,
}

/// Largest `ε` whose `γ` stays at or below `target_gamma`, by bisection on
/// the nondecreasing map `ε ↦ γ(ε)`.
pub fn max_epsilon_for(target_gamma: f64, p: &CoherenceParams, regime: DpRegime) -> Result<EpsilonBudget> {
    if !(target_gamma > 0.0) || target_gamma.is_nan() {
        return Err(Error::domain("target_gamma", format!("must be positive, got {target_gamma}")));
    }
    p.check_dp()?;
    let cap = regime.epsilon_cap();
    let infeasible = |blocking: String, reason: String| Error::Infeasible {
        target: target_gamma,
        blocking,
        reason,
    };

    // Smallest admissible epsilon and gamma there.
    let (lo, gamma_lo) = match regime {
        DpRegime::Pure => {
            let zero = result(0.0, five_terms(0.0, 16.0, 5.3, p), *p, BoundRegime::PureDp { epsilon: 0.0 });
            (0.0, zero)
        }
        DpRegime::Approx { delta, formula } => {
            if !(delta > 0.0) {
                return Err(Error::domain("delta", format!("must be positive, got {delta}")));
            }
            // delta <= eps²β²/((120n)²|C|²)  <=>  eps >= 120 n |C| √delta / β
            let eps_min = 120.0 * p.n as f64 * p.collection_size as f64 * delta.sqrt() / p.beta * (1.0 + 1e-12);
            if eps_min > cap {
                return Err(infeasible(
                    "delta-ceiling".into(),
                    format!("delta {delta:e} needs epsilon >= {eps_min:.6e}, above the range cap {cap}"),
                ));
            }
            (eps_min, gamma_approx_dp(eps_min, delta, p, formula)?)
        }
    };
    if gamma_lo.gamma > target_gamma {
        return Err(infeasible(
            gamma_lo.active_term.to_string(),
            format!(
                "the smallest achievable gamma is {:.6} at epsilon = {lo:e}",
                gamma_lo.gamma
            ),
        ));
    }
    let at_cap = regime.gamma(cap, p)?;
    if at_cap.gamma <= target_gamma {
        return Ok(EpsilonBudget {
            epsilon: cap,
            target_gamma,
            gamma: at_cap.gamma,
            capped: true,
            regime,
        });
    }
    let (mut feasible, mut infeasible_eps) = (lo, cap);
    let mut best = gamma_lo.gamma;
    for _ in 0..200 {
        let mid = 0.5 * (feasible + infeasible_eps);
        if mid <= feasible || mid >= infeasible_eps {
            break;
        }
        let g = if mid == 0.0 { gamma_lo.gamma } else { regime.gamma(mid, p)?.gamma };
        if g <= target_gamma {
            feasible = mid;
            best = g;
        } else {
            infeasible_eps = mid;
        }
        if infeasible_eps - feasible <= 1e-15 * infeasible_eps {
            break;
        }
    }
    Ok(EpsilonBudget {
        epsilon: feasible,
        target_gamma,
        gamma: best,
        capped: false,
        regime,
    })
}

/// A finite joint distribution over `(x, y)`; rows index `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointTable {
    pub rows: Vec<Vec<f64>>,
}

impl JointTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = JointTable { rows };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let width = self.rows.first().map_or(0, Vec::len);
        if self.rows.is_empty() || width == 0 || self.rows.iter().any(|r| r.len() != width) {
            return Err(Error::domain("joint", "table must be a non-empty rectangle"));
        }
        let cells = self.rows.len() * width;
        if cells > EXACT_MAX_INFO_MAX_CELLS {
            return Err(Error::OracleScope(format!(
                "{cells} outcome pairs (limit {EXACT_MAX_INFO_MAX_CELLS})"
            )));
        }
        if self.rows.iter().flatten().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::domain("joint", "probabilities must be finite and non-negative"));
        }
        let total = crate::numeric::neumaier_sum(self.rows.iter().flatten().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(total));
        }
        Ok(())
    }
}

/// `ln sup_{T: P[T] > β} (P[T] - β) / (P_X ⊗ P_Y)[T]` by enumerating every
/// subset of outcome pairs. Returns `-∞` when no subset clears `β`.
pub fn exact_max_information(joint: &JointTable, beta_level: f64) -> Result<f64> {
    joint.validate()?;
    if !(beta_level >= 0.0 && beta_level < 1.0) {
        return Err(Error::domain("beta_level", format!("must lie in [0, 1), got {beta_level}")));
    }
    let rows = &joint.rows;
    let width = rows[0].len();
    let px: Vec<f64> = rows.iter().map(|r| r.iter().sum()).collect();
    let py: Vec<f64> = (0..width).map(|j| rows.iter().map(|r| r[j]).sum()).collect();
    let mut joint_mass = Vec::new();
    let mut product_mass = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            joint_mass.push(v);
            product_mass.push(px[i] * py[j]);
        }
    }
    let k = joint_mass.len();
    let subsets = 1usize << k;
    let mut p_sum = vec![0.0f64; subsets];
    let mut q_sum = vec![0.0f64; subsets];
    let mut best = f64::NEG_INFINITY;
    for mask in 1..subsets {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        p_sum[mask] = p_sum[rest] + joint_mass[low];
        q_sum[mask] = q_sum[rest] + product_mass[low];
        let (pt, qt) = (p_sum[mask], q_sum[mask]);
        if pt > beta_level {
            let ratio = if qt > 0.0 { (pt - beta_level) / qt } else { f64::INFINITY };
            best = best.max(ratio);
        }
    }
    Ok(if best > 0.0 { best.ln() } else { f64::NEG_INFINITY })
}

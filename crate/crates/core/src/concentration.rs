//! Tail bounds used by the split-concentration arguments, and the exact
//! hypergeometric law they are checked against.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::ln_factorials;

/// Largest population the exact hypergeometric table accepts.
pub const HYPERGEOM_EXACT_MAX_POPULATION: u64 = 5000;

/// A probability bound, clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailBound {
    pub probability: f64,
    /// Value before clamping.
    pub raw: f64,
    /// True when the raw bound reached 1, so it says nothing.
    pub vacuous: bool,
}

impl TailBound {
    pub fn new(raw: f64) -> Self {
        TailBound {
            probability: raw.clamp(0.0, 1.0),
            raw,
            vacuous: raw >= 1.0,
        }
    }
}

/// `H(b, a, s)`: `s` draws without replacement from `b` items, `a` of them special.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HypergeomParams {
    pub population: u64,
    pub special: u64,
    pub sample: u64,
}

impl HypergeomParams {
    pub fn new(population: u64, special: u64, sample: u64) -> Result<Self> {
        if special == 0 || special > population {
            return Err(Error::domain("special", format!("need 0 < a <= b, got a = {special}, b = {population}")));
        }
        if sample == 0 || sample > population {
            return Err(Error::domain("sample", format!("need 0 < s <= b, got s = {sample}, b = {population}")));
        }
        Ok(HypergeomParams {
            population,
            special,
            sample,
        })
    }

    pub fn mean(&self) -> f64 {
        self.sample as f64 * self.special as f64 / self.population as f64
    }

    /// `max{1/(s+1) + 1/(b-s+1), 1/(a+1) + 1/(b-a+1)}`.
    pub fn tail_constant(&self) -> f64 {
        let (b, a, s) = (
            self.population as f64,
            self.special as f64,
            self.sample as f64,
        );
        let by_sample = 1.0 / (s + 1.0) + 1.0 / (b - s + 1.0);
        let by_special = 1.0 / (a + 1.0) + 1.0 / (b - a + 1.0);
        by_sample.max(by_special)
    }
}

/// `e^{-2c(dev² - 1)}`, bounding each of `Pr[K > sa/b + dev]` and `Pr[K < sa/b - dev]`.
pub fn hypergeom_tail_bound(p: &HypergeomParams, dev: f64) -> Result<TailBound> {
    if !(dev >= 2.0) || !dev.is_finite() {
        return Err(Error::Hypothesis(format!(
            "hypergeometric tail bound needs deviation >= 2, got {dev}"
        )));
    }
    Ok(TailBound::new(
        (-2.0 * p.tail_constant() * (dev * dev - 1.0)).exp(),
    ))
}

/// Exact pmf of `H(b, a, s)` over its support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypergeomTable {
    pub params: HypergeomParams,
    /// Smallest `k` with positive mass.
    pub k_min: u64,
    /// `pmf[i]` is `Pr[K = k_min + i]`.
    pub pmf: Vec<f64>,
}

impl HypergeomTable {
    pub fn k_max(&self) -> u64 {
        self.k_min + self.pmf.len() as u64 - 1
    }

    pub fn pmf_at(&self, k: u64) -> f64 {
        if k < self.k_min {
            return 0.0;
        }
        self.pmf.get((k - self.k_min) as usize).copied().unwrap_or(0.0)
    }

    /// `Pr[K <= x]`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.mass_where(|k| k <= x)
    }

    /// `Pr[K > x]`.
    pub fn upper_tail(&self, x: f64) -> f64 {
        self.mass_where(|k| k > x)
    }

    /// `Pr[K < x]`.
    pub fn lower_tail(&self, x: f64) -> f64 {
        self.mass_where(|k| k < x)
    }

    pub fn total(&self) -> f64 {
        crate::numeric::neumaier_sum(self.pmf.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        crate::numeric::neumaier_sum(
            self.pmf
                .iter()
                .enumerate()
                .map(|(i, p)| (self.k_min + i as u64) as f64 * p),
        )
    }

    fn mass_where(&self, keep: impl Fn(f64) -> bool) -> f64 {
        crate::numeric::neumaier_sum(
            self.pmf
                .iter()
                .enumerate()
                .filter(|(i, _)| keep((self.k_min + *i as u64) as f64))
                .map(|(_, p)| *p),
        )
    }
}

/// `pmf(k) = C(a,k) C(b-a,s-k) / C(b,s)`, evaluated in log space.
pub fn hypergeom_exact(p: &HypergeomParams) -> Result<HypergeomTable> {
    if p.population > HYPERGEOM_EXACT_MAX_POPULATION {
        return Err(Error::domain(
            "population",
            format!(
                "exact table limited to b <= {HYPERGEOM_EXACT_MAX_POPULATION}, got {}",
                p.population
            ),
        ));
    }
    let lf = ln_factorials(p.population as usize);
    let ln_choose = |n: u64, k: u64| lf[n as usize] - lf[k as usize] - lf[(n - k) as usize];
    let (b, a, s) = (p.population, p.special, p.sample);
    let k_min = s.saturating_sub(b - a);
    let k_max = a.min(s);
    let denom = ln_choose(b, s);
    let pmf = (k_min..=k_max)
        .map(|k| (ln_choose(a, k) + ln_choose(b - a, s - k) - denom).exp())
        .collect();
    Ok(HypergeomTable {
        params: *p,
        k_min,
        pmf,
    })
}

/// McDiarmid-type bound for an order-invariant function of an `m`-sample
/// drawn without replacement from `n` items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McDiarmidBound {
    pub general: TailBound,
    /// `exp(-4t²/(nΔ²))`, present when `m = n/2` and `n >= 3`.
    pub half_split: Option<TailBound>,
}

pub fn mcdiarmid_without_replacement(
    n: u64,
    m: u64,
    sensitivity: f64,
    t: f64,
) -> Result<McDiarmidBound> {
    if m == 0 || m >= n {
        return Err(Error::domain("m", format!("need 0 < m < n, got m = {m}, n = {n}")));
    }
    if !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(Error::domain("sensitivity", "must be positive and finite"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain("t", "must be non-negative and finite"));
    }
    let (nf, mf) = (n as f64, m as f64);
    let exponent = 2.0 * t * t / (mf * sensitivity * sensitivity)
        * ((nf - 0.5) / (nf - mf))
        * (1.0 - 1.0 / (2.0 * mf.max(nf - mf)));
    let half_split = (2 * m == n && n >= 3)
        .then(|| TailBound::new((-4.0 * t * t / (nf * sensitivity * sensitivity)).exp()));
    Ok(McDiarmidBound {
        general: TailBound::new((-exponent).exp()),
        half_split,
    })
}

/// `exp(-4t²/(nΔ²))` for the even split `m = n/2`.
pub fn mcdiarmid_half_split(n: u64, sensitivity: f64, t: f64) -> Result<TailBound> {
    if n < 3 || n % 2 != 0 {
        return Err(Error::domain("n", format!("half-split form needs even n >= 3, got {n}")));
    }
    let b = mcdiarmid_without_replacement(n, n / 2, sensitivity, t)?;
    Ok(b.half_split.expect("m = n/2 with n >= 3"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AzumaBound {
    /// `e^{-t²/2}`.
    pub probability: f64,
    /// The sum threshold `n·drift + t·√n·step_bound` the probability applies to.
    pub threshold: f64,
}

/// Azuma: `Pr[Σ C_i > n·drift + t√n·step_bound] <= e^{-t²/2}` for
/// `|C_i| <= step_bound` and conditional means at most `drift`.
pub fn azuma_tail(n: u64, step_bound: f64, drift: f64, t: f64) -> Result<AzumaBound> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain("t", "must be non-negative and finite"));
    }
    if !(step_bound > 0.0) || !step_bound.is_finite() {
        return Err(Error::domain("step_bound", "must be positive and finite"));
    }
    if !drift.is_finite() {
        return Err(Error::domain("drift", "must be finite"));
    }
    let nf = n as f64;
    Ok(AzumaBound {
        probability: (-t * t / 2.0).exp(),
        threshold: nf * drift + t * nf.sqrt() * step_bound,
    })
}

/// Relative slack allowed when comparing a subgroup size to a size hypothesis.
const HYPOTHESIS_RELATIVE_SLACK: f64 = 1e-12;

/// The four size terms `|X ∩ C|` must dominate for the split-independent
/// incoherence bound, paired with their names.
pub fn claim2_size_terms(alpha: f64, mu: f64) -> [(&'static str, f64); 4] {
    let l = (4.0 / mu).ln();
    [
        ("4.15 ln(4/mu)/alpha^2", 4.15 * l / (alpha * alpha)),
        ("5.3/alpha", 5.3 / alpha),
        ("8.3 ln(4/mu)", 8.3 * l),
        ("40", 40.0),
    ]
}

/// `μ` at which `m = 4.15 ln(4/μ)/α²` holds with equality.
pub fn claim2_boundary_mu(m: u64, alpha: f64) -> f64 {
    4.0 * (-(alpha * alpha) * m as f64 / 4.15).exp()
}

/// `Pr[W1 > α] <= 2(1 + m)μ` for a predictor chosen independently of the split,
/// valid once `m = |X ∩ C|` clears every size term.
pub fn claim2_incoherence_bound(m: u64, alpha: f64, mu: f64) -> Result<TailBound> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::domain("mu", format!("must be positive, got {mu}")));
    }
    for (name, needed) in claim2_size_terms(alpha, mu) {
        if (m as f64) < needed * (1.0 - HYPOTHESIS_RELATIVE_SLACK) {
            return Err(Error::Hypothesis(format!(
                "|X ∩ C| = {m} is below the size term {name} = {needed:.6}"
            )));
        }
    }
    Ok(TailBound::new(2.0 * (1.0 + m as f64) * mu))
}

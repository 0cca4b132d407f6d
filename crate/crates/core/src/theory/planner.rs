//! Synchronization-interval and stepsize choices that keep each bound at its best rate.

use std::fmt;
use std::str::FromStr;

use crate::theory::bounds::{stepsize_limit, within};
use crate::theory::{TheoremId, TheoryError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HRule {
    /// `1 + ⌊T/(κM)⌋`, or 1 when `T ≤ κM`.
    ScIdentical,
    /// `1 + ⌊T/(18κM)⌋` (1 when `T ≤ 18κM`), the finite-sum variant.
    ScIdenticalFiniteSum,
    /// `1 + ⌊T^{1/2} M^{−3/2}⌋`.
    WcIdentical,
    /// `1 + ⌊T^{1/4} M^{−3/4}⌋`.
    WcHeterogeneous,
}

impl HRule {
    pub fn needs_kappa(self) -> bool {
        matches!(self, HRule::ScIdentical | HRule::ScIdenticalFiniteSum)
    }
}

impl fmt::Display for HRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HRule::ScIdentical => "sc-iid",
            HRule::ScIdenticalFiniteSum => "sc-iid-fs",
            HRule::WcIdentical => "wc-iid",
            HRule::WcHeterogeneous => "wc-het",
        })
    }
}

impl FromStr for HRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "sc-iid" => Ok(HRule::ScIdentical),
            "sc-iid-fs" => Ok(HRule::ScIdenticalFiniteSum),
            "wc-iid" => Ok(HRule::WcIdentical),
            "wc-het" => Ok(HRule::WcHeterogeneous),
            other => Err(format!("unknown H rule {other:?} (sc-iid, sc-iid-fs, wc-iid, wc-het)")),
        }
    }
}

/// Largest `k` with `k^p ≤ n`.
fn above(ratio: f64) -> f64 {
    if ratio <= 1.0 {
        0.0
    } else {
        ratio.floor()
    }
}

fn int_root(n: u128, p: u32) -> u128 {
    let mut k = (n as f64).powf(1.0 / p as f64).floor() as u128;
    while k.checked_pow(p).is_none_or(|v| v > n) {
        k -= 1;
    }
    while (k + 1).checked_pow(p).is_some_and(|v| v <= n) {
        k += 1;
    }
    k
}

/// Synchronization interval for `T` steps on `M` nodes.
pub fn plan_h(rule: HRule, t: usize, m: usize, kappa: Option<f64>) -> Result<usize, TheoryError> {
    if t == 0 || m == 0 {
        return Err(TheoryError::Invalid("T and M must be positive".into()));
    }
    match (rule.needs_kappa(), kappa) {
        (true, None) => return Err(TheoryError::MissingInput("kappa")),
        (false, Some(_)) => {
            return Err(TheoryError::Invalid(format!("rule {rule} does not take kappa")));
        }
        (true, Some(k)) if !(k >= 1.0) || !k.is_finite() => {
            return Err(TheoryError::Invalid("kappa must be finite and >= 1".into()));
        }
        _ => {}
    }
    let (t, m) = (t as u128, m as u128);
    let extra = match rule {
        // no local steps pay off unless T exceeds the threshold strictly
        HRule::ScIdentical => above(t as f64 / (kappa.unwrap() * m as f64)),
        HRule::ScIdenticalFiniteSum => above(t as f64 / (18.0 * kappa.unwrap() * m as f64)),
        // ⌊(T/M³)^{1/p}⌋ equals the integer root of ⌊T/M³⌋
        HRule::WcIdentical => int_root(t / (m * m * m), 2) as f64,
        HRule::WcHeterogeneous => int_root(t / (m * m * m), 4) as f64,
    };
    Ok(1 + extra.min(usize::MAX as f64 / 2.0) as usize)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaRule {
    /// `γ = 1/(μa)`, `a = 4κ + t`, `T = 2a ln a`.
    ScUbv { t_param: f64 },
    /// `γ = √M/(4L√T)`, needs `T ≥ M`.
    WcUbv,
    /// `γ = 1/(μa)`, `a = 18κt`, needs `H ≤ t`; `T = 18a ln a`.
    ScFiniteSum { t_param: f64 },
    /// `γ = √M/(10L√T)`, needs `H ≤ √(T/M)`.
    WcFiniteSum,
    /// `γ = √M/(8L√T)`, needs `H ≤ √(T/M)`.
    WcHeterogeneous,
}

impl GammaRule {
    pub fn theorem(self) -> TheoremId {
        match self {
            GammaRule::ScUbv { .. } => TheoremId::ScIidUbv,
            GammaRule::WcUbv => TheoremId::WcIidUbv,
            GammaRule::ScFiniteSum { .. } => TheoremId::ScIidFs,
            GammaRule::WcFiniteSum => TheoremId::WcIidFs,
            GammaRule::WcHeterogeneous => TheoremId::WcHetFs,
        }
    }
}

impl fmt::Display for GammaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaRule::ScUbv { t_param } => write!(f, "sc-ubv:{t_param}"),
            GammaRule::WcUbv => f.write_str("wc-ubv"),
            GammaRule::ScFiniteSum { t_param } => write!(f, "sc-fs:{t_param}"),
            GammaRule::WcFiniteSum => f.write_str("wc-fs"),
            GammaRule::WcHeterogeneous => f.write_str("wc-het"),
        }
    }
}

impl FromStr for GammaRule {
    type Err = String;

    /// `sc-ubv:<t>`, `wc-ubv`, `sc-fs:<t>`, `wc-fs`, `wc-het`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s.as_str(), None),
        };
        let t_param = || -> Result<f64, String> {
            arg.ok_or_else(|| format!("{name} needs a parameter, e.g. {name}:2"))?
                .parse::<f64>()
                .map_err(|e| format!("bad parameter for {name}: {e}"))
        };
        match name {
            "sc-ubv" => Ok(GammaRule::ScUbv { t_param: t_param()? }),
            "wc-ubv" => Ok(GammaRule::WcUbv),
            "sc-fs" => Ok(GammaRule::ScFiniteSum { t_param: t_param()? }),
            "wc-fs" => Ok(GammaRule::WcFiniteSum),
            "wc-het" => Ok(GammaRule::WcHeterogeneous),
            other => Err(format!("unknown stepsize rule {other:?} (sc-ubv:<t>, wc-ubv, sc-fs:<t>, wc-fs, wc-het)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepsizePlan {
    pub gamma: f64,
    pub theorem: TheoremId,
    /// Largest γ the target theorem admits; `gamma` never exceeds it.
    pub limit: f64,
    /// Step count the rule prescribes, rounded up, where it prescribes one.
    pub suggested_t: Option<usize>,
}

fn unmet(rule: &str, condition: String) -> TheoryError {
    TheoryError::Hypothesis { rule: rule.to_string(), condition }
}

/// Planned stepsize, with the rule's hypotheses and the target theorem's
/// stepsize condition checked.
pub fn plan_gamma(rule: GammaRule, l: f64, mu: Option<f64>, m: usize, t: usize, h: usize) -> Result<StepsizePlan, TheoryError> {
    if !(l > 0.0) || !l.is_finite() || m == 0 || t == 0 || h == 0 {
        return Err(TheoryError::Invalid("L, M, T and H must be positive".into()));
    }
    let need_mu = |name: &str| -> Result<f64, TheoryError> {
        match mu {
            Some(v) if v > 0.0 && v.is_finite() => Ok(v),
            _ => Err(unmet(name, "mu > 0".into())),
        }
    };
    let root_ok = |name: &str| -> Result<(), TheoryError> {
        if m < 2 {
            return Err(unmet(name, "M >= 2".into()));
        }
        if (h as u128) * (h as u128) * (m as u128) > t as u128 {
            return Err(unmet(name, format!("H <= sqrt(T/M), got H = {h}, T = {t}, M = {m}")));
        }
        Ok(())
    };
    let sqrt_ratio = (m as f64).sqrt() / (t as f64).sqrt();
    let (gamma, suggested_t, mu_used) = match rule {
        GammaRule::ScUbv { t_param } => {
            let mu = need_mu("sc-ubv")?;
            if !(t_param > 0.0) || !t_param.is_finite() {
                return Err(unmet("sc-ubv", "t > 0".into()));
            }
            let a = 4.0 * l / mu + t_param;
            (1.0 / (mu * a), Some((2.0 * a * a.ln()).ceil().max(1.0) as usize), mu)
        }
        GammaRule::WcUbv => {
            if t < m {
                return Err(unmet("wc-ubv", format!("T >= M, got T = {t}, M = {m}")));
            }
            (sqrt_ratio / (4.0 * l), None, 0.0)
        }
        GammaRule::ScFiniteSum { t_param } => {
            let mu = need_mu("sc-fs")?;
            if !(t_param > 0.0) || !t_param.is_finite() {
                return Err(unmet("sc-fs", "t > 0".into()));
            }
            if h as f64 > t_param {
                return Err(unmet("sc-fs", format!("H <= t, got H = {h}, t = {t_param}")));
            }
            let a = 18.0 * (l / mu) * t_param;
            let gamma = 1.0 / (mu * a);
            if !within(gamma, 1.0 / (9.0 * l * h as f64)) {
                return Err(unmet("sc-fs", "gamma <= 1/(9LH)".into()));
            }
            (gamma, Some((18.0 * a * a.ln()).ceil().max(1.0) as usize), mu)
        }
        GammaRule::WcFiniteSum => {
            root_ok("wc-fs")?;
            (sqrt_ratio / (10.0 * l), None, 0.0)
        }
        GammaRule::WcHeterogeneous => {
            root_ok("wc-het")?;
            (sqrt_ratio / (8.0 * l), None, 0.0)
        }
    };
    let theorem = rule.theorem();
    let limit = stepsize_limit(theorem, l, mu_used, h, m);
    if !within(gamma, limit) {
        return Err(TheoryError::Precondition {
            theorem,
            condition: format!("planned gamma {gamma:e} exceeds the admissible {limit:e}"),
        });
    }
    Ok(StepsizePlan { gamma, theorem, limit, suggested_t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn h_examples() {
        assert_eq!(plan_h(HRule::WcHeterogeneous, 256, 4, None).unwrap(), 2);
        assert_eq!(plan_h(HRule::WcIdentical, 1_000_000, 10, None).unwrap(), 32);
        assert_eq!(plan_h(HRule::ScIdentical, 41, 4, Some(10.0)).unwrap(), 2);
        assert_eq!(plan_h(HRule::ScIdentical, 40, 4, Some(10.0)).unwrap(), 1);
        assert_eq!(plan_h(HRule::ScIdentical, 80, 4, Some(10.0)).unwrap(), 3);
        assert_eq!(plan_h(HRule::ScIdentical, 39, 4, Some(10.0)).unwrap(), 1);
        assert!(matches!(plan_h(HRule::ScIdentical, 39, 4, None), Err(TheoryError::MissingInput("kappa"))));
        assert!(plan_h(HRule::WcIdentical, 39, 4, Some(2.0)).is_err());
        assert!(plan_h(HRule::WcIdentical, 0, 4, None).is_err());
    }

    #[test]
    fn int_roots() {
        assert_eq!(int_root(0, 2), 0);
        assert_eq!(int_root(15, 2), 3);
        assert_eq!(int_root(16, 2), 4);
        assert_eq!(int_root(80, 4), 2);
        assert_eq!(int_root(81, 4), 3);
        assert_eq!(int_root(u64::MAX as u128, 2), 4_294_967_295);
    }

    #[test]
    fn gamma_examples() {
        let p = plan_gamma(GammaRule::WcUbv, 2.0, None, 50, 50, 1).unwrap();
        assert_eq!(p.gamma, 1.0 / 8.0);
        let p = plan_gamma(GammaRule::WcFiniteSum, 1.0, None, 4, 400, 10).unwrap();
        assert_eq!(p.gamma, 0.01);
        for h in 1..=10 {
            let p = plan_gamma(GammaRule::WcFiniteSum, 1.0, None, 4, 400, h).unwrap();
            assert!(p.gamma <= 1.0 / (10.0 * h as f64) * (1.0 + 1e-12));
        }
        assert!(plan_gamma(GammaRule::WcFiniteSum, 1.0, None, 4, 400, 11).is_err());
        assert!(matches!(
            plan_gamma(GammaRule::ScUbv { t_param: 0.0 }, 1.0, Some(0.1), 4, 400, 1),
            Err(TheoryError::Hypothesis { .. })
        ));
        assert!(plan_gamma(GammaRule::WcUbv, 1.0, None, 8, 4, 1).is_err());
        let p = plan_gamma(GammaRule::ScUbv { t_param: 2.0 }, 1.0, Some(0.1), 4, 400, 3).unwrap();
        let a: f64 = 42.0;
        assert_eq!(p.gamma, 1.0 / (0.1 * a));
        assert_eq!(p.suggested_t, Some((2.0 * a * a.ln()).ceil() as usize));
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("sc-fs:3".parse::<GammaRule>().unwrap(), GammaRule::ScFiniteSum { t_param: 3.0 });
        assert!("sc-fs".parse::<GammaRule>().is_err());
        assert_eq!("wc-het".parse::<HRule>().unwrap(), HRule::WcHeterogeneous);
    }

    proptest! {
        #[test]
        fn h_monotone(t in 1usize..10_000_000, m in 1usize..64, kappa in 1.0f64..1e4) {
            for rule in [HRule::ScIdentical, HRule::ScIdenticalFiniteSum, HRule::WcIdentical, HRule::WcHeterogeneous] {
                let k = rule.needs_kappa().then_some(kappa);
                let h = plan_h(rule, t, m, k).unwrap();
                prop_assert!(h >= 1);
                prop_assert!(plan_h(rule, t, m + 1, k).unwrap() <= h);
                prop_assert!(plan_h(rule, t + 1, m, k).unwrap() >= h);
            }
        }

        #[test]
        fn planned_gamma_admissible(
            l in 0.01f64..100.0,
            kappa in 1.0f64..1e4,
            m in 2usize..32,
            t in 1usize..1_000_000,
            h in 1usize..64,
            tp in 0.5f64..100.0,
        ) {
            let mu = l / kappa;
            for rule in [
                GammaRule::ScUbv { t_param: tp },
                GammaRule::WcUbv,
                GammaRule::ScFiniteSum { t_param: tp },
                GammaRule::WcFiniteSum,
                GammaRule::WcHeterogeneous,
            ] {
                if let Ok(p) = plan_gamma(rule, l, Some(mu), m, t, h) {
                    let lim = stepsize_limit(p.theorem, l, if p.theorem.is_strongly_convex() { mu } else { 0.0 }, h, m);
                    prop_assert!(p.gamma <= lim * (1.0 + 1e-12));
                    prop_assert!(p.gamma > 0.0);
                }
            }
        }
    }
}

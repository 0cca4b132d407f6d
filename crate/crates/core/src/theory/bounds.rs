use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::theory::TheoryError;

/// Relative slack for stepsize comparisons, so that a planner's γ landing
/// exactly on a boundary is not rejected by rounding.
pub(crate) const PRECONDITION_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TheoremId {
    /// Strongly convex, identical data, uniformly bounded variance.
    ScIidUbv,
    /// Convex, identical data, uniformly bounded variance.
    WcIidUbv,
    /// Strongly convex, identical data, finite sum.
    ScIidFs,
    /// Convex, identical data, finite sum.
    WcIidFs,
    /// Convex, heterogeneous data, finite sum.
    WcHetFs,
}

impl TheoremId {
    pub const ALL: [TheoremId; 5] =
        [TheoremId::ScIidUbv, TheoremId::WcIidUbv, TheoremId::ScIidFs, TheoremId::WcIidFs, TheoremId::WcHetFs];

    pub fn metric(self) -> Metric {
        match self {
            TheoremId::ScIidUbv | TheoremId::ScIidFs => Metric::DistSq,
            _ => Metric::Subopt,
        }
    }

    pub fn is_strongly_convex(self) -> bool {
        self.metric() == Metric::DistSq
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremId::ScIidUbv => "SC_IID_UBV",
            TheoremId::WcIidUbv => "WC_IID_UBV",
            TheoremId::ScIidFs => "SC_IID_FS",
            TheoremId::WcIidFs => "WC_IID_FS",
            TheoremId::WcHetFs => "WC_HET_FS",
        }
    }
}

impl fmt::Display for TheoremId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TheoremId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let u = s.trim().to_ascii_uppercase().replace('-', "_");
        TheoremId::ALL
            .into_iter()
            .find(|t| t.as_str() == u)
            .ok_or_else(|| format!("unknown theorem id {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    /// `‖x̂_t − x*‖²`.
    DistSq,
    /// `f(x̄_T) − f*` for the theorem's averaging convention.
    Subopt,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::DistSq => "dist_sq",
            Metric::Subopt => "subopt",
        })
    }
}

/// Symbols appearing in the bounds. Only the fields a theorem reads need to
/// be set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundInputs {
    pub l: f64,
    pub mu: Option<f64>,
    pub gamma: f64,
    pub t: usize,
    pub h: usize,
    pub m: usize,
    pub sigma_sq: Option<f64>,
    pub sigma_opt_sq: Option<f64>,
    pub sigma_dif_sq: Option<f64>,
    /// `‖x₀ − x*‖²`.
    pub r0_sq: f64,
}

impl BoundInputs {
    pub fn kappa(&self) -> Option<f64> {
        self.mu.filter(|m| *m > 0.0).map(|m| self.l / m)
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(out, "L={:e}", self.l);
        let _ = writeln!(out, "mu={}", opt(self.mu));
        let _ = writeln!(out, "kappa={}", opt(self.kappa()));
        let _ = writeln!(out, "gamma={:e}", self.gamma);
        let _ = writeln!(out, "T={}", self.t);
        let _ = writeln!(out, "H={}", self.h);
        let _ = writeln!(out, "M={}", self.m);
        let _ = writeln!(out, "sigma_sq={}", opt(self.sigma_sq));
        let _ = writeln!(out, "sigma_opt_sq={}", opt(self.sigma_opt_sq));
        let _ = writeln!(out, "sigma_dif_sq={}", opt(self.sigma_dif_sq));
        let _ = writeln!(out, "r0_sq={:e}", self.r0_sq);
        out
    }

    fn require(&self, name: &'static str, v: Option<f64>) -> Result<f64, TheoryError> {
        match v {
            Some(x) if x.is_finite() && x >= 0.0 => Ok(x),
            Some(_) => Err(TheoryError::Invalid(format!("{name} must be finite and >= 0"))),
            None => Err(TheoryError::MissingInput(name)),
        }
    }

    fn check_common(&self) -> Result<(), TheoryError> {
        if !(self.l > 0.0) || !self.l.is_finite() {
            return Err(TheoryError::Invalid("L must be positive and finite".into()));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(TheoryError::Invalid("gamma must be positive and finite".into()));
        }
        if self.t == 0 || self.h == 0 || self.m == 0 {
            return Err(TheoryError::Invalid("T, H and M must be positive".into()));
        }
        if !(self.r0_sq >= 0.0) || !self.r0_sq.is_finite() {
            return Err(TheoryError::Invalid("r0_sq must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn positive_mu(&self, theorem: TheoremId) -> Result<f64, TheoryError> {
        match self.mu {
            Some(m) if m > 0.0 && m.is_finite() => Ok(m),
            Some(_) => Err(precondition(theorem, "mu > 0")),
            None => Err(TheoryError::MissingInput("mu")),
        }
    }
}

fn precondition(theorem: TheoremId, condition: &str) -> TheoryError {
    TheoryError::Precondition { theorem, condition: condition.to_string() }
}

pub(crate) fn within(gamma: f64, limit: f64) -> bool {
    gamma <= limit * (1.0 + PRECONDITION_SLACK)
}

/// `1/(8L(H−1))`, infinite at `H = 1`.
pub fn het_gap_limit(l: f64, h: usize) -> f64 {
    if h <= 1 {
        f64::INFINITY
    } else {
        1.0 / (8.0 * l * (h - 1) as f64)
    }
}

/// Largest stepsize the theorem admits for these inputs.
pub fn stepsize_limit(theorem: TheoremId, l: f64, mu: f64, h: usize, m: usize) -> f64 {
    let hm1 = (h - 1) as f64;
    match theorem {
        TheoremId::ScIidUbv | TheoremId::WcIidUbv => 1.0 / (4.0 * l),
        TheoremId::ScIidFs => (1.0 / (4.0 * l * (1.0 + 2.0 / m as f64))).min(1.0 / (mu + 8.0 * l * hm1)),
        TheoremId::WcIidFs => 1.0 / (10.0 * l * h as f64),
        TheoremId::WcHetFs => (1.0 / (4.0 * l)).min(het_gap_limit(l, h)),
    }
}

/// The three right-hand-side terms of each bound, without any checks.
pub mod formula {
    pub fn sc_identical_ubv(l: f64, mu: f64, gamma: f64, t: usize, h: usize, m: usize, sigma_sq: f64, r0_sq: f64) -> [f64; 3] {
        let hm1 = (h - 1) as f64;
        [
            (1.0 - gamma * mu).powf(t as f64) * r0_sq,
            gamma * sigma_sq / (mu * m as f64),
            2.0 * l * gamma * gamma * hm1 * sigma_sq / mu,
        ]
    }

    pub fn wc_identical_ubv(l: f64, gamma: f64, t: usize, h: usize, m: usize, sigma_sq: f64, r0_sq: f64) -> [f64; 3] {
        let hm1 = (h - 1) as f64;
        [
            2.0 * r0_sq / (gamma * t as f64),
            2.0 * gamma * sigma_sq / m as f64,
            4.0 * gamma * gamma * l * sigma_sq * hm1,
        ]
    }

    pub fn sc_identical_fs(l: f64, mu: f64, gamma: f64, t: usize, h: usize, m: usize, sigma_opt_sq: f64, r0_sq: f64) -> [f64; 3] {
        let hm1 = (h - 1) as f64;
        [
            (1.0 - gamma * mu).powf(t as f64) * r0_sq,
            2.0 * gamma * sigma_opt_sq / (mu * m as f64),
            4.0 * sigma_opt_sq * gamma * gamma * hm1 * l / mu,
        ]
    }

    pub fn wc_identical_fs(l: f64, gamma: f64, t: usize, h: usize, m: usize, sigma_opt_sq: f64, r0_sq: f64) -> [f64; 3] {
        let hm1 = (h - 1) as f64;
        [
            10.0 * r0_sq / (gamma * t as f64),
            20.0 * gamma * sigma_opt_sq / m as f64,
            40.0 * gamma * gamma * l * sigma_opt_sq * hm1,
        ]
    }

    pub fn wc_heterogeneous(l: f64, gamma: f64, t: usize, h: usize, m: usize, sigma_dif_sq: f64, r0_sq: f64) -> [f64; 3] {
        let hm1 = (h - 1) as f64;
        [
            4.0 * r0_sq / (gamma * t as f64),
            20.0 * gamma * sigma_dif_sq / m as f64,
            16.0 * gamma * gamma * l * hm1 * hm1 * sigma_dif_sq,
        ]
    }
}

/// A theorem's right-hand side for fixed inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCurve {
    pub theorem: TheoremId,
    pub metric: Metric,
    pub inputs: BoundInputs,
    /// Where the bound applies, when it is restricted to sync steps.
    pub sync_steps: Option<Vec<usize>>,
    /// The σ input is itself an estimate.
    pub rhs_estimated: bool,
}

impl BoundCurve {
    /// Checks inputs and preconditions for `theorem`.
    pub fn new(theorem: TheoremId, inputs: BoundInputs) -> Result<Self, TheoryError> {
        inputs.check_common()?;
        let b = &inputs;
        let mu = match theorem {
            TheoremId::ScIidUbv | TheoremId::ScIidFs => b.positive_mu(theorem)?,
            _ => b.mu.unwrap_or(0.0),
        };
        match theorem {
            TheoremId::ScIidUbv | TheoremId::WcIidUbv => {
                b.require("sigma_sq", b.sigma_sq)?;
            }
            TheoremId::ScIidFs | TheoremId::WcIidFs => {
                b.require("sigma_opt_sq", b.sigma_opt_sq)?;
            }
            TheoremId::WcHetFs => {
                b.require("sigma_dif_sq", b.sigma_dif_sq)?;
            }
        }
        if matches!(theorem, TheoremId::WcIidFs | TheoremId::WcHetFs) && b.m < 2 {
            return Err(precondition(theorem, "M >= 2"));
        }
        let limit = stepsize_limit(theorem, b.l, mu, b.h, b.m);
        if !within(b.gamma, limit) {
            let cond = match theorem {
                TheoremId::ScIidUbv | TheoremId::WcIidUbv => "gamma <= 1/(4L)",
                TheoremId::ScIidFs => "gamma <= min{1/(4L(1+2/M)), 1/(mu+8L(H-1))}",
                TheoremId::WcIidFs => "gamma <= 1/(10LH)",
                TheoremId::WcHetFs => "gamma <= min{1/(4L), 1/(8L(H-1))}",
            };
            return Err(precondition(theorem, &format!("{cond} (gamma = {:e}, limit = {limit:e})", b.gamma)));
        }
        Ok(Self { theorem, metric: theorem.metric(), inputs, sync_steps: None, rhs_estimated: false })
    }

    /// Restricts evaluation to the given sync steps.
    pub fn at_sync_steps(mut self, steps: &[usize]) -> Self {
        self.sync_steps = Some(steps.to_vec());
        self
    }

    pub fn estimated(mut self, yes: bool) -> Self {
        self.rhs_estimated = yes;
        self
    }

    /// Whether the bound makes a claim at `t`.
    pub fn applies_at(&self, t: usize) -> bool {
        match self.theorem {
            TheoremId::ScIidFs => {
                t == 0 || self.sync_steps.as_ref().is_none_or(|s| s.binary_search(&t).is_ok())
            }
            TheoremId::ScIidUbv => true,
            _ => t == self.inputs.t,
        }
    }

    /// The three terms at step `t` (with `T = t` for the convex bounds).
    pub fn terms_at(&self, t: usize) -> Result<[f64; 3], TheoryError> {
        let b = &self.inputs;
        if self.theorem == TheoremId::ScIidFs && !self.applies_at(t) {
            return Err(TheoryError::NotASyncStep { t });
        }
        if !self.theorem.is_strongly_convex() && t == 0 {
            return Err(TheoryError::Invalid("convex bounds are defined for T >= 1".into()));
        }
        let mu = b.mu.unwrap_or(0.0);
        Ok(match self.theorem {
            TheoremId::ScIidUbv => {
                formula::sc_identical_ubv(b.l, mu, b.gamma, t, b.h, b.m, b.sigma_sq.unwrap_or(0.0), b.r0_sq)
            }
            TheoremId::WcIidUbv => formula::wc_identical_ubv(b.l, b.gamma, t, b.h, b.m, b.sigma_sq.unwrap_or(0.0), b.r0_sq),
            TheoremId::ScIidFs => {
                formula::sc_identical_fs(b.l, mu, b.gamma, t, b.h, b.m, b.sigma_opt_sq.unwrap_or(0.0), b.r0_sq)
            }
            TheoremId::WcIidFs => formula::wc_identical_fs(b.l, b.gamma, t, b.h, b.m, b.sigma_opt_sq.unwrap_or(0.0), b.r0_sq),
            TheoremId::WcHetFs => {
                formula::wc_heterogeneous(b.l, b.gamma, t, b.h, b.m, b.sigma_dif_sq.unwrap_or(0.0), b.r0_sq)
            }
        })
    }

    pub fn rhs_at(&self, t: usize) -> Result<f64, TheoryError> {
        Ok(self.terms_at(t)?.iter().sum())
    }

    /// The bound at `T`.
    pub fn final_value(&self) -> Result<f64, TheoryError> {
        self.rhs_at(self.inputs.t)
    }

    /// The `t`-independent part of a strongly convex bound.
    pub fn floor(&self) -> Option<f64> {
        self.theorem.is_strongly_convex().then(|| {
            let t = self.terms_at(self.sync_steps.as_ref().and_then(|s| s.last().copied()).unwrap_or(self.inputs.t));
            t.map(|v| v[1] + v[2]).unwrap_or(f64::NAN)
        })
    }

    /// Header block with the inputs, then `t,rhs` at each requested step
    /// where the bound applies.
    pub fn to_csv(&self, steps: &[usize]) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# theorem={}", self.theorem);
        let _ = writeln!(out, "# metric={}", self.metric);
        let _ = writeln!(out, "# rhs_estimated={}", self.rhs_estimated);
        if self.theorem == TheoremId::WcHetFs {
            let _ = writeln!(out, "# stepsize_condition=min{{1/(4L), 1/(8L(H-1))}}");
        }
        for line in self.inputs.to_kv().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out.push_str("t,rhs\n");
        for &t in steps {
            if self.applies_at(t) || self.theorem == TheoremId::ScIidUbv {
                if let Ok(v) = self.rhs_at(t) {
                    let _ = writeln!(out, "{t},{v:e}");
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> BoundInputs {
        BoundInputs {
            l: 1.0,
            mu: Some(0.1),
            gamma: 0.25,
            t: 100,
            h: 4,
            m: 2,
            sigma_sq: Some(1.0),
            sigma_opt_sq: Some(1.0),
            sigma_dif_sq: Some(1.0),
            r0_sq: 1.0,
        }
    }

    #[test]
    fn sc_ubv_worked_instance() {
        // r0²=1, γ=1/(4L), κ=10, M=2, H=4, σ²=1, T=100
        let c = BoundCurve::new(TheoremId::ScIidUbv, base()).unwrap();
        let contraction = (1.0f64 - 0.025).powi(100);
        let oracle = contraction + 0.25 / (0.1 * 2.0) + 2.0 * 0.0625 * 3.0 / 0.1;
        assert!((c.final_value().unwrap() - oracle).abs() <= 1e-12 * oracle);
        assert!((c.final_value().unwrap() - 5.0795).abs() < 1e-3);
    }

    #[test]
    fn sc_ubv_noise_free() {
        let b = BoundInputs { h: 1, sigma_sq: Some(0.0), ..base() };
        let c = BoundCurve::new(TheoremId::ScIidUbv, b).unwrap();
        assert_eq!(c.rhs_at(37).unwrap(), (1.0 - 0.025f64).powf(37.0));
    }

    #[test]
    fn wc_worked_instances() {
        let b = BoundInputs { gamma: 0.02, t: 400, h: 3, m: 4, r0_sq: 2.0, ..base() };
        let wc = BoundCurve::new(TheoremId::WcIidUbv, b.clone()).unwrap().final_value().unwrap();
        assert!((wc - (4.0 / 8.0 + 0.04 / 4.0 + 4.0 * 0.0004 * 2.0)).abs() < 1e-15);
        let b6 = BoundInputs { gamma: 0.02, h: 5, ..b.clone() };
        let fs = BoundCurve::new(TheoremId::WcIidFs, b6).unwrap().final_value().unwrap();
        assert!((fs - (20.0 / 8.0 + 0.4 / 4.0 + 40.0 * 0.0004 * 4.0)).abs() < 1e-14);
        let b7 = BoundInputs { gamma: 0.02, h: 5, ..b };
        let het = BoundCurve::new(TheoremId::WcHetFs, b7).unwrap().final_value().unwrap();
        assert!((het - (8.0 / 8.0 + 0.4 / 4.0 + 16.0 * 0.0004 * 16.0)).abs() < 1e-14);
    }

    #[test]
    fn sc_fs_only_at_sync() {
        let b = BoundInputs { gamma: 0.04, h: 2, t: 10, ..base() };
        let c = BoundCurve::new(TheoremId::ScIidFs, b).unwrap().at_sync_steps(&[2, 4, 6, 8, 10]);
        assert!(c.rhs_at(4).is_ok());
        assert!(matches!(c.rhs_at(5), Err(TheoryError::NotASyncStep { t: 5 })));
        let interp = BoundInputs { gamma: 0.04, h: 2, sigma_opt_sq: Some(0.0), ..base() };
        let c = BoundCurve::new(TheoremId::ScIidFs, interp).unwrap();
        assert_eq!(c.rhs_at(10).unwrap(), (1.0 - 0.004f64).powf(10.0));
    }

    #[test]
    fn preconditions_are_named() {
        let too_big = BoundInputs { gamma: 1.0, ..base() };
        for th in TheoremId::ALL {
            let e = BoundCurve::new(th, too_big.clone()).unwrap_err();
            assert!(matches!(e, TheoryError::Precondition { theorem, .. } if theorem == th), "{th}");
        }
        let no_mu = BoundInputs { mu: None, ..base() };
        assert!(matches!(BoundCurve::new(TheoremId::ScIidUbv, no_mu), Err(TheoryError::MissingInput("mu"))));
        let one = BoundInputs { m: 1, gamma: 0.01, ..base() };
        assert!(BoundCurve::new(TheoremId::WcHetFs, one.clone()).is_err());
        assert!(BoundCurve::new(TheoremId::WcIidFs, one).is_err());
        let no_sigma = BoundInputs { sigma_dif_sq: None, gamma: 0.01, ..base() };
        assert!(matches!(BoundCurve::new(TheoremId::WcHetFs, no_sigma), Err(TheoryError::MissingInput(_))));
    }

    #[test]
    fn h_one_is_vacuous_gap_limit() {
        assert_eq!(het_gap_limit(1.0, 1), f64::INFINITY);
        let b = BoundInputs { h: 1, gamma: 0.25, ..base() };
        let c = BoundCurve::new(TheoremId::WcHetFs, b).unwrap();
        assert_eq!(c.terms_at(100).unwrap()[2], 0.0);
    }

    #[test]
    fn reduction_at_h_one() {
        let b = BoundInputs { h: 1, gamma: 0.02, m: 4, ..base() };
        for th in TheoremId::ALL {
            let c = BoundCurve::new(th, b.clone()).unwrap();
            assert_eq!(c.terms_at(100).unwrap()[2], 0.0, "{th}");
        }
    }

    #[test]
    fn floor_reached_at_large_t() {
        let b = BoundInputs { gamma: 0.02, t: 10_000_000, ..base() };
        for th in [TheoremId::ScIidUbv, TheoremId::ScIidFs] {
            let c = BoundCurve::new(th, b.clone()).unwrap();
            let floor = c.floor().unwrap();
            assert!((c.rhs_at(10_000_000).unwrap() - floor).abs() <= 1e-12 * floor);
        }
    }

    #[test]
    fn theorem_ids_round_trip() {
        for th in TheoremId::ALL {
            assert_eq!(th.as_str().parse::<TheoremId>().unwrap(), th);
        }
    }

    proptest! {
        #[test]
        fn monotone_in_h_sigma_r0_and_t(
            h in 1usize..20,
            sigma in 0.0f64..10.0,
            r0 in 0.0f64..10.0,
            t in 1usize..10_000,
        ) {
            let gamma = 1e-3;
            let b = BoundInputs {
                l: 1.0, mu: Some(0.05), gamma, t, h, m: 4,
                sigma_sq: Some(sigma), sigma_opt_sq: Some(sigma), sigma_dif_sq: Some(sigma), r0_sq: r0,
            };
            for th in TheoremId::ALL {
                let c = BoundCurve::new(th, b.clone()).unwrap();
                let v = c.final_value().unwrap();
                prop_assert!(v >= 0.0);
                let up = |nb: BoundInputs| BoundCurve::new(th, nb).unwrap().final_value().unwrap();
                let more_h = up(BoundInputs { h: h + 1, ..b.clone() });
                prop_assert!(more_h >= v);
                let s2 = Some(sigma + 1.0);
                let more_noise = up(BoundInputs { sigma_sq: s2, sigma_opt_sq: s2, sigma_dif_sq: s2, ..b.clone() });
                prop_assert!(more_noise >= v);
                let farther = up(BoundInputs { r0_sq: r0 + 1.0, ..b.clone() });
                prop_assert!(farther >= v);
                let later = up(BoundInputs { t: t + 1, ..b.clone() });
                if th.is_strongly_convex() {
                    prop_assert!(c.terms_at(t + 1).unwrap()[0] <= c.terms_at(t).unwrap()[0]);
                } else {
                    prop_assert!(later <= v);
                }
            }
        }
    }
}

//! Quasi-likelihood families: link, variance function and the quasi-likelihood
//! `Q(m, y)` together with its derivatives in the linear predictor `m`.
//!
//! A family is the pair (link, variance function). `Q` is defined through its
//! mean-derivative `(y - mu) / V(mu)`; the additive constant is fixed by the
//! saturated model, `Q(mu = y, y) = 0`, so that the deviance
//! `2 * sum {Q(y, y) - Q(mu, y)} = -2 * sum Q(mu, y)` is nonnegative.
//!
//! Writing `mu = g^{-1}(m)`,
//!
//! ```text
//! rho_l(m) = (dmu/dm)^l / V(mu)
//! q1(m, y) = (y - mu) * rho_1(m)
//! q2(m, y) = (y - mu) * rho_1'(m) - rho_2(m)
//! ```
//!
//! For canonical links `rho_1 == 1` and `q2 = -rho_2`, so Fisher scoring and
//! Newton-Raphson coincide.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GaplmError, Result};

/// Linear predictors of logistic models are clamped to this magnitude before
/// exponentiation inside the fitting loops.
pub const LOGIT_CLAMP: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    Logit,
    Identity,
    Log,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Link {
    /// `g(mu)`.
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Link::Logit => (mu / (1.0 - mu)).ln(),
            Link::Identity => mu,
            Link::Log => mu.ln(),
        }
    }

    /// `g^{-1}(m)`.
    pub fn inverse(self, m: f64) -> f64 {
        match self {
            Link::Logit => {
                if m >= 0.0 {
                    1.0 / (1.0 + (-m).exp())
                } else {
                    let e = m.exp();
                    e / (1.0 + e)
                }
            }
            Link::Identity => m,
            Link::Log => m.exp(),
        }
    }

    /// `d mu / d m`.
    pub fn mu_eta(self, m: f64) -> f64 {
        match self {
            Link::Logit => {
                let mu = self.inverse(m);
                mu * (1.0 - mu)
            }
            Link::Identity => 1.0,
            Link::Log => m.exp(),
        }
    }

    /// `d^2 mu / d m^2`.
    pub fn mu_eta2(self, m: f64) -> f64 {
        match self {
            Link::Logit => {
                let mu = self.inverse(m);
                mu * (1.0 - mu) * (1.0 - 2.0 * mu)
            }
            Link::Identity => 0.0,
            Link::Log => m.exp(),
        }
    }

    fn valid_mean(self, mu: f64) -> bool {
        match self {
            Link::Logit => mu > 0.0 && mu < 1.0,
            Link::Identity => mu.is_finite(),
            Link::Log => mu > 0.0 && mu.is_finite(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceFn {
    /// `V(mu) = 1`
    Constant,
    /// `V(mu) = mu (1 - mu)`
    Binomial,
    /// `V(mu) = mu`
    Poisson,
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

impl VarianceFn {
    pub fn value(self, mu: f64) -> f64 {
        match self {
            VarianceFn::Constant => 1.0,
            VarianceFn::Binomial => mu * (1.0 - mu),
            VarianceFn::Poisson => mu,
        }
    }

    pub fn derivative(self, mu: f64) -> f64 {
        match self {
            VarianceFn::Constant => 0.0,
            VarianceFn::Binomial => 1.0 - 2.0 * mu,
            VarianceFn::Poisson => 1.0,
        }
    }

    /// `Q(mu, y) = int_y^mu (y - t) / V(t) dt`.
    pub fn quasi(self, mu: f64, y: f64) -> f64 {
        match self {
            VarianceFn::Constant => -0.5 * (y - mu) * (y - mu),
            VarianceFn::Binomial => {
                xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu) - xlogy(y, y) - xlogy(1.0 - y, 1.0 - y)
            }
            VarianceFn::Poisson => xlogy(y, mu) - mu - xlogy(y, y) + y,
        }
    }

    fn valid_response(self, y: f64) -> bool {
        match self {
            VarianceFn::Constant => y.is_finite(),
            VarianceFn::Binomial => (0.0..=1.0).contains(&y),
            VarianceFn::Poisson => y >= 0.0 && y.is_finite(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    #[serde(rename = "binomial-logit", alias = "bernoulli-logit")]
    BinomialLogit,
    #[serde(rename = "gaussian-identity")]
    GaussianIdentity,
    #[serde(rename = "poisson-log")]
    PoissonLog,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::BinomialLogit => "binomial-logit",
            FamilyKind::GaussianIdentity => "gaussian-identity",
            FamilyKind::PoissonLog => "poisson-log",
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyKind {
    type Err = GaplmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binomial-logit" | "bernoulli-logit" | "binomial" | "logit" => Ok(FamilyKind::BinomialLogit),
            "gaussian-identity" | "gaussian" => Ok(FamilyKind::GaussianIdentity),
            "poisson-log" | "poisson" => Ok(FamilyKind::PoissonLog),
            other => Err(GaplmError::Config(format!(
                "unknown family `{other}`; expected binomial-logit, gaussian-identity or poisson-log"
            ))),
        }
    }
}

/// A quasi-likelihood family. Immutable once built.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiFamily {
    pub kind: FamilyKind,
    pub link: Link,
    pub variance: VarianceFn,
    /// `sigma^2`; fixed at 1 for the binomial and Poisson families.
    pub dispersion: f64,
}

impl QuasiFamily {
    pub fn new(kind: FamilyKind) -> Self {
        let (link, variance) = match kind {
            FamilyKind::BinomialLogit => (Link::Logit, VarianceFn::Binomial),
            FamilyKind::GaussianIdentity => (Link::Identity, VarianceFn::Constant),
            FamilyKind::PoissonLog => (Link::Log, VarianceFn::Poisson),
        };
        QuasiFamily {
            kind,
            link,
            variance,
            dispersion: 1.0,
        }
    }

    pub fn binomial() -> Self {
        Self::new(FamilyKind::BinomialLogit)
    }

    pub fn gaussian() -> Self {
        Self::new(FamilyKind::GaussianIdentity)
    }

    pub fn poisson() -> Self {
        Self::new(FamilyKind::PoissonLog)
    }

    /// Sets `sigma^2` for the Gaussian family.
    pub fn with_dispersion(mut self, dispersion: f64) -> Result<Self> {
        if !(dispersion > 0.0 && dispersion.is_finite()) {
            return Err(GaplmError::Config(format!("dispersion must be positive, got {dispersion}")));
        }
        if self.kind != FamilyKind::GaussianIdentity && dispersion != 1.0 {
            return Err(GaplmError::Config(format!("dispersion of {} is fixed at 1", self.kind)));
        }
        self.dispersion = dispersion;
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn is_canonical(&self) -> bool {
        matches!(
            (self.link, self.variance),
            (Link::Logit, VarianceFn::Binomial)
                | (Link::Identity, VarianceFn::Constant)
                | (Link::Log, VarianceFn::Poisson)
        )
    }

    pub fn mean(&self, m: f64) -> f64 {
        self.link.inverse(m)
    }

    pub fn linear_predictor(&self, mu: f64) -> f64 {
        self.link.link(mu)
    }

    pub fn valid_response(&self, y: f64) -> bool {
        self.variance.valid_response(y)
    }

    /// Clamp applied to linear predictors inside fitting loops. The flag
    /// reports whether the value was moved.
    pub fn clamp_linear_predictor(&self, m: f64) -> (f64, bool) {
        match self.link {
            Link::Logit if m.abs() > LOGIT_CLAMP => (m.signum() * LOGIT_CLAMP, true),
            Link::Log if m > 700.0 => (700.0, true),
            _ => (m, false),
        }
    }

    fn check(&self, m: f64, y: f64) -> Result<()> {
        if !m.is_finite() {
            return Err(GaplmError::InvalidInput(format!("linear predictor must be finite, got {m}")));
        }
        if !self.valid_response(y) {
            return Err(GaplmError::InvalidInput(format!(
                "response {y} is outside the range of the {} family",
                self.kind
            )));
        }
        Ok(())
    }

    /// `Q(g^{-1}(m), y)` with the saturated-model constant.
    pub fn eval_q(&self, m: f64, y: f64) -> Result<f64> {
        self.check(m, y)?;
        Ok(self.q_unchecked(m, y))
    }

    pub(crate) fn q_unchecked(&self, m: f64, y: f64) -> f64 {
        match (self.link, self.variance) {
            (Link::Logit, VarianceFn::Binomial) => {
                // log mu = -softplus(-m), log(1 - mu) = -softplus(m)
                let mut q = 0.0;
                if y != 0.0 {
                    q -= y * softplus(-m);
                }
                if y != 1.0 {
                    q -= (1.0 - y) * softplus(m);
                }
                q - xlogy(y, y) - xlogy(1.0 - y, 1.0 - y)
            }
            (Link::Log, VarianceFn::Poisson) => {
                let ymlogmu = if y == 0.0 { 0.0 } else { y * m };
                ymlogmu - m.exp() - xlogy(y, y) + y
            }
            (link, variance) => variance.quasi(link.inverse(m), y),
        }
    }

    /// `rho_l(m) = (dmu/dm)^l / V(mu)` for `l` in {1, 2}.
    pub fn eval_rho(&self, ell: u8, m: f64) -> Result<f64> {
        if !m.is_finite() {
            return Err(GaplmError::InvalidInput(format!("linear predictor must be finite, got {m}")));
        }
        if !(1..=2).contains(&ell) {
            return Err(GaplmError::InvalidInput(format!("rho index must be 1 or 2, got {ell}")));
        }
        let mu = self.link.inverse(m);
        let v = self.variance.value(mu);
        if !(v >= f64::MIN_POSITIVE) || !v.is_finite() {
            return Err(GaplmError::Boundary { m });
        }
        let d = self.link.mu_eta(m);
        Ok(if ell == 1 { d / v } else { d * d / v })
    }

    /// `rho_2(m)` without the boundary check. Callers clamp `m` first.
    pub(crate) fn weight(&self, m: f64) -> f64 {
        match (self.link, self.variance) {
            (Link::Logit, VarianceFn::Binomial) => self.link.mu_eta(m),
            (Link::Identity, VarianceFn::Constant) => 1.0,
            (Link::Log, VarianceFn::Poisson) => m.exp(),
            (link, variance) => {
                let d = link.mu_eta(m);
                d * d / variance.value(link.inverse(m))
            }
        }
    }

    /// `rho_1(m)` without the boundary check.
    pub(crate) fn rho1_unchecked(&self, m: f64) -> f64 {
        if self.is_canonical() {
            1.0
        } else {
            self.link.mu_eta(m) / self.variance.value(self.link.inverse(m))
        }
    }

    /// `d rho_1 / d m`.
    pub fn rho1_prime(&self, m: f64) -> f64 {
        if self.is_canonical() {
            return 0.0;
        }
        let mu = self.link.inverse(m);
        let v = self.variance.value(mu);
        let d1 = self.link.mu_eta(m);
        let d2 = self.link.mu_eta2(m);
        d2 / v - d1 * d1 * self.variance.derivative(mu) / (v * v)
    }

    /// First partial derivative of `Q` in `m`.
    pub fn eval_q1(&self, m: f64, y: f64) -> Result<f64> {
        self.check(m, y)?;
        let rho1 = if self.is_canonical() { 1.0 } else { self.eval_rho(1, m)? };
        Ok((y - self.mean(m)) * rho1)
    }

    /// Second partial derivative of `Q` in `m`.
    pub fn eval_q2(&self, m: f64, y: f64) -> Result<f64> {
        self.check(m, y)?;
        let rho2 = self.eval_rho(2, m)?;
        Ok((y - self.mean(m)) * self.rho1_prime(m) - rho2)
    }

    /// `2 * sum {Q(y_i, y_i) - Q(mu_i, y_i)}` over means (not linear predictors).
    pub fn deviance(&self, y: &[f64], mu: &[f64]) -> Result<f64> {
        if y.len() != mu.len() {
            return Err(GaplmError::InvalidInput(format!(
                "response has {} entries but mean has {}",
                y.len(),
                mu.len()
            )));
        }
        let mut total = 0.0;
        for (&yi, &mi) in y.iter().zip(mu) {
            if !self.valid_response(yi) {
                return Err(GaplmError::InvalidInput(format!("response {yi} outside family range")));
            }
            if !self.link.valid_mean(mi) {
                return Err(GaplmError::InvalidInput(format!("mean {mi} outside the mean space")));
            }
            total -= 2.0 * self.variance.quasi(mi, yi);
        }
        Ok(total.max(0.0))
    }

    /// Deviance evaluated from linear predictors; numerically safer than
    /// [`QuasiFamily::deviance`] for extreme logistic fits.
    pub fn deviance_linear(&self, y: &[f64], m: &[f64]) -> f64 {
        let total: f64 = y
            .iter()
            .zip(m)
            .map(|(&yi, &mi)| -2.0 * self.q_unchecked(mi, yi))
            .sum();
        total.max(0.0)
    }

    /// Starting mean used when no coefficient vector is available.
    pub(crate) fn initial_mean(&self, y: f64, ybar: f64) -> f64 {
        match self.kind {
            FamilyKind::BinomialLogit => (y + ybar) / 2.0,
            FamilyKind::GaussianIdentity => y,
            FamilyKind::PoissonLog => y + 0.1,
        }
    }
}

impl FromStr for QuasiFamily {
    type Err = GaplmError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(QuasiFamily::new(s.parse()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn q_examples() {
        let g = QuasiFamily::gaussian();
        assert_eq!(g.eval_q(1.7, 1.7).unwrap(), 0.0);

        let b = QuasiFamily::binomial();
        assert_abs_diff_eq!(b.eval_q(0.0, 1.0).unwrap(), 0.5f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.eval_q(40.0, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(b.eval_q(800.0, 1.0).unwrap(), 0.0, epsilon = 1e-300);
    }

    #[test]
    fn q_rejects_bad_input() {
        let b = QuasiFamily::binomial();
        assert!(matches!(b.eval_q(f64::NAN, 1.0), Err(GaplmError::InvalidInput(_))));
        assert!(matches!(b.eval_q(0.0, 1.5), Err(GaplmError::InvalidInput(_))));
        let p = QuasiFamily::poisson();
        assert!(p.eval_q(0.0, -1.0).is_err());
        assert!(QuasiFamily::gaussian().eval_q(f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn rho_examples() {
        let b = QuasiFamily::binomial();
        for m in [-5.0, -0.3, 0.0, 2.0, 9.0] {
            assert_abs_diff_eq!(b.eval_rho(1, m).unwrap(), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(b.eval_rho(2, 0.0).unwrap(), 0.25, epsilon = 1e-15);
        let g = QuasiFamily::gaussian();
        assert_eq!(g.eval_rho(2, 3.3).unwrap(), 1.0);
        assert!(matches!(b.eval_rho(2, 800.0), Err(GaplmError::Boundary { m }) if m == 800.0));
        assert!(b.eval_rho(3, 0.0).is_err());
    }

    #[test]
    fn q1_q2_examples() {
        let b = QuasiFamily::binomial();
        assert_abs_diff_eq!(b.eval_q1(0.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
        for y in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(b.eval_q2(0.0, y).unwrap(), -0.25, epsilon = 1e-15);
        }
        let g = QuasiFamily::gaussian();
        assert_eq!(g.eval_q1(2.0, 5.0).unwrap(), 3.0);
        assert_eq!(g.eval_q2(2.0, 5.0).unwrap(), -1.0);
    }

    #[test]
    fn deviance_examples() {
        let b = QuasiFamily::binomial();
        assert_abs_diff_eq!(b.deviance(&[0.2, 0.7], &[0.2, 0.7]).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            b.deviance(&[1.0, 0.0], &[0.5, 0.5]).unwrap(),
            2.772588722239781,
            epsilon = 1e-12
        );
        let g = QuasiFamily::gaussian();
        assert_abs_diff_eq!(g.deviance(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 5.0, epsilon = 1e-15);
        assert!(g.deviance(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn link_roundtrip() {
        for kind in [FamilyKind::BinomialLogit, FamilyKind::GaussianIdentity, FamilyKind::PoissonLog] {
            let f = QuasiFamily::new(kind);
            for &m in &[-8.0, -1.0, 0.0, 0.5, 3.0, 8.0] {
                assert_abs_diff_eq!(f.linear_predictor(f.mean(m)), m, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn names_parse() {
        assert_eq!("binomial-logit".parse::<FamilyKind>().unwrap(), FamilyKind::BinomialLogit);
        assert_eq!("bernoulli-logit".parse::<FamilyKind>().unwrap(), FamilyKind::BinomialLogit);
        assert_eq!("poisson-log".parse::<FamilyKind>().unwrap(), FamilyKind::PoissonLog);
        assert!("gamma-inverse".parse::<FamilyKind>().is_err());
    }

    #[test]
    fn dispersion_is_fixed_for_binomial() {
        assert!(QuasiFamily::binomial().with_dispersion(2.0).is_err());
        assert_eq!(QuasiFamily::gaussian().with_dispersion(2.0).unwrap().dispersion, 2.0);
    }

    #[test]
    fn clamp_reports() {
        let b = QuasiFamily::binomial();
        assert_eq!(b.clamp_linear_predictor(45.0), (30.0, true));
        assert_eq!(b.clamp_linear_predictor(-45.0), (-30.0, true));
        assert_eq!(b.clamp_linear_predictor(3.0), (3.0, false));
    }
}

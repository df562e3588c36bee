//! Scalar kernel: q-shifted factorials, theta functions and `ᵣφₛ` series.

use crate::{Error, Result, C64};
use serde::{Deserialize, Serialize};

/// Largest admissible base. Products and series get long as q → 1.
pub const Q_MAX: f64 = 0.999;

/// Infinite products stop once |x| q^j drops below this.
const PRODUCT_CUTOFF: f64 = 1e-18;

/// Relative tolerance for recognising a parameter as q^{-m}.
const TERMINATION_RTOL: f64 = 1e-13;

const SERIES_MAX_TERMS: usize = 200_000;

/// The base q of all q-series, 0 < q ≤ 0.999.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QBase(f64);

impl QBase {
    pub fn new(q: f64) -> Result<Self> {
        if !q.is_finite() || q <= 0.0 || q >= 1.0 {
            return Err(Error::Config(format!("q = {q} is not in (0,1)")));
        }
        if q > Q_MAX {
            return Err(Error::Config(format!("q = {q} exceeds {Q_MAX}")));
        }
        Ok(QBase(q))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    /// q^n for any integer n.
    #[inline]
    pub fn pow(self, n: i64) -> f64 {
        if n.unsigned_abs() < i32::MAX as u64 {
            self.0.powi(n as i32)
        } else {
            (n as f64 * self.0.ln()).exp()
        }
    }

    /// q^{n/2}.
    #[inline]
    pub fn pow_half(self, n: i64) -> f64 {
        self.pow(n.div_euclid(2)) * if n.rem_euclid(2) == 1 { self.0.sqrt() } else { 1.0 }
    }

    /// The base q², used by the split theta identities.
    pub fn squared(self) -> QBase {
        QBase(self.0 * self.0)
    }
}

impl TryFrom<f64> for QBase {
    type Error = Error;
    fn try_from(q: f64) -> Result<Self> {
        QBase::new(q)
    }
}

impl From<QBase> for f64 {
    fn from(q: QBase) -> f64 {
        q.0
    }
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: C64,
    comp: C64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: C64) {
        self.sum.re = neumaier(self.sum.re, x.re, &mut self.comp.re);
        self.sum.im = neumaier(self.sum.im, x.im, &mut self.comp.im);
    }

    #[inline]
    pub fn value(&self) -> C64 {
        self.sum + self.comp
    }
}

#[inline]
fn neumaier(sum: f64, x: f64, comp: &mut f64) -> f64 {
    let t = sum + x;
    if sum.abs() >= x.abs() {
        *comp += (sum - t) + x;
    } else {
        *comp += (x - t) + sum;
    }
    t
}

/// Sum with compensation, largest magnitudes first.
pub fn sum_by_magnitude(mut terms: Vec<C64>) -> C64 {
    terms.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    let mut acc = CompensatedSum::new();
    for t in terms {
        acc.add(t);
    }
    acc.value()
}

/// (x;q)_n for any integer n. Negative n uses (x;q)_{-n} = 1/(xq^{-n};q)_n.
pub fn qpoch(x: C64, q: QBase, n: i64) -> Result<C64> {
    if n >= 0 {
        let mut p = C64::new(1.0, 0.0);
        let mut qj = 1.0;
        for _ in 0..n {
            p *= 1.0 - x * qj;
            qj *= q.get();
        }
        return Ok(p);
    }
    let m = -n;
    let mut den = C64::new(1.0, 0.0);
    for j in 1..=m {
        let xj = x * q.pow(-j);
        let f = 1.0 - xj;
        if f.norm() <= 1e-15 * xj.norm().max(1.0) {
            return Err(Error::Pole(format!("(x;q)_{n} with x = {x}: factor 1 - x q^-{j} vanishes")));
        }
        den *= f;
    }
    Ok(1.0 / den)
}

/// (x;q)_∞, with the tail ∏_{j≥J}(1 - x q^j) ≈ exp(-x q^J/(1-q)).
pub fn qpoch_inf(x: C64, q: QBase) -> C64 {
    let qv = q.get();
    let ax = x.norm();
    let mut p = C64::new(1.0, 0.0);
    if ax == 0.0 {
        return p;
    }
    let mut xqj = x;
    while xqj.norm() >= PRODUCT_CUTOFF {
        p *= 1.0 - xqj;
        xqj *= qv;
    }
    p * (-xqj / (1.0 - qv)).exp()
}

/// ln (x;q)_∞ (any branch), for arguments where the product leaves double range.
pub fn ln_qpoch_inf(x: C64, q: QBase) -> C64 {
    let qv = q.get();
    let mut acc = C64::new(0.0, 0.0);
    if x.norm() == 0.0 {
        return acc;
    }
    let mut xqj = x;
    while xqj.norm() >= PRODUCT_CUTOFF {
        acc += (1.0 - xqj).ln();
        xqj *= qv;
    }
    acc - xqj / (1.0 - qv)
}

/// ln θ(x;q) (any branch).
pub fn ln_theta(x: C64, q: QBase) -> Result<C64> {
    if x.norm() == 0.0 {
        return Err(Error::Domain("theta at x = 0".into()));
    }
    Ok(ln_qpoch_inf(x, q) + ln_qpoch_inf(q.get() / x, q))
}

/// ∏ (x_i;q)_∞.
pub fn qpoch_inf_prod(xs: &[C64], q: QBase) -> C64 {
    xs.iter().map(|&x| qpoch_inf(x, q)).product()
}

/// θ(x;q) = (x;q)_∞ (q/x;q)_∞.
pub fn theta(x: C64, q: QBase) -> Result<C64> {
    if x.norm() == 0.0 {
        return Err(Error::Domain("theta at x = 0".into()));
    }
    Ok(qpoch_inf(x, q) * qpoch_inf(q.get() / x, q))
}

/// ∏ θ(x_i;q).
pub fn theta_prod(xs: &[C64], q: QBase) -> Result<C64> {
    xs.iter().try_fold(C64::new(1.0, 0.0), |acc, &x| Ok(acc * theta(x, q)?))
}

/// If `a` equals q^{-m} for some m ≥ 0, return m.
pub fn negative_power_index(a: C64, q: QBase) -> Option<u64> {
    if a.re <= 0.0 || a.im.abs() > TERMINATION_RTOL * a.norm() {
        return None;
    }
    let m = (-(a.re.ln()) / q.get().ln()).round();
    if m < 0.0 || m > 1e6 {
        return None;
    }
    let target = q.pow(-(m as i64));
    ((a - target).norm() <= TERMINATION_RTOL * target).then_some(m as u64)
}

/// The basic hypergeometric series ᵣφₛ(upper; lower; q, arg).
///
/// Summed by term recurrence with compensation. A terminating series
/// stops exactly at its last nonzero term.
pub fn rphis(upper: &[C64], lower: &[C64], q: QBase, arg: C64) -> Result<C64> {
    let r = upper.len() as i64;
    let s = lower.len() as i64;
    let e = s + 1 - r;
    let terminate = upper.iter().filter_map(|&a| negative_power_index(a, q)).min();

    for &b in lower {
        if let Some(m) = negative_power_index(b, q) {
            if terminate.map_or(true, |n| m < n) {
                return Err(Error::Pole(format!("lower parameter {b} is q^-{m}")));
            }
        }
    }
    if terminate.is_none() && arg.norm() > 0.0 {
        if r > s + 1 {
            return Err(Error::Divergence(format!("{r}phi{s} with nonzero argument")));
        }
        if r == s + 1 && arg.norm() >= 1.0 {
            return Err(Error::Divergence(format!("|arg| = {} >= 1", arg.norm())));
        }
    }

    let qv = q.get();
    let mut acc = CompensatedSum::new();
    let mut term = C64::new(1.0, 0.0);
    let mut qk = 1.0;
    let mut small_run = 0;
    for k in 0..SERIES_MAX_TERMS {
        acc.add(term);
        if terminate == Some(k as u64) {
            return Ok(acc.value());
        }
        let mut ratio = arg / (1.0 - qk * qv);
        for &a in upper {
            ratio *= 1.0 - a * qk;
        }
        for &b in lower {
            ratio /= 1.0 - b * qk;
        }
        if e != 0 {
            ratio *= (-qk).powi(e as i32);
        }
        term *= ratio;
        qk *= qv;
        if term.norm() == 0.0 {
            return Ok(acc.value());
        }
        if term.norm() < 1e-16 * acc.value().norm() {
            small_run += 1;
            if small_run >= 5 {
                return Ok(acc.value());
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::Divergence(format!("no convergence in {SERIES_MAX_TERMS} terms")))
}

/// ₂φ₁(a, b; c; q, x).
pub fn phi21(a: C64, b: C64, c: C64, q: QBase, x: C64) -> Result<C64> {
    rphis(&[a, b], &[c], q, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn q5() -> QBase {
        QBase::new(0.5).unwrap()
    }

    #[test]
    fn base_validation() {
        assert!(QBase::new(0.0).is_err());
        assert!(QBase::new(1.0).is_err());
        assert!(QBase::new(0.9995).is_err());
        assert!(QBase::new(0.999).is_ok());
    }

    #[test]
    fn finite_products() {
        assert_eq!(qpoch(c(0.3), q5(), 0).unwrap(), c(1.0));
        assert_eq!(qpoch(c(2.0), q5(), 2).unwrap(), c(0.0));
        assert!((qpoch(c(0.3), q5(), 3).unwrap() - c(0.7 * 0.85 * 0.925)).norm() < 1e-15);
    }

    #[test]
    fn negative_index_matches_quotient() {
        let q = q5();
        let x = C64::new(0.3, 0.2);
        for n in 1..6 {
            let direct = qpoch(x, q, -n).unwrap();
            let quotient = qpoch_inf(x, q) / qpoch_inf(x * q.pow(-n), q);
            assert!((direct - quotient).norm() < 1e-13 * quotient.norm());
        }
        assert!(matches!(qpoch(c(0.25), q, -3), Err(Error::Pole(_))));
    }

    #[test]
    fn infinite_products() {
        assert_eq!(qpoch_inf(c(0.0), q5()), c(1.0));
        assert_eq!(qpoch_inf(c(1.0), q5()), c(0.0));
        // (1/2; 1/2)_∞, a classical constant
        assert!((qpoch_inf(c(0.5), q5()).re - 0.288_788_095_086_602_4).abs() < 1e-15);
    }

    #[test]
    fn logarithmic_forms_agree() {
        let q = QBase::new(0.3).unwrap();
        for x in [C64::new(0.4, -0.7), C64::new(-3.0, 0.5), C64::new(12.0, 1.0)] {
            let d = ln_qpoch_inf(x, q).exp() - qpoch_inf(x, q);
            assert!(d.norm() < 1e-13 * qpoch_inf(x, q).norm());
            let t = ln_theta(x, q).unwrap().exp() - theta(x, q).unwrap();
            assert!(t.norm() < 1e-13 * theta(x, q).unwrap().norm());
        }
    }

    #[test]
    fn theta_basics() {
        let q = q5();
        assert!(theta(c(0.5), q).unwrap().norm() < 1e-17);
        assert!(matches!(theta(c(0.0), q), Err(Error::Domain(_))));
        let x = C64::new(0.7, -1.3);
        let d = theta(x, q).unwrap() - theta(q.get() / x, q).unwrap();
        assert!(d.norm() < 1e-14);
        let t = theta(c(-1.0), q).unwrap();
        assert!(t.re > 0.0 && t.im == 0.0);
    }

    #[test]
    fn series_trivial_cases() {
        let q = q5();
        let b = C64::new(0.2, 0.1);
        let cc = C64::new(0.3, 0.0);
        assert_eq!(phi21(c(0.4), b, cc, q, c(0.0)).unwrap(), c(1.0));
        assert_eq!(phi21(c(1.0), b, cc, q, c(0.7)).unwrap(), c(1.0));
    }

    #[test]
    fn terminating_series_stops() {
        let q = q5();
        let a = c(4.0); // q^{-2}
        let b = C64::new(0.3, 0.4);
        let d = C64::new(-0.2, 0.1);
        let e = c(0.6);
        let x = c(3.0);
        let got = rphis(&[a, b, d], &[e, c(0.0)], q, x).unwrap();
        let mut want = c(0.0);
        for k in 0..=2 {
            let num = qpoch(a, q, k).unwrap() * qpoch(b, q, k).unwrap() * qpoch(d, q, k).unwrap();
            let den = qpoch(q.get().into(), q, k).unwrap() * qpoch(e, q, k).unwrap();
            want += num / den * x.powi(k as i32);
        }
        assert!((got - want).norm() < 1e-13 * want.norm());
    }

    #[test]
    fn series_errors() {
        let q = q5();
        assert!(matches!(phi21(c(0.3), c(0.2), c(0.1), q, c(1.2)), Err(Error::Divergence(_))));
        assert!(matches!(phi21(c(0.3), c(0.2), c(2.0), q, c(0.5)), Err(Error::Pole(_))));
        assert!(matches!(rphis(&[c(0.3), c(0.2), c(0.1)], &[], q, c(0.1)), Err(Error::Divergence(_))));
    }
}

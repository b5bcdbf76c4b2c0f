//! Hoeffding–Bentkus p-values for the null "mean loss exceeds `alpha`".
//!
//! The binomial tail is evaluated in log space. Each log-pmf term uses the
//! saddle-point expansion (Stirling remainder plus the `bd0` deviance term),
//! which keeps full relative precision for large `n` where a naive
//! `ln Γ` difference would cancel catastrophically.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

/// A p-value in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct PValue(f64);

impl PValue {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 && value <= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("p-value {value} outside (0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Bernoulli KL divergence `h(a, b)`.
pub fn kl_bernoulli(a: f64, b: f64) -> Result<f64> {
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::Domain(format!("kl_bernoulli: b = {b} not in (0, 1)")));
    }
    if !(0.0..=1.0).contains(&a) {
        return Err(Error::Domain(format!("kl_bernoulli: a = {a} not in [0, 1]")));
    }
    let h = if a == 0.0 {
        -(-b).ln_1p()
    } else if a == 1.0 {
        -b.ln()
    } else {
        a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln()
    };
    Ok(h.max(0.0))
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(n!) - [(n + 1/2) ln n - n + ln √(2π)]` for integer `n >= 1`.
fn stirling_remainder(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        let ln_fact: f64 = (2..=n as u64).map(|k| (k as f64).ln()).sum();
        return ln_fact - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// Deviance term `x ln(x/np) + np - x`, accurate when `x ≈ np`.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `ln P(Bin(n, p) = k)`.
pub fn binom_log_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let (x, nf) = (k as f64, n as f64);
    if k == 0 {
        if n == 0 {
            return 0.0;
        }
        return if p < 0.1 { -deviance(nf, nf * q) - nf * p } else { nf * q.ln() };
    }
    if k == n {
        return if q < 0.1 { -deviance(nf, nf * p) - nf * q } else { nf * p.ln() };
    }
    let lc = stirling_remainder(nf)
        - stirling_remainder(x)
        - stirling_remainder(nf - x)
        - deviance(x, nf * p)
        - deviance(nf - x, nf * q);
    let lf = LN_2 + PI.ln() + x.ln() + (-x / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln P(Bin(n, p) <= k)`, summing pmf terms with a streaming log-sum-exp.
pub fn binom_log_cdf(k: u64, n: u64, p: f64) -> f64 {
    if k >= n || p == 0.0 {
        return 0.0;
    }
    let mut max = f64::NEG_INFINITY;
    let mut scaled = 0.0;
    for j in 0..=k {
        let t = binom_log_pmf(j, n, p);
        if t == f64::NEG_INFINITY {
            continue;
        }
        if t > max {
            scaled = scaled * (max - t).exp() + 1.0;
            max = t;
        } else {
            scaled += (t - max).exp();
        }
    }
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    (max + scaled.ln()).min(0.0)
}

/// `P(Bin(n, p) <= min(k, n))`.
pub fn binom_cdf(k: u64, n: u64, p: f64) -> f64 {
    binom_log_cdf(k, n, p).exp()
}

fn check_hb_args(n: usize, alpha: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("hb_pvalue: n must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("hb_pvalue: alpha = {alpha} not in (0, 1)")));
    }
    Ok(())
}

fn hb_from_parts(rhat: f64, k: u64, n: usize, alpha: f64) -> Result<PValue> {
    let ln_hoeffding = -(n as f64) * kl_bernoulli(rhat.min(alpha), alpha)?;
    if ln_hoeffding == 0.0 {
        return Ok(PValue(1.0));
    }
    let ln_bentkus = 1.0 + binom_log_cdf(k, n as u64, alpha);
    let ln_p = ln_hoeffding.min(ln_bentkus).min(0.0);
    Ok(PValue(ln_p.exp().max(f64::MIN_POSITIVE)))
}

/// Hoeffding–Bentkus p-value for an empirical risk `rhat` over `n` samples.
pub fn hb_pvalue(rhat: f64, n: usize, alpha: f64) -> Result<PValue> {
    check_hb_args(n, alpha)?;
    if !(0.0..=1.0).contains(&rhat) {
        return Err(Error::Domain(format!("hb_pvalue: rhat = {rhat} not in [0, 1]")));
    }
    let k = (n as f64 * rhat).ceil() as u64;
    hb_from_parts(rhat, k, n, alpha)
}

/// Same as [`hb_pvalue`] but takes the raw loss sum, so the binomial count is
/// `⌈Σ losses⌉` without a divide-then-multiply round trip.
pub fn hb_pvalue_from_sum(loss_sum: f64, n: usize, alpha: f64) -> Result<PValue> {
    check_hb_args(n, alpha)?;
    if !(0.0..=n as f64).contains(&loss_sum) {
        return Err(Error::Domain(format!("hb_pvalue: loss sum {loss_sum} not in [0, {n}]")));
    }
    let k = loss_sum.ceil() as u64;
    hb_from_parts(loss_sum / n as f64, k, n, alpha)
}

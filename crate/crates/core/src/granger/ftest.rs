//! Nested-model F-test and the F distribution tail.

use serde::{Deserialize, Serialize};

use crate::node::LaggedNode;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrangerTestResult {
    pub target: LaggedNode,
    pub source_group: Vec<LaggedNode>,
    /// `+∞` when the full model fits exactly but the restricted one does not.
    #[serde(with = "extended_f64")]
    pub f_statistic: f64,
    #[serde(with = "extended_f64")]
    pub p_value: f64,
    #[serde(with = "extended_f64")]
    pub rss_restricted: f64,
    #[serde(with = "extended_f64")]
    pub rss_full: f64,
    pub dof_num: usize,
    pub dof_den: usize,
}

/// F statistic and upper-tail p-value for adding `q` regressors to a model,
/// with `dof_den = n − k` for the full model.
pub fn f_statistic(rss_restricted: f64, rss_full: f64, q: usize, dof_den: usize) -> (f64, f64) {
    let reduction = rss_restricted - rss_full;
    if q == 0 || !(reduction > 0.0) {
        return (0.0, 1.0);
    }
    if rss_full <= 0.0 {
        return (f64::INFINITY, 0.0);
    }
    let f = (reduction / q as f64) / (rss_full / dof_den as f64);
    (f, f_upper_tail(f, q as f64, dof_den as f64))
}

pub fn granger_f_test(
    target: LaggedNode,
    source_group: Vec<LaggedNode>,
    rss_restricted: f64,
    rss_full: f64,
    dof_den: usize,
) -> GrangerTestResult {
    let q = source_group.len();
    let (f, p) = f_statistic(rss_restricted, rss_full, q, dof_den);
    GrangerTestResult {
        target,
        source_group,
        f_statistic: f,
        p_value: p,
        // Rounding can leave the nested fit a hair above the restricted one.
        rss_restricted: rss_restricted.max(rss_full),
        rss_full,
        dof_num: q,
        dof_den,
    }
}

/// `P(F > f)` for `F ~ F(d1, d2)`.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let x = d2 / (d2 + d1 * f);
    regularized_incomplete_beta(d2 / 2.0, d1 / 2.0, x).clamp(0.0, 1.0)
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `I_x(a, b)` by the Lentz continued fraction, using the symmetry
/// `I_x(a, b) = 1 − I_{1−x}(b, a)` where the fraction converges slowly.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_fraction(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Serializes non-finite values as the strings `"inf"`, `"-inf"`, `"nan"`.
pub(crate) mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

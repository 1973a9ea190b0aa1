use statrs::function::factorial::ln_binomial;

use crate::keying::check_delta;
use crate::{Error, Result};

/// `P(X > t)` for `X ~ Binomial(n, delta)`.
///
/// The tail is summed directly rather than as `1 - CDF(t)`, so tiny survival
/// probabilities keep full relative precision. Terms are expressed relative
/// to an anchor term (the mode, or `t + 1` when that lies above it) computed
/// in log space, and reached by multiplicative ratio steps outward from it.
pub fn binomial_sf(t: u64, n: u64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if t > n {
        return Err(Error::out_of_range("t", t as f64, "[0, n]"));
    }
    if t == n {
        return Ok(0.0);
    }

    let lower = t + 1;
    let mode = (((n + 1) as f64 * delta).floor() as u64).min(n);
    let anchor = lower.max(mode);
    let ln_anchor = ln_binomial(n, anchor)
        + anchor as f64 * delta.ln()
        + (n - anchor) as f64 * (-delta).ln_1p();

    let odds = delta / (1.0 - delta);
    let mut sum = 1.0;

    // anchor+1 ..= n, terms decreasing
    let mut term = 1.0;
    for i in anchor..n {
        term *= (n - i) as f64 / (i + 1) as f64 * odds;
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }

    // anchor-1 down to lower, terms decreasing; the last addition is the
    // term at `lower`, so sf(t) = sf(t+1) + pmf(t+1) in the same order
    let mut term = 1.0;
    let mut i = anchor;
    while i > lower {
        term *= i as f64 / (n - i + 1) as f64 / odds;
        sum += term;
        i -= 1;
        if term < sum * 1e-18 {
            break;
        }
    }

    Ok((ln_anchor.exp() * sum).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        assert_eq!(binomial_sf(10, 10, 0.5).unwrap(), 0.0);
        assert!((binomial_sf(7, 10, 0.5).unwrap() - 0.0546875).abs() < 1e-15);
        assert!((binomial_sf(0, 10, 0.5).unwrap() - 1023.0 / 1024.0).abs() < 1e-15);
        assert!((binomial_sf(0, 1, 0.3).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(binomial_sf(11, 10, 0.5).is_err());
        assert!(binomial_sf(1, 10, 0.0).is_err());
        assert!(binomial_sf(1, 10, 1.0).is_err());
    }

    #[test]
    fn large_n_stays_finite_and_ordered() {
        let n = 1_000_000;
        let a = binomial_sf(500_000, n, 0.5).unwrap();
        assert!((a - 0.5).abs() < 1e-3, "{a}");
        let b = binomial_sf(502_000, n, 0.5).unwrap();
        assert!(b < a && b > 0.0);
        assert_eq!(binomial_sf(999_999, n, 0.5).unwrap(), 0.0); // 2^-1e6 underflows
    }

    #[test]
    fn deep_tail_precision() {
        // P(X > 99) for n = 100 is delta^100
        let v = binomial_sf(99, 100, 0.5).unwrap();
        assert!((v / 0.5f64.powi(100) - 1.0).abs() < 1e-12);
    }

    mod oracle {
        use num_bigint::BigInt;
        use num_rational::BigRational;
        use num_traits::{One, ToPrimitive, Zero};
        use proptest::prelude::*;

        use super::binomial_sf;

        fn choose(n: u64, k: u64) -> BigInt {
            (0..k).fold(BigInt::one(), |acc, i| acc * (n - i) / (i + 1))
        }

        /// Exact tail for `delta = num/den`.
        fn exact_sf(t: u64, n: u64, num: i64, den: i64) -> f64 {
            let p = BigRational::new(num.into(), den.into());
            let q = BigRational::one() - &p;
            let mut sum = BigRational::zero();
            for k in t + 1..=n {
                let mut term = BigRational::from_integer(choose(n, k));
                for _ in 0..k {
                    term *= &p;
                }
                for _ in k..n {
                    term *= &q;
                }
                sum += term;
            }
            sum.to_f64().unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(256))]

            #[test]
            fn matches_exact_rational(n in 1u64..=64, t_frac in 0.0f64..1.0, which in 0usize..3) {
                let (num, den) = [(1, 4), (1, 2), (3, 4)][which];
                let t = ((n as f64) * t_frac) as u64;
                let exact = exact_sf(t, n, num, den);
                let got = binomial_sf(t, n, num as f64 / den as f64).unwrap();
                if exact == 0.0 {
                    prop_assert_eq!(got, 0.0);
                } else {
                    prop_assert!(((got - exact) / exact).abs() < 1e-9, "n={} t={} got={} exact={}", n, t, got, exact);
                }
            }

            #[test]
            fn non_increasing_in_t(n in 1u64..=400, delta in 0.01f64..0.99) {
                let mut prev = 1.0;
                for t in 0..=n {
                    let v = binomial_sf(t, n, delta).unwrap();
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert!(v <= prev * (1.0 + 1e-12), "t={} v={} prev={}", t, v, prev);
                    prev = v;
                }
            }
        }
    }
}

//! Real dilogarithm and trilogarithm, including the real parts on the branch
//! cut `x > 1`, plus derivatives of the Bose function.

use std::f64::consts::PI;

const ZETA2: f64 = PI * PI / 6.0;
const ZETA3: f64 = 1.202_056_903_159_594_3;

fn series(x: f64, power: i32) -> f64 {
    let mut sum = 0.0;
    let mut xk = x;
    for k in 1..400 {
        let term = xk / (k as f64).powi(power);
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
        xk *= x;
    }
    sum
}

/// `Li_2(x)` for `0 <= x <= 1`.
pub fn li2(x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "li2 argument {x} outside [0, 1]");
    if x == 0.0 {
        0.0
    } else if x == 1.0 {
        ZETA2
    } else if x <= 0.5 {
        series(x, 2)
    } else {
        ZETA2 - x.ln() * (-x).ln_1p() - series(1.0 - x, 2)
    }
}

/// `Li_3(x)` for `0 <= x <= 1`.
pub fn li3(x: f64) -> f64 {
    assert!((0.0..=1.0).contains(&x), "li3 argument {x} outside [0, 1]");
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return ZETA3;
    }
    if x <= 0.5 {
        return series(x, 3);
    }
    // expansion in mu = ln x around mu = 0, |mu| < ln 2
    let mu = x.ln();
    // zeta(3 - k) for k = 3, 4, ...: zeta(0), zeta(-1), zeta(-2), ...
    const ZETA_NEG: [f64; 12] = [
        -0.5,
        -1.0 / 12.0,
        0.0,
        1.0 / 120.0,
        0.0,
        -1.0 / 252.0,
        0.0,
        1.0 / 240.0,
        0.0,
        -1.0 / 132.0,
        0.0,
        691.0 / 32760.0,
    ];
    let mut sum = ZETA3 + ZETA2 * mu + 0.5 * mu * mu * (1.5 - (-mu).ln());
    let mut term = mu * mu / 2.0;
    for (j, z) in ZETA_NEG.iter().enumerate() {
        let k = (j + 3) as f64;
        term *= mu / k;
        sum += z * term;
    }
    sum
}

/// Real part of `Li_2(x)` for `x >= 0`.
pub fn re_li2(x: f64) -> f64 {
    if x <= 1.0 {
        li2(x)
    } else {
        let l = x.ln();
        PI * PI / 3.0 - 0.5 * l * l - li2(1.0 / x)
    }
}

/// Real part of `Li_3(x)` for `x >= 0`.
pub fn re_li3(x: f64) -> f64 {
    if x <= 1.0 {
        li3(x)
    } else {
        let l = x.ln();
        li3(1.0 / x) - l * l * l / 6.0 + PI * PI * l / 3.0
    }
}

/// Real part of `log(1 - e^y)`, i.e. `ln|1 - e^y|`.
pub fn re_log_one_minus_exp(y: f64) -> f64 {
    if y > 0.0 {
        // ln(e^y - 1) = y + ln(1 - e^-y)
        y + (-(-y).exp()).ln_1p()
    } else {
        (-y.exp()).ln_1p()
    }
}

/// Taylor coefficients `n^(j)(a) / j!` of the Bose function `n(y) = 1/(e^y - 1)`
/// at `y = a`, for `j = 0..terms`.
///
/// Uses `n' = -n (1 + n)`: each derivative is a polynomial in `n`.
pub fn bose_taylor(a: f64, terms: usize) -> Vec<f64> {
    let n = 1.0 / a.exp_m1();
    // poly[k] = coefficient of n^k
    let mut poly = vec![0.0, 1.0];
    let mut out = Vec::with_capacity(terms);
    let mut factorial = 1.0;
    for j in 0..terms {
        if j > 0 {
            factorial *= j as f64;
        }
        let value: f64 = poly.iter().rev().fold(0.0, |acc, c| acc * n + c);
        out.push(value / factorial);
        // d/dy P(n) = P'(n) * (-n - n^2)
        let mut next = vec![0.0; poly.len() + 1];
        for (k, &c) in poly.iter().enumerate().skip(1) {
            let dc = c * k as f64;
            // dc * n^(k-1) * (-n - n^2)
            next[k] -= dc;
            next[k + 1] -= dc;
        }
        poly = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn li_direct(x: f64, s: i32) -> f64 {
        // plain series, slow but independent for x < 1
        (1..200_000).map(|k| x.powi(k) / (k as f64).powi(s)).sum()
    }

    #[test]
    fn dilog_known_values() {
        assert!((li2(0.5) - (PI * PI / 12.0 - 0.5 * 2f64.ln().powi(2))).abs() < 1e-15);
        assert!((li2(1.0) - ZETA2).abs() < 1e-15);
        for &x in &[0.1, 0.3, 0.6, 0.8, 0.95] {
            assert!((li2(x) - li_direct(x, 2)).abs() < 1e-13, "x={x}");
        }
    }

    #[test]
    fn trilog_known_values() {
        let l2 = 2f64.ln();
        let exact = 7.0 / 8.0 * ZETA3 - PI * PI / 12.0 * l2 + l2.powi(3) / 6.0;
        assert!((li3(0.5) - exact).abs() < 1e-15);
        for &x in &[0.2, 0.51, 0.7, 0.9, 0.99] {
            assert!((li3(x) - li_direct(x, 3)).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn branch_real_parts_match_numeric_derivative() {
        // d/dy Re Li_2(e^y) = Re Li_1(e^y) = -ln|1 - e^y|
        for &y in &[0.3f64, 1.0, 2.4] {
            let h: f64 = 1e-5;
            let d = (re_li2((y + h).exp()) - re_li2((y - h).exp())) / (2.0 * h);
            assert!((d + re_log_one_minus_exp(y)).abs() < 1e-8, "y={y}");
            let d3 = (re_li3((y + h).exp()) - re_li3((y - h).exp())) / (2.0 * h);
            assert!((d3 - re_li2(y.exp())).abs() < 1e-8, "y={y}");
        }
    }

    #[test]
    fn bose_taylor_matches_finite_differences() {
        let a = 2.4;
        let c = bose_taylor(a, 4);
        let n = |y: f64| 1.0 / y.exp_m1();
        let h = 1e-3;
        assert!((c[0] - n(a)).abs() < 1e-15);
        let d1 = (n(a + h) - n(a - h)) / (2.0 * h);
        assert!((c[1] - d1).abs() < 1e-7);
        let d2 = (n(a + h) - 2.0 * n(a) + n(a - h)) / (h * h);
        assert!((c[2] - d2 / 2.0).abs() < 1e-6);
    }
}

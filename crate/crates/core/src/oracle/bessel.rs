//! Bessel functions of the first kind and zeros of their derivatives.

use crate::error::{Error, Result};

pub const MAX_ORDER: u32 = 60;
pub const MAX_ARG: f64 = 200.0;

fn check_range(m: u32, x: f64) -> Result<()> {
    if m > MAX_ORDER || !(0.0..=MAX_ARG).contains(&x) {
        return Err(Error::Domain(format!(
            "Bessel J_{m}({x}) outside the supported range m <= {MAX_ORDER}, 0 <= x <= {MAX_ARG}"
        )));
    }
    Ok(())
}

/// Ascending series `Σ (−1)^k (x/2)^{m+2k} / (k! (m+k)!)`.
///
/// Accurate for `x` up to a few units; larger arguments lose digits to
/// cancellation.
pub fn bessel_j_series(m: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for i in 1..=m {
        term *= half / i as f64;
    }
    let mut sum = term;
    let q = -half * half;
    for k in 1..200 {
        term *= q / (k as f64 * (k + m) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `J_0(x) … J_n(x)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_all(n: u32, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n as usize + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let big = (n as f64).max(x);
    let start = 2 * ((big + 20.0 + (160.0 * big).sqrt()) as usize / 2) + 2;
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut sum = 0.0;
    let mut vals = vec![0.0; start + 2];
    vals[start] = j_cur;
    for k in (1..=start).rev() {
        let j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        vals[k - 1] = j_cur;
        if j_cur.abs() > 1e250 {
            for v in vals.iter_mut().skip(k - 1) {
                *v *= 1e-250;
            }
            j_cur *= 1e-250;
            j_next *= 1e-250;
        }
    }
    for (k, v) in vals.iter().enumerate().take(start + 1) {
        if k == 0 {
            sum += v;
        } else if k % 2 == 0 {
            sum += 2.0 * v;
        }
    }
    for k in 0..=n as usize {
        out[k] = vals[k] / sum;
    }
    out
}

pub fn bessel_j(m: u32, x: f64) -> Result<f64> {
    check_range(m, x)?;
    if x <= 1.0 {
        return Ok(bessel_j_series(m, x));
    }
    Ok(bessel_j_all(m, x)[m as usize])
}

/// `J_m′(x)` from `(J_{m−1} − J_{m+1}) / 2`, with `J_0′ = −J_1`.
pub fn bessel_j_prime(m: u32, x: f64) -> Result<f64> {
    check_range(m, x)?;
    if x <= 1.0 {
        return Ok(if m == 0 {
            -bessel_j_series(1, x)
        } else {
            0.5 * (bessel_j_series(m - 1, x) - bessel_j_series(m + 1, x))
        });
    }
    let all = bessel_j_all(m + 1, x);
    Ok(if m == 0 {
        -all[1]
    } else {
        0.5 * (all[m as usize - 1] - all[m as usize + 1])
    })
}

/// The `k`-th positive zero of `J_m′` (`k >= 1`); the trivial zero at the
/// origin is never counted.
pub fn jprime_zero(m: u32, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::Argument("zero index k starts at 1".into()));
    }
    let step = 0.05;
    let mut x = if m == 0 {
        0.5
    } else {
        ((m * (m + 2)) as f64).sqrt() * 0.999
    };
    let mut f = bessel_j_prime(m, x)?;
    let mut found = 0;
    while x + step <= MAX_ARG {
        let xn = x + step;
        let fnx = bessel_j_prime(m, xn)?;
        if f == 0.0 || f.signum() != fnx.signum() {
            found += 1;
            if found == k {
                return bisect(|z| bessel_j_prime(m, z), x, xn, f);
            }
        }
        x = xn;
        f = fnx;
    }
    Err(Error::Domain(format!(
        "no bracket for zero {k} of J_{m}' below x = {MAX_ARG}"
    )))
}

fn bisect(g: impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, mut flo: f64) -> Result<f64> {
    if flo == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-14 * mid.max(1.0) {
            break;
        }
        let fm = g(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

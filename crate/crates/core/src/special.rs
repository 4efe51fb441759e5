//! Cylindrical Bessel and Hankel functions of the orders the inversion needs.
//!
//! `J0`, `Y0` (and their order-one companions used for derivatives) are
//! evaluated with the ascending power series below [`SERIES_CROSSOVER`] and
//! with the Hankel asymptotic expansion above it. The modified Bessel
//! function `K_1` uses its ascending series for small arguments and Steed's
//! continued fraction otherwise; `K_{1/2}` has a closed form.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments at or below this value use the ascending series.
///
/// The asymptotic expansion's smallest term is roughly `exp(-2x)`, so it only
/// reaches 1e-11 relative accuracy past x ≈ 12; the series loses about
/// `log10(exp(x) / x)` digits to cancellation, which is still under 1e-11
/// at the crossover.
pub const SERIES_CROSSOVER: f64 = 12.0;

const SERIES_MAX_TERMS: usize = 200;

/// Complex value returned by the Hankel function.
pub type ComplexVal = Complex64;

/// Which branch to evaluate; exposed so the overlap between the two can be
/// tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Series,
    Asymptotic,
}

fn check_positive(x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "Bessel argument must be positive and finite, got {x}"
        )));
    }
    Ok(())
}

/// `H_0^{(1)}(x) = J_0(x) + i Y_0(x)` for `x > 0`.
pub fn hankel_h0_first_kind(x: f64) -> Result<ComplexVal> {
    check_positive(x)?;
    let branch = if x <= SERIES_CROSSOVER {
        Branch::Series
    } else {
        Branch::Asymptotic
    };
    Ok(hankel_h0_branch(x, branch))
}

/// Evaluates `H_0^{(1)}` on a forced branch. The caller is responsible for
/// the argument being in a range where that branch is accurate.
pub fn hankel_h0_branch(x: f64, branch: Branch) -> ComplexVal {
    match branch {
        Branch::Series => {
            let (j0, y0) = series_order0(x);
            Complex64::new(j0, y0)
        }
        Branch::Asymptotic => hankel_asymptotic(0, x),
    }
}

/// `H_1^{(1)}(x) = J_1(x) + i Y_1(x)`; used with `J_0' = -J_1` for
/// derivative identities.
pub fn hankel_h1_first_kind(x: f64) -> Result<ComplexVal> {
    check_positive(x)?;
    if x <= SERIES_CROSSOVER {
        let (j1, y1) = series_order1(x);
        Ok(Complex64::new(j1, y1))
    } else {
        Ok(hankel_asymptotic(1, x))
    }
}

/// `(J_0(x), Y_0(x))` from the ascending series.
fn series_order0(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let mut term = 1.0; // (-q)^k / (k!)^2
    let mut j0 = 1.0;
    let mut harmonic = 0.0;
    let mut y_sum = 0.0;
    for k in 1..SERIES_MAX_TERMS {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        // Y0 series carries (-1)^{k+1} H_k q^k / (k!)^2 = -H_k * term
        y_sum -= harmonic * term;
        if term.abs() < 1e-18 * j0.abs().max(1e-300) && kf > q.sqrt() {
            break;
        }
    }
    let log_part = (0.5 * x).ln() + EULER_GAMMA;
    let y0 = (2.0 / PI) * (log_part * j0 + y_sum);
    (j0, y0)
}

/// `(J_1(x), Y_1(x))` from the ascending series.
fn series_order1(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let half = 0.5 * x;
    let mut term = half; // (-1)^k (x/2)^{2k+1} / (k! (k+1)!)
    let mut j1 = term;
    let mut h_k = 0.0;
    let mut h_k1 = 1.0;
    let mut y_sum = (h_k + h_k1) * term;
    for k in 1..SERIES_MAX_TERMS {
        let kf = k as f64;
        term *= -q / (kf * (kf + 1.0));
        h_k += 1.0 / kf;
        h_k1 += 1.0 / (kf + 1.0);
        j1 += term;
        y_sum += (h_k + h_k1) * term;
        if term.abs() < 1e-18 * j1.abs().max(1e-300) && kf > q.sqrt() {
            break;
        }
    }
    let log_part = half.ln() + EULER_GAMMA;
    let y1 = -2.0 / (PI * x) + (2.0 / PI) * log_part * j1 - y_sum / PI;
    (j1, y1)
}

/// Hankel asymptotic expansion of `H_n^{(1)}` for `n ∈ {0, 1}`:
/// `sqrt(2/(πx)) (P + iQ) e^{iχ}` with `χ = x - (n/2 + 1/4)π`.
fn hankel_asymptotic(order: u32, x: f64) -> ComplexVal {
    let mu = 4.0 * f64::from(order * order);
    let eight_x = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    // a_k = prod_{m=1..k} (mu - (2m-1)^2) / (k! (8x)^k), signs folded into P, Q
    let mut a = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) / (k as f64 * eight_x);
        let mag = a.abs();
        if mag > prev || mag < 1e-17 {
            break;
        }
        prev = mag;
        match k % 4 {
            1 => q += a,
            2 => p -= a,
            3 => q -= a,
            _ => p += a,
        }
    }
    let (s, c) = x.sin_cos();
    // e^{iχ} with the quarter-period shifts expanded to keep full precision
    let (cos_chi, sin_chi) = match order {
        0 => ((c + s) * FRAC_1_SQRT_2, (s - c) * FRAC_1_SQRT_2),
        _ => ((s - c) * FRAC_1_SQRT_2, -(s + c) * FRAC_1_SQRT_2),
    };
    let amp = (2.0 / (PI * x)).sqrt();
    Complex64::new(p, q) * Complex64::new(cos_chi, sin_chi) * amp
}

/// Orders supported by [`bessel_k`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KOrder {
    Half,
    One,
}

impl KOrder {
    pub fn from_f64(order: f64) -> Result<Self> {
        if order == 0.5 {
            Ok(KOrder::Half)
        } else if order == 1.0 {
            Ok(KOrder::One)
        } else {
            Err(Error::Unsupported(format!(
                "modified Bessel K of order {order} (supported: 0.5, 1)"
            )))
        }
    }
}

/// Modified Bessel function of the second kind `K_ν(x)` for ν ∈ {1/2, 1}.
pub fn bessel_k(order: f64, x: f64) -> Result<f64> {
    let order = KOrder::from_f64(order)?;
    check_positive(x)?;
    Ok(match order {
        KOrder::Half => (PI / (2.0 * x)).sqrt() * (-x).exp(),
        KOrder::One => bessel_k1(x),
    })
}

fn bessel_k1(x: f64) -> f64 {
    if x <= 2.0 {
        bessel_k1_series(x)
    } else {
        bessel_k01_steed(x).1
    }
}

fn bessel_k1_series(x: f64) -> f64 {
    // K1 = 1/x + ln(x/2) I1 - (x/4) sum (psi(k+1) + psi(k+2)) q^k / (k!(k+1)!)
    let q = 0.25 * x * x;
    let mut t = 1.0; // q^k / (k! (k+1)!)
    let mut psi_k1 = -EULER_GAMMA; // psi(k+1)
    let mut psi_k2 = 1.0 - EULER_GAMMA; // psi(k+2)
    let mut i1_sum = t;
    let mut psi_sum = (psi_k1 + psi_k2) * t;
    for k in 1..SERIES_MAX_TERMS {
        let kf = k as f64;
        t *= q / (kf * (kf + 1.0));
        psi_k1 += 1.0 / kf;
        psi_k2 += 1.0 / (kf + 1.0);
        i1_sum += t;
        psi_sum += (psi_k1 + psi_k2) * t;
        if t < 1e-18 * i1_sum {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + (0.5 * x).ln() * i1 - 0.25 * x * psi_sum
}

/// `(K_0(x), K_1(x))` by Steed's method for the second continued fraction
/// (Temme's normalisation); accurate for `x >= 2`.
fn bessel_k01_steed(x: f64) -> (f64, f64) {
    const EPS: f64 = 1e-16;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        a -= 2.0 * (i - 1) as f64;
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// Gamma function at positive integers and half-integers, the only
/// arguments the Matérn machinery needs.
pub fn gamma_half_integer(x: f64) -> Result<f64> {
    let twice = 2.0 * x;
    if !(x > 0.0) || twice.fract() != 0.0 || twice > 340.0 {
        return Err(Error::Unsupported(format!(
            "gamma at {x} (supported: positive integers and half-integers)"
        )));
    }
    let twice = twice as u64;
    if twice.is_multiple_of(2) {
        let n = twice / 2;
        Ok((1..n).fold(1.0, |acc, k| acc * k as f64))
    } else {
        // Γ(1/2) = √π and Γ(z+1) = z Γ(z)
        let steps = (twice - 1) / 2;
        Ok((0..steps).fold(PI.sqrt(), |acc, k| acc * (k as f64 + 0.5)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h0_at_one() {
        let h = hankel_h0_first_kind(1.0).unwrap();
        assert!((h.re - 0.765_197_686_557_966_6).abs() < 1e-12);
        assert!((h.im - 0.088_256_964_215_676_96).abs() < 1e-12);
    }

    #[test]
    fn j0_at_ten() {
        let h = hankel_h0_first_kind(10.0).unwrap();
        assert!((h.re - (-0.245_935_764_451_348_3)).abs() < 1e-10);
    }

    #[test]
    fn h0_large_argument_amplitude() {
        let x = 400.0;
        let h = hankel_h0_first_kind(x).unwrap();
        assert!((h.norm() * x.sqrt() - (2.0 / PI).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(hankel_h0_first_kind(0.0).is_err());
        assert!(hankel_h0_first_kind(-1.0).is_err());
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(2.0, 1.0).is_err());
    }

    #[test]
    fn branches_agree_in_overlap() {
        for i in 0..=40 {
            let x = 10.5 + 3.5 * i as f64 / 40.0;
            let s = hankel_h0_branch(x, Branch::Series);
            let a = hankel_h0_branch(x, Branch::Asymptotic);
            assert!((s - a).norm() / a.norm() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn k_half_closed_form() {
        let v = bessel_k(0.5, 2.0).unwrap();
        assert!((v - 0.119_937_7).abs() < 1e-6);
    }

    #[test]
    fn k1_reference_values() {
        // values from the integral representation K1(x) = ∫ exp(-x cosh t) cosh t dt
        assert!((bessel_k(1.0, 1.0).unwrap() - 0.601_907_230_197_234_6).abs() < 1e-12);
        assert!((bessel_k(1.0, 2.0).unwrap() - 0.139_865_881_816_522_4).abs() < 1e-12);
        let x = 1e-3;
        assert!((x * bessel_k(1.0, x).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn k1_continuous_at_switch() {
        let below = bessel_k1_series(2.0);
        let above = bessel_k01_steed(2.0).1;
        assert!((below - above).abs() / above < 1e-12);
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_half_integer(1.0).unwrap(), 1.0);
        assert_eq!(gamma_half_integer(4.0).unwrap(), 6.0);
        assert!((gamma_half_integer(0.5).unwrap() - PI.sqrt()).abs() < 1e-15);
        assert!((gamma_half_integer(2.5).unwrap() - 0.75 * PI.sqrt()).abs() < 1e-14);
        assert!(gamma_half_integer(0.3).is_err());
    }
}

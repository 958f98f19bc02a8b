//! Scalar special functions for spherical-harmonics work.
//!
//! Conventions:
//!
//! * `theta` is the inclination from +z in `[0, pi]`, `phi` the azimuth.
//! * [`assoc_legendre`] includes the Condon-Shortley phase `(-1)^m`, so
//!   `Y_{n,-m} = (-1)^m conj(Y_{nm})` holds with the normalisation used by
//!   [`sph_harm`].
//! * Spherical harmonics are orthonormal over the unit sphere.
//! * All orders are capped at [`MAX_ORDER`].

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest order accepted by every function in this module.
pub const MAX_ORDER: usize = 30;

/// Below this argument the Bessel functions switch to their power series.
const SERIES_THRESHOLD: f64 = 1e-4;

/// Acoustic boundary of the array body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Enclosure {
    /// Acoustically transparent (open) sphere.
    Open,
    /// Sound-hard scatterer.
    Rigid,
}

impl std::fmt::Display for Enclosure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Enclosure::Open => f.write_str("open"),
            Enclosure::Rigid => f.write_str("rigid"),
        }
    }
}

impl std::str::FromStr for Enclosure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" => Ok(Enclosure::Open),
            "rigid" => Ok(Enclosure::Rigid),
            other => Err(Error::domain(format!("unknown enclosure '{other}'"))),
        }
    }
}

/// Linear index of `(n, m)` in order-major storage.
#[inline]
pub fn sh_index(n: usize, m: i64) -> usize {
    ((n * n + n) as i64 + m) as usize
}

/// Number of coefficients up to and including order `n`.
#[inline]
pub fn sh_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

fn check_order(n: usize) -> Result<()> {
    if n > MAX_ORDER {
        Err(Error::domain(format!(
            "order {n} exceeds the supported maximum {MAX_ORDER}"
        )))
    } else {
        Ok(())
    }
}

/// Associated Legendre function `P_n^m(x)` with the Condon-Shortley phase.
pub fn assoc_legendre(n: usize, m: usize, x: f64) -> Result<f64> {
    check_order(n)?;
    if m > n {
        return Err(Error::domain(format!("degree {m} exceeds order {n}")));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::domain(format!("|x| = {} > 1", x.abs())));
    }
    Ok(legendre_column(n, m, x))
}

/// `P_l^m(x)` for the single requested `l`, by upward recurrence in `l`.
fn legendre_column(n: usize, m: usize, x: f64) -> f64 {
    let somx2 = ((1.0 - x) * (1.0 + x)).sqrt();
    let mut pmm = 1.0;
    let mut fact = 1.0;
    for _ in 0..m {
        pmm *= -fact * somx2;
        fact += 2.0;
    }
    if n == m {
        return pmm;
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if n == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for l in (m + 2)..=n {
        pll = ((2 * l - 1) as f64 * x * pmmp1 - (l + m - 1) as f64 * pmm) / (l - m) as f64;
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// Orthonormalisation factor `sqrt((2n+1)/(4 pi) * (n-m)!/(n+m)!)`, `m >= 0`.
fn sh_norm(n: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for j in (n - m + 1)..=(n + m) {
        ratio /= j as f64;
    }
    ((2 * n + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Complex spherical harmonic `Y_n^m(theta, phi)`.
pub fn sph_harm(n: usize, m: i64, theta: f64, phi: f64) -> Result<Complex64> {
    check_order(n)?;
    if m.unsigned_abs() as usize > n {
        return Err(Error::domain(format!("|m| = {} exceeds order {n}", m.abs())));
    }
    if !theta.is_finite() || !phi.is_finite() {
        return Err(Error::domain("non-finite angle"));
    }
    let am = m.unsigned_abs() as usize;
    let value = sh_norm(n, am) * legendre_column(n, am, theta.cos());
    let positive = Complex64::from_polar(value, am as f64 * phi);
    if m >= 0 {
        Ok(positive)
    } else if am % 2 == 0 {
        Ok(positive.conj())
    } else {
        Ok(-positive.conj())
    }
}

/// All `Y_n^m(theta, phi)` for `n <= order`, stored at [`sh_index`].
pub fn sph_harm_all(order: usize, theta: f64, phi: f64) -> Result<Vec<Complex64>> {
    check_order(order)?;
    let x = theta.cos();
    let somx2 = theta.sin().abs();
    let mut out = vec![Complex64::new(0.0, 0.0); sh_count(order)];
    // Sectoral seeds P_m^m, then upward in n for each m.
    let mut pmm = 1.0;
    for m in 0..=order {
        if m > 0 {
            pmm *= -((2 * m - 1) as f64) * somx2;
        }
        let (sin_mphi, cos_mphi) = (m as f64 * phi).sin_cos();
        let mut p_prev = 0.0;
        let mut p_cur = pmm;
        for n in m..=order {
            if n == m + 1 {
                p_prev = p_cur;
                p_cur = x * (2 * m + 1) as f64 * pmm;
            } else if n > m + 1 {
                let next = ((2 * n - 1) as f64 * x * p_cur - (n + m - 1) as f64 * p_prev)
                    / (n - m) as f64;
                p_prev = p_cur;
                p_cur = next;
            }
            let value = sh_norm(n, m) * p_cur;
            let y = Complex64::new(value * cos_mphi, value * sin_mphi);
            out[sh_index(n, m as i64)] = y;
            if m > 0 {
                let neg = if m % 2 == 0 { y.conj() } else { -y.conj() };
                out[sh_index(n, -(m as i64))] = neg;
            }
        }
    }
    Ok(out)
}

/// Spherical Bessel functions `j_0..=j_order` at `x >= 0`.
pub fn sph_bessel_j_all(order: usize, x: f64) -> Result<Vec<f64>> {
    check_order(order)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("spherical Bessel argument {x} < 0")));
    }
    let mut out = vec![0.0; order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return Ok(out);
    }
    if x < SERIES_THRESHOLD {
        let mut lead = 1.0; // x^n / (2n+1)!!
        for (n, slot) in out.iter_mut().enumerate() {
            if n > 0 {
                lead *= x / (2 * n + 1) as f64;
            }
            let a = (2 * n + 3) as f64;
            let b = (2 * n + 5) as f64;
            *slot = lead * (1.0 - x * x / (2.0 * a) + x.powi(4) / (8.0 * a * b));
        }
        return Ok(out);
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    if x > order as f64 {
        // Upward recurrence is stable while n < x.
        out[0] = j0;
        if order >= 1 {
            out[1] = j1;
        }
        for n in 1..order {
            out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
        }
        return Ok(out);
    }
    // Miller's downward recurrence, normalised against the closed forms.
    let start = order + 20 + (40.0 * (order as f64 + x)).sqrt() as usize;
    let mut f = vec![0.0; start + 2];
    f[start] = 1e-300;
    for n in (1..=start).rev() {
        f[n - 1] = (2 * n + 1) as f64 / x * f[n] - f[n + 1];
        if f[n - 1].abs() > 1e250 {
            for v in &mut f[n - 1..] {
                *v *= 1e-250;
            }
        }
    }
    let scale = if j0.abs() >= j1.abs() { j0 / f[0] } else { j1 / f[1] };
    for (slot, v) in out.iter_mut().zip(&f) {
        *slot = v * scale;
    }
    Ok(out)
}

/// Spherical Neumann functions `y_0..=y_order` at `x > 0`.
pub fn sph_bessel_y_all(order: usize, x: f64) -> Result<Vec<f64>> {
    check_order(order)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!(
            "spherical Neumann function is singular at x = {x}"
        )));
    }
    let (s, c) = x.sin_cos();
    let mut out = vec![0.0; order + 1];
    out[0] = -c / x;
    if order >= 1 {
        out[1] = -c / (x * x) - s / x;
    }
    for n in 1..order {
        out[n + 1] = (2 * n + 1) as f64 / x * out[n] - out[n - 1];
    }
    Ok(out)
}

/// `j_n(x)` (`derivative == false`) or `j_n'(x)`.
pub fn sph_bessel_j(n: usize, x: f64, derivative: bool) -> Result<f64> {
    if !derivative {
        return Ok(sph_bessel_j_all(n, x)?[n]);
    }
    check_order(n)?;
    if x == 0.0 {
        return Ok(if n == 1 { 1.0 / 3.0 } else { 0.0 });
    }
    let j = sph_bessel_j_all(n + 1, x)?;
    Ok(n as f64 / x * j[n] - j[n + 1])
}

/// `y_n(x)` or `y_n'(x)`.
pub fn sph_bessel_y(n: usize, x: f64, derivative: bool) -> Result<f64> {
    if !derivative {
        return Ok(sph_bessel_y_all(n, x)?[n]);
    }
    check_order(n)?;
    let y = sph_bessel_y_all(n + 1, x)?;
    Ok(n as f64 / x * y[n] - y[n + 1])
}

/// Spherical Hankel function of the first kind `h_n = j_n + i y_n`, or its
/// derivative.
pub fn sph_hankel1(n: usize, x: f64, derivative: bool) -> Result<Complex64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("spherical Hankel function is singular at x = {x}")));
    }
    Ok(Complex64::new(
        sph_bessel_j(n, x, derivative)?,
        sph_bessel_y(n, x, derivative)?,
    ))
}

/// Radial coupling term `b_n(kR)` for the given enclosure.
///
/// Open: `j_n(kR)`. Rigid: `j_n - (j_n' / h_n') h_n`.
pub fn radial_term_b(n: usize, kr: f64, enclosure: Enclosure) -> Result<Complex64> {
    match enclosure {
        Enclosure::Open => Ok(Complex64::new(sph_bessel_j(n, kr, false)?, 0.0)),
        Enclosure::Rigid => {
            if !(kr > 0.0) {
                return Err(Error::domain("rigid radial term is undefined at kR = 0"));
            }
            let jn = sph_bessel_j(n, kr, false)?;
            let jd = sph_bessel_j(n, kr, true)?;
            let hn = sph_hankel1(n, kr, false)?;
            let hd = sph_hankel1(n, kr, true)?;
            Ok(jn - hn * (jd / hd))
        }
    }
}

/// `b_0..=b_order` at one argument.
pub fn radial_terms(order: usize, kr: f64, enclosure: Enclosure) -> Result<Vec<Complex64>> {
    (0..=order).map(|n| radial_term_b(n, kr, enclosure)).collect()
}

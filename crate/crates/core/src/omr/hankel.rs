//! Zeroth-order Bessel functions of real argument and the outgoing Hankel
//! function `H0^(2) = J0 - j Y0`.
//!
//! Three regimes: the ascending series up to 8, Miller's backward recurrence
//! with the Neumann series for `Y0` on (8, 20], and the Hankel asymptotic
//! expansion beyond.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, PI};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_MAX: f64 = 8.0;
const ASYMPTOTIC_MIN: f64 = 20.0;

/// `(J0(x), Y0(x))` for `x > 0`.
pub fn bessel_j0_y0(x: f64) -> (f64, f64) {
    debug_assert!(x > 0.0);
    if x <= SERIES_MAX {
        series(x)
    } else if x <= ASYMPTOTIC_MIN {
        miller(x)
    } else {
        asymptotic(x)
    }
}

/// `H0^(2)(x) = J0(x) - j Y0(x)`, outgoing under the `e^{+j omega t}` convention.
pub fn hankel2_0(x: f64) -> Complex64 {
    let (j0, y0) = bessel_j0_y0(x);
    Complex64::new(j0, -y0)
}

fn series(x: f64) -> (f64, f64) {
    let q = x * x / 4.0;
    let (mut j0, mut tail) = (1.0, 0.0);
    let (mut term, mut harmonic) = (1.0, 0.0);
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        tail -= harmonic * term;
        if term.abs() < 1e-18 * j0.abs().max(1e-300) && term.abs() * harmonic < 1e-18 {
            break;
        }
    }
    let y0 = 2.0 / PI * ((x / 2.0).ln() + EULER_GAMMA) * j0 + 2.0 / PI * tail;
    (j0, y0)
}

fn miller(x: f64) -> (f64, f64) {
    // start well above x so the recurrence has settled on the minimal solution
    let start = 2 * ((x + 30.0 + 3.0 * x.sqrt()) as usize / 2);
    let (mut jp1, mut j) = (0.0f64, 1e-300f64);
    let mut vals = vec![0.0; start + 1];
    vals[start] = j;
    for n in (1..=start).rev() {
        let jm1 = 2.0 * n as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        vals[n - 1] = j;
        if j.abs() > 1e250 {
            for v in vals.iter_mut() {
                *v *= 1e-250;
            }
            jp1 *= 1e-250;
            j *= 1e-250;
        }
    }
    // J0 + 2 sum J_2k = 1
    let norm = vals[0] + 2.0 * vals.iter().skip(2).step_by(2).sum::<f64>();
    let j0 = vals[0] / norm;
    let mut neumann = 0.0;
    for k in 1..=start / 2 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        neumann += sign * vals[2 * k] / norm / k as f64;
    }
    let y0 = 2.0 / PI * ((x / 2.0).ln() + EULER_GAMMA) * j0 - 4.0 / PI * neumann;
    (j0, y0)
}

fn asymptotic(x: f64) -> (f64, f64) {
    // P = 1 - t2 + t4 - ..., Q = -t1 + t3 - ..., t_k = prod_{i<k} (2i+1)^2 / (k! (8x)^k)
    let (mut p, mut q) = (1.0, 0.0);
    let mut term = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= odd * odd / (k as f64 * 8.0 * x);
        if term > last || term < 1e-18 {
            break;
        }
        last = term;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q -= sign * term;
        }
    }
    let chi = x - FRAC_PI_4;
    let amp = (2.0 / (PI * x)).sqrt();
    let (s, c) = chi.sin_cos();
    (amp * (p * c - q * s), amp * (p * s + q * c))
}

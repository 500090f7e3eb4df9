//! Shapiro-Wilk normality test, Royston's AS R94 algorithm.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::StatsError;

const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
const C3: [f64; 4] = [0.5440, -0.39978, 0.025054, -6.714e-4];
const C4: [f64; 4] = [1.3822, -0.77857, 0.062767, -0.0020322];
const C5: [f64; 4] = [-1.5861, -0.31082, -0.083751, 0.0038915];
const C6: [f64; 3] = [-0.4803, -0.082676, 0.0030302];
const G: [f64; 2] = [-2.273, 0.459];
const SMALL: f64 = 1e-19;
const MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p: f64,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Half of the antisymmetric coefficient vector, largest first.
fn coefficients(n: usize) -> Vec<f64> {
    let nn2 = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let norm = std_normal();
    let an25 = n as f64 + 0.25;
    let m: Vec<f64> = (1..=nn2)
        .map(|i| norm.inverse_cdf((i as f64 - 0.375) / an25))
        .collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / (n as f64).sqrt();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let mut a = vec![0.0; nn2];
    a[0] = a1;
    let (first, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        a[1] = a2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    for i in first..nn2 {
        a[i] = -m[i] / fac;
    }
    a
}

pub fn shapiro_wilk(xs: &[f64]) -> Result<ShapiroWilk, StatsError> {
    let n = xs.len();
    if !(3..=MAX_N).contains(&n) {
        return Err(StatsError::SampleSize(n));
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut x = xs.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let range = x[n - 1] - x[0];
    if range < SMALL {
        return Err(StatsError::DegenerateSample);
    }
    let a = coefficients(n);
    // signed coefficient for sorted position i
    let coef = |i: usize| {
        let j = n - 1 - i;
        match i.cmp(&j) {
            std::cmp::Ordering::Less => -a[i],
            std::cmp::Ordering::Greater => a[j],
            std::cmp::Ordering::Equal => 0.0,
        }
    };
    let nf = n as f64;
    let xx: Vec<f64> = x.iter().map(|v| v / range).collect();
    let sx = xx.iter().sum::<f64>() / nf;
    let sa = (0..n).map(coef).sum::<f64>() / nf;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (i, xi) in xx.iter().enumerate() {
        let asa = coef(i) - sa;
        let xsx = xi - sx;
        ssa += asa * asa;
        ssx += xsx * xsx;
        sax += asa * xsx;
    }
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).max(0.0)
    } else {
        let y = w1.ln();
        let xn = nf.ln();
        let (m, s, y) = if n <= 11 {
            let gamma = poly(&G, nf);
            if y >= gamma {
                return Ok(ShapiroWilk { w, p: 1e-99 });
            }
            (poly(&C3, nf), poly(&C4, nf).exp(), -(gamma - y).ln())
        } else {
            (poly(&C5, xn), poly(&C6, xn).exp(), y)
        };
        std_normal().sf((y - m) / s)
    };
    Ok(ShapiroWilk {
        w,
        p: p.clamp(0.0, 1.0),
    })
}

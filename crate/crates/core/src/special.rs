//! Special functions and numerical integration used by the audit statistics.
//!
//! Everything here works in log space where the quantities involved can
//! over- or underflow: likelihoods of samples with thousands of ballots are
//! far outside the range of `f64`.

use std::collections::BinaryHeap;
use std::f64::consts::{LN_2, PI};

use crate::error::{domain, AuditError, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const CF_MAX_ITER: usize = 20_000;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Remainder of Stirling's series, `ln Γ(x) - [(x - ½) ln x - x + ln √(2π)]`, for `x >= 10`.
fn stirling_remainder(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in COEFFS.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

/// `ln B(a, b)` without argument checks.
///
/// Large arguments go through Stirling remainders so that the result keeps
/// full relative accuracy even when `ln Γ(a+b)` is huge and `ln B` is small.
pub(crate) fn ln_beta(a: f64, b: f64) -> f64 {
    let (p, q) = if a < b { (a, b) } else { (b, a) };
    let s = p + q;
    if p == 1.0 {
        return -q.ln();
    }
    if p >= 10.0 {
        let corr = stirling_remainder(p) + stirling_remainder(q) - stirling_remainder(s);
        -0.5 * q.ln() + LN_SQRT_2PI + corr + (p - 0.5) * (p / s).ln() + q * (-p / s).ln_1p()
    } else if q >= 10.0 {
        let corr = stirling_remainder(q) - stirling_remainder(s);
        ln_gamma(p) + corr + p - p * s.ln() + (q - 0.5) * (-p / s).ln_1p()
    } else {
        ln_gamma(p) + ln_gamma(q) - ln_gamma(s)
    }
}

/// `ln B(a, b)` for positive shape parameters.
pub fn log_beta_fn(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain(format!("log_beta_fn requires a, b > 0 (got a={a}, b={b})"));
    }
    Ok(ln_beta(a, b))
}

/// `ln C(n, k)`.
pub(crate) fn ln_choose(n: u64, k: u64) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    -((n + 1) as f64).ln() - ln_beta((k + 1) as f64, (n - k + 1) as f64)
}

/// `ln n^(k)`, the log of the falling factorial `n (n-1) ... (n-k+1)`.
///
/// Returns negative infinity when `k > n`.
pub(crate) fn ln_falling(n: u64, k: u64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k <= 32 {
        return (0..k).map(|i| ((n - i) as f64).ln()).sum();
    }
    // n^(k) = Γ(n+1)/Γ(n-k+1) = Γ(k) / B(k, n-k+1)
    ln_gamma(k as f64) - ln_beta(k as f64, (n - k + 1) as f64)
}

fn check_inc_beta_args(x: f64, a: f64, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) || !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain(format!(
            "incomplete beta requires 0 <= x <= 1 and a, b > 0 (got x={x}, a={a}, b={b})"
        ));
    }
    Ok(())
}

/// Continued fraction for `I_x(a, b)` by the modified Lentz method; valid
/// (and rapidly convergent) for `x < (a+1)/(a+b+2)`. Returns the log.
fn ln_inc_beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    let mut converged = false;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(AuditError::Domain(format!(
            "incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
        )));
    }
    Ok(a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b) - a.ln() + h.ln())
}

/// `ln I_x(a, b)`, the log of the regularized incomplete beta function.
pub fn ln_reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    check_inc_beta_args(x, a, b)?;
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_inc_beta_cf(x, a, b)
    } else {
        Ok(log1mexp(ln_inc_beta_cf(1.0 - x, b, a)?))
    }
}

/// `ln(1 - I_x(a, b)) = ln I_{1-x}(b, a)`, accurate when the upper tail is tiny.
pub fn ln_reg_inc_beta_upper(x: f64, a: f64, b: f64) -> Result<f64> {
    check_inc_beta_args(x, a, b)?;
    ln_reg_inc_beta(1.0 - x, b, a)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    Ok(ln_reg_inc_beta(x, a, b)?.exp())
}

/// `c ln x`, taken as zero when `c == 0` (so `0 ln 0 = 0`).
pub(crate) fn xlogy(c: f64, x: f64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * x.ln()
    }
}

/// `ln(1 - e^x)` for `x <= 0`.
pub fn log1mexp(x: f64) -> f64 {
    if x >= 0.0 {
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        return f64::NAN;
    }
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ e^{x_i}`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let mut sum = NeumaierSum::default();
    for v in values {
        sum.add((v - max).exp());
    }
    max + sum.total().ln()
}

/// Compensated (Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Gauss–Legendre rule mapped onto `[0, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(points: usize) -> Self {
        assert!(points >= 1, "Gauss-Legendre rule needs at least one point");
        let n = points;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * GK_WEIGHTS[7];
    let mut gauss = fc * G7_WEIGHTS[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += GK_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += G7_WEIGHTS[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) integration of `f` over the given breakpoints.
///
/// Refines the segment with the largest error estimate until the summed error
/// is below `rel_tol * |integral|` (or a tiny absolute floor).
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    rel_tol: f64,
) -> Result<f64> {
    const MAX_SEGMENTS: usize = 5_000;
    if breakpoints.len() < 2 {
        return domain("integration needs at least two breakpoints");
    }
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            let (value, error) = gauss_kronrod_15(&f, w[0], w[1]);
            heap.push(Segment {
                lo: w[0],
                hi: w[1],
                value,
                error,
            });
        }
    }
    loop {
        let total: NeumaierSum = heap.iter().map(|s| s.value).collect();
        let total = total.total();
        let err: f64 = heap.iter().map(|s| s.error).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(AuditError::Quadrature(format!(
                "integrand produced a non-finite value (estimate {total}, error {err})"
            )));
        }
        if err <= rel_tol * total.abs() || err < 1e-300 {
            return Ok(total);
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(AuditError::Quadrature(format!(
                "no convergence after {} segments: estimate {total:e}, error {err:e}",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (worst.lo + worst.hi);
        let (v1, e1) = gauss_kronrod_15(&f, worst.lo, mid);
        let (v2, e2) = gauss_kronrod_15(&f, mid, worst.hi);
        heap.push(Segment {
            lo: worst.lo,
            hi: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            lo: mid,
            hi: worst.hi,
            value: v2,
            error: e2,
        });
    }
}

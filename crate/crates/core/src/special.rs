//! Special functions: log-gamma, regularized incomplete gamma, and the
//! normal, chi-squared and Poisson distribution functions built on them.

use std::f64::consts::{PI, SQRT_2};

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
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

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Returns `(P(a, x), Q(a, x))`, the regularized lower and upper incomplete
/// gamma functions. Series below `a + 1`, Lentz continued fraction above.
pub fn gamma_pq(a: f64, x: f64) -> (f64, f64) {
    if a.is_nan() || a <= 0.0 || x.is_nan() || x < 0.0 {
        return (f64::NAN, f64::NAN);
    }
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefix = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (sum.ln() + log_prefix).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (h.ln() + log_prefix).exp().min(1.0);
        (1.0 - q, q)
    }
}

pub fn gamma_p(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).0
}

pub fn gamma_q(a: f64, x: f64) -> f64 {
    gamma_pq(a, x).1
}

/// Complementary error function via `erfc(z) = Q(1/2, z^2)`.
pub fn erfc(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let (p, q) = gamma_pq(0.5, z * z);
    if z >= 0.0 {
        q
    } else {
        1.0 + p
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile: Acklam's rational approximation followed by
/// one Halley correction against `normal_cdf`.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.024_25;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

pub fn chisq_cdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_p(0.5 * df, 0.5 * x)
}

pub fn chisq_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(0.5 * df, 0.5 * x)
}

pub fn chisq_pdf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * df;
    ((k - 1.0) * x.ln() - 0.5 * x - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Chi-squared quantile by safeguarded Newton iteration from a
/// Wilson-Hilferty start.
pub fn chisq_quantile(p: f64, df: f64) -> f64 {
    if df.is_nan() || df <= 0.0 || p.is_nan() {
        return f64::NAN;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let z = normal_quantile(p);
    let h = 2.0 / (9.0 * df);
    let mut x = (df * (1.0 - h + z * h.sqrt()).powi(3)).max(1e-8);
    // residual measured on the tail that keeps precision
    let upper = p > 0.5;
    let resid = |x: f64| {
        if upper {
            (1.0 - p) - chisq_sf(x, df)
        } else {
            chisq_cdf(x, df) - p
        }
    };
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let f = resid(x);
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let dens = chisq_pdf(x, df);
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

/// Poisson probability mass at `k`.
pub fn poisson_pmf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let kf = k as f64;
    (kf * mu.ln() - mu - ln_gamma(kf + 1.0)).exp()
}

/// `P(X <= k)` for `X ~ Poisson(mu)`.
pub fn poisson_cdf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return 1.0;
    }
    gamma_q(k as f64 + 1.0, mu)
}

/// `P(X > k)` for `X ~ Poisson(mu)`.
pub fn poisson_sf(k: u64, mu: f64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    gamma_p(k as f64 + 1.0, mu)
}

/// Smallest `k` with `P(X <= k) >= lower` for `X ~ Poisson(mu)`.
///
/// `upper` must equal `1 - lower`; callers pass it separately so the upper
/// tail can be resolved without cancellation.
pub fn poisson_quantile(mu: f64, lower: f64, upper: f64) -> u64 {
    if mu <= 0.0 || lower <= 0.0 {
        return 0;
    }
    let use_upper = lower > 0.5;
    // reached(k) <=> CDF(k) >= lower
    let reached = |cdf: f64, sf: f64| {
        if use_upper {
            sf <= upper
        } else {
            cdf >= lower
        }
    };

    if mu < 30.0 && !use_upper {
        let mut pmf = (-mu).exp();
        let mut cdf = pmf;
        let mut k = 0u64;
        while cdf < lower {
            k += 1;
            pmf *= mu / k as f64;
            if pmf < FPMIN * 1e10 && (k as f64) > mu {
                break;
            }
            cdf += pmf;
        }
        return k;
    }

    let z = normal_quantile(lower.clamp(1e-300, 1.0 - 1e-16));
    let guess = mu + mu.sqrt() * z + (z * z - 1.0) / 6.0;
    let mut k = guess.floor().max(0.0) as u64;
    let mut cdf = poisson_cdf(k, mu);
    let mut sf = poisson_sf(k, mu);
    if reached(cdf, sf) {
        while k > 0 {
            let pmf = poisson_pmf(k, mu);
            let (c, s) = (cdf - pmf, sf + pmf);
            if !reached(c, s) {
                break;
            }
            k -= 1;
            cdf = c;
            sf = s;
        }
        k
    } else {
        loop {
            k += 1;
            let pmf = poisson_pmf(k, mu);
            cdf += pmf;
            sf -= pmf;
            if reached(cdf, sf) || (pmf == 0.0 && (k as f64) > mu) {
                return k;
            }
        }
    }
}

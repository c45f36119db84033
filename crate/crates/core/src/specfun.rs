//! Complex `0F1`, `0F2` and log-Gamma.
//!
//! Series are summed in double-double arithmetic with a power-of-two scale
//! carried alongside, so partial sums neither overflow nor lose the digits
//! that cancel between large alternating terms.

use std::f64::consts::{LN_2, PI};

use crate::{Error, Result, C64};

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn from_f64(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }

    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn mul_f64(self, x: f64) -> Dd {
        let p = self.hi * x;
        let e = self.hi.mul_add(x, -p) + self.lo * x;
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul_f64(q1));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul_f64(q2));
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }.add(Dd::from_f64(q3))
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Debug, Clone, Copy)]
struct Cdd {
    re: Dd,
    im: Dd,
}

impl Cdd {
    const ONE: Cdd = Cdd {
        re: Dd { hi: 1.0, lo: 0.0 },
        im: Dd::ZERO,
    };

    fn from_c64(z: C64) -> Self {
        Cdd {
            re: Dd::from_f64(z.re),
            im: Dd::from_f64(z.im),
        }
    }

    fn add(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.add(o.re),
            im: self.im.add(o.im),
        }
    }

    fn mul(self, o: Cdd) -> Cdd {
        Cdd {
            re: self.re.mul(o.re).sub(self.im.mul(o.im)),
            im: self.re.mul(o.im).add(self.im.mul(o.re)),
        }
    }

    fn div(self, o: Cdd) -> Cdd {
        let den = o.re.mul(o.re).add(o.im.mul(o.im));
        let num = self.mul(Cdd { re: o.re, im: o.im.neg() });
        Cdd {
            re: num.re.div(den),
            im: num.im.div(den),
        }
    }

    fn scale_pow2(&mut self, e: i32) {
        let f = 2f64.powi(e);
        self.re = self.re.mul_f64(f);
        self.im = self.im.mul_f64(f);
    }

    fn abs_approx(&self) -> f64 {
        self.re.hi.hypot(self.im.hi)
    }

    fn to_c64(self) -> C64 {
        C64::new(self.re.to_f64(), self.im.to_f64())
    }
}

/// Unit roundoff of the double-double accumulator.
const DD_EPS: f64 = 4.93e-32;

const RESCALE_EXP: i32 = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    rel_tol: f64,
    max_terms: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-14,
            max_terms: 10_000,
        }
    }
}

impl SeriesControl {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || max_terms < 10 {
            return Err(Error::InvalidParams(format!(
                "series control needs rel_tol > 0 and max_terms >= 10, got {rel_tol}, {max_terms}"
            )));
        }
        Ok(Self { rel_tol, max_terms })
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }
}

/// A complex number stored as `mantissa · exp(log_scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaled {
    pub mantissa: C64,
    pub log_scale: f64,
}

impl Scaled {
    /// Principal `ln` of the represented value.
    pub fn ln(&self) -> C64 {
        self.mantissa.ln() + self.log_scale
    }

    pub fn to_c64(&self) -> Result<C64> {
        let log_mag = self.mantissa.norm().ln() + self.log_scale;
        if log_mag > f64::MAX.ln() {
            return Err(Error::Overflow { log_mag });
        }
        Ok(self.mantissa * self.log_scale.exp())
    }

    /// `self / other` as a plain number.
    pub fn ratio(&self, other: &Scaled) -> C64 {
        self.mantissa / other.mantissa * (self.log_scale - other.log_scale).exp()
    }
}

fn is_nonpositive_integer(a: C64) -> bool {
    a.im == 0.0 && a.re <= 0.0 && a.re == a.re.floor()
}

/// `Σ_k z^k / (k! Π_j (p_j)_k)` with log-scale tracking.
fn hypergeometric_0fq(params: &[C64], z: C64, ctl: &SeriesControl) -> Result<Scaled> {
    if let Some(p) = params.iter().find(|p| is_nonpositive_integer(**p)) {
        return Err(Error::Domain(format!("Pochhammer pole at parameter {p}")));
    }
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("non-finite argument {z}")));
    }
    let zd = Cdd::from_c64(z);
    let pd: Vec<Cdd> = params.iter().map(|p| Cdd::from_c64(*p)).collect();
    let mut term = Cdd::ONE;
    let mut sum = Cdd::ONE;
    let mut exp2: i64 = 0;
    // largest |term| seen, as log2 relative to the running scale origin
    let mut log2_max_term = 0.0f64;
    let mut small_run = 0;
    let mut last_rel = f64::INFINITY;
    for k in 0..ctl.max_terms {
        let kf = k as f64;
        let mut denom = Cdd::from_c64(C64::new(kf + 1.0, 0.0));
        for p in &pd {
            let shifted = Cdd {
                re: p.re.add(Dd::from_f64(kf)),
                im: p.im,
            };
            denom = denom.mul(shifted);
        }
        let ratio = zd.div(denom);
        term = term.mul(ratio);
        sum = sum.add(term);

        let (t, s) = (term.abs_approx(), sum.abs_approx());
        if t > 2f64.powi(RESCALE_EXP) || s > 2f64.powi(RESCALE_EXP) {
            term.scale_pow2(-RESCALE_EXP);
            sum.scale_pow2(-RESCALE_EXP);
            exp2 += RESCALE_EXP as i64;
        } else if s != 0.0 && t < 2f64.powi(-RESCALE_EXP) && s < 2f64.powi(-RESCALE_EXP) {
            term.scale_pow2(RESCALE_EXP);
            sum.scale_pow2(RESCALE_EXP);
            exp2 -= RESCALE_EXP as i64;
        }

        let (t, s) = (term.abs_approx(), sum.abs_approx());
        if t > 0.0 {
            log2_max_term = log2_max_term.max(t.log2() + exp2 as f64);
        }
        last_rel = if s > 0.0 { t / s } else { f64::INFINITY };
        let past_hump = ratio.abs_approx() < 1.0;
        if past_hump && t <= ctl.rel_tol * s {
            small_run += 1;
            if small_run >= 2 {
                // rounding in the largest terms survives the cancellation
                let log2_loss = log2_max_term - (s.log2() + exp2 as f64);
                let est = DD_EPS * (k as f64 + 2.0) * log2_loss.exp2();
                if est > ctl.rel_tol {
                    return Err(Error::Accuracy { terms: k + 1, last_rel: est });
                }
                return Ok(normalize(sum.to_c64(), exp2));
            }
        } else {
            small_run = 0;
        }
    }
    Err(Error::Accuracy {
        terms: ctl.max_terms,
        last_rel,
    })
}

fn normalize(m: C64, exp2: i64) -> Scaled {
    let mag = m.re.abs().max(m.im.abs());
    if mag == 0.0 || !mag.is_finite() {
        return Scaled {
            mantissa: m,
            log_scale: exp2 as f64 * LN_2,
        };
    }
    let e = mag.log2().floor() as i32;
    Scaled {
        mantissa: m * 2f64.powi(-e),
        log_scale: (exp2 + e as i64) as f64 * LN_2,
    }
}

/// `0F1(; a; z)` in scaled form.
pub fn hyp0f1_scaled(a: C64, z: C64, ctl: &SeriesControl) -> Result<Scaled> {
    hypergeometric_0fq(&[a], z, ctl)
}

/// `0F1(; a; z) = Σ z^k / (k! (a)_k)`.
pub fn hyp0f1(a: C64, z: C64, ctl: &SeriesControl) -> Result<C64> {
    hyp0f1_scaled(a, z, ctl)?.to_c64()
}

/// `0F2(; a, b; z)` in scaled form.
pub fn hyp0f2_scaled(a: C64, b: C64, z: C64, ctl: &SeriesControl) -> Result<Scaled> {
    hypergeometric_0fq(&[a, b], z, ctl)
}

/// `0F2(; a, b; z) = Σ z^k / (k! (a)_k (b)_k)`.
pub fn hyp0f2(a: C64, b: C64, z: C64, ctl: &SeriesControl) -> Result<C64> {
    hyp0f2_scaled(a, b, z, ctl)?.to_c64()
}

const STIRLING_SHIFT: f64 = 15.0;

/// `B_{2k} / (2k (2k−1))` for `k = 1..=10`.
const STIRLING_COEFFS: [f64; 10] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
    43867.0 / 244188.0,
    -174611.0 / 125400.0,
];

fn log_gamma_right(z: C64) -> C64 {
    let mut w = z;
    let mut shift = C64::new(0.0, 0.0);
    while w.re < STIRLING_SHIFT {
        shift += w.ln();
        w += 1.0;
    }
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut series = C64::new(0.0, 0.0);
    let mut pow = inv;
    for c in STIRLING_COEFFS {
        series += pow * c;
        pow *= inv2;
    }
    (w - 0.5) * w.ln() - w + 0.5 * (2.0 * PI).ln() + series - shift
}

/// Principal branch of `ln Γ(z)`: analytic off the negative real axis, with
/// values on that axis taken from the upper side.
pub fn log_gamma(z: C64) -> Result<C64> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Domain(format!("non-finite argument {z}")));
    }
    if is_nonpositive_integer(z) {
        return Err(Error::Domain(format!("Gamma pole at {z}")));
    }
    if z.re >= 0.5 {
        return Ok(log_gamma_right(z));
    }
    if z.im < 0.0 {
        return Ok(log_gamma(z.conj())?.conj());
    }
    // ln sin(πz) continued through the upper half plane
    let frac = z.re - z.re.round();
    let w = C64::from_polar((-2.0 * PI * z.im).exp(), 2.0 * PI * frac);
    let i = C64::new(0.0, 1.0);
    let ln_sin = -i * PI * z + i * (PI / 2.0) - LN_2 + (C64::new(1.0, 0.0) - w).ln();
    Ok(PI.ln() - ln_sin - log_gamma_right(1.0 - z))
}

/// `|Γ(c)/Γ(c+n)|²` via log-Gamma differences.
pub fn gamma_ratio_sq(c: C64, n: usize) -> Result<f64> {
    let d = log_gamma(c)? - log_gamma(c + n as f64)?;
    Ok((2.0 * d.re).exp())
}

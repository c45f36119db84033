//! Adaptive Dormand-Prince 5(4) integration of complex ODE systems.

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    pub h_max: f64,
    /// Steps shorter than `h_min_rel · max(|t|, 1)` signal stiffness.
    pub h_min_rel: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h0: None,
            h_max: f64::INFINITY,
            h_min_rel: 1e-13,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        *o = y[i] + acc * h;
    }
}

/// Integrate `dy/dt = f(t, y)` from `t_out[0]`, reporting the state at every
/// entry of `t_out` (ascending) through `on_output(index, t, y)`.
pub fn integrate_with<F, O>(mut rhs: F, y0: &[C64], t_out: &[f64], opts: &OdeOptions, mut on_output: O) -> Result<OdeStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    O: FnMut(usize, f64, &[C64]),
{
    if t_out.is_empty() {
        return Ok(OdeStats::default());
    }
    if t_out.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::Precondition("output times must be ascending".into()));
    }
    let n = y0.len();
    let zero = C64::new(0.0, 0.0);
    let mut y = y0.to_vec();
    let mut t = t_out[0];
    let mut stats = OdeStats::default();
    on_output(0, t, &y);
    if t_out.len() == 1 {
        return Ok(stats);
    }

    let mut k: Vec<Vec<C64>> = vec![vec![zero; n]; 7];
    let mut tmp = vec![zero; n];
    let mut y_new = vec![zero; n];
    rhs(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let mut h = match opts.h0 {
        Some(h) => h,
        None => initial_step(&y, &k[0], t_out[t_out.len() - 1] - t, opts),
    }
    .min(opts.h_max);

    let mut next = 1;
    let mut fac_prev_err = 1e-4f64;
    while next < t_out.len() {
        let target = t_out[next];
        if target <= t {
            on_output(next, t, &y);
            next += 1;
            continue;
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepFailure {
                t,
                reason: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        let mut hit = false;
        let mut step = h;
        if t + step >= target {
            step = target - t;
            hit = true;
        }
        if step < opts.h_min_rel * t.abs().max(1.0) && !hit {
            return Err(Error::Stiffness { t, dt: step });
        }

        let (k_lo, k_hi) = k.split_at_mut(1);
        let k1 = &k_lo[0];
        combine(&mut tmp, &y, step, &[(A21, k1)]);
        rhs(t + C2 * step, &tmp, &mut k_hi[0]);
        combine(&mut tmp, &y, step, &[(A31, k1), (A32, &k_hi[0])]);
        rhs(t + C3 * step, &tmp, &mut k_hi[1]);
        combine(&mut tmp, &y, step, &[(A41, k1), (A42, &k_hi[0]), (A43, &k_hi[1])]);
        rhs(t + C4 * step, &tmp, &mut k_hi[2]);
        combine(&mut tmp, &y, step, &[(A51, k1), (A52, &k_hi[0]), (A53, &k_hi[1]), (A54, &k_hi[2])]);
        rhs(t + C5 * step, &tmp, &mut k_hi[3]);
        combine(&mut tmp, &y, step, &[(A61, k1), (A62, &k_hi[0]), (A63, &k_hi[1]), (A64, &k_hi[2]), (A65, &k_hi[3])]);
        rhs(t + step, &tmp, &mut k_hi[4]);
        combine(&mut y_new, &y, step, &[(B1, k1), (B3, &k_hi[1]), (B4, &k_hi[2]), (B5, &k_hi[3]), (B6, &k_hi[4])]);
        rhs(t + step, &y_new, &mut k_hi[5]);
        stats.evaluations += 6;

        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = (k1[i] * E1 + k_hi[1][i] * E3 + k_hi[2][i] * E4 + k_hi[3][i] * E5 + k_hi[4][i] * E6 + k_hi[5][i] * E7) * step;
            let sc = opts.atol + opts.rtol * y[i].norm().max(y_new[i].norm());
            let r = e.norm() / sc;
            finite &= r.is_finite();
            err_sq += r * r;
        }
        if !finite {
            return Err(Error::StepFailure {
                t,
                reason: "non-finite state".into(),
            });
        }
        let err = (err_sq / n.max(1) as f64).sqrt();

        if err <= 1.0 {
            stats.accepted += 1;
            t = if hit { target } else { t + step };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            // PI controller
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.7 / 5.0) * fac_prev_err.powf(0.4 / 5.0)).clamp(0.2, 5.0)
            };
            fac_prev_err = err.max(1e-4);
            if !hit || step >= h {
                h = (step * fac).min(opts.h_max);
            }
            while next < t_out.len() && t_out[next] <= t {
                on_output(next, t, &y);
                next += 1;
            }
        } else {
            stats.rejected += 1;
            h = step * (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(stats)
}

/// Collecting wrapper around [`integrate_with`].
pub fn integrate<F>(rhs: F, y0: &[C64], t_out: &[f64], opts: &OdeOptions) -> Result<(Vec<Vec<C64>>, OdeStats)>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let mut out = Vec::with_capacity(t_out.len());
    let stats = integrate_with(rhs, y0, t_out, opts, |_, _, y| out.push(y.to_vec()))?;
    Ok((out, stats))
}

fn initial_step(y: &[C64], f0: &[C64], span: f64, opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (yi, fi) in y.iter().zip(f0) {
        let sc = opts.atol + opts.rtol * yi.norm();
        d0 += (yi.norm() / sc).powi(2);
        d1 += (fi.norm() / sc).powi(2);
    }
    let n = y.len().max(1) as f64;
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span.abs()).max(1e-12)
}

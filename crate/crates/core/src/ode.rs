// Dormand-Prince 5(4) stepper with the standard quartic dense output, on
// fixed-size complex state vectors.

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

pub type Vector<const N: usize> = [Complex64; N];

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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn comb<const N: usize>(y: &Vector<N>, h: f64, terms: &[(f64, &Vector<N>)]) -> Vector<N> {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += k[i] * (h * c);
            }
        }
    }
    out
}

/// Result of one attempted step.
pub struct Attempt<const N: usize> {
    pub y1: Vector<N>,
    pub f1: Vector<N>,
    pub err: f64,
    pub dense: Dense<N>,
}

/// Quartic interpolant over an accepted step.
#[derive(Clone, Copy)]
pub struct Dense<const N: usize> {
    pub t0: f64,
    pub h: f64,
    r: [Vector<N>; 5],
}

impl<const N: usize> Dense<N> {
    pub fn eval(&self, t: f64) -> Vector<N> {
        let s = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let s1 = 1.0 - s;
        let mut out = [Complex64::new(0.0, 0.0); N];
        for i in 0..N {
            let r = &self.r;
            out[i] = r[0][i] + (r[1][i] + (r[2][i] + (r[3][i] + r[4][i] * s1) * s) * s1) * s;
        }
        out
    }
}

/// One Dormand-Prince step from `(t, y)` with `f0 = f(t, y)`. The error is the
/// max-norm of the embedded estimate scaled by `atol + rtol * max(|y|, |y1|)`.
pub fn attempt<const N: usize, F, E>(
    f: &mut F,
    t: f64,
    y: &Vector<N>,
    f0: &Vector<N>,
    h: f64,
    rtol: f64,
    atol: f64,
) -> Result<Attempt<N>, E>
where
    F: FnMut(f64, &Vector<N>) -> Result<Vector<N>, E>,
{
    let k1 = *f0;
    let k2 = f(t + C2 * h, &comb(y, h, &[(A21, &k1)]))?;
    let k3 = f(t + C3 * h, &comb(y, h, &[(A31, &k1), (A32, &k2)]))?;
    let k4 = f(t + C4 * h, &comb(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(
        t + C5 * h,
        &comb(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    )?;
    let k6 = f(
        t + h,
        &comb(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    )?;
    let y1 = comb(y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(t + h, &y1)?;
    let mut err = 0.0f64;
    for i in 0..N {
        let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
        let sc = atol + rtol * y[i].norm().max(y1[i].norm());
        let q = e.norm() / sc;
        err = err.max(if q.is_nan() { f64::INFINITY } else { q });
    }
    let mut r = [[Complex64::new(0.0, 0.0); N]; 5];
    for i in 0..N {
        let dy = y1[i] - y[i];
        let bspl = k1[i] * h - dy;
        r[0][i] = y[i];
        r[1][i] = dy;
        r[2][i] = bspl;
        r[3][i] = dy - k7[i] * h - bspl;
        r[4][i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
    }
    Ok(Attempt { y1, f1: k7, err, dense: Dense { t0: t, h, r } })
}

/// Step-size factor from a scaled error.
pub fn factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

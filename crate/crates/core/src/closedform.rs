//! Explicit formula for `phi_t` on the real diameter, used as an independent oracle
//! for the characteristic integrator.

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::measures::InitialData;
use crate::transforms::phi_weight;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default continuation step in `t`.
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormContext {
    /// `K(0, z)^2 + (a + b)^2`
    pub c: Complex64,
    pub d: Complex64,
    /// `-4z / (1 - z)^2`
    pub x: Complex64,
    a2: f64,
    b2: f64,
    sqrt_c: Complex64,
}

/// The triple `(c, d, x)` at a real `z` in `(-1, 1)`, `z != 0`, with principal roots.
pub fn context(z: f64, init: &InitialData) -> Result<ClosedFormContext> {
    if !(z > -1.0 && z < 1.0) || z == 0.0 {
        return Err(Error::InvalidParameter { name: "z", value: z });
    }
    let p = init.params();
    let (a, b) = (p.a(), p.b());
    let (a2, b2) = (a * a, b * b);
    let zc = Complex64::new(z, 0.0);
    let h0 = init.herglotz0(zc)?;
    let ph = phi_weight(zc, p)?;
    let c = h0 * h0 - ph * ph + (a + b) * (a + b);
    let x = -zc * 4.0 / ((ONE - zc) * (ONE - zc));
    let sqrt_c = c.sqrt();
    let inner = (c - x * (c - a2 + b2) + x * x * b2).sqrt();
    let diff = sqrt_c - inner;
    let d = (x * x * b2 - diff * diff) / x;
    Ok(ClosedFormContext { c, d, x, a2, b2, sqrt_c })
}

impl ClosedFormContext {
    fn radicands(&self, t: f64) -> (Complex64, Complex64, Complex64) {
        let e = self.d * (self.sqrt_c * t).exp();
        let s = self.b2 - self.a2;
        let m1 = Complex64::new(s, 0.0) - self.c - e;
        let m2 = Complex64::new(s, 0.0) + self.c - e;
        let r1 = m1 * m1 - self.c * (4.0 * self.a2);
        let r2 = m2 * m2 - self.c * (4.0 * self.b2);
        (r1, r2, e)
    }

    fn assemble(&self, r1: Complex64, r2: Complex64, e: Complex64) -> Complex64 {
        let q = r1 - r2;
        q * q / (self.c * e * 4.0)
    }
}

fn pick(sq: Complex64, prev: Complex64) -> (Complex64, bool) {
    let r = sq.sqrt();
    let (dp, dm) = ((r - prev).norm(), (r + prev).norm());
    let chosen = if dp <= dm { r } else { -r };
    let ambiguous = dp.min(dm) > 0.5 * dp.max(dm) && r.norm() > 1e-12 * (1.0 + prev.norm());
    (chosen, ambiguous)
}

/// `phi_t(z)` from the closed form with the default continuation step.
pub fn phi_real(t: f64, z: f64, init: &InitialData) -> Result<Complex64> {
    phi_real_with(t, z, init, DEFAULT_DT)
}

/// `phi_t(z)` from the closed form; square-root branches are continued in `t` from
/// `t = 0`, where the formula must return `z`.
pub fn phi_real_with(t: f64, z: f64, init: &InitialData, dt: f64) -> Result<Complex64> {
    if !(t >= 0.0) || !(dt > 0.0) {
        return Err(Error::InvalidParameter { name: "t", value: t });
    }
    if z == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let ctx = context(z, init)?;
    let (q1, q2, e0) = ctx.radicands(0.0);
    let mut r1 = q1.sqrt();
    let plus = q2.sqrt();
    let zc = Complex64::new(z, 0.0);
    let cand_p = ctx.assemble(r1, plus, e0);
    let cand_m = ctx.assemble(r1, -plus, e0);
    let mut r2 = if (cand_p - zc).norm() <= (cand_m - zc).norm() { plus } else { -plus };
    // the two candidates are z and 1/z; the formula loses accuracy near +-1, so
    // only require the chosen one to be clearly the former
    if (ctx.assemble(r1, r2, e0) - zc).norm() > 0.1 * (1.0 / z - z).abs() {
        return Err(Error::BranchTracking { t: 0.0 });
    }
    let mut s = 0.0;
    let mut h = dt;
    let mut modulus = z.abs();
    while s < t {
        let step = h.min(t - s);
        let (q1, q2, e) = ctx.radicands(s + step);
        let (n1, amb1) = pick(q1, r1);
        let (n2, amb2) = pick(q2, r2);
        if (amb1 || amb2) && step > 1e-9 {
            h = step * 0.5;
            continue;
        }
        r1 = n1;
        r2 = n2;
        s += step;
        h = (h * 2.0).min(dt);
        // |phi| grows strictly along the flow; a decrease means the branch
        // was continued through the exit point
        let phi = ctx.assemble(r1, r2, e);
        if !phi.is_finite() || phi.re.abs() >= 1.0 || phi.norm() < modulus {
            return Err(Error::OutOfDomain { z, t: s });
        }
        modulus = phi.norm();
    }
    let (_, _, e) = ctx.radicands(t);
    let phi = ctx.assemble(r1, r2, e);
    if !phi.is_finite() || phi.im.abs() > 1e-9 * phi.norm().max(1.0) || phi.re.abs() >= 1.0 {
        return Err(Error::OutOfDomain { z, t });
    }
    if t > 0.0 {
        let back = (t - 1e-7).max(0.0);
        let (q1, q2, e) = ctx.radicands(back);
        let earlier = ctx.assemble(pick(q1, r1).0, pick(q2, r2).0, e);
        if earlier.norm() > phi.norm() {
            return Err(Error::OutOfDomain { z, t });
        }
    }
    Ok(phi)
}

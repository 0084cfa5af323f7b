//! Centered cardinal B-splines used for charge assignment.

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 6;

/// Uncentered cardinal B-spline `M_p(t)`, supported on `[0, p)`.
fn cardinal(p: usize, t: f64) -> f64 {
    if t < 0.0 || t >= p as f64 {
        return 0.0;
    }
    if p == 1 {
        return 1.0;
    }
    let q = (p - 1) as f64;
    (t * cardinal(p - 1, t) + (p as f64 - t) * cardinal(p - 1, t - 1.0)) / q
}

/// First mesh index and the `p` weights `W(u - j)` for mesh coordinate `u`.
pub fn bspline_weights(p: usize, u: f64) -> (i64, [f64; MAX_ORDER]) {
    let fl = u.floor();
    let frac = u - fl;
    let base = fl as i64;
    let half = (p / 2) as i64;
    let j0 = if p.is_multiple_of(2) {
        base - half + 1
    } else if frac < 0.5 {
        base - half
    } else {
        base - half + 1
    };
    let mut w = [0.0; MAX_ORDER];
    for (k, wk) in w.iter_mut().enumerate().take(p) {
        let j = j0 + k as i64;
        *wk = cardinal(p, frac + (base - j) as f64 + 0.5 * p as f64);
    }
    (j0, w)
}

/// Fourier transform of the assignment function at fractional frequency
/// `x = f/N`: `sinc(πx)^p`.
pub fn bspline_hat(p: usize, x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let a = std::f64::consts::PI * x;
    (a.sin() / a).powi(p as i32)
}

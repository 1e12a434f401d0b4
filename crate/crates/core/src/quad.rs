//! Small numerics toolbox: adaptive quadrature, Gauss-Legendre nodes, and
//! monotone cubic interpolation.

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
///
/// The interval is pre-split into nine panels and the first two refinement
/// levels are unconditional, so integrands whose zeros line up with dyadic
/// nodes (characters do) cannot fool the error estimate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    const PANELS: usize = 9;
    let mut total = 0.0;
    for p in 0..PANELS {
        let pa = a + (b - a) * p as f64 / PANELS as f64;
        let pb = a + (b - a) * (p + 1) as f64 / PANELS as f64;
        let fa = f(pa);
        let fb = f(pb);
        let m = 0.5 * (pa + pb);
        let fm = f(m);
        let whole = simpson(fa, fm, fb, pb - pa);
        total += recurse(&f, pa, pb, fa, fm, fb, whole, tol / PANELS as f64, 48, 2);
    }
    total
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    force: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || (force == 0 && delta.abs() <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    let sub_force = force.saturating_sub(1);
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, sub_force)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, sub_force)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Chebyshev-like initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Monotone cubic interpolant (Fritsch-Carlson slopes). Knots must be
/// strictly increasing in `x`; `y` must be non-decreasing.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() == y.len() && x.len() >= 2);
        let n = x.len();
        let mut secants = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let h = x[i + 1] - x[i];
            assert!(h > 0.0, "knots must be strictly increasing");
            secants.push((y[i + 1] - y[i]) / h);
        }
        let mut slope = vec![0.0; n];
        slope[0] = secants[0];
        slope[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            if secants[i - 1] * secants[i] <= 0.0 {
                slope[i] = 0.0;
            } else {
                // Harmonic mean keeps the interpolant monotone.
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                slope[i] = (w0 + w1) / (w0 / secants[i - 1] + w1 / secants[i]);
            }
        }
        for i in 0..n - 1 {
            if secants[i] == 0.0 {
                slope[i] = 0.0;
                slope[i + 1] = 0.0;
            }
        }
        MonotoneCubic { x, y, slope }
    }

    pub fn eval(&self, at: f64) -> f64 {
        let n = self.x.len();
        if at <= self.x[0] {
            return self.y[0];
        }
        if at >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let mut lo = 0;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.x[mid] <= at {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let h = self.x[lo + 1] - self.x[lo];
        let t = (at - self.x[lo]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[lo]
            + h10 * h * self.slope[lo]
            + h01 * self.y[lo + 1]
            + h11 * h * self.slope[lo + 1]
    }
}

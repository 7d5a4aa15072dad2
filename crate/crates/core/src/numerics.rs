//! Small numerical kernels: quadrature, root finding, 1-D maximization and
//! Monte Carlo summaries.

use crate::{Error, Result};

const GL16: [(f64, f64); 16] = [
    (-0.9894009349916499, 0.027152459411754037),
    (-0.9445750230732326, 0.062253523938647706),
    (-0.8656312023878318, 0.09515851168249259),
    (-0.755404408355003, 0.12462897125553403),
    (-0.6178762444026438, 0.14959598881657676),
    (-0.45801677765722737, 0.16915651939500262),
    (-0.2816035507792589, 0.1826034150449236),
    (-0.09501250983763745, 0.18945061045506859),
    (0.09501250983763745, 0.18945061045506859),
    (0.2816035507792589, 0.1826034150449236),
    (0.45801677765722737, 0.16915651939500262),
    (0.6178762444026438, 0.14959598881657676),
    (0.755404408355003, 0.12462897125553403),
    (0.8656312023878318, 0.09515851168249259),
    (0.9445750230732326, 0.062253523938647706),
    (0.9894009349916499, 0.027152459411754037),
];

/// 16-point Gauss–Legendre rule on `[a, b]` (orientation respected).
pub fn gauss_legendre16<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL16.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Adaptive Gauss–Legendre: bisects until two-panel and one-panel estimates
/// agree to `tol` (absolute, scaled by the interval share).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let left = gauss_legendre16(f, a, m);
        let right = gauss_legendre16(f, m, b);
        if depth == 0 || (left + right - whole).abs() <= tol {
            left + right
        } else {
            rec(f, a, m, left, 0.5 * tol, depth - 1) + rec(f, m, b, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let whole = gauss_legendre16(f, a, b);
    rec(f, a, b, whole, tol, 40)
}

/// Root of `f` in a bracket `[a, b]` with `f(a) f(b) <= 0`, by bisection
/// interleaved with secant steps that stay inside the bracket.
pub fn find_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Diagnostics(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    for it in 0..400 {
        let width = (b - a).abs();
        if width <= xtol {
            break;
        }
        let secant = b - fb * (b - a) / (fb - fa);
        let lo = a.min(b);
        let hi = a.max(b);
        let m = if it % 2 == 0 && secant > lo && secant < hi && secant.is_finite() {
            secant
        } else {
            0.5 * (a + b)
        };
        let fm = f(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
        if a == b || (m == a && m == b) {
            break;
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    let mut best = (x, fx);
    for (y, fy) in [(c, fc), (d, fd)] {
        if fy > best.1 {
            best = (y, fy);
        }
    }
    best
}

/// Mean and standard error of a sample, summed in index order.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct McSummary {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl McSummary {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return McSummary { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        McSummary { mean, se: (var / n as f64).sqrt(), n }
    }

    /// Sample variance (unbiased).
    pub fn variance(&self) -> f64 {
        self.se * self.se * self.n as f64
    }

    /// `|mean - target| <= k * se`, exact equality counting as a pass.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se || self.mean == target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let v = gauss_legendre16(|x| x.powi(31) + 3.0 * x * x, -1.0, 2.0);
        let exact = (2f64.powi(32) - 1.0) / 32.0 + 9.0;
        assert!((v - exact).abs() < 1e-6 * exact);
    }

    #[test]
    fn adaptive_integration_of_exponential() {
        let v = integrate(&|x: f64| x.exp(), 0.0, -1.0, 1e-13);
        assert!((v - ((-1f64).exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn root_and_golden() {
        let r = find_root(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(find_root(|x| x * x + 1.0, 0.0, 1.0, 1e-12).is_err());
        let (x, fx) = golden_max(|x| -(x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8 && fx.abs() < 1e-15);
    }

    #[test]
    fn summary_of_constant_sample() {
        let s = McSummary::from_samples(&[2.0; 10]);
        assert_eq!((s.mean, s.se), (2.0, 0.0));
        assert!(s.within(2.0, 3.0));
    }
}

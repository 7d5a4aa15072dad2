//! Strategy approximators: moving-average smoothing, grid discretization,
//! jump-capped simple strategies, and an explicit pair of parametric
//! representations certifying how close the smoothed path is in M1.

use crate::cadlag::{Breakpoint, SegmentKind};
use crate::metrics::d_uniform;
use crate::{Error, Path, Representation, Result};

/// Prefix integrals of a path, with `x(0-)` continued to negative times.
struct Cumulative<'a> {
    x: &'a Path,
    prefix: Vec<f64>,
}

impl<'a> Cumulative<'a> {
    fn new(x: &'a Path) -> Self {
        let pts = x.breakpoints();
        let mut prefix = vec![0.0];
        for (i, w) in pts.windows(2).enumerate() {
            let len = w[1].t - w[0].t;
            let area = match x.kinds()[i] {
                SegmentKind::Constant => w[0].right * len,
                SegmentKind::Linear => 0.5 * (w[0].right + w[1].left) * len,
            };
            prefix.push(prefix[i] + area);
        }
        Cumulative { x, prefix }
    }

    fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.x.initial_left() * t;
        }
        let pts = self.x.breakpoints();
        let i = pts.partition_point(|p| p.t <= t).saturating_sub(1).min(pts.len() - 2);
        let a = pts[i];
        let v = self.x.value_at(t);
        let part = match self.x.kinds()[i] {
            SegmentKind::Constant => a.right * (t - a.t),
            SegmentKind::Linear => 0.5 * (a.right + v) * (t - a.t),
        };
        self.prefix[i] + part
    }
}

/// Moving average `(1/ε)∫_{t−ε}^t x(s) ds` with `x = x(0−)` before time 0.
///
/// The result is continuous and piecewise linear; pieces that are quadratic
/// in exact arithmetic are resampled at spacing `ε/8`.
pub fn wz_average(x: &Path, eps: f64) -> Result<Path> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("window must be positive, got {eps}")));
    }
    let horizon = x.horizon();
    let cum = Cumulative::new(x);
    let mut knots: Vec<f64> = vec![0.0, horizon];
    for p in x.breakpoints() {
        knots.push(p.t);
        if p.t + eps < horizon {
            knots.push(p.t + eps);
        }
    }
    knots.sort_by(|a, b| a.total_cmp(b));
    knots.dedup();
    let linear_near = |t: f64| x.kind_at(t) == SegmentKind::Linear;
    let mut times = vec![0.0];
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        if linear_near(mid) || (mid - eps > 0.0 && linear_near(mid - eps)) {
            let m = ((b - a) / (eps / 8.0)).ceil().max(1.0) as usize;
            for j in 1..m {
                times.push(a + (b - a) * j as f64 / m as f64);
            }
        }
        times.push(b);
    }
    let vals: Vec<f64> = times.iter().map(|&t| (cum.at(t) - cum.at(t - eps)) / eps).collect();
    Path::from_samples(&times, &vals, &vals)
}

/// `n + 1` equidistant times `0, T/n, …, T`.
pub fn uniform_nodes(horizon: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|k| if k == n { horizon } else { horizon * k as f64 / n as f64 }).collect()
}

/// Simple strategy holding `x(t_k)` on `[t_k, t_{k+1})`, starting from `x(0−)`
/// and ending at `x(T)`.
pub fn grid_discretize(x: &Path, nodes: &[f64]) -> Result<Path> {
    let horizon = x.horizon();
    if nodes.len() < 2 || nodes[0] != 0.0 || nodes[nodes.len() - 1] != horizon {
        return Err(Error::InvalidParameter("nodes must start at 0 and end at the horizon".into()));
    }
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("nodes must be strictly increasing".into()));
    }
    let mut pts = Vec::with_capacity(nodes.len());
    let mut prev = x.initial_left();
    for &t in nodes {
        let v = x.value_at(t);
        pts.push(Breakpoint::new(t, prev, v));
        prev = v;
    }
    let kinds = vec![SegmentKind::Constant; pts.len() - 1];
    Path::new(horizon, x.initial_left(), pts, kinds)
}

/// First time after `from` at which the continuous piecewise linear `w`
/// sits `eps` away from `level`, or `None` before `until`.
fn crossing(w: &Path, seg: &mut usize, from: f64, until: f64, level: f64, eps: f64) -> Option<f64> {
    let pts = w.breakpoints();
    while *seg + 1 < pts.len() && pts[*seg + 1].t <= from {
        *seg += 1;
    }
    let mut i = *seg;
    while i + 1 < pts.len() && pts[i].t < until {
        let a = pts[i].t.max(from);
        let b = pts[i + 1].t.min(until);
        let (wa, wb) = (w.value_at(a), w.left_at(b));
        for target in [level + eps, level - eps] {
            let (da, db) = (wa - target, wb - target);
            if da == 0.0 && a > from {
                return Some(a);
            }
            if da.signum() != db.signum() || db == 0.0 {
                let s = if db == da { b } else { (a + (b - a) * da / (da - db)).clamp(a, b) };
                // Rounding can leave `s` a hair short of the level; it still
                // counts unless it makes no progress.
                return Some(if s > from { s } else { b });
            }
        }
        if b >= until {
            break;
        }
        i += 1;
        *seg = i;
    }
    None
}

fn staircase(w: &Path, n: usize, eps: f64) -> Result<Path> {
    let horizon = w.horizon();
    let spacing = 1.0 / n as f64;
    let mut pts = vec![Breakpoint::new(0.0, w.initial_left(), w.value_at(0.0))];
    let mut t = 0.0;
    let mut v = w.value_at(0.0);
    let mut seg = 0;
    loop {
        let until = (t + spacing).min(horizon);
        let next = crossing(w, &mut seg, t, until, v, eps).unwrap_or(until);
        if next >= horizon {
            break;
        }
        let nv = w.value_at(next);
        pts.push(Breakpoint::new(next, v, nv));
        t = next;
        v = nv;
    }
    pts.push(Breakpoint::new(horizon, v, w.terminal()));
    let kinds = vec![SegmentKind::Constant; pts.len() - 1];
    Path::new(horizon, w.initial_left(), pts, kinds)
}

/// Gap target floor of [`jump_capped_simple`].
pub const JUMP_CAP_GAP_FLOOR: f64 = 1e-6;

/// Simple strategy with jumps of size at most `1/n` that stays within
/// `max(2^{−n} ∧ 1/n, 1e-6)` of the moving average with window `1/n`.
///
/// Crossing levels start at `1/n` and are halved until the uniform gap to
/// the smoothed path meets the target.
pub fn jump_capped_simple(x: &Path, n: usize) -> Result<Path> {
    if n == 0 {
        return Err(Error::InvalidParameter("cap parameter must be at least 1".into()));
    }
    let w = wz_average(x, 1.0 / n as f64)?;
    // Below 1e-6 the staircase length explodes without changing anything visible.
    let target = (0.5f64).powi(n.min(1000) as i32).min(1.0 / n as f64).max(JUMP_CAP_GAP_FLOOR);
    let mut eps = 1.0 / n as f64;
    loop {
        let out = staircase(&w, n, eps)?;
        if d_uniform(&out, &w)? <= target || eps <= 1e-12 {
            return Ok(out);
        }
        eps = (0.5 * eps).max(1e-12);
    }
}

/// Explicit parametric representations of `x` and of its moving average.
#[derive(Clone, Debug)]
pub struct WzCertificate {
    pub original: Representation,
    pub smoothed: Representation,
    /// `max(|u − u_n|, |r − r_n|)` over the samples.
    pub certified_distance: f64,
}

const MAX_CERTIFIED_JUMPS: usize = 10_000;

/// Builds the fictitious-time representations of `x` and `wz_average(x, 1/n)`.
///
/// Jump `k = 0, 1, …` (ranked by decreasing size, ties to the earlier time)
/// receives the fictitious duration `weights[k]`, by default `2^{−k}`. The
/// smoothed path runs on the centred clock `t + n∫_{t−1/n}^t δ`, so both
/// representations share the parameter range `[0, γ₀(T)]`.
pub fn wz_parametric_certificate(x: &Path, n: usize, weights: Option<&[f64]>) -> Result<WzCertificate> {
    if n == 0 {
        return Err(Error::InvalidParameter("window parameter must be at least 1".into()));
    }
    let mut jumps = x.jumps();
    if jumps.len() > MAX_CERTIFIED_JUMPS {
        return Err(Error::Refused(format!("{} jumps exceed the certificate limit", jumps.len())));
    }
    jumps.sort_by(|a, b| b.jump().abs().total_cmp(&a.jump().abs()).then(a.t.total_cmp(&b.t)));
    let mut a = Vec::with_capacity(jumps.len());
    for k in 0..jumps.len() {
        let w = match weights {
            Some(ws) => *ws.get(k).ok_or_else(|| Error::InvalidParameter("too few fictitious weights".into()))?,
            None => 0.5f64.powi(k as i32),
        };
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidParameter(format!("fictitious weight {w} must be positive")));
        }
        a.push(w);
    }
    let tk: Vec<f64> = jumps.iter().map(|p| p.t).collect();
    let horizon = x.horizon();
    let h = 1.0 / n as f64;
    let delta = |t: f64| tk.iter().zip(&a).filter(|(s, _)| **s <= t).map(|(_, w)| w).sum::<f64>();
    let delta_left = |t: f64| tk.iter().zip(&a).filter(|(s, _)| **s < t).map(|(_, w)| w).sum::<f64>();
    let gamma0 = |t: f64| t + delta(t);
    let gamma_n = |t: f64| {
        t + n as f64 * tk.iter().zip(&a).map(|(s, w)| w * (t - s).clamp(0.0, h)).sum::<f64>()
    };
    // Smallest t in [0, T] with gamma(t) >= s.
    let inverse = |g: &dyn Fn(f64) -> f64, s: f64| {
        if g(0.0) >= s {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, horizon);
        if g(hi) < s {
            return horizon;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) >= s {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let w = wz_average(x, h)?;
    let (s0, s1) = (0.0, gamma0(horizon));

    let mut samples: Vec<f64> = (0..=4096).map(|i| s0 + (s1 - s0) * i as f64 / 4096.0).collect();
    let mut kinks: Vec<f64> = x.breakpoint_times();
    kinks.extend(w.breakpoint_times());
    for &b in &kinks {
        samples.push(gamma0(b));
        samples.push(b + delta_left(b));
        samples.push(gamma_n(b));
    }
    for &t in &tk {
        samples.push(gamma_n((t + h).min(horizon)));
    }
    samples.retain(|s| *s >= s0 && *s <= s1);
    samples.sort_by(|a, b| a.total_cmp(b));
    samples.dedup();

    let mut orig = Representation { z: Vec::new(), u: Vec::new(), r: Vec::new() };
    let mut smooth = Representation { z: Vec::new(), u: Vec::new(), r: Vec::new() };
    let mut dist: f64 = 0.0;
    for &s in &samples {
        let r = inverse(&gamma0, s);
        let lo = r + delta_left(r);
        let hi = gamma0(r);
        let u = if hi > lo && s < hi {
            let wgt = ((s - lo) / (hi - lo)).clamp(0.0, 1.0);
            x.left_at(r) + (x.value_at(r) - x.left_at(r)) * wgt
        } else {
            x.value_at(r)
        };
        let rn = inverse(&gamma_n, s);
        let un = w.value_at(rn);
        let z = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        orig.z.push(z);
        orig.u.push(u);
        orig.r.push(r);
        smooth.z.push(z);
        smooth.u.push(un);
        smooth.r.push(rn);
        dist = dist.max((u - un).abs()).max((r - rn).abs());
    }
    Ok(WzCertificate { original: orig, smoothed: smooth, certified_distance: dist })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{d_m1, d_uniform};

    #[test]
    fn average_of_constant_and_step() {
        let c = Path::constant(1.0, 0.3).unwrap();
        assert!(d_uniform(&wz_average(&c, 0.1).unwrap(), &c).unwrap() < 1e-15);
        let x = Path::step(2.0, 0.0, &[(1.0, 1.0)]).unwrap();
        let w = wz_average(&x, 0.25).unwrap();
        let ramp = Path::polyline(&[(0.0, 0.0), (1.0, 0.0), (1.25, 1.0), (2.0, 1.0)]).unwrap();
        assert!(d_uniform(&w, &ramp).unwrap() < 1e-14);
    }

    #[test]
    fn terminal_jump_reached_after_the_window() {
        let x = Path::step(1.0, 1.0, &[(1.0, 0.0)]).unwrap();
        let ext = x.extend(0.1).unwrap();
        let w = wz_average(&ext, 0.1).unwrap();
        assert!((w.value_at(1.1) - 1.0).abs() < 1e-14);
        assert!(w.terminal().abs() < 1e-14);
    }

    #[test]
    fn staircase_of_linear_sale() {
        let x = Path::polyline(&[(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let s = grid_discretize(&x, &uniform_nodes(1.0, 4)).unwrap();
        assert!(s.is_piecewise_constant());
        assert!(s.jumps().iter().all(|p| (p.jump() + 0.25).abs() < 1e-15));
        assert!((d_uniform(&s, &x).unwrap() - 0.25).abs() < 1e-12);
        assert!(grid_discretize(&x, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn jump_cap_on_unit_block() {
        let x = Path::step(2.0, 0.0, &[(1.0, 1.0)]).unwrap();
        let s = jump_capped_simple(&x, 4).unwrap();
        assert!(s.max_jump() <= 0.25 + 1e-12);
        let after: Vec<_> = s.jumps().into_iter().filter(|p| p.t >= 1.0).collect();
        assert!(after.len() >= 4);
        let w = wz_average(&x, 0.25).unwrap();
        assert!(d_uniform(&s, &w).unwrap() <= 1.0 / 16.0);
    }

    #[test]
    fn certificate_for_a_single_jump() {
        let c = Path::constant(1.0, 2.0).unwrap();
        assert_eq!(wz_parametric_certificate(&c, 8, None).unwrap().certified_distance, 0.0);
        let x = Path::step(1.0, 0.0, &[(0.5, 1.0)]).unwrap();
        let cert = wz_parametric_certificate(&x, 16, None).unwrap();
        assert!(cert.certified_distance <= 1.0 / 16.0 + 1e-9, "{}", cert.certified_distance);
        let w = wz_average(&x, 1.0 / 16.0).unwrap();
        let d = d_m1(&x, &w, 1e-9).unwrap();
        assert!(cert.certified_distance >= d - 1e-9);
        assert!(cert.original.check_on_graph(&x.completed_graph(), 1e-9).unwrap() < 1e-9);
        assert!(cert.smoothed.check_on_graph(&w.completed_graph(), 1e-9).unwrap() < 1e-9);
    }
}

//! Distances between càdlàg paths.
//!
//! * [`d_uniform`]: sup norm, exact on constant/linear segments.
//! * [`d_j1_upper`]: an upper bound on the Skorokhod J1 distance obtained by
//!   searching piecewise-linear time warps with nodes on a finite set.
//! * [`d_m1`]: the Skorokhod M1 distance. For polylines this is the Fréchet
//!   distance between the completed graphs under the box ground metric
//!   `max(|Δt|, |Δv|)`; it is computed by bisection on a free-space
//!   reachability decision procedure.
//! * [`d_levy_prokhorov`]: Lévy–Prokhorov distance of nondecreasing paths seen
//!   as measures on the time axis.
//! * [`m1_oscillation`]: the M1 oscillation function on a time window.

use crate::cadlag::{CadlagPath, CompletedGraph};
use crate::{Error, Result, Scalar};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_WARP_GRID: usize = 64;

/// Largest ratio between node-index steps of the two sides of a warp piece.
const WARP_STRIDE: usize = 4;

fn same_horizon<S: Scalar>(x: &CadlagPath<S>, y: &CadlagPath<S>) -> Result<()> {
    if x.horizon() != y.horizon() {
        Err(Error::HorizonMismatch(x.horizon().to_f64_lossy(), y.horizon().to_f64_lossy()))
    } else {
        Ok(())
    }
}

/// Uniform distance including the initial left values.
pub fn d_uniform<S: Scalar>(x: &CadlagPath<S>, y: &CadlagPath<S>) -> Result<S> {
    same_horizon(x, y)?;
    let mut d = (x.initial_left() - y.initial_left()).abs();
    for t in x.merged_times(y) {
        d = d
            .max((x.value_at(t) - y.value_at(t)).abs())
            .max((x.left_at(t) - y.left_at(t)).abs());
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// J1 upper bound

/// Cost of the warp piece mapping `[a, a1]` (time of `y`) linearly onto
/// `[b, b1]` (time of `x`).
fn warp_piece_cost<S: Scalar>(
    x: &CadlagPath<S>,
    y: &CadlagPath<S>,
    (a, a1): (S, S),
    (b, b1): (S, S),
    last: bool,
) -> S {
    let slope = (b1 - b) / (a1 - a);
    let lam = |s: S| b + (s - a) * slope;
    let inv = |t: S| a + (t - b) / slope;
    let mut cost = (b - a).abs().max((b1 - a1).abs());
    cost = cost.max((x.value_at(b) - y.value_at(a)).abs());
    cost = cost.max((x.left_at(b1) - y.left_at(a1)).abs());
    if last {
        cost = cost.max((x.value_at(b1) - y.value_at(a1)).abs());
    }
    let mut check = |s: S, t: S| {
        cost = cost
            .max((x.value_at(t) - y.value_at(s)).abs())
            .max((x.left_at(t) - y.left_at(s)).abs());
    };
    let yb = y.breakpoints();
    let start = yb.partition_point(|p| p.t <= a);
    for p in &yb[start..] {
        if p.t >= a1 {
            break;
        }
        check(p.t, lam(p.t));
    }
    let xb = x.breakpoints();
    let start = xb.partition_point(|p| p.t <= b);
    for p in &xb[start..] {
        if p.t >= b1 {
            break;
        }
        check(inv(p.t), p.t);
    }
    cost
}

/// Upper bound on the J1 distance: minimizes `max(‖λ − id‖, ‖x∘λ − y‖)` over
/// increasing piecewise-linear bijections whose nodes map points of the union
/// of jump times and a uniform grid of `warp_grid_size` points onto the same set.
pub fn d_j1_upper<S: Scalar>(x: &CadlagPath<S>, y: &CadlagPath<S>, warp_grid_size: usize) -> Result<S> {
    same_horizon(x, y)?;
    if warp_grid_size < 2 {
        return Err(Error::InvalidParameter("warp grid needs at least two nodes".into()));
    }
    let horizon = x.horizon();
    let mut nodes: Vec<S> = (0..warp_grid_size)
        .map(|k| horizon * S::lit(k as f64 / (warp_grid_size - 1) as f64))
        .collect();
    nodes.extend(x.stats().jump_times);
    nodes.extend(y.stats().jump_times);
    nodes.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    nodes.dedup();
    *nodes.last_mut().expect("non-empty") = horizon;
    nodes[0] = S::zero();
    let m = nodes.len();

    let base = (x.initial_left() - y.initial_left()).abs();
    let identity = d_uniform(x, y)?;
    let mut best = identity;
    if best <= base {
        return Ok(best);
    }
    let inf = S::infinity();
    let mut dp = vec![inf; m * m];
    dp[0] = base;
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let cur = dp[i * m + j];
            if cur >= best {
                continue;
            }
            let relax = |i1: usize, j1: usize, dp: &mut Vec<S>| {
                if i1 >= m || j1 >= m {
                    return;
                }
                if (nodes[i1] - nodes[j1]).abs() >= best {
                    return;
                }
                let last = i1 == m - 1 && j1 == m - 1;
                if (i1 == m - 1) != (j1 == m - 1) {
                    return;
                }
                let c = cur.max(warp_piece_cost(x, y, (nodes[i], nodes[i1]), (nodes[j], nodes[j1]), last));
                let slot = &mut dp[i1 * m + j1];
                if c < *slot {
                    *slot = c;
                }
            };
            for k in 1..=WARP_STRIDE {
                relax(i + 1, j + k, &mut dp);
                if k > 1 {
                    relax(i + k, j + 1, &mut dp);
                }
            }
        }
        let done = dp[(m - 1) * m + (m - 1)];
        if done < best {
            best = done;
        }
    }
    Ok(best.min(dp[m * m - 1]))
}

// ---------------------------------------------------------------------------
// M1 via Fréchet distance of completed graphs

type Interval<S> = Option<(S, S)>;

/// Parameters `w ∈ [0, 1]` with `‖a + w (b − a) − c‖_∞ ≤ eps`.
fn free_interval<S: Scalar>(a: (S, S), b: (S, S), c: (S, S), eps: S) -> Interval<S> {
    let mut lo = S::zero();
    let mut hi = S::one();
    for (a0, d, c0) in [(a.0, b.0 - a.0, c.0), (a.1, b.1 - a.1, c.1)] {
        let off = a0 - c0;
        if d == S::zero() {
            if off.abs() > eps {
                return None;
            }
        } else {
            let w1 = (-eps - off) / d;
            let w2 = (eps - off) / d;
            lo = lo.max(w1.min(w2));
            hi = hi.min(w1.max(w2));
        }
    }
    if lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}

fn box_dist<S: Scalar>(p: (S, S), q: (S, S)) -> S {
    (p.0 - q.0).abs().max((p.1 - q.1).abs())
}

/// Does a monotone joint traversal of `p` and `q` stay within `eps`?
pub fn frechet_decide<S: Scalar>(p: &[(S, S)], q: &[(S, S)], eps: S) -> bool {
    let n = p.len();
    let m = q.len();
    if box_dist(p[0], q[0]) > eps || box_dist(p[n - 1], q[m - 1]) > eps {
        return false;
    }
    if n == 1 {
        return q.iter().all(|&c| box_dist(p[0], c) <= eps);
    }
    if m == 1 {
        return p.iter().all(|&c| box_dist(c, q[0]) <= eps);
    }
    let one = S::one();
    // Reachable parts of the left boundaries of the current column of cells
    // (vertex p[i] against segment q[j]).
    let mut lr: Vec<Interval<S>> = vec![None; m - 1];
    let mut open = true;
    for j in 0..m - 1 {
        if !open {
            break;
        }
        let f = free_interval(q[j], q[j + 1], p[0], eps);
        match f {
            Some((lo, hi)) if lo <= S::zero() => {
                lr[j] = Some((S::zero(), hi));
                open = hi >= one;
            }
            _ => open = false,
        }
    }
    let mut next: Vec<Interval<S>> = vec![None; m - 1];
    // Bottom boundary reachability along q[0] for successive columns.
    let mut bottom_open = true;
    for i in 0..n - 1 {
        // Bottom boundary of cell (i, 0): segment p[i] against vertex q[0].
        let mut br: Interval<S> = if bottom_open {
            match free_interval(p[i], p[i + 1], q[0], eps) {
                Some((lo, hi)) if lo <= S::zero() => {
                    bottom_open = hi >= one;
                    Some((S::zero(), hi))
                }
                _ => {
                    bottom_open = false;
                    None
                }
            }
        } else {
            None
        };
        for j in 0..m - 1 {
            let left = lr[j];
            // Right boundary: vertex p[i + 1] against segment q[j].
            let right_free = free_interval(q[j], q[j + 1], p[i + 1], eps);
            next[j] = match right_free {
                None => None,
                Some((a, b)) => {
                    if br.is_some() {
                        Some((a, b))
                    } else if let Some((lo, _)) = left {
                        let a2 = a.max(lo);
                        if a2 <= b {
                            Some((a2, b))
                        } else {
                            None
                        }
                    } else {
                        None
                    }
                }
            };
            // Top boundary: segment p[i] against vertex q[j + 1].
            let top_free = free_interval(p[i], p[i + 1], q[j + 1], eps);
            br = match top_free {
                None => None,
                Some((a, b)) => {
                    if left.is_some() {
                        Some((a, b))
                    } else if let Some((lo, _)) = br {
                        let a2 = a.max(lo);
                        if a2 <= b {
                            Some((a2, b))
                        } else {
                            None
                        }
                    } else {
                        None
                    }
                }
            };
        }
        // br now describes the top boundary of cell (i, m - 2).
        if i == n - 2 {
            let via_right = matches!(next[m - 2], Some((_, hi)) if hi >= one);
            let via_top = matches!(br, Some((_, hi)) if hi >= one);
            return via_right || via_top;
        }
        std::mem::swap(&mut lr, &mut next);
    }
    false
}

/// Fréchet distance of two polylines under the box metric, within `tol`
/// from below.
pub fn frechet_box<S: Scalar>(p: &CompletedGraph<S>, q: &CompletedGraph<S>, tol: S) -> Result<S> {
    if !(tol > S::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", tol)));
    }
    let (pv, qv) = (&p.vertices, &q.vertices);
    let slack = |e: S| e + S::slack() * (S::one() + e);
    let mut lo = box_dist(pv[0], qv[0]).max(box_dist(pv[pv.len() - 1], qv[qv.len() - 1]));
    if frechet_decide(pv, qv, slack(lo)) {
        return Ok(lo);
    }
    let mut hi = lo.max(S::lit(1e-3));
    let mut guard = 0;
    while !frechet_decide(pv, qv, slack(hi)) {
        lo = hi;
        hi = hi + hi;
        guard += 1;
        if guard > 200 {
            return Err(Error::Diagnostics("Fréchet upper bracket not found".into()));
        }
    }
    while hi - lo > tol {
        let mid = lo + (hi - lo) / S::lit(2.0);
        if frechet_decide(pv, qv, slack(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// Skorokhod M1 distance within `tol` (never above the exact value by more
/// than float slack).
pub fn d_m1<S: Scalar>(x: &CadlagPath<S>, y: &CadlagPath<S>, tol: S) -> Result<S> {
    same_horizon(x, y)?;
    if !(tol > S::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", tol)));
    }
    let gx = x.completed_graph();
    let gy = y.completed_graph();
    let upper = d_uniform(x, y)?;
    let mut lo = box_dist(gx.vertices[0], gy.vertices[0])
        .max(box_dist(gx.vertices[gx.len() - 1], gy.vertices[gy.len() - 1]));
    let slack = |e: S| e + S::slack() * (S::one() + e);
    if frechet_decide(&gx.vertices, &gy.vertices, slack(lo)) {
        return Ok(lo);
    }
    let mut hi = upper.max(lo);
    if !frechet_decide(&gx.vertices, &gy.vertices, slack(hi)) {
        return frechet_box(&gx, &gy, tol);
    }
    while hi - lo > tol {
        let mid = lo + (hi - lo) / S::lit(2.0);
        if frechet_decide(&gx.vertices, &gy.vertices, slack(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

// ---------------------------------------------------------------------------
// Lévy–Prokhorov

fn lp_one_sided<S: Scalar>(x: &CadlagPath<S>, y: &CadlagPath<S>, eps: S) -> bool {
    let horizon = x.horizon();
    let tol = S::slack();
    let shifted = |t: S| (t + eps).min(horizon);
    let mut cands: Vec<S> = x.breakpoint_times();
    cands.extend(y.breakpoints().iter().map(|p| p.t - eps).filter(|&t| t >= S::zero()));
    if horizon - eps >= S::zero() {
        cands.push(horizon - eps);
    }
    cands.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    cands.dedup();
    for &t in &cands {
        if x.value_at(t) > y.value_at(shifted(t)) + eps + tol {
            return false;
        }
        if t > S::zero() && x.left_at(t) > y.left_at(shifted(t)) + eps + tol {
            return false;
        }
    }
    true
}

/// Lévy–Prokhorov distance of two nondecreasing paths with equal initial left
/// values and equal terminal values, to absolute accuracy `1e-12`.
pub fn d_levy_prokhorov<S: Scalar>(x: &CadlagPath<S>, y: &CadlagPath<S>) -> Result<S> {
    same_horizon(x, y)?;
    if !x.is_nondecreasing() || !y.is_nondecreasing() {
        return Err(Error::NotMonotone("both paths must be nondecreasing".into()));
    }
    let tol = S::lit(1e-9) * (S::one() + x.terminal().abs());
    if (x.initial_left() - y.initial_left()).abs() > tol || (x.terminal() - y.terminal()).abs() > tol {
        return Err(Error::NotMonotone(
            "paths must share the initial left value and the terminal value".into(),
        ));
    }
    let feasible = |e: S| lp_one_sided(x, y, e) && lp_one_sided(y, x, e);
    if feasible(S::zero()) {
        return Ok(S::zero());
    }
    let mut lo = S::zero();
    let mut hi = x.horizon().max(d_uniform(x, y)?);
    let step = S::lit(1e-12).max(S::epsilon() * S::lit(4.0) * (S::one() + hi));
    while hi - lo > step {
        let mid = lo + (hi - lo) / S::lit(2.0);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

// ---------------------------------------------------------------------------
// Oscillation

/// M1 oscillation of `x` on `[t - delta, t + delta] ∩ [0, T]`: the largest
/// distance of a middle value from the segment spanned by an earlier and a
/// later value.
pub fn m1_oscillation<S: Scalar>(x: &CadlagPath<S>, t: S, delta: S) -> Result<S> {
    if !(delta > S::zero()) {
        return Err(Error::InvalidParameter(format!("window must be positive, got {}", delta)));
    }
    x.eval(t)?;
    let a = (t - delta).max(S::zero());
    let b = (t + delta).min(x.horizon());
    let mut vals: Vec<S> = vec![x.value_at(a)];
    for p in x.breakpoints() {
        if p.t > a && p.t <= b {
            vals.push(p.left);
            vals.push(p.right);
        }
    }
    vals.push(x.left_at(b));
    vals.push(x.value_at(b));
    let n = vals.len();
    let mut pre_min = vec![S::infinity(); n];
    let mut pre_max = vec![S::neg_infinity(); n];
    for i in 1..n {
        pre_min[i] = pre_min[i - 1].min(vals[i - 1]);
        pre_max[i] = pre_max[i - 1].max(vals[i - 1]);
    }
    let mut suf_min = vec![S::infinity(); n];
    let mut suf_max = vec![S::neg_infinity(); n];
    for i in (0..n - 1).rev() {
        suf_min[i] = suf_min[i + 1].min(vals[i + 1]);
        suf_max[i] = suf_max[i + 1].max(vals[i + 1]);
    }
    let mut w = S::zero();
    for j in 1..n.saturating_sub(1) {
        let above = vals[j] - pre_min[j].max(suf_min[j]);
        let below = pre_max[j].min(suf_max[j]) - vals[j];
        w = w.max(above).max(below);
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    type P = CadlagPath<f64>;

    fn step_at(t: f64) -> P {
        P::step(2.0, 0.0, &[(t, 1.0)]).unwrap()
    }

    fn ramp(t: f64, w: f64) -> P {
        P::polyline(&[(0.0, 0.0), (t, 0.0), (t + w, 1.0), (2.0, 1.0)]).unwrap()
    }

    #[test]
    fn uniform_examples() {
        let x = step_at(1.0);
        assert_eq!(d_uniform(&x, &x).unwrap(), 0.0);
        assert_eq!(d_uniform(&x, &P::constant(2.0, 0.0).unwrap()).unwrap(), 1.0);
        assert_eq!(d_uniform(&x, &step_at(1.001)).unwrap(), 1.0);
        let short = P::constant(1.0, 0.0).unwrap();
        assert!(d_uniform(&x, &short).is_err());
    }

    #[test]
    fn j1_examples() {
        let x = step_at(1.0);
        assert_eq!(d_j1_upper(&x, &x, 64).unwrap(), 0.0);
        let shifted = d_j1_upper(&x, &step_at(1.1), 64).unwrap();
        assert!((shifted - 0.1).abs() < 1e-12, "{shifted}");
        for n in [4.0, 16.0, 64.0] {
            assert!(d_j1_upper(&x, &ramp(1.0, 1.0 / n), 64).unwrap() >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn m1_examples() {
        let x = step_at(1.0);
        assert!(d_m1(&x, &x, 1e-6).unwrap() <= 1e-6);
        for n in [4.0, 16.0, 64.0] {
            let d = d_m1(&x, &ramp(1.0, 1.0 / n), 1e-6).unwrap();
            assert!(d <= 1.0 / n + 1e-6, "n = {n}: {d}");
        }
        // shift by 0.1: M1 equals the time shift
        let d = d_m1(&x, &step_at(1.1), 1e-8).unwrap();
        assert!((d - 0.1).abs() < 1e-7, "{d}");
    }

    #[test]
    fn m1_is_not_additive() {
        // x jumps up at 1 and y = 1 − x jumps down; smoothing x after the
        // jump and y before it converges separately but opens a dip in the sum.
        let x = step_at(1.0);
        let y = P::step(2.0, 1.0, &[(1.0, 0.0)]).unwrap();
        for n in [4.0, 16.0, 64.0] {
            let xs = ramp(1.0, 1.0 / n);
            let ys = P::polyline(&[(0.0, 1.0), (1.0 - 1.0 / n, 1.0), (1.0, 0.0), (2.0, 0.0)]).unwrap();
            assert!(d_m1(&x, &xs, 1e-6).unwrap() <= 1.0 / n + 1e-6);
            assert!(d_m1(&y, &ys, 1e-6).unwrap() <= 1.0 / n + 1e-6);
            let sum = d_m1(&x.add(&y).unwrap(), &xs.add(&ys).unwrap(), 1e-6).unwrap();
            assert!(sum >= 0.5 - 1e-6, "n = {n}: {sum}");
        }
    }

    #[test]
    fn lp_examples() {
        let x = step_at(1.0);
        assert_eq!(d_levy_prokhorov(&x, &x).unwrap(), 0.0);
        let d = d_levy_prokhorov(&x, &step_at(1.2)).unwrap();
        assert!((d - 0.2).abs() < 1e-11, "{d}");
        for n in [4.0, 32.0] {
            assert!(d_levy_prokhorov(&x, &ramp(1.0, 1.0 / n)).unwrap() <= 1.0 / n + 1e-11);
        }
        let down = P::step(2.0, 1.0, &[(1.0, 0.0)]).unwrap();
        assert!(matches!(d_levy_prokhorov(&down, &down), Err(Error::NotMonotone(_))));
    }

    #[test]
    fn oscillation_examples() {
        let bump = P::step(2.0, 0.0, &[(1.0, 1.0), (1.5, 0.0)]).unwrap();
        assert_eq!(m1_oscillation(&bump, 1.25, 0.5).unwrap(), 1.0);
        assert_eq!(m1_oscillation(&step_at(1.0), 1.0, 0.7).unwrap(), 0.0);
        assert_eq!(m1_oscillation(&P::constant(2.0, 3.0).unwrap(), 0.3, 1.0).unwrap(), 0.0);
    }
}

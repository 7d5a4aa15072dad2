//! Right-continuous paths with left limits on a compact interval.
//!
//! A [`CadlagPath`] lives on the internal domain `[0, T]` and is stored as a
//! sorted list of breakpoints `(t_i, x(t_i-), x(t_i))` with one interpolation
//! kind per interval between consecutive breakpoints. The first breakpoint is
//! always at `0` (its left value is `x(0-)`) and the last one at `T`.
//!
//! Extended paths (constant continuation before `0` and after `T`) are stored
//! the same way on a longer domain; the external time of internal `0` is kept
//! in [`CadlagPath::offset`].

use crate::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Interpolation used on the open interval between two breakpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// Holds the right value of the starting breakpoint.
    Constant,
    /// Interpolates from the right value at the start to the left value at the end.
    Linear,
}

/// A breakpoint with its left limit and (right-continuous) value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakpoint<S> {
    pub t: S,
    pub left: S,
    pub right: S,
}

impl<S: Scalar> Breakpoint<S> {
    pub fn new(t: S, left: S, right: S) -> Self {
        Breakpoint { t, left, right }
    }

    pub fn continuous(t: S, v: S) -> Self {
        Breakpoint { t, left: v, right: v }
    }

    pub fn jump(&self) -> S {
        self.right - self.left
    }
}

/// Càdlàg path on `[0, T]` with constant or linear segments.
#[derive(Clone, Debug, PartialEq)]
pub struct CadlagPath<S> {
    horizon: S,
    offset: S,
    initial_left: S,
    points: Vec<Breakpoint<S>>,
    kinds: Vec<SegmentKind>,
}

/// Total variation, sum of squared jumps and jump times of a path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStats<S> {
    pub total_variation: S,
    pub quadratic_jump_sum: S,
    pub jump_times: Vec<S>,
}

/// Serialized form of one breakpoint; `kind` describes the segment that starts here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub t: f64,
    pub left: f64,
    pub right: f64,
    pub kind: SegmentKind,
}

fn close<S: Scalar>(a: S, b: S) -> bool {
    (a - b).abs() <= S::slack() * (S::one() + a.abs().max(b.abs()))
}

impl<S: Scalar> CadlagPath<S> {
    /// Builds a path from breakpoints and segment kinds.
    ///
    /// Breakpoints with identical times are merged (left value of the first,
    /// right value of the last). The first breakpoint must sit at `0` and the
    /// last at `horizon`; `kinds` has one entry per interval after merging.
    pub fn new(
        horizon: S,
        initial_left: S,
        points: Vec<Breakpoint<S>>,
        kinds: Vec<SegmentKind>,
    ) -> Result<Self> {
        if points.len() != kinds.len() + 1 {
            return Err(Error::InvalidPath(format!(
                "{} breakpoints need {} segment kinds, got {}",
                points.len(),
                points.len().saturating_sub(1),
                kinds.len()
            )));
        }
        let mut merged: Vec<Breakpoint<S>> = Vec::with_capacity(points.len());
        let mut merged_kinds: Vec<SegmentKind> = Vec::with_capacity(kinds.len());
        for (i, p) in points.into_iter().enumerate() {
            if let Some(last) = merged.last_mut() {
                if p.t == last.t {
                    last.right = p.right;
                    merged_kinds.pop();
                    if i < kinds.len() {
                        merged_kinds.push(kinds[i]);
                    }
                    continue;
                }
            }
            merged.push(p);
            if i < kinds.len() {
                merged_kinds.push(kinds[i]);
            }
        }
        // A trailing duplicate leaves one kind too many.
        merged_kinds.truncate(merged.len().saturating_sub(1));
        let path = CadlagPath {
            horizon,
            offset: S::zero(),
            initial_left,
            points: merged,
            kinds: merged_kinds,
        };
        path.validate()?;
        Ok(path)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPath(m));
        if !(self.horizon > S::zero()) || !self.horizon.is_finite() {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.points.len() < 2 || self.kinds.len() != self.points.len() - 1 {
            return bad("need breakpoints at 0 and at the horizon".into());
        }
        let first = self.points[0];
        let last = self.points[self.points.len() - 1];
        if first.t != S::zero() || last.t != self.horizon {
            return bad(format!(
                "breakpoints must start at 0 and end at {}, got [{}, {}]",
                self.horizon, first.t, last.t
            ));
        }
        if !close(first.left, self.initial_left) {
            return bad("left value at 0 must equal the initial left value".into());
        }
        for w in self.points.windows(2) {
            if !(w[1].t > w[0].t) {
                return bad(format!("breakpoint times not increasing at {}", w[1].t));
            }
        }
        for p in &self.points {
            if !(p.t.is_finite() && p.left.is_finite() && p.right.is_finite()) {
                return bad(format!("non-finite breakpoint at {}", p.t));
            }
        }
        for (i, k) in self.kinds.iter().enumerate() {
            if *k == SegmentKind::Constant
                && !close(self.points[i].right, self.points[i + 1].left)
            {
                return bad(format!(
                    "constant segment starting at {} does not match the left limit at {}",
                    self.points[i].t,
                    self.points[i + 1].t
                ));
            }
        }
        Ok(())
    }

    /// Constant path `c` on `[0, horizon]`.
    pub fn constant(horizon: S, c: S) -> Result<Self> {
        Self::new(
            horizon,
            c,
            vec![Breakpoint::continuous(S::zero(), c), Breakpoint::continuous(horizon, c)],
            vec![SegmentKind::Constant],
        )
    }

    /// Piecewise constant path starting from `initial_left` that jumps to the
    /// given values at the given times (times in `[0, horizon]`, increasing).
    pub fn step(horizon: S, initial_left: S, jumps: &[(S, S)]) -> Result<Self> {
        let mut pts = vec![Breakpoint::continuous(S::zero(), initial_left)];
        let mut current = initial_left;
        for &(t, v) in jumps {
            if t < S::zero() || t > horizon {
                return Err(Error::InvalidPath(format!("jump time {} outside [0, {}]", t, horizon)));
            }
            pts.push(Breakpoint::new(t, current, v));
            current = v;
        }
        pts.push(Breakpoint::continuous(horizon, current));
        let kinds = vec![SegmentKind::Constant; pts.len() - 1];
        Self::new(horizon, initial_left, pts, kinds)
    }

    /// Continuous piecewise linear path through `(t, v)` knots; the first knot
    /// must be at `0` and the last at the horizon.
    pub fn polyline(knots: &[(S, S)]) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidPath("polyline needs at least two knots".into()));
        }
        let horizon = knots[knots.len() - 1].0;
        let pts: Vec<_> = knots.iter().map(|&(t, v)| Breakpoint::continuous(t, v)).collect();
        let kinds = vec![SegmentKind::Linear; pts.len() - 1];
        Self::new(horizon, knots[0].1, pts, kinds)
    }

    /// Piecewise linear interpolation of samples with explicit left values,
    /// so jumps sit exactly at sample times.
    pub fn from_samples(times: &[S], left: &[S], right: &[S]) -> Result<Self> {
        if times.len() < 2 || times.len() != left.len() || times.len() != right.len() {
            return Err(Error::InvalidPath("sample vectors must have equal length ≥ 2".into()));
        }
        let pts: Vec<_> = times
            .iter()
            .zip(left.iter().zip(right))
            .map(|(&t, (&l, &r))| Breakpoint::new(t, l, r))
            .collect();
        let kinds = vec![SegmentKind::Linear; pts.len() - 1];
        Self::new(times[times.len() - 1], left[0], pts, kinds)
    }

    pub fn horizon(&self) -> S {
        self.horizon
    }

    /// External time of internal time `0`.
    pub fn offset(&self) -> S {
        self.offset
    }

    pub fn with_offset(mut self, offset: S) -> Self {
        self.offset = offset;
        self
    }

    pub fn initial_left(&self) -> S {
        self.initial_left
    }

    pub fn breakpoints(&self) -> &[Breakpoint<S>] {
        &self.points
    }

    pub fn kinds(&self) -> &[SegmentKind] {
        &self.kinds
    }

    pub fn breakpoint_times(&self) -> Vec<S> {
        self.points.iter().map(|p| p.t).collect()
    }

    /// Value `x(T)`.
    pub fn terminal(&self) -> S {
        self.points[self.points.len() - 1].right
    }

    fn check_domain(&self, t: S) -> Result<()> {
        if t < S::zero() || t > self.horizon || t.is_nan() {
            Err(Error::Domain {
                t: t.to_f64_lossy(),
                lo: 0.0,
                hi: self.horizon.to_f64_lossy(),
            })
        } else {
            Ok(())
        }
    }

    /// Index of the last breakpoint with time `<= t`.
    fn last_at_or_before(&self, t: S) -> usize {
        let k = self.points.partition_point(|p| p.t <= t);
        k.saturating_sub(1)
    }

    fn interpolate(&self, i: usize, t: S) -> S {
        let a = self.points[i];
        match self.kinds[i] {
            SegmentKind::Constant => a.right,
            SegmentKind::Linear => {
                let b = self.points[i + 1];
                let w = (t - a.t) / (b.t - a.t);
                a.right + (b.left - a.right) * w
            }
        }
    }

    /// Right-continuous value `x(t)`.
    pub fn eval(&self, t: S) -> Result<S> {
        self.check_domain(t)?;
        Ok(self.value_at(t))
    }

    /// Left limit `x(t-)`, with `x(0-)` the initial left value.
    pub fn left_limit(&self, t: S) -> Result<S> {
        self.check_domain(t)?;
        Ok(self.left_at(t))
    }

    /// `x(t)` with `t` clamped to the domain.
    pub fn value_at(&self, t: S) -> S {
        let t = t.max(S::zero()).min(self.horizon);
        let i = self.last_at_or_before(t);
        if self.points[i].t == t || i + 1 == self.points.len() {
            self.points[i].right
        } else {
            self.interpolate(i, t)
        }
    }

    /// `x(t-)` with `t` clamped to the domain.
    pub fn left_at(&self, t: S) -> S {
        let t = t.max(S::zero()).min(self.horizon);
        let i = self.last_at_or_before(t);
        if self.points[i].t == t {
            self.points[i].left
        } else {
            self.interpolate(i, t)
        }
    }

    /// Jumps as `(t, left, right)` triples, including a jump at `0` from the
    /// initial left value.
    pub fn jumps(&self) -> Vec<Breakpoint<S>> {
        self.points.iter().copied().filter(|p| p.right != p.left).collect()
    }

    pub fn has_jumps(&self) -> bool {
        self.points.iter().any(|p| p.right != p.left)
    }

    pub fn has_terminal_jump(&self) -> bool {
        let p = self.points[self.points.len() - 1];
        p.right != p.left
    }

    pub fn has_initial_jump(&self) -> bool {
        self.points[0].right != self.points[0].left
    }

    /// True when every segment is constant.
    pub fn is_piecewise_constant(&self) -> bool {
        self.kinds.iter().enumerate().all(|(i, k)| {
            *k == SegmentKind::Constant || self.points[i].right == self.points[i + 1].left
        })
    }

    /// Nondecreasing including `x(0-)` and all jumps.
    pub fn is_nondecreasing(&self) -> bool {
        let tol = S::slack();
        self.points.iter().all(|p| p.right >= p.left - tol)
            && self.kinds.iter().enumerate().all(|(i, _)| {
                self.points[i + 1].left >= self.points[i].right - tol
            })
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.scale(-S::one()).is_nondecreasing()
    }

    /// Embeds the path into `[-eps, T + eps]`: `x(0-)` before `0` and `x(T)`
    /// after `T`. The result is stored on `[0, T + 2 eps]` with its offset
    /// moved by `-eps`.
    pub fn extend(&self, eps: S) -> Result<Self> {
        if !(eps > S::zero()) {
            return Err(Error::InvalidParameter(format!("extension must be positive, got {}", eps)));
        }
        let mut pts = Vec::with_capacity(self.points.len() + 2);
        let mut kinds = Vec::with_capacity(self.kinds.len() + 2);
        pts.push(Breakpoint::continuous(S::zero(), self.initial_left));
        kinds.push(SegmentKind::Constant);
        for (i, p) in self.points.iter().enumerate() {
            pts.push(Breakpoint::new(p.t + eps, p.left, p.right));
            if i < self.kinds.len() {
                kinds.push(self.kinds[i]);
            }
        }
        kinds.push(SegmentKind::Constant);
        let end = self.terminal();
        pts.push(Breakpoint::continuous(self.horizon + eps + eps, end));
        let out = Self::new(self.horizon + eps + eps, self.initial_left, pts, kinds)?;
        Ok(out.with_offset(self.offset - eps))
    }

    /// Restriction to the internal interval `[a, b]`, re-indexed to start at 0.
    pub fn restrict(&self, a: S, b: S) -> Result<Self> {
        self.check_domain(a)?;
        self.check_domain(b)?;
        if !(b > a) {
            return Err(Error::InvalidParameter(format!("empty restriction [{}, {}]", a, b)));
        }
        let start_left = self.left_at(a);
        let mut pts = vec![Breakpoint::new(S::zero(), start_left, self.value_at(a))];
        let mut kinds = Vec::new();
        let i0 = self.last_at_or_before(a);
        kinds.push(self.kinds[i0.min(self.kinds.len() - 1)]);
        for (i, p) in self.points.iter().enumerate() {
            if p.t > a && p.t < b {
                pts.push(Breakpoint::new(p.t - a, p.left, p.right));
                kinds.push(self.kinds[i.min(self.kinds.len() - 1)]);
            }
        }
        let end_left = self.left_at(b);
        pts.push(Breakpoint::continuous(b - a, end_left));
        let out = Self::new(b - a, start_left, pts, kinds)?;
        Ok(out.with_offset(self.offset + a))
    }

    /// Completed graph: the path traversed left to right with a vertical
    /// segment at every jump (including one at `0` from `x(0-)`).
    pub fn completed_graph(&self) -> CompletedGraph<S> {
        let mut v: Vec<(S, S)> = Vec::with_capacity(2 * self.points.len());
        let mut push = |p: (S, S)| {
            if v.last() != Some(&p) {
                v.push(p);
            }
        };
        for p in &self.points {
            push((p.t, p.left));
            push((p.t, p.right));
        }
        // Collinear consecutive vertices on constant stretches are harmless
        // but inflate the metric DP; drop horizontal middles.
        let mut out: Vec<(S, S)> = Vec::with_capacity(v.len());
        for p in v {
            let n = out.len();
            if n >= 2 {
                let a = out[n - 2];
                let b = out[n - 1];
                if a.1 == b.1 && b.1 == p.1 && a.0 < b.0 && b.0 < p.0 {
                    out[n - 1] = p;
                    continue;
                }
            }
            out.push(p);
        }
        if out.len() == 1 {
            out.push((self.horizon, out[0].1));
        }
        CompletedGraph { vertices: out }
    }

    /// Total variation, quadratic jump sum and sorted jump times.
    pub fn stats(&self) -> PathStats<S> {
        let mut tv = S::zero();
        let mut q = S::zero();
        let mut times = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            let j = p.right - p.left;
            if j != S::zero() {
                tv = tv + j.abs();
                q = q + j * j;
                times.push(p.t);
            }
            if i < self.kinds.len() && self.kinds[i] == SegmentKind::Linear {
                tv = tv + (self.points[i + 1].left - p.right).abs();
            }
        }
        PathStats { total_variation: tv, quadratic_jump_sum: q, jump_times: times }
    }

    /// Largest jump magnitude (0 for continuous paths).
    pub fn max_jump(&self) -> S {
        self.points
            .iter()
            .fold(S::zero(), |m, p| m.max((p.right - p.left).abs()))
    }

    /// `a * x + b`.
    pub fn affine(&self, a: S, b: S) -> Self {
        let pts = self
            .points
            .iter()
            .map(|p| Breakpoint::new(p.t, a * p.left + b, a * p.right + b))
            .collect();
        CadlagPath {
            horizon: self.horizon,
            offset: self.offset,
            initial_left: a * self.initial_left + b,
            points: pts,
            kinds: self.kinds.clone(),
        }
    }

    pub fn scale(&self, a: S) -> Self {
        self.affine(a, S::zero())
    }

    /// Sorted union of the breakpoint times of two paths on the same domain.
    pub fn merged_times(&self, other: &Self) -> Vec<S> {
        let mut t: Vec<S> = self
            .points
            .iter()
            .map(|p| p.t)
            .chain(other.points.iter().map(|p| p.t))
            .collect();
        t.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        t.dedup();
        t
    }

    /// Pointwise sum on the merged breakpoint set.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.horizon != other.horizon {
            return Err(Error::HorizonMismatch(
                self.horizon.to_f64_lossy(),
                other.horizon.to_f64_lossy(),
            ));
        }
        let times = self.merged_times(other);
        let pts: Vec<_> = times
            .iter()
            .map(|&t| {
                Breakpoint::new(
                    t,
                    self.left_at(t) + other.left_at(t),
                    self.value_at(t) + other.value_at(t),
                )
            })
            .collect();
        let kinds: Vec<_> = times
            .windows(2)
            .map(|w| {
                let mid = (w[0] + w[1]) / S::lit(2.0);
                if self.kind_at(mid) == SegmentKind::Linear || other.kind_at(mid) == SegmentKind::Linear {
                    SegmentKind::Linear
                } else {
                    SegmentKind::Constant
                }
            })
            .collect();
        Ok(Self::new(self.horizon, self.initial_left + other.initial_left, pts, kinds)?
            .with_offset(self.offset))
    }

    /// Kind of the segment containing the interior time `t`.
    pub fn kind_at(&self, t: S) -> SegmentKind {
        let i = self.last_at_or_before(t).min(self.kinds.len() - 1);
        if self.kinds[i] == SegmentKind::Linear && self.points[i].right != self.points[i + 1].left {
            SegmentKind::Linear
        } else {
            SegmentKind::Constant
        }
    }

    /// Values `x(t)` on a sampling grid (clamped to the domain).
    pub fn sample(&self, grid: &[S]) -> Vec<S> {
        grid.iter().map(|&t| self.value_at(t)).collect()
    }

    pub fn to_records(&self) -> Vec<PathRecord> {
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| PathRecord {
                t: p.t.to_f64_lossy(),
                left: p.left.to_f64_lossy(),
                right: p.right.to_f64_lossy(),
                kind: if i < self.kinds.len() { self.kinds[i] } else { SegmentKind::Constant },
            })
            .collect()
    }

    pub fn from_records(records: &[PathRecord]) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::InvalidPath("need at least two records".into()));
        }
        let pts: Vec<_> = records
            .iter()
            .map(|r| Breakpoint::new(S::lit(r.t), S::lit(r.left), S::lit(r.right)))
            .collect();
        let kinds: Vec<_> = records[..records.len() - 1].iter().map(|r| r.kind).collect();
        let horizon = S::lit(records[records.len() - 1].t);
        Self::new(horizon, S::lit(records[0].left), pts, kinds)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_records())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let records: Vec<PathRecord> = serde_json::from_str(s)?;
        Self::from_records(&records)
    }

    /// Writes `t,value` rows on the sampling grid.
    pub fn write_csv<W: Write>(&self, out: W, grid: &[S]) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "value"])?;
        for &t in grid {
            w.write_record([t.to_f64_lossy().to_string(), self.value_at(t).to_f64_lossy().to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Polyline `Γ(x)` in the `(time, value)` plane; equal consecutive times
/// denote vertical jump segments.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletedGraph<S> {
    pub vertices: Vec<(S, S)>,
}

impl<S: Scalar> CompletedGraph<S> {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Cumulative length under the box norm `max(|Δt|, |Δv|)`.
    pub fn cumulative_length(&self) -> Vec<S> {
        let mut acc = vec![S::zero()];
        for w in self.vertices.windows(2) {
            let d = (w[1].0 - w[0].0).abs().max((w[1].1 - w[0].1).abs());
            let last = *acc.last().expect("non-empty");
            acc.push(last + d);
        }
        acc
    }

    /// Point at fraction `z ∈ [0, 1]` of the box length.
    pub fn point_at(&self, z: S, cumulative: &[S]) -> (S, S) {
        let total = *cumulative.last().expect("non-empty");
        if total == S::zero() {
            return self.vertices[0];
        }
        let s = z.max(S::zero()).min(S::one()) * total;
        let k = cumulative.partition_point(|&c| c <= s).min(self.vertices.len() - 1);
        if k == 0 {
            return self.vertices[0];
        }
        let (a, b) = (self.vertices[k - 1], self.vertices[k]);
        let span = cumulative[k] - cumulative[k - 1];
        if span == S::zero() {
            return b;
        }
        let w = (s - cumulative[k - 1]) / span;
        (a.0 + (b.0 - a.0) * w, a.1 + (b.1 - a.1) * w)
    }

    /// Box-length parametrization sampled at `m + 1` equidistant parameters.
    pub fn parametric_representation(&self, m: usize) -> ParametricRepresentation<S> {
        let cum = self.cumulative_length();
        let m = m.max(1);
        let mut rep = ParametricRepresentation { z: Vec::new(), u: Vec::new(), r: Vec::new() };
        for i in 0..=m {
            let z = S::lit(i as f64 / m as f64);
            let (t, v) = self.point_at(z, &cum);
            rep.z.push(z);
            rep.r.push(t);
            rep.u.push(v);
        }
        rep
    }

    /// Box distance from `(t, v)` to the graph.
    pub fn distance_to(&self, t: S, v: S) -> S {
        let mut best = S::infinity();
        for w in self.vertices.windows(2) {
            best = best.min(box_point_segment(w[0], w[1], (t, v)));
        }
        if self.vertices.len() == 1 {
            let p = self.vertices[0];
            best = (p.0 - t).abs().max((p.1 - v).abs());
        }
        best
    }
}

/// Box-norm distance from point `q` to segment `[a, b]` (ternary search on a
/// convex function of the segment parameter).
pub(crate) fn box_point_segment<S: Scalar>(a: (S, S), b: (S, S), q: (S, S)) -> S {
    let f = |w: S| {
        let t = a.0 + (b.0 - a.0) * w;
        let v = a.1 + (b.1 - a.1) * w;
        (t - q.0).abs().max((v - q.1).abs())
    };
    let (mut lo, mut hi) = (S::zero(), S::one());
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / S::lit(3.0);
        let m2 = hi - (hi - lo) / S::lit(3.0);
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f((lo + hi) / S::lit(2.0)).min(f(S::zero())).min(f(S::one()))
}

/// Sampled parametric representation `(u, r)` of a completed graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ParametricRepresentation<S> {
    /// Parameter grid in `[0, 1]`.
    pub z: Vec<S>,
    /// Spatial component.
    pub u: Vec<S>,
    /// Time component.
    pub r: Vec<S>,
}

impl<S: Scalar> ParametricRepresentation<S> {
    /// Largest box distance of a sampled point from the graph, or an error
    /// when `r` decreases or endpoints do not match.
    pub fn check_on_graph(&self, graph: &CompletedGraph<S>, tol: S) -> Result<S> {
        let mut worst = S::zero();
        for (&u, &r) in self.u.iter().zip(&self.r) {
            worst = worst.max(graph.distance_to(r, u));
        }
        if self.r.windows(2).any(|w| w[1] < w[0] - tol) {
            return Err(Error::InvalidPath("time component decreases".into()));
        }
        let first = graph.vertices[0];
        let last = graph.vertices[graph.vertices.len() - 1];
        let n = self.u.len() - 1;
        let end_gap = (self.r[0] - first.0)
            .abs()
            .max((self.u[0] - first.1).abs())
            .max((self.r[n] - last.0).abs())
            .max((self.u[n] - last.1).abs());
        if end_gap > tol {
            return Err(Error::InvalidPath(format!("endpoints miss the graph by {}", end_gap)));
        }
        Ok(worst)
    }

    /// `max_k max(|u_k - u'_k|, |r_k - r'_k|)` on a shared parameter grid.
    pub fn distance(&self, other: &Self) -> Result<S> {
        if self.z.len() != other.z.len() {
            return Err(Error::GridMismatch("representations use different parameter grids".into()));
        }
        let mut d = S::zero();
        for k in 0..self.z.len() {
            d = d.max((self.u[k] - other.u[k]).abs()).max((self.r[k] - other.r[k]).abs());
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_step() -> CadlagPath<f64> {
        CadlagPath::step(2.0, 0.0, &[(1.0, 1.0)]).unwrap()
    }

    #[test]
    fn step_eval_and_left_limit() {
        let x = unit_step();
        assert_eq!(x.eval(1.0).unwrap(), 1.0);
        assert_eq!(x.left_limit(1.0).unwrap(), 0.0);
        assert_eq!(x.left_limit(0.0).unwrap(), 0.0);
        assert!(x.eval(2.5).is_err());
        assert!(x.left_limit(-0.1).is_err());
    }

    #[test]
    fn constant_and_linear() {
        let c = CadlagPath::constant(3.0, 0.7).unwrap();
        for t in [0.0, 1.3, 3.0] {
            assert_eq!(c.eval(t).unwrap(), 0.7);
        }
        let l = CadlagPath::polyline(&[(0.0, 0.0), (2.0, 4.0)]).unwrap();
        assert_eq!(l.eval(0.5).unwrap(), 1.0);
    }

    #[test]
    fn graph_of_unit_step() {
        let g = unit_step().completed_graph();
        assert_eq!(g.vertices, vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (2.0, 1.0)]);
    }

    #[test]
    fn graph_with_two_jumps() {
        let x = CadlagPath::step(2.0, 0.0, &[(1.0, 1.0), (1.5, 0.25)]).unwrap();
        let g = x.completed_graph();
        assert_eq!(
            g.vertices,
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (1.5, 1.0), (1.5, 0.25), (2.0, 0.25)]
        );
        let vertical = g.vertices.windows(2).filter(|w| w[0].0 == w[1].0).count();
        assert_eq!(vertical, 2);
    }

    #[test]
    fn graph_of_polyline_is_its_knots() {
        let knots = [(0.0, 0.0), (0.5, 1.0), (1.0, -1.0), (2.0, 0.5)];
        let g = CadlagPath::polyline(&knots).unwrap().completed_graph();
        assert_eq!(g.vertices, knots.to_vec());
    }

    #[test]
    fn stats_examples() {
        let c = CadlagPath::constant(1.0, 2.0).unwrap().stats();
        assert_eq!((c.total_variation, c.quadratic_jump_sum, c.jump_times.len()), (0.0, 0.0, 0));
        let s = unit_step().stats();
        assert_eq!((s.total_variation, s.quadratic_jump_sum, s.jump_times), (1.0, 1.0, vec![1.0]));
        let b = CadlagPath::<f64>::step(2.0, 0.0, &[(1.0, 0.5), (1.5, 0.0)]).unwrap().stats();
        assert!((b.total_variation - 1.0).abs() < 1e-15);
        assert!((b.quadratic_jump_sum - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extension_examples() {
        let x = unit_step().extend(1.0).unwrap();
        assert_eq!(x.horizon(), 4.0);
        assert_eq!(x.offset(), -1.0);
        // external time s ↦ internal s + 1
        assert_eq!(x.eval(0.0).unwrap(), 0.0);
        assert_eq!(x.left_limit(2.0).unwrap(), 0.0);
        assert_eq!(x.eval(2.0).unwrap(), 1.0);
        assert_eq!(x.eval(4.0).unwrap(), 1.0);

        let terminal = CadlagPath::step(1.0, 1.0, &[(1.0, 0.0)]).unwrap();
        let e = terminal.extend(0.5).unwrap();
        assert_eq!(e.eval(1.6).unwrap(), 0.0);
        assert_eq!(e.eval(2.0).unwrap(), 0.0);
        assert_eq!(e.left_limit(1.5).unwrap(), 1.0);

        let c = CadlagPath::constant(1.0, 3.0).unwrap().extend(0.25).unwrap();
        assert!(c.breakpoints().iter().all(|p| p.left == 3.0 && p.right == 3.0));
    }

    #[test]
    fn json_round_trip() {
        let x = CadlagPath::step(2.0, 0.0, &[(1.0, 1.0), (1.5, 0.25)]).unwrap();
        let back = CadlagPath::<f64>::from_json(&x.to_json().unwrap()).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn duplicate_times_are_merged() {
        let pts = vec![
            Breakpoint::continuous(0.0, 0.0),
            Breakpoint::new(1.0, 0.0, 0.5),
            Breakpoint::new(1.0, 0.5, 1.0),
            Breakpoint::continuous(2.0, 1.0),
        ];
        let kinds = vec![SegmentKind::Constant; 3];
        let x = CadlagPath::new(2.0, 0.0, pts, kinds).unwrap();
        assert_eq!(x.breakpoints().len(), 3);
        assert_eq!(x.left_limit(1.0).unwrap(), 0.0);
        assert_eq!(x.eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn generic_over_f32() {
        let x = CadlagPath::<f32>::step(2.0, 0.0, &[(1.0, 1.0)]).unwrap();
        assert_eq!(x.completed_graph().len(), 4);
        assert_eq!(x.stats().total_variation, 1.0f32);
    }

    #[test]
    fn representation_lies_on_graph() {
        let x = CadlagPath::step(2.0, 0.0, &[(1.0, 1.0), (1.5, 0.25)]).unwrap();
        let g = x.completed_graph();
        let rep = g.parametric_representation(200);
        assert!(rep.check_on_graph(&g, 1e-12).unwrap() < 1e-9);
    }
}

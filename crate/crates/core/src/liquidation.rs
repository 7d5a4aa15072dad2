//! Optimal liquidation: the impact-fixing solution under stochastic
//! liquidity, its liquidation-time law, Monte Carlo samplers, and a numeric
//! optimizer for monotone sales on a finite horizon.
//!
//! Under stochastic liquidity the unaffected price is a martingale
//! independent of the liquidity noise, so expected proceeds are evaluated
//! with `S̄ ≡ 1`.

use crate::cadlag::{Breakpoint, SegmentKind};
use crate::impact::{advance_cell, ou_factors, ImpactFn, Resilience, StochasticLiquiditySpec};
use crate::market::{normal, path_rng};
use crate::numerics::{find_root, golden_max, McSummary};
use crate::{Error, Path, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// An impact-fixing strategy: hold impact at `level` until the position
/// reaches `level − terminal`, then sell the rest in one block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactFixingParams {
    /// Impact level `Ỹ` held during execution.
    pub level: f64,
    /// Impact `Υ` right after the final block.
    pub terminal: f64,
    pub beta: f64,
    pub sigma_hat: f64,
    pub y0_minus: f64,
    /// Shares held before time 0.
    pub theta0_minus: f64,
    /// Budget on the expected liquidation time.
    pub eta_max: f64,
}

impl ImpactFixingParams {
    /// `Y_{0−} − Θ_{0−} − Υ`.
    pub fn distance(&self) -> f64 {
        self.y0_minus - self.theta0_minus - self.terminal
    }

    /// Finite expected liquidation time.
    pub fn is_admissible(&self) -> bool {
        let n = self.distance();
        n == 0.0 || n * self.level > 0.0
    }

    /// Position right after the initial block.
    pub fn initial_position(&self) -> f64 {
        self.theta0_minus + self.level - self.y0_minus
    }

    /// Position at which the final block is triggered.
    pub fn barrier(&self) -> f64 {
        self.level - self.terminal
    }

    fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.sigma_hat >= 0.0
            && [self.level, self.terminal, self.y0_minus, self.theta0_minus].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid impact-fixing parameters {self:?}")))
        }
    }
}

/// `E[τ]` for the impact-fixing strategy: `N/(βỸ)`, `0` or `∞`.
pub fn expected_liquidation_time(p: &ImpactFixingParams) -> f64 {
    let n = p.distance();
    if n == 0.0 {
        0.0
    } else if n * p.level > 0.0 {
        n / (p.beta * p.level)
    } else {
        f64::INFINITY
    }
}

/// First-passage density of `μt + W_t` from `x` to level `z` at time `t`.
pub fn hitting_time_density(mu: f64, x: f64, z: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain { t, lo: 0.0, hi: f64::INFINITY });
    }
    let d = z - x;
    Ok(d.abs() / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-(d - mu * t).powi(2) / (2.0 * t)).exp())
}

/// Probability that `μt + W_t` started at `x` never reaches `z`.
pub fn prob_never_hits(mu: f64, x: f64, z: f64) -> f64 {
    -(mu * (z - x) - mu.abs() * (z - x).abs()).exp_m1()
}

/// The one-dimensional objective behind the impact-fixing solution.
#[derive(Clone, Debug)]
pub struct PsiObjective {
    pub f: ImpactFn,
    pub beta: f64,
    pub sigma_hat: f64,
    pub y0_minus: f64,
    pub theta0_minus: f64,
}

impl PsiObjective {
    pub fn new(spec: &StochasticLiquiditySpec, theta0_minus: f64) -> Self {
        PsiObjective {
            f: spec.f.clone(),
            beta: spec.beta,
            sigma_hat: spec.sigma_hat,
            y0_minus: spec.y0_minus,
            theta0_minus,
        }
    }

    fn half_var(&self) -> f64 {
        0.5 * self.sigma_hat * self.sigma_hat
    }

    /// `ψ(y) = −βy f(y) + (σ̂²/2) f′(y)`.
    pub fn psi(&self, y: f64) -> f64 {
        -self.beta * y * self.f.f(y) + self.half_var() * self.f.df(y)
    }

    /// `k(y) = (σ̂²/2) f″/f − β − βy f′/f`, so that `ψ′ = f k`.
    pub fn k(&self, y: f64) -> f64 {
        let fy = self.f.f(y);
        self.half_var() * self.f.d2f(y) / fy - self.beta - self.beta * y * self.f.df(y) / fy
    }

    pub fn dpsi(&self, y: f64) -> f64 {
        self.f.f(y) * self.k(y)
    }

    /// The unique root of `k`, where `ψ` peaks.
    pub fn ystar(&self) -> Result<f64> {
        if let ImpactFn::Exp { lambda } = self.f {
            return Ok((self.half_var() * lambda * lambda - self.beta) / (self.beta * lambda));
        }
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..200 {
            if self.k(lo) > 0.0 && self.k(hi) < 0.0 {
                return find_root(|y| self.k(y), lo, hi, 1e-14);
            }
            lo *= 2.0;
            hi *= 2.0;
        }
        Err(Error::Diagnostics("k has no sign change; is it strictly decreasing?".into()))
    }

    /// Concave hull `ψ̂(y) = ψ(y ∨ y*)`.
    pub fn psi_hat(&self, y: f64, ystar: f64) -> f64 {
        self.psi(y.max(ystar))
    }

    pub fn dpsi_hat(&self, y: f64, ystar: f64) -> f64 {
        if y <= ystar {
            0.0
        } else {
            self.dpsi(y)
        }
    }

    /// Impact level that spends the expected time `η` on reaching `Υ`.
    pub fn y_hat(&self, eta: f64, upsilon: f64) -> f64 {
        (self.y0_minus - self.theta0_minus - upsilon) / (self.beta * eta)
    }

    /// `Ψ̂(η, Υ) = η ψ̂(ŷ) − F(Υ)`, with `Ψ̂(0, Υ) = −F(Υ)`.
    pub fn big_psi_hat(&self, eta: f64, upsilon: f64, ystar: f64) -> f64 {
        let tail = -self.f.big_f(upsilon);
        if eta == 0.0 {
            tail
        } else {
            eta * self.psi_hat(self.y_hat(eta, upsilon), ystar) + tail
        }
    }

    /// `∂Ψ̂/∂Υ = −ψ̂′(ŷ)/β − f(Υ)`.
    pub fn big_psi_hat_upsilon(&self, eta: f64, upsilon: f64, ystar: f64) -> f64 {
        -self.dpsi_hat(self.y_hat(eta, upsilon), ystar) / self.beta - self.f.f(upsilon)
    }

    /// Right end `e*(η)` of the region where `ŷ > y*`.
    pub fn e_star(&self, eta: f64, ystar: f64) -> f64 {
        self.y0_minus - self.theta0_minus - self.beta * eta * ystar
    }

    /// Optimal terminal impact `ê(η)` for a given expected time `η > 0`.
    pub fn e_hat(&self, eta: f64, ystar: f64) -> Result<f64> {
        let es = self.e_star(eta, ystar);
        let foc = |u: f64| self.big_psi_hat_upsilon(eta, u, ystar);
        let mut step = 1.0;
        let mut lo = es - step;
        for _ in 0..80 {
            if foc(lo) > 0.0 {
                return find_root(foc, lo, es, 1e-14);
            }
            step *= 2.0;
            lo = es - step;
        }
        Err(Error::Diagnostics(format!("first-order condition has no root below e* = {es}")))
    }

    /// `η ↦ Ψ̂(η, ê(η))`.
    pub fn profile(&self, eta: f64, ystar: f64) -> Result<f64> {
        if eta == 0.0 {
            return Ok(-self.f.big_f(self.y0_minus - self.theta0_minus));
        }
        let e = self.e_hat(eta, ystar)?;
        Ok(self.big_psi_hat(eta, e, ystar))
    }
}

/// Optimal impact-fixing strategy and its value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ImpactFixingSolution {
    pub eta_hat: f64,
    pub upsilon_hat: f64,
    pub ytilde_hat: f64,
    pub ystar: f64,
    /// `F(Y_{0−}) + Ψ̂(η̂, Υ̂)` with `S̄_0 = 1`.
    pub expected_proceeds: f64,
    /// `|∂Ψ̂/∂Υ|` at the solution (zero when `η̂ = 0`).
    pub foc_residual: f64,
    pub params: ImpactFixingParams,
}

/// Maximizes `η ↦ Ψ̂(η, ê(η))` over `[0, η_max]`.
pub fn solve_impact_fixing(
    spec: &StochasticLiquiditySpec,
    theta0_minus: f64,
    eta_max: f64,
    eta_tol: f64,
) -> Result<ImpactFixingSolution> {
    spec.validate()?;
    if !(eta_max >= 0.0) || !eta_max.is_finite() {
        return Err(Error::InvalidParameter(format!("budget must be finite and nonnegative, got {eta_max}")));
    }
    let (lmin, lmax) = spec.lambda_bounds(10.0);
    if !(lmin > 0.0 && lmax.is_finite()) {
        return Err(Error::InvalidSpec(format!("f'/f must stay in (0, ∞), sampled range [{lmin}, {lmax}]")));
    }
    let obj = PsiObjective::new(spec, theta0_minus);
    let ystar = obj.ystar()?;
    let y0 = spec.y0_minus;
    let pack = |eta: f64, ups: f64, value: f64, resid: f64, level: f64| ImpactFixingSolution {
        eta_hat: eta,
        upsilon_hat: ups,
        ytilde_hat: level,
        ystar,
        expected_proceeds: obj.f.big_f(y0) + value,
        foc_residual: resid,
        params: ImpactFixingParams {
            level,
            terminal: ups,
            beta: spec.beta,
            sigma_hat: spec.sigma_hat,
            y0_minus: y0,
            theta0_minus,
            eta_max,
        },
    };
    let immediate = y0 - theta0_minus;
    if eta_max == 0.0 {
        return Ok(pack(0.0, immediate, obj.profile(0.0, ystar)?, 0.0, immediate));
    }

    let mut samples = Vec::with_capacity(33);
    for i in 0..=32 {
        let eta = eta_max * i as f64 / 32.0;
        samples.push(obj.profile(eta, ystar)?);
    }
    let best = (0..samples.len()).fold(0, |b, i| if samples[i] > samples[b] { i } else { b });
    let slack = |v: f64| 1e-9 * (1.0 + v.abs());
    let rising = samples[..=best].windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
    let falling = samples[best..].windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
    if !(rising && falling) {
        return Err(Error::Diagnostics(format!("profile is not unimodal on [0, {eta_max}]: {samples:?}")));
    }

    let prof = |eta: f64| obj.profile(eta, ystar).unwrap_or(f64::NEG_INFINITY);
    let (mut eta, mut value) = golden_max(prof, 0.0, eta_max, eta_tol);
    let at_max = prof(eta_max);
    if at_max >= value - 1e-12 {
        eta = eta_max;
        value = at_max;
    }
    let at_zero = samples[0];
    if at_zero > value {
        return Ok(pack(0.0, immediate, at_zero, 0.0, immediate));
    }
    let ups = obj.e_hat(eta, ystar)?;
    let resid = obj.big_psi_hat_upsilon(eta, ups, ystar).abs();
    Ok(pack(eta, ups, value, resid, obj.y_hat(eta, ups)))
}

/// Discretely monitored barrier with a continuity correction of
/// `0.5826 σ̂ √Δt` towards the start.
struct Barrier {
    level: f64,
    direction: f64,
    shift: f64,
}

impl Barrier {
    fn new(p: &ImpactFixingParams, dt: f64) -> Self {
        let direction = (p.barrier() - p.initial_position()).signum();
        Barrier { level: p.barrier(), direction, shift: 0.5826 * p.sigma_hat * dt.sqrt() }
    }

    fn reached(&self, theta: f64) -> bool {
        (self.level - theta) * self.direction <= self.shift
    }
}

/// Outcome of one simulated impact-fixing liquidation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactFixingSample {
    pub tau: f64,
    pub proceeds: f64,
    pub truncated: bool,
}

fn horizon_for(p: &ImpactFixingParams) -> Result<f64> {
    let e = expected_liquidation_time(p);
    if !e.is_finite() {
        return Err(Error::InvalidParameter("expected liquidation time is infinite".into()));
    }
    // Draws are lazy, so a generous cap only costs time on the rare slow paths.
    Ok((1000.0 * e).max(1.0))
}

/// Simulates one path of the impact-fixing strategy on steps of `dt`,
/// drawing Brownian increments lazily up to the liquidation time.
pub fn sample_impact_fixing(
    p: &ImpactFixingParams,
    f: &ImpactFn,
    dt: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ImpactFixingSample> {
    p.validate()?;
    let horizon = horizon_for(p)?;
    let psi = PsiObjective {
        f: f.clone(),
        beta: p.beta,
        sigma_hat: p.sigma_hat,
        y0_minus: p.y0_minus,
        theta0_minus: p.theta0_minus,
    };
    let start = f.big_f(p.y0_minus);
    let settle = |tau: f64, theta_left: f64, noise: f64, truncated: bool| ImpactFixingSample {
        tau,
        proceeds: start + psi.psi(p.level) * tau + noise - f.big_f(p.level - theta_left),
        truncated,
    };
    let theta0 = p.initial_position();
    let bar = Barrier::new(p, dt);
    if p.distance() == 0.0 {
        return Ok(settle(0.0, theta0, 0.0, false));
    }
    if p.sigma_hat == 0.0 {
        let tau = expected_liquidation_time(p);
        return Ok(settle(tau, p.barrier(), 0.0, false));
    }
    let (decay, c) = ou_factors(p.beta, dt);
    let drift = p.level * (1.0 - decay);
    let fy = p.sigma_hat * f.f(p.level);
    let (mut theta, mut noise, mut t) = (theta0, 0.0, 0.0);
    let steps = (horizon / dt).ceil() as usize;
    for i in 1..=steps {
        let db = dt.sqrt() * normal(rng);
        theta += drift - p.sigma_hat * c * db;
        noise += fy * db;
        t = i as f64 * dt;
        if bar.reached(theta) {
            return Ok(settle(t, theta, noise, false));
        }
    }
    Ok(settle(t, theta, noise, true))
}

/// Monte Carlo of liquidation time and proceeds; path `i` uses its own stream.
pub fn mc_impact_fixing(
    p: &ImpactFixingParams,
    f: &ImpactFn,
    dt: f64,
    paths: usize,
    seed: u64,
) -> Result<(McSummary, McSummary, usize)> {
    let mut taus = Vec::with_capacity(paths);
    let mut proceeds = Vec::with_capacity(paths);
    let mut truncated = 0;
    for i in 0..paths {
        let s = sample_impact_fixing(p, f, dt, &mut path_rng(seed, i as u64))?;
        taus.push(s.tau);
        proceeds.push(s.proceeds);
        truncated += s.truncated as usize;
    }
    Ok((McSummary::from_samples(&taus), McSummary::from_samples(&proceeds), truncated))
}

/// Builds the impact-fixing strategy on `grid` from Brownian increments `db`.
/// Returns the strategy, the realized liquidation time and a truncation flag.
pub fn build_impact_fixing_strategy(p: &ImpactFixingParams, grid: &[f64], db: &[f64]) -> Result<(Path, f64, bool)> {
    p.validate()?;
    if grid.len() != db.len() + 1 || grid.len() < 2 || grid[0] != 0.0 {
        return Err(Error::GridMismatch("grid must start at 0 and carry one increment per cell".into()));
    }
    let horizon = grid[grid.len() - 1];
    let theta0 = p.initial_position();
    let mut pts = vec![Breakpoint::new(0.0, p.theta0_minus, theta0)];
    let mut kinds = Vec::new();
    let mut theta = theta0;
    let mut tau = None;
    if p.distance() == 0.0 {
        pts[0].right = 0.0;
        tau = Some(0.0);
    }
    let dt_max = grid.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
    let bar = Barrier::new(p, dt_max);
    for k in 0..db.len() {
        let (a, b) = (grid[k], grid[k + 1]);
        kinds.push(SegmentKind::Linear);
        if tau.is_some() {
            pts.push(Breakpoint::continuous(b, 0.0));
            continue;
        }
        let (decay, c) = ou_factors(p.beta, b - a);
        theta += p.level * (1.0 - decay) - p.sigma_hat * c * db[k];
        let done = if p.sigma_hat == 0.0 { (p.level - theta) * bar.direction <= 1e-12 } else { bar.reached(theta) };
        if done {
            tau = Some(b);
            pts.push(Breakpoint::new(b, theta, 0.0));
        } else {
            pts.push(Breakpoint::continuous(b, theta));
        }
    }
    let truncated = tau.is_none();
    let path = Path::new(horizon, p.theta0_minus, pts, kinds)?;
    Ok((path, tau.unwrap_or(horizon), truncated))
}

/// Proceeds of a deterministic block schedule under stochastic liquidity,
/// sampling the impact exactly between blocks. `blocks` holds
/// `(time, position after the block)` in increasing time order.
pub fn sample_block_schedule(
    spec: &StochasticLiquiditySpec,
    theta0_minus: f64,
    blocks: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut y = spec.y0_minus;
    let mut theta = theta0_minus;
    let mut t = 0.0;
    let mut l = 0.0;
    for &(tb, pos) in blocks {
        let dt = tb - t;
        if dt > 0.0 {
            let decay = (-spec.beta * dt).exp();
            let sd = spec.sigma_hat * (-(-2.0 * spec.beta * dt).exp_m1() / (2.0 * spec.beta)).sqrt();
            y = decay * y + sd * normal(rng);
        }
        let d = pos - theta;
        l -= spec.f.big_f_diff(y, y + d);
        y += d;
        theta = pos;
        t = tb;
    }
    l
}

/// Random decreasing block schedule from `theta0` to 0 finishing by `t_end`.
pub fn random_block_schedule(theta0: f64, t_end: f64, max_blocks: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let m = rng.random_range(1..=max_blocks.max(1));
    let mut times: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * t_end).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    if rng.random::<f64>() < 0.5 {
        times[0] = 0.0;
    }
    times[m - 1] = t_end;
    let mut cuts: Vec<f64> = (0..m - 1).map(|_| rng.random::<f64>()).collect();
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.push(0.0);
    times.dedup();
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(m);
    for (i, &t) in times.iter().enumerate() {
        let pos = if i + 1 == times.len() { 0.0 } else { theta0 * cuts[i] };
        out.push((t, pos));
    }
    out
}

/// Deterministic market `S̄_t = e^{−δt}` with unit clock and transient impact.
#[derive(Clone, Debug)]
pub struct MonotoneProblem {
    pub f: ImpactFn,
    pub h: Resilience,
    pub delta: f64,
    pub horizon: f64,
    pub theta0: f64,
    pub y0_minus: f64,
}

/// Best staircase found and diagnostics of the search.
#[derive(Clone, Debug)]
pub struct MonotoneSolution {
    /// Positions held on `[kT/K, (k+1)T/K)`; the position is 0 from `T` on.
    pub values: Vec<f64>,
    pub strategy: Path,
    pub proceeds: f64,
    /// Final value reached from each start.
    pub start_values: Vec<f64>,
}

impl MonotoneProblem {
    /// Proceeds of the staircase `values` (blocks at `kT/K` and a final
    /// block to 0 at `T`).
    pub fn staircase_proceeds(&self, values: &[f64]) -> f64 {
        let k = values.len();
        let dt = self.horizon / k as f64;
        let mut y = self.y0_minus;
        let mut pos = self.theta0;
        let mut l = 0.0;
        for i in 0..=k {
            let t = if i == k { self.horizon } else { i as f64 * dt };
            if i > 0 {
                y = advance_cell(&self.h, 1.0, y, 0.0, dt);
            }
            let target = if i == k { 0.0 } else { values[i] };
            let d = target - pos;
            if d != 0.0 {
                l -= (-self.delta * t).exp() * self.f.big_f_diff(y, y + d);
                y += d;
                pos = target;
            }
        }
        l
    }

    fn path(&self, values: &[f64]) -> Result<Path> {
        let k = values.len();
        let dt = self.horizon / k as f64;
        let mut jumps: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64 * dt, v)).collect();
        jumps.push((self.horizon, 0.0));
        Path::step(self.horizon, self.theta0, &jumps)
    }
}

fn coordinate_ascent(problem: &MonotoneProblem, mut v: Vec<f64>) -> (Vec<f64>, f64) {
    let k = v.len();
    let mut best = problem.staircase_proceeds(&v);
    for _ in 0..400 {
        let before = best;
        for i in 0..k {
            let hi = if i == 0 { problem.theta0 } else { v[i - 1] };
            let lo = if i + 1 == k { 0.0 } else { v[i + 1] };
            if hi <= lo {
                continue;
            }
            let mut trial = v.clone();
            let mut eval = |x: f64| {
                trial[i] = x;
                problem.staircase_proceeds(&trial)
            };
            let (x, fx) = golden_max(&mut eval, lo, hi, 1e-10 * (1.0 + problem.theta0));
            let (fl, fh) = (eval(lo), eval(hi));
            let (x, fx) = [(x, fx), (lo, fl), (hi, fh)].into_iter().fold((v[i], best), |b, c| if c.1 > b.1 { c } else { b });
            v[i] = x;
            best = fx;
        }
        if best - before <= 1e-14 * (1.0 + best.abs()) {
            break;
        }
    }
    (v, best)
}

/// Coordinate-wise golden-section ascent over nonincreasing staircases with
/// `grid_size` levels, from eight starts plus an optional warm start.
pub fn optimize_monotone_finite_horizon(
    problem: &MonotoneProblem,
    grid_size: usize,
    warm: Option<&Path>,
    seed: u64,
) -> Result<MonotoneSolution> {
    if grid_size < 2 {
        return Err(Error::InvalidParameter("grid size must be at least 2".into()));
    }
    if !(problem.theta0 >= 0.0) || !(problem.horizon > 0.0) {
        return Err(Error::InvalidParameter("need theta0 >= 0 and a positive horizon".into()));
    }
    let k = grid_size;
    let th = problem.theta0;
    let dt = problem.horizon / k as f64;
    let mut starts: Vec<Vec<f64>> = vec![
        (0..k).map(|i| th * (1.0 - i as f64 / k as f64)).collect(),
        vec![0.0; k],
        vec![th; k],
    ];
    let mut rng = path_rng(seed, grid_size as u64);
    while starts.len() < 8 {
        let mut v: Vec<f64> = (0..k).map(|_| th * rng.random::<f64>()).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        starts.push(v);
    }
    if let Some(w) = warm {
        starts.push((0..k).map(|i| w.value_at(i as f64 * dt).clamp(0.0, th)).collect());
    }
    let mut start_values = Vec::with_capacity(starts.len());
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in starts {
        let (v, val) = coordinate_ascent(problem, s);
        start_values.push(val);
        if best.as_ref().is_none_or(|b| val > b.1) {
            best = Some((v, val));
        }
    }
    let (values, proceeds) = best.expect("at least one start");
    Ok(MonotoneSolution { strategy: problem.path(&values)?, values, proceeds, start_values })
}

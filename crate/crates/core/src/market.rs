//! Unaffected price `S̄` and its clock `⟨M⟩ = ∫α`.
//!
//! The driver is `dS̄ = S̄₋ (dM + ξ d⟨M⟩)` with a continuous part of variance
//! `σ² d⟨M⟩` and compound-Poisson jumps `ΔM > −1`. The continuous part is
//! stepped exactly in log space and the jump drift is compensated, so `S̄`
//! stays positive and is a martingale when `ξ = 0`.

use crate::{numerics, Error, Path, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

/// Deterministic function of time used for `α` and `ξ`.
#[derive(Clone, Default)]
pub enum TimeFn {
    Constant(f64),
    /// `Σ c_k t^k`.
    Polynomial(Vec<f64>),
    /// Arbitrary callable; integrals fall back to adaptive quadrature.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
    #[default]
    Zero,
}

impl fmt::Debug for TimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Constant(c) => write!(f, "Constant({c})"),
            TimeFn::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            TimeFn::Custom(_) => write!(f, "Custom(..)"),
            TimeFn::Zero => write!(f, "Zero"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TimeFnRepr {
    Constant(f64),
    Polynomial { polynomial: Vec<f64> },
    Named(String),
}

impl Serialize for TimeFn {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        match self {
            TimeFn::Constant(c) => TimeFnRepr::Constant(*c),
            TimeFn::Zero => TimeFnRepr::Constant(0.0),
            TimeFn::Polynomial(p) => TimeFnRepr::Polynomial { polynomial: p.clone() },
            TimeFn::Custom(_) => TimeFnRepr::Named("custom".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TimeFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match TimeFnRepr::deserialize(d)? {
            TimeFnRepr::Constant(c) => Ok(TimeFn::Constant(c)),
            TimeFnRepr::Polynomial { polynomial } => Ok(TimeFn::Polynomial(polynomial)),
            TimeFnRepr::Named(n) => Err(serde::de::Error::custom(format!(
                "time function '{n}' cannot be read from a config"
            ))),
        }
    }
}

impl TimeFn {
    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        TimeFn::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::Zero => 0.0,
            TimeFn::Polynomial(p) => p.iter().rev().fold(0.0, |acc, c| acc * t + c),
            TimeFn::Custom(f) => f(t),
        }
    }

    /// `∫_a^b` of the function.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => c * (b - a),
            TimeFn::Zero => 0.0,
            TimeFn::Polynomial(p) => {
                let prim = |t: f64| {
                    p.iter()
                        .enumerate()
                        .rev()
                        .fold(0.0, |acc, (k, c)| acc * t + c / (k + 1) as f64)
                        * t
                };
                prim(b) - prim(a)
            }
            TimeFn::Custom(f) => numerics::integrate(&|t| f(t), a, b, 1e-13),
        }
    }

    /// Sampled supremum of `|fn|` on `[0, horizon]`.
    pub fn sup_abs(&self, horizon: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => c.abs(),
            TimeFn::Zero => 0.0,
            _ => (0..=1000)
                .map(|k| self.eval(horizon * k as f64 / 1000.0).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            TimeFn::Zero => true,
            TimeFn::Constant(c) => *c == 0.0,
            TimeFn::Polynomial(p) => p.iter().all(|c| *c == 0.0),
            TimeFn::Custom(_) => false,
        }
    }
}

/// Law of the relative jump `ΔM` of the driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum JumpLaw {
    Fixed { size: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `ΔM = exp(N(mu, sigma²)) − 1`.
    LogNormal { mu: f64, sigma: f64 },
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        match *self {
            JumpLaw::Fixed { size } if !(size > -1.0) || !size.is_finite() => bad("fixed jump must exceed -1"),
            JumpLaw::Uniform { lo, hi } if !(lo > -1.0) || !(hi >= lo) || !hi.is_finite() => {
                bad("uniform jump law needs -1 < lo <= hi")
            }
            JumpLaw::LogNormal { sigma, mu } if !(sigma >= 0.0) || !mu.is_finite() => {
                bad("log-normal jump law needs sigma >= 0")
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Fixed { size } => size,
            JumpLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            JumpLaw::LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp() - 1.0,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Fixed { size } => size,
            JumpLaw::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            JumpLaw::LogNormal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                (mu + sigma * z).exp() - 1.0
            }
        }
    }
}

fn default_alpha() -> TimeFn {
    TimeFn::Constant(1.0)
}

fn default_s0() -> f64 {
    1.0
}

/// Parameters of the unaffected price.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DriverSpec {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub xi: TimeFn,
    #[serde(default = "default_alpha")]
    pub alpha: TimeFn,
    #[serde(default)]
    pub jump_intensity: f64,
    #[serde(default)]
    pub jump_law: Option<JumpLaw>,
    #[serde(default = "default_s0")]
    pub s0: f64,
}

impl Default for DriverSpec {
    fn default() -> Self {
        DriverSpec {
            sigma: 0.0,
            xi: TimeFn::Zero,
            alpha: default_alpha(),
            jump_intensity: 0.0,
            jump_law: None,
            s0: 1.0,
        }
    }
}

impl DriverSpec {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidSpec(format!("s0 must be positive, got {}", self.s0)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidSpec(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if !(self.jump_intensity >= 0.0) {
            return Err(Error::InvalidSpec("jump intensity must be nonnegative".into()));
        }
        if self.jump_intensity > 0.0 {
            match &self.jump_law {
                Some(law) => law.validate()?,
                None => return Err(Error::InvalidSpec("jump intensity without a jump law".into())),
            }
        }
        let a_min = (0..=200)
            .map(|k| self.alpha.eval(horizon * k as f64 / 200.0))
            .fold(f64::INFINITY, f64::min);
        if !(a_min >= 0.0) {
            return Err(Error::InvalidSpec("clock density alpha must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn has_jumps(&self) -> bool {
        self.jump_intensity > 0.0
    }

    pub fn is_deterministic(&self) -> bool {
        self.sigma == 0.0 && !self.has_jumps()
    }
}

/// One realization of the market on a grid.
///
/// Index `k` refers to grid time `grid[k]`; cell `k` is `[grid[k], grid[k+1]]`.
/// Jumps of `S̄` sit on grid points: `sbar_left[k]` is `S̄(t_k−)`.
#[derive(Clone, Debug)]
pub struct MarketScenario {
    pub grid: Vec<f64>,
    pub sbar: Vec<f64>,
    pub sbar_left: Vec<f64>,
    pub clock: Vec<f64>,
    /// Martingale increments `dM` per cell (jump at the right end included).
    pub dm: Vec<f64>,
    /// Independent auxiliary Brownian increments per cell.
    pub db: Vec<f64>,
    pub sbar_jump_times: Vec<f64>,
    /// Continuous volatility: `d⟨S̄^c⟩ = σ² S̄² d⟨M⟩`.
    pub sigma: f64,
    pub xi: TimeFn,
    pub alpha: TimeFn,
}

/// `n + 1` equidistant points on `[0, horizon]`, endpoints exact.
pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    let mut g: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
    g[n] = horizon;
    g
}

fn cells_for(horizon: f64, dt: f64) -> usize {
    ((horizon / dt) - 1e-9).ceil().max(1.0) as usize
}

/// Per-path random stream: a ChaCha generator keyed by `seed` with the path
/// index as stream number.
pub fn path_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Simulates path number 0 of the market.
pub fn simulate_market(
    spec: &DriverSpec,
    horizon: f64,
    dt: f64,
    seed: u64,
    forbidden_jump_times: &[f64],
) -> Result<MarketScenario> {
    simulate_market_path(spec, horizon, dt, seed, 0, forbidden_jump_times, &[])
}

/// Simulates one market path. `extra_times` are added to the grid (strategy
/// breakpoints, for instance); driver jumps never land within `1e-9` of a
/// forbidden time.
pub fn simulate_market_path(
    spec: &DriverSpec,
    horizon: f64,
    dt: f64,
    seed: u64,
    path_index: u64,
    forbidden_jump_times: &[f64],
    extra_times: &[f64],
) -> Result<MarketScenario> {
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("need dt > 0 and horizon > 0, got {dt}, {horizon}")));
    }
    spec.validate(horizon)?;
    let mut rng = path_rng(seed, path_index);

    // Jump times from exponential inter-arrivals, then sizes.
    let mut jumps: Vec<(f64, f64)> = Vec::new();
    if spec.has_jumps() {
        let law = spec.jump_law.as_ref().expect("validated");
        let mut t = 0.0;
        loop {
            let u: f64 = rng.random();
            t += -(1.0 - u).ln() / spec.jump_intensity;
            if t > horizon {
                break;
            }
            let mut tj = t;
            let mut guard = 0;
            while forbidden_jump_times.iter().any(|&f| (f - tj).abs() < 1e-9) || tj <= 0.0 {
                tj = horizon * rng.random::<f64>();
                guard += 1;
                if guard > 1000 {
                    return Err(Error::Diagnostics("could not place a driver jump".into()));
                }
            }
            jumps.push((tj, law.sample(&mut rng)));
        }
        jumps.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    }

    let mut grid = uniform_grid(horizon, cells_for(horizon, dt));
    grid.extend(jumps.iter().map(|j| j.0));
    grid.extend(extra_times.iter().copied().filter(|&t| (0.0..=horizon).contains(&t)));
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    grid.dedup();

    let n = grid.len();
    let mut sbar = vec![spec.s0; n];
    let mut sbar_left = vec![spec.s0; n];
    let mut clock = vec![0.0; n];
    let mut dm = vec![0.0; n - 1];
    let mut db = vec![0.0; n - 1];
    let comp = if spec.has_jumps() {
        spec.jump_intensity * spec.jump_law.as_ref().expect("validated").mean()
    } else {
        0.0
    };
    let mut next_jump = 0;
    for k in 0..n - 1 {
        let (a, b) = (grid[k], grid[k + 1]);
        let dc = spec.alpha.integral(a, b);
        clock[k + 1] = clock[k] + dc;
        let xi_mid = spec.xi.eval(0.5 * (a + b));
        let z: f64 = if spec.sigma > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
        let growth = (-0.5 * spec.sigma * spec.sigma * dc - comp * (b - a) + spec.sigma * dc.max(0.0).sqrt() * z).exp();
        let drift = (xi_mid * dc).exp();
        let before = sbar[k] * growth * drift;
        sbar_left[k + 1] = before;
        let mut after = before;
        let mut rel_jump = 0.0;
        while next_jump < jumps.len() && jumps[next_jump].0 <= b {
            if jumps[next_jump].0 == b {
                rel_jump = (1.0 + rel_jump) * (1.0 + jumps[next_jump].1) - 1.0;
                after *= 1.0 + jumps[next_jump].1;
            }
            next_jump += 1;
        }
        sbar[k + 1] = after;
        dm[k] = (growth * (1.0 + rel_jump)) - 1.0;
        let w: f64 = StandardNormal.sample(&mut rng);
        db[k] = w * (b - a).sqrt();
    }
    Ok(MarketScenario {
        grid,
        sbar,
        sbar_left,
        clock,
        dm,
        db,
        sbar_jump_times: jumps.iter().map(|j| j.0).collect(),
        sigma: spec.sigma,
        xi: spec.xi.clone(),
        alpha: spec.alpha.clone(),
    })
}

/// Market with `S̄ ≡ 1` and no noise on the given grid.
pub fn deterministic_market(alpha: TimeFn, horizon: f64, grid: &[f64]) -> Result<MarketScenario> {
    decaying_market(1.0, 0.0, alpha, horizon, grid)
}

/// Deterministic market `S̄_t = s0·e^{−δt}` (no noise).
pub fn decaying_market(s0: f64, delta: f64, alpha: TimeFn, horizon: f64, grid: &[f64]) -> Result<MarketScenario> {
    if grid.len() < 2 || grid[0] != 0.0 || grid[grid.len() - 1] != horizon {
        return Err(Error::GridMismatch("grid must run from 0 to the horizon".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::GridMismatch("grid must be strictly increasing".into()));
    }
    if !(s0 > 0.0) {
        return Err(Error::InvalidSpec("s0 must be positive".into()));
    }
    let n = grid.len();
    let mut clock = vec![0.0; n];
    for k in 0..n - 1 {
        clock[k + 1] = clock[k] + alpha.integral(grid[k], grid[k + 1]);
    }
    let sbar: Vec<f64> = grid.iter().map(|&t| s0 * (-delta * t).exp()).collect();
    let xi = if delta == 0.0 {
        TimeFn::Zero
    } else {
        let a = alpha.clone();
        TimeFn::custom(move |t| -delta / a.eval(t))
    };
    Ok(MarketScenario {
        grid: grid.to_vec(),
        sbar_left: sbar.clone(),
        sbar,
        clock,
        dm: vec![0.0; n - 1],
        db: vec![0.0; n - 1],
        sbar_jump_times: Vec::new(),
        sigma: 0.0,
        xi,
        alpha,
    })
}

impl MarketScenario {
    pub fn horizon(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn has_jumps(&self) -> bool {
        !self.sbar_jump_times.is_empty()
    }

    /// `S̄` as a piecewise-linear path with jumps at the driver jump times.
    pub fn sbar_path(&self) -> Path {
        Path::from_samples(&self.grid, &self.sbar_left, &self.sbar).expect("valid market grid")
    }

    /// `⟨M⟩` as a piecewise-linear path.
    pub fn clock_path(&self) -> Path {
        Path::from_samples(&self.grid, &self.clock, &self.clock).expect("valid market grid")
    }

    /// Largest driver jump time within `tol` of one of `times`, if any.
    pub fn common_jump(&self, times: &[f64], tol: f64) -> Option<f64> {
        self.sbar_jump_times
            .iter()
            .copied()
            .find(|&j| times.iter().any(|&t| (t - j).abs() <= tol))
    }

    /// Writes `t,sbar,clock` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "sbar", "clock"])?;
        for k in 0..self.grid.len() {
            w.write_record([self.grid[k].to_string(), self.sbar[k].to_string(), self.clock[k].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Standard normal draws used by other modules.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::McSummary;

    #[test]
    fn degenerate_market_is_deterministic() {
        let spec = DriverSpec { alpha: TimeFn::Constant(2.0), ..Default::default() };
        let m = simulate_market(&spec, 1.0, 0.01, 7, &[]).unwrap();
        assert!(m.sbar.iter().all(|&s| s == 1.0));
        for (t, c) in m.grid.iter().zip(&m.clock) {
            assert!((c - 2.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_clock_examples() {
        let g = uniform_grid(1.0, 10);
        let m = deterministic_market(TimeFn::Constant(1.0), 1.0, &g).unwrap();
        assert!((m.clock[10] - 1.0).abs() < 1e-15);
        let m = deterministic_market(TimeFn::Constant(2.0), 1.0, &g).unwrap();
        assert!((m.clock[10] - 2.0).abs() < 1e-15);
        let m = deterministic_market(TimeFn::Polynomial(vec![1.0, 1.0]), 1.0, &g).unwrap();
        assert!((m.clock[10] - 1.5).abs() < 1e-15);
        let custom = TimeFn::custom(|t| 1.0 + t);
        let m = deterministic_market(custom, 1.0, &g).unwrap();
        assert!((m.clock[10] - 1.5).abs() < 1e-13);
    }

    #[test]
    fn gbm_is_a_martingale() {
        let spec = DriverSpec { sigma: 0.2, ..Default::default() };
        let finals: Vec<f64> = (0..10_000)
            .map(|i| {
                let m = simulate_market_path(&spec, 1.0, 0.25, 11, i, &[], &[]).unwrap();
                m.sbar[m.len() - 1]
            })
            .collect();
        let s = McSummary::from_samples(&finals);
        assert!(s.within(1.0, 3.0), "{s:?}");
    }

    #[test]
    fn discounted_gbm() {
        let delta = 0.3;
        let spec = DriverSpec { sigma: 0.2, xi: TimeFn::Constant(-delta), ..Default::default() };
        let finals: Vec<f64> = (0..10_000)
            .map(|i| {
                let m = simulate_market_path(&spec, 1.0, 0.25, 2, i, &[], &[]).unwrap();
                delta.exp() * m.sbar[m.len() - 1]
            })
            .collect();
        let s = McSummary::from_samples(&finals);
        assert!(s.within(1.0, 3.0), "{s:?}");
    }

    #[test]
    fn compensated_jumps_keep_the_martingale() {
        let spec = DriverSpec {
            sigma: 0.1,
            jump_intensity: 2.0,
            jump_law: Some(JumpLaw::Uniform { lo: -0.3, hi: 0.5 }),
            ..Default::default()
        };
        let finals: Vec<f64> = (0..10_000)
            .map(|i| {
                let m = simulate_market_path(&spec, 1.0, 0.1, 3, i, &[], &[]).unwrap();
                assert!(m.sbar.iter().all(|&s| s > 0.0));
                m.sbar[m.len() - 1]
            })
            .collect();
        assert!(McSummary::from_samples(&finals).within(1.0, 3.0));
    }

    #[test]
    fn one_step_mean_is_exact() {
        // E[growth · (1 + ΔM)] over one cell equals 1 for the scheme's factors.
        let (sigma, lam, mean_jump, dt) = (0.3_f64, 1.5_f64, 0.2_f64, 0.1_f64);
        let cont = (-0.5 * sigma * sigma * dt - lam * mean_jump * dt + 0.5 * sigma * sigma * dt).exp();
        let jumps = (lam * dt * mean_jump).exp();
        assert!((cont * jumps - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forbidden_times_are_avoided() {
        let spec = DriverSpec {
            jump_intensity: 50.0,
            jump_law: Some(JumpLaw::Fixed { size: 0.1 }),
            ..Default::default()
        };
        let forbidden: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
        for i in 0..20 {
            let m = simulate_market_path(&spec, 1.0, 0.01, 1, i, &forbidden, &forbidden).unwrap();
            assert!(m.common_jump(&forbidden, 1e-12).is_none());
            assert!(!m.sbar_jump_times.is_empty());
        }
    }

    #[test]
    fn invalid_jump_law_is_rejected() {
        let spec = DriverSpec {
            jump_intensity: 1.0,
            jump_law: Some(JumpLaw::Uniform { lo: -1.0, hi: 0.0 }),
            ..Default::default()
        };
        assert!(matches!(simulate_market(&spec, 1.0, 0.1, 0, &[]), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn spec_reads_from_toml() {
        let spec: DriverSpec = toml::from_str(
            "sigma = 0.2\nalpha = { polynomial = [1.0, 1.0] }\njump_intensity = 1.0\njump_law = { kind = \"uniform\", params = { lo = -0.2, hi = 0.2 } }\n",
        )
        .unwrap();
        assert_eq!(spec.sigma, 0.2);
        assert_eq!(spec.alpha.eval(1.0), 2.0);
        assert_eq!(spec.jump_law, Some(JumpLaw::Uniform { lo: -0.2, hi: 0.2 }));
    }
}

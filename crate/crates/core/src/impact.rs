//! Market impact `Y`: resilience `h`, price impact `g`, and the pathwise
//! solvers for `dY = −h(Y) d⟨M⟩ + η dΘ` and for the stochastic-liquidity
//! variant `dY = −βY dt + σ̂ dB + dΘ`.

use crate::cadlag::{Breakpoint, SegmentKind};
use crate::{numerics, Error, Path, Result};
use std::fmt;
use std::sync::Arc;

/// Resilience function `h` with `h(0) = 0` and `h(y)·y ≥ 0`.
#[derive(Clone, Default)]
pub enum Resilience {
    /// Permanent impact.
    #[default]
    Zero,
    /// `h(y) = βy`.
    Linear { beta: f64 },
    /// `h(y) = Σ c_k y^k`, `c_0` must vanish.
    Polynomial { coeffs: Vec<f64> },
    /// Arbitrary Lipschitz function with a declared constant.
    Custom { h: Arc<dyn Fn(f64) -> f64 + Send + Sync>, lipschitz: f64 },
}

impl fmt::Debug for Resilience {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resilience::Zero => write!(f, "Zero"),
            Resilience::Linear { beta } => write!(f, "Linear {{ beta: {beta} }}"),
            Resilience::Polynomial { coeffs } => write!(f, "Polynomial({coeffs:?})"),
            Resilience::Custom { lipschitz, .. } => write!(f, "Custom {{ lipschitz: {lipschitz} }}"),
        }
    }
}

impl Resilience {
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            Resilience::Zero => 0.0,
            Resilience::Linear { beta } => beta * y,
            Resilience::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * y + c),
            Resilience::Custom { h, .. } => h(y),
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Resilience::Zero => 0.0,
            Resilience::Linear { beta } => *beta,
            Resilience::Polynomial { coeffs } => coeffs
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * y + k as f64 * c),
            Resilience::Custom { h, .. } => {
                let e = 1e-6 * (1.0 + y.abs());
                (h(y + e) - h(y - e)) / (2.0 * e)
            }
        }
    }

    /// Lipschitz constant on `[-radius, radius]` (exact for zero/linear,
    /// sampled otherwise).
    pub fn lipschitz(&self, radius: f64) -> f64 {
        match self {
            Resilience::Zero => 0.0,
            Resilience::Linear { beta } => beta.abs(),
            Resilience::Custom { lipschitz, .. } => *lipschitz,
            Resilience::Polynomial { .. } => (0..=400)
                .map(|k| self.derivative(-radius + 2.0 * radius * k as f64 / 400.0).abs())
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.eval(0.0).abs() > 1e-14 {
            return Err(Error::InvalidSpec("resilience must vanish at 0".into()));
        }
        for k in -50..=50 {
            let y = k as f64 / 10.0;
            if self.eval(y) * y < -1e-12 {
                return Err(Error::InvalidSpec(format!("resilience pushes away from 0 at y = {y}")));
            }
        }
        Ok(())
    }
}

/// Positive nondecreasing impact function `f` with `F(y) = ∫_0^y f`.
#[derive(Clone)]
pub enum ImpactFn {
    /// `f(y) = e^{λy}`.
    Exp { lambda: f64 },
    /// `f(y) = Σ c_k y^k`.
    Polynomial { coeffs: Vec<f64> },
    /// `f` with its first two derivatives; `F` by quadrature.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        d2f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for ImpactFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImpactFn::Exp { lambda } => write!(f, "Exp {{ lambda: {lambda} }}"),
            ImpactFn::Polynomial { coeffs } => write!(f, "Polynomial({coeffs:?})"),
            ImpactFn::Custom { .. } => write!(f, "Custom(..)"),
        }
    }
}

fn poly(c: &[f64], y: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * y + a)
}

impl ImpactFn {
    pub fn exp(lambda: f64) -> Self {
        ImpactFn::Exp { lambda }
    }

    pub fn f(&self, y: f64) -> f64 {
        match self {
            ImpactFn::Exp { lambda } => (lambda * y).exp(),
            ImpactFn::Polynomial { coeffs } => poly(coeffs, y),
            ImpactFn::Custom { f, .. } => f(y),
        }
    }

    pub fn df(&self, y: f64) -> f64 {
        match self {
            ImpactFn::Exp { lambda } => lambda * (lambda * y).exp(),
            ImpactFn::Polynomial { coeffs } => {
                let d: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
                poly(&d, y)
            }
            ImpactFn::Custom { df, .. } => df(y),
        }
    }

    pub fn d2f(&self, y: f64) -> f64 {
        match self {
            ImpactFn::Exp { lambda } => lambda * lambda * (lambda * y).exp(),
            ImpactFn::Polynomial { coeffs } => {
                let d: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .skip(2)
                    .map(|(k, c)| (k * (k - 1)) as f64 * c)
                    .collect();
                poly(&d, y)
            }
            ImpactFn::Custom { d2f, .. } => d2f(y),
        }
    }

    /// Antiderivative with `F(0) = 0`.
    pub fn big_f(&self, y: f64) -> f64 {
        match self {
            ImpactFn::Exp { lambda } => {
                if *lambda == 0.0 {
                    y
                } else {
                    (lambda * y).exp_m1() / lambda
                }
            }
            ImpactFn::Polynomial { coeffs } => {
                y * coeffs
                    .iter()
                    .enumerate()
                    .rev()
                    .fold(0.0, |acc, (k, c)| acc * y + c / (k + 1) as f64)
            }
            ImpactFn::Custom { f, .. } => numerics::integrate(&|x| f(x), 0.0, y, 1e-13),
        }
    }

    /// `F(b) − F(a)`, computed without cancellation for the exponential.
    pub fn big_f_diff(&self, a: f64, b: f64) -> f64 {
        match self {
            ImpactFn::Exp { lambda } if *lambda != 0.0 => (lambda * a).exp() * (lambda * (b - a)).exp_m1() / lambda,
            ImpactFn::Custom { f, .. } => numerics::integrate(&|x| f(x), a, b, 1e-13),
            _ => self.big_f(b) - self.big_f(a),
        }
    }

    /// Checks positivity and monotonicity on a sample grid of `[-r, r]`.
    pub fn validate(&self, r: f64) -> Result<()> {
        for k in 0..=200 {
            let y = -r + 2.0 * r * k as f64 / 200.0;
            if !(self.f(y) > 0.0) || self.df(y) < -1e-12 {
                return Err(Error::InvalidSpec(format!(
                    "impact function must be positive and nondecreasing (fails at y = {y})"
                )));
            }
        }
        Ok(())
    }
}

/// A general price-impact function `g(x, y)` with the partial derivatives
/// the proceeds formulas need.
pub trait GeneralImpact: Send + Sync {
    fn g(&self, x: f64, y: f64) -> f64;
    fn g_x(&self, x: f64, y: f64) -> f64;
    fn g_xx(&self, x: f64, y: f64) -> f64;
    fn g_y(&self, x: f64, y: f64) -> f64;
}

/// Price impact `g(S̄, Y)`.
#[derive(Clone)]
pub enum PriceImpact {
    /// `g(x, y) = x·f(y)`.
    Multiplicative(ImpactFn),
    /// `g(x, y) = x + f(y)`; stability in M1 is not guaranteed.
    Additive(ImpactFn),
    General(Arc<dyn GeneralImpact>),
}

impl fmt::Debug for PriceImpact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriceImpact::Multiplicative(i) => write!(f, "Multiplicative({i:?})"),
            PriceImpact::Additive(i) => write!(f, "Additive({i:?})"),
            PriceImpact::General(_) => write!(f, "General(..)"),
        }
    }
}

const QUAD_TOL: f64 = 1e-10;

impl PriceImpact {
    pub fn g(&self, x: f64, y: f64) -> f64 {
        match self {
            PriceImpact::Multiplicative(f) => x * f.f(y),
            PriceImpact::Additive(f) => x + f.f(y),
            PriceImpact::General(g) => g.g(x, y),
        }
    }

    pub fn g_x(&self, x: f64, y: f64) -> f64 {
        match self {
            PriceImpact::Multiplicative(f) => f.f(y),
            PriceImpact::Additive(_) => 1.0,
            PriceImpact::General(g) => g.g_x(x, y),
        }
    }

    pub fn g_y(&self, x: f64, y: f64) -> f64 {
        match self {
            PriceImpact::Multiplicative(f) => x * f.df(y),
            PriceImpact::Additive(f) => f.df(y),
            PriceImpact::General(g) => g.g_y(x, y),
        }
    }

    /// `G(x, y) = ∫_0^y g(x, z) dz`.
    pub fn big_g(&self, x: f64, y: f64) -> f64 {
        match self {
            PriceImpact::Multiplicative(f) => x * f.big_f(y),
            PriceImpact::Additive(f) => x * y + f.big_f(y),
            PriceImpact::General(g) => numerics::integrate(&|z| g.g(x, z), 0.0, y, QUAD_TOL),
        }
    }

    pub fn big_g_x(&self, x: f64, y: f64) -> f64 {
        match self {
            PriceImpact::Multiplicative(f) => f.big_f(y),
            PriceImpact::Additive(_) => y,
            PriceImpact::General(g) => numerics::integrate(&|z| g.g_x(x, z), 0.0, y, QUAD_TOL),
        }
    }

    pub fn big_g_xx(&self, x: f64, y: f64) -> f64 {
        match self {
            PriceImpact::Multiplicative(_) | PriceImpact::Additive(_) => 0.0,
            PriceImpact::General(g) => numerics::integrate(&|z| g.g_xx(x, z), 0.0, y, QUAD_TOL),
        }
    }

    /// `∫_0^Δ g(x, y + η·u) du`, the cost of a block of size `Δ` at impact
    /// `y` when only `η` of the order moves the impact.
    pub fn block_integral(&self, x: f64, y: f64, delta: f64, eta: f64) -> f64 {
        match self {
            PriceImpact::Multiplicative(f) => x * f.big_f_diff(y, y + eta * delta) / eta,
            PriceImpact::Additive(f) => x * delta + f.big_f_diff(y, y + eta * delta) / eta,
            PriceImpact::General(g) => numerics::gauss_legendre16(|u| g.g(x, y + eta * u), 0.0, delta),
        }
    }

    pub fn multiplicative(&self) -> Option<&ImpactFn> {
        match self {
            PriceImpact::Multiplicative(f) => Some(f),
            _ => None,
        }
    }
}

/// Resilience, price impact, recovery fraction and initial impact.
#[derive(Clone, Debug)]
pub struct ImpactModel {
    pub h: Resilience,
    pub g: PriceImpact,
    pub eta: f64,
    pub y0_minus: f64,
    /// Must be set to use additive impact.
    pub allow_no_m1_guarantee: bool,
}

impl ImpactModel {
    /// Multiplicative model with `h(y) = βy` (`β = 0` gives permanent impact)
    /// and `f(y) = e^{λy}`.
    pub fn exponential(beta: f64, lambda: f64) -> Self {
        ImpactModel {
            h: if beta == 0.0 { Resilience::Zero } else { Resilience::Linear { beta } },
            g: PriceImpact::Multiplicative(ImpactFn::exp(lambda)),
            eta: 1.0,
            y0_minus: 0.0,
            allow_no_m1_guarantee: false,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0_minus = y0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidParameter(format!("recovery fraction must lie in (0, 1], got {}", self.eta)));
        }
        if matches!(self.g, PriceImpact::Additive(_)) && !self.allow_no_m1_guarantee {
            return Err(Error::Unsupported("additive impact needs the no-M1-guarantee flag".into()));
        }
        self.h.validate()?;
        if let PriceImpact::Multiplicative(f) | PriceImpact::Additive(f) = &self.g {
            f.validate(5.0)?;
        }
        Ok(())
    }

    /// Observed price `S = g(S̄, Y)`.
    pub fn observed_price(&self, sbar: f64, y: f64) -> f64 {
        self.g.g(sbar, y)
    }
}

/// Advances `Y` over one cell on which `Θ` and the clock move linearly by
/// `dtheta` and `dclock`: solves `y' = η·dtheta − h(y)·dclock` on `[0, 1]`.
pub fn advance_cell(h: &Resilience, eta: f64, y: f64, dtheta: f64, dclock: f64) -> f64 {
    let push = eta * dtheta;
    match h {
        Resilience::Zero => y + push,
        Resilience::Linear { beta } => {
            let k = beta * dclock;
            if k.abs() < 1e-12 {
                // second-order expansion of the exact step
                y + push - k * (y + 0.5 * push)
            } else {
                let decay = (-k).exp();
                y * decay - push * (-k).exp_m1() / k
            }
        }
        _ => {
            let rhs = |v: f64| push - h.eval(v) * dclock;
            let stiff = (h.derivative(y).abs() * dclock.abs()).max(h.derivative(y + push).abs() * dclock.abs());
            let m = ((stiff / 0.02).ceil() as usize).clamp(1, 100_000);
            let ds = 1.0 / m as f64;
            let mut v = y;
            for _ in 0..m {
                let k1 = rhs(v);
                let k2 = rhs(v + 0.5 * ds * k1);
                let k3 = rhs(v + 0.5 * ds * k2);
                let k4 = rhs(v + ds * k3);
                v += ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            }
            v
        }
    }
}

/// Solves `dY = −h(Y) d⟨M⟩ + η dΘ` pathwise. The result lives on the union of
/// the breakpoints of `strategy` and `clock`, with `ΔY = η ΔΘ` at every jump.
pub fn solve_impact(strategy: &Path, model: &ImpactModel, clock: &Path) -> Result<Path> {
    let horizon = strategy.horizon();
    if horizon != clock.horizon() {
        return Err(Error::HorizonMismatch(horizon, clock.horizon()));
    }
    let times = strategy.merged_times(clock);
    let mut pts = Vec::with_capacity(times.len());
    let eta = model.eta;
    let y0 = model.y0_minus;
    let mut y = y0 + eta * (strategy.value_at(0.0) - strategy.initial_left());
    pts.push(Breakpoint::new(0.0, y0, y));
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dtheta = strategy.left_at(b) - strategy.value_at(a);
        let dclock = clock.left_at(b) - clock.value_at(a);
        let left = advance_cell(&model.h, eta, y, dtheta, dclock);
        y = left + eta * (strategy.value_at(b) - strategy.left_at(b));
        pts.push(Breakpoint::new(b, left, y));
    }
    let kinds = vec![SegmentKind::Linear; pts.len() - 1];
    Path::new(horizon, y0, pts, kinds)
}

/// Parameters of the stochastic-liquidity impact `dY = −βY dt + σ̂ dB + dΘ`.
#[derive(Clone, Debug)]
pub struct StochasticLiquiditySpec {
    pub beta: f64,
    pub sigma_hat: f64,
    pub f: ImpactFn,
    pub y0_minus: f64,
}

impl StochasticLiquiditySpec {
    pub fn exponential(beta: f64, sigma_hat: f64, lambda: f64) -> Self {
        StochasticLiquiditySpec { beta, sigma_hat, f: ImpactFn::exp(lambda), y0_minus: 0.0 }
    }

    /// Allows `σ̂ = 0` for degenerate checks; `β` must be positive.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.sigma_hat >= 0.0) {
            return Err(Error::InvalidSpec("need beta > 0 and sigma_hat >= 0".into()));
        }
        Ok(())
    }

    /// Bounds of `f'/f` on a sample grid of `[-r, r]`.
    pub fn lambda_bounds(&self, r: f64) -> (f64, f64) {
        (0..=400).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            let y = -r + 2.0 * r * k as f64 / 400.0;
            let l = self.f.df(y) / self.f.f(y);
            (lo.min(l), hi.max(l))
        })
    }
}

/// One exact OU cell: decay factor and the multiplier of a Brownian increment
/// `dB ~ N(0, Δ)` that reproduces the exact transition variance.
pub fn ou_factors(beta: f64, dt: f64) -> (f64, f64) {
    let k = beta * dt;
    let decay = (-k).exp();
    let c = if k < 1e-10 { 1.0 - 0.5 * k } else { (-(-2.0 * k).exp_m1() / (2.0 * k)).sqrt() };
    (decay, c)
}

/// Solves `dY = −βY dt + σ̂ dB + dΘ` on `grid` with one Brownian increment
/// per cell. Strategy increments are added at the end of each cell, jumps
/// atomically.
pub fn solve_stochastic_impact(
    strategy: &Path,
    spec: &StochasticLiquiditySpec,
    grid: &[f64],
    db: &[f64],
) -> Result<Path> {
    spec.validate()?;
    if grid.len() != db.len() + 1 || grid.len() < 2 {
        return Err(Error::GridMismatch(format!("{} grid points but {} increments", grid.len(), db.len())));
    }
    if (grid[grid.len() - 1] - strategy.horizon()).abs() > 1e-12 || grid[0] != 0.0 {
        return Err(Error::GridMismatch("grid must span the strategy horizon".into()));
    }
    for p in strategy.jumps() {
        if grid.binary_search_by(|t| t.partial_cmp(&p.t).expect("finite")).is_err() {
            return Err(Error::GridMismatch(format!("strategy jump at {} is off the grid", p.t)));
        }
    }
    let y0 = spec.y0_minus;
    let mut y = y0 + strategy.value_at(0.0) - strategy.initial_left();
    let mut pts = vec![Breakpoint::new(0.0, y0, y)];
    for k in 0..db.len() {
        let (a, b) = (grid[k], grid[k + 1]);
        let (decay, c) = ou_factors(spec.beta, b - a);
        let left = decay * y + spec.sigma_hat * c * db[k] + (strategy.left_at(b) - strategy.value_at(a));
        y = left + strategy.value_at(b) - strategy.left_at(b);
        pts.push(Breakpoint::new(b, left, y));
    }
    let kinds = vec![SegmentKind::Linear; pts.len() - 1];
    Path::new(grid[grid.len() - 1], y0, pts, kinds)
}

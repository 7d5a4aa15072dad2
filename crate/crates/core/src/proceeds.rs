//! The proceeds functional `L(Θ)` in its equivalent forms, the Marcus
//! oracle, and the liquidation value `V`.
//!
//! All forms run on the union of the strategy breakpoints and the market grid.
//! Stochastic integrals are left-point Itô sums. In the integration-by-parts
//! form the drift integral holds `S̄` at its value at the right end of each
//! cell, which makes the discrete product rule `Δ(S̄F) = F ΔS̄ + S̄₊ ΔF` exact;
//! as a consequence constant strategies give zero proceeds up to quadrature
//! error on every market path.

use crate::cadlag::{Breakpoint, SegmentKind};
use crate::impact::{advance_cell, solve_impact, ImpactModel, PriceImpact, Resilience};
use crate::market::MarketScenario;
use crate::{Error, Path, Result};
use serde::{Deserialize, Serialize};

/// The four additive terms of the integration-by-parts representation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProceedsBreakdown {
    pub stoch_integral: f64,
    pub drift_term: f64,
    pub delta_g: f64,
    pub jump_sum: f64,
    pub total: f64,
}

/// Which representation to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Fv,
    General,
    Semimartingale,
    Marcus,
    Eta,
}

/// Strategy, market and impact sampled on the merged grid.
struct Frame {
    t: Vec<f64>,
    theta_l: Vec<f64>,
    theta_r: Vec<f64>,
    s_l: Vec<f64>,
    s_r: Vec<f64>,
    clock: Vec<f64>,
    y_l: Vec<f64>,
    y_r: Vec<f64>,
}

impl Frame {
    fn new(strategy: &Path, market: &MarketScenario, model: &ImpactModel) -> Result<Frame> {
        model.validate()?;
        if strategy.horizon() != market.horizon() {
            return Err(Error::HorizonMismatch(strategy.horizon(), market.horizon()));
        }
        let jt: Vec<f64> = strategy.jumps().iter().map(|p| p.t).collect();
        if let Some(t) = market.common_jump(&jt, 0.0) {
            return Err(Error::CommonJump(t));
        }
        let clock = market.clock_path();
        let sbar = market.sbar_path();
        let y = solve_impact(strategy, model, &clock)?;
        let t = y.breakpoint_times();
        let pts = y.breakpoints();
        Ok(Frame {
            theta_l: t.iter().map(|&s| strategy.left_at(s)).collect(),
            theta_r: t.iter().map(|&s| strategy.value_at(s)).collect(),
            s_l: t.iter().map(|&s| sbar.left_at(s)).collect(),
            s_r: t.iter().map(|&s| sbar.value_at(s)).collect(),
            clock: t.iter().map(|&s| clock.value_at(s)).collect(),
            y_l: pts.iter().map(|p| p.left).collect(),
            y_r: pts.iter().map(|p| p.right).collect(),
            t,
        })
    }

    fn len(&self) -> usize {
        self.t.len()
    }

    fn path(&self, left: Vec<f64>, right: Vec<f64>) -> Result<Path> {
        let pts: Vec<_> = (0..self.len()).map(|i| Breakpoint::new(self.t[i], left[i], right[i])).collect();
        let kinds = vec![SegmentKind::Linear; pts.len() - 1];
        Path::new(self.t[self.len() - 1], 0.0, pts, kinds)
    }
}

/// Largest position change per Simpson panel in the finite-variation form.
const FV_STEP: f64 = 2e-3;

fn simpson(a: f64, m: f64, b: f64) -> f64 {
    (a + 4.0 * m + b) / 6.0
}

/// Proceeds `−∫ g dΘ` of a continuous finite-variation strategy.
pub fn proceeds_continuous_fv(strategy: &Path, market: &MarketScenario, model: &ImpactModel) -> Result<Path> {
    if strategy.has_jumps() {
        return Err(Error::WrongForm("strategy has jumps; use the finite-variation form".into()));
    }
    proceeds_fv(strategy, market, model)
}

/// Proceeds of a finite-variation strategy: Simpson Riemann–Stieltjes sum
/// for the continuous part plus the block integral at each jump.
pub fn proceeds_fv(strategy: &Path, market: &MarketScenario, model: &ImpactModel) -> Result<Path> {
    let fr = Frame::new(strategy, market, model)?;
    let eta = model.eta;
    let n = fr.len();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    let block = |i: usize| {
        let d = fr.theta_r[i] - fr.theta_l[i];
        if d == 0.0 {
            0.0
        } else {
            model.g.block_integral(fr.s_l[i], fr.y_l[i], d, eta)
        }
    };
    right[0] = -block(0);
    for i in 0..n - 1 {
        let dth = fr.theta_l[i + 1] - fr.theta_r[i];
        let mut l = right[i];
        if dth != 0.0 {
            // Composite Simpson with position steps of at most FV_STEP.
            let m = ((dth.abs() / FV_STEP).ceil() as usize).clamp(1, 1024);
            let (dth_k, dc_k) = (dth / m as f64, (fr.clock[i + 1] - fr.clock[i]) / m as f64);
            let s_at = |u: f64| fr.s_r[i] + (fr.s_l[i + 1] - fr.s_r[i]) * u;
            let g = &model.g;
            let mut y = fr.y_r[i];
            for k in 0..m {
                let u = k as f64 / m as f64;
                let y_mid = advance_cell(&model.h, eta, y, 0.5 * dth_k, 0.5 * dc_k);
                let y_end = if k + 1 == m { fr.y_l[i + 1] } else { advance_cell(&model.h, eta, y, dth_k, dc_k) };
                let du = 1.0 / m as f64;
                l -= simpson(g.g(s_at(u), y), g.g(s_at(u + 0.5 * du), y_mid), g.g(s_at(u + du), y_end)) * dth_k;
                y = y_end;
            }
        }
        left[i + 1] = l;
        right[i + 1] = l - block(i + 1);
    }
    fr.path(left, right)
}

/// Integration-by-parts representation with its breakdown and running path.
pub fn proceeds_general(
    strategy: &Path,
    market: &MarketScenario,
    model: &ImpactModel,
) -> Result<(ProceedsBreakdown, Path)> {
    proceeds_general_anchored(strategy, market, model, 0.0)
}

/// [`proceeds_general`] with `G(x, y) = ∫_c^y g(x, z) dz` anchored at `c`.
/// The total does not depend on `c`; the individual terms do.
pub fn proceeds_general_anchored(
    strategy: &Path,
    market: &MarketScenario,
    model: &ImpactModel,
    c: f64,
) -> Result<(ProceedsBreakdown, Path)> {
    let fr = Frame::new(strategy, market, model)?;
    let g = &Anchored { g: &model.g, c };
    let eta = model.eta;
    let var = market.sigma * market.sigma;
    let n = fr.len();
    let g0 = g.big_g(fr.s_l[0], model.y0_minus);
    let (mut stoch, mut drift, mut jumps) = (0.0, 0.0, 0.0);
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    let total = |stoch: f64, drift: f64, jumps: f64, s: f64, y: f64| (stoch + drift + jumps - (g.big_g(s, y) - g0)) / eta;
    right[0] = total(0.0, 0.0, 0.0, fr.s_r[0], fr.y_r[0]);
    for i in 0..n - 1 {
        let (s, y) = (fr.s_r[i], fr.y_r[i]);
        let (s1, y1) = (fr.s_l[i + 1], fr.y_l[i + 1]);
        let dc = fr.clock[i + 1] - fr.clock[i];
        stoch += g.big_g_x(s, y) * (s1 - s);
        if var > 0.0 {
            drift += 0.5 * g.big_g_xx(s, y) * s * s * var * dc;
        }
        if dc != 0.0 && !matches!(model.h, Resilience::Zero) {
            let dth = fr.theta_l[i + 1] - fr.theta_r[i];
            let ym = advance_cell(&model.h, eta, y, 0.5 * dth, 0.5 * dc);
            let gh = |v: f64| g.g(s1, v) * model.h.eval(v);
            drift -= simpson(gh(y), gh(ym), gh(y1)) * dc;
        }
        left[i + 1] = total(stoch, drift, jumps, s1, y1);
        let s2 = fr.s_r[i + 1];
        if s2 != s1 {
            let yj = fr.y_l[i + 1];
            stoch += g.big_g_x(s1, yj) * (s2 - s1);
            jumps += g.big_g(s2, yj) - g.big_g(s1, yj) - g.big_g_x(s1, yj) * (s2 - s1);
        }
        right[i + 1] = total(stoch, drift, jumps, s2, fr.y_r[i + 1]);
    }
    let delta_g = -(g.big_g(fr.s_r[n - 1], fr.y_r[n - 1]) - g0);
    let mut b = ProceedsBreakdown {
        stoch_integral: stoch / eta,
        drift_term: drift / eta,
        delta_g: delta_g / eta,
        jump_sum: jumps / eta,
        total: 0.0,
    };
    b.total = b.stoch_integral + b.drift_term + b.delta_g + b.jump_sum;
    Ok((b, fr.path(left, right)?))
}

/// Antiderivatives of `g` shifted to vanish at `y = c`; `g` itself passes through.
struct Anchored<'a> {
    g: &'a PriceImpact,
    c: f64,
}

impl Anchored<'_> {
    fn g(&self, x: f64, y: f64) -> f64 {
        self.g.g(x, y)
    }
    fn big_g(&self, x: f64, y: f64) -> f64 {
        self.g.big_g(x, y) - self.g.big_g(x, self.c)
    }
    fn big_g_x(&self, x: f64, y: f64) -> f64 {
        self.g.big_g_x(x, y) - self.g.big_g_x(x, self.c)
    }
    fn big_g_xx(&self, x: f64, y: f64) -> f64 {
        self.g.big_g_xx(x, y) - self.g.big_g_xx(x, self.c)
    }
}

/// Itô form for semimartingale strategies, with realized squared increments
/// standing in for `[Θ]^c` and realized cross increments for `[S̄, Θ]`.
pub fn proceeds_semimartingale(strategy: &Path, market: &MarketScenario, model: &ImpactModel) -> Result<f64> {
    let fr = Frame::new(strategy, market, model)?;
    let g = &model.g;
    let eta = model.eta;
    let mut l = 0.0;
    let jump = |i: usize, l: &mut f64| {
        let d = fr.theta_r[i] - fr.theta_l[i];
        if d != 0.0 {
            let (s, y) = (fr.s_l[i], fr.y_l[i]);
            let ito = -g.g(s, y) * d;
            let correction = -(g.block_integral(s, y, d, eta) - g.g(s, y) * d);
            *l += ito + correction;
        }
    };
    jump(0, &mut l);
    for i in 0..fr.len() - 1 {
        let (s, y) = (fr.s_r[i], fr.y_r[i]);
        let dth = fr.theta_l[i + 1] - fr.theta_r[i];
        let ds = fr.s_l[i + 1] - s;
        l -= g.g(s, y) * dth + 0.5 * eta * g.g_y(s, y) * dth * dth + g.g_x(fr.s_l[i + 1], y) * ds * dth;
        jump(i + 1, &mut l);
    }
    Ok(l)
}

/// Terminal state of the Marcus system for `(L, Y, S̄)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarcusState {
    pub l: f64,
    pub y: f64,
    pub sbar: f64,
}

/// Integrates `dX = Φ(X) ∘ dZ` with `X = (L, Y, S̄)`, `Z = (Θ, S̄, ⟨M⟩)`:
/// RK4 across each cell and the closed-form flow across each strategy jump.
pub fn marcus_oracle(strategy: &Path, market: &MarketScenario, model: &ImpactModel) -> Result<MarcusState> {
    if model.eta != 1.0 {
        return Err(Error::Unsupported("the Marcus system is stated for full impact (eta = 1)".into()));
    }
    let fr = Frame::new(strategy, market, model)?;
    let g = &model.g;
    let h = &model.h;
    let flow = |x: &mut MarcusState, d: f64| {
        if d != 0.0 {
            x.l -= g.block_integral(x.sbar, x.y, d, 1.0);
            x.y += d;
        }
    };
    let mut x = MarcusState { l: 0.0, y: model.y0_minus, sbar: fr.s_l[0] };
    flow(&mut x, fr.theta_r[0] - fr.theta_l[0]);
    x.sbar = fr.s_r[0];
    for i in 0..fr.len() - 1 {
        let dth = fr.theta_l[i + 1] - fr.theta_r[i];
        let dc = fr.clock[i + 1] - fr.clock[i];
        let ds = fr.s_l[i + 1] - fr.s_r[i];
        let rhs = |st: (f64, f64, f64)| (-g.g(st.2, st.1) * dth, dth - h.eval(st.1) * dc, ds);
        let stiff = h.derivative(x.y).abs() * dc.abs() + dth.abs() + ds.abs() / x.sbar.abs().max(1e-300);
        let m = ((stiff / 0.01).ceil() as usize).clamp(1, 100_000);
        let hs = 1.0 / m as f64;
        let mut st = (x.l, x.y, x.sbar);
        for _ in 0..m {
            let add = |a: (f64, f64, f64), k: (f64, f64, f64), w: f64| (a.0 + w * k.0, a.1 + w * k.1, a.2 + w * k.2);
            let k1 = rhs(st);
            let k2 = rhs(add(st, k1, 0.5 * hs));
            let k3 = rhs(add(st, k2, 0.5 * hs));
            let k4 = rhs(add(st, k3, hs));
            st = (
                st.0 + hs / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                st.1 + hs / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
                st.2 + hs / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
            );
        }
        x = MarcusState { l: st.0, y: st.1, sbar: fr.s_l[i + 1] };
        flow(&mut x, fr.theta_r[i + 1] - fr.theta_l[i + 1]);
        x.sbar = fr.s_r[i + 1];
    }
    Ok(x)
}

/// Proceeds when only a fraction `η` of each trade moves the impact.
pub fn proceeds_partial_recovery(strategy: &Path, market: &MarketScenario, model: &ImpactModel) -> Result<Path> {
    if !(model.eta > 0.0 && model.eta <= 1.0) {
        return Err(Error::InvalidParameter(format!("recovery fraction must lie in (0, 1], got {}", model.eta)));
    }
    if model.g.multiplicative().is_none() {
        return Err(Error::Unsupported("partial recovery proceeds need multiplicative impact".into()));
    }
    Ok(proceeds_general(strategy, market, model)?.1)
}

/// Bank account, position and liquidation value along the merged grid.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LiquidationPath {
    pub t: Vec<f64>,
    pub bank: Vec<f64>,
    pub position: Vec<f64>,
    /// `β + S̄ (F(Y) − F(Y − ηΘ)) / η`.
    pub value_direct: Vec<f64>,
    /// Left-point recursion of the value dynamics.
    pub value_sde: Vec<f64>,
    /// Drift `μ` of the value dynamics (right values).
    pub mu: Vec<f64>,
}

impl LiquidationPath {
    /// Largest gap between the two value computations.
    pub fn max_gap(&self) -> f64 {
        self.value_direct
            .iter()
            .zip(&self.value_sde)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Drift rate that turns the value process into a local martingale:
/// `h(Y)(f(Y) − f(Y − ηΘ)) / (F(Y) − F(Y − ηΘ))`, zero without a position.
pub fn value_drift_correction(model: &ImpactModel, y: f64, theta: f64) -> Result<f64> {
    let f = model
        .g
        .multiplicative()
        .ok_or_else(|| Error::Unsupported("liquidation value needs multiplicative impact".into()))?;
    if theta == 0.0 {
        return Ok(0.0);
    }
    let z = y - model.eta * theta;
    Ok(model.h.eval(y) * (f.f(y) - f.f(z)) / f.big_f_diff(z, y))
}

/// Liquidation value computed directly and through its dynamics.
pub fn liquidation_value(
    strategy: &Path,
    market: &MarketScenario,
    model: &ImpactModel,
    beta0: f64,
) -> Result<LiquidationPath> {
    let f = model
        .g
        .multiplicative()
        .ok_or_else(|| Error::Unsupported("liquidation value needs multiplicative impact".into()))?
        .clone();
    let (_, lpath) = proceeds_general(strategy, market, model)?;
    let fr = Frame::new(strategy, market, model)?;
    let eta = model.eta;
    let n = fr.len();
    let pos = |s: f64, y: f64, th: f64| s * f.big_f_diff(y - eta * th, y) / eta;
    let mut out = LiquidationPath::default();
    let mut v = beta0 + pos(fr.s_l[0], model.y0_minus, fr.theta_l[0]);
    for i in 0..n {
        let (s, y, th) = (fr.s_r[i], fr.y_r[i], fr.theta_r[i]);
        let bank = beta0 + lpath.value_at(fr.t[i]);
        if i > 0 {
            let (sp, yp, thp) = (fr.s_r[i - 1], fr.y_r[i - 1], fr.theta_r[i - 1]);
            let d = f.big_f_diff(yp - eta * thp, yp) / eta;
            let zp = yp - eta * thp;
            let dc = fr.clock[i] - fr.clock[i - 1];
            v += d * (fr.s_l[i] - sp) - sp * model.h.eval(yp) * (f.f(yp) - f.f(zp)) / eta * dc;
            if fr.s_r[i] != fr.s_l[i] {
                let yl = fr.y_l[i];
                let thl = fr.theta_l[i];
                v += f.big_f_diff(yl - eta * thl, yl) / eta * (fr.s_r[i] - fr.s_l[i]);
            }
        }
        let xi = market.xi.eval(fr.t[i]);
        out.t.push(fr.t[i]);
        out.bank.push(bank);
        out.position.push(th);
        out.value_direct.push(bank + pos(s, y, th));
        out.value_sde.push(v);
        out.mu.push(xi - value_drift_correction(model, y, th)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{deterministic_market, uniform_grid, TimeFn};

    fn flat_market(n: usize) -> MarketScenario {
        deterministic_market(TimeFn::Constant(1.0), 1.0, &uniform_grid(1.0, n)).unwrap()
    }

    #[test]
    fn constant_strategy_has_no_proceeds() {
        let m = flat_market(100);
        let model = ImpactModel::exponential(1.0, 1.0).with_y0(0.4);
        let th = Path::constant(1.0, 2.0).unwrap();
        assert_eq!(proceeds_fv(&th, &m, &model).unwrap().terminal(), 0.0);
        let t = proceeds_general(&th, &m, &model).unwrap().0.total;
        assert!(t.abs() < 1e-8, "{t}");
    }

    #[test]
    fn linear_sale_under_permanent_impact() {
        let m = flat_market(1000);
        let model = ImpactModel::exponential(0.0, 1.0);
        let th = Path::polyline(&[(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let l = proceeds_continuous_fv(&th, &m, &model).unwrap().terminal();
        assert!((l - (1.0 - (-1f64).exp())).abs() < 1e-12);
        let th2 = Path::polyline(&[(0.0, 2.0), (1.0, 0.0)]).unwrap();
        let l2 = proceeds_continuous_fv(&th2, &m, &model).unwrap().terminal();
        assert!((l2 - 2.0 * l).abs() > 0.1);
        let block = Path::step(1.0, 1.0, &[(0.5, 0.0)]).unwrap();
        assert!(matches!(proceeds_continuous_fv(&block, &m, &model), Err(Error::WrongForm(_))));
    }

    #[test]
    fn block_sale_closed_forms() {
        let m = flat_market(10);
        let th = Path::step(1.0, 1.0, &[(0.0, 0.0)]).unwrap();
        let full = proceeds_fv(&th, &m, &ImpactModel::exponential(1.0, 1.0)).unwrap().terminal();
        assert!((full - (1.0 - (-1f64).exp())).abs() < 1e-15);
        let half = proceeds_fv(&th, &m, &ImpactModel::exponential(1.0, 1.0).with_eta(0.5)).unwrap().terminal();
        assert!((half - 2.0 * (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        assert!(half > full);
        // average price between post- and pre-trade prices
        assert!(full >= (-1f64).exp() && full <= 1.0);
    }

    #[test]
    fn brownian_strategy_semimartingale_matches_general() {
        use rand::SeedableRng;
        let n = 10_000;
        let dt = 1.0 / n as f64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut pts = vec![(0.0, 0.0)];
        let mut w = 0.0;
        for k in 1..=n {
            w += 0.5 * dt.sqrt() * crate::market::normal(&mut rng);
            pts.push((k as f64 * dt, w));
        }
        let th = Path::polyline(&pts).unwrap();
        let m = flat_market(n);
        let model = ImpactModel::exponential(1.0, 1.0);
        let sm = proceeds_semimartingale(&th, &m, &model).unwrap();
        let (b, _) = proceeds_general(&th, &m, &model).unwrap();
        assert!((sm - b.total).abs() <= 5e-3, "{sm} {}", b.total);
    }

    #[test]
    fn forms_agree_on_a_step_strategy() {
        let m = flat_market(500);
        let model = ImpactModel::exponential(1.0, 0.8).with_y0(0.1);
        let th = Path::step(1.0, 1.0, &[(0.0, 0.7), (0.3, 0.2), (0.61, 0.5), (0.9, 0.0)]).unwrap();
        let fv = proceeds_fv(&th, &m, &model).unwrap().terminal();
        let (b, _) = proceeds_general(&th, &m, &model).unwrap();
        assert!((fv - b.total).abs() <= 1e-6 * (1.0 + fv.abs()), "{fv} {}", b.total);
        assert_eq!(b.jump_sum, 0.0);
        let sm = proceeds_semimartingale(&th, &m, &model).unwrap();
        assert!((fv - sm).abs() < 1e-12);
        let mo = marcus_oracle(&th, &m, &model).unwrap();
        assert!((fv - mo.l).abs() < 1e-10);
    }

    #[test]
    fn general_total_ignores_the_anchor() {
        use crate::market::{simulate_market_path, DriverSpec, JumpLaw};
        let driver = DriverSpec {
            sigma: 0.3,
            xi: TimeFn::Constant(0.1),
            jump_intensity: 4.0,
            jump_law: Some(JumpLaw::LogNormal { mu: 0.0, sigma: 0.2 }),
            ..Default::default()
        };
        let th = Path::polyline(&[(0.0, 1.0), (0.4, 0.6), (1.0, 0.0)]).unwrap();
        let m = simulate_market_path(&driver, 1.0, 1e-3, 5, 0, &[], &th.breakpoint_times()).unwrap();
        assert!(m.has_jumps());
        let model = ImpactModel::exponential(1.0, 0.7).with_y0(0.2);
        let (b0, _) = proceeds_general(&th, &m, &model).unwrap();
        for c in [-1.3, 0.7] {
            let (b, _) = proceeds_general_anchored(&th, &m, &model, c).unwrap();
            assert!((b.total - b0.total).abs() <= 1e-10, "{c}: {} {}", b.total, b0.total);
        }
    }

    #[test]
    fn liquidation_value_of_no_position() {
        let m = flat_market(50);
        let model = ImpactModel::exponential(1.0, 1.0);
        let lv = liquidation_value(&Path::constant(1.0, 0.0).unwrap(), &m, &model, 3.0).unwrap();
        assert!(lv.value_direct.iter().chain(&lv.value_sde).all(|&v| (v - 3.0).abs() < 1e-15));
    }

    #[test]
    fn round_trip_loses_money() {
        let m = flat_market(200);
        let model = ImpactModel::exponential(2.0, 1.0);
        let th = Path::step(1.0, 0.0, &[(0.0, 1.0), (1.0, 0.0)]).unwrap();
        let lv = liquidation_value(&th, &m, &model, 0.0).unwrap();
        assert!(*lv.value_direct.last().unwrap() < 0.0);
        assert!(lv.max_gap() < 2e-2, "{}", lv.max_gap());
    }
}

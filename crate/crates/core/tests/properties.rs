//! Randomized invariants across the library.

use impactlab::approx::{grid_discretize, jump_capped_simple, uniform_nodes, wz_average, wz_parametric_certificate};
use impactlab::experiments::{random_path, random_step_strategy};
use impactlab::impact::{solve_impact, GeneralImpact, ImpactFn, ImpactModel, PriceImpact, StochasticLiquiditySpec};
use impactlab::liquidation::PsiObjective;
use impactlab::market::{deterministic_market, path_rng, simulate_market_path, uniform_grid, DriverSpec, JumpLaw, TimeFn};
use impactlab::metrics::{d_j1_upper, d_levy_prokhorov, d_m1, d_uniform, DEFAULT_WARP_GRID};
use impactlab::proceeds::{marcus_oracle, proceeds_fv, proceeds_general, proceeds_semimartingale};
use impactlab::Path;
use proptest::prelude::*;
use rand::Rng;
use std::sync::Arc;

const TOL: f64 = 1e-6;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

fn polyline(seed: u64, pieces: usize) -> Path {
    let mut rng = path_rng(seed, 99);
    let mut pts = vec![(0.0, rng.random_range(-1.0..1.0))];
    for k in 1..=pieces {
        pts.push((k as f64 / pieces as f64, rng.random_range(-1.0..1.0)));
    }
    Path::polyline(&pts).unwrap()
}

/// Nondecreasing step path from 0 to 1.
fn monotone_steps(seed: u64, stream: u64) -> Path {
    let mut rng = path_rng(seed, stream);
    let m = rng.random_range(1..=5usize);
    let mut times: Vec<f64> = (0..m).map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    let w: Vec<f64> = (0..m).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    let jumps: Vec<(f64, f64)> = times
        .iter()
        .zip(&w)
        .enumerate()
        .map(|(i, (&t, &wi))| {
            acc += wi / total;
            (t, if i + 1 == m { 1.0 } else { acc })
        })
        .collect();
    Path::step(1.0, 0.0, &jumps).unwrap()
}

/// Step strategy with up to four trades in `[0.05, 0.75]`, at least 0.15 apart.
fn early_steps(seed: u64, stream: u64) -> Path {
    let mut rng = path_rng(seed, stream);
    let m = rng.random_range(1..=4usize);
    let slack = 0.7 - 0.15 * (m - 1) as f64;
    let mut offsets: Vec<f64> = (0..m).map(|_| slack * rng.random::<f64>()).collect();
    offsets.sort_by(|a, b| a.total_cmp(b));
    let jumps: Vec<(f64, f64)> =
        offsets.iter().enumerate().map(|(k, &o)| (0.05 + o + 0.15 * k as f64, rng.random_range(-1.0..1.0))).collect();
    Path::step(1.0, rng.random_range(-1.0..1.0), &jumps).unwrap()
}

fn jumpy_driver() -> DriverSpec {
    DriverSpec {
        sigma: 0.3,
        xi: TimeFn::Constant(0.1),
        jump_intensity: 4.0,
        jump_law: Some(JumpLaw::LogNormal { mu: 0.0, sigma: 0.2 }),
        ..Default::default()
    }
}

/// `g(x, y) = x e^y + x² e^y / 10`: increasing in both arguments, not
/// multiplicative.
struct Quadratic;

impl GeneralImpact for Quadratic {
    fn g(&self, x: f64, y: f64) -> f64 {
        (x + 0.1 * x * x) * y.exp()
    }
    fn g_x(&self, x: f64, y: f64) -> f64 {
        (1.0 + 0.2 * x) * y.exp()
    }
    fn g_xx(&self, _x: f64, y: f64) -> f64 {
        0.2 * y.exp()
    }
    fn g_y(&self, x: f64, y: f64) -> f64 {
        self.g(x, y)
    }
}

/// Left and right values of the completed graph above time `t`.
fn read_back(v: &[(f64, f64)], t: f64) -> (f64, f64) {
    let at: Vec<f64> = v.iter().filter(|p| p.0 == t).map(|p| p.1).collect();
    if let (Some(a), Some(b)) = (at.first(), at.last()) {
        return (*a, *b);
    }
    let i = v.iter().position(|p| p.0 > t).unwrap();
    let ((t0, y0), (t1, y1)) = (v[i - 1], v[i]);
    let y = y0 + (y1 - y0) * (t - t0) / (t1 - t0);
    (y, y)
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn completed_graph_reads_back_the_path(seed in any::<u64>()) {
        let x = random_path(&mut path_rng(seed, 0), 1.0, 6).unwrap();
        let v = x.completed_graph().vertices;
        for p in x.breakpoints() {
            let (left, right) = read_back(&v, p.t);
            prop_assert!((left - x.left_at(p.t)).abs() <= 1e-12, "left {left} vs {}", x.left_at(p.t));
            prop_assert!((right - x.eval(p.t).unwrap()).abs() <= 1e-12);
            if p.t > 0.0 {
                prop_assert_eq!(x.left_limit(p.t).unwrap(), p.left);
            }
        }
    }

    #[test]
    fn extending_then_restricting_is_the_identity(seed in any::<u64>(), eps in 0.01f64..2.0) {
        let x = polyline(seed, 5);
        let back = x.extend(eps).unwrap().restrict(eps, 1.0 + eps).unwrap();
        prop_assert!((back.horizon() - 1.0).abs() <= 1e-12);
        prop_assert_eq!(back.initial_left(), x.initial_left());
        for k in 0..=100 {
            let t = back.horizon() * k as f64 / 100.0;
            prop_assert!((back.value_at(t) - x.value_at(t)).abs() <= 1e-12);
        }
        prop_assert!((back.terminal() - x.terminal()).abs() <= 1e-12);
    }

    #[test]
    fn total_variation_is_subadditive(seed in any::<u64>()) {
        let mut rng = path_rng(seed, 1);
        let x = random_path(&mut rng, 1.0, 5).unwrap();
        let y = random_path(&mut rng, 1.0, 5).unwrap();
        let tv = |p: &Path| p.stats().total_variation;
        prop_assert!(tv(&x.add(&y).unwrap()) <= tv(&x) + tv(&y) + 1e-12);
    }

    #[test]
    fn quadratic_jump_sum_is_controlled_by_variation(seed in any::<u64>()) {
        let x = random_path(&mut path_rng(seed, 2), 1.0, 6).unwrap();
        let s = x.stats();
        prop_assert!(s.quadratic_jump_sum <= x.max_jump() * s.total_variation + 1e-12);
    }

    #[test]
    fn metrics_are_ordered(seed in any::<u64>()) {
        let mut rng = path_rng(seed, 3);
        let x = random_path(&mut rng, 1.0, 6).unwrap();
        let y = random_path(&mut rng, 1.0, 6).unwrap();
        let m = d_m1(&x, &y, TOL).unwrap();
        let j = d_j1_upper(&x, &y, DEFAULT_WARP_GRID).unwrap();
        let u = d_uniform(&x, &y).unwrap();
        prop_assert!(m <= j + TOL, "m1 {m} j1 {j}");
        prop_assert!(j <= u + TOL, "j1 {j} uniform {u}");
    }

    #[test]
    fn metric_axioms_hold(seed in any::<u64>()) {
        let mut rng = path_rng(seed, 4);
        let x = random_path(&mut rng, 1.0, 5).unwrap();
        let y = random_path(&mut rng, 1.0, 5).unwrap();
        let z = random_path(&mut rng, 1.0, 5).unwrap();
        let metrics: [&dyn Fn(&Path, &Path) -> f64; 2] =
            [&|a, b| d_uniform(a, b).unwrap(), &|a, b| d_m1(a, b, TOL).unwrap()];
        for d in metrics {
            prop_assert!(d(&x, &y) >= 0.0);
            prop_assert!(d(&x, &x) <= TOL);
            prop_assert!((d(&x, &y) - d(&y, &x)).abs() <= TOL);
            prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 3.0 * TOL);
        }
    }

    #[test]
    fn levy_prokhorov_is_below_m1_for_monotone_paths(seed in any::<u64>()) {
        let x = monotone_steps(seed, 5);
        let y = monotone_steps(seed, 6);
        let lp = d_levy_prokhorov(&x, &y).unwrap();
        prop_assert!(lp <= d_m1(&x, &y, TOL).unwrap() + TOL);
    }

    #[test]
    fn wz_average_contracts_sup_norm(seed in any::<u64>(), n in 2usize..40) {
        // Step inputs keep the average exactly piecewise linear.
        let mut rng = path_rng(seed, 7);
        let x = random_step_strategy(&mut rng, 1.0, 5).unwrap();
        let y = random_step_strategy(&mut rng, 1.0, 5).unwrap();
        let eps = 1.0 / n as f64;
        let lhs = d_uniform(&wz_average(&x, eps).unwrap(), &wz_average(&y, eps).unwrap()).unwrap();
        // The average looks back before 0, where the paths sit at their initial values.
        let rhs = d_uniform(&x, &y).unwrap().max((x.initial_left() - y.initial_left()).abs());
        prop_assert!(lhs <= rhs + 1e-12);
    }

    #[test]
    fn grid_discretization_interpolates(seed in any::<u64>(), n in 1usize..50) {
        let x = random_path(&mut path_rng(seed, 8), 1.0, 6).unwrap();
        let nodes = uniform_nodes(1.0, n);
        let g = grid_discretize(&x, &nodes).unwrap();
        for &t in &nodes {
            prop_assert_eq!(g.eval(t).unwrap(), x.eval(t).unwrap());
        }
        prop_assert!(g.is_piecewise_constant());
    }

    #[test]
    fn capped_jumps_are_small(seed in any::<u64>(), n in 1usize..14) {
        let x = random_step_strategy(&mut path_rng(seed, 9), 1.0, 5).unwrap();
        let c = jump_capped_simple(&x, n).unwrap();
        prop_assert!(c.max_jump() <= 1.0 / n as f64 + 1e-12);
        prop_assert!(c.is_piecewise_constant());
    }

    #[test]
    fn certificate_dominates_m1(seed in any::<u64>(), n in 2usize..24) {
        let x = random_step_strategy(&mut path_rng(seed, 10), 1.0, 5).unwrap();
        let cert = wz_parametric_certificate(&x, n, None).unwrap();
        let w = wz_average(&x, 1.0 / n as f64).unwrap();
        prop_assert!(cert.certified_distance + TOL >= d_m1(&x, &w, TOL).unwrap());
    }

    #[test]
    fn impact_preserves_order(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let theta = random_step_strategy(&mut path_rng(seed, 11), 1.0, 6).unwrap();
        let clock = Path::polyline(&[(0.0, 0.0), (1.0, 1.3)]).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        for model in [ImpactModel::exponential(1.5, 1.0), ImpactModel::exponential(0.0, 1.0)] {
            let y1 = solve_impact(&theta, &model.clone().with_y0(lo), &clock).unwrap();
            let y2 = solve_impact(&theta, &model.with_y0(hi), &clock).unwrap();
            for (p, q) in y1.breakpoints().iter().zip(y2.breakpoints()) {
                prop_assert!(p.left <= q.left + 1e-12 && p.right <= q.right + 1e-12);
            }
        }
    }

    #[test]
    fn impact_decays_without_trading(y0 in -3.0f64..3.0, beta in 0.0f64..4.0) {
        let theta = Path::constant(1.0, 0.7).unwrap();
        let clock = Path::polyline(&[(0.0, 0.0), (0.5, 0.2), (1.0, 1.0)]).unwrap();
        let model = ImpactModel::exponential(beta, 1.0).with_y0(y0);
        let market = deterministic_market(TimeFn::Constant(1.0), 1.0, &uniform_grid(1.0, 50)).unwrap();
        let y = solve_impact(&theta, &model, &market.clock_path()).unwrap();
        let yc = solve_impact(&theta, &model, &clock).unwrap();
        for path in [y, yc] {
            let abs: Vec<f64> = path.breakpoints().iter().map(|p| p.right.abs()).collect();
            prop_assert!(abs.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        }
    }

    #[test]
    fn impact_depends_continuously_on_the_strategy(seed in any::<u64>(), eps in 1e-4f64..0.1) {
        let mut rng = path_rng(seed, 12);
        let theta = random_step_strategy(&mut rng, 1.0, 6).unwrap();
        // Θ(0−) stays fixed: the impact only sees increments.
        let bump = Path::step(1.0, 0.0, &[(0.0, rng.random_range(-eps..eps)), (0.3, rng.random_range(-eps..eps))]).unwrap();
        let other = theta.add(&bump).unwrap();
        let shift = d_uniform(&theta, &other).unwrap();
        let (beta, alpha) = (2.0, 1.5);
        // Y is stored at clock nodes, so the clock must be fine.
        let clock = deterministic_market(TimeFn::Constant(alpha), 1.0, &uniform_grid(1.0, 1000)).unwrap().clock_path();
        let model = ImpactModel::exponential(beta, 1.0);
        let y1 = solve_impact(&theta, &model, &clock).unwrap();
        let y2 = solve_impact(&other, &model, &clock).unwrap();
        let bound = (beta * alpha).exp() * shift * 1.1;
        prop_assert!(d_uniform(&y1, &y2).unwrap() <= bound + 1e-14);
    }

    #[test]
    fn impact_jumps_are_eta_times_trades(seed in any::<u64>(), eta in 0.1f64..1.0) {
        let theta = random_step_strategy(&mut path_rng(seed, 13), 1.0, 6).unwrap();
        let clock = Path::polyline(&[(0.0, 0.0), (1.0, 1.0)]).unwrap();
        let y = solve_impact(&theta, &ImpactModel::exponential(1.0, 1.0).with_eta(eta), &clock).unwrap();
        for p in theta.jumps() {
            let dy = y.eval(p.t).unwrap() - if p.t == 0.0 { y.initial_left() } else { y.left_limit(p.t).unwrap() };
            prop_assert!((dy - eta * p.jump()).abs() <= 1e-12);
        }
    }

    #[test]
    fn block_prices_lie_between_pre_and_post_trade(x in 0.1f64..3.0, y in -2.0f64..2.0, d in -2.0f64..2.0, eta in 0.05f64..1.0) {
        prop_assume!(d.abs() > 1e-6);
        let gs: [PriceImpact; 3] = [
            PriceImpact::Multiplicative(ImpactFn::exp(0.7)),
            PriceImpact::Additive(ImpactFn::exp(1.3)),
            PriceImpact::General(Arc::new(Quadratic)),
        ];
        for g in gs {
            let avg = g.block_integral(x, y, d, eta) / d;
            let (a, b) = (g.g(x, y), g.g(x, y + eta * d));
            prop_assert!(avg >= a.min(b) - 1e-12 && avg <= a.max(b) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(cases(16))]

    #[test]
    fn forms_agree_on_simulated_markets(seed in any::<u64>()) {
        let mut rng = path_rng(seed, 14);
        let theta = random_step_strategy(&mut rng, 1.0, 6).unwrap();
        let jumps: Vec<f64> = theta.jumps().iter().map(|p| p.t).collect();
        let market = simulate_market_path(&jumpy_driver(), 1.0, 2e-3, seed, 0, &jumps, &theta.breakpoint_times()).unwrap();
        let model = ImpactModel::exponential(1.0, 1.0).with_y0(rng.random_range(-0.5..0.5));
        let fv = proceeds_fv(&theta, &market, &model).unwrap().terminal();
        let general = proceeds_general(&theta, &market, &model).unwrap().0.total;
        let semi = proceeds_semimartingale(&theta, &market, &model).unwrap();
        let marcus = marcus_oracle(&theta, &market, &model).unwrap().l;
        let rel = |v: f64| (v - fv).abs() / (1.0 + fv.abs());
        prop_assert!(rel(general) <= 1e-6, "general {general} fv {fv}");
        prop_assert!(rel(semi) <= 1e-6, "semimartingale {semi} fv {fv}");
        prop_assert!((marcus - fv).abs() <= 1e-8, "marcus {marcus} fv {fv}");
    }

    #[test]
    fn constant_strategies_earn_nothing(seed in any::<u64>(), position in -2.0f64..2.0) {
        let theta = Path::constant(1.0, position).unwrap();
        let market = simulate_market_path(&jumpy_driver(), 1.0, 1e-3, seed, 0, &[], &[]).unwrap();
        let model = ImpactModel::exponential(1.0, 1.0).with_y0(0.3);
        let total = proceeds_general(&theta, &market, &model).unwrap().0.total;
        let scale = 1.0 + market.sbar.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        prop_assert!(total.abs() <= 1e-6 * scale);
        prop_assert_eq!(proceeds_fv(&theta, &market, &model).unwrap().terminal(), 0.0);
    }

    #[test]
    fn grid_proceeds_converge_uniformly(seed in any::<u64>()) {
        let theta = polyline(seed, 3);
        let grid = uniform_grid(1.0, 512);
        let market = deterministic_market(TimeFn::Constant(1.0), 1.0, &grid).unwrap();
        let model = ImpactModel::exponential(1.0, 1.0);
        let target = proceeds_fv(&theta, &market, &model).unwrap();
        let gaps: Vec<f64> = [8usize, 32, 128]
            .iter()
            .map(|&n| {
                let g = grid_discretize(&theta, &uniform_nodes(1.0, n)).unwrap();
                d_uniform(&proceeds_fv(&g, &market, &model).unwrap(), &target).unwrap()
            })
            .collect();
        prop_assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        prop_assert!(gaps[2] * 128.0 <= 10.0 * gaps[0] * 8.0, "{gaps:?}");
    }

    #[test]
    fn wz_smoothing_converges_in_m1(seed in any::<u64>()) {
        let x = random_step_strategy(&mut path_rng(seed, 15), 1.0, 5).unwrap();
        let xe = x.extend(1.0).unwrap();
        // Jumps closer than the window merge into one ramp; the rate only
        // applies once the window separates them.
        let times: Vec<f64> = xe.jumps().iter().map(|p| p.t).collect();
        let gap = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let levels: Vec<f64> = [4.0, 8.0, 16.0, 32.0, 64.0].into_iter().filter(|n| 1.0 / n <= gap).collect();
        let ds: Vec<f64> =
            levels.iter().map(|&n| d_m1(&wz_average(&xe, 1.0 / n).unwrap(), &xe, TOL).unwrap()).collect();
        prop_assert!(ds.windows(2).all(|w| w[1] <= w[0] + TOL), "{ds:?}");
        for (d, n) in ds.iter().zip(&levels) {
            prop_assert!(*d <= 2.0 / n + TOL, "{ds:?}");
        }
    }

    #[test]
    fn proceeds_are_stable_under_each_approximator(seed in any::<u64>()) {
        use impactlab::experiments::{approximate, Approximator};
        // Trades end early enough for every smoothing window to close before T.
        let theta = early_steps(seed, 16);
        let grid = uniform_grid(1.0, 400);
        let market = deterministic_market(TimeFn::Constant(1.0), 1.0, &grid).unwrap();
        let model = ImpactModel::exponential(1.0, 1.0);
        let target = proceeds_fv(&theta, &market, &model).unwrap().extend(1.0).unwrap();
        let mass: f64 = theta.jumps().iter().map(|p| (p.right - p.left).abs()).sum();
        for a in [Approximator::Wz, Approximator::Grid, Approximator::Jumpcap] {
            let levels: &[usize] = if a == Approximator::Jumpcap { &[4, 8, 12] } else { &[4, 16, 64] };
            let ds: Vec<f64> = levels
                .iter()
                .map(|&n| {
                    let l = proceeds_fv(&approximate(&theta, a, n).unwrap(), &market, &model).unwrap();
                    d_m1(&l.extend(1.0).unwrap(), &target, 1e-8).unwrap()
                })
                .collect();
            prop_assert!(ds.windows(2).all(|w| w[1] <= w[0] + TOL), "{a:?} {ds:?}");
            // O(1/n) with a constant set by the jump mass; nested grids can
            // snap a jump to the same node at several levels, so no ratio.
            let n = *levels.last().unwrap() as f64;
            prop_assert!(ds[2] <= 2.0 * (1.0 + mass) / n + TOL, "{a:?} {ds:?}");
        }
    }

    #[test]
    fn jump_terms_converge_under_impact_perturbation(seed in any::<u64>()) {
        let theta = random_step_strategy(&mut path_rng(seed, 17), 1.0, 4).unwrap();
        let jumps: Vec<f64> = theta.jumps().iter().map(|p| p.t).collect();
        let market = simulate_market_path(&jumpy_driver(), 1.0, 5e-3, seed, 0, &jumps, &theta.breakpoint_times()).unwrap();
        let mut model = ImpactModel::exponential(1.0, 1.0);
        model.g = PriceImpact::General(Arc::new(Quadratic));
        model.allow_no_m1_guarantee = true;
        let base = proceeds_general(&theta, &market, &model).unwrap().0.jump_sum;
        let gaps: Vec<f64> = (1..=8)
            .map(|k| {
                let m = model.clone().with_y0(0.5f64.powi(k));
                (proceeds_general(&theta, &market, &m).unwrap().0.jump_sum - base).abs()
            })
            .collect();
        prop_assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-14), "{gaps:?}");
        prop_assert!(gaps[7] <= 0.01 * gaps[0].max(1e-12) + 1e-12, "{gaps:?}");
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn market_paths_are_well_formed(seed in any::<u64>(), forbidden in 0.05f64..0.95) {
        let mut spec = jumpy_driver();
        spec.jump_intensity = 30.0;
        spec.alpha = TimeFn::Polynomial(vec![0.5, 1.0]);
        let m = simulate_market_path(&spec, 1.0, 1e-2, seed, 0, &[forbidden], &[]).unwrap();
        prop_assert!(m.sbar.iter().chain(&m.sbar_left).all(|&s| s > 0.0));
        let sup_alpha = spec.alpha.sup_abs(1.0);
        for (c, t) in m.clock.windows(2).zip(m.grid.windows(2)) {
            prop_assert!(c[1] >= c[0]);
            prop_assert!(c[1] - c[0] <= sup_alpha * (t[1] - t[0]) + 1e-12);
        }
        prop_assert!(m.sbar_jump_times.iter().all(|&t| (t - forbidden).abs() > 1e-9));
    }

    #[test]
    fn psi_hat_dominates_and_is_concave(seed in any::<u64>(), beta in 0.2f64..3.0, sigma_hat in 0.0f64..1.5, lambda in 0.3f64..2.0) {
        let spec = StochasticLiquiditySpec::exponential(beta, sigma_hat, lambda);
        let p = PsiObjective::new(&spec, 1.0);
        let ys = p.ystar().unwrap();
        let mut rng = path_rng(seed, 18);
        for _ in 0..1000 {
            let a = ys + rng.random_range(-4.0..4.0);
            let b = ys + rng.random_range(-4.0..4.0);
            prop_assert!(p.psi_hat(a, ys) >= p.psi(a) - 1e-12);
            let mid = p.psi_hat(0.5 * (a + b), ys);
            prop_assert!(mid + 1e-9 >= 0.5 * (p.psi_hat(a, ys) + p.psi_hat(b, ys)));
        }
        // Affine (flat) to the left of y*.
        let (u, v, w) = (ys - 3.0, ys - 2.0, ys - 1.0);
        prop_assert!((p.psi_hat(v, ys) - 0.5 * (p.psi_hat(u, ys) + p.psi_hat(w, ys))).abs() <= 1e-12);
    }
}

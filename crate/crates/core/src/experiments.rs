//! Batch experiments behind the `impactlab` binary and the acceptance suite.
//!
//! Every experiment takes a serde config (defaults reproduce the acceptance
//! settings) and a seed, and returns a [`Report`] of named checks plus
//! plot-ready tables. Outputs depend only on `(config, seed)`; wall-clock
//! timings go to a separate file.

use crate::approx::{grid_discretize, jump_capped_simple, uniform_nodes, wz_average, wz_parametric_certificate};
use crate::impact::{ImpactFn, ImpactModel, PriceImpact, StochasticLiquiditySpec};
use crate::liquidation::{
    expected_liquidation_time, hitting_time_density, mc_impact_fixing, optimize_monotone_finite_horizon,
    prob_never_hits, random_block_schedule, sample_block_schedule, solve_impact_fixing, ImpactFixingParams,
    MonotoneProblem,
};
use crate::market::{
    decaying_market, deterministic_market, path_rng, simulate_market_path, uniform_grid, DriverSpec, JumpLaw,
    MarketScenario, TimeFn,
};
use crate::metrics::{d_j1_upper, d_levy_prokhorov, d_m1, d_uniform, DEFAULT_WARP_GRID};
use crate::numerics::{integrate, McSummary};
use crate::proceeds::{
    liquidation_value, marcus_oracle, proceeds_fv, proceeds_general, proceeds_partial_recovery,
    proceeds_semimartingale, value_drift_correction, Form,
};
use crate::{Error, Path, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

// ---------------------------------------------------------------------------
// Reports

/// A named pass/fail check with the measured value and its bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
    pub note: String,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), pass: value <= bound, value, bound, note: String::new() }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), pass: value >= bound, value, bound, note: String::new() }
    }

    pub fn flag(name: &str, pass: bool, note: impl Into<String>) -> Self {
        Check { name: name.into(), pass, value: pass as u8 as f64, bound: 1.0, note: note.into() }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// CSV-ready table.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        // Adding zero folds −0 into 0.
        format!("{}", v + 0.0)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
    #[serde(skip)]
    pub tables: Vec<Table>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl Report {
    fn new(experiment: &str, seed: u64) -> Self {
        Report { experiment: experiment.into(), seed, pass: true, ..Default::default() }
    }

    fn check(&mut self, c: Check) {
        self.pass &= c.pass;
        self.checks.push(c);
    }

    fn finish(mut self) -> Self {
        self.pass = self.checks.iter().all(|c| c.pass);
        self
    }

    /// One line per check.
    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{} {}/{}: value {} bound {}{}",
                    if c.pass { "PASS" } else { "FAIL" },
                    self.experiment,
                    c.name,
                    c.value,
                    c.bound,
                    if c.note.is_empty() { String::new() } else { format!(" ({})", c.note) }
                )
            })
            .collect()
    }
}

/// Writes `config.json`, `summary.json`, one CSV per table and `timings.csv`
/// into `root/<experiment>/<timestamp>/`, returning that directory.
pub fn write_run<C: Serialize>(root: &FsPath, config: &C, report: &Report) -> Result<PathBuf> {
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f").to_string();
    let dir = root.join(&report.experiment).join(stamp);
    write_run_into(&dir, config, report)?;
    Ok(dir)
}

/// As [`write_run`] but into an explicit directory.
pub fn write_run_into<C: Serialize>(dir: &FsPath, config: &C, report: &Report) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(report)?)?;
    for t in &report.tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
        w.write_record(&t.header)?;
        for r in &t.rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
    w.write_record(["step", "seconds"])?;
    for (k, s) in &report.timings {
        w.write_record([k.clone(), num(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSON or TOML config (by extension), or the default when `None`.
pub fn load_config<C: for<'de> Deserialize<'de> + Default>(path: Option<&FsPath>) -> Result<C> {
    let Some(p) = path else { return Ok(C::default()) };
    let text = fs::read_to_string(p)?;
    if p.extension().is_some_and(|e| e == "toml") {
        Ok(toml::from_str(&text)?)
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

// ---------------------------------------------------------------------------
// Shared configuration pieces

/// Impact model `g(x, y) = x e^{λy}` (or `x + e^{λy}`) with `h(y) = βy`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpactConfig {
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
    pub y0_minus: f64,
    pub additive: bool,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        ImpactConfig { beta: 1.0, lambda: 1.0, eta: 1.0, y0_minus: 0.0, additive: false }
    }
}

impl ImpactConfig {
    pub fn model(&self) -> ImpactModel {
        let mut m = ImpactModel::exponential(self.beta, self.lambda).with_eta(self.eta).with_y0(self.y0_minus);
        if self.additive {
            m.g = PriceImpact::Additive(ImpactFn::exp(self.lambda));
            m.allow_no_m1_guarantee = true;
        }
        m
    }
}

/// Driver, horizon and grid step of a simulated market.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    pub driver: DriverSpec,
    pub horizon: f64,
    pub dt: f64,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig { driver: DriverSpec::default(), horizon: 1.0, dt: 1e-3 }
    }
}

impl MarketConfig {
    /// Market path `index`, with the strategy's breakpoints on the grid and
    /// driver jumps kept away from the strategy's jumps.
    pub fn scenario(&self, strategy: &Path, seed: u64, index: u64) -> Result<MarketScenario> {
        let jumps: Vec<f64> = strategy.jumps().iter().map(|p| p.t).collect();
        simulate_market_path(&self.driver, self.horizon, self.dt, seed, index, &jumps, &strategy.breakpoint_times())
    }
}

fn nonincreasing_within(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + tol)
}

// ---------------------------------------------------------------------------
// Random inputs

/// Random step strategy on `[0, T]` with `1..=max_jumps` jumps at distinct
/// times in `(0, T)` (optionally one at 0) and values in `[−1, 1]`.
pub fn random_step_strategy(rng: &mut ChaCha8Rng, horizon: f64, max_jumps: usize) -> Result<Path> {
    let m = rng.random_range(1..=max_jumps.max(1));
    let mut times: Vec<f64> = (0..m).map(|_| horizon * (0.02 + 0.96 * rng.random::<f64>())).collect();
    if rng.random::<f64>() < 0.3 {
        times[0] = 0.0;
    }
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup();
    let jumps: Vec<(f64, f64)> = times.iter().map(|&t| (t, rng.random_range(-1.0..1.0))).collect();
    Path::step(horizon, rng.random_range(-1.0..1.0), &jumps)
}

/// Random càdlàg path mixing constant and linear pieces, with jumps.
pub fn random_path(rng: &mut ChaCha8Rng, horizon: f64, max_pieces: usize) -> Result<Path> {
    use crate::cadlag::{Breakpoint, SegmentKind};
    let m = rng.random_range(1..=max_pieces.max(1));
    let mut times: Vec<f64> = (0..m - 1).map(|_| horizon * rng.random::<f64>()).collect();
    times.push(0.0);
    times.push(horizon);
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup();
    let init = rng.random_range(-1.0..1.0);
    let mut pts = Vec::new();
    let mut kinds = Vec::new();
    let mut prev = init;
    for (i, &t) in times.iter().enumerate() {
        let left = if i == 0 { init } else { prev };
        let right = if rng.random::<f64>() < 0.5 { rng.random_range(-1.0..1.0) } else { left };
        pts.push(Breakpoint::new(t, left, right));
        if i + 1 < times.len() {
            if rng.random::<f64>() < 0.5 {
                kinds.push(SegmentKind::Linear);
                prev = rng.random_range(-1.0..1.0);
            } else {
                kinds.push(SegmentKind::Constant);
                prev = right;
            }
        }
    }
    Path::new(horizon, init, pts, kinds)
}

// ---------------------------------------------------------------------------
// Oracle equivalence of the proceeds forms

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub strategies: usize,
    pub max_jumps: usize,
    pub dt: f64,
    pub marcus_tol: f64,
    pub general_rel_tol: f64,
    pub semimartingale_rel_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            strategies: 50,
            max_jumps: 10,
            dt: 2e-3,
            marcus_tol: 1e-8,
            general_rel_tol: 1e-6,
            semimartingale_rel_tol: 1e-6,
        }
    }
}

/// Random step strategies over a rotation of deterministic markets and
/// impact models, compared across all proceeds forms.
pub fn run_oracle_equivalence(cfg: &OracleConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("oracle", seed);
    let mut table = Table::new("forms", &["instance", "fv", "general", "semimartingale", "marcus"]);
    let (mut worst_marcus, mut worst_general, mut worst_semi) = (0.0f64, 0.0f64, 0.0f64);
    let t0 = Instant::now();
    for i in 0..cfg.strategies {
        let mut rng = path_rng(seed, i as u64);
        let theta = random_step_strategy(&mut rng, 1.0, cfg.max_jumps)?;
        let grid = uniform_grid(1.0, (1.0 / cfg.dt).round() as usize);
        let market = match i % 3 {
            0 => deterministic_market(TimeFn::Constant(1.0), 1.0, &grid)?,
            1 => deterministic_market(TimeFn::Polynomial(vec![0.5, 1.0]), 1.0, &grid)?,
            _ => decaying_market(1.5, 0.3, TimeFn::Constant(1.0), 1.0, &grid)?,
        };
        let beta = [0.0, 1.0, 2.5][(i / 3) % 3];
        let lambda = [0.5, 1.0][i % 2];
        let mut model = ImpactModel::exponential(beta, lambda).with_y0(rng.random_range(-0.5..0.5));
        if i % 5 == 4 {
            model.g = PriceImpact::Additive(ImpactFn::exp(lambda));
            model.allow_no_m1_guarantee = true;
        }
        let fv = proceeds_fv(&theta, &market, &model)?.terminal();
        let general = proceeds_general(&theta, &market, &model)?.0.total;
        let semi = proceeds_semimartingale(&theta, &market, &model)?;
        let marcus = marcus_oracle(&theta, &market, &model)?.l;
        worst_marcus = worst_marcus.max((fv - marcus).abs());
        worst_general = worst_general.max((fv - general).abs() / (1.0 + fv.abs()));
        worst_semi = worst_semi.max((fv - semi).abs() / (1.0 + fv.abs()));
        table.push([i.to_string(), num(fv), num(general), num(semi), num(marcus)]);
    }
    rep.timings.push(("forms".into(), t0.elapsed().as_secs_f64()));
    rep.check(Check::at_most("fv_vs_marcus_abs", worst_marcus, cfg.marcus_tol));
    rep.check(Check::at_most("fv_vs_general_rel", worst_general, cfg.general_rel_tol));
    rep.check(Check::at_most("fv_vs_semimartingale_rel", worst_semi, cfg.semimartingale_rel_tol));
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Block-trade closed forms

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockConfig {
    pub lambda: f64,
    pub etas: Vec<f64>,
    pub tol: f64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig { lambda: 1.0, etas: vec![1.0, 0.5], tol: 1e-10 }
    }
}

/// Unit block sale at time 0 against `(1/η)(1 − e^{−λη})/λ`.
pub fn run_block_closed_form(cfg: &BlockConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("blocks", seed);
    let theta = Path::step(1.0, 1.0, &[(0.0, 0.0)])?;
    let market = deterministic_market(TimeFn::Constant(1.0), 1.0, &uniform_grid(1.0, 10))?;
    let mut table = Table::new("blocks", &["eta", "proceeds", "closed_form"]);
    for &eta in &cfg.etas {
        let model = ImpactModel::exponential(1.0, cfg.lambda).with_eta(eta);
        let l = proceeds_fv(&theta, &market, &model)?.terminal();
        let exact = -(-cfg.lambda * eta).exp_m1() / (cfg.lambda * eta);
        table.push([num(eta), num(l), num(exact)]);
        rep.check(Check::at_most(&format!("block_eta_{eta}"), (l - exact).abs(), cfg.tol));
    }
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Convergence of approximations

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyShape {
    /// Hold 1 until `jump_time`, then sell everything.
    SingleJump,
    /// Sell linearly from 1 to 0 over the horizon.
    Linear,
    Constant,
    /// Three block sales.
    Staircase,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Approximator {
    Wz,
    Grid,
    Jumpcap,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub shape: StrategyShape,
    pub jump_time: f64,
    pub approximator: Approximator,
    pub levels: Vec<usize>,
    pub market: MarketConfig,
    pub impact: ImpactConfig,
    /// Paths are embedded in `[−e, T + e]` before measuring distances.
    pub extension: f64,
    pub m1_tol: f64,
    pub monotone_tol: f64,
    pub m1_final_bound: Option<f64>,
    pub j1_floor: Option<f64>,
    pub lp_rate: bool,
    /// Requires `sup gap(last) ≤ sup gap(first) / factor`.
    pub sup_gap_factor: Option<f64>,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            shape: StrategyShape::SingleJump,
            jump_time: 0.5,
            approximator: Approximator::Wz,
            levels: vec![4, 8, 16, 32, 64],
            market: MarketConfig::default(),
            impact: ImpactConfig::default(),
            extension: 1.0,
            m1_tol: 1e-7,
            monotone_tol: 1e-6,
            m1_final_bound: Some(0.05),
            j1_floor: Some(0.25),
            lp_rate: false,
            sup_gap_factor: None,
        }
    }
}

impl ConvergenceConfig {
    /// Levy–Prokhorov study of a single block under permanent impact.
    pub fn levy_prokhorov() -> Self {
        ConvergenceConfig {
            impact: ImpactConfig { beta: 0.0, ..Default::default() },
            m1_final_bound: None,
            j1_floor: None,
            lp_rate: true,
            ..Default::default()
        }
    }

    /// Sup-norm gap of grid discretizations of a linear sale.
    pub fn discretization() -> Self {
        ConvergenceConfig {
            shape: StrategyShape::Linear,
            approximator: Approximator::Grid,
            levels: vec![8, 32, 128],
            m1_final_bound: None,
            j1_floor: None,
            sup_gap_factor: Some(8.0),
            ..Default::default()
        }
    }

    pub fn strategy(&self) -> Result<Path> {
        let h = self.market.horizon;
        match self.shape {
            StrategyShape::SingleJump => Path::step(h, 1.0, &[(self.jump_time, 0.0)]),
            StrategyShape::Linear => Path::polyline(&[(0.0, 1.0), (h, 0.0)]),
            StrategyShape::Constant => Path::constant(h, 1.0),
            StrategyShape::Staircase => Path::step(h, 1.0, &[(0.2 * h, 0.7), (0.5 * h, 0.4), (0.8 * h, 0.0)]),
        }
    }
}

/// `n`-th member of an approximating sequence.
pub fn approximate(theta: &Path, approximator: Approximator, n: usize) -> Result<Path> {
    match approximator {
        Approximator::Wz => wz_average(theta, 1.0 / n as f64),
        Approximator::Grid => grid_discretize(theta, &uniform_nodes(theta.horizon(), n)),
        Approximator::Jumpcap => jump_capped_simple(theta, n),
    }
}

/// Distances between the proceeds of approximating strategies and of the
/// target strategy along refinement levels.
pub fn run_convergence_study(cfg: &ConvergenceConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("converge", seed);
    let theta = cfg.strategy()?;
    let model = cfg.impact.model();
    let market = cfg.market.scenario(&theta, seed, 0)?;
    let target = proceeds_fv(&theta, &market, &model)?;
    let target_ext = target.extend(cfg.extension)?;
    let mut table = Table::new(
        "convergence",
        &["approximator", "level", "d_uniform", "d_j1_upper", "d_m1", "d_lp"],
    );
    let (mut ups, mut j1s, mut m1s, mut lps) = (vec![], vec![], vec![], vec![]);
    for &n in &cfg.levels {
        let t0 = Instant::now();
        let approx = approximate(&theta, cfg.approximator, n)?;
        let jumps: Vec<f64> = approx.jumps().iter().map(|p| p.t).collect();
        if market.common_jump(&jumps, 0.0).is_some() {
            return Err(Error::CommonJump(jumps[0]));
        }
        let l = proceeds_fv(&approx, &market, &model)?.extend(cfg.extension)?;
        let du = d_uniform(&l, &target_ext)?;
        let dj = d_j1_upper(&l, &target_ext, DEFAULT_WARP_GRID)?;
        let dm = d_m1(&l, &target_ext, cfg.m1_tol)?;
        let monotone = l.is_nondecreasing() && target_ext.is_nondecreasing();
        let dl = if monotone { d_levy_prokhorov(&l, &target_ext).unwrap_or(f64::NAN) } else { f64::NAN };
        rep.timings.push((format!("level_{n}"), t0.elapsed().as_secs_f64()));
        table.push([
            format!("{:?}", cfg.approximator).to_lowercase(),
            n.to_string(),
            num(du),
            num(dj),
            num(dm),
            num(dl),
        ]);
        ups.push(du);
        j1s.push(dj);
        m1s.push(dm);
        lps.push(dl);
    }
    rep.check(Check::flag("m1_decreasing", nonincreasing_within(&m1s, cfg.monotone_tol), format!("{m1s:?}")));
    if let Some(b) = cfg.m1_final_bound {
        rep.check(Check::at_most("m1_final", *m1s.last().unwrap_or(&f64::NAN), b));
    }
    if let Some(floor) = cfg.j1_floor {
        let min = j1s.iter().copied().fold(f64::INFINITY, f64::min);
        rep.check(Check::at_least("j1_stays_away", min, floor));
    }
    if cfg.lp_rate {
        let ok = lps.iter().all(|v| !v.is_nan());
        rep.check(Check::flag("lp_defined", ok, "proceeds must be monotone with equal terminals"));
        rep.check(Check::flag("lp_decreasing", ok && nonincreasing_within(&lps, cfg.monotone_tol), format!("{lps:?}")));
        let worst = cfg
            .levels
            .iter()
            .zip(&lps)
            .map(|(&n, &d)| d - 1.0 / n as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        rep.check(Check::at_most("lp_within_one_over_n", worst, 1e-6));
    }
    if let Some(factor) = cfg.sup_gap_factor {
        rep.check(Check::flag("sup_gap_decreasing", nonincreasing_within(&ups, 0.0), format!("{ups:?}")));
        let (first, last) = (ups[0], *ups.last().unwrap_or(&f64::NAN));
        rep.check(Check::at_most("sup_gap_rate", last, first / factor));
    }
    rep.summary = serde_json::json!({ "d_uniform": ups, "d_j1_upper": j1s, "d_m1": m1s, "d_lp": lps
        .iter().map(|v| if v.is_nan() { None } else { Some(*v) }).collect::<Vec<_>>() });
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Metric suite

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub pairs: usize,
    pub triples: usize,
    pub certificates: usize,
    pub tol: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { pairs: 200, triples: 100, certificates: 50, tol: 1e-6 }
    }
}

/// Ordering `d_m1 ≤ d_j1_upper ≤ d_uniform`, metric axioms and the
/// certificate bound on random inputs.
pub fn run_metric_suite(cfg: &MetricConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("metric", seed);
    let tol = cfg.tol;
    let mut table = Table::new("pairs", &["pair", "d_m1", "d_j1_upper", "d_uniform"]);
    let mut order_fail = 0;
    for i in 0..cfg.pairs {
        let mut rng = path_rng(seed, i as u64);
        let x = random_path(&mut rng, 1.0, 6)?;
        let y = random_path(&mut rng, 1.0, 6)?;
        let m = d_m1(&x, &y, tol)?;
        let j = d_j1_upper(&x, &y, DEFAULT_WARP_GRID)?;
        let u = d_uniform(&x, &y)?;
        if !(m <= j + tol && j <= u + tol) {
            order_fail += 1;
        }
        table.push([i.to_string(), num(m), num(j), num(u)]);
    }
    rep.check(Check::at_most("ordering_violations", order_fail as f64, 0.0));

    let (mut sym, mut ident, mut tri) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    for i in 0..cfg.triples {
        let mut rng = path_rng(seed ^ 0x5eed, i as u64);
        let x = random_path(&mut rng, 1.0, 6)?;
        let y = random_path(&mut rng, 1.0, 6)?;
        let z = random_path(&mut rng, 1.0, 6)?;
        let xy = d_m1(&x, &y, tol)?;
        let yx = d_m1(&y, &x, tol)?;
        let yz = d_m1(&y, &z, tol)?;
        let xz = d_m1(&x, &z, tol)?;
        sym = sym.max((xy - yx).abs());
        ident = ident.max(d_m1(&x, &x, tol)?);
        tri = tri.max(xz - xy - yz);
    }
    rep.check(Check::at_most("symmetry", sym, tol));
    rep.check(Check::at_most("identity", ident, tol));
    rep.check(Check::at_most("triangle_excess", tri, 3.0 * tol));

    let mut cert_gap = f64::NEG_INFINITY;
    let mut ctable = Table::new("certificates", &["instance", "n", "certified", "d_m1"]);
    for i in 0..cfg.certificates {
        let mut rng = path_rng(seed ^ 0xce27, i as u64);
        let x = random_step_strategy(&mut rng, 1.0, 5)?;
        let n = [4, 8, 16][i % 3];
        let cert = wz_parametric_certificate(&x, n, None)?;
        let w = wz_average(&x, 1.0 / n as f64)?;
        let m = d_m1(&x, &w, tol)?;
        cert_gap = cert_gap.max(m - cert.certified_distance);
        ctable.push([i.to_string(), n.to_string(), num(cert.certified_distance), num(m)]);
    }
    rep.check(Check::at_most("certificate_dominates", cert_gap, tol));
    rep.tables.push(table);
    rep.tables.push(ctable);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Liquidation time

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixingCase {
    pub beta: f64,
    pub sigma_hat: f64,
    pub y0_minus: f64,
    pub theta0_minus: f64,
    pub level: f64,
    pub terminal: f64,
}

impl FixingCase {
    fn params(&self) -> ImpactFixingParams {
        ImpactFixingParams {
            level: self.level,
            terminal: self.terminal,
            beta: self.beta,
            sigma_hat: self.sigma_hat,
            y0_minus: self.y0_minus,
            theta0_minus: self.theta0_minus,
            eta_max: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HittingConfig {
    pub cases: Vec<FixingCase>,
    pub paths: usize,
    pub dt: f64,
    pub lambda: f64,
    pub se_multiple: f64,
}

impl Default for HittingConfig {
    fn default() -> Self {
        let case = |beta, sigma_hat, theta0_minus, level, terminal| FixingCase {
            beta,
            sigma_hat,
            y0_minus: 0.0,
            theta0_minus,
            level,
            terminal,
        };
        HittingConfig {
            cases: vec![
                case(1.0, 0.5, 1.0, -1.0, 0.0),
                case(2.0, 0.3, 2.0, -0.5, -0.5),
                case(0.5, 1.0, 1.0, -2.0, 0.2),
            ],
            paths: 10_000,
            dt: 1e-3,
            lambda: 1.0,
            se_multiple: 3.0,
        }
    }
}

/// Mean realized liquidation time against `E[τ]`, plus the first-passage
/// density's normalization and mean by quadrature.
pub fn run_hitting_time_mc(cfg: &HittingConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("hittime", seed);
    let f = ImpactFn::exp(cfg.lambda);
    let mut table = Table::new("hitting", &["case", "expected", "mc_mean", "mc_se", "truncated", "density_mean"]);
    let mut results = Vec::new();
    for (i, case) in cfg.cases.iter().enumerate() {
        let p = case.params();
        let expected = expected_liquidation_time(&p);
        let t0 = Instant::now();
        let (tau, _, truncated) = mc_impact_fixing(&p, &f, cfg.dt, cfg.paths, seed.wrapping_add(i as u64))?;
        rep.timings.push((format!("case_{i}"), t0.elapsed().as_secs_f64()));
        let mut c = Check::at_most(&format!("case_{i}_mean_tau"), (tau.mean - expected).abs(), cfg.se_multiple * tau.se);
        c.note = format!("E[tau] = {expected}, mean = {}, se = {}", tau.mean, tau.se);
        rep.check(c);
        rep.check(Check::at_most(&format!("case_{i}_truncated"), truncated as f64, 0.0));

        let mut density_mean = f64::NAN;
        if p.sigma_hat > 0.0 {
            let (mu, x, z) = (p.beta * p.level / p.sigma_hat, p.initial_position() / p.sigma_hat, p.barrier() / p.sigma_hat);
            // The position moves as σ̂·(μt − W): flip signs to a drift towards z − x.
            let (mu, d) = if z < x { (-mu, x - z) } else { (mu, z - x) };
            let dens = |s: f64| {
                let t = s / (1.0 - s);
                hitting_time_density(mu, 0.0, d, t).unwrap_or(0.0) / ((1.0 - s) * (1.0 - s))
            };
            let mass = integrate(&dens, 1e-12, 1.0 - 1e-12, 1e-12) + prob_never_hits(mu, 0.0, d);
            density_mean = integrate(&|s: f64| s / (1.0 - s) * dens(s), 1e-12, 1.0 - 1e-12, 1e-12);
            rep.check(Check::at_most(&format!("case_{i}_density_mass"), (mass - 1.0).abs(), 1e-6));
            rep.check(Check::at_most(&format!("case_{i}_density_mean"), (density_mean - expected).abs(), 1e-6));
        }
        table.push([i.to_string(), num(expected), num(tau.mean), num(tau.se), truncated.to_string(), num(density_mean)]);
        results.push(serde_json::json!({ "target": expected, "mc_mean": tau.mean, "mc_se": tau.se }));
    }
    let mut degenerate = cfg.cases[0].params();
    degenerate.sigma_hat = 0.0;
    let (tau, _, _) = mc_impact_fixing(&degenerate, &f, cfg.dt, 4, seed)?;
    rep.check(Check::at_most("deterministic_tau", (tau.mean - expected_liquidation_time(&degenerate)).abs(), 0.0));
    rep.summary = serde_json::Value::Array(results);
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Optimal liquidation

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LiquidationMode {
    ImpactFixing,
    Monotone,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiquidateConfig {
    pub mode: LiquidationMode,
    pub beta: f64,
    pub sigma_hat: f64,
    pub lambda: f64,
    pub y0_minus: f64,
    pub theta0_minus: f64,
    pub eta_max: f64,
    pub paths: usize,
    pub dt: f64,
    pub competitors: usize,
    pub competitor_blocks: usize,
    pub budgets: Vec<f64>,
    /// Monotone mode: discount rate of `S̄ = e^{−δt}`.
    pub delta: f64,
    pub horizon: f64,
    pub grid_sizes: Vec<usize>,
}

impl Default for LiquidateConfig {
    fn default() -> Self {
        LiquidateConfig {
            mode: LiquidationMode::ImpactFixing,
            beta: 1.0,
            sigma_hat: 0.5,
            lambda: 1.0,
            y0_minus: 0.0,
            theta0_minus: 1.0,
            eta_max: 1.0,
            paths: 10_000,
            dt: 1e-3,
            competitors: 20,
            competitor_blocks: 6,
            budgets: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            delta: 0.5,
            horizon: 1.0,
            grid_sizes: vec![4, 8, 16],
        }
    }
}

/// Solves the liquidation problem selected by `cfg.mode` and checks it.
pub fn run_liquidation(cfg: &LiquidateConfig, seed: u64) -> Result<Report> {
    match cfg.mode {
        LiquidationMode::ImpactFixing => run_impact_fixing(cfg, seed),
        LiquidationMode::Monotone => run_monotone(cfg, seed),
    }
}

fn run_impact_fixing(cfg: &LiquidateConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("liquidate", seed);
    let mut spec = StochasticLiquiditySpec::exponential(cfg.beta, cfg.sigma_hat, cfg.lambda);
    spec.y0_minus = cfg.y0_minus;
    let sol = solve_impact_fixing(&spec, cfg.theta0_minus, cfg.eta_max, 1e-10)?;
    rep.check(Check::flag("eta_hat_is_budget", sol.eta_hat == cfg.eta_max, format!("eta_hat = {}", sol.eta_hat)));
    if sol.eta_hat > 0.0 {
        rep.check(Check::at_most("foc_residual", sol.foc_residual, 1e-8));
    }

    let t0 = Instant::now();
    let (_, opt, truncated) = mc_impact_fixing(&sol.params, &spec.f, cfg.dt, cfg.paths, seed)?;
    rep.timings.push(("optimum_mc".into(), t0.elapsed().as_secs_f64()));
    rep.check(Check::at_most("optimum_truncated_paths", truncated as f64, 0.0));
    rep.check(
        Check::at_most("optimum_mc_vs_closed_form", (opt.mean - sol.expected_proceeds).abs(), 3.0 * opt.se)
            .with_note(format!("mc {} ± {}, closed form {}", opt.mean, opt.se, sol.expected_proceeds)),
    );

    let mut table = Table::new("competitors", &["competitor", "blocks", "last_time", "mc_mean", "mc_se", "margin"]);
    let mut worst_margin = f64::INFINITY;
    for c in 0..cfg.competitors {
        let mut rng = path_rng(seed ^ 0xc0, c as u64);
        let t_end = cfg.eta_max * (0.25 + 0.75 * rng.random::<f64>());
        let schedule = random_block_schedule(cfg.theta0_minus, t_end, cfg.competitor_blocks, &mut rng);
        let samples: Vec<f64> = (0..cfg.paths)
            .into_par_iter()
            .map(|i| sample_block_schedule(&spec, cfg.theta0_minus, &schedule, &mut path_rng(seed, i as u64)))
            .collect();
        let s = McSummary::from_samples(&samples);
        let margin = opt.mean - (s.mean - 2.0 * s.se);
        worst_margin = worst_margin.min(margin);
        table.push([c.to_string(), schedule.len().to_string(), num(t_end), num(s.mean), num(s.se), num(margin)]);
    }
    if cfg.competitors > 0 {
        rep.check(Check::at_least("dominates_competitors", worst_margin, 0.0));
    }

    let mut btable = Table::new("budgets", &["eta_max", "eta_hat", "upsilon_hat", "ytilde_hat", "expected_proceeds"]);
    let mut values = Vec::new();
    for &b in &cfg.budgets {
        let s = solve_impact_fixing(&spec, cfg.theta0_minus, b, 1e-10)?;
        btable.push([num(b), num(s.eta_hat), num(s.upsilon_hat), num(s.ytilde_hat), num(s.expected_proceeds)]);
        values.push(s.expected_proceeds);
    }
    let rising = values.windows(2).all(|w| w[1] >= w[0]);
    rep.check(Check::flag("proceeds_nondecreasing_in_budget", rising, format!("{values:?}")));
    rep.summary = serde_json::json!({
        "eta_hat": sol.eta_hat,
        "Upsilon_hat": sol.upsilon_hat,
        "Ytilde_hat": sol.ytilde_hat,
        "expected_proceeds": sol.expected_proceeds,
        "mc_mean": opt.mean,
        "mc_se": opt.se,
    });
    rep.tables.push(table);
    rep.tables.push(btable);
    Ok(rep.finish())
}

fn run_monotone(cfg: &LiquidateConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("liquidate", seed);
    let problem = MonotoneProblem {
        f: ImpactFn::exp(cfg.lambda),
        h: ImpactModel::exponential(cfg.beta, cfg.lambda).h,
        delta: cfg.delta,
        horizon: cfg.horizon,
        theta0: cfg.theta0_minus,
        y0_minus: cfg.y0_minus,
    };
    let mut table = Table::new("monotone", &["grid_size", "proceeds", "values"]);
    let mut warm: Option<Path> = None;
    let mut values = Vec::new();
    for &k in &cfg.grid_sizes {
        let sol = optimize_monotone_finite_horizon(&problem, k, warm.as_ref(), seed)?;
        let v: Vec<String> = sol.values.iter().map(|x| num(*x)).collect();
        table.push([k.to_string(), num(sol.proceeds), v.join(" ")]);
        values.push(sol.proceeds);
        warm = Some(sol.strategy);
    }
    let nested = values.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    rep.check(Check::flag("refinement_never_decreases", nested, format!("{values:?}")));
    rep.summary = serde_json::json!({ "proceeds": values });
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// No-arbitrage mechanism

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoArbConfig {
    pub sigma: f64,
    pub impact: ImpactConfig,
    pub beta0: f64,
    pub paths: usize,
    pub dt: f64,
    pub gap_dt: f64,
    pub gap_paths: usize,
    pub gap_tol: f64,
    pub se_multiple: f64,
}

impl Default for NoArbConfig {
    fn default() -> Self {
        NoArbConfig {
            sigma: 0.3,
            impact: ImpactConfig { beta: 1.0, lambda: 0.5, ..Default::default() },
            beta0: 0.0,
            paths: 10_000,
            dt: 1e-3,
            gap_dt: 1e-4,
            gap_paths: 3,
            gap_tol: 5e-3,
            se_multiple: 3.0,
        }
    }
}

/// Deterministic bounded test strategies on `[0, 1]`.
pub fn noarb_strategies() -> Result<Vec<Path>> {
    use crate::cadlag::{Breakpoint, SegmentKind};
    let buy_then_sell = Path::new(
        1.0,
        0.0,
        vec![Breakpoint::new(0.0, 0.0, 1.0), Breakpoint::continuous(0.5, 1.0), Breakpoint::continuous(1.0, 0.0)],
        vec![SegmentKind::Constant, SegmentKind::Linear],
    )?;
    Ok(vec![
        buy_then_sell,
        Path::polyline(&[(0.0, 1.0), (1.0, 0.0)])?,
        Path::step(1.0, 0.0, &[(0.2, 0.5), (0.4, 1.0), (0.7, 0.3)])?,
    ])
}

/// Drift `ξ(t)` that makes the liquidation value a local martingale for a
/// deterministic strategy on a deterministic clock.
pub fn martingale_drift(strategy: &Path, model: &ImpactModel, alpha: &TimeFn, dt: f64) -> Result<TimeFn> {
    let h = strategy.horizon();
    let n = ((h / dt).round() as usize).max(1);
    let mut grid = uniform_grid(h, n);
    grid.extend(strategy.breakpoint_times());
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let market = deterministic_market(alpha.clone(), h, &grid)?;
    let y = crate::impact::solve_impact(strategy, model, &market.clock_path())?;
    value_drift_correction(model, 0.0, 1.0)?;
    let (s, m) = (strategy.clone(), model.clone());
    Ok(TimeFn::custom(move |t| value_drift_correction(&m, y.value_at(t), s.value_at(t)).unwrap_or(0.0)))
}

/// Mean of `V_T − V_0` under the drift-adjusted market, and the pathwise gap
/// between the direct and recursive liquidation values on a fine grid.
pub fn run_noarbitrage_mc(cfg: &NoArbConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("noarb", seed);
    let model = cfg.impact.model();
    let mut table = Table::new("noarb", &["strategy", "mc_mean", "mc_se", "max_gap"]);
    let mut results = Vec::new();
    for (k, theta) in noarb_strategies()?.iter().enumerate() {
        let alpha = TimeFn::Constant(1.0);
        let xi = martingale_drift(theta, &model, &alpha, cfg.dt.min(1e-3))?;
        let market = MarketConfig {
            driver: DriverSpec { sigma: cfg.sigma, xi, alpha, ..Default::default() },
            horizon: theta.horizon(),
            dt: cfg.dt,
        };
        let t0 = Instant::now();
        let gains: Vec<f64> = (0..cfg.paths)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let m = market.scenario(theta, seed.wrapping_add(k as u64), i as u64)?;
                let lv = liquidation_value(theta, &m, &model, cfg.beta0)?;
                Ok(lv.value_direct[lv.value_direct.len() - 1] - lv.value_direct[0])
            })
            .collect::<Result<Vec<f64>>>()?;
        rep.timings.push((format!("strategy_{k}_mc"), t0.elapsed().as_secs_f64()));
        let s = McSummary::from_samples(&gains);
        rep.check(
            Check::at_most(&format!("strategy_{k}_martingale"), s.mean.abs(), cfg.se_multiple * s.se)
                .with_note(format!("mean {} se {}", s.mean, s.se)),
        );

        let fine = MarketConfig { dt: cfg.gap_dt, ..market.clone() };
        let mut gap = 0.0f64;
        for i in 0..cfg.gap_paths {
            let m = fine.scenario(theta, seed.wrapping_add(1000 + k as u64), i as u64)?;
            gap = gap.max(liquidation_value(theta, &m, &model, cfg.beta0)?.max_gap());
        }
        rep.check(Check::at_most(&format!("strategy_{k}_value_gap"), gap, cfg.gap_tol));
        table.push([k.to_string(), num(s.mean), num(s.se), num(gap)]);
        results.push(serde_json::json!({ "mc_mean": s.mean, "mc_se": s.se, "target": 0.0, "max_gap": gap }));
    }
    rep.summary = serde_json::Value::Array(results);
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Ad-hoc proceeds pitfall

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitfallConfig {
    pub lambda: f64,
    pub delta: f64,
    pub ns: Vec<usize>,
    pub tol: f64,
}

impl Default for PitfallConfig {
    fn default() -> Self {
        PitfallConfig { lambda: 1.0, delta: 0.0, ns: vec![1, 2, 5, 10, 100], tol: 0.01 }
    }
}

/// Sells one share in `n` equal blocks at times `k/n²`, `k = 1..n`.
pub fn block_splitting(n: usize) -> Result<Path> {
    let n2 = (n * n) as f64;
    let jumps: Vec<(f64, f64)> = (1..=n).map(|k| (k as f64 / n2, 1.0 - k as f64 / n as f64)).collect();
    Path::step(1.0, 1.0, &jumps)
}

/// Proceeds that price each block at the post-trade price.
pub fn adhoc_proceeds(strategy: &Path, market: &MarketScenario, model: &ImpactModel) -> Result<f64> {
    let y = crate::impact::solve_impact(strategy, model, &market.clock_path())?;
    let sbar = market.sbar_path();
    Ok(strategy
        .jumps()
        .iter()
        .map(|p| -sbar.value_at(p.t) * model.g.g(1.0, y.value_at(p.t)) * p.jump())
        .sum())
}

/// Block splitting under post-trade pricing against the consistent value.
pub fn run_adhoc_pitfall(cfg: &PitfallConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("pitfall", seed);
    let model = ImpactModel::exponential(0.0, cfg.lambda);
    let f = ImpactFn::exp(cfg.lambda);
    let target = f.big_f_diff(-1.0, 0.0);
    let mut table = Table::new("pitfall", &["n", "adhoc", "consistent", "target"]);
    let mut last = f64::NAN;
    for &n in &cfg.ns {
        let theta = block_splitting(n)?;
        let mut grid = uniform_grid(1.0, 100);
        grid.extend(theta.breakpoint_times());
        grid.sort_by(|a, b| a.total_cmp(b));
        grid.dedup();
        let market = decaying_market(1.0, cfg.delta, TimeFn::Constant(1.0), 1.0, &grid)?;
        let adhoc = adhoc_proceeds(&theta, &market, &model)?;
        let consistent = proceeds_fv(&theta, &market, &model)?.terminal();
        table.push([n.to_string(), num(adhoc), num(consistent), num(target)]);
        if n == 1 {
            rep.check(Check::at_most("single_block_adhoc_below_target", adhoc - target, -1e-3));
            let block = Path::step(1.0, 1.0, &[(0.0, 0.0)])?;
            let c = proceeds_fv(&block, &market, &model)?.terminal();
            rep.check(Check::at_most("consistent_single_block", (c - target).abs(), 1e-12));
        }
        last = adhoc;
    }
    rep.check(Check::at_most("adhoc_limit_gap", (last - target).abs(), cfg.tol));
    rep.summary = serde_json::json!({ "target": target, "adhoc_at_largest_n": last });
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Zero-strategy law

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroConfig {
    pub dt: f64,
    pub paths_per_market: usize,
    pub position: f64,
    pub y0_minus: f64,
    pub deterministic_tol: f64,
    pub stochastic_rel_tol: f64,
}

impl Default for ZeroConfig {
    fn default() -> Self {
        ZeroConfig {
            dt: 1e-3,
            paths_per_market: 10,
            position: 1.0,
            y0_minus: 0.5,
            deterministic_tol: 1e-8,
            stochastic_rel_tol: 1e-6,
        }
    }
}

/// Markets used by the zero-strategy law: deterministic and stochastic, with
/// and without driver jumps.
pub fn market_matrix() -> Vec<(&'static str, DriverSpec)> {
    let base = DriverSpec::default();
    vec![
        ("flat", base.clone()),
        ("polynomial_clock", DriverSpec { alpha: TimeFn::Polynomial(vec![0.5, 1.0]), ..base.clone() }),
        ("drift", DriverSpec { xi: TimeFn::Constant(-0.4), ..base.clone() }),
        ("gbm", DriverSpec { sigma: 0.3, ..base.clone() }),
        ("gbm_drift", DriverSpec { sigma: 0.3, xi: TimeFn::Constant(0.2), ..base.clone() }),
        (
            "lognormal_jumps",
            DriverSpec {
                sigma: 0.3,
                jump_intensity: 3.0,
                jump_law: Some(JumpLaw::LogNormal { mu: 0.0, sigma: 0.2 }),
                ..base.clone()
            },
        ),
        (
            "uniform_jumps",
            DriverSpec { jump_intensity: 5.0, jump_law: Some(JumpLaw::Uniform { lo: -0.3, hi: 0.3 }), ..base },
        ),
    ]
}

/// Constant strategies earn nothing, on every market path.
pub fn run_zero_strategy(cfg: &ZeroConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("zero", seed);
    let mut table = Table::new("zero", &["market", "model", "path", "total", "scale"]);
    let theta = Path::constant(1.0, cfg.position)?;
    let (mut det_worst, mut sto_worst) = (0.0f64, 0.0f64);
    for (name, driver) in market_matrix() {
        let det = driver.is_deterministic();
        let mc = MarketConfig { driver, horizon: 1.0, dt: cfg.dt };
        for additive in [false, true] {
            let model = ImpactConfig { y0_minus: cfg.y0_minus, additive, ..Default::default() }.model();
            let paths = if det { 1 } else { cfg.paths_per_market };
            for i in 0..paths {
                let m = mc.scenario(&theta, seed, i as u64)?;
                let (b, _) = proceeds_general(&theta, &m, &model)?;
                let smax = m.sbar.iter().chain(&m.sbar_left).fold(0.0f64, |a, b| a.max(b.abs()));
                let scale = 1.0 + smax * (1.0 + model.g.big_g(1.0, cfg.y0_minus).abs());
                if det {
                    det_worst = det_worst.max(b.total.abs());
                } else {
                    sto_worst = sto_worst.max(b.total.abs() / scale);
                }
                table.push([
                    name.to_string(),
                    if additive { "additive" } else { "multiplicative" }.to_string(),
                    i.to_string(),
                    num(b.total),
                    num(scale),
                ]);
            }
        }
    }
    rep.check(Check::at_most("deterministic_markets", det_worst, cfg.deterministic_tol));
    rep.check(Check::at_most("stochastic_markets_scaled", sto_worst, cfg.stochastic_rel_tol));
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Single proceeds evaluation

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProceedsConfig {
    pub shape: StrategyShape,
    /// JSON strategy records; overrides `shape` when set.
    pub strategy_file: Option<PathBuf>,
    pub jump_time: f64,
    pub market: MarketConfig,
    pub impact: ImpactConfig,
    pub forms: Vec<Form>,
    pub path_index: u64,
    pub sample_points: usize,
    /// Largest relative disagreement tolerated between the requested forms.
    pub agreement_tol: f64,
}

impl Default for ProceedsConfig {
    fn default() -> Self {
        ProceedsConfig {
            shape: StrategyShape::Staircase,
            strategy_file: None,
            jump_time: 0.5,
            market: MarketConfig::default(),
            impact: ImpactConfig::default(),
            forms: vec![Form::Fv, Form::General, Form::Semimartingale, Form::Marcus],
            path_index: 0,
            sample_points: 201,
            agreement_tol: 1e-6,
        }
    }
}

impl ProceedsConfig {
    fn strategy(&self) -> Result<Path> {
        match &self.strategy_file {
            Some(p) => Path::from_json(&fs::read_to_string(p)?),
            None => ConvergenceConfig { shape: self.shape, jump_time: self.jump_time, market: self.market.clone(), ..Default::default() }
                .strategy(),
        }
    }
}

/// Evaluates the requested proceeds forms on one market path.
pub fn run_proceeds(cfg: &ProceedsConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("proceeds", seed);
    let theta = cfg.strategy()?;
    let model = cfg.impact.model();
    let market = cfg.market.scenario(&theta, seed, cfg.path_index)?;
    let grid = uniform_grid(theta.horizon(), cfg.sample_points.max(2) - 1);
    let mut header = vec!["t".to_string(), "theta".to_string(), "sbar".to_string()];
    let mut columns = vec![theta.sample(&grid), market.sbar_path().sample(&grid)];
    let mut terminals = serde_json::Map::new();
    let mut values = Vec::new();
    for &form in &cfg.forms {
        let (terminal, path) = match form {
            Form::Fv => {
                let p = proceeds_fv(&theta, &market, &model)?;
                (p.terminal(), Some(p))
            }
            Form::General => {
                let (b, p) = proceeds_general(&theta, &market, &model)?;
                (b.total, Some(p))
            }
            Form::Eta => {
                let p = proceeds_partial_recovery(&theta, &market, &model)?;
                (p.terminal(), Some(p))
            }
            Form::Semimartingale => (proceeds_semimartingale(&theta, &market, &model)?, None),
            Form::Marcus => (marcus_oracle(&theta, &market, &model)?.l, None),
        };
        let name = serde_json::to_value(form)?.as_str().unwrap_or_default().to_string();
        if let Some(p) = path {
            header.push(name.clone());
            columns.push(p.sample(&grid));
        }
        terminals.insert(name, terminal.into());
        values.push(terminal);
    }
    let mut table = Table { name: "proceeds".into(), header, rows: Vec::new() };
    for (i, t) in grid.iter().enumerate() {
        let mut row = vec![num(*t)];
        row.extend(columns.iter().map(|c| num(c[i])));
        table.rows.push(row);
    }
    let spread = values.iter().flat_map(|a| values.iter().map(move |b| (a - b).abs() / (1.0 + a.abs()))).fold(0.0, f64::max);
    rep.check(Check::at_most("forms_agree", spread, cfg.agreement_tol));
    rep.summary = serde_json::Value::Object(terminals);
    rep.tables.push(table);
    Ok(rep.finish())
}

// ---------------------------------------------------------------------------
// Approximating sequences

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApproxConfig {
    pub shape: StrategyShape,
    pub jump_time: f64,
    pub horizon: f64,
    pub approximator: Approximator,
    pub levels: Vec<usize>,
    pub sample_points: usize,
    pub m1_tol: f64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        ApproxConfig {
            shape: StrategyShape::Staircase,
            jump_time: 0.5,
            horizon: 1.0,
            approximator: Approximator::Wz,
            levels: vec![4, 8, 16, 32],
            sample_points: 401,
            m1_tol: 1e-7,
        }
    }
}

/// Builds an approximating sequence, samples it and measures each member's
/// distance to the target; Wong–Zakai levels also get a certified bound.
pub fn run_approx(cfg: &ApproxConfig, seed: u64) -> Result<Report> {
    let mut rep = Report::new("approx", seed);
    let theta = ConvergenceConfig {
        shape: cfg.shape,
        jump_time: cfg.jump_time,
        market: MarketConfig { horizon: cfg.horizon, ..Default::default() },
        ..Default::default()
    }
    .strategy()?;
    let grid = uniform_grid(cfg.horizon, cfg.sample_points.max(2) - 1);
    let mut header = vec!["t".to_string(), "target".to_string()];
    let mut columns = vec![theta.sample(&grid)];
    let mut dtable = Table::new("distances", &["level", "d_uniform", "d_m1", "certified"]);
    let mut cert_gap = f64::NEG_INFINITY;
    for &n in &cfg.levels {
        let a = approximate(&theta, cfg.approximator, n)?;
        let dm = d_m1(&a, &theta, cfg.m1_tol)?;
        let cert = if cfg.approximator == Approximator::Wz {
            let c = wz_parametric_certificate(&theta, n, None)?.certified_distance;
            cert_gap = cert_gap.max(dm - c);
            c
        } else {
            f64::NAN
        };
        dtable.push([n.to_string(), num(d_uniform(&a, &theta)?), num(dm), num(cert)]);
        header.push(format!("level_{n}"));
        columns.push(a.sample(&grid));
    }
    if cert_gap.is_finite() {
        rep.check(Check::at_most("certificate_dominates", cert_gap, cfg.m1_tol));
    }
    let mut table = Table { name: "paths".into(), header, rows: Vec::new() };
    for (i, t) in grid.iter().enumerate() {
        let mut row = vec![num(*t)];
        row.extend(columns.iter().map(|c| num(c[i])));
        table.rows.push(row);
    }
    rep.tables.push(table);
    rep.tables.push(dtable);
    Ok(rep.finish())
}

/// Runs a named experiment with its default configuration.
pub fn run_default(name: &str, seed: u64) -> Result<Report> {
    match name {
        "oracle" => run_oracle_equivalence(&OracleConfig::default(), seed),
        "blocks" => run_block_closed_form(&BlockConfig::default(), seed),
        "converge" => run_convergence_study(&ConvergenceConfig::default(), seed),
        "metric" => run_metric_suite(&MetricConfig::default(), seed),
        "hittime" => run_hitting_time_mc(&HittingConfig::default(), seed),
        "liquidate" => run_liquidation(&LiquidateConfig::default(), seed),
        "noarb" => run_noarbitrage_mc(&NoArbConfig::default(), seed),
        "pitfall" => run_adhoc_pitfall(&PitfallConfig::default(), seed),
        "zero" => run_zero_strategy(&ZeroConfig::default(), seed),
        "proceeds" => run_proceeds(&ProceedsConfig::default(), seed),
        "approx" => run_approx(&ApproxConfig::default(), seed),
        other => Err(Error::InvalidParameter(format!("unknown experiment '{other}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pitfall_defaults_pass() {
        let r = run_adhoc_pitfall(&PitfallConfig::default(), 0).unwrap();
        assert!(r.pass, "{:?}", r.lines());
    }

    #[test]
    fn blocks_default_pass() {
        assert!(run_block_closed_form(&BlockConfig::default(), 0).unwrap().pass);
    }

    #[test]
    fn constant_strategy_has_zero_distances() {
        let cfg = ConvergenceConfig {
            shape: StrategyShape::Constant,
            levels: vec![4, 8],
            m1_final_bound: None,
            j1_floor: None,
            ..Default::default()
        };
        let r = run_convergence_study(&cfg, 0).unwrap();
        for row in &r.tables[0].rows {
            for v in &row[2..5] {
                assert_eq!(v.parse::<f64>().unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn documented_schema_covers_every_config() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../../../docs/config.schema.json")).unwrap();
        let defaults = [
            ("converge", serde_json::to_value(ConvergenceConfig::default()).unwrap()),
            ("metric", serde_json::to_value(MetricConfig::default()).unwrap()),
            ("proceeds", serde_json::to_value(ProceedsConfig::default()).unwrap()),
            ("approx", serde_json::to_value(ApproxConfig::default()).unwrap()),
            ("liquidate", serde_json::to_value(LiquidateConfig::default()).unwrap()),
            ("pitfall", serde_json::to_value(PitfallConfig::default()).unwrap()),
            ("noarb", serde_json::to_value(NoArbConfig::default()).unwrap()),
            ("hittime", serde_json::to_value(HittingConfig::default()).unwrap()),
            ("oracle", serde_json::to_value(OracleConfig::default()).unwrap()),
            ("blocks", serde_json::to_value(BlockConfig::default()).unwrap()),
            ("zero", serde_json::to_value(ZeroConfig::default()).unwrap()),
        ];
        for (name, value) in defaults {
            let props = schema["$defs"][name]["properties"].as_object().unwrap();
            let keys = value.as_object().unwrap();
            assert_eq!(props.len(), keys.len(), "{name}");
            for k in keys.keys() {
                assert!(props.contains_key(k), "{name}.{k}");
            }
        }
    }

    #[test]
    fn parallel_monte_carlo_is_deterministic() {
        let cfg = LiquidateConfig { paths: 400, competitors: 3, ..Default::default() };
        let a = serde_json::to_string(&run_liquidation(&cfg, 3).unwrap()).unwrap();
        let b = serde_json::to_string(&run_liquidation(&cfg, 3).unwrap()).unwrap();
        assert_eq!(a, b);
        let cfg = NoArbConfig { paths: 64, gap_paths: 1, gap_dt: 1e-3, ..Default::default() };
        let a = serde_json::to_string(&run_noarbitrage_mc(&cfg, 3).unwrap()).unwrap();
        let b = serde_json::to_string(&run_noarbitrage_mc(&cfg, 3).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outputs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PitfallConfig::default();
        for sub in ["a", "b"] {
            let r = run_adhoc_pitfall(&cfg, 7).unwrap();
            write_run_into(&dir.path().join(sub), &cfg, &r).unwrap();
        }
        for f in ["config.json", "summary.json", "pitfall.csv"] {
            let a = fs::read(dir.path().join("a").join(f)).unwrap();
            let b = fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }
}

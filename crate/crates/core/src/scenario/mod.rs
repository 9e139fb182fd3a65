//! Scenario runs: price sweeps, tick-by-tick equilibria, quota sweeps and
//! price-ceiling sweeps, all producing a [`TimeSeries`].

mod config;
pub mod presets;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use config::{
    Allocation, CeilingMode, EquilibriumMode, LinkConfig, Mode, Party, QuotaSweepMode, ScenarioConfig, SweepMode,
    UserConfig, UserParams, WfpConfig,
};

use crate::error::{MarketError, Result};
use crate::exec::Execution;
use crate::model::{validate_scenario, SaleRecord, Settlement, Topology, UserProfile, WfpAccount};
use crate::pricing::{final_price, min_price_for_path, solve_market, user_demand, user_utility};
use crate::sharing::{settle_transaction, split_revenue, SharingParams};

/// One row of output: a single provider at a single step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Provider id, or `usage-<pct>` for ceiling runs.
    pub series: String,
    pub step: usize,
    pub users: usize,
    /// The mode's x-axis: swept price, unused quota, usage percent, or user count.
    pub level: f64,
    pub wfp_price: f64,
    /// Mean ISP price over the provider's users.
    pub isp_price: f64,
    /// Mean final price over the provider's users.
    pub final_price: f64,
    /// Total bandwidth sold.
    pub bandwidth: f64,
    pub r_total: f64,
    pub r_w: f64,
    pub r_i: f64,
    pub phi_w: f64,
    pub phi_i: f64,
    pub wfp_share: f64,
    pub isp_share: f64,
    pub mean_utility: f64,
    pub converged: bool,
}

impl StepRecord {
    pub const COLUMNS: [&'static str; 17] = [
        "series",
        "step",
        "users",
        "level",
        "wfp_price",
        "isp_price",
        "final_price",
        "bandwidth",
        "r_total",
        "r_w",
        "r_i",
        "phi_w",
        "phi_i",
        "wfp_share",
        "isp_share",
        "mean_utility",
        "converged",
    ];
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    pub name: String,
    pub records: Vec<StepRecord>,
}

impl TimeSeries {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Series names in first-appearance order.
    pub fn series_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.records {
            if !names.contains(&r.series) {
                names.push(r.series.clone());
            }
        }
        names
    }

    pub fn series(&self, name: &str) -> Vec<&StepRecord> {
        self.records.iter().filter(|r| r.series == name).collect()
    }

    pub fn by_series(&self) -> BTreeMap<String, Vec<&StepRecord>> {
        let mut out: BTreeMap<String, Vec<&StepRecord>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.series.clone()).or_default().push(r);
        }
        out
    }
}

/// Steps at which the WFP share and the ISP share swap order. Rows without
/// revenue and exact ties are skipped.
pub fn share_crossings(records: &[&StepRecord]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<bool> = None;
    for r in records {
        if r.r_total <= 0.0 || r.wfp_share == r.isp_share {
            continue;
        }
        let wfp_ahead = r.wfp_share > r.isp_share;
        if prev.is_some_and(|p| p != wfp_ahead) {
            out.push(r.step);
        }
        prev = Some(wfp_ahead);
    }
    out
}

/// First step at which the WFP share overtakes the ISP share.
pub fn crossover_index(records: &[&StepRecord]) -> Option<usize> {
    share_crossings(records).into_iter().next()
}

struct Row<'a> {
    series: String,
    step: usize,
    level: f64,
    wfp_price: f64,
    users: &'a [UserProfile],
    g: &'a [f64],
    final_prices: &'a [f64],
    x: &'a [f64],
    settlement: Settlement,
    converged: bool,
}

fn mean(v: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = v.len();
    if n == 0 {
        0.0
    } else {
        v.sum::<f64>() / n as f64
    }
}

impl Row<'_> {
    fn record(self) -> StepRecord {
        let s = self.settlement;
        let utility = mean(
            self.users
                .iter()
                .zip(self.x.iter().zip(self.final_prices))
                .map(|(u, (x, lf))| user_utility(*x, *lf, u)),
        );
        StepRecord {
            series: self.series,
            step: self.step,
            users: self.users.len(),
            level: self.level,
            wfp_price: self.wfp_price,
            isp_price: mean(self.g.iter().copied()),
            final_price: mean(self.final_prices.iter().copied()),
            bandwidth: self.x.iter().sum(),
            r_total: s.r_total,
            r_w: s.r_w,
            r_i: s.r_i,
            phi_w: s.phi_w,
            phi_i: s.phi_i,
            wfp_share: s.wfp_share_pct(),
            isp_share: s.isp_share_pct(),
            mean_utility: utility,
            converged: self.converged,
        }
    }
}

fn sales_for(wfp: &WfpAccount, users: &[UserProfile], g: &[f64], lf: &[f64], x: &[f64]) -> Vec<SaleRecord> {
    users
        .iter()
        .zip(g.iter().zip(lf.iter().zip(x)))
        .filter(|(_, (_, (_, x)))| **x > 0.0)
        .map(|(u, (g, (lf, x)))| SaleRecord {
            user: u.id.clone(),
            wfp: wfp.id.clone(),
            x: *x,
            g: *g,
            lambda: wfp.price,
            lambda_f: *lf,
        })
        .collect()
}

fn members(wfp: &WfpAccount, users: &[UserProfile]) -> Vec<UserProfile> {
    users.iter().filter(|u| u.wfp == wfp.id).cloned().collect::<Vec<_>>()
}

fn isp_prices(users: &[UserProfile], topology: &Topology) -> Result<Vec<f64>> {
    let prices = topology.prices();
    users.iter().map(|u| min_price_for_path(&u.path, &prices)).collect()
}

fn grown_users(cfg: &ScenarioConfig, extra: usize) -> Vec<UserProfile> {
    let mut users = cfg.user_profiles();
    if let Some(t) = cfg.growth_template() {
        users.extend((0..extra).map(|j| t.profile(format!("{}-g{j}", t.id))));
    }
    users
}

fn ensure_valid(cfg: &ScenarioConfig) -> Result<()> {
    let violations = validate_scenario(cfg);
    if violations.is_empty() {
        Ok(())
    } else {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        Err(MarketError::InvalidScenario(text.join("; ")))
    }
}

fn wrong_mode(expected: &'static str, cfg: &ScenarioConfig) -> MarketError {
    MarketError::WrongMode {
        expected,
        found: cfg.mode.name(),
    }
}

/// Snapshot settlement of `volume` split evenly over `users`.
#[allow(clippy::too_many_arguments)]
fn even_split_row(
    series: String,
    step: usize,
    level: f64,
    wfp: &WfpAccount,
    users: &[UserProfile],
    g: &[f64],
    volume: f64,
    params: &SharingParams,
) -> Result<StepRecord> {
    let lf: Vec<f64> = g.iter().map(|g| final_price(wfp.price, *g, wfp.rho)).collect();
    let x = if users.is_empty() {
        Vec::new()
    } else {
        vec![volume / users.len() as f64; users.len()]
    };
    let settlement = split_revenue(wfp, &sales_for(wfp, users, g, &lf, &x), params)?;
    Ok(Row {
        series,
        step,
        level,
        wfp_price: wfp.price,
        users,
        g,
        final_prices: &lf,
        x: &x,
        settlement,
        converged: true,
    }
    .record())
}

/// Raises one party's price by a fixed step and settles every provider at
/// each step. Steps are independent: every step starts from the configured
/// accounts.
pub fn run_sweep(cfg: &ScenarioConfig, exec: Execution) -> Result<TimeSeries> {
    let Mode::Sweep(mode) = &cfg.mode else {
        return Err(wrong_mode("sweep", cfg));
    };
    ensure_valid(cfg)?;
    let accounts = cfg.accounts();
    let steps: Vec<Vec<StepRecord>> = exec
        .map_range(mode.count, |k| sweep_step(cfg, mode, &accounts, k))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(TimeSeries {
        name: cfg.name.clone(),
        records: steps.into_iter().flatten().collect(),
    })
}

fn sweep_step(cfg: &ScenarioConfig, mode: &SweepMode, accounts: &[WfpAccount], k: usize) -> Result<Vec<StepRecord>> {
    let price = mode.start + k as f64 * mode.step;
    let users = grown_users(cfg, k * mode.user_growth);
    let mut topology = cfg.topology();
    if mode.swept_party == Party::Isp {
        for link in &mut topology.links {
            if mode.links.as_ref().is_none_or(|ls| ls.contains(&link.id)) {
                link.price = price;
            }
        }
    }
    let mut out = Vec::with_capacity(accounts.len());
    for account in accounts {
        let mut wfp = account.clone();
        if mode.swept_party == Party::Wfp {
            wfp.price = price;
        }
        let us = members(&wfp, &users);
        let g = isp_prices(&us, &topology)?;
        let lf: Vec<f64> = g.iter().map(|g| final_price(wfp.price, *g, wfp.rho)).collect();
        let x: Vec<f64> = match mode.allocation {
            Allocation::Equal if us.is_empty() => Vec::new(),
            Allocation::Equal => vec![wfp.sellable() / us.len() as f64; us.len()],
            Allocation::BestResponse => us.iter().zip(&lf).map(|(u, lf)| user_demand(*lf, u)).collect(),
        };
        let (settlement, _) = settle_transaction(&wfp, &sales_for(&wfp, &us, &g, &lf, &x), &cfg.sharing)?;
        out.push(
            Row {
                series: wfp.id.clone(),
                step: k,
                level: price,
                wfp_price: wfp.price,
                users: &us,
                g: &g,
                final_prices: &lf,
                x: &x,
                settlement,
                converged: true,
            }
            .record(),
        );
    }
    Ok(out)
}

/// Solves the market tick by tick. Each tick sets the subscriber loads,
/// solves link and provider prices, settles every provider and applies the
/// quota bookkeeping. Provider and link prices warm-start from the previous
/// tick. Quotas and fee caps reset at every billing-cycle boundary.
pub fn run_equilibrium(cfg: &ScenarioConfig, exec: Execution) -> Result<TimeSeries> {
    let Mode::Equilibrium(mode) = &cfg.mode else {
        return Err(wrong_mode("equilibrium", cfg));
    };
    ensure_valid(cfg)?;
    let mut series = TimeSeries::new(cfg.name.clone());
    let mut accounts = cfg.accounts();
    let mut topology = cfg.topology();

    for tick in 0..mode.ticks {
        if let Some(len) = mode.cycle_length {
            if tick > 0 && tick % len == 0 {
                accounts.iter_mut().for_each(WfpAccount::replenish);
            }
        }
        for (link, lc) in topology.links.iter_mut().zip(&cfg.links) {
            link.subscriber_load = lc.load_at(tick);
        }
        let users = grown_users(cfg, tick * mode.user_growth);
        let eq = solve_market(&topology, &accounts, &users, mode.isp_pricing, &cfg.solver, exec)?;

        for (j, (weq, idx)) in eq.wfps.iter().zip(&eq.members).enumerate() {
            let mut wfp = accounts[j].clone();
            wfp.price = weq.lambda;
            let us: Vec<UserProfile> = idx.iter().map(|&k| users[k].clone()).collect();
            let g: Vec<f64> = idx.iter().map(|&k| eq.user_isp_prices[k]).collect();
            let sales = sales_for(&wfp, &us, &g, &weq.final_prices, &weq.allocations);
            let (settlement, next) = settle_transaction(&wfp, &sales, &cfg.sharing)?;
            series.records.push(
                Row {
                    series: wfp.id.clone(),
                    step: tick,
                    level: us.len() as f64,
                    wfp_price: weq.lambda,
                    users: &us,
                    g: &g,
                    final_prices: &weq.final_prices,
                    x: &weq.allocations,
                    settlement,
                    converged: weq.converged && eq.isp_converged,
                }
                .record(),
            );
            accounts[j] = next;
        }
        for link in &mut topology.links {
            link.price = eq.link_prices[&link.id];
        }
    }
    Ok(series)
}

/// For every individual provider, settles one transaction of its
/// per-transaction cap at each remaining-quota level from full to empty.
/// Each level is a snapshot at the configured prices with no share settled
/// yet this cycle.
pub fn run_iwfp_topology(cfg: &ScenarioConfig, exec: Execution) -> Result<TimeSeries> {
    let Mode::QuotaSweep(mode) = &cfg.mode else {
        return Err(wrong_mode("quota_sweep", cfg));
    };
    ensure_valid(cfg)?;
    let users = cfg.user_profiles();
    let topology = cfg.topology();
    let accounts = cfg.accounts();
    let per_wfp: Vec<Vec<StepRecord>> = exec
        .map(&accounts, |account| -> Result<Vec<StepRecord>> {
            let us = members(account, &users);
            let g = isp_prices(&us, &topology)?;
            let volume = mode.level_volume.unwrap_or(account.per_txn_cap);
            let levels = (account.quota / volume).round() as usize;
            (0..=levels)
                .map(|k| {
                    let unused = (account.quota - k as f64 * volume).max(0.0);
                    let wfp = account.clone().with_unused(unused).with_cum_share(0.0);
                    even_split_row(
                        account.id.clone(),
                        k,
                        unused,
                        &wfp,
                        &us,
                        &g,
                        account.per_txn_cap,
                        &cfg.sharing,
                    )
                })
                .collect()
        })
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(TimeSeries {
        name: cfg.name.clone(),
        records: per_wfp.into_iter().flatten().collect(),
    })
}

/// Sweeps the provider price over a grid at several quota usage levels.
/// Usage `u` leaves `quota * (1 - u)` unused. Every point is a snapshot
/// settlement of one transaction split evenly across the provider's users.
pub fn run_iwfp_ceiling(cfg: &ScenarioConfig, exec: Execution) -> Result<TimeSeries> {
    let Mode::Ceiling(mode) = &cfg.mode else {
        return Err(wrong_mode("ceiling", cfg));
    };
    ensure_valid(cfg)?;
    let users = cfg.user_profiles();
    let topology = cfg.topology();
    let account = &cfg.accounts()[0];
    let us = members(account, &users);
    let g = isp_prices(&us, &topology)?;
    let n_prices = ((mode.price_end - mode.price_start) / mode.price_step + 1e-9).floor() as usize + 1;

    let points: Vec<(usize, usize)> = (0..mode.usage_levels.len())
        .flat_map(|u| (0..n_prices).map(move |k| (u, k)))
        .collect();
    let records = exec
        .map(&points, |&(u, k)| {
            let usage = mode.usage_levels[u];
            let mut wfp = account
                .clone()
                .with_unused(account.quota * (1.0 - usage))
                .with_cum_share(0.0);
            wfp.price = mode.price_start + k as f64 * mode.price_step;
            let series = format!("usage-{}", (usage * 100.0).round());
            even_split_row(series, k, 100.0 * usage, &wfp, &us, &g, wfp.sellable(), &cfg.sharing)
        })
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(TimeSeries {
        name: cfg.name.clone(),
        records,
    })
}

/// Runs whichever mode `cfg` declares.
pub fn run(cfg: &ScenarioConfig, exec: Execution) -> Result<TimeSeries> {
    match cfg.mode {
        Mode::Sweep(_) => run_sweep(cfg, exec),
        Mode::Equilibrium(_) => run_equilibrium(cfg, exec),
        Mode::QuotaSweep(_) => run_iwfp_topology(cfg, exec),
        Mode::Ceiling(_) => run_iwfp_ceiling(cfg, exec),
    }
}

//! User utilities, best response and the subgradient price dynamics.
//!
//! Each WFP carries one dual price on its capacity constraint and each ISP
//! link carries one dual price on its residual capacity (capacity minus the
//! load reserved for direct subscribers). Users best-respond to the final
//! price `max(lambda, g + rho)`. Prices then move against the capacity
//! slack with projected, diminishing steps `sigma0 / (1 + t)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::exec::Execution;
use crate::model::{Id, LinkState, Topology, UserProfile, WfpAccount};
use crate::TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub sigma0: f64,
    /// Convergence threshold on the largest absolute price change.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Smallest positive demand a buying user is credited with.
    pub x_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            sigma0: 10.0,
            epsilon: 1e-6,
            max_iters: 100_000,
            x_floor: 1e-6,
        }
    }
}

/// `W ln(x (1 + SNR))`.
pub fn user_bandwidth_utility(x: f64, u: &UserProfile) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(MarketError::NonPositiveBandwidth(x));
    }
    Ok(u.weight * (x * (1.0 + u.snr())).ln())
}

/// `1 - x lambda_f / m`.
pub fn user_cost_utility(x: f64, lambda_f: f64, u: &UserProfile) -> f64 {
    1.0 - x * lambda_f / u.budget
}

/// Total utility of buying `x` at `lambda_f`; a user who buys nothing scores 0.
pub fn user_utility(x: f64, lambda_f: f64, u: &UserProfile) -> f64 {
    if x > 0.0 {
        user_bandwidth_utility(x, u).unwrap_or(0.0) + user_cost_utility(x, lambda_f, u)
    } else {
        0.0
    }
}

/// Maximizer of `U_bw + U_cost` over `[x_min, x_max]`.
///
/// The objective is concave with stationary point `W m / lambda_f`; the SNR
/// factor only shifts the log.
pub fn user_best_response(lambda_f: f64, u: &UserProfile) -> f64 {
    if lambda_f <= 0.0 {
        return u.x_max;
    }
    (u.weight * u.budget / lambda_f).clamp(u.x_min, u.x_max)
}

/// Demand of a user at `lambda_f`: the best response, or nothing when the
/// minimum demand is already over budget.
pub fn user_demand(lambda_f: f64, u: &UserProfile) -> f64 {
    if u.x_min * lambda_f > u.budget * (1.0 + TOLERANCE) {
        0.0
    } else {
        user_best_response(lambda_f, u)
    }
}

/// `max(lambda, g + rho)`.
pub fn final_price(lambda: f64, g: f64, rho: f64) -> f64 {
    lambda.max(g + rho)
}

/// Diminishing step `sigma0 / (1 + t)`: tends to zero, sums to infinity.
pub fn step_size(t: usize, cfg: &SolverConfig) -> f64 {
    cfg.sigma0 / (1.0 + t as f64)
}

/// `[lambda - sigma (capacity - demand)]^+`.
pub fn wfp_price_update(lambda: f64, sigma: f64, capacity: f64, demand: f64) -> f64 {
    (lambda - sigma * (capacity - demand)).max(0.0)
}

/// `[g - sigma ((C_l - subscriber_load) - wfp_load)]^+`.
pub fn isp_link_price_update(g: f64, sigma: f64, link: &LinkState, wfp_load: f64) -> f64 {
    (g - sigma * (link.residual() - wfp_load)).max(0.0)
}

/// Sum of link prices along `path`.
pub fn min_price_for_path(path: &[Id], prices: &BTreeMap<Id, f64>) -> Result<f64> {
    path.iter()
        .map(|l| {
            prices
                .get(l)
                .copied()
                .ok_or_else(|| MarketError::UnknownLink(l.clone()))
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfpEquilibrium {
    /// WFP price at termination.
    pub lambda: f64,
    /// Per-user final price, aligned with the input users.
    pub final_prices: Vec<f64>,
    /// Per-user demand at the final prices.
    pub allocations: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the final price had to be raised to make demand fit capacity.
    pub repaired: bool,
}

impl WfpEquilibrium {
    pub fn total_demand(&self) -> f64 {
        self.allocations.iter().sum()
    }
}

fn demand_at(lambda: f64, rho: f64, users: &[UserProfile], g: &[f64], x_floor: f64) -> (Vec<f64>, Vec<f64>) {
    users
        .iter()
        .zip(g)
        .map(|(u, gs)| {
            let lf = final_price(lambda, *gs, rho);
            let d = user_demand(lf, u);
            (lf, if d > 0.0 { d.max(x_floor) } else { 0.0 })
        })
        .unzip()
}

fn total_demand(lambda: f64, rho: f64, users: &[UserProfile], g: &[f64], x_floor: f64) -> f64 {
    users
        .iter()
        .zip(g)
        .map(|(u, gs)| {
            let d = user_demand(final_price(lambda, *gs, rho), u);
            if d > 0.0 {
                d.max(x_floor)
            } else {
                0.0
            }
        })
        .sum()
}

/// Smallest price at or above `from` whose demand fits `capacity`.
/// Demand is non-increasing in the price, so bisection applies.
fn lowest_feasible_price(from: f64, capacity: f64, rho: f64, users: &[UserProfile], g: &[f64], x_floor: f64) -> f64 {
    let fits = |l: f64| total_demand(l, rho, users, g, x_floor) <= capacity;
    let mut lo = from;
    let mut hi = from.max(1.0);
    let mut doublings = 0;
    while !fits(hi) && doublings < 256 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Dual subgradient equilibrium of one WFP's market.
///
/// Users best-respond to the previous price (synchronous Jacobi update), then
/// the price takes one projected step. The loop stops when the price moves
/// by less than `epsilon`. `g_per_user[k]` is the ISP price for `users[k]`.
/// The start price is `wfp.price`.
///
/// If the final allocation overshoots capacity (for instance when the only
/// price that clears the market prices every user out), the price is raised
/// to the lowest level whose demand fits.
pub fn solve_wfp_equilibrium(
    wfp: &WfpAccount,
    users: &[UserProfile],
    g_per_user: &[f64],
    cfg: &SolverConfig,
) -> WfpEquilibrium {
    assert_eq!(users.len(), g_per_user.len(), "one ISP price per user");
    let capacity = wfp.sellable();
    if users.is_empty() {
        return WfpEquilibrium {
            lambda: 0.0,
            final_prices: Vec::new(),
            allocations: Vec::new(),
            iterations: 0,
            converged: true,
            repaired: false,
        };
    }
    if capacity <= 0.0 {
        let final_prices = g_per_user.iter().map(|g| final_price(wfp.price, *g, wfp.rho)).collect();
        return WfpEquilibrium {
            lambda: wfp.price,
            final_prices,
            allocations: vec![0.0; users.len()],
            iterations: 0,
            converged: true,
            repaired: false,
        };
    }

    let mut lambda = wfp.price.max(0.0);
    let mut converged = false;
    let mut iterations = 0;
    for t in 0..cfg.max_iters {
        let demand = total_demand(lambda, wfp.rho, users, g_per_user, cfg.x_floor);
        let next = wfp_price_update(lambda, step_size(t, cfg), capacity, demand);
        iterations = t + 1;
        let delta = (next - lambda).abs();
        lambda = next;
        if delta < cfg.epsilon {
            converged = true;
            break;
        }
    }

    let mut repaired = false;
    let demand = total_demand(lambda, wfp.rho, users, g_per_user, cfg.x_floor);
    if demand > capacity * (1.0 + 1e-6) + TOLERANCE {
        lambda = lowest_feasible_price(lambda, capacity, wfp.rho, users, g_per_user, cfg.x_floor);
        repaired = true;
    }
    let (final_prices, allocations) = demand_at(lambda, wfp.rho, users, g_per_user, cfg.x_floor);
    WfpEquilibrium {
        lambda,
        final_prices,
        allocations,
        iterations,
        converged,
        repaired,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IspEquilibrium {
    pub prices: BTreeMap<Id, f64>,
    /// WFP load per link at the final prices.
    pub loads: BTreeMap<Id, f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fixed point of the link price updates, all links moving together.
///
/// `wfp_demand` maps link prices to the WFP load on each link; links it
/// leaves out carry no WFP load. Start prices come from `topology`.
pub fn solve_isp_prices<F>(topology: &Topology, mut wfp_demand: F, cfg: &SolverConfig) -> IspEquilibrium
where
    F: FnMut(&BTreeMap<Id, f64>) -> BTreeMap<Id, f64>,
{
    let mut prices = topology.prices();
    let mut converged = topology.links.is_empty();
    let mut iterations = 0;
    if !converged {
        for t in 0..cfg.max_iters {
            let loads = wfp_demand(&prices);
            let sigma = step_size(t, cfg);
            let mut max_delta = 0.0f64;
            for link in &topology.links {
                let load = loads.get(&link.id).copied().unwrap_or(0.0);
                let g = prices[&link.id];
                let next = isp_link_price_update(g, sigma, link, load);
                max_delta = max_delta.max((next - g).abs());
                prices.insert(link.id.clone(), next);
            }
            iterations = t + 1;
            if max_delta < cfg.epsilon {
                converged = true;
                break;
            }
        }
    }
    let loads = wfp_demand(&prices);
    IspEquilibrium {
        prices,
        loads,
        iterations,
        converged,
    }
}

/// How link prices are obtained when solving a whole market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IspPricing {
    /// Outer subgradient loop on every link.
    #[default]
    Dynamic,
    /// Link prices stay at their configured values.
    Fixed,
}

/// Joint result of the ISP and WFP price loops.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub link_prices: BTreeMap<Id, f64>,
    /// ISP price per user, aligned with the input users.
    pub user_isp_prices: Vec<f64>,
    /// One entry per WFP, users in input order.
    pub wfps: Vec<WfpEquilibrium>,
    /// Indices into the input users, grouped per WFP.
    pub members: Vec<Vec<usize>>,
    pub isp_iterations: usize,
    pub isp_converged: bool,
}

impl EquilibriumResult {
    pub fn converged(&self) -> bool {
        self.isp_converged && self.wfps.iter().all(|w| w.converged)
    }

    /// Allocation of every user, in input order.
    pub fn allocations(&self, n_users: usize) -> Vec<f64> {
        let mut x = vec![0.0; n_users];
        for (eq, idx) in self.wfps.iter().zip(&self.members) {
            for (k, &u) in idx.iter().enumerate() {
                x[u] = eq.allocations[k];
            }
        }
        x
    }
}

fn group_members(wfps: &[WfpAccount], users: &[UserProfile]) -> Vec<Vec<usize>> {
    wfps.iter()
        .map(|w| {
            users
                .iter()
                .enumerate()
                .filter(|(_, u)| u.wfp == w.id)
                .map(|(k, _)| k)
                .collect()
        })
        .collect()
}

fn solve_inner(
    wfps: &[WfpAccount],
    users: &[UserProfile],
    members: &[Vec<usize>],
    g: &[f64],
    cfg: &SolverConfig,
    exec: Execution,
) -> Vec<WfpEquilibrium> {
    let jobs: Vec<(&WfpAccount, &Vec<usize>)> = wfps.iter().zip(members).collect();
    exec.map(&jobs, |(w, idx)| {
        let us: Vec<UserProfile> = idx.iter().map(|&k| users[k].clone()).collect();
        let gs: Vec<f64> = idx.iter().map(|&k| g[k]).collect();
        solve_wfp_equilibrium(w, &us, &gs, cfg)
    })
}

fn link_loads(users: &[UserProfile], x: &[f64]) -> BTreeMap<Id, f64> {
    let mut loads = BTreeMap::new();
    for (u, xs) in users.iter().zip(x) {
        for l in &u.path {
            *loads.entry(l.clone()).or_insert(0.0) += xs;
        }
    }
    loads
}

/// Solves link prices in an outer loop and every WFP's market in an inner
/// loop against the current per-user ISP prices. Inner solves are
/// warm-started from the previous outer iteration.
pub fn solve_market(
    topology: &Topology,
    wfps: &[WfpAccount],
    users: &[UserProfile],
    isp: IspPricing,
    cfg: &SolverConfig,
    exec: Execution,
) -> Result<EquilibriumResult> {
    let members = group_members(wfps, users);
    let user_prices = |prices: &BTreeMap<Id, f64>| -> Result<Vec<f64>> {
        users.iter().map(|u| min_price_for_path(&u.path, prices)).collect()
    };
    // Surface unknown links before entering the loops.
    user_prices(&topology.prices())?;

    let (link_prices, isp_iterations, isp_converged) = match isp {
        IspPricing::Fixed => (topology.prices(), 0, true),
        IspPricing::Dynamic => {
            let mut warm: Vec<WfpAccount> = wfps.to_vec();
            let eq = solve_isp_prices(
                topology,
                |prices| {
                    let g = user_prices(prices).unwrap_or_else(|_| vec![0.0; users.len()]);
                    let inner = solve_inner(&warm, users, &members, &g, cfg, exec);
                    let mut x = vec![0.0; users.len()];
                    for ((eq, idx), w) in inner.iter().zip(&members).zip(warm.iter_mut()) {
                        w.price = eq.lambda;
                        for (k, &u) in idx.iter().enumerate() {
                            x[u] = eq.allocations[k];
                        }
                    }
                    link_loads(users, &x)
                },
                cfg,
            );
            (eq.prices, eq.iterations, eq.converged)
        }
    };

    let g = user_prices(&link_prices)?;
    let inner = solve_inner(wfps, users, &members, &g, cfg, exec);
    Ok(EquilibriumResult {
        link_prices,
        user_isp_prices: g,
        wfps: inner,
        members,
        isp_iterations,
        isp_converged,
    })
}

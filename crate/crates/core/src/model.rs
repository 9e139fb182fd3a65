//! Domain types shared by every other module, plus scenario validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::pricing::final_price;
use crate::scenario::{Mode, ScenarioConfig};

pub type Id = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WfpKind {
    /// Mall, cafe or airport reselling a flat-fee unlimited line.
    Establishment,
    /// Subscriber reselling unused data-plan quota.
    Individual,
}

/// Whether bandwidth figures are rates (MB/s) or volumes (MB).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthUnit {
    #[default]
    Rate,
    Volume,
}

/// Radio and budget parameters of one buyer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: Id,
    pub wfp: Id,
    pub path: Vec<Id>,
    /// Utility weight on bandwidth.
    pub weight: f64,
    /// Transmit power in watts.
    pub power: f64,
    /// Squared channel gain magnitude.
    pub channel_gain_sq: f64,
    /// Gaussian noise variance in watts.
    pub noise_var: f64,
    /// Frequency band in hertz.
    pub band: f64,
    pub budget: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl UserProfile {
    /// Signal-to-noise term `P |c|^2 / (noise * B)`.
    pub fn snr(&self) -> f64 {
        self.power * self.channel_gain_sq / (self.noise_var * self.band)
    }
}

/// One Wi-Fi provider and its billing state.
///
/// Establishment accounts use `capacity`. Individual accounts use `quota`,
/// `unused`, `fee`, `cum_share` and `per_txn_cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfpAccount {
    pub id: Id,
    pub kind: WfpKind,
    pub capacity: f64,
    pub quota: f64,
    pub unused: f64,
    /// Minimum profit per unit over the ISP price.
    pub rho: f64,
    /// Monthly subscription fee, caps the settled share per billing cycle.
    pub fee: f64,
    /// Settled WFP share so far in the current billing cycle.
    pub cum_share: f64,
    pub per_txn_cap: f64,
    /// Current WFP price (the dual variable of its capacity constraint).
    pub price: f64,
}

impl WfpAccount {
    pub fn establishment(id: impl Into<Id>, capacity: f64, rho: f64, price: f64) -> Self {
        Self {
            id: id.into(),
            kind: WfpKind::Establishment,
            capacity,
            quota: 0.0,
            unused: 0.0,
            rho,
            fee: 0.0,
            cum_share: 0.0,
            per_txn_cap: 0.0,
            price,
        }
    }

    /// A fresh individual account at the start of a billing cycle.
    pub fn individual(id: impl Into<Id>, quota: f64, per_txn_cap: f64, fee: f64, rho: f64, price: f64) -> Self {
        Self {
            id: id.into(),
            kind: WfpKind::Individual,
            capacity: 0.0,
            quota,
            unused: quota,
            rho,
            fee,
            cum_share: 0.0,
            per_txn_cap,
            price,
        }
    }

    pub fn with_unused(mut self, unused: f64) -> Self {
        self.unused = unused;
        self
    }

    pub fn with_cum_share(mut self, cum_share: f64) -> Self {
        self.cum_share = cum_share;
        self
    }

    pub fn is_individual(&self) -> bool {
        self.kind == WfpKind::Individual
    }

    /// Bandwidth the provider can sell right now.
    pub fn sellable(&self) -> f64 {
        match self.kind {
            WfpKind::Establishment => self.capacity,
            WfpKind::Individual => self.per_txn_cap.min(self.unused).max(0.0),
        }
    }

    /// Unused-quota fraction `unused / quota`; zero for establishments.
    pub fn unused_fraction(&self) -> f64 {
        match self.kind {
            WfpKind::Individual if self.quota > 0.0 => (self.unused / self.quota).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }

    /// Share the account may still receive this cycle before hitting the fee cap.
    pub fn headroom(&self) -> f64 {
        (self.fee - self.cum_share).max(0.0)
    }

    /// Starts a new billing cycle.
    pub fn replenish(&mut self) {
        if self.is_individual() {
            self.unused = self.quota;
            self.cum_share = 0.0;
        }
    }
}

/// A directed ISP link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub id: Id,
    #[serde(default)]
    pub from: Id,
    #[serde(default)]
    pub to: Id,
    pub capacity: f64,
    /// Bandwidth reserved for the ISP's direct subscribers.
    #[serde(default)]
    pub subscriber_load: f64,
    /// Minimum price per unit on this link.
    #[serde(default)]
    pub price: f64,
}

impl LinkState {
    pub fn residual(&self) -> f64 {
        self.capacity - self.subscriber_load
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<Id>,
    pub links: Vec<LinkState>,
}

impl Topology {
    pub fn prices(&self) -> BTreeMap<Id, f64> {
        self.links.iter().map(|l| (l.id.clone(), l.price)).collect()
    }

    pub fn link(&self, id: &str) -> Option<&LinkState> {
        self.links.iter().find(|l| l.id == id)
    }
}

/// One user's transaction with a WFP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaleRecord {
    pub user: Id,
    pub wfp: Id,
    pub x: f64,
    /// ISP minimum price for this user's path.
    pub g: f64,
    /// WFP price.
    pub lambda: f64,
    /// Price the user pays.
    pub lambda_f: f64,
}

impl SaleRecord {
    /// Builds a sale whose final price is `max(lambda, g + rho)`.
    pub fn new(user: impl Into<Id>, wfp: impl Into<Id>, x: f64, lambda: f64, g: f64, rho: f64) -> Self {
        Self {
            user: user.into(),
            wfp: wfp.into(),
            x,
            g,
            lambda,
            lambda_f: final_price(lambda, g, rho),
        }
    }

    /// A sale at a known final price, with the WFP price equal to it.
    pub fn priced(user: impl Into<Id>, wfp: impl Into<Id>, x: f64, g: f64, lambda_f: f64) -> Self {
        Self {
            user: user.into(),
            wfp: wfp.into(),
            x,
            g,
            lambda: lambda_f,
            lambda_f,
        }
    }
}

/// Outcome of splitting one batch of revenue between a WFP and the ISP.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Settlement {
    pub phi_w: f64,
    pub phi_i: f64,
    pub r_total: f64,
    pub r_w: f64,
    pub r_i: f64,
}

impl Settlement {
    /// WFP share in percent, or zero when there was no revenue.
    pub fn wfp_share_pct(&self) -> f64 {
        if self.r_total > 0.0 {
            100.0 * self.phi_w / self.r_total
        } else {
            0.0
        }
    }

    pub fn isp_share_pct(&self) -> f64 {
        if self.r_total > 0.0 {
            100.0 * self.phi_i / self.r_total
        } else {
            0.0
        }
    }
}

/// A broken invariant found by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl Violation {
    fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// Lists every invariant the scenario breaks. Empty means the scenario is valid.
// `!(v > 0.0)` also rejects NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn validate_scenario(cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut bad = |subject: String, message: String| out.push(Violation::new(subject, message));

    let nodes: BTreeSet<&str> = cfg.nodes.iter().map(String::as_str).collect();
    if nodes.len() != cfg.nodes.len() {
        bad("nodes".into(), "duplicate node id".into());
    }

    let mut link_ids = BTreeSet::new();
    for l in &cfg.links {
        let s = format!("link {}", l.id);
        if !link_ids.insert(l.id.as_str()) {
            bad(s.clone(), "duplicate link id".into());
        }
        for end in [&l.from, &l.to] {
            if !end.is_empty() && !nodes.contains(end.as_str()) {
                bad(s.clone(), format!("endpoint {end} is not a declared node"));
            }
        }
        if !(l.capacity > 0.0) {
            bad(s.clone(), format!("capacity must be positive, got {}", l.capacity));
        }
        if l.subscriber_load < 0.0 {
            bad(s.clone(), "subscriber_load must be non-negative".into());
        }
        if l.subscriber_load > l.capacity + crate::TOLERANCE {
            bad(
                s.clone(),
                format!("subscriber_load {} exceeds capacity {}", l.subscriber_load, l.capacity),
            );
        }
        for (t, load) in l.load_schedule.iter().enumerate() {
            if *load < 0.0 || *load > l.capacity + crate::TOLERANCE {
                bad(
                    s.clone(),
                    format!("scheduled load {load} at tick {t} is outside [0, capacity]"),
                );
            }
        }
        if l.price < 0.0 {
            bad(s.clone(), "price must be non-negative".into());
        }
    }

    let mut wfp_ids = BTreeSet::new();
    for w in &cfg.wfps {
        let s = format!("wfp {}", w.id);
        if !wfp_ids.insert(w.id.as_str()) {
            bad(s.clone(), "duplicate wfp id".into());
        }
        if w.rho < 0.0 {
            bad(s.clone(), "rho must be non-negative".into());
        }
        if w.price < 0.0 {
            bad(s.clone(), "price must be non-negative".into());
        }
        match w.kind {
            WfpKind::Establishment => {
                if !(w.capacity > 0.0) {
                    bad(s.clone(), "establishment capacity must be positive".into());
                }
            }
            WfpKind::Individual => {
                if !(w.quota > 0.0) {
                    bad(s.clone(), "quota must be positive".into());
                }
                let unused = w.unused.unwrap_or(w.quota);
                if unused < 0.0 || unused > w.quota + crate::TOLERANCE {
                    bad(s.clone(), format!("unused {unused} is outside [0, quota]"));
                }
                if w.fee < 0.0 {
                    bad(s.clone(), "fee must be non-negative".into());
                }
                if w.cum_share < 0.0 || w.cum_share > w.fee + crate::TOLERANCE {
                    bad(s.clone(), "cum_share must lie in [0, fee]".into());
                }
                if !(w.per_txn_cap.unwrap_or(w.quota) > 0.0) {
                    bad(s.clone(), "per_txn_cap must be positive".into());
                }
            }
        }
    }

    let mut user_ids = BTreeSet::new();
    for u in &cfg.users {
        let s = format!("user {}", u.id);
        if !user_ids.insert(u.id.as_str()) {
            bad(s.clone(), "duplicate user id".into());
        }
        if u.count == 0 {
            bad(s.clone(), "count must be at least 1".into());
        }
        if !wfp_ids.contains(u.wfp.as_str()) {
            bad(s.clone(), format!("references unknown wfp {}", u.wfp));
        }
        for l in &u.path {
            if !link_ids.contains(l.as_str()) {
                bad(s.clone(), format!("path references unknown link {l}"));
            }
        }
        let p = &u.params;
        if !(p.weight > 0.0) {
            bad(s.clone(), "weight must be positive".into());
        }
        if !(p.power > 0.0) {
            bad(s.clone(), "power must be positive".into());
        }
        if p.channel_gain_sq < 0.0 {
            bad(s.clone(), "channel_gain_sq must be non-negative".into());
        }
        if !(p.noise_var > 0.0) {
            bad(s.clone(), "noise_var must be positive".into());
        }
        if !(p.band > 0.0) {
            bad(s.clone(), "band must be positive".into());
        }
        if !(p.budget > 0.0) {
            bad(s.clone(), "budget must be positive".into());
        }
        if !(p.x_min > 0.0) {
            bad(s.clone(), "x_min must be positive".into());
        }
        if p.x_max < p.x_min {
            bad(s.clone(), "x_max must be at least x_min".into());
        }
    }

    let sv = &cfg.solver;
    if !(sv.sigma0 > 0.0) {
        bad("solver".into(), "sigma0 must be positive".into());
    }
    if !(sv.epsilon > 0.0) {
        bad("solver".into(), "epsilon must be positive".into());
    }
    if sv.max_iters == 0 {
        bad("solver".into(), "max_iters must be positive".into());
    }
    if !(sv.x_floor > 0.0) {
        bad("solver".into(), "x_floor must be positive".into());
    }
    if !(cfg.sharing.alpha > 0.0) {
        bad("sharing".into(), "alpha must be positive".into());
    }
    if !(cfg.sharing.beta > 1.0) {
        bad("sharing".into(), "beta must exceed 1".into());
    }

    match &cfg.mode {
        Mode::Sweep(m) => {
            if m.count == 0 {
                bad("mode".into(), "sweep count must be at least 1".into());
            }
            if !(m.step > 0.0) {
                bad("mode".into(), "sweep step must be positive".into());
            }
            if m.start < 0.0 {
                bad("mode".into(), "sweep start must be non-negative".into());
            }
            for l in m.links.iter().flatten() {
                if !link_ids.contains(l.as_str()) {
                    bad("mode".into(), format!("swept link {l} does not exist"));
                }
            }
        }
        Mode::Equilibrium(m) => {
            if m.cycle_length == Some(0) {
                bad("mode".into(), "cycle_length must be positive".into());
            }
        }
        Mode::QuotaSweep(m) => {
            if let Some(v) = m.level_volume {
                if !(v > 0.0) {
                    bad("mode".into(), "level_volume must be positive".into());
                }
            }
            if cfg.wfps.iter().any(|w| w.kind != WfpKind::Individual) {
                bad("mode".into(), "quota sweeps need individual providers".into());
            }
        }
        Mode::Ceiling(m) => {
            if m.usage_levels.is_empty() {
                bad("mode".into(), "at least one usage level is required".into());
            }
            if m.usage_levels.iter().any(|u| !(0.0..=1.0).contains(u)) {
                bad("mode".into(), "usage levels must lie in [0, 1]".into());
            }
            if !(m.price_step > 0.0) || m.price_end < m.price_start || m.price_start < 0.0 {
                bad("mode".into(), "price range must be non-negative and increasing".into());
            }
            if cfg.wfps.iter().any(|w| w.kind != WfpKind::Individual) {
                bad("mode".into(), "ceiling sweeps need individual providers".into());
            }
        }
    }

    out
}

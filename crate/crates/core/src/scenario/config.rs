use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::model::{BandwidthUnit, Id, LinkState, Topology, UserProfile, WfpAccount, WfpKind};
use crate::pricing::{IspPricing, SolverConfig};
use crate::sharing::SharingParams;

/// A complete scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub unit: BandwidthUnit,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub nodes: Vec<Id>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    pub wfps: Vec<WfpConfig>,
    #[serde(default)]
    pub users: Vec<UserConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sharing: SharingParams,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub id: Id,
    #[serde(default)]
    pub from: Id,
    #[serde(default)]
    pub to: Id,
    pub capacity: f64,
    #[serde(default)]
    pub subscriber_load: f64,
    /// Per-tick subscriber loads for equilibrium runs; the last entry holds
    /// for the remaining ticks.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub load_schedule: Vec<f64>,
    #[serde(default)]
    pub price: f64,
}

impl LinkConfig {
    pub fn state(&self) -> LinkState {
        LinkState {
            id: self.id.clone(),
            from: self.from.clone(),
            to: self.to.clone(),
            capacity: self.capacity,
            subscriber_load: self.subscriber_load,
            price: self.price,
        }
    }

    pub fn load_at(&self, tick: usize) -> f64 {
        match self.load_schedule.len() {
            0 => self.subscriber_load,
            n => self.load_schedule[tick.min(n - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WfpConfig {
    pub id: Id,
    pub kind: WfpKind,
    #[serde(default)]
    pub capacity: f64,
    #[serde(default)]
    pub quota: f64,
    /// Defaults to the full quota.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unused: Option<f64>,
    #[serde(default)]
    pub rho: f64,
    #[serde(default)]
    pub fee: f64,
    #[serde(default)]
    pub cum_share: f64,
    /// Defaults to the full quota.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_txn_cap: Option<f64>,
    /// Initial WFP price.
    #[serde(default)]
    pub price: f64,
}

impl WfpConfig {
    pub fn account(&self) -> WfpAccount {
        match self.kind {
            WfpKind::Establishment => WfpAccount::establishment(self.id.clone(), self.capacity, self.rho, self.price),
            WfpKind::Individual => WfpAccount::individual(
                self.id.clone(),
                self.quota,
                self.per_txn_cap.unwrap_or(self.quota),
                self.fee,
                self.rho,
                self.price,
            )
            .with_unused(self.unused.unwrap_or(self.quota))
            .with_cum_share(self.cum_share),
        }
    }
}

fn one() -> usize {
    1
}

/// Radio and budget parameters; defaults give an SNR term of 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UserParams {
    pub weight: f64,
    pub power: f64,
    pub channel_gain_sq: f64,
    pub noise_var: f64,
    pub band: f64,
    pub budget: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Default for UserParams {
    fn default() -> Self {
        Self {
            weight: 1.0,
            power: 0.1,
            channel_gain_sq: 1.0,
            noise_var: 1e-9,
            band: 2e7,
            budget: 100.0,
            x_min: 0.01,
            x_max: 50.0,
        }
    }
}

/// A user entry; `count > 1` expands into identical users `id-0`, `id-1`, ...
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserConfig {
    pub id: Id,
    #[serde(default = "one")]
    pub count: usize,
    pub wfp: Id,
    #[serde(default)]
    pub path: Vec<Id>,
    #[serde(flatten)]
    pub params: UserParams,
}

impl UserConfig {
    pub fn profile(&self, id: Id) -> UserProfile {
        let p = &self.params;
        UserProfile {
            id,
            wfp: self.wfp.clone(),
            path: self.path.clone(),
            weight: p.weight,
            power: p.power,
            channel_gain_sq: p.channel_gain_sq,
            noise_var: p.noise_var,
            band: p.band,
            budget: p.budget,
            x_min: p.x_min,
            x_max: p.x_max,
        }
    }

    fn expand(&self) -> Vec<UserProfile> {
        if self.count == 1 {
            vec![self.profile(self.id.clone())]
        } else {
            (0..self.count)
                .map(|k| self.profile(format!("{}-{k}", self.id)))
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Isp,
    Wfp,
}

/// How users take bandwidth in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Sellable bandwidth split evenly across the provider's users.
    #[default]
    Equal,
    /// Each user best-responds to its final price.
    BestResponse,
}

fn unit_step() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMode {
    pub swept_party: Party,
    pub start: f64,
    #[serde(default = "unit_step")]
    pub step: f64,
    pub count: usize,
    /// Users cloned from the last user entry at every step.
    #[serde(default)]
    pub user_growth: usize,
    #[serde(default)]
    pub allocation: Allocation,
    /// Links whose price an ISP sweep sets; all links when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub links: Option<Vec<Id>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMode {
    pub ticks: usize,
    /// Users cloned from the last user entry after every tick.
    #[serde(default)]
    pub user_growth: usize,
    #[serde(default)]
    pub isp_pricing: IspPricing,
    /// Ticks per billing cycle; quotas replenish at each boundary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaSweepMode {
    /// Quota volume per level; defaults to each provider's per-transaction cap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_volume: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeilingMode {
    /// Used fractions of the quota, e.g. `[0, 0.25, 0.5, 0.75]`.
    pub usage_levels: Vec<f64>,
    pub price_start: f64,
    pub price_end: f64,
    #[serde(default = "unit_step")]
    pub price_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Mode {
    Sweep(SweepMode),
    Equilibrium(EquilibriumMode),
    QuotaSweep(QuotaSweepMode),
    Ceiling(CeilingMode),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Sweep(_) => "sweep",
            Mode::Equilibrium(_) => "equilibrium",
            Mode::QuotaSweep(_) => "quota_sweep",
            Mode::Ceiling(_) => "ceiling",
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MarketError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario configs always serialize")
    }

    pub fn topology(&self) -> Topology {
        Topology {
            nodes: self.nodes.clone(),
            links: self.links.iter().map(LinkConfig::state).collect(),
        }
    }

    pub fn accounts(&self) -> Vec<WfpAccount> {
        self.wfps.iter().map(WfpConfig::account).collect()
    }

    /// Users with `count` entries expanded.
    pub fn user_profiles(&self) -> Vec<UserProfile> {
        self.users.iter().flat_map(UserConfig::expand).collect()
    }

    /// Template for users added by growth.
    pub fn growth_template(&self) -> Option<&UserConfig> {
        self.users.last()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

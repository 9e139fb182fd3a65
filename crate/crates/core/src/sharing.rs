//! Two-player Shapley settlement between a Wi-Fi provider and its ISP.
//!
//! The grand coalition earns everything users pay. The ISP on its own earns
//! what it charges for carrying the traffic. The WFP's standalone value
//! depends on its kind: establishments are credited with their price spread
//! discounted by the ISP's cost level, and individuals get a concave,
//! usage-weighted share of the spread that stops once the settled shares
//! reach the monthly fee.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MarketError, Result};
use crate::model::{SaleRecord, Settlement, WfpAccount, WfpKind};
use crate::TOLERANCE;

/// Coalition revenues `R({w,i})`, `R({w})` and `R({i})`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CoalitionValues {
    pub r_total: f64,
    pub r_w: f64,
    pub r_i: f64,
}

/// How the ISP cost level in the establishment denominator is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostBasis {
    /// Bandwidth-weighted mean ISP price per unit, `sum(x g) / sum(x)`.
    #[default]
    PerUnit,
    /// Plain sum of the per-user ISP prices.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharingParams {
    /// Scale inside the individual-provider log.
    pub alpha: f64,
    /// Floor of the establishment denominator, must exceed 1.
    pub beta: f64,
    pub cost_basis: CostBasis,
}

impl Default for SharingParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.5,
            cost_basis: CostBasis::PerUnit,
        }
    }
}

/// `R({w,i})`: sum of `x * lambda_f`.
pub fn total_revenue(sales: &[SaleRecord]) -> f64 {
    sales.iter().map(|s| s.x * s.lambda_f).sum()
}

/// `R({i})`: sum of `x * g`.
pub fn isp_standalone_revenue(sales: &[SaleRecord]) -> f64 {
    sales.iter().map(|s| s.x * s.g).sum()
}

fn check_price_floor(sales: &[SaleRecord]) -> Result<()> {
    match sales.iter().find(|s| s.lambda_f < s.g - TOLERANCE) {
        Some(s) => Err(MarketError::PriceBelowIspFloor {
            user: s.user.clone(),
            lambda_f: s.lambda_f,
            g: s.g,
        }),
        None => Ok(()),
    }
}

/// ISP cost level of a batch of sales under `basis`.
pub fn isp_cost_level(sales: &[SaleRecord], basis: CostBasis) -> f64 {
    match basis {
        CostBasis::Sum => sales.iter().map(|s| s.g).sum(),
        CostBasis::PerUnit => {
            let volume: f64 = sales.iter().map(|s| s.x).sum();
            if volume > 0.0 {
                isp_standalone_revenue(sales) / volume
            } else {
                0.0
            }
        }
    }
}

/// Establishment contribution `sum((lambda_f - g) x) / max(ln g_w, beta)`.
pub fn ewfp_contribution(sales: &[SaleRecord], params: &SharingParams) -> Result<f64> {
    check_price_floor(sales)?;
    if sales.is_empty() {
        return Ok(0.0);
    }
    let spread: f64 = sales.iter().map(|s| (s.lambda_f - s.g).max(0.0) * s.x).sum();
    if spread <= 0.0 {
        return Ok(0.0);
    }
    let g_w = isp_cost_level(sales, params.cost_basis);
    // ln(0) = -inf, so the beta floor covers a free ISP as well.
    let denom = g_w.ln().max(params.beta);
    Ok(spread / denom)
}

/// Individual contribution `omega * ln(alpha (r_total - r_i))`, clamped to
/// `[0, r_total - r_i]`, and zero once the cycle's settled shares reach the fee.
pub fn iwfp_contribution(r_total: f64, r_i: f64, account: &WfpAccount, params: &SharingParams) -> Result<f64> {
    if account.kind != WfpKind::Individual {
        return Err(MarketError::NotIndividual(account.id.clone()));
    }
    if r_i > r_total + TOLERANCE {
        return Err(MarketError::IspRevenueExceedsTotal { r_total, r_i });
    }
    if account.cum_share >= account.fee {
        return Ok(0.0);
    }
    let margin = r_total - r_i;
    if margin <= TOLERANCE {
        return Ok(0.0);
    }
    let omega = account.unused_fraction();
    let raw = omega * (params.alpha * margin).ln();
    Ok(raw.clamp(0.0, margin))
}

/// Closed-form two-player Shapley value.
pub fn shapley_split(values: CoalitionValues) -> Settlement {
    let CoalitionValues { r_total, r_w, r_i } = values;
    Settlement {
        phi_w: 0.5 * r_w + 0.5 * (r_total - r_i),
        phi_i: 0.5 * r_i + 0.5 * (r_total - r_w),
        r_total,
        r_w,
        r_i,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Player {
    Wfp,
    Isp,
}

impl Player {
    pub const ALL: [Player; 2] = [Player::Wfp, Player::Isp];

    fn bit(self) -> u8 {
        match self {
            Player::Wfp => 0b01,
            Player::Isp => 0b10,
        }
    }
}

/// A subset of `{w, i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Coalition(u8);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);
    pub const WFP: Coalition = Coalition(0b01);
    pub const ISP: Coalition = Coalition(0b10);
    pub const GRAND: Coalition = Coalition(0b11);

    pub fn with(self, p: Player) -> Coalition {
        Coalition(self.0 | p.bit())
    }

    pub fn contains(self, p: Player) -> bool {
        self.0 & p.bit() != 0
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = Player::ALL
            .iter()
            .filter(|p| self.contains(**p))
            .map(|p| match p {
                Player::Wfp => "w",
                Player::Isp => "i",
            })
            .collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

/// Characteristic function over the subsets of `{w, i}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CharacteristicFn {
    values: BTreeMap<Coalition, f64>,
}

impl CharacteristicFn {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, c: Coalition, v: f64) -> Self {
        self.values.insert(c, v);
        self
    }

    pub fn get(&self, c: Coalition) -> Result<f64> {
        self.values
            .get(&c)
            .copied()
            .ok_or_else(|| MarketError::MissingCoalition(c.to_string()))
    }

    /// The game induced by a set of coalition revenues, with `v(empty) = 0`.
    pub fn from_values(v: CoalitionValues) -> Self {
        Self::new()
            .set(Coalition::EMPTY, 0.0)
            .set(Coalition::WFP, v.r_w)
            .set(Coalition::ISP, v.r_i)
            .set(Coalition::GRAND, v.r_total)
    }

    /// Pointwise sum of two games over the coalitions both define.
    pub fn sum(&self, other: &Self) -> Self {
        let values = self
            .values
            .iter()
            .filter_map(|(c, a)| other.values.get(c).map(|b| (*c, a + b)))
            .collect();
        Self { values }
    }
}

fn permutations(players: &[Player]) -> Vec<Vec<Player>> {
    if players.len() <= 1 {
        return vec![players.to_vec()];
    }
    let mut out = Vec::new();
    for (i, first) in players.iter().enumerate() {
        let mut rest = players.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, *first);
            out.push(tail);
        }
    }
    out
}

/// Shapley value by averaging marginal contributions over every ordering of
/// the players. Returns `(phi_w, phi_i)`.
pub fn shapley_permutation(v: &CharacteristicFn) -> Result<(f64, f64)> {
    let orderings = permutations(&Player::ALL);
    let mut phi = [0.0f64; 2];
    for order in &orderings {
        let mut preceding = Coalition::EMPTY;
        for p in order {
            let joined = preceding.with(*p);
            let delta = v.get(joined)? - v.get(preceding)?;
            phi[*p as usize] += delta;
            preceding = joined;
        }
    }
    let n = orderings.len() as f64;
    Ok((phi[Player::Wfp as usize] / n, phi[Player::Isp as usize] / n))
}

/// Splits the revenue of one batch of sales for `wfp` without touching its
/// account.
///
/// A zero WFP contribution hands the whole revenue to the ISP. For
/// individual providers the WFP share is truncated at the remaining fee
/// headroom and the excess goes to the ISP.
pub fn split_revenue(wfp: &WfpAccount, sales: &[SaleRecord], params: &SharingParams) -> Result<Settlement> {
    if let Some(s) = sales.iter().find(|s| s.wfp != wfp.id) {
        return Err(MarketError::ForeignSale {
            user: s.user.clone(),
            sale_wfp: s.wfp.clone(),
            wfp: wfp.id.clone(),
        });
    }
    check_price_floor(sales)?;
    if sales.is_empty() {
        return Ok(Settlement::default());
    }

    let r_total = total_revenue(sales);
    let r_i = isp_standalone_revenue(sales);
    let r_w = match wfp.kind {
        WfpKind::Establishment => ewfp_contribution(sales, params)?,
        WfpKind::Individual => iwfp_contribution(r_total, r_i, wfp, params)?,
    };
    let r_w = r_w.min(r_total - r_i).max(0.0);

    let mut settlement = if r_w <= 0.0 {
        Settlement {
            phi_w: 0.0,
            phi_i: r_total,
            r_total,
            r_w: 0.0,
            r_i: r_total,
        }
    } else {
        shapley_split(CoalitionValues { r_total, r_w, r_i })
    };

    if wfp.kind == WfpKind::Individual {
        let headroom = wfp.headroom();
        if settlement.phi_w > headroom {
            settlement.phi_i += settlement.phi_w - headroom;
            settlement.phi_w = headroom;
        }
    }
    Ok(settlement)
}

/// Settles one batch of sales and returns the split together with the
/// account after billing-cycle bookkeeping: individual providers give up the
/// sold volume and accumulate the WFP share.
pub fn settle_transaction(
    wfp: &WfpAccount,
    sales: &[SaleRecord],
    params: &SharingParams,
) -> Result<(Settlement, WfpAccount)> {
    let sold: f64 = sales.iter().map(|s| s.x).sum();
    if wfp.kind == WfpKind::Individual && sold > wfp.unused + TOLERANCE {
        return Err(MarketError::QuotaExceeded {
            wfp: wfp.id.clone(),
            sold,
            unused: wfp.unused,
        });
    }
    let settlement = split_revenue(wfp, sales, params)?;
    let mut account = wfp.clone();
    if wfp.kind == WfpKind::Individual && !sales.is_empty() {
        account.cum_share = (account.cum_share + settlement.phi_w).min(account.fee);
        account.unused = (account.unused - sold).max(0.0);
    }
    Ok((settlement, account))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sale(x: f64, lambda_f: f64, g: f64) -> SaleRecord {
        SaleRecord::priced("u", "w", x, g, lambda_f)
    }

    fn params() -> SharingParams {
        SharingParams::default()
    }

    #[test]
    fn total_revenue_examples() {
        assert_eq!(total_revenue(&[sale(10.0, 31.0, 30.0)]), 310.0);
        assert_eq!(total_revenue(&[]), 0.0);
        assert_eq!(total_revenue(&[sale(2.0, 5.0, 0.0), sale(3.0, 8.0, 0.0)]), 34.0);
    }

    #[test]
    fn isp_revenue_examples() {
        assert_eq!(isp_standalone_revenue(&[sale(10.0, 31.0, 30.0)]), 300.0);
        assert_eq!(isp_standalone_revenue(&[]), 0.0);
        assert_eq!(
            isp_standalone_revenue(&[sale(2.0, 5.0, 3.0), sale(1.0, 5.0, 4.0)]),
            10.0
        );
    }

    #[test]
    fn ewfp_contribution_examples() {
        let r = ewfp_contribution(&[sale(1.0, 15.0, 10.0)], &params()).unwrap();
        // 5 / ln(10), evaluated independently.
        assert_abs_diff_eq!(r, 2.171_472_409_516_259, epsilon = 1e-12);
        assert_eq!(ewfp_contribution(&[sale(1.0, 10.0, 10.0)], &params()).unwrap(), 0.0);
        // ln 2 < 1.5, so the beta floor binds: 12 / 1.5.
        let r = ewfp_contribution(&[sale(2.0, 8.0, 2.0)], &params()).unwrap();
        assert_abs_diff_eq!(r, 8.0, epsilon = 1e-12);
        assert_eq!(ewfp_contribution(&[], &params()).unwrap(), 0.0);
    }

    #[test]
    fn ewfp_rejects_price_below_isp() {
        let err = ewfp_contribution(&[sale(1.0, 9.0, 10.0)], &params()).unwrap_err();
        assert!(matches!(err, MarketError::PriceBelowIspFloor { .. }));
    }

    #[test]
    fn cost_basis_sum_uses_plain_sum() {
        let p = SharingParams {
            cost_basis: CostBasis::Sum,
            ..params()
        };
        let sales = [sale(1.0, 15.0, 10.0), sale(1.0, 15.0, 10.0)];
        let r = ewfp_contribution(&sales, &p).unwrap();
        assert_abs_diff_eq!(r, 10.0 / 20f64.ln(), epsilon = 1e-12);
        let r = ewfp_contribution(&sales, &params()).unwrap();
        assert_abs_diff_eq!(r, 10.0 / 10f64.ln(), epsilon = 1e-12);
    }

    fn iwfp(unused: f64, cum: f64) -> WfpAccount {
        WfpAccount::individual("w", 200.0, 10.0, 50.0, 0.0, 0.0)
            .with_unused(unused)
            .with_cum_share(cum)
    }

    #[test]
    fn iwfp_contribution_examples() {
        let r = iwfp_contribution(10.0, 6.0, &iwfp(200.0, 0.0), &params()).unwrap();
        assert_abs_diff_eq!(r, 4f64.ln(), epsilon = 1e-12);
        assert_eq!(
            iwfp_contribution(10.0, 6.0, &iwfp(200.0, 50.0), &params()).unwrap(),
            0.0
        );
        assert_eq!(iwfp_contribution(10.0, 6.0, &iwfp(0.0, 0.0), &params()).unwrap(), 0.0);
        // alpha * margin <= 1 gives a non-positive log, clamped to zero.
        assert_eq!(iwfp_contribution(10.0, 9.5, &iwfp(200.0, 0.0), &params()).unwrap(), 0.0);
        assert_eq!(
            iwfp_contribution(10.0, 10.0, &iwfp(200.0, 0.0), &params()).unwrap(),
            0.0
        );
    }

    #[test]
    fn iwfp_contribution_errors() {
        assert!(matches!(
            iwfp_contribution(5.0, 6.0, &iwfp(200.0, 0.0), &params()),
            Err(MarketError::IspRevenueExceedsTotal { .. })
        ));
        let e = WfpAccount::establishment("e", 10.0, 5.0, 0.0);
        assert!(matches!(
            iwfp_contribution(10.0, 6.0, &e, &params()),
            Err(MarketError::NotIndividual(_))
        ));
    }

    #[test]
    fn shapley_split_examples() {
        let s = shapley_split(CoalitionValues {
            r_total: 10.0,
            r_w: 4.0,
            r_i: 6.0,
        });
        assert_eq!((s.phi_w, s.phi_i), (4.0, 6.0));
        let s = shapley_split(CoalitionValues {
            r_total: 10.0,
            r_w: 5.0,
            r_i: 5.0,
        });
        assert_eq!((s.phi_w, s.phi_i), (5.0, 5.0));
        let s = shapley_split(CoalitionValues {
            r_total: 7.5,
            r_w: 0.0,
            r_i: 7.5,
        });
        assert_eq!((s.phi_w, s.phi_i), (0.0, 7.5));
    }

    #[test]
    fn shapley_permutation_examples() {
        let v = CharacteristicFn::new()
            .set(Coalition::EMPTY, 0.0)
            .set(Coalition::WFP, 4.0)
            .set(Coalition::ISP, 6.0)
            .set(Coalition::GRAND, 10.0);
        assert_eq!(shapley_permutation(&v).unwrap(), (4.0, 6.0));

        let v = CharacteristicFn::from_values(CoalitionValues {
            r_total: 9.0,
            r_w: 3.0,
            r_i: 3.0,
        });
        let (w, i) = shapley_permutation(&v).unwrap();
        assert_eq!(w, i);

        let v = CharacteristicFn::from_values(CoalitionValues {
            r_total: 6.0,
            r_w: 0.0,
            r_i: 6.0,
        });
        assert_eq!(shapley_permutation(&v).unwrap().0, 0.0);
    }

    #[test]
    fn shapley_permutation_missing_subset() {
        let v = CharacteristicFn::new()
            .set(Coalition::EMPTY, 0.0)
            .set(Coalition::WFP, 4.0)
            .set(Coalition::GRAND, 10.0);
        assert_eq!(
            shapley_permutation(&v),
            Err(MarketError::MissingCoalition("{i}".into()))
        );
    }

    #[test]
    fn settle_establishment_example() {
        let e = WfpAccount::establishment("w", 10.0, 5.0, 0.0);
        let (s, after) = settle_transaction(&e, &[sale(1.0, 15.0, 10.0)], &params()).unwrap();
        let r_w = 5.0 / 10f64.ln();
        assert_abs_diff_eq!(s.r_w, r_w, epsilon = 1e-12);
        assert_eq!((s.r_i, s.r_total), (10.0, 15.0));
        assert_abs_diff_eq!(s.phi_w, 0.5 * r_w + 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi_w, 3.5857, epsilon = 1e-4);
        assert_abs_diff_eq!(s.phi_i, 11.4142, epsilon = 1e-4);
        assert_eq!(after, e);
    }

    #[test]
    fn settle_individual_at_cap_goes_to_isp() {
        let a = iwfp(200.0, 50.0);
        let (s, after) = settle_transaction(&a, &[sale(10.0, 26.0, 3.0)], &params()).unwrap();
        assert_eq!((s.phi_w, s.phi_i), (0.0, 260.0));
        assert_eq!(after.unused, 190.0);
        assert_eq!(after.cum_share, 50.0);
    }

    #[test]
    fn settle_empty_sales() {
        let a = iwfp(200.0, 0.0);
        let (s, after) = settle_transaction(&a, &[], &params()).unwrap();
        assert_eq!((s.phi_w, s.phi_i), (0.0, 0.0));
        assert_eq!(after, a);
    }

    #[test]
    fn settle_truncates_at_fee_headroom() {
        let a = iwfp(200.0, 45.0);
        let (s, after) = settle_transaction(&a, &[sale(10.0, 26.0, 3.0)], &params()).unwrap();
        assert_abs_diff_eq!(s.phi_w, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.phi_w + s.phi_i, s.r_total, epsilon = 1e-9);
        assert_abs_diff_eq!(after.cum_share, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn settle_rejects_bad_input() {
        let a = iwfp(5.0, 0.0);
        assert!(matches!(
            settle_transaction(&a, &[sale(10.0, 26.0, 3.0)], &params()),
            Err(MarketError::QuotaExceeded { .. })
        ));
        let foreign = SaleRecord::priced("u", "other", 1.0, 1.0, 2.0);
        assert!(matches!(
            settle_transaction(&a, &[foreign], &params()),
            Err(MarketError::ForeignSale { .. })
        ));
    }
}

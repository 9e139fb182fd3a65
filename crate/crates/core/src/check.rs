//! Randomized property suites for the settlement and pricing math.
//!
//! Every case draws from its own ChaCha stream keyed by the seed, the suite
//! and the case index, so results do not depend on the execution mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::Execution;
use crate::model::{SaleRecord, Settlement, UserProfile, WfpAccount};
use crate::pricing::{user_best_response, user_utility};
use crate::sharing::{
    ewfp_contribution, settle_transaction, shapley_permutation, shapley_split, split_revenue, CharacteristicFn,
    Coalition, CoalitionValues, CostBasis, SharingParams,
};

/// Absolute tolerance of the algebraic identities.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Grid spacing of the best-response search.
pub const GRID_STEP: f64 = 1e-4;
/// Allowed distance between the closed-form and grid argmax.
pub const ARGMAX_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckConfig {
    pub seed: u64,
    /// Cases for the cheap algebraic suites.
    pub cases: usize,
    /// Cases for the quota sweeps and grid searches.
    pub heavy_cases: usize,
    pub mutation: Option<Mutation>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            cases: 10_000,
            heavy_cases: 1_000,
            mutation: None,
        }
    }
}

impl CheckConfig {
    /// `cases` for the cheap suites and a tenth of that for the heavy ones.
    pub fn scaled(seed: u64, cases: usize) -> Self {
        Self {
            seed,
            cases,
            heavy_cases: (cases / 10).max(1),
            mutation: None,
        }
    }
}

/// Deliberate faults used to confirm the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Weighs the WFP's standalone value by 1/3 instead of 1/2.
    HalfToThird,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    /// Description of the first failing case.
    pub example: Option<String>,
}

impl PropertyOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn rng(seed: u64, suite: u64, case: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ suite.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    r.set_stream(case as u64);
    r
}

fn collect(name: &'static str, results: Vec<Option<String>>) -> PropertyOutcome {
    let cases = results.len();
    let mut failures = results.into_iter().flatten();
    let example = failures.next();
    PropertyOutcome {
        name,
        cases,
        failures: example.iter().count() + failures.count(),
        example,
    }
}

fn suite<F>(name: &'static str, tag: u64, cases: usize, cfg: &CheckConfig, exec: Execution, f: F) -> PropertyOutcome
where
    F: Fn(&mut ChaCha8Rng) -> Option<String> + Sync + Send,
{
    let seed = cfg.seed;
    collect(name, exec.map_range(cases, |k| f(&mut rng(seed, tag, k))))
}

fn split_with(mutation: Option<Mutation>, v: CoalitionValues) -> Settlement {
    match mutation {
        None => shapley_split(v),
        Some(Mutation::HalfToThird) => {
            let mut s = shapley_split(v);
            s.phi_w = v.r_w / 3.0 + 0.5 * (v.r_total - v.r_i);
            s
        }
    }
}

/// Random coalition values with `r_w + r_i <= r_total`.
pub fn random_values(r: &mut impl Rng) -> CoalitionValues {
    let r_total = r.gen_range(0.0..1000.0);
    let r_i = r.gen_range(0.0..=r_total);
    let r_w = r.gen_range(0.0..=(r_total - r_i));
    CoalitionValues { r_total, r_w, r_i }
}

fn random_game(r: &mut impl Rng) -> CharacteristicFn {
    CharacteristicFn::new()
        .set(Coalition::EMPTY, 0.0)
        .set(Coalition::WFP, r.gen_range(0.0..500.0))
        .set(Coalition::ISP, r.gen_range(0.0..500.0))
        .set(Coalition::GRAND, r.gen_range(0.0..1000.0))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= IDENTITY_TOL
}

pub fn efficiency(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    let mutation = cfg.mutation;
    suite("efficiency", 1, cfg.cases, cfg, exec, move |r| {
        let v = random_values(r);
        let s = split_with(mutation, v);
        (!close(s.phi_w + s.phi_i, v.r_total))
            .then(|| format!("{v:?}: phi_w + phi_i = {} != {}", s.phi_w + s.phi_i, v.r_total))
    })
}

pub fn oracle_equivalence(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    let mutation = cfg.mutation;
    suite("oracle equivalence", 2, cfg.cases, cfg, exec, move |r| {
        let v = random_values(r);
        let s = split_with(mutation, v);
        let (w, i) = shapley_permutation(&CharacteristicFn::from_values(v)).expect("complete game");
        (!(close(s.phi_w, w) && close(s.phi_i, i)))
            .then(|| format!("{v:?}: split ({}, {}) vs permutation ({w}, {i})", s.phi_w, s.phi_i))
    })
}

pub fn symmetry(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    let mutation = cfg.mutation;
    suite("symmetry", 3, cfg.cases, cfg, exec, move |r| {
        let r_total = r.gen_range(0.0..1000.0);
        let single = r.gen_range(0.0..=r_total / 2.0);
        let v = CoalitionValues {
            r_total,
            r_w: single,
            r_i: single,
        };
        let s = split_with(mutation, v);
        let (w, i) = shapley_permutation(&CharacteristicFn::from_values(v)).expect("complete game");
        (!(close(s.phi_w, s.phi_i) && close(w, i))).then(|| format!("{v:?}: ({}, {})", s.phi_w, s.phi_i))
    })
}

/// A WFP that adds nothing gets nothing, both in the game and in settlement.
pub fn dummy_player(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    let params = SharingParams::default();
    suite("dummy player", 4, cfg.cases, cfg, exec, move |r| {
        let r_i = r.gen_range(0.0..1000.0);
        let game = CharacteristicFn::new()
            .set(Coalition::EMPTY, 0.0)
            .set(Coalition::WFP, 0.0)
            .set(Coalition::ISP, r_i)
            .set(Coalition::GRAND, r_i);
        let (w, _) = shapley_permutation(&game).expect("complete game");

        // Zero price spread makes the establishment's contribution vanish.
        let n = r.gen_range(1..6);
        let sales: Vec<SaleRecord> = (0..n)
            .map(|k| {
                let g = r.gen_range(0.0..100.0);
                SaleRecord::priced(format!("u{k}"), "w", r.gen_range(0.0..20.0), g, g)
            })
            .collect();
        let wfp = WfpAccount::establishment("w", 100.0, 0.0, 0.0);
        let (s, _) = settle_transaction(&wfp, &sales, &params).expect("valid sales");
        (!(w.abs() <= IDENTITY_TOL && s.phi_w == 0.0 && close(s.phi_i, s.r_total)))
            .then(|| format!("r_i={r_i}: permutation phi_w={w}, settled {s:?}"))
    })
}

/// `phi_w` rises with `r_w`, and `phi_i` with `r_i`.
pub fn monotonicity(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    let mutation = cfg.mutation;
    suite("monotonicity", 5, cfg.cases, cfg, exec, move |r| {
        let v = random_values(r);
        let room = v.r_total - v.r_i - v.r_w;
        let more_w = CoalitionValues {
            r_w: v.r_w + r.gen_range(0.0..=room).max(1e-6),
            ..v
        };
        let more_i = CoalitionValues {
            r_i: v.r_i + r.gen_range(0.0..=room).max(1e-6),
            ..v
        };
        let base = split_with(mutation, v);
        let ok = split_with(mutation, more_w).phi_w > base.phi_w && split_with(mutation, more_i).phi_i > base.phi_i;
        (!ok).then(|| format!("{v:?}"))
    })
}

pub fn additivity(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    suite("additivity", 6, cfg.cases, cfg, exec, |r| {
        let (a, b) = (random_game(r), random_game(r));
        let (aw, ai) = shapley_permutation(&a).expect("complete game");
        let (bw, bi) = shapley_permutation(&b).expect("complete game");
        let (sw, si) = shapley_permutation(&a.sum(&b)).expect("complete game");
        (!(close(sw, aw + bw) && close(si, ai + bi))).then(|| format!("({sw}, {si}) vs ({}, {})", aw + bw, ai + bi))
    })
}

/// Random establishment sales with `lambda_f >= g`.
pub fn random_ewfp_sales(r: &mut impl Rng) -> Vec<SaleRecord> {
    let n = r.gen_range(1..9);
    (0..n)
        .map(|k| {
            let g = r.gen_range(0.0..100.0);
            let lf = g + r.gen_range(0.0..100.0);
            SaleRecord::priced(format!("u{k}"), "w", r.gen_range(0.0..20.0), g, lf)
        })
        .collect()
}

/// The ISP's share covers its standalone revenue.
pub fn theorem_cost_cover(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    suite("isp covers cost", 7, cfg.cases, cfg, exec, |r| {
        let sales = random_ewfp_sales(r);
        let params = SharingParams {
            alpha: 1.0,
            beta: r.gen_range(1.0001..5.0),
            cost_basis: if r.gen_bool(0.5) {
                CostBasis::PerUnit
            } else {
                CostBasis::Sum
            },
        };
        let wfp = WfpAccount::establishment("w", 100.0, 0.0, 0.0);
        let (s, _) = settle_transaction(&wfp, &sales, &params).expect("valid sales");
        (s.phi_i < s.r_i - IDENTITY_TOL || s.phi_i < crate::sharing::isp_standalone_revenue(&sales) - IDENTITY_TOL)
            .then(|| format!("phi_i={} below cost in {s:?}", s.phi_i))
    })
}

/// Unused quota levels `quota * k / steps` for `k = steps..=0`.
pub fn quota_levels(quota: f64, steps: usize) -> Vec<f64> {
    (0..=steps).rev().map(|k| quota * k as f64 / steps as f64).collect()
}

/// An individual provider's share shrinks as its quota runs out and is zero
/// once nothing is left.
pub fn theorem_usage_decay(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    suite("share decays with usage", 8, cfg.heavy_cases, cfg, exec, |r| {
        let quota = r.gen_range(10.0..500.0);
        let fee = r.gen_range(1.0..1000.0);
        let wfp = WfpAccount::individual("w", quota, quota, fee, 0.0, 0.0).with_cum_share(r.gen_range(0.0..fee));
        let params = SharingParams {
            alpha: r.gen_range(0.1..5.0),
            ..SharingParams::default()
        };
        let sales: Vec<SaleRecord> = (0..r.gen_range(1..4))
            .map(|k| {
                let g = r.gen_range(0.0..50.0);
                SaleRecord::priced(
                    format!("u{k}"),
                    "w",
                    r.gen_range(0.1..quota / 20.0),
                    g,
                    g + r.gen_range(0.0..100.0),
                )
            })
            .collect();
        let mut prev = f64::INFINITY;
        for unused in quota_levels(quota, 20) {
            let s = split_revenue(&wfp.clone().with_unused(unused), &sales, &params).expect("valid sales");
            if s.phi_w > prev + IDENTITY_TOL {
                return Some(format!("phi_w rose to {} at unused {unused}", s.phi_w));
            }
            prev = s.phi_w;
        }
        (prev != 0.0).then(|| format!("phi_w={prev} at unused 0"))
    })
}

/// Holding spreads and volumes fixed, a pricier ISP lowers the establishment's value.
pub fn ewfp_cost_monotone(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    suite(
        "establishment value falls with isp cost",
        9,
        cfg.cases,
        cfg,
        exec,
        |r| {
            let sales = random_ewfp_sales(r);
            let bump = r.gen_range(0.0..50.0);
            let shifted: Vec<SaleRecord> = sales
                .iter()
                .map(|s| SaleRecord::priced(s.user.clone(), "w", s.x, s.g + bump, s.lambda_f + bump))
                .collect();
            let params = SharingParams::default();
            let a = ewfp_contribution(&sales, &params).expect("valid sales");
            let b = ewfp_contribution(&shifted, &params).expect("valid sales");
            (b > a + IDENTITY_TOL).then(|| format!("{a} -> {b} after raising g by {bump}"))
        },
    )
}

/// Random buyer with an SNR term between 0.5 and 50.
pub fn random_profile(r: &mut impl Rng) -> UserProfile {
    let x_min = r.gen_range(0.01..1.0);
    UserProfile {
        id: "u".into(),
        wfp: "w".into(),
        path: vec![],
        weight: r.gen_range(0.1..5.0),
        power: r.gen_range(0.05..5.0),
        channel_gain_sq: 1.0,
        noise_var: 1e-9,
        band: 1e8,
        budget: r.gen_range(1.0..200.0),
        x_min,
        x_max: x_min + r.gen_range(0.5..10.0),
    }
}

/// Grid argmax of the user utility over `[x_min, x_max]` and whether the
/// second differences along the grid are all non-positive.
pub fn grid_search(lambda_f: f64, u: &UserProfile) -> (f64, bool) {
    let n = ((u.x_max - u.x_min) / GRID_STEP).floor() as usize;
    let f = |k: usize| {
        let x = u.x_min + k as f64 * GRID_STEP;
        (x, user_utility(x, lambda_f, u))
    };
    let (mut best_x, mut best) = f(0);
    let (mut prev2, mut prev1) = (f64::NAN, best);
    let mut concave = true;
    for k in 1..=n {
        let (x, v) = f(k);
        if v > best {
            best = v;
            best_x = x;
        }
        if !prev2.is_nan() && prev2 - 2.0 * prev1 + v > 1e-12 * (1.0 + v.abs()) {
            concave = false;
        }
        prev2 = prev1;
        prev1 = v;
    }
    (best_x, concave)
}

pub fn best_response_grid(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    suite("best response matches grid", 10, cfg.heavy_cases, cfg, exec, |r| {
        let u = random_profile(r);
        let lf = r.gen_range(0.5..100.0);
        let x = user_best_response(lf, &u);
        let (grid_x, concave) = grid_search(lf, &u);
        if (x - grid_x).abs() > ARGMAX_TOL {
            Some(format!("lambda_f={lf}: closed form {x}, grid {grid_x}"))
        } else if !concave {
            Some(format!("lambda_f={lf}: positive second difference"))
        } else {
            None
        }
    })
}

/// Cumulative settled share never passes the fee and every transaction,
/// truncated or not, still splits exactly.
pub fn fee_cap(cfg: &CheckConfig, exec: Execution) -> PropertyOutcome {
    suite("monthly fee cap", 11, cfg.heavy_cases, cfg, exec, |r| {
        let quota = 200.0;
        let fee = r.gen_range(1.0..300.0);
        let mut wfp = WfpAccount::individual("w", quota, 10.0, fee, 0.0, 0.0);
        let g = r.gen_range(0.0..10.0);
        let lf = g + r.gen_range(1.0..100.0);
        let params = SharingParams::default();
        while wfp.sellable() > 0.0 {
            let sale = SaleRecord::priced("u", "w", wfp.sellable(), g, lf);
            let (s, next) = settle_transaction(&wfp, &[sale], &params).expect("valid sale");
            if !close(s.phi_w + s.phi_i, s.r_total) || next.cum_share > fee + IDENTITY_TOL || s.phi_w < 0.0 {
                return Some(format!("fee {fee}: {s:?}, cum_share {}", next.cum_share));
            }
            wfp = next;
        }
        None
    })
}

/// Every suite, in report order.
pub fn run_all(cfg: &CheckConfig, exec: Execution) -> Vec<PropertyOutcome> {
    vec![
        efficiency(cfg, exec),
        symmetry(cfg, exec),
        dummy_player(cfg, exec),
        monotonicity(cfg, exec),
        additivity(cfg, exec),
        oracle_equivalence(cfg, exec),
        theorem_cost_cover(cfg, exec),
        theorem_usage_decay(cfg, exec),
        ewfp_cost_monotone(cfg, exec),
        best_response_grid(cfg, exec),
        fee_cap(cfg, exec),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CheckConfig {
        CheckConfig {
            seed: 7,
            cases: 300,
            heavy_cases: 20,
            mutation: None,
        }
    }

    #[test]
    fn suites_pass_on_correct_code() {
        for o in run_all(&small(), Execution::Sequential) {
            assert!(o.passed(), "{}: {:?}", o.name, o.example);
        }
    }

    #[test]
    fn mutation_breaks_efficiency() {
        let cfg = CheckConfig {
            mutation: Some(Mutation::HalfToThird),
            ..small()
        };
        let o = efficiency(&cfg, Execution::Sequential);
        assert!(!o.passed());
        assert!(o.example.is_some());
    }

    #[test]
    fn execution_modes_agree() {
        let cfg = small();
        assert_eq!(run_all(&cfg, Execution::Sequential), run_all(&cfg, Execution::Parallel));
    }
}

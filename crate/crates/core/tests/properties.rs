use proptest::prelude::*;

use wfp_market::model::{SaleRecord, UserProfile, WfpAccount};
use wfp_market::pricing::{final_price, user_best_response, user_demand, wfp_price_update};
use wfp_market::sharing::{settle_transaction, shapley_split, CoalitionValues, SharingParams};

fn sale_strategy() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0..20.0f64, 0.0..100.0f64, 0.0..100.0f64)
}

fn profile(weight: f64, budget: f64, x_min: f64, width: f64) -> UserProfile {
    UserProfile {
        id: "u".into(),
        wfp: "w".into(),
        path: vec![],
        weight,
        power: 0.1,
        channel_gain_sq: 1.0,
        noise_var: 1e-9,
        band: 2e7,
        budget,
        x_min,
        x_max: x_min + width,
    }
}

proptest! {
    #[test]
    fn sale_records_respect_the_isp_floor(lambda in 0.0..500.0f64, g in 0.0..500.0f64, rho in 0.0..50.0f64) {
        let s = SaleRecord::new("u", "w", 1.0, lambda, g, rho);
        prop_assert!(s.lambda_f >= s.g);
        prop_assert_eq!(s.lambda_f, lambda.max(g + rho));
        prop_assert_eq!(s.lambda_f, final_price(lambda, g, rho));
    }

    #[test]
    fn split_is_efficient_and_non_negative(total in 0.0..1e4f64, a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let r_i = total * a;
        let r_w = (total - r_i) * b;
        let s = shapley_split(CoalitionValues { r_total: total, r_w, r_i });
        prop_assert!((s.phi_w + s.phi_i - total).abs() <= 1e-9);
        prop_assert!(s.phi_w >= 0.0 && s.phi_i >= 0.0);
    }

    #[test]
    fn establishment_settlement_conserves(sales in prop::collection::vec(sale_strategy(), 0..8), beta in 1.01..4.0f64) {
        let sales: Vec<SaleRecord> = sales
            .iter()
            .enumerate()
            .map(|(k, &(x, g, spread))| SaleRecord::priced(format!("u{k}"), "w", x, g, g + spread))
            .collect();
        let params = SharingParams { beta, ..SharingParams::default() };
        let wfp = WfpAccount::establishment("w", 100.0, 0.0, 0.0);
        let (s, after) = settle_transaction(&wfp, &sales, &params).unwrap();
        prop_assert!((s.phi_w + s.phi_i - s.r_total).abs() <= 1e-9 * (1.0 + s.r_total));
        prop_assert!(s.phi_w >= 0.0 && s.phi_i >= 0.0);
        prop_assert_eq!(after, wfp);
    }

    #[test]
    fn individual_account_stays_within_bounds(
        fee in 1.0..500.0f64,
        txns in prop::collection::vec((0.1..15.0f64, 0.0..20.0f64, 0.0..80.0f64), 1..40),
    ) {
        let mut wfp = WfpAccount::individual("w", 200.0, 15.0, fee, 0.0, 0.0);
        let params = SharingParams::default();
        for (x, g, spread) in txns {
            let x = x.min(wfp.sellable());
            if x <= 0.0 {
                wfp.replenish();
                continue;
            }
            let sale = SaleRecord::priced("u", "w", x, g, g + spread);
            let (s, next) = settle_transaction(&wfp, &[sale], &params).unwrap();
            prop_assert!((s.phi_w + s.phi_i - s.r_total).abs() <= 1e-9 * (1.0 + s.r_total));
            prop_assert!(next.unused >= 0.0 && next.unused <= next.quota);
            prop_assert!(next.cum_share >= 0.0 && next.cum_share <= next.fee);
            wfp = next;
        }
    }

    #[test]
    fn best_response_stays_in_bounds(w in 0.1..5.0f64, m in 1.0..200.0f64, x_min in 0.01..1.0f64,
                                     width in 0.0..20.0f64, lf in 0.0..500.0f64) {
        let u = profile(w, m, x_min, width);
        let x = user_best_response(lf, &u);
        prop_assert!(x >= u.x_min && x <= u.x_max);
    }

    #[test]
    fn demand_falls_with_price(w in 0.1..5.0f64, m in 1.0..200.0f64, x_min in 0.01..1.0f64,
                               width in 0.0..20.0f64, lf in 0.0..300.0f64, up in 0.0..100.0f64) {
        let u = profile(w, m, x_min, width);
        prop_assert!(user_demand(lf + up, &u) <= user_demand(lf, &u));
    }

    #[test]
    fn price_updates_are_projected(lambda in 0.0..100.0f64, sigma in 0.0..10.0f64,
                                   cap in 0.0..100.0f64, demand in 0.0..100.0f64) {
        let next = wfp_price_update(lambda, sigma, cap, demand);
        prop_assert!(next >= 0.0);
        if demand > cap { prop_assert!(next >= lambda); }
    }
}

//! Property tests over random inputs.

use eventmarket_core::benchmark;
use eventmarket_core::dcopf::{dc_opf, Availability, DcOpfOptions};
use eventmarket_core::fleet::{DegradationModel, MobileResource, ResourceKind};
use eventmarket_core::market::{build_clearing_problem, extract_outcome, MarketParams, ReserveMode};
use eventmarket_core::network::{parse_matpower_case, write_matpower_case, NetworkCase};
use eventmarket_core::offers::{GeneratorOffer, OfferBook, OfferConfig, StorageOffer};
use eventmarket_core::scenario::{reduce_scenarios, sample_scenarios, OutageScenario, ScenarioSet};
use eventmarket_milp::{solve_milp, Limits};
use proptest::prelude::*;

fn mini_case() -> NetworkCase {
    let mut case = parse_matpower_case(
        "mpc.baseMVA = 100;
mpc.bus = [
1 3 0 0 0 0 1 1 0 135 1 1.05 0.95;
2 1 20 5 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
1 0 0 100 -100 1 100 1 100 0 0 0 0 0 0 0 0 0 0 0 0;
];
mpc.branch = [
1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
",
    )
    .unwrap();
    let base = MobileResource {
        kind: ResourceKind::Dg,
        block_id: 1,
        energy_capacity_mwh: 0.0,
        power_cap_mw: 4.0,
        soc_min: 0.0,
        soc_max: 1.0,
        efficiency_dch: 1.0,
        degradation: DegradationModel::default(),
        origin_xy_miles: (0.0, 0.0),
        deployment_bus: 2,
        transport_rate: 3.0,
        initial_soc: None,
        dg_price: None,
        distance_miles: 2.0,
    };
    let esr = MobileResource {
        kind: ResourceKind::Esr,
        energy_capacity_mwh: 6.0,
        power_cap_mw: 1.5,
        soc_min: 0.1,
        efficiency_dch: 0.95,
        degradation: DegradationModel {
            alpha: -36.23,
            beta: 34.8,
            gamma: 2.77,
            psi: -2.45,
        },
        ..base.clone()
    };
    case.fleet = vec![base, esr];
    case
}

fn mini_book(startup: f64) -> OfferBook {
    OfferBook {
        generator_offers: vec![GeneratorOffer {
            block_id: 1,
            quantity: 4.0,
            price: 100.0,
            reserve_quantity: 1.0,
            reserve_price: 20.0,
            startup_price: startup,
            shutdown_price: 0.0,
        }],
        esr_offers: vec![StorageOffer {
            block_id: 1,
            capacity_fraction: 0.8,
            dch_fraction: 1.0,
            energy_price: 120.0,
            reserve_fraction: 0.2,
            reserve_price: 24.0,
        }],
        ev_offers: vec![],
    }
}

fn scenario(demand: &[f64], price: f64) -> OutageScenario {
    OutageScenario {
        scenario_id: 0,
        failed_branches: vec![1],
        failed_generators: vec![],
        areas: vec![1],
        outage_demand: vec![demand.to_vec()],
        outage_price: vec![vec![price; demand.len()]],
        duration_window: (1, demand.len()),
        weight: 1.0,
        cluster_size: 1,
    }
}

fn welfare(demand: &[f64], price: f64, startup: f64, mode: ReserveMode) -> f64 {
    let params = MarketParams {
        horizon_hours: demand.len(),
        reserve_mode: mode,
        ..MarketParams::default()
    };
    let m = build_clearing_problem(&mini_case(), &[scenario(demand, price)], &mini_book(startup), &params).unwrap();
    let s = solve_milp(&m.problem, &Limits::default()).unwrap();
    let out = extract_outcome(&m, &s).unwrap();
    assert!((out.costs.social_welfare - out.objective).abs() <= 1e-6 * (1.0 + out.objective.abs()));
    out.objective
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn welfare_grows_with_outage_price(
        demand in prop::collection::vec(0.0f64..6.0, 1..4),
        p in 50.0f64..400.0,
        dp in 0.0f64..200.0,
        startup in 0.0f64..300.0,
        strict in any::<bool>(),
    ) {
        let mode = if strict { ReserveMode::Strict } else { ReserveMode::AsPrinted };
        let lo = welfare(&demand, p, startup, mode);
        let hi = welfare(&demand, p + dp, startup, mode);
        prop_assert!(lo >= -1e-6);
        prop_assert!(hi >= lo - 1e-6, "{hi} < {lo}");
    }

    #[test]
    fn welfare_grows_with_outage_demand(
        demand in prop::collection::vec(0.0f64..6.0, 1..4),
        extra in 0.0f64..3.0,
        p in 50.0f64..400.0,
    ) {
        let more: Vec<f64> = demand.iter().map(|d| d + extra).collect();
        let lo = welfare(&demand, p, 0.0, ReserveMode::AsPrinted);
        let hi = welfare(&more, p, 0.0, ReserveMode::AsPrinted);
        prop_assert!(hi >= lo - 1e-6);
    }

    #[test]
    fn strict_reserve_never_pays_more(demand in prop::collection::vec(0.0f64..6.0, 1..4), p in 50.0f64..400.0) {
        let loose = welfare(&demand, p, 0.0, ReserveMode::AsPrinted);
        let strict = welfare(&demand, p, 0.0, ReserveMode::Strict);
        prop_assert!(strict <= loose + 1e-6);
    }

    #[test]
    fn dc_opf_balances_every_bus_load(scale in prop::collection::vec(0.0f64..1.6, 30), lf in 0.0f64..0.1, drop in 0usize..41) {
        let inputs = benchmark::inputs(12).unwrap();
        let case = &inputs.case;
        let mut avail = Availability::intact(case);
        avail.branch_up[drop] = false;
        let opts = DcOpfOptions { voll: 1000.0, loss_fraction: lf };
        let r = dc_opf(case, &avail, &scale, &[], &opts).unwrap();
        for (i, b) in case.buses.iter().enumerate() {
            let load = b.load_p * scale[i];
            prop_assert!((r.served[i] + r.shed[i] - load).abs() <= 1e-6);
            prop_assert!(r.shed[i] >= -1e-9);
        }
        prop_assert!((r.total_dispatch() - (1.0 + lf) * r.total_served()).abs() <= 1e-6);
        for (g, p) in case.generators.iter().zip(&r.dispatch) {
            prop_assert!(*p <= g.p_max + 1e-7);
        }
    }

    #[test]
    fn reduction_keeps_weight_and_members(seed in 0u64..10_000, k in 1usize..8) {
        let inputs = benchmark::inputs(9).unwrap();
        let mut hazard = inputs.hazard.clone();
        hazard.seed = seed;
        let mut sampled = sample_scenarios(&inputs.case, &hazard, 40, 12).unwrap();
        // synthetic demand keeps this test off the OPF path
        for s in &mut sampled {
            let d = s.failed_branches.len() as f64;
            for t in 6..=9 {
                s.outage_demand[0][t - 1] = d;
            }
        }
        let reps = reduce_scenarios(&sampled, k, seed).unwrap();
        prop_assert!(reps.len() <= k);
        let w: f64 = reps.iter().map(|s| s.weight).sum();
        prop_assert!((w - 1.0).abs() <= 1e-12);
        prop_assert_eq!(reps.iter().map(|s| s.cluster_size).sum::<usize>(), 40);
        for r in &reps {
            prop_assert!(sampled.iter().any(|s| s.scenario_id == r.scenario_id && s.failed_branches == r.failed_branches));
        }
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(seed in any::<u64>(), count in 1usize..60) {
        let inputs = benchmark::inputs(12).unwrap();
        let mut hazard = inputs.hazard.clone();
        hazard.seed = seed;
        let a = sample_scenarios(&inputs.case, &hazard, count, 12).unwrap();
        let b = sample_scenarios(&inputs.case, &hazard, count + 5, 12).unwrap();
        prop_assert_eq!(&a[..], &b[..count].iter().cloned().map(|mut s| { s.weight = 1.0 / count as f64; s }).collect::<Vec<_>>()[..]);
        for s in &a {
            for k in &s.failed_branches {
                prop_assert!(hazard.branch_overrides.contains_key(k));
            }
            prop_assert!(s.failed_generators.is_empty());
        }
    }

    #[test]
    fn scenario_json_round_trips(seed in 0u64..1000) {
        let inputs = benchmark::inputs(12).unwrap();
        let mut hazard = inputs.hazard.clone();
        hazard.seed = seed;
        let sampled = sample_scenarios(&inputs.case, &hazard, 12, 12).unwrap();
        let set = ScenarioSet { seed, horizon_hours: 12, representatives: sampled[..3].to_vec(), sampled };
        let back = ScenarioSet::from_json(&set.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn case_text_round_trips(scale in prop::collection::vec(0.5f64..1.5, 30)) {
        let mut case = parse_matpower_case(benchmark::CASE30).unwrap();
        for (b, f) in case.buses.iter_mut().zip(&scale) {
            b.load_p = (b.load_p * f * 1000.0).round() / 1000.0;
        }
        let back = parse_matpower_case(&write_matpower_case(&case)).unwrap();
        prop_assert_eq!(back, case);
    }

    #[test]
    fn offer_config_round_trips(base in 1.0f64..500.0, share in 0.0f64..1.0) {
        let mut cfg = OfferConfig::from_json(benchmark::OFFERS).unwrap();
        cfg.defaults.base_price = base;
        cfg.defaults.dg_reserve_share = share;
        let back = OfferConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

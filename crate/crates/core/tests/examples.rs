use divauction::auction::{play_game, revenue, run_round, BidVector, BuyerPolicy, FixedReserves, ReserveVector};
use divauction::buyers::{dp_optimal, envelope_region, prop1_breaches, realized_surplus, EnvelopeBuyer, FreeChoice, Region, TruthfulBuyer};
use divauction::div_engine::{barrage_price, divprrfes, stopping_rule_prrfes};
use divauction::pricing_tree::{verify_right_consistent, RightConsistency, RppaAlgorithm};
use divauction::prrfes::{phase_params, r_gamma, zeta, Mode, PrrfesState};
use divauction::regret::{lemma2_bound, lemma3_bound, strategic_regret, theorem1_bound};
use divauction::{decompose, Dyadic};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn d(s: &str) -> Dyadic {
    Dyadic::from_decimal(s, 48).unwrap()
}

fn dv(xs: &[&str]) -> Vec<Dyadic> {
    xs.iter().map(|s| d(s)).collect()
}

fn truthful(vals: &[Dyadic]) -> Vec<Box<dyn BuyerPolicy>> {
    vals.iter().map(|v| Box::new(TruthfulBuyer::new(v.clone())) as Box<dyn BuyerPolicy>).collect()
}

#[test]
fn quantized_decimals() {
    let x = Dyadic::from_decimal("0.1", 4).unwrap();
    assert_eq!((x.mantissa(), x.exponent()), (1.into(), -3));
    let half = Dyadic::from_decimal("0.5", 64).unwrap();
    assert_eq!((half.mantissa(), half.exponent()), (1.into(), -1));
    assert!(Dyadic::from_decimal("abc", 8).is_err());
    assert_eq!(&Dyadic::from_i64(3, -2) * &Dyadic::from_i64(1, -1), Dyadic::from_i64(3, -3));
    assert!(Dyadic::from_i64(5, -3) < Dyadic::from_i64(3, -2));
}

#[test]
fn second_price_with_personal_reserves() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let out = run_round(&ReserveVector(dv(&["0.3", "0.5", "0.9"])), &BidVector(dv(&["0.4", "0.6", "0.2"])), &mut rng).unwrap();
    assert_eq!(out.participants, vec![0, 1]);
    assert_eq!(out.winner, Some(1));
    assert_eq!(out.payment, d("0.5"));

    let out = run_round(&ReserveVector(dv(&["0.5"])), &BidVector(dv(&["0.4"])), &mut rng).unwrap();
    assert!(out.participants.is_empty() && out.winner.is_none() && out.payment.is_zero());

    let mut winners = [0; 2];
    for seed in 0..64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = run_round(&ReserveVector(dv(&["0.1", "0.1"])), &BidVector(dv(&["0.7", "0.7"])), &mut rng).unwrap();
        assert_eq!(out.payment, d("0.7"));
        winners[out.winner.unwrap()] += 1;
    }
    assert!(winners[0] > 0 && winners[1] > 0);

    let err = run_round(&ReserveVector(dv(&["0.1"])), &BidVector(dv(&["0.1", "0.2"])), &mut rng);
    assert!(matches!(err, Err(divauction::Error::Contract(_))));
}

#[test]
fn posted_price_game_and_revenue() {
    let mut seller = FixedReserves(ReserveVector(dv(&["0.5"])));
    let trace = play_game(&mut seller, &mut truthful(&dv(&["0.7"])), 1, 0).unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace.round(1).payment, &d("0.5"));
    assert_eq!(revenue(&trace), d("0.5"));
    assert_eq!(strategic_regret(&trace, &dv(&["0.7"])).unwrap(), d("0.2"));
    assert!((realized_surplus(&trace, 0, &d("0.7"), 0.5) - 0.2).abs() < 1e-12);

    let mut seller = FixedReserves(ReserveVector(dv(&["0.8"])));
    let trace = play_game(&mut seller, &mut truthful(&dv(&["0.7"])), 2, 0).unwrap();
    assert!(revenue(&trace).is_zero());
    assert_eq!(strategic_regret(&trace, &dv(&["0.7"])).unwrap(), d("1.4"));
}

#[test]
fn dividing_schedule_alternates_and_barrages() {
    let mut seller = divprrfes(2, 0.5, None).unwrap();
    let trace = play_game(&mut seller, &mut truthful(&dv(&["0.4", "0.9"])), 4, 3).unwrap();
    let half = d("0.5");
    let bar = Dyadic::from_int(2);
    let expected = [(0, [&half, &bar]), (1, [&bar, &half])];
    for (t, (active, res)) in expected.iter().enumerate() {
        let rec = trace.round(t as u64 + 1);
        assert_eq!(rec.active_buyer, Some(*active));
        assert_eq!(rec.reserves, &[res[0].clone(), res[1].clone()]);
    }
    assert_eq!(trace.round(3).active_buyer, Some(0));
    assert_eq!(trace.round(3).period, Some(2));

    let mut seller = divprrfes(3, 0.5, None).unwrap();
    let trace = play_game(&mut seller, &mut truthful(&dv(&["0.2", "0.4", "0.9"])), 3, 0).unwrap();
    for t in 1..=3u64 {
        let rec = trace.round(t);
        let a = rec.active_buyer.unwrap();
        assert_eq!(a as u64, t - 1);
        assert!(rec.reserves.iter().enumerate().all(|(i, p)| i == a || p == &bar));
    }
}

#[test]
fn barrage_prices() {
    assert_eq!(barrage_price(0.5).unwrap(), Dyadic::from_int(2));
    assert_eq!(barrage_price(0.9).unwrap(), Dyadic::from_int(10));
    assert_eq!(barrage_price(0.8).unwrap(), Dyadic::from_int(5));
    assert_eq!(divprrfes(2, 0.8, None).unwrap().substates()[0].r(), 11);
    assert!(matches!(divprrfes(2, 0.8, Some(3)), Err(divauction::Error::Config(e)) if e.contains("11")));
}

#[test]
fn phase_search_protocol() {
    assert_eq!(phase_params(0).unwrap().epsilon, d("0.5"));
    assert_eq!(phase_params(2).unwrap().epsilon, d("0.0625"));
    assert_eq!(phase_params(2).unwrap().g_rounds, 16u32.into());

    let mut s = PrrfesState::new(2);
    assert_eq!(s.price(), d("0.5"));
    s.step(false);
    assert_eq!((s.mode(), s.price()), (Mode::Penalize, Dyadic::ONE));
    s.step(false);
    for _ in 0..2 {
        assert_eq!((s.mode(), s.price()), (Mode::Exploit, Dyadic::ZERO));
        s.step(true);
    }
    assert_eq!((s.phase(), s.price()), (1, d("0.25")));

    let mut s = PrrfesState::new(2);
    s.step(true);
    assert_eq!(s.price(), Dyadic::ONE);
    s.step(false);
    s.step(true);
    for _ in 0..50 {
        assert_eq!(s.price(), Dyadic::ONE);
        s.step(false);
    }

    let mut s = PrrfesState::new(5);
    s.step(false);
    for _ in 0..4 {
        assert_eq!(s.price(), Dyadic::ONE);
        s.step(false);
    }
    assert_eq!(s.mode(), Mode::Exploit);

    assert_eq!(verify_right_consistent(&PrrfesState::new(2), 10).unwrap(), RightConsistency::Consistent);
}

#[test]
fn discount_quantities() {
    assert_eq!(r_gamma(0.5).unwrap(), 2);
    assert_eq!(r_gamma(0.8).unwrap(), 11);
    assert_eq!(r_gamma(0.01).unwrap(), 1);
    assert!((zeta(2, 0.5).unwrap() - 1.0).abs() < 1e-15);
    assert!((zeta(3, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    for i in 1..=9 {
        let g = i as f64 / 10.0;
        assert!(zeta(r_gamma(g).unwrap(), g).unwrap() <= 1.0 + 1e-12);
    }
}

#[test]
fn stopping_rule_separation() {
    let mut a = PrrfesState::new(2);
    let mut b = PrrfesState::new(2);
    let walk = |s: &mut PrrfesState, target_phase: u32, v: &Dyadic| {
        while s.phase() < target_phase {
            let accept = match s.mode() {
                Mode::Explore => &s.price() <= v,
                Mode::Penalize => false,
                _ => true,
            };
            s.step(accept);
        }
    };
    walk(&mut a, 3, &d("0.5"));
    walk(&mut b, 2, &d("0.875"));
    assert_eq!((a.phase(), a.q()), (3, &d("0.5")));
    assert_eq!((b.phase(), b.q()), (2, &d("0.75")));
    let states = [a, b];
    assert!(stopping_rule_prrfes(0, &states));
    assert!(!stopping_rule_prrfes(1, &states));
}

#[test]
fn envelope_regions() {
    let root = PrrfesState::new(2);
    assert_eq!(envelope_region(&root, &d("0.7"), 1.0), Region::Free);
    assert_eq!(envelope_region(&root, &d("0.4"), 1.0), Region::MustReject);
    let mut s = PrrfesState::new(2);
    s.step(true);
    s.step(false);
    s.step(false);
    assert_eq!(s.mode(), Mode::Exploit);
    assert_eq!(envelope_region(&s, &d("0.5"), 1.0), Region::MustAccept);

    let mut buyer = EnvelopeBuyer::new(d("0.7"), 0.5, 2, Dyadic::from_int(2), FreeChoice::AlwaysReject).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(buyer.envelope_bid(&d("0.5"), &mut rng).unwrap() < d("0.5"));
}

#[test]
fn optimal_buyer_respects_location_inequality() {
    let v = Dyadic::from_i64(19, -5);
    let root = PrrfesState::new(2);
    let policy = dp_optimal(&root, &v, 0.5, 12).unwrap();
    assert!(prop1_breaches(&policy, &root, &v, zeta(2, 0.5).unwrap()).is_empty());
    assert!(policy.root_value() > 0.0);
    assert!(dp_optimal(&root, &v, 0.5, 23).is_err());
}

#[test]
fn discounted_surplus_by_hand() {
    let mut seller = FixedReserves(ReserveVector(dv(&["0.5"])));
    let mut buyers = truthful(&dv(&["1"]));
    let trace = play_game(&mut seller, &mut buyers, 3, 0).unwrap();
    assert!((realized_surplus(&trace, 0, &Dyadic::ONE, 0.5) - (0.5 + 0.25 + 0.125)).abs() < 1e-12);
    let mut seller = FixedReserves(ReserveVector(dv(&["1.5"])));
    let trace = play_game(&mut seller, &mut truthful(&dv(&["1"])), 3, 0).unwrap();
    assert_eq!(realized_surplus(&trace, 0, &Dyadic::ONE, 0.5), 0.0);
}

#[test]
fn decomposition_examples() {
    let vals = dv(&["0.5", "0.9"]);
    let mut seller = divprrfes(2, 0.5, None).unwrap();
    let trace = play_game(&mut seller, &mut truthful(&vals), 12, 0).unwrap();
    let report = decompose(&trace, &vals, 2).unwrap();
    let i = &report.subhorizons;
    assert_eq!(i.iter().sum::<u64>(), 12);
    let gap = &vals[1] - &vals[0];
    assert_eq!(report.deviation, gap.mul_int(i[0] as i64));
    assert_eq!(report.total, &report.individual.iter().sum::<Dyadic>() + &report.deviation);

    let equal = dv(&["0.5", "0.5"]);
    let mut seller = divprrfes(2, 0.5, None).unwrap();
    let trace = play_game(&mut seller, &mut truthful(&equal), 12, 0).unwrap();
    assert!(decompose(&trace, &equal, 2).unwrap().deviation.is_zero());

    let single = dv(&["0.75"]);
    let mut seller = divprrfes(1, 0.5, None).unwrap();
    let trace = play_game(&mut seller, &mut truthful(&single), 40, 0).unwrap();
    let report = decompose(&trace, &single, 2).unwrap();
    assert!(report.deviation.is_zero());
    assert_eq!(report.individual[0], report.total);
}

#[test]
fn closed_form_bounds() {
    assert!((theorem1_bound(2, 2, 1.0, 1 << 16).unwrap() - 106.0).abs() < 1e-9);
    assert!((theorem1_bound(3, 2, 0.5, 1 << 4).unwrap() - 128.0).abs() < 1e-9);
    assert!((lemma2_bound(2, 1.0, 4).unwrap() - 18.0).abs() < 1e-9);
    assert!((lemma2_bound(2, 0.0, 16).unwrap() - 16.0).abs() < 1e-9);
    assert!((lemma2_bound(11, 1.0, 1 << 16).unwrap() - 90.0).abs() < 1e-9);
    assert!((lemma3_bound(2, 1.0, 0.5).unwrap() - 68.0).abs() < 1e-9);
    assert!((lemma3_bound(2, 1.0, 0.0).unwrap() - 34.0).abs() < 1e-9);
    assert!(lemma3_bound(2, 0.5, 0.5).is_err());
}

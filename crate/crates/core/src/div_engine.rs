//! Dividing sellers: each period visits the suspected buyers one at a time,
//! offering the active buyer its own subalgorithm price and barraging the
//! rest. A stopping rule shrinks the suspected set between periods.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::auction::{BidVector, BuyerId, PeriodEvent, ReserveVector, RoundInfo, SellerAlgorithm};
use crate::error::{Error, Result};
use crate::numerics::Dyadic;
use crate::pricing_tree::RppaAlgorithm;
use crate::prrfes::{self, epsilon, PrrfesState};

/// Fractional bits of the quantized barrage price.
pub const BARRAGE_BITS: u32 = 64;

/// `1 / (1 - gamma0)` rounded up to 64 fractional bits.
///
/// `gamma0` is read through its shortest decimal representation, so `0.9`
/// yields exactly 10.
pub fn barrage_price(gamma0: f64) -> Result<Dyadic> {
    prrfes::check_discount(gamma0)?;
    let text = format!("{gamma0}");
    let (_, frac) = text.split_once('.').unwrap_or((&text, ""));
    let digits: BigInt = text.replace('.', "").parse().map_err(|_| {
        Error::Internal(format!("cannot reparse discount {text}"))
    })?;
    let scale = num_traits::pow(BigInt::from(10u32), frac.len());
    // 1 / (1 - d / s) = s / (s - d)
    let num = &scale << BARRAGE_BITS;
    let den = &scale - &digits;
    let (quot, rem) = num.div_rem(&den);
    let mantissa = if rem.is_zero() { quot } else { quot + BigInt::one() };
    Ok(Dyadic::new(mantissa, -(BARRAGE_BITS as i64)))
}

/// Decides after each period whether a buyer leaves the suspected set,
/// looking only at the tracked substates of all buyers.
pub trait StoppingRule<S> {
    fn stop(&self, buyer: BuyerId, substates: &[S]) -> bool;
}

impl<S, F> StoppingRule<S> for F
where
    F: Fn(BuyerId, &[S]) -> bool,
{
    fn stop(&self, buyer: BuyerId, substates: &[S]) -> bool {
        self(buyer, substates)
    }
}

/// Stops `m` once some rival's last accepted price exceeds `m`'s valuation
/// upper bound `q^m + 2ε_{l^m - 1}` (or 1 while `m` is still in phase 0).
pub fn stopping_rule_prrfes(m: BuyerId, substates: &[PrrfesState]) -> bool {
    let own = &substates[m];
    let upper = if own.phase() == 0 {
        Dyadic::ONE
    } else {
        own.q() + &epsilon(own.phase() - 1).shl(1)
    };
    substates
        .iter()
        .enumerate()
        .any(|(i, s)| i != m && s.q() > &upper)
}

/// [`stopping_rule_prrfes`] as a value.
#[derive(Clone, Copy, Debug, Default)]
pub struct PrrfesStoppingRule;

impl StoppingRule<PrrfesState> for PrrfesStoppingRule {
    fn stop(&self, buyer: BuyerId, substates: &[PrrfesState]) -> bool {
        stopping_rule_prrfes(buyer, substates)
    }
}

/// The div-transformation of a single-buyer algorithm.
#[derive(Clone, Debug)]
pub struct DivSeller<A, R> {
    substates: Vec<A>,
    subhorizons: Vec<u64>,
    suspected: Vec<BuyerId>,
    cursor: usize,
    period: u64,
    round: u64,
    p_bar: Dyadic,
    rule: R,
    events: Vec<PeriodEvent>,
}

/// divPRRFES.
pub type DivPrrfes = DivSeller<PrrfesState, PrrfesStoppingRule>;

/// Builds a dividing seller for `m` buyers; buyer `i` is tracked by
/// `sub_factory(i)`.
pub fn make_div<A, R, F>(mut sub_factory: F, rule: R, m: usize, p_bar: Dyadic) -> Result<DivSeller<A, R>>
where
    A: RppaAlgorithm,
    R: StoppingRule<A>,
    F: FnMut(BuyerId) -> A,
{
    if m == 0 {
        return Err(Error::Contract("a dividing seller needs at least one buyer".into()));
    }
    if p_bar <= Dyadic::ONE {
        return Err(Error::Contract(format!("barrage price {p_bar} must exceed 1")));
    }
    Ok(DivSeller {
        substates: (0..m).map(&mut sub_factory).collect(),
        subhorizons: vec![0; m],
        suspected: (0..m).collect(),
        cursor: 0,
        period: 1,
        round: 0,
        p_bar,
        rule,
        events: Vec::new(),
    })
}

/// divPRRFES for `m` buyers with discount cap `gamma0`. `r` defaults to
/// `r_gamma(gamma0)` and may not be smaller.
pub fn divprrfes(m: usize, gamma0: f64, r: Option<u32>) -> Result<DivPrrfes> {
    let r_min = prrfes::r_gamma(gamma0)?;
    let r = r.unwrap_or(r_min);
    if r < r_min {
        return Err(Error::Config(format!(
            "penalization length r={r} is below the minimum {r_min} for gamma0={gamma0}"
        )));
    }
    let p_bar = barrage_price(gamma0)?;
    make_div(|_| PrrfesState::new(r), PrrfesStoppingRule, m, p_bar)
}

impl<A, R> DivSeller<A, R> {
    pub fn substates(&self) -> &[A] {
        &self.substates
    }

    pub fn subhorizons(&self) -> &[u64] {
        &self.subhorizons
    }

    /// Current suspected set, ascending.
    pub fn suspected(&self) -> &[BuyerId] {
        &self.suspected
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn p_bar(&self) -> &Dyadic {
        &self.p_bar
    }

    pub fn active_buyer(&self) -> BuyerId {
        self.suspected[self.cursor]
    }
}

impl<A, R> SellerAlgorithm for DivSeller<A, R>
where
    A: RppaAlgorithm,
    R: StoppingRule<A>,
{
    fn num_buyers(&self) -> usize {
        self.substates.len()
    }

    fn reserves(&self) -> ReserveVector {
        let active = self.active_buyer();
        let mut out = vec![self.p_bar.clone(); self.substates.len()];
        out[active] = self.substates[active].price();
        ReserveVector(out)
    }

    fn observe(&mut self, bids: &BidVector) -> Result<()> {
        if bids.len() != self.substates.len() {
            return Err(Error::Contract(format!(
                "{} bids for {} buyers",
                bids.len(),
                self.substates.len()
            )));
        }
        self.round += 1;
        let active = self.active_buyer();
        let accepted = bids.0[active] >= self.substates[active].price();
        self.substates[active].step(accepted);
        self.subhorizons[active] += 1;
        self.cursor += 1;
        if self.cursor < self.suspected.len() {
            return Ok(());
        }

        let stopped: Vec<BuyerId> = self
            .suspected
            .iter()
            .copied()
            .filter(|&m| self.rule.stop(m, &self.substates))
            .collect();
        self.events.push(PeriodEvent {
            period: self.period,
            end_round: self.round,
            suspected: self.suspected.clone(),
            stopped: stopped.clone(),
        });
        self.suspected.retain(|m| !stopped.contains(m));
        if self.suspected.is_empty() {
            return Err(Error::Internal(format!(
                "stopping rule emptied the suspected set after period {}",
                self.period
            )));
        }
        self.cursor = 0;
        self.period += 1;
        Ok(())
    }

    fn round_info(&self) -> RoundInfo {
        RoundInfo {
            active_buyer: Some(self.active_buyer()),
            period: Some(self.period),
        }
    }

    fn drain_events(&mut self) -> Vec<PeriodEvent> {
        std::mem::take(&mut self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{play_game, BuyerPolicy};
    use crate::buyers::TruthfulBuyer;
    use crate::pricing_tree::PathState;

    fn dy(s: &str) -> Dyadic {
        Dyadic::from_decimal(s, 48).unwrap()
    }

    fn truthful(vals: &[&str]) -> Vec<Box<dyn BuyerPolicy>> {
        vals.iter()
            .map(|v| Box::new(TruthfulBuyer::new(dy(v))) as Box<dyn BuyerPolicy>)
            .collect()
    }

    #[test]
    fn barrage_examples() {
        assert_eq!(barrage_price(0.5).unwrap(), dy("2"));
        assert_eq!(barrage_price(0.9).unwrap(), dy("10"));
        assert_eq!(barrage_price(0.8).unwrap(), dy("5"));
        let third = barrage_price(0.3).unwrap();
        // 10/7 rounded up at 2^-64
        let lower = &third - &Dyadic::pow2(-64);
        assert!(third.mul_int(7) >= dy("10") && lower.mul_int(7) < dy("10"));
        for g in [1e-9, 0.01, 0.25, 0.999999] {
            assert!(barrage_price(g).unwrap() > Dyadic::ONE);
        }
        assert!(barrage_price(1.0).is_err());
        assert!(barrage_price(-0.1).is_err());
    }

    #[test]
    fn stopping_rule_examples() {
        let at = |l: u32, q: &str| {
            let mut s = PrrfesState::new(2);
            // drive into phase l with last accepted price q via a crafted path
            s = force_phase(s, l, dy(q));
            s
        };
        let states = vec![at(3, "0.5"), at(2, "0.75")];
        assert!(stopping_rule_prrfes(0, &states));
        assert!(!stopping_rule_prrfes(1, &states));
        assert!(!stopping_rule_prrfes(0, &states[..1]));
    }

    /// Walks a fresh machine until it sits at the start of phase `l` with
    /// base price `q` (`q` must be reachable, i.e. a multiple of every
    /// earlier step size).
    fn force_phase(mut s: PrrfesState, l: u32, q: Dyadic) -> PrrfesState {
        while s.phase() < l {
            let p = s.price();
            let accept = p <= q && s.mode() == crate::prrfes::Mode::Explore;
            s.step(accept);
        }
        assert_eq!(s.q(), &q, "unreachable base price");
        s
    }

    #[test]
    fn phase_zero_buyer_is_never_stopped() {
        let mut fast = PrrfesState::new(2);
        fast.step(true);
        fast.step(false);
        fast.step(false);
        // fast has q = 1/2, slow is untouched
        let states = vec![PrrfesState::new(2), fast];
        assert!(!stopping_rule_prrfes(0, &states));
    }

    #[test]
    fn single_buyer_reduces_to_subalgorithm() {
        let mut seller = divprrfes(1, 0.5, None).unwrap();
        let mut buyers = truthful(&["0.6"]);
        let trace = play_game(&mut seller, &mut buyers, 40, 3).unwrap();
        let decisions: Vec<bool> = trace.rounds().map(|r| r.participation[0]).collect();
        let prices = PathState::new(decisions).prices(&PrrfesState::new(2));
        let reserves: Vec<Dyadic> = trace.rounds().map(|r| r.reserves[0].clone()).collect();
        assert_eq!(reserves, prices);
    }

    #[test]
    fn two_buyer_schedule() {
        let mut seller = divprrfes(2, 0.5, None).unwrap();
        let mut buyers = truthful(&["0.6", "0.3"]);
        let trace = play_game(&mut seller, &mut buyers, 4, 0).unwrap();
        let bar = dy("2");
        let half = dy("0.5");
        assert_eq!(trace.round(1).reserves, &[half.clone(), bar.clone()]);
        assert_eq!(trace.round(2).reserves, &[bar.clone(), half]);
        assert_eq!(trace.round(3).period, Some(2));
        assert_eq!(trace.round(3).active_buyer, Some(0));
        assert_eq!(trace.round(4).active_buyer, Some(1));
    }

    #[test]
    fn three_buyers_first_period() {
        let mut seller = divprrfes(3, 0.5, None).unwrap();
        let mut buyers = truthful(&["0.1", "0.2", "0.3"]);
        let trace = play_game(&mut seller, &mut buyers, 3, 0).unwrap();
        for t in 1..=3u64 {
            let rec = trace.round(t);
            let active = (t - 1) as usize;
            assert_eq!(rec.active_buyer, Some(active));
            for (m, p) in rec.reserves.iter().enumerate() {
                assert_eq!(p == &dy("2"), m != active);
            }
        }
    }

    /// Constant price 1/2 that counts how often it was stepped.
    #[derive(Clone)]
    struct Counting(u64);

    impl RppaAlgorithm for Counting {
        fn price(&self) -> Dyadic {
            Dyadic::pow2(-1)
        }
        fn step(&mut self, _accepted: bool) {
            self.0 += 1;
        }
    }

    #[test]
    fn stopped_buyer_is_only_barraged() {
        let rule = |m: BuyerId, subs: &[Counting]| m == 1 && subs[1].0 >= 4;
        let mut seller = make_div(|_| Counting(0), rule, 3, dy("2")).unwrap();
        let mut buyers = truthful(&["0.5", "0.5", "0.5"]);
        let trace = play_game(&mut seller, &mut buyers, 40, 0).unwrap();
        assert_eq!(seller.subhorizons()[1], 4);
        assert_eq!(trace.events()[3].stopped, vec![1]);
        let stop_round = trace.events()[3].end_round;
        assert_eq!(stop_round, 12);
        for rec in trace.rounds().filter(|r| r.t > stop_round) {
            assert_eq!(rec.reserves[1], dy("2"));
            assert!(rec.period.unwrap() >= 5);
        }
        assert_eq!(seller.subhorizons().iter().sum::<u64>(), 40);
    }

    #[test]
    fn r_below_minimum_is_rejected() {
        match divprrfes(2, 0.8, Some(10)) {
            Err(Error::Config(msg)) => assert!(msg.contains("11")),
            other => panic!("expected config error, got {other:?}"),
        }
        let s = divprrfes(2, 0.8, None).unwrap();
        assert_eq!(s.substates()[0].r(), 11);
        assert!(divprrfes(2, 0.5, Some(5)).is_ok());
    }

    #[test]
    fn make_div_contract() {
        assert!(make_div(|_| PrrfesState::new(2), PrrfesStoppingRule, 0, dy("2")).is_err());
        assert!(make_div(|_| PrrfesState::new(2), PrrfesStoppingRule, 2, dy("1")).is_err());
    }
}

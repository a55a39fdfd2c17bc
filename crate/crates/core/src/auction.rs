//! One round of the second-price auction with personal reserves, and the
//! game loop that couples a seller algorithm with `M` buyer policies.

use std::any::Any;
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Dyadic;

/// Buyer index, `0..M`. Rendered 1-based in every text output.
pub type BuyerId = usize;

/// Personal reserve prices, one per buyer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReserveVector(pub Vec<Dyadic>);

/// Sealed bids, one per buyer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BidVector(pub Vec<Dyadic>);

impl ReserveVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl BidVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Allocation and payment of a single round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundOutcome {
    /// Buyers whose bid met their reserve, ascending.
    pub participants: Vec<BuyerId>,
    pub winner: Option<BuyerId>,
    /// Zero when nothing is sold.
    pub payment: Dyadic,
    pub allocations: Vec<bool>,
    pub participation: Vec<bool>,
}

/// Runs the second-price rule with personal reserves.
///
/// The winner is the highest bidder among those meeting their reserve; ties
/// are broken uniformly with `rng` (which is only drawn from on a tie). The
/// winner pays the larger of its own reserve and the highest rival
/// participant bid; a lone participant pays its reserve.
pub fn run_round<R: Rng + ?Sized>(
    reserves: &ReserveVector,
    bids: &BidVector,
    rng: &mut R,
) -> Result<RoundOutcome> {
    let m = reserves.len();
    if m == 0 || bids.len() != m {
        return Err(Error::Contract(format!(
            "run_round needs equal nonempty vectors, got {} reserves and {} bids",
            m,
            bids.len()
        )));
    }

    let participation: Vec<bool> = bids.0.iter().zip(&reserves.0).map(|(b, p)| b >= p).collect();
    let participants: Vec<BuyerId> = (0..m).filter(|&i| participation[i]).collect();

    let Some(top) = participants.iter().map(|&i| &bids.0[i]).max() else {
        return Ok(RoundOutcome {
            participants,
            winner: None,
            payment: Dyadic::ZERO,
            allocations: vec![false; m],
            participation,
        });
    };
    let maximizers: Vec<BuyerId> = participants
        .iter()
        .copied()
        .filter(|&i| &bids.0[i] == top)
        .collect();
    let winner = if maximizers.len() == 1 {
        maximizers[0]
    } else {
        maximizers[rng.gen_range(0..maximizers.len())]
    };

    let rival_max = participants
        .iter()
        .filter(|&&i| i != winner)
        .map(|&i| &bids.0[i])
        .max();
    let payment = match rival_max {
        Some(b) if b > &reserves.0[winner] => b.clone(),
        _ => reserves.0[winner].clone(),
    };

    let mut allocations = vec![false; m];
    allocations[winner] = true;
    Ok(RoundOutcome {
        participants,
        winner: Some(winner),
        payment,
        allocations,
        participation,
    })
}

/// Bookkeeping a seller exposes about the round it is about to price.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundInfo {
    pub active_buyer: Option<BuyerId>,
    pub period: Option<u64>,
}

/// Emitted by dividing sellers at the end of each period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodEvent {
    pub period: u64,
    /// Last round of the period (1-based).
    pub end_round: u64,
    /// Suspected set the period was played with.
    pub suspected: Vec<BuyerId>,
    /// Buyers removed after the period.
    pub stopped: Vec<BuyerId>,
}

/// A deterministic seller pricing algorithm for `M` buyers.
pub trait SellerAlgorithm {
    fn num_buyers(&self) -> usize;

    fn reserves(&self) -> ReserveVector;

    fn observe(&mut self, bids: &BidVector) -> Result<()>;

    fn round_info(&self) -> RoundInfo {
        RoundInfo::default()
    }

    fn drain_events(&mut self) -> Vec<PeriodEvent> {
        Vec::new()
    }
}

/// A buyer strategy. It sees only its own reserve and its own history.
pub trait BuyerPolicy: Send {
    fn bid(
        &mut self,
        round: u64,
        reserve: &Dyadic,
        history: OwnHistory<'_>,
        rng: &mut dyn RngCore,
    ) -> Result<Dyadic>;

    fn as_any(&self) -> &dyn Any;
}

/// Posted-price seller that ignores bids. Mostly useful in tests.
#[derive(Clone, Debug)]
pub struct FixedReserves(pub ReserveVector);

impl SellerAlgorithm for FixedReserves {
    fn num_buyers(&self) -> usize {
        self.0.len()
    }

    fn reserves(&self) -> ReserveVector {
        self.0.clone()
    }

    fn observe(&mut self, _bids: &BidVector) -> Result<()> {
        Ok(())
    }
}

/// Full deterministic record of a played game.
///
/// Stored column-wise; round `t` is 1-based everywhere in the public API.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameTrace {
    horizon: u64,
    seed: u64,
    buyers: usize,
    reserves: Vec<Dyadic>,
    bids: Vec<Dyadic>,
    participation: Vec<bool>,
    winners: Vec<Option<BuyerId>>,
    payments: Vec<Dyadic>,
    active: Vec<Option<BuyerId>>,
    periods: Vec<Option<u64>>,
    events: Vec<PeriodEvent>,
}

/// Borrowed view of one round of a trace.
#[derive(Clone, Copy, Debug)]
pub struct RoundRecord<'a> {
    pub t: u64,
    pub reserves: &'a [Dyadic],
    pub bids: &'a [Dyadic],
    pub participation: &'a [bool],
    pub winner: Option<BuyerId>,
    pub payment: &'a Dyadic,
    pub active_buyer: Option<BuyerId>,
    pub period: Option<u64>,
}

impl RoundRecord<'_> {
    pub fn allocated(&self, m: BuyerId) -> bool {
        self.winner == Some(m)
    }
}

impl GameTrace {
    fn with_capacity(horizon: u64, buyers: usize, seed: u64) -> Self {
        let t = horizon as usize;
        GameTrace {
            horizon,
            seed,
            buyers,
            reserves: Vec::with_capacity(t * buyers),
            bids: Vec::with_capacity(t * buyers),
            participation: Vec::with_capacity(t * buyers),
            winners: Vec::with_capacity(t),
            payments: Vec::with_capacity(t),
            active: Vec::with_capacity(t),
            periods: Vec::with_capacity(t),
            events: Vec::new(),
        }
    }

    fn push(&mut self, reserves: ReserveVector, bids: BidVector, outcome: RoundOutcome, info: RoundInfo) {
        self.reserves.extend(reserves.0);
        self.bids.extend(bids.0);
        self.participation.extend(outcome.participation);
        self.winners.push(outcome.winner);
        self.payments.push(outcome.payment);
        self.active.push(info.active_buyer);
        self.periods.push(info.period);
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_buyers(&self) -> usize {
        self.buyers
    }

    /// Rounds recorded so far (equals the horizon once play finished).
    pub fn len(&self) -> usize {
        self.winners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.winners.is_empty()
    }

    pub fn events(&self) -> &[PeriodEvent] {
        &self.events
    }

    pub fn round(&self, t: u64) -> RoundRecord<'_> {
        let i = (t - 1) as usize;
        let span = i * self.buyers..(i + 1) * self.buyers;
        RoundRecord {
            t,
            reserves: &self.reserves[span.clone()],
            bids: &self.bids[span.clone()],
            participation: &self.participation[span],
            winner: self.winners[i],
            payment: &self.payments[i],
            active_buyer: self.active[i],
            period: self.periods[i],
        }
    }

    pub fn rounds(&self) -> impl Iterator<Item = RoundRecord<'_>> + '_ {
        (1..=self.len() as u64).map(move |t| self.round(t))
    }

    pub fn payments(&self) -> &[Dyadic] {
        &self.payments
    }

    /// Writes the trace as CSV:
    /// `t,period,active_buyer,reserve_1,bid_1,alloc_1,...,payment`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut header = String::from("t,period,active_buyer");
        for m in 1..=self.buyers {
            write!(header, ",reserve_{m},bid_{m},alloc_{m}").unwrap();
        }
        header.push_str(",payment");
        writeln!(out, "{header}")?;
        let mut line = String::new();
        for rec in self.rounds() {
            line.clear();
            write!(line, "{},", rec.t).unwrap();
            if let Some(p) = rec.period {
                write!(line, "{p}").unwrap();
            }
            line.push(',');
            if let Some(a) = rec.active_buyer {
                write!(line, "{}", a + 1).unwrap();
            }
            for m in 0..self.buyers {
                write!(
                    line,
                    ",{},{},{}",
                    rec.reserves[m],
                    rec.bids[m],
                    u8::from(rec.allocated(m))
                )
                .unwrap();
            }
            write!(line, ",{}", rec.payment).unwrap();
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Period events as CSV: `period,end_round,suspected,stopped` with
    /// buyer lists joined by `;`.
    pub fn write_events_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "period,end_round,suspected,stopped")?;
        let join = |ids: &[BuyerId]| {
            ids.iter()
                .map(|m| (m + 1).to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        for ev in &self.events {
            writeln!(
                out,
                "{},{},{},{}",
                ev.period,
                ev.end_round,
                join(&ev.suspected),
                join(&ev.stopped)
            )?;
        }
        Ok(())
    }
}

static NO_PAYMENT: Dyadic = Dyadic::ZERO;

/// What a buyer is allowed to know: its own reserves, bids, allocations and
/// payments from earlier rounds.
#[derive(Clone, Copy)]
pub struct OwnHistory<'a> {
    trace: &'a GameTrace,
    buyer: BuyerId,
}

/// One past round from a single buyer's point of view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnRound<'a> {
    pub reserve: &'a Dyadic,
    pub bid: &'a Dyadic,
    pub allocated: bool,
    /// What this buyer paid (zero unless allocated).
    pub payment: &'a Dyadic,
}

impl<'a> OwnHistory<'a> {
    pub fn len(&self) -> usize {
        self.trace.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trace.is_empty()
    }

    pub fn get(&self, t: u64) -> OwnRound<'a> {
        let rec = self.trace.round(t);
        let allocated = rec.allocated(self.buyer);
        OwnRound {
            reserve: &rec.reserves[self.buyer],
            bid: &rec.bids[self.buyer],
            allocated,
            payment: if allocated { rec.payment } else { &NO_PAYMENT },
        }
    }
}

/// Stream 0 drives tie-breaking; buyer `m` draws from stream `m + 1`.
pub fn game_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn buyer_rng(seed: u64, buyer: BuyerId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(buyer as u64 + 1);
    rng
}

/// Plays `horizon` rounds and records everything.
pub fn play_game<S: SellerAlgorithm + ?Sized>(
    seller: &mut S,
    buyers: &mut [Box<dyn BuyerPolicy>],
    horizon: u64,
    seed: u64,
) -> Result<GameTrace> {
    play_game_observed(seller, buyers, horizon, seed, |_, _, _| Ok(()))
}

/// Like [`play_game`], calling `after_round(t, seller, buyers)` once each
/// round has been fed back to the seller.
pub fn play_game_observed<S, F>(
    seller: &mut S,
    buyers: &mut [Box<dyn BuyerPolicy>],
    horizon: u64,
    seed: u64,
    mut after_round: F,
) -> Result<GameTrace>
where
    S: SellerAlgorithm + ?Sized,
    F: FnMut(u64, &S, &[Box<dyn BuyerPolicy>]) -> Result<()>,
{
    let m = seller.num_buyers();
    if buyers.len() != m {
        return Err(Error::Contract(format!(
            "seller prices {m} buyers but {} policies were given",
            buyers.len()
        )));
    }
    let mut trace = GameTrace::with_capacity(horizon, m, seed);
    let mut tie_rng = game_rng(seed);
    let mut rngs: Vec<ChaCha8Rng> = (0..m).map(|i| buyer_rng(seed, i)).collect();

    for t in 1..=horizon {
        let info = seller.round_info();
        let reserves = seller.reserves();
        if reserves.len() != m {
            return Err(Error::Contract(format!(
                "seller returned {} reserves for {m} buyers",
                reserves.len()
            )));
        }
        let mut bids = Vec::with_capacity(m);
        for (i, buyer) in buyers.iter_mut().enumerate() {
            let history = OwnHistory {
                trace: &trace,
                buyer: i,
            };
            let bid = buyer.bid(t, &reserves.0[i], history, &mut rngs[i])?;
            if bid.is_negative() {
                return Err(Error::Contract(format!("buyer {} bid {bid} < 0", i + 1)));
            }
            bids.push(bid);
        }
        let bids = BidVector(bids);
        let outcome = run_round(&reserves, &bids, &mut tie_rng)?;
        seller.observe(&bids)?;
        trace.push(reserves, bids, outcome, info);
        trace.events.extend(seller.drain_events());
        after_round(t, seller, buyers)?;
    }
    Ok(trace)
}

/// Total seller revenue: the sum of payments.
pub fn revenue(trace: &GameTrace) -> Dyadic {
    trace.payments().iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buyers::TruthfulBuyer;

    fn dy(s: &str) -> Dyadic {
        s.parse().unwrap()
    }

    fn vecs(res: &[&str], bids: &[&str]) -> (ReserveVector, BidVector) {
        (
            ReserveVector(res.iter().map(|s| dy(s)).collect()),
            BidVector(bids.iter().map(|s| dy(s)).collect()),
        )
    }

    #[test]
    fn second_price_with_reserves() {
        let (r, b) = vecs(&["0.375", "0.5", "0.875"], &["0.4375", "0.625", "0.25"]);
        let out = run_round(&r, &b, &mut game_rng(0)).unwrap();
        assert_eq!(out.participants, vec![0, 1]);
        assert_eq!(out.winner, Some(1));
        assert_eq!(out.payment, dy("0.5"));
        assert_eq!(out.allocations, vec![false, true, false]);
    }

    #[test]
    fn rival_bid_sets_price_when_above_reserve() {
        let (r, b) = vecs(&["0.25", "0.25"], &["0.75", "0.5"]);
        let out = run_round(&r, &b, &mut game_rng(0)).unwrap();
        assert_eq!(out.winner, Some(0));
        assert_eq!(out.payment, dy("0.5"));
    }

    #[test]
    fn empty_participation_is_no_sale() {
        let (r, b) = vecs(&["0.5"], &["0.375"]);
        let out = run_round(&r, &b, &mut game_rng(0)).unwrap();
        assert!(out.participants.is_empty());
        assert_eq!(out.winner, None);
        assert_eq!(out.payment, Dyadic::ZERO);
        assert_eq!(out.allocations, vec![false]);
    }

    #[test]
    fn ties_are_random_and_pay_the_rival_bid() {
        let (r, b) = vecs(&["0.125", "0.125"], &["0.75", "0.75"]);
        let mut seen = [false; 2];
        for seed in 0..64 {
            let out = run_round(&r, &b, &mut game_rng(seed)).unwrap();
            assert_eq!(out.payment, dy("0.75"));
            seen[out.winner.unwrap()] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn length_mismatch_is_a_contract_violation() {
        let (r, b) = vecs(&["0.5", "0.5"], &["0.5"]);
        assert!(matches!(
            run_round(&r, &b, &mut game_rng(0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn single_round_truthful_game() {
        let mut seller = FixedReserves(ReserveVector(vec![dy("0.5")]));
        let mut buyers: Vec<Box<dyn BuyerPolicy>> = vec![Box::new(TruthfulBuyer::new(dy("0.75")))];
        let trace = play_game(&mut seller, &mut buyers, 1, 3).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(trace.round(1).winner, Some(0));
        assert_eq!(revenue(&trace), dy("0.5"));
    }

    #[test]
    fn revenue_sums_payments() {
        let mut seller = FixedReserves(ReserveVector(vec![dy("0.5")]));
        let mut buyers: Vec<Box<dyn BuyerPolicy>> = vec![Box::new(TruthfulBuyer::new(dy("0.25")))];
        let trace = play_game(&mut seller, &mut buyers, 4, 0).unwrap();
        assert_eq!(revenue(&trace), Dyadic::ZERO);
    }

    #[test]
    fn buyer_count_must_match() {
        let mut seller = FixedReserves(ReserveVector(vec![dy("0.5"), dy("0.5")]));
        let mut buyers: Vec<Box<dyn BuyerPolicy>> = vec![Box::new(TruthfulBuyer::new(dy("0.25")))];
        assert!(play_game(&mut seller, &mut buyers, 1, 0).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut seller = FixedReserves(ReserveVector(vec![dy("0.5"), dy("2")]));
        let mut buyers: Vec<Box<dyn BuyerPolicy>> = vec![
            Box::new(TruthfulBuyer::new(dy("0.75"))),
            Box::new(TruthfulBuyer::new(dy("1"))),
        ];
        let trace = play_game(&mut seller, &mut buyers, 2, 0).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,period,active_buyer,reserve_1,bid_1,alloc_1,reserve_2,bid_2,alloc_2,payment");
        assert_eq!(lines[1], "1,,,0.5,0.75,1,2,1,0,0.5");
        assert_eq!(lines.len(), 3);
    }
}

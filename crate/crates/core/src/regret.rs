//! Strategic regret, its split into individual and deviation parts, and the
//! closed-form bounds measured traces are compared against.

use crate::auction::{revenue, BuyerId, GameTrace};
use crate::error::{Error, Result};
use crate::numerics::Dyadic;
use crate::prrfes::exploration_counts;

/// Slack added to every bound before comparing.
pub const BOUND_SLACK: f64 = 1e-9;

/// `T·v̄ - revenue`.
pub fn strategic_regret(trace: &GameTrace, valuations: &[Dyadic]) -> Result<Dyadic> {
    check_valuations(trace, valuations)?;
    let v_bar = max_valuation(valuations);
    Ok(&v_bar.mul_int(trace.len() as i64) - &revenue(trace))
}

fn check_valuations(trace: &GameTrace, valuations: &[Dyadic]) -> Result<()> {
    if valuations.len() != trace.num_buyers() || valuations.is_empty() {
        return Err(Error::Contract(format!(
            "{} valuations for a {}-buyer trace",
            valuations.len(),
            trace.num_buyers()
        )));
    }
    Ok(())
}

fn max_valuation(valuations: &[Dyadic]) -> Dyadic {
    valuations.iter().max().cloned().unwrap_or(Dyadic::ZERO)
}

/// `M(r·v̄ + 4)(log2 log2 T + 2) + (24 + 5r)(M - 1)`.
pub fn theorem1_bound(m: usize, r: u32, v_bar: f64, horizon: u64) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::Input(format!("theorem bound needs T >= 2, got {horizon}")));
    }
    let m = m as f64;
    let r = r as f64;
    Ok(m * (r * v_bar + 4.0) * (log2log2(horizon) + 2.0) + (24.0 + 5.0 * r) * (m - 1.0))
}

/// `(r·v + 4)(log2 log2 I + 2)`.
pub fn lemma2_bound(r: u32, v: f64, subhorizon: u64) -> Result<f64> {
    if subhorizon < 2 {
        return Err(Error::Input(format!("individual bound needs I >= 2, got {subhorizon}")));
    }
    Ok((r as f64 * v + 4.0) * (log2log2(subhorizon) + 2.0))
}

/// `(24 + 5r) / (v̄ - v)`.
pub fn lemma3_bound(r: u32, v_bar: f64, v: f64) -> Result<f64> {
    if v >= v_bar {
        return Err(Error::Input(format!("subhorizon bound needs v < v_bar, got {v} >= {v_bar}")));
    }
    Ok((24.0 + 5.0 * r as f64) / (v_bar - v))
}

fn log2log2(x: u64) -> f64 {
    (x as f64).log2().log2()
}

/// `measured <= bound + BOUND_SLACK`, with the measured side exact.
pub fn within_bound(measured: &Dyadic, bound: f64) -> bool {
    match Dyadic::from_f64_exact(bound + BOUND_SLACK) {
        Ok(b) => measured <= &b,
        Err(_) => bound.is_infinite() && bound > 0.0,
    }
}

/// Regret split of one dividing game together with the bounds that apply.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretReport {
    pub horizon: u64,
    pub seed: u64,
    pub r: u32,
    pub valuations: Vec<Dyadic>,
    pub v_bar: Dyadic,
    pub total: Dyadic,
    /// Regret accrued over each buyer's own rounds.
    pub individual: Vec<Dyadic>,
    /// `Σ_m I^m (v̄ - v^m)`.
    pub deviation: Dyadic,
    pub subhorizons: Vec<u64>,
    pub bound_theorem1: f64,
    /// `None` where `I^m < 2`.
    pub bound_lemma2: Vec<Option<f64>>,
    /// `None` for buyers with the top valuation.
    pub bound_lemma3: Vec<Option<f64>>,
    pub pass_theorem1: bool,
    pub pass_lemma2: Vec<Option<bool>>,
    pub pass_lemma3: Vec<Option<bool>>,
    /// `total == Σ individual + deviation`.
    pub identity_holds: bool,
    /// `Σ I^m == T`.
    pub partition_holds: bool,
}

impl RegretReport {
    pub fn num_buyers(&self) -> usize {
        self.valuations.len()
    }

    pub fn pass_all(&self) -> bool {
        self.pass_theorem1
            && self.identity_holds
            && self.partition_holds
            && self.pass_lemma2.iter().flatten().all(|&ok| ok)
            && self.pass_lemma3.iter().flatten().all(|&ok| ok)
    }

    /// Names of the checks that failed.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.pass_theorem1 {
            out.push(format!("theorem1: {} > {}", self.total, self.bound_theorem1));
        }
        if !self.identity_holds {
            out.push("lemma1 identity".into());
        }
        if !self.partition_holds {
            out.push("subhorizon partition".into());
        }
        for (m, ok) in self.pass_lemma2.iter().enumerate() {
            if *ok == Some(false) {
                out.push(format!("lemma2 buyer {}", m + 1));
            }
        }
        for (m, ok) in self.pass_lemma3.iter().enumerate() {
            if *ok == Some(false) {
                out.push(format!("lemma3 buyer {}", m + 1));
            }
        }
        out
    }

    /// `SReg / T`.
    pub fn averaged(&self) -> f64 {
        self.total.to_f64() / self.horizon as f64
    }

    pub const CSV_HEADER: &'static str = "config_hash,seed,T,M,r,gamma0,mode,v_bar,total,individual,deviation,\
subhorizons,bound_theorem1,bound_lemma2,bound_lemma3,pass_theorem1,pass_lemma1,pass_lemma2,pass_lemma3";

    /// One CSV row; per-buyer lists are `;`-joined, empty where a bound
    /// does not apply.
    pub fn csv_row(&self, config_hash: &str, gamma0: f64, mode: &str) -> String {
        let join = |items: Vec<String>| items.join(";");
        let opt = |x: &Option<f64>| x.map(|b| format!("{b}")).unwrap_or_default();
        let flag = |b: bool| if b { "pass" } else { "fail" };
        let all_flags = |v: &[Option<bool>]| flag(v.iter().flatten().all(|&ok| ok));
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            config_hash,
            self.seed,
            self.horizon,
            self.num_buyers(),
            self.r,
            gamma0,
            mode,
            self.v_bar,
            self.total,
            join(self.individual.iter().map(|d| d.to_string()).collect()),
            self.deviation,
            join(self.subhorizons.iter().map(|i| i.to_string()).collect()),
            self.bound_theorem1,
            join(self.bound_lemma2.iter().map(opt).collect()),
            join(self.bound_lemma3.iter().map(opt).collect()),
            flag(self.pass_theorem1),
            flag(self.identity_holds && self.partition_holds),
            all_flags(&self.pass_lemma2),
            all_flags(&self.pass_lemma3),
        )
    }
}

/// Splits the regret of a dividing trace and evaluates every applicable
/// bound for penalization length `r`.
pub fn decompose(trace: &GameTrace, valuations: &[Dyadic], r: u32) -> Result<RegretReport> {
    check_valuations(trace, valuations)?;
    let m = valuations.len();
    let v_bar = max_valuation(valuations);
    let mut individual = vec![Dyadic::ZERO; m];
    let mut subhorizons = vec![0u64; m];
    for rec in trace.rounds() {
        let Some(active) = rec.active_buyer else {
            return Err(Error::Unsupported(format!(
                "round {} has no active buyer: not a dividing trace",
                rec.t
            )));
        };
        subhorizons[active] += 1;
        let paid = if rec.allocated(active) { rec.payment } else { &Dyadic::ZERO };
        individual[active] = &individual[active] + &(&valuations[active] - paid);
    }
    let deviation: Dyadic = valuations
        .iter()
        .zip(&subhorizons)
        .map(|(v, &i)| (&v_bar - v).mul_int(i as i64))
        .sum();
    let total = strategic_regret(trace, valuations)?;
    let identity_holds = total == &individual.iter().sum::<Dyadic>() + &deviation;
    let partition_holds = subhorizons.iter().sum::<u64>() == trace.len() as u64;

    let v_bar_f = v_bar.to_f64();
    let bound_theorem1 = theorem1_bound(m, r, v_bar_f, trace.len().max(2) as u64)?;
    let bound_lemma2: Vec<Option<f64>> = (0..m)
        .map(|i| lemma2_bound(r, valuations[i].to_f64(), subhorizons[i]).ok())
        .collect();
    let bound_lemma3: Vec<Option<f64>> = (0..m)
        .map(|i| {
            (valuations[i] < v_bar)
                .then(|| lemma3_bound(r, v_bar_f, valuations[i].to_f64()).ok())
                .flatten()
        })
        .collect();
    let pass_lemma2 = bound_lemma2
        .iter()
        .zip(&individual)
        .map(|(b, reg)| b.map(|b| within_bound(reg, b)))
        .collect();
    let pass_lemma3 = bound_lemma3
        .iter()
        .zip(&subhorizons)
        .map(|(b, &i)| b.map(|b| within_bound(&Dyadic::from_int(i as i64), b)))
        .collect();

    Ok(RegretReport {
        horizon: trace.horizon(),
        seed: trace.seed(),
        r,
        valuations: valuations.to_vec(),
        pass_theorem1: within_bound(&total, bound_theorem1),
        v_bar,
        total,
        individual,
        deviation,
        subhorizons,
        bound_theorem1,
        bound_lemma2,
        bound_lemma3,
        pass_lemma2,
        pass_lemma3,
        identity_holds,
        partition_holds,
    })
}

/// A phase whose exploration ran longer than the valuation-location
/// argument allows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplorationExcess {
    pub buyer: BuyerId,
    pub phase: u32,
    pub accepted: u64,
    pub limit: u64,
}

/// Replays each buyer's decisions in its own rounds through a fresh
/// PRRFES machine and checks `K_l < 2·2^{2^{l-1}}` for every phase `l >= 1`.
pub fn exploration_excesses(trace: &GameTrace, r: u32) -> Result<Vec<ExplorationExcess>> {
    let mut decisions: Vec<Vec<bool>> = vec![Vec::new(); trace.num_buyers()];
    for rec in trace.rounds() {
        let active = rec.active_buyer.ok_or_else(|| {
            Error::Unsupported(format!("round {} has no active buyer", rec.t))
        })?;
        decisions[active].push(rec.participation[active]);
    }
    let mut out = Vec::new();
    for (buyer, ds) in decisions.into_iter().enumerate() {
        let log = exploration_counts(r, ds);
        for (l, &k) in log.accepted_explorations.iter().enumerate().skip(1) {
            let limit = exploration_limit(l as u32);
            if k >= limit {
                out.push(ExplorationExcess {
                    buyer,
                    phase: l as u32,
                    accepted: k,
                    limit,
                });
            }
        }
    }
    Ok(out)
}

/// `2·2^{2^{l-1}}` for `l >= 1`, saturating.
pub fn exploration_limit(l: u32) -> u64 {
    let exp = 1u64 << (l - 1);
    if exp >= 63 {
        u64::MAX
    } else {
        2u64 << exp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auction::{play_game, BuyerPolicy, FixedReserves, OwnHistory, ReserveVector};
    use crate::buyers::{EnvelopeBuyer, FreeChoice, TruthfulBuyer};
    use crate::div_engine::divprrfes;
    use rand::RngCore;
    use std::any::Any;

    fn dy(s: &str) -> Dyadic {
        Dyadic::from_decimal(s, 48).unwrap()
    }

    /// Accepts (bids the reserve) in the listed rounds only.
    struct Script(Vec<bool>);

    impl BuyerPolicy for Script {
        fn bid(&mut self, t: u64, reserve: &Dyadic, _: OwnHistory<'_>, _: &mut dyn RngCore) -> crate::error::Result<Dyadic> {
            Ok(if self.0[t as usize - 1] { reserve.clone() } else { Dyadic::ZERO })
        }
        fn as_any(&self) -> &dyn Any {
            self
        }
    }

    #[test]
    fn strategic_regret_examples() {
        let mut seller = FixedReserves(ReserveVector(vec![dy("0.5")]));
        let mut b: Vec<Box<dyn BuyerPolicy>> = vec![Box::new(Script(vec![true]))];
        let trace = play_game(&mut seller, &mut b, 1, 0).unwrap();
        let v = [dy("0.7")];
        assert!((strategic_regret(&trace, &v).unwrap().to_f64() - 0.2).abs() < 1e-12);

        let mut b: Vec<Box<dyn BuyerPolicy>> = vec![Box::new(Script(vec![false, false]))];
        let trace = play_game(&mut seller, &mut b, 2, 0).unwrap();
        assert_eq!(strategic_regret(&trace, &v).unwrap(), dy("0.7").mul_int(2));
    }

    #[test]
    fn three_round_example() {
        // payments 0.5, 0, 0.875 with v̄ = 0.875: 3·0.875 - 1.375
        let mut seller = FixedReserves(ReserveVector(vec![dy("0.5"), dy("0.875")]));
        let mut b: Vec<Box<dyn BuyerPolicy>> = vec![
            Box::new(Script(vec![true, false, false])),
            Box::new(Script(vec![false, false, true])),
        ];
        let trace = play_game(&mut seller, &mut b, 3, 0).unwrap();
        let v = [dy("0.5"), dy("0.875")];
        assert_eq!(strategic_regret(&trace, &v).unwrap(), dy("1.25"));
        assert!(matches!(decompose(&trace, &v, 2), Err(Error::Unsupported(_))));
    }

    #[test]
    fn bound_examples() {
        assert_eq!(theorem1_bound(2, 2, 1.0, 1 << 16).unwrap(), 106.0);
        assert_eq!(theorem1_bound(3, 2, 0.5, 16).unwrap(), 128.0);
        assert_eq!(theorem1_bound(1, 7, 0.5, 256).unwrap(), (3.5 + 4.0) * 5.0);
        assert!(theorem1_bound(1, 2, 1.0, 1).is_err());
        assert_eq!(lemma2_bound(2, 1.0, 4).unwrap(), 18.0);
        assert_eq!(lemma2_bound(2, 0.0, 16).unwrap(), 16.0);
        assert_eq!(lemma2_bound(11, 1.0, 1 << 16).unwrap(), 90.0);
        assert!(lemma2_bound(2, 1.0, 1).is_err());
        assert_eq!(lemma3_bound(2, 1.0, 0.5).unwrap(), 68.0);
        assert_eq!(lemma3_bound(2, 1.0, 0.0).unwrap(), 34.0);
        assert!(lemma3_bound(2, 1.0, 0.9).unwrap() > lemma3_bound(2, 1.0, 0.5).unwrap());
        assert!(lemma3_bound(2, 0.5, 0.5).is_err());
    }

    #[test]
    fn exploration_limits() {
        assert_eq!(exploration_limit(1), 4);
        assert_eq!(exploration_limit(2), 8);
        assert_eq!(exploration_limit(3), 32);
        assert_eq!(exploration_limit(7), u64::MAX);
    }

    fn envelope_game(vals: &[&str], mode: FreeChoice, horizon: u64, seed: u64) -> (GameTrace, Vec<Dyadic>) {
        let mut seller = divprrfes(vals.len(), 0.5, None).unwrap();
        let p_bar = seller.p_bar().clone();
        let v: Vec<Dyadic> = vals.iter().map(|s| dy(s)).collect();
        let mut buyers: Vec<Box<dyn BuyerPolicy>> = v
            .iter()
            .map(|v| Box::new(EnvelopeBuyer::new(v.clone(), 0.5, 2, p_bar.clone(), mode).unwrap()) as Box<dyn BuyerPolicy>)
            .collect();
        (play_game(&mut seller, &mut buyers, horizon, seed).unwrap(), v)
    }

    #[test]
    fn single_buyer_has_no_deviation() {
        let (trace, v) = envelope_game(&["0.6875"], FreeChoice::AlwaysReject, 500, 1);
        let rep = decompose(&trace, &v, 2).unwrap();
        assert_eq!(rep.deviation, Dyadic::ZERO);
        assert_eq!(rep.individual[0], rep.total);
        assert!(rep.pass_all(), "{:?}", rep.failures());
    }

    #[test]
    fn equal_valuations_have_no_deviation() {
        let (trace, v) = envelope_game(&["0.5", "0.5"], FreeChoice::Coin(0.5), 400, 4);
        let rep = decompose(&trace, &v, 2).unwrap();
        assert_eq!(rep.deviation, Dyadic::ZERO);
        assert!(rep.identity_holds && rep.partition_holds);
    }

    #[test]
    fn deviation_counts_subhorizons() {
        let (trace, v) = envelope_game(&["0.5", "0.875"], FreeChoice::AlwaysReject, 2000, 0);
        let rep = decompose(&trace, &v, 2).unwrap();
        let expect = dy("0.375").mul_int(rep.subhorizons[0] as i64);
        assert_eq!(rep.deviation, expect);
        assert!(rep.subhorizons[0] as f64 <= 34.0 / 0.375);
        assert!(rep.pass_all(), "{:?}", rep.failures());
        assert!(exploration_excesses(&trace, 2).unwrap().is_empty());
    }

    #[test]
    fn truthful_single_buyer_report_row() {
        let mut seller = divprrfes(1, 0.5, None).unwrap();
        let mut b: Vec<Box<dyn BuyerPolicy>> = vec![Box::new(TruthfulBuyer::new(dy("0.75")))];
        let trace = play_game(&mut seller, &mut b, 16, 0).unwrap();
        let rep = decompose(&trace, &[dy("0.75")], 2).unwrap();
        let row = rep.csv_row("abc", 0.5, "truthful");
        assert_eq!(row.split(',').count(), RegretReport::CSV_HEADER.split(',').count());
        assert!(row.starts_with("abc,0,16,1,2,0.5,truthful,0.75,"));
    }

    #[test]
    fn within_bound_uses_slack() {
        assert!(within_bound(&dy("2"), 2.0));
        assert!(!within_bound(&dy("2.5"), 2.0));
        assert!(within_bound(&dy("1000"), f64::INFINITY));
    }
}

//! Buyer policies: truthful bidding, the rationality envelope and the
//! backward-induction optimal single buyer.

use std::any::Any;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, RngCore};

use crate::auction::{BuyerId, BuyerPolicy, GameTrace, OwnHistory};
use crate::error::{Error, Result};
use crate::numerics::Dyadic;
use crate::pricing_tree::{RppaAlgorithm, MAX_EXHAUSTIVE_DEPTH};
use crate::prrfes::{self, Mode, PrrfesState};

/// Float slack for comparisons against `ζ·δ`.
pub const ZETA_SLACK: f64 = 1e-12;

/// Bids its valuation every round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthfulBuyer {
    v: Dyadic,
}

impl TruthfulBuyer {
    pub fn new(v: Dyadic) -> Self {
        TruthfulBuyer { v }
    }

    pub fn valuation(&self) -> &Dyadic {
        &self.v
    }
}

impl BuyerPolicy for TruthfulBuyer {
    fn bid(&mut self, _: u64, _: &Dyadic, _: OwnHistory<'_>, _: &mut dyn RngCore) -> Result<Dyadic> {
        Ok(self.v.clone())
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// How an envelope buyer decides where the envelope leaves it free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FreeChoice {
    AlwaysAccept,
    AlwaysReject,
    /// Reject with the given probability.
    Coin(f64),
}

impl fmt::Display for FreeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FreeChoice::AlwaysAccept => f.write_str("always_accept"),
            FreeChoice::AlwaysReject => f.write_str("always_reject"),
            FreeChoice::Coin(p) => write!(f, "coin:{p}"),
        }
    }
}

impl FromStr for FreeChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always_accept" => Ok(FreeChoice::AlwaysAccept),
            "always_reject" => Ok(FreeChoice::AlwaysReject),
            _ => {
                let p = s
                    .strip_prefix("coin:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::Input(format!("unknown free-choice mode {s:?}")))?;
                if (0.0..=1.0).contains(&p) {
                    Ok(FreeChoice::Coin(p))
                } else {
                    Err(Error::Input(format!("coin reject probability {p} outside [0, 1]")))
                }
            }
        }
    }
}

/// What the envelope allows at a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    MustAccept,
    MustReject,
    Free,
}

impl Region {
    pub fn allows(self, accepted: bool) -> bool {
        match self {
            Region::MustAccept => accepted,
            Region::MustReject => !accepted,
            Region::Free => true,
        }
    }
}

/// Envelope region of a buyer with valuation `v` at PRRFES node `node`.
///
/// Prices above `v` are rejected; exploitation and absorbed prices up to
/// `v` are accepted, since those decisions no longer move the price. At an exploration price the buyer must accept once
/// `v - p >= ζ·δ`, `δ` being the node's left increment; the comparison
/// leaves `ZETA_SLACK` on the side of forcing the accept.
pub fn envelope_region(node: &PrrfesState, v: &Dyadic, zeta: f64) -> Region {
    let p = node.price();
    if &p > v {
        return Region::MustReject;
    }
    match node.mode() {
        Mode::Exploit | Mode::AbsorbedAtOne => Region::MustAccept,
        Mode::Explore => {
            let delta = node.analytic_left_increment().unwrap_or(Dyadic::ZERO);
            let gap = (v - &p).to_f64();
            if gap >= zeta * delta.to_f64() - ZETA_SLACK {
                Region::MustAccept
            } else {
                Region::Free
            }
        }
        Mode::Penalize => Region::Free,
    }
}

/// A buyer whose every decision lies inside the rationality envelope.
///
/// It mirrors the seller's PRRFES tracking of itself. A round is active
/// when the reserve equals the mirror's price; any other reserve must be a
/// barrage price.
#[derive(Clone, Debug)]
pub struct EnvelopeBuyer {
    v: Dyadic,
    gamma: f64,
    zeta: f64,
    p_bar: Dyadic,
    mirror: PrrfesState,
    mode: FreeChoice,
}

impl EnvelopeBuyer {
    /// Envelope buyer facing reinforced PRRFES with penalization length `r`
    /// and barrage price `p_bar`.
    pub fn new(v: Dyadic, gamma: f64, r: u32, p_bar: Dyadic, mode: FreeChoice) -> Result<Self> {
        if v.is_negative() || v > Dyadic::ONE {
            return Err(Error::Input(format!("valuation {v} outside [0, 1]")));
        }
        let zeta = prrfes::zeta(r, gamma)?;
        Ok(EnvelopeBuyer {
            v,
            gamma,
            zeta,
            p_bar,
            mirror: prrfes::prrfes_init(r)?,
            mode,
        })
    }

    pub fn valuation(&self) -> &Dyadic {
        &self.v
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn mirror(&self) -> &PrrfesState {
        &self.mirror
    }

    pub fn mode(&self) -> FreeChoice {
        self.mode
    }

    /// Decides on `reserve` and advances the mirror. Returns the canonical
    /// bid: the reserve to accept, 0 to reject.
    pub fn envelope_bid(&mut self, reserve: &Dyadic, rng: &mut dyn RngCore) -> Result<Dyadic> {
        let price = self.mirror.price();
        if reserve != &price {
            if reserve <= &Dyadic::ONE {
                return Err(Error::Internal(format!(
                    "envelope buyer mirror at {} (price {price}) desynchronized: reserve {reserve}",
                    self.mirror
                )));
            }
            return Ok(Dyadic::ZERO);
        }
        if reserve == &self.p_bar {
            return Err(Error::Unsupported(format!(
                "exploration price {reserve} coincides with the barrage price"
            )));
        }
        let accept = match envelope_region(&self.mirror, &self.v, self.zeta) {
            Region::MustAccept => true,
            Region::MustReject => false,
            Region::Free => match self.mode {
                FreeChoice::AlwaysAccept => true,
                FreeChoice::AlwaysReject => false,
                FreeChoice::Coin(p_reject) => !rng.gen_bool(p_reject),
            },
        };
        self.mirror.step(accept);
        Ok(if accept { reserve.clone() } else { Dyadic::ZERO })
    }
}

impl BuyerPolicy for EnvelopeBuyer {
    fn bid(&mut self, _: u64, reserve: &Dyadic, _: OwnHistory<'_>, rng: &mut dyn RngCore) -> Result<Dyadic> {
        self.envelope_bid(reserve, rng)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Backward-induction optimal decisions of a single buyer against a fixed
/// pricing tree.
///
/// Nodes are stored in heap order: the root is 1 and the children of `i`
/// are `2i` (reject) and `2i + 1` (accept).
#[derive(Clone, Debug)]
pub struct DpPolicy {
    horizon: u32,
    accept: Vec<bool>,
    value: Vec<f64>,
}

/// Solves the single-buyer game of `horizon <= 22` rounds for valuation `v`
/// and discount `gamma`. Ties go to accepting.
pub fn dp_optimal<A: RppaAlgorithm>(algo: &A, v: &Dyadic, gamma: f64, horizon: u32) -> Result<DpPolicy> {
    if horizon == 0 || horizon > MAX_EXHAUSTIVE_DEPTH {
        return Err(Error::Config(format!(
            "optimal-buyer horizon must be in 1..={MAX_EXHAUSTIVE_DEPTH}, got {horizon}"
        )));
    }
    prrfes::check_discount(gamma)?;
    let size = 1usize << horizon;
    let mut policy = DpPolicy {
        horizon,
        accept: vec![false; size],
        value: vec![0.0; size],
    };
    let discounts: Vec<f64> = (0..horizon).map(|d| gamma.powi(d as i32)).collect();
    solve(algo, v.to_f64(), &discounts, 1, 0, &mut policy);
    Ok(policy)
}

fn solve<A: RppaAlgorithm>(node: &A, v: f64, discounts: &[f64], idx: usize, depth: usize, out: &mut DpPolicy) -> f64 {
    if depth == discounts.len() {
        return 0.0;
    }
    let mut right = node.clone();
    right.step(true);
    let mut left = node.clone();
    left.step(false);
    let gain = discounts[depth] * (v - node.price().to_f64());
    let accept_value = gain + solve(&right, v, discounts, 2 * idx + 1, depth + 1, out);
    let reject_value = solve(&left, v, discounts, 2 * idx, depth + 1, out);
    let (accept, value) = if accept_value >= reject_value {
        (true, accept_value)
    } else {
        (false, reject_value)
    };
    out.accept[idx] = accept;
    out.value[idx] = value;
    value
}

impl DpPolicy {
    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    /// Optimal discounted surplus of the whole game.
    pub fn root_value(&self) -> f64 {
        self.value[1]
    }

    fn index(&self, path: &[bool]) -> usize {
        assert!(path.len() < self.horizon as usize, "path longer than the horizon");
        path.iter().fold(1usize, |i, &a| 2 * i + a as usize)
    }

    /// Decision at the node reached by `path`.
    pub fn decision(&self, path: &[bool]) -> bool {
        self.accept[self.index(path)]
    }

    pub fn value(&self, path: &[bool]) -> f64 {
        self.value[self.index(path)]
    }

    /// Decisions actually played by the optimal buyer from the root.
    pub fn optimal_path(&self) -> Vec<bool> {
        let mut idx = 1usize;
        let mut out = Vec::with_capacity(self.horizon as usize);
        for _ in 0..self.horizon {
            let a = self.accept[idx];
            out.push(a);
            idx = 2 * idx + a as usize;
        }
        out
    }

    /// Visits every node as `(path, decision, value)` in heap order.
    pub fn for_each_node(&self, mut f: impl FnMut(&[bool], bool, f64)) {
        let mut path = Vec::with_capacity(self.horizon as usize);
        for idx in 1..self.accept.len() {
            let depth = usize::BITS - 1 - idx.leading_zeros();
            path.clear();
            path.extend((0..depth).rev().map(|b| idx >> b & 1 == 1));
            f(&path, self.accept[idx], self.value[idx]);
        }
    }

    /// `path,decision,value` with the path as a bit string (1 = accept).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "path,decision,value")?;
        let mut res = Ok(());
        self.for_each_node(|path, accept, value| {
            if res.is_ok() {
                let bits: String = path.iter().map(|&a| if a { '1' } else { '0' }).collect();
                let d = if accept { "accept" } else { "reject" };
                res = writeln!(out, "{bits},{d},{value}");
            }
        });
        res
    }
}

/// A node where the optimal policy leaves the envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeBreach {
    pub path: Vec<bool>,
    pub price: Dyadic,
    pub accepted: bool,
    /// `v - p`.
    pub gap: f64,
    /// `ζ·δ` at the node (0 off exploration nodes).
    pub threshold: f64,
}

/// Checks every node of `policy` (solved against `root`) for the two facts
/// the regret analysis relies on: no accepted price exceeds `v`, and every
/// rejected exploration price satisfies `v - p < ζ·δ` (with `ZETA_SLACK`).
pub fn prop1_breaches(policy: &DpPolicy, root: &PrrfesState, v: &Dyadic, zeta: f64) -> Vec<EnvelopeBreach> {
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(policy.horizon as usize);
    walk_breaches(policy, root, v, zeta, 1, &mut path, &mut out);
    out
}

fn walk_breaches(
    policy: &DpPolicy,
    node: &PrrfesState,
    v: &Dyadic,
    zeta: f64,
    idx: usize,
    path: &mut Vec<bool>,
    out: &mut Vec<EnvelopeBreach>,
) {
    if path.len() == policy.horizon as usize {
        return;
    }
    let accepted = policy.accept[idx];
    let price = node.price();
    let gap = (v - &price).to_f64();
    let threshold = match node.mode() {
        Mode::Explore => zeta * node.analytic_left_increment().unwrap_or(Dyadic::ZERO).to_f64(),
        _ => 0.0,
    };
    let bad_accept = accepted && &price > v;
    let bad_reject = !accepted && node.mode() == Mode::Explore && gap >= threshold + ZETA_SLACK;
    if bad_accept || bad_reject {
        out.push(EnvelopeBreach {
            path: path.clone(),
            price,
            accepted,
            gap,
            threshold,
        });
    }
    for a in [false, true] {
        let mut child = node.clone();
        child.step(a);
        path.push(a);
        walk_breaches(policy, &child, v, zeta, 2 * idx + a as usize, path, out);
        path.pop();
    }
}

/// Plays a solved [`DpPolicy`] in a single-buyer game.
#[derive(Clone, Debug)]
pub struct DpBuyer {
    policy: std::sync::Arc<DpPolicy>,
    idx: usize,
}

impl DpBuyer {
    pub fn new(policy: std::sync::Arc<DpPolicy>) -> Self {
        DpBuyer { policy, idx: 1 }
    }
}

impl BuyerPolicy for DpBuyer {
    fn bid(&mut self, round: u64, reserve: &Dyadic, _: OwnHistory<'_>, _: &mut dyn RngCore) -> Result<Dyadic> {
        if round > self.policy.horizon as u64 {
            return Err(Error::Contract(format!(
                "optimal buyer solved for {} rounds asked to play round {round}",
                self.policy.horizon
            )));
        }
        let accept = self.policy.accept[self.idx];
        self.idx = 2 * self.idx + accept as usize;
        Ok(if accept { reserve.clone() } else { Dyadic::ZERO })
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// `Σ_t γ^{t-1}·(v - payment_t)` over the rounds buyer `m` won.
pub fn realized_surplus(trace: &GameTrace, m: BuyerId, v: &Dyadic, gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for rec in trace.rounds() {
        if rec.allocated(m) {
            total += discount * (v - rec.payment).to_f64();
        }
        discount *= gamma;
    }
    total
}

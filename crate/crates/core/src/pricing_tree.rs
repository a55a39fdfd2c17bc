//! Single-buyer posted-price algorithms viewed as lazy binary trees.
//!
//! A node is addressed by the accept/reject bits played from the root.
//! Trees are never materialized: validators clone the state machine and walk
//! the paths they need.

use crate::error::{Error, Result};
use crate::numerics::Dyadic;

/// Deepest tree the exhaustive validators agree to enumerate.
pub const MAX_EXHAUSTIVE_DEPTH: u32 = 22;

/// Position of the current node inside a penalization sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PenalizationInfo {
    /// Sequence length `r`.
    pub length: u32,
    /// 1-based; 1 is the starting node.
    pub position: u32,
}

/// A deterministic repeated posted-price algorithm for one buyer. The price
/// depends only on the binary decisions played so far.
pub trait RppaAlgorithm: Clone {
    fn price(&self) -> Dyadic;

    fn step(&mut self, accepted: bool);

    /// Whether [`penalization_info`](Self::penalization_info) is meaningful
    /// for this algorithm.
    fn exposes_penalization(&self) -> bool {
        false
    }

    fn penalization_info(&self) -> Option<PenalizationInfo> {
        None
    }

    /// Exact left increment of the current node when known in closed form.
    fn analytic_left_increment(&self) -> Option<Dyadic> {
        None
    }
}

/// Accept (`true`) / reject (`false`) decisions from the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct PathState {
    pub decisions: Vec<bool>,
}

impl PathState {
    pub fn new(decisions: Vec<bool>) -> Self {
        PathState { decisions }
    }

    /// Parses a `"1011"`-style bit string.
    pub fn from_bits(bits: &str) -> Result<Self> {
        bits.chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::Input(format!("bad path bit {other:?} in {bits:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PathState::new)
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }

    pub fn bits(&self) -> String {
        self.decisions.iter().map(|&a| if a { '1' } else { '0' }).collect()
    }

    /// The algorithm state at the end of this path.
    pub fn replay<A: RppaAlgorithm>(&self, root: &A) -> A {
        let mut node = root.clone();
        for &a in &self.decisions {
            node.step(a);
        }
        node
    }

    /// Prices offered along the path, one per decision.
    pub fn prices<A: RppaAlgorithm>(&self, root: &A) -> Vec<Dyadic> {
        let mut node = root.clone();
        self.decisions
            .iter()
            .map(|&a| {
                let p = node.price();
                node.step(a);
                p
            })
            .collect()
    }
}

/// Outcome of [`verify_right_consistent`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RightConsistency {
    Consistent,
    Violation {
        /// Decisions leading to the offending node.
        path: PathState,
        price: Dyadic,
        max_accepted: Dyadic,
    },
}

impl RightConsistency {
    pub fn is_consistent(&self) -> bool {
        matches!(self, RightConsistency::Consistent)
    }
}

/// Checks that no path of length `<= depth` offers a price below the highest
/// price already accepted on it.
pub fn verify_right_consistent<A: RppaAlgorithm>(algo: &A, depth: u32) -> Result<RightConsistency> {
    if depth > MAX_EXHAUSTIVE_DEPTH {
        return Err(Error::Config(format!(
            "right-consistency check limited to depth {MAX_EXHAUSTIVE_DEPTH}, got {depth}"
        )));
    }
    let mut path = Vec::with_capacity(depth as usize);
    Ok(walk_right_consistent(algo, depth, None, &mut path))
}

fn walk_right_consistent<A: RppaAlgorithm>(
    node: &A,
    remaining: u32,
    max_accepted: Option<&Dyadic>,
    path: &mut Vec<bool>,
) -> RightConsistency {
    if remaining == 0 {
        return RightConsistency::Consistent;
    }
    let price = node.price();
    if let Some(max) = max_accepted {
        if &price < max {
            return RightConsistency::Violation {
                path: PathState::new(path.clone()),
                price,
                max_accepted: max.clone(),
            };
        }
    }
    for accepted in [true, false] {
        let mut child = node.clone();
        child.step(accepted);
        let next_max = if accepted {
            match max_accepted {
                Some(m) if m > &price => Some(m.clone()),
                _ => Some(price.clone()),
            }
        } else {
            max_accepted.cloned()
        };
        path.push(accepted);
        let res = walk_right_consistent(&child, remaining - 1, next_max.as_ref(), path);
        path.pop();
        if !res.is_consistent() {
            return res;
        }
    }
    RightConsistency::Consistent
}

/// An algorithm whose penalization sequences are reinforced: positions
/// `2..r` of every sequence offer price 1 (or the sequence's own price if
/// that is higher), and accepting one of them pins that price for the rest
/// of the game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reinforced<A> {
    inner: A,
    pinned: Option<Dyadic>,
}

impl<A> Reinforced<A> {
    pub fn inner(&self) -> &A {
        &self.inner
    }

    pub fn is_absorbed(&self) -> bool {
        self.pinned.is_some()
    }
}

/// Wraps `algo` with penalization reinforcement.
pub fn reinforce<A: RppaAlgorithm>(algo: A) -> Result<Reinforced<A>> {
    if !algo.exposes_penalization() {
        return Err(Error::Unsupported(
            "reinforcement needs penalization-sequence metadata".into(),
        ));
    }
    Ok(Reinforced {
        inner: algo,
        pinned: None,
    })
}

impl<A: RppaAlgorithm> Reinforced<A> {
    fn in_reinforced_round(&self) -> bool {
        matches!(self.inner.penalization_info(), Some(info) if info.position >= 2)
    }
}

impl<A: RppaAlgorithm> RppaAlgorithm for Reinforced<A> {
    fn price(&self) -> Dyadic {
        if let Some(p) = &self.pinned {
            p.clone()
        } else if self.in_reinforced_round() {
            self.inner.price().max(Dyadic::ONE)
        } else {
            self.inner.price()
        }
    }

    fn step(&mut self, accepted: bool) {
        if self.pinned.is_some() {
            return;
        }
        if accepted && self.in_reinforced_round() {
            self.pinned = Some(self.price());
        } else {
            self.inner.step(accepted);
        }
    }

    fn exposes_penalization(&self) -> bool {
        true
    }

    fn penalization_info(&self) -> Option<PenalizationInfo> {
        if self.pinned.is_some() {
            None
        } else {
            self.inner.penalization_info()
        }
    }
}

/// Left increment `p(n) - inf p(m)` over the left subtree of the node at
/// `path`. Uses the algorithm's closed form when it has one, otherwise the
/// depth-bounded search of [`left_increment_bounded`].
pub fn left_increment<A: RppaAlgorithm>(algo: &A, path: &PathState, depth: u32) -> Result<Dyadic> {
    let node = path.replay(algo);
    if let Some(delta) = node.analytic_left_increment() {
        return Ok(delta);
    }
    left_increment_bounded(algo, path, depth)
}

/// Left increment searched over the left subtree truncated to `depth`
/// levels. The truncated infimum can only be larger than the true one, so
/// the result is an upper bound on the exact increment.
pub fn left_increment_bounded<A: RppaAlgorithm>(
    algo: &A,
    path: &PathState,
    depth: u32,
) -> Result<Dyadic> {
    if depth == 0 || depth > MAX_EXHAUSTIVE_DEPTH {
        return Err(Error::Config(format!(
            "left-increment search depth must be in 1..={MAX_EXHAUSTIVE_DEPTH}, got {depth}"
        )));
    }
    let node = path.replay(algo);
    let price = node.price();
    let mut left = node;
    left.step(false);
    let min = subtree_min(&left, depth);
    Ok(&price - &min)
}

fn subtree_min<A: RppaAlgorithm>(node: &A, levels: u32) -> Dyadic {
    let here = node.price();
    if levels <= 1 {
        return here;
    }
    [true, false]
        .into_iter()
        .map(|a| {
            let mut child = node.clone();
            child.step(a);
            subtree_min(&child, levels - 1)
        })
        .fold(here, |acc, x| if x < acc { x } else { acc })
}

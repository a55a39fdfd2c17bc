//! The PRRFES phase machine (exploration, reinforced penalization,
//! exploitation) and its closed-form parameters.
//!
//! In phase `l` the machine offers `q + k·ε_l` for `k = 1, 2, ...` with
//! `ε_l = 2^{-2^l}`. The first reject ends exploration: the rejected round
//! opens an `r`-round penalization sequence (the remaining `r - 1` rounds
//! offer 1), then the last accepted price is offered for `g(l) = 2^{2^l}`
//! exploitation rounds and the next phase starts from it.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::error::{Error, Result};
use crate::numerics::Dyadic;
use crate::pricing_tree::{PenalizationInfo, RppaAlgorithm};

/// Largest phase index [`phase_params`] accepts.
pub const MAX_PHASE: u32 = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseParams {
    /// `ε_l = 2^{-2^l}`.
    pub epsilon: Dyadic,
    /// `g(l) = 2^{2^l}` exploitation rounds.
    pub g_rounds: BigUint,
}

/// Step size and exploitation length of phase `l`.
pub fn phase_params(l: u32) -> Result<PhaseParams> {
    if l > MAX_PHASE {
        return Err(Error::Config(format!("phase {l} exceeds the supported maximum {MAX_PHASE}")));
    }
    Ok(PhaseParams {
        epsilon: epsilon(l),
        g_rounds: BigUint::one() << (1usize << l),
    })
}

/// `2^{-2^l}`.
pub fn epsilon(l: u32) -> Dyadic {
    Dyadic::pow2(-(1i64 << l))
}

/// `g(l)` as a countdown. Saturates far beyond any `u64` horizon.
fn exploit_rounds(l: u32) -> u128 {
    if (1u32 << l) >= 128 {
        u128::MAX
    } else {
        1u128 << (1u32 << l)
    }
}

/// Smallest penalization length admissible for discount cap `gamma`:
/// `ceil(log_gamma((1 - gamma) / 2))`.
pub fn r_gamma(gamma: f64) -> Result<u32> {
    check_discount(gamma)?;
    let target = (1.0 - gamma) / 2.0;
    // gamma^r <= target  <=>  r >= log_gamma(target), since gamma < 1
    let mut pow = gamma;
    for r in 1..=100_000u32 {
        if pow <= target {
            return Ok(r);
        }
        pow *= gamma;
    }
    Err(Error::Input(format!("discount {gamma} needs an unreasonable penalization length")))
}

/// Valuation-location inflation factor `γ^r / (1 - γ - γ^r)`.
pub fn zeta(r: u32, gamma: f64) -> Result<f64> {
    check_discount(gamma)?;
    let gr = gamma.powi(r as i32);
    let denom = 1.0 - gamma - gr;
    if denom <= 0.0 {
        return Err(Error::Input(format!(
            "zeta({r}, {gamma}) undefined: r must exceed log_gamma(1 - gamma)"
        )));
    }
    Ok(gr / denom)
}

pub(crate) fn check_discount(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("discount {gamma} must lie in (0, 1)")))
    }
}

/// What the next round of the machine is.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Explore,
    Penalize,
    Exploit,
    AbsorbedAtOne,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Explore => "explore",
            Mode::Penalize => "penalize",
            Mode::Exploit => "exploit",
            Mode::AbsorbedAtOne => "absorbed_at_one",
        }
    }
}

/// Penalization rounds either offer 1 (reinforced) or repeat the rejected
/// price (the unreinforced base algorithm).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PenaltyStyle {
    Reinforced,
    Repeat,
}

/// One buyer's position in the PRRFES tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PrrfesState {
    phase: u32,
    q: Dyadic,
    mode: Mode,
    /// Exploration index; in penalize mode, the index of the rejected price.
    k: u64,
    countdown: u128,
    r: u32,
    style: PenaltyStyle,
}

/// Reinforced PRRFES at its root.
pub fn prrfes_init(r: u32) -> Result<PrrfesState> {
    if r == 0 {
        return Err(Error::Config("penalization length r must be at least 1".into()));
    }
    Ok(PrrfesState::new(r))
}

/// Advances `state` by one binary decision.
pub fn prrfes_step(state: &PrrfesState, accepted: bool) -> PrrfesState {
    let mut next = state.clone();
    next.step(accepted);
    next
}

impl PrrfesState {
    /// Reinforced PRRFES with penalization length `r >= 1`.
    pub fn new(r: u32) -> Self {
        Self::with_style(r, PenaltyStyle::Reinforced)
    }

    /// The unreinforced base algorithm: penalization rounds repeat the
    /// rejected price, and accepting one of them counts as accepting it.
    pub fn plain(r: u32) -> Self {
        Self::with_style(r, PenaltyStyle::Repeat)
    }

    fn with_style(r: u32, style: PenaltyStyle) -> Self {
        assert!(r >= 1, "penalization length must be at least 1");
        PrrfesState {
            phase: 0,
            q: Dyadic::ZERO,
            mode: Mode::Explore,
            k: 1,
            countdown: 0,
            r,
            style,
        }
    }

    pub fn phase(&self) -> u32 {
        self.phase
    }

    /// Last accepted price before the current phase (0 initially). Moves to
    /// the phase's final accepted price when exploitation starts.
    pub fn q(&self) -> &Dyadic {
        &self.q
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn countdown(&self) -> u128 {
        self.countdown
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn style(&self) -> PenaltyStyle {
        self.style
    }

    pub fn epsilon(&self) -> Dyadic {
        epsilon(self.phase)
    }

    /// `q + k·ε_l`.
    fn exploration_price(&self, k: u64) -> Dyadic {
        &self.q + &Dyadic::from_i64(k as i64, -(1i64 << self.phase))
    }

    /// Highest price accepted so far in the current exploration sweep, or
    /// `q` when none was.
    pub fn last_accepted(&self) -> Dyadic {
        match self.mode {
            Mode::Explore | Mode::Penalize => self.exploration_price(self.k - 1),
            Mode::Exploit => self.q.clone(),
            Mode::AbsorbedAtOne => self.q.clone(),
        }
    }

    /// Price of a reinforced round: 1, or the rejected price when that
    /// already exceeds 1.
    fn reinforced_price(&self) -> Dyadic {
        self.exploration_price(self.k).max(Dyadic::ONE)
    }

    fn enter_exploit(&mut self) {
        self.q = self.exploration_price(self.k - 1);
        self.mode = Mode::Exploit;
        self.countdown = exploit_rounds(self.phase);
        self.k = 1;
    }

    fn next_phase(&mut self) {
        self.phase += 1;
        self.mode = Mode::Explore;
        self.k = 1;
        self.countdown = 0;
    }
}

impl RppaAlgorithm for PrrfesState {
    fn price(&self) -> Dyadic {
        match self.mode {
            Mode::Explore => self.exploration_price(self.k),
            Mode::Penalize => match self.style {
                PenaltyStyle::Reinforced => self.reinforced_price(),
                PenaltyStyle::Repeat => self.exploration_price(self.k),
            },
            Mode::Exploit | Mode::AbsorbedAtOne => self.q.clone(),
        }
    }

    fn step(&mut self, accepted: bool) {
        match (self.mode, accepted) {
            (Mode::Explore, true) => self.k += 1,
            (Mode::Explore, false) => {
                if self.r > 1 {
                    self.mode = Mode::Penalize;
                    self.countdown = (self.r - 1) as u128;
                } else {
                    self.enter_exploit();
                }
            }
            (Mode::Penalize, false) => {
                self.countdown -= 1;
                if self.countdown == 0 {
                    self.enter_exploit();
                }
            }
            (Mode::Penalize, true) => match self.style {
                PenaltyStyle::Reinforced => {
                    self.q = self.reinforced_price();
                    self.mode = Mode::AbsorbedAtOne;
                    self.countdown = 0;
                }
                PenaltyStyle::Repeat => {
                    // same right subtree as accepting the rejected price
                    self.mode = Mode::Explore;
                    self.countdown = 0;
                    self.k += 1;
                }
            },
            (Mode::Exploit, _) => {
                self.countdown -= 1;
                if self.countdown == 0 {
                    self.next_phase();
                }
            }
            (Mode::AbsorbedAtOne, _) => {}
        }
    }

    fn exposes_penalization(&self) -> bool {
        true
    }

    fn penalization_info(&self) -> Option<PenalizationInfo> {
        match self.mode {
            Mode::Explore => Some(PenalizationInfo {
                length: self.r,
                position: 1,
            }),
            Mode::Penalize => Some(PenalizationInfo {
                length: self.r,
                position: self.r - self.countdown as u32 + 1,
            }),
            Mode::Exploit | Mode::AbsorbedAtOne => None,
        }
    }

    fn analytic_left_increment(&self) -> Option<Dyadic> {
        // The reject branch of any exploration or penalization node falls
        // back to exploiting the last accepted price; every later price is
        // at least that.
        Some(match self.mode {
            Mode::Explore | Mode::Penalize => &self.price() - &self.last_accepted(),
            Mode::Exploit | Mode::AbsorbedAtOne => Dyadic::ZERO,
        })
    }
}

/// `l=2 q=3/16 mode=explore k=4`; penalize and exploit show the countdown
/// `x` instead of `k`.
impl fmt::Display for PrrfesState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "l={} q={} mode={}",
            self.phase,
            self.q.to_fraction_string(),
            self.mode.as_str()
        )?;
        match self.mode {
            Mode::Explore => write!(f, " k={}", self.k),
            Mode::Penalize | Mode::Exploit => write!(f, " x={}", self.countdown),
            Mode::AbsorbedAtOne => Ok(()),
        }
    }
}

/// Exploration statistics of one buyer's decision sequence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PhaseLog {
    /// Accepted exploration prices per phase, `K_l`.
    pub accepted_explorations: Vec<u64>,
}

/// Replays `decisions` through a fresh reinforced machine and counts the
/// accepted exploration offers of each phase.
pub fn exploration_counts(r: u32, decisions: impl IntoIterator<Item = bool>) -> PhaseLog {
    let mut state = PrrfesState::new(r);
    let mut log = PhaseLog {
        accepted_explorations: vec![0],
    };
    for a in decisions {
        if state.mode == Mode::Explore && a {
            log.accepted_explorations[state.phase as usize] += 1;
        }
        state.step(a);
        while log.accepted_explorations.len() <= state.phase as usize {
            log.accepted_explorations.push(0);
        }
    }
    log
}

/// `g(l)` as a plain integer, when it fits.
pub fn g_rounds_u64(l: u32) -> Option<u64> {
    phase_params(l).ok()?.g_rounds.to_u64()
}

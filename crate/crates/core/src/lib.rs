//! Repeated second-price auctions with personal reserve prices, the
//! divPRRFES seller and strategic-buyer models, with exact dyadic prices.

pub mod auction;
pub mod buyers;
pub mod div_engine;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod pricing_tree;
pub mod prrfes;
pub mod regret;

pub use auction::{play_game, run_round, BidVector, GameTrace, ReserveVector, RoundOutcome};
pub use div_engine::{divprrfes, DivPrrfes};
pub use error::{Error, Result};
pub use numerics::Dyadic;
pub use prrfes::PrrfesState;
pub use regret::{decompose, RegretReport};

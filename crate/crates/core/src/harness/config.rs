//! Flat `key = value` experiment configs.
//!
//! ```text
//! # one divPRRFES game per seed
//! M = 2
//! T = 2^12
//! gamma0 = 0.5
//! valuations = 0.5, 0.875
//! buyers = envelope_always_reject
//! seeds = 0..10
//! ```
//!
//! `M`, `T` and `gamma0` accept comma-separated grids; `modes` is a grid of
//! buyer modes applied to every buyer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::buyers::FreeChoice;
use crate::error::{Error, Result};
use crate::numerics::Dyadic;
use crate::prrfes::r_gamma;

/// Fractional bits used when a decimal valuation is not exactly dyadic.
pub const VALUATION_BITS: u32 = 32;

const KEYS: &[&str] = &[
    "M", "T", "gamma0", "r", "valuations", "buyers", "modes", "gammas", "seeds", "output",
];

/// How one buyer behaves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuyerMode {
    Truthful,
    Envelope(FreeChoice),
    DpOptimal,
}

impl fmt::Display for BuyerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuyerMode::Truthful => f.write_str("truthful"),
            BuyerMode::Envelope(fc) => write!(f, "envelope_{fc}"),
            BuyerMode::DpOptimal => f.write_str("dp_optimal"),
        }
    }
}

impl FromStr for BuyerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truthful" => Ok(BuyerMode::Truthful),
            "dp_optimal" => Ok(BuyerMode::DpOptimal),
            _ => s
                .strip_prefix("envelope_")
                .ok_or_else(|| Error::Config(format!("unknown buyer mode {s:?}")))?
                .parse()
                .map(BuyerMode::Envelope)
                .map_err(|e| Error::Config(format!("buyer mode {s:?}: {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValuationSpec {
    Explicit(Vec<Dyadic>),
    /// `k / 2^bits`, `k` uniform on `0..=2^bits`, drawn per (game seed, M).
    Random { seed: u64, bits: u32 },
}

impl ValuationSpec {
    pub fn draw(&self, m: usize, game_seed: u64) -> Vec<Dyadic> {
        match self {
            ValuationSpec::Explicit(v) => v.clone(),
            ValuationSpec::Random { seed, bits } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(game_seed);
                (0..m)
                    .map(|_| Dyadic::from_i64(rng.gen_range(0..=1i64 << bits), -(*bits as i64)))
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BuyerSpec {
    /// One mode per buyer (or a single mode for all).
    PerBuyer(Vec<BuyerMode>),
    /// A sweep over modes, each applied to every buyer.
    Grid(Vec<BuyerMode>),
}

/// A parsed and validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub m: Vec<usize>,
    pub t: Vec<u64>,
    pub gamma0: Vec<f64>,
    pub r: Option<u32>,
    pub valuations: ValuationSpec,
    pub buyers: BuyerSpec,
    pub gammas: Option<Vec<f64>>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    /// First 16 hex digits of the SHA-256 of the canonical config text.
    pub hash: String,
}

/// One point of the parameter grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub m: usize,
    pub t: u64,
    pub gamma0: f64,
    pub r: u32,
    pub modes: Vec<BuyerMode>,
    pub gammas: Vec<f64>,
}

impl Cell {
    /// The modes as one label: a single mode when shared, else `;`-joined.
    pub fn mode_label(&self) -> String {
        if self.modes.windows(2).all(|w| w[0] == w[1]) {
            self.modes[0].to_string()
        } else {
            self.modes.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(";")
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, String> = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key {key:?}", no + 1)));
            }
            let value = value.split_whitespace().collect::<Vec<_>>().join(" ");
            if entries.insert(key.to_string(), value).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", no + 1)));
            }
        }
        let canonical: String = entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let digest = Sha256::digest(canonical.as_bytes());
        let hash: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();

        let get = |k: &str| entries.get(k).map(String::as_str);
        let req = |k: &str| get(k).ok_or_else(|| Error::Config(format!("missing key {k:?}")));

        let m = list(req("M")?, parse_int)?
            .into_iter()
            .map(|x| usize::try_from(x).map_err(|_| Error::Config(format!("M={x} too large"))))
            .collect::<Result<Vec<_>>>()?;
        if m.contains(&0) {
            return Err(Error::Config("M must be at least 1".into()));
        }
        let t = list(req("T")?, parse_int)?;
        if t.contains(&0) {
            return Err(Error::Config("T must be at least 1".into()));
        }
        let gamma0 = list(req("gamma0")?, parse_discount)?;
        let r = get("r").map(parse_int).transpose()?.map(|r| {
            u32::try_from(r).map_err(|_| Error::Config(format!("r={r} too large")))
        }).transpose()?;
        if r == Some(0) {
            return Err(Error::Config("r must be at least 1".into()));
        }
        let valuations = parse_valuations(req("valuations")?)?;
        let buyers = match (get("buyers"), get("modes")) {
            (Some(b), None) => BuyerSpec::PerBuyer(list(b, |s| s.parse())?),
            (None, Some(g)) => BuyerSpec::Grid(list(g, |s| s.parse())?),
            (None, None) => return Err(Error::Config("one of buyers or modes is required".into())),
            (Some(_), Some(_)) => return Err(Error::Config("buyers and modes are exclusive".into())),
        };
        let gammas = get("gammas").map(|g| list(g, parse_discount)).transpose()?;
        let seeds = match get("seeds") {
            Some(s) => parse_seeds(s)?,
            None => vec![0],
        };
        let output = get("output").map(PathBuf::from);

        let cfg = ExperimentConfig {
            m,
            t,
            gamma0,
            r,
            valuations,
            buyers,
            gammas,
            seeds,
            output,
            hash,
        };
        cfg.cells()?;
        Ok(cfg)
    }

    /// The grid in output order: M, then T, then gamma0, then mode.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mode_sets: Vec<Vec<BuyerMode>> = match &self.buyers {
            BuyerSpec::PerBuyer(modes) => vec![modes.clone()],
            BuyerSpec::Grid(modes) => modes.iter().map(|&m| vec![m]).collect(),
        };
        let mut out = Vec::new();
        for &m in &self.m {
            for &t in &self.t {
                for &gamma0 in &self.gamma0 {
                    for modes in &mode_sets {
                        out.push(self.cell(m, t, gamma0, modes)?);
                    }
                }
            }
        }
        Ok(out)
    }

    fn cell(&self, m: usize, t: u64, gamma0: f64, modes: &[BuyerMode]) -> Result<Cell> {
        let r_min = r_gamma(gamma0).map_err(|e| Error::Config(e.to_string()))?;
        let r = self.r.unwrap_or(r_min);
        if r < r_min {
            return Err(Error::Config(format!(
                "r={r} is below the minimum {r_min} for gamma0={gamma0}"
            )));
        }
        let modes = broadcast("buyers", modes, m)?;
        let gammas = match &self.gammas {
            Some(g) => broadcast("gammas", g, m)?,
            None => vec![gamma0; m],
        };
        if let Some(g) = gammas.iter().find(|&&g| g > gamma0) {
            return Err(Error::Config(format!("buyer discount {g} exceeds gamma0={gamma0}")));
        }
        if let ValuationSpec::Explicit(v) = &self.valuations {
            if v.len() != m {
                return Err(Error::Config(format!("{} valuations given for M={m}", v.len())));
            }
        }
        if modes.contains(&BuyerMode::DpOptimal) && (m != 1 || t > 22) {
            return Err(Error::Config(format!(
                "dp_optimal needs M=1 and T<=22, got M={m}, T={t}"
            )));
        }
        Ok(Cell {
            m,
            t,
            gamma0,
            r,
            modes,
            gammas,
        })
    }

    /// Whether every grid has a single point.
    pub fn is_single_cell(&self) -> bool {
        self.cells().map(|c| c.len() == 1).unwrap_or(false)
    }
}

fn broadcast<T: Clone>(what: &str, items: &[T], m: usize) -> Result<Vec<T>> {
    match items.len() {
        1 => Ok(vec![items[0].clone(); m]),
        n if n == m => Ok(items.to_vec()),
        n => Err(Error::Config(format!("{n} {what} given for M={m}"))),
    }
}

fn list<T>(value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("empty list {value:?}")));
    }
    Ok(items)
}

/// Decimal integer or `2^k`.
fn parse_int(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Some((base, exp)) = s.split_once('^') {
        let base: u64 = base.trim().parse().map_err(|_| bad_int(s))?;
        let exp: u32 = exp.trim().parse().map_err(|_| bad_int(s))?;
        return base.checked_pow(exp).ok_or_else(|| bad_int(s));
    }
    s.parse().map_err(|_| bad_int(s))
}

fn bad_int(s: &str) -> Error {
    Error::Config(format!("expected a nonnegative integer, got {s:?}"))
}

fn parse_discount(s: &str) -> Result<f64> {
    let g: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("expected a discount, got {s:?}")))?;
    if g > 0.0 && g < 1.0 {
        Ok(g)
    } else {
        Err(Error::Config(format!("discount {g} outside (0, 1)")))
    }
}

fn parse_valuations(s: &str) -> Result<ValuationSpec> {
    if let Some(args) = s.strip_prefix("random(").and_then(|a| a.strip_suffix(')')) {
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        let [seed, bits] = parts[..] else {
            return Err(Error::Config(format!("expected random(seed, bits), got {s:?}")));
        };
        let seed = parse_int(seed)?;
        let bits = parse_int(bits)?;
        if !(1..=32).contains(&bits) {
            return Err(Error::Config(format!("grid bits {bits} outside 1..=32")));
        }
        return Ok(ValuationSpec::Random {
            seed,
            bits: bits as u32,
        });
    }
    let vals = list(s, |v| {
        let d = Dyadic::from_decimal(v, VALUATION_BITS)
            .map_err(|e| Error::Config(format!("valuation {v:?}: {e}")))?;
        if d.is_negative() || d > Dyadic::ONE {
            return Err(Error::Config(format!("valuation {v} outside [0, 1]")));
        }
        Ok(d)
    })?;
    Ok(ValuationSpec::Explicit(vals))
}

/// `a..b` (end exclusive), or a comma list.
fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (parse_int(a)?, parse_int(b)?);
        if a >= b {
            return Err(Error::Config(format!("empty seed range {s:?}")));
        }
        return Ok((a..b).collect());
    }
    list(s, parse_int)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "M = 1\nT = 16\ngamma0 = 0.5\nvaluations = 0.75\nbuyers = truthful\n";

    #[test]
    fn minimal_config() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        let cells = cfg.cells().unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].r, 2);
        assert_eq!(cells[0].modes, vec![BuyerMode::Truthful]);
        assert_eq!(cfg.hash.len(), 16);
    }

    #[test]
    fn hash_ignores_layout() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let b = ExperimentConfig::parse(
            "# comment\nbuyers=truthful\n\nvaluations =   0.75\ngamma0=0.5\nT=16\nM=1",
        )
        .unwrap();
        assert_eq!(a.hash, b.hash);
        let c = ExperimentConfig::parse(&MINIMAL.replace("16", "32")).unwrap();
        assert_ne!(a.hash, c.hash);
    }

    #[test]
    fn sweep_grid() {
        let cfg = ExperimentConfig::parse(
            "M = 1, 2, 3, 5\nT = 2^8, 2^12, 2^16\ngamma0 = 0.5\nvaluations = random(7, 6)\n\
             modes = envelope_always_reject\nseeds = 0..100\n",
        )
        .unwrap();
        assert_eq!(cfg.cells().unwrap().len(), 12);
        assert_eq!(cfg.seeds.len(), 100);
        assert_eq!(cfg.t, vec![256, 4096, 65536]);
    }

    #[test]
    fn random_valuations_are_on_the_grid() {
        let spec = ValuationSpec::Random { seed: 3, bits: 6 };
        let v = spec.draw(5, 11);
        assert_eq!(v.len(), 5);
        assert_eq!(spec.draw(5, 11), v);
        assert_ne!(spec.draw(5, 12), v);
        for x in v {
            assert!(x >= Dyadic::ZERO && x <= Dyadic::ONE);
            assert!(x.is_zero() || x.exponent() >= -6);
        }
    }

    #[test]
    fn config_errors() {
        let bad = [
            MINIMAL.replace("0.75", "1.5"),
            MINIMAL.replace("0.75", "abc"),
            MINIMAL.replace("M = 1", "M = 2"),
            MINIMAL.replace("truthful", "greedy"),
            MINIMAL.replace("gamma0 = 0.5", "gamma0 = 1"),
            format!("{MINIMAL}r = 1\n"),
            format!("{MINIMAL}colour = red\n"),
            format!("{MINIMAL}M = 2\n"),
            MINIMAL.replace("buyers = truthful", "buyers = dp_optimal").replace("16", "64"),
            format!("{MINIMAL}gammas = 0.7\n"),
            format!("{MINIMAL}seeds = 5..5\n"),
            "M = 1\n".to_string(),
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::parse(&text), Err(Error::Config(_))),
                "accepted:\n{text}"
            );
        }
    }

    #[test]
    fn modes_round_trip() {
        for s in ["truthful", "dp_optimal", "envelope_always_accept", "envelope_always_reject", "envelope_coin:0.5"] {
            assert_eq!(s.parse::<BuyerMode>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn per_buyer_modes_label() {
        let cfg = ExperimentConfig::parse(
            "M = 2\nT = 8\ngamma0 = 0.5\nvaluations = 0.5, 0.25\nbuyers = truthful, envelope_always_accept\n",
        )
        .unwrap();
        assert_eq!(cfg.cells().unwrap()[0].mode_label(), "truthful;envelope_always_accept");
    }
}

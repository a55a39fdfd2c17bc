//! Built-in verification suites with fixed grids and seeds.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::run::{run_sweep, SweepSummary};
use crate::auction::{run_round, BidVector, ReserveVector};
use crate::buyers::{dp_optimal, envelope_region, prop1_breaches};
use crate::error::{Error, Result};
use crate::numerics::Dyadic;
use crate::pricing_tree::{PathState, RppaAlgorithm};
use crate::prrfes::{r_gamma, zeta, PrrfesState};

/// The acceptance sweep: every T, M, gamma0 and envelope mode, 100 seeds,
/// valuations on the 1/64 grid.
pub const ACCEPTANCE_CONFIG: &str = "\
M = 1, 2, 3, 5
T = 2^8, 2^10, 2^12, 2^14, 2^16
gamma0 = 0.5, 0.8
valuations = random(2019, 6)
modes = envelope_always_accept, envelope_always_reject, envelope_coin:0.5
seeds = 0..100
";

pub fn acceptance_config() -> ExperimentConfig {
    ExperimentConfig::parse(ACCEPTANCE_CONFIG).expect("built-in config parses")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Mechanics,
    Prop1,
    Lemma1,
    Lemma2,
    Lemma3,
    Theorem1,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mechanics" => Suite::Mechanics,
            "prop1" => Suite::Prop1,
            "lemma1" => Suite::Lemma1,
            "lemma2" => Suite::Lemma2,
            "lemma3" => Suite::Lemma3,
            "theorem1" => Suite::Theorem1,
            "all" => Suite::All,
            _ => return Err(Error::Config(format!("unknown suite {s:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Runs `suite`; sweep-based suites use [`ACCEPTANCE_CONFIG`].
pub fn verify(suite: Suite, workers: usize) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Mechanics | Suite::All) {
        checks.push(check_mechanics());
    }
    if matches!(suite, Suite::Prop1 | Suite::All) {
        checks.extend(check_prop1()?);
    }
    if !matches!(suite, Suite::Mechanics | Suite::Prop1) {
        let summary = run_sweep(&acceptance_config(), workers)?;
        let all = suite == Suite::All;
        if all || suite == Suite::Lemma1 {
            checks.push(check_lemma1(&summary));
        }
        if all || suite == Suite::Lemma2 {
            checks.push(check_lemma2(&summary));
            checks.push(check_exploration_counts(&summary));
        }
        if all || suite == Suite::Lemma3 {
            checks.push(check_lemma3(&summary));
        }
        if all || suite == Suite::Theorem1 {
            checks.push(check_theorem1(&summary));
            checks.push(check_trend(&summary));
        }
    }
    Ok(VerifyReport { checks })
}

const GRID: [&str; 5] = ["0", "0.25", "0.5", "0.75", "1"];

/// Compares `run_round` with a direct reading of the allocation rule on
/// every reserve/bid combination from `{0, 1/4, 1/2, 3/4, 1}` for M <= 3.
pub fn check_mechanics() -> CheckResult {
    let grid: Vec<Dyadic> = GRID.iter().map(|s| s.parse().expect("grid value")).collect();
    let mut cases = 0u64;
    let mut mismatches = Vec::new();
    for m in 1..=3usize {
        let combos = GRID.len().pow(2 * m as u32);
        for code in 0..combos {
            let mut c = code;
            let mut digit = || {
                let d = c % GRID.len();
                c /= GRID.len();
                grid[d].clone()
            };
            let reserves = ReserveVector((0..m).map(|_| digit()).collect());
            let bids = BidVector((0..m).map(|_| digit()).collect());
            let seed = code as u64;
            let got = run_round(&reserves, &bids, &mut ChaCha8Rng::seed_from_u64(seed));
            let want = literal_rule(&reserves.0, &bids.0, &mut ChaCha8Rng::seed_from_u64(seed));
            let ok = match &got {
                Ok(o) => {
                    (o.participation.clone(), o.winner, o.payment.clone()) == want
                        && o.winner.map_or(true, |w| o.payment >= reserves.0[w])
                }
                Err(_) => false,
            };
            if !ok && mismatches.len() < 3 {
                mismatches.push(format!("reserves {:?} bids {:?}", reserves.0, bids.0));
            }
            cases += 1;
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{cases} cases match the literal rule")
    } else {
        format!("mismatches, e.g. {}", mismatches.join("; "))
    };
    CheckResult::new("mechanics", mismatches.is_empty(), detail)
}

/// Participants bid at least their reserve; the highest participant bid
/// wins (uniform tie-break over ascending ids); the winner pays the larger
/// of its reserve and the best other participant bid.
fn literal_rule(reserves: &[Dyadic], bids: &[Dyadic], rng: &mut ChaCha8Rng) -> (Vec<bool>, Option<usize>, Dyadic) {
    let flags: Vec<bool> = (0..bids.len()).map(|i| bids[i] >= reserves[i]).collect();
    let mut best: Vec<usize> = Vec::new();
    for i in (0..bids.len()).filter(|&i| flags[i]) {
        match best.first() {
            Some(&j) if bids[i] < bids[j] => {}
            Some(&j) if bids[i] == bids[j] => best.push(i),
            _ => best = vec![i],
        }
    }
    let winner = match best.len() {
        0 => return (flags, None, Dyadic::ZERO),
        1 => best[0],
        n => best[rng.gen_range(0..n)],
    };
    let mut pay = reserves[winner].clone();
    for i in 0..bids.len() {
        if flags[i] && i != winner && bids[i] > pay {
            pay = bids[i].clone();
        }
    }
    (flags, Some(winner), pay)
}

/// Backward-induction optimal single buyer against reinforced PRRFES on
/// every node of the tree.
pub fn check_prop1() -> Result<Vec<CheckResult>> {
    let mut instances = 0;
    let mut breaches = Vec::new();
    let mut outside_envelope = Vec::new();
    for gamma in [0.3, 0.5, 0.7] {
        let r = r_gamma(gamma)?;
        let z = zeta(r, gamma)?;
        let root = PrrfesState::new(r);
        for horizon in [8u32, 12, 16] {
            for k in 0..=32 {
                let v = Dyadic::from_i64(k, -5);
                let policy = dp_optimal(&root, &v, gamma, horizon)?;
                instances += 1;
                for b in prop1_breaches(&policy, &root, &v, z) {
                    breaches.push(format!(
                        "gamma={gamma} T={horizon} v={v} path={} p={}",
                        PathState::new(b.path).bits(),
                        b.price
                    ));
                }
                let path = policy.optimal_path();
                let mut node = root.clone();
                for &a in &path {
                    if !envelope_region(&node, &v, z).allows(a) {
                        outside_envelope.push(format!("gamma={gamma} T={horizon} v={v} at {node}"));
                        break;
                    }
                    node.step(a);
                }
            }
        }
    }
    let summarize = |what: &str, list: &[String]| match list.first() {
        None => format!("{instances} optimal policies, no {what}"),
        Some(first) => format!("{} {what}, first: {first}", list.len()),
    };
    Ok(vec![
        CheckResult::new("prop1", breaches.is_empty(), summarize("breaches", &breaches)),
        CheckResult::new(
            "prop1 envelope",
            outside_envelope.is_empty(),
            summarize("optimal paths outside the envelope", &outside_envelope),
        ),
    ])
}

fn first_failure(summary: &SweepSummary, pred: impl Fn(&super::run::GameOutcome) -> bool) -> (usize, Option<String>) {
    let mut n = 0;
    let mut first = None;
    for o in &summary.outcomes {
        if !pred(o) {
            n += 1;
            if first.is_none() {
                first = Some(format!("{} seed {}", super::run::cell_label(&o.cell), o.seed));
            }
        }
    }
    (n, first)
}

fn verdict(name: &str, summary: &SweepSummary, failures: (usize, Option<String>), ok_detail: String) -> CheckResult {
    match failures {
        (0, _) => CheckResult::new(name, true, ok_detail),
        (n, first) => CheckResult::new(
            name,
            false,
            format!("{n} of {} games fail, first: {}", summary.outcomes.len(), first.unwrap_or_default()),
        ),
    }
}

pub fn check_lemma1(summary: &SweepSummary) -> CheckResult {
    let f = first_failure(summary, |o| o.report.identity_holds && o.report.partition_holds);
    let detail = format!("exact identity and round partition on {} traces", summary.outcomes.len());
    verdict("lemma1", summary, f, detail)
}

pub fn check_lemma2(summary: &SweepSummary) -> CheckResult {
    let f = first_failure(summary, |o| o.report.pass_lemma2.iter().flatten().all(|&ok| ok));
    let worst = summary
        .outcomes
        .iter()
        .flat_map(|o| {
            o.report
                .bound_lemma2
                .iter()
                .zip(&o.report.individual)
                .filter_map(|(b, reg)| b.map(|b| b - reg.to_f64()))
        })
        .fold(f64::INFINITY, f64::min);
    verdict("lemma2", summary, f, format!("worst margin {worst:.4}"))
}

pub fn check_exploration_counts(summary: &SweepSummary) -> CheckResult {
    let f = first_failure(summary, |o| o.excesses.is_empty());
    let detail = format!("K_l < 2*2^(2^(l-1)) on {} traces", summary.outcomes.len());
    verdict("exploration count", summary, f, detail)
}

pub fn check_lemma3(summary: &SweepSummary) -> CheckResult {
    let f = first_failure(summary, |o| o.report.pass_lemma3.iter().flatten().all(|&ok| ok));
    let worst = summary
        .outcomes
        .iter()
        .flat_map(|o| {
            o.report
                .bound_lemma3
                .iter()
                .zip(&o.report.subhorizons)
                .filter_map(|(b, &i)| b.map(|b| b - i as f64))
        })
        .fold(f64::INFINITY, f64::min);
    verdict("lemma3", summary, f, format!("worst margin {worst:.4}"))
}

pub fn check_theorem1(summary: &SweepSummary) -> CheckResult {
    let f = first_failure(summary, |o| o.report.pass_theorem1);
    let worst = summary
        .aggregates
        .iter()
        .map(|a| a.margin)
        .fold(f64::INFINITY, f64::min);
    let detail = format!("{} games, worst margin {worst:.4}", summary.outcomes.len());
    verdict("theorem1", summary, f, detail)
}

pub fn check_trend(summary: &SweepSummary) -> CheckResult {
    let bad: Vec<String> = summary
        .trends
        .iter()
        .filter(|t| !t.decreasing)
        .map(|t| format!("M={} gamma0={} mode={} {:?}", t.m, t.gamma0, t.mode, t.points))
        .collect();
    let detail = match bad.first() {
        None => format!("averaged regret decreases in T in all {} groups", summary.trends.len()),
        Some(first) => format!("{} groups not decreasing, first: {first}", bad.len()),
    };
    CheckResult::new("no-regret trend", bad.is_empty(), detail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names() {
        for s in ["mechanics", "prop1", "lemma1", "lemma2", "lemma3", "theorem1", "all"] {
            assert!(s.parse::<Suite>().is_ok());
        }
        assert!("lemma4".parse::<Suite>().is_err());
    }

    #[test]
    fn mechanics_suite_passes() {
        let r = verify(Suite::Mechanics, 1).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.checks.len(), 1);
    }

    #[test]
    fn acceptance_grid_shape() {
        let cfg = acceptance_config();
        assert_eq!(cfg.cells().unwrap().len(), 4 * 5 * 2 * 3);
        assert_eq!(cfg.seeds.len(), 100);
    }
}

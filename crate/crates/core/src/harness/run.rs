//! Game execution, single-config simulation and parameter sweeps.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{BuyerMode, Cell, ExperimentConfig};
use crate::auction::{play_game, BuyerPolicy, GameTrace};
use crate::buyers::{dp_optimal, DpBuyer, EnvelopeBuyer, TruthfulBuyer};
use crate::div_engine::divprrfes;
use crate::error::{Error, Result};
use crate::numerics::Dyadic;
use crate::prrfes::PrrfesState;
use crate::regret::{decompose, exploration_excesses, ExplorationExcess, RegretReport};

/// Everything measured about one game.
#[derive(Clone, Debug)]
pub struct GameOutcome {
    pub cell: Cell,
    pub seed: u64,
    pub valuations: Vec<Dyadic>,
    pub report: RegretReport,
    pub excesses: Vec<ExplorationExcess>,
    pub trace: Option<GameTrace>,
}

impl GameOutcome {
    pub fn pass(&self) -> bool {
        self.report.pass_all() && self.excesses.is_empty()
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = self.report.failures();
        out.extend(self.excesses.iter().map(|e| {
            format!(
                "exploration count buyer {} phase {}: {} >= {}",
                e.buyer + 1,
                e.phase,
                e.accepted,
                e.limit
            )
        }));
        out
    }
}

/// Plays one divPRRFES game for `cell` with the given valuations.
pub fn run_game(cell: &Cell, seed: u64, valuations: &[Dyadic], keep_trace: bool) -> Result<GameOutcome> {
    let mut seller = divprrfes(cell.m, cell.gamma0, Some(cell.r))?;
    let p_bar = seller.p_bar().clone();
    let mut buyers: Vec<Box<dyn BuyerPolicy>> = Vec::with_capacity(cell.m);
    for (i, v) in valuations.iter().enumerate() {
        let gamma = cell.gammas[i];
        let buyer: Box<dyn BuyerPolicy> = match cell.modes[i] {
            BuyerMode::Truthful => Box::new(TruthfulBuyer::new(v.clone())),
            BuyerMode::Envelope(fc) => Box::new(EnvelopeBuyer::new(v.clone(), gamma, cell.r, p_bar.clone(), fc)?),
            BuyerMode::DpOptimal => {
                let horizon = u32::try_from(cell.t).map_err(|_| Error::Config("T too large for dp_optimal".into()))?;
                let policy = dp_optimal(&PrrfesState::new(cell.r), v, gamma, horizon)?;
                Box::new(DpBuyer::new(Arc::new(policy)))
            }
        };
        buyers.push(buyer);
    }
    let trace = play_game(&mut seller, &mut buyers, cell.t, seed)?;
    let report = decompose(&trace, valuations, cell.r)?;
    let excesses = exploration_excesses(&trace, cell.r)?;
    Ok(GameOutcome {
        cell: cell.clone(),
        seed,
        valuations: valuations.to_vec(),
        report,
        excesses,
        trace: keep_trace.then_some(trace),
    })
}

/// Runs `jobs` on `workers` threads (0 = all cores), keeping input order.
pub fn run_parallel<T, R, F>(jobs: Vec<T>, workers: usize, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| jobs.into_par_iter().map(f).collect())
}

/// Result of [`simulate`].
#[derive(Clone, Debug)]
pub struct SimulateSummary {
    pub outcomes: Vec<GameOutcome>,
}

impl SimulateSummary {
    /// `(seed, failure)` pairs.
    pub fn failures(&self) -> Vec<(u64, String)> {
        self.outcomes
            .iter()
            .flat_map(|o| o.failures().into_iter().map(move |f| (o.seed, f)))
            .collect()
    }
}

/// One game per seed of a single-cell config. Writes
/// `trace_seed{seed}.csv`, `events_seed{seed}.csv` and `report.csv` to `out`.
pub fn simulate(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<SimulateSummary> {
    let cells = cfg.cells()?;
    let [cell] = &cells[..] else {
        return Err(Error::Config(format!(
            "simulate runs a single setting but the config describes {}; use sweep",
            cells.len()
        )));
    };
    fs::create_dir_all(out)?;
    let jobs: Vec<u64> = cfg.seeds.clone();
    let outcomes = run_parallel(jobs, workers, |seed| {
        let v = cfg.valuations.draw(cell.m, seed);
        let mut o = run_game(cell, seed, &v, true)?;
        let trace = o.trace.take().expect("trace kept");
        trace.write_csv(BufWriter::new(File::create(out.join(format!("trace_seed{seed}.csv")))?))?;
        trace.write_events_csv(BufWriter::new(File::create(out.join(format!("events_seed{seed}.csv")))?))?;
        Ok(o)
    })?;
    let mut w = BufWriter::new(File::create(out.join("report.csv"))?);
    writeln!(w, "{}", RegretReport::CSV_HEADER)?;
    for o in &outcomes {
        writeln!(w, "{}", o.report.csv_row(&cfg.hash, cell.gamma0, &cell.mode_label()))?;
    }
    w.flush()?;
    Ok(SimulateSummary { outcomes })
}

/// Seed statistics of one grid cell.
#[derive(Clone, Debug)]
pub struct CellAggregate {
    pub cell: Cell,
    pub games: usize,
    pub min_sreg: f64,
    pub mean_sreg: f64,
    pub max_sreg: f64,
    /// Smallest per-game theorem bound.
    pub bound: f64,
    /// Smallest `bound - SReg` over the seeds.
    pub margin: f64,
    pub pass: bool,
}

impl CellAggregate {
    pub fn mean_averaged(&self) -> f64 {
        self.mean_sreg / self.cell.t as f64
    }
}

/// Averaged-regret trend of one `(M, gamma0, mode)` group across `T`.
#[derive(Clone, Debug)]
pub struct TrendCheck {
    pub m: usize,
    pub gamma0: f64,
    pub mode: String,
    /// `(T, mean SReg / T)` ascending in `T`.
    pub points: Vec<(u64, f64)>,
    pub decreasing: bool,
}

#[derive(Clone, Debug)]
pub struct SweepSummary {
    pub outcomes: Vec<GameOutcome>,
    pub aggregates: Vec<CellAggregate>,
    pub trends: Vec<TrendCheck>,
}

impl SweepSummary {
    pub fn failures(&self) -> Vec<(String, u64, String)> {
        self.outcomes
            .iter()
            .flat_map(|o| {
                let label = cell_label(&o.cell);
                o.failures().into_iter().map(move |f| (label.clone(), o.seed, f))
            })
            .collect()
    }
}

pub fn cell_label(c: &Cell) -> String {
    format!("M={} T={} gamma0={} r={} mode={}", c.m, c.t, c.gamma0, c.r, c.mode_label())
}

/// Plays every (cell, seed) pair of `cfg`.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepSummary> {
    let cells = cfg.cells()?;
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let outcomes = run_parallel(jobs, workers, |(c, seed)| {
        let cell = &cells[c];
        run_game(cell, seed, &cfg.valuations.draw(cell.m, seed), false)
    })?;
    let aggregates: Vec<CellAggregate> = outcomes.chunks(cfg.seeds.len()).map(aggregate).collect();
    let trends = trends(&aggregates);
    Ok(SweepSummary {
        outcomes,
        aggregates,
        trends,
    })
}

fn aggregate(games: &[GameOutcome]) -> CellAggregate {
    let sregs: Vec<f64> = games.iter().map(|g| g.report.total.to_f64()).collect();
    CellAggregate {
        cell: games[0].cell.clone(),
        games: games.len(),
        min_sreg: sregs.iter().copied().fold(f64::INFINITY, f64::min),
        mean_sreg: sregs.iter().sum::<f64>() / sregs.len() as f64,
        max_sreg: sregs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bound: games
            .iter()
            .map(|g| g.report.bound_theorem1)
            .fold(f64::INFINITY, f64::min),
        margin: games
            .iter()
            .zip(&sregs)
            .map(|(g, s)| g.report.bound_theorem1 - s)
            .fold(f64::INFINITY, f64::min),
        pass: games.iter().all(GameOutcome::pass),
    }
}

fn trends(aggs: &[CellAggregate]) -> Vec<TrendCheck> {
    let mut groups: Vec<TrendCheck> = Vec::new();
    for a in aggs {
        let mode = a.cell.mode_label();
        let point = (a.cell.t, a.mean_averaged());
        match groups
            .iter_mut()
            .find(|g| g.m == a.cell.m && g.gamma0 == a.cell.gamma0 && g.mode == mode)
        {
            Some(g) => g.points.push(point),
            None => groups.push(TrendCheck {
                m: a.cell.m,
                gamma0: a.cell.gamma0,
                mode,
                points: vec![point],
                decreasing: true,
            }),
        }
    }
    for g in &mut groups {
        g.points.sort_by_key(|p| p.0);
        g.decreasing = g.points.windows(2).all(|w| w[1].1 < w[0].1);
    }
    groups.retain(|g| g.points.len() > 1);
    groups
}

pub const SWEEP_HEADER: &str =
    "kind,config_hash,M,T,gamma0,r,mode,seed,v_bar,sreg,sreg_per_round,bound_theorem1,margin,min_sreg,mean_sreg,max_sreg,pass";

/// Writes `sweep.csv`: every game row of a cell followed by its aggregate.
pub fn write_sweep_csv<W: Write>(cfg: &ExperimentConfig, summary: &SweepSummary, mut out: W) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    let flag = |b: bool| if b { "pass" } else { "fail" };
    let per_cell = cfg.seeds.len();
    for (games, agg) in summary.outcomes.chunks(per_cell).zip(&summary.aggregates) {
        let c = &agg.cell;
        let prefix = format!("{},{},{},{},{},{}", cfg.hash, c.m, c.t, c.gamma0, c.r, c.mode_label());
        for g in games {
            let rep = &g.report;
            writeln!(
                out,
                "game,{prefix},{},{},{},{},{},{},,,,{}",
                g.seed,
                rep.v_bar,
                rep.total,
                rep.averaged(),
                rep.bound_theorem1,
                rep.bound_theorem1 - rep.total.to_f64(),
                flag(g.pass()),
            )?;
        }
        writeln!(
            out,
            "aggregate,{prefix},,,,{},{},{},{},{},{},{}",
            agg.mean_averaged(),
            agg.bound,
            agg.margin,
            agg.min_sreg,
            agg.mean_sreg,
            agg.max_sreg,
            flag(agg.pass),
        )?;
    }
    Ok(())
}

/// [`run_sweep`] plus `sweep.csv` in `out`.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, workers: usize) -> Result<SweepSummary> {
    let summary = run_sweep(cfg, workers)?;
    fs::create_dir_all(out)?;
    let mut w = BufWriter::new(File::create(out.join("sweep.csv"))?);
    write_sweep_csv(cfg, &summary, &mut w)?;
    w.flush()?;
    Ok(summary)
}

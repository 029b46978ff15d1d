//! Preemption solvers.
//!
//! * [`gibbs_solve`]: distributed stochastic relaxation with `N_d`-hop
//!   neighbor exchange.
//! * [`brute_force_optimal`] / [`exact_optimal`]: centralized optimum.
//! * [`min_conn`] / [`min_bw`]: decentralized per-link heuristics.

mod baselines;
mod exact;
mod gibbs;

use std::io::Write;

use serde::Serialize;

pub use baselines::{min_bw, min_bw_local, min_conn, min_conn_local, MAX_LOCAL_FLOWS};
pub use exact::{brute_force_optimal, exact_optimal, MAX_BRUTE_FORCE_FLOWS, MAX_SWEEP_LINK_FLOWS};
pub use gibbs::{gibbs_solve, repair, GibbsConfig, LocalModel};

use crate::error::Result;
use crate::model::{self, DecisionMatrix, GlobalDecision, PreemptionInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Anneal,
    Polish,
    Repair,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub phase: Phase,
    /// Exact energy after the sweep.
    pub h: f64,
    /// Energy of the local model the sampler runs on.
    pub hl: f64,
    pub flips: usize,
    /// Cumulative neighbor messages.
    pub messages: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverTrace {
    pub sweeps: Vec<SweepRecord>,
    /// Annealing sweeps performed (polish and repair excluded).
    pub sweeps_used: usize,
    pub messages_exchanged: u64,
    pub converged: bool,
    pub repaired: bool,
    /// Cost and feasibility before any repair step.
    pub unrepaired_cost: f64,
    pub unrepaired_feasible: bool,
}

impl SolverTrace {
    /// `sweep,phase,H,Hl,flips,messages` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["sweep", "phase", "H", "Hl", "flips", "messages"])?;
        for r in &self.sweeps {
            let phase = match r.phase {
                Phase::Anneal => "anneal",
                Phase::Polish => "polish",
                Phase::Repair => "repair",
            };
            w.write_record([
                r.sweep.to_string(),
                phase.to_string(),
                r.h.to_string(),
                r.hl.to_string(),
                r.flips.to_string(),
                r.messages.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverResult {
    pub solver: String,
    /// Local decisions with every preempted flow broadcast over its span.
    pub decisions: DecisionMatrix,
    pub global: GlobalDecision,
    /// Instance ids of preempted flows, ascending.
    pub preempted: Vec<usize>,
    /// `sum_k alpha_k B^k d^k`.
    pub cost: f64,
    pub feasible: bool,
    /// Exact energy of `decisions`.
    pub hamiltonian: f64,
    pub trace: SolverTrace,
}

impl SolverResult {
    pub(crate) fn from_decisions(
        solver: impl Into<String>,
        inst: &PreemptionInstance,
        raw: &DecisionMatrix,
        trace: SolverTrace,
    ) -> Self {
        let decisions = raw.consolidated();
        let global = decisions.global();
        SolverResult {
            solver: solver.into(),
            preempted: global.preempted_ids(inst),
            cost: model::objective(inst, &global),
            feasible: model::feasible(inst, &decisions),
            hamiltonian: model::hamiltonian(inst, &decisions),
            decisions,
            global,
            trace,
        }
    }

    pub(crate) fn from_global(solver: impl Into<String>, inst: &PreemptionInstance, g: &GlobalDecision) -> Self {
        let d = DecisionMatrix::from_global(inst, g);
        let mut r = SolverResult::from_decisions(solver, inst, &d, SolverTrace::default());
        r.trace.unrepaired_cost = r.cost;
        r.trace.unrepaired_feasible = r.feasible;
        r
    }

    /// Preempted bandwidth (not weighted) summed over flows.
    pub fn preempted_bandwidth(&self, inst: &PreemptionInstance) -> f64 {
        self.global.preempted().map(|k| inst.flows()[k].bandwidth).sum()
    }
}

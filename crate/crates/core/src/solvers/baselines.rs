//! Decentralized per-link baselines. Each deficient link decides alone,
//! with no neighbor information; a flow is preempted if any link picks it.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{short_of, DecisionMatrix, PreemptionInstance};
use crate::solvers::{SolverResult, SolverTrace};

/// Per-link flow count beyond which [`min_bw`] refuses to enumerate.
pub const MAX_LOCAL_FLOWS: usize = 20;

fn finish(name: &str, inst: &PreemptionInstance, d: &DecisionMatrix) -> SolverResult {
    let mut r = SolverResult::from_decisions(name, inst, d, SolverTrace::default());
    r.trace.unrepaired_cost = r.cost;
    r.trace.unrepaired_feasible = r.feasible;
    r
}

/// Flows link `link` preempts under [`min_conn`]: largest bandwidth first
/// (lower id on ties) until the link has room for the new call. Empty for
/// links that already have room.
pub fn min_conn_local(inst: &PreemptionInstance, link: usize) -> Vec<usize> {
    let mut avail = inst.free_bw()[link];
    let mut picked = Vec::new();
    if !short_of(avail, inst.c_new()) {
        return picked;
    }
    let mut local: Vec<usize> = inst.flows_on(link).to_vec();
    local.sort_by(|&a, &b| {
        let (fa, fb) = (&inst.flows()[a], &inst.flows()[b]);
        fb.bandwidth
            .partial_cmp(&fa.bandwidth)
            .unwrap_or(Ordering::Equal)
            .then(fa.id.cmp(&fb.id))
    });
    for k in local {
        if !short_of(avail, inst.c_new()) {
            break;
        }
        picked.push(k);
        avail += inst.flows()[k].bandwidth;
    }
    picked
}

/// Fewest local flows at every link, combined by OR.
pub fn min_conn(inst: &PreemptionInstance) -> SolverResult {
    let mut d = DecisionMatrix::zeros(inst);
    for i in 0..inst.links() {
        for k in min_conn_local(inst, i) {
            d.set(k, i, true);
        }
    }
    finish("min_conn", inst, &d)
}

/// Flows link `link` preempts under [`min_bw`]: the local subset of least
/// weighted bandwidth that makes room (ties: fewer flows, then smaller ids).
/// A link that cannot be made feasible preempts all its flows.
pub fn min_bw_local(inst: &PreemptionInstance, link: usize) -> Result<Vec<usize>> {
    let free = inst.free_bw()[link];
    if !short_of(free, inst.c_new()) {
        return Ok(Vec::new());
    }
    let mut local: Vec<usize> = inst.flows_on(link).to_vec();
    if local.len() > MAX_LOCAL_FLOWS {
        return Err(Error::TooLarge {
            what: "flows on one link",
            size: local.len(),
            limit: MAX_LOCAL_FLOWS,
        });
    }
    local.sort_by_key(|&k| inst.flows()[k].id);
    let mut best: Option<(f64, u32, u32)> = None;
    for mask in 0u32..(1u32 << local.len()) {
        let mut avail = free;
        let mut cost = 0.0;
        for (j, &k) in local.iter().enumerate() {
            if mask & (1 << j) != 0 {
                avail += inst.flows()[k].bandwidth;
                cost += inst.weight(k);
            }
        }
        if short_of(avail, inst.c_new()) {
            continue;
        }
        let better = match best {
            None => true,
            Some((c, count, m)) => {
                if (cost - c).abs() > 1e-9 {
                    cost < c
                } else if mask.count_ones() != count {
                    mask.count_ones() < count
                } else {
                    // lower bits are smaller ids; the set whose lowest
                    // differing member is smaller ranks first
                    let diff = mask ^ m;
                    mask & (diff & diff.wrapping_neg()) != 0
                }
            }
        };
        if better {
            best = Some((cost, mask.count_ones(), mask));
        }
    }
    let mask = best.map_or(u32::MAX, |(_, _, m)| m);
    Ok(local
        .iter()
        .enumerate()
        .filter(|&(j, _)| mask & (1 << j) != 0)
        .map(|(_, &k)| k)
        .collect())
}

/// Least local weighted bandwidth at every link, combined by OR.
pub fn min_bw(inst: &PreemptionInstance) -> Result<SolverResult> {
    let mut d = DecisionMatrix::zeros(inst);
    for i in 0..inst.links() {
        for k in min_bw_local(inst, i)? {
            d.set(k, i, true);
        }
    }
    Ok(finish("min_bw", inst, &d))
}

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use crate::error::{Error, Result};
use crate::model::{short_of, GlobalDecision, PreemptionInstance};
use crate::solvers::SolverResult;

/// Flow count beyond which exhaustive enumeration is refused.
pub const MAX_BRUTE_FORCE_FLOWS: usize = 24;

/// Largest per-link flow count solved link by link; busier instances fall
/// back to branch and bound.
pub const MAX_SWEEP_LINK_FLOWS: usize = 30;

const COST_EPS: f64 = 1e-9;

/// Ranking of candidate global decisions: cost, then preempted count, then
/// the ascending id list compared lexicographically.
fn compare(a: (f64, &[usize]), b: (f64, &[usize])) -> Ordering {
    if (a.0 - b.0).abs() > COST_EPS {
        return a.0.partial_cmp(&b.0).unwrap();
    }
    a.1.len().cmp(&b.1.len()).then_with(|| a.1.cmp(b.1))
}

fn everything(inst: &PreemptionInstance, solver: &str) -> SolverResult {
    let g = GlobalDecision(vec![true; inst.flow_count()]);
    SolverResult::from_global(solver, inst, &g)
}

fn ids_of(inst: &PreemptionInstance, chosen: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut ids: Vec<usize> = chosen.map(|k| inst.flows()[k].id).collect();
    ids.sort_unstable();
    ids
}

/// Exhaustive search over all consistent global decisions. When no
/// decision satisfies every link, every flow is preempted and the result is
/// flagged infeasible.
pub fn brute_force_optimal(inst: &PreemptionInstance) -> Result<SolverResult> {
    let n = inst.flow_count();
    if n > MAX_BRUTE_FORCE_FLOWS {
        return Err(Error::TooLarge {
            what: "flow count",
            size: n,
            limit: MAX_BRUTE_FORCE_FLOWS,
        });
    }
    if !inst.is_satisfiable() {
        return Ok(everything(inst, "brute_force"));
    }
    let flows = inst.flows();
    let mut best: Option<(f64, Vec<usize>, u32)> = None;
    let mut avail = vec![0.0; inst.links()];
    for mask in 0u32..(1u32 << n) {
        avail.copy_from_slice(inst.free_bw());
        let mut cost = 0.0;
        for (k, f) in flows.iter().enumerate() {
            if mask & (1 << k) != 0 {
                cost += inst.weight(k);
                for i in f.links() {
                    avail[i] += f.bandwidth;
                }
            }
        }
        if avail.iter().any(|&a| short_of(a, inst.c_new())) {
            continue;
        }
        let cand = (cost, ids_of(inst, (0..n).filter(|k| mask & (1 << k) != 0)));
        let better = match &best {
            None => true,
            Some((c, ids, _)) => compare((cand.0, &cand.1), (*c, ids)) == Ordering::Less,
        };
        if better {
            best = Some((cand.0, cand.1, mask));
        }
    }
    let (_, _, mask) = best.expect("satisfiable instance has a feasible decision");
    let g = GlobalDecision((0..n).map(|k| mask & (1 << k) != 0).collect());
    Ok(SolverResult::from_global("brute_force", inst, &g))
}

struct Search<'a> {
    inst: &'a PreemptionInstance,
    order: Vec<usize>,
    chosen: Vec<bool>,
    avail: Vec<f64>,
    undecided_bw: Vec<f64>,
    best: Option<(f64, Vec<usize>, Vec<bool>)>,
}

impl Search<'_> {
    /// Cheapest fractional cover of each link's remaining deficit using
    /// undecided flows; the largest over links bounds the extra cost.
    fn lower_bound(&self, depth: usize) -> f64 {
        let inst = self.inst;
        let mut bound: f64 = 0.0;
        for i in 0..inst.links() {
            let deficit = inst.c_new() - self.avail[i];
            if deficit <= 0.0 {
                continue;
            }
            let mut options: Vec<(f64, f64)> = self.order[depth..]
                .iter()
                .filter(|&&k| inst.flows()[k].occupies(i))
                .map(|&k| (inst.weight(k) / inst.flows()[k].bandwidth, inst.flows()[k].bandwidth))
                .collect();
            options.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let mut need = deficit;
            let mut cost = 0.0;
            for (ratio, bw) in options {
                let take = bw.min(need);
                cost += ratio * take;
                need -= take;
                if need <= 0.0 {
                    break;
                }
            }
            bound = bound.max(cost);
        }
        bound
    }

    fn dfs(&mut self, depth: usize, cost: f64) {
        let inst = self.inst;
        for i in 0..inst.links() {
            if short_of(self.avail[i] + self.undecided_bw[i], inst.c_new()) {
                return;
            }
        }
        if let Some((best_cost, _, _)) = &self.best {
            if cost + self.lower_bound(depth) > best_cost + COST_EPS {
                return;
            }
        }
        if depth == self.order.len() {
            let ids = ids_of(inst, (0..inst.flow_count()).filter(|&k| self.chosen[k]));
            let better = match &self.best {
                None => true,
                Some((c, b, _)) => compare((cost, &ids), (*c, b)) == Ordering::Less,
            };
            if better {
                self.best = Some((cost, ids, self.chosen.clone()));
            }
            return;
        }
        let k = self.order[depth];
        let f = inst.flows()[k];
        for i in f.links() {
            self.undecided_bw[i] -= f.bandwidth;
        }
        // keep first, then preempt
        self.dfs(depth + 1, cost);
        self.chosen[k] = true;
        for i in f.links() {
            self.avail[i] += f.bandwidth;
        }
        self.dfs(depth + 1, cost + inst.weight(k));
        self.chosen[k] = false;
        for i in f.links() {
            self.avail[i] -= f.bandwidth;
            self.undecided_bw[i] += f.bandwidth;
        }
    }
}

#[derive(Clone, Copy)]
struct Cell {
    cost: f64,
    count: usize,
    /// Key of the predecessor state on the previous link.
    prev: u64,
    /// Flows starting on this link that are preempted, as a mask over `fresh`.
    fresh: u32,
}

type Layer = HashMap<u64, Cell, BuildHasherDefault<DefaultHasher>>;

struct Sweep<'a> {
    inst: &'a PreemptionInstance,
    fresh: Vec<Vec<usize>>,
    layers: Vec<Layer>,
}

impl Sweep<'_> {
    /// Preempted flow ids along the back-pointer chain ending at `cell` on
    /// link `i`.
    fn ids(&self, i: usize, cell: &Cell) -> Vec<usize> {
        let mut out = Vec::with_capacity(cell.count);
        let mut link = i;
        let mut cur = *cell;
        loop {
            for (b, &k) in self.fresh[link].iter().enumerate() {
                if cur.fresh & (1 << b) != 0 {
                    out.push(self.inst.flows()[k].id);
                }
            }
            if link == 0 {
                break;
            }
            cur = self.layers[link][&cur.prev];
            link -= 1;
        }
        out.sort_unstable();
        out
    }

    fn better(&self, i: usize, a: &Cell, b: &Cell) -> bool {
        if (a.cost - b.cost).abs() > COST_EPS {
            return a.cost < b.cost;
        }
        if a.count != b.count {
            return a.count < b.count;
        }
        self.ids(i, a) < self.ids(i, b)
    }
}

/// Dynamic program over links. Spans are contiguous, so the only state
/// carried from one link to the next is which of the crossing flows are
/// preempted. Ties keep the ranking of [`brute_force_optimal`]: for equal
/// cost and count the smaller id list stays smaller after adding the same
/// later flows.
fn link_sweep(inst: &PreemptionInstance) -> Vec<bool> {
    let flows = inst.flows();
    let links = inst.links();
    let mut sweep = Sweep {
        inst,
        fresh: Vec::with_capacity(links),
        layers: Vec::with_capacity(links),
    };
    let mut states = Layer::default();
    states.insert(
        0,
        Cell {
            cost: 0.0,
            count: 0,
            prev: 0,
            fresh: 0,
        },
    );
    let empty: &[usize] = &[];
    for i in 0..links {
        let on_next = if i + 1 < links { inst.flows_on(i + 1) } else { empty };
        let next_bit = |k: usize| -> u64 {
            on_next
                .iter()
                .position(|&x| x == k)
                .map_or(0, |p| 1 << p)
        };
        let fresh: Vec<usize> = inst
            .flows_on(i)
            .iter()
            .copied()
            .filter(|&k| flows[k].first == i)
            .collect();
        let m = fresh.len();
        let mut fresh_bw = vec![0.0; 1 << m];
        let mut fresh_cost = vec![0.0; 1 << m];
        let mut fresh_key = vec![0u64; 1 << m];
        for mask in 1usize..(1 << m) {
            let b = mask.trailing_zeros() as usize;
            let rest = mask & (mask - 1);
            let k = fresh[b];
            fresh_bw[mask] = fresh_bw[rest] + flows[k].bandwidth;
            fresh_cost[mask] = fresh_cost[rest] + inst.weight(k);
            fresh_key[mask] = fresh_key[rest] | next_bit(k);
        }
        sweep.fresh.push(fresh);
        // layers[i] holds the states after link i - 1
        sweep.layers.push(std::mem::take(&mut states));
        let mut next = Layer::default();
        for (&key, cell) in &sweep.layers[i] {
            let mut base = inst.free_bw()[i];
            let mut carried_key = 0;
            // keys name the preempted crossing flows by position on this link
            for (b, &k) in inst.flows_on(i).iter().enumerate() {
                if key & (1 << b) != 0 {
                    base += flows[k].bandwidth;
                    carried_key |= next_bit(k);
                }
            }
            for mask in 0usize..(1 << m) {
                if short_of(base + fresh_bw[mask], inst.c_new()) {
                    continue;
                }
                let cand = Cell {
                    cost: cell.cost + fresh_cost[mask],
                    count: cell.count + mask.count_ones() as usize,
                    prev: key,
                    fresh: mask as u32,
                };
                let nk = carried_key | fresh_key[mask];
                let replace = match next.get(&nk) {
                    None => true,
                    Some(old) => sweep.better(i, &cand, old),
                };
                if replace {
                    next.insert(nk, cand);
                }
            }
        }
        states = next;
    }
    let mut chosen = vec![false; inst.flow_count()];
    let mut cur = states[&0];
    for i in (0..links).rev() {
        for (b, &k) in sweep.fresh[i].iter().enumerate() {
            if cur.fresh & (1 << b) != 0 {
                chosen[k] = true;
            }
        }
        if i > 0 {
            cur = sweep.layers[i][&cur.prev];
        }
    }
    chosen
}

/// Returns the same optimum (with the same tie ranking) as
/// [`brute_force_optimal`], without its flow limit. Instances with at most
/// [`MAX_SWEEP_LINK_FLOWS`] flows per link are solved link by link; others
/// by branch and bound, which can take exponential time.
pub fn exact_optimal(inst: &PreemptionInstance) -> Result<SolverResult> {
    if !inst.is_satisfiable() {
        return Ok(everything(inst, "exact"));
    }
    let chosen = if inst.max_link_flows() <= MAX_SWEEP_LINK_FLOWS {
        link_sweep(inst)
    } else {
        branch_and_bound(inst)
    };
    Ok(SolverResult::from_global("exact", inst, &GlobalDecision(chosen)))
}

fn branch_and_bound(inst: &PreemptionInstance) -> Vec<bool> {
    let mut order: Vec<usize> = (0..inst.flow_count()).collect();
    order.sort_by_key(|&k| (inst.flows()[k].first, inst.flows()[k].id));
    let mut undecided_bw = vec![0.0; inst.links()];
    for f in inst.flows() {
        for i in f.links() {
            undecided_bw[i] += f.bandwidth;
        }
    }
    let mut search = Search {
        inst,
        order,
        chosen: vec![false; inst.flow_count()],
        avail: inst.free_bw().to_vec(),
        undecided_bw,
        best: None,
    };
    search.dfs(0, 0.0);
    let (_, _, chosen) = search.best.expect("satisfiable instance has a feasible decision");
    chosen
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{four_link_example, RouteFlow};

    fn flow(id: usize, bw: f64, first: usize, last: usize) -> RouteFlow {
        RouteFlow {
            id,
            origin: id,
            class: 1,
            bandwidth: bw,
            first,
            last,
        }
    }

    fn alpha() -> BTreeMap<u32, f64> {
        BTreeMap::from([(1, 1.0), (2, 2.0)])
    }

    #[test]
    fn four_link_optimum() {
        let inst = four_link_example();
        let r = brute_force_optimal(&inst).unwrap();
        assert_eq!(r.preempted, vec![1, 2]);
        assert_eq!(r.cost, 2.0);
        assert!(r.feasible);
        let e = exact_optimal(&inst).unwrap();
        assert_eq!(e.preempted, vec![1, 2]);
    }

    #[test]
    fn nothing_to_do() {
        let inst = PreemptionInstance::new(3, vec![], vec![5.0; 3], 2.0, 2, alpha(), None).unwrap();
        let r = brute_force_optimal(&inst).unwrap();
        assert!(r.preempted.is_empty());
        assert_eq!(r.cost, 0.0);
        assert!(r.feasible);
    }

    #[test]
    fn identical_flows_prefer_lower_id() {
        // deficit 3 on one link, two flows of 3: all four patterns checked by hand
        let flows = vec![flow(1, 3.0, 0, 0), flow(2, 3.0, 0, 0)];
        let inst = PreemptionInstance::new(1, flows, vec![2.0], 5.0, 2, alpha(), None).unwrap();
        let r = brute_force_optimal(&inst).unwrap();
        assert_eq!(r.preempted, vec![1]);
        assert_eq!(exact_optimal(&inst).unwrap().preempted, vec![1]);
    }

    #[test]
    fn unsatisfiable_preempts_everything() {
        let flows = vec![flow(1, 1.0, 0, 1)];
        let inst = PreemptionInstance::new(2, flows, vec![0.0; 2], 5.0, 2, alpha(), None).unwrap();
        let r = brute_force_optimal(&inst).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.preempted, vec![1]);
    }

    #[test]
    fn sweep_and_search_agree() {
        let flows = vec![
            flow(1, 2.0, 0, 2),
            flow(2, 1.0, 0, 0),
            flow(3, 1.0, 1, 1),
            flow(4, 1.0, 2, 3),
            flow(5, 3.0, 1, 3),
            flow(6, 1.0, 3, 3),
        ];
        let inst = PreemptionInstance::new(4, flows, vec![0.5, 1.0, 0.0, 1.5], 2.0, 2, alpha(), None).unwrap();
        let brute = brute_force_optimal(&inst).unwrap();
        let g = GlobalDecision(link_sweep(&inst));
        assert_eq!(g, brute.global);
        assert_eq!(GlobalDecision(branch_and_bound(&inst)), brute.global);
    }

    #[test]
    fn refuses_large_instances() {
        let flows = (0..25).map(|k| flow(k + 1, 1.0, 0, 0)).collect();
        let inst = PreemptionInstance::new(1, flows, vec![0.0], 1.0, 2, alpha(), None).unwrap();
        assert!(matches!(brute_force_optimal(&inst), Err(Error::TooLarge { .. })));
        assert_eq!(exact_optimal(&inst).unwrap().preempted, vec![1]);
    }
}

//! Preemption instances on a single route and their energy functions.
//!
//! Links are indexed `0..L` internally; the JSON form uses `1..=L` spans.
//! A flow's local decisions `d_i^k` exist only on the links it occupies.
//! Flow `k` is preempted globally when any of its links decides to
//! preempt it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Route, Topology};
use crate::traffic::{Class, Flow, SegmentFlow};

/// Largest span `hamiltonian_expanded` will enumerate subsets of.
pub const MAX_EXPANDED_SPAN: usize = 20;

/// Slack for comparing summed bandwidths against the demand.
pub const FEASIBILITY_EPS: f64 = 1e-9;

/// Whether available bandwidth `a` falls short of `c_new`.
pub fn short_of(a: f64, c_new: f64) -> bool {
    a + FEASIBILITY_EPS < c_new
}

/// A flow restricted to the route: occupies links `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteFlow {
    /// Instance-local id, unique within the instance.
    pub id: usize,
    /// Id of the network flow this piece belongs to.
    pub origin: usize,
    pub class: Class,
    pub bandwidth: f64,
    pub first: usize,
    pub last: usize,
}

impl RouteFlow {
    pub fn span(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn occupies(&self, link: usize) -> bool {
        (self.first..=self.last).contains(&link)
    }

    pub fn links(&self) -> std::ops::RangeInclusive<usize> {
        self.first..=self.last
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceDoc", into = "InstanceDoc")]
pub struct PreemptionInstance {
    links: usize,
    flows: Vec<RouteFlow>,
    free_bw: Vec<f64>,
    c_new: f64,
    i_new: Class,
    alpha: BTreeMap<Class, f64>,
    beta: f64,
    // derived
    weights: Vec<f64>,
    offsets: Vec<usize>,
    link_flows: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowDoc {
    k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<usize>,
    class: Class,
    #[serde(rename = "B")]
    bandwidth: f64,
    span: [usize; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    #[serde(rename = "L")]
    links: usize,
    flows: Vec<FlowDoc>,
    free_bw: Vec<f64>,
    c_new: f64,
    i_new: Class,
    #[serde(default)]
    alpha: Option<BTreeMap<Class, f64>>,
    #[serde(default)]
    beta: Option<f64>,
}

impl TryFrom<InstanceDoc> for PreemptionInstance {
    type Error = Error;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        let mut flows = Vec::with_capacity(doc.flows.len());
        for f in doc.flows {
            let [lo, hi] = f.span;
            if lo == 0 || hi < lo {
                return Err(Error::invalid(format!(
                    "flow {} span [{lo}, {hi}] must satisfy 1 <= lo <= hi",
                    f.k
                )));
            }
            flows.push(RouteFlow {
                id: f.k,
                origin: f.origin.unwrap_or(f.k),
                class: f.class,
                bandwidth: f.bandwidth,
                first: lo - 1,
                last: hi - 1,
            });
        }
        let alpha = doc.alpha.unwrap_or_else(|| default_alpha(&flows, doc.i_new));
        PreemptionInstance::new(doc.links, flows, doc.free_bw, doc.c_new, doc.i_new, alpha, doc.beta)
    }
}

impl From<PreemptionInstance> for InstanceDoc {
    fn from(inst: PreemptionInstance) -> Self {
        InstanceDoc {
            links: inst.links,
            flows: inst
                .flows
                .iter()
                .map(|f| FlowDoc {
                    k: f.id,
                    origin: (f.origin != f.id).then_some(f.origin),
                    class: f.class,
                    bandwidth: f.bandwidth,
                    span: [f.first + 1, f.last + 1],
                })
                .collect(),
            free_bw: inst.free_bw,
            c_new: inst.c_new,
            i_new: inst.i_new,
            alpha: Some(inst.alpha),
            beta: Some(inst.beta),
        }
    }
}

/// `alpha(c) = c` for every class present plus the new call's class.
pub fn default_alpha(flows: &[RouteFlow], i_new: Class) -> BTreeMap<Class, f64> {
    flows
        .iter()
        .map(|f| f.class)
        .chain(std::iter::once(i_new))
        .map(|c| (c, c as f64))
        .collect()
}

/// Twice the weighted bandwidth of preempting every flow, so one violated
/// link always outweighs any preemption saving.
pub fn default_beta(flows: &[RouteFlow], alpha: &BTreeMap<Class, f64>) -> f64 {
    let total: f64 = flows
        .iter()
        .map(|f| alpha.get(&f.class).copied().unwrap_or(1.0) * f.bandwidth)
        .sum();
    if total > 0.0 {
        2.0 * total
    } else {
        1.0
    }
}

impl PreemptionInstance {
    /// Validates and indexes an instance. `beta = None` applies
    /// [`default_beta`].
    pub fn new(
        links: usize,
        flows: Vec<RouteFlow>,
        free_bw: Vec<f64>,
        c_new: f64,
        i_new: Class,
        alpha: BTreeMap<Class, f64>,
        beta: Option<f64>,
    ) -> Result<Self> {
        if links == 0 {
            return Err(Error::invalid("instance needs at least one link"));
        }
        if free_bw.len() != links {
            return Err(Error::invalid(format!(
                "free_bw has {} entries for {} links",
                free_bw.len(),
                links
            )));
        }
        if free_bw.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::invalid("free bandwidth must be finite and >= 0"));
        }
        if !(c_new > 0.0) || !c_new.is_finite() {
            return Err(Error::invalid("c_new must be positive"));
        }
        let mut last_weight = f64::NEG_INFINITY;
        for (&class, &w) in &alpha {
            if !(w > 0.0) {
                return Err(Error::invalid(format!("alpha for class {class} must be positive")));
            }
            if w <= last_weight {
                return Err(Error::invalid("alpha must be strictly increasing in class"));
            }
            last_weight = w;
        }
        let mut seen = std::collections::HashSet::new();
        for f in &flows {
            if f.last >= links || f.first > f.last {
                return Err(Error::invalid(format!(
                    "flow {} span [{}, {}] outside route of {} links",
                    f.id,
                    f.first + 1,
                    f.last + 1,
                    links
                )));
            }
            if !(f.bandwidth > 0.0) || !f.bandwidth.is_finite() {
                return Err(Error::invalid(format!("flow {} bandwidth must be positive", f.id)));
            }
            if !alpha.contains_key(&f.class) {
                return Err(Error::invalid(format!("no alpha for class {}", f.class)));
            }
            if !seen.insert(f.id) {
                return Err(Error::invalid(format!("duplicate flow id {}", f.id)));
            }
        }
        let beta = match beta {
            Some(b) if b > 0.0 && b.is_finite() => b,
            Some(b) => return Err(Error::invalid(format!("beta must be positive, got {b}"))),
            None => default_beta(&flows, &alpha),
        };
        let weights = flows.iter().map(|f| alpha[&f.class] * f.bandwidth).collect();
        let mut offsets = Vec::with_capacity(flows.len() + 1);
        let mut acc = 0;
        for f in &flows {
            offsets.push(acc);
            acc += f.span();
        }
        offsets.push(acc);
        let mut link_flows = vec![Vec::new(); links];
        for (k, f) in flows.iter().enumerate() {
            for i in f.links() {
                link_flows[i].push(k);
            }
        }
        Ok(PreemptionInstance {
            links,
            flows,
            free_bw,
            c_new,
            i_new,
            alpha,
            beta,
            weights,
            offsets,
            link_flows,
        })
    }

    /// Builds an instance from synthetic route flows with uniform free
    /// bandwidth.
    pub fn from_segments(
        links: usize,
        segments: &[SegmentFlow],
        free_bw: f64,
        c_new: f64,
        i_new: Class,
    ) -> Result<Self> {
        let flows: Vec<RouteFlow> = segments
            .iter()
            .map(|s| RouteFlow {
                id: s.id,
                origin: s.id,
                class: s.class,
                bandwidth: s.bandwidth,
                first: s.first,
                last: s.last,
            })
            .collect();
        let alpha = default_alpha(&flows, i_new);
        PreemptionInstance::new(links, flows, vec![free_bw; links], c_new, i_new, alpha, None)
    }

    pub fn links(&self) -> usize {
        self.links
    }

    pub fn flows(&self) -> &[RouteFlow] {
        &self.flows
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn free_bw(&self) -> &[f64] {
        &self.free_bw
    }

    pub fn c_new(&self) -> f64 {
        self.c_new
    }

    pub fn i_new(&self) -> Class {
        self.i_new
    }

    pub fn alpha(&self) -> &BTreeMap<Class, f64> {
        &self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `alpha_k * B^k` for flow index `k`.
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k]
    }

    /// Flow indices occupying link `i`.
    pub fn flows_on(&self, link: usize) -> &[usize] {
        &self.link_flows[link]
    }

    pub fn incidence_count(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn max_span(&self) -> usize {
        self.flows.iter().map(RouteFlow::span).max().unwrap_or(0)
    }

    /// Largest number of flows on any single link.
    pub fn max_link_flows(&self) -> usize {
        self.link_flows.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Same instance with a different penalty multiplier.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        PreemptionInstance::new(
            self.links,
            self.flows.clone(),
            self.free_bw.clone(),
            self.c_new,
            self.i_new,
            self.alpha.clone(),
            Some(beta),
        )
    }

    /// Link `i` cannot reach `c_new` even after preempting every local flow.
    pub fn link_unsatisfiable(&self, link: usize) -> bool {
        let total: f64 = self.link_flows[link].iter().map(|&k| self.flows[k].bandwidth).sum();
        short_of(total + self.free_bw[link], self.c_new)
    }

    /// Every link can be satisfied by preempting local flows.
    pub fn is_satisfiable(&self) -> bool {
        (0..self.links).all(|i| !self.link_unsatisfiable(i))
    }

    pub fn deficient_links(&self) -> usize {
        self.free_bw.iter().filter(|&&b| short_of(b, self.c_new)).count()
    }
}

/// Local decisions `d_i^k`, stored per flow over its span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionMatrix {
    firsts: Vec<usize>,
    offsets: Vec<usize>,
    values: Vec<bool>,
}

impl DecisionMatrix {
    pub fn zeros(inst: &PreemptionInstance) -> Self {
        DecisionMatrix {
            firsts: inst.flows.iter().map(|f| f.first).collect(),
            offsets: inst.offsets.clone(),
            values: vec![false; inst.incidence_count()],
        }
    }

    /// Every flow decided uniformly from `g`.
    pub fn from_global(inst: &PreemptionInstance, g: &GlobalDecision) -> Self {
        let mut d = DecisionMatrix::zeros(inst);
        for k in 0..inst.flow_count() {
            d.flow_mut(k).fill(g.0[k]);
        }
        d
    }

    /// Rows in instance flow order, one entry per occupied link.
    pub fn from_rows(inst: &PreemptionInstance, rows: &[Vec<bool>]) -> Result<Self> {
        if rows.len() != inst.flow_count() {
            return Err(Error::invalid("decision rows must match flow count"));
        }
        let mut d = DecisionMatrix::zeros(inst);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != inst.flows[k].span() {
                return Err(Error::invalid(format!(
                    "decision row {k} has {} entries for span {}",
                    row.len(),
                    inst.flows[k].span()
                )));
            }
            d.flow_mut(k).copy_from_slice(row);
        }
        Ok(d)
    }

    pub fn flow_count(&self) -> usize {
        self.firsts.len()
    }

    /// Decisions for flow `k` over its span, in link order.
    pub fn flow(&self, k: usize) -> &[bool] {
        &self.values[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn flow_mut(&mut self, k: usize) -> &mut [bool] {
        &mut self.values[self.offsets[k]..self.offsets[k + 1]]
    }

    /// `d_i^k`, or `None` when flow `k` does not occupy link `i`.
    pub fn get(&self, k: usize, link: usize) -> Option<bool> {
        let off = link.checked_sub(self.firsts[k])?;
        self.flow(k).get(off).copied()
    }

    pub fn set(&mut self, k: usize, link: usize, value: bool) {
        let off = link - self.firsts[k];
        self.flow_mut(k)[off] = value;
    }

    pub fn incidence(&self, k: usize, link: usize) -> usize {
        self.offsets[k] + link - self.firsts[k]
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        (0..self.flow_count()).map(|k| self.flow(k).to_vec()).collect()
    }

    pub fn global(&self) -> GlobalDecision {
        GlobalDecision((0..self.flow_count()).map(|k| self.flow(k).iter().any(|&b| b)).collect())
    }

    /// Broadcasts each flow's global decision to every link it occupies.
    pub fn consolidated(&self) -> Self {
        let mut d = self.clone();
        for k in 0..self.flow_count() {
            let any = self.flow(k).iter().any(|&b| b);
            d.flow_mut(k).fill(any);
        }
        d
    }
}

impl Serialize for DecisionMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<u8>> = (0..self.flow_count())
            .map(|k| self.flow(k).iter().map(|&b| b as u8).collect())
            .collect();
        rows.serialize(s)
    }
}

/// Per-flow global decision `d^k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct GlobalDecision(pub Vec<bool>);

impl GlobalDecision {
    pub fn none(inst: &PreemptionInstance) -> Self {
        GlobalDecision(vec![false; inst.flow_count()])
    }

    pub fn preempted(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k)
    }

    pub fn preempted_count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    /// Instance ids of the preempted flows, ascending.
    pub fn preempted_ids(&self, inst: &PreemptionInstance) -> Vec<usize> {
        let mut ids: Vec<usize> = self.preempted().map(|k| inst.flows[k].id).collect();
        ids.sort_unstable();
        ids
    }
}

/// Restricts network flows to `route`. Only flows of a class strictly below
/// `i_new` are preemptible; all flows count against free bandwidth. A flow
/// meeting the route in several disjoint stretches becomes one record per
/// stretch (sharing its `origin`).
pub fn extract_instance(
    t: &Topology,
    flows: &[Flow],
    route: &Route,
    c_new: f64,
    i_new: Class,
    alpha: Option<BTreeMap<Class, f64>>,
    beta: Option<f64>,
) -> Result<PreemptionInstance> {
    let route_links = route.links(t);
    let links = route_links.len();
    let mut position = vec![usize::MAX; t.edge_count()];
    for (i, e) in route_links.iter().enumerate() {
        position[e.0] = i;
    }
    let mut load = vec![0.0; links];
    let mut pieces = Vec::new();
    for f in flows {
        let mut on: Vec<usize> = f
            .path
            .links(t)
            .iter()
            .filter_map(|e| (position[e.0] != usize::MAX).then_some(position[e.0]))
            .collect();
        if on.is_empty() {
            continue;
        }
        for &i in &on {
            load[i] += f.bandwidth;
        }
        if f.class >= i_new {
            continue;
        }
        on.sort_unstable();
        let mut start = on[0];
        for w in 0..on.len() {
            let end_here = w + 1 == on.len() || on[w + 1] != on[w] + 1;
            if end_here {
                pieces.push((f, start, on[w]));
                if w + 1 < on.len() {
                    start = on[w + 1];
                }
            }
        }
    }
    let route_flows: Vec<RouteFlow> = pieces
        .iter()
        .enumerate()
        .map(|(n, &(f, first, last))| RouteFlow {
            id: n + 1,
            origin: f.id,
            class: f.class,
            bandwidth: f.bandwidth,
            first,
            last,
        })
        .collect();
    let free_bw = route_links
        .iter()
        .zip(&load)
        .map(|(e, l)| (t.edge(*e).capacity - l).max(0.0))
        .collect();
    let alpha = alpha.unwrap_or_else(|| {
        let mut a = default_alpha(&route_flows, i_new);
        for f in flows {
            a.entry(f.class).or_insert(f.class as f64);
        }
        a
    });
    PreemptionInstance::new(links, route_flows, free_bw, c_new, i_new, alpha, beta)
}

/// `sum_k alpha_k B^k d^k`.
pub fn objective(inst: &PreemptionInstance, g: &GlobalDecision) -> f64 {
    g.preempted().map(|k| inst.weights[k]).sum()
}

/// Bandwidth available to the new call at each link, `A_i`.
pub fn available(inst: &PreemptionInstance, d: &DecisionMatrix) -> Vec<f64> {
    (0..inst.links)
        .map(|i| {
            inst.free_bw[i]
                + inst.link_flows[i]
                    .iter()
                    .filter(|&&k| d.get(k, i) == Some(true))
                    .map(|&k| inst.flows[k].bandwidth)
                    .sum::<f64>()
        })
        .collect()
}

/// Links where `A_i < c_new`.
pub fn violated_links(inst: &PreemptionInstance, d: &DecisionMatrix) -> usize {
    available(inst, d).iter().filter(|&&a| short_of(a, inst.c_new)).count()
}

pub fn penalty(inst: &PreemptionInstance, d: &DecisionMatrix) -> f64 {
    inst.beta * violated_links(inst, d) as f64
}

pub fn feasible(inst: &PreemptionInstance, d: &DecisionMatrix) -> bool {
    violated_links(inst, d) == 0
}

/// Per flow, whether all of its local decisions agree.
pub fn consistency(d: &DecisionMatrix) -> Vec<bool> {
    (0..d.flow_count())
        .map(|k| {
            let row = d.flow(k);
            row.iter().all(|&b| b == row[0])
        })
        .collect()
}

/// Exact energy: weighted bandwidth of globally preempted flows plus
/// `beta` per link whose available bandwidth falls short of `c_new`.
pub fn hamiltonian(inst: &PreemptionInstance, d: &DecisionMatrix) -> f64 {
    let flow_term: f64 = (0..inst.flow_count())
        .map(|k| {
            let keep: f64 = d.flow(k).iter().map(|&b| if b { 0.0 } else { 1.0 }).product();
            inst.weights[k] * (1.0 - keep)
        })
        .sum();
    flow_term + penalty(inst, d)
}

/// The same energy written as the alternating inclusion–exclusion sum over
/// every non-empty subset of each flow's span. Kept as an independent
/// cross-check of [`hamiltonian`].
pub fn hamiltonian_expanded(inst: &PreemptionInstance, d: &DecisionMatrix) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..inst.flow_count() {
        let row = d.flow(k);
        if row.len() > MAX_EXPANDED_SPAN {
            return Err(Error::TooLarge {
                what: "flow span",
                size: row.len(),
                limit: MAX_EXPANDED_SPAN,
            });
        }
        let mut sum: i64 = 0;
        for subset in 1u32..(1u32 << row.len()) {
            let all_on = (0..row.len()).all(|j| subset & (1 << j) == 0 || row[j]);
            if all_on {
                if subset.count_ones() % 2 == 1 {
                    sum += 1;
                } else {
                    sum -= 1;
                }
            }
        }
        total += inst.weights[k] * sum as f64;
    }
    Ok(total + penalty(inst, d))
}

/// Second-order truncation: first-order terms plus pairwise interactions
/// between links at most `nd` hops apart (each unordered pair once);
/// higher-order terms are dropped.
pub fn local_hamiltonian(inst: &PreemptionInstance, d: &DecisionMatrix, nd: usize) -> f64 {
    let flow_term: f64 = (0..inst.flow_count())
        .map(|k| {
            let row = d.flow(k);
            let first: usize = row.iter().filter(|&&b| b).count();
            let mut second = 0usize;
            for a in 0..row.len() {
                if !row[a] {
                    continue;
                }
                for b in (a + 1)..row.len().min(a + nd + 1) {
                    if row[b] {
                        second += 1;
                    }
                }
            }
            inst.weights[k] * (first as f64 - second as f64)
        })
        .sum();
    flow_term + penalty(inst, d)
}

/// Inclusion–exclusion truncated to subsets whose links lie within `nd`
/// hops of each other, at every order. Per flow this equals the number of
/// preempting links with no other preempting link in the next `nd` hops,
/// so it coincides with [`hamiltonian`] whenever no span exceeds `nd + 1`.
pub fn windowed_hamiltonian(inst: &PreemptionInstance, d: &DecisionMatrix, nd: usize) -> f64 {
    let flow_term: f64 = (0..inst.flow_count())
        .map(|k| inst.weights[k] * window_count(d.flow(k), nd) as f64)
        .sum();
    flow_term + penalty(inst, d)
}

pub(crate) fn window_count(row: &[bool], nd: usize) -> usize {
    (0..row.len())
        .filter(|&a| row[a] && !row[a + 1..row.len().min(a + nd + 1)].iter().any(|&b| b))
        .count()
}

/// The four-link example: flow 1 on links 1–3, flow 2 on link 4, flow 3 on
/// link 1, flow 4 on link 2, flow 5 on links 3–4; unit bandwidths, equal
/// weights, no free bandwidth, unit demand.
pub fn four_link_example() -> PreemptionInstance {
    let spans = [(1, 0, 2), (2, 3, 3), (3, 0, 0), (4, 1, 1), (5, 2, 3)];
    let flows = spans
        .iter()
        .map(|&(id, first, last)| RouteFlow {
            id,
            origin: id,
            class: 1,
            bandwidth: 1.0,
            first,
            last,
        })
        .collect();
    let alpha = BTreeMap::from([(1, 1.0), (2, 2.0)]);
    PreemptionInstance::new(4, flows, vec![0.0; 4], 1.0, 2, alpha, Some(100.0))
        .expect("fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice, shortest_path, NodeId};

    fn four_link_sample(inst: &PreemptionInstance) -> DecisionMatrix {
        // d_1^1, d_1^3, d_2^1, d_2^4, d_3^1, d_3^5, d_4^2, d_4^5 = 1,0,1,0,1,0,1,0
        let mut d = DecisionMatrix::zeros(inst);
        for (k, i, v) in [(0, 0, 1), (2, 0, 0), (0, 1, 1), (3, 1, 0), (0, 2, 1), (4, 2, 0), (1, 3, 1), (4, 3, 0)] {
            d.set(k, i, v == 1);
        }
        d
    }

    fn single(links: usize, first: usize, last: usize, bw: f64, free: f64, c_new: f64) -> PreemptionInstance {
        let flows = vec![RouteFlow {
            id: 1,
            origin: 1,
            class: 1,
            bandwidth: bw,
            first,
            last,
        }];
        PreemptionInstance::new(links, flows, vec![free; links], c_new, 2, BTreeMap::from([(1, 2.0), (2, 3.0)]), None)
            .unwrap()
    }

    #[test]
    fn four_link_layout() {
        let inst = four_link_example();
        assert_eq!(inst.flow_count(), 5);
        assert_eq!(inst.incidence_count(), 8);
        assert_eq!(inst.flows_on(0), &[0, 2]);
        assert_eq!(inst.flows_on(3), &[1, 4]);
    }

    #[test]
    fn objective_examples() {
        let inst = four_link_example();
        assert_eq!(objective(&inst, &GlobalDecision::none(&inst)), 0.0);
        let g = GlobalDecision(vec![true, true, false, false, false]);
        assert_eq!(objective(&inst, &g), 2.0);
        let one = single(1, 0, 0, 5.0, 0.0, 1.0);
        assert_eq!(objective(&one, &GlobalDecision(vec![true])), 10.0);
    }

    #[test]
    fn hamiltonian_examples() {
        let inst = four_link_example();
        let d = four_link_sample(&inst);
        assert_eq!(hamiltonian(&inst, &d), 2.0);
        assert!(feasible(&inst, &d));
        assert!(consistency(&d).iter().all(|&c| c));
        assert_eq!(d.global().preempted_ids(&inst), vec![1, 2]);

        // no preemption, ample free bandwidth
        let easy = single(3, 0, 2, 1.0, 5.0, 1.0);
        assert_eq!(hamiltonian(&easy, &DecisionMatrix::zeros(&easy)), 0.0);

        // exactly three short links
        let flows = vec![];
        let three = PreemptionInstance::new(4, flows, vec![0.0, 0.0, 0.0, 9.0], 2.0, 2, BTreeMap::from([(2, 1.0)]), Some(7.0))
            .unwrap();
        assert_eq!(hamiltonian(&three, &DecisionMatrix::zeros(&three)), 21.0);
        assert!(!feasible(&three, &DecisionMatrix::zeros(&three)));
    }

    #[test]
    fn expanded_single_link_term() {
        let inst = single(2, 1, 1, 5.0, 10.0, 1.0);
        let mut d = DecisionMatrix::zeros(&inst);
        d.set(0, 1, true);
        assert_eq!(hamiltonian_expanded(&inst, &d).unwrap(), 10.0);
    }

    #[test]
    fn expanded_three_link_all_patterns() {
        let inst = single(3, 0, 2, 1.5, 10.0, 1.0);
        for bits in 0..8u8 {
            let row: Vec<bool> = (0..3).map(|j| bits & (1 << j) != 0).collect();
            let d = DecisionMatrix::from_rows(&inst, &[row]).unwrap();
            assert_eq!(hamiltonian(&inst, &d), hamiltonian_expanded(&inst, &d).unwrap());
        }
    }

    #[test]
    fn expanded_refuses_long_spans() {
        let inst = single(21, 0, 20, 1.0, 10.0, 1.0);
        assert!(matches!(
            hamiltonian_expanded(&inst, &DecisionMatrix::zeros(&inst)),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn local_hamiltonian_three_link_flow() {
        // alpha * B = 1; all three links preempt; nd = 2 keeps all three pairs.
        let flows = vec![RouteFlow {
            id: 1,
            origin: 1,
            class: 1,
            bandwidth: 1.0,
            first: 0,
            last: 2,
        }];
        let inst = PreemptionInstance::new(3, flows, vec![5.0; 3], 1.0, 2, BTreeMap::from([(1, 1.0), (2, 2.0)]), None)
            .unwrap();
        let d = DecisionMatrix::from_rows(&inst, &[vec![true; 3]]).unwrap();
        assert_eq!(local_hamiltonian(&inst, &d, 2), 0.0);
        assert_eq!(local_hamiltonian(&inst, &d, 1), 1.0);
        assert_eq!(hamiltonian(&inst, &d), 1.0);
        assert_eq!(windowed_hamiltonian(&inst, &d, 2), 1.0);
        assert_eq!(windowed_hamiltonian(&inst, &d, 0), 3.0);
    }

    #[test]
    fn zero_decisions_leave_only_penalty() {
        let inst = four_link_example();
        let d = DecisionMatrix::zeros(&inst);
        assert_eq!(local_hamiltonian(&inst, &d, 3), hamiltonian(&inst, &d));
        assert_eq!(hamiltonian(&inst, &d), 400.0);
    }

    #[test]
    fn consistency_detects_split_votes() {
        let inst = single(3, 0, 2, 1.0, 0.0, 1.0);
        let d = DecisionMatrix::from_rows(&inst, &[vec![true, false, true]]).unwrap();
        assert_eq!(consistency(&d), vec![false]);
        assert_eq!(consistency(&DecisionMatrix::zeros(&inst)), vec![true]);
    }

    #[test]
    fn feasibility_examples() {
        let easy = single(2, 0, 1, 1.0, 3.0, 1.0);
        assert!(feasible(&easy, &DecisionMatrix::zeros(&easy)));
        let tight = single(2, 0, 1, 1.0, 0.0, 1.0);
        assert!(!feasible(&tight, &DecisionMatrix::zeros(&tight)));
    }

    #[test]
    fn alpha_must_increase_with_class() {
        let r = PreemptionInstance::new(1, vec![], vec![0.0], 1.0, 2, BTreeMap::from([(1, 2.0), (2, 1.0)]), None);
        assert!(r.is_err());
    }

    #[test]
    fn instance_json_uses_one_based_spans() {
        let inst = four_link_example();
        let s = serde_json::to_string(&inst).unwrap();
        assert!(s.contains("\"L\":4"));
        assert!(s.contains("{\"k\":1,\"class\":1,\"B\":1.0,\"span\":[1,3]}"));
        let back: PreemptionInstance = serde_json::from_str(&s).unwrap();
        assert_eq!(inst, back);
        let bad = s.replace("\"span\":[1,3]", "\"span\":[0,3]");
        assert!(serde_json::from_str::<PreemptionInstance>(&bad).is_err());
    }

    #[test]
    fn extract_saturated_route() {
        // 1x? lattice row: route along the top row of a 2x4 grid, flows
        // filling it completely with lower-class traffic.
        let t = build_lattice(2, 4, 10.0).unwrap();
        let route = shortest_path(&t, NodeId(0), NodeId(3)).unwrap();
        let flows = vec![
            Flow { id: 10, class: 1, bandwidth: 6.0, path: route.clone() },
            Flow {
                id: 11,
                class: 1,
                bandwidth: 4.0,
                path: Route::new(&t, vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]).unwrap(),
            },
        ];
        let inst = extract_instance(&t, &flows, &route, 5.0, 2, None, None).unwrap();
        assert_eq!(inst.flow_count(), 2);
        assert!(inst.free_bw().iter().all(|&b| b == 0.0));
        assert_eq!(inst.flows()[0].origin, 10);
    }

    #[test]
    fn extract_no_intersection() {
        let t = build_lattice(3, 3, 10.0).unwrap();
        let route = shortest_path(&t, NodeId(0), NodeId(2)).unwrap();
        let other = shortest_path(&t, NodeId(6), NodeId(8)).unwrap();
        let flows = vec![Flow { id: 0, class: 1, bandwidth: 3.0, path: other }];
        let inst = extract_instance(&t, &flows, &route, 5.0, 2, None, None).unwrap();
        assert_eq!(inst.flow_count(), 0);
        assert_eq!(inst.free_bw(), &[10.0, 10.0]);
    }

    #[test]
    fn extract_splits_disjoint_overlaps_and_skips_high_class() {
        // Route 0-1-2-3-4-5 on a 2x6 grid; a flow uses route links 0 and
        // 4 but detours below in between (0-1, 1-7, 7-8, 8-9, 9-10, 10-4, 4-5).
        let t = build_lattice(2, 6, 10.0).unwrap();
        let route = shortest_path(&t, NodeId(0), NodeId(5)).unwrap();
        let path = Route::new(&t, [0, 1, 7, 8, 9, 10, 4, 5].map(NodeId).to_vec()).unwrap();
        let flows = vec![
            Flow { id: 3, class: 1, bandwidth: 2.0, path },
            Flow { id: 4, class: 2, bandwidth: 5.0, path: route.clone() },
        ];
        let inst = extract_instance(&t, &flows, &route, 5.0, 2, None, None).unwrap();
        assert_eq!(inst.flow_count(), 2);
        assert_eq!((inst.flows()[0].first, inst.flows()[0].last), (0, 0));
        assert_eq!((inst.flows()[1].first, inst.flows()[1].last), (4, 4));
        assert!(inst.flows().iter().all(|f| f.origin == 3));
        assert_eq!(inst.free_bw(), &[3.0, 5.0, 5.0, 5.0, 3.0]);
    }
}

//! Flow populations: network-wide admitted flows on a topology, and
//! route-local synthetic flows with geometric spans.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, NodeId, Route, Topology};
use crate::seed;

/// Priority class; larger is more important.
pub type Class = u32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Flow {
    pub id: usize,
    pub class: Class,
    pub bandwidth: f64,
    pub path: Route,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub class: Class,
    /// Uniform bandwidth range `[lo, hi]` in Mbps.
    pub bandwidth: [f64; 2],
    #[serde(default = "one")]
    pub arrival_rate: f64,
    #[serde(default = "one")]
    pub departure_rate: f64,
}

fn one() -> f64 {
    1.0
}

impl ClassSpec {
    pub fn new(class: Class, lo: f64, hi: f64) -> Self {
        ClassSpec {
            class,
            bandwidth: [lo, hi],
            arrival_rate: 1.0,
            departure_rate: 1.0,
        }
    }

    /// Mean number of concurrently active flows per unit of the shared
    /// arrival scale, `lambda / mu`.
    pub fn offered_load(&self) -> f64 {
        self.arrival_rate / self.departure_rate
    }
}

pub const DEFAULT_REJECTION_STREAK: usize = 200;

/// Snapshot traffic generator settings. Classes are drawn with probability
/// proportional to their offered load; with equal rates that is uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub classes: Vec<ClassSpec>,
    /// Stop after this many admitted flows.
    #[serde(default)]
    pub flow_count: Option<usize>,
    /// Stop once mean link utilization reaches this fraction.
    #[serde(default)]
    pub target_load: Option<f64>,
    #[serde(default = "default_streak")]
    pub rejection_streak: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_streak() -> usize {
    DEFAULT_REJECTION_STREAK
}

impl TrafficConfig {
    /// Two service classes with the bandwidth ranges used in the lattice
    /// and power-law studies, saturating the network.
    pub fn two_class(seed: u64) -> Self {
        TrafficConfig {
            classes: vec![ClassSpec::new(1, 1.25, 2.5), ClassSpec::new(2, 2.5, 37.5)],
            flow_count: None,
            target_load: None,
            rejection_streak: DEFAULT_REJECTION_STREAK,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("traffic config needs at least one class"));
        }
        for c in &self.classes {
            let [lo, hi] = c.bandwidth;
            if !(lo > 0.0) || hi < lo {
                return Err(Error::invalid(format!(
                    "class {} bandwidth range [{lo}, {hi}] is invalid",
                    c.class
                )));
            }
            if !(c.arrival_rate > 0.0) || !(c.departure_rate > 0.0) {
                return Err(Error::invalid(format!("class {} rates must be positive", c.class)));
            }
        }
        if let Some(load) = self.target_load {
            if !(load > 0.0 && load <= 1.0) {
                return Err(Error::invalid("target_load must be in (0, 1]"));
            }
        }
        if self.rejection_streak == 0 {
            return Err(Error::invalid("rejection_streak must be positive"));
        }
        Ok(())
    }
}

/// Admits flows on random source–destination pairs routed on random
/// shortest paths until the stop rule fires. Every admitted flow fits the
/// residual capacity of each link on its path.
pub fn generate_network_flows(t: &Topology, cfg: &TrafficConfig) -> Result<Vec<Flow>> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, &[0x7261_6666]);
    let mut residual: Vec<f64> = t.edges().iter().map(|e| e.capacity).collect();
    let total_capacity: f64 = residual.iter().sum();
    let mut used = 0.0;
    let weights: Vec<f64> = cfg.classes.iter().map(ClassSpec::offered_load).collect();
    let weight_sum: f64 = weights.iter().sum();
    let mut flows = Vec::new();
    let mut streak = 0;
    let n = t.node_count();
    if n < 2 {
        return Ok(flows);
    }
    loop {
        if cfg.flow_count.is_some_and(|c| flows.len() >= c) {
            break;
        }
        if cfg.target_load.is_some_and(|l| used / total_capacity >= l) {
            break;
        }
        if streak >= cfg.rejection_streak {
            break;
        }
        let s = rng.gen_range(0..n);
        let mut d = rng.gen_range(0..n - 1);
        if d >= s {
            d += 1;
        }
        let mut pick = rng.gen::<f64>() * weight_sum;
        let mut class = cfg.classes[cfg.classes.len() - 1];
        for (c, w) in cfg.classes.iter().zip(&weights) {
            if pick < *w {
                class = *c;
                break;
            }
            pick -= w;
        }
        let [lo, hi] = class.bandwidth;
        let bandwidth = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let path = graph::random_shortest_path(t, NodeId(s), NodeId(d), &mut rng)?;
        let links = path.links(t);
        if links.iter().all(|e| residual[e.0] >= bandwidth) {
            for e in &links {
                residual[e.0] -= bandwidth;
            }
            used += bandwidth * links.len() as f64;
            flows.push(Flow {
                id: flows.len(),
                class: class.class,
                bandwidth,
                path,
            });
            streak = 0;
        } else {
            streak += 1;
        }
    }
    Ok(flows)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowRecord {
    id: usize,
    class: Class,
    bandwidth: f64,
    path: Vec<NodeId>,
}

/// One JSON object per line: `{id, class, bandwidth, path:[node ids]}`.
pub fn write_flows_jsonl<W: Write>(flows: &[Flow], mut out: W) -> Result<()> {
    for f in flows {
        serde_json::to_writer(&mut out, f)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_flows_jsonl<R: BufRead>(t: &Topology, input: R) -> Result<Vec<Flow>> {
    let mut flows = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FlowRecord = serde_json::from_str(&line)?;
        if !(rec.bandwidth > 0.0) {
            return Err(Error::invalid(format!("flow {} has non-positive bandwidth", rec.id)));
        }
        flows.push(Flow {
            id: rec.id,
            class: rec.class,
            bandwidth: rec.bandwidth,
            path: Route::new(t, rec.path)?,
        });
    }
    Ok(flows)
}

/// Synthetic flows on a straight route of `links` hops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteTrafficSpec {
    pub links: usize,
    /// Probability a flow continues onto the next route link.
    pub p_c: f64,
    /// Nominal bandwidth `B0`.
    pub b0: f64,
    /// Relative bandwidth spread; bandwidths are uniform in `b0 * [1 - eps, 1 + eps]`.
    pub eps_b: f64,
    /// Generation stops once every link carries at least this many flows.
    pub flows_per_link: usize,
    #[serde(default = "lowest_class")]
    pub class: Class,
    #[serde(default)]
    pub seed: u64,
}

fn lowest_class() -> Class {
    1
}

impl RouteTrafficSpec {
    pub fn validate(&self) -> Result<()> {
        if self.links == 0 {
            return Err(Error::invalid("route needs at least one link"));
        }
        if !(0.0..1.0).contains(&self.p_c) {
            return Err(Error::invalid(format!("p_c = {} outside [0, 1)", self.p_c)));
        }
        if !(self.b0 > 0.0) {
            return Err(Error::invalid("b0 must be positive"));
        }
        if !(0.0..1.0).contains(&self.eps_b) {
            return Err(Error::invalid(format!("eps_b = {} outside [0, 1)", self.eps_b)));
        }
        Ok(())
    }
}

/// A flow expressed as the contiguous interval `first..=last` of 0-based
/// route link indices it occupies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFlow {
    pub id: usize,
    pub class: Class,
    pub bandwidth: f64,
    pub first: usize,
    pub last: usize,
}

impl SegmentFlow {
    pub fn span(&self) -> usize {
        self.last - self.first + 1
    }
}

/// Each flow enters at a uniformly random link and extends hop by hop with
/// probability `p_c`, truncated at the route end.
pub fn generate_route_flows(spec: &RouteTrafficSpec) -> Result<Vec<SegmentFlow>> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, &[0x726f_7574]);
    let mut occupancy = vec![0usize; spec.links];
    let mut flows = Vec::new();
    let (lo, hi) = (spec.b0 * (1.0 - spec.eps_b), spec.b0 * (1.0 + spec.eps_b));
    while occupancy.iter().any(|&c| c < spec.flows_per_link) {
        let first = rng.gen_range(0..spec.links);
        let mut last = first;
        while last + 1 < spec.links && rng.gen::<f64>() < spec.p_c {
            last += 1;
        }
        let bandwidth = if hi > lo { rng.gen_range(lo..=hi) } else { spec.b0 };
        for c in &mut occupancy[first..=last] {
            *c += 1;
        }
        flows.push(SegmentFlow {
            id: flows.len() + 1,
            class: spec.class,
            bandwidth,
            first,
            last,
        });
    }
    Ok(flows)
}

/// Draws `count` flows from the span model regardless of occupancy.
pub fn sample_route_flows(spec: &RouteTrafficSpec, count: usize) -> Result<Vec<SegmentFlow>> {
    let spec = RouteTrafficSpec {
        flows_per_link: usize::MAX,
        ..*spec
    };
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, &[0x726f_7574]);
    let (lo, hi) = (spec.b0 * (1.0 - spec.eps_b), spec.b0 * (1.0 + spec.eps_b));
    Ok((0..count)
        .map(|i| {
            let first = rng.gen_range(0..spec.links);
            let mut last = first;
            while last + 1 < spec.links && rng.gen::<f64>() < spec.p_c {
                last += 1;
            }
            let bandwidth = if hi > lo { rng.gen_range(lo..=hi) } else { spec.b0 };
            SegmentFlow {
                id: i + 1,
                class: spec.class,
                bandwidth,
                first,
                last,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PijConfig {
    /// Route-touching flows collected per run.
    pub samples: usize,
    pub runs: usize,
    /// Hop count of the probe route.
    pub route_hops: usize,
    pub max_h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PijPoint {
    pub h: usize,
    pub mean: f64,
    pub stderr: f64,
    pub per_run: Vec<f64>,
}

/// Fraction of route-touching flows (among `samples` drawn) that occupy
/// two route links `h` apart, for `h = 0..=max_h`. Flows are shortest
/// paths between uniformly random node pairs.
pub fn link_dependency_for_route<R: Rng + ?Sized>(
    t: &Topology,
    route: &Route,
    samples: usize,
    max_h: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let route_links = route.links(t);
    let mut position = vec![usize::MAX; t.edge_count()];
    for (i, e) in route_links.iter().enumerate() {
        position[e.0] = i;
    }
    let n = t.node_count();
    let mut hits = vec![0usize; max_h + 1];
    let mut touched = 0usize;
    let mut attempts = 0usize;
    let attempt_cap = samples.saturating_mul(10_000).max(1_000_000);
    let mut on = vec![false; route_links.len()];
    while touched < samples {
        attempts += 1;
        if attempts > attempt_cap {
            return Err(Error::invalid("flows almost never touch the probe route"));
        }
        let s = rng.gen_range(0..n);
        let mut d = rng.gen_range(0..n - 1);
        if d >= s {
            d += 1;
        }
        let path = graph::random_shortest_path(t, NodeId(s), NodeId(d), rng)?;
        on.iter_mut().for_each(|x| *x = false);
        let mut any = false;
        for e in path.links(t) {
            let p = position[e.0];
            if p != usize::MAX {
                on[p] = true;
                any = true;
            }
        }
        if !any {
            continue;
        }
        touched += 1;
        for (h, hit) in hits.iter_mut().enumerate() {
            if h < on.len() && (0..on.len() - h).any(|a| on[a] && on[a + h]) {
                *hit += 1;
            }
        }
    }
    Ok(hits.iter().map(|&c| c as f64 / samples as f64).collect())
}

/// Monte-Carlo link-dependency estimate averaged over independent runs,
/// each with its own random probe route of `route_hops` hops.
pub fn empirical_link_dependency(t: &Topology, cfg: &PijConfig, seed_value: u64) -> Result<Vec<PijPoint>> {
    if cfg.samples == 0 || cfg.runs == 0 {
        return Err(Error::invalid("samples and runs must be at least 1"));
    }
    let mut per_run: Vec<Vec<f64>> = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let mut rng = seed::rng(seed_value, &[0x7069_6a, run as u64]);
        let route = pick_route(t, cfg.route_hops, &mut rng)?;
        per_run.push(link_dependency_for_route(t, &route, cfg.samples, cfg.max_h, &mut rng)?);
    }
    Ok((0..=cfg.max_h)
        .map(|h| {
            let values: Vec<f64> = per_run.iter().map(|r| r[h]).collect();
            let k = values.len() as f64;
            let mean = values.iter().sum::<f64>() / k;
            let stderr = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                (mean * (1.0 - mean) / cfg.samples as f64).sqrt()
            };
            PijPoint {
                h,
                mean,
                stderr,
                per_run: values,
            }
        })
        .collect())
}

/// Uniformly random shortest route between a random node pair exactly `hops`
/// apart.
pub fn pick_route<R: Rng + ?Sized>(t: &Topology, hops: usize, rng: &mut R) -> Result<Route> {
    pick_route_in(t, hops, hops, rng)
}

pub fn pick_route_in<R: Rng + ?Sized>(
    t: &Topology,
    min_hops: usize,
    max_hops: usize,
    rng: &mut R,
) -> Result<Route> {
    let n = t.node_count();
    if n < 2 || min_hops == 0 || min_hops > max_hops {
        return Err(Error::invalid("no route length can satisfy the request"));
    }
    for _ in 0..100_000 {
        let s = rng.gen_range(0..n);
        let mut d = rng.gen_range(0..n - 1);
        if d >= s {
            d += 1;
        }
        let route = graph::random_shortest_path(t, NodeId(s), NodeId(d), rng)?;
        if (min_hops..=max_hops).contains(&route.hops()) {
            return Ok(route);
        }
    }
    Err(Error::invalid(format!(
        "no node pair found with hop count in [{min_hops}, {max_hops}]"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_lattice;

    #[test]
    fn admission_respects_capacity() {
        let t = build_lattice(10, 10, 100.0).unwrap();
        let flows = generate_network_flows(&t, &TrafficConfig::two_class(5)).unwrap();
        assert!(flows.len() > 100);
        let mut load = vec![0.0; t.edge_count()];
        for f in &flows {
            for e in f.path.links(&t) {
                load[e.0] += f.bandwidth;
            }
        }
        assert!(load.iter().all(|&l| l <= 100.0 + 1e-9));
    }

    #[test]
    fn zero_flow_count_is_empty() {
        let t = build_lattice(4, 4, 100.0).unwrap();
        let cfg = TrafficConfig {
            flow_count: Some(0),
            ..TrafficConfig::two_class(1)
        };
        assert!(generate_network_flows(&t, &cfg).unwrap().is_empty());
    }

    #[test]
    fn network_flows_are_seeded() {
        let t = build_lattice(6, 6, 100.0).unwrap();
        let cfg = TrafficConfig::two_class(9);
        assert_eq!(
            generate_network_flows(&t, &cfg).unwrap(),
            generate_network_flows(&t, &cfg).unwrap()
        );
    }

    #[test]
    fn class_weights_follow_offered_load() {
        let t = build_lattice(6, 6, 1e6).unwrap();
        let mut cfg = TrafficConfig {
            flow_count: Some(4000),
            ..TrafficConfig::two_class(2)
        };
        cfg.classes[0].arrival_rate = 3.0;
        let flows = generate_network_flows(&t, &cfg).unwrap();
        let ones = flows.iter().filter(|f| f.class == 1).count() as f64;
        assert!((ones / 4000.0 - 0.75).abs() < 0.03);
    }

    #[test]
    fn flows_jsonl_round_trip() {
        let t = build_lattice(5, 5, 100.0).unwrap();
        let cfg = TrafficConfig {
            flow_count: Some(20),
            ..TrafficConfig::two_class(4)
        };
        let flows = generate_network_flows(&t, &cfg).unwrap();
        let mut buf = Vec::new();
        write_flows_jsonl(&flows, &mut buf).unwrap();
        let first = std::str::from_utf8(&buf).unwrap().lines().next().unwrap().to_string();
        assert!(first.starts_with("{\"id\":0,\"class\":"));
        assert!(first.contains("\"path\":["));
        let back = read_flows_jsonl(&t, &buf[..]).unwrap();
        assert_eq!(flows, back);
    }

    fn spec(p_c: f64, eps_b: f64) -> RouteTrafficSpec {
        RouteTrafficSpec {
            links: 10,
            p_c,
            b0: 10.0,
            eps_b,
            flows_per_link: 3,
            class: 1,
            seed: 11,
        }
    }

    #[test]
    fn zero_continuity_gives_single_link_flows() {
        let flows = generate_route_flows(&spec(0.0, 0.2)).unwrap();
        assert!(flows.iter().all(|f| f.span() == 1));
    }

    #[test]
    fn zero_spread_gives_nominal_bandwidth() {
        let flows = generate_route_flows(&spec(0.4, 0.0)).unwrap();
        assert!(flows.iter().all(|f| f.bandwidth == 10.0));
        let flows = generate_route_flows(&spec(0.4, 0.2)).unwrap();
        assert!(flows.iter().all(|f| (f.bandwidth - 10.0).abs() <= 2.0 + 1e-12));
    }

    #[test]
    fn occupancy_target_met() {
        let flows = generate_route_flows(&spec(1.0 / 3.0, 0.2)).unwrap();
        let mut occ = [0; 10];
        for f in &flows {
            for o in &mut occ[f.first..=f.last] {
                *o += 1;
            }
        }
        assert!(occ.iter().all(|&o| o >= 3));
    }

    /// Exact mean span under uniform entry with truncation at the route end:
    /// (1/L) * sum_{m=1..L} (1 - p^m) / (1 - p).
    fn exact_mean_span(links: usize, p: f64) -> f64 {
        (1..=links).map(|m| (1.0 - p.powi(m as i32)) / (1.0 - p)).sum::<f64>() / links as f64
    }

    #[test]
    fn mean_span_is_truncated_geometric() {
        let s = RouteTrafficSpec {
            seed: 3,
            ..spec(1.0 / 3.0, 0.2)
        };
        let flows = sample_route_flows(&s, 100_000).unwrap();
        let mean = flows.iter().map(|f| f.span() as f64).sum::<f64>() / flows.len() as f64;
        let expected = exact_mean_span(10, 1.0 / 3.0);
        assert!((expected - 1.425).abs() < 1e-3);
        assert!((mean - expected).abs() / expected < 0.02, "mean span {mean} vs {expected}");
    }

    #[test]
    fn continuation_is_memoryless() {
        // Chi-square over s = 1..4 of "continues past span s" among flows that
        // reached span s with room left; 4 df, 0.1% critical value 18.47.
        let p = 0.4;
        let s = RouteTrafficSpec {
            seed: 8,
            ..spec(p, 0.2)
        };
        let flows = sample_route_flows(&s, 100_000).unwrap();
        let mut chi2 = 0.0;
        for len in 1..=4 {
            let eligible: Vec<_> = flows
                .iter()
                .filter(|f| f.span() >= len && f.first + len < s.links)
                .collect();
            let n = eligible.len() as f64;
            let cont = eligible.iter().filter(|f| f.span() > len).count() as f64;
            let exp_c = n * p;
            let exp_s = n * (1.0 - p);
            chi2 += (cont - exp_c).powi(2) / exp_c + ((n - cont) - exp_s).powi(2) / exp_s;
        }
        assert!(chi2 < 18.47, "chi2 = {chi2}");
    }
}

//! Declarative experiment harness: builds topologies, traffic and route
//! instances from a JSON config, runs the configured solvers and reduces
//! per-run metrics into table rows.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, BoundParams};
use crate::error::{Error, Result};
use crate::graph::{self, Topology};
use crate::model::{self, PreemptionInstance, RouteFlow};
use crate::seed;
use crate::solvers::{self, GibbsConfig, LocalModel, SolverResult};
use crate::traffic::{self, ClassSpec, PijConfig, RouteTrafficSpec, TrafficConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Table2Lattice,
    Table3Powerlaw,
    Fig3Pij,
    Fig4NdPcSweep,
    Fig5LengthSweep,
    Fig6DemandSweep,
    OracleSmallscale,
    BoundsCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Table2Lattice => "table2_lattice",
            ExperimentKind::Table3Powerlaw => "table3_powerlaw",
            ExperimentKind::Fig3Pij => "fig3_pij",
            ExperimentKind::Fig4NdPcSweep => "fig4_nd_pc_sweep",
            ExperimentKind::Fig5LengthSweep => "fig5_length_sweep",
            ExperimentKind::Fig6DemandSweep => "fig6_demand_sweep",
            ExperimentKind::OracleSmallscale => "oracle_smallscale",
            ExperimentKind::BoundsCheck => "bounds_check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    MinConn,
    MinBw,
    Gibbs,
    Exact,
}

impl SolverKind {
    fn name(self) -> &'static str {
        match self {
            SolverKind::MinConn => "min_conn",
            SolverKind::MinBw => "min_bw",
            SolverKind::Gibbs => "gibbs",
            SolverKind::Exact => "exact",
        }
    }
}

/// Lattice shape or power-law size; unset fields take the experiment's
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyParams {
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub nodes: Option<usize>,
    /// Edges added per new node in the power-law model.
    pub attach: Option<usize>,
    pub capacity: f64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            rows: None,
            cols: None,
            nodes: None,
            attach: None,
            capacity: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficParams {
    pub classes: Vec<ClassSpec>,
    pub flow_count: Option<usize>,
    /// Stop at this mean utilization; unset saturates the network.
    pub target_load: Option<f64>,
    pub rejection_streak: usize,
}

impl Default for TrafficParams {
    fn default() -> Self {
        let mut classes = TrafficConfig::two_class(0).classes;
        classes[0].arrival_rate = DEFAULT_CLASS1_RATE;
        TrafficParams {
            classes,
            flow_count: None,
            target_load: None,
            rejection_streak: traffic::DEFAULT_REJECTION_STREAK,
        }
    }
}

/// Relative arrival rate of class-1 flows in the network studies. With
/// equal rates class-1 traffic is under a tenth of the load and most
/// routes cannot free `c_new = 20`.
pub const DEFAULT_CLASS1_RATE: f64 = 10.0;

/// New-call route selection in network studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouteParams {
    pub min_hops: Option<usize>,
    pub max_hops: Option<usize>,
    /// Source–destination draws before a run gives up.
    pub attempts: usize,
}

impl Default for RouteParams {
    fn default() -> Self {
        RouteParams {
            min_hops: None,
            max_hops: None,
            attempts: 2000,
        }
    }
}

/// Synthetic flows on a straight route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub links: usize,
    pub p_c: f64,
    pub b0: f64,
    pub eps_b: f64,
    pub flows_per_link: usize,
    pub free_bw: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            links: 10,
            p_c: 0.4,
            b0: 1.875,
            eps_b: 1.0 / 3.0,
            flows_per_link: 32,
            free_bw: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CallParams {
    pub c_new: f64,
    pub i_new: u32,
    /// Penalty weight; unset uses twice the total preemptible weight.
    pub beta: Option<f64>,
}

impl Default for CallParams {
    fn default() -> Self {
        CallParams {
            c_new: 20.0,
            i_new: 2,
            beta: None,
        }
    }
}

/// Sampler settings shared by every Gibbs solve in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerParams {
    pub t0: f64,
    pub max_sweeps: usize,
    pub stability_window: usize,
    pub repair: bool,
    pub polish: bool,
    pub random_init: bool,
    pub keep_best: bool,
    pub model: LocalModel,
}

impl Default for SamplerParams {
    fn default() -> Self {
        let g = GibbsConfig::default();
        SamplerParams {
            t0: g.t0,
            max_sweeps: g.max_sweeps,
            stability_window: g.stability_window,
            // baselines always return feasible decisions when one exists
            repair: true,
            polish: g.polish,
            random_init: g.random_init,
            keep_best: g.keep_best,
            model: g.model,
        }
    }
}

impl SamplerParams {
    pub fn gibbs(&self, nd: usize, seed: u64) -> GibbsConfig {
        GibbsConfig {
            nd,
            t0: self.t0,
            max_sweeps: self.max_sweeps,
            stability_window: self.stability_window,
            seed,
            repair: self.repair,
            polish: self.polish,
            random_init: self.random_init,
            keep_best: self.keep_best,
            model: self.model,
        }
    }
}

/// Parameter grids; empty lists take the experiment's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub nd: Vec<usize>,
    pub p_c: Vec<f64>,
    pub links: Vec<usize>,
    pub c_new: Vec<f64>,
    pub h: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PijParams {
    pub samples: usize,
    pub route_hops: usize,
    pub d0: usize,
}

impl Default for PijParams {
    fn default() -> Self {
        PijParams {
            samples: 10_000,
            route_hops: 10,
            d0: 4,
        }
    }
}

/// Random small instances checked against the exact optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    pub max_links: usize,
    pub max_flows: usize,
    pub bandwidth: [f64; 2],
    pub free_bw: [f64; 2],
    pub c_new: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            max_links: 6,
            max_flows: 12,
            bandwidth: [1.25, 2.5],
            free_bw: [0.0, 4.0],
            c_new: 5.0,
        }
    }
}

/// Near-optimality check against the closed-form bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundCheckParams {
    pub b0: f64,
    pub eps_b: f64,
    pub flows_per_link: usize,
    pub d0: usize,
    /// Target performance for the neighborhood-size search.
    pub epsilon: f64,
}

impl Default for BoundCheckParams {
    fn default() -> Self {
        BoundCheckParams {
            b0: 10.0,
            eps_b: 0.2,
            flows_per_link: 4,
            d0: 4,
            epsilon: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub topology: TopologyParams,
    #[serde(default)]
    pub traffic: TrafficParams,
    #[serde(default)]
    pub route: RouteParams,
    #[serde(default)]
    pub synthetic: SyntheticParams,
    #[serde(default)]
    pub call: CallParams,
    #[serde(default)]
    pub sampler: SamplerParams,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub pij: PijParams,
    #[serde(default)]
    pub oracle: OracleParams,
    #[serde(default)]
    pub bounds: BoundCheckParams,
}

fn default_runs() -> usize {
    10
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        serde_json::from_value(serde_json::json!({ "experiment": experiment })).expect("defaults are valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Fills every experiment-dependent default so the result is explicit.
    pub fn resolved(&self) -> Self {
        use ExperimentKind::*;
        let mut c = self.clone();
        let k = c.experiment;
        match k {
            Table2Lattice => {
                c.topology.rows.get_or_insert(10);
                c.topology.cols.get_or_insert(10);
            }
            Fig3Pij => {
                c.topology.rows.get_or_insert(10);
                c.topology.cols.get_or_insert(25);
            }
            Table3Powerlaw => {
                c.topology.nodes.get_or_insert(80);
                c.topology.attach.get_or_insert(2);
            }
            _ => {}
        }
        match k {
            Table2Lattice => {
                c.route.min_hops.get_or_insert(8);
                c.route.max_hops.get_or_insert(12);
            }
            Table3Powerlaw => {
                c.route.min_hops.get_or_insert(3);
                c.route.max_hops.get_or_insert(12);
            }
            _ => {}
        }
        if c.solvers.is_empty() {
            c.solvers = match k {
                OracleSmallscale => vec![SolverKind::Exact, SolverKind::Gibbs, SolverKind::MinConn],
                BoundsCheck | Fig3Pij => vec![SolverKind::Gibbs],
                _ => vec![SolverKind::MinConn, SolverKind::Gibbs],
            };
        }
        if c.grid.nd.is_empty() {
            c.grid.nd = match k {
                Table2Lattice | Table3Powerlaw | BoundsCheck => vec![1, 2],
                Fig4NdPcSweep | Fig5LengthSweep | Fig6DemandSweep => vec![0, 1, 2, 3, 4],
                OracleSmallscale => vec![c.oracle.max_links],
                Fig3Pij => vec![0],
            };
        }
        if c.grid.p_c.is_empty() {
            c.grid.p_c = match k {
                Fig4NdPcSweep => vec![0.3, 0.4, 0.5],
                BoundsCheck => vec![0.2, 1.0 / 3.0],
                _ => vec![c.synthetic.p_c],
            };
        }
        if c.grid.links.is_empty() {
            c.grid.links = match k {
                Fig5LengthSweep => vec![5, 10, 20, 30, 40],
                BoundsCheck => vec![10, 20, 40, 80],
                _ => vec![c.synthetic.links],
            };
        }
        if c.grid.c_new.is_empty() {
            c.grid.c_new = match k {
                Fig6DemandSweep => vec![10.0, 20.0, 30.0, 40.0],
                _ => vec![c.call.c_new],
            };
        }
        if c.grid.h.is_empty() {
            c.grid.h = vec![2, 3, 4, 5, 6];
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        let r = self.resolved();
        if r.grid.nd.is_empty() || r.grid.p_c.is_empty() || r.grid.links.is_empty() || r.grid.c_new.is_empty() {
            return bad("parameter grids must be non-empty".into());
        }
        if r.grid.p_c.iter().any(|p| !(0.0..1.0).contains(p)) {
            return bad("p_c values must lie in [0, 1)".into());
        }
        if r.grid.links.contains(&0) {
            return bad("route lengths must be positive".into());
        }
        if r.grid.c_new.iter().any(|c| !(*c > 0.0)) || !(r.call.c_new > 0.0) {
            return bad("c_new must be positive".into());
        }
        if r.grid.h.iter().any(|&h| h < 2) {
            return bad("hop separations must be at least 2".into());
        }
        if !(r.topology.capacity > 0.0) {
            return bad("link capacity must be positive".into());
        }
        if let (Some(a), Some(b)) = (r.route.min_hops, r.route.max_hops) {
            if a == 0 || a > b {
                return bad(format!("route hop range [{a}, {b}] is empty"));
            }
        }
        if r.synthetic.flows_per_link == 0 || r.bounds.flows_per_link == 0 {
            return bad("flows_per_link must be positive".into());
        }
        if r.oracle.max_links == 0 || r.oracle.max_flows == 0 {
            return bad("oracle instance sizes must be positive".into());
        }
        if r.oracle.max_flows > solvers::MAX_BRUTE_FORCE_FLOWS {
            return bad(format!(
                "oracle max_flows {} exceeds the exhaustive limit {}",
                r.oracle.max_flows,
                solvers::MAX_BRUTE_FORCE_FLOWS
            ));
        }
        r.sampler.gibbs(0, 0).validate()?;
        self.traffic_config(0).validate()?;
        Ok(())
    }

    fn traffic_config(&self, seed_value: u64) -> TrafficConfig {
        TrafficConfig {
            classes: self.traffic.classes.clone(),
            flow_count: self.traffic.flow_count,
            target_load: self.traffic.target_load,
            rejection_streak: self.traffic.rejection_streak,
            seed: seed_value,
        }
    }
}

/// One table line: a parameter point and a solver, averaged over runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub solver: String,
    pub l: Option<usize>,
    pub p_c: Option<f64>,
    pub n_d: Option<usize>,
    pub c_new: Option<f64>,
    pub h: Option<usize>,
    pub runs: usize,
    pub mean: f64,
    pub stddev: f64,
    pub mean_messages: Option<f64>,
    pub mean_sweeps: Option<f64>,
    pub feasible_rate: Option<f64>,
    pub optimal_rate: Option<f64>,
    pub mean_unrepaired: Option<f64>,
    pub bound: Option<f64>,
    pub satisfied: Option<bool>,
}

impl ResultRow {
    fn new(kind: ExperimentKind, solver: &str) -> Self {
        ResultRow {
            experiment: kind.name().to_string(),
            solver: solver.to_string(),
            l: None,
            p_c: None,
            n_d: None,
            c_new: None,
            h: None,
            runs: 0,
            mean: 0.0,
            stddev: 0.0,
            mean_messages: None,
            mean_sweeps: None,
            feasible_rate: None,
            optimal_rate: None,
            mean_unrepaired: None,
            bound: None,
            satisfied: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    pub fn row(&self, solver: &str, n_d: Option<usize>) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.solver == solver && r.n_d == n_d)
    }
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-run measurements of one solver at one parameter point.
#[derive(Debug, Clone, Default)]
struct Sample {
    bw: f64,
    messages: Option<f64>,
    sweeps: Option<f64>,
    feasible: bool,
    optimal: Option<bool>,
    unrepaired: f64,
}

fn sample(inst: &PreemptionInstance, r: &SolverResult, optimum: Option<f64>) -> Sample {
    let gibbs = r.solver == "gibbs";
    Sample {
        bw: analysis::avg_preempted_bw(inst, r),
        messages: gibbs.then_some(r.trace.messages_exchanged as f64),
        sweeps: gibbs.then_some(r.trace.sweeps_used as f64),
        feasible: r.feasible,
        optimal: optimum.map(|h| (h - r.hamiltonian).abs() <= 1e-9),
        unrepaired: r.trace.unrepaired_cost / inst.links() as f64,
    }
}

fn reduce(mut row: ResultRow, samples: &[Sample]) -> ResultRow {
    let n = samples.len() as f64;
    let bws: Vec<f64> = samples.iter().map(|s| s.bw).collect();
    let (m, sd) = mean_sd(&bws);
    let avg = |f: &dyn Fn(&Sample) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = samples.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    row.runs = samples.len();
    row.mean = m;
    row.stddev = sd;
    row.mean_messages = avg(&|s| s.messages);
    row.mean_sweeps = avg(&|s| s.sweeps);
    row.feasible_rate = Some(samples.iter().filter(|s| s.feasible).count() as f64 / n);
    row.optimal_rate = avg(&|s| s.optimal.map(|o| o as u8 as f64));
    row.mean_unrepaired = avg(&|s| Some(s.unrepaired));
    row
}

/// Runs every configured solver on one instance. Keys are
/// `(solver, n_d)` with `n_d` set only for the sampler.
fn solve_all(
    cfg: &ExperimentConfig,
    inst: &PreemptionInstance,
    seed_value: u64,
) -> Result<Vec<((SolverKind, Option<usize>), Sample)>> {
    let optimum = if cfg.solvers.contains(&SolverKind::Exact) {
        Some(solvers::exact_optimal(inst)?)
    } else {
        None
    };
    let h_opt = optimum.as_ref().map(|o| o.hamiltonian);
    let mut out = Vec::new();
    for &s in &cfg.solvers {
        match s {
            SolverKind::Exact => {
                let r = optimum.as_ref().expect("computed above");
                out.push(((s, None), sample(inst, r, h_opt)));
            }
            SolverKind::MinConn => out.push(((s, None), sample(inst, &solvers::min_conn(inst), h_opt))),
            SolverKind::MinBw => out.push(((s, None), sample(inst, &solvers::min_bw(inst)?, h_opt))),
            SolverKind::Gibbs => {
                for &nd in &cfg.grid.nd {
                    let g = cfg.sampler.gibbs(nd, seed::derive(seed_value, &[nd as u64]));
                    let r = solvers::gibbs_solve(inst, &g)?;
                    out.push(((s, Some(nd)), sample(inst, &r, h_opt)));
                }
            }
        }
    }
    Ok(out)
}

/// Groups per-run samples by solver key, in the order solvers were run.
fn collect_rows(
    kind: ExperimentKind,
    template: &ResultRow,
    runs: Vec<Vec<((SolverKind, Option<usize>), Sample)>>,
) -> Vec<ResultRow> {
    let mut order: Vec<(SolverKind, Option<usize>)> = Vec::new();
    let mut by_key: BTreeMap<(SolverKind, Option<usize>), Vec<Sample>> = BTreeMap::new();
    for run in runs {
        for (key, s) in run {
            if !by_key.contains_key(&key) {
                order.push(key);
            }
            by_key.entry(key).or_default().push(s);
        }
    }
    order
        .into_iter()
        .map(|key| {
            let mut row = template.clone();
            row.experiment = kind.name().to_string();
            row.solver = key.0.name().to_string();
            row.n_d = key.1;
            reduce(row, &by_key[&key])
        })
        .collect()
}

/// Small random instance for oracle comparisons; redrawn until every link
/// can be satisfied and at least one link is short.
pub fn random_small_instance(rng: &mut ChaCha8Rng, p: &OracleParams) -> Result<PreemptionInstance> {
    let max_links = p.max_links.max(1);
    let min_links = max_links.min(2);
    for _ in 0..10_000 {
        let links = rng.gen_range(min_links..=max_links);
        let n = rng.gen_range(1..=p.max_flows);
        let flows: Vec<RouteFlow> = (0..n)
            .map(|j| {
                let first = rng.gen_range(0..links);
                let last = rng.gen_range(first..links);
                RouteFlow {
                    id: j + 1,
                    origin: j + 1,
                    class: 1,
                    bandwidth: rng.gen_range(p.bandwidth[0]..=p.bandwidth[1]),
                    first,
                    last,
                }
            })
            .collect();
        let free: Vec<f64> = (0..links).map(|_| rng.gen_range(p.free_bw[0]..=p.free_bw[1])).collect();
        let alpha = model::default_alpha(&flows, 2);
        let inst = PreemptionInstance::new(links, flows, free, p.c_new, 2, alpha, None)?;
        if inst.is_satisfiable() && inst.deficient_links() > 0 {
            return Ok(inst);
        }
    }
    Err(Error::Config("oracle parameters never produce a satisfiable instance".into()))
}

fn network_topology(cfg: &ExperimentConfig) -> Result<Topology> {
    let t = &cfg.topology;
    match cfg.experiment {
        ExperimentKind::Table3Powerlaw => graph::build_power_law(
            t.nodes.unwrap_or(80),
            t.attach.unwrap_or(2),
            seed::derive(cfg.seed, &[0x746f_706f]),
            t.capacity,
        ),
        _ => graph::build_lattice(t.rows.unwrap_or(10), t.cols.unwrap_or(10), t.capacity),
    }
}

/// Saturated network, random new call whose route has a deficient link and
/// enough preemptible bandwidth everywhere.
fn network_instance(cfg: &ExperimentConfig, t: &Topology, run: usize) -> Result<PreemptionInstance> {
    let min = cfg.route.min_hops.unwrap_or(1);
    let max = cfg.route.max_hops.unwrap_or(usize::MAX);
    for round in 0..20u64 {
        let flows = traffic::generate_network_flows(t, &cfg.traffic_config(seed::derive(cfg.seed, &[run as u64, 1, round])))?;
        let mut rng = seed::rng(cfg.seed, &[run as u64, 2, round]);
        for _ in 0..cfg.route.attempts {
            let route = match traffic::pick_route_in(t, min, max, &mut rng) {
                Ok(r) => r,
                Err(_) => break,
            };
            let inst = model::extract_instance(t, &flows, &route, cfg.call.c_new, cfg.call.i_new, None, cfg.call.beta)?;
            if inst.is_satisfiable() && inst.deficient_links() > 0 {
                return Ok(inst);
            }
        }
    }
    Err(Error::Config(format!(
        "run {run}: no new-call route with {min}..={max} hops is both congested and satisfiable"
    )))
}

fn synthetic_instance(
    cfg: &ExperimentConfig,
    links: usize,
    p_c: f64,
    c_new: f64,
    path: &[u64],
) -> Result<PreemptionInstance> {
    let s = &cfg.synthetic;
    for attempt in 0..1000u64 {
        let mut full = path.to_vec();
        full.push(attempt);
        let spec = RouteTrafficSpec {
            links,
            p_c,
            b0: s.b0,
            eps_b: s.eps_b,
            flows_per_link: s.flows_per_link,
            class: 1,
            seed: seed::derive(cfg.seed, &full),
        };
        let segs = traffic::generate_route_flows(&spec)?;
        let mut inst = PreemptionInstance::from_segments(links, &segs, s.free_bw, c_new, cfg.call.i_new)?;
        if let Some(b) = cfg.call.beta {
            inst = inst.with_beta(b)?;
        }
        if inst.is_satisfiable() {
            return Ok(inst);
        }
    }
    Err(Error::Config(format!(
        "synthetic route (L = {links}, p_c = {p_c}, c_new = {c_new}) never satisfiable; raise flows_per_link"
    )))
}

fn run_network(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let t = network_topology(cfg)?;
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let inst = network_instance(cfg, &t, run)?;
            solve_all(cfg, &inst, seed::derive(cfg.seed, &[run as u64, 3]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut template = ResultRow::new(cfg.experiment, "");
    template.c_new = Some(cfg.call.c_new);
    Ok(collect_rows(cfg.experiment, &template, runs))
}

fn run_synthetic(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let mut points: Vec<(usize, f64, f64)> = Vec::new();
    for &l in &cfg.grid.links {
        for &p in &cfg.grid.p_c {
            for &c in &cfg.grid.c_new {
                points.push((l, p, c));
            }
        }
    }
    let mut rows = Vec::new();
    for (pi, &(l, p, c)) in points.iter().enumerate() {
        let runs = (0..cfg.runs)
            .into_par_iter()
            .map(|run| {
                let inst = synthetic_instance(cfg, l, p, c, &[pi as u64, run as u64, 1])?;
                solve_all(cfg, &inst, seed::derive(cfg.seed, &[pi as u64, run as u64, 2]))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut template = ResultRow::new(cfg.experiment, "");
        template.l = Some(l);
        template.p_c = Some(p);
        template.c_new = Some(c);
        rows.extend(collect_rows(cfg.experiment, &template, runs));
    }
    Ok(rows)
}

fn run_oracle(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let mut with_exact = cfg.clone();
    if !with_exact.solvers.contains(&SolverKind::Exact) {
        with_exact.solvers.insert(0, SolverKind::Exact);
    }
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = seed::rng(cfg.seed, &[run as u64, 1]);
            let inst = random_small_instance(&mut rng, &cfg.oracle)?;
            let mut per = with_exact.clone();
            // the sampler sees the whole route
            per.grid.nd = vec![inst.links()];
            let samples = solve_all(&per, &inst, seed::derive(cfg.seed, &[run as u64, 2]))?;
            Ok(samples
                .into_iter()
                .filter(|((s, _), _)| cfg.solvers.contains(s))
                .map(|((s, nd), x)| ((s, nd.map(|_| cfg.oracle.max_links)), x))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let template = ResultRow::new(cfg.experiment, "");
    Ok(collect_rows(cfg.experiment, &template, runs))
}

fn run_pij(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let t = network_topology(cfg)?;
    let max_h = cfg.grid.h.iter().copied().max().unwrap_or(6);
    let pc = PijConfig {
        samples: cfg.pij.samples,
        runs: cfg.runs,
        route_hops: cfg.pij.route_hops,
        max_h,
    };
    let points = traffic::empirical_link_dependency(&t, &pc, cfg.seed)?;
    let l = cfg.pij.route_hops;
    let mut rows = Vec::new();
    for &h in &cfg.grid.h {
        let p = &points[h];
        let lower = analysis::lemma2_lower(l, cfg.pij.d0, h)?;
        let upper = analysis::lemma3_upper(l, h)?;
        let mut emp = ResultRow::new(cfg.experiment, "empirical");
        emp.l = Some(l);
        emp.h = Some(h);
        emp.runs = cfg.runs;
        emp.mean = p.mean;
        emp.stddev = p.stderr;
        emp.satisfied = Some(p.mean + 2.0 * p.stderr >= lower && p.mean - 2.0 * p.stderr <= upper);
        rows.push(emp);
        for (name, v) in [("lemma2_lower", lower), ("lemma3_upper", upper)] {
            let mut r = ResultRow::new(cfg.experiment, name);
            r.l = Some(l);
            r.h = Some(h);
            r.runs = cfg.runs;
            r.mean = v;
            r.bound = Some(v);
            rows.push(r);
        }
    }
    Ok(rows)
}

fn run_bounds(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let b = &cfg.bounds;
    let l = cfg.synthetic.links;
    let mut rows = Vec::new();
    for &p_c in &cfg.grid.p_c {
        for &nd in &cfg.grid.nd {
            let params = BoundParams {
                links: l,
                d0: b.d0,
                p_c,
                nd,
                c_new: cfg.call.c_new,
                eps_b: b.eps_b,
                epsilon: b.epsilon,
            };
            let bound = analysis::theorem1_bound(&params)?;
            let spec = RouteTrafficSpec {
                links: l,
                p_c,
                b0: b.b0,
                eps_b: b.eps_b,
                flows_per_link: b.flows_per_link,
                class: 1,
                seed: 0,
            };
            let g = cfg.sampler.gibbs(nd, 0);
            let rep = analysis::measure_delta_geometric(
                &spec,
                cfg.synthetic.free_bw,
                cfg.call.c_new,
                &g,
                cfg.runs,
                seed::derive(cfg.seed, &[(p_c * 1e6) as u64, nd as u64]),
                Some(bound),
            )?;
            let (m, sd) = mean_sd(&rep.deltas);
            let mut r = ResultRow::new(cfg.experiment, "gibbs_delta");
            r.l = Some(l);
            r.p_c = Some(p_c);
            r.n_d = Some(nd);
            r.c_new = Some(cfg.call.c_new);
            r.runs = rep.trials;
            r.mean = m;
            r.stddev = sd;
            r.bound = Some(bound);
            r.satisfied = rep.bound_satisfied;
            rows.push(r);
        }
    }
    for &links in &cfg.grid.links {
        let params = BoundParams {
            links,
            d0: b.d0,
            p_c: 1.0 / 3.0,
            nd: 0,
            c_new: cfg.call.c_new,
            eps_b: b.eps_b,
            epsilon: b.epsilon,
        };
        let nd = analysis::corollary1_min_nd(&params)?;
        let mut r = ResultRow::new(cfg.experiment, "corollary1_min_nd");
        r.l = Some(links);
        r.p_c = Some(params.p_c);
        r.n_d = nd;
        r.c_new = Some(cfg.call.c_new);
        r.runs = 1;
        r.mean = nd.map_or(f64::NAN, |n| n as f64);
        r.bound = Some(b.epsilon);
        r.satisfied = Some(nd.is_some());
        rows.push(r);
    }
    Ok(rows)
}

/// Runs the experiment described by `cfg` (after filling defaults).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let cfg = cfg.resolved();
    use ExperimentKind::*;
    let rows = match cfg.experiment {
        Table2Lattice | Table3Powerlaw => run_network(&cfg)?,
        Fig4NdPcSweep | Fig5LengthSweep | Fig6DemandSweep => run_synthetic(&cfg)?,
        OracleSmallscale => run_oracle(&cfg)?,
        Fig3Pij => run_pij(&cfg)?,
        BoundsCheck => run_bounds(&cfg)?,
    };
    Ok(ExperimentResult { config: cfg, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"experiment": "fig4_nd_pc_sweep"}"#).unwrap();
        assert_eq!(cfg.runs, 10);
        assert_eq!(cfg.sampler.t0, 3.0);
        assert_eq!(cfg.sampler.max_sweeps, 500);
        assert_eq!(cfg.call.beta, None);
        let r = cfg.resolved();
        assert_eq!(r.grid.nd, vec![0, 1, 2, 3, 4]);
        assert_eq!(r.grid.p_c, vec![0.3, 0.4, 0.5]);
    }

    #[test]
    fn zero_runs_rejected() {
        let e = ExperimentConfig::from_json(r#"{"experiment": "table2_lattice", "runs": 0}"#);
        assert!(matches!(e, Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let e = ExperimentConfig::from_json("{\"experiment\": \"table2_lattice\",\n \"colour\": 1}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert!(ExperimentConfig::from_json(r#"{"experiment": "nope"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment": "fig3_pij", "grid": {"hh": [2]}}"#).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let cfg = ExperimentConfig::new(ExperimentKind::Table3Powerlaw).resolved();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn small_instances_are_valid() {
        let mut rng = seed::rng(1, &[]);
        let p = OracleParams::default();
        for _ in 0..50 {
            let inst = random_small_instance(&mut rng, &p).unwrap();
            assert!(inst.links() <= 6 && inst.flow_count() <= 12);
            assert!(inst.is_satisfiable());
            assert!(inst.deficient_links() > 0);
        }
    }

    #[test]
    fn mean_and_sd() {
        assert_eq!(mean_sd(&[]), (0.0, 0.0));
        assert_eq!(mean_sd(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn oracle_rows() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::OracleSmallscale);
        cfg.runs = 5;
        let res = run_experiment(&cfg).unwrap();
        let names: Vec<&str> = res.rows.iter().map(|r| r.solver.as_str()).collect();
        assert_eq!(names, vec!["exact", "gibbs", "min_conn"]);
        assert_eq!(res.rows[0].optimal_rate, Some(1.0));
        assert!(res.rows.iter().all(|r| r.runs == 5));
    }

    #[test]
    fn synthetic_rows_per_point() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Fig6DemandSweep);
        cfg.runs = 2;
        cfg.grid.nd = vec![0, 1];
        cfg.grid.c_new = vec![10.0, 20.0];
        cfg.sampler.max_sweeps = 20;
        let res = run_experiment(&cfg).unwrap();
        // min_conn + two sampler rows at each demand
        assert_eq!(res.rows.len(), 6);
        assert_eq!(res.rows[0].solver, "min_conn");
        assert_eq!(res.rows[1].n_d, Some(0));
        assert_eq!(res.rows[3].c_new, Some(20.0));
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "experiment,solver,l,p_c,n_d,c_new,h,runs,mean,stddev,mean_messages,mean_sweeps,feasible_rate,optimal_rate,mean_unrepaired,bound,satisfied\n"
        ));
        assert_eq!(text.lines().count(), 7);
    }
}

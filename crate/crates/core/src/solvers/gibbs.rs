use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, short_of, window_count, DecisionMatrix, PreemptionInstance};
use crate::seed;
use crate::solvers::{Phase, SolverResult, SolverTrace, SweepRecord};

/// Energy the sampler sees at each link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalModel {
    /// First-order terms plus pairwise interactions within `nd` hops.
    Pairwise,
    /// All interaction orders, restricted to `nd`-hop windows.
    #[default]
    Windowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub nd: usize,
    pub t0: f64,
    pub max_sweeps: usize,
    /// Quiet sweeps that count as equilibrium; 0 always runs `max_sweeps`.
    pub stability_window: usize,
    pub seed: u64,
    pub repair: bool,
    pub polish: bool,
    /// Start from uniformly random decisions instead of all zeros.
    pub random_init: bool,
    /// Continue from the lowest local energy seen at a sweep boundary
    /// rather than the last state.
    pub keep_best: bool,
    pub model: LocalModel,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            nd: 1,
            t0: 3.0,
            max_sweeps: 500,
            stability_window: 3,
            seed: 0,
            repair: false,
            polish: true,
            random_init: true,
            keep_best: true,
            model: LocalModel::default(),
        }
    }
}

impl GibbsConfig {
    pub fn new(nd: usize, seed: u64) -> Self {
        GibbsConfig {
            nd,
            seed,
            ..GibbsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::Config(format!("t0 must be positive, got {}", self.t0)));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }

    /// `T(t) = T0 / ln(1 + t)`, `t >= 1`.
    pub fn temperature(&self, t: usize) -> f64 {
        self.t0 / (1.0 + t as f64).ln()
    }
}

struct Sampler<'a> {
    inst: &'a PreemptionInstance,
    nd: usize,
    model: LocalModel,
    d: DecisionMatrix,
    avail: Vec<f64>,
    messages: u64,
}

impl<'a> Sampler<'a> {
    fn new(inst: &'a PreemptionInstance, cfg: &GibbsConfig) -> Self {
        Sampler {
            inst,
            nd: cfg.nd,
            model: cfg.model,
            d: DecisionMatrix::zeros(inst),
            avail: inst.free_bw().to_vec(),
            messages: 0,
        }
    }

    /// `psi(1) - psi(0)` for incidence `(k, i)` given current neighbors.
    fn delta(&self, k: usize, i: usize) -> f64 {
        let f = &self.inst.flows()[k];
        let w = self.inst.weight(k);
        let row = self.d.flow(k);
        let a = i - f.first;
        let lo = a.saturating_sub(self.nd);
        let hi = (a + self.nd).min(row.len() - 1);
        let flow_term = match self.model {
            LocalModel::Pairwise => {
                let on = (lo..=hi).filter(|&b| b != a && row[b]).count();
                w * (1.0 - on as f64)
            }
            LocalModel::Windowed => {
                let mut window = row[lo..=hi].to_vec();
                window[a - lo] = true;
                let with = window_count(&window, self.nd);
                window[a - lo] = false;
                let without = window_count(&window, self.nd);
                w * (with as f64 - without as f64)
            }
        };
        let base = if row[a] {
            self.avail[i] - f.bandwidth
        } else {
            self.avail[i]
        };
        let c = self.inst.c_new();
        let u1 = short_of(base + f.bandwidth, c) as u8 as f64;
        let u0 = short_of(base, c) as u8 as f64;
        flow_term + self.inst.beta() * (u1 - u0)
    }

    fn neighbors_in_span(&self, k: usize, i: usize) -> u64 {
        let f = &self.inst.flows()[k];
        let lo = i.saturating_sub(self.nd).max(f.first);
        let hi = (i + self.nd).min(f.last);
        (hi - lo) as u64
    }

    /// Returns whether the value changed.
    fn assign(&mut self, k: usize, i: usize, value: bool) -> bool {
        let cur = self.d.get(k, i) == Some(true);
        if cur == value {
            return false;
        }
        self.d.set(k, i, value);
        let bw = self.inst.flows()[k].bandwidth;
        self.avail[i] += if value { bw } else { -bw };
        true
    }

    fn local_energy(&self) -> f64 {
        match self.model {
            LocalModel::Pairwise => model::local_hamiltonian(self.inst, &self.d, self.nd),
            LocalModel::Windowed => model::windowed_hamiltonian(self.inst, &self.d, self.nd),
        }
    }

    fn record(&self, sweep: usize, phase: Phase, flips: usize) -> SweepRecord {
        SweepRecord {
            sweep,
            phase,
            h: model::hamiltonian(self.inst, &self.d),
            hl: self.local_energy(),
            flips,
            messages: self.messages,
        }
    }

    /// Deterministic greedy sweeps accepting strict decreases only.
    fn polish(&mut self, incidences: &[(usize, usize)], trace: &mut SolverTrace, sweep: &mut usize) {
        // each accepted flip lowers the local energy, so this terminates;
        // the cap guards against float noise
        for _ in 0..10_000 {
            let mut flips = 0;
            for &(k, i) in incidences {
                self.messages += self.neighbors_in_span(k, i);
                let delta = self.delta(k, i);
                let cur = self.d.get(k, i) == Some(true);
                let gain = if cur { delta } else { -delta };
                if gain > 1e-12 && self.assign(k, i, !cur) {
                    flips += 1;
                }
            }
            *sweep += 1;
            trace.sweeps.push(self.record(*sweep, Phase::Polish, flips));
            if flips == 0 {
                break;
            }
        }
    }
}

/// Makes every satisfiable link feasible. Flows already preempted elsewhere
/// are reused first at no extra cost; then the cheapest `alpha_k B^k` flows
/// (lower id on ties) are preempted over their whole span. Returns whether
/// anything changed.
pub fn repair(inst: &PreemptionInstance, d: &mut DecisionMatrix) -> bool {
    let mut changed = false;
    let mut avail = model::available(inst, d);
    let mut global = d.global();
    for i in 0..inst.links() {
        if !short_of(avail[i], inst.c_new()) {
            continue;
        }
        let mut local: Vec<usize> = inst
            .flows_on(i)
            .iter()
            .copied()
            .filter(|&k| d.get(k, i) == Some(false))
            .collect();
        local.sort_by(|&a, &b| {
            let fa = inst.flows()[a].id;
            let fb = inst.flows()[b].id;
            global.0[b]
                .cmp(&global.0[a])
                .then(inst.weight(a).partial_cmp(&inst.weight(b)).unwrap())
                .then(fa.cmp(&fb))
        });
        for k in local {
            if !short_of(avail[i], inst.c_new()) {
                break;
            }
            let f = &inst.flows()[k];
            let was_global = global.0[k];
            for j in f.links() {
                // reusing an already preempted flow touches only this link
                if (j == i || !was_global) && d.get(k, j) == Some(false) {
                    d.set(k, j, true);
                    avail[j] += f.bandwidth;
                }
            }
            global.0[k] = true;
            changed = true;
        }
    }
    changed
}

/// Distributed stochastic relaxation. Every (flow, link) incidence is
/// resampled in a seeded random order each sweep from its two-state
/// conditional at temperature `T0 / ln(1 + t)`, using neighbor decisions
/// within `nd` hops on the same flow.
pub fn gibbs_solve(inst: &PreemptionInstance, cfg: &GibbsConfig) -> Result<SolverResult> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed, &[]);
    let mut s = Sampler::new(inst, cfg);
    let mut trace = SolverTrace::default();
    if cfg.random_init {
        for k in 0..inst.flow_count() {
            for i in inst.flows()[k].links() {
                let v = rng.gen::<bool>();
                s.assign(k, i, v);
            }
        }
    }

    let mut incidences: Vec<(usize, usize)> = (0..inst.flow_count())
        .flat_map(|k| inst.flows()[k].links().map(move |i| (k, i)))
        .collect();
    let mut sweep = 0;
    let mut quiet = 0;
    let mut best = (f64::INFINITY, s.d.clone());
    for t in 1..=cfg.max_sweeps {
        let temp = cfg.temperature(t);
        incidences.shuffle(&mut rng);
        let mut flips = 0;
        for &(k, i) in &incidences {
            s.messages += s.neighbors_in_span(k, i);
            let x = s.delta(k, i) / temp;
            let p1 = 1.0 / (1.0 + x.exp());
            let value = rng.gen::<f64>() < p1;
            if s.assign(k, i, value) {
                flips += 1;
            }
        }
        sweep = t;
        let rec = s.record(t, Phase::Anneal, flips);
        if cfg.keep_best && rec.hl < best.0 - 1e-12 {
            best = (rec.hl, s.d.clone());
        }
        trace.sweeps.push(rec);
        quiet = if flips == 0 { quiet + 1 } else { 0 };
        if cfg.stability_window > 0 && quiet >= cfg.stability_window {
            trace.converged = true;
            break;
        }
    }
    trace.sweeps_used = sweep;
    if cfg.keep_best && best.0 < s.local_energy() {
        s.d = best.1;
        s.avail = model::available(inst, &s.d);
    }

    incidences.sort_unstable();
    if cfg.polish {
        s.polish(&incidences, &mut trace, &mut sweep);
    }
    let before = s.d.consolidated();
    trace.unrepaired_cost = model::objective(inst, &before.global());
    trace.unrepaired_feasible = model::feasible(inst, &before);

    if cfg.repair && !trace.unrepaired_feasible {
        let mut d = before;
        trace.repaired = repair(inst, &mut d);
        s.avail = model::available(inst, &d);
        s.d = d;
        sweep += 1;
        trace.sweeps.push(s.record(sweep, Phase::Repair, 0));
        if cfg.polish {
            s.polish(&incidences, &mut trace, &mut sweep);
        }
    }
    trace.messages_exchanged = s.messages;
    Ok(SolverResult::from_decisions("gibbs", inst, &s.d, trace))
}

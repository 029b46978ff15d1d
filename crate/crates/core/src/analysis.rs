//! Closed-form bounds on link dependency and near-optimality, plus the
//! measured counterparts.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, PreemptionInstance};
use crate::seed;
use crate::solvers::{exact_optimal, gibbs_solve, GibbsConfig, SolverResult, SolverTrace};
use crate::traffic::{generate_route_flows, RouteTrafficSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    /// Route hops `L`.
    pub links: usize,
    /// Nodal degree.
    pub d0: usize,
    pub p_c: f64,
    pub nd: usize,
    pub c_new: f64,
    pub eps_b: f64,
    /// Target performance for the neighborhood-size search.
    pub epsilon: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if self.links == 0 {
            return Err(Error::invalid("L must be at least 1"));
        }
        if self.d0 < 2 {
            return Err(Error::invalid("d0 must be at least 2"));
        }
        if !(self.p_c > 0.0 && self.p_c < 1.0) {
            return Err(Error::invalid(format!("p_c = {} outside (0, 1)", self.p_c)));
        }
        if !(0.0..1.0).contains(&self.eps_b) {
            return Err(Error::invalid(format!("eps_b = {} outside [0, 1)", self.eps_b)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(self.c_new > 0.0) {
            return Err(Error::invalid("c_new must be positive"));
        }
        Ok(())
    }

    fn spread(&self) -> f64 {
        (1.0 + self.eps_b) / (1.0 - self.eps_b)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Lower bound on the probability that a flow occupies two route links `h`
/// hops apart: `((L - h)/L) (1/(d0 - 1))^h`.
pub fn lemma2_lower(links: usize, d0: usize, h: usize) -> Result<f64> {
    if d0 < 2 {
        return Err(Error::invalid("d0 must be at least 2"));
    }
    if h == 0 || h > links {
        return Err(Error::invalid(format!("hop separation {h} outside [1, {links}]")));
    }
    let l = links as f64;
    Ok((l - h as f64) / l * (1.0 / (d0 - 1) as f64).powi(h as i32))
}

/// Upper bound from counting lattice shortest paths:
/// `((L - h)/L) C(h, h/2) / (c (2^h - 1))` with `c = 2` at `h = 2`, else 3.
/// Odd `h` uses `C(h, floor(h/2))`.
pub fn lemma3_upper(links: usize, h: usize) -> Result<f64> {
    if h < 2 {
        return Err(Error::invalid(format!("hop separation {h} below 2")));
    }
    if h > links {
        return Err(Error::invalid(format!("hop separation {h} exceeds L = {links}")));
    }
    let l = links as f64;
    let c = if h == 2 { 2.0 } else { 3.0 };
    let denom = c * ((1u64 << h.min(62)) as f64 - 1.0);
    Ok((l - h as f64) / l * binomial(h, h / 2) / denom)
}

/// Stirling forms of [`lemma3_upper`]: `((L - h)/L) / (c sqrt(2 pi h))` for
/// `c = 3` and `c = 2`, in that order.
pub fn lemma3_asymptotic(links: usize, h: usize) -> Result<(f64, f64)> {
    if h == 0 || h > links {
        return Err(Error::invalid(format!("hop separation {h} outside [1, {links}]")));
    }
    let l = links as f64;
    let base = (l - h as f64) / l / (2.0 * PI * h as f64).sqrt();
    Ok((base / 3.0, base / 2.0))
}

/// Bound on `E|H(d*) - H(d^)|` for neighborhood size `nd`:
/// `2 c_new ((1+eps_B)/(1-eps_B)) L [(1 + p_c^nd)^(L - nd) - 1]`.
pub fn theorem1_bound(p: &BoundParams) -> Result<f64> {
    p.validate()?;
    if p.nd >= p.links {
        return Err(Error::invalid(format!("N_d = {} must be below L = {}", p.nd, p.links)));
    }
    let l = p.links as f64;
    let grow = (1.0 + p.p_c.powi(p.nd as i32)).powi((p.links - p.nd) as i32) - 1.0;
    Ok(2.0 * p.c_new * p.spread() * l * grow)
}

/// First-order form `2 c_new ((1+eps_B)/(1-eps_B)) L (L - nd) p_c^nd`, offered
/// only where it is accurate (`p_c^nd L < 0.1`).
pub fn theorem1_approx(p: &BoundParams) -> Result<Option<f64>> {
    theorem1_bound(p)?;
    let q = p.p_c.powi(p.nd as i32);
    if q * p.links as f64 >= 0.1 {
        return Ok(None);
    }
    let l = p.links as f64;
    Ok(Some(2.0 * p.c_new * p.spread() * l * (l - p.nd as f64) * q))
}

/// Smallest `nd` in `[0, L-1]` whose bound is at most `epsilon`, if any.
pub fn corollary1_min_nd(p: &BoundParams) -> Result<Option<usize>> {
    p.validate()?;
    for nd in 0..p.links {
        let b = theorem1_bound(&BoundParams { nd, ..*p })?;
        if b <= p.epsilon {
            return Ok(Some(nd));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    pub deltas: Vec<f64>,
    pub mean: f64,
    pub trials: usize,
    pub bound: Option<f64>,
    pub bound_satisfied: Option<bool>,
}

impl DeltaReport {
    fn new(deltas: Vec<f64>, bound: Option<f64>) -> Self {
        let trials = deltas.len();
        let mean = if trials == 0 {
            0.0
        } else {
            deltas.iter().sum::<f64>() / trials as f64
        };
        DeltaReport {
            bound_satisfied: bound.map(|b| mean <= b),
            deltas,
            mean,
            trials,
            bound,
        }
    }
}

fn delta(inst: &PreemptionInstance, opt: &SolverResult, cfg: &GibbsConfig) -> Result<f64> {
    let r = gibbs_solve(inst, cfg)?;
    Ok((opt.hamiltonian - model::hamiltonian(inst, &r.decisions)).abs())
}

/// `|H(d*) - H(d^)|` over `trials` independently seeded solves of one
/// instance. The optimum comes from the exact search.
pub fn measure_delta(
    inst: &PreemptionInstance,
    cfg: &GibbsConfig,
    trials: usize,
    seed_value: u64,
    bound: Option<f64>,
) -> Result<DeltaReport> {
    let opt = exact_optimal(inst)?;
    let deltas = (0..trials)
        .into_par_iter()
        .map(|t| {
            let cfg = GibbsConfig {
                seed: seed::derive(seed_value, &[t as u64]),
                ..cfg.clone()
            };
            delta(inst, &opt, &cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DeltaReport::new(deltas, bound))
}

const RESAMPLE_ATTEMPTS: u64 = 1000;

/// Draws route instances until one can be made feasible.
fn satisfiable_route_instance(
    spec: &RouteTrafficSpec,
    free_bw: f64,
    c_new: f64,
    seed_value: u64,
) -> Result<PreemptionInstance> {
    for attempt in 0..RESAMPLE_ATTEMPTS {
        let spec = RouteTrafficSpec {
            seed: seed::derive(seed_value, &[attempt]),
            ..*spec
        };
        let segs = generate_route_flows(&spec)?;
        let inst = PreemptionInstance::from_segments(spec.links, &segs, free_bw, c_new, spec.class + 1)?;
        if inst.is_satisfiable() {
            return Ok(inst);
        }
    }
    Err(Error::invalid(format!(
        "no satisfiable route instance in {RESAMPLE_ATTEMPTS} draws; lower c_new or raise the load"
    )))
}

/// Like [`measure_delta`] but draws a fresh synthetic route instance for
/// every trial, redrawing instances that no decision can make feasible.
pub fn measure_delta_geometric(
    spec: &RouteTrafficSpec,
    free_bw: f64,
    c_new: f64,
    cfg: &GibbsConfig,
    trials: usize,
    seed_value: u64,
    bound: Option<f64>,
) -> Result<DeltaReport> {
    let deltas = (0..trials)
        .into_par_iter()
        .map(|t| {
            let inst = satisfiable_route_instance(spec, free_bw, c_new, seed::derive(seed_value, &[t as u64, 0]))?;
            let opt = exact_optimal(&inst)?;
            let cfg = GibbsConfig {
                seed: seed::derive(seed_value, &[t as u64, 1]),
                ..cfg.clone()
            };
            delta(&inst, &opt, &cfg)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DeltaReport::new(deltas, bound))
}

/// `(1/L) sum_k B^k d^k` over global decisions.
pub fn avg_preempted_bw(inst: &PreemptionInstance, result: &SolverResult) -> f64 {
    result.preempted_bandwidth(inst) / inst.links() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CommComplexity {
    pub messages: u64,
    /// `N_d * f_max * i_ter`, with every recorded sweep counted.
    pub envelope: u64,
}

pub fn communication_complexity(inst: &PreemptionInstance, trace: &SolverTrace, nd: usize) -> CommComplexity {
    CommComplexity {
        messages: trace.messages_exchanged,
        envelope: (nd * inst.max_link_flows() * trace.sweeps.len()) as u64,
    }
}

/// One line of a bound table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub params: String,
    pub value: f64,
    pub bound: f64,
    pub satisfied: bool,
}

pub fn write_bound_rows<W: Write>(rows: &[BoundRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

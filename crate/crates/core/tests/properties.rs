use proptest::prelude::*;

use preempt_core::graph::{self, NodeId};
use preempt_core::model::{self, default_alpha, DecisionMatrix, GlobalDecision, PreemptionInstance, RouteFlow};
use preempt_core::solvers::{self, GibbsConfig, LocalModel, Phase};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Raw {
    links: usize,
    // (first, span, bandwidth, class)
    flows: Vec<(usize, usize, u8, u32)>,
    free: Vec<u8>,
    c_new: u8,
}

fn raw(max_links: usize, max_flows: usize) -> impl Strategy<Value = Raw> {
    raw_spans(max_links, max_flows, max_links)
}

fn raw_spans(max_links: usize, max_flows: usize, max_span: usize) -> impl Strategy<Value = Raw> {
    (1..=max_links).prop_flat_map(move |links| {
        let flow = (0..links, 1..=max_span.min(links), 1u8..=4, 1u32..=2)
            .prop_map(move |(first, span, bw, class)| (first, span.min(links - first), bw, class));
        (
            prop::collection::vec(flow, 0..=max_flows),
            prop::collection::vec(0u8..=3, links),
            1u8..=6,
        )
            .prop_map(move |(flows, free, c_new)| Raw {
                links,
                flows,
                free,
                c_new,
            })
    })
}

fn build(r: &Raw) -> PreemptionInstance {
    let flows: Vec<RouteFlow> = r
        .flows
        .iter()
        .enumerate()
        .map(|(k, &(first, span, bw, class))| RouteFlow {
            id: k + 1,
            origin: k + 1,
            class,
            bandwidth: bw as f64,
            first,
            last: first + span - 1,
        })
        .collect();
    let alpha = default_alpha(&flows, 3);
    let free = r.free.iter().map(|&b| b as f64).collect();
    PreemptionInstance::new(r.links, flows, free, r.c_new as f64, 3, alpha, None).unwrap()
}

fn with_decisions(inst: &PreemptionInstance, bits: &[bool]) -> DecisionMatrix {
    let mut d = DecisionMatrix::zeros(inst);
    let mut it = bits.iter().cycle();
    for k in 0..inst.flow_count() {
        for v in d.flow_mut(k) {
            *v = *it.next().unwrap_or(&false);
        }
    }
    d
}

fn instance_and_decisions(max_links: usize, max_flows: usize) -> impl Strategy<Value = (Raw, Vec<bool>)> {
    (raw(max_links, max_flows), prop::collection::vec(any::<bool>(), 1..64))
}

fn bits_of(inst: &PreemptionInstance, mask: u64) -> DecisionMatrix {
    let mut d = DecisionMatrix::zeros(inst);
    let mut j = 0;
    for k in 0..inst.flow_count() {
        for v in d.flow_mut(k) {
            *v = mask & (1 << j) != 0;
            j += 1;
        }
    }
    d
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expanded_energy_matches_product_form(r in raw_spans(4, 4, 3)) {
        let inst = build(&r);
        for mask in 0..(1u64 << inst.incidence_count()) {
            let d = bits_of(&inst, mask);
            let a = model::hamiltonian(&inst, &d);
            let b = model::hamiltonian_expanded(&inst, &d).unwrap();
            prop_assert!(close(a, b), "{a} vs {b}");
        }
    }

    #[test]
    fn consistent_feasible_energy_is_the_objective((r, bits) in instance_and_decisions(6, 8)) {
        let inst = build(&r);
        let g = GlobalDecision(bits.iter().cycle().take(inst.flow_count()).copied().collect());
        let d = DecisionMatrix::from_global(&inst, &g);
        prop_assert!(model::consistency(&d).iter().all(|&c| c));
        if model::feasible(&inst, &d) {
            prop_assert!(close(model::hamiltonian(&inst, &d), model::objective(&inst, &g)));
        } else {
            prop_assert!(model::hamiltonian(&inst, &d) >= inst.beta());
        }
    }

    #[test]
    fn larger_beta_raises_infeasible_energy((r, bits) in instance_and_decisions(6, 8), scale in 1.01f64..10.0) {
        let inst = build(&r);
        let d = with_decisions(&inst, &bits);
        let heavier = inst.with_beta(inst.beta() * scale).unwrap();
        let (h1, h2) = (model::hamiltonian(&inst, &d), model::hamiltonian(&heavier, &d));
        if model::feasible(&inst, &d) {
            prop_assert!(close(h1, h2));
        } else {
            prop_assert!(h2 > h1);
        }
    }

    #[test]
    fn energy_ignores_flow_order_and_route_direction((r, bits) in instance_and_decisions(6, 8), rot in 0usize..8) {
        let inst = build(&r);
        let d = with_decisions(&inst, &bits);
        let h = model::hamiltonian(&inst, &d);
        let n = inst.flow_count();

        // rotate flow order and renumber ids backwards
        let perm: Vec<usize> = (0..n).map(|j| (j + rot) % n.max(1)).collect();
        let flows: Vec<RouteFlow> = perm
            .iter()
            .enumerate()
            .map(|(j, &k)| RouteFlow { id: 100 - j, ..inst.flows()[k] })
            .collect();
        let relabeled = PreemptionInstance::new(
            inst.links(), flows, inst.free_bw().to_vec(), inst.c_new(), inst.i_new(),
            inst.alpha().clone(), Some(inst.beta()),
        ).unwrap();
        let rows: Vec<Vec<bool>> = perm.iter().map(|&k| d.flow(k).to_vec()).collect();
        let d2 = DecisionMatrix::from_rows(&relabeled, &rows).unwrap();
        prop_assert!(close(h, model::hamiltonian(&relabeled, &d2)));

        let l = inst.links();
        let flows: Vec<RouteFlow> = inst
            .flows()
            .iter()
            .map(|f| RouteFlow { first: l - 1 - f.last, last: l - 1 - f.first, ..*f })
            .collect();
        let mut free = inst.free_bw().to_vec();
        free.reverse();
        let reversed = PreemptionInstance::new(
            l, flows, free, inst.c_new(), inst.i_new(), inst.alpha().clone(), Some(inst.beta()),
        ).unwrap();
        let rows: Vec<Vec<bool>> = (0..n).map(|k| d.flow(k).iter().rev().copied().collect()).collect();
        let d3 = DecisionMatrix::from_rows(&reversed, &rows).unwrap();
        prop_assert!(close(h, model::hamiltonian(&reversed, &d3)));
        prop_assert!(close(
            solvers::exact_optimal(&inst).unwrap().cost,
            solvers::exact_optimal(&reversed).unwrap().cost
        ));
    }

    #[test]
    fn second_order_model_is_exact_for_two_link_spans(
        r in raw_spans(6, 8, 2),
        bits in prop::collection::vec(any::<bool>(), 1..64),
    ) {
        let inst = build(&r);
        let d = with_decisions(&inst, &bits);
        prop_assert!(close(model::local_hamiltonian(&inst, &d, inst.links()), model::hamiltonian(&inst, &d)));
    }

    #[test]
    fn windowed_model_is_exact_within_its_window((r, bits) in instance_and_decisions(6, 8), nd in 0usize..6) {
        let inst = build(&r);
        let d = with_decisions(&inst, &bits);
        let wl = model::windowed_hamiltonian(&inst, &d, nd);
        let h = model::hamiltonian(&inst, &d);
        if inst.max_span() <= nd + 1 {
            prop_assert!(close(wl, h));
        } else {
            prop_assert!(wl >= h - EPS);
        }
    }

    #[test]
    fn brute_force_dominates_every_feasible_solver(r in raw(6, 8), seed in 0u64..1000) {
        let inst = build(&r);
        let best = solvers::brute_force_optimal(&inst).unwrap();
        let mut others = vec![
            solvers::min_conn(&inst),
            solvers::min_bw(&inst).unwrap(),
            solvers::exact_optimal(&inst).unwrap(),
        ];
        let cfg = GibbsConfig { repair: true, max_sweeps: 50, ..GibbsConfig::new(1, seed) };
        others.push(solvers::gibbs_solve(&inst, &cfg).unwrap());
        for o in &others {
            if o.feasible {
                prop_assert!(best.feasible);
                prop_assert!(best.cost <= o.cost + EPS, "{} {} < {}", o.solver, o.cost, best.cost);
            }
        }
    }

    #[test]
    fn exact_search_matches_brute_force(r in raw(6, 10)) {
        let inst = build(&r);
        let a = solvers::brute_force_optimal(&inst).unwrap();
        let b = solvers::exact_optimal(&inst).unwrap();
        prop_assert_eq!(a.feasible, b.feasible);
        prop_assert!(close(a.cost, b.cost));
        prop_assert_eq!(a.preempted, b.preempted);
    }

    #[test]
    fn min_bw_never_costs_more_locally(r in raw(6, 8)) {
        let inst = build(&r);
        for i in 0..inst.links() {
            let w = |ks: &[usize]| ks.iter().map(|&k| inst.weight(k)).sum::<f64>();
            let bw = solvers::min_bw_local(&inst, i).unwrap();
            let conn = solvers::min_conn_local(&inst, i);
            prop_assert!(w(&bw) <= w(&conn) + EPS, "link {i}");
        }
    }

    #[test]
    fn sampler_is_deterministic_per_seed(r in raw(6, 8), seed in any::<u64>(), nd in 0usize..4) {
        let inst = build(&r);
        let cfg = GibbsConfig { max_sweeps: 40, ..GibbsConfig::new(nd, seed) };
        let a = solvers::gibbs_solve(&inst, &cfg).unwrap();
        let b = solvers::gibbs_solve(&inst, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn no_neighborhood_means_no_messages(r in raw(6, 8), seed in 0u64..1000) {
        let inst = build(&r);
        let cfg = GibbsConfig { max_sweeps: 30, ..GibbsConfig::new(0, seed) };
        prop_assert_eq!(solvers::gibbs_solve(&inst, &cfg).unwrap().trace.messages_exchanged, 0);
    }

    #[test]
    fn polish_never_raises_energy(
        r in raw(6, 8),
        seed in 0u64..1000,
        nd in 0usize..4,
        pairwise in any::<bool>(),
        repair in any::<bool>(),
    ) {
        let inst = build(&r);
        let model = if pairwise { LocalModel::Pairwise } else { LocalModel::Windowed };
        let cfg = GibbsConfig { max_sweeps: 30, model, repair, ..GibbsConfig::new(nd, seed) };
        let res = solvers::gibbs_solve(&inst, &cfg).unwrap();
        for w in res.trace.sweeps.windows(2) {
            if w[1].phase == Phase::Polish && w[0].phase != Phase::Anneal {
                prop_assert!(w[1].h <= w[0].h + EPS);
            }
        }
        if let Some(last) = res.trace.sweeps.last() {
            prop_assert!(res.hamiltonian <= last.h + EPS);
        }
    }

    #[test]
    fn repair_restores_feasibility(r in raw(6, 8), seed in 0u64..1000) {
        let inst = build(&r);
        let cfg = GibbsConfig { max_sweeps: 10, repair: true, ..GibbsConfig::new(1, seed) };
        let res = solvers::gibbs_solve(&inst, &cfg).unwrap();
        prop_assert_eq!(res.feasible, inst.is_satisfiable());
    }

    #[test]
    fn lattice_routes_are_manhattan(rows in 2usize..7, cols in 2usize..7, a in 0usize..49, b in 0usize..49) {
        let t = graph::build_lattice(rows, cols, 100.0).unwrap();
        let n = rows * cols;
        let (s, d) = (a % n, b % n);
        prop_assume!(s != d);
        let (dr, dc) = ((s / cols).abs_diff(d / cols), (s % cols).abs_diff(d % cols));
        let route = graph::shortest_path(&t, NodeId(s), NodeId(d)).unwrap();
        prop_assert_eq!(route.hops(), dr + dc);
        let paths = graph::count_shortest_paths(&t, NodeId(s), NodeId(d)).unwrap();
        prop_assert_eq!(paths, binomial(dr + dc, dr));
    }

    #[test]
    fn power_law_graphs_are_connected(n in 4usize..60, m in 1usize..4, seed in any::<u64>()) {
        prop_assume!(m < n);
        let t = graph::build_power_law(n, m, seed, 100.0).unwrap();
        prop_assert!(t.bfs_distances(NodeId(0)).iter().all(|x| x.is_some()));
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, j| acc * (n - j) as u128 / (j + 1) as u128)
}

use evoagent::benchmarks::ProblemKind;
use evoagent::experiment::{run_trial, EvagSim, ExperimentConfig, Handled, Model, TrialSim};
use evoagent::netsim::{EventKind, LinkSpec, MessageClass, SimNetwork};
use evoagent::NodeId;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    Send {
        from: u32,
        to: u32,
        size: usize,
        ack: bool,
    },
    Timer {
        node: u32,
        delay: f64,
    },
    Step,
}

fn ops(n: u32) -> impl Strategy<Value = Vec<Op>> {
    let op = prop_oneof![
        (0..n, 0..n, 0usize..2000, any::<bool>()).prop_map(|(from, to, size, ack)| Op::Send {
            from,
            to,
            size,
            ack
        }),
        (0..n, 0.0f64..0.05).prop_map(|(node, delay)| Op::Timer { node, delay }),
        Just(Op::Step),
    ];
    prop::collection::vec(op, 1..200)
}

fn drain(net: &mut SimNetwork, trace: &mut Vec<(f64, u64, u32)>) {
    if let Some(ev) = net.step() {
        trace.push((ev.time, ev.seq, ev.target.0));
    }
}

fn replay(n: u32, spec: LinkSpec, ops: &[Op]) -> (Vec<(f64, u64, u32)>, SimNetwork) {
    let mut net = SimNetwork::build_complete(n as usize, spec).unwrap();
    net.set_fault_seed(9);
    let mut trace = Vec::new();
    for op in ops {
        match *op {
            Op::Send {
                from,
                to,
                size,
                ack,
            } if from != to => {
                let class = if ack {
                    MessageClass::Ack
                } else {
                    MessageClass::Migrant
                };
                net.send(NodeId(from), NodeId(to), class, vec![0; size])
                    .unwrap();
            }
            Op::Send { .. } => {}
            Op::Timer { node, delay } => net.schedule_timer(NodeId(node), net.now() + delay, 0),
            Op::Step => drain(&mut net, &mut trace),
        }
    }
    while net.pending_events() > 0 {
        drain(&mut net, &mut trace);
    }
    (trace, net)
}

proptest! {
    #[test]
    fn simulator_is_deterministic_and_ordered(ops in ops(5), lat in 0.0f64..0.03, bw in 1e3f64..1e9, drop in 0.0f64..0.5) {
        let spec = LinkSpec { drop_prob: drop, ..LinkSpec::new(lat, bw).unwrap() };
        let (a, net) = replay(5, spec, &ops);
        let (b, _) = replay(5, spec, &ops);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.windows(2).all(|w| w[0].0 <= w[1].0));
        prop_assert_eq!(net.messages_delivered() + net.messages_dropped(), net.messages_sent());
        for class in [MessageClass::Migrant, MessageClass::Ack] {
            prop_assert!(net.transits(class).iter().all(|&t| t >= lat - 1e-12 && t <= spec.transit_time(2000) + 1e-12));
        }
    }

    #[test]
    fn delivery_time_is_latency_plus_transfer(lat in 0.0f64..0.1, bw in 1e2f64..1e9, size in 0usize..5000) {
        let spec = LinkSpec::new(lat, bw).unwrap();
        let mut net = SimNetwork::build_complete(2, spec).unwrap();
        net.schedule_timer(NodeId(0), 1.5, 0);
        net.step();
        let at = net.send(NodeId(0), NodeId(1), MessageClass::Migrant, vec![1; size]).unwrap().unwrap();
        let ev = net.step().unwrap();
        prop_assert_eq!(ev.time, at);
        prop_assert!((at - 1.5 - lat - size as f64 / bw).abs() < 1e-12);
        let EventKind::Deliver { sent_at, payload, .. } = ev.kind else { panic!("expected a delivery") };
        prop_assert_eq!(sent_at, 1.5);
        prop_assert_eq!(payload.len(), size);
    }
}

fn small(model: Model, problem: ProblemKind, nodes: usize, budget: u64) -> ExperimentConfig {
    ExperimentConfig {
        nodes,
        population: 48,
        budget,
        dim: 6,
        eval_cost: 2e-3,
        ..ExperimentConfig::new(model, problem)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trials_conserve_evaluations(
        island in any::<bool>(),
        nodes in 1usize..=6,
        budget in 500u64..6000,
        run in 0usize..1000,
        kind in prop::sample::select(ProblemKind::ALL.to_vec()),
    ) {
        let model = if island { Model::Island } else { Model::EvolvableAgent };
        let cfg = small(model, kind, nodes, budget);
        let r = run_trial(&cfg, run).unwrap();
        prop_assert_eq!(r.node_evaluations.iter().sum::<u64>(), r.work_units);
        prop_assert_eq!(r.evaluations_used, r.work_units);
        prop_assert!(r.evaluations_used >= budget);
        prop_assert!(r.evaluations_used <= budget + cfg.budget_slack());
        prop_assert!(r.best_fitness >= kind.f_bias());
        prop_assert_eq!(r.node_best.len(), nodes);
        prop_assert_eq!(r, run_trial(&cfg, run).unwrap());
    }

    #[test]
    fn node_estimates_are_monotone_lower_bounds(nodes in 2usize..=5, run in 0usize..1000) {
        let cfg = small(Model::EvolvableAgent, ProblemKind::ShiftedSphere, nodes, 8000);
        let mut sim = EvagSim::new(&cfg, run).unwrap();
        let mut last = vec![0u64; nodes];
        while let Some(h) = sim.step() {
            if let Handled::Ping { node, .. } | Handled::AgentStep { node, .. } = h {
                let b = &sim.boards()[node.index()];
                let g = b.global_evaluations();
                prop_assert!(g >= last[node.index()]);
                prop_assert!(g <= sim.total_evaluations());
                last[node.index()] = g;
            }
        }
        prop_assert!(sim.is_finished());
    }
}

#[test]
fn event_log_is_reproducible() {
    let cfg = small(Model::EvolvableAgent, ProblemKind::ShiftedSphere, 3, 4000);
    let dump = || {
        let mut sim = TrialSim::new(&cfg, 4).unwrap();
        sim.enable_event_log();
        sim.run_to_end();
        let mut out = Vec::new();
        sim.write_event_log(&mut out).unwrap();
        out
    };
    let a = dump();
    assert!(!a.is_empty());
    assert_eq!(a, dump());
}

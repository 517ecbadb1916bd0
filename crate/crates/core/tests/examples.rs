use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ringpulse::fabric::{
    Automaton,
    ChannelId, Delivery, Endpoint, PortAssignment, PortLabel, RunOutcome, Scheduler,
    SchedulerPolicy,
};
use ringpulse::oracle::{check_a1_invariants, check_a2_invariants, check_a3_outcome, CheckStatus};
use ringpulse::protocols::{A4Config, ProtocolKind, RingSetup, SampledId};
use ringpulse::trace::execute;
use ringpulse::Error;

fn oriented(protocol: ProtocolKind, ids: &[u64]) -> RingSetup {
    RingSetup::oriented(protocol, ids.to_vec()).unwrap()
}

fn random_run(setup: &RingSetup, seed: u64) -> ringpulse::trace::ExecutionTrace {
    execute(setup, SchedulerPolicy::UniformRandom { seed }, setup.default_step_limit()).unwrap()
}

#[test]
fn construction_examples() {
    let net = oriented(ProtocolKind::A1, &[1]).build().unwrap();
    assert_eq!(net.len(), 1);
    assert!(net.in_flight().iter().all(|c| *c == 0));

    let setup = oriented(ProtocolKind::A2, &[3, 1, 2]);
    assert_eq!(setup.id_max(), 3);
    assert_eq!(setup.ids[0], 3);
    setup.build().unwrap();

    let swapped = PortAssignment::from_cw_ports(vec![PortLabel::One, PortLabel::Zero]).unwrap();
    assert!(!swapped.is_oriented());
    RingSetup::new(ProtocolKind::A3a, vec![1, 2], swapped).build().unwrap();
}

#[test]
fn construction_rejects_bad_input() {
    assert!(matches!(
        oriented(ProtocolKind::A2, &[2, 2]).build(),
        Err(Error::DuplicateId(2))
    ));
    assert!(matches!(oriented(ProtocolKind::A1, &[0, 1]).build(), Err(Error::ZeroId)));
    assert!(matches!(
        RingSetup::new(ProtocolKind::A1, vec![], PortAssignment::oriented(1).unwrap()).build(),
        Err(Error::EmptyRing)
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let unoriented = loop {
        let a = PortAssignment::random(3, &mut rng).unwrap();
        if !a.is_oriented() {
            break a;
        }
    };
    assert!(matches!(
        RingSetup::new(ProtocolKind::A2, vec![1, 2, 3], unoriented).build(),
        Err(Error::NotOriented(_))
    ));
    // two separate 1-cycles are not a ring
    let split = vec![
        Endpoint::new(0, PortLabel::One),
        Endpoint::new(0, PortLabel::Zero),
        Endpoint::new(1, PortLabel::One),
        Endpoint::new(1, PortLabel::Zero),
    ];
    assert!(PortAssignment::from_wiring(split).is_err());
}

#[test]
fn initialization_examples() {
    let mut sched = Scheduler::new(SchedulerPolicy::RoundRobin);
    let mut net = oriented(ProtocolKind::A1, &[1, 2, 3]).build().unwrap();
    net.initialize(&mut sched).unwrap();
    let a = net.assignment().clone();
    for c in 0..6 {
        let expected = u64::from(a.channel_direction(ChannelId(c)) == ringpulse::fabric::Direction::Cw);
        assert_eq!(net.in_flight()[c], expected);
    }
    assert!(net.counters().iter().all(|c| c.sigma_cw() == 1));

    let mut net = oriented(ProtocolKind::A3a, &[1, 2]).build().unwrap();
    net.initialize(&mut sched).unwrap();
    assert_eq!(net.in_flight(), &[1, 1, 1, 1]);

    let mut net = oriented(ProtocolKind::A2, &[4]).build().unwrap();
    assert!(net.is_quiescent());
    net.initialize(&mut sched).unwrap();
    assert_eq!(net.in_flight().iter().sum::<u64>(), 1);
    assert!(!net.is_quiescent());
}

#[test]
fn single_node_deliveries() {
    let mut sched = Scheduler::new(SchedulerPolicy::RoundRobin);
    let mut net = oriented(ProtocolKind::A1, &[5]).build().unwrap();
    net.initialize(&mut sched).unwrap();
    assert!(matches!(net.deliver_next(&mut sched).unwrap(), Delivery::Delivered { .. }));
    assert_eq!(net.counters()[0].rho_cw(), 1);
    assert_eq!(net.counters()[0].sigma_cw(), 2);

    let mut net = oriented(ProtocolKind::A1, &[1]).build().unwrap();
    net.initialize(&mut sched).unwrap();
    net.deliver_next(&mut sched).unwrap();
    assert_eq!(net.automata()[0].output(), ringpulse::fabric::Output::Leader);
    assert_eq!(net.deliver_next(&mut sched).unwrap(), Delivery::Quiescent);
}

#[test]
fn a1_examples() {
    let trace = random_run(&oriented(ProtocolKind::A1, &[1, 2]), 8);
    assert_eq!(trace.record.outcome, RunOutcome::Quiescent);
    for c in &trace.record.snapshot.counters {
        assert_eq!((c.rho_cw(), c.sigma_cw()), (2, 2));
    }

    let trace = random_run(&oriented(ProtocolKind::A1, &[7]), 0);
    assert_eq!(trace.record.snapshot.deliveries, 7);

    let trace = random_run(&oriented(ProtocolKind::A1, &[1, 2, 3]), 5);
    let report = check_a1_invariants(&trace).unwrap();
    assert!(report.all_pass(), "{report:#?}");
    assert!(trace.record.snapshot.counters.iter().all(|c| c.rho_cw() == 3 && c.sigma_cw() == 3));
}

#[test]
fn a1_with_duplicate_ids() {
    let trace = random_run(&oriented(ProtocolKind::A1, &[2, 2, 1]), 3);
    let report = check_a1_invariants(&trace).unwrap();
    assert!(report.all_pass(), "{report:#?}");
    assert!(trace.record.snapshot.counters.iter().all(|c| c.rho_cw() == 2 && c.sigma_cw() == 2));
    assert_eq!(report.notes.len(), 1);
}

#[test]
fn a2_examples() {
    let setup = oriented(ProtocolKind::A2, &[1, 2, 3]);
    for seed in 0..100 {
        let trace = random_run(&setup, seed);
        assert_eq!(trace.record.outcome, RunOutcome::AllTerminated);
        assert_eq!(trace.record.snapshot.sends, 21);
        let report = check_a2_invariants(&trace).unwrap();
        assert!(report.all_pass(), "seed {seed}: {report:#?}");
    }

    let trace = random_run(&oriented(ProtocolKind::A2, &[5]), 1);
    assert_eq!(trace.record.snapshot.sends, 11);
    assert!(check_a2_invariants(&trace).unwrap().all_pass());

    let trace = random_run(&oriented(ProtocolKind::A2, &[1]), 1);
    assert_eq!(trace.record.snapshot.sends, 3);
}

#[test]
fn a3_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..20 {
        let a = PortAssignment::random(2, &mut rng).unwrap();
        let trace = random_run(&RingSetup::new(ProtocolKind::A3a, vec![1, 2], a.clone()), seed);
        assert_eq!(trace.record.snapshot.sends, 14);
        assert!(check_a3_outcome(&trace).unwrap().all_pass());
        let trace = random_run(&RingSetup::new(ProtocolKind::A3b, vec![1, 2], a), seed);
        assert_eq!(trace.record.snapshot.sends, 10);
        assert!(check_a3_outcome(&trace).unwrap().all_pass());
    }
}

#[test]
fn a3b_three_nodes_every_wiring() {
    for assignment in PortAssignment::enumerate_all(3) {
        let setup = RingSetup::new(ProtocolKind::A3b, vec![1, 3, 2], assignment);
        for seed in 0..100 {
            let trace = random_run(&setup, seed);
            let report = check_a3_outcome(&trace).unwrap();
            assert!(report.all_pass(), "{report:#?}");
            let leader = trace.record.snapshot.outputs.iter().position(|o| *o == ringpulse::fabric::Output::Leader);
            assert_eq!(leader, Some(1));
        }
    }
}

#[test]
fn sampler_examples() {
    let cfg = A4Config::new(2.0).unwrap();
    assert!((cfg.p() - 0.8408964152537146).abs() < 1e-12);
    assert_eq!(SampledId::from_bits("101").unwrap().id, 5);
    assert_eq!(SampledId::from_bits("000").unwrap().id, 1);
}

#[test]
fn a2_truncated_run_reports_partial_status() {
    let setup = oriented(ProtocolKind::A2, &[1, 2, 3]);
    let trace = execute(&setup, SchedulerPolicy::UniformRandom { seed: 2 }, 10).unwrap();
    assert_eq!(trace.record.outcome, RunOutcome::StepLimit);
    let report = check_a2_invariants(&trace).unwrap();
    assert_eq!(report.status("all_terminated"), Some(CheckStatus::Incomplete));
    assert!(report.reproducer.is_some());
}

#[test]
fn step_limit_error_keeps_partial_run() {
    let setup = oriented(ProtocolKind::A1, &[9, 4]);
    let mut net = setup.build().unwrap();
    match net.run_to_quiescence(&mut Scheduler::random(0), 5) {
        Err(Error::StepLimit { limit, partial }) => {
            assert_eq!(limit, 5);
            assert_eq!(partial.outcome, RunOutcome::StepLimit);
            assert_eq!(partial.snapshot.deliveries, 5);
        }
        other => panic!("{other:?}"),
    }
}

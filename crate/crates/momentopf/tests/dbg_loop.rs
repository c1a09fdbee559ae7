use momentopf::orchestrator::{run_algorithm1, AlgorithmConfig, AlgorithmOutcome};
use momentopf::hierarchy::HierarchyKind;
use std::time::Duration;

#[test]
fn dbg_loop() {
    let name = std::env::var("DBG_CASE").unwrap_or_else(|_| "case2".into());
    let case = momentopf::netcase::parse_case(momentopf::cases::by_name(&name).unwrap()).unwrap();
    for kind in [HierarchyKind::Real, HierarchyKind::Complex] {
        let mut cfg = AlgorithmConfig::new(kind);
        cfg.caps.wall_clock = Some(Duration::from_secs(45));
        let t = std::time::Instant::now();
        match run_algorithm1(&case, &cfg) {
            Ok(AlgorithmOutcome::Global(g)) => {
                println!("{name} {kind:?}: GLOBAL obj={:.6} bound={:.6} gap={:.2e} iters={} orders={:?} maxmis={:.3e} maxP={:.2e} maxV={:.2e} t={:?}",
                    g.objective, g.bound, g.gap, g.state.iteration, g.state.gamma,
                    g.state.log.last().unwrap().max_mismatch_mva,
                    g.violations.max_power_mva(), g.violations.max_voltage_pu(), t.elapsed());
            }
            Ok(AlgorithmOutcome::BoundOnly { bound, report, state }) => {
                println!("{name} {kind:?}: BOUND-ONLY bound={:.6} maxmis={:.3e} iters={} orders={:?} t={:?}",
                    bound, report.max_mva, state.iteration, state.gamma, t.elapsed());
            }
            Err(e) => println!("{name} {kind:?}: ERR {e} t={:?}", t.elapsed()),
        }
    }
}

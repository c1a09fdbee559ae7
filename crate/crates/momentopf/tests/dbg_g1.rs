use momentopf::hierarchy::{complex, real, AssemblyOptions};
use momentopf::sdpcore::{solve, SdpSettings};
use momentopf::sparsity::{build_graph, chordal_extend, merge_cliques};

#[test]
fn dbg_g1() {
    for name in ["case2", "case3", "case9", "case14"] {
        let case = momentopf::netcase::parse_case(momentopf::cases::by_name(name).unwrap()).unwrap();
        let d = merge_cliques(&chordal_extend(&build_graph(&case)));
        let opts = AssemblyOptions::default();
        let g1 = vec![1u32; case.n()];
        for (tag, prob) in [
            ("real", real::assemble_real(&case, &d, &g1, &opts).unwrap().problem),
            ("cplx", complex::assemble_complex(&case, &d, &g1, &opts).unwrap().problem),
        ] {
            let t = std::time::Instant::now();
            match solve(&prob, &SdpSettings::default()) {
                Ok(s) => println!("{name} {tag} g1: {:?} obj={:.6} it={} gap={:.1e} pres={:.1e} dres={:.1e} t={:?}",
                    s.status, s.objective, s.iterations, s.gap, s.primal_residual, s.dual_residual, t.elapsed()),
                Err(e) => println!("{name} {tag} g1: ERR {e}"),
            }
        }
    }
}

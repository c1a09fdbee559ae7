use momentopf::hierarchy::{complex, real, AssemblyOptions};
use momentopf::sdpcore::{solve, SdpSettings};
use momentopf::sparsity::{build_graph, chordal_extend, merge_cliques};

#[test]
fn dbg_g2v() {
    let name = std::env::var("DBG_CASE").unwrap_or_else(|_| "case3".into());
    let tag = std::env::var("DBG_HIER").unwrap_or_else(|_| "real".into());
    let case = momentopf::netcase::parse_case(momentopf::cases::by_name(&name).unwrap()).unwrap();
    let d = merge_cliques(&chordal_extend(&build_graph(&case)));
    let g2 = vec![2; case.n()];
    let opts = AssemblyOptions::default();
    let prob = if tag == "real" {
        real::assemble_real(&case, &d, &g2, &opts).unwrap().problem
    } else {
        complex::assemble_complex(&case, &d, &g2, &opts).unwrap().problem
    };
    let mut st = SdpSettings::default();
    st.verbose = true;
    let s = solve(&prob, &st).unwrap();
    println!("status {:?} obj {:.9} pres {:.3e} dres {:.3e} gap {:.3e}", s.status, s.objective, s.primal_residual, s.dual_residual, s.gap);
}

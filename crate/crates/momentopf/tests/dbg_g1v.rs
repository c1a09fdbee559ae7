use momentopf::hierarchy::{real, AssemblyOptions};
use momentopf::sdpcore::{solve, SdpSettings};
use momentopf::sparsity::{build_graph, chordal_extend, merge_cliques};

#[test]
fn dbg_g1v() {
    let case = momentopf::netcase::parse_case(momentopf::cases::by_name("case2").unwrap()).unwrap();
    let d = merge_cliques(&chordal_extend(&build_graph(&case)));
    let prob = real::assemble_real(&case, &d, &[1, 1], &AssemblyOptions::default()).unwrap().problem;
    let mut st = SdpSettings::default();
    st.verbose = true;
    let s = solve(&prob, &st).unwrap();
    println!("status {:?} obj {:.9}", s.status, s.objective);
}

use momentopf::hierarchy::{complex, real, AssemblyOptions};
use momentopf::sdpcore::{min_eig_sym, presolve};
use momentopf::sparsity::{build_graph, chordal_extend, merge_cliques};

#[test]
fn dbg_init() {
    for name in ["case3", "case9"] {
        let case = momentopf::netcase::parse_case(momentopf::cases::by_name(name).unwrap()).unwrap();
        let d = merge_cliques(&chordal_extend(&build_graph(&case)));
        let opts = AssemblyOptions::default();
        for gamma in [1u32, 2] {
            let g = vec![gamma; case.n()];
            for (tag, prob) in [
                ("real", real::assemble_real(&case, &d, &g, &opts).unwrap().problem),
                ("cplx", complex::assemble_complex(&case, &d, &g, &opts).unwrap().problem),
            ] {
                let p = presolve(&prob).unwrap();
                let y0: Vec<f64> = (0..p.m)
                    .map(|i| match (p.lo[i].is_finite(), p.hi[i].is_finite()) {
                        (true, true) => 0.5 * (p.lo[i] + p.hi[i]),
                        (true, false) => p.lo[i] + 1.0,
                        (false, true) => p.hi[i] - 1.0,
                        (false, false) => 0.0,
                    })
                    .collect();
                let scale_p = 1.0 + p.blocks.iter()
                    .map(|b| b.f0.entries().iter().map(|&(_,_,v)| v.abs()).fold(0.0_f64, f64::max))
                    .chain(p.eq.iter().map(|r| r.rhs.abs()))
                    .fold(0.0_f64, f64::max);
                let scale_d = 1.0 + p.c.iter().map(|c| c.abs()).fold(0.0_f64, f64::max);
                let mut worst_lmin = f64::INFINITY;
                let mut worst_lmax = 0.0_f64;
                let mut worst_data = 0.0_f64;
                for b in &p.blocks {
                    let e = b.eval(&y0);
                    worst_lmin = worst_lmin.min(min_eig_sym(&e));
                    worst_lmax = worst_lmax.max(e.amax());
                    let da = b.f0.entries().iter().map(|&(_,_,v)| v.abs())
                        .chain(b.terms.iter().flat_map(|(_, mc)| mc.entries().iter().map(|&(_,_,v)| v.abs())))
                        .fold(0.0_f64, f64::max);
                    worst_data = worst_data.max(da);
                }
                println!("{name} {tag} g{gamma}: scale_p={scale_p:.3e} scale_d={scale_d:.3e} worst_lmin={worst_lmin:.3e} worst_lmax={worst_lmax:.3e} worst_block_amax={worst_data:.3e}");
            }
        }
    }
}

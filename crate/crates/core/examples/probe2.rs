//! Scratch probe: dissect the failing disk fill in scenario B's coarse phase.

use skeletal_core::engine::{lift, zero_skeletal};
use skeletal_core::fillers::{boundary_loop_values, verify_fill, SphereFiller, SphereMap};
use skeletal_core::geom;
use skeletal_core::moduli::{eps_tolerance_chain, near_stage_budget, Modulus};
use skeletal_core::scenarios::scenario_b;
use skeletal_core::complex::Simplex;

fn main() {
    let s = scenario_b();
    let domain = s.domain.clone();
    let phi = s.mapping.clone();
    let filler = s.filler();
    let tols = s.tolerances.clone();

    let delta = Modulus::linear(0.5).unwrap();
    let deltas = vec![delta.clone(); domain.dim()];
    let budget = near_stage_budget(&deltas, 1.0);
    println!("coarse budget: {budget}");
    let gammas = eps_tolerance_chain(&deltas, 0.9 * budget);
    println!("gammas: {gammas:?}");
    let phis: Vec<_> = gammas.iter().map(|g| phi.o_map(*g).clone()).collect();

    let s0 = zero_skeletal(&phis[0], &domain, &tols).expect("zero skeletal");
    println!("level 0: {} members", s0.cover().len());
    let out1 = lift(&s0, &phis[1], &filler, &tols).expect("lift 0->1");
    let s1 = out1.selection;
    println!(
        "level 1: {} members, {} fills, {} rounds",
        s1.cover().len(),
        out1.trace.fills.len(),
        out1.trace.refinement_rounds
    );

    // The failing triple and audit point from the smoke run.
    let cover = s1.cover();
    let labels = ["w0734", "w0735", "w0736"];
    let members: Vec<usize> = labels
        .iter()
        .map(|l| (0..cover.len()).find(|&i| cover.label(i) == *l).expect("label"))
        .collect();
    let rep = 776usize;
    let target = phis[2].value(rep);
    println!(
        "rep {rep}: grid coords {:?}, target bbox {:?}",
        domain.coords_of(rep),
        target.bbox()
    );
    for &m in &members {
        let span: Vec<usize> = cover.member(m).ones().collect();
        println!(
            "member {} spans {} points [{}..{}]",
            cover.label(m),
            span.len(),
            span.first().unwrap(),
            span.last().unwrap()
        );
    }
    let mut common = cover.member(members[0]).clone();
    common.intersect_with(cover.member(members[1]));
    common.intersect_with(cover.member(members[2]));
    println!("common: {:?}", common.ones().collect::<Vec<_>>());

    let simplex = Simplex::new(members.iter().map(|&m| cover.vertex(m))).unwrap();
    let loop_points = boundary_loop_values(s1.map(), &simplex);
    println!("loop: {} points", loop_points.len());
    let mut worst_val = (0.0f64, 0usize);
    let mut worst_mid = (0.0f64, 0usize);
    let mut max_seg = (0.0f64, 0usize);
    for (i, p) in loop_points.iter().enumerate() {
        let d = target.dist(p);
        if d > worst_val.0 {
            worst_val = (d, i);
        }
        if i + 1 < loop_points.len() {
            let q = &loop_points[i + 1];
            let seg = geom::dist(p, q);
            if seg > max_seg.0 {
                max_seg = (seg, i);
            }
            let mid: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
            let d = target.dist(&mid);
            if d > worst_mid.0 {
                worst_mid = (d, i);
            }
        }
    }
    println!("worst loop value escape: {:.4} at {}", worst_val.0, worst_val.1);
    println!("worst loop midpoint escape: {:.4} at seg {}", worst_mid.0, worst_mid.1);
    println!("longest segment: {:.4} at {}", max_seg.0, max_seg.1);
    for (i, p) in loop_points.iter().enumerate() {
        println!(
            "  [{i:2}] ({:+.3}, {:+.3}) escape {:.4}",
            p[0],
            p[1],
            target.dist(p)
        );
    }

    // What does each apex candidate do?
    let sphere = SphereMap::Loop {
        points: loop_points.clone(),
    };
    match filler.fill(&sphere, &simplex, target, &[]) {
        Ok(_) => println!("filler succeeded here?!"),
        Err(e) => println!("filler failed: {e}"),
    }
    // Raw cone from the target's representative point, verified verbosely.
    let apex = target.representative_point();
    println!("repr apex: {apex:?}, inside: {}", target.contains(&apex));
    let ball = skeletal_core::fillers::cone_disk(&loop_points, &apex, &simplex, filler.depth)
        .expect("cone builds");
    match verify_fill(&ball, &sphere, target, filler.interior_tol) {
        Ok(()) => println!("raw cone verified"),
        Err(e) => println!("raw cone: {e}"),
    }
    let proj = skeletal_core::fillers::project_interior(&ball, target).expect("projects");
    match verify_fill(&proj, &sphere, target, filler.interior_tol) {
        Ok(()) => println!("projected cone verified"),
        Err(e) => println!("projected cone: {e}"),
    }
}

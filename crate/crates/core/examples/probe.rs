//! Scratch probe: rebuilds the coarse phase of scenario A by hand and
//! dumps cover structure around the worst jump.

use skeletal_core::covers::low_order_refinement;
use skeletal_core::engine::{assemble, lift, zero_skeletal};
use skeletal_core::moduli::{eps_tolerance_chain, near_stage_budget, Modulus};
use skeletal_core::regions::SetValuedMap;
use skeletal_core::scenarios::scenario_a;

fn spans(label: &str, cover: &skeletal_core::covers::Cover) {
    println!("{label}: {} members, order {}", cover.len(), cover.order());
    for i in 0..cover.len() {
        let pts: Vec<usize> = cover.member(i).ones().collect();
        if pts.is_empty() {
            continue;
        }
        let lo = pts[0];
        let hi = *pts.last().unwrap();
        println!(
            "  {}: [{lo}..{hi}] ({} pts){}",
            cover.label(i),
            pts.len(),
            if pts.len() != hi - lo + 1 { " (gappy)" } else { "" }
        );
    }
}

fn main() {
    let s = scenario_a();
    let delta = Modulus::linear(0.5).unwrap();
    let deltas = vec![delta.clone(); 1];
    let budget = near_stage_budget(&deltas, 1.0);
    println!("budget {budget}");
    let gammas = eps_tolerance_chain(&deltas, 0.9 * budget);
    println!("gammas {gammas:?}");
    let phis: Vec<SetValuedMap> = gammas.iter().map(|g| s.mapping.o_map(*g)).collect();

    let s0 = zero_skeletal(&phis[0], &s.domain, &s.tolerances).unwrap();
    spans("zero cover", s0.cover());

    let outcome = lift(&s0, &phis[1], &s.filler(), &s.tolerances).unwrap();
    let s1 = outcome.selection;
    println!(
        "lift: rounds {}, members {}",
        outcome.trace.refinement_rounds, outcome.trace.refined_members
    );
    spans("lifted cover", s1.cover());

    let refinement = low_order_refinement(s1.cover()).unwrap();
    spans("assembly tiling", &refinement.refined);

    let assembled = assemble(&s1).unwrap();
    let mut worst = (0usize, 0.0f64);
    for x in 0..assembled.values.len() - 1 {
        let d: f64 = assembled.values[x]
            .iter()
            .zip(&assembled.values[x + 1])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if d > worst.1 {
            worst = (x, d);
        }
    }
    println!(
        "assembled: max_jump {:.4} at {}, bound {:.4}, slope {:.4}, bary step {:.4}",
        worst.1, worst.0, assembled.continuity_bound, assembled.slope, assembled.max_bary_step
    );
}

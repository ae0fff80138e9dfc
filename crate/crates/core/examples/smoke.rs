//! Scratch driver: runs the shipped scenarios through the pipeline and
//! prints timings.

use std::time::Instant;

use skeletal_core::moduli::Modulus;
use skeletal_core::scenarios::{scenario_a, scenario_b};
use skeletal_core::select::michael_select;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "a".into());
    let s = match which.as_str() {
        "a" => scenario_a(),
        _ => scenario_b(),
    };
    let delta = Modulus::linear(0.5).unwrap();
    let t0 = Instant::now();
    let out = michael_select(
        &s.domain,
        &s.mapping,
        1.0,
        &delta,
        1e-3,
        &s.filler(),
        &s.tolerances,
    );
    let dt = t0.elapsed();
    match out {
        Ok(full) => {
            println!("scenario {}: ok in {dt:?}", s.name);
            println!("  stages: {}", full.stages.len());
            println!("  membership: {:.3e}", full.membership);
            println!("  guide_gap: {:.4}", full.guide_gap);
            println!(
                "  continuity: max_jump {:.4} <= bound {:.4}: {}",
                full.continuity.max_jump,
                full.continuity.bound,
                full.continuity.max_jump <= full.continuity.bound
            );
            for st in &full.stages {
                println!(
                    "  stage {}: near {:.4e} drift {:.4e}",
                    st.stage, st.near, st.drift
                );
            }
            let jumps = |vals: &[Vec<f64>]| -> (usize, f64) {
                let mut worst = (0usize, 0.0f64);
                for x in 0..vals.len() - 1 {
                    let d: f64 = vals[x]
                        .iter()
                        .zip(&vals[x + 1])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    if d > worst.1 {
                        worst = (x, d);
                    }
                }
                worst
            };
            if s.domain.dim() == 1 {
                let (gx, gj) = jumps(&full.guide);
                let (vx, vj) = jumps(&full.values);
                println!("  guide worst jump {gj:.4} at cell {gx}");
                println!("  final worst jump {vj:.4} at cell {vx}");
            }
        }
        Err(e) => {
            println!("scenario {}: FAILED after {dt:?}: {e}", s.name);
        }
    }
}

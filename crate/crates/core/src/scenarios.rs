//! Shipped example instances.
//!
//! Two families are built in: a one-dimensional ribbon of rotating thick
//! arcs and a two-dimensional field of drifting gear stars.  Both vary
//! slowly from cell to cell, keep their values far from convex, and have
//! no single point common to every cell's value, so the stepwise
//! machinery has real work to do.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::covers::Domain;
use crate::engine::Tolerances;
use crate::fillers::OracleFiller;
use crate::geom::Point;
use crate::realization::DEFAULT_DEPTH;
use crate::regions::{Region, SetValuedMap};

/// One ready-to-run example.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: &'static str,
    pub domain: Arc<Domain>,
    pub mapping: SetValuedMap,
    /// A point every value is star-shaped around, when there is one.
    pub star_center: Option<Point>,
    /// Tolerances sized to how fast the values move between cells.  The
    /// membership side equals the grid step: that is the containment
    /// slack every sampled check quotes.
    pub tolerances: Tolerances,
}

impl Scenario {
    /// The stock fill provider sized for this scenario: verification at
    /// the scenario's membership tolerance, raster search a little finer
    /// than the value features.
    pub fn filler(&self) -> OracleFiller {
        OracleFiller {
            depth: DEFAULT_DEPTH,
            bfs_step: 0.05,
            interior_tol: self.tolerances.membership,
            star_center: self.star_center.clone(),
        }
    }
}

/// Thickened arc of the unit circle: a chain of overlapping balls of
/// radius `thickness` centered at angles `theta ± [0, half]`.
pub fn arc_region(theta: f64, half: f64, thickness: f64) -> Region {
    let spacing = 0.15;
    let steps = (half / spacing).ceil() as i32;
    let balls: Vec<Region> = (-steps..=steps)
        .map(|s| {
            let a = theta + half * s as f64 / steps as f64;
            Region::ball(vec![a.cos(), a.sin()], thickness)
        })
        .collect();
    Region::union(balls).expect("arc balls share a dimension")
}

/// A gear star: a kernel ball around `center` with triangular teeth
/// reaching out to `tip_radius`, the whole figure rotated by `phase`.
pub fn gear_region(center: &[f64], phase: f64, tip_radius: f64) -> Region {
    let teeth = 7;
    let kernel = 0.45;
    let base_radius = 0.42;
    let base_half = 0.18;
    let mut pieces = vec![Region::ball(center.to_vec(), kernel)];
    for k in 0..teeth {
        let a = phase + 2.0 * PI * k as f64 / teeth as f64;
        let at = |radius: f64, angle: f64| {
            vec![center[0] + radius * angle.cos(), center[1] + radius * angle.sin()]
        };
        pieces.push(
            Region::hull(vec![
                at(tip_radius, a),
                at(base_radius, a - base_half),
                at(base_radius, a + base_half),
            ])
            .expect("tooth triangle has a dimension"),
        );
    }
    Region::union(pieces).expect("gear pieces share a dimension")
}

/// Scenario A: 101 points on the unit interval; the value over `x` is a
/// thick arc making a full turn around the unit circle across the domain.
/// Opposite cells' arcs are disjoint, so no constant selection exists.
pub fn scenario_a() -> Scenario {
    let n = 101;
    let domain = Domain::grid_1d(0.0, 0.01, n);
    let values: Vec<Region> = (0..n)
        .map(|i| {
            let theta = 2.0 * PI * i as f64 / (n - 1) as f64;
            arc_region(theta, 1.2, 0.25)
        })
        .collect();
    let mapping = SetValuedMap::from_values(values).expect("arc values share a dimension");
    let step = domain.step();
    Scenario {
        name: "ribbon",
        domain,
        mapping,
        star_center: None,
        tolerances: Tolerances {
            locality: 0.15,
            membership: step,
        },
    }
}

/// Scenario B: a 41 by 41 grid on the unit square; the value over
/// `(x1, x2)` is a gear star whose center drifts around an orbit wider
/// than its kernel and whose teeth slowly rotate and breathe.
pub fn scenario_b() -> Scenario {
    let side = 41;
    let domain = Domain::grid_2d([0.0, 0.0], 0.025, [side, side]);
    let mut values: Vec<Region> = Vec::with_capacity(side * side);
    for idx in 0..side * side {
        let i = idx % side;
        let j = idx / side;
        let x1 = i as f64 / (side - 1) as f64;
        let x2 = j as f64 / (side - 1) as f64;
        let center = [0.6 * (PI * x1).cos(), 0.6 * (PI * x2).sin()];
        let phase = 0.35 * (PI * (x1 + x2)).sin();
        let tip = 0.9 + 0.05 * (2.0 * PI * (x1 - x2)).cos();
        values.push(gear_region(&center, phase, tip));
    }
    let mapping = SetValuedMap::from_values(values).expect("gear values share a dimension");
    let step = domain.step();
    Scenario {
        name: "gearfield",
        domain,
        mapping,
        star_center: None,
        tolerances: Tolerances {
            locality: 0.15,
            membership: step,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regions::is_llc;

    #[test]
    fn ribbon_values_are_connected_but_share_nothing_globally() {
        let s = scenario_a();
        assert_eq!(s.mapping.len(), 101);
        assert_eq!(s.mapping.value_dim(), 2);
        // Opposite arcs are disjoint: the first cell's representative and
        // the half-turn cell's value sit far apart.
        let y0 = s.mapping.value(0).representative_point();
        let d = s.mapping.value(50).dist(&y0);
        assert!(d > 0.3, "opposite arcs should not meet, got {d}");
        // Neighboring values move slowly.
        assert!(is_llc(&s.mapping, |x| s.domain.neighbors(x), s.tolerances.locality).is_ok());
    }

    #[test]
    fn gearfield_values_drift_apart() {
        let s = scenario_b();
        assert_eq!(s.mapping.len(), 41 * 41);
        assert_eq!(s.mapping.value_dim(), 2);
        // Corner cells' gears are disjoint: centers sit 1.2 apart with
        // radius at most 0.95.
        let y0 = s.mapping.value(0).representative_point();
        let far = 40; // right corner: x1 = 1, so the center flips to (-0.6, 0)
        assert!(s.mapping.value(far).dist(&y0) > 0.2);
        assert!(is_llc(&s.mapping, |x| s.domain.neighbors(x), s.tolerances.locality).is_ok());
    }

    #[test]
    fn gear_regions_are_star_shaped_about_their_center() {
        let g = gear_region(&[0.2, -0.1], 0.3, 0.9);
        // Rays from the center to boundary samples stay inside.
        let c = [0.2, -0.1];
        for p in g.grid_samples(0.11) {
            for t in [0.25, 0.5, 0.75] {
                let q = [c[0] + t * (p[0] - c[0]), c[1] + t * (p[1] - c[1])];
                assert!(g.dist(&q) <= 1e-9, "ray point {q:?} left the gear");
            }
        }
    }
}

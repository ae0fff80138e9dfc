//! Filling boundary spheres of simplices with maps into regions.
//!
//! A sphere map is the restriction of a selection to the boundary of a
//! simplex: two endpoint values for an edge, a closed polyline of lattice
//! values for a triangle.  A ball map extends it over the whole simplex as
//! a path or a lattice table on the subdivided triangle itself, so the
//! boundary values of the extension coincide bit for bit with the data it
//! extends.  Fill strategies are tried in order and every candidate is
//! verified by sampling before it is accepted.

use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::complex::{Simplex, SimplicialComplex, VertexId};
use crate::geom::{self, Point};
use crate::realization::{BaryPoint, LatticeKey, PlMap, RealizationError};
use crate::regions::{Region, BOUNDARY_TOL};

/// Errors raised by fill construction and verification.
#[derive(Debug, Error)]
pub enum FillError {
    /// Value dimensions disagree between sphere, ball, or target.
    #[error("value dimensions disagree")]
    DimMismatch,
    /// Malformed sphere data.
    #[error("bad sphere data: {0}")]
    BadSphere(String),
    /// The boundary of a candidate fill deviates from the sphere it should
    /// extend.
    #[error("fill boundary deviates by {0} from the sphere data")]
    BoundaryMismatch(f64),
    /// A fill sample lies outside the target region.
    #[error("fill escapes the target region by {dist}")]
    Escapes { dist: f64 },
    /// No raster path connects the endpoints inside the target.
    #[error("no path through the target between the endpoint values")]
    NoPath,
    /// Every strategy either failed or produced an unverifiable fill.
    #[error("no fill strategy produced a verified extension")]
    Exhausted,
    /// Lattice bookkeeping failed.
    #[error(transparent)]
    Realization(#[from] RealizationError),
}

/// A map on the boundary sphere of a simplex.
#[derive(Clone, Debug, PartialEq)]
pub enum SphereMap {
    /// Boundary of an edge: the two endpoint values, ordered by the edge's
    /// sorted vertices.
    Pair { a: Point, b: Point },
    /// Boundary of a triangle with sorted vertices `v0 < v1 < v2`: lattice
    /// values read along `v0 -> v1 -> v2 -> v0`; the first and last points
    /// coincide and the length is `3 * 2^depth + 1`.
    Loop { points: Vec<Point> },
}

impl SphereMap {
    /// Dimension of the sphere (0 for a pair, 1 for a loop).
    pub fn sphere_dim(&self) -> usize {
        match self {
            SphereMap::Pair { .. } => 0,
            SphereMap::Loop { .. } => 1,
        }
    }

    /// Dimension of the value space.
    pub fn value_dim(&self) -> usize {
        match self {
            SphereMap::Pair { a, .. } => a.len(),
            SphereMap::Loop { points } => points[0].len(),
        }
    }

    /// All stored values.
    pub fn points(&self) -> Vec<&Point> {
        match self {
            SphereMap::Pair { a, b } => vec![a, b],
            SphereMap::Loop { points } => points.iter().collect(),
        }
    }

    fn validate(&self, depth: u32) -> Result<(), FillError> {
        match self {
            SphereMap::Pair { a, b } => {
                if a.len() != b.len() {
                    return Err(FillError::DimMismatch);
                }
            }
            SphereMap::Loop { points } => {
                let n = 1usize << depth;
                if points.len() != 3 * n + 1 {
                    return Err(FillError::BadSphere(format!(
                        "loop has {} points, wanted {}",
                        points.len(),
                        3 * n + 1
                    )));
                }
                let d = points[0].len();
                if points.iter().any(|p| p.len() != d) {
                    return Err(FillError::DimMismatch);
                }
                let gap = geom::dist(&points[0], points.last().expect("nonempty"));
                if gap > BOUNDARY_TOL {
                    return Err(FillError::BadSphere(format!(
                        "loop fails to close by {gap}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A fill of the whole simplex extending a sphere map.
#[derive(Clone, Debug)]
pub enum BallMap {
    /// Fill of an edge: `2^depth + 1` points from the pair's first value
    /// to its second.
    Path { points: Vec<Point> },
    /// Fill of a triangle: a piecewise-linear map on the subdivided
    /// triangle itself.
    Disk { map: PlMap },
}

impl BallMap {
    /// Dimension of the value space.
    pub fn value_dim(&self) -> usize {
        match self {
            BallMap::Path { points } => points[0].len(),
            BallMap::Disk { map } => map.value_dim(),
        }
    }

    /// The boundary restriction, in the same layout a fill request uses.
    pub fn boundary(&self) -> SphereMap {
        match self {
            BallMap::Path { points } => SphereMap::Pair {
                a: points[0].clone(),
                b: points.last().expect("nonempty path").clone(),
            },
            BallMap::Disk { map } => {
                let simplex = map
                    .complex()
                    .maximal_simplices()
                    .into_iter()
                    .next()
                    .expect("disk complex has a triangle");
                SphereMap::Loop {
                    points: boundary_loop_values(map, &simplex),
                }
            }
        }
    }
}

/// Reads the lattice values along the boundary cycle of a triangle, in
/// the canonical `v0 -> v1 -> v2 -> v0` order.
pub fn boundary_loop_values(map: &PlMap, simplex: &Simplex) -> Vec<Point> {
    let verts = simplex.vertices();
    assert_eq!(verts.len(), 3, "boundary loop needs a triangle");
    let n = 1u32 << map.depth();
    let mut out = Vec::with_capacity(3 * n as usize + 1);
    for (ia, ib) in [(0usize, 1usize), (1, 2), (2, 0)] {
        for i in 0..n {
            let key = LatticeKey::new(vec![
                (verts[ia].clone(), n - i),
                (verts[ib].clone(), i),
            ]);
            out.push(
                map.lattice_value(&key)
                    .expect("boundary lattice value present")
                    .clone(),
            );
        }
    }
    out.push(out[0].clone());
    out
}

/// `w1 * p + w2 * q` coordinatewise; exact at `(0, 1)` and `(1, 0)`.
fn combine(w1: f64, p: &[f64], w2: f64, q: &[f64]) -> Point {
    if w1 == 0.0 {
        return q.iter().map(|x| w2 * x).collect();
    }
    if w2 == 0.0 {
        return p.iter().map(|x| w1 * x).collect();
    }
    p.iter().zip(q).map(|(a, b)| w1 * a + w2 * b).collect()
}

/// Piecewise-linear evaluation of a polyline at fractional index `r`;
/// exact at integral indices.
pub fn polyline_eval(points: &[Point], r: f64) -> Point {
    let last = points.len() - 1;
    let r = r.clamp(0.0, last as f64);
    let i = (r.floor() as usize).min(last);
    let f = r - i as f64;
    if f == 0.0 || i == last {
        return points[i].clone();
    }
    combine(1.0 - f, &points[i], f, &points[i + 1])
}

/// Resamples a polyline to `count` points by arclength, pinning both
/// endpoints exactly.
fn resample_by_arclength(points: &[Point], count: usize) -> Vec<Point> {
    assert!(count >= 2 && !points.is_empty());
    if points.len() == 1 {
        return vec![points[0].clone(); count];
    }
    let mut cum = Vec::with_capacity(points.len());
    let mut total = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        total += geom::dist(&w[0], &w[1]);
        cum.push(total);
    }
    let mut out = Vec::with_capacity(count);
    out.push(points[0].clone());
    for j in 1..count - 1 {
        let target = total * j as f64 / (count - 1) as f64;
        let seg = cum.partition_point(|&c| c <= target).min(cum.len() - 1);
        let (lo, hi) = (cum[seg - 1], cum[seg]);
        let s = if hi > lo { (target - lo) / (hi - lo) } else { 0.0 };
        out.push(combine(1.0 - s, &points[seg - 1], s, &points[seg]));
    }
    out.push(points.last().expect("nonempty").clone());
    out
}

/// The straight segment from the pair's ends, sampled on the edge lattice.
pub fn straight_path(a: &Point, b: &Point, depth: u32) -> BallMap {
    let n = 1usize << depth;
    let mut points = Vec::with_capacity(n + 1);
    points.push(a.clone());
    for i in 1..n {
        let t = i as f64 / n as f64;
        points.push(combine(1.0 - t, a, t, b));
    }
    points.push(b.clone());
    BallMap::Path { points }
}

/// The two-segment path through an apex, sampled on the edge lattice.
pub fn cone_path(a: &Point, apex: &Point, b: &Point, depth: u32) -> BallMap {
    let n = 1usize << depth;
    let mut points = Vec::with_capacity(n + 1);
    points.push(a.clone());
    for i in 1..n {
        let t = i as f64 / n as f64;
        if t <= 0.5 {
            points.push(combine(1.0 - 2.0 * t, a, 2.0 * t, apex));
        } else {
            points.push(combine(2.0 - 2.0 * t, apex, 2.0 * t - 1.0, b));
        }
    }
    points.push(b.clone());
    BallMap::Path { points }
}

/// Radial decomposition of a barycentric point of a triangle: the radial
/// parameter (0 at the barycenter, 1 on the boundary) and the loop index
/// of its radial boundary shadow.  Exact on the boundary, where the
/// minimum weight is exactly zero and the shadow index of a lattice
/// point is exactly integral.
fn radial_split(p: &BaryPoint, verts: &[VertexId], n: u32) -> (f64, f64) {
    let w: Vec<f64> = verts.iter().map(|v| p.weight(v)).collect();
    let m = w.iter().cloned().fold(f64::INFINITY, f64::min);
    let rho = 1.0 - 3.0 * m;
    if rho <= 1e-12 {
        return (0.0, 0.0);
    }
    let b: Vec<f64> = w.iter().map(|x| (x - m) / rho).collect();
    let nf = n as f64;
    let r = if b[2] == 0.0 {
        b[1] * nf
    } else if b[0] == 0.0 {
        nf + b[2] * nf
    } else {
        2.0 * nf + b[0] * nf
    };
    (rho, r)
}

/// A disk fill coning the boundary loop to an apex value: each lattice
/// point takes the value interpolated between the apex and the loop at
/// its radial boundary shadow.  Boundary lattice values reproduce the
/// loop exactly.
pub fn cone_disk(
    loop_points: &[Point],
    apex: &Point,
    simplex: &Simplex,
    depth: u32,
) -> Result<BallMap, FillError> {
    let verts = simplex.vertices().to_vec();
    if verts.len() != 3 {
        return Err(FillError::BadSphere("disk fill needs a triangle".into()));
    }
    let n = 1u32 << depth;
    let complex = std::sync::Arc::new(
        SimplicialComplex::from_maximal([verts.clone()]).expect("triangle generator"),
    );
    let loop_points = loop_points.to_vec();
    let apex = apex.clone();
    let map = PlMap::sample(complex, depth, move |p| {
        let (rho, r) = radial_split(p, &verts, n);
        if rho <= 0.0 {
            return apex.clone();
        }
        let boundary = polyline_eval(&loop_points, r);
        combine(1.0 - rho, &apex, rho, &boundary)
    })?;
    Ok(BallMap::Disk { map })
}

/// A copy of a fill with every interior value metrically projected onto
/// the target; boundary values stay bit for bit.  Straightens candidates
/// whose interiors graze the outside of a nonconvex target: the projected
/// values lie in the target up to projection accuracy, so only the
/// midpoint checks still depend on the verification tolerance.
pub fn project_interior(ball: &BallMap, target: &Region) -> Result<BallMap, FillError> {
    match ball {
        BallMap::Path { points } => {
            let mut points = points.clone();
            let last = points.len() - 1;
            for p in &mut points[1..last] {
                *p = target.project(p);
            }
            Ok(BallMap::Path { points })
        }
        BallMap::Disk { map } => {
            let full = map
                .complex()
                .maximal_simplices()
                .into_iter()
                .next()
                .expect("disk complex has a triangle")
                .card();
            let values: std::collections::BTreeMap<LatticeKey, Point> = map
                .values()
                .map(|(k, v)| {
                    let v = if k.pairs().len() == full {
                        target.project(v)
                    } else {
                        v.clone()
                    };
                    (k.clone(), v)
                })
                .collect();
            let map = PlMap::from_values(map.complex().clone(), map.depth(), values)?;
            Ok(BallMap::Disk { map })
        }
    }
}

/// Breadth-first path fill through the target's raster graph: endpoints
/// connect to their nearest raster nodes and the node path is resampled
/// onto the edge lattice by arclength.
pub fn path_bfs(
    a: &Point,
    b: &Point,
    target: &Region,
    step: f64,
    depth: u32,
) -> Result<BallMap, FillError> {
    let nodes = target.grid_samples(step);
    if nodes.is_empty() {
        return Err(FillError::NoPath);
    }
    let key_of = |p: &Point| -> Vec<i64> {
        p.iter().map(|x| (x / step).round() as i64).collect()
    };
    let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
    for (i, p) in nodes.iter().enumerate() {
        index.insert(key_of(p), i);
    }
    let nearest = |p: &Point| -> usize {
        nodes
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| {
                geom::dist(p, x).partial_cmp(&geom::dist(p, y)).expect("NaN")
            })
            .map(|(i, _)| i)
            .expect("nonempty nodes")
    };
    let start = nearest(a);
    let goal = nearest(b);
    let mut prev: Vec<Option<usize>> = vec![None; nodes.len()];
    let mut seen = vec![false; nodes.len()];
    let mut queue = VecDeque::new();
    seen[start] = true;
    queue.push_back(start);
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            break;
        }
        let key = key_of(&nodes[cur]);
        for axis in 0..nodes[cur].len() {
            for sgn in [-1i64, 1] {
                let mut k = key.clone();
                k[axis] += sgn;
                if let Some(&next) = index.get(&k) {
                    if !seen[next] {
                        seen[next] = true;
                        prev[next] = Some(cur);
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    if !seen[goal] {
        return Err(FillError::NoPath);
    }
    let mut chain = vec![goal];
    while let Some(p) = prev[*chain.last().expect("nonempty")] {
        chain.push(p);
    }
    chain.reverse();
    let mut polyline: Vec<Point> = Vec::with_capacity(chain.len() + 2);
    polyline.push(a.clone());
    for &i in &chain {
        polyline.push(nodes[i].clone());
    }
    polyline.push(b.clone());
    let n = 1usize << depth;
    Ok(BallMap::Path {
        points: resample_by_arclength(&polyline, n + 1),
    })
}

/// Verifies that `ball` extends `sphere` into `target`: the boundary
/// restriction must match the sphere data within [`BOUNDARY_TOL`], and
/// every stored value together with every midpoint of lattice-adjacent
/// values must lie within `interior_tol` of the target.
///
/// Midpoints of segments lying entirely on the boundary are exempt: those
/// values are pinned to the sphere data bit for bit, so the fill has no
/// freedom there, and the polyline they trace was checked against its own
/// target by whoever built it.
pub fn verify_fill(
    ball: &BallMap,
    sphere: &SphereMap,
    target: &Region,
    interior_tol: f64,
) -> Result<(), FillError> {
    // Boundary restriction.
    let boundary = ball.boundary();
    let worst = match (&boundary, sphere) {
        (SphereMap::Pair { a, b }, SphereMap::Pair { a: sa, b: sb }) => {
            geom::dist(a, sa).max(geom::dist(b, sb))
        }
        (SphereMap::Loop { points }, SphereMap::Loop { points: sp }) => {
            if points.len() != sp.len() {
                return Err(FillError::BoundaryMismatch(f64::INFINITY));
            }
            points
                .iter()
                .zip(sp)
                .map(|(p, q)| geom::dist(p, q))
                .fold(0.0, f64::max)
        }
        _ => return Err(FillError::BoundaryMismatch(f64::INFINITY)),
    };
    if worst > BOUNDARY_TOL {
        return Err(FillError::BoundaryMismatch(worst));
    }
    // Containment of values and lattice-adjacent midpoints.
    let mut worst_escape = 0.0f64;
    match ball {
        BallMap::Path { points } => {
            for p in points {
                worst_escape = worst_escape.max(target.dist(p));
            }
            for w in points.windows(2) {
                let mid = combine(0.5, &w[0], 0.5, &w[1]);
                worst_escape = worst_escape.max(target.dist(&mid));
            }
        }
        BallMap::Disk { map } => {
            let entries: Vec<(&LatticeKey, &Point)> = map.values().collect();
            for (_, v) in &entries {
                worst_escape = worst_escape.max(target.dist(v));
            }
            // Midpoints along subdivision edges: keys whose numerator
            // tables differ by moving one unit between two vertices.
            let simplex = map
                .complex()
                .maximal_simplices()
                .into_iter()
                .next()
                .expect("disk complex has a triangle");
            let verts = simplex.vertices();
            let numerators = |key: &LatticeKey| -> Vec<i64> {
                verts
                    .iter()
                    .map(|v| {
                        key.pairs()
                            .iter()
                            .find(|(w, _)| w == v)
                            .map(|(_, a)| *a as i64)
                            .unwrap_or(0)
                    })
                    .collect()
            };
            let tables: Vec<Vec<i64>> = entries.iter().map(|(k, _)| numerators(k)).collect();
            let pinned: Vec<bool> = tables
                .iter()
                .map(|t| t.iter().any(|&a| a == 0))
                .collect();
            for i in 0..entries.len() {
                for j in (i + 1)..entries.len() {
                    if pinned[i] && pinned[j] {
                        continue;
                    }
                    let l1: i64 = tables[i]
                        .iter()
                        .zip(&tables[j])
                        .map(|(a, b)| (a - b).abs())
                        .sum();
                    if l1 == 2 {
                        let mid = combine(0.5, entries[i].1, 0.5, entries[j].1);
                        worst_escape = worst_escape.max(target.dist(&mid));
                    }
                }
            }
        }
    }
    if worst_escape > interior_tol {
        return Err(FillError::Escapes { dist: worst_escape });
    }
    Ok(())
}

/// Projects every sphere value onto a region (pointwise metric
/// projection).
pub fn project_sphere(sphere: &SphereMap, onto: &Region) -> SphereMap {
    match sphere {
        SphereMap::Pair { a, b } => SphereMap::Pair {
            a: onto.project(a),
            b: onto.project(b),
        },
        SphereMap::Loop { points } => SphereMap::Loop {
            points: points.iter().map(|p| onto.project(p)).collect(),
        },
    }
}

/// Pointwise straight-line interpolation between two sphere maps of the
/// same shape; exact at `t = 0` and `t = 1`.
pub fn linear_homotopy(from: &SphereMap, to: &SphereMap, t: f64) -> SphereMap {
    match (from, to) {
        (SphereMap::Pair { a, b }, SphereMap::Pair { a: a2, b: b2 }) => SphereMap::Pair {
            a: combine(1.0 - t, a, t, a2),
            b: combine(1.0 - t, b, t, b2),
        },
        (SphereMap::Loop { points }, SphereMap::Loop { points: p2 }) => SphereMap::Loop {
            points: points
                .iter()
                .zip(p2)
                .map(|(p, q)| combine(1.0 - t, p, t, q))
                .collect(),
        },
        _ => panic!("homotopy between spheres of different dimensions"),
    }
}

/// Combines an outer sphere, its shadow on a smaller region, and a base
/// fill of the shadow into a fill of the outer sphere: the outer half of
/// the simplex sweeps the straight homotopy between the two spheres, the
/// inner half replays the base fill at doubled radial speed.  The outer
/// boundary is reproduced exactly.
pub fn derived_fill(
    outer: &SphereMap,
    inner: &SphereMap,
    base: &BallMap,
    depth: u32,
) -> Result<BallMap, FillError> {
    match (outer, inner, base) {
        (
            SphereMap::Pair { a, b },
            SphereMap::Pair { a: qa, b: qb },
            BallMap::Path { points },
        ) => {
            let n = 1usize << depth;
            let mut out = Vec::with_capacity(n + 1);
            out.push(a.clone());
            let base_last = (points.len() - 1) as f64;
            for i in 1..n {
                let t = i as f64 / n as f64;
                let v = if t < 0.25 {
                    let s = t / 0.25;
                    combine(1.0 - s, a, s, qa)
                } else if t <= 0.75 {
                    let s = (t - 0.25) / 0.5;
                    polyline_eval(points, s * base_last)
                } else {
                    let s = (t - 0.75) / 0.25;
                    combine(1.0 - s, qb, s, b)
                };
                out.push(v);
            }
            out.push(b.clone());
            Ok(BallMap::Path { points: out })
        }
        (
            SphereMap::Loop { points: lp },
            SphereMap::Loop { points: qp },
            BallMap::Disk { map },
        ) => {
            if lp.len() != qp.len() {
                return Err(FillError::BadSphere(
                    "outer and inner loops differ in length".into(),
                ));
            }
            let simplex = map
                .complex()
                .maximal_simplices()
                .into_iter()
                .next()
                .expect("disk complex has a triangle");
            let verts = simplex.vertices().to_vec();
            let n = 1u32 << depth;
            let complex = map.complex().clone();
            let lp = lp.clone();
            let qp = qp.clone();
            let base = map.clone();
            let filled = PlMap::sample(complex, depth, move |p| {
                let (rho, r) = radial_split(p, &verts, n);
                if rho >= 0.5 {
                    // Outer band: straight homotopy from the inner loop
                    // at rho = 1/2 out to the outer loop at rho = 1.
                    let s = 2.0 * rho - 1.0;
                    let outer_v = polyline_eval(&lp, r);
                    let inner_v = polyline_eval(&qp, r);
                    combine(s, &outer_v, 1.0 - s, &inner_v)
                } else {
                    // Inner half: the base fill at doubled radial speed.
                    // A point at radius rho with boundary shadow b moves
                    // to the base point at radius 2 * rho on the same ray.
                    let ws: Vec<f64> = verts.iter().map(|v| p.weight(v)).collect();
                    let m = ws.iter().cloned().fold(f64::INFINITY, f64::min);
                    let scale = 2.0 * rho;
                    let coords: Vec<(VertexId, f64)> = verts
                        .iter()
                        .zip(&ws)
                        .map(|(v, &w)| {
                            let b = if rho <= 1e-12 {
                                1.0 / 3.0
                            } else {
                                ((w - m) / rho).max(0.0)
                            };
                            (v.clone(), (1.0 - scale) / 3.0 + scale * b)
                        })
                        .collect();
                    // Renormalize against accumulated rounding.
                    let total: f64 = coords.iter().map(|(_, w)| w).sum();
                    let q = BaryPoint::new(
                        coords.into_iter().map(|(v, w)| (v, w / total)),
                    )
                    .expect("stretched barycentric point");
                    base.eval(&q).expect("base fill evaluates on its own simplex")
                }
            })?;
            Ok(BallMap::Disk { map: filled })
        }
        _ => Err(FillError::BadSphere(
            "derived fill needs matching sphere and base shapes".into(),
        )),
    }
}

/// A fill provider: asked to extend a sphere map over the simplex into
/// the target region.  `hints` are candidate interior points worth trying
/// as cone apexes.
pub trait SphereFiller {
    fn fill(
        &self,
        sphere: &SphereMap,
        simplex: &Simplex,
        target: &Region,
        hints: &[Point],
    ) -> Result<BallMap, FillError>;
}

impl<F> SphereFiller for F
where
    F: Fn(&SphereMap, &Simplex, &Region, &[Point]) -> Result<BallMap, FillError>,
{
    fn fill(
        &self,
        sphere: &SphereMap,
        simplex: &Simplex,
        target: &Region,
        hints: &[Point],
    ) -> Result<BallMap, FillError> {
        self(sphere, simplex, target, hints)
    }
}

/// The stock fill provider: straight or coned paths for edges, coned
/// disks for triangles, with a raster search fallback for paths.  Each
/// candidate is tried with its interior projected onto the target first —
/// identical on candidates already inside, and the projected values are
/// what downstream containment checks see — then raw.  Every candidate is
/// verified before it is returned.
#[derive(Clone, Debug)]
pub struct OracleFiller {
    /// Lattice depth of produced fills.
    pub depth: u32,
    /// Raster spacing for the path search fallback.
    pub bfs_step: f64,
    /// Containment tolerance used during verification.
    pub interior_tol: f64,
    /// A declared interior point to try as a cone apex.
    pub star_center: Option<Point>,
}

impl OracleFiller {
    /// Apex candidates in trial order: the mean of the sphere values, its
    /// projection, the hints and their projections, the declared center,
    /// and the target's own representative point.
    fn apex_candidates(&self, sphere: &SphereMap, target: &Region, hints: &[Point]) -> Vec<Point> {
        let pts = sphere.points();
        let mean = geom::mean(&pts.iter().map(|p| (*p).clone()).collect::<Vec<_>>());
        let mut out = vec![mean.clone(), target.project(&mean)];
        for h in hints {
            out.push(h.clone());
            out.push(target.project(h));
        }
        if let Some(c) = &self.star_center {
            out.push(c.clone());
            out.push(target.project(c));
        }
        out.push(target.representative_point());
        out.dedup_by(|a, b| geom::dist(a, b) < 1e-12);
        out
    }
}

impl SphereFiller for OracleFiller {
    fn fill(
        &self,
        sphere: &SphereMap,
        simplex: &Simplex,
        target: &Region,
        hints: &[Point],
    ) -> Result<BallMap, FillError> {
        sphere.validate(self.depth)?;
        let verified = |ball: BallMap| -> Option<BallMap> {
            verify_fill(&ball, sphere, target, self.interior_tol)
                .ok()
                .map(|_| ball)
        };
        // Projected interior first: on candidates already inside the
        // target the projection is the identity, and otherwise it pulls
        // the stored values onto the target.
        let tried = |ball: BallMap| -> Option<BallMap> {
            project_interior(&ball, target)
                .ok()
                .and_then(&verified)
                .or_else(|| verified(ball))
        };
        match sphere {
            SphereMap::Pair { a, b } => {
                if let Some(ball) = tried(straight_path(a, b, self.depth)) {
                    return Ok(ball);
                }
                for apex in self.apex_candidates(sphere, target, hints) {
                    if let Some(ball) = tried(cone_path(a, &apex, b, self.depth)) {
                        return Ok(ball);
                    }
                }
                match path_bfs(a, b, target, self.bfs_step, self.depth) {
                    Ok(ball) => tried(ball).ok_or(FillError::Exhausted),
                    Err(FillError::NoPath) => Err(FillError::NoPath),
                    Err(e) => Err(e),
                }
            }
            SphereMap::Loop { points } => {
                for apex in self.apex_candidates(sphere, target, hints) {
                    let ball = cone_disk(points, &apex, simplex, self.depth)?;
                    if let Some(ball) = tried(ball) {
                        return Ok(ball);
                    }
                }
                Err(FillError::Exhausted)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::vids;
    use crate::regions::{ConvexCell, ConvexPrim, GridMask, Piece};

    const D: u32 = 3;

    fn triangle() -> Simplex {
        let [a, b, c] = vids(["p", "q", "r"]);
        Simplex::new([a, b, c]).unwrap()
    }

    fn circle_loop(center: &[f64], radius: f64, count: usize) -> Vec<Point> {
        let mut pts: Vec<Point> = (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            })
            .collect();
        pts.push(pts[0].clone());
        pts
    }

    #[test]
    fn straight_path_pins_endpoints_exactly() {
        let a = vec![0.1, 0.7];
        let b = vec![-0.3, 2.0];
        let BallMap::Path { points } = straight_path(&a, &b, D) else {
            panic!("expected a path")
        };
        assert_eq!(points.len(), 9);
        assert_eq!(points[0], a);
        assert_eq!(points[8], b);
        // Interior points are on the segment.
        let seg = Region::hull(vec![a.clone(), b.clone()]).unwrap();
        for p in &points {
            assert!(seg.dist(p) < 1e-12);
        }
    }

    #[test]
    fn cone_path_passes_through_apex() {
        let a = vec![0.0];
        let b = vec![1.0];
        let apex = vec![5.0];
        let BallMap::Path { points } = cone_path(&a, &apex, &b, D) else {
            panic!("expected a path")
        };
        assert_eq!(points[4], apex);
        assert_eq!(points[0], a);
        assert_eq!(points[8], b);
    }

    #[test]
    fn straight_fill_verifies_in_a_ball() {
        let target = Region::ball(vec![0.0, 0.0], 1.0);
        let sphere = SphereMap::Pair { a: vec![-0.9, 0.0], b: vec![0.9, 0.0] };
        let filler = OracleFiller {
            depth: D,
            bfs_step: 0.1,
            interior_tol: 1e-9,
            star_center: None,
        };
        let ball = filler.fill(&sphere, &triangle(), &target, &[]).unwrap();
        verify_fill(&ball, &sphere, &target, 1e-9).unwrap();
    }

    #[test]
    fn bfs_routes_around_a_notch() {
        // An L of grid cells: straight and coned fills escape, the raster
        // path hugs the arms.
        let mut bits = vec![0u8; 25];
        for j in 0..5 {
            bits[0 + 5 * j] = 1; // column x = 0
        }
        for i in 0..5 {
            bits[i] = 1; // row y = 0
        }
        let mask = GridMask {
            origin: vec![0.0, 0.0],
            step: 0.25,
            shape: vec![5, 5],
            bits,
        };
        let target = Region::new(vec![Piece::Mask(mask)], false).unwrap();
        let a = vec![0.0, 1.0];
        let b = vec![1.0, 0.0];
        let straight = straight_path(&a, &b, D);
        let sphere = SphereMap::Pair { a: a.clone(), b: b.clone() };
        assert!(matches!(
            verify_fill(&straight, &sphere, &target, 1e-9),
            Err(FillError::Escapes { .. })
        ));
        let filler = OracleFiller {
            depth: D,
            bfs_step: 0.125,
            interior_tol: 1e-9,
            star_center: None,
        };
        let ball = filler.fill(&sphere, &triangle(), &target, &[]).unwrap();
        verify_fill(&ball, &sphere, &target, 1e-9).unwrap();
    }

    #[test]
    fn disk_cone_fills_a_star_polygon() {
        // An eight-pointed star: nonconvex, but radially convex about the
        // origin, so the cone from the loop mean succeeds.
        let mut rims = Vec::new();
        for k in 0..8 {
            let th = |i: u32| std::f64::consts::PI / 4.0 * (k as f64 + i as f64);
            let r = |i: u32| if (k + i as usize) % 2 == 0 { 1.0 } else { 0.45 };
            rims.push((th(0), r(0), th(1), r(1)));
        }
        let pieces: Vec<Region> = rims
            .iter()
            .map(|(t0, r0, t1, r1)| {
                Region::hull(vec![
                    vec![0.0, 0.0],
                    vec![r0 * t0.cos(), r0 * t0.sin()],
                    vec![r1 * t1.cos(), r1 * t1.sin()],
                ])
                .unwrap()
            })
            .collect();
        let target = Region::union(pieces).unwrap();
        // The loop traces the star boundary at 90% scale.
        let mut rim_points = Vec::new();
        for (t0, r0, _, _) in &rims {
            rim_points.push(vec![0.9 * r0 * t0.cos(), 0.9 * r0 * t0.sin()]);
        }
        rim_points.push(rim_points[0].clone());
        let n = 1usize << D;
        let points = resample_by_arclength(&rim_points, 3 * n + 1);
        let sphere = SphereMap::Loop { points };
        let filler = OracleFiller {
            depth: D,
            bfs_step: 0.1,
            interior_tol: 1e-6,
            star_center: None,
        };
        let ball = filler.fill(&sphere, &triangle(), &target, &[]).unwrap();
        verify_fill(&ball, &sphere, &target, 1e-6).unwrap();
        // The boundary restriction reproduces the loop bit for bit.
        let SphereMap::Loop { points: original } = &sphere else { unreachable!() };
        let SphereMap::Loop { points: back } = ball.boundary() else {
            panic!("disk boundary is a loop")
        };
        assert_eq!(&back, original);
    }

    #[test]
    fn disk_cone_rejects_an_annulus() {
        // A loop around the hole of an annulus cannot be filled inside it.
        let ring = Region::new(
            vec![Piece::Convex(ConvexCell {
                prims: vec![ConvexPrim::Ball {
                    center: vec![0.0, 0.0],
                    radius: 1.0,
                    inflate: 0.0,
                }],
            })],
            false,
        )
        .unwrap();
        // Model the annulus as the ring minus its middle: a mask with a
        // hole.
        let mut bits = Vec::new();
        for j in 0..11 {
            for i in 0..11 {
                let x = -1.0 + 0.2 * i as f64;
                let y = -1.0 + 0.2 * j as f64;
                let r = (x * x + y * y) as f64;
                bits.push(u8::from(r.sqrt() <= 1.0 && r.sqrt() >= 0.5));
            }
        }
        let annulus = Region::new(
            vec![Piece::Mask(GridMask {
                origin: vec![-1.0, -1.0],
                step: 0.2,
                shape: vec![11, 11],
                bits,
            })],
            false,
        )
        .unwrap();
        drop(ring);
        let n = 1usize << D;
        let sphere = SphereMap::Loop {
            points: circle_loop(&[0.0, 0.0], 0.8, 3 * n),
        };
        let filler = OracleFiller {
            depth: D,
            bfs_step: 0.1,
            interior_tol: 1e-9,
            star_center: None,
        };
        assert!(filler.fill(&sphere, &triangle(), &annulus, &[]).is_err());
    }

    #[test]
    fn derived_fill_band_and_base() {
        // Outer circle in a big ball, base fill in a small one.
        let small = Region::ball(vec![0.0, 0.0], 0.5);
        let big = Region::ball(vec![0.0, 0.0], 2.0);
        let n = 1usize << D;
        let outer = SphereMap::Loop {
            points: circle_loop(&[0.0, 0.0], 1.5, 3 * n),
        };
        let inner = project_sphere(&outer, &small);
        // Every projected point sits on the small sphere.
        if let SphereMap::Loop { points } = &inner {
            for p in points {
                assert!((geom::norm(p) - 0.5).abs() < 1e-12);
            }
        }
        let filler = OracleFiller {
            depth: D,
            bfs_step: 0.1,
            interior_tol: 1e-9,
            star_center: None,
        };
        let base = filler.fill(&inner, &triangle(), &small, &[]).unwrap();
        let combined = derived_fill(&outer, &inner, &base, D).unwrap();
        verify_fill(&combined, &outer, &big, 1e-9).unwrap();
        // The barycenter value comes from the base fill, hence the small
        // ball.
        let BallMap::Disk { map } = &combined else { panic!() };
        let [p, q, r] = vids(["p", "q", "r"]);
        let center = BaryPoint::new(vec![
            (p, 1.0 / 3.0),
            (q, 1.0 / 3.0),
            (r, 1.0 / 3.0),
        ])
        .unwrap();
        let v = map.eval(&center).unwrap();
        assert!(small.dist(&v) < 1e-6);
    }

    #[test]
    fn derived_fill_on_paths() {
        let small = Region::ball(vec![0.0], 0.2);
        let outer = SphereMap::Pair { a: vec![-1.0], b: vec![1.0] };
        let inner = project_sphere(&outer, &small);
        let base = straight_path(&vec![-0.2], &vec![0.2], D);
        let combined = derived_fill(&outer, &inner, &base, D).unwrap();
        let BallMap::Path { points } = &combined else { panic!() };
        assert_eq!(points[0], vec![-1.0]);
        assert_eq!(points[8], vec![1.0]);
        // The middle of the path is the base path's territory.
        assert!(points[4][0].abs() <= 0.2 + 1e-12);
    }

    #[test]
    fn homotopy_hits_both_ends_exactly() {
        let from = SphereMap::Pair { a: vec![0.0], b: vec![1.0] };
        let to = SphereMap::Pair { a: vec![2.0], b: vec![3.0] };
        assert_eq!(linear_homotopy(&from, &to, 0.0), from);
        assert_eq!(linear_homotopy(&from, &to, 1.0), to);
    }

    #[test]
    fn verify_rejects_boundary_mismatch() {
        let a = vec![0.0];
        let b = vec![1.0];
        let ball = straight_path(&a, &b, D);
        let wrong = SphereMap::Pair { a: vec![0.0], b: vec![1.1] };
        let target = Region::axis_box(vec![-1.0], vec![2.0]).unwrap();
        assert!(matches!(
            verify_fill(&ball, &wrong, &target, 1e-9),
            Err(FillError::BoundaryMismatch(_))
        ));
    }

    #[test]
    fn loop_validation_catches_bad_lengths() {
        let sphere = SphereMap::Loop {
            points: circle_loop(&[0.0, 0.0], 1.0, 7),
        };
        assert!(matches!(
            sphere.validate(D),
            Err(FillError::BadSphere(_))
        ));
    }

    #[test]
    fn polyline_eval_is_exact_at_integers() {
        let pts = vec![vec![0.0], vec![1.0], vec![5.0]];
        assert_eq!(polyline_eval(&pts, 0.0), vec![0.0]);
        assert_eq!(polyline_eval(&pts, 1.0), vec![1.0]);
        assert_eq!(polyline_eval(&pts, 2.0), vec![5.0]);
        assert_eq!(polyline_eval(&pts, 1.5), vec![3.0]);
    }
}

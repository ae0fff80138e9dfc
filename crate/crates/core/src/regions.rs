//! Geometric regions of Euclidean space and cellwise set-valued mappings.
//!
//! A [`Region`] is a finite union of pieces; a piece is either an
//! intersection of convex primitives (ball, axis box, convex hull, each with
//! an optional rounding inflation) or an explicit grid mask.  Distances are
//! exact for convex primitives, computed by alternating projections for
//! intersections, and resolved at grid precision for masks.  Dilating by
//! `eps` bumps the inflation of convex primitives exactly and re-rasterizes
//! masks outward; intersecting keeps convex pieces symbolic and rasterizes
//! inward when masks take part, so verification errs on the safe side.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Point};

/// Tolerance for strict-inequality membership checks on open regions and
/// for treating a nonnegative distance as zero.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Convergence tolerance of the alternating-projection routine.
const DYKSTRA_TOL: f64 = 1e-12;
const DYKSTRA_MAX_ITERS: usize = 4000;

/// Errors raised by region construction and combination.
#[derive(Debug, Error)]
pub enum RegionError {
    /// Coordinate dimensions disagree.
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    /// A primitive failed validation (radius < 0, box lo > hi, ...).
    #[error("invalid region: {0}")]
    Invalid(String),
    /// An intersection came out empty.
    #[error("empty intersection")]
    EmptyIntersection,
    /// A cellwise intersection came out empty at a specific cell.
    #[error("empty value at cell {cell}")]
    EmptyCell { cell: usize },
}

/// A convex primitive with an exact distance function.  `inflate` rounds
/// the primitive outward by a Minkowski ball; dilation adds to it so the
/// defining core data never changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConvexPrim {
    /// Ball of radius `radius + inflate` around `center`.
    Ball {
        center: Point,
        radius: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        inflate: f64,
    },
    /// Axis-aligned box `[lo, hi]`, rounded outward by `inflate`.
    Box {
        lo: Point,
        hi: Point,
        #[serde(default, skip_serializing_if = "is_zero")]
        inflate: f64,
    },
    /// Convex hull of a finite vertex list, rounded outward by `inflate`.
    Hull {
        verts: Vec<Point>,
        #[serde(default, skip_serializing_if = "is_zero")]
        inflate: f64,
    },
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl ConvexPrim {
    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match self {
            ConvexPrim::Ball { center, .. } => center.len(),
            ConvexPrim::Box { lo, .. } => lo.len(),
            ConvexPrim::Hull { verts, .. } => verts[0].len(),
        }
    }

    fn validate(&self) -> Result<(), RegionError> {
        match self {
            ConvexPrim::Ball { center, radius, inflate } => {
                if !center.iter().all(|c| c.is_finite()) || !radius.is_finite() {
                    return Err(RegionError::Invalid("non-finite ball".into()));
                }
                if *radius < 0.0 || *inflate < 0.0 {
                    return Err(RegionError::Invalid("negative ball radius".into()));
                }
            }
            ConvexPrim::Box { lo, hi, inflate } => {
                if lo.len() != hi.len() {
                    return Err(RegionError::DimMismatch(lo.len(), hi.len()));
                }
                if lo.iter().zip(hi).any(|(l, h)| l > h || !l.is_finite() || !h.is_finite()) {
                    return Err(RegionError::Invalid("box with lo > hi".into()));
                }
                if *inflate < 0.0 {
                    return Err(RegionError::Invalid("negative box inflation".into()));
                }
            }
            ConvexPrim::Hull { verts, inflate } => {
                if verts.is_empty() {
                    return Err(RegionError::Invalid("hull with no vertices".into()));
                }
                let d = verts[0].len();
                if verts.iter().any(|v| v.len() != d) {
                    return Err(RegionError::Invalid("hull with mixed dimensions".into()));
                }
                if verts.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(RegionError::Invalid("non-finite hull vertex".into()));
                }
                if *inflate < 0.0 {
                    return Err(RegionError::Invalid("negative hull inflation".into()));
                }
            }
        }
        Ok(())
    }

    /// Distance from `y` to the primitive (0 inside).
    pub fn dist(&self, y: &[f64]) -> f64 {
        match self {
            ConvexPrim::Ball { center, radius, inflate } => {
                (geom::dist(y, center) - radius - inflate).max(0.0)
            }
            ConvexPrim::Box { lo, hi, inflate } => {
                (box_core_dist(y, lo, hi) - inflate).max(0.0)
            }
            ConvexPrim::Hull { verts, inflate } => {
                (geom::dist(y, &hull_project(verts, y)) - inflate).max(0.0)
            }
        }
    }

    /// Interior slack of `y`: positive depth inside the primitive, negative
    /// distance outside.  Conservative (never larger than the true depth).
    pub fn slack(&self, y: &[f64]) -> f64 {
        match self {
            ConvexPrim::Ball { center, radius, inflate } => {
                radius + inflate - geom::dist(y, center)
            }
            ConvexPrim::Box { lo, hi, inflate } => {
                let core = box_core_dist(y, lo, hi);
                if core > 0.0 {
                    inflate - core
                } else {
                    let depth = lo
                        .iter()
                        .zip(hi)
                        .zip(y)
                        .map(|((l, h), x)| (x - l).min(h - x))
                        .fold(f64::INFINITY, f64::min);
                    inflate + depth
                }
            }
            ConvexPrim::Hull { verts, inflate } => {
                // Interior depth of a bare hull is not derived from the
                // vertex list; report the inflation margin only.
                inflate - geom::dist(y, &hull_project(verts, y))
            }
        }
    }

    /// Nearest point of the primitive to `y`.
    pub fn project(&self, y: &[f64]) -> Point {
        match self {
            ConvexPrim::Ball { center, radius, inflate } => {
                let r = radius + inflate;
                let d = geom::dist(y, center);
                if d <= r {
                    y.to_vec()
                } else {
                    let t = r / d;
                    geom::lerp(center, y, t)
                }
            }
            ConvexPrim::Box { lo, hi, inflate } => {
                let core: Point = y
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(x, (l, h))| x.clamp(*l, *h))
                    .collect();
                move_toward(&core, y, *inflate)
            }
            ConvexPrim::Hull { verts, inflate } => {
                let core = hull_project(verts, y);
                move_toward(&core, y, *inflate)
            }
        }
    }

    /// Representative interior point.
    pub fn centroid(&self) -> Point {
        match self {
            ConvexPrim::Ball { center, .. } => center.clone(),
            ConvexPrim::Box { lo, hi, .. } => {
                lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect()
            }
            ConvexPrim::Hull { verts, .. } => geom::mean(verts),
        }
    }

    /// Defining core data used as a finite stand-in for the whole
    /// primitive: centers, corners, and hull vertices (inflation excluded,
    /// so these points stay fixed under dilation).
    pub fn core_samples(&self) -> Vec<Point> {
        match self {
            ConvexPrim::Ball { center, radius, .. } => {
                let mut out = vec![center.clone()];
                if *radius > 0.0 {
                    for i in 0..center.len() {
                        for sgn in [-1.0, 1.0] {
                            let mut p = center.clone();
                            p[i] += sgn * radius;
                            out.push(p);
                        }
                    }
                }
                out
            }
            ConvexPrim::Box { lo, hi, .. } => {
                let mut out = vec![self.centroid()];
                let m = lo.len();
                for mask in 0..(1usize << m) {
                    let corner: Point = (0..m)
                        .map(|i| if mask & (1 << i) != 0 { hi[i] } else { lo[i] })
                        .collect();
                    out.push(corner);
                }
                out
            }
            ConvexPrim::Hull { verts, .. } => {
                let mut out = verts.clone();
                out.push(geom::mean(verts));
                out
            }
        }
    }

    /// Axis-aligned bounding box (including inflation).
    pub fn bbox(&self) -> (Point, Point) {
        match self {
            ConvexPrim::Ball { center, radius, inflate } => {
                let r = radius + inflate;
                (
                    center.iter().map(|c| c - r).collect(),
                    center.iter().map(|c| c + r).collect(),
                )
            }
            ConvexPrim::Box { lo, hi, inflate } => (
                lo.iter().map(|l| l - inflate).collect(),
                hi.iter().map(|h| h + inflate).collect(),
            ),
            ConvexPrim::Hull { verts, inflate } => {
                let d = verts[0].len();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for v in verts {
                    for i in 0..d {
                        lo[i] = lo[i].min(v[i]);
                        hi[i] = hi[i].max(v[i]);
                    }
                }
                (
                    lo.iter().map(|l| l - inflate).collect(),
                    hi.iter().map(|h| h + inflate).collect(),
                )
            }
        }
    }

    fn inflated(&self, eps: f64) -> ConvexPrim {
        let mut out = self.clone();
        match &mut out {
            ConvexPrim::Ball { inflate, .. }
            | ConvexPrim::Box { inflate, .. }
            | ConvexPrim::Hull { inflate, .. } => *inflate += eps,
        }
        out
    }
}

/// Walks from `base` toward `target` by at most `limit`.
fn move_toward(base: &[f64], target: &[f64], limit: f64) -> Point {
    let d = geom::dist(base, target);
    if d <= limit {
        target.to_vec()
    } else if d == 0.0 {
        base.to_vec()
    } else {
        geom::lerp(base, target, limit / d)
    }
}

/// Distance from `y` to the solid box `[lo, hi]`.
fn box_core_dist(y: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    y.iter()
        .zip(lo.iter().zip(hi))
        .map(|(x, (l, h))| {
            let e = (l - x).max(0.0).max(x - h);
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// Nearest point of the convex hull of `verts` to `y`.
///
/// Closed forms handle up to three vertices; larger hulls run the
/// minimum-norm-point iteration of Wolfe on the translated vertex set.
pub fn hull_project(verts: &[Point], y: &[f64]) -> Point {
    match verts.len() {
        1 => verts[0].clone(),
        2 => segment_project(&verts[0], &verts[1], y),
        3 => triangle_project(&verts[0], &verts[1], &verts[2], y),
        _ => {
            let translated: Vec<Point> = verts.iter().map(|v| geom::sub(v, y)).collect();
            let mnp = wolfe_min_norm(&translated);
            geom::add(&mnp, y)
        }
    }
}

fn segment_project(a: &[f64], b: &[f64], y: &[f64]) -> Point {
    let ab = geom::sub(b, a);
    let denom = geom::dot(&ab, &ab);
    if denom == 0.0 {
        return a.to_vec();
    }
    let t = (geom::dot(&geom::sub(y, a), &ab) / denom).clamp(0.0, 1.0);
    geom::lerp(a, b, t)
}

/// Nearest point on a (possibly degenerate) triangle, by Voronoi-region
/// classification; valid in any ambient dimension.
fn triangle_project(a: &[f64], b: &[f64], c: &[f64], y: &[f64]) -> Point {
    let ab = geom::sub(b, a);
    let ac = geom::sub(c, a);
    let ay = geom::sub(y, a);
    let d1 = geom::dot(&ab, &ay);
    let d2 = geom::dot(&ac, &ay);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a.to_vec();
    }
    let by = geom::sub(y, b);
    let d3 = geom::dot(&ab, &by);
    let d4 = geom::dot(&ac, &by);
    if d3 >= 0.0 && d4 <= d3 {
        return b.to_vec();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return geom::lerp(a, b, t);
    }
    let cy = geom::sub(y, c);
    let d5 = geom::dot(&ab, &cy);
    let d6 = geom::dot(&ac, &cy);
    if d6 >= 0.0 && d5 <= d6 {
        return c.to_vec();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return geom::lerp(a, c, t);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return geom::lerp(b, c, t);
    }
    // Interior: solve the 2x2 least-squares system for the plane point.
    let g = vec![
        vec![geom::dot(&ab, &ab), geom::dot(&ab, &ac)],
        vec![geom::dot(&ab, &ac), geom::dot(&ac, &ac)],
    ];
    let rhs = vec![d1, d2];
    match geom::solve_dense(&g, &rhs) {
        Some(uv) => {
            let mut p = a.to_vec();
            for i in 0..p.len() {
                p[i] += uv[0] * ab[i] + uv[1] * ac[i];
            }
            p
        }
        None => segment_project(a, b, y),
    }
}

/// Minimum-norm point in the convex hull of `points` (Wolfe's method).
fn wolfe_min_norm(points: &[Point]) -> Point {
    let start = points
        .iter()
        .enumerate()
        .min_by(|(_, p), (_, q)| {
            geom::dot(p, p).partial_cmp(&geom::dot(q, q)).expect("NaN point")
        })
        .map(|(i, _)| i)
        .expect("nonempty point list");
    let mut active: Vec<usize> = vec![start];
    let mut lambda: Vec<f64> = vec![1.0];
    let mut x = points[start].clone();
    for _ in 0..200 {
        // Optimality: no vertex strictly below the supporting hyperplane.
        let xx = geom::dot(&x, &x);
        let scale = 1.0 + xx;
        let (best, best_ip) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, geom::dot(&x, p)))
            .min_by(|(_, a), (_, b)| a.partial_cmp(b).expect("NaN inner product"))
            .expect("nonempty point list");
        if best_ip > xx - 1e-13 * scale {
            break;
        }
        if !active.contains(&best) {
            active.push(best);
            lambda.push(0.0);
        }
        // Minor loop: move to the affine minimizer, dropping points whose
        // coefficient would turn negative.
        for _ in 0..200 {
            let k = active.len();
            let mut m = vec![vec![0.0; k + 1]; k + 1];
            let mut rhs = vec![0.0; k + 1];
            for i in 0..k {
                for j in 0..k {
                    m[i][j] = geom::dot(&points[active[i]], &points[active[j]]);
                }
                m[i][k] = 1.0;
                m[k][i] = 1.0;
            }
            rhs[k] = 1.0;
            let sol = match geom::solve_dense(&m, &rhs) {
                Some(s) => s,
                None => {
                    // Degenerate affine set: drop the most redundant point.
                    if active.len() > 1 {
                        active.pop();
                        lambda.pop();
                        continue;
                    }
                    break;
                }
            };
            let mu = &sol[..k];
            if mu.iter().all(|&w| w > 1e-12) {
                lambda = mu.to_vec();
                break;
            }
            // Line search from lambda toward mu until a coefficient hits 0.
            let mut theta = 1.0f64;
            for i in 0..k {
                if mu[i] < 1e-12 {
                    let denom = lambda[i] - mu[i];
                    if denom > 0.0 {
                        theta = theta.min(lambda[i] / denom);
                    }
                }
            }
            for i in 0..k {
                lambda[i] = (1.0 - theta) * lambda[i] + theta * mu[i];
            }
            let keep: Vec<usize> = (0..k).filter(|&i| lambda[i] > 1e-12).collect();
            if keep.len() == k {
                break;
            }
            active = keep.iter().map(|&i| active[i]).collect();
            lambda = keep.iter().map(|&i| lambda[i]).collect();
            let total: f64 = lambda.iter().sum();
            for l in &mut lambda {
                *l /= total;
            }
        }
        let dim = points[0].len();
        x = vec![0.0; dim];
        for (i, &idx) in active.iter().enumerate() {
            for d in 0..dim {
                x[d] += lambda[i] * points[idx][d];
            }
        }
    }
    x
}

/// An intersection of convex primitives, kept symbolic so distances stay
/// exact up to the alternating-projection tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexCell {
    pub prims: Vec<ConvexPrim>,
}

impl ConvexCell {
    fn dim(&self) -> usize {
        self.prims[0].dim()
    }

    /// Membership is exact: every primitive must contain the point.
    fn slack(&self, y: &[f64]) -> f64 {
        self.prims
            .iter()
            .map(|p| p.slack(y))
            .fold(f64::INFINITY, f64::min)
    }

    fn dist(&self, y: &[f64]) -> f64 {
        if self.prims.len() == 1 {
            return self.prims[0].dist(y);
        }
        if self.prims.iter().all(|p| p.dist(y) <= 0.0) {
            return 0.0;
        }
        geom::dist(y, &self.project(y))
    }

    /// Whether `y` lies within `tol` of the cell.  The distance to the
    /// intersection dominates every per-primitive distance, so a single
    /// far primitive rejects without running alternating projections.
    fn within(&self, y: &[f64], tol: f64) -> bool {
        let mut inside = true;
        for p in &self.prims {
            let d = p.dist(y);
            if d > tol {
                return false;
            }
            inside = inside && d <= 0.0;
        }
        inside || self.dist(y) <= tol
    }

    /// Whether every primitive holds `y` strictly deeper than `tol`,
    /// bailing on the first that does not.
    fn slack_exceeds(&self, y: &[f64], tol: f64) -> bool {
        self.prims.iter().all(|p| p.slack(y) > tol)
    }

    /// Nearest point of the intersection by Dykstra's alternating
    /// projections (exact for convex sets up to the iteration tolerance).
    fn project(&self, y: &[f64]) -> Point {
        if self.prims.len() == 1 {
            return self.prims[0].project(y);
        }
        let dim = y.len();
        let mut x = y.to_vec();
        let mut increments = vec![vec![0.0; dim]; self.prims.len()];
        for _ in 0..DYKSTRA_MAX_ITERS {
            let mut shift = 0.0f64;
            for (i, prim) in self.prims.iter().enumerate() {
                let w: Point = x.iter().zip(&increments[i]).map(|(a, b)| a + b).collect();
                let proj = prim.project(&w);
                for d in 0..dim {
                    increments[i][d] = w[d] - proj[d];
                }
                shift = shift.max(geom::dist(&x, &proj));
                x = proj;
            }
            if shift < DYKSTRA_TOL {
                break;
            }
        }
        x
    }

    /// A point well inside the intersection, or `None` if the primitives
    /// have (numerically) no common point.
    fn deep_point(&self) -> Option<Point> {
        let centers: Vec<Point> = self.prims.iter().map(|p| p.centroid()).collect();
        let seed = geom::mean(&centers);
        let p = self.project(&seed);
        let worst = self
            .prims
            .iter()
            .map(|prim| prim.dist(&p))
            .fold(0.0f64, f64::max);
        if worst <= BOUNDARY_TOL {
            Some(p)
        } else {
            None
        }
    }

    fn bbox(&self) -> (Point, Point) {
        let mut boxes = self.prims.iter().map(|p| p.bbox());
        let (mut lo, mut hi) = boxes.next().expect("nonempty cell");
        for (l, h) in boxes {
            for i in 0..lo.len() {
                lo[i] = lo[i].max(l[i]);
                hi[i] = hi[i].min(h[i]);
            }
        }
        (lo, hi)
    }

    fn core_samples(&self) -> Vec<Point> {
        if self.prims.len() == 1 {
            return self.prims[0].core_samples();
        }
        let mut out = Vec::new();
        if let Some(p) = self.deep_point() {
            out.push(p);
        }
        for prim in &self.prims {
            for s in prim.core_samples() {
                let q = self.project(&s);
                out.push(q);
            }
        }
        out
    }

    fn centroid(&self) -> Point {
        match self.deep_point() {
            Some(p) => p,
            None => geom::mean(&self.prims.iter().map(|p| p.centroid()).collect::<Vec<_>>()),
        }
    }
}

/// An explicit set of grid cells in value space: axis boxes of side `step`
/// centered at `origin + index * step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMask {
    pub origin: Point,
    pub step: f64,
    pub shape: Vec<usize>,
    /// Row-major with the first axis fastest; 1 marks an occupied cell.
    pub bits: Vec<u8>,
}

impl GridMask {
    fn dim(&self) -> usize {
        self.shape.len()
    }

    fn validate(&self) -> Result<(), RegionError> {
        if self.origin.len() != self.shape.len() {
            return Err(RegionError::DimMismatch(self.origin.len(), self.shape.len()));
        }
        if self.step <= 0.0 || !self.step.is_finite() {
            return Err(RegionError::Invalid("mask step must be positive".into()));
        }
        let n: usize = self.shape.iter().product();
        if self.bits.len() != n {
            return Err(RegionError::Invalid(format!(
                "mask bits length {} does not match shape volume {n}",
                self.bits.len()
            )));
        }
        if !self.bits.iter().any(|&b| b != 0) {
            return Err(RegionError::Invalid("mask with no occupied cells".into()));
        }
        Ok(())
    }

    fn index_to_coords(&self, mut idx: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&n| {
                let c = idx % n;
                idx /= n;
                c
            })
            .collect()
    }

    fn cell_center(&self, coords: &[usize]) -> Point {
        coords
            .iter()
            .zip(&self.origin)
            .map(|(&c, o)| o + c as f64 * self.step)
            .collect()
    }

    /// Centers of all occupied cells, in index order.
    pub fn centers(&self) -> Vec<Point> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| self.cell_center(&self.index_to_coords(i)))
            .collect()
    }

    /// Distance to the union of occupied cells (each a closed box of side
    /// `step`); exact for the cell union itself.
    fn dist(&self, y: &[f64]) -> f64 {
        let h = 0.5 * self.step;
        let mut best = f64::INFINITY;
        for c in self.centers() {
            let lo: Point = c.iter().map(|x| x - h).collect();
            let hi: Point = c.iter().map(|x| x + h).collect();
            best = best.min(box_core_dist(y, &lo, &hi));
        }
        best
    }

    fn slack(&self, y: &[f64]) -> f64 {
        let h = 0.5 * self.step;
        let mut best = f64::NEG_INFINITY;
        for c in self.centers() {
            let depth = c
                .iter()
                .zip(y)
                .map(|(cc, x)| h - (x - cc).abs())
                .fold(f64::INFINITY, f64::min);
            best = best.max(depth);
        }
        best
    }

    fn project(&self, y: &[f64]) -> Point {
        let h = 0.5 * self.step;
        let mut best = (f64::INFINITY, y.to_vec());
        for c in self.centers() {
            let p: Point = y
                .iter()
                .zip(&c)
                .map(|(x, cc)| x.clamp(cc - h, cc + h))
                .collect();
            let d = geom::dist(y, &p);
            if d < best.0 {
                best = (d, p);
            }
        }
        best.1
    }

    /// Outward dilation in grid steps: the result covers the true
    /// `eps`-neighborhood of the cell union (outer approximation).
    fn dilate(&self, eps: f64) -> GridMask {
        let pad = ((eps + self.step) / self.step).ceil() as usize;
        let dim = self.dim();
        let new_shape: Vec<usize> = self.shape.iter().map(|&n| n + 2 * pad).collect();
        let new_origin: Point = self.origin.iter().map(|o| o - pad as f64 * self.step).collect();
        let half_diag = 0.5 * self.step * (dim as f64).sqrt();
        let total: usize = new_shape.iter().product();
        let mut bits = vec![0u8; total];
        for idx in 0..total {
            let mut rem = idx;
            let coords: Vec<usize> = new_shape
                .iter()
                .map(|&n| {
                    let c = rem % n;
                    rem /= n;
                    c
                })
                .collect();
            let center: Point = coords
                .iter()
                .zip(&new_origin)
                .map(|(&c, o)| o + c as f64 * self.step)
                .collect();
            if self.dist(&center) <= eps + half_diag {
                bits[idx] = 1;
            }
        }
        GridMask {
            origin: new_origin,
            step: self.step,
            shape: new_shape,
            bits,
        }
    }

    /// Keeps only the cells certified to lie inside `other` (all corners
    /// and the center pass closed membership): an inner approximation of
    /// the intersection.
    fn restrict_to(&self, other: &Region) -> Option<GridMask> {
        let h = 0.5 * self.step;
        let dim = self.dim();
        let mut bits = self.bits.clone();
        let mut any = false;
        for (idx, bit) in bits.iter_mut().enumerate() {
            if *bit == 0 {
                continue;
            }
            let mut rem = idx;
            let coords: Vec<usize> = self
                .shape
                .iter()
                .map(|&n| {
                    let c = rem % n;
                    rem /= n;
                    c
                })
                .collect();
            let center = self.cell_center(&coords);
            let mut ok = other.dist(&center) <= BOUNDARY_TOL;
            for mask in 0..(1usize << dim) {
                if !ok {
                    break;
                }
                let corner: Point = (0..dim)
                    .map(|i| center[i] + if mask & (1 << i) != 0 { h } else { -h })
                    .collect();
                ok = other.dist(&corner) <= BOUNDARY_TOL;
            }
            if ok {
                any = true;
            } else {
                *bit = 0;
            }
        }
        if any {
            Some(GridMask { bits, ..self.clone() })
        } else {
            None
        }
    }

    fn bbox(&self) -> (Point, Point) {
        let h = 0.5 * self.step;
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for c in self.centers() {
            for i in 0..dim {
                lo[i] = lo[i].min(c[i] - h);
                hi[i] = hi[i].max(c[i] + h);
            }
        }
        (lo, hi)
    }
}

/// One piece of a region union.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Piece {
    Convex(ConvexCell),
    Mask(GridMask),
}

impl Piece {
    fn dim(&self) -> usize {
        match self {
            Piece::Convex(c) => c.dim(),
            Piece::Mask(m) => m.dim(),
        }
    }

    fn dist(&self, y: &[f64]) -> f64 {
        match self {
            Piece::Convex(c) => c.dist(y),
            Piece::Mask(m) => m.dist(y),
        }
    }

    fn slack(&self, y: &[f64]) -> f64 {
        match self {
            Piece::Convex(c) => c.slack(y),
            Piece::Mask(m) => m.slack(y),
        }
    }

    fn project(&self, y: &[f64]) -> Point {
        match self {
            Piece::Convex(c) => c.project(y),
            Piece::Mask(m) => m.project(y),
        }
    }

    fn within(&self, y: &[f64], tol: f64) -> bool {
        match self {
            Piece::Convex(c) => c.within(y, tol),
            Piece::Mask(m) => m.dist(y) <= tol,
        }
    }

    fn slack_exceeds(&self, y: &[f64], tol: f64) -> bool {
        match self {
            Piece::Convex(c) => c.slack_exceeds(y, tol),
            Piece::Mask(m) => m.slack(y) > tol,
        }
    }
}

/// A nonempty region of Euclidean space: a finite union of pieces together
/// with an openness flag.  Open and closed regions share the same distance
/// function; openness only strengthens membership checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pieces: Vec<Piece>,
    pub open: bool,
}

impl Region {
    /// Builds a region from pieces, validating each and the common
    /// dimension; nonemptiness of convex cells is certified by projection.
    pub fn new(pieces: Vec<Piece>, open: bool) -> Result<Self, RegionError> {
        if pieces.is_empty() {
            return Err(RegionError::EmptyIntersection);
        }
        let dim = pieces[0].dim();
        let mut kept = Vec::with_capacity(pieces.len());
        for piece in pieces {
            if piece.dim() != dim {
                return Err(RegionError::DimMismatch(piece.dim(), dim));
            }
            match &piece {
                Piece::Convex(cell) => {
                    if cell.prims.is_empty() {
                        return Err(RegionError::Invalid("cell with no primitives".into()));
                    }
                    for p in &cell.prims {
                        p.validate()?;
                    }
                    if cell.prims.len() > 1 && cell.deep_point().is_none() {
                        // Empty intersections are dropped; if nothing is
                        // left the region itself is empty.
                        continue;
                    }
                }
                Piece::Mask(m) => m.validate()?,
            }
            kept.push(piece);
        }
        if kept.is_empty() {
            return Err(RegionError::EmptyIntersection);
        }
        Ok(Region { pieces: kept, open })
    }

    /// A closed ball.
    pub fn ball(center: Point, radius: f64) -> Self {
        Region::new(
            vec![Piece::Convex(ConvexCell {
                prims: vec![ConvexPrim::Ball { center, radius, inflate: 0.0 }],
            })],
            false,
        )
        .expect("a ball is always a valid region")
    }

    /// A single point.
    pub fn point(p: Point) -> Self {
        Region::ball(p, 0.0)
    }

    /// A closed axis box.
    pub fn axis_box(lo: Point, hi: Point) -> Result<Self, RegionError> {
        Region::new(
            vec![Piece::Convex(ConvexCell {
                prims: vec![ConvexPrim::Box { lo, hi, inflate: 0.0 }],
            })],
            false,
        )
    }

    /// The convex hull of a vertex list.
    pub fn hull(verts: Vec<Point>) -> Result<Self, RegionError> {
        Region::new(
            vec![Piece::Convex(ConvexCell {
                prims: vec![ConvexPrim::Hull { verts, inflate: 0.0 }],
            })],
            false,
        )
    }

    /// A union of the given regions (openness of the first).
    pub fn union(regions: Vec<Region>) -> Result<Self, RegionError> {
        let open = regions.first().map(|r| r.open).unwrap_or(false);
        Region::new(
            regions.into_iter().flat_map(|r| r.pieces).collect(),
            open,
        )
    }

    /// The pieces of this region.
    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    /// Distance from `y` to the region (to its closure when open): the
    /// minimum over pieces.
    pub fn dist(&self, y: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.dist(y))
            .fold(f64::INFINITY, f64::min)
    }

    /// Interior slack: how deep inside the region `y` sits (negative
    /// outside).  Conservative for bare hulls.
    pub fn slack(&self, y: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.slack(y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Membership with the openness convention: closed regions accept
    /// boundary points within [`BOUNDARY_TOL`], open regions require
    /// interior slack beyond it.
    pub fn contains(&self, y: &[f64]) -> bool {
        if self.open {
            self.pieces.iter().any(|p| p.slack_exceeds(y, BOUNDARY_TOL))
        } else {
            self.within(y, BOUNDARY_TOL)
        }
    }

    /// Whether `y` lies within `tol` of the closure.  Cheaper than
    /// comparing [`Region::dist`] against `tol`: pieces reject on the
    /// first far primitive instead of projecting onto the intersection.
    pub fn within(&self, y: &[f64], tol: f64) -> bool {
        self.pieces.iter().any(|p| p.within(y, tol))
    }

    /// Nearest point of the region to `y`.
    pub fn project(&self, y: &[f64]) -> Point {
        let best = self
            .pieces
            .iter()
            .min_by(|a, b| {
                a.dist(y)
                    .partial_cmp(&b.dist(y))
                    .expect("NaN distance")
            })
            .expect("region has pieces");
        best.project(y)
    }

    /// The open `eps`-neighborhood: exact inflation on convex pieces,
    /// outward grid dilation on masks.
    pub fn neighborhood(&self, eps: f64) -> Region {
        assert!(eps >= 0.0, "negative neighborhood radius");
        let pieces = self
            .pieces
            .iter()
            .map(|p| match p {
                Piece::Convex(cell) => Piece::Convex(ConvexCell {
                    prims: cell.prims.iter().map(|q| q.inflated(eps)).collect(),
                }),
                Piece::Mask(m) => Piece::Mask(m.dilate(eps)),
            })
            .collect();
        Region { pieces, open: true }
    }

    /// The closure: the same point set with non-strict membership.
    pub fn closure(&self) -> Region {
        Region {
            pieces: self.pieces.clone(),
            open: false,
        }
    }

    /// Intersection of two regions: the pairwise intersection of pieces.
    /// Convex pieces merge symbolically; mask pieces restrict to certified
    /// cells (an inner approximation).  Empty results are an error.
    pub fn intersect(&self, other: &Region) -> Result<Region, RegionError> {
        if self.dim() != other.dim() {
            return Err(RegionError::DimMismatch(self.dim(), other.dim()));
        }
        let mut pieces = Vec::new();
        for a in &self.pieces {
            for b in &other.pieces {
                match (a, b) {
                    (Piece::Convex(ca), Piece::Convex(cb)) => {
                        let mut prims = ca.prims.clone();
                        for p in &cb.prims {
                            if !prims.contains(p) {
                                prims.push(p.clone());
                            }
                        }
                        // Cheap primitives first so membership tests bail
                        // early; the stable sort keeps ties deterministic.
                        prims.sort_by_key(|p| match p {
                            ConvexPrim::Ball { .. } => 0u8,
                            ConvexPrim::Box { .. } => 1,
                            ConvexPrim::Hull { .. } => 2,
                        });
                        let cell = ConvexCell { prims };
                        if cell.prims.len() == 1 || cell.deep_point().is_some() {
                            pieces.push(Piece::Convex(cell));
                        }
                    }
                    (Piece::Mask(m), other_piece) | (other_piece, Piece::Mask(m)) => {
                        let wrap = Region {
                            pieces: vec![other_piece.clone()],
                            open: false,
                        };
                        if let Some(restricted) = m.restrict_to(&wrap) {
                            pieces.push(Piece::Mask(restricted));
                        }
                    }
                }
            }
        }
        if pieces.is_empty() {
            return Err(RegionError::EmptyIntersection);
        }
        Ok(Region {
            pieces,
            open: self.open || other.open,
        })
    }

    /// Representative point: the mean of piece representatives projected
    /// into the region, falling back to the first raster sample.
    pub fn representative_point(&self) -> Point {
        let centroids: Vec<Point> = self
            .pieces
            .iter()
            .map(|p| match p {
                Piece::Convex(c) => c.centroid(),
                Piece::Mask(m) => m.centers().into_iter().next().expect("nonempty mask"),
            })
            .collect();
        let mean = geom::mean(&centroids);
        if self.contains(&mean) {
            return mean;
        }
        let proj = self.project(&mean);
        if self.contains(&proj) {
            return proj;
        }
        // Raster fallback for open regions whose projection lands on the
        // boundary: scan the bounding box on a coarse grid.
        let (lo, hi) = self.bbox();
        let extent = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| h - l)
            .fold(0.0f64, f64::max);
        let step = (extent / 16.0).max(1e-9);
        for p in raster(&lo, &hi, step) {
            if self.contains(&p) {
                return p;
            }
        }
        proj
    }

    /// Bounding box of the whole union.
    pub fn bbox(&self) -> (Point, Point) {
        let mut boxes = self.pieces.iter().map(|p| match p {
            Piece::Convex(c) => c.bbox(),
            Piece::Mask(m) => m.bbox(),
        });
        let (mut lo, mut hi) = boxes.next().expect("region has pieces");
        for (l, h) in boxes {
            for i in 0..lo.len() {
                lo[i] = lo[i].min(l[i]);
                hi[i] = hi[i].max(h[i]);
            }
        }
        (lo, hi)
    }

    /// Finite stand-in sample of the region: defining primitive data plus
    /// deep points of intersections and mask cell centers.  Every sample
    /// lies in the (closure of the) region.
    pub fn core_samples(&self) -> Vec<Point> {
        let mut out = Vec::new();
        for p in &self.pieces {
            match p {
                Piece::Convex(c) => out.extend(c.core_samples()),
                Piece::Mask(m) => out.extend(m.centers()),
            }
        }
        out
    }

    /// Raster points of the bounding box that belong to the region.
    pub fn grid_samples(&self, step: f64) -> Vec<Point> {
        let (lo, hi) = self.bbox();
        let mut out: Vec<Point> = raster(&lo, &hi, step)
            .into_iter()
            .filter(|p| self.dist(p) <= BOUNDARY_TOL)
            .collect();
        if out.is_empty() {
            out.push(self.representative_point());
        }
        out
    }
}

/// Grid points of `[lo, hi]` at spacing `step`, inclusive of both ends.
pub fn raster(lo: &[f64], hi: &[f64], step: f64) -> Vec<Point> {
    assert!(step > 0.0);
    let counts: Vec<usize> = lo
        .iter()
        .zip(hi)
        .map(|(l, h)| ((h - l) / step).floor() as usize + 1)
        .collect();
    let total: usize = counts.iter().product();
    let mut out = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        let p: Point = counts
            .iter()
            .zip(lo)
            .map(|(&n, l)| {
                let c = rem % n;
                rem /= n;
                l + c as f64 * step
            })
            .collect();
        out.push(p);
    }
    out
}

/// A set-valued mapping: one region per domain cell, piecewise constant.
#[derive(Clone, Debug)]
pub struct SetValuedMap {
    values: Vec<Arc<Region>>,
    value_dim: usize,
}

impl SetValuedMap {
    /// The constant mapping on `len` cells.
    pub fn constant(len: usize, region: Region) -> Self {
        let value_dim = region.dim();
        let r = Arc::new(region);
        SetValuedMap {
            values: vec![r; len],
            value_dim,
        }
    }

    /// One region per cell.
    pub fn from_values(values: Vec<Region>) -> Result<Self, RegionError> {
        if values.is_empty() {
            return Err(RegionError::Invalid("mapping with no cells".into()));
        }
        let value_dim = values[0].dim();
        for (cell, v) in values.iter().enumerate() {
            if v.dim() != value_dim {
                return Err(RegionError::EmptyCell { cell });
            }
        }
        Ok(SetValuedMap {
            values: values.into_iter().map(Arc::new).collect(),
            value_dim,
        })
    }

    /// Builds by evaluating `f` on each cell index.
    pub fn from_fn(
        len: usize,
        f: impl Fn(usize) -> Region,
    ) -> Result<Self, RegionError> {
        SetValuedMap::from_values((0..len).map(f).collect())
    }

    /// One region per cell from shared allocations, so cells with equal
    /// values can share one region and downstream caches can key on the
    /// pointer.
    pub fn from_shared(values: Vec<Arc<Region>>) -> Result<Self, RegionError> {
        if values.is_empty() {
            return Err(RegionError::Invalid("mapping with no cells".into()));
        }
        let value_dim = values[0].dim();
        for (cell, v) in values.iter().enumerate() {
            if v.dim() != value_dim {
                return Err(RegionError::EmptyCell { cell });
            }
        }
        Ok(SetValuedMap { values, value_dim })
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Whether the mapping has no cells.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Dimension of the value space.
    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    /// The value over cell `i`.
    pub fn value(&self, i: usize) -> &Arc<Region> {
        &self.values[i]
    }

    /// Cellwise open neighborhood of the values.  Cells sharing a region
    /// keep sharing the inflated one.
    pub fn o_map(&self, eps: f64) -> SetValuedMap {
        let mut memo: HashMap<usize, Arc<Region>> = HashMap::new();
        SetValuedMap {
            values: self
                .values
                .iter()
                .map(|r| {
                    memo.entry(Arc::as_ptr(r) as usize)
                        .or_insert_with(|| Arc::new(r.neighborhood(eps)))
                        .clone()
                })
                .collect(),
            value_dim: self.value_dim,
        }
    }

    /// Cellwise intersection; fails naming the first empty cell.  Cells
    /// sharing both operands (piecewise-constant maps) share the result.
    pub fn intersect(&self, other: &SetValuedMap) -> Result<SetValuedMap, RegionError> {
        if self.len() != other.len() {
            return Err(RegionError::DimMismatch(self.len(), other.len()));
        }
        let mut memo: HashMap<(usize, usize), Arc<Region>> = HashMap::new();
        let mut values = Vec::with_capacity(self.len());
        for (cell, (a, b)) in self.values.iter().zip(&other.values).enumerate() {
            let key = (Arc::as_ptr(a) as usize, Arc::as_ptr(b) as usize);
            if let Some(r) = memo.get(&key) {
                values.push(r.clone());
                continue;
            }
            match a.intersect(b) {
                Ok(r) => {
                    let r = Arc::new(r);
                    memo.insert(key, r.clone());
                    values.push(r);
                }
                Err(RegionError::EmptyIntersection) => {
                    return Err(RegionError::EmptyCell { cell })
                }
                Err(e) => return Err(e),
            }
        }
        Ok(SetValuedMap {
            values,
            value_dim: self.value_dim,
        })
    }

    /// Cellwise closure.
    pub fn closure(&self) -> SetValuedMap {
        let mut memo: HashMap<usize, Arc<Region>> = HashMap::new();
        SetValuedMap {
            values: self
                .values
                .iter()
                .map(|r| {
                    memo.entry(Arc::as_ptr(r) as usize)
                        .or_insert_with(|| Arc::new(r.closure()))
                        .clone()
                })
                .collect(),
            value_dim: self.value_dim,
        }
    }
}

/// Worst point reported by [`is_eps_selection`].
#[derive(Clone, Debug)]
pub struct SelectionViolation {
    pub cell: usize,
    pub dist: f64,
}

/// Checks that `f` is an `eps`-selection of `phi`: the membership distance
/// `dist(f(x), phi(x))` is strictly below `eps` at every cell.  On failure
/// reports the cell of largest distance.
pub fn is_eps_selection(
    f: &[Point],
    phi: &SetValuedMap,
    eps: f64,
) -> Result<(), SelectionViolation> {
    assert_eq!(f.len(), phi.len(), "selection and mapping sizes differ");
    let mut worst: Option<SelectionViolation> = None;
    for (cell, y) in f.iter().enumerate() {
        let d = phi.value(cell).dist(y);
        if d >= eps {
            let update = match &worst {
                Some(w) => d > w.dist,
                None => true,
            };
            if update {
                worst = Some(SelectionViolation { cell, dist: d });
            }
        }
    }
    match worst {
        Some(w) => Err(w),
        None => Ok(()),
    }
}

/// Witness of a lower-local-constancy failure: a sample of the value at
/// `cell` that is too far from the value at the adjacent `neighbor`.
#[derive(Clone, Debug)]
pub struct LlcWitness {
    pub cell: usize,
    pub neighbor: usize,
    pub sample: Point,
    pub dist: f64,
}

/// Discrete lower-local-constancy check.
///
/// For every pair of adjacent cells with distinct values, every core sample
/// of the value at one cell must lie in the value at the other within
/// `tol`.  Samples are the defining core data of the region (which dilation
/// leaves fixed), so for a mapping whose cell-to-cell gaps are below `eps`
/// the dilated mapping `o_map(eps)` passes.  Returns the first witness in
/// cell order on failure.
pub fn is_llc(
    phi: &SetValuedMap,
    neighbors: impl Fn(usize) -> Vec<usize>,
    tol: f64,
) -> Result<(), LlcWitness> {
    for cell in 0..phi.len() {
        let value = phi.value(cell);
        let samples = value.core_samples();
        for neighbor in neighbors(cell) {
            let other = phi.value(neighbor);
            if Arc::ptr_eq(value, other) {
                continue;
            }
            for s in &samples {
                let d = other.dist(s);
                if d > tol {
                    return Err(LlcWitness {
                        cell,
                        neighbor,
                        sample: s.clone(),
                        dist: d,
                    });
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(c: &[f64], r: f64) -> Region {
        Region::ball(c.to_vec(), r)
    }

    #[test]
    fn ball_distances() {
        let b = ball(&[0.0, 0.0], 1.0);
        assert_eq!(b.dist(&[0.0, 0.0]), 0.0);
        assert!((b.dist(&[2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(b.dist(&[0.5, 0.0]), 0.0);
    }

    #[test]
    fn box_distances() {
        let bx = Region::axis_box(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(bx.dist(&[1.0, 0.5]), 0.0);
        assert!((bx.dist(&[3.0, 0.5]) - 1.0).abs() < 1e-15);
        assert!((bx.dist(&[3.0, 2.0]) - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hull_projection_is_optimal() {
        // Optimality certificate: the vector from the projection to the
        // query is an outer normal, so no vertex improves on it.
        let verts = vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.3, 0.3, 1.0],
            vec![1.0, 1.0, 0.2],
        ];
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64) / (u32::MAX as f64) * 4.0 - 2.0
        };
        for _ in 0..50 {
            let y = vec![next(), next(), next()];
            let p = hull_project(&verts, &y);
            let to_y = geom::sub(&y, &p);
            for v in &verts {
                let side = geom::dot(&to_y, &geom::sub(v, &p));
                assert!(side <= 1e-7, "vertex beats projection: {side}");
            }
        }
    }

    #[test]
    fn triangle_distance_matches_sampling() {
        let verts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![0.0, 2.0]];
        let tri = Region::hull(verts.clone()).unwrap();
        let y = vec![2.0, 2.0];
        // Dense barycentric sampling gives an upper bound near the truth.
        let mut best = f64::INFINITY;
        let n = 200;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let a = i as f64 / n as f64;
                let b = j as f64 / n as f64;
                let c = 1.0 - a - b;
                let p = vec![
                    a * verts[0][0] + b * verts[1][0] + c * verts[2][0],
                    a * verts[0][1] + b * verts[1][1] + c * verts[2][1],
                ];
                best = best.min(geom::dist(&y, &p));
            }
        }
        assert!((tri.dist(&y) - best).abs() < 1e-2);
        assert!(tri.dist(&y) <= best + 1e-12);
    }

    #[test]
    fn neighborhood_shifts_distance_exactly() {
        let shapes = vec![
            ball(&[1.0, -2.0], 1.5),
            Region::axis_box(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap(),
            Region::hull(vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.2, 1.0]]).unwrap(),
        ];
        let eps = 0.3;
        for s in shapes {
            let n = s.neighborhood(eps);
            assert!(n.open);
            for y in [[3.0, 1.0], [-2.0, -2.0], [0.5, 0.5], [1.1, 0.4]] {
                let want = (s.dist(&y) - eps).max(0.0);
                assert!(
                    (n.dist(&y) - want).abs() < 1e-12,
                    "dilated distance mismatch at {y:?}"
                );
            }
        }
    }

    #[test]
    fn point_dilates_to_ball() {
        let p = Region::point(vec![1.0, 1.0]);
        let b = p.neighborhood(0.5);
        assert!((b.dist(&[2.0, 1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nested_dilation_adds_radii() {
        let s = Region::hull(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let twice = s.neighborhood(0.2).neighborhood(0.3);
        let once = s.neighborhood(0.5);
        for y in [[2.0, 1.0], [-1.0, -1.0], [0.5, 0.2]] {
            assert!((twice.dist(&y) - once.dist(&y)).abs() < 1e-12);
        }
    }

    #[test]
    fn lens_intersection_is_nonempty() {
        let a = ball(&[0.0, 0.0], 2.0);
        let b = ball(&[1.0, 0.0], 2.0);
        let lens = a.intersect(&b).unwrap();
        let p = lens.representative_point();
        assert!(a.dist(&p) <= 1e-9 && b.dist(&p) <= 1e-9);
        // A point in both balls has lens distance 0.
        assert_eq!(lens.dist(&[0.5, 0.0]), 0.0);
        // A point in only one ball is at positive distance.
        assert!(lens.dist(&[-1.9, 0.0]) > 0.5);
    }

    #[test]
    fn lens_distance_matches_sampling() {
        let a = ball(&[0.0, 0.0], 2.0);
        let b = ball(&[3.0, 0.0], 2.0);
        let lens = a.intersect(&b).unwrap();
        let y = vec![1.5, 3.0];
        let mut best = f64::INFINITY;
        for p in raster(&[1.0, -2.0], &[2.0, 2.0], 0.01) {
            if a.dist(&p) <= 0.0 && b.dist(&p) <= 0.0 {
                best = best.min(geom::dist(&y, &p));
            }
        }
        assert!((lens.dist(&y) - best).abs() < 0.02, "{} vs {best}", lens.dist(&y));
    }

    #[test]
    fn disjoint_intersection_errors() {
        let a = ball(&[0.0, 0.0], 1.0);
        let b = ball(&[5.0, 0.0], 1.0);
        assert!(matches!(
            a.intersect(&b),
            Err(RegionError::EmptyIntersection)
        ));
    }

    #[test]
    fn intersection_idempotent_on_distance() {
        let a = ball(&[0.0, 0.0], 1.0);
        let aa = a.intersect(&a).unwrap();
        for y in [[2.0, 0.0], [0.0, 0.5], [-3.0, 1.0]] {
            assert!((a.dist(&y) - aa.dist(&y)).abs() < 1e-9);
        }
    }

    #[test]
    fn open_and_closed_membership() {
        let closed = ball(&[0.0], 1.0);
        assert!(closed.contains(&[1.0]));
        let open = closed.neighborhood(0.0);
        assert!(open.open);
        assert!(!open.contains(&[1.0]));
        assert!(open.contains(&[0.5]));
        let reclosed = open.closure();
        assert!(reclosed.contains(&[1.0]));
    }

    #[test]
    fn mask_roundtrip_and_distance() {
        let m = GridMask {
            origin: vec![0.0, 0.0],
            step: 1.0,
            shape: vec![3, 2],
            bits: vec![1, 0, 0, 0, 0, 1],
        };
        let r = Region::new(vec![Piece::Mask(m)], false).unwrap();
        // Occupied cells centered at (0,0) and (2,1); boxes of side 1.
        assert_eq!(r.dist(&[0.2, 0.3]), 0.0);
        assert!((r.dist(&[0.0, -1.5]) - 1.0).abs() < 1e-12);
        assert_eq!(r.dist(&[2.0, 1.0]), 0.0);
    }

    #[test]
    fn mask_dilation_is_outer() {
        let m = GridMask {
            origin: vec![0.0],
            step: 0.5,
            shape: vec![3],
            bits: vec![1, 0, 0],
        };
        let r = Region::new(vec![Piece::Mask(m)], false).unwrap();
        let d = r.neighborhood(0.4);
        // Every point of the true neighborhood must be covered.
        for x in [-0.6, -0.3, 0.0, 0.3, 0.64] {
            let true_dist = (r.dist(&[x]) - 0.4).max(0.0);
            if true_dist == 0.0 {
                assert_eq!(d.dist(&[x]), 0.0, "outer approximation lost {x}");
            }
        }
    }

    #[test]
    fn mask_intersection_is_inner() {
        let m = GridMask {
            origin: vec![0.0],
            step: 0.25,
            shape: vec![9],
            bits: vec![1; 9],
        };
        let r = Region::new(vec![Piece::Mask(m)], false).unwrap();
        let half = Region::axis_box(vec![0.8], vec![5.0]).unwrap();
        let both = r.intersect(&half).unwrap();
        // Certified cells lie inside both factors.
        for p in both.grid_samples(0.05) {
            assert!(r.dist(&p) <= 1e-9 && half.dist(&p) <= 1e-9);
        }
    }

    #[test]
    fn o_map_and_cellwise_intersection() {
        let phi = SetValuedMap::from_values(vec![
            ball(&[0.0, 0.0], 1.0),
            ball(&[4.0, 0.0], 1.0),
        ])
        .unwrap();
        let psi = SetValuedMap::constant(2, ball(&[0.0, 0.0], 1.5));
        let grown = phi.o_map(0.25);
        assert!((grown.value(0).dist(&[1.25, 0.0])).abs() < 1e-12);
        match grown.intersect(&psi) {
            Err(RegionError::EmptyCell { cell }) => assert_eq!(cell, 1),
            other => panic!("expected empty cell 1, got {other:?}"),
        }
        let psi_big = SetValuedMap::constant(2, ball(&[2.0, 0.0], 3.0));
        assert!(grown.intersect(&psi_big).is_ok());
    }

    #[test]
    fn eps_selection_reports_worst_cell() {
        let phi = SetValuedMap::from_values(vec![
            ball(&[0.0], 1.0),
            ball(&[10.0], 1.0),
            ball(&[20.0], 1.0),
        ])
        .unwrap();
        let f = vec![vec![0.5], vec![12.5], vec![20.9]];
        assert!(is_eps_selection(&f, &phi, 2.0).is_ok());
        match is_eps_selection(&f, &phi, 1.0) {
            Err(v) => {
                assert_eq!(v.cell, 1);
                assert!((v.dist - 1.5).abs() < 1e-12);
            }
            Ok(()) => panic!("expected a violation"),
        }
    }

    #[test]
    fn llc_constant_passes_and_jump_witnesses() {
        let path = |i: usize, len: usize| {
            let mut out = Vec::new();
            if i > 0 {
                out.push(i - 1);
            }
            if i + 1 < len {
                out.push(i + 1);
            }
            out
        };
        let constant = SetValuedMap::constant(4, ball(&[0.0], 1.0));
        assert!(is_llc(&constant, |i| path(i, 4), 1e-9).is_ok());

        let jump = SetValuedMap::from_values(vec![
            ball(&[0.0], 1.0),
            ball(&[10.0], 1.0),
        ])
        .unwrap();
        let w = is_llc(&jump, |i| path(i, 2), 1e-9).unwrap_err();
        assert_eq!((w.cell, w.neighbor), (0, 1));
    }

    #[test]
    fn llc_growing_balls_fixed_by_dilation() {
        // Radii grow along the cells: the shrink direction fails until the
        // mapping is dilated past the cell-to-cell gap.
        let radii = [1.0, 1.2, 1.4, 1.6];
        let phi = SetValuedMap::from_values(
            radii.iter().map(|&r| ball(&[0.0, 0.0], r)).collect(),
        )
        .unwrap();
        let path = |i: usize| {
            let mut out = Vec::new();
            if i > 0 {
                out.push(i - 1);
            }
            if i + 1 < 4 {
                out.push(i + 1);
            }
            out
        };
        let w = is_llc(&phi, path, 1e-9).unwrap_err();
        assert!(w.cell > w.neighbor, "failure must be in the shrink direction");
        // The largest cell-to-cell one-sided gap is 0.2.
        assert!(is_llc(&phi.o_map(0.21), path, 1e-9).is_ok());
        assert!(is_llc(&phi.o_map(0.05), path, 1e-9).is_err());
    }

    #[test]
    fn region_serde_roundtrip() {
        let r = Region::new(
            vec![
                Piece::Convex(ConvexCell {
                    prims: vec![
                        ConvexPrim::Ball { center: vec![0.0, 1.0], radius: 2.0, inflate: 0.0 },
                        ConvexPrim::Box { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0], inflate: 0.1 },
                    ],
                }),
                Piece::Mask(GridMask {
                    origin: vec![0.0, 0.0],
                    step: 0.5,
                    shape: vec![2, 2],
                    bits: vec![1, 1, 0, 1],
                }),
            ],
            true,
        )
        .unwrap();
        let json = serde_json::to_string(&r).unwrap();
        let back: Region = serde_json::from_str(&json).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn representative_point_lands_inside() {
        let shapes = vec![
            ball(&[2.0, 3.0], 0.7),
            Region::hull(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            ball(&[0.0, 0.0], 2.0).intersect(&ball(&[1.5, 0.0], 2.0)).unwrap(),
            ball(&[0.0, 0.0], 1.0).neighborhood(0.2),
        ];
        for s in shapes {
            let p = s.representative_point();
            assert!(s.contains(&p), "representative point escaped {s:?}");
        }
    }

    #[test]
    fn grid_samples_stay_inside() {
        let s = ball(&[0.0, 0.0], 1.0);
        let samples = s.grid_samples(0.3);
        assert!(!samples.is_empty());
        for p in samples {
            assert!(s.dist(&p) <= 1e-9);
        }
    }
}

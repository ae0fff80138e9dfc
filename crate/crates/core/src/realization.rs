//! Points of geometric realizations and piecewise-linear maps on them.
//!
//! A point of the realization of a complex is a finitely supported vector
//! of barycentric coordinates ([`BaryPoint`]); its carrier is the simplex
//! spanned by the positively weighted vertices.  Piecewise-linear maps
//! ([`PlMap`]) store values on the dyadic edgewise subdivision lattice of
//! every simplex (denominator `2^depth`) and interpolate affinely within
//! subdivision cells, so two maps agreeing on a shared face agree there by
//! construction: lattice points on the face have a single canonical key.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::complex::{ComplexError, Simplex, SimplicialComplex, SimplicialMap, VertexId};
use crate::geom::Point;

/// Weights smaller than this are dropped (with renormalization) when a
/// barycentric point is built, so supports are genuinely positive.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Tolerance on the barycentric weight sum accepted from callers; after
/// construction the stored weights sum to 1 up to rounding.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Errors raised by realization-level constructions.
#[derive(Debug, Error)]
pub enum RealizationError {
    /// A barycentric weight was negative.
    #[error("negative barycentric weight {weight} at {vertex}")]
    NegativeWeight { vertex: VertexId, weight: f64 },
    /// Weights did not sum to 1 within tolerance.
    #[error("barycentric weights sum to {sum}, not 1")]
    WeightSum { sum: f64 },
    /// All weights were dropped; a point needs nonempty support.
    #[error("barycentric point with empty support")]
    EmptySupport,
    /// A point's carrier is not a simplex of the complex being used.
    #[error("carrier {0} is not a simplex of the complex")]
    OutsideComplex(Simplex),
    /// A piecewise-linear map is missing a lattice value it should carry.
    #[error("missing value at lattice point of {0}")]
    MissingLattice(Simplex),
    /// Mixed value dimensions in one piecewise-linear map.
    #[error("value dimension mismatch: expected {expected}, got {got}")]
    ValueDim { expected: usize, got: usize },
    /// The underlying vertex assignment failed (unmapped vertex etc.).
    #[error(transparent)]
    Complex(#[from] ComplexError),
}

/// A finitely supported barycentric coordinate vector: positive weights on
/// a finite vertex set, summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BaryPoint {
    /// Sorted by vertex; all weights strictly positive.
    coords: Vec<(VertexId, f64)>,
}

impl BaryPoint {
    /// Builds a point from (vertex, weight) pairs.  Duplicate vertices are
    /// merged by summation, weights below [`WEIGHT_FLOOR`] are dropped and
    /// the remainder renormalized.  Fails on negative weights, an empty
    /// result, or a weight sum away from 1.
    pub fn new(
        coords: impl IntoIterator<Item = (VertexId, f64)>,
    ) -> Result<Self, RealizationError> {
        let mut merged: BTreeMap<VertexId, f64> = BTreeMap::new();
        for (v, w) in coords {
            if w < 0.0 {
                return Err(RealizationError::NegativeWeight { vertex: v, weight: w });
            }
            *merged.entry(v).or_insert(0.0) += w;
        }
        let sum: f64 = merged.values().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(RealizationError::WeightSum { sum });
        }
        let kept: Vec<(VertexId, f64)> = merged
            .into_iter()
            .filter(|(_, w)| *w >= WEIGHT_FLOOR)
            .collect();
        if kept.is_empty() {
            return Err(RealizationError::EmptySupport);
        }
        let kept_sum: f64 = kept.iter().map(|(_, w)| w).sum();
        Ok(BaryPoint {
            coords: kept
                .into_iter()
                .map(|(v, w)| (v, w / kept_sum))
                .collect(),
        })
    }

    /// The point sitting at a single vertex.
    pub fn vertex(v: VertexId) -> Self {
        BaryPoint {
            coords: vec![(v, 1.0)],
        }
    }

    /// Weight of `v` (zero off the support).
    pub fn weight(&self, v: &VertexId) -> f64 {
        self.coords
            .binary_search_by(|(u, _)| u.cmp(v))
            .map(|i| self.coords[i].1)
            .unwrap_or(0.0)
    }

    /// The support as sorted (vertex, weight) pairs.
    pub fn coords(&self) -> &[(VertexId, f64)] {
        &self.coords
    }

    /// The carrier: the simplex spanned by the support, i.e. the unique
    /// smallest simplex whose realization contains this point.
    pub fn carrier(&self) -> Simplex {
        Simplex::new(self.coords.iter().map(|(v, _)| v.clone()))
            .expect("support is nonempty by construction")
    }

    /// Whether the point lies in the open star of `v`, i.e. has positive
    /// weight there.
    pub fn in_open_star(&self, v: &VertexId) -> bool {
        self.weight(v) > 0.0
    }

    /// Componentwise comparison within `tol`, also requiring equal supports.
    pub fn approx_eq(&self, other: &BaryPoint, tol: f64) -> bool {
        self.coords.len() == other.coords.len()
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|((v, w), (u, x))| v == u && (w - x).abs() <= tol)
    }
}

/// The affine extension of a vertex assignment: pushes barycentric weights
/// forward along `g`, merging weights of vertices with a common image.
/// Exact in floating point up to the additions at merged vertices.
pub fn affine_extension(
    g: &SimplicialMap,
    p: &BaryPoint,
) -> Result<BaryPoint, RealizationError> {
    let mut merged: BTreeMap<VertexId, f64> = BTreeMap::new();
    for (v, w) in p.coords() {
        match g.image(v) {
            Some(u) => *merged.entry(u.clone()).or_insert(0.0) += w,
            None => return Err(ComplexError::UnmappedVertex(v.clone()).into()),
        }
    }
    Ok(BaryPoint {
        coords: merged.into_iter().collect(),
    })
}

/// Canonical key of a subdivision lattice point: the carrier vertices with
/// their positive numerators over `2^depth`.  Shared faces of different
/// simplices produce identical keys.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct LatticeKey(Vec<(VertexId, u32)>);

impl LatticeKey {
    /// Builds a key from (vertex, numerator) pairs; drops zero numerators
    /// and sorts by vertex.  The numerators must sum to `2^depth` of the
    /// lattice the key is used with, which is not checked here.
    pub fn new(pairs: Vec<(VertexId, u32)>) -> Self {
        let mut pairs: Vec<(VertexId, u32)> =
            pairs.into_iter().filter(|(_, a)| *a > 0).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
        LatticeKey(pairs)
    }

    /// Key of the lattice point sitting at a vertex (numerator `2^depth`).
    pub fn vertex(v: VertexId, depth: u32) -> Self {
        LatticeKey(vec![(v, 1u32 << depth)])
    }

    /// The (vertex, numerator) pairs.
    pub fn pairs(&self) -> &[(VertexId, u32)] {
        &self.0
    }

    /// The barycentric point this key denotes.
    pub fn to_point(&self, depth: u32) -> BaryPoint {
        let denom = (1u32 << depth) as f64;
        BaryPoint {
            coords: self
                .0
                .iter()
                .map(|(v, a)| (v.clone(), *a as f64 / denom))
                .collect(),
        }
    }

    /// The carrier simplex of the denoted point.
    pub fn carrier(&self) -> Simplex {
        Simplex::new(self.0.iter().map(|(v, _)| v.clone())).expect("nonempty key")
    }
}

/// All dyadic lattice points of `s` at the given depth: barycentric
/// numerators over `2^depth`, including points on proper faces.  Returned
/// in lexicographic numerator order; the count is `C(2^depth + d, d)` for
/// `d = s.dim()`.
pub fn subdivision_lattice(s: &Simplex, depth: u32) -> Vec<BaryPoint> {
    let n = 1u32 << depth;
    let verts = s.vertices();
    let mut out = Vec::new();
    let mut nums = vec![0u32; verts.len()];
    fn rec(
        verts: &[VertexId],
        nums: &mut Vec<u32>,
        i: usize,
        left: u32,
        out: &mut Vec<BaryPoint>,
        denom: f64,
    ) {
        if i + 1 == nums.len() {
            nums[i] = left;
            out.push(BaryPoint {
                coords: verts
                    .iter()
                    .zip(nums.iter())
                    .filter(|(_, a)| **a > 0)
                    .map(|(v, a)| (v.clone(), *a as f64 / denom))
                    .collect(),
            });
            return;
        }
        for a in 0..=left {
            nums[i] = a;
            rec(verts, nums, i + 1, left - a, out, denom);
        }
    }
    rec(verts, &mut nums, 0, n, &mut out, n as f64);
    out
}

/// A piecewise-linear map from the realization of a complex into Euclidean
/// space: values at every subdivision lattice point, interpolated affinely
/// within the cells of the edgewise subdivision.
#[derive(Clone, Debug)]
pub struct PlMap {
    complex: Arc<SimplicialComplex>,
    depth: u32,
    value_dim: usize,
    values: BTreeMap<LatticeKey, Point>,
}

/// Default subdivision depth for lattices and sampled verification.
pub const DEFAULT_DEPTH: u32 = 3;

impl PlMap {
    /// Samples `f` at every lattice point of every simplex of `complex`.
    /// Lattice points shared by several simplices are evaluated once.
    pub fn sample(
        complex: Arc<SimplicialComplex>,
        depth: u32,
        f: impl Fn(&BaryPoint) -> Point,
    ) -> Result<Self, RealizationError> {
        let mut values: BTreeMap<LatticeKey, Point> = BTreeMap::new();
        let mut value_dim: Option<usize> = None;
        // Maximal simplices suffice: faces contribute only sub-lattices.
        for s in complex.maximal_simplices() {
            for p in subdivision_lattice(&s, depth) {
                let key = lattice_key_of(&p, depth);
                if values.contains_key(&key) {
                    continue;
                }
                let val = f(&p);
                match value_dim {
                    None => value_dim = Some(val.len()),
                    Some(d) if d != val.len() => {
                        return Err(RealizationError::ValueDim {
                            expected: d,
                            got: val.len(),
                        })
                    }
                    _ => {}
                }
                values.insert(key, val);
            }
        }
        Ok(PlMap {
            complex,
            depth,
            value_dim: value_dim.unwrap_or(0),
            values,
        })
    }

    /// Builds a map from explicit lattice values, checking completeness.
    pub fn from_values(
        complex: Arc<SimplicialComplex>,
        depth: u32,
        values: BTreeMap<LatticeKey, Point>,
    ) -> Result<Self, RealizationError> {
        let mut value_dim = None;
        for s in complex.maximal_simplices() {
            for p in subdivision_lattice(&s, depth) {
                let key = lattice_key_of(&p, depth);
                match values.get(&key) {
                    None => return Err(RealizationError::MissingLattice(s.clone())),
                    Some(v) => match value_dim {
                        None => value_dim = Some(v.len()),
                        Some(d) if d != v.len() => {
                            return Err(RealizationError::ValueDim {
                                expected: d,
                                got: v.len(),
                            })
                        }
                        _ => {}
                    },
                }
            }
        }
        Ok(PlMap {
            complex,
            depth,
            value_dim: value_dim.unwrap_or(0),
            values,
        })
    }

    /// The complex this map is defined on.
    pub fn complex(&self) -> &Arc<SimplicialComplex> {
        &self.complex
    }

    /// Subdivision depth of the value lattice.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Dimension of the value space.
    pub fn value_dim(&self) -> usize {
        self.value_dim
    }

    /// Stored lattice values in key order.
    pub fn values(&self) -> impl Iterator<Item = (&LatticeKey, &Point)> {
        self.values.iter()
    }

    /// Value at a complex vertex.
    pub fn vertex_value(&self, v: &VertexId) -> Option<&Point> {
        self.values.get(&LatticeKey::vertex(v.clone(), self.depth))
    }

    /// Value stored at an exact lattice key.
    pub fn lattice_value(&self, key: &LatticeKey) -> Option<&Point> {
        self.values.get(key)
    }

    /// Evaluates the map at `p` by affine interpolation within the
    /// edgewise-subdivision cell containing it.
    ///
    /// Exact (a plain lookup) at lattice points, and reproduces affine
    /// functions exactly everywhere.  Fails if the carrier of `p` is not a
    /// simplex of the underlying complex.
    pub fn eval(&self, p: &BaryPoint) -> Result<Point, RealizationError> {
        let carrier = p.carrier();
        if !self.complex.contains(&carrier) {
            return Err(RealizationError::OutsideComplex(carrier));
        }
        let verts = carrier.vertices();
        let d = verts.len() - 1;
        let n = 1u32 << self.depth;
        if d == 0 {
            let key = LatticeKey::vertex(verts[0].clone(), self.depth);
            return self
                .values
                .get(&key)
                .cloned()
                .ok_or_else(|| RealizationError::MissingLattice(carrier.clone()));
        }
        // Cumulative coordinates u_i = sum of weights of verts[i..], scaled
        // by the lattice denominator.  1 >= u_1 >= ... >= u_d > 0 strictly
        // inside (0, 1) because all carrier weights are positive.
        let weights: Vec<f64> = verts.iter().map(|v| p.weight(v)).collect();
        let mut x = vec![0.0f64; d + 1];
        x[d] = weights[d];
        for i in (1..d).rev() {
            x[i] = x[i + 1] + weights[i];
        }
        for xi in x.iter_mut().skip(1) {
            *xi *= n as f64;
        }
        let mut floor = vec![0u32; d + 1];
        let mut frac = vec![0.0f64; d + 1];
        for i in 1..=d {
            let k = x[i].floor();
            floor[i] = k as u32;
            frac[i] = x[i] - k;
        }
        // Walk the cell path: indices sorted by descending fractional part,
        // ties broken toward the smaller index so the path stays inside the
        // order polytope of cumulative coordinates.
        let mut order: Vec<usize> = (1..=d).collect();
        order.sort_by(|&a, &b| {
            frac[b]
                .partial_cmp(&frac[a])
                .expect("NaN fractional part")
                .then(a.cmp(&b))
        });
        let mut corner = floor.clone();
        let mut path: Vec<(Vec<u32>, f64)> = Vec::with_capacity(d + 1);
        path.push((corner.clone(), 1.0 - frac[order[0]]));
        for (j, &i) in order.iter().enumerate() {
            corner[i] += 1;
            let w = if j + 1 < order.len() {
                frac[i] - frac[order[j + 1]]
            } else {
                frac[i]
            };
            path.push((corner.clone(), w));
        }
        let mut out = vec![0.0f64; self.value_dim];
        for (y, w) in path {
            if w <= 0.0 {
                continue;
            }
            let key = cumulative_to_key(verts, &y, n);
            let val = self
                .values
                .get(&key)
                .ok_or_else(|| RealizationError::MissingLattice(carrier.clone()))?;
            for (o, v) in out.iter_mut().zip(val) {
                *o += w * v;
            }
        }
        Ok(out)
    }

    /// Largest distance between values at the corners of any one subdivision
    /// cell, divided by the corner spacing in the L1 coordinate metric: a
    /// Lipschitz bound for the interpolation with respect to that metric.
    pub fn lipschitz_l1(&self) -> f64 {
        let n = 1u32 << self.depth;
        let spacing = 2.0 / n as f64;
        let mut worst = 0.0f64;
        // Corner pairs of a cell differ by one cumulative step; bounding by
        // adjacent lattice pairs along every axis-and-diagonal of each
        // simplex covers all cell edges.  Enumerate per maximal simplex.
        for s in self.complex.maximal_simplices() {
            let verts = s.vertices();
            let d = verts.len() - 1;
            if d == 0 {
                continue;
            }
            for p in subdivision_lattice(&s, self.depth) {
                let key = lattice_key_of(&p, self.depth);
                let base = match self.values.get(&key) {
                    Some(v) => v,
                    None => continue,
                };
                let cum = key_to_cumulative(verts, &key);
                // Step each cumulative coordinate up by one where legal.
                for i in 1..=d {
                    let mut c2 = cum.clone();
                    c2[i] += 1;
                    let legal = c2[i] <= n && (i == 1 || c2[i] <= c2[i - 1]);
                    if !legal {
                        continue;
                    }
                    let k2 = cumulative_to_key(verts, &c2, n);
                    if let Some(v2) = self.values.get(&k2) {
                        let dd = crate::geom::dist(base, v2);
                        worst = worst.max(dd / spacing);
                    }
                }
            }
        }
        worst
    }
}

/// Canonical lattice key of a barycentric point whose weights are exact
/// multiples of `2^-depth` (used for lattice enumeration; weights are
/// rounded to the nearest numerator).
pub fn lattice_key_of(p: &BaryPoint, depth: u32) -> LatticeKey {
    let n = (1u32 << depth) as f64;
    LatticeKey::new(
        p.coords()
            .iter()
            .map(|(v, w)| (v.clone(), (w * n).round() as u32))
            .filter(|(_, a)| *a > 0)
            .collect(),
    )
}

/// Nearest lattice point of an arbitrary barycentric point: numerators by
/// largest remainder, so they sum to `2^depth` exactly and the support
/// stays inside the carrier.  Ties broken by vertex order.
pub fn snap_to_lattice(p: &BaryPoint, depth: u32) -> LatticeKey {
    let n = 1u32 << depth;
    let mut nums: Vec<(VertexId, u32, f64)> = p
        .coords()
        .iter()
        .map(|(v, w)| {
            let s = w * n as f64;
            (v.clone(), s.floor() as u32, s - s.floor())
        })
        .collect();
    let total: u32 = nums.iter().map(|(_, a, _)| *a).sum();
    let mut order: Vec<usize> = (0..nums.len()).collect();
    order.sort_by(|&i, &j| {
        nums[j]
            .2
            .partial_cmp(&nums[i].2)
            .unwrap()
            .then(nums[i].0.cmp(&nums[j].0))
    });
    for &i in order.iter().take((n - total.min(n)) as usize) {
        nums[i].1 += 1;
    }
    LatticeKey::new(
        nums.into_iter()
            .map(|(v, a, _)| (v, a))
            .filter(|(_, a)| *a > 0)
            .collect(),
    )
}

/// Converts a cumulative-coordinate corner `y` (with `y[0]` unused) over
/// the sorted vertex list into a canonical lattice key.
fn cumulative_to_key(verts: &[VertexId], y: &[u32], n: u32) -> LatticeKey {
    let d = verts.len() - 1;
    let mut pairs = Vec::with_capacity(d + 1);
    for i in 0..=d {
        let a = if i == 0 {
            n - y[1]
        } else if i < d {
            y[i] - y[i + 1]
        } else {
            y[d]
        };
        if a > 0 {
            pairs.push((verts[i].clone(), a));
        }
    }
    LatticeKey::new(pairs)
}

/// Inverse of [`cumulative_to_key`] for keys supported on faces of `verts`.
fn key_to_cumulative(verts: &[VertexId], key: &LatticeKey) -> Vec<u32> {
    let d = verts.len() - 1;
    let mut nums = vec![0u32; d + 1];
    for (v, a) in key.pairs() {
        let i = verts
            .iter()
            .position(|u| u == v)
            .expect("key vertex not in simplex");
        nums[i] = *a;
    }
    let mut y = vec![0u32; d + 1];
    for i in (1..=d).rev() {
        y[i] = nums[i] + if i < d { y[i + 1] } else { 0 };
    }
    y
}

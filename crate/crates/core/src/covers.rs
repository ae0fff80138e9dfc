//! Grid domains, finite covers, partitions of unity, and canonical maps
//! into nerves.
//!
//! The domain is a finite rectangular grid in one or two dimensions with
//! the Euclidean metric of the embedded points.  A cover assigns each
//! member an explicit point set; members built from shapes pick up every
//! grid point within half a grid step of the shape, so touching shapes
//! overlap the way their continuous counterparts do.  Partition-of-unity
//! weights are proportional to the exact distance from a point to the
//! complement of each member, computed by a separable distance transform.

use std::collections::HashMap;
use std::sync::Arc;

use itertools::Itertools;
use thiserror::Error;

use crate::complex::{Simplex, SimplicialComplex, SimplicialMap, VertexId};
use crate::geom::{self, Point};
use crate::realization::BaryPoint;

/// Largest per-point member count for which the full nerve is enumerated.
const NERVE_ORDER_GUARD: usize = 16;

/// Errors raised by cover construction and refinement.
#[derive(Debug, Error)]
pub enum CoverError {
    /// A member contains no grid point.
    #[error("member {label} contains no grid point")]
    EmptyMember { label: String },
    /// Two members share a label.
    #[error("duplicate member label {label}")]
    DuplicateLabel { label: String },
    /// The member sets miss a grid point.
    #[error("grid point {point} is not covered by any member")]
    Uncovered { point: usize },
    /// The full nerve would be too large to enumerate.
    #[error("nerve order {order} exceeds the enumeration guard {NERVE_ORDER_GUARD}")]
    NerveTooLarge { order: usize },
    /// A member of the finer cover fits in no member of the coarser one.
    #[error("member {label} is contained in no member of the coarser cover")]
    NotRefining { label: String },
    /// A refinement construction violated its target property.
    #[error("refinement failed: {0}")]
    RefinementFailed(String),
    /// Covers over different domains were combined.
    #[error("covers live over different domains")]
    DomainMismatch,
}

/// A set of grid-point indices, packed into machine words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PointSet {
    len: usize,
    words: Vec<u64>,
}

impl PointSet {
    /// The empty set over `len` points.
    pub fn empty(len: usize) -> Self {
        PointSet {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    /// Builds from explicit indices.
    pub fn from_indices(len: usize, indices: &[usize]) -> Self {
        let mut s = PointSet::empty(len);
        for &i in indices {
            s.insert(i);
        }
        s
    }

    /// Number of addressable points.
    pub fn universe_len(&self) -> usize {
        self.len
    }

    /// Adds a point.
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    /// Membership test.
    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    /// Number of points in the set.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Whether the set has no points.
    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Whether the two sets share a point.
    pub fn intersects(&self, other: &PointSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    /// Whether `self` is contained in `other`.
    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// In-place union.
    pub fn union_with(&mut self, other: &PointSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// In-place intersection.
    pub fn intersect_with(&mut self, other: &PointSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= b;
        }
    }

    /// Iterates the indices in the set, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&i| self.contains(i))
    }
}

/// A finite rectangular grid in the plane or on the line.
#[derive(Clone, Debug)]
pub struct Domain {
    origin: Point,
    step: f64,
    shape: Vec<usize>,
    points: Vec<Point>,
}

impl Domain {
    /// Evenly spaced points `origin + i * step`, `i < len`.
    pub fn grid_1d(origin: f64, step: f64, len: usize) -> Arc<Domain> {
        Domain::grid(vec![origin], step, vec![len])
    }

    /// A rectangular grid; the first axis varies fastest in index order.
    pub fn grid_2d(origin: [f64; 2], step: f64, shape: [usize; 2]) -> Arc<Domain> {
        Domain::grid(origin.to_vec(), step, shape.to_vec())
    }

    fn grid(origin: Point, step: f64, shape: Vec<usize>) -> Arc<Domain> {
        assert!(step > 0.0, "grid step must be positive");
        assert!(!shape.is_empty() && shape.iter().all(|&n| n > 0));
        let total: usize = shape.iter().product();
        let mut points = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let p: Point = shape
                .iter()
                .zip(&origin)
                .map(|(&n, o)| {
                    let c = rem % n;
                    rem /= n;
                    o + c as f64 * step
                })
                .collect();
            points.push(p);
        }
        Arc::new(Domain {
            origin,
            step,
            shape,
            points,
        })
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Whether the grid is empty (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Spatial dimension (1 or 2).
    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    /// Grid spacing.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Points per axis.
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// All grid points in index order.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// The grid point at `i`.
    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    /// Integer coordinates of point `i`.
    pub fn coords_of(&self, mut i: usize) -> Vec<usize> {
        self.shape
            .iter()
            .map(|&n| {
                let c = i % n;
                i /= n;
                c
            })
            .collect()
    }

    /// Index of the point with the given integer coordinates.
    pub fn index_of(&self, coords: &[usize]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (c, &n) in coords.iter().zip(&self.shape) {
            debug_assert!(*c < n);
            idx += c * stride;
            stride *= n;
        }
        idx
    }

    /// Indices one grid step away along an axis.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let coords = self.coords_of(i);
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            if coords[axis] > 0 {
                let mut c = coords.clone();
                c[axis] -= 1;
                out.push(self.index_of(&c));
            }
            if coords[axis] + 1 < self.shape[axis] {
                let mut c = coords.clone();
                c[axis] += 1;
                out.push(self.index_of(&c));
            }
        }
        out
    }

    /// Index of the grid point nearest to `p` (coordinates clamped to the
    /// grid range).
    pub fn nearest_index(&self, p: &[f64]) -> usize {
        let coords: Vec<usize> = p
            .iter()
            .zip(&self.origin)
            .zip(&self.shape)
            .map(|((x, o), &n)| {
                let c = ((x - o) / self.step).round();
                c.clamp(0.0, (n - 1) as f64) as usize
            })
            .collect();
        self.index_of(&coords)
    }

    /// Diameter of the grid's bounding box.
    pub fn diameter(&self) -> f64 {
        self.shape
            .iter()
            .map(|&n| ((n - 1) as f64 * self.step).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Squared distances from every grid point to the nearest source
    /// point, by separable exact distance transforms along each axis.
    pub fn edt_squared(&self, is_source: impl Fn(usize) -> bool) -> Vec<f64> {
        let total = self.len();
        let mut field: Vec<f64> = (0..total)
            .map(|i| if is_source(i) { 0.0 } else { f64::INFINITY })
            .collect();
        match self.dim() {
            1 => geom::edt_1d(&field, self.step),
            2 => {
                let (n0, n1) = (self.shape[0], self.shape[1]);
                for j in 0..n1 {
                    let row: Vec<f64> = (0..n0).map(|i| field[i + n0 * j]).collect();
                    let out = geom::edt_1d(&row, self.step);
                    for i in 0..n0 {
                        field[i + n0 * j] = out[i];
                    }
                }
                for i in 0..n0 {
                    let col: Vec<f64> = (0..n1).map(|j| field[i + n0 * j]).collect();
                    let out = geom::edt_1d(&col, self.step);
                    for j in 0..n1 {
                        field[i + n0 * j] = out[j];
                    }
                }
                field
            }
            d => unreachable!("unsupported grid dimension {d}"),
        }
    }
}

/// Shape specifications for cover members.
#[derive(Clone, Debug)]
pub enum MemberShape {
    /// Grid points within half a step of the closed ball.
    Ball { center: Point, radius: f64 },
    /// Grid points within half a step of the closed axis box.
    Box { lo: Point, hi: Point },
    /// Exactly the listed grid-point indices.
    Points(Vec<usize>),
}

impl MemberShape {
    fn to_set(&self, domain: &Domain) -> PointSet {
        let mut set = PointSet::empty(domain.len());
        match self {
            MemberShape::Ball { center, radius } => {
                let margin = 0.5 * domain.step();
                for (i, p) in domain.points().iter().enumerate() {
                    if (geom::dist(p, center) - radius).max(0.0) < margin {
                        set.insert(i);
                    }
                }
            }
            MemberShape::Box { lo, hi } => {
                let margin = 0.5 * domain.step();
                for (i, p) in domain.points().iter().enumerate() {
                    let d: f64 = p
                        .iter()
                        .zip(lo.iter().zip(hi))
                        .map(|(x, (l, h))| {
                            let e = (l - x).max(0.0).max(x - h);
                            e * e
                        })
                        .sum::<f64>()
                        .sqrt();
                    if d < margin {
                        set.insert(i);
                    }
                }
            }
            MemberShape::Points(indices) => {
                for &i in indices {
                    set.insert(i);
                }
            }
        }
        set
    }
}

/// A finite cover of the domain: labeled point sets whose union is the
/// whole grid.
#[derive(Clone, Debug)]
pub struct Cover {
    domain: Arc<Domain>,
    labels: Vec<String>,
    sets: Vec<PointSet>,
}

impl Cover {
    /// Builds members from shapes, with the half-step inclusion margin.
    pub fn from_shapes(
        domain: Arc<Domain>,
        members: Vec<(String, MemberShape)>,
    ) -> Result<Cover, CoverError> {
        let sets: Vec<PointSet> = members.iter().map(|(_, s)| s.to_set(&domain)).collect();
        let labels = members.into_iter().map(|(l, _)| l).collect();
        Cover::from_sets(domain, labels, sets)
    }

    /// Builds from explicit point sets, checking labels, nonemptiness, and
    /// coverage.
    pub fn from_sets(
        domain: Arc<Domain>,
        labels: Vec<String>,
        sets: Vec<PointSet>,
    ) -> Result<Cover, CoverError> {
        assert_eq!(labels.len(), sets.len());
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if seen.insert(l.clone(), i).is_some() {
                return Err(CoverError::DuplicateLabel { label: l.clone() });
            }
        }
        for (l, s) in labels.iter().zip(&sets) {
            if s.is_empty() {
                return Err(CoverError::EmptyMember { label: l.clone() });
            }
        }
        let mut union = PointSet::empty(domain.len());
        for s in &sets {
            union.union_with(s);
        }
        for i in 0..domain.len() {
            if !union.contains(i) {
                return Err(CoverError::Uncovered { point: i });
            }
        }
        Ok(Cover {
            domain,
            labels,
            sets,
        })
    }

    /// The underlying grid.
    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    /// Number of members.
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    /// Whether the cover has no members (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Label of member `i`.
    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Point set of member `i`.
    pub fn member(&self, i: usize) -> &PointSet {
        &self.sets[i]
    }

    /// Nerve vertex for member `i`.
    pub fn vertex(&self, i: usize) -> VertexId {
        VertexId::from(self.labels[i].as_str())
    }

    /// Member index for a nerve vertex.
    pub fn member_index(&self, v: &VertexId) -> Option<usize> {
        self.labels.iter().position(|l| l.as_str() == v.label())
    }

    /// Indices of the members containing grid point `x`, in member order.
    pub fn sigma_at(&self, x: usize) -> Vec<usize> {
        (0..self.len()).filter(|&m| self.sets[m].contains(x)).collect()
    }

    /// Largest number of members meeting at one point.
    pub fn order(&self) -> usize {
        (0..self.domain.len())
            .map(|x| self.sets.iter().filter(|s| s.contains(x)).count())
            .max()
            .unwrap_or(0)
    }

    /// Common points of a set of members.
    pub fn common_points(&self, members: &[usize]) -> PointSet {
        let mut acc = match members.first() {
            Some(&m) => self.sets[m].clone(),
            None => return PointSet::empty(self.domain.len()),
        };
        for &m in &members[1..] {
            acc.intersect_with(&self.sets[m]);
        }
        acc
    }

    /// The full nerve: every member set with a common grid point.  Guarded
    /// by the cover order, since the enumeration is exponential in it.
    pub fn nerve(&self) -> Result<SimplicialComplex, CoverError> {
        let order = self.order();
        if order > NERVE_ORDER_GUARD {
            return Err(CoverError::NerveTooLarge { order });
        }
        let mut simplices = std::collections::BTreeSet::new();
        for x in 0..self.domain.len() {
            let sigma = self.sigma_at(x);
            for card in 1..=sigma.len() {
                for subset in sigma.iter().combinations(card) {
                    let verts: Vec<VertexId> =
                        subset.into_iter().map(|&m| self.vertex(m)).collect();
                    simplices.insert(Simplex::new(verts).expect("nonempty subset"));
                }
            }
        }
        Ok(SimplicialComplex::from_closed_set(simplices))
    }

    /// The k-skeleton of the nerve, enumerated directly (polynomial in the
    /// cover order, so no guard is needed).
    pub fn nerve_skeleton(&self, k: usize) -> SimplicialComplex {
        let mut simplices = std::collections::BTreeSet::new();
        for x in 0..self.domain.len() {
            let sigma = self.sigma_at(x);
            for card in 1..=sigma.len().min(k + 1) {
                for subset in sigma.iter().combinations(card) {
                    let verts: Vec<VertexId> =
                        subset.into_iter().map(|&m| self.vertex(m)).collect();
                    simplices.insert(Simplex::new(verts).expect("nonempty subset"));
                }
            }
        }
        SimplicialComplex::from_closed_set(simplices)
    }

    /// Distance from every grid point to the complement of member `m`
    /// (zero outside the member).  A member covering the whole grid gets
    /// the domain diameter plus one.
    pub fn member_depth(&self, m: usize) -> Vec<f64> {
        let set = &self.sets[m];
        if set.count() == self.domain.len() {
            return vec![self.domain.diameter() + 1.0; self.domain.len()];
        }
        self.domain
            .edt_squared(|i| !set.contains(i))
            .into_iter()
            .map(f64::sqrt)
            .collect()
    }

    /// For each grid point, the largest member depth and the first member
    /// attaining it; the minimum of the depths over the grid is the
    /// cover's grid Lebesgue number.
    pub fn deepest_members(&self) -> (Vec<f64>, Vec<usize>) {
        let n = self.domain.len();
        let mut best = vec![0.0f64; n];
        let mut arg = vec![0usize; n];
        for m in 0..self.len() {
            let depth = self.member_depth(m);
            for i in 0..n {
                if depth[i] > best[i] {
                    best[i] = depth[i];
                    arg[i] = m;
                }
            }
        }
        (best, arg)
    }

    /// Grid Lebesgue number: every point has some member containing all
    /// grid points strictly closer than this.
    pub fn lebesgue_number(&self) -> f64 {
        let (best, _) = self.deepest_members();
        best.into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Partition-of-unity weights subordinated to a cover: each weight is the
/// member's complement distance normalized over the members at the point.
#[derive(Clone, Debug)]
pub struct PartitionOfUnity {
    depths: Vec<Vec<f64>>,
    totals: Vec<f64>,
}

impl PartitionOfUnity {
    /// Computes the weight tables for a cover.
    pub fn new(cover: &Cover) -> PartitionOfUnity {
        let depths: Vec<Vec<f64>> = (0..cover.len()).map(|m| cover.member_depth(m)).collect();
        let n = cover.domain().len();
        let totals: Vec<f64> = (0..n)
            .map(|i| depths.iter().map(|d| d[i]).sum())
            .collect();
        debug_assert!(totals.iter().all(|&t| t > 0.0));
        PartitionOfUnity { depths, totals }
    }

    /// Weight of member `m` at grid point `x`.
    pub fn weight(&self, m: usize, x: usize) -> f64 {
        self.depths[m][x] / self.totals[x]
    }
}

/// The canonical map of a cover: each grid point goes to the point of the
/// nerve whose barycentric coordinates are the partition-of-unity weights.
#[derive(Clone, Debug)]
pub struct CanonicalMap {
    cover: Arc<Cover>,
    pou: PartitionOfUnity,
}

impl CanonicalMap {
    pub fn new(cover: Arc<Cover>) -> CanonicalMap {
        let pou = PartitionOfUnity::new(&cover);
        CanonicalMap { cover, pou }
    }

    pub fn cover(&self) -> &Arc<Cover> {
        &self.cover
    }

    pub fn pou(&self) -> &PartitionOfUnity {
        &self.pou
    }

    /// Image of grid point `x` as a barycentric point of the nerve.
    pub fn eval(&self, x: usize) -> BaryPoint {
        let coords: Vec<(VertexId, f64)> = (0..self.cover.len())
            .filter_map(|m| {
                let w = self.pou.weight(m, x);
                if w > 0.0 {
                    Some((self.cover.vertex(m), w))
                } else {
                    None
                }
            })
            .collect();
        BaryPoint::new(coords).expect("partition-of-unity weights are barycentric")
    }
}

/// Failure found by [`verify_canonical`].
#[derive(Clone, Debug)]
pub enum CanonicalViolation {
    /// The image lies in the open star of a member the point is outside.
    StarEscape { point: usize, member: String },
    /// The carrier's members share no grid point.
    PhantomCarrier { point: usize },
}

/// Verifies the canonical-map characterization by two independent routes:
/// open-star membership of the image implies set membership of the point,
/// and the carrier of the image is a genuine nerve simplex (its members
/// intersect).  Both are exact point-set computations.
pub fn verify_canonical(cmap: &CanonicalMap) -> Result<(), CanonicalViolation> {
    let cover = cmap.cover();
    for x in 0..cover.domain().len() {
        let image = cmap.eval(x);
        for m in 0..cover.len() {
            let v = cover.vertex(m);
            if image.in_open_star(&v) && !cover.member(m).contains(x) {
                return Err(CanonicalViolation::StarEscape {
                    point: x,
                    member: cover.label(m).to_string(),
                });
            }
        }
        let carrier_members: Vec<usize> = image
            .carrier()
            .vertices()
            .iter()
            .map(|v| cover.member_index(v).expect("carrier vertex is a member"))
            .collect();
        if cover.common_points(&carrier_members).is_empty() {
            return Err(CanonicalViolation::PhantomCarrier { point: x });
        }
    }
    Ok(())
}

/// For each member of `fine`, the first member of `coarse` containing it;
/// the resulting vertex map carries the nerve of `fine` simplicially into
/// the nerve of `coarse`.
pub fn refining_map(fine: &Cover, coarse: &Cover) -> Result<SimplicialMap, CoverError> {
    if !Arc::ptr_eq(fine.domain(), coarse.domain())
        && fine.domain().len() != coarse.domain().len()
    {
        return Err(CoverError::DomainMismatch);
    }
    let mut map = SimplicialMap::new([]);
    for i in 0..fine.len() {
        let target = (0..coarse.len())
            .find(|&j| fine.member(i).is_subset(coarse.member(j)))
            .ok_or_else(|| CoverError::NotRefining {
                label: fine.label(i).to_string(),
            })?;
        map.insert(fine.vertex(i), coarse.vertex(target));
    }
    Ok(map)
}

/// A refinement of a cover together with the member-containment vertex
/// map back to the original.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub refined: Cover,
    pub to_original: SimplicialMap,
}

/// Builds a star refinement: a finer cover in which the whole star of
/// every member (the union of all members meeting it) fits inside a
/// single member of the original cover.
///
/// Members are grid balls of radius a quarter of the cover's Lebesgue
/// number, one per grid point, deduplicated; each maps to the deepest
/// original member at its center.  The star property is then verified
/// exactly on the point sets, so a returned refinement is correct by
/// construction, for arbitrary input covers.
pub fn star_refinement(cover: &Cover) -> Result<Refinement, CoverError> {
    let domain = cover.domain().clone();
    let n = domain.len();
    let (best, arg) = cover.deepest_members();
    let lambda = best.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if !(lambda > 0.0) {
        return Err(CoverError::RefinementFailed(
            "cover has zero Lebesgue number".into(),
        ));
    }
    let radius = 0.25 * lambda + 1e-12;

    // One candidate ball per grid point, deduplicated by point set.
    let mut sets: Vec<PointSet> = Vec::new();
    let mut targets: Vec<usize> = Vec::new();
    let mut seen: HashMap<PointSet, usize> = HashMap::new();
    for p in 0..n {
        let mut set = PointSet::empty(n);
        let center = domain.point(p);
        for (z, q) in domain.points().iter().enumerate() {
            if geom::dist(center, q) <= radius {
                set.insert(z);
            }
        }
        if seen.contains_key(&set) {
            continue;
        }
        seen.insert(set.clone(), sets.len());
        sets.push(set);
        targets.push(arg[p]);
    }

    // Exact star verification: the union of all members meeting a member
    // must fit in its assigned original member.
    for a in 0..sets.len() {
        let mut star = sets[a].clone();
        for b in 0..sets.len() {
            if a != b && sets[a].intersects(&sets[b]) {
                star.union_with(&sets[b]);
            }
        }
        if !star.is_subset(cover.member(targets[a])) {
            return Err(CoverError::RefinementFailed(format!(
                "star of refined member {a} escapes {}",
                cover.label(targets[a])
            )));
        }
    }

    let labels: Vec<String> = (0..sets.len()).map(|i| format!("w{i:04}")).collect();
    let refined = Cover::from_sets(domain, labels, sets)?;
    let mut to_original = SimplicialMap::new([]);
    for i in 0..refined.len() {
        to_original.insert(refined.vertex(i), cover.vertex(targets[i]));
    }
    Ok(Refinement {
        refined,
        to_original,
    })
}

/// Refines a cover until at most `dim + 1` members meet at any point, by
/// tiling the domain at the scale of the cover's Lebesgue number:
/// overlapping intervals on the line, offset brick rows in the plane.
/// Every tile fits inside an original member (verified exactly), and the
/// final order is verified by scanning the grid.
pub fn low_order_refinement(cover: &Cover) -> Result<Refinement, CoverError> {
    let domain = cover.domain().clone();
    let target_order = domain.dim() + 1;
    if cover.order() <= target_order {
        let mut id = SimplicialMap::new([]);
        for i in 0..cover.len() {
            id.insert(cover.vertex(i), cover.vertex(i));
        }
        return Ok(Refinement {
            refined: cover.clone(),
            to_original: id,
        });
    }
    let n = domain.len();

    let mut sets: Vec<PointSet> = Vec::new();
    let mut seen: HashMap<PointSet, usize> = HashMap::new();
    let mut push = |set: PointSet, sets: &mut Vec<PointSet>| {
        if !set.is_empty() && !seen.contains_key(&set) {
            seen.insert(set.clone(), sets.len());
            sets.push(set);
        }
    };

    match domain.dim() {
        1 => {
            // A greedy chain of maximal runs: each tile is the longest run
            // of consecutive grid points from its start that fits inside a
            // single member.  The next tile starts near the current one's
            // midpoint when the chain still advances from there, at its
            // last point otherwise, so consecutive tiles overlap as widely
            // as the cover allows; each start stays past the end of the
            // tile two back, so no point lies in more than two tiles.
            // Where not even a pair of adjacent points fits (the cover
            // pinches to single points) the chain breaks and restarts at
            // the next point.
            let longest_run = |s: usize| -> usize {
                let mut e = s;
                for mbr in 0..cover.len() {
                    let member = cover.member(mbr);
                    if !member.contains(s) {
                        continue;
                    }
                    let mut t = s;
                    while t + 1 < n && member.contains(t + 1) {
                        t += 1;
                    }
                    e = e.max(t);
                }
                e
            };
            let mut s = 0usize;
            let mut prev_end: Option<usize> = None;
            while s < n {
                let e = longest_run(s);
                let mut set = PointSet::empty(n);
                for z in s..=e {
                    set.insert(z);
                }
                push(set, &mut sets);
                if e >= n - 1 {
                    break;
                }
                let mid = (s + (e - s).div_ceil(2)).max(s + 1);
                let guard = prev_end.map_or(0, |p| p + 1);
                s = [mid.max(guard), e]
                    .into_iter()
                    .filter(|&c| c > s && c <= e)
                    .find(|&c| longest_run(c) > e)
                    .unwrap_or(e + 1);
                prev_end = Some(e);
            }
        }
        2 => {
            // Offset brick courses, aligned to grid indices: row bands
            // starting every `bh` rows share one row, bricks within a band
            // starting every `bw` columns share one column, and odd bands
            // sit half a brick over, so at most one band has a brick seam
            // at any column.  A grid point then lies in at most two bricks
            // of its band and one of the neighboring band.  Bricks the
            // cover is locally too shallow to hold fall back to their
            // single points.
            let lambda = cover.lebesgue_number();
            if !(lambda > 0.0) {
                return Err(CoverError::RefinementFailed(
                    "cover has zero Lebesgue number".into(),
                ));
            }
            let base = ((lambda / (2.5 * domain.step())).floor() as usize).max(1);
            let (bw, bh) = (2 * base, base);
            let shape = domain.shape();
            let (nx, ny) = (shape[0], shape[1]);
            let fits = |set: &PointSet| {
                (0..cover.len()).any(|m| set.is_subset(cover.member(m)))
            };
            let j_hi = if ny >= 2 { (ny - 2) / bh } else { 0 };
            for j in 0..=j_hi {
                let r0 = j * bh;
                let r1 = (r0 + bh).min(ny - 1);
                let off = (j % 2) * base;
                let k_hi = (nx as i64 - 1 - off as i64).div_euclid(bw as i64).max(-1);
                let mut band: Vec<PointSet> = Vec::new();
                for k in -1..=k_hi {
                    let a = k * bw as i64 + off as i64;
                    let c0 = a.max(0) as usize;
                    let c1 = (a + bw as i64).min(nx as i64 - 1);
                    if c1 < c0 as i64 {
                        continue;
                    }
                    let mut set = PointSet::empty(n);
                    for y in r0..=r1 {
                        for x in c0..=c1 as usize {
                            set.insert(domain.index_of(&[x, y]));
                        }
                    }
                    band.push(set);
                }
                // Drop clamped edge strips another brick of the band
                // already covers, keep solid bricks, split the rest.
                for (i, set) in band.iter().enumerate() {
                    let shadowed = band
                        .iter()
                        .enumerate()
                        .any(|(i2, s2)| i2 != i && set != s2 && set.is_subset(s2));
                    if shadowed {
                        continue;
                    }
                    if fits(set) {
                        push(set.clone(), &mut sets);
                    } else {
                        for z in set.ones() {
                            let mut single = PointSet::empty(n);
                            single.insert(z);
                            push(single, &mut sets);
                        }
                    }
                }
            }
        }
        d => unreachable!("unsupported grid dimension {d}"),
    }

    // Assign each tile the first original member containing it.
    let mut targets = Vec::with_capacity(sets.len());
    for (i, set) in sets.iter().enumerate() {
        let target = (0..cover.len())
            .find(|&m| set.is_subset(cover.member(m)))
            .ok_or_else(|| {
                CoverError::RefinementFailed(format!("tile {i} fits in no member"))
            })?;
        targets.push(target);
    }

    let labels: Vec<String> = (0..sets.len()).map(|i| format!("t{i:04}")).collect();
    let refined = Cover::from_sets(domain, labels, sets)?;
    let order = refined.order();
    if order > target_order {
        return Err(CoverError::RefinementFailed(format!(
            "tile cover has order {order}, wanted at most {target_order}"
        )));
    }
    let mut to_original = SimplicialMap::new([]);
    for i in 0..refined.len() {
        to_original.insert(refined.vertex(i), cover.vertex(targets[i]));
    }
    Ok(Refinement {
        refined,
        to_original,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::check_simplicial_map;

    fn interval_cover() -> Cover {
        let domain = Domain::grid_1d(0.0, 0.01, 101);
        Cover::from_shapes(
            domain,
            vec![
                ("a".into(), MemberShape::Box { lo: vec![0.0], hi: vec![0.4] }),
                ("b".into(), MemberShape::Box { lo: vec![0.3], hi: vec![0.7] }),
                ("c".into(), MemberShape::Box { lo: vec![0.6], hi: vec![1.0] }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn domain_indexing_roundtrip() {
        let d = Domain::grid_2d([0.0, 0.0], 0.5, [4, 3]);
        assert_eq!(d.len(), 12);
        for i in 0..d.len() {
            assert_eq!(d.index_of(&d.coords_of(i)), i);
        }
        assert_eq!(d.point(5), &vec![0.5, 0.5]);
        assert_eq!(d.neighbors(0).len(), 2);
        assert_eq!(d.neighbors(5).len(), 4);
        assert_eq!(d.nearest_index(&[0.6, 0.1]), 1);
    }

    #[test]
    fn point_set_operations() {
        let a = PointSet::from_indices(130, &[0, 64, 129]);
        let b = PointSet::from_indices(130, &[64]);
        assert!(b.is_subset(&a));
        assert!(!a.is_subset(&b));
        assert!(a.intersects(&b));
        assert_eq!(a.count(), 3);
        assert_eq!(a.ones().collect::<Vec<_>>(), vec![0, 64, 129]);
        let mut c = a.clone();
        c.intersect_with(&b);
        assert_eq!(c.count(), 1);
    }

    #[test]
    fn interval_cover_membership() {
        let cover = interval_cover();
        // Half-step margin: the box [0, 0.4] picks up exactly the grid
        // points 0.00 ..= 0.40.
        assert_eq!(cover.member(0).count(), 41);
        assert_eq!(cover.member(1).count(), 41);
        assert_eq!(cover.member(2).count(), 41);
        assert_eq!(cover.sigma_at(20), vec![0]);
        assert_eq!(cover.sigma_at(35), vec![0, 1]);
        assert_eq!(cover.sigma_at(65), vec![1, 2]);
        assert_eq!(cover.order(), 2);
    }

    #[test]
    fn interval_cover_nerve_is_exactly_the_two_edges() {
        let cover = interval_cover();
        let nerve = cover.nerve().unwrap();
        let want: Vec<Vec<&str>> =
            vec![vec!["a"], vec!["a", "b"], vec!["b"], vec!["b", "c"], vec!["c"]];
        let got: Vec<Vec<String>> = nerve
            .simplices()
            .map(|s| s.vertices().iter().map(|v| v.label().to_string()).collect())
            .collect();
        assert_eq!(got.len(), 5);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g, w);
        }
        // The skeleton enumeration agrees with the guarded full nerve.
        assert_eq!(cover.nerve_skeleton(1).len(), 5);
        assert_eq!(cover.nerve_skeleton(0).len(), 3);
    }

    #[test]
    fn uncovered_point_is_rejected() {
        let domain = Domain::grid_1d(0.0, 0.1, 11);
        let err = Cover::from_shapes(
            domain,
            vec![("a".into(), MemberShape::Box { lo: vec![0.0], hi: vec![0.5] })],
        )
        .unwrap_err();
        match err {
            CoverError::Uncovered { point } => assert_eq!(point, 6),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn partition_of_unity_hand_values() {
        let cover = interval_cover();
        let pou = PartitionOfUnity::new(&cover);
        // Point 0.20 lies in member a only.
        assert_eq!(pou.weight(0, 20), 1.0);
        assert_eq!(pou.weight(1, 20), 0.0);
        // Point 0.35 is equidistant from both complements: 0.06 each way.
        assert!((pou.weight(0, 35) - 0.5).abs() < 1e-12);
        assert!((pou.weight(1, 35) - 0.5).abs() < 1e-12);
        // Point 0.32: depth 0.09 in a, 0.03 in b.
        assert!((pou.weight(0, 32) - 0.75).abs() < 1e-12);
        assert!((pou.weight(1, 32) - 0.25).abs() < 1e-12);
        // Weights always sum to one.
        for x in 0..101 {
            let total: f64 = (0..3).map(|m| pou.weight(m, x)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_domain_member_depth_is_capped() {
        let domain = Domain::grid_1d(0.0, 0.1, 11);
        let cover = Cover::from_shapes(
            domain,
            vec![
                ("all".into(), MemberShape::Box { lo: vec![-1.0], hi: vec![2.0] }),
                ("left".into(), MemberShape::Box { lo: vec![0.0], hi: vec![0.5] }),
            ],
        )
        .unwrap();
        let depth = cover.member_depth(0);
        assert!(depth.iter().all(|&d| (d - 2.0).abs() < 1e-12));
    }

    #[test]
    fn canonical_map_verifies_both_routes() {
        let cover = Arc::new(interval_cover());
        let cmap = CanonicalMap::new(cover.clone());
        verify_canonical(&cmap).unwrap();
        // Spot-check a carrier.
        let image = cmap.eval(35);
        assert_eq!(image.carrier().card(), 2);
        let image = cmap.eval(20);
        assert_eq!(image.carrier().card(), 1);
        assert_eq!(image.carrier().vertices()[0].label(), "a");
    }

    #[test]
    fn canonical_map_on_a_plane_cover() {
        let domain = Domain::grid_2d([0.0, 0.0], 0.1, [11, 11]);
        let cover = Arc::new(
            Cover::from_shapes(
                domain,
                vec![
                    ("sw".into(), MemberShape::Ball { center: vec![0.0, 0.0], radius: 0.8 }),
                    ("se".into(), MemberShape::Ball { center: vec![1.0, 0.0], radius: 0.8 }),
                    ("nw".into(), MemberShape::Ball { center: vec![0.0, 1.0], radius: 0.8 }),
                    ("ne".into(), MemberShape::Ball { center: vec![1.0, 1.0], radius: 0.8 }),
                    ("mid".into(), MemberShape::Ball { center: vec![0.5, 0.5], radius: 0.5 }),
                ],
            )
            .unwrap(),
        );
        let cmap = CanonicalMap::new(cover);
        verify_canonical(&cmap).unwrap();
    }

    #[test]
    fn refining_map_finds_containers() {
        let coarse = interval_cover();
        let fine = Cover::from_shapes(
            coarse.domain().clone(),
            vec![
                ("a1".into(), MemberShape::Box { lo: vec![0.0], hi: vec![0.35] }),
                ("b1".into(), MemberShape::Box { lo: vec![0.35], hi: vec![0.7] }),
                ("c1".into(), MemberShape::Box { lo: vec![0.65], hi: vec![1.0] }),
            ],
        )
        .unwrap();
        let map = refining_map(&fine, &coarse).unwrap();
        assert_eq!(map.image(&"a1".into()).unwrap().label(), "a");
        assert_eq!(map.image(&"b1".into()).unwrap().label(), "b");
        assert_eq!(map.image(&"c1".into()).unwrap().label(), "c");
        check_simplicial_map(&map, &fine.nerve().unwrap(), &coarse.nerve().unwrap()).unwrap();

        let whole = Cover::from_shapes(
            coarse.domain().clone(),
            vec![("all".into(), MemberShape::Box { lo: vec![0.0], hi: vec![1.0] })],
        )
        .unwrap();
        assert!(matches!(
            refining_map(&whole, &coarse),
            Err(CoverError::NotRefining { .. })
        ));
    }

    #[test]
    fn star_refinement_has_the_star_property() {
        let cover = interval_cover();
        let r = star_refinement(&cover).unwrap();
        // Internal verification already ran; re-check the containment and
        // simplicial property independently.
        for i in 0..r.refined.len() {
            let target = r.to_original.image(&r.refined.vertex(i)).unwrap();
            let m = cover.member_index(target).unwrap();
            assert!(r.refined.member(i).is_subset(cover.member(m)));
        }
        check_simplicial_map(
            &r.to_original,
            &r.refined.nerve_skeleton(1),
            &cover.nerve_skeleton(1),
        )
        .unwrap();
        // Explicit star re-check on the point sets.
        for a in 0..r.refined.len() {
            let mut star = r.refined.member(a).clone();
            for b in 0..r.refined.len() {
                if a != b && r.refined.member(a).intersects(r.refined.member(b)) {
                    star.union_with(r.refined.member(b));
                }
            }
            let target = r.to_original.image(&r.refined.vertex(a)).unwrap();
            let m = cover.member_index(target).unwrap();
            assert!(star.is_subset(cover.member(m)));
        }
    }

    #[test]
    fn star_refinement_of_a_plane_cover() {
        let domain = Domain::grid_2d([0.0, 0.0], 0.1, [11, 11]);
        let cover = Cover::from_shapes(
            domain,
            vec![
                ("sw".into(), MemberShape::Ball { center: vec![0.0, 0.0], radius: 0.9 }),
                ("ne".into(), MemberShape::Ball { center: vec![1.0, 1.0], radius: 0.9 }),
                ("se".into(), MemberShape::Ball { center: vec![1.0, 0.0], radius: 0.9 }),
                ("nw".into(), MemberShape::Ball { center: vec![0.0, 1.0], radius: 0.9 }),
            ],
        )
        .unwrap();
        let r = star_refinement(&cover).unwrap();
        assert!(r.refined.len() > 4);
    }

    #[test]
    fn low_order_refinement_on_the_line() {
        let domain = Domain::grid_1d(0.0, 0.01, 101);
        let members: Vec<(String, MemberShape)> = (0..6)
            .map(|i| {
                let lo = 0.1 * i as f64;
                (
                    format!("m{i}"),
                    MemberShape::Box { lo: vec![lo], hi: vec![lo + 0.5] },
                )
            })
            .collect();
        let cover = Cover::from_shapes(domain, members).unwrap();
        assert!(cover.order() > 2);
        let r = low_order_refinement(&cover).unwrap();
        assert!(r.refined.order() <= 2);
        for i in 0..r.refined.len() {
            let target = r.to_original.image(&r.refined.vertex(i)).unwrap();
            let m = cover.member_index(target).unwrap();
            assert!(r.refined.member(i).is_subset(cover.member(m)));
        }
    }

    #[test]
    fn low_order_refinement_in_the_plane() {
        let domain = Domain::grid_2d([0.0, 0.0], 0.05, [21, 21]);
        let mut members = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                members.push((
                    format!("b{i}{j}"),
                    MemberShape::Ball {
                        center: vec![0.25 * i as f64, 0.25 * j as f64],
                        radius: 0.3,
                    },
                ));
            }
        }
        let cover = Cover::from_shapes(domain, members).unwrap();
        assert!(cover.order() > 3);
        let r = low_order_refinement(&cover).unwrap();
        assert!(r.refined.order() <= 3);
        for i in 0..r.refined.len() {
            let target = r.to_original.image(&r.refined.vertex(i)).unwrap();
            let m = cover.member_index(target).unwrap();
            assert!(r.refined.member(i).is_subset(cover.member(m)));
        }
    }

    #[test]
    fn low_order_fast_path_is_identity() {
        let cover = interval_cover();
        let r = low_order_refinement(&cover).unwrap();
        assert_eq!(r.refined.len(), cover.len());
        assert_eq!(
            r.to_original.image(&"a".into()).unwrap().label(),
            "a"
        );
    }

    #[test]
    fn nerve_guard_rejects_huge_orders() {
        let domain = Domain::grid_1d(0.0, 1.0, 2);
        let members: Vec<(String, MemberShape)> = (0..17)
            .map(|i| (format!("m{i}"), MemberShape::Points(vec![0, 1])))
            .collect();
        let cover = Cover::from_shapes(domain, members).unwrap();
        assert!(matches!(
            cover.nerve(),
            Err(CoverError::NerveTooLarge { order: 17 })
        ));
        // The 1-skeleton is still fine: 17 vertices and C(17, 2) edges.
        assert_eq!(cover.nerve_skeleton(1).len(), 17 + 136);
    }

    #[test]
    fn lebesgue_number_of_interval_cover() {
        // The pinch is at the overlap midpoints: depth 0.06 on both sides.
        let cover = interval_cover();
        assert!((cover.lebesgue_number() - 0.06).abs() < 1e-12);
    }
}

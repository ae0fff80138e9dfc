//! Stepwise construction of continuous selections.
//!
//! A selection is grown level by level: a locally constant stage picks one
//! value per covering member, each lift fills the boundary spheres that
//! appear one skeleton dimension up and rebuilds the map over a star
//! refinement, and assembly composes the finished map with a canonical map
//! into the nerve to produce one value per grid point.  Every stage leaves
//! an audit trail and every invariant is checked on the actual point sets,
//! so a returned selection is correct as measured, not by appeal.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use itertools::Itertools;
use serde::Serialize;
use thiserror::Error;

use crate::complex::{Simplex, VertexId};
use crate::covers::{
    low_order_refinement, refining_map, CanonicalMap, Cover, CoverError, Domain, PointSet,
};
use crate::fillers::{boundary_loop_values, BallMap, FillError, SphereFiller, SphereMap};
use crate::geom::{self, Point};
use crate::moduli::Modulus;
use crate::realization::{
    lattice_key_of, snap_to_lattice, subdivision_lattice, BaryPoint, LatticeKey, PlMap,
    RealizationError, DEFAULT_DEPTH,
};
use crate::regions::{is_llc, LlcWitness, Region, RegionError, SetValuedMap};

/// Failures of the selection pipeline.  Every variant names the witness
/// that broke: a grid point, a member label, or a measured distance.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("mapping covers {0} cells but the domain has {1} points")]
    LengthMismatch(usize, usize),
    #[error(
        "mapping is not locally constant enough near point {}: a sample of its value sits {:.3e} outside the value at neighbor {}",
        .0.cell, .0.dist, .0.neighbor
    )]
    NotLocallyConstant(LlcWitness),
    #[error("the representative of the value at point {point} fails its own membership test")]
    RepresentativeEscapes { point: usize },
    #[error(
        "selection invariant fails at point {point} on {{{simplex}}}: a map value sits {dist:.3e} from the point's value, over the {tol:.3e} budget"
    )]
    Skeletal {
        point: usize,
        simplex: String,
        dist: f64,
        tol: f64,
    },
    #[error("only levels 0 and 1 can be lifted, got a level-{0} selection")]
    UnsupportedLevel(usize),
    #[error("filling the boundary sphere over {{{simplex}}} into the value at point {point}: {source}")]
    Fill {
        point: usize,
        simplex: String,
        source: FillError,
    },
    #[error("refined member {member} has no anchor: no point of it sees the member's whole star inside its own witness set")]
    StarAnchor { member: String },
    #[error("the witness set anchored at point {point} excludes the point itself")]
    EmptyWitness { point: usize },
    #[error("assembly needs the selection level to reach the domain dimension: level {level} < {dim}")]
    LevelBelowDim { level: usize, dim: usize },
    #[error("the guide must be a {needed:.3e}-selection, but point {point} sits {dist:.3e} from its target value")]
    GuideTooFar {
        point: usize,
        dist: f64,
        needed: f64,
    },
    #[error("the selection drifted {dist:.3e} from the guide at point {point}, allowed {eps:.3e}")]
    SelectionDrift { point: usize, dist: f64, eps: f64 },
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Realization(#[from] RealizationError),
    #[error(transparent)]
    Region(#[from] RegionError),
}

/// Numeric budgets the pipeline checks against.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    /// Local-constancy slack: how far a core sample of one cell's value
    /// may sit outside the value at an adjacent cell.
    pub locality: f64,
    /// Membership slack for witness sets: how far a bundled value may sit
    /// from a mapping value and still count as inside.
    pub membership: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            locality: 1e-2,
            membership: 1e-7,
        }
    }
}

/// A partial selection: a piecewise-linear map on the `level`-skeleton of
/// the nerve of a cover, satisfying the selection invariant for some
/// mapping (checked by [`check_skeletal`], produced by [`zero_skeletal`]
/// and [`lift`]).
#[derive(Clone, Debug)]
pub struct SkeletalSelection {
    level: usize,
    cover: Arc<Cover>,
    map: PlMap,
}

impl SkeletalSelection {
    /// Wraps existing parts, checking that the map's vertices are the
    /// cover's and its simplices fit the level.
    pub fn new(level: usize, cover: Arc<Cover>, map: PlMap) -> Result<Self, EngineError> {
        for v in map.complex().vertex_set() {
            if cover.member_index(&v).is_none() {
                return Err(EngineError::Cover(CoverError::NotRefining {
                    label: v.label().to_string(),
                }));
            }
        }
        if let Some(d) = map.complex().dim() {
            if d > level {
                return Err(EngineError::UnsupportedLevel(d));
            }
        }
        Ok(SkeletalSelection { level, cover, map })
    }

    /// The skeleton level the map lives on.
    pub fn level(&self) -> usize {
        self.level
    }

    /// The cover whose nerve carries the map.
    pub fn cover(&self) -> &Arc<Cover> {
        &self.cover
    }

    /// The piecewise-linear map itself.
    pub fn map(&self) -> &PlMap {
        &self.map
    }
}

/// First point index per distinct value allocation: cells sharing a region
/// share a representative, so caches can key on one index per value.
fn cell_representatives(phi: &SetValuedMap) -> Vec<usize> {
    let mut first: HashMap<usize, usize> = HashMap::new();
    (0..phi.len())
        .map(|i| *first.entry(Arc::as_ptr(phi.value(i)) as usize).or_insert(i))
        .collect()
}

/// Pushes a lattice key through a vertex assignment, merging numerators
/// that land on the same image vertex.  Exact: numerators add as integers.
fn compose_key(key: &LatticeKey, f: impl Fn(&VertexId) -> VertexId) -> LatticeKey {
    let mut acc: BTreeMap<VertexId, u32> = BTreeMap::new();
    for (v, w) in key.pairs() {
        *acc.entry(f(v)).or_insert(0) += *w;
    }
    LatticeKey::new(acc.into_iter().collect())
}

/// Pushes a barycentric point through a vertex assignment, merging weights.
fn compose_bary(
    b: &BaryPoint,
    f: impl Fn(&VertexId) -> VertexId,
) -> Result<BaryPoint, RealizationError> {
    BaryPoint::new(b.coords().iter().map(|(v, w)| (f(v), *w)))
}

/// L1 distance between barycentric points over the union of supports.
fn bary_l1(a: &BaryPoint, b: &BaryPoint) -> f64 {
    let mut total = 0.0;
    for (v, w) in a.coords() {
        total += (w - b.weight(v)).abs();
    }
    for (v, w) in b.coords() {
        if a.weight(v) == 0.0 {
            total += *w;
        }
    }
    total
}

fn member_simplex(cover: &Cover, members: &[usize]) -> Simplex {
    Simplex::new(members.iter().map(|&i| cover.vertex(i)))
        .expect("cover members have distinct labels")
}

fn member_labels(cover: &Cover, members: &[usize]) -> Vec<String> {
    members.iter().map(|&i| cover.label(i).to_string()).collect()
}

/// All lattice values of the map over the simplex spanned by `members`.
fn simplex_values(map: &PlMap, cover: &Cover, members: &[usize]) -> Vec<Point> {
    let s = member_simplex(cover, members);
    let depth = map.depth();
    subdivision_lattice(&s, depth)
        .iter()
        .map(|p| {
            map.lattice_value(&lattice_key_of(p, depth))
                .expect("selection map covers its nerve skeleton")
                .clone()
        })
        .collect()
}

fn fill_values(ball: &BallMap) -> Vec<Point> {
    match ball {
        BallMap::Path { points } => points.clone(),
        BallMap::Disk { map } => map.values().map(|(_, p)| p.clone()).collect(),
    }
}

/// Builds a cover by grid balls with a per-point radius, merging identical
/// point sets.  Returns the cover together with the member index each grid
/// point's ball landed on.
fn ball_cover(
    domain: &Arc<Domain>,
    radii: &[f64],
) -> Result<(Cover, Vec<usize>), CoverError> {
    let n = domain.len();
    let mut sets: Vec<PointSet> = Vec::new();
    let mut member_of_center = vec![0usize; n];
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for c in 0..n {
        let mut set = PointSet::empty(n);
        let pc = domain.point(c);
        for z in 0..n {
            if geom::dist(pc, domain.point(z)) <= radii[c] {
                set.insert(z);
            }
        }
        let bits: Vec<u64> = set.ones().fold(vec![0u64; n.div_ceil(64)], |mut acc, i| {
            acc[i / 64] |= 1 << (i % 64);
            acc
        });
        let next = sets.len();
        let id = *seen.entry(bits).or_insert_with(|| {
            sets.push(set);
            next
        });
        member_of_center[c] = id;
    }
    let labels: Vec<String> = (0..sets.len()).map(|i| format!("w{i:04}")).collect();
    let cover = Cover::from_sets(domain.clone(), labels, sets)?;
    Ok((cover, member_of_center))
}

/// Checks the selection invariant: for every grid point and every simplex
/// of members containing it (up to the selection's level), every lattice
/// value of the map over that simplex lies within `tol` of the mapping's
/// value at the point.
pub fn check_skeletal(
    s: &SkeletalSelection,
    phi: &SetValuedMap,
    tol: f64,
) -> Result<(), EngineError> {
    let cover = s.cover();
    let n = cover.domain().len();
    if phi.len() != n {
        return Err(EngineError::LengthMismatch(phi.len(), n));
    }
    let cell_rep = cell_representatives(phi);
    let mut combo_values: HashMap<Vec<usize>, Vec<Point>> = HashMap::new();
    // Worst escape per (simplex, value cell); `None` marks a clean pass.
    let mut verdicts: HashMap<(Vec<usize>, usize), Option<f64>> = HashMap::new();
    for x in 0..n {
        let sigma = cover.sigma_at(x);
        let cell = cell_rep[x];
        for card in 1..=(s.level() + 1).min(sigma.len()) {
            for combo in sigma.iter().copied().combinations(card) {
                let verdict = verdicts.entry((combo.clone(), cell)).or_insert_with(|| {
                    let values = combo_values
                        .entry(combo.clone())
                        .or_insert_with(|| simplex_values(s.map(), cover, &combo));
                    let region = phi.value(cell);
                    let mut worst: Option<f64> = None;
                    for v in values.iter() {
                        if !region.within(v, tol) {
                            let d = region.dist(v);
                            worst = Some(worst.map_or(d, |w: f64| w.max(d)));
                        }
                    }
                    worst
                });
                if let Some(d) = *verdict {
                    return Err(EngineError::Skeletal {
                        point: x,
                        simplex: member_labels(cover, &combo).join(", "),
                        dist: d,
                        tol,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Builds a level-0 selection for `phi`: one value per member of a cover
/// read off from the mapping itself.  Greedy: walk the grid in index
/// order, pick the representative of the value at the first uncovered
/// point, and let the member be everyone whose value contains that pick.
/// The selection invariant holds by construction.
pub fn zero_skeletal(
    phi: &SetValuedMap,
    domain: &Arc<Domain>,
    tols: &Tolerances,
) -> Result<SkeletalSelection, EngineError> {
    let n = domain.len();
    if phi.len() != n {
        return Err(EngineError::LengthMismatch(phi.len(), n));
    }
    is_llc(phi, |i| domain.neighbors(i), tols.locality)
        .map_err(EngineError::NotLocallyConstant)?;

    let cell_rep = cell_representatives(phi);
    let mut boxes: HashMap<usize, (Point, Point)> = HashMap::new();
    for x in 0..n {
        boxes
            .entry(cell_rep[x])
            .or_insert_with(|| phi.value(x).bbox());
    }

    let mut covered = PointSet::empty(n);
    let mut sets: Vec<PointSet> = Vec::new();
    let mut picks: Vec<Point> = Vec::new();
    for x in 0..n {
        if covered.contains(x) {
            continue;
        }
        let y = phi.value(x).representative_point();
        let mut verdicts: HashMap<usize, bool> = HashMap::new();
        let mut set = PointSet::empty(n);
        for z in 0..n {
            let cell = cell_rep[z];
            let ok = *verdicts.entry(cell).or_insert_with(|| {
                let (lo, hi) = &boxes[&cell];
                let in_box = y
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .all(|(c, (l, h))| *c >= l - 1e-9 && *c <= h + 1e-9);
                in_box && phi.value(cell).contains(&y)
            });
            if ok {
                set.insert(z);
            }
        }
        if !set.contains(x) {
            return Err(EngineError::RepresentativeEscapes { point: x });
        }
        covered.union_with(&set);
        sets.push(set);
        picks.push(y);
    }

    let labels: Vec<String> = (0..sets.len()).map(|i| format!("u{i:04}")).collect();
    let cover = Arc::new(Cover::from_sets(domain.clone(), labels, sets)?);
    let complex = Arc::new(cover.nerve_skeleton(0));
    let depth = DEFAULT_DEPTH;
    let mut values = BTreeMap::new();
    for (i, y) in picks.iter().enumerate() {
        values.insert(LatticeKey::vertex(cover.vertex(i), depth), y.clone());
    }
    let map = PlMap::from_values(complex, depth, values)?;
    Ok(SkeletalSelection {
        level: 0,
        cover,
        map,
    })
}

/// Rebuilds a selection over a refining cover without changing any value:
/// each lattice point of the finer nerve is pushed through the refining
/// vertex assignment and reads the coarse map's value there, bit for bit.
pub fn transfer(
    s: &SkeletalSelection,
    fine: &Arc<Cover>,
) -> Result<SkeletalSelection, EngineError> {
    let assignment = refining_map(fine, s.cover())?;
    let complex = Arc::new(fine.nerve_skeleton(s.level()));
    let depth = s.map().depth();
    let mut values: BTreeMap<LatticeKey, Point> = BTreeMap::new();
    for simplex in complex.maximal_simplices() {
        for p in subdivision_lattice(&simplex, depth) {
            let key = lattice_key_of(&p, depth);
            if values.contains_key(&key) {
                continue;
            }
            let image = compose_key(&key, |v| {
                assignment
                    .image(v)
                    .expect("refining assignment is total")
                    .clone()
            });
            let val = s
                .map()
                .lattice_value(&image)
                .expect("image keys of a refining assignment stay on the coarse skeleton")
                .clone();
            values.insert(key, val);
        }
    }
    let map = PlMap::from_values(complex, depth, values)?;
    Ok(SkeletalSelection {
        level: s.level(),
        cover: fine.clone(),
        map,
    })
}

/// One boundary sphere filled during a lift.
#[derive(Clone, Debug, Serialize)]
pub struct FillRecord {
    /// Labels of the members spanning the filled simplex.
    pub simplex: Vec<String>,
    /// Grid point whose value the sphere was filled into.
    pub point: usize,
    /// `"path"` for edge fills, `"disk"` for triangle fills.
    pub kind: &'static str,
    /// Number of values the fill carries.
    pub samples: usize,
}

/// One value class seen during a lift: a maximal group of grid points
/// sharing both their member pattern and their mapping value.
#[derive(Clone, Debug, Serialize)]
pub struct ClassRecord {
    /// First grid point of the class.
    pub representative: usize,
    /// Labels of the members containing the representative.
    pub members: Vec<String>,
    /// Number of distinct values bundled over the class.
    pub bundle_size: usize,
    /// Size of the class's witness set.
    pub witness_count: usize,
    /// Largest distance from a bundled value to the value at the
    /// representative (zero up to fill tolerance).
    pub worst_membership: f64,
}

/// The choices made for one simplex of the refined nerve.
#[derive(Clone, Debug, Serialize)]
pub struct ChoiceRecord {
    /// Labels of the refined members spanning the simplex.
    pub simplex: Vec<String>,
    /// Per-vertex anchors, aligned with `simplex`: for each member the
    /// base point of its own vertex simplex, whose witness set holds the
    /// whole member.
    pub anchors: Vec<usize>,
    /// The lead vertex (least label) of the simplex.
    pub lead_vertex: String,
    /// The base: a common point of the simplex's members whose bundle the
    /// simplex's own keys map into.
    pub base_point: usize,
    /// Labels of the original members assigned through the anchors,
    /// aligned with `simplex`.
    pub assigned: Vec<String>,
    /// Whether the common part of the simplex's members lies inside the
    /// intersection of the assigned members (verified on point sets).
    pub common_inside_assigned: bool,
    /// Whether that common part lies inside the base's witness set
    /// (verified on point sets).
    pub common_inside_witness: bool,
    /// Whether the base point lies in every assigned member.
    pub base_in_intersection: bool,
}

/// Audit trail of one lift.
#[derive(Clone, Debug, Serialize)]
pub struct LiftTrace {
    pub from_level: usize,
    pub to_level: usize,
    pub fills: Vec<FillRecord>,
    pub classes: Vec<ClassRecord>,
    /// Number of members in the refinement the new map lives on.
    pub refined_members: usize,
    /// How many adaptive passes the refinement took before every simplex
    /// of its nerve found anchors.
    pub refinement_rounds: usize,
    pub choices: Vec<ChoiceRecord>,
}

/// A lifted selection together with its audit trail.
#[derive(Clone, Debug)]
pub struct LiftOutcome {
    pub selection: SkeletalSelection,
    pub trace: LiftTrace,
}

/// Lifts a selection one level: fills the boundary spheres that appear at
/// the next skeleton dimension, bundles the filled values per class,
/// computes witness sets, star-refines them, and rebuilds the map over the
/// refinement so the selection invariant holds one level higher.
pub fn lift(
    s: &SkeletalSelection,
    phi: &SetValuedMap,
    filler: &dyn SphereFiller,
    tols: &Tolerances,
) -> Result<LiftOutcome, EngineError> {
    let level = s.level();
    if level > 1 {
        return Err(EngineError::UnsupportedLevel(level));
    }
    let cover = s.cover().clone();
    let domain = cover.domain().clone();
    let n = domain.len();
    if phi.len() != n {
        return Err(EngineError::LengthMismatch(phi.len(), n));
    }
    is_llc(phi, |i| domain.neighbors(i), tols.locality)
        .map_err(EngineError::NotLocallyConstant)?;

    let timing = std::env::var("SKELETAL_TIMING").is_ok();
    let mut phase_clock = std::time::Instant::now();
    let mut phase = |name: &str| {
        if timing {
            eprintln!("[lift {}] {name}: {:?}", level, phase_clock.elapsed());
            phase_clock = std::time::Instant::now();
        }
    };

    let cell_rep = cell_representatives(phi);
    let sigmas: Vec<Vec<usize>> = (0..n).map(|x| cover.sigma_at(x)).collect();

    // Classes: one per (member pattern, value cell) pair, keyed to the
    // first grid point showing it.
    let mut class_of: Vec<usize> = vec![usize::MAX; n];
    let mut class_rep: Vec<usize> = Vec::new();
    let mut class_index: HashMap<(Vec<usize>, usize), usize> = HashMap::new();
    for x in 0..n {
        let key = (sigmas[x].clone(), cell_rep[x]);
        let id = *class_index.entry(key).or_insert_with(|| {
            class_rep.push(x);
            class_rep.len() - 1
        });
        class_of[x] = id;
    }

    // Fill every boundary sphere that appears: one fill per (value cell,
    // member tuple one past the level) pair.
    let depth = s.map().depth();
    let mut fills: HashMap<(usize, Vec<usize>), BallMap> = HashMap::new();
    let mut fill_records: Vec<FillRecord> = Vec::new();
    for &rep in &class_rep {
        let sigma = &sigmas[rep];
        if sigma.len() < level + 2 {
            continue;
        }
        let cell = cell_rep[rep];
        for combo in sigma.iter().copied().combinations(level + 2) {
            if fills.contains_key(&(cell, combo.clone())) {
                continue;
            }
            let sphere = if level == 0 {
                let a = s
                    .map()
                    .lattice_value(&LatticeKey::vertex(cover.vertex(combo[0]), depth))
                    .expect("vertex values exist")
                    .clone();
                let b = s
                    .map()
                    .lattice_value(&LatticeKey::vertex(cover.vertex(combo[1]), depth))
                    .expect("vertex values exist")
                    .clone();
                SphereMap::Pair { a, b }
            } else {
                SphereMap::Loop {
                    points: boundary_loop_values(s.map(), &member_simplex(&cover, &combo)),
                }
            };
            let simplex = member_simplex(&cover, &combo);
            let ball = filler
                .fill(&sphere, &simplex, phi.value(rep), &[])
                .map_err(|source| EngineError::Fill {
                    point: rep,
                    simplex: member_labels(&cover, &combo).join(", "),
                    source,
                })?;
            fill_records.push(FillRecord {
                simplex: member_labels(&cover, &combo),
                point: rep,
                kind: match &ball {
                    BallMap::Path { .. } => "path",
                    BallMap::Disk { .. } => "disk",
                },
                samples: fill_values(&ball).len(),
            });
            fills.insert((cell, combo), ball);
        }
    }
    phase(&format!("fills ({})", fills.len()));

    // Bundle per class: every value the finished map can take over
    // simplices visible at the class, deduplicated bitwise.
    let mut combo_cache: HashMap<Vec<usize>, Vec<Point>> = HashMap::new();
    let mut bundles: Vec<Vec<Point>> = Vec::with_capacity(class_rep.len());
    for &rep in &class_rep {
        let sigma = &sigmas[rep];
        let cell = cell_rep[rep];
        let mut bundle: Vec<Point> = Vec::new();
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let push = |p: Point, bundle: &mut Vec<Point>, seen: &mut HashSet<Vec<u64>>| {
            let bits: Vec<u64> = p.iter().map(|c| c.to_bits()).collect();
            if seen.insert(bits) {
                bundle.push(p);
            }
        };
        for card in 1..=(level + 1).min(sigma.len()) {
            for combo in sigma.iter().copied().combinations(card) {
                let values = combo_cache
                    .entry(combo.clone())
                    .or_insert_with(|| simplex_values(s.map(), &cover, &combo));
                for v in values.iter() {
                    push(v.clone(), &mut bundle, &mut seen);
                }
            }
        }
        if sigma.len() >= level + 2 {
            for combo in sigma.iter().copied().combinations(level + 2) {
                let ball = &fills[&(cell, combo)];
                for v in fill_values(ball) {
                    push(v, &mut bundle, &mut seen);
                }
            }
        }
        bundles.push(bundle);
    }
    phase(&format!(
        "bundles ({} classes, max {} values)",
        class_rep.len(),
        bundles.iter().map(Vec::len).max().unwrap_or(0)
    ));

    // Witness set per class: the points of the class's home member whose
    // values hold the entire bundle.
    let mut class_witness: Vec<PointSet> = Vec::with_capacity(class_rep.len());
    let mut class_records: Vec<ClassRecord> = Vec::with_capacity(class_rep.len());
    let mut witness_memo: HashMap<(usize, usize), bool> = HashMap::new();
    let mut boxes: HashMap<usize, (Point, Point)> = HashMap::new();
    for x in 0..n {
        boxes
            .entry(cell_rep[x])
            .or_insert_with(|| phi.value(x).bbox());
    }
    for (cid, &rep) in class_rep.iter().enumerate() {
        let home = cover.member(sigmas[rep][0]);
        let bundle = &bundles[cid];
        let mut witness = PointSet::empty(n);
        for z in home.ones() {
            let cell = cell_rep[z];
            let ok = *witness_memo.entry((cid, cell)).or_insert_with(|| {
                let (lo, hi) = &boxes[&cell];
                let in_box = bundle.iter().all(|p| {
                    p.iter()
                        .zip(lo.iter().zip(hi))
                        .all(|(c, (l, h))| {
                            *c >= l - tols.membership && *c <= h + tols.membership
                        })
                });
                in_box
                    && bundle
                        .iter()
                        .all(|p| phi.value(cell).within(p, tols.membership))
            });
            if ok {
                witness.insert(z);
            }
        }
        if !witness.contains(rep) {
            return Err(EngineError::EmptyWitness { point: rep });
        }
        let worst = bundle
            .iter()
            .map(|p| phi.value(rep).dist(p))
            .fold(0.0f64, f64::max);
        class_records.push(ClassRecord {
            representative: rep,
            members: member_labels(&cover, &sigmas[rep]),
            bundle_size: bundle.len(),
            witness_count: witness.count(),
            worst_membership: worst,
        });
        class_witness.push(witness);
    }
    phase("witness sets");

    // The witness families form a cover (every point witnesses its own
    // class); its Lebesgue number sets the refinement scale.
    let mut witness_sets: Vec<PointSet> = Vec::new();
    let mut seen_sets: HashSet<Vec<u64>> = HashSet::new();
    for w in &class_witness {
        let bits: Vec<u64> = w.ones().fold(vec![0u64; n.div_ceil(64)], |mut acc, i| {
            acc[i / 64] |= 1 << (i % 64);
            acc
        });
        if seen_sets.insert(bits) {
            witness_sets.push(w.clone());
        }
    }
    let witness_labels: Vec<String> = (0..witness_sets.len())
        .map(|i| format!("c{i:04}"))
        .collect();
    let witness_cover = Cover::from_sets(domain.clone(), witness_labels, witness_sets)?;

    // Refine the witness families with grid balls, adaptively.  The new
    // map is written simplex by simplex over the refinement's nerve, each
    // simplex contributing exactly the lattice keys it carries, and a
    // key's value is only ever read at grid points lying in all of its
    // carrier's members.  Soundness therefore needs, per simplex, a base:
    // a common point of its members whose witness set holds the whole
    // common part.  Wide balls keep the nerve richly connected, so the
    // radii start near the witness scale and stay at or above one grid
    // step as long as possible; members whose simplices keep failing
    // shrink to single points, whose lone vertices base trivially.
    let floor = 0.45 * domain.step();
    let connect =
        (1.0 + 1e-9) * domain.step() * (domain.dim() as f64).sqrt() + 1e-12;
    let start = (0.25 * witness_cover.lebesgue_number() + 1e-12).max(connect);
    let mut radii = vec![start; n];
    let mut rounds = 0usize;
    let (refined, new_complex, simplex_data) = loop {
        rounds += 1;
        let (candidate, member_of_center) = ball_cover(&domain, &radii)?;
        let complex = candidate.nerve_skeleton(level + 1);
        let mut data: Vec<(Vec<usize>, usize, PointSet)> = Vec::new();
        let mut failing: Vec<Vec<usize>> = Vec::new();
        for simplex in complex.simplices() {
            let members: Vec<usize> = simplex
                .vertices()
                .iter()
                .map(|v| candidate.member_index(v).expect("nerve vertex is a member"))
                .collect();
            let mut common = candidate.member(members[0]).clone();
            for &j in &members[1..] {
                common.intersect_with(candidate.member(j));
            }
            let base = common
                .ones()
                .find(|&z| common.is_subset(&class_witness[class_of[z]]));
            match base {
                Some(base) => data.push((members, base, common)),
                None => failing.push(members),
            }
        }
        if failing.is_empty() {
            break (Arc::new(candidate), Arc::new(complex), data);
        }
        let mut shrink = vec![false; candidate.len()];
        for members in &failing {
            for &j in members {
                shrink[j] = true;
            }
        }
        let mut progress = false;
        for c in 0..n {
            if shrink[member_of_center[c]] && radii[c] > floor {
                radii[c] = if radii[c] > connect {
                    (0.5 * radii[c]).max(connect)
                } else {
                    floor
                };
                progress = true;
            }
        }
        if !progress {
            return Err(EngineError::StarAnchor {
                member: member_labels(&candidate, &failing[0]).join(", "),
            });
        }
    };
    let m = refined.len();
    phase(&format!("refinement ({m} members, {rounds} rounds)"));

    // Member assignments come from the vertex simplices: each member maps
    // to the home member of its own base point.  A member lies inside its
    // base's witness set, which lies inside that home member, so any
    // common point of a bigger simplex lies in every assigned member and
    // the composed images below always land on simplices the old map or a
    // fill covers.
    let mut vertex_base: HashMap<usize, usize> = HashMap::new();
    let mut assigned_member: HashMap<usize, usize> = HashMap::new();
    for (members, base, _) in &simplex_data {
        if members.len() == 1 {
            vertex_base.insert(members[0], *base);
            assigned_member.insert(members[0], sigmas[*base][0]);
        }
    }

    // Rebuild the map over the refined nerve one level up.  Each simplex
    // writes the lattice keys carried by exactly its vertices; values come
    // from the old map where the composed image stays within the old level
    // and from the fills where it reaches one past it.  Both are exact
    // lattice lookups.
    let mut new_values: BTreeMap<LatticeKey, Point> = BTreeMap::new();
    let mut choices: Vec<ChoiceRecord> = Vec::new();
    for (members, base, common) in &simplex_data {
        let base = *base;
        let lead = members[0];
        let assigned: Vec<usize> = members
            .iter()
            .map(|&j| assigned_member[&j])
            .collect();
        let image_members: Vec<usize> =
            assigned.iter().copied().sorted().dedup().collect();
        let assigned_common = cover.common_points(&image_members);
        choices.push(ChoiceRecord {
            simplex: member_labels(&refined, members),
            anchors: members.iter().map(|&j| vertex_base[&j]).collect(),
            lead_vertex: refined.label(lead).to_string(),
            base_point: base,
            assigned: member_labels(&cover, &assigned),
            common_inside_assigned: common.is_subset(&assigned_common),
            common_inside_witness: common
                .is_subset(&class_witness[class_of[base]]),
            base_in_intersection: assigned_common.contains(base),
        });
        let base_cell = cell_rep[base];
        let simplex = member_simplex(&refined, members);
        for p in subdivision_lattice(&simplex, depth) {
            let key = lattice_key_of(&p, depth);
            if key.pairs().len() != members.len() {
                continue;
            }
            let image = compose_key(&key, |v| {
                let j = refined.member_index(v).expect("nerve vertex is a member");
                let pos = members
                    .binary_search(&j)
                    .expect("key vertices span the written simplex");
                cover.vertex(assigned[pos])
            });
            let carrier: Vec<usize> = image
                .pairs()
                .iter()
                .map(|(v, _)| cover.member_index(v).expect("image vertex is a member"))
                .collect();
            let value = if carrier.len() <= level + 1 {
                s.map()
                    .lattice_value(&image)
                    .expect("composed keys within the level stay on the old skeleton")
                    .clone()
            } else {
                let ball = fills
                    .get(&(base_cell, carrier.clone()))
                    .expect("a filled sphere exists wherever an image simplex crosses the level");
                match ball {
                    BallMap::Path { points } => {
                        // Key pairs are sorted by vertex; the second
                        // numerator indexes along the path.
                        let i = image.pairs()[1].1 as usize;
                        points[i].clone()
                    }
                    BallMap::Disk { map } => map
                        .lattice_value(&image)
                        .expect("disk fills cover their triangle")
                        .clone(),
                }
            };
            new_values.insert(key, value);
        }
    }
    let new_map = PlMap::from_values(new_complex, depth, new_values)?;
    phase("write-out");

    let trace = LiftTrace {
        from_level: level,
        to_level: level + 1,
        fills: fill_records,
        classes: class_records,
        refined_members: m,
        refinement_rounds: rounds,
        choices,
    };
    Ok(LiftOutcome {
        selection: SkeletalSelection {
            level: level + 1,
            cover: refined,
            map: new_map,
        },
        trace,
    })
}

/// A pointwise selection read off a finished skeletal one.
#[derive(Clone, Debug)]
pub struct Assembled {
    /// One value per grid point.
    pub values: Vec<Point>,
    /// Piecewise-linear slope of the skeletal map (value distance per
    /// unit of barycentric l1 movement along lattice edges).
    pub slope: f64,
    /// Largest barycentric step between adjacent grid points.
    pub max_bary_step: f64,
    /// Continuity budget for adjacent values, from per-pair transit
    /// bounds through the realization.
    pub continuity_bound: f64,
    /// Largest measured value jump between adjacent grid points.
    pub max_jump: f64,
}

fn carrier_values(map: &PlMap, carrier: &Simplex) -> Vec<Point> {
    subdivision_lattice(carrier, map.depth())
        .iter()
        .map(|p| {
            map.lattice_value(&lattice_key_of(p, map.depth()))
                .expect("selection map covers its nerve skeleton")
                .clone()
        })
        .collect()
}

/// Bounds the value gap between two barycentric points.  Within one
/// closed simplex the map moves at most `dim * slope` per unit of l1
/// distance (mass rerouted through a vertex chain telescopes in l1, so
/// the edge slope picks up the dimension factor).  Points whose carriers
/// only share a vertex are routed through it; carriers sharing nothing
/// fall back to the spread of the values involved.
fn transit_bound(map: &PlMap, slope: f64, a: &BaryPoint, b: &BaryPoint) -> f64 {
    let ca = a.carrier();
    let cb = b.carrier();
    let mut union: Vec<VertexId> = ca.vertices().to_vec();
    union.extend(cb.vertices().iter().cloned());
    let joint = Simplex::new(union).expect("carriers are nonempty");
    if map.complex().contains(&joint) {
        return joint.dim() as f64 * slope * bary_l1(a, b);
    }
    let shared: Vec<&VertexId> = ca
        .vertices()
        .iter()
        .filter(|v| cb.vertices().contains(v))
        .collect();
    if !shared.is_empty() {
        return shared
            .iter()
            .map(|v| {
                let leg_a = ca.dim() as f64 * 2.0 * (1.0 - a.weight(v));
                let leg_b = cb.dim() as f64 * 2.0 * (1.0 - b.weight(v));
                slope * (leg_a + leg_b)
            })
            .fold(f64::INFINITY, f64::min);
    }
    let va = carrier_values(map, &ca);
    let vb = carrier_values(map, &cb);
    let mut worst = 0.0f64;
    for p in &va {
        for q in &vb {
            worst = worst.max(geom::dist(p, q));
        }
    }
    worst
}

/// Turns a skeletal selection into one value per grid point by composing
/// the map with a canonical map into the nerve of a low-order refinement
/// of its cover.  Requires the level to reach the domain dimension so the
/// canonical image stays on the mapped skeleton.
///
/// Each value is read at the nearest subdivision lattice point of the
/// canonical image, so every reported value is one the invariant checks
/// actually visited; interpolating between lattice values could leave a
/// hollow value region.
pub fn assemble(s: &SkeletalSelection) -> Result<Assembled, EngineError> {
    let cover = s.cover();
    let domain = cover.domain();
    let dim = domain.dim();
    if s.level() < dim {
        return Err(EngineError::LevelBelowDim {
            level: s.level(),
            dim,
        });
    }
    let refinement = low_order_refinement(cover)?;
    let refined = Arc::new(refinement.refined);
    let assignment = refinement.to_original;
    let cmap = CanonicalMap::new(refined);
    let n = domain.len();
    let mut barys: Vec<BaryPoint> = Vec::with_capacity(n);
    let mut values: Vec<Point> = Vec::with_capacity(n);
    let depth = s.map().depth();
    for x in 0..n {
        let fine = cmap.eval(x);
        let composed = compose_bary(&fine, |v| {
            assignment
                .image(v)
                .expect("refining assignment is total")
                .clone()
        })?;
        let key = snap_to_lattice(&composed, depth);
        let y = s
            .map()
            .lattice_value(&key)
            .expect("snapped point stays on the mapped skeleton")
            .clone();
        barys.push(key.to_point(depth));
        values.push(y);
    }
    let slope = s.map().lipschitz_l1();
    let mut max_bary_step = 0.0f64;
    let mut max_jump = 0.0f64;
    let mut continuity_bound = 0.0f64;
    for x in 0..n {
        for z in domain.neighbors(x) {
            if z > x {
                max_bary_step = max_bary_step.max(bary_l1(&barys[x], &barys[z]));
                max_jump = max_jump.max(geom::dist(&values[x], &values[z]));
                continuity_bound =
                    continuity_bound.max(transit_bound(s.map(), slope, &barys[x], &barys[z]));
            }
        }
    }
    Ok(Assembled {
        values,
        slope,
        max_bary_step,
        continuity_bound,
        max_jump,
    })
}

/// One open ball of a fixed radius around each guide value, pooled so
/// equal values share one region and downstream caches can pool cells.
pub fn guide_balls(guide: &[Point], radius: f64) -> Result<SetValuedMap, RegionError> {
    let mut pool: HashMap<Vec<u64>, Arc<Region>> = HashMap::new();
    let balls: Vec<Arc<Region>> = guide
        .iter()
        .map(|c| {
            let bits: Vec<u64> = c.iter().map(|x| x.to_bits()).collect();
            pool.entry(bits)
                .or_insert_with(|| Arc::new(Region::ball(c.clone(), radius).neighborhood(0.0)))
                .clone()
        })
        .collect();
    SetValuedMap::from_shared(balls)
}

/// Runs the whole stepwise construction over one mapping per level: a
/// level-zero selection of `phis[0]`, one lift per further level, then
/// assembly into grid values.
pub fn run_pipeline(
    domain: &Arc<Domain>,
    phis: &[SetValuedMap],
    filler: &dyn SphereFiller,
    tols: &Tolerances,
) -> Result<(Assembled, Vec<LiftTrace>), EngineError> {
    assert!(!phis.is_empty(), "at least one level");
    let mut selection = zero_skeletal(&phis[0], domain, tols)?;
    let mut traces = Vec::new();
    for phi in phis.iter().skip(1) {
        let outcome = lift(&selection, phi, filler, tols)?;
        selection = outcome.selection;
        traces.push(outcome.trace);
    }
    let assembled = assemble(&selection)?;
    Ok((assembled, traces))
}

/// Result of [`local_select`].
#[derive(Clone, Debug)]
pub struct LocalSelection {
    /// The assembled selection and its continuity measurements.
    pub assembled: Assembled,
    /// One audit trail per lift.
    pub traces: Vec<LiftTrace>,
    /// Largest distance from a selected value to the top target's value.
    pub worst_membership: f64,
    /// Largest distance from a selected value to the guide.
    pub guide_gap: f64,
}

/// Builds a selection of a graded family of mappings near a guide.
///
/// `targets[k]` is the mapping available at level `k` (graded upward:
/// each cell's value should grow with `k`); `guide` is a function the
/// result must stay `eps`-close to, assumed to be a fine enough selection
/// already (checked).  Level `k` works inside the open ball around the
/// guide of radius the `(n-k)`-th iterate of `delta` at `eps`, so the
/// allowance widens as the level climbs and the finished selection stays
/// strictly inside `eps`.
pub fn local_select(
    domain: &Arc<Domain>,
    targets: &[SetValuedMap],
    guide: &[Point],
    delta: &Modulus,
    eps: f64,
    filler: &dyn SphereFiller,
    tols: &Tolerances,
) -> Result<LocalSelection, EngineError> {
    assert!(!targets.is_empty(), "at least one target mapping");
    assert!(eps > 0.0, "positive closeness budget");
    let top = targets.len() - 1;
    let n = domain.len();
    for t in targets {
        if t.len() != n {
            return Err(EngineError::LengthMismatch(t.len(), n));
        }
    }
    if guide.len() != n {
        return Err(EngineError::LengthMismatch(guide.len(), n));
    }

    let radii: Vec<f64> = (0..=top).map(|k| delta.iterate(top - k, eps)).collect();
    if let Err(v) = crate::regions::is_eps_selection(guide, &targets[0], radii[0]) {
        return Err(EngineError::GuideTooFar {
            point: v.cell,
            dist: v.dist,
            needed: radii[0],
        });
    }

    let mut phis: Vec<SetValuedMap> = Vec::with_capacity(top + 1);
    for k in 0..=top {
        let around_guide = guide_balls(guide, radii[k])?;
        phis.push(around_guide.intersect(&targets[k])?);
    }

    let (assembled, traces) = run_pipeline(domain, &phis, filler, tols)?;

    let mut guide_gap = 0.0f64;
    let mut gap_point = 0usize;
    for (x, (f, g)) in assembled.values.iter().zip(guide).enumerate() {
        let d = geom::dist(f, g);
        if d > guide_gap {
            guide_gap = d;
            gap_point = x;
        }
    }
    if guide_gap >= eps {
        return Err(EngineError::SelectionDrift {
            point: gap_point,
            dist: guide_gap,
            eps,
        });
    }
    let worst_membership = assembled
        .values
        .iter()
        .enumerate()
        .map(|(x, f)| targets[top].value(x).dist(f))
        .fold(0.0f64, f64::max);
    Ok(LocalSelection {
        assembled,
        traces,
        worst_membership,
        guide_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fillers::OracleFiller;
    use crate::regions::{ConvexCell, ConvexPrim, Piece};

    fn filler() -> OracleFiller {
        OracleFiller {
            depth: DEFAULT_DEPTH,
            bfs_step: 0.05,
            interior_tol: 1e-9,
            star_center: None,
        }
    }

    fn ball(c: f64, r: f64) -> Region {
        Region::ball(vec![c], r)
    }

    /// Left zone, an overlap zone holding both values, right zone.
    fn three_zone_map(n: usize) -> SetValuedMap {
        let a = Arc::new(ball(-1.0, 1.2));
        let b = Arc::new(ball(1.0, 1.2));
        let both = Arc::new(Region::union(vec![ball(-1.0, 1.2), ball(1.0, 1.2)]).unwrap());
        let lo = n / 3;
        let hi = 2 * n / 3;
        SetValuedMap::from_shared(
            (0..n)
                .map(|x| {
                    if x < lo {
                        a.clone()
                    } else if x < hi {
                        both.clone()
                    } else {
                        b.clone()
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    fn loose() -> Tolerances {
        Tolerances {
            locality: 2.5,
            membership: 1e-6,
        }
    }

    #[test]
    fn constant_mapping_needs_one_member() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = SetValuedMap::constant(21, ball(0.0, 1.0));
        let s = zero_skeletal(&phi, &domain, &Tolerances::default()).unwrap();
        assert_eq!(s.cover().len(), 1);
        assert_eq!(s.level(), 0);
        check_skeletal(&s, &phi, 1e-9).unwrap();
    }

    #[test]
    fn overlapping_values_share_members_where_possible() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = three_zone_map(21);
        let s = zero_skeletal(&phi, &domain, &loose()).unwrap();
        assert_eq!(s.cover().len(), 2);
        // Each member holds its pick exactly, so the invariant passes at
        // machine tolerance even though locality needed slack.
        check_skeletal(&s, &phi, 1e-9).unwrap();
        // The two members overlap exactly on the zone holding both values.
        let common = s.cover().common_points(&[0, 1]);
        assert_eq!(common.ones().collect::<Vec<_>>(), (7..14).collect::<Vec<_>>());
    }

    #[test]
    fn locality_violation_is_reported() {
        let domain = Domain::grid_1d(0.0, 0.05, 10);
        let a = Arc::new(ball(-5.0, 0.5));
        let b = Arc::new(ball(5.0, 0.5));
        let phi = SetValuedMap::from_shared(
            (0..10).map(|x| if x < 5 { a.clone() } else { b.clone() }).collect(),
        )
        .unwrap();
        let err = zero_skeletal(&phi, &domain, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, EngineError::NotLocallyConstant(_)));
    }

    #[test]
    fn invariant_check_catches_a_bad_value() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = SetValuedMap::constant(21, ball(0.0, 1.0));
        let s = zero_skeletal(&phi, &domain, &Tolerances::default()).unwrap();
        let tight = SetValuedMap::constant(21, ball(5.0, 0.1));
        let err = check_skeletal(&s, &tight, 1e-6).unwrap_err();
        match err {
            EngineError::Skeletal { dist, .. } => assert!(dist > 4.0),
            other => panic!("expected an invariant failure, got {other}"),
        }
    }

    #[test]
    fn transfer_to_the_same_cover_is_exact() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = three_zone_map(21);
        let s = zero_skeletal(&phi, &domain, &loose()).unwrap();
        let t = transfer(&s, s.cover()).unwrap();
        assert_eq!(t.level(), s.level());
        let before: Vec<_> = s.map().values().collect();
        let after: Vec<_> = t.map().values().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn transfer_to_a_finer_cover_keeps_the_invariant() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = three_zone_map(21);
        let s = zero_skeletal(&phi, &domain, &loose()).unwrap();
        // A finer cover: split each member's zone into overlapping halves.
        let sets = vec![
            PointSet::from_indices(21, &(0..8).collect::<Vec<_>>()),
            PointSet::from_indices(21, &(6..14).collect::<Vec<_>>()),
            PointSet::from_indices(21, &(7..16).collect::<Vec<_>>()),
            PointSet::from_indices(21, &(13..21).collect::<Vec<_>>()),
        ];
        let labels = (0..4).map(|i| format!("f{i:02}")).collect();
        let fine = Arc::new(Cover::from_sets(domain.clone(), labels, sets).unwrap());
        let t = transfer(&s, &fine).unwrap();
        assert_eq!(t.cover().len(), 4);
        check_skeletal(&t, &phi, 1e-9).unwrap();
        // Values are inherited bitwise from the coarse member containing
        // each fine member.
        let assignment = refining_map(&fine, s.cover()).unwrap();
        for i in 0..4 {
            let fv = t
                .map()
                .lattice_value(&LatticeKey::vertex(fine.vertex(i), t.map().depth()))
                .unwrap();
            let coarse_vertex = assignment.image(&fine.vertex(i)).unwrap().clone();
            let cv = s
                .map()
                .lattice_value(&LatticeKey::vertex(coarse_vertex, s.map().depth()))
                .unwrap();
            assert_eq!(fv, cv);
        }
    }

    #[test]
    fn lift_fills_the_overlap_and_keeps_the_invariant() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = three_zone_map(21);
        let s = zero_skeletal(&phi, &domain, &loose()).unwrap();
        let out = lift(&s, &phi, &filler(), &loose()).unwrap();
        let lifted = &out.selection;
        assert_eq!(lifted.level(), 1);
        check_skeletal(lifted, &phi, 1e-6).unwrap();
        // The overlap forces at least one edge fill.
        assert!(!out.trace.fills.is_empty());
        assert!(out.trace.fills.iter().all(|f| f.kind == "path"));
        // Audit flags hold on the point sets.
        assert!(out.trace.choices.iter().all(|c| {
            c.common_inside_assigned
                && c.common_inside_witness
                && c.base_in_intersection
        }));
        // Every bundle stayed inside its value.
        assert!(out
            .trace
            .classes
            .iter()
            .all(|c| c.worst_membership <= 1e-6));
    }

    #[test]
    fn lift_of_a_constant_mapping_is_trivial() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = SetValuedMap::constant(21, ball(0.0, 1.0));
        let s = zero_skeletal(&phi, &domain, &Tolerances::default()).unwrap();
        let out = lift(&s, &phi, &filler(), &Tolerances::default()).unwrap();
        assert!(out.trace.fills.is_empty());
        assert_eq!(out.selection.level(), 1);
        check_skeletal(&out.selection, &phi, 1e-9).unwrap();
    }

    #[test]
    fn levels_past_the_shipped_fillers_are_rejected() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = SetValuedMap::constant(21, ball(0.0, 1.0));
        let s = zero_skeletal(&phi, &domain, &Tolerances::default()).unwrap();
        let one = lift(&s, &phi, &filler(), &Tolerances::default()).unwrap();
        let two = lift(&one.selection, &phi, &filler(), &Tolerances::default()).unwrap();
        let err = lift(&two.selection, &phi, &filler(), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, EngineError::UnsupportedLevel(2)));
    }

    #[test]
    fn assembly_is_continuous_within_its_own_bound() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = three_zone_map(21);
        let s = zero_skeletal(&phi, &domain, &loose()).unwrap();
        let out = lift(&s, &phi, &filler(), &loose()).unwrap();
        let assembled = assemble(&out.selection).unwrap();
        assert_eq!(assembled.values.len(), 21);
        assert!(assembled.max_jump <= assembled.continuity_bound + 1e-12);
        // Every assembled value lies in (or within a hair of) the value.
        for (x, f) in assembled.values.iter().enumerate() {
            assert!(phi.value(x).dist(f) <= 1e-6, "point {x} escaped");
        }
    }

    #[test]
    fn assembly_requires_the_level_to_reach_the_dimension() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let phi = three_zone_map(21);
        let s = zero_skeletal(&phi, &domain, &loose()).unwrap();
        let err = assemble(&s).unwrap_err();
        assert!(matches!(
            err,
            EngineError::LevelBelowDim { level: 0, dim: 1 }
        ));
    }

    #[test]
    fn local_select_stays_near_the_guide() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let target = SetValuedMap::constant(21, ball(0.0, 1.0));
        let targets = vec![target.clone(), target.clone()];
        // A guide inside the ball, wobbling gently.
        let guide: Vec<Point> = (0..21)
            .map(|x| vec![0.3 * (x as f64 * 0.3).sin()])
            .collect();
        let delta = Modulus::linear(0.5).unwrap();
        // The guide moves ~0.09 per grid step, so the locality budget has
        // to cover that much drift between adjacent cells.
        let tols = Tolerances {
            locality: 0.12,
            ..Tolerances::default()
        };
        let result = local_select(&domain, &targets, &guide, &delta, 0.5, &filler(), &tols).unwrap();
        assert!(result.guide_gap < 0.5);
        assert!(result.worst_membership <= 1e-9);
        assert_eq!(result.traces.len(), 1);
    }

    #[test]
    fn local_select_rejects_a_far_guide() {
        let domain = Domain::grid_1d(0.0, 0.05, 21);
        let target = SetValuedMap::constant(21, ball(0.0, 1.0));
        let targets = vec![target.clone(), target];
        let guide: Vec<Point> = (0..21).map(|_| vec![9.0]).collect();
        let delta = Modulus::linear(0.5).unwrap();
        let err = local_select(
            &domain,
            &targets,
            &guide,
            &delta,
            0.5,
            &filler(),
            &Tolerances::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EngineError::GuideTooFar { .. }));
    }

    #[test]
    fn open_ball_values_keep_picks_strictly_inside() {
        // An open value forces representatives into the interior; the
        // zero-level stage must still certify membership.
        let domain = Domain::grid_1d(0.0, 0.05, 11);
        let open_ball = Region::new(
            vec![Piece::Convex(ConvexCell {
                prims: vec![ConvexPrim::Ball {
                    center: vec![0.0],
                    radius: 1.0,
                    inflate: 0.0,
                }],
            })],
            true,
        )
        .unwrap();
        let phi = SetValuedMap::constant(11, open_ball);
        let s = zero_skeletal(&phi, &domain, &Tolerances::default()).unwrap();
        assert_eq!(s.cover().len(), 1);
        check_skeletal(&s, &phi, 1e-9).unwrap();
    }
}

//! Finite abstract simplicial complexes over interned vertex labels.
//!
//! A complex is stored as the full set of its simplices (downward closed by
//! construction), each simplex as a sorted duplicate-free vertex list so
//! that identity is canonical.  Complexes are immutable after construction;
//! derived complexes (skeleta, closures) are new values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Errors raised by complex construction and simplicial-map checking.
#[derive(Debug, Error)]
pub enum ComplexError {
    /// A listed simplex had no vertices.
    #[error("empty simplex")]
    EmptySimplex,
    /// A vertex of the source complex has no image under the map.
    #[error("unmapped vertex: {0}")]
    UnmappedVertex(VertexId),
    /// The image of a source simplex is not a simplex of the target;
    /// carries the first violating source simplex in sorted order.
    #[error("image of {0} is not a simplex of the target complex")]
    NotSimplicial(Simplex),
    /// An isomorphism candidate is not a vertex bijection; carries a vertex
    /// at which injectivity or surjectivity fails.
    #[error("vertex map is not a bijection at {0}")]
    NotBijective(VertexId),
}

/// An interned vertex label.  Distinct labels compare unequal and the
/// ordering (lexicographic on the label) is total and deterministic.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(Arc<str>);

impl VertexId {
    /// Interns `label` as a vertex identifier.
    pub fn new(label: impl AsRef<str>) -> Self {
        VertexId(Arc::from(label.as_ref()))
    }

    /// The underlying label.
    pub fn label(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId::new(s)
    }
}

/// A nonempty finite vertex set, kept sorted and duplicate-free.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Simplex(Vec<VertexId>);

impl Simplex {
    /// Builds a simplex from an arbitrary vertex list; sorts and dedups.
    /// Fails on an empty list.
    pub fn new(vertices: impl IntoIterator<Item = VertexId>) -> Result<Self, ComplexError> {
        let mut vs: Vec<VertexId> = vertices.into_iter().collect();
        vs.sort();
        vs.dedup();
        if vs.is_empty() {
            return Err(ComplexError::EmptySimplex);
        }
        Ok(Simplex(vs))
    }

    /// The sorted vertex list.
    pub fn vertices(&self) -> &[VertexId] {
        &self.0
    }

    /// Number of vertices.
    pub fn card(&self) -> usize {
        self.0.len()
    }

    /// Dimension, `card - 1`.
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    /// Whether `v` is a vertex of this simplex.
    pub fn contains(&self, v: &VertexId) -> bool {
        self.0.binary_search(v).is_ok()
    }

    /// Whether every vertex of `self` is a vertex of `other`.
    pub fn is_face_of(&self, other: &Simplex) -> bool {
        self.0.iter().all(|v| other.contains(v))
    }

    /// All nonempty subsets of this simplex (its closure), including itself.
    pub fn faces(&self) -> Vec<Simplex> {
        let n = self.0.len();
        let mut out = Vec::with_capacity((1usize << n) - 1);
        for mask in 1u64..(1u64 << n) {
            let vs: Vec<VertexId> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| self.0[i].clone())
                .collect();
            out.push(Simplex(vs));
        }
        out
    }
}

impl fmt::Debug for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Display for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// A finite abstract simplicial complex: a downward-closed set of simplices.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct SimplicialComplex {
    simplices: BTreeSet<Simplex>,
}

impl SimplicialComplex {
    /// The empty complex (no simplices).
    pub fn empty() -> Self {
        SimplicialComplex {
            simplices: BTreeSet::new(),
        }
    }

    /// Builds the downward closure of the given generating simplices.
    ///
    /// The generators need not be the maximal simplices and may overlap;
    /// every nonempty subset of each generator becomes a simplex.  Fails if
    /// any generator is empty.
    pub fn from_maximal<I, S>(generators: I) -> Result<Self, ComplexError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = VertexId>,
    {
        let mut simplices = BTreeSet::new();
        for gen in generators {
            let s = Simplex::new(gen)?;
            for face in s.faces() {
                simplices.insert(face);
            }
        }
        Ok(SimplicialComplex { simplices })
    }

    /// Wraps a simplex set that is already downward closed (checked in
    /// debug builds).
    pub fn from_closed_set(simplices: BTreeSet<Simplex>) -> Self {
        let complex = SimplicialComplex { simplices };
        debug_assert!(
            complex
                .simplices
                .iter()
                .all(|s| s.faces().into_iter().all(|f| complex.simplices.contains(&f))),
            "simplex set is not downward closed"
        );
        complex
    }

    /// Iterates all simplices in sorted order.
    pub fn simplices(&self) -> impl Iterator<Item = &Simplex> {
        self.simplices.iter()
    }

    /// Number of simplices.
    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    /// Whether the complex has no simplices.
    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    /// Whether `s` is a simplex of this complex.
    pub fn contains(&self, s: &Simplex) -> bool {
        self.simplices.contains(s)
    }

    /// The vertices (0-simplices), sorted.
    pub fn vertex_set(&self) -> Vec<VertexId> {
        self.simplices
            .iter()
            .filter(|s| s.card() == 1)
            .map(|s| s.vertices()[0].clone())
            .collect()
    }

    /// Dimension of the complex: the largest simplex dimension, or `None`
    /// for the empty complex.
    pub fn dim(&self) -> Option<usize> {
        self.simplices.iter().map(|s| s.dim()).max()
    }

    /// The `k`-skeleton: all simplices with at most `k + 1` vertices.
    pub fn skeleton(&self, k: usize) -> SimplicialComplex {
        SimplicialComplex {
            simplices: self
                .simplices
                .iter()
                .filter(|s| s.card() <= k + 1)
                .cloned()
                .collect(),
        }
    }

    /// The maximal simplices (those that are a face of no larger simplex).
    pub fn maximal_simplices(&self) -> Vec<Simplex> {
        self.simplices
            .iter()
            .filter(|s| {
                !self
                    .simplices
                    .iter()
                    .any(|t| t.card() > s.card() && s.is_face_of(t))
            })
            .cloned()
            .collect()
    }
}

/// A vertex assignment between two complexes.
///
/// Validity (that it is simplicial, i.e. sends simplices to simplices) is
/// established by [`check_simplicial_map`]; the type itself only stores the
/// vertex map so the same assignment can be checked against several
/// complexes.
#[derive(Clone, Debug, Default)]
pub struct SimplicialMap {
    map: BTreeMap<VertexId, VertexId>,
}

impl SimplicialMap {
    /// Builds a map from explicit vertex pairs.
    pub fn new(pairs: impl IntoIterator<Item = (VertexId, VertexId)>) -> Self {
        SimplicialMap {
            map: pairs.into_iter().collect(),
        }
    }

    /// The identity on the vertices of `k`.
    pub fn identity(k: &SimplicialComplex) -> Self {
        SimplicialMap {
            map: k.vertex_set().into_iter().map(|v| (v.clone(), v)).collect(),
        }
    }

    /// Image of a single vertex, if assigned.
    pub fn image(&self, v: &VertexId) -> Option<&VertexId> {
        self.map.get(v)
    }

    /// Inserts or replaces one assignment.
    pub fn insert(&mut self, from: VertexId, to: VertexId) {
        self.map.insert(from, to);
    }

    /// Image of a simplex: the set of vertex images (duplicates merge).
    /// Fails with the unmapped vertex if the assignment is not total on `s`.
    pub fn image_simplex(&self, s: &Simplex) -> Result<Simplex, ComplexError> {
        let mut vs = Vec::with_capacity(s.card());
        for v in s.vertices() {
            match self.map.get(v) {
                Some(w) => vs.push(w.clone()),
                None => return Err(ComplexError::UnmappedVertex(v.clone())),
            }
        }
        Simplex::new(vs)
    }

    /// Composition `other . self` (apply `self` first).
    pub fn then(&self, other: &SimplicialMap) -> Result<SimplicialMap, ComplexError> {
        let mut map = BTreeMap::new();
        for (v, w) in &self.map {
            match other.map.get(w) {
                Some(u) => {
                    map.insert(v.clone(), u.clone());
                }
                None => return Err(ComplexError::UnmappedVertex(w.clone())),
            }
        }
        Ok(SimplicialMap { map })
    }

    /// The assignment pairs in sorted order.
    pub fn pairs(&self) -> impl Iterator<Item = (&VertexId, &VertexId)> {
        self.map.iter()
    }
}

/// Checks that `f` is a simplicial map from `k1` to `k2`: total on the
/// vertices of `k1` and sending every simplex of `k1` to a simplex of `k2`.
/// On failure returns the unmapped vertex or the first violating simplex.
pub fn check_simplicial_map(
    f: &SimplicialMap,
    k1: &SimplicialComplex,
    k2: &SimplicialComplex,
) -> Result<(), ComplexError> {
    for v in k1.vertex_set() {
        if f.image(&v).is_none() {
            return Err(ComplexError::UnmappedVertex(v));
        }
    }
    for s in k1.simplices() {
        let img = f.image_simplex(s)?;
        if !k2.contains(&img) {
            return Err(ComplexError::NotSimplicial(s.clone()));
        }
    }
    Ok(())
}

/// Checks that `f` is a simplicial isomorphism from `k1` onto `k2`:
/// a vertex bijection that is simplicial in both directions and matches the
/// simplex sets exactly.
pub fn check_simplicial_iso(
    f: &SimplicialMap,
    k1: &SimplicialComplex,
    k2: &SimplicialComplex,
) -> Result<(), ComplexError> {
    check_simplicial_map(f, k1, k2)?;
    let inverse = SimplicialMap::new(f.pairs().map(|(v, w)| (w.clone(), v.clone())));
    // Injectivity: inverting must undo `f` on every vertex of `k1` (a merged
    // pair keeps only the later preimage and the round trip breaks).
    for v in k1.vertex_set() {
        let w = f.image(&v).expect("totality was just checked");
        if inverse.image(w) != Some(&v) {
            return Err(ComplexError::NotBijective(v));
        }
    }
    // Surjectivity: every vertex of `k2` must be hit.
    for w in k2.vertex_set() {
        if inverse.image(&w).is_none() {
            return Err(ComplexError::NotBijective(w));
        }
    }
    check_simplicial_map(&inverse, k2, k1)?;
    // A vertex bijection that is simplicial in both directions induces
    // injections between the two simplex sets, so the counts must agree.
    debug_assert_eq!(k1.len(), k2.len());
    Ok(())
}

/// Convenience: vertex ids from string labels.
pub fn vids<const N: usize>(labels: [&str; N]) -> [VertexId; N] {
    labels.map(VertexId::new)
}

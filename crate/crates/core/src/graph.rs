//! Undirected interaction graphs, their Laplacians, and switching schedules.

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalues below this fraction of the largest one count as zero.
pub const ZERO_EIGEN_REL_TOL: f64 = 1e-8;

/// Slack on dwell-time comparisons, absorbing rounding in breakpoint times.
const DWELL_TOL: f64 = 1e-12;

/// Simple undirected graph on nodes `0..n`. Edges are stored once as `(i, k)`
/// with `i < k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph from zero-based node pairs.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("node count {n} < 2")));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {}", a + 1)));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) references a node outside 1..={n}",
                    a + 1,
                    b + 1
                )));
            }
            if !set.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
        }
        Ok(Self { n, edges: set })
    }

    /// Builds a graph from one-based node pairs, as written in scenario files.
    pub fn from_one_based(n: usize, edges: &[[usize; 2]]) -> Result<Self> {
        if let Some(e) = edges.iter().find(|e| e[0] == 0 || e[1] == 0) {
            return Err(Error::InvalidGraph(format!(
                "edge ({}, {}) uses node 0; node indices are 1-based",
                e[0], e[1]
            )));
        }
        Self::new(n, edges.iter().map(|e| (e[0] - 1, e[1] - 1)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |k| (i, k))))
    }

    pub fn path(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i - 1, i)))
    }

    pub fn ring(n: usize) -> Result<Self> {
        if n < 3 {
            return Self::path(n);
        }
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    pub fn star(n: usize, center: usize) -> Result<Self> {
        Self::new(n, (0..n).filter(|&k| k != center).map(|k| (center, k)))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, k: usize) -> bool {
        self.edges.contains(&(i.min(k), i.max(k)))
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter_map(move |&(a, b)| {
            if a == i {
                Some(b)
            } else if b == i {
                Some(a)
            } else {
                None
            }
        })
    }

    /// Edges as one-based pairs, for serialisation.
    pub fn one_based_edges(&self) -> Vec<[usize; 2]> {
        self.edges.iter().map(|&(a, b)| [a + 1, b + 1]).collect()
    }
}

/// Symmetric weights for every unordered pair `i < k`, edges or not.
///
/// One slot per pair, so `w(i,k) == w(k,i)` holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    n: usize,
    values: Vec<f64>,
}

impl WeightState {
    /// All weights at their initial value 1.
    pub fn ones(n: usize) -> Self {
        Self {
            n,
            values: vec![1.0; pair_count(n)],
        }
    }

    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != pair_count(n) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} pair weights for n = {n}, got {}",
                pair_count(n),
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[pair_index(self.n, i, k)]
    }

    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        let idx = pair_index(self.n, i, k);
        self.values[idx] = value;
    }

    /// Weights in lexicographic pair order `(0,1), (0,2), …, (n-2,n-1)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the unordered pair `{i, k}` in lexicographic order.
pub fn pair_index(n: usize, i: usize, k: usize) -> usize {
    debug_assert!(i != k && i < n && k < n);
    let (a, b) = (i.min(k), i.max(k));
    a * (2 * n - a - 1) / 2 + (b - a - 1)
}

/// All unordered pairs `(i, k)`, `i < k`, in lexicographic order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |k| (i, k)))
}

/// Unit-weight Laplacian: `-1` on edges, degrees on the diagonal.
pub fn laplacian_01(graph: &Graph) -> DMatrix<f64> {
    let n = graph.n;
    let mut l = DMatrix::zeros(n, n);
    for (i, k) in graph.edges() {
        l[(i, k)] = -1.0;
        l[(k, i)] = -1.0;
        l[(i, i)] += 1.0;
        l[(k, k)] += 1.0;
    }
    l
}

/// Laplacian of the current edges weighted by `weights`. Weights on non-edges
/// are ignored.
pub fn weighted_laplacian(graph: &Graph, weights: &WeightState) -> Result<DMatrix<f64>> {
    if weights.n != graph.n {
        return Err(Error::DimensionMismatch(format!(
            "weights for {} nodes, graph has {}",
            weights.n, graph.n
        )));
    }
    let n = graph.n;
    let mut l = DMatrix::zeros(n, n);
    for (i, k) in graph.edges() {
        let w = weights.get(i, k);
        l[(i, k)] = -w;
        l[(k, i)] = -w;
        l[(i, i)] += w;
        l[(k, k)] += w;
    }
    Ok(l)
}

/// Breadth-first connectivity test.
pub fn is_connected(graph: &Graph) -> bool {
    let n = graph.n;
    let mut adj = vec![Vec::new(); n];
    for (i, k) in graph.edges() {
        adj[i].push(k);
        adj[k].push(i);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == n
}

/// Ascending eigenvalues of a symmetric (Laplacian) matrix.
pub fn laplacian_spectrum(l: &DMatrix<f64>) -> Result<Vec<f64>> {
    linalg::sym_eigenvalues(l)
}

/// Second-smallest Laplacian eigenvalue of the unit-weight Laplacian.
pub fn algebraic_connectivity(graph: &Graph) -> f64 {
    // A valid graph has n >= 2 and a symmetric Laplacian.
    laplacian_spectrum(&laplacian_01(graph))
        .map(|ev| ev[1])
        .unwrap_or(0.0)
}

/// Spectral connectivity test: `λ₂ > 1e-8 · max(1, λ_max)`.
pub fn is_connected_spectral(graph: &Graph) -> bool {
    let ev = match laplacian_spectrum(&laplacian_01(graph)) {
        Ok(ev) => ev,
        Err(_) => return false,
    };
    let top = ev.last().copied().unwrap_or(0.0).max(1.0);
    ev[1] > ZERO_EIGEN_REL_TOL * top
}

/// `I − 𝟙𝟙ᵀ/n`: the Laplacian of the complete graph with edge weights `1/n`.
pub fn complete_projection(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "projection needs n >= 2, got {n}"
        )));
    }
    let inv = 1.0 / n as f64;
    Ok(DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            1.0 - inv
        } else {
            -inv
        }
    }))
}

/// A finite set of connected graphs on a common node set, with a dwell time.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSet {
    graphs: Vec<Graph>,
    dwell: f64,
}

impl SwitchingSet {
    pub fn new(graphs: Vec<Graph>, dwell: f64) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("switching set is empty".into()));
        }
        if !(dwell > 0.0) || !dwell.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dwell time must be > 0, got {dwell}"
            )));
        }
        let n = graphs[0].n;
        for (idx, g) in graphs.iter().enumerate() {
            if g.n != n {
                return Err(Error::InvalidGraph(format!(
                    "graph {} has {} nodes, expected {n}",
                    idx + 1,
                    g.n
                )));
            }
            if !is_connected(g) {
                return Err(Error::InvalidGraph(format!(
                    "graph {} is not connected",
                    idx + 1
                )));
            }
        }
        Ok(Self { graphs, dwell })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, index: usize) -> &Graph {
        &self.graphs[index]
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn dwell(&self) -> f64 {
        self.dwell
    }

    pub fn node_count(&self) -> usize {
        self.graphs[0].n
    }
}

/// The bundled six-node switching set: ring, ring with chord 1–4, star
/// centred at node 1, and path.
pub fn default_switching_set(dwell: f64) -> Result<SwitchingSet> {
    let ring = Graph::ring(6)?;
    let chord = Graph::new(6, ring.edges().chain(std::iter::once((0, 3))))?;
    SwitchingSet::new(
        vec![ring, chord, Graph::star(6, 0)?, Graph::path(6)?],
        dwell,
    )
}

/// Piecewise-constant, right-continuous switching signal.
///
/// Segment `m` covers `[breakpoints[m], breakpoints[m+1])` and uses graph
/// `indices[m]`; the last segment extends to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    breakpoints: Vec<f64>,
    indices: Vec<usize>,
}

impl SwitchingSchedule {
    pub fn new(breakpoints: Vec<f64>, indices: Vec<usize>, set: &SwitchingSet) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != indices.len() {
            return Err(Error::InvalidArgument(format!(
                "schedule needs matching non-empty breakpoint/index lists ({} vs {})",
                breakpoints.len(),
                indices.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidArgument(format!(
                "first breakpoint must be 0, got {}",
                breakpoints[0]
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[1] - w[0] >= set.dwell() - DWELL_TOL) {
                return Err(Error::InvalidArgument(format!(
                    "switch gap {} between t = {} and t = {} is below dwell time {}",
                    w[1] - w[0],
                    w[0],
                    w[1],
                    set.dwell()
                )));
            }
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= set.len()) {
            return Err(Error::InvalidArgument(format!(
                "graph index {bad} out of range for a set of {}",
                set.len()
            )));
        }
        Ok(Self {
            breakpoints,
            indices,
        })
    }

    /// Always-on schedule for a single graph index.
    pub fn constant(index: usize) -> Self {
        Self {
            breakpoints: vec![0.0],
            indices: vec![index],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Graph index active at time `t`; a switch instant belongs to the new graph.
    pub fn index_at(&self, t: f64) -> usize {
        let pos = self.breakpoints.partition_point(|&b| b <= t);
        self.indices[pos.saturating_sub(1)]
    }

    /// `(start, end, graph index)` for every segment that intersects `[0, horizon)`.
    pub fn segments(&self, horizon: f64) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for (m, (&start, &idx)) in self.breakpoints.iter().zip(&self.indices).enumerate() {
            if start >= horizon {
                break;
            }
            let end = self
                .breakpoints
                .get(m + 1)
                .copied()
                .unwrap_or(horizon)
                .min(horizon);
            out.push((start, end, idx));
        }
        out
    }
}

/// Switches at every multiple of `interval` below `horizon`, drawing each
/// graph uniformly from the set with a ChaCha8 generator seeded by `seed`.
pub fn sample_switching_signal(
    set: &SwitchingSet,
    horizon: f64,
    interval: f64,
    seed: u64,
) -> Result<SwitchingSchedule> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be > 0, got {horizon}"
        )));
    }
    if !(interval >= set.dwell() - DWELL_TOL) {
        return Err(Error::InvalidArgument(format!(
            "switch interval {interval} is below dwell time {}",
            set.dwell()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut breakpoints = Vec::new();
    let mut indices = Vec::new();
    let mut m = 0u64;
    loop {
        let t = m as f64 * interval;
        if t >= horizon - DWELL_TOL * horizon.max(1.0) && m > 0 {
            break;
        }
        breakpoints.push(t);
        indices.push(rng.random_range(0..set.len()));
        m += 1;
    }
    SwitchingSchedule::new(breakpoints, indices, set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::path(3).unwrap()
    }

    #[test]
    fn laplacian_of_path() {
        let l = laplacian_01(&path3());
        let expect =
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l, expect);
    }

    #[test]
    fn laplacian_single_edge_and_complete() {
        let l = laplacian_01(&Graph::new(2, [(0, 1)]).unwrap());
        assert_eq!(l, DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let k6 = laplacian_01(&Graph::complete(6).unwrap());
        for i in 0..6 {
            for k in 0..6 {
                assert_eq!(k6[(i, k)], if i == k { 5.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn weighted_laplacian_path() {
        let g = path3();
        let mut w = WeightState::ones(3);
        assert_eq!(weighted_laplacian(&g, &w).unwrap(), laplacian_01(&g));
        w.set(0, 1, 2.0);
        w.set(1, 2, 3.0);
        let expect =
            DMatrix::from_row_slice(3, 3, &[2.0, -2.0, 0.0, -2.0, 5.0, -3.0, 0.0, -3.0, 3.0]);
        assert_eq!(weighted_laplacian(&g, &w).unwrap(), expect);
        w.set(0, 2, 7.0);
        assert_eq!(weighted_laplacian(&g, &w).unwrap(), expect);
    }

    #[test]
    fn connectivity() {
        assert!(is_connected(&path3()));
        assert!(!is_connected(&Graph::new(4, [(0, 1), (2, 3)]).unwrap()));
        assert!(is_connected(&Graph::complete(6).unwrap()));
        assert!(!is_connected_spectral(
            &Graph::new(4, [(0, 1), (2, 3)]).unwrap()
        ));
    }

    #[test]
    fn invalid_graphs_rejected() {
        assert!(Graph::new(3, [(1, 1)]).is_err());
        assert!(Graph::new(3, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::new(3, [(0, 3)]).is_err());
        assert!(Graph::new(1, []).is_err());
        assert!(Graph::from_one_based(3, &[[0, 1]]).is_err());
    }

    #[test]
    fn spectrum_of_path_matches_characteristic_roots() {
        // λ(λ² − 4λ + 3) = 0
        let ev = laplacian_spectrum(&laplacian_01(&path3())).unwrap();
        for (got, want) in ev.iter().zip([0.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn spectrum_of_complete_graph_and_projection() {
        for n in 2..8 {
            let ev = laplacian_spectrum(&laplacian_01(&Graph::complete(n).unwrap())).unwrap();
            assert!(ev[0].abs() < 1e-10);
            assert!(ev[1..].iter().all(|&v| (v - n as f64).abs() < 1e-10));
            let ev = laplacian_spectrum(&complete_projection(n).unwrap()).unwrap();
            assert!(ev[0].abs() < 1e-12);
            assert!(ev[1..].iter().all(|&v| (v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn spectrum_rejects_nonsymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 1.0]);
        assert!(laplacian_spectrum(&m).is_err());
    }

    #[test]
    fn projection_properties() {
        assert_eq!(
            complete_projection(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5])
        );
        assert!(complete_projection(1).is_err());
        for n in 2..9 {
            let p = complete_projection(n).unwrap();
            let ones = nalgebra::DVector::from_element(n, 1.0);
            assert!((&p * ones).amax() < 1e-15);
            assert!((&p * &p - &p).amax() < 1e-12);
            let scaled = laplacian_01(&Graph::complete(n).unwrap()) / n as f64;
            assert!((scaled - &p).amax() < 1e-15);
        }
    }

    #[test]
    fn pair_indexing_is_lexicographic() {
        let n = 6;
        for (idx, (i, k)) in pairs(n).enumerate() {
            assert_eq!(pair_index(n, i, k), idx);
            assert_eq!(pair_index(n, k, i), idx);
        }
        assert_eq!(pair_count(6), 15);
    }

    #[test]
    fn default_set_is_connected() {
        let set = default_switching_set(0.5).unwrap();
        assert_eq!(set.len(), 4);
        for g in set.graphs() {
            assert_eq!(is_connected(g), is_connected_spectral(g));
            assert!(algebraic_connectivity(g) > 1e-8);
            let ev = laplacian_spectrum(&laplacian_01(g)).unwrap();
            assert!(ev[0] >= -1e-10);
        }
    }

    #[test]
    fn switching_set_rejects_disconnected_and_bad_dwell() {
        let bad = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(SwitchingSet::new(vec![bad], 0.5).is_err());
        assert!(SwitchingSet::new(vec![Graph::path(4).unwrap()], 0.0).is_err());
        assert!(
            SwitchingSet::new(vec![Graph::path(4).unwrap(), Graph::path(5).unwrap()], 0.5).is_err()
        );
    }

    #[test]
    fn sampler_counts_and_determinism() {
        let set = default_switching_set(0.5).unwrap();
        let s = sample_switching_signal(&set, 2.0, 0.5, 7).unwrap();
        assert_eq!(s.breakpoints(), &[0.0, 0.5, 1.0, 1.5]);
        assert_eq!(s.segments(2.0).len(), 4);
        let again = sample_switching_signal(&set, 2.0, 0.5, 7).unwrap();
        assert_eq!(s, again);
        assert!(sample_switching_signal(&set, 2.0, 0.25, 7).is_err());

        let single = SwitchingSet::new(vec![Graph::ring(6).unwrap()], 0.5).unwrap();
        let s = sample_switching_signal(&single, 3.0, 0.5, 1).unwrap();
        assert!(s.indices().iter().all(|&i| i == 0));
    }

    #[test]
    fn schedule_validation_and_lookup() {
        let set = default_switching_set(0.5).unwrap();
        assert!(SwitchingSchedule::new(vec![0.0, 0.3], vec![0, 1], &set).is_err());
        assert!(SwitchingSchedule::new(vec![0.0, 0.7], vec![0, 9], &set).is_err());
        let s = SwitchingSchedule::new(vec![0.0, 0.7, 1.5], vec![0, 1, 2], &set).unwrap();
        assert_eq!(s.index_at(0.0), 0);
        assert_eq!(s.index_at(0.69), 0);
        assert_eq!(s.index_at(0.7), 1);
        assert_eq!(s.index_at(10.0), 2);
        assert_eq!(s.segments(1.0), vec![(0.0, 0.7, 0), (0.7, 1.0, 1)]);
    }
}

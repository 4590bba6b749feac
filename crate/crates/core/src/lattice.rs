//! Lattice geometry, exponential weight profiles, and the concentrated
//! multi-mode moment functional `W_v^k`.
//!
//! Distances are graph shortest paths on the edge set (self-loops allowed for
//! on-mode Hamiltonian terms, ignored by the metric). The decay constant of a
//! weight profile must satisfy `κ > 1` so the normalization admits
//! size-independent bounds.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::fock::{site_moment_mat, DensityMatrix, ModeSpace};
use crate::linalg::CMat;

/// Finite lattice graph `(V, E)` with `V ⊂ ℤ^D` and a cached shortest-path
/// distance table.
#[derive(Clone, Debug)]
pub struct LatticeGeometry {
    dimension: usize,
    nodes: Vec<Vec<i64>>,
    edges: Vec<(usize, usize)>,
    dist: Vec<Vec<u32>>,
}

impl LatticeGeometry {
    pub fn from_parts(
        dimension: usize,
        nodes: Vec<Vec<i64>>,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter("lattice needs at least one node".into()));
        }
        for n in &nodes {
            if n.len() != dimension {
                return Err(Error::InvalidParameter(format!(
                    "node {:?} does not have dimension {dimension}",
                    n
                )));
            }
        }
        for &(i, j) in &edges {
            if i >= nodes.len() || j >= nodes.len() {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i}, {j}) references a missing node"
                )));
            }
        }
        let dist = bfs_distances(nodes.len(), &edges)?;
        Ok(LatticeGeometry {
            dimension,
            nodes,
            edges,
            dist,
        })
    }

    /// 1D chain of `m` nodes with nearest-neighbour edges.
    pub fn chain(m: usize) -> Result<Self> {
        let nodes: Vec<Vec<i64>> = (0..m as i64).map(|x| vec![x]).collect();
        let edges: Vec<(usize, usize)> = (1..m).map(|i| (i - 1, i)).collect();
        Self::from_parts(1, nodes, edges)
    }

    /// 2D grid `w × h` with nearest-neighbour edges.
    pub fn grid(w: usize, h: usize) -> Result<Self> {
        let mut nodes = Vec::with_capacity(w * h);
        for x in 0..w as i64 {
            for y in 0..h as i64 {
                nodes.push(vec![x, y]);
            }
        }
        let idx = |x: usize, y: usize| x * h + y;
        let mut edges = Vec::new();
        for x in 0..w {
            for y in 0..h {
                if x + 1 < w {
                    edges.push((idx(x, y), idx(x + 1, y)));
                }
                if y + 1 < h {
                    edges.push((idx(x, y), idx(x, y + 1)));
                }
            }
        }
        Self::from_parts(2, nodes, edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nodes(&self) -> &[Vec<i64>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.iter().any(|&(a, b)| (a, b) == (i, j) || (a, b) == (j, i))
    }

    /// Number of edges incident to node `i` (a self-loop counts once).
    pub fn connectivity(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn dist(&self, i: usize, j: usize) -> u32 {
        self.dist[i][j]
    }

    pub fn max_dist_from(&self, v: usize) -> u32 {
        *self.dist[v].iter().max().unwrap()
    }
}

fn bfs_distances(n: usize, edges: &[(usize, usize)]) -> Result<Vec<Vec<u32>>> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut dist = vec![vec![u32::MAX; n]; n];
    for start in 0..n {
        let d = &mut dist[start];
        d[start] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if d[w] == u32::MAX {
                    d[w] = d[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if d.iter().any(|&x| x == u32::MAX) {
            return Err(Error::InvalidParameter(
                "lattice graph is not connected".into(),
            ));
        }
    }
    Ok(dist)
}

/// Serializable lattice description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dimension: usize,
    pub nodes: Vec<Vec<i64>>,
    pub edges: EdgeSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeSpec {
    /// `"nearest-neighbour"`: connect nodes at L1 distance 1.
    Named(String),
    Explicit(Vec<(usize, usize)>),
}

impl LatticeSpec {
    pub fn build(&self) -> Result<LatticeGeometry> {
        let edges = match &self.edges {
            EdgeSpec::Explicit(e) => e.clone(),
            EdgeSpec::Named(name) if name == "nearest-neighbour" => {
                let mut edges = Vec::new();
                for i in 0..self.nodes.len() {
                    for j in (i + 1)..self.nodes.len() {
                        let l1: i64 = self.nodes[i]
                            .iter()
                            .zip(&self.nodes[j])
                            .map(|(a, b)| (a - b).abs())
                            .sum();
                        if l1 == 1 {
                            edges.push((i, j));
                        }
                    }
                }
                edges
            }
            EdgeSpec::Named(other) => {
                return Err(Error::InvalidParameter(format!(
                    "unknown edge generator '{other}'"
                )))
            }
        };
        LatticeGeometry::from_parts(self.dimension, self.nodes.clone(), edges)
    }

    pub fn of(lat: &LatticeGeometry) -> Self {
        LatticeSpec {
            dimension: lat.dimension,
            nodes: lat.nodes.clone(),
            edges: EdgeSpec::Explicit(lat.edges.clone()),
        }
    }
}

/// Normalization `Z_v = Σ_i e^{-κ·dist(v,i)}` with its analytic sandwich.
#[derive(Clone, Copy, Debug)]
pub struct Normalization {
    pub z: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Computes `Z_v` together with system-size-independent bounds.
///
/// Lower bound: the geometric sum `Σ_{ℓ=0}^{K} e^{-κℓ}` over occupied
/// distance shells (each shell up to `K = max_i dist(v,i)` holds at least one
/// node on a connected graph). Upper bound: `e^{2D-1} / (1 - e^{-(κ-1)})`
/// from the shell-cardinality estimate, which is what requires `κ > 1`.
pub fn normalization(lat: &LatticeGeometry, v: usize, kappa: f64) -> Result<Normalization> {
    if kappa <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "weight decay must satisfy κ > 1, got {kappa}"
        )));
    }
    if v >= lat.len() {
        return Err(Error::ModeOutOfRange {
            index: v,
            modes: lat.len(),
        });
    }
    let z: f64 = (0..lat.len())
        .map(|i| (-(kappa * lat.dist(v, i) as f64)).exp())
        .sum();
    let k_max = lat.max_dist_from(v) as f64;
    let lower = (1.0 - (-(kappa * (k_max + 1.0))).exp()) / (1.0 - (-kappa).exp());
    let d = lat.dimension() as f64;
    let upper = (2.0 * d - 1.0).exp() / (1.0 - (-(kappa - 1.0)).exp());
    assert!(
        lower <= z + 1e-12 && z <= upper + 1e-12,
        "normalization sandwich violated: {lower} <= {z} <= {upper}"
    );
    Ok(Normalization { z, lower, upper })
}

/// Exponential weights `w_i = e^{-κ·dist(v,i)} / Z_v` centered at `v`.
#[derive(Clone, Debug)]
pub struct WeightProfile {
    pub center: usize,
    pub kappa: f64,
    pub z: f64,
    pub weights: Vec<f64>,
}

impl WeightProfile {
    pub fn new(lat: &LatticeGeometry, center: usize, kappa: f64) -> Result<Self> {
        let norm = normalization(lat, center, kappa)?;
        let weights = (0..lat.len())
            .map(|i| (-(kappa * lat.dist(center, i) as f64)).exp() / norm.z)
            .collect();
        Ok(WeightProfile {
            center,
            kappa,
            z: norm.z,
            weights,
        })
    }

    pub fn modes(&self) -> usize {
        self.weights.len()
    }
}

/// `Σ_i w_i tr[x (N_i+1)^k]` for a Hermitian matrix on the tensor space;
/// equals `‖W_v^k(ρ)‖₁` when `ρ` is a state.
pub fn weighted_moment_mat(
    profile: &WeightProfile,
    mat: &CMat,
    space: ModeSpace,
    k: f64,
) -> Result<f64> {
    if space.modes != profile.modes() {
        return Err(Error::DimMismatch(format!(
            "state has {} modes, profile {}",
            space.modes,
            profile.modes()
        )));
    }
    Ok(profile
        .weights
        .iter()
        .enumerate()
        .map(|(i, w)| w * site_moment_mat(mat, space, i, k))
        .sum())
}

pub fn weighted_moment(profile: &WeightProfile, rho: &DensityMatrix, k: f64) -> Result<f64> {
    weighted_moment_mat(profile, rho.mat(), rho.space(), k)
}

/// The operator `W_v^k(x) = Σ_i w_i (N_i+1)^{k/2} x (N_i+1)^{k/2}`.
pub fn wv_apply(profile: &WeightProfile, mat: &CMat, space: ModeSpace, k: f64) -> Result<CMat> {
    if space.modes != profile.modes() {
        return Err(Error::DimMismatch("mode count mismatch".into()));
    }
    let dim = space.dim();
    let mut out = CMat::zeros((dim, dim));
    for (i, w) in profile.weights.iter().enumerate() {
        let diag: Vec<f64> = (0..dim)
            .map(|b| ((space.occupation(b, i) + 1) as f64).powf(k / 2.0))
            .collect();
        for r in 0..dim {
            for c in 0..dim {
                out[(r, c)] += w * diag[r] * diag[c] * mat[(r, c)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::coherent_moment_bound;
    use crate::fock::{
        moment, product_coherent_state, random_density, trace_norm_mat, DensityMatrix, FockCutoff,
    };
    use num_complex::Complex64 as C64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn chain_normalization_hand_value() {
        let lat = LatticeGeometry::chain(3).unwrap();
        let n = normalization(&lat, 1, 2.0).unwrap();
        let expect = 1.0 + 2.0 * (-2.0f64).exp();
        assert!((n.z - expect).abs() < 1e-12);
        assert!(n.lower <= n.z && n.z <= n.upper);
    }

    #[test]
    fn single_node_normalization() {
        let lat = LatticeGeometry::from_parts(1, vec![vec![0]], vec![]).unwrap();
        let n = normalization(&lat, 0, 2.0).unwrap();
        assert!((n.z - 1.0).abs() < 1e-15);
        assert!(n.lower <= 1.0 + 1e-12 && 1.0 <= n.upper);
    }

    #[test]
    fn grid_corner_matches_brute_force_distances() {
        let lat = LatticeGeometry::grid(3, 3).unwrap();
        // independent oracle: Floyd-Warshall over the same edge set
        let n = lat.len();
        let mut d = vec![vec![u32::MAX / 2; n]; n];
        for i in 0..n {
            d[i][i] = 0;
        }
        for &(i, j) in lat.edges() {
            d[i][j] = 1;
            d[j][i] = 1;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                }
            }
        }
        let kappa = 2.0;
        let z_oracle: f64 = (0..n).map(|i| (-(kappa * d[0][i] as f64)).exp()).sum();
        let got = normalization(&lat, 0, kappa).unwrap();
        assert!((got.z - z_oracle).abs() < 1e-12);
    }

    #[test]
    fn kappa_at_most_one_is_rejected() {
        let lat = LatticeGeometry::chain(3).unwrap();
        assert!(normalization(&lat, 0, 1.0).is_err());
        assert!(normalization(&lat, 0, 0.5).is_err());
    }

    #[test]
    fn weights_sum_to_one() {
        for (lat, v) in [
            (LatticeGeometry::chain(5).unwrap(), 2),
            (LatticeGeometry::grid(3, 4).unwrap(), 0),
        ] {
            let p = WeightProfile::new(&lat, v, 1.5).unwrap();
            let s: f64 = p.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sandwich_holds_on_lattice_grid() {
        for kappa in [1.5, 2.0, 3.0] {
            for m in 2..=5 {
                let lat = LatticeGeometry::chain(m).unwrap();
                for v in 0..m {
                    normalization(&lat, v, kappa).unwrap();
                }
            }
            for w in 2..=5 {
                for h in 2..=5 {
                    let lat = LatticeGeometry::grid(w, h).unwrap();
                    for v in 0..lat.len() {
                        normalization(&lat, v, kappa).unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn product_vacuum_weighted_moment_is_one() {
        let lat = LatticeGeometry::chain(2).unwrap();
        let p = WeightProfile::new(&lat, 0, 2.0).unwrap();
        let space = crate::fock::ModeSpace::new(2, FockCutoff::new(4).unwrap()).unwrap();
        let vac = DensityMatrix::number_state(space, &[0, 0]).unwrap();
        for k in [1.0, 2.0, 3.0] {
            assert!((weighted_moment(&p, &vac, k).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn single_site_reduces_to_plain_moment() {
        let lat = LatticeGeometry::from_parts(1, vec![vec![0]], vec![]).unwrap();
        let p = WeightProfile::new(&lat, 0, 2.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let space = crate::fock::ModeSpace::single(FockCutoff::new(10).unwrap());
        let rho = random_density(space, 5, &mut rng);
        for k in [0.5, 1.0, 2.5] {
            let a = weighted_moment(&p, &rho, k).unwrap();
            let b = moment(&rho, k);
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn product_coherent_state_obeys_closed_form_bound() {
        let lat = LatticeGeometry::chain(2).unwrap();
        let cutoff = FockCutoff::new(25).unwrap();
        let alpha = C64::new(1.0, 0.0);
        let rho = product_coherent_state(&[alpha, alpha], cutoff).unwrap();
        for v in 0..2 {
            let p = WeightProfile::new(&lat, v, 2.0).unwrap();
            for k in [1.0, 2.0, 3.0] {
                let value = weighted_moment(&p, &rho, k).unwrap();
                let bound = coherent_moment_bound(alpha.norm(), k);
                assert!(value <= bound + 1e-10, "k={k}: {value} > {bound}");
            }
        }
    }

    #[test]
    fn multi_mode_jensen_inequality() {
        let lat = LatticeGeometry::chain(2).unwrap();
        let p = WeightProfile::new(&lat, 0, 1.5).unwrap();
        let space = crate::fock::ModeSpace::new(2, FockCutoff::new(6).unwrap()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let grid = [1.0, 2.0, 3.0];
        for _ in 0..200 {
            let rho = random_density(space, 3, &mut rng);
            for &pp in &grid {
                for &q in &grid {
                    if pp < q {
                        continue;
                    }
                    let lhs = weighted_moment(&p, &rho, pp).unwrap();
                    let rhs = weighted_moment(&p, &rho, q).unwrap().powf(pp / q);
                    assert!(lhs >= rhs - 1e-10);
                }
            }
        }
    }

    #[test]
    fn wv_apply_trace_norm_matches_weighted_moment_on_states() {
        let lat = LatticeGeometry::chain(2).unwrap();
        let p = WeightProfile::new(&lat, 1, 2.0).unwrap();
        let space = crate::fock::ModeSpace::new(2, FockCutoff::new(5).unwrap()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let rho = random_density(space, 3, &mut rng);
        let k = 2.0;
        let op = wv_apply(&p, rho.mat(), space, k).unwrap();
        let tn = trace_norm_mat(&op).unwrap();
        let wm = weighted_moment(&p, &rho, k).unwrap();
        assert!((tn - wm).abs() < 1e-10);
    }

    #[test]
    fn lattice_spec_roundtrip_and_generator() {
        let spec = LatticeSpec {
            dimension: 2,
            nodes: vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
            edges: EdgeSpec::Named("nearest-neighbour".into()),
        };
        let lat = spec.build().unwrap();
        assert_eq!(lat.edges().len(), 4);
        let json = serde_json::to_string(&LatticeSpec::of(&lat)).unwrap();
        let back: LatticeSpec = serde_json::from_str(&json).unwrap();
        let lat2 = back.build().unwrap();
        assert_eq!(lat2.len(), 4);
        assert_eq!(lat2.dist(0, 3), 2);
    }

    #[test]
    fn disconnected_lattice_is_rejected() {
        let r = LatticeGeometry::from_parts(1, vec![vec![0], vec![1], vec![3]], vec![(0, 1)]);
        assert!(r.is_err());
    }
}

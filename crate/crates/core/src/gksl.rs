//! GKSL generators assembled from polynomial jump operators and Hamiltonians,
//! in matrix-free form (for integration) and as dense vectorized matrices
//! (for exponentials and spectral analysis).
//!
//! A generator is stored as `ρ ↦ A ρ + ρ A† + Σ_j L_j ρ L_j†` with
//! `A = -iH - ½ Σ_j L_j†L_j`, which reproduces
//! `-i[H, ρ] + Σ_j (L_j ρ L_j† - ½{L_j†L_j, ρ})`.

use num_complex::Complex64 as C64;
use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    self, build_poly, c64_serde, FockCutoff, LadderKind, Letter, ModeSpace, Monomial, Operator,
    PolySpec,
};
use crate::lattice::{LatticeGeometry, LatticeSpec};
use crate::linalg::{self, CMat};

/// Default cap on the total Hilbert-space dimension `D^m`.
pub const DEFAULT_DIM_BUDGET: usize = 4096;
/// Largest dimension for which the dense `D²×D²` vectorized form is built.
pub const DENSE_DIM_CAP: usize = 2048;

/// Linear map on operators, `ρ ↦ -i[H,ρ] + Σ_j (L_j ρ L_j† - ½{L_j†L_j, ρ})`.
#[derive(Debug)]
pub struct Superoperator {
    space: ModeSpace,
    aeff: CMat,
    aeff_dag: CMat,
    jumps: Vec<CMat>,
    jump_dags: Vec<CMat>,
    dense: OnceCell<CMat>,
}

impl Clone for Superoperator {
    fn clone(&self) -> Self {
        Superoperator {
            space: self.space,
            aeff: self.aeff.clone(),
            aeff_dag: self.aeff_dag.clone(),
            jumps: self.jumps.clone(),
            jump_dags: self.jump_dags.clone(),
            dense: OnceCell::new(),
        }
    }
}

impl Superoperator {
    /// Assemble from an optional Hamiltonian and a list of jump operators.
    ///
    /// The Hamiltonian is symmetrized; a defect above 1e-12 is reported on
    /// stderr since it signals a bad model specification.
    pub fn new(space: ModeSpace, ham: Option<&Operator>, jumps: Vec<Operator>) -> Result<Self> {
        let d = space.dim();
        let mut aeff = CMat::zeros((d, d));
        if let Some(h) = ham {
            if h.space != space {
                return Err(Error::DimMismatch("Hamiltonian space mismatch".into()));
            }
            let defect = linalg::hermiticity_defect(&h.mat);
            if defect > 1e-12 {
                eprintln!("warning: Hamiltonian symmetrized, defect {defect:.3e}");
            }
            let hs = linalg::hermitian_part(&h.mat);
            aeff = aeff + hs.mapv(|z| C64::new(0.0, -1.0) * z);
        }
        let mut mats = Vec::with_capacity(jumps.len());
        for l in jumps {
            if l.space != space {
                return Err(Error::DimMismatch("jump operator space mismatch".into()));
            }
            let ldl = linalg::dagger(&l.mat).dot(&l.mat);
            aeff = aeff - ldl.mapv(|z| 0.5 * z);
            mats.push(l.mat);
        }
        let aeff_dag = linalg::dagger(&aeff);
        let jump_dags = mats.iter().map(linalg::dagger).collect();
        Ok(Superoperator {
            space,
            aeff,
            aeff_dag,
            jumps: mats,
            jump_dags,
            dense: OnceCell::new(),
        })
    }

    /// The zero generator on the given space.
    pub fn zero(space: ModeSpace) -> Self {
        let d = space.dim();
        Superoperator {
            space,
            aeff: CMat::zeros((d, d)),
            aeff_dag: CMat::zeros((d, d)),
            jumps: vec![],
            jump_dags: vec![],
            dense: OnceCell::new(),
        }
    }

    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Apply the generator to an operator matrix.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let mut out = self.aeff.dot(rho) + rho.dot(&self.aeff_dag);
        for (l, ld) in self.jumps.iter().zip(&self.jump_dags) {
            out = out + l.dot(rho).dot(ld);
        }
        out
    }

    /// Sum of two generators on the same space.
    pub fn add(&self, other: &Superoperator) -> Result<Superoperator> {
        if self.space != other.space {
            return Err(Error::DimMismatch("generator space mismatch".into()));
        }
        let mut jumps = self.jumps.clone();
        jumps.extend(other.jumps.iter().cloned());
        let mut jump_dags = self.jump_dags.clone();
        jump_dags.extend(other.jump_dags.iter().cloned());
        Ok(Superoperator {
            space: self.space,
            aeff: &self.aeff + &other.aeff,
            aeff_dag: &self.aeff_dag + &other.aeff_dag,
            jumps,
            jump_dags,
            dense: OnceCell::new(),
        })
    }

    /// Scale the generator by a nonnegative rate.
    pub fn scale(&self, rate: f64) -> Result<Superoperator> {
        if rate < 0.0 {
            return Err(Error::InvalidParameter("generator rate must be >= 0".into()));
        }
        let sq = rate.sqrt();
        Ok(Superoperator {
            space: self.space,
            aeff: self.aeff.mapv(|z| rate * z),
            aeff_dag: self.aeff_dag.mapv(|z| rate * z),
            jumps: self.jumps.iter().map(|l| l.mapv(|z| sq * z)).collect(),
            jump_dags: self.jump_dags.iter().map(|l| l.mapv(|z| sq * z)).collect(),
            dense: OnceCell::new(),
        })
    }

    /// Dense vectorized matrix acting on row-major `vec(ρ)`, built lazily.
    pub fn dense(&self) -> Result<&CMat> {
        let d = self.dim();
        if d > DENSE_DIM_CAP {
            return Err(Error::Budget {
                dim: d,
                budget: DENSE_DIM_CAP,
            });
        }
        Ok(self.dense.get_or_init(|| {
            let eye = CMat::eye(d);
            let mut m = linalg::kron(&self.aeff, &eye) + linalg::kron(&eye, &self.aeff.mapv(|z| z.conj()));
            for l in &self.jumps {
                m = m + linalg::kron(l, &l.mapv(|z| z.conj()));
            }
            m
        }))
    }

    /// Crude spectral scale used for integrator step-size heuristics.
    pub fn norm_estimate(&self) -> f64 {
        let mut s = 2.0 * linalg::one_norm(&self.aeff);
        for l in &self.jumps {
            s += linalg::one_norm(l) * linalg::one_norm(&linalg::dagger(l));
        }
        s
    }
}

/// `ρ ↦ LρL† - ½{L†L, ρ}` for a single jump operator.
pub fn dissipator(l: &Operator) -> Superoperator {
    Superoperator::new(l.space, None, vec![l.clone()]).expect("same space by construction")
}

/// Dissipator with jump `a^ℓ - α^ℓ·1` on a single mode.
///
/// The cutoff must accommodate coherent states of amplitude `α`, since the
/// shifted dissipation drives states toward them.
pub fn shifted_photon_dissipator(
    ell: usize,
    alpha: C64,
    cutoff: FockCutoff,
) -> Result<Superoperator> {
    if ell < 2 {
        return Err(Error::InvalidParameter(format!(
            "photon dissipation order must be >= 2, got {ell}"
        )));
    }
    let required = fock::required_cutoff(alpha, fock::COHERENT_LEAKAGE_DEFAULT);
    if cutoff.dim() < required {
        return Err(Error::Leakage {
            leakage: fock::poisson_tail(alpha.norm_sqr(), cutoff.dim()),
            threshold: fock::COHERENT_LEAKAGE_DEFAULT,
            cutoff: cutoff.dim(),
            required,
        });
    }
    let space = ModeSpace::single(cutoff);
    let jump = build_poly(&PolySpec::shifted_lowering_power(0, ell, alpha), space)?;
    Ok(dissipator(&jump))
}

/// Symbolic description of a generator: Hamiltonian and jumps as polynomials
/// in the ladder operators. Serializable to and from JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub modes: usize,
    pub cutoff: FockCutoff,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<PolySpec>,
    #[serde(default)]
    pub jumps: Vec<PolySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<LatticeSpec>,
}

impl GeneratorSpec {
    pub fn space(&self) -> Result<ModeSpace> {
        ModeSpace::new(self.modes, self.cutoff)
    }

    pub fn validate(&self, budget: usize) -> Result<()> {
        let space = self.space()?;
        let dim = space.dim();
        if dim > budget {
            return Err(Error::Budget { dim, budget });
        }
        if let Some(h) = &self.hamiltonian {
            h.validate(self.modes)?;
        }
        for j in &self.jumps {
            j.validate(self.modes)?;
        }
        Ok(())
    }

    pub fn assemble(&self, budget: usize) -> Result<Superoperator> {
        self.validate(budget)?;
        let space = self.space()?;
        let ham = match &self.hamiltonian {
            Some(p) => Some(build_poly(p, space)?),
            None => None,
        };
        let jumps = self
            .jumps
            .iter()
            .map(|p| build_poly(p, space))
            .collect::<Result<Vec<_>>>()?;
        Superoperator::new(space, ham.as_ref(), jumps)
    }
}

/// Single-mode assembly; mode count must be 1.
pub fn assemble_single_mode(spec: &GeneratorSpec) -> Result<Superoperator> {
    if spec.modes != 1 {
        return Err(Error::InvalidParameter(format!(
            "single-mode assembly got {} modes",
            spec.modes
        )));
    }
    spec.assemble(DEFAULT_DIM_BUDGET)
}

/// Single-mode Hamiltonian `Σ_{i≤j, i+j≤d} λ_{ij} a^i(a†)^j + conj`, the
/// structure compatible with ℓ-photon dissipation under a degree constraint.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HamiltonianSpec1M {
    pub degree: usize,
    pub terms: Vec<OneModeTerm>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OneModeTerm {
    pub i: usize,
    pub j: usize,
    #[serde(with = "c64_serde")]
    pub lambda: C64,
}

impl HamiltonianSpec1M {
    pub fn validate(&self) -> Result<()> {
        for t in &self.terms {
            if t.i > t.j {
                return Err(Error::InvalidParameter(format!(
                    "term requires i <= j, got ({}, {})",
                    t.i, t.j
                )));
            }
            if t.i + t.j > self.degree {
                return Err(Error::InvalidParameter(format!(
                    "term ({}, {}) exceeds degree {}",
                    t.i, t.j, self.degree
                )));
            }
        }
        Ok(())
    }

    /// Aggregate coefficient size, the Λ input of the dissipation constants.
    pub fn lambda_aggregate(&self) -> f64 {
        self.terms.iter().map(|t| t.lambda.norm()).sum()
    }

    pub fn to_poly(&self, mode: usize) -> PolySpec {
        let mut terms = Vec::new();
        for t in &self.terms {
            let mut word = Vec::new();
            word.extend(std::iter::repeat(Letter { mode, kind: LadderKind::Lower }).take(t.i));
            word.extend(std::iter::repeat(Letter { mode, kind: LadderKind::Raise }).take(t.j));
            terms.push(Monomial {
                coeff: t.lambda,
                word,
            });
            let mut word = Vec::new();
            word.extend(std::iter::repeat(Letter { mode, kind: LadderKind::Lower }).take(t.j));
            word.extend(std::iter::repeat(Letter { mode, kind: LadderKind::Raise }).take(t.i));
            terms.push(Monomial {
                coeff: t.lambda.conj(),
                word,
            });
        }
        PolySpec { terms }
    }

    pub fn build(&self, cutoff: FockCutoff) -> Result<Operator> {
        self.validate()?;
        build_poly(&self.to_poly(0), ModeSpace::single(cutoff))
    }
}

/// 2-local Hamiltonian on lattice edges, each term
/// `λ a_i^{u1} a_j^{u3} (a_i†)^{u2} (a_j†)^{u4}` plus its conjugate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HamiltonianSpec2Local {
    pub degree: usize,
    pub terms: Vec<TwoLocalTerm>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TwoLocalTerm {
    pub i: usize,
    pub j: usize,
    pub u: [usize; 4],
    #[serde(with = "c64_serde")]
    pub lambda: C64,
}

impl HamiltonianSpec2Local {
    pub fn validate(&self, lat: &LatticeGeometry) -> Result<()> {
        for t in &self.terms {
            if t.u.iter().sum::<usize>() > self.degree {
                return Err(Error::InvalidParameter(format!(
                    "term u={:?} exceeds degree {}",
                    t.u, self.degree
                )));
            }
            if !lat.has_edge(t.i, t.j) {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) not in lattice",
                    t.i, t.j
                )));
            }
        }
        Ok(())
    }

    /// Largest coefficient magnitude `‖λ‖_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.terms
            .iter()
            .map(|t| t.lambda.norm())
            .fold(0.0, f64::max)
    }

    pub fn to_poly(&self) -> PolySpec {
        let mut terms = Vec::new();
        for t in &self.terms {
            let rep = |mode: usize, kind: LadderKind, count: usize| {
                std::iter::repeat(Letter { mode, kind }).take(count)
            };
            let mut word = Vec::new();
            word.extend(rep(t.i, LadderKind::Lower, t.u[0]));
            word.extend(rep(t.j, LadderKind::Lower, t.u[2]));
            word.extend(rep(t.i, LadderKind::Raise, t.u[1]));
            word.extend(rep(t.j, LadderKind::Raise, t.u[3]));
            terms.push(Monomial {
                coeff: t.lambda,
                word,
            });
            let mut word = Vec::new();
            word.extend(rep(t.j, LadderKind::Lower, t.u[3]));
            word.extend(rep(t.i, LadderKind::Lower, t.u[1]));
            word.extend(rep(t.j, LadderKind::Raise, t.u[2]));
            word.extend(rep(t.i, LadderKind::Raise, t.u[0]));
            terms.push(Monomial {
                coeff: t.lambda.conj(),
                word,
            });
        }
        PolySpec { terms }
    }

    pub fn build(&self, lat: &LatticeGeometry, cutoff: FockCutoff) -> Result<Operator> {
        self.validate(lat)?;
        let space = ModeSpace::new(lat.len(), cutoff)?;
        build_poly(&self.to_poly(), space)
    }
}

/// One edge share of the edge decomposition of a multi-mode generator.
pub struct EdgeGenerator {
    pub i: usize,
    pub j: usize,
    pub term: Superoperator,
}

/// Multi-mode generator `-i[H,·] + η Σ_j L[a_j^ℓ - α_j^ℓ]` together with the
/// edge decomposition `Σ_{i∼j} L_{i,j}` that distributes each on-site
/// dissipator over incident edges with weight 1/γ (γ = node connectivity).
pub struct MultiModeGenerator {
    pub full: Superoperator,
    pub edges: Vec<EdgeGenerator>,
}

pub fn assemble_multi_mode(
    lat: &LatticeGeometry,
    ell: usize,
    alphas: &[C64],
    ham: Option<&HamiltonianSpec2Local>,
    eta: f64,
    cutoff: FockCutoff,
    budget: usize,
) -> Result<MultiModeGenerator> {
    let m = lat.len();
    if alphas.len() != m {
        return Err(Error::DimMismatch(format!(
            "{} shift amplitudes for {} lattice nodes",
            alphas.len(),
            m
        )));
    }
    if eta < 0.0 {
        return Err(Error::InvalidParameter("eta must be >= 0".into()));
    }
    let space = ModeSpace::new(m, cutoff)?;
    let dim = space.dim();
    if dim > budget {
        return Err(Error::Budget { dim, budget });
    }

    let site_jump = |j: usize| -> Result<Operator> {
        let poly = PolySpec::shifted_lowering_power(j, ell, alphas[j]);
        let op = build_poly(&poly, space)?;
        Ok(op.scale(C64::new(eta.sqrt(), 0.0)))
    };

    let hpoly = ham.map(|h| {
        h.validate(lat)?;
        Ok::<_, Error>(build_poly(&h.to_poly(), space)?)
    });
    let hop = match hpoly {
        Some(r) => Some(r?),
        None => None,
    };

    let mut jumps = Vec::with_capacity(m);
    for j in 0..m {
        jumps.push(site_jump(j)?);
    }
    let full = Superoperator::new(space, hop.as_ref(), jumps)?;

    // Edge shares: each node's dissipator splits over its incident edges;
    // nodes without any edge keep theirs as a standalone (i, i) share.
    let mut edges = Vec::new();
    let gamma: Vec<usize> = (0..m).map(|i| lat.connectivity(i)).collect();
    for &(i, j) in lat.edges() {
        let mut term = match ham {
            Some(h) => {
                let sub: Vec<TwoLocalTerm> = h
                    .terms
                    .iter()
                    .filter(|t| (t.i, t.j) == (i, j) || (t.i, t.j) == (j, i))
                    .cloned()
                    .collect();
                let spec = HamiltonianSpec2Local {
                    degree: h.degree,
                    terms: sub,
                };
                let hm = build_poly(&spec.to_poly(), space)?;
                Superoperator::new(space, Some(&hm), vec![])?
            }
            None => Superoperator::zero(space),
        };
        term = term.add(&dissipator(&site_jump(i)?).scale(1.0 / gamma[i] as f64)?)?;
        if j != i {
            term = term.add(&dissipator(&site_jump(j)?).scale(1.0 / gamma[j] as f64)?)?;
        }
        edges.push(EdgeGenerator { i, j, term });
    }
    for i in 0..m {
        if gamma[i] == 0 {
            edges.push(EdgeGenerator {
                i,
                j: i,
                term: dissipator(&site_jump(i)?),
            });
        }
    }

    Ok(MultiModeGenerator { full, edges })
}

impl MultiModeGenerator {
    /// Re-sum the edge decomposition into a single generator.
    pub fn resum_edges(&self) -> Result<Superoperator> {
        let mut total = Superoperator::zero(self.full.space());
        for e in &self.edges {
            total = total.add(&e.term)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificates::mu_ell;
    use crate::fock::{
        coherent_state, ladder_ops, moment_mat, random_density, DensityMatrix,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_photon(cutoff: usize) -> (Superoperator, ModeSpace) {
        let cutoff = FockCutoff::new(cutoff).unwrap();
        let space = ModeSpace::single(cutoff);
        let l = build_poly(&PolySpec::lowering_power(0, 2), space).unwrap();
        (dissipator(&l), space)
    }

    #[test]
    fn dissipator_on_fock_two() {
        let (gen, space) = two_photon(5);
        let rho = DensityMatrix::number_state(space, &[2]).unwrap();
        let out = gen.apply(rho.mat());
        // a²|2⟩⟨2|(a†)² = 2|0⟩⟨0|, ½{L†L, ρ} = 2|2⟩⟨2|
        assert!((out[(0, 0)] - c(2.0, 0.0)).norm() < 1e-13);
        assert!((out[(2, 2)] - c(-2.0, 0.0)).norm() < 1e-13);
        assert!(out[(1, 1)].norm() < 1e-14);
    }

    #[test]
    fn vacuum_is_fixed_point_of_two_photon_loss() {
        let (gen, space) = two_photon(5);
        let vac = DensityMatrix::number_state(space, &[0]).unwrap();
        assert!(linalg::max_abs(&gen.apply(vac.mat())) < 1e-14);
    }

    #[test]
    fn dissipator_annihilates_trace() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let (gen, space) = two_photon(8);
        for _ in 0..20 {
            let rho = random_density(space, 8, &mut rng);
            let tr: C64 = gen.apply(rho.mat()).diag().sum();
            assert!(tr.norm() < 1e-10);
        }
    }

    #[test]
    fn shifted_with_zero_alpha_matches_plain() {
        let cutoff = FockCutoff::new(12).unwrap();
        let shifted = shifted_photon_dissipator(2, c(0.0, 0.0), cutoff).unwrap();
        let (plain, space) = two_photon(12);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let rho = random_density(space, 6, &mut rng);
        let d = &shifted.apply(rho.mat()) - &plain.apply(rho.mat());
        assert!(linalg::max_abs(&d) < 1e-12);
    }

    #[test]
    fn coherent_states_in_codespace_are_stationary() {
        // a² - α² annihilates |±α⟩; check at comfortable cutoff.
        let cutoff = FockCutoff::new(40).unwrap();
        for alpha in [c(1.0, 0.0), c(2.0, 0.0), c(0.0, 1.5)] {
            let gen = shifted_photon_dissipator(2, alpha, cutoff).unwrap();
            let rho = coherent_state(alpha, cutoff).unwrap();
            let out = gen.apply(rho.mat());
            assert!(
                linalg::max_abs(&out) < 1e-7,
                "residual {:.3e} at alpha {alpha}",
                linalg::max_abs(&out)
            );
        }
    }

    #[test]
    fn three_photon_shifted_annihilates_trace() {
        let cutoff = FockCutoff::new(20).unwrap();
        let gen = shifted_photon_dissipator(3, c(1.0, 0.0), cutoff).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let rho = random_density(ModeSpace::single(cutoff), 10, &mut rng);
        let tr: C64 = gen.apply(rho.mat()).diag().sum();
        assert!(tr.norm() < 1e-10);
    }

    #[test]
    fn hamiltonian_commutator_on_coherence() {
        // H = N on |1⟩⟨0|: -i[N, |1⟩⟨0|] = -i|1⟩⟨0|
        let cutoff = FockCutoff::new(4).unwrap();
        let space = ModeSpace::single(cutoff);
        let (_, _, n) = ladder_ops(cutoff);
        let gen = Superoperator::new(space, Some(&n), vec![]).unwrap();
        let mut rho = CMat::zeros((4, 4));
        rho[(1, 0)] = c(1.0, 0.0);
        let out = gen.apply(&rho);
        assert!((out[(1, 0)] - c(0.0, -1.0)).norm() < 1e-14);
    }

    #[test]
    fn generator_spec_assembly_matches_shifted_dissipator() {
        let cutoff = FockCutoff::new(20).unwrap();
        let alpha = c(1.5, 0.0);
        let spec = GeneratorSpec {
            modes: 1,
            cutoff,
            hamiltonian: None,
            jumps: vec![PolySpec::shifted_lowering_power(0, 2, alpha)],
            lattice: None,
        };
        let built = assemble_single_mode(&spec).unwrap();
        let direct = shifted_photon_dissipator(2, alpha, cutoff).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let rho = random_density(ModeSpace::single(cutoff), 10, &mut rng);
        let d = &built.apply(rho.mat()) - &direct.apply(rho.mat());
        assert!(linalg::max_abs(&d) < 1e-12);
    }

    #[test]
    fn generator_spec_json_roundtrip() {
        let spec = GeneratorSpec {
            modes: 2,
            cutoff: FockCutoff::new(8).unwrap(),
            hamiltonian: Some(PolySpec::lowering_power(1, 1)),
            jumps: vec![PolySpec::shifted_lowering_power(0, 3, c(0.5, 0.5))],
            lattice: None,
        };
        let json = serde_json::to_string_pretty(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.modes, 2);
        assert_eq!(back.cutoff.dim(), 8);
        assert_eq!(back.jumps[0].terms.len(), 2);
    }

    #[test]
    fn assembled_generators_preserve_adjoints() {
        let cutoff = FockCutoff::new(10).unwrap();
        let space = ModeSpace::single(cutoff);
        let (_, _, n) = ladder_ops(cutoff);
        let l = build_poly(&PolySpec::lowering_power(0, 2), space).unwrap();
        let gen = Superoperator::new(space, Some(&n), vec![l]).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = CMat::from_shape_fn((10, 10), |_| {
                c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let lhs = linalg::dagger(&gen.apply(&x));
            let rhs = gen.apply(&linalg::dagger(&x));
            assert!(linalg::max_abs(&(&lhs - &rhs)) < 1e-10);
        }
    }

    #[test]
    fn two_photon_differential_inequality() {
        let (gen, space) = two_photon(24);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for k in [1.0, 2.0, 3.0] {
            for _ in 0..50 {
                let rho = random_density(space, 12, &mut rng);
                let lhs = moment_mat(&gen.apply(rho.mat()), space, k);
                let rhs = -moment_mat(rho.mat(), space, k + 1.0) + 6f64.powf(k + 1.0);
                assert!(lhs <= rhs + 1e-8, "k={k}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn ell_photon_moment_inequality() {
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let cutoff = FockCutoff::new(28).unwrap();
        let space = ModeSpace::single(cutoff);
        for ell in [2usize, 3] {
            for k in [1.0, 2.0] {
                for alpha in [c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)] {
                    let gen = shifted_photon_dissipator(ell, alpha, cutoff).unwrap();
                    let mu = mu_ell(ell, k, alpha, None).unwrap().mu;
                    let half = ell as f64 / 2.0;
                    for _ in 0..30 {
                        let rho = random_density(space, 12, &mut rng);
                        let lhs = moment_mat(&gen.apply(rho.mat()), space, k);
                        let rhs = -half * moment_mat(rho.mat(), space, k + ell as f64 - 1.0)
                            + half * mu;
                        assert!(
                            lhs <= rhs + 1e-6,
                            "ell={ell} k={k} alpha={alpha}: {lhs} > {rhs}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn on_site_hamiltonian_keeps_moment_inequality() {
        // drive + quadratic term, degree within 2(ℓ-1) for ℓ = 2
        let ham = HamiltonianSpec1M {
            degree: 2,
            terms: vec![
                OneModeTerm { i: 0, j: 1, lambda: c(0.4, 0.0) },
                OneModeTerm { i: 0, j: 2, lambda: c(0.0, 0.3) },
            ],
        };
        let cutoff = FockCutoff::new(28).unwrap();
        let space = ModeSpace::single(cutoff);
        let h = ham.build(cutoff).unwrap();
        let alpha = c(1.0, 0.0);
        let l = build_poly(&PolySpec::shifted_lowering_power(0, 2, alpha), space).unwrap();
        let gen = Superoperator::new(space, Some(&h), vec![l]).unwrap();
        let mu = mu_ell(2, 1.0, alpha, Some(ham.lambda_aggregate()))
            .unwrap()
            .mu;
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        for _ in 0..40 {
            let rho = random_density(space, 12, &mut rng);
            let lhs = moment_mat(&gen.apply(rho.mat()), space, 1.0);
            let rhs = -moment_mat(rho.mat(), space, 2.0) + mu;
            assert!(lhs <= rhs + 1e-6, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn hamiltonian_1m_validation() {
        let bad = HamiltonianSpec1M {
            degree: 1,
            terms: vec![OneModeTerm { i: 1, j: 1, lambda: c(1.0, 0.0) }],
        };
        assert!(bad.validate().is_err());
        let swapped = HamiltonianSpec1M {
            degree: 3,
            terms: vec![OneModeTerm { i: 2, j: 1, lambda: c(1.0, 0.0) }],
        };
        assert!(swapped.validate().is_err());
    }

    #[test]
    fn multi_mode_tensor_sum_of_dissipators() {
        let lat = LatticeGeometry::chain(2).unwrap();
        let cutoff = FockCutoff::new(6).unwrap();
        let gen = assemble_multi_mode(
            &lat,
            2,
            &[c(0.0, 0.0), c(0.0, 0.0)],
            None,
            1.0,
            cutoff,
            DEFAULT_DIM_BUDGET,
        )
        .unwrap();
        let space = gen.full.space();

        // single-site dissipators acting through the tensor structure
        let l0 = build_poly(&PolySpec::lowering_power(0, 2), space).unwrap();
        let l1 = build_poly(&PolySpec::lowering_power(1, 2), space).unwrap();
        let sum = dissipator(&l0).add(&dissipator(&l1)).unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let rho = random_density(space, 3, &mut rng);
        let d = &gen.full.apply(rho.mat()) - &sum.apply(rho.mat());
        assert!(linalg::max_abs(&d) < 1e-12);
    }

    #[test]
    fn hopping_hamiltonian_annihilates_trace() {
        let lat = LatticeGeometry::chain(2).unwrap();
        let cutoff = FockCutoff::new(6).unwrap();
        let ham = HamiltonianSpec2Local {
            degree: 2,
            terms: vec![TwoLocalTerm {
                i: 0,
                j: 1,
                u: [1, 0, 0, 1],
                lambda: c(0.7, 0.0),
            }],
        };
        let gen = assemble_multi_mode(
            &lat,
            2,
            &[c(0.0, 0.0), c(0.0, 0.0)],
            Some(&ham),
            1.0,
            cutoff,
            DEFAULT_DIM_BUDGET,
        )
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let rho = random_density(gen.full.space(), 3, &mut rng);
        let tr: C64 = gen.full.apply(rho.mat()).diag().sum();
        assert!(tr.norm() < 1e-10);
    }

    #[test]
    fn edge_decomposition_resums_to_full_generator() {
        let lat = LatticeGeometry::chain(3).unwrap();
        let cutoff = FockCutoff::new(4).unwrap();
        let ham = HamiltonianSpec2Local {
            degree: 2,
            terms: vec![
                TwoLocalTerm { i: 0, j: 1, u: [1, 0, 0, 1], lambda: c(0.3, 0.1) },
                TwoLocalTerm { i: 1, j: 2, u: [1, 0, 0, 1], lambda: c(-0.2, 0.0) },
            ],
        };
        let gen = assemble_multi_mode(
            &lat,
            2,
            &[c(0.0, 0.0); 3],
            Some(&ham),
            0.8,
            cutoff,
            DEFAULT_DIM_BUDGET,
        )
        .unwrap();
        let resum = gen.resum_edges().unwrap();
        let full_dense = gen.full.dense().unwrap();
        let resum_dense = resum.dense().unwrap();
        assert!(linalg::max_abs(&(full_dense - resum_dense)) < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let lat = LatticeGeometry::chain(3).unwrap();
        let cutoff = FockCutoff::new(20).unwrap();
        let r = assemble_multi_mode(
            &lat,
            2,
            &[c(0.0, 0.0); 3],
            None,
            1.0,
            cutoff,
            DEFAULT_DIM_BUDGET,
        );
        assert!(matches!(r, Err(Error::Budget { .. })));
    }

    #[test]
    fn pure_birth_generator_is_buildable_and_traceless_under_truncation() {
        // jump (a†)²: trace is still annihilated in finite dimension; the
        // infinite-dimensional pathology shows up as boundary leakage instead.
        let cutoff = FockCutoff::new(10).unwrap();
        let space = ModeSpace::single(cutoff);
        let spec = PolySpec::monomial(
            c(1.0, 0.0),
            vec![
                Letter { mode: 0, kind: LadderKind::Raise },
                Letter { mode: 0, kind: LadderKind::Raise },
            ],
        );
        let l = build_poly(&spec, space).unwrap();
        let gen = dissipator(&l);
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let rho = random_density(space, 5, &mut rng);
        let tr: C64 = gen.apply(rho.mat()).diag().sum();
        assert!(tr.norm() < 1e-10);
    }
}

//! Truncated Fock-space operator algebra: ladder operators, polynomial words,
//! coherent and number states, trace norms, and number-operator moments.
//!
//! All operators live on the first `D` number states of each mode. Operators
//! are truncations of the exact infinite matrices to the top-left block, and
//! products are taken between truncated matrices. Tests and experiments keep
//! initial states supported well below the cutoff so boundary artifacts stay
//! under tolerance; the `leakage` diagnostic watches the top 10% of levels.

use ndarray::prelude::*;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

/// Serde representation of a complex number as a `[re, im]` pair.
pub mod c64_serde {
    use num_complex::Complex64 as C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(re, im))
    }
}

/// Basis size of a single truncated mode, `|0⟩ … |D-1⟩`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FockCutoff(usize);

impl FockCutoff {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::CutoffTooSmall(dim));
        }
        Ok(FockCutoff(dim))
    }

    pub fn dim(&self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for FockCutoff {
    type Error = Error;
    fn try_from(dim: usize) -> Result<Self> {
        FockCutoff::new(dim)
    }
}

impl From<FockCutoff> for usize {
    fn from(c: FockCutoff) -> usize {
        c.0
    }
}

/// Tensor space of `modes` identical truncated modes.
///
/// Basis index convention: mode 0 is the most significant digit, i.e.
/// `index = n_0 · D^{m-1} + n_1 · D^{m-2} + … + n_{m-1}`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct ModeSpace {
    pub modes: usize,
    pub cutoff: FockCutoff,
}

impl ModeSpace {
    pub fn new(modes: usize, cutoff: FockCutoff) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidParameter("mode count must be >= 1".into()));
        }
        Ok(ModeSpace { modes, cutoff })
    }

    pub fn single(cutoff: FockCutoff) -> Self {
        ModeSpace { modes: 1, cutoff }
    }

    pub fn dim(&self) -> usize {
        self.cutoff.dim().pow(self.modes as u32)
    }

    /// Occupation number of `mode` in basis state `index`.
    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        let d = self.cutoff.dim();
        (index / d.pow((self.modes - 1 - mode) as u32)) % d
    }

    /// Basis index of the product number state with the given occupations.
    pub fn basis_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes {
            return Err(Error::DimMismatch(format!(
                "expected {} occupations, got {}",
                self.modes,
                occupations.len()
            )));
        }
        let d = self.cutoff.dim();
        let mut idx = 0;
        for &n in occupations {
            if n >= d {
                return Err(Error::InvalidParameter(format!(
                    "occupation {n} outside cutoff {d}"
                )));
            }
            idx = idx * d + n;
        }
        Ok(idx)
    }
}

/// Dense complex matrix on a truncated mode space.
#[derive(Clone, Debug)]
pub struct Operator {
    pub space: ModeSpace,
    pub mat: CMat,
}

impl Operator {
    pub fn new(space: ModeSpace, mat: CMat) -> Result<Self> {
        let d = space.dim();
        if mat.dim() != (d, d) {
            return Err(Error::DimMismatch(format!(
                "matrix {:?} does not match space dimension {d}",
                mat.dim()
            )));
        }
        Ok(Operator { space, mat })
    }

    pub fn zeros(space: ModeSpace) -> Self {
        let d = space.dim();
        Operator {
            space,
            mat: CMat::zeros((d, d)),
        }
    }

    pub fn identity(space: ModeSpace) -> Self {
        let d = space.dim();
        Operator {
            space,
            mat: CMat::eye(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn dag(&self) -> Self {
        Operator {
            space: self.space,
            mat: linalg::dagger(&self.mat),
        }
    }

    pub fn dot(&self, rhs: &Operator) -> Self {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator {
            space: self.space,
            mat: self.mat.dot(&rhs.mat),
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        Operator {
            space: self.space,
            mat: self.mat.mapv(|w| z * w),
        }
    }

    pub fn add(&self, rhs: &Operator) -> Self {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator {
            space: self.space,
            mat: &self.mat + &rhs.mat,
        }
    }

    pub fn sub(&self, rhs: &Operator) -> Self {
        assert_eq!(self.space, rhs.space, "operator space mismatch");
        Operator {
            space: self.space,
            mat: &self.mat - &rhs.mat,
        }
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::hermiticity_defect(&self.mat) <= tol
    }
}

/// Ladder operators `(a, a†, n)` on a single truncated mode.
///
/// `a` is the lower shift with entries `√n`; `a†` its conjugate transpose;
/// `n = a†a = diag(0, …, D-1)`. Note `[a, a†]` deviates from the identity in
/// the top level, the usual truncation artifact.
pub fn ladder_ops(cutoff: FockCutoff) -> (Operator, Operator, Operator) {
    let space = ModeSpace::single(cutoff);
    let d = cutoff.dim();
    let mut a = CMat::zeros((d, d));
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    let adag = linalg::dagger(&a);
    let mut nmat = CMat::zeros((d, d));
    for n in 0..d {
        nmat[(n, n)] = C64::new(n as f64, 0.0);
    }
    (
        Operator { space, mat: a },
        Operator { space, mat: adag },
        Operator { space, mat: nmat },
    )
}

/// Lowering operator acting on one mode of a tensor space.
pub fn site_lowering(space: ModeSpace, mode: usize) -> Result<Operator> {
    if mode >= space.modes {
        return Err(Error::ModeOutOfRange {
            index: mode,
            modes: space.modes,
        });
    }
    let dim = space.dim();
    let d = space.cutoff.dim();
    let stride = d.pow((space.modes - 1 - mode) as u32);
    let mut mat = CMat::zeros((dim, dim));
    for col in 0..dim {
        let n = space.occupation(col, mode);
        if n >= 1 {
            mat[(col - stride, col)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    Ok(Operator { space, mat })
}

/// Diagonal of the number operator of one mode, indexed by basis state.
pub fn number_diag(space: ModeSpace, mode: usize) -> Result<Array1<f64>> {
    if mode >= space.modes {
        return Err(Error::ModeOutOfRange {
            index: mode,
            modes: space.modes,
        });
    }
    Ok(Array1::from_shape_fn(space.dim(), |i| {
        space.occupation(i, mode) as f64
    }))
}

/// One ladder letter: `a` or `a†` on a given mode.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Letter {
    pub mode: usize,
    pub kind: LadderKind,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderKind {
    #[serde(rename = "a")]
    Lower,
    #[serde(rename = "adag")]
    Raise,
}

/// One monomial: a complex coefficient times a word over `{a_i, a†_i}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Monomial {
    #[serde(with = "c64_serde")]
    pub coeff: C64,
    pub word: Vec<Letter>,
}

/// Finite polynomial in the ladder operators.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PolySpec {
    pub terms: Vec<Monomial>,
}

impl PolySpec {
    pub fn monomial(coeff: C64, word: Vec<Letter>) -> Self {
        PolySpec {
            terms: vec![Monomial { coeff, word }],
        }
    }

    /// `a_mode^ell`.
    pub fn lowering_power(mode: usize, ell: usize) -> Self {
        let word = vec![
            Letter {
                mode,
                kind: LadderKind::Lower,
            };
            ell
        ];
        Self::monomial(C64::new(1.0, 0.0), word)
    }

    /// `a_mode^ell - alpha^ell · 1`.
    pub fn shifted_lowering_power(mode: usize, ell: usize, alpha: C64) -> Self {
        let mut p = Self::lowering_power(mode, ell);
        p.terms.push(Monomial {
            coeff: -alpha.powu(ell as u32),
            word: vec![],
        });
        p
    }

    /// Highest word length over all terms.
    pub fn degree(&self) -> usize {
        self.terms.iter().map(|t| t.word.len()).max().unwrap_or(0)
    }

    pub fn validate(&self, modes: usize) -> Result<()> {
        for t in &self.terms {
            for l in &t.word {
                if l.mode >= modes {
                    return Err(Error::ModeOutOfRange {
                        index: l.mode,
                        modes,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Materialize a polynomial word specification on the given space.
pub fn build_poly(spec: &PolySpec, space: ModeSpace) -> Result<Operator> {
    spec.validate(space.modes)?;
    let mut total = Operator::zeros(space);
    for term in &spec.terms {
        let mut prod = Operator::identity(space);
        for letter in &term.word {
            let low = site_lowering(space, letter.mode)?;
            let m = match letter.kind {
                LadderKind::Lower => low,
                LadderKind::Raise => low.dag(),
            };
            prod = prod.dot(&m);
        }
        total = total.add(&prod.scale(term.coeff));
    }
    Ok(total)
}

/// Validated quantum state: Hermitian, positive semidefinite, unit trace.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    op: Operator,
}

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const EIG_FLOOR: f64 = -1e-10;
pub const TRACE_TOL: f64 = 1e-10;

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        if !op.is_hermitian(HERMITICITY_TOL) {
            return Err(Error::InvalidState(format!(
                "not Hermitian (defect {:.3e})",
                linalg::hermiticity_defect(&op.mat)
            )));
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {} != 1", tr)));
        }
        let eigs = linalg::eigvalsh_hermitian(&op.mat)?;
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < EIG_FLOOR {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(DensityMatrix { op })
    }

    /// Pure state `|ψ⟩⟨ψ|` from a normalized ket.
    pub fn from_ket(space: ModeSpace, ket: &CVec) -> Result<Self> {
        if ket.len() != space.dim() {
            return Err(Error::DimMismatch(format!(
                "ket length {} vs space dimension {}",
                ket.len(),
                space.dim()
            )));
        }
        let nrm: f64 = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("ket norm {nrm} != 1")));
        }
        let d = ket.len();
        let mat = CMat::from_shape_fn((d, d), |(i, j)| ket[i] * ket[j].conj());
        Ok(DensityMatrix {
            op: Operator { space, mat },
        })
    }

    /// Number state `|n_0 … n_{m-1}⟩⟨…|`.
    pub fn number_state(space: ModeSpace, occupations: &[usize]) -> Result<Self> {
        let idx = space.basis_index(occupations)?;
        let d = space.dim();
        let mut mat = CMat::zeros((d, d));
        mat[(idx, idx)] = C64::new(1.0, 0.0);
        Ok(DensityMatrix {
            op: Operator { space, mat },
        })
    }

    pub fn space(&self) -> ModeSpace {
        self.op.space
    }

    pub fn mat(&self) -> &CMat {
        &self.op.mat
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }
}

/// Poisson tail mass beyond occupation `dim - 1` for intensity `lambda`.
pub fn poisson_tail(lambda: f64, dim: usize) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    for n in 1..dim {
        pmf *= lambda / n as f64;
        cdf += pmf;
    }
    (1.0 - cdf).max(0.0)
}

/// Smallest cutoff whose Poisson tail for `|alpha|²` is below `threshold`.
pub fn required_cutoff(alpha: C64, threshold: f64) -> usize {
    let lambda = alpha.norm_sqr();
    let mut d = 2;
    while poisson_tail(lambda, d) > threshold && d < 100_000 {
        d += 1;
    }
    d
}

pub const COHERENT_LEAKAGE_DEFAULT: f64 = 1e-8;

/// Truncated, renormalized coherent-state ket with a tail-mass guard.
pub fn coherent_ket_with(alpha: C64, cutoff: FockCutoff, threshold: f64) -> Result<CVec> {
    let d = cutoff.dim();
    let lambda = alpha.norm_sqr();
    let tail = poisson_tail(lambda, d);
    if tail > threshold {
        return Err(Error::Leakage {
            leakage: tail,
            threshold,
            cutoff: d,
            required: required_cutoff(alpha, threshold),
        });
    }
    let mut ket = CVec::zeros(d);
    // amplitudes e^{-|α|²/2} α^n / √(n!), built by recurrence
    let mut amp = C64::new((-lambda / 2.0).exp(), 0.0);
    ket[0] = amp;
    for n in 1..d {
        amp *= alpha / C64::new((n as f64).sqrt(), 0.0);
        ket[n] = amp;
    }
    let nrm: f64 = ket.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(ket.mapv(|z| z / nrm))
}

pub fn coherent_ket(alpha: C64, cutoff: FockCutoff) -> Result<CVec> {
    coherent_ket_with(alpha, cutoff, COHERENT_LEAKAGE_DEFAULT)
}

pub fn coherent_state(alpha: C64, cutoff: FockCutoff) -> Result<DensityMatrix> {
    let ket = coherent_ket(alpha, cutoff)?;
    DensityMatrix::from_ket(ModeSpace::single(cutoff), &ket)
}

/// Product coherent state over all modes of a tensor space.
pub fn product_coherent_state(alphas: &[C64], cutoff: FockCutoff) -> Result<DensityMatrix> {
    let space = ModeSpace::new(alphas.len(), cutoff)?;
    let mut ket = CVec::from_elem(1, C64::new(1.0, 0.0));
    for &alpha in alphas {
        let k = coherent_ket(alpha, cutoff)?;
        let mut next = CVec::zeros(ket.len() * k.len());
        for (i, zi) in ket.iter().enumerate() {
            for (j, zj) in k.iter().enumerate() {
                next[i * k.len() + j] = zi * zj;
            }
        }
        ket = next;
    }
    DensityMatrix::from_ket(space, &ket)
}

/// Trace norm (sum of singular values) of a raw matrix.
///
/// Hermitian inputs take the cheaper eigenvalue path.
pub fn trace_norm_mat(mat: &CMat) -> Result<f64> {
    if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidParameter(
            "trace norm of non-finite matrix".into(),
        ));
    }
    let scale = linalg::max_abs(mat).max(1.0);
    if linalg::hermiticity_defect(mat) <= 1e-12 * scale {
        let eigs = linalg::eigvalsh_hermitian(&linalg::hermitian_part(mat))?;
        Ok(eigs.iter().map(|x| x.abs()).sum())
    } else {
        let s = linalg::singular_values(mat)?;
        Ok(s.sum())
    }
}

pub fn trace_norm(op: &Operator) -> Result<f64> {
    trace_norm_mat(&op.mat)
}

/// `tr[ρ (N+1)^k]` on a single mode; equals the Sobolev norm `‖ρ‖_{W^{k,1}}`
/// for positive ρ.
pub fn moment(rho: &DensityMatrix, k: f64) -> f64 {
    moment_mat(rho.mat(), rho.space(), k)
}

pub fn moment_mat(mat: &CMat, space: ModeSpace, k: f64) -> f64 {
    assert_eq!(space.modes, 1, "plain moment is single-mode; see lattice");
    assert!(k > 0.0, "moment exponent must be positive");
    mat.diag()
        .iter()
        .enumerate()
        .map(|(n, z)| z.re * ((n + 1) as f64).powf(k))
        .sum()
}

/// `tr[ρ (N_mode + 1)^k]` for one mode of a tensor space.
pub fn site_moment_mat(mat: &CMat, space: ModeSpace, mode: usize, k: f64) -> f64 {
    mat.diag()
        .iter()
        .enumerate()
        .map(|(b, z)| z.re * ((space.occupation(b, mode) + 1) as f64).powf(k))
        .sum()
}

/// Population mass in the top 10% of levels of any mode.
pub fn leakage_mat(mat: &CMat, space: ModeSpace) -> f64 {
    let d = space.cutoff.dim();
    let band_start = d - (d / 10).max(1);
    mat.diag()
        .iter()
        .enumerate()
        .filter(|(b, _)| (0..space.modes).any(|m| space.occupation(*b, m) >= band_start))
        .map(|(_, z)| z.re)
        .sum()
}

pub fn leakage(rho: &DensityMatrix) -> f64 {
    leakage_mat(rho.mat(), rho.space())
}

/// Abort threshold on `leakage` used by the experiment drivers.
pub const LEAKAGE_ABORT: f64 = 1e-6;

/// Fraction of levels that initial states may occupy in randomized tests.
pub const SUPPORT_FRACTION: f64 = 0.5;

fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

/// Random full-rank state on the block with all occupations `< support`,
/// embedded into the full space: sample complex Gaussian G, form GG†,
/// normalize the trace.
pub fn random_density<R: Rng>(space: ModeSpace, support: usize, rng: &mut R) -> DensityMatrix {
    let d = space.cutoff.dim();
    let support = support.clamp(1, d);
    let ds = support.pow(space.modes as u32);
    let g = CMat::from_shape_fn((ds, ds), |_| complex_gaussian(rng));
    let mut block = g.dot(&linalg::dagger(&g));
    let tr: f64 = block.diag().iter().map(|z| z.re).sum();
    block.mapv_inplace(|z| z / tr);

    // embed: block indices are occupations in base `support`
    let dim = space.dim();
    let mut mat = CMat::zeros((dim, dim));
    let embed = |bi: usize| -> usize {
        let mut idx = 0;
        let mut rest = bi;
        let mut digits = vec![0usize; space.modes];
        for m in (0..space.modes).rev() {
            digits[m] = rest % support;
            rest /= support;
        }
        for m in 0..space.modes {
            idx = idx * d + digits[m];
        }
        idx
    };
    for i in 0..ds {
        let ei = embed(i);
        for j in 0..ds {
            mat[(ei, embed(j))] = block[(i, j)];
        }
    }
    DensityMatrix {
        op: Operator { space, mat },
    }
}

/// Random pure state supported on occupations `< support`.
pub fn random_pure_ket<R: Rng>(space: ModeSpace, support: usize, rng: &mut R) -> CVec {
    let d = space.cutoff.dim();
    let support = support.clamp(1, d);
    let mut ket = CVec::zeros(space.dim());
    let ds = support.pow(space.modes as u32);
    let mut raw = Vec::with_capacity(ds);
    for _ in 0..ds {
        raw.push(complex_gaussian(rng));
    }
    let nrm: f64 = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut bi = 0;
    for idx in 0..space.dim() {
        if (0..space.modes).all(|m| space.occupation(idx, m) < support) {
            ket[idx] = raw[bi] / nrm;
            bi += 1;
        }
    }
    ket
}

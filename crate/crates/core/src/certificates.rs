//! Closed-form evaluation of the stability, regularization, convergence, and
//! perturbation bounds, plus the scalar helper functions they are built from.
//! Everything here is a pure function of model parameters; the numerics they
//! must dominate live in `evolve` and `catcode`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Comparison curve for `y' ≤ -a y^p + b`:
/// `z(t) = (max{y0 - (b/a)^{1/p}, 0}^{1-p} + a(p-1)t)^{-1/(p-1)} + (b/a)^{1/p}`,
/// with the conventions `1/∞ = 0` and `1/0 = ∞`, so a start at or below the
/// equilibrium pins `z` to the equilibrium value.
#[derive(Clone, Copy, Debug)]
pub struct GronwallCurve {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    pub y0: f64,
    equilibrium: f64,
}

pub fn gronwall_curve(a: f64, b: f64, p: f64, y0: f64) -> Result<GronwallCurve> {
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::InvalidParameter(
            "comparison curve needs a, b > 0".into(),
        ));
    }
    if p <= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "comparison curve needs p > 1, got {p}"
        )));
    }
    if y0 < 0.0 {
        return Err(Error::InvalidParameter("y0 must be nonnegative".into()));
    }
    Ok(GronwallCurve {
        a,
        b,
        p,
        y0,
        equilibrium: (b / a).powf(1.0 / p),
    })
}

impl GronwallCurve {
    pub fn equilibrium(&self) -> f64 {
        self.equilibrium
    }

    pub fn eval(&self, t: f64) -> f64 {
        let g0 = self.y0 - self.equilibrium;
        if g0 <= 0.0 {
            return self.equilibrium;
        }
        let base = g0.powf(1.0 - self.p) + self.a * (self.p - 1.0) * t;
        base.powf(-1.0 / (self.p - 1.0)) + self.equilibrium
    }
}

/// Inputs of the moment inequality
/// `tr[L(ρ)(N+1)^k] ≤ -μ tr[ρ(N+1)^{k+δ}] + c`, optionally together with a
/// weaker growth rate `ω`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub k: f64,
    pub delta: f64,
    pub mu: f64,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl StabilityCertificate {
    pub fn new(k: f64, delta: f64, mu: f64, c: f64) -> Result<Self> {
        if k <= 0.0 || delta <= 0.0 || mu <= 0.0 || c < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "certificate needs k, δ, μ > 0 and c >= 0; got k={k}, δ={delta}, μ={mu}, c={c}"
            )));
        }
        Ok(StabilityCertificate {
            k,
            delta,
            mu,
            c,
            omega: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.k, self.delta, self.mu, self.c).map(|_| ())
    }
}

/// `‖e^{tL}‖_{1→W^{k,1}} ≤ (k/(δμt))^{k/δ} + (c/μ)^{k/(k+δ)}`, diverging like
/// `t^{-k/δ}` as `t ↓ 0`.
pub fn regularization_bound(cert: &StabilityCertificate, t: f64) -> Result<f64> {
    cert.validate()?;
    if t <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "regularization bound needs t > 0, got {t}"
        )));
    }
    let first = (cert.k / (cert.delta * cert.mu * t)).powf(cert.k / cert.delta);
    let second = (cert.c / cert.mu).powf(cert.k / (cert.k + cert.delta));
    Ok(first + second)
}

/// Time-uniform bound `max{1, c/μ}` on the Sobolev-to-Sobolev norm.
pub fn uniform_bound(cert: &StabilityCertificate) -> f64 {
    (cert.c / cert.mu).max(1.0)
}

/// First time where the instantaneous-regularization bound drops below the
/// uniform one; `None` when the two only meet in the limit.
pub fn crossover_time(cert: &StabilityCertificate) -> Option<f64> {
    let uni = uniform_bound(cert);
    let tail = (cert.c / cert.mu).powf(cert.k / (cert.k + cert.delta));
    if tail >= uni {
        return None;
    }
    let reg = |t: f64| regularization_bound(cert, t).unwrap();
    let mut lo = 1e-9;
    while reg(lo) <= uni {
        lo /= 2.0;
    }
    let mut hi = 1.0;
    while reg(hi) > uni {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if reg(mid) > uni {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut v = 1.0;
    for i in 0..k {
        v *= (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Constants of the ℓ-photon moment inequality
/// `tr[L_ℓ(ρ)(N+1)^k] ≤ -(ℓ/2) tr[ρ(N+1)^{k+ℓ-1}] + (ℓ/2) μ_k^{(ℓ)}`.
#[derive(Clone, Copy, Debug)]
pub struct MuEll {
    /// The base constant: `Δ_ℓ` for pure dissipation, or its Hamiltonian
    /// variant `c` when a drive aggregate `Λ` is supplied.
    pub delta: f64,
    pub nu: f64,
    pub mu: f64,
}

/// `μ_k^{(ℓ)} = Δ^ν (ν-1)^{ν-1} / ν^ν` with `ν = ℓ+k-1` and
/// `Δ = (ℓ+1)ℓ + 4|α|^ℓ k ℓ^{k-1} √(ℓ!)`, plus `Λ(2ℓ)^k √((2ℓ)!)` when the
/// generator carries an on-mode Hamiltonian with coefficient aggregate `Λ`.
pub fn mu_ell(ell: usize, k: f64, alpha: C64, lambda: Option<f64>) -> Result<MuEll> {
    if ell < 2 {
        return Err(Error::InvalidParameter(format!(
            "photon order must be >= 2, got {ell}"
        )));
    }
    if k < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "moment order must be >= 1, got {k}"
        )));
    }
    let elf = ell as f64;
    let a = alpha.norm();
    let mut delta =
        (elf + 1.0) * elf + 4.0 * a.powf(elf) * k * elf.powf(k - 1.0) * factorial(ell).sqrt();
    if let Some(lam) = lambda {
        if lam < 0.0 {
            return Err(Error::InvalidParameter("Λ must be nonnegative".into()));
        }
        delta += lam * (2.0 * elf).powf(k) * factorial(2 * ell).sqrt();
    }
    let nu = elf + k - 1.0;
    // log-space evaluation keeps Δ^ν stable for larger ℓ, k
    let ln_mu = nu * delta.ln() + (nu - 1.0) * (nu - 1.0).ln() - nu * nu.ln();
    Ok(MuEll {
        delta,
        nu,
        mu: ln_mu.exp(),
    })
}

/// Stability certificate of the shifted ℓ-photon dissipation in the
/// normalization of `regularization_bound`: `μ = ℓ/2`, `δ = ℓ-1`,
/// `c = (ℓ/2)·μ_k^{(ℓ)}`.
pub fn ell_photon_certificate(
    ell: usize,
    k: f64,
    alpha: C64,
    lambda: Option<f64>,
) -> Result<StabilityCertificate> {
    let m = mu_ell(ell, k, alpha, lambda)?;
    StabilityCertificate::new(k, ell as f64 - 1.0, ell as f64 / 2.0, ell as f64 / 2.0 * m.mu)
}

/// Relative-bound data of a perturbation `E`:
/// `‖E(ρ)‖₁ ≤ c₁‖ρ‖_{W^{k,1}} + c₂‖ρ‖₁`, the perturbation strength `ε`, and
/// exponential-convergence data `(C̃, γ, k̃)` of the unperturbed semigroup.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PerturbationInputs {
    pub c1: f64,
    pub c2: f64,
    pub eps: f64,
    #[serde(default)]
    pub c_tilde: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub k_tilde: f64,
}

impl PerturbationInputs {
    pub fn validate(&self) -> Result<()> {
        if self.c1 < 0.0
            || self.c2 < 0.0
            || self.eps < 0.0
            || self.c_tilde < 0.0
            || self.gamma < 0.0
            || self.k_tilde < 0.0
        {
            return Err(Error::InvalidParameter(
                "perturbation inputs must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn require_delta_above_k(cert: &StabilityCertificate) -> Result<()> {
    if cert.delta <= cert.k {
        return Err(Error::InvalidParameter(format!(
            "perturbation bounds require δ > k, got δ={} k={}",
            cert.delta, cert.k
        )));
    }
    Ok(())
}

/// `‖e^{tL} - e^{t(L+εE)}‖_{1→1} ≤
///  ε (c₁ t^{1-k/δ} (k/(δμ))^{k/δ} + c₁ t (c/μ)^{k/(k+δ)} + c₂ t)`.
pub fn intermediate_bound(
    inputs: &PerturbationInputs,
    cert: &StabilityCertificate,
    t: f64,
) -> Result<f64> {
    inputs.validate()?;
    cert.validate()?;
    require_delta_above_k(cert)?;
    if t < 0.0 {
        return Err(Error::InvalidParameter("t must be nonnegative".into()));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let k = cert.k;
    let d = cert.delta;
    let first = inputs.c1 * t.powf(1.0 - k / d) * (k / (d * cert.mu)).powf(k / d);
    let second = inputs.c1 * t * (cert.c / cert.mu).powf(k / (k + d));
    Ok(inputs.eps * (first + second + inputs.c2 * t))
}

/// Which long-time convergence structure the perturbed bound refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LongtimeMode {
    /// Convergence to a unique steady state.
    Steady,
    /// Convergence to an invariant subspace; the error is measured outside it
    /// and the `C̃` factor in `Ĉ₂` doubles.
    Invariant,
}

#[derive(Clone, Copy, Debug)]
pub struct LongtimeBound {
    pub c_hat_1: f64,
    pub c_hat_2: f64,
    /// Bound valid for `t ≤ 1`.
    pub small_t: f64,
    /// Bound valid for `t ≥ 1`.
    pub large_t: f64,
}

/// Two-branch perturbation bound:
/// `t ≤ 1`: `diff + ε t^{1-k/δ} Ĉ₁ ‖ρ‖₁`,
/// `t ≥ 1`: `C̃ e^{-γt} diff + ε Ĉ₂ Ĉ₁ ‖ρ‖₁`, with
/// `Ĉ₁ = c₁(k/(δμ))^{k/δ} + c₁(c/μ)^{k/(k+δ)} + c₂` and
/// `Ĉ₂ = f·C̃(e^{-γ} - e^{-tγ})/γ + 1` (`f = 2` in invariant mode).
/// `diff` is `‖σ-ρ‖₁`, or `‖P^⊥(σ-ρ)‖₁` in invariant mode.
pub fn longtime_bounds(
    inputs: &PerturbationInputs,
    cert: &StabilityCertificate,
    t: f64,
    mode: LongtimeMode,
    diff_norm: f64,
    rho_norm: f64,
) -> Result<LongtimeBound> {
    inputs.validate()?;
    cert.validate()?;
    require_delta_above_k(cert)?;
    if t < 0.0 || diff_norm < 0.0 || rho_norm < 0.0 {
        return Err(Error::InvalidParameter(
            "time and norms must be nonnegative".into(),
        ));
    }
    let k = cert.k;
    let d = cert.delta;
    let c_hat_1 = inputs.c1 * (k / (d * cert.mu)).powf(k / d)
        + inputs.c1 * (cert.c / cert.mu).powf(k / (k + d))
        + inputs.c2;
    let factor = match mode {
        LongtimeMode::Steady => 1.0,
        LongtimeMode::Invariant => 2.0,
    };
    let c_hat_2 = if inputs.gamma > 0.0 {
        factor * inputs.c_tilde * ((-inputs.gamma).exp() - (-t * inputs.gamma).exp())
            / inputs.gamma
            + 1.0
    } else {
        1.0
    };
    let small_t = diff_norm + inputs.eps * t.powf(1.0 - k / d) * c_hat_1 * rho_norm;
    let large_t =
        inputs.c_tilde * (-inputs.gamma * t).exp() * diff_norm + inputs.eps * c_hat_2 * c_hat_1 * rho_norm;
    Ok(LongtimeBound {
        c_hat_1,
        c_hat_2,
        small_t,
        large_t,
    })
}

/// Trace-norm convergence bound of the shifted ℓ-photon dissipation to its
/// codespace:
/// `6 e^{-(t/4)ℓ!} ((1 + |α|^ℓ/√(ℓ!))² (16/((ℓ-1)μ_ℓ^{(ℓ)}t)² + 1/μ_ℓ^{(ℓ)}) + 1)`.
pub fn cat_convergence_bound(ell: usize, alpha: C64, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::InvalidParameter("t must be positive".into()));
    }
    let m = mu_ell(ell, ell as f64, alpha, None)?;
    let elf = ell as f64;
    let lf = factorial(ell);
    let shape = (1.0 + alpha.norm().powf(elf) / lf.sqrt()).powi(2);
    let transient = 16.0 / ((elf - 1.0) * m.mu * t).powi(2) + 1.0 / m.mu;
    Ok(6.0 * (-(t / 4.0) * lf).exp() * (shape * transient + 1.0))
}

/// Closed-form bound on the coherent-state moment `tr[|α⟩⟨α|(N+1)^k]`.
///
/// The logarithmic expression `(2k/ln(1+k/|α|²))^k` applies for
/// `|α|² ≥ k/(e^k - 1)`; below that the binomial floor `2^k` takes over
/// (`(1+x)^k ≤ (2 max{x,1})^k` in the underlying estimate).
pub fn coherent_moment_bound(alpha_max: f64, k: f64) -> f64 {
    assert!(k > 0.0 && alpha_max >= 0.0);
    let lambda = alpha_max * alpha_max;
    let x = if lambda > 0.0 {
        2.0 * k / (1.0 + k / lambda).ln()
    } else {
        0.0
    };
    x.max(2.0).powf(k)
}

/// Exact Poisson-series moment `Σ_n e^{-|α|²}|α|^{2n}/n! (n+1)^k`, truncated
/// once the remaining tail is below 1e-14 relative weight.
pub fn coherent_moment_exact(alpha: f64, k: f64) -> f64 {
    assert!(k > 0.0 && alpha >= 0.0);
    let lambda = alpha * alpha;
    if lambda == 0.0 {
        return 1.0;
    }
    let mut pmf = (-lambda).exp();
    let mut acc = pmf; // n = 0 term: (0+1)^k = 1
    let mut n = 0usize;
    loop {
        n += 1;
        pmf *= lambda / n as f64;
        let term = pmf * ((n + 1) as f64).powf(k);
        acc += term;
        if n as f64 > lambda && term < 1e-14 * acc.max(1.0) && pmf < 1e-16 {
            break;
        }
        if n > 100_000 {
            break;
        }
    }
    acc
}

/// `g_ℓ(x)` for `f(x) = (x+1)^k 1_{x ≥ -1}`: the difference `f(x) - f(x-ℓ)`
/// above `ℓ-1`, `f(x)` on `[0, ℓ-1)`, zero below.
pub fn g_ell(ell: usize, k: f64, x: f64) -> f64 {
    assert!(ell >= 1 && k > 0.0);
    if x < 0.0 {
        0.0
    } else if x < ell as f64 - 1.0 {
        (x + 1.0).powf(k)
    } else {
        let shifted = x - ell as f64;
        let f_shift = if shifted >= -1.0 {
            (shifted + 1.0).powf(k)
        } else {
            0.0
        };
        (x + 1.0).powf(k) - f_shift
    }
}

/// Piecewise lower bound: `ℓ(x+1)^{k-1}` above `ℓ-1`, `(x+1)^k` on
/// `[0, ℓ-1)`, zero below.
pub fn g_ell_lower(ell: usize, k: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x < ell as f64 - 1.0 {
        (x + 1.0).powf(k)
    } else {
        ell as f64 * (x + 1.0).powf(k - 1.0)
    }
}

/// Upper bound `min{kℓ(x+1)^{k-1}, (x+1)^k}` for `x ≥ 0` (`k ≥ 1`), zero
/// below; the mean-value factor `kℓ` is tight for `k = 1`.
pub fn g_ell_upper(ell: usize, k: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        (k * ell as f64 * (x + 1.0).powf(k - 1.0)).min((x + 1.0).powf(k))
    }
}

/// `max_{X≥0} (-αX^a + βX^b) ≤ (βb/(αa))^{b/(a-b)} β` for `a > b > 0`.
pub fn polymax_bound(alpha: f64, beta: f64, a: f64, b: f64) -> Result<f64> {
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(Error::InvalidParameter("polymax needs α, β > 0".into()));
    }
    if !(a > b && b > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "polymax needs a > b > 0, got a={a}, b={b}"
        )));
    }
    Ok((beta * b / (alpha * a)).powf(b / (a - b)) * beta)
}

/// `((x+1)-ℓ)···((x+1)-1)` and `(x+1)···(x+ℓ)` with their polynomial
/// sandwiches, valid for `x ≥ ℓ`.
#[derive(Clone, Copy, Debug)]
pub struct ProductBounds {
    pub falling: f64,
    pub falling_lower: f64,
    pub falling_upper: f64,
    pub rising: f64,
    pub rising_lower: f64,
    pub rising_upper: f64,
}

pub fn product_bounds(ell: usize, x: f64) -> Result<ProductBounds> {
    if ell < 1 {
        return Err(Error::InvalidParameter("ℓ must be >= 1".into()));
    }
    if x < ell as f64 {
        return Err(Error::InvalidParameter(format!(
            "product bounds need x >= ℓ, got x={x}, ℓ={ell}"
        )));
    }
    let u = x + 1.0;
    let elf = ell as f64;
    let falling: f64 = (1..=ell).map(|j| u - j as f64).product();
    let rising: f64 = (0..ell).map(|j| u + j as f64).product();
    Ok(ProductBounds {
        falling,
        falling_lower: u.powf(elf) - (elf + 1.0) * elf / 2.0 * u.powf(elf - 1.0),
        falling_upper: u.powf(elf),
        rising,
        rising_lower: u.powf(elf),
        rising_upper: factorial(ell) * u.powf(elf),
    })
}

/// Relative-bound constant `c₁` of a commutator perturbation
/// `ρ ↦ -i[H, ρ]` with the single-mode Hamiltonian structure, measured
/// against `‖ρ‖_{W^{d_H,1}}`:
///
/// `‖[H,ρ]‖₁ ≤ 2 Σ |λ_{ij}| (√(j!(j+1)^i) + √(i!(i+1)^j)) ‖ρ‖_{W^{i+j,1}}`,
///
/// from `‖a^i(a†)^j (N+1)^{-(i+j)/2}‖_∞ ≤ √(j!(j+1)^i)` and the monotonicity
/// of the moment norms in the order. `c₂ = 0` for pure commutators.
pub fn commutator_relative_bound(terms: &[(usize, usize, f64)]) -> f64 {
    let omega = |i: usize, j: usize| (factorial(j) * ((j + 1) as f64).powi(i as i32)).sqrt();
    2.0 * terms
        .iter()
        .map(|&(i, j, lam)| lam * (omega(i, j) + omega(j, i)))
        .sum::<f64>()
}

/// Positive constant stored in log space; the closed-form multi-mode
/// constants overflow `f64` already for moderate ℓ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    ln: f64,
}

impl Scaled {
    pub fn from_ln(ln: f64) -> Self {
        Scaled { ln }
    }

    pub fn from_value(v: f64) -> Self {
        assert!(v >= 0.0);
        Scaled { ln: v.ln() }
    }

    pub fn zero() -> Self {
        Scaled { ln: f64::NEG_INFINITY }
    }

    pub fn is_zero(&self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    pub fn ln_value(&self) -> f64 {
        self.ln
    }

    /// May overflow to infinity; use `mantissa_exp10` for display.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    /// Base-10 scientific representation `(m, e)` with `m ∈ [1, 10)`.
    pub fn mantissa_exp10(&self) -> (f64, i32) {
        if self.is_zero() {
            return (0.0, 0);
        }
        let log10 = self.ln / std::f64::consts::LN_10;
        let e = log10.floor();
        (10f64.powf(log10 - e), e as i32)
    }

    pub fn mul(&self, other: Scaled) -> Scaled {
        Scaled { ln: self.ln + other.ln }
    }

    pub fn mul_f64(&self, v: f64) -> Scaled {
        assert!(v >= 0.0);
        Scaled { ln: self.ln + v.ln() }
    }

    pub fn powf(&self, e: f64) -> Scaled {
        Scaled { ln: self.ln * e }
    }

    /// Addition through `ln(x + y)`; exact enough for bound evaluation.
    pub fn add(&self, other: Scaled) -> Scaled {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return *self;
        }
        let (hi, lo) = if self.ln >= other.ln {
            (self.ln, other.ln)
        } else {
            (other.ln, self.ln)
        };
        Scaled { ln: hi + (lo - hi).exp().ln_1p() }
    }
}

impl std::fmt::Display for Scaled {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (m, e) = self.mantissa_exp10();
        write!(f, "{m:.6}e{e}")
    }
}

/// Which branch of the multi-mode stability statement to instantiate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultimodeMode {
    /// `d_H ≤ 2(ℓ-1)` with dissipation strength `η ≥ η_k`.
    WithEta { eta: Option<f64> },
    /// `d_H ≤ 2(ℓ-2)` at unit dissipation strength.
    DegreeRestricted,
}

/// Constants of the 2-local multi-mode stability inequality.
#[derive(Clone, Copy, Debug)]
pub struct MultimodeConstants {
    /// `Γ_{ℓ,k} = 4k(ℓ-1)((2ℓ+1)!)³ · C(2ℓ+2, 4) · ‖λ‖_∞`.
    pub gamma: Scaled,
    /// Infimum of admissible dissipation strengths (with-η branch only).
    pub eta_min: Option<Scaled>,
    /// The aggregated constant entering the polynomial optimization.
    pub big_c: Scaled,
    /// Additive constant `μ_k` of the weighted moment inequality.
    pub mu: Scaled,
    /// Coefficient of the negative `tr[W_v^{ℓ+k-1}]` term.
    pub neg_coeff: Scaled,
}

/// Evaluate the multi-mode constants for a `D`-dimensional lattice with
/// 2-local coupling of sup-norm `lambda_sup`, shift amplitudes up to
/// `alpha_max`, and an on-mode coefficient aggregate `lambda_diag`.
pub fn multimode_constants(
    lattice_dim: usize,
    ell: usize,
    k: f64,
    lambda_sup: f64,
    kappa: f64,
    alpha_max: f64,
    lambda_diag: f64,
    mode: MultimodeMode,
) -> Result<MultimodeConstants> {
    if ell < 2 {
        return Err(Error::InvalidParameter("ℓ must be >= 2".into()));
    }
    if k < 2.0 {
        return Err(Error::InvalidParameter(
            "the multi-mode constants need k >= 2".into(),
        ));
    }
    if kappa <= 1.0 {
        return Err(Error::InvalidParameter("κ must exceed 1".into()));
    }
    if lambda_sup < 0.0 || alpha_max < 0.0 || lambda_diag < 0.0 {
        return Err(Error::InvalidParameter(
            "coefficient norms must be nonnegative".into(),
        ));
    }
    let elf = ell as f64;
    let d = lattice_dim as f64;

    let gamma = if lambda_sup == 0.0 {
        Scaled::zero()
    } else {
        Scaled::from_ln(
            (4.0 * k * (elf - 1.0)).ln()
                + 3.0 * ln_factorial(2 * ell + 1)
                + binom(2 * ell + 2, 4).ln()
                + lambda_sup.ln(),
        )
    };

    // on-mode constant of the single-mode lemma with drive aggregate Λ
    let c_onsite = mu_ell(ell, k, C64::new(alpha_max, 0.0), Some(lambda_diag))?.delta;

    let geometry = 1.0 + 2.0 * d * kappa.exp(); // 1 + 2De^κ
    match mode {
        MultimodeMode::WithEta { eta } => {
            let threshold = gamma.mul_f64(2.0 * d * geometry); // 2DΓ(1+2De^κ)
            let eta_min = threshold.mul_f64(2.0 / elf);
            // C = ηℓ/2 - 2DΓ(1+2De^κ) > 0; the default η = 2η_min gives
            // C = threshold without leaving log space.
            let big_c = match eta {
                Some(e) => {
                    if !eta_min.value().is_finite() {
                        return Err(Error::InvalidParameter(
                            "η_min overflows f64; omit η to use the default 2·η_min".into(),
                        ));
                    }
                    if e <= eta_min.value() {
                        return Err(Error::InvalidParameter(format!(
                            "η = {e} must exceed η_min = {eta_min}"
                        )));
                    }
                    Scaled::from_value(e * elf / 2.0 - threshold.value())
                }
                None => {
                    if eta_min.is_zero() {
                        Scaled::from_value(elf / 2.0) // η defaults to 1
                    } else {
                        threshold
                    }
                }
            };
            let half_cl = Scaled::from_value(c_onsite * elf / 2.0);
            let ratio = Scaled::from_value(c_onsite * elf).mul(big_c.powf(-1.0));
            let mu = half_cl.mul(ratio.powf(elf + k - 2.0));
            Ok(MultimodeConstants {
                gamma,
                eta_min: Some(eta_min),
                big_c,
                mu,
                neg_coeff: big_c.mul_f64(0.5),
            })
        }
        MultimodeMode::DegreeRestricted => {
            let big_c = gamma
                .mul_f64(2.0 * d * geometry)
                .add(Scaled::from_value(elf / 2.0 * c_onsite));
            let mu = big_c.mul(big_c.mul_f64(4.0 / elf).powf(elf + k - 2.0));
            Ok(MultimodeConstants {
                gamma,
                eta_min: None,
                big_c,
                mu,
                neg_coeff: Scaled::from_value(elf / 4.0),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::suite::integrate_scalar_ode;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gronwall_equilibrium_start_is_flat() {
        let z = gronwall_curve(1.0, 1.0, 2.0, 1.0).unwrap();
        for t in [0.0, 0.1, 1.0, 10.0] {
            assert!((z.eval(t) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gronwall_closed_form_above_equilibrium() {
        let z = gronwall_curve(1.0, 1.0, 2.0, 2.0).unwrap();
        for t in [0.0, 0.5, 1.0, 3.0, 10.0] {
            let want = 1.0 / (1.0 + t) + 1.0;
            assert!((z.eval(t) - want).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn gronwall_dominates_ode_oracle() {
        // y' = -a y^p + b integrated independently
        for (a, b, p) in [(1.0, 1.0, 2.0), (0.3, 2.0, 1.5), (2.0, 0.1, 3.0)] {
            let eq = (b / a as f64).powf(1.0 / p);
            for y0 in [0.0, eq, 10.0 * eq] {
                let z = gronwall_curve(a, b, p, y0).unwrap();
                let path = integrate_scalar_ode(|_, y| -a * y.max(0.0).powf(p) + b, y0, 10.0);
                for &(t, y) in &path {
                    assert!(
                        y <= z.eval(t) + 1e-9,
                        "a={a} b={b} p={p} y0={y0} t={t}: {y} > {}",
                        z.eval(t)
                    );
                }
            }
        }
    }

    #[test]
    fn gronwall_rejects_bad_exponent() {
        assert!(gronwall_curve(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(gronwall_curve(1.0, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn regularization_hand_values() {
        let cert = StabilityCertificate::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert!((regularization_bound(&cert, 1.0).unwrap() - 2.0).abs() < 1e-14);
        let large = regularization_bound(&cert, 1e12).unwrap();
        assert!((large - 1.0).abs() < 1e-10);
        assert!(regularization_bound(&cert, 0.0).is_err());
    }

    #[test]
    fn uniform_bound_and_crossover() {
        let cert = StabilityCertificate::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(uniform_bound(&cert), 1.0);
        let cert2 = StabilityCertificate::new(1.0, 1.0, 1.0, 2.0).unwrap();
        assert_eq!(uniform_bound(&cert2), 2.0);
        let t0 = crossover_time(&cert2).unwrap();
        let r = regularization_bound(&cert2, t0).unwrap();
        assert!((r - uniform_bound(&cert2)).abs() < 1e-9);
        // c = μ: the curves only meet asymptotically
        assert!(crossover_time(&cert).is_none());
    }

    #[test]
    fn mu_ell_hand_values() {
        let m = mu_ell(2, 1.0, c(0.0, 0.0), None).unwrap();
        assert!((m.delta - 6.0).abs() < 1e-12);
        assert!((m.nu - 2.0).abs() < 1e-15);
        assert!((m.mu - 9.0).abs() < 1e-10);

        let with_zero_drive = mu_ell(2, 1.0, c(0.0, 0.0), Some(0.0)).unwrap();
        assert!((with_zero_drive.mu - m.mu).abs() < 1e-12);

        let m1 = mu_ell(2, 1.0, c(1.0, 0.0), None).unwrap();
        let delta = 6.0 + 4.0 * 2f64.sqrt();
        assert!((m1.delta - delta).abs() < 1e-12);
        assert!((m1.mu - delta * delta / 4.0).abs() < 1e-10);
    }

    #[test]
    fn mu_ell_domain() {
        assert!(mu_ell(1, 1.0, c(0.0, 0.0), None).is_err());
        assert!(mu_ell(2, 0.5, c(0.0, 0.0), None).is_err());
    }

    #[test]
    fn intermediate_bound_basics() {
        let cert = StabilityCertificate::new(1.0, 2.0, 1.5, 384.0).unwrap();
        let mut inputs = PerturbationInputs {
            c1: 4.0,
            c2: 0.0,
            eps: 0.0,
            c_tilde: 0.0,
            gamma: 0.0,
            k_tilde: 0.0,
        };
        assert_eq!(intermediate_bound(&inputs, &cert, 1.0).unwrap(), 0.0);
        inputs.eps = 0.1;
        assert_eq!(intermediate_bound(&inputs, &cert, 0.0).unwrap(), 0.0);
        assert!(intermediate_bound(&inputs, &cert, 1.0).unwrap() > 0.0);

        let bad = StabilityCertificate::new(2.0, 1.0, 1.0, 1.0).unwrap();
        assert!(intermediate_bound(&inputs, &bad, 1.0).is_err());
    }

    #[test]
    fn longtime_hand_values() {
        let cert = StabilityCertificate::new(1.0, 2.0, 1.0, 1.0).unwrap();
        let inputs = PerturbationInputs {
            c1: 1.0,
            c2: 0.0,
            eps: 0.0,
            c_tilde: 3.0,
            gamma: 0.7,
            k_tilde: 2.0,
        };
        let b = longtime_bounds(&inputs, &cert, 2.0, LongtimeMode::Steady, 0.0, 1.0).unwrap();
        let want_c1 = 0.5f64.sqrt() + 1.0;
        assert!((b.c_hat_1 - want_c1).abs() < 1e-14);
        // ε = 0 and coinciding initial states: both branches vanish
        assert_eq!(b.small_t, 0.0);
        assert_eq!(b.large_t, 0.0);

        // t → ∞ limit of the steady-mode Ĉ₂
        let b_inf =
            longtime_bounds(&inputs, &cert, 1e9, LongtimeMode::Steady, 0.0, 1.0).unwrap();
        let want = 3.0 * (-0.7f64).exp() / 0.7 + 1.0;
        assert!((b_inf.c_hat_2 - want).abs() < 1e-9);

        // invariant mode doubles the C̃ part
        let b_inv =
            longtime_bounds(&inputs, &cert, 1e9, LongtimeMode::Invariant, 0.0, 1.0).unwrap();
        assert!((b_inv.c_hat_2 - (2.0 * 3.0 * (-0.7f64).exp() / 0.7 + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn cat_bound_hand_value() {
        // ℓ = 2, α = 0, t = 1: μ₂^{(2)} = 6³·4/27 = 32
        let m = mu_ell(2, 2.0, c(0.0, 0.0), None).unwrap();
        assert!((m.mu - 32.0).abs() < 1e-10);
        let b = cat_convergence_bound(2, c(0.0, 0.0), 1.0).unwrap();
        let want = 6.0 * (-0.5f64).exp() * ((16.0 / 1024.0 + 1.0 / 32.0) + 1.0);
        assert!((b - want).abs() < 1e-12);
    }

    #[test]
    fn cat_bound_eventually_decreases() {
        let mut prev = f64::INFINITY;
        for i in 0..40 {
            let t = 1.0 + i as f64 * 0.25;
            let b = cat_convergence_bound(2, c(1.0, 0.0), t).unwrap();
            assert!(b.is_finite());
            assert!(b < prev);
            prev = b;
        }
        assert!(cat_convergence_bound(2, c(1.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn coherent_moment_bound_dominates_exact_series() {
        // α = 0: exact moment 1, floor 2^k
        assert!((coherent_moment_exact(0.0, 3.0) - 1.0).abs() < 1e-15);
        assert!(coherent_moment_bound(0.0, 3.0) >= 1.0);

        // |α|² = 1, k = 1: exact 2 vs 2/ln 2
        let exact = coherent_moment_exact(1.0, 1.0);
        assert!((exact - 2.0).abs() < 1e-12);
        let bound = coherent_moment_bound(1.0, 1.0);
        assert!((bound - 2.0 / 2f64.ln()).abs() < 1e-12);
        assert!(exact <= bound);

        for k in 1..=5 {
            let k = k as f64;
            let mut a = 0.0;
            while a <= 3.0 + 1e-12 {
                let e = coherent_moment_exact(a, k);
                let b = coherent_moment_bound(a, k);
                assert!(e <= b + 1e-10, "k={k} α={a}: {e} > {b}");
                a += 0.05;
            }
        }
    }

    #[test]
    fn g_ell_cases_and_sandwich() {
        assert_eq!(g_ell(3, 2.0, -0.5), 0.0);
        assert!((g_ell(3, 2.0, 1.0) - 4.0).abs() < 1e-15); // below ℓ-1: f(x)
        let mut x = 0.0;
        while x <= 100.0 {
            for ell in 1..=4 {
                for k in [1.0, 2.0, 3.0] {
                    let g = g_ell(ell, k, x);
                    assert!(
                        g_ell_lower(ell, k, x) <= g + 1e-9,
                        "lower fails ℓ={ell} k={k} x={x}"
                    );
                    assert!(
                        g <= g_ell_upper(ell, k, x) + 1e-9,
                        "upper fails ℓ={ell} k={k} x={x}"
                    );
                    // monotonicity in ℓ and in the argument shift
                    assert!(g <= g_ell(ell + 1, k, x) + 1e-9);
                    assert!(g_ell(ell, k, x - ell as f64) <= g + 1e-9);
                }
            }
            x += 0.25;
        }
    }

    #[test]
    fn polymax_dominates_grid_search() {
        // -X² + X: true max 0.25, bound 0.5
        let bound = polymax_bound(1.0, 1.0, 2.0, 1.0).unwrap();
        assert!((bound - 0.5).abs() < 1e-15);
        let mut max = f64::NEG_INFINITY;
        let mut x = 0.0;
        while x <= 10.0 {
            max = max.max(-x * x + x);
            x += 1e-4;
        }
        assert!((max - 0.25).abs() < 1e-6);
        assert!(max <= bound);

        for (alpha, beta, a, b) in [(2.0, 3.0, 3.0, 1.0), (0.5, 1.5, 2.5, 2.0), (1.0, 10.0, 4.0, 3.0)] {
            let bound = polymax_bound(alpha, beta, a, b).unwrap();
            let mut max = f64::NEG_INFINITY;
            let mut x = 0.0f64;
            while x <= 200.0 {
                max = max.max(-alpha * x.powf(a) + beta * x.powf(b));
                x += 1e-3;
            }
            assert!(max <= bound + 1e-9, "grid max {max} > bound {bound}");
        }
        assert!(polymax_bound(1.0, 1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn product_bounds_hand_value() {
        let pb = product_bounds(2, 3.0).unwrap();
        assert!((pb.falling - 6.0).abs() < 1e-13);
        assert!((pb.falling_lower - 4.0).abs() < 1e-13);
        assert!((pb.falling_upper - 16.0).abs() < 1e-13);
        assert!(pb.falling_lower <= pb.falling && pb.falling <= pb.falling_upper);
        assert!((pb.rising - 20.0).abs() < 1e-13);
        assert!(pb.rising_lower <= pb.rising && pb.rising <= pb.rising_upper);
        assert!(product_bounds(2, 1.5).is_err());
    }

    #[test]
    fn product_bounds_sandwich_on_grid() {
        for ell in 1..=4usize {
            let mut x = ell as f64;
            while x <= 60.0 {
                let pb = product_bounds(ell, x).unwrap();
                assert!(pb.falling_lower <= pb.falling + 1e-9);
                assert!(pb.falling <= pb.falling_upper + 1e-9);
                assert!(pb.rising_lower <= pb.rising + 1e-9);
                assert!(pb.rising <= pb.rising_upper + 1e-9);
                x += 0.5;
            }
        }
    }

    #[test]
    fn multimode_constants_hand_value() {
        // Γ = 4·2·1·(5!)³·C(6,4)·1 = 8·1728000·15
        let c = multimode_constants(
            1,
            2,
            2.0,
            1.0,
            2.0,
            0.0,
            0.0,
            MultimodeMode::DegreeRestricted,
        )
        .unwrap();
        let want = 8.0 * 1_728_000.0 * 15.0;
        assert!((c.gamma.value() - want).abs() / want < 1e-12);

        let zero = multimode_constants(
            1,
            2,
            2.0,
            0.0,
            2.0,
            0.0,
            0.0,
            MultimodeMode::WithEta { eta: None },
        )
        .unwrap();
        assert!(zero.gamma.is_zero());
        assert!(zero.eta_min.unwrap().is_zero());
    }

    #[test]
    fn scaled_arithmetic() {
        let x = Scaled::from_value(3.0e5);
        let (m, e) = x.mantissa_exp10();
        assert!((m - 3.0).abs() < 1e-10);
        assert_eq!(e, 5);
        let y = x.mul(x).powf(0.5);
        assert!((y.value() - 3.0e5).abs() < 1e-4);
        let s = x.add(Scaled::from_value(7.0e5));
        assert!((s.value() - 1.0e6).abs() < 1e-4);
    }
}

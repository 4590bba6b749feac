//! Master-equation integration and empirical semigroup analysis: an adaptive
//! Dormand–Prince 5(4) integrator on density matrices, dense propagators by
//! matrix exponential, long-time fixed-point extraction, and sampled lower
//! bounds on 1→1 superoperator distances.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, ModeSpace};
use crate::gksl::Superoperator;
use crate::lattice::WeightProfile;
use crate::linalg::{self, CMat};

/// Integration controls and per-step tracking configuration.
#[derive(Clone, Debug)]
pub struct IntegrateOpts {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Abort when `|tr ρ - 1|` exceeds this.
    pub trace_tol: f64,
    /// Abort when the top-band population exceeds this.
    pub leakage_threshold: f64,
    /// Number-moment orders recorded at every accepted step.
    pub track_ks: Vec<f64>,
    /// Weighted-moment profiles `(W_v, k)` recorded at every accepted step.
    pub track_weighted: Vec<(WeightProfile, f64)>,
    /// Times at which full states are stored.
    pub checkpoints: Vec<f64>,
}

impl Default for IntegrateOpts {
    fn default() -> Self {
        IntegrateOpts {
            rtol: 1e-9,
            atol: 1e-11,
            max_steps: 50_000_000,
            trace_tol: 1e-6,
            leakage_threshold: fock::LEAKAGE_ABORT,
            track_ks: vec![],
            track_weighted: vec![],
            checkpoints: vec![],
        }
    }
}

/// Scalars recorded at one accepted step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub t: f64,
    pub trace: f64,
    pub min_eig: f64,
    pub leakage: f64,
    pub moments: Vec<f64>,
    pub weighted: Vec<f64>,
}

/// Result of one integration run.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub space: ModeSpace,
    pub steps: Vec<StepRecord>,
    pub checkpoints: Vec<(f64, CMat)>,
    pub track_ks: Vec<f64>,
    pub weighted_labels: Vec<(usize, f64)>,
    pub final_state: CMat,
    pub hermiticity_drift: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    /// Worst positivity violation over the run (`≥ 0` means none).
    pub fn min_eig(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| s.min_eig)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_trace_error(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| (s.trace - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn state_at(&self, t: f64) -> Option<&CMat> {
        self.checkpoints
            .iter()
            .find(|(ct, _)| (ct - t).abs() <= 1e-9 * t.abs().max(1.0))
            .map(|(_, m)| m)
    }

    /// CSV export of the per-step scalars.
    pub fn to_csv(&self) -> String {
        let mut header = String::from("t,trace,min_eig,leakage");
        for k in &self.track_ks {
            header.push_str(&format!(",moment_k={k}"));
        }
        for (v, k) in &self.weighted_labels {
            header.push_str(&format!(",wmoment_v={v}_k={k}"));
        }
        let mut out = header;
        out.push('\n');
        for s in &self.steps {
            out.push_str(&format!("{},{},{},{}", s.t, s.trace, s.min_eig, s.leakage));
            for m in &s.moments {
                out.push_str(&format!(",{m}"));
            }
            for w in &s.weighted {
                out.push_str(&format!(",{w}"));
            }
            out.push('\n');
        }
        out
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// difference between the 5th- and 4th-order weights
const E1: f64 = 71.0 / 57_600.0;
const E3: f64 = -71.0 / 16_695.0;
const E4: f64 = 71.0 / 1_920.0;
const E5: f64 = -17_253.0 / 339_200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn lc(terms: &[(f64, &CMat)]) -> CMat {
    let mut out = terms[0].1.mapv(|z| terms[0].0 * z);
    for &(c, m) in &terms[1..] {
        out.zip_mut_with(m, |o, &v| *o += c * v);
    }
    out
}

fn error_norm(err: &CMat, y: &CMat, ynew: &CMat, atol: f64, rtol: f64) -> f64 {
    let mut acc = 0.0;
    let n = err.len() as f64;
    for ((e, a), b) in err.iter().zip(y.iter()).zip(ynew.iter()) {
        let sc = atol + rtol * a.norm().max(b.norm());
        let r = e.norm() / sc;
        acc += r * r;
    }
    (acc / n).sqrt()
}

fn record_step(
    t: f64,
    y: &CMat,
    space: ModeSpace,
    opts: &IntegrateOpts,
) -> Result<StepRecord> {
    let trace: f64 = y.diag().iter().map(|z| z.re).sum();
    let min_eig = linalg::eigvalsh_hermitian(y)?
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let leakage = fock::leakage_mat(y, space);
    let moments = opts
        .track_ks
        .iter()
        .map(|&k| {
            if space.modes == 1 {
                fock::moment_mat(y, space, k)
            } else {
                fock::site_moment_mat(y, space, 0, k)
            }
        })
        .collect();
    let weighted = opts
        .track_weighted
        .iter()
        .map(|(p, k)| crate::lattice::weighted_moment_mat(p, y, space, *k))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepRecord {
        t,
        trace,
        min_eig,
        leakage,
        moments,
        weighted,
    })
}

/// Integrate `∂ρ/∂t = L(ρ)` from a validated state.
pub fn integrate(
    gen: &Superoperator,
    rho0: &DensityMatrix,
    t_end: f64,
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    integrate_mat(gen, rho0.mat(), t_end, opts)
}

/// Integrate from a raw Hermitian unit-trace matrix (used for chaining runs).
pub fn integrate_mat(
    gen: &Superoperator,
    rho0: &CMat,
    t_end: f64,
    opts: &IntegrateOpts,
) -> Result<Trajectory> {
    let space = gen.space();
    if rho0.dim() != (space.dim(), space.dim()) {
        return Err(Error::DimMismatch("initial state dimension".into()));
    }
    if t_end <= 0.0 {
        return Err(Error::InvalidParameter("t_end must be positive".into()));
    }
    linalg::tune_blas_threads(space.dim());

    let mut targets: Vec<f64> = opts
        .checkpoints
        .iter()
        .cloned()
        .filter(|&t| t > 0.0 && t <= t_end)
        .collect();
    targets.push(t_end);
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-14);

    let mut y = linalg::hermitian_part(rho0);
    let mut t = 0.0;
    let mut steps = Vec::new();
    let mut checkpoints = Vec::new();
    steps.push(record_step(t, &y, space, opts)?);

    let mut k1 = gen.apply(&y);
    let scale_est = gen.norm_estimate().max(1e-12);
    let mut h = (1.0 / scale_est).min(t_end / 16.0).max(1e-12);
    let mut drift: f64 = 0.0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let hmin = 1e-14 * t_end.max(1.0);

    for &target in &targets {
        while t < target * (1.0 - 1e-14) {
            if accepted + rejected > opts.max_steps {
                return Err(Error::Integration(format!(
                    "step budget exhausted at t = {t:.6e}"
                )));
            }
            let clipped = h.min(target - t);
            let hh = clipped;

            let k2 = gen.apply(&lc(&[(1.0, &y), (hh * A21, &k1)]));
            let k3 = gen.apply(&lc(&[(1.0, &y), (hh * A31, &k1), (hh * A32, &k2)]));
            let k4 = gen.apply(&lc(&[
                (1.0, &y),
                (hh * A41, &k1),
                (hh * A42, &k2),
                (hh * A43, &k3),
            ]));
            let k5 = gen.apply(&lc(&[
                (1.0, &y),
                (hh * A51, &k1),
                (hh * A52, &k2),
                (hh * A53, &k3),
                (hh * A54, &k4),
            ]));
            let k6 = gen.apply(&lc(&[
                (1.0, &y),
                (hh * A61, &k1),
                (hh * A62, &k2),
                (hh * A63, &k3),
                (hh * A64, &k4),
                (hh * A65, &k5),
            ]));
            let ynew = lc(&[
                (1.0, &y),
                (hh * B1, &k1),
                (hh * B3, &k3),
                (hh * B4, &k4),
                (hh * B5, &k5),
                (hh * B6, &k6),
            ]);
            let k7 = gen.apply(&ynew);
            let err_mat = lc(&[
                (hh * E1, &k1),
                (hh * E3, &k3),
                (hh * E4, &k4),
                (hh * E5, &k5),
                (hh * E6, &k6),
                (hh * E7, &k7),
            ]);
            let err = error_norm(&err_mat, &y, &ynew, opts.atol, opts.rtol);

            if err <= 1.0 {
                t += hh;
                drift = drift.max(linalg::hermiticity_defect(&ynew));
                y = linalg::hermitian_part(&ynew);
                k1 = k7;
                accepted += 1;

                let rec = record_step(t, &y, space, opts)?;
                if (rec.trace - 1.0).abs() > opts.trace_tol {
                    return Err(Error::Integration(format!(
                        "trace drift {:.3e} at t = {t:.6e}",
                        rec.trace - 1.0
                    )));
                }
                if rec.leakage > opts.leakage_threshold {
                    return Err(Error::Integration(format!(
                        "leakage {:.3e} breached threshold {:.1e} at t = {t:.6e}; \
                         raise the cutoff",
                        rec.leakage, opts.leakage_threshold
                    )));
                }
                steps.push(rec);

                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (hh * fac).max(hmin);
            } else {
                rejected += 1;
                let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                h = hh * fac;
                if h < hmin {
                    return Err(Error::Integration(format!(
                        "step size underflow at t = {t:.6e}"
                    )));
                }
                // k1 still holds f(t, y)
            }
        }
        if opts
            .checkpoints
            .iter()
            .any(|&c| (c - target).abs() < 1e-14)
        {
            checkpoints.push((target, y.clone()));
        }
    }

    Ok(Trajectory {
        space,
        steps,
        checkpoints,
        track_ks: opts.track_ks.clone(),
        weighted_labels: opts
            .track_weighted
            .iter()
            .map(|(p, k)| (p.center, *k))
            .collect(),
        final_state: y,
        hermiticity_drift: drift,
        accepted,
        rejected,
    })
}

/// Dense propagator `e^{tL}` acting on vectorized states.
pub struct Propagator {
    space: ModeSpace,
    mat: CMat,
}

impl Propagator {
    pub fn space(&self) -> ModeSpace {
        self.space
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    /// Apply to a state matrix.
    pub fn apply(&self, rho: &CMat) -> CMat {
        let d = self.space.dim();
        let v = Array1::from_iter(rho.iter().cloned());
        let out = self.mat.dot(&v);
        Array2::from_shape_vec((d, d), out.to_vec()).expect("shape preserved")
    }

    /// Compose two propagators of the same generator family.
    pub fn compose(&self, other: &Propagator) -> Result<Propagator> {
        if self.space != other.space {
            return Err(Error::DimMismatch("propagator space mismatch".into()));
        }
        Ok(Propagator {
            space: self.space,
            mat: self.mat.dot(&other.mat),
        })
    }
}

/// Propagator by scaling-and-squaring matrix exponential of the vectorized
/// generator. Needs the dense form, so the dimension cap applies.
pub fn propagator(gen: &Superoperator, t: f64) -> Result<Propagator> {
    if t < 0.0 {
        return Err(Error::InvalidParameter("propagator needs t >= 0".into()));
    }
    let dense = gen.dense()?;
    let scaled = dense.mapv(|z| z * t);
    Ok(Propagator {
        space: gen.space(),
        mat: linalg::expm(&scaled)?,
    })
}

/// Long-time limits of a convergent semigroup, one per probe.
pub struct FixedPointResult {
    pub limits: Vec<CMat>,
    /// `‖L(P(ρ))‖₁` per probe.
    pub residuals: Vec<f64>,
    pub stalled: Vec<bool>,
    pub horizon_used: f64,
    pub stall_tol: f64,
}

/// Evolve probes until `‖ρ(t+Δ) - ρ(t)‖₁ < stall_tol` (or the horizon is
/// reached, which is reported, not fatal). The long-time map stands in for
/// the limit projection.
pub fn empirical_limit(
    gen: &Superoperator,
    probes: &[DensityMatrix],
    horizon: f64,
    stall_tol: f64,
) -> Result<FixedPointResult> {
    if horizon <= 0.0 || stall_tol <= 0.0 {
        return Err(Error::InvalidParameter(
            "horizon and stall tolerance must be positive".into(),
        ));
    }
    let dt = (horizon / 64.0).min(1.0).max(1e-3);
    let use_dense = gen.dim() <= crate::gksl::DENSE_DIM_CAP;
    let step = if use_dense {
        Some(propagator(gen, dt)?)
    } else {
        None
    };

    let mut states: Vec<CMat> = probes.iter().map(|p| p.mat().clone()).collect();
    let mut stalled = vec![false; probes.len()];
    let mut t = 0.0;
    while t < horizon && stalled.iter().any(|s| !s) {
        for (i, s) in states.iter_mut().enumerate() {
            if stalled[i] {
                continue;
            }
            let next = match &step {
                Some(p) => linalg::hermitian_part(&p.apply(s)),
                None => {
                    let opts = IntegrateOpts::default();
                    integrate_mat(gen, s, dt, &opts)?.final_state
                }
            };
            let diff = trace_distance(&next, s)?;
            *s = next;
            if diff < stall_tol {
                stalled[i] = true;
            }
        }
        t += dt;
    }

    let residuals = states
        .iter()
        .map(|s| fock::trace_norm_mat(&gen.apply(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedPointResult {
        limits: states,
        residuals,
        stalled,
        horizon_used: t,
        stall_tol,
    })
}

fn trace_distance(a: &CMat, b: &CMat) -> Result<f64> {
    fock::trace_norm_mat(&(a - b))
}

/// Max over probes of `‖(e^{tA} - e^{tB})(ρ)‖₁`: an empirical lower bound on
/// the 1→1 distance of the two semigroups.
pub fn norm_1to1_lower(
    gen_a: &Superoperator,
    gen_b: &Superoperator,
    t: f64,
    probes: &[DensityMatrix],
) -> Result<f64> {
    if gen_a.space() != gen_b.space() {
        return Err(Error::DimMismatch("generator spaces differ".into()));
    }
    let pa = propagator(gen_a, t)?;
    let pb = propagator(gen_b, t)?;
    let mut worst = 0.0f64;
    for p in probes {
        let da = pa.apply(p.mat());
        let db = pb.apply(p.mat());
        worst = worst.max(trace_distance(&da, &db)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{DensityMatrix, FockCutoff, PolySpec};
    use num_complex::Complex64 as C64;
    use crate::gksl::{dissipator, shifted_photon_dissipator, Superoperator};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_photon(cutoff: usize) -> (Superoperator, ModeSpace) {
        let cutoff = FockCutoff::new(cutoff).unwrap();
        let space = ModeSpace::single(cutoff);
        let l = crate::fock::build_poly(&PolySpec::lowering_power(0, 2), space).unwrap();
        (dissipator(&l), space)
    }

    #[test]
    fn zero_generator_keeps_state() {
        let space = ModeSpace::single(FockCutoff::new(6).unwrap());
        let gen = Superoperator::zero(space);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let rho = crate::fock::random_density(space, 3, &mut rng);
        let opts = IntegrateOpts {
            checkpoints: vec![0.5, 2.0],
            ..Default::default()
        };
        let traj = integrate(&gen, &rho, 2.0, &opts).unwrap();
        for (_, state) in &traj.checkpoints {
            assert!(linalg::max_abs(&(state - rho.mat())) < 1e-12);
        }
    }

    #[test]
    fn two_photon_decay_matches_two_level_solution() {
        // From |2⟩⟨2| the populations close on {|2⟩, |0⟩}: ρ22(t) = e^{-2t}.
        let (gen, space) = two_photon(5);
        let rho0 = DensityMatrix::number_state(space, &[2]).unwrap();
        let opts = IntegrateOpts {
            checkpoints: vec![0.3, 1.0],
            ..Default::default()
        };
        let traj = integrate(&gen, &rho0, 1.0, &opts).unwrap();
        for (t, state) in &traj.checkpoints {
            let want = (-2.0 * t).exp();
            assert!((state[(2, 2)].re - want).abs() < 1e-8, "t={t}");
            assert!((state[(0, 0)].re - (1.0 - want)).abs() < 1e-8);
        }
        assert!(traj.max_trace_error() < 1e-8);
        assert!(traj.min_eig() > -1e-8);
    }

    #[test]
    fn semigroup_property_under_restart() {
        let (gen, space) = two_photon(8);
        let rho0 = DensityMatrix::number_state(space, &[3]).unwrap();
        let opts = IntegrateOpts::default();
        let t = 0.4;
        let once = integrate(&gen, &rho0, t, &opts).unwrap();
        let twice = integrate_mat(&gen, &once.final_state, t, &opts).unwrap();
        let direct = integrate(&gen, &rho0, 2.0 * t, &opts).unwrap();
        let d = trace_distance(&twice.final_state, &direct.final_state).unwrap();
        assert!(d < 1e-7, "semigroup violation {d:.3e}");
    }

    #[test]
    fn integrate_rejects_bad_horizon() {
        let (gen, space) = two_photon(4);
        let rho0 = DensityMatrix::number_state(space, &[0]).unwrap();
        assert!(integrate(&gen, &rho0, 0.0, &IntegrateOpts::default()).is_err());
    }

    #[test]
    fn moment_derivative_matches_generator_action() {
        let (gen, space) = two_photon(16);
        let rho0 = crate::fock::coherent_state(c(1.0, 0.0), space.cutoff).unwrap();
        let dt = 1e-4;
        let grid: Vec<f64> = (1..=40).map(|i| 0.05 * i as f64).collect();
        let mut cps = Vec::new();
        for &t in &grid {
            cps.push(t - dt);
            cps.push(t);
            cps.push(t + dt);
        }
        let opts = IntegrateOpts {
            checkpoints: cps,
            ..Default::default()
        };
        let traj = integrate(&gen, &rho0, 3.0, &opts).unwrap();
        for k in [1.0, 2.0] {
            for &t in &grid {
                let m = |tt: f64| {
                    crate::fock::moment_mat(traj.state_at(tt).unwrap(), space, k)
                };
                let fd = (m(t + dt) - m(t - dt)) / (2.0 * dt);
                let lhs = crate::fock::moment_mat(&gen.apply(traj.state_at(t).unwrap()), space, k);
                assert!(
                    (fd - lhs).abs() <= 1e-4 * lhs.abs().max(1.0),
                    "k={k} t={t}: fd {fd} vs {lhs}"
                );
            }
        }
    }

    #[test]
    fn propagator_identity_and_analytic_decay() {
        let (gen, space) = two_photon(5);
        let p0 = propagator(&gen, 0.0).unwrap();
        let rho = DensityMatrix::number_state(space, &[2]).unwrap();
        assert!(linalg::max_abs(&(&p0.apply(rho.mat()) - rho.mat())) < 1e-12);

        let p1 = propagator(&gen, 1.0).unwrap();
        let out = p1.apply(rho.mat());
        assert!((out[(2, 2)].re - (-2.0f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn propagator_composition() {
        let (gen, _) = two_photon(6);
        let p_t = propagator(&gen, 0.7).unwrap();
        let p_s = propagator(&gen, 0.4).unwrap();
        let p_ts = propagator(&gen, 1.1).unwrap();
        let diff = &p_t.compose(&p_s).unwrap().mat - &p_ts.mat;
        assert!(linalg::max_abs(&diff) < 1e-9);
    }

    #[test]
    fn propagator_cross_checks_against_integration() {
        let (gen, space) = two_photon(12);
        let rho0 = crate::fock::coherent_state(c(1.0, 0.0), space.cutoff).unwrap();
        let t = 0.8;
        let p = propagator(&gen, t).unwrap();
        let bye = p.apply(rho0.mat());
        let traj = integrate(&gen, &rho0, t, &IntegrateOpts::default()).unwrap();
        let d = trace_distance(&bye, &traj.final_state).unwrap();
        assert!(d < 1e-7, "propagator vs integrate: {d:.3e}");
    }

    #[test]
    fn empirical_limit_of_two_photon_loss() {
        let (gen, space) = two_photon(6);
        let probe = DensityMatrix::number_state(space, &[2]).unwrap();
        let res = empirical_limit(&gen, &[probe], 40.0, 1e-9).unwrap();
        assert!(res.stalled[0]);
        let vac = DensityMatrix::number_state(space, &[0]).unwrap();
        let d = trace_distance(&res.limits[0], vac.mat()).unwrap();
        assert!(d < 1e-6, "limit distance {d:.3e}");
        assert!(res.residuals[0] < 1e-6);
    }

    #[test]
    fn empirical_limit_of_zero_generator_is_immediate() {
        let space = ModeSpace::single(FockCutoff::new(5).unwrap());
        let gen = Superoperator::zero(space);
        let probe = DensityMatrix::number_state(space, &[3]).unwrap();
        let res = empirical_limit(&gen, &[probe.clone()], 5.0, 1e-9).unwrap();
        assert!(res.stalled[0]);
        assert!(trace_distance(&res.limits[0], probe.mat()).unwrap() < 1e-12);
    }

    #[test]
    fn codespace_probe_is_unchanged_by_shifted_dissipation() {
        let cutoff = FockCutoff::new(30).unwrap();
        let alpha = c(1.0, 0.0);
        let gen = shifted_photon_dissipator(2, alpha, cutoff).unwrap();
        let probe = crate::fock::coherent_state(alpha, cutoff).unwrap();
        let res = empirical_limit(&gen, &[probe.clone()], 10.0, 1e-9).unwrap();
        let d = trace_distance(&res.limits[0], probe.mat()).unwrap();
        assert!(d < 1e-6, "codespace drift {d:.3e}");
    }

    #[test]
    fn norm_lower_bound_of_identical_generators_vanishes() {
        let (gen, space) = two_photon(8);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let probes: Vec<DensityMatrix> = (0..5)
            .map(|_| crate::fock::random_density(space, 4, &mut rng))
            .collect();
        let v = norm_1to1_lower(&gen, &gen, 0.5, &probes).unwrap();
        assert!(v < 1e-12);
    }

    #[test]
    fn norm_lower_single_probe_equals_direct_difference() {
        let (gen_a, space) = two_photon(8);
        let (_, _, n) = crate::fock::ladder_ops(space.cutoff);
        let gen_b = Superoperator::new(space, Some(&n), vec![]).unwrap();
        let gen_b = gen_a.add(&gen_b).unwrap();
        let probe = DensityMatrix::number_state(space, &[2]).unwrap();
        let t = 0.5;
        let v = norm_1to1_lower(&gen_a, &gen_b, t, std::slice::from_ref(&probe)).unwrap();
        let da = propagator(&gen_a, t).unwrap().apply(probe.mat());
        let db = propagator(&gen_b, t).unwrap().apply(probe.mat());
        let direct = trace_distance(&da, &db).unwrap();
        assert!((v - direct).abs() < 1e-12);
    }

    #[test]
    fn pure_birth_process_breaches_leakage_guard() {
        // jump (a†)²: population climbs the ladder and hits the truncation
        // boundary; the run must abort rather than report silently wrong data.
        let space = ModeSpace::single(FockCutoff::new(10).unwrap());
        let spec = PolySpec::monomial(
            c(1.0, 0.0),
            vec![
                crate::fock::Letter { mode: 0, kind: crate::fock::LadderKind::Raise },
                crate::fock::Letter { mode: 0, kind: crate::fock::LadderKind::Raise },
            ],
        );
        let l = crate::fock::build_poly(&spec, space).unwrap();
        let gen = dissipator(&l);
        // start on the odd ladder so the pumped chain 1 → 3 → … reaches the
        // top band of the cutoff-10 space
        let rho0 = DensityMatrix::number_state(space, &[1]).unwrap();
        let err = integrate(&gen, &rho0, 5.0, &IntegrateOpts::default()).unwrap_err();
        match err {
            Error::Integration(msg) => assert!(msg.contains("leakage")),
            other => panic!("expected leakage abort, got {other}"),
        }
    }
}

//! The acceptance suite: every top-level correctness criterion as a callable
//! check, shared between `cargo test` and the `selftest` CLI subcommand.
//! Each criterion reports one pass/fail line with its headline numbers.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::certificates::{
    self, coherent_moment_bound, coherent_moment_exact, ell_photon_certificate, g_ell,
    g_ell_lower, g_ell_upper, gronwall_curve, intermediate_bound, mu_ell, multimode_constants,
    polymax_bound, product_bounds, regularization_bound, MultimodeMode, PerturbationInputs,
    StabilityCertificate,
};
use crate::error::Result;
use crate::evolve::{integrate, propagator, IntegrateOpts};
use crate::fock::{
    self, coherent_state, random_density, random_pure_ket, DensityMatrix, FockCutoff, ModeSpace,
    PolySpec,
};
use crate::gksl::{
    assemble_multi_mode, dissipator, shifted_photon_dissipator, HamiltonianSpec2Local,
    TwoLocalTerm,
};
use crate::lattice::{normalization, LatticeGeometry, WeightProfile};
use crate::linalg::{self, CMat};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Outcome of a single acceptance criterion.
#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:2} {:<28} {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn run_criterion(
    id: u32,
    name: &'static str,
    f: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionReport {
    let start = std::time::Instant::now();
    let (pass, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionReport {
        id,
        name,
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Adaptive embedded Runge-Kutta on a scalar ODE `y' = f(t, y)`, returning
/// the accepted `(t, y)` samples. Serves as the independent comparison oracle
/// for the closed-form curves.
pub fn integrate_scalar_ode<F: Fn(f64, f64) -> f64>(f: F, y0: f64, t_end: f64) -> Vec<(f64, f64)> {
    // Dormand-Prince 5(4) weights, scalar case
    let rtol = 1e-10;
    let atol = 1e-12;
    let mut t = 0.0;
    let mut y = y0;
    let mut out = vec![(t, y)];
    let mut h: f64 = 1e-4;
    let mut k1 = f(t, y);
    while t < t_end {
        h = h.min(t_end - t);
        let k2 = f(t + h / 5.0, y + h / 5.0 * k1);
        let k3 = f(t + 3.0 * h / 10.0, y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
        let k4 = f(
            t + 4.0 * h / 5.0,
            y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3),
        );
        let k5 = f(
            t + 8.0 * h / 9.0,
            y + h
                * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3
                    - 212.0 / 729.0 * k4),
        );
        let k6 = f(
            t + h,
            y + h
                * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3
                    + 49.0 / 176.0 * k4
                    - 5103.0 / 18656.0 * k5),
        );
        let ynew = y
            + h * (35.0 / 384.0 * k1
                + 500.0 / 1113.0 * k3
                + 125.0 / 192.0 * k4
                - 2187.0 / 6784.0 * k5
                + 11.0 / 84.0 * k6);
        let k7 = f(t + h, ynew);
        let err_abs = h
            * (71.0 / 57600.0 * k1 - 71.0 / 16695.0 * k3 + 71.0 / 1920.0 * k4
                - 17253.0 / 339200.0 * k5
                + 22.0 / 525.0 * k6
                - 1.0 / 40.0 * k7);
        let sc = atol + rtol * y.abs().max(ynew.abs());
        let err = (err_abs / sc).abs();
        if err <= 1.0 {
            t += h;
            y = ynew;
            k1 = k7;
            out.push((t, y));
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            if h < 1e-14 {
                break;
            }
        }
    }
    out
}

fn two_photon_generator(cutoff: FockCutoff) -> Result<crate::gksl::Superoperator> {
    let space = ModeSpace::single(cutoff);
    let l = fock::build_poly(&PolySpec::lowering_power(0, 2), space)?;
    Ok(dissipator(&l))
}

/// Criterion 1: trace preservation and positivity of 2-photon dissipation
/// from a coherent state at cutoff 60 over t ∈ [0, 5].
pub fn criterion_cptp(_seed: u64) -> CriterionReport {
    run_criterion(1, "cptp-sanity", || {
        let cutoff = FockCutoff::new(60)?;
        let gen = two_photon_generator(cutoff)?;
        let rho0 = coherent_state(C64::new(2.0, 0.0), cutoff)?;
        let traj = integrate(&gen, &rho0, 5.0, &IntegrateOpts::default())?;
        let trace_err = traj.max_trace_error();
        let min_eig = traj.min_eig();
        let pass = trace_err <= 1e-8 && min_eig >= -1e-8;
        Ok((
            pass,
            format!(
                "max |tr-1| = {trace_err:.2e}, min eig = {min_eig:.2e}, steps = {}",
                traj.accepted
            ),
        ))
    })
}

/// Criterion 2: the closed-form comparison curve dominates the ODE oracle on
/// a 75-cell (a, b, p) grid with three starts each.
pub fn criterion_gronwall(_seed: u64) -> CriterionReport {
    run_criterion(2, "gronwall-dominance", || {
        let a_grid = [0.1, 0.5, 1.0, 2.0, 5.0];
        let b_grid = [0.1, 0.5, 1.0, 2.0, 5.0];
        let p_grid = [1.5, 2.0, 3.0];
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut cells = 0;
        for &a in &a_grid {
            for &b in &b_grid {
                for &p in &p_grid {
                    cells += 1;
                    let eq = (b / a as f64).powf(1.0 / p);
                    for y0 in [0.0, eq, 10.0 * eq] {
                        let z = gronwall_curve(a, b, p, y0)?;
                        let path =
                            integrate_scalar_ode(|_, y| -a * y.max(0.0).powf(p) + b, y0, 10.0);
                        for &(t, y) in &path {
                            worst = worst.max(y - z.eval(t));
                        }
                    }
                }
            }
        }
        Ok((
            worst <= 1e-9,
            format!("{cells} cells x 3 starts, worst y - z = {worst:.2e}"),
        ))
    })
}

/// Criterion 3: Jensen moment inequalities, single- and multi-mode, on 1000
/// random states each.
pub fn criterion_jensen(seed: u64) -> CriterionReport {
    run_criterion(3, "jensen-moments", || {
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 3);
        let mut worst: f64 = f64::NEG_INFINITY;

        let space = ModeSpace::single(FockCutoff::new(16)?);
        let grid = [0.5, 1.0, 2.0, 3.0];
        for _ in 0..1000 {
            let rho = random_density(space, 8, &mut rng);
            for &p in &grid {
                for &q in &grid {
                    if p < q {
                        continue;
                    }
                    let slack = fock::moment(&rho, q).powf(p / q) - fock::moment(&rho, p);
                    worst = worst.max(slack);
                }
            }
        }

        let lat = LatticeGeometry::chain(2)?;
        let profile = WeightProfile::new(&lat, 0, 1.5)?;
        let mspace = ModeSpace::new(2, FockCutoff::new(6)?)?;
        let mgrid = [1.0, 2.0, 3.0];
        for _ in 0..1000 {
            let rho = random_density(mspace, 3, &mut rng);
            for &p in &mgrid {
                for &q in &mgrid {
                    if p < q {
                        continue;
                    }
                    let lhs = crate::lattice::weighted_moment(&profile, &rho, p)?;
                    let rhs = crate::lattice::weighted_moment(&profile, &rho, q)?.powf(p / q);
                    worst = worst.max(rhs - lhs);
                }
            }
        }
        Ok((
            worst <= 1e-10,
            format!("worst violation = {worst:.2e} over 2000 states"),
        ))
    })
}

/// Criterion 4: instantaneous regularization of 2-photon dissipation with
/// the closed-form constants μ = 1, c_k = 6^{k+1}, δ = 1.
pub fn criterion_regularization(_seed: u64) -> CriterionReport {
    run_criterion(4, "sobolev-regularization", || {
        let cutoff = FockCutoff::new(60)?;
        let t_grid: Vec<f64> = vec![
            0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0,
        ];
        let initial: Vec<DensityMatrix> = vec![
            coherent_state(C64::new(1.0, 0.0), cutoff)?,
            coherent_state(C64::new(2.0, 0.0), cutoff)?,
            DensityMatrix::number_state(ModeSpace::single(cutoff), &[5])?,
        ];
        let results: Vec<Result<f64>> = initial
            .par_iter()
            .map(|rho0| {
                let gen = two_photon_generator(cutoff)?;
                let opts = IntegrateOpts {
                    checkpoints: t_grid.clone(),
                    ..Default::default()
                };
                let traj = integrate(&gen, rho0, 5.0, &opts)?;
                let space = gen.space();
                let mut worst: f64 = f64::NEG_INFINITY;
                for k in [1.0, 2.0, 3.0] {
                    let cert = StabilityCertificate::new(k, 1.0, 1.0, 6f64.powf(k + 1.0))?;
                    for (t, state) in &traj.checkpoints {
                        let m = fock::moment_mat(state, space, k);
                        let bound = regularization_bound(&cert, *t)?;
                        worst = worst.max(m - bound);
                    }
                }
                Ok(worst)
            })
            .collect();
        let mut worst: f64 = f64::NEG_INFINITY;
        for r in results {
            worst = worst.max(r?);
        }
        Ok((
            worst <= 0.0,
            format!("worst moment - bound = {worst:.2e} (3 states, k in 1..3, 12 times)"),
        ))
    })
}

/// Criterion 5: the ℓ-photon moment inequality with the closed-form constant
/// μ_k^{(ℓ)} on 200 random finite-rank states per parameter cell.
pub fn criterion_ell_diss(seed: u64) -> CriterionReport {
    run_criterion(5, "ell-photon-inequality", || {
        let cutoff = FockCutoff::new(24)?;
        let space = ModeSpace::single(cutoff);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 5);
        let mut worst: f64 = f64::NEG_INFINITY;
        for ell in [2usize, 3] {
            for k in [1.0, 2.0] {
                for alpha in [C64::new(0.0, 0.0), C64::new(1.0, 0.0)] {
                    let gen = shifted_photon_dissipator(ell, alpha, cutoff)?;
                    let mu = mu_ell(ell, k, alpha, None)?.mu;
                    let half = ell as f64 / 2.0;
                    for _ in 0..200 {
                        let rho = random_density(space, 12, &mut rng);
                        let lhs = fock::moment_mat(&gen.apply(rho.mat()), space, k)
                            + half * fock::moment_mat(rho.mat(), space, k + ell as f64 - 1.0);
                        worst = worst.max(lhs - half * mu);
                    }
                }
            }
        }
        Ok((
            worst <= 1e-6,
            format!("worst lhs - (ℓ/2)μ = {worst:.2e} over 8 cells x 200 states"),
        ))
    })
}

/// Criterion 6: trace-norm convergence of the shifted 2-photon dissipation
/// to the codespace stays under the closed-form bound, and the fitted tail
/// rate reaches 95% of ℓ!/4.
pub fn criterion_cat_convergence(_seed: u64) -> CriterionReport {
    run_criterion(6, "cat-convergence", || {
        let ell = 2usize;
        let cutoff = FockCutoff::new(40)?;
        let t_grid: Vec<f64> = (2..=16).map(|i| 0.25 * i as f64).collect();
        let mut worst_slack: f64 = f64::INFINITY;
        let mut worst_rate: f64 = f64::INFINITY;
        let space = ModeSpace::single(cutoff);
        for alpha in [C64::new(1.0, 0.0), C64::new(1.5, 0.0)] {
            let probes = vec![
                DensityMatrix::number_state(space, &[3])?,
                coherent_state(alpha / 2.0, cutoff)?,
            ];
            let report = crate::catcode::convergence_experiment(
                ell,
                alpha,
                cutoff,
                &probes,
                &t_grid,
                &crate::catcode::ConvergenceOpts::default(),
            )?;
            for row in &report.rows {
                worst_slack = worst_slack.min(row.slack);
            }
            for fit in &report.fits {
                worst_rate = worst_rate.min(fit.rate);
            }
        }
        let rate_floor = 0.95 * 2.0 / 4.0; // 0.95 · ℓ!/4 for ℓ = 2
        let pass = worst_slack >= 0.0 && worst_rate >= rate_floor;
        Ok((
            pass,
            format!(
                "min slack = {worst_slack:.3e}, min fitted rate = {worst_rate:.3} (floor {rate_floor:.3})"
            ),
        ))
    })
}

/// Criterion 7: the intermediate-time perturbation bound dominates the
/// empirical 1→1 distance of 3-photon loss vs its coherently driven version.
pub fn criterion_intermediate_perturbation(seed: u64) -> CriterionReport {
    run_criterion(7, "intermediate-perturbation", || {
        let ell = 3usize;
        let cutoff = FockCutoff::new(30)?;
        let space = ModeSpace::single(cutoff);
        let gen0 = shifted_photon_dissipator(ell, C64::new(0.0, 0.0), cutoff)?;
        let drive = crate::gksl::HamiltonianSpec1M {
            degree: 1,
            terms: vec![crate::gksl::OneModeTerm {
                i: 0,
                j: 1,
                lambda: C64::new(1.0, 0.0),
            }],
        };
        let h = drive.build(cutoff)?;
        let c1 = certificates::commutator_relative_bound(&[(0, 1, 1.0)]);

        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 7);
        let probes: Vec<CMat> = (0..50)
            .map(|_| {
                let ket = random_pure_ket(space, 15, &mut rng);
                CMat::from_shape_fn((space.dim(), space.dim()), |(i, j)| {
                    ket[i] * ket[j].conj()
                })
            })
            .collect();

        let base_step = 0.1;
        let steps = 20usize; // t from 0.1 to 2.0
        let p0 = propagator(&gen0, base_step)?;
        let mut worst: f64 = f64::NEG_INFINITY;
        let mut detail_bound = 0.0;
        for eps in [0.01, 0.1] {
            let pert =
                crate::gksl::Superoperator::new(space, Some(&h.scale(C64::new(eps, 0.0))), vec![])?;
            let gen_eps = gen0.add(&pert)?;
            let p_eps = propagator(&gen_eps, base_step)?;
            let cert = ell_photon_certificate(ell, 1.0, C64::new(0.0, 0.0), Some(eps))?;
            let inputs = PerturbationInputs {
                c1,
                c2: 0.0,
                eps,
                c_tilde: 0.0,
                gamma: 0.0,
                k_tilde: 0.0,
            };
            let mut a_states = probes.clone();
            let mut b_states = probes.clone();
            for s in 1..=steps {
                let t = base_step * s as f64;
                let mut empirical = 0.0f64;
                for (sa, sb) in a_states.iter_mut().zip(b_states.iter_mut()) {
                    *sa = linalg::hermitian_part(&p0.apply(sa));
                    *sb = linalg::hermitian_part(&p_eps.apply(sb));
                    empirical = empirical.max(fock::trace_norm_mat(&(&*sa - &*sb))?);
                }
                let bound = intermediate_bound(&inputs, &cert, t)?;
                detail_bound = bound;
                worst = worst.max(empirical - bound);
            }
        }
        Ok((
            worst <= 0.0,
            format!(
                "worst empirical - bound = {worst:.2e} (50 probes, bound at t=2, ε=0.1: {detail_bound:.2})"
            ),
        ))
    })
}

/// Criterion 8: multi-mode weighted stability on a 2-site chain with hopping
/// under 3-photon dissipation, degree-restricted branch.
pub fn criterion_multimode(seed: u64) -> CriterionReport {
    run_criterion(8, "multimode-stability", || {
        let ell = 3usize;
        let k = 2.0;
        let kappa = 2.0;
        let lambda = 0.5;
        let cutoff = FockCutoff::new(12)?;
        let lat = LatticeGeometry::chain(2)?;
        let ham = HamiltonianSpec2Local {
            degree: 2,
            terms: vec![TwoLocalTerm {
                i: 0,
                j: 1,
                u: [1, 0, 0, 1],
                lambda: C64::new(lambda, 0.0),
            }],
        };
        let gen = assemble_multi_mode(
            &lat,
            ell,
            &[C64::new(0.0, 0.0); 2],
            Some(&ham),
            1.0,
            cutoff,
            crate::gksl::DEFAULT_DIM_BUDGET,
        )?;
        let space = gen.full.space();
        let consts = multimode_constants(
            lat.dimension(),
            ell,
            k,
            lambda,
            kappa,
            0.0,
            0.0,
            MultimodeMode::DegreeRestricted,
        )?;
        let mu = consts.mu.value();
        let neg = ell as f64 / 4.0;

        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 8);
        let mut worst: f64 = f64::NEG_INFINITY;
        for v in 0..2 {
            let profile = WeightProfile::new(&lat, v, kappa)?;
            for _ in 0..100 {
                let rho = random_density(space, 6, &mut rng);
                let action = gen.full.apply(rho.mat());
                let lhs = crate::lattice::weighted_moment_mat(&profile, &action, space, k)?;
                let decay = crate::lattice::weighted_moment_mat(
                    &profile,
                    rho.mat(),
                    space,
                    k + ell as f64 - 1.0,
                )?;
                let margin = lhs + neg * decay - mu;
                if !lhs.is_finite() || !decay.is_finite() {
                    return Ok((false, "non-finite weighted moment".into()));
                }
                worst = worst.max(margin);
            }
        }
        Ok((
            worst <= 0.0,
            format!("worst lhs + (ℓ/4)tr[W^(ℓ+k-1)] - μ = {worst:.3e} (μ = {})", consts.mu),
        ))
    })
}

/// Criterion 9: normalization sandwich on all tested lattices and the
/// coherent-moment bound against the exact Poisson series.
pub fn criterion_closed_forms(_seed: u64) -> CriterionReport {
    run_criterion(9, "weight-and-coherent-forms", || {
        let mut checks = 0usize;
        for kappa in [1.5, 2.0, 3.0] {
            for m in 1..=5 {
                let lat = LatticeGeometry::chain(m)?;
                for v in 0..m {
                    let n = normalization(&lat, v, kappa)?;
                    if !(n.lower <= n.z + 1e-10 && n.z <= n.upper + 1e-10) {
                        return Ok((false, format!("chain sandwich failed at m={m} v={v}")));
                    }
                    checks += 1;
                }
            }
            for w in 2..=5 {
                for hgt in 2..=5 {
                    let lat = LatticeGeometry::grid(w, hgt)?;
                    for v in 0..lat.len() {
                        let n = normalization(&lat, v, kappa)?;
                        if !(n.lower <= n.z + 1e-10 && n.z <= n.upper + 1e-10) {
                            return Ok((false, format!("grid sandwich failed {w}x{hgt} v={v}")));
                        }
                        checks += 1;
                    }
                }
            }
        }

        let mut worst: f64 = f64::NEG_INFINITY;
        for k in 1..=5 {
            let k = k as f64;
            let mut alpha = 0.0f64;
            while alpha <= 3.0 + 1e-9 {
                let exact = coherent_moment_exact(alpha, k);
                let bound = coherent_moment_bound(alpha, k);
                worst = worst.max(exact - bound);
                checks += 1;
                alpha += 0.05;
            }
        }
        Ok((
            worst <= 1e-10,
            format!("{checks} checks, worst exact - bound = {worst:.2e}"),
        ))
    })
}

/// Criterion 10: scalar helper lemmas (difference function sandwich and
/// monotonicity, product bounds, polynomial max bound) on their domains.
pub fn criterion_scalar_lemmas(_seed: u64) -> CriterionReport {
    run_criterion(10, "scalar-lemmas", || {
        let mut checks = 0usize;
        let mut x = 0.0;
        while x <= 100.0 + 1e-9 {
            for ell in 1..=4usize {
                for k in [1.0, 2.0, 3.0] {
                    let g = g_ell(ell, k, x);
                    if g_ell_lower(ell, k, x) > g + 1e-9 || g > g_ell_upper(ell, k, x) + 1e-9 {
                        return Ok((false, format!("difference sandwich failed x={x} ℓ={ell} k={k}")));
                    }
                    if g > g_ell(ell + 1, k, x) + 1e-9 {
                        return Ok((false, format!("monotonicity in ℓ failed x={x} ℓ={ell} k={k}")));
                    }
                    if g_ell(ell, k, x - ell as f64) > g + 1e-9 {
                        return Ok((false, format!("shift monotonicity failed x={x} ℓ={ell} k={k}")));
                    }
                    checks += 3;
                }
            }
            x += 0.25;
        }

        for ell in 1..=4usize {
            let mut x = ell as f64;
            while x <= 60.0 {
                let pb = product_bounds(ell, x)?;
                if !(pb.falling_lower <= pb.falling + 1e-9
                    && pb.falling <= pb.falling_upper + 1e-9
                    && pb.rising_lower <= pb.rising + 1e-9
                    && pb.rising <= pb.rising_upper + 1e-9)
                {
                    return Ok((false, format!("product bounds failed ℓ={ell} x={x}")));
                }
                checks += 1;
                x += 0.5;
            }
        }

        for (alpha, beta, a, b) in [
            (1.0, 1.0, 2.0, 1.0),
            (2.0, 3.0, 3.0, 1.0),
            (0.5, 1.5, 2.5, 2.0),
            (1.0, 10.0, 4.0, 3.0),
            (3.0, 0.2, 5.0, 4.0),
        ] {
            let bound = polymax_bound(alpha, beta, a, b)?;
            let mut max = f64::NEG_INFINITY;
            let mut xx = 0.0f64;
            while xx <= 100.0 {
                max = max.max(-alpha * xx.powf(a) + beta * xx.powf(b));
                xx += 1e-3;
            }
            if max > bound + 1e-9 {
                return Ok((false, format!("polymax failed α={alpha} β={beta} a={a} b={b}")));
            }
            checks += 1;
        }
        Ok((true, format!("{checks} scalar checks, zero failures")))
    })
}

/// Run the full acceptance suite in order.
pub fn run_all(seed: u64) -> Vec<CriterionReport> {
    vec![
        criterion_cptp(seed),
        criterion_gronwall(seed),
        criterion_jensen(seed),
        criterion_regularization(seed),
        criterion_ell_diss(seed),
        criterion_cat_convergence(seed),
        criterion_intermediate_perturbation(seed),
        criterion_multimode(seed),
        criterion_closed_forms(seed),
        criterion_scalar_lemmas(seed),
    ]
}

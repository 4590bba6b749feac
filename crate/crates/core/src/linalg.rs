//! Thin dense linear-algebra layer: Hermitian eigensolves, singular values,
//! Kronecker products, and a scaling-and-squaring matrix exponential.
//!
//! Everything operates on `ndarray` matrices of `Complex64`, with BLAS/LAPACK
//! doing the heavy lifting.

use ndarray::prelude::*;
use ndarray_linalg::{EigValsh, Eigh, Inverse, SVD, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Array2<C64>;
pub type CVec = Array1<C64>;

extern "C" {
    fn openblas_set_num_threads(num: std::os::raw::c_int);
}

/// Pick the BLAS thread count for the problem size at hand: the threading
/// overhead dominates below a few hundred rows and costs a 2-3x slowdown in
/// step loops over small matrices.
pub fn tune_blas_threads(n: usize) {
    let threads = if n < 256 {
        1
    } else {
        std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1)
    };
    unsafe { openblas_set_num_threads(threads as std::os::raw::c_int) }
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.t().mapv(|z| z.conj())
}

/// Hermitian part `(a + a†)/2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    let ad = dagger(a);
    (a + &ad).mapv(|z| 0.5 * z)
}

/// Largest entry magnitude.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Deviation from Hermiticity, `max |a - a†| / 2`.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let ad = dagger(a);
    (a - &ad).iter().map(|z| 0.5 * z.norm()).fold(0.0, f64::max)
}

/// Induced 1-norm (maximum absolute column sum).
pub fn one_norm(a: &CMat) -> f64 {
    let mut best = 0.0f64;
    for col in a.columns() {
        let s: f64 = col.iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMat::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb]);
            block.assign(&b.mapv(|z| aij * z));
        }
    }
    out
}

/// Eigenvalues and eigenvectors of a Hermitian matrix (ascending order).
pub fn eigh_hermitian(a: &CMat) -> Result<(Array1<f64>, CMat)> {
    let (w, v) = a.eigh(UPLO::Lower)?;
    Ok((w, v))
}

/// Eigenvalues only of a Hermitian matrix (ascending order).
pub fn eigvalsh_hermitian(a: &CMat) -> Result<Array1<f64>> {
    Ok(a.eigvalsh(UPLO::Lower)?)
}

/// Singular values (descending order).
pub fn singular_values(a: &CMat) -> Result<Array1<f64>> {
    let (_, s, _) = a.svd(false, false)?;
    Ok(s)
}

// Padé order-13 coefficients and the theta thresholds from the standard
// scaling-and-squaring scheme (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

fn ident(n: usize) -> CMat {
    CMat::eye(n)
}

fn pade_low(a: &CMat, a2: &CMat, coeffs: &[f64]) -> (CMat, CMat) {
    // coeffs = [b0, b1, ..., bm] for m in {3, 5, 7, 9}; powers of a2 suffice.
    let n = a.nrows();
    let m = coeffs.len() - 1;
    let mut even = vec![ident(n), a2.clone()];
    while even.len() <= m / 2 {
        let next = even.last().unwrap().dot(a2);
        even.push(next);
    }
    let mut u_inner = CMat::zeros((n, n));
    let mut v = CMat::zeros((n, n));
    for (j, p) in even.iter().enumerate() {
        u_inner = u_inner + p.mapv(|z| coeffs[2 * j + 1] * z);
        v = v + p.mapv(|z| coeffs[2 * j] * z);
    }
    (a.dot(&u_inner), v)
}

fn pade13(a: &CMat, a2: &CMat, a4: &CMat, a6: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    let b = &PADE13;
    let w1 = a6.mapv(|z| b[13] * z) + a4.mapv(|z| b[11] * z) + a2.mapv(|z| b[9] * z);
    let w2 = a6.mapv(|z| b[7] * z)
        + a4.mapv(|z| b[5] * z)
        + a2.mapv(|z| b[3] * z)
        + ident(n).mapv(|z| b[1] * z);
    let u = a.dot(&(a6.dot(&w1) + w2));
    let z1 = a6.mapv(|z| b[12] * z) + a4.mapv(|z| b[10] * z) + a2.mapv(|z| b[8] * z);
    let z2 = a6.mapv(|z| b[6] * z)
        + a4.mapv(|z| b[4] * z)
        + a2.mapv(|z| b[2] * z)
        + ident(n).mapv(|z| b[0] * z);
    let v = a6.dot(&z1) + z2;
    (u, v)
}

/// Matrix exponential by Padé approximation with scaling and squaring.
///
/// The LU solve runs on a dedicated worker thread with a large stack: the
/// LAPACK build keeps factorization work arrays on the stack, which bursts
/// the 2 MiB default of test and rayon threads already around n = 300.
pub fn expm(a: &CMat) -> Result<CMat> {
    let owned = a.clone();
    std::thread::Builder::new()
        .name("expm-worker".into())
        .stack_size(64 * 1024 * 1024)
        .spawn(move || expm_inner(&owned))
        .map_err(|e| Error::Backend(format!("worker spawn failed: {e}")))?
        .join()
        .map_err(|_| Error::Backend("matrix exponential worker panicked".into()))?
}

fn expm_inner(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    tune_blas_threads(n);
    if n != a.ncols() {
        return Err(Error::DimMismatch(format!(
            "expm needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Backend("expm input has non-finite entries".into()));
    }

    let a2 = a.dot(a);
    let (u, v, squarings) = if norm <= THETA9 {
        let coeffs: &[f64] = if norm <= THETA3 {
            &[120.0, 60.0, 12.0, 1.0]
        } else if norm <= THETA5 {
            &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0]
        } else if norm <= THETA7 {
            &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0]
        } else {
            &[
                17643225600.0,
                8821612800.0,
                2075673600.0,
                302702400.0,
                30270240.0,
                2162160.0,
                110880.0,
                3960.0,
                90.0,
                1.0,
            ]
        };
        let (u, v) = pade_low(a, &a2, coeffs);
        (u, v, 0u32)
    } else {
        let squarings = ((norm / THETA13).log2().ceil()).max(0.0) as u32;
        let scale = C64::new(0.5f64.powi(squarings as i32), 0.0);
        let a_s = a.mapv(|z| z * scale);
        let a2s = a2.mapv(|z| z * scale * scale);
        let a4 = a2s.dot(&a2s);
        let a6 = a2s.dot(&a4);
        let (u, v) = pade13(&a_s, &a2s, &a4, &a6);
        (u, v, squarings)
    };

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.inv()?.dot(&p);
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

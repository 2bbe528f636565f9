//! Dense linear-algebra helpers on `ndarray` matrices.
//!
//! Matrix exponentials use scaling-and-squaring with the degree-13 Padé
//! approximant (Higham 2005). Everything else is thin glue over BLAS/LAPACK.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{Eigh, Inverse, Lapack, OperationNorm, Scalar, UPLO};
use num_complex::Complex64;

use crate::error::Result;

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

/// exp(A) by scaling-and-squaring.
pub fn expm<A>(a: &Array2<A>) -> Result<Array2<A>>
where
    A: Scalar<Real = f64> + Lapack + ndarray::ScalarOperand,
{
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Ok(Array2::zeros((0, 0)));
    }

    let norm = a.opnorm_one()?;
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scale = A::from_real(0.5f64.powi(squarings));
    let a = a.mapv(|v| v * scale);

    let ident = Array2::<A>::eye(n);
    let c = |k: usize| A::from_real(PADE13[k]);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);

    let inner_u = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let u_poly = a6.dot(&inner_u) + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &ident * c(1);
    let u = a.dot(&u_poly);
    let inner_v = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = a6.dot(&inner_v) + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &ident * c(0);

    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom.inv()?.dot(&numer);
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

pub fn dagger(a: &Array2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

pub fn commutator(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    a.dot(b) - b.dot(a)
}

/// Kronecker product with the left factor varying slowest.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
                .assign(&b.mapv(|v| v * aij));
        }
    }
    out
}

pub fn trace(a: &Array2<C64>) -> C64 {
    a.diag().sum()
}

/// Largest |a_ij - b_ij| over the leading `rows` x `cols` block.
pub fn max_abs_diff(a: ArrayView2<C64>, b: ArrayView2<C64>, rows: usize, cols: usize) -> f64 {
    let rows = rows.min(a.nrows()).min(b.nrows());
    let cols = cols.min(a.ncols()).min(b.ncols());
    let mut worst = 0.0f64;
    for i in 0..rows {
        for j in 0..cols {
            worst = worst.max((a[[i, j]] - b[[i, j]]).norm());
        }
    }
    worst
}

/// Largest |a_ij - delta_ij| over the leading `block` x `block` corner.
pub fn identity_defect(a: ArrayView2<C64>, block: usize) -> f64 {
    let block = block.min(a.nrows()).min(a.ncols());
    let mut worst = 0.0f64;
    for i in 0..block {
        for j in 0..block {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a[[i, j]] - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Hermitian eigendecomposition. The input is copied to column-major layout
/// first: for row-major complex input the LAPACK call otherwise sees the
/// conjugate matrix.
pub fn eigh(a: &Array2<C64>) -> Result<(Array1<f64>, Array2<C64>)> {
    let mut f = Array2::<C64>::zeros(a.dim().f());
    f.assign(a);
    Ok(f.eigh(UPLO::Upper)?)
}

pub fn eigh_real(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    Ok(a.eigh(UPLO::Upper)?)
}

/// Hermitian part (A + A^dag) / 2.
pub fn hermitize(a: &Array2<C64>) -> Array2<C64> {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

pub fn to_complex(a: &Array2<f64>) -> Array2<C64> {
    a.mapv(|v| C64::new(v, 0.0))
}

/// Applies f to the spectrum of a Hermitian matrix given as (eigenvalues, eigenvectors).
pub fn spectral_apply<F>(values: &Array1<f64>, vectors: &Array2<C64>, f: F) -> Array2<C64>
where
    F: Fn(f64) -> C64,
{
    let scaled = {
        let mut v = vectors.clone();
        for (mut col, &lam) in v.axis_iter_mut(Axis(1)).zip(values.iter()) {
            let w = f(lam);
            col.mapv_inplace(|z| z * w);
        }
        v
    };
    scaled.dot(&dagger(vectors))
}

/// 1-norm of the eigenvalues of a Hermitian matrix.
pub fn trace_norm_hermitian(a: &Array2<C64>) -> Result<f64> {
    let (vals, _) = eigh(&hermitize(a))?;
    Ok(vals.iter().map(|v| v.abs()).sum())
}

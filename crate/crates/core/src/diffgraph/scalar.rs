use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Element type of graph tensors: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Default + Debug + Send + Sync + 'static
{
    const NAME: &'static str;

    fn of(v: f64) -> Self;

    fn f64(self) -> f64;

    /// `c ← alpha·a·b + beta·c` for row-major `a: m×k`, `b: k×n`.
    ///
    /// `trans_a`/`trans_b` read the stored operand as its transpose; the
    /// stored matrix then has shape `k×m` (resp. `n×k`).
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        trans_a: bool,
        b: &[Self],
        trans_b: bool,
        beta: Self,
        c: &mut [Self],
    );
}

/// Below this many multiply-adds, or for matrix-vector shapes, packing
/// overhead in the blocked kernel dominates; a plain loop is faster.
const SMALL_GEMM: usize = 1 << 14;

#[allow(clippy::too_many_arguments)]
fn small_gemm<T: Float + NumAssign>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    trans_a: bool,
    b: &[T],
    trans_b: bool,
    beta: T,
    c: &mut [T],
) {
    if n == 0 {
        return;
    }
    let mut col = Vec::new();
    for i in 0..m {
        let a_row: &[T] = if trans_a {
            col.clear();
            col.extend((0..k).map(|p| a[p * m + i]));
            &col
        } else {
            &a[i * k..(i + 1) * k]
        };
        let row = &mut c[i * n..(i + 1) * n];
        if beta == T::zero() {
            row.iter_mut().for_each(|v| *v = T::zero());
        } else if beta != T::one() {
            row.iter_mut().for_each(|v| *v *= beta);
        }
        if k == 0 {
            continue;
        }
        if trans_b {
            for (out, bj) in row.iter_mut().zip(b.chunks_exact(k)) {
                let acc = a_row
                    .iter()
                    .zip(bj)
                    .fold(T::zero(), |s, (&x, &y)| s + x * y);
                *out += alpha * acc;
            }
        } else {
            for (&ap, bp) in a_row.iter().zip(b.chunks_exact(n)) {
                let av = alpha * ap;
                if av == T::zero() {
                    continue;
                }
                for (out, &bv) in row.iter_mut().zip(bp) {
                    *out += av * bv;
                }
            }
        }
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:expr, $gemm:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            #[inline]
            fn of(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                trans_a: bool,
                b: &[Self],
                trans_b: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 1 || n == 1 || m * k * n <= SMALL_GEMM {
                    return small_gemm(m, k, n, alpha, a, trans_a, b, trans_b, beta, c);
                }
                let (rsa, csa) = if trans_a {
                    (1, m as isize)
                } else {
                    (k as isize, 1)
                };
                let (rsb, csb) = if trans_b {
                    (1, k as isize)
                } else {
                    (n as isize, 1)
                };
                // SAFETY: the strides above address exactly the m×k, k×n and m×n
                // row-major blocks whose lengths were checked.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, "f32", matrixmultiply::sgemm);
impl_scalar!(f64, "f64", matrixmultiply::dgemm);

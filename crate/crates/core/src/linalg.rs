//! Small dense solvers.

use alloc::vec::Vec;

use crate::math;

/// `C = alpha * op(A) * op(B) + beta * C` on compact row-major storage,
/// where `op(A)` is `m x k` and `op(B)` is `k x n`. With `ta` set, `A` is
/// stored as `k x m` (likewise `tb`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    ta: bool,
    tb: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    let lda = if ta { m } else { k };
    let ldb = if tb { k } else { n };
    gemm_ld(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, n);
}

/// [`gemm`] on sub-matrices with explicit row strides (leading dimensions).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_ld(
    ta: bool,
    tb: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: &[f64],
    lda: usize,
    b: &[f64],
    ldb: usize,
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let extent = |rows: usize, cols: usize, ld: usize| if rows == 0 || cols == 0 { 0 } else { (rows - 1) * ld + cols };
    let (ar, ac) = if ta { (k, m) } else { (m, k) };
    let (br, bc) = if tb { (n, k) } else { (k, n) };
    assert!(a.len() >= extent(ar, ac, lda) && (ac <= lda || ar <= 1), "gemm: A out of bounds");
    assert!(b.len() >= extent(br, bc, ldb) && (bc <= ldb || br <= 1), "gemm: B out of bounds");
    assert!(c.len() >= extent(m, n, ldc) && n <= ldc, "gemm: C out of bounds");
    let (rsa, csa) = if ta { (1, lda as isize) } else { (lda as isize, 1) };
    let (rsb, csb) = if tb { (1, ldb as isize) } else { (ldb as isize, 1) };
    #[allow(unsafe_code)]
    // SAFETY: the asserts above bound every element dgemm reads or writes
    // inside its slice for these strides, and `c` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
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
            ldc as isize,
            1,
        );
    }
}

/// Gaussian elimination with partial pivoting. `None` if singular.
pub(crate) fn solve_small<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for k in 0..N {
        let mut piv = k;
        for i in k + 1..N {
            if math::abs(a[i][k]) > math::abs(a[piv][k]) {
                piv = i;
            }
        }
        if !(math::abs(a[piv][k]) > 1e-300) {
            return None;
        }
        a.swap(k, piv);
        b.swap(k, piv);
        for i in k + 1..N {
            let f = a[i][k] / a[k][k];
            for j in k..N {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = [0.0; N];
    for k in (0..N).rev() {
        let s: f64 = (k + 1..N).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// In-place Cholesky factorization of a symmetric positive definite
/// row-major `n x n` matrix; the lower triangle receives `L`. Returns
/// `false` if the matrix is not numerically positive definite.
///
/// Left-looking by column blocks so the bulk of the work runs through
/// [`gemm`].
pub(crate) fn cholesky(a: &mut [f64], n: usize) -> bool {
    const NB: usize = 64;
    debug_assert_eq!(a.len(), n * n);
    let mut left = Vec::new();
    let mut top = Vec::new();
    let mut panel = Vec::new();
    for kb in (0..n).step_by(NB) {
        let ke = (kb + NB).min(n);
        let w = ke - kb;
        let rows = n - kb;
        if kb > 0 {
            // A[kb.., kb..ke] -= L[kb.., ..kb] * L[kb..ke, ..kb]^T
            left.clear();
            for i in kb..n {
                left.extend_from_slice(&a[i * n..i * n + kb]);
            }
            top.clear();
            top.extend_from_slice(&left[..w * kb]);
            panel.clear();
            for i in kb..n {
                panel.extend_from_slice(&a[i * n + kb..i * n + ke]);
            }
            gemm(false, true, rows, w, kb, -1.0, &left, &top, 1.0, &mut panel);
            for (r, i) in (kb..n).enumerate() {
                a[i * n + kb..i * n + ke].copy_from_slice(&panel[r * w..(r + 1) * w]);
            }
        }
        // unblocked factorization of the diagonal block
        for j in kb..ke {
            let mut d = a[j * n + j];
            for k in kb..j {
                d -= a[j * n + k] * a[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return false;
            }
            let d = math::sqrt(d);
            a[j * n + j] = d;
            for i in j + 1..ke {
                let mut s = a[i * n + j];
                for k in kb..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        // rows below: solve x L_kk^T = a_i within the block
        for i in ke..n {
            for j in kb..ke {
                let mut s = a[i * n + j];
                for k in kb..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / a[j * n + j];
            }
        }
    }
    true
}

/// Solve `L L^T x = b` given the factor from [`cholesky`].
pub(crate) fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let (m, n, k) = (3, 4, 2);
        let a: Vec<f64> = (0..m * k).map(|i| i as f64 * 0.5 - 1.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64).sin()).collect();
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            // reinterpret storage: op(A)[i][p]
            let ga = |i: usize, p: usize| if ta { a[p * m + i] } else { a[i * k + p] };
            let gb = |p: usize, j: usize| if tb { b[j * k + p] } else { b[p * n + j] };
            let mut c = alloc::vec![1.0; m * n];
            gemm(ta, tb, m, n, k, 2.0, &a, &b, 0.5, &mut c);
            for i in 0..m {
                for j in 0..n {
                    let want = 0.5 + 2.0 * (0..k).map(|p| ga(i, p) * gb(p, j)).sum::<f64>();
                    assert!((c[i * n + j] - want).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn small_solve() {
        let a = [[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let x = [1.0, -2.0, 0.5];
        let b = core::array::from_fn(|i| (0..3).map(|j| a[i][j] * x[j]).sum());
        let got = solve_small(a, b).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-14);
        }
        assert!(solve_small([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0]).is_none());
    }

    #[test]
    fn cholesky_round_trip() {
        // A = B B^T + I
        let n = 4;
        let bm = [1.0, 2.0, 0.0, -1.0, 0.5, 1.0, 3.0, 0.0, 0.0, -2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let mut a = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = (0..n).map(|k| bm[i * n + k] * bm[j * n + k]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        let x = [0.3, -1.0, 2.0, 0.7];
        let b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect();
        let mut l = a.clone();
        assert!(cholesky(&mut l, n));
        let got = cholesky_solve(&l, n, &b);
        for i in 0..n {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
        let mut neg = alloc::vec![1.0, 2.0, 2.0, 1.0];
        assert!(!cholesky(&mut neg, 2));
    }

    #[test]
    fn blocked_cholesky_matches_reconstruction() {
        // size spanning several column blocks
        let n = 150;
        let mut a = alloc::vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = libm::sin((i * 7 + j * 3) as f64) * 0.1 + libm::cos((i * j) as f64) * 0.05;
                a[i * n + j] += v;
                a[j * n + i] += v;
            }
            a[i * n + i] += n as f64;
        }
        let mut l = a.clone();
        assert!(cholesky(&mut l, n));
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..=j).map(|k| l[i * n + k] * l[j * n + k]).sum();
                assert!((v - a[i * n + j]).abs() < 1e-10, "{i} {j}");
            }
        }
    }
}

//! Thin safe wrappers over `matrixmultiply::dgemm` for the row-major layouts
//! the tape needs.

/// Row-major matrix view: `(data, row_stride, col_stride)`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn rm(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: cols, cs: 1 }
    }

    /// Transposed view of a row-major `rows × cols` buffer.
    pub fn t(data: &'a [f64], cols: usize) -> Self {
        Self { data, rs: 1, cs: cols }
    }

    fn max_index(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.rs + (cols - 1) * self.cs
        }
    }
}

/// `c[m×n] (+)= a[m×k] · b[k×n]`, where `c` has row stride `rsc`.
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: View<'_>,
    b: View<'_>,
    c: &mut [f64],
    rsc: usize,
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() > (m - 1) * rsc + (n - 1), "gemm: output too small");
    if k == 0 {
        if !accumulate {
            for i in 0..m {
                c[i * rsc..i * rsc + n].iter_mut().for_each(|v| *v = 0.0);
            }
        }
        return;
    }
    assert!(a.data.len() > a.max_index(m, k), "gemm: lhs too small");
    assert!(b.data.len() > b.max_index(k, n), "gemm: rhs too small");
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: every index touched by dgemm is bounded by the asserts above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// `out[m×n] = a[m×k] · b[k×n]`.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    gemm(m, k, n, View::rm(a, k), View::rm(b, n), out, n, false);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for l in 0..k {
                    out[i * n + j] += a[i * k + l] * b[l * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut out = vec![f64::NAN; m * n];
        matmul(m, k, n, &a, &b, &mut out);
        for (x, y) in out.iter().zip(naive(m, k, n, &a, &b)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_views() {
        // a is stored as k×m, so View::t gives a^T.
        let (m, k, n) = (2, 3, 2);
        let a_t = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3×2, transpose of [[1,2,3],[4,5,6]]
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, View::t(&a_t, m), View::rm(&b, n), &mut out, n, false);
        assert_eq!(out, vec![4.0, 5.0, 10.0, 11.0]);
        gemm(m, k, n, View::t(&a_t, m), View::rm(&b, n), &mut out, n, true);
        assert_eq!(out, vec![8.0, 10.0, 20.0, 22.0]);
    }

    #[test]
    fn empty_inner_dimension_zeroes() {
        let mut out = vec![3.0; 4];
        gemm(2, 0, 2, View::rm(&[], 0), View::rm(&[], 2), &mut out, 2, false);
        assert_eq!(out, vec![0.0; 4]);
    }
}

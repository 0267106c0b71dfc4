//! Dense row-major matrix kernels.
//!
//! All kernels accumulate into `out` (`out += ...`) so the backward pass can
//! reuse them for gradient accumulation. Loop orders are chosen so the inner
//! loop runs over contiguous memory and auto-vectorizes.

/// out[m,n] += a[m,k] · b[k,n]
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,k] += a[m,n] · b[k,n]ᵀ
pub fn matmul_nt_acc(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (p, o) in orow.iter_mut().enumerate() {
            *o += dot(arow, &b[p * n..(p + 1) * n]);
        }
    }
}

/// out[k,n] += a[m,k]ᵀ · b[m,n]
pub fn matmul_tn_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Dot product with four partial sums for instruction-level parallelism.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn arange(len: usize) -> Vec<f64> {
        (0..len).map(|i| (i as f64) * 0.37 - 3.0).collect()
    }

    #[test]
    fn matmul_matches_naive() {
        let (m, k, n) = (5, 7, 3);
        let a = arange(m * k);
        let b = arange(k * n);
        let mut out = vec![0.0; m * n];
        matmul_acc(&a, &b, m, k, n, &mut out);
        let expect = naive(&a, &b, m, k, n);
        for (x, y) in out.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn nt_matches_explicit_transpose() {
        let (m, n, k) = (4, 6, 5);
        let a = arange(m * n);
        let b = arange(k * n);
        // Transpose b to [n,k] and use the plain kernel.
        let mut bt = vec![0.0; n * k];
        for r in 0..k {
            for c in 0..n {
                bt[c * k + r] = b[r * n + c];
            }
        }
        let expect = naive(&a, &bt, m, n, k);
        let mut out = vec![0.0; m * k];
        matmul_nt_acc(&a, &b, m, n, k, &mut out);
        for (x, y) in out.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn tn_matches_explicit_transpose() {
        let (m, k, n) = (6, 4, 5);
        let a = arange(m * k);
        let b = arange(m * n);
        let mut at = vec![0.0; k * m];
        for r in 0..m {
            for c in 0..k {
                at[c * m + r] = a[r * k + c];
            }
        }
        let expect = naive(&at, &b, k, m, n);
        let mut out = vec![0.0; k * n];
        matmul_tn_acc(&a, &b, m, k, n, &mut out);
        for (x, y) in out.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kernels_accumulate() {
        let a = [1.0, 2.0];
        let b = [3.0, 4.0];
        let mut out = vec![10.0];
        matmul_acc(&a, &b, 1, 2, 1, &mut out);
        assert_eq!(out[0], 10.0 + 11.0);
    }
}

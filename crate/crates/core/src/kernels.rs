//! Inner loops shared by the autodiff ops. Row-major, no allocation.

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (s0 + s1) + (s2 + s3) + tail
}

/// `out = a · b` with `a: [m, k]`, `b: [k, n]`, `out: [m, n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik != 0.0 {
                axpy(row, aik, &b[kk * n..(kk + 1) * n]);
            }
        }
    }
}

/// `da += dc · bᵀ` with `dc: [m, n]`, `b: [k, n]`, `da: [m, k]`.
pub(crate) fn matmul_grad_lhs(dc: &[f64], b: &[f64], m: usize, k: usize, n: usize, da: &mut [f64]) {
    for i in 0..m {
        let dci = &dc[i * n..(i + 1) * n];
        let dai = &mut da[i * k..(i + 1) * k];
        for (kk, slot) in dai.iter_mut().enumerate() {
            *slot += dot(dci, &b[kk * n..(kk + 1) * n]);
        }
    }
}

/// `db += aᵀ · dc` with `a: [m, k]`, `dc: [m, n]`, `db: [k, n]`.
pub(crate) fn matmul_grad_rhs(a: &[f64], dc: &[f64], m: usize, k: usize, n: usize, db: &mut [f64]) {
    for i in 0..m {
        let dci = &dc[i * n..(i + 1) * n];
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik != 0.0 {
                axpy(&mut db[kk * n..(kk + 1) * n], aik, dci);
            }
        }
    }
}

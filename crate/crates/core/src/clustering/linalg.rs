//! Small dense symmetric-matrix helpers (row-major `d × d`).

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub(crate) fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// `ln|A|` from its Cholesky factor.
pub(crate) fn log_det_from_cholesky(l: &[f64], d: usize) -> f64 {
    2.0 * (0..d).map(|i| l[i * d + i].ln()).sum::<f64>()
}

/// `A⁻¹` from the Cholesky factor of `A`.
pub(crate) fn inverse_from_cholesky(l: &[f64], d: usize) -> Vec<f64> {
    // invert L by forward substitution, then A⁻¹ = L⁻ᵀ L⁻¹
    let mut li = vec![0.0; d * d];
    for i in 0..d {
        li[i * d + i] = 1.0 / l[i * d + i];
        for j in 0..i {
            let mut s = 0.0;
            for k in j..i {
                s += l[i * d + k] * li[k * d + j];
            }
            li[i * d + j] = -s / l[i * d + i];
        }
    }
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (i..d).map(|k| li[k * d + i] * li[k * d + j]).sum();
            inv[i * d + j] = s;
            inv[j * d + i] = s;
        }
    }
    inv
}

/// `xᵀ A x`.
pub(crate) fn quad_form(a: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    let mut s = 0.0;
    for i in 0..d {
        let row = &a[i * d..(i + 1) * d];
        s += x[i] * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
    s
}

/// `tr(A B)` for symmetric `A`, `B`.
pub(crate) fn trace_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Small dense kernels generic over [`Scalar`], used inside Vecchia blocks.
//! Matrices are row-major `k x k` slices.

use crate::scalar::Scalar;

/// In-place lower Cholesky factorization. On failure returns the index of
/// the first non-positive pivot; the contents of `a` are then unspecified.
pub fn cholesky_in_place<T: Scalar>(a: &mut [T], k: usize) -> Result<(), usize> {
    for j in 0..k {
        let mut d = a[j * k + j];
        for m in 0..j {
            let l = a[j * k + m];
            d -= l * l;
        }
        if !(d.re() > 0.0) || !d.re().is_finite() {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        let inv = d.recip();
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for m in 0..j {
                s -= a[i * k + m] * a[j * k + m];
            }
            a[i * k + j] = s * inv;
        }
    }
    for i in 0..k {
        for j in i + 1..k {
            a[i * k + j] = T::zero();
        }
    }
    Ok(())
}

/// Row `i` of `L^{-1}` for a lower-triangular `L`, written into `out[0..=i]`
/// (entries past `i` are zero). Solves `L^T x = e_i`.
pub fn inverse_row<T: Scalar>(l: &[T], k: usize, i: usize, out: &mut [T]) {
    for v in out.iter_mut().skip(i + 1) {
        *v = T::zero();
    }
    out[i] = l[i * k + i].recip();
    for c in (0..i).rev() {
        let mut s = T::zero();
        for m in c + 1..=i {
            s += l[m * k + c] * out[m];
        }
        out[c] = -s / l[c * k + c];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_and_invert() {
        // A = M M^T with M lower triangular
        let m = [2.0, 0.0, 0.0, 1.0, 3.0, 0.0, -1.0, 0.5, 1.5];
        let mut a = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                a[i * 3 + j] = (0..3).map(|t| m[i * 3 + t] * m[j * 3 + t]).sum();
            }
        }
        cholesky_in_place(&mut a, 3).unwrap();
        for (x, y) in a.iter().zip(&m) {
            assert!((x - y).abs() < 1e-14);
        }
        let mut row = [0.0; 3];
        for i in 0..3 {
            inverse_row(&a, 3, i, &mut row);
            for j in 0..3 {
                let e: f64 = (0..3).map(|t| row[t] * a[t * 3 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((e - want).abs() < 1e-14);
            }
        }
        let mut bad = vec![1.0, 2.0, 2.0, 1.0];
        assert_eq!(cholesky_in_place(&mut bad, 2), Err(1));
    }
}

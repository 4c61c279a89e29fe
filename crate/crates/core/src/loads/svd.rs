//! Thin SVD by one-sided (Hestenes) Jacobi rotations.

use nalgebra::DMatrix;

use super::LoadError;

/// `a = u * diag(s) * vt` with `s` nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

const MAX_SWEEPS: usize = 60;

/// Thin SVD of an `m x n` matrix; `r = min(m, n)` triplets are returned.
/// Rotations act on the columns of `a` or of `a^T`, whichever has fewer.
pub fn svd_jacobi(a: &DMatrix<f64>) -> Result<Svd, LoadError> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(LoadError::Empty);
    }
    let transposed = m < n;
    // Work matrix with r columns of length len, stored column by column.
    let w = if transposed { a.transpose() } else { a.clone() };
    let (len, r) = w.shape();
    let mut cols: Vec<Vec<f64>> = (0..r).map(|j| w.column(j).iter().copied().collect()).collect();
    let mut rot: Vec<Vec<f64>> = (0..r).map(|j| (0..r).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();

    // Columns below this squared norm are rounding noise of a null direction.
    let negligible = (f64::EPSILON * f64::EPSILON) * cols.iter().flatten().map(|v| v * v).sum::<f64>();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..r {
            for j in i + 1..r {
                let (alpha, beta, gamma) = {
                    let (ci, cj) = (&cols[i], &cols[j]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for k in 0..len {
                        alpha += ci[k] * ci[k];
                        beta += cj[k] * cj[k];
                        gamma += ci[k] * cj[k];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || alpha.min(beta) <= negligible {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
                let (lo, hi) = rot.split_at_mut(j);
                rotate(&mut lo[i], &mut hi[0], c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LoadError::SvdNoConvergence(MAX_SWEEPS));
    }

    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let smax = norms[order[0]];
    let s: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    // Normalised columns; null directions are completed to an orthonormal set.
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut pending = Vec::new();
    for (pos, &k) in order.iter().enumerate() {
        if norms[k] > 1e-14 * smax && norms[k] > 0.0 {
            q.push(cols[k].iter().map(|v| v / norms[k]).collect());
        } else {
            q.push(vec![0.0; len]);
            pending.push(pos);
        }
    }
    let mut e = 0;
    for pos in pending {
        while e < len {
            let mut v = vec![0.0; len];
            v[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for other in q.iter() {
                    let d: f64 = other.iter().zip(&v).map(|(a, b)| a * b).sum();
                    for (vi, oi) in v.iter_mut().zip(other) {
                        *vi -= d * oi;
                    }
                }
            }
            let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nv > 1e-8 {
                q[pos] = v.into_iter().map(|x| x / nv).collect();
                break;
            }
        }
    }
    // w * rot = q * diag(s), so w = q s rot^T.
    let qm = DMatrix::from_fn(len, r, |i, j| q[j][i]);
    let vm = DMatrix::from_fn(r, r, |i, j| rot[order[j]][i]);
    if transposed {
        // a^T = q s rot^T  =>  a = rot s q^T
        Ok(Svd { u: vm, s, vt: qm.transpose() })
    } else {
        Ok(Svd { u: qm, s, vt: vm.transpose() })
    }
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(svd: &Svd) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(svd.s.clone()));
        &svd.u * s * &svd.vt
    }

    #[test]
    fn rank_one() {
        let a = nalgebra::DVector::from_vec(vec![1.0, 2.0, 2.0]);
        let b = nalgebra::DVector::from_vec(vec![3.0, 0.0, 4.0, 0.0]);
        let m = &a * b.transpose();
        let svd = svd_jacobi(&m).unwrap();
        assert!((svd.s[0] - 15.0).abs() < 1e-12);
        assert!(svd.s[1..].iter().all(|&s| s < 1e-12));
        assert!((reconstruct(&svd) - m).norm() < 1e-12);
        let utu = svd.u.transpose() * &svd.u;
        assert!((utu - DMatrix::identity(3, 3)).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_matrix_has_unit_values() {
        let (c, s) = (0.6, 0.8);
        let m = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let svd = svd_jacobi(&m).unwrap();
        assert!(svd.s.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn tall_and_wide_agree() {
        let m = DMatrix::from_fn(7, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 2.5 + 0.1 * i as f64);
        let a = svd_jacobi(&m).unwrap();
        let b = svd_jacobi(&m.transpose()).unwrap();
        for (x, y) in a.s.iter().zip(&b.s) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((reconstruct(&a) - &m).norm() < 1e-12 * m.norm());
        assert!((reconstruct(&b) - m.transpose()).norm() < 1e-12 * m.norm());
    }
}

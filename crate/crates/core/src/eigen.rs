//! Dense Hermitian eigensolver for the small light-shift matrices.
//!
//! Cyclic complex Jacobi on each independent block. The lin⊥lin field has no
//! `z` polarization component, so the light-shift operator only couples
//! sublevels with equal `m` parity and splits into two blocks; detecting the
//! blocks from the sparsity pattern roughly halves the cost of a solve.

use nalgebra::DMatrix;
use num_complex::Complex64;

const MAX_SWEEPS: usize = 60;

/// Eigen-decomposition with eigenvalues in ascending order and orthonormal
/// eigenvectors stored as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

/// Partition `0..n` into groups of indices coupled (transitively) by nonzero
/// off-diagonal entries.
pub fn coupled_blocks(a: &DMatrix<Complex64>) -> Vec<Vec<usize>> {
    let n = a.nrows();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] != Complex64::new(0.0, 0.0) || a[(j, i)] != Complex64::new(0.0, 0.0) {
                let (ri, rj) = (root(&mut label, i), root(&mut label, j));
                if ri != rj {
                    label[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut block_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut label, i);
        if block_of_root[r] == usize::MAX {
            block_of_root[r] = blocks.len();
            blocks.push(Vec::new());
        }
        blocks[block_of_root[r]].push(i);
    }
    blocks
}

/// Diagonalize a Hermitian matrix. Only the upper triangle is trusted; the
/// lower triangle is taken as its conjugate.
pub fn hermitian_eigen(a: &DMatrix<Complex64>) -> HermitianEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut values = vec![0.0; n];
    let mut vectors = DMatrix::zeros(n, n);
    for block in coupled_blocks(a) {
        let m = block.len();
        let mut w = vec![Complex64::new(0.0, 0.0); m * m];
        for (bi, &i) in block.iter().enumerate() {
            for (bj, &j) in block.iter().enumerate() {
                w[bi * m + bj] = if i <= j { a[(i, j)] } else { a[(j, i)].conj() };
            }
            w[bi * m + bi].im = 0.0;
        }
        let mut v = vec![Complex64::new(0.0, 0.0); m * m];
        for k in 0..m {
            v[k * m + k] = Complex64::new(1.0, 0.0);
        }
        jacobi_in_place(&mut w, &mut v, m);
        for (bk, &k) in block.iter().enumerate() {
            values[k] = w[bk * m + bk].re;
            for (bi, &i) in block.iter().enumerate() {
                vectors[(i, k)] = v[bi * m + bk];
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = DMatrix::from_fn(n, n, |i, k| vectors[(i, order[k])]);
    HermitianEigen {
        values: sorted_values,
        vectors: sorted_vectors,
    }
}

/// Cyclic Jacobi on a dense row-major `m × m` Hermitian matrix `w`, rotating
/// the columns of `v` along. On return `w` is diagonal to working precision.
fn jacobi_in_place(w: &mut [Complex64], v: &mut [Complex64], m: usize) {
    if m < 2 {
        return;
    }
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        let mut diag = 0.0;
        for i in 0..m {
            diag += w[i * m + i].re * w[i * m + i].re;
            for j in (i + 1)..m {
                off += w[i * m + j].norm_sqr();
            }
        }
        if off <= 1e-32 * diag || off == 0.0 {
            return;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let h = w[p * m + q];
                let habs = h.norm_sqr().sqrt();
                if habs == 0.0 {
                    continue;
                }
                let app = w[p * m + p].re;
                let aqq = w[q * m + q].re;
                if habs < 1e-18 * (app.abs() + aqq.abs()) {
                    w[p * m + q] = Complex64::new(0.0, 0.0);
                    w[q * m + p] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let phase = h / habs;
                let tau = (aqq - app) / (2.0 * habs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // u_p = c e_p - s e^{-iφ} e_q,  u_q = s e^{iφ} e_p + c e_q
                let sp = phase * s;
                let sm = phase.conj() * s;
                for k in 0..m {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = w[k * m + p];
                    let akq = w[k * m + q];
                    let nkp = akp * c - akq * sm;
                    let nkq = akp * sp + akq * c;
                    w[k * m + p] = nkp;
                    w[p * m + k] = nkp.conj();
                    w[k * m + q] = nkq;
                    w[q * m + k] = nkq.conj();
                }
                w[p * m + p] = Complex64::new(app - t * habs, 0.0);
                w[q * m + q] = Complex64::new(aqq + t * habs, 0.0);
                w[p * m + q] = Complex64::new(0.0, 0.0);
                w[q * m + p] = Complex64::new(0.0, 0.0);
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = vkp * c - vkq * sm;
                    v[k * m + q] = vkp * sp + vkq * c;
                }
            }
        }
    }
    log::warn!("Jacobi eigensolver hit the sweep limit on a {m}x{m} block");
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let a = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    }

    fn check(a: &DMatrix<Complex64>) {
        let e = hermitian_eigen(a);
        let n = a.nrows();
        let scale = a.norm().max(1e-300);
        let gram = e.vectors.adjoint() * &e.vectors;
        assert!((gram - DMatrix::<Complex64>::identity(n, n)).norm() < 1e-13);
        for k in 0..n {
            let col = e.vectors.column(k);
            let r = a * col - col * Complex64::new(e.values[k], 0.0);
            assert!(r.norm() < 1e-12 * scale, "residual {}", r.norm());
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn random_dense_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=11 {
            for _ in 0..20 {
                check(&random_hermitian(n, &mut rng));
            }
        }
    }

    #[test]
    fn block_structure_is_found() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let full = random_hermitian(9, &mut rng);
        // keep only couplings between equal-parity indices
        let a = DMatrix::from_fn(9, 9, |i, j| {
            if (i + j) % 2 == 0 {
                full[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let blocks = coupled_blocks(&a);
        assert_eq!(blocks, vec![vec![0, 2, 4, 6, 8], vec![1, 3, 5, 7]]);
        check(&a);
    }

    #[test]
    fn agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_hermitian(9, &mut rng);
            let mut reference: Vec<f64> = a
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .collect();
            reference.sort_by(f64::total_cmp);
            let e = hermitian_eigen(&a);
            for (x, y) in e.values.iter().zip(&reference) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_and_degenerate() {
        check(&DMatrix::zeros(5, 5));
        check(&DMatrix::identity(4, 4));
        let mut a = DMatrix::<Complex64>::identity(3, 3);
        a[(0, 1)] = Complex64::new(0.0, 1.0);
        a[(1, 0)] = Complex64::new(0.0, -1.0);
        check(&a);
    }
}

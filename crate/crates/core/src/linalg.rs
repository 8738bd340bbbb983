//! Small dense complex linear algebra: Hermitian eigendecomposition and the
//! matrix exponential.
//!
//! The propagation engine only ever factorizes small matrices (block
//! Hamiltonians are at most 16-dimensional, Krylov projections at most a few
//! tens), so a cyclic Jacobi eigensolver and a Padé scaling-and-squaring
//! exponential are fast, dependency-free and fully deterministic.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

/// Eigendecomposition of a Hermitian matrix: `a = v · diag(w) · v†`.
///
/// Returns eigenvalues in ascending order with matching eigenvector columns.
/// Uses the cyclic complex Jacobi method; the input must be Hermitian (only
/// the values on and above the diagonal are trusted).
pub fn hermitian_eig(a: &Array2<C64>) -> (Array1<f64>, Array2<C64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eig: matrix must be square");
    if n == 0 {
        return (Array1::zeros(0), Array2::zeros((0, 0)));
    }
    if n == 1 {
        let mut v = Array2::zeros((1, 1));
        v[[0, 0]] = C64::new(1.0, 0.0);
        return (Array1::from_vec(vec![a[[0, 0]].re]), v);
    }

    let mut m = a.clone();
    // Re-hermitize to guard against asymmetric rounding in the input.
    for i in 0..n {
        m[[i, i]] = C64::new(m[[i, i]].re, 0.0);
        for j in (i + 1)..n {
            let avg = 0.5 * (m[[i, j]] + m[[j, i]].conj());
            m[[i, j]] = avg;
            m[[j, i]] = avg.conj();
        }
    }
    let mut v: Array2<C64> = Array2::eye(n);

    let frob: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..60 {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    s += m[[i, j]].norm_sqr();
                }
            }
            (2.0 * s).sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                let g = apq.norm();
                if g <= tol / (n as f64) {
                    continue;
                }
                let phase = apq / g; // e^{i phi}
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                // Real Jacobi angle for the phase-rotated 2x2 block.
                let theta = (aqq - app) / (2.0 * g);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // Plane rotation r: r[p][p]=c, r[p][q]=s, r[q][p]=-s*conj(phase)... with
                // column transform a <- r† a r where r = diag(1, conj(phase)) * [[c,s],[-s,c]].
                let rpp = C64::new(c, 0.0);
                let rpq = C64::new(s, 0.0);
                let rqp = -s * phase.conj();
                let rqq = c * phase.conj();

                // Columns p,q of m (m <- m r).
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = mkp * rpp + mkq * rqp;
                    m[[k, q]] = mkp * rpq + mkq * rqq;
                }
                // Rows p,q of m (m <- r† m).
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = rpp.conj() * mpk + rqp.conj() * mqk;
                    m[[q, k]] = rpq.conj() * mpk + rqq.conj() * mqk;
                }
                m[[p, q]] = C64::new(0.0, 0.0);
                m[[q, p]] = C64::new(0.0, 0.0);
                m[[p, p]] = C64::new(m[[p, p]].re, 0.0);
                m[[q, q]] = C64::new(m[[q, q]].re, 0.0);

                // Accumulate eigenvectors (v <- v r).
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = vkp * rpp + vkq * rqp;
                    v[[k, q]] = vkp * rpq + vkq * rqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].re.partial_cmp(&m[[j, j]].re).unwrap());
    let w = Array1::from_iter(order.iter().map(|&i| m[[i, i]].re));
    let mut vs = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vs[[k, col]] = v[[k, i]];
        }
    }
    (w, vs)
}

/// Conjugate transpose.
pub fn adjoint(a: &Array2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out[[j, i]] = a[[i, j]].conj();
        }
    }
    out
}

fn one_norm(a: &Array2<C64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = (0..a.nrows()).map(|i| a[[i, j]].norm()).sum();
        best = best.max(s);
    }
    best
}

/// Solve `a x = b` for square complex `a` via LU with partial pivoting.
/// `b` may hold multiple right-hand sides as columns.
pub fn solve(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.nrows());
    let mut lu = a.clone();
    let mut x = b.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut piv = k;
        let mut best = lu[[k, k]].norm();
        for i in (k + 1)..n {
            let v = lu[[i, k]].norm();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            for j in 0..x.ncols() {
                x.swap([k, j], [piv, j]);
            }
            perm.swap(k, piv);
        }
        let d = lu[[k, k]];
        assert!(d.norm() > 0.0, "solve: singular matrix");
        for i in (k + 1)..n {
            let f = lu[[i, k]] / d;
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                let v = lu[[k, j]];
                lu[[i, j]] -= f * v;
            }
            for j in 0..x.ncols() {
                let v = x[[k, j]];
                x[[i, j]] -= f * v;
            }
        }
    }
    // Back substitution.
    for j in 0..x.ncols() {
        for ii in (0..n).rev() {
            let mut s = x[[ii, j]];
            for kk in (ii + 1)..n {
                s -= lu[[ii, kk]] * x[[kk, j]];
            }
            x[[ii, j]] = s / lu[[ii, ii]];
        }
    }
    x
}

/// Matrix exponential by Padé(13) scaling and squaring.
///
/// Handles general complex matrices; used for non-Hermitian propagation steps
/// (decay terms) and Krylov-projected Hessenberg matrices.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    if n == 0 {
        return Array2::zeros((0, 0));
    }
    const THETA13: f64 = 5.371920351148152;
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scale = C64::new(0.5f64.powi(s), 0.0);
    let m = a.mapv(|z| z * scale);

    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let eye: Array2<C64> = Array2::eye(n);
    let m2 = m.dot(&m);
    let m4 = m2.dot(&m2);
    let m6 = m2.dot(&m4);

    let u_inner = &m6 * C64::new(B[13], 0.0) + &m4 * C64::new(B[11], 0.0) + &m2 * C64::new(B[9], 0.0);
    let u_poly = m6.dot(&u_inner)
        + &m6 * C64::new(B[7], 0.0)
        + &m4 * C64::new(B[5], 0.0)
        + &m2 * C64::new(B[3], 0.0)
        + &eye * C64::new(B[1], 0.0);
    let u = m.dot(&u_poly);

    let v_inner = &m6 * C64::new(B[12], 0.0) + &m4 * C64::new(B[10], 0.0) + &m2 * C64::new(B[8], 0.0);
    let v = m6.dot(&v_inner)
        + &m6 * C64::new(B[6], 0.0)
        + &m4 * C64::new(B[4], 0.0)
        + &m2 * C64::new(B[2], 0.0)
        + &eye * C64::new(B[0], 0.0);

    let num = &v + &u;
    let den = &v - &u;
    let mut r = solve(&den, &num);
    for _ in 0..s {
        r = r.dot(&r);
    }
    r
}

/// Largest singular value, estimated by power iteration on `a† a`.
pub fn spectral_norm(a: &Array2<C64>) -> f64 {
    let n = a.ncols();
    if n == 0 {
        return 0.0;
    }
    let at = adjoint(a);
    let mut v = Array1::from_elem(n, C64::new(1.0 / (n as f64).sqrt(), 0.0));
    let mut lam = 0.0f64;
    for _ in 0..200 {
        let w = at.dot(&a.dot(&v));
        let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nw == 0.0 {
            return 0.0;
        }
        let next = w.mapv(|z| z / nw);
        let prev = lam;
        lam = nw;
        v = next;
        if (lam - prev).abs() <= 1e-13 * lam.max(1.0) {
            break;
        }
    }
    lam.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut impl Rng) -> Array2<C64> {
        let mut a: Array2<C64> = Array2::zeros((n, n));
        for i in 0..n {
            a[[i, i]] = C64::new(rng.gen::<f64>() - 0.5, 0.0);
            for j in (i + 1)..n {
                let z = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                a[[i, j]] = z;
                a[[j, i]] = z.conj();
            }
        }
        a
    }

    #[test]
    fn eig_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 12, 16] {
            let a = random_hermitian(n, &mut rng);
            let (w, v) = hermitian_eig(&a);
            // v diag(w) v† == a
            let mut wd: Array2<C64> = Array2::zeros((n, n));
            for i in 0..n {
                wd[[i, i]] = C64::new(w[i], 0.0);
            }
            let rec = v.dot(&wd).dot(&adjoint(&v));
            for i in 0..n {
                for j in 0..n {
                    assert!((rec[[i, j]] - a[[i, j]]).norm() < 1e-12, "n={n} ({i},{j})");
                }
            }
            // Orthonormal columns.
            let g = adjoint(&v).dot(&v);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g[[i, j]] - C64::new(want, 0.0)).norm() < 1e-12);
                }
            }
            // Ascending order.
            for i in 1..n {
                assert!(w[i] >= w[i - 1]);
            }
        }
    }

    #[test]
    fn expm_matches_eigendecomposition_for_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 9;
        let a = random_hermitian(n, &mut rng) * C64::new(3.0, 0.0);
        let (w, v) = hermitian_eig(&a);
        let mut ed: Array2<C64> = Array2::zeros((n, n));
        for i in 0..n {
            ed[[i, i]] = C64::new(w[i], 0.0).exp();
        }
        let want = v.dot(&ed).dot(&adjoint(&v));
        let got = expm(&a);
        for i in 0..n {
            for j in 0..n {
                assert!((got[[i, j]] - want[[i, j]]).norm() < 1e-11);
            }
        }
    }

    #[test]
    fn expm_diagonal_and_nilpotent() {
        // Diagonal complex (non-Hermitian) case.
        let mut a: Array2<C64> = Array2::zeros((2, 2));
        a[[0, 0]] = C64::new(-0.3, 1.7);
        a[[1, 1]] = C64::new(0.1, -2.0);
        let e = expm(&a);
        assert!((e[[0, 0]] - a[[0, 0]].exp()).norm() < 1e-14);
        assert!((e[[1, 1]] - a[[1, 1]].exp()).norm() < 1e-14);
        assert!(e[[0, 1]].norm() < 1e-15);

        // Nilpotent: exp([[0,x],[0,0]]) = I + A.
        let mut b: Array2<C64> = Array2::zeros((2, 2));
        b[[0, 1]] = C64::new(4.0, -3.0);
        let eb = expm(&b);
        assert!((eb[[0, 1]] - b[[0, 1]]).norm() < 1e-13);
        assert_relative_eq!(eb[[0, 0]].re, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn solve_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let mut a: Array2<C64> = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            }
            a[[i, i]] += C64::new(4.0, 0.0);
        }
        let mut b: Array2<C64> = Array2::zeros((n, 2));
        for i in 0..n {
            for j in 0..2 {
                b[[i, j]] = C64::new(rng.gen::<f64>(), rng.gen::<f64>());
            }
        }
        let x = solve(&a, &b);
        let r = a.dot(&x);
        for i in 0..n {
            for j in 0..2 {
                assert!((r[[i, j]] - b[[i, j]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_of_unitary_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_hermitian(6, &mut rng);
        let (_, v) = hermitian_eig(&a);
        assert_relative_eq!(spectral_norm(&v), 1.0, epsilon = 1e-10);
    }
}

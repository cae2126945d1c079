//! Dense and matrix-free linear algebra used by the operator layer.
//!
//! Vectors are plain slices with the Euclidean inner product. On a uniform grid
//! this differs from the L² product by the constant `dx`, which leaves
//! eigenvalues, symmetry and solutions unchanged.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::grid::C64;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(x: &mut [f64], a: f64) {
    for v in x.iter_mut() {
        *v *= a;
    }
}

/// Dense matrix of a linear map, built column by column.
pub fn dense_from_map(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = apply(&e);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

/// Largest entry of `|M - Mᵀ|` relative to the largest entry of `|M|`.
pub fn asymmetry(m: &Mat<f64>) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0f64;
    let mut size = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            defect = defect.max((m[(i, j)] - m[(j, i)]).abs());
            size = size.max(m[(i, j)].abs());
        }
    }
    if size == 0.0 {
        0.0
    } else {
        defect / size
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.
pub fn symmetric_eigen(m: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let n = m.nrows();
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Stalled(format!("symmetric eigensolver: {e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

/// Eigenvalues and eigenvectors of a general real matrix.
pub fn general_eigen(m: &Mat<f64>) -> Result<(Vec<C64>, Mat<C64>)> {
    let evd = m.eigen().map_err(|e| Error::Stalled(format!("eigensolver: {e:?}")))?;
    let vals = evd.S().column_vector().iter().copied().collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn general_eigenvalues(m: &Mat<f64>) -> Result<Vec<C64>> {
    m.eigenvalues().map_err(|e| Error::Stalled(format!("eigensolver: {e:?}")))
}

/// Orthonormalize a block by the eigen-decomposition of its Gram matrix,
/// dropping directions whose Gram eigenvalue is below `drop * max`.
fn svqb(block: &[Vec<f64>], drop: f64) -> Result<Mat<f64>> {
    let k = block.len();
    let mut g = Mat::<f64>::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let v = dot(&block[i], &block[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    let (vals, vecs) = symmetric_eigen(&g)?;
    let top = vals.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..k).filter(|&i| vals[i] > drop * top).collect();
    Ok(Mat::<f64>::from_fn(k, keep.len(), |i, j| vecs[(i, keep[j])] / vals[keep[j]].sqrt()))
}

fn combine(block: &[Vec<f64>], coef: &Mat<f64>) -> Vec<Vec<f64>> {
    let n = block[0].len();
    (0..coef.ncols())
        .map(|j| {
            let mut out = vec![0.0; n];
            for (i, b) in block.iter().enumerate() {
                let a = coef[(i, j)];
                if a != 0.0 {
                    axpy(&mut out, a, b);
                }
            }
            out
        })
        .collect()
}

/// Result of an iterative symmetric eigensolve.
#[derive(Clone, Debug)]
pub struct EigenBlock {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Locally optimal block preconditioned conjugate gradient for the lowest
/// eigenpairs of a symmetric map.
///
/// `x0` sets the block size; `nev <= x0.len()` pairs are checked for
/// convergence (`‖Ax - λx‖ <= tol · scale`).
pub fn lobpcg(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: Vec<Vec<f64>>,
    nev: usize,
    tol: f64,
    scale_hint: f64,
    max_iter: usize,
) -> Result<EigenBlock> {
    let k = x0.len();
    let c = svqb(&x0, 1e-12)?;
    let mut x = combine(&x0, &c);
    if x.len() < k {
        return Err(Error::Stalled("lobpcg: initial block is rank deficient".into()));
    }
    let mut ax: Vec<Vec<f64>> = x.iter().map(|v| apply(v)).collect();
    let mut p: Vec<Vec<f64>> = Vec::new();
    let mut ap: Vec<Vec<f64>> = Vec::new();
    let mut lambda = vec![0.0; k];
    let mut res_norms = vec![f64::INFINITY; k];

    // initial Rayleigh-Ritz
    {
        let h = Mat::<f64>::from_fn(k, k, |i, j| dot(&x[i], &ax[j]));
        let (vals, vecs) = symmetric_eigen(&h)?;
        x = combine(&x, &vecs);
        ax = combine(&ax, &vecs);
        lambda.copy_from_slice(&vals[..k]);
    }

    for it in 0..max_iter {
        let r: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let mut ri = ax[i].clone();
                axpy(&mut ri, -lambda[i], &x[i]);
                ri
            })
            .collect();
        for i in 0..k {
            res_norms[i] = norm(&r[i]);
        }
        if res_norms[..nev].iter().all(|&v| v <= tol * scale_hint) {
            return Ok(EigenBlock { values: lambda, vectors: x, residuals: res_norms, iterations: it });
        }
        let w: Vec<Vec<f64>> = r.iter().map(|ri| precond(ri)).collect();
        let aw: Vec<Vec<f64>> = w.iter().map(|v| apply(v)).collect();

        // orthonormal basis [X, W, P] with W and P orthogonalized against
        // everything before them; A-images follow the same combinations
        let mut s: Vec<Vec<f64>> = x.clone();
        let mut as_: Vec<Vec<f64>> = ax.clone();
        let candidates = w.into_iter().zip(aw).chain(p.drain(..).zip(ap.drain(..)));
        for (mut v, mut av) in candidates {
            let orig = norm(&v);
            if orig == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for (u, au) in s.iter().zip(&as_) {
                    let a = dot(u, &v);
                    axpy(&mut v, -a, u);
                    axpy(&mut av, -a, au);
                }
            }
            let nv = norm(&v);
            if nv <= 1e-10 * orig {
                continue;
            }
            scale(&mut v, 1.0 / nv);
            scale(&mut av, 1.0 / nv);
            s.push(v);
            as_.push(av);
        }
        let m = s.len();
        let h = Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (dot(&s[i], &as_[j]) + dot(&s[j], &as_[i])));
        let (vals, vecs) = symmetric_eigen(&h)?;
        let cx = Mat::<f64>::from_fn(m, k, |i, j| vecs[(i, j)]);
        let x_new = combine(&s, &cx);
        let ax_new = combine(&as_, &cx);
        let (p_new, ap_new) = if m > k {
            let tail = Mat::<f64>::from_fn(m - k, k, |i, j| vecs[(i + k, j)]);
            (combine(&s[k..], &tail), combine(&as_[k..], &tail))
        } else {
            (Vec::new(), Vec::new())
        };
        x = x_new;
        ax = ax_new;
        p = p_new;
        ap = ap_new;
        lambda.copy_from_slice(&vals[..k]);
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: res_norms[..nev].iter().cloned().fold(0.0, f64::max) })
}

/// Outcome of a Krylov solve.
#[derive(Clone, Debug)]
pub struct KrylovSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖b - Ax‖ / ‖b‖`.
    pub residual: f64,
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems with a
/// symmetric positive definite preconditioner.
pub fn minres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovSolution> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(KrylovSolution { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let mut x = vec![0.0; n];
    let mut r1 = b.to_vec();
    let mut y = precond(&r1);
    let beta1 = dot(&r1, &y);
    if beta1 <= 0.0 {
        return Err(Error::Stalled("minres: preconditioner is not positive definite".into()));
    }
    let beta1 = beta1.sqrt();
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];

    let true_residual = |x: &[f64]| {
        let ax = apply(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        norm(&r) / bnorm
    };

    for it in 1..=max_iter {
        let s = 1.0 / beta;
        let v: Vec<f64> = y.iter().map(|&yi| s * yi).collect();
        y = apply(&v);
        if it >= 2 {
            axpy(&mut y, -beta / oldb, &r1);
        }
        let alfa = dot(&v, &y);
        axpy(&mut y, -alfa / beta, &r2);
        r1 = std::mem::replace(&mut r2, y.clone());
        y = precond(&r2);
        oldb = beta;
        let bb = dot(&r2, &y);
        if bb < 0.0 {
            return Err(Error::Stalled("minres: preconditioner is not positive definite".into()));
        }
        beta = bb.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = (gbar * gbar + beta * beta).sqrt().max(f64::MIN_POSITIVE);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        let w1 = std::mem::replace(&mut w2, w.clone());
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        // phibar estimates the preconditioned residual norm
        if phibar / beta1 <= tol || beta == 0.0 {
            let res = true_residual(&x);
            if res <= 10.0 * tol || beta == 0.0 {
                return Ok(KrylovSolution { x, iterations: it, residual: res });
            }
        }
    }
    let res = true_residual(&x);
    Err(Error::NonConvergence { iterations: max_iter, residual: res })
}

/// Restarted GMRES with right preconditioning.
pub fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<KrylovSolution> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(KrylovSolution { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let mut total = 0;
    let mut rel = f64::INFINITY;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= tol {
            return Ok(KrylovSolution { x, iterations: total, residual: rel });
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|&ri| ri / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..restart {
            let zj = precond(&v[j]);
            let mut w = apply(&zj);
            z.push(zj);
            for i in 0..=j {
                h[i][j] = dot(&w, &v[i]);
                axpy(&mut w, -h[i][j], &v[i]);
            }
            // second pass of Gram-Schmidt
            for i in 0..=j {
                let a = dot(&w, &v[i]);
                h[i][j] += a;
                axpy(&mut w, -a, &v[i]);
            }
            h[j + 1][j] = norm(&w);
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let d = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if d == 0.0 {
                used = j;
                break;
            }
            cs[j] = h[j][j] / d;
            sn[j] = h[j + 1][j] / d;
            h[j][j] = d;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            let hn = h[j + 1][j];
            if (g[j + 1].abs() / bnorm) <= tol || total >= max_iter || hn == 0.0 {
                break;
            }
            let nv = hn;
            // h[j+1][j] was overwritten by the rotation; rebuild the basis vector from w
            v.push(w.iter().map(|&wi| wi / nv).collect());
        }
        // back substitution
        let mut yv = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * yv[k];
            }
            yv[i] = s / h[i][i];
        }
        for i in 0..used {
            axpy(&mut x, yv[i], &z[i]);
        }
        if used == 0 {
            break;
        }
    }
    let ax = apply(&x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let res = norm(&r) / bnorm;
    if res <= 10.0 * tol {
        Ok(KrylovSolution { x, iterations: total, residual: res })
    } else {
        Err(Error::NonConvergence { iterations: total, residual: res.min(rel) })
    }
}

/// Solve a small dense real system by partial-pivot LU.
pub fn solve_dense(m: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    use faer::linalg::solvers::Solve;
    let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    let sol = m.partial_piv_lu().solve(&rhs);
    (0..b.len()).map(|i| sol[(i, 0)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(n: usize, shift: f64) -> impl Fn(&[f64]) -> Vec<f64> {
        move |v: &[f64]| {
            (0..n)
                .map(|i| {
                    let mut s = (2.0 + shift) * v[i];
                    if i > 0 {
                        s -= v[i - 1];
                    }
                    if i + 1 < n {
                        s -= v[i + 1];
                    }
                    s
                })
                .collect()
        }
    }

    fn exact_tridiag(n: usize, shift: f64, k: usize) -> f64 {
        2.0 + shift - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos()
    }

    #[test]
    fn dense_symmetric_matches_closed_form() {
        let n = 20;
        let m = dense_from_map(n, tridiag(n, 0.0));
        assert!(asymmetry(&m) < 1e-15);
        let (vals, _) = symmetric_eigen(&m).unwrap();
        for k in 1..=n {
            assert!((vals[k - 1] - exact_tridiag(n, 0.0, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn general_eigen_of_rotation() {
        let m = Mat::<f64>::from_fn(2, 2, |i, j| [[0.0, -2.0], [2.0, 0.0]][i][j]);
        let mut vals = general_eigenvalues(&m).unwrap();
        vals.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((vals[0] - C64::new(0.0, -2.0)).norm() < 1e-12);
        assert!((vals[1] - C64::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn lobpcg_finds_lowest_pairs() {
        let n = 200;
        let shift = -0.01;
        let a = tridiag(n, shift);
        let x0: Vec<Vec<f64>> = (0..4)
            .map(|j| (0..n).map(|i| ((i * (j + 3)) as f64 * 0.37).sin() + 0.1).collect())
            .collect();
        let id = |v: &[f64]| v.to_vec();
        let out = lobpcg(&a, &id, x0, 2, 1e-9, 4.0, 2000).unwrap();
        assert!((out.values[0] - exact_tridiag(n, shift, 1)).abs() < 1e-10);
        assert!((out.values[1] - exact_tridiag(n, shift, 2)).abs() < 1e-10);
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let n = 100;
        let a = tridiag(n, -0.5);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).cos()).collect();
        let id = |v: &[f64]| v.to_vec();
        let sol = minres(&a, &id, &b, 1e-12, 1000).unwrap();
        let ax = a(&sol.x);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-9 * norm(&b));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        let n = 80;
        let a = move |v: &[f64]| -> Vec<f64> {
            (0..n).map(|i| 3.0 * v[i] + if i > 0 { v[i - 1] } else { 0.0 } - 0.5 * v[(i + 2) % n]).collect()
        };
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.01).collect();
        let id = |v: &[f64]| v.to_vec();
        let sol = gmres(&a, &id, &b, None, 1e-12, 20, 500).unwrap();
        let m = dense_from_map(n, a);
        let direct = solve_dense(&m, &b);
        for i in 0..n {
            assert!((sol.x[i] - direct[i]).abs() < 1e-9);
        }
    }
}

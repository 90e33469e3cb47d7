//! Restarted GMRES with right preconditioning on flat `f64` vectors.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmresSettings {
    /// Stop when ‖b − A x‖ ≤ rel_tol · ‖b‖.
    pub rel_tol: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-2, restart: 40, max_iterations: 200 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final ‖b − A x‖ / ‖b‖.
    pub rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` from x = 0, where `apply` computes `A v` and `precond` applies `M⁻¹`.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Vec<f64>,
    mut precond: impl FnMut(&[f64]) -> Vec<f64>,
    b: &[f64],
    settings: &GmresSettings,
) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return GmresOutcome { x, iterations: 0, rel_residual: 0.0 };
    }
    let mut total = 0;
    let mut r = b.to_vec();
    let mut rel = 1.0;
    while total < settings.max_iterations {
        let beta = norm(&r);
        rel = beta / bnorm;
        if rel <= settings.rel_tol {
            break;
        }
        let k_max = settings.restart.min(settings.max_iterations - total);
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h = vec![vec![0.0; k_max]; k_max + 1];
        let (mut cs, mut sn) = (vec![0.0; k_max], vec![0.0; k_max]);
        let mut g = vec![0.0; k_max + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..k_max {
            let mut w = apply(&precond(&v[j]));
            for (i, vi) in v.iter().enumerate() {
                h[i][j] = dot(&w, vi);
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= h[i][j] * vk;
                }
            }
            h[j + 1][j] = norm(&w);
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                (cs[j], sn[j]) = (1.0, 0.0);
            } else {
                (cs[j], sn[j]) = (h[j][j] / denom, h[j + 1][j] / denom);
            }
            h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            let breakdown = denom == 0.0 || h[j][j] == 0.0;
            if g[j + 1].abs() / bnorm <= settings.rel_tol || breakdown {
                break;
            }
            let nrm = norm(&w);
            v.push(w.iter().map(|x| x / nrm).collect());
        }
        // back substitution for the Krylov coefficients
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut acc = g[i];
            for k in i + 1..used {
                acc -= h[i][k] * y[k];
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        let mut z = vec![0.0; n];
        for (yi, vi) in y.iter().zip(&v) {
            for (zk, vk) in z.iter_mut().zip(vi) {
                *zk += yi * vk;
            }
        }
        let dx = precond(&z);
        for (xk, d) in x.iter_mut().zip(dx) {
            *xk += d;
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        rel = norm(&r) / bnorm;
        if rel <= settings.rel_tol || used == 0 {
            break;
        }
    }
    GmresOutcome { x, iterations: total, rel_residual: rel }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                2.2 * x[i] - l - r + 0.3 * (r - l)
            })
            .collect()
    }

    #[test]
    fn solves_nonsymmetric_tridiagonal() {
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let s = GmresSettings { rel_tol: 1e-12, restart: 20, max_iterations: 500 };
        let out = gmres(laplacian_1d, |v| v.to_vec(), &b, &s);
        let r: Vec<f64> = laplacian_1d(&out.x).iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(norm(&r) / norm(&b) < 1e-11, "{}", out.rel_residual);
    }

    #[test]
    fn exact_preconditioner_converges_in_one_step() {
        let b = vec![1.0, -2.0, 0.5];
        let out = gmres(|v| v.iter().map(|x| 3.0 * x).collect(), |v| v.iter().map(|x| x / 3.0).collect(), &b, &GmresSettings::default());
        assert_eq!(out.iterations, 1);
        assert!(out.x.iter().zip(&b).all(|(x, b)| (3.0 * x - b).abs() < 1e-14));
    }

    #[test]
    fn zero_rhs() {
        let out = gmres(|v| v.to_vec(), |v| v.to_vec(), &[0.0; 4], &GmresSettings::default());
        assert_eq!(out.x, vec![0.0; 4]);
    }
}

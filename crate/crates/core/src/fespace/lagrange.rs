//! Equispaced Lagrange polynomials on `[0, 1]` and their tensor products.

/// Values of the degree-`k` Lagrange basis at `t`, nodes `a/k`.
pub fn basis_1d(k: usize, t: f64) -> Vec<f64> {
    (0..=k)
        .map(|a| {
            let ta = a as f64 / k as f64;
            (0..=k)
                .filter(|&b| b != a)
                .map(|b| {
                    let tb = b as f64 / k as f64;
                    (t - tb) / (ta - tb)
                })
                .product()
        })
        .collect()
}

/// Derivatives of the degree-`k` Lagrange basis at `t`.
pub fn deriv_1d(k: usize, t: f64) -> Vec<f64> {
    (0..=k)
        .map(|a| {
            let ta = a as f64 / k as f64;
            let mut s = 0.0;
            for m in 0..=k {
                if m == a {
                    continue;
                }
                let tm = m as f64 / k as f64;
                let mut p = 1.0 / (ta - tm);
                for b in 0..=k {
                    if b != a && b != m {
                        let tb = b as f64 / k as f64;
                        p *= (t - tb) / (ta - tb);
                    }
                }
                s += p;
            }
            s
        })
        .collect()
}

/// Tensor-product shape function values and reference gradients at `xi`.
/// Local node `(a, b)` has index `b*(k+1) + a`.
pub fn tensor(k: usize, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
    let (vx, vy) = (basis_1d(k, xi[0]), basis_1d(k, xi[1]));
    let (dx, dy) = (deriv_1d(k, xi[0]), deriv_1d(k, xi[1]));
    let n = k + 1;
    let mut val = Vec::with_capacity(n * n);
    let mut grad = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            val.push(vx[a] * vy[b]);
            grad.push([dx[a] * vy[b], vx[a] * dy[b]]);
        }
    }
    (val, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_property() {
        for k in 1..=8 {
            for a in 0..=k {
                let v = basis_1d(k, a as f64 / k as f64);
                for (b, x) in v.iter().enumerate() {
                    assert!((x - f64::from(u8::from(a == b))).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for k in 1..=4 {
            let t = 0.3141;
            let d = deriv_1d(k, t);
            let (p, m) = (basis_1d(k, t + h), basis_1d(k, t - h));
            for a in 0..=k {
                assert!((d[a] - (p[a] - m[a]) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn tensor_partition_of_unity() {
        let (v, g) = tensor(3, [0.21, 0.77]);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let gs = g.iter().fold([0.0, 0.0], |s, x| [s[0] + x[0], s[1] + x[1]]);
        assert!(gs[0].abs() < 1e-12 && gs[1].abs() < 1e-12);
    }
}

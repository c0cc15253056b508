//! Cyclic tridiagonal solves via Thomas elimination plus a rank-one corner fix.

/// Factored periodic tridiagonal matrix. Row i couples x[i-1 mod n], x[i],
/// x[i+1 mod n] with coefficients lower[i], diag[i], upper[i]; lower[0] and
/// upper[n-1] are the wraparound corners.
pub(crate) struct PeriodicTridiag {
    n: usize,
    sub: Vec<f64>,
    inv_piv: Vec<f64>,
    cprime: Vec<f64>,
    z: Vec<f64>,
    v_last: f64,
    denom: f64,
}

impl PeriodicTridiag {
    /// Requires a diagonally dominant input (all our operators are), so no
    /// pivoting is needed.
    pub fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let n = diag.len();
        assert!(n >= 3 && lower.len() == n && upper.len() == n);
        let gamma = -diag[0];
        let alpha = lower[0];
        let beta = upper[n - 1];

        let mut d = diag.to_vec();
        d[0] -= gamma;
        d[n - 1] -= alpha * beta / gamma;

        let mut inv_piv = vec![0.0; n];
        let mut cprime = vec![0.0; n];
        inv_piv[0] = 1.0 / d[0];
        cprime[0] = upper[0] * inv_piv[0];
        for i in 1..n {
            let m = d[i] - lower[i] * cprime[i - 1];
            inv_piv[i] = 1.0 / m;
            if i + 1 < n {
                cprime[i] = upper[i] * inv_piv[i];
            }
        }

        let mut this = Self {
            n,
            sub: lower.to_vec(),
            inv_piv,
            cprime,
            z: Vec::new(),
            v_last: alpha / gamma,
            denom: 1.0,
        };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = beta;
        let mut z = vec![0.0; n];
        this.solve_stripped(&u, &mut z);
        this.denom = 1.0 + z[0] + this.v_last * z[n - 1];
        this.z = z;
        this
    }

    fn solve_stripped(&self, rhs: &[f64], out: &mut [f64]) {
        let n = self.n;
        out[0] = rhs[0] * self.inv_piv[0];
        for i in 1..n {
            out[i] = (rhs[i] - self.sub[i] * out[i - 1]) * self.inv_piv[i];
        }
        for i in (0..n - 1).rev() {
            out[i] -= self.cprime[i] * out[i + 1];
        }
    }

    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        assert_eq!(rhs.len(), self.n);
        assert_eq!(out.len(), self.n);
        self.solve_stripped(rhs, out);
        let fac = (out[0] + self.v_last * out[self.n - 1]) / self.denom;
        for (x, z) in out.iter_mut().zip(&self.z) {
            *x -= fac * z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply_cyclic(lower: &[f64], diag: &[f64], upper: &[f64], x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|i| {
                lower[i] * x[(i + n - 1) % n] + diag[i] * x[i] + upper[i] * x[(i + 1) % n]
            })
            .collect()
    }

    #[test]
    fn recovers_known_solution() {
        let n = 9;
        let lower: Vec<f64> = (0..n).map(|i| -0.3 - 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.2 - 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 1.7 + 0.1 * (i as f64).sin()).collect();
        let x_true: Vec<f64> = (0..n).map(|i| ((i * i) as f64).sin()).collect();
        let rhs = apply_cyclic(&lower, &diag, &upper, &x_true);

        let fact = PeriodicTridiag::factor(&lower, &diag, &upper);
        let mut x = vec![0.0; n];
        fact.solve(&rhs, &mut x);
        for (a, b) in x.iter().zip(&x_true) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn factorization_reuse_matches_fresh_solves() {
        let n = 16;
        let lower = vec![-0.4; n];
        let upper = vec![-0.4; n];
        let diag = vec![1.9; n];
        let fact = PeriodicTridiag::factor(&lower, &diag, &upper);
        for shift in 0..3 {
            let rhs: Vec<f64> = (0..n).map(|i| ((i + shift) as f64).cos()).collect();
            let mut x = vec![0.0; n];
            fact.solve(&rhs, &mut x);
            let back = apply_cyclic(&lower, &diag, &upper, &x);
            for (a, b) in back.iter().zip(&rhs) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Shared FFT plans keyed by transform size.
fn plans(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static REGISTRY: OnceLock<Mutex<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    let reg = REGISTRY.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = reg.lock().unwrap();
    let (planner, cache) = &mut *guard;
    cache
        .entry((n, inverse))
        .or_insert_with(|| {
            if inverse {
                planner.plan_fft_inverse(n)
            } else {
                planner.plan_fft_forward(n)
            }
        })
        .clone()
}

pub fn fft_forward(values: &[f64]) -> Vec<Complex<f64>> {
    let mut buf: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(*v, 0.0)).collect();
    plans(values.len(), false).process(&mut buf);
    buf
}

/// Inverse transform of a spectrum of a real signal; includes the 1/n factor.
pub fn fft_inverse_real(mut spec: Vec<Complex<f64>>) -> Vec<f64> {
    let n = spec.len();
    plans(n, true).process(&mut spec);
    let scale = 1.0 / n as f64;
    spec.iter().map(|c| c.re * scale).collect()
}

/// Signed frequency of spectrum index j for an n-point transform.
pub fn freq_of_index(j: usize, n: usize) -> i64 {
    if j <= n / 2 {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Spectral derivative of given order for samples of a periodic function.
/// The Nyquist mode is zeroed for odd orders.
pub fn spectral_derivative(values: &[f64], order: usize, length: f64) -> Vec<f64> {
    let n = values.len();
    let mut spec = fft_forward(values);
    let base = std::f64::consts::TAU / length;
    for (j, c) in spec.iter_mut().enumerate() {
        let f = freq_of_index(j, n);
        if n % 2 == 0 && j == n / 2 && order % 2 == 1 {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        let ik = Complex::new(0.0, f as f64 * base);
        *c *= ik.powu(order as u32);
    }
    fft_inverse_real(spec)
}

/// Periodic convolution (K * m)(x_i) = spacing * sum_j K[(i-j) mod n] m[j].
pub fn convolve_periodic(kernel: &[f64], values: &[f64], spacing: f64) -> Vec<f64> {
    debug_assert_eq!(kernel.len(), values.len());
    let ka = fft_forward(kernel);
    let va = fft_forward(values);
    let prod: Vec<Complex<f64>> = ka.iter().zip(&va).map(|(a, b)| a * b * spacing).collect();
    fft_inverse_real(prod)
}

/// Trigonometric interpolation of the samples onto a finer grid with
/// `factor * n` points (zero padding in frequency).
pub fn oversample(values: &[f64], factor: usize) -> Vec<f64> {
    let n = values.len();
    let m = n * factor.max(1);
    if m == n {
        return values.to_vec();
    }
    let spec = fft_forward(values);
    let mut padded = vec![Complex::new(0.0, 0.0); m];
    let half = n / 2;
    for (j, c) in spec.iter().enumerate() {
        let f = freq_of_index(j, n);
        if n % 2 == 0 && j == half {
            // split the Nyquist bin symmetrically to keep the signal real
            padded[half] = c * 0.5;
            padded[m - half] = Complex::new(c.re * 0.5, -c.im * 0.5);
        } else if f >= 0 {
            padded[j] = *c;
        } else {
            padded[m - (n - j)] = *c;
        }
    }
    let out = fft_inverse_real(padded);
    out.iter().map(|v| v * factor as f64).collect()
}

/// Certified upper bound on sup |d^r f / dx^r| over the whole torus for a
/// trigonometric polynomial given by its samples. Uses dense spectral
/// evaluation plus the Ehlich-Zeller correction 1/cos(pi K / M), where K is
/// the largest active frequency and M the evaluation grid size.
pub fn sup_derivative_bound(values: &[f64], order: usize, length: f64) -> f64 {
    let n = values.len();
    let deriv = if order == 0 {
        values.to_vec()
    } else {
        spectral_derivative(values, order, length)
    };
    let max_freq = (n / 2).max(1);
    let factor = ((64 * max_freq + n - 1) / n).max(8);
    let dense = oversample(&deriv, factor);
    let m = dense.len() as f64;
    let raw = dense.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    raw / (std::f64::consts::PI * max_freq as f64 / m).cos()
}

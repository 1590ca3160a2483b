//! Deterministic fixtures shared by the kernel benchmarks under `benches/`.
//!
//! Inputs are smooth trigonometric mixtures rather than random draws, so
//! the workloads are identical across machines and need no RNG.

use stlf_core::Matrix;

/// Pseudo-irregular value in roughly `[-1, 1]` for cell `(i, j)`.
fn cell(i: usize, j: usize) -> f64 {
    let (a, b) = (i as f64, j as f64);
    (0.731 * a + 1.37 * b).sin() * (0.113 * a * (b + 1.0)).cos()
}

/// `n × d` design with a nonlinear target.
pub fn regression(n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let data: Vec<f64> = (0..n).flat_map(|i| (0..d).map(move |j| cell(i, j))).collect();
    let x = Matrix::from_vec(n, d, data).expect("fixture shape");
    let y = (0..n)
        .map(|i| {
            let r = x.row(i);
            2.0 * r[0] + (3.0 * r[1 % d]).sin() + r[2 % d] * r[3 % d] + 0.1 * cell(i, 97)
        })
        .collect();
    (x, y)
}

/// Stacked-style design: `n` rows of `4 × 24` correlated forecasts around a
/// daily profile, with the target hour `h` of the profile plus noise.
pub fn stacked(n: usize, h: usize) -> (Matrix, Vec<f64>) {
    let profile = |day: usize, hour: usize| {
        100.0 + 20.0 * (std::f64::consts::TAU * hour as f64 / 24.0).sin() + 5.0 * cell(day, 500)
    };
    let data: Vec<f64> = (0..n)
        .flat_map(|i| (0..4).flat_map(move |m| (0..24).map(move |k| profile(i, k) + (m as f64 + 1.0) * cell(i, 24 * m + k))))
        .collect();
    let x = Matrix::from_vec(n, 96, data).expect("fixture shape");
    let y = (0..n).map(|i| profile(i, h) + 2.0 * cell(i, 900)).collect();
    (x, y)
}

/// Time-major `steps × batch × input_dim` inputs and `batch × output_dim` targets.
pub fn sequences(batch: usize, steps: usize, input_dim: usize, output_dim: usize) -> (Vec<f64>, Vec<f64>) {
    let xs = (0..steps * batch * input_dim).map(|k| 0.5 + 0.5 * cell(k, 7)).collect();
    let ys = (0..batch * output_dim).map(|k| 0.5 + 0.4 * cell(k, 11)).collect();
    (xs, ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_the_requested_shapes() {
        let (x, y) = regression(30, 5);
        assert_eq!((x.rows(), x.cols(), y.len()), (30, 5, 30));
        let (x, y) = stacked(10, 3);
        assert_eq!((x.rows(), x.cols(), y.len()), (10, 96, 10));
        let (xs, ys) = sequences(4, 6, 3, 2);
        assert_eq!((xs.len(), ys.len()), (72, 8));
        assert!(x.as_slice().iter().chain(&y).all(|v| v.is_finite()));
    }
}

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Analytic signal of a real trace: the FFT is zeroed at negative
/// frequencies and doubled at positive ones.
pub fn analytic_trace(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        let h = if k == 0 || (n % 2 == 0 && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *v *= h / n as f64;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

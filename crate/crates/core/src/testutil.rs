//! Finite-difference helpers shared by the unit tests.

use ndarray::Array2;

/// Central differences with step `1e-6 · max(1, |x|)` per entry.
pub fn fd_grad(f: impl Fn(&Array2<f64>) -> f64, x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    let mut xp = x.clone();
    for ((r, c), &v) in x.indexed_iter() {
        let h = 1e-6 * v.abs().max(1.0);
        xp[[r, c]] = v + h;
        let fp = f(&xp);
        xp[[r, c]] = v - h;
        let fm = f(&xp);
        xp[[r, c]] = v;
        out[[r, c]] = (fp - fm) / (2.0 * h);
    }
    out
}

pub fn fd_close(analytic: &Array2<f64>, fd: &Array2<f64>) -> bool {
    analytic.iter().zip(fd.iter()).all(|(a, b)| (a - b).abs() <= 1e-7 + 1e-5 * b.abs())
}

pub fn assert_fd_close(analytic: &Array2<f64>, fd: &Array2<f64>) {
    assert_eq!(analytic.dim(), fd.dim());
    for ((idx, a), b) in analytic.indexed_iter().zip(fd.iter()) {
        assert!((a - b).abs() <= 1e-7 + 1e-5 * b.abs(), "entry {idx:?}: analytic {a} vs fd {b}");
    }
}

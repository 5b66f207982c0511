//! Plain-text export helpers shared by the matrix types.
//!
//! Floats are written with 17 significant digits so that every `f64`
//! round-trips exactly.

use std::fmt::Write;

use ndarray::ArrayView2;

/// `{:.16e}`: one digit before the point plus sixteen after.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV with a header row `prefix0,prefix1,...` and one line per matrix row.
pub fn matrix_csv(m: &ArrayView2<f64>, prefix: &str) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Single-column CSV.
pub fn column_csv(name: &str, values: &[f64]) -> String {
    let mut out = String::with_capacity(24 * (values.len() + 1));
    out.push_str(name);
    out.push('\n');
    for &v in values {
        let _ = writeln!(out, "{}", fmt_f64(v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_layout() {
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        let csv = matrix_csv(&m.view(), "c");
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "c0,c1");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2].split(',').next().unwrap().parse::<f64>().unwrap(), 3.0);
    }
}

use super::{Grid, KernelKind};

/// Green kernel `G(x_i, x_j)` on the grid.
pub fn kernel(grid: &Grid, i: usize, j: usize) -> f64 {
    let x = grid.nodes();
    let l = grid.left();
    let (a, b) = if x[i] <= x[j] { (x[i], x[j]) } else { (x[j], x[i]) };
    match grid.kind() {
        KernelKind::OneSidedAbsorbZero => a - l,
        KernelKind::TwoSidedAbsorb => {
            let r = grid.right();
            (a - l) * (r - b) / (r - l)
        }
    }
}

/// `(Kw)_i = Σ_j G(x_i, x_j) w_j` in O(n) by prefix sums.
pub fn apply_kernel(grid: &Grid, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    apply_kernel_into(grid, w, &mut out);
    out
}

pub(crate) fn apply_kernel_into(grid: &Grid, w: &[f64], out: &mut [f64]) {
    let x = grid.nodes();
    let n = x.len();
    assert_eq!(w.len(), n, "weight vector does not match grid");
    let l = grid.left();
    match grid.kind() {
        KernelKind::OneSidedAbsorbZero => {
            // out_i = Σ_{j≤i} (x_j-l) w_j + (x_i-l) Σ_{j>i} w_j
            let mut suffix = 0.0;
            for i in (0..n).rev() {
                out[i] = suffix;
                suffix += w[i];
            }
            let mut prefix = 0.0;
            for i in 0..n {
                prefix += (x[i] - l) * w[i];
                out[i] = prefix + (x[i] - l) * out[i];
            }
        }
        KernelKind::TwoSidedAbsorb => {
            let r = grid.right();
            let width = r - l;
            let mut suffix = 0.0;
            for i in (0..n).rev() {
                out[i] = suffix;
                suffix += (r - x[i]) * w[i];
            }
            let mut prefix = 0.0;
            for i in 0..n {
                prefix += (x[i] - l) * w[i];
                out[i] = ((r - x[i]) * prefix + (x[i] - l) * out[i]) / width;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Interval, SpeedMeasure};
    use crate::solver::build_grid;

    fn dense(grid: &Grid, w: &[f64]) -> Vec<f64> {
        (0..grid.len())
            .map(|i| (0..grid.len()).map(|j| kernel(grid, i, j) * w[j]).sum())
            .collect()
    }

    #[test]
    fn kernel_values() {
        let m = SpeedMeasure::lebesgue(Interval::new(0.0, 1.0).unwrap(), vec![]).unwrap();
        let g = build_grid(&m, 16, None).unwrap();
        let (i, j) = (7, 7);
        let x = g.nodes()[i];
        assert!((kernel(&g, i, j) - x * (1.0 - x)).abs() < 1e-15);
        let m = SpeedMeasure::lebesgue(Interval::new(-1.0, 1.0).unwrap(), vec![]).unwrap();
        let g = build_grid(&m, 17, None).unwrap();
        assert_eq!(g.nodes()[8], 0.0);
        assert!((kernel(&g, 8, 8) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn prefix_sums_match_dense_product() {
        let m = SpeedMeasure::from_expr(Interval::new(-1.0, 2.0).unwrap(), "1 + x^2", vec![]).unwrap();
        let g = build_grid(&m, 40, None).unwrap();
        let w: Vec<f64> = (0..40).map(|i| ((i * 7 % 11) as f64).sin().abs()).collect();
        for (a, b) in apply_kernel(&g, &w).iter().zip(dense(&g, &w)) {
            assert!((a - b).abs() < 1e-13 * b.abs().max(1.0));
        }
        let m = SpeedMeasure::from_expr(Interval::half_line(0.0), "if(x<1, 1, x^-3)", vec![]).unwrap();
        let g = build_grid(&m, 64, Some(1e5)).unwrap();
        let w: Vec<f64> = (0..64).map(|i| 1.0 / (1.0 + i as f64)).collect();
        for (a, b) in apply_kernel(&g, &w).iter().zip(dense(&g, &w)) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }
}

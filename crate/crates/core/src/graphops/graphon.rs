use std::io::Write;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use super::{Graphop, GraphopMetadata, NetworkSpace};
use crate::error::{check_len, invalid, Error, Result};

/// Symmetric kernel `W(ξ_j, ξ_k)` evaluated on the nodes of a network space.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphonKernel {
    values: Array2<f64>,
    asymmetry: f64,
}

impl GraphonKernel {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Dimension {
                context: "graphon kernel (square)",
                expected: values.nrows(),
                found: values.ncols(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("kernel", "entries must be finite"));
        }
        let asymmetry = values
            .indexed_iter()
            .fold(0.0f64, |m, ((i, j), v)| m.max((v - values[[j, i]]).abs()));
        Ok(Self { values, asymmetry })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n, n), |(i, j)| f(i, j)))
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest `|W(i, j) - W(j, i)|`.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn is_symmetric(&self) -> bool {
        self.asymmetry <= 1e-12 * self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }

    /// Dense CSV dump, one kernel row per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Exponents of the power-law graphon and of its random-graph samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawParams {
    alpha: f64,
    beta_edge: f64,
}

impl PowerLawParams {
    pub fn new(alpha: f64, beta_edge: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !(beta_edge > 2.0 * alpha - 1.0 && beta_edge < 2.0 * alpha) {
            return Err(invalid(
                "beta_edge",
                format!("must lie in ({}, {}), got {beta_edge}", 2.0 * alpha - 1.0, 2.0 * alpha),
            ));
        }
        Ok(Self { alpha, beta_edge })
    }

    /// Parameters for the limit graphon only; the edge exponent is set to the
    /// midpoint of its admissible interval.
    pub fn graphon(alpha: f64) -> Result<Self> {
        Self::new(alpha, 2.0 * alpha - 0.5)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta_edge(&self) -> f64 {
        self.beta_edge
    }
}

/// `W_α(ξ, ξ̃) = (1-α)² (ξ ξ̃)^{-α}` on midpoint nodes `ξ_k = (k - 1/2)/m`.
pub fn power_law_graphon(params: PowerLawParams, m: usize) -> Result<(NetworkSpace, GraphonKernel)> {
    if m < 2 {
        return Err(invalid("m", "power-law graphon needs at least 2 nodes"));
    }
    let space = NetworkSpace::interval_midpoints(m)?;
    let alpha = params.alpha();
    let scale = (1.0 - alpha).powi(2);
    let factors: Vec<f64> = space
        .coords()
        .expect("interval nodes carry coordinates")
        .iter()
        .map(|c| c[0].powf(-alpha))
        .collect();
    let kernel = GraphonKernel::from_fn(m, |i, j| scale * factors[i] * factors[j])?;
    Ok((space, kernel))
}

/// `W ≡ p`, the Erdős–Rényi limit.
pub fn constant_graphon(space: &NetworkSpace, p: f64) -> Result<GraphonKernel> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(invalid("p", format!("must be a nonnegative number, got {p}")));
    }
    GraphonKernel::new(Array2::from_elem((space.len(), space.len()), p))
}

/// `(∫∫ |W|^p dμ dμ)^{1/p}` by node quadrature, or `max |W|` for `p = ∞`.
pub fn graphon_norm(kernel: &GraphonKernel, space: &NetworkSpace, p: f64) -> Result<f64> {
    check_len("graphon_norm", space.len(), kernel.len())?;
    if p.is_nan() || p < 1.0 {
        return Err(invalid("p", format!("must satisfy 1 <= p <= inf, got {p}")));
    }
    let values = kernel.values();
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let w = space.weights();
    let mut total = 0.0;
    for ((i, j), v) in values.indexed_iter() {
        total += w[i] * w[j] * v.abs().powf(p);
    }
    Ok(total.powf(1.0 / p))
}

/// Integral operator `(A f)_j = Σ_k W(ξ_j, ξ_k) f_k μ_k`.
#[derive(Clone, Debug)]
pub struct GraphonOperator {
    space: NetworkSpace,
    kernel: GraphonKernel,
    weighted: Array2<f64>,
    l2_norm: f64,
}

pub fn graphon_operator(kernel: GraphonKernel, space: NetworkSpace) -> Result<GraphonOperator> {
    check_len("graphon_operator", space.len(), kernel.len())?;
    if !kernel.is_symmetric() {
        return Err(Error::Asymmetric {
            what: "graphon kernel",
            defect: kernel.asymmetry(),
        });
    }
    if kernel.values().iter().any(|v| *v < 0.0) {
        return Err(invalid("kernel", "graphon entries must be nonnegative"));
    }
    let w = space.weights();
    let weighted = Array2::from_shape_fn((space.len(), space.len()), |(i, j)| kernel.values[[i, j]] * w[j]);
    let l2_norm = graphon_norm(&kernel, &space, 2.0)?;
    Ok(GraphonOperator {
        space,
        kernel,
        weighted,
        l2_norm,
    })
}

impl GraphonOperator {
    pub fn kernel(&self) -> &GraphonKernel {
        &self.kernel
    }
}

impl Graphop for GraphonOperator {
    fn space(&self) -> &NetworkSpace {
        &self.space
    }

    fn apply_rows(&self, input: ArrayView2<'_, f64>, mut output: ArrayViewMut2<'_, f64>) {
        general_mat_mul(1.0, &self.weighted, &input, 0.0, &mut output);
    }

    fn label(&self) -> String {
        format!("graphon({} nodes)", self.space.len())
    }

    fn metadata(&self) -> GraphopMetadata {
        GraphopMetadata {
            regularity: None,
            norm_bound: Some(self.l2_norm),
        }
    }

    fn to_dense(&self) -> Array2<f64> {
        self.weighted.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::super::{check_c_regular, norm_infty_to_1, numerical_radius, SpaceKind};
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_kernel_averages() {
        let space = NetworkSpace::new(SpaceKind::Custom, vec![0.1, 0.2, 0.3, 0.4], vec![]).unwrap();
        let op = graphon_operator(constant_graphon(&space, 1.0).unwrap(), space.clone()).unwrap();
        let f = [1.0, -2.0, 4.0, 0.5];
        let mean = space.mean(&f);
        for v in op.apply(&f) {
            assert_abs_diff_eq!(v, mean, epsilon = 1e-15);
        }
    }

    #[test]
    fn constant_p_on_four_nodes() {
        let space = NetworkSpace::uniform(SpaceKind::Custom, 4).unwrap();
        let op = graphon_operator(constant_graphon(&space, 0.3).unwrap(), space.clone()).unwrap();
        for v in op.apply(&[1.0; 4]) {
            assert_abs_diff_eq!(v, 0.3, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(numerical_radius(&op, 1e-13).unwrap().value, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(check_c_regular(&op, 1e-12).unwrap(), 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_infty_to_1(&op).unwrap(), 0.3, epsilon = 1e-15);
        let kernel = op.kernel();
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert_abs_diff_eq!(graphon_norm(kernel, &space, p).unwrap(), 0.3, epsilon = 1e-14);
        }
    }

    #[test]
    fn power_law_row_sums_match_closed_form() {
        let alpha = 0.25;
        let (space, kernel) = power_law_graphon(PowerLawParams::graphon(alpha).unwrap(), 64).unwrap();
        let op = graphon_operator(kernel, space.clone()).unwrap();
        let a1 = op.apply(&vec![1.0; 64]);
        let coords = space.coords().unwrap();
        // Midpoint quadrature of the integrable singularity ξ^{-α} carries an
        // O(m^{α-1}) error; compare in the weighted L1 sense and pointwise
        // away from the origin.
        let exact: Vec<f64> = coords.iter().map(|c| (1.0 - alpha) * c[0].powf(-alpha)).collect();
        let diff: Vec<f64> = a1.iter().zip(&exact).map(|(a, e)| a - e).collect();
        assert!(space.norm1(&diff) < 0.02);
        for k in 8..64 {
            assert!((a1[k] - exact[k]).abs() / exact[k] < 0.03, "node {k}");
        }
        assert!(check_c_regular(&op, 1e-6).is_none());
    }

    #[test]
    fn power_law_l2_norm_converges_from_below() {
        let closed = 0.5625 / 0.5;
        let mut last = 0.0;
        for m in [64, 128, 256, 512] {
            let (space, kernel) = power_law_graphon(PowerLawParams::graphon(0.25).unwrap(), m).unwrap();
            let norm = graphon_norm(&kernel, &space, 2.0).unwrap();
            assert!(norm > last && norm < closed);
            last = norm;
        }
        assert!((last - closed).abs() / closed < 0.02);
    }

    #[test]
    fn power_law_l2_norm_diverges_above_one_half() {
        let norms: Vec<f64> = [64, 128, 256, 512, 1024]
            .iter()
            .map(|&m| {
                let (space, kernel) = power_law_graphon(PowerLawParams::graphon(0.6).unwrap(), m).unwrap();
                graphon_norm(&kernel, &space, 2.0).unwrap()
            })
            .collect();
        for pair in norms.windows(2) {
            assert!(pair[1] > pair[0] * 1.05, "{norms:?}");
        }
    }

    #[test]
    fn norm_monotone_in_p() {
        let (space, kernel) = power_law_graphon(PowerLawParams::graphon(0.3).unwrap(), 32).unwrap();
        let mut last = 0.0;
        for p in [1.0, 1.5, 2.0, 4.0, 8.0, f64::INFINITY] {
            let n = graphon_norm(&kernel, &space, p).unwrap();
            assert!(n >= last - 1e-14);
            last = n;
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PowerLawParams::new(1.2, 0.5).is_err());
        assert!(PowerLawParams::new(0.25, 0.6).is_err());
        assert!(PowerLawParams::new(0.25, -0.6).is_err());
        assert!(power_law_graphon(PowerLawParams::graphon(0.25).unwrap(), 1).is_err());
        let space = NetworkSpace::uniform(SpaceKind::Custom, 2).unwrap();
        let skew = GraphonKernel::new(ndarray::array![[0.0, 1.0], [0.5, 0.0]]).unwrap();
        assert!(matches!(graphon_operator(skew, space.clone()), Err(Error::Asymmetric { .. })));
        let k = constant_graphon(&space, 1.0).unwrap();
        assert!(graphon_norm(&k, &space, 0.5).is_err());
    }

    #[test]
    fn csv_dump_round_trips() {
        let kernel = GraphonKernel::new(ndarray::array![[0.25, 1.0 / 3.0], [1.0 / 3.0, 2.0]]).unwrap();
        let mut buf = Vec::new();
        kernel.write_csv(&mut buf).unwrap();
        let parsed: Vec<Vec<f64>> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed, vec![vec![0.25, 1.0 / 3.0], vec![1.0 / 3.0, 2.0]]);
    }
}

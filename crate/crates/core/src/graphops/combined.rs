use std::sync::Arc;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};

use super::{Graphop, GraphopMetadata, NetworkSpace};
use crate::error::{check_len, Result};

/// `A1 ⊗ A2` on `Ω1 × Ω2`, with node `(i1, i2)` stored at `i1 * n2 + i2`.
#[derive(Clone, Debug)]
pub struct CombinedGraphop {
    first: Arc<dyn Graphop>,
    second: Arc<dyn Graphop>,
    space: NetworkSpace,
}

impl CombinedGraphop {
    pub fn new(first: Arc<dyn Graphop>, second: Arc<dyn Graphop>) -> Result<Self> {
        let space = NetworkSpace::product(first.space(), second.space())?;
        Ok(Self { first, second, space })
    }

    pub fn first(&self) -> &dyn Graphop {
        self.first.as_ref()
    }

    pub fn second(&self) -> &dyn Graphop {
        self.second.as_ref()
    }
}

/// Applies `A2` along the second index, then `A1` along the first.
pub(crate) fn apply_product(
    first: &dyn Graphop,
    second: &dyn Graphop,
    input: ArrayView2<'_, f64>,
    mut output: ArrayViewMut2<'_, f64>,
) {
    let n1 = first.space().len();
    let n2 = second.space().len();
    let batch = input.ncols();
    let mut stage = Array2::zeros((n1 * n2, batch));
    for i1 in 0..n1 {
        let rows = ndarray::s![i1 * n2..(i1 + 1) * n2, ..];
        second.apply_rows(input.slice(rows), stage.slice_mut(rows));
    }
    // viewing (n1 * n2, batch) as (n1, n2 * batch) exposes the first index
    let stage = stage
        .into_shape_with_order((n1, n2 * batch))
        .expect("row-major stage buffer");
    let mut result = Array2::zeros((n1, n2 * batch));
    first.apply_rows(stage.view(), result.view_mut());
    let result = result
        .into_shape_with_order((n1 * n2, batch))
        .expect("row-major result buffer");
    output.assign(&result);
}

impl Graphop for CombinedGraphop {
    fn space(&self) -> &NetworkSpace {
        &self.space
    }

    fn apply_rows(&self, input: ArrayView2<'_, f64>, output: ArrayViewMut2<'_, f64>) {
        apply_product(self.first.as_ref(), self.second.as_ref(), input, output);
    }

    fn label(&self) -> String {
        format!("{} x {}", self.first.label(), self.second.label())
    }

    fn metadata(&self) -> GraphopMetadata {
        let (a, b) = (self.first.metadata(), self.second.metadata());
        GraphopMetadata {
            regularity: a.regularity.zip(b.regularity).map(|(x, y)| x * y),
            norm_bound: a.norm_bound.zip(b.norm_bound).map(|(x, y)| x * y),
        }
    }
}

/// `(A1 A2) f` for `f` indexed by the product node set.
pub fn combined_apply(first: &dyn Graphop, second: &dyn Graphop, f: &[f64]) -> Result<Vec<f64>> {
    let n = first.space().len() * second.space().len();
    check_len("combined_apply", n, f.len())?;
    let input = ArrayView2::from_shape((n, 1), f).expect("contiguous column");
    let mut out = Array2::zeros((n, 1));
    apply_product(first, second, input, out.view_mut());
    Ok(out.into_raw_vec_and_offset().0)
}

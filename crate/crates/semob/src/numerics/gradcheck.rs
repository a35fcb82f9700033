//! Finite-difference verification of tape gradients.

use crate::error::Result;
use crate::numerics::graph::{Graph, NodeId};
use crate::numerics::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-6;

/// Compare analytic gradients of a scalar function against central
/// finite differences. Returns the max over all input elements of
/// `|g_a - g_fd| / max(1e-8, |g_a| + |g_fd|)`.
///
/// `f` must deterministically build a one-element output node from the
/// leaves it is handed.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        Ok(g.value(out).item())
    };

    let analytic: Vec<Tensor> = {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &ids)?;
        g.backward(out)?;
        ids.iter().map(|&id| g.grad(id)).collect()
    };

    let mut max_rel = 0.0_f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, grad) in analytic.iter().enumerate() {
        for ei in 0..grad.numel() {
            let orig = work[ti].data()[ei];
            work[ti].data_mut()[ei] = orig + eps;
            let fp = eval(&work)?;
            work[ti].data_mut()[ei] = orig - eps;
            let fm = eval(&work)?;
            work[ti].data_mut()[ei] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            let ga = grad.data()[ei];
            let rel = (ga - fd).abs() / (1e-8_f64).max(ga.abs() + fd.abs());
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}

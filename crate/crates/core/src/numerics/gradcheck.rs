//! Finite-difference verification of analytic gradients.

use super::graph::{Graph, NodeId};
use super::tensor::{NumericsError, Tensor};

const STEP: f64 = 1e-6;

/// Compares the backward pass of `f` against central finite differences.
///
/// `f` rebuilds the scalar loss from scratch for each evaluation, so it must
/// be a pure function of the parameter tensors it is handed. Returns the
/// maximum over all coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor]) -> Result<f64, NumericsError>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
{
    let evaluate = |tensors: &[Tensor]| -> Result<f64, NumericsError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = tensors.iter().map(|t| g.input(t.clone())).collect();
        let loss = f(&mut g, &ids)?;
        let value = g.value(loss);
        if value.numel() != 1 {
            return Err(NumericsError::InvalidArgument {
                op: "grad_check",
                reason: format!("loss must be scalar, got shape {:?}", value.shape()),
            });
        }
        let v = value.values()[0];
        if !v.is_finite() {
            return Err(NumericsError::NonFinite { op: "grad_check" });
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&mut g, &ids)?;
    if g.value(loss).numel() != 1 || !g.value(loss).values()[0].is_finite() {
        evaluate(params)?;
    }
    let grads = g.backward(loss)?;

    let mut max_rel = 0.0_f64;
    for (pi, param) in params.iter().enumerate() {
        let analytic = grads.wrt(ids[pi]).values().to_vec();
        for ci in 0..param.numel() {
            let mut plus = params.to_vec();
            plus[pi].values_mut()[ci] += STEP;
            let mut minus = params.to_vec();
            minus[pi].values_mut()[ci] -= STEP;
            let numeric = (evaluate(&plus)? - evaluate(&minus)?) / (2.0 * STEP);
            let denom = (analytic[ci].abs() + numeric.abs()).max(1e-8);
            max_rel = max_rel.max((analytic[ci] - numeric).abs() / denom);
        }
    }
    Ok(max_rel)
}

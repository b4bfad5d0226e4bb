//! Gradient of the surrogate misfit with respect to the physical material
//! parameters: the residual is backpropagated through the network to its
//! input, with the output denormalization folded into the seed and the
//! input normalization folded into the final scaling.

use alloc::vec;
use alloc::vec::Vec;

use crate::elastic::ParameterPoint;
use crate::error::{Error, Result};
use crate::linalg::matvec_transpose_rowmajor;
use crate::network::{forward, softplus_derivative, DenseNetwork, ForwardTrace};

/// Surrogate misfit and its derivative with respect to physical (E, ν).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputGradientResult {
    pub value: f64,
    pub gradient: [f64; 2],
}

/// One forward pass shared by the value and the gradient: raw-space
/// residual against the observations and the trace for backpropagation.
fn residual_and_trace(
    net: &DenseNetwork,
    p: &ParameterPoint,
    u_obs: &[f64],
) -> Result<(f64, Vec<f64>, ForwardTrace)> {
    if u_obs.len() != net.output_dim() {
        return Err(Error::ShapeMismatch {
            context: "observation vector",
            expected: net.output_dim(),
            got: u_obs.len(),
        });
    }
    let (out, trace) = forward(net, p)?;
    let residual: Vec<f64> = out.iter().zip(u_obs).map(|(o, y)| o - y).collect();
    let value = 0.5 * residual.iter().map(|r| r * r).sum::<f64>();
    Ok((value, residual, trace))
}

/// ½‖N(p) − u_obs‖² in raw observation coordinates.
pub fn misfit_value(net: &DenseNetwork, p: &ParameterPoint, u_obs: &[f64]) -> Result<f64> {
    residual_and_trace(net, p, u_obs).map(|(value, _, _)| value)
}

/// Backpropagates the misfit residual to the network input: ρ^L is the raw
/// residual times the output scale, ρ^l = (W^{l+1})ᵀ(ρ^{l+1} ∘ σ′(z^{l+1}))
/// with identity σ′ on the output layer, and the physical gradient is
/// ρ⁰ divided by the input scale.  The value comes from the same forward
/// pass as [`misfit_value`], so the two agree bit for bit.
pub fn backprop_to_input(
    net: &DenseNetwork,
    p: &ParameterPoint,
    u_obs: &[f64],
) -> Result<InputGradientResult> {
    let (value, residual, trace) = residual_and_trace(net, p, u_obs)?;
    let l_count = net.layer_count();
    let mut rho: Vec<f64> =
        residual.iter().zip(&net.norm.output_scale).map(|(r, s)| r * s).collect();
    for l in (0..l_count).rev() {
        let t: Vec<f64> = if l + 1 == l_count {
            rho
        } else {
            rho.iter().zip(&trace.zs[l]).map(|(r, z)| r * softplus_derivative(*z)).collect()
        };
        let rows = net.layer_sizes[l + 1];
        let cols = net.layer_sizes[l];
        let mut next = vec![0.0; cols];
        matvec_transpose_rowmajor(&net.weights[l], rows, cols, &t, &mut next);
        rho = next;
    }
    let gradient = [rho[0] / net.norm.input_scale[0], rho[1] / net.norm.input_scale[1]];
    if !(value.is_finite() && gradient[0].is_finite() && gradient[1].is_finite()) {
        return Err(Error::NonFinite { context: "input gradient".into() });
    }
    Ok(InputGradientResult { value, gradient })
}

//! Central finite-difference gradient verification. The oracle only ever
//! evaluates the forward computation, so it is independent of the reverse
//! sweep it checks.

use super::graph::{Graph, NodeId};
use super::tensor::{Float, Tensor};
use super::NumericsError;

/// Tolerances for one check. Defaults match the build's float width.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub eps: Float,
    pub rtol: Float,
    /// Absolute floor so near-zero gradients are not judged on relative
    /// error alone (finite differences bottom out near sqrt of machine eps).
    pub atol: Float,
}

impl Default for GradCheck {
    #[cfg(not(feature = "f64"))]
    fn default() -> Self {
        GradCheck {
            eps: 1e-3,
            rtol: 1e-2,
            atol: 1e-3,
        }
    }
    #[cfg(feature = "f64")]
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            rtol: 1e-4,
            atol: 1e-9,
        }
    }
}

/// Worst observed deviation, for reporting.
#[derive(Debug, Clone, Copy, Default)]
pub struct GradReport {
    pub max_abs_diff: Float,
    pub max_rel_diff: Float,
}

/// Compare analytic gradients of `build` (a scalar-valued function of the
/// input tensors, expressed in graph ops) against central differences.
///
/// `build` must be deterministic. Errors report the first failing input
/// element.
pub fn check_gradients<F>(
    inputs: &[Tensor],
    build: F,
    cfg: GradCheck,
) -> Result<GradReport, String>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
{
    let eval = |tensors: &[Tensor]| -> Result<Float, String> {
        let mut g = Graph::new();
        let nodes: Vec<NodeId> = tensors.iter().map(|t| g.leaf(t.clone())).collect();
        let loss = build(&mut g, &nodes).map_err(|e| e.to_string())?;
        if !g.value(loss).is_scalar() {
            return Err(format!(
                "build returned non-scalar loss of shape {:?}",
                g.value(loss).shape()
            ));
        }
        Ok(g.value(loss).item())
    };

    // Analytic gradients.
    let mut g = Graph::new();
    let nodes: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = build(&mut g, &nodes).map_err(|e| e.to_string())?;
    g.backward(loss).map_err(|e| e.to_string())?;

    let mut report = GradReport::default();
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = g
            .grad(nodes[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape()));
        for j in 0..input.len() {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + cfg.eps;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - cfg.eps;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * cfg.eps);
            let ad = analytic.data()[j];
            let abs = (fd - ad).abs();
            let rel = abs / fd.abs().max(ad.abs()).max(1e-12);
            report.max_abs_diff = report.max_abs_diff.max(abs);
            report.max_rel_diff = report.max_rel_diff.max(rel);
            if abs > cfg.atol + cfg.rtol * fd.abs().max(ad.abs()) {
                return Err(format!(
                    "input {i} element {j}: analytic {ad} vs finite-difference {fd} \
                     (abs diff {abs}, eps {})",
                    cfg.eps
                ));
            }
        }
    }
    Ok(report)
}

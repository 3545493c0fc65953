use serde::{Deserialize, Serialize};

use super::sensor::RayScan;
use crate::error::{Error, Result};

/// One-hidden-layer tanh network from normalized ray depths to primitive
/// scores.
///
/// Parameters are laid out as `W1` (hidden x inputs, row-major), `b1`,
/// `W2` (outputs x hidden, row-major), `b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArchitecture {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl PolicyArchitecture {
    pub fn n_params(&self) -> usize {
        self.hidden * self.inputs + self.hidden + self.outputs * self.hidden + self.outputs
    }
}

/// Index of the highest-scoring primitive; ties go to the lowest index.
/// Depths enter the network divided by `d_max`.
pub fn policy_forward(
    arch: &PolicyArchitecture,
    theta: &[f64],
    scan: &RayScan,
    d_max: f64,
) -> Result<usize> {
    if theta.len() != arch.n_params() {
        return Err(Error::Dimension {
            what: "policy parameters",
            expected: arch.n_params(),
            got: theta.len(),
        });
    }
    if scan.depths.len() != arch.inputs {
        return Err(Error::Dimension {
            what: "ray scan",
            expected: arch.inputs,
            got: scan.depths.len(),
        });
    }
    let (w1, rest) = theta.split_at(arch.hidden * arch.inputs);
    let (b1, rest) = rest.split_at(arch.hidden);
    let (w2, b2) = rest.split_at(arch.outputs * arch.hidden);

    let mut hidden = [0.0f64; 64];
    let mut hidden_vec;
    let h: &mut [f64] = if arch.hidden <= hidden.len() {
        &mut hidden[..arch.hidden]
    } else {
        hidden_vec = vec![0.0; arch.hidden];
        &mut hidden_vec
    };
    for (j, hj) in h.iter_mut().enumerate() {
        let row = &w1[j * arch.inputs..(j + 1) * arch.inputs];
        let pre: f64 = row
            .iter()
            .zip(&scan.depths)
            .map(|(w, d)| w * (d / d_max))
            .sum::<f64>()
            + b1[j];
        *hj = pre.tanh();
    }

    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for k in 0..arch.outputs {
        let row = &w2[k * arch.hidden..(k + 1) * arch.hidden];
        let score = row.iter().zip(h.iter()).map(|(w, x)| w * x).sum::<f64>() + b2[k];
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    Ok(best)
}

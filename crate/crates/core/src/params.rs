//! Trainable parameters: shapes, initialization, and the flat layout used by
//! the optimizer.

use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::rng::Rng;

/// All trainable weights and biases of the network.
///
/// Shapes (layers indexed bottom-up, d_n = nodes_per_layer[n]):
/// - `w_r[n]`: d_n × d_n recurrent matrix; prior input is `w_r · tanh(h_prev)`.
/// - `w_hh[n]`: d_{n+1} × d_n top-down matrix between layers n+1 and n.
///   Applied transposed in the top-down pass and untransposed when lifting
///   errors bottom-up, so generation and error feedback share weights.
/// - `b_r[n]`: d_n bias.
/// - `w_c`: K × d_top class projection into the top layer.
/// - `w_o`: d_0 × D output matrix; the prediction is `w_oᵀ · tanh(h⁰) + b_o`
///   and the sensory error is lifted back through `w_o`.
/// - `b_o`: D output bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub w_r: Vec<Mat>,
    pub w_hh: Vec<Mat>,
    pub b_r: Vec<Vec<f64>>,
    pub w_c: Mat,
    pub w_o: Mat,
    pub b_o: Vec<f64>,
}

impl NetworkParams {
    /// Zero-valued parameters with shapes from the config. Also serves as the
    /// gradient accumulator.
    pub fn zeros(config: &ModelConfig) -> Self {
        let nodes = &config.nodes_per_layer;
        let n = nodes.len();
        NetworkParams {
            w_r: nodes.iter().map(|&d| Mat::zeros(d, d)).collect(),
            w_hh: (0..n.saturating_sub(1))
                .map(|i| Mat::zeros(nodes[i + 1], nodes[i]))
                .collect(),
            b_r: nodes.iter().map(|&d| vec![0.0; d]).collect(),
            w_c: Mat::zeros(config.num_classes, nodes[n - 1]),
            w_o: Mat::zeros(nodes[0], config.output_dim),
            b_o: vec![0.0; config.output_dim],
        }
    }

    /// Seeded initialization: each matrix uniform in ±1/√fan_in, biases zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let mut params = NetworkParams::zeros(config);
        let nodes = &config.nodes_per_layer;
        let mut fill = |m: &mut Mat, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in m.data_mut() {
                *v = rng.uniform_in(-bound, bound);
            }
        };
        for (n, m) in params.w_r.iter_mut().enumerate() {
            fill(m, nodes[n]);
        }
        for (n, m) in params.w_hh.iter_mut().enumerate() {
            fill(m, nodes[n + 1]);
        }
        fill(&mut params.w_c, config.num_classes);
        fill(&mut params.w_o, nodes[0]);
        params
    }

    pub fn validate_shapes(&self, config: &ModelConfig) -> Result<()> {
        let nodes = &config.nodes_per_layer;
        let n = nodes.len();
        if self.w_r.len() != n || self.b_r.len() != n || self.w_hh.len() != n - 1 {
            return Err(Error::schema(format!(
                "parameter list lengths (w_r {}, w_hh {}, b_r {}) do not match {} layers",
                self.w_r.len(),
                self.w_hh.len(),
                self.b_r.len(),
                n
            )));
        }
        for (i, m) in self.w_r.iter().enumerate() {
            if m.rows() != nodes[i] || m.cols() != nodes[i] {
                return Err(Error::schema(format!(
                    "w_r[{i}] has shape {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    nodes[i],
                    nodes[i]
                )));
            }
        }
        for (i, m) in self.w_hh.iter().enumerate() {
            if m.rows() != nodes[i + 1] || m.cols() != nodes[i] {
                return Err(Error::schema(format!(
                    "w_hh[{i}] has shape {}x{}, expected {}x{}",
                    m.rows(),
                    m.cols(),
                    nodes[i + 1],
                    nodes[i]
                )));
            }
        }
        for (i, b) in self.b_r.iter().enumerate() {
            if b.len() != nodes[i] {
                return Err(Error::schema(format!(
                    "b_r[{i}] has {} entries, expected {}",
                    b.len(),
                    nodes[i]
                )));
            }
        }
        if self.w_c.rows() != config.num_classes || self.w_c.cols() != nodes[n - 1] {
            return Err(Error::schema(format!(
                "w_c has shape {}x{}, expected {}x{}",
                self.w_c.rows(),
                self.w_c.cols(),
                config.num_classes,
                nodes[n - 1]
            )));
        }
        if self.w_o.rows() != nodes[0] || self.w_o.cols() != config.output_dim {
            return Err(Error::schema(format!(
                "w_o has shape {}x{}, expected {}x{}",
                self.w_o.rows(),
                self.w_o.cols(),
                nodes[0],
                config.output_dim
            )));
        }
        if self.b_o.len() != config.output_dim {
            return Err(Error::schema(format!(
                "b_o has {} entries, expected {}",
                self.b_o.len(),
                config.output_dim
            )));
        }
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.w_o.len()
            + self.b_o.len()
            + self.w_c.len()
            + self.w_hh.iter().map(Mat::len).sum::<usize>()
            + self.w_r.iter().map(Mat::len).sum::<usize>()
            + self.b_r.iter().map(Vec::len).sum::<usize>()
    }

    /// Name of the first parameter group containing a non-finite entry.
    pub fn first_non_finite(&self) -> Option<String> {
        if !self.w_o.all_finite() {
            return Some("w_o".into());
        }
        if !self.b_o.iter().all(|v| v.is_finite()) {
            return Some("b_o".into());
        }
        if !self.w_c.all_finite() {
            return Some("w_c".into());
        }
        for (i, m) in self.w_hh.iter().enumerate() {
            if !m.all_finite() {
                return Some(format!("w_hh[{i}]"));
            }
        }
        for (i, m) in self.w_r.iter().enumerate() {
            if !m.all_finite() {
                return Some(format!("w_r[{i}]"));
            }
        }
        for (i, b) in self.b_r.iter().enumerate() {
            if !b.iter().all(|v| v.is_finite()) {
                return Some(format!("b_r[{i}]"));
            }
        }
        None
    }

    /// Concatenate everything into one vector, in the fixed order
    /// w_o, b_o, w_c, w_hh (bottom pair first), w_r (bottom first), b_r.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        flat.extend_from_slice(self.w_o.data());
        flat.extend_from_slice(&self.b_o);
        flat.extend_from_slice(self.w_c.data());
        for m in &self.w_hh {
            flat.extend_from_slice(m.data());
        }
        for m in &self.w_r {
            flat.extend_from_slice(m.data());
        }
        for b in &self.b_r {
            flat.extend_from_slice(b);
        }
        flat
    }

    /// Inverse of [`NetworkParams::flatten`]; shapes are taken from `self`.
    pub fn unflatten_from(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::argument(format!(
                "flat vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        let take = |dst: &mut [f64], pos: &mut usize| {
            dst.copy_from_slice(&flat[*pos..*pos + dst.len()]);
            *pos += dst.len();
        };
        take(self.w_o.data_mut(), &mut pos);
        take(&mut self.b_o, &mut pos);
        take(self.w_c.data_mut(), &mut pos);
        for m in &mut self.w_hh {
            take(m.data_mut(), &mut pos);
        }
        for m in &mut self.w_r {
            take(m.data_mut(), &mut pos);
        }
        for b in &mut self.b_r {
            take(b, &mut pos);
        }
        Ok(())
    }
}

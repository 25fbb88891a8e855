//! Dense tanh network with a linear output layer and hand-written backprop.
//!
//! Parameters live in one flat vector, layer by layer: the `out x in` weight
//! matrix (row-major) followed by the `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations from one forward pass, input first.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an input layer")
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("layer sizes {sizes:?} need at least two non-zero entries")));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
        })
    }

    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn random(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut mlp = Self::zeros(sizes)?;
        let mut offset = 0;
        for w in sizes.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut mlp.params[offset..offset + fan_in * out + out] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += fan_in * out + out;
        }
        Ok(mlp)
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let mlp = Self::zeros(&sizes)?;
        if params.len() != mlp.params.len() {
            return Err(Error::Shape(format!(
                "layer sizes {sizes:?} need {} parameters, got {}",
                mlp.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Shape("parameters must be finite".into()));
        }
        Ok(Mlp { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::Shape(format!("network expects {} inputs, got {}", self.input_len(), x.len())));
        }
        Ok(())
    }

    /// `(offset, len, fan_in)` of each layer's block in the flat parameter vector.
    pub fn layer_spans(&self) -> Vec<(usize, usize, usize)> {
        let mut offset = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let len = w[0] * w[1] + w[1];
                let span = (offset, len, w[0]);
                offset += len;
                span
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.activations.pop().unwrap())
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let layers = self.layer_count();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &self.params[offset..offset + fan_in * out];
            let bias = &self.params[offset + fan_in * out..offset + fan_in * out + out];
            let input = &activations[l];
            let mut z: Vec<f64> = weights
                .chunks_exact(fan_in)
                .zip(bias)
                .map(|(row, b)| b + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>())
                .collect();
            if l + 1 < layers {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(z);
            offset += fan_in * out + out;
        }
        Ok(ForwardTrace { activations })
    }

    /// Accumulates `d(loss)/d(params)` into `grad`, given `d(loss)/d(output)`.
    pub fn backward(&self, trace: &ForwardTrace, d_output: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.layer_count();
        let mut delta = d_output.to_vec();
        let mut offset = self.params.len();
        for l in (0..layers).rev() {
            let (fan_in, out) = (self.sizes[l], self.sizes[l + 1]);
            offset -= fan_in * out + out;
            let input = &trace.activations[l];
            let w_off = offset;
            let b_off = offset + fan_in * out;
            for o in 0..out {
                let d = delta[o];
                grad[b_off + o] += d;
                if d != 0.0 {
                    let row = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += d * a);
                }
            }
            if l > 0 {
                // Propagate through W^T, then through tanh of the previous layer.
                let weights = &self.params[w_off..w_off + fan_in * out];
                let mut prev = vec![0.0; fan_in];
                for (row, d) in weights.chunks_exact(fan_in).zip(&delta) {
                    if *d != 0.0 {
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                    }
                }
                prev.iter_mut().zip(input).for_each(|(p, a)| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_errors() {
        assert!(Mlp::zeros(&[3]).is_err());
        assert!(Mlp::zeros(&[3, 0, 2]).is_err());
        let m = Mlp::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(m.param_count(), 3 * 4 + 4 + 4 * 2 + 2);
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(Mlp::from_parts(vec![3, 2], vec![0.0; 7]).is_err());
    }

    #[test]
    fn init_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Mlp::random(&[16, 8, 3], &mut rng).unwrap();
        let (first, rest) = m.params().split_at(16 * 8 + 8);
        assert!(first.iter().all(|p| p.abs() <= 0.25));
        assert!(rest.iter().all(|p| p.abs() <= 1.0 / 8f64.sqrt()));
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Mlp::random(&[4, 5, 3, 2], &mut rng).unwrap();
        let x = [0.3, -0.7, 1.1, 0.05];
        let upstream = [0.8, -1.3];
        let loss = |m: &Mlp| m.forward(&x).unwrap().iter().zip(&upstream).map(|(y, u)| y * u).sum::<f64>();
        let trace = m.forward_trace(&x).unwrap();
        let mut grad = vec![0.0; m.param_count()];
        m.backward(&trace, &upstream, &mut grad);
        let h = 1e-5;
        for i in 0..m.param_count() {
            let mut plus = m.clone();
            plus.params_mut()[i] += h;
            let mut minus = m.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", grad[i]);
        }
    }
}

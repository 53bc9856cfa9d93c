//! Continuation controller `u_Θ(λ)`: a ReLU perceptron with a scaled tanh
//! output, its reverse-mode pullback, and Adam.
//!
//! Parameters live in one flat vector ordered layer by layer, each layer as
//! its row-major `out × in` weight matrix followed by its bias.
//!
//! Checkpoint layout (little-endian):
//!
//! | bytes        | content                              |
//! |--------------|--------------------------------------|
//! | 4            | magic `EQCP`                         |
//! | u32          | format version (1)                   |
//! | u32          | number of layer sizes `s`            |
//! | s × u32      | layer sizes, input first             |
//! | out × f64    | output scale `u_max`                 |
//! | u64          | parameter count `p`                  |
//! | p × f64      | parameters                           |

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EQCP";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    layer_sizes: Vec<usize>,
    theta: Vec<f64>,
    u_max: Vec<f64>,
}

fn param_count_of(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Seed for the controller of one receding-horizon segment.
pub fn segment_rng(global_seed: u64, segment: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(global_seed);
    rng.set_stream(segment as u64 + 1);
    rng
}

impl ControllerParams {
    /// All-zero parameters, so `u ≡ 0`.
    pub fn zeros(layer_sizes: &[usize], u_max: &[f64]) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("bad layer sizes {layer_sizes:?}")));
        }
        let out = *layer_sizes.last().expect("nonempty");
        if u_max.len() != out || u_max.iter().any(|u| !(*u > 0.0) || !u.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "u_max needs {out} positive finite entries, got {u_max:?}"
            )));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            theta: vec![0.0; param_count_of(layer_sizes)],
            u_max: u_max.to_vec(),
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng>(layer_sizes: &[usize], u_max: &[f64], rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, u_max)?;
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut p.theta[offset..offset + fan_in * fan_out] {
                *v = rng.random_range(-a..a);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(p)
    }

    pub fn from_theta(layer_sizes: &[usize], u_max: &[f64], theta: Vec<f64>) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, u_max)?;
        if theta.len() != p.theta.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                p.theta.len(),
                theta.len()
            )));
        }
        p.theta = theta;
        Ok(p)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    pub fn u_max(&self) -> &[f64] {
        &self.u_max
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn with_theta(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.theta.len());
        Self {
            layer_sizes: self.layer_sizes.clone(),
            theta: theta.to_vec(),
            u_max: self.u_max.clone(),
        }
    }

    /// Activations of every layer (post-nonlinearity for hidden layers,
    /// pre-tanh for the output layer).
    fn activations(&self, lambda: f64) -> Vec<Vec<f64>> {
        let mut acts = vec![vec![lambda; self.input_dim()]];
        let last = self.layer_sizes.len() - 2;
        let mut offset = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.theta[offset..offset + n_in * n_out];
            let bias = &self.theta[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let input = acts.last().expect("nonempty");
            let mut out: Vec<f64> = (0..n_out)
                .map(|r| bias[r] + weights[r * n_in..(r + 1) * n_in].iter().zip(input).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l < last {
                for v in &mut out {
                    *v = v.max(0.0);
                }
            }
            acts.push(out);
            offset += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward(&self, lambda: f64) -> Vec<f64> {
        let acts = self.activations(lambda);
        acts.last()
            .expect("nonempty")
            .iter()
            .zip(&self.u_max)
            .map(|(a, m)| m * a.tanh())
            .collect()
    }

    /// Accumulate `(∂u/∂Θ)ᵀ v` into `grad`. Zero preactivations take ReLU
    /// subgradient 0.
    pub fn pullback_into(&self, lambda: f64, v: &[f64], grad: &mut [f64]) {
        assert_eq!(v.len(), self.output_dim());
        assert_eq!(grad.len(), self.theta.len());
        let acts = self.activations(lambda);
        let out = acts.last().expect("nonempty");
        let mut delta: Vec<f64> = out
            .iter()
            .zip(v)
            .zip(&self.u_max)
            .map(|((a, vi), m)| {
                let t = a.tanh();
                vi * m * (1.0 - t * t)
            })
            .collect();

        let mut offsets = Vec::with_capacity(self.layer_sizes.len() - 1);
        let mut offset = 0;
        for w in self.layer_sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        for l in (0..self.layer_sizes.len() - 1).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for r in 0..n_out {
                if delta[r] == 0.0 {
                    continue;
                }
                for c in 0..n_in {
                    grad[off + r * n_in + c] += delta[r] * input[c];
                }
                grad[off + n_in * n_out + r] += delta[r];
            }
            if l == 0 {
                break;
            }
            let weights = &self.theta[off..off + n_in * n_out];
            delta = (0..n_in)
                .map(|c| {
                    if input[c] > 0.0 {
                        (0..n_out).map(|r| weights[r * n_in + c] * delta[r]).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }

    pub fn pullback(&self, lambda: f64, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.theta.len()];
        self.pullback_into(lambda, v, &mut g);
        g
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &s in &self.layer_sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for u in &self.u_max {
            w.write_all(&u.to_le_bytes())?;
        }
        w.write_all(&(self.theta.len() as u64).to_le_bytes())?;
        for t in &self.theta {
            w.write_all(&t.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let bad = |reason: &str| Error::Malformed {
            path: "<checkpoint>".into(),
            reason: reason.into(),
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != VERSION {
            return Err(bad("unsupported version"));
        }
        r.read_exact(&mut b4)?;
        let n_layers = u32::from_le_bytes(b4) as usize;
        if !(2..=64).contains(&n_layers) {
            return Err(bad("implausible layer count"));
        }
        let mut sizes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            r.read_exact(&mut b4)?;
            sizes.push(u32::from_le_bytes(b4) as usize);
        }
        let out = *sizes.last().expect("nonempty");
        let mut u_max = Vec::with_capacity(out);
        for _ in 0..out {
            r.read_exact(&mut b8)?;
            u_max.push(f64::from_le_bytes(b8));
        }
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if count != param_count_of(&sizes) {
            return Err(bad("parameter count does not match layout"));
        }
        let mut theta = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8)?;
            theta.push(f64::from_le_bytes(b8));
        }
        Self::from_theta(&sizes, &u_max, theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub settings: AdamSettings,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize, settings: AdamSettings) -> Self {
        Self {
            settings,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    /// Bias-corrected Adam step; leaves everything untouched on a
    /// non-finite gradient.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::InvalidInput("Adam shape mismatch".into()));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        let s = &self.settings;
        self.t += 1;
        let c1 = 1.0 - s.beta1.powi(self.t as i32);
        let c2 = 1.0 - s.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = s.beta1 * self.m[i] + (1.0 - s.beta1) * grad[i];
            self.v[i] = s.beta2 * self.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            theta[i] -= s.learning_rate * m_hat / (v_hat.sqrt() + s.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(seed: u64) -> ControllerParams {
        let mut rng = segment_rng(seed, 0);
        let mut p = ControllerParams::xavier(&[1, 8, 8, 3], &[0.1, 0.2, 0.3], &mut rng).unwrap();
        // nonzero biases so every path is exercised
        for (i, t) in p.theta_mut().iter_mut().enumerate() {
            *t += 0.05 * ((i as f64) * 0.37).sin();
        }
        p
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = ControllerParams::zeros(&[1, 64, 64, 2], &[1.0, 1.0]).unwrap();
        assert_eq!(p.forward(0.3), vec![0.0, 0.0]);
        assert_eq!(p.param_count(), 64 + 64 + 64 * 64 + 64 + 2 * 64 + 2);
    }

    #[test]
    fn single_layer_tanh_bias() {
        let p = ControllerParams::from_theta(&[1, 1], &[0.5], vec![3.0, 0.2]).unwrap();
        assert!((p.forward(0.0)[0] - 0.5 * 0.2_f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn output_is_bounded() {
        let mut rng = segment_rng(11, 0);
        let mut p = ControllerParams::xavier(&[1, 16, 2], &[0.02, 0.03], &mut rng).unwrap();
        for t in p.theta_mut() {
            *t *= 50.0;
        }
        for k in 0..1000 {
            let u = p.forward(k as f64 / 999.0);
            assert!(u[0].abs() <= 0.02 && u[1].abs() <= 0.03);
        }
    }

    #[test]
    fn pullback_matches_finite_differences() {
        let p = random_params(5);
        let v = [0.7, -1.3, 0.4];
        let lambda = 0.37;
        let g = p.pullback(lambda, &v);
        let objective = |q: &ControllerParams| q.forward(lambda).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        let mut rng = segment_rng(99, 0);
        for _ in 0..20 {
            let i = rng.random_range(0..p.param_count());
            let h = 1e-6;
            let mut plus = p.clone();
            plus.theta_mut()[i] += h;
            let mut minus = p.clone();
            minus.theta_mut()[i] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-8);
            assert!(err < 1e-6, "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn pullback_is_linear_and_zero_for_zero_cotangent() {
        let p = random_params(8);
        assert!(p.pullback(0.5, &[0.0; 3]).iter().all(|&g| g == 0.0));
        let a = p.pullback(0.5, &[1.0, 0.0, 2.0]);
        let b = p.pullback(0.5, &[0.0, -1.0, 0.5]);
        let c = p.pullback(0.5, &[2.0, -3.0, 5.5]);
        for i in 0..a.len() {
            assert!((c[i] - (2.0 * a[i] + 3.0 * b[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_controller_chain_rule() {
        // u = u_max·tanh(wλ + b); with v scaled by 1/(u_max·sech²) the
        // pullback is (λ v, v)
        let p = ControllerParams::from_theta(&[1, 1], &[2.0], vec![0.0, 0.0]).unwrap();
        let g = p.pullback(0.6, &[1.5]);
        assert!((g[0] - 0.6 * 3.0).abs() < 1e-15 && (g[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn relu_kink_takes_zero_subgradient() {
        // hidden preactivation w·0 + 0 = 0 exactly at λ = 0
        let p = ControllerParams::from_theta(&[1, 1, 1], &[1.0], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let g = p.pullback(0.0, &[1.0]);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn seeded_initialization_is_reproducible() {
        let a = ControllerParams::xavier(&[1, 64, 64, 2], &[1.0, 1.0], &mut segment_rng(7, 3)).unwrap();
        let b = ControllerParams::xavier(&[1, 64, 64, 2], &[1.0, 1.0], &mut segment_rng(7, 3)).unwrap();
        let c = ControllerParams::xavier(&[1, 64, 64, 2], &[1.0, 1.0], &mut segment_rng(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = random_params(2);
        let mut bytes = Vec::new();
        p.write_checkpoint(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"EQCP");
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 * 4 + 3 * 8 + 8 + p.param_count() * 8);
        assert_eq!(ControllerParams::read_checkpoint(&bytes[..]).unwrap(), p);
        bytes[0] = b'X';
        assert!(ControllerParams::read_checkpoint(&bytes[..]).is_err());
    }

    #[test]
    fn adam_first_step_and_shrinking_steps() {
        let mut theta = vec![0.0];
        let mut adam = AdamState::new(1, AdamSettings::default());
        adam.step(&mut theta, &[1.0]).unwrap();
        assert!((theta[0] + 1e-2 / (1.0 + 1e-8)).abs() < 1e-15);
        let before = theta[0];
        adam.step(&mut theta, &[1.0]).unwrap();
        assert!((theta[0] - before).abs() <= 1e-2 + 1e-15);
    }

    #[test]
    fn adam_zero_gradient_and_rejection() {
        let mut theta = vec![1.0, 2.0];
        let mut adam = AdamState::new(2, AdamSettings::default());
        adam.step(&mut theta, &[0.0, 0.0]).unwrap();
        assert_eq!(theta, vec![1.0, 2.0]);
        assert!(matches!(adam.step(&mut theta, &[f64::NAN, 0.0]), Err(Error::NonFiniteGradient(0))));
        assert_eq!(adam.steps(), 1);
    }
}

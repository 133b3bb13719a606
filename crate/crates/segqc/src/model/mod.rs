//! The class-conditional quality head and its analytic gradients.
//!
//! The head fuses a vision embedding f1 with a class text embedding phi:
//! an attention MLP maps [f1, phi] to gate vectors [w1, w2], and the
//! prediction is sigmoid(g2(w2 * relu(g1(w1 * f1)))) with * denoting
//! element-wise multiplication. Two stacked affine maps compress the gated
//! features (d_v -> d_h -> 1), so the class conditioning modulates every
//! stage of the reduction.
//!
//! Everything is plain f64 with hand-derived backprop; the test suite checks
//! the gradients against central finite differences.

pub mod embed;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("expected {what} of dim {expected}, got {got}")]
    DimMismatch { what: &'static str, expected: usize, got: usize },
    #[error("no vision embedding recorded for sample key '{0}'")]
    MissingEmbedding(String),
    #[error("no text embedding for class {0} ('{1}')")]
    MissingClassEmbedding(u16, String),
    #[error("embedding for '{0}' is a zero vector")]
    ZeroVector(String),
    #[error("{0}: io error: {1}")]
    Io(String, String),
    #[error("{0}: invalid json: {1}")]
    Json(String, String),
    #[error("{0}: bad checkpoint: {1}")]
    BadCheckpoint(String, String),
    #[error("pair index {0} out of range for batch of {1}")]
    PairOutOfRange(usize, usize),
}

/// Nonlinearity applied to the attention MLP output before splitting into
/// gates. Bounded gates (sigmoid) are the default; the alternatives exist
/// for ablation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateActivation {
    #[default]
    Sigmoid,
    Identity,
    Softplus,
}

impl GateActivation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            GateActivation::Sigmoid => sigmoid(x),
            GateActivation::Identity => x,
            GateActivation::Softplus => {
                // numerically stable ln(1 + e^x)
                if x > 30.0 {
                    x
                } else {
                    x.exp().ln_1p()
                }
            }
        }
    }

    /// Derivative given pre-activation x and activated value g.
    fn derivative(&self, x: f64, g: f64) -> f64 {
        match self {
            GateActivation::Sigmoid => g * (1.0 - g),
            GateActivation::Identity => 1.0,
            GateActivation::Softplus => sigmoid(x),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub d_v: usize,
    pub d_t: usize,
    pub d_h: usize,
    pub attn_hidden: usize,
    #[serde(default)]
    pub gate_activation: GateActivation,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            d_v: 512,
            d_t: 512,
            d_h: 128,
            attn_hidden: 256,
            gate_activation: GateActivation::Sigmoid,
        }
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Clone, Debug)]
struct Layout {
    wa1: std::ops::Range<usize>, // attn_hidden x (d_v + d_t)
    ba1: std::ops::Range<usize>, // attn_hidden
    wa2: std::ops::Range<usize>, // (d_v + d_h) x attn_hidden
    ba2: std::ops::Range<usize>, // d_v + d_h
    w1: std::ops::Range<usize>,  // d_h x d_v
    b1: std::ops::Range<usize>,  // d_h
    w2: std::ops::Range<usize>,  // d_h
    b2: std::ops::Range<usize>,  // 1
    total: usize,
}

impl Layout {
    fn new(c: &HeadConfig) -> Self {
        let concat = c.d_v + c.d_t;
        let gates = c.d_v + c.d_h;
        let mut at = 0usize;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        Layout {
            wa1: take(c.attn_hidden * concat),
            ba1: take(c.attn_hidden),
            wa2: take(gates * c.attn_hidden),
            ba2: take(gates),
            w1: take(c.d_h * c.d_v),
            b1: take(c.d_h),
            w2: take(c.d_h),
            b2: take(1),
            total: at,
        }
    }
}

/// Trainable parameters of the quality head.
#[derive(Clone, Debug)]
pub struct QualityHead {
    config: HeadConfig,
    layout: Layout,
    params: Vec<f64>,
}

fn matvec(mat: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(mat.len(), rows * cols);
    for r in 0..rows {
        let row = &mat[r * cols..(r + 1) * cols];
        out[r] = row.iter().zip(x).map(|(m, v)| m * v).sum();
    }
}

/// out[c] += sum_r mat[r][c] * dy[r]
fn matvec_transpose_acc(mat: &[f64], rows: usize, cols: usize, dy: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &mat[r * cols..(r + 1) * cols];
        let d = dy[r];
        for (o, m) in out.iter_mut().zip(row) {
            *o += m * d;
        }
    }
}

/// grad[r][c] += dy[r] * x[c]
fn outer_acc(grad: &mut [f64], rows: usize, cols: usize, dy: &[f64], x: &[f64]) {
    debug_assert_eq!(grad.len(), rows * cols);
    for r in 0..rows {
        let g = &mut grad[r * cols..(r + 1) * cols];
        let d = dy[r];
        for (gc, xc) in g.iter_mut().zip(x) {
            *gc += d * xc;
        }
    }
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    concat: Vec<f64>,
    mlp_pre: Vec<f64>,
    mlp_act: Vec<f64>,
    gate_pre: Vec<f64>,
    gates: Vec<f64>,
    f1: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    r1: Vec<f64>,
    z2: Vec<f64>,
    pub output: f64,
}

impl QualityHead {
    /// Seeded init: weights uniform in +-1/sqrt(fan_in), biases zero.
    pub fn init(config: HeadConfig, seed: u64) -> Self {
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = Rng::new(seed);
        let concat = config.d_v + config.d_t;
        let gates = config.d_v + config.d_h;
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, params: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.uniform(-bound, bound);
            }
        };
        fill(layout.wa1.clone(), concat, &mut params);
        fill(layout.wa2.clone(), config.attn_hidden, &mut params);
        fill(layout.w1.clone(), config.d_v, &mut params);
        fill(layout.w2.clone(), config.d_h, &mut params);
        let _ = gates;
        QualityHead { config, layout, params }
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn zero_gradients(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn check_dims(&self, f1: &[f64], phi: &[f64]) -> Result<(), ModelError> {
        if f1.len() != self.config.d_v {
            return Err(ModelError::DimMismatch {
                what: "vision embedding",
                expected: self.config.d_v,
                got: f1.len(),
            });
        }
        if phi.len() != self.config.d_t {
            return Err(ModelError::DimMismatch {
                what: "text embedding",
                expected: self.config.d_t,
                got: phi.len(),
            });
        }
        Ok(())
    }

    /// Predicted quality in (0,1).
    pub fn forward(&self, f1: &[f64], phi: &[f64]) -> Result<f64, ModelError> {
        Ok(self.forward_cached(f1, phi)?.output)
    }

    pub fn forward_cached(&self, f1: &[f64], phi: &[f64]) -> Result<ForwardCache, ModelError> {
        self.check_dims(f1, phi)?;
        let c = &self.config;
        let (d_v, d_t, d_h, hidden) = (c.d_v, c.d_t, c.d_h, c.attn_hidden);
        let concat_dim = d_v + d_t;
        let gate_dim = d_v + d_h;
        let p = &self.params;
        let l = &self.layout;

        let mut concat = Vec::with_capacity(concat_dim);
        concat.extend_from_slice(f1);
        concat.extend_from_slice(phi);

        let mut mlp_pre = vec![0.0; hidden];
        matvec(&p[l.wa1.clone()], hidden, concat_dim, &concat, &mut mlp_pre);
        for (v, b) in mlp_pre.iter_mut().zip(&p[l.ba1.clone()]) {
            *v += b;
        }
        let mlp_act: Vec<f64> = mlp_pre.iter().map(|&v| v.max(0.0)).collect();

        let mut gate_pre = vec![0.0; gate_dim];
        matvec(&p[l.wa2.clone()], gate_dim, hidden, &mlp_act, &mut gate_pre);
        for (v, b) in gate_pre.iter_mut().zip(&p[l.ba2.clone()]) {
            *v += b;
        }
        let gates: Vec<f64> =
            gate_pre.iter().map(|&v| c.gate_activation.apply(v)).collect();

        let z1: Vec<f64> = gates[..d_v].iter().zip(f1).map(|(g, v)| g * v).collect();
        let mut a1 = vec![0.0; d_h];
        matvec(&p[l.w1.clone()], d_h, d_v, &z1, &mut a1);
        for (v, b) in a1.iter_mut().zip(&p[l.b1.clone()]) {
            *v += b;
        }
        let r1: Vec<f64> = a1.iter().map(|&v| v.max(0.0)).collect();
        let z2: Vec<f64> = gates[d_v..].iter().zip(&r1).map(|(g, v)| g * v).collect();
        let a2: f64 =
            p[l.w2.clone()].iter().zip(&z2).map(|(w, v)| w * v).sum::<f64>() + p[l.b2.clone()][0];
        let output = sigmoid(a2);


        Ok(ForwardCache {
            concat,
            mlp_pre,
            mlp_act,
            gate_pre,
            gates,
            f1: f1.to_vec(),
            z1,
            a1,
            r1,
            z2,
            output,
        })
    }

    /// Accumulate parameter gradients for one sample given dL/d(output).
    /// The frozen encoder inputs receive no gradient.
    pub fn backward_into(&self, cache: &ForwardCache, d_output: f64, grads: &mut [f64]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let c = &self.config;
        let (d_v, d_t, d_h, hidden) = (c.d_v, c.d_t, c.d_h, c.attn_hidden);
        let concat_dim = d_v + d_t;
        let gate_dim = d_v + d_h;
        let p = &self.params;
        let l = &self.layout;

        let h = cache.output;
        let da2 = d_output * h * (1.0 - h);

        grads[l.b2.start] += da2;
        let w2 = &p[l.w2.clone()];
        {
            let gw2 = &mut grads[l.w2.clone()];
            for (g, z) in gw2.iter_mut().zip(&cache.z2) {
                *g += da2 * z;
            }
        }
        let dz2: Vec<f64> = w2.iter().map(|w| da2 * w).collect();

        // gates split: [0..d_v] scales f1, [d_v..] scales r1
        let mut dgates = vec![0.0; gate_dim];
        for i in 0..d_h {
            dgates[d_v + i] = dz2[i] * cache.r1[i];
        }
        let dr1: Vec<f64> = (0..d_h).map(|i| dz2[i] * cache.gates[d_v + i]).collect();
        let da1: Vec<f64> = (0..d_h)
            .map(|i| if cache.a1[i] > 0.0 { dr1[i] } else { 0.0 })
            .collect();

        outer_acc(&mut grads[l.w1.clone()], d_h, d_v, &da1, &cache.z1);
        for (g, d) in grads[l.b1.clone()].iter_mut().zip(&da1) {
            *g += d;
        }
        let mut dz1 = vec![0.0; d_v];
        matvec_transpose_acc(&p[l.w1.clone()], d_h, d_v, &da1, &mut dz1);
        for i in 0..d_v {
            dgates[i] = dz1[i] * cache.f1[i];
        }

        let dgate_pre: Vec<f64> = (0..gate_dim)
            .map(|i| {
                dgates[i] * c.gate_activation.derivative(cache.gate_pre[i], cache.gates[i])
            })
            .collect();
        outer_acc(&mut grads[l.wa2.clone()], gate_dim, hidden, &dgate_pre, &cache.mlp_act);
        for (g, d) in grads[l.ba2.clone()].iter_mut().zip(&dgate_pre) {
            *g += d;
        }
        let mut dmlp = vec![0.0; hidden];
        matvec_transpose_acc(&p[l.wa2.clone()], gate_dim, hidden, &dgate_pre, &mut dmlp);
        let dmlp_pre: Vec<f64> = (0..hidden)
            .map(|i| if cache.mlp_pre[i] > 0.0 { dmlp[i] } else { 0.0 })
            .collect();
        outer_acc(&mut grads[l.wa1.clone()], hidden, concat_dim, &dmlp_pre, &cache.concat);
        for (g, d) in grads[l.ba1.clone()].iter_mut().zip(&dmlp_pre) {
            *g += d;
        }
    }

    /// Smallest distance from any ReLU pre-activation to its kink; used by
    /// the gradient tests to keep finite differences away from
    /// non-differentiable points.
    pub fn kink_distance(&self, cache: &ForwardCache) -> f64 {
        cache
            .mlp_pre
            .iter()
            .chain(&cache.a1)
            .fold(f64::INFINITY, |acc, &v| acc.min(v.abs()))
    }
}

/// One training sample as seen by the head: frozen embeddings plus target.
#[derive(Clone, Debug)]
pub struct BatchItem {
    pub f1: Vec<f64>,
    pub phi: Vec<f64>,
    pub target: f64,
}

/// Loss pieces of one batch evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub rank: f64,
    pub active_pairs: usize,
}

/// Full compositional loss and analytic gradients over a batch.
///
/// Loss = mean squared error over all N samples plus `lambda` times the mean
/// hinge over the given sample pairs: max(0, (h_i - h_j)(t_j - t_i) + xi).
/// An index left out of `pairs` (odd batch) contributes only to the MSE.
pub fn forward_backward(
    head: &QualityHead,
    batch: &[BatchItem],
    pairs: &[(usize, usize)],
    lambda: f64,
    margin_xi: f64,
) -> Result<(LossBreakdown, Vec<f64>), ModelError> {
    assert!(!batch.is_empty(), "empty batch");
    let n = batch.len();
    let mut caches = Vec::with_capacity(n);
    for item in batch {
        caches.push(head.forward_cached(&item.f1, &item.phi)?);
    }
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(ModelError::PairOutOfRange(i.max(j), n));
        }
    }

    let mut d_output = vec![0.0; n];
    let mut mse = 0.0;
    for (i, item) in batch.iter().enumerate() {
        let err = caches[i].output - item.target;
        mse += err * err;
        d_output[i] += 2.0 * err / n as f64;
    }
    mse /= n as f64;

    let mut rank = 0.0;
    let mut active = 0usize;
    if !pairs.is_empty() && lambda != 0.0 {
        let p = pairs.len() as f64;
        for &(i, j) in pairs {
            let (hi, hj) = (caches[i].output, caches[j].output);
            let (ti, tj) = (batch[i].target, batch[j].target);
            let margin = (hi - hj) * (tj - ti) + margin_xi;
            if margin > 0.0 {
                rank += margin;
                active += 1;
                d_output[i] += lambda * (tj - ti) / p;
                d_output[j] -= lambda * (tj - ti) / p;
            }
        }
        rank /= p;
    }

    let mut grads = head.zero_gradients();
    for (i, cache) in caches.iter().enumerate() {
        if d_output[i] != 0.0 {
            head.backward_into(cache, d_output[i], &mut grads);
        }
    }
    let breakdown = LossBreakdown {
        total: mse + lambda * rank,
        mse,
        rank,
        active_pairs: active,
    };
    Ok((breakdown, grads))
}

// --- checkpoint io -----------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 4] = b"SQHD";
const CHECKPOINT_VERSION: u32 = 1;

/// Serialize the head: magic, version, dims header, config JSON, f32 params.
pub fn save_checkpoint(head: &QualityHead, path: &std::path::Path) -> Result<(), ModelError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for d in [head.config.d_v, head.config.d_t, head.config.d_h, head.config.attn_hidden] {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    let config_json = serde_json::to_vec(&head.config)
        .map_err(|e| ModelError::Json(path.display().to_string(), e.to_string()))?;
    bytes.extend_from_slice(&(config_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&config_json);
    bytes.extend_from_slice(&(head.params.len() as u64).to_le_bytes());
    for p in &head.params {
        bytes.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)
        .map_err(|e| ModelError::Io(path.display().to_string(), e.to_string()))
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<QualityHead, ModelError> {
    let name = path.display().to_string();
    let bytes = std::fs::read(path).map_err(|e| ModelError::Io(name.clone(), e.to_string()))?;
    let bad = |msg: &str| ModelError::BadCheckpoint(name.clone(), msg.to_string());
    if bytes.len() < 8 || &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(bad("missing SQHD magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let mut at = 8usize;
    let read_u32 = |at: &mut usize| -> Result<u32, ModelError> {
        if *at + 4 > bytes.len() {
            return Err(bad("truncated header"));
        }
        let v = u32::from_le_bytes(bytes[*at..*at + 4].try_into().unwrap());
        *at += 4;
        Ok(v)
    };
    let dims: Vec<u32> = (0..4)
        .map(|_| read_u32(&mut at))
        .collect::<Result<_, _>>()?;
    let json_len = read_u32(&mut at)? as usize;
    if at + json_len > bytes.len() {
        return Err(bad("truncated config"));
    }
    let config: HeadConfig = serde_json::from_slice(&bytes[at..at + json_len])
        .map_err(|e| ModelError::Json(name.clone(), e.to_string()))?;
    at += json_len;
    if [config.d_v, config.d_t, config.d_h, config.attn_hidden]
        != [dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize]
    {
        return Err(bad("dims header disagrees with config JSON"));
    }
    if at + 8 > bytes.len() {
        return Err(bad("truncated parameter count"));
    }
    let count = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    at += 8;
    let layout = Layout::new(&config);
    if count != layout.total {
        return Err(bad(&format!(
            "parameter count {count} does not match config ({})",
            layout.total
        )));
    }
    if at + count * 4 != bytes.len() {
        return Err(bad("payload size mismatch"));
    }
    let mut params = Vec::with_capacity(count);
    for chunk in bytes[at..].chunks_exact(4) {
        params.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(QualityHead { config, layout, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> HeadConfig {
        HeadConfig { d_v: 6, d_t: 4, d_h: 3, attn_hidden: 5, gate_activation: GateActivation::Sigmoid }
    }

    #[test]
    fn default_parameter_count_is_documented_value() {
        let head = QualityHead::init(HeadConfig::default(), 0);
        // 256x1024 + 256 + 640x256 + 640 + 128x512 + 128 + 128 + 1
        assert_eq!(head.param_count(), 492_673);
    }

    #[test]
    fn output_lies_in_open_interval() {
        let head = QualityHead::init(small_config(), 3);
        let mut rng = Rng::new(17);
        for _ in 0..50 {
            let f1: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
            let phi = rng.unit_vector(4);
            let h = head.forward(&f1, &phi).unwrap();
            assert!(h > 0.0 && h < 1.0);
        }
    }

    #[test]
    fn zero_input_with_zero_biases_gives_half() {
        // f1 = 0 zeroes z1; with zero b1/b2 everything downstream is zero
        // and the final sigmoid yields exactly 0.5 regardless of the gates.
        let head = QualityHead::init(small_config(), 9);
        let f1 = vec![0.0; 6];
        let phi = vec![0.3, -0.4, 0.5, 0.1];
        assert_eq!(head.forward(&f1, &phi).unwrap(), 0.5);
    }

    #[test]
    fn forward_matches_hand_computation() {
        // d_v=2, d_t=1, d_h=1, hidden=1 with hand-set weights, evaluated by
        // scalar arithmetic written out independently below.
        let config = HeadConfig {
            d_v: 2,
            d_t: 1,
            d_h: 1,
            attn_hidden: 1,
            gate_activation: GateActivation::Sigmoid,
        };
        let mut head = QualityHead::init(config, 0);
        // layout: wa1 (1x3), ba1 (1), wa2 (3x1), ba2 (3), w1 (1x2), b1 (1),
        //         w2 (1), b2 (1)
        let params = vec![
            0.2, -0.1, 0.4, // wa1
            0.05, // ba1
            0.3, -0.2, 0.6, // wa2
            0.01, 0.02, -0.03, // ba2
            0.7, -0.5, // w1
            0.1, // b1
            0.9, // w2
            -0.2, // b2
        ];
        head.params_mut().copy_from_slice(&params);
        let f1 = [0.5, -0.3];
        let phi = [0.8];
        let got = head.forward(&f1, &phi).unwrap();

        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let m_pre: f64 = 0.2 * 0.5 + (-0.1) * (-0.3) + 0.4 * 0.8 + 0.05;
        let m = m_pre.max(0.0);
        let g0 = s(0.3 * m + 0.01);
        let g1 = s(-0.2 * m + 0.02);
        let g2 = s(0.6 * m - 0.03);
        let z1 = [g0 * 0.5, g1 * (-0.3)];
        let a1 = 0.7 * z1[0] - 0.5 * z1[1] + 0.1;
        let r1 = a1.max(0.0);
        let z2 = g2 * r1;
        let want = s(0.9 * z2 - 0.2);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn determinism_and_class_sensitivity() {
        let head = QualityHead::init(small_config(), 5);
        let mut rng = Rng::new(2);
        let f1: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let phi_a = rng.unit_vector(4);
        assert_eq!(head.forward(&f1, &phi_a).unwrap(), head.forward(&f1, &phi_a).unwrap());
        // Distinct text embeddings move the gates, hence the output, for the
        // overwhelming majority of random draws.
        let mut differing = 0;
        for _ in 0..100 {
            let phi_b = rng.unit_vector(4);
            let a = head.forward(&f1, &phi_a).unwrap();
            let b = head.forward(&f1, &phi_b).unwrap();
            if (a - b).abs() > 1e-12 {
                differing += 1;
            }
        }
        assert!(differing >= 95, "only {differing}/100 draws changed the output");
    }

    #[test]
    fn perfect_prediction_gives_zero_loss_and_gradient() {
        let head = QualityHead::init(small_config(), 6);
        let mut rng = Rng::new(4);
        let f1: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let phi = rng.unit_vector(4);
        let target = head.forward(&f1, &phi).unwrap();
        let batch = vec![BatchItem { f1, phi, target }];
        let (loss, grads) = forward_backward(&head, &batch, &[], 0.0, 0.05).unwrap();
        assert_eq!(loss.total, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn doubling_target_error_quadruples_mse() {
        let head = QualityHead::init(small_config(), 7);
        let mut rng = Rng::new(8);
        let f1: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let phi = rng.unit_vector(4);
        let out = head.forward(&f1, &phi).unwrap();
        let base = vec![BatchItem { f1: f1.clone(), phi: phi.clone(), target: out - 0.1 }];
        let double = vec![BatchItem { f1, phi, target: out - 0.2 }];
        let (l1, _) = forward_backward(&head, &base, &[], 0.0, 0.05).unwrap();
        let (l2, _) = forward_backward(&head, &double, &[], 0.0, 0.05).unwrap();
        assert!((l2.mse / l1.mse - 4.0).abs() < 1e-9);
    }

    /// Central-difference gradient oracle over every parameter.
    fn finite_difference_grads(
        head: &QualityHead,
        batch: &[BatchItem],
        pairs: &[(usize, usize)],
        lambda: f64,
        xi: f64,
        eps: f64,
    ) -> Vec<f64> {
        let mut head = head.clone();
        let mut grads = Vec::with_capacity(head.param_count());
        let loss_of = |h: &QualityHead| -> f64 {
            let n = batch.len() as f64;
            let outs: Vec<f64> = batch
                .iter()
                .map(|it| h.forward(&it.f1, &it.phi).unwrap())
                .collect();
            let mse: f64 = batch
                .iter()
                .zip(&outs)
                .map(|(it, &o)| (o - it.target) * (o - it.target))
                .sum::<f64>()
                / n;
            let mut rank = 0.0;
            if !pairs.is_empty() {
                for &(i, j) in pairs {
                    let m = (outs[i] - outs[j]) * (batch[j].target - batch[i].target) + xi;
                    rank += m.max(0.0);
                }
                rank /= pairs.len() as f64;
            }
            mse + lambda * rank
        };
        for k in 0..head.param_count() {
            let orig = head.params()[k];
            head.params_mut()[k] = orig + eps;
            let plus = loss_of(&head);
            head.params_mut()[k] = orig - eps;
            let minus = loss_of(&head);
            head.params_mut()[k] = orig;
            grads.push((plus - minus) / (2.0 * eps));
        }
        grads
    }

    /// Draw a batch whose ReLU pre-activations and hinge margins are all at
    /// least `guard` from their kinks, so finite differences are smooth.
    fn kink_free_batch(
        head: &QualityHead,
        rng: &mut Rng,
        n: usize,
        xi: f64,
        guard: f64,
    ) -> (Vec<BatchItem>, Vec<(usize, usize)>) {
        'outer: loop {
            let mut batch = Vec::with_capacity(n);
            for _ in 0..n {
                let f1: Vec<f64> = (0..head.config.d_v).map(|_| rng.normal()).collect();
                let phi = rng.unit_vector(head.config.d_t);
                let target = rng.uniform(0.05, 0.95);
                batch.push(BatchItem { f1, phi, target });
            }
            let pairs: Vec<(usize, usize)> = (0..n / 2).map(|k| (2 * k, 2 * k + 1)).collect();
            let mut outs = Vec::with_capacity(n);
            for item in &batch {
                let cache = head.forward_cached(&item.f1, &item.phi).unwrap();
                if head.kink_distance(&cache) < guard {
                    continue 'outer;
                }
                outs.push(cache.output);
            }
            for &(i, j) in &pairs {
                let m = (outs[i] - outs[j]) * (batch[j].target - batch[i].target) + xi;
                if m.abs() < guard {
                    continue 'outer;
                }
            }
            return (batch, pairs);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = Rng::new(0xabcde);
        let xi = 0.05;
        let lambda = 1.0;
        for trial in 0..6 {
            for gate in [GateActivation::Sigmoid, GateActivation::Identity, GateActivation::Softplus] {
                let config = HeadConfig {
                    d_v: 5,
                    d_t: 3,
                    d_h: 3,
                    attn_hidden: 4,
                    gate_activation: gate,
                };
                let head = QualityHead::init(config, 1000 + trial);
                let (batch, pairs) = kink_free_batch(&head, &mut rng, 4, xi, 1e-2);
                let (_, analytic) = forward_backward(&head, &batch, &pairs, lambda, xi).unwrap();
                let numeric = finite_difference_grads(&head, &batch, &pairs, lambda, xi, 1e-4);
                for (k, (&a, &f)) in analytic.iter().zip(&numeric).enumerate() {
                    let denom = a.abs().max(f.abs()).max(1e-6);
                    let rel = (a - f).abs() / denom;
                    assert!(
                        rel < 1e-4,
                        "{gate:?} trial {trial} param {k}: analytic {a} vs fd {f} (rel {rel})"
                    );
                }
            }
        }
    }

    #[test]
    fn rank_term_moves_gradients() {
        let head = QualityHead::init(small_config(), 21);
        let mut rng = Rng::new(22);
        let (batch, pairs) = {
            let mut batch = Vec::new();
            for _ in 0..4 {
                batch.push(BatchItem {
                    f1: (0..6).map(|_| rng.normal()).collect(),
                    phi: rng.unit_vector(4),
                    target: rng.uniform(0.1, 0.9),
                });
            }
            (batch, vec![(0usize, 1usize), (2, 3)])
        };
        let (l0, g0) = forward_backward(&head, &batch, &pairs, 0.0, 0.05).unwrap();
        let (l1, g1) = forward_backward(&head, &batch, &pairs, 1.0, 0.05).unwrap();
        assert!((l0.total - l0.mse).abs() < 1e-15);
        assert!(l1.total >= l0.total);
        if l1.rank > 0.0 {
            assert!(g0.iter().zip(&g1).any(|(a, b)| (a - b).abs() > 1e-12));
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let head = QualityHead::init(small_config(), 77);
        let p1 = dir.path().join("head.sqhd");
        save_checkpoint(&head, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        assert_eq!(loaded.param_count(), head.param_count());
        let p2 = dir.path().join("head2.sqhd");
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let head = QualityHead::init(small_config(), 1);
        let p = dir.path().join("head.sqhd");
        save_checkpoint(&head, &p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(ModelError::BadCheckpoint(_, _))));
    }
}

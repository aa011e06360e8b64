//! Barrier-factored neural value surrogate `V(x, w) = h(V_NN(x, w)) B(x)`.
//!
//! The HJI loss depends on the input gradient of the surrogate, so parameter
//! gradients have to flow through `d V_NN / dx` as well. The network therefore
//! runs a forward pass that carries one tangent per input coordinate (the
//! input Jacobian), and the adjoint pass differentiates both the primal and
//! the tangent recurrences:
//!
//! ```text
//! z_l  = W_l a_{l-1} + b_l          a_l  = act(z_l)
//! dz_l = W_l da_{l-1}               da_l = act'(z_l) * dz_l       (per tangent)
//! ```
//!
//! Going backwards, `zbar_l = abar_l act'(z_l) + sum_j dabar_l^j act''(z_l) dz_l^j`
//! and `dzbar_l^j = dabar_l^j act'(z_l)`.
//!
//! Parameter layout: for every layer, the weight matrix in row-major order
//! (`out x in`) followed by the bias vector. The last layer is linear with a
//! single output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::{logistic, require_finite, Barrier, BarrierCandidate, ValueFunction, Wrapper};
use crate::error::{Error, Result};
use crate::model::StateVec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }

    /// `(act, act', act'')` at `z`.
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let d1 = 1.0 - t * t;
                (t, d1, -2.0 * t * d1)
            }
            Activation::Sigmoid => {
                let s = logistic(z);
                let d1 = s * (1.0 - s);
                (s, d1, d1 * (1.0 - 2.0 * s))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub init_seed: u64,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::config("network input_dim, hidden_layers and hidden_width must be positive"));
        }
        Ok(())
    }
}

/// Flat weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Fully connected network with scalar linear output.
#[derive(Debug, Clone)]
pub struct Mlp {
    config: MlpConfig,
    /// `[n, w, ..., w, 1]`
    sizes: Vec<usize>,
    /// Start of each layer's weight block in the flat parameter vector.
    offsets: Vec<usize>,
    num_params: usize,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    /// `a_0 = x, a_1, ..., a_L`
    acts: Vec<Vec<f64>>,
    /// `act'(z_l)`, `act''(z_l)` for hidden layers.
    d1: Vec<Vec<f64>>,
    d2: Vec<Vec<f64>>,
    /// Tangents `dz_l`, `da_l` for hidden layers, tangent-major (`n x width`).
    dz: Vec<Vec<f64>>,
    da: Vec<Vec<f64>>,
    output: f64,
    grad: Vec<f64>,
}

impl MlpTape {
    pub fn output(&self) -> f64 {
        self.output
    }

    pub fn input_gradient(&self) -> &[f64] {
        &self.grad
    }
}

impl Mlp {
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![config.input_dim];
        sizes.extend(std::iter::repeat_n(config.hidden_width, config.hidden_layers));
        sizes.push(1);
        let mut offsets = Vec::with_capacity(sizes.len() - 1);
        let mut total = 0;
        for l in 1..sizes.len() {
            offsets.push(total);
            total += sizes[l] * sizes[l - 1] + sizes[l];
        }
        Ok(Self {
            config,
            sizes,
            offsets,
            num_params: total,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Glorot-uniform weights, zero biases, drawn from `init_seed`.
    pub fn init_params(&self) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.init_seed);
        let mut w = vec![0.0; self.num_params];
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let start = self.offsets[l];
            for v in &mut w[start..start + fan_in * fan_out] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        ParamVector(w)
    }

    fn check_params(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.num_params {
            return Err(Error::config(format!(
                "parameter vector has length {}, network expects {}",
                w.len(),
                self.num_params
            )));
        }
        Ok(())
    }

    /// Forward pass with input-Jacobian tangents.
    pub fn forward(&self, x: &[f64], w: &[f64]) -> MlpTape {
        let n = self.config.input_dim;
        let act = self.config.activation;
        let hidden = self.config.hidden_layers;
        let mut acts = Vec::with_capacity(hidden + 1);
        acts.push(x.to_vec());
        let mut d1s = Vec::with_capacity(hidden);
        let mut d2s = Vec::with_capacity(hidden);
        let mut dzs = Vec::with_capacity(hidden);
        let mut das: Vec<Vec<f64>> = Vec::with_capacity(hidden);

        for l in 0..hidden {
            let (fin, fout) = (self.sizes[l], self.sizes[l + 1]);
            let wm = &w[self.offsets[l]..self.offsets[l] + fin * fout];
            let b = &w[self.offsets[l] + fin * fout..self.offsets[l] + fin * fout + fout];
            let prev = &acts[l];
            let mut a = vec![0.0; fout];
            let mut d1 = vec![0.0; fout];
            let mut d2 = vec![0.0; fout];
            let mut dz = vec![0.0; n * fout];
            let mut da = vec![0.0; n * fout];
            for i in 0..fout {
                let row = &wm[i * fin..(i + 1) * fin];
                let z = b[i] + dot(row, prev);
                let (s, s1, s2) = act.eval(z);
                a[i] = s;
                d1[i] = s1;
                d2[i] = s2;
                for j in 0..n {
                    let t = if l == 0 {
                        row[j]
                    } else {
                        dot(row, &das[l - 1][j * fin..(j + 1) * fin])
                    };
                    dz[j * fout + i] = t;
                    da[j * fout + i] = s1 * t;
                }
            }
            acts.push(a);
            d1s.push(d1);
            d2s.push(d2);
            dzs.push(dz);
            das.push(da);
        }

        let fin = self.sizes[hidden];
        let off = self.offsets[hidden];
        let wout = &w[off..off + fin];
        let output = w[off + fin] + dot(wout, &acts[hidden]);
        let last = &das[hidden - 1];
        let grad = (0..n).map(|j| dot(wout, &last[j * fin..(j + 1) * fin])).collect();
        MlpTape {
            acts,
            d1: d1s,
            d2: d2s,
            dz: dzs,
            da: das,
            output,
            grad,
        }
    }

    /// Accumulates into `grad` the parameter gradient of
    /// `ybar * y + gbar . dy/dx`.
    pub fn pullback(&self, tape: &MlpTape, w: &[f64], ybar: f64, gbar: &[f64], grad: &mut [f64]) {
        let n = self.config.input_dim;
        let hidden = self.config.hidden_layers;

        let fin = self.sizes[hidden];
        let off = self.offsets[hidden];
        let wout = &w[off..off + fin];
        let a_last = &tape.acts[hidden];
        let da_last = &tape.da[hidden - 1];
        for k in 0..fin {
            let mut acc = ybar * a_last[k];
            for j in 0..n {
                acc += gbar[j] * da_last[j * fin + k];
            }
            grad[off + k] += acc;
        }
        grad[off + fin] += ybar;

        let mut abar: Vec<f64> = wout.iter().map(|v| ybar * v).collect();
        let mut dabar: Vec<f64> = (0..n).flat_map(|j| wout.iter().map(move |v| gbar[j] * v)).collect();

        for l in (0..hidden).rev() {
            let (fin, fout) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let (d1, d2, dz) = (&tape.d1[l], &tape.d2[l], &tape.dz[l]);
            let mut zbar = vec![0.0; fout];
            let mut dzbar = vec![0.0; n * fout];
            for i in 0..fout {
                let mut zb = abar[i] * d1[i];
                for j in 0..n {
                    let t = dabar[j * fout + i];
                    zb += t * d2[i] * dz[j * fout + i];
                    dzbar[j * fout + i] = t * d1[i];
                }
                zbar[i] = zb;
            }

            let prev = &tape.acts[l];
            {
                let gw = &mut grad[off..off + fin * fout];
                for i in 0..fout {
                    let row = &mut gw[i * fin..(i + 1) * fin];
                    axpy(zbar[i], prev, row);
                    if l == 0 {
                        // da_0^j = e_j
                        for j in 0..n {
                            row[j] += dzbar[j * fout + i];
                        }
                    } else {
                        let da_prev = &tape.da[l - 1];
                        for j in 0..n {
                            axpy(dzbar[j * fout + i], &da_prev[j * fin..(j + 1) * fin], row);
                        }
                    }
                }
            }
            for i in 0..fout {
                grad[off + fin * fout + i] += zbar[i];
            }

            if l > 0 {
                let wm = &w[off..off + fin * fout];
                let mut new_abar = vec![0.0; fin];
                let mut new_dabar = vec![0.0; n * fin];
                for i in 0..fout {
                    let row = &wm[i * fin..(i + 1) * fin];
                    axpy(zbar[i], row, &mut new_abar);
                    for j in 0..n {
                        axpy(dzbar[j * fout + i], row, &mut new_dabar[j * fin..(j + 1) * fin]);
                    }
                }
                abar = new_abar;
                dabar = new_dabar;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// A value model parameterized by a flat vector, with input gradients and a
/// reverse pass that reaches parameters through both the value and its input
/// gradient.
pub trait ParametricValue: Send + Sync {
    type Tape: Send;

    fn state_dim(&self) -> usize;
    fn num_params(&self) -> usize;
    fn record(&self, x: &StateVec, w: &[f64]) -> Result<Self::Tape>;
    fn tape_value(tape: &Self::Tape) -> f64;
    fn tape_gradient(tape: &Self::Tape) -> &[f64];
    /// Accumulates into `grad` the parameter gradient of
    /// `vbar * V(x, w) + gbar . V_x(x, w)`.
    fn pullback(&self, tape: &Self::Tape, w: &[f64], vbar: f64, gbar: &[f64], grad: &mut [f64]);
}

/// `h(V_NN(x, w)) B(x)`.
#[derive(Debug, Clone)]
pub struct SurrogateValue {
    net: Mlp,
    candidate: BarrierCandidate,
}

#[derive(Debug, Clone)]
pub struct SurrogateTape {
    net: MlpTape,
    h1: f64,
    h2: f64,
    b: f64,
    b_grad: [f64; 2],
    value: f64,
    grad: Vec<f64>,
}

impl SurrogateValue {
    pub fn new(config: MlpConfig, candidate: BarrierCandidate) -> Result<Self> {
        if config.input_dim != 2 {
            return Err(Error::config("the built-in barrier candidates are two-dimensional"));
        }
        Ok(Self {
            net: Mlp::new(config)?,
            candidate,
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn barrier(&self) -> Barrier {
        self.candidate.barrier
    }

    pub fn wrapper(&self) -> Wrapper {
        self.candidate.wrapper
    }

    pub fn init_params(&self) -> ParamVector {
        self.net.init_params()
    }

    pub fn forward(&self, x: &StateVec, w: &[f64]) -> Result<f64> {
        Ok(self.record(x, w)?.value)
    }

    pub fn grad_x(&self, x: &StateVec, w: &[f64]) -> Result<StateVec> {
        Ok(StateVec::from_vec(self.record(x, w)?.grad))
    }

    /// Binds a parameter vector, giving a plain [`ValueFunction`].
    pub fn bind<'a>(&'a self, w: &'a [f64]) -> BoundSurrogate<'a> {
        BoundSurrogate { surrogate: self, w }
    }
}

impl ParametricValue for SurrogateValue {
    type Tape = SurrogateTape;

    fn state_dim(&self) -> usize {
        2
    }

    fn num_params(&self) -> usize {
        self.net.num_params()
    }

    fn record(&self, x: &StateVec, w: &[f64]) -> Result<SurrogateTape> {
        self.net.check_params(w)?;
        if x.len() != 2 {
            return Err(Error::config("surrogate expects a 2-dimensional state"));
        }
        let xs = x.as_slice();
        let b = self.candidate.barrier.value(xs)?;
        let b_grad = self.candidate.barrier.gradient(xs)?;
        let net = self.net.forward(xs, w);
        let (h, h1, h2) = self.candidate.wrapper.eval(net.output);
        let value = require_finite(h * b, "surrogate value", x)?;
        let grad = vec![
            h1 * net.grad[0] * b + h * b_grad[0],
            h1 * net.grad[1] * b + h * b_grad[1],
        ];
        require_finite(grad[0] + grad[1], "surrogate gradient", x)?;
        Ok(SurrogateTape {
            net,
            h1,
            h2,
            b,
            b_grad,
            value,
            grad,
        })
    }

    fn tape_value(tape: &SurrogateTape) -> f64 {
        tape.value
    }

    fn tape_gradient(tape: &SurrogateTape) -> &[f64] {
        &tape.grad
    }

    fn pullback(&self, tape: &SurrogateTape, w: &[f64], vbar: f64, gbar: &[f64], grad: &mut [f64]) {
        // V = h(y) B,  V_x = h'(y) g B + h(y) B_x,  g = dy/dx.
        let g = &tape.net.grad;
        let mut ybar = vbar * tape.h1 * tape.b;
        for j in 0..2 {
            ybar += gbar[j] * (tape.h2 * g[j] * tape.b + tape.h1 * tape.b_grad[j]);
        }
        let g_adj = [gbar[0] * tape.h1 * tape.b, gbar[1] * tape.h1 * tape.b];
        self.net.pullback(&tape.net, w, ybar, &g_adj, grad);
    }
}

/// Surrogate with its parameters fixed.
#[derive(Clone, Copy)]
pub struct BoundSurrogate<'a> {
    surrogate: &'a SurrogateValue,
    w: &'a [f64],
}

impl ValueFunction for BoundSurrogate<'_> {
    fn value(&self, x: &StateVec) -> Result<f64> {
        self.surrogate.forward(x, self.w)
    }

    fn gradient(&self, x: &StateVec) -> Result<StateVec> {
        self.surrogate.grad_x(x, self.w)
    }
}

/// Parameter-free stand-in that returns a known value function. Substituting
/// the exact value this way turns every training loss into an oracle.
pub struct PassThrough<V> {
    value: V,
    dim: usize,
}

impl<V: ValueFunction> PassThrough<V> {
    pub fn new(value: V, dim: usize) -> Self {
        Self { value, dim }
    }
}

impl<V: ValueFunction> ParametricValue for PassThrough<V> {
    type Tape = (f64, Vec<f64>);

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn num_params(&self) -> usize {
        0
    }

    fn record(&self, x: &StateVec, _w: &[f64]) -> Result<Self::Tape> {
        Ok((self.value.value(x)?, self.value.gradient(x)?.as_slice().to_vec()))
    }

    fn tape_value(tape: &Self::Tape) -> f64 {
        tape.0
    }

    fn tape_gradient(tape: &Self::Tape) -> &[f64] {
        &tape.1
    }

    fn pullback(&self, _: &Self::Tape, _: &[f64], _: f64, _: &[f64], _: &mut [f64]) {}
}

/// Per-point contribution to a scalar loss: the loss value and its partial
/// derivatives with respect to `V(x, w)` and `V_x(x, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLoss {
    pub loss: f64,
    pub dvalue: f64,
    pub dgrad: Vec<f64>,
}

/// Points per reduction chunk. Fixed so the summation order, and hence the
/// result, does not depend on the number of worker threads.
const CHUNK: usize = 64;

/// Loss `sum_i loss_i(V(x_i, w), V_x(x_i, w))` and its exact gradient in `w`.
///
/// `point_loss(i, value, grad)` returns the contribution of point `i`.
/// Chunks of points are evaluated in parallel and combined in index order.
pub fn loss_param_gradient<P, F>(
    model: &P,
    points: &[StateVec],
    w: &[f64],
    point_loss: F,
) -> Result<(f64, Vec<f64>)>
where
    P: ParametricValue,
    F: Fn(usize, f64, &[f64]) -> Result<PointLoss> + Sync,
{
    let np = model.num_params();
    let partials: Vec<Result<(f64, Vec<f64>)>> = points
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; np];
            for (k, x) in chunk.iter().enumerate() {
                let i = c * CHUNK + k;
                let tape = model.record(x, w)?;
                let pl = point_loss(i, P::tape_value(&tape), P::tape_gradient(&tape))?;
                loss += pl.loss;
                if pl.dvalue != 0.0 || pl.dgrad.iter().any(|g| *g != 0.0) {
                    model.pullback(&tape, w, pl.dvalue, &pl.dgrad, &mut grad);
                }
            }
            Ok((loss, grad))
        })
        .collect();

    let mut total = 0.0;
    let mut grad = vec![0.0; np];
    for part in partials {
        let (l, g) = part?;
        total += l;
        axpy(1.0, &g, &mut grad);
    }
    Ok((total, grad))
}

//! Convolutional/recurrent sequence autoencoder over session matrices.
//!
//! Encoder: width-3 convolution (`h → F` channels, zero padded, rectifier) → max-pool of
//! width and stride 2 → gated recurrent cell of hidden size `M` run over the pooled
//! sequence; the final hidden state is the embedding `y`.
//!
//! Decoder: dense projection of `y` onto a `⌈N/2⌉ × F` feature map (tanh) → nearest-neighbour
//! upsampling ×2 → width-3 transposed convolution back to `h` channels.
//!
//! The loss is the squared reconstruction error averaged over the real (non-padding) rows
//! of every session. Gradients are computed by hand and verified by [`gradient_check`].
//!
//! All parameters live in one flat vector in block order conv weights, conv bias, input
//! weights, recurrent weights, gate bias, projection weights, projection bias, deconv
//! weights, deconv bias.

use std::io::{Read, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{EmbeddingError, SessionMatrix};
use crate::binio::{self, FormatError};
use crate::rng;

const KW: usize = 3;

/// Layer sizes: session length `n`, word dimension `h`, filters `f`, embedding size `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AeDims {
    pub n: usize,
    pub h: usize,
    pub f: usize,
    pub m: usize,
}

impl AeDims {
    /// Length of the pooled sequence.
    pub fn pooled(&self) -> usize {
        self.n.div_ceil(2)
    }

    fn validate(&self) -> Result<(), EmbeddingError> {
        if self.n == 0 || self.h == 0 || self.f == 0 || self.m == 0 {
            return Err(EmbeddingError::Config("all autoencoder dimensions must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layout {
    conv_w: Range<usize>,
    conv_b: Range<usize>,
    wx: Range<usize>,
    wh: Range<usize>,
    gate_b: Range<usize>,
    proj_w: Range<usize>,
    proj_b: Range<usize>,
    deconv_w: Range<usize>,
    deconv_b: Range<usize>,
}

impl Layout {
    fn new(d: &AeDims) -> Self {
        let t = d.pooled();
        let sizes = [
            d.f * d.h * KW,
            d.f,
            4 * d.m * d.f,
            4 * d.m * d.m,
            4 * d.m,
            t * d.f * d.m,
            t * d.f,
            d.h * d.f * KW,
            d.h,
        ];
        let mut start = 0;
        let mut r = sizes.iter().map(|&s| {
            let range = start..start + s;
            start += s;
            range
        });
        let mut next = || r.next().unwrap();
        Layout {
            conv_w: next(),
            conv_b: next(),
            wx: next(),
            wh: next(),
            gate_b: next(),
            proj_w: next(),
            proj_b: next(),
            deconv_w: next(),
            deconv_b: next(),
        }
    }

    fn len(&self) -> usize {
        self.deconv_b.end
    }

    fn biases(&self) -> [Range<usize>; 4] {
        [self.conv_b.clone(), self.gate_b.clone(), self.proj_b.clone(), self.deconv_b.clone()]
    }
}

/// Trained (or initial) autoencoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderParams {
    pub dims: AeDims,
    /// Identity activations and permanently open gates; used to check gradients on an
    /// (almost) polynomial network.
    pub linear: bool,
    pub seed: u64,
    theta: Vec<f64>,
}

impl AutoencoderParams {
    /// Random initialisation scaled by fan-in; forget-gate bias starts at 1 and convolution
    /// biases at 0.01.
    pub fn init(dims: AeDims, linear: bool, seed: u64) -> Result<Self, EmbeddingError> {
        dims.validate()?;
        let lay = Layout::new(&dims);
        let mut theta = vec![0.0; lay.len()];
        let mut rng = rng::substream(seed, "ae-init");
        let mut fill = |r: Range<usize>, fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for x in &mut theta[r] {
                *x = (rng.random::<f64>() * 2.0 - 1.0) * s;
            }
        };
        fill(lay.conv_w.clone(), dims.h * KW);
        fill(lay.wx.clone(), dims.f);
        fill(lay.wh.clone(), dims.m);
        fill(lay.proj_w.clone(), dims.m);
        fill(lay.deconv_w.clone(), dims.f * KW);
        // keeps rectifier inputs off the kink at zero on padding rows
        theta[lay.conv_b.clone()].fill(0.01);
        if !linear {
            let fb = lay.gate_b.start + dims.m;
            theta[fb..fb + dims.m].fill(1.0);
        }
        Ok(AutoencoderParams { dims, linear, seed, theta })
    }

    pub fn num_params(&self) -> usize {
        self.theta.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn zero_biases(&mut self) {
        for r in Layout::new(&self.dims).biases() {
            self.theta[r].fill(0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
    }

    /// `"SAE1"`, u32 n, h, f, m, u32 flags (bit 0 = linear), u64 seed, then the parameter
    /// blocks as f64 in declared order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        binio::write_magic(&mut w, b"SAE1")?;
        for d in [self.dims.n, self.dims.h, self.dims.f, self.dims.m] {
            binio::write_u32(&mut w, d as u32)?;
        }
        binio::write_u32(&mut w, u32::from(self.linear))?;
        binio::write_u64(&mut w, self.seed)?;
        binio::write_f64s(&mut w, &self.theta)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FormatError> {
        binio::read_magic(&mut r, b"SAE1")?;
        let mut d = [0u32; 4];
        for x in &mut d {
            *x = binio::read_u32(&mut r)?;
        }
        let dims = AeDims { n: d[0] as usize, h: d[1] as usize, f: d[2] as usize, m: d[3] as usize };
        if dims.validate().is_err() {
            return Err(FormatError::Header("autoencoder dimensions must be positive".into()));
        }
        binio::checked_len(&d, "autoencoder")?;
        let linear = binio::read_u32(&mut r)? & 1 == 1;
        let seed = binio::read_u64(&mut r)?;
        let theta = binio::read_f64s(&mut r, Layout::new(&dims).len())?;
        Ok(AutoencoderParams { dims, linear, seed, theta })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one encoder pass.
struct EncoderTrace {
    /// Convolution pre-activations, `n × f`.
    z: Vec<f64>,
    /// Pooled features `t × f`, and the source row of each maximum.
    pooled: Vec<f64>,
    argmax: Vec<usize>,
    /// Per step: gate activations `[i | f | o | g]` (4m), cell state and hidden state.
    gates: Vec<f64>,
    cells: Vec<f64>,
    hidden: Vec<f64>,
}

impl EncoderTrace {
    fn output(&self, m: usize) -> Vec<f64> {
        self.hidden[self.hidden.len() - m..].to_vec()
    }
}

fn check_input(p: &AutoencoderParams, x: &SessionMatrix) -> Result<(), EmbeddingError> {
    if x.rows != p.dims.n || x.dim != p.dims.h || x.data.len() != x.rows * x.dim {
        return Err(EmbeddingError::DimMismatch(format!(
            "session matrix is {}×{} but the autoencoder expects {}×{}",
            x.rows, x.dim, p.dims.n, p.dims.h
        )));
    }
    Ok(())
}

fn run_encoder(p: &AutoencoderParams, x: &[f64]) -> EncoderTrace {
    let AeDims { n, h, f, m } = p.dims;
    let t_len = p.dims.pooled();
    let lay = Layout::new(&p.dims);
    let th = &p.theta;
    let (cw, cb) = (&th[lay.conv_w], &th[lay.conv_b]);

    let mut z = vec![0.0; n * f];
    for t in 0..n {
        for fi in 0..f {
            let mut acc = cb[fi];
            for k in 0..KW {
                let Some(src) = (t + k).checked_sub(1).filter(|&s| s < n) else {
                    continue;
                };
                let w = &cw[fi * h * KW..(fi + 1) * h * KW];
                let row = &x[src * h..(src + 1) * h];
                for c in 0..h {
                    acc += w[c * KW + k] * row[c];
                }
            }
            z[t * f + fi] = acc;
        }
    }
    let act = |v: f64| if p.linear { v } else { v.max(0.0) };

    let mut pooled = vec![0.0; t_len * f];
    let mut argmax = vec![0; t_len * f];
    for s in 0..t_len {
        for fi in 0..f {
            let a = 2 * s;
            let mut best = (a, act(z[a * f + fi]));
            if a + 1 < n {
                let v = act(z[(a + 1) * f + fi]);
                if v > best.1 {
                    best = (a + 1, v);
                }
            }
            pooled[s * f + fi] = best.1;
            argmax[s * f + fi] = best.0;
        }
    }

    let (wx, wh, gb) = (&th[lay.wx], &th[lay.wh], &th[lay.gate_b]);
    let mut gates = vec![0.0; t_len * 4 * m];
    let mut cells = vec![0.0; t_len * m];
    let mut hidden = vec![0.0; t_len * m];
    let mut pre = vec![0.0; 4 * m];
    for s in 0..t_len {
        let input = &pooled[s * f..(s + 1) * f];
        let (h_prev, c_prev): (Vec<f64>, Vec<f64>) = if s == 0 {
            (vec![0.0; m], vec![0.0; m])
        } else {
            (hidden[(s - 1) * m..s * m].to_vec(), cells[(s - 1) * m..s * m].to_vec())
        };
        for (g, pv) in pre.iter_mut().enumerate() {
            let mut acc = gb[g];
            let rx = &wx[g * f..(g + 1) * f];
            acc += rx.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            let rh = &wh[g * m..(g + 1) * m];
            acc += rh.iter().zip(&h_prev).map(|(a, b)| a * b).sum::<f64>();
            *pv = acc;
        }
        let gs = &mut gates[s * 4 * m..(s + 1) * 4 * m];
        for j in 0..m {
            let (i, fg, o, g) = if p.linear {
                (1.0, 1.0, 1.0, pre[3 * m + j])
            } else {
                (
                    sigmoid(pre[j]),
                    sigmoid(pre[m + j]),
                    sigmoid(pre[2 * m + j]),
                    pre[3 * m + j].tanh(),
                )
            };
            gs[j] = i;
            gs[m + j] = fg;
            gs[2 * m + j] = o;
            gs[3 * m + j] = g;
            let c = fg * c_prev[j] + i * g;
            cells[s * m + j] = c;
            hidden[s * m + j] = if p.linear { c } else { o * c.tanh() };
        }
    }
    EncoderTrace { z, pooled, argmax, gates, cells, hidden }
}

/// Intermediate values of one decoder pass.
struct DecoderTrace {
    /// Projected feature map `t × f` after its activation.
    q: Vec<f64>,
    xhat: Vec<f64>,
}

fn run_decoder(p: &AutoencoderParams, y: &[f64]) -> DecoderTrace {
    let AeDims { n, h, f, m } = p.dims;
    let t_len = p.dims.pooled();
    let lay = Layout::new(&p.dims);
    let th = &p.theta;
    let (pw, pb) = (&th[lay.proj_w], &th[lay.proj_b]);
    let q: Vec<f64> = (0..t_len * f)
        .map(|i| {
            let v = pb[i] + pw[i * m..(i + 1) * m].iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
            if p.linear {
                v
            } else {
                v.tanh()
            }
        })
        .collect();
    let (dw, db) = (&th[lay.deconv_w], &th[lay.deconv_b]);
    let mut xhat = vec![0.0; n * h];
    for t in 0..n {
        for c in 0..h {
            let mut acc = db[c];
            let w = &dw[c * f * KW..(c + 1) * f * KW];
            for k in 0..KW {
                // out[t] = Σ_k W[k] · up[t + 1 − k]
                let Some(src) = (t + 1).checked_sub(k).filter(|&s| s < n) else {
                    continue;
                };
                let row = &q[(src / 2) * f..(src / 2 + 1) * f];
                for fi in 0..f {
                    acc += w[fi * KW + k] * row[fi];
                }
            }
            xhat[t * h + c] = acc;
        }
    }
    DecoderTrace { q, xhat }
}

/// Session embedding `E(X)`.
pub fn encode(params: &AutoencoderParams, x: &SessionMatrix) -> Result<Vec<f64>, EmbeddingError> {
    check_input(params, x)?;
    Ok(run_encoder(params, &x.data).output(params.dims.m))
}

/// Reconstruction `D(y)` as an `n × h` row-major matrix.
pub fn decode(params: &AutoencoderParams, y: &[f64]) -> Result<Vec<f64>, EmbeddingError> {
    if y.len() != params.dims.m {
        return Err(EmbeddingError::DimMismatch(format!(
            "embedding has length {} but the decoder expects {}",
            y.len(),
            params.dims.m
        )));
    }
    Ok(run_decoder(params, y).xhat)
}

/// Squared error over real rows and the number of terms it sums, for one session.
fn sample_error(p: &AutoencoderParams, x: &SessionMatrix) -> (f64, usize) {
    if x.len == 0 {
        return (0.0, 0);
    }
    let y = run_encoder(p, &x.data).output(p.dims.m);
    let xhat = run_decoder(p, &y).xhat;
    let live = x.len * p.dims.h;
    let sse = xhat[..live].iter().zip(&x.data[..live]).map(|(a, b)| (a - b).powi(2)).sum();
    (sse, live)
}

/// Gradient of the squared error of one session, accumulated into `grad`.
fn sample_gradient(p: &AutoencoderParams, x: &SessionMatrix, grad: &mut [f64]) -> (f64, usize) {
    let AeDims { n, h, f, m } = p.dims;
    if x.len == 0 {
        return (0.0, 0);
    }
    let t_len = p.dims.pooled();
    let lay = Layout::new(&p.dims);
    let th = &p.theta;
    let enc = run_encoder(p, &x.data);
    let y = enc.output(m);
    let dec = run_decoder(p, &y);

    let live = x.len * h;
    let mut dxhat = vec![0.0; n * h];
    let mut sse = 0.0;
    for i in 0..live {
        let r = dec.xhat[i] - x.data[i];
        sse += r * r;
        dxhat[i] = 2.0 * r;
    }

    // transposed convolution
    let dw = &th[lay.deconv_w.clone()];
    let mut dup = vec![0.0; n * f];
    {
        let (gdw, rest) = grad[lay.deconv_w.start..].split_at_mut(lay.deconv_w.len());
        let gdb = &mut rest[..h];
        for t in 0..n {
            for c in 0..h {
                let g = dxhat[t * h + c];
                if g == 0.0 {
                    continue;
                }
                gdb[c] += g;
                for k in 0..KW {
                    let Some(src) = (t + 1).checked_sub(k).filter(|&s| s < n) else {
                        continue;
                    };
                    let qrow = &dec.q[(src / 2) * f..(src / 2 + 1) * f];
                    for fi in 0..f {
                        gdw[c * f * KW + fi * KW + k] += g * qrow[fi];
                        dup[src * f + fi] += g * dw[c * f * KW + fi * KW + k];
                    }
                }
            }
        }
    }

    // upsampling, projection activation, projection
    let mut dqpre = vec![0.0; t_len * f];
    for t in 0..n {
        for fi in 0..f {
            dqpre[(t / 2) * f + fi] += dup[t * f + fi];
        }
    }
    if !p.linear {
        for (d, q) in dqpre.iter_mut().zip(&dec.q) {
            *d *= 1.0 - q * q;
        }
    }
    let pw = &th[lay.proj_w.clone()];
    let mut dy = vec![0.0; m];
    for (i, &g) in dqpre.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad[lay.proj_b.start + i] += g;
        let gw = &mut grad[lay.proj_w.start + i * m..lay.proj_w.start + (i + 1) * m];
        for j in 0..m {
            gw[j] += g * y[j];
            dy[j] += g * pw[i * m + j];
        }
    }

    // recurrent cell, backwards through time
    let (wx, wh) = (&th[lay.wx.clone()], &th[lay.wh.clone()]);
    let mut dh = dy;
    let mut dc = vec![0.0; m];
    let mut da = vec![0.0; 4 * m];
    let mut dpooled = vec![0.0; t_len * f];
    for s in (0..t_len).rev() {
        let gs = &enc.gates[s * 4 * m..(s + 1) * 4 * m];
        let c_prev = |j: usize| if s == 0 { 0.0 } else { enc.cells[(s - 1) * m + j] };
        for j in 0..m {
            let c = enc.cells[s * m + j];
            let (i, fg, o, g) = (gs[j], gs[m + j], gs[2 * m + j], gs[3 * m + j]);
            if p.linear {
                dc[j] += dh[j];
                da[j] = 0.0;
                da[m + j] = 0.0;
                da[2 * m + j] = 0.0;
                da[3 * m + j] = dc[j];
            } else {
                let tc = c.tanh();
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                da[j] = dc[j] * g * i * (1.0 - i);
                da[m + j] = dc[j] * c_prev(j) * fg * (1.0 - fg);
                da[2 * m + j] = dh[j] * tc * o * (1.0 - o);
                da[3 * m + j] = dc[j] * i * (1.0 - g * g);
            }
            dc[j] *= fg;
        }
        let input = &enc.pooled[s * f..(s + 1) * f];
        let mut dh_prev = vec![0.0; m];
        for (gi, &a) in da.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            grad[lay.gate_b.start + gi] += a;
            let gx = lay.wx.start + gi * f;
            for fi in 0..f {
                grad[gx + fi] += a * input[fi];
                dpooled[s * f + fi] += a * wx[gi * f + fi];
            }
            if s > 0 {
                let hp = &enc.hidden[(s - 1) * m..s * m];
                let gh = lay.wh.start + gi * m;
                for j in 0..m {
                    grad[gh + j] += a * hp[j];
                    dh_prev[j] += a * wh[gi * m + j];
                }
            }
        }
        dh = dh_prev;
    }

    // max-pool, rectifier, convolution
    let mut dz = vec![0.0; n * f];
    for (i, &g) in dpooled.iter().enumerate() {
        let src = enc.argmax[i] * f + i % f;
        if p.linear || enc.z[src] > 0.0 {
            dz[src] += g;
        }
    }
    for t in 0..n {
        for fi in 0..f {
            let g = dz[t * f + fi];
            if g == 0.0 {
                continue;
            }
            grad[lay.conv_b.start + fi] += g;
            for k in 0..KW {
                let Some(src) = (t + k).checked_sub(1).filter(|&s| s < n) else {
                    continue;
                };
                let row = &x.data[src * h..(src + 1) * h];
                let gw = lay.conv_w.start + fi * h * KW;
                for c in 0..h {
                    grad[gw + c * KW + k] += g * row[c];
                }
            }
        }
    }
    (sse, live)
}

/// Mean squared reconstruction error over the real rows of all `sessions`.
pub fn reconstruction_loss(params: &AutoencoderParams, sessions: &[SessionMatrix]) -> f64 {
    let parts: Vec<(f64, usize)> = sessions.par_iter().map(|x| sample_error(params, x)).collect();
    let (sse, count) = parts.iter().fold((0.0, 0), |(a, b), &(s, c)| (a + s, b + c));
    if count == 0 {
        0.0
    } else {
        sse / count as f64
    }
}

/// Loss and its gradient over a batch. Per-session results are reduced in input order, so
/// the result does not depend on the thread count.
fn batch_gradient(params: &AutoencoderParams, batch: &[&SessionMatrix]) -> (f64, Vec<f64>) {
    let np = params.num_params();
    let parts: Vec<(f64, usize, Vec<f64>)> = batch
        .par_iter()
        .map(|x| {
            let mut g = vec![0.0; np];
            let (sse, count) = sample_gradient(params, x, &mut g);
            (sse, count, g)
        })
        .collect();
    let mut grad = vec![0.0; np];
    let (mut sse, mut count) = (0.0, 0usize);
    for (s, c, g) in parts {
        sse += s;
        count += c;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    if count == 0 {
        return (0.0, grad);
    }
    let scale = 1.0 / count as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (sse * scale, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeConfig {
    pub dims: AeDims,
    pub linear: bool,
    pub lr: f64,
    pub batch: usize,
    pub steps: usize,
    pub seed: u64,
    /// Evaluate the full training-set loss every this many steps.
    pub eval_every: Option<usize>,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            dims: AeDims { n: 500, h: 128, f: 64, m: 200 },
            linear: false,
            lr: 1e-3,
            batch: 32,
            steps: 1000,
            seed: 0,
            eval_every: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AeFit {
    pub params: AutoencoderParams,
    /// Mini-batch loss before each update.
    pub loss_trace: Vec<f64>,
    /// `(step, full-set loss)` checkpoints, step 0 being the initial parameters.
    pub eval_trace: Vec<(usize, f64)>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Trains the autoencoder with Adam on shuffled mini-batches.
pub fn train_autoencoder(sessions: &[SessionMatrix], cfg: &AeConfig) -> Result<AeFit, EmbeddingError> {
    if sessions.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(EmbeddingError::Config("batch must be positive and lr > 0".into()));
    }
    let mut params = AutoencoderParams::init(cfg.dims, cfg.linear, cfg.seed)?;
    for x in sessions {
        check_input(&params, x)?;
    }
    let mut rng = rng::substream(cfg.seed, "ae-batches");
    let np = params.num_params();
    let (mut m1, mut m2) = (vec![0.0; np], vec![0.0; np]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);

    let initial_loss = reconstruction_loss(&params, sessions);
    let mut eval_trace = vec![(0, initial_loss)];
    let mut loss_trace = Vec::with_capacity(cfg.steps);
    let mut order: Vec<usize> = (0..sessions.len()).collect();
    let mut cursor = order.len();
    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch);
        while batch.len() < cfg.batch.min(sessions.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(&sessions[order[cursor]]);
            cursor += 1;
        }
        let (loss, grad) = batch_gradient(&params, &batch);
        loss_trace.push(loss);

        let (c1, c2) = (1.0 - b1.powi(step as i32), 1.0 - b2.powi(step as i32));
        for (i, g) in grad.into_iter().enumerate() {
            m1[i] = b1 * m1[i] + (1.0 - b1) * g;
            m2[i] = b2 * m2[i] + (1.0 - b2) * g * g;
            params.theta[i] -= cfg.lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + eps);
        }
        if cfg.eval_every.is_some_and(|e| e > 0 && step % e == 0) {
            eval_trace.push((step, reconstruction_loss(&params, sessions)));
        }
    }
    let final_loss = reconstruction_loss(&params, sessions);
    Ok(AeFit { params, loss_trace, eval_trace, initial_loss, final_loss })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// Largest relative disagreement between the backpropagated gradient of
/// [`reconstruction_loss`] and central finite differences `(L(θ+ε) − L(θ−ε)) / 2ε`, over
/// `samples` distinct randomly chosen parameters.
///
/// The relative error is `|a − n| / max(|a|, |n|)`; pairs where both are below `1e-10`
/// count as agreeing.
pub fn gradient_check(
    params: &AutoencoderParams,
    sessions: &[SessionMatrix],
    eps: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheck, EmbeddingError> {
    for x in sessions {
        check_input(params, x)?;
    }
    let refs: Vec<&SessionMatrix> = sessions.iter().collect();
    let (_, analytic) = batch_gradient(params, &refs);
    let np = params.num_params();
    let mut idx: Vec<usize> = (0..np).collect();
    idx.shuffle(&mut rng::substream(seed, "gradcheck"));
    idx.truncate(samples.min(np));

    let mut probe = params.clone();
    let mut max_rel_err: f64 = 0.0;
    for &i in &idx {
        let orig = probe.theta[i];
        probe.theta[i] = orig + eps;
        let plus = reconstruction_loss(&probe, sessions);
        probe.theta[i] = orig - eps;
        let minus = reconstruction_loss(&probe, sessions);
        probe.theta[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        if scale >= 1e-10 {
            max_rel_err = max_rel_err.max((a - numeric).abs() / scale);
        }
    }
    Ok(GradCheck { max_rel_err, checked: idx.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    const DIMS: AeDims = AeDims { n: 8, h: 4, f: 6, m: 5 };

    fn random_session(dims: AeDims, len: usize, seed: u64) -> SessionMatrix {
        let mut rng = rng::seeded(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut data = vec![0.0; dims.n * dims.h];
        for v in &mut data[..len * dims.h] {
            *v = normal.sample(&mut rng);
        }
        SessionMatrix { key: format!("s-{seed}"), rows: dims.n, dim: dims.h, len, data }
    }

    #[test]
    fn shapes() {
        let p = AutoencoderParams::init(DIMS, false, 1).unwrap();
        let x = random_session(DIMS, 6, 2);
        let y = encode(&p, &x).unwrap();
        assert_eq!(y.len(), 5);
        assert_eq!(decode(&p, &y).unwrap().len(), 8 * 4);
        assert!(y.iter().all(|v| v.is_finite()));

        let odd = AeDims { n: 7, ..DIMS };
        let p = AutoencoderParams::init(odd, false, 1).unwrap();
        let y = encode(&p, &random_session(odd, 7, 3)).unwrap();
        assert_eq!(decode(&p, &y).unwrap().len(), 7 * 4);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let p = AutoencoderParams::init(DIMS, false, 1).unwrap();
        let wrong = random_session(AeDims { n: 6, ..DIMS }, 3, 1);
        assert!(matches!(encode(&p, &wrong), Err(EmbeddingError::DimMismatch(_))));
        assert!(matches!(decode(&p, &[0.0; 3]), Err(EmbeddingError::DimMismatch(_))));
    }

    #[test]
    fn zero_input_with_zero_biases_encodes_to_zero() {
        let mut p = AutoencoderParams::init(DIMS, false, 4).unwrap();
        p.zero_biases();
        let x = SessionMatrix { key: "z".into(), rows: 8, dim: 4, len: 0, data: vec![0.0; 32] };
        assert_eq!(encode(&p, &x).unwrap(), vec![0.0; 5]);
        assert_eq!(decode(&p, &[0.0; 5]).unwrap(), vec![0.0; 32]);
    }

    #[test]
    fn pure_functions() {
        let p = AutoencoderParams::init(DIMS, false, 4).unwrap();
        let x = random_session(DIMS, 8, 5);
        assert_eq!(encode(&p, &x).unwrap(), encode(&p, &x.clone()).unwrap());
        let y = vec![0.3; 5];
        assert_eq!(decode(&p, &y).unwrap(), decode(&p, &y).unwrap());
    }

    #[test]
    fn padding_rows_are_masked() {
        let p = AutoencoderParams::init(DIMS, false, 4).unwrap();
        let mut x = random_session(DIMS, 5, 6);
        let base = reconstruction_loss(&p, std::slice::from_ref(&x));
        // rows past the real length never enter the loss
        let (sse, count) = sample_error(&p, &x);
        assert_eq!(count, 5 * 4);
        assert!((sse / count as f64 - base).abs() < 1e-15);
        x.len = 0;
        assert_eq!(reconstruction_loss(&p, &[x]), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let p = AutoencoderParams::init(DIMS, false, seed).unwrap();
            let xs: Vec<_> = (0..3).map(|i| random_session(DIMS, 5 + i, seed * 10 + i as u64)).collect();
            let gc = gradient_check(&p, &xs, 1e-5, 200, seed).unwrap();
            assert_eq!(gc.checked, 200);
            assert!(gc.max_rel_err < 1e-4, "seed {seed}: {}", gc.max_rel_err);
        }
    }

    #[test]
    fn linear_network_gradients_are_near_exact() {
        let p = AutoencoderParams::init(DIMS, true, 8).unwrap();
        let xs: Vec<_> = (0..2).map(|i| random_session(DIMS, 8, 40 + i)).collect();
        let gc = gradient_check(&p, &xs, 1e-5, 200, 8).unwrap();
        assert!(gc.max_rel_err < 1e-7, "{}", gc.max_rel_err);
    }

    #[test]
    fn larger_step_gives_larger_error() {
        let p = AutoencoderParams::init(DIMS, false, 2).unwrap();
        let xs: Vec<_> = (0..2).map(|i| random_session(DIMS, 8, 70 + i)).collect();
        let fine = gradient_check(&p, &xs, 1e-5, 200, 2).unwrap();
        let coarse = gradient_check(&p, &xs, 1e-2, 200, 2).unwrap();
        assert!(coarse.max_rel_err > fine.max_rel_err);
    }

    #[test]
    fn training_reduces_loss_deterministically() {
        let xs: Vec<_> = (0..40).map(|i| random_session(DIMS, 3 + i % 6, 100 + i as u64)).collect();
        let cfg = AeConfig { dims: DIMS, lr: 1e-2, batch: 8, steps: 60, seed: 3, ..Default::default() };
        let a = train_autoencoder(&xs, &cfg).unwrap();
        let b = train_autoencoder(&xs, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert!(a.final_loss < a.initial_loss);
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
        assert!(a.params.is_finite());
    }

    #[test]
    fn file_round_trip() {
        let p = AutoencoderParams::init(DIMS, false, 12).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SAE1");
        assert_eq!(AutoencoderParams::read_from(&buf[..]).unwrap(), p);
    }
}

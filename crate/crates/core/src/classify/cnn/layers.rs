//! Layer primitives on flat `f64` buffers.
//!
//! Feature maps are channel-major, `[c][h][w]`. Convolution weights are
//! `[c_out][c_in][k][k]`; dense weights are `[n_out][n_in]`. Every backward
//! function returns gradients with the same layouts as its forward inputs.

/// Valid (no padding), stride-1 cross-correlation plus bias.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    c_out: usize,
    k: usize,
) -> Vec<f64> {
    debug_assert_eq!(input.len(), c_in * h * w);
    debug_assert_eq!(weight.len(), c_out * c_in * k * k);
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
        plane.fill(bias[co]);
        for ci in 0..c_in {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((co * c_in + ci) * k + ky) * k + kx];
                    for y in 0..oh {
                        let row = &src[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                        let dst = &mut plane[y * ow..(y + 1) * ow];
                        for (d, s) in dst.iter_mut().zip(row) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// Only filled when requested; the first layer never needs it.
    pub input: Option<Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    c_out: usize,
    k: usize,
    grad_out: &[f64],
    want_input: bool,
) -> ConvGrads {
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; c_out];
    let mut gi = want_input.then(|| vec![0.0; input.len()]);
    for co in 0..c_out {
        let g = &grad_out[co * oh * ow..(co + 1) * oh * ow];
        gb[co] = g.iter().sum();
        for ci in 0..c_in {
            let src = &input[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let wi = ((co * c_in + ci) * k + ky) * k + kx;
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let row = &src[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                        let gr = &g[y * ow..(y + 1) * ow];
                        acc += row.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                    }
                    gw[wi] = acc;
                    if let Some(gi) = gi.as_mut() {
                        let wv = weight[wi];
                        let dst_plane = &mut gi[ci * h * w..(ci + 1) * h * w];
                        for y in 0..oh {
                            let dst = &mut dst_plane[(y + ky) * w + kx..(y + ky) * w + kx + ow];
                            for (d, s) in dst.iter_mut().zip(&g[y * ow..(y + 1) * ow]) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
    }
    ConvGrads {
        weight: gw,
        bias: gb,
        input: gi,
    }
}

pub fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes `grad` where the activation was clamped.
pub fn relu_backward(grad: &mut [f64], activated: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 max-pool, stride 2. An odd trailing row or column is dropped.
/// Returns the pooled map and, per output cell, the input index it came from.
pub fn maxpool2_forward(input: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

pub fn maxpool2_backward(grad_out: &[f64], argmax: &[u32], input_len: usize) -> Vec<f64> {
    let mut g = vec![0.0; input_len];
    for (&i, &v) in argmax.iter().zip(grad_out) {
        g[i as usize] += v;
    }
    g
}

/// `y[b] = W x[b] + bias` for a row-major batch `x: [batch][n_in]`.
pub fn dense_forward(x: &[f64], batch: usize, n_in: usize, weight: &[f64], bias: &[f64], n_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * n_out];
    for b in 0..batch {
        let xb = &x[b * n_in..(b + 1) * n_in];
        for o in 0..n_out {
            let wr = &weight[o * n_in..(o + 1) * n_in];
            y[b * n_out + o] = bias[o] + wr.iter().zip(xb).map(|(a, c)| a * c).sum::<f64>();
        }
    }
    y
}

/// Returns `(grad_weight, grad_bias, grad_input)`.
pub fn dense_backward(
    x: &[f64],
    batch: usize,
    n_in: usize,
    weight: &[f64],
    n_out: usize,
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut gw = vec![0.0; n_out * n_in];
    crate::par::for_each_chunk_mut(&mut gw, n_in, |o, row| {
        for b in 0..batch {
            let g = grad_out[b * n_out + o];
            if g != 0.0 {
                for (r, xv) in row.iter_mut().zip(&x[b * n_in..(b + 1) * n_in]) {
                    *r += g * xv;
                }
            }
        }
    });
    let gb: Vec<f64> = (0..n_out).map(|o| (0..batch).map(|b| grad_out[b * n_out + o]).sum()).collect();
    let mut gx = vec![0.0; batch * n_in];
    crate::par::for_each_chunk_mut(&mut gx, n_in, |b, row| {
        for o in 0..n_out {
            let g = grad_out[b * n_out + o];
            if g != 0.0 {
                for (r, wv) in row.iter_mut().zip(&weight[o * n_in..(o + 1) * n_in]) {
                    *r += g * wv;
                }
            }
        }
    });
    (gw, gb, gx)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean categorical cross-entropy over the batch and its gradient with
/// respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], n: usize) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        let row = &logits[b * n..(b + 1) * n];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for c in 0..n {
            let p = (row[c] - lse).exp();
            grad[b * n + c] = (p - f64::from(u8::from(c == y))) / batch as f64;
        }
    }
    (loss / batch as f64, grad)
}

/// Independent per-class sigmoid with binary cross-entropy against one-hot
/// targets, summed over classes and averaged over the batch.
pub fn sigmoid_bce(logits: &[f64], labels: &[usize], n: usize) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        for c in 0..n {
            let z = logits[b * n + c];
            let t = f64::from(u8::from(c == y));
            // log(1 + e^z) computed without overflow.
            let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
            loss += softplus - t * z;
            grad[b * n + c] = (sigmoid(z) - t) / batch as f64;
        }
    }
    (loss / batch as f64, grad)
}

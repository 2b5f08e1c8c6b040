//! Layers with hand-written backward passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Param, Tensor};
use crate::grid::cell_bounds;

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// 2D convolution over `[C, H, W]` maps with per-axis kernel size, padding
/// and dilation (zero padding, unit batch).
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: Param,
    pub b: Param,
    pub stride: usize,
    pub pad: (usize, usize),
    pub dilation: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: usize,
        pad: (usize, usize),
        dilation: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let (kh, kw) = kernel;
        let fan_in = in_ch * kh * kw;
        let w = Tensor::from_vec(
            &[out_ch, in_ch, kh, kw],
            he_uniform(rng, fan_in, out_ch * fan_in),
        );
        let b = Tensor::zeros(&[out_ch]);
        Self {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), b),
            stride: stride.max(1),
            pad,
            dilation: (dilation.0.max(1), dilation.1.max(1)),
        }
    }

    /// 3×3 convolution, padding 1.
    pub fn k3(name: &str, in_ch: usize, out_ch: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(name, in_ch, out_ch, (3, 3), stride, (1, 1), (1, 1), rng)
    }

    /// 1×1 pointwise convolution.
    pub fn k1(name: &str, in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(name, in_ch, out_ch, (1, 1), 1, (0, 0), (1, 1), rng)
    }

    /// 3×3 convolution with dilation `rate` and matching padding.
    pub fn dilated(name: &str, in_ch: usize, out_ch: usize, rate: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::new(name, in_ch, out_ch, (3, 3), 1, (rate, rate), (rate, rate), rng)
    }

    pub fn in_channels(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = (self.w.value.shape()[2], self.w.value.shape()[3]);
        let eff_h = self.dilation.0 * (kh - 1) + 1;
        let eff_w = self.dilation.1 * (kw - 1) + 1;
        let oh = (h + 2 * self.pad.0).saturating_sub(eff_h) / self.stride + 1;
        let ow = (w + 2 * self.pad.1).saturating_sub(eff_w) / self.stride + 1;
        (oh, ow)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let in_ch = x.channels();
        assert_eq!(in_ch, self.in_channels(), "conv {}: channel mismatch", self.w.name);
        let (h, w) = x.spatial();
        let (oh, ow) = self.out_size(h, w);
        let out_ch = self.out_channels();
        let (kh, kw) = (self.w.value.shape()[2], self.w.value.shape()[3]);
        let mut y = Tensor::zeros(&[out_ch, oh, ow]);
        let wd = self.w.value.data();
        let bd = self.b.value.data();
        for oc in 0..out_ch {
            let plane = y.channel_mut(oc);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bd[oc];
                    for ic in 0..in_ch {
                        let xp = x.channel(ic);
                        let wbase = ((oc * in_ch) + ic) * kh * kw;
                        for ky in 0..kh {
                            let iy = (oy * self.stride + ky * self.dilation.0) as isize
                                - self.pad.0 as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * self.stride + kx * self.dilation.1) as isize
                                    - self.pad.1 as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += wd[wbase + ky * kw + kx]
                                    * xp[iy as usize * w + ix as usize];
                            }
                        }
                    }
                    plane[oy * ow + ox] = acc;
                }
            }
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, x: &Tensor, gy: &Tensor) -> Tensor {
        let in_ch = x.channels();
        let (h, w) = x.spatial();
        let (oh, ow) = self.out_size(h, w);
        assert_eq!(gy.shape(), &[self.out_channels(), oh, ow]);
        let (kh, kw) = (self.w.value.shape()[2], self.w.value.shape()[3]);
        let mut gx = Tensor::zeros(&[in_ch, h, w]);
        let wd = self.w.value.data();
        let gw = self.w.grad.data_mut();
        let gb = self.b.grad.data_mut();
        for oc in 0..self.w.value.shape()[0] {
            let gplane = gy.channel(oc);
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gplane[oy * ow + ox];
                    if g == 0.0 {
                        continue;
                    }
                    gb[oc] += g;
                    for ic in 0..in_ch {
                        let xp = x.channel(ic);
                        let gxp = gx.channel_mut(ic);
                        let wbase = ((oc * in_ch) + ic) * kh * kw;
                        for ky in 0..kh {
                            let iy = (oy * self.stride + ky * self.dilation.0) as isize
                                - self.pad.0 as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * self.stride + kx * self.dilation.1) as isize
                                    - self.pad.1 as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = iy as usize * w + ix as usize;
                                gw[wbase + ky * kw + kx] += g * xp[xi];
                                gxp[xi] += g * wd[wbase + ky * kw + kx];
                            }
                        }
                    }
                }
            }
        }
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }
}

/// Fully connected layer on flat vectors.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
}

impl Linear {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = Tensor::from_vec(&[out_dim, in_dim], he_uniform(rng, in_dim, out_dim * in_dim));
        let b = Tensor::zeros(&[out_dim]);
        Self {
            w: Param::new(format!("{name}.w"), w),
            b: Param::new(format!("{name}.b"), b),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        assert_eq!(x.len(), in_dim, "linear {}: input length mismatch", self.w.name);
        let wd = self.w.value.data();
        let bd = self.b.value.data();
        (0..out_dim)
            .map(|o| {
                let row = &wd[o * in_dim..(o + 1) * in_dim];
                bd[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&mut self, x: &[f64], gy: &[f64]) -> Vec<f64> {
        let (out_dim, in_dim) = (self.out_dim(), self.in_dim());
        assert_eq!(gy.len(), out_dim);
        let wd = self.w.value.data();
        let gw = self.w.grad.data_mut();
        let gb = self.b.grad.data_mut();
        let mut gx = vec![0.0; in_dim];
        for o in 0..out_dim {
            let g = gy[o];
            gb[o] += g;
            for i in 0..in_dim {
                gw[o * in_dim + i] += g * x[i];
                gx[i] += g * wd[o * in_dim + i];
            }
        }
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_vec(
        x.shape(),
        x.data().iter().map(|&v| v.max(0.0)).collect(),
    )
}

pub fn relu_backward(x: &Tensor, gy: &Tensor) -> Tensor {
    Tensor::from_vec(
        x.shape(),
        x.data()
            .iter()
            .zip(gy.data())
            .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
            .collect(),
    )
}

pub fn relu_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_vec_backward(x: &[f64], gy: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(gy)
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect()
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bilinear resampling of a `[C, H, W]` map to `oh`×`ow` (half-pixel centers).
pub fn resize_bilinear(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let c = x.channels();
    let (h, w) = x.spatial();
    if (h, w) == (oh, ow) {
        return x.clone();
    }
    let mut y = Tensor::zeros(&[c, oh, ow]);
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    for oy in 0..oh {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for ox in 0..ow {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let xp = x.channel(ch);
                let v = xp[y0 * w + x0] * (1.0 - wy) * (1.0 - wx)
                    + xp[y0 * w + x1] * (1.0 - wy) * wx
                    + xp[y1 * w + x0] * wy * (1.0 - wx)
                    + xp[y1 * w + x1] * wy * wx;
                y.channel_mut(ch)[oy * ow + ox] = v;
            }
        }
    }
    y
}

/// Transpose of [`resize_bilinear`]: scatters output gradients back to the
/// `ih`×`iw` input grid.
pub fn resize_bilinear_backward(gy: &Tensor, ih: usize, iw: usize) -> Tensor {
    let c = gy.channels();
    let (oh, ow) = gy.spatial();
    if (ih, iw) == (oh, ow) {
        return gy.clone();
    }
    let mut gx = Tensor::zeros(&[c, ih, iw]);
    let sy = ih as f64 / oh as f64;
    let sx = iw as f64 / ow as f64;
    for oy in 0..oh {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (ih - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(ih - 1);
        let wy = fy - y0 as f64;
        for ox in 0..ow {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (iw - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(iw - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let g = gy.channel(ch)[oy * ow + ox];
                let gp = gx.channel_mut(ch);
                gp[y0 * iw + x0] += g * (1.0 - wy) * (1.0 - wx);
                gp[y0 * iw + x1] += g * (1.0 - wy) * wx;
                gp[y1 * iw + x0] += g * wy * (1.0 - wx);
                gp[y1 * iw + x1] += g * wy * wx;
            }
        }
    }
    gx
}

pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
    let (h, w) = parts[0].spatial();
    let total: usize = parts.iter().map(|p| p.channels()).sum();
    let mut data = Vec::with_capacity(total * h * w);
    for p in parts {
        assert_eq!(p.spatial(), (h, w), "concat: spatial mismatch");
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[total, h, w], data)
}

/// Splits a channel-gradient back into per-part gradients.
pub fn split_channels(g: &Tensor, channels: &[usize]) -> Vec<Tensor> {
    let (h, w) = g.spatial();
    let mut out = Vec::with_capacity(channels.len());
    let mut offset = 0;
    for &c in channels {
        let slice = &g.data()[offset * h * w..(offset + c) * h * w];
        out.push(Tensor::from_vec(&[c, h, w], slice.to_vec()));
        offset += c;
    }
    assert_eq!(offset, g.channels());
    out
}

pub fn global_avg_pool(x: &Tensor) -> Vec<f64> {
    let (h, w) = x.spatial();
    let n = (h * w) as f64;
    (0..x.channels())
        .map(|c| x.channel(c).iter().sum::<f64>() / n)
        .collect()
}

pub fn global_avg_pool_backward(g: &[f64], c: usize, h: usize, w: usize) -> Tensor {
    let mut gx = Tensor::zeros(&[c, h, w]);
    let n = (h * w) as f64;
    for ch in 0..c {
        let v = g[ch] / n;
        gx.channel_mut(ch).fill(v);
    }
    gx
}

/// The feature-map block of grid cell `k` along an axis of length `size`.
///
/// Uses the image-level cell boundaries scaled to the map (`round(k*size/M)`)
/// and widens to at least one pixel when the map is smaller than the grid.
pub fn block_bounds(size: usize, m: usize, k: usize) -> (usize, usize) {
    let (lo, hi) = cell_bounds(size as u32, m, k);
    let lo = lo.min(size - 1);
    let hi = hi.clamp(lo + 1, size);
    (lo, hi)
}

/// Result of max pooling a feature map over the scaled M×M grid blocks:
/// one `channels`-long feature row per candidate, plus the winning spatial
/// index per (candidate, channel) for the backward scatter.
#[derive(Debug, Clone)]
pub struct BlockPool {
    /// `[M*M, channels]` pooled features, candidate-major.
    pub features: Tensor,
    /// Winning `y*width + x` per (candidate, channel), candidate-major.
    pub argmax: Vec<usize>,
}

/// Channel-wise max over each candidate's scaled grid block.
pub fn block_max_pool(x: &Tensor, m: usize) -> BlockPool {
    let c = x.channels();
    let (h, w) = x.spatial();
    let n = m * m;
    let mut features = Tensor::zeros(&[n, c]);
    let mut argmax = vec![0usize; n * c];
    for row in 0..m {
        let (y0, y1) = block_bounds(h, m, row);
        for col in 0..m {
            let (x0, x1) = block_bounds(w, m, col);
            let cand = row * m + col;
            for ch in 0..c {
                let plane = x.channel(ch);
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = y0 * w + x0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        let v = plane[y * w + xx];
                        if v > best {
                            best = v;
                            best_idx = y * w + xx;
                        }
                    }
                }
                features.data_mut()[cand * c + ch] = best;
                argmax[cand * c + ch] = best_idx;
            }
        }
    }
    BlockPool { features, argmax }
}

/// Scatters per-candidate feature gradients back onto the map.
pub fn block_max_pool_backward(
    g_features: &Tensor,
    argmax: &[usize],
    channels: usize,
    h: usize,
    w: usize,
) -> Tensor {
    let n = g_features.shape()[0];
    assert_eq!(g_features.shape(), &[n, channels]);
    let mut gx = Tensor::zeros(&[channels, h, w]);
    for cand in 0..n {
        for ch in 0..channels {
            let g = g_features.data()[cand * channels + ch];
            gx.channel_mut(ch)[argmax[cand * channels + ch]] += g;
        }
    }
    gx
}

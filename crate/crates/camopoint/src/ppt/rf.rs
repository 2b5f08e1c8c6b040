//! Receptive-field enlargement block: four parallel branches with growing
//! dilation (rates 3, 5, 7 behind separable 1×k/k×1 pre-filters), fused by a
//! 3×3 convolution plus a 1×1 residual, ReLU at the end.

use rand_chacha::ChaCha8Rng;

use crate::nn::{concat_channels, relu, relu_backward, split_channels, Conv2d, Param, Tensor};

#[derive(Debug, Clone)]
pub struct RfBlock {
    branches: Vec<Vec<Conv2d>>,
    fuse: Conv2d,
    res: Conv2d,
}

/// Forward intermediates: per-branch conv outputs plus the fused pre-ReLU map.
pub struct RfCache {
    branch_outs: Vec<Vec<Tensor>>,
    cat: Tensor,
    pre: Tensor,
}

impl RfBlock {
    pub fn new(name: &str, in_ch: usize, out_ch: usize, rng: &mut ChaCha8Rng) -> Self {
        let branch = |tag: &str, rate: usize, rng: &mut ChaCha8Rng| -> Vec<Conv2d> {
            // Separable 1×k/k×1 pre-filters with k equal to the dilation rate.
            let k = rate;
            vec![
                Conv2d::k1(&format!("{name}.{tag}.reduce"), in_ch, out_ch, rng),
                Conv2d::new(
                    &format!("{name}.{tag}.row"),
                    out_ch,
                    out_ch,
                    (1, k),
                    1,
                    (0, k / 2),
                    (1, 1),
                    rng,
                ),
                Conv2d::new(
                    &format!("{name}.{tag}.col"),
                    out_ch,
                    out_ch,
                    (k, 1),
                    1,
                    (k / 2, 0),
                    (1, 1),
                    rng,
                ),
                Conv2d::dilated(&format!("{name}.{tag}.dil"), out_ch, out_ch, rate, rng),
            ]
        };
        let branches = vec![
            vec![Conv2d::k1(&format!("{name}.b0.reduce"), in_ch, out_ch, rng)],
            branch("b1", 3, rng),
            branch("b2", 5, rng),
            branch("b3", 7, rng),
        ];
        let fuse = Conv2d::k3(&format!("{name}.fuse"), 4 * out_ch, out_ch, 1, rng);
        let res = Conv2d::k1(&format!("{name}.res"), in_ch, out_ch, rng);
        Self {
            branches,
            fuse,
            res,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.res.out_channels()
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, RfCache) {
        let mut branch_outs = Vec::with_capacity(self.branches.len());
        for branch in &self.branches {
            let mut outs = Vec::with_capacity(branch.len());
            let mut cur = x;
            for conv in branch {
                let y = conv.forward(cur);
                outs.push(y);
                cur = outs.last().unwrap();
            }
            branch_outs.push(outs);
        }
        let tails: Vec<&Tensor> = branch_outs.iter().map(|o| o.last().unwrap()).collect();
        let cat = concat_channels(&tails);
        let fused = self.fuse.forward(&cat);
        let shortcut = self.res.forward(x);
        let mut pre = fused;
        for (a, b) in pre.data_mut().iter_mut().zip(shortcut.data()) {
            *a += b;
        }
        let out = relu(&pre);
        (
            out,
            RfCache {
                branch_outs,
                cat,
                pre,
            },
        )
    }

    /// Accumulates parameter gradients; returns the gradient w.r.t. `x`.
    pub fn backward(&mut self, x: &Tensor, cache: &RfCache, gy: &Tensor) -> Tensor {
        let gpre = relu_backward(&cache.pre, gy);
        let mut gx = self.res.backward(x, &gpre);
        let gcat = self.fuse.backward(&cache.cat, &gpre);
        let widths: Vec<usize> = cache
            .branch_outs
            .iter()
            .map(|o| o.last().unwrap().channels())
            .collect();
        let branch_grads = split_channels(&gcat, &widths);
        for (branch, (outs, mut g)) in self
            .branches
            .iter_mut()
            .zip(cache.branch_outs.iter().zip(branch_grads))
        {
            for i in (0..branch.len()).rev() {
                let input = if i == 0 { x } else { &outs[i - 1] };
                g = branch[i].backward(input, &g);
            }
            for (a, b) in gx.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        gx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = Vec::new();
        for branch in &mut self.branches {
            for conv in branch {
                out.extend(conv.params_mut());
            }
        }
        out.extend(self.fuse.params_mut());
        out.extend(self.res.params_mut());
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = Vec::new();
        for branch in &self.branches {
            for conv in branch {
                out.extend(conv.params());
            }
        }
        out.extend(self.fuse.params());
        out.extend(self.res.params());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn output_keeps_spatial_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rf = RfBlock::new("rf", 6, 8, &mut rng);
        let x = Tensor::from_vec(&[6, 5, 9], (0..270).map(|i| (i % 7) as f64 * 0.1).collect());
        let (y, _) = rf.forward(&x);
        assert_eq!(y.shape(), &[8, 5, 9]);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rf = RfBlock::new("rf", 3, 4, &mut rng);
        let x = Tensor::from_vec(
            &[3, 4, 4],
            (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let (y, cache) = rf.forward(&x);
        let gy = Tensor::from_vec(
            y.shape(),
            (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let gx = rf.clone().backward(&x, &cache, &gy);
        let eps = 1e-6;
        for _ in 0..16 {
            let i = rng.gen_range(0..x.len());
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let lp: f64 = rf.forward(&xp).0.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
            let lm: f64 = rf.forward(&xm).0.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (fd - gx.data()[i]).abs() <= 1e-5 * (1.0 + fd.abs()),
                "fd={fd} analytic={}",
                gx.data()[i]
            );
        }
    }
}

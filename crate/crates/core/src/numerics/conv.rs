//! Batched 2D convolution kernels on NCHW buffers (cross-correlation convention).

/// Geometry of a strided, zero-padded 2D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel_h) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel_w) / self.stride + 1
    }

    pub fn input_len(&self) -> usize {
        self.batch * self.in_channels * self.in_h * self.in_w
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.out_channels * self.out_h() * self.out_w()
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel_h * self.kernel_w
    }
}

/// Output indices `o` in `0..n_out` with `o·stride + k − pad ∈ [0, n_in)`.
fn valid_range(n_in: usize, n_out: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let (k, s, p, n_in) = (k as isize, stride as isize, pad as isize, n_in as isize);
    let lo = if p - k > 0 { (p - k + s - 1) / s } else { 0 };
    let hi = (n_in - 1 + p - k).div_euclid(s) + 1;
    let hi = hi.clamp(0, n_out as isize);
    (lo.min(hi) as usize, hi as usize)
}

/// `out[b,o] = bias[o] + Σ_c w[o,c] ⋆ in[b,c]`; weight layout `[O, C, KH, KW]`.
pub fn conv2d_forward(g: &ConvGeometry, input: &[f64], weight: &[f64], bias: Option<&[f64]>) -> Vec<f64> {
    let (oh_n, ow_n) = (g.out_h(), g.out_w());
    let plane_in = g.in_h * g.in_w;
    let plane_out = oh_n * ow_n;
    let mut out = vec![0.0; g.output_len()];
    for b in 0..g.batch {
        for o in 0..g.out_channels {
            let dst = &mut out[(b * g.out_channels + o) * plane_out..][..plane_out];
            if let Some(bias) = bias {
                dst.iter_mut().for_each(|v| *v = bias[o]);
            }
            for c in 0..g.in_channels {
                let src = &input[(b * g.in_channels + c) * plane_in..][..plane_in];
                for kh in 0..g.kernel_h {
                    let (oh_lo, oh_hi) = valid_range(g.in_h, oh_n, kh, g.stride, g.pad);
                    for kw in 0..g.kernel_w {
                        let wv = weight[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw];
                        let (ow_lo, ow_hi) = valid_range(g.in_w, ow_n, kw, g.stride, g.pad);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.pad;
                            let row = &src[ih * g.in_w..][..g.in_w];
                            let drow = &mut dst[oh * ow_n..][..ow_n];
                            for ow in ow_lo..ow_hi {
                                drow[ow] += wv * row[ow * g.stride + kw - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradient of [`conv2d_forward`] with respect to its input (the transposed convolution).
pub fn conv2d_backward_input(g: &ConvGeometry, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
    let (oh_n, ow_n) = (g.out_h(), g.out_w());
    let plane_in = g.in_h * g.in_w;
    let plane_out = oh_n * ow_n;
    let mut grad_in = vec![0.0; g.input_len()];
    for b in 0..g.batch {
        for o in 0..g.out_channels {
            let go = &grad_out[(b * g.out_channels + o) * plane_out..][..plane_out];
            for c in 0..g.in_channels {
                let gi = &mut grad_in[(b * g.in_channels + c) * plane_in..][..plane_in];
                for kh in 0..g.kernel_h {
                    let (oh_lo, oh_hi) = valid_range(g.in_h, oh_n, kh, g.stride, g.pad);
                    for kw in 0..g.kernel_w {
                        let wv = weight[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw];
                        let (ow_lo, ow_hi) = valid_range(g.in_w, ow_n, kw, g.stride, g.pad);
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.pad;
                            let grow = &go[oh * ow_n..][..ow_n];
                            let irow = &mut gi[ih * g.in_w..][..g.in_w];
                            for ow in ow_lo..ow_hi {
                                irow[ow * g.stride + kw - g.pad] += wv * grow[ow];
                            }
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// Gradient of [`conv2d_forward`] with respect to the weight, layout `[O, C, KH, KW]`.
pub fn conv2d_backward_weight(g: &ConvGeometry, input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let (oh_n, ow_n) = (g.out_h(), g.out_w());
    let plane_in = g.in_h * g.in_w;
    let plane_out = oh_n * ow_n;
    let mut grad_w = vec![0.0; g.weight_len()];
    for b in 0..g.batch {
        for o in 0..g.out_channels {
            let go = &grad_out[(b * g.out_channels + o) * plane_out..][..plane_out];
            for c in 0..g.in_channels {
                let src = &input[(b * g.in_channels + c) * plane_in..][..plane_in];
                for kh in 0..g.kernel_h {
                    let (oh_lo, oh_hi) = valid_range(g.in_h, oh_n, kh, g.stride, g.pad);
                    for kw in 0..g.kernel_w {
                        let (ow_lo, ow_hi) = valid_range(g.in_w, ow_n, kw, g.stride, g.pad);
                        let mut acc = 0.0;
                        for oh in oh_lo..oh_hi {
                            let ih = oh * g.stride + kh - g.pad;
                            let row = &src[ih * g.in_w..][..g.in_w];
                            let grow = &go[oh * ow_n..][..ow_n];
                            for ow in ow_lo..ow_hi {
                                acc += grow[ow] * row[ow * g.stride + kw - g.pad];
                            }
                        }
                        grad_w[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw] += acc;
                    }
                }
            }
        }
    }
    grad_w
}

pub fn bias_grad(batch: usize, channels: usize, plane: usize, grad_out: &[f64]) -> Vec<f64> {
    let mut gb = vec![0.0; channels];
    for b in 0..batch {
        for (o, g) in gb.iter_mut().enumerate() {
            *g += grad_out[(b * channels + o) * plane..][..plane].iter().sum::<f64>();
        }
    }
    gb
}

/// Geometry of a transposed convolution mapping `[B, C, H, W]` to `[B, O, H', W']` with
/// `H' = (H − 1)·stride − 2·pad + KH`; weight layout `[C, O, KH, KW]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvTransposeGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvTransposeGeometry {
    pub fn out_h(&self) -> usize {
        (self.in_h - 1) * self.stride + self.kernel_h - 2 * self.pad
    }

    pub fn out_w(&self) -> usize {
        (self.in_w - 1) * self.stride + self.kernel_w - 2 * self.pad
    }

    /// The forward convolution whose input-gradient this transposed convolution is.
    pub fn adjoint_conv(&self) -> ConvGeometry {
        ConvGeometry {
            batch: self.batch,
            in_channels: self.out_channels,
            out_channels: self.in_channels,
            in_h: self.out_h(),
            in_w: self.out_w(),
            kernel_h: self.kernel_h,
            kernel_w: self.kernel_w,
            stride: self.stride,
            pad: self.pad,
        }
    }

    pub fn output_len(&self) -> usize {
        self.batch * self.out_channels * self.out_h() * self.out_w()
    }
}

pub fn conv_transpose2d_forward(
    g: &ConvTransposeGeometry,
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let adj = g.adjoint_conv();
    let mut out = conv2d_backward_input(&adj, input, weight);
    if let Some(bias) = bias {
        let plane = g.out_h() * g.out_w();
        for b in 0..g.batch {
            for (o, bo) in bias.iter().enumerate() {
                out[(b * g.out_channels + o) * plane..][..plane].iter_mut().for_each(|v| *v += bo);
            }
        }
    }
    out
}

pub fn conv_transpose2d_backward_input(g: &ConvTransposeGeometry, grad_out: &[f64], weight: &[f64]) -> Vec<f64> {
    conv2d_forward(&g.adjoint_conv(), grad_out, weight, None)
}

pub fn conv_transpose2d_backward_weight(g: &ConvTransposeGeometry, input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    conv2d_backward_weight(&g.adjoint_conv(), grad_out, input)
}

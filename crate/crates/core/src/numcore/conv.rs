//! 2-D cross-correlation kernels over batched `N×C×H×W` data (im2col + gemm).

use super::tensor::{gemm, Mat, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Geometry of `conv2d(input, kernels)`. A rank-3 input is treated as a batch of one.
    pub fn infer(input: &[usize], kernels: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (batch, c, h, w) = match *input {
            [c, h, w] => (1, c, h, w),
            [n, c, h, w] => (n, c, h, w),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d input must be C×H×W or N×C×H×W, got {input:?}"
                )))
            }
        };
        let [co, ci, kh, kw] = *kernels else {
            return Err(Error::Dimension(format!(
                "conv2d kernels must be Cout×Cin×kH×kW, got {kernels:?}"
            )));
        };
        if ci != c {
            return Err(Error::Dimension(format!(
                "kernel expects {ci} input channels, input has {c}"
            )));
        }
        if stride == 0 {
            return Err(Error::Dimension("stride must be positive".into()));
        }
        let out = |size: usize, k: usize| -> Result<usize> {
            let padded = size + 2 * padding;
            if padded < k {
                return Err(Error::Dimension(format!(
                    "non-positive output size: input {size}, padding {padding}, kernel {k}"
                )));
            }
            Ok((padded - k) / stride + 1)
        };
        Ok(Self {
            batch,
            in_channels: c,
            height: h,
            width: w,
            out_channels: co,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
            out_h: out(h, kh)?,
            out_w: out(w, kw)?,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_len(&self) -> usize {
        self.in_channels * self.height * self.width
    }

    fn out_len(&self) -> usize {
        self.out_channels * self.out_pixels()
    }

    fn in_coord(&self, o: usize, k: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0).then_some(pos as usize)
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let opix = self.out_pixels();
        for c in 0..self.in_channels {
            for i in 0..self.kernel_h {
                for j in 0..self.kernel_w {
                    let row = (c * self.kernel_h + i) * self.kernel_w + j;
                    let dst = &mut cols[row * opix..(row + 1) * opix];
                    for oy in 0..self.out_h {
                        let iy = self.in_coord(oy, i).filter(|&y| y < self.height);
                        for ox in 0..self.out_w {
                            let ix = self.in_coord(ox, j).filter(|&x| x < self.width);
                            dst[oy * self.out_w + ox] = match (iy, ix) {
                                (Some(y), Some(xx)) => x[(c * self.height + y) * self.width + xx],
                                _ => 0.0,
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], x: &mut [f64]) {
        let opix = self.out_pixels();
        for c in 0..self.in_channels {
            for i in 0..self.kernel_h {
                for j in 0..self.kernel_w {
                    let row = (c * self.kernel_h + i) * self.kernel_w + j;
                    let src = &cols[row * opix..(row + 1) * opix];
                    for oy in 0..self.out_h {
                        let Some(y) = self.in_coord(oy, i).filter(|&y| y < self.height) else {
                            continue;
                        };
                        for ox in 0..self.out_w {
                            if let Some(xx) = self.in_coord(ox, j).filter(|&x| x < self.width) {
                                x[(c * self.height + y) * self.width + xx] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn output_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.out_channels, self.out_h, self.out_w]
        } else {
            vec![self.out_channels, self.out_h, self.out_w]
        }
    }
}

pub fn conv2d_forward(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let geom = ConvGeom::infer(input.shape(), kernels.shape(), stride, padding)?;
    let mut out = vec![0.0; geom.batch * geom.out_len()];
    let mut cols = vec![0.0; geom.patch_len() * geom.out_pixels()];
    for b in 0..geom.batch {
        let x = &input.data()[b * geom.in_len()..(b + 1) * geom.in_len()];
        geom.im2col(x, &mut cols);
        gemm(
            Mat::new(kernels.data(), geom.out_channels, geom.patch_len(), false),
            Mat::new(&cols, geom.patch_len(), geom.out_pixels(), false),
            &mut out[b * geom.out_len()..(b + 1) * geom.out_len()],
            0.0,
        );
    }
    Tensor::new(geom.output_shape(input.rank() == 4), out)
}

/// Gradient of `conv2d` with respect to its input, given the upstream gradient.
pub fn conv2d_backward_input(
    grad_out: &Tensor,
    kernels: &Tensor,
    input_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let geom = ConvGeom::infer(input_shape, kernels.shape(), stride, padding)?;
    check_grad_shape(&geom, grad_out)?;
    let mut gx = vec![0.0; geom.batch * geom.in_len()];
    let mut cols = vec![0.0; geom.patch_len() * geom.out_pixels()];
    for b in 0..geom.batch {
        gemm(
            Mat::new(kernels.data(), geom.out_channels, geom.patch_len(), true),
            Mat::new(
                &grad_out.data()[b * geom.out_len()..(b + 1) * geom.out_len()],
                geom.out_channels,
                geom.out_pixels(),
                false,
            ),
            &mut cols,
            0.0,
        );
        geom.col2im(&cols, &mut gx[b * geom.in_len()..(b + 1) * geom.in_len()]);
    }
    Tensor::new(input_shape.to_vec(), gx)
}

/// Gradient of `conv2d` with respect to its kernels.
pub fn conv2d_backward_kernel(
    input: &Tensor,
    grad_out: &Tensor,
    kernel_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let geom = ConvGeom::infer(input.shape(), kernel_shape, stride, padding)?;
    check_grad_shape(&geom, grad_out)?;
    let mut gk = vec![0.0; geom.out_channels * geom.patch_len()];
    let mut cols = vec![0.0; geom.patch_len() * geom.out_pixels()];
    for b in 0..geom.batch {
        let x = &input.data()[b * geom.in_len()..(b + 1) * geom.in_len()];
        geom.im2col(x, &mut cols);
        gemm(
            Mat::new(
                &grad_out.data()[b * geom.out_len()..(b + 1) * geom.out_len()],
                geom.out_channels,
                geom.out_pixels(),
                false,
            ),
            Mat::new(&cols, geom.patch_len(), geom.out_pixels(), true),
            &mut gk,
            1.0,
        );
    }
    Tensor::new(kernel_shape.to_vec(), gk)
}

fn check_grad_shape(geom: &ConvGeom, grad_out: &Tensor) -> Result<()> {
    if grad_out.len() != geom.batch * geom.out_len() {
        return Err(Error::Dimension(format!(
            "upstream gradient shape {:?} does not match conv output {:?}",
            grad_out.shape(),
            geom.output_shape(true)
        )));
    }
    Ok(())
}

/// Output shape of a transposed convolution with kernels `Cin×Cout×kH×kW`.
pub fn conv_transpose_output_shape(
    input: &[usize],
    kernels: &[usize],
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Vec<usize>> {
    let (lead, c, h, w) = match *input {
        [c, h, w] => (None, c, h, w),
        [n, c, h, w] => (Some(n), c, h, w),
        _ => return Err(Error::Dimension(format!("bad transposed-conv input {input:?}"))),
    };
    let [ci, co, kh, kw] = *kernels else {
        return Err(Error::Dimension(format!("bad transposed-conv kernels {kernels:?}")));
    };
    if ci != c {
        return Err(Error::Dimension(format!(
            "transposed-conv kernel expects {ci} channels, input has {c}"
        )));
    }
    if output_padding >= stride.max(1) {
        return Err(Error::Dimension("output padding must be smaller than stride".into()));
    }
    let out = |size: usize, k: usize| -> Result<usize> {
        let full = (size - 1) * stride + k + output_padding;
        if full <= 2 * padding {
            return Err(Error::Dimension("non-positive transposed-conv output".into()));
        }
        Ok(full - 2 * padding)
    };
    let (ho, wo) = (out(h, kh)?, out(w, kw)?);
    Ok(match lead {
        Some(n) => vec![n, co, ho, wo],
        None => vec![co, ho, wo],
    })
}

/// Transposed convolution: the adjoint of `conv2d` with the kernel read as `Cout'=Cin`.
pub fn conv_transpose2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor> {
    let out_shape = conv_transpose_output_shape(input.shape(), kernels.shape(), stride, padding, output_padding)?;
    conv2d_backward_input(input, kernels, &out_shape, stride, padding)
}

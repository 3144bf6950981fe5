//! Dense compute kernels: 2-D convolution, softmax lanes and bias
//! broadcasting.
//!
//! Convolution is lowered to matrix multiplication (im2col), which is where
//! effectively all training time is spent; forward and both backward passes
//! ride the same GEMM backend. Everything here is tape-free — the autodiff
//! layer calls these for both its forward values and its hand-derived
//! adjoints, and inference uses them directly.

use crate::error::{Error, Result};

use super::array::Array;
use super::scalar::Real;

/// Resolved geometry of one convolution: input `[B,C,H,W]`, kernel
/// `[O,C,kH,kW]`, output `[B,O,oH,oW]` with `oH = (H + 2p - kH)/s + 1`
/// (floor division, the usual cross-correlation convention).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    /// Validates the input/kernel shapes and computes the output extent.
    pub fn resolve(
        input_shape: &[usize],
        kernel_shape: &[usize],
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if input_shape.len() != 4 || kernel_shape.len() != 4 {
            return Err(Error::Shape(format!(
                "conv2d expects input [B,C,H,W] and kernel [O,C,kH,kW], got {:?} and {:?}",
                input_shape, kernel_shape
            )));
        }
        let (batch, in_channels, in_h, in_w) =
            (input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
        let (out_channels, k_c, k_h, k_w) =
            (kernel_shape[0], kernel_shape[1], kernel_shape[2], kernel_shape[3]);
        if k_c != in_channels {
            return Err(Error::Shape(format!(
                "conv2d channel mismatch: input has {}, kernel expects {}",
                in_channels, k_c
            )));
        }
        if stride == 0 {
            return Err(Error::Shape("conv2d stride must be positive".into()));
        }
        if k_h == 0 || k_w == 0 || in_h + 2 * padding < k_h || in_w + 2 * padding < k_w {
            return Err(Error::Shape(format!(
                "conv2d kernel {}x{} does not fit input {}x{} with padding {}",
                k_h, k_w, in_h, in_w, padding
            )));
        }
        Ok(ConvGeometry {
            batch,
            in_channels,
            out_channels,
            in_h,
            in_w,
            k_h,
            k_w,
            stride,
            padding,
            out_h: (in_h + 2 * padding - k_h) / stride + 1,
            out_w: (in_w + 2 * padding - k_w) / stride + 1,
        })
    }

    /// Rows of the unfolded patch matrix: one per kernel tap per channel.
    fn patch_rows(&self) -> usize {
        self.in_channels * self.k_h * self.k_w
    }

    /// Columns of the unfolded patch matrix: one per output pixel.
    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_channels, self.out_h, self.out_w]
    }
}

/// Unfolds one `[C,H,W]` sample into the `[C*kH*kW, oH*oW]` patch matrix.
/// Out-of-image taps (padding) stay zero.
fn im2col<T: Real>(sample: &[T], g: &ConvGeometry, col: &mut [T]) {
    debug_assert_eq!(col.len(), g.patch_rows() * g.out_pixels());
    for v in col.iter_mut() {
        *v = T::zero();
    }
    let out_pixels = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &sample[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for kh in 0..g.k_h {
            for kw in 0..g.k_w {
                let row = (c * g.k_h + kh) * g.k_w + kw;
                let dst_row = &mut col[row * out_pixels..(row + 1) * out_pixels];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + kh) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    let dst = &mut dst_row[oy * g.out_w..(oy + 1) * g.out_w];
                    // Valid ox range: 0 <= ox*stride + kw - padding < in_w.
                    let shift = kw as isize - g.padding as isize;
                    let ox_lo = if shift >= 0 {
                        0
                    } else {
                        ((-shift) as usize).div_ceil(g.stride)
                    };
                    let ix_of = |ox: usize| (ox * g.stride) as isize + shift;
                    if g.stride == 1 && ox_lo < g.out_w {
                        let ox_hi = g.out_w.min((g.in_w as isize - shift) as usize);
                        if ox_lo < ox_hi {
                            let ix0 = ix_of(ox_lo) as usize;
                            dst[ox_lo..ox_hi]
                                .copy_from_slice(&src_row[ix0..ix0 + (ox_hi - ox_lo)]);
                        }
                    } else {
                        for ox in ox_lo..g.out_w {
                            let ix = ix_of(ox);
                            if ix < 0 || ix >= g.in_w as isize {
                                continue;
                            }
                            dst[ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a `[C*kH*kW, oH*oW]` patch-matrix gradient back onto one
/// `[C,H,W]` sample gradient; the adjoint of [`im2col`].
fn col2im_add<T: Real>(col: &[T], g: &ConvGeometry, sample_grad: &mut [T]) {
    let out_pixels = g.out_pixels();
    for c in 0..g.in_channels {
        let plane = &mut sample_grad[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for kh in 0..g.k_h {
            for kw in 0..g.k_w {
                let row = (c * g.k_h + kh) * g.k_w + kw;
                let src_row = &col[row * out_pixels..(row + 1) * out_pixels];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + kh) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kw) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        dst[ix as usize] = dst[ix as usize] + src_row[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `input [B,C,H,W]` with `kernel [O,C,kH,kW]`.
pub fn conv2d_forward<T: Real>(
    input: &Array<T>,
    kernel: &Array<T>,
    stride: usize,
    padding: usize,
) -> Result<Array<T>> {
    let g = ConvGeometry::resolve(input.shape(), kernel.shape(), stride, padding)?;
    let rows = g.patch_rows();
    let pixels = g.out_pixels();
    let mut col = vec![T::zero(); rows * pixels];
    let mut out = Array::zeros(&g.output_shape());
    let sample_len = g.in_channels * g.in_h * g.in_w;
    let out_len = g.out_channels * pixels;
    for b in 0..g.batch {
        im2col(&input.data()[b * sample_len..(b + 1) * sample_len], &g, &mut col);
        // out[b] = kernel_matrix [O, rows] x col [rows, pixels]
        unsafe {
            T::gemm(
                g.out_channels,
                rows,
                pixels,
                T::one(),
                kernel.data().as_ptr(),
                rows as isize,
                1,
                col.as_ptr(),
                pixels as isize,
                1,
                T::zero(),
                out.data_mut()[b * out_len..(b + 1) * out_len].as_mut_ptr(),
                pixels as isize,
                1,
            );
        }
    }
    Ok(out)
}

/// Gradient of the convolution output with respect to the kernel:
/// `d_kernel[o, c, kh, kw] = sum_b grad_out[b, o] x patches[b, (c,kh,kw)]`.
pub fn conv2d_backward_kernel<T: Real>(
    input: &Array<T>,
    grad_out: &Array<T>,
    kernel_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Array<T>> {
    let g = ConvGeometry::resolve(input.shape(), kernel_shape, stride, padding)?;
    let rows = g.patch_rows();
    let pixels = g.out_pixels();
    let mut col = vec![T::zero(); rows * pixels];
    let mut grad_kernel = Array::zeros(kernel_shape);
    let sample_len = g.in_channels * g.in_h * g.in_w;
    let out_len = g.out_channels * pixels;
    for b in 0..g.batch {
        im2col(&input.data()[b * sample_len..(b + 1) * sample_len], &g, &mut col);
        // grad_kernel [O, rows] += grad_out[b] [O, pixels] x col^T [pixels, rows]
        unsafe {
            T::gemm(
                g.out_channels,
                pixels,
                rows,
                T::one(),
                grad_out.data()[b * out_len..(b + 1) * out_len].as_ptr(),
                pixels as isize,
                1,
                col.as_ptr(),
                1,
                pixels as isize,
                T::one(),
                grad_kernel.data_mut().as_mut_ptr(),
                rows as isize,
                1,
            );
        }
    }
    Ok(grad_kernel)
}

/// Gradient of the convolution output with respect to the input:
/// per sample, `kernel^T x grad_out` folded back onto the image grid.
pub fn conv2d_backward_input<T: Real>(
    kernel: &Array<T>,
    grad_out: &Array<T>,
    input_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<Array<T>> {
    let g = ConvGeometry::resolve(input_shape, kernel.shape(), stride, padding)?;
    let rows = g.patch_rows();
    let pixels = g.out_pixels();
    let mut col_grad = vec![T::zero(); rows * pixels];
    let mut grad_input = Array::zeros(input_shape);
    let sample_len = g.in_channels * g.in_h * g.in_w;
    let out_len = g.out_channels * pixels;
    for b in 0..g.batch {
        // col_grad [rows, pixels] = kernel^T [rows, O] x grad_out[b] [O, pixels]
        unsafe {
            T::gemm(
                rows,
                g.out_channels,
                pixels,
                T::one(),
                kernel.data().as_ptr(),
                1,
                rows as isize,
                grad_out.data()[b * out_len..(b + 1) * out_len].as_ptr(),
                pixels as isize,
                1,
                T::zero(),
                col_grad.as_mut_ptr(),
                pixels as isize,
                1,
            );
        }
        col2im_add(
            &col_grad,
            &g,
            &mut grad_input.data_mut()[b * sample_len..(b + 1) * sample_len],
        );
    }
    Ok(grad_input)
}

/// Splits a shape at `axis` into (outer, lane, inner) extents so that the
/// element at `(o, l, i)` sits at `(o * lane + l) * inner + i`.
pub fn lane_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Shape(format!("axis {} out of range for shape {:?}", axis, shape)));
    }
    let outer = shape[..axis].iter().product();
    let lane = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, lane, inner))
}

/// Numerically stable softmax along `axis` (max-subtracted).
pub fn softmax<T: Real>(input: &Array<T>, axis: usize) -> Result<Array<T>> {
    let (outer, lane, inner) = lane_split(input.shape(), axis)?;
    let mut out = input.clone();
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| (o * lane + l) * inner + i;
            let mut m = data[at(0)];
            for l in 1..lane {
                if data[at(l)] > m {
                    m = data[at(l)];
                }
            }
            let mut sum = T::zero();
            for l in 0..lane {
                let e = (data[at(l)] - m).exp();
                data[at(l)] = e;
                sum = sum + e;
            }
            for l in 0..lane {
                data[at(l)] = data[at(l)] / sum;
            }
        }
    }
    Ok(out)
}

/// Softmax adjoint: given the forward output `y` and upstream `grad_out`,
/// returns `y * (grad_out - sum_lane(grad_out * y))` per lane.
pub fn softmax_backward<T: Real>(
    y: &Array<T>,
    grad_out: &Array<T>,
    axis: usize,
) -> Result<Array<T>> {
    if y.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "softmax backward shapes {:?} and {:?}",
            y.shape(),
            grad_out.shape()
        )));
    }
    let (outer, lane, inner) = lane_split(y.shape(), axis)?;
    let mut out = Array::zeros(y.shape());
    let yd = y.data();
    let gd = grad_out.data();
    let od = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |l: usize| (o * lane + l) * inner + i;
            let mut dot = T::zero();
            for l in 0..lane {
                dot = dot + gd[at(l)] * yd[at(l)];
            }
            for l in 0..lane {
                od[at(l)] = yd[at(l)] * (gd[at(l)] - dot);
            }
        }
    }
    Ok(out)
}

/// Adds a per-channel bias `[C]` onto a `[B,C,H,W]` map.
pub fn bias_add<T: Real>(input: &Array<T>, bias: &Array<T>) -> Result<Array<T>> {
    if input.ndim() != 4 || bias.ndim() != 1 || bias.shape()[0] != input.shape()[1] {
        return Err(Error::Shape(format!(
            "bias_add expects [B,C,H,W] + [C], got {:?} + {:?}",
            input.shape(),
            bias.shape()
        )));
    }
    let (b, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let plane = h * w;
    let mut out = input.clone();
    let od = out.data_mut();
    let bd = bias.data();
    for bi in 0..b {
        for ci in 0..c {
            let base = (bi * c + ci) * plane;
            for p in 0..plane {
                od[base + p] = od[base + p] + bd[ci];
            }
        }
    }
    Ok(out)
}

/// Bias adjoint: sums `[B,C,H,W]` gradients over batch and pixels to `[C]`.
pub fn bias_backward<T: Real>(grad_out: &Array<T>) -> Result<Array<T>> {
    if grad_out.ndim() != 4 {
        return Err(Error::Shape(format!(
            "bias backward expects [B,C,H,W], got {:?}",
            grad_out.shape()
        )));
    }
    grad_out.sum_axes(&[0, 2, 3], false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type A = Array<f64>;

    fn random_array(rng: &mut ChaCha8Rng, shape: &[usize]) -> A {
        let data = (0..shape.iter().product::<usize>())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        A::from_vec(shape.to_vec(), data).unwrap()
    }

    /// Direct 7-loop cross-correlation, the independent reference.
    fn conv_naive(input: &A, kernel: &A, stride: usize, padding: usize) -> A {
        let g = ConvGeometry::resolve(input.shape(), kernel.shape(), stride, padding).unwrap();
        let mut out = A::zeros(&g.output_shape());
        for b in 0..g.batch {
            for o in 0..g.out_channels {
                for oy in 0..g.out_h {
                    for ox in 0..g.out_w {
                        let mut acc = 0.0;
                        for c in 0..g.in_channels {
                            for kh in 0..g.k_h {
                                for kw in 0..g.k_w {
                                    let iy = (oy * g.stride + kh) as isize - g.padding as isize;
                                    let ix = (ox * g.stride + kw) as isize - g.padding as isize;
                                    if iy < 0
                                        || ix < 0
                                        || iy >= g.in_h as isize
                                        || ix >= g.in_w as isize
                                    {
                                        continue;
                                    }
                                    let iv = input.data()[((b * g.in_channels + c) * g.in_h
                                        + iy as usize)
                                        * g.in_w
                                        + ix as usize];
                                    let kv = kernel.data()
                                        [((o * g.in_channels + c) * g.k_h + kh) * g.k_w + kw];
                                    acc += iv * kv;
                                }
                            }
                        }
                        out.data_mut()[((b * g.out_channels + o) * g.out_h + oy) * g.out_w + ox] =
                            acc;
                    }
                }
            }
        }
        out
    }

    fn dot(a: &A, b: &A) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_matches_hand_example() {
        // 3x3 input, 2x2 kernel, stride 1, no padding.
        let input =
            A::from_vec(vec![1, 1, 3, 3], (1..=9).map(|v| v as f64).collect()).unwrap();
        let kernel = A::from_vec(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        let out = conv2d_forward(&input, &kernel, 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        // Each output = top-left - bottom-right of its window.
        assert_eq!(out.data(), &[1.0 - 5.0, 2.0 - 6.0, 4.0 - 8.0, 5.0 - 9.0]);
    }

    #[test]
    fn padded_delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_array(&mut rng, &[2, 3, 5, 4]);
        // One kernel per input channel, picking out exactly that channel's center tap.
        let mut kernel = A::zeros(&[3, 3, 3, 3]);
        for c in 0..3 {
            kernel.data_mut()[((c * 3 + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let out = conv2d_forward(&input, &kernel, 1, 1).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn forward_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases: &[(&[usize], &[usize], usize, usize)] = &[
            (&[2, 3, 6, 5], &[4, 3, 3, 3], 1, 1),
            (&[1, 1, 4, 4], &[2, 1, 2, 2], 2, 0),
            (&[3, 2, 7, 7], &[2, 2, 3, 3], 2, 1),
            (&[2, 4, 5, 5], &[3, 4, 1, 1], 1, 0),
            (&[1, 2, 6, 3], &[2, 2, 3, 2], 1, 2),
        ];
        for &(ishape, kshape, stride, padding) in cases {
            let input = random_array(&mut rng, ishape);
            let kernel = random_array(&mut rng, kshape);
            let fast = conv2d_forward(&input, &kernel, stride, padding).unwrap();
            let slow = conv_naive(&input, &kernel, stride, padding);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12, "conv mismatch: {a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_passes_satisfy_adjoint_identity() {
        // For the linear maps x -> conv(x, k) and k -> conv(x, k):
        // <g, conv(x,k)> must equal <d_input, x> and <d_kernel, k>.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cases: &[(&[usize], &[usize], usize, usize)] = &[
            (&[2, 3, 6, 5], &[4, 3, 3, 3], 1, 1),
            (&[1, 2, 5, 5], &[3, 2, 2, 2], 2, 0),
            (&[2, 1, 4, 6], &[2, 1, 3, 3], 1, 2),
        ];
        for &(ishape, kshape, stride, padding) in cases {
            let input = random_array(&mut rng, ishape);
            let kernel = random_array(&mut rng, kshape);
            let out = conv2d_forward(&input, &kernel, stride, padding).unwrap();
            let g = random_array(&mut rng, out.shape());
            let d_input =
                conv2d_backward_input(&kernel, &g, ishape, stride, padding).unwrap();
            let d_kernel =
                conv2d_backward_kernel(&input, &g, kshape, stride, padding).unwrap();
            let lhs = dot(&g, &out);
            assert!((lhs - dot(&d_input, &input)).abs() < 1e-10 * (1.0 + lhs.abs()));
            assert!((lhs - dot(&d_kernel, &kernel)).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn geometry_rejects_bad_shapes() {
        assert!(ConvGeometry::resolve(&[2, 3, 4], &[1, 3, 2, 2], 1, 0).is_err());
        assert!(ConvGeometry::resolve(&[1, 3, 4, 4], &[1, 2, 2, 2], 1, 0).is_err());
        assert!(ConvGeometry::resolve(&[1, 1, 2, 2], &[1, 1, 3, 3], 1, 0).is_err());
        assert!(ConvGeometry::resolve(&[1, 1, 4, 4], &[1, 1, 2, 2], 0, 0).is_err());
        // Same kernel fits once padded.
        assert!(ConvGeometry::resolve(&[1, 1, 2, 2], &[1, 1, 3, 3], 1, 1).is_ok());
    }

    #[test]
    fn softmax_lanes_are_distributions() {
        let x = A::from_vec(vec![2, 3], vec![0.0, 1.0, 2.0, -5.0, 0.0, 5.0]).unwrap();
        let y = softmax(&x, 1).unwrap();
        for lane in y.data().chunks(3) {
            let s: f64 = lane.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(lane.iter().all(|&p| p > 0.0));
        }
        // Hand value for the first lane: softmax(0,1,2).
        let z: f64 = (0.0f64).exp() + (1.0f64).exp() + (2.0f64).exp();
        assert!((y.data()[0] - 1.0 / z).abs() < 1e-12);
        assert!((y.data()[2] - (2.0f64).exp() / z).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant_and_overflow_safe() {
        let x = A::from_vec(vec![1, 3], vec![1000.0, 1001.0, 999.0]).unwrap();
        let y = softmax(&x, 1).unwrap();
        let x0 = A::from_vec(vec![1, 3], vec![0.0, 1.0, -1.0]).unwrap();
        let y0 = softmax(&x0, 1).unwrap();
        for (a, b) in y.data().iter().zip(y0.data()) {
            assert!((a - b).abs() < 1e-12);
            assert!(a.is_finite());
        }
    }

    #[test]
    fn softmax_applies_along_requested_axis() {
        // Axis 1 of a [1,2,1,2] map: lanes stride over the inner extent.
        let x = A::from_vec(vec![1, 2, 1, 2], vec![0.0, 10.0, 0.0, -10.0]).unwrap();
        let y = softmax(&x, 1).unwrap();
        // Lane (i=0): elements at [0]=0 and [2]=0 -> both 0.5.
        assert!((y.data()[0] - 0.5).abs() < 1e-12);
        assert!((y.data()[2] - 0.5).abs() < 1e-12);
        // Lane (i=1): 10 vs -10.
        assert!(y.data()[1] > 0.999);
        assert!(y.data()[3] < 0.001);
    }

    #[test]
    fn softmax_backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = random_array(&mut rng, &[2, 4, 3]);
        let g = random_array(&mut rng, &[2, 4, 3]);
        let y = softmax(&x, 1).unwrap();
        let analytic = softmax_backward(&y, &g, 1).unwrap();
        let h = 1e-6;
        for idx in 0..x.numel() {
            let mut xp = x.clone();
            xp.data_mut()[idx] += h;
            let mut xm = x.clone();
            xm.data_mut()[idx] -= h;
            let fp = dot(&softmax(&xp, 1).unwrap(), &g);
            let fm = dot(&softmax(&xm, 1).unwrap(), &g);
            let numeric = (fp - fm) / (2.0 * h);
            assert!(
                (analytic.data()[idx] - numeric).abs() < 1e-8,
                "softmax grad mismatch at {idx}: {} vs {numeric}",
                analytic.data()[idx]
            );
        }
    }

    #[test]
    fn bias_add_and_backward_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_array(&mut rng, &[2, 3, 2, 2]);
        let bias = A::from_vec(vec![3], vec![10.0, 20.0, 30.0]).unwrap();
        let y = bias_add(&x, &bias).unwrap();
        for b in 0..2 {
            for c in 0..3 {
                for p in 0..4 {
                    let i = (b * 3 + c) * 4 + p;
                    assert_eq!(y.data()[i], x.data()[i] + bias.data()[c]);
                }
            }
        }
        let g = random_array(&mut rng, &[2, 3, 2, 2]);
        let gb = bias_backward(&g).unwrap();
        assert_eq!(gb.shape(), &[3]);
        for c in 0..3 {
            let mut want = 0.0;
            for b in 0..2 {
                for p in 0..4 {
                    want += g.data()[(b * 3 + c) * 4 + p];
                }
            }
            assert!((gb.data()[c] - want).abs() < 1e-12);
        }
        assert!(bias_add(&x, &A::zeros(&[4])).is_err());
    }
}

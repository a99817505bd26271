//! Numeric kernels shared by the forward and backward passes.
//!
//! Every kernel here is single-threaded with a fixed summation order, so the
//! same inputs always produce bit-identical outputs.

/// Row/column strides of a matrix operand as `(row_stride, col_stride)`.
pub(crate) type Strides = (isize, isize);

/// `c = alpha * a · b + beta * c` for an `m×k` by `k×n` product with
/// arbitrary operand strides; `c` is dense row-major `m×n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    sa: Strides,
    b: &[f64],
    sb: Strides,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || max_offset(m, k, sa) < a.len());
    assert!(k == 0 || max_offset(k, n, sb) < b.len());
    // SAFETY: the operand extents and strides were checked above to stay
    // inside the slices; `c` is exclusively borrowed and dense row-major.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0,
            sa.1,
            b.as_ptr(),
            sb.0,
            sb.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn max_offset(rows: usize, cols: usize, s: Strides) -> usize {
    ((rows as isize - 1) * s.0 + (cols as isize - 1) * s.1) as usize
}

/// Geometry of one 2-D convolution over a `[C, H, W]` input.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Patch-matrix gemm beats direct accumulation once patches are long.
    pub fn prefers_gemm(&self) -> bool {
        self.c_in * self.kh * self.kw >= 64
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds the input into a `[C·kh·kw, out_h·out_w]` patch matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let p = g.out_len();
    let mut cols = vec![0.0; g.c_in * g.kh * g.kw * p];
    for ci in 0..g.c_in {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for_each_tap_at(g, ky, kx, |oy, iy, ox0, ox1, ix0| {
                    let d = &mut dst[oy * g.out_w + ox0..oy * g.out_w + ox1];
                    let src = &plane[iy * g.w + ix0..(iy + 1) * g.w];
                    d.iter_mut()
                        .zip(src.iter().step_by(g.stride))
                        .for_each(|(d, &s)| *d = s);
                });
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates patch gradients back into `dx`.
pub(crate) fn col2im_add(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let p = g.out_len();
    for ci in 0..g.c_in {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for_each_tap_at(g, ky, kx, |oy, iy, ox0, ox1, ix0| {
                    let s = &src[oy * g.out_w + ox0..oy * g.out_w + ox1];
                    let d = &mut plane[iy * g.w + ix0..(iy + 1) * g.w];
                    d.iter_mut()
                        .step_by(g.stride)
                        .zip(s)
                        .for_each(|(d, &s)| *d += s);
                });
            }
        }
    }
}

#[inline(always)]
fn for_each_tap_at(
    g: &ConvGeom,
    ky: usize,
    kx: usize,
    mut f: impl FnMut(usize, usize, usize, usize, usize),
) {
    let (oy0, oy1) = span(g.h, g.out_h, ky, g.pad, g.stride);
    let (ox0, ox1) = span(g.w, g.out_w, kx, g.pad, g.stride);
    if ox0 == ox1 {
        return;
    }
    let ix0 = ox0 * g.stride + kx - g.pad;
    for oy in oy0..oy1 {
        f(oy, oy * g.stride + ky - g.pad, ox0, ox1, ix0);
    }
}

/// Output positions `o` along one axis for which the input index
/// `o·stride + k − pad` lies inside `0..n_in`, as a half-open range.
fn span(n_in: usize, n_out: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if pad > k {
        (pad - k).div_ceil(stride)
    } else {
        0
    };
    if n_in + pad <= k {
        return (0, 0);
    }
    let hi = ((n_in - 1 + pad - k) / stride + 1).min(n_out);
    (lo, hi.max(lo))
}

/// Visits every kernel tap `(ky, kx)` together with each output row `oy`
/// it touches: `f(ky, kx, oy, iy, ox0, ox1, ix0)` where output columns
/// `ox0..ox1` read input columns `ix0 + j·stride`.
#[inline(always)]
fn for_each_tap(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize, usize, usize, usize)) {
    for ky in 0..g.kh {
        let (oy0, oy1) = span(g.h, g.out_h, ky, g.pad, g.stride);
        for kx in 0..g.kw {
            let (ox0, ox1) = span(g.w, g.out_w, kx, g.pad, g.stride);
            if ox0 == ox1 {
                continue;
            }
            let ix0 = ox0 * g.stride + kx - g.pad;
            for oy in oy0..oy1 {
                let iy = oy * g.stride + ky - g.pad;
                f(ky, kx, oy, iy, ox0, ox1, ix0);
            }
        }
    }
}

/// `dst[j] += a · src[j·stride]`.
#[inline(always)]
fn axpy(dst: &mut [f64], src: &[f64], a: f64, stride: usize) {
    if stride == 1 {
        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += a * s);
    } else {
        dst.iter_mut()
            .zip(src.iter().step_by(stride))
            .for_each(|(d, &s)| *d += a * s);
    }
}

/// `dst[j·stride] += a · src[j]`.
#[inline(always)]
fn axpy_scatter(dst: &mut [f64], src: &[f64], a: f64, stride: usize) {
    if stride == 1 {
        dst.iter_mut().zip(src).for_each(|(d, &s)| *d += a * s);
    } else {
        dst.iter_mut()
            .step_by(stride)
            .zip(src)
            .for_each(|(d, &s)| *d += a * s);
    }
}

/// `Σ a[j] · b[j·stride]` with four interleaved partial sums combined in a
/// fixed order.
#[inline(always)]
fn dot(a: &[f64], b: &[f64], stride: usize) -> f64 {
    let mut acc = [0.0; 4];
    if stride == 1 {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let mut ca = a.chunks_exact(4);
        let mut cb = b.chunks_exact(4);
        for (x, y) in (&mut ca).zip(&mut cb) {
            for l in 0..4 {
                acc[l] += x[l] * y[l];
            }
        }
        for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
            acc[l] += x * y;
        }
    } else {
        for (j, (x, y)) in a.iter().zip(b.iter().step_by(stride)).enumerate() {
            acc[j % 4] += x * y;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[inline(always)]
fn conv_forward_impl(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (c_out, plane_in, plane_out) = (bias.len(), g.h * g.w, g.out_len());
    let taps = g.kh * g.kw;
    let mut out = vec![0.0; c_out * plane_out];
    for co in 0..c_out {
        let dst = &mut out[co * plane_out..(co + 1) * plane_out];
        dst.fill(bias[co]);
        for ci in 0..g.c_in {
            let src = &x[ci * plane_in..(ci + 1) * plane_in];
            let wk = &w[(co * g.c_in + ci) * taps..(co * g.c_in + ci + 1) * taps];
            for_each_tap(g, |ky, kx, oy, iy, ox0, ox1, ix0| {
                let o = &mut dst[oy * g.out_w + ox0..oy * g.out_w + ox1];
                axpy(
                    o,
                    &src[iy * g.w + ix0..(iy + 1) * g.w],
                    wk[ky * g.kw + kx],
                    g.stride,
                );
            });
        }
    }
    out
}

#[inline(always)]
fn conv_backward_input_impl(dy: &[f64], w: &[f64], g: &ConvGeom, c_out: usize, dx: &mut [f64]) {
    let (plane_in, plane_out) = (g.h * g.w, g.out_len());
    let taps = g.kh * g.kw;
    for ci in 0..g.c_in {
        let dst = &mut dx[ci * plane_in..(ci + 1) * plane_in];
        for co in 0..c_out {
            let src = &dy[co * plane_out..(co + 1) * plane_out];
            let wk = &w[(co * g.c_in + ci) * taps..(co * g.c_in + ci + 1) * taps];
            for_each_tap(g, |ky, kx, oy, iy, ox0, ox1, ix0| {
                let gy = &src[oy * g.out_w + ox0..oy * g.out_w + ox1];
                let row = &mut dst[iy * g.w + ix0..(iy + 1) * g.w];
                axpy_scatter(row, gy, wk[ky * g.kw + kx], g.stride);
            });
        }
    }
}

#[inline(always)]
fn conv_backward_kernel_impl(dy: &[f64], x: &[f64], g: &ConvGeom, c_out: usize, dw: &mut [f64]) {
    let (plane_in, plane_out) = (g.h * g.w, g.out_len());
    let taps = g.kh * g.kw;
    for co in 0..c_out {
        let gy_plane = &dy[co * plane_out..(co + 1) * plane_out];
        for ci in 0..g.c_in {
            let src = &x[ci * plane_in..(ci + 1) * plane_in];
            let dk = &mut dw[(co * g.c_in + ci) * taps..(co * g.c_in + ci + 1) * taps];
            for_each_tap(g, |ky, kx, oy, iy, ox0, ox1, ix0| {
                let gy = &gy_plane[oy * g.out_w + ox0..oy * g.out_w + ox1];
                dk[ky * g.kw + kx] += dot(gy, &src[iy * g.w + ix0..(iy + 1) * g.w], g.stride);
            });
        }
    }
}

// The same bodies compiled twice: once for the baseline target and once with
// AVX2 enabled, picked at runtime. Neither uses fused multiply-add or
// reassociates sums, so both paths produce identical bits.
macro_rules! dispatch {
    ($(#[$doc:meta])* $name:ident, $avx:ident, $imp:ident, ($($arg:ident: $ty:ty),*) $(-> $ret:ty)?) => {
        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn $avx($($arg: $ty),*) $(-> $ret)? {
            $imp($($arg),*)
        }

        $(#[$doc])*
        pub(crate) fn $name($($arg: $ty),*) $(-> $ret)? {
            #[cfg(target_arch = "x86_64")]
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the CPU supports AVX2, checked just above.
                return unsafe { $avx($($arg),*) };
            }
            $imp($($arg),*)
        }
    };
}

dispatch!(
    direct_conv_forward, conv_forward_avx2, conv_forward_impl,
    (x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64>
);
dispatch!(
    direct_conv_backward_input, conv_backward_input_avx2, conv_backward_input_impl,
    (dy: &[f64], w: &[f64], g: &ConvGeom, c_out: usize, dx: &mut [f64])
);
dispatch!(
    direct_conv_backward_kernel, conv_backward_kernel_avx2, conv_backward_kernel_impl,
    (dy: &[f64], x: &[f64], g: &ConvGeom, c_out: usize, dw: &mut [f64])
);

fn gemm_conv_forward(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    let cols = im2col(x, g);
    let kl = g.c_in * g.kh * g.kw;
    let p = g.out_len();
    let mut out = vec![0.0; bias.len() * p];
    for (row, &b) in out.chunks_mut(p).zip(bias) {
        row.fill(b);
    }
    gemm(
        bias.len(),
        kl,
        p,
        w,
        (kl as isize, 1),
        &cols,
        (p as isize, 1),
        1.0,
        &mut out,
    );
    out
}

fn gemm_conv_backward_input(dy: &[f64], w: &[f64], g: &ConvGeom, c_out: usize, dx: &mut [f64]) {
    let kl = g.c_in * g.kh * g.kw;
    let p = g.out_len();
    let mut dcols = vec![0.0; kl * p];
    gemm(
        kl,
        c_out,
        p,
        w,
        (1, kl as isize),
        dy,
        (p as isize, 1),
        0.0,
        &mut dcols,
    );
    col2im_add(&dcols, g, dx);
}

fn gemm_conv_backward_kernel(dy: &[f64], x: &[f64], g: &ConvGeom, c_out: usize, dw: &mut [f64]) {
    let kl = g.c_in * g.kh * g.kw;
    let p = g.out_len();
    let cols = im2col(x, g);
    gemm(
        c_out,
        p,
        kl,
        dy,
        (p as isize, 1),
        &cols,
        (1, p as isize),
        1.0,
        dw,
    );
}

/// Zero-padded cross-correlation. `w` is `[C_out, C_in, kh, kw]`.
pub(crate) fn conv_forward(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeom) -> Vec<f64> {
    if g.prefers_gemm() {
        gemm_conv_forward(x, w, bias, g)
    } else {
        direct_conv_forward(x, w, bias, g)
    }
}

/// Accumulates the input gradient of [`conv_forward`] into `dx`.
pub(crate) fn conv_backward_input(
    dy: &[f64],
    w: &[f64],
    g: &ConvGeom,
    c_out: usize,
    dx: &mut [f64],
) {
    if g.prefers_gemm() {
        gemm_conv_backward_input(dy, w, g, c_out, dx)
    } else {
        direct_conv_backward_input(dy, w, g, c_out, dx)
    }
}

/// Accumulates the kernel gradient of [`conv_forward`] into `dw`.
pub(crate) fn conv_backward_kernel(
    dy: &[f64],
    x: &[f64],
    g: &ConvGeom,
    c_out: usize,
    dw: &mut [f64],
) {
    if g.prefers_gemm() {
        gemm_conv_backward_kernel(dy, x, g, c_out, dw)
    } else {
        direct_conv_backward_kernel(dy, x, g, c_out, dw)
    }
}

/// One axis of an align-corners-false bilinear resampling: for every output
/// coordinate the two source taps and the weight of the upper tap.
#[derive(Clone, Debug)]
pub(crate) struct ResizeAxis {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub frac: Vec<f64>,
}

impl ResizeAxis {
    pub fn new(in_len: usize, out_len: usize) -> Self {
        let scale = in_len as f64 / out_len as f64;
        let mut lo = Vec::with_capacity(out_len);
        let mut hi = Vec::with_capacity(out_len);
        let mut frac = Vec::with_capacity(out_len);
        for o in 0..out_len {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            lo.push(i0);
            hi.push(i1);
            frac.push(if i1 == i0 { 0.0 } else { src - i0 as f64 });
        }
        ResizeAxis { lo, hi, frac }
    }
}

pub(crate) fn resize_forward(
    x: &[f64],
    channels: usize,
    (h, w): (usize, usize),
    ay: &ResizeAxis,
    ax: &ResizeAxis,
) -> Vec<f64> {
    let (oh, ow) = (ay.lo.len(), ax.lo.len());
    let mut out = vec![0.0; channels * oh * ow];
    for c in 0..channels {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for oy in 0..oh {
            let (r0, r1, fy) = (ay.lo[oy] * w, ay.hi[oy] * w, ay.frac[oy]);
            for ox in 0..ow {
                let (c0, c1, fx) = (ax.lo[ox], ax.hi[ox], ax.frac[ox]);
                let top = plane[r0 + c0] * (1.0 - fx) + plane[r0 + c1] * fx;
                let bot = plane[r1 + c0] * (1.0 - fx) + plane[r1 + c1] * fx;
                out[(c * oh + oy) * ow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

pub(crate) fn resize_backward_add(
    dy: &[f64],
    channels: usize,
    (h, w): (usize, usize),
    ay: &ResizeAxis,
    ax: &ResizeAxis,
    dx: &mut [f64],
) {
    let (oh, ow) = (ay.lo.len(), ax.lo.len());
    for c in 0..channels {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for oy in 0..oh {
            let (r0, r1, fy) = (ay.lo[oy] * w, ay.hi[oy] * w, ay.frac[oy]);
            for ox in 0..ow {
                let (c0, c1, fx) = (ax.lo[ox], ax.hi[ox], ax.frac[ox]);
                let g = dy[(c * oh + oy) * ow + ox];
                plane[r0 + c0] += g * (1.0 - fy) * (1.0 - fx);
                plane[r0 + c1] += g * (1.0 - fy) * fx;
                plane[r1 + c0] += g * fy * (1.0 - fx);
                plane[r1 + c1] += g * fy * fx;
            }
        }
    }
}

/// For a `b` broadcast against `out_shape` by singleton expansion, the flat
/// index into `b` for every flat output index.
pub(crate) fn broadcast_map(out_shape: &[usize], b_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let mut b_strides = vec![0usize; rank];
    let mut acc = 1;
    for d in (0..rank).rev() {
        b_strides[d] = if b_shape[d] == 1 { 0 } else { acc };
        acc *= b_shape[d];
    }
    let n: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut flat_b = 0usize;
    for _ in 0..n {
        map.push(flat_b);
        for d in (0..rank).rev() {
            idx[d] += 1;
            flat_b += b_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            flat_b -= b_strides[d] * idx[d];
            idx[d] = 0;
        }
    }
    map
}

/// Splits a shape around `axis` into `(outer, axis_len, inner)` extents.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

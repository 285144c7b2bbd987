//! Dense numeric kernels shared by the graph ops.
//!
//! Every kernel accumulates in a fixed order that does not depend on the
//! batch size, so a sample produces the same bits alone or inside a batch.

/// Dot product with eight independent lanes, reduced in a fixed order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks_a = a.chunks_exact(8);
    let chunks_b = b.chunks_exact(8);
    let tail_a = chunks_a.remainder();
    let tail_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in tail_a.iter().zip(tail_b) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[b, :] = bias + x[b, :] · w` with `w` laid out `[inputs, outputs]`.
pub fn linear_forward(x: &[f32], w: &[f32], bias: &[f32], batch: usize, inputs: usize, outputs: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; batch * outputs];
    for b in 0..batch {
        let row = &mut out[b * outputs..(b + 1) * outputs];
        row.copy_from_slice(bias);
        let xr = &x[b * inputs..(b + 1) * inputs];
        for (i, &xi) in xr.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, &w[i * outputs..(i + 1) * outputs], row);
            }
        }
    }
    out
}

/// Gradients of [`linear_forward`] given the upstream gradient `dy`.
/// Returns `(dx, dw, db)`.
pub fn linear_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    batch: usize,
    inputs: usize,
    outputs: usize,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let mut dx = vec![0.0f32; batch * inputs];
    let mut dw = vec![0.0f32; inputs * outputs];
    let mut db = vec![0.0f32; outputs];
    for b in 0..batch {
        let dyr = &dy[b * outputs..(b + 1) * outputs];
        axpy(1.0, dyr, &mut db);
        let xr = &x[b * inputs..(b + 1) * inputs];
        let dxr = &mut dx[b * inputs..(b + 1) * inputs];
        for i in 0..inputs {
            let wr = &w[i * outputs..(i + 1) * outputs];
            dxr[i] = dot(wr, dyr);
            if xr[i] != 0.0 {
                axpy(xr[i], dyr, &mut dw[i * outputs..(i + 1) * outputs]);
            }
        }
    }
    (dx, dw, db)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    /// Unrolls one `[in_c, in_h, in_w]` sample into `[patch, out_h * out_w]`.
    fn im2col(&self, x: &[f32]) -> Vec<f32> {
        let (oh, ow) = (self.out_h(), self.out_w());
        let mut cols = vec![0.0f32; self.patch() * oh * ow];
        let k = self.kernel;
        for c in 0..self.in_c {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (c * k + ky) * k + kx;
                    let dst = &mut cols[r * oh * ow..(r + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            dst[oy * ow + ox] =
                                x[(c * self.in_h + iy as usize) * self.in_w + ix as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f32], dx: &mut [f32]) {
        let (oh, ow) = (self.out_h(), self.out_w());
        let k = self.kernel;
        for c in 0..self.in_c {
            for ky in 0..k {
                for kx in 0..k {
                    let r = (c * k + ky) * k + kx;
                    let src = &cols[r * oh * ow..(r + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            dx[(c * self.in_h + iy as usize) * self.in_w + ix as usize] +=
                                src[oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Convolution with weight `[out_c, in_c, k, k]` and bias `[out_c]`.
pub fn conv2d_forward(x: &[f32], w: &[f32], bias: &[f32], batch: usize, g: &ConvGeom) -> Vec<f32> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    let in_size = g.in_c * g.in_h * g.in_w;
    let patch = g.patch();
    let mut out = vec![0.0f32; batch * g.out_c * plane];
    for b in 0..batch {
        let cols = g.im2col(&x[b * in_size..(b + 1) * in_size]);
        let ob = &mut out[b * g.out_c * plane..(b + 1) * g.out_c * plane];
        for oc in 0..g.out_c {
            let dst = &mut ob[oc * plane..(oc + 1) * plane];
            dst.fill(bias[oc]);
            let wr = &w[oc * patch..(oc + 1) * patch];
            for (r, &wv) in wr.iter().enumerate() {
                if wv != 0.0 {
                    axpy(wv, &cols[r * plane..(r + 1) * plane], dst);
                }
            }
        }
    }
    out
}

/// Returns `(dx, dw, db)` for [`conv2d_forward`].
pub fn conv2d_backward(
    x: &[f32],
    w: &[f32],
    dy: &[f32],
    batch: usize,
    g: &ConvGeom,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    let in_size = g.in_c * g.in_h * g.in_w;
    let patch = g.patch();
    let mut dx = vec![0.0f32; batch * in_size];
    let mut dw = vec![0.0f32; g.out_c * patch];
    let mut db = vec![0.0f32; g.out_c];
    let mut dcols = vec![0.0f32; patch * plane];
    for b in 0..batch {
        let cols = g.im2col(&x[b * in_size..(b + 1) * in_size]);
        let dyb = &dy[b * g.out_c * plane..(b + 1) * g.out_c * plane];
        dcols.fill(0.0);
        for oc in 0..g.out_c {
            let dyr = &dyb[oc * plane..(oc + 1) * plane];
            db[oc] += dyr.iter().sum::<f32>();
            let wr = &w[oc * patch..(oc + 1) * patch];
            let dwr = &mut dw[oc * patch..(oc + 1) * patch];
            for r in 0..patch {
                let cr = &cols[r * plane..(r + 1) * plane];
                dwr[r] += dot(cr, dyr);
                if wr[r] != 0.0 {
                    axpy(wr[r], dyr, &mut dcols[r * plane..(r + 1) * plane]);
                }
            }
        }
        g.col2im(&dcols, &mut dx[b * in_size..(b + 1) * in_size]);
    }
    (dx, dw, db)
}

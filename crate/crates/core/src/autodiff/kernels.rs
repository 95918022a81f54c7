//! Forward and backward kernels for the spatial ops. Convolutions lower to
//! GEMM through im2col, one image at a time.

use super::scalar::{gemm, MatRef, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad + 1 - self.kh
    }

    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad + 1 - self.kw
    }

    pub fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad == 0
    }
}

/// `x` is one image `[cin, h, w]`; `col` becomes `[cin·kh·kw, oh·ow]`.
fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], col: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    for ci in 0..g.cin {
        let xc = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * plane..(row + 1) * plane];
                // ox range with 0 <= ox + kj - pad < w
                let ox0 = g.pad.saturating_sub(kj);
                let ox1 = (g.w + g.pad).saturating_sub(kj).min(ow);
                for oy in 0..oh {
                    let d = &mut dst[oy * ow..(oy + 1) * ow];
                    let iy = oy + ki;
                    if iy < g.pad || iy - g.pad >= g.h || ox0 >= ox1 {
                        d.fill(T::zero());
                        continue;
                    }
                    let iy = iy - g.pad;
                    d[..ox0].fill(T::zero());
                    d[ox1..].fill(T::zero());
                    let ix0 = ox0 + kj - g.pad;
                    d[ox0..ox1].copy_from_slice(&xc[iy * g.w + ix0..iy * g.w + ix0 + (ox1 - ox0)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `col` into `dx`.
fn col2im<T: Scalar>(g: &ConvGeom, col: &[T], dx: &mut [T]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane = oh * ow;
    for ci in 0..g.cin {
        let xc = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &col[row * plane..(row + 1) * plane];
                let ox0 = g.pad.saturating_sub(kj);
                let ox1 = (g.w + g.pad).saturating_sub(kj).min(ow);
                if ox0 >= ox1 {
                    continue;
                }
                for oy in 0..oh {
                    let iy = oy + ki;
                    if iy < g.pad || iy - g.pad >= g.h {
                        continue;
                    }
                    let iy = iy - g.pad;
                    let ix0 = ox0 + kj - g.pad;
                    let s = &src[oy * ow + ox0..oy * ow + ox1];
                    let d = &mut xc[iy * g.w + ix0..iy * g.w + ix0 + (ox1 - ox0)];
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a = *a + b;
                    }
                }
            }
        }
    }
}

/// `x: [n, cin, h, w]`, `w: [cout, cin, kh, kw]`, `b: [cout]`.
pub(crate) fn conv2d_forward<T: Scalar>(
    g: &ConvGeom,
    n: usize,
    cout: usize,
    x: &[T],
    w: &[T],
    b: &[T],
) -> Vec<T> {
    let plane = g.out_h() * g.out_w();
    let in_sz = g.cin * g.h * g.w;
    let mut out = vec![T::zero(); n * cout * plane];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); g.k() * plane]
    };
    let wm = MatRef::new(w, cout, g.k());
    for bi in 0..n {
        let xb = &x[bi * in_sz..(bi + 1) * in_sz];
        let ob = &mut out[bi * cout * plane..(bi + 1) * cout * plane];
        for (co, chunk) in ob.chunks_mut(plane).enumerate() {
            chunk.fill(b[co]);
        }
        let colm = if g.is_pointwise() {
            MatRef::new(xb, g.k(), plane)
        } else {
            im2col(g, xb, &mut col);
            MatRef::new(&col, g.k(), plane)
        };
        gemm(wm, colm, T::one(), ob);
    }
    out
}

/// Accumulates gradients of a convolution into `dx`, `dw`, `db` (any may be
/// skipped with `None`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    n: usize,
    cout: usize,
    x: &[T],
    w: &[T],
    dout: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let plane = g.out_h() * g.out_w();
    let in_sz = g.cin * g.h * g.w;
    let k = g.k();
    let mut col = vec![T::zero(); if g.is_pointwise() { 0 } else { k * plane }];
    let mut dcol = vec![T::zero(); k * plane];
    for bi in 0..n {
        let xb = &x[bi * in_sz..(bi + 1) * in_sz];
        let gb = &dout[bi * cout * plane..(bi + 1) * cout * plane];
        let gm = MatRef::new(gb, cout, plane);
        if let Some(db) = db.as_deref_mut() {
            for (co, chunk) in gb.chunks(plane).enumerate() {
                db[co] = db[co] + chunk.iter().copied().sum::<T>();
            }
        }
        if let Some(dw) = dw.as_deref_mut() {
            let colm = if g.is_pointwise() {
                MatRef::new(xb, k, plane)
            } else {
                im2col(g, xb, &mut col);
                MatRef::new(&col, k, plane)
            };
            gemm(gm, colm.t(), T::one(), dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dxb = &mut dx[bi * in_sz..(bi + 1) * in_sz];
            let wm = MatRef::new(w, cout, k);
            if g.is_pointwise() {
                gemm(wm.t(), gm, T::one(), dxb);
            } else {
                gemm(wm.t(), gm, T::zero(), &mut dcol);
                col2im(g, &dcol, dxb);
            }
        }
    }
}

/// Stride-2, 2×2 transposed convolution. `x: [n, cin, h, w]`,
/// `w: [cin, cout, 2, 2]`, output `[n, cout, 2h, 2w]`.
pub(crate) fn tconv2_forward<T: Scalar>(
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    wd: usize,
    x: &[T],
    w: &[T],
    b: &[T],
) -> Vec<T> {
    let plane = h * wd;
    let (oh, ow) = (2 * h, 2 * wd);
    let mut out = vec![T::zero(); n * cout * oh * ow];
    let mut y = vec![T::zero(); cout * 4 * plane];
    let wm = MatRef::new(w, cin, cout * 4);
    for bi in 0..n {
        let xb = MatRef::new(&x[bi * cin * plane..(bi + 1) * cin * plane], cin, plane);
        gemm(wm.t(), xb, T::zero(), &mut y);
        let ob = &mut out[bi * cout * oh * ow..(bi + 1) * cout * oh * ow];
        for co in 0..cout {
            for a in 0..2 {
                for c in 0..2 {
                    let yr = &y[((co * 4) + a * 2 + c) * plane..((co * 4) + a * 2 + c + 1) * plane];
                    for i in 0..h {
                        let orow = &mut ob[co * oh * ow + (2 * i + a) * ow..];
                        for j in 0..wd {
                            orow[2 * j + c] = yr[i * wd + j] + b[co];
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn tconv2_backward<T: Scalar>(
    n: usize,
    cin: usize,
    cout: usize,
    h: usize,
    wd: usize,
    x: &[T],
    w: &[T],
    dout: &[T],
    mut dx: Option<&mut [T]>,
    mut dw: Option<&mut [T]>,
    mut db: Option<&mut [T]>,
) {
    let plane = h * wd;
    let (oh, ow) = (2 * h, 2 * wd);
    let mut dy = vec![T::zero(); cout * 4 * plane];
    for bi in 0..n {
        let gb = &dout[bi * cout * oh * ow..(bi + 1) * cout * oh * ow];
        for co in 0..cout {
            if let Some(db) = db.as_deref_mut() {
                db[co] = db[co] + gb[co * oh * ow..(co + 1) * oh * ow].iter().copied().sum::<T>();
            }
            for a in 0..2 {
                for c in 0..2 {
                    let yr = &mut dy[((co * 4) + a * 2 + c) * plane..((co * 4) + a * 2 + c + 1) * plane];
                    for i in 0..h {
                        let grow = &gb[co * oh * ow + (2 * i + a) * ow..];
                        for j in 0..wd {
                            yr[i * wd + j] = grow[2 * j + c];
                        }
                    }
                }
            }
        }
        let dym = MatRef::new(&dy, cout * 4, plane);
        if let Some(dw) = dw.as_deref_mut() {
            let xb = MatRef::new(&x[bi * cin * plane..(bi + 1) * cin * plane], cin, plane);
            gemm(xb, dym.t(), T::one(), dw);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let wm = MatRef::new(w, cin, cout * 4);
            gemm(wm, dym, T::one(), &mut dx[bi * cin * plane..(bi + 1) * cin * plane]);
        }
    }
}

/// 2×2 max pooling; returns values and the flat input index of each max.
pub(crate) fn maxpool2_forward<T: Scalar>(
    nc: usize,
    h: usize,
    w: usize,
    x: &[T],
) -> (Vec<T>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(nc * oh * ow);
    let mut arg = Vec::with_capacity(nc * oh * ow);
    for p in 0..nc {
        let base = p * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best = base + 2 * i * w + 2 * j;
                for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * i + di) * w + 2 * j + dj;
                    // first maximum wins on ties
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

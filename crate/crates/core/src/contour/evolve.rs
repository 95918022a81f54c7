use serde::{Deserialize, Serialize};

use super::levelset::{reinitialize, LevelSet};
use crate::error::{Error, Result};
use crate::image::{Image, Mask};

/// Half-width in pixels of the band around the zero level where the region
/// force acts.
pub const BAND_HALF_WIDTH: f64 = 2.0;

/// Iterations between two checks of the stopping rule.
pub const STOP_WINDOW: usize = 10;

/// Smoothing scale of the edge indicator.
pub const EDGE_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcParams {
    /// Weight of the region term; `1 − w` goes to the edge term.
    pub w: f64,
    /// Local statistics use a `(2·r_kernel + 1)²` window.
    pub r_kernel: usize,
    pub step_size: f64,
    pub curvature_weight: f64,
    pub max_iters: usize,
    pub reinit_every: usize,
    /// Stop when fewer than `stop_tol × contour pixels` pixels change sign
    /// over [`STOP_WINDOW`] iterations.
    pub stop_tol: f64,
}

impl Default for AcParams {
    fn default() -> Self {
        AcParams {
            w: 0.5,
            r_kernel: 5,
            step_size: 0.2,
            curvature_weight: 0.2,
            max_iters: 500,
            reinit_every: 25,
            stop_tol: 1e-3,
        }
    }
}

impl AcParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::validation(m));
        if !(0.0..=1.0).contains(&self.w) {
            return fail("w must be in [0, 1]");
        }
        if !(1..=12).contains(&self.r_kernel) {
            return fail("r_kernel must be in [1, 12]");
        }
        if self.max_iters == 0 || self.reinit_every == 0 {
            return fail("max_iters and reinit_every must be > 0");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return fail("step_size must be > 0");
        }
        if !(self.curvature_weight >= 0.0) || !(self.stop_tol >= 0.0) {
            return fail("curvature_weight and stop_tol must be >= 0");
        }
        Ok(())
    }
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    data: Vec<f64>,
}

impl Integral {
    fn new(w: usize, h: usize, f: impl Fn(usize) -> f64) -> Self {
        let mut data = vec![0.0; (w + 1) * (h + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += f(y * w + x);
                data[(y + 1) * (w + 1) + x + 1] = data[y * (w + 1) + x + 1] + row;
            }
        }
        Integral { w, data }
    }

    /// Sum over `[x0, x1) × [y0, y1)`.
    fn sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.w + 1;
        self.data[y1 * s + x1] - self.data[y0 * s + x1] - self.data[y1 * s + x0] + self.data[y0 * s + x0]
    }
}

fn gaussian_blur(w: usize, h: usize, src: &[f64], sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = (-r..=r)
                .zip(&kernel)
                .map(|(i, k)| k * src[y * w + clamp(x as isize + i, w)])
                .sum::<f64>()
                / norm;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = (-r..=r)
                .zip(&kernel)
                .map(|(i, k)| k * tmp[clamp(y as isize + i, h) * w + x])
                .sum::<f64>()
                / norm;
        }
    }
    out
}

/// Central differences, one-sided at the border.
fn gradient(w: usize, h: usize, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            if xr > xl {
                gx[i] = (f[y * w + xr] - f[y * w + xl]) / (xr - xl) as f64;
            }
            if yd > yu {
                gy[i] = (f[yd * w + x] - f[yu * w + x]) / (yd - yu) as f64;
            }
        }
    }
    (gx, gy)
}

/// Edge indicator `g = 1 / (1 + |∇(G_σ ⋆ I)|²)` with intensities in 0–255.
pub fn edge_indicator(image: &Image) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let src: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
    let smooth = gaussian_blur(w, h, &src, EDGE_SIGMA);
    let (gx, gy) = gradient(w, h, &smooth);
    gx.iter().zip(&gy).map(|(a, b)| 1.0 / (1.0 + a * a + b * b)).collect()
}

/// Precomputed image quantities shared by every iteration.
struct Field {
    w: usize,
    h: usize,
    intensity: Vec<f64>,
    g: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    sum_all: Integral,
    sq_all: Integral,
}

impl Field {
    fn new(image: &Image) -> Self {
        let (w, h) = (image.width(), image.height());
        let intensity: Vec<f64> = image.data().iter().map(|&v| v as f64).collect();
        let g = edge_indicator(image);
        let (gx, gy) = gradient(w, h, &g);
        let sum_all = Integral::new(w, h, |i| intensity[i]);
        let sq_all = Integral::new(w, h, |i| intensity[i] * intensity[i]);
        Field {
            w,
            h,
            intensity,
            g,
            gx,
            gy,
            sum_all,
            sq_all,
        }
    }

    fn window(&self, x: usize, y: usize, r: usize) -> (usize, usize, usize, usize) {
        (x.saturating_sub(r), y.saturating_sub(r), (x + r + 1).min(self.w), (y + r + 1).min(self.h))
    }
}

struct InsideSums {
    count: Integral,
    sum: Integral,
    sq: Integral,
}

impl InsideSums {
    fn new(f: &Field, phi: &[f64], with_sq: bool) -> Self {
        let inside = |i: usize| if phi[i] < 0.0 { 1.0 } else { 0.0 };
        InsideSums {
            count: Integral::new(f.w, f.h, inside),
            sum: Integral::new(f.w, f.h, |i| inside(i) * f.intensity[i]),
            sq: if with_sq {
                Integral::new(f.w, f.h, |i| inside(i) * f.intensity[i] * f.intensity[i])
            } else {
                Integral { w: 0, data: Vec::new() }
            },
        }
    }
}

/// Local means inside and outside the contour over the stencil of pixel
/// `(x, y)`; `None` when one side is absent from the window.
fn local_means(f: &Field, s: &InsideSums, x: usize, y: usize, r: usize) -> Option<(f64, f64)> {
    let (x0, y0, x1, y1) = f.window(x, y, r);
    let total = ((x1 - x0) * (y1 - y0)) as f64;
    let n_in = s.count.sum(x0, y0, x1, y1);
    let n_out = total - n_in;
    if n_in < 0.5 || n_out < 0.5 {
        return None;
    }
    let s_in = s.sum.sum(x0, y0, x1, y1);
    let s_out = f.sum_all.sum(x0, y0, x1, y1) - s_in;
    Some((s_in / n_in, s_out / n_out))
}

/// Curvature `div(∇φ/|∇φ|)` and `|∇φ|` with central differences.
fn curvature(phi: &[f64], w: usize, h: usize, x: usize, y: usize) -> (f64, f64) {
    let at = |xx: usize, yy: usize| phi[yy * w + xx];
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
    let c = at(x, y);
    let px = (at(xr, y) - at(xl, y)) / 2.0;
    let py = (at(x, yd) - at(x, yu)) / 2.0;
    let pxx = at(xr, y) - 2.0 * c + at(xl, y);
    let pyy = at(x, yd) - 2.0 * c + at(x, yu);
    let pxy = (at(xr, yd) - at(xr, yu) - at(xl, yd) + at(xl, yu)) / 4.0;
    let g2 = px * px + py * py;
    let norm = g2.sqrt();
    if norm < 1e-8 {
        return (0.0, 0.0);
    }
    let k = (pxx * py * py - 2.0 * px * py * pxy + pyy * px * px) / (g2 * norm);
    (k, norm)
}

fn contour_pixel_count(phi: &[f64], w: usize, h: usize) -> usize {
    let mut n = 0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if phi[i] >= 0.0 {
                continue;
            }
            let border = (x > 0 && phi[i - 1] >= 0.0)
                || (x + 1 < w && phi[i + 1] >= 0.0)
                || (y > 0 && phi[i - w] >= 0.0)
                || (y + 1 < h && phi[i + w] >= 0.0);
            n += border as usize;
        }
    }
    n
}

/// Run statistics of one evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub mask: Mask,
    pub iterations: usize,
    pub converged: bool,
    pub phi: LevelSet,
}

/// Evolves `init` on `image` and returns the `{phi < 0}` mask.
pub fn evolve(image: &Image, init: &LevelSet, params: &AcParams) -> Result<Mask> {
    Ok(evolve_traced(image, init, params, |_, _| Ok(()))?.mask)
}

/// As [`evolve`], calling `observe(iteration, phi)` after every update.
pub fn evolve_traced<F>(image: &Image, init: &LevelSet, params: &AcParams, mut observe: F) -> Result<Evolution>
where
    F: FnMut(usize, &LevelSet) -> Result<()>,
{
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    if init.width != w || init.height != h {
        return Err(Error::shape(format!(
            "image {w}x{h} vs level set {}x{}",
            init.width, init.height
        )));
    }
    let field = Field::new(image);
    let mut ls = init.clone();
    let mut rate = vec![0.0; w * h];
    let mut force = vec![0.0; w * h];
    let mut snapshot: Vec<bool> = ls.phi.iter().map(|&v| v < 0.0).collect();
    let mut snapshot_contour = contour_pixel_count(&ls.phi, w, h);
    let dt = params.step_size;
    let (wr, we, mu) = (params.w, 1.0 - params.w, params.curvature_weight);
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=params.max_iters {
        iterations = it;
        let phi = &ls.phi;
        force.iter_mut().for_each(|f| *f = 0.0);
        if wr > 0.0 {
            let sums = InsideSums::new(&field, phi, false);
            let mut fmax: f64 = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if phi[i].abs() > BAND_HALF_WIDTH {
                        continue;
                    }
                    if let Some((u_in, u_out)) = local_means(&field, &sums, x, y, params.r_kernel) {
                        let v = field.intensity[i];
                        let f = (v - u_in).powi(2) - (v - u_out).powi(2);
                        force[i] = f;
                        fmax = fmax.max(f.abs());
                    }
                }
            }
            if fmax > 0.0 {
                force.iter_mut().for_each(|f| *f /= fmax);
            }
        }
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (k, norm) = curvature(phi, w, h, x, y);
                let mut v = wr * force[i] + mu * k * norm;
                if we > 0.0 {
                    // upwind advection along a = −∇g
                    let (ax, ay) = (-field.gx[i], -field.gy[i]);
                    let c = phi[i];
                    let dxm = if x > 0 { c - phi[i - 1] } else { 0.0 };
                    let dxp = if x + 1 < w { phi[i + 1] - c } else { 0.0 };
                    let dym = if y > 0 { c - phi[i - w] } else { 0.0 };
                    let dyp = if y + 1 < h { phi[i + w] - c } else { 0.0 };
                    let adv = ax.max(0.0) * dxm + ax.min(0.0) * dxp + ay.max(0.0) * dym + ay.min(0.0) * dyp;
                    v += we * (field.g[i] * k * norm - adv);
                }
                rate[i] = v;
            }
        }
        for (p, r) in ls.phi.iter_mut().zip(&rate) {
            *p += dt * r;
        }
        if ls.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                iteration: it,
                message: "level set became non-finite".into(),
            });
        }
        if it % params.reinit_every == 0 {
            reinitialize(&mut ls);
        }
        observe(it, &ls)?;
        if it % STOP_WINDOW == 0 {
            let changed = ls
                .phi
                .iter()
                .zip(&snapshot)
                .filter(|(&p, &s)| (p < 0.0) != s)
                .count();
            if (changed as f64) < params.stop_tol * snapshot_contour.max(1) as f64 {
                converged = true;
                break;
            }
            snapshot = ls.phi.iter().map(|&v| v < 0.0).collect();
            snapshot_contour = contour_pixel_count(&ls.phi, w, h);
        }
    }
    Ok(Evolution {
        mask: ls.mask(),
        iterations,
        converged,
        phi: ls,
    })
}

/// Total energy `w·E_region + (1 − w)·E_edge + μ·length` of a level set.
///
/// `E_region` sums, over band pixels, the within-window variance of each
/// side normalised by the window size and 255²; `E_edge` is the
/// `g`-weighted contour length. Lengths use `|∇H_ε(d)|` with ε = 1, where
/// `d` is the signed distance re-embedding of `ls`, so the energy depends on
/// the zero level only.
pub fn energy(image: &Image, ls: &LevelSet, params: &AcParams) -> Result<f64> {
    params.validate()?;
    let (w, h) = (image.width(), image.height());
    if ls.width != w || ls.height != h {
        return Err(Error::shape(format!("image {w}x{h} vs level set {}x{}", ls.width, ls.height)));
    }
    let field = Field::new(image);
    let mut sdf = ls.clone();
    reinitialize(&mut sdf);
    let ls = &sdf;
    let heav: Vec<f64> = ls
        .phi
        .iter()
        .map(|&p| 0.5 * (1.0 - (2.0 / std::f64::consts::PI) * p.atan()))
        .collect();
    let (hx, hy) = gradient(w, h, &heav);
    let (mut length, mut edge) = (0.0, 0.0);
    for i in 0..w * h {
        let d = hx[i].hypot(hy[i]);
        length += d;
        edge += field.g[i] * d;
    }
    let sums = InsideSums::new(&field, &ls.phi, true);
    let mut region = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if ls.phi[i].abs() > BAND_HALF_WIDTH {
                continue;
            }
            let (x0, y0, x1, y1) = field.window(x, y, params.r_kernel);
            let total = ((x1 - x0) * (y1 - y0)) as f64;
            let n_in = sums.count.sum(x0, y0, x1, y1);
            let s_in = sums.sum.sum(x0, y0, x1, y1);
            let q_in = sums.sq.sum(x0, y0, x1, y1);
            let n_out = total - n_in;
            let s_out = field.sum_all.sum(x0, y0, x1, y1) - s_in;
            let q_out = field.sq_all.sum(x0, y0, x1, y1) - q_in;
            let ss = |n: f64, s: f64, q: f64| if n > 0.5 { q - s * s / n } else { 0.0 };
            region += (ss(n_in, s_in, q_in) + ss(n_out, s_out, q_out)) / (total * 255.0 * 255.0);
        }
    }
    let e = params.w * region + (1.0 - params.w) * edge + params.curvature_weight * length;
    if !e.is_finite() {
        return Err(Error::Numeric {
            iteration: 0,
            message: "energy is non-finite".into(),
        });
    }
    Ok(e)
}

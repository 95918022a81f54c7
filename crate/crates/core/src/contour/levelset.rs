use crate::error::{Error, Result};
use crate::image::Mask;

/// Implicit contour: `phi < 0` inside, zero level on the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub width: usize,
    pub height: usize,
    pub phi: Vec<f64>,
}

impl LevelSet {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.phi[y * self.width + x]
    }

    pub fn mask(&self) -> Mask {
        Mask::new(self.width, self.height, self.phi.iter().map(|&v| v < 0.0).collect())
            .expect("level set has consistent shape")
    }
}

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[k]].is_infinite() {
            v[k] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *o = if f[p].is_infinite() {
            f64::INFINITY
        } else {
            (q as f64 - p as f64).powi(2) + f[p]
        };
    }
}

/// Exact squared Euclidean distance from every pixel center to the nearest
/// pixel where `seed` is true.
pub(crate) fn squared_distance(width: usize, height: usize, seed: impl Fn(usize) -> bool) -> Vec<f64> {
    let mut d: Vec<f64> = (0..width * height)
        .map(|i| if seed(i) { 0.0 } else { f64::INFINITY })
        .collect();
    let n = width.max(height);
    let (mut f, mut out) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..width {
        for y in 0..height {
            f[y] = d[y * width + x];
        }
        edt_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            d[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut d[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        edt_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    d
}

/// Signed Euclidean distance to the mask boundary, negative inside. The
/// boundary sits half a pixel from the centers of the pixels on either side.
pub fn init_levelset(nominal: &Mask) -> Result<LevelSet> {
    if !nominal.has_both_classes() {
        return Err(Error::validation(
            "nominal mask must contain both foreground and background",
        ));
    }
    let (w, h) = (nominal.width(), nominal.height());
    let m = nominal.data();
    let to_out = squared_distance(w, h, |i| !m[i]);
    let to_in = squared_distance(w, h, |i| m[i]);
    let phi = (0..w * h)
        .map(|i| {
            if m[i] {
                -(to_out[i].sqrt() - 0.5)
            } else {
                to_in[i].sqrt() - 0.5
            }
        })
        .collect();
    Ok(LevelSet { width: w, height: h, phi })
}

/// Restores `phi` to a signed distance function without moving its zero
/// level: interface pixels get their interpolated distance to the crossing,
/// the rest is filled by fast sweeping of `|∇d| = 1`.
pub fn reinitialize(ls: &mut LevelSet) {
    let (w, h) = (ls.width, ls.height);
    let phi = &ls.phi;
    let mut d = vec![f64::INFINITY; w * h];
    let mut fixed = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let p = phi[i];
            let mut best = f64::INFINITY;
            let mut visit = |j: usize| {
                let q = phi[j];
                if (p < 0.0) != (q < 0.0) {
                    let denom = (p - q).abs();
                    let t = if denom > 0.0 { p.abs() / denom } else { 0.5 };
                    best = best.min(t);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if best.is_finite() {
                d[i] = best;
                fixed[i] = true;
            }
        }
    }
    if !fixed.iter().any(|&f| f) {
        return;
    }
    let update = |d: &mut [f64], x: usize, y: usize| {
        let i = y * w + x;
        if fixed[i] {
            return;
        }
        let a = match (x > 0, x + 1 < w) {
            (true, true) => d[i - 1].min(d[i + 1]),
            (true, false) => d[i - 1],
            (false, true) => d[i + 1],
            (false, false) => f64::INFINITY,
        };
        let b = match (y > 0, y + 1 < h) {
            (true, true) => d[i - w].min(d[i + w]),
            (true, false) => d[i - w],
            (false, true) => d[i + w],
            (false, false) => f64::INFINITY,
        };
        let u = if (a - b).abs() >= 1.0 {
            a.min(b) + 1.0
        } else {
            (a + b + (2.0 - (a - b).powi(2)).sqrt()) / 2.0
        };
        if u < d[i] {
            d[i] = u;
        }
    };
    for _ in 0..2 {
        for y in 0..h {
            for x in 0..w {
                update(&mut d, x, y);
            }
            for x in (0..w).rev() {
                update(&mut d, x, y);
            }
        }
        for y in (0..h).rev() {
            for x in 0..w {
                update(&mut d, x, y);
            }
            for x in (0..w).rev() {
                update(&mut d, x, y);
            }
        }
    }
    for (p, dv) in ls.phi.iter_mut().zip(d) {
        *p = if *p < 0.0 { -dv } else { dv };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_class_rejected() {
        assert!(init_levelset(&Mask::from_fn(5, 5, |_, _| true)).is_err());
    }

    #[test]
    fn half_plane_distances() {
        let m = Mask::from_fn(10, 4, |x, _| x < 5);
        let ls = init_levelset(&m).unwrap();
        assert_eq!(ls.get(4, 2), -0.5);
        assert_eq!(ls.get(5, 2), 0.5);
        assert_eq!(ls.get(0, 0), -4.5);
        assert_eq!(ls.get(9, 3), 4.5);
        assert_eq!(ls.mask(), m);
    }

    #[test]
    fn reinit_keeps_zero_level_and_fixes_slope() {
        let m = Mask::from_fn(40, 40, |x, y| (x as f64 - 19.5).hypot(y as f64 - 19.5) < 12.0);
        let mut ls = init_levelset(&m).unwrap();
        for p in &mut ls.phi {
            *p *= 3.0;
        }
        reinitialize(&mut ls);
        assert_eq!(ls.mask(), m);
        // row through the center: slope ~1 away from the interface
        let d = ls.get(19, 30) - ls.get(19, 34);
        assert!((d.abs() - 4.0).abs() < 0.4, "{d}");
    }
}

//! Lifting of images to orientation scores with a bank of real cake
//! wavelets.
//!
//! The bank is built in the Fourier domain: a periodized B-spline window in
//! polar angle per orientation (the windows sum to one on every ray) times a
//! raised-cosine radial low-pass with the DC component removed. The spatial
//! kernels are the real parts of the inverse transforms, cropped to `K×K`.
//! A line with direction `θ` concentrates its spectrum on the ray
//! perpendicular to it, so the window of orientation `θₖ` is centred at
//! `θₖ + π/2`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field2, GridM2, LiftedField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CakeParams {
    /// Radial cutoff in cycles per pixel.
    pub rho_max: f64,
    /// Width of the raised-cosine taper below the cutoff, as a fraction of it.
    pub taper: f64,
    /// B-spline order of the angular windows.
    pub spline_order: u32,
    pub remove_dc: bool,
}

impl Default for CakeParams {
    fn default() -> Self {
        Self {
            rho_max: 0.45,
            taper: 0.4,
            spline_order: 3,
            remove_dc: true,
        }
    }
}

/// Centred cardinal B-spline of order `n` (support `[-(n+1)/2, (n+1)/2]`).
pub fn bspline(n: u32, x: f64) -> f64 {
    let half = (n as f64 + 1.0) / 2.0;
    if x.abs() >= half {
        return 0.0;
    }
    let mut fact = 1.0;
    for i in 2..=n {
        fact *= i as f64;
    }
    let mut binom = 1.0;
    let mut acc = 0.0;
    for k in 0..=(n + 1) {
        let t = x + half - k as f64;
        if t > 0.0 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * binom * t.powi(n as i32);
        }
        binom = binom * (n + 1 - k) as f64 / (k + 1) as f64;
    }
    acc / fact
}

#[derive(Debug, Clone)]
pub struct WaveletBank {
    pub ntheta: usize,
    /// Kernel side length (odd).
    pub size: usize,
    pub params: CakeParams,
    /// Real spatial kernels, row-major `K×K`, centre at `(K/2, K/2)`.
    pub kernels: Vec<Vec<f64>>,
}

impl WaveletBank {
    /// Angular window of orientation `k` at polar frequency angle `phi`.
    pub fn angular_window(&self, k: usize, phi: f64) -> f64 {
        angular_window(self.ntheta, self.params.spline_order, k, phi)
    }

    pub fn radial_window(&self, rho: f64) -> f64 {
        radial_window(&self.params, rho)
    }

    pub fn kernel(&self, k: usize) -> &[f64] {
        &self.kernels[k]
    }

    /// Kernel value at integer offset `(dx, dy)` from the centre.
    pub fn kernel_at(&self, k: usize, dx: i64, dy: i64) -> f64 {
        let r = (self.size / 2) as i64;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.kernels[k][((dx + r) + self.size as i64 * (dy + r)) as usize]
    }

    fn radius(&self) -> usize {
        self.size / 2
    }
}

fn angular_window(ntheta: usize, order: u32, k: usize, phi: f64) -> f64 {
    let s = 2.0 * PI / ntheta as f64;
    let centre = k as f64 * s + PI / 2.0;
    let x = (phi - centre) / s;
    let n = ntheta as f64;
    // periodize; the support is narrower than the circle for nθ ≥ order + 1
    let x = x - n * (x / n).round();
    (-2..=2).map(|m| bspline(order, x + m as f64 * n)).sum()
}

fn radial_window(p: &CakeParams, rho: f64) -> f64 {
    let flat = p.rho_max * (1.0 - p.taper);
    if rho <= flat {
        1.0
    } else if rho >= p.rho_max {
        0.0
    } else {
        let t = (rho - flat) / (p.rho_max - flat);
        0.5 * (1.0 + (PI * t).cos())
    }
}

fn freq(u: usize, n: usize) -> f64 {
    let s = if u <= n / 2 { u as f64 } else { u as f64 - n as f64 };
    s / n as f64
}

pub fn build_cake_bank(ntheta: usize, size: usize, params: CakeParams) -> Result<WaveletBank> {
    if ntheta < 4 {
        return Err(Error::InvalidParameter(format!("cake bank needs nθ ≥ 4, got {ntheta}")));
    }
    if size % 2 == 0 || size < 3 {
        return Err(Error::InvalidParameter(format!("kernel size must be odd and ≥ 3, got {size}")));
    }
    if (params.spline_order as usize) + 1 > ntheta {
        return Err(Error::InvalidParameter(format!(
            "B-spline order {} too wide for {ntheta} orientations",
            params.spline_order
        )));
    }
    if !(params.rho_max > 0.0 && params.rho_max <= 0.5) || !(params.taper > 0.0 && params.taper <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "radial window needs 0 < ρ_max ≤ 0.5 and 0 < taper ≤ 1, got {} and {}",
            params.rho_max, params.taper
        )));
    }
    // fine Fourier sampling (odd, so the grid is symmetric under ω ↦ −ω and
    // quarter turns)
    let n = 4 * size + 1;
    let ifft = FftPlanner::new().plan_fft_inverse(n);
    let r = size / 2;
    let kernels = (0..ntheta)
        .into_par_iter()
        .map(|k| {
            let mut spec: Vec<Complex<f64>> = (0..n * n)
                .map(|i| {
                    let (fx, fy) = (freq(i % n, n), freq(i / n, n));
                    let rho = fx.hypot(fy);
                    if params.remove_dc && i == 0 {
                        return Complex::new(0.0, 0.0);
                    }
                    let a = if rho == 0.0 {
                        1.0 / ntheta as f64
                    } else {
                        angular_window(ntheta, params.spline_order, k, fy.atan2(fx))
                    };
                    Complex::new(a * radial_window(&params, rho), 0.0)
                })
                .collect();
            fft2(&mut spec, n, n, &ifft, &ifft);
            let scale = 1.0 / (n * n) as f64;
            let mut ker: Vec<f64> = (0..size * size)
                .map(|i| {
                    let dx = (i % size) as i64 - r as i64;
                    let dy = (i / size) as i64 - r as i64;
                    let u = dx.rem_euclid(n as i64) as usize;
                    let v = dy.rem_euclid(n as i64) as usize;
                    spec[u + n * v].re * scale
                })
                .collect();
            if params.remove_dc {
                let mean = ker.iter().sum::<f64>() / ker.len() as f64;
                ker.iter_mut().for_each(|v| *v -= mean);
            }
            ker
        })
        .collect();
    Ok(WaveletBank {
        ntheta,
        size,
        params,
        kernels,
    })
}

/// In-place 2D transform of a row-major `w×h` array.
fn fft2(data: &mut [Complex<f64>], w: usize, h: usize, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
    for r in data.chunks_exact_mut(w) {
        row.process(r);
    }
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[x + w * y];
        }
        col.process(&mut column);
        for y in 0..h {
            data[x + w * y] = column[y];
        }
    }
}

fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n - 2;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

/// Periodic FFT workspace on a reflectively padded image domain.
struct Padded {
    w: usize,
    h: usize,
    pw: usize,
    ph: usize,
    pad: usize,
    fwd_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
}

impl Padded {
    fn new(w: usize, h: usize, pad: usize) -> Self {
        let (pw, ph) = (w + 2 * pad, h + 2 * pad);
        let mut planner = FftPlanner::new();
        Self {
            w,
            h,
            pw,
            ph,
            pad,
            fwd_row: planner.plan_fft_forward(pw),
            fwd_col: planner.plan_fft_forward(ph),
            inv_row: planner.plan_fft_inverse(pw),
            inv_col: planner.plan_fft_inverse(ph),
        }
    }

    fn forward(&self, get: impl Fn(usize, usize) -> f64) -> Vec<Complex<f64>> {
        let p = self.pad as i64;
        let mut buf: Vec<Complex<f64>> = (0..self.pw * self.ph)
            .map(|i| {
                let x = reflect((i % self.pw) as i64 - p, self.w);
                let y = reflect((i / self.pw) as i64 - p, self.h);
                Complex::new(get(x, y), 0.0)
            })
            .collect();
        fft2(&mut buf, self.pw, self.ph, &self.fwd_row, &self.fwd_col);
        buf
    }

    fn kernel_spectrum(&self, bank: &WaveletBank, k: usize) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.pw * self.ph];
        let r = bank.radius() as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                let u = dx.rem_euclid(self.pw as i64) as usize;
                let v = dy.rem_euclid(self.ph as i64) as usize;
                buf[u + self.pw * v].re += bank.kernel_at(k, dx, dy);
            }
        }
        fft2(&mut buf, self.pw, self.ph, &self.fwd_row, &self.fwd_col);
        buf
    }

    /// Inverse transform, cropped to the image domain.
    fn inverse(&self, mut buf: Vec<Complex<f64>>) -> Vec<f64> {
        fft2(&mut buf, self.pw, self.ph, &self.inv_row, &self.inv_col);
        let scale = 1.0 / (self.pw * self.ph) as f64;
        let mut out = Vec::with_capacity(self.w * self.h);
        for y in 0..self.h {
            for x in 0..self.w {
                out.push(buf[(x + self.pad) + self.pw * (y + self.pad)].re * scale);
            }
        }
        out
    }
}

fn check_size(f: &Field2, bank: &WaveletBank) -> Result<()> {
    if bank.size > f.width || bank.size > f.height {
        return Err(Error::DimensionMismatch(format!(
            "kernel of size {} exceeds the {}x{} image",
            bank.size, f.width, f.height
        )));
    }
    Ok(())
}

/// `U(x, θₖ) = Σ_d ψₖ(d) f(x + d)`, by frequency-domain products on the
/// reflectively padded image.
pub fn orientation_score(f: &Field2, bank: &WaveletBank) -> Result<LiftedField> {
    check_size(f, bank)?;
    let grid = GridM2::new(f.width, f.height, bank.ntheta)?;
    let pad = Padded::new(f.width, f.height, bank.radius());
    let spec = pad.forward(|x, y| f.get(x, y));
    let planes: Vec<Vec<f64>> = (0..bank.ntheta)
        .into_par_iter()
        .map(|k| {
            let ker = pad.kernel_spectrum(bank, k);
            // correlation with a real kernel: multiply by the conjugate
            let prod = spec.iter().zip(&ker).map(|(a, b)| a * b.conj()).collect();
            pad.inverse(prod)
        })
        .collect();
    LiftedField::from_values(grid, planes.concat())
}

/// Relative energy below which a frequency is outside the retained band.
pub const BAND_THRESHOLD: f64 = 0.05;

fn reconstruction_threshold(m: &[f64]) -> f64 {
    BAND_THRESHOLD * m.iter().copied().fold(0.0, f64::max)
}

/// Adjoint-sum reconstruction `Σₖ ψₖ ∗ Uₖ`, re-normalized in the Fourier
/// domain by the bank's energy `Σₖ |ψ̂ₖ|²` where that exceeds
/// [`BAND_THRESHOLD`] of its maximum (elsewhere the band is dropped).
pub fn reconstruct_approx(u: &LiftedField, bank: &WaveletBank) -> Result<Field2> {
    let g = u.grid;
    if g.ntheta != bank.ntheta {
        return Err(Error::DimensionMismatch(format!(
            "score has {} orientations, bank {}",
            g.ntheta, bank.ntheta
        )));
    }
    if bank.size > g.nx || bank.size > g.ny {
        return Err(Error::DimensionMismatch("kernel larger than score planes".into()));
    }
    let pad = Padded::new(g.nx, g.ny, bank.radius());
    let parts: Vec<(Vec<Complex<f64>>, Vec<f64>)> = (0..g.ntheta)
        .into_par_iter()
        .map(|k| {
            let ker = pad.kernel_spectrum(bank, k);
            let spec = pad.forward(|x, y| u.at(x, y, k));
            let adj = spec.iter().zip(&ker).map(|(a, b)| a * b).collect();
            let energy = ker.iter().map(|c| c.norm_sqr()).collect();
            (adj, energy)
        })
        .collect();
    let len = pad.pw * pad.ph;
    let mut acc = vec![Complex::new(0.0, 0.0); len];
    let mut energy = vec![0.0; len];
    for (a, e) in &parts {
        for i in 0..len {
            acc[i] += a[i];
            energy[i] += e[i];
        }
    }
    let tau = reconstruction_threshold(&energy);
    for (a, &e) in acc.iter_mut().zip(&energy) {
        *a = if e > tau { *a / e } else { Complex::new(0.0, 0.0) };
    }
    Ok(Field2 {
        width: g.nx,
        height: g.ny,
        data: pad.inverse(acc),
    })
}

/// The part of `f` within the band that [`reconstruct_approx`] retains.
pub fn band_pass(f: &Field2, bank: &WaveletBank) -> Result<Field2> {
    check_size(f, bank)?;
    let pad = Padded::new(f.width, f.height, bank.radius());
    let mut energy = vec![0.0; pad.pw * pad.ph];
    for k in 0..bank.ntheta {
        for (e, c) in energy.iter_mut().zip(pad.kernel_spectrum(bank, k)) {
            *e += c.norm_sqr();
        }
    }
    let tau = reconstruction_threshold(&energy);
    let spec = pad
        .forward(|x, y| f.get(x, y))
        .into_iter()
        .zip(&energy)
        .map(|(c, &e)| if e > tau { c } else { Complex::new(0.0, 0.0) })
        .collect();
    Ok(Field2 {
        width: f.width,
        height: f.height,
        data: pad.inverse(spec),
    })
}

/// Relative L2 error of lift-then-reconstruct against the band-passed image,
/// over the interior at least one kernel width away from the border (the
/// reflective padding does not commute with oriented kernels).
pub fn reconstruction_error(f: &Field2, bank: &WaveletBank) -> Result<f64> {
    let rec = reconstruct_approx(&orientation_score(f, bank)?, bank)?;
    let band = band_pass(f, bank)?;
    let m = bank.size;
    if f.width <= 2 * m || f.height <= 2 * m {
        return Err(Error::DimensionMismatch("image too small for an interior error".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for y in m..f.height - m {
        for x in m..f.width - m {
            let (a, b) = (rec.get(x, y), band.get(x, y));
            num += (a - b).powi(2);
            den += b * b;
        }
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn bank(n: usize) -> WaveletBank {
        build_cake_bank(n, 15, CakeParams::default()).unwrap()
    }

    fn smooth_noise(w: usize, h: usize, seed: u64) -> Field2 {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        // separable box blur, three passes ≈ Gaussian
        let mut v = raw;
        for _ in 0..3 {
            let prev = v.clone();
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0;
                    for d in -1i64..=1 {
                        s += prev[reflect(x as i64 + d, w) + w * y];
                    }
                    v[x + w * y] = s / 3.0;
                }
            }
            let prev = v.clone();
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0;
                    for d in -1i64..=1 {
                        s += prev[x + w * reflect(y as i64 + d, h)];
                    }
                    v[x + w * y] = s / 3.0;
                }
            }
        }
        Field2 {
            width: w,
            height: h,
            data: v,
        }
    }

    #[test]
    fn bspline_partition_and_values() {
        for n in 0..5 {
            for i in 0..50 {
                let x = -3.0 + 0.123 * i as f64;
                let s: f64 = (-10..=10).map(|k| bspline(n, x - k as f64)).sum();
                assert!((s - 1.0).abs() < 1e-12, "order {n}");
            }
        }
        assert!((bspline(3, 0.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((bspline(3, 1.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn angular_windows_sum_to_one() {
        for n in [4, 8, 16, 32] {
            let b = bank(n);
            for i in 0..360 {
                let phi = -PI + i as f64 * 2.0 * PI / 360.0 + 0.001;
                let s: f64 = (0..n).map(|k| b.angular_window(k, phi)).sum();
                assert!((s - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kernels_have_no_dc() {
        let b = bank(16);
        for k in 0..16 {
            assert!(b.kernel(k).iter().sum::<f64>().abs() < 1e-10);
        }
    }

    #[test]
    fn opposite_orientations_share_real_kernels() {
        let b = bank(16);
        let m = b.kernels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..8 {
            for (a, c) in b.kernel(k).iter().zip(b.kernel(k + 8)) {
                assert!((a - c).abs() < 1e-12 * m);
            }
        }
    }

    #[test]
    fn quarter_turn_rotates_kernels() {
        // kernel k + nθ/4 is kernel k rotated by π/2: ψ_{k+q}(R d) = ψ_k(d)
        let b = bank(16);
        let m = b.kernels.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let r = 7;
        for k in 0..16 {
            for dy in -r..=r {
                for dx in -r..=r {
                    let a = b.kernel_at(k, dx, dy);
                    let c = b.kernel_at((k + 4) % 16, -dy, dx);
                    assert!((a - c).abs() < 1e-12 * m);
                }
            }
        }
    }

    #[test]
    fn kernel_rotation_within_resampling_tolerance() {
        // ψ_k(d) against the band-limited interpolant of ψ₀ at R⁻¹d, both
        // evaluated directly from the analytic spectrum
        let p = CakeParams { remove_dc: false, ..CakeParams::default() };
        let n = 16;
        let b = build_cake_bank(n, 15, p).unwrap();
        let nf = 4 * 15 + 1;
        let spec0: Vec<(f64, f64, f64)> = (0..nf * nf)
            .map(|i| {
                let (fx, fy) = (freq(i % nf, nf), freq(i / nf, nf));
                let rho = fx.hypot(fy);
                let a = if rho == 0.0 { 1.0 / n as f64 } else { b.angular_window(0, fy.atan2(fx)) };
                (fx, fy, a * b.radial_window(rho))
            })
            .collect();
        let psi0 = |x: f64, y: f64| {
            spec0.iter().map(|(fx, fy, a)| a * (2.0 * PI * (fx * x + fy * y)).cos()).sum::<f64>()
                / (nf * nf) as f64
        };
        let m = b.kernels[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in [1, 3, 5] {
            let t = b_theta(n, k);
            let mut err = 0.0f64;
            for dy in -4i64..=4 {
                for dx in -4i64..=4 {
                    let (x, y) = (dx as f64, dy as f64);
                    let (u, v) = (t.cos() * x + t.sin() * y, -t.sin() * x + t.cos() * y);
                    err = err.max((b.kernel_at(k, dx, dy) - psi0(u, v)).abs());
                }
            }
            assert!(err < 2e-2 * m, "k = {k}: {err} vs {m}");
        }
    }

    fn b_theta(n: usize, k: usize) -> f64 {
        k as f64 * 2.0 * PI / n as f64
    }

    #[test]
    fn zero_image_gives_zero_score() {
        let u = orientation_score(&Field2::zeros(32, 24), &bank(8)).unwrap();
        assert_eq!(u.grid, GridM2::new(32, 24, 8).unwrap());
        assert!(u.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn score_matches_direct_correlation() {
        let f = smooth_noise(24, 20, 5);
        let b = bank(8);
        let u = orientation_score(&f, &b).unwrap();
        for &(x, y, k) in &[(10usize, 9usize, 0usize), (12, 10, 3), (7, 11, 6)] {
            let mut s = 0.0;
            for dy in -7i64..=7 {
                for dx in -7i64..=7 {
                    s += b.kernel_at(k, dx, dy) * f.get((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                }
            }
            assert!((u.at(x, y, k) - s).abs() < 1e-10);
        }
    }

    #[test]
    fn line_orientation_is_detected() {
        let n = 16;
        let b = bank(n);
        for &deg in &[0.0, 30.0, 67.0, 95.0, 140.0] {
            let t: f64 = (deg as f64).to_radians();
            let (c, s) = (t.cos(), t.sin());
            let f = Field2::from_fn(65, 65, |x, y| {
                let (px, py) = (x as f64 - 32.0, y as f64 - 32.0);
                let d = -s * px + c * py;
                (-d * d / 2.0).exp()
            });
            let u = orientation_score(&f, &b).unwrap();
            let best = (0..n)
                .max_by(|&a, &bb| u.at(32, 32, a).abs().total_cmp(&u.at(32, 32, bb).abs()))
                .unwrap();
            let expect = (0..n)
                .min_by(|&a, &bb| {
                    let da = crate::grid::angle_diff(2.0 * u.grid.theta(a), 2.0 * t).abs();
                    let db = crate::grid::angle_diff(2.0 * u.grid.theta(bb), 2.0 * t).abs();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(best % (n / 2), expect % (n / 2), "{deg}°");
        }
    }

    #[test]
    fn crossing_separates_in_orientation() {
        let n = 16;
        let b = bank(n);
        let line = |px: f64, py: f64, t: f64| {
            let d = -t.sin() * px + t.cos() * py;
            (-d * d / 2.0).exp()
        };
        let f = Field2::from_fn(65, 65, |x, y| {
            let (px, py) = (x as f64 - 32.0, y as f64 - 32.0);
            line(px, py, 0.0) + line(px, py, PI / 2.0)
        });
        let u = orientation_score(&f, &b).unwrap();
        // θ profile over [0, π): local maxima (cyclic) with substantial height
        let prof: Vec<f64> = (0..n / 2).map(|k| u.at(32, 32, k)).collect();
        let top = prof.iter().copied().fold(f64::MIN, f64::max);
        let h = n / 2;
        let maxima: Vec<usize> = (0..h)
            .filter(|&k| prof[k] > prof[(k + 1) % h] && prof[k] > prof[(k + h - 1) % h] && prof[k] > 0.5 * top)
            .collect();
        assert_eq!(maxima, vec![0, 4], "{prof:?}");
    }

    /// Random plane waves with frequencies in `[0.1, 0.25]` cycles/pixel.
    fn band_limited(w: usize, h: usize, seed: u64) -> Field2 {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let waves: Vec<(f64, f64, f64, f64)> = (0..200)
            .map(|_| {
                let rho = rng.random_range(0.1..0.25);
                let phi = rng.random_range(0.0..2.0 * PI);
                (rho * phi.cos(), rho * phi.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(-1.0..1.0))
            })
            .collect();
        Field2::from_fn(w, h, |x, y| {
            waves
                .iter()
                .map(|(fx, fy, ph, a)| a * (2.0 * PI * (fx * x as f64 + fy * y as f64) + ph).cos())
                .sum()
        })
    }

    #[test]
    fn reconstruction_of_band_limited_image() {
        let f = band_limited(128, 96, 9);
        let err = reconstruction_error(&f, &bank(16)).unwrap();
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn constant_image_reconstructs_to_zero() {
        let b = bank(8);
        let f = Field2::from_fn(32, 32, |_, _| 3.0);
        let rec = reconstruct_approx(&orientation_score(&f, &b).unwrap(), &b).unwrap();
        assert!(rec.max_abs() < 1e-9);
    }

    #[test]
    fn reconstruction_is_linear() {
        let b = bank(8);
        let f = smooth_noise(32, 32, 1);
        let g = smooth_noise(32, 32, 2);
        let uf = orientation_score(&f, &b).unwrap();
        let ug = orientation_score(&g, &b).unwrap();
        let sum = LiftedField::from_values(uf.grid, uf.values.iter().zip(&ug.values).map(|(a, b)| a + b).collect()).unwrap();
        let r = reconstruct_approx(&sum, &b).unwrap();
        let rf = reconstruct_approx(&uf, &b).unwrap();
        let rg = reconstruct_approx(&ug, &b).unwrap();
        for i in 0..r.data.len() {
            assert!((r.data[i] - rf.data[i] - rg.data[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_cake_bank(3, 15, CakeParams::default()).is_err());
        assert!(build_cake_bank(8, 14, CakeParams::default()).is_err());
        let b = bank(8);
        assert!(orientation_score(&Field2::zeros(10, 40), &b).is_err());
        let u = LiftedField::constant(GridM2::new(20, 20, 4).unwrap(), 0.0);
        assert!(reconstruct_approx(&u, &b).is_err());
    }

    #[test]
    fn score_is_equivariant() {
        // quarter turn about the centre plus an integer shift, applied to a
        // compact pattern on a zero background
        let n = 16;
        let b = bank(n);
        let size = 61;
        let blob = smooth_noise(21, 21, 4);
        let place = |ox: i64, oy: i64, rot: bool| {
            Field2::from_fn(size, size, |x, y| {
                let (dx, dy) = (x as i64 - ox, y as i64 - oy);
                // rotated pattern: g(d) = blob(R⁻¹ d) with R⁻¹(dx, dy) = (dy, −dx)
                let (sx, sy) = if rot { (dy, -dx) } else { (dx, dy) };
                if sx.abs() <= 10 && sy.abs() <= 10 {
                    let w = (1.0 - (sx * sx + sy * sy) as f64 / 100.0).max(0.0);
                    w * blob.get((sx + 10) as usize, (sy + 10) as usize)
                } else {
                    0.0
                }
            })
        };
        let f = place(28, 30, false);
        let g = place(33, 27, true);
        let uf = orientation_score(&f, &b).unwrap();
        let ug = orientation_score(&g, &b).unwrap();
        let m = uf.max_abs();
        let mut err = 0.0f64;
        for y in 10..51i64 {
            for x in 10..51i64 {
                let (dx, dy) = (x - 33, y - 27);
                let (sx, sy) = (28 + dy, 30 - dx);
                if !(0..size as i64).contains(&sx) || !(0..size as i64).contains(&sy) {
                    continue;
                }
                for k in 0..n {
                    let kr = (k + n - n / 4) % n;
                    let a = ug.at(x as usize, y as usize, k);
                    let c = uf.at(sx as usize, sy as usize, kr);
                    err = err.max((a - c).abs());
                }
            }
        }
        assert!(err <= 1e-2 * m, "{err} vs {m}");
    }
}

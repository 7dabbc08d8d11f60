//! Dense TV-L1 optical flow.
//!
//! Coarse-to-fine primal-dual solver: an image pyramid, bilinear warping of
//! the second frame toward the first, and per-warp alternation between a
//! pointwise thresholding step on the linearized data term and a Chambolle
//! dual update on the total-variation term. Images are grayscale in
//! [0, 255]; no RNG anywhere, so the result is a pure function of the
//! inputs.

use crate::corpus::VideoTensor;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Gradient magnitudes below this are treated as zero in the thresholding
/// step to avoid dividing by an ill-conditioned denominator.
const GRAD_EPS: f32 = 1e-10;

/// Grayscale image, row-major, values in [0, 255].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(h: usize, w: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), h * w);
        Image { h, w, data }
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Image {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.w + x]
    }
}

/// Dense flow for one frame pair, dims H x W x 2 interleaved (u, v).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl FlowField {
    pub fn zeros(h: usize, w: usize) -> Self {
        FlowField {
            h,
            w,
            data: vec![0.0; h * w * 2],
        }
    }

    #[inline]
    pub fn u(&self, y: usize, x: usize) -> f32 {
        self.data[(y * self.w + x) * 2]
    }

    #[inline]
    pub fn v(&self, y: usize, x: usize) -> f32 {
        self.data[(y * self.w + x) * 2 + 1]
    }

    pub fn max_magnitude(&self) -> f32 {
        self.data
            .chunks_exact(2)
            .map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt())
            .fold(0.0, f32::max)
    }
}

/// Flow fields for all consecutive frame pairs of a T-frame video:
/// dims (T-1) x H x W x 2.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStack {
    pub frames: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f32>,
}

impl FlowStack {
    pub fn field(&self, t: usize) -> &[f32] {
        let sz = self.h * self.w * 2;
        &self.data[t * sz..(t + 1) * sz]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TvL1Params {
    /// Data-term weight lambda.
    pub lambda_tv: f32,
    /// Coupling parameter between the data and TV variables.
    pub theta: f32,
    /// Dual ascent step; must stay <= 0.25 for stability.
    pub tau_tv: f32,
    pub warps_per_level: usize,
    pub inner_iterations: usize,
    pub pyramid_scale: f64,
    pub min_level_size: usize,
}

impl Default for TvL1Params {
    fn default() -> Self {
        TvL1Params {
            lambda_tv: 0.15,
            theta: 0.3,
            tau_tv: 0.25,
            warps_per_level: 3,
            inner_iterations: 30,
            pyramid_scale: 0.5,
            min_level_size: 16,
        }
    }
}

impl TvL1Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_tv > 0.0 && self.tau_tv <= 0.25) {
            return Err(Error::validation("tau_tv must be in (0, 0.25]"));
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::validation("pyramid_scale must be in (0, 1)"));
        }
        if self.warps_per_level == 0 || self.inner_iterations == 0 {
            return Err(Error::validation(
                "warps_per_level and inner_iterations must be >= 1",
            ));
        }
        if self.min_level_size < 2 {
            return Err(Error::validation("min_level_size must be >= 2"));
        }
        Ok(())
    }
}

/// TV-L1 energy of `flow` after each warp at the finest pyramid level,
/// in warp order. Non-increase is asserted inside the solver; tests inspect
/// the raw sequence.
#[derive(Debug, Clone, Default)]
pub struct FlowDiagnostics {
    pub finest_level_energies: Vec<f64>,
}

/// 3x3 binomial smoothing with replicate borders.
fn smooth(img: &Image) -> Image {
    let (h, w) = (img.h, img.w);
    let mut tmp = vec![0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            tmp[y * w + x] = 0.25 * img.at(y, xm) + 0.5 * img.at(y, x) + 0.25 * img.at(y, xp);
        }
    }
    let mut out = vec![0f32; h * w];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            out[y * w + x] =
                0.25 * tmp[ym * w + x] + 0.5 * tmp[y * w + x] + 0.25 * tmp[yp * w + x];
        }
    }
    Image { h, w, data: out }
}

#[inline]
fn bilinear(img: &Image, x: f32, y: f32) -> f32 {
    let xc = x.clamp(0.0, (img.w - 1) as f32);
    let yc = y.clamp(0.0, (img.h - 1) as f32);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    let x1 = (x0 + 1).min(img.w - 1);
    let y1 = (y0 + 1).min(img.h - 1);
    let fx = xc - x0 as f32;
    let fy = yc - y0 as f32;
    let a = img.at(y0, x0) * (1.0 - fx) + img.at(y0, x1) * fx;
    let b = img.at(y1, x0) * (1.0 - fx) + img.at(y1, x1) * fx;
    a * (1.0 - fy) + b * fy
}

fn downsample(img: &Image, nh: usize, nw: usize) -> Image {
    let pre = smooth(img);
    let sx = img.w as f32 / nw as f32;
    let sy = img.h as f32 / nh as f32;
    let mut data = Vec::with_capacity(nh * nw);
    for y in 0..nh {
        for x in 0..nw {
            let src_x = (x as f32 + 0.5) * sx - 0.5;
            let src_y = (y as f32 + 0.5) * sy - 0.5;
            data.push(bilinear(&pre, src_x, src_y));
        }
    }
    Image { h: nh, w: nw, data }
}

/// Level dims from finest (index 0) to coarsest.
fn pyramid_dims(h: usize, w: usize, params: &TvL1Params) -> Vec<(usize, usize)> {
    let mut dims = vec![(h, w)];
    loop {
        let (ch, cw) = *dims.last().unwrap();
        let nh = (ch as f64 * params.pyramid_scale).round() as usize;
        let nw = (cw as f64 * params.pyramid_scale).round() as usize;
        if nh.min(nw) < params.min_level_size {
            break;
        }
        dims.push((nh, nw));
    }
    dims
}

fn build_pyramid(img: &Image, dims: &[(usize, usize)]) -> Vec<Image> {
    let mut levels = vec![img.clone()];
    for &(nh, nw) in &dims[1..] {
        let prev = levels.last().unwrap();
        levels.push(downsample(prev, nh, nw));
    }
    levels
}

/// Central differences with replicate borders.
fn gradients(img: &Image) -> (Image, Image) {
    let (h, w) = (img.h, img.w);
    let mut gx = vec![0f32; h * w];
    let mut gy = vec![0f32; h * w];
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            gx[y * w + x] = 0.5 * (img.at(y, xp) - img.at(y, xm));
            gy[y * w + x] = 0.5 * (img.at(yp, x) - img.at(ym, x));
        }
    }
    (Image { h, w, data: gx }, Image { h, w, data: gy })
}

/// Forward differences; zero at the far border.
fn forward_diff(u: &[f32], h: usize, w: usize, ux: &mut [f32], uy: &mut [f32]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            ux[i] = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            uy[i] = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

/// Divergence adjoint to `forward_diff`.
#[inline]
fn divergence_at(p1: &[f32], p2: &[f32], h: usize, w: usize, y: usize, x: usize) -> f32 {
    let i = y * w + x;
    let dx = if x == 0 {
        p1[i]
    } else if x == w - 1 {
        -p1[i - 1]
    } else {
        p1[i] - p1[i - 1]
    };
    let dy = if y == 0 {
        p2[i]
    } else if y == h - 1 {
        -p2[i - w]
    } else {
        p2[i] - p2[i - w]
    };
    dx + dy
}

/// Exact (non-linearized) TV-L1 energy of `u` for monotonicity checks.
fn tvl1_energy(i0: &Image, i1: &Image, u1: &[f32], u2: &[f32], lambda: f32) -> f64 {
    let (h, w) = (i0.h, i0.w);
    let mut data_term = 0f64;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let warped = bilinear(i1, x as f32 + u1[i], y as f32 + u2[i]);
            data_term += (warped - i0.at(y, x)).abs() as f64;
        }
    }
    let mut tv = 0f64;
    let mut ux = vec![0f32; h * w];
    let mut uy = vec![0f32; h * w];
    for comp in [u1, u2] {
        forward_diff(comp, h, w, &mut ux, &mut uy);
        for i in 0..h * w {
            tv += ((ux[i] * ux[i] + uy[i] * uy[i]) as f64).sqrt();
        }
    }
    lambda as f64 * data_term + tv
}

/// One pyramid level of the primal-dual scheme. `u1`/`u2` carry the incoming
/// estimate and are updated in place.
///
/// Each warp re-linearizes the data term; that step alone does not guarantee
/// the true (non-linearized) energy decreases, so the level is safeguarded:
/// a warp whose result raises the energy is reverted and iteration stops.
/// When `energies` is given (finest level), the accepted energy is recorded
/// after every warp and asserted non-increasing.
fn solve_level(
    i0: &Image,
    i1: &Image,
    u1: &mut [f32],
    u2: &mut [f32],
    params: &TvL1Params,
    energies: Option<&mut Vec<f64>>,
) {
    let (h, w) = (i0.h, i0.w);
    let n = h * w;
    let l_t = params.lambda_tv * params.theta;
    let taut = params.tau_tv / params.theta;

    let (g1x, g1y) = gradients(i1);

    let mut p11 = vec![0f32; n];
    let mut p12 = vec![0f32; n];
    let mut p21 = vec![0f32; n];
    let mut p22 = vec![0f32; n];

    let mut i1w = vec![0f32; n];
    let mut i1wx = vec![0f32; n];
    let mut i1wy = vec![0f32; n];
    let mut grad = vec![0f32; n];
    let mut rho_c = vec![0f32; n];
    let mut v1 = vec![0f32; n];
    let mut v2 = vec![0f32; n];
    let mut ux = vec![0f32; n];
    let mut uy = vec![0f32; n];

    let mut energy_log = energies;
    let mut last_energy = tvl1_energy(i0, i1, u1, u2, params.lambda_tv);

    for _warp in 0..params.warps_per_level {
        let prev_u1 = u1.to_vec();
        let prev_u2 = u2.to_vec();
        // warp I1 and its gradients to the current flow estimate
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let sx = x as f32 + u1[i];
                let sy = y as f32 + u2[i];
                i1w[i] = bilinear(i1, sx, sy);
                i1wx[i] = bilinear(&g1x, sx, sy);
                i1wy[i] = bilinear(&g1y, sx, sy);
                grad[i] = i1wx[i] * i1wx[i] + i1wy[i] * i1wy[i];
                rho_c[i] = i1w[i] - i1wx[i] * u1[i] - i1wy[i] * u2[i] - i0.at(y, x);
            }
        }

        for _it in 0..params.inner_iterations {
            // pointwise thresholding on the linearized data term
            for i in 0..n {
                let rho = rho_c[i] + i1wx[i] * u1[i] + i1wy[i] * u2[i];
                let (d1, d2) = if rho < -l_t * grad[i] {
                    (l_t * i1wx[i], l_t * i1wy[i])
                } else if rho > l_t * grad[i] {
                    (-l_t * i1wx[i], -l_t * i1wy[i])
                } else if grad[i] > GRAD_EPS {
                    (-rho * i1wx[i] / grad[i], -rho * i1wy[i] / grad[i])
                } else {
                    (0.0, 0.0)
                };
                v1[i] = u1[i] + d1;
                v2[i] = u2[i] + d2;
            }

            // TV step: u = v + theta * div(p)
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    u1[i] = v1[i] + params.theta * divergence_at(&p11, &p12, h, w, y, x);
                    u2[i] = v2[i] + params.theta * divergence_at(&p21, &p22, h, w, y, x);
                }
            }

            // dual ascent with reprojection
            forward_diff(u1, h, w, &mut ux, &mut uy);
            for i in 0..n {
                let ng = (ux[i] * ux[i] + uy[i] * uy[i]).sqrt();
                let den = 1.0 + taut * ng;
                p11[i] = (p11[i] + taut * ux[i]) / den;
                p12[i] = (p12[i] + taut * uy[i]) / den;
            }
            forward_diff(u2, h, w, &mut ux, &mut uy);
            for i in 0..n {
                let ng = (ux[i] * ux[i] + uy[i] * uy[i]).sqrt();
                let den = 1.0 + taut * ng;
                p21[i] = (p21[i] + taut * ux[i]) / den;
                p22[i] = (p22[i] + taut * uy[i]) / den;
            }
        }

        let e = tvl1_energy(i0, i1, u1, u2, params.lambda_tv);
        if e > last_energy {
            u1.copy_from_slice(&prev_u1);
            u2.copy_from_slice(&prev_u2);
            if let Some(log) = energy_log.as_deref_mut() {
                log.push(last_energy);
            }
            break;
        }
        last_energy = e;
        if let Some(log) = energy_log.as_deref_mut() {
            assert!(
                e <= *log.last().unwrap_or(&f64::INFINITY),
                "TV-L1 energy increased across warps at finest level"
            );
            log.push(e);
        }
    }
}

fn upsample_flow(u: &[f32], ch: usize, cw: usize, fh: usize, fw: usize, scale: f32) -> Vec<f32> {
    let img = Image {
        h: ch,
        w: cw,
        data: u.to_vec(),
    };
    let sx = cw as f32 / fw as f32;
    let sy = ch as f32 / fh as f32;
    let mut out = Vec::with_capacity(fh * fw);
    for y in 0..fh {
        for x in 0..fw {
            let src_x = (x as f32 + 0.5) * sx - 0.5;
            let src_y = (y as f32 + 0.5) * sy - 0.5;
            out.push(bilinear(&img, src_x, src_y) * scale);
        }
    }
    out
}

pub fn tvl1_flow(frame_a: &Image, frame_b: &Image, params: &TvL1Params) -> Result<FlowField> {
    Ok(tvl1_flow_with_diagnostics(frame_a, frame_b, params)?.0)
}

pub fn tvl1_flow_with_diagnostics(
    frame_a: &Image,
    frame_b: &Image,
    params: &TvL1Params,
) -> Result<(FlowField, FlowDiagnostics)> {
    params.validate()?;
    if frame_a.h != frame_b.h || frame_a.w != frame_b.w {
        return Err(Error::validation(format!(
            "frame dims differ: {}x{} vs {}x{}",
            frame_a.h, frame_a.w, frame_b.h, frame_b.w
        )));
    }
    if frame_a.h.min(frame_a.w) < params.min_level_size {
        return Err(Error::validation(format!(
            "frames must be at least {0}x{0}",
            params.min_level_size
        )));
    }

    let a = smooth(frame_a);
    let b = smooth(frame_b);
    let dims = pyramid_dims(a.h, a.w, params);
    let pyr_a = build_pyramid(&a, &dims);
    let pyr_b = build_pyramid(&b, &dims);

    let coarsest = dims.len() - 1;
    let (ch0, cw0) = dims[coarsest];
    let mut u1 = vec![0f32; ch0 * cw0];
    let mut u2 = vec![0f32; ch0 * cw0];
    let mut diag = FlowDiagnostics::default();

    for level in (0..dims.len()).rev() {
        let (h, w) = dims[level];
        let energies = if level == 0 {
            Some(&mut diag.finest_level_energies)
        } else {
            None
        };
        solve_level(&pyr_a[level], &pyr_b[level], &mut u1, &mut u2, params, energies);

        if level > 0 {
            let (fh, fw) = dims[level - 1];
            u1 = upsample_flow(&u1, h, w, fh, fw, fw as f32 / w as f32);
            u2 = upsample_flow(&u2, h, w, fh, fw, fh as f32 / h as f32);
        }
    }

    let (h, w) = dims[0];
    let mut data = Vec::with_capacity(h * w * 2);
    for i in 0..h * w {
        data.push(u1[i]);
        data.push(u2[i]);
    }
    Ok((FlowField { h, w, data }, diag))
}

/// Flow between every consecutive frame pair. Frame pairs are independent;
/// they are computed in parallel and merged in index order so the result is
/// identical for any thread count.
pub fn video_flow(video: &VideoTensor, params: &TvL1Params) -> Result<FlowStack> {
    if video.t < 2 {
        return Err(Error::validation(format!(
            "video_flow needs T >= 2 frames, got {}",
            video.t
        )));
    }
    let grays: Vec<Image> = (0..video.t)
        .map(|t| Image::new(video.h, video.w, video.gray_frame(t)))
        .collect();
    let fields: Vec<FlowField> = (0..video.t - 1)
        .into_par_iter()
        .map(|t| tvl1_flow(&grays[t], &grays[t + 1], params))
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity((video.t - 1) * video.h * video.w * 2);
    for f in &fields {
        data.extend_from_slice(&f.data);
    }
    Ok(FlowStack {
        frames: video.t - 1,
        h: video.h,
        w: video.w,
        data,
    })
}

/// Clamp a flow component to [-b, b] and rescale to [-1, 1].
#[inline]
pub fn normalize_flow_component(v: f32, clamp_bound: f32) -> f32 {
    v.clamp(-clamp_bound, clamp_bound) / clamp_bound
}

/// Network input tensor for flow rows [clip_start, clip_start + clip_len):
/// L x H x W x 2, each component clamped to [-B, B] then divided by B.
pub fn encode_flow_input(
    stack: &FlowStack,
    clip_start: usize,
    clip_len: usize,
    clamp_bound: f32,
) -> Result<Vec<f32>> {
    if clamp_bound <= 0.0 {
        return Err(Error::validation("clamp_bound must be > 0"));
    }
    let end = clip_start
        .checked_add(clip_len)
        .filter(|&e| e <= stack.frames)
        .ok_or_else(|| {
            Error::validation(format!(
                "clip [{clip_start}, {clip_start}+{clip_len}) out of range for {} flow frames",
                stack.frames
            ))
        })?;
    let sz = stack.h * stack.w * 2;
    let mut out = Vec::with_capacity(clip_len * sz);
    for t in clip_start..end {
        out.extend(
            stack.data[t * sz..(t + 1) * sz]
                .iter()
                .map(|&v| normalize_flow_component(v, clamp_bound)),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    /// Smooth toroidal test texture: a sum of Gaussian blobs with wrapped
    /// distances, so a circular shift of the array is an exact translation.
    pub fn blob_texture(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f32, f32, f32, f32)> = (0..10)
            .map(|_| {
                (
                    rng.random_range(0.0..w as f32),
                    rng.random_range(0.0..h as f32),
                    rng.random_range(4.0..8.0f32),
                    rng.random_range(40.0..120.0f32),
                )
            })
            .collect();
        let mut data = vec![40.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                for &(bx, by, sigma, amp) in &blobs {
                    let dx = (x as f32 - bx).abs();
                    let dx = dx.min(w as f32 - dx);
                    let dy = (y as f32 - by).abs();
                    let dy = dy.min(h as f32 - dy);
                    data[y * w + x] += amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        Image { h, w, data }
    }

    pub fn roll(img: &Image, sx: isize, sy: isize) -> Image {
        let (h, w) = (img.h, img.w);
        let mut data = vec![0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                let src_x = (x as isize - sx).rem_euclid(w as isize) as usize;
                let src_y = (y as isize - sy).rem_euclid(h as isize) as usize;
                data[y * w + x] = img.at(src_y, src_x);
            }
        }
        Image { h, w, data }
    }

    /// Mean endpoint error versus a constant ground-truth flow over the
    /// interior (margin-stripped) region.
    pub fn mean_epe_const(flow: &FlowField, gt: (f32, f32), margin: usize) -> f32 {
        let mut sum = 0f64;
        let mut count = 0usize;
        for y in margin..flow.h - margin {
            for x in margin..flow.w - margin {
                let du = flow.u(y, x) - gt.0;
                let dv = flow.v(y, x) - gt.1;
                sum += ((du * du + dv * dv) as f64).sqrt();
                count += 1;
            }
        }
        (sum / count as f64) as f32
    }

    #[test]
    fn identical_frames_give_zero_flow() {
        let img = blob_texture(32, 32, 3);
        let flow = tvl1_flow(&img, &img, &TvL1Params::default()).unwrap();
        assert!(flow.max_magnitude() < 1e-3, "{}", flow.max_magnitude());
    }

    #[test]
    fn two_pixel_shift_is_recovered() {
        let a = blob_texture(64, 64, 5);
        let b = roll(&a, 2, 0);
        let flow = tvl1_flow(&a, &b, &TvL1Params::default()).unwrap();
        let epe = mean_epe_const(&flow, (2.0, 0.0), 8);
        assert!(epe < 0.5, "mean EPE {epe}");
    }

    #[test]
    fn swapping_frames_negates_the_flow() {
        let a = blob_texture(64, 64, 5);
        let b = roll(&a, 2, 0);
        let flow = tvl1_flow(&b, &a, &TvL1Params::default()).unwrap();
        let epe = mean_epe_const(&flow, (-2.0, 0.0), 8);
        assert!(epe < 0.5, "mean EPE {epe}");
    }

    #[test]
    fn integer_shifts_recovered_both_axes() {
        for (sx, sy, seed) in [(1, 0, 9), (0, 2, 10), (3, 0, 11), (0, -2, 12), (-1, 0, 13)] {
            let a = blob_texture(64, 64, seed);
            let b = roll(&a, sx, sy);
            let flow = tvl1_flow(&a, &b, &TvL1Params::default()).unwrap();
            let epe = mean_epe_const(&flow, (sx as f32, sy as f32), 8);
            assert!(epe < 0.5, "shift ({sx},{sy}): mean EPE {epe}");
        }
    }

    #[test]
    fn energy_is_recorded_and_non_increasing() {
        let a = blob_texture(64, 64, 21);
        let b = roll(&a, 2, 1);
        let (_, diag) = tvl1_flow_with_diagnostics(&a, &b, &TvL1Params::default()).unwrap();
        let n = diag.finest_level_energies.len();
        assert!(n >= 1 && n <= TvL1Params::default().warps_per_level);
        for pair in diag.finest_level_energies.windows(2) {
            assert!(pair[1] <= pair[0], "{pair:?}");
        }
    }

    #[test]
    fn dim_mismatch_is_rejected() {
        let a = Image::zeros(32, 32);
        let b = Image::zeros(32, 33);
        assert!(tvl1_flow(&a, &b, &TvL1Params::default()).is_err());
    }

    #[test]
    fn static_video_gives_zero_stack_and_t2_shape() {
        let spec = crate::corpus::VideoSpec {
            frames: 2,
            height: 32,
            width: 32,
            sprite_size: 6,
            sprite_color: [230, 230, 230],
            start: (9.0, 14.0),
            velocity: (0.0, 0.0),
            background: crate::corpus::Background::Solid(60.0),
            drift: (0.0, 0.0),
            noise_sigma: 0.0,
            noise_seed: None,
        };
        let video = crate::corpus::render_video(&spec);
        let stack = video_flow(&video, &TvL1Params::default()).unwrap();
        assert_eq!(stack.frames, 1);
        let max = stack.data.iter().fold(0f32, |m, &v| m.max(v.abs()));
        assert!(max < 1e-3, "{max}");
    }

    #[test]
    fn single_frame_video_is_rejected() {
        let video = VideoTensor {
            t: 1,
            h: 32,
            w: 32,
            c: 3,
            data: vec![0; 32 * 32 * 3],
        };
        assert!(video_flow(&video, &TvL1Params::default()).is_err());
    }

    #[test]
    fn constant_velocity_sprite_has_stationary_flow() {
        let mut spec = crate::corpus::VideoSpec {
            frames: 6,
            height: 32,
            width: 32,
            sprite_size: 6,
            sprite_color: [255, 255, 255],
            start: (16.0, 16.0),
            velocity: (1.0, 0.0),
            background: crate::corpus::Background::Textured {
                base: 88.0,
                waves: vec![
                    crate::corpus::Wave { kx: 1, ky: 2, amp: 14.0, phase: 0.4 },
                    crate::corpus::Wave { kx: -2, ky: 1, amp: 12.0, phase: 1.7 },
                    crate::corpus::Wave { kx: 3, ky: -1, amp: 10.0, phase: 3.0 },
                ],
            },
            drift: (0.0, 0.0),
            noise_sigma: 0.0,
            noise_seed: None,
        };
        spec.velocity = (1.0, 0.0);
        let video = crate::corpus::render_video(&spec);
        let stack = video_flow(&video, &TvL1Params::default()).unwrap();
        let sz = 32 * 32 * 2;
        for t in 1..stack.frames {
            let (a, b) = (stack.field(0), stack.field(t));
            let mut sum = 0f64;
            for i in (0..sz).step_by(2) {
                let du = a[i] - b[i];
                let dv = a[i + 1] - b[i + 1];
                sum += ((du * du + dv * dv) as f64).sqrt();
            }
            let mean = sum / (sz / 2) as f64;
            assert!(mean < 0.5, "pair (0, {t}): mean EPE {mean}");
        }
    }

    #[test]
    fn flow_input_encoding_clamps_and_scales() {
        let stack = FlowStack {
            frames: 1,
            h: 1,
            w: 3,
            data: vec![25.0, 0.0, -20.0, 5.0, 20.0, -25.0],
        };
        let enc = encode_flow_input(&stack, 0, 1, 20.0).unwrap();
        assert_eq!(enc, vec![1.0, 0.0, -1.0, 0.25, 1.0, -1.0]);
        assert!(encode_flow_input(&stack, 0, 2, 20.0).is_err());
        assert!(encode_flow_input(&stack, 1, 1, 20.0).is_ok());
        assert!(encode_flow_input(&stack, 2, 0, 20.0).is_ok());
    }
}

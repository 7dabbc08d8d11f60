//! Synthetic video corpus generation.
//!
//! Every video shows a single bright sprite translating across a frame with
//! toroidal wraparound. The class label is the sprite's motion direction
//! (`num_classes` directions at equal angular increments), so the ground
//! truth is purely kinematic. Appearance confounders — a smoothly textured
//! background, background drift, per-pixel noise — are composited after the
//! sprite and never influence the label.

use crate::codec;
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

/// Background drift speed as a fraction of the sprite speed.
const DRIFT_SPEED_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confounder {
    None,
    TexturedBackground,
    BackgroundDrift,
    PixelNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Mplg,
    Source,
    Target,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub num_videos: usize,
    pub num_classes: usize,
    pub frames_per_video: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub sprite_size: usize,
    pub sprite_speed: f64,
    pub appearance_confounder: Vec<Confounder>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            num_videos: 64,
            num_classes: 8,
            frames_per_video: 24,
            frame_height: 32,
            frame_width: 32,
            sprite_size: 8,
            sprite_speed: 2.0,
            appearance_confounder: vec![
                Confounder::TexturedBackground,
                Confounder::BackgroundDrift,
                Confounder::PixelNoise,
            ],
            noise_sigma: 8.0,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 {
            return Err(Error::validation("num_classes must be >= 1"));
        }
        if self.frames_per_video < 2 {
            return Err(Error::validation("frames_per_video must be >= 2"));
        }
        if self.sprite_size < 1
            || self.sprite_size > self.frame_height.min(self.frame_width)
        {
            return Err(Error::validation(format!(
                "sprite_size {} does not fit inside a {}x{} frame",
                self.sprite_size, self.frame_height, self.frame_width
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::validation("noise_sigma must be >= 0"));
        }
        if !(self.sprite_speed >= 0.0) {
            return Err(Error::validation("sprite_speed must be >= 0"));
        }
        Ok(())
    }

    pub fn has(&self, c: Confounder) -> bool {
        self.appearance_confounder.contains(&c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_label: Option<usize>,
    pub path: String,
    pub frame_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub role: Role,
    pub records: Vec<VideoRecord>,
    pub generator_config: CorpusConfig,
    pub format_version: u32,
}

impl CorpusManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let m: CorpusManifest = serde_json::from_slice(&bytes)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported format_version {}", m.format_version),
            ));
        }
        Ok(m)
    }

    /// Resolves a record's tensor path relative to the manifest location.
    pub fn tensor_path(&self, manifest_path: &Path, record: &VideoRecord) -> PathBuf {
        let p = Path::new(&record.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            manifest_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(p)
        }
    }

    pub fn is_labeled(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.class_label.is_some())
    }
}

/// Raw frame array for one video, dims T x H x W x C with C = 3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoTensor {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<u8>,
}

impl VideoTensor {
    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> u8 {
        self.data[((t * self.h + y) * self.w + x) * self.c + c]
    }

    /// Grayscale frame in [0, 255] by fixed luma weights.
    pub fn gray_frame(&self, t: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.h * self.w);
        let base = t * self.h * self.w * self.c;
        for i in 0..self.h * self.w {
            let r = self.data[base + i * self.c] as f32;
            let g = self.data[base + i * self.c + 1] as f32;
            let b = self.data[base + i * self.c + 2] as f32;
            out.push(0.299 * r + 0.587 * g + 0.114 * b);
        }
        out
    }
}

/// One sinusoidal component of a background texture. Integer cycle counts
/// keep the texture toroidally periodic, so drift never shows a seam.
#[derive(Debug, Clone, Copy)]
pub struct Wave {
    pub kx: i32,
    pub ky: i32,
    pub amp: f64,
    pub phase: f64,
}

#[derive(Debug, Clone)]
pub enum Background {
    Solid(f64),
    Textured { base: f64, waves: Vec<Wave> },
}

/// Per-video render parameters, drawn from `CorpusConfig` by
/// `generate_corpus` or constructed directly in tests.
#[derive(Debug, Clone)]
pub struct VideoSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub sprite_size: usize,
    pub sprite_color: [u8; 3],
    /// Initial sprite center (x, y).
    pub start: (f64, f64),
    /// Sprite velocity in px/frame (x, y).
    pub velocity: (f64, f64),
    pub background: Background,
    /// Background drift velocity in px/frame (x, y).
    pub drift: (f64, f64),
    pub noise_sigma: f64,
    /// `None` disables pixel noise.
    pub noise_seed: Option<u64>,
}

fn background_value(bg: &Background, x: f64, y: f64, w: usize, h: usize) -> f64 {
    match bg {
        Background::Solid(v) => *v,
        Background::Textured { base, waves } => {
            let mut v = *base;
            for wv in waves {
                let arg = TAU * (wv.kx as f64 * x / w as f64 + wv.ky as f64 * y / h as f64)
                    + wv.phase;
                v += wv.amp * arg.sin();
            }
            v
        }
    }
}

/// Renders one video. The sprite center at frame `t` is
/// `start + t * velocity` with toroidal wraparound; confounders are applied
/// after sprite compositing.
pub fn render_video(spec: &VideoSpec) -> VideoTensor {
    let (w, h) = (spec.width, spec.height);
    let mut frames = vec![0f64; spec.frames * h * w];

    for t in 0..spec.frames {
        let tf = t as f64;
        let base = t * h * w;
        for y in 0..h {
            for x in 0..w {
                // drifting background: sample the static texture at the
                // un-drifted coordinate
                let v = background_value(
                    &spec.background,
                    x as f64 - tf * spec.drift.0,
                    y as f64 - tf * spec.drift.1,
                    w,
                    h,
                );
                frames[base + y * w + x] = v;
            }
        }
    }

    // gray buffer -> RGB with sprite + noise
    let mut data = vec![0u8; spec.frames * h * w * 3];
    let mut noise = spec.noise_seed.map(ChaCha8Rng::seed_from_u64);
    for t in 0..spec.frames {
        let tf = t as f64;
        let cx = (spec.start.0 + tf * spec.velocity.0).rem_euclid(w as f64);
        let cy = (spec.start.1 + tf * spec.velocity.1).rem_euclid(h as f64);
        let cxi = (cx.round() as i64).rem_euclid(w as i64);
        let cyi = (cy.round() as i64).rem_euclid(h as i64);
        let half = (spec.sprite_size / 2) as i64;

        let mut sprite_mask = vec![false; h * w];
        for dy in 0..spec.sprite_size as i64 {
            for dx in 0..spec.sprite_size as i64 {
                let yy = (cyi + dy - half).rem_euclid(h as i64) as usize;
                let xx = (cxi + dx - half).rem_euclid(w as i64) as usize;
                sprite_mask[yy * w + xx] = true;
            }
        }

        for y in 0..h {
            for x in 0..w {
                let idx = (t * h + y) * w + x;
                let out = ((t * h + y) * w + x) * 3;
                for c in 0..3 {
                    let v = if sprite_mask[y * w + x] {
                        spec.sprite_color[c] as f64
                    } else {
                        frames[idx]
                    };
                    let v = match &mut noise {
                        Some(rng) if spec.noise_sigma > 0.0 => {
                            v + spec.noise_sigma * sample_standard_normal(rng)
                        }
                        _ => v,
                    };
                    data[out + c] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }

    VideoTensor {
        t: spec.frames,
        h,
        w,
        c: 3,
        data,
    }
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// The deterministic per-video parameter draw. Draw order is fixed and
/// independent of the confounder set, so the same seed yields the same
/// sprite trajectory whether or not confounders are enabled.
pub fn video_spec_for_index(config: &CorpusConfig, index: usize) -> (VideoSpec, usize) {
    let mut rng = rng::video_stream(config.seed, index as u64);
    let label = index % config.num_classes;
    let angle = TAU * label as f64 / config.num_classes as f64;
    let velocity = (
        config.sprite_speed * angle.cos(),
        config.sprite_speed * angle.sin(),
    );

    let start = (
        rng.random::<f64>() * config.frame_width as f64,
        rng.random::<f64>() * config.frame_height as f64,
    );
    let sprite_color = [
        rng.random_range(192..=255u16) as u8,
        rng.random_range(192..=255u16) as u8,
        rng.random_range(192..=255u16) as u8,
    ];
    let solid_level = rng.random_range(16.0..96.0);
    let waves: Vec<Wave> = (0..4)
        .map(|_| Wave {
            kx: rng.random_range(-4..=4),
            ky: rng.random_range(-4..=4),
            amp: rng.random_range(8.0..18.0),
            phase: rng.random_range(0.0..TAU),
        })
        .collect();
    let drift_angle = rng.random_range(0.0..TAU);
    let noise_seed = rng.random::<u64>();

    let background = if config.has(Confounder::TexturedBackground) {
        Background::Textured { base: 88.0, waves }
    } else {
        Background::Solid(solid_level)
    };
    let drift = if config.has(Confounder::BackgroundDrift) {
        let speed = DRIFT_SPEED_FACTOR * config.sprite_speed;
        (speed * drift_angle.cos(), speed * drift_angle.sin())
    } else {
        (0.0, 0.0)
    };
    let noise = if config.has(Confounder::PixelNoise) && config.noise_sigma > 0.0 {
        Some(noise_seed)
    } else {
        None
    };

    (
        VideoSpec {
            frames: config.frames_per_video,
            height: config.frame_height,
            width: config.frame_width,
            sprite_size: config.sprite_size,
            sprite_color,
            start,
            velocity,
            background,
            drift,
            noise_sigma: config.noise_sigma,
            noise_seed: noise,
        },
        label,
    )
}

pub fn video_id_for_index(index: usize) -> String {
    format!("v{index:05}")
}

/// Generates the corpus into `out_dir`: one `MFT1` tensor file per video and
/// a `manifest.json`. Class labels are stratified (counts differ by at most
/// one) and stored only for labeled roles; `source` manifests are unlabeled.
pub fn generate_corpus(config: &CorpusConfig, role: Role, out_dir: &Path) -> Result<CorpusManifest> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let records: Vec<VideoRecord> = (0..config.num_videos)
        .into_par_iter()
        .map(|i| -> Result<VideoRecord> {
            let (spec, label) = video_spec_for_index(config, i);
            let video_id = video_id_for_index(i);
            let file_name = format!("{video_id}.mft");
            let tensor = render_video(&spec);
            codec::write_video_tensor(&out_dir.join(&file_name), &tensor)?;
            Ok(VideoRecord {
                video_id,
                class_label: if role == Role::Source { None } else { Some(label) },
                path: file_name,
                frame_count: spec.frames,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = records;
    records.sort_by(|a, b| a.video_id.cmp(&b.video_id));

    let manifest = CorpusManifest {
        role,
        records,
        generator_config: config.clone(),
        format_version: MANIFEST_FORMAT_VERSION,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Largest-remainder apportionment of `n` into parts proportional to
/// `fractions`; ties go to the earlier part.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rem: Vec<(usize, f64)> = exact
        .iter()
        .enumerate()
        .map(|(i, e)| (i, e - e.floor()))
        .collect();
    rem.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut left = n - sizes.iter().sum::<usize>();
    for (i, _) in rem {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

/// Splits a manifest into (train, val, test) partitions, stratified by class
/// when labels are present, deterministic in `seed`.
pub fn split_corpus(
    manifest: &CorpusManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<[CorpusManifest; 3]> {
    let sum = fractions.0 + fractions.1 + fractions.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    let fr = [fractions.0, fractions.1, fractions.2];

    // group by class when fully labeled, else a single group
    let mut groups: Vec<(u64, Vec<&VideoRecord>)> = Vec::new();
    if manifest.is_labeled() {
        let mut by_class = std::collections::BTreeMap::<usize, Vec<&VideoRecord>>::new();
        for r in &manifest.records {
            by_class.entry(r.class_label.unwrap()).or_default().push(r);
        }
        for (k, v) in by_class {
            groups.push((k as u64, v));
        }
    } else {
        groups.push((0, manifest.records.iter().collect()));
    }

    let mut parts: [Vec<VideoRecord>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (key, mut group) in groups {
        let mut rng = rng::substream(seed, "split", key);
        shuffle(&mut group, &mut rng);
        let sizes = apportion(group.len(), &fr);
        let mut offset = 0;
        for (p, &sz) in sizes.iter().enumerate() {
            for r in &group[offset..offset + sz] {
                parts[p].push((*r).clone());
            }
            offset += sz;
        }
    }

    Ok(parts.map(|mut records| {
        records.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        CorpusManifest {
            role: manifest.role,
            records,
            generator_config: manifest.generator_config.clone(),
            format_version: MANIFEST_FORMAT_VERSION,
        }
    }))
}

/// Fisher-Yates with draws taken in a fixed order.
pub fn shuffle<T>(items: &mut [T], rng: &mut rand_chacha::ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

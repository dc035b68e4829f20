//! Guide-line color segmentation: a small linear per-pixel classifier over
//! HSV (trained with Pegasos-style stochastic sub-gradient descent on the
//! hinge loss), refined by region growing, with a fixed HSV-range threshold
//! as the non-learned fallback.

use crate::cc;
use crate::error::{Error, Result};
use crate::raster::{BitMask, Raster};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Linear max-margin pixel classifier. The decision value is
/// `w · (h/255, s/255, v/255, 1)`; a pixel is line-colored when it is
/// strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    /// `[w_h, w_s, w_v, bias]` over features scaled to `[0, 1]`.
    pub weights: [f64; 4],
    #[serde(rename = "epochs")]
    pub trained_epochs: u32,
}

impl ClassifierModel {
    #[inline]
    pub fn decision(&self, h: u8, s: u8, v: u8) -> f64 {
        let w = &self.weights;
        w[0] * (h as f64 / 255.0) + w[1] * (s as f64 / 255.0) + w[2] * (v as f64 / 255.0) + w[3]
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// One labelled HSV sample; `label` is +1 (line) or −1 (background).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainSample {
    pub hsv: [u8; 3],
    pub label: i8,
}

/// Reads JSON-lines training samples (`{"hsv":[h,s,v],"label":1}` per line).
pub fn read_samples_jsonl(reader: impl BufRead) -> Result<Vec<TrainSample>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TrainSample = serde_json::from_str(&line)?;
        if s.label != 1 && s.label != -1 {
            return Err(Error::invalid(format!("sample label must be ±1, got {}", s.label)));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_samples_jsonl(samples: &[TrainSample], mut w: impl Write) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        writeln!(w)?;
    }
    Ok(())
}

fn features(hsv: [u8; 3]) -> [f64; 4] {
    [hsv[0] as f64 / 255.0, hsv[1] as f64 / 255.0, hsv[2] as f64 / 255.0, 1.0]
}

/// Regularized hinge objective `λ/2·‖w‖² + mean(max(0, 1 − y·w·x))` over a
/// sample set; exposed so training runs can be audited.
pub fn hinge_objective(weights: &[f64; 4], samples: &[TrainSample], reg: f64) -> f64 {
    let norm2: f64 = weights.iter().map(|w| w * w).sum();
    let mut loss = 0.0;
    for s in samples {
        let x = features(s.hsv);
        let margin = s.label as f64 * weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        loss += (1.0 - margin).max(0.0);
    }
    reg / 2.0 * norm2 + loss / samples.len() as f64
}

/// Trains the pixel classifier with Pegasos-style stochastic sub-gradient
/// descent: per step `t`, learning rate `1/(λt)`, shrink `w` by `(1 − ηλ)`
/// and add `η·y·x` for margin violators. Samples are reshuffled every epoch
/// from the seeded generator, so training is deterministic.
pub fn train_pixel_classifier(
    positives: &[[u8; 3]],
    negatives: &[[u8; 3]],
    epochs: u32,
    reg: f64,
    rng_seed: u64,
) -> Result<ClassifierModel> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::invalid("training needs at least one sample of each class"));
    }
    if !(reg > 0.0) || !reg.is_finite() {
        return Err(Error::invalid("regularization must be positive and finite"));
    }
    let mut samples: Vec<TrainSample> = positives
        .iter()
        .map(|&hsv| TrainSample { hsv, label: 1 })
        .chain(negatives.iter().map(|&hsv| TrainSample { hsv, label: -1 }))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut w = [0.0f64; 4];
    let mut t = 0u64;
    for _ in 0..epochs {
        samples.shuffle(&mut rng);
        for s in &samples {
            t += 1;
            let eta = 1.0 / (reg * t as f64);
            let x = features(s.hsv);
            let margin = s.label as f64 * w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
            let shrink = 1.0 - eta * reg;
            for wi in &mut w {
                *wi *= shrink;
            }
            if margin < 1.0 {
                for (wi, xi) in w.iter_mut().zip(x) {
                    *wi += eta * s.label as f64 * xi;
                }
            }
        }
    }
    Ok(ClassifierModel { weights: w, trained_epochs: epochs })
}

/// Applies the classifier to every pixel of an HSV raster.
pub fn classify_pixels(img: &Raster, model: &ClassifierModel) -> Result<BitMask> {
    if img.channels() != 3 {
        return Err(Error::invalid("classify_pixels requires a 3-channel HSV raster"));
    }
    let mut mask = BitMask::new(img.width(), img.height());
    let data = img.data();
    let w = &model.weights;
    // Same decision as `ClassifierModel::decision`, with the /255 folded in.
    let (wh, ws, wv, b) = (w[0] / 255.0, w[1] / 255.0, w[2] / 255.0, w[3]);
    let width = img.width() as usize;
    for y in 0..img.height() {
        let row = &data[y as usize * width * 3..][..width * 3];
        for (x, px) in row.chunks_exact(3).enumerate() {
            let d = wh * px[0] as f64 + ws * px[1] as f64 + wv * px[2] as f64 + b;
            if d > 0.0 {
                mask.set(x as u32, y, true);
            }
        }
    }
    Ok(mask)
}

/// Reference value for `min_seed_area`: 64 px at 1920×1080, scaled by image
/// area for other resolutions.
pub fn scaled_min_seed_area(width: u32, height: u32) -> u32 {
    let scale = (width as f64 * height as f64) / (1920.0 * 1080.0);
    ((64.0 * scale).round() as u32).max(1)
}

/// Keeps 8-connected components with at least `min_seed_area` pixels and
/// closes single-pixel holes inside what remains.
pub fn region_grow(mask: &BitMask, min_seed_area: u32) -> BitMask {
    let labeled = cc::label(mask);
    let keep: Vec<bool> =
        labeled.areas.iter().map(|&a| a >= min_seed_area as u64).collect();
    let mut out = cc::mask_from_runs(mask.width(), mask.height(), &labeled.runs, |r| {
        keep[r.comp as usize]
    });
    // A cleared pixel whose four edge neighbours are all set is a
    // single-pixel hole.
    let snapshot = out.clone();
    for y in 1..mask.height().saturating_sub(1) {
        for x in 1..mask.width().saturating_sub(1) {
            if !snapshot.get(x, y)
                && snapshot.get(x - 1, y)
                && snapshot.get(x + 1, y)
                && snapshot.get(x, y - 1)
                && snapshot.get(x, y + 1)
            {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Inclusive HSV box threshold. Hue may wrap: `h_min > h_max` selects
/// `[h_min, 255] ∪ [0, h_max]`. Saturation and value do not wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HsvRange {
    pub h_min: u8,
    pub h_max: u8,
    pub s_min: u8,
    pub s_max: u8,
    pub v_min: u8,
    pub v_max: u8,
}

impl HsvRange {
    pub fn validate(&self) -> Result<()> {
        if self.s_min > self.s_max {
            return Err(Error::invalid("empty saturation interval (S does not wrap)"));
        }
        if self.v_min > self.v_max {
            return Err(Error::invalid("empty value interval (V does not wrap)"));
        }
        Ok(())
    }

    #[inline]
    pub fn contains(&self, h: u8, s: u8, v: u8) -> bool {
        let h_ok = if self.h_min <= self.h_max {
            h >= self.h_min && h <= self.h_max
        } else {
            h >= self.h_min || h <= self.h_max
        };
        h_ok && s >= self.s_min && s <= self.s_max && v >= self.v_min && v <= self.v_max
    }
}

/// Thresholds an HSV raster against a fixed range.
pub fn hsv_range_threshold(img: &Raster, range: &HsvRange) -> Result<BitMask> {
    if img.channels() != 3 {
        return Err(Error::invalid("hsv_range_threshold requires a 3-channel HSV raster"));
    }
    range.validate()?;
    let mut mask = BitMask::new(img.width(), img.height());
    let width = img.width() as usize;
    for y in 0..img.height() {
        let row = &img.data()[y as usize * width * 3..][..width * 3];
        for (x, px) in row.chunks_exact(3).enumerate() {
            if range.contains(px[0], px[1], px[2]) {
                mask.set(x as u32, y, true);
            }
        }
    }
    Ok(mask)
}

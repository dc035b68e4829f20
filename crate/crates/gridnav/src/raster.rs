//! Pixel-buffer primitives shared by both line detectors: 8-bit rasters,
//! packed binary masks, HSV conversion and the blur/brightness perturbations
//! used for robustness testing.
//!
//! Hue is encoded over the full 8-bit range: `[0, 255]` maps to `[0°, 360°)`.
//! This keeps neighbouring yellow/orange hues apart instead of aliasing them
//! into the half-scale 0–179 convention.

use crate::error::{Error, Result};

/// Row-major 8-bit image with 1 (gray/mask source) or 3 (RGB or HSV)
/// channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Raster {
    pub fn new(width: u32, height: u32, channels: u8) -> Self {
        assert!(width >= 1 && height >= 1, "raster dimensions must be >= 1");
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Raster {
            width,
            height,
            channels,
            data: vec![0; width as usize * height as usize * channels as usize],
        }
    }

    pub fn from_data(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::invalid("raster dimensions must be >= 1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("channels must be 1 or 3"));
        }
        let expect = width as usize * height as usize * channels as usize;
        if data.len() != expect {
            return Err(Error::invalid(format!(
                "raster data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Raster { width, height, channels, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    #[inline]
    fn idx(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Pixel accessor; returns a slice of `channels` bytes.
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let i = self.idx(x, y);
        &self.data[i..i + self.channels as usize]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, px: &[u8]) {
        let c = self.channels as usize;
        debug_assert_eq!(px.len(), c);
        let i = self.idx(x, y);
        self.data[i..i + c].copy_from_slice(px);
    }
}

/// Converts one RGB triple to HSV bytes (H over `[0,255]` ≙ `[0°,360°)`).
pub fn rgb_to_hsv_px(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = (max - min) as f32;
    let v = max;
    if max == 0 || delta == 0.0 {
        return (0, 0, v);
    }
    let s = (255.0 * delta / max as f32).round() as u8;
    let (rf, gf, bf) = (r as f32, g as f32, b as f32);
    let h_deg = if max == r {
        60.0 * ((gf - bf) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    let h = (h_deg * 255.0 / 360.0).round().min(255.0) as u8;
    (h, s, v)
}

/// Inverse of [`rgb_to_hsv_px`], used by the renderer and as the round-trip
/// reference.
pub fn hsv_to_rgb_px(h: u8, s: u8, v: u8) -> (u8, u8, u8) {
    if s == 0 {
        return (v, v, v);
    }
    let h_deg = h as f32 * 360.0 / 255.0;
    let c = v as f32 * s as f32 / 255.0;
    let sector = h_deg / 60.0;
    let x = c * (1.0 - (sector.rem_euclid(2.0) - 1.0).abs());
    let m = v as f32 - c;
    let (r1, g1, b1) = match sector as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    (
        (r1 + m).round().clamp(0.0, 255.0) as u8,
        (g1 + m).round().clamp(0.0, 255.0) as u8,
        (b1 + m).round().clamp(0.0, 255.0) as u8,
    )
}

/// Per-pixel RGB → HSV conversion of a 3-channel raster.
pub fn rgb_to_hsv(img: &Raster) -> Result<Raster> {
    if img.channels() != 3 {
        return Err(Error::invalid("rgb_to_hsv requires a 3-channel raster"));
    }
    let mut out = img.clone();
    for px in out.data.chunks_exact_mut(3) {
        let (h, s, v) = rgb_to_hsv_px(px[0], px[1], px[2]);
        px[0] = h;
        px[1] = s;
        px[2] = v;
    }
    Ok(out)
}

/// Per-pixel HSV → RGB conversion of a 3-channel raster.
pub fn hsv_to_rgb(img: &Raster) -> Result<Raster> {
    if img.channels() != 3 {
        return Err(Error::invalid("hsv_to_rgb requires a 3-channel raster"));
    }
    let mut out = img.clone();
    for px in out.data.chunks_exact_mut(3) {
        let (r, g, b) = hsv_to_rgb_px(px[0], px[1], px[2]);
        px[0] = r;
        px[1] = g;
        px[2] = b;
    }
    Ok(out)
}

/// Gaussian blur (separable, kernel truncated at 3σ, clamped borders)
/// followed by a multiplicative brightness gain, clamped to `[0, 255]`.
///
/// With `blur_sigma = 0` and `brightness_gain = 1` this is a bit-exact
/// identity. `rng_seed` is reserved for noise-type perturbations layered on
/// top by the simulator; blur and gain themselves are deterministic.
pub fn perturb(img: &Raster, blur_sigma: f64, brightness_gain: f64, _rng_seed: u64) -> Raster {
    let sigma = blur_sigma.max(0.0);
    let gain = if brightness_gain > 0.0 { brightness_gain } else { 1.0 };
    let mut out = if sigma > 0.0 { gaussian_blur(img, sigma) } else { img.clone() };
    if gain != 1.0 {
        for v in out.data.iter_mut() {
            *v = (*v as f64 * gain).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i32;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i as f64 * i as f64) / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let sum: f32 = k.iter().sum();
    for w in &mut k {
        *w /= sum;
    }
    k
}

fn gaussian_blur(img: &Raster, sigma: f64) -> Raster {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let (w, h, c) = (img.width as usize, img.height as usize, img.channels as usize);
    let stride = w * c;

    // Horizontal pass: accumulate shifted copies of an edge-padded row, so
    // the inner loops are straight slice arithmetic.
    let mut tmp = vec![0f32; img.data.len()];
    let mut padded = vec![0f32; (w + 2 * radius) * c];
    for y in 0..h {
        let row = &img.data[y * stride..][..stride];
        for ch in 0..c {
            let left = row[ch] as f32;
            let right = row[stride - c + ch] as f32;
            for i in 0..radius {
                padded[i * c + ch] = left;
                padded[(w + radius + i) * c + ch] = right;
            }
        }
        for (i, &v) in row.iter().enumerate() {
            padded[radius * c + i] = v as f32;
        }
        let dst = &mut tmp[y * stride..][..stride];
        for (k, &kw) in kernel.iter().enumerate() {
            let src = &padded[k * c..][..stride];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kw * s;
            }
        }
    }

    // Vertical pass: same trick across rows (rows clamp at the borders).
    let mut out = img.clone();
    let mut acc = vec![0f32; stride];
    for y in 0..h {
        acc.fill(0.0);
        for (k, &kw) in kernel.iter().enumerate() {
            let sy = (y + k).saturating_sub(radius).min(h - 1);
            let src = &tmp[sy * stride..][..stride];
            for (a, s) in acc.iter_mut().zip(src) {
                *a += kw * s;
            }
        }
        for (o, &a) in out.data[y * stride..][..stride].iter_mut().zip(&acc) {
            *o = a.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Rectangular region in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Rect { x, y, w, h }
    }
}

/// Row-major binary mask, bit-packed 64 pixels per word with padded rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: u32,
    height: u32,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMask {
    pub fn new(width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be >= 1");
        let words_per_row = (width as usize + 63) / 64;
        BitMask {
            width,
            height,
            words_per_row,
            words: vec![0; words_per_row * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        let w = self.words[y as usize * self.words_per_row + (x as usize >> 6)];
        (w >> (x as usize & 63)) & 1 == 1
    }

    /// As [`get`](Self::get) but treats out-of-bounds coordinates as unset.
    #[inline]
    pub fn get_clipped(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.get(x as u32, y as u32)
        }
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        let w = &mut self.words[y as usize * self.words_per_row + (x as usize >> 6)];
        let bit = 1u64 << (x as usize & 63);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = BitMask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    /// Total number of set pixels.
    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Fraction of set pixels in the whole mask.
    pub fn coverage(&self) -> f64 {
        self.count() as f64 / (self.width as f64 * self.height as f64)
    }

    /// Collects the coordinates of all set pixels in row-major order.
    pub fn set_pixels(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::with_capacity(self.count() as usize);
        for y in 0..self.height {
            let row = &self.words[y as usize * self.words_per_row..][..self.words_per_row];
            for (wi, &word) in row.iter().enumerate() {
                let mut bits = word;
                while bits != 0 {
                    let b = bits.trailing_zeros();
                    out.push(((wi as u32) * 64 + b, y));
                    bits &= bits - 1;
                }
            }
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }
}

/// Number of set bits inside `region`. The region must lie within the mask.
pub fn mask_pixel_count(mask: &BitMask, region: Rect) -> Result<u64> {
    let x1 = region.x as u64 + region.w as u64;
    let y1 = region.y as u64 + region.h as u64;
    if x1 > mask.width as u64 || y1 > mask.height as u64 {
        return Err(Error::invalid(format!(
            "region {}x{}+{}+{} exceeds mask bounds {}x{}",
            region.w, region.h, region.x, region.y, mask.width, mask.height
        )));
    }
    let mut total = 0u64;
    for y in region.y..region.y + region.h {
        let row = &mask.words[y as usize * mask.words_per_row..][..mask.words_per_row];
        let (x0, x1) = (region.x as usize, (region.x + region.w) as usize);
        let (w0, w1) = (x0 >> 6, (x1 - 1) >> 6);
        if region.w == 0 {
            continue;
        }
        for wi in w0..=w1 {
            let mut word = row[wi];
            if wi == w0 {
                word &= !0u64 << (x0 & 63);
            }
            if wi == w1 {
                let end = x1 - wi * 64;
                if end < 64 {
                    word &= (1u64 << end) - 1;
                }
            }
            total += word.count_ones() as u64;
        }
    }
    Ok(total)
}

pub mod pnm {
    //! Binary PGM (P5) and PPM (P6) with maxval 255; round-trips bit-exact.

    use super::Raster;
    use crate::error::{Error, Result};
    use std::io::{Read, Write};
    use std::path::Path;

    pub fn write(img: &Raster, mut w: impl Write) -> Result<()> {
        let magic = match img.channels() {
            1 => "P5",
            3 => "P6",
            _ => return Err(Error::invalid("pnm supports 1 or 3 channels")),
        };
        write!(w, "{}\n{} {}\n255\n", magic, img.width(), img.height())?;
        w.write_all(img.data())?;
        Ok(())
    }

    pub fn write_file(img: &Raster, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        write(img, std::io::BufWriter::new(f))
    }

    pub fn to_bytes(img: &Raster) -> Vec<u8> {
        let mut buf = Vec::with_capacity(img.data().len() + 32);
        write(img, &mut buf).expect("writing to Vec cannot fail");
        buf
    }

    pub fn read(mut r: impl Read) -> Result<Raster> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        from_bytes(&bytes)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Raster> {
        let bytes = std::fs::read(path)?;
        from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Raster> {
        let mut pos = 0usize;
        let magic = take_token(bytes, &mut pos)?;
        let channels = match magic.as_str() {
            "P5" => 1u8,
            "P6" => 3u8,
            _ => return Err(Error::invalid(format!("unsupported pnm magic {magic:?}"))),
        };
        let width: u32 = take_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| Error::invalid("bad pnm width"))?;
        let height: u32 = take_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| Error::invalid("bad pnm height"))?;
        let maxval: u32 = take_token(bytes, &mut pos)?
            .parse()
            .map_err(|_| Error::invalid("bad pnm maxval"))?;
        if maxval != 255 {
            return Err(Error::invalid(format!("pnm maxval must be 255, got {maxval}")));
        }
        // Exactly one whitespace byte separates the header from the data.
        pos += 1;
        let n = width as usize * height as usize * channels as usize;
        if bytes.len() < pos + n {
            return Err(Error::invalid("pnm data truncated"));
        }
        Raster::from_data(width, height, channels, bytes[pos..pos + n].to_vec())
    }

    fn take_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
        // Skip whitespace and `#` comments.
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::invalid("unexpected end of pnm header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    }
}

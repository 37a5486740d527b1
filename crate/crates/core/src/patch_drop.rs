//! Random patch drop: the image is cut into a grid of square patches and a
//! seeded random subset of them is painted over with a fill colour.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_PATCH_SIZE: u32 = 16;

#[derive(Debug, Error, PartialEq)]
pub enum PatchDropError {
    #[error("unsupported channel count {0} (expected 1 to 4)")]
    Channels(u8),
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
    #[error("patch size must be positive")]
    ZeroPatch,
    #[error("{width}x{height} image is not divisible into {patch}-pixel patches")]
    NotDivisible { width: u32, height: u32, patch: u32 },
    #[error("loss fraction {0} is outside [0, 1]")]
    LossFraction(f64),
    #[error("fill value has {len} channels, image has {channels}")]
    FillChannels { len: usize, channels: u8 },
}

/// Row-major interleaved 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(
        width: u32,
        height: u32,
        channels: u8,
        data: Vec<u8>,
    ) -> Result<Self, PatchDropError> {
        if !(1..=4).contains(&channels) {
            return Err(PatchDropError::Channels(channels));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(PatchDropError::BufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(RasterImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(
        width: u32,
        height: u32,
        channels: u8,
        value: u8,
    ) -> Result<Self, PatchDropError> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
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

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let start = (y as usize * self.width as usize + x as usize) * c;
        &self.data[start..start + c]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatchDropSpec {
    pub patch_size: u32,
    pub loss_fraction: f64,
    pub seed: u64,
    /// One value for every channel, or one per channel.
    pub fill_value: Vec<u8>,
}

impl PatchDropSpec {
    pub fn new(loss_fraction: f64, seed: u64) -> Self {
        PatchDropSpec {
            patch_size: DEFAULT_PATCH_SIZE,
            loss_fraction,
            seed,
            fill_value: vec![0],
        }
    }

    fn check(&self) -> Result<(), PatchDropError> {
        if self.patch_size == 0 {
            return Err(PatchDropError::ZeroPatch);
        }
        if !(0.0..=1.0).contains(&self.loss_fraction) {
            return Err(PatchDropError::LossFraction(self.loss_fraction));
        }
        Ok(())
    }
}

/// Patch grid of an image: `cols` × `rows` patches of `size` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub cols: u32,
    pub rows: u32,
    pub size: u32,
}

impl PatchGrid {
    pub fn for_image(image: &RasterImage, patch_size: u32) -> Result<Self, PatchDropError> {
        if patch_size == 0 {
            return Err(PatchDropError::ZeroPatch);
        }
        if !image.width.is_multiple_of(patch_size) || !image.height.is_multiple_of(patch_size) {
            return Err(PatchDropError::NotDivisible {
                width: image.width,
                height: image.height,
                patch: patch_size,
            });
        }
        Ok(PatchGrid {
            cols: image.width / patch_size,
            rows: image.height / patch_size,
            size: patch_size,
        })
    }

    pub fn len(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Patch index (row-major) containing pixel (x, y).
    pub fn index_of(&self, x: u32, y: u32) -> usize {
        (y / self.size) as usize * self.cols as usize + (x / self.size) as usize
    }
}

/// Number of patches dropped for a loss fraction, rounding halves away from zero.
pub fn drop_count(loss_fraction: f64, num_patches: usize) -> usize {
    (loss_fraction * num_patches as f64).round() as usize
}

/// Indices of the patches to drop, ascending. A seeded shuffle of all patch
/// indices is truncated to the drop count, so for a fixed seed a smaller loss
/// fraction drops a subset of the patches a larger one drops.
pub fn dropped_patches(num_patches: usize, loss_fraction: f64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..num_patches).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut chosen = order[..drop_count(loss_fraction, num_patches)].to_vec();
    chosen.sort_unstable();
    chosen
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropResult {
    pub image: RasterImage,
    pub dropped: Vec<usize>,
    pub grid: PatchGrid,
}

pub fn drop_patches(
    image: &RasterImage,
    spec: &PatchDropSpec,
) -> Result<RasterImage, PatchDropError> {
    drop_patches_detailed(image, spec).map(|r| r.image)
}

/// Like [`drop_patches`], also returning the dropped patch indices.
pub fn drop_patches_detailed(
    image: &RasterImage,
    spec: &PatchDropSpec,
) -> Result<DropResult, PatchDropError> {
    spec.check()?;
    let channels = image.channels as usize;
    let fill: Vec<u8> = match spec.fill_value.len() {
        1 => vec![spec.fill_value[0]; channels],
        n if n == channels => spec.fill_value.clone(),
        n => {
            return Err(PatchDropError::FillChannels {
                len: n,
                channels: image.channels,
            })
        }
    };
    let grid = PatchGrid::for_image(image, spec.patch_size)?;
    let dropped = dropped_patches(grid.len(), spec.loss_fraction, spec.seed);

    let mut out = image.clone();
    let size = grid.size as usize;
    let row_bytes = image.width as usize * channels;
    let patch_fill = fill.repeat(size);
    for &p in &dropped {
        let px = (p % grid.cols as usize) * size;
        let py = (p / grid.cols as usize) * size;
        for y in py..py + size {
            let start = y * row_bytes + px * channels;
            out.data[start..start + size * channels].copy_from_slice(&patch_fill);
        }
    }
    Ok(DropResult {
        image: out,
        dropped,
        grid,
    })
}

/// Information-loss levels 0.0, 0.1, …, 0.9.
pub fn default_levels() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

/// One spec per level. Level `i` gets a seed drawn from ChaCha stream `i`
/// of `base_seed`.
pub fn schedule(
    levels: &[f64],
    patch_size: u32,
    fill_value: &[u8],
    base_seed: u64,
) -> Result<Vec<PatchDropSpec>, PatchDropError> {
    levels
        .iter()
        .enumerate()
        .map(|(i, &level)| {
            let spec = PatchDropSpec {
                patch_size,
                loss_fraction: level,
                seed: derive_seed(base_seed, i as u64),
                fill_value: fill_value.to_vec(),
            };
            spec.check().map(|_| spec)
        })
        .collect()
}

pub fn derive_seed(base_seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(stream);
    rng.next_u64()
}

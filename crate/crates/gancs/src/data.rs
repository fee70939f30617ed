//! Synthetic phantom generation, grayscale image ingestion, intensity
//! normalization, train/test splitting by id, and dataset persistence.

use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kspace::ComplexImage;
use crate::mix_seed;
use crate::numerics::Tensor;

/// Target range the per-channel affine normalization maps intensities into.
pub const NORM_LO: f64 = 0.05;
pub const NORM_HI: f64 = 0.95;

/// Smooth random phase attached to imported magnitude images when requested.
pub const IMPORT_PHASE_AMPLITUDE: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub size: usize,
    /// Inclusive range for the number of superimposed shapes.
    pub num_shapes: (usize, usize),
    /// Magnitudes (background and shapes) stay inside this closed interval.
    pub intensity_range: (f64, f64),
    /// Peak absolute value of the smooth polynomial phase, in radians.
    pub phase_amplitude: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 16 || self.size % 4 != 0 {
            return Err(Error::invalid(
                "phantom size must be >= 16 and divisible by 4",
            ));
        }
        if self.num_shapes.0 > self.num_shapes.1 || self.num_shapes.0 == 0 {
            return Err(Error::invalid("invalid shape-count range"));
        }
        if !(self.intensity_range.0 < self.intensity_range.1) {
            return Err(Error::invalid("intensity range must satisfy lo < hi"));
        }
        if self.phase_amplitude < 0.0 {
            return Err(Error::invalid("phase amplitude must be >= 0"));
        }
        Ok(())
    }
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            size: 64,
            num_shapes: (5, 10),
            intensity_range: (0.1, 1.0),
            phase_amplitude: 0.0,
            seed: 0,
        }
    }
}

/// Per-channel affine map `v -> v * scale + offset` used to bring raw
/// intensities into `[NORM_LO, NORM_HI]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub real_scale: f64,
    pub real_offset: f64,
    pub imag_scale: f64,
    pub imag_offset: f64,
}

impl NormConstants {
    pub fn identity() -> Self {
        NormConstants {
            real_scale: 1.0,
            real_offset: 0.0,
            imag_scale: 1.0,
            imag_offset: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [
            self.real_scale,
            self.real_offset,
            self.imag_scale,
            self.imag_offset,
        ]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        NormConstants {
            real_scale: a[0],
            real_offset: a[1],
            imag_scale: a[2],
            imag_offset: a[3],
        }
    }
}

/// Ordered image collection with patient-like grouping ids and the
/// normalization constants computed from its pool at construction time.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Vec<ComplexImage>,
    ids: Vec<String>,
    pub normalization: NormConstants,
    pub normalized: bool,
    pub spec: Option<PhantomSpec>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[ComplexImage] {
        &self.images
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn image(&self, i: usize) -> &ComplexImage {
        &self.images[i]
    }

    /// Height/width shared by every image, or an error if they differ.
    pub fn uniform_shape(&self) -> Result<(usize, usize)> {
        let first = self
            .images
            .first()
            .ok_or_else(|| Error::invalid("dataset is empty"))?;
        let shape = (first.height(), first.width());
        for img in &self.images {
            if (img.height(), img.width()) != shape {
                return Err(Error::invalid("dataset images have differing shapes"));
            }
        }
        Ok(shape)
    }
}

fn channel_bounds(images: &[ComplexImage]) -> ([f64; 2], [f64; 2]) {
    let mut re = [f64::INFINITY, f64::NEG_INFINITY];
    let mut im = [f64::INFINITY, f64::NEG_INFINITY];
    for img in images {
        for v in img.complex() {
            re[0] = re[0].min(v.re);
            re[1] = re[1].max(v.re);
            im[0] = im[0].min(v.im);
            im[1] = im[1].max(v.im);
        }
    }
    (re, im)
}

/// Affine constants mapping the observed min/max of each channel to
/// `[NORM_LO, NORM_HI]`. A degenerate (constant) channel maps to the
/// mid-point 0.5 with unit scale so the map stays invertible.
pub fn compute_norm_constants(images: &[ComplexImage]) -> NormConstants {
    if images.is_empty() {
        return NormConstants::identity();
    }
    let (re, im) = channel_bounds(images);
    let chan = |lo: f64, hi: f64| -> (f64, f64) {
        if hi - lo > 1e-12 {
            let scale = (NORM_HI - NORM_LO) / (hi - lo);
            (scale, NORM_LO - lo * scale)
        } else {
            (1.0, 0.5 - lo)
        }
    };
    let (rs, ro) = chan(re[0], re[1]);
    let (is, io) = chan(im[0], im[1]);
    NormConstants {
        real_scale: rs,
        real_offset: ro,
        imag_scale: is,
        imag_offset: io,
    }
}

fn apply_norm(img: &ComplexImage, c: &NormConstants) -> ComplexImage {
    let data = img
        .complex()
        .iter()
        .map(|v| {
            Complex64::new(
                v.re * c.real_scale + c.real_offset,
                v.im * c.imag_scale + c.imag_offset,
            )
        })
        .collect();
    ComplexImage::from_complex(img.height(), img.width(), data)
        .expect("affine map keeps finiteness")
}

/// Apply the dataset's stored constants to every image.
pub fn normalize(dataset: &Dataset) -> Result<Dataset> {
    if dataset.normalized {
        return Err(Error::invalid("dataset is already normalized"));
    }
    let images = dataset
        .images
        .iter()
        .map(|img| apply_norm(img, &dataset.normalization))
        .collect();
    Ok(Dataset {
        images,
        ids: dataset.ids.clone(),
        normalization: dataset.normalization,
        normalized: true,
        spec: dataset.spec,
    })
}

/// Invert the per-channel affine map on a single image.
pub fn denormalize(image: &ComplexImage, constants: &NormConstants) -> ComplexImage {
    let data = image
        .complex()
        .iter()
        .map(|v| {
            Complex64::new(
                (v.re - constants.real_offset) / constants.real_scale,
                (v.im - constants.imag_offset) / constants.imag_scale,
            )
        })
        .collect();
    ComplexImage::from_complex(image.height(), image.width(), data)
        .expect("affine map keeps finiteness")
}

/// Piecewise-constant phantom: random ellipses and rectangles painted over a
/// background at the low end of the intensity range, with an optional smooth
/// quadratic phase. Deterministic per seed.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<ComplexImage> {
    spec.validate()?;
    let n = spec.size;
    let (lo, hi) = spec.intensity_range;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut mag = vec![lo; n * n];

    let count = rng.random_range(spec.num_shapes.0..=spec.num_shapes.1);
    for _ in 0..count {
        let is_ellipse = rng.random_range(0..2) == 0;
        let cy = rng.random_range(0.15..0.85) * n as f64;
        let cx = rng.random_range(0.15..0.85) * n as f64;
        let ay = rng.random_range(0.05..0.30) * n as f64;
        let ax = rng.random_range(0.05..0.30) * n as f64;
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let value = rng.random_range(lo..hi);
        let (sin, cos) = angle.sin_cos();
        for r in 0..n {
            for c in 0..n {
                let dy = r as f64 - cy;
                let dx = c as f64 - cx;
                let ry = cos * dy - sin * dx;
                let rx = sin * dy + cos * dx;
                let inside = if is_ellipse {
                    (ry / ay).powi(2) + (rx / ax).powi(2) <= 1.0
                } else {
                    ry.abs() <= ay && rx.abs() <= ax
                };
                if inside {
                    mag[r * n + c] = value;
                }
            }
        }
    }

    let data: Vec<Complex64> = if spec.phase_amplitude > 0.0 {
        // low-order polynomial phase on [-1,1]^2, rescaled to the requested peak
        let coeffs: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let phase_raw = |r: usize, c: usize| -> f64 {
            let y = 2.0 * r as f64 / (n - 1) as f64 - 1.0;
            let x = 2.0 * c as f64 / (n - 1) as f64 - 1.0;
            coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * x * x + coeffs[4] * x * y
                + coeffs[5] * y * y
        };
        let mut peak: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                peak = peak.max(phase_raw(r, c).abs());
            }
        }
        let scale = if peak > 0.0 {
            spec.phase_amplitude / peak
        } else {
            0.0
        };
        (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                let phi = phase_raw(r, c) * scale;
                Complex64::new(mag[i] * phi.cos(), mag[i] * phi.sin())
            })
            .collect()
    } else {
        mag.iter().map(|&m| Complex64::new(m, 0.0)).collect()
    };
    ComplexImage::from_complex(n, n, data)
}

/// Generate `count` phantoms grouped into synthetic patient ids of
/// `ids_per_group` consecutive images each; normalization constants are
/// computed from the generated pool.
pub fn gen_dataset(spec: &PhantomSpec, count: usize, ids_per_group: usize) -> Result<Dataset> {
    spec.validate()?;
    if ids_per_group == 0 {
        return Err(Error::invalid("ids_per_group must be >= 1"));
    }
    let mut images = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let sub = PhantomSpec {
            seed: mix_seed(spec.seed, i as u64),
            ..*spec
        };
        images.push(gen_phantom(&sub)?);
        ids.push(format!("p{:04}", i / ids_per_group));
    }
    let normalization = compute_norm_constants(&images);
    Ok(Dataset {
        images,
        ids,
        normalization,
        normalized: false,
        spec: Some(*spec),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMode {
    Zero,
    Random,
}

impl std::str::FromStr for PhaseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PhaseMode::Zero),
            "random" => Ok(PhaseMode::Random),
            other => Err(Error::invalid(format!("unknown phase mode '{other}'"))),
        }
    }
}

fn parse_pgm(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::Format {
        path: path.to_path_buf(),
        message: msg.to_string(),
    };

    // header tokens, with '#' comments running to end of line
    let mut pos = 0usize;
    let token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(fail("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = token(&mut pos)?;
    if magic != "P5" && magic != "P2" {
        return Err(fail("not a portable graymap (expected P2 or P5)"));
    }
    let width: usize = token(&mut pos)?.parse().map_err(|_| fail("bad width"))?;
    let height: usize = token(&mut pos)?.parse().map_err(|_| fail("bad height"))?;
    let maxval: u32 = token(&mut pos)?.parse().map_err(|_| fail("bad maxval"))?;
    if maxval == 0 || maxval > 65535 {
        return Err(fail("unsupported bit depth (maxval must be 1..=65535)"));
    }

    let n = width * height;
    let values: Vec<u32> = if magic == "P5" {
        pos += 1; // single whitespace byte after maxval
        if maxval < 256 {
            if bytes.len() < pos + n {
                return Err(fail("truncated pixel data"));
            }
            bytes[pos..pos + n].iter().map(|&b| b as u32).collect()
        } else {
            if bytes.len() < pos + 2 * n {
                return Err(fail("truncated pixel data"));
            }
            bytes[pos..pos + 2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
                .collect()
        }
    } else {
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            vals.push(
                token(&mut pos)?
                    .parse()
                    .map_err(|_| fail("bad ASCII pixel"))?,
            );
        }
        vals
    };
    if values.iter().any(|&v| v > maxval) {
        return Err(fail("pixel exceeds maxval"));
    }
    Ok((
        height,
        width,
        values.iter().map(|&v| v as f64 / maxval as f64).collect(),
    ))
}

fn smooth_phase_plane(h: usize, w: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let coeffs: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let raw = |r: usize, c: usize| -> f64 {
        let y = 2.0 * r as f64 / (h.max(2) - 1) as f64 - 1.0;
        let x = 2.0 * c as f64 / (w.max(2) - 1) as f64 - 1.0;
        coeffs[0] + coeffs[1] * x + coeffs[2] * y + coeffs[3] * x * x + coeffs[4] * x * y
            + coeffs[5] * y * y
    };
    let mut peak: f64 = 0.0;
    for r in 0..h {
        for c in 0..w {
            peak = peak.max(raw(r, c).abs());
        }
    }
    let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
    (0..h * w).map(|i| raw(i / w, i % w) * scale).collect()
}

/// Read portable graymaps (8- or 16-bit, binary or ASCII) as magnitude
/// images. A directory imports every `.pgm` inside it in sorted order, one
/// id per file. `PhaseMode::Random` attaches a smooth quadratic phase of
/// amplitude [`IMPORT_PHASE_AMPLITUDE`], deterministic per seed.
pub fn import_grayscale(path: &Path, phase_mode: PhaseMode, seed: u64) -> Result<Dataset> {
    let mut files: Vec<PathBuf> = if path.is_dir() {
        std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
            .collect()
    } else {
        vec![path.to_path_buf()]
    };
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!(
            "no .pgm files under {}",
            path.display()
        )));
    }

    let mut images = Vec::new();
    let mut ids = Vec::new();
    for (i, file) in files.iter().enumerate() {
        let (h, w, mag) = parse_pgm(file)?;
        let img = match phase_mode {
            PhaseMode::Zero => ComplexImage::from_planes(h, w, &mag, &vec![0.0; mag.len()])?,
            PhaseMode::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64));
                let phase = smooth_phase_plane(h, w, IMPORT_PHASE_AMPLITUDE, &mut rng);
                let data = mag
                    .iter()
                    .zip(&phase)
                    .map(|(&m, &p)| Complex64::new(m * p.cos(), m * p.sin()))
                    .collect();
                ComplexImage::from_complex(h, w, data)?
            }
        };
        images.push(img);
        ids.push(
            file.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("img{i:04}")),
        );
    }
    let normalization = compute_norm_constants(&images);
    Ok(Dataset {
        images,
        ids,
        normalization,
        normalized: false,
        spec: None,
    })
}

/// Deterministically shuffle the distinct ids and put the first
/// `round(train_fraction * n_ids)` of them (with all their images) into the
/// training partition. An id never straddles the split.
pub fn split_by_id(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::invalid("train_fraction must lie in [0, 1]"));
    }
    let mut unique: Vec<&String> = Vec::new();
    for id in &dataset.ids {
        if !unique.contains(&id) {
            unique.push(id);
        }
    }
    let mut order: Vec<usize> = (0..unique.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (train_fraction * unique.len() as f64).round() as usize;
    let train_ids: std::collections::HashSet<&String> =
        order[..n_train].iter().map(|&i| unique[i]).collect();

    let mk = |want_train: bool| -> Dataset {
        let mut images = Vec::new();
        let mut ids = Vec::new();
        for (img, id) in dataset.images.iter().zip(&dataset.ids) {
            if train_ids.contains(id) == want_train {
                images.push(img.clone());
                ids.push(id.clone());
            }
        }
        Dataset {
            images,
            ids,
            normalization: dataset.normalization,
            normalized: dataset.normalized,
            spec: dataset.spec,
        }
    };
    Ok((mk(true), mk(false)))
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    ids: Vec<String>,
    files: Vec<String>,
    normalized: bool,
    normalization: NormConstants,
    spec: Option<PhantomSpec>,
}

/// Pack an image as a `[2, H, W]` tensor (real plane, then imaginary plane).
pub fn image_to_tensor(img: &ComplexImage) -> Tensor<f64> {
    let mut data = Vec::with_capacity(2 * img.height() * img.width());
    data.extend(img.complex().iter().map(|v| v.re));
    data.extend(img.complex().iter().map(|v| v.im));
    Tensor::from_vec(&[2, img.height(), img.width()], data).unwrap()
}

pub fn tensor_to_image(t: &Tensor<f64>) -> Result<ComplexImage> {
    let [c, h, w] = match t.shape() {
        &[c, h, w] => [c, h, w],
        s => {
            return Err(Error::invalid(format!(
                "expected [2,H,W] tensor, got {s:?}"
            )))
        }
    };
    if c != 2 {
        return Err(Error::invalid("image tensor must have 2 channels"));
    }
    ComplexImage::from_planes(h, w, &t.data()[..h * w], &t.data()[h * w..])
}

/// Write the dataset as a directory of per-image tensor files plus a JSON
/// manifest; reloads bit-identically.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;
    let mut files = Vec::with_capacity(dataset.len());
    for (i, img) in dataset.images.iter().enumerate() {
        let rel = format!("images/img_{i:05}.gcst");
        image_to_tensor(img).save(&dir.join(&rel))?;
        files.push(rel);
    }
    let manifest = Manifest {
        format_version: 1,
        ids: dataset.ids.clone(),
        files,
        normalized: dataset.normalized,
        normalization: dataset.normalization,
        spec: dataset.spec,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let tmp = dir.join("manifest.json.tmp");
    {
        let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(json.as_bytes())
            .map_err(|e| Error::io(&tmp, e))?;
    }
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join("manifest.json");
    let json = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&json).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    if manifest.format_version != 1 {
        return Err(Error::Format {
            path,
            message: format!("unsupported manifest version {}", manifest.format_version),
        });
    }
    if manifest.files.len() != manifest.ids.len() {
        return Err(Error::Format {
            path,
            message: "ids/files length mismatch".into(),
        });
    }
    let mut images = Vec::with_capacity(manifest.files.len());
    for rel in &manifest.files {
        let t = Tensor::<f64>::load(&dir.join(rel))?;
        images.push(tensor_to_image(&t)?);
    }
    Ok(Dataset {
        images,
        ids: manifest.ids,
        normalization: manifest.normalization,
        normalized: manifest.normalized,
        spec: manifest.spec,
    })
}

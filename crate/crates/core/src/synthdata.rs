//! Deterministic synthetic 2-D segmentation benchmark.
//!
//! Each sample is one or two filled shapes (ellipses and rectangles) on a
//! darker background. The crisp pre-blur shape indicator is the ground-truth
//! mask; the image then passes through a Gaussian blur (so boundaries are
//! genuinely ambiguous), additive Gaussian noise, and exact per-sample
//! normalization to zero mean and unit variance. With two classes both
//! shape families are foreground class 1; with three classes ellipses are
//! class 1 and rectangles class 2.
//!
//! Everything is a pure function of [`DatasetSpec`]: sample `id` draws from
//! its own counter-mode RNG stream, and the labeled-subset shuffle has a
//! reserved stream, so datasets are bit-identical across runs and machines.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::losses::LabelMap;

/// RNG stream reserved for dataset-level decisions (the labeled shuffle);
/// sample `id` uses stream `id + 1`.
const SPLIT_STREAM: u64 = 0;

/// Foreground area bounds enforced by rejection resampling.
const MIN_FOREGROUND: f64 = 0.02;
const MAX_FOREGROUND: f64 = 0.60;

/// Everything that determines a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    /// Total sample count; one fifth (rounded down) becomes the test set.
    pub count: usize,
    pub height: usize,
    pub width: usize,
    /// 2 (shapes vs background) or 3 (ellipses / rectangles / background).
    pub classes: usize,
    /// Fraction of the *training* samples that keep their masks, in (0, 1].
    pub labeled_fraction: f64,
    pub seed: u64,
    /// Standard deviation of the additive pixel noise.
    pub noise_sigma: f64,
    /// Standard deviation (in pixels) of the boundary-smearing blur.
    pub blur_sigma: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            count: 100,
            height: 64,
            width: 64,
            classes: 2,
            labeled_fraction: 0.2,
            seed: 7,
            noise_sigma: 0.5,
            blur_sigma: 1.2,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("dataset count must be positive".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "images must be at least 8x8, got {}x{}",
                self.height, self.width
            )));
        }
        if self.classes != 2 && self.classes != 3 {
            return Err(Error::Config(format!(
                "the shape families support 2 or 3 classes, got {}",
                self.classes
            )));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "labeled fraction must be in (0, 1], got {}",
                self.labeled_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0) || !(self.blur_sigma >= 0.0) {
            return Err(Error::Config(
                "noise and blur standard deviations must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn test_count(&self) -> usize {
        self.count / 5
    }

    pub fn train_count(&self) -> usize {
        self.count - self.test_count()
    }

    /// Number of training samples that keep their masks.
    pub fn labeled_count(&self) -> usize {
        (self.labeled_fraction * self.train_count() as f64).ceil() as usize
    }
}

/// One image with (for labeled and test samples) its ground-truth mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    /// `[1, H, W]`, zero mean and unit variance.
    pub image: Array<f64>,
    pub mask: Option<LabelMap>,
}

/// A generated benchmark: training samples (masked iff labeled) and a
/// fully-masked test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Indices into `train` of samples that kept their masks.
    pub fn labeled_indices(&self) -> Vec<usize> {
        self.train
            .iter()
            .enumerate()
            .filter(|(_, s)| s.mask.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices into `train` of mask-less samples.
    pub fn unlabeled_indices(&self) -> Vec<usize> {
        self.train
            .iter()
            .enumerate()
            .filter(|(_, s)| s.mask.is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Generates the full benchmark for `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let train_count = spec.train_count();

    // Labeled subset: the first ceil(fraction * train_count) training ids
    // under a seeded shuffle of 0..train_count.
    let mut ids: Vec<usize> = (0..train_count).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    split_rng.set_stream(SPLIT_STREAM);
    ids.shuffle(&mut split_rng);
    let labeled_count = spec.labeled_count();
    let mut labeled = vec![false; train_count];
    for &id in ids.iter().take(labeled_count) {
        labeled[id] = true;
    }

    let mut train = Vec::with_capacity(train_count);
    for id in 0..train_count {
        let (image, mask) = render_sample(spec, id as u64)?;
        train.push(Sample {
            id: id as u64,
            image,
            mask: if labeled[id] { Some(mask) } else { None },
        });
    }
    let mut test = Vec::with_capacity(spec.test_count());
    for id in train_count..spec.count {
        let (image, mask) = render_sample(spec, id as u64)?;
        test.push(Sample { id: id as u64, image, mask: Some(mask) });
    }
    Ok(Dataset { spec: spec.clone(), train, test })
}

/// Renders one sample: shapes -> crisp mask -> blur -> noise -> normalize.
fn render_sample(spec: &DatasetSpec, id: u64) -> Result<(Array<f64>, LabelMap)> {
    let (h, w) = (spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(id + 1);

    // Rejection loop: redraw the scene until the foreground area is neither
    // negligible nor dominating.
    let mut labels;
    let mut attempts = 0;
    loop {
        labels = vec![0u8; h * w];
        let shapes = rng.random_range(1..=2);
        for _ in 0..shapes {
            paint_shape(&mut rng, spec, &mut labels);
        }
        let foreground =
            labels.iter().filter(|&&l| l != 0).count() as f64 / (h * w) as f64;
        if (MIN_FOREGROUND..=MAX_FOREGROUND).contains(&foreground) {
            break;
        }
        attempts += 1;
        if attempts > 1000 {
            return Err(Error::Contract(
                "foreground rejection sampling failed to converge".into(),
            ));
        }
    }

    // Per-sample intensity model: a darker background level plus one
    // brighter level per foreground class, both drawn per image so contrast
    // and brightness vary across the dataset while the blur and noise stages
    // keep boundary pixels genuinely ambiguous.
    let background = rng.random_range(0.15..0.35);
    let mut levels = vec![background; spec.classes];
    for level in levels.iter_mut().skip(1) {
        *level = background + rng.random_range(0.45..0.75);
    }
    let mut image: Vec<f64> = labels.iter().map(|&l| levels[l as usize]).collect();

    gaussian_blur(&mut image, h, w, spec.blur_sigma);

    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("positive sigma");
        for v in image.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    // Exact per-sample standardisation.
    let n = (h * w) as f64;
    let mean = image.iter().sum::<f64>() / n;
    let var = image.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::Domain(format!("sample {id} is constant; cannot normalize")));
    }
    let std = var.sqrt();
    for v in image.iter_mut() {
        *v = (*v - mean) / std;
    }

    let image = Array::from_vec(vec![1, h, w], image)?;
    let mask = LabelMap::new(h, w, spec.classes, labels)?;
    Ok((image, mask))
}

/// Draws one random rotated ellipse or rectangle into the label grid.
/// Later shapes paint over earlier ones.
fn paint_shape(rng: &mut ChaCha8Rng, spec: &DatasetSpec, labels: &mut [u8]) {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let is_rectangle = rng.random_range(0..2) == 1;
    let cx = rng.random_range(0.2..0.8) * w;
    let cy = rng.random_range(0.2..0.8) * h;
    // Semi-axes scale with the image but are clamped below in absolute
    // pixels so shapes stay visible (and the foreground-fraction floor stays
    // reachable) when tests render thumbnail-sized images.
    let extent = h.min(w);
    let lo = (0.10 * extent).max(1.75);
    let hi = (0.22 * extent).max(lo + 0.5);
    let a = rng.random_range(lo..hi);
    let b = rng.random_range(lo..hi);
    let theta = rng.random_range(0.0..std::f64::consts::PI);
    let (sin, cos) = theta.sin_cos();
    let class = if spec.classes == 3 && is_rectangle { 2u8 } else { 1u8 };

    for y in 0..spec.height {
        for x in 0..spec.width {
            // Pixel centre in the shape's rotated frame.
            let dx = (x as f64 + 0.5) - cx;
            let dy = (y as f64 + 0.5) - cy;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            let inside = if is_rectangle {
                u.abs() <= a && v.abs() <= b
            } else {
                (u / a) * (u / a) + (v / b) * (v / b) <= 1.0
            };
            if inside {
                labels[y * spec.width + x] = class;
            }
        }
    }
}

/// Separable Gaussian blur with border renormalization: at the edges the
/// kernel is truncated and re-divided by the in-range weight sum, so flat
/// regions stay exactly flat.
fn gaussian_blur(image: &mut Vec<f64>, h: usize, w: usize, sigma: f64) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();

    let pass = |horizontal: bool, src: &[f64], dst: &mut [f64]| {
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                let mut norm = 0.0;
                for (i, &wk) in weights.iter().enumerate() {
                    let k = i as isize - radius;
                    let (yy, xx) = if horizontal {
                        (y as isize, x as isize + k)
                    } else {
                        (y as isize + k, x as isize)
                    };
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    acc += wk * src[yy as usize * w + xx as usize];
                    norm += wk;
                }
                dst[y * w + x] = acc / norm;
            }
        }
    };

    let mut tmp = vec![0.0; image.len()];
    pass(true, image, &mut tmp);
    pass(false, &tmp, image);
}

/// A minibatch as indices into the training set; labeled indices first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    /// Indices of labeled training samples.
    pub labeled: Vec<usize>,
    /// Indices of unlabeled training samples.
    pub unlabeled: Vec<usize>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// All indices, labeled first — the order the loss expects.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.labeled.iter().chain(self.unlabeled.iter()).copied()
    }
}

/// One index pool that cycles forever, reshuffling at each epoch boundary.
struct CyclingPool {
    items: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl CyclingPool {
    fn new(items: Vec<usize>, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut pool = CyclingPool { items, cursor: 0, rng };
        pool.reshuffle();
        pool
    }

    fn reshuffle(&mut self) {
        self.items.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    fn next(&mut self) -> usize {
        if self.cursor == self.items.len() {
            self.reshuffle();
        }
        let item = self.items[self.cursor];
        self.cursor += 1;
        item
    }
}

/// Infinite deterministic stream of mixed batches over a training set.
pub struct BatchStream {
    labeled: CyclingPool,
    unlabeled: Option<CyclingPool>,
    labeled_per_batch: usize,
    unlabeled_per_batch: usize,
}

impl BatchStream {
    /// `labeled_per_batch` of every batch come from the labeled pool, the
    /// rest from the unlabeled pool; each pool reshuffles per epoch.
    pub fn new(
        dataset: &Dataset,
        batch_size: usize,
        labeled_per_batch: usize,
        seed: u64,
    ) -> Result<Self> {
        if batch_size == 0 || labeled_per_batch == 0 {
            return Err(Error::Config(
                "batch size and labeled-per-batch must be positive".into(),
            ));
        }
        if labeled_per_batch > batch_size {
            return Err(Error::Config(format!(
                "labeled-per-batch {labeled_per_batch} exceeds batch size {batch_size}"
            )));
        }
        let labeled = dataset.labeled_indices();
        if labeled.is_empty() {
            return Err(Error::EmptyBatch("the training set has no labeled samples".into()));
        }
        let unlabeled_per_batch = batch_size - labeled_per_batch;
        let unlabeled = if unlabeled_per_batch > 0 {
            let pool = dataset.unlabeled_indices();
            if pool.is_empty() {
                return Err(Error::EmptyBatch(
                    "mixed batches requested but the training set has no unlabeled \
                     samples"
                        .into(),
                ));
            }
            Some(CyclingPool::new(pool, seed, 1))
        } else {
            None
        };
        Ok(BatchStream {
            labeled: CyclingPool::new(labeled, seed, 0),
            unlabeled,
            labeled_per_batch,
            unlabeled_per_batch,
        })
    }

    pub fn next_batch(&mut self) -> Batch {
        let labeled = (0..self.labeled_per_batch).map(|_| self.labeled.next()).collect();
        let unlabeled = match &mut self.unlabeled {
            Some(pool) => (0..self.unlabeled_per_batch).map(|_| pool.next()).collect(),
            None => Vec::new(),
        };
        Batch { labeled, unlabeled }
    }
}

// ---------------------------------------------------------------------------
// On-disk format: a `manifest` text file plus one raw file per image/mask.
// Raw header (16 bytes): magic "EVIM", u32 height, u32 width, u32 dtype
// (1 = little-endian f64 image, 2 = u8 class mask), then the payload.
// ---------------------------------------------------------------------------

const RAW_MAGIC: &[u8; 4] = b"EVIM";
const DTYPE_IMAGE: u32 = 1;
const DTYPE_MASK: u32 = 2;
const MANIFEST_MAGIC: &str = "EVDATA01";

/// Writes `dataset` under `dir` (created if missing).
pub fn dump(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest");
    let file = fs::File::create(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut m = BufWriter::new(file);
    let spec = &dataset.spec;
    let put = |m: &mut BufWriter<fs::File>, line: String| -> Result<()> {
        writeln!(m, "{line}").map_err(|e| Error::io(&manifest_path, e))
    };
    put(&mut m, MANIFEST_MAGIC.to_string())?;
    put(&mut m, format!("count = {}", spec.count))?;
    put(&mut m, format!("height = {}", spec.height))?;
    put(&mut m, format!("width = {}", spec.width))?;
    put(&mut m, format!("classes = {}", spec.classes))?;
    put(&mut m, format!("labeled_fraction = {}", spec.labeled_fraction))?;
    put(&mut m, format!("seed = {}", spec.seed))?;
    put(&mut m, format!("noise_sigma = {}", spec.noise_sigma))?;
    put(&mut m, format!("blur_sigma = {}", spec.blur_sigma))?;

    for (split, samples) in [("train", &dataset.train), ("test", &dataset.test)] {
        for sample in samples.iter() {
            let img_name = format!("img_{:05}.raw", sample.id);
            write_image(&dir.join(&img_name), &sample.image)?;
            let msk_name = match &sample.mask {
                Some(mask) => {
                    let name = format!("msk_{:05}.raw", sample.id);
                    write_mask(&dir.join(&name), mask)?;
                    name
                }
                None => "-".to_string(),
            };
            put(&mut m, format!("sample {} {} {} {}", sample.id, split, img_name, msk_name))?;
        }
    }
    m.flush().map_err(|e| Error::io(&manifest_path, e))
}

/// Reads a dataset previously written by [`dump`].
pub fn load(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest");
    let file = fs::File::open(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let reader = BufReader::new(file);
    let bad = |line: usize, detail: String| Error::Format {
        path: manifest_path.clone(),
        detail: format!("line {line}: {detail}"),
    };

    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        lines.push((i + 1, line.map_err(|e| Error::io(&manifest_path, e))?));
    }
    let mut it = lines.into_iter();
    match it.next() {
        Some((_, first)) if first == MANIFEST_MAGIC => {}
        Some((n, other)) => return Err(bad(n, format!("expected {MANIFEST_MAGIC}, got '{other}'"))),
        None => return Err(bad(1, "empty manifest".into())),
    }

    let mut spec = DatasetSpec::default();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (n, line) in it {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("sample ") {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad(n, "sample lines need: id split image mask".into()));
            }
            let id: u64 =
                fields[0].parse().map_err(|_| bad(n, format!("bad id '{}'", fields[0])))?;
            let image = read_image(&dir.join(fields[2]))?;
            let mask = match fields[3] {
                "-" => None,
                name => Some(read_mask(&dir.join(name), spec.classes)?),
            };
            let sample = Sample { id, image, mask };
            match fields[1] {
                "train" => train.push(sample),
                "test" => test.push(sample),
                other => return Err(bad(n, format!("unknown split '{other}'"))),
            }
        } else if let Some((key, value)) = line.split_once('=') {
            let (key, value) = (key.trim(), value.trim());
            macro_rules! field {
                () => {
                    value
                        .parse()
                        .map_err(|_| bad(n, format!("bad value for {key}: '{value}'")))?
                };
            }
            match key {
                "count" => spec.count = field!(),
                "height" => spec.height = field!(),
                "width" => spec.width = field!(),
                "classes" => spec.classes = field!(),
                "labeled_fraction" => spec.labeled_fraction = field!(),
                "seed" => spec.seed = field!(),
                "noise_sigma" => spec.noise_sigma = field!(),
                "blur_sigma" => spec.blur_sigma = field!(),
                other => return Err(bad(n, format!("unknown manifest key '{other}'"))),
            }
        } else {
            return Err(bad(n, format!("unparseable line '{line}'")));
        }
    }
    if train.len() + test.len() != spec.count {
        return Err(Error::Format {
            path: manifest_path,
            detail: format!(
                "manifest lists {} samples but count = {}",
                train.len() + test.len(),
                spec.count
            ),
        });
    }
    Ok(Dataset { spec, train, test })
}

fn write_raw_header(w: &mut impl Write, h: u32, wd: u32, dtype: u32, path: &Path) -> Result<()> {
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(RAW_MAGIC);
    header.extend_from_slice(&h.to_le_bytes());
    header.extend_from_slice(&wd.to_le_bytes());
    header.extend_from_slice(&dtype.to_le_bytes());
    w.write_all(&header).map_err(|e| Error::io(path, e))
}

fn write_image(path: &Path, image: &Array<f64>) -> Result<()> {
    let (h, w) = (image.shape()[1], image.shape()[2]);
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_raw_header(&mut out, h as u32, w as u32, DTYPE_IMAGE, path)?;
    for &v in image.data() {
        out.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_mask(path: &Path, mask: &LabelMap) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_raw_header(&mut out, mask.height() as u32, mask.width() as u32, DTYPE_MASK, path)?;
    out.write_all(mask.data()).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_raw_header(r: &mut impl Read, path: &Path, want_dtype: u32) -> Result<(usize, usize)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
    if &header[..4] != RAW_MAGIC {
        return Err(Error::Format { path: path.into(), detail: "bad raw magic".into() });
    }
    let h = u32::from_le_bytes(header[4..8].try_into().expect("fixed slice")) as usize;
    let w = u32::from_le_bytes(header[8..12].try_into().expect("fixed slice")) as usize;
    let dtype = u32::from_le_bytes(header[12..16].try_into().expect("fixed slice"));
    if dtype != want_dtype {
        return Err(Error::Format {
            path: path.into(),
            detail: format!("dtype {dtype}, expected {want_dtype}"),
        });
    }
    if h == 0 || w == 0 || h * w > 1 << 26 {
        return Err(Error::Format {
            path: path.into(),
            detail: format!("implausible dimensions {h}x{w}"),
        });
    }
    Ok((h, w))
}

fn read_image(path: &Path) -> Result<Array<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let (h, w) = read_raw_header(&mut r, path, DTYPE_IMAGE)?;
    let mut data = Vec::with_capacity(h * w);
    for _ in 0..h * w {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
        data.push(f64::from_le_bytes(b));
    }
    Array::from_vec(vec![1, h, w], data)
}

fn read_mask(path: &Path, classes: usize) -> Result<LabelMap> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let (h, w) = read_raw_header(&mut r, path, DTYPE_MASK)?;
    let mut data = vec![0u8; h * w];
    r.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
    LabelMap::new(h, w, classes, data)
}

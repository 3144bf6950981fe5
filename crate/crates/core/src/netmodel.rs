//! The segmentation network: one shared encoder, two classifier heads.
//!
//! The encoder is three 3x3 same-padding conv+relu stages
//! (1 -> 8 -> 16 -> 16 channels). Each head adds a 3x3 conv+relu hidden
//! stage (16 -> 16) and a 1x1 projection to per-class logits, so the heads
//! share features but specialise independently. The architecture is fixed;
//! only the class count varies.
//!
//! Parameters live in [`ModelParams`] (plain arrays, checkpointable);
//! [`ModelParams::bind`] lifts them onto a tape for a training step, and
//! [`ModelParams::infer`] runs the same computation tape-free.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::diffcore::{kernels, Array, DiffValue, Real, Tape};
use crate::error::{Error, Result};
use crate::heads::{evidential_maps, fuse_probability_maps, vanilla_maps, Activation};
use crate::losses::LabelMap;

/// Encoder stage widths (channels after each conv).
pub const ENCODER_WIDTHS: [usize; 3] = [8, 16, 16];
/// Hidden width of each head's conv stage.
pub const HEAD_WIDTH: usize = 16;

const CHECKPOINT_MAGIC: &[u8; 8] = b"EVCKPT01";
/// Seven conv layers, two arrays each.
const CHECKPOINT_ARRAYS: u32 = 14;

/// One convolution layer's parameters and geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    /// `[out, in, k, k]` kernel.
    pub weight: Array<T>,
    /// `[out]` bias.
    pub bias: Array<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> ConvLayer<T> {
    /// Kaiming-style init: weights from N(0, sqrt(2 / fan_in)), zero bias.
    fn init(
        rng: &mut ChaCha8Rng,
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        padding: usize,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        let n = out_channels * in_channels * kernel * kernel;
        let data: Vec<T> = (0..n).map(|_| T::of(normal.sample(rng))).collect();
        ConvLayer {
            weight: Array::from_vec(vec![out_channels, in_channels, kernel, kernel], data)
                .expect("init shape is consistent"),
            bias: Array::zeros(&[out_channels]),
            stride: 1,
            padding,
        }
    }

    fn parameter_count(&self) -> usize {
        self.weight.numel() + self.bias.numel()
    }

    /// Tape-free conv + bias + optional activation.
    fn apply(&self, input: &Array<T>, act: Act) -> Result<Array<T>> {
        let z = kernels::conv2d_forward(input, &self.weight, self.stride, self.padding)?;
        let z = kernels::bias_add(&z, &self.bias)?;
        Ok(match act {
            Act::Linear => z,
            Act::Relu => z.map(|x| if x > T::zero() { x } else { T::zero() }),
        })
    }
}

/// Activation applied after a convolution stage.
#[derive(Clone, Copy)]
enum Act {
    Linear,
    Relu,
}

/// Which prediction the fused model reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionHead {
    /// Argmax of the averaged head probabilities (the default).
    Fused,
    /// Argmax of the softmax head alone.
    Vanilla,
    /// Argmax of the Dirichlet expected probabilities alone.
    Evidential,
}

impl PredictionHead {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(PredictionHead::Fused),
            "vanilla" => Ok(PredictionHead::Vanilla),
            "evidential" => Ok(PredictionHead::Evidential),
            other => Err(Error::Config(format!(
                "unknown prediction head '{other}' (expected fused, vanilla or evidential)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PredictionHead::Fused => "fused",
            PredictionHead::Vanilla => "vanilla",
            PredictionHead::Evidential => "evidential",
        }
    }
}

/// All trainable parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    classes: usize,
    pub enc1: ConvLayer<T>,
    pub enc2: ConvLayer<T>,
    pub enc3: ConvLayer<T>,
    pub van_hidden: ConvLayer<T>,
    pub van_out: ConvLayer<T>,
    pub evid_hidden: ConvLayer<T>,
    pub evid_out: ConvLayer<T>,
}

/// Both heads' logits as plain arrays (inference path).
#[derive(Clone, Debug)]
pub struct LogitMaps<T> {
    pub evidential: Array<T>,
    pub vanilla: Array<T>,
}

impl<T: Real> ModelParams<T> {
    /// Fresh parameters for a `classes`-way segmenter, deterministic in
    /// `seed`.
    pub fn init(classes: usize, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!(
                "the model needs at least 2 classes, got {classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [w1, w2, w3] = ENCODER_WIDTHS;
        Ok(ModelParams {
            classes,
            enc1: ConvLayer::init(&mut rng, w1, 1, 3, 1),
            enc2: ConvLayer::init(&mut rng, w2, w1, 3, 1),
            enc3: ConvLayer::init(&mut rng, w3, w2, 3, 1),
            van_hidden: ConvLayer::init(&mut rng, HEAD_WIDTH, w3, 3, 1),
            van_out: ConvLayer::init(&mut rng, classes, HEAD_WIDTH, 1, 0),
            evid_hidden: ConvLayer::init(&mut rng, HEAD_WIDTH, w3, 3, 1),
            evid_out: ConvLayer::init(&mut rng, classes, HEAD_WIDTH, 1, 0),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|(_, l)| l.parameter_count()).sum()
    }

    /// The layers in their canonical (checkpoint) order.
    pub fn layers(&self) -> [(&'static str, &ConvLayer<T>); 7] {
        [
            ("enc1", &self.enc1),
            ("enc2", &self.enc2),
            ("enc3", &self.enc3),
            ("van_hidden", &self.van_hidden),
            ("van_out", &self.van_out),
            ("evid_hidden", &self.evid_hidden),
            ("evid_out", &self.evid_out),
        ]
    }

    pub fn layers_mut(&mut self) -> [(&'static str, &mut ConvLayer<T>); 7] {
        [
            ("enc1", &mut self.enc1),
            ("enc2", &mut self.enc2),
            ("enc3", &mut self.enc3),
            ("van_hidden", &mut self.van_hidden),
            ("van_out", &mut self.van_out),
            ("evid_hidden", &mut self.evid_hidden),
            ("evid_out", &mut self.evid_out),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.layers()
            .iter()
            .all(|(_, l)| l.weight.all_finite() && l.bias.all_finite())
    }

    /// Records every parameter on `tape` as a differentiable variable.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> ModelVars<'t, T> {
        let lift = |l: &ConvLayer<T>| BoundLayer {
            weight: tape.var(l.weight.clone()),
            bias: tape.var(l.bias.clone()),
            stride: l.stride,
            padding: l.padding,
        };
        ModelVars {
            classes: self.classes,
            enc1: lift(&self.enc1),
            enc2: lift(&self.enc2),
            enc3: lift(&self.enc3),
            van_hidden: lift(&self.van_hidden),
            van_out: lift(&self.van_out),
            evid_hidden: lift(&self.evid_hidden),
            evid_out: lift(&self.evid_out),
        }
    }

    /// Tape-free forward pass: images `[B,1,H,W]` to both heads' logits.
    pub fn infer(&self, images: &Array<T>) -> Result<LogitMaps<T>> {
        let f1 = self.enc1.apply(images, Act::Relu)?;
        let f2 = self.enc2.apply(&f1, Act::Relu)?;
        let features = self.enc3.apply(&f2, Act::Relu)?;
        let vh = self.van_hidden.apply(&features, Act::Relu)?;
        let vanilla = self.van_out.apply(&vh, Act::Linear)?;
        let eh = self.evid_hidden.apply(&features, Act::Relu)?;
        let evidential = self.evid_out.apply(&eh, Act::Linear)?;
        Ok(LogitMaps { evidential, vanilla })
    }

    /// Per-pixel class predictions for a batch of images. Ties resolve to
    /// the lower class index.
    pub fn predict(
        &self,
        images: &Array<T>,
        head: PredictionHead,
        activation: Activation,
    ) -> Result<Vec<LabelMap>> {
        let logits = self.infer(images)?;
        let prob = match head {
            PredictionHead::Vanilla => vanilla_maps(&logits.vanilla)?,
            PredictionHead::Evidential => evidential_maps(&logits.evidential, activation)?.prob,
            PredictionHead::Fused => {
                let ev = evidential_maps(&logits.evidential, activation)?.prob;
                let va = vanilla_maps(&logits.vanilla)?;
                fuse_probability_maps(&ev, &va)?
            }
        };
        argmax_labels(&prob, self.classes)
    }

    /// Writes every parameter array to `path` (magic, array count, then per
    /// array: u8 rank, u32 dims, f64 little-endian data).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let put = |w: &mut BufWriter<File>, bytes: &[u8]| -> Result<()> {
            w.write_all(bytes).map_err(|e| Error::io(path, e))
        };
        put(&mut w, CHECKPOINT_MAGIC)?;
        put(&mut w, &CHECKPOINT_ARRAYS.to_le_bytes())?;
        for (_, layer) in self.layers() {
            for array in [&layer.weight, &layer.bias] {
                put(&mut w, &[array.ndim() as u8])?;
                for &d in array.shape() {
                    put(&mut w, &(d as u32).to_le_bytes())?;
                }
                for &v in array.data() {
                    put(&mut w, &v.as_f64().to_le_bytes())?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a checkpoint written by [`ModelParams::save`], validating the
    /// layer shapes against the architecture.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let bad = |detail: &str| Error::Format { path: path.into(), detail: detail.into() };

        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic, path)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic (not a model checkpoint)"));
        }
        let mut count = [0u8; 4];
        read_exact(&mut r, &mut count, path)?;
        if u32::from_le_bytes(count) != CHECKPOINT_ARRAYS {
            return Err(bad("unexpected array count"));
        }

        let mut arrays: Vec<Array<T>> = Vec::with_capacity(CHECKPOINT_ARRAYS as usize);
        for _ in 0..CHECKPOINT_ARRAYS {
            let mut rank = [0u8; 1];
            read_exact(&mut r, &mut rank, path)?;
            let rank = rank[0] as usize;
            if rank == 0 || rank > 4 {
                return Err(bad("array rank outside 1..=4"));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut dim = [0u8; 4];
                read_exact(&mut r, &mut dim, path)?;
                shape.push(u32::from_le_bytes(dim) as usize);
            }
            let numel: usize = shape.iter().product();
            if numel > 1 << 28 {
                return Err(bad("array too large to be this architecture"));
            }
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut v = [0u8; 8];
                read_exact(&mut r, &mut v, path)?;
                data.push(T::of(f64::from_le_bytes(v)));
            }
            arrays.push(Array::from_vec(shape, data)?);
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
            return Err(bad("trailing bytes after the last array"));
        }

        // The vanilla projection kernel is [K, head, 1, 1]; its output
        // extent fixes the class count, and the expected shape of every
        // array then follows from the architecture.
        let van_out_weight = &arrays[8];
        if van_out_weight.ndim() != 4 || van_out_weight.shape()[0] < 2 {
            return Err(bad("vanilla projection shape does not identify a class count"));
        }
        let classes = van_out_weight.shape()[0];
        let expected = ModelParams::<T>::init(classes, 0)?;
        let mut model = expected.clone();
        let mut it = arrays.into_iter();
        for ((name, layer), (_, expect)) in
            model.layers_mut().into_iter().zip(expected.layers())
        {
            let w = it.next().expect("array count was checked");
            let b = it.next().expect("array count was checked");
            if w.shape() != expect.weight.shape() || b.shape() != expect.bias.shape() {
                return Err(Error::Format {
                    path: path.into(),
                    detail: format!(
                        "layer {name}: checkpoint shapes {:?}/{:?} do not match the \
                         architecture's {:?}/{:?}",
                        w.shape(),
                        b.shape(),
                        expect.weight.shape(),
                        expect.bias.shape()
                    ),
                });
            }
            layer.weight = w;
            layer.bias = b;
        }
        Ok(model)
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::io(path, e))
}

/// Per-pixel argmax over the class axis of `[B,K,H,W]` probabilities.
fn argmax_labels<T: Real>(prob: &Array<T>, classes: usize) -> Result<Vec<LabelMap>> {
    let shape = prob.shape();
    let (batch, k, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let plane = h * w;
    let mut out = Vec::with_capacity(batch);
    for b in 0..batch {
        let mut labels = vec![0u8; plane];
        for p in 0..plane {
            let mut best = 0usize;
            let mut best_v = prob.data()[(b * k) * plane + p];
            for c in 1..k {
                let v = prob.data()[(b * k + c) * plane + p];
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            labels[p] = best as u8;
        }
        out.push(LabelMap::new(h, w, classes, labels)?);
    }
    Ok(out)
}

/// One layer's parameters bound to a tape.
pub struct BoundLayer<'t, T: Real> {
    pub weight: DiffValue<'t, T>,
    pub bias: DiffValue<'t, T>,
    stride: usize,
    padding: usize,
}

impl<'t, T: Real> BoundLayer<'t, T> {
    fn apply(&self, input: &DiffValue<'t, T>, act: Act) -> Result<DiffValue<'t, T>> {
        let z = input.conv2d(&self.weight, self.stride, self.padding)?.bias_add(&self.bias)?;
        Ok(match act {
            Act::Linear => z,
            Act::Relu => z.relu(),
        })
    }
}

/// Both heads' logits on the tape (training path).
pub struct TapeLogits<'t, T: Real> {
    pub evidential: DiffValue<'t, T>,
    pub vanilla: DiffValue<'t, T>,
}

/// The model's parameters as tape variables, for one training step.
pub struct ModelVars<'t, T: Real> {
    classes: usize,
    pub enc1: BoundLayer<'t, T>,
    pub enc2: BoundLayer<'t, T>,
    pub enc3: BoundLayer<'t, T>,
    pub van_hidden: BoundLayer<'t, T>,
    pub van_out: BoundLayer<'t, T>,
    pub evid_hidden: BoundLayer<'t, T>,
    pub evid_out: BoundLayer<'t, T>,
}

impl<'t, T: Real> ModelVars<'t, T> {
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Differentiable forward pass: images `[B,1,H,W]` to both heads.
    pub fn forward(&self, images: &DiffValue<'t, T>) -> Result<TapeLogits<'t, T>> {
        let f1 = self.enc1.apply(images, Act::Relu)?;
        let f2 = self.enc2.apply(&f1, Act::Relu)?;
        let features = self.enc3.apply(&f2, Act::Relu)?;
        let vh = self.van_hidden.apply(&features, Act::Relu)?;
        let vanilla = self.van_out.apply(&vh, Act::Linear)?;
        let eh = self.evid_hidden.apply(&features, Act::Relu)?;
        let evidential = self.evid_out.apply(&eh, Act::Linear)?;
        Ok(TapeLogits { evidential, vanilla })
    }

    /// Weight/bias variables in the canonical layer order, paired for the
    /// optimiser with [`ModelParams::layers_mut`].
    pub fn parameters(&self) -> Vec<&DiffValue<'t, T>> {
        [
            &self.enc1,
            &self.enc2,
            &self.enc3,
            &self.van_hidden,
            &self.van_out,
            &self.evid_hidden,
            &self.evid_out,
        ]
        .into_iter()
        .flat_map(|l| [&l.weight, &l.bias])
        .collect()
    }
}

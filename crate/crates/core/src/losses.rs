//! Training objectives.
//!
//! The composite objective couples a labeled (supervised) part with an
//! unlabeled (consistency) part:
//!
//! - the vanilla head is supervised with pixel cross-entropy;
//! - the evidential head is supervised with the Dirichlet expected
//!   cross-entropy plus an annealed KL regulariser that shrinks the
//!   evidence assigned to wrong classes;
//! - on every sample (labeled or not), each head guides the other through
//!   an uncertainty-weighted mean-absolute-difference of their probability
//!   maps, discounting pixels the evidential head is unsure about.
//!
//! Both ramp weights (`kl` and consistency) are functions of the epoch
//! index; [`Schedule`] centralises them so training and its logs cannot
//! drift apart.

use crate::diffcore::{special, Array, DiffValue, Real};
use crate::error::{Error, Result};
use crate::heads::EvidentialOutput;

/// Probabilities are clamped to at least this before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Dense per-pixel class labels for one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<u8>,
}

impl LabelMap {
    /// Validates that every label is below `classes`.
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<u8>) -> Result<Self> {
        if classes < 2 || classes > 256 {
            return Err(Error::Config(format!(
                "label maps support 2..=256 classes, got {classes}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "label map {}x{} needs {} entries, got {}",
                height,
                width,
                height * width,
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&l| (l as usize) >= classes) {
            return Err(Error::InvalidLabel { index: bad as usize, classes });
        }
        Ok(LabelMap { height, width, classes, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Fraction of pixels labeled with `class`.
    pub fn class_fraction(&self, class: u8) -> f64 {
        let hits = self.data.iter().filter(|&&l| l == class).count();
        hits as f64 / self.data.len() as f64
    }
}

/// Stacks label maps into a one-hot `[B,K,H,W]` array.
pub fn one_hot_batch<T: Real>(labels: &[&LabelMap]) -> Result<Array<T>> {
    let first = labels.first().ok_or_else(|| {
        Error::EmptyBatch("one-hot encoding needs at least one label map".into())
    })?;
    let (h, w, k) = (first.height, first.width, first.classes);
    let mut out = Array::zeros(&[labels.len(), k, h, w]);
    let plane = h * w;
    for (b, map) in labels.iter().enumerate() {
        if map.height != h || map.width != w || map.classes != k {
            return Err(Error::Shape(format!(
                "label map {} is {}x{} with {} classes, batch expects {}x{} with {}",
                b, map.height, map.width, map.classes, h, w, k
            )));
        }
        for (p, &label) in map.data.iter().enumerate() {
            out.data_mut()[(b * k + label as usize) * plane + p] = T::one();
        }
    }
    Ok(out)
}

/// Ramp weights for the annealed loss terms, as functions of the epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    /// Epochs until the KL regulariser reaches full weight.
    pub kl_epochs: f64,
    /// Epochs until the consistency weight reaches its amplitude.
    pub con_epochs: f64,
    /// Final consistency weight.
    pub con_amplitude: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule { kl_epochs: 150.0, con_epochs: 40.0, con_amplitude: 0.1 }
    }
}

impl Schedule {
    /// Linear KL ramp: `min(1, epoch / kl_epochs)`.
    pub fn lambda_kl(&self, epoch: f64) -> f64 {
        (epoch / self.kl_epochs).min(1.0)
    }

    /// Sigmoid-shaped consistency ramp:
    /// `amplitude * exp(-5 (1 - min(1, epoch / con_epochs))²)`.
    pub fn lambda_con(&self, epoch: f64) -> f64 {
        let r = (epoch / self.con_epochs).min(1.0);
        self.con_amplitude * (-5.0 * (1.0 - r) * (1.0 - r)).exp()
    }
}

fn check_prob_target<T: Real>(prob: &DiffValue<'_, T>, target: &DiffValue<'_, T>) -> Result<()> {
    if prob.shape().len() != 4 {
        return Err(Error::Shape(format!(
            "loss expects [B,K,H,W] probabilities, got {:?}",
            prob.shape()
        )));
    }
    if prob.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "probabilities {:?} and one-hot target {:?} disagree",
            prob.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Pixel-averaged cross-entropy `-mean log p[true class]`, with the
/// probability floored at [`PROB_FLOOR`].
pub fn cross_entropy<'t, T: Real>(
    prob: &DiffValue<'t, T>,
    target: &DiffValue<'t, T>,
) -> Result<DiffValue<'t, T>> {
    check_prob_target(prob, target)?;
    let log_p = prob.clamp_min(T::of(PROB_FLOOR)).ln();
    let picked = target.mul(&log_p)?.sum_axes(&[1], false)?;
    Ok(picked.mean_all().neg())
}

/// Pixel-averaged Dirichlet expected cross-entropy:
/// `mean sum_k y_k (digamma(S) - digamma(alpha_k))`.
pub fn evidential_ce<'t, T: Real>(
    output: &EvidentialOutput<'t, T>,
    target: &DiffValue<'t, T>,
) -> Result<DiffValue<'t, T>> {
    check_prob_target(&output.alpha, target)?;
    let strength_full = output.strength.expand_axis(1, output.classes())?;
    let gap = strength_full.digamma().sub(&output.alpha.digamma())?;
    let picked = target.mul(&gap)?.sum_axes(&[1], false)?;
    Ok(picked.mean_all())
}

/// Pixel-averaged KL divergence from the uniform Dirichlet, applied to the
/// label-adjusted concentrations `alpha~ = y + (1 - y) * alpha` (the true
/// class is pinned to 1 so only wrong-class evidence is penalised).
pub fn dirichlet_kl<'t, T: Real>(
    alpha: &DiffValue<'t, T>,
    target: &DiffValue<'t, T>,
) -> Result<DiffValue<'t, T>> {
    check_prob_target(alpha, target)?;
    let classes = alpha.shape()[1];
    let adjusted = target.add(&target.rsub_scalar(T::one()).mul(alpha)?)?;
    let strength = adjusted.sum_axes(&[1], true)?;
    let dig_strength = strength.digamma().expand_axis(1, classes)?;
    // KL[Dir(a~) || Dir(1)] = ln G(S~) - ln G(K) - sum ln G(a~)
    //                         + sum (a~ - 1)(psi(a~) - psi(S~))
    let ln_gamma_k = special::ln_gamma(T::of(classes as f64));
    let log_norm = strength.ln_gamma().add_scalar(-ln_gamma_k);
    let log_parts = adjusted.ln_gamma().sum_axes(&[1], true)?;
    let tilt = adjusted
        .add_scalar(-T::one())
        .mul(&adjusted.digamma().sub(&dig_strength)?)?
        .sum_axes(&[1], true)?;
    Ok(log_norm.sub(&log_parts)?.add(&tilt)?.mean_all())
}

/// The evidential head's supervised risk and its pieces.
pub struct EvidentialRisk<'t, T: Real> {
    /// Dirichlet expected cross-entropy.
    pub ce: DiffValue<'t, T>,
    /// KL regulariser (unweighted).
    pub kl: DiffValue<'t, T>,
    /// `ce + lambda_kl * kl`.
    pub total: DiffValue<'t, T>,
}

/// Combines the evidential cross-entropy with the annealed KL term.
pub fn evidential_risk<'t, T: Real>(
    output: &EvidentialOutput<'t, T>,
    target: &DiffValue<'t, T>,
    lambda_kl: T,
) -> Result<EvidentialRisk<'t, T>> {
    let ce = evidential_ce(output, target)?;
    let kl = dirichlet_kl(&output.alpha, target)?;
    let total = ce.add(&kl.mul_scalar(lambda_kl))?;
    Ok(EvidentialRisk { ce, kl, total })
}

/// Uncertainty-weighted consistency: `mean w * |guide - student|`, where
/// the mean runs over batch, classes and pixels, and `w` is the `[B,1,H,W]`
/// confidence map broadcast over classes. With `stop_gradient`, the guide
/// and the weights are frozen so only the student branch learns.
pub fn weighted_consistency<'t, T: Real>(
    guide: &DiffValue<'t, T>,
    student: &DiffValue<'t, T>,
    confidence: &DiffValue<'t, T>,
    stop_gradient: bool,
) -> Result<DiffValue<'t, T>> {
    if guide.shape() != student.shape() || guide.shape().len() != 4 {
        return Err(Error::Shape(format!(
            "consistency expects matching [B,K,H,W] maps, got {:?} and {:?}",
            guide.shape(),
            student.shape()
        )));
    }
    let classes = guide.shape()[1];
    let expected = [guide.shape()[0], 1, guide.shape()[2], guide.shape()[3]];
    if confidence.shape() != expected {
        return Err(Error::Shape(format!(
            "confidence map must be {:?}, got {:?}",
            expected,
            confidence.shape()
        )));
    }
    let (guide, weight) = if stop_gradient {
        (guide.detach(), confidence.detach())
    } else {
        (guide.clone(), confidence.clone())
    };
    let weight_full = weight.expand_axis(1, classes)?;
    let gap = guide.sub(student)?.abs().mul(&weight_full)?;
    Ok(gap.mean_all())
}

/// Both directions of the cross-supervision, sharing one confidence map.
pub struct ConsistencyPair<'t, T: Real> {
    /// Evidential head guides the vanilla head.
    pub evidential_guides: DiffValue<'t, T>,
    /// Vanilla head guides the evidential head.
    pub vanilla_guides: DiffValue<'t, T>,
    /// Sum of the two directions.
    pub total: DiffValue<'t, T>,
}

/// Evaluates both consistency directions with the evidential confidence.
pub fn consistency_pair<'t, T: Real>(
    evidential_prob: &DiffValue<'t, T>,
    vanilla_prob: &DiffValue<'t, T>,
    confidence: &DiffValue<'t, T>,
    stop_gradient: bool,
) -> Result<ConsistencyPair<'t, T>> {
    let evidential_guides =
        weighted_consistency(evidential_prob, vanilla_prob, confidence, stop_gradient)?;
    let vanilla_guides =
        weighted_consistency(vanilla_prob, evidential_prob, confidence, stop_gradient)?;
    let total = evidential_guides.add(&vanilla_guides)?;
    Ok(ConsistencyPair { evidential_guides, vanilla_guides, total })
}

/// Which loss terms enter the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossToggles {
    /// Vanilla-head cross-entropy on labeled samples.
    pub ce: bool,
    /// Evidential risk (expected CE + annealed KL) on labeled samples.
    pub enc: bool,
    /// Evidential-guides-vanilla consistency on all samples.
    pub uegv: bool,
    /// Vanilla-guides-evidential consistency on all samples.
    pub uvge: bool,
}

impl Default for LossToggles {
    /// The full objective.
    fn default() -> Self {
        LossToggles { ce: true, enc: true, uegv: true, uvge: true }
    }
}

impl LossToggles {
    pub fn any(&self) -> bool {
        self.ce || self.enc || self.uegv || self.uvge
    }
}

/// One training step's objective with its logged components. Components are
/// always evaluated (so logs stay complete); only toggled-on terms enter
/// `total`.
pub struct CompositeLoss<'t, T: Real> {
    pub ce: DiffValue<'t, T>,
    pub evidential_ce: DiffValue<'t, T>,
    pub kl: DiffValue<'t, T>,
    pub uegv: DiffValue<'t, T>,
    pub uvge: DiffValue<'t, T>,
    pub total: DiffValue<'t, T>,
}

/// Builds the full objective for one batch whose first
/// `labeled_target.shape()[0]` samples are labeled:
/// supervised terms on the labeled slice, consistency on every sample,
/// `total = [ce] + [evidential risk] + lambda_con * ([uegv] + [uvge])`.
pub fn composite_loss<'t, T: Real>(
    evidential: &EvidentialOutput<'t, T>,
    vanilla_prob: &DiffValue<'t, T>,
    labeled_target: &DiffValue<'t, T>,
    lambda_kl: T,
    lambda_con: T,
    toggles: LossToggles,
    stop_gradient: bool,
) -> Result<CompositeLoss<'t, T>> {
    if !toggles.any() {
        return Err(Error::Config("no loss terms enabled".into()));
    }
    let batch = vanilla_prob.shape()[0];
    let labeled = labeled_target.shape()[0];
    if labeled == 0 {
        return Err(Error::EmptyBatch("composite loss needs labeled samples".into()));
    }
    if labeled > batch {
        return Err(Error::Shape(format!(
            "batch has {batch} samples but {labeled} labeled targets"
        )));
    }

    let vanilla_labeled = vanilla_prob.narrow(0, 0, labeled)?;
    let evidential_labeled = evidential.narrow_batch(0, labeled)?;
    let ce = cross_entropy(&vanilla_labeled, labeled_target)?;
    let risk = evidential_risk(&evidential_labeled, labeled_target, lambda_kl)?;
    let pair = consistency_pair(
        &evidential.prob,
        vanilla_prob,
        &evidential.confidence,
        stop_gradient,
    )?;

    let mut total: Option<DiffValue<'t, T>> = None;
    let mut push = |term: DiffValue<'t, T>| -> Result<()> {
        total = Some(match total.take() {
            Some(acc) => acc.add(&term)?,
            None => term,
        });
        Ok(())
    };
    if toggles.ce {
        push(ce.clone())?;
    }
    if toggles.enc {
        push(risk.total.clone())?;
    }
    let mut consistency: Option<DiffValue<'t, T>> = None;
    if toggles.uegv {
        consistency = Some(pair.evidential_guides.clone());
    }
    if toggles.uvge {
        consistency = Some(match consistency.take() {
            Some(acc) => acc.add(&pair.vanilla_guides)?,
            None => pair.vanilla_guides.clone(),
        });
    }
    if let Some(con) = consistency {
        push(con.mul_scalar(lambda_con))?;
    }

    Ok(CompositeLoss {
        ce,
        evidential_ce: risk.ce,
        kl: risk.kl,
        uegv: pair.evidential_guides,
        uvge: pair.vanilla_guides,
        total: total.expect("at least one toggle is enabled"),
    })
}

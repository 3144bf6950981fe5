//! The two classifier heads' output transforms.
//!
//! Both heads consume per-pixel logits of shape `[B,K,H,W]` with `K >= 2`
//! classes. The *vanilla* head is a plain softmax. The *evidential* head
//! maps logits to non-negative evidence `e`, forms Dirichlet concentrations
//! `alpha = e + 1`, and reads off:
//!
//! - the expected probability `p_k = alpha_k / S` with `S = sum_k alpha_k`,
//! - the per-pixel uncertainty mass `u = K / S` (1 with no evidence,
//!   approaching 0 as evidence accumulates),
//! - the confidence `w = 1 - u` used to weight the consistency losses.
//!
//! Everything exists twice: on the autodiff tape for training, and as plain
//! array transforms for inference and map export.

use crate::diffcore::{kernels, Array, DiffValue, Real};
use crate::error::{Error, Result};

/// Evidence activation: how logits become non-negative evidence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    /// `ln(1 + eˣ)` — smooth, strictly positive; the default.
    Softplus,
    /// `max(x, 0)` — sparse evidence, exact zeros.
    Relu,
    /// `e^min(x, 10)` — sharp; the input cap keeps concentrations bounded.
    Exp,
}

/// Input cap for the exponential activation.
const EXP_INPUT_CAP: f64 = 10.0;

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "softplus" => Ok(Activation::Softplus),
            "relu" => Ok(Activation::Relu),
            "exp" => Ok(Activation::Exp),
            other => Err(Error::Config(format!(
                "unknown activation '{other}' (expected softplus, relu or exp)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
            Activation::Exp => "exp",
        }
    }

    /// Scalar evidence transform, shared by the tape-free paths.
    fn apply<T: Real>(&self, x: T) -> T {
        match self {
            Activation::Softplus => {
                let floor = if x > T::zero() { x } else { T::zero() };
                floor + (-x.abs()).exp().ln_1p()
            }
            Activation::Relu => {
                if x > T::zero() {
                    x
                } else {
                    T::zero()
                }
            }
            Activation::Exp => {
                let cap = T::of(EXP_INPUT_CAP);
                (if x > cap { cap } else { x }).exp()
            }
        }
    }
}

fn check_logits(shape: &[usize]) -> Result<usize> {
    if shape.len() != 4 {
        return Err(Error::Shape(format!(
            "classifier head expects [B,K,H,W] logits, got {:?}",
            shape
        )));
    }
    if shape[1] < 2 {
        return Err(Error::Shape(format!(
            "classifier head needs at least 2 classes, got {}",
            shape[1]
        )));
    }
    Ok(shape[1])
}

/// Evidential head outputs, all recorded on the tape.
pub struct EvidentialOutput<'t, T: Real> {
    /// Dirichlet concentrations `alpha = evidence + 1`, `[B,K,H,W]`.
    pub alpha: DiffValue<'t, T>,
    /// Total concentration `S = sum_k alpha_k`, `[B,1,H,W]`.
    pub strength: DiffValue<'t, T>,
    /// Expected probabilities `alpha / S`, `[B,K,H,W]`.
    pub prob: DiffValue<'t, T>,
    /// Uncertainty mass `u = K / S`, `[B,1,H,W]`.
    pub uncertainty: DiffValue<'t, T>,
    /// Consistency weight `w = 1 - u`, `[B,1,H,W]`.
    pub confidence: DiffValue<'t, T>,
}

impl<'t, T: Real> EvidentialOutput<'t, T> {
    /// Derives every head output from concentrations `alpha >= 1`.
    pub fn from_alpha(alpha: DiffValue<'t, T>) -> Result<Self> {
        let classes = check_logits(alpha.shape())?;
        if !alpha.value().data().iter().all(|a| a.is_finite() && *a >= T::one()) {
            return Err(Error::Domain(
                "evidential concentrations must be finite and >= 1".into(),
            ));
        }
        let strength = alpha.sum_axes(&[1], true)?;
        let strength_full = strength.expand_axis(1, classes)?;
        let prob = alpha.div(&strength_full)?;
        let uncertainty = strength.rdiv_scalar(T::of(classes as f64));
        let confidence = uncertainty.rsub_scalar(T::one());
        Ok(EvidentialOutput { alpha, strength, prob, uncertainty, confidence })
    }

    /// Restricts every output map to the batch slice `[start, start+len)`.
    pub fn narrow_batch(&self, start: usize, len: usize) -> Result<Self> {
        Ok(EvidentialOutput {
            alpha: self.alpha.narrow(0, start, len)?,
            strength: self.strength.narrow(0, start, len)?,
            prob: self.prob.narrow(0, start, len)?,
            uncertainty: self.uncertainty.narrow(0, start, len)?,
            confidence: self.confidence.narrow(0, start, len)?,
        })
    }

    pub fn classes(&self) -> usize {
        self.alpha.shape()[1]
    }
}

/// Evidential head on the tape: logits -> evidence -> Dirichlet outputs.
pub fn evidential_head<'t, T: Real>(
    logits: &DiffValue<'t, T>,
    activation: Activation,
) -> Result<EvidentialOutput<'t, T>> {
    check_logits(logits.shape())?;
    let evidence = match activation {
        Activation::Softplus => logits.softplus(),
        Activation::Relu => logits.relu(),
        Activation::Exp => logits.clamp_max(T::of(EXP_INPUT_CAP)).exp(),
    };
    EvidentialOutput::from_alpha(evidence.add_scalar(T::one()))
}

/// Vanilla head on the tape: class-axis softmax.
pub fn vanilla_head<'t, T: Real>(logits: &DiffValue<'t, T>) -> Result<DiffValue<'t, T>> {
    check_logits(logits.shape())?;
    logits.softmax(1)
}

/// Averages the two heads' probability maps — the fused prediction.
pub fn fuse_probabilities<'t, T: Real>(
    evidential_prob: &DiffValue<'t, T>,
    vanilla_prob: &DiffValue<'t, T>,
) -> Result<DiffValue<'t, T>> {
    Ok(evidential_prob.add(vanilla_prob)?.mul_scalar(T::of(0.5)))
}

/// Tape-free evidential head outputs, for inference and export.
#[derive(Clone, Debug)]
pub struct EvidentialMaps<T> {
    pub alpha: Array<T>,
    pub prob: Array<T>,
    /// `[B,1,H,W]` uncertainty mass.
    pub uncertainty: Array<T>,
    /// `[B,1,H,W]` confidence `1 - u`.
    pub confidence: Array<T>,
}

/// Tape-free evidential head: logits array -> Dirichlet output arrays.
pub fn evidential_maps<T: Real>(
    logits: &Array<T>,
    activation: Activation,
) -> Result<EvidentialMaps<T>> {
    let classes = check_logits(logits.shape())?;
    let alpha = logits.map(|x| activation.apply(x) + T::one());
    let strength = alpha.sum_axes(&[1], true)?;
    let strength_full = strength.expand_axis(1, classes)?;
    let prob = alpha.zip(&strength_full, |a, s| a / s)?;
    let k = T::of(classes as f64);
    let uncertainty = strength.map(|s| k / s);
    let confidence = uncertainty.map(|u| T::one() - u);
    Ok(EvidentialMaps { alpha, prob, uncertainty, confidence })
}

/// Tape-free vanilla head: class-axis softmax of a logits array.
pub fn vanilla_maps<T: Real>(logits: &Array<T>) -> Result<Array<T>> {
    check_logits(logits.shape())?;
    kernels::softmax(logits, 1)
}

/// Averages two probability map arrays.
pub fn fuse_probability_maps<T: Real>(a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "cannot fuse probability maps of shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let half = T::of(0.5);
    a.zip(b, |x, y| (x + y) * half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tape;
    use proptest::prelude::*;

    fn arr(shape: &[usize], data: &[f64]) -> Array<f64> {
        Array::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn zero_logits_softplus_has_known_uncertainty() {
        // e = ln 2 per class, alpha = 1 + ln 2, S = K alpha, u = K/S = 1/(1+ln 2).
        let tape: Tape<f64> = Tape::new();
        let logits = tape.var(Array::zeros(&[1, 2, 1, 1]));
        let out = evidential_head(&logits, Activation::Softplus).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let want_u = 1.0 / (1.0 + ln2);
        assert!((out.uncertainty.value().data()[0] - want_u).abs() < 1e-12);
        assert!((out.confidence.value().data()[0] - (1.0 - want_u)).abs() < 1e-12);
        assert!((out.alpha.value().data()[0] - (1.0 + ln2)).abs() < 1e-12);
        // Expected probabilities are uniform by symmetry.
        assert!((out.prob.value().data()[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_evidence_relu_is_maximally_uncertain() {
        let tape: Tape<f64> = Tape::new();
        let logits = tape.var(Array::full(&[1, 3, 1, 1], -2.0));
        let out = evidential_head(&logits, Activation::Relu).unwrap();
        assert_eq!(out.alpha.value().data(), &[1.0, 1.0, 1.0]);
        assert!((out.uncertainty.value().data()[0] - 1.0).abs() < 1e-15);
        assert!(out.confidence.value().data()[0].abs() < 1e-15);
    }

    #[test]
    fn exp_activation_caps_its_input() {
        let tape = Tape::new();
        let logits = tape.var(arr(&[1, 2, 1, 1], &[50.0, 0.0]));
        let out = evidential_head(&logits, Activation::Exp).unwrap();
        assert!((out.alpha.value().data()[0] - (10.0f64.exp() + 1.0)).abs() < 1e-9);
        assert!((out.alpha.value().data()[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn head_shape_contracts_are_enforced() {
        let tape: Tape<f64> = Tape::new();
        let bad_rank = tape.var(Array::zeros(&[2, 2, 4]));
        assert!(evidential_head(&bad_rank, Activation::Softplus).is_err());
        assert!(vanilla_head(&bad_rank).is_err());
        let one_class = tape.var(Array::zeros(&[1, 1, 4, 4]));
        assert!(evidential_head(&one_class, Activation::Softplus).is_err());
        assert!(vanilla_head(&one_class).is_err());
        let sub_one = tape.var(Array::full(&[1, 2, 1, 1], 0.5));
        assert!(matches!(EvidentialOutput::from_alpha(sub_one), Err(Error::Domain(_))));
    }

    #[test]
    fn tape_and_array_paths_agree() {
        let data: Vec<f64> =
            (0..24).map(|i| ((i * 31 % 17) as f64 - 8.0) / 3.0).collect();
        for activation in [Activation::Softplus, Activation::Relu, Activation::Exp] {
            let logits = arr(&[2, 3, 2, 2], &data);
            let maps = evidential_maps(&logits, activation).unwrap();
            let tape = Tape::new();
            let lv = tape.var(logits.clone());
            let out = evidential_head(&lv, activation).unwrap();
            for (a, b) in out.prob.value().data().iter().zip(maps.prob.data()) {
                assert!((a - b).abs() < 1e-14);
            }
            for (a, b) in out.uncertainty.value().data().iter().zip(maps.uncertainty.data())
            {
                assert!((a - b).abs() < 1e-14);
            }
            let vm = vanilla_maps(&logits).unwrap();
            let vt = vanilla_head(&lv).unwrap();
            for (a, b) in vt.value().data().iter().zip(vm.data()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fusion_averages_probabilities() {
        let a = arr(&[1, 2, 1, 1], &[0.8, 0.2]);
        let b = arr(&[1, 2, 1, 1], &[0.4, 0.6]);
        let f = fuse_probability_maps(&a, &b).unwrap();
        assert_eq!(f.data(), &[0.6000000000000001, 0.4]);
        assert!(fuse_probability_maps(&a, &Array::zeros(&[1, 2, 1, 2])).is_err());
        let tape = Tape::new();
        let av = tape.var(a);
        let bv = tape.var(b);
        let fv = fuse_probabilities(&av, &bv).unwrap();
        for (x, y) in fv.value().data().iter().zip(f.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn narrow_batch_slices_every_map() {
        let tape = Tape::new();
        let logits = tape.var(Array::from_vec(
            vec![3, 2, 1, 1],
            vec![0.0, 1.0, 2.0, -1.0, 0.5, 0.5],
        ).unwrap());
        let out = evidential_head(&logits, Activation::Softplus).unwrap();
        let sliced = out.narrow_batch(1, 2).unwrap();
        assert_eq!(sliced.alpha.shape(), &[2, 2, 1, 1]);
        assert_eq!(sliced.uncertainty.shape(), &[2, 1, 1, 1]);
        assert_eq!(sliced.alpha.value().data(), &out.alpha.value().data()[2..]);
    }

    proptest! {
        #[test]
        fn evidential_invariants_hold(
            logits in proptest::collection::vec(-30.0f64..30.0, 24),
            activation in prop_oneof![
                Just(Activation::Softplus),
                Just(Activation::Relu),
                Just(Activation::Exp),
            ],
        ) {
            let k = 3;
            let maps = evidential_maps(&arr(&[2, k, 2, 2], &logits), activation).unwrap();
            // alpha >= 1 everywhere.
            prop_assert!(maps.alpha.data().iter().all(|&a| a >= 1.0));
            // Probabilities are positive and each pixel's lane sums to 1.
            for b in 0..2 {
                for p in 0..4 {
                    let mut sum = 0.0;
                    for c in 0..k {
                        let v = maps.prob.data()[(b * k + c) * 4 + p];
                        prop_assert!(v > 0.0 && v < 1.0);
                        sum += v;
                    }
                    prop_assert!((sum - 1.0).abs() < 1e-12);
                }
            }
            // u in (0, 1], w = 1 - u in [0, 1).
            for (u, w) in maps.uncertainty.data().iter().zip(maps.confidence.data()) {
                prop_assert!(*u > 0.0 && *u <= 1.0);
                prop_assert!((u + w - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn more_evidence_means_less_uncertainty(
            base in 0.1f64..5.0,
            bump in 0.5f64..20.0,
        ) {
            let low = evidential_maps(
                &Array::full(&[1, 2, 1, 1], base), Activation::Softplus).unwrap();
            let high = evidential_maps(
                &Array::full(&[1, 2, 1, 1], base + bump), Activation::Softplus).unwrap();
            prop_assert!(high.uncertainty.data()[0] < low.uncertainty.data()[0]);
        }
    }
}

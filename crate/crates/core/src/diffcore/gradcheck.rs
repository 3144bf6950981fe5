//! Finite-difference gradient verification.
//!
//! The reverse-mode sweep is validated against central differences: for a
//! scalar function `f` of some parameter arrays, the numeric derivative
//! `(f(x+h) - f(x-h)) / 2h` is compared entry by entry with the analytic
//! gradient. The comparison is relative with an absolute floor, so that
//! truly-zero gradients (dead relu units, clamped probabilities) do not
//! fail on finite-difference noise.
//!
//! Checks run in `f64`; the step defaults to `1e-5`, which balances the
//! `O(h²)` truncation error of the central difference against the `O(ε/h)`
//! rounding error.

use crate::error::{Error, Result};

use super::array::Array;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Pass condition: `|analytic - numeric| <= max(abs, rel * max(|a|, |n|))`.
#[derive(Clone, Copy, Debug)]
pub struct GradTolerance {
    pub rel: f64,
    pub abs: f64,
}

impl GradTolerance {
    pub fn new(rel: f64, abs: f64) -> Self {
        GradTolerance { rel, abs }
    }

    fn passes(&self, analytic: f64, numeric: f64) -> bool {
        (analytic - numeric).abs() <= self.abs.max(self.rel * analytic.abs().max(numeric.abs()))
    }
}

impl Default for GradTolerance {
    /// The standard loss-level tolerance: 1e-4 relative, 1e-7 floor.
    fn default() -> Self {
        GradTolerance { rel: 1e-4, abs: 1e-7 }
    }
}

/// The single worst analytic/numeric pair of a comparison.
#[derive(Clone, Copy, Debug)]
pub struct WorstEntry {
    /// Which parameter array the entry belongs to.
    pub param: usize,
    /// Flat index within that array.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|a - n| / max(|a|, |n|, abs/rel)` — at most `rel` iff the entry passes.
    pub error: f64,
}

/// Central-difference gradient of `f` with respect to every entry of every
/// parameter array. `f` is called with perturbed copies of `params`.
pub fn numeric_gradient<F>(f: F, params: &[Array<f64>], step: f64) -> Result<Vec<Array<f64>>>
where
    F: Fn(&[Array<f64>]) -> Result<f64>,
{
    let mut work: Vec<Array<f64>> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut grad = Array::zeros(params[p].shape());
        for i in 0..params[p].numel() {
            let x = params[p].data()[i];
            work[p].data_mut()[i] = x + step;
            let fp = f(&work)?;
            work[p].data_mut()[i] = x - step;
            let fm = f(&work)?;
            work[p].data_mut()[i] = x;
            grad.data_mut()[i] = (fp - fm) / (2.0 * step);
        }
        grads.push(grad);
    }
    Ok(grads)
}

/// Central difference at selected coordinates only — for large parameter
/// sets where a full sweep would be wasteful. Coordinates are
/// `(param index, flat index)` pairs; the result is parallel to `coords`.
pub fn numeric_gradient_at<F>(
    f: F,
    params: &[Array<f64>],
    coords: &[(usize, usize)],
    step: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&[Array<f64>]) -> Result<f64>,
{
    let mut work: Vec<Array<f64>> = params.to_vec();
    let mut out = Vec::with_capacity(coords.len());
    for &(p, i) in coords {
        if p >= work.len() || i >= work[p].numel() {
            return Err(Error::Contract(format!(
                "gradient coordinate ({p}, {i}) out of range"
            )));
        }
        let x = params[p].data()[i];
        work[p].data_mut()[i] = x + step;
        let fp = f(&work)?;
        work[p].data_mut()[i] = x - step;
        let fm = f(&work)?;
        work[p].data_mut()[i] = x;
        out.push((fp - fm) / (2.0 * step));
    }
    Ok(out)
}

/// Compares analytic and numeric gradients entry by entry. Returns the
/// worst entry on success; fails with a pinpointed message when any entry
/// exceeds the tolerance.
pub fn compare_gradients(
    analytic: &[Array<f64>],
    numeric: &[Array<f64>],
    tol: GradTolerance,
) -> Result<WorstEntry> {
    if analytic.len() != numeric.len() {
        return Err(Error::Contract(format!(
            "gradient set sizes differ: {} vs {}",
            analytic.len(),
            numeric.len()
        )));
    }
    let floor = if tol.rel > 0.0 { tol.abs / tol.rel } else { f64::MAX };
    let mut worst = WorstEntry { param: 0, index: 0, analytic: 0.0, numeric: 0.0, error: 0.0 };
    for (p, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if a.shape() != n.shape() {
            return Err(Error::Shape(format!(
                "gradient {} shapes differ: {:?} vs {:?}",
                p,
                a.shape(),
                n.shape()
            )));
        }
        for (i, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let error = (av - nv).abs() / av.abs().max(nv.abs()).max(floor);
            if error > worst.error {
                worst = WorstEntry { param: p, index: i, analytic: av, numeric: nv, error };
            }
            if !tol.passes(av, nv) {
                return Err(Error::Contract(format!(
                    "gradient mismatch at param {p} index {i}: analytic {av}, numeric {nv} \
                     (error {error:.3e}, tolerance rel {} / abs {})",
                    tol.rel, tol.abs
                )));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::tape::Tape;

    fn arr(shape: &[usize], data: &[f64]) -> Array<f64> {
        Array::from_vec(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_gradient_is_recovered() {
        // f = sum(x²) has gradient 2x; the check must accept the true value
        // and reject a perturbed one.
        let params = [arr(&[3], &[1.0, -2.0, 0.5])];
        let f = |ps: &[Array<f64>]| Ok(ps[0].data().iter().map(|x| x * x).sum());
        let numeric = numeric_gradient(f, &params, DEFAULT_STEP).unwrap();
        let analytic = [arr(&[3], &[2.0, -4.0, 1.0])];
        let worst =
            compare_gradients(&analytic, &numeric, GradTolerance::default()).unwrap();
        assert!(worst.error < 1e-6);

        let wrong = [arr(&[3], &[2.0, -4.0, 1.1])];
        assert!(compare_gradients(&wrong, &numeric, GradTolerance::default()).is_err());
    }

    #[test]
    fn tape_gradients_pass_the_harness() {
        let params = [arr(&[2, 2], &[0.4, -0.3, 1.2, 0.7]), arr(&[1], &[0.25])];
        let f = |ps: &[Array<f64>]| {
            let tape = Tape::new();
            let x = tape.var(ps[0].clone());
            let s = tape.var(ps[1].clone());
            let y = x.softplus().mul(&s)?.exp().mean_all();
            y.item()
        };
        let numeric = numeric_gradient(f, &params, DEFAULT_STEP).unwrap();
        let tape = Tape::new();
        let x = tape.var(params[0].clone());
        let s = tape.var(params[1].clone());
        let loss = x.softplus().mul(&s).unwrap().exp().mean_all();
        let grads = loss.backward().unwrap();
        let analytic = [grads.get(&x).unwrap().clone(), grads.get(&s).unwrap().clone()];
        compare_gradients(&analytic, &numeric, GradTolerance::default()).unwrap();
    }

    #[test]
    fn sparse_coordinates_match_the_dense_sweep() {
        let params = [arr(&[4], &[0.1, 0.2, 0.3, 0.4])];
        let f = |ps: &[Array<f64>]| {
            Ok(ps[0].data().iter().enumerate().map(|(i, x)| (i as f64 + 1.0) * x * x).sum())
        };
        let dense = numeric_gradient(f, &params, DEFAULT_STEP).unwrap();
        let sparse =
            numeric_gradient_at(f, &params, &[(0, 1), (0, 3)], DEFAULT_STEP).unwrap();
        assert!((sparse[0] - dense[0].data()[1]).abs() < 1e-12);
        assert!((sparse[1] - dense[0].data()[3]).abs() < 1e-12);
        assert!(numeric_gradient_at(f, &params, &[(0, 9)], DEFAULT_STEP).is_err());
    }

    #[test]
    fn zero_gradients_tolerate_difference_noise() {
        let analytic = [arr(&[2], &[0.0, 1.0])];
        let numeric = [arr(&[2], &[3e-8, 1.0 + 5e-5])];
        compare_gradients(&analytic, &numeric, GradTolerance::default()).unwrap();
    }
}

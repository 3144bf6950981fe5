//! Independent numerical oracles for the integration suite.
//!
//! Everything in this module is deliberately written from first principles —
//! its own Legendre nodes, its own Beta normaliser, its own all-pairs
//! distance scan, its own percentile — so that agreement with the library is
//! evidence of correctness rather than of shared code. None of it calls the
//! library's special functions, distance transforms, or reductions.

use evico::losses::LabelMap;
use evico::metrics::BinaryMask;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

// ---------------------------------------------------------------------------
// Monte-Carlo Dirichlet expectation
// ---------------------------------------------------------------------------

/// Monte-Carlo estimate of `E_{p ~ Dir(alpha)}[ -ln p[label] ]`, the expected
/// cross-entropy under a Dirichlet, via the Gamma construction: independent
/// `G_k ~ Gamma(alpha_k, 1)` normalised by their sum are Dirichlet-distributed.
pub fn mc_dirichlet_expected_ce(
    alpha: &[f64],
    label: usize,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration"))
        .collect();
    let mut acc = 0.0;
    for _ in 0..samples {
        let draws: Vec<f64> = gammas.iter().map(|g| g.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        acc += -(draws[label] / total).ln();
    }
    acc / samples as f64
}

// ---------------------------------------------------------------------------
// Gauss–Legendre quadrature, from scratch
// ---------------------------------------------------------------------------

/// Value and derivative of the Legendre polynomial `P_n` at `x`, by the
/// three-term recurrence (`n >= 1`, `|x| < 1`).
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, x);
    for k in 2..=n {
        let next = ((2 * k - 1) as f64 * x * cur - (k - 1) as f64 * prev) / k as f64;
        prev = cur;
        cur = next;
    }
    let derivative = n as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, derivative)
}

/// `n`-point Gauss–Legendre nodes and weights on `[-1, 1]`, each node found
/// by Newton iteration from the classical cosine initial guess.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "a quadrature rule needs at least two nodes");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre integral of `f` over `[0, 1]`: `panels` equal
/// sub-intervals, `points` nodes each.
pub fn integrate_unit<F: Fn(f64) -> f64>(f: F, panels: usize, points: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(points);
    let width = 1.0 / panels as f64;
    let mut total = 0.0;
    for panel in 0..panels {
        let left = panel as f64 * width;
        for (&t, &w) in nodes.iter().zip(&weights) {
            // Map [-1, 1] onto [left, left + width].
            let x = left + 0.5 * width * (t + 1.0);
            total += 0.5 * width * w * f(x);
        }
    }
    total
}

/// `KL[Beta(a, b) || Uniform(0,1)]` by quadrature alone. With `g(x) =
/// x^(a-1) (1-x)^(b-1)` and moments `I0 = ∫g`, `I1 = ∫g ln g`, the
/// divergence is `I1/I0 - ln I0`; the normaliser `I0` is itself integrated
/// rather than taken from any gamma-function identity. Requires `a, b >= 1`
/// so the integrand is bounded.
pub fn beta_kl_from_uniform_quadrature(a: f64, b: f64) -> f64 {
    assert!(a >= 1.0 && b >= 1.0, "quadrature oracle expects concentrations >= 1");
    let ln_g = |x: f64| (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln();
    let g = |x: f64| ln_g(x).exp();
    let i0 = integrate_unit(g, 64, 24);
    let i1 = integrate_unit(|x| g(x) * ln_g(x), 64, 24);
    i1 / i0 - i0.ln()
}

// ---------------------------------------------------------------------------
// Brute-force surface distances
// ---------------------------------------------------------------------------

/// Boundary pixels by direct definition: foreground pixels with a
/// 4-neighbour that is background or off the grid.
fn boundary(mask: &BinaryMask) -> Vec<(f64, f64)> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            let exposed = y == 0
                || x == 0
                || y == h - 1
                || x == w - 1
                || !mask.get(y - 1, x)
                || !mask.get(y + 1, x)
                || !mask.get(y, x - 1)
                || !mask.get(y, x + 1);
            if exposed {
                out.push((y as f64, x as f64));
            }
        }
    }
    out
}

/// Distances from every point of `from` to its nearest point of `to`, by an
/// exhaustive quadratic scan.
fn nearest_distances(from: &[(f64, f64)], to: &[(f64, f64)]) -> Vec<f64> {
    from.iter()
        .map(|&(y, x)| {
            to.iter()
                .map(|&(ty, tx)| {
                    let (dy, dx) = (y - ty, x - tx);
                    (dy * dy + dx * dx).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Linear-interpolation percentile (`q` in [0, 1]) of an unsorted slice,
/// defined on the rank scale `q * (n - 1)`.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Average symmetric surface distance and 95th-percentile Hausdorff
/// distance by brute force; `None` when either boundary is empty. With
/// `pooled`, both statistics are taken over the union multiset of directed
/// distances; otherwise asd averages the two directed means and hd95 is the
/// larger of the two directed percentiles.
pub fn brute_force_surface(
    pred: &BinaryMask,
    gt: &BinaryMask,
    pooled: bool,
) -> Option<(f64, f64)> {
    let pb = boundary(pred);
    let gb = boundary(gt);
    if pb.is_empty() || gb.is_empty() {
        return None;
    }
    let p_to_g = nearest_distances(&pb, &gb);
    let g_to_p = nearest_distances(&gb, &pb);
    let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
    if pooled {
        let mut all = p_to_g;
        all.extend_from_slice(&g_to_p);
        Some((mean(&all), percentile(&all, 0.95)))
    } else {
        let asd = 0.5 * (mean(&p_to_g) + mean(&g_to_p));
        let hd95 = percentile(&p_to_g, 0.95).max(percentile(&g_to_p, 0.95));
        Some((asd, hd95))
    }
}

/// Brute-force Dice and Jaccard from raw pixel counts (both-empty pairs
/// count as perfect agreement, matching the library convention).
pub fn brute_force_overlap(pred: &BinaryMask, gt: &BinaryMask) -> (f64, f64) {
    let (h, w) = (pred.height(), pred.width());
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (pred.get(y, x), gt.get(y, x));
            p += a as usize;
            g += b as usize;
            both += (a && b) as usize;
        }
    }
    if p + g == 0 {
        return (1.0, 1.0);
    }
    let dice = 2.0 * both as f64 / (p + g) as f64;
    let jaccard = both as f64 / (p + g - both) as f64;
    (dice, jaccard)
}

// ---------------------------------------------------------------------------
// Random masks
// ---------------------------------------------------------------------------

/// A random binary label map: half the draws are per-pixel coin flips at a
/// random density, half are a filled ellipse, so the oracle comparison sees
/// both scattered and structured boundaries. Never empty.
pub fn random_label_map(h: usize, w: usize, rng: &mut ChaCha8Rng) -> LabelMap {
    let mut data = vec![0u8; h * w];
    if rng.random_range(0..2) == 0 {
        let density = rng.random_range(0.05..0.5);
        for v in data.iter_mut() {
            *v = (rng.random_range(0.0..1.0) < density) as u8;
        }
    } else {
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let ry = rng.random_range(1.0..h as f64 / 2.0);
        let rx = rng.random_range(1.0..w as f64 / 2.0);
        for y in 0..h {
            for x in 0..w {
                let dy = (y as f64 - cy) / ry;
                let dx = (x as f64 - cx) / rx;
                data[y * w + x] = (dy * dy + dx * dx <= 1.0) as u8;
            }
        }
    }
    if data.iter().all(|&v| v == 0) {
        data[rng.random_range(0..h * w)] = 1;
    }
    LabelMap::new(h, w, 2, data).expect("valid map")
}

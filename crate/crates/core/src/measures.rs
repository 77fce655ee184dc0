//! Discrete probability measures on finite point supports.
//!
//! A [`DiscreteMeasure`] is a probability vector together with the points it
//! charges. Measures can be read from a small JSON format, sampled from
//! one-dimensional Gaussian mixtures, or built from grayscale images where
//! each positive pixel becomes a support point.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a probability vector.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Shannon entropy `-sum p log p` of a weight vector, with `0 log 0 = 0`.
pub fn entropy(weights: &[f64]) -> f64 {
    let mut h = 0.0;
    for &w in weights {
        if w > 0.0 {
            h -= w * w.ln();
        }
    }
    h
}

/// Rescales a nonnegative vector to unit mass.
pub fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    for (i, &w) in weights.iter().enumerate() {
        if !w.is_finite() {
            return Err(Error::validation(format!("weight at index {i} is not finite")));
        }
        if w < 0.0 {
            return Err(Error::validation(format!("weight at index {i} is negative ({w})")));
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::validation(format!(
            "all {} weights are zero; need at least one positive entry (index 0..{})",
            weights.len(),
            weights.len()
        )));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

/// A probability vector on a finite set of points in `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    support: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validates an already-normalized measure.
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::check_support(&support, weights.len())?;
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!("weight at index {i} is invalid ({w})")));
            }
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::validation(format!(
                "weights sum to {total}, not 1 within {MASS_TOLERANCE:e}"
            )));
        }
        Ok(Self { support, weights })
    }

    /// Builds a measure from unnormalized nonnegative weights.
    pub fn from_unnormalized(support: Vec<Vec<f64>>, weights: &[f64]) -> Result<Self> {
        Self::check_support(&support, weights.len())?;
        let weights = normalize(weights)?;
        Ok(Self { support, weights })
    }

    /// Uniform empirical measure on the given points.
    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        Self::from_unnormalized(support, &vec![1.0; n])
    }

    /// Unit mass at a single point.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    fn check_support(support: &[Vec<f64>], n_weights: usize) -> Result<()> {
        if support.is_empty() {
            return Err(Error::validation("measure has an empty support"));
        }
        if support.len() != n_weights {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                got: n_weights,
            });
        }
        let dim = support[0].len();
        if dim == 0 {
            return Err(Error::validation("support points must have dimension at least 1"));
        }
        for (i, p) in support.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::validation(format!(
                    "support point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(format!("support point {i} is not finite")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.weights)
    }

    /// Drops zero-weight points. Returns the pruned measure and, for each kept
    /// point, its index in `self`.
    pub fn pruned(&self) -> (DiscreteMeasure, Vec<usize>) {
        let kept: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        let measure = DiscreteMeasure {
            support: kept.iter().map(|&i| self.support[i].clone()).collect(),
            weights: kept.iter().map(|&i| self.weights[i]).collect(),
        };
        (measure, kept)
    }

    pub fn has_zero_weights(&self) -> bool {
        self.weights.contains(&0.0)
    }

    pub fn to_file(&self) -> MeasureFile {
        MeasureFile {
            support: self.support.clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: MeasureFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        file.into_measure()
            .map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.to_file())
            .map_err(|e| Error::parse(path, e.to_string()))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// On-disk form of a measure: `{"support": [[x1, ...], ...], "weights": [...]}`.
///
/// Weights need not be normalized; they are rescaled on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasureFile {
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl MeasureFile {
    pub fn into_measure(self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::from_unnormalized(self.support, &self.weights)
    }
}

/// The ordered vertex set of a multimarginal problem.
#[derive(Debug, Clone)]
pub struct MeasureCollection {
    measures: Vec<DiscreteMeasure>,
}

impl MeasureCollection {
    pub fn new(measures: Vec<DiscreteMeasure>) -> Result<Self> {
        if measures.len() < 2 {
            return Err(Error::validation(format!(
                "need at least 2 measures, got {}",
                measures.len()
            )));
        }
        let dim = measures[0].dim();
        for (k, m) in measures.iter().enumerate() {
            if m.dim() != dim {
                return Err(Error::validation(format!(
                    "measure {} has dimension {}, expected {dim}",
                    k + 1,
                    m.dim()
                )));
            }
        }
        Ok(Self { measures })
    }

    /// Number of measures `s`.
    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim()
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn get(&self, sigma: usize) -> &DiscreteMeasure {
        &self.measures[sigma]
    }

    /// Support sizes `(n_1, ..., n_s)`.
    pub fn shape(&self) -> Vec<usize> {
        self.measures.iter().map(DiscreteMeasure::len).collect()
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.measures.iter().map(DiscreteMeasure::entropy).collect()
    }

    /// Reorders the vertices; `order[k]` is the old index of new vertex `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.len()];
        for &o in order {
            if o >= self.len() || std::mem::replace(&mut seen[o], true) {
                return Err(Error::validation("order is not a permutation"));
            }
        }
        if order.len() != self.len() {
            return Err(Error::validation("order is not a permutation"));
        }
        Self::new(order.iter().map(|&o| self.measures[o].clone()).collect())
    }
}

/// One Gaussian component of a univariate mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub mean: f64,
    pub std: f64,
    pub weight: f64,
}

/// Draws `n` points from a univariate Gaussian mixture restricted to
/// `interval` and returns their uniform empirical measure.
///
/// Out-of-interval draws are rejected and redrawn; after 10 000 consecutive
/// rejections the draw is clamped to the interval.
pub fn sample_gmm<R: Rng + ?Sized>(
    components: &[GmmComponent],
    n: usize,
    interval: (f64, f64),
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    const MAX_REJECTIONS: usize = 10_000;

    if components.is_empty() {
        return Err(Error::validation("gaussian mixture has no components"));
    }
    if n == 0 {
        return Err(Error::validation("sample count must be at least 1"));
    }
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::validation(format!("invalid interval [{lo}, {hi}]")));
    }
    let mut mix = Vec::with_capacity(components.len());
    for (k, c) in components.iter().enumerate() {
        if !(c.weight >= 0.0 && c.weight.is_finite()) {
            return Err(Error::validation(format!("component {k} has invalid weight")));
        }
        mix.push(c.weight);
    }
    let total: f64 = mix.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!(
            "mixture weights sum to {total}, not 1"
        )));
    }
    let normals = components
        .iter()
        .enumerate()
        .map(|(k, c)| {
            Normal::new(c.mean, c.std)
                .ok()
                .filter(|_| c.std > 0.0 && c.mean.is_finite())
                .ok_or_else(|| Error::validation(format!("component {k} has invalid mean/std")))
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = WeightedIndex::new(&mix).map_err(|e| Error::validation(e.to_string()))?;

    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x = f64::NAN;
        for _ in 0..MAX_REJECTIONS {
            x = normals[pick.sample(rng)].sample(rng);
            if (lo..=hi).contains(&x) {
                break;
            }
        }
        points.push(vec![x.clamp(lo, hi)]);
    }
    DiscreteMeasure::uniform(points)
}

/// Seeded convenience wrapper around [`sample_gmm`].
pub fn sample_gmm_seeded(
    components: &[GmmComponent],
    n: usize,
    interval: (f64, f64),
    seed: u64,
) -> Result<DiscreteMeasure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_gmm(components, n, interval, &mut rng)
}

/// Converts a grayscale grid to a measure on the `(row, col)` coordinates of
/// its positive pixels, in row-major order.
pub fn image_to_measure(grid: &[Vec<f64>]) -> Result<DiscreteMeasure> {
    let width = grid.first().map_or(0, Vec::len);
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (r, row) in grid.iter().enumerate() {
        if row.len() != width {
            return Err(Error::validation(format!(
                "image row {r} has {} columns, expected {width}",
                row.len()
            )));
        }
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::validation(format!("pixel ({r}, {c}) is invalid ({v})")));
            }
            if v > 0.0 {
                support.push(vec![r as f64, c as f64]);
                weights.push(v);
            }
        }
    }
    if support.is_empty() {
        return Err(Error::validation("image has no positive pixels"));
    }
    DiscreteMeasure::from_unnormalized(support, &weights)
}

/// Parses a grid written as comma- or whitespace-separated rows.
pub fn parse_csv_grid(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, line)| {
            line.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        Error::validation(format!("line {}: bad number {t:?}", ln + 1))
                    })
                })
                .collect()
        })
        .collect()
}

/// Parses a plain-text PGM (`P2`) image.
pub fn parse_pgm(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err(Error::validation("not a P2 PGM file"));
    }
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["width", "height", "maxval"]) {
        *slot = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::validation(format!("PGM header: missing {name}")))?;
    }
    let [width, height, _maxval] = header;
    let mut grid = Vec::with_capacity(height);
    for r in 0..height {
        let mut row = Vec::with_capacity(width);
        for c in 0..width {
            let v: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::validation(format!("PGM: missing pixel ({r}, {c})")))?;
            row.push(v);
        }
        grid.push(row);
    }
    Ok(grid)
}

/// Reads an image grid from a PGM (P2) or CSV file, sniffing the format.
pub fn read_image(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let grid = if text.trim_start().starts_with("P2") {
        parse_pgm(&text)
    } else {
        parse_csv_grid(&text)
    };
    grid.map_err(|e| Error::parse(path, e.to_string()))
}

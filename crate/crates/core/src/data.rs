//! Synthetic desk-scale datasets and sample-quality metrics.
//!
//! A 2-D Gaussian ring stands in for image data; 8x8 binary glyphs support
//! the pixel-flip debugging scenario. Mode coverage and histogram TVD
//! replace classifier-based sample-quality scores.

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::Write;

/// Labeled points plus a record of how they were synthesized.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// `n x d` points.
    pub points: Tensor,
    /// Labels in `[0, num_classes)`.
    pub labels: Vec<u32>,
    pub num_classes: u32,
    /// Generator name and seed, e.g. `"ring(modes=8,...)#42"`.
    pub provenance: String,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if self.points.rows() != self.labels.len() {
            return Err(Error::ShapeMismatch {
                context: "dataset points vs labels".into(),
                expected: format!("{} rows", self.labels.len()),
                actual: format!("{} rows", self.points.rows()),
            });
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// SHA-256 over points and labels; recorded in run manifests.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in self.points.data() {
            h.update(v.to_le_bytes());
        }
        for l in &self.labels {
            h.update(l.to_le_bytes());
        }
        format!("{:x}", h.finalize())
    }

    /// Rows of the given indices as a batch matrix plus the labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<u32>) {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.points.row(i));
            labels.push(self.labels[i]);
        }
        (Tensor::new(vec![indices.len(), d], data), labels)
    }

    /// Write `x0,...,xd-1,label` CSV.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        write_samples_csv(w, &self.points, &self.labels)
    }
}

/// CSV dump shared by dataset and generated-sample exports.
pub fn write_samples_csv(w: &mut impl Write, points: &Tensor, labels: &[u32]) -> Result<()> {
    let d = points.cols();
    let header: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    writeln!(w, "{},label", header.join(","))?;
    for (i, &label) in labels.iter().enumerate() {
        let row: Vec<String> = points.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{},{}", row.join(","), label)?;
    }
    Ok(())
}

/// Centers of the `modes`-mode ring of the given radius.
pub fn ring_centers(modes: u32, radius: f64) -> Vec<[f64; 2]> {
    (0..modes)
        .map(|k| {
            let angle = TAU * k as f64 / modes as f64;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

/// 2-D Gaussian mixture on a circle; the label is the mode index.
pub fn make_ring(
    modes: u32,
    n_per_mode: usize,
    radius: f64,
    std: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if modes == 0 {
        return Err(Error::InvalidConfig("ring needs at least one mode".into()));
    }
    let centers = ring_centers(modes, radius);
    let mut rng = seeded(seed);
    let n = modes as usize * n_per_mode;
    let mut data = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..n_per_mode {
            data.push(c[0] + std * rng.sample::<f64, _>(StandardNormal));
            data.push(c[1] + std * rng.sample::<f64, _>(StandardNormal));
            labels.push(k as u32);
        }
    }
    Ok(LabeledDataset {
        points: Tensor::new(vec![n, 2], data),
        labels,
        num_classes: modes,
        provenance: format!("ring(modes={modes},n_per_mode={n_per_mode},radius={radius},std={std})#{seed}"),
    })
}

/// Hand-drawn 8x8 binary stroke patterns; intensity deliberately below 0.5
/// so a pixel flip moves the mean to the other side.
const GLYPH_TEMPLATES: [[u8; 8]; 8] = [
    // vertical bar
    [0x18, 0x18, 0x18, 0x18, 0x18, 0x18, 0x18, 0x18],
    // horizontal bar
    [0x00, 0x00, 0x00, 0xff, 0xff, 0x00, 0x00, 0x00],
    // diagonal
    [0x80, 0x40, 0x20, 0x10, 0x08, 0x04, 0x02, 0x01],
    // box outline
    [0xff, 0x81, 0x81, 0x81, 0x81, 0x81, 0x81, 0xff],
    // cross
    [0x18, 0x18, 0x18, 0xff, 0xff, 0x18, 0x18, 0x18],
    // top-left corner
    [0xf8, 0xf8, 0x18, 0x18, 0x00, 0x00, 0x00, 0x00],
    // two dots
    [0x00, 0x66, 0x66, 0x00, 0x00, 0x66, 0x66, 0x00],
    // anti-diagonal
    [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80],
];

pub const GLYPH_DIM: usize = 64;

fn glyph_template(class: u32) -> Vec<f64> {
    let rows = GLYPH_TEMPLATES[class as usize % GLYPH_TEMPLATES.len()];
    let mut v = Vec::with_capacity(GLYPH_DIM);
    for row in rows {
        for bit in (0..8).rev() {
            v.push(((row >> bit) & 1) as f64);
        }
    }
    v
}

/// Binary template glyphs with per-pixel flip noise; `flipped` applies
/// `x -> 1 - x` to every pixel.
pub fn make_glyphs(
    num_classes: u32,
    n: usize,
    noise: f64,
    seed: u64,
    flipped: bool,
) -> Result<LabeledDataset> {
    if num_classes == 0 || num_classes as usize > GLYPH_TEMPLATES.len() {
        return Err(Error::InvalidConfig(format!(
            "glyph classes must be 1..={}, got {num_classes}",
            GLYPH_TEMPLATES.len()
        )));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidConfig(format!(
            "glyph noise must be in [0, 1], got {noise}"
        )));
    }
    let mut rng = seeded(seed);
    let mut data = Vec::with_capacity(n * GLYPH_DIM);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i as u32) % num_classes;
        let mut pix = glyph_template(class);
        for p in &mut pix {
            if noise > 0.0 && rng.random::<f64>() < noise {
                *p = 1.0 - *p;
            }
            if flipped {
                *p = 1.0 - *p;
            }
        }
        data.extend_from_slice(&pix);
        labels.push(class);
    }
    Ok(LabeledDataset {
        points: Tensor::new(vec![n, GLYPH_DIM], data),
        labels,
        num_classes,
        provenance: format!("glyphs(classes={num_classes},n={n},noise={noise},flipped={flipped})#{seed}"),
    })
}

/// Mean over all entries; for glyphs this is the mean pixel intensity.
pub fn mean_intensity(points: &Tensor) -> f64 {
    points.data().iter().sum::<f64>() / points.len() as f64
}

/// A mode counts as covered when at least 1% of samples land within
/// `capture_radius` of its center. The second value is the share of
/// samples within `capture_radius` of any center.
pub fn mode_coverage(
    samples: &Tensor,
    centers: &[[f64; 2]],
    capture_radius: f64,
) -> (u32, f64) {
    assert!(!centers.is_empty(), "mode_coverage needs centers");
    let n = samples.rows();
    let mut per_mode = vec![0usize; centers.len()];
    let mut near_any = 0usize;
    for i in 0..n {
        let p = samples.row(i);
        let mut close = false;
        for (k, c) in centers.iter().enumerate() {
            let d2 = (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2);
            if d2 <= capture_radius * capture_radius {
                per_mode[k] += 1;
                close = true;
            }
        }
        if close {
            near_any += 1;
        }
    }
    let threshold = (n as f64 * 0.01).max(1.0);
    let covered = per_mode
        .iter()
        .filter(|&&c| c as f64 >= threshold)
        .count() as u32;
    (covered, near_any as f64 / n.max(1) as f64)
}

/// Fixed 2-D histogram grid shared by both sample sets.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn square(half_extent: f64, bins: usize) -> Self {
        GridSpec {
            x_min: -half_extent,
            x_max: half_extent,
            y_min: -half_extent,
            y_max: half_extent,
            nx: bins,
            ny: bins,
        }
    }

    fn bin(&self, x: f64, y: f64) -> usize {
        let fx = ((x - self.x_min) / (self.x_max - self.x_min)).clamp(0.0, 1.0);
        let fy = ((y - self.y_min) / (self.y_max - self.y_min)).clamp(0.0, 1.0);
        let ix = ((fx * self.nx as f64) as usize).min(self.nx - 1);
        let iy = ((fy * self.ny as f64) as usize).min(self.ny - 1);
        iy * self.nx + ix
    }

    fn histogram(&self, samples: &Tensor) -> Vec<f64> {
        let mut h = vec![0.0; self.nx * self.ny];
        let n = samples.rows();
        for i in 0..n {
            let p = samples.row(i);
            h[self.bin(p[0], p[1])] += 1.0 / n as f64;
        }
        h
    }
}

/// Total-variation distance between the 2-D histograms of two sample sets
/// on a fixed grid. Points outside the box clamp to edge bins, so mass is
/// conserved and the triangle inequality holds.
pub fn hist_tvd(samples_a: &Tensor, samples_b: &Tensor, grid: &GridSpec) -> f64 {
    let ha = grid.histogram(samples_a);
    let hb = grid.histogram(samples_b);
    0.5 * ha
        .iter()
        .zip(&hb)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// Multinomial logistic-regression probe: fit on generated labeled data,
/// report accuracy on held-out real data. Desk-scale stand-in for a
/// downstream-classifier utility score.
pub fn logistic_probe(train: &LabeledDataset, test: &LabeledDataset) -> Result<f64> {
    train.validate()?;
    test.validate()?;
    if train.dim() != test.dim() {
        return Err(Error::ShapeMismatch {
            context: "probe train vs test".into(),
            expected: format!("dim {}", train.dim()),
            actual: format!("dim {}", test.dim()),
        });
    }
    let classes = train.num_classes.max(test.num_classes) as usize;
    let d = train.dim();
    // Plain batch gradient descent on softmax cross-entropy.
    let mut w = vec![0.0; (d + 1) * classes];
    let n = train.len();
    let lr = 0.5;
    for _ in 0..300 {
        let mut grad = vec![0.0; w.len()];
        for i in 0..n {
            let x = train.points.row(i);
            let mut logits = vec![0.0; classes];
            for (c, logit) in logits.iter_mut().enumerate() {
                let mut acc = w[d * classes + c]; // bias
                for (j, &xj) in x.iter().enumerate() {
                    acc += w[j * classes + c] * xj;
                }
                *logit = acc;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for c in 0..classes {
                let p = exps[c] / z;
                let t = if c as u32 == train.labels[i] { 1.0 } else { 0.0 };
                let e = (p - t) / n as f64;
                for (j, &xj) in x.iter().enumerate() {
                    grad[j * classes + c] += e * xj;
                }
                grad[d * classes + c] += e;
            }
        }
        for (wv, g) in w.iter_mut().zip(&grad) {
            *wv -= lr * g;
        }
    }
    let mut correct = 0usize;
    for i in 0..test.len() {
        let x = test.points.row(i);
        let mut best = (f64::NEG_INFINITY, 0u32);
        for c in 0..classes {
            let mut acc = w[d * classes + c];
            for (j, &xj) in x.iter().enumerate() {
                acc += w[j * classes + c] * xj;
            }
            if acc > best.0 {
                best = (acc, c as u32);
            }
        }
        if best.1 == test.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_single_mode_zero_std_is_degenerate() {
        let d = make_ring(1, 5, 2.0, 0.0, 1).unwrap();
        for i in 0..d.len() {
            assert_eq!(d.points.row(i), &[2.0, 0.0]);
        }
    }

    #[test]
    fn ring_centers_at_expected_angles() {
        let centers = ring_centers(8, 2.0);
        for (k, c) in centers.iter().enumerate() {
            let angle = TAU * k as f64 / 8.0;
            assert!((c[0] - 2.0 * angle.cos()).abs() < 1e-12);
            assert!((c[1] - 2.0 * angle.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn ring_mode_means_concentrate() {
        let (modes, n_per, std) = (8u32, 500usize, 0.05);
        let d = make_ring(modes, n_per, 2.0, std, 33).unwrap();
        let centers = ring_centers(modes, 2.0);
        for k in 0..modes {
            let mut mean = [0.0, 0.0];
            let mut count = 0.0;
            for i in 0..d.len() {
                if d.labels[i] == k {
                    mean[0] += d.points.at(i, 0);
                    mean[1] += d.points.at(i, 1);
                    count += 1.0;
                }
            }
            mean[0] /= count;
            mean[1] /= count;
            let bound = 4.0 * std / (n_per as f64).sqrt();
            let c = centers[k as usize];
            assert!((mean[0] - c[0]).abs() < bound, "mode {k} x off");
            assert!((mean[1] - c[1]).abs() < bound, "mode {k} y off");
        }
    }

    #[test]
    fn datasets_deterministic_per_seed() {
        let a = make_ring(4, 10, 2.0, 0.1, 7).unwrap();
        let b = make_ring(4, 10, 2.0, 0.1, 7).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.content_hash(), b.content_hash());
        let c = make_ring(4, 10, 2.0, 0.1, 8).unwrap();
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn glyphs_noiseless_are_templates() {
        let d = make_glyphs(4, 8, 0.0, 5, false).unwrap();
        for i in 0..8 {
            let expect = glyph_template(i as u32 % 4);
            assert_eq!(d.points.row(i), expect.as_slice());
        }
    }

    #[test]
    fn glyph_flip_is_involution() {
        let a = make_glyphs(4, 12, 0.3, 9, false).unwrap();
        let b = make_glyphs(4, 12, 0.3, 9, true).unwrap();
        for (x, y) in a.points.data().iter().zip(b.points.data()) {
            assert_eq!(*x, 1.0 - *y);
        }
    }

    #[test]
    fn flipped_mean_is_one_minus_clean_mean() {
        let a = make_glyphs(4, 40, 0.05, 3, false).unwrap();
        let b = make_glyphs(4, 40, 0.05, 3, true).unwrap();
        let (ma, mb) = (mean_intensity(&a.points), mean_intensity(&b.points));
        assert!((ma + mb - 1.0).abs() < 1e-12);
        assert!(ma < 0.5 && mb > 0.5);
    }

    #[test]
    fn coverage_of_centers_is_total() {
        let centers = ring_centers(8, 2.0);
        let rows: Vec<Vec<f64>> = centers.iter().map(|c| vec![c[0], c[1]]).collect();
        let samples = Tensor::from_rows(&rows);
        let (covered, frac) = mode_coverage(&samples, &centers, 0.3);
        assert_eq!(covered, 8);
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn coverage_single_center() {
        let centers = ring_centers(8, 2.0);
        let samples = Tensor::from_rows(&vec![vec![2.0, 0.0]; 100]);
        let (covered, frac) = mode_coverage(&samples, &centers, 0.3);
        assert_eq!(covered, 1);
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn coverage_uniform_box_matches_area_ratio() {
        // Monte-Carlo oracle: samples uniform on [-4,4]^2, one capture disc
        // of radius r around each of 8 ring centers; expected fraction is
        // 8 * pi r^2 / 64 when discs are disjoint and inside the box.
        let centers = ring_centers(8, 2.0);
        let r = 0.35;
        let mut rng = seeded(20);
        let n = 200_000;
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            rows.push(vec![
                8.0 * rng.random::<f64>() - 4.0,
                8.0 * rng.random::<f64>() - 4.0,
            ]);
        }
        let samples = Tensor::from_rows(&rows);
        let (_, frac) = mode_coverage(&samples, &centers, r);
        let expect = 8.0 * std::f64::consts::PI * r * r / 64.0;
        assert!((frac - expect).abs() < 0.01, "{frac} vs {expect}");
    }

    #[test]
    fn tvd_identical_zero_disjoint_one() {
        let grid = GridSpec::square(4.0, 16);
        let a = Tensor::from_rows(&[vec![1.0, 1.0], vec![-1.0, 2.0]]);
        let b = Tensor::from_rows(&[vec![-3.0, -3.0], vec![3.0, -3.0]]);
        assert_eq!(hist_tvd(&a, &a, &grid), 0.0);
        assert_eq!(hist_tvd(&a, &b, &grid), 1.0);
    }

    #[test]
    fn tvd_two_draws_same_distribution_small() {
        let grid = GridSpec::square(4.0, 16);
        let a = make_ring(8, 1250, 2.0, 0.2, 100).unwrap();
        let b = make_ring(8, 1250, 2.0, 0.2, 200).unwrap();
        let t = hist_tvd(&a.points, &b.points, &grid);
        assert!(t < 0.2, "tvd {t}");
    }

    #[test]
    fn tvd_symmetric_triangle() {
        let grid = GridSpec::square(4.0, 8);
        let a = make_ring(4, 50, 2.0, 0.3, 1).unwrap().points;
        let b = make_ring(4, 50, 2.0, 0.3, 2).unwrap().points;
        let c = make_ring(4, 50, 2.0, 0.3, 3).unwrap().points;
        let (ab, ba) = (hist_tvd(&a, &b, &grid), hist_tvd(&b, &a, &grid));
        assert_eq!(ab, ba);
        let (ac, cb) = (hist_tvd(&a, &c, &grid), hist_tvd(&c, &b, &grid));
        assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn coverage_permutation_invariant() {
        let centers = ring_centers(4, 2.0);
        let samples = make_ring(4, 25, 2.0, 0.1, 6).unwrap().points;
        let (c1, f1) = mode_coverage(&samples, &centers, 0.4);
        // Reverse rows and centers.
        let rows: Vec<Vec<f64>> = (0..samples.rows())
            .rev()
            .map(|i| samples.row(i).to_vec())
            .collect();
        let rev_samples = Tensor::from_rows(&rows);
        let rev_centers: Vec<[f64; 2]> = centers.iter().rev().cloned().collect();
        let (c2, f2) = mode_coverage(&rev_samples, &rev_centers, 0.4);
        assert_eq!(c1, c2);
        assert_eq!(f1, f2);
    }

    #[test]
    fn csv_round_shape() {
        let d = make_ring(2, 3, 1.0, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x0,x1,label");
        assert_eq!(lines.count(), 6);
    }

    #[test]
    fn probe_separates_ring_labels() {
        let train = make_ring(4, 100, 2.0, 0.1, 41).unwrap();
        let test = make_ring(4, 50, 2.0, 0.1, 42).unwrap();
        let acc = logistic_probe(&train, &test).unwrap();
        assert!(acc > 0.9, "probe accuracy {acc}");
    }
}

//! k-means segmentation of the DAB rendering inside the tissue mask, with
//! Davies-Bouldin model selection and darkest-cluster extraction.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{GrayImage, RgbImage};
use crate::mask::BinaryMask;
use crate::stats::mean_std;

const STD_FLOOR: f64 = 1e-6;

/// Standardized per-pixel features of the masked region.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Rows z-scored per column.
    pub values: Vec<[f64; 3]>,
    /// `(x, y)` of each row in the source image.
    pub pixel_index: Vec<(u32, u32)>,
    /// Display intensity of each row, used to order clusters.
    pub intensity: Vec<u8>,
    /// Column means before standardization.
    pub raw_mean: [f64; 3],
    /// Column standard deviations before standardization (unfloored).
    pub raw_std: [f64; 3],
}

impl FeatureSet {
    /// Standardizes raw rows column by column (population std, floored).
    pub fn from_raw(raw: Vec<[f64; 3]>, intensity: Vec<u8>, pixel_index: Vec<(u32, u32)>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyMask);
        }
        if intensity.len() != raw.len() || pixel_index.len() != raw.len() {
            return Err(Error::DegenerateInput("feature, intensity and index lengths differ".into()));
        }
        let mut raw_mean = [0.0; 3];
        let mut raw_std = [0.0; 3];
        for c in 0..3 {
            let (m, s) = mean_std(raw.iter().map(|r| r[c]));
            raw_mean[c] = m;
            raw_std[c] = s;
        }
        let values = raw
            .iter()
            .map(|r| [0, 1, 2].map(|c| (r[c] - raw_mean[c]) / raw_std[c].max(STD_FLOOR)))
            .collect();
        Ok(Self {
            values,
            pixel_index,
            intensity,
            raw_mean,
            raw_std,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Features from the masked pixels of the DAB rendering; intensity is the
/// luminance of each pixel.
pub fn extract_features(dab_rgb: &RgbImage, mask: &BinaryMask) -> Result<FeatureSet> {
    let gray = crate::image::to_gray(dab_rgb);
    extract_features_with_intensity(dab_rgb, &gray, mask)
}

/// Features from the masked pixels, ordered later by `dab_gray`.
pub fn extract_features_with_intensity(
    dab_rgb: &RgbImage,
    dab_gray: &GrayImage,
    mask: &BinaryMask,
) -> Result<FeatureSet> {
    for dims in [dab_gray.dimensions(), mask.dimensions()] {
        if dims != dab_rgb.dimensions() {
            return Err(Error::DimensionMismatch {
                expected: dab_rgb.dimensions(),
                actual: dims,
            });
        }
    }
    let w = dab_rgb.width() as usize;
    let mut raw = Vec::new();
    let mut intensity = Vec::new();
    let mut index = Vec::new();
    for (i, &m) in mask.as_slice().iter().enumerate() {
        if m {
            let p = dab_rgb.pixels()[i];
            raw.push(p.map(f64::from));
            intensity.push(dab_gray.pixels()[i]);
            index.push(((i % w) as u32, (i / w) as u32));
        }
    }
    FeatureSet::from_raw(raw, intensity, index)
}

/// Result of one clustering, clusters ordered darkest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    /// Cluster id per feature row.
    pub labels: Vec<usize>,
    pub centroids: Vec<[f64; 3]>,
    /// Mean display intensity per cluster, non-decreasing.
    pub mean_display_intensity: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (d0, d1, d2) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    d0 * d0 + d1 * d1 + d2 * d2
}

fn nearest(p: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Identical rows collapsed into weighted points, in a canonical order.
struct Weighted {
    points: Vec<[f64; 3]>,
    weights: Vec<f64>,
    row_to_point: Vec<usize>,
}

fn collapse(values: &[[f64; 3]]) -> Weighted {
    let mut keyed: BTreeMap<[u64; 3], usize> = BTreeMap::new();
    for v in values {
        let len = keyed.len();
        keyed.entry(v.map(f64::to_bits)).or_insert(len);
    }
    // Renumber in key order so the layout does not depend on row order.
    let mut remap = vec![0; keyed.len()];
    let mut points = Vec::with_capacity(keyed.len());
    for (rank, (key, &first_seen)) in keyed.iter().enumerate() {
        remap[first_seen] = rank;
        points.push(key.map(f64::from_bits));
    }
    let mut weights = vec![0.0; points.len()];
    let row_to_point: Vec<usize> = values
        .iter()
        .map(|v| {
            let p = remap[keyed[&v.map(f64::to_bits)]];
            weights[p] += 1.0;
            p
        })
        .collect();
    Weighted {
        points,
        weights,
        row_to_point,
    }
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target && w > 0.0 {
            return Some(i);
        }
    }
    weights.iter().rposition(|&w| w > 0.0)
}

fn kmeans_pp(data: &Weighted, k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let first = sample_weighted(rng, &data.weights).expect("non-empty data");
    let mut centroids = vec![data.points[first]];
    let mut d2: Vec<f64> = data.points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d2.iter().zip(&data.weights).map(|(d, w)| d * w).collect();
        // All remaining mass sits on existing centroids: duplicate the first point.
        let next = sample_weighted(rng, &scores).unwrap_or(first);
        let c = data.points[next];
        for (d, p) in d2.iter_mut().zip(&data.points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding; deterministic for a given seed.
pub fn kmeans(f: &FeatureSet, k: usize, seed: u64) -> Result<Clustering> {
    kmeans_with(f, k, seed, &KMeansParams::default())
}

pub fn kmeans_with(f: &FeatureSet, k: usize, seed: u64, params: &KMeansParams) -> Result<Clustering> {
    let n = f.len();
    if k == 0 || k > n {
        return Err(Error::TooFewPoints { k, n });
    }
    let data = collapse(&f.values);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(&data, k, &mut rng);
    let m = data.points.len();
    let mut assign = vec![0usize; m];
    let mut history = Vec::new();

    for _ in 0..params.max_iter {
        let mut sse = 0.0;
        let mut point_d2 = vec![0.0; m];
        for (i, p) in data.points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            assign[i] = j;
            point_d2[i] = d;
            sse += d * data.weights[i];
        }
        history.push(sse);

        let mut sums = vec![[0.0; 3]; k];
        let mut mass = vec![0.0; k];
        for (i, p) in data.points.iter().enumerate() {
            let w = data.weights[i];
            let j = assign[i];
            for c in 0..3 {
                sums[j][c] += w * p[c];
            }
            mass[j] += w;
        }
        let mut moved = 0.0f64;
        for j in 0..k {
            let next = if mass[j] > 0.0 {
                sums[j].map(|s| s / mass[j])
            } else {
                // Re-seed an empty cluster at the point farthest from its centroid.
                let far = (0..m)
                    .filter(|&i| point_d2[i] > 0.0)
                    .max_by(|&a, &b| point_d2[a].total_cmp(&point_d2[b]).then(b.cmp(&a)));
                match far {
                    Some(i) => {
                        point_d2[i] = 0.0;
                        data.points[i]
                    }
                    None => centroids[j],
                }
            };
            moved = moved.max(dist2(&next, &centroids[j]).sqrt());
            centroids[j] = next;
        }
        if moved < params.tol {
            break;
        }
    }
    // Final assignment against the converged centroids.
    let mut sse = 0.0;
    for (i, p) in data.points.iter().enumerate() {
        let (j, d) = nearest(p, &centroids);
        assign[i] = j;
        sse += d * data.weights[i];
    }
    if history.last() != Some(&sse) {
        history.push(sse);
    }

    let labels: Vec<usize> = data.row_to_point.iter().map(|&p| assign[p]).collect();
    Ok(order_by_intensity(f, k, labels, centroids, history))
}

fn order_by_intensity(
    f: &FeatureSet,
    k: usize,
    labels: Vec<usize>,
    centroids: Vec<[f64; 3]>,
    objective_history: Vec<f64>,
) -> Clustering {
    let mut sum = vec![0.0; k];
    let mut sizes = vec![0usize; k];
    for (&l, &v) in labels.iter().zip(&f.intensity) {
        sum[l] += v as f64;
        sizes[l] += 1;
    }
    let means: Vec<f64> = (0..k)
        .map(|j| if sizes[j] > 0 { sum[j] / sizes[j] as f64 } else { f64::INFINITY })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    Clustering {
        k,
        labels: labels.iter().map(|&l| rank[l]).collect(),
        centroids: order.iter().map(|&j| centroids[j]).collect(),
        mean_display_intensity: order.iter().map(|&j| means[j]).collect(),
        sizes: order.iter().map(|&j| sizes[j]).collect(),
        objective_history,
    }
}

fn single_cluster(f: &FeatureSet) -> Clustering {
    let n = f.len() as f64;
    let mut centroid = [0.0; 3];
    for v in &f.values {
        for c in 0..3 {
            centroid[c] += v[c] / n;
        }
    }
    let sse = f.values.iter().map(|v| dist2(v, &centroid)).sum();
    order_by_intensity(f, 1, vec![0; f.len()], vec![centroid], vec![sse])
}

/// Davies-Bouldin index: mean over clusters of the worst `(s_i + s_j) / d_ij`,
/// with `s_i` the mean member distance to the cluster mean and `d_ij` the
/// distance between cluster means. Lower is better.
pub fn davies_bouldin(f: &FeatureSet, c: &Clustering) -> Result<f64> {
    if c.k < 2 {
        return Err(Error::UndefinedForKOne);
    }
    let k = c.k;
    let mut sums = vec![[0.0; 3]; k];
    let mut counts = vec![0usize; k];
    for (v, &l) in f.values.iter().zip(&c.labels) {
        for d in 0..3 {
            sums[l][d] += v[d];
        }
        counts[l] += 1;
    }
    if counts.iter().any(|&n| n == 0) {
        return Err(Error::DegenerateInput("Davies-Bouldin needs non-empty clusters".into()));
    }
    let centers: Vec<[f64; 3]> = sums.iter().zip(&counts).map(|(s, &n)| s.map(|v| v / n as f64)).collect();
    let mut scatter = vec![0.0; k];
    for (v, &l) in f.values.iter().zip(&c.labels) {
        scatter[l] += dist2(v, &centers[l]).sqrt();
    }
    for (s, &n) in scatter.iter_mut().zip(&counts) {
        *s /= n as f64;
    }
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = 0.0f64;
        for j in (0..k).filter(|&j| j != i) {
            let d = dist2(&centers[i], &centers[j]).sqrt();
            let r = if d > 0.0 { (scatter[i] + scatter[j]) / d } else { f64::INFINITY };
            worst = worst.max(r);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Segmentation tunables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub seed: u64,
    /// Regions whose raw channel standard deviations are all below this are
    /// treated as a single cluster.
    pub uniformity_tau: f64,
    /// A single-cluster region is called DAB only when its mean display
    /// intensity is below this level.
    pub dark_tau: f64,
    pub kmeans: KMeansParams,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            seed: 0,
            uniformity_tau: 2.0,
            dark_tau: 192.0,
            kmeans: KMeansParams::default(),
        }
    }
}

/// Chooses k in {1, 2, 3}: 1 for a near-uniform region, otherwise whichever of
/// 2 and 3 has the lower Davies-Bouldin index (ties to 2).
pub fn choose_k(f: &FeatureSet, params: &SegmentParams) -> Result<Clustering> {
    if f.is_empty() {
        return Err(Error::EmptyMask);
    }
    if f.raw_std.iter().all(|&s| s < params.uniformity_tau) || f.len() < 2 {
        return Ok(single_cluster(f));
    }
    let mut best: Option<(f64, Clustering)> = None;
    for k in 2..=3.min(f.len()) {
        let c = kmeans_with(f, k, params.seed, &params.kmeans)?;
        let score = match davies_bouldin(f, &c) {
            Ok(s) => s,
            Err(Error::DegenerateInput(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, c));
        }
    }
    Ok(best.map(|(_, c)| c).unwrap_or_else(|| single_cluster(f)))
}

/// DAB region plus the clustering it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DabSegmentation {
    pub mask: BinaryMask,
    pub clustering: Clustering,
}

/// Clusters the masked DAB rendering and returns the darkest cluster.
pub fn select_dab_region(
    dab_rgb: &RgbImage,
    dab_gray: &GrayImage,
    mask: &BinaryMask,
    params: &SegmentParams,
) -> Result<DabSegmentation> {
    let f = extract_features_with_intensity(dab_rgb, dab_gray, mask)?;
    let clustering = choose_k(&f, params)?;
    let (w, h) = mask.dimensions();
    let mut out = BinaryMask::new(w, h);
    let take_all = clustering.k == 1 && clustering.mean_display_intensity[0] < params.dark_tau;
    for (&(x, y), &l) in f.pixel_index.iter().zip(&clustering.labels) {
        if (clustering.k > 1 && l == 0) || take_all {
            out.set(x, y, true);
        }
    }
    Ok(DabSegmentation { mask: out, clustering })
}

/// Renders cluster labels as gray levels (darkest cluster black), background white.
pub fn label_image(seg: &DabSegmentation, tissue: &BinaryMask) -> GrayImage {
    let (w, h) = tissue.dimensions();
    let mut img = GrayImage::filled(w, h, 255);
    let k = seg.clustering.k.max(1);
    let mut it = seg.clustering.labels.iter();
    for y in 0..h {
        for x in 0..w {
            if tissue.get(x, y) {
                let l = *it.next().expect("one label per tissue pixel");
                img.set(x, y, (l * 200 / k) as u8);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(centers: &[[f64; 3]], per: usize, spread: f64, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spread).unwrap();
        let mut raw = Vec::new();
        let mut intensity = Vec::new();
        for (ci, c) in centers.iter().enumerate() {
            for _ in 0..per {
                raw.push(c.map(|v| v + noise.sample(&mut rng)));
                intensity.push((ci * 60) as u8);
            }
        }
        let idx = (0..raw.len() as u32).map(|i| (i, 0)).collect();
        FeatureSet::from_raw(raw, intensity, idx).unwrap()
    }

    #[test]
    fn features_examples() {
        let mask = BinaryMask::filled(4, 2, true);
        let f = extract_features(&RgbImage::filled(4, 2, [90, 100, 110]), &mask).unwrap();
        assert!(f.values.iter().all(|v| *v == [0.0; 3]));

        let img = RgbImage::from_fn(4, 2, |x, _| if x < 2 { [50; 3] } else { [200; 3] });
        let f = extract_features(&img, &mask).unwrap();
        assert!(f.values.iter().all(|v| (v[0].abs() - 1.0).abs() < 1e-12));

        let pts = [[10.0, 20.0, 30.0], [12.0, 25.0, 31.0], [9.0, 18.0, 29.0], [15.0, 22.0, 35.0], [11.0, 21.0, 30.0]];
        let f = FeatureSet::from_raw(pts.to_vec(), vec![0; 5], (0..5).map(|i| (i, 0)).collect()).unwrap();
        for c in 0..3 {
            let m: f64 = pts.iter().map(|p| p[c]).sum::<f64>() / 5.0;
            let s = (pts.iter().map(|p| (p[c] - m).powi(2)).sum::<f64>() / 5.0).sqrt();
            for (v, p) in f.values.iter().zip(&pts) {
                assert!((v[c] - (p[c] - m) / s).abs() < 1e-12);
            }
        }
        assert!(matches!(extract_features(&img, &BinaryMask::new(4, 2)), Err(Error::EmptyMask)));
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let f = blobs(&[[0.0; 3], [10.0; 3]], 20, 1.0, 1);
        let c = kmeans(&f, 1, 0).unwrap();
        for v in c.centroids[0] {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn separates_two_blobs() {
        let f = blobs(&[[0.0; 3], [50.0; 3]], 40, 1.0, 2);
        let c = kmeans(&f, 2, 0).unwrap();
        assert!(c.labels[..40].iter().all(|&l| l == c.labels[0]));
        assert!(c.labels[40..].iter().all(|&l| l == c.labels[40]));
        assert_ne!(c.labels[0], c.labels[40]);
        // darkest (intensity 0) first
        assert_eq!(c.labels[0], 0);
    }

    #[test]
    fn deterministic_for_seed() {
        let f = blobs(&[[0.0; 3], [5.0; 3], [9.0, 0.0, 3.0]], 50, 2.0, 3);
        assert_eq!(kmeans(&f, 3, 42).unwrap(), kmeans(&f, 3, 42).unwrap());
    }

    #[test]
    fn too_many_clusters() {
        let f = blobs(&[[0.0; 3]], 2, 1.0, 4);
        assert!(matches!(kmeans(&f, 3, 0), Err(Error::TooFewPoints { k: 3, n: 2 })));
    }

    #[test]
    fn objective_non_increasing() {
        let f = blobs(&[[0.0; 3], [3.0; 3], [6.0, 1.0, 0.0]], 80, 1.5, 5);
        for k in 1..=3 {
            let c = kmeans(&f, k, 9).unwrap();
            for w in c.objective_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", c.objective_history);
            }
        }
    }

    #[test]
    fn db_of_singletons_is_zero() {
        let f = FeatureSet::from_raw(vec![[0.0; 3], [1.0; 3]], vec![0, 1], vec![(0, 0), (1, 0)]).unwrap();
        let c = kmeans(&f, 2, 0).unwrap();
        assert_eq!(davies_bouldin(&f, &c).unwrap(), 0.0);
        assert!(matches!(davies_bouldin(&f, &single_cluster(&f)), Err(Error::UndefinedForKOne)));
    }

    #[test]
    fn wrong_split_scores_worse() {
        let f = blobs(&[[0.0; 3], [20.0; 3]], 30, 1.0, 6);
        let good = kmeans(&f, 2, 0).unwrap();
        // merge both blobs into one label and split off noise by parity
        let mut bad = good.clone();
        bad.labels = (0..f.len()).map(|i| i % 2).collect();
        assert!(davies_bouldin(&f, &bad).unwrap() > davies_bouldin(&f, &good).unwrap());
    }

    #[test]
    fn choose_k_cases() {
        let p = SegmentParams::default();
        let two = blobs(&[[0.0; 3], [60.0; 3]], 60, 2.0, 7);
        assert_eq!(choose_k(&two, &p).unwrap().k, 2);
        let three = blobs(&[[0.0, 0.0, 0.0], [60.0, 0.0, 0.0], [30.0, 52.0, 0.0]], 60, 2.0, 8);
        assert_eq!(choose_k(&three, &p).unwrap().k, 3);
        let flat = blobs(&[[100.0; 3]], 50, 0.5, 9);
        assert_eq!(choose_k(&flat, &p).unwrap().k, 1);
    }

    #[test]
    fn darkest_population_selected() {
        let (w, h) = (20u32, 10u32);
        let dark = |x: u32, y: u32| (x * 7 + y * 3) % 10 < 3;
        let rgb = RgbImage::from_fn(w, h, |x, y| if dark(x, y) { [60; 3] } else { [230; 3] });
        let gray = crate::image::to_gray(&rgb);
        let mask = BinaryMask::filled(w, h, true);
        let seg = select_dab_region(&rgb, &gray, &mask, &SegmentParams::default()).unwrap();
        assert_eq!(seg.mask, BinaryMask::from_fn(w, h, dark));
        assert_eq!(seg.clustering.k, 2);
        assert!(seg.clustering.mean_display_intensity[0] <= seg.clustering.mean_display_intensity[1]);
    }

    #[test]
    fn uniform_light_tissue_has_no_dab() {
        let rgb = RgbImage::filled(8, 8, [240; 3]);
        let gray = crate::image::to_gray(&rgb);
        let seg = select_dab_region(&rgb, &gray, &BinaryMask::filled(8, 8, true), &SegmentParams::default()).unwrap();
        assert!(seg.mask.is_empty());
        let dark = RgbImage::filled(8, 8, [40; 3]);
        let seg = select_dab_region(&dark, &crate::image::to_gray(&dark), &BinaryMask::filled(8, 8, true), &SegmentParams::default())
            .unwrap();
        assert_eq!(seg.mask.count(), 64);
    }

    #[test]
    fn ordering_by_mean_intensity() {
        let f = FeatureSet::from_raw(
            vec![[1.0; 3], [1.0; 3], [9.0; 3], [9.0; 3]],
            vec![200, 200, 40, 40],
            (0..4).map(|i| (i, 0)).collect(),
        )
        .unwrap();
        let c = kmeans(&f, 2, 0).unwrap();
        assert_eq!(c.mean_display_intensity, vec![40.0, 200.0]);
        assert_eq!(c.labels, vec![1, 1, 0, 0]);
    }
}

//! Bag-of-Visual-Words retrieval: seeded k-means vocabulary construction,
//! word-frequency histogram encoding, and cosine-ranked video queries.
//!
//! Descriptors are ingested from matrix files (one per video) so any
//! feature extractor can feed the engine; a raw-patch descriptor is
//! bundled for self-contained use.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::RgbGrid;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("need at least {need} descriptors for k = {need}, got {got}")]
    InsufficientData { got: usize, need: usize },
    #[error("descriptor dimension {got} does not match vocabulary dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("index io error: {0}")]
    Io(String),
}

const MAX_KMEANS_ITERATIONS: usize = 100;

/// Clustered visual vocabulary with training metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub centroids: Vec<Vec<f64>>,
    pub dim: usize,
    pub iterations: usize,
    /// Final within-cluster sum of squared distances.
    pub inertia: f64,
    /// Inertia after each Lloyd iteration; non-increasing.
    pub inertia_history: Vec<f64>,
}

impl Vocabulary {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Nearest centroid index, lowest index on ties.
fn assign(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Seeded k-means (k-means++ initialization, Lloyd iterations) to
/// convergence or the iteration cap. Deterministic for a given seed.
pub fn build_vocabulary(
    descriptors: &[Vec<f32>],
    k: usize,
    seed: u64,
) -> Result<Vocabulary, RetrievalError> {
    if descriptors.len() < k || k == 0 {
        return Err(RetrievalError::InsufficientData {
            got: descriptors.len(),
            need: k.max(1),
        });
    }
    let dim = descriptors[0].len();
    let points: Vec<Vec<f64>> = descriptors
        .iter()
        .map(|d| d.iter().map(|&v| v as f64).collect())
        .collect();

    // k-means++ seeding.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())].clone());
    let mut dists: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dists.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a centroid; pick any.
            rng.random_range(0..points.len())
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in dists.iter().enumerate() {
                target -= d;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        centroids.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            dists[i] = dists[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }

    // Lloyd iterations.
    let mut assignments = vec![0usize; points.len()];
    let mut inertia_history = Vec::new();
    let mut iterations = 0usize;
    for _ in 0..MAX_KMEANS_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        let mut inertia = 0.0f64;
        for (i, p) in points.iter().enumerate() {
            let a = assign(p, &centroids);
            inertia += sq_dist(p, &centroids[a]);
            if a != assignments[i] {
                assignments[i] = a;
                changed = true;
            }
        }
        inertia_history.push(inertia);

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (c, (sum, count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if *count > 0 {
                for (cv, sv) in c.iter_mut().zip(sum) {
                    *cv = sv / *count as f64;
                }
            }
            // Empty clusters keep their previous centroid.
        }
        if !changed && inertia_history.len() > 1 {
            break;
        }
    }
    let inertia = *inertia_history.last().unwrap();
    Ok(Vocabulary {
        centroids,
        dim,
        iterations,
        inertia,
        inertia_history,
    })
}

/// Word-frequency histogram of one video's descriptors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoHistogram {
    pub video_id: String,
    pub counts: Vec<f64>,
}

impl VideoHistogram {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Assign each descriptor to its nearest visual word and accumulate
/// counts. Equidistant descriptors go to the lowest centroid index.
pub fn encode_histogram(
    video_id: &str,
    descriptors: &[Vec<f32>],
    vocab: &Vocabulary,
) -> Result<VideoHistogram, RetrievalError> {
    let mut counts = vec![0.0f64; vocab.k()];
    for d in descriptors {
        if d.len() != vocab.dim {
            return Err(RetrievalError::DimensionMismatch {
                got: d.len(),
                want: vocab.dim,
            });
        }
        let p: Vec<f64> = d.iter().map(|&v| v as f64).collect();
        counts[assign(&p, &vocab.centroids)] += 1.0;
    }
    Ok(VideoHistogram {
        video_id: video_id.to_string(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryHit {
    pub video_id: String,
    pub score: f64,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= 0.0 || nb <= 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Rank corpus histograms against a query by cosine similarity,
/// descending; ties break by video id. Zero-norm histograms score 0.
pub fn query_videos(
    corpus: &[VideoHistogram],
    query: &VideoHistogram,
    top_n: usize,
    idf: Option<&[f64]>,
) -> Vec<QueryHit> {
    let weigh = |h: &VideoHistogram| -> Vec<f64> {
        match idf {
            Some(w) => h.counts.iter().zip(w).map(|(c, i)| c * i).collect(),
            None => h.counts.clone(),
        }
    };
    let q = weigh(query);
    let mut hits: Vec<QueryHit> = corpus
        .par_iter()
        .map(|h| QueryHit {
            video_id: h.video_id.clone(),
            score: cosine(&weigh(h), &q),
        })
        .collect();
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.video_id.cmp(&b.video_id))
    });
    hits.truncate(top_n);
    hits
}

/// Inverse document frequency per word: `ln(1 + V / (1 + df))`. Off by
/// default; enabled by config.
pub fn idf_weights(corpus: &[VideoHistogram], k: usize) -> Vec<f64> {
    let mut df = vec![0usize; k];
    for h in corpus {
        for (i, c) in h.counts.iter().enumerate() {
            if *c > 0.0 {
                df[i] += 1;
            }
        }
    }
    df.iter()
        .map(|&d| (1.0 + corpus.len() as f64 / (1.0 + d as f64)).ln())
        .collect()
}

/// Persistent retrieval index: vocabulary plus encoded corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub vocabulary: Vocabulary,
    pub histograms: Vec<VideoHistogram>,
    pub use_idf: bool,
}

impl RetrievalIndex {
    pub fn query(&self, query: &VideoHistogram, top_n: usize) -> Vec<QueryHit> {
        let payload;
        let idf = if self.use_idf {
            payload = idf_weights(&self.histograms, self.vocabulary.k());
            Some(payload.as_slice())
        } else {
            None
        };
        query_videos(&self.histograms, query, top_n, idf)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), RetrievalError> {
        let text =
            serde_json::to_string(self).map_err(|e| RetrievalError::Io(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| RetrievalError::Io(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|e| RetrievalError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| RetrievalError::Io(e.to_string()))
    }
}

/// Bundled descriptor extractor: mean-normalized raw gray patches on a
/// fixed grid. Crude next to learned or SIFT features but self-contained
/// and deterministic.
pub fn raw_patch_descriptors(image: &RgbGrid, patch: usize, stride: usize) -> Vec<Vec<f32>> {
    let gray = image.luminance();
    let mut out = Vec::new();
    if gray.width() < patch || gray.height() < patch {
        return out;
    }
    for y in (0..=gray.height() - patch).step_by(stride) {
        for x in (0..=gray.width() - patch).step_by(stride) {
            let mut d = Vec::with_capacity(patch * patch);
            let mut mean = 0.0f32;
            for py in 0..patch {
                for px in 0..patch {
                    let v = *gray.get(x + px, y + py);
                    d.push(v);
                    mean += v;
                }
            }
            mean /= (patch * patch) as f32;
            for v in &mut d {
                *v -= mean;
            }
            out.push(d);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster_around(center: &[f64], n: usize, spread: f64, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                center
                    .iter()
                    .map(|&c| (c + rng.random_range(-spread..spread)) as f32)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn separable_clusters_recover_means() {
        let mut data = cluster_around(&[0.0, 0.0], 40, 0.5, 1);
        data.extend(cluster_around(&[100.0, -50.0], 40, 0.5, 2));
        let vocab = build_vocabulary(&data, 2, 7).unwrap();
        // Exact means of each half, via brute force.
        let mean = |rows: &[Vec<f32>]| -> Vec<f64> {
            let mut m = [0.0f64; 2];
            for r in rows {
                for (mm, v) in m.iter_mut().zip(r) {
                    *mm += *v as f64;
                }
            }
            m.iter().map(|v| v / rows.len() as f64).collect()
        };
        let m0 = mean(&data[..40]);
        let m1 = mean(&data[40..]);
        let matched = vocab
            .centroids
            .iter()
            .all(|c| sq_dist(c, &m0) < 1e-18 || sq_dist(c, &m1) < 1e-18);
        assert!(matched, "centroids {:?} vs means {m0:?}, {m1:?}", vocab.centroids);
    }

    #[test]
    fn k1_gives_global_mean() {
        let data = cluster_around(&[3.0, -2.0, 5.0], 25, 2.0, 3);
        let vocab = build_vocabulary(&data, 1, 0).unwrap();
        let mut mean = vec![0.0f64; 3];
        for d in &data {
            for (m, v) in mean.iter_mut().zip(d) {
                *m += *v as f64;
            }
        }
        for m in &mut mean {
            *m /= data.len() as f64;
        }
        assert!(sq_dist(&vocab.centroids[0], &mean) < 1e-18);
    }

    #[test]
    fn identical_descriptors_zero_inertia() {
        let data = vec![vec![1.5f32, 2.5]; 10];
        let vocab = build_vocabulary(&data, 1, 0).unwrap();
        assert_eq!(vocab.centroids[0], vec![1.5_f64, 2.5]);
        assert_eq!(vocab.inertia, 0.0);
    }

    #[test]
    fn insufficient_data_rejected() {
        let data = vec![vec![1.0f32]; 3];
        assert!(matches!(
            build_vocabulary(&data, 5, 0),
            Err(RetrievalError::InsufficientData { .. })
        ));
    }

    #[test]
    fn deterministic_for_same_seed() {
        let mut data = cluster_around(&[0.0, 0.0], 30, 5.0, 4);
        data.extend(cluster_around(&[10.0, 10.0], 30, 5.0, 5));
        let a = build_vocabulary(&data, 4, 99).unwrap();
        let b = build_vocabulary(&data, 4, 99).unwrap();
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn inertia_non_increasing() {
        let mut data = cluster_around(&[0.0, 0.0], 50, 10.0, 6);
        data.extend(cluster_around(&[4.0, 4.0], 50, 10.0, 7));
        let vocab = build_vocabulary(&data, 3, 11).unwrap();
        for pair in vocab.inertia_history.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "inertia increased: {:?}",
                vocab.inertia_history
            );
        }
    }

    #[test]
    fn empty_descriptor_list_zero_histogram() {
        let vocab = build_vocabulary(&[vec![0.0f32], vec![1.0]], 2, 0).unwrap();
        let h = encode_histogram("v", &[], &vocab).unwrap();
        assert!(h.counts.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn histogram_counts_sum_to_descriptor_count() {
        let mut data = cluster_around(&[0.0, 0.0], 12, 1.0, 8);
        data.extend(cluster_around(&[20.0, 0.0], 12, 1.0, 9));
        let vocab = build_vocabulary(&data, 2, 1).unwrap();
        let h = encode_histogram("v", &data, &vocab).unwrap();
        assert_eq!(h.total(), data.len() as f64);
    }

    #[test]
    fn equidistant_descriptor_takes_lowest_index() {
        let vocab = Vocabulary {
            centroids: vec![vec![-1.0], vec![5.0], vec![1.0]],
            dim: 1,
            iterations: 0,
            inertia: 0.0,
            inertia_history: vec![],
        };
        // 0.0 is equidistant from centroids 0 and 2.
        let h = encode_histogram("v", &[vec![0.0f32]], &vocab).unwrap();
        assert_eq!(h.counts, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn self_query_ranks_first_with_unit_score() {
        let corpus = vec![
            VideoHistogram {
                video_id: "a".into(),
                counts: vec![5.0, 0.0, 1.0],
            },
            VideoHistogram {
                video_id: "b".into(),
                counts: vec![0.0, 3.0, 0.0],
            },
        ];
        let hits = query_videos(&corpus, &corpus[0], 2, None);
        assert_eq!(hits[0].video_id, "a");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_histogram_scores_zero() {
        let corpus = vec![VideoHistogram {
            video_id: "a".into(),
            counts: vec![1.0, 0.0],
        }];
        let query = VideoHistogram {
            video_id: "q".into(),
            counts: vec![0.0, 2.0],
        };
        assert_eq!(query_videos(&corpus, &query, 1, None)[0].score, 0.0);
    }

    #[test]
    fn known_similarities_rank_in_order() {
        // Hand-built vectors with cosine similarities 0.9external...
        // constructed directly: query (1,0); corpus at known angles.
        let at_angle = |cosv: f64, id: &str| VideoHistogram {
            video_id: id.into(),
            counts: vec![cosv, (1.0 - cosv * cosv).sqrt()],
        };
        let corpus = vec![at_angle(0.5, "mid"), at_angle(0.9, "close"), at_angle(0.1, "far")];
        let query = VideoHistogram {
            video_id: "q".into(),
            counts: vec![1.0, 0.0],
        };
        let hits = query_videos(&corpus, &query, 3, None);
        let ids: Vec<&str> = hits.iter().map(|h| h.video_id.as_str()).collect();
        assert_eq!(ids, vec!["close", "mid", "far"]);
        assert!((hits[0].score - 0.9).abs() < 1e-12);
        assert!((hits[1].score - 0.5).abs() < 1e-12);
        assert!((hits[2].score - 0.1).abs() < 1e-12);
    }

    #[test]
    fn scores_invariant_under_positive_scaling() {
        let corpus = vec![VideoHistogram {
            video_id: "a".into(),
            counts: vec![2.0, 3.0, 1.0],
        }];
        let query = VideoHistogram {
            video_id: "q".into(),
            counts: vec![1.0, 1.0, 4.0],
        };
        let scaled = VideoHistogram {
            video_id: "q".into(),
            counts: query.counts.iter().map(|c| c * 37.5).collect(),
        };
        let a = query_videos(&corpus, &query, 1, None)[0].score;
        let b = query_videos(&corpus, &scaled, 1, None)[0].score;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn index_round_trip() {
        let data = cluster_around(&[0.0, 1.0], 10, 1.0, 10);
        let vocab = build_vocabulary(&data, 2, 3).unwrap();
        let hist = encode_histogram("vid0", &data, &vocab).unwrap();
        let index = RetrievalIndex {
            vocabulary: vocab,
            histograms: vec![hist],
            use_idf: false,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.json");
        index.save(&path).unwrap();
        let back = RetrievalIndex::load(&path).unwrap();
        assert_eq!(back.histograms, index.histograms);
        assert_eq!(back.vocabulary.centroids, index.vocabulary.centroids);
    }
}

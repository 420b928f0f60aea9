//! Hard cluster assignments, k-means++ seeding, Lloyd reassignment and
//! per-cluster centering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{sq_dist, Tensor};

/// Hard assignment of `n` points to `k` clusters.
///
/// Equivalent to a `k × n` indicator matrix whose columns each hold one 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentMatrix {
    k: usize,
    assign: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn new(k: usize, assign: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("cluster count must be at least 1"));
        }
        if let Some((i, &j)) = assign.iter().enumerate().find(|(_, &j)| j >= k) {
            return Err(Error::invalid(format!(
                "point {i} assigned to cluster {j} >= k={k}"
            )));
        }
        Ok(AssignmentMatrix { k, assign })
    }

    pub fn uniform(k: usize, n: usize) -> Self {
        AssignmentMatrix {
            k,
            assign: vec![0; n],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assign.len()
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.assign[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assign
    }

    /// Indicator entry `S[j][i]`.
    pub fn indicator(&self, j: usize, i: usize) -> f64 {
        if self.assign[i] == j {
            1.0
        } else {
            0.0
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &j in &self.assign {
            c[j] += 1;
        }
        c
    }

    pub fn members(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assign[i] == j).collect()
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(j, _)| j)
            .collect()
    }
}

/// `k × n` matrix of per-cluster losses; row `j` holds cluster `j`'s loss on every point.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    k: usize,
    n: usize,
    data: Vec<f64>,
}

impl LossMatrix {
    pub fn new(k: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k * n {
            return Err(Error::shape("LossMatrix", k * n, data.len()));
        }
        Ok(LossMatrix { k, n, data })
    }

    /// Builds from one row per cluster.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("loss matrix rows differ in length"));
        }
        LossMatrix::new(k, n, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.data[j * self.n + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.k).map(|j| self.get(j, i)).collect()
    }

    /// `Σ_i L[assign[i]][i]`.
    pub fn masked_sum(&self, s: &AssignmentMatrix) -> f64 {
        debug_assert_eq!(s.n(), self.n);
        (0..self.n).map(|i| self.get(s.cluster_of(i), i)).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = j;
        }
    }
    best
}

/// Reassigns every point to the cluster with the smallest loss.
pub fn lloyd_step(losses: &LossMatrix) -> Result<AssignmentMatrix> {
    if !losses.is_finite() {
        return Err(Error::NonFinite("lloyd_step loss matrix"));
    }
    let assign = (0..losses.n()).map(|i| argmin(&losses.column(i))).collect();
    AssignmentMatrix::new(losses.k(), assign)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCenters {
    centers: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl ClusterCenters {
    pub fn new(centers: Vec<Vec<f64>>) -> Self {
        let counts = vec![0; centers.len()];
        ClusterCenters { centers, counts }
    }

    /// `k` copies of the zero vector; no centering.
    pub fn zeros(k: usize, d: usize) -> Self {
        ClusterCenters::new(vec![vec![0.0; d]; k])
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    pub fn center(&self, j: usize) -> &[f64] {
        &self.centers[j]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn as_slice(&self) -> &[Vec<f64>] {
        &self.centers
    }
}

fn global_mean(x: &Tensor) -> Vec<f64> {
    let d = x.cols();
    let mut m = vec![0.0; d];
    for row in x.iter_rows() {
        m.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    let n = x.rows() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Per-cluster means. An empty cluster keeps its `previous` center, or takes
/// the global mean when there is none.
pub fn compute_centers(
    x: &Tensor,
    s: &AssignmentMatrix,
    previous: Option<&ClusterCenters>,
) -> ClusterCenters {
    let d = x.cols();
    let k = s.k();
    let mut sums = vec![vec![0.0; d]; k];
    let counts = s.counts();
    for (i, row) in x.iter_rows().enumerate() {
        sums[s.cluster_of(i)]
            .iter_mut()
            .zip(row)
            .for_each(|(a, v)| *a += v);
    }
    let mut fallback: Option<Vec<f64>> = None;
    let centers = sums
        .into_iter()
        .enumerate()
        .map(|(j, mut c)| {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                c.iter_mut().for_each(|v| *v /= n);
                c
            } else if let Some(p) = previous.filter(|p| p.k() == k && p.dim() == d) {
                p.center(j).to_vec()
            } else {
                fallback.get_or_insert_with(|| global_mean(x)).clone()
            }
        })
        .collect();
    ClusterCenters { centers, counts }
}

/// `x - c`.
pub fn center(x: &[f64], c: &[f64]) -> Result<Vec<f64>> {
    if x.len() != c.len() {
        return Err(Error::shape("center", c.len(), x.len()));
    }
    Ok(x.iter().zip(c).map(|(a, b)| a - b).collect())
}

/// k-means++ seeding: returns the chosen row indices.
pub fn kmeanspp_seeds(x: &Tensor, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::invalid("k-means++ on an empty dataset"));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "k-means++ needs 1 <= k <= n, got k={k}, n={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = x
        .iter_rows()
        .map(|r| sq_dist(r, x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // Round-off can leave `target` past the last positive weight.
            if d2[pick] <= 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).expect("total > 0");
            }
            pick
        } else {
            // All remaining points coincide with a chosen center.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, row) in x.iter_rows().enumerate() {
            let d = sq_dist(row, x.row(next));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    Ok(chosen)
}

/// Assigns each row to its nearest center (ties to the lowest index).
pub fn assign_nearest(x: &Tensor, centers: &[Vec<f64>]) -> AssignmentMatrix {
    let assign = x
        .iter_rows()
        .map(|r| {
            let d: Vec<f64> = centers.iter().map(|c| sq_dist(r, c)).collect();
            argmin(&d)
        })
        .collect();
    AssignmentMatrix {
        k: centers.len(),
        assign,
    }
}

/// k-means++ seeding followed by a nearest-center assignment.
pub fn kmeanspp_init(x: &Tensor, k: usize, seed: u64) -> Result<AssignmentMatrix> {
    let seeds = kmeanspp_seeds(x, k, seed)?;
    let centers: Vec<Vec<f64>> = seeds.iter().map(|&i| x.row(i).to_vec()).collect();
    Ok(assign_nearest(x, &centers))
}

/// Squared distance of every point to every center, as a loss matrix.
pub fn distance_losses(x: &Tensor, centers: &ClusterCenters) -> LossMatrix {
    let rows = centers
        .as_slice()
        .iter()
        .map(|c| x.iter_rows().map(|r| sq_dist(r, c)).collect())
        .collect();
    LossMatrix::from_rows(rows).expect("uniform rows")
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignment: AssignmentMatrix,
    pub centers: ClusterCenters,
    pub inertia: f64,
    pub iterations: usize,
}

/// Plain k-means: k-means++ init, then alternate Lloyd steps and center
/// updates until the assignment stops changing.
pub fn kmeans(x: &Tensor, k: usize, max_iter: usize, seed: u64) -> Result<KMeansResult> {
    let mut s = kmeanspp_init(x, k, seed)?;
    let mut centers = compute_centers(x, &s, None);
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let next = lloyd_step(&distance_losses(x, &centers))?;
        let changed = next != s;
        s = next;
        centers = compute_centers(x, &s, Some(&centers));
        if !changed {
            break;
        }
    }
    let inertia = distance_losses(x, &centers).masked_sum(&s);
    Ok(KMeansResult {
        assignment: s,
        centers,
        inertia,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_cluster_takes_everything() {
        let x = pts(&[[0.0, 1.0], [3.0, 2.0], [-1.0, 5.0]]);
        let s = kmeanspp_init(&x, 1, 9).unwrap();
        assert_eq!(s.as_slice(), &[0, 0, 0]);
        let c = compute_centers(&x, &s, None);
        assert_eq!(c.center(0), &[2.0 / 3.0, 8.0 / 3.0]);
    }

    #[test]
    fn two_far_points_split() {
        let x = pts(&[[0.0, 0.0], [10.0, 10.0]]);
        for seed in 0..20 {
            let s = kmeanspp_init(&x, 2, seed).unwrap();
            assert_ne!(s.cluster_of(0), s.cluster_of(1));
        }
    }

    #[test]
    fn kmeanspp_errors() {
        let x = pts(&[[0.0, 0.0]]);
        assert!(kmeanspp_init(&x, 2, 0).is_err());
        assert!(kmeanspp_init(&x, 0, 0).is_err());
    }

    #[test]
    fn duplicate_points_still_get_k_seeds() {
        let x = pts(&[[1.0, 1.0]; 4]);
        let seeds = kmeanspp_seeds(&x, 3, 4).unwrap();
        let mut uniq = seeds.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 3);
    }

    #[test]
    fn lloyd_picks_min_with_low_index_ties() {
        let l = LossMatrix::from_rows(vec![vec![1.0, 5.0, 3.0], vec![2.0, 5.0, 1.0]]).unwrap();
        assert_eq!(lloyd_step(&l).unwrap().as_slice(), &[0, 0, 1]);
    }

    #[test]
    fn lloyd_rejects_nan() {
        let l = LossMatrix::from_rows(vec![vec![f64::NAN], vec![0.0]]).unwrap();
        assert!(lloyd_step(&l).is_err());
    }

    #[test]
    fn centers_are_means_and_empty_clusters_persist() {
        let x = pts(&[[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]]);
        let s = AssignmentMatrix::new(3, vec![0, 0, 1]).unwrap();
        let c = compute_centers(&x, &s, None);
        assert_eq!(c.center(0), &[1.0, 0.0]);
        assert_eq!(c.center(1), &[5.0, 5.0]);
        // empty, no previous: global mean
        assert_eq!(c.center(2), &[7.0 / 3.0, 5.0 / 3.0]);
        let prev = ClusterCenters::new(vec![vec![0.0; 2], vec![0.0; 2], vec![-1.0, 4.0]]);
        let c = compute_centers(&x, &s, Some(&prev));
        assert_eq!(c.center(2), &[-1.0, 4.0]);
        assert_eq!(c.counts(), &[2, 1, 0]);
    }

    #[test]
    fn centering() {
        assert_eq!(center(&[3.0, 1.0], &[1.0, 1.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(center(&[3.0, 1.0], &[3.0, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(center(&[3.0, 1.0], &[0.0, 0.0]).unwrap(), vec![3.0, 1.0]);
        assert!(center(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn assignment_validation() {
        assert!(AssignmentMatrix::new(2, vec![0, 2]).is_err());
        assert!(AssignmentMatrix::new(0, vec![]).is_err());
        let s = AssignmentMatrix::new(3, vec![2, 0, 2]).unwrap();
        assert_eq!(s.counts(), vec![1, 0, 2]);
        assert_eq!(s.empty_clusters(), vec![1]);
        assert_eq!(s.indicator(2, 0), 1.0);
    }

    #[test]
    fn kmeans_separates_blobs() {
        let x = pts(&[
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [5.0, 5.0],
            [5.1, 5.0],
            [5.0, 5.1],
        ]);
        let r = kmeans(&x, 2, 50, 1).unwrap();
        let a = r.assignment.as_slice();
        assert_eq!(a[0], a[1]);
        assert_eq!(a[0], a[2]);
        assert_eq!(a[3], a[4]);
        assert_ne!(a[0], a[3]);
    }
}

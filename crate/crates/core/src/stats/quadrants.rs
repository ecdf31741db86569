use crate::permsample::PairAssignmentProbs;

/// Binary indexed tree over `0..n`.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += v;
            k += k & k.wrapping_neg();
        }
    }

    /// Sum over `0..i`.
    fn prefix(&self, i: usize) -> f64 {
        let mut k = i;
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k -= k & k.wrapping_neg();
        }
        s
    }
}

/// Fixed x-values, a fixed multiset of y-values and fixed quadrant centers;
/// scores any coupling `π` of the ys to the xs in `O(n log n)`.
#[derive(Debug, Clone)]
pub struct QuadrantGeometry {
    n: usize,
    /// Point indices sorted by x.
    x_order: Vec<usize>,
    /// Center indices sorted by center x.
    center_order: Vec<usize>,
    /// `#{l : x_l ≤ cx}` per center.
    below_x: Vec<usize>,
    /// `#{m : y_m ≤ cy}` per center.
    below_y: Vec<usize>,
    /// Rank of `y_m` in sorted order.
    y_rank: Vec<usize>,
    /// Rank of `x_l` in sorted order.
    x_rank: Vec<usize>,
}

impl QuadrantGeometry {
    pub fn new(xs: &[f64], ys: &[f64], centers: &[(f64, f64)]) -> Self {
        let n = xs.len();
        let mut x_order: Vec<usize> = (0..n).collect();
        x_order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut y_order: Vec<usize> = (0..n).collect();
        y_order.sort_by(|&a, &b| ys[a].total_cmp(&ys[b]));
        let mut y_rank = vec![0; n];
        for (r, &m) in y_order.iter().enumerate() {
            y_rank[m] = r;
        }
        let mut x_rank = vec![0; n];
        for (r, &l) in x_order.iter().enumerate() {
            x_rank[l] = r;
        }
        let sorted_x: Vec<f64> = x_order.iter().map(|&l| xs[l]).collect();
        let sorted_y: Vec<f64> = y_order.iter().map(|&m| ys[m]).collect();
        let below_x: Vec<usize> = centers.iter().map(|c| sorted_x.partition_point(|&v| v <= c.0)).collect();
        let below_y: Vec<usize> = centers.iter().map(|c| sorted_y.partition_point(|&v| v <= c.1)).collect();
        let mut center_order: Vec<usize> = (0..centers.len()).collect();
        center_order.sort_by_key(|&c| below_x[c]);
        Self { n, x_order, center_order, below_x, below_y, y_rank, x_rank }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn centers(&self) -> usize {
        self.below_x.len()
    }

    /// Observed counts `[o00, o01, o10, o11]` per center for the coupling
    /// pairing `x_l` with `y_{pi[l]}`.
    pub fn counts(&self, pi: &[usize]) -> Vec<[f64; 4]> {
        let n = self.n;
        let mut fw = Fenwick::new(n);
        let mut out = vec![[0.0; 4]; self.centers()];
        let mut inserted = 0;
        for &c in &self.center_order {
            while inserted < self.below_x[c] {
                let l = self.x_order[inserted];
                fw.add(self.y_rank[pi[l]], 1.0);
                inserted += 1;
            }
            let nx = self.below_x[c] as f64;
            let ny = self.below_y[c] as f64;
            let o00 = fw.prefix(self.below_y[c]);
            out[c] = [o00, nx - o00, ny - o00, n as f64 - nx - ny + o00];
        }
        out
    }

    /// Inverse-weighted counts: each point `l` contributes `v[l]`. Returns
    /// observed sums per center together with the x-marginal and y-marginal
    /// sums below the center and the total.
    pub fn weighted_counts(&self, pi: &[usize], v: &[f64]) -> (Vec<[f64; 4]>, Vec<(f64, f64)>, f64) {
        let n = self.n;
        let mut fw = Fenwick::new(n);
        let mut by_y_rank = vec![0.0; n];
        for l in 0..n {
            by_y_rank[self.y_rank[pi[l]]] += v[l];
        }
        let mut y_prefix = vec![0.0; n + 1];
        for r in 0..n {
            y_prefix[r + 1] = y_prefix[r] + by_y_rank[r];
        }
        let total = y_prefix[n];
        let mut out = vec![[0.0; 4]; self.centers()];
        let mut margins = vec![(0.0, 0.0); self.centers()];
        let mut inserted = 0;
        let mut ax = 0.0;
        for &c in &self.center_order {
            while inserted < self.below_x[c] {
                let l = self.x_order[inserted];
                fw.add(self.y_rank[pi[l]], v[l]);
                ax += v[l];
                inserted += 1;
            }
            let ay = y_prefix[self.below_y[c]];
            let o00 = fw.prefix(self.below_y[c]);
            out[c] = [o00, ax - o00, ay - o00, total - ax - ay + o00];
            margins[c] = (ax, ay);
        }
        (out, margins, total)
    }

    /// Expected counts under pair-assignment probabilities, via 2-D prefix
    /// sums over (x-rank, y-rank).
    pub fn expected_from_pair_probs(&self, p: &PairAssignmentProbs) -> Vec<[f64; 4]> {
        let n = self.n;
        let stride = n + 1;
        let mut grid = vec![0.0; stride * stride];
        for i in 0..n {
            let a = self.x_rank[i];
            for j in 0..n {
                grid[(a + 1) * stride + self.y_rank[j] + 1] += p.get(i, j);
            }
        }
        for a in 1..=n {
            for b in 1..=n {
                grid[a * stride + b] +=
                    grid[(a - 1) * stride + b] + grid[a * stride + b - 1] - grid[(a - 1) * stride + b - 1];
            }
        }
        let q = |a: usize, b: usize| grid[a * stride + b];
        let total = q(n, n);
        (0..self.centers())
            .map(|c| {
                let (a, b) = (self.below_x[c], self.below_y[c]);
                let e00 = q(a, b);
                let e0 = q(a, n);
                let e_0 = q(n, b);
                [e00, e0 - e00, e_0 - e00, total - e0 - e_0 + e00]
            })
            .collect()
    }
}

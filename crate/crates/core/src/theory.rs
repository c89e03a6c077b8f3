//! Useless-work bound for phase-wise SSSP on Erdős-Rényi graphs, the
//! conditioned path-weight density behind it, and Monte-Carlo checks.
//!
//! For candidates `d(1) <= ... <= d(m)` and `h(i, j) = d(j) - d(i)` the
//! probability that candidate `j` is settled is bounded below by
//!
//! ```text
//! q(j) >= prod_{i<j} prod_{L=1}^{n-1} (1 - (p h(i,j))^L / L!)^E(L),
//! E(L) = (n-2)(n-3)...(n-L)
//! ```
//!
//! and the expected useless work by `sum_{j in R} (1 - q(j))` over the
//! relaxed candidates `R`. Everything is evaluated in log space.
//!
//! The product form assumes two nodes relaxed in the same phase are no more
//! likely to be joined by a light path than two random nodes of a fresh
//! graph. [`conjecture_probe`] measures both rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{split_seed, Execution};
use crate::sim::{SimParams, Simulator};
use crate::sssp::{generate_graph, Graph};

/// Per-`L` decrements below this, once past their peak, end the `L` loop.
pub const TRUNCATION: f64 = 1e-15;

/// `-ln q` beyond which `q` is reported as exactly zero.
const SATURATED: f64 = 800.0;

#[derive(Clone, Debug, PartialEq)]
pub struct BoundInput {
    pub n: usize,
    pub p: f64,
    /// Tentative distances of the candidates, ascending.
    pub d: Vec<f64>,
    /// 0-based indices into `d` of the candidates actually relaxed.
    pub relaxed: Vec<usize>,
}

impl BoundInput {
    /// Ideal queue: the first `places` candidates are relaxed.
    pub fn ideal(n: usize, p: f64, d: Vec<f64>, places: usize) -> Self {
        let relaxed = (0..places.min(d.len())).collect();
        BoundInput { n, p, d, relaxed }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config(format!("bound needs n >= 2, got {}", self.n)));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::config(format!("edge probability {} outside (0, 1]", self.p)));
        }
        if self.d.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("candidate distances must be finite"));
        }
        if self.d.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("candidate distances must be ascending"));
        }
        if self.relaxed.iter().any(|&j| j >= self.d.len()) {
            return Err(Error::config("relaxed index outside the candidate list"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundOutput {
    /// Upper bound on the expected number of unsettled relaxations.
    pub w_upper: f64,
    /// Lower bound on the settled probability, one per relaxed index.
    pub q: Vec<f64>,
    /// Largest path length evaluated before truncation.
    pub max_l: usize,
}

/// `ln E(L)` for `L = 1..=n-1`, `E(L) = (n-2)!/(n-1-L)!`.
fn log_path_counts(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    out.push(f64::NAN); // L = 0 unused
    let mut acc = 0.0;
    for l in 1..n {
        if l >= 2 {
            acc += ((n - l) as f64).ln();
        }
        out.push(acc);
    }
    out
}

/// `-ln prod_L (1 - r(L))^E(L)` for one spread `h`, with the largest `L` used.
/// Infinite when some `r(L) >= 1`.
fn pair_decrement(n: usize, p: f64, h: f64, log_e: &[f64]) -> (f64, usize) {
    let h = h.clamp(0.0, 1.0);
    if h == 0.0 {
        return (0.0, 0);
    }
    let log_x = (p * h).ln();
    let mut log_r = 0.0;
    let mut total = 0.0;
    let mut peak = 0.0f64;
    for (l, &log_paths) in log_e.iter().enumerate().take(n).skip(1) {
        log_r += log_x - (l as f64).ln();
        if log_r >= 0.0 {
            return (f64::INFINITY, l);
        }
        let r = log_r.exp();
        // -ln(1 - r), exact even when r underflows
        let log_neg_log1p = if log_r < -700.0 { log_r } else { (-(-r).ln_1p()).ln() };
        let dec = (log_paths + log_neg_log1p).exp();
        total += dec;
        peak = peak.max(dec);
        if (dec < peak && dec < TRUNCATION) || total > SATURATED {
            return (total, l);
        }
    }
    (total, n - 1)
}

fn finish(neg_log_q: Vec<(f64, usize)>) -> BoundOutput {
    let q: Vec<f64> = neg_log_q.iter().map(|&(s, _)| if s >= SATURATED { 0.0 } else { (-s).exp() }).collect();
    BoundOutput {
        w_upper: q.iter().map(|q| 1.0 - q).sum(),
        max_l: neg_log_q.iter().map(|&(_, l)| l).max().unwrap_or(0),
        q,
    }
}

/// Full bound, summing over every earlier candidate `i < j` for each relaxed `j`.
pub fn useless_work_bound(input: &BoundInput, exec: Execution) -> Result<BoundOutput> {
    input.validate()?;
    let log_e = log_path_counts(input.n);
    let per_j = exec.map(&input.relaxed, |&j| {
        let mut sum = 0.0;
        let mut max_l = 0;
        for i in 0..j {
            let (dec, l) = pair_decrement(input.n, input.p, input.d[j] - input.d[i], &log_e);
            sum += dec;
            max_l = max_l.max(l);
            if sum >= SATURATED {
                break;
            }
        }
        (sum, max_l)
    });
    Ok(finish(per_j))
}

/// Weaker bound with every `h(i, j)` replaced by `h_star`.
pub fn simple_bound(input: &BoundInput, h_star: f64) -> Result<BoundOutput> {
    input.validate()?;
    if !(0.0..=1.0).contains(&h_star) {
        return Err(Error::config(format!("h* = {h_star} outside [0, 1]")));
    }
    let log_e = log_path_counts(input.n);
    let (dec, l) = pair_decrement(input.n, input.p, h_star, &log_e);
    Ok(finish(
        input
            .relaxed
            .iter()
            .map(|&j| if j == 0 { (0.0, 0) } else { (dec * j as f64, l) })
            .collect(),
    ))
}

fn check_density_args(l: usize, h: f64) -> Result<()> {
    if l == 0 {
        return Err(Error::config("path length must be at least 1"));
    }
    if !(h > 0.0 && h <= 1.0) {
        return Err(Error::config(format!("h = {h} outside (0, 1]")));
    }
    Ok(())
}

/// Density of the weight of a length-`l` path whose first `l-1` edges and
/// last edge each weigh less than `h`.
pub fn path_weight_density(l: usize, h: f64, lambda: f64) -> Result<f64> {
    check_density_args(l, h)?;
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::config(format!("weight {lambda} must be non-negative")));
    }
    let hl = h.powi(l as i32);
    Ok(if lambda > 0.0 && lambda <= h {
        lambda.powi(l as i32 - 1) / hl
    } else if lambda > h && lambda <= 2.0 * h {
        1.0 / h - (lambda - h).powi(l as i32 - 1) / hl
    } else {
        0.0
    })
}

/// Distribution function of [`path_weight_density`].
pub fn path_weight_cdf(l: usize, h: f64, lambda: f64) -> Result<f64> {
    check_density_args(l, h)?;
    let li = l as i32;
    let lf = l as f64;
    Ok(if lambda <= 0.0 {
        0.0
    } else if lambda <= h {
        (lambda / h).powi(li) / lf
    } else if lambda <= 2.0 * h {
        1.0 / lf + (lambda - h) / h - ((lambda - h) / h).powi(li) / lf
    } else {
        1.0
    })
}

/// Probability that such a path weighs less than `h`; `1 / l`.
pub fn conditioned_min_path_prob(l: usize) -> f64 {
    assert!(l >= 1, "path length must be at least 1");
    1.0 / l as f64
}

/// Draws one conditioned path weight by rejection: the first `l-1` edge
/// weights are redrawn until their sum is below `h`, then the last edge is
/// drawn below `h`.
pub fn sample_path_weight<R: Rng>(l: usize, h: f64, rng: &mut R) -> f64 {
    let edge = |rng: &mut R| h * (1.0 - rng.gen::<f64>());
    loop {
        let prefix: f64 = (1..l).map(|_| edge(rng)).sum();
        if l == 1 || prefix < h {
            return prefix + edge(rng);
        }
    }
}

const CHUNK: usize = 4096;

/// `samples` draws of [`sample_path_weight`], identical for either `exec`.
pub fn sample_path_weights(l: usize, h: f64, samples: usize, seed: u64, exec: Execution) -> Vec<f64> {
    exec.map_range(0..samples.div_ceil(CHUNK), |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, c as u64));
        let len = CHUNK.min(samples - c * CHUNK);
        (0..len).map(|_| sample_path_weight(l, h, &mut rng)).collect::<Vec<_>>()
    })
    .concat()
}

/// Monte-Carlo estimate of [`conditioned_min_path_prob`].
pub fn estimate_min_path_prob(l: usize, h: f64, samples: usize, seed: u64, exec: Execution) -> f64 {
    let weights = sample_path_weights(l, h, samples, seed, exec);
    weights.iter().filter(|&&w| w < h).count() as f64 / samples as f64
}

/// Kolmogorov-Smirnov distance between `samples` and a continuous `cdf`.
pub fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct ProbeConfig {
    pub n: usize,
    pub p: f64,
    /// Pairs sampled on each side.
    pub trials: usize,
    pub seed: u64,
    /// Front width: pairs are drawn from the `places` nodes relaxed per phase.
    pub places: usize,
    /// Upper ends of the `h` buckets.
    pub buckets: Vec<f64>,
}

impl ProbeConfig {
    pub fn new(n: usize, p: f64, trials: usize, seed: u64) -> Self {
        ProbeConfig { n, p, trials, seed, places: 8, buckets: (1..=10).map(|b| b as f64 / 10.0).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeBucket {
    pub h: f64,
    /// Fraction of front pairs joined by a path lighter than `h`.
    pub front: f64,
    /// Same for uniformly random pairs in fresh graphs.
    pub random: f64,
    /// Binomial standard error of the difference.
    pub stderr: f64,
}

impl ProbeBucket {
    /// Front rate not above the random rate, up to three standard errors.
    pub fn holds(&self) -> bool {
        self.front <= self.random + 3.0 * self.stderr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub buckets: Vec<ProbeBucket>,
    pub front_pairs: usize,
    pub random_pairs: usize,
}

impl ProbeReport {
    pub fn fraction_holding(&self) -> f64 {
        self.buckets.iter().filter(|b| b.holds()).count() as f64 / self.buckets.len().max(1) as f64
    }
}

const PAIRS_PER_GRAPH: usize = 100;

/// Shortest-path distances from `source`, exploring only below `limit`.
fn bounded_distances(graph: &Graph, source: usize, limit: f64) -> Vec<f64> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    let mut dist = vec![f64::INFINITY; graph.node_count()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((crate::PriorityKey::new(0.0), source)));
    while let Some(Reverse((d, u))) = heap.pop() {
        let d = d.value();
        if d > dist[u] {
            continue;
        }
        for (v, w) in graph.neighbors(u) {
            let nd = d + w;
            if nd < limit && nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((crate::PriorityKey::new(nd), v)));
            }
        }
    }
    dist
}

/// Compares how often phase-front pairs and random pairs are joined by light
/// paths, per `h` bucket.
pub fn conjecture_probe(config: &ProbeConfig, exec: Execution) -> Result<ProbeReport> {
    if config.n < 3 || config.n > 500 {
        return Err(Error::config(format!("probe expects 3 <= n <= 500, got {}", config.n)));
    }
    if config.places < 2 {
        return Err(Error::config("probe needs at least two places for front pairs"));
    }
    let limit = config.buckets.iter().copied().fold(0.0, f64::max);
    let graphs = config.trials.div_ceil(PAIRS_PER_GRAPH);
    let per_graph: Vec<Result<(Vec<f64>, Vec<f64>)>> = exec.map_range(0..graphs, |g| {
        let pairs = PAIRS_PER_GRAPH.min(config.trials - g * PAIRS_PER_GRAPH);
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(config.seed, 2 * g as u64));

        let graph = generate_graph(config.n, config.p, rng.gen(), Execution::Sequential)?;
        let source = rng.gen_range(0..config.n);
        let params = SimParams::new(config.places, 0, rng.gen()).without_bound();
        let mut sim = Simulator::new(&graph, source, params)?;
        let mut fronts = Vec::new();
        while let Some(phase) = sim.step() {
            if phase.relaxed_nodes.len() >= 2 {
                fronts.push(phase.relaxed_nodes);
            }
        }
        let mut front = Vec::with_capacity(pairs);
        if !fronts.is_empty() {
            for _ in 0..pairs {
                let nodes = &fronts[rng.gen_range(0..fronts.len())];
                let i = rng.gen_range(0..nodes.len() - 1);
                let j = rng.gen_range(i + 1..nodes.len());
                front.push(bounded_distances(&graph, nodes[i], limit)[nodes[j]]);
            }
        }

        let fresh = generate_graph(config.n, config.p, rng.gen(), Execution::Sequential)?;
        let random = (0..pairs)
            .map(|_| {
                let u = rng.gen_range(0..config.n);
                let mut v = rng.gen_range(0..config.n - 1);
                if v >= u {
                    v += 1;
                }
                bounded_distances(&fresh, u, limit)[v]
            })
            .collect();
        Ok((front, random))
    });
    let mut front = Vec::new();
    let mut random = Vec::new();
    for r in per_graph {
        let (f, x) = r?;
        front.extend(f);
        random.extend(x);
    }
    let rate = |xs: &[f64], h: f64| xs.iter().filter(|&&d| d < h).count() as f64 / xs.len().max(1) as f64;
    let buckets = config
        .buckets
        .iter()
        .map(|&h| {
            let (f, r) = (rate(&front, h), rate(&random, h));
            let var = f * (1.0 - f) / front.len().max(1) as f64 + r * (1.0 - r) / random.len().max(1) as f64;
            ProbeBucket { h, front: f, random: r, stderr: var.sqrt() }
        })
        .collect();
    Ok(ProbeReport { buckets, front_pairs: front.len(), random_pairs: random.len() })
}

//! Power-law likelihood ratio test on degree distributions.
//!
//! Two degree samples are compared by fitting the continuous power-law
//! approximation to each sample and to their multiset union; the statistic
//! is `Λ = −2·l(D ⊎ D') + 2·l(D) + 2·l(D')`. A perturbed graph is accepted as
//! structurally similar when `Λ < τ`. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{degree_multiset, Graph};

/// Threshold used by default for the structural similarity gate.
pub const DEFAULT_TAU: f64 = 0.000157;
pub const DEFAULT_D_MIN: u32 = 2;

/// Which log-likelihood expression to evaluate.
///
/// `Verbatim` evaluates `n·ln α + n·α·ln α − (α+1)·Σ ln d`. `DminMiddleTerm`
/// uses `n·α·ln d_min` as the middle term, which is the textbook form of the
/// discrete power-law likelihood under this approximation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodVariant {
    #[default]
    Verbatim,
    DminMiddleTerm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawStats {
    pub alpha: f64,
    pub sample_size: usize,
    pub log_likelihood: f64,
}

/// Sufficient statistics of a degree sample. Union of samples is addition,
/// which keeps `l(D ⊎ D) = 2·l(D)` exact in floating point.
#[derive(Clone, Copy, Debug, Default)]
struct LogSums {
    n: f64,
    sum_log_ratio: f64,
    sum_log: f64,
}

impl LogSums {
    fn of<D: Copy + Into<f64>>(degrees: &[D], d_min: u32) -> Result<Self> {
        if d_min == 0 {
            return Err(Error::InvalidConfig("d_min must be at least 1".into()));
        }
        let shift = f64::from(d_min) - 0.5;
        let mut sums = LogSums::default();
        for &d in degrees {
            let d: f64 = d.into();
            if d < f64::from(d_min) {
                return Err(Error::DegenerateDegreeSample(format!(
                    "degree {d} below d_min {d_min}"
                )));
            }
            sums.n += 1.0;
            sums.sum_log_ratio += (d / shift).ln();
            sums.sum_log += d.ln();
        }
        Ok(sums)
    }

    fn plus(self, other: LogSums) -> LogSums {
        LogSums {
            n: self.n + other.n,
            sum_log_ratio: self.sum_log_ratio + other.sum_log_ratio,
            sum_log: self.sum_log + other.sum_log,
        }
    }

    fn alpha(&self) -> Result<f64> {
        if self.n == 0.0 {
            return Err(Error::DegenerateDegreeSample("empty degree sample".into()));
        }
        if self.sum_log_ratio <= 0.0 || !self.sum_log_ratio.is_finite() {
            return Err(Error::DegenerateDegreeSample(format!(
                "log-sum denominator {} is not positive",
                self.sum_log_ratio
            )));
        }
        Ok(1.0 + self.n / self.sum_log_ratio)
    }

    fn log_likelihood(&self, d_min: u32, variant: LikelihoodVariant) -> Result<f64> {
        let alpha = self.alpha()?;
        let middle = match variant {
            LikelihoodVariant::Verbatim => self.n * alpha * alpha.ln(),
            LikelihoodVariant::DminMiddleTerm => self.n * alpha * f64::from(d_min).ln(),
        };
        Ok(self.n * alpha.ln() + middle - (alpha + 1.0) * self.sum_log)
    }
}

/// Scaling parameter `α = 1 + |D| / Σ ln(d / (d_min − ½))`.
pub fn estimate_alpha<D: Copy + Into<f64>>(degrees: &[D], d_min: u32) -> Result<f64> {
    LogSums::of(degrees, d_min)?.alpha()
}

pub fn log_likelihood<D: Copy + Into<f64>>(
    degrees: &[D],
    d_min: u32,
    variant: LikelihoodVariant,
) -> Result<f64> {
    LogSums::of(degrees, d_min)?.log_likelihood(d_min, variant)
}

pub fn fit<D: Copy + Into<f64>>(
    degrees: &[D],
    d_min: u32,
    variant: LikelihoodVariant,
) -> Result<PowerLawStats> {
    let sums = LogSums::of(degrees, d_min)?;
    Ok(PowerLawStats {
        alpha: sums.alpha()?,
        sample_size: degrees.len(),
        log_likelihood: sums.log_likelihood(d_min, variant)?,
    })
}

/// `Λ` for two degree samples already filtered to `d ≥ d_min`.
pub fn ratio_statistic_from_degrees<D: Copy + Into<f64>>(
    d1: &[D],
    d2: &[D],
    d_min: u32,
    variant: LikelihoodVariant,
) -> Result<f64> {
    let s1 = LogSums::of(d1, d_min)?;
    let s2 = LogSums::of(d2, d_min)?;
    let l1 = s1.log_likelihood(d_min, variant)?;
    let l2 = s2.log_likelihood(d_min, variant)?;
    let joint = s1.plus(s2).log_likelihood(d_min, variant)?;
    Ok(-2.0 * joint + 2.0 * l1 + 2.0 * l2)
}

pub fn ratio_statistic(
    g: &Graph,
    g_a: &Graph,
    d_min: u32,
    variant: LikelihoodVariant,
) -> Result<f64> {
    ratio_statistic_from_degrees(
        &degree_multiset(g, d_min),
        &degree_multiset(g_a, d_min),
        d_min,
        variant,
    )
}

/// Strict test `Λ(g, g_a) < τ`.
pub fn passes_test(
    g: &Graph,
    g_a: &Graph,
    tau: f64,
    d_min: u32,
    variant: LikelihoodVariant,
) -> Result<bool> {
    Ok(ratio_statistic(g, g_a, d_min, variant)? < tau)
}

/// Bundled gate parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawTest {
    pub tau: f64,
    pub d_min: u32,
    #[serde(default)]
    pub variant: LikelihoodVariant,
}

impl Default for PowerLawTest {
    fn default() -> Self {
        PowerLawTest {
            tau: DEFAULT_TAU,
            d_min: DEFAULT_D_MIN,
            variant: LikelihoodVariant::Verbatim,
        }
    }
}

impl PowerLawTest {
    pub fn statistic(&self, g: &Graph, g_a: &Graph) -> Result<f64> {
        ratio_statistic(g, g_a, self.d_min, self.variant)
    }

    /// Statistic from full per-node degree vectors. Samples are sorted first,
    /// so equal multisets give exactly 0.
    pub fn statistic_from_degrees(&self, d1: &[u32], d2: &[u32]) -> Result<f64> {
        let keep = |d: &[u32]| -> Vec<u32> {
            let mut kept: Vec<u32> = d.iter().copied().filter(|&x| x >= self.d_min).collect();
            kept.sort_unstable();
            kept
        };
        ratio_statistic_from_degrees(&keep(d1), &keep(d2), self.d_min, self.variant)
    }

    pub fn passes(&self, g: &Graph, g_a: &Graph) -> Result<bool> {
        Ok(self.statistic(g, g_a)? < self.tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeSet, Labels};
    use approx::assert_relative_eq;

    fn triangle_sample() -> Vec<u32> {
        vec![2, 2, 2]
    }

    #[test]
    fn alpha_of_constant_sample() {
        let alpha = estimate_alpha(&triangle_sample(), 2).unwrap();
        assert_relative_eq!(alpha, 1.0 + 1.0 / (4.0f64 / 3.0).ln(), epsilon = 1e-12);
        // independent evaluation: 4.476059496782208
        assert_relative_eq!(alpha, 4.476059496782208, epsilon = 1e-12);
    }

    #[test]
    fn alpha_is_two_when_log_terms_average_one() {
        let d = 1.5 * std::f64::consts::E;
        let alpha = estimate_alpha(&[d, d, d, d], 2).unwrap();
        assert_relative_eq!(alpha, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_sample_is_degenerate() {
        let empty: [u32; 0] = [];
        assert!(matches!(
            estimate_alpha(&empty, 2),
            Err(Error::DegenerateDegreeSample(_))
        ));
        assert!(log_likelihood(&empty, 2, LikelihoodVariant::Verbatim).is_err());
    }

    #[test]
    fn log_likelihood_matches_independent_evaluation() {
        // 3 ln α + 3 α ln α − (α+1)·3 ln 2 at α = 1 + 1/ln(4/3)
        let l = log_likelihood(&triangle_sample(), 2, LikelihoodVariant::Verbatim).unwrap();
        assert_relative_eq!(l, 13.234473272455556, epsilon = 1e-10);
        let l = log_likelihood(&triangle_sample(), 2, LikelihoodVariant::DminMiddleTerm).unwrap();
        assert_relative_eq!(l, 2.416787706604042, epsilon = 1e-10);
    }

    #[test]
    fn doubling_the_sample_doubles_the_likelihood() {
        let d: Vec<u32> = vec![2, 3, 3, 5, 8, 13, 2];
        let doubled: Vec<u32> = d.iter().chain(d.iter()).copied().collect();
        for variant in [LikelihoodVariant::Verbatim, LikelihoodVariant::DminMiddleTerm] {
            let single = LogSums::of(&d, 2).unwrap();
            let joint = single.plus(single).log_likelihood(2, variant).unwrap();
            assert_eq!(joint, 2.0 * single.log_likelihood(2, variant).unwrap());
            let direct = log_likelihood(&doubled, 2, variant).unwrap();
            assert_relative_eq!(direct, joint, max_relative = 1e-12);
        }
    }

    /// Same construction as the oracle script used to freeze the values:
    /// each node `i ≥ 1` links to two earlier nodes drawn from an LCG.
    fn lcg_graph(extra: &[(usize, usize)]) -> Graph {
        let mut pairs = Vec::new();
        let mut s: u64 = 12345;
        for i in 1..50u64 {
            for _ in 0..2 {
                s = (s * 1103515245 + 12345) % (1 << 31);
                pairs.push(((s % i) as usize, i as usize));
            }
        }
        pairs.extend_from_slice(extra);
        let edges = EdgeSet::from_pairs(pairs).unwrap();
        Graph::with_unit_features(50, edges, 1, Labels::Graph(0)).unwrap()
    }

    #[test]
    fn ratio_on_one_added_edge_matches_oracle() {
        let g = lcg_graph(&[]);
        assert_eq!(g.edge_count(), 95);
        let g_a = lcg_graph(&[(0, 49)]);
        let v = ratio_statistic(&g, &g_a, 2, LikelihoodVariant::Verbatim).unwrap();
        assert_relative_eq!(v, 0.01785355797591137, max_relative = 1e-8);
        let s = ratio_statistic(&g, &g_a, 2, LikelihoodVariant::DminMiddleTerm).unwrap();
        assert_relative_eq!(s, 0.005430632229661114, max_relative = 1e-8);
        assert!(!passes_test(&g, &g_a, DEFAULT_TAU, 2, LikelihoodVariant::Verbatim).unwrap());
    }

    #[test]
    fn identical_graphs_pass_and_boundary_is_strict() {
        let g = lcg_graph(&[]);
        let lambda = ratio_statistic(&g, &g, 2, LikelihoodVariant::Verbatim).unwrap();
        assert!(lambda.abs() < 1e-9);
        assert!(passes_test(&g, &g, DEFAULT_TAU, 2, LikelihoodVariant::Verbatim).unwrap());

        let g_a = lcg_graph(&[(0, 49)]);
        let lambda = ratio_statistic(&g, &g_a, 2, LikelihoodVariant::Verbatim).unwrap();
        assert!(!passes_test(&g, &g_a, lambda, 2, LikelihoodVariant::Verbatim).unwrap());
        assert!(passes_test(&g, &g_a, lambda * (1.0 + 1e-12), 2, LikelihoodVariant::Verbatim).unwrap());
    }
}

//! Binomial thinning and the discrete laws behind the thinning models.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts at or below this size are thinned by CDF inversion from a single
/// uniform; larger counts use one Bernoulli draw per unit.
pub const INVERSION_LIMIT: u64 = 25;

fn check_probability(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) || q.is_nan() {
        return Err(Error::Probability(q));
    }
    Ok(())
}

/// Binomial thinning `q ∘ x`: a draw from Binomial(x, q).
pub fn binomial_thin<R: Rng + ?Sized>(q: f64, x: u64, rng: &mut R) -> Result<u64> {
    check_probability(q)?;
    Ok(thin_unchecked(q, x, rng))
}

pub(crate) fn thin_unchecked<R: Rng + ?Sized>(q: f64, x: u64, rng: &mut R) -> u64 {
    if x == 0 || q <= 0.0 {
        return 0;
    }
    if q >= 1.0 {
        return x;
    }
    if x <= INVERSION_LIMIT {
        let u: f64 = rng.random();
        let ratio = q / (1.0 - q);
        let mut pk = (1.0 - q).powi(x as i32);
        let mut cdf = pk;
        let mut k = 0;
        while u >= cdf && k < x {
            pk *= ratio * (x - k) as f64 / (k + 1) as f64;
            k += 1;
            cdf += pk;
        }
        k
    } else {
        (0..x).filter(|_| rng.random::<f64>() < q).count() as u64
    }
}

/// Poisson draw; `mean == 0` returns 0.
pub fn poisson_sample<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Poisson mean must be finite and non-negative, got {mean}"
        )));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Numerical(format!("Poisson({mean}): {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Exact pmf of a sum of independent Bernoulli variables, built by adding one
/// Bernoulli at a time. Entry `k` is `P(S = k)`.
pub fn poisson_binomial_pmf(probs: &[f64]) -> Result<Vec<f64>> {
    for &p in probs {
        check_probability(p)?;
    }
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(1.0);
    for &p in probs {
        add_bernoulli(&mut pmf, p);
    }
    Ok(pmf)
}

/// Folds `count` copies of Bernoulli(p) into an existing pmf.
pub(crate) fn add_bernoulli_repeated(pmf: &mut Vec<f64>, p: f64, count: u64) {
    for _ in 0..count {
        add_bernoulli(pmf, p);
    }
}

fn add_bernoulli(pmf: &mut Vec<f64>, p: f64) {
    let q = 1.0 - p;
    pmf.push(0.0);
    for k in (1..pmf.len()).rev() {
        pmf[k] = pmf[k] * q + pmf[k - 1] * p;
    }
    pmf[0] *= q;
}

/// Discrete convolution of two pmfs supported on `{0, 1, ...}`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Poisson(mean) pmf on `{0..K}` where `K` is the first index past the mean
/// whose upper tail mass is provably below `tail_tol`.
pub fn poisson_pmf_truncated(mean: f64, tail_tol: f64) -> Result<Vec<f64>> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!("Poisson mean {mean}")));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tail tolerance {tail_tol}")));
    }
    if mean == 0.0 {
        return Ok(vec![1.0]);
    }
    let ln_mean = mean.ln();
    let mut ln_p = -mean;
    let mut pmf = vec![ln_p.exp()];
    let mut k = 0usize;
    loop {
        k += 1;
        ln_p += ln_mean - (k as f64).ln();
        let p = ln_p.exp();
        pmf.push(p);
        let ratio = mean / (k + 1) as f64;
        if ratio < 1.0 && p * ratio / (1.0 - ratio) < tail_tol {
            break;
        }
    }
    Ok(pmf)
}

/// Sum of independent non-identical Bernoulli variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonBinomial {
    probs: Vec<f64>,
    pmf: Vec<f64>,
}

impl PoissonBinomial {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let pmf = poisson_binomial_pmf(&probs)?;
        Ok(Self { probs, pmf })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn variance(&self) -> f64 {
        self.probs.iter().map(|p| p * (1.0 - p)).sum()
    }

    /// Law of the sum of `self` and an independent `other`.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut probs = self.probs.clone();
        probs.extend_from_slice(&other.probs);
        Self {
            probs,
            pmf: convolve(&self.pmf, &other.pmf),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binomial_pmf_direct(n: u64, p: f64) -> Vec<f64> {
        // product form of C(n, k) to keep the oracle independent of the DP
        (0..=n)
            .map(|k| {
                let mut c = 1.0;
                for m in 0..k {
                    c *= (n - m) as f64 / (m + 1) as f64;
                }
                c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
            })
            .collect()
    }

    pub(crate) fn enumerate_pmf(probs: &[f64]) -> Vec<f64> {
        let n = probs.len();
        let mut pmf = vec![0.0; n + 1];
        for mask in 0u32..(1 << n) {
            let mut pr = 1.0;
            for (b, &p) in probs.iter().enumerate() {
                pr *= if mask >> b & 1 == 1 { p } else { 1.0 - p };
            }
            pmf[mask.count_ones() as usize] += pr;
        }
        pmf
    }

    #[test]
    fn thinning_edge_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(binomial_thin(0.0, 17, &mut rng).unwrap(), 0);
        assert_eq!(binomial_thin(1.0, 17, &mut rng).unwrap(), 17);
        assert_eq!(binomial_thin(0.3, 0, &mut rng).unwrap(), 0);
        assert!(binomial_thin(1.2, 3, &mut rng).is_err());
        assert!(binomial_thin(-0.1, 3, &mut rng).is_err());
    }

    #[test]
    fn thinning_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let s: u64 = (0..n).map(|_| binomial_thin(0.5, 10, &mut rng).unwrap()).sum();
        let mean = s as f64 / n as f64;
        assert!((mean - 5.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn thinning_goodness_of_fit() {
        // chi-square 0.001 critical values for df = 1..=60
        fn chi2_crit(df: usize) -> f64 {
            // Wilson-Hilferty approximation with z = 3.0902
            let k = df as f64;
            let z = 3.090_232;
            k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for &q in &[0.3, 0.7] {
            for &x in &[5u64, 50] {
                let draws = 100_000;
                let mut counts = vec![0f64; x as usize + 1];
                for _ in 0..draws {
                    counts[binomial_thin(q, x, &mut rng).unwrap() as usize] += 1.0;
                }
                let pmf = binomial_pmf_direct(x, q);
                // pool cells with expected count < 5 into their neighbours
                let mut obs = Vec::new();
                let mut exp = Vec::new();
                let (mut o, mut e) = (0.0, 0.0);
                for k in 0..=x as usize {
                    o += counts[k];
                    e += pmf[k] * draws as f64;
                    if e >= 5.0 {
                        obs.push(o);
                        exp.push(e);
                        o = 0.0;
                        e = 0.0;
                    }
                }
                if e > 0.0 {
                    *obs.last_mut().unwrap() += o;
                    *exp.last_mut().unwrap() += e;
                }
                let stat: f64 = obs
                    .iter()
                    .zip(&exp)
                    .map(|(o, e)| (o - e) * (o - e) / e)
                    .sum();
                let df = obs.len() - 1;
                assert!(stat < chi2_crit(df), "q={q} x={x} chi2={stat} df={df}");
            }
        }
    }

    #[test]
    fn poisson_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(poisson_sample(0.0, &mut rng).unwrap(), 0);
        assert!(poisson_sample(-1.0, &mut rng).is_err());
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| poisson_sample(10.0, &mut rng).unwrap() as f64)
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 10.0).abs() < 0.1, "{mean}");
        assert!((var - 10.0).abs() < 0.3, "{var}");
    }

    #[test]
    fn pmf_small_cases() {
        assert_eq!(poisson_binomial_pmf(&[]).unwrap(), vec![1.0]);
        assert_eq!(poisson_binomial_pmf(&[0.5, 0.5]).unwrap(), vec![0.25, 0.5, 0.25]);
        assert!(poisson_binomial_pmf(&[0.5, 1.5]).is_err());
    }

    #[test]
    fn pmf_matches_enumeration() {
        let probs = [0.1, 0.93, 0.5, 0.27, 0.0, 1.0, 0.61, 0.05];
        let dp = poisson_binomial_pmf(&probs).unwrap();
        let brute = enumerate_pmf(&probs);
        for (a, b) in dp.iter().zip(&brute) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn truncated_poisson_tail() {
        let pmf = poisson_pmf_truncated(4.0, 1e-10).unwrap();
        let mass: f64 = pmf.iter().sum();
        assert!((1.0 - mass) < 1e-10);
        assert!((pmf[0] - (-4.0f64).exp()).abs() < 1e-15);
        // no underflow trouble at large means
        let big = poisson_pmf_truncated(1000.0, 1e-8).unwrap();
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert_eq!(poisson_pmf_truncated(0.0, 1e-6).unwrap(), vec![1.0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn equal_probs_give_binomial(n in 0u64..40, p in 0.0f64..=1.0) {
                let pmf = poisson_binomial_pmf(&vec![p; n as usize]).unwrap();
                let direct = binomial_pmf_direct(n, p);
                for (a, b) in pmf.iter().zip(&direct) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }

            #[test]
            fn pmf_normalised_with_correct_mean(probs in proptest::collection::vec(0.0f64..=1.0, 0..60)) {
                let pb = PoissonBinomial::new(probs).unwrap();
                let total: f64 = pb.pmf().iter().sum();
                prop_assert!((total - 1.0).abs() <= 1e-12);
                prop_assert!(pb.pmf().iter().all(|&x| x >= 0.0));
                let mean: f64 = pb.pmf().iter().enumerate().map(|(k, p)| k as f64 * p).sum();
                prop_assert!((mean - pb.mean()).abs() <= 1e-10);
            }

            #[test]
            fn convolution_is_concatenation(
                a in proptest::collection::vec(0.0f64..=1.0, 0..20),
                b in proptest::collection::vec(0.0f64..=1.0, 0..20),
            ) {
                let pa = PoissonBinomial::new(a.clone()).unwrap();
                let pb = PoissonBinomial::new(b.clone()).unwrap();
                let joined = PoissonBinomial::new([a, b].concat()).unwrap();
                let conv = pa.convolve(&pb);
                for (x, y) in conv.pmf().iter().zip(joined.pmf()) {
                    prop_assert!((x - y).abs() <= 1e-12);
                }
            }
        }
    }
}

//! Parametric families used by the temporal feature scores, with
//! maximum-likelihood fitting.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use libm::erfc;

/// Smallest standard deviation a fit may return, in years.
pub const SIGMA_FLOOR: f64 = 0.5;
/// Smallest mean used when fitting an exponential rate, in years.
pub const MEAN_FLOOR: f64 = 0.5;
/// Bernoulli probability used when a statistic has too few observations.
pub const PRIOR_PROBABILITY: f64 = 0.5;
/// Wide Gaussian used when a gap statistic has too few observations.
pub const PRIOR_GAUSSIAN: Gaussian = Gaussian { mu: 0.0, sigma: 100.0 };

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mu: f64,
    pub sigma: f64,
}

impl Gaussian {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z - self.sigma.ln() - LN_SQRT_2PI
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Mean and (population) standard deviation, with the standard deviation
    /// floored at [`SIGMA_FLOOR`]. `None` for fewer than two samples.
    pub fn fit(samples: &[f64]) -> Option<Self> {
        if samples.len() < 2 {
            return None;
        }
        let n = samples.len() as f64;
        let mu = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
        Some(Gaussian {
            mu,
            sigma: var.sqrt().max(SIGMA_FLOOR),
        })
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponential {
    pub lambda: f64,
}

impl Exponential {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            f64::NEG_INFINITY
        } else {
            self.lambda.ln() - self.lambda * x
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// Rate `1 / mean` with the mean floored at [`MEAN_FLOOR`].
    pub fn fit(samples: &[f64]) -> Option<Self> {
        if samples.len() < 2 {
            return None;
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Some(Exponential {
            lambda: 1.0 / mean.max(MEAN_FLOOR),
        })
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }
}

/// Distribution of the time gap between two relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum GapDistribution {
    Gaussian(Gaussian),
    Exponential(Exponential),
}

impl GapDistribution {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            GapDistribution::Gaussian(g) => g.pdf(x),
            GapDistribution::Exponential(e) => e.pdf(x),
        }
    }

    /// Fits both families and keeps the one with the larger log-likelihood.
    pub fn fit(gaps: &[f64]) -> Option<Self> {
        let g = Gaussian::fit(gaps)?;
        let e = Exponential::fit(gaps)?;
        if e.log_likelihood(gaps) > g.log_likelihood(gaps) {
            Some(GapDistribution::Exponential(e))
        } else {
            Some(GapDistribution::Gaussian(g))
        }
    }
}

/// Standard normal CDF in log space, stable far into the lower tail.
pub fn ln_std_normal_cdf(t: f64) -> f64 {
    if t > -30.0 {
        (0.5 * erfc(-t / SQRT_2)).ln()
    } else {
        let t2 = t * t;
        -0.5 * t2 - (-t).ln() - LN_SQRT_2PI + (1.0 - 1.0 / t2 + 3.0 / (t2 * t2)).ln()
    }
}

/// Gaussian restricted to `[0, ∞)` and renormalised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedGaussian {
    pub mu: f64,
    pub sigma: f64,
}

impl TruncatedGaussian {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return f64::NEG_INFINITY;
        }
        Gaussian { mu: self.mu, sigma: self.sigma }.ln_pdf(x) - ln_std_normal_cdf(self.mu / self.sigma)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }

    /// Draws one sample. Uses plain rejection when the mean is inside the
    /// support and Robert's exponential proposal otherwise, so very negative
    /// means stay cheap.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma <= 0.0 {
            return self.mu.max(0.0);
        }
        let lower = -self.mu / self.sigma;
        let z = if lower <= 0.0 {
            loop {
                let z: f64 = StandardNormal.sample(rng);
                if z >= lower {
                    break z;
                }
            }
        } else {
            let alpha = 0.5 * (lower + (lower * lower + 4.0).sqrt());
            loop {
                let e: f64 = Exp1.sample(rng);
                let z = lower + e / alpha;
                let rho = (-0.5 * (z - alpha).powi(2)).exp();
                if rng.random::<f64>() <= rho {
                    break z;
                }
            }
        };
        (self.mu + self.sigma * z).max(0.0)
    }

    fn gradient(samples: &[f64], mu: f64, sigma: f64) -> (f64, f64) {
        let n = samples.len() as f64;
        let a = mu / sigma;
        let mills = (-0.5 * a * a - LN_SQRT_2PI - ln_std_normal_cdf(a)).exp();
        let (s1, s2) = samples.iter().fold((0.0, 0.0), |(s1, s2), &x| {
            let d = x - mu;
            (s1 + d, s2 + d * d)
        });
        let d_mu = s1 / (sigma * sigma) - n * mills / sigma;
        let d_sigma = -n / sigma + s2 / sigma.powi(3) + n * mills * mu / (sigma * sigma);
        (d_mu, d_sigma)
    }

    /// Maximum-likelihood fit. Starts from the sample moments and runs
    /// damped Newton steps on `(mu, ln sigma)`. Falls back to the moments
    /// when the samples are (nearly) constant.
    pub fn fit(samples: &[f64]) -> Option<Self> {
        let moments = Gaussian::fit(samples)?;
        let n = samples.len() as f64;
        let raw_sd = (samples.iter().map(|x| (x - moments.mu).powi(2)).sum::<f64>() / n).sqrt();
        if raw_sd < SIGMA_FLOOR {
            return Some(TruncatedGaussian { mu: moments.mu, sigma: SIGMA_FLOOR });
        }
        let ll = |mu: f64, s: f64| TruncatedGaussian { mu, sigma: s.exp() }.log_likelihood(samples);
        // gradient in (mu, s = ln sigma)
        let grad = |mu: f64, s: f64| {
            let sigma = s.exp();
            let (gm, gs) = Self::gradient(samples, mu, sigma);
            (gm, gs * sigma)
        };
        let (mut mu, mut s) = (moments.mu, moments.sigma.ln());
        let mut current = ll(mu, s);
        for _ in 0..200 {
            let (g0, g1) = grad(mu, s);
            if g0.abs() + g1.abs() < 1e-9 * n {
                break;
            }
            let h = 1e-5;
            let (a0, a1) = grad(mu + h, s);
            let (b0, b1) = grad(mu, s + h);
            let (h00, h01, h10, h11) = ((a0 - g0) / h, (a1 - g1) / h, (b0 - g0) / h, (b1 - g1) / h);
            let (h01, h10) = (0.5 * (h01 + h10), 0.5 * (h01 + h10));
            let det = h00 * h11 - h01 * h10;
            // Newton direction if the Hessian is negative definite, else ascent.
            let (mut d0, mut d1) = if h00 < 0.0 && det > 0.0 {
                (-(h11 * g0 - h01 * g1) / det, -(-h10 * g0 + h00 * g1) / det)
            } else {
                (g0 / n, g1 / n)
            };
            let mut improved = false;
            for _ in 0..40 {
                let cand = ll(mu + d0, s + d1);
                if cand.is_finite() && cand >= current {
                    mu += d0;
                    s += d1;
                    current = cand;
                    improved = true;
                    break;
                }
                d0 *= 0.5;
                d1 *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let sigma = s.exp();
        if !mu.is_finite() || !sigma.is_finite() {
            return Some(TruncatedGaussian { mu: moments.mu, sigma: moments.sigma });
        }
        Some(TruncatedGaussian { mu, sigma: sigma.max(SIGMA_FLOOR) })
    }
}

/// Empirical Bernoulli parameter; `None` for fewer than two trials.
pub fn fit_bernoulli(successes: usize, trials: usize) -> Option<f64> {
    (trials >= 2).then(|| successes as f64 / trials as f64)
}

/// Bernoulli likelihood of an observed indicator.
pub fn bernoulli_likelihood(p: f64, observed: bool) -> f64 {
    if observed {
        p
    } else {
        1.0 - p
    }
}

/// Gaussian density, exposed for the worked pair-interval example.
pub fn gaussian_density(x: f64, mu: f64, sigma: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
}

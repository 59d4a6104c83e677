use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

use super::chain::{Chain, SamplerKind};
use super::prior::PriorSpec;
use super::McmcSettings;

/// Acceptance probability `min(1, exp(log_target_new − log_target_old))` for a
/// symmetric proposal.
pub fn mh_accept_prob(log_target_old: f64, log_target_new: f64) -> f64 {
    if log_target_new.is_nan() {
        return 0.0;
    }
    let delta = log_target_new - log_target_old;
    if delta >= 0.0 {
        1.0
    } else {
        delta.exp()
    }
}

/// Random-walk Metropolis-Hastings with proposal `N(θ, scale²·I)`.
///
/// `loglik` may return `-∞` (or NaN) for impossible states; such proposals
/// are rejected.
pub fn metropolis_hastings<F>(
    loglik: F,
    prior: &PriorSpec,
    proposal_scale: f64,
    settings: &McmcSettings,
    init: &[f64],
    names: Vec<String>,
) -> Result<Chain>
where
    F: Fn(&[f64]) -> f64,
{
    settings.validate()?;
    if !(proposal_scale >= 0.0) || !proposal_scale.is_finite() {
        return Err(Error::Domain(format!("proposal scale must be nonnegative, got {proposal_scale}")));
    }
    let d = prior.dim();
    if init.len() != d {
        return Err(Error::Shape(format!("init has {} entries, prior has dimension {d}", init.len())));
    }
    let log_prior = prior.log_density(init);
    let ll = loglik(init);
    if !log_prior.is_finite() {
        return Err(Error::Initialization("prior density is zero at the initial value".into()));
    }
    if !ll.is_finite() {
        return Err(Error::Initialization(format!("log-likelihood at the initial value is {ll}")));
    }
    let mut rng = rng_from_seed(settings.seed);
    let mut current = init.to_vec();
    let mut current_target = ll + log_prior;
    let mut draws = DMatrix::zeros(settings.n_draws, d);
    let mut accepted = 0usize;
    let mut proposal = vec![0.0; d];
    for m in 0..settings.n_draws {
        for (p, c) in proposal.iter_mut().zip(&current) {
            let xi: f64 = StandardNormal.sample(&mut rng);
            *p = c + proposal_scale * xi;
        }
        let target = loglik(&proposal) + prior.log_density(&proposal);
        let u: f64 = rng.random();
        if u <= mh_accept_prob(current_target, target) {
            current.copy_from_slice(&proposal);
            current_target = target;
            accepted += 1;
        }
        for (j, v) in current.iter().enumerate() {
            draws[(m, j)] = *v;
        }
    }
    let rate = accepted as f64 / settings.n_draws as f64;
    Chain::new(draws, names, settings.burn_in, settings.seed, SamplerKind::Metropolis, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn settings(n_draws: usize, burn_in: usize, seed: u64) -> McmcSettings {
        McmcSettings { n_draws, burn_in, seed }
    }

    #[test]
    fn identical_state_always_accepted() {
        assert_eq!(mh_accept_prob(-3.2, -3.2), 1.0);
        let prior = PriorSpec::weak(2, 1.0).unwrap();
        let chain = metropolis_hastings(|_| 0.0, &prior, 0.0, &settings(50, 0, 1), &[0.1, 0.2], vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(chain.acceptance_rate(), 1.0);
        assert!(chain.draws().row_iter().all(|r| r[0] == 0.1 && r[1] == 0.2));
    }

    #[test]
    fn flat_likelihood_recovers_prior() {
        let prior = PriorSpec::isotropic(vec![1.0, -2.0], 0.25).unwrap();
        let chain = metropolis_hastings(|_| 0.0, &prior, 0.6, &settings(60_000, 1_000, 3), &[1.0, -2.0], vec!["a".into(), "b".into()]).unwrap();
        let kept = chain.kept();
        for j in 0..2 {
            let col = kept.column(j);
            let mean = col.mean();
            // Batch-means standard error accounts for autocorrelation.
            let batches = 50;
            let len = col.len() / batches;
            let bm: Vec<f64> = (0..batches).map(|b| col.rows(b * len, len).mean()).collect();
            let bmean = bm.iter().sum::<f64>() / batches as f64;
            let se = (bm.iter().map(|v| (v - bmean).powi(2)).sum::<f64>() / (batches - 1) as f64 / batches as f64).sqrt();
            assert!((mean - prior.mean()[j]).abs() < 3.0 * se, "coord {j}: {mean} se {se}");
        }
    }

    #[test]
    fn invalid_initialization() {
        let prior = PriorSpec::weak(1, 1.0).unwrap();
        let err = metropolis_hastings(|_| f64::NEG_INFINITY, &prior, 0.1, &settings(10, 0, 1), &[0.0], vec!["a".into()]).unwrap_err();
        assert!(matches!(err, Error::Initialization(_)));
        let err = metropolis_hastings(|_| 0.0, &prior, 0.1, &settings(10, 0, 1), &[1e300], vec!["a".into()]).unwrap_err();
        assert!(matches!(err, Error::Initialization(_)));
    }

    #[test]
    fn detailed_balance_on_two_states() {
        // Symmetric proposal that flips between two states; target (0.3, 0.7).
        let pi = [0.3f64, 0.7];
        let mut rng = rng_from_seed(12);
        let mut state = 0usize;
        let mut counts = [[0usize; 2]; 2];
        let steps = 400_000;
        for _ in 0..steps {
            let prop = 1 - state;
            let u: f64 = rng.random();
            let next = if u <= mh_accept_prob(pi[state].ln(), pi[prop].ln()) { prop } else { state };
            counts[state][next] += 1;
            state = next;
        }
        let flow01 = counts[0][1] as f64 / steps as f64;
        let flow10 = counts[1][0] as f64 / steps as f64;
        assert!((flow01 - flow10).abs() < 0.005, "{flow01} vs {flow10}");
        let p01 = counts[0][1] as f64 / (counts[0][0] + counts[0][1]) as f64;
        assert!((p01 - 1.0).abs() < 1e-12);
        let p10 = counts[1][0] as f64 / (counts[1][0] + counts[1][1]) as f64;
        assert!((p10 - 3.0 / 7.0).abs() < 0.01);
        let occupancy0 = (counts[0][0] + counts[0][1]) as f64 / steps as f64;
        assert!((occupancy0 - 0.3).abs() < 0.01);
    }
}

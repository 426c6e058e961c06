//! Monte-Carlo ground truth for the theoretical importance of a column group
//! and for the asymptotic bias of the uncorrected estimator.
//!
//! Both quantities need `E[. | X^(-J)]`, which is estimated by nested Monte
//! Carlo: each outer draw `x` is followed by `ceil(sqrt(n_mc))` inner draws of
//! `X^(J)` from its conditional law given the remaining coordinates of `x`.
//! Draws come from xoshiro256++ streams (cheaper per normal than the
//! ChaCha streams used elsewhere), seeded per chunk of outer draws.
//! The squared terms are corrected by the inner sample variance so that
//! neither form is inflated by the finite inner sample.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::simulation::CovariateLaw;

const CHUNK: usize = 1024;

/// Theoretical importance computed through two algebraically equal routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleImportance {
    /// `E[(tau - E[tau | X^(-J)])^2] / V[tau]`.
    pub squared_form: f64,
    /// `(V[tau] - V[E[tau | X^(-J)]]) / V[tau]`.
    pub variance_form: f64,
    pub tau_variance: f64,
}

impl OracleImportance {
    pub fn value(&self) -> f64 {
        self.squared_form
    }
}

#[derive(Default, Clone, Copy)]
struct Sums {
    count: f64,
    tau: f64,
    tau2: f64,
    cond: f64,
    cond2: f64,
    gap2: f64,
    bias: f64,
}

impl Sums {
    fn add(mut self, o: Sums) -> Sums {
        self.count += o.count;
        self.tau += o.tau;
        self.tau2 += o.tau2;
        self.cond += o.cond;
        self.cond2 += o.cond2;
        self.gap2 += o.gap2;
        self.bias += o.bias;
        self
    }

    fn tau_variance(&self) -> f64 {
        let m = self.tau / self.count;
        self.tau2 / self.count - m * m
    }
}

fn inner_count(n_mc: usize) -> usize {
    ((n_mc as f64).sqrt().ceil() as usize).max(2)
}

/// Runs the nested simulation. `propensity` enables the bias accumulator.
fn nested<L, T, P>(law: &L, tau: &T, propensity: Option<&P>, drop: &[usize], n_mc: usize, seed: u64) -> Result<Sums>
where
    L: CovariateLaw,
    T: Fn(&[f64]) -> f64 + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
{
    if n_mc < 2 {
        return Err(Error::InvalidParams("n_mc must be at least 2".into()));
    }
    if let Some(&j) = drop.iter().find(|&&j| j >= law.dim()) {
        return Err(Error::FeatureOutOfRange { index: j, p: law.dim() });
    }
    let inner = inner_count(n_mc);
    let chunks = n_mc.div_ceil(CHUNK);
    let partial: Vec<Sums> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed::derive(seed, c as u64));
            let mut x = vec![0.0; law.dim()];
            let mut z = vec![0.0; law.dim()];
            let mut s = Sums::default();
            let len = CHUNK.min(n_mc - c * CHUNK);
            for _ in 0..len {
                law.sample(&mut rng, &mut x);
                let t = tau(&x);
                let (mut st, mut st2, mut sg, mut stg) = (0.0, 0.0, 0.0, 0.0);
                z.copy_from_slice(&x);
                // Separate loops keep the propensity work out of the plain case.
                match propensity {
                    None => law.resample_repeat(drop, &mut rng, &mut z, inner, |z| {
                        let tz = tau(z);
                        st += tz;
                        st2 += tz * tz;
                    }),
                    Some(pi) => law.resample_repeat(drop, &mut rng, &mut z, inner, |z| {
                        let tz = tau(z);
                        let pz = pi(z);
                        let g = pz * (1.0 - pz);
                        st += tz;
                        st2 += tz * tz;
                        sg += g;
                        stg += tz * g;
                    }),
                }
                let k = inner as f64;
                let cond = st / k;
                // The inner mean carries variance s^2 / k on top of the
                // conditional mean it estimates; remove it from both forms.
                let noise = ((st2 - k * cond * cond) / (k - 1.0)).max(0.0) / k;
                s.count += 1.0;
                s.tau += t;
                s.tau2 += t * t;
                s.cond += cond;
                s.cond2 += cond * cond - noise;
                s.gap2 += (t - cond).powi(2) - noise;
                if propensity.is_some() {
                    let g_mean = sg / k;
                    let cov = stg / k - (st / k) * g_mean;
                    if g_mean > 0.0 {
                        s.bias += (cov / g_mean).powi(2);
                    }
                }
            }
            s
        })
        .collect();
    Ok(partial.into_iter().fold(Sums::default(), Sums::add))
}

/// Share of effect variance lost when the columns `drop` are removed.
pub fn oracle_importance<L, T>(tau: T, law: &L, drop: &[usize], n_mc: usize, seed: u64) -> Result<OracleImportance>
where
    L: CovariateLaw,
    T: Fn(&[f64]) -> f64 + Sync,
{
    let s = nested(law, &tau, None::<&fn(&[f64]) -> f64>, drop, n_mc, seed)?;
    let v = s.tau_variance();
    if v < 1e-12 {
        return Err(Error::ZeroVariance);
    }
    let cond_mean = s.cond / s.count;
    let cond_var = s.cond2 / s.count - cond_mean * cond_mean;
    Ok(OracleImportance {
        squared_form: s.gap2 / s.count / v,
        variance_form: (v - cond_var) / v,
        tau_variance: v,
    })
}

/// Additive asymptotic bias of the importance estimate computed without
/// the covariance correction:
/// `E[Cov[tau, pi(1-pi) | X^(-J)]^2 / E[pi(1-pi) | X^(-J)]^2] / V[tau]`.
pub fn oracle_bias<L, T, P>(tau: T, propensity: P, law: &L, drop: &[usize], n_mc: usize, seed: u64) -> Result<f64>
where
    L: CovariateLaw,
    T: Fn(&[f64]) -> f64 + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
{
    let s = nested(law, &tau, Some(&propensity), drop, n_mc, seed)?;
    let v = s.tau_variance();
    if v < 1e-12 {
        return Err(Error::ZeroVariance);
    }
    Ok(s.bias / s.count / v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::Experiment;

    #[test]
    fn experiment1_closed_form_for_x2() {
        // I(2) = 0.36 V[X+] / (V[X1+] + 0.36 V[X2+]) = 0.36 / 1.36 for iid standard normals.
        let spec = Experiment::Experiment1.spec();
        let r = oracle_importance(|x| spec.effect(x), &spec, &[1], 40_000, 1).unwrap();
        assert!((r.squared_form - 0.36 / 1.36).abs() < 0.02, "{r:?}");
        assert!((r.squared_form - r.variance_form).abs() < 0.01);
    }

    #[test]
    fn constant_effect_has_zero_variance() {
        let spec = Experiment::Experiment1.spec();
        assert!(matches!(
            oracle_importance(|_| 1.5, &spec, &[0], 1000, 1),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn constant_propensity_has_no_bias() {
        let spec = Experiment::Experiment3.spec();
        let b = oracle_bias(|x| spec.effect(x), |_| 0.5, &spec, &[0], 10_000, 2).unwrap();
        assert_eq!(b, 0.0);
    }

    #[test]
    fn irrelevant_column_has_no_bias() {
        // X3 is independent of (tau, pi), both of which depend on X1 only.
        let spec = Experiment::Experiment3.spec();
        let b = oracle_bias(|x| spec.effect(x), |x| spec.propensity(x), &spec, &[2], 10_000, 3).unwrap();
        assert!(b.abs() < 1e-20, "{b}");
    }

    #[test]
    fn deterministic_under_seed() {
        let spec = Experiment::Experiment2.spec();
        let a = oracle_importance(|x| spec.effect(x), &spec, &[1], 5000, 9).unwrap();
        let b = oracle_importance(|x| spec.effect(x), &spec, &[1], 5000, 9).unwrap();
        assert_eq!(a, b);
    }
}

//! Repeated runs of one scenario with derived seeds.

use quantnoise_core::rng::derive_seed;
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::formats::{num, Table};
use crate::scenario::run_scenario;

/// Per-run fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunParams {
    pub seed: u64,
    pub mean: f64,
    pub sigma: f64,
    pub max_residual: f64,
    pub delta_eps: Option<f64>,
    pub converged: bool,
}

/// Replication mean and variance of `F̂(x_j)` for one abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointStats {
    pub x: f64,
    pub group_size: usize,
    pub mean: f64,
    /// Unbiased sample variance over replications.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationStats {
    pub replications: usize,
    pub records: usize,
    pub runs: Vec<RunParams>,
    /// Present when every run estimated the CDF at the same abscissas.
    pub points: Option<Vec<PointStats>>,
}

/// Seed of replication `i` under `master`.
pub fn replication_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, 0x5EED_0000 + i as u64)
}

/// Runs `cfg` `m` times; replication `i` uses [`replication_seed`].
pub fn run_replications(cfg: &ScenarioConfig, m: usize) -> Result<ReplicationStats> {
    if m < 2 {
        return Err(Error::Config(format!("replications must be >= 2, got {m}")));
    }
    let runs: Vec<(RunParams, Vec<f64>, Vec<(f64, usize)>)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = replication_seed(cfg.seed, i);
            let out = run_scenario(&c)?;
            let params = RunParams {
                seed: c.seed,
                mean: out.fit.mean,
                sigma: out.fit.sigma,
                max_residual: out.fit.max_residual,
                delta_eps: out.delta_eps,
                converged: out.non_convergence().is_none(),
            };
            let abscissas = out.estimate.points.iter().map(|p| (p.x, p.group_size)).collect();
            Ok((params, out.estimate.fs(), abscissas))
        })
        .collect::<Result<_>>()?;

    let same_grid = runs.windows(2).all(|w| {
        w[0].2.len() == w[1].2.len()
            && w[0].2.iter().zip(&w[1].2).all(|(a, b)| a.0.to_bits() == b.0.to_bits() && a.1 == b.1)
    });
    let points = same_grid.then(|| {
        let grid = &runs[0].2;
        let mf = m as f64;
        (0..grid.len())
            .map(|j| {
                let mean = runs.iter().map(|r| r.1[j]).sum::<f64>() / mf;
                let variance = runs.iter().map(|r| (r.1[j] - mean).powi(2)).sum::<f64>() / (mf - 1.0);
                PointStats { x: grid[j].0, group_size: grid[j].1, mean, variance }
            })
            .collect()
    });
    Ok(ReplicationStats {
        replications: m,
        records: cfg.records,
        runs: runs.into_iter().map(|r| r.0).collect(),
        points,
    })
}

impl ReplicationStats {
    pub fn points_table(&self) -> Option<Table> {
        let points = self.points.as_ref()?;
        let mut t = Table::new(&["j", "x_j", "L_j", "mean", "variance", "binomial_variance"]);
        t.comment(format!("replications={} records={}", self.replications, self.records));
        for (j, p) in points.iter().enumerate() {
            let theory = p.mean * (1.0 - p.mean) / (self.records * p.group_size) as f64;
            t.push(vec![
                (j + 1).to_string(),
                num(p.x),
                p.group_size.to_string(),
                num(p.mean),
                num(p.variance),
                num(theory),
            ]);
        }
        Some(t)
    }

    pub fn runs_table(&self) -> Table {
        let mut t = Table::new(&["run", "seed", "mu_hat", "sigma_hat", "max_residual", "delta_eps", "converged"]);
        let n = self.runs.len() as f64;
        let mean_mu = self.runs.iter().map(|r| r.mean).sum::<f64>() / n;
        let mean_sigma = self.runs.iter().map(|r| r.sigma).sum::<f64>() / n;
        let sd = |f: fn(&RunParams) -> f64, m: f64| {
            (self.runs.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        t.comment(format!(
            "mu_hat: mean={} sd={}  sigma_hat: mean={} sd={}",
            num(mean_mu),
            num(sd(|r| r.mean, mean_mu)),
            num(mean_sigma),
            num(sd(|r| r.sigma, mean_sigma))
        ));
        for (i, r) in self.runs.iter().enumerate() {
            t.push(vec![
                i.to_string(),
                r.seed.to_string(),
                num(r.mean),
                num(r.sigma),
                num(r.max_residual),
                r.delta_eps.map(num).unwrap_or_else(|| "none".into()),
                r.converged.to_string(),
            ]);
        }
        t
    }
}

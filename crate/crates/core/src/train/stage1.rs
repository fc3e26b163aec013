//! Stage 1: random search over reward weight vectors. Candidates are drawn
//! uniformly from the 4-simplex, each trains a short policy, and candidates
//! are ranked by joint satisfaction rate (all four criteria at once).

use super::adam::Adam;
use super::eval::{evaluate, SatisfactionRates, SatisfactionThresholds};
use super::ppo::{PpoConfig, PpoTrainer};
use crate::env::EnvConfig;
use crate::nn::{NetConfig, PolicyNet};
use crate::par::Exec;
use crate::reward::WeightVector;
use crate::seeding;
use crate::Result;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stage1Config {
    pub n_candidates: usize,
    pub updates_per_candidate: usize,
    pub eval_episodes: usize,
    pub thresholds: SatisfactionThresholds,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            n_candidates: 8,
            updates_per_candidate: 30,
            eval_episodes: 8,
            thresholds: SatisfactionThresholds::default(),
        }
    }
}

/// Uniform draw from the open 4-simplex: four Exp(1) variates, normalized.
pub fn sample_weight_vector(rng: &mut ChaCha8Rng) -> WeightVector {
    let mut w = [0.0; 4];
    loop {
        let mut total = 0.0;
        for x in w.iter_mut() {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            *x = -u.ln();
            total += *x;
        }
        if total > 0.0 && w.iter().all(|x| x.is_finite()) {
            for x in w.iter_mut() {
                *x /= total;
            }
            // Renormalization error can leave the L1 norm off by an ulp;
            // push the largest entry to absorb it.
            let l1: f64 = w.iter().sum();
            w[0] += 1.0 - l1;
            if let Ok(v) = WeightVector::new(w) {
                return v;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub weights: WeightVector,
    pub rates: SatisfactionRates,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage1Report {
    /// Candidates sorted by score, best first. Ties keep candidate order.
    pub ranked: Vec<Candidate>,
}

impl Stage1Report {
    pub fn best(&self) -> &Candidate {
        &self.ranked[0]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "rank,candidate,w_formation,w_flight,w_obstacle,w_action,\
             sr_flight,sr_formation,sr_obstacle,sr_action,sr\n",
        );
        for (rank, c) in self.ranked.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                rank,
                c.index,
                c.weights.w_formation,
                c.weights.w_flight,
                c.weights.w_obstacle,
                c.weights.w_action,
                c.rates.flight,
                c.rates.formation,
                c.rates.obstacle,
                c.rates.action,
                c.score
            ));
        }
        out
    }
}

/// Train and score every candidate. Progress lines go through `log`.
pub fn run_stage1(
    cfg: &Stage1Config,
    env_cfg: &EnvConfig,
    net_cfg: NetConfig,
    ppo_cfg: PpoConfig,
    seed: u64,
    exec: Exec,
    mut log: impl FnMut(&str),
) -> Result<Stage1Report> {
    let mut weight_rng = seeding::rng_for(seed, "stage1-weights", 0);
    let mut candidates = Vec::with_capacity(cfg.n_candidates);
    for i in 0..cfg.n_candidates {
        let weights = sample_weight_vector(&mut weight_rng);
        let net = PolicyNet::new(net_cfg, seeding::derive_seed(seed, "stage1-net", i as u64))?;
        let opt = Adam::new(ppo_cfg.adam, &net);
        let mut trainer = PpoTrainer::new(
            net,
            opt,
            ppo_cfg,
            env_cfg.clone(),
            weights,
            seed,
            &format!("stage1-c{i}"),
            exec,
        )?;
        for _ in 0..cfg.updates_per_candidate {
            trainer.train_update()?;
        }
        let (rates, _) = evaluate(
            &trainer.net,
            env_cfg,
            cfg.eval_episodes,
            seeding::derive_seed(seed, "stage1-eval", i as u64),
            &cfg.thresholds,
            exec,
        )?;
        // Ranking criterion: the joint satisfaction rate (all four at once).
        let score = rates.sr;
        log(&format!(
            "candidate {i}: w = {:?}, score = {score:.4}",
            weights.to_array()
        ));
        candidates.push(Candidate { index: i, weights, rates, score });
    }
    candidates.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.index.cmp(&b.index)));
    Ok(Stage1Report { ranked: candidates })
}

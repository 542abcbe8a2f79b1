//! Stateless Q-learning over the seven criterion configurations.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::LinearModel;
use crate::data_pool::Label;
use crate::error::{invalid, Result};
use crate::metrics::Confusion;
use crate::strategies::LambdaConfig;

const N_ACTIONS: usize = LambdaConfig::ALL.len();

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BanditConfig {
    pub lr: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub initial_q: f64,
    /// Carried for completeness; one-step updates have no successor value.
    pub discount: f64,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self { lr: 0.5, epsilon: 0.5, epsilon_decay: 0.8, initial_q: 1.0, discount: 0.0 }
    }
}

impl BanditConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.lr > 0.0 && self.lr <= 1.0) {
            return Err(invalid("bandit lr must lie in (0, 1]"));
        }
        if !(unit(self.epsilon) && unit(self.epsilon_decay) && unit(self.initial_q) && unit(self.discount)) {
            return Err(invalid("epsilon, epsilon_decay, initial_q and discount must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    /// Value estimates indexed like [`LambdaConfig::ALL`].
    pub q: [f64; N_ACTIONS],
    pub counts: [u64; N_ACTIONS],
    pub lr: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub action: LambdaConfig,
    pub q: f64,
    pub count: u64,
}

impl QTable {
    pub fn new(config: &BanditConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            q: [config.initial_q; N_ACTIONS],
            counts: [0; N_ACTIONS],
            lr: config.lr,
            epsilon: config.epsilon,
            epsilon_decay: config.epsilon_decay,
            discount: config.discount,
        })
    }

    pub fn value(&self, action: LambdaConfig) -> f64 {
        self.q[action.index()]
    }

    pub fn entries(&self) -> Vec<QEntry> {
        LambdaConfig::ALL
            .iter()
            .map(|&action| QEntry { action, q: self.value(action), count: self.counts[action.index()] })
            .collect()
    }

    /// Highest-valued action; ties go to the first in [`LambdaConfig::ALL`].
    pub fn greedy(&self) -> LambdaConfig {
        let mut best = 0;
        for i in 1..N_ACTIONS {
            if self.q[i] > self.q[best] {
                best = i;
            }
        }
        LambdaConfig::ALL[best]
    }

    /// ε-greedy choice. Always consumes one uniform draw, plus one more when
    /// exploring.
    pub fn choose_action<R: Rng>(&self, rng: &mut R) -> LambdaConfig {
        let u: f64 = rng.random();
        if u < self.epsilon {
            LambdaConfig::ALL[rng.random_range(0..N_ACTIONS)]
        } else {
            self.greedy()
        }
    }

    /// `q(a) ← q(a) + lr (r − q(a))`, then decays ε.
    pub fn update(&mut self, action: LambdaConfig, reward: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(invalid(format!("reward {reward} outside [0, 1]")));
        }
        let i = action.index();
        self.q[i] += self.lr * (reward - self.q[i]);
        self.counts[i] += 1;
        self.epsilon *= self.epsilon_decay;
        Ok(())
    }
}

/// Error of the pre-update classifier on a freshly labeled display: balanced
/// when both classes are present, plain otherwise.
pub fn adversarial_reward(model: &LinearModel, display: &[(&[f64], Label)]) -> Result<f64> {
    if display.is_empty() {
        return Err(invalid("cannot score an empty display"));
    }
    let pairs = display
        .iter()
        .map(|(x, y)| Ok((model.predict(x)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    let confusion = Confusion::from_pairs(pairs);
    Ok(confusion.balanced_error().unwrap_or_else(|| confusion.error_rate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::TrainingMeta;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    fn table(lr: f64, epsilon: f64) -> QTable {
        QTable::new(&BanditConfig { lr, epsilon, ..Default::default() }).unwrap()
    }

    fn threshold_model() -> LinearModel {
        LinearModel {
            weights: vec![1.0],
            bias: 0.0,
            meta: TrainingMeta { epochs: 0, lambda_reg: 0.0, class_weights: [1.0; 2], final_objective: 0.0 },
        }
    }

    #[test]
    fn greedy_choice_and_ties() {
        let mut t = table(0.5, 0.0);
        let mut rng = stream(0, Stream::Bandit, 0);
        assert_eq!(t.choose_action(&mut rng), LambdaConfig::ALL[0]);
        assert_eq!(LambdaConfig::ALL[0].name(), "rep");
        t.q = [0.1, 0.2, 0.3, 0.1, 0.2, 0.3, 0.9];
        assert_eq!(t.choose_action(&mut rng), LambdaConfig::FLAT);
    }

    #[test]
    fn exploration_is_reproducible() {
        let t = table(0.5, 1.0);
        let draw = |seed| {
            let mut rng = stream(seed, Stream::Bandit, 0);
            (0..20).map(|_| t.choose_action(&mut rng).index()).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
        assert!(draw(4).iter().any(|&i| i != 0));
    }

    #[test]
    fn update_arithmetic() {
        let a = LambdaConfig::FLAT;
        let mut t = table(0.1, 0.5);
        t.q[a.index()] = 0.5;
        t.update(a, 1.0).unwrap();
        assert!((t.value(a) - 0.55).abs() < 1e-15);
        assert_eq!(t.counts[a.index()], 1);
        assert_eq!(t.epsilon, 0.5 * 0.8);

        let before = t.value(a);
        t.update(a, before).unwrap();
        assert_eq!(t.value(a), before);

        let mut t = table(0.5, 0.0);
        let mut seen = vec![];
        for r in [1.0, 0.0, 1.0] {
            t.update(a, r).unwrap();
            seen.push(t.value(a));
        }
        assert_eq!(seen, vec![1.0, 0.5, 0.75]);
        assert!(t.update(a, 1.5).is_err());
        assert!(t.update(a, -0.1).is_err());
    }

    #[test]
    fn rewards() {
        let m = threshold_model();
        let (p, n) = ([1.0], [-1.0]);
        assert_eq!(adversarial_reward(&m, &[(&n, Label::Change), (&n, Label::Change)]).unwrap(), 1.0);
        assert_eq!(adversarial_reward(&m, &[(&p, Label::Change), (&n, Label::NoChange)]).unwrap(), 0.0);
        let display = [(&p[..], Label::Change), (&n[..], Label::Change), (&n[..], Label::NoChange), (&n[..], Label::NoChange)];
        assert_eq!(adversarial_reward(&m, &display).unwrap(), 0.25);
        assert!(adversarial_reward(&m, &[]).is_err());
    }

    proptest! {
        #[test]
        fn q_stays_in_unit_interval(
            steps in prop::collection::vec((0usize..7, 0.0f64..=1.0), 1..200),
            lr in 0.01f64..=1.0,
        ) {
            let mut t = table(lr, 0.5);
            for (a, r) in steps {
                let before = t.clone();
                t.update(LambdaConfig::ALL[a], r).unwrap();
                let mut replay = before.clone();
                replay.update(LambdaConfig::ALL[a], r).unwrap();
                prop_assert_eq!(&replay, &t);
                prop_assert!(t.q.iter().all(|q| (0.0..=1.0).contains(q)));
            }
        }
    }
}

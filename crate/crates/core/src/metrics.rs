//! Error rates for imbalanced binary evaluation.

use crate::classifier::LinearModel;
use crate::data_pool::Label;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub false_pos: usize,
}

impl Confusion {
    pub fn from_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Self {
        let mut c = Confusion::default();
        for (predicted, truth) in pairs {
            match (truth, predicted) {
                (Label::Change, Label::Change) => c.true_pos += 1,
                (Label::Change, Label::NoChange) => c.false_neg += 1,
                (Label::NoChange, Label::NoChange) => c.true_neg += 1,
                (Label::NoChange, Label::Change) => c.false_pos += 1,
            }
        }
        c
    }

    pub fn positives(&self) -> usize {
        self.true_pos + self.false_neg
    }

    pub fn negatives(&self) -> usize {
        self.true_neg + self.false_pos
    }

    pub fn error_rate(&self) -> f64 {
        let total = self.positives() + self.negatives();
        (self.false_neg + self.false_pos) as f64 / total as f64
    }

    /// `0.5 * (FNR + FPR)`, or `None` if either class is absent.
    pub fn balanced_error(&self) -> Option<f64> {
        if self.positives() == 0 || self.negatives() == 0 {
            return None;
        }
        let fnr = self.false_neg as f64 / self.positives() as f64;
        let fpr = self.false_pos as f64 / self.negatives() as f64;
        Some(0.5 * (fnr + fpr))
    }
}

/// Balanced error at threshold `raw_score > 0`, as a fraction in `[0, 1]`.
pub fn eer(model: &LinearModel, eval: &[(&[f64], Label)]) -> Result<f64> {
    let scores = eval
        .iter()
        .map(|(x, _)| model.raw_score(x))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Label> = eval.iter().map(|(_, y)| *y).collect();
    balanced_error_at(&scores, &labels, 0.0)
}

/// Balanced error of the rule `score > threshold` ⇒ change.
pub fn balanced_error_at(scores: &[f64], labels: &[Label], threshold: f64) -> Result<f64> {
    let c = Confusion::from_pairs(
        scores.iter().zip(labels).map(|(&s, &y)| (Label::from(s > threshold), y)),
    );
    c.balanced_error()
        .ok_or_else(|| invalid("evaluation set must contain both classes"))
}

/// Equal-error point from a threshold sweep: the threshold where the miss
/// and false-alarm rates are closest, reported as their mean.
pub fn eer_sweep(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let n_pos = labels.iter().filter(|l| l.is_change()).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(invalid("evaluation set must contain both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Threshold below everything: all predicted change.
    let (mut fn_count, mut tn_count) = (0usize, 0usize);
    let rates = |fn_count: usize, tn_count: usize| {
        let fnr = fn_count as f64 / n_pos as f64;
        let fpr = (n_neg - tn_count) as f64 / n_neg as f64;
        (fnr, fpr)
    };
    let mut best = rates(0, 0);
    let mut i = 0;
    while i < order.len() {
        // Move every sample sharing this score below the threshold at once.
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]].is_change() {
                fn_count += 1;
            } else {
                tn_count += 1;
            }
            i += 1;
        }
        let r = rates(fn_count, tn_count);
        if (r.0 - r.1).abs() < (best.0 - best.1).abs() {
            best = r;
        }
    }
    Ok(0.5 * (best.0 + best.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::TrainingMeta;

    fn constant(bias: f64) -> LinearModel {
        LinearModel {
            weights: vec![0.0],
            bias,
            meta: TrainingMeta { epochs: 0, lambda_reg: 0.0, class_weights: [1.0; 2], final_objective: 0.0 },
        }
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    #[test]
    fn balanced_error_examples() {
        let labels = [Label::Change, Label::Change, Label::NoChange, Label::NoChange];
        let scores: Vec<f64> = [0.9, 0.4, 0.2, 0.1].iter().map(|&p| logit(p)).collect();
        assert_eq!(balanced_error_at(&scores, &labels, 0.0).unwrap(), 0.25);
        assert_eq!(balanced_error_at(&[1.0, 2.0, -1.0, -3.0], &labels, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn all_negative_classifier_is_one_half() {
        let xs = [[1.0], [2.0], [3.0], [4.0], [5.0]];
        let labels = [Label::Change, Label::NoChange, Label::NoChange, Label::NoChange, Label::Change];
        let eval: Vec<_> = xs.iter().zip(labels).map(|(x, l)| (&x[..], l)).collect();
        assert_eq!(eer(&constant(-1.0), &eval).unwrap(), 0.5);
    }

    #[test]
    fn single_class_eval_is_rejected() {
        let xs = [[1.0], [2.0]];
        let eval: Vec<_> = xs.iter().map(|x| (&x[..], Label::NoChange)).collect();
        assert!(eer(&constant(-1.0), &eval).is_err());
        assert!(eer_sweep(&[0.1, 0.2], &[Label::NoChange, Label::NoChange]).is_err());
    }

    #[test]
    fn sweep_finds_separating_threshold() {
        let labels = [Label::NoChange, Label::NoChange, Label::Change, Label::Change];
        assert_eq!(eer_sweep(&[-2.0, -1.0, 5.0, 6.0], &labels).unwrap(), 0.0);
        // Perfectly inverted scores cannot be fixed by a threshold.
        assert_eq!(eer_sweep(&[6.0, 5.0, -1.0, -2.0], &labels).unwrap(), 1.0);
    }

    #[test]
    fn confusion_error_rate() {
        let c = Confusion::from_pairs([
            (Label::Change, Label::NoChange),
            (Label::NoChange, Label::NoChange),
            (Label::NoChange, Label::NoChange),
            (Label::NoChange, Label::NoChange),
        ]);
        assert_eq!(c.error_rate(), 0.25);
        assert_eq!(c.balanced_error(), None);
    }
}

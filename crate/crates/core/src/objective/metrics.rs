use super::{ObjectiveError, TtdReport};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts with the derived rates. Degenerate precision/recall
/// (zero denominator) report 0.0 with the corresponding flag set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate_precision: bool,
    pub degenerate_recall: bool,
}

pub fn classification_metrics(predictions: &[bool], labels: &[bool]) -> ClassificationMetrics {
    let mut c = ConfusionCounts::default();
    for (&p, &y) in predictions.iter().zip(labels.iter()) {
        match (p, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let total = c.total();
    let accuracy = if total == 0 {
        0.0
    } else {
        (c.tp + c.tn) as f64 / total as f64
    };
    let degenerate_precision = c.tp + c.fp == 0;
    let precision = if degenerate_precision {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let degenerate_recall = c.tp + c.fn_ == 0;
    let recall = if degenerate_recall {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassificationMetrics {
        counts: c,
        accuracy,
        precision,
        recall,
        f1,
        degenerate_precision,
        degenerate_recall,
    }
}

/// Fraction of misclassified images; the checkpoint-selection metric.
pub fn validation_error_rate(
    image_predictions: &[bool],
    image_labels: &[bool],
) -> Result<f64, ObjectiveError> {
    if image_predictions.is_empty() {
        return Err(ObjectiveError::EmptyInput("validation_error_rate"));
    }
    if image_predictions.len() != image_labels.len() {
        return Err(ObjectiveError::LengthMismatch(
            image_predictions.len(),
            image_labels.len(),
        ));
    }
    let wrong = image_predictions
        .iter()
        .zip(image_labels.iter())
        .filter(|(p, y)| p != y)
        .count();
    Ok(wrong as f64 / image_predictions.len() as f64)
}

/// Everything one evaluated variant reports.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub metrics: ClassificationMetrics,
    pub ttd: Option<TtdReport>,
    pub params_millions: f64,
    pub latency_ms_per_image: f64,
}

/// Tab-delimited comparison table, one row per variant, columns
/// Params(M) / Time(ms/it) / A / F1 / P / R / TTD(mins); rates as percents.
pub fn render_metrics_table(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::from("Model\tParams(M)\tTime(ms/it)\tA\tF1\tP\tR\tTTD(mins)\n");
    for (name, r) in rows {
        let ttd = r
            .ttd
            .as_ref()
            .map_or("n/a".to_string(), |t| format!("{:.2}", t.mean_including_flagged));
        out.push_str(&format!(
            "{name}\t{:.1}\t{:.1}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{ttd}\n",
            r.params_millions,
            r.latency_ms_per_image,
            r.metrics.accuracy * 100.0,
            r.metrics.f1 * 100.0,
            r.metrics.precision * 100.0,
            r.metrics.recall * 100.0,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_confusion_case() {
        // TP=3, FP=1, TN=4, FN=2
        let predictions = [true, true, true, true, false, false, false, false, false, false];
        let labels = [true, true, true, false, true, true, false, false, false, false];
        let m = classification_metrics(&predictions, &labels);
        assert_eq!(
            (m.counts.tp, m.counts.fp, m.counts.tn, m.counts.fn_),
            (3, 1, 4, 2)
        );
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.6).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn reported_f1_consistency() {
        // published precision/recall reproduce the published F1 within 0.05
        let p: f64 = 0.8984;
        let r: f64 = 0.7645;
        let f1 = 2.0 * p * r / (p + r);
        assert!((f1 * 100.0 - 82.59).abs() < 0.05, "f1 = {}", f1 * 100.0);
    }

    #[test]
    fn degenerate_cases_flagged() {
        let m = classification_metrics(&[false, false], &[false, false]);
        assert_eq!(m.accuracy, 1.0);
        assert!(m.degenerate_precision);
        assert!(m.degenerate_recall);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    #[test]
    fn error_rate_cases() {
        assert_eq!(
            validation_error_rate(&[true, false], &[true, false]).unwrap(),
            0.0
        );
        let preds = [true, true, false, false, true, false, true, false, true, false];
        let mut labels = preds;
        labels[0] = !labels[0];
        labels[5] = !labels[5];
        assert!((validation_error_rate(&preds, &labels).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(
            validation_error_rate(&[true], &[false]).unwrap(),
            1.0
        );
        assert!(validation_error_rate(&[], &[]).is_err());
    }

    #[test]
    fn error_rate_is_one_minus_accuracy() {
        let mut state = 99u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            state >> 40 & 1 == 1
        };
        let preds: Vec<bool> = (0..500).map(|_| next()).collect();
        let labels: Vec<bool> = (0..500).map(|_| next()).collect();
        let m = classification_metrics(&preds, &labels);
        let err = validation_error_rate(&preds, &labels).unwrap();
        assert!((err - (1.0 - m.accuracy)).abs() < 1e-15);
    }

    #[test]
    fn table_renders_all_columns() {
        let report = MetricsReport {
            metrics: classification_metrics(&[true, false], &[true, false]),
            ttd: None,
            params_millions: 56.9,
            latency_ms_per_image: 51.6,
        };
        let text = render_metrics_table(&[("ResNet34 + LSTM + ViT".into(), report)]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap().split('\t').count(),
            8,
            "header has 8 columns"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("ResNet34 + LSTM + ViT\t56.9\t51.6\t100.00"));
    }
}

/// One fire's evaluated frames, ordered by offset.
#[derive(Debug, Clone)]
pub struct FireEval {
    pub fire_id: String,
    /// (offset_seconds, image_label, prediction), ascending offsets.
    pub frames: Vec<(i32, bool, bool)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireTtd {
    pub fire_id: String,
    pub ttd_minutes: f64,
    /// No positive frame was ever predicted positive; the value is the
    /// last-positive-offset + 1 minute penalty.
    pub flagged: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TtdReport {
    pub per_fire: Vec<FireTtd>,
    /// Fires without any positive-labeled frame, skipped with a warning.
    pub excluded_fires: Vec<String>,
    pub mean_including_flagged: f64,
    /// Mean over unflagged fires only; absent when every fire was flagged.
    pub mean_excluding_flagged: Option<f64>,
}

/// Time-to-detection: minutes from ignition until the earliest
/// positive-labeled frame that the model predicts positive. Undetected
/// fires receive last-positive-offset + 1 minute and are flagged; the mean
/// is reported both with and without them.
pub fn time_to_detection(fires: &[FireEval]) -> TtdReport {
    let mut report = TtdReport::default();
    for fire in fires {
        debug_assert!(
            fire.frames.windows(2).all(|w| w[0].0 <= w[1].0),
            "frames ordered by offset"
        );
        let positives: Vec<&(i32, bool, bool)> =
            fire.frames.iter().filter(|(_, label, _)| *label).collect();
        if positives.is_empty() {
            report.excluded_fires.push(fire.fire_id.clone());
            continue;
        }
        let detected = positives.iter().find(|(_, _, pred)| *pred);
        let (ttd_minutes, flagged) = match detected {
            Some((offset, _, _)) => (f64::from(*offset) / 60.0, false),
            None => {
                let last = positives.last().expect("non-empty").0;
                (f64::from(last) / 60.0 + 1.0, true)
            }
        };
        report.per_fire.push(FireTtd {
            fire_id: fire.fire_id.clone(),
            ttd_minutes,
            flagged,
        });
    }
    if !report.per_fire.is_empty() {
        report.mean_including_flagged = report
            .per_fire
            .iter()
            .map(|f| f.ttd_minutes)
            .sum::<f64>()
            / report.per_fire.len() as f64;
        let clean: Vec<f64> = report
            .per_fire
            .iter()
            .filter(|f| !f.flagged)
            .map(|f| f.ttd_minutes)
            .collect();
        if !clean.is_empty() {
            report.mean_excluding_flagged =
                Some(clean.iter().sum::<f64>() / clean.len() as f64);
        }
    }
    report
}

/// Per-fire detail lines: fire id, minutes, flagged marker.
pub fn render_ttd_detail(report: &TtdReport) -> String {
    let mut out = String::from("fire_id\tttd_minutes\tflagged\n");
    for f in &report.per_fire {
        out.push_str(&format!(
            "{}\t{:.2}\t{}\n",
            f.fire_id,
            f.ttd_minutes,
            if f.flagged { "yes" } else { "no" }
        ));
    }
    for fire in &report.excluded_fires {
        out.push_str(&format!("{fire}\tn/a\texcluded (no positive frames)\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 81-frame fire: negatives before 0, positives from 0 to +40 min.
    fn fire(fire_id: &str, mut predict: impl FnMut(i32) -> bool) -> FireEval {
        FireEval {
            fire_id: fire_id.into(),
            frames: (-40..=40)
                .map(|minute| {
                    let offset = minute * 60;
                    (offset, minute >= 0, predict(offset))
                })
                .collect(),
        }
    }

    #[test]
    fn first_correct_positive_at_three_minutes() {
        let report = time_to_detection(&[fire("f", |off| off >= 180)]);
        assert_eq!(report.per_fire.len(), 1);
        assert_eq!(report.per_fire[0].ttd_minutes, 3.0);
        assert!(!report.per_fire[0].flagged);
    }

    #[test]
    fn ignition_frame_detected_is_zero() {
        let report = time_to_detection(&[fire("f", |off| off >= 0)]);
        assert_eq!(report.per_fire[0].ttd_minutes, 0.0);
    }

    #[test]
    fn undetected_fire_gets_last_positive_plus_one_flagged() {
        let report = time_to_detection(&[fire("f", |_| false)]);
        assert_eq!(report.per_fire[0].ttd_minutes, 41.0);
        assert!(report.per_fire[0].flagged);
        assert!(report.mean_excluding_flagged.is_none());
        assert_eq!(report.mean_including_flagged, 41.0);
    }

    #[test]
    fn dual_means_and_exclusions() {
        let all_neg = FireEval {
            fire_id: "no-positives".into(),
            frames: vec![(-120, false, false), (-60, false, true)],
        };
        let report = time_to_detection(&[
            fire("a", |off| off >= 180),
            fire("b", |_| false),
            all_neg,
        ]);
        assert_eq!(report.per_fire.len(), 2);
        assert_eq!(report.excluded_fires, vec!["no-positives".to_string()]);
        assert!((report.mean_including_flagged - (3.0 + 41.0) / 2.0).abs() < 1e-12);
        assert_eq!(report.mean_excluding_flagged, Some(3.0));
    }

    #[test]
    fn earlier_detection_only_counts_positive_frames() {
        // false positives before ignition do not produce negative TTD
        let report = time_to_detection(&[fire("f", |off| off <= -600 || off >= 120)]);
        assert_eq!(report.per_fire[0].ttd_minutes, 2.0);
    }

    #[test]
    fn fixing_a_miss_never_increases_ttd() {
        let mut state = 5u64;
        let mut next = move || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            state >> 62 == 3
        };
        let base = fire("f", |_| next());
        let before = time_to_detection(std::slice::from_ref(&base)).per_fire[0].ttd_minutes;
        // flip every false-negative positive frame, one at a time
        for i in 0..base.frames.len() {
            let (_, label, pred) = base.frames[i];
            if label && !pred {
                let mut fixed = base.clone();
                fixed.frames[i].2 = true;
                let after = time_to_detection(&[fixed]).per_fire[0].ttd_minutes;
                assert!(after <= before + 1e-12, "flip {i}: {after} > {before}");
            }
        }
    }
}

//! Change-detection scoring: confusion counts under the CDnet label rules,
//! the seven standard metrics, and per-category aggregation.

mod dataset;
mod report;

pub use dataset::{check_semantic_maps, evaluate_dataset, evaluate_video, DatasetReport, VideoReport};
pub use report::{format_table, CategoryRow};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::frame_io::{
    FgMask, GroundTruthFrame, RoiMask, TemporalRange, GT_MOTION, GT_SHADOW, GT_STATIC,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Adds one frame. Pixels outside the ROI, frames outside `temporal`,
    /// and GT codes 85/170 are skipped; 255 is positive, 0 and 50 negative.
    pub fn accumulate(
        &mut self,
        mask: &FgMask,
        gt: &GroundTruthFrame,
        roi: &RoiMask,
        temporal: Option<(usize, TemporalRange)>,
    ) -> Result<()> {
        check_dims("accumulate (ground truth)", mask.dims(), gt.dims())?;
        check_dims("accumulate (roi)", mask.dims(), roi.dims())?;
        if let Some((index, range)) = temporal {
            if !range.contains(index) {
                return Ok(());
            }
        }
        for ((&label, &code), &inside) in mask.labels().iter().zip(gt.labels()).zip(roi.included()) {
            if !inside {
                continue;
            }
            let fg = label != 0;
            match code {
                GT_MOTION => {
                    if fg {
                        self.tp += 1
                    } else {
                        self.fn_ += 1
                    }
                }
                GT_STATIC | GT_SHADOW => {
                    if fg {
                        self.fp += 1
                    } else {
                        self.tn += 1
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(mut self, rhs: Self) -> Self {
        self.merge(&rhs);
        self
    }
}

/// The seven metrics; `None` marks an undefined (0/0) value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub re: Option<f64>,
    pub sp: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub pwc: Option<f64>,
    pub pr: Option<f64>,
    pub fm: Option<f64>,
}

/// Metric names in table order.
pub const METRIC_NAMES: [&str; 7] = ["Recall", "Specificity", "FPR", "FNR", "PWC", "Precision", "F-Measure"];

impl MetricReport {
    pub fn values(&self) -> [Option<f64>; 7] {
        [self.re, self.sp, self.fpr, self.fnr, self.pwc, self.pr, self.fm]
    }

    fn from_values(v: [Option<f64>; 7]) -> Self {
        MetricReport {
            re: v[0],
            sp: v[1],
            fpr: v[2],
            fnr: v[3],
            pwc: v[4],
            pr: v[5],
            fm: v[6],
        }
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(c: &ConfusionCounts) -> MetricReport {
    let re = ratio(c.tp, c.tp + c.fn_);
    let pr = ratio(c.tp, c.tp + c.fp);
    let fm = match (re, pr) {
        (Some(r), Some(p)) if r + p > 0.0 => Some(2.0 * r * p / (r + p)),
        _ => None,
    };
    MetricReport {
        re,
        sp: ratio(c.tn, c.tn + c.fp),
        fpr: ratio(c.fp, c.fp + c.tn),
        fnr: ratio(c.fn_, c.tp + c.fn_),
        pwc: ratio(c.fn_ + c.fp, c.total()).map(|v| 100.0 * v),
        pr,
        fm,
    }
}

/// Mean report with the number of inputs each metric was undefined in.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanReport {
    pub report: MetricReport,
    /// Metric name → number of inputs excluded because it was undefined.
    pub undefined: BTreeMap<String, usize>,
}

fn mean_of(reports: &[&MetricReport]) -> MeanReport {
    let mut values = [None; 7];
    let mut undefined = BTreeMap::new();
    for (k, slot) in values.iter_mut().enumerate() {
        let defined: Vec<f64> = reports.iter().filter_map(|r| r.values()[k]).collect();
        let missing = reports.len() - defined.len();
        if missing > 0 {
            undefined.insert(METRIC_NAMES[k].to_string(), missing);
        }
        if !defined.is_empty() {
            *slot = Some(defined.iter().sum::<f64>() / defined.len() as f64);
        }
    }
    MeanReport {
        report: MetricReport::from_values(values),
        undefined,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub categories: BTreeMap<String, MeanReport>,
    pub overall: MeanReport,
}

/// Category value = unweighted mean over its videos; overall = unweighted
/// mean over categories. Undefined entries are left out of each mean.
pub fn aggregate(per_video: &[(String, MetricReport)], category_of: impl Fn(&str) -> String) -> Result<Aggregate> {
    if per_video.is_empty() {
        return Err(Error::Argument("nothing to aggregate".into()));
    }
    let mut groups: BTreeMap<String, Vec<&MetricReport>> = BTreeMap::new();
    for (video, report) in per_video {
        groups.entry(category_of(video)).or_default().push(report);
    }
    let categories: BTreeMap<String, MeanReport> =
        groups.into_iter().map(|(k, v)| (k, mean_of(&v))).collect();
    let cat_reports: Vec<&MetricReport> = categories.values().map(|m| &m.report).collect();
    let overall = mean_of(&cat_reports);
    Ok(Aggregate {
        categories,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: Option<f64>, b: f64, tol: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() <= tol)
    }

    #[test]
    fn worked_example() {
        let m = compute_metrics(&ConfusionCounts { tp: 9, fn_: 1, fp: 3, tn: 87 });
        assert!(approx(m.re, 0.9, 1e-12));
        assert!(approx(m.sp, 87.0 / 90.0, 1e-12));
        assert!(approx(m.fpr, 3.0 / 90.0, 1e-12));
        assert!(approx(m.fnr, 0.1, 1e-12));
        assert!(approx(m.pwc, 4.0, 1e-12));
        assert!(approx(m.pr, 0.75, 1e-12));
        assert!(approx(m.fm, 0.8182, 1e-4));
        assert!(approx(m.sp, 0.9667, 1e-4) && approx(m.fpr, 0.0333, 1e-4));
    }

    #[test]
    fn empty_counts_are_undefined() {
        let m = compute_metrics(&ConfusionCounts::default());
        assert!(m.values().iter().all(|v| v.is_none()));
    }

    #[test]
    fn perfect_case() {
        let m = compute_metrics(&ConfusionCounts { tp: 5, tn: 7, fp: 0, fn_: 0 });
        for v in [m.re, m.sp, m.pr, m.fm] {
            assert_eq!(v, Some(1.0));
        }
        assert_eq!(m.pwc, Some(0.0));
    }

    #[test]
    fn accumulate_rules() {
        let mask = FgMask::new(4, 1, vec![1, 1, 0, 1]).unwrap();
        let gt = GroundTruthFrame::new(4, 1, vec![255, 50, 0, 170]).unwrap();
        let roi = RoiMask::full(4, 1);
        let mut c = ConfusionCounts::default();
        c.accumulate(&mask, &gt, &roi, None).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 0 });

        let unknown = GroundTruthFrame::new(4, 1, vec![170; 4]).unwrap();
        let mut c = ConfusionCounts::default();
        c.accumulate(&mask, &unknown, &roi, None).unwrap();
        assert_eq!(c.total(), 0);

        let mut c = ConfusionCounts::default();
        let range = TemporalRange { first: 10, last: 20 };
        c.accumulate(&mask, &gt, &roi, Some((9, range))).unwrap();
        assert_eq!(c.total(), 0);
        c.accumulate(&mask, &gt, &RoiMask::new(4, 1, vec![false, true, true, true]).unwrap(), Some((10, range)))
            .unwrap();
        assert_eq!(c, ConfusionCounts { tp: 0, fp: 1, tn: 1, fn_: 0 });

        assert!(c.accumulate(&FgMask::background(3, 1), &gt, &roi, None).is_err());
    }

    #[test]
    fn aggregate_means() {
        let r = |fm| MetricReport { fm: Some(fm), ..Default::default() };
        let videos = vec![("a/x".to_string(), r(0.6)), ("a/y".to_string(), r(0.8)), ("b/z".to_string(), r(0.5))];
        let cat = |v: &str| v.split('/').next().unwrap().to_string();
        let agg = aggregate(&videos, cat).unwrap();
        assert!(approx(agg.categories["a"].report.fm, 0.7, 1e-12));
        assert!(approx(agg.overall.report.fm, 0.6, 1e-12));
        assert_eq!(agg.overall.undefined.get("Recall"), Some(&2));

        let one = aggregate(&videos[..1], cat).unwrap();
        assert_eq!(one.categories["a"].report, videos[0].1);
        assert!(aggregate(&[], cat).is_err());
    }
}

//! Flat CSV views of experiment reports.

use semgroup_core::models::Policy;
use semgroup_core::pipeline::ExperimentReport;

pub const RUN_COLUMNS: [&str; 7] = ["policy", "seed", "groups", "ari", "nmi", "a_last", "f_last"];

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// One row per report, in the given order.
pub fn runs_csv(reports: &[ExperimentReport]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RUN_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.policy.name().to_string(),
            r.seed.to_string(),
            r.final_group_count.to_string(),
            opt(r.ari),
            opt(r.nmi),
            num(r.a_last),
            num(r.f_last),
        ])?;
    }
    Ok(w.into_inner()?)
}

/// Mean and standard error of the mean (sample deviation over √n).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySummary {
    pub policy: Policy,
    pub runs: usize,
    pub groups: (f64, f64),
    pub ari: Option<(f64, f64)>,
    pub nmi: Option<(f64, f64)>,
    pub a_last: (f64, f64),
    pub f_last: (f64, f64),
}

/// Summaries per policy, in `order`; policies without reports are skipped.
pub fn summarize(reports: &[ExperimentReport], order: &[Policy]) -> Vec<PolicySummary> {
    order
        .iter()
        .filter_map(|&p| {
            let rs: Vec<&ExperimentReport> = reports.iter().filter(|r| r.policy == p).collect();
            if rs.is_empty() {
                return None;
            }
            let col = |f: &dyn Fn(&ExperimentReport) -> f64| mean_se(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            let optcol = |f: &dyn Fn(&ExperimentReport) -> Option<f64>| {
                rs.iter().map(|r| f(r)).collect::<Option<Vec<_>>>().map(|v| mean_se(&v))
            };
            Some(PolicySummary {
                policy: p,
                runs: rs.len(),
                groups: col(&|r| r.final_group_count as f64),
                ari: optcol(&|r| r.ari),
                nmi: optcol(&|r| r.nmi),
                a_last: col(&|r| r.a_last),
                f_last: col(&|r| r.f_last),
            })
        })
        .collect()
}

pub fn aggregate_csv(summaries: &[PolicySummary]) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["policy".to_string(), "runs".to_string()];
    for c in &RUN_COLUMNS[2..] {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_se"));
    }
    w.write_record(&header)?;
    for s in summaries {
        let pair = |x: (f64, f64)| [num(x.0), num(x.1)];
        let opair = |x: Option<(f64, f64)>| x.map(pair).unwrap_or_default();
        let mut row = vec![s.policy.name().to_string(), s.runs.to_string()];
        for cell in [pair(s.groups), opair(s.ari), opair(s.nmi), pair(s.a_last), pair(s.f_last)] {
            row.extend(cell);
        }
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_standard_error() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample sd = sqrt(5/3), se = sd / 2
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }
}

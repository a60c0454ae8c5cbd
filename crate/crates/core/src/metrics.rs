//! Rank correlation and error-curve statistics.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::textio::{parse_real, parse_usize, LineReader};

/// Correlations at or beyond this magnitude are clamped before the Fisher transform.
pub const FISHER_CLAMP: f64 = 1.0 - 1e-9;

/// Fractional ranks (1-based); tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end (0-based) share rank mean(start+1 ..= end).
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation. Errors when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.len() < 2 {
        return Err(Error::DegenerateSeries);
    }
    pearson(&average_ranks(pred), &average_ranks(truth))
}

/// `tanh(mean(atanh(rho)))`. Values with `|rho| >= 1` are clamped to
/// `±FISHER_CLAMP` with a warning.
pub fn fisher_z_average(rhos: &[f64]) -> Result<f64> {
    if rhos.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut z_sum = 0.0;
    for &rho in rhos {
        if rho.is_nan() || rho.abs() > 1.0 {
            return Err(Error::RhoOutOfRange(rho));
        }
        let r = if rho.abs() >= FISHER_CLAMP {
            log::warn!("clamping correlation {rho} to ±{FISHER_CLAMP} for Fisher-z averaging");
            rho.signum() * FISHER_CLAMP
        } else {
            rho
        };
        z_sum += r.atanh();
    }
    Ok((z_sum / rhos.len() as f64).tanh())
}

/// Percentage of samples whose absolute error is within each threshold.
pub fn cs_curve(pred: &[f64], truth: &[f64], alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if alphas.iter().any(|a| !(*a >= 0.0)) || alphas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("alphas must be nonnegative and nondecreasing".into()));
    }
    let errors: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).collect();
    let n = errors.len() as f64;
    Ok(alphas
        .iter()
        .map(|&a| {
            let within = errors.iter().filter(|&&e| e <= a).count();
            (a, 100.0 * within as f64 / n)
        })
        .collect())
}

/// 21 evenly spaced thresholds from 0 to half of `score_range`.
pub fn default_alphas(score_range: f64) -> Vec<f64> {
    let top = score_range / 2.0;
    (0..=20).map(|i| top * i as f64 / 20.0).collect()
}

/// Evaluation summary.
///
/// Text form:
///
/// ```text
/// fisher_z_average <real>
/// mean_loss <real>             (optional)
/// rho <action> <real>          (one line per action)
/// cs_curve <count>
/// <alpha> <percent>            (count lines)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_action_rho: BTreeMap<String, f64>,
    pub fisher_z_average: f64,
    pub cs_curve: Vec<(f64, f64)>,
    /// Mean training objective over the evaluated samples, when known.
    pub mean_loss: Option<f64>,
}

impl EvalReport {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# usdl evaluation report")?;
        writeln!(w, "fisher_z_average {:?}", self.fisher_z_average)?;
        if let Some(loss) = self.mean_loss {
            writeln!(w, "mean_loss {loss:?}")?;
        }
        for (action, rho) in &self.per_action_rho {
            if action.is_empty() || action.contains(char::is_whitespace) {
                return Err(Error::Validation(format!(
                    "action name `{action}` must be non-empty without whitespace"
                )));
            }
            writeln!(w, "rho {action} {rho:?}")?;
        }
        writeln!(w, "cs_curve {}", self.cs_curve.len())?;
        for (alpha, pct) in &self.cs_curve {
            writeln!(w, "{alpha:?} {pct:?}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R, source_name: &str) -> Result<Self> {
        let mut r = LineReader::new(r, source_name);
        let real = |r: &LineReader<R>, t: &str| parse_real(t).ok_or_else(|| r.error(format!("bad real `{t}`")));

        let fz = r.expect_keyword("fisher_z_average")?;
        let fisher_z_average = match fz.as_slice() {
            [t] => real(&r, t)?,
            _ => return Err(r.error("fisher_z_average takes one value")),
        };
        let mut mean_loss = None;
        if r.peek()?.is_some_and(|l| l.starts_with("mean_loss ")) {
            let tokens = r.expect_keyword("mean_loss")?;
            match tokens.as_slice() {
                [t] => mean_loss = Some(real(&r, t)?),
                _ => return Err(r.error("mean_loss takes one value")),
            }
        }
        let mut per_action_rho = BTreeMap::new();
        while r.peek()?.is_some_and(|l| l.starts_with("rho ")) {
            let tokens = r.expect_keyword("rho")?;
            match tokens.as_slice() {
                [name, v] => {
                    per_action_rho.insert(name.clone(), real(&r, v)?);
                }
                _ => return Err(r.error("rho line needs an action and a value")),
            }
        }
        let count = r.expect_keyword("cs_curve")?;
        let count = match count.as_slice() {
            [t] => parse_usize(&r, t, "curve length")?,
            _ => return Err(r.error("cs_curve needs a point count")),
        };
        let mut cs_curve = Vec::with_capacity(count);
        for _ in 0..count {
            let v = r.read_reals(2, "cs_curve point")?;
            cs_curve.push((v[0], v[1]));
        }
        Ok(Self {
            per_action_rho,
            fisher_z_average,
            cs_curve,
            mean_loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_examples() {
        let t = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(spearman(&t, &t).unwrap(), 1.0);
        let rev: Vec<f64> = t.iter().rev().copied().collect();
        assert_eq!(spearman(&rev, &t).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 5.0, 4.0], &t).unwrap(), 0.9);
    }

    #[test]
    fn spearman_errors() {
        assert!(matches!(spearman(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
        assert!(matches!(spearman(&[3.0, 3.0, 3.0], &[1.0, 2.0, 3.0]), Err(Error::DegenerateSeries)));
        assert!(matches!(spearman(&[1.0], &[1.0]), Err(Error::DegenerateSeries)));
    }

    #[test]
    fn average_ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
        assert_eq!(average_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn fisher_examples() {
        assert!((fisher_z_average(&[0.3, 0.3, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(fisher_z_average(&[0.0]).unwrap(), 0.0);
        // tanh((atanh 0.5 + atanh 0.9) / 2), evaluated independently.
        let v = fisher_z_average(&[0.5, 0.9]).unwrap();
        assert!((v - 0.7660773415974732).abs() < 1e-12, "{v}");
    }

    #[test]
    fn fisher_clamps_perfect_correlation() {
        let v = fisher_z_average(&[1.0, 1.0]).unwrap();
        assert!((v - FISHER_CLAMP).abs() < 1e-12);
        assert!(fisher_z_average(&[-1.0]).unwrap() < -0.999);
        assert!(matches!(fisher_z_average(&[1.5]), Err(Error::RhoOutOfRange(_))));
        assert!(matches!(fisher_z_average(&[f64::NAN]), Err(Error::RhoOutOfRange(_))));
        assert!(fisher_z_average(&[]).is_err());
    }

    #[test]
    fn cs_examples() {
        let c = cs_curve(&[1.0, 2.0, 10.0], &[1.0, 1.0, 1.0], &[0.0, 1.0, 9.0]).unwrap();
        assert_eq!(c[0].0, 0.0);
        assert!((c[0].1 - 100.0 / 3.0).abs() < 1e-12);
        assert!((c[1].1 - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(c[2], (9.0, 100.0));

        let same = [4.0, 5.0];
        assert_eq!(cs_curve(&same, &same, &[0.0]).unwrap(), vec![(0.0, 100.0)]);
        assert!(cs_curve(&[1.0], &[1.0, 2.0], &[0.0]).is_err());
        assert!(cs_curve(&[1.0], &[1.0], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn default_alpha_grid() {
        let a = default_alphas(100.0);
        assert_eq!(a.len(), 21);
        assert_eq!(a[0], 0.0);
        assert_eq!(a[20], 50.0);
    }

    #[test]
    fn report_round_trip() {
        let report = EvalReport {
            per_action_rho: [("diving".to_string(), 0.91), ("vault".to_string(), -0.125)].into(),
            fisher_z_average: 0.4,
            cs_curve: vec![(0.0, 12.5), (2.5, 50.0), (5.0, 100.0)],
            mean_loss: None,
        };
        let mut buf = Vec::new();
        report.write_to(&mut buf).unwrap();
        assert_eq!(EvalReport::read_from(buf.as_slice(), "mem").unwrap(), report);

        let with_loss = EvalReport {
            mean_loss: Some(0.25),
            ..report
        };
        let mut buf = Vec::new();
        with_loss.write_to(&mut buf).unwrap();
        assert_eq!(EvalReport::read_from(buf.as_slice(), "mem").unwrap(), with_loss);
    }
}

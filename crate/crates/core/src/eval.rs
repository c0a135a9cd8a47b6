//! Closed-set recognition rate and open-set error rates.
//!
//! An enrolled-speaker trial can fail in two ways. It is a false rejection
//! when its score falls below the threshold, whatever speaker was picked.
//! It is a mislabeling when it is accepted but attributed to the wrong
//! enrolled speaker. An impostor trial fails only by being accepted. The
//! open-set equal error rate is the operating point where the false
//! acceptance rate equals the false rejection rate plus the mislabeling rate.

use std::path::Path;

use crate::dataset::check_header;
use crate::openset::Architecture;
use crate::{Error, Result};

/// Marker written in the `true_speaker` column for impostor trials.
pub const IMPOSTOR: &str = "IMPOSTOR";

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub utterance_id: String,
    /// Enrolled index of the true speaker; `None` for impostors.
    pub true_index: Option<usize>,
    pub predicted_index: usize,
    pub score: f64,
}

impl TrialScore {
    pub fn is_impostor(&self) -> bool {
        self.true_index.is_none()
    }

    fn is_mislabeled(&self) -> bool {
        self.true_index.is_some_and(|t| t != self.predicted_index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    /// Accepted impostor trials over all impostor trials.
    pub far: f64,
    /// Rejected enrolled trials over all enrolled trials.
    pub frr: f64,
    /// Accepted but misattributed enrolled trials over all enrolled trials.
    pub mlr: f64,
    pub threshold: f64,
}

impl ErrorRates {
    /// `FAR - (FRR + MLR)`; zero at the equal error rate.
    pub fn imbalance(&self) -> f64 {
        self.far - (self.frr + self.mlr)
    }
}

fn check_scores(trials: &[TrialScore]) -> Result<()> {
    if let Some(t) = trials.iter().find(|t| !t.score.is_finite()) {
        return Err(Error::invalid(format!(
            "trial {} has non-finite score {}",
            t.utterance_id, t.score
        )));
    }
    Ok(())
}

/// Fraction of enrolled trials whose closed-set pick is the true speaker.
pub fn csrr(trials: &[TrialScore]) -> Result<f64> {
    if trials.is_empty() {
        return Err(Error::invalid("no trials"));
    }
    if let Some(t) = trials.iter().find(|t| t.is_impostor()) {
        return Err(Error::invalid(format!(
            "impostor trial {} passed to the closed-set rate",
            t.utterance_id
        )));
    }
    let correct = trials.iter().filter(|t| !t.is_mislabeled()).count();
    Ok(correct as f64 / trials.len() as f64)
}

fn class_counts(trials: &[TrialScore]) -> Result<(usize, usize)> {
    let impostors = trials.iter().filter(|t| t.is_impostor()).count();
    let enrolled = trials.len() - impostors;
    if impostors == 0 || enrolled == 0 {
        return Err(Error::invalid(format!(
            "need both enrolled and impostor trials, got {enrolled} and {impostors}"
        )));
    }
    check_scores(trials)?;
    Ok((enrolled, impostors))
}

/// Error rates when trials with `score >= threshold` are accepted.
pub fn rates_at_threshold(trials: &[TrialScore], threshold: f64) -> Result<ErrorRates> {
    let (enrolled, impostors) = class_counts(trials)?;
    let (mut fa, mut fr, mut ml) = (0usize, 0usize, 0usize);
    for t in trials {
        let accepted = t.score >= threshold;
        match (t.is_impostor(), accepted) {
            (true, true) => fa += 1,
            (true, false) => {}
            (false, false) => fr += 1,
            (false, true) => ml += usize::from(t.is_mislabeled()),
        }
    }
    Ok(ErrorRates {
        far: fa as f64 / impostors as f64,
        frr: fr as f64 / enrolled as f64,
        mlr: ml as f64 / enrolled as f64,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
    /// Interpolated rates at `threshold`.
    pub rates: ErrorRates,
}

/// Rates at every distinct score plus a reject-all point just above the
/// largest score, in increasing threshold order.
fn operating_points(trials: &[TrialScore]) -> Result<Vec<ErrorRates>> {
    let (enrolled, impostors) = class_counts(trials)?;
    let mut sorted: Vec<&TrialScore> = trials.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    // Walk thresholds from the top; counts are of trials scoring >= threshold.
    let mut points = Vec::new();
    points.push(ErrorRates {
        far: 0.0,
        frr: 1.0,
        mlr: 0.0,
        threshold: sorted[0].score.next_up(),
    });
    let (mut fa, mut accepted_enrolled, mut ml) = (0usize, 0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let s = sorted[i].score;
        while i < sorted.len() && sorted[i].score == s {
            let t = sorted[i];
            if t.is_impostor() {
                fa += 1;
            } else {
                accepted_enrolled += 1;
                ml += usize::from(t.is_mislabeled());
            }
            i += 1;
        }
        points.push(ErrorRates {
            far: fa as f64 / impostors as f64,
            frr: (enrolled - accepted_enrolled) as f64 / enrolled as f64,
            mlr: ml as f64 / enrolled as f64,
            threshold: s,
        });
    }
    points.reverse();
    Ok(points)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Open-set equal error rate.
///
/// Thresholds are swept over the distinct trial scores. Between the two
/// adjacent operating points where `FAR - (FRR + MLR)` changes sign, rates
/// and threshold are interpolated linearly to the crossing. When the
/// difference is exactly zero over a range (for instance under perfect
/// separation) the threshold is placed mid-way through that range.
pub fn compute_eer(trials: &[TrialScore]) -> Result<Eer> {
    let points = operating_points(trials)?;
    let first = points
        .iter()
        .position(|p| p.imbalance() <= 0.0)
        .ok_or(Error::DegenerateDistribution)?;
    if first == 0 && points[0].imbalance() < 0.0 {
        return Err(Error::DegenerateDistribution);
    }

    if points[first].imbalance() == 0.0 {
        let last = (first..points.len())
            .take_while(|&j| points[j].imbalance() == 0.0)
            .last()
            .unwrap();
        let lower = if first > 0 {
            points[first - 1].threshold
        } else {
            points[first].threshold
        };
        let threshold = 0.5 * (lower + points[last].threshold);
        // Any threshold in (lower, points[last]] shares the rates of some
        // point in first..=last; pick the one covering `threshold`.
        let covering = (first..=last)
            .find(|&j| points[j].threshold >= threshold)
            .unwrap_or(last);
        let rates = ErrorRates {
            threshold,
            ..points[covering]
        };
        return Ok(Eer {
            eer: rates.far,
            threshold,
            rates,
        });
    }

    let (a, b) = (&points[first - 1], &points[first]);
    let t = a.imbalance() / (a.imbalance() - b.imbalance());
    let rates = ErrorRates {
        far: lerp(a.far, b.far, t),
        frr: lerp(a.frr, b.frr, t),
        mlr: lerp(a.mlr, b.mlr, t),
        threshold: lerp(a.threshold, b.threshold, t),
    };
    Ok(Eer {
        eer: rates.far,
        threshold: rates.threshold,
        rates,
    })
}

/// Error rates at `num_points` evenly spaced thresholds from the lowest
/// score (accept everything) to just above the highest (reject everything).
pub fn det_sweep(trials: &[TrialScore], num_points: usize) -> Result<Vec<ErrorRates>> {
    if num_points < 2 {
        return Err(Error::invalid("a sweep needs at least two points"));
    }
    class_counts(trials)?;
    let lo = trials.iter().map(|t| t.score).fold(f64::INFINITY, f64::min);
    let hi = trials
        .iter()
        .map(|t| t.score)
        .fold(f64::NEG_INFINITY, f64::max)
        .next_up();
    (0..num_points)
        .map(|i| {
            let theta = if i + 1 == num_points {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (num_points - 1) as f64
            };
            rates_at_threshold(trials, theta)
        })
        .collect()
}

const TRIAL_HEADER: [&str; 5] = [
    "utterance_id",
    "true_speaker",
    "predicted_index",
    "score",
    "architecture",
];

/// Writes a trial score file. `speaker_ids` maps enrolled indices to ids.
pub fn write_trials(
    path: impl AsRef<Path>,
    trials: &[TrialScore],
    speaker_ids: &[String],
    architecture: Architecture,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIAL_HEADER)?;
    for t in trials {
        let truth = match t.true_index {
            Some(i) => speaker_ids
                .get(i)
                .ok_or_else(|| Error::invalid(format!("true index {i} outside the bank")))?
                .as_str(),
            None => IMPOSTOR,
        };
        w.write_record([
            t.utterance_id.as_str(),
            truth,
            &t.predicted_index.to_string(),
            &t.score.to_string(),
            architecture.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trial score file back. Every row must carry the same
/// architecture tag.
pub fn read_trials(
    path: impl AsRef<Path>,
    speaker_ids: &[String],
) -> Result<(Vec<TrialScore>, Architecture)> {
    let path = path.as_ref();
    read_trials_inner(path, speaker_ids).map_err(|e| e.at(path))
}

fn read_trials_inner(
    path: &Path,
    speaker_ids: &[String],
) -> Result<(Vec<TrialScore>, Architecture)> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(rdr.headers()?, &TRIAL_HEADER)?;
    let mut trials = Vec::new();
    let mut arch = None;
    for rec in rdr.records() {
        let rec = rec?;
        let true_index = match &rec[1] {
            IMPOSTOR => None,
            id => Some(
                speaker_ids
                    .iter()
                    .position(|s| s == id)
                    .ok_or_else(|| Error::Format(format!("speaker {id} is not enrolled")))?,
            ),
        };
        let predicted_index = rec[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad predicted index {:?}", &rec[2])))?;
        let score = rec[3]
            .parse()
            .map_err(|_| Error::Format(format!("bad score {:?}", &rec[3])))?;
        let a: Architecture = rec[4].parse()?;
        if arch.is_some_and(|prev| prev != a) {
            return Err(Error::Format("trial file mixes architectures".into()));
        }
        arch = Some(a);
        trials.push(TrialScore {
            utterance_id: rec[0].to_string(),
            true_index,
            predicted_index,
            score,
        });
    }
    let arch = arch.ok_or_else(|| Error::Format("trial file has no rows".into()))?;
    Ok((trials, arch))
}

/// One line of the summary report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub architecture: Architecture,
    pub population_size: usize,
    pub csrr: f64,
    pub eer: f64,
    pub theta_star: f64,
}

impl ReportRow {
    /// Summarizes one trial set: CSRR over its enrolled trials, EER over all.
    pub fn from_trials(
        architecture: Architecture,
        population_size: usize,
        trials: &[TrialScore],
    ) -> Result<Self> {
        let enrolled: Vec<TrialScore> = trials
            .iter()
            .filter(|t| !t.is_impostor())
            .cloned()
            .collect();
        let eer = compute_eer(trials)?;
        Ok(ReportRow {
            architecture,
            population_size,
            csrr: csrr(&enrolled)?,
            eer: eer.eer,
            theta_star: eer.threshold,
        })
    }
}

const REPORT_HEADER: [&str; 5] = [
    "architecture",
    "population_size",
    "csrr",
    "eer",
    "theta_star",
];

pub fn write_report(path: impl AsRef<Path>, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(REPORT_HEADER)?;
    for r in rows {
        w.write_record([
            r.architecture.as_str(),
            &r.population_size.to_string(),
            &r.csrr.to_string(),
            &r.eer.to_string(),
            &r.theta_star.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let inner = || -> Result<Vec<ReportRow>> {
        let mut rdr = csv::Reader::from_path(path)?;
        check_header(rdr.headers()?, &REPORT_HEADER)?;
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number {s:?}")))
        };
        rdr.records()
            .map(|rec| {
                let rec = rec?;
                Ok(ReportRow {
                    architecture: rec[0].parse()?,
                    population_size: rec[1]
                        .parse()
                        .map_err(|_| Error::Format(format!("bad population {:?}", &rec[1])))?,
                    csrr: num(&rec[2])?,
                    eer: num(&rec[3])?,
                    theta_star: num(&rec[4])?,
                })
            })
            .collect()
    };
    inner().map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn enrolled(score: f64, truth: usize, pred: usize) -> TrialScore {
        TrialScore {
            utterance_id: format!("e{truth}-{score}"),
            true_index: Some(truth),
            predicted_index: pred,
            score,
        }
    }

    fn impostor(score: f64) -> TrialScore {
        TrialScore {
            utterance_id: format!("i-{score}"),
            true_index: None,
            predicted_index: 0,
            score,
        }
    }

    fn random_trials(n: usize, seed: u64) -> Vec<TrialScore> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                if rng.random_bool(0.4) {
                    impostor(rng.random::<f64>() * 0.8)
                } else {
                    let truth = rng.random_range(0..5);
                    let pred = if rng.random_bool(0.9) {
                        truth
                    } else {
                        (truth + 1) % 5
                    };
                    let mut t = enrolled(0.3 + rng.random::<f64>() * 0.7, truth, pred);
                    t.utterance_id = format!("u{i}");
                    t
                }
            })
            .collect()
    }

    #[test]
    fn csrr_examples() {
        let all_right: Vec<_> = (0..10).map(|i| enrolled(0.5, i, i)).collect();
        assert_eq!(csrr(&all_right).unwrap(), 1.0);
        let mut many: Vec<_> = (0..1000).map(|i| enrolled(0.1, i % 7, i % 7)).collect();
        for t in many.iter_mut().take(3) {
            t.predicted_index += 1;
        }
        assert!((csrr(&many).unwrap() - 0.997).abs() < 1e-15);
        assert!(csrr(&[impostor(0.0)]).is_err());
        assert!(csrr(&[]).is_err());
    }

    #[test]
    fn csrr_matches_a_tally() {
        let trials: Vec<_> = random_trials(300, 1)
            .into_iter()
            .filter(|t| !t.is_impostor())
            .collect();
        let mut hits = 0;
        for t in &trials {
            if t.true_index == Some(t.predicted_index) {
                hits += 1;
            }
        }
        assert_eq!(csrr(&trials).unwrap(), hits as f64 / trials.len() as f64);
    }

    #[test]
    fn corner_thresholds() {
        let trials = vec![
            enrolled(0.9, 0, 0),
            enrolled(0.7, 1, 1),
            impostor(0.2),
            impostor(0.8),
        ];
        let r = rates_at_threshold(&trials, 2.0).unwrap();
        assert_eq!((r.far, r.frr, r.mlr), (0.0, 1.0, 0.0));
        let r = rates_at_threshold(&trials, -2.0).unwrap();
        assert_eq!((r.far, r.frr, r.mlr), (1.0, 0.0, 0.0));
        assert!(rates_at_threshold(&trials[..2], 0.0).is_err());
        assert!(rates_at_threshold(&trials[2..], 0.0).is_err());
    }

    #[test]
    fn rates_match_case_analysis() {
        let trials = random_trials(200, 2);
        for theta in [0.0, 0.25, 0.5, 0.61, 0.9] {
            let r = rates_at_threshold(&trials, theta).unwrap();
            let imp: Vec<_> = trials.iter().filter(|t| t.true_index.is_none()).collect();
            let enr: Vec<_> = trials.iter().filter(|t| t.true_index.is_some()).collect();
            let fa = imp.iter().filter(|t| t.score >= theta).count();
            let fr = enr.iter().filter(|t| t.score < theta).count();
            let ml = enr
                .iter()
                .filter(|t| t.score >= theta && t.true_index != Some(t.predicted_index))
                .count();
            assert_eq!(r.far, fa as f64 / imp.len() as f64);
            assert_eq!(r.frr, fr as f64 / enr.len() as f64);
            assert_eq!(r.mlr, ml as f64 / enr.len() as f64);
        }
    }

    #[test]
    fn rejected_mislabel_counts_as_rejection_only() {
        let trials = vec![enrolled(0.1, 0, 1), impostor(0.0)];
        let r = rates_at_threshold(&trials, 0.5).unwrap();
        assert_eq!((r.frr, r.mlr), (1.0, 0.0));
    }

    #[test]
    fn perfect_separation() {
        let mut trials: Vec<_> = (0..5).map(|i| enrolled(1.0, i, i)).collect();
        trials.extend((0..5).map(|_| impostor(0.0)));
        let e = compute_eer(&trials).unwrap();
        assert_eq!(e.eer, 0.0);
        assert_eq!(e.threshold, 0.5);
        assert_eq!(e.rates.imbalance(), 0.0);
    }

    #[test]
    fn same_distribution_gives_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trials: Vec<_> = (0..20_000)
            .map(|i| {
                let s = rng.random::<f64>();
                if i % 2 == 0 {
                    enrolled(s, 0, 0)
                } else {
                    impostor(s)
                }
            })
            .collect();
        let e = compute_eer(&trials).unwrap();
        assert!((e.eer - 0.5).abs() < 0.02, "eer {}", e.eer);
        assert!(e.rates.imbalance().abs() < 1e-9);
    }

    #[test]
    fn zero_plateau_takes_its_midpoint() {
        // theta: 0.2   0.4   0.6   0.8   0.8+
        //   FAR  1     0.5   0.5   0     0
        //   FRR  0     0     0.5   0.5   1
        // The imbalance is zero at 0.6 only, i.e. for thresholds in (0.4, 0.6].
        let trials = vec![
            impostor(0.2),
            impostor(0.6),
            enrolled(0.4, 0, 0),
            enrolled(0.8, 0, 0),
        ];
        let e = compute_eer(&trials).unwrap();
        assert_eq!(e.eer, 0.5);
        assert!((e.threshold - 0.5).abs() < 1e-15);
    }

    #[test]
    fn strict_crossing_is_interpolated() {
        // theta: 0.1   0.3   0.5   0.6   0.9
        //   FAR  1     2/3   2/3   1/3   0
        //   FRR  0     0     1/2   1/2   1/2
        // Imbalance +1/6 at 0.5 and -1/6 at 0.6: halfway, EER 1/2 at 0.55.
        let trials = vec![
            impostor(0.1),
            impostor(0.5),
            impostor(0.6),
            enrolled(0.3, 0, 0),
            enrolled(0.9, 0, 0),
        ];
        let e = compute_eer(&trials).unwrap();
        assert!((e.eer - 0.5).abs() < 1e-15);
        assert!((e.threshold - 0.55).abs() < 1e-15);
        assert!((e.rates.frr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eer_balances_the_rates() {
        for seed in 0..20 {
            let e = compute_eer(&random_trials(150, seed)).unwrap();
            assert!(e.rates.imbalance().abs() < 1e-9);
            assert!((0.0..=1.0).contains(&e.eer));
        }
    }

    #[test]
    fn det_sweep_corners_and_monotonicity() {
        let trials = random_trials(120, 4);
        let two = det_sweep(&trials, 2).unwrap();
        assert_eq!((two[0].far, two[0].frr), (1.0, 0.0));
        assert_eq!((two[1].far, two[1].frr, two[1].mlr), (0.0, 1.0, 0.0));
        let many = det_sweep(&trials, 50).unwrap();
        for w in many.windows(2) {
            assert!(w[1].far <= w[0].far);
            assert!(w[1].frr >= w[0].frr);
            assert!(w[1].mlr <= w[0].mlr);
        }
        for p in &many {
            assert_eq!(*p, rates_at_threshold(&trials, p.threshold).unwrap());
        }
        assert!(det_sweep(&trials, 1).is_err());
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let trials = vec![enrolled(f64::NAN, 0, 0), impostor(0.0)];
        assert!(compute_eer(&trials).is_err());
    }

    #[test]
    fn trial_and_report_files() {
        let dir = tempfile::tempdir().unwrap();
        let ids: Vec<String> = (0..5).map(|i| format!("spk{i}")).collect();
        let trials = random_trials(40, 5);
        let p = dir.path().join("trials.csv");
        write_trials(&p, &trials, &ids, Architecture::Subnn).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("utterance_id,true_speaker,predicted_index,score,architecture\n"));
        let (back, arch) = read_trials(&p, &ids).unwrap();
        assert_eq!(back, trials);
        assert_eq!(arch, Architecture::Subnn);

        let row = ReportRow::from_trials(Architecture::Subnn, 5, &trials).unwrap();
        let rp = dir.path().join("report.csv");
        write_report(&rp, std::slice::from_ref(&row)).unwrap();
        assert_eq!(read_report(&rp).unwrap(), vec![row]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rates_ignore_trial_order(seed: u64, theta in 0.0f64..1.0) {
                let mut trials = random_trials(60, seed);
                prop_assume!(trials.iter().any(|t| t.is_impostor()) && trials.iter().any(|t| !t.is_impostor()));
                let a = rates_at_threshold(&trials, theta).unwrap();
                let e = compute_eer(&trials).unwrap();
                trials.reverse();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rand::seq::SliceRandom::shuffle(&mut trials[..], &mut rng);
                prop_assert_eq!(a, rates_at_threshold(&trials, theta).unwrap());
                prop_assert_eq!(e, compute_eer(&trials).unwrap());
            }

            #[test]
            fn rates_are_monotone_in_threshold(seed: u64, a in 0.0f64..1.0, b in 0.0f64..1.0) {
                let trials = random_trials(60, seed);
                prop_assume!(trials.iter().any(|t| t.is_impostor()) && trials.iter().any(|t| !t.is_impostor()));
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let r_lo = rates_at_threshold(&trials, lo).unwrap();
                let r_hi = rates_at_threshold(&trials, hi).unwrap();
                prop_assert!(r_hi.far <= r_lo.far);
                prop_assert!(r_hi.frr >= r_lo.frr);
                prop_assert!(r_hi.mlr <= r_lo.mlr);
                prop_assert!(r_hi.frr + r_hi.mlr <= 1.0);
            }

            #[test]
            fn csrr_ignores_scores(seed: u64, offset in -5.0f64..5.0) {
                let trials: Vec<_> = random_trials(50, seed).into_iter().filter(|t| !t.is_impostor()).collect();
                prop_assume!(!trials.is_empty());
                let shifted: Vec<_> = trials.iter().map(|t| TrialScore { score: t.score + offset, ..t.clone() }).collect();
                prop_assert_eq!(csrr(&trials).unwrap(), csrr(&shifted).unwrap());
            }
        }
    }
}

//! Group-level F1, pairwise AUC and scene-dynamics counts.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{GroupPartition, PersonId};

/// Fraction of a ground-truth group that must be recovered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMatchConfig {
    pub thr: f64,
}

impl GroupMatchConfig {
    pub const TWO_THIRDS: GroupMatchConfig = GroupMatchConfig { thr: 2.0 / 3.0 };
    pub const FULL: GroupMatchConfig = GroupMatchConfig { thr: 1.0 };

    /// Accepts the conventional spellings `0.667` / `0.67` for 2/3.
    pub fn new(thr: f64) -> Result<Self> {
        if !(thr > 0.0 && thr <= 1.0) {
            return Err(Error::invariant("thr", format!("{thr} not in (0, 1]")));
        }
        let thr = if (thr - 2.0 / 3.0).abs() < 5e-3 { 2.0 / 3.0 } else { thr };
        Ok(Self { thr })
    }

    /// Members of a group of `size` that must be matched: ⌈thr · size⌉.
    pub fn required(&self, size: usize) -> usize {
        // guards 2/3 * 3 landing a hair above 2
        (self.thr * size as f64 - 1e-9).ceil() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl GroupScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        let f1 = if tp + fp + fn_ == 0 {
            1.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        };
        Self {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1,
            tp,
            fp,
            fn_,
        }
    }
}

fn intersection(a: &[PersonId], b: &[PersonId]) -> usize {
    a.iter().filter(|m| b.binary_search(m).is_ok()).count()
}

/// Scores detected against ground-truth groups. Singletons are dropped from
/// both sides first; each group takes part in at most one match, assigned
/// greedily by largest intersection.
pub fn group_f1(detected: &GroupPartition, gt: &GroupPartition, cfg: GroupMatchConfig) -> GroupScore {
    let det = detected.without_singletons();
    let gt = gt.without_singletons();
    let det = det.groups();
    let gt = gt.groups();

    let mut candidates: Vec<(usize, PersonId, PersonId, usize, usize)> = Vec::new();
    for (di, d) in det.iter().enumerate() {
        for (gi, g) in gt.iter().enumerate() {
            let inter = intersection(d, g);
            let ok = if cfg.thr >= 1.0 {
                d == g
            } else {
                inter >= cfg.required(g.len())
            };
            if ok && inter > 0 {
                candidates.push((inter, g[0], d[0], di, gi));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_det = vec![false; det.len()];
    let mut used_gt = vec![false; gt.len()];
    let mut tp = 0;
    for (_, _, _, di, gi) in candidates {
        if !used_det[di] && !used_gt[gi] {
            used_det[di] = true;
            used_gt[gi] = true;
            tp += 1;
        }
    }
    GroupScore::from_counts(tp, det.len() - tp, gt.len() - tp)
}

/// Area under the ROC curve as the Mann–Whitney statistic with ties
/// counted half, via average ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invariant("scores", format!("{s} is not finite")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && scores[order[end]] == scores[order[k]] {
            end += 1;
        }
        // ranks k+1 ..= end share their mean
        let mid = (k + 1 + end) as f64 / 2.0;
        pos_rank_sum += mid * order[k..end].iter().filter(|&&i| labels[i]).count() as f64;
        k = end;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Formation, break and reformation counts at one timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DynamicsScore {
    pub formations: usize,
    pub breaks: usize,
    pub reformations: usize,
}

impl DynamicsScore {
    pub fn total(&self) -> usize {
        self.formations + self.breaks + self.reformations
    }
}

/// Events per timestep. A group is identified by its exact member set;
/// only groups of two or more count.
pub fn scene_dynamics(partitions: &[GroupPartition]) -> Vec<DynamicsScore> {
    let sets: Vec<BTreeSet<Vec<PersonId>>> = partitions
        .iter()
        .map(|p| p.without_singletons().groups().iter().cloned().collect())
        .collect();
    let mut seen: BTreeSet<Vec<PersonId>> = BTreeSet::new();
    let mut out = Vec::with_capacity(sets.len());
    for (t, cur) in sets.iter().enumerate() {
        let mut score = DynamicsScore::default();
        let prev = if t > 0 { Some(&sets[t - 1]) } else { None };
        for g in cur {
            if !seen.contains(g) {
                score.formations += 1;
            } else if prev.is_some_and(|p| !p.contains(g)) {
                score.reformations += 1;
            }
        }
        if let Some(prev) = prev {
            score.breaks = prev.iter().filter(|g| !cur.contains(*g)).count();
        }
        seen.extend(cur.iter().cloned());
        out.push(score);
    }
    out
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Spearman rank correlation, average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut k = 0;
        while k < order.len() {
            let mut end = k + 1;
            while end < order.len() && v[order[end]] == v[order[k]] {
                end += 1;
            }
            let mid = (k + end - 1) as f64 / 2.0;
            order[k..end].iter().for_each(|&i| r[i] = mid);
            k = end;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, sx) = mean_std(&rx);
    let (my, sy) = mean_std(&ry);
    if sx == 0.0 || sy == 0.0 {
        return 0.0;
    }
    let cov = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / rx.len() as f64;
    cov / (sx * sy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(groups: &[&[PersonId]]) -> GroupPartition {
        GroupPartition::new(groups.iter().map(|g| g.to_vec()).collect()).unwrap()
    }

    #[test]
    fn identical_partitions_score_one() {
        let p = part(&[&[1, 2, 3], &[4, 5]]);
        for cfg in [GroupMatchConfig::TWO_THIRDS, GroupMatchConfig::FULL] {
            let s = group_f1(&p, &p, cfg);
            assert_eq!((s.f1, s.tp, s.fp, s.fn_), (1.0, 2, 0, 0));
        }
    }

    #[test]
    fn two_thirds_tolerates_one_swap() {
        let s = group_f1(&part(&[&[1, 2, 4]]), &part(&[&[1, 2, 3]]), GroupMatchConfig::TWO_THIRDS);
        assert_eq!(s.tp, 1);
        let s = group_f1(&part(&[&[1, 2, 4]]), &part(&[&[1, 2, 3]]), GroupMatchConfig::FULL);
        assert_eq!((s.tp, s.fp, s.fn_), (0, 1, 1));
    }

    #[test]
    fn hand_enumerated_split() {
        let s = group_f1(
            &part(&[&[1, 2], &[3, 4, 5, 6]]),
            &part(&[&[1, 2, 3], &[4, 5, 6]]),
            GroupMatchConfig::TWO_THIRDS,
        );
        assert_eq!((s.tp, s.fp, s.fn_, s.f1), (2, 0, 0, 1.0));
    }

    #[test]
    fn full_match_rejects_supersets() {
        let s = group_f1(&part(&[&[1, 2, 3, 9]]), &part(&[&[1, 2, 3]]), GroupMatchConfig::FULL);
        assert_eq!(s.tp, 0);
    }

    #[test]
    fn empty_partitions_score_one() {
        let s = group_f1(&part(&[&[1], &[2]]), &part(&[]), GroupMatchConfig::FULL);
        assert_eq!(s.f1, 1.0);
    }

    #[test]
    fn thr_spellings() {
        assert_eq!(GroupMatchConfig::new(0.667).unwrap().required(3), 2);
        assert_eq!(GroupMatchConfig::new(2.0 / 3.0).unwrap().required(3), 2);
        assert_eq!(GroupMatchConfig::new(1.0).unwrap().required(4), 4);
        assert!(GroupMatchConfig::new(0.0).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 5], &[false, true, false, true, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(), 0.75);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn dynamics_examples() {
        let static_seq = vec![part(&[&[0, 1], &[2, 3]]); 4];
        let d = scene_dynamics(&static_seq);
        assert_eq!(d[0].formations, 2);
        assert!(d[1..].iter().all(|s| s.total() == 0));

        let grow = [part(&[&[0, 1]]), part(&[&[0, 1], &[2, 3]])];
        assert_eq!(scene_dynamics(&grow)[1].total(), 1);

        let b = [
            part(&[&[0, 1], &[2, 3]]),
            part(&[&[0, 1], &[2], &[3]]),
            part(&[&[0, 1], &[2, 3]]),
        ];
        let d = scene_dynamics(&b);
        assert_eq!(
            d[1],
            DynamicsScore {
                formations: 0,
                breaks: 1,
                reformations: 0
            }
        );
        assert_eq!(
            d[2],
            DynamicsScore {
                formations: 0,
                breaks: 0,
                reformations: 1
            }
        );
    }

    #[test]
    fn spearman_monotone() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]) - 1.0).abs() < 1e-12);
    }
}

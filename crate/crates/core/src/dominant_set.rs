//! Group extraction by iterative dominant-set peeling.
//!
//! Each round runs discrete replicator dynamics on the remaining nodes,
//! takes the support of the limit point as a candidate group and removes
//! it. Candidates whose cohesion `xᵀAx` falls below the affinity threshold
//! are emitted as singletons.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{AffinityMatrix, GroupPartition, PersonId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetrization {
    Raw,
    Average,
    Minimum,
    Maximum,
}

impl Symmetrization {
    pub const ALL: [Symmetrization; 4] = [
        Symmetrization::Raw,
        Symmetrization::Average,
        Symmetrization::Minimum,
        Symmetrization::Maximum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Symmetrization::Raw => "raw",
            Symmetrization::Average => "average",
            Symmetrization::Minimum => "minimum",
            Symmetrization::Maximum => "maximum",
        }
    }
}

impl fmt::Display for Symmetrization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Symmetrization {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown symmetrization {s:?}; expected raw, average, minimum or maximum"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DsConfig {
    pub affinity_threshold: f64,
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub support_cutoff: f64,
    pub strategy: Symmetrization,
}

impl Default for DsConfig {
    fn default() -> Self {
        Self {
            affinity_threshold: 0.5,
            max_iterations: 10_000,
            convergence_tol: 1e-6,
            support_cutoff: 1e-4,
            strategy: Symmetrization::Average,
        }
    }
}

impl DsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.affinity_threshold) {
            return Err(Error::invariant("affinity_threshold", "must lie in [0, 1]"));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::invariant("convergence_tol", "must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invariant("max_iterations", "must be positive"));
        }
        Ok(())
    }
}

pub fn symmetrize(a: &AffinityMatrix, strategy: Symmetrization) -> AffinityMatrix {
    let combine = |x: f64, y: f64| match strategy {
        Symmetrization::Raw => x,
        Symmetrization::Average => (x + y) / 2.0,
        Symmetrization::Minimum => x.min(y),
        Symmetrization::Maximum => x.max(y),
    };
    AffinityMatrix::from_fn(a.person_ids().to_vec(), |i, j| combine(a.get(i, j), a.get(j, i)))
        .expect("combining values in [0, 1] stays in [0, 1]")
}

/// Result of one replicator-dynamics extraction over a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantSet {
    /// Indices with weight above the support cutoff, ascending.
    pub members: Vec<usize>,
    /// Characteristic vector on the simplex.
    pub weights: Vec<f64>,
    /// `xᵀAx` at the returned point.
    pub cohesion: f64,
    /// Set when `xᵀAx = 0` at the start, which halts the dynamics.
    pub degenerate: bool,
}

fn quadratic(a: &[f64], x: &[f64], ax: &mut [f64]) -> f64 {
    let p = x.len();
    for i in 0..p {
        ax[i] = a[i * p..(i + 1) * p].iter().zip(x).map(|(v, w)| v * w).sum();
    }
    x.iter().zip(ax.iter()).map(|(w, v)| w * v).sum()
}

/// Iterates `x_k ← x_k (Ax)_k / xᵀAx` until the L1 step drops below tolerance.
fn replicate(a: &[f64], mut x: Vec<f64>, cfg: &DsConfig) -> (Vec<f64>, f64) {
    let p = x.len();
    let mut ax = vec![0.0; p];
    for _ in 0..cfg.max_iterations {
        let q = quadratic(a, &x, &mut ax);
        if q <= 0.0 {
            return (x, q);
        }
        let mut diff = 0.0;
        for k in 0..p {
            let next = x[k] * ax[k] / q;
            diff += (next - x[k]).abs();
            x[k] = next;
        }
        if diff < cfg.convergence_tol {
            break;
        }
    }
    let q = quadratic(a, &x, &mut ax);
    (x, q)
}

/// Relative size of the symmetry-breaking nudge applied at a stalled point.
const NUDGE: f64 = 1e-3;
/// Minimum cohesion gain that counts as escaping a stalled point.
const GAIN_TOL: f64 = 1e-9;

/// Extracts one dominant set from the `p × p` row-major matrix `a`.
///
/// The dynamics start at the barycenter. A symmetric configuration (two
/// equally strong cliques, say) is a fixed point there without being a
/// dominant set, so the limit is re-run from a nudge toward geometrically
/// decreasing weights `2^-k`; the nudge is kept whenever it raises
/// cohesion, which makes lower indices win ties. On a symmetric matrix a
/// limit that is not a strict local maximizer of `xᵀAx` is replaced by the
/// best strict one reachable with some of its members excluded.
pub fn extract_dominant_set(a: &[f64], p: usize, cfg: &DsConfig) -> Result<DominantSet> {
    if p == 0 || a.len() != p * p {
        return Err(Error::Shape(format!("{} values for a {p}x{p} matrix", a.len())));
    }
    if let Some(v) = a.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::invariant("affinity", format!("{v} is negative or not finite")));
    }
    if p == 1 {
        return Ok(DominantSet {
            members: vec![0],
            weights: vec![1.0],
            cohesion: 0.0,
            degenerate: false,
        });
    }
    let uniform = vec![1.0 / p as f64; p];
    let mut ax = vec![0.0; p];
    if quadratic(a, &uniform, &mut ax) <= 0.0 {
        return Ok(DominantSet {
            members: (0..p).collect(),
            weights: uniform,
            cohesion: 0.0,
            degenerate: true,
        });
    }
    let (mut x, mut q) = replicate(a, uniform, cfg);

    let ramp: Vec<f64> = {
        let raw: Vec<f64> = (0..p).map(|k| 0.5f64.powi(k as i32)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    };
    for _ in 0..p {
        let start: Vec<f64> = x
            .iter()
            .zip(&ramp)
            .map(|(xi, ri)| (1.0 - NUDGE) * xi + NUDGE * ri)
            .collect();
        let (y, qy) = replicate(a, start, cfg);
        if qy > q + GAIN_TOL {
            x = y;
            q = qy;
        } else {
            break;
        }
    }

    let members: Vec<usize> = (0..p).filter(|&k| x[k] > cfg.support_cutoff).collect();
    // The strictness test is about symmetric payoffs; raw matrices keep the plain limit.
    let symmetric = (0..p).all(|i| (0..i).all(|j| a[i * p + j] == a[j * p + i]));
    if !symmetric || strict_solution(a, p, &members).is_some() {
        return Ok(DominantSet {
            members,
            weights: x,
            cohesion: q,
            degenerate: false,
        });
    }

    // Exact ties can leave the dynamics on a plateau of non-strict maxima,
    // whose support is not a dominant set. Coordinates that start at zero
    // stay there, so restarting with plateau members switched off explores
    // the other faces; the best strict limit found is kept.
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    let mut queue: VecDeque<Vec<usize>> = members.iter().map(|&k| vec![k]).collect();
    let mut visited: BTreeSet<Vec<usize>> = queue.iter().cloned().collect();
    let mut runs = 0;
    while let Some(excluded) = queue.pop_front() {
        if runs >= MAX_RESTARTS * p {
            break;
        }
        runs += 1;
        let allowed = p - excluded.len();
        if allowed < 2 {
            continue;
        }
        let start: Vec<f64> = (0..p)
            .map(|k| {
                if excluded.contains(&k) {
                    0.0
                } else {
                    1.0 / allowed as f64
                }
            })
            .collect();
        let (y, qy) = replicate(a, start, cfg);
        if qy <= 0.0 {
            continue;
        }
        let support: Vec<usize> = (0..p).filter(|&k| y[k] > cfg.support_cutoff).collect();
        match strict_solution(a, p, &support) {
            Some((xs, qs)) => {
                let better = match &best {
                    None => true,
                    Some((m, _, qb)) => qs > qb + GAIN_TOL || ((qs - qb).abs() <= GAIN_TOL && support < *m),
                };
                if better {
                    best = Some((support, xs, qs));
                }
            }
            None => {
                for &k in &support {
                    let mut next = excluded.clone();
                    next.push(k);
                    next.sort_unstable();
                    if visited.insert(next.clone()) {
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    Ok(match best {
        Some((members, weights, cohesion)) => DominantSet {
            members,
            weights,
            cohesion,
            degenerate: false,
        },
        None => DominantSet {
            members,
            weights: x,
            cohesion: q,
            degenerate: false,
        },
    })
}

/// Restarts allowed per node when escaping a non-strict plateau.
const MAX_RESTARTS: usize = 8;
/// Margin for the strictness test.
const STRICT_TOL: f64 = 1e-9;

/// The equilibrium on the face spanned by `members`, if it is a strict
/// local maximizer of `xᵀAx` over the simplex: positive on every member,
/// every outsider's payoff strictly below the cohesion, and the form
/// negative definite along the face.
fn strict_solution(a: &[f64], p: usize, members: &[usize]) -> Option<(Vec<f64>, f64)> {
    let s = members.len();
    if s < 2 {
        return None;
    }
    let sym = |i: usize, j: usize| 0.5 * (a[i * p + j] + a[j * p + i]);
    // [B  -1; 1ᵀ 0] [x; q] = [0; 1]
    let kkt = DMatrix::from_fn(s + 1, s + 1, |r, c| match (r < s, c < s) {
        (true, true) => sym(members[r], members[c]),
        (true, false) => -1.0,
        (false, true) => 1.0,
        (false, false) => 0.0,
    });
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) || sol.iter().take(s).any(|&v| v <= STRICT_TOL) {
        return None;
    }
    let q = sol[s];
    let mut x = vec![0.0; p];
    for (k, &m) in members.iter().enumerate() {
        x[m] = sol[k];
    }
    for j in (0..p).filter(|j| !members.contains(j)) {
        let payoff: f64 = members.iter().map(|&m| sym(j, m) * x[m]).sum();
        if payoff >= q - STRICT_TOL {
            return None;
        }
    }
    // Project onto the face's tangent space and push the normal direction down.
    let proj = DMatrix::from_fn(s, s, |r, c| f64::from(u8::from(r == c)) - 1.0 / s as f64);
    let b = DMatrix::from_fn(s, s, |r, c| sym(members[r], members[c]));
    let form = &proj * b * &proj - DMatrix::from_element(s, s, 1.0 / s as f64);
    let top = form.symmetric_eigenvalues().max();
    (top < -STRICT_TOL).then_some((x, q))
}

/// One peeled candidate, in person ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub members: Vec<PersonId>,
    pub cohesion: f64,
    pub degenerate: bool,
}

impl Candidate {
    fn accepted(&self, threshold: f64) -> bool {
        !self.degenerate && self.members.len() >= 2 && self.cohesion >= threshold
    }
}

/// The sequence of candidates removed by peeling. A rejected candidate
/// is removed just like an accepted one, so the sequence does not depend
/// on the affinity threshold.
pub fn peel(a: &AffinityMatrix, cfg: &DsConfig) -> Result<Vec<Candidate>> {
    cfg.validate()?;
    let sym = symmetrize(a, cfg.strategy);
    let ids = sym.person_ids();
    let mut remaining: Vec<usize> = (0..ids.len()).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        if remaining.len() == 1 {
            out.push(Candidate {
                members: vec![ids[remaining[0]]],
                cohesion: 0.0,
                degenerate: false,
            });
            break;
        }
        let r = remaining.len();
        let sub: Vec<f64> = (0..r * r)
            .map(|k| sym.get(remaining[k / r], remaining[k % r]))
            .collect();
        let ds = extract_dominant_set(&sub, r, cfg)?;
        let chosen: Vec<usize> = ds.members.iter().map(|&k| remaining[k]).collect();
        out.push(Candidate {
            members: chosen.iter().map(|&k| ids[k]).collect(),
            cohesion: ds.cohesion,
            degenerate: ds.degenerate,
        });
        remaining.retain(|k| !chosen.contains(k));
    }
    Ok(out)
}

/// Turns a peel sequence into groups: candidates below `threshold` split
/// into singletons.
pub fn partition_at(candidates: &[Candidate], threshold: f64) -> Result<GroupPartition> {
    let mut groups: Vec<Vec<PersonId>> = Vec::new();
    for c in candidates {
        if c.accepted(threshold) {
            groups.push(c.members.clone());
        } else {
            groups.extend(c.members.iter().map(|&m| vec![m]));
        }
    }
    GroupPartition::new(groups)
}

/// Partitions everyone in `a` into groups.
pub fn cluster(a: &AffinityMatrix, cfg: &DsConfig) -> Result<GroupPartition> {
    partition_at(&peel(a, cfg)?, cfg.affinity_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> AffinityMatrix {
        let ids: Vec<usize> = (0..rows.len()).collect();
        AffinityMatrix::new(ids, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn symmetrize_pair_definitions() {
        let a = matrix(&[&[0.0, 0.2], &[0.8, 0.0]]);
        let get = |s| symmetrize(&a, s).get(0, 1);
        assert_eq!(get(Symmetrization::Average), 0.5);
        assert_eq!(get(Symmetrization::Minimum), 0.2);
        assert_eq!(get(Symmetrization::Maximum), 0.8);
        assert_eq!(get(Symmetrization::Raw), 0.2);
        assert_eq!(symmetrize(&a, Symmetrization::Maximum).get(1, 0), 0.8);
    }

    #[test]
    fn symmetric_input_is_a_fixed_point() {
        let a = matrix(&[&[0.0, 0.3, 0.9], &[0.3, 0.0, 0.1], &[0.9, 0.1, 0.0]]);
        for s in Symmetrization::ALL {
            assert_eq!(symmetrize(&a, s), a);
        }
    }

    #[test]
    fn two_node_fixed_point() {
        let ds = extract_dominant_set(&[0.0, 1.0, 1.0, 0.0], 2, &DsConfig::default()).unwrap();
        assert_eq!(ds.members, vec![0, 1]);
        assert!((ds.weights[0] - 0.5).abs() < 1e-12);
        assert!((ds.cohesion - 0.5).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_is_excluded() {
        let a = [0.0, 0.9, 0.0, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0];
        let ds = extract_dominant_set(&a, 3, &DsConfig::default()).unwrap();
        assert_eq!(ds.members, vec![0, 1]);
    }

    #[test]
    fn single_node_and_zero_matrix() {
        let ds = extract_dominant_set(&[0.0], 1, &DsConfig::default()).unwrap();
        assert_eq!((ds.members, ds.weights), (vec![0], vec![1.0]));
        let ds = extract_dominant_set(&[0.0; 9], 3, &DsConfig::default()).unwrap();
        assert!(ds.degenerate);
        assert_eq!(ds.members, vec![0, 1, 2]);
    }

    #[test]
    fn equal_blocks_break_toward_lower_ids() {
        // barycenter is a fixed point; the nudge must pick the block holding node 0
        let mut v = vec![0.05; 16];
        for (i, j) in [(0, 3), (1, 2)] {
            v[i * 4 + j] = 0.9;
            v[j * 4 + i] = 0.9;
        }
        (0..4).for_each(|i| v[i * 4 + i] = 0.0);
        let ds = extract_dominant_set(&v, 4, &DsConfig::default()).unwrap();
        assert_eq!(ds.members, vec![0, 3]);
    }

    #[test]
    fn tie_plateau_is_left_for_a_strict_set() {
        // From anywhere, the dynamics settle on {1,3} with node 0 tied at
        // zero weight; {0,2,3} is the strict maximizer, with lower cohesion.
        let a = [
            0.0, 0.25, 0.75, 0.75, 0.25, 0.0, 0.0, 1.0, 0.75, 0.0, 0.0, 0.25, 0.75, 1.0, 0.25, 0.0,
        ];
        let ds = extract_dominant_set(&a, 4, &DsConfig::default()).unwrap();
        assert_eq!(ds.members, vec![0, 2, 3]);
        assert!((ds.cohesion - 0.45 / 1.1).abs() < 1e-12);
        assert!(strict_solution(&a, 4, &[0, 1, 3]).is_none());
    }

    #[test]
    fn cluster_edge_cases() {
        let cfg = DsConfig::default();
        let one = AffinityMatrix::new(vec![7], vec![0.0]).unwrap();
        assert_eq!(cluster(&one, &cfg).unwrap().groups(), &[vec![7]]);
        let low = AffinityMatrix::from_fn(vec![0, 1, 2, 3], |_, _| 0.2).unwrap();
        let p = cluster(&low, &cfg).unwrap();
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn parse_strategy() {
        assert_eq!("minimum".parse::<Symmetrization>().unwrap(), Symmetrization::Minimum);
        assert!("median".parse::<Symmetrization>().is_err());
    }
}

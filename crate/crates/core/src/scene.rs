//! Scene data types and the JSON Lines interchange format.
//!
//! A file holds any number of sequences. Each sequence starts with a header
//! line `{"scene_id", "units", "n"}` followed by one record line per
//! timestep: `{"t", "persons": [{"id", "x", "y", "head", "body"?}], "groups"?}`.
//! Floats are written with 17 significant digits so that a save/load cycle
//! is exact.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type PersonId = usize;

/// Returns true when `angle` lies in (−π, π].
pub fn angle_in_range(angle: f64) -> bool {
    angle.is_finite() && angle > -PI && angle <= PI
}

/// Wraps any finite angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonState {
    pub id: PersonId,
    pub x: f64,
    pub y: f64,
    pub head: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<f64>,
}

impl PersonState {
    /// Body orientation, falling back to head orientation when absent.
    pub fn body_or_head(&self) -> f64 {
        self.body.unwrap_or(self.head)
    }

    fn check(&self, n: usize) -> std::result::Result<(), (String, String)> {
        if self.id >= n {
            return Err(("id".into(), format!("person id {} not in [0, {n})", self.id)));
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err((
                "position".into(),
                format!("person {} has a non-finite position", self.id),
            ));
        }
        if !angle_in_range(self.head) {
            return Err((
                "head".into(),
                format!("person {}: {} not in (-pi, pi]", self.id, self.head),
            ));
        }
        if let Some(body) = self.body {
            if !angle_in_range(body) {
                return Err(("body".into(), format!("person {}: {body} not in (-pi, pi]", self.id)));
            }
        }
        Ok(())
    }
}

/// Disjoint, non-empty member sets. Stored canonically: members ascending
/// within a group, groups ordered by their smallest member.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<PersonId>>", into = "Vec<Vec<PersonId>>")]
pub struct GroupPartition {
    groups: Vec<Vec<PersonId>>,
}

impl GroupPartition {
    pub fn new(groups: Vec<Vec<PersonId>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut canon = Vec::with_capacity(groups.len());
        for mut g in groups {
            if g.is_empty() {
                return Err(Error::invariant("groups", "empty group"));
            }
            g.sort_unstable();
            for &m in &g {
                if !seen.insert(m) {
                    return Err(Error::invariant(
                        "groups",
                        format!("person {m} appears in more than one group"),
                    ));
                }
            }
            canon.push(g);
        }
        canon.sort_unstable_by_key(|g| g[0]);
        Ok(Self { groups: canon })
    }

    /// Every id in its own group.
    pub fn singletons(ids: impl IntoIterator<Item = PersonId>) -> Self {
        Self::new(ids.into_iter().map(|i| vec![i]).collect()).expect("distinct ids")
    }

    pub fn groups(&self) -> &[Vec<PersonId>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = PersonId> + '_ {
        self.groups.iter().flatten().copied()
    }

    pub fn group_of(&self, id: PersonId) -> Option<usize> {
        self.groups.iter().position(|g| g.binary_search(&id).is_ok())
    }

    /// True when both ids are listed and share a group.
    pub fn same_group(&self, a: PersonId, b: PersonId) -> bool {
        match (self.group_of(a), self.group_of(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// Groups of two or more members.
    pub fn without_singletons(&self) -> Self {
        Self {
            groups: self.groups.iter().filter(|g| g.len() >= 2).cloned().collect(),
        }
    }

    /// Keeps only the listed ids, dropping groups that become empty.
    pub fn restrict(&self, ids: &BTreeSet<PersonId>) -> Self {
        let mut groups: Vec<Vec<PersonId>> = self
            .groups
            .iter()
            .map(|g| g.iter().copied().filter(|m| ids.contains(m)).collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect();
        // Dropping a group's smallest member can change its place in the order.
        groups.sort_unstable_by_key(|g| g[0]);
        Self { groups }
    }
}

impl TryFrom<Vec<Vec<PersonId>>> for GroupPartition {
    type Error = Error;

    fn try_from(groups: Vec<Vec<PersonId>>) -> Result<Self> {
        Self::new(groups)
    }
}

impl From<GroupPartition> for Vec<Vec<PersonId>> {
    fn from(p: GroupPartition) -> Self {
        p.groups
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub persons: Vec<PersonState>,
    pub groups: Option<GroupPartition>,
}

impl Frame {
    pub fn person(&self, id: PersonId) -> Option<&PersonState> {
        self.persons.iter().find(|p| p.id == id)
    }

    pub fn is_present(&self, id: PersonId) -> bool {
        self.person(id).is_some()
    }

    /// Present ids in ascending order.
    pub fn ids(&self) -> Vec<PersonId> {
        let mut ids: Vec<_> = self.persons.iter().map(|p| p.id).collect();
        ids.sort_unstable();
        ids
    }

    fn check(&self, n: usize) -> std::result::Result<(), (String, String)> {
        if !self.t.is_finite() {
            return Err(("t".into(), "timestamp is not finite".into()));
        }
        let mut seen = BTreeSet::new();
        for (k, p) in self.persons.iter().enumerate() {
            p.check(n).map_err(|(f, m)| (format!("persons[{k}].{f}"), m))?;
            if !seen.insert(p.id) {
                return Err((format!("persons[{k}].id"), format!("duplicate person id {}", p.id)));
            }
        }
        if let Some(groups) = &self.groups {
            if let Some(m) = groups.members().find(|m| !seen.contains(m)) {
                return Err(("groups".into(), format!("person {m} is not present in this frame")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    pub scene_id: String,
    pub units: String,
    pub n: usize,
    pub frames: Vec<Frame>,
}

impl SceneSequence {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invariant("n", "must be positive"));
        }
        if self.frames.is_empty() {
            return Err(Error::invariant(
                "frames",
                format!("scene {} has no frames", self.scene_id),
            ));
        }
        for (k, frame) in self.frames.iter().enumerate() {
            frame
                .check(self.n)
                .map_err(|(f, m)| Error::invariant(format!("frames[{k}].{f}"), m))?;
            if k > 0 && frame.t <= self.frames[k - 1].t {
                return Err(Error::invariant(
                    format!("frames[{k}].t"),
                    "timesteps must be strictly increasing",
                ));
            }
        }
        Ok(())
    }

    pub fn timesteps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    pub fn is_labeled(&self) -> bool {
        self.frames.iter().all(|f| f.groups.is_some())
    }
}

/// Continuous pairwise affinities among the persons present at one time.
/// Row `i` holds the affinities predicted with `person_ids[i]` as focal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    person_ids: Vec<PersonId>,
    values: Vec<f64>,
}

impl AffinityMatrix {
    pub fn new(person_ids: Vec<PersonId>, values: Vec<f64>) -> Result<Self> {
        let p = person_ids.len();
        if values.len() != p * p {
            return Err(Error::Shape(format!("{} values for {p} persons", values.len())));
        }
        let mut values = values;
        for i in 0..p {
            for j in 0..p {
                let v = values[i * p + j];
                if i == j {
                    values[i * p + j] = 0.0;
                } else if !(0.0..=1.0).contains(&v) {
                    return Err(Error::invariant(
                        format!("values[{i}][{j}]"),
                        format!("{v} not in [0, 1]"),
                    ));
                }
            }
        }
        let unique: BTreeSet<_> = person_ids.iter().collect();
        if unique.len() != p {
            return Err(Error::invariant("person_ids", "duplicate id"));
        }
        Ok(Self { person_ids, values })
    }

    pub fn from_fn(person_ids: Vec<PersonId>, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let p = person_ids.len();
        let values = (0..p * p)
            .map(|k| if k / p == k % p { 0.0 } else { f(k / p, k % p) })
            .collect();
        Self::new(person_ids, values)
    }

    pub fn person_ids(&self) -> &[PersonId] {
        &self.person_ids
    }

    pub fn size(&self) -> usize {
        self.person_ids.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    scene_id: String,
    units: String,
    n: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    t: f64,
    persons: Vec<PersonState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    groups: Option<Vec<Vec<PersonId>>>,
}

/// Writes every float with 17 significant digits.
struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

pub(crate) fn to_writer_full_precision<W: Write, T: Serialize>(writer: W, value: &T) -> Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(writer, FullPrecision);
    value.serialize(&mut ser)?;
    Ok(())
}

pub fn load_scene_sequences(path: impl AsRef<Path>) -> Result<Vec<SceneSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let seqs = parse_scene_sequences(&text)?;
    if seqs.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(seqs)
}

/// Parses interchange-format text. Returns an empty list for blank input.
pub fn parse_scene_sequences(text: &str) -> Result<Vec<SceneSequence>> {
    let mut seqs: Vec<SceneSequence> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let parse_err = |e: serde_json::Error| Error::Parse {
            line,
            message: e.to_string(),
        };
        if value.get("scene_id").is_some() {
            let h: HeaderLine = serde_json::from_value(value).map_err(parse_err)?;
            if h.n == 0 {
                return Err(Error::invariant(format!("line {line}: n"), "must be positive"));
            }
            if let Some(prev) = seqs.last() {
                if prev.frames.is_empty() {
                    return Err(Error::invariant(
                        format!("line {line}: frames"),
                        format!("scene {} has no records", prev.scene_id),
                    ));
                }
            }
            seqs.push(SceneSequence {
                scene_id: h.scene_id,
                units: h.units,
                n: h.n,
                frames: Vec::new(),
            });
        } else {
            let r: RecordLine = serde_json::from_value(value).map_err(parse_err)?;
            let seq = seqs.last_mut().ok_or_else(|| Error::Parse {
                line,
                message: "record before any scene header".into(),
            })?;
            let groups = r
                .groups
                .map(GroupPartition::new)
                .transpose()
                .map_err(|e| Error::invariant(format!("line {line}: groups"), e.to_string()))?;
            let frame = Frame {
                t: r.t,
                persons: r.persons,
                groups,
            };
            frame
                .check(seq.n)
                .map_err(|(f, m)| Error::invariant(format!("line {line}: {f}"), m))?;
            if let Some(prev) = seq.frames.last() {
                if frame.t <= prev.t {
                    return Err(Error::invariant(
                        format!("line {line}: t"),
                        "timesteps must be strictly increasing",
                    ));
                }
            }
            seq.frames.push(frame);
        }
    }
    if let Some(last) = seqs.last() {
        if last.frames.is_empty() {
            return Err(Error::invariant(
                "frames",
                format!("scene {} has no records", last.scene_id),
            ));
        }
    }
    Ok(seqs)
}

pub fn write_scene_sequences<W: Write>(seqs: &[SceneSequence], mut w: W) -> Result<()> {
    for seq in seqs {
        seq.validate()?;
        let header = HeaderLine {
            scene_id: seq.scene_id.clone(),
            units: seq.units.clone(),
            n: seq.n,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        for frame in &seq.frames {
            let record = RecordLine {
                t: frame.t,
                persons: frame.persons.clone(),
                groups: frame.groups.clone().map(Into::into),
            };
            to_writer_full_precision(&mut w, &record)?;
            w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
        }
    }
    Ok(())
}

pub fn save_scene_sequences(seqs: &[SceneSequence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_scene_sequences(seqs, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BY_THREE: &str = r#"{"scene_id":"s0","units":"m","n":2}
{"t":0.0,"persons":[{"id":0,"x":0.0,"y":0.0,"head":0.0},{"id":1,"x":1.0,"y":0.0,"head":3.14159}],"groups":[[0,1]]}
{"t":1.0,"persons":[{"id":0,"x":0.1,"y":0.0,"head":0.0,"body":0.1},{"id":1,"x":1.0,"y":0.0,"head":3.0}],"groups":[[0,1]]}
{"t":2.0,"persons":[{"id":0,"x":0.2,"y":0.0,"head":0.0},{"id":1,"x":1.0,"y":0.0,"head":3.0}]}
"#;

    #[test]
    fn parses_well_formed_file() {
        let seqs = parse_scene_sequences(TWO_BY_THREE).unwrap();
        assert_eq!(seqs.len(), 1);
        let s = &seqs[0];
        assert_eq!(s.n, 2);
        assert_eq!(s.frames.len(), 3);
        assert!(s.frames.iter().all(|f| f.persons.len() == 2));
        assert_eq!(s.frames[1].person(0).unwrap().body, Some(0.1));
        assert!(s.frames[2].groups.is_none());
        assert!(!s.is_labeled());
    }

    #[test]
    fn duplicate_person_is_rejected() {
        let text = r#"{"scene_id":"s","units":"m","n":3}
{"t":0.0,"persons":[{"id":1,"x":0.0,"y":0.0,"head":0.0},{"id":1,"x":1.0,"y":0.0,"head":0.0}]}
"#;
        let err = parse_scene_sequences(text).unwrap_err();
        match err {
            Error::Invariant { field, .. } => assert!(field.contains("line 2") && field.contains("id")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_json_reports_line() {
        let text = "{\"scene_id\":\"s\",\"units\":\"m\",\"n\":3}\n{\"t\": oops}\n";
        match parse_scene_sequences(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_angle_is_rejected_not_wrapped() {
        let text = r#"{"scene_id":"s","units":"m","n":2}
{"t":0.0,"persons":[{"id":0,"x":0.0,"y":0.0,"head":-3.141592653589793}]}
"#;
        assert!(matches!(parse_scene_sequences(text), Err(Error::Invariant { .. })));
    }

    #[test]
    fn non_increasing_time_and_bad_groups_rejected() {
        let text = r#"{"scene_id":"s","units":"m","n":2}
{"t":1.0,"persons":[{"id":0,"x":0.0,"y":0.0,"head":0.0}]}
{"t":1.0,"persons":[{"id":0,"x":0.0,"y":0.0,"head":0.0}]}
"#;
        assert!(matches!(parse_scene_sequences(text), Err(Error::Invariant { .. })));
        let text = r#"{"scene_id":"s","units":"m","n":2}
{"t":1.0,"persons":[{"id":0,"x":0.0,"y":0.0,"head":0.0}],"groups":[[0,1]]}
"#;
        assert!(matches!(parse_scene_sequences(text), Err(Error::Invariant { .. })));
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        save_scene_sequences(&[], &path).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        assert!(matches!(load_scene_sequences(&path), Err(Error::EmptyFile(_))));
    }

    #[test]
    fn one_person_scene_writes_one_record_per_step() {
        let seq = SceneSequence {
            scene_id: "solo".into(),
            units: "px".into(),
            n: 1,
            frames: (0..4)
                .map(|k| Frame {
                    t: k as f64 * 0.5,
                    persons: vec![PersonState {
                        id: 0,
                        x: 1.0 / 3.0,
                        y: -2.0,
                        head: 0.1 * k as f64,
                        body: None,
                    }],
                    groups: Some(GroupPartition::singletons([0])),
                })
                .collect(),
        };
        let mut buf = Vec::new();
        write_scene_sequences(std::slice::from_ref(&seq), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("3.3333333333333331e-1"));
        assert_eq!(parse_scene_sequences(&text).unwrap(), vec![seq]);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!(angle_in_range(wrap_angle(-1e-300)));
    }

    #[test]
    fn partition_canonical_and_disjoint() {
        let p = GroupPartition::new(vec![vec![5, 3], vec![1]]).unwrap();
        assert_eq!(p.groups(), &[vec![1], vec![3, 5]]);
        assert!(p.same_group(3, 5));
        assert!(!p.same_group(1, 3));
        assert!(GroupPartition::new(vec![vec![1, 2], vec![2]]).is_err());
        assert!(GroupPartition::new(vec![vec![]]).is_err());
        assert_eq!(p.without_singletons().groups(), &[vec![3, 5]]);
    }

    #[test]
    fn affinity_matrix_checks_range() {
        assert!(AffinityMatrix::new(vec![0, 1], vec![0.0, 1.2, 0.3, 0.0]).is_err());
        let a = AffinityMatrix::new(vec![0, 1], vec![0.7, 0.2, 0.3, 0.9]).unwrap();
        assert_eq!(a.get(0, 0), 0.0);
        assert_eq!(a.get(0, 1), 0.2);
    }
}

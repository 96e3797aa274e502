//! Deterministic synthetic social scenes with labelled conversation groups.
//!
//! Members of a group stand evenly spaced on a circle of radius
//! `o_space_radius` around the group centre and face it. Singletons stand
//! alone and wander in orientation. Scripted events (a member moves to
//! another group or leaves alone, a group dissolves, a past group reunites)
//! fire at `event_rate` per 100 steps. People walk to their new spot over
//! `transition_steps` steps and the label switches halfway through.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{wrap_angle, Frame, GroupPartition, PersonId, PersonState, SceneSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Id space size; each scene uses between `min_people` and `n_people` of them.
    pub n_people: usize,
    pub min_people: usize,
    pub n_scenes: usize,
    pub steps_per_scene: usize,
    /// Relative weight of group sizes 1, 2, 3, …
    pub group_size_distribution: Vec<f64>,
    /// Expected events per 100 steps.
    pub event_rate: f64,
    pub o_space_radius: f64,
    pub position_noise_std: f64,
    pub orientation_noise_std: f64,
    pub seed: u64,
    pub arena_size: f64,
    /// Free space kept between the circles of two groups.
    pub group_gap: f64,
    pub transition_steps: usize,
    pub drift_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_people: 8,
            min_people: 4,
            n_scenes: 200,
            steps_per_scene: 60,
            group_size_distribution: vec![0.1, 0.45, 0.3, 0.15],
            event_rate: 6.0,
            o_space_radius: 0.7,
            position_noise_std: 0.05,
            orientation_noise_std: 0.1,
            seed: 0,
            arena_size: 15.0,
            group_gap: 1.5,
            transition_steps: 4,
            drift_std: 0.02,
        }
    }
}

impl SynthConfig {
    fn separation(&self) -> f64 {
        2.0 * self.o_space_radius + self.group_gap
    }

    fn margin(&self) -> f64 {
        self.o_space_radius + 0.5
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_people", self.n_people as f64),
            ("min_people", self.min_people as f64),
            ("n_scenes", self.n_scenes as f64),
            ("steps_per_scene", self.steps_per_scene as f64),
            ("o_space_radius", self.o_space_radius),
            ("arena_size", self.arena_size),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::invariant(name, "must be positive"));
            }
        }
        let non_negative = [
            ("event_rate", self.event_rate),
            ("position_noise_std", self.position_noise_std),
            ("orientation_noise_std", self.orientation_noise_std),
            ("group_gap", self.group_gap),
            ("drift_std", self.drift_std),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) {
                return Err(Error::invariant(name, "must be non-negative"));
            }
        }
        if self.min_people > self.n_people {
            return Err(Error::invariant("min_people", "exceeds n_people"));
        }
        if self.transition_steps < 3 {
            return Err(Error::invariant("transition_steps", "must be at least 3"));
        }
        if self.group_size_distribution.is_empty()
            || self.group_size_distribution.iter().any(|w| !(*w >= 0.0))
            || self.group_size_distribution.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::invariant(
                "group_size_distribution",
                "needs non-negative weights with a positive sum",
            ));
        }
        // Everyone standing alone must fit with room to spare for rejection sampling.
        let usable = self.arena_size - 2.0 * self.margin();
        let needed = 2.0 * self.n_people as f64 * self.separation().powi(2);
        if usable <= 0.0 || usable * usable < needed {
            return Err(Error::Infeasible(format!(
                "{} people need about {needed:.1} square units of free arena, {:.1} available",
                self.n_people,
                usable.max(0.0).powi(2)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct SimGroup {
    center: (f64, f64),
    phase: f64,
    members: Vec<PersonId>,
}

#[derive(Debug, Clone)]
struct SimPerson {
    pos: (f64, f64),
    heading: f64,
    from: (f64, f64),
    progress: usize,
    moving: bool,
}

struct SceneSim<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
    groups: Vec<SimGroup>,
    persons: BTreeMap<PersonId, SimPerson>,
    label: GroupPartition,
    pending: Option<(usize, GroupPartition)>,
    history: BTreeSet<Vec<PersonId>>,
}

impl<'a> SceneSim<'a> {
    fn new(cfg: &'a SynthConfig, scene: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(scene as u64);
        let count = rng.random_range(cfg.min_people..=cfg.n_people);
        let mut ids: Vec<PersonId> = (0..cfg.n_people).collect();
        ids.shuffle(&mut rng);
        ids.truncate(count);

        let mut sim = Self {
            cfg,
            rng,
            groups: Vec::new(),
            persons: BTreeMap::new(),
            label: GroupPartition::default(),
            pending: None,
            history: BTreeSet::new(),
        };
        let mut rest = ids.as_slice();
        while !rest.is_empty() {
            let size = sim.sample_group_size().min(rest.len());
            let center = sim
                .free_spot(None)
                .ok_or_else(|| Error::Infeasible(format!("could not place {count} people in scene {scene}")))?;
            let phase = sim.rng.random_range(-PI..PI);
            sim.groups.push(SimGroup {
                center,
                phase,
                members: rest[..size].to_vec(),
            });
            rest = &rest[size..];
        }
        for g in 0..sim.groups.len() {
            for (k, &id) in sim.groups[g].members.iter().enumerate() {
                let pos = sim.slot(g, k);
                let heading = sim.rng.random_range(-PI..PI);
                sim.persons.insert(
                    id,
                    SimPerson {
                        pos,
                        heading,
                        from: pos,
                        progress: 0,
                        moving: false,
                    },
                );
            }
        }
        sim.label = sim.partition();
        sim.remember();
        Ok(sim)
    }

    fn sample_group_size(&mut self) -> usize {
        let w = &self.cfg.group_size_distribution;
        let total: f64 = w.iter().sum();
        let mut u = self.rng.random_range(0.0..total);
        for (k, &wk) in w.iter().enumerate() {
            if u < wk {
                return k + 1;
            }
            u -= wk;
        }
        w.len()
    }

    fn max_group_size(&self) -> usize {
        self.cfg.group_size_distribution.len().max(2)
    }

    fn slot(&self, g: usize, k: usize) -> (f64, f64) {
        let grp = &self.groups[g];
        let m = grp.members.len();
        if m == 1 {
            return grp.center;
        }
        let a = grp.phase + 2.0 * PI * k as f64 / m as f64;
        let r = self.cfg.o_space_radius;
        (grp.center.0 + r * a.cos(), grp.center.1 + r * a.sin())
    }

    fn partition(&self) -> GroupPartition {
        GroupPartition::new(self.groups.iter().map(|g| g.members.clone()).collect()).expect("disjoint by construction")
    }

    fn remember(&mut self) {
        for g in &self.groups {
            if g.members.len() >= 2 {
                let mut m = g.members.clone();
                m.sort_unstable();
                self.history.insert(m);
            }
        }
    }

    /// A random centre at least one separation away from every group except `skip`.
    fn free_spot(&mut self, skip: Option<usize>) -> Option<(f64, f64)> {
        let (lo, hi) = (self.cfg.margin(), self.cfg.arena_size - self.cfg.margin());
        let sep = self.cfg.separation();
        for _ in 0..200 {
            let c = (self.rng.random_range(lo..hi), self.rng.random_range(lo..hi));
            let clear = self
                .groups
                .iter()
                .enumerate()
                .filter(|(k, _)| Some(*k) != skip)
                .all(|(_, g)| (g.center.0 - c.0).hypot(g.center.1 - c.1) >= sep);
            if clear {
                return Some(c);
            }
        }
        None
    }

    fn group_of(&self, id: PersonId) -> usize {
        self.groups
            .iter()
            .position(|g| g.members.contains(&id))
            .expect("every person belongs to a group")
    }

    fn remove_member(&mut self, id: PersonId) {
        let g = self.group_of(id);
        self.groups[g].members.retain(|&m| m != id);
        if self.groups[g].members.is_empty() {
            self.groups.remove(g);
        }
    }

    fn add_singleton(&mut self, id: PersonId) -> bool {
        match self.free_spot(None) {
            Some(center) => {
                let phase = self.rng.random_range(-PI..PI);
                self.groups.push(SimGroup {
                    center,
                    phase,
                    members: vec![id],
                });
                true
            }
            None => false,
        }
    }

    /// Applies one random event to the target layout. Returns false if nothing changed.
    fn try_event(&mut self) -> bool {
        let backup = self.groups.clone();
        let ids: Vec<PersonId> = self.persons.keys().copied().collect();
        let roll: f64 = self.rng.random_range(0.0..1.0);
        let ok = if roll < 0.4 {
            // a member walks over to another group
            let id = *ids.choose(&mut self.rng).expect("scene has people");
            let from = self.group_of(id);
            let max = self.max_group_size();
            let targets: Vec<usize> = (0..self.groups.len())
                .filter(|&g| g != from && self.groups[g].members.len() < max)
                .collect();
            match targets.choose(&mut self.rng).copied() {
                Some(to) => {
                    self.groups[to].members.push(id);
                    self.groups[from].members.retain(|&m| m != id);
                    if self.groups[from].members.is_empty() {
                        self.groups.remove(from);
                    }
                    true
                }
                None => false,
            }
        } else if roll < 0.6 {
            // a member leaves to stand alone
            let candidates: Vec<PersonId> = ids
                .iter()
                .copied()
                .filter(|&id| self.groups[self.group_of(id)].members.len() >= 2)
                .collect();
            match candidates.choose(&mut self.rng).copied() {
                Some(id) => {
                    self.remove_member(id);
                    self.add_singleton(id)
                }
                None => false,
            }
        } else if roll < 0.75 {
            // a group dissolves
            let multi: Vec<usize> = (0..self.groups.len())
                .filter(|&g| self.groups[g].members.len() >= 2)
                .collect();
            match multi.choose(&mut self.rng).copied() {
                Some(g) => {
                    let members = self.groups.remove(g).members;
                    // the first member stays at the old spot
                    let keep = SimGroup {
                        center: self.slot_of_member_before(&backup, members[0]),
                        phase: 0.0,
                        members: vec![members[0]],
                    };
                    self.groups.push(keep);
                    members[1..].iter().all(|&id| self.add_singleton(id))
                }
                None => false,
            }
        } else {
            // a past group reunites
            let current: BTreeSet<Vec<PersonId>> = self
                .groups
                .iter()
                .map(|g| {
                    let mut m = g.members.clone();
                    m.sort_unstable();
                    m
                })
                .collect();
            let past: Vec<Vec<PersonId>> = self.history.iter().filter(|s| !current.contains(*s)).cloned().collect();
            match past.choose(&mut self.rng).cloned() {
                Some(set) => {
                    for &id in &set {
                        self.remove_member(id);
                    }
                    match self.free_spot(None) {
                        Some(center) => {
                            let phase = self.rng.random_range(-PI..PI);
                            self.groups.push(SimGroup {
                                center,
                                phase,
                                members: set,
                            });
                            true
                        }
                        None => false,
                    }
                }
                None => false,
            }
        };
        if !ok {
            self.groups = backup;
            return false;
        }
        // Anyone whose target spot moved walks there.
        let old_targets = self.targets_for(&backup);
        let new_targets = self.targets_for(&self.groups);
        for (id, p) in self.persons.iter_mut() {
            let (a, b) = (old_targets[id], new_targets[id]);
            if (a.0 - b.0).hypot(a.1 - b.1) > 1e-9 {
                p.from = p.pos;
                p.progress = 0;
                p.moving = true;
            }
        }
        true
    }

    fn slot_of_member_before(&self, groups: &[SimGroup], id: PersonId) -> (f64, f64) {
        let t = self.targets_for(groups);
        t[&id]
    }

    fn targets_for(&self, groups: &[SimGroup]) -> BTreeMap<PersonId, (f64, f64)> {
        let r = self.cfg.o_space_radius;
        let mut out = BTreeMap::new();
        for g in groups {
            let m = g.members.len();
            for (k, &id) in g.members.iter().enumerate() {
                let pos = if m == 1 {
                    g.center
                } else {
                    let a = g.phase + 2.0 * PI * k as f64 / m as f64;
                    (g.center.0 + r * a.cos(), g.center.1 + r * a.sin())
                };
                out.insert(id, pos);
            }
        }
        out
    }

    fn drift(&mut self) {
        if self.cfg.drift_std == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, self.cfg.drift_std).expect("finite std");
        let (lo, hi) = (self.cfg.margin(), self.cfg.arena_size - self.cfg.margin());
        let sep = self.cfg.separation();
        for g in 0..self.groups.len() {
            let c = self.groups[g].center;
            let next = (
                (c.0 + normal.sample(&mut self.rng)).clamp(lo, hi),
                (c.1 + normal.sample(&mut self.rng)).clamp(lo, hi),
            );
            let clear = self
                .groups
                .iter()
                .enumerate()
                .all(|(k, o)| k == g || (o.center.0 - next.0).hypot(o.center.1 - next.1) >= sep);
            if clear {
                self.groups[g].center = next;
            }
            self.groups[g].phase += 0.1 * normal.sample(&mut self.rng);
        }
    }

    fn step(&mut self, t: usize) {
        let p_event = self.cfg.event_rate / 100.0;
        let idle = self.pending.is_none() && self.persons.values().all(|p| !p.moving);
        if idle && p_event > 0.0 && self.rng.random_range(0.0..1.0) < p_event && self.try_event() {
            self.pending = Some((t + self.cfg.transition_steps.div_ceil(2), self.partition()));
        }
        self.drift();

        let targets = self.targets_for(&self.groups);
        let centers: BTreeMap<PersonId, ((f64, f64), usize)> = self
            .groups
            .iter()
            .flat_map(|g| g.members.iter().map(move |&id| (id, (g.center, g.members.len()))))
            .collect();
        let steps = self.cfg.transition_steps;
        let wander = Normal::new(0.0, 0.1).expect("finite std");
        for (id, p) in self.persons.iter_mut() {
            let target = targets[id];
            let (center, size) = centers[id];
            if p.moving {
                p.progress += 1;
                let f = p.progress as f64 / steps as f64;
                let next = (
                    p.from.0 + f * (target.0 - p.from.0),
                    p.from.1 + f * (target.1 - p.from.1),
                );
                let (dx, dy) = (next.0 - p.pos.0, next.1 - p.pos.1);
                if dx.hypot(dy) > 1e-9 {
                    p.heading = dy.atan2(dx);
                }
                p.pos = next;
                if p.progress >= steps {
                    p.moving = false;
                    p.pos = target;
                }
            } else {
                p.pos = target;
                if size >= 2 {
                    p.heading = (center.1 - p.pos.1).atan2(center.0 - p.pos.0);
                } else {
                    p.heading = wrap_angle(p.heading + wander.sample(&mut self.rng));
                }
            }
        }
        if let Some((at, _)) = &self.pending {
            if t >= *at {
                let (_, label) = self.pending.take().expect("checked");
                self.label = label;
                self.remember();
            }
        }
    }

    fn observe(&mut self, t: usize) -> Frame {
        let pos_noise = Normal::new(0.0, self.cfg.position_noise_std).expect("finite std");
        let ang_noise = Normal::new(0.0, self.cfg.orientation_noise_std).expect("finite std");
        let persons = self
            .persons
            .iter()
            .map(|(&id, p)| {
                let body = wrap_angle(p.heading + ang_noise.sample(&mut self.rng));
                let head = wrap_angle(body + ang_noise.sample(&mut self.rng));
                PersonState {
                    id,
                    x: p.pos.0 + pos_noise.sample(&mut self.rng),
                    y: p.pos.1 + pos_noise.sample(&mut self.rng),
                    head,
                    body: Some(body),
                }
            })
            .collect();
        Frame {
            t: t as f64,
            persons,
            groups: Some(self.label.clone()),
        }
    }
}

pub fn generate_scene(cfg: &SynthConfig, scene: usize) -> Result<SceneSequence> {
    let mut sim = SceneSim::new(cfg, scene)?;
    let mut frames = Vec::with_capacity(cfg.steps_per_scene);
    for t in 0..cfg.steps_per_scene {
        if t > 0 {
            sim.step(t);
        }
        frames.push(sim.observe(t));
    }
    Ok(SceneSequence {
        scene_id: format!("synth-{scene:04}"),
        units: "m".into(),
        n: cfg.n_people,
        frames,
    })
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<SceneSequence>> {
    cfg.validate()?;
    (0..cfg.n_scenes).map(|k| generate_scene(cfg, k)).collect()
}

/// Keeps every `factor`-th frame of each sequence.
pub fn subsample(seqs: &[SceneSequence], factor: usize) -> Vec<SceneSequence> {
    let factor = factor.max(1);
    seqs.iter()
        .map(|s| SceneSequence {
            frames: s.frames.iter().step_by(factor).cloned().collect(),
            ..s.clone()
        })
        .collect()
}

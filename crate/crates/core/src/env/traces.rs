//! Trace datasets: CSV interchange, uniform replay, a binary-engagement
//! generator standing in for proprietary data, and arm rotation for the
//! non-stationary variant.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};

use super::{ArmId, DelaySchedule, Environment};
use crate::error::{Error, Result};
use crate::gaussian::RewardSpec;
use crate::io;
use crate::rng::SimRng;

/// All traces of one arm, stored row-major with stride `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceArm {
    pub arm_id: String,
    pub z: String,
    traces: Vec<f64>,
    contexts: Vec<f64>,
    j: usize,
    k: usize,
}

impl TraceArm {
    pub fn count(&self) -> usize {
        self.traces.len() / self.j
    }

    pub fn trace(&self, i: usize) -> &[f64] {
        &self.traces[i * self.j..(i + 1) * self.j]
    }

    /// Context vector of trace `i` (empty when the dataset has no contexts).
    pub fn context(&self, i: usize) -> &[f64] {
        &self.contexts[i * self.k..(i + 1) * self.k]
    }

    pub fn traces(&self) -> impl Iterator<Item = &[f64]> {
        self.traces.chunks_exact(self.j)
    }

    /// Per-coordinate mean `Ȳ` over this arm's traces.
    pub fn mean_outcome(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.j];
        for t in self.traces() {
            for (a, y) in m.iter_mut().zip(t) {
                *a += y;
            }
        }
        let n = self.count() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

/// Replay pool keyed by arm. Arms keep first-appearance order.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceDataset {
    j: usize,
    k: usize,
    arms: Vec<TraceArm>,
    index: HashMap<String, usize>,
}

impl TraceDataset {
    pub fn new(j: usize) -> Self {
        Self::with_contexts(j, 0)
    }

    pub fn with_contexts(j: usize, k: usize) -> Self {
        Self {
            j,
            k,
            arms: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn num_outcomes(&self) -> usize {
        self.j
    }

    pub fn context_dim(&self) -> usize {
        self.k
    }

    pub fn arms(&self) -> &[TraceArm] {
        &self.arms
    }

    pub fn arm(&self, arm_id: &str) -> Result<&TraceArm> {
        self.index
            .get(arm_id)
            .map(|&i| &self.arms[i])
            .ok_or_else(|| Error::UnknownArm(arm_id.to_string()))
    }

    pub fn position(&self, arm_id: &str) -> Option<usize> {
        self.index.get(arm_id).copied()
    }

    pub fn classes(&self) -> BTreeSet<String> {
        self.arms.iter().map(|a| a.z.clone()).collect()
    }

    pub fn arms_in_class<'a>(&'a self, z: &'a str) -> impl Iterator<Item = &'a TraceArm> + 'a {
        self.arms.iter().filter(move |a| a.z == z)
    }

    pub fn num_traces(&self) -> usize {
        self.arms.iter().map(TraceArm::count).sum()
    }

    /// Appends one trace. An arm keeps the class of its first trace.
    pub fn push(&mut self, arm_id: &str, z: &str, y: &[f64], x: &[f64]) -> Result<()> {
        if y.len() != self.j {
            return Err(Error::dim("trace outcomes", self.j, y.len()));
        }
        if x.len() != self.k {
            return Err(Error::dim("trace context", self.k, x.len()));
        }
        let pos = match self.index.get(arm_id) {
            Some(&p) => {
                if self.arms[p].z != z {
                    return Err(Error::param(
                        "z",
                        format!("arm {arm_id} appears with classes {:?} and {z:?}", self.arms[p].z),
                    ));
                }
                p
            }
            None => {
                self.arms.push(TraceArm {
                    arm_id: arm_id.to_string(),
                    z: z.to_string(),
                    traces: Vec::new(),
                    contexts: Vec::new(),
                    j: self.j,
                    k: self.k,
                });
                self.index.insert(arm_id.to_string(), self.arms.len() - 1);
                self.arms.len() - 1
            }
        };
        self.arms[pos].traces.extend_from_slice(y);
        self.arms[pos].contexts.extend_from_slice(x);
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let name = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, &name)
    }

    /// Parses `arm_id,z,y1..yJ[,x1..xk]`. `source` names the input in errors.
    pub fn from_reader<R: Read>(input: R, source: &str) -> Result<Self> {
        let perr = |line: usize, detail: String| Error::Parse {
            path: source.to_string(),
            line,
            detail,
        };
        let mut rdr = io::reader(input);
        let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.first() != Some(&"arm_id") {
            return Err(perr(1, "header must start with column `arm_id`".into()));
        }
        if cols.get(1) != Some(&"z") {
            return Err(perr(1, "second header column must be `z`".into()));
        }
        let mut j = 0;
        while cols.get(2 + j) == Some(&format!("y{}", j + 1).as_str()) {
            j += 1;
        }
        if j == 0 {
            return Err(perr(1, "header has no outcome columns y1..yJ".into()));
        }
        let mut k = 0;
        while cols.get(2 + j + k) == Some(&format!("x{}", k + 1).as_str()) {
            k += 1;
        }
        if cols.len() != 2 + j + k {
            return Err(perr(
                1,
                format!("unexpected column {:?} after y1..y{j}", cols[2 + j + k]),
            ));
        }
        let mut ds = Self::with_contexts(j, k);
        let mut y = vec![0.0; j];
        let mut x = vec![0.0; k];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                perr(line, e.to_string())
            })?;
            let line = io::line_of(&rec);
            if rec.len() != cols.len() {
                return Err(perr(line, format!("expected {} fields, found {}", cols.len(), rec.len())));
            }
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| perr(line, format!("column {} is not a finite number: {:?}", cols[i], &rec[i])))
            };
            for (c, slot) in y.iter_mut().enumerate() {
                *slot = parse(2 + c)?;
            }
            for (c, slot) in x.iter_mut().enumerate() {
                *slot = parse(2 + j + c)?;
            }
            if rec[0].is_empty() {
                return Err(perr(line, "empty arm_id".into()));
            }
            ds.push(&rec[0], &rec[1], &y, &x).map_err(|e| perr(line, e.to_string()))?;
        }
        if ds.arms.is_empty() {
            return Err(perr(1, "dataset has no traces".into()));
        }
        Ok(ds)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let w = io::create(path)?;
        self.write_into(w)
    }

    pub fn to_writer<W: Write>(&self, sink: W) -> Result<()> {
        self.write_into(io::writer(sink))
    }

    fn write_into<W: Write>(&self, mut w: csv::Writer<W>) -> Result<()> {
        let mut header = vec!["arm_id".to_string(), "z".to_string()];
        header.extend((1..=self.j).map(|i| format!("y{i}")));
        header.extend((1..=self.k).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for arm in &self.arms {
            for i in 0..arm.count() {
                row.clear();
                row.push(arm.arm_id.clone());
                row.push(arm.z.clone());
                row.extend(arm.trace(i).iter().map(|&v| io::fmt_f64(v)));
                row.extend(arm.context(i).iter().map(|&v| io::fmt_f64(v)));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Uniform draw with replacement from an arm's pool. Consumes exactly one
/// uniform so that coupled streams stay aligned across arms.
pub fn replay_sample<'a>(dataset: &'a TraceDataset, arm_id: &str, rng: &mut SimRng) -> Result<&'a [f64]> {
    let arm = dataset.arm(arm_id)?;
    Ok(arm.trace(uniform_index(arm.count(), rng)))
}

fn uniform_index(n: usize, rng: &mut SimRng) -> usize {
    let u: f64 = rng.random();
    ((u * n as f64) as usize).min(n - 1)
}

/// Per-arm engagement dynamics. Day 1 is always engaged; day 2 is engaged with
/// probability `novelty`; from day 3 on, an engaged user stays engaged with
/// probability `stay` and an idle user returns with probability `ret`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmEngagement {
    pub novelty: f64,
    pub stay: f64,
    pub ret: f64,
}

impl ArmEngagement {
    /// Single-parameter arm: every transition uses `retention`.
    pub fn with_retention(retention: f64) -> Self {
        Self {
            novelty: retention,
            stay: retention,
            ret: retention,
        }
    }

    /// Long-run behaviour from stickiness `kappa`; day-2 novelty is separate.
    pub fn from_stickiness(kappa: f64, novelty: f64) -> Self {
        let ret = kappa / (1.0 + kappa);
        Self {
            novelty,
            stay: (0.3 + 1.2 * ret).min(0.95),
            ret,
        }
    }

    /// Consumes `J - 1` uniforms.
    pub fn sample_trace(&self, rng: &mut SimRng, out: &mut [f64]) {
        let mut engaged = true;
        for (day, slot) in out.iter_mut().enumerate() {
            if day > 0 {
                let u: f64 = rng.random();
                let p = match (day, engaged) {
                    (1, _) => self.novelty,
                    (_, true) => self.stay,
                    (_, false) => self.ret,
                };
                engaged = u < p;
            }
            *slot = if engaged { 1.0 } else { 0.0 };
        }
    }
}

/// Fixture parameters for the stand-in binary dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryTraceParams {
    pub num_arms: usize,
    pub traces_per_arm: usize,
    pub j: usize,
    pub num_classes: usize,
    pub log_stickiness_mean: f64,
    pub log_stickiness_sd: f64,
    /// Spread of class means on the log-stickiness scale.
    pub class_spread: f64,
    pub novelty_range: (f64, f64),
}

impl Default for BinaryTraceParams {
    fn default() -> Self {
        Self {
            num_arms: 200,
            traces_per_arm: 300,
            j: 60,
            num_classes: 1,
            log_stickiness_mean: 0.15f64.ln(),
            log_stickiness_sd: 0.9,
            class_spread: 0.5,
            novelty_range: (0.2, 0.8),
        }
    }
}

impl BinaryTraceParams {
    pub fn validate(&self) -> Result<()> {
        if self.j == 0 {
            return Err(Error::param("j", "must be at least 1"));
        }
        if self.num_arms == 0 {
            return Err(Error::param("num_arms", "must be at least 1"));
        }
        if self.traces_per_arm == 0 {
            return Err(Error::param("traces_per_arm", "must be at least 1"));
        }
        if self.num_classes == 0 {
            return Err(Error::param("num_classes", "must be at least 1"));
        }
        let (lo, hi) = self.novelty_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::param("novelty_range", "must satisfy 0 <= lo <= hi <= 1"));
        }
        if !(self.log_stickiness_sd >= 0.0) {
            return Err(Error::param("log_stickiness_sd", "must be non-negative"));
        }
        Ok(())
    }

    /// Draws the engagement parameters of every arm, in arm order.
    pub fn draw_arms(&self, rng: &mut SimRng) -> Result<Vec<(String, ArmEngagement)>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.num_arms);
        for a in 0..self.num_arms {
            let class = a % self.num_classes;
            let centre = if self.num_classes > 1 {
                self.class_spread * (class as f64 / (self.num_classes - 1) as f64 - 0.5)
            } else {
                0.0
            };
            let ln = LogNormal::new(self.log_stickiness_mean + centre, self.log_stickiness_sd)
                .map_err(|e| Error::param("log_stickiness_sd", e.to_string()))?;
            let kappa = ln.sample(rng);
            let (lo, hi) = self.novelty_range;
            let novelty = lo + (hi - lo) * rng.random::<f64>();
            out.push((format!("c{class}"), ArmEngagement::from_stickiness(kappa, novelty)));
        }
        Ok(out)
    }
}

/// Binary engagement traces with `Y¹ = 1` and reward `Σ Y`.
pub fn gen_binary_traces(params: &BinaryTraceParams, rng: &mut SimRng) -> Result<TraceDataset> {
    let arms = params.draw_arms(rng)?;
    let width = (params.num_arms.max(2) - 1).to_string().len().max(3);
    let mut ds = TraceDataset::new(params.j);
    let mut y = vec![0.0; params.j];
    for (a, (z, eng)) in arms.iter().enumerate() {
        let id = format!("show_{a:0width$}");
        for _ in 0..params.traces_per_arm {
            eng.sample_trace(rng, &mut y);
            ds.push(&id, z, &y, &[])?;
        }
    }
    Ok(ds)
}

/// Drops the arm introduced earliest (lowest id on ties) and introduces the
/// next reservoir arm at batch `t + 1`.
pub fn rotate_actions(
    active: &mut Vec<(ArmId, usize)>,
    reservoir: &mut VecDeque<ArmId>,
    t: usize,
) -> Result<(ArmId, ArmId)> {
    let added = reservoir.pop_front().ok_or(Error::ReservoirExhausted { t })?;
    let oldest = active
        .iter()
        .enumerate()
        .min_by_key(|(_, &(arm, intro))| (intro, arm))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::param("active", "active set is empty"))?;
    let (removed, _) = active.remove(oldest);
    active.push((added, t + 1));
    Ok((removed, added))
}

/// Replays traces of a dataset. Arm ids are dataset positions.
#[derive(Clone, Debug)]
pub struct ReplayEnv {
    dataset: Arc<TraceDataset>,
    means: Vec<f64>,
    active: Vec<ArmId>,
    rolling: Option<(Vec<(ArmId, usize)>, VecDeque<ArmId>)>,
    reward: RewardSpec,
    delays: DelaySchedule,
}

impl ReplayEnv {
    /// All arms active, reward `Σ Y`, one outcome revealed per batch.
    pub fn new(dataset: Arc<TraceDataset>) -> Result<Self> {
        let j = dataset.num_outcomes();
        if dataset.arms().is_empty() {
            return Err(Error::param("dataset", "no arms"));
        }
        let reward = RewardSpec::sum(j, 1.0);
        let means = dataset
            .arms()
            .iter()
            .map(|a| a.traces().map(|t| reward.value(t)).sum::<f64>() / a.count() as f64)
            .collect();
        Ok(Self {
            active: (0..dataset.arms().len()).collect(),
            means,
            rolling: None,
            reward,
            delays: DelaySchedule::progressive(j),
            dataset,
        })
    }

    /// Non-stationary variant: the first `active_count` arms of `order` start
    /// active and the rest form the reservoir.
    pub fn rolling(dataset: Arc<TraceDataset>, order: Vec<ArmId>, active_count: usize) -> Result<Self> {
        let mut env = Self::new(dataset)?;
        let n = env.dataset.arms().len();
        if active_count == 0 || active_count > order.len() {
            return Err(Error::param("active", format!("{active_count} active arms from an order of {}", order.len())));
        }
        if order.iter().any(|&a| a >= n) {
            return Err(Error::param("order", "arm id out of range"));
        }
        let active: Vec<(ArmId, usize)> = order[..active_count].iter().map(|&a| (a, 0)).collect();
        let reservoir: VecDeque<ArmId> = order[active_count..].iter().copied().collect();
        env.set_active(&active);
        env.rolling = Some((active, reservoir));
        Ok(env)
    }

    fn set_active(&mut self, active: &[(ArmId, usize)]) {
        self.active = active.iter().map(|&(a, _)| a).collect();
        self.active.sort_unstable();
    }

    pub fn dataset(&self) -> &TraceDataset {
        &self.dataset
    }
}

impl Environment for ReplayEnv {
    fn num_outcomes(&self) -> usize {
        self.dataset.num_outcomes()
    }
    fn reward(&self) -> &RewardSpec {
        &self.reward
    }
    fn delays(&self) -> &DelaySchedule {
        &self.delays
    }
    fn active_arms(&self) -> &[ArmId] {
        &self.active
    }
    fn mean_reward(&self, arm: ArmId) -> f64 {
        self.means[arm]
    }
    fn class_of(&self, arm: ArmId) -> Option<&str> {
        Some(&self.dataset.arms()[arm].z)
    }
    fn draw(&self, arm: ArmId, rng: &mut SimRng, out: &mut [f64]) {
        let a = &self.dataset.arms()[arm];
        out.copy_from_slice(a.trace(uniform_index(a.count(), rng)));
    }
    fn rotate(&mut self, t: usize) -> Result<Option<(ArmId, ArmId)>> {
        let Some((mut active, mut reservoir)) = self.rolling.take() else {
            return Ok(None);
        };
        let out = rotate_actions(&mut active, &mut reservoir, t);
        self.set_active(&active);
        self.rolling = Some((active, reservoir));
        out.map(Some)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny() -> TraceDataset {
        let mut ds = TraceDataset::new(2);
        ds.push("a", "x", &[1.0, 0.0], &[]).unwrap();
        ds.push("b", "x", &[1.0, 1.0], &[]).unwrap();
        ds.push("b", "x", &[1.0, 0.0], &[]).unwrap();
        ds
    }

    #[test]
    fn replay_examples() {
        let ds = tiny();
        let mut rng = seeded(1);
        for _ in 0..10 {
            assert_eq!(replay_sample(&ds, "a", &mut rng).unwrap(), &[1.0, 0.0]);
        }
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| replay_sample(&ds, "b", &mut rng).unwrap()[1] == 1.0)
            .count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!(matches!(replay_sample(&ds, "zzz", &mut rng), Err(Error::UnknownArm(_))));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut ds = TraceDataset::with_contexts(2, 1);
        ds.push("a", "x", &[1.0, 0.5], &[0.25]).unwrap();
        ds.push("b", "y", &[1.0, 2.0], &[-1.0]).unwrap();
        let mut buf = Vec::new();
        ds.to_writer(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("arm_id,z,y1,y2,x1\n"));
        assert_eq!(TraceDataset::from_reader(&buf[..], "mem").unwrap(), ds);

        let bad = "id,z,y1\na,x,1\n";
        assert!(matches!(TraceDataset::from_reader(bad.as_bytes(), "mem"), Err(Error::Parse { line: 1, .. })));
        let bad = "arm_id,z,y1,y2\na,x,1,0\nb,x,1,oops\n";
        match TraceDataset::from_reader(bad.as_bytes(), "mem") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn generator_contract() {
        let p = BinaryTraceParams {
            num_arms: 20,
            traces_per_arm: 50,
            j: 60,
            num_classes: 2,
            ..Default::default()
        };
        let ds = gen_binary_traces(&p, &mut seeded(3)).unwrap();
        assert_eq!(ds.arms().len(), 20);
        assert_eq!(ds.classes().len(), 2);
        for arm in ds.arms() {
            for t in arm.traces() {
                assert_eq!(t[0], 1.0);
                assert!(t.iter().all(|&v| v == 0.0 || v == 1.0));
                let r: f64 = t.iter().sum();
                assert!((1.0..=60.0).contains(&r));
            }
        }
        let again = gen_binary_traces(&p, &mut seeded(3)).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn retention_orders_rewards() {
        let mut rng = seeded(4);
        let mut y = vec![0.0; 60];
        let mut mean = |e: ArmEngagement| {
            (0..10_000)
                .map(|_| {
                    e.sample_trace(&mut rng, &mut y);
                    y.iter().sum::<f64>()
                })
                .sum::<f64>()
                / 10_000.0
        };
        let low = mean(ArmEngagement::with_retention(0.05));
        let high = mean(ArmEngagement::with_retention(0.9));
        assert!(low < high, "{low} vs {high}");
    }

    #[test]
    fn rotation_examples() {
        let mut active = vec![(0, 0), (1, 0), (2, 0)];
        let mut reservoir: VecDeque<ArmId> = VecDeque::from(vec![7]);
        let (removed, added) = rotate_actions(&mut active, &mut reservoir, 1).unwrap();
        assert_eq!((removed, added), (0, 7));
        assert_eq!(active.len(), 3);
        assert!(active.iter().any(|&(a, _)| a == 7));
        assert!(matches!(
            rotate_actions(&mut active, &mut reservoir, 2),
            Err(Error::ReservoirExhausted { t: 2 })
        ));
        assert_eq!(active.len(), 3);
    }

    #[test]
    fn rolling_env_keeps_size() {
        let p = BinaryTraceParams {
            num_arms: 10,
            traces_per_arm: 3,
            j: 4,
            ..Default::default()
        };
        let ds = Arc::new(gen_binary_traces(&p, &mut seeded(5)).unwrap());
        let mut env = ReplayEnv::rolling(ds, (0..10).rev().collect(), 4).unwrap();
        assert_eq!(env.active_arms(), &[6, 7, 8, 9]);
        for t in 1..=6 {
            let (removed, added) = env.rotate(t).unwrap().unwrap();
            assert_eq!(env.active_arms().len(), 4);
            assert!(!env.active_arms().contains(&removed));
            assert!(env.active_arms().contains(&added));
        }
        assert!(env.rotate(7).is_err());
    }
}

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;

use super::{Transition, TransitionBatch};
use crate::{Error, Result, SeededRng};

/// Bounded FIFO store of transitions.
///
/// Storage is a ring: once `capacity` transitions have been added, each new
/// one overwrites the oldest slot. Physical slot indices `0..len()` are what
/// iterators and samplers index into.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_dim: usize,
    obs: Vec<f64>,
    action: Vec<f64>,
    next_obs: Vec<f64>,
    reward: Vec<f64>,
    done: Vec<bool>,
    size: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 || action_dim == 0 {
            return Err(Error::invalid(format!(
                "replay buffer needs positive capacity and dims (got capacity {capacity}, S {obs_dim}, A {action_dim})"
            )));
        }
        Ok(Self {
            capacity,
            obs_dim,
            action_dim,
            obs: vec![0.0; capacity * obs_dim],
            action: vec![0.0; capacity * action_dim],
            next_obs: vec![0.0; capacity * obs_dim],
            reward: vec![0.0; capacity],
            done: vec![false; capacity],
            size: 0,
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn add(&mut self, t: &Transition) -> Result<()> {
        t.validate()?;
        if t.obs.len() != self.obs_dim || t.action.len() != self.action_dim {
            return Err(Error::InvalidTransition(format!(
                "expected S={} A={}, got S={} A={}",
                self.obs_dim,
                self.action_dim,
                t.obs.len(),
                t.action.len()
            )));
        }
        let i = self.cursor;
        let (s, a) = (self.obs_dim, self.action_dim);
        self.obs[i * s..(i + 1) * s].copy_from_slice(&t.obs);
        self.action[i * a..(i + 1) * a].copy_from_slice(&t.action);
        self.next_obs[i * s..(i + 1) * s].copy_from_slice(&t.next_obs);
        self.reward[i] = t.reward;
        self.done[i] = t.done;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.size = (self.size + 1).min(self.capacity);
        Ok(())
    }

    /// Transition stored in physical slot `i`.
    pub fn get(&self, i: usize) -> Transition {
        assert!(i < self.size, "slot {i} out of range (size {})", self.size);
        let (s, a) = (self.obs_dim, self.action_dim);
        Transition {
            obs: self.obs[i * s..(i + 1) * s].to_vec(),
            action: self.action[i * a..(i + 1) * a].to_vec(),
            next_obs: self.next_obs[i * s..(i + 1) * s].to_vec(),
            reward: self.reward[i],
            done: self.done[i],
        }
    }

    /// Physical slot indices from oldest to newest.
    pub fn ordered_slots(&self) -> Vec<usize> {
        if self.size < self.capacity {
            (0..self.size).collect()
        } else {
            (self.cursor..self.capacity).chain(0..self.cursor).collect()
        }
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_ordered(&self) -> impl Iterator<Item = Transition> + '_ {
        self.ordered_slots().into_iter().map(|i| self.get(i))
    }

    pub fn batch(&self, slots: &[usize]) -> TransitionBatch {
        let n = slots.len();
        let (s, a) = (self.obs_dim, self.action_dim);
        let mut obs = Array2::zeros((n, s));
        let mut action = Array2::zeros((n, a));
        let mut next_obs = Array2::zeros((n, s));
        let mut reward = Array1::zeros(n);
        let mut done = Vec::with_capacity(n);
        for (row, &i) in slots.iter().enumerate() {
            assert!(i < self.size, "slot {i} out of range (size {})", self.size);
            for d in 0..s {
                obs[[row, d]] = self.obs[i * s + d];
                next_obs[[row, d]] = self.next_obs[i * s + d];
            }
            for d in 0..a {
                action[[row, d]] = self.action[i * a + d];
            }
            reward[row] = self.reward[i];
            done.push(self.done[i]);
        }
        TransitionBatch {
            obs,
            action,
            next_obs,
            reward,
            done,
        }
    }

    /// Every stored transition, in physical slot order.
    pub fn all(&self) -> TransitionBatch {
        self.batch(&(0..self.size).collect::<Vec<_>>())
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch_size: usize, rng: &mut SeededRng) -> Result<TransitionBatch> {
        if self.is_empty() {
            return Err(Error::Empty("cannot sample from an empty replay buffer".into()));
        }
        let slots: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..self.size)).collect();
        Ok(self.batch(&slots))
    }

    /// Writes the header `S A size capacity` and one row per transition
    /// (oldest first): `obs… action… next_obs… reward done`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {} {}", self.obs_dim, self.action_dim, self.size, self.capacity)?;
        for t in self.iter_ordered() {
            let mut fields: Vec<String> = Vec::with_capacity(2 * self.obs_dim + self.action_dim + 2);
            fields.extend(t.obs.iter().map(f64::to_string));
            fields.extend(t.action.iter().map(f64::to_string));
            fields.extend(t.next_obs.iter().map(f64::to_string));
            fields.push(t.reward.to_string());
            fields.push(if t.done { "1" } else { "0" }.to_string());
            writeln!(w, "{}", fields.join(" "))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse("buffer file is empty"))??;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|f| f.parse::<usize>().map_err(|e| Error::parse(format!("bad header field `{f}`: {e}"))))
            .collect::<Result<_>>()?;
        let [s, a, size, capacity] = head[..] else {
            return Err(Error::parse(format!("header needs `S A size capacity`, got `{header}`")));
        };
        if size > capacity {
            return Err(Error::parse(format!("size {size} exceeds capacity {capacity}")));
        }
        let mut buf = ReplayBuffer::new(capacity, s, a)?;
        let width = 2 * s + a + 2;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != width {
                return Err(Error::parse(format!(
                    "row {} has {} fields, expected {width} for S={s} A={a}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num = |f: &str| f.parse::<f64>().map_err(|e| Error::parse(format!("row {}: `{f}`: {e}", lineno + 1)));
            let vals: Vec<f64> = fields[..width - 1].iter().map(|f| num(f)).collect::<Result<_>>()?;
            let done = match fields[width - 1] {
                "0" => false,
                "1" => true,
                other => return Err(Error::parse(format!("row {}: done flag `{other}`", lineno + 1))),
            };
            buf.add(&Transition {
                obs: vals[..s].to_vec(),
                action: vals[s..s + a].to_vec(),
                next_obs: vals[s + a..2 * s + a].to_vec(),
                reward: vals[2 * s + a],
                done,
            })?;
        }
        if buf.len() != size {
            return Err(Error::parse(format!("header declares {size} rows, file has {}", buf.len())));
        }
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

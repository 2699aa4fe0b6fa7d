//! Seeded workload generators: uniform, Zipf, planted heavy hitters, and the spike
//! instances of the lower-bound construction.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::rng_from_seed;
use crate::stream::{FrequencyVector, StreamMeta, StreamMode, StreamOrder, Update};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    Uniform,
    /// Frequencies drawn from a Zipf law with exponent `s` over ranks `1..=n`.
    Zipf { s: f64 },
    /// `k` planted items, each with frequency `strength` times the `L_2` norm of the
    /// remaining, evenly spread mass.
    PlantedHeavy { k: usize, strength: f64 },
    Spike(SpikeParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Order {
    /// Uniformly random permutation of the updates.
    RandomShuffle,
    /// Ascending by item.
    Sorted,
    /// One copy of each remaining item per sweep.
    RoundRobin,
    /// All copies of an item together, items in random order.
    Clustered,
    /// The generator's own order; for spikes this is player by player.
    Natural,
}

impl Order {
    pub fn stream_order(self) -> StreamOrder {
        match self {
            Order::RandomShuffle => StreamOrder::Random,
            _ => StreamOrder::Arbitrary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpikeCase {
    /// No extra mass on the spike coordinate.
    One,
    /// The spike holds a single unit before the extra mass is added.
    Two,
    /// The spike holds `t` units before the extra mass is added.
    Three,
}

impl SpikeCase {
    pub const ALL: [SpikeCase; 3] = [SpikeCase::One, SpikeCase::Two, SpikeCase::Three];

    pub fn index(self) -> usize {
        match self {
            SpikeCase::One => 0,
            SpikeCase::Two => 1,
            SpikeCase::Three => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeParams {
    pub case: SpikeCase,
    pub p: f64,
    pub eps: f64,
    /// Starting value of the constant `C` in `t = ceil((C/eps) n^{1/p})`.
    pub c_const: f64,
    /// Fraction of off-spike coordinates set to one.
    pub density: f64,
    /// Spike coordinate; random when `None`.
    pub j: Option<u64>,
}

impl SpikeParams {
    pub fn new(case: SpikeCase, p: f64, eps: f64) -> Self {
        Self { case, p, eps, c_const: 1.0, density: 0.5, j: None }
    }
}

/// Parameters of one realized spike instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeInstance {
    pub case: SpikeCase,
    pub t: u64,
    /// Multiplier of the extra mass `floor(c t / eps)`: 0 or 1.
    pub c: u64,
    pub j: u64,
    /// Spike value before the extra mass: 1 or `t`.
    pub u_j: u64,
    pub c_const: f64,
    /// Number of off-spike ones.
    pub background: u64,
    /// `F_p` of the instance for each of the three cases with this background.
    pub case_values: [f64; 3],
}

impl SpikeInstance {
    fn values(background: u64, t: u64, eps: f64, p: f64) -> [f64; 3] {
        let extra = (t as f64 / eps).floor();
        let b = background as f64;
        [
            b + (t as f64).powf(p),
            b + (1.0 + extra).powf(p),
            b + (t as f64 + extra).powf(p),
        ]
    }

    /// True when consecutive case values differ by at least a `1 + eps` factor.
    pub fn separated(&self, eps: f64) -> bool {
        let v = self.case_values;
        v[1] >= (1.0 + eps) * v[0] && v[2] >= (1.0 + eps) * v[1]
    }

    /// Decides the case from the extra-mass multiplier and an `F_p` estimate.
    pub fn classify(&self, estimate: f64) -> SpikeCase {
        if self.c == 0 {
            return SpikeCase::One;
        }
        let d2 = (estimate / self.case_values[1]).ln().abs();
        let d3 = (estimate / self.case_values[2]).ln().abs();
        if d2 <= d3 {
            SpikeCase::Two
        } else {
            SpikeCase::Three
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub dist: Distribution,
    pub n: u64,
    /// Total number of updates. Spike instances derive it; pass 0 there.
    pub m: u64,
    pub order: Order,
    /// Fraction of the `m` updates that delete an earlier insertion.
    pub deletions: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(dist: Distribution, n: u64, m: u64, seed: u64) -> Self {
        Self { dist, n, m, order: Order::RandomShuffle, deletions: 0.0, seed }
    }

    pub fn with_order(mut self, order: Order) -> Self {
        self.order = order;
        self
    }

    pub fn with_deletions(mut self, fraction: f64) -> Self {
        self.deletions = fraction;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStream {
    pub meta: StreamMeta,
    pub updates: Vec<Update>,
    pub spike: Option<SpikeInstance>,
}

impl GeneratedStream {
    pub fn frequencies(&self) -> FrequencyVector {
        crate::stream::apply_stream(&self.updates, self.meta.n).expect("generated items are in range")
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedStream> {
    if spec.n == 0 {
        return Err(Error::Generation("n must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.deletions) {
        return Err(Error::Generation("deletion fraction must lie in [0, 1)".into()));
    }
    let mut rng = rng_from_seed(spec.seed);
    let (counts, spike, natural) = match spec.dist {
        Distribution::Spike(sp) => {
            if spec.deletions > 0.0 {
                return Err(Error::Generation("spike instances are insertion-only".into()));
            }
            let (inst, updates) = spike(spec.n, &sp, &mut rng)?;
            if spec.m != 0 && spec.m != updates.len() as u64 {
                return Err(Error::Generation(format!(
                    "spike instance has {} updates, m={} was requested",
                    updates.len(),
                    spec.m
                )));
            }
            let f = crate::stream::apply_stream(&updates, spec.n)?;
            let counts: Vec<u64> = f.counts().iter().map(|&c| c as u64).collect();
            (counts, Some(inst), Some(updates))
        }
        dist => {
            let deletions = (spec.deletions * spec.m as f64).round() as u64;
            if 2 * deletions > spec.m {
                return Err(Error::Generation("more deletions than insertions".into()));
            }
            let inserts = spec.m - deletions;
            let counts = match dist {
                Distribution::Uniform => sample_counts(spec.n, inserts, &mut rng, |rng| rng.gen_range(0..spec.n) as usize),
                Distribution::Zipf { s } => zipf_counts(spec.n, inserts, s, &mut rng)?,
                Distribution::PlantedHeavy { k, strength } => planted_counts(spec.n, inserts, k, strength, &mut rng)?,
                Distribution::Spike(_) => unreachable!(),
            };
            (counts, None, None)
        }
    };

    let deletions = match spec.dist {
        Distribution::Spike(_) => 0,
        _ => (spec.deletions * spec.m as f64).round() as u64,
    };
    let mut updates = match (spec.order, natural) {
        (Order::Natural, Some(u)) => u,
        (order, _) => arrange(&counts, order, &mut rng),
    };
    if deletions > 0 {
        updates = add_deletions(updates, deletions, spec.order, &mut rng);
    }
    let mode = if deletions > 0 { StreamMode::Turnstile } else { StreamMode::InsertionOnly };
    let meta = StreamMeta { n: spec.n, m: updates.len() as u64, mode, order: spec.order.stream_order() };
    if spike.is_none() && meta.m != spec.m {
        return Err(Error::Generation(format!("produced {} updates, expected {}", meta.m, spec.m)));
    }
    Ok(GeneratedStream { meta, updates, spike })
}

fn sample_counts(
    n: u64,
    m: u64,
    rng: &mut ChaCha8Rng,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> usize,
) -> Vec<u64> {
    let mut counts = vec![0u64; n as usize];
    for _ in 0..m {
        counts[draw(rng)] += 1;
    }
    counts
}

fn zipf_counts(n: u64, m: u64, s: f64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    if !(s > 0.0) {
        return Err(Error::Generation("Zipf exponent must be positive".into()));
    }
    let mut cdf = Vec::with_capacity(n as usize);
    let mut acc = 0.0;
    for r in 1..=n {
        acc += (r as f64).powf(-s);
        cdf.push(acc);
    }
    let total = acc;
    let mut perm: Vec<usize> = (0..n as usize).collect();
    perm.shuffle(rng);
    Ok(sample_counts(n, m, rng, |rng| {
        let u = rng.gen::<f64>() * total;
        let rank = cdf.partition_point(|&c| c <= u).min(n as usize - 1);
        perm[rank]
    }))
}

fn planted_counts(n: u64, m: u64, k: usize, strength: f64, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    if k as u64 >= n {
        return Err(Error::Generation("need more items than planted heavies".into()));
    }
    if !(strength > 0.0) {
        return Err(Error::Generation("planted strength must be positive".into()));
    }
    let rest = n - k as u64;
    // Solve m = m_rest + k * strength * L2(rest) for the evenly spread remainder.
    let plan = |m_rest: u64| -> u64 {
        let base = m_rest / rest;
        let extra = m_rest % rest;
        let l2 = ((rest - extra) as f64 * (base * base) as f64 + extra as f64 * ((base + 1) * (base + 1)) as f64).sqrt();
        (strength * l2).round() as u64
    };
    let (mut lo, mut hi) = (0u64, m);
    while lo < hi {
        let mid = lo + (hi - lo + 1) / 2;
        if mid + k as u64 * plan(mid) <= m {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let heavy = plan(lo);
    if heavy == 0 {
        return Err(Error::Generation("planted frequency rounds to zero".into()));
    }
    let mut m_rest = m - k as u64 * heavy;
    let mut items: Vec<usize> = (0..n as usize).collect();
    items.shuffle(rng);
    let mut counts = vec![0u64; n as usize];
    for &i in &items[..k] {
        counts[i] = heavy;
    }
    let light = &items[k..];
    let base = m_rest / rest;
    for &i in light {
        counts[i] = base;
    }
    m_rest -= base * rest;
    for &i in light.choose_multiple(rng, m_rest as usize) {
        counts[i] += 1;
    }
    Ok(counts)
}

fn spike(n: u64, sp: &SpikeParams, rng: &mut ChaCha8Rng) -> Result<(SpikeInstance, Vec<Update>)> {
    if !(sp.eps > 0.0 && sp.eps < 1.0) || !(sp.p > 2.0) {
        return Err(Error::Generation("spike needs eps in (0,1) and p > 2".into()));
    }
    if n < 2 {
        return Err(Error::Generation("spike needs n >= 2".into()));
    }
    let j = match sp.j {
        Some(j) if j >= 1 && j <= n => j,
        Some(j) => return Err(Error::Generation(format!("spike coordinate {j} outside [1, {n}]"))),
        None => rng.gen_range(1..=n),
    };
    let ones: Vec<u64> = (1..=n).filter(|&i| i != j && rng.gen_bool(sp.density.clamp(0.0, 1.0))).collect();
    let background = ones.len() as u64;

    let mut c_const = sp.c_const.max(1e-3);
    let mut found = None;
    for _ in 0..200 {
        let t = ((c_const / sp.eps) * (n as f64).powf(1.0 / sp.p)).ceil() as u64;
        let values = SpikeInstance::values(background, t, sp.eps, sp.p);
        let probe = SpikeInstance {
            case: sp.case,
            t,
            c: 0,
            j,
            u_j: 0,
            c_const,
            background,
            case_values: values,
        };
        if probe.separated(sp.eps) {
            found = Some(probe);
            break;
        }
        c_const *= 1.25;
    }
    let mut inst = found.ok_or_else(|| Error::Generation("no constant separates the three cases".into()))?;
    let t = inst.t;
    let (c, u_j) = match sp.case {
        SpikeCase::One => (0, t),
        SpikeCase::Two => (1, 1),
        SpikeCase::Three => (1, t),
    };
    inst.c = c;
    inst.u_j = u_j;

    // Each off-spike one belongs to one random player; the spike to all or to one.
    let mut players: Vec<Vec<u64>> = vec![Vec::new(); t as usize];
    for &i in &ones {
        players[rng.gen_range(0..t as usize)].push(i);
    }
    if u_j == t {
        for pl in players.iter_mut() {
            pl.push(j);
        }
    } else {
        players[rng.gen_range(0..t as usize)].push(j);
    }
    let mut updates = Vec::new();
    for pl in players.iter_mut() {
        pl.sort_unstable();
        updates.extend(pl.iter().map(|&i| Update::insert(i)));
    }
    let extra = c * (t as f64 / sp.eps).floor() as u64;
    updates.extend((0..extra).map(|_| Update::insert(j)));
    Ok((inst, updates))
}

fn arrange(counts: &[u64], order: Order, rng: &mut ChaCha8Rng) -> Vec<Update> {
    let total: u64 = counts.iter().sum();
    let mut out = Vec::with_capacity(total as usize);
    match order {
        Order::RandomShuffle | Order::Sorted | Order::Natural => {
            for (i, &c) in counts.iter().enumerate() {
                out.extend((0..c).map(|_| Update::insert(i as u64 + 1)));
            }
            if order == Order::RandomShuffle {
                out.shuffle(rng);
            }
        }
        Order::RoundRobin => {
            let mut left: Vec<(u64, u64)> =
                counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i as u64 + 1, c)).collect();
            while !left.is_empty() {
                for e in left.iter_mut() {
                    out.push(Update::insert(e.0));
                    e.1 -= 1;
                }
                left.retain(|e| e.1 > 0);
            }
        }
        Order::Clustered => {
            let mut items: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
            items.shuffle(rng);
            for i in items {
                out.extend((0..counts[i]).map(|_| Update::insert(i as u64 + 1)));
            }
        }
    }
    out
}

/// Appends `deletions` removals of earlier insertions, keeping the final vector
/// nonnegative, then re-applies the requested order.
fn add_deletions(mut updates: Vec<Update>, deletions: u64, order: Order, rng: &mut ChaCha8Rng) -> Vec<Update> {
    let victims: Vec<u64> = updates.choose_multiple(rng, deletions as usize).map(|u| u.item).collect();
    updates.extend(victims.into_iter().map(|i| Update::new(i, -1)));
    match order {
        Order::RandomShuffle => updates.shuffle(rng),
        Order::Sorted => updates.sort_by_key(|u| (u.item, -u.delta)),
        _ => {}
    }
    updates
}

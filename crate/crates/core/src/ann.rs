//! Layered feed-forward networks with discrete weights.
//!
//! A [`Genome`] is both genotype and phenotype: a connection mask over every
//! feasible pair of nodes in neighbouring layers, one weight per present
//! connection and one bias per non-input node. Node IDs are layer-major, so
//! the inputs are `0..layer_sizes[0]` and the outputs are the last IDs.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::modularity::Graph;

pub type NodeId = usize;

/// Network shape and the discrete value sets evolution draws from.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchSpec {
    layer_sizes: Vec<usize>,
    lambda: f64,
    weight_values: Vec<i32>,
    bias_values: Vec<i32>,
    node_offsets: Vec<usize>,
    slot_offsets: Vec<usize>,
    slots: Vec<(NodeId, NodeId)>,
}

impl ArchSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        lambda: f64,
        weight_values: Vec<i32>,
        bias_values: Vec<i32>,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Architecture("need at least an input and an output layer".into()));
        }
        if layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Architecture("layers must be non-empty".into()));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Architecture(format!("lambda must be positive, got {lambda}")));
        }
        if weight_values.is_empty() || bias_values.is_empty() {
            return Err(Error::Architecture("weight and bias value sets must be non-empty".into()));
        }
        if weight_values.contains(&0) {
            return Err(Error::Architecture(
                "weight values must exclude 0; absent connections live in the mask".into(),
            ));
        }
        let mut node_offsets = Vec::with_capacity(layer_sizes.len() + 1);
        let mut acc = 0;
        for &n in &layer_sizes {
            node_offsets.push(acc);
            acc += n;
        }
        node_offsets.push(acc);

        let mut slots = Vec::new();
        let mut slot_offsets = Vec::with_capacity(layer_sizes.len());
        for k in 0..layer_sizes.len() - 1 {
            slot_offsets.push(slots.len());
            for s in 0..layer_sizes[k] {
                for t in 0..layer_sizes[k + 1] {
                    slots.push((node_offsets[k] + s, node_offsets[k + 1] + t));
                }
            }
        }
        slot_offsets.push(slots.len());

        Ok(ArchSpec {
            layer_sizes,
            lambda,
            weight_values,
            bias_values,
            node_offsets,
            slot_offsets,
            slots,
        })
    }

    /// The 8/8/4/2/1 retina network with lambda 20.
    pub fn retina() -> Self {
        ArchSpec::new(vec![8, 8, 4, 2, 1], 20.0, vec![-2, -1, 1, 2], vec![-2, -1, 0, 1, 2])
            .expect("retina architecture is valid")
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weight_values(&self) -> &[i32] {
        &self.weight_values
    }

    pub fn bias_values(&self) -> &[i32] {
        &self.bias_values
    }

    pub fn node_count(&self) -> usize {
        *self.node_offsets.last().unwrap()
    }

    pub fn input_count(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn input_ids(&self) -> Vec<NodeId> {
        (0..self.input_count()).collect()
    }

    pub fn output_ids(&self) -> Vec<NodeId> {
        let n = self.node_count();
        (n - self.output_count()..n).collect()
    }

    pub fn layer_range(&self, layer: usize) -> std::ops::Range<NodeId> {
        self.node_offsets[layer]..self.node_offsets[layer + 1]
    }

    pub fn layer_of(&self, node: NodeId) -> usize {
        debug_assert!(node < self.node_count());
        self.node_offsets.partition_point(|&o| o <= node) - 1
    }

    /// Every (source, target) pair a connection may occupy, layer-major.
    pub fn slots(&self) -> &[(NodeId, NodeId)] {
        &self.slots
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Slot index of the connection `source -> target`, if it is feasible.
    pub fn slot_of(&self, source: NodeId, target: NodeId) -> Option<usize> {
        if source >= self.node_count() || target >= self.node_count() {
            return None;
        }
        let k = self.layer_of(source);
        if k + 1 >= self.layer_sizes.len() || self.layer_of(target) != k + 1 {
            return None;
        }
        let s = source - self.node_offsets[k];
        let t = target - self.node_offsets[k + 1];
        Some(self.slot_offsets[k] + s * self.layer_sizes[k + 1] + t)
    }

    /// Human-readable neuron name: `i1..`, `h<layer>_<k>` (both 1-based), `o1..`.
    pub fn neuron_name(&self, node: NodeId) -> String {
        let layer = self.layer_of(node);
        let local = node - self.node_offsets[layer] + 1;
        if layer == 0 {
            format!("i{local}")
        } else if layer == self.layer_sizes.len() - 1 {
            format!("o{local}")
        } else {
            format!("h{layer}_{local}")
        }
    }

    pub fn neuron_by_name(&self, name: &str) -> Result<NodeId> {
        let unknown = || Error::UnknownNeuron(name.to_string());
        let parse_1based = |s: &str| s.parse::<usize>().ok().filter(|&k| k >= 1).ok_or_else(unknown);
        let last = self.layer_sizes.len() - 1;
        let (layer, local) = if let Some(rest) = name.strip_prefix('i') {
            (0, parse_1based(rest)?)
        } else if let Some(rest) = name.strip_prefix('o') {
            (last, parse_1based(rest)?)
        } else if let Some(rest) = name.strip_prefix('h') {
            let (l, k) = rest.split_once('_').ok_or_else(unknown)?;
            let l = parse_1based(l)?;
            if l >= last {
                return Err(unknown());
            }
            (l, parse_1based(k)?)
        } else {
            return Err(unknown());
        };
        if local > self.layer_sizes[layer] {
            return Err(unknown());
        }
        Ok(self.node_offsets[layer] + local - 1)
    }

    /// True when every pre-activation is an integer and `tanh(lambda * s)`
    /// rounds to exactly `sign(s)` in f64, so evaluation is exactly ternary.
    fn is_exactly_ternary(&self) -> bool {
        self.lambda.tanh() == 1.0
    }
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec::retina()
    }
}

#[derive(Clone, Debug)]
pub struct Genome {
    arch: Arc<ArchSpec>,
    /// Weight per feasible slot; `None` means no connection.
    weights: Vec<Option<i32>>,
    /// Bias per non-input node, indexed by `node - input_count`.
    biases: Vec<i32>,
}

impl PartialEq for Genome {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.arch, &other.arch) || *self.arch == *other.arch)
            && self.weights == other.weights
            && self.biases == other.biases
    }
}

impl Genome {
    /// Genome without connections and every bias set to `bias`.
    pub fn empty(arch: Arc<ArchSpec>, bias: i32) -> Result<Self> {
        if !arch.bias_values.contains(&bias) {
            return Err(Error::Architecture(format!("bias {bias} not in the allowed set")));
        }
        let weights = vec![None; arch.slot_count()];
        let biases = vec![bias; arch.node_count() - arch.input_count()];
        Ok(Genome { arch, weights, biases })
    }

    pub fn from_parts(
        arch: Arc<ArchSpec>,
        connections: &[(NodeId, NodeId, i32)],
        biases: Vec<i32>,
    ) -> Result<Self> {
        if biases.len() != arch.node_count() - arch.input_count() {
            return Err(Error::Dimension {
                expected: arch.node_count() - arch.input_count(),
                actual: biases.len(),
            });
        }
        if let Some(b) = biases.iter().find(|b| !arch.bias_values.contains(b)) {
            return Err(Error::Architecture(format!("bias {b} not in the allowed set")));
        }
        let mut weights = vec![None; arch.slot_count()];
        for &(s, t, w) in connections {
            let slot = arch.slot_of(s, t).ok_or_else(|| {
                Error::Architecture(format!("no feasible connection {s} -> {t}"))
            })?;
            if !arch.weight_values.contains(&w) {
                return Err(Error::Architecture(format!("weight {w} not in the allowed set")));
            }
            if weights[slot].replace(w).is_some() {
                return Err(Error::Architecture(format!("duplicate connection {s} -> {t}")));
            }
        }
        Ok(Genome { arch, weights, biases })
    }

    pub fn arch(&self) -> &Arc<ArchSpec> {
        &self.arch
    }

    pub fn connection_count(&self) -> usize {
        self.weights.iter().filter(|w| w.is_some()).count()
    }

    /// Present connections as `(source, target, weight)`, in slot order.
    pub fn connections(&self) -> impl Iterator<Item = (NodeId, NodeId, i32)> + '_ {
        self.weights
            .iter()
            .zip(self.arch.slots())
            .filter_map(|(w, &(s, t))| w.map(|w| (s, t, w)))
    }

    pub fn weight(&self, source: NodeId, target: NodeId) -> Option<i32> {
        self.arch.slot_of(source, target).and_then(|slot| self.weights[slot])
    }

    /// Bias of a non-input node; `None` for inputs.
    pub fn bias(&self, node: NodeId) -> Option<i32> {
        node.checked_sub(self.arch.input_count())
            .and_then(|i| self.biases.get(i).copied())
    }

    /// Bitmask over slots; equal keys mean equal connection topology.
    pub fn topology_key(&self) -> Vec<u64> {
        let mut key = vec![0u64; self.weights.len().div_ceil(64)];
        for (i, w) in self.weights.iter().enumerate() {
            if w.is_some() {
                key[i / 64] |= 1 << (i % 64);
            }
        }
        key
    }

    /// Feed-forward pass; each node outputs `tanh(lambda * (sum w*y + b))`.
    pub fn evaluate(&self, input: &[f64]) -> Result<Vec<f64>> {
        let arch = &*self.arch;
        if input.len() != arch.input_count() {
            return Err(Error::Dimension { expected: arch.input_count(), actual: input.len() });
        }
        let n_in = arch.input_count();
        let mut act = vec![0.0f64; arch.node_count()];
        let mut acc = vec![0.0f64; arch.node_count()];
        act[..n_in].copy_from_slice(input);
        let layers = arch.layer_sizes.len();
        for k in 0..layers - 1 {
            if k > 0 {
                for node in arch.layer_range(k) {
                    act[node] = (arch.lambda * (acc[node] + self.biases[node - n_in] as f64)).tanh();
                }
            }
            for slot in arch.slot_offsets[k]..arch.slot_offsets[k + 1] {
                if let Some(w) = self.weights[slot] {
                    let (s, t) = arch.slots[slot];
                    acc[t] += w as f64 * act[s];
                }
            }
        }
        let last = arch.layer_range(layers - 1);
        Ok(last
            .map(|node| (arch.lambda * (acc[node] + self.biases[node - n_in] as f64)).tanh())
            .collect())
    }

    /// Whether the first output is strictly positive, for every binary input
    /// pattern in ascending integer order. Bit `n-1-i` of the pattern drives
    /// input `i`, so `i1` is the most significant bit; 1 maps to +1, 0 to -1.
    pub fn positive_outputs_over_binary_inputs(&self) -> Vec<bool> {
        let n_in = self.arch.input_count();
        assert!(n_in <= 16, "exhaustive evaluation over {n_in} inputs is not supported");
        if self.arch.is_exactly_ternary() {
            self.ternary_outputs()
        } else {
            (0..1usize << n_in)
                .map(|p| {
                    let input = binary_input(p, n_in);
                    self.evaluate(&input).expect("input sized from arch")[0] > 0.0
                })
                .collect()
        }
    }

    // Same recurrence as `evaluate`, batched over all patterns in integer
    // arithmetic. Valid only when `is_exactly_ternary` holds.
    fn ternary_outputs(&self) -> Vec<bool> {
        let arch = &*self.arch;
        let n_in = arch.input_count();
        let patterns = 1usize << n_in;
        let mut act = vec![0i16; arch.node_count() * patterns];
        for i in 0..n_in {
            let row = &mut act[i * patterns..(i + 1) * patterns];
            for (p, a) in row.iter_mut().enumerate() {
                *a = if (p >> (n_in - 1 - i)) & 1 == 1 { 1 } else { -1 };
            }
        }
        let mut acc = vec![0i16; patterns];
        let layers = arch.layer_sizes.len();
        for k in 0..layers - 1 {
            let width = arch.layer_sizes[k + 1];
            for t_local in 0..width {
                let target = arch.node_offsets[k + 1] + t_local;
                acc.fill(self.biases[target - n_in] as i16);
                for s_local in 0..arch.layer_sizes[k] {
                    let slot = arch.slot_offsets[k] + s_local * width + t_local;
                    if let Some(w) = self.weights[slot] {
                        let w = w as i16;
                        let source = arch.node_offsets[k] + s_local;
                        let src = &act[source * patterns..(source + 1) * patterns];
                        for (a, &y) in acc.iter_mut().zip(src) {
                            *a += w * y;
                        }
                    }
                }
                let dst = &mut act[target * patterns..(target + 1) * patterns];
                for (y, &a) in dst.iter_mut().zip(&acc) {
                    *y = (a > 0) as i16 - (a < 0) as i16;
                }
            }
        }
        let out = arch.node_offsets[layers - 1];
        act[out * patterns..(out + 1) * patterns].iter().map(|&y| y > 0).collect()
    }

    pub fn to_graph(&self) -> Graph {
        let edges = self.connections().map(|(s, t, _)| (s, t)).collect();
        Graph::new(self.arch.node_count(), edges).expect("genome connections form a simple graph")
    }

    /// Key-value text dump; see [`Genome::from_dump`].
    pub fn to_dump(&self) -> String {
        let arch = &*self.arch;
        let join = |v: &[i32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::from("# structevo genome\n");
        let sizes: Vec<String> = arch.layer_sizes.iter().map(|n| n.to_string()).collect();
        writeln!(out, "layers = {}", sizes.join(",")).unwrap();
        writeln!(out, "lambda = {}", arch.lambda).unwrap();
        writeln!(out, "weight_values = {}", join(&arch.weight_values)).unwrap();
        writeln!(out, "bias_values = {}", join(&arch.bias_values)).unwrap();
        for node in arch.input_count()..arch.node_count() {
            writeln!(out, "bias.{} = {}", arch.neuron_name(node), self.biases[node - arch.input_count()])
                .unwrap();
        }
        for (s, t, w) in self.connections() {
            writeln!(out, "conn.{}.{} = {}", arch.neuron_name(s), arch.neuron_name(t), w).unwrap();
        }
        out
    }

    /// Parses the format written by [`Genome::to_dump`]. Blank lines and
    /// `#` comments are ignored; `layers`, `lambda`, `weight_values` and
    /// `bias_values` must precede any `bias.*` or `conn.*` line, and every
    /// non-input node needs exactly one bias.
    pub fn from_dump(text: &str) -> Result<Self> {
        let mut layers = None;
        let mut lambda = None;
        let mut weight_values = None;
        let mut bias_values = None;
        let mut arch: Option<Arc<ArchSpec>> = None;
        let mut biases: Vec<Option<i32>> = Vec::new();
        let mut conns = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let perr = |message: String| Error::Parse { line: line_no, message };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| perr(format!("expected `key = value`, got `{line}`")))?;
            let int_list = |v: &str| -> Result<Vec<i32>> {
                v.split(',')
                    .map(|x| x.trim().parse::<i32>().map_err(|_| perr(format!("bad integer `{x}`"))))
                    .collect()
            };
            match key {
                "layers" => {
                    let sizes = value
                        .split(',')
                        .map(|x| x.trim().parse::<usize>().map_err(|_| perr(format!("bad layer size `{x}`"))))
                        .collect::<Result<Vec<_>>>()?;
                    layers = Some(sizes);
                }
                "lambda" => {
                    lambda = Some(value.parse::<f64>().map_err(|_| perr(format!("bad lambda `{value}`")))?)
                }
                "weight_values" => weight_values = Some(int_list(value)?),
                "bias_values" => bias_values = Some(int_list(value)?),
                _ => {
                    if arch.is_none() {
                        let (Some(l), Some(lam), Some(w), Some(b)) =
                            (layers.clone(), lambda, weight_values.clone(), bias_values.clone())
                        else {
                            return Err(perr(format!("`{key}` before the architecture header")));
                        };
                        let a = ArchSpec::new(l, lam, w, b).map_err(|e| perr(e.to_string()))?;
                        biases = vec![None; a.node_count() - a.input_count()];
                        arch = Some(Arc::new(a));
                    }
                    let a = arch.as_ref().unwrap();
                    let v = value.parse::<i32>().map_err(|_| perr(format!("bad integer `{value}`")))?;
                    if let Some(name) = key.strip_prefix("bias.") {
                        let node = a.neuron_by_name(name).map_err(|e| perr(e.to_string()))?;
                        let slot = node
                            .checked_sub(a.input_count())
                            .ok_or_else(|| perr(format!("input neuron {name} has no bias")))?;
                        if !a.bias_values.contains(&v) {
                            return Err(perr(format!("bias {v} not in the allowed set")));
                        }
                        if biases[slot].replace(v).is_some() {
                            return Err(perr(format!("duplicate bias for {name}")));
                        }
                    } else if let Some(rest) = key.strip_prefix("conn.") {
                        let (s, t) = rest
                            .split_once('.')
                            .ok_or_else(|| perr(format!("expected conn.<source>.<target>, got `{key}`")))?;
                        let s = a.neuron_by_name(s).map_err(|e| perr(e.to_string()))?;
                        let t = a.neuron_by_name(t).map_err(|e| perr(e.to_string()))?;
                        if a.slot_of(s, t).is_none() {
                            return Err(perr(format!("{} -> {} is not between neighbouring layers", a.neuron_name(s), a.neuron_name(t))));
                        }
                        if !a.weight_values.contains(&v) {
                            return Err(perr(format!("weight {v} not in the allowed set")));
                        }
                        conns.push((s, t, v, line_no));
                    } else {
                        return Err(perr(format!("unknown key `{key}`")));
                    }
                }
            }
        }
        let arch = arch.ok_or_else(|| Error::Parse { line: 0, message: "no bias or connection lines".into() })?;
        let biases = biases
            .iter()
            .enumerate()
            .map(|(i, b)| {
                b.ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("missing bias for {}", arch.neuron_name(i + arch.input_count())),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut genome = Genome::from_parts(arch.clone(), &[], biases)
            .map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
        for (s, t, w, line) in conns {
            genome
                .set_connection(s, t, w)
                .map_err(|e| Error::Parse { line, message: e.to_string() })?;
        }
        Ok(genome)
    }

    fn set_connection(&mut self, source: NodeId, target: NodeId, weight: i32) -> Result<()> {
        let slot = self
            .arch
            .slot_of(source, target)
            .ok_or_else(|| Error::Architecture(format!("no feasible connection {source} -> {target}")))?;
        if !self.arch.weight_values.contains(&weight) {
            return Err(Error::Architecture(format!("weight {weight} not in the allowed set")));
        }
        if self.weights[slot].replace(weight).is_some() {
            return Err(Error::Architecture(format!("duplicate connection {source} -> {target}")));
        }
        Ok(())
    }
}

/// ±1 input vector for an integer pattern; input 0 is the most significant bit.
pub fn binary_input(pattern: usize, n_inputs: usize) -> Vec<f64> {
    (0..n_inputs)
        .map(|i| if (pattern >> (n_inputs - 1 - i)) & 1 == 1 { 1.0 } else { -1.0 })
        .collect()
}

/// Each feasible slot is present independently with probability `p_init`;
/// weights and biases are uniform over the allowed sets.
pub fn random_genome<R: Rng + ?Sized>(rng: &mut R, arch: &Arc<ArchSpec>, p_init: f64) -> Genome {
    assert!((0.0..=1.0).contains(&p_init), "p_init must lie in [0, 1], got {p_init}");
    let weights = (0..arch.slot_count())
        .map(|_| {
            rng.random_bool(p_init)
                .then(|| *arch.weight_values.choose(rng).unwrap())
        })
        .collect();
    let biases = (arch.input_count()..arch.node_count())
        .map(|_| *arch.bias_values.choose(rng).unwrap())
        .collect();
    Genome { arch: arch.clone(), weights, biases }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MutationConfig {
    /// Chance per offspring of adding one connection.
    pub p_add_conn: f64,
    /// Chance per offspring of removing one connection.
    pub p_remove_conn: f64,
    /// Chance per offspring of moving one connection to an empty slot.
    pub p_move_conn: f64,
    /// Chance per present connection of redrawing its weight.
    pub p_weight_change: f64,
    /// Chance per non-input node of redrawing its bias.
    pub p_bias_change: f64,
    /// Keep the weight of a moved connection instead of redrawing it.
    pub move_keeps_weight: bool,
}

impl Default for MutationConfig {
    fn default() -> Self {
        MutationConfig {
            p_add_conn: 0.2,
            p_remove_conn: 0.2,
            p_move_conn: 0.2,
            p_weight_change: 0.05,
            p_bias_change: 0.05,
            move_keeps_weight: false,
        }
    }
}

impl MutationConfig {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("p_add_conn", self.p_add_conn),
            ("p_remove_conn", self.p_remove_conn),
            ("p_move_conn", self.p_move_conn),
            ("p_weight_change", self.p_weight_change),
            ("p_bias_change", self.p_bias_change),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Applies, in order: add, remove, move, per-connection weight redraws and
/// per-node bias redraws. Structural operations that have nothing to act on
/// are skipped.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, rng: &mut R, cfg: &MutationConfig) -> Genome {
    let mut child = genome.clone();
    let arch = genome.arch.clone();
    let weights = &arch.weight_values;

    if rng.random_bool(cfg.p_add_conn) {
        let absent: Vec<usize> = slots_where(&child.weights, false);
        if let Some(&slot) = absent.choose(rng) {
            child.weights[slot] = Some(*weights.choose(rng).unwrap());
        }
    }
    if rng.random_bool(cfg.p_remove_conn) {
        let present = slots_where(&child.weights, true);
        if let Some(&slot) = present.choose(rng) {
            child.weights[slot] = None;
        }
    }
    if rng.random_bool(cfg.p_move_conn) {
        let present = slots_where(&child.weights, true);
        let absent = slots_where(&child.weights, false);
        if !present.is_empty() && !absent.is_empty() {
            let from = *present.choose(rng).unwrap();
            let to = *absent.choose(rng).unwrap();
            let old = child.weights[from].take();
            child.weights[to] = if cfg.move_keeps_weight {
                old
            } else {
                Some(*weights.choose(rng).unwrap())
            };
        }
    }
    for w in child.weights.iter_mut().flatten() {
        if rng.random_bool(cfg.p_weight_change) {
            *w = *weights.choose(rng).unwrap();
        }
    }
    for b in child.biases.iter_mut() {
        if rng.random_bool(cfg.p_bias_change) {
            *b = *arch.bias_values.choose(rng).unwrap();
        }
    }
    child
}

fn slots_where(weights: &[Option<i32>], present: bool) -> Vec<usize> {
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_some() == present)
        .map(|(i, _)| i)
        .collect()
}

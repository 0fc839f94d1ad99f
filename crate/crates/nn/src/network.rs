//! Sequential layer stacks with U-Net style skip connections.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use svct_core::io::TensorRecord;
use svct_core::par::Execution;

use crate::error::{shape_err, NnError, Result};
use crate::layers::{Aux, Layer, LayerSpec, Mode, Param};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OpSpec {
    Layer(LayerSpec),
    /// Remembers the current activation in skip slot `i`.
    SaveSkip(usize),
    /// Replaces the activation with `[activation | skip_i]` (channel concat).
    ConcatSkip(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    SinGenerator,
    PrnGenerator,
    Discriminator,
}

impl Role {
    fn code(self) -> f32 {
        match self {
            Role::SinGenerator => 0.0,
            Role::PrnGenerator => 1.0,
            Role::Discriminator => 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub role: Role,
    pub ops: Vec<OpSpec>,
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Spatial dims must be multiples of this.
    pub spatial_multiple: usize,
    /// Input channel added to the output (global residual), if any.
    pub residual: Option<usize>,
    /// Ops whose outputs are exposed as features.
    pub feature_ops: Vec<usize>,
}

impl NetworkSpec {
    pub fn skip_slots(&self) -> usize {
        self.ops
            .iter()
            .filter_map(|o| match o {
                OpSpec::SaveSkip(i) => Some(i + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.ops.iter().filter_map(|o| match o {
            OpSpec::Layer(l) => Some(l),
            _ => None,
        })
    }
}

/// Everything one forward pass produced that its backward pass needs.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    /// `acts[0]` is the input, `acts[i + 1]` the output of op `i`.
    pub acts: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    pub output: Tensor<T>,
}

impl<T: Scalar> Tape<T> {
    /// Outputs of the feature ops, in order.
    pub fn features(&self, spec: &NetworkSpec) -> Vec<Tensor<T>> {
        spec.feature_ops.iter().map(|&i| self.acts[i + 1].clone()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    pub spec: NetworkSpec,
    /// One entry per op; `None` for skip bookkeeping ops.
    pub layers: Vec<Option<Layer<T>>>,
    pub exec: Execution,
    last: Option<Tape<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .ops
            .iter()
            .map(|op| match op {
                OpSpec::Layer(l) => Some(Layer::new(*l, &mut rng)),
                _ => None,
            })
            .collect();
        Self {
            spec,
            layers,
            exec: Execution::default(),
            last: None,
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let m = self.spec.spatial_multiple;
        let name = format!("{:?}", self.spec.role);
        if x.c() != self.spec.in_channels {
            return Err(shape_err(
                name,
                format!("expected {} input channels, got {}", self.spec.in_channels, x.c()),
            ));
        }
        if x.h() % m != 0 || x.w() % m != 0 || x.h() == 0 || x.w() == 0 {
            return Err(shape_err(
                name,
                format!(
                    "spatial dims {}x{} must be positive multiples of {m} ({} resampling stages)",
                    x.h(),
                    x.w(),
                    m.trailing_zeros()
                ),
            ));
        }
        Ok(())
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tape<T>> {
        self.check_input(x)?;
        let exec = self.exec;
        let mut skips: Vec<Option<Tensor<T>>> = vec![None; self.spec.skip_slots()];
        let mut acts = Vec::with_capacity(self.spec.ops.len() + 1);
        let mut aux = Vec::with_capacity(self.spec.ops.len());
        acts.push(x.clone());
        for (i, op) in self.spec.ops.iter().enumerate() {
            let cur = acts.last().expect("input pushed");
            let (next, a) = match op {
                OpSpec::Layer(_) => {
                    let layer = self.layers[i].as_mut().expect("layer op has a layer");
                    layer.forward(cur, mode, exec)?
                }
                OpSpec::SaveSkip(s) => {
                    skips[*s] = Some(cur.clone());
                    (cur.clone(), Aux::None)
                }
                OpSpec::ConcatSkip(s) => {
                    let skip = skips[*s]
                        .as_ref()
                        .ok_or_else(|| shape_err("concat_skip", format!("slot {s} is empty")))?;
                    (Tensor::concat_channels(cur, skip)?, Aux::None)
                }
            };
            acts.push(next);
            aux.push(a);
        }
        let mut output = acts.last().expect("at least the input").clone();
        if let Some(r) = self.spec.residual {
            if output.c() != 1 || output.shape[2..] != x.shape[2..] {
                return Err(shape_err("residual", format!("output {:?}", output.shape)));
            }
            output.add_assign(&x.channel(r));
        }
        Ok(Tape { acts, aux, output })
    }

    /// Backward pass through a recorded tape.
    ///
    /// `grad_out` is the gradient w.r.t. the network output (zero if `None`);
    /// `feature_grads[j]` is added to the output gradient of feature op `j`.
    /// Parameter gradients accumulate only when `accumulate` is set, so a
    /// frozen network can pass gradients through to its input.
    pub fn backward(
        &mut self,
        tape: &Tape<T>,
        grad_out: Option<&Tensor<T>>,
        feature_grads: &[Tensor<T>],
        accumulate: bool,
    ) -> Result<Tensor<T>> {
        if !feature_grads.is_empty() && feature_grads.len() != self.spec.feature_ops.len() {
            return Err(shape_err(
                "backward",
                format!(
                    "{} feature gradients for {} feature layers",
                    feature_grads.len(),
                    self.spec.feature_ops.len()
                ),
            ));
        }
        let exec = self.exec;
        let last = tape.acts.last().expect("tape has the input");
        let mut g = match grad_out {
            Some(go) => {
                if go.shape != tape.output.shape {
                    return Err(shape_err(
                        "backward",
                        format!("gradient {:?} vs output {:?}", go.shape, tape.output.shape),
                    ));
                }
                go.clone()
            }
            None => Tensor::zeros(last.shape),
        };
        let residual_grad = self.spec.residual.map(|_| g.clone());
        let mut skip_grads: Vec<Option<Tensor<T>>> = vec![None; self.spec.skip_slots()];
        for i in (0..self.spec.ops.len()).rev() {
            if let Some(j) = self.spec.feature_ops.iter().position(|&f| f == i) {
                if let Some(fg) = feature_grads.get(j) {
                    if fg.shape != g.shape {
                        return Err(shape_err(
                            "backward",
                            format!("feature gradient {j} {:?} vs {:?}", fg.shape, g.shape),
                        ));
                    }
                    g.add_assign(fg);
                }
            }
            g = match self.spec.ops[i] {
                OpSpec::Layer(_) => {
                    let layer = self.layers[i].as_mut().expect("layer op has a layer");
                    layer.backward(&tape.acts[i], &tape.acts[i + 1], &tape.aux[i], &g, accumulate, exec)?
                }
                OpSpec::ConcatSkip(s) => {
                    let (main, skip) = g.split_channels(tape.acts[i].c());
                    match &mut skip_grads[s] {
                        Some(acc) => acc.add_assign(&skip),
                        slot => *slot = Some(skip),
                    }
                    main
                }
                OpSpec::SaveSkip(s) => {
                    if let Some(sg) = skip_grads[s].take() {
                        g.add_assign(&sg);
                    }
                    g
                }
            };
        }
        if let (Some(r), Some(rg)) = (self.spec.residual, residual_grad) {
            let p = g.plane();
            for n in 0..g.n() {
                let base = g.idx(n, r, 0, 0);
                for (k, v) in g.data[base..base + p].iter_mut().enumerate() {
                    *v = *v + rg.data[n * p + k];
                }
            }
        }
        Ok(g)
    }

    /// Forward pass that keeps its tape for [`Network::backward_recorded`].
    pub fn forward_recorded(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let tape = self.forward(x, mode)?;
        let out = tape.output.clone();
        self.last = Some(tape);
        Ok(out)
    }

    pub fn backward_recorded(&mut self, grad_out: &Tensor<T>, accumulate: bool) -> Result<Tensor<T>> {
        let tape = self
            .last
            .take()
            .ok_or_else(|| NnError::NoForward(format!("{:?}", self.spec.role)))?;
        let g = self.backward(&tape, Some(grad_out), &[], accumulate);
        self.last = Some(tape);
        g
    }

    pub fn infer(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x, Mode::Eval)?.output)
    }

    /// Post-activation maps of the feature layers.
    pub fn extract_features(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let tape = self.forward(x, mode)?;
        Ok(tape.features(&self.spec))
    }

    pub fn params(&self) -> impl Iterator<Item = &Param<T>> {
        self.layers.iter().flatten().flat_map(|l| l.params.iter())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.layers.iter_mut().flatten().flat_map(|l| l.params.iter_mut())
    }

    pub fn num_params(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(Param::zero_grad);
    }

    /// Parameters and batch-norm buffers as named f32 records, plus a
    /// `meta` record describing the architecture.
    pub fn to_records(&self, prefix: &str) -> Vec<TensorRecord> {
        let s = &self.spec;
        let mut out = vec![TensorRecord::new(
            format!("{prefix}meta"),
            vec![6],
            vec![
                s.role.code(),
                s.base_channels as f32,
                s.in_channels as f32,
                s.out_channels as f32,
                s.residual.map_or(-1.0, |r| r as f32),
                self.num_params() as f32,
            ],
        )];
        for (i, layer) in self.layers.iter().enumerate() {
            let Some(layer) = layer else { continue };
            for p in &layer.params {
                out.push(TensorRecord::new(
                    format!("{prefix}{i}.{}", p.name),
                    p.shape.clone(),
                    p.value.iter().map(|v| v.to_f32_bits()).collect(),
                ));
            }
            for (b, buf) in layer.buffers.iter().enumerate() {
                let name = if b == 0 { "running_mean" } else { "running_var" };
                out.push(TensorRecord::new(
                    format!("{prefix}{i}.{name}"),
                    vec![buf.len()],
                    buf.iter().map(|v| v.to_f32_bits()).collect(),
                ));
            }
        }
        out
    }

    /// Loads values written by [`Network::to_records`] into a network built
    /// from the same spec.
    pub fn load_records(&mut self, records: &[TensorRecord], prefix: &str) -> Result<()> {
        let find = |name: String| {
            records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing record '{name}'")))
        };
        let meta = find(format!("{prefix}meta"))?;
        let expected = &self.to_records(prefix)[0];
        if meta.data != expected.data {
            return Err(NnError::Checkpoint(format!(
                "architecture mismatch: checkpoint {:?}, network {:?}",
                meta.data, expected.data
            )));
        }
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let Some(layer) = layer else { continue };
            for p in &mut layer.params {
                let r = find(format!("{prefix}{i}.{}", p.name))?;
                if r.dims != p.shape {
                    return Err(NnError::Checkpoint(format!(
                        "'{}' has dims {:?}, expected {:?}",
                        r.name, r.dims, p.shape
                    )));
                }
                p.value = r.data.iter().map(|&v| T::from_f32_bits(v)).collect();
            }
            for (b, buf) in layer.buffers.iter_mut().enumerate() {
                let name = if b == 0 { "running_mean" } else { "running_var" };
                let r = find(format!("{prefix}{i}.{name}"))?;
                if r.data.len() != buf.len() {
                    return Err(NnError::Checkpoint(format!("'{}' has the wrong length", r.name)));
                }
                *buf = r.data.iter().map(|&v| T::from_f32_bits(v)).collect();
            }
        }
        Ok(())
    }
}

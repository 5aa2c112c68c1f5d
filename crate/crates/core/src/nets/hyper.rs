//! Hypernetwork f: a ResNet over the target map whose output is the flat
//! parameter vector of the primary network.

use rand::Rng;

use super::config::ArchConfig;
use super::layers::{
    conv, dense_vec, flatten_with_scale, res_block, LayerIds, LayerSpec, LayerVars,
};
use super::primary::{Head, PrimaryLayout, PrimaryPart};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hyperinit::{
    hyper_output_variance, uniform_draw, xavier_variance, InitScheme, InputStats,
};

/// Architecture of f; parameters live in a [`ParamStore`] or come from q.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperNet {
    pub specs: Vec<LayerSpec>,
    pub primary: PrimaryLayout,
    blocks: usize,
    scheme: InitScheme,
    stats: InputStats,
}

impl HyperNet {
    pub fn new(
        arch: &ArchConfig,
        head: Head,
        scheme: InitScheme,
        stats: InputStats,
    ) -> Result<Self> {
        arch.validate()?;
        let primary = PrimaryLayout::new(arch.primary_hidden, arch.primary_layers, head)?;
        let c = arch.hyper_channels;
        let mut specs = vec![LayerSpec::conv("stem", 1, c)];
        for b in 0..arch.hyper_blocks {
            specs.push(LayerSpec::conv(format!("block{b}a"), c, c));
            specs.push(LayerSpec::conv(format!("block{b}b"), c, c));
        }
        let shrink = 1 << (arch.hyper_blocks / 2);
        let flat = c * (arch.sphere.n_theta / shrink) * (arch.sphere.n_phi / shrink) + 3;
        specs.push(LayerSpec::dense("fc1", flat, arch.hyper_hidden));
        specs.push(LayerSpec::dense("fc2", arch.hyper_hidden, primary.len()));
        Ok(Self {
            specs,
            primary,
            blocks: arch.hyper_blocks,
            scheme,
            stats,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.specs.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.specs.iter().map(LayerSpec::size).collect()
    }

    pub fn last_layer(&self) -> usize {
        self.specs.len() - 1
    }

    pub fn scheme(&self) -> InitScheme {
        self.scheme
    }

    pub fn stats(&self) -> InputStats {
        self.stats
    }

    /// Initial variance of every weight entry of layer `j` under the scheme.
    /// All layers but the last are Xavier; the last layer's columns follow
    /// the primary parameter they produce.
    pub fn weight_variances(&self, j: usize) -> Vec<f64> {
        let spec = &self.specs[j];
        if j != self.last_layer() {
            return vec![xavier_variance(spec.fan_in()); spec.weight_len()];
        }
        let d_h = spec.fan_in();
        let columns: Vec<f64> = self
            .primary
            .parts()
            .into_iter()
            .map(|(layer, part)| {
                let fan = match part {
                    PrimaryPart::Weight => self.primary.dims[layer].0,
                    // scale and bias rows get half the per-unit variance
                    PrimaryPart::Scale | PrimaryPart::Bias => 2,
                };
                hyper_output_variance(self.scheme, d_h, fan, self.stats)
            })
            .collect();
        (0..d_h).flat_map(|_| columns.iter().copied()).collect()
    }

    /// Initial bias of layer `j`: zero, except the last layer starts the
    /// primary scales at one.
    pub fn bias_init(&self, j: usize) -> Vec<f64> {
        if j != self.last_layer() {
            return vec![0.0; self.specs[j].bias_len()];
        }
        self.primary
            .parts()
            .into_iter()
            .map(|(_, p)| if p == PrimaryPart::Scale { 1.0 } else { 0.0 })
            .collect()
    }

    /// Fresh weights for layer `j` drawn per [`weight_variances`](Self::weight_variances).
    pub fn draw_weights(&self, j: usize, rng: &mut impl Rng) -> Tensor {
        let data = self
            .weight_variances(j)
            .into_iter()
            .map(|v| uniform_draw(rng, v))
            .collect();
        Tensor::new(self.specs[j].weight_shape(), data).expect("layer shape")
    }

    /// Adds all layers to `store` under `prefix`, initialized per the scheme.
    pub fn add_params(
        &self,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut impl Rng,
    ) -> Vec<LayerIds> {
        (0..self.n_layers())
            .map(|j| {
                let spec = &self.specs[j];
                LayerIds {
                    weight: store.add(
                        format!("{prefix}.{}.w", spec.name),
                        self.draw_weights(j, rng),
                    ),
                    bias: store.add(
                        format!("{prefix}.{}.b", spec.name),
                        Tensor::vector(self.bias_init(j)),
                    ),
                }
            })
            .collect()
    }

    /// Peak-normalized target as a `[1, n_θ, n_φ]` constant.
    pub fn input_tensor(target: &crate::em::SphericalMap) -> Result<Tensor> {
        let g = target.grid();
        let norm = target.peak_normalized()?;
        Tensor::new(vec![1, g.n_theta, g.n_phi], norm.into_values())
    }

    /// Input of the last layer: the first fully connected layer's output.
    pub fn hidden(
        &self,
        tape: &mut Tape,
        layers: &[LayerVars],
        target: Var,
        scale: [f64; 3],
    ) -> Result<Var> {
        if layers.len() != self.n_layers() {
            return Err(Error::Assembly(format!(
                "hypernetwork has {} layers, got {}",
                self.n_layers(),
                layers.len()
            )));
        }
        let mut x = conv(tape, target, layers[0], true)?;
        for b in 0..self.blocks {
            x = res_block(tape, x, layers[1 + 2 * b], layers[2 + 2 * b])?;
            if b % 2 == 1 {
                x = tape.avg_pool(x, 2, 2)?;
            }
        }
        let flat = flatten_with_scale(tape, x, scale)?;
        dense_vec(tape, flat, layers[self.n_layers() - 2], true)
    }

    /// `θ_g = f(target, S)` given every layer's parameters.
    pub fn forward(
        &self,
        tape: &mut Tape,
        layers: &[LayerVars],
        target: Var,
        scale: [f64; 3],
    ) -> Result<Var> {
        let h = self.hidden(tape, layers, target, scale)?;
        let out = dense_vec(tape, h, layers[self.n_layers() - 1], false)?;
        if tape.value(out).numel() != self.primary.len() {
            return Err(Error::Config(format!(
                "hypernetwork emits {} values for {} primary parameters",
                tape.value(out).numel(),
                self.primary.len()
            )));
        }
        Ok(out)
    }
}

//! Hyperhypernetwork q and the assembly of f's parameters from q-generated
//! and conventional layers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::ArchConfig;
use super::hyper::HyperNet;
use super::layers::{add_layers, conv, dense_vec, layer_from_flat, LayerIds, LayerSpec, LayerVars};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hyperinit::{hyperhyper_output_variance, uniform_draw};

/// Selected layer set `j_s` of f; the remaining layers are conventional.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n_layers: usize,
    selected: Vec<usize>,
}

impl Partition {
    /// Rejects duplicates and out-of-range indices so every layer lands in
    /// exactly one of the two sets.
    pub fn new(n_layers: usize, selected: &[usize]) -> Result<Self> {
        let mut s = selected.to_vec();
        s.sort_unstable();
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Assembly(format!(
                "layer selected twice in {selected:?}"
            )));
        }
        if let Some(&j) = s.iter().find(|&&j| j >= n_layers) {
            return Err(Error::Assembly(format!("layer {j} outside 0..{n_layers}")));
        }
        Ok(Self {
            n_layers,
            selected: s,
        })
    }

    pub fn all(n_layers: usize) -> Self {
        Self {
            n_layers,
            selected: (0..n_layers).collect(),
        }
    }

    pub fn none(n_layers: usize) -> Self {
        Self {
            n_layers,
            selected: Vec::new(),
        }
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn conventional(&self) -> Vec<usize> {
        (0..self.n_layers)
            .filter(|j| !self.is_selected(*j))
            .collect()
    }

    pub fn is_selected(&self, j: usize) -> bool {
        self.selected.binary_search(&j).is_ok()
    }

    /// `Σ_{j∈j_s} sizes[j]`
    pub fn generated_len(&self, sizes: &[usize]) -> usize {
        self.selected.iter().map(|&j| sizes[j]).sum()
    }

    /// Flat θ_f split into the generated part (selected layers in order) and
    /// the conventional part (remaining layers in order).
    pub fn split_flat(&self, sizes: &[usize], theta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_sizes(sizes)?;
        if theta.len() != sizes.iter().sum::<usize>() {
            return Err(Error::Assembly(format!(
                "θ_f has {} values, layers need {}",
                theta.len(),
                sizes.iter().sum::<usize>()
            )));
        }
        let (mut gen, mut conv) = (Vec::new(), Vec::new());
        let mut off = 0;
        for (j, &n) in sizes.iter().enumerate() {
            let part = &theta[off..off + n];
            if self.is_selected(j) {
                gen.extend_from_slice(part);
            } else {
                conv.extend_from_slice(part);
            }
            off += n;
        }
        Ok((gen, conv))
    }

    /// Inverse of [`split_flat`](Self::split_flat).
    pub fn assemble_flat(
        &self,
        sizes: &[usize],
        generated: &[f64],
        conventional: &[f64],
    ) -> Result<Vec<f64>> {
        self.check_sizes(sizes)?;
        let need_gen = self.generated_len(sizes);
        let need_conv = sizes.iter().sum::<usize>() - need_gen;
        if generated.len() != need_gen || conventional.len() != need_conv {
            return Err(Error::Assembly(format!(
                "expected {need_gen} generated and {need_conv} conventional values, got {} and {}",
                generated.len(),
                conventional.len()
            )));
        }
        let (mut g, mut c) = (0, 0);
        let mut out = Vec::with_capacity(need_gen + need_conv);
        for (j, &n) in sizes.iter().enumerate() {
            if self.is_selected(j) {
                out.extend_from_slice(&generated[g..g + n]);
                g += n;
            } else {
                out.extend_from_slice(&conventional[c..c + n]);
                c += n;
            }
        }
        Ok(out)
    }

    fn check_sizes(&self, sizes: &[usize]) -> Result<()> {
        if sizes.len() != self.n_layers {
            return Err(Error::Assembly(format!(
                "partition over {} layers used with {}",
                self.n_layers,
                sizes.len()
            )));
        }
        Ok(())
    }
}

/// Full layer list of f: selected layers sliced from q's output `generated`,
/// the rest taken from `conventional` (indexed by layer).
pub fn assemble_hyper(
    tape: &mut Tape,
    hyper: &HyperNet,
    partition: &Partition,
    generated: Option<Var>,
    conventional: &[LayerVars],
) -> Result<Vec<LayerVars>> {
    if partition.n_layers() != hyper.n_layers() || conventional.len() != hyper.n_layers() {
        return Err(Error::Assembly(format!(
            "hypernetwork has {} layers; partition covers {}, conventional list {}",
            hyper.n_layers(),
            partition.n_layers(),
            conventional.len()
        )));
    }
    let need = partition.generated_len(&hyper.layer_sizes());
    match generated {
        None if need > 0 => {
            return Err(Error::Assembly(
                "selected layers but no generated vector".into(),
            ))
        }
        Some(g) if tape.value(g).numel() != need => {
            return Err(Error::Assembly(format!(
                "generated vector has {} values, selected layers need {need}",
                tape.value(g).numel()
            )))
        }
        _ => {}
    }
    let mut offset = 0;
    let mut out = Vec::with_capacity(hyper.n_layers());
    for (j, spec) in hyper.specs.iter().enumerate() {
        if partition.is_selected(j) {
            let g = generated.expect("checked above");
            out.push(layer_from_flat(tape, g, offset, spec)?);
            offset += spec.size();
        } else {
            out.push(conventional[j]);
        }
    }
    Ok(out)
}

/// Hyperhypernetwork q: conv trunk over the constraint plane, then one
/// linear layer emitting the selected layers of f.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperHyperNet {
    pub trunk: Vec<LayerSpec>,
    pub last: LayerSpec,
    pub partition: Partition,
}

impl HyperHyperNet {
    pub fn new(arch: &ArchConfig, hyper: &HyperNet, partition: Partition) -> Result<Self> {
        arch.validate()?;
        if partition.selected().is_empty() {
            return Err(Error::Contract(
                "hyperhypernetwork needs at least one selected layer".into(),
            ));
        }
        if partition.n_layers() != hyper.n_layers() {
            return Err(Error::Assembly(
                "partition does not match the hypernetwork".into(),
            ));
        }
        let c = arch.hyperhyper_channels;
        let trunk: Vec<LayerSpec> = (0..arch.hyperhyper_layers)
            .map(|l| LayerSpec::conv(format!("conv{l}"), if l == 0 { 1 } else { c }, c))
            .collect();
        let plane = arch.array_voxels();
        let shrink = 1 << arch.hyperhyper_layers;
        let d_m = c * (plane.nx / shrink) * (plane.ny / shrink);
        let out = partition.generated_len(&hyper.layer_sizes());
        Ok(Self {
            trunk,
            last: LayerSpec::dense("out", d_m, out),
            partition,
        })
    }

    pub fn out_len(&self) -> usize {
        self.last.bias_len()
    }

    /// Adds q's parameters. The trunk is Xavier; the last layer is scaled
    /// so each generated entry of f starts with the variance f's own
    /// initialization would give it, divided per the scheme. Its bias
    /// reproduces f's initial biases, and rows generating biases start at 0.
    pub fn add_params(
        &self,
        hyper: &HyperNet,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut impl Rng,
    ) -> (Vec<LayerIds>, LayerIds) {
        let trunk = add_layers(store, prefix, &self.trunk, rng);
        let d_m = self.last.fan_in();
        let mut col_var = Vec::with_capacity(self.out_len());
        let mut bias = Vec::with_capacity(self.out_len());
        for &j in self.partition.selected() {
            col_var.extend(
                hyper
                    .weight_variances(j)
                    .into_iter()
                    .map(|v| hyperhyper_output_variance(hyper.scheme(), d_m, v, hyper.stats())),
            );
            col_var.extend(std::iter::repeat_n(0.0, hyper.specs[j].bias_len()));
            bias.extend(vec![0.0; hyper.specs[j].weight_len()]);
            bias.extend(hyper.bias_init(j));
        }
        let mut w = Vec::with_capacity(d_m * self.out_len());
        for _ in 0..d_m {
            for &v in &col_var {
                w.push(uniform_draw(rng, v));
            }
        }
        let last = LayerIds {
            weight: store.add(
                format!("{prefix}.{}.w", self.last.name),
                Tensor::new(self.last.weight_shape(), w).expect("layer shape"),
            ),
            bias: store.add(
                format!("{prefix}.{}.b", self.last.name),
                Tensor::vector(bias),
            ),
        };
        (trunk, last)
    }

    /// Flattened trunk output: the input of q's last layer.
    pub fn features(&self, tape: &mut Tape, trunk: &[LayerVars], plane: Var) -> Result<Var> {
        if trunk.len() != self.trunk.len() {
            return Err(Error::Assembly(
                "hyperhypernetwork trunk layer count mismatch".into(),
            ));
        }
        let mut x = plane;
        for &l in trunk {
            x = conv(tape, x, l, true)?;
            x = tape.avg_pool(x, 2, 2)?;
        }
        let n = tape.value(x).numel();
        tape.reshape(x, &[n])
    }

    /// `θ_f^{i_s} = q(C)` for a `[1, ny, nx]` constraint plane.
    pub fn forward(
        &self,
        tape: &mut Tape,
        trunk: &[LayerVars],
        last: LayerVars,
        plane: Var,
    ) -> Result<Var> {
        let flat = self.features(tape, trunk, plane)?;
        dense_vec(tape, flat, last, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_rejects_overlap_and_range() {
        assert!(matches!(
            Partition::new(3, &[0, 0]),
            Err(Error::Assembly(_))
        ));
        assert!(matches!(Partition::new(3, &[3]), Err(Error::Assembly(_))));
        let p = Partition::new(4, &[2, 0]).unwrap();
        assert_eq!(p.selected(), &[0, 2]);
        assert_eq!(p.conventional(), vec![1, 3]);
    }

    #[test]
    fn split_assemble_round_trip() {
        let sizes = [3, 1, 4, 2];
        let theta: Vec<f64> = (0..10).map(|i| i as f64 * 1.5).collect();
        for sel in [vec![], vec![0, 1, 2, 3], vec![1, 3], vec![2]] {
            let p = Partition::new(4, &sel).unwrap();
            let (g, c) = p.split_flat(&sizes, &theta).unwrap();
            assert_eq!(g.len(), p.generated_len(&sizes));
            assert_eq!(p.assemble_flat(&sizes, &g, &c).unwrap(), theta);
        }
        let p = Partition::new(4, &[1]).unwrap();
        assert!(matches!(
            p.assemble_flat(&sizes, &[1.0, 2.0], &[0.0; 8]),
            Err(Error::Assembly(_))
        ));
    }
}

//! Initialization schemes for the q→f→g chain and an empirical probe of
//! how each scheme propagates variance to the primary network's output.
//!
//! Three schemes are supported. `Xavier` gives every layer variance
//! `1/fan_in`. `HyperFanin` additionally scales the hypernetwork's last
//! layer by the fan-in of the primary layer it feeds and the variance of the
//! hypernetwork input. `HyperhyperFanin` further divides the last
//! hyperhypernetwork layer by the variance of the constraint input, so the
//! weights it generates come out with the variance their layer needs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    Xavier,
    HyperFanin,
    HyperhyperFanin,
}

impl InitScheme {
    pub const ALL: [InitScheme; 3] = [
        InitScheme::Xavier,
        InitScheme::HyperFanin,
        InitScheme::HyperhyperFanin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitScheme::Xavier => "xavier",
            InitScheme::HyperFanin => "hyper_fanin",
            InitScheme::HyperhyperFanin => "hyperhyper_fanin",
        }
    }
}

impl std::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xavier" => Ok(InitScheme::Xavier),
            "hyper" | "hyper_fanin" => Ok(InitScheme::HyperFanin),
            "hyperhyper" | "hyperhyper_fanin" => Ok(InitScheme::HyperhyperFanin),
            other => Err(Error::Config(format!("unknown init scheme {other:?}"))),
        }
    }
}

/// Input statistics the fan-in schemes divide by. Both must be positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    /// Variance of the hypernetwork input (target maps as fed to f).
    pub var_e: f64,
    /// Variance of the hyperhypernetwork input (constraint planes).
    pub var_c: f64,
}

impl Default for InputStats {
    fn default() -> Self {
        Self {
            var_e: 1.0,
            var_c: 1.0,
        }
    }
}

impl InputStats {
    pub fn new(var_e: f64, var_c: f64) -> Result<Self> {
        for (name, v) in [("hypernetwork input", var_e), ("constraint input", var_c)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} variance {v} must be positive"
                )));
            }
        }
        Ok(Self { var_e, var_c })
    }
}

/// Mean square of every entry over all samples, `E[x²]`: the quantity a
/// zero-mean weight multiplies when the input itself is not centred.
pub fn estimate_second_moment<'a>(samples: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for s in samples {
        total += s.iter().map(|v| v * v).sum::<f64>();
        count += s.len();
    }
    if count == 0 {
        return Err(Error::Contract("second moment over no values".into()));
    }
    Ok(total / count as f64)
}

/// Mean over samples of the per-sample population variance of the entries.
pub fn estimate_input_variance<'a>(samples: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        if s.is_empty() {
            return Err(Error::Contract("empty sample in variance estimate".into()));
        }
        let n = s.len() as f64;
        let mean = s.iter().sum::<f64>() / n;
        total += s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Contract(
            "variance estimate over an empty set".into(),
        ));
    }
    Ok(total / count as f64)
}

/// Mean-zero uniform draws with the given variance: bounds `±√(3·var)`.
pub fn uniform_with_variance(rng: &mut impl Rng, n: usize, var: f64) -> Vec<f64> {
    (0..n).map(|_| uniform_draw(rng, var)).collect()
}

/// One draw of [`uniform_with_variance`]; zero variance consumes no randomness.
pub fn uniform_draw(rng: &mut impl Rng, var: f64) -> f64 {
    if var == 0.0 {
        return 0.0;
    }
    let a = (3.0 * var).sqrt();
    rng.random_range(-a..=a)
}

pub fn xavier_variance(fan_in: usize) -> f64 {
    1.0 / fan_in as f64
}

/// Variance for a hypernetwork output row that generates a weight of a
/// primary layer with fan-in `primary_fan_in`; `hyper_fan_in` is the fan-in
/// of the hypernetwork's last layer.
pub fn hyper_output_variance(
    scheme: InitScheme,
    hyper_fan_in: usize,
    primary_fan_in: usize,
    stats: InputStats,
) -> f64 {
    match scheme {
        InitScheme::Xavier => xavier_variance(hyper_fan_in),
        InitScheme::HyperFanin | InitScheme::HyperhyperFanin => {
            1.0 / (hyper_fan_in as f64 * primary_fan_in as f64 * stats.var_e)
        }
    }
}

/// Variance for a hyperhypernetwork output row generating a hypernetwork
/// parameter whose own target variance is `target_var`; `fan_in` is the
/// fan-in of the hyperhypernetwork's last layer.
pub fn hyperhyper_output_variance(
    scheme: InitScheme,
    fan_in: usize,
    target_var: f64,
    stats: InputStats,
) -> f64 {
    match scheme {
        InitScheme::Xavier => xavier_variance(fan_in),
        InitScheme::HyperFanin => target_var / fan_in as f64,
        InitScheme::HyperhyperFanin => target_var / (fan_in as f64 * stats.var_c),
    }
}

/// Dimensions of the linear micro-stack used to probe variance propagation.
///
/// The primary path is `primary_depth` linear layers on `R^{primary_width}`, the last
/// one reducing to a scalar `y`. Every weight comes from a linear
/// hypernetwork `W[i,j] = Σ_k f[i,j,k]·h_k` over a shared `embed_dim` embedding
/// `h_k = a_k·e_k`. The first `dynamic` coefficients `a_k` are generated by a
/// linear hyperhypernetwork from a constraint vector `c ∈ R^{constraint_dim}`: a trunk
/// of `trunk_depth` square Xavier layers, then a last layer of fan-in `constraint_dim`.
/// The remaining coefficients are conventional unit-variance parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroStack {
    pub primary_width: usize,
    pub embed_dim: usize,
    pub constraint_dim: usize,
    pub dynamic: usize,
    pub trunk_depth: usize,
    pub primary_depth: usize,
    /// Variance of the primary input, embedding and constraint draws.
    pub var_x: f64,
    pub var_e: f64,
    pub var_c: f64,
}

impl Default for MicroStack {
    fn default() -> Self {
        Self {
            primary_width: 8,
            embed_dim: 8,
            constraint_dim: 8,
            dynamic: 4,
            trunk_depth: 2,
            primary_depth: 1,
            var_x: 1.0,
            var_e: 0.1,
            var_c: 0.25,
        }
    }
}

impl MicroStack {
    fn validate(&self) -> Result<()> {
        if self.primary_width == 0
            || self.embed_dim == 0
            || self.constraint_dim == 0
            || self.primary_depth == 0
            || self.dynamic > self.embed_dim
        {
            return Err(Error::Config(format!("invalid micro-stack {self:?}")));
        }
        InputStats::new(self.var_e, self.var_c)?;
        if !(self.var_x > 0.0) {
            return Err(Error::Config(
                "primary input variance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn stats(&self) -> InputStats {
        InputStats {
            var_e: self.var_e,
            var_c: self.var_c,
        }
    }

    /// `Var(y)/Var(x)` implied by the scheme's variances in the linear
    /// propagation formula. Per primary layer, conventional units contribute
    /// `Var(a) = 1` and dynamic units `constraint_dim·Var(q)·Var(c)`, all scaled by
    /// `primary_width·Var(f)·Var(e)`; layers compound multiplicatively.
    pub fn predicted_ratio(&self, scheme: InitScheme) -> f64 {
        self.predicted_layer_ratio(scheme)
            .powi(self.primary_depth as i32)
    }

    fn predicted_layer_ratio(&self, scheme: InitScheme) -> f64 {
        let stats = self.stats();
        let var_f = hyper_output_variance(scheme, self.embed_dim, self.primary_width, stats);
        // the generated units aim at the unit variance of conventional ones
        let var_q = hyperhyper_output_variance(scheme, self.constraint_dim, 1.0, stats);
        let conventional = (self.embed_dim - self.dynamic) as f64;
        let dynamic = self.dynamic as f64 * self.constraint_dim as f64 * var_q * self.var_c;
        self.primary_width as f64 * var_f * self.var_e * (conventional + dynamic)
    }
}

/// One row of the probe output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeRow {
    pub scheme: &'static str,
    pub stage: &'static str,
    pub layer: usize,
    pub variance_ratio: f64,
}

/// Probe outcome for one scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub scheme: InitScheme,
    /// `Var(w^{(c)}_l)/Var(c)` after each trunk layer.
    pub trunk_ratios: Vec<f64>,
    /// Empirical `Var(y)/Var(x)`.
    pub output_ratio: f64,
    pub predicted_ratio: f64,
}

impl ProbeResult {
    pub fn rows(&self) -> Vec<ProbeRow> {
        let mut rows: Vec<ProbeRow> = self
            .trunk_ratios
            .iter()
            .enumerate()
            .map(|(l, &r)| ProbeRow {
                scheme: self.scheme.name(),
                stage: "hyperhyper_trunk",
                layer: l,
                variance_ratio: r,
            })
            .collect();
        rows.push(ProbeRow {
            scheme: self.scheme.name(),
            stage: "primary_output",
            layer: 0,
            variance_ratio: self.output_ratio,
        });
        rows.push(ProbeRow {
            scheme: self.scheme.name(),
            stage: "predicted_output",
            layer: 0,
            variance_ratio: self.predicted_ratio,
        });
        rows
    }
}

fn sample_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

fn matvec(w: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    (0..rows)
        .map(|r| {
            w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Monte-Carlo variance propagation through a freshly initialized
/// [`MicroStack`]: each of `trials` trials draws new weights and inputs.
/// With `elu` the trunk applies ELU after every layer (informational run).
pub fn variance_probe(
    stack: &MicroStack,
    scheme: InitScheme,
    trials: usize,
    seed: u64,
    elu: bool,
) -> Result<ProbeResult> {
    stack.validate()?;
    if trials < 2 {
        return Err(Error::Config(
            "variance probe needs at least 2 trials".into(),
        ));
    }
    let stats = stack.stats();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let act = |v: f64| if elu && v < 0.0 { v.exp_m1() } else { v };

    let mut xs = Vec::with_capacity(trials);
    let mut ys = Vec::with_capacity(trials);
    let mut trunk: Vec<Vec<f64>> = vec![Vec::new(); stack.trunk_depth];
    let mut cs = Vec::new();

    let var_f = hyper_output_variance(scheme, stack.embed_dim, stack.primary_width, stats);
    let var_q = hyperhyper_output_variance(scheme, stack.constraint_dim, 1.0, stats);
    for _ in 0..trials {
        let c = uniform_with_variance(&mut rng, stack.constraint_dim, stack.var_c);
        cs.extend_from_slice(&c);
        let mut w_c = c;
        for slot in trunk.iter_mut() {
            let w = uniform_with_variance(
                &mut rng,
                stack.constraint_dim * stack.constraint_dim,
                xavier_variance(stack.constraint_dim),
            );
            w_c = matvec(&w, &w_c, stack.constraint_dim)
                .into_iter()
                .map(act)
                .collect();
            slot.extend_from_slice(&w_c);
        }
        let x = uniform_with_variance(&mut rng, stack.primary_width, stack.var_x);
        let mut act_in = x.clone();
        for layer in 0..stack.primary_depth {
            // each primary layer owns its embedding and generator rows; the
            // constraint features are shared
            let q = uniform_with_variance(&mut rng, stack.dynamic * stack.constraint_dim, var_q);
            let generated = matvec(&q, &w_c, stack.dynamic);
            let conventional =
                uniform_with_variance(&mut rng, stack.embed_dim - stack.dynamic, 1.0);
            let e = uniform_with_variance(&mut rng, stack.embed_dim, stack.var_e);
            let h: Vec<f64> = generated
                .iter()
                .chain(&conventional)
                .zip(&e)
                .map(|(a, e)| a * e)
                .collect();
            let rows = if layer + 1 == stack.primary_depth {
                1
            } else {
                stack.primary_width
            };
            let f = uniform_with_variance(
                &mut rng,
                rows * stack.primary_width * stack.embed_dim,
                var_f,
            );
            let w_g = matvec(&f, &h, rows * stack.primary_width);
            act_in = matvec(&w_g, &act_in, rows);
        }
        xs.extend_from_slice(&x);
        ys.push(act_in[0]);
    }
    let var_c = sample_var(&cs);
    Ok(ProbeResult {
        scheme,
        trunk_ratios: trunk.iter().map(|t| sample_var(t) / var_c).collect(),
        output_ratio: sample_var(&ys) / sample_var(&xs),
        predicted_ratio: stack.predicted_ratio(scheme),
    })
}

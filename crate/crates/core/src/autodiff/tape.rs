use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddChannel(Var, Var),
    MulScalarVar(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Exp(Var),
    Log(Var),
    Elu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Max(Var, usize),
    Conv2d(Var, Var),
    AvgPool {
        x: Var,
        window: usize,
        stride: usize,
    },
    Reshape(Var),
    Slice(Var, usize),
    Concat(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Ordered record of operations; nodes are appended so every input
/// precedes its consumers.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`; zeros when no path connects it to the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match self.get(v) {
            Some(g) => Tensor::new(shape.clone(), g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }

    pub fn take(&mut self, v: Var) -> Vec<f64> {
        let n: usize = self.shapes[v.0].iter().product();
        self.grads[v.0].take().unwrap_or_else(|| vec![0.0; n])
    }
}

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Gradients are accumulated only for leaves created
    /// with `requires_grad` and for values derived from them.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!("matmul: {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    fn zip(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).data().contains(&0.0) {
            return Err(Error::Domain("div: zero denominator".into()));
        }
        let t = self.zip(a, b, "div", |x, y| x / y)?;
        Ok(self.push(t, Op::Div(a, b), &[a, b]))
    }

    fn row_check(&self, x: Var, r: Var, name: &str) -> Result<(usize, usize)> {
        let sx = self.shape(x);
        let n = *sx.last().unwrap_or(&0);
        if sx.len() != 2 || self.value(r).numel() != n {
            return Err(Error::Dimension(format!(
                "{name}: {sx:?} with row vector {:?}",
                self.shape(r)
            )));
        }
        Ok((sx[0], n))
    }

    /// `x[m×n] + b[n]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (_, n) = self.row_check(x, b, "add_row")?;
        let bv = self.value(b).data().to_vec();
        let mut t = self.value(x).clone();
        for row in t.data_mut().chunks_mut(n) {
            for (o, &bb) in row.iter_mut().zip(&bv) {
                *o += bb;
            }
        }
        Ok(self.push(t, Op::AddRow(x, b), &[x, b]))
    }

    /// `x[m×n] ⊙ s[n]` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, s: Var) -> Result<Var> {
        let (_, n) = self.row_check(x, s, "mul_row")?;
        let sv = self.value(s).data().to_vec();
        let mut t = self.value(x).clone();
        for row in t.data_mut().chunks_mut(n) {
            for (o, &ss) in row.iter_mut().zip(&sv) {
                *o *= ss;
            }
        }
        Ok(self.push(t, Op::MulRow(x, s), &[x, s]))
    }

    /// `x[c×h×w] + b[c]` broadcast over spatial positions.
    pub fn add_channel(&mut self, x: Var, b: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || self.value(b).numel() != sx[0] {
            return Err(Error::Dimension(format!(
                "add_channel: {sx:?} with bias {:?}",
                self.shape(b)
            )));
        }
        let hw = sx[1] * sx[2];
        let bv = self.value(b).data().to_vec();
        let mut t = self.value(x).clone();
        for (c, chunk) in t.data_mut().chunks_mut(hw).enumerate() {
            for o in chunk {
                *o += bv[c];
            }
        }
        Ok(self.push(t, Op::AddChannel(x, b), &[x, b]))
    }

    /// Multiplies every element of `x` by the one-element `s`.
    pub fn mul_scalar_var(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.value(s).numel() != 1 {
            return Err(Error::Dimension(
                "mul_scalar_var: scale is not a scalar".into(),
            ));
        }
        let sv = self.value(s).item();
        let mut t = self.value(x).clone();
        t.data_mut().iter_mut().for_each(|v| *v *= sv);
        Ok(self.push(t, Op::MulScalarVar(x, s), &[x, s]))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let mut t = self.value(x).clone();
        t.data_mut().iter_mut().for_each(|v| *v = f(*v));
        t
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.map(x, |v| v * c);
        self.push(t, Op::Scale(x, c), &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.map(x, |v| v + c);
        self.push(t, Op::AddScalar(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.map(x, f64::exp);
        self.push(t, Op::Exp(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(v) = self
            .value(x)
            .data()
            .iter()
            .find(|&&v| v <= 0.0 || v.is_nan())
        {
            return Err(Error::Domain(format!("log of non-positive value {v}")));
        }
        let t = self.map(x, f64::ln);
        Ok(self.push(t, Op::Log(x), &[x]))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let t = self.map(x, elu);
        self.push(t, Op::Elu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map(x, sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let t = self.map(x, softplus);
        self.push(t, Op::Softplus(x), &[x])
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping was active.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let t = self.map(x, |v| v.clamp(lo, hi));
        self.push(t, Op::Clamp(x, lo, hi), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Maximum element; the gradient routes to the first maximizer.
    pub fn max(&mut self, x: Var) -> Var {
        let (idx, m) = self.value(x).data().iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, bm), (i, &v)| {
                if v > bm {
                    (i, v)
                } else {
                    (bi, bm)
                }
            },
        );
        self.push(Tensor::scalar(m), Op::Max(x, idx), &[x])
    }

    /// 3×3 same-size convolution: input `[c_in, h, w]`, kernel
    /// `[c_out, c_in, 3, 3]`, zero padding 1.
    pub fn conv2d(&mut self, x: Var, k: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sk = self.shape(k).to_vec();
        if sx.len() != 3 || sk.len() != 4 || sk[2] != 3 || sk[3] != 3 {
            return Err(Error::Dimension(format!(
                "conv2d: input {sx:?}, kernel {sk:?}"
            )));
        }
        if sk[1] != sx[0] {
            return Err(Error::Dimension(format!(
                "conv2d: kernel expects {} input channels, input has {}",
                sk[1], sx[0]
            )));
        }
        let (c_in, h, w, c_out) = (sx[0], sx[1], sx[2], sk[0]);
        let mut out = vec![0.0; c_out * h * w];
        kernels::conv3x3_forward(
            self.value(x).data(),
            self.value(k).data(),
            &mut out,
            c_in,
            c_out,
            h,
            w,
        );
        let t = Tensor::new(vec![c_out, h, w], out)?;
        Ok(self.push(t, Op::Conv2d(x, k), &[x, k]))
    }

    /// Valid-mode average pooling of `[c, h, w]` (or `[h, w]`) input.
    pub fn avg_pool(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let (c, h, w) = match sx.as_slice() {
            [h, w] => (1, *h, *w),
            [c, h, w] => (*c, *h, *w),
            _ => return Err(Error::Dimension(format!("avg_pool: input {sx:?}"))),
        };
        if window == 0 || stride == 0 || h < window || w < window {
            return Err(Error::Dimension(format!(
                "avg_pool: window {window} stride {stride} on {h}x{w}"
            )));
        }
        let oh = kernels::pool_out_len(h, window, stride);
        let ow = kernels::pool_out_len(w, window, stride);
        let mut out = vec![0.0; c * oh * ow];
        kernels::avg_pool_forward(self.value(x).data(), &mut out, c, h, w, window, stride);
        let shape = if sx.len() == 2 {
            vec![oh, ow]
        } else {
            vec![c, oh, ow]
        };
        let t = Tensor::new(shape, out)?;
        Ok(self.push(t, Op::AvgPool { x, window, stride }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Contiguous run of `len` values of the flattened `x`, as a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.value(x).numel();
        if len == 0 || start + len > n {
            return Err(Error::Dimension(format!(
                "slice [{start}, {}) out of {n}",
                start + len
            )));
        }
        let t = Tensor::vector(self.value(x).data()[start..start + len].to_vec());
        Ok(self.push(t, Op::Slice(x, start), &[x]))
    }

    /// Concatenation along the leading axis; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat of nothing".into()))?;
        let tail = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != tail[..] {
                return Err(Error::Dimension(format!(
                    "concat: trailing shape {:?} vs {tail:?}",
                    &s[1..]
                )));
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::Concat(parts.to_vec()), parts))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward from non-scalar of shape {:?}",
                self.shape(loss)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let wants = |v: Var| self.nodes[v.0].requires_grad;

        macro_rules! acc {
            ($v:expr, |$buf:ident| $body:block) => {{
                let v: Var = $v;
                if wants(v) {
                    let len = self.nodes[v.0].value.numel();
                    let $buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                    $body
                }
            }};
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, nn) = (sa[0], sa[1], sb[1]);
                acc!(*a, |buf| {
                    kernels::matmul_nt_acc(g, val(*b), buf, m, k, nn);
                });
                acc!(*b, |buf| {
                    kernels::matmul_tn_acc(val(*a), g, buf, m, k, nn);
                });
            }
            Op::Add(a, b) => {
                acc!(*a, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                });
                acc!(*b, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                });
            }
            Op::Sub(a, b) => {
                acc!(*a, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                });
                acc!(*b, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d -= gv);
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc!(*a, |buf| {
                    for ((d, &gv), &y) in buf.iter_mut().zip(g).zip(vb) {
                        *d += gv * y;
                    }
                });
                acc!(*b, |buf| {
                    for ((d, &gv), &x) in buf.iter_mut().zip(g).zip(va) {
                        *d += gv * x;
                    }
                });
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc!(*a, |buf| {
                    for ((d, &gv), &y) in buf.iter_mut().zip(g).zip(vb) {
                        *d += gv / y;
                    }
                });
                acc!(*b, |buf| {
                    for (((d, &gv), &x), &y) in buf.iter_mut().zip(g).zip(va).zip(vb) {
                        *d -= gv * x / (y * y);
                    }
                });
            }
            Op::AddRow(x, b) => {
                let n = self.value(*b).numel();
                acc!(*x, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                });
                acc!(*b, |buf| {
                    for row in g.chunks(n) {
                        buf.iter_mut().zip(row).for_each(|(d, &gv)| *d += gv);
                    }
                });
            }
            Op::MulRow(x, s) => {
                let n = self.value(*s).numel();
                let (vx, vs) = (val(*x), val(*s));
                acc!(*x, |buf| {
                    for (drow, grow) in buf.chunks_mut(n).zip(g.chunks(n)) {
                        for ((d, &gv), &sv) in drow.iter_mut().zip(grow).zip(vs) {
                            *d += gv * sv;
                        }
                    }
                });
                acc!(*s, |buf| {
                    for (xrow, grow) in vx.chunks(n).zip(g.chunks(n)) {
                        for ((d, &gv), &xv) in buf.iter_mut().zip(grow).zip(xrow) {
                            *d += gv * xv;
                        }
                    }
                });
            }
            Op::AddChannel(x, b) => {
                let c = self.value(*b).numel();
                let hw = g.len() / c;
                acc!(*x, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                });
                acc!(*b, |buf| {
                    for (ch, chunk) in g.chunks(hw).enumerate() {
                        buf[ch] += chunk.iter().sum::<f64>();
                    }
                });
            }
            Op::MulScalarVar(x, s) => {
                let sv = self.value(*s).item();
                let vx = val(*x);
                acc!(*x, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv * sv);
                });
                acc!(*s, |buf| {
                    buf[0] += g.iter().zip(vx).map(|(&gv, &xv)| gv * xv).sum::<f64>();
                });
            }
            Op::Scale(x, c) => {
                acc!(*x, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv * c);
                });
            }
            Op::AddScalar(x) => {
                acc!(*x, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                });
            }
            Op::Exp(x) => {
                let y = node.value.data();
                acc!(*x, |buf| {
                    for ((d, &gv), &yv) in buf.iter_mut().zip(g).zip(y) {
                        *d += gv * yv;
                    }
                });
            }
            Op::Log(x) => {
                let vx = val(*x);
                acc!(*x, |buf| {
                    for ((d, &gv), &xv) in buf.iter_mut().zip(g).zip(vx) {
                        *d += gv / xv;
                    }
                });
            }
            Op::Elu(x) => {
                let vx = val(*x);
                acc!(*x, |buf| {
                    for ((d, &gv), &xv) in buf.iter_mut().zip(g).zip(vx) {
                        *d += if xv >= 0.0 { gv } else { gv * xv.exp() };
                    }
                });
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                acc!(*x, |buf| {
                    for ((d, &gv), &yv) in buf.iter_mut().zip(g).zip(y) {
                        *d += gv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Softplus(x) => {
                let vx = val(*x);
                acc!(*x, |buf| {
                    for ((d, &gv), &xv) in buf.iter_mut().zip(g).zip(vx) {
                        *d += gv * sigmoid(xv);
                    }
                });
            }
            Op::Clamp(x, lo, hi) => {
                let vx = val(*x);
                acc!(*x, |buf| {
                    for ((d, &gv), &xv) in buf.iter_mut().zip(g).zip(vx) {
                        if xv >= *lo && xv <= *hi {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Sum(x) => {
                acc!(*x, |buf| {
                    buf.iter_mut().for_each(|d| *d += g[0]);
                });
            }
            Op::Mean(x) => {
                let inv = g[0] / self.value(*x).numel() as f64;
                acc!(*x, |buf| {
                    buf.iter_mut().for_each(|d| *d += inv);
                });
            }
            Op::Max(x, idx) => {
                acc!(*x, |buf| {
                    buf[*idx] += g[0];
                });
            }
            Op::Conv2d(x, k) => {
                let sx = self.shape(*x);
                let (c_in, h, w, c_out) = (sx[0], sx[1], sx[2], self.shape(*k)[0]);
                let (vx, vk) = (val(*x), val(*k));
                if wants(*x) {
                    let len = vx.len();
                    let buf = grads[x.0].get_or_insert_with(|| vec![0.0; len]);
                    kernels::conv3x3_backward(vx, vk, g, Some(buf), None, c_in, c_out, h, w);
                }
                if wants(*k) {
                    let len = vk.len();
                    let buf = grads[k.0].get_or_insert_with(|| vec![0.0; len]);
                    kernels::conv3x3_backward(vx, vk, g, None, Some(buf), c_in, c_out, h, w);
                }
            }
            Op::AvgPool { x, window, stride } => {
                let sx = self.shape(*x);
                let (c, h, w) = match sx {
                    [h, w] => (1, *h, *w),
                    [c, h, w] => (*c, *h, *w),
                    _ => unreachable!(),
                };
                acc!(*x, |buf| {
                    kernels::avg_pool_backward(g, buf, c, h, w, *window, *stride);
                });
            }
            Op::Reshape(x) => {
                acc!(*x, |buf| {
                    buf.iter_mut().zip(g).for_each(|(d, &gv)| *d += gv);
                });
            }
            Op::Slice(x, start) => {
                acc!(*x, |buf| {
                    buf[*start..*start + g.len()]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(d, &gv)| *d += gv);
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    acc!(p, |buf| {
                        buf.iter_mut()
                            .zip(&g[offset..offset + len])
                            .for_each(|(d, &gv)| *d += gv);
                    });
                    offset += len;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_by_identity_is_noop() {
        let mut tape = Tape::new();
        let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
        let a = tape.constant(t(&[3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]));
        let p = tape.matmul(eye, a).unwrap();
        assert_eq!(tape.value(p), tape.value(a));
    }

    #[test]
    fn matmul_hand_example() {
        let mut tape = Tape::new();
        let a = tape.constant(t(&[2, 2], &[1., 2., 3., 4.]));
        let b = tape.constant(t(&[2, 1], &[1., 1.]));
        let p = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(p).data(), &[3.0, 7.0]);
        assert_eq!(tape.shape(p), &[2, 1]);
    }

    #[test]
    fn matmul_shape_mismatch_is_dimension_error() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::Dimension(_))));
    }

    #[test]
    fn delta_kernel_copies_channel() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..16).map(|i| i as f64 * 0.5 - 3.0).collect();
        let x = tape.constant(t(&[1, 4, 4], &data));
        let mut kd = vec![0.0; 9];
        kd[4] = 1.0;
        let k = tape.constant(t(&[1, 1, 3, 3], &kd));
        let y = tape.conv2d(x, k).unwrap();
        assert_eq!(tape.value(y).data(), &data[..]);
    }

    #[test]
    fn ones_kernel_counts_taps() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(&[1, 4, 4], 1.0));
        let k = tape.constant(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let y = tape.conv2d(x, k).unwrap();
        let v = tape.value(y).data();
        assert_eq!(v[0], 4.0);
        assert_eq!(v[3], 4.0);
        assert_eq!(v[1], 6.0);
        assert_eq!(v[5], 9.0);
        assert_eq!(v[10], 9.0);
    }

    #[test]
    fn conv_channel_mismatch() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 4, 4]));
        let k = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
        assert!(matches!(tape.conv2d(x, k), Err(Error::Dimension(_))));
    }

    #[test]
    fn elementwise_closed_forms() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[0.0, -1.0]));
        let e = tape.elu(x);
        assert_eq!(tape.value(e).data()[0], 0.0);
        assert!((tape.value(e).data()[1] - (-0.632_120_558_8)).abs() < 1e-9);
        let s = tape.sigmoid(x);
        assert_eq!(tape.value(s).data()[0], 0.5);
    }

    #[test]
    fn log_rejects_non_positive() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(tape.log(x), Err(Error::Domain(_))));
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);
    }

    #[test]
    fn disconnected_leaf_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let unused = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.mul(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert!(g.get(unused).is_none());
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.scale(x, 2.0);
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn mean_times_numel_is_sum() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..37).map(|i| (i as f64).sin() * 3.7).collect();
        let x = tape.constant(Tensor::vector(data));
        let m = tape.mean(x);
        let s = tape.sum(x);
        assert!((tape.value(m).item() * 37.0 - tape.value(s).item()).abs() < 1e-12);
    }

    #[test]
    fn concat_and_slice_route_gradients() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.param(Tensor::vector(vec![3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        let s = tape.slice(c, 1, 2).unwrap();
        let w = tape.constant(Tensor::vector(vec![10.0, 100.0]));
        let p = tape.mul(s, w).unwrap();
        let l = tape.sum(p);
        let g = tape.backward(l).unwrap();
        assert_eq!(g.wrt(a).data(), &[0.0, 10.0]);
        assert_eq!(g.wrt(b).data(), &[100.0]);
    }
}

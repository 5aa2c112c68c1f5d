//! Raw slice kernels shared by the tape's forward and backward passes.

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        let ar = &a[i * k..(i + 1) * k];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m×k] += g[m×n] · bᵀ` where `b` is `k×n`.
pub fn matmul_nt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let gr = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let br = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (&gv, &bv) in gr.iter().zip(br) {
                acc += gv * bv;
            }
            out[i * k + p] += acc;
        }
    }
}

/// `out[k×n] += aᵀ · g` where `a` is `m×k` and `g` is `m×n`.
pub fn matmul_tn_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let gr = &g[i * n..(i + 1) * n];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(gr) {
                *o += av * gv;
            }
        }
    }
}

/// Valid row/column range for a tap offset `d` on an axis of length `len`.
#[inline]
fn tap_range(d: isize, len: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize - d.max(0)).max(0) as usize;
    (lo, hi.max(lo))
}

/// Same-size 3×3 convolution (cross-correlation) with zero padding 1.
pub fn conv3x3_forward(
    x: &[f64],
    k: &[f64],
    out: &mut [f64],
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
) {
    let hw = h * w;
    for co in 0..c_out {
        let oc = &mut out[co * hw..(co + 1) * hw];
        for ci in 0..c_in {
            let xc = &x[ci * hw..(ci + 1) * hw];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = tap_range(dy, h);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = tap_range(dx, w);
                    let wv = k[((co * c_in + ci) * 3 + ky) * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in y0..y1 {
                        let iy = (y as isize + dy) as usize;
                        let orow = &mut oc[y * w + x0..y * w + x1];
                        let irow = &xc[iy * w + (x0 as isize + dx) as usize..];
                        for (o, &iv) in orow.iter_mut().zip(irow) {
                            *o += wv * iv;
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv3x3_forward`] with respect to input and kernel.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward(
    x: &[f64],
    k: &[f64],
    g: &[f64],
    dx_out: Option<&mut [f64]>,
    dk_out: Option<&mut [f64]>,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
) {
    let hw = h * w;
    if let Some(dxs) = dx_out {
        for co in 0..c_out {
            let gc = &g[co * hw..(co + 1) * hw];
            for ci in 0..c_in {
                let dxc = &mut dxs[ci * hw..(ci + 1) * hw];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = tap_range(dy, h);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = tap_range(dx, w);
                        let wv = k[((co * c_in + ci) * 3 + ky) * 3 + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let grow = &gc[y * w + x0..y * w + x1];
                            let start = iy * w + (x0 as isize + dx) as usize;
                            let drow = &mut dxc[start..start + (x1 - x0)];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(dks) = dk_out {
        for co in 0..c_out {
            let gc = &g[co * hw..(co + 1) * hw];
            for ci in 0..c_in {
                let xc = &x[ci * hw..(ci + 1) * hw];
                for ky in 0..3 {
                    let dy = ky as isize - 1;
                    let (y0, y1) = tap_range(dy, h);
                    for kx in 0..3 {
                        let dx = kx as isize - 1;
                        let (x0, x1) = tap_range(dx, w);
                        let mut acc = 0.0;
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let grow = &gc[y * w + x0..y * w + x1];
                            let irow = &xc[iy * w + (x0 as isize + dx) as usize..];
                            for (&gv, &iv) in grow.iter().zip(irow) {
                                acc += gv * iv;
                            }
                        }
                        dks[((co * c_in + ci) * 3 + ky) * 3 + kx] += acc;
                    }
                }
            }
        }
    }
}

pub fn pool_out_len(len: usize, window: usize, stride: usize) -> usize {
    (len - window) / stride + 1
}

/// Valid-mode average pooling over the trailing two axes.
pub fn avg_pool_forward(
    x: &[f64],
    out: &mut [f64],
    c: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
) {
    let oh = pool_out_len(h, window, stride);
    let ow = pool_out_len(w, window, stride);
    let inv = 1.0 / (window * window) as f64;
    for ch in 0..c {
        let xc = &x[ch * h * w..(ch + 1) * h * w];
        let oc = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for wy in 0..window {
                    let row = &xc[(oy * stride + wy) * w + ox * stride..];
                    for &v in &row[..window] {
                        acc += v;
                    }
                }
                oc[oy * ow + ox] = acc * inv;
            }
        }
    }
}

pub fn avg_pool_backward(
    g: &[f64],
    dx: &mut [f64],
    c: usize,
    h: usize,
    w: usize,
    window: usize,
    stride: usize,
) {
    let oh = pool_out_len(h, window, stride);
    let ow = pool_out_len(w, window, stride);
    let inv = 1.0 / (window * window) as f64;
    for ch in 0..c {
        let gc = &g[ch * oh * ow..(ch + 1) * oh * ow];
        let dc = &mut dx[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let gv = gc[oy * ow + ox] * inv;
                for wy in 0..window {
                    let start = (oy * stride + wy) * w + ox * stride;
                    for d in &mut dc[start..start + window] {
                        *d += gv;
                    }
                }
            }
        }
    }
}

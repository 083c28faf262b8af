//! Forward and backward kernels for the primitives the U-Nets use.
//!
//! Kernels are pure functions over [`Tensor`]s. Work is split over batch
//! items; per-item partial weight gradients are reduced in item order so
//! results do not depend on scheduling.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::num_like::Element;
use crate::tensor::{Shape4, Tensor};

/// Upper bound on im2col scratch elements per chunk.
const COLS_BUDGET: usize = 1 << 20;

/// Per-item `(d_input, d_weight, d_bias)` before the batch reduction.
type Partial<T> = (Option<Vec<T>>, Vec<T>, Vec<T>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}

/// Validates conv2d operand shapes and returns `(cout, kh, kw)`.
pub fn conv2d_check(x: Shape4, w: Shape4, b: Shape4) -> Result<(usize, usize, usize)> {
    check(x.c == w.c, || {
        format!("conv2d: input has {} channels, weight expects {}", x.c, w.c)
    })?;
    check(w.h % 2 == 1 && w.w % 2 == 1, || {
        format!("conv2d: kernel {}x{} must be odd", w.h, w.w)
    })?;
    check(b.len() == w.n, || {
        format!("conv2d: bias has {} entries for {} output channels", b.len(), w.n)
    })?;
    Ok((w.n, w.h, w.w))
}

/// Rows of the flattened output plane processed per im2col chunk.
fn rows_per_chunk(k: usize, width: usize, height: usize) -> usize {
    (COLS_BUDGET / (k * width).max(1)).clamp(1, height)
}

/// Fills `cols` (`K x (rows*w)`, row-major) with the zero-padded patches
/// feeding output rows `y0..y0+rows`.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Element>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    y0: usize,
    rows: usize,
    cols: &mut [T],
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let plen = rows * w;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for dy in 0..kh {
            for dx in 0..kw {
                let row = (ci * kh + dy) * kw + dx;
                let dst = &mut cols[row * plen..(row + 1) * plen];
                // valid output columns: 0 <= x + dx - pw < w
                let x_lo = pw.saturating_sub(dx);
                let x_hi = (w + pw).saturating_sub(dx).min(w);
                for r in 0..rows {
                    let y = y0 + r;
                    let seg = &mut dst[r * w..(r + 1) * w];
                    let sy = y as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        seg.fill(T::ZERO);
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    seg[..x_lo].fill(T::ZERO);
                    seg[x_hi..].fill(T::ZERO);
                    let sx0 = x_lo + dx - pw;
                    seg[x_lo..x_hi].copy_from_slice(&src_row[sx0..sx0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adds `cols` back into the input-gradient plane; adjoint of [`im2col`].
#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Element>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    y0: usize,
    rows: usize,
    gx: &mut [T],
) {
    let (ph, pw) = (kh / 2, kw / 2);
    let plen = rows * w;
    for ci in 0..c {
        let plane = &mut gx[ci * h * w..(ci + 1) * h * w];
        for dy in 0..kh {
            for dx in 0..kw {
                let row = (ci * kh + dy) * kw + dx;
                let src = &cols[row * plen..(row + 1) * plen];
                let x_lo = pw.saturating_sub(dx);
                let x_hi = (w + pw).saturating_sub(dx).min(w);
                if x_lo >= x_hi {
                    continue;
                }
                for r in 0..rows {
                    let sy = (y0 + r) as isize + dy as isize - ph as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let sx0 = x_lo + dx - pw;
                    for (d, &s) in dst_row[sx0..sx0 + (x_hi - x_lo)]
                        .iter_mut()
                        .zip(&src[r * w + x_lo..r * w + x_hi])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Stride-1 "same" convolution with zero padding.
///
/// `x: [n, cin, h, w]`, `weight: [cout, cin, kh, kw]`, `bias: [cout]`
/// (any shape with `cout` elements).
pub fn conv2d<T: Element>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    let (cout, kh, kw) = conv2d_check(xs, weight.shape(), bias.shape())?;
    let k = xs.c * kh * kw;
    let hw = xs.plane();
    let mut out = Tensor::zeros([xs.n, cout, xs.h, xs.w]);
    let wt = weight.data();
    let bs = bias.data();

    out.data_mut()
        .par_chunks_mut(cout * hw)
        .zip(x.data().par_chunks(xs.item()))
        .for_each(|(out_item, x_item)| {
            for (co, plane) in out_item.chunks_mut(hw).enumerate() {
                plane.fill(bs[co]);
            }
            if kh == 1 && kw == 1 {
                // 1x1: the input plane already is the column matrix
                unsafe {
                    T::gemm(
                        cout,
                        k,
                        hw,
                        T::ONE,
                        wt.as_ptr(),
                        k as isize,
                        1,
                        x_item.as_ptr(),
                        hw as isize,
                        1,
                        T::ONE,
                        out_item.as_mut_ptr(),
                        hw as isize,
                        1,
                    );
                }
                return;
            }
            let chunk_rows = rows_per_chunk(k, xs.w, xs.h);
            let mut cols = vec![T::ZERO; k * chunk_rows * xs.w];
            let mut y0 = 0;
            while y0 < xs.h {
                let rows = chunk_rows.min(xs.h - y0);
                let plen = rows * xs.w;
                im2col(x_item, xs.c, xs.h, xs.w, kh, kw, y0, rows, &mut cols[..k * plen]);
                unsafe {
                    T::gemm(
                        cout,
                        k,
                        plen,
                        T::ONE,
                        wt.as_ptr(),
                        k as isize,
                        1,
                        cols.as_ptr(),
                        plen as isize,
                        1,
                        T::ONE,
                        out_item.as_mut_ptr().add(y0 * xs.w),
                        hw as isize,
                        1,
                    );
                }
                y0 += rows;
            }
        });
    Ok(out)
}

/// Gradients of [`conv2d`]: `(d_input, d_weight, d_bias)`.
///
/// `d_input` is skipped (returned as `None`) when `need_input` is false.
pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let xs = x.shape();
    let ws = weight.shape();
    let (cout, kh, kw) = (ws.n, ws.h, ws.w);
    let k = xs.c * kh * kw;
    let hw = xs.plane();
    let wt = weight.data();

    let partials: Vec<Partial<T>> = x
        .data()
        .par_chunks(xs.item())
        .zip(grad_out.data().par_chunks(cout * hw))
        .map(|(x_item, g_item)| {
            let mut gw = vec![T::ZERO; cout * k];
            let gb: Vec<T> = g_item.chunks(hw).map(|p| p.iter().copied().sum()).collect();
            let mut gx = need_input.then(|| vec![T::ZERO; xs.item()]);

            if kh == 1 && kw == 1 {
                unsafe {
                    T::gemm(
                        cout,
                        hw,
                        k,
                        T::ONE,
                        g_item.as_ptr(),
                        hw as isize,
                        1,
                        x_item.as_ptr(),
                        1,
                        hw as isize,
                        T::ONE,
                        gw.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                    if let Some(gx) = gx.as_mut() {
                        T::gemm(
                            k,
                            cout,
                            hw,
                            T::ONE,
                            wt.as_ptr(),
                            1,
                            k as isize,
                            g_item.as_ptr(),
                            hw as isize,
                            1,
                            T::ZERO,
                            gx.as_mut_ptr(),
                            hw as isize,
                            1,
                        );
                    }
                }
                return (gx, gw, gb);
            }

            let chunk_rows = rows_per_chunk(k, xs.w, xs.h);
            let mut cols = vec![T::ZERO; k * chunk_rows * xs.w];
            let mut gcols = if need_input {
                vec![T::ZERO; k * chunk_rows * xs.w]
            } else {
                Vec::new()
            };
            let mut y0 = 0;
            while y0 < xs.h {
                let rows = chunk_rows.min(xs.h - y0);
                let plen = rows * xs.w;
                let g_chunk = unsafe { g_item.as_ptr().add(y0 * xs.w) };
                im2col(x_item, xs.c, xs.h, xs.w, kh, kw, y0, rows, &mut cols[..k * plen]);
                unsafe {
                    T::gemm(
                        cout,
                        plen,
                        k,
                        T::ONE,
                        g_chunk,
                        hw as isize,
                        1,
                        cols.as_ptr(),
                        1,
                        plen as isize,
                        T::ONE,
                        gw.as_mut_ptr(),
                        k as isize,
                        1,
                    );
                }
                if let Some(gx) = gx.as_mut() {
                    unsafe {
                        T::gemm(
                            k,
                            cout,
                            plen,
                            T::ONE,
                            wt.as_ptr(),
                            1,
                            k as isize,
                            g_chunk,
                            hw as isize,
                            1,
                            T::ZERO,
                            gcols.as_mut_ptr(),
                            plen as isize,
                            1,
                        );
                    }
                    col2im_add(&gcols[..k * plen], xs.c, xs.h, xs.w, kh, kw, y0, rows, gx);
                }
                y0 += rows;
            }
            (gx, gw, gb)
        })
        .collect();

    let mut gw = Tensor::zeros(ws);
    let mut gb = Tensor::zeros([cout, 1, 1, 1]);
    let mut gx = need_input.then(|| Vec::with_capacity(xs.len()));
    for (px, pw, pb) in partials {
        for (a, b) in gw.data_mut().iter_mut().zip(pw) {
            *a += b;
        }
        for (a, b) in gb.data_mut().iter_mut().zip(pb) {
            *a += b;
        }
        if let (Some(gx), Some(px)) = (gx.as_mut(), px) {
            gx.extend(px);
        }
    }
    let gx = gx.map(|v| Tensor::from_vec(xs, v).expect("input gradient shape"));
    (gx, gw, gb)
}

/// Validates transpose-conv operand shapes and returns `cout`.
pub fn conv_transpose_check(x: Shape4, w: Shape4, b: Shape4) -> Result<usize> {
    check(w.h == 2 && w.w == 2, || {
        format!("conv2d_transpose: kernel must be 2x2, got {}x{}", w.h, w.w)
    })?;
    check(x.c == w.n, || {
        format!("conv2d_transpose: input has {} channels, weight expects {}", x.c, w.n)
    })?;
    check(b.len() == w.c, || {
        format!(
            "conv2d_transpose: bias has {} entries for {} output channels",
            b.len(),
            w.c
        )
    })?;
    Ok(w.c)
}

/// 2x2, stride-2 transpose convolution that exactly doubles `h` and `w`.
///
/// `x: [n, cin, h, w]`, `weight: [cin, cout, 2, 2]`, `bias: [cout]`.
pub fn conv2d_transpose<T: Element>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let xs = x.shape();
    let cout = conv_transpose_check(xs, weight.shape(), bias.shape())?;
    let (h, w) = (xs.h, xs.w);
    let hw = h * w;
    let m = cout * 4;
    let wt = weight.data();
    let bs = bias.data();
    let mut out = Tensor::zeros([xs.n, cout, 2 * h, 2 * w]);

    out.data_mut()
        .par_chunks_mut(cout * 4 * hw)
        .zip(x.data().par_chunks(xs.item()))
        .for_each(|(out_item, x_item)| {
            // tmp[(co, dy, dx), (y, x)] = sum_ci w[ci, (co, dy, dx)] * x[ci, (y, x)]
            let mut tmp = vec![T::ZERO; m * hw];
            unsafe {
                T::gemm(
                    m,
                    xs.c,
                    hw,
                    T::ONE,
                    wt.as_ptr(),
                    1,
                    m as isize,
                    x_item.as_ptr(),
                    hw as isize,
                    1,
                    T::ZERO,
                    tmp.as_mut_ptr(),
                    hw as isize,
                    1,
                );
            }
            for co in 0..cout {
                let plane = &mut out_item[co * 4 * hw..(co + 1) * 4 * hw];
                for dy in 0..2 {
                    for dx in 0..2 {
                        let src = &tmp[(co * 4 + dy * 2 + dx) * hw..][..hw];
                        for y in 0..h {
                            let row = &mut plane[(2 * y + dy) * 2 * w..][..2 * w];
                            for xx in 0..w {
                                row[2 * xx + dx] = src[y * w + xx] + bs[co];
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Gradients of [`conv2d_transpose`]: `(d_input, d_weight, d_bias)`.
pub fn conv2d_transpose_backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> (Option<Tensor<T>>, Tensor<T>, Tensor<T>) {
    let xs = x.shape();
    let ws = weight.shape();
    let cout = ws.c;
    let (h, w) = (xs.h, xs.w);
    let hw = h * w;
    let m = cout * 4;
    let wt = weight.data();

    let partials: Vec<Partial<T>> = x
        .data()
        .par_chunks(xs.item())
        .zip(grad_out.data().par_chunks(m * hw))
        .map(|(x_item, g_item)| {
            let mut gathered = vec![T::ZERO; m * hw];
            let mut gb = vec![T::ZERO; cout];
            for co in 0..cout {
                let plane = &g_item[co * 4 * hw..(co + 1) * 4 * hw];
                gb[co] = plane.iter().copied().sum();
                for dy in 0..2 {
                    for dx in 0..2 {
                        let dst = &mut gathered[(co * 4 + dy * 2 + dx) * hw..][..hw];
                        for y in 0..h {
                            let row = &plane[(2 * y + dy) * 2 * w..][..2 * w];
                            for xx in 0..w {
                                dst[y * w + xx] = row[2 * xx + dx];
                            }
                        }
                    }
                }
            }
            let mut gw = vec![T::ZERO; xs.c * m];
            unsafe {
                T::gemm(
                    xs.c,
                    hw,
                    m,
                    T::ONE,
                    x_item.as_ptr(),
                    hw as isize,
                    1,
                    gathered.as_ptr(),
                    1,
                    hw as isize,
                    T::ZERO,
                    gw.as_mut_ptr(),
                    m as isize,
                    1,
                );
            }
            let gx = need_input.then(|| {
                let mut gx = vec![T::ZERO; xs.item()];
                unsafe {
                    T::gemm(
                        xs.c,
                        m,
                        hw,
                        T::ONE,
                        wt.as_ptr(),
                        m as isize,
                        1,
                        gathered.as_ptr(),
                        hw as isize,
                        1,
                        T::ZERO,
                        gx.as_mut_ptr(),
                        hw as isize,
                        1,
                    );
                }
                gx
            });
            (gx, gw, gb)
        })
        .collect();

    let mut gw = Tensor::zeros(ws);
    let mut gb = Tensor::zeros([cout, 1, 1, 1]);
    let mut gx = need_input.then(|| Vec::with_capacity(xs.len()));
    for (px, pw, pb) in partials {
        for (a, b) in gw.data_mut().iter_mut().zip(pw) {
            *a += b;
        }
        for (a, b) in gb.data_mut().iter_mut().zip(pb) {
            *a += b;
        }
        if let (Some(gx), Some(px)) = (gx.as_mut(), px) {
            gx.extend(px);
        }
    }
    let gx = gx.map(|v| Tensor::from_vec(xs, v).expect("input gradient shape"));
    (gx, gw, gb)
}

/// 2x2 stride-2 max pooling.
///
/// Returns the pooled tensor and, per output element, the flat input index
/// that was selected. Ties go to the lowest flat index in the window.
pub fn maxpool2<T: Element>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = x.shape();
    check(s.h.is_multiple_of(2) && s.w.is_multiple_of(2), || {
        format!("maxpool2: spatial dims {}x{} must be even", s.h, s.w)
    })?;
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = Tensor::zeros([s.n, s.c, oh, ow]);
    let mut route = vec![0usize; out.len()];
    let xd = x.data();
    for plane in 0..s.n * s.c {
        let base = plane * s.h * s.w;
        for y in 0..oh {
            for xx in 0..ow {
                let o = plane * oh * ow + y * ow + xx;
                let top = base + 2 * y * s.w + 2 * xx;
                // ascending flat order: strict > keeps the lowest index on ties
                let candidates = [top, top + 1, top + s.w, top + s.w + 1];
                let mut best = candidates[0];
                for &cand in &candidates[1..] {
                    if xd[cand] > xd[best] {
                        best = cand;
                    }
                }
                out.data_mut()[o] = xd[best];
                route[o] = best;
            }
        }
    }
    Ok((out, route))
}

pub fn maxpool2_backward<T: Element>(input_shape: Shape4, route: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let mut gx = Tensor::zeros(input_shape);
    let gd = gx.data_mut();
    for (&src, &g) in route.iter().zip(grad_out.data()) {
        gd[src] += g;
    }
    gx
}

/// Stacks tensors along the channel axis in argument order.
pub fn concat_channels<T: Element>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::contract("concat_channels: no operands"))?
        .shape();
    for p in parts {
        let s = p.shape();
        check((s.n, s.h, s.w) == (first.n, first.h, first.w), || {
            format!("concat_channels: {s} does not match {first}")
        })?;
    }
    let c: usize = parts.iter().map(|p| p.shape().c).sum();
    let mut data = Vec::with_capacity(first.n * c * first.plane());
    for n in 0..first.n {
        for p in parts {
            let item = p.shape().item();
            data.extend_from_slice(&p.data()[n * item..(n + 1) * item]);
        }
    }
    Tensor::from_vec([first.n, c, first.h, first.w], data)
}

/// Splits a channel-stacked tensor back into blocks of `channels`.
pub fn split_channels<T: Element>(x: &Tensor<T>, channels: &[usize]) -> Result<Vec<Tensor<T>>> {
    let s = x.shape();
    check(channels.iter().sum::<usize>() == s.c, || {
        format!("split_channels: {channels:?} does not sum to {}", s.c)
    })?;
    let plane = s.plane();
    let mut outs: Vec<Vec<T>> = channels.iter().map(|&c| Vec::with_capacity(s.n * c * plane)).collect();
    for n in 0..s.n {
        let mut off = n * s.item();
        for (out, &c) in outs.iter_mut().zip(channels) {
            out.extend_from_slice(&x.data()[off..off + c * plane]);
            off += c * plane;
        }
    }
    outs.into_iter()
        .zip(channels)
        .map(|(d, &c)| Tensor::from_vec([s.n, c, s.h, s.w], d))
        .collect()
}

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::ZERO { v } else { T::ZERO })
}

/// Gradient of ReLU; the subgradient at exactly zero is zero.
pub fn relu_backward<T: Element>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::ZERO { g } else { T::ZERO })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

#[inline]
pub fn sigmoid_scalar<T: Element>(v: T) -> T {
    // branch on sign so exp never overflows
    if v >= T::ZERO {
        T::ONE / (T::ONE + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::ONE + e)
    }
}

pub fn sigmoid<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

/// Gradient of sigmoid given its output `s`: `g * s * (1 - s)`.
pub fn sigmoid_backward<T: Element>(s: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = s
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (T::ONE - s))
        .collect();
    Tensor::from_vec(s.shape(), data).expect("same shape")
}

/// Probability clamp applied inside binary cross-entropy.
pub const BCE_CLAMP: f64 = 1e-7;

fn same_shape<T: Element>(a: &Tensor<T>, b: &Tensor<T>, op: &str) -> Result<()> {
    check(a.shape() == b.shape(), || {
        format!("{op}: shapes {} and {} differ", a.shape(), b.shape())
    })
}

/// Mean binary cross-entropy of probabilities, clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce<T: Element>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    same_shape(pred, target, "bce")?;
    let (lo, hi) = (BCE_CLAMP, 1.0 - BCE_CLAMP);
    let total: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            let p = p.to_f64().clamp(lo, hi);
            let y = y.to_f64();
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// Gradient of [`bce`] with respect to `pred`; zero where the clamp is active.
pub fn bce_backward<T: Element>(pred: &Tensor<T>, target: &Tensor<T>, grad: T) -> Tensor<T> {
    let (lo, hi) = (BCE_CLAMP, 1.0 - BCE_CLAMP);
    let scale = grad.to_f64() / pred.len() as f64;
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            let (p, y) = (p.to_f64(), y.to_f64());
            if p > lo && p < hi {
                T::from_f64(scale * (-y / p + (1.0 - y) / (1.0 - p)))
            } else {
                T::ZERO
            }
        })
        .collect();
    Tensor::from_vec(pred.shape(), data).expect("same shape")
}

/// Mean binary cross-entropy evaluated on logits, fused with the sigmoid.
pub fn bce_with_logits<T: Element>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    same_shape(logits, target, "bce_with_logits")?;
    let total: f64 = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &y)| {
            let (z, y) = (z.to_f64(), y.to_f64());
            z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
        })
        .sum();
    Ok(total / logits.len() as f64)
}

pub fn bce_with_logits_backward<T: Element>(logits: &Tensor<T>, target: &Tensor<T>, grad: T) -> Tensor<T> {
    let scale = grad.to_f64() / logits.len() as f64;
    let data = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &y)| T::from_f64(scale * (sigmoid_scalar(z.to_f64()) - y.to_f64())))
        .collect();
    Tensor::from_vec(logits.shape(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: [usize; 4], v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn conv_zero_kernel_broadcasts_bias() {
        let x = t([1, 1, 2, 2], &[1., 2., 3., 4.]);
        let w = Tensor::zeros([1, 1, 3, 3]);
        let b = t([1, 1, 1, 1], &[0.5]);
        let y = conv2d(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[0.5; 4]);
    }

    #[test]
    fn conv_ones_kernel_sums_padded_window() {
        let x = t([1, 1, 2, 2], &[1., 2., 3., 4.]);
        let w = Tensor::full([1, 1, 3, 3], 1.0);
        let y = conv2d(&x, &w, &Tensor::zeros([1, 1, 1, 1])).unwrap();
        assert_eq!(y.data(), &[10.0; 4]);
    }

    #[test]
    fn conv_unit_kernel_is_identity() {
        let x = t([1, 1, 2, 2], &[1., 2., 3., 4.]);
        let y = conv2d(&x, &Tensor::full([1, 1, 1, 1], 1.0), &Tensor::zeros([1, 1, 1, 1])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_rejects_channel_mismatch_and_even_kernels() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]);
        let b = Tensor::zeros([1, 1, 1, 1]);
        assert!(matches!(
            conv2d(&x, &Tensor::zeros([1, 3, 3, 3]), &b),
            Err(Error::Contract(_))
        ));
        assert!(conv2d(&x, &Tensor::zeros([1, 2, 2, 2]), &b).is_err());
    }

    #[test]
    fn transpose_scatters_single_pixel() {
        let x = t([1, 1, 1, 1], &[1.]);
        let w = t([1, 1, 2, 2], &[1., 2., 3., 4.]);
        let y = conv2d_transpose(&x, &w, &Tensor::zeros([1, 1, 1, 1])).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn transpose_zero_kernel_gives_bias_field() {
        let x = t([1, 1, 2, 3], &[1., 2., 3., 4., 5., 6.]);
        let y = conv2d_transpose(&x, &Tensor::zeros([1, 1, 2, 2]), &t([1, 1, 1, 1], &[-0.25])).unwrap();
        assert_eq!(y.shape(), Shape4::new(1, 1, 4, 6));
        assert!(y.data().iter().all(|&v| v == -0.25));
    }

    #[test]
    fn transpose_places_top_left_block() {
        let x = t([1, 1, 2, 2], &[1., 0., 0., 0.]);
        let y = conv2d_transpose(&x, &Tensor::full([1, 1, 2, 2], 1.0), &Tensor::zeros([1, 1, 1, 1])).unwrap();
        #[rustfmt::skip]
        let expected = [
            1., 1., 0., 0.,
            1., 1., 0., 0.,
            0., 0., 0., 0.,
            0., 0., 0., 0.,
        ];
        assert_eq!(y.data(), &expected);
    }

    #[test]
    fn maxpool_examples() {
        let (y, r) = maxpool2(&t([1, 1, 2, 2], &[1., 2., 3., 4.])).unwrap();
        assert_eq!(y.data(), &[4.]);
        assert_eq!(r, vec![3]);

        let (y, r) = maxpool2(&t([1, 1, 2, 2], &[7.; 4])).unwrap();
        assert_eq!(y.data(), &[7.]);
        assert_eq!(r, vec![0]);

        #[rustfmt::skip]
        let x = t([1, 1, 4, 4], &[
            5., 1., 2., 0.,
            0., 0., 0., 3.,
            9., 9., 1., 1.,
            9., 9., 1., 1.,
        ]);
        let (y, r) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[5., 3., 9., 1.]);
        assert_eq!(r, vec![0, 7, 8, 10]);
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        assert!(maxpool2(&Tensor::<f32>::zeros([1, 1, 3, 4])).is_err());
    }

    #[test]
    fn concat_shapes_and_split() {
        let a = Tensor::<f64>::from_fn([2, 3, 2, 2], |[n, c, y, x]| (n * 100 + c * 10 + y * 2 + x) as f64);
        let b = Tensor::<f64>::from_fn([2, 5, 2, 2], |[n, c, y, x]| -((n * 100 + c * 10 + y * 2 + x) as f64));
        let cat = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), Shape4::new(2, 8, 2, 2));
        let parts = split_channels(&cat, &[3, 5]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        assert_eq!(concat_channels(&[&a]).unwrap(), a);
        assert!(concat_channels(&[&a, &Tensor::zeros([2, 1, 4, 2])]).is_err());
    }

    #[test]
    fn activations() {
        let x = t([1, 1, 1, 3], &[-1., 0., 2.]);
        assert_eq!(relu(&x).data(), &[0., 0., 2.]);
        let g = relu_backward(&x, &Tensor::full([1, 1, 1, 3], 1.0));
        assert_eq!(g.data(), &[0., 0., 1.]);

        let s = sigmoid(&t([1, 1, 1, 1], &[0.]));
        assert_eq!(s.data(), &[0.5]);
        let g = sigmoid_backward(&s, &Tensor::scalar(1.0));
        assert_eq!(g.data(), &[0.25]);

        let extreme = sigmoid(&t([1, 1, 1, 4], &[-30., 30., -700., 700.]));
        assert!(extreme.data().iter().all(|v| v.is_finite()));
        assert!(extreme.data()[0] > 0.0 && extreme.data()[1] < 1.0);
    }

    #[test]
    fn bce_examples() {
        let p = Tensor::full([1, 1, 2, 2], 0.5f64);
        let y = t([1, 1, 2, 2], &[0., 1., 1., 0.]);
        assert!((bce(&p, &y).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);

        let l = bce(&y, &y).unwrap();
        assert!(l <= -(1.0f64 - 1e-7).ln() + 1e-15, "{l}");

        let p = t([1, 1, 1, 2], &[0.9, 0.1]);
        let y = t([1, 1, 1, 2], &[1., 0.]);
        assert!((bce(&p, &y).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);

        assert!(bce(&p, &Tensor::zeros([1, 1, 2, 1])).is_err());
    }

    #[test]
    fn fused_bce_agrees_with_sigmoid_then_bce() {
        let z = t([1, 1, 1, 4], &[-3., -0.2, 0.7, 4.]);
        let y = t([1, 1, 1, 4], &[0., 1., 1., 0.]);
        let a = bce_with_logits(&z, &y).unwrap();
        let b = bce(&sigmoid(&z), &y).unwrap();
        assert!((a - b).abs() < 1e-12);
        let big = t([1, 1, 1, 2], &[800., -800.]);
        assert!(bce_with_logits(&big, &t([1, 1, 1, 2], &[0., 1.])).unwrap().is_finite());
    }
}

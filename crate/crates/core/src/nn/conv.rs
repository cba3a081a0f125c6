//! Stride-1 2-D cross-correlations over `[N, H, W, C]` feature maps.
//!
//! No kernel flip and no bias. Kernel layouts:
//! standard `[Hk, Wk, Ci, Co]`, depthwise `[Hk, Wk, C]`, pointwise `[1, 1, Ci, Co]`.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Same,
    Valid,
}

struct Geom {
    n: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    hk: usize,
    wk: usize,
    pad_h: usize,
    pad_w: usize,
}

/// One contiguous run of output pixels paired with the input pixels a kernel tap reads.
struct Span {
    out_px: usize,
    in_px: usize,
    len: usize,
    tap: usize,
}

impl Geom {
    fn new(input: &Tensor, hk: usize, wk: usize, padding: Padding) -> Result<(Geom, usize)> {
        let (n, h, w, c) = input.as_batched()?;
        let (ho, wo, pad_h, pad_w) = match padding {
            Padding::Same => {
                if hk % 2 == 0 || wk % 2 == 0 {
                    return shape_err(format!("same padding needs odd kernel, got {hk}x{wk}"));
                }
                (h, w, hk / 2, wk / 2)
            }
            Padding::Valid => {
                if hk > h || wk > w {
                    return shape_err(format!("kernel {hk}x{wk} larger than input {h}x{w}"));
                }
                (h - hk + 1, w - wk + 1, 0, 0)
            }
        };
        Ok((
            Geom {
                n,
                h,
                w,
                ho,
                wo,
                hk,
                wk,
                pad_h,
                pad_w,
            },
            c,
        ))
    }

    fn out_shape(&self, input: &Tensor, c: usize) -> Vec<usize> {
        if input.rank() == 3 {
            vec![self.ho, self.wo, c]
        } else {
            vec![self.n, self.ho, self.wo, c]
        }
    }

    /// Visits, per output row and kernel tap, the maximal in-bounds run of pixels.
    #[inline(always)]
    fn for_each_span(&self, mut f: impl FnMut(Span)) {
        for b in 0..self.n {
            for oy in 0..self.ho {
                for ky in 0..self.hk {
                    let iy = oy + ky;
                    if iy < self.pad_h || iy - self.pad_h >= self.h {
                        continue;
                    }
                    let iy = iy - self.pad_h;
                    for kx in 0..self.wk {
                        // output column ox reads input column ox + kx - pad_w
                        let lo = self.pad_w.saturating_sub(kx);
                        let hi = (self.w + self.pad_w - kx).min(self.wo);
                        if lo >= hi {
                            continue;
                        }
                        f(Span {
                            out_px: (b * self.ho + oy) * self.wo + lo,
                            in_px: (b * self.h + iy) * self.w + lo + kx - self.pad_w,
                            len: hi - lo,
                            tap: ky * self.wk + kx,
                        });
                    }
                }
            }
        }
    }
}

fn kernel4(kernel: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *kernel.shape() {
        [hk, wk, ci, co] => Ok((hk, wk, ci, co)),
        ref s => shape_err(format!("expected kernel [Hk,Wk,Ci,Co], got {s:?}")),
    }
}

// The kernels below take const channel counts so the common 1- and 16-channel
// cases unroll; `0` means "use the runtime count".

#[inline(always)]
fn pick(konst: usize, dynamic: usize) -> usize {
    if konst > 0 {
        konst
    } else {
        dynamic
    }
}

/// `dst[o] += sum_c src[c] * w[c][o]` for one pixel.
#[inline(always)]
fn mix_px<const CI: usize, const CO: usize>(
    dst: &mut [f64],
    src: &[f64],
    w: &[f64],
    ci: usize,
    co: usize,
) {
    let (ci, co) = (pick(CI, ci), pick(CO, co));
    let dst = &mut dst[..co];
    for c in 0..ci {
        let a = src[c];
        let row = &w[c * co..(c + 1) * co];
        for o in 0..co {
            dst[o] += a * row[o];
        }
    }
}

/// `gsrc[c] += sum_o gy[o] * w[c][o]` and `gw[c][o] += src[c] * gy[o]` for one pixel.
#[inline(always)]
fn mix_px_back<const CI: usize, const CO: usize>(
    gsrc: &mut [f64],
    gw: &mut [f64],
    src: &[f64],
    gy: &[f64],
    w: &[f64],
    ci: usize,
    co: usize,
) {
    let (ci, co) = (pick(CI, ci), pick(CO, co));
    let gy = &gy[..co];
    for c in 0..ci {
        let row = &w[c * co..(c + 1) * co];
        let grow = &mut gw[c * co..(c + 1) * co];
        let a = src[c];
        let mut acc = 0.0;
        for o in 0..co {
            acc += gy[o] * row[o];
            grow[o] += a * gy[o];
        }
        gsrc[c] += acc;
    }
}

fn standard_fwd<const CI: usize, const CO: usize>(
    g: &Geom,
    x: &[f64],
    k: &[f64],
    out: &mut [f64],
    ci: usize,
    co: usize,
) {
    let (ci, co) = (pick(CI, ci), pick(CO, co));
    g.for_each_span(|s| {
        let w = &k[s.tap * ci * co..(s.tap + 1) * ci * co];
        let dst = &mut out[s.out_px * co..(s.out_px + s.len) * co];
        let src = &x[s.in_px * ci..(s.in_px + s.len) * ci];
        for (d, a) in dst.chunks_exact_mut(co).zip(src.chunks_exact(ci)) {
            mix_px::<CI, CO>(d, a, w, ci, co);
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn standard_bwd<const CI: usize, const CO: usize>(
    g: &Geom,
    x: &[f64],
    k: &[f64],
    go: &[f64],
    gin: &mut [f64],
    gk: &mut [f64],
    ci: usize,
    co: usize,
) {
    let (ci, co) = (pick(CI, ci), pick(CO, co));
    g.for_each_span(|s| {
        let range = s.tap * ci * co..(s.tap + 1) * ci * co;
        let w = &k[range.clone()];
        let gw = &mut gk[range];
        let gy = &go[s.out_px * co..(s.out_px + s.len) * co];
        let src = &x[s.in_px * ci..(s.in_px + s.len) * ci];
        let gsrc = &mut gin[s.in_px * ci..(s.in_px + s.len) * ci];
        for ((gy, a), ga) in gy
            .chunks_exact(co)
            .zip(src.chunks_exact(ci))
            .zip(gsrc.chunks_exact_mut(ci))
        {
            mix_px_back::<CI, CO>(ga, gw, a, gy, w, ci, co);
        }
    });
}

pub fn conv2d_standard(input: &Tensor, kernel: &Tensor, padding: Padding) -> Result<Tensor> {
    let (hk, wk, ci, co) = kernel4(kernel)?;
    let (g, c) = Geom::new(input, hk, wk, padding)?;
    if c != ci {
        return shape_err(format!("input has {c} channels, kernel expects {ci}"));
    }
    let mut out = vec![0.0; g.n * g.ho * g.wo * co];
    let (x, k) = (input.data(), kernel.data());
    match (ci, co) {
        (1, 16) => standard_fwd::<1, 16>(&g, x, k, &mut out, ci, co),
        (16, 16) => standard_fwd::<16, 16>(&g, x, k, &mut out, ci, co),
        _ => standard_fwd::<0, 0>(&g, x, k, &mut out, ci, co),
    }
    Tensor::new(g.out_shape(input, co), out)
}

/// Returns `(grad_input, grad_kernel)`.
pub fn conv2d_standard_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    padding: Padding,
) -> Result<(Tensor, Tensor)> {
    let (hk, wk, ci, co) = kernel4(kernel)?;
    let (g, c) = Geom::new(input, hk, wk, padding)?;
    if c != ci || grad_out.len() != g.n * g.ho * g.wo * co {
        return shape_err("conv2d backward: gradient shape mismatch");
    }
    let mut gin = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernel.len()];
    let (x, k, go) = (input.data(), kernel.data(), grad_out.data());
    match (ci, co) {
        (1, 16) => standard_bwd::<1, 16>(&g, x, k, go, &mut gin, &mut gk, ci, co),
        (16, 16) => standard_bwd::<16, 16>(&g, x, k, go, &mut gin, &mut gk, ci, co),
        _ => standard_bwd::<0, 0>(&g, x, k, go, &mut gin, &mut gk, ci, co),
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gin)?,
        Tensor::new(kernel.shape().to_vec(), gk)?,
    ))
}

fn kernel_dw(kernel: &Tensor) -> Result<(usize, usize, usize)> {
    match *kernel.shape() {
        [hk, wk, c] => Ok((hk, wk, c)),
        ref s => shape_err(format!("expected depthwise kernel [Hk,Wk,C], got {s:?}")),
    }
}

fn depthwise_fwd<const C: usize>(g: &Geom, x: &[f64], k: &[f64], out: &mut [f64], c: usize) {
    let c = pick(C, c);
    g.for_each_span(|s| {
        let kk = &k[s.tap * c..(s.tap + 1) * c];
        let dst = &mut out[s.out_px * c..(s.out_px + s.len) * c];
        let src = &x[s.in_px * c..(s.in_px + s.len) * c];
        for (d, a) in dst.chunks_exact_mut(c).zip(src.chunks_exact(c)) {
            for ch in 0..c {
                d[ch] += a[ch] * kk[ch];
            }
        }
    });
}

#[allow(clippy::too_many_arguments)]
fn depthwise_bwd<const C: usize>(
    g: &Geom,
    x: &[f64],
    k: &[f64],
    go: &[f64],
    gin: &mut [f64],
    gk: &mut [f64],
    c: usize,
) {
    let c = pick(C, c);
    g.for_each_span(|s| {
        let kk = &k[s.tap * c..(s.tap + 1) * c];
        let gkk = &mut gk[s.tap * c..(s.tap + 1) * c];
        let gy = &go[s.out_px * c..(s.out_px + s.len) * c];
        let src = &x[s.in_px * c..(s.in_px + s.len) * c];
        let gsrc = &mut gin[s.in_px * c..(s.in_px + s.len) * c];
        for ((gy, a), ga) in gy
            .chunks_exact(c)
            .zip(src.chunks_exact(c))
            .zip(gsrc.chunks_exact_mut(c))
        {
            for ch in 0..c {
                ga[ch] += gy[ch] * kk[ch];
                gkk[ch] += gy[ch] * a[ch];
            }
        }
    });
}

pub fn conv2d_depthwise(input: &Tensor, kernel: &Tensor, padding: Padding) -> Result<Tensor> {
    let (hk, wk, kc) = kernel_dw(kernel)?;
    let (g, c) = Geom::new(input, hk, wk, padding)?;
    if c != kc {
        return shape_err(format!("input has {c} channels, depthwise kernel has {kc}"));
    }
    let mut out = vec![0.0; g.n * g.ho * g.wo * c];
    let (x, k) = (input.data(), kernel.data());
    match c {
        1 => depthwise_fwd::<1>(&g, x, k, &mut out, c),
        16 => depthwise_fwd::<16>(&g, x, k, &mut out, c),
        _ => depthwise_fwd::<0>(&g, x, k, &mut out, c),
    }
    Tensor::new(g.out_shape(input, c), out)
}

pub fn conv2d_depthwise_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    padding: Padding,
) -> Result<(Tensor, Tensor)> {
    let (hk, wk, c) = kernel_dw(kernel)?;
    let (g, ic) = Geom::new(input, hk, wk, padding)?;
    if ic != c || grad_out.len() != g.n * g.ho * g.wo * c {
        return shape_err("depthwise backward: gradient shape mismatch");
    }
    let mut gin = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernel.len()];
    let (x, k, go) = (input.data(), kernel.data(), grad_out.data());
    match c {
        1 => depthwise_bwd::<1>(&g, x, k, go, &mut gin, &mut gk, c),
        16 => depthwise_bwd::<16>(&g, x, k, go, &mut gin, &mut gk, c),
        _ => depthwise_bwd::<0>(&g, x, k, go, &mut gin, &mut gk, c),
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gin)?,
        Tensor::new(kernel.shape().to_vec(), gk)?,
    ))
}

fn kernel_pw(kernel: &Tensor) -> Result<(usize, usize)> {
    match *kernel.shape() {
        [1, 1, ci, co] => Ok((ci, co)),
        ref s => shape_err(format!("expected pointwise kernel [1,1,Ci,Co], got {s:?}")),
    }
}

fn pointwise_fwd<const CI: usize, const CO: usize>(
    x: &[f64],
    k: &[f64],
    out: &mut [f64],
    ci: usize,
    co: usize,
) {
    let (ci, co) = (pick(CI, ci), pick(CO, co));
    for (d, a) in out.chunks_exact_mut(co).zip(x.chunks_exact(ci)) {
        mix_px::<CI, CO>(d, a, k, ci, co);
    }
}

fn pointwise_bwd<const CI: usize, const CO: usize>(
    x: &[f64],
    k: &[f64],
    go: &[f64],
    gin: &mut [f64],
    gk: &mut [f64],
    ci: usize,
    co: usize,
) {
    let (ci, co) = (pick(CI, ci), pick(CO, co));
    for ((gy, a), ga) in go
        .chunks_exact(co)
        .zip(x.chunks_exact(ci))
        .zip(gin.chunks_exact_mut(ci))
    {
        mix_px_back::<CI, CO>(ga, gk, a, gy, k, ci, co);
    }
}

pub fn conv2d_pointwise(input: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    let (ci, co) = kernel_pw(kernel)?;
    let (n, h, w, c) = input.as_batched()?;
    if c != ci {
        return shape_err(format!(
            "input has {c} channels, pointwise kernel expects {ci}"
        ));
    }
    let mut out = vec![0.0; n * h * w * co];
    let (x, k) = (input.data(), kernel.data());
    match (ci, co) {
        (1, 16) => pointwise_fwd::<1, 16>(x, k, &mut out, ci, co),
        (16, 16) => pointwise_fwd::<16, 16>(x, k, &mut out, ci, co),
        _ => pointwise_fwd::<0, 0>(x, k, &mut out, ci, co),
    }
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = co;
    Tensor::new(shape, out)
}

pub fn conv2d_pointwise_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let (ci, co) = kernel_pw(kernel)?;
    let (n, h, w, c) = input.as_batched()?;
    if c != ci || grad_out.len() != n * h * w * co {
        return shape_err("pointwise backward: gradient shape mismatch");
    }
    let mut gin = vec![0.0; input.len()];
    let mut gk = vec![0.0; kernel.len()];
    let (x, k, go) = (input.data(), kernel.data(), grad_out.data());
    match (ci, co) {
        (1, 16) => pointwise_bwd::<1, 16>(x, k, go, &mut gin, &mut gk, ci, co),
        (16, 16) => pointwise_bwd::<16, 16>(x, k, go, &mut gin, &mut gk, ci, co),
        _ => pointwise_bwd::<0, 0>(x, k, go, &mut gin, &mut gk, ci, co),
    }
    Ok((
        Tensor::new(input.shape().to_vec(), gin)?,
        Tensor::new(kernel.shape().to_vec(), gk)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Direct nested-loop correlation with explicit bounds checks, independent of Geom.
    fn oracle_standard(x: &Tensor, k: &Tensor, padding: Padding) -> Vec<f64> {
        let (h, w, ci) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (hk, wk, _, co) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        let (ph, pw) = match padding {
            Padding::Same => (hk as isize / 2, wk as isize / 2),
            Padding::Valid => (0, 0),
        };
        let (ho, wo) = match padding {
            Padding::Same => (h, w),
            Padding::Valid => (h - hk + 1, w - wk + 1),
        };
        let at = |y: isize, xx: isize, c: usize| -> f64 {
            if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                0.0
            } else {
                x.data()[(y as usize * w + xx as usize) * ci + c]
            }
        };
        let mut out = Vec::new();
        for oy in 0..ho {
            for ox in 0..wo {
                for o in 0..co {
                    let mut s = 0.0;
                    for ky in 0..hk {
                        for kx in 0..wk {
                            for c in 0..ci {
                                let kv = k.data()[((ky * wk + kx) * ci + c) * co + o];
                                s += kv
                                    * at(
                                        oy as isize + ky as isize - ph,
                                        ox as isize + kx as isize - pw,
                                        c,
                                    );
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn ones_kernel_sums_neighbourhood() {
        let x = Tensor::filled(&[3, 3, 1], 1.0);
        let k = Tensor::filled(&[3, 3, 1, 1], 1.0);
        let y = conv2d_standard(&x, &k, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[3, 3, 1]);
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::uniform(&[4, 5, 1], -1.0, 1.0, &mut rng);
        let mut k = Tensor::zeros(&[3, 3, 1, 1]);
        k.data_mut()[4] = 1.0;
        assert_eq!(conv2d_standard(&x, &k, Padding::Same).unwrap(), x);
    }

    #[test]
    fn standard_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::uniform(&[5, 5, 2], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(&[3, 3, 2, 4], -1.0, 1.0, &mut rng);
        for pad in [Padding::Same, Padding::Valid] {
            let y = conv2d_standard(&x, &k, pad).unwrap();
            assert!(max_diff(y.data(), &oracle_standard(&x, &k, pad)) < 1e-12);
        }
        let y = conv2d_standard(&x, &k, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[3, 3, 4]);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::zeros(&[3, 3, 2]);
        assert!(conv2d_standard(&x, &Tensor::zeros(&[3, 3, 1, 1]), Padding::Same).is_err());
        assert!(conv2d_depthwise(&x, &Tensor::zeros(&[3, 3, 3]), Padding::Same).is_err());
        assert!(conv2d_pointwise(&x, &Tensor::zeros(&[1, 1, 3, 2])).is_err());
        assert!(conv2d_standard(&x, &Tensor::zeros(&[2, 2, 2, 1]), Padding::Same).is_err());
    }

    #[test]
    fn depthwise_isolates_channels() {
        let x = Tensor::from_fn(&[4, 4, 2], |i| if i % 2 == 0 { 1.0 } else { 0.0 });
        let k = Tensor::filled(&[3, 3, 2], 1.0);
        let y = conv2d_depthwise(&x, &k, Padding::Same).unwrap();
        assert!(y.data().iter().skip(1).step_by(2).all(|&v| v == 0.0));
        assert_eq!(y.data()[(4 + 1) * 2], 9.0);
    }

    #[test]
    fn depthwise_matches_per_channel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Tensor::uniform(&[6, 6, 3], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(&[3, 3, 3], -1.0, 1.0, &mut rng);
        let y = conv2d_depthwise(&x, &k, Padding::Same).unwrap();
        for c in 0..3 {
            let xc = Tensor::from_fn(&[6, 6, 1], |i| x.data()[i * 3 + c]);
            let kc = Tensor::from_fn(&[3, 3, 1, 1], |i| k.data()[i * 3 + c]);
            let want = oracle_standard(&xc, &kc, Padding::Same);
            let got: Vec<f64> = y.data().iter().skip(c).step_by(3).copied().collect();
            assert!(max_diff(&got, &want) < 1e-12);
        }
        let mut delta = Tensor::zeros(&[3, 3, 3]);
        delta.data_mut()[12..15].fill(1.0);
        assert_eq!(conv2d_depthwise(&x, &delta, Padding::Same).unwrap(), x);
    }

    #[test]
    fn pointwise_is_per_pixel_matmul() {
        let x = Tensor::new(vec![1, 1, 2], vec![3.0, 4.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 2, 1], vec![1.0, 2.0]).unwrap();
        assert_eq!(conv2d_pointwise(&x, &k).unwrap().data(), &[11.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::uniform(&[2, 4, 5, 3], -1.0, 1.0, &mut rng);
        let k = Tensor::uniform(&[1, 1, 3, 4], -1.0, 1.0, &mut rng);
        let y = conv2d_pointwise(&x, &k).unwrap();
        assert_eq!(y.shape(), &[2, 4, 5, 4]);
        let mut want = Vec::new();
        for p in 0..40 {
            for o in 0..4 {
                want.push(
                    (0..3)
                        .map(|c| x.data()[p * 3 + c] * k.data()[c * 4 + o])
                        .sum::<f64>(),
                );
            }
        }
        assert!(max_diff(y.data(), &want) < 1e-12);

        let eye = Tensor::from_fn(&[1, 1, 3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 });
        assert_eq!(conv2d_pointwise(&x, &eye).unwrap(), x);
    }

    #[test]
    fn delta_standard_equals_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::uniform(&[5, 6, 3], -1.0, 1.0, &mut rng);
        let pw = Tensor::uniform(&[1, 1, 3, 2], -1.0, 1.0, &mut rng);
        let mut std = Tensor::zeros(&[3, 3, 3, 2]);
        std.data_mut()[4 * 6..5 * 6].copy_from_slice(pw.data());
        let a = conv2d_standard(&x, &std, Padding::Same).unwrap();
        let b = conv2d_pointwise(&x, &pw).unwrap();
        assert!(max_diff(a.data(), b.data()) < 1e-12);
    }
}

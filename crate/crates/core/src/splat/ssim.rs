//! Structural similarity with an 11×11 Gaussian window (σ = 1.5), computed
//! over "valid" window positions only, plus its gradient with respect to the
//! first image.

use crate::grid::Grid;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;

fn kernel(size: usize) -> Vec<f64> {
    let r = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SIGMA * SIGMA)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn window_size(w: usize, h: usize) -> usize {
    let m = WINDOW.min(w).min(h);
    if m.is_multiple_of(2) {
        m - 1
    } else {
        m
    }
}

/// Valid-mode separable filter: output is `(w-ws+1) × (h-ws+1)`.
fn filter(img: &[f64], w: usize, h: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let ws = k.len();
    let ow = w + 1 - ws;
    let oh = h + 1 - ws;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * img[y * w + x + i];
            }
            tmp[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    (out, ow, oh)
}

/// Adjoint of [`filter`]: scatters a valid-mode map back to full size.
fn filter_adjoint(src: &[f64], ow: usize, oh: usize, k: &[f64]) -> Vec<f64> {
    let ws = k.len();
    let w = ow + ws - 1;
    let h = oh + ws - 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                tmp[(y + i) * ow + x] += kv * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for (i, kv) in k.iter().enumerate() {
                out[y * w + x + i] += kv * v;
            }
        }
    }
    out
}

struct ChannelStats {
    ssim_sum: f64,
    count: usize,
    grad: Option<Vec<f64>>,
}

fn channel(x: &[f64], y: &[f64], w: usize, h: usize, want_grad: bool) -> ChannelStats {
    let k = kernel(window_size(w, h));
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mux, ow, oh) = filter(x, w, h, &k);
    let (muy, ..) = filter(y, w, h, &k);
    let (exx, ..) = filter(&xx, w, h, &k);
    let (eyy, ..) = filter(&yy, w, h, &k);
    let (exy, ..) = filter(&xy, w, h, &k);
    let n = ow * oh;
    let mut sum = 0.0;
    let (mut da, mut db, mut dc) = if want_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for p in 0..n {
        let (mx, my) = (mux[p], muy[p]);
        let a1 = 2.0 * mx * my + C1;
        let a2 = 2.0 * (exy[p] - mx * my) + C2;
        let b1 = mx * mx + my * my + C1;
        let b2 = (exx[p] - mx * mx) + (eyy[p] - my * my) + C2;
        let s = a1 * a2 / (b1 * b2);
        sum += s;
        if want_grad {
            da[p] = s * (2.0 * my / a1 - 2.0 * my / a2 - 2.0 * mx / b1 + 2.0 * mx / b2);
            db[p] = -s / b2;
            dc[p] = 2.0 * s / a2;
        }
    }
    let grad = want_grad.then(|| {
        let ga = filter_adjoint(&da, ow, oh, &k);
        let gb = filter_adjoint(&db, ow, oh, &k);
        let gc = filter_adjoint(&dc, ow, oh, &k);
        (0..w * h).map(|q| ga[q] + 2.0 * x[q] * gb[q] + y[q] * gc[q]).collect()
    });
    ChannelStats {
        ssim_sum: sum,
        count: n,
        grad,
    }
}

fn split(img: &Grid<[f64; 3]>, c: usize) -> Vec<f64> {
    img.iter().map(|p| p[c]).collect()
}

/// Mean SSIM over the three channels.
pub fn ssim(a: &Grid<[f64; 3]>, b: &Grid<[f64; 3]>) -> f64 {
    ssim_with_grad(a, b, false).0
}

/// Mean SSIM and, optionally, `∂SSIM/∂a` per pixel and channel.
pub fn ssim_with_grad(a: &Grid<[f64; 3]>, b: &Grid<[f64; 3]>, want_grad: bool) -> (f64, Option<Grid<[f64; 3]>>) {
    assert_eq!((a.width(), a.height()), (b.width(), b.height()));
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Grid::new(w, h, [0.0; 3]));
    for c in 0..3 {
        let st = channel(&split(a, c), &split(b, c), w, h, want_grad);
        let norm = 3.0 * st.count as f64;
        total += st.ssim_sum / norm;
        if let (Some(g), Some(cg)) = (grad.as_mut(), st.grad) {
            for (px, v) in g.as_mut_slice().iter_mut().zip(cg) {
                px[c] = v / norm;
            }
        }
    }
    (total, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Grid<[f64; 3]> {
        Grid::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()])
    }

    #[test]
    fn identical_images_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(20, 16, &mut rng);
        assert!((ssim(&img, &img) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(14, 13, &mut rng);
        let b = random_image(14, 13, &mut rng);
        let (_, g) = ssim_with_grad(&a, &b, true);
        let g = g.unwrap();
        let h = 1e-6;
        for (x, y, c) in [(0, 0, 0), (5, 6, 1), (13, 12, 2), (7, 3, 0)] {
            let mut ap = a.clone();
            ap.get_mut(x, y)[c] += h;
            let mut am = a.clone();
            am.get_mut(x, y)[c] -= h;
            let fd = (ssim(&ap, &b) - ssim(&am, &b)) / (2.0 * h);
            let an = g.get(x, y)[c];
            assert!(
                (fd - an).abs() < 1e-6 * (1.0 + fd.abs()),
                "({x},{y},{c}) fd {fd} an {an}"
            );
        }
    }

    #[test]
    fn tiny_images_shrink_the_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(4, 6, &mut rng);
        let s = ssim(&a, &a);
        assert!((s - 1.0).abs() < 1e-12);
    }
}

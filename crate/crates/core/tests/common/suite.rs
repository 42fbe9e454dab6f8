//! Gradient checks shared by the numerics tests and the acceptance run.

use neural_cache::numerics::{finite_difference, random_tensor, GradCheck, Tape, Tensor, Var};
use neural_cache::training::FeatureExtractor;
use neural_cache::warp::{AblationFlags, CacheVars, WarpConfig, WarpInput, WarpNet};

fn weighted(tape: &Tape<'_, f64>, out: Var, seed: u64) -> Var {
    let w = random_tensor(&tape.shape(out), seed);
    let w = tape.constant(w);
    let p = tape.mul(out, w).unwrap();
    tape.sum(p)
}

fn fd(x: &Tensor<f64>, f: impl for<'t> Fn(&Tape<'t, f64>, Var) -> Var) -> GradCheck {
    finite_difference(x, 1e-5, f)
}

/// Every named check with its result.
pub fn gradient_checks() -> Vec<(&'static str, GradCheck)> {
    let mut out = Vec::new();
    let x = random_tensor(&[3, 7, 6], 1);
    let k = random_tensor(&[4, 3, 3, 3], 2);
    let b = random_tensor(&[4], 3);
    for (name, stride, pad) in [("conv input", 1, 1), ("conv input, stride 2", 2, 1)] {
        out.push((name, fd(&x, |t, v| {
            let (kc, bc) = (t.constant(k.clone()), t.constant(b.clone()));
            let y = t.conv2d(v, kc, Some(bc), stride, pad).unwrap();
            weighted(t, y, 4)
        })));
    }
    out.push(("conv kernel", fd(&k, |t, v| {
        let xc = t.constant(x.clone());
        let y = t.conv2d(xc, v, None, 2, 1).unwrap();
        weighted(t, y, 5)
    })));
    out.push(("conv bias", fd(&b, |t, v| {
        let (xc, kc) = (t.constant(x.clone()), t.constant(k.clone()));
        let y = t.conv2d(xc, kc, Some(v), 1, 0).unwrap();
        weighted(t, y, 6)
    })));
    out.push(("upconv input", fd(&x, |t, v| {
        let kc = t.constant(k.clone());
        let y = t.upconv2x(v, kc, None).unwrap();
        weighted(t, y, 7)
    })));
    out.push(("upconv kernel", fd(&k, |t, v| {
        let xc = t.constant(x.clone());
        let y = t.upconv2x(xc, v, None).unwrap();
        weighted(t, y, 8)
    })));
    let tex = random_tensor(&[4, 5, 6], 9);
    let uv = random_tensor(&[2, 7, 7], 10).map(|v| 0.5 + 0.6 * v);
    out.push(("bilinear sampling", fd(&tex, |t, v| {
        let y = t.grid_sample(v, &uv).unwrap();
        weighted(t, y, 11)
    })));
    let target = random_tensor(&[3, 7, 6], 12);
    let mask = random_tensor(&[1, 7, 6], 13).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
    out.push(("masked l1 loss", fd(&x, |t, v| {
        let g = t.constant(target.clone());
        t.l1_loss(v, g, Some(&mask)).unwrap()
    })));
    let img = random_tensor(&[3, 12, 12], 14).map(|v| 0.5 + 0.5 * v);
    let gt = random_tensor(&[3, 12, 12], 15).map(|v| 0.5 + 0.5 * v);
    let extractor = FeatureExtractor::new(16);
    out.push(("perceptual loss", fd(&img, |t, v| {
        let g = t.constant(gt.clone());
        extractor.distance(t, v, g).unwrap()
    })));
    out.extend(warp_checks());
    out
}

fn warp_checks() -> Vec<(&'static str, GradCheck)> {
    let frames = super::tiny_frames(3);
    let cfg = WarpConfig {
        embed: 4,
        base: 4,
        expr_dims: 4,
        cache_channels: [8, 12, 12],
        texture_channels: 16,
        use_c4: true,
        use_c5: true,
        flags: AblationFlags::FULL,
        seed: 3,
    };
    let net = WarpNet::new(cfg).unwrap();
    let caches = [random_tensor(&[8, 8, 8], 1), random_tensor(&[12, 16, 16], 2), random_tensor(&[12, 32, 32], 3)];
    let input = WarpInput::between(&frames[0], &frames[2]).unwrap();
    let run = |slot: usize, t: &Tape<'_, f64>, v: Var, param: Option<usize>| {
        let mut b = net.params.bind_cast(t);
        let mut cv = CacheVars {
            c3: t.constant(caches[0].clone()),
            c4: t.constant(caches[1].clone()),
            c5: t.constant(caches[2].clone()),
        };
        match (param, slot) {
            (Some(i), _) => b = b.with(i, v),
            (None, 0) => cv.c3 = v,
            (None, 1) => cv.c4 = v,
            _ => cv.c5 = v,
        }
        let y = net.forward(t, &b, cv, &input, None).unwrap();
        weighted(t, y, 20)
    };
    let mut out = Vec::new();
    for (i, name) in [(0, "warp head C3"), (1, "warp head C4"), (2, "warp head C5")] {
        out.push((name, fd(&caches[i], |t, v| run(i, t, v, None))));
    }
    for pname in ["w1.weight", "mlp.weight"] {
        let i = net.params.names().position(|n| n == pname).unwrap();
        let label = if pname == "w1.weight" { "warp head first layer" } else { "warp head pose embedding" };
        out.push((label, fd(&net.params.get(i).cast(), |t, v| run(0, t, v, Some(i)))));
    }
    out
}

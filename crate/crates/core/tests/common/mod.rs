#![allow(dead_code)]

use heartformer::diffcore::{relative_error, Graph, ParamStore, Tensor, Var};
use heartformer::geokernels::{dist2, LabeledPointCloud, Point3, NUM_CLASSES};
use heartformer::phantom::{build_model, PhantomParams, ShapeModel};
use heartformer::Result;
use rand::Rng;
use rand_distr::StandardNormal;
use heartformer::evalmetrics::{cd, hd, sa_cd};
use heartformer::geokernels::{adaptive_quotas, fps, fps_from_centroid, knn_group, KdTree};
use heartformer::rng::rng_from_seed;

pub const FD_STEP: f64 = 1e-6;

pub fn randn(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

/// Like [`randn`] but keeps every entry at least `gap` away from zero.
pub fn randn_off_zero(shape: &[usize], gap: f64, rng: &mut impl Rng) -> Tensor {
    randn(shape, rng).map(|x| if x.abs() < gap { x.signum() * gap + x } else { x })
}

pub type OpFn = dyn Fn(&mut Graph<'_>, &[Var]) -> Result<Var>;

fn weighted_loss(g: &mut Graph<'_>, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone())?;
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

/// Relative error between reverse-mode and central-difference gradients of
/// `Σ w ⊙ f(inputs)` with random weights `w`, over all inputs jointly.
pub fn op_gradient_error(inputs: &[Tensor], f: &OpFn, rng: &mut impl Rng) -> f64 {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone(), true).unwrap()).collect();
    let out = f(&mut g, &vars).unwrap();
    let weights = randn(g.shape(out), rng);
    let loss = weighted_loss(&mut g, out, &weights).unwrap();
    let grads = g.backward(loss).unwrap();
    let mut analytic = Vec::new();
    for (v, t) in vars.iter().zip(inputs) {
        match grads.input(*v) {
            Some(gr) => analytic.extend_from_slice(gr.data()),
            None => analytic.extend(std::iter::repeat(0.0).take(t.numel())),
        }
    }
    let eval = |xs: &[Tensor]| -> f64 {
        let mut g = Graph::new(&store);
        let vars: Vec<Var> = xs.iter().map(|t| g.input(t.clone(), false).unwrap()).collect();
        let out = f(&mut g, &vars).unwrap();
        let loss = weighted_loss(&mut g, out, &weights).unwrap();
        g.value(loss).item()
    };
    let mut numeric = Vec::new();
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].numel() {
            let x0 = xs[i].data()[j];
            xs[i].data_mut()[j] = x0 + FD_STEP;
            let up = eval(&xs);
            xs[i].data_mut()[j] = x0 - FD_STEP;
            let down = eval(&xs);
            xs[i].data_mut()[j] = x0;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}

/// Central differences of a scalar function of every parameter entry.
pub fn param_fd(store: &mut ParamStore, mut loss: impl FnMut(&ParamStore) -> f64) -> Vec<f64> {
    let ids: Vec<_> = store.ids().collect();
    let mut out = Vec::new();
    for id in ids {
        let base = store.get(id).clone();
        for j in 0..base.numel() {
            let mut t = base.clone();
            t.data_mut()[j] += FD_STEP;
            store.set(id, t.clone()).unwrap();
            let up = loss(store);
            t.data_mut()[j] -= 2.0 * FD_STEP;
            store.set(id, t).unwrap();
            let down = loss(store);
            out.push((up - down) / (2.0 * FD_STEP));
        }
        store.set(id, base).unwrap();
    }
    out
}

pub fn random_cloud(n: usize, classes: u8, rng: &mut impl Rng) -> LabeledPointCloud {
    let pts = (0..n)
        .map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)])
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    LabeledPointCloud::new(pts, labels).unwrap()
}

/// Points on a small integer lattice, so distance ties are common.
pub fn lattice_cloud(n: usize, rng: &mut impl Rng) -> LabeledPointCloud {
    let pts = (0..n)
        .map(|_| [rng.gen_range(0..4) as f64, rng.gen_range(0..4) as f64, rng.gen_range(0..2) as f64])
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..NUM_CLASSES as u8)).collect();
    LabeledPointCloud::new(pts, labels).unwrap()
}

/// Textbook FPS: keep a selected set, rescan every candidate's distance to
/// the whole set each round; ties go to the lowest index.
pub fn brute_fps(points: &[Point3], n: usize, start: usize) -> Vec<usize> {
    let mut sel = vec![start];
    while sel.len() < n {
        let mut best = None;
        let mut best_d = -1.0;
        for i in 0..points.len() {
            if sel.contains(&i) {
                continue;
            }
            let d = sel.iter().map(|&s| dist2(&points[i], &points[s])).fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = Some(i);
            }
        }
        sel.push(best.unwrap());
    }
    sel
}

/// First `k` indices by `(distance, index)`.
pub fn brute_knn(points: &[Point3], q: &Point3, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (dist2(p, q), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

fn brute_directed(a: &[Point3], b: &[Point3]) -> Vec<f64> {
    a.iter()
        .map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min).sqrt())
        .collect()
}

pub fn brute_cd(a: &[Point3], b: &[Point3]) -> f64 {
    let ab = brute_directed(a, b);
    let ba = brute_directed(b, a);
    0.5 * (ab.iter().sum::<f64>() / ab.len() as f64 + ba.iter().sum::<f64>() / ba.len() as f64)
}

pub fn brute_hd(a: &[Point3], b: &[Point3]) -> f64 {
    brute_directed(a, b)
        .into_iter()
        .chain(brute_directed(b, a))
        .fold(0.0, f64::max)
}

/// SA-CD straight from the definition: per shared class, half the sum of the
/// two directed mean distances, averaged over shared classes.
pub fn brute_sa_cd(pred: &LabeledPointCloud, gt: &LabeledPointCloud) -> f64 {
    let mut total = 0.0;
    let mut k = 0;
    for c in 0..NUM_CLASSES as u8 {
        let p = pred.class_points(c);
        let g = gt.class_points(c);
        if p.is_empty() || g.is_empty() {
            continue;
        }
        total += brute_cd(&p, &g);
        k += 1;
    }
    total / k as f64
}

pub fn small_model() -> ShapeModel {
    build_model(
        7,
        &PhantomParams {
            rings: 10,
            segments: 16,
            num_modes: 5,
            ..PhantomParams::default()
        },
    )
    .unwrap()
}

type InputGen = fn(&mut heartformer::rng::Rng) -> Vec<Tensor>;

/// One differentiable op with a generator of random inputs.
pub struct OpCase {
    pub name: &'static str,
    pub inputs: InputGen,
    pub f: Box<OpFn>,
}

fn case(name: &'static str, inputs: InputGen, f: impl Fn(&mut Graph<'_>, &[Var]) -> Result<Var> + 'static) -> OpCase {
    OpCase {
        name,
        inputs,
        f: Box::new(f),
    }
}

fn dims(rng: &mut heartformer::rng::Rng) -> (usize, usize, usize) {
    (rng.gen_range(1..5), rng.gen_range(1..5), rng.gen_range(1..5))
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("matmul", |r| { let (m, k, n) = dims(r); vec![randn(&[m, k], r), randn(&[k, n], r)] }, |g, v| g.matmul(v[0], v[1])),
        case("matmul_nt", |r| { let (m, k, n) = dims(r); vec![randn(&[m, k], r), randn(&[n, k], r)] }, |g, v| g.matmul_nt(v[0], v[1])),
        case("add", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r), randn(&[m, n], r)] }, |g, v| g.add(v[0], v[1])),
        case("add_broadcast", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r), randn(&[n], r)] }, |g, v| g.add(v[0], v[1])),
        case("sub", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r), randn(&[n], r)] }, |g, v| g.sub(v[0], v[1])),
        case("mul", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r), randn(&[m, n], r)] }, |g, v| g.mul(v[0], v[1])),
        case("concat_rows", |r| { let (a, b, n) = dims(r); vec![randn(&[a, n], r), randn(&[b, n], r)] }, |g, v| g.concat(v, 0)),
        case("concat_cols", |r| { let (m, a, b) = dims(r); vec![randn(&[m, a], r), randn(&[m, b], r)] }, |g, v| g.concat(v, 1)),
        case("relu", |r| { let (m, n, _) = dims(r); vec![randn_off_zero(&[m, n], 1e-3, r)] }, |g, v| g.relu(v[0])),
        case("max_reduce_0", |r| { let (a, b, c) = dims(r); vec![randn(&[a + 1, b, c], r)] }, |g, v| g.max_reduce(v[0], 0)),
        case("max_reduce_1", |r| { let (a, b, c) = dims(r); vec![randn(&[a, b + 1, c], r)] }, |g, v| g.max_reduce(v[0], 1)),
        case("softmax_0", |r| { let (m, n, _) = dims(r); vec![randn(&[m + 1, n], r)] }, |g, v| g.softmax(v[0], 0)),
        case("softmax_1", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n + 1], r)] }, |g, v| g.softmax(v[0], 1)),
        case("scale", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r)] }, |g, v| g.scale(v[0], -1.7)),
        case("gather_rows", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r)] }, |g, v| {
            let rows = g.shape(v[0])[0];
            let idx: Vec<usize> = (0..2 * rows + 1).map(|i| (i * 7 + 3) % rows).collect();
            g.gather_rows(v[0], &idx)
        }),
        case("reshape", |r| { let (m, n, _) = dims(r); vec![randn(&[m, 2 * n], r)] }, |g, v| {
            let s = g.shape(v[0]).to_vec();
            g.reshape(v[0], &[s[1] / 2, s[0] * 2])
        }),
        case("transpose", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r)] }, |g, v| g.transpose(v[0])),
        case("slice_cols", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n + 2], r)] }, |g, v| {
            let c = g.shape(v[0])[1];
            g.slice_cols(v[0], 1, c - 2)
        }),
        case("sum", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r)] }, |g, v| g.sum(v[0])),
        case("mean", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n], r)] }, |g, v| g.mean(v[0])),
        case("layer_norm", |r| { let (m, n, _) = dims(r); vec![randn(&[m, n + 2], r), randn(&[n + 2], r), randn(&[n + 2], r)] }, |g, v| g.layer_norm(v[0], v[1], v[2])),
    ]
}

/// Worst relative error of each op over `trials` random inputs.
pub fn op_suite(trials: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = heartformer::rng::rng_from_seed(seed);
    op_cases()
        .iter()
        .map(|c| {
            let worst = (0..trials)
                .map(|_| op_gradient_error(&(c.inputs)(&mut rng), c.f.as_ref(), &mut rng))
                .fold(0.0, f64::max);
            (c.name, worst)
        })
        .collect()
}

/// Gradient error of SA-CD with respect to predicted coordinates.
pub fn sa_cd_gradient_error(rng: &mut heartformer::rng::Rng) -> f64 {
    let pred = random_cloud(rng.gen_range(4..24), 3, rng);
    let gt = random_cloud(rng.gen_range(4..24), 3, rng);
    let labels = pred.labels().to_vec();
    let coords = Tensor::new(vec![pred.len(), 3], pred.points().iter().flatten().copied().collect()).unwrap();
    let gt2 = gt.clone();
    let f = move |g: &mut Graph<'_>, v: &[Var]| -> Result<Var> {
        let (loss, _) = heartformer::evalmetrics::sa_cd_node(g, v[0], &labels, &gt2)?;
        g.scale(loss, 1.0)
    };
    op_gradient_error(&[coords], &f, rng)
}

/// Gradient error of the full toy network loss with respect to every
/// parameter, on a phantom-derived 64-point input.
pub fn network_gradient_error(seed: u64) -> f64 {
    use heartformer::acquisition::{make_record, MisalignmentLevel, RecordSpec};
    use heartformer::evalmetrics::StageMask;
    use heartformer::heartformer::{HeartFormer, Mode, ModelConfig};

    let spec = RecordSpec {
        sparse_points: 64,
        dense_points: 256,
        surface_points: 4000,
        ..RecordSpec::desk()
    };
    let rec = make_record(&small_model(), &spec, MisalignmentLevel::Mild, seed).unwrap();
    let cfg = ModelConfig {
        init_seed: seed,
        offset_init_std: 0.05,
        ..ModelConfig::toy()
    };
    let mut model = HeartFormer::new(cfg).unwrap();
    let grads = {
        let mut g = Graph::new(&model.params);
        let out = model.forward_graph(&mut g, &rec.sparse, Mode::Eval).unwrap();
        let (loss, _) = model.loss_graph(&mut g, &out, &rec.dense_gt, StageMask::ALL).unwrap();
        g.backward(loss).unwrap()
    };
    let analytic: Vec<f64> = model
        .params
        .ids()
        .flat_map(|id| match grads.param(id) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; model.params.get(id).numel()],
        })
        .collect();
    let mut store = std::mem::take(&mut model.params);
    let numeric = param_fd(&mut store, |p| {
        let mut g = Graph::new(p);
        let out = model.forward_graph(&mut g, &rec.sparse, Mode::Eval).unwrap();
        let (loss, _) = model.loss_graph(&mut g, &out, &rec.dense_gt, StageMask::ALL).unwrap();
        g.value(loss).item()
    });
    relative_error(&analytic, &numeric)
}

// Oracle comparisons; each panics on the first mismatch.

fn brute_centroid_start(points: &[Point3]) -> usize {
    let n = points.len() as f64;
    let c = [0, 1, 2].map(|a| points.iter().map(|p| p[a]).sum::<f64>() / n);
    brute_knn(points, &c, 1)[0]
}

pub fn fps_oracle(cases: usize, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for t in 0..cases {
        let n = rng.gen_range(1..=64);
        let cloud = if t % 2 == 0 { random_cloud(n, 6, &mut rng) } else { lattice_cloud(n, &mut rng) };
        let m = rng.gen_range(1..=n);
        let start = rng.gen_range(0..n);
        assert_eq!(fps(&cloud, m, start).unwrap(), brute_fps(cloud.points(), m, start), "case {t}");
        let s = brute_centroid_start(cloud.points());
        assert_eq!(fps_from_centroid(&cloud, m).unwrap(), brute_fps(cloud.points(), m, s), "case {t}");
    }
}

pub fn knn_oracle(cases: usize, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for t in 0..cases {
        let n = rng.gen_range(1..=64);
        let cloud = if t % 2 == 0 { random_cloud(n, 6, &mut rng) } else { lattice_cloud(n, &mut rng) };
        let k = rng.gen_range(1..=n);
        let centroids: Vec<Point3> = (0..rng.gen_range(1..8))
            .map(|_| if rng.gen_bool(0.5) { cloud.point(rng.gen_range(0..n)) } else { [rng.gen_range(-10.0..10.0); 3] })
            .collect();
        let labels = vec![0u8; centroids.len()];
        let g = knn_group(&cloud, &centroids, &labels, k).unwrap();
        for (j, c) in centroids.iter().enumerate() {
            let want = brute_knn(cloud.points(), c, k);
            assert_eq!(g.neighbors(j), want.as_slice(), "case {t}");
            for (i, &idx) in want.iter().enumerate() {
                let p = cloud.point(idx);
                assert_eq!(g.offsets[j * k + i], [p[0] - c[0], p[1] - c[1], p[2] - c[2]]);
                assert_eq!(g.neighbor_labels[j * k + i], cloud.label(idx));
            }
        }
    }
}

pub fn kdtree_oracle(cases: usize, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for _ in 0..cases {
        let cloud = lattice_cloud(rng.gen_range(1..=64), &mut rng);
        let tree = KdTree::new(cloud.points());
        let q = [rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..5.0), rng.gen_range(-1.0..3.0)];
        assert_eq!(tree.nearest(&q).unwrap().0, brute_knn(cloud.points(), &q, 1)[0]);
    }
}

pub fn metric_oracle(cases: usize, seed: u64) {
    let mut rng = rng_from_seed(seed);
    for t in 0..cases {
        let p = random_cloud(rng.gen_range(1..=64), 3, &mut rng);
        let g = random_cloud(rng.gen_range(1..=64), 3, &mut rng);
        assert_eq!(cd(&p, &g, None).unwrap(), brute_cd(p.points(), g.points()), "case {t}");
        assert_eq!(hd(&p, &g, None).unwrap(), brute_hd(p.points(), g.points()), "case {t}");
        for c in 0..3u8 {
            let (pc, gc) = (p.class_points(c), g.class_points(c));
            if pc.is_empty() || gc.is_empty() {
                assert!(cd(&p, &g, Some(c)).is_err());
            } else {
                assert_eq!(cd(&p, &g, Some(c)).unwrap(), brute_cd(&pc, &gc));
                assert_eq!(hd(&p, &g, Some(c)).unwrap(), brute_hd(&pc, &gc));
            }
        }
        let shared = (0..3u8).any(|c| !p.class_points(c).is_empty() && !g.class_points(c).is_empty());
        if shared {
            let v = sa_cd(&p, &g).unwrap().value;
            assert!((v - brute_sa_cd(&p, &g)).abs() <= 1e-12 * v.max(1.0), "case {t}");
        }
    }
}

/// Quotas by direct evaluation: ratios and floors exactly, then the capped
/// allocation's defining properties.
pub fn check_quotas(counts: [usize; NUM_CLASSES], alpha: f64, n_s: usize) {
    let plan = adaptive_quotas(&counts, alpha, n_s).unwrap();
    let w: Vec<f64> = counts
        .iter()
        .map(|&n| if n > 0 { (n as f64).powf(-alpha) } else { 0.0 })
        .collect();
    let sum: f64 = w.iter().sum();
    for c in 0..NUM_CLASSES {
        let r = w[c] / sum;
        assert_eq!(plan.ratios[c], r);
        assert_eq!(plan.floor_quotas[c], (r * n_s as f64).floor() as usize);
        assert!(plan.quotas[c] <= counts[c]);
    }
    let available: usize = counts.iter().sum();
    assert_eq!(plan.assigned(), n_s.min(available));
    let unclipped = (0..NUM_CLASSES).all(|c| plan.floor_quotas[c] + 1 <= counts[c] || counts[c] == 0);
    if unclipped && n_s <= available {
        for c in 0..NUM_CLASSES {
            let extra = plan.quotas[c] as i64 - plan.floor_quotas[c] as i64;
            assert!((0..=1).contains(&extra), "{counts:?} α={alpha} n={n_s}: {:?}", plan.quotas);
        }
    }
}

pub fn quota_oracle(cases: usize, seed: u64) {
    let mut rng = rng_from_seed(seed);
    let mut done = 0;
    while done < cases {
        let counts: [usize; NUM_CLASSES] = std::array::from_fn(|_| if rng.gen_bool(0.15) { 0 } else { rng.gen_range(1..2000) });
        if counts.iter().all(|&c| c == 0) {
            continue;
        }
        let alpha = [0.0, 0.25, 0.5, 1.0, 2.0][rng.gen_range(0..5)];
        check_quotas(counts, alpha, rng.gen_range(1..3000));
        done += 1;
    }
}


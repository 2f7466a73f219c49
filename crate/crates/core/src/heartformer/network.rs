use super::config::ModelConfig;
use super::layers::{AttentionBlock, Builder, Linear, Mlp};
use crate::diffcore::{Graph, ParamStore, Tensor, Var};
use crate::evalmetrics::{sa_cd_node, SaCd, StageMask};
use crate::geokernels::{
    adaptive_quotas, class_balanced_fps, fps_from_centroid, jitter, knn_group_with, GroupedNeighborhood, KdTree,
    LabeledPointCloud, Point3, GROUP_FEATURE_WIDTH, NUM_CLASSES,
};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Width of a point row `[(p − c)/s, onehot(label)]`.
const POINT_FEATURE_WIDTH: usize = 3 + NUM_CLASSES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Global key points are jittered with a stream keyed by `jitter_seed`.
    Train { jitter_seed: u64 },
    Eval,
}

/// Labeled predictions at every stage plus the encoder feature maps.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOutput {
    pub p_coarse: LabeledPointCloud,
    pub p_mid: LabeledPointCloud,
    pub p_fine: LabeledPointCloud,
    /// `N_c/2 × C` each.
    pub f_glo: Tensor,
    pub f_sub: Tensor,
}

impl StageOutput {
    pub fn stages(&self) -> [&LabeledPointCloud; 3] {
        [&self.p_coarse, &self.p_mid, &self.p_fine]
    }
}

/// Graph handles of one forward pass.
pub struct GraphOutput {
    pub coarse: Var,
    pub mid: Var,
    pub fine: Var,
    pub f_glo: Var,
    pub f_sub: Var,
    pub coarse_labels: Vec<u8>,
    pub mid_labels: Vec<u8>,
    pub fine_labels: Vec<u8>,
}

/// Key points of one encoder branch.
#[derive(Clone, Debug, PartialEq)]
pub struct Keypoints {
    /// Points as emitted into the coarse cloud (jittered for the global
    /// branch in training).
    pub points: LabeledPointCloud,
    pub groups: GroupedNeighborhood,
}

/// Geometric preprocessing shared by both branches: FPS / class-balanced
/// FPS, jitter, and kNN grouping.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub center: Point3,
    pub glo: Keypoints,
    pub sub: Keypoints,
}

impl Sampled {
    pub fn coarse(&self) -> LabeledPointCloud {
        self.glo.points.concat(&self.sub.points)
    }
}

/// Concatenates the two key point halves along the point axis.
pub fn fuse_coarse(glo: &LabeledPointCloud, sub: &LabeledPointCloud) -> Result<LabeledPointCloud> {
    if glo.len() != sub.len() {
        return Err(Error::invalid(format!(
            "coarse halves differ in size: {} vs {}",
            glo.len(),
            sub.len()
        )));
    }
    Ok(glo.concat(sub))
}

struct Encoder {
    local: Mlp,
    pos: Mlp,
    blocks: Vec<AttentionBlock>,
}

impl Encoder {
    fn new(b: &mut Builder<'_>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.c;
        Ok(Encoder {
            local: Mlp::new(b, &format!("{name}.mlp"), &[GROUP_FEATURE_WIDTH, c, c])?,
            pos: Mlp::new(b, &format!("{name}.pos"), &[POINT_FEATURE_WIDTH, c, c])?,
            blocks: (0..cfg.depth)
                .map(|i| AttentionBlock::new(b, &format!("{name}.t{i}"), c, cfg.heads, cfg.ffn_mult, false))
                .collect::<Result<_>>()?,
        })
    }

    /// `T[max_k MLP(groups) + pos(points)]`.
    fn forward(&self, g: &mut Graph<'_>, kp: &Keypoints, center: Point3, cfg: &ModelConfig) -> Result<Var> {
        let n = kp.groups.num_groups();
        let k = kp.groups.k;
        let feats = g.constant(Tensor::new(
            vec![n * k, GROUP_FEATURE_WIDTH],
            group_features(&kp.groups, center, cfg.coord_scale_mm),
        )?)?;
        let h = self.local.forward(g, feats)?;
        let h = g.reshape(h, &[n, k, cfg.c])?;
        let pooled = g.max_reduce(h, 1)?;
        let pts = g.constant(point_features(&kp.points, center, cfg.coord_scale_mm)?)?;
        let pe = self.pos.forward(g, pts)?;
        let mut x = g.add(pooled, pe)?;
        for blk in &self.blocks {
            x = blk.forward(g, x, None)?;
        }
        Ok(x)
    }
}

/// The two-branch encoder and the two refinement stages.
pub struct HeartFormer {
    pub config: ModelConfig,
    pub params: ParamStore,
    glo: Encoder,
    sub: Encoder,
    phi_e: Mlp,
    phi_g: Mlp,
    phi_s: Mlp,
    maa_g: AttentionBlock,
    maa_s: AttentionBlock,
    head1: Mlp,
    phi_e2: Mlp,
    parent2: Linear,
    maa2: AttentionBlock,
    head2: Mlp,
}

impl HeartFormer {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let cfg = &config;
        let c = cfg.c;
        let mut b = Builder {
            store: &mut params,
            rng: rng_from_seed(cfg.init_seed),
        };
        let glo = Encoder::new(&mut b, "glo", cfg)?;
        let sub = Encoder::new(&mut b, "sub", cfg)?;
        let phi_e = Mlp::new(&mut b, "s1.phi_e", &[POINT_FEATURE_WIDTH, c, c])?;
        let phi_g = Mlp::new(&mut b, "s1.phi_g", &[c, c, c])?;
        let phi_s = Mlp::new(&mut b, "s1.phi_s", &[c, c, c])?;
        let maa_g = AttentionBlock::new(&mut b, "s1.maa_g", c, cfg.heads, cfg.ffn_mult, true)?;
        let maa_s = AttentionBlock::new(&mut b, "s1.maa_s", c, cfg.heads, cfg.ffn_mult, true)?;
        let head1 = Mlp::with_last_std(&mut b, "s1.offset", &[2 * c, c, 3 * cfg.up1], cfg.offset_init_std)?;
        let phi_e2 = Mlp::new(&mut b, "s2.phi_e", &[POINT_FEATURE_WIDTH, c, c])?;
        let parent2 = Linear::glorot(&mut b, "s2.parent", 2 * c, c)?;
        let maa2 = AttentionBlock::new(&mut b, "s2.maa", c, cfg.heads, cfg.ffn_mult, true)?;
        let head2 = Mlp::with_last_std(&mut b, "s2.offset", &[2 * c, c, 3 * cfg.up2], cfg.offset_init_std)?;
        Ok(HeartFormer {
            config,
            params,
            glo,
            sub,
            phi_e,
            phi_g,
            phi_s,
            maa_g,
            maa_s,
            head1,
            phi_e2,
            parent2,
            maa2,
            head2,
        })
    }

    /// Key point selection and grouping for both branches.
    pub fn sample(&self, sparse: &LabeledPointCloud, mode: Mode) -> Result<Sampled> {
        let cfg = &self.config;
        let half = cfg.half();
        if sparse.len() < half || sparse.len() < cfg.k {
            return Err(Error::invalid(format!(
                "input has {} points; needs at least n_c/2 = {half} and k = {}",
                sparse.len(),
                cfg.k
            )));
        }
        let center = sparse.centroid().expect("non-empty input");
        let tree = KdTree::new(sparse.points());

        let glo_idx = fps_from_centroid(sparse, half)?;
        let glo_pts = sparse.select(&glo_idx);
        let glo_groups = knn_group_with(&tree, sparse, glo_pts.points(), glo_pts.labels(), cfg.k)?;
        let glo_pts = match mode {
            Mode::Train { jitter_seed } => jitter(&glo_pts, cfg.jitter_sigma_mm, &mut rng_from_seed(jitter_seed))?,
            Mode::Eval => glo_pts,
        };

        let plan = adaptive_quotas(&sparse.class_counts(), cfg.alpha, half)?;
        let sub_idx = class_balanced_fps(sparse, &plan)?;
        if sub_idx.len() != half {
            return Err(Error::invalid(format!(
                "substructure sampler produced {} of {half} points",
                sub_idx.len()
            )));
        }
        let sub_pts = sparse.select(&sub_idx);
        let sub_groups = knn_group_with(&tree, sparse, sub_pts.points(), sub_pts.labels(), cfg.k)?;
        Ok(Sampled {
            center,
            glo: Keypoints {
                points: strip(glo_pts),
                groups: glo_groups,
            },
            sub: Keypoints {
                points: strip(sub_pts),
                groups: sub_groups,
            },
        })
    }

    /// Records the full network on `g`.
    pub fn forward_graph(&self, g: &mut Graph<'_>, sparse: &LabeledPointCloud, mode: Mode) -> Result<GraphOutput> {
        let cfg = &self.config;
        let s = cfg.coord_scale_mm;
        let sampled = self.sample(sparse, mode)?;
        let center = sampled.center;

        let f_glo = self.glo.forward(g, &sampled.glo, center, cfg)?;
        let f_sub = self.sub.forward(g, &sampled.sub, center, cfg)?;

        // Stage 1.
        let coarse = fuse_coarse(&sampled.glo.points, &sampled.sub.points)?;
        let coarse_in = g.constant(point_features(&coarse, center, s)?)?;
        let f_coarse = self.phi_e.forward(g, coarse_in)?;
        let half = cfg.half();
        let glo_parent = nearest_parents(sampled.glo.points.points(), coarse.points());
        let sub_parent = nearest_parents(sampled.sub.points.points(), coarse.points());
        let eg = g.gather_rows(f_glo, &glo_parent)?;
        let eg = self.phi_g.forward(g, eg)?;
        let es = g.gather_rows(f_sub, &sub_parent)?;
        let es = self.phi_s.forward(g, es)?;
        let fg = self.maa_g.forward(g, f_coarse, Some(eg))?;
        let fs = self.maa_s.forward(g, f_coarse, Some(es))?;
        let f_coarse2 = g.concat(&[fg, fs], 1)?;
        let off1 = self.head1.forward(g, f_coarse2)?;
        let off1 = g.reshape(off1, &[cfg.mid(), 3])?;
        let off1 = g.scale(off1, s)?;
        let coarse_var = g.constant(coords_tensor(coarse.points())?)?;
        let up1: Vec<usize> = replicate_index(cfg.n_c, cfg.up1);
        let up_coarse = g.gather_rows(coarse_var, &up1)?;
        let mid = g.add(off1, up_coarse)?;
        let mid_labels: Vec<u8> = up1.iter().map(|&i| coarse.label(i)).collect();

        // Stage 2.
        let neg_center = g.constant(Tensor::new(vec![3], center.iter().map(|c| -c).collect())?)?;
        let mid_rel = g.add(mid, neg_center)?;
        let mid_rel = g.scale(mid_rel, 1.0 / s)?;
        let mid_onehot = g.constant(onehot(&mid_labels)?)?;
        let mid_in = g.concat(&[mid_rel, mid_onehot], 1)?;
        let f_mid = self.phi_e2.forward(g, mid_in)?;
        let parents = g.gather_rows(f_coarse2, &up1)?;
        let parents = self.parent2.forward(g, parents)?;
        let h = self.maa2.forward(g, f_mid, Some(parents))?;
        let h = g.concat(&[h, f_mid], 1)?;
        let off2 = self.head2.forward(g, h)?;
        let off2 = g.reshape(off2, &[cfg.fine(), 3])?;
        let off2 = g.scale(off2, s)?;
        let up2 = replicate_index(cfg.mid(), cfg.up2);
        let up_mid = g.gather_rows(mid, &up2)?;
        let fine = g.add(off2, up_mid)?;
        let fine_labels: Vec<u8> = up2.iter().map(|&i| mid_labels[i]).collect();

        debug_assert_eq!(half * 2, coarse.len());
        Ok(GraphOutput {
            coarse: coarse_var,
            mid,
            fine,
            f_glo,
            f_sub,
            coarse_labels: coarse.labels().to_vec(),
            mid_labels,
            fine_labels,
        })
    }

    /// Runs the network and reads out every stage.
    pub fn forward(&self, sparse: &LabeledPointCloud, mode: Mode) -> Result<StageOutput> {
        let mut g = Graph::new(&self.params);
        let out = self.forward_graph(&mut g, sparse, mode)?;
        let cloud = |v: Var, labels: &[u8]| -> Result<LabeledPointCloud> {
            LabeledPointCloud::new(tensor_points(g.value(v)), labels.to_vec())
        };
        Ok(StageOutput {
            p_coarse: cloud(out.coarse, &out.coarse_labels)?,
            p_mid: cloud(out.mid, &out.mid_labels)?,
            p_fine: cloud(out.fine, &out.fine_labels)?,
            f_glo: g.value(out.f_glo).clone(),
            f_sub: g.value(out.f_sub).clone(),
        })
    }

    /// Records `Σ_s w_s · SA-CD(stage_s, gt)` and returns the loss node with
    /// the unweighted per-stage values.
    pub fn loss_graph(
        &self,
        g: &mut Graph<'_>,
        out: &GraphOutput,
        gt: &LabeledPointCloud,
        mask: StageMask,
    ) -> Result<(Var, [SaCd; 3])> {
        if mask.is_empty() {
            return Err(Error::invalid("stage mask selects no stage"));
        }
        let (lc, sc) = sa_cd_node(g, out.coarse, &out.coarse_labels, gt)?;
        let (lm, sm) = sa_cd_node(g, out.mid, &out.mid_labels, gt)?;
        let (lf, sf) = sa_cd_node(g, out.fine, &out.fine_labels, gt)?;
        let w = mask.weights();
        let terms = [g.scale(lc, w[0])?, g.scale(lm, w[1])?, g.scale(lf, w[2])?];
        let all = g.concat(&terms, 0)?;
        let total = g.sum(all)?;
        Ok((total, [sc, sm, sf]))
    }
}

fn strip(cloud: LabeledPointCloud) -> LabeledPointCloud {
    let (p, l) = cloud.into_parts();
    LabeledPointCloud::new(p, l).expect("parts of a valid cloud")
}

fn replicate_index(n: usize, factor: usize) -> Vec<usize> {
    (0..n).flat_map(|i| std::iter::repeat(i).take(factor)).collect()
}

/// For every query, the index of its nearest parent (ties to the lower index).
fn nearest_parents(parents: &[Point3], queries: &[Point3]) -> Vec<usize> {
    let tree = KdTree::new(parents);
    queries
        .iter()
        .map(|q| tree.nearest(q).expect("non-empty parents").0)
        .collect()
}

fn coords_tensor(points: &[Point3]) -> Result<Tensor> {
    Tensor::new(vec![points.len(), 3], points.iter().flatten().copied().collect())
}

fn tensor_points(t: &Tensor) -> Vec<Point3> {
    t.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn onehot(labels: &[u8]) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * NUM_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        data[i * NUM_CLASSES + l as usize] = 1.0;
    }
    Tensor::new(vec![labels.len(), NUM_CLASSES], data)
}

/// Rows `[(p − center)/s, onehot(label)]`.
fn point_features(cloud: &LabeledPointCloud, center: Point3, s: f64) -> Result<Tensor> {
    let mut data = Vec::with_capacity(cloud.len() * POINT_FEATURE_WIDTH);
    for (p, &l) in cloud.points().iter().zip(cloud.labels()) {
        data.extend((0..3).map(|a| (p[a] - center[a]) / s));
        data.extend((0..NUM_CLASSES).map(|c| if c == l as usize { 1.0 } else { 0.0 }));
    }
    Tensor::new(vec![cloud.len(), POINT_FEATURE_WIDTH], data)
}

/// Rows `[Δp/s, (p − center)/s, onehot(label)]` for every grouped neighbour.
fn group_features(groups: &GroupedNeighborhood, center: Point3, s: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(groups.offsets.len() * GROUP_FEATURE_WIDTH);
    for ((d, p), &l) in groups.offsets.iter().zip(&groups.neighbor_points).zip(&groups.neighbor_labels) {
        out.extend(d.iter().map(|x| x / s));
        out.extend((0..3).map(|a| (p[a] - center[a]) / s));
        out.extend((0..NUM_CLASSES).map(|c| if c == l as usize { 1.0 } else { 0.0 }));
    }
    out
}

/// No-learning reference: class-balanced key points of the input (`n_c` of
/// them) with every point replicated to the fine size.
pub fn replication_baseline(sparse: &LabeledPointCloud, config: &ModelConfig) -> Result<LabeledPointCloud> {
    let plan = adaptive_quotas(&sparse.class_counts(), config.alpha, config.n_c)?;
    let idx = class_balanced_fps(sparse, &plan)?;
    Ok(strip(sparse.select(&idx)).replicate(config.up1 * config.up2))
}

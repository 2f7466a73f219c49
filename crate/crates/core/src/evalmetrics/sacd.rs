use crate::diffcore::{CustomOp, Graph, Tensor, Var};
use crate::geokernels::spatial::KdTree;
use crate::geokernels::{LabeledPointCloud, Point3, NUM_CLASSES};
use crate::{Error, Result};

/// Semantic-aware Chamfer distance with its bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct SaCd {
    pub value: f64,
    /// `(class, mean P→G + mean G→P)` for classes present in both clouds.
    pub per_class: Vec<(u8, f64)>,
    /// Classes present in exactly one cloud; excluded from the average.
    pub skipped: Vec<u8>,
}

/// Value and gradient with respect to the coordinates of `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaCdGrad {
    pub loss: SaCd,
    pub grad: Vec<Point3>,
}

fn class_split(cloud: &LabeledPointCloud) -> [Vec<usize>; NUM_CLASSES] {
    let mut out: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, &l) in cloud.labels().iter().enumerate() {
        out[l as usize].push(i);
    }
    out
}

/// Unit vector from `b` to `a`, zero when they coincide.
fn unit(a: &Point3, b: &Point3, d: f64) -> Point3 {
    if d > 0.0 {
        [(a[0] - b[0]) / d, (a[1] - b[1]) / d, (a[2] - b[2]) / d]
    } else {
        [0.0; 3]
    }
}

/// `(1/2K') Σ_k [mean_{p∈P_k} min_{g∈G_k} ‖p−g‖ + mean_{g∈G_k} min_{p∈P_k} ‖g−p‖]`
/// over the `K'` classes non-empty in both clouds, plus its gradient in `P`.
pub fn sa_cd_grad(p: &LabeledPointCloud, g: &LabeledPointCloud) -> Result<SaCdGrad> {
    let ps = class_split(p);
    let gs = class_split(g);
    let mut grad = vec![[0.0; 3]; p.len()];
    let mut per_class = Vec::new();
    let mut skipped = Vec::new();
    for c in 0..NUM_CLASSES {
        let (pi, gi) = (&ps[c], &gs[c]);
        match (pi.is_empty(), gi.is_empty()) {
            (true, true) => continue,
            (false, false) => {}
            _ => {
                skipped.push(c as u8);
                continue;
            }
        }
        let pp: Vec<Point3> = pi.iter().map(|&i| p.point(i)).collect();
        let gp: Vec<Point3> = gi.iter().map(|&i| g.point(i)).collect();
        let (m, n) = (pp.len() as f64, gp.len() as f64);
        let gtree = KdTree::new(&gp);
        let mut forward = 0.0;
        for (a, q) in pp.iter().enumerate() {
            let (j, d2) = gtree.nearest(q).expect("non-empty tree");
            let d = d2.sqrt();
            forward += d;
            let u = unit(q, &gp[j], d);
            for x in 0..3 {
                grad[pi[a]][x] += u[x] / m;
            }
        }
        let ptree = KdTree::new(&pp);
        let mut backward = 0.0;
        for q in &gp {
            let (a, d2) = ptree.nearest(q).expect("non-empty tree");
            let d = d2.sqrt();
            backward += d;
            let u = unit(&pp[a], q, d);
            for x in 0..3 {
                grad[pi[a]][x] += u[x] / n;
            }
        }
        per_class.push((c as u8, forward / m + backward / n));
    }
    if per_class.is_empty() {
        return Err(Error::invalid("no class is present in both clouds"));
    }
    let norm = 1.0 / (2.0 * per_class.len() as f64);
    let value = per_class.iter().map(|(_, v)| v).sum::<f64>() * norm;
    for row in &mut grad {
        for x in row.iter_mut() {
            *x *= norm;
        }
    }
    Ok(SaCdGrad {
        loss: SaCd {
            value,
            per_class,
            skipped,
        },
        grad,
    })
}

pub fn sa_cd(p: &LabeledPointCloud, g: &LabeledPointCloud) -> Result<SaCd> {
    sa_cd_grad(p, g).map(|r| r.loss)
}

struct SaCdBackward {
    grad: Vec<f64>,
    shape: Vec<usize>,
}

impl CustomOp for SaCdBackward {
    fn name(&self) -> &'static str {
        "sa_cd"
    }

    fn backward(&self, grad_out: &Tensor, _inputs: &[&Tensor]) -> Result<Vec<Option<Tensor>>> {
        let s = grad_out.item();
        Ok(vec![Some(Tensor::new(
            self.shape.clone(),
            self.grad.iter().map(|g| g * s).collect(),
        )?)])
    }
}

/// SA-CD of predicted coordinates `coords` (an `N × 3` node) carrying
/// `labels`, against a fixed ground truth.
pub fn sa_cd_node(graph: &mut Graph<'_>, coords: Var, labels: &[u8], gt: &LabeledPointCloud) -> Result<(Var, SaCd)> {
    let value = graph.value(coords);
    let (n, w) = value.dims2()?;
    if w != 3 || n != labels.len() {
        return Err(Error::Shape {
            op: "sa_cd",
            lhs: value.shape().to_vec(),
            rhs: vec![labels.len(), 3],
        });
    }
    let points: Vec<Point3> = value.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let pred = LabeledPointCloud::new(points, labels.to_vec())?;
    let r = sa_cd_grad(&pred, gt)?;
    let op = SaCdBackward {
        grad: r.grad.iter().flatten().copied().collect(),
        shape: vec![n, 3],
    };
    let var = graph.custom(&[coords], Tensor::scalar(r.loss.value), Box::new(op))?;
    Ok((var, r.loss))
}

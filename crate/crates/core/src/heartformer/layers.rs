use rand::Rng;
use rand_distr::StandardNormal;

use crate::diffcore::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::rng::Rng as StreamRng;
use crate::Result;

/// Builds parameters in a fixed order, each initialized from its own stream.
pub(crate) struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: StreamRng,
}

impl Builder<'_> {
    fn normal(&mut self, name: String, shape: Vec<usize>, std: f64) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * self.rng.sample::<f64, _>(StandardNormal)).collect();
        self.store.add(name, Tensor::new(shape, data)?)
    }

    fn constant(&mut self, name: String, shape: Vec<usize>, value: f64) -> Result<ParamId> {
        let n = shape.iter().product();
        self.store.add(name, Tensor::new(shape, vec![value; n])?)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    /// Weights `N(0, std²)`, zero bias.
    pub fn new(b: &mut Builder<'_>, name: &str, fan_in: usize, fan_out: usize, std: f64) -> Result<Self> {
        Ok(Linear {
            w: b.normal(format!("{name}.w"), vec![fan_in, fan_out], std)?,
            b: b.constant(format!("{name}.b"), vec![fan_out], 0.0)?,
        })
    }

    pub fn he(b: &mut Builder<'_>, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Self::new(b, name, fan_in, fan_out, (2.0 / fan_in as f64).sqrt())
    }

    pub fn glorot(b: &mut Builder<'_>, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        Self::new(b, name, fan_in, fan_out, (1.0 / fan_in as f64).sqrt())
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (w, b) = (g.param(self.w), g.param(self.b));
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }
}

/// Linear layers with ReLU between them (none after the last).
pub(crate) struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(b: &mut Builder<'_>, name: &str, widths: &[usize]) -> Result<Self> {
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let lname = format!("{name}.{i}");
                if i + 1 < n {
                    Linear::he(b, &lname, widths[i], widths[i + 1])
                } else {
                    Linear::glorot(b, &lname, widths[i], widths[i + 1])
                }
            })
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    /// As [`Mlp::new`] but with the last layer drawn from `N(0, last_std²)`.
    pub fn with_last_std(b: &mut Builder<'_>, name: &str, widths: &[usize], last_std: f64) -> Result<Self> {
        let n = widths.len() - 1;
        let mut layers: Vec<Linear> = (0..n - 1)
            .map(|i| Linear::he(b, &format!("{name}.{i}"), widths[i], widths[i + 1]))
            .collect::<Result<_>>()?;
        layers.push(Linear::new(b, &format!("{name}.{}", n - 1), widths[n - 1], widths[n], last_std)?);
        Ok(Mlp { layers })
    }

    pub fn forward(&self, g: &mut Graph<'_>, mut x: Var) -> Result<Var> {
        for (i, l) in self.layers.iter().enumerate() {
            x = l.forward(g, x)?;
            if i + 1 < self.layers.len() {
                x = g.relu(x)?;
            }
        }
        Ok(x)
    }
}

pub(crate) struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNorm {
    pub fn new(b: &mut Builder<'_>, name: &str, width: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: b.constant(format!("{name}.gamma"), vec![width], 1.0)?,
            beta: b.constant(format!("{name}.beta"), vec![width], 0.0)?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let (gamma, beta) = (g.param(self.gamma), g.param(self.beta));
        g.layer_norm(x, gamma, beta)
    }
}

/// Multi-head scaled dot-product attention of `queries` over `context`.
pub(crate) struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
    width: usize,
}

impl Attention {
    pub fn new(b: &mut Builder<'_>, name: &str, width: usize, heads: usize) -> Result<Self> {
        Ok(Attention {
            q: Linear::glorot(b, &format!("{name}.q"), width, width)?,
            k: Linear::glorot(b, &format!("{name}.k"), width, width)?,
            v: Linear::glorot(b, &format!("{name}.v"), width, width)?,
            o: Linear::glorot(b, &format!("{name}.o"), width, width)?,
            heads,
            width,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, queries: Var, context: Var) -> Result<Var> {
        let q = self.q.forward(g, queries)?;
        let k = self.k.forward(g, context)?;
        let v = self.v.forward(g, context)?;
        let d = self.width / self.heads;
        let inv = 1.0 / (d as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = g.slice_cols(q, h * d, d)?;
            let kh = g.slice_cols(k, h * d, d)?;
            let vh = g.slice_cols(v, h * d, d)?;
            let scores = g.matmul_nt(qh, kh)?;
            let scores = g.scale(scores, inv)?;
            let attn = g.softmax(scores, 1)?;
            outs.push(g.matmul(attn, vh)?);
        }
        let merged = if outs.len() == 1 { outs[0] } else { g.concat(&outs, 1)? };
        self.o.forward(g, merged)
    }
}

/// Pre-norm block: `x + attn(LN(x), LN(ctx))`, then `x + FFN(LN(x))`.
/// Self-attention when no context is given.
pub(crate) struct AttentionBlock {
    ln_q: LayerNorm,
    ln_kv: Option<LayerNorm>,
    attn: Attention,
    ln_ffn: LayerNorm,
    ffn: Mlp,
}

impl AttentionBlock {
    pub fn new(b: &mut Builder<'_>, name: &str, width: usize, heads: usize, ffn_mult: usize, cross: bool) -> Result<Self> {
        Ok(AttentionBlock {
            ln_q: LayerNorm::new(b, &format!("{name}.ln_q"), width)?,
            ln_kv: if cross {
                Some(LayerNorm::new(b, &format!("{name}.ln_kv"), width)?)
            } else {
                None
            },
            attn: Attention::new(b, &format!("{name}.attn"), width, heads)?,
            ln_ffn: LayerNorm::new(b, &format!("{name}.ln_ffn"), width)?,
            ffn: Mlp::new(b, &format!("{name}.ffn"), &[width, ffn_mult * width, width])?,
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, context: Option<Var>) -> Result<Var> {
        let q = self.ln_q.forward(g, x)?;
        let kv = match (context, &self.ln_kv) {
            (Some(c), Some(ln)) => ln.forward(g, c)?,
            _ => q,
        };
        let a = self.attn.forward(g, q, kv)?;
        let x = g.add(x, a)?;
        let h = self.ln_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, h)?;
        g.add(x, f)
    }
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PolicyError;
use crate::env::{Context, RoutingEnv};
use crate::numeric::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cvrp,
    Cvrptw,
    Cpdptw,
}

impl Variant {
    pub fn has_windows(self) -> bool {
        self != Variant::Cvrp
    }
}

impl std::str::FromStr for Variant {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cvrp" => Ok(Variant::Cvrp),
            "cvrptw" => Ok(Variant::Cvrptw),
            "cpdptw" => Ok(Variant::Cpdptw),
            other => Err(PolicyError::Config(format!("unknown variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Cvrp => "cvrp",
            Variant::Cvrptw => "cvrptw",
            Variant::Cpdptw => "cpdptw",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolicyConfig {
    pub variant: Variant,
    pub d_emb: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Pickups also carry their delivery's coordinates (pickup-delivery only).
    pub pair_coords: bool,
    /// Append the normalized clock to the decoder context (windowed variants).
    pub context_clock: bool,
    /// Optional `C * tanh` clipping of the final logits.
    pub tanh_clip: Option<f64>,
}

impl PolicyConfig {
    /// Full-size defaults: 128-dimensional embeddings, 3 layers, 8 heads.
    pub fn new(variant: Variant) -> Self {
        PolicyConfig {
            variant,
            d_emb: 128,
            layers: 3,
            heads: 8,
            ff_dim: 512,
            pair_coords: true,
            context_clock: true,
            tanh_clip: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self.variant {
            Variant::Cvrp => 3,
            Variant::Cvrptw => 5,
            Variant::Cpdptw if self.pair_coords => 8,
            Variant::Cpdptw => 6,
        }
    }

    pub fn d_key(&self) -> usize {
        self.d_emb / self.heads
    }

    fn uses_clock(&self) -> bool {
        self.context_clock && self.variant.has_windows()
    }

    /// Dynamic scalars appended to the last-node embedding.
    pub fn context_extra(&self) -> usize {
        1 + self.uses_clock() as usize
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.d_emb == 0 || self.heads == 0 || self.layers == 0 || self.ff_dim == 0 {
            return Err(PolicyError::Config("dimensions, heads and layers must be positive".into()));
        }
        if !self.d_emb.is_multiple_of(self.heads) {
            return Err(PolicyError::Config(format!("d_emb {} is not divisible by {} heads", self.d_emb, self.heads)));
        }
        if matches!(self.tanh_clip, Some(c) if c <= 0.0) {
            return Err(PolicyError::Config("tanh_clip must be positive".into()));
        }
        Ok(())
    }
}

/// Node features, one row per node including both depot copies.
pub fn featurize<E: RoutingEnv + ?Sized>(env: &E, config: &PolicyConfig) -> Tensor {
    let inst = env.instance();
    let scale = inst.nodes.iter().map(|n| n.x.abs().max(n.y.abs())).fold(1.0, f64::max);
    let horizon = inst.horizon().1.max(f64::MIN_POSITIVE);
    let cap = inst.capacity.max(1) as f64;
    let pdp = env.pdp();
    let mut data = Vec::with_capacity(inst.n_nodes() * config.input_dim());
    for (i, n) in inst.nodes.iter().enumerate() {
        data.extend_from_slice(&[n.x / scale, n.y / scale, n.demand as f64 / cap]);
        if config.variant.has_windows() {
            data.extend_from_slice(&[n.tw_open / horizon, n.tw_close / horizon]);
        }
        if config.variant == Variant::Cpdptw {
            let flag = match pdp {
                Some(p) if p.is_pickup(i) => -1.0,
                Some(p) if p.is_delivery(i) => 1.0,
                _ => 0.0,
            };
            data.push(flag);
            if config.pair_coords {
                match pdp {
                    Some(p) if p.is_pickup(i) => {
                        let d = &inst.nodes[p.delivery_of(i)];
                        data.extend_from_slice(&[d.x / scale, d.y / scale]);
                    }
                    _ => data.extend_from_slice(&[0.0, 0.0]),
                }
            }
        }
    }
    Tensor::new(inst.n_nodes(), config.input_dim(), data).expect("feature layout")
}

#[derive(Debug, Clone, Copy)]
struct LayerIds {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    n1g: ParamId,
    n1b: ParamId,
    ff1w: ParamId,
    ff1b: ParamId,
    ff2w: ParamId,
    ff2b: ParamId,
    n2g: ParamId,
    n2b: ParamId,
}

#[derive(Debug, Clone)]
struct ModelIds {
    embed_w: ParamId,
    embed_b: ParamId,
    layers: Vec<LayerIds>,
    proj: ParamId,
    dec_q: ParamId,
    dec_k: ParamId,
    dec_v: ParamId,
    dec_o: ParamId,
    dec_logit: ParamId,
}

/// Encoder-decoder attention policy with its parameters.
#[derive(Debug, Clone)]
pub struct AttentionModel {
    pub config: PolicyConfig,
    pub params: ParamStore,
    ids: ModelIds,
}

/// Per-instance encoder output plus the decoder's static projections.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub nodes: Var,
    pub graph: Var,
    glimpse_k: Vec<Var>,
    glimpse_v: Vec<Var>,
    logit_k: Var,
    n: usize,
}

impl Encoded {
    pub fn n_nodes(&self) -> usize {
        self.n
    }
}

impl AttentionModel {
    /// Initializes every weight from `U(-1/√fan_in, 1/√fan_in)`; norm gains
    /// start at 1 and norm biases at 0.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self, PolicyError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        let (d, ff, k) = (config.d_emb, config.ff_dim, config.input_dim());
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let mut lin = |s: &mut ParamStore, name: &str, rows: usize, cols: usize, fan_in: usize| {
            s.register_uniform(name, rows, cols, bound(fan_in), &mut rng)
        };
        let embed_w = lin(&mut s, "embed.w", k, d, k)?;
        let embed_b = lin(&mut s, "embed.b", 1, d, k)?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = |x: &str| format!("enc{l}.{x}");
            let wq = lin(&mut s, &p("wq"), d, d, d)?;
            let wk = lin(&mut s, &p("wk"), d, d, d)?;
            let wv = lin(&mut s, &p("wv"), d, d, d)?;
            let wo = lin(&mut s, &p("wo"), d, d, d)?;
            let n1g = s.register(p("norm1.g"), Tensor::row_vector(vec![1.0; d]))?;
            let n1b = s.register(p("norm1.b"), Tensor::zeros(1, d))?;
            let ff1w = lin(&mut s, &p("ff1.w"), d, ff, d)?;
            let ff1b = lin(&mut s, &p("ff1.b"), 1, ff, d)?;
            let ff2w = lin(&mut s, &p("ff2.w"), ff, d, ff)?;
            let ff2b = lin(&mut s, &p("ff2.b"), 1, d, ff)?;
            let n2g = s.register(p("norm2.g"), Tensor::row_vector(vec![1.0; d]))?;
            let n2b = s.register(p("norm2.b"), Tensor::zeros(1, d))?;
            layers.push(LayerIds { wq, wk, wv, wo, n1g, n1b, ff1w, ff1b, ff2w, ff2b, n2g, n2b });
        }
        let extra = config.context_extra();
        let proj = lin(&mut s, "dec.proj", d + extra, d, d + extra)?;
        let dec_q = lin(&mut s, "dec.wq", d, d, d)?;
        let dec_k = lin(&mut s, "dec.wk", d, d, d)?;
        let dec_v = lin(&mut s, "dec.wv", d, d, d)?;
        let dec_o = lin(&mut s, "dec.wo", d, d, d)?;
        let dec_logit = lin(&mut s, "dec.wlogit", d, d, d)?;
        let ids = ModelIds { embed_w, embed_b, layers, proj, dec_q, dec_k, dec_v, dec_o, dec_logit };
        Ok(AttentionModel { config, params: s, ids })
    }

    /// Multi-head attention of `queries` over `keys`/`values` already split
    /// per head, followed by the output projection.
    fn attend(
        &self,
        g: &mut Graph,
        q: Var,
        keys: &[Var],
        values: &[Var],
        wo: ParamId,
        mask: Option<&[bool]>,
    ) -> Result<Var, PolicyError> {
        let dk = self.config.d_key();
        let inv = 1.0 / (dk as f64).sqrt();
        let mut heads = Vec::with_capacity(keys.len());
        for (h, (&k, &v)) in keys.iter().zip(values).enumerate() {
            let qh = g.slice_cols(q, h * dk, dk)?;
            let s = g.matmul_t(qh, k)?;
            let s = g.scale(s, inv);
            let a = g.softmax(s, mask)?;
            heads.push(g.matmul(a, v)?);
        }
        let cat = g.concat_cols(&heads)?;
        let wo = g.param(wo);
        Ok(g.matmul(cat, wo)?)
    }

    fn split_heads(&self, g: &mut Graph, x: Var) -> Result<Vec<Var>, PolicyError> {
        let dk = self.config.d_key();
        (0..self.config.heads).map(|h| g.slice_cols(x, h * dk, dk).map_err(Into::into)).collect()
    }

    fn linear(g: &mut Graph, x: Var, w: ParamId, b: ParamId) -> Result<Var, PolicyError> {
        let (w, b) = (g.param(w), g.param(b));
        let y = g.matmul(x, w)?;
        Ok(g.add_row(y, b)?)
    }

    /// Runs the embedding and the self-attention blocks once per instance.
    pub fn encode(&self, g: &mut Graph, features: &Tensor) -> Result<Encoded, PolicyError> {
        if features.cols() != self.config.input_dim() {
            return Err(PolicyError::Config(format!(
                "features have {} columns, model expects {}",
                features.cols(),
                self.config.input_dim()
            )));
        }
        let x = g.input(features.clone());
        let mut h = Self::linear(g, x, self.ids.embed_w, self.ids.embed_b)?;
        for l in &self.ids.layers {
            let (wq, wk, wv) = (g.param(l.wq), g.param(l.wk), g.param(l.wv));
            let q = g.matmul(h, wq)?;
            let k = g.matmul(h, wk)?;
            let v = g.matmul(h, wv)?;
            let ks = self.split_heads(g, k)?;
            let vs = self.split_heads(g, v)?;
            let mha = self.attend(g, q, &ks, &vs, l.wo, None)?;
            let r = g.add(h, mha)?;
            let (n1g, n1b) = (g.param(l.n1g), g.param(l.n1b));
            h = g.instance_norm(r, n1g, n1b)?;
            let f = Self::linear(g, h, l.ff1w, l.ff1b)?;
            let f = g.relu(f);
            let f = Self::linear(g, f, l.ff2w, l.ff2b)?;
            let r = g.add(h, f)?;
            let (n2g, n2b) = (g.param(l.n2g), g.param(l.n2b));
            h = g.instance_norm(r, n2g, n2b)?;
        }
        let graph = g.mean_rows(h);
        let (wk, wv, wl) = (g.param(self.ids.dec_k), g.param(self.ids.dec_v), g.param(self.ids.dec_logit));
        let gk = g.matmul(h, wk)?;
        let gv = g.matmul(h, wv)?;
        let logit_k = g.matmul(h, wl)?;
        Ok(Encoded {
            nodes: h,
            graph,
            glimpse_k: self.split_heads(g, gk)?,
            glimpse_v: self.split_heads(g, gv)?,
            logit_k,
            n: features.rows(),
        })
    }

    /// One decoding step for a batch of rollouts on the same instance.
    /// `masks` is row-major `contexts.len() x n`. Returns the probability
    /// matrix with masked entries exactly zero.
    pub fn decode_step(
        &self,
        g: &mut Graph,
        enc: &Encoded,
        contexts: &[Context],
        masks: &[bool],
    ) -> Result<Var, PolicyError> {
        let rows = contexts.len();
        if masks.len() != rows * enc.n {
            return Err(PolicyError::Config(format!("mask of {} for {rows} rows of {} nodes", masks.len(), enc.n)));
        }
        let lasts: Vec<usize> = contexts.iter().map(|c| c.last).collect();
        let last = g.gather_rows(enc.nodes, &lasts)?;
        let extra = self.config.context_extra();
        let clock = self.config.uses_clock();
        let dynamic =
            Tensor::from_fn(rows, extra, |r, c| if c == 0 { contexts[r].residual } else { contexts[r].clock });
        debug_assert!(extra == 1 || clock);
        let dynamic = g.input(dynamic);
        let cin = g.concat_cols(&[last, dynamic])?;
        let proj = g.param(self.ids.proj);
        let ctx = g.matmul(cin, proj)?;
        let ctx = g.add_row(ctx, enc.graph)?;
        let wq = g.param(self.ids.dec_q);
        let q = g.matmul(ctx, wq)?;
        let glimpse = self.attend(g, q, &enc.glimpse_k, &enc.glimpse_v, self.ids.dec_o, Some(masks))?;
        let logits = g.matmul_t(glimpse, enc.logit_k)?;
        let mut logits = g.scale(logits, 1.0 / (self.config.d_emb as f64).sqrt());
        if let Some(c) = self.config.tanh_clip {
            let t = g.tanh(logits);
            logits = g.scale(t, c);
        }
        Ok(g.softmax(logits, Some(masks))?)
    }
}

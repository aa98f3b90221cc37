//! Forward pass for the full model and its attention/condition variants.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore};

use super::config::{AttentionVariant, ConditionVariant, ModelConfig, ModelError, TimeMask};
use super::layers::{attention_core, attention_mask, linear, modulate, multi_head_attention, sinusoidal_embedding};
use super::params::{count_by_component, AttnProj, BlockParams, Layout, Linear, MOD_CHUNKS};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// One batch of model inputs.
///
/// `x` is `[B, T]` (clean history followed by the noised horizon), `cov` is
/// `[B, C, T]` series-major, `t` holds one diffusion time per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub batch: usize,
    pub total_len: usize,
    pub n_cov: usize,
    pub x: Vec<f64>,
    pub cov: Vec<f64>,
    pub t: Vec<f64>,
}

impl ModelInput {
    pub fn zeros(batch: usize, total_len: usize, n_cov: usize) -> Self {
        ModelInput {
            batch,
            total_len,
            n_cov,
            x: vec![0.0; batch * total_len],
            cov: vec![0.0; batch * n_cov * total_len],
            t: vec![0.0; batch],
        }
    }

    /// Fills sample `b`. `cov_rows` is time-major `T × C`, as stored in windows.
    pub fn set_sample(&mut self, b: usize, x: &[f64], cov_rows: &[f64], t: f64) {
        let (tl, c) = (self.total_len, self.n_cov);
        self.x[b * tl..(b + 1) * tl].copy_from_slice(x);
        for i in 0..tl {
            for j in 0..c {
                self.cov[(b * c + j) * tl + i] = cov_rows[i * c + j];
            }
        }
        self.t[b] = t;
    }

    fn check(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        let ok = self.total_len == cfg.total_len()
            && self.n_cov == cfg.n_cov
            && self.x.len() == self.batch * self.total_len
            && self.cov.len() == self.batch * self.n_cov * self.total_len
            && self.t.len() == self.batch;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InputShape {
                expected: format!("T = {}, C = {}", cfg.total_len(), cfg.n_cov),
                found: format!(
                    "T = {}, C = {}, |x| = {}, |cov| = {}, |t| = {} for B = {}",
                    self.total_len,
                    self.n_cov,
                    self.x.len(),
                    self.cov.len(),
                    self.t.len(),
                    self.batch
                ),
            })
        }
    }
}

/// Total and per-component parameter counts.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ParamCountReport {
    pub total: usize,
    pub components: Vec<(String, usize)>,
}

/// Velocity network: parameters plus the wiring chosen by its config.
#[derive(Debug, Clone)]
pub struct DitsModel {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: ParamStore,
}

/// Output velocity plus the residual stream after embedding and after each block.
pub struct ForwardTrace {
    pub velocity: Var,
    pub latents: Vec<Var>,
}

/// (α, β, γ) for one sub-layer, already shaped to broadcast over the stream.
#[derive(Clone, Copy)]
struct SubMods {
    alpha: Var,
    beta: Var,
    gamma: Var,
}

struct Ctx<'a, 'r> {
    g: &'a mut Graph,
    store: &'a ParamStore,
    cfg: &'a ModelConfig,
    rng: Option<&'r mut dyn RngCore>,
}

impl Ctx<'_, '_> {
    fn lin(&mut self, l: &Linear, x: Var) -> Result<Var, ModelError> {
        Ok(linear(self.g, self.store, l, x)?)
    }

    fn mha(&mut self, p: &AttnProj, q: Var, kv: Var, mask: Option<&Tensor>) -> Result<Var, ModelError> {
        Ok(multi_head_attention(
            self.g,
            self.store,
            p,
            q,
            kv,
            self.cfg.n_heads,
            mask,
        )?)
    }

    fn dropout(&mut self, h: Var) -> Var {
        let p = self.cfg.dropout;
        let Some(rng) = self.rng.as_deref_mut() else { return h };
        if p <= 0.0 {
            return h;
        }
        let shape = self.g.shape(h).to_vec();
        let mut m = Tensor::zeros(&shape);
        for v in m.data_mut() {
            *v = if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) };
        }
        let mv = self.g.constant(m);
        self.g.mul(h, mv).expect("dropout mask has the shape of its input")
    }

    /// Pre-norm residual sub-layer: `z + α ⊙ f(γ ⊙ LN(z) + β)`, or
    /// `z + f(LN(z))` without modulation.
    fn sublayer(
        &mut self,
        z: Var,
        mods: Option<SubMods>,
        f: impl FnOnce(&mut Self, Var) -> Result<Var, ModelError>,
    ) -> Result<Var, ModelError> {
        let u = match mods {
            Some(m) => modulate(self.g, z, m.gamma, m.beta)?,
            None => self.g.layer_norm(z)?,
        };
        let h = f(self, u)?;
        let h = self.dropout(h);
        let h = match mods {
            Some(m) => self.g.mul(h, m.alpha)?,
            None => h,
        };
        Ok(self.g.add(z, h)?)
    }

    fn ffn(&mut self, block: &BlockParams, z: Var, mods: Option<SubMods>) -> Result<Var, ModelError> {
        self.sublayer(z, mods, |c, u| {
            let h = c.lin(&block.ffn.up, u)?;
            let h = c.g.gelu(h);
            c.lin(&block.ffn.down, h)
        })
    }

    /// Splits a block's modulation output into three sub-layer triples
    /// (time, variate, ffn), each shaped `[B, S, 1, D]` with `S` = 1 or `V`
    /// for per-stream modulation.
    fn block_mods(&mut self, lin: &Linear, zy: Var, rank: usize) -> Result<[SubMods; 3], ModelError> {
        let b = self.g.shape(zy)[0];
        let d = self.cfg.d_model;
        let v = 1 + self.cfg.n_cov;
        let s = self.g.silu(zy);
        let m = self.lin(lin, s)?;
        let groups = lin.d_out / d;
        let m = self.g.reshape(m, &[b, groups, d])?;
        let chunk = |c: &mut Self, k: usize| -> Result<Var, ModelError> {
            let x = c.g.slice(m, 1, k, k + 1)?;
            let x = c.g.reshape(x, &[b, 1, 1, d])?;
            let x = if groups > MOD_CHUNKS {
                let y = c.g.slice(m, 1, MOD_CHUNKS + k, MOD_CHUNKS + k + 1)?;
                let y = c.g.reshape(y, &[b, 1, 1, d])?;
                let mut parts = vec![x];
                parts.extend(core::iter::repeat_n(y, v - 1));
                c.g.concat(&parts, 1)?
            } else {
                x
            };
            if rank == 3 {
                let s = c.g.shape(x)[1];
                Ok(c.g.reshape(x, &[b, s, d])?)
            } else {
                Ok(x)
            }
        };
        let mut out = Vec::with_capacity(3);
        for sub in 0..3 {
            out.push(SubMods {
                alpha: chunk(self, 3 * sub)?,
                beta: chunk(self, 3 * sub + 1)?,
                gamma: chunk(self, 3 * sub + 2)?,
            });
        }
        Ok([out[0], out[1], out[2]])
    }
}

impl DitsModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, params) = Layout::build(&config, seed);
        Ok(DitsModel { config, layout, params })
    }

    /// Rebuilds the model around stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let (layout, fresh) = Layout::build(&config, 0);
        if fresh.len() != params.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} tensors, found {}",
                fresh.len(),
                params.len()
            )));
        }
        for (a, b) in fresh.entries().iter().zip(params.entries()) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(ModelError::ParamMismatch(format!(
                    "expected {} {:?}, found {} {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(DitsModel { config, layout, params })
    }

    pub fn param_count(&self) -> ParamCountReport {
        ParamCountReport {
            total: self.params.num_elements(),
            components: count_by_component(&self.params),
        }
    }

    /// Predicted velocity `[B, T]`, without dropout.
    pub fn forward(&self, g: &mut Graph, input: &ModelInput) -> Result<Var, ModelError> {
        Ok(self.run(g, &self.params, input, None)?.velocity)
    }

    /// Same as [`forward`](Self::forward) but against an explicit parameter store
    /// (used by finite-difference checks, which perturb a copy).
    pub fn forward_with(&self, g: &mut Graph, params: &ParamStore, input: &ModelInput) -> Result<Var, ModelError> {
        Ok(self.run(g, params, input, None)?.velocity)
    }

    /// Forward pass with dropout masks drawn from `rng`.
    pub fn forward_train(&self, g: &mut Graph, input: &ModelInput, rng: &mut dyn RngCore) -> Result<Var, ModelError> {
        Ok(self.run(g, &self.params, input, Some(rng))?.velocity)
    }

    /// General form: explicit parameters, optional dropout.
    pub fn forward_full(
        &self,
        g: &mut Graph,
        params: &ParamStore,
        input: &ModelInput,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Var, ModelError> {
        Ok(self.run(g, params, input, rng)?.velocity)
    }

    pub fn forward_trace(&self, g: &mut Graph, input: &ModelInput) -> Result<ForwardTrace, ModelError> {
        self.run(g, &self.params, input, None)
    }

    /// Conditioning embedding `Z_y` (`[B, D]`): mean covariate embedding plus time encoding.
    pub fn condition_embedding(&self, g: &mut Graph, input: &ModelInput) -> Result<Var, ModelError> {
        input.check(&self.config)?;
        let mut ctx = Ctx {
            g,
            store: &self.params,
            cfg: &self.config,
            rng: None,
        };
        let cov_tok = self.cov_tokens(&mut ctx, input)?;
        self.condition(&mut ctx, input, cov_tok)
    }

    /// Convenience evaluation on a fresh graph, returning `[B·T]` values.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let v = self.forward(&mut g, input)?;
        Ok(g.value(v).data().to_vec())
    }

    fn run(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        input: &ModelInput,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<ForwardTrace, ModelError> {
        input.check(&self.config)?;
        let mut ctx = Ctx {
            g,
            store,
            cfg: &self.config,
            rng,
        };
        let cfg = &self.config;
        match (cfg.attention, cfg.condition) {
            (AttentionVariant::Itransformer, _) => self.run_itransformer(&mut ctx, input),
            (_, ConditionVariant::Joint) => self.run_joint(&mut ctx, input),
            (_, ConditionVariant::Cross) => self.run_cross(&mut ctx, input),
            _ => self.run_adaln(&mut ctx, input),
        }
    }

    fn x_patches(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<Var, ModelError> {
        let (b, n, p) = (input.batch, self.config.n_patches(), self.config.patch_len);
        let xs = ctx
            .g
            .constant(Tensor::new(vec![b, 1, n, p], input.x.clone()).map_err(ModelError::from)?);
        let z = ctx.lin(&self.layout.patch_x, xs)?;
        self.add_pos(ctx, z)
    }

    fn add_pos(&self, ctx: &mut Ctx, z: Var) -> Result<Var, ModelError> {
        match self.layout.pos {
            Some(id) => {
                let pos = ctx.g.param(ctx.store, id);
                Ok(ctx.g.add(z, pos)?)
            }
            None => Ok(z),
        }
    }

    /// `[B, C, D]` whole-series covariate tokens, `None` when `C = 0`.
    fn cov_tokens(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<Option<Var>, ModelError> {
        let Some(lin) = self.layout.variate_embed else {
            return Ok(None);
        };
        let series = ctx.g.constant(
            Tensor::new(vec![input.batch, input.n_cov, input.total_len], input.cov.clone())
                .map_err(ModelError::from)?,
        );
        Ok(Some(ctx.lin(&lin, series)?))
    }

    fn time_encoding(&self, ctx: &mut Ctx, input: &ModelInput) -> Var {
        let d = self.config.d_model;
        let mut data = Vec::with_capacity(input.batch * d);
        for &t in &input.t {
            data.extend(sinusoidal_embedding(t, d));
        }
        ctx.g.constant(Tensor::from_parts(vec![input.batch, d], data))
    }

    /// Conditioning embedding `[B, D]`: mean covariate embedding plus time encoding.
    fn condition(&self, ctx: &mut Ctx, input: &ModelInput, cov_tok: Option<Var>) -> Result<Var, ModelError> {
        let e_time = self.time_encoding(ctx, input);
        match cov_tok {
            Some(c) => {
                let e_cov = ctx.g.mean_axis(c, 1)?;
                Ok(ctx.g.add(e_cov, e_time)?)
            }
            None => Ok(e_time),
        }
    }

    fn time_mask(&self, n: usize) -> Option<Tensor> {
        (self.config.time_mask == TimeMask::Causal).then(|| attention_mask(n, n, |i, j| j <= i))
    }

    /// Final modulation (or plain LN) and linear head on `[B, 1, N, D]` x tokens.
    fn head(&self, ctx: &mut Ctx, zx: Var, zy: Option<Var>, batch: usize) -> Result<Var, ModelError> {
        let d = self.config.d_model;
        let u = match (self.layout.final_mod, zy) {
            (Some(fm), Some(zy)) => {
                let s = ctx.g.silu(zy);
                let m = ctx.lin(&fm, s)?;
                let m = ctx.g.reshape(m, &[batch, 2, d])?;
                let lead: Vec<usize> = ctx.g.shape(zx)[..ctx.g.shape(zx).len() - 2]
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| if i == 0 { s } else { 1 })
                    .collect();
                let mut bshape = lead;
                bshape.extend_from_slice(&[1, d]);
                let beta = ctx.g.slice(m, 1, 0, 1)?;
                let beta = ctx.g.reshape(beta, &bshape)?;
                let gamma = ctx.g.slice(m, 1, 1, 2)?;
                let gamma = ctx.g.reshape(gamma, &bshape)?;
                modulate(ctx.g, zx, gamma, beta)?
            }
            _ => ctx.g.layer_norm(zx)?,
        };
        let out = ctx.lin(&self.layout.head, u)?;
        Ok(ctx.g.reshape(out, &[batch, self.config.total_len()])?)
    }

    /// AdaLN-conditioned variants: full model, timer-xl, prefix, timexer, adaln.
    fn run_adaln(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<ForwardTrace, ModelError> {
        let cfg = &self.config;
        let (b, n, c, d) = (input.batch, cfg.n_patches(), cfg.n_cov, cfg.d_model);
        let v = 1 + c;
        let zx = self.x_patches(ctx, input)?;
        let cov_tok = self.cov_tokens(ctx, input)?;
        let zy = self.condition(ctx, input, cov_tok)?;

        let mut z = zx;
        if let (Some(pc), true) = (self.layout.patch_c, c > 0) {
            let cs = ctx
                .g
                .constant(Tensor::new(vec![b, c, n, cfg.patch_len], input.cov.clone()).map_err(ModelError::from)?);
            let zc = ctx.lin(&pc, cs)?;
            let zc = self.add_pos(ctx, zc)?;
            z = ctx.g.concat(&[zx, zc], 1)?;
        }
        // covariate series tokens as [B, 1, C, D] for prefix / timexer
        let side = match (cfg.attention, cov_tok) {
            (AttentionVariant::Prefix | AttentionVariant::Timexer, Some(t)) => Some(ctx.g.reshape(t, &[b, 1, c, d])?),
            _ => None,
        };

        let time_mask = self.time_mask(n);
        let grid_mask =
            (cfg.time_mask == TimeMask::Causal).then(|| attention_mask(v * n, v * n, |i, j| j % n <= i % n));
        let prefix_mask =
            (cfg.time_mask == TimeMask::Causal).then(|| attention_mask(n, c + n, |i, j| j < c || j - c <= i));

        let mut latents = vec![z];
        for block in &self.layout.blocks {
            let modlin = block.modulation.expect("AdaLN variants carry modulation");
            let [mt, mv, mf] = ctx.block_mods(&modlin, zy, 4)?;
            z = match cfg.attention {
                AttentionVariant::TimerXl => ctx.sublayer(z, Some(mt), |cx, u| {
                    let flat = cx.g.reshape(u, &[b, 1, v * n, d])?;
                    let h = cx.mha(&block.time_attn, flat, flat, grid_mask.as_ref())?;
                    Ok(cx.g.reshape(h, &[b, v, n, d])?)
                })?,
                AttentionVariant::Prefix => ctx.sublayer(z, Some(mt), |cx, u| match side {
                    Some(s) => {
                        let p = modulate(cx.g, s, mt.gamma, mt.beta)?;
                        let kv = cx.g.concat(&[p, u], 2)?;
                        cx.mha(&block.time_attn, u, kv, prefix_mask.as_ref())
                    }
                    None => cx.mha(&block.time_attn, u, u, time_mask.as_ref()),
                })?,
                _ => ctx.sublayer(z, Some(mt), |cx, u| cx.mha(&block.time_attn, u, u, time_mask.as_ref()))?,
            };
            if let (AttentionVariant::Timexer, Some(s), Some(cross)) = (cfg.attention, side, block.cross_attn.as_ref())
            {
                z = ctx.sublayer(z, Some(mv), |cx, u| {
                    let p = modulate(cx.g, s, mv.gamma, mv.beta)?;
                    cx.mha(cross, u, p, None)
                })?;
            }
            if let Some(va) = block.variate_attn.as_ref() {
                // joint attention over the 1+C tokens of each patch; with C = 0
                // it reduces to the x token attending to itself
                z = ctx.sublayer(z, Some(mv), |cx, u| {
                    let ut = cx.g.permute(u, &[0, 2, 1, 3])?;
                    let ux = cx.g.slice(ut, 2, 0, 1)?;
                    let uc = if v > 1 { Some(cx.g.slice(ut, 2, 1, v)?) } else { None };
                    let proj = |cx: &mut Ctx, px: &Linear, pc: &Linear| -> Result<Var, ModelError> {
                        let a = cx.lin(px, ux)?;
                        match uc {
                            Some(uc) => {
                                let b = cx.lin(pc, uc)?;
                                Ok(cx.g.concat(&[a, b], 2)?)
                            }
                            None => Ok(a),
                        }
                    };
                    let q = proj(cx, &va.x.q, &va.c.q)?;
                    let k = proj(cx, &va.x.k, &va.c.k)?;
                    let vv = proj(cx, &va.x.v, &va.c.v)?;
                    let att = attention_core(cx.g, q, k, vv, cfg.n_heads, None)?;
                    let ax = cx.g.slice(att, 2, 0, 1)?;
                    let mut h = cx.lin(&va.x.o, ax)?;
                    if v > 1 {
                        let ac = cx.g.slice(att, 2, 1, v)?;
                        let hc = cx.lin(&va.c.o, ac)?;
                        h = cx.g.concat(&[h, hc], 2)?;
                    }
                    Ok(cx.g.permute(h, &[0, 2, 1, 3])?)
                })?;
            }
            z = ctx.ffn(block, z, Some(mf))?;
            latents.push(z);
        }
        let zx = if ctx.g.shape(z)[1] > 1 {
            ctx.g.slice(z, 1, 0, 1)?
        } else {
            z
        };
        let velocity = self.head(ctx, zx, Some(zy), b)?;
        Ok(ForwardTrace { velocity, latents })
    }

    fn itrans_input(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<Var, ModelError> {
        let b = input.batch;
        let series = ctx
            .g
            .constant(Tensor::new(vec![b, 1, input.total_len], input.x.clone()).map_err(ModelError::from)?);
        let lin = self
            .layout
            .series_x
            .expect("itransformer carries a series token projection");
        ctx.lin(&lin, series)
    }

    /// Whole-series tokens `[B, 1+C, D]`, attention across variates.
    fn run_itransformer(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<ForwardTrace, ModelError> {
        let b = input.batch;
        let xt = self.itrans_input(ctx, input)?;
        let cov_tok = self.cov_tokens(ctx, input)?;
        let zy = self.condition(ctx, input, cov_tok)?;
        let mut z = match cov_tok {
            Some(c) => ctx.g.concat(&[xt, c], 1)?,
            None => xt,
        };
        let mut latents = vec![z];
        for block in &self.layout.blocks {
            let modlin = block.modulation.expect("AdaLN variants carry modulation");
            let [mt, _, mf] = ctx.block_mods(&modlin, zy, 3)?;
            z = ctx.sublayer(z, Some(mt), |cx, u| cx.mha(&block.time_attn, u, u, None))?;
            z = ctx.ffn(block, z, Some(mf))?;
            latents.push(z);
        }
        let zx = ctx.g.slice(z, 1, 0, 1)?;
        let velocity = self.head(ctx, zx, Some(zy), b)?;
        Ok(ForwardTrace { velocity, latents })
    }

    /// Time token and covariate tokens `[B, 1, 1+C, D]` for token-based conditioning.
    fn cond_tokens(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<Var, ModelError> {
        let (b, d, c) = (input.batch, self.config.d_model, self.config.n_cov);
        let e_time = self.time_encoding(ctx, input);
        let tl = self
            .layout
            .time_token
            .expect("token conditioning carries a time projection");
        let tt = ctx.lin(&tl, e_time)?;
        let tt = ctx.g.reshape(tt, &[b, 1, 1, d])?;
        match self.cov_tokens(ctx, input)? {
            Some(ct) => {
                let ct = ctx.g.reshape(ct, &[b, 1, c, d])?;
                Ok(ctx.g.concat(&[tt, ct], 2)?)
            }
            None => Ok(tt),
        }
    }

    /// Conditioning tokens appended to the patch sequence, no modulation.
    fn run_joint(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<ForwardTrace, ModelError> {
        let cfg = &self.config;
        let (b, n) = (input.batch, cfg.n_patches());
        let m = 1 + cfg.n_cov;
        let zx = self.x_patches(ctx, input)?;
        let cond = self.cond_tokens(ctx, input)?;
        let mut z = ctx.g.concat(&[zx, cond], 2)?;
        let mask = (cfg.time_mask == TimeMask::Causal)
            .then(|| attention_mask(n + m, n + m, |i, j| j >= n || i >= n || j <= i));
        let mut latents = vec![z];
        for block in &self.layout.blocks {
            z = ctx.sublayer(z, None, |cx, u| cx.mha(&block.time_attn, u, u, mask.as_ref()))?;
            z = ctx.ffn(block, z, None)?;
            latents.push(z);
        }
        let zx = ctx.g.slice(z, 2, 0, n)?;
        let velocity = self.head(ctx, zx, None, b)?;
        Ok(ForwardTrace { velocity, latents })
    }

    /// Self time attention on the target plus cross-attention to conditioning tokens.
    fn run_cross(&self, ctx: &mut Ctx, input: &ModelInput) -> Result<ForwardTrace, ModelError> {
        let b = input.batch;
        let mask = self.time_mask(self.config.n_patches());
        let mut z = self.x_patches(ctx, input)?;
        let cond = self.cond_tokens(ctx, input)?;
        let mut latents = vec![z];
        for block in &self.layout.blocks {
            z = ctx.sublayer(z, None, |cx, u| cx.mha(&block.time_attn, u, u, mask.as_ref()))?;
            let cross = block
                .cross_attn
                .as_ref()
                .expect("cross conditioning carries cross attention");
            z = ctx.sublayer(z, None, |cx, u| {
                let kv = cx.g.layer_norm(cond)?;
                cx.mha(cross, u, kv, None)
            })?;
            z = ctx.ffn(block, z, None)?;
            latents.push(z);
        }
        let velocity = self.head(ctx, z, None, b)?;
        Ok(ForwardTrace { velocity, latents })
    }
}

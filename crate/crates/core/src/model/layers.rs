//! Building blocks: affine maps, low-rank adapters, normalization,
//! transformer blocks, channel attention, and the mask-guided fusion.

use rand::Rng;

use super::params::{Binder, ParamId, ParamStore};
use super::tensor::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::raster::{SemanticMask, NUM_CLASSES};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        trainable: bool,
        rng: &mut R,
    ) -> Self {
        let std = 1.0 / (fan_in as f64).sqrt();
        let w = store.add(format!("{name}.w"), Mat::randn(fan_in, fan_out, std, rng), trainable);
        let b = store.add(format!("{name}.b"), Mat::zeros(1, fan_out), trainable);
        Linear { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Binder, x: Var) -> Var {
        let w = p.var(tape, self.w);
        let b = p.var(tape, self.b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

/// A frozen affine map plus a trainable low-rank update `scale * A * B`.
#[derive(Debug, Clone)]
pub struct LoraLinear {
    pub base: Linear,
    pub a: ParamId,
    pub b: ParamId,
    pub scale: f64,
}

impl LoraLinear {
    /// `A` starts random and `B` at zero, so training starts from the base map.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rank: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let base = Linear::new(store, name, fan_in, fan_out, false, rng);
        let a = store.add(
            format!("{name}.lora_a"),
            Mat::randn(fan_in, rank, 1.0 / (fan_in as f64).sqrt(), rng),
            true,
        );
        let b = store.add(format!("{name}.lora_b"), Mat::zeros(rank, fan_out), true);
        LoraLinear { base, a, b, scale }
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Binder, x: Var) -> Var {
        let y = self.base.forward(tape, p, x);
        let a = p.var(tape, self.a);
        let b = p.var(tape, self.b);
        let xa = tape.matmul(x, a);
        let xab = tape.matmul(xa, b);
        let upd = tape.scale(xab, self.scale);
        tape.add(y, upd)
    }

    /// `W + scale * A * B`.
    pub fn effective_weight(&self, store: &ParamStore) -> Mat {
        let mut w = store.value(self.base.w).clone();
        let ab = store.value(self.a).matmul(store.value(self.b));
        for (x, d) in w.data.iter_mut().zip(&ab.data) {
            *x += self.scale * d;
        }
        w
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, trainable: bool) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Mat::filled(1, dim, 1.0), trainable),
            beta: store.add(format!("{name}.beta"), Mat::zeros(1, dim), trainable),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Binder, x: Var) -> Var {
        let n = tape.normalize_rows(x);
        let g = p.var(tape, self.gamma);
        let b = p.var(tape, self.beta);
        let y = tape.mul_row(n, g);
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub enum Proj {
    Plain(Linear),
    Lora(LoraLinear),
}

impl Proj {
    fn forward(&self, tape: &mut Tape, p: &mut Binder, x: Var) -> Var {
        match self {
            Proj::Plain(l) => l.forward(tape, p, x),
            Proj::Lora(l) => l.forward(tape, p, x),
        }
    }
}

/// Pre-norm transformer block.
#[derive(Debug, Clone)]
pub struct Block {
    pub ln1: LayerNorm,
    pub q: Proj,
    pub k: Linear,
    pub v: Proj,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub heads: usize,
    pub causal: bool,
}

pub struct BlockSpec {
    pub dim: usize,
    pub heads: usize,
    pub ffn_mult: usize,
    pub causal: bool,
    /// `Some((rank, scale))` freezes the block and adds adapters on q and v.
    pub lora: Option<(usize, f64)>,
}

impl Block {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, spec: &BlockSpec, rng: &mut R) -> Self {
        let d = spec.dim;
        let trainable = spec.lora.is_none();
        let proj = |store: &mut ParamStore, which: &str, rng: &mut R| match spec.lora {
            Some((r, s)) => Proj::Lora(LoraLinear::new(store, &format!("{name}.{which}"), d, d, r, s, rng)),
            None => Proj::Plain(Linear::new(store, &format!("{name}.{which}"), d, d, true, rng)),
        };
        let ln1 = LayerNorm::new(store, &format!("{name}.ln1"), d, trainable);
        let q = proj(store, "q", rng);
        let k = Linear::new(store, &format!("{name}.k"), d, d, trainable, rng);
        let v = proj(store, "v", rng);
        let o = Linear::new(store, &format!("{name}.o"), d, d, trainable, rng);
        let ln2 = LayerNorm::new(store, &format!("{name}.ln2"), d, trainable);
        let ff1 = Linear::new(store, &format!("{name}.ff1"), d, d * spec.ffn_mult, trainable, rng);
        let ff2 = Linear::new(store, &format!("{name}.ff2"), d * spec.ffn_mult, d, trainable, rng);
        Block { ln1, q, k, v, o, ln2, ff1, ff2, heads: spec.heads, causal: spec.causal }
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Binder, x: Var) -> Var {
        let d = tape.value(x).cols;
        let dh = d / self.heads;
        let h = self.ln1.forward(tape, p, x);
        let q = self.q.forward(tape, p, h);
        let k = self.k.forward(tape, p, h);
        let v = self.v.forward(tape, p, h);
        let mut outs = Vec::with_capacity(self.heads);
        for i in 0..self.heads {
            let qi = tape.slice_cols(q, i * dh, dh);
            let ki = tape.slice_cols(k, i * dh, dh);
            let vi = tape.slice_cols(v, i * dh, dh);
            let kt = tape.transpose(ki);
            let s = tape.matmul(qi, kt);
            let s = tape.scale(s, 1.0 / (dh as f64).sqrt());
            let a = tape.softmax_rows(s, self.causal);
            outs.push(tape.matmul(a, vi));
        }
        let cat = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs) };
        let att = self.o.forward(tape, p, cat);
        let x = tape.add(x, att);
        let h = self.ln2.forward(tape, p, x);
        let f = self.ff1.forward(tape, p, h);
        let f = tape.gelu(f);
        let f = self.ff2.forward(tape, p, f);
        tape.add(x, f)
    }
}

/// Channel gating from max- and mean-pooled descriptors through one shared MLP.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub reduce: Linear,
    pub expand: Linear,
}

impl ChannelAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, hidden: usize, rng: &mut R) -> Self {
        ChannelAttention {
            reduce: Linear::new(store, &format!("{name}.reduce"), channels, hidden, true, rng),
            expand: Linear::new(store, &format!("{name}.expand"), hidden, channels, true, rng),
        }
    }

    fn mlp(&self, tape: &mut Tape, p: &mut Binder, d: Var) -> Var {
        let h = self.reduce.forward(tape, p, d);
        let h = tape.relu(h);
        self.expand.forward(tape, p, h)
    }

    /// Returns the gated map and the `1 x C` gates.
    pub fn forward(&self, tape: &mut Tape, p: &mut Binder, x: Var) -> (Var, Var) {
        let mx = tape.max_rows(x);
        let mn = tape.mean_rows(x);
        let a = self.mlp(tape, p, mx);
        let b = self.mlp(tape, p, mn);
        let s = tape.add(a, b);
        let gates = tape.sigmoid(s);
        (tape.mul_row(x, gates), gates)
    }
}

/// Nearest-neighbor downsampling: output cell `(i, j)` reads `(i*H/h, j*W/w)`.
pub fn resize_nearest(mask: &SemanticMask, h: usize, w: usize) -> Vec<u8> {
    let (mh, mw) = (mask.height(), mask.width());
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            out.push(mask.get(i * mh / h, j * mw / w));
        }
    }
    out
}

/// One-hot rows over the eight land-cover classes.
pub fn one_hot_mask(mask: &SemanticMask, h: usize, w: usize) -> Result<Mat> {
    if let Some(&bad) = mask.cells().iter().find(|&&c| c as usize >= NUM_CLASSES) {
        return Err(Error::UnknownClass(bad));
    }
    let cells = resize_nearest(mask, h, w);
    let mut m = Mat::zeros(h * w, NUM_CLASSES);
    for (i, &c) in cells.iter().enumerate() {
        m.set(i, c as usize, 1.0);
    }
    Ok(m)
}

/// Mask embedding (3x3 conv, normalization over positions, ReLU), concatenation
/// with the visual features, then channel attention.
#[derive(Debug, Clone)]
pub struct Oga {
    pub conv: ParamId,
    pub bn_gamma: ParamId,
    pub bn_beta: ParamId,
    pub attention: ChannelAttention,
}

pub struct OgaOutput {
    pub guided: Var,
    pub gates: Var,
}

impl Oga {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, feat: usize, embed: usize, hidden: usize, rng: &mut R) -> Self {
        let fan_in = 9 * NUM_CLASSES;
        Oga {
            conv: store.add(
                format!("{name}.embed.conv"),
                Mat::randn(fan_in, embed, 1.0 / (fan_in as f64).sqrt(), rng),
                true,
            ),
            bn_gamma: store.add(format!("{name}.embed.bn_gamma"), Mat::filled(1, embed, 1.0), true),
            bn_beta: store.add(format!("{name}.embed.bn_beta"), Mat::zeros(1, embed), true),
            attention: ChannelAttention::new(store, &format!("{name}.attention"), feat + embed, hidden, rng),
        }
    }

    pub fn embed(&self, tape: &mut Tape, p: &mut Binder, one_hot: Var, h: usize, w: usize) -> Var {
        let cols = tape.im2col3x3(one_hot, h, w);
        let k = p.var(tape, self.conv);
        let e = tape.matmul(cols, k);
        let et = tape.transpose(e);
        let n = tape.normalize_rows(et);
        let n = tape.transpose(n);
        let g = p.var(tape, self.bn_gamma);
        let b = p.var(tape, self.bn_beta);
        let y = tape.mul_row(n, g);
        let y = tape.add_row(y, b);
        tape.relu(y)
    }

    /// `features` is `(h*w) x C`; the mask is resized to `h x w`.
    pub fn fuse(
        &self,
        tape: &mut Tape,
        p: &mut Binder,
        features: Var,
        mask: &SemanticMask,
        h: usize,
        w: usize,
    ) -> Result<OgaOutput> {
        let oh = tape.constant(one_hot_mask(mask, h, w)?);
        let emb = self.embed(tape, p, oh, h, w);
        let cat = tape.concat_cols(&[features, emb]);
        let (guided, gates) = self.attention.forward(tape, p, cat);
        Ok(OgaOutput { guided, gates })
    }
}

/// Two affine maps with a GELU between them.
#[derive(Debug, Clone)]
pub struct Mmp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mmp {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, input: usize, dim: usize, rng: &mut R) -> Self {
        Mmp {
            fc1: Linear::new(store, &format!("{name}.fc1"), input, dim, true, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), dim, dim, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &mut Binder, x: Var) -> Var {
        let h = self.fc1.forward(tape, p, x);
        let h = tape.gelu(h);
        self.fc2.forward(tape, p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::LandCover;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn finite_diff_check(
        store: &ParamStore,
        inputs: &[Mat],
        f: &dyn Fn(&mut Tape, &mut Binder, &[Var]) -> Var,
    ) {
        // scalar = sum of outputs weighted by fixed random weights
        fn run<'s>(
            s: &'s ParamStore,
            ins: &[Mat],
            train: bool,
            f: &dyn Fn(&mut Tape, &mut Binder, &[Var]) -> Var,
        ) -> (Tape, Binder<'s>, Vec<Var>, Var) {
            let mut tape = Tape::new();
            let mut b = Binder::new(s, train);
            let vars: Vec<Var> = ins.iter().map(|m| tape.leaf(m.clone(), train)).collect();
            let out = f(&mut tape, &mut b, &vars);
            let (r, c) = tape.value(out).shape();
            let wts = tape.constant(Mat::randn(r, c, 1.0, &mut ChaCha8Rng::seed_from_u64(99)));
            let prod = tape.mul(out, wts);
            let one_r = tape.constant(Mat::filled(1, r, 1.0));
            let one_c = tape.constant(Mat::filled(c, 1, 1.0));
            let s1 = tape.matmul(one_r, prod);
            let loss = tape.matmul(s1, one_c);
            (tape, b, vars, loss)
        }
        let (mut tape, binder, vars, loss) = run(store, inputs, true, f);
        tape.backward(loss);
        let h = 1e-6;
        let check = |analytic: f64, fd: f64, what: &str| {
            let denom = analytic.abs().max(fd.abs()).max(1e-6);
            assert!((analytic - fd).abs() / denom < 1e-4, "{what}: analytic {analytic} fd {fd}");
        };
        let eval = |s: &ParamStore, ins: &[Mat]| {
            let (t, _, _, l) = run(s, ins, false, f);
            t.value(l).scalar()
        };
        for (k, m) in inputs.iter().enumerate() {
            let g = tape.grad(vars[k]).cloned().unwrap_or_else(|| Mat::zeros(m.rows, m.cols));
            for i in 0..m.data.len() {
                let mut up = inputs.to_vec();
                up[k].data[i] += h;
                let mut dn = inputs.to_vec();
                dn[k].data[i] -= h;
                check(g.data[i], (eval(store, &up) - eval(store, &dn)) / (2.0 * h), &format!("input {k}[{i}]"));
            }
        }
        for (id, gm) in binder.grads(&tape) {
            for i in 0..gm.data.len() {
                let mut up = store.clone();
                up.value_mut(id).data[i] += h;
                let mut dn = store.clone();
                dn.value_mut(id).data[i] -= h;
                let fd = (eval(&up, inputs) - eval(&dn, inputs)) / (2.0 * h);
                check(gm.data[i], fd, &format!("{}[{i}]", store.get(id).name));
            }
        }
    }

    fn mask_3x3() -> SemanticMask {
        let cells = vec![0, 1, 2, 1, 1, 3, 5, 6, 7];
        SemanticMask::new(3, 3, cells, 0.3).unwrap()
    }

    #[test]
    fn oga_gradients() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let oga = Oga::new(&mut s, "oga", 3, 2, 2, &mut r);
        let feats = Mat::randn(9, 3, 1.0, &mut r);
        let mask = mask_3x3();
        finite_diff_check(&s, &[feats], &|t, b, v| oga.fuse(t, b, v[0], &mask, 3, 3).unwrap().guided);
    }

    #[test]
    fn mmp_gradients() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let mmp = Mmp::new(&mut s, "mmp", 3, 3, &mut r);
        let x = Mat::randn(3, 3, 1.0, &mut r);
        finite_diff_check(&s, &[x], &|t, b, v| mmp.forward(t, b, v[0]));
    }

    #[test]
    fn block_gradients() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let spec = BlockSpec { dim: 4, heads: 2, ffn_mult: 2, causal: true, lora: None };
        let blk = Block::new(&mut s, "blk", &spec, &mut r);
        let x = Mat::randn(3, 4, 1.0, &mut r);
        finite_diff_check(&s, &[x], &|t, b, v| blk.forward(t, b, v[0]));
    }

    #[test]
    fn lora_gradients_reach_adapters_only() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let l = LoraLinear::new(&mut s, "l", 3, 4, 2, 2.0, &mut r);
        // non-zero B so the A gradient is non-trivial
        *s.value_mut(l.b) = Mat::randn(2, 4, 0.5, &mut r);
        let x = Mat::randn(2, 3, 1.0, &mut r);
        finite_diff_check(&s, &[x.clone()], &|t, b, v| l.forward(t, b, v[0]));
        let mut tape = Tape::new();
        let mut b = Binder::new(&s, true);
        let xv = tape.constant(x);
        let y = l.forward(&mut tape, &mut b, xv);
        let sum = tape.mean_rows(y);
        let ones = tape.constant(Mat::filled(4, 1, 1.0));
        let loss = tape.matmul(sum, ones);
        tape.backward(loss);
        let names: Vec<&str> = b.grads(&tape).iter().map(|(id, _)| s.get(*id).name.as_str()).collect();
        assert_eq!(names, vec!["l.lora_a", "l.lora_b"]);
    }

    #[test]
    fn zero_adapter_is_the_base_map() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let l = LoraLinear::new(&mut s, "l", 5, 6, 3, 2.0, &mut r);
        let x = Mat::randn(4, 5, 1.0, &mut r);
        let run = |s: &ParamStore, lora: bool| {
            let mut tape = Tape::new();
            let mut b = Binder::new(s, false);
            let xv = tape.constant(x.clone());
            let y = if lora { l.forward(&mut tape, &mut b, xv) } else { l.base.forward(&mut tape, &mut b, xv) };
            tape.value(y).clone()
        };
        assert_eq!(run(&s, true), run(&s, false));
        // A zero instead of B
        *s.value_mut(l.b) = Mat::randn(3, 6, 1.0, &mut r);
        *s.value_mut(l.a) = Mat::zeros(5, 3);
        assert_eq!(run(&s, true), run(&s, false));
        assert_eq!(l.effective_weight(&s), *s.value(l.base.w));
    }

    #[test]
    fn oga_shapes_and_gates() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let oga = Oga::new(&mut s, "oga", 6, 4, 2, &mut r);
        let mut tape = Tape::new();
        let mut b = Binder::new(&s, false);
        let f = tape.constant(Mat::randn(9, 6, 1.0, &mut r));
        let out = oga.fuse(&mut tape, &mut b, f, &mask_3x3(), 3, 3).unwrap();
        assert_eq!(tape.value(out.guided).shape(), (9, 10));
        assert!(tape.value(out.gates).data.iter().all(|&g| g > 0.0 && g < 1.0));

        let mut bad = mask_3x3();
        bad.set(0, 0, crate::raster::IGNORE);
        let f = tape.constant(Mat::zeros(9, 6));
        assert!(matches!(oga.fuse(&mut tape, &mut b, f, &bad, 3, 3), Err(Error::UnknownClass(255))));
    }

    #[test]
    fn zeroed_channel_stays_zero() {
        let mut r = rng();
        let mut s = ParamStore::new();
        let oga = Oga::new(&mut s, "oga", 4, 2, 2, &mut r);
        let mut feats = Mat::randn(9, 4, 1.0, &mut r);
        for row in 0..9 {
            feats.set(row, 2, 0.0);
        }
        let mut tape = Tape::new();
        let mut b = Binder::new(&s, false);
        let f = tape.constant(feats);
        let out = oga.fuse(&mut tape, &mut b, f, &mask_3x3(), 3, 3).unwrap();
        let g = tape.value(out.guided);
        assert!((0..9).all(|row| g.get(row, 2) == 0.0));
    }

    #[test]
    fn gates_follow_channel_permutation() {
        let mut r = rng();
        let c = 5;
        let mut s = ParamStore::new();
        let att = ChannelAttention::new(&mut s, "ca", c, 2, &mut r);
        let x = Mat::randn(6, c, 1.0, &mut r);
        let perm = [3, 0, 4, 1, 2];

        // Permuted weights: rows of reduce.w, columns of expand.w and expand.b.
        let mut sp = s.clone();
        let permute_rows = |m: &Mat| {
            let mut o = m.clone();
            for (i, &pi) in perm.iter().enumerate() {
                o.row_mut(i).copy_from_slice(m.row(pi));
            }
            o
        };
        let permute_cols = |m: &Mat| {
            let mut o = m.clone();
            for row in 0..m.rows {
                for (j, &pj) in perm.iter().enumerate() {
                    o.set(row, j, m.get(row, pj));
                }
            }
            o
        };
        *sp.value_mut(att.reduce.w) = permute_rows(s.value(att.reduce.w));
        *sp.value_mut(att.expand.w) = permute_cols(s.value(att.expand.w));
        *sp.value_mut(att.expand.b) = permute_cols(s.value(att.expand.b));
        let xp = permute_cols(&x);

        let gates = |s: &ParamStore, x: &Mat| {
            let mut tape = Tape::new();
            let mut b = Binder::new(s, false);
            let xv = tape.constant(x.clone());
            let (_, g) = att.forward(&mut tape, &mut b, xv);
            tape.value(g).clone()
        };
        let g = gates(&s, &x);
        let gp = gates(&sp, &xp);
        for (j, &pj) in perm.iter().enumerate() {
            assert!((gp.data[j] - g.data[pj]).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_resize() {
        let mut m = SemanticMask::filled(64, 64, LandCover::Background, 0.3).unwrap();
        m.fill_rect(32, 0, 64, 32, LandCover::Water);
        assert_eq!(resize_nearest(&m, 2, 2), vec![0, 0, 3, 0]);
    }
}

//! LSTM taggers: a single forward layer, and a stacked bidirectional
//! variant whose head reads the concatenated last-layer states [→h; ←h].
//!
//! Cell recurrence, per step:
//!   i = σ(W_xi x + W_hi h′ + b_i)      f = σ(W_xf x + W_hf h′ + b_f)
//!   o = σ(W_xo x + W_ho h′ + b_o)      c̃ = tanh(W_xc x + W_hc h′ + b_c)
//!   c = f ⊙ c′ + i ⊙ c̃               h = o ⊙ tanh(c)
//! with h′, c′ the previous step's state (zeros at the sequence edge).
//! The candidate nonlinearity can be switched to σ via
//! `lstm_candidate_sigmoid`; the output activation stays tanh.
//!
//! Input-to-gate weights are Gaussian, recurrent weights orthogonal, and
//! the forget bias starts at 1.0 so early training does not flush the
//! cell. In the stack, layer l > 1 consumes the dropout-masked concat of
//! layer l−1; each direction runs its own BPTT in reverse scan order.

use super::{
    clear_opt, head_backward, head_forward, input_backward, input_forward, loss_seed, maybe_bias,
    push_opt, push_opt_mut, scatter_tables, sgd_opt, Cache, DropScope, Forward, Masks, Model,
    NetConfig,
};
use crate::dynwin::{DynwinCache, GateGrads, GateScaling};
use crate::features::{SentenceFeatures, TableGrads};
use crate::numerics::{
    axpy, dsigmoid_from_output, dtanh_from_output, init_gaussian, init_orthogonal, sigmoid_vec,
    tanh_vec, Matrix, Rng, Vector,
};

/// Weights of one LSTM direction at one depth: four input maps (H × in),
/// four recurrent maps (H × H), four optional biases.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmLayer {
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i: Option<Matrix>,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Option<Matrix>,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Option<Matrix>,
    pub w_xc: Matrix,
    pub w_hc: Matrix,
    pub b_c: Option<Matrix>,
}

impl LstmLayer {
    pub fn init(in_dim: usize, h: usize, biases: bool, scale: f64, rng: &mut Rng) -> LstmLayer {
        let mut layer = LstmLayer {
            w_xi: init_gaussian(h, in_dim, in_dim, scale, rng),
            w_hi: init_orthogonal(h, h, rng),
            b_i: maybe_bias(h, biases),
            w_xf: init_gaussian(h, in_dim, in_dim, scale, rng),
            w_hf: init_orthogonal(h, h, rng),
            b_f: maybe_bias(h, biases),
            w_xo: init_gaussian(h, in_dim, in_dim, scale, rng),
            w_ho: init_orthogonal(h, h, rng),
            b_o: maybe_bias(h, biases),
            w_xc: init_gaussian(h, in_dim, in_dim, scale, rng),
            w_hc: init_orthogonal(h, h, rng),
            b_c: maybe_bias(h, biases),
        };
        if let Some(b) = &mut layer.b_f {
            b.fill(1.0);
        }
        layer
    }

    fn hidden(&self) -> usize {
        self.w_hi.rows()
    }

    pub(crate) fn push_blocks<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        for (name, m, b) in [
            ("i", (&self.w_xi, &self.w_hi), &self.b_i),
            ("f", (&self.w_xf, &self.w_hf), &self.b_f),
            ("o", (&self.w_xo, &self.w_ho), &self.b_o),
            ("c", (&self.w_xc, &self.w_hc), &self.b_c),
        ] {
            out.push((format!("{prefix}W_x{name}"), m.0));
            out.push((format!("{prefix}W_h{name}"), m.1));
            push_opt(out, &format!("{prefix}b_{name}"), b);
        }
    }

    pub(crate) fn push_blocks_mut<'a>(
        &'a mut self,
        prefix: &str,
        out: &mut Vec<(String, &'a mut Matrix)>,
    ) {
        out.push((format!("{prefix}W_xi"), &mut self.w_xi));
        out.push((format!("{prefix}W_hi"), &mut self.w_hi));
        push_opt_mut(out, &format!("{prefix}b_i"), &mut self.b_i);
        out.push((format!("{prefix}W_xf"), &mut self.w_xf));
        out.push((format!("{prefix}W_hf"), &mut self.w_hf));
        push_opt_mut(out, &format!("{prefix}b_f"), &mut self.b_f);
        out.push((format!("{prefix}W_xo"), &mut self.w_xo));
        out.push((format!("{prefix}W_ho"), &mut self.w_ho));
        push_opt_mut(out, &format!("{prefix}b_o"), &mut self.b_o);
        out.push((format!("{prefix}W_xc"), &mut self.w_xc));
        out.push((format!("{prefix}W_hc"), &mut self.w_hc));
        push_opt_mut(out, &format!("{prefix}b_c"), &mut self.b_c);
    }
}

#[derive(Clone, Debug)]
pub struct LstmLayerGrads {
    pub w_xi: Matrix,
    pub w_hi: Matrix,
    pub b_i: Option<Matrix>,
    pub w_xf: Matrix,
    pub w_hf: Matrix,
    pub b_f: Option<Matrix>,
    pub w_xo: Matrix,
    pub w_ho: Matrix,
    pub b_o: Option<Matrix>,
    pub w_xc: Matrix,
    pub w_hc: Matrix,
    pub b_c: Option<Matrix>,
}

impl LstmLayerGrads {
    pub fn zeros_like(p: &LstmLayer) -> LstmLayerGrads {
        let zero = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        let zb = |b: &Option<Matrix>| b.as_ref().map(|b| Matrix::zeros(1, b.cols()));
        LstmLayerGrads {
            w_xi: zero(&p.w_xi),
            w_hi: zero(&p.w_hi),
            b_i: zb(&p.b_i),
            w_xf: zero(&p.w_xf),
            w_hf: zero(&p.w_hf),
            b_f: zb(&p.b_f),
            w_xo: zero(&p.w_xo),
            w_ho: zero(&p.w_ho),
            b_o: zb(&p.b_o),
            w_xc: zero(&p.w_xc),
            w_hc: zero(&p.w_hc),
            b_c: zb(&p.b_c),
        }
    }

    pub fn apply_sgd(&mut self, p: &mut LstmLayer, lr: f64) {
        for (g, w) in [
            (&mut self.w_xi, &mut p.w_xi),
            (&mut self.w_hi, &mut p.w_hi),
            (&mut self.w_xf, &mut p.w_xf),
            (&mut self.w_hf, &mut p.w_hf),
            (&mut self.w_xo, &mut p.w_xo),
            (&mut self.w_ho, &mut p.w_ho),
            (&mut self.w_xc, &mut p.w_xc),
            (&mut self.w_hc, &mut p.w_hc),
        ] {
            w.add_scaled(g, -lr);
            g.fill(0.0);
        }
        sgd_opt(&mut p.b_i, &mut self.b_i, lr);
        sgd_opt(&mut p.b_f, &mut self.b_f, lr);
        sgd_opt(&mut p.b_o, &mut self.b_o, lr);
        sgd_opt(&mut p.b_c, &mut self.b_c, lr);
    }

    pub fn clear(&mut self) {
        for g in [
            &mut self.w_xi,
            &mut self.w_hi,
            &mut self.w_xf,
            &mut self.w_hf,
            &mut self.w_xo,
            &mut self.w_ho,
            &mut self.w_xc,
            &mut self.w_hc,
        ] {
            g.fill(0.0);
        }
        clear_opt(&mut self.b_i);
        clear_opt(&mut self.b_f);
        clear_opt(&mut self.b_o);
        clear_opt(&mut self.b_c);
    }

    pub(crate) fn push_blocks<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        for (name, m, b) in [
            ("i", (&self.w_xi, &self.w_hi), &self.b_i),
            ("f", (&self.w_xf, &self.w_hf), &self.b_f),
            ("o", (&self.w_xo, &self.w_ho), &self.b_o),
            ("c", (&self.w_xc, &self.w_hc), &self.b_c),
        ] {
            out.push((format!("{prefix}W_x{name}"), m.0));
            out.push((format!("{prefix}W_h{name}"), m.1));
            push_opt(out, &format!("{prefix}b_{name}"), b);
        }
    }
}

/// Per-step forward record, everything `step_backward` reads.
#[derive(Clone, Debug)]
struct StepCache {
    /// Input fed to this step (x̃ at depth 1, dropped concat above).
    x: Vector,
    h_prev: Vector,
    c_prev: Vector,
    i: Vector,
    f: Vector,
    o: Vector,
    cand: Vector,
    tanh_c: Vector,
    c: Vector,
    h: Vector,
}

fn step(
    p: &LstmLayer,
    x: Vector,
    h_prev: Vector,
    c_prev: Vector,
    cand_sigmoid: bool,
) -> StepCache {
    let gate_pre = |wx: &Matrix, wh: &Matrix, b: &Option<Matrix>| {
        let mut z = wx.matvec(&x);
        let rec = wh.matvec(&h_prev);
        axpy(&mut z, 1.0, &rec);
        super::add_bias(&mut z, b);
        z
    };
    let i = sigmoid_vec(&gate_pre(&p.w_xi, &p.w_hi, &p.b_i));
    let f = sigmoid_vec(&gate_pre(&p.w_xf, &p.w_hf, &p.b_f));
    let o = sigmoid_vec(&gate_pre(&p.w_xo, &p.w_ho, &p.b_o));
    let zc = gate_pre(&p.w_xc, &p.w_hc, &p.b_c);
    let cand = if cand_sigmoid {
        sigmoid_vec(&zc)
    } else {
        tanh_vec(&zc)
    };
    let c: Vector = (0..p.hidden())
        .map(|j| f[j] * c_prev[j] + i[j] * cand[j])
        .collect();
    let tanh_c = tanh_vec(&c);
    let h: Vector = o.iter().zip(&tanh_c).map(|(&ov, &tv)| ov * tv).collect();
    StepCache {
        x,
        h_prev,
        c_prev,
        i,
        f,
        o,
        cand,
        tanh_c,
        c,
        h,
    }
}

/// Backward through one step. `dh` is the total gradient on h (head,
/// upper layer, and recurrence already summed); `dc_in` arrives from the
/// next step's cell path. Returns (dx, dh_prev, dc_prev).
fn step_backward(
    p: &LstmLayer,
    sc: &StepCache,
    dh: &[f64],
    dc_in: &[f64],
    g: &mut LstmLayerGrads,
    cand_sigmoid: bool,
) -> (Vector, Vector, Vector) {
    let h = p.hidden();
    let mut dc = vec![0.0; h];
    let mut dzi = vec![0.0; h];
    let mut dzf = vec![0.0; h];
    let mut dzo = vec![0.0; h];
    let mut dzc = vec![0.0; h];
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        dzo[j] = dh[j] * sc.tanh_c[j] * dsigmoid_from_output(sc.o[j]);
        dc[j] = dc_in[j] + dh[j] * sc.o[j] * dtanh_from_output(sc.tanh_c[j]);
        dzi[j] = dc[j] * sc.cand[j] * dsigmoid_from_output(sc.i[j]);
        dzf[j] = dc[j] * sc.c_prev[j] * dsigmoid_from_output(sc.f[j]);
        let dcand = if cand_sigmoid {
            dsigmoid_from_output(sc.cand[j])
        } else {
            dtanh_from_output(sc.cand[j])
        };
        dzc[j] = dc[j] * sc.i[j] * dcand;
        dc_prev[j] = dc[j] * sc.f[j];
    }

    let mut dx = vec![0.0; sc.x.len()];
    let mut dh_prev = vec![0.0; h];
    for (dz, wx, wh, gx, gh, gb) in [
        (&dzi, &p.w_xi, &p.w_hi, &mut g.w_xi, &mut g.w_hi, &mut g.b_i),
        (&dzf, &p.w_xf, &p.w_hf, &mut g.w_xf, &mut g.w_hf, &mut g.b_f),
        (&dzo, &p.w_xo, &p.w_ho, &mut g.w_xo, &mut g.w_ho, &mut g.b_o),
        (&dzc, &p.w_xc, &p.w_hc, &mut g.w_xc, &mut g.w_hc, &mut g.b_c),
    ] {
        gx.add_outer(dz, &sc.x);
        gh.add_outer(dz, &sc.h_prev);
        if let Some(b) = gb {
            axpy(b.row_mut(0), 1.0, dz);
        }
        axpy(&mut dx, 1.0, &wx.matvec_t(dz));
        axpy(&mut dh_prev, 1.0, &wh.matvec_t(dz));
    }
    (dx, dh_prev, dc_prev)
}

// ---- single forward-only LSTM ----

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub layer: LstmLayer,
    /// K × H
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl LstmParams {
    pub fn init(cfg: &NetConfig, k: usize, rng: &mut Rng) -> LstmParams {
        let h = cfg.hidden;
        LstmParams {
            layer: LstmLayer::init(cfg.input_dim(), h, cfg.biases, cfg.init_scale, rng),
            w_hy: init_gaussian(k, h, h, cfg.init_scale, rng),
            b_y: maybe_bias(k, cfg.biases),
        }
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        self.layer.push_blocks("", out);
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }

    pub(crate) fn push_blocks_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Matrix)>) {
        self.layer.push_blocks_mut("", out);
        out.push(("W_hy".into(), &mut self.w_hy));
        push_opt_mut(out, "b_y", &mut self.b_y);
    }
}

#[derive(Clone, Debug)]
pub struct LstmGrads {
    pub layer: LstmLayerGrads,
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl LstmGrads {
    pub fn zeros_like(p: &LstmParams) -> LstmGrads {
        LstmGrads {
            layer: LstmLayerGrads::zeros_like(&p.layer),
            w_hy: Matrix::zeros(p.w_hy.rows(), p.w_hy.cols()),
            b_y: p.b_y.as_ref().map(|b| Matrix::zeros(1, b.cols())),
        }
    }

    pub fn apply_sgd(&mut self, p: &mut LstmParams, lr: f64) {
        self.layer.apply_sgd(&mut p.layer, lr);
        p.w_hy.add_scaled(&self.w_hy, -lr);
        self.w_hy.fill(0.0);
        sgd_opt(&mut p.b_y, &mut self.b_y, lr);
    }

    pub fn clear(&mut self) {
        self.layer.clear();
        self.w_hy.fill(0.0);
        clear_opt(&mut self.b_y);
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        self.layer.push_blocks("", out);
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }
}

#[derive(Clone, Debug)]
pub(crate) struct LstmCache {
    dynwin: Vec<DynwinCache>,
    steps: Vec<StepCache>,
    hd: Vec<Vector>,
}

pub(crate) fn forward(m: &Model, p: &LstmParams, sf: &SentenceFeatures, masks: &Masks) -> Forward {
    let h_dim = m.cfg.hidden;
    let mut cache = LstmCache {
        dynwin: Vec::with_capacity(sf.len()),
        steps: Vec::with_capacity(sf.len()),
        hd: Vec::with_capacity(sf.len()),
    };
    let mut probs = Vec::with_capacity(sf.len());
    let mut gates = Vec::with_capacity(sf.len());
    for t in 0..sf.len() {
        let (xt, dc) = input_forward(m, sf, t, &masks.gate[t]);
        let (h_prev, c_prev) = match cache.steps.last() {
            Some(prev) => (prev.h.clone(), prev.c.clone()),
            None => (vec![0.0; h_dim], vec![0.0; h_dim]),
        };
        let sc = step(&p.layer, xt, h_prev, c_prev, m.cfg.lstm_candidate_sigmoid);
        let hd = masks.hidden[0][t].apply(&sc.h);
        probs.push(head_forward(&p.w_hy, &p.b_y, &hd));
        gates.push(dc.r.clone());
        cache.dynwin.push(dc);
        cache.steps.push(sc);
        cache.hd.push(hd);
    }
    Forward {
        probs,
        gates,
        cache: Cache::Lstm(cache),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    m: &Model,
    p: &LstmParams,
    sf: &SentenceFeatures,
    masks: &Masks,
    fwd: &Forward,
    cache: &LstmCache,
    gold: &[usize],
    g: &mut LstmGrads,
    gate_grads: &mut Option<GateGrads>,
    tables: &mut TableGrads,
) {
    let t_len = sf.len();
    let f = m.cfg.feature.token_dim();
    let h_dim = m.cfg.hidden;
    let mut feat_grads = vec![vec![0.0; f]; t_len];
    let mut pad_grad = vec![0.0; f];

    let mut dh_carry = vec![0.0; h_dim];
    let mut dc_carry = vec![0.0; h_dim];
    for t in (0..t_len).rev() {
        let dz = loss_seed(&fwd.probs[t], gold[t], t_len);
        let dhd = head_backward(&p.w_hy, &mut g.w_hy, &mut g.b_y, &dz, &cache.hd[t]);
        let mut dh = masks.hidden[0][t].apply(&dhd);
        axpy(&mut dh, 1.0, &dh_carry);
        let (dx, dh_prev, dc_prev) = step_backward(
            &p.layer,
            &cache.steps[t],
            &dh,
            &dc_carry,
            &mut g.layer,
            m.cfg.lstm_candidate_sigmoid,
        );
        dh_carry = dh_prev;
        dc_carry = dc_prev;
        input_backward(
            m,
            sf,
            t,
            &cache.dynwin[t],
            &dx,
            gate_grads,
            &mut feat_grads,
            &mut pad_grad,
        );
    }
    scatter_tables(m, sf, &feat_grads, &pad_grad, tables);
}

// ---- stacked bidirectional LSTM ----

/// Forward and backward directions at one depth.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLayer {
    pub fwd: LstmLayer,
    pub bwd: LstmLayer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    pub layers: Vec<BiLayer>,
    /// K × 2H, over [→h; ←h].
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl BiLstmParams {
    pub fn init(cfg: &NetConfig, k: usize, rng: &mut Rng) -> BiLstmParams {
        let h = cfg.hidden;
        let layers = (0..cfg.depth)
            .map(|l| {
                let in_dim = if l == 0 { cfg.input_dim() } else { 2 * h };
                BiLayer {
                    fwd: LstmLayer::init(in_dim, h, cfg.biases, cfg.init_scale, rng),
                    bwd: LstmLayer::init(in_dim, h, cfg.biases, cfg.init_scale, rng),
                }
            })
            .collect();
        BiLstmParams {
            layers,
            w_hy: init_gaussian(k, 2 * h, 2 * h, cfg.init_scale, rng),
            b_y: maybe_bias(k, cfg.biases),
        }
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.fwd.push_blocks(&format!("l{}.f.", l + 1), out);
            layer.bwd.push_blocks(&format!("l{}.b.", l + 1), out);
        }
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }

    pub(crate) fn push_blocks_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Matrix)>) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.fwd.push_blocks_mut(&format!("l{}.f.", l + 1), out);
            layer.bwd.push_blocks_mut(&format!("l{}.b.", l + 1), out);
        }
        out.push(("W_hy".into(), &mut self.w_hy));
        push_opt_mut(out, "b_y", &mut self.b_y);
    }
}

#[derive(Clone, Debug)]
pub struct BiLayerGrads {
    pub fwd: LstmLayerGrads,
    pub bwd: LstmLayerGrads,
}

#[derive(Clone, Debug)]
pub struct BiLstmGrads {
    pub layers: Vec<BiLayerGrads>,
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl BiLstmGrads {
    pub fn zeros_like(p: &BiLstmParams) -> BiLstmGrads {
        BiLstmGrads {
            layers: p
                .layers
                .iter()
                .map(|l| BiLayerGrads {
                    fwd: LstmLayerGrads::zeros_like(&l.fwd),
                    bwd: LstmLayerGrads::zeros_like(&l.bwd),
                })
                .collect(),
            w_hy: Matrix::zeros(p.w_hy.rows(), p.w_hy.cols()),
            b_y: p.b_y.as_ref().map(|b| Matrix::zeros(1, b.cols())),
        }
    }

    pub fn apply_sgd(&mut self, p: &mut BiLstmParams, lr: f64) {
        for (g, l) in self.layers.iter_mut().zip(&mut p.layers) {
            g.fwd.apply_sgd(&mut l.fwd, lr);
            g.bwd.apply_sgd(&mut l.bwd, lr);
        }
        p.w_hy.add_scaled(&self.w_hy, -lr);
        self.w_hy.fill(0.0);
        sgd_opt(&mut p.b_y, &mut self.b_y, lr);
    }

    pub fn clear(&mut self) {
        for g in &mut self.layers {
            g.fwd.clear();
            g.bwd.clear();
        }
        self.w_hy.fill(0.0);
        clear_opt(&mut self.b_y);
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.fwd.push_blocks(&format!("l{}.f.", l + 1), out);
            layer.bwd.push_blocks(&format!("l{}.b.", l + 1), out);
        }
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }
}

#[derive(Clone, Debug)]
struct BiLayerCache {
    /// Indexed by token position regardless of scan order.
    fwd: Vec<StepCache>,
    bwd: Vec<StepCache>,
}

#[derive(Clone, Debug)]
pub(crate) struct BiLstmCache {
    dynwin: Vec<DynwinCache>,
    layers: Vec<BiLayerCache>,
    /// Dropped top-layer concat, as fed to the head.
    head_in: Vec<Vector>,
}

/// The dropout scalings applied to layer `l`'s output concat, or None for
/// the identity (inner layers under `FinalOnly`).
fn layer_scaling<'a>(m: &Model, masks: &'a Masks, l: usize) -> Option<&'a [GateScaling]> {
    match m.cfg.hidden_drop_scope {
        DropScope::AllLayers => Some(&masks.hidden[l]),
        DropScope::FinalOnly if l + 1 == m.cfg.depth => Some(&masks.hidden[0]),
        DropScope::FinalOnly => None,
    }
}

fn scan_direction(
    layer: &LstmLayer,
    inputs: &[Vector],
    reverse: bool,
    cand_sigmoid: bool,
) -> Vec<StepCache> {
    let t_len = inputs.len();
    let h = layer.hidden();
    let mut out: Vec<Option<StepCache>> = vec![None; t_len];
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for &t in &order {
        let sc = step(layer, inputs[t].clone(), h_prev, c_prev, cand_sigmoid);
        h_prev = sc.h.clone();
        c_prev = sc.c.clone();
        out[t] = Some(sc);
    }
    out.into_iter().map(|sc| sc.unwrap()).collect()
}

pub(crate) fn bi_forward(
    m: &Model,
    p: &BiLstmParams,
    sf: &SentenceFeatures,
    masks: &Masks,
) -> Forward {
    let t_len = sf.len();
    let cand = m.cfg.lstm_candidate_sigmoid;
    let mut dynwin = Vec::with_capacity(t_len);
    let mut gates = Vec::with_capacity(t_len);
    let mut inputs: Vec<Vector> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let (xt, dc) = input_forward(m, sf, t, &masks.gate[t]);
        gates.push(dc.r.clone());
        dynwin.push(dc);
        inputs.push(xt);
    }

    let mut layers = Vec::with_capacity(p.layers.len());
    for (l, bl) in p.layers.iter().enumerate() {
        let fwd = scan_direction(&bl.fwd, &inputs, false, cand);
        let bwd = scan_direction(&bl.bwd, &inputs, true, cand);
        inputs = (0..t_len)
            .map(|t| {
                let mut concat = fwd[t].h.clone();
                concat.extend_from_slice(&bwd[t].h);
                match layer_scaling(m, masks, l) {
                    Some(s) => s[t].apply(&concat),
                    None => concat,
                }
            })
            .collect();
        layers.push(BiLayerCache { fwd, bwd });
    }

    // `inputs` is now the dropped top-layer concat.
    let probs = inputs
        .iter()
        .map(|v| head_forward(&p.w_hy, &p.b_y, v))
        .collect();
    Forward {
        probs,
        gates,
        cache: Cache::BiLstm(BiLstmCache {
            dynwin,
            layers,
            head_in: inputs,
        }),
    }
}

/// BPTT for one direction of one layer. `d_h[t]` is the gradient arriving
/// on h_t from outside the recurrence (concat consumers); returns the
/// gradient on this direction's inputs.
fn backprop_direction(
    layer: &LstmLayer,
    steps: &[StepCache],
    d_h: &[Vector],
    reverse: bool,
    g: &mut LstmLayerGrads,
    cand_sigmoid: bool,
) -> Vec<Vector> {
    let t_len = steps.len();
    let h = layer.hidden();
    let mut dxs: Vec<Vector> = vec![Vec::new(); t_len];
    // Walk opposite to the scan order so state gradients flow to the
    // step that produced the state.
    let order: Vec<usize> = if reverse {
        (0..t_len).collect()
    } else {
        (0..t_len).rev().collect()
    };
    let mut dh_carry = vec![0.0; h];
    let mut dc_carry = vec![0.0; h];
    for &t in &order {
        let mut dh = d_h[t].clone();
        axpy(&mut dh, 1.0, &dh_carry);
        let (dx, dh_prev, dc_prev) =
            step_backward(layer, &steps[t], &dh, &dc_carry, g, cand_sigmoid);
        dh_carry = dh_prev;
        dc_carry = dc_prev;
        dxs[t] = dx;
    }
    dxs
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn bi_backward(
    m: &Model,
    p: &BiLstmParams,
    sf: &SentenceFeatures,
    masks: &Masks,
    fwd: &Forward,
    cache: &BiLstmCache,
    gold: &[usize],
    g: &mut BiLstmGrads,
    gate_grads: &mut Option<GateGrads>,
    tables: &mut TableGrads,
) {
    let t_len = sf.len();
    let f = m.cfg.feature.token_dim();
    let h_dim = m.cfg.hidden;
    let cand = m.cfg.lstm_candidate_sigmoid;
    let mut feat_grads = vec![vec![0.0; f]; t_len];
    let mut pad_grad = vec![0.0; f];

    // Gradient on the (possibly dropped) output concat of the top layer.
    let mut d_out: Vec<Vector> = (0..t_len)
        .map(|t| {
            let dz = loss_seed(&fwd.probs[t], gold[t], t_len);
            head_backward(&p.w_hy, &mut g.w_hy, &mut g.b_y, &dz, &cache.head_in[t])
        })
        .collect();

    for l in (0..p.layers.len()).rev() {
        // Through the dropout on this layer's concat, then split into the
        // two directions' h gradients.
        let mut dh_f: Vec<Vector> = Vec::with_capacity(t_len);
        let mut dh_b: Vec<Vector> = Vec::with_capacity(t_len);
        for (t, d) in d_out.iter().enumerate() {
            let dconcat = match layer_scaling(m, masks, l) {
                Some(s) => s[t].apply(d),
                None => d.clone(),
            };
            dh_f.push(dconcat[..h_dim].to_vec());
            dh_b.push(dconcat[h_dim..].to_vec());
        }
        let lc = &cache.layers[l];
        let dx_f = backprop_direction(&p.layers[l].fwd, &lc.fwd, &dh_f, false, &mut g.layers[l].fwd, cand);
        let dx_b = backprop_direction(&p.layers[l].bwd, &lc.bwd, &dh_b, true, &mut g.layers[l].bwd, cand);
        d_out = (0..t_len)
            .map(|t| {
                let mut d = dx_f[t].clone();
                axpy(&mut d, 1.0, &dx_b[t]);
                d
            })
            .collect();
    }

    // d_out now sits on the gated inputs x̃.
    for (t, dxt) in d_out.iter().enumerate() {
        input_backward(
            m,
            sf,
            t,
            &cache.dynwin[t],
            dxt,
            gate_grads,
            &mut feat_grads,
            &mut pad_grad,
        );
    }
    scatter_tables(m, sf, &feat_grads, &pad_grad, tables);
}

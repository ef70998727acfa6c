//! Window MLP tagger: h = tanh(W_xh x̃), y = softmax(W_hy h), each token
//! scored independently from its gated context window.

use super::{
    add_bias, clear_opt, head_backward, head_forward, input_backward, input_forward, loss_seed,
    maybe_bias, push_opt, push_opt_mut, scatter_tables, sgd_opt, Cache, Forward, Masks, Model,
    NetConfig,
};
use crate::dynwin::{DynwinCache, GateGrads};
use crate::features::{SentenceFeatures, TableGrads};
use crate::numerics::{axpy, dtanh_from_output, init_gaussian, tanh_vec, Matrix, Rng, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    /// H × D, D the gated-input dimension.
    pub w_xh: Matrix,
    pub b_h: Option<Matrix>,
    /// K × H
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl MlpParams {
    pub fn init(cfg: &NetConfig, k: usize, rng: &mut Rng) -> MlpParams {
        let d = cfg.input_dim();
        let h = cfg.hidden;
        MlpParams {
            w_xh: init_gaussian(h, d, d, cfg.init_scale, rng),
            b_h: maybe_bias(h, cfg.biases),
            w_hy: init_gaussian(k, h, h, cfg.init_scale, rng),
            b_y: maybe_bias(k, cfg.biases),
        }
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        out.push(("W_xh".into(), &self.w_xh));
        push_opt(out, "b_h", &self.b_h);
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }

    pub(crate) fn push_blocks_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push(("W_xh".into(), &mut self.w_xh));
        push_opt_mut(out, "b_h", &mut self.b_h);
        out.push(("W_hy".into(), &mut self.w_hy));
        push_opt_mut(out, "b_y", &mut self.b_y);
    }
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub w_xh: Matrix,
    pub b_h: Option<Matrix>,
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> MlpGrads {
        MlpGrads {
            w_xh: Matrix::zeros(p.w_xh.rows(), p.w_xh.cols()),
            b_h: p.b_h.as_ref().map(|b| Matrix::zeros(1, b.cols())),
            w_hy: Matrix::zeros(p.w_hy.rows(), p.w_hy.cols()),
            b_y: p.b_y.as_ref().map(|b| Matrix::zeros(1, b.cols())),
        }
    }

    pub fn apply_sgd(&mut self, p: &mut MlpParams, lr: f64) {
        p.w_xh.add_scaled(&self.w_xh, -lr);
        self.w_xh.fill(0.0);
        sgd_opt(&mut p.b_h, &mut self.b_h, lr);
        p.w_hy.add_scaled(&self.w_hy, -lr);
        self.w_hy.fill(0.0);
        sgd_opt(&mut p.b_y, &mut self.b_y, lr);
    }

    pub fn clear(&mut self) {
        self.w_xh.fill(0.0);
        clear_opt(&mut self.b_h);
        self.w_hy.fill(0.0);
        clear_opt(&mut self.b_y);
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        out.push(("W_xh".into(), &self.w_xh));
        push_opt(out, "b_h", &self.b_h);
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }
}

#[derive(Clone, Debug)]
pub(crate) struct MlpCache {
    dynwin: Vec<DynwinCache>,
    /// Gated inputs x̃.
    xt: Vec<Vector>,
    /// tanh hidden activations.
    h: Vec<Vector>,
    /// Hidden activations after dropout, as fed to the head.
    hd: Vec<Vector>,
}

pub(crate) fn forward(m: &Model, p: &MlpParams, sf: &SentenceFeatures, masks: &Masks) -> Forward {
    let mut cache = MlpCache {
        dynwin: Vec::with_capacity(sf.len()),
        xt: Vec::with_capacity(sf.len()),
        h: Vec::with_capacity(sf.len()),
        hd: Vec::with_capacity(sf.len()),
    };
    let mut probs = Vec::with_capacity(sf.len());
    let mut gates = Vec::with_capacity(sf.len());
    for t in 0..sf.len() {
        let (xt, dc) = input_forward(m, sf, t, &masks.gate[t]);
        let mut pre = p.w_xh.matvec(&xt);
        add_bias(&mut pre, &p.b_h);
        let h = tanh_vec(&pre);
        let hd = masks.hidden[0][t].apply(&h);
        probs.push(head_forward(&p.w_hy, &p.b_y, &hd));
        gates.push(dc.r.clone());
        cache.dynwin.push(dc);
        cache.xt.push(xt);
        cache.h.push(h);
        cache.hd.push(hd);
    }
    Forward {
        probs,
        gates,
        cache: Cache::Mlp(cache),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    m: &Model,
    p: &MlpParams,
    sf: &SentenceFeatures,
    masks: &Masks,
    fwd: &Forward,
    cache: &MlpCache,
    gold: &[usize],
    g: &mut MlpGrads,
    gate_grads: &mut Option<GateGrads>,
    tables: &mut TableGrads,
) {
    let t_len = sf.len();
    let f = m.cfg.feature.token_dim();
    let mut feat_grads = vec![vec![0.0; f]; t_len];
    let mut pad_grad = vec![0.0; f];

    for t in 0..t_len {
        let dz = loss_seed(&fwd.probs[t], gold[t], t_len);
        let dhd = head_backward(&p.w_hy, &mut g.w_hy, &mut g.b_y, &dz, &cache.hd[t]);
        // Dropout is a fixed diagonal map, so its backward is itself.
        let dh = masks.hidden[0][t].apply(&dhd);
        let dpre: Vector = dh
            .iter()
            .zip(&cache.h[t])
            .map(|(&d, &hv)| d * dtanh_from_output(hv))
            .collect();
        g.w_xh.add_outer(&dpre, &cache.xt[t]);
        if let Some(b) = &mut g.b_h {
            axpy(b.row_mut(0), 1.0, &dpre);
        }
        let dxt = p.w_xh.matvec_t(&dpre);
        input_backward(
            m,
            sf,
            t,
            &cache.dynwin[t],
            &dxt,
            gate_grads,
            &mut feat_grads,
            &mut pad_grad,
        );
    }
    scatter_tables(m, sf, &feat_grads, &pad_grad, tables);
}

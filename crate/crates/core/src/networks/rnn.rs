//! Vanilla recurrent taggers with a scalar reset gate on the recurrent
//! input: h̃_t = tanh(W_xh x̃_t + s_t · W_rec v_{t−1}), s_t = σ(W_xs x_t).
//!
//! The carrier v is the previous hidden state for the Elman form (W_rec
//! realizes W_hh, H×H) and the model's own previous output distribution
//! for the Jordan form (W_rec realizes W_yh, H×K) — no teacher forcing.
//! At s = 0 the recurrence is severed and the network degenerates to the
//! window MLP. The Elman reset gate mirrors the Jordan construction.
//!
//! Backward is full BPTT. The Jordan recurrence consumes y_{t−1} =
//! softmax(·), so the gradient arriving from step t+1 is pushed through
//! the softmax Jacobian before joining the loss gradient on the logits.

use super::{
    add_bias, clear_opt, head_backward, head_forward, loss_seed, maybe_bias, push_opt,
    push_opt_mut, scatter_tables, sgd_opt, Cache, Forward, Masks, Model, NetConfig,
};
use crate::dynwin::{dynwin_backward, DynwinCache, GateGrads};
use crate::features::{SentenceFeatures, TableGrads};
use crate::numerics::{
    axpy, dot, dsigmoid_from_output, dtanh_from_output, init_gaussian, init_orthogonal, sigmoid,
    softmax_backward, tanh_vec, Matrix, Rng, Vector,
};

#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams {
    /// H × D
    pub w_xh: Matrix,
    pub b_h: Option<Matrix>,
    /// Recurrent map, orthogonally initialized: H × H (Elman) or H × K
    /// (Jordan).
    pub w_rec: Matrix,
    /// Reset-gate weights, 1 × I over the raw window input.
    pub w_xs: Matrix,
    /// K × H
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl RnnParams {
    pub fn init(cfg: &NetConfig, k: usize, jordan: bool, rng: &mut Rng) -> RnnParams {
        let d = cfg.input_dim();
        let h = cfg.hidden;
        let i = cfg.feature.window_dim();
        let rec_cols = if jordan { k } else { h };
        RnnParams {
            w_xh: init_gaussian(h, d, d, cfg.init_scale, rng),
            b_h: maybe_bias(h, cfg.biases),
            w_rec: init_orthogonal(h, rec_cols, rng),
            w_xs: init_gaussian(1, i, i, cfg.init_scale, rng),
            w_hy: init_gaussian(k, h, h, cfg.init_scale, rng),
            b_y: maybe_bias(k, cfg.biases),
        }
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        out.push(("W_xh".into(), &self.w_xh));
        push_opt(out, "b_h", &self.b_h);
        out.push(("W_rec".into(), &self.w_rec));
        out.push(("W_xs".into(), &self.w_xs));
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }

    pub(crate) fn push_blocks_mut<'a>(&'a mut self, out: &mut Vec<(String, &'a mut Matrix)>) {
        out.push(("W_xh".into(), &mut self.w_xh));
        push_opt_mut(out, "b_h", &mut self.b_h);
        out.push(("W_rec".into(), &mut self.w_rec));
        out.push(("W_xs".into(), &mut self.w_xs));
        out.push(("W_hy".into(), &mut self.w_hy));
        push_opt_mut(out, "b_y", &mut self.b_y);
    }
}

#[derive(Clone, Debug)]
pub struct RnnGrads {
    pub w_xh: Matrix,
    pub b_h: Option<Matrix>,
    pub w_rec: Matrix,
    pub w_xs: Matrix,
    pub w_hy: Matrix,
    pub b_y: Option<Matrix>,
}

impl RnnGrads {
    pub fn zeros_like(p: &RnnParams) -> RnnGrads {
        RnnGrads {
            w_xh: Matrix::zeros(p.w_xh.rows(), p.w_xh.cols()),
            b_h: p.b_h.as_ref().map(|b| Matrix::zeros(1, b.cols())),
            w_rec: Matrix::zeros(p.w_rec.rows(), p.w_rec.cols()),
            w_xs: Matrix::zeros(1, p.w_xs.cols()),
            w_hy: Matrix::zeros(p.w_hy.rows(), p.w_hy.cols()),
            b_y: p.b_y.as_ref().map(|b| Matrix::zeros(1, b.cols())),
        }
    }

    pub fn apply_sgd(&mut self, p: &mut RnnParams, lr: f64) {
        p.w_xh.add_scaled(&self.w_xh, -lr);
        self.w_xh.fill(0.0);
        sgd_opt(&mut p.b_h, &mut self.b_h, lr);
        p.w_rec.add_scaled(&self.w_rec, -lr);
        self.w_rec.fill(0.0);
        p.w_xs.add_scaled(&self.w_xs, -lr);
        self.w_xs.fill(0.0);
        p.w_hy.add_scaled(&self.w_hy, -lr);
        self.w_hy.fill(0.0);
        sgd_opt(&mut p.b_y, &mut self.b_y, lr);
    }

    pub fn clear(&mut self) {
        self.w_xh.fill(0.0);
        clear_opt(&mut self.b_h);
        self.w_rec.fill(0.0);
        self.w_xs.fill(0.0);
        self.w_hy.fill(0.0);
        clear_opt(&mut self.b_y);
    }

    pub(crate) fn push_blocks<'a>(&'a self, out: &mut Vec<(String, &'a Matrix)>) {
        out.push(("W_xh".into(), &self.w_xh));
        push_opt(out, "b_h", &self.b_h);
        out.push(("W_rec".into(), &self.w_rec));
        out.push(("W_xs".into(), &self.w_xs));
        out.push(("W_hy".into(), &self.w_hy));
        push_opt(out, "b_y", &self.b_y);
    }
}

#[derive(Clone, Debug)]
pub(crate) struct RnnCache {
    dynwin: Vec<DynwinCache>,
    xt: Vec<Vector>,
    /// Recurrent carrier fed at step t: h_{t−1} (Elman) or y_{t−1}
    /// (Jordan); zeros at t = 0.
    rec_in: Vec<Vector>,
    /// W_rec · rec_in[t], before scaling by s_t.
    rec_raw: Vec<Vector>,
    s: Vec<f64>,
    h: Vec<Vector>,
    hd: Vec<Vector>,
}

pub(crate) fn forward(
    m: &Model,
    p: &RnnParams,
    jordan: bool,
    sf: &SentenceFeatures,
    masks: &Masks,
) -> Forward {
    let t_len = sf.len();
    let rec_dim = p.w_rec.cols();
    let mut cache = RnnCache {
        dynwin: Vec::with_capacity(t_len),
        xt: Vec::with_capacity(t_len),
        rec_in: Vec::with_capacity(t_len),
        rec_raw: Vec::with_capacity(t_len),
        s: Vec::with_capacity(t_len),
        h: Vec::with_capacity(t_len),
        hd: Vec::with_capacity(t_len),
    };
    let mut probs: Vec<Vector> = Vec::with_capacity(t_len);
    let mut gates = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let (xt, dc) = super::input_forward(m, sf, t, &masks.gate[t]);
        let rec_in = if t == 0 {
            vec![0.0; rec_dim]
        } else if jordan {
            probs[t - 1].clone()
        } else {
            cache.h[t - 1].clone()
        };
        let rec_raw = p.w_rec.matvec(&rec_in);

        let mut pre = p.w_xh.matvec(&xt);
        add_bias(&mut pre, &p.b_h);
        // The reset gate reads the RAW window input, not the gated one.
        let s = if m.cfg.force_reset_zero {
            0.0
        } else {
            sigmoid(dot(p.w_xs.row(0), &dc.x))
        };
        if s != 0.0 {
            axpy(&mut pre, s, &rec_raw);
        }
        let h = tanh_vec(&pre);
        let hd = masks.hidden[0][t].apply(&h);
        probs.push(head_forward(&p.w_hy, &p.b_y, &hd));
        gates.push(dc.r.clone());
        cache.dynwin.push(dc);
        cache.xt.push(xt);
        cache.rec_in.push(rec_in);
        cache.rec_raw.push(rec_raw);
        cache.s.push(s);
        cache.h.push(h);
        cache.hd.push(hd);
    }
    Forward {
        probs,
        gates,
        cache: Cache::Rnn(cache),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward(
    m: &Model,
    p: &RnnParams,
    jordan: bool,
    sf: &SentenceFeatures,
    masks: &Masks,
    fwd: &Forward,
    cache: &RnnCache,
    gold: &[usize],
    g: &mut RnnGrads,
    gate_grads: &mut Option<GateGrads>,
    tables: &mut TableGrads,
) {
    let t_len = sf.len();
    let f = m.cfg.feature.token_dim();
    let mut feat_grads = vec![vec![0.0; f]; t_len];
    let mut pad_grad = vec![0.0; f];

    // Gradient flowing back through the recurrence: onto h_t (Elman) or
    // onto y_t (Jordan), from step t+1.
    let mut carry = vec![0.0; p.w_rec.cols()];

    for t in (0..t_len).rev() {
        let y = &fwd.probs[t];
        let mut dz = loss_seed(y, gold[t], t_len);
        if jordan {
            // The recurrent consumer saw y_t = softmax(z_t): push the
            // carried gradient through the softmax Jacobian.
            axpy(&mut dz, 1.0, &softmax_backward(y, &carry));
        }
        let dhd = head_backward(&p.w_hy, &mut g.w_hy, &mut g.b_y, &dz, &cache.hd[t]);
        let mut dh = masks.hidden[0][t].apply(&dhd);
        if !jordan {
            axpy(&mut dh, 1.0, &carry);
        }
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

        let mut grad_x = dynwin_backward(
            m.gate.as_ref(),
            &m.cfg.gate_config(),
            &cache.dynwin[t],
            &dxt,
            gate_grads.as_mut(),
        );

        let s = cache.s[t];
        if m.cfg.force_reset_zero {
            // Recurrence severed: no gradient reaches W_rec, W_xs, or the
            // previous step.
            carry = vec![0.0; p.w_rec.cols()];
        } else {
            // d(pre) → s·rec_raw product: gradients for s, W_rec, and the
            // carrier.
            let ds = dot(&dpre, &cache.rec_raw[t]);
            let dz_s = dsigmoid_from_output(s) * ds;
            axpy(g.w_xs.row_mut(0), dz_s, &cache.dynwin[t].x);
            axpy(&mut grad_x, dz_s, p.w_xs.row(0));

            let dprec: Vector = dpre.iter().map(|&v| s * v).collect();
            g.w_rec.add_outer(&dprec, &cache.rec_in[t]);
            carry = if t == 0 {
                vec![0.0; p.w_rec.cols()] // initial state is a constant
            } else {
                p.w_rec.matvec_t(&dprec)
            };
        }

        sf.scatter_window_grad(
            t,
            m.cfg.feature.window_radius,
            &grad_x,
            &mut feat_grads,
            &mut pad_grad,
        );
    }
    scatter_tables(m, sf, &feat_grads, &pad_grad, tables);
}

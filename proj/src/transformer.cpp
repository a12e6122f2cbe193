#include "flab/transformer.hpp"

#include <cmath>

#include "flab/errors.hpp"
#include "flab/ops.hpp"

namespace flab {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <class T>
T gelu(T x) {
    const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
    return static_cast<T>(0.5) * x * (T(1) + std::tanh(u));
}

template <class T>
T gelu_grad(T x) {
    const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
    const T t = std::tanh(u);
    const T du = static_cast<T>(kGeluC) * (T(1) + T(3) * static_cast<T>(kGeluA) * x * x);
    return static_cast<T>(0.5) * (T(1) + t) + static_cast<T>(0.5) * x * (T(1) - t * t) * du;
}

template <class T>
void layernorm_forward(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, Mat<T>& out,
                       std::vector<T>& mean, std::vector<T>& rstd) {
    const int s = x.rows, d = x.cols;
    out.resize(s, d);
    mean.assign(s, T(0));
    rstd.assign(s, T(0));
#pragma omp parallel for schedule(static) if (s > 1)
    for (int i = 0; i < s; ++i) {
        const T* xi = x.row(i);
        T mu = 0;
        for (int j = 0; j < d; ++j) mu += xi[j];
        mu /= static_cast<T>(d);
        T var = 0;
        for (int j = 0; j < d; ++j) {
            const T c = xi[j] - mu;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T r = T(1) / std::sqrt(var + static_cast<T>(kLnEps));
        mean[i] = mu;
        rstd[i] = r;
        T* oi = out.row(i);
        for (int j = 0; j < d; ++j) oi[j] = gain.a[j] * ((xi[j] - mu) * r) + bias.a[j];
    }
}

// dx returned via accumulation into dx_accum; dgain/dbias accumulated.
template <class T>
void layernorm_backward(const Mat<T>& dy, const Mat<T>& x, const std::vector<T>& mean,
                        const std::vector<T>& rstd, const Mat<T>& gain, Mat<T>& dx_accum,
                        Mat<T>& dgain, Mat<T>& dbias) {
    const int s = x.rows, d = x.cols;
    // Row-parallel over dx; parameter grads reduced serially afterwards to
    // keep accumulation order fixed.
    std::vector<T> xhat_buf(static_cast<size_t>(s) * d);
#pragma omp parallel for schedule(static) if (s > 1)
    for (int i = 0; i < s; ++i) {
        const T* xi = x.row(i);
        const T* dyi = dy.row(i);
        T* dxi = dx_accum.row(i);
        T* xh = xhat_buf.data() + static_cast<size_t>(i) * d;
        const T mu = mean[i], r = rstd[i];
        T m1 = 0, m2 = 0;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mu) * r;
            const T dxh = dyi[j] * gain.a[j];
            m1 += dxh;
            m2 += dxh * xh[j];
        }
        m1 /= static_cast<T>(d);
        m2 /= static_cast<T>(d);
        for (int j = 0; j < d; ++j) {
            const T dxh = dyi[j] * gain.a[j];
            dxi[j] += r * (dxh - m1 - xh[j] * m2);
        }
    }
    for (int i = 0; i < s; ++i) {
        const T* dyi = dy.row(i);
        const T* xh = xhat_buf.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            dgain.a[j] += dyi[j] * xh[j];
            dbias.a[j] += dyi[j];
        }
    }
}

} // namespace

template <class T>
Transformer<T> Transformer<T>::create(const ModelConfig& cfg, ParameterSet<T>& ps,
                                      const std::string& prefix, bool with_head, Rng& rng) {
    cfg.validate();
    Transformer tf;
    tf.cfg = cfg;
    tf.has_head = with_head;
    auto normal = [&](int r, int c) {
        Mat<T> m(r, c);
        rng.fill_normal(m, 0.02);
        return m;
    };
    auto ones = [](int n) {
        Mat<T> m(1, n);
        m.fill(T(1));
        return m;
    };
    const int d = cfg.d_model;
    tf.wte = ps.add(prefix + ".wte", normal(cfg.vocab_size, d));
    tf.wpe = ps.add(prefix + ".wpe", normal(cfg.max_positions, d));
    tf.blocks.resize(cfg.n_layers);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string bp = prefix + ".b" + std::to_string(l);
        auto& b = tf.blocks[static_cast<size_t>(l)];
        b.ln1_g = ps.add(bp + ".ln1.g", ones(d));
        b.ln1_b = ps.add(bp + ".ln1.b", Mat<T>(1, d));
        b.wq = ps.add(bp + ".attn.wq", normal(d, d));
        b.wk = ps.add(bp + ".attn.wk", normal(d, d));
        b.wv = ps.add(bp + ".attn.wv", normal(d, d));
        b.wo = ps.add(bp + ".attn.wo", normal(d, d));
        b.ln2_g = ps.add(bp + ".ln2.g", ones(d));
        b.ln2_b = ps.add(bp + ".ln2.b", Mat<T>(1, d));
        b.w1 = ps.add(bp + ".mlp.w1", normal(d, cfg.d_ff));
        b.w2 = ps.add(bp + ".mlp.w2", normal(cfg.d_ff, d));
    }
    tf.lnf_g = ps.add(prefix + ".lnf.g", ones(d));
    tf.lnf_b = ps.add(prefix + ".lnf.b", Mat<T>(1, d));
    if (with_head) tf.head = ps.add(prefix + ".head", normal(d, cfg.vocab_size));
    return tf;
}

template <class T>
Transformer<T> Transformer<T>::bind(const ModelConfig& cfg, const ParameterSet<T>& ps,
                                    const std::string& prefix, bool with_head) {
    cfg.validate();
    Transformer tf;
    tf.cfg = cfg;
    tf.has_head = with_head;
    auto need = [&](const std::string& name) {
        const int ix = ps.find(name);
        if (ix < 0) throw SchemaError("parameter set is missing tensor " + name);
        return ix;
    };
    tf.wte = need(prefix + ".wte");
    tf.wpe = need(prefix + ".wpe");
    tf.blocks.resize(cfg.n_layers);
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string bp = prefix + ".b" + std::to_string(l);
        auto& b = tf.blocks[static_cast<size_t>(l)];
        b.ln1_g = need(bp + ".ln1.g");
        b.ln1_b = need(bp + ".ln1.b");
        b.wq = need(bp + ".attn.wq");
        b.wk = need(bp + ".attn.wk");
        b.wv = need(bp + ".attn.wv");
        b.wo = need(bp + ".attn.wo");
        b.ln2_g = need(bp + ".ln2.g");
        b.ln2_b = need(bp + ".ln2.b");
        b.w1 = need(bp + ".mlp.w1");
        b.w2 = need(bp + ".mlp.w2");
    }
    tf.lnf_g = need(prefix + ".lnf.g");
    tf.lnf_b = need(prefix + ".lnf.b");
    if (with_head) tf.head = need(prefix + ".head");
    return tf;
}

template <class T>
ForwardCache<T> Transformer<T>::forward(Mat<T> emb, const ParameterSet<T>& ps) const {
    const int s = emb.rows, d = cfg.d_model, nh = cfg.n_heads, hd = cfg.head_dim();
    if (emb.cols != d) throw ShapeMismatch("transformer: embedding width != d_model");
    if (s > cfg.max_positions) throw SequenceTooLong("transformer: sequence of length " +
                                                     std::to_string(s) + " exceeds max_positions " +
                                                     std::to_string(cfg.max_positions));
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));

    ForwardCache<T> c;
    c.emb = std::move(emb);
    c.blocks.resize(cfg.n_layers);
    Mat<T> x = c.emb;

    for (int l = 0; l < cfg.n_layers; ++l) {
        auto& bc = c.blocks[static_cast<size_t>(l)];
        const auto& bi = blocks[static_cast<size_t>(l)];
        bc.x_in = x;
        layernorm_forward(bc.x_in, ps[bi.ln1_g], ps[bi.ln1_b], bc.ln1, bc.mean1, bc.rstd1);
        ops::matmul_nn(bc.ln1, ps[bi.wq], bc.q);
        ops::matmul_nn(bc.ln1, ps[bi.wk], bc.k);
        ops::matmul_nn(bc.ln1, ps[bi.wv], bc.v);

        bc.ctx.resize(s, d);
        bc.probs.assign(static_cast<size_t>(nh), Mat<T>(s, s));
        for (int h = 0; h < nh; ++h) {
            Mat<T>& p = bc.probs[static_cast<size_t>(h)];
            const int off = h * hd;
#pragma omp parallel for schedule(static) if (s > 1)
            for (int i = 0; i < s; ++i) {
                const T* qi = bc.q.row(i) + off;
                T* pi = p.row(i);
                for (int j = 0; j <= i; ++j) {
                    const T* kj = bc.k.row(j) + off;
                    T sdot = 0;
                    for (int e = 0; e < hd; ++e) sdot += qi[e] * kj[e];
                    pi[j] = sdot * inv_sqrt;
                }
                ops::softmax_row(pi, i + 1);
                T* ci = bc.ctx.row(i) + off;
                for (int e = 0; e < hd; ++e) ci[e] = 0;
                for (int j = 0; j <= i; ++j) {
                    const T pij = pi[j];
                    const T* vj = bc.v.row(j) + off;
                    for (int e = 0; e < hd; ++e) ci[e] += pij * vj[e];
                }
            }
        }
        Mat<T> attn_out;
        ops::matmul_nn(bc.ctx, ps[bi.wo], attn_out);
        bc.x_mid.resize(s, d);
        for (size_t i = 0; i < bc.x_mid.a.size(); ++i)
            bc.x_mid.a[i] = bc.x_in.a[i] + attn_out.a[i];

        layernorm_forward(bc.x_mid, ps[bi.ln2_g], ps[bi.ln2_b], bc.ln2, bc.mean2, bc.rstd2);
        ops::matmul_nn(bc.ln2, ps[bi.w1], bc.ff_pre);
        bc.ff_act.resize(s, cfg.d_ff);
        for (size_t i = 0; i < bc.ff_pre.a.size(); ++i) bc.ff_act.a[i] = gelu(bc.ff_pre.a[i]);
        Mat<T> ff_out;
        ops::matmul_nn(bc.ff_act, ps[bi.w2], ff_out);
        x.resize(s, d);
        for (size_t i = 0; i < x.a.size(); ++i) x.a[i] = bc.x_mid.a[i] + ff_out.a[i];
    }
    c.last = std::move(x);
    layernorm_forward(c.last, ps[lnf_g], ps[lnf_b], c.lnf_out, c.meanf, c.rstdf);
    return c;
}

template <class T>
Mat<T> Transformer<T>::logits_rows(const ForwardCache<T>& c, const ParameterSet<T>& ps, int row0,
                                   int nrows) const {
    if (!has_head) throw ShapeMismatch("transformer: logits requested but model has no head");
    if (row0 < 0 || row0 + nrows > c.lnf_out.rows)
        throw ShapeMismatch("transformer: logits row range out of bounds");
    Mat<T> rows(nrows, cfg.d_model);
    for (int i = 0; i < nrows; ++i)
        std::copy(c.lnf_out.row(row0 + i), c.lnf_out.row(row0 + i) + cfg.d_model, rows.row(i));
    Mat<T> logits;
    ops::matmul_nn(rows, ps[head], logits);
    return logits;
}

template <class T>
Mat<T> Transformer<T>::backward_logits(const ForwardCache<T>& c, const ParameterSet<T>& ps,
                                       const Mat<T>& dlogits, int row0, GradSet<T>& g) const {
    const int s = c.seq_len(), d = cfg.d_model;
    Mat<T> rows(dlogits.rows, d);
    for (int i = 0; i < dlogits.rows; ++i)
        std::copy(c.lnf_out.row(row0 + i), c.lnf_out.row(row0 + i) + d, rows.row(i));
    ops::matmul_tn(rows, dlogits, g[head], /*accumulate=*/true);

    Mat<T> drows;
    ops::matmul_nt(dlogits, ps[head], drows);
    Mat<T> d_lnf(s, d);
    for (int i = 0; i < dlogits.rows; ++i)
        std::copy(drows.row(i), drows.row(i) + d, d_lnf.row(row0 + i));
    return backward_hidden(c, ps, d_lnf, g);
}

template <class T>
Mat<T> Transformer<T>::backward_hidden(const ForwardCache<T>& c, const ParameterSet<T>& ps,
                                       const Mat<T>& d_lnf_out, GradSet<T>& g) const {
    const int s = c.seq_len(), d = cfg.d_model, nh = cfg.n_heads, hd = cfg.head_dim();
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(hd));

    Mat<T> dx(s, d);
    layernorm_backward(d_lnf_out, c.last, c.meanf, c.rstdf, ps[lnf_g], dx, g[lnf_g], g[lnf_b]);

    for (int l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& bc = c.blocks[static_cast<size_t>(l)];
        const auto& bi = blocks[static_cast<size_t>(l)];

        // --- MLP ---
        // x_out = x_mid + gelu(ln2(x_mid) @ w1) @ w2
        Mat<T>& dff_out = dx; // alias: gradient w.r.t. block output
        ops::matmul_tn(bc.ff_act, dff_out, g[bi.w2], true);
        Mat<T> dff_act;
        ops::matmul_nt(dff_out, ps[bi.w2], dff_act);
        Mat<T> dff_pre(s, cfg.d_ff);
        for (size_t i = 0; i < dff_pre.a.size(); ++i)
            dff_pre.a[i] = dff_act.a[i] * gelu_grad(bc.ff_pre.a[i]);
        ops::matmul_tn(bc.ln2, dff_pre, g[bi.w1], true);
        Mat<T> dln2;
        ops::matmul_nt(dff_pre, ps[bi.w1], dln2);
        Mat<T> dx_mid = dx; // residual path
        layernorm_backward(dln2, bc.x_mid, bc.mean2, bc.rstd2, ps[bi.ln2_g], dx_mid, g[bi.ln2_g],
                           g[bi.ln2_b]);

        // --- attention ---
        // x_mid = x_in + (heads(ln1(x_in)) concat) @ wo
        ops::matmul_tn(bc.ctx, dx_mid, g[bi.wo], true);
        Mat<T> dctx;
        ops::matmul_nt(dx_mid, ps[bi.wo], dctx);

        Mat<T> dq(s, d), dk(s, d), dv(s, d);
        Mat<T> ds(s, s);
        for (int h = 0; h < nh; ++h) {
            const Mat<T>& p = bc.probs[static_cast<size_t>(h)];
            const int off = h * hd;
            // dscores = softmax-backward(dprobs), rows independent
            ds.fill(T(0));
#pragma omp parallel for schedule(static) if (s > 1)
            for (int i = 0; i < s; ++i) {
                const T* dci = dctx.row(i) + off;
                const T* pi = p.row(i);
                T* dsi = ds.row(i);
                T dot = 0;
                for (int j = 0; j <= i; ++j) {
                    const T* vj = bc.v.row(j) + off;
                    T dp = 0;
                    for (int e = 0; e < hd; ++e) dp += dci[e] * vj[e];
                    dsi[j] = dp;
                    dot += dp * pi[j];
                }
                for (int j = 0; j <= i; ++j) dsi[j] = pi[j] * (dsi[j] - dot);
            }
            // dq_i = sum_j ds_ij k_j / sqrt(hd)
#pragma omp parallel for schedule(static) if (s > 1)
            for (int i = 0; i < s; ++i) {
                T* dqi = dq.row(i) + off;
                const T* dsi = ds.row(i);
                for (int j = 0; j <= i; ++j) {
                    const T w = dsi[j] * inv_sqrt;
                    const T* kj = bc.k.row(j) + off;
                    for (int e = 0; e < hd; ++e) dqi[e] += w * kj[e];
                }
            }
            // dk_j = sum_{i>=j} ds_ij q_i / sqrt(hd); dv_j = sum_{i>=j} p_ij dctx_i
#pragma omp parallel for schedule(static) if (s > 1)
            for (int j = 0; j < s; ++j) {
                T* dkj = dk.row(j) + off;
                T* dvj = dv.row(j) + off;
                for (int i = j; i < s; ++i) {
                    const T dsij = ds.at(i, j) * inv_sqrt;
                    const T pij = p.at(i, j);
                    const T* qi = bc.q.row(i) + off;
                    const T* dci = dctx.row(i) + off;
                    for (int e = 0; e < hd; ++e) {
                        dkj[e] += dsij * qi[e];
                        dvj[e] += pij * dci[e];
                    }
                }
            }
        }
        ops::matmul_tn(bc.ln1, dq, g[bi.wq], true);
        ops::matmul_tn(bc.ln1, dk, g[bi.wk], true);
        ops::matmul_tn(bc.ln1, dv, g[bi.wv], true);
        Mat<T> dln1, tmp;
        ops::matmul_nt(dq, ps[bi.wq], dln1);
        ops::matmul_nt(dk, ps[bi.wk], tmp);
        for (size_t i = 0; i < dln1.a.size(); ++i) dln1.a[i] += tmp.a[i];
        ops::matmul_nt(dv, ps[bi.wv], tmp);
        for (size_t i = 0; i < dln1.a.size(); ++i) dln1.a[i] += tmp.a[i];

        Mat<T> dx_in = dx_mid; // residual path
        layernorm_backward(dln1, bc.x_in, bc.mean1, bc.rstd1, ps[bi.ln1_g], dx_in, g[bi.ln1_g],
                           g[bi.ln1_b]);
        dx = std::move(dx_in);
    }
    return dx;
}

template struct Transformer<float>;
template struct Transformer<double>;

} // namespace flab

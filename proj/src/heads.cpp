#include "gundet/heads.hpp"

#include <cmath>
#include <memory>

#include "gundet/errors.hpp"
#include "gundet/kernels.hpp"

namespace gundet {

namespace {

// y [T,out] = x [T,in] * W^T, W stored [out,in]; optional bias row-add.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  const int t = x.dim(0), in = x.dim(1), out = w.dim(0);
  Tensor y({t, out});
  kernels::gemm(false, true, t, out, in, x.data(), w.data(), y.data(), 0.0);
  if (b)
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < out; ++j) y.at2(i, j) += (*b)[j];
  return y;
}

// Accumulate linear grads: gw += dy^T x, gb += colsum(dy); returns dx.
Tensor linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                       Tensor& gw, Tensor& gb, bool need_dx) {
  const int t = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (gw.empty()) gw = Tensor(w.shape());
  if (gb.empty()) gb = Tensor({out});
  Tensor gw_local({out, in});
  kernels::gemm(true, false, out, in, t, dy.data(), x.data(), gw_local.data(), 0.0);
  for (int64_t i = 0; i < gw.size(); ++i) gw[i] += gw_local[i];
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < out; ++j) gb[j] += dy.at2(i, j);
  if (!need_dx) return {};
  Tensor dx({t, in});
  kernels::gemm(false, false, t, in, out, dy.data(), w.data(), dx.data(), 0.0);
  return dx;
}

std::vector<double> matvec(const Tensor& w, const std::vector<double>& x) {
  const int rows = w.dim(0), cols = w.dim(1);
  std::vector<double> y(static_cast<size_t>(rows), 0.0);
  for (int i = 0; i < rows; ++i) {
    double acc = 0.0;
    for (int j = 0; j < cols; ++j) acc += w.at2(i, j) * x[static_cast<size_t>(j)];
    y[static_cast<size_t>(i)] = acc;
  }
  return y;
}

std::vector<double> matvec_t(const Tensor& w, const std::vector<double>& x) {
  const int rows = w.dim(0), cols = w.dim(1);
  std::vector<double> y(static_cast<size_t>(cols), 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      y[static_cast<size_t>(j)] += w.at2(i, j) * x[static_cast<size_t>(i)];
  return y;
}

void outer_acc(Tensor& gw, const std::vector<double>& dy,
               const std::vector<double>& x) {
  const int rows = gw.dim(0), cols = gw.dim(1);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      gw.at2(i, j) += dy[static_cast<size_t>(i)] * x[static_cast<size_t>(j)];
}

double d_sigmoid_from_value(double s) { return s * (1.0 - s); }
double d_tanh_from_value(double t) { return 1.0 - t * t; }

}  // namespace

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "lstm") return HeadKind::lstm;
  if (s == "gru") return HeadKind::gru;
  if (s == "transformer") return HeadKind::transformer;
  throw ValidationError("unknown head kind: " + s);
}

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::lstm: return "lstm";
    case HeadKind::gru: return "gru";
    case HeadKind::transformer: return "transformer";
  }
  return "?";
}

void validate_head_config(const HeadConfig& cfg) {
  if (cfg.lstm_units <= 0 || cfg.gru_units <= 0 || cfg.tf_heads <= 0 ||
      cfg.tf_model_dim <= 0 || cfg.tf_ffn_dim <= 0)
    throw ValidationError("head dimensions must be positive");
  if (cfg.recurrent_dropout < 0.0 || cfg.recurrent_dropout >= 1.0 ||
      cfg.tf_dropout < 0.0 || cfg.tf_dropout >= 1.0)
    throw ValidationError("dropout rates must lie in [0,1)");
  if (cfg.kind == HeadKind::transformer && cfg.tf_model_dim % cfg.tf_heads != 0)
    throw ValidationError("transformer model dim must be divisible by head count");
}

HeadState build_head(const HeadConfig& cfg, int feature_dim, uint64_t seed) {
  validate_head_config(cfg);
  if (feature_dim <= 0) throw ValidationError("feature_dim must be positive");
  HeadState state;
  state.config = cfg;
  state.feature_dim = feature_dim;
  Rng rng = Rng::from(seed, 23);
  auto& p = state.params;

  int embed_dim = 0;
  switch (cfg.kind) {
    case HeadKind::lstm: {
      const int h = cfg.lstm_units;
      p["lstm.wx"] = nn::glorot_uniform({4 * h, feature_dim}, feature_dim, h, rng);
      p["lstm.wh"] = nn::glorot_uniform({4 * h, h}, h, h, rng);
      p["lstm.b"] = Tensor({4 * h});
      // forget-gate bias starts at 1 so early training does not flush state
      for (int i = h; i < 2 * h; ++i) p["lstm.b"][i] = 1.0;
      embed_dim = h;
      break;
    }
    case HeadKind::gru: {
      const int h = cfg.gru_units;
      p["gru.wx"] = nn::glorot_uniform({3 * h, feature_dim}, feature_dim, h, rng);
      p["gru.wh"] = nn::glorot_uniform({3 * h, h}, h, h, rng);
      p["gru.bx"] = Tensor({3 * h});
      p["gru.bh"] = Tensor({3 * h});
      embed_dim = h;
      break;
    }
    case HeadKind::transformer: {
      const int dm = cfg.tf_model_dim, dff = cfg.tf_ffn_dim;
      p["proj.weight"] = nn::glorot_uniform({dm, feature_dim}, feature_dim, dm, rng);
      p["proj.bias"] = Tensor({dm});
      for (const char* n : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
        p[n] = nn::glorot_uniform({dm, dm}, dm, dm, rng);
      for (const char* n : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
        p[n] = Tensor({dm});
      p["ln1.gamma"] = Tensor({dm}, 1.0);
      p["ln1.beta"] = Tensor({dm});
      p["ffn.w1"] = nn::glorot_uniform({dff, dm}, dm, dff, rng);
      p["ffn.b1"] = Tensor({dff});
      p["ffn.w2"] = nn::glorot_uniform({dm, dff}, dff, dm, rng);
      p["ffn.b2"] = Tensor({dm});
      p["ln2.gamma"] = Tensor({dm}, 1.0);
      p["ln2.beta"] = Tensor({dm});
      embed_dim = dm;
      break;
    }
  }
  p["out.weight"] = nn::glorot_uniform({2, embed_dim}, embed_dim, 2, rng);
  p["out.bias"] = Tensor({2});
  return state;
}

// ---------------------------------------------------------------------------
// Forward caches
// ---------------------------------------------------------------------------

struct HeadTrace {
  Tensor features;  // [T, d] input
  // recurrent caches, one entry per step
  std::vector<std::vector<double>> i, f, g, o, c, h;          // lstm
  std::vector<std::vector<double>> r, z, n, hh, b_n;          // gru
  // transformer caches
  Tensor x0, q, k, v, attn_concat, attn_out, a1, y1, ffn_pre, ffn_act, a2, y2;
  std::vector<Tensor> attn_probs;  // per attention head [T,T]
  std::vector<double> ln1_mean, ln1_inv_std, ln2_mean, ln2_inv_std;
  // shared
  std::vector<double> embedding;      // pre-dropout
  std::vector<double> dropout_mask;   // empty => no dropout applied
  std::vector<double> dropped;        // embedding after dropout
};

namespace {

void layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     Tensor& y, std::vector<double>& means,
                     std::vector<double>& inv_stds) {
  constexpr double eps = 1e-5;
  const int t = x.dim(0), d = x.dim(1);
  y = Tensor({t, d});
  means.resize(static_cast<size_t>(t));
  inv_stds.resize(static_cast<size_t>(t));
  for (int i = 0; i < t; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += x.at2(i, j);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = x.at2(i, j) - mean;
      var += c * c;
    }
    var /= d;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    means[static_cast<size_t>(i)] = mean;
    inv_stds[static_cast<size_t>(i)] = inv_std;
    for (int j = 0; j < d; ++j)
      y.at2(i, j) = gamma[j] * (x.at2(i, j) - mean) * inv_std + beta[j];
  }
}

// dx for one layer-norm application; accumulates dgamma/dbeta.
Tensor layer_norm_backward(const Tensor& x, const Tensor& gamma,
                           const std::vector<double>& means,
                           const std::vector<double>& inv_stds,
                           const Tensor& dy, Tensor& dgamma, Tensor& dbeta) {
  const int t = x.dim(0), d = x.dim(1);
  if (dgamma.empty()) dgamma = Tensor({d});
  if (dbeta.empty()) dbeta = Tensor({d});
  Tensor dx({t, d});
  for (int i = 0; i < t; ++i) {
    const double mean = means[static_cast<size_t>(i)];
    const double inv_std = inv_stds[static_cast<size_t>(i)];
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    std::vector<double> xhat(static_cast<size_t>(d)), dxhat(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
      xhat[static_cast<size_t>(j)] = (x.at2(i, j) - mean) * inv_std;
      dgamma[j] += dy.at2(i, j) * xhat[static_cast<size_t>(j)];
      dbeta[j] += dy.at2(i, j);
      dxhat[static_cast<size_t>(j)] = dy.at2(i, j) * gamma[j];
      mean_dxhat += dxhat[static_cast<size_t>(j)];
      mean_dxhat_xhat += dxhat[static_cast<size_t>(j)] * xhat[static_cast<size_t>(j)];
    }
    mean_dxhat /= d;
    mean_dxhat_xhat /= d;
    for (int j = 0; j < d; ++j)
      dx.at2(i, j) = inv_std * (dxhat[static_cast<size_t>(j)] - mean_dxhat -
                                xhat[static_cast<size_t>(j)] * mean_dxhat_xhat);
  }
  return dx;
}

void add_positional_encoding(Tensor& x) {
  const int t = x.dim(0), d = x.dim(1);
  for (int pos = 0; pos < t; ++pos)
    for (int j = 0; j < d; ++j) {
      const double angle =
          pos / std::pow(10000.0, 2.0 * (j / 2) / static_cast<double>(d));
      x.at2(pos, j) += (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
}

void lstm_forward(const HeadState& state, HeadTrace& tr) {
  const Tensor& wx = state.params.at("lstm.wx");
  const Tensor& wh = state.params.at("lstm.wh");
  const Tensor& b = state.params.at("lstm.b");
  const int t_len = tr.features.dim(0);
  const int d = tr.features.dim(1);
  const int h = wh.dim(1);

  std::vector<double> h_prev(static_cast<size_t>(h), 0.0);
  std::vector<double> c_prev(static_cast<size_t>(h), 0.0);
  for (int t = 0; t < t_len; ++t) {
    std::vector<double> x(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] = tr.features.at2(t, j);
    std::vector<double> zx = matvec(wx, x);
    std::vector<double> zh = matvec(wh, h_prev);
    std::vector<double> iv(h), fv(h), gv(h), ov(h), cv(h), hv(h);
    for (int j = 0; j < h; ++j) {
      const double zi = zx[static_cast<size_t>(j)] + zh[static_cast<size_t>(j)] + b[j];
      const double zf = zx[static_cast<size_t>(h + j)] + zh[static_cast<size_t>(h + j)] + b[h + j];
      const double zg = zx[static_cast<size_t>(2 * h + j)] + zh[static_cast<size_t>(2 * h + j)] + b[2 * h + j];
      const double zo = zx[static_cast<size_t>(3 * h + j)] + zh[static_cast<size_t>(3 * h + j)] + b[3 * h + j];
      iv[static_cast<size_t>(j)] = nn::sigmoid(zi);
      fv[static_cast<size_t>(j)] = nn::sigmoid(zf);
      gv[static_cast<size_t>(j)] = std::tanh(zg);
      ov[static_cast<size_t>(j)] = nn::sigmoid(zo);
      cv[static_cast<size_t>(j)] = fv[static_cast<size_t>(j)] * c_prev[static_cast<size_t>(j)] +
                                   iv[static_cast<size_t>(j)] * gv[static_cast<size_t>(j)];
      hv[static_cast<size_t>(j)] = ov[static_cast<size_t>(j)] * std::tanh(cv[static_cast<size_t>(j)]);
    }
    tr.i.push_back(iv);
    tr.f.push_back(fv);
    tr.g.push_back(gv);
    tr.o.push_back(ov);
    tr.c.push_back(cv);
    tr.h.push_back(hv);
    h_prev = hv;
    c_prev = cv;
  }
  tr.embedding = h_prev;
}

void lstm_backward(const HeadState& state, const HeadTrace& tr,
                   std::vector<double> dh, nn::ParamMap& grads) {
  const Tensor& wx = state.params.at("lstm.wx");
  const Tensor& wh = state.params.at("lstm.wh");
  const int t_len = tr.features.dim(0);
  const int d = tr.features.dim(1);
  const int h = wh.dim(1);

  Tensor& gwx = grads["lstm.wx"];
  if (gwx.empty()) gwx = Tensor(wx.shape());
  Tensor& gwh = grads["lstm.wh"];
  if (gwh.empty()) gwh = Tensor(wh.shape());
  Tensor& gb = grads["lstm.b"];
  if (gb.empty()) gb = Tensor({4 * h});

  const std::vector<double> zeros(static_cast<size_t>(h), 0.0);
  std::vector<double> dc(static_cast<size_t>(h), 0.0);
  for (int t = t_len - 1; t >= 0; --t) {
    const auto& iv = tr.i[static_cast<size_t>(t)];
    const auto& fv = tr.f[static_cast<size_t>(t)];
    const auto& gv = tr.g[static_cast<size_t>(t)];
    const auto& ov = tr.o[static_cast<size_t>(t)];
    const auto& cv = tr.c[static_cast<size_t>(t)];
    const std::vector<double>& h_prev = t > 0 ? tr.h[static_cast<size_t>(t - 1)] : zeros;
    const std::vector<double>& c_prev = t > 0 ? tr.c[static_cast<size_t>(t - 1)] : zeros;

    std::vector<double> dz(static_cast<size_t>(4 * h), 0.0);
    for (int j = 0; j < h; ++j) {
      const double tanh_c = std::tanh(cv[static_cast<size_t>(j)]);
      const double do_j = dh[static_cast<size_t>(j)] * tanh_c;
      const double dc_j = dc[static_cast<size_t>(j)] +
                          dh[static_cast<size_t>(j)] * ov[static_cast<size_t>(j)] *
                              d_tanh_from_value(tanh_c);
      const double di = dc_j * gv[static_cast<size_t>(j)];
      const double df = dc_j * c_prev[static_cast<size_t>(j)];
      const double dg = dc_j * iv[static_cast<size_t>(j)];
      dz[static_cast<size_t>(j)] = di * d_sigmoid_from_value(iv[static_cast<size_t>(j)]);
      dz[static_cast<size_t>(h + j)] = df * d_sigmoid_from_value(fv[static_cast<size_t>(j)]);
      dz[static_cast<size_t>(2 * h + j)] = dg * d_tanh_from_value(gv[static_cast<size_t>(j)]);
      dz[static_cast<size_t>(3 * h + j)] = do_j * d_sigmoid_from_value(ov[static_cast<size_t>(j)]);
      dc[static_cast<size_t>(j)] = dc_j * fv[static_cast<size_t>(j)];
    }

    std::vector<double> x(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] = tr.features.at2(t, j);
    outer_acc(gwx, dz, x);
    outer_acc(gwh, dz, h_prev);
    for (int j = 0; j < 4 * h; ++j) gb[j] += dz[static_cast<size_t>(j)];
    dh = matvec_t(wh, dz);
  }
}

void gru_forward(const HeadState& state, HeadTrace& tr) {
  const Tensor& wx = state.params.at("gru.wx");
  const Tensor& wh = state.params.at("gru.wh");
  const Tensor& bx = state.params.at("gru.bx");
  const Tensor& bh = state.params.at("gru.bh");
  const int t_len = tr.features.dim(0);
  const int d = tr.features.dim(1);
  const int h = wh.dim(1);

  std::vector<double> h_prev(static_cast<size_t>(h), 0.0);
  for (int t = 0; t < t_len; ++t) {
    std::vector<double> x(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] = tr.features.at2(t, j);
    std::vector<double> ax = matvec(wx, x);
    std::vector<double> ah = matvec(wh, h_prev);
    std::vector<double> rv(h), zv(h), nv(h), hv(h), bnv(h);
    for (int j = 0; j < h; ++j) {
      const double r = nn::sigmoid(ax[static_cast<size_t>(j)] + bx[j] +
                                   ah[static_cast<size_t>(j)] + bh[j]);
      const double z = nn::sigmoid(ax[static_cast<size_t>(h + j)] + bx[h + j] +
                                   ah[static_cast<size_t>(h + j)] + bh[h + j]);
      const double b_n = ah[static_cast<size_t>(2 * h + j)] + bh[2 * h + j];
      const double n = std::tanh(ax[static_cast<size_t>(2 * h + j)] + bx[2 * h + j] + r * b_n);
      rv[static_cast<size_t>(j)] = r;
      zv[static_cast<size_t>(j)] = z;
      nv[static_cast<size_t>(j)] = n;
      bnv[static_cast<size_t>(j)] = b_n;
      hv[static_cast<size_t>(j)] = (1.0 - z) * n + z * h_prev[static_cast<size_t>(j)];
    }
    tr.r.push_back(rv);
    tr.z.push_back(zv);
    tr.n.push_back(nv);
    tr.b_n.push_back(bnv);
    tr.hh.push_back(hv);
    h_prev = hv;
  }
  tr.embedding = h_prev;
}

void gru_backward(const HeadState& state, const HeadTrace& tr,
                  std::vector<double> dh, nn::ParamMap& grads) {
  const Tensor& wx = state.params.at("gru.wx");
  const Tensor& wh = state.params.at("gru.wh");
  const int t_len = tr.features.dim(0);
  const int d = tr.features.dim(1);
  const int h = wh.dim(1);

  Tensor& gwx = grads["gru.wx"];
  if (gwx.empty()) gwx = Tensor(wx.shape());
  Tensor& gwh = grads["gru.wh"];
  if (gwh.empty()) gwh = Tensor(wh.shape());
  Tensor& gbx = grads["gru.bx"];
  if (gbx.empty()) gbx = Tensor({3 * h});
  Tensor& gbh = grads["gru.bh"];
  if (gbh.empty()) gbh = Tensor({3 * h});

  const std::vector<double> zeros(static_cast<size_t>(h), 0.0);
  for (int t = t_len - 1; t >= 0; --t) {
    const auto& rv = tr.r[static_cast<size_t>(t)];
    const auto& zv = tr.z[static_cast<size_t>(t)];
    const auto& nv = tr.n[static_cast<size_t>(t)];
    const auto& bnv = tr.b_n[static_cast<size_t>(t)];
    const std::vector<double>& h_prev = t > 0 ? tr.hh[static_cast<size_t>(t - 1)] : zeros;

    std::vector<double> da(static_cast<size_t>(3 * h), 0.0);   // d wrt wx*x + bx rows
    std::vector<double> dbv(static_cast<size_t>(3 * h), 0.0);  // d wrt wh*h + bh rows
    std::vector<double> dh_prev(static_cast<size_t>(h), 0.0);
    for (int j = 0; j < h; ++j) {
      const double dz_gate = dh[static_cast<size_t>(j)] *
                             (h_prev[static_cast<size_t>(j)] - nv[static_cast<size_t>(j)]);
      const double dn = dh[static_cast<size_t>(j)] * (1.0 - zv[static_cast<size_t>(j)]);
      dh_prev[static_cast<size_t>(j)] += dh[static_cast<size_t>(j)] * zv[static_cast<size_t>(j)];

      const double dpre_n = dn * d_tanh_from_value(nv[static_cast<size_t>(j)]);
      const double dr = dpre_n * bnv[static_cast<size_t>(j)];
      const double db_n = dpre_n * rv[static_cast<size_t>(j)];
      const double dpre_r = dr * d_sigmoid_from_value(rv[static_cast<size_t>(j)]);
      const double dpre_z = dz_gate * d_sigmoid_from_value(zv[static_cast<size_t>(j)]);

      da[static_cast<size_t>(j)] = dpre_r;
      da[static_cast<size_t>(h + j)] = dpre_z;
      da[static_cast<size_t>(2 * h + j)] = dpre_n;
      dbv[static_cast<size_t>(j)] = dpre_r;
      dbv[static_cast<size_t>(h + j)] = dpre_z;
      dbv[static_cast<size_t>(2 * h + j)] = db_n;
    }

    std::vector<double> x(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] = tr.features.at2(t, j);
    outer_acc(gwx, da, x);
    outer_acc(gwh, dbv, h_prev);
    for (int j = 0; j < 3 * h; ++j) {
      gbx[j] += da[static_cast<size_t>(j)];
      gbh[j] += dbv[static_cast<size_t>(j)];
    }
    const std::vector<double> via_wh = matvec_t(wh, dbv);
    for (int j = 0; j < h; ++j) dh_prev[static_cast<size_t>(j)] += via_wh[static_cast<size_t>(j)];
    dh = dh_prev;
  }
}

void transformer_forward(const HeadState& state, HeadTrace& tr) {
  const auto& p = state.params;
  const int t_len = tr.features.dim(0);
  const int dm = state.config.tf_model_dim;
  const int nh = state.config.tf_heads;
  const int dh = dm / nh;

  tr.x0 = linear(tr.features, p.at("proj.weight"), &p.at("proj.bias"));
  add_positional_encoding(tr.x0);

  tr.q = linear(tr.x0, p.at("attn.wq"), &p.at("attn.bq"));
  tr.k = linear(tr.x0, p.at("attn.wk"), &p.at("attn.bk"));
  tr.v = linear(tr.x0, p.at("attn.wv"), &p.at("attn.bv"));

  tr.attn_concat = Tensor({t_len, dm});
  tr.attn_probs.clear();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int head = 0; head < nh; ++head) {
    const int off = head * dh;
    Tensor scores({t_len, t_len});
    for (int a = 0; a < t_len; ++a)
      for (int b = 0; b < t_len; ++b) {
        double acc = 0.0;
        for (int j = 0; j < dh; ++j)
          acc += tr.q.at2(a, off + j) * tr.k.at2(b, off + j);
        scores.at2(a, b) = acc * scale;
      }
    Tensor probs({t_len, t_len});
    for (int a = 0; a < t_len; ++a) {
      const std::vector<double> row =
          nn::softmax(scores.data() + static_cast<size_t>(a) * t_len, t_len);
      for (int b = 0; b < t_len; ++b) probs.at2(a, b) = row[static_cast<size_t>(b)];
    }
    for (int a = 0; a < t_len; ++a)
      for (int j = 0; j < dh; ++j) {
        double acc = 0.0;
        for (int b = 0; b < t_len; ++b)
          acc += probs.at2(a, b) * tr.v.at2(b, off + j);
        tr.attn_concat.at2(a, off + j) = acc;
      }
    tr.attn_probs.push_back(std::move(probs));
  }

  tr.attn_out = linear(tr.attn_concat, p.at("attn.wo"), &p.at("attn.bo"));
  tr.a1 = Tensor({t_len, dm});
  for (int64_t i = 0; i < tr.a1.size(); ++i) tr.a1[i] = tr.x0[i] + tr.attn_out[i];
  layer_norm_rows(tr.a1, p.at("ln1.gamma"), p.at("ln1.beta"), tr.y1, tr.ln1_mean,
                  tr.ln1_inv_std);

  tr.ffn_pre = linear(tr.y1, p.at("ffn.w1"), &p.at("ffn.b1"));
  tr.ffn_act = tr.ffn_pre;
  for (int64_t i = 0; i < tr.ffn_act.size(); ++i)
    tr.ffn_act[i] = std::max(0.0, tr.ffn_act[i]);
  const Tensor ffn_out = linear(tr.ffn_act, p.at("ffn.w2"), &p.at("ffn.b2"));

  tr.a2 = Tensor({t_len, dm});
  for (int64_t i = 0; i < tr.a2.size(); ++i) tr.a2[i] = tr.y1[i] + ffn_out[i];
  layer_norm_rows(tr.a2, p.at("ln2.gamma"), p.at("ln2.beta"), tr.y2, tr.ln2_mean,
                  tr.ln2_inv_std);

  tr.embedding.assign(static_cast<size_t>(dm), 0.0);
  for (int i = 0; i < t_len; ++i)
    for (int j = 0; j < dm; ++j)
      tr.embedding[static_cast<size_t>(j)] += tr.y2.at2(i, j);
  for (auto& v : tr.embedding) v /= t_len;
}

void transformer_backward(const HeadState& state, const HeadTrace& tr,
                          const std::vector<double>& dembed,
                          nn::ParamMap& grads) {
  const auto& p = state.params;
  const int t_len = tr.features.dim(0);
  const int dm = state.config.tf_model_dim;
  const int nh = state.config.tf_heads;
  const int dh = dm / nh;

  Tensor dy2({t_len, dm});
  for (int i = 0; i < t_len; ++i)
    for (int j = 0; j < dm; ++j)
      dy2.at2(i, j) = dembed[static_cast<size_t>(j)] / t_len;

  Tensor da2 = layer_norm_backward(tr.a2, p.at("ln2.gamma"), tr.ln2_mean,
                                   tr.ln2_inv_std, dy2, grads["ln2.gamma"],
                                   grads["ln2.beta"]);

  // ffn branch
  Tensor dffn_act = linear_backward(tr.ffn_act, p.at("ffn.w2"), da2,
                                    grads["ffn.w2"], grads["ffn.b2"], true);
  for (int64_t i = 0; i < dffn_act.size(); ++i)
    if (tr.ffn_pre[i] <= 0.0) dffn_act[i] = 0.0;
  Tensor dy1 = linear_backward(tr.y1, p.at("ffn.w1"), dffn_act, grads["ffn.w1"],
                               grads["ffn.b1"], true);
  for (int64_t i = 0; i < dy1.size(); ++i) dy1[i] += da2[i];  // residual

  Tensor da1 = layer_norm_backward(tr.a1, p.at("ln1.gamma"), tr.ln1_mean,
                                   tr.ln1_inv_std, dy1, grads["ln1.gamma"],
                                   grads["ln1.beta"]);

  Tensor dattn_concat = linear_backward(tr.attn_concat, p.at("attn.wo"), da1,
                                        grads["attn.wo"], grads["attn.bo"], true);

  Tensor dq({t_len, dm}), dk({t_len, dm}), dv({t_len, dm});
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int head = 0; head < nh; ++head) {
    const int off = head * dh;
    const Tensor& probs = tr.attn_probs[static_cast<size_t>(head)];
    // dV and dP
    Tensor dprobs({t_len, t_len});
    for (int a = 0; a < t_len; ++a)
      for (int b = 0; b < t_len; ++b) {
        double acc = 0.0;
        for (int j = 0; j < dh; ++j)
          acc += dattn_concat.at2(a, off + j) * tr.v.at2(b, off + j);
        dprobs.at2(a, b) = acc;
      }
    for (int b = 0; b < t_len; ++b)
      for (int j = 0; j < dh; ++j) {
        double acc = 0.0;
        for (int a = 0; a < t_len; ++a)
          acc += probs.at2(a, b) * dattn_concat.at2(a, off + j);
        dv.at2(b, off + j) += acc;
      }
    // softmax rows backward
    Tensor dscores({t_len, t_len});
    for (int a = 0; a < t_len; ++a) {
      double dot = 0.0;
      for (int b = 0; b < t_len; ++b) dot += dprobs.at2(a, b) * probs.at2(a, b);
      for (int b = 0; b < t_len; ++b)
        dscores.at2(a, b) = probs.at2(a, b) * (dprobs.at2(a, b) - dot);
    }
    for (int a = 0; a < t_len; ++a)
      for (int j = 0; j < dh; ++j) {
        double acc_q = 0.0;
        for (int b = 0; b < t_len; ++b)
          acc_q += dscores.at2(a, b) * tr.k.at2(b, off + j);
        dq.at2(a, off + j) += acc_q * scale;
      }
    for (int b = 0; b < t_len; ++b)
      for (int j = 0; j < dh; ++j) {
        double acc_k = 0.0;
        for (int a = 0; a < t_len; ++a)
          acc_k += dscores.at2(a, b) * tr.q.at2(a, off + j);
        dk.at2(b, off + j) += acc_k * scale;
      }
  }

  Tensor dx0 = linear_backward(tr.x0, p.at("attn.wq"), dq, grads["attn.wq"],
                               grads["attn.bq"], true);
  Tensor dx0_k = linear_backward(tr.x0, p.at("attn.wk"), dk, grads["attn.wk"],
                                 grads["attn.bk"], true);
  Tensor dx0_v = linear_backward(tr.x0, p.at("attn.wv"), dv, grads["attn.wv"],
                                 grads["attn.bv"], true);
  for (int64_t i = 0; i < dx0.size(); ++i) dx0[i] += dx0_k[i] + dx0_v[i] + da1[i];

  // positional encoding is additive, gradient passes through to proj
  linear_backward(tr.features, p.at("proj.weight"), dx0, grads["proj.weight"],
                  grads["proj.bias"], false);
}

}  // namespace

HeadForward head_forward(const HeadState& state, const Tensor& features,
                         bool training, Rng* rng) {
  if (features.ndim() != 2 || features.dim(0) < 1)
    throw ValidationError("head expects a [T,d] feature sequence");
  if (features.dim(1) != state.feature_dim)
    throw ValidationError("feature dim mismatch: model " +
                          std::to_string(state.feature_dim) + ", input " +
                          std::to_string(features.dim(1)));

  HeadForward fwd;
  fwd.trace = std::make_shared<HeadTrace>();
  HeadTrace& tr = *fwd.trace;
  tr.features = features;

  switch (state.config.kind) {
    case HeadKind::lstm: lstm_forward(state, tr); break;
    case HeadKind::gru: gru_forward(state, tr); break;
    case HeadKind::transformer: transformer_forward(state, tr); break;
  }

  const double rate = state.config.kind == HeadKind::transformer
                          ? state.config.tf_dropout
                          : state.config.recurrent_dropout;
  tr.dropped = tr.embedding;
  if (training && rate > 0.0) {
    if (!rng) throw ValidationError("training forward requires an rng");
    tr.dropout_mask =
        nn::dropout_mask(static_cast<int>(tr.embedding.size()), rate, *rng);
    for (size_t i = 0; i < tr.dropped.size(); ++i)
      tr.dropped[i] *= tr.dropout_mask[i];
  }

  const Tensor& ow = state.params.at("out.weight");
  const Tensor& ob = state.params.at("out.bias");
  for (int j = 0; j < 2; ++j) {
    double acc = ob[j];
    for (size_t k = 0; k < tr.dropped.size(); ++k)
      acc += ow.at2(j, static_cast<int>(k)) * tr.dropped[k];
    fwd.logits[static_cast<size_t>(j)] = acc;
  }
  return fwd;
}

void head_backward(const HeadState& state, const HeadForward& forward,
                   const std::array<double, 2>& dlogits, nn::ParamMap& grads) {
  const HeadTrace& tr = *forward.trace;
  const Tensor& ow = state.params.at("out.weight");
  const int embed_dim = static_cast<int>(tr.embedding.size());

  Tensor& gow = grads["out.weight"];
  if (gow.empty()) gow = Tensor(ow.shape());
  Tensor& gob = grads["out.bias"];
  if (gob.empty()) gob = Tensor({2});

  std::vector<double> dembed(static_cast<size_t>(embed_dim), 0.0);
  for (int j = 0; j < 2; ++j) {
    gob[j] += dlogits[static_cast<size_t>(j)];
    for (int k = 0; k < embed_dim; ++k) {
      gow.at2(j, k) += dlogits[static_cast<size_t>(j)] * tr.dropped[static_cast<size_t>(k)];
      dembed[static_cast<size_t>(k)] +=
          dlogits[static_cast<size_t>(j)] * ow.at2(j, k);
    }
  }
  if (!tr.dropout_mask.empty())
    for (int k = 0; k < embed_dim; ++k)
      dembed[static_cast<size_t>(k)] *= tr.dropout_mask[static_cast<size_t>(k)];

  switch (state.config.kind) {
    case HeadKind::lstm: lstm_backward(state, tr, std::move(dembed), grads); break;
    case HeadKind::gru: gru_backward(state, tr, std::move(dembed), grads); break;
    case HeadKind::transformer:
      transformer_backward(state, tr, dembed, grads);
      break;
  }
}

}  // namespace gundet

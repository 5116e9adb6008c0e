#include "netcal/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace netcal {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad(double x) {
  double phi_cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
  double phi_pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return phi_cdf + x * phi_pdf;
}

// Parameters always hold float32-representable doubles so the 32-bit model
// file round-trips without behavioral drift.
void quantize(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

struct LnCache {
  Eigen::MatrixXd xhat;
  Eigen::VectorXd invstd;
};

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::MatrixXd& g,
                           const Eigen::MatrixXd& b, LnCache& cache) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  cache.xhat.resize(rows, cols);
  cache.invstd.resize(rows);
  Eigen::MatrixXd y(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mean = x.row(r).mean();
    double var = (x.row(r).array() - mean).square().mean();
    double invstd = 1.0 / std::sqrt(var + kLnEps);
    cache.invstd(r) = invstd;
    cache.xhat.row(r) = (x.row(r).array() - mean) * invstd;
    y.row(r) = cache.xhat.row(r).cwiseProduct(g.row(0)) + b.row(0);
  }
  return y;
}

// dy -> dx, accumulating gamma/beta gradients.
Eigen::MatrixXd layer_norm_backward(const Eigen::MatrixXd& dy, const LnCache& cache,
                                    const Eigen::MatrixXd& g, Eigen::MatrixXd& dg,
                                    Eigen::MatrixXd& db) {
  const Eigen::Index rows = dy.rows(), cols = dy.cols();
  Eigen::MatrixXd dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    dg.row(0) += dy.row(r).cwiseProduct(cache.xhat.row(r));
    db.row(0) += dy.row(r);
    Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.row(0));
    double mean_dxhat = dxhat.mean();
    double mean_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(r)).mean();
    dx.row(r) = cache.invstd(r) *
                (dxhat.array() - mean_dxhat - cache.xhat.row(r).array() * mean_dxhat_xhat);
  }
  return dx;
}

struct LayerCache {
  Eigen::MatrixXd h_in;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> attn;  // per-head softmax probabilities
  Eigen::MatrixXd concat;             // attention-weighted values, heads side by side
  Eigen::MatrixXd attn_out;
  Eigen::MatrixXd drop_attn;
  LnCache ln1;
  Eigen::MatrixXd l1;
  Eigen::MatrixXd f1;       // pre-activation
  Eigen::MatrixXd act;      // gelu(f1)
  Eigen::MatrixXd f2;
  Eigen::MatrixXd drop_ff;
  LnCache ln2;
  Eigen::MatrixXd h_out;
};

struct ForwardCache {
  Eigen::MatrixXd input;
  Eigen::MatrixXd h0;
  LnCache ln_in;
  Eigen::MatrixXd h2;  // normalized + positional (pre-dropout)
  Eigen::MatrixXd drop_emb;
  Eigen::MatrixXd h_first;  // first layer input
  std::vector<LayerCache> layers;
  Eigen::VectorXd pooled;
  double pool_norm = 0.0;
  Eigen::VectorXd out;
};

void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    fail_validation(std::string("model file truncated reading ") + what);
  }
}

void write_u32(std::ostream& out, std::uint32_t v) { write_bytes(out, &v, 4); }
void write_u64(std::ostream& out, std::uint64_t v) { write_bytes(out, &v, 8); }
void write_f64(std::ostream& out, double v) { write_bytes(out, &v, 8); }

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  read_bytes(in, &v, 4, what);
  return v;
}
std::uint64_t read_u64(std::istream& in, const char* what) {
  std::uint64_t v = 0;
  read_bytes(in, &v, 8, what);
  return v;
}
double read_f64(std::istream& in, const char* what) {
  double v = 0;
  read_bytes(in, &v, 8, what);
  return v;
}

constexpr std::uint32_t kModelMagic = 0x4e43454eu;  // "NCEN"
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim <= 0 || model_dim <= 0 || layers <= 0 || heads <= 0 || max_positions <= 0) {
    fail_validation("encoder dimensions must be positive");
  }
  if (model_dim % heads != 0) fail_validation("model_dim must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) fail_validation("dropout must be in [0,1)");
}

void TrainConfig::validate() const {
  if (!(margin > 0.0)) fail_validation("margin must be positive");
  if (batch_size < 1) fail_validation("batch size must be at least 1");
  if (learning_rate < 0.0) fail_validation("learning rate must be non-negative");
  if (weight_decay < 0.0) fail_validation("weight decay must be non-negative");
  if (epochs < 1) fail_validation("epochs must be at least 1");
}

double triplet_loss(const Eigen::VectorXd& a, const Eigen::VectorXd& p, const Eigen::VectorXd& n,
                    double margin) {
  double na = a.norm(), np = p.norm(), nn = n.norm();
  if (na == 0.0 || np == 0.0 || nn == 0.0) fail_validation("triplet loss on zero-norm input");
  double cos_ap = a.dot(p) / (na * np);
  double cos_an = a.dot(n) / (na * nn);
  return std::max(0.0, -cos_ap + cos_an + margin);
}

struct EncoderModel::Impl {
  EncoderConfig cfg;
  std::vector<Param> params;

  // Fixed parameter indices; layer blocks follow the globals.
  enum Global { kProjW = 0, kProjB, kLnInG, kLnInB, kPos, kGlobalCount };
  enum PerLayer {
    kWq = 0, kBq, kWk, kBk, kWv, kBv, kWo, kBo,
    kLn1G, kLn1B, kW1, kB1, kW2, kB2, kLn2G, kLn2B,
    kLayerCount
  };

  Param& at(Global g) { return params[g]; }
  const Param& at(Global g) const { return params[g]; }
  Param& at(int layer, PerLayer p) { return params[kGlobalCount + layer * kLayerCount + p]; }
  const Param& at(int layer, PerLayer p) const {
    return params[kGlobalCount + layer * kLayerCount + p];
  }

  explicit Impl(const EncoderConfig& c) : cfg(c) {
    cfg.validate();
    const int d = cfg.model_dim, f = cfg.effective_ff_dim();
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xca1));
    std::normal_distribution<double> init(0.0, 0.02);

    auto add = [&](const std::string& name, int rows, int cols, bool random, double fill = 0.0) {
      Param p;
      p.name = name;
      p.value.resize(rows, cols);
      if (random) {
        for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = init(rng);
      } else {
        p.value.setConstant(fill);
      }
      quantize(p.value);
      p.grad = Eigen::MatrixXd::Zero(rows, cols);
      params.push_back(std::move(p));
    };

    add("proj.w", cfg.input_dim, d, true);
    add("proj.b", 1, d, false);
    add("ln_in.g", 1, d, false, 1.0);
    add("ln_in.b", 1, d, false);
    add("pos", cfg.max_positions, d, true);
    for (int l = 0; l < cfg.layers; ++l) {
      std::string prefix = "layer" + std::to_string(l) + ".";
      add(prefix + "attn.wq", d, d, true);
      add(prefix + "attn.bq", 1, d, false);
      add(prefix + "attn.wk", d, d, true);
      add(prefix + "attn.bk", 1, d, false);
      add(prefix + "attn.wv", d, d, true);
      add(prefix + "attn.bv", 1, d, false);
      add(prefix + "attn.wo", d, d, true);
      add(prefix + "attn.bo", 1, d, false);
      add(prefix + "ln1.g", 1, d, false, 1.0);
      add(prefix + "ln1.b", 1, d, false);
      add(prefix + "ff.w1", d, f, true);
      add(prefix + "ff.b1", 1, f, false);
      add(prefix + "ff.w2", f, d, true);
      add(prefix + "ff.b2", 1, d, false);
      add(prefix + "ln2.g", 1, d, false, 1.0);
      add(prefix + "ln2.b", 1, d, false);
    }
  }

  void zero_grads() {
    for (auto& p : params) p.grad.setZero();
  }

  Eigen::MatrixXd dropout(const Eigen::MatrixXd& x, bool training, std::mt19937_64* rng,
                          Eigen::MatrixXd& mask) const {
    if (!training || cfg.dropout == 0.0) {
      mask.resize(0, 0);
      return x;
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    mask.resize(x.rows(), x.cols());
    const double keep = 1.0 - cfg.dropout;
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
      mask.data()[i] = unif(*rng) < keep ? 1.0 / keep : 0.0;
    }
    return x.cwiseProduct(mask);
  }

  Eigen::VectorXd forward(const Eigen::MatrixXd& x, bool training, std::mt19937_64* rng,
                          ForwardCache& fc) const {
    const auto t = x.rows();
    if (x.cols() != cfg.input_dim) {
      fail_validation("window feature dim " + std::to_string(x.cols()) + " does not match input_dim " +
                      std::to_string(cfg.input_dim));
    }
    if (t == 0) fail_validation("cannot encode an empty window");
    if (t > cfg.max_positions) {
      fail_validation("window length " + std::to_string(t) + " exceeds max_positions " +
                      std::to_string(cfg.max_positions));
    }
    if (!x.allFinite()) fail_validation("non-finite values in encoder input");

    fc.input = x;
    fc.h0 = (x * at(kProjW).value).rowwise() + at(kProjB).value.row(0);
    Eigen::MatrixXd h1 = layer_norm(fc.h0, at(kLnInG).value, at(kLnInB).value, fc.ln_in);
    fc.h2 = h1 + at(kPos).value.topRows(t);
    fc.h_first = dropout(fc.h2, training, rng, fc.drop_emb);

    const int heads = cfg.heads;
    const int dh = cfg.model_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    fc.layers.assign(static_cast<std::size_t>(cfg.layers), LayerCache{});
    Eigen::MatrixXd h = fc.h_first;
    for (int l = 0; l < cfg.layers; ++l) {
      LayerCache& lc = fc.layers[static_cast<std::size_t>(l)];
      lc.h_in = h;
      lc.q = (h * at(l, kWq).value).rowwise() + at(l, kBq).value.row(0);
      lc.k = (h * at(l, kWk).value).rowwise() + at(l, kBk).value.row(0);
      lc.v = (h * at(l, kWv).value).rowwise() + at(l, kBv).value.row(0);

      lc.attn.resize(static_cast<std::size_t>(heads));
      lc.concat.resize(t, cfg.model_dim);
      for (int hd = 0; hd < heads; ++hd) {
        auto qh = lc.q.middleCols(hd * dh, dh);
        auto kh = lc.k.middleCols(hd * dh, dh);
        auto vh = lc.v.middleCols(hd * dh, dh);
        Eigen::MatrixXd scores = qh * kh.transpose() * scale;
        Eigen::MatrixXd& a = lc.attn[static_cast<std::size_t>(hd)];
        a.resize(t, t);
        for (Eigen::Index r = 0; r < t; ++r) {
          double mx = scores.row(r).maxCoeff();
          Eigen::ArrayXd e = (scores.row(r).array() - mx).exp();
          a.row(r) = e / e.sum();
        }
        lc.concat.middleCols(hd * dh, dh) = a * vh;
      }
      lc.attn_out = (lc.concat * at(l, kWo).value).rowwise() + at(l, kBo).value.row(0);
      Eigen::MatrixXd attn_dropped = dropout(lc.attn_out, training, rng, lc.drop_attn);
      Eigen::MatrixXd r1 = h + attn_dropped;
      lc.l1 = layer_norm(r1, at(l, kLn1G).value, at(l, kLn1B).value, lc.ln1);

      lc.f1 = (lc.l1 * at(l, kW1).value).rowwise() + at(l, kB1).value.row(0);
      lc.act = lc.f1.unaryExpr([](double v) { return gelu(v); });
      lc.f2 = (lc.act * at(l, kW2).value).rowwise() + at(l, kB2).value.row(0);
      Eigen::MatrixXd ff_dropped = dropout(lc.f2, training, rng, lc.drop_ff);
      Eigen::MatrixXd r2 = lc.l1 + ff_dropped;
      lc.h_out = layer_norm(r2, at(l, kLn2G).value, at(l, kLn2B).value, lc.ln2);
      h = lc.h_out;
    }

    fc.pooled = h.colwise().mean().transpose();
    fc.pool_norm = fc.pooled.norm();
    if (!(fc.pool_norm > 0.0) || !std::isfinite(fc.pool_norm)) {
      fail_runtime("encoder produced a degenerate pooled vector");
    }
    fc.out = fc.pooled / fc.pool_norm;
    return fc.out;
  }

  // Accumulates parameter gradients for one window given dL/d(output).
  void backward(const ForwardCache& fc, const Eigen::VectorXd& dout) {
    const auto t = fc.input.rows();
    const int heads = cfg.heads;
    const int dh = cfg.model_dim / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    // l2 normalization
    Eigen::VectorXd dpooled =
        (dout - fc.out * fc.out.dot(dout)) / fc.pool_norm;

    // mean pooling
    Eigen::MatrixXd dh_mat = (dpooled / static_cast<double>(t)).transpose().replicate(t, 1);

    for (int l = cfg.layers - 1; l >= 0; --l) {
      const LayerCache& lc = fc.layers[static_cast<std::size_t>(l)];

      Eigen::MatrixXd dr2 = layer_norm_backward(dh_mat, lc.ln2, at(l, kLn2G).value,
                                                at(l, kLn2G).grad, at(l, kLn2B).grad);
      Eigen::MatrixXd dl1 = dr2;
      Eigen::MatrixXd df2 = dr2;
      if (lc.drop_ff.size() > 0) df2 = df2.cwiseProduct(lc.drop_ff);

      at(l, kW2).grad += lc.act.transpose() * df2;
      at(l, kB2).grad.row(0) += df2.colwise().sum();
      Eigen::MatrixXd dact = df2 * at(l, kW2).value.transpose();
      Eigen::MatrixXd df1 = dact.cwiseProduct(lc.f1.unaryExpr([](double v) { return gelu_grad(v); }));
      at(l, kW1).grad += lc.l1.transpose() * df1;
      at(l, kB1).grad.row(0) += df1.colwise().sum();
      dl1 += df1 * at(l, kW1).value.transpose();

      Eigen::MatrixXd dr1 = layer_norm_backward(dl1, lc.ln1, at(l, kLn1G).value,
                                                at(l, kLn1G).grad, at(l, kLn1B).grad);
      Eigen::MatrixXd dh_in = dr1;
      Eigen::MatrixXd dattn_out = dr1;
      if (lc.drop_attn.size() > 0) dattn_out = dattn_out.cwiseProduct(lc.drop_attn);

      at(l, kWo).grad += lc.concat.transpose() * dattn_out;
      at(l, kBo).grad.row(0) += dattn_out.colwise().sum();
      Eigen::MatrixXd dconcat = dattn_out * at(l, kWo).value.transpose();

      Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(t, cfg.model_dim);
      Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(t, cfg.model_dim);
      Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(t, cfg.model_dim);
      for (int hd = 0; hd < heads; ++hd) {
        const Eigen::MatrixXd& a = lc.attn[static_cast<std::size_t>(hd)];
        auto qh = lc.q.middleCols(hd * dh, dh);
        auto kh = lc.k.middleCols(hd * dh, dh);
        auto vh = lc.v.middleCols(hd * dh, dh);
        Eigen::MatrixXd do_h = dconcat.middleCols(hd * dh, dh);

        Eigen::MatrixXd da = do_h * vh.transpose();
        dv.middleCols(hd * dh, dh) = a.transpose() * do_h;

        Eigen::MatrixXd ds(t, t);
        for (Eigen::Index r = 0; r < t; ++r) {
          double dot = da.row(r).dot(a.row(r));
          ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
        }
        dq.middleCols(hd * dh, dh) = ds * kh * scale;
        dk.middleCols(hd * dh, dh) = ds.transpose() * qh * scale;
      }

      at(l, kWq).grad += lc.h_in.transpose() * dq;
      at(l, kBq).grad.row(0) += dq.colwise().sum();
      at(l, kWk).grad += lc.h_in.transpose() * dk;
      at(l, kBk).grad.row(0) += dk.colwise().sum();
      at(l, kWv).grad += lc.h_in.transpose() * dv;
      at(l, kBv).grad.row(0) += dv.colwise().sum();

      dh_in += dq * at(l, kWq).value.transpose() + dk * at(l, kWk).value.transpose() +
               dv * at(l, kWv).value.transpose();
      dh_mat = dh_in;
    }

    if (fc.drop_emb.size() > 0) dh_mat = dh_mat.cwiseProduct(fc.drop_emb);
    at(kPos).grad.topRows(t) += dh_mat;
    Eigen::MatrixXd dh0 = layer_norm_backward(dh_mat, fc.ln_in, at(kLnInG).value, at(kLnInG).grad,
                                              at(kLnInB).grad);
    at(kProjW).grad += fc.input.transpose() * dh0;
    at(kProjB).grad.row(0) += dh0.colwise().sum();
  }

  // Loss and gradient accumulation for one triplet of raw input windows.
  double triplet_backward(const Eigen::MatrixXd& xa, const Eigen::MatrixXd& xp,
                          const Eigen::MatrixXd& xn, double margin, bool training,
                          std::mt19937_64* rng) {
    ForwardCache fa, fp, fn;
    Eigen::VectorXd za = forward(xa, training, rng, fa);
    Eigen::VectorXd zp = forward(xp, training, rng, fp);
    Eigen::VectorXd zn = forward(xn, training, rng, fn);
    double slack = -za.dot(zp) + za.dot(zn) + margin;
    if (slack <= 0.0) return 0.0;
    backward(fa, zn - zp);
    backward(fp, -za);
    backward(fn, za);
    return slack;
  }
};

EncoderModel::EncoderModel(const EncoderConfig& cfg) : impl_(std::make_unique<Impl>(cfg)) {}
EncoderModel::EncoderModel(const EncoderModel& other) : impl_(std::make_unique<Impl>(*other.impl_)) {}
EncoderModel& EncoderModel::operator=(const EncoderModel& other) {
  if (this != &other) impl_ = std::make_unique<Impl>(*other.impl_);
  return *this;
}
EncoderModel::EncoderModel(EncoderModel&&) noexcept = default;
EncoderModel& EncoderModel::operator=(EncoderModel&&) noexcept = default;
EncoderModel::~EncoderModel() = default;

const EncoderConfig& EncoderModel::config() const { return impl_->cfg; }

std::vector<Param>& EncoderModel::parameters() { return impl_->params; }
const std::vector<Param>& EncoderModel::parameters() const { return impl_->params; }

Eigen::VectorXd EncoderModel::encode(const Eigen::MatrixXd& window) const {
  ForwardCache fc;
  return impl_->forward(window, false, nullptr, fc);
}

Eigen::VectorXd EncoderModel::encode_ids(std::span<const std::int32_t> ids,
                                         const EmbeddingTable& table) const {
  return encode(table.lookup_window(ids));
}

double EncoderModel::loss_and_gradients(const Eigen::MatrixXd& anchor,
                                        const Eigen::MatrixXd& positive,
                                        const Eigen::MatrixXd& negative, double margin) {
  impl_->zero_grads();
  return impl_->triplet_backward(anchor, positive, negative, margin, false, nullptr);
}

std::vector<double> EncoderModel::train(const std::vector<Triplet>& triplets,
                                        const EmbeddingTable& table, const TrainConfig& cfg) {
  cfg.validate();
  if (triplets.empty()) fail_validation("cannot train on zero triplets");
  if (table.dim != impl_->cfg.input_dim) {
    fail_validation("embedding dim does not match encoder input_dim");
  }

  std::mt19937_64 order_rng(mix_seed(cfg.seed, 0x0dd));
  std::mt19937_64 drop_rng(mix_seed(cfg.seed, 0xd20));

  // Adam with decoupled weight decay.
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Eigen::MatrixXd> mom1, mom2;
  mom1.reserve(impl_->params.size());
  mom2.reserve(impl_->params.size());
  for (const auto& p : impl_->params) {
    mom1.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
    mom2.push_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
  }

  std::vector<double> batch_losses;
  std::vector<std::size_t> order(triplets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const auto batch_n = static_cast<double>(end - start);
      impl_->zero_grads();
      double loss_sum = 0.0;
      for (std::size_t bi = start; bi < end; ++bi) {
        const Triplet& t = triplets[order[bi]];
        loss_sum += impl_->triplet_backward(table.lookup_window(t.anchor.ids),
                                            table.lookup_window(t.positive.ids),
                                            table.lookup_window(t.negative.ids), cfg.margin,
                                            true, &drop_rng);
      }
      double batch_loss = loss_sum / batch_n;
      if (!std::isfinite(batch_loss)) {
        fail_runtime("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                     std::to_string(start / static_cast<std::size_t>(cfg.batch_size)) +
                     " (loss=" + std::to_string(batch_loss) + ")");
      }
      batch_losses.push_back(batch_loss);

      ++step;
      double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < impl_->params.size(); ++i) {
        Param& p = impl_->params[i];
        Eigen::MatrixXd g = p.grad / batch_n;
        mom1[i] = beta1 * mom1[i] + (1.0 - beta1) * g;
        mom2[i] = beta2 * mom2[i] + (1.0 - beta2) * g.cwiseProduct(g);
        Eigen::ArrayXXd mhat = mom1[i].array() / bc1;
        Eigen::ArrayXXd vhat = mom2[i].array() / bc2;
        p.value.array() -= cfg.learning_rate * (mhat / (vhat.sqrt() + eps));
        p.value.array() -= cfg.learning_rate * cfg.weight_decay * p.value.array();
      }
    }
  }

  for (auto& p : impl_->params) {
    if (!p.value.allFinite()) fail_runtime("parameter '" + p.name + "' went non-finite");
    quantize(p.value);
  }
  return batch_losses;
}

void EncoderModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_runtime("cannot open '" + path + "' for writing");
  const EncoderConfig& c = impl_->cfg;
  write_u32(out, kModelMagic);
  write_u32(out, kModelVersion);
  write_u32(out, static_cast<std::uint32_t>(c.input_dim));
  write_u32(out, static_cast<std::uint32_t>(c.model_dim));
  write_u32(out, static_cast<std::uint32_t>(c.layers));
  write_u32(out, static_cast<std::uint32_t>(c.heads));
  write_u32(out, static_cast<std::uint32_t>(c.effective_ff_dim()));
  write_u32(out, static_cast<std::uint32_t>(c.max_positions));
  write_f64(out, c.dropout);
  write_u64(out, c.seed);
  write_u32(out, static_cast<std::uint32_t>(impl_->params.size()));
  for (const auto& p : impl_->params) {
    write_u32(out, static_cast<std::uint32_t>(p.name.size()));
    write_bytes(out, p.name.data(), p.name.size());
    write_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    write_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index cc = 0; cc < p.value.cols(); ++cc) {
        auto f = static_cast<float>(p.value(r, cc));
        write_bytes(out, &f, 4);
      }
    }
  }
  if (!out) fail_runtime("I/O error writing '" + path + "'");
}

EncoderModel EncoderModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_runtime("cannot open model file '" + path + "'");
  if (read_u32(in, "magic") != kModelMagic) fail_validation("'" + path + "' is not an encoder model file");
  std::uint32_t version = read_u32(in, "version");
  if (version != kModelVersion) {
    fail_validation("encoder model version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kModelVersion) + ")");
  }
  EncoderConfig c;
  c.input_dim = static_cast<int>(read_u32(in, "input_dim"));
  c.model_dim = static_cast<int>(read_u32(in, "model_dim"));
  c.layers = static_cast<int>(read_u32(in, "layers"));
  c.heads = static_cast<int>(read_u32(in, "heads"));
  c.ff_dim = static_cast<int>(read_u32(in, "ff_dim"));
  c.max_positions = static_cast<int>(read_u32(in, "max_positions"));
  c.dropout = read_f64(in, "dropout");
  c.seed = read_u64(in, "seed");

  EncoderModel model(c);
  std::uint32_t count = read_u32(in, "param count");
  if (count != model.impl_->params.size()) {
    fail_validation("model file has " + std::to_string(count) + " parameter blocks, expected " +
                    std::to_string(model.impl_->params.size()));
  }
  for (auto& p : model.impl_->params) {
    std::uint32_t name_len = read_u32(in, "name length");
    std::string name(name_len, '\0');
    read_bytes(in, name.data(), name_len, "parameter name");
    if (name != p.name) fail_validation("unexpected parameter block '" + name + "'");
    std::uint32_t rows = read_u32(in, "rows"), cols = read_u32(in, "cols");
    if (rows != p.value.rows() || cols != p.value.cols()) {
      fail_validation("parameter '" + name + "' has unexpected shape");
    }
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t cc = 0; cc < cols; ++cc) {
        float f = 0;
        read_bytes(in, &f, 4, "parameter data");
        p.value(r, cc) = static_cast<double>(f);
      }
    }
  }
  return model;
}

GradCheckResult grad_check(const EncoderConfig& cfg, int window_len, std::uint64_t seed) {
  EncoderConfig c = cfg;
  c.validate();
  if (window_len <= 0 || window_len > c.max_positions) {
    fail_validation("grad check window length out of range");
  }

  EncoderModel model(c);
  std::mt19937_64 rng(mix_seed(seed, 0x9c));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double margin = 0.1;

  auto random_window = [&] {
    Eigen::MatrixXd x(window_len, c.input_dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
    return x;
  };

  // Resample until the hinge is active and safely away from its boundary so
  // the finite-difference probes stay on one side of it.
  Eigen::MatrixXd xa, xp, xn;
  bool found = false;
  for (int attempt = 0; attempt < 200; ++attempt) {
    xa = random_window();
    xp = random_window();
    xn = random_window();
    Eigen::VectorXd za = model.encode(xa), zp = model.encode(xp), zn = model.encode(xn);
    double slack = -za.dot(zp) + za.dot(zn) + margin;
    if (slack > 1e-3) {
      found = true;
      break;
    }
  }
  if (!found) fail_runtime("could not sample a triplet with an active hinge");

  double analytic_loss = model.loss_and_gradients(xa, xp, xn, margin);

  GradCheckResult result;
  result.loss = analytic_loss;
  result.hinge_active = true;

  auto loss_at = [&]() {
    Eigen::VectorXd za = model.encode(xa), zp = model.encode(xp), zn = model.encode(xn);
    return std::max(0.0, -za.dot(zp) + za.dot(zn) + margin);
  };

  const double h = 1e-4;
  for (auto& p : model.parameters()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double saved = p.value.data()[i];
      p.value.data()[i] = saved + h;
      double up = loss_at();
      p.value.data()[i] = saved - h;
      double down = loss_at();
      p.value.data()[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double analytic = p.grad.data()[i];
      double rel = std::abs(analytic - numeric) /
                   std::max({1e-5, std::abs(analytic), std::abs(numeric)});
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
      }
    }
  }
  return result;
}

}  // namespace netcal

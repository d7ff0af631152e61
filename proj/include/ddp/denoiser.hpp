#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ddp/errors.hpp"
#include "ddp/rng.hpp"

namespace ddp {

/// Network architecture selector. The temporal U-Net convolves along the
/// waypoint axis and accepts any horizon its downsampling factor divides;
/// the residual MLP flattens the trajectory and is pinned to one horizon.
enum class ArchKind { kTemporalUnet, kResidualMlp };

inline std::string arch_name(ArchKind a) {
  return a == ArchKind::kTemporalUnet ? "temporal-unet" : "residual-mlp";
}

inline ArchKind arch_from_name(const std::string& s) {
  if (s == "temporal-unet") return ArchKind::kTemporalUnet;
  if (s == "residual-mlp") return ArchKind::kResidualMlp;
  throw ConfigError("unknown architecture '" + s + "'");
}

struct DenoiserConfig {
  ArchKind arch = ArchKind::kTemporalUnet;
  int dims = 3;     // waypoint coordinates per row
  int horizon = 16; // training horizon
  std::vector<int> widths = {32, 64};  // channels per level (unet) or hidden width x depth (mlp)
  int step_embed = 32;
  int cond_embed = 32;  // summed with the step embedding, so sizes must match
  int kernel = 5;
  int groups = 8;

  int levels() const { return static_cast<int>(widths.size()); }
  int down_factor() const { return 1 << (levels() - 1); }

  void validate() const {
    if (dims < 1) throw ConfigError("denoiser: dims must be >= 1");
    if (horizon < 2) throw ConfigError("denoiser: horizon must be >= 2");
    if (widths.empty()) throw ConfigError("denoiser: widths must be nonempty");
    for (int w : widths)
      if (w < 1) throw ConfigError("denoiser: widths must be positive");
    if (step_embed < 4 || step_embed % 2 != 0)
      throw ConfigError("denoiser: step_embed must be even and >= 4");
    if (cond_embed != step_embed)
      throw ConfigError("denoiser: cond_embed must equal step_embed (embeddings are summed)");
    if (arch == ArchKind::kTemporalUnet) {
      if (kernel < 1 || kernel % 2 == 0) throw ConfigError("denoiser: kernel must be odd");
      if (groups < 1) throw ConfigError("denoiser: groups must be >= 1");
      for (int w : widths)
        if (w % groups != 0)
          throw ConfigError("denoiser: every width must be divisible by the group count");
      if (horizon % down_factor() != 0 || horizon / down_factor() < 2)
        throw ConfigError("denoiser: horizon must be a multiple of " +
                          std::to_string(down_factor()) + " and leave >= 2 waypoints at the base");
    }
  }
};

/// Conditioning input for one evaluation: a scaled return in [0, 1], or the
/// null token (zero condition embedding) for unconditional prediction.
struct Condition {
  double value = 0.0;
  bool is_null = true;

  static Condition null() { return Condition{}; }
  static Condition returns(double scaled) { return Condition{scaled, false}; }
};

/// Noise-prediction network with hand-written forward and backward passes.
/// Parameters live in one flat caller-owned vector; the class itself stores
/// only the architecture layout, so a const Denoiser is safe to share.
template <typename S>
class Denoiser {
public:
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

  explicit Denoiser(const DenoiserConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    build();
  }

  Denoiser(const Denoiser& other) : cfg_(other.cfg_) {
    build();
    nonnull_cond_evals_.store(other.nonnull_cond_evals_.load());
  }

  Denoiser& operator=(const Denoiser& other) {
    if (this != &other) {
      cfg_ = other.cfg_;
      entries_.clear();
      total_ = 0;
      levels_.clear();
      ups_.clear();
      blocks_.clear();
      build();
      nonnull_cond_evals_.store(other.nonnull_cond_evals_.load());
    }
    return *this;
  }

  const DenoiserConfig& config() const { return cfg_; }
  Eigen::Index param_count() const { return total_; }

  /// Number of forward evaluations made with a non-null condition since the
  /// last reset. Guidance paths that must stay unconditional are checked
  /// against this counter.
  std::uint64_t nonnull_condition_evals() const { return nonnull_cond_evals_.load(); }
  void reset_condition_counter() const { nonnull_cond_evals_.store(0); }

  /// Fan-in normal init; norm scales start at one. The output projection is
  /// scaled down 10x so the initial prediction is small but not degenerate.
  void init_params(Vec& params, Rng& rng) const {
    params.resize(total_);
    for (const ParamEntry& e : entries_) {
      S* out = params.data() + e.offset;
      const Eigen::Index n = e.rows * e.cols;
      switch (e.init) {
        case Init::kZero:
          for (Eigen::Index i = 0; i < n; ++i) out[i] = S(0);
          break;
        case Init::kOne:
          for (Eigen::Index i = 0; i < n; ++i) out[i] = S(1);
          break;
        case Init::kFanIn:
        case Init::kFanInSmall: {
          double std = std::sqrt(2.0 / static_cast<double>(e.fan_in));
          if (e.init == Init::kFanInSmall) std *= 0.1;
          for (Eigen::Index i = 0; i < n; ++i) out[i] = static_cast<S>(std * rng.normal());
          break;
        }
      }
    }
  }

  // Per-call caches. One workspace per concurrent caller; reusing it across
  // calls avoids reallocation.
  struct ConvCache {
    Mat x;
  };
  struct GnCache {
    Mat xhat;
    Vec inv_std;  // one per group
  };
  struct MishCache {
    Mat x;
  };
  struct DenseCache {
    Vec x;
  };
  struct ResCache {
    ConvCache c1;
    GnCache g1;
    MishCache m1;
    ConvCache c2;
    GnCache g2;
    MishCache m2;
    Vec emb_m;  // copy of the shared Mish(e) for the projection gradient
  };
  struct EmbCache {
    Vec sin_emb;
    DenseCache t1, t2;
    MishCache tm;
    DenseCache p1, p2;
    MishCache pm;
    bool has_cond = false;
    Vec e;       // summed embedding, pre-Mish
    Vec m;       // Mish(e), shared by every block projection
  };
  struct LevelCache {
    ResCache rb1, rb2;
    ConvCache down;
  };
  struct UpCache {
    ConvCache conv;  // stores the upsampled input
    ResCache rb1, rb2;
  };
  struct BlockCache {  // residual-mlp block
    DenseCache a, proj, b;
    MishCache m;
  };
  struct Workspace {
    EmbCache emb;
    std::vector<LevelCache> levels;
    ResCache mid1, mid2;
    std::vector<UpCache> ups;
    ConvCache final_conv;
    GnCache final_gn;
    MishCache final_mish;
    ConvCache out_conv;
    std::vector<Mat> skips;
    // residual-mlp
    DenseCache in_fc, out_fc;
    std::vector<BlockCache> blocks;
    Vec flat;
  };

  /// Training example with the noising already applied.
  struct Prepared {
    Mat x;       // noisy trajectory, horizon x dims
    int k = 1;   // diffusion step
    Condition cond;
    Mat target;  // the injected noise
  };

  /// Predicts the injected noise for a normalized trajectory (rows are
  /// waypoints). Shape of the result equals the shape of the input.
  Mat forward(const Vec& params, const Mat& x, int k, Condition cond, Workspace& ws) const {
    check_input(params, x, k);
    if (!cond.is_null) nonnull_cond_evals_.fetch_add(1);
    embed_forward(params, k, cond, ws.emb);
    if (cfg_.arch == ArchKind::kResidualMlp) return mlp_forward(params, x, ws);
    return unet_forward(params, x, ws);
  }

  /// Accumulates parameter gradients for the last forward stored in `ws`.
  /// `d_out` is the loss gradient with respect to the forward result and
  /// `grad` must already have param_count() entries.
  void backward(const Vec& params, Workspace& ws, const Mat& d_out, Vec& grad) const {
    Vec d_m = Vec::Zero(cfg_.step_embed);  // gradient into Mish(e)
    if (cfg_.arch == ArchKind::kResidualMlp) {
      mlp_backward(params, ws, d_out, grad, d_m);
    } else {
      unet_backward(params, ws, d_out, grad, d_m);
    }
    embed_backward(params, ws.emb, d_m, grad);
  }

  /// Mean-squared noise-prediction loss, averaged over elements and then
  /// over the batch, with gradient. `grad` is overwritten.
  S loss_and_gradient(const Vec& params, const std::vector<Prepared>& batch, Vec& grad,
                      Workspace& ws) const {
    if (batch.empty()) throw ConfigError("denoiser: empty batch");
    grad.setZero(total_);
    S total = S(0);
    for (const Prepared& ex : batch) {
      const Mat out = forward(params, ex.x, ex.k, ex.cond, ws);
      const Mat diff = out - ex.target;
      const S elems = static_cast<S>(diff.size());
      total += diff.squaredNorm() / elems;
      const Mat d_out = diff * (S(2) / (elems * static_cast<S>(batch.size())));
      backward(params, ws, d_out, grad);
    }
    return total / static_cast<S>(batch.size());
  }

private:
  enum class Init { kZero, kOne, kFanIn, kFanInSmall };

  struct ParamEntry {
    std::string name;
    Eigen::Index rows = 0, cols = 0, offset = 0, fan_in = 1;
    Init init = Init::kZero;
  };

  struct DenseL {
    std::size_t w = 0, b = 0;
    Eigen::Index in = 0, out = 0;
  };
  struct ConvL {
    std::size_t w = 0, b = 0;
    Eigen::Index cin = 0, cout = 0, ks = 1;
  };
  struct GnL {
    std::size_t gamma = 0, beta = 0;
    Eigen::Index channels = 0, groups = 1;
  };
  struct ResL {
    ConvL conv1, conv2;
    GnL gn1, gn2;
    DenseL emb;
    bool has_res = false;
    ConvL res;
    Eigen::Index cin = 0, cout = 0;
  };
  struct LevelL {
    ResL rb1, rb2;
    bool has_down = false;
    ConvL down;
  };
  struct UpL {
    ConvL conv;
    ResL rb1, rb2;
    Eigen::Index split = 0;  // channels arriving from below (before the skip rows)
  };
  struct BlockL {
    DenseL a, proj, b;
  };

  static constexpr double kGnEps = 1e-5;

  DenoiserConfig cfg_;
  std::vector<ParamEntry> entries_;
  Eigen::Index total_ = 0;
  mutable std::atomic<std::uint64_t> nonnull_cond_evals_{0};

  // embedding path
  DenseL t_fc1_, t_fc2_, phi_fc1_, phi_fc2_;
  // unet
  std::vector<LevelL> levels_;
  ResL mid1_, mid2_;
  std::vector<UpL> ups_;
  ConvL final_conv_, out_conv_;
  GnL final_gn_;
  // residual-mlp
  DenseL in_fc_, out_fc_;
  std::vector<BlockL> blocks_;

  std::size_t add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                  Eigen::Index fan_in) {
    entries_.push_back({name, rows, cols, total_, fan_in, init});
    total_ += rows * cols;
    return entries_.size() - 1;
  }

  DenseL make_dense(const std::string& name, Eigen::Index in, Eigen::Index out,
                    Init init = Init::kFanIn) {
    DenseL d;
    d.in = in;
    d.out = out;
    d.w = add(name + ".w", out, in, init, in);
    d.b = add(name + ".b", out, 1, Init::kZero, in);
    return d;
  }

  ConvL make_conv(const std::string& name, Eigen::Index cin, Eigen::Index cout, Eigen::Index ks,
                  Init init = Init::kFanIn) {
    ConvL c;
    c.cin = cin;
    c.cout = cout;
    c.ks = ks;
    c.w = add(name + ".w", cout, cin * ks, init, cin * ks);
    c.b = add(name + ".b", cout, 1, Init::kZero, cin * ks);
    return c;
  }

  GnL make_gn(const std::string& name, Eigen::Index channels) {
    GnL g;
    g.channels = channels;
    g.groups = std::min<Eigen::Index>(cfg_.groups, channels);
    g.gamma = add(name + ".gamma", channels, 1, Init::kOne, 1);
    g.beta = add(name + ".beta", channels, 1, Init::kZero, 1);
    return g;
  }

  ResL make_res(const std::string& name, Eigen::Index cin, Eigen::Index cout) {
    ResL r;
    r.cin = cin;
    r.cout = cout;
    r.conv1 = make_conv(name + ".conv1", cin, cout, cfg_.kernel);
    r.gn1 = make_gn(name + ".gn1", cout);
    r.emb = make_dense(name + ".emb", cfg_.step_embed, cout);
    r.conv2 = make_conv(name + ".conv2", cout, cout, cfg_.kernel);
    r.gn2 = make_gn(name + ".gn2", cout);
    r.has_res = cin != cout;
    if (r.has_res) r.res = make_conv(name + ".res", cin, cout, 1);
    return r;
  }

  void build() {
    const Eigen::Index e = cfg_.step_embed;
    t_fc1_ = make_dense("temb.fc1", e, 4 * e);
    t_fc2_ = make_dense("temb.fc2", 4 * e, e);
    phi_fc1_ = make_dense("cond.fc1", 1, e);
    phi_fc2_ = make_dense("cond.fc2", e, e);

    if (cfg_.arch == ArchKind::kResidualMlp) {
      const Eigen::Index nd = static_cast<Eigen::Index>(cfg_.horizon) * cfg_.dims;
      const Eigen::Index h = cfg_.widths[0];
      in_fc_ = make_dense("mlp.in", nd, h);
      for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
        BlockL b;
        const std::string name = "mlp.block" + std::to_string(i);
        b.a = make_dense(name + ".a", h, h);
        b.proj = make_dense(name + ".emb", e, h);
        b.b = make_dense(name + ".b", h, h);
        blocks_.push_back(b);
      }
      out_fc_ = make_dense("mlp.out", h, nd, Init::kFanInSmall);
      return;
    }

    const int L = cfg_.levels();
    Eigen::Index cin = cfg_.dims;
    for (int l = 0; l < L; ++l) {
      LevelL lev;
      const Eigen::Index w = cfg_.widths[static_cast<std::size_t>(l)];
      const std::string name = "down" + std::to_string(l);
      lev.rb1 = make_res(name + ".rb1", cin, w);
      lev.rb2 = make_res(name + ".rb2", w, w);
      lev.has_down = l < L - 1;
      if (lev.has_down) lev.down = make_conv(name + ".down", w, w, 3);
      levels_.push_back(lev);
      cin = w;
    }
    mid1_ = make_res("mid.rb1", cin, cin);
    mid2_ = make_res("mid.rb2", cin, cin);
    for (int l = L - 2; l >= 0; --l) {
      UpL up;
      const Eigen::Index w_lo = cfg_.widths[static_cast<std::size_t>(l + 1)];
      const Eigen::Index w = cfg_.widths[static_cast<std::size_t>(l)];
      const std::string name = "up" + std::to_string(l);
      up.conv = make_conv(name + ".conv", w_lo, w_lo, 3);
      up.split = w_lo;
      up.rb1 = make_res(name + ".rb1", w_lo + w, w);
      up.rb2 = make_res(name + ".rb2", w, w);
      ups_.push_back(up);
    }
    final_conv_ = make_conv("final.conv", cfg_.widths[0], cfg_.widths[0], cfg_.kernel);
    final_gn_ = make_gn("final.gn", cfg_.widths[0]);
    out_conv_ = make_conv("final.out", cfg_.widths[0], cfg_.dims, 1, Init::kFanInSmall);
  }

  // parameter views
  Eigen::Map<const Mat> mat(const Vec& p, std::size_t idx) const {
    const ParamEntry& e = entries_[idx];
    return Eigen::Map<const Mat>(p.data() + e.offset, e.rows, e.cols);
  }
  Eigen::Map<Mat> mat_mut(Vec& p, std::size_t idx) const {
    const ParamEntry& e = entries_[idx];
    return Eigen::Map<Mat>(p.data() + e.offset, e.rows, e.cols);
  }
  Eigen::Map<const Vec> vec(const Vec& p, std::size_t idx) const {
    const ParamEntry& e = entries_[idx];
    return Eigen::Map<const Vec>(p.data() + e.offset, e.rows * e.cols);
  }
  Eigen::Map<Vec> vec_mut(Vec& p, std::size_t idx) const {
    const ParamEntry& e = entries_[idx];
    return Eigen::Map<Vec>(p.data() + e.offset, e.rows * e.cols);
  }

  void check_input(const Vec& params, const Mat& x, int k) const {
    if (params.size() != total_)
      throw ConfigError("denoiser: parameter vector has " + std::to_string(params.size()) +
                        " entries, expected " + std::to_string(total_));
    if (x.cols() != cfg_.dims)
      throw ConfigError("denoiser: input has " + std::to_string(x.cols()) +
                        " coordinate columns, expected " + std::to_string(cfg_.dims));
    if (k < 1) throw ConfigError("denoiser: diffusion step must be >= 1");
    if (cfg_.arch == ArchKind::kResidualMlp) {
      if (x.rows() != cfg_.horizon)
        throw ConfigError("denoiser: residual-mlp is fixed to horizon " +
                          std::to_string(cfg_.horizon) + ", got " + std::to_string(x.rows()));
    } else {
      if (x.rows() % cfg_.down_factor() != 0 || x.rows() / cfg_.down_factor() < 2)
        throw ConfigError("denoiser: horizon " + std::to_string(x.rows()) +
                          " is not a multiple of the downsampling factor " +
                          std::to_string(cfg_.down_factor()));
    }
    if (!x.allFinite()) throw NumericError("denoiser: non-finite input");
  }

  // elementwise pieces
  static S softplus(S x) {
    if (x > S(20)) return x;
    if (x < S(-20)) return std::exp(x);
    return std::log1p(std::exp(x));
  }
  static S mish1(S x) { return x * std::tanh(softplus(x)); }
  static S mish_grad(S x) {
    const S t = std::tanh(softplus(x));
    const S sig = S(1) / (S(1) + std::exp(-x));
    return t + x * (S(1) - t * t) * sig;
  }

  template <typename M>
  static M mish(const M& x) {
    return x.unaryExpr([](S v) { return mish1(v); });
  }
  template <typename A, typename B>
  static B mish_backward(const A& x, const B& dy) {
    return dy.cwiseProduct(x.unaryExpr([](S v) { return mish_grad(v); }));
  }

  // dense
  Vec dense_forward(const Vec& p, const DenseL& d, const Vec& x, DenseCache& c) const {
    c.x = x;
    return mat(p, d.w) * x + vec(p, d.b);
  }
  Vec dense_backward(const Vec& p, const DenseL& d, const DenseCache& c, const Vec& dy,
                     Vec& grad) const {
    mat_mut(grad, d.w).noalias() += dy * c.x.transpose();
    vec_mut(grad, d.b) += dy;
    return mat(p, d.w).transpose() * dy;
  }

  // stride-1 convolution with zero padding, kernel offsets centered
  void conv_forward(const Vec& p, const ConvL& c, const Mat& x, Mat& y, ConvCache& cc) const {
    const Eigen::Index n = x.cols();
    const Eigen::Index r = (c.ks - 1) / 2;
    const auto w = mat(p, c.w);
    y.resize(c.cout, n);
    y.colwise() = vec(p, c.b);
    for (Eigen::Index j = 0; j < c.ks; ++j) {
      const Eigen::Index o = j - r;
      const Eigen::Index t0 = std::max<Eigen::Index>(0, -o);
      const Eigen::Index t1 = std::min<Eigen::Index>(n - 1, n - 1 - o);
      if (t1 < t0) continue;
      const Eigen::Index len = t1 - t0 + 1;
      y.middleCols(t0, len).noalias() +=
          w.middleCols(j * c.cin, c.cin) * x.middleCols(t0 + o, len);
    }
    cc.x = x;
  }
  void conv_backward(const Vec& p, const ConvL& c, const ConvCache& cc, const Mat& dy, Mat& dx,
                     Vec& grad) const {
    const Eigen::Index n = cc.x.cols();
    const Eigen::Index r = (c.ks - 1) / 2;
    const auto w = mat(p, c.w);
    auto dw = mat_mut(grad, c.w);
    vec_mut(grad, c.b) += dy.rowwise().sum();
    dx.setZero(c.cin, n);
    for (Eigen::Index j = 0; j < c.ks; ++j) {
      const Eigen::Index o = j - r;
      const Eigen::Index t0 = std::max<Eigen::Index>(0, -o);
      const Eigen::Index t1 = std::min<Eigen::Index>(n - 1, n - 1 - o);
      if (t1 < t0) continue;
      const Eigen::Index len = t1 - t0 + 1;
      dw.middleCols(j * c.cin, c.cin).noalias() +=
          dy.middleCols(t0, len) * cc.x.middleCols(t0 + o, len).transpose();
      dx.middleCols(t0 + o, len).noalias() +=
          w.middleCols(j * c.cin, c.cin).transpose() * dy.middleCols(t0, len);
    }
  }

  // stride-2 convolution, kernel 3, padding 1: out[m] = sum_j W_j x[2m + j - 1]
  using StridedConst = Eigen::Map<const Mat, Eigen::Unaligned, Eigen::OuterStride<>>;
  using StridedMut = Eigen::Map<Mat, Eigen::Unaligned, Eigen::OuterStride<>>;

  void down_forward(const Vec& p, const ConvL& c, const Mat& x, Mat& y, ConvCache& cc) const {
    const Eigen::Index n = x.cols();
    if (n % 2 != 0) throw ConfigError("denoiser: downsample needs an even horizon");
    const Eigen::Index m = n / 2;
    const auto w = mat(p, c.w);
    y.resize(c.cout, m);
    y.colwise() = vec(p, c.b);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const Eigen::Index m0 = j == 0 ? 1 : 0;
      const Eigen::Index len = m - m0;
      if (len <= 0) continue;
      StridedConst xs(x.data() + (2 * m0 + j - 1) * x.rows(), x.rows(), len,
                      Eigen::OuterStride<>(2 * x.rows()));
      y.middleCols(m0, len).noalias() += w.middleCols(j * c.cin, c.cin) * xs;
    }
    cc.x = x;
  }
  void down_backward(const Vec& p, const ConvL& c, const ConvCache& cc, const Mat& dy, Mat& dx,
                     Vec& grad) const {
    const Eigen::Index n = cc.x.cols();
    const Eigen::Index m = n / 2;
    const auto w = mat(p, c.w);
    auto dw = mat_mut(grad, c.w);
    vec_mut(grad, c.b) += dy.rowwise().sum();
    dx.setZero(c.cin, n);
    for (Eigen::Index j = 0; j < 3; ++j) {
      const Eigen::Index m0 = j == 0 ? 1 : 0;
      const Eigen::Index len = m - m0;
      if (len <= 0) continue;
      StridedConst xs(cc.x.data() + (2 * m0 + j - 1) * cc.x.rows(), cc.x.rows(), len,
                      Eigen::OuterStride<>(2 * cc.x.rows()));
      dw.middleCols(j * c.cin, c.cin).noalias() += dy.middleCols(m0, len) * xs.transpose();
      StridedMut dxs(dx.data() + (2 * m0 + j - 1) * dx.rows(), dx.rows(), len,
                     Eigen::OuterStride<>(2 * dx.rows()));
      dxs.noalias() += w.middleCols(j * c.cin, c.cin).transpose() * dy.middleCols(m0, len);
    }
  }

  // group normalization over (group channels x time), per sample
  void gn_forward(const Vec& p, const GnL& g, const Mat& x, Mat& y, GnCache& c) const {
    const Eigen::Index cs = g.channels / g.groups;
    const auto gamma = vec(p, g.gamma);
    const auto beta = vec(p, g.beta);
    y.resize(x.rows(), x.cols());
    c.xhat.resize(x.rows(), x.cols());
    c.inv_std.resize(g.groups);
    for (Eigen::Index grp = 0; grp < g.groups; ++grp) {
      const auto block = x.middleRows(grp * cs, cs);
      const S mu = block.mean();
      const S var = (block.array() - mu).square().sum() / static_cast<S>(block.size());
      const S is = S(1) / std::sqrt(var + static_cast<S>(kGnEps));
      c.inv_std[grp] = is;
      c.xhat.middleRows(grp * cs, cs) = ((block.array() - mu) * is).matrix();
    }
    y = c.xhat;
    y.array().colwise() *= gamma.array();
    y.array().colwise() += beta.array();
  }
  void gn_backward(const Vec& p, const GnL& g, const GnCache& c, const Mat& dy, Mat& dx,
                   Vec& grad) const {
    const Eigen::Index cs = g.channels / g.groups;
    const auto gamma = vec(p, g.gamma);
    auto dgamma = vec_mut(grad, g.gamma);
    auto dbeta = vec_mut(grad, g.beta);
    dgamma += dy.cwiseProduct(c.xhat).rowwise().sum();
    dbeta += dy.rowwise().sum();
    dx.resize(dy.rows(), dy.cols());
    for (Eigen::Index grp = 0; grp < g.groups; ++grp) {
      const auto xhat = c.xhat.middleRows(grp * cs, cs);
      Mat dxhat = dy.middleRows(grp * cs, cs);
      dxhat.array().colwise() *= gamma.segment(grp * cs, cs).array();
      const S m = static_cast<S>(dxhat.size());
      const S mean_d = dxhat.sum() / m;
      const S mean_dx = dxhat.cwiseProduct(xhat).sum() / m;
      dx.middleRows(grp * cs, cs) =
          (c.inv_std[grp] * (dxhat.array() - mean_d - xhat.array() * mean_dx)).matrix();
    }
  }

  // residual block: conv-gn-mish, per-channel embedding bias, conv-gn-mish,
  // plus a (projected) shortcut
  Mat res_forward(const Vec& p, const ResL& r, const Mat& x, const Vec& emb_m,
                  ResCache& c) const {
    Mat h;
    conv_forward(p, r.conv1, x, h, c.c1);
    Mat hn;
    gn_forward(p, r.gn1, h, hn, c.g1);
    c.m1.x = hn;
    Mat hm = mish(hn);
    const Vec t = mat(p, r.emb.w) * emb_m + vec(p, r.emb.b);
    hm.colwise() += t;
    Mat h2;
    conv_forward(p, r.conv2, hm, h2, c.c2);
    Mat h2n;
    gn_forward(p, r.gn2, h2, h2n, c.g2);
    c.m2.x = h2n;
    Mat out = mish(h2n);
    if (r.has_res) {
      Mat res;
      ConvCache tmp;
      conv_forward(p, r.res, x, res, tmp);
      out += res;
    } else {
      out += x;
    }
    return out;
  }
  Mat res_backward(const Vec& p, const ResL& r, const ResCache& c, const Mat& dout, Vec& grad,
                   Vec& d_emb_m) const {
    Mat dx_res;
    if (r.has_res) {
      ConvCache tmp;
      tmp.x = c.c1.x;
      conv_backward(p, r.res, tmp, dout, dx_res, grad);
    } else {
      dx_res = dout;
    }
    Mat d2 = mish_backward(c.m2.x, dout);
    Mat d2c;
    gn_backward(p, r.gn2, c.g2, d2, d2c, grad);
    Mat dhm;
    conv_backward(p, r.conv2, c.c2, d2c, dhm, grad);
    // the embedding bias is broadcast over time
    const Vec dt = dhm.rowwise().sum();
    mat_mut(grad, r.emb.w).noalias() += dt * c.emb_m.transpose();
    vec_mut(grad, r.emb.b) += dt;
    d_emb_m.noalias() += mat(p, r.emb.w).transpose() * dt;
    Mat d1 = mish_backward(c.m1.x, dhm);
    Mat d1c;
    gn_backward(p, r.gn1, c.g1, d1, d1c, grad);
    Mat dx;
    conv_backward(p, r.conv1, c.c1, d1c, dx, grad);
    dx += dx_res;
    return dx;
  }

  // embedding path
  Vec sin_embed(int k) const {
    const Eigen::Index half = cfg_.step_embed / 2;
    Vec out(cfg_.step_embed);
    for (Eigen::Index i = 0; i < half; ++i) {
      const double f =
          half > 1 ? std::exp(-std::log(10000.0) * static_cast<double>(i) /
                              static_cast<double>(half - 1))
                   : 1.0;
      out[i] = static_cast<S>(std::sin(k * f));
      out[half + i] = static_cast<S>(std::cos(k * f));
    }
    return out;
  }

  void embed_forward(const Vec& p, int k, Condition cond, EmbCache& c) const {
    c.sin_emb = sin_embed(k);
    const Vec a1 = dense_forward(p, t_fc1_, c.sin_emb, c.t1);
    c.tm.x = a1;
    const Vec m1 = mish(a1);
    Vec e = dense_forward(p, t_fc2_, m1, c.t2);
    c.has_cond = !cond.is_null;
    if (c.has_cond) {
      Vec one(1);
      one[0] = static_cast<S>(cond.value);
      const Vec q1 = dense_forward(p, phi_fc1_, one, c.p1);
      c.pm.x = q1;
      const Vec qm = mish(q1);
      e += dense_forward(p, phi_fc2_, qm, c.p2);
    }
    c.e = e;
    c.m = mish(e);
  }
  void embed_backward(const Vec& p, const EmbCache& c, const Vec& d_m, Vec& grad) const {
    const Vec de = mish_backward(c.e, d_m);
    if (c.has_cond) {
      const Vec dqm = dense_backward(p, phi_fc2_, c.p2, de, grad);
      const Vec dq1 = mish_backward(c.pm.x, dqm);
      dense_backward(p, phi_fc1_, c.p1, dq1, grad);
    }
    const Vec dm1 = dense_backward(p, t_fc2_, c.t2, de, grad);
    const Vec da1 = mish_backward(c.tm.x, dm1);
    dense_backward(p, t_fc1_, c.t1, da1, grad);
  }

  // temporal U-Net
  Mat unet_forward(const Vec& p, const Mat& x, Workspace& ws) const {
    const int L = cfg_.levels();
    ws.levels.resize(static_cast<std::size_t>(L));
    ws.ups.resize(ups_.size());
    ws.skips.resize(static_cast<std::size_t>(L));
    Mat h = x.transpose();  // channels x time
    for (int l = 0; l < L; ++l) {
      LevelCache& lc = ws.levels[static_cast<std::size_t>(l)];
      const LevelL& lev = levels_[static_cast<std::size_t>(l)];
      h = res_forward_with_emb(p, lev.rb1, h, ws.emb.m, lc.rb1);
      h = res_forward_with_emb(p, lev.rb2, h, ws.emb.m, lc.rb2);
      ws.skips[static_cast<std::size_t>(l)] = h;
      if (lev.has_down) {
        Mat down;
        down_forward(p, lev.down, h, down, lc.down);
        h = std::move(down);
      }
    }
    h = res_forward_with_emb(p, mid1_, h, ws.emb.m, ws.mid1);
    h = res_forward_with_emb(p, mid2_, h, ws.emb.m, ws.mid2);
    for (std::size_t u = 0; u < ups_.size(); ++u) {
      const UpL& up = ups_[u];
      UpCache& uc = ws.ups[u];
      const int l = cfg_.levels() - 2 - static_cast<int>(u);
      Mat big(h.rows(), 2 * h.cols());
      for (Eigen::Index t = 0; t < h.cols(); ++t) {
        big.col(2 * t) = h.col(t);
        big.col(2 * t + 1) = h.col(t);
      }
      Mat hu;
      conv_forward(p, up.conv, big, hu, uc.conv);
      const Mat& skip = ws.skips[static_cast<std::size_t>(l)];
      Mat cat(hu.rows() + skip.rows(), hu.cols());
      cat.topRows(hu.rows()) = hu;
      cat.bottomRows(skip.rows()) = skip;
      h = res_forward_with_emb(p, up.rb1, cat, ws.emb.m, uc.rb1);
      h = res_forward_with_emb(p, up.rb2, h, ws.emb.m, uc.rb2);
    }
    Mat f;
    conv_forward(p, final_conv_, h, f, ws.final_conv);
    Mat fn;
    gn_forward(p, final_gn_, f, fn, ws.final_gn);
    ws.final_mish.x = fn;
    Mat fm = mish(fn);
    Mat out;
    conv_forward(p, out_conv_, fm, out, ws.out_conv);
    return out.transpose();
  }

  void unet_backward(const Vec& p, Workspace& ws, const Mat& d_out_nd, Vec& grad,
                     Vec& d_m) const {
    Mat d = d_out_nd.transpose();
    Mat dfm;
    conv_backward(p, out_conv_, ws.out_conv, d, dfm, grad);
    Mat dfn = mish_backward(ws.final_mish.x, dfm);
    Mat df;
    gn_backward(p, final_gn_, ws.final_gn, dfn, df, grad);
    Mat dh;
    conv_backward(p, final_conv_, ws.final_conv, df, dh, grad);

    std::vector<Mat> d_skip(static_cast<std::size_t>(cfg_.levels()));
    for (std::size_t ui = ups_.size(); ui-- > 0;) {
      const UpL& up = ups_[ui];
      UpCache& uc = ws.ups[ui];
      const int l = cfg_.levels() - 2 - static_cast<int>(ui);
      Mat dcat = res_backward_with_emb(p, up.rb2, uc.rb2, dh, grad, d_m);
      dcat = res_backward_with_emb(p, up.rb1, uc.rb1, dcat, grad, d_m);
      const Eigen::Index skip_rows = dcat.rows() - up.split;
      d_skip[static_cast<std::size_t>(l)] = dcat.bottomRows(skip_rows);
      Mat dbig;
      conv_backward(p, up.conv, uc.conv, dcat.topRows(up.split), dbig, grad);
      dh.resize(dbig.rows(), dbig.cols() / 2);
      for (Eigen::Index t = 0; t < dh.cols(); ++t)
        dh.col(t) = dbig.col(2 * t) + dbig.col(2 * t + 1);
    }
    dh = res_backward_with_emb(p, mid2_, ws.mid2, dh, grad, d_m);
    dh = res_backward_with_emb(p, mid1_, ws.mid1, dh, grad, d_m);
    for (int l = cfg_.levels() - 1; l >= 0; --l) {
      LevelCache& lc = ws.levels[static_cast<std::size_t>(l)];
      const LevelL& lev = levels_[static_cast<std::size_t>(l)];
      Mat dsk;
      if (lev.has_down) {
        down_backward(p, lev.down, lc.down, dh, dsk, grad);
      } else {
        dsk = dh;
      }
      if (d_skip[static_cast<std::size_t>(l)].size() > 0)
        dsk += d_skip[static_cast<std::size_t>(l)];
      dsk = res_backward_with_emb(p, lev.rb2, lc.rb2, dsk, grad, d_m);
      dh = res_backward_with_emb(p, lev.rb1, lc.rb1, dsk, grad, d_m);
    }
    // dh is now the gradient w.r.t. the transposed input; discarded.
  }

  // residual-mlp
  Mat mlp_forward(const Vec& p, const Mat& x, Workspace& ws) const {
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    ws.blocks.resize(blocks_.size());
    ws.flat.resize(n * d);
    for (Eigen::Index t = 0; t < n; ++t)
      for (Eigen::Index j = 0; j < d; ++j) ws.flat[t * d + j] = x(t, j);
    Vec h = dense_forward(p, in_fc_, ws.flat, ws.in_fc);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const BlockL& b = blocks_[i];
      BlockCache& bc = ws.blocks[i];
      Vec u = dense_forward(p, b.a, h, bc.a);
      u += dense_forward(p, b.proj, ws.emb.m, bc.proj);
      bc.m.x = u;
      const Vec um = mish(u);
      h += dense_forward(p, b.b, um, bc.b);
    }
    const Vec o = dense_forward(p, out_fc_, h, ws.out_fc);
    Mat out(n, d);
    for (Eigen::Index t = 0; t < n; ++t)
      for (Eigen::Index j = 0; j < d; ++j) out(t, j) = o[t * d + j];
    return out;
  }
  void mlp_backward(const Vec& p, Workspace& ws, const Mat& d_out, Vec& grad, Vec& d_m) const {
    const Eigen::Index n = d_out.rows();
    const Eigen::Index d = d_out.cols();
    Vec dv(n * d);
    for (Eigen::Index t = 0; t < n; ++t)
      for (Eigen::Index j = 0; j < d; ++j) dv[t * d + j] = d_out(t, j);
    Vec dh = dense_backward(p, out_fc_, ws.out_fc, dv, grad);
    for (std::size_t i = blocks_.size(); i-- > 0;) {
      const BlockL& b = blocks_[i];
      BlockCache& bc = ws.blocks[i];
      const Vec dum = dense_backward(p, b.b, bc.b, dh, grad);
      const Vec du = mish_backward(bc.m.x, dum);
      d_m.noalias() += dense_backward(p, b.proj, bc.proj, du, grad);
      dh += dense_backward(p, b.a, bc.a, du, grad);
    }
    dense_backward(p, in_fc_, ws.in_fc, dh, grad);
  }

  Mat res_forward_with_emb(const Vec& p, const ResL& r, const Mat& x, const Vec& emb_m,
                           ResCache& c) const {
    c.emb_m = emb_m;
    return res_forward(p, r, x, emb_m, c);
  }
  Mat res_backward_with_emb(const Vec& p, const ResL& r, const ResCache& c, const Mat& dout,
                            Vec& grad, Vec& d_m) const {
    return res_backward(p, r, c, dout, grad, d_m);
  }
};

}  // namespace ddp

#include "wildfire/nn/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace wildfire::nn {

std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

namespace {
thread_local bool g_grad_enabled = true;

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

void require_rank4(const std::vector<int>& shape, const char* op) {
  require(shape.size() == 4, std::string(op) + ": expected rank-4 input, got " + shape_string(shape));
}

struct ConvGeometry {
  int n, ci, h, w, co, k, stride, pad, ho, wo;
  std::size_t rows() const { return static_cast<std::size_t>(ci) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(n) * ho * wo; }
};

// col[(ci*k + ky)*k + kx, (n*ho + oy)*wo + ox] = x[n, ci, oy*s - p + ky, ox*s - p + kx]
template <typename S>
void im2col(const S* x, const ConvGeometry& g, S* col) {
  const std::size_t cols = g.cols();
  for (int c = 0; c < g.ci; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        S* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * cols;
        for (int n = 0; n < g.n; ++n) {
          const S* plane = x + (static_cast<std::size_t>(n) * g.ci + c) * g.h * g.w;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            S* out = row + (static_cast<std::size_t>(n) * g.ho + oy) * g.wo;
            if (iy < 0 || iy >= g.h) {
              std::fill(out, out + g.wo, S{0});
              continue;
            }
            const S* in = plane + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              out[ox] = (ix >= 0 && ix < g.w) ? in[ix] : S{0};
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* col, const ConvGeometry& g, S* dx) {
  const std::size_t cols = g.cols();
  for (int c = 0; c < g.ci; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const S* row = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * cols;
        for (int n = 0; n < g.n; ++n) {
          S* plane = dx + (static_cast<std::size_t>(n) * g.ci + c) * g.h * g.w;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.stride - g.pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            const S* in = row + (static_cast<std::size_t>(n) * g.ho + oy) * g.wo;
            S* out = plane + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.stride - g.pad + kx;
              if (ix >= 0 && ix < g.w) out[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename S>
void backward(const Var<S>& root) {
  require(root && root->value.size() == 1, "backward: root must be a scalar");
  if (!root->requires_grad) return;
  // iterative post-order DFS
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> visited;
  std::vector<std::pair<Node<S>*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<S>* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buffer()[0] += S{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<S>* node = *it;
    if (node->backward && node->grad.size() == node->value.size()) node->backward(*node);
  }
}

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& weight, const Var<S>& bias, int stride, int padding) {
  const auto& xs = x->value.shape();
  const auto& ws = weight->value.shape();
  require_rank4(xs, "conv2d");
  require(ws.size() == 4 && ws[1] == xs[1] && ws[2] == ws[3],
          "conv2d: weight " + shape_string(ws) + " incompatible with input " + shape_string(xs));
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, padding, 0, 0};
  g.ho = (g.h + 2 * padding - g.k) / stride + 1;
  g.wo = (g.w + 2 * padding - g.k) / stride + 1;
  require(g.ho > 0 && g.wo > 0, "conv2d: output would be empty");
  if (bias) require(bias->value.size() == static_cast<std::size_t>(g.co), "conv2d: bias size mismatch");

  const std::size_t plane = static_cast<std::size_t>(g.ho) * g.wo;
  std::vector<S> col(g.rows() * g.cols());
  im2col(x->value.data(), g, col.data());
  RowMat<S> y = ConstMatMap<S>(weight->value.data(), g.co, static_cast<Eigen::Index>(g.rows())) *
                ConstMatMap<S>(col.data(), static_cast<Eigen::Index>(g.rows()), static_cast<Eigen::Index>(g.cols()));
  Tensor<S> out({g.n, g.co, g.ho, g.wo});
  for (int n = 0; n < g.n; ++n) {
    for (int c = 0; c < g.co; ++c) {
      const S b = bias ? bias->value[c] : S{0};
      const S* src = y.data() + static_cast<std::size_t>(c) * g.cols() + n * plane;
      S* dst = out.data() + (static_cast<std::size_t>(n) * g.co + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] + b;
    }
  }
  return make_result<S>(std::move(out), {x, weight, bias}, [g, plane](Node<S>& self) {
    auto& x = self.parents[0];
    auto& w = self.parents[1];
    auto& b = self.parents[2];
    RowMat<S> dy(g.co, static_cast<Eigen::Index>(g.cols()));
    for (int n = 0; n < g.n; ++n) {
      for (int c = 0; c < g.co; ++c) {
        const S* src = self.grad.data() + (static_cast<std::size_t>(n) * g.co + c) * plane;
        std::copy(src, src + plane, dy.data() + static_cast<std::size_t>(c) * g.cols() + n * plane);
      }
    }
    if (b && b->requires_grad) {
      auto& db = b->grad_buffer();
      for (int c = 0; c < g.co; ++c) db[c] += dy.row(c).sum();
    }
    const auto rows = static_cast<Eigen::Index>(g.rows());
    const auto cols = static_cast<Eigen::Index>(g.cols());
    if (w->requires_grad) {
      std::vector<S> col(g.rows() * g.cols());
      im2col(x->value.data(), g, col.data());
      MatMap<S>(w->grad_buffer().data(), g.co, rows).noalias() += dy * ConstMatMap<S>(col.data(), rows, cols).transpose();
    }
    if (x->requires_grad) {
      RowMat<S> dcol = ConstMatMap<S>(w->value.data(), g.co, rows).transpose() * dy;
      col2im(dcol.data(), g, x->grad_buffer().data());
    }
  });
}

template <typename S>
Var<S> relu(const Var<S>& x) {
  Tensor<S> out = x->value;
  for (auto& v : out.values()) v = v < S{0} ? S{0} : v;  // NaN passes through
  return make_result<S>(std::move(out), {x}, [](Node<S>& self) {
    auto& x = self.parents[0];
    auto& dx = x->grad_buffer();
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (x->value[i] > S{0}) dx[i] += self.grad[i];
    }
  });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require(a->value.same_shape(b->value), "add: shape mismatch " + shape_string(a->value.shape()) + " vs " +
                                             shape_string(b->value.shape()));
  Tensor<S> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make_result<S>(std::move(out), {a, b}, [](Node<S>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& d = p->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
    }
  });
}

template <typename S>
Var<S> concat_channels(const std::vector<Var<S>>& parts) {
  require(!parts.empty(), "concat: no inputs");
  const auto& s0 = parts.front()->value.shape();
  require_rank4(s0, "concat");
  int channels = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    const auto& s = p->value.shape();
    require(s.size() == 4 && s[0] == s0[0] && s[2] == s0[2] && s[3] == s0[3],
            "concat: incompatible shapes " + shape_string(s0) + " and " + shape_string(s));
    offsets.push_back(channels);
    channels += s[1];
  }
  const int n = s0[0];
  const std::size_t plane = static_cast<std::size_t>(s0[2]) * s0[3];
  Tensor<S> out({n, channels, s0[2], s0[3]});
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const int cj = parts[j]->value.dim(1);
    for (int b = 0; b < n; ++b) {
      const S* src = parts[j]->value.data() + static_cast<std::size_t>(b) * cj * plane;
      std::copy(src, src + cj * plane, out.data() + (static_cast<std::size_t>(b) * channels + offsets[j]) * plane);
    }
  }
  return make_result<S>(std::move(out), parts, [offsets, channels, n, plane](Node<S>& self) {
    for (std::size_t j = 0; j < self.parents.size(); ++j) {
      auto& p = self.parents[j];
      if (!p->requires_grad) continue;
      const int cj = p->value.dim(1);
      auto& d = p->grad_buffer();
      for (int b = 0; b < n; ++b) {
        const S* src = self.grad.data() + (static_cast<std::size_t>(b) * channels + offsets[j]) * plane;
        S* dst = d.data() + static_cast<std::size_t>(b) * cj * plane;
        for (std::size_t i = 0; i < cj * plane; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename S>
Var<S> concat_channels(const Var<S>& a, const Var<S>& b) {
  return concat_channels<S>(std::vector<Var<S>>{a, b});
}

template <typename S>
Var<S> upsample_nearest(const Var<S>& x, int factor) {
  const auto& s = x->value.shape();
  require_rank4(s, "upsample");
  if (factor == 1) return x;
  const int h = s[2], w = s[3], H = h * factor, W = w * factor;
  const std::size_t planes = static_cast<std::size_t>(s[0]) * s[1];
  Tensor<S> out({s[0], s[1], H, W});
  for (std::size_t p = 0; p < planes; ++p) {
    const S* src = x->value.data() + p * h * w;
    S* dst = out.data() + p * H * W;
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) dst[y * W + xx] = src[(y / factor) * w + xx / factor];
    }
  }
  return make_result<S>(std::move(out), {x}, [=](Node<S>& self) {
    auto& d = self.parents[0]->grad_buffer();
    for (std::size_t p = 0; p < planes; ++p) {
      const S* src = self.grad.data() + p * H * W;
      S* dst = d.data() + p * h * w;
      for (int y = 0; y < H; ++y) {
        for (int xx = 0; xx < W; ++xx) dst[(y / factor) * w + xx / factor] += src[y * W + xx];
      }
    }
  });
}

template <typename S>
Var<S> add_channel_offsets(const Var<S>& x, const Tensor<S>& offsets) {
  const auto& s = x->value.shape();
  require_rank4(s, "add_channel_offsets");
  require(offsets.rank() == 2 && offsets.dim(0) == s[0] && offsets.dim(1) == s[1],
          "add_channel_offsets: offsets must be [N,C]");
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor<S> out = x->value;
  for (std::size_t p = 0; p < static_cast<std::size_t>(s[0]) * s[1]; ++p) {
    for (std::size_t i = 0; i < plane; ++i) out[p * plane + i] += offsets[p];
  }
  return make_result<S>(std::move(out), {x}, [](Node<S>& self) {
    auto& d = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
  });
}

template <typename S>
Var<S> window_attention(const Var<S>& q, const Var<S>& k, const Var<S>& v, int window) {
  const auto& s = q->value.shape();
  require_rank4(s, "window_attention");
  require(k->value.shape() == s && v->value.shape() == s, "window_attention: q/k/v shapes differ");
  require(window >= 1 && s[2] % window == 0 && s[3] % window == 0, "window_attention: window must divide H and W");
  const int n = s[0], d = s[1], h = s[2], w = s[3];
  const int len = window * window;
  const int wins_y = h / window, wins_x = w / window;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const S scale = S{1} / std::sqrt(static_cast<S>(d));
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

  // token t of window (wy, wx) is pixel (wy*window + t/window, wx*window + t%window)
  auto pixel = [=](int wy, int wx, int t) {
    return static_cast<std::size_t>(wy * window + t / window) * w + wx * window + t % window;
  };
  auto gather = [=](const Tensor<S>& src, int b, int wy, int wx) {
    Mat m(len, d);
    for (int c = 0; c < d; ++c) {
      const S* p = src.data() + (static_cast<std::size_t>(b) * d + c) * plane;
      for (int t = 0; t < len; ++t) m(t, c) = p[pixel(wy, wx, t)];
    }
    return m;
  };
  auto scatter_add = [=](Tensor<S>& dst, const Mat& m, int b, int wy, int wx) {
    for (int c = 0; c < d; ++c) {
      S* p = dst.data() + (static_cast<std::size_t>(b) * d + c) * plane;
      for (int t = 0; t < len; ++t) p[pixel(wy, wx, t)] += m(t, c);
    }
  };

  Tensor<S> out(s);
  auto attn = std::make_shared<std::vector<Mat>>();
  attn->reserve(static_cast<std::size_t>(n) * wins_y * wins_x);
  for (int b = 0; b < n; ++b) {
    for (int wy = 0; wy < wins_y; ++wy) {
      for (int wx = 0; wx < wins_x; ++wx) {
        const Mat Q = gather(q->value, b, wy, wx);
        const Mat K = gather(k->value, b, wy, wx);
        const Mat V = gather(v->value, b, wy, wx);
        Mat A = (Q * K.transpose()) * scale;
        for (int i = 0; i < len; ++i) {
          const S mx = A.row(i).maxCoeff();
          A.row(i) = (A.row(i).array() - mx).exp();
          A.row(i) /= A.row(i).sum();
        }
        scatter_add(out, A * V, b, wy, wx);
        attn->push_back(std::move(A));
      }
    }
  }
  return make_result<S>(std::move(out), {q, k, v}, [=](Node<S>& self) {
    auto& qn = self.parents[0];
    auto& kn = self.parents[1];
    auto& vn = self.parents[2];
    std::size_t idx = 0;
    for (int b = 0; b < n; ++b) {
      for (int wy = 0; wy < wins_y; ++wy) {
        for (int wx = 0; wx < wins_x; ++wx, ++idx) {
          const Mat& A = (*attn)[idx];
          const Mat dO = gather(self.grad, b, wy, wx);
          const Mat V = gather(vn->value, b, wy, wx);
          if (vn->requires_grad) scatter_add(vn->grad_buffer(), A.transpose() * dO, b, wy, wx);
          if (!qn->requires_grad && !kn->requires_grad) continue;
          const Mat dA = dO * V.transpose();
          Mat dS = A.cwiseProduct(dA);
          for (int i = 0; i < len; ++i) {
            const S r = dS.row(i).sum();
            dS.row(i) = dS.row(i) - A.row(i) * r;
          }
          dS *= scale;
          if (qn->requires_grad) scatter_add(qn->grad_buffer(), dS * gather(kn->value, b, wy, wx), b, wy, wx);
          if (kn->requires_grad) scatter_add(kn->grad_buffer(), dS.transpose() * gather(qn->value, b, wy, wx), b, wy, wx);
        }
      }
    }
  });
}

template <typename S>
Var<S> head_scores(const Var<S>& keys, const Var<S>& queries) {
  const auto& s = keys->value.shape();
  require_rank4(s, "head_scores");
  const auto& qs = queries->value.shape();
  require(qs.size() == 2 && qs[0] * qs[1] == s[1], "head_scores: queries must be [heads, channels/heads]");
  const int n = s[0], heads = qs[0], dk = qs[1];
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  const S scale = S{1} / std::sqrt(static_cast<S>(dk));
  Tensor<S> out({n, heads, s[2], s[3]});
  for (int b = 0; b < n; ++b) {
    for (int hd = 0; hd < heads; ++hd) {
      S* dst = out.data() + (static_cast<std::size_t>(b) * heads + hd) * plane;
      for (int j = 0; j < dk; ++j) {
        const S qv = queries->value[static_cast<std::size_t>(hd) * dk + j] * scale;
        const S* src = keys->value.data() + (static_cast<std::size_t>(b) * heads * dk + hd * dk + j) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += qv * src[i];
      }
    }
  }
  return make_result<S>(std::move(out), {keys, queries}, [=](Node<S>& self) {
    auto& kn = self.parents[0];
    auto& qn = self.parents[1];
    for (int b = 0; b < n; ++b) {
      for (int hd = 0; hd < heads; ++hd) {
        const S* g = self.grad.data() + (static_cast<std::size_t>(b) * heads + hd) * plane;
        for (int j = 0; j < dk; ++j) {
          const std::size_t kofs = (static_cast<std::size_t>(b) * heads * dk + hd * dk + j) * plane;
          const std::size_t qi = static_cast<std::size_t>(hd) * dk + j;
          if (kn->requires_grad) {
            S* dk_ptr = kn->grad_buffer().data() + kofs;
            const S qv = qn->value[qi] * scale;
            for (std::size_t i = 0; i < plane; ++i) dk_ptr[i] += qv * g[i];
          }
          if (qn->requires_grad) {
            const S* kv = kn->value.data() + kofs;
            S acc{0};
            for (std::size_t i = 0; i < plane; ++i) acc += kv[i] * g[i];
            qn->grad_buffer()[qi] += acc * scale;
          }
        }
      }
    }
  });
}

template <typename S>
Var<S> temporal_softmax(const std::vector<Var<S>>& scores) {
  require(!scores.empty(), "temporal_softmax: empty sequence");
  const auto& s = scores.front()->value.shape();
  for (const auto& v : scores) require(v->value.shape() == s, "temporal_softmax: shape mismatch across time");
  const int steps = static_cast<int>(scores.size());
  const std::size_t m = scores.front()->value.size();
  std::vector<int> shape{steps};
  shape.insert(shape.end(), s.begin(), s.end());
  Tensor<S> out(shape);
  for (std::size_t i = 0; i < m; ++i) {
    S mx = scores[0]->value[i];
    for (int t = 1; t < steps; ++t) mx = std::max(mx, scores[t]->value[i]);
    S sum{0};
    for (int t = 0; t < steps; ++t) {
      const S e = std::exp(scores[t]->value[i] - mx);
      out[t * m + i] = e;
      sum += e;
    }
    for (int t = 0; t < steps; ++t) out[t * m + i] /= sum;
  }
  return make_result<S>(std::move(out), scores, [steps, m](Node<S>& self) {
    for (std::size_t i = 0; i < m; ++i) {
      S dot{0};
      for (int t = 0; t < steps; ++t) dot += self.value[t * m + i] * self.grad[t * m + i];
      for (int t = 0; t < steps; ++t) {
        auto& p = self.parents[t];
        if (p->requires_grad) p->grad_buffer()[i] += self.value[t * m + i] * (self.grad[t * m + i] - dot);
      }
    }
  });
}

template <typename S>
Var<S> temporal_pool(const std::vector<Var<S>>& features, const Var<S>& mask) {
  require(!features.empty(), "temporal_pool: empty sequence");
  const auto& fs = features.front()->value.shape();
  require_rank4(fs, "temporal_pool");
  const auto& ms = mask->value.shape();
  const int steps = static_cast<int>(features.size());
  require(ms.size() == 5 && ms[0] == steps && ms[1] == fs[0], "temporal_pool: mask must be [T,N,heads,h,w]");
  const int n = fs[0], c = fs[1], hs = fs[2], ws = fs[3];
  const int heads = ms[2], h = ms[3], w = ms[4];
  require(c % heads == 0, "temporal_pool: heads must divide the channel count");
  require(hs % h == 0 && ws % w == 0 && hs / h == ws / w, "temporal_pool: mask does not tile the feature map");
  for (const auto& f : features) require(f->value.shape() == fs, "temporal_pool: shape mismatch across time");
  const int factor = hs / h;
  const int group = c / heads;
  const std::size_t plane = static_cast<std::size_t>(hs) * ws;
  const std::size_t mplane = static_cast<std::size_t>(h) * w;
  auto mask_index = [=](int t, int b, int ch, int y, int x) {
    return ((static_cast<std::size_t>(t) * n + b) * heads + ch / group) * mplane +
           static_cast<std::size_t>(y / factor) * w + x / factor;
  };

  Tensor<S> out(fs);
  for (int t = 0; t < steps; ++t) {
    const S* f = features[t]->value.data();
    for (int b = 0; b < n; ++b) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
        for (int y = 0; y < hs; ++y) {
          for (int x = 0; x < ws; ++x) {
            const std::size_t i = base + static_cast<std::size_t>(y) * ws + x;
            out[i] += mask->value[mask_index(t, b, ch, y, x)] * f[i];
          }
        }
      }
    }
  }
  std::vector<Var<S>> parents = features;
  parents.push_back(mask);
  return make_result<S>(std::move(out), parents, [=](Node<S>& self) {
    auto& mn = self.parents.back();
    for (int t = 0; t < steps; ++t) {
      auto& fn = self.parents[t];
      for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
          const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * plane;
          for (int y = 0; y < hs; ++y) {
            for (int x = 0; x < ws; ++x) {
              const std::size_t i = base + static_cast<std::size_t>(y) * ws + x;
              const std::size_t mi = mask_index(t, b, ch, y, x);
              if (fn->requires_grad) fn->grad_buffer()[i] += mn->value[mi] * self.grad[i];
              if (mn->requires_grad) mn->grad_buffer()[mi] += fn->value[i] * self.grad[i];
            }
          }
        }
      }
    }
  });
}

template <typename S>
Var<S> global_avg_pool(const Var<S>& x) {
  const auto& s = x->value.shape();
  require_rank4(s, "global_avg_pool");
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  Tensor<S> out({s[0], s[1]});
  for (std::size_t p = 0; p < out.size(); ++p) {
    S acc{0};
    for (std::size_t i = 0; i < plane; ++i) acc += x->value[p * plane + i];
    out[p] = acc / static_cast<S>(plane);
  }
  return make_result<S>(std::move(out), {x}, [plane](Node<S>& self) {
    auto& d = self.parents[0]->grad_buffer();
    for (std::size_t p = 0; p < self.value.size(); ++p) {
      const S g = self.grad[p] / static_cast<S>(plane);
      for (std::size_t i = 0; i < plane; ++i) d[p * plane + i] += g;
    }
  });
}

template <typename S>
Var<S> external_scalar(const Var<S>& input, S value, Tensor<S> gradient) {
  require(gradient.size() == input->value.size(), "external_scalar: gradient size mismatch");
  return make_result<S>(Tensor<S>({1}, std::vector<S>{value}), {input},
                        [gradient = std::move(gradient)](Node<S>& self) {
                          auto& d = self.parents[0]->grad_buffer();
                          const S g = self.grad[0];
                          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * gradient[i];
                        });
}

#define WILDFIRE_INSTANTIATE(S)                                                                 \
  template void backward<S>(const Var<S>&);                                                     \
  template Var<S> conv2d<S>(const Var<S>&, const Var<S>&, const Var<S>&, int, int);             \
  template Var<S> relu<S>(const Var<S>&);                                                       \
  template Var<S> add<S>(const Var<S>&, const Var<S>&);                                         \
  template Var<S> concat_channels<S>(const Var<S>&, const Var<S>&);                             \
  template Var<S> concat_channels<S>(const std::vector<Var<S>>&);                               \
  template Var<S> upsample_nearest<S>(const Var<S>&, int);                                      \
  template Var<S> add_channel_offsets<S>(const Var<S>&, const Tensor<S>&);                      \
  template Var<S> window_attention<S>(const Var<S>&, const Var<S>&, const Var<S>&, int);        \
  template Var<S> head_scores<S>(const Var<S>&, const Var<S>&);                                 \
  template Var<S> temporal_softmax<S>(const std::vector<Var<S>>&);                              \
  template Var<S> temporal_pool<S>(const std::vector<Var<S>>&, const Var<S>&);                  \
  template Var<S> global_avg_pool<S>(const Var<S>&);                                            \
  template Var<S> external_scalar<S>(const Var<S>&, S, Tensor<S>);

WILDFIRE_INSTANTIATE(float)
WILDFIRE_INSTANTIATE(double)

#undef WILDFIRE_INSTANTIATE

}  // namespace wildfire::nn

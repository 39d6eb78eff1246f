#include "aip/network.hpp"

#include "aip/errors.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace aip {
namespace {

template <typename Scalar>
void im2col(const FeatureMap<Scalar>& x, const LayerSpec& l, int oh, int ow, Matrix<Scalar>& cols) {
  const int cin = x.channels();
  const int k = l.kernel;
  cols.setZero(static_cast<Eigen::Index>(k) * k * cin, static_cast<Eigen::Index>(x.batch) * oh * ow);
  for (int n = 0; n < x.batch; ++n) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(n) * oh + oy) * ow + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= x.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix < 0 || ix >= x.width) continue;
            cols.col(col).segment((ky * k + kx) * cin, cin) =
                x.data.col((static_cast<Eigen::Index>(n) * x.height + iy) * x.width + ix);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const Matrix<Scalar>& dcols, const LayerSpec& l, int oh, int ow, FeatureMap<Scalar>& dx) {
  const int cin = dx.channels();
  const int k = l.kernel;
  for (int n = 0; n < dx.batch; ++n) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(n) * oh + oy) * ow + ox;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * l.stride - l.padding + ky;
          if (iy < 0 || iy >= dx.height) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * l.stride - l.padding + kx;
            if (ix < 0 || ix >= dx.width) continue;
            dx.data.col((static_cast<Eigen::Index>(n) * dx.height + iy) * dx.width + ix) +=
                dcols.col(col).segment((ky * k + kx) * cin, cin);
          }
        }
      }
    }
  }
}

template <typename Scalar>
LayerParams<Scalar> init_layer(const LayerSpec& l, std::mt19937_64& rng) {
  LayerParams<Scalar> p;
  auto normal = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
    return m;
  };
  switch (l.kind) {
    case LayerKind::Conv: {
      const int fan_in = l.in_channels * l.kernel * l.kernel;
      p.values.push_back(normal(l.out_channels, fan_in, std::sqrt(2.0 / fan_in)));
      p.values.push_back(Matrix<Scalar>::Zero(l.out_channels, 1));
      break;
    }
    case LayerKind::Linear:
      p.values.push_back(normal(l.out_channels, l.in_channels, std::sqrt(1.0 / l.in_channels)));
      p.values.push_back(Matrix<Scalar>::Zero(l.out_channels, 1));
      break;
    case LayerKind::BatchNorm:
      p.values.push_back(Matrix<Scalar>::Ones(l.out_channels, 1));
      p.values.push_back(Matrix<Scalar>::Zero(l.out_channels, 1));
      p.buffers.push_back(Matrix<Scalar>::Zero(l.out_channels, 1));
      p.buffers.push_back(Matrix<Scalar>::Ones(l.out_channels, 1));
      break;
    default:
      break;
  }
  return p;
}

}  // namespace

template <typename Scalar>
Network<Scalar>::Network(NetworkDescriptor desc, std::uint64_t seed) : desc_(std::move(desc)) {
  shapes_ = infer_shapes(desc_);
  std::mt19937_64 rng(seed);
  params_.reserve(desc_.layers.size());
  for (const LayerSpec& l : desc_.layers) params_.push_back(init_layer<Scalar>(l, rng));
  allocate_grads();
}

template <typename Scalar>
Network<Scalar>::Network(NetworkDescriptor desc, std::vector<LayerParams<Scalar>> params)
    : desc_(std::move(desc)), params_(std::move(params)) {
  shapes_ = infer_shapes(desc_);
  if (params_.size() != desc_.layers.size())
    throw ShapeMismatch("parameter list does not match layer count");
  for (int i = 0; i < desc_.size(); ++i) {
    const LayerSpec& l = desc_.layers[i];
    const auto& v = params_[i].values;
    auto expect = [&](std::size_t idx, Eigen::Index rows, Eigen::Index cols) {
      if (idx >= v.size() || v[idx].rows() != rows || v[idx].cols() != cols)
        throw ShapeMismatch("parameter shape mismatch at layer " + std::to_string(i) + " '" + l.name + "'");
    };
    switch (l.kind) {
      case LayerKind::Conv:
        expect(0, l.out_channels, static_cast<Eigen::Index>(l.kernel) * l.kernel * l.in_channels);
        expect(1, l.out_channels, 1);
        break;
      case LayerKind::Linear:
        expect(0, l.out_channels, l.in_channels);
        expect(1, l.out_channels, 1);
        break;
      case LayerKind::BatchNorm:
        expect(0, l.out_channels, 1);
        expect(1, l.out_channels, 1);
        if (params_[i].buffers.size() != 2 || params_[i].buffers[0].rows() != l.out_channels ||
            params_[i].buffers[1].rows() != l.out_channels)
          throw ShapeMismatch("batch norm statistics mismatch at layer " + std::to_string(i));
        break;
      default:
        if (!v.empty()) throw ShapeMismatch("unexpected parameters at layer " + std::to_string(i));
    }
  }
  allocate_grads();
}

template <typename Scalar>
void Network<Scalar>::allocate_grads() {
  for (auto& p : params_) {
    p.grads.clear();
    for (const auto& v : p.values) p.grads.push_back(Matrix<Scalar>::Zero(v.rows(), v.cols()));
  }
}

template <typename Scalar>
void Network<Scalar>::zero_grad() {
  for (auto& p : params_)
    for (auto& g : p.grads) g.setZero();
}

template <typename Scalar>
std::size_t Network<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    for (const auto& v : p.values) n += static_cast<std::size_t>(v.size());
  return n;
}

template <typename Scalar>
const Matrix<Scalar>& Network<Scalar>::forward(const FeatureMap<Scalar>& input, Mode mode) {
  if (!(input.shape() == desc_.input))
    throw ShapeMismatch("input " + to_string(input.shape()) + " does not match declared " +
                        to_string(desc_.input));
  const int n_layers = desc_.size();
  mode_ = mode;
  outputs_.resize(n_layers);
  cols_.resize(n_layers);
  bn_xhat_.resize(n_layers);
  bn_inv_std_.resize(n_layers);
  argmax_.resize(n_layers);
  const int batch = input.batch;

  for (int i = 0; i < n_layers; ++i) {
    const LayerSpec& l = desc_.layers[i];
    const FeatureMap<Scalar>& in = l.inputs[0] < 0 ? input : outputs_[l.inputs[0]];
    const Shape& os = shapes_[i];
    FeatureMap<Scalar>& out = outputs_[i];
    out.batch = batch;
    out.height = os.height;
    out.width = os.width;
    auto& p = params_[i];

    switch (l.kind) {
      case LayerKind::Conv: {
        if (l.kernel == 1 && l.stride == 1 && l.padding == 0) {
          cols_[i] = in.data;
        } else {
          im2col(in, l, os.height, os.width, cols_[i]);
        }
        out.data.noalias() = p.values[0] * cols_[i];
        out.data.colwise() += p.values[1].col(0);
        break;
      }
      case LayerKind::BatchNorm: {
        const auto m = static_cast<Scalar>(in.data.cols());
        auto& gamma = p.values[0];
        auto& beta = p.values[1];
        auto& run_mean = p.buffers[0];
        auto& run_var = p.buffers[1];
        Vector<Scalar> mean;
        Vector<Scalar> var;
        if (mode == Mode::Train) {
          mean = in.data.rowwise().mean();
          bn_xhat_[i] = in.data.colwise() - mean;
          var = bn_xhat_[i].array().square().rowwise().sum().matrix() / m;
          const auto mom = static_cast<Scalar>(kBatchNormMomentum);
          run_mean.col(0) = (1 - mom) * run_mean.col(0) + mom * mean;
          const Scalar unbias = m > 1 ? m / (m - 1) : Scalar(1);
          run_var.col(0) = (1 - mom) * run_var.col(0) + mom * unbias * var;
        } else {
          mean = run_mean.col(0);
          var = run_var.col(0);
          bn_xhat_[i] = in.data.colwise() - mean;
        }
        bn_inv_std_[i] = (var.array() + static_cast<Scalar>(kBatchNormEps)).rsqrt().matrix();
        bn_xhat_[i] = bn_inv_std_[i].asDiagonal() * bn_xhat_[i];
        out.data = gamma.col(0).asDiagonal() * bn_xhat_[i];
        out.data.colwise() += beta.col(0);
        break;
      }
      case LayerKind::Activation:
        out.data = in.data.cwiseMax(Scalar(0));
        break;
      case LayerKind::Pool: {
        const int c = in.channels();
        if (l.pool == PoolType::GlobalAverage) {
          out.data.resize(c, batch);
          for (int n = 0; n < batch; ++n) out.data.col(n) = in.sample(n).rowwise().mean();
          break;
        }
        out.data.resize(c, static_cast<Eigen::Index>(batch) * os.height * os.width);
        const bool is_max = l.pool == PoolType::Max;
        if (is_max) argmax_[i].resize(c, out.data.cols());
        for (int n = 0; n < batch; ++n) {
          for (int oy = 0; oy < os.height; ++oy) {
            for (int ox = 0; ox < os.width; ++ox) {
              const Eigen::Index col = (static_cast<Eigen::Index>(n) * os.height + oy) * os.width + ox;
              auto o = out.data.col(col);
              if (is_max) {
                o.setConstant(-std::numeric_limits<Scalar>::infinity());
                argmax_[i].col(col).setConstant(-1);
              } else {
                o.setZero();
              }
              for (int ky = 0; ky < l.kernel; ++ky) {
                const int iy = oy * l.stride - l.padding + ky;
                if (iy < 0 || iy >= in.height) continue;
                for (int kx = 0; kx < l.kernel; ++kx) {
                  const int ix = ox * l.stride - l.padding + kx;
                  if (ix < 0 || ix >= in.width) continue;
                  const Eigen::Index src = (static_cast<Eigen::Index>(n) * in.height + iy) * in.width + ix;
                  if (is_max) {
                    for (int ch = 0; ch < c; ++ch) {
                      const Scalar v = in.data(ch, src);
                      if (v > o(ch)) {
                        o(ch) = v;
                        argmax_[i](ch, col) = static_cast<int>(src);
                      }
                    }
                  } else {
                    o += in.data.col(src);
                  }
                }
              }
              if (!is_max) o /= static_cast<Scalar>(l.kernel * l.kernel);
            }
          }
        }
        break;
      }
      case LayerKind::Linear:
        out.data.noalias() = p.values[0] * in.data;
        out.data.colwise() += p.values[1].col(0);
        break;
      case LayerKind::Add:
        out.data = outputs_[l.inputs[0]].data + outputs_[l.inputs[1]].data;
        break;
      case LayerKind::Concat: {
        out.data.resize(os.channels, in.data.cols());
        Eigen::Index row = 0;
        for (int src : l.inputs) {
          const auto& part = outputs_[src].data;
          out.data.middleRows(row, part.rows()) = part;
          row += part.rows();
        }
        break;
      }
    }
  }
  return outputs_.back().data;
}

template <typename Scalar>
void Network<Scalar>::backward(const Matrix<Scalar>& dlogits, const std::map<int, Matrix<Scalar>>& extra) {
  const int n_layers = desc_.size();
  if (static_cast<int>(outputs_.size()) != n_layers) throw std::logic_error("backward() before forward()");
  std::vector<Matrix<Scalar>> grad(n_layers);
  auto accumulate = [&](int idx, const auto& g) {
    if (idx < 0) return;
    if (grad[idx].size() == 0) {
      grad[idx] = g;
    } else {
      grad[idx] += g;
    }
  };
  if (dlogits.rows() != outputs_.back().data.rows() || dlogits.cols() != outputs_.back().data.cols())
    throw ShapeMismatch("logit gradient shape mismatch");
  accumulate(n_layers - 1, dlogits);
  for (const auto& [idx, g] : extra) {
    if (idx < 0 || idx >= n_layers || g.rows() != outputs_[idx].data.rows() ||
        g.cols() != outputs_[idx].data.cols())
      throw ShapeMismatch("injected gradient does not match layer " + std::to_string(idx));
    accumulate(idx, g);
  }

  for (int i = n_layers - 1; i >= 0; --i) {
    if (grad[i].size() == 0) continue;
    const Matrix<Scalar>& dy = grad[i];
    const LayerSpec& l = desc_.layers[i];
    const int src = l.inputs[0];
    auto& p = params_[i];

    switch (l.kind) {
      case LayerKind::Conv: {
        p.grads[0].noalias() += dy * cols_[i].transpose();
        p.grads[1].col(0) += dy.rowwise().sum();
        if (src < 0) break;
        Matrix<Scalar> dcols = p.values[0].transpose() * dy;
        if (l.kernel == 1 && l.stride == 1 && l.padding == 0) {
          accumulate(src, dcols);
        } else {
          const FeatureMap<Scalar>& in = outputs_[src];
          FeatureMap<Scalar> dx(in.channels(), in.batch, in.height, in.width);
          col2im(dcols, l, outputs_[i].height, outputs_[i].width, dx);
          accumulate(src, dx.data);
        }
        break;
      }
      case LayerKind::BatchNorm: {
        const Matrix<Scalar>& xhat = bn_xhat_[i];
        const Vector<Scalar>& inv = bn_inv_std_[i];
        const auto gamma = p.values[0].col(0);
        p.grads[0].col(0) += dy.cwiseProduct(xhat).rowwise().sum();
        p.grads[1].col(0) += dy.rowwise().sum();
        if (src < 0) break;
        if (mode_ == Mode::Train) {
          const auto m = static_cast<Scalar>(dy.cols());
          const Matrix<Scalar> dxhat = gamma.asDiagonal() * dy;
          const Vector<Scalar> sum_d = dxhat.rowwise().sum();
          const Vector<Scalar> sum_dx = dxhat.cwiseProduct(xhat).rowwise().sum();
          Matrix<Scalar> dx = m * dxhat;
          dx.colwise() -= sum_d;
          dx -= sum_dx.asDiagonal() * xhat;
          dx = (inv / m).asDiagonal() * dx;
          accumulate(src, dx);
        } else {
          accumulate(src, Matrix<Scalar>(gamma.cwiseProduct(inv).asDiagonal() * dy));
        }
        break;
      }
      case LayerKind::Activation:
        accumulate(src, Matrix<Scalar>(dy.cwiseProduct(
                            (outputs_[i].data.array() > Scalar(0)).template cast<Scalar>().matrix())));
        break;
      case LayerKind::Pool: {
        if (src < 0) break;
        const FeatureMap<Scalar>& in = outputs_[src];
        Matrix<Scalar> dx = Matrix<Scalar>::Zero(in.data.rows(), in.data.cols());
        if (l.pool == PoolType::GlobalAverage) {
          const auto inv_area = Scalar(1) / static_cast<Scalar>(in.spatial());
          for (int n = 0; n < in.batch; ++n)
            dx.middleCols(static_cast<Eigen::Index>(n) * in.spatial(), in.spatial()).colwise() =
                dy.col(n) * inv_area;
        } else if (l.pool == PoolType::Max) {
          const auto& am = argmax_[i];
          for (Eigen::Index col = 0; col < dy.cols(); ++col)
            for (Eigen::Index ch = 0; ch < dy.rows(); ++ch)
              if (am(ch, col) >= 0) dx(ch, am(ch, col)) += dy(ch, col);
        } else {
          const FeatureMap<Scalar>& out = outputs_[i];
          const auto inv_area = Scalar(1) / static_cast<Scalar>(l.kernel * l.kernel);
          for (int n = 0; n < out.batch; ++n)
            for (int oy = 0; oy < out.height; ++oy)
              for (int ox = 0; ox < out.width; ++ox) {
                const Eigen::Index col = (static_cast<Eigen::Index>(n) * out.height + oy) * out.width + ox;
                for (int ky = 0; ky < l.kernel; ++ky) {
                  const int iy = oy * l.stride - l.padding + ky;
                  if (iy < 0 || iy >= in.height) continue;
                  for (int kx = 0; kx < l.kernel; ++kx) {
                    const int ix = ox * l.stride - l.padding + kx;
                    if (ix < 0 || ix >= in.width) continue;
                    dx.col((static_cast<Eigen::Index>(n) * in.height + iy) * in.width + ix) +=
                        dy.col(col) * inv_area;
                  }
                }
              }
        }
        accumulate(src, dx);
        break;
      }
      case LayerKind::Linear: {
        if (src < 0) break;
        const Matrix<Scalar>& x = outputs_[src].data;
        p.grads[0].noalias() += dy * x.transpose();
        p.grads[1].col(0) += dy.rowwise().sum();
        accumulate(src, Matrix<Scalar>(p.values[0].transpose() * dy));
        break;
      }
      case LayerKind::Add:
        accumulate(l.inputs[0], dy);
        accumulate(l.inputs[1], dy);
        break;
      case LayerKind::Concat: {
        Eigen::Index row = 0;
        for (int in_idx : l.inputs) {
          const Eigen::Index rows = outputs_[in_idx].data.rows();
          accumulate(in_idx, Matrix<Scalar>(dy.middleRows(row, rows)));
          row += rows;
        }
        break;
      }
    }
  }
}

template <typename Scalar>
std::uint64_t parameter_hash(const Network<Scalar>& net) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const Matrix<Scalar>& m) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(Scalar); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : net.params()) {
    for (const auto& v : p.values) mix(v);
    for (const auto& b : p.buffers) mix(b);
  }
  return h;
}

template class Network<float>;
template class Network<double>;
template std::uint64_t parameter_hash(const Network<float>&);
template std::uint64_t parameter_hash(const Network<double>&);

}  // namespace aip

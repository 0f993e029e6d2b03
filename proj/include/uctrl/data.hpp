#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "uctrl/linalg.hpp"
#include "uctrl/matrix.hpp"
#include "uctrl/rng.hpp"

namespace uctrl::data {

// D x N sample matrix plus optional ground-truth labels. Labels are carried
// for evaluation only; training receives a TrainingView, which has no label
// accessor at all.
struct Dataset {
  Matrix x;
  std::vector<int> labels;  // empty = absent
  int k_true = 0;
  std::string metadata;

  int dim() const { return x.rows(); }
  int count() const { return x.cols(); }
  bool labeled() const { return !labels.empty(); }
};

struct TrainingView {
  const Matrix* x = nullptr;

  explicit TrainingView(const Dataset& d) : x(&d.x) {}
  int dim() const { return x->rows(); }
  int count() const { return x->cols(); }
};

enum class AugKind { subspace_jitter, rotation_in_class_plane, additive_noise, pixel_crop_flip };

inline AugKind aug_kind_from_string(const std::string& s) {
  if (s == "subspace_jitter") return AugKind::subspace_jitter;
  if (s == "rotation_in_class_plane") return AugKind::rotation_in_class_plane;
  if (s == "additive_noise") return AugKind::additive_noise;
  if (s == "pixel_crop_flip") return AugKind::pixel_crop_flip;
  throw InvalidConfig("unknown augmentation kind: " + s);
}

struct AugmentationSpec {
  AugKind kind = AugKind::subspace_jitter;
  int count = 1;  // augmentations per sample

  // subspace_jitter: x -> s * x + noise_sigma * nu, with |s| in
  // [scale_min, scale_max] and the sign flipped with sign_flip_prob.
  double scale_min = 0.8;
  double scale_max = 1.2;
  double sign_flip_prob = 0.5;
  double noise_sigma = 0.05;

  // rotation_in_class_plane: coefficient rotation by up to max_angle rad.
  double max_angle = 0.5;

  // pixel_crop_flip: reflect-pad crop by up to max_shift pixels, horizontal
  // flip with flip_prob, per-channel brightness jitter in [-brightness, +].
  int image_c = 1, image_h = 1, image_w = 0;
  int max_shift = 2;
  double flip_prob = 0.5;
  double brightness = 0.1;

  // re-project the result to the unit sphere (set when the dataset is
  // unit-norm).
  bool renormalize = true;

  void validate(int dim) const {
    if (count < 1) throw InvalidConfig("augmentation count must be >= 1");
    if (scale_min <= 0.0 || scale_max < scale_min)
      throw InvalidConfig("augmentation scale range invalid");
    if (sign_flip_prob < 0.0 || sign_flip_prob > 1.0)
      throw InvalidConfig("sign_flip_prob outside [0,1]");
    if (noise_sigma < 0.0) throw InvalidConfig("noise_sigma must be >= 0");
    if (kind == AugKind::pixel_crop_flip) {
      if (image_c < 1 || image_h < 1 || image_w < 1 || image_c * image_h * image_w != dim)
        throw InvalidConfig("pixel_crop_flip image shape does not match sample dim");
      if (max_shift < 0 || flip_prob < 0.0 || flip_prob > 1.0 || brightness < 0.0)
        throw InvalidConfig("pixel_crop_flip parameters invalid");
    }
  }
};

// k mutually-orthogonal random bases, Gaussian coefficients, isotropic
// ambient noise, unit-norm samples. Sample order is class-major.
inline Dataset gen_subspace_mixture(Rng& rng, int dim, int k, int per_class_dim,
                                    int n_per_class, double noise_sigma) {
  if (k < 1 || per_class_dim < 1 || per_class_dim * k > dim)
    throw InvalidConfig("gen_subspace_mixture: need k*per_class_dim <= D");
  if (n_per_class < 1) throw InvalidConfig("gen_subspace_mixture: N_per_class must be >= 1");
  if (noise_sigma < 0.0) throw InvalidConfig("gen_subspace_mixture: noise_sigma must be >= 0");

  Matrix g(dim, k * per_class_dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < g.cols(); ++j) g(i, j) = rng.next_gaussian();
  Matrix basis = orthonormalize_columns(g);
  while (basis.cols() < k * per_class_dim) {
    Matrix extra(dim, 1);
    for (int i = 0; i < dim; ++i) extra(i, 0) = rng.next_gaussian();
    basis = orthonormalize_columns(hcat(basis, extra));
  }

  Dataset ds;
  ds.x = Matrix(dim, k * n_per_class);
  ds.labels.resize(k * n_per_class);
  ds.k_true = k;
  ds.metadata = "subspace_mixture k=" + std::to_string(k) +
                " per_class_dim=" + std::to_string(per_class_dim) +
                " noise_sigma=" + std::to_string(noise_sigma);

  int col = 0;
  for (int cls = 0; cls < k; ++cls) {
    for (int s = 0; s < n_per_class; ++s, ++col) {
      std::vector<double> xv(dim, 0.0);
      for (int c = 0; c < per_class_dim; ++c) {
        double coeff = rng.next_gaussian();
        for (int i = 0; i < dim; ++i) xv[i] += coeff * basis(i, cls * per_class_dim + c);
      }
      if (noise_sigma > 0.0)
        for (int i = 0; i < dim; ++i) xv[i] += noise_sigma * rng.next_gaussian();
      double nv = norm2(xv);
      if (nv < 1e-12) {  // resample a degenerate draw deterministically
        --s;
        --col;
        continue;
      }
      for (int i = 0; i < dim; ++i) ds.x(i, col) = xv[i] / nv;
      ds.labels[col] = cls;
    }
  }
  return ds;
}

// First n_train_per_class samples of each class go to the first dataset.
// Assumes class-major order as produced by gen_subspace_mixture.
inline std::pair<Dataset, Dataset> split_per_class(const Dataset& ds, int n_train_per_class) {
  if (!ds.labeled()) throw InvalidConfig("split_per_class: dataset has no labels");
  std::vector<int> train_idx, test_idx;
  std::vector<int> seen(ds.k_true, 0);
  for (int j = 0; j < ds.count(); ++j) {
    int c = ds.labels[j];
    if (seen[c]++ < n_train_per_class)
      train_idx.push_back(j);
    else
      test_idx.push_back(j);
  }
  auto take = [&](const std::vector<int>& idx) {
    Dataset out;
    out.x = select_cols(ds.x, idx);
    out.labels.reserve(idx.size());
    for (int j : idx) out.labels.push_back(ds.labels[j]);
    out.k_true = ds.k_true;
    out.metadata = ds.metadata;
    return out;
  };
  return {take(train_idx), take(test_idx)};
}

namespace detail {

inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace detail

// tau(x). class_basis, when given, defines the local span for
// subspace_jitter / rotation; otherwise the sample's own direction is used.
inline std::vector<double> augment(Rng& rng, const std::vector<double>& x,
                                   const AugmentationSpec& spec,
                                   const Matrix* class_basis = nullptr) {
  const int dim = static_cast<int>(x.size());
  spec.validate(dim);
  std::vector<double> out = x;

  switch (spec.kind) {
    case AugKind::subspace_jitter: {
      double s = rng.uniform(spec.scale_min, spec.scale_max);
      if (rng.next_double() < spec.sign_flip_prob) s = -s;
      if (class_basis) {
        // scale the in-span component, keep the off-span residual
        std::vector<double> proj(dim, 0.0);
        for (int c = 0; c < class_basis->cols(); ++c) {
          double p = 0.0;
          for (int i = 0; i < dim; ++i) p += (*class_basis)(i, c) * x[i];
          for (int i = 0; i < dim; ++i) proj[i] += p * (*class_basis)(i, c);
        }
        for (int i = 0; i < dim; ++i) out[i] = s * proj[i] + (x[i] - proj[i]);
      } else {
        for (int i = 0; i < dim; ++i) out[i] = s * x[i];
      }
      if (spec.noise_sigma > 0.0)
        for (int i = 0; i < dim; ++i) out[i] += spec.noise_sigma * rng.next_gaussian();
      break;
    }
    case AugKind::rotation_in_class_plane: {
      if (!class_basis || class_basis->cols() < 2)
        throw InvalidConfig("rotation_in_class_plane needs a class basis of rank >= 2");
      std::vector<double> coeff(class_basis->cols());
      for (int c = 0; c < class_basis->cols(); ++c) {
        double p = 0.0;
        for (int i = 0; i < dim; ++i) p += (*class_basis)(i, c) * x[i];
        coeff[c] = p;
      }
      int a = static_cast<int>(rng.uniform_below(class_basis->cols()));
      int b = static_cast<int>(rng.uniform_below(class_basis->cols() - 1));
      if (b >= a) ++b;
      double theta = rng.uniform(-spec.max_angle, spec.max_angle);
      double ca = std::cos(theta), sa = std::sin(theta);
      double na = ca * coeff[a] - sa * coeff[b];
      double nb = sa * coeff[a] + ca * coeff[b];
      std::vector<double> delta(dim, 0.0);
      for (int i = 0; i < dim; ++i)
        delta[i] = (na - coeff[a]) * (*class_basis)(i, a) + (nb - coeff[b]) * (*class_basis)(i, b);
      for (int i = 0; i < dim; ++i) out[i] = x[i] + delta[i];
      if (spec.noise_sigma > 0.0)
        for (int i = 0; i < dim; ++i) out[i] += spec.noise_sigma * rng.next_gaussian();
      break;
    }
    case AugKind::additive_noise: {
      if (spec.noise_sigma > 0.0)
        for (int i = 0; i < dim; ++i) out[i] += spec.noise_sigma * rng.next_gaussian();
      break;
    }
    case AugKind::pixel_crop_flip: {
      const int C = spec.image_c, H = spec.image_h, W = spec.image_w;
      int dx = spec.max_shift > 0
                   ? static_cast<int>(rng.uniform_below(2 * spec.max_shift + 1)) - spec.max_shift
                   : 0;
      int dy = (spec.max_shift > 0 && H > 1)
                   ? static_cast<int>(rng.uniform_below(2 * spec.max_shift + 1)) - spec.max_shift
                   : 0;
      bool flip = rng.next_double() < spec.flip_prob;
      std::vector<double> shifted(x.size());
      for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
          for (int w = 0; w < W; ++w) {
            int sw = flip ? W - 1 - w : w;
            int src_h = detail::reflect_index(h + dy, H);
            int src_w = detail::reflect_index(sw + dx, W);
            shifted[(static_cast<size_t>(c) * H + h) * W + w] =
                x[(static_cast<size_t>(c) * H + src_h) * W + src_w];
          }
      out = std::move(shifted);
      if (spec.brightness > 0.0)
        for (int c = 0; c < C; ++c) {
          double delta = rng.uniform(-spec.brightness, spec.brightness);
          for (int i = 0; i < H * W; ++i) {
            double& v = out[static_cast<size_t>(c) * H * W + i];
            v = std::min(1.0, std::max(-1.0, v + delta));
          }
        }
      break;
    }
  }

  if (spec.renormalize && spec.kind != AugKind::pixel_crop_flip) {
    double nv = norm2(out);
    if (nv < 1e-12) throw InvalidConfig("augment: result collapsed to zero before renorm");
    for (auto& v : out) v /= nv;
  }
  for (double v : out)
    if (!std::isfinite(v)) throw NonFiniteValue("augment: non-finite output");
  return out;
}

inline Matrix augment_columns(Rng& rng, const Matrix& x, const AugmentationSpec& spec) {
  Matrix out(x.rows(), x.cols());
  for (int j = 0; j < x.cols(); ++j) out.set_col(j, augment(rng, x.col(j), spec));
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic batch schedule: one shuffled permutation per epoch, keyed by
// (seed, epoch); iteration t is a pure function of (seed, t).
// ---------------------------------------------------------------------------

inline int batches_per_epoch(int n, int batch_size) {
  if (batch_size < 1 || batch_size > n)
    throw InvalidConfig("batch size must be in [1, N]");
  return (n + batch_size - 1) / batch_size;
}

inline std::vector<int> batch_indices_for_iteration(int n, int batch_size, uint64_t seed,
                                                    uint64_t iteration) {
  const int bpe = batches_per_epoch(n, batch_size);
  const uint64_t epoch = iteration / bpe;
  const int slot = static_cast<int>(iteration % bpe);
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, "batch", epoch));
  rng.shuffle(perm);
  int lo = slot * batch_size;
  int hi = std::min(n, lo + batch_size);
  return std::vector<int>(perm.begin() + lo, perm.begin() + hi);
}

struct Batch {
  std::vector<int> indices;
  Matrix x;
  Matrix x_aug;
};

// Stream over (index set, X_batch, X_aug_batch); at(t) is reproducible from
// (seed, t) alone.
class BatchIterator {
 public:
  BatchIterator(TrainingView view, AugmentationSpec spec, uint64_t seed, int batch_size)
      : view_(view), spec_(std::move(spec)), seed_(seed), batch_size_(batch_size) {
    (void)batches_per_epoch(view_.count(), batch_size_);  // validates
  }

  Batch at(uint64_t iteration) const {
    Batch b;
    b.indices = batch_indices_for_iteration(view_.count(), batch_size_, seed_, iteration);
    b.x = select_cols(*view_.x, b.indices);
    Rng rng(mix_seed(seed_, "aug", iteration));
    b.x_aug = augment_columns(rng, b.x, spec_);
    return b;
  }

 private:
  TrainingView view_;
  AugmentationSpec spec_;
  uint64_t seed_;
  int batch_size_;
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches: records of 1 label byte + 3072 channel-plane
// bytes; pixels map to [-1, 1] via v/127.5 - 1.
// ---------------------------------------------------------------------------

constexpr int kCifarRecordBytes = 3073;
constexpr int kCifarDim = 3072;

inline Dataset read_cifar10_batch(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_cifar10_batch: cannot open " + path);
  f.seekg(0, std::ios::end);
  const auto bytes = static_cast<long long>(f.tellg());
  f.seekg(0);
  if (bytes <= 0 || bytes % kCifarRecordBytes != 0)
    throw BadRecordSize("read_cifar10_batch: size " + std::to_string(bytes) +
                        " not a multiple of 3073");
  const int n = static_cast<int>(bytes / kCifarRecordBytes);
  Dataset ds;
  ds.x = Matrix(kCifarDim, n);
  ds.labels.resize(n);
  ds.k_true = 10;
  ds.metadata = "cifar10:" + path;
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (int j = 0; j < n; ++j) {
    f.read(reinterpret_cast<char*>(rec.data()), kCifarRecordBytes);
    if (!f) throw IoError("read_cifar10_batch: short read");
    ds.labels[j] = rec[0];
    for (int i = 0; i < kCifarDim; ++i) ds.x(i, j) = rec[1 + i] / 127.5 - 1.0;
  }
  return ds;
}

inline void write_cifar10_batch(const Dataset& ds, const std::string& path) {
  if (ds.dim() != kCifarDim)
    throw InvalidConfig("write_cifar10_batch: dataset dim != 3072");
  if (!ds.labeled()) throw InvalidConfig("write_cifar10_batch: labels required");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_cifar10_batch: cannot open " + path);
  std::vector<unsigned char> rec(kCifarRecordBytes);
  for (int j = 0; j < ds.count(); ++j) {
    rec[0] = static_cast<unsigned char>(ds.labels[j]);
    for (int i = 0; i < kCifarDim; ++i) {
      double v = (ds.x(i, j) + 1.0) * 127.5;
      long b = std::lround(v);
      rec[1 + i] = static_cast<unsigned char>(std::min(255L, std::max(0L, b)));
    }
    f.write(reinterpret_cast<const char*>(rec.data()), kCifarRecordBytes);
  }
  if (!f) throw IoError("write_cifar10_batch: write failed");
}

// ---------------------------------------------------------------------------
// UCDS container: magic "UCDS", version u32, D u32, N u32, k u32, f64
// samples column-major, labels u16 (0xFFFF = absent). Little-endian.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ostream& o, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u16(std::ostream& o, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  o.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_f64(std::ostream& o, double d) {
  uint64_t v;
  std::memcpy(&v, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  o.write(reinterpret_cast<const char*>(b), 8);
}

inline uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  double d;
  std::memcpy(&d, &v, 8);
  return d;
}

}  // namespace detail

inline void write_ucds(const Dataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_ucds: cannot open " + path);
  f.write("UCDS", 4);
  detail::put_u32(f, 1u);
  detail::put_u32(f, static_cast<uint32_t>(ds.dim()));
  detail::put_u32(f, static_cast<uint32_t>(ds.count()));
  detail::put_u32(f, static_cast<uint32_t>(ds.k_true));
  for (int j = 0; j < ds.count(); ++j)
    for (int i = 0; i < ds.dim(); ++i) detail::put_f64(f, ds.x(i, j));
  for (int j = 0; j < ds.count(); ++j)
    detail::put_u16(f, ds.labeled() ? static_cast<uint16_t>(ds.labels[j]) : uint16_t{0xFFFF});
  if (!f) throw IoError("write_ucds: write failed");
}

inline Dataset read_ucds(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_ucds: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "UCDS", 4) != 0) throw IoError("read_ucds: bad magic");
  uint32_t version = detail::get_u32(f);
  if (version != 1u) throw IoError("read_ucds: unsupported version " + std::to_string(version));
  uint32_t d = detail::get_u32(f), n = detail::get_u32(f), k = detail::get_u32(f);
  Dataset ds;
  ds.x = Matrix(static_cast<int>(d), static_cast<int>(n));
  ds.k_true = static_cast<int>(k);
  ds.metadata = "ucds:" + path;
  for (uint32_t j = 0; j < n; ++j)
    for (uint32_t i = 0; i < d; ++i) ds.x(static_cast<int>(i), static_cast<int>(j)) = detail::get_f64(f);
  bool any_label = false;
  std::vector<int> labels(n);
  for (uint32_t j = 0; j < n; ++j) {
    uint16_t v = detail::get_u16(f);
    labels[j] = (v == 0xFFFF) ? -1 : static_cast<int>(v);
    if (v != 0xFFFF) any_label = true;
  }
  if (!f) throw IoError("read_ucds: truncated file");
  if (any_label) ds.labels = std::move(labels);
  return ds;
}

}  // namespace uctrl::data

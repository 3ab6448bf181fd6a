#include "lidarnl/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lidarnl/errors.hpp"
#include "lidarnl/rng.hpp"

namespace lidarnl {
namespace {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

struct ParamSpec {
  const char* name;
  int rows;  // 0 for biases (rank 1)
  int cols;
};

std::vector<ParamSpec> param_specs(const NetworkConfig& c) {
  const int h = c.hidden, d = c.feature;
  return {
      {"encoder.mlp1.weight", 3, h},      {"encoder.mlp1.bias", 0, h},
      {"encoder.mlp2.weight", h, h},      {"encoder.mlp2.bias", 0, h},
      {"encoder.mix1.self", h, d},        {"encoder.mix1.neighbor", h, d},
      {"encoder.mix1.bias", 0, d},        {"encoder.mix2.self", d, d},
      {"encoder.mix2.neighbor", d, d},    {"encoder.mix2.bias", 0, d},
      {"decoder.fc1.weight", 2 * d, h},   {"decoder.fc1.bias", 0, h},
      {"decoder.fc2.weight", h, c.classes}, {"decoder.fc2.bias", 0, c.classes},
      {"metric.weight", d, c.metric},
  };
}

Var affine(Var x, Var w, Var b) {
  const std::size_t n = x.value().rows();
  return ad::add(ad::matmul(x, w), ad::broadcast_rows(b, n));
}

Var mix(Var v, const VoxelGrid& grid, Var w_self, Var w_nbr, Var b) {
  Var nbr = ad::neighbor_mean(v, grid.neighbor_offsets, grid.neighbors);
  const std::size_t n = v.value().rows();
  Var z = ad::add(ad::matmul(v, w_self), ad::matmul(nbr, w_nbr));
  return ad::relu(ad::add(z, ad::broadcast_rows(b, n)));
}

Var psi(Var x, const ModelVars& m) {
  Var h = ad::relu(affine(x, m[ParamId::kDec1W], m[ParamId::kDec1B]));
  return affine(h, m[ParamId::kDec2W], m[ParamId::kDec2B]);
}

void check_map(std::span<const std::size_t> idx, std::size_t child, std::size_t parent) {
  if (idx.size() != child) {
    throw ShapeError("index map has " + std::to_string(idx.size()) + " entries for " +
                     std::to_string(child) + " points");
  }
  for (std::size_t k : idx) {
    if (k >= parent) throw ShapeError("index map points past its parent view");
  }
}

}  // namespace

void NetworkConfig::validate() const {
  if (classes < 2) throw ConfigError("network: classes must be >= 2");
  if (hidden < 1 || feature < 1 || metric < 1) {
    throw ConfigError("network: layer widths must be positive");
  }
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw ConfigError("network: voxel_size must be positive");
  }
  if (!(coord_scale > 0.0) || !std::isfinite(coord_scale)) {
    throw ConfigError("network: coord_scale must be positive");
  }
}

std::span<const std::size_t> VoxelGrid::members_of(std::size_t v) const {
  return std::span<const std::size_t>(members).subspan(
      member_offsets[v], member_offsets[v + 1] - member_offsets[v]);
}

VoxelGrid voxelize(const Scene& p, double voxel_size) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw ConfigError("voxelize: voxel_size must be positive");
  }
  VoxelGrid g;
  g.voxel_size = voxel_size;
  const std::size_t n = p.size();
  std::vector<VoxelKey> point_key(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point3f& pt = p.cloud.points[i];
    point_key[i] = {static_cast<std::int64_t>(std::floor(pt.x / voxel_size)),
                    static_cast<std::int64_t>(std::floor(pt.y / voxel_size)),
                    static_cast<std::int64_t>(std::floor(pt.z / voxel_size))};
  }
  g.keys = point_key;
  std::sort(g.keys.begin(), g.keys.end());
  g.keys.erase(std::unique(g.keys.begin(), g.keys.end()), g.keys.end());

  const auto find = [&g](const VoxelKey& k) -> std::ptrdiff_t {
    auto it = std::lower_bound(g.keys.begin(), g.keys.end(), k);
    return (it != g.keys.end() && *it == k) ? it - g.keys.begin() : -1;
  };

  g.point_voxel.resize(n);
  std::vector<std::size_t> counts(g.keys.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    g.point_voxel[i] = static_cast<std::size_t>(find(point_key[i]));
    ++counts[g.point_voxel[i]];
  }
  g.member_offsets.assign(g.keys.size() + 1, 0);
  for (std::size_t v = 0; v < g.keys.size(); ++v) {
    g.member_offsets[v + 1] = g.member_offsets[v] + counts[v];
  }
  g.members.resize(n);
  std::vector<std::size_t> fill(g.member_offsets.begin(), g.member_offsets.end() - 1);
  for (std::size_t i = 0; i < n; ++i) g.members[fill[g.point_voxel[i]]++] = i;

  static constexpr std::array<std::array<int, 3>, 6> kFaces = {
      {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}}};
  g.neighbor_offsets.assign(1, 0);
  for (const VoxelKey& k : g.keys) {
    for (const auto& f : kFaces) {
      const std::ptrdiff_t j = find({k[0] + f[0], k[1] + f[1], k[2] + f[2]});
      if (j >= 0) g.neighbors.push_back(static_cast<std::size_t>(j));
    }
    g.neighbor_offsets.push_back(g.neighbors.size());
  }
  return g;
}

Model::Model(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (const ParamSpec& s : param_specs(cfg_)) {
    Parameter p;
    p.name = s.name;
    p.is_bias = s.rows == 0;
    p.value = p.is_bias ? Tensor(Shape{static_cast<std::size_t>(s.cols)})
                        : Tensor(Shape{static_cast<std::size_t>(s.rows),
                                       static_cast<std::size_t>(s.cols)});
    params_.push_back(std::move(p));
  }
}

Model Model::init(const NetworkConfig& cfg, std::uint64_t seed) {
  Model m(cfg);
  Rng rng(derive_seed(seed, "model-init"));
  for (Parameter& p : m.params_) {
    if (p.is_bias) continue;
    const double bound = std::sqrt(1.0 / static_cast<double>(p.value.shape()[0]));
    for (double& w : p.value.data()) w = rng.uniform(-bound, bound);
  }
  return m;
}

Parameter& Model::param(const std::string& name) {
  for (Parameter& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown model parameter '" + name + "'");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

bool Model::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const Parameter& p) { return p.value.all_finite(); });
}

bool operator==(const Model& a, const Model& b) {
  if (a.params_.size() != b.params_.size()) return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i) {
    if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) {
      return false;
    }
  }
  return true;
}

ModelVars bind(Graph& g, const Model& model, bool trainable) {
  ModelVars m;
  m.cfg = &model.config();
  for (const Parameter& p : model.params()) {
    m.v.push_back(trainable ? g.leaf(p.value) : g.constant(p.value));
  }
  return m;
}

FeatureSet encode(Graph& g, const Scene& p, const ModelVars& m, ViewTag tag) {
  if (p.size() == 0) throw EmptyScene("encode: scene has no points");
  FeatureSet f;
  f.tag = tag;
  f.grid = voxelize(p, m.cfg->voxel_size);

  const std::size_t n = p.size();
  const double inv = 1.0 / m.cfg->coord_scale;
  Tensor xyz(Shape{n, 3});
  for (std::size_t i = 0; i < n; ++i) {
    xyz.at(i, 0) = p.cloud.points[i].x * inv;
    xyz.at(i, 1) = p.cloud.points[i].y * inv;
    xyz.at(i, 2) = p.cloud.points[i].z * inv;
  }
  Var x = g.constant(std::move(xyz));
  Var h = ad::relu(affine(x, m[ParamId::kMlp1W], m[ParamId::kMlp1B]));
  h = ad::relu(affine(h, m[ParamId::kMlp2W], m[ParamId::kMlp2B]));

  Var v = ad::scatter_mean(h, f.grid.point_voxel, f.grid.size());
  v = mix(v, f.grid, m[ParamId::kMix1Self], m[ParamId::kMix1Nbr], m[ParamId::kMix1B]);
  v = mix(v, f.grid, m[ParamId::kMix2Self], m[ParamId::kMix2Nbr], m[ParamId::kMix2B]);
  f.per_voxel = v;

  std::vector<std::int64_t> rows(f.grid.point_voxel.begin(), f.grid.point_voxel.end());
  f.per_point = ad::gather_rows(v, rows);
  return f;
}

Var decode_strong(const FeatureSet& f_ss, const FeatureSet& f_sa, const ModelVars& m,
                  std::span<const std::size_t> idx_ss_in_sa) {
  const std::size_t n_sa = f_sa.size();
  check_map(idx_ss_in_sa, f_ss.size(), n_sa);
  std::vector<std::int64_t> partner(n_sa, -1);
  for (std::size_t i = 0; i < idx_ss_in_sa.size(); ++i) {
    partner[idx_ss_in_sa[i]] = static_cast<std::int64_t>(i);
  }
  Var slot2 = ad::gather_rows(f_ss.per_point, partner);
  return psi(ad::concat_cols(f_sa.per_point, slot2), m);
}

WeakLogits decode_weak(const FeatureSet& f_ws, const FeatureSet& f_wa, const ModelVars& m,
                       std::span<const std::size_t> idx_ws_in_wa) {
  const std::size_t n_ws = f_ws.size();
  const std::size_t n_wa = f_wa.size();
  check_map(idx_ws_in_wa, n_ws, n_wa);
  std::vector<std::int64_t> to_wa(idx_ws_in_wa.begin(), idx_ws_in_wa.end());
  std::vector<std::int64_t> to_ws(n_wa, -1);
  for (std::size_t i = 0; i < n_ws; ++i) to_ws[idx_ws_in_wa[i]] = static_cast<std::int64_t>(i);

  // One decoder pass over both views, split back afterwards.
  Var x_ws = ad::concat_cols(f_ws.per_point, ad::gather_rows(f_wa.per_point, to_wa));
  Var x_wa = ad::concat_cols(f_wa.per_point, ad::gather_rows(f_ws.per_point, to_ws));
  Var logits = psi(ad::concat_rows(x_ws, x_wa), m);
  return {ad::slice_rows(logits, 0, n_ws), ad::slice_rows(logits, n_ws, n_ws + n_wa)};
}

Var metric_embed(const FeatureSet& f, const ModelVars& m) {
  const Tensor& w = m[ParamId::kMetricW].value();
  if (w.rank() != 2 || f.per_point.value().cols() != w.shape()[0]) {
    throw ShapeError("metric_embed: feature width does not match the metric head");
  }
  return ad::matmul(f.per_point, m[ParamId::kMetricW]);
}

Tensor infer_logits(const Scene& p, const Model& model) {
  Graph g;
  ModelVars m = bind(g, model, false);
  FeatureSet f = encode(g, p, m, ViewTag::kRaw);
  std::vector<std::size_t> identity(p.size());
  std::iota(identity.begin(), identity.end(), std::size_t{0});
  return decode_strong(f, f, m, identity).value();
}

std::vector<ClassId> argmax_rows(const Tensor& logits) {
  const std::size_t n = logits.rows(), c = logits.cols();
  std::vector<ClassId> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.ptr() + i * c;
    out[i] = static_cast<ClassId>(std::max_element(row, row + c) - row);
  }
  return out;
}

LabelArray infer(const Scene& p, const Model& model) {
  return LabelArray{argmax_rows(infer_logits(p, model)), model.config().classes};
}

}  // namespace lidarnl

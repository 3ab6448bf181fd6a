#ifndef LIDARNL_NETWORK_HPP_
#define LIDARNL_NETWORK_HPP_

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lidarnl/tensor.hpp"
#include "lidarnl/types.hpp"

namespace lidarnl {

struct NetworkConfig {
  int classes = 6;
  int hidden = 64;    // h: point MLP width and decoder hidden width
  int feature = 32;   // d: encoder output width
  int metric = 16;    // d': metric head width
  double voxel_size = 0.4;   // meters
  double coord_scale = 10.0;  // point MLP input is xyz / coord_scale

  void validate() const;
};

// Integer voxel coordinate floor(coord / voxel_size) per axis.
using VoxelKey = std::array<std::int64_t, 3>;

// Occupied voxels in ascending key order, so the voxel numbering does not
// depend on the input point order.
struct VoxelGrid {
  double voxel_size = 0.0;
  std::vector<VoxelKey> keys;
  std::vector<std::size_t> point_voxel;     // voxel index per input point
  std::vector<std::size_t> member_offsets;  // CSR over members, keys.size()+1
  std::vector<std::size_t> members;
  std::vector<std::size_t> neighbor_offsets;  // CSR over face neighbors
  std::vector<std::size_t> neighbors;

  std::size_t size() const { return keys.size(); }
  std::span<const std::size_t> members_of(std::size_t v) const;
};

VoxelGrid voxelize(const Scene& p, double voxel_size);

enum class ParamId : int {
  kMlp1W, kMlp1B, kMlp2W, kMlp2B,
  kMix1Self, kMix1Nbr, kMix1B,
  kMix2Self, kMix2Nbr, kMix2B,
  kDec1W, kDec1B, kDec2W, kDec2B,
  kMetricW,
  kCount
};

struct Parameter {
  std::string name;
  ad::Tensor value;
  bool is_bias = false;
};

// Encoder phi (point MLP + two neighbor-mix rounds), the decoder psi shared by
// both branches, and the metric head used by the weak path.
class Model {
 public:
  Model() = default;
  explicit Model(const NetworkConfig& cfg);  // all-zero weights

  // Uniform init in +-sqrt(1/fan_in), biases zero.
  static Model init(const NetworkConfig& cfg, std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }
  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(ParamId id) { return params_[static_cast<std::size_t>(id)]; }
  const Parameter& param(ParamId id) const { return params_[static_cast<std::size_t>(id)]; }
  // Throws ConfigError for unknown names.
  Parameter& param(const std::string& name);

  std::size_t parameter_count() const;
  bool all_finite() const;

  friend bool operator==(const Model& a, const Model& b);

 private:
  NetworkConfig cfg_;
  std::vector<Parameter> params_;
};

// Model parameters placed on a graph, as leaves (training) or constants.
struct ModelVars {
  std::vector<ad::Var> v;
  const NetworkConfig* cfg = nullptr;

  ad::Var operator[](ParamId id) const { return v[static_cast<std::size_t>(id)]; }
};

ModelVars bind(ad::Graph& g, const Model& model, bool trainable);

enum class ViewTag { kSs, kSa, kWs, kWa, kRaw };

struct FeatureSet {
  ad::Var per_point;  // [n, d]
  ad::Var per_voxel;  // [v, d]
  ViewTag tag = ViewTag::kRaw;
  VoxelGrid grid;

  std::size_t size() const { return per_point.value().rows(); }
};

// Throws EmptyScene on an empty scan.
FeatureSet encode(ad::Graph& g, const Scene& p, const ModelVars& m, ViewTag tag);

// Logits over the points of p_sa: psi(concat(F_sa, F_ss)), with a zero ss
// slot for points lost to row drop.
ad::Var decode_strong(const FeatureSet& f_ss, const FeatureSet& f_sa, const ModelVars& m,
                      std::span<const std::size_t> idx_ss_in_sa);

struct WeakLogits {
  ad::Var ws;  // [n_ws, C]
  ad::Var wa;  // [n_wa, C]
};

// Each view's own feature goes into the first slot, its partner's into the
// second (zero when the partner point was dropped).
WeakLogits decode_weak(const FeatureSet& f_ws, const FeatureSet& f_wa, const ModelVars& m,
                       std::span<const std::size_t> idx_ws_in_wa);

ad::Var metric_embed(const FeatureSet& f, const ModelVars& m);  // [n, d']

// Strong-branch logits of a raw scan: the scan fills both the ss and sa slots.
ad::Tensor infer_logits(const Scene& p, const Model& model);

// Argmax with ties broken towards the lowest class id.
std::vector<ClassId> argmax_rows(const ad::Tensor& logits);

LabelArray infer(const Scene& p, const Model& model);

}  // namespace lidarnl

#endif  // LIDARNL_NETWORK_HPP_

#include "lidarnl/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "lidarnl/errors.hpp"
#include "lidarnl/rng.hpp"
#include "lidarnl/scan_io.hpp"

namespace lidarnl {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

int parse_int(std::string_view s) {
  int v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

template <typename E>
E parse_enum(std::string_view s, std::initializer_list<E> values) {
  std::string options;
  for (E v : values) {
    if (to_string(v) == s) return v;
    options += (options.empty() ? "" : "|") + std::string(to_string(v));
  }
  throw ConfigError("expected one of " + options + ", got '" + std::string(s) + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define LIDARNL_DOUBLE(key, member)                                             \
  Field{key, [](const ExperimentConfig& c) { return fmt_double(c.member); },    \
        [](ExperimentConfig& c, std::string_view v) { c.member = parse_double(v); }}
#define LIDARNL_INT(key, member)                                                \
  Field{key, [](const ExperimentConfig& c) { return std::to_string(c.member); }, \
        [](ExperimentConfig& c, std::string_view v) { c.member = parse_int(v); }}
#define LIDARNL_BOOL(key, member)                                               \
  Field{key, [](const ExperimentConfig& c) { return fmt_bool(c.member); },      \
        [](ExperimentConfig& c, std::string_view v) { c.member = parse_bool(v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      LIDARNL_DOUBLE("train.lr0", train.lr0),
      LIDARNL_DOUBLE("train.momentum", train.momentum),
      LIDARNL_DOUBLE("train.weight_decay", train.weight_decay),
      LIDARNL_INT("train.batch_size", train.batch_size),
      LIDARNL_INT("train.epochs", train.epochs),
      LIDARNL_DOUBLE("train.clip_norm", train.clip_norm),
      Field{"train.candidate_source",
            [](const ExperimentConfig& c) { return std::string(to_string(c.train.candidate_source)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.train.candidate_source = parse_enum(
                  v, {CandidateMode::kStrong, CandidateMode::kWeak, CandidateMode::kAuto});
            }},
      Field{"train.eta",
            [](const ExperimentConfig& c) {
              return c.train.eta_declared ? fmt_double(*c.train.eta_declared) : std::string("none");
            },
            [](ExperimentConfig& c, std::string_view v) {
              if (v == "none") {
                c.train.eta_declared.reset();
              } else {
                c.train.eta_declared = parse_double(v);
              }
            }},
      LIDARNL_DOUBLE("train.tau", train.tau),
      Field{"train.objective",
            [](const ExperimentConfig& c) { return std::string(to_string(c.train.objective)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.train.objective = parse_enum(v, {Objective::kFull, Objective::kCe});
            }},
      Field{"train.class_weighting",
            [](const ExperimentConfig& c) { return std::string(to_string(c.train.class_weighting)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.train.class_weighting =
                  parse_enum(v, {ClassWeighting::kUniform, ClassWeighting::kInverseFrequency,
                                 ClassWeighting::kInverseSqrtFrequency});
            }},
      LIDARNL_INT("train.checkpoint_every", train.checkpoint_every),
      LIDARNL_INT("train.warmup_epochs", train.warmup_epochs),
      LIDARNL_DOUBLE("loss.alpha", loss.alpha),
      LIDARNL_DOUBLE("loss.beta", loss.beta),
      LIDARNL_DOUBLE("loss.mu", loss.mu),
      LIDARNL_DOUBLE("loss.nu", loss.nu),
      LIDARNL_DOUBLE("loss.lambda", loss.lambda),
      Field{"loss.scc_mode",
            [](const ExperimentConfig& c) { return std::string(to_string(c.scc_mode)); },
            [](ExperimentConfig& c, std::string_view v) {
              c.scc_mode = parse_enum(v, {SccMode::kClassGram, SccMode::kFeatureGram});
            }},
      LIDARNL_BOOL("augment.swap", augment.swap),
      LIDARNL_BOOL("augment.paste", augment.paste),
      LIDARNL_DOUBLE("augment.sigma", augment.sigma),
      LIDARNL_INT("augment.paste_angles", augment.paste_angles),
      Field{"augment.thing_classes",
            [](const ExperimentConfig& c) {
              std::string s;
              for (const auto& n : c.augment.thing_classes) s += (s.empty() ? "" : ",") + n;
              return s.empty() ? std::string("none") : s;
            },
            [](ExperimentConfig& c, std::string_view v) {
              c.augment.thing_classes.clear();
              if (v == "none") return;
              std::size_t start = 0;
              while (start <= v.size()) {
                const std::size_t comma = std::min(v.find(',', start), v.size());
                const std::string_view name = trim(v.substr(start, comma - start));
                if (name.empty()) throw ConfigError("empty name in augment.thing_classes");
                c.augment.thing_classes.emplace_back(name);
                start = comma + 1;
              }
            }},
      LIDARNL_BOOL("augment.weak_rotate", augment.weak_rotate),
      LIDARNL_INT("augment.grid_rows", augment.grid.rows),
      LIDARNL_INT("augment.grid_cols", augment.grid.cols),
      LIDARNL_DOUBLE("augment.fov_up_deg", augment.grid.fov_up_deg),
      LIDARNL_DOUBLE("augment.fov_down_deg", augment.grid.fov_down_deg),
      LIDARNL_INT("augment.drop_count", augment.drop_count),
      LIDARNL_INT("network.classes", network.classes),
      LIDARNL_INT("network.hidden", network.hidden),
      LIDARNL_INT("network.feature", network.feature),
      LIDARNL_INT("network.metric", network.metric),
      LIDARNL_DOUBLE("network.voxel_size", network.voxel_size),
      LIDARNL_DOUBLE("network.coord_scale", network.coord_scale),
  };
  return kFields;
}

#undef LIDARNL_DOUBLE
#undef LIDARNL_INT
#undef LIDARNL_BOOL

}  // namespace

std::string_view to_string(CandidateMode m) {
  switch (m) {
    case CandidateMode::kStrong: return "strong";
    case CandidateMode::kWeak: return "weak";
    case CandidateMode::kAuto: return "auto";
  }
  return "?";
}

std::string_view to_string(Objective o) { return o == Objective::kFull ? "full" : "ce"; }

std::string_view to_string(ClassWeighting w) {
  switch (w) {
    case ClassWeighting::kUniform: return "uniform";
    case ClassWeighting::kInverseFrequency: return "inv_freq";
    case ClassWeighting::kInverseSqrtFrequency: return "inv_sqrt_freq";
  }
  return "?";
}

std::string_view to_string(SccMode m) {
  return m == SccMode::kClassGram ? "class_gram" : "feature_gram";
}

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0)) throw ConfigError("train.lr0 must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
  if (eta_declared && !(*eta_declared >= 0.0 && *eta_declared <= 1.0)) {
    throw ConfigError("train.eta must lie in [0, 1]");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("train.tau must lie in [0, 1]");
  if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
  if (warmup_epochs < 0) throw ConfigError("train.warmup_epochs must be >= 0");
}

void AugmentConfig::validate() const {
  if (!(sigma >= 0.0 && sigma <= 2.0 * 3.141592653589793)) {
    throw ConfigError("augment.sigma must lie in [0, 2*pi]");
  }
  if (paste_angles < 0) throw ConfigError("augment.paste_angles must be >= 0");
  if (paste && !thing_classes.empty() && paste_angles < 1) {
    throw ConfigError("augment.paste needs augment.paste_angles >= 1");
  }
  grid.validate();
  if (drop_count < 0 || drop_count >= grid.rows) {
    throw ConfigError("augment.drop_count must lie in [0, grid_rows)");
  }
}

PolarMixConfig AugmentConfig::polarmix(const std::vector<std::string>& class_names) const {
  PolarMixConfig pm;
  pm.swap = swap;
  pm.paste = paste;
  pm.sigma = sigma;
  pm.paste_angles = paste_angles;
  pm.weak_rotate = weak_rotate;
  for (const std::string& name : thing_classes) {
    for (std::size_t k = 0; k < class_names.size(); ++k) {
      if (class_names[k] == name) pm.thing_classes.push_back(static_cast<ClassId>(k));
    }
  }
  return pm;
}

void ExperimentConfig::validate() const {
  train.validate();
  loss.validate();
  augment.validate();
  if (network.classes != 0) network.validate();
  NetworkConfig probe = network;
  probe.classes = 2;
  probe.validate();
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  std::map<std::string_view, const Field*> by_key;
  for (const Field& f : fields()) by_key[f.key] = &f;

  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    auto it = by_key.find(key);
    if (it == by_key.end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    }
    try {
      it->second->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + std::string(key) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  const std::vector<std::byte> bytes = read_file_bytes(path);
  return parse(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  for (const Field& f : fields()) os << f.key << " = " << f.get(*this) << '\n';
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_text()); }

}  // namespace lidarnl

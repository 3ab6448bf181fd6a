#include "lidarnl/report.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "lidarnl/errors.hpp"

namespace lidarnl {
namespace {

std::string pct(double fraction_or_percent, bool is_fraction) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2)
     << (is_fraction ? 100.0 * fraction_or_percent : fraction_or_percent);
  return os.str();
}

}  // namespace

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["provenance"] = {{"seed", report.provenance.seed},
                     {"eta", report.provenance.eta ? nlohmann::json(*report.provenance.eta)
                                                   : nlohmann::json(nullptr)},
                     {"config_hash", report.provenance.config_hash}};
  j["class_names"] = report.class_names;
  nlohmann::json ds = nlohmann::json::array();
  for (const DatasetResult& d : report.datasets) {
    nlohmann::json ious = nlohmann::json::array();
    for (std::size_t k = 0; k < d.iou.size(); ++k) {
      ious.push_back(d.iou[k] ? nlohmann::json(*d.iou[k]) : nlohmann::json(nullptr));
    }
    std::vector<bool> mask = d.present_mask;
    ds.push_back({{"name", d.name},
                  {"miou", d.miou},
                  {"iou", ious},
                  {"present_mask", mask},
                  {"confusion", {{"classes", d.cm.classes()}, {"counts", d.cm.counts()}}}});
  }
  j["datasets"] = ds;
  j["am"] = report.am;
  j["hm"] = report.hm ? nlohmann::json(*report.hm) : nlohmann::json(nullptr);
  return j;
}

MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    const auto& prov = j.at("provenance");
    r.provenance.seed = prov.at("seed").get<std::uint64_t>();
    if (!prov.at("eta").is_null()) r.provenance.eta = prov.at("eta").get<double>();
    r.provenance.config_hash = prov.at("config_hash").get<std::uint64_t>();
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    for (const auto& d : j.at("datasets")) {
      DatasetResult res;
      res.name = d.at("name").get<std::string>();
      res.miou = d.at("miou").get<double>();
      for (const auto& v : d.at("iou")) {
        res.iou.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
      }
      res.present_mask = d.at("present_mask").get<std::vector<bool>>();
      const auto& cj = d.at("confusion");
      res.cm = ConfusionMatrix(cj.at("classes").get<int>());
      const auto counts = cj.at("counts").get<std::vector<std::int64_t>>();
      if (counts.size() != res.cm.counts().size()) {
        throw ValueError("report: confusion counts have the wrong length");
      }
      for (int t = 0; t < res.cm.classes(); ++t) {
        for (int p = 0; p < res.cm.classes(); ++p) {
          res.cm.at(t, p) = counts[static_cast<std::size_t>(t) * res.cm.classes() + p];
        }
      }
      r.datasets.push_back(std::move(res));
    }
    r.am = j.at("am").get<double>();
    if (!j.at("hm").is_null()) r.hm = j.at("hm").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValueError(std::string("malformed report: ") + e.what());
  }
}

std::string report_to_table(const MetricsReport& report) {
  std::size_t name_w = 7;
  for (const DatasetResult& d : report.datasets) name_w = std::max(name_w, d.name.size());
  std::vector<std::size_t> col_w;
  for (const std::string& c : report.class_names) col_w.push_back(std::max<std::size_t>(6, c.size()));

  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_w)) << "dataset";
  for (std::size_t k = 0; k < col_w.size(); ++k) {
    os << "  " << std::right << std::setw(static_cast<int>(col_w[k])) << report.class_names[k];
  }
  os << "  " << std::setw(6) << "mIoU" << '\n';
  for (const DatasetResult& d : report.datasets) {
    os << std::left << std::setw(static_cast<int>(name_w)) << d.name;
    for (std::size_t k = 0; k < col_w.size(); ++k) {
      const bool shown = k < d.present_mask.size() && d.present_mask[k];
      std::string cell = "-";
      if (shown) cell = d.iou[k] ? pct(*d.iou[k], true) : "n/a";
      os << "  " << std::right << std::setw(static_cast<int>(col_w[k])) << cell;
    }
    os << "  " << std::setw(6) << pct(d.miou, false) << '\n';
  }
  os << "AM " << pct(report.am, false) << "  HM "
     << (report.hm ? pct(*report.hm, false) : std::string("undefined")) << '\n';
  os << "seed " << report.provenance.seed << "  eta "
     << (report.provenance.eta ? pct(*report.provenance.eta, false) : std::string("n/a"))
     << "  config " << std::hex << std::setw(16) << std::setfill('0')
     << report.provenance.config_hash << '\n';
  return os.str();
}

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "dataset,class,present,iou_percent\n";
  for (const DatasetResult& d : report.datasets) {
    for (std::size_t k = 0; k < report.class_names.size(); ++k) {
      const bool present = k < d.present_mask.size() && d.present_mask[k];
      os << d.name << ',' << report.class_names[k] << ',' << (present ? 1 : 0) << ',';
      if (present && d.iou[k]) os << pct(*d.iou[k], true);
      os << '\n';
    }
    os << d.name << ",mIoU,1," << pct(d.miou, false) << '\n';
  }
  return os.str();
}

}  // namespace lidarnl

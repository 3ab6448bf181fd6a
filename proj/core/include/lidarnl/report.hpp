#ifndef LIDARNL_REPORT_HPP_
#define LIDARNL_REPORT_HPP_

#include <string>

#include <nlohmann/json.hpp>

#include "lidarnl/eval.hpp"

namespace lidarnl {

// Object model: provenance, class_names, datasets[] (name, miou, per-class
// iou or null when absent, mask, confusion counts), am, hm (null when
// undefined). Doubles serialize losslessly, so report_from_json inverts it.
nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

// One row per dataset, one column per class, IoU in percent with two
// decimals; '-' marks classes absent from a dataset.
std::string report_to_table(const MetricsReport& report);

// dataset,class,present,iou_percent rows.
std::string report_to_csv(const MetricsReport& report);

}  // namespace lidarnl

#endif  // LIDARNL_REPORT_HPP_

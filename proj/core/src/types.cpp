#include "lidarnl/types.hpp"

#include <cmath>

#include "lidarnl/errors.hpp"

namespace lidarnl {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ValueError("point " + std::to_string(i) +
                       " has a non-finite coordinate");
    }
  }
  if (intensity && intensity->size() != points.size()) {
    throw LengthError("intensity length " + std::to_string(intensity->size()) +
                      " != point count " + std::to_string(points.size()));
  }
}

void LabelArray::validate() const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const ClassId l = labels[i];
    if (l != kIgnore && static_cast<int>(l) >= num_classes) {
      throw ValueError("label " + std::to_string(l) + " at index " +
                       std::to_string(i) + " is not below class count " +
                       std::to_string(num_classes));
    }
  }
}

void Scene::validate() const {
  cloud.validate();
  labels.validate();
  if (labels.size() != cloud.size() || instance_ids.size() != cloud.size()) {
    throw LengthError("scene sequences disagree: points=" +
                      std::to_string(cloud.size()) +
                      " labels=" + std::to_string(labels.size()) +
                      " instances=" + std::to_string(instance_ids.size()));
  }
}

void Scene::push_point_from(const Scene& other, std::size_t i) {
  cloud.points.push_back(other.cloud.points[i]);
  if (cloud.intensity) {
    cloud.intensity->push_back(other.cloud.intensity ? (*other.cloud.intensity)[i]
                                                     : 0.0F);
  }
  labels.labels.push_back(other.labels.labels[i]);
  instance_ids.push_back(other.instance_ids[i]);
}

Scene Scene::empty_like() const {
  Scene out;
  out.cloud.frame_id = cloud.frame_id;
  if (cloud.intensity) out.cloud.intensity.emplace();
  out.labels.num_classes = labels.num_classes;
  return out;
}

Scene Scene::subset(const std::vector<std::size_t>& indices) const {
  Scene out = empty_like();
  out.cloud.points.reserve(indices.size());
  out.labels.labels.reserve(indices.size());
  out.instance_ids.reserve(indices.size());
  for (std::size_t i : indices) out.push_point_from(*this, i);
  return out;
}

}  // namespace lidarnl

#ifndef LIDARNL_GRADCHECK_HPP_
#define LIDARNL_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lidarnl/tensor.hpp"

namespace lidarnl {

// Builds a scalar loss from leaves holding the given inputs.
using LossBuilder = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

// Central finite differences against backward(). Returns the norm-wise
// relative error ||g_fd - g_ad|| / max(||g_fd||, ||g_ad||, 1e-12) over all
// inputs concatenated.
double gradient_error(const LossBuilder& build, const std::vector<ad::Tensor>& inputs,
                      double h = 1e-5);

struct GradCheckCase {
  std::string name;
  int trials = 0;
  int failures = 0;
  double worst = 0.0;  // largest relative error seen
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<GradCheckCase> cases;

  bool passed() const;
  std::string to_text() const;
};

// Every loss term (weighted CE, SIFC, SCC, NL, candidate CE, penalty, FC,
// total) on `trials` random small instances derived from seed.
GradCheckReport run_gradcheck_suite(std::uint64_t seed, int trials = 50,
                                    double tolerance = 1e-4);

}  // namespace lidarnl

#endif  // LIDARNL_GRADCHECK_HPP_

#ifndef AREX_METRICS_HPP
#define AREX_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "arex/common.hpp"

namespace arex::metrics {

struct MetricReport {
  std::string name;
  double value = 0.0;
  size_t population = 0;
  uint64_t seed = 0;
  std::string tag;  // "offline" or "strategic"
};

double mse(const Vec& predictions, const Vec& outcomes);

// Mean squared error scaled by the magnitude of the mean base outcome, so
// regression errors across differently-scaled environments are comparable.
// Always nonnegative; throws when the mean base outcome is exactly zero.
double nmse(const Vec& predictions, const Vec& outcomes, const Vec& base_outcomes);

// Mean binary cross-entropy of probabilities against {0,1} labels.
double bce(const Vec& probabilities, const Vec& labels);

struct F1Result {
  double value = 0.0;
  bool degenerate = false;  // no positives predicted and none present
};

F1Result f1_binary(const std::vector<int>& predictions, const std::vector<int>& labels);

// Fraction of agents whose response equals the recommendation exactly.
// Exact comparison is sound because take-it-or-leave-it responses return
// one of the two candidate vectors bit-for-bit.
double compliance_rate(const std::vector<Vec>& responses,
                       const std::vector<Vec>& recommendations);

void write_metric_table(const std::string& path, const std::vector<MetricReport>& rows);

}  // namespace arex::metrics

#endif

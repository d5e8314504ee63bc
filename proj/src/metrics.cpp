#include "arex/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace arex::metrics {

namespace {

void require_same_length(size_t a, size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                     " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

double mse(const Vec& predictions, const Vec& outcomes) {
  require_same_length(predictions.size(), outcomes.size(), "mse");
  if (predictions.empty()) throw DomainError("mse: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - outcomes[i];
    acc += d * d;
  }
  return acc / static_cast<double>(predictions.size());
}

double nmse(const Vec& predictions, const Vec& outcomes, const Vec& base_outcomes) {
  require_same_length(predictions.size(), outcomes.size(), "nmse");
  if (base_outcomes.empty()) throw DomainError("nmse: empty normalization sample");
  double nc = 0.0;
  for (double v : base_outcomes) nc += v;
  nc /= static_cast<double>(base_outcomes.size());
  if (nc == 0.0 || !std::isfinite(nc)) {
    throw NumericError("nmse: mean base outcome is zero or non-finite; "
                       "normalization undefined");
  }
  // Divide by the magnitude so the result stays a nonnegative error score even
  // when the outcome scale happens to center below zero; comparisons between
  // methods sharing a normalization sample are unaffected.
  return mse(predictions, outcomes) / std::fabs(nc);
}

double bce(const Vec& probabilities, const Vec& labels) {
  require_same_length(probabilities.size(), labels.size(), "bce");
  if (probabilities.empty()) throw DomainError("bce: empty input");
  constexpr double eps = 1e-12;
  double acc = 0.0;
  for (size_t i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], eps, 1.0 - eps);
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw DomainError("bce: labels must be 0 or 1");
    acc -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(probabilities.size());
}

F1Result f1_binary(const std::vector<int>& predictions, const std::vector<int>& labels) {
  require_same_length(predictions.size(), labels.size(), "f1_binary");
  if (predictions.empty()) throw DomainError("f1_binary: empty input");
  long tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const int p = predictions[i];
    const int y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) {
      throw DomainError("f1_binary: entries must be 0 or 1");
    }
    if (p == 1 && y == 1) ++tp;
    else if (p == 1 && y == 0) ++fp;
    else if (p == 0 && y == 1) ++fn;
  }
  F1Result r;
  if (tp == 0) {
    // Covers both the degenerate all-negative case and plain total misses.
    r.value = 0.0;
    r.degenerate = (fp == 0 && fn == 0);
    return r;
  }
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.value = 2.0 * precision * recall / (precision + recall);
  return r;
}

double compliance_rate(const std::vector<Vec>& responses,
                       const std::vector<Vec>& recommendations) {
  require_same_length(responses.size(), recommendations.size(), "compliance_rate");
  if (responses.empty()) throw DomainError("compliance_rate: empty input");
  size_t hits = 0;
  for (size_t i = 0; i < responses.size(); ++i) {
    if (responses[i] == recommendations[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(responses.size());
}

void write_metric_table(const std::string& path, const std::vector<MetricReport>& rows) {
  FILE* fp = std::fopen(path.c_str(), "w");
  if (!fp) throw Error("write_metric_table: cannot open " + path);
  std::fprintf(fp, "name\tvalue\tpopulation\tseed\ttag\n");
  for (const auto& r : rows) {
    if (r.tag != "offline" && r.tag != "strategic") {
      std::fclose(fp);
      throw ConfigError("write_metric_table: tag must be offline or strategic, got '" +
                        r.tag + "'");
    }
    std::fprintf(fp, "%s\t%.17g\t%zu\t%llu\t%s\n", r.name.c_str(), r.value, r.population,
                 static_cast<unsigned long long>(r.seed), r.tag.c_str());
  }
  std::fclose(fp);
}

}  // namespace arex::metrics

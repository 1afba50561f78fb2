#pragma once

#include <map>
#include <string>
#include <vector>

#include "ivfuse/image.hpp"

namespace ivfuse {

// The six fusion-quality metrics computed from (fused, ir, vis) triples.
// All are pure functions of the pixel data. Degenerate cases (constant
// images, zero gradients) return 0 so corpus runs never abort.

double metric_cc(const GrayImage& fused, const GrayImage& ir,
                 const GrayImage& vis);
double metric_en(const GrayImage& fused);
double metric_qabf(const GrayImage& fused, const GrayImage& ir,
                   const GrayImage& vis);
double metric_qcv(const GrayImage& fused, const GrayImage& ir,
                  const GrayImage& vis);
double metric_scd(const GrayImage& fused, const GrayImage& ir,
                  const GrayImage& vis);
double metric_ssim(const GrayImage& fused, const GrayImage& ir,
                   const GrayImage& vis);

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"cc",  "en",  "qabf",
                                                 "qcv", "scd", "ssim"};
  return names;
}

struct MetricsRow {
  std::string file;
  std::map<std::string, double> values;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;            // one per matched triple, sorted
  std::map<std::string, double> mean;
  std::map<std::string, double> stddev;    // population standard deviation
  std::vector<std::string> unmatched;      // names missing from some dir
};

std::map<std::string, double> evaluate_triple(const GrayImage& fused,
                                              const GrayImage& ir,
                                              const GrayImage& vis);

// Matches identical filenames across the three directories. Unmatched
// names are recorded and skipped. `jobs` > 1 evaluates triples in a worker
// pool; row order stays the sorted filename order regardless.
MetricsReport evaluate_corpus(const std::string& fused_dir,
                              const std::string& ir_dir,
                              const std::string& vis_dir, int jobs = 1);

std::string report_to_csv(const MetricsReport& report);
std::string report_to_table(const MetricsReport& report);

}  // namespace ivfuse

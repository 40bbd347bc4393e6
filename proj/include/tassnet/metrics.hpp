#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tassnet/volume.hpp"

namespace tassnet {

struct BinaryMask {
  Index3 shape{0, 0, 0};
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(Index3 shape, std::vector<std::uint8_t> data);
  static BinaryMask of_class(const LabelMap& l, int class_id);
  std::size_t count() const;
  bool empty() const { return count() == 0; }
};

/// Raised by distance metrics when either mask is empty.
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// 2|P and G| / (|P| + |G|); 1 when both are empty, 0 when exactly one is.
double dsc(const BinaryMask& pred, const BinaryMask& gt);

/// Mask voxels with at least one 6-neighbour outside the mask or outside the grid.
std::vector<Index3> surface_voxels(const BinaryMask& m);

/// Pooled nearest-surface distances in both directions, in physical units.
std::vector<double> surface_distances(const BinaryMask& pred, const BinaryMask& gt,
                                      const Spacing& spacing);

double asd(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing);
double hd95(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing);

/// Linear interpolation between order statistics at rank q (n - 1).
double percentile_linear(std::vector<double> values, double q);

struct StructureMetrics {
  int class_id = 0;
  std::string name;
  double dsc = 0.0;
  std::optional<double> asd;
  std::optional<double> hd95;
};

struct CaseMetrics {
  std::string case_id;
  std::vector<StructureMetrics> rows;
};

/// Row order of the report: RA wall, LA wall, RA cavity, LA cavity.
std::vector<int> report_class_order();

/// Both maps must share a grid and use the fine scheme.
CaseMetrics evaluate_case(const LabelMap& pred, const LabelMap& gt, const std::string& case_id = "");

struct AggregateRow {
  int class_id = 0;
  std::string name;
  double dsc_mean = 0.0;
  std::optional<double> asd_mean;
  std::optional<double> hd95_mean;
  int cases = 0;
  int asd_undefined = 0;
  int hd95_undefined = 0;
};

struct MetricsReport {
  std::vector<CaseMetrics> cases;
  std::vector<AggregateRow> rows;

  const AggregateRow& row(int class_id) const;
  /// Table-style text: one line per method row, structures as column groups.
  std::string format_table(bool paper_reference = false) const;
  /// Per-case rows followed by `mean` rows; undefined values are left empty.
  void write_csv(const std::filesystem::path& path) const;
};

MetricsReport aggregate_report(const std::vector<CaseMetrics>& cases);

}  // namespace tassnet

#include "tassnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include "tassnet/distance_transform.hpp"

namespace tassnet {

BinaryMask::BinaryMask(Index3 s, std::vector<std::uint8_t> d) : shape(s), data(std::move(d)) {
  if (data.size() != static_cast<std::size_t>(shape[0] * shape[1] * shape[2]))
    throw std::invalid_argument("mask data does not match its shape");
}

BinaryMask BinaryMask::of_class(const LabelMap& l, int class_id) {
  const auto src = l.labels();
  std::vector<std::uint8_t> d(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) d[i] = src[i] == class_id;
  return BinaryMask(l.shape(), std::move(d));
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](auto v) { return v != 0; }));
}

namespace {

void check_same(const BinaryMask& a, const BinaryMask& b) {
  if (a.shape != b.shape) throw std::invalid_argument("masks differ in shape");
}

std::vector<std::uint8_t> surface_mask(const BinaryMask& m) {
  const auto& s = m.shape;
  std::vector<std::uint8_t> out(m.data.size(), 0);
  auto in = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    return x >= 0 && y >= 0 && z >= 0 && x < s[0] && y < s[1] && z < s[2] &&
           m.data[static_cast<std::size_t>(x + s[0] * (y + s[1] * z))] != 0;
  };
#pragma omp parallel for schedule(static)
  for (std::int64_t z = 0; z < s[2]; ++z)
    for (std::int64_t y = 0; y < s[1]; ++y)
      for (std::int64_t x = 0; x < s[0]; ++x) {
        if (!in(x, y, z)) continue;
        if (!in(x - 1, y, z) || !in(x + 1, y, z) || !in(x, y - 1, z) || !in(x, y + 1, z) ||
            !in(x, y, z - 1) || !in(x, y, z + 1))
          out[static_cast<std::size_t>(x + s[0] * (y + s[1] * z))] = 1;
      }
  return out;
}

void directed(const std::vector<std::uint8_t>& from, const std::vector<double>& dist2,
              std::vector<double>& out) {
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i]) out.push_back(std::sqrt(dist2[i]));
}

}  // namespace

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
  check_same(pred, gt);
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p == 0 && g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<Index3> surface_voxels(const BinaryMask& m) {
  const auto s = surface_mask(m);
  std::vector<Index3> out;
  for (std::int64_t z = 0; z < m.shape[2]; ++z)
    for (std::int64_t y = 0; y < m.shape[1]; ++y)
      for (std::int64_t x = 0; x < m.shape[0]; ++x)
        if (s[static_cast<std::size_t>(x + m.shape[0] * (y + m.shape[1] * z))]) out.push_back({x, y, z});
  return out;
}

std::vector<double> surface_distances(const BinaryMask& pred, const BinaryMask& gt,
                                      const Spacing& spacing) {
  check_same(pred, gt);
  if (pred.empty() || gt.empty())
    throw UndefinedMetric("surface distance is undefined for an empty mask");
  const auto sp = surface_mask(pred);
  const auto sg = surface_mask(gt);
  std::vector<double> out;
  directed(sp, squared_distance_transform(sg, gt.shape, spacing), out);
  directed(sg, squared_distance_transform(sp, pred.shape, spacing), out);
  return out;
}

double asd(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing) {
  auto d = surface_distances(pred, gt, spacing);
  // summing in sorted order makes the result independent of argument order
  std::sort(d.begin(), d.end());
  return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

double hd95(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing) {
  return percentile_linear(surface_distances(pred, gt, spacing), 0.95);
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile rank must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  if (frac == 0.0) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<int> report_class_order() {
  return {fine_class::ra_wall, fine_class::la_wall, fine_class::ra_cavity, fine_class::la_cavity};
}

CaseMetrics evaluate_case(const LabelMap& pred, const LabelMap& gt, const std::string& case_id) {
  if (!pred.geometry().same_grid(gt.geometry()))
    throw std::invalid_argument("prediction and ground truth are not on the same grid");
  if (pred.scheme() != ClassScheme::fine() || gt.scheme() != ClassScheme::fine())
    throw std::invalid_argument("evaluation needs the fine class scheme");
  CaseMetrics c{case_id, {}};
  for (int k : report_class_order()) {
    const auto p = BinaryMask::of_class(pred, k);
    const auto g = BinaryMask::of_class(gt, k);
    StructureMetrics m{k, gt.scheme().name(k), dsc(p, g), std::nullopt, std::nullopt};
    if (!p.empty() && !g.empty()) {
      auto d = surface_distances(p, g, gt.spacing());
      std::sort(d.begin(), d.end());
      m.asd = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
      m.hd95 = percentile_linear(d, 0.95);
    }
    c.rows.push_back(std::move(m));
  }
  return c;
}

MetricsReport aggregate_report(const std::vector<CaseMetrics>& cases) {
  if (cases.empty()) throw std::invalid_argument("no cases to aggregate");
  MetricsReport r{cases, {}};
  const auto& first = cases.front().rows;
  for (std::size_t i = 0; i < first.size(); ++i) {
    AggregateRow a;
    a.class_id = first[i].class_id;
    a.name = first[i].name;
    double ds = 0.0, as = 0.0, hs = 0.0;
    int an = 0, hn = 0;
    for (const auto& c : cases) {
      if (c.rows.size() != first.size() || c.rows[i].class_id != a.class_id)
        throw std::invalid_argument("case '" + c.case_id + "' has a different row layout");
      const auto& m = c.rows[i];
      ds += m.dsc;
      if (m.asd) as += *m.asd, ++an;
      else ++a.asd_undefined;
      if (m.hd95) hs += *m.hd95, ++hn;
      else ++a.hd95_undefined;
    }
    a.cases = static_cast<int>(cases.size());
    a.dsc_mean = ds / a.cases;
    if (an) a.asd_mean = as / an;
    if (hn) a.hd95_mean = hs / hn;
    r.rows.push_back(std::move(a));
  }
  return r;
}

const AggregateRow& MetricsReport::row(int class_id) const {
  for (const auto& r : rows)
    if (r.class_id == class_id) return r;
  throw std::out_of_range("no report row for class " + std::to_string(class_id));
}

namespace {

std::string cell(const std::optional<double>& v, int width = 8) {
  char buf[32];
  if (v) std::snprintf(buf, sizeof(buf), "%*.3f", width, *v);
  else std::snprintf(buf, sizeof(buf), "%*s", width, "n/a");
  return buf;
}

std::string display_name(const std::string& n) {
  // "LA wall" -> "LA Wall"
  std::string s = n;
  const auto sp = s.find(' ');
  if (sp != std::string::npos && sp + 1 < s.size()) s[sp + 1] = static_cast<char>(std::toupper(s[sp + 1]));
  return s;
}

}  // namespace

std::string MetricsReport::format_table(bool paper_reference) const {
  std::ostringstream out;
  const int label_w = 18;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-*s", label_w, "");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "| %-26s", display_name(r.name).c_str());
    out << buf;
  }
  out << "\n";
  std::snprintf(buf, sizeof(buf), "%-*s", label_w, "Method");
  out << buf;
  for (std::size_t i = 0; i < rows.size(); ++i) out << "|      DSC  ASD(mm) HD95(mm) ";
  out << "\n" << std::string(label_w + rows.size() * 28, '-') << "\n";
  auto line = [&](const std::string& label, auto values) {
    std::snprintf(buf, sizeof(buf), "%-*s", label_w, label.c_str());
    out << buf;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto [d, a, h] = values(i);
      out << "| " << cell(d) << " " << cell(a) << " " << cell(h) << " ";
    }
    out << "\n";
  };
  line("This run (mean)", [&](std::size_t i) {
    return std::tuple{std::optional<double>(rows[i].dsc_mean), rows[i].asd_mean, rows[i].hd95_mean};
  });
  if (paper_reference) {
    // reference ensemble values keyed by class id
    auto ref = [](int k) -> std::tuple<double, double, double> {
      switch (k) {
        case fine_class::ra_wall: return {0.753, 0.564, 2.159};
        case fine_class::la_wall: return {0.620, 0.739, 3.080};
        case fine_class::ra_cavity: return {0.921, 0.713, 2.655};
        case fine_class::la_cavity: return {0.924, 0.702, 2.684};
        default: return {NAN, NAN, NAN};
      }
    };
    line("TASSNet Ens. ref", [&](std::size_t i) {
      const auto [d, a, h] = ref(rows[i].class_id);
      return std::tuple{std::optional<double>(d), std::optional<double>(a), std::optional<double>(h)};
    });
  }
  out << "cases: " << (rows.empty() ? 0 : rows.front().cases);
  for (const auto& r : rows)
    if (r.asd_undefined || r.hd95_undefined)
      out << "; " << display_name(r.name) << " undefined distances in " << r.asd_undefined << " case(s)";
  out << "\n";
  return out.str();
}

void MetricsReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.precision(17);
  auto opt = [&](const std::optional<double>& v) {
    if (v) out << *v;
  };
  out << "case,structure,dsc,asd_mm,hd95_mm,undefined_count\n";
  for (const auto& c : cases)
    for (const auto& m : c.rows) {
      out << c.case_id << ',' << m.name << ',' << m.dsc << ',';
      opt(m.asd);
      out << ',';
      opt(m.hd95);
      out << ",\n";
    }
  for (const auto& r : rows) {
    out << "mean," << r.name << ',' << r.dsc_mean << ',';
    opt(r.asd_mean);
    out << ',';
    opt(r.hd95_mean);
    out << ',' << r.asd_undefined << '\n';
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace tassnet

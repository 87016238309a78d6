#include "ddlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "ddlab/analysis.hpp"
#include "ddlab/probes.hpp"
#include "ddlab/checkpoint.hpp"
#include "ddlab/error.hpp"
#include "ddlab/text_io.hpp"
#include "ddlab/trainer.hpp"

namespace ddlab {

namespace {

namespace fs = std::filesystem;

std::string num(double v) { return format_fixed(v, 2); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

const char* kSplitColors[] = {"#1f77b4", "#d62728", "#ff7f0e", "#2ca02c"};
const char* kPhaseFill[] = {"#f2f2f2", "#e3eefa", "#fbeede", "#e8f5e1"};

// Sequential palette, dark for the first layer and light for the last.
std::string layer_color(std::size_t index, std::size_t count) {
  const double t = count > 1 ? static_cast<double>(index) / static_cast<double>(count - 1) : 0.0;
  const int r = static_cast<int>(std::lround(8 + t * (158 - 8)));
  const int g = static_cast<int>(std::lround(48 + t * (202 - 48)));
  const int b = static_cast<int>(std::lround(107 + t * (225 - 107)));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

struct Series {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;
  std::vector<double> errors;  // optional, same length as points
  bool dashed = false;
};

struct Panel {
  double x = 0, y = 0, w = 400, h = 300;
  std::string title, xlabel, ylabel;
  bool log_x = true;
  bool integer_x = false;  // one tick per integer, for class axes
  double xmin = 1, xmax = 10, ymin = 0, ymax = 1;
};

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}

  void raw(const std::string& s) { body_ += s; }
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& extra = "") {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
             "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"" + extra + "/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0, bool dashed = false) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
             "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) +
             "\"" + (dashed ? " stroke-dasharray=\"6,4\"" : "") + "/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "middle",
            int size = 12, const std::string& extra = "") {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
             std::to_string(size) + "\" text-anchor=\"" + anchor + "\"" + extra + ">" +
             escape(s) + "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                bool dashed) {
    if (pts.empty()) return;
    body_ += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.8\"" +
             (dashed ? std::string(" stroke-dasharray=\"6,4\"") : std::string()) + " points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      body_ += (i ? " " : "") + num(pts[i].first) + "," + num(pts[i].second);
    body_ += "\"/>\n";
  }
  std::string finish() const {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
           "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) + "\" height=\"" +
           num(h_) + "\" viewBox=\"0 0 " + num(w_) + " " + num(h_) +
           "\" font-family=\"Helvetica, Arial, sans-serif\">\n"
           "<rect x=\"0\" y=\"0\" width=\"" + num(w_) + "\" height=\"" + num(h_) +
           "\" fill=\"#ffffff\"/>\n" + body_ + "</svg>\n";
  }

 private:
  double w_, h_;
  std::string body_;
};

class Axes {
 public:
  explicit Axes(const Panel& p) : p_(p) {
    if (p_.log_x) p_.xmin = std::max(p_.xmin, 1.0);
    if (!(p_.xmax > p_.xmin)) p_.xmax = p_.xmin * (p_.log_x ? 10.0 : 1.0) + (p_.log_x ? 0.0 : 1.0);
    if (!(p_.ymax > p_.ymin)) p_.ymax = p_.ymin + 1.0;
  }
  double left() const { return p_.x + 60; }
  double right() const { return p_.x + p_.w - 15; }
  double top() const { return p_.y + 30; }
  double bottom() const { return p_.y + p_.h - 45; }

  double sx(double x) const {
    const double t = p_.log_x ? (std::log10(x) - std::log10(p_.xmin)) /
                                    (std::log10(p_.xmax) - std::log10(p_.xmin))
                              : (x - p_.xmin) / (p_.xmax - p_.xmin);
    return left() + t * (right() - left());
  }
  double sy(double y) const {
    const double t = (std::clamp(y, p_.ymin, p_.ymax) - p_.ymin) / (p_.ymax - p_.ymin);
    return bottom() - t * (bottom() - top());
  }

  void shade_phases(Svg& svg, const std::optional<PhaseAnnotation>& phases) const {
    if (!phases || phases->boundaries.empty()) return;
    std::vector<double> edges{p_.xmin};
    for (auto b : phases->boundaries)
      edges.push_back(std::clamp(static_cast<double>(b), p_.xmin, p_.xmax));
    edges.push_back(p_.xmax);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      svg.rect(sx(edges[i]), top(), sx(edges[i + 1]) - sx(edges[i]), bottom() - top(),
               kPhaseFill[i % 4]);
    for (std::size_t i = 1; i + 1 < edges.size(); ++i)
      svg.line(sx(edges[i]), top(), sx(edges[i]), bottom(), "#555555", 1.0, true);
  }

  void frame(Svg& svg) const {
    svg.rect(left(), top(), right() - left(), bottom() - top(), "none",
             " stroke=\"#333333\" stroke-width=\"1\"");
    svg.text((left() + right()) / 2, p_.y + 18, p_.title, "middle", 13, " font-weight=\"bold\"");
    svg.text((left() + right()) / 2, bottom() + 36, p_.xlabel);
    const double cy = (top() + bottom()) / 2;
    svg.text(p_.x + 16, cy, p_.ylabel, "middle", 12,
             " transform=\"rotate(-90 " + num(p_.x + 16) + " " + num(cy) + ")\"");
    if (p_.log_x) {
      for (double d = 1; d <= p_.xmax * 1.0000001; d *= 10) {
        if (d < p_.xmin) continue;
        svg.line(sx(d), bottom(), sx(d), bottom() + 5, "#333333");
        const int exponent = static_cast<int>(std::lround(std::log10(d)));
        svg.text(sx(d), bottom() + 18, "1e" + std::to_string(exponent), "middle", 10);
      }
    } else if (p_.integer_x) {
      for (long long i = std::llround(std::ceil(p_.xmin)); static_cast<double>(i) <= p_.xmax; ++i) {
        const double v = static_cast<double>(i);
        svg.line(sx(v), bottom(), sx(v), bottom() + 5, "#333333");
        svg.text(sx(v), bottom() + 18, std::to_string(i), "middle", 10);
      }
    } else {
      for (int i = 0; i <= 4; ++i) {
        const double v = p_.xmin + (p_.xmax - p_.xmin) * i / 4.0;
        svg.line(sx(v), bottom(), sx(v), bottom() + 5, "#333333");
        svg.text(sx(v), bottom() + 18, format_fixed(v, 0), "middle", 10);
      }
    }
    for (int i = 0; i <= 4; ++i) {
      const double v = p_.ymin + (p_.ymax - p_.ymin) * i / 4.0;
      svg.line(left() - 5, sy(v), left(), sy(v), "#333333");
      svg.text(left() - 8, sy(v) + 4, format_fixed(v, 2), "end", 10);
    }
  }

  void series(Svg& svg, const Series& s) const {
    std::vector<std::pair<double, double>> pts;
    for (const auto& [x, y] : s.points) pts.emplace_back(sx(x), sy(y));
    svg.polyline(pts, s.color, s.dashed);
    for (std::size_t i = 0; i < s.errors.size() && i < s.points.size(); ++i) {
      const auto [x, y] = s.points[i];
      svg.line(sx(x), sy(y - s.errors[i]), sx(x), sy(y + s.errors[i]), s.color, 1.0);
    }
  }

  void legend(Svg& svg, const std::vector<Series>& all) const {
    double y = top() + 14;
    for (const auto& s : all) {
      svg.line(right() - 120, y - 4, right() - 100, y - 4, s.color, 2.0, s.dashed);
      svg.text(right() - 95, y, s.label, "start", 10);
      y += 14;
    }
  }

 private:
  Panel p_;
};

void range_of(const std::vector<Series>& all, double& lo, double& hi, bool with_errors) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& s : all)
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const double e = with_errors && i < s.errors.size() ? s.errors[i] : 0.0;
      lo = std::min(lo, s.points[i].second - e);
      hi = std::max(hi, s.points[i].second + e);
    }
}

std::string render_metrics(const ReportInputs& in) {
  double xmax = 1;
  for (const auto& r : in.metrics) xmax = std::max(xmax, static_cast<double>(r.epoch));
  Svg svg(960, 380);
  for (int panel = 0; panel < 2; ++panel) {
    std::vector<Series> all;
    for (std::size_t k = 0; k < kAllSplits.size(); ++k) {
      Series s{to_string(kAllSplits[k]), kSplitColors[k], {}, {}, false};
      for (const auto& r : in.metrics) {
        if (r.split != kAllSplits[k] || !r.loss) continue;
        s.points.emplace_back(static_cast<double>(r.epoch), panel == 0 ? *r.loss : *r.accuracy);
      }
      all.push_back(std::move(s));
    }
    double lo = 0, hi = 1;
    if (panel == 0) {
      range_of(all, lo, hi, false);
      lo = 0;
      hi = std::isfinite(hi) ? hi * 1.05 : 1.0;
    }
    Panel p{panel * 480.0, 0, 480, 380, panel == 0 ? "Loss" : "Accuracy", "epoch",
            panel == 0 ? "cross-entropy" : "accuracy", true, false, 1, xmax, lo, hi};
    Axes ax(p);
    ax.shade_phases(svg, in.phases);
    for (const auto& s : all) ax.series(svg, s);
    ax.frame(svg);
    ax.legend(svg, all);
  }
  return svg.finish();
}

std::map<std::string, std::string> render_similarity(const ReportInputs& in,
                                                     std::uint64_t xmax_epoch) {
  const CsvTable& t = in.similarity;
  const std::size_t c_epoch = t.column("epoch"), c_layer = t.column("layer"),
                    c_pair = t.column("pair"), c_mean = t.column("mean"), c_std = t.column("std");
  std::vector<std::string> pairs;
  std::set<std::size_t> layers;
  for (const auto& row : t.rows) {
    if (std::find(pairs.begin(), pairs.end(), row[c_pair]) == pairs.end())
      pairs.push_back(row[c_pair]);
    layers.insert(static_cast<std::size_t>(parse_unsigned(row[c_layer])));
  }
  std::map<std::string, std::string> out;
  for (const auto& pair : pairs) {
    std::vector<Series> all;
    std::size_t index = 0;
    for (std::size_t layer : layers) {
      Series s{"layer " + std::to_string(layer), layer_color(index++, layers.size()), {}, {}, false};
      for (const auto& row : t.rows) {
        if (row[c_pair] != pair || parse_unsigned(row[c_layer]) != layer || row[c_mean].empty())
          continue;
        s.points.emplace_back(static_cast<double>(parse_unsigned(row[c_epoch])),
                              parse_real(row[c_mean]));
        s.errors.push_back(parse_real(row[c_std]));
      }
      all.push_back(std::move(s));
    }
    double lo, hi;
    range_of(all, lo, hi, true);
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    lo = std::max(0.0, std::floor(lo * 20.0) / 20.0);
    hi = 1.0;
    Svg svg(560, 400);
    Axes ax(Panel{0, 0, 560, 400, "Cosine similarity: " + pair, "epoch", "CS", true, false, 1,
                  static_cast<double>(xmax_epoch), lo, hi});
    ax.shade_phases(svg, in.phases);
    for (const auto& s : all) ax.series(svg, s);
    ax.frame(svg);
    ax.legend(svg, all);
    out["similarity_" + pair + ".svg"] = svg.finish();
  }
  return out;
}

std::string render_large_activation(const ReportInputs& in, std::uint64_t xmax_epoch) {
  const CsvTable& t = in.large_activation;
  const std::size_t c_epoch = t.column("epoch"), c_layer = t.column("layer"),
                    c_ratio = t.column("ratio"), c_neuron = t.column("neuron");
  std::set<std::size_t> layers;
  for (const auto& row : t.rows) layers.insert(static_cast<std::size_t>(parse_unsigned(row[c_layer])));
  std::vector<Series> all;
  std::size_t index = 0;
  double hi = kLargeActivationThreshold;
  for (std::size_t layer : layers) {
    Series s{"", layer_color(index++, layers.size()), {}, {}, false};
    std::string neuron;
    double max_ratio = 0.0;
    for (const auto& row : t.rows) {
      if (parse_unsigned(row[c_layer]) != layer || row[c_ratio].empty()) continue;
      const double r = parse_real(row[c_ratio]);
      s.points.emplace_back(static_cast<double>(parse_unsigned(row[c_epoch])), r);
      max_ratio = std::max(max_ratio, r);
      neuron = row[c_neuron];
    }
    s.dashed = !(max_ratio > kLargeActivationThreshold);
    s.label = "layer " + std::to_string(layer) + " (neuron " + neuron + ")";
    hi = std::max(hi, max_ratio);
    all.push_back(std::move(s));
  }
  Svg svg(560, 400);
  Axes ax(Panel{0, 0, 560, 400, "Max-activation ratio r_t", "epoch", "ratio", true, false, 1,
                static_cast<double>(xmax_epoch), 0.0, hi * 1.1});
  ax.shade_phases(svg, in.phases);
  svg.line(ax.left(), ax.sy(kLargeActivationThreshold), ax.right(),
           ax.sy(kLargeActivationThreshold), "#d62728", 1.2, true);
  for (const auto& s : all) ax.series(svg, s);
  ax.frame(svg);
  ax.legend(svg, all);
  return svg.finish();
}

std::map<std::string, std::string> render_per_class(const ReportInputs& in) {
  const CsvTable& t = in.per_class_magnitude;
  const std::size_t c_layer = t.column("layer"), c_group = t.column("group"),
                    c_mode = t.column("mode"), c_class = t.column("class"),
                    c_mean = t.column("mean"), c_std = t.column("std"),
                    c_ref = t.column("noisy_reference"), c_neuron = t.column("neuron");
  std::set<std::size_t> layers;
  std::size_t n_classes = 0;
  for (const auto& row : t.rows) {
    layers.insert(static_cast<std::size_t>(parse_unsigned(row[c_layer])));
    n_classes = std::max(n_classes, static_cast<std::size_t>(parse_unsigned(row[c_class])) + 1);
  }
  const char* group_colors[] = {"#2ca02c", "#7f7f7f", "#d62728"};
  const std::vector<std::string> all_groups = {"clean_train", "test", "noisy_train"};

  std::map<std::string, std::string> out;
  for (std::size_t layer : layers) {
    std::string neuron;
    std::optional<double> reference;
    double hi = 0.0;
    for (const auto& row : t.rows) {
      if (parse_unsigned(row[c_layer]) != layer) continue;
      neuron = row[c_neuron];
      if (!row[c_ref].empty()) reference = parse_real(row[c_ref]);
      hi = std::max(hi, parse_real(row[c_mean]) + parse_real(row[c_std]));
    }
    if (reference) hi = std::max(hi, *reference);
    hi = hi > 0.0 ? hi * 1.1 : 1.0;

    Svg svg(960, 720);
    const char* letters[] = {"A", "B", "C", "D"};
    for (int panel = 0; panel < 4; ++panel) {
      const std::string mode = panel % 2 == 0 ? "input_based" : "label_based";
      const std::vector<std::string> groups =
          panel < 2 ? std::vector<std::string>{"noisy_train"} : all_groups;
      Panel p{(panel % 2) * 480.0, (panel / 2) * 360.0, 480, 360,
              std::string(letters[panel]) + ": layer " + std::to_string(layer) + ", neuron " +
                  neuron + ", " + mode,
              "class", "activation", false, true, -0.5, static_cast<double>(n_classes) - 0.5, 0.0, hi};
      Axes ax(p);
      const double slot = (ax.sx(1.0) - ax.sx(0.0)) * 0.8 / static_cast<double>(groups.size());
      for (std::size_t g = 0; g < groups.size(); ++g) {
        const auto gi = std::find(all_groups.begin(), all_groups.end(), groups[g]) - all_groups.begin();
        for (const auto& row : t.rows) {
          if (parse_unsigned(row[c_layer]) != layer || row[c_mode] != mode ||
              row[c_group] != groups[g])
            continue;
          const double c = static_cast<double>(parse_unsigned(row[c_class]));
          const double mean = parse_real(row[c_mean]), sd = parse_real(row[c_std]);
          const double x0 = ax.sx(c) - slot * static_cast<double>(groups.size()) / 2.0 +
                            slot * static_cast<double>(g);
          svg.rect(x0, ax.sy(mean), slot * 0.9, ax.sy(0.0) - ax.sy(mean), group_colors[gi]);
          svg.line(x0 + slot * 0.45, ax.sy(mean - sd), x0 + slot * 0.45, ax.sy(mean + sd),
                   "#000000", 1.0);
        }
      }
      if (reference)
        svg.line(ax.left(), ax.sy(*reference), ax.right(), ax.sy(*reference), "#d62728", 1.2, true);
      ax.frame(svg);
      double ly = ax.top() + 14;
      for (const auto& g : groups) {
        const auto gi = std::find(all_groups.begin(), all_groups.end(), g) - all_groups.begin();
        svg.rect(ax.right() - 110, ly - 9, 10, 10, group_colors[gi]);
        svg.text(ax.right() - 95, ly, g, "start", 10);
        ly += 14;
      }
    }
    out["per_class_magnitude_layer" + std::to_string(layer) + ".svg"] = svg.finish();
  }
  return out;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("CSV column '" + name + "' missing");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv_table(const std::string& text, const std::string& what) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(what + ": empty file", 1);
  ++line_no;
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != t.header.size())
      throw ParseError(what + ": expected " + std::to_string(t.header.size()) + " fields", line_no);
    t.rows.push_back(std::move(fields));
  }
  return t;
}

std::map<std::string, std::string> render_report(const ReportInputs& inputs) {
  if (inputs.metrics.empty()) throw std::invalid_argument("metrics history is empty");
  if (inputs.similarity.rows.empty()) throw std::invalid_argument("similarity table is empty");
  if (inputs.large_activation.rows.empty())
    throw std::invalid_argument("large-activation table is empty");
  if (inputs.per_class_magnitude.rows.empty())
    throw std::invalid_argument("per-class magnitude table is empty");
  std::uint64_t xmax = 1;
  for (const auto& r : inputs.metrics) xmax = std::max(xmax, r.epoch);

  std::map<std::string, std::string> figures;
  try {
    figures["loss_accuracy.svg"] = render_metrics(inputs);
    figures.merge(render_similarity(inputs, xmax));
    figures["large_activation.svg"] = render_large_activation(inputs, xmax);
    figures.merge(render_per_class(inputs));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("report inputs are inconsistent: ") + e.what());
  }
  return figures;
}

void run_report(const fs::path& run_dir) {
  auto need = [&](const char* name) {
    const fs::path p = run_dir / name;
    if (!fs::exists(p)) throw IoError("missing input " + p.string());
    return read_text_file(p.string());
  };
  ReportInputs in;
  in.metrics = parse_metrics_csv(need(run_files::kMetrics));
  in.similarity = parse_csv_table(need(analysis_files::kSimilarity), analysis_files::kSimilarity);
  in.large_activation =
      parse_csv_table(need(analysis_files::kLargeActivation), analysis_files::kLargeActivation);
  in.per_class_magnitude = parse_csv_table(need(analysis_files::kPerClassMagnitude),
                                           analysis_files::kPerClassMagnitude);
  if (fs::exists(run_dir / run_files::kPhases))
    in.phases = parse_phases_json(read_text_file((run_dir / run_files::kPhases).string()));

  const auto figures = render_report(in);
  const fs::path dir = run_dir / "figures";
  fs::create_directories(dir);
  for (const auto& [name, svg] : figures) write_file_atomic(dir / name, svg);
}

}  // namespace ddlab

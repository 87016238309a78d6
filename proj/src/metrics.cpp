#include "ddlab/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ddlab/checkpoint.hpp"
#include "ddlab/error.hpp"
#include "ddlab/text_io.hpp"
#include "json.hpp"

namespace ddlab {

const char* to_string(Split split) {
  switch (split) {
    case Split::clean_train: return "clean_train";
    case Split::noisy_train_noisy: return "noisy_train_noisy";
    case Split::noisy_train_clean: return "noisy_train_clean";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  for (Split s : kAllSplits)
    if (text == to_string(s)) return s;
  throw std::invalid_argument("unknown split '" + text + "'");
}

MetricRecord SplitAccumulator::finish(std::uint64_t epoch, Split split) const {
  MetricRecord rec{epoch, split, std::nullopt, std::nullopt, n_};
  if (n_ > 0) {
    rec.loss = loss_sum_ / static_cast<double>(n_);
    rec.accuracy = static_cast<double>(correct_) / static_cast<double>(n_);
  }
  return rec;
}

void for_each_chunk(const NetworkState& state, std::span<const Sample> samples,
                    const ChunkVisitor& visit, std::size_t chunk_size) {
  for (std::size_t start = 0; start < samples.size(); start += chunk_size) {
    const auto chunk = samples.subspan(start, std::min(chunk_size, samples.size() - start));
    visit(forward(state, pixel_matrix(chunk)), chunk);
  }
}

void SplitEvaluator::add_train(const ForwardTrace& trace, std::span<const Sample> chunk) {
  std::vector<int> assigned(chunk.size()), original(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    assigned[i] = chunk[i].assigned_label;
    original[i] = chunk[i].original_label;
  }
  const auto pred = predictions(trace);
  const auto loss_assigned = sample_losses(trace, assigned);
  const auto loss_original = sample_losses(trace, original);
  for (std::size_t i = 0; i < chunk.size(); ++i) {
    const bool hit_assigned = pred[i] == assigned[i];
    train_total_.add(loss_assigned[i], hit_assigned);
    if (chunk[i].is_noisy) {
      noisy_noisy_.add(loss_assigned[i], hit_assigned);
      noisy_clean_.add(loss_original[i], pred[i] == original[i]);
    } else {
      clean_.add(loss_assigned[i], hit_assigned);
    }
  }
}

void SplitEvaluator::add_test(const ForwardTrace& trace, std::span<const Sample> chunk) {
  std::vector<int> labels(chunk.size());
  for (std::size_t i = 0; i < chunk.size(); ++i) labels[i] = chunk[i].original_label;
  const auto pred = predictions(trace);
  const auto losses = sample_losses(trace, labels);
  for (std::size_t i = 0; i < chunk.size(); ++i) test_.add(losses[i], pred[i] == labels[i]);
}

std::array<MetricRecord, 4> SplitEvaluator::finish(std::uint64_t epoch) const {
  return {clean_.finish(epoch, Split::clean_train),
          noisy_noisy_.finish(epoch, Split::noisy_train_noisy),
          noisy_clean_.finish(epoch, Split::noisy_train_clean),
          test_.finish(epoch, Split::test)};
}

std::array<MetricRecord, 4> evaluate_all_splits(const NetworkState& state,
                                                const DatasetBundle& bundle,
                                                std::uint64_t epoch) {
  SplitEvaluator eval;
  for_each_chunk(state, bundle.train,
                 [&](const ForwardTrace& t, std::span<const Sample> c) { eval.add_train(t, c); });
  for_each_chunk(state, bundle.test,
                 [&](const ForwardTrace& t, std::span<const Sample> c) { eval.add_test(t, c); });
  return eval.finish(epoch);
}

double full_train_loss(const NetworkState& state, const DatasetBundle& bundle) {
  double sum = 0.0;
  for_each_chunk(state, bundle.train, [&](const ForwardTrace& t, std::span<const Sample> c) {
    std::vector<int> labels;
    for (const Sample& s : c) labels.push_back(s.assigned_label);
    for (double l : sample_losses(t, labels)) sum += l;
  });
  return bundle.train.empty() ? 0.0 : sum / static_cast<double>(bundle.train.size());
}

bool EpochSchedule::contains(std::uint64_t epoch) const {
  return std::binary_search(points.begin(), points.end(), epoch);
}

EpochSchedule build_schedule(std::uint64_t max_epoch) {
  if (max_epoch == 0) throw std::invalid_argument("build_schedule: max_epoch must be >= 1");
  EpochSchedule schedule{max_epoch, {}};
  for (std::uint64_t scale = 1; scale <= max_epoch; scale *= 10) {
    for (std::uint64_t n = 1; n <= 9; ++n) {
      if (n * scale > max_epoch) break;
      schedule.points.push_back(n * scale);
    }
    if (scale > max_epoch / 10) break;
  }
  if (schedule.points.back() != max_epoch) schedule.points.push_back(max_epoch);
  return schedule;
}

namespace {

std::vector<std::string> phase_labels(std::size_t boundaries) {
  if (boundaries == 0) return {"all"};
  std::vector<std::string> labels{"initial"};
  if (boundaries == 2) labels.push_back("middle");
  if (boundaries > 2)
    for (std::size_t i = 1; i < boundaries; ++i) labels.push_back("middle_" + std::to_string(i));
  labels.push_back("final");
  return labels;
}

}  // namespace

PhaseAnnotation annotate_phases(std::span<const MetricRecord> history, PhaseMode mode,
                                std::span<const std::uint64_t> configured,
                                std::size_t n_classes) {
  std::uint64_t max_epoch = 0;
  for (const auto& r : history) max_epoch = std::max(max_epoch, r.epoch);

  PhaseAnnotation out;
  out.mode = mode;
  if (mode == PhaseMode::config) {
    for (std::size_t i = 0; i < configured.size(); ++i) {
      if (configured[i] < 1 || (max_epoch > 0 && configured[i] > max_epoch) ||
          (i > 0 && configured[i] <= configured[i - 1]))
        throw std::invalid_argument(
            "phase boundaries must be strictly increasing within [1, max_epoch]");
    }
    out.boundaries.assign(configured.begin(), configured.end());
    out.labels = phase_labels(out.boundaries.size());
    return out;
  }

  struct Point {
    std::uint64_t epoch;
    std::optional<double> noisy_acc, test_loss;
  };
  std::vector<Point> points;
  for (const auto& r : history) {
    auto it = std::find_if(points.begin(), points.end(),
                           [&](const Point& p) { return p.epoch == r.epoch; });
    if (it == points.end()) it = points.insert(points.end(), Point{r.epoch, {}, {}});
    if (r.split == Split::noisy_train_noisy) it->noisy_acc = r.accuracy;
    if (r.split == Split::test) it->test_loss = r.loss;
  }
  std::sort(points.begin(), points.end(),
            [](const Point& a, const Point& b) { return a.epoch < b.epoch; });
  if (points.size() < 10)
    throw std::invalid_argument("annotate_phases: heuristic mode needs >= 10 probed epochs, got " +
                                std::to_string(points.size()));

  const double threshold = 2.0 / static_cast<double>(n_classes);
  std::size_t first = points.size();
  for (std::size_t i = 0; i < points.size(); ++i)
    if (points[i].noisy_acc && *points[i].noisy_acc > threshold) {
      first = i;
      break;
    }
  if (first < points.size()) {
    out.boundaries.push_back(points[first].epoch);
    // The peak must be a rise above the loss at boundary 1; a loss that only
    // falls has no bump to mark.
    std::size_t peak = points.size();
    for (std::size_t i = first; i < points.size(); ++i)
      if (points[i].test_loss && (peak == points.size() || *points[i].test_loss > *points[peak].test_loss))
        peak = i;
    if (peak < points.size() && peak != first) {
      const double limit = 0.95 * *points[peak].test_loss;
      for (std::size_t i = peak + 1; i < points.size(); ++i)
        if (points[i].test_loss && *points[i].test_loss <= limit) {
          out.boundaries.push_back(points[peak].epoch);
          break;
        }
    }
  }
  out.labels = phase_labels(out.boundaries.size());
  return out;
}

std::string phases_json(const PhaseAnnotation& phases) {
  nlohmann::ordered_json j;
  j["boundaries"] = phases.boundaries;
  j["labels"] = phases.labels;
  j["mode"] = phases.mode == PhaseMode::config ? "config" : "heuristic";
  return j.dump(2) + "\n";
}

PhaseAnnotation parse_phases_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    PhaseAnnotation out;
    out.boundaries = j.at("boundaries").get<std::vector<std::uint64_t>>();
    out.labels = j.at("labels").get<std::vector<std::string>>();
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "config" && mode != "heuristic") throw ParseError("phases: unknown mode " + mode);
    out.mode = mode == "config" ? PhaseMode::config : PhaseMode::heuristic;
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("phases: ") + e.what());
  }
}

std::string format_metrics_csv(std::span<const MetricRecord> history) {
  std::string out = "epoch,split,loss,accuracy,n\n";
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + ',' + to_string(r.split) + ',';
    if (r.loss) out += format_real(*r.loss);
    out += ',';
    if (r.accuracy) out += format_real(*r.accuracy);
    out += ',' + std::to_string(r.n) + '\n';
  }
  return out;
}

std::vector<MetricRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != "epoch,split,loss,accuracy,n")
    throw ParseError("metrics: missing or wrong header", 1);
  ++line_no;
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw ParseError("metrics: expected 5 fields", line_no);
    try {
      MetricRecord r;
      r.epoch = parse_unsigned(f[0]);
      r.split = parse_split(f[1]);
      if (!f[2].empty()) r.loss = parse_real(f[2]);
      if (!f[3].empty()) r.accuracy = parse_real(f[3]);
      r.n = parse_unsigned(f[4]);
      if ((r.n == 0) != !r.loss.has_value() || r.loss.has_value() != r.accuracy.has_value())
        throw std::invalid_argument("loss/accuracy must be present exactly when n > 0");
      out.push_back(r);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("metrics: ") + e.what(), line_no);
    }
  }
  return out;
}

void save_metrics(std::span<const MetricRecord> history, const std::filesystem::path& file) {
  write_file_atomic(file, format_metrics_csv(history));
}

std::vector<MetricRecord> load_metrics(const std::filesystem::path& file) {
  return parse_metrics_csv(read_text_file(file.string()));
}

}  // namespace ddlab

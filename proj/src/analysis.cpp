#include "ddlab/analysis.hpp"

#include <algorithm>
#include <array>

#include "ddlab/checkpoint.hpp"
#include "ddlab/error.hpp"
#include "ddlab/probes.hpp"
#include "ddlab/text_io.hpp"
#include "ddlab/trainer.hpp"

namespace ddlab {

namespace {

std::string similarity_table(std::span<const ProbeSnapshot> snapshots, std::size_t n_classes) {
  std::string out = "epoch,layer,pair,status,mean,std,n_included,excluded";
  for (std::size_t c = 0; c < n_classes; ++c) out += ",cs_" + std::to_string(c);
  out += '\n';
  for (const ProbeSnapshot& snap : snapshots) {
    for (const SimilarityPair& pair : standard_similarity_pairs()) {
      for (std::size_t layer : snap.probed_layers()) {
        out += std::to_string(snap.epoch()) + ',' + std::to_string(layer) + ',' + pair.name + ',';
        SimilarityRecord rec;
        try {
          rec = layer_similarity(snap, layer, pair);
        } catch (const UndefinedSimilarityError&) {
          out += "undefined,,,0," + std::string(n_classes, ',') + '\n';
          continue;
        }
        std::string excluded;
        for (int c : rec.excluded_classes)
          excluded += (excluded.empty() ? "" : ";") + std::to_string(c);
        out += rec.mean ? "ok," + format_real(*rec.mean) + ',' + format_real(rec.std_across_classes)
                        : std::string("empty,,");
        out += ',' + std::to_string(n_classes - rec.excluded_classes.size()) + ',' + excluded;
        for (std::size_t c = 0; c < n_classes; ++c) {
          out += ',';
          if (c < rec.per_class.size() && rec.per_class[c]) out += format_real(*rec.per_class[c]);
        }
        out += '\n';
      }
    }
  }
  return out;
}

}  // namespace

AnalysisTables analyze_snapshots(std::span<const ProbeSnapshot> snapshots) {
  if (snapshots.size() < 2)
    throw std::invalid_argument("analysis needs probe accumulators for at least 2 epochs, found " +
                                std::to_string(snapshots.size()));
  std::vector<ProbeSnapshot> ordered(snapshots.begin(), snapshots.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const ProbeSnapshot& a, const ProbeSnapshot& b) { return a.epoch() < b.epoch(); });
  const ProbeSnapshot& final = ordered.back();
  for (const auto& s : ordered)
    if (s.layer_dims() != final.layer_dims() || s.n_classes() != final.n_classes() ||
        s.probed_layers() != final.probed_layers())
      throw std::invalid_argument("snapshots disagree on network shape or probed layers");

  AnalysisTables tables;
  tables.similarity_csv = similarity_table(ordered, final.n_classes());

  std::string la = "epoch,layer,neuron,m,a_max,rms_rest,ratio,is_large,status\n";
  std::string pc = "epoch,layer,neuron,group,mode,class,n,mean,std,noisy_reference\n";
  for (std::size_t layer : final.probed_layers()) {
    const std::size_t tracked = track_final_epoch_neuron(ordered, layer);
    for (const ProbeSnapshot& snap : ordered) {
      const auto means = training_neuron_means(snap, layer);
      la += std::to_string(snap.epoch()) + ',' + std::to_string(layer) + ',' +
            std::to_string(tracked) + ',' + std::to_string(means.size()) + ',';
      try {
        const auto rec = large_activation_ratio(means, tracked);
        la += format_real(rec.a_max) + ',' + format_real(rec.rms_rest) + ',' +
              format_real(rec.ratio) + ',' + (rec.is_large ? "1" : "0") + ",ok\n";
      } catch (const UndefinedRatioError&) {
        la += format_real(means[tracked]) + ",,,0,undefined\n";
      } catch (const std::invalid_argument&) {
        la += format_real(means[tracked]) + ",,,0,single_neuron\n";
      }
    }
    const std::array<ProbeGroup, 3> groups = {ProbeGroup::clean_train, ProbeGroup::noisy_train,
                                              ProbeGroup::test};
    for (GroupMode mode : {GroupMode::input_based, GroupMode::label_based}) {
      const auto mags = per_class_large_activation(final, layer, tracked, mode, groups);
      const std::string ref = mags.noisy_reference ? format_real(*mags.noisy_reference) : "";
      for (const auto& e : mags.entries)
        pc += std::to_string(final.epoch()) + ',' + std::to_string(layer) + ',' +
              std::to_string(tracked) + ',' + to_string(e.group) + ',' + to_string(e.mode) + ',' +
              std::to_string(e.class_id) + ',' + std::to_string(e.n) + ',' + format_real(e.mean) +
              ',' + format_real(e.std) + ',' + ref + '\n';
    }
  }
  tables.large_activation_csv = std::move(la);
  tables.per_class_magnitude_csv = std::move(pc);
  return tables;
}

void run_analysis(const std::filesystem::path& run_dir) {
  const auto probes = run_dir / run_files::kProbes;
  if (!std::filesystem::is_directory(probes))
    throw IoError("missing probe accumulators: " + probes.string());
  const auto snapshots = read_snapshots(probes);
  const AnalysisTables tables = analyze_snapshots(snapshots);
  write_file_atomic(run_dir / analysis_files::kSimilarity, tables.similarity_csv);
  write_file_atomic(run_dir / analysis_files::kLargeActivation, tables.large_activation_csv);
  write_file_atomic(run_dir / analysis_files::kPerClassMagnitude, tables.per_class_magnitude_csv);
}

}  // namespace ddlab

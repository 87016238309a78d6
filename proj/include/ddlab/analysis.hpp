#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "ddlab/snapshot.hpp"

namespace ddlab {

struct AnalysisTables {
  std::string similarity_csv;
  std::string large_activation_csv;
  std::string per_class_magnitude_csv;
};

// similarity.csv
//   epoch,layer,pair,status,mean,std,n_included,excluded,cs_0..cs_{K-1}
//   one row per epoch x probed layer x standard pair; status is ok, empty
//   (no class on both sides) or undefined (a zero-norm class mean);
//   excluded lists classes joined by ';'.
// large_activation.csv
//   epoch,layer,neuron,m,a_max,rms_rest,ratio,is_large,status
//   the neuron is fixed per layer from the final epoch.
// per_class_magnitude.csv
//   epoch,layer,neuron,group,mode,class,n,mean,std,noisy_reference
//   final epoch only; groups clean_train, noisy_train, test; both modes.

/// Needs at least two snapshots (std::invalid_argument otherwise).
AnalysisTables analyze_snapshots(std::span<const ProbeSnapshot> snapshots);

/// The analyze command: reads <run>/probes, writes the three CSVs into <run>.
void run_analysis(const std::filesystem::path& run_dir);

namespace analysis_files {
inline constexpr const char* kSimilarity = "similarity.csv";
inline constexpr const char* kLargeActivation = "large_activation.csv";
inline constexpr const char* kPerClassMagnitude = "per_class_magnitude.csv";
}  // namespace analysis_files

}  // namespace ddlab

#include "ddlab/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>

#include "ddlab/error.hpp"
#include "ddlab/text_io.hpp"

namespace ddlab {

namespace fs = std::filesystem;

DatasetBundle prepare_dataset(const RunConfig& config) {
  DatasetBundle bundle;
  if (config.dataset.kind == DatasetConfig::Kind::synthetic) {
    bundle = make_synthetic(config.dataset.synthetic);
  } else {
    bundle = load_cifar10(config.dataset.path);
  }
  if (config.dataset.train_limit > 0 && config.dataset.train_limit < bundle.train.size())
    bundle.train.resize(config.dataset.train_limit);
  if (config.dataset.test_limit > 0 && config.dataset.test_limit < bundle.test.size())
    bundle.test.resize(config.dataset.test_limit);
  if (!config.noise_mask.empty()) {
    bundle = apply_noise_mask(std::move(bundle), config.noise_mask);
    bundle.noise_probability = config.noise_probability;
    bundle.noise_seed = config.noise_seed;
    return bundle;
  }
  return inject_label_noise(std::move(bundle), config.noise_probability, config.noise_seed);
}

Trainer::Trainer(const RunConfig& config, const DatasetBundle& bundle)
    : config_(config),
      bundle_(bundle),
      state_(init_network(config.network_spec(bundle.input_dim(), bundle.n_classes))),
      shuffle_rng_(config.shuffle_seed) {
  config_.optim.validate();
  if (bundle_.train.empty()) throw std::invalid_argument("training set is empty");
}

Trainer::Trainer(const RunConfig& config, const DatasetBundle& bundle, const RunCheckpoint& resume)
    : Trainer(config, bundle) {
  if (resume.network.spec != state_.spec)
    throw std::invalid_argument("checkpoint network does not match the configuration");
  state_ = resume.network;
  shuffle_rng_.restore(resume.shuffle_rng_state);
  epoch_ = resume.epoch;
}

void Trainer::train_epoch() {
  const std::size_t n = bundle_.train.size();
  const std::size_t dim = bundle_.input_dim();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng_.shuffle(std::span(order));
  const std::uint64_t epoch = epoch_ + 1;

  const std::size_t batch_size = config_.optim.batch_size;
  std::vector<int> labels;
  for (std::size_t start = 0, batch_no = 1; start < n; start += batch_size, ++batch_no) {
    const std::size_t rows = std::min(batch_size, n - start);
    Matrix batch(rows, dim);
    labels.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const Sample& s = bundle_.train[order[start + r]];
      std::copy(s.pixels.begin(), s.pixels.end(), batch.row(r).begin());
      labels[r] = s.assigned_label;
    }
    const ForwardTrace trace = forward(state_, batch);
    const auto where = " at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_no);
    for (double l : sample_losses(trace, labels))
      if (!std::isfinite(l)) throw NonFiniteError("non-finite loss" + where);
    try {
      adam_step(state_, backward(state_, trace, labels), config_.optim);
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(e.what() + where);
    }
  }
  epoch_ = epoch;
}

EpochProbe Trainer::probe() const {
  std::vector<std::size_t> dims(state_.spec.hidden_dims);
  EpochProbe out{{}, ProbeSnapshot(epoch_, dims, bundle_.n_classes, config_.probe_layers), 0.0, 0};
  SplitEvaluator eval;
  for_each_chunk(state_, bundle_.train, [&](const ForwardTrace& trace, std::span<const Sample> chunk) {
    eval.add_train(trace, chunk);
    for (std::size_t i = 0; i < chunk.size(); ++i)
      out.snapshot.add_row(trace, i, chunk[i],
                           chunk[i].is_noisy ? ProbeGroup::noisy_train : ProbeGroup::clean_train);
  });
  for_each_chunk(state_, bundle_.test, [&](const ForwardTrace& trace, std::span<const Sample> chunk) {
    eval.add_test(trace, chunk);
    const auto pred = predictions(trace);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.snapshot.add_row(trace, i, chunk[i], ProbeGroup::test);
      out.snapshot.add_row(trace, i, chunk[i],
                           pred[i] == chunk[i].original_label ? ProbeGroup::test_correct
                                                              : ProbeGroup::test_incorrect);
    }
  });
  out.metrics = eval.finish(epoch_);
  out.n_train = eval.train_count();
  out.train_loss = eval.train_loss_sum() / static_cast<double>(out.n_train);
  return out;
}

RunCheckpoint Trainer::checkpoint() const {
  return RunCheckpoint{state_, epoch_, shuffle_rng_.state()};
}

void run_training(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir / run_files::kProbes);

  const std::string config_text = run_config_json(config);
  const fs::path ckpt_path = dir / run_files::kCheckpoint;
  const bool resuming = fs::exists(ckpt_path);
  if (resuming) {
    if (!fs::exists(dir / run_files::kConfig) ||
        read_text_file((dir / run_files::kConfig).string()) != config_text)
      throw std::invalid_argument("run directory " + dir.string() +
                                  " holds a run with a different configuration");
  }

  const DatasetBundle bundle = prepare_dataset(config);
  std::vector<MetricRecord> history;
  std::optional<Trainer> trainer;
  if (resuming) {
    const RunCheckpoint ckpt = load_run_checkpoint(ckpt_path);
    trainer.emplace(config, bundle, ckpt);
    if (fs::exists(dir / run_files::kMetrics)) history = load_metrics(dir / run_files::kMetrics);
    std::erase_if(history, [&](const MetricRecord& r) { return r.epoch > ckpt.epoch; });
  } else {
    write_file_atomic(dir / run_files::kConfig, config_text);
    write_file_atomic(dir / run_files::kDataset, bundle_metadata_json(bundle));
    write_noise_mask(bundle, dir / run_files::kNoiseMask);
    trainer.emplace(config, bundle);
  }

  const EpochSchedule schedule = build_schedule(config.max_epoch);
  std::uint64_t stop = config.max_epoch;
  if (options.stop_after > 0) {
    stop = 0;
    for (std::uint64_t p : schedule.points)
      if (p <= options.stop_after) stop = p;
  }

  while (trainer->epoch() < stop) {
    trainer->train_epoch();
    if (!schedule.contains(trainer->epoch())) continue;
    const EpochProbe probe = trainer->probe();
    write_snapshot(probe.snapshot, dir / run_files::kProbes);
    history.insert(history.end(), probe.metrics.begin(), probe.metrics.end());
    save_metrics(history, dir / run_files::kMetrics);
    save_run_checkpoint(trainer->checkpoint(), ckpt_path);
    if (options.log) {
      *options.log << "epoch " << trainer->epoch();
      for (const auto& m : probe.metrics)
        if (m.accuracy) *options.log << "  " << to_string(m.split) << " " << format_fixed(*m.accuracy, 4);
      *options.log << std::endl;
    }
    if (options.on_probe) options.on_probe(*trainer, probe);
  }

  if (trainer->epoch() == config.max_epoch) {
    save_network(trainer->state(), dir / run_files::kFinalNetwork);
    const PhaseAnnotation phases =
        annotate_phases(history, config.phase_mode, config.phase_boundaries, bundle.n_classes);
    write_file_atomic(dir / run_files::kPhases, phases_json(phases));
  }
}

}  // namespace ddlab

#include "eegrel/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace eegrel {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be a positive number");
  if (contig_len < 2) throw ConfigError("contig_len must be >= 2");
}

void SplitSpec::validate() const {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("split.train_frac must lie in (0, 1)");
  if (repeats < 1) throw ConfigError("split.repeats must be >= 1");
}

PatientSplit split_patients(std::span<const std::uint8_t> patient_targets, const SplitSpec& spec,
                            std::size_t repeat_index) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, "split", repeat_index));
  PatientSplit split;
  for (std::uint8_t cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < patient_targets.size(); ++i) {
      if (patient_targets[i] == cls) members.push_back(i);
    }
    if (members.size() < 2) {
      throw DataError(std::string("split_patients: class '") + (cls ? "condition" : "control") + "' has " +
                      std::to_string(members.size()) + " patient(s); at least 2 are required");
    }
    const double exact = (1.0 - spec.train_frac) * static_cast<double>(members.size());
    auto n_test = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    std::shuffle(members.begin(), members.end(), rng);
    split.test.insert(split.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.insert(split.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

TrainHistory train(Model& model, const SampleSet& samples, const TrainConfig& config) {
  config.validate();
  if (samples.size() == 0) throw TrainingError("train: empty training set");
  if (samples.sample_shape != model.input_shape()) {
    throw ShapeError("train: samples have shape " + shape_str(samples.sample_shape) + ", model expects " +
                     shape_str(model.input_shape()));
  }
  const auto positives = static_cast<std::size_t>(std::count(samples.y.begin(), samples.y.end(), 1));
  if (positives == 0 || positives == samples.size()) throw TrainingError("train: training set has a single class");

  std::mt19937_64 rng(derive_seed(config.seed, "shuffle"));
  AdamState adam;
  adam.lr = config.lr;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor x = samples.batch(idx);
      model.zero_grad();
      const Tensor logits = model.forward(x);
      Tensor dlogits(logits.shape());
      const double inv_b = 1.0 / static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const BceResult r = bce_loss(logits[i], samples.y[idx[i]]);
        loss_sum += r.loss;
        dlogits[i] = r.dlogit * inv_b;
      }
      model.backward(dlogits);
      adam_step(model.parameters(), adam);
    }
    const double mean_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss)) {
      throw TrainingError("train: loss became non-finite in epoch " + std::to_string(epoch + 1));
    }
    history.epoch_loss.push_back(mean_loss);
  }
  model.round_to_storage_precision();
  return history;
}

TrainedSplit run_split_with_model(const PreparedCohort& cohort, const ModelConfig& model_config,
                                  const TrainConfig& config, const SplitSpec& spec, std::size_t repeat_index) {
  config.validate();
  const Domain domain = domain_for(architecture_of(model_config));
  if (config.domain != domain) {
    throw ConfigError(std::string(architecture_name(architecture_of(model_config))) + " models need " +
                      std::string(domain_name(domain)) + "-domain input");
  }
  if (cohort.domain != domain) {
    throw DataError("cohort holds " + std::string(domain_name(cohort.domain)) + "-domain samples, model needs " +
                    std::string(domain_name(domain)));
  }
  if (cohort.contig_len != config.contig_len) {
    throw DataError("cohort was segmented with contig_len " + std::to_string(cohort.contig_len) +
                    ", config asks for " + std::to_string(config.contig_len));
  }

  SplitRun run;
  run.repeat = repeat_index;
  run.split = split_patients(cohort.patient_targets(), spec, repeat_index);
  run.norm = fit_cohort_norm(cohort, run.split.train, config.norm);

  TrainConfig repeat_config = config;
  repeat_config.seed = derive_seed(config.seed, "repeat", repeat_index);
  SampleSet train_set = build_samples(cohort, run.split.train, run.norm);
  if (config.balance) {
    train_set = train_set.subset(balance_indices(train_set.y, derive_seed(repeat_config.seed, "balance")));
  }
  ModelOptions options;
  options.seed = derive_seed(repeat_config.seed, "init");
  Model model(model_config, cohort.sample_shape(), options);
  run.history = train(model, train_set, repeat_config);
  train_set = {};

  run.predictions = predict(model, build_samples(cohort, run.split.test, run.norm));
  run.report = evaluate(run.predictions);
  return {std::move(run), std::move(model)};
}

SplitRun run_split(const PreparedCohort& cohort, const ModelConfig& model, const TrainConfig& config,
                   const SplitSpec& spec, std::size_t repeat_index) {
  return run_split_with_model(cohort, model, config, spec, repeat_index).run;
}

GridResult grid_search(const PreparedCohort& cohort, std::span<const GridCell> space, const SplitSpec& spec,
                       std::size_t n_splits) {
  return grid_search([&cohort](Domain) -> const PreparedCohort& { return cohort; }, space, spec, n_splits);
}

GridResult grid_search(const CohortProvider& cohorts, std::span<const GridCell> space, const SplitSpec& spec,
                       std::size_t n_splits) {
  if (space.empty()) throw ConfigError("grid_search: empty search space");
  if (n_splits < 1) throw ConfigError("grid_search: need at least one split");
  GridResult result;
  for (const auto& cell : space) {
    GridCellResult r;
    r.id = cell.id;
    try {
      const PreparedCohort& cohort = cohorts(domain_for(architecture_of(cell.model)));
      for (std::size_t s = 0; s < n_splits; ++s) {
        r.splits.push_back(run_split(cohort, cell.model, cell.train, spec, s).report);
      }
      for (const auto& rep : r.splits) {
        r.mean_patient_recall += rep.patient.recall_macro;
        r.mean_contig_recall += rep.contig.recall_macro;
      }
      r.mean_patient_recall /= static_cast<double>(n_splits);
      r.mean_contig_recall /= static_cast<double>(n_splits);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      r.splits.clear();
      r.mean_patient_recall = r.mean_contig_recall = 0.0;
    }
    result.cells.push_back(std::move(r));
  }
  result.ranking.resize(result.cells.size());
  std::iota(result.ranking.begin(), result.ranking.end(), 0);
  std::stable_sort(result.ranking.begin(), result.ranking.end(), [&](std::size_t a, std::size_t b) {
    const auto& ca = result.cells[a];
    const auto& cb = result.cells[b];
    if (ca.failed != cb.failed) return !ca.failed;
    return ca.mean_patient_recall > cb.mean_patient_recall;
  });
  return result;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(ss / (n - 1.0));
  return out;
}

std::vector<std::size_t> subsample_patients(std::span<const std::uint8_t> patient_targets, std::size_t size,
                                            std::uint64_t seed) {
  std::vector<std::size_t> members[2];
  for (std::size_t i = 0; i < patient_targets.size(); ++i) members[patient_targets[i] != 0].push_back(i);
  const std::size_t total = patient_targets.size();
  if (size > total) throw ConfigError("subsample_patients: size exceeds cohort");
  if (size == total) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }
  // Proportional allocation, rounded, keeping >= 2 per class so a split exists.
  auto n1 = static_cast<std::size_t>(
      std::floor(static_cast<double>(size) * static_cast<double>(members[1].size()) / static_cast<double>(total) +
                 0.5));
  n1 = std::clamp<std::size_t>(n1, std::min<std::size_t>(2, members[1].size()), members[1].size());
  std::size_t n0 = size - std::min(n1, size);
  if (n0 > members[0].size()) {
    n0 = members[0].size();
    n1 = size - n0;
  } else if (n0 < 2 && members[0].size() >= 2 && size >= 4) {
    n0 = 2;
    n1 = size - 2;
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (int c = 0; c < 2; ++c) {
    std::shuffle(members[c].begin(), members[c].end(), rng);
    const std::size_t take = c ? n1 : n0;
    out.insert(out.end(), members[c].begin(), members[c].begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SizeStudyRow> dataset_size_study(const PreparedCohort& cohort, std::span<const std::size_t> sizes,
                                             std::size_t repeats, const ModelConfig& model,
                                             const TrainConfig& config, const SplitSpec& spec,
                                             std::vector<std::string>* warnings) {
  if (repeats < 1) throw ConfigError("dataset_size_study: repeats must be >= 1");
  const auto targets = cohort.patient_targets();
  std::vector<SizeStudyRow> rows;
  for (std::size_t requested : sizes) {
    const std::size_t size = requested == 0 ? targets.size() : requested;
    if (size > targets.size()) {
      if (warnings) {
        warnings->push_back("size " + std::to_string(size) + " exceeds the " + std::to_string(targets.size()) +
                            " available patients; skipped");
      }
      continue;
    }
    SizeStudyRow row;
    row.size_label = requested == 0 ? "all" : std::to_string(requested);
    row.n_patients = size;
    row.repeats = repeats;
    std::vector<double> cr, pr, ec, ep, uc, ui;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto chosen = subsample_patients(targets, size, derive_seed(derive_seed(spec.seed, "subset", size), "repeat", r));
      const PreparedCohort sub = select_patients(cohort, chosen);
      const EvalReport rep = run_split(sub, model, config, spec, r).report;
      cr.push_back(rep.contig.recall_macro);
      pr.push_back(rep.patient.recall_macro);
      ec.push_back(rep.ece_contig);
      ep.push_back(rep.ece_patient);
      uc.push_back(rep.unc_correct);
      ui.push_back(rep.unc_incorrect);
      row.reports.push_back(rep);
    }
    row.contig_recall = mean_std(cr);
    row.patient_recall = mean_std(pr);
    row.ece_contig = mean_std(ec);
    row.ece_patient = mean_std(ep);
    row.unc_correct = mean_std(uc);
    row.unc_incorrect = mean_std(ui);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace eegrel

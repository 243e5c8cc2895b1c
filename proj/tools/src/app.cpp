#include "eegrel_cli/app.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "eegrel/analysis.hpp"
#include "eegrel/cohort.hpp"
#include "eegrel/evaluation.hpp"
#include "eegrel/training.hpp"
#include "eegrel_cli/run_config.hpp"

namespace eegrel::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kContigCache = "contigs.coh";
constexpr const char* kFeatureCache = "features.coh";
constexpr const char* kDefaultModel = "model.mdl";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? std::string(1, sep) : "") + items[i];
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, sep);) out.push_back(item);
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void write_records(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& records) {
  auto out = open_output(path);
  out << "key,value\n";
  for (const auto& [k, v] : records) out << k << ',' << csv_field(v) << '\n';
}

// Invocation state shared by the subcommands.
struct Context {
  RunConfig config;
  fs::path out_dir;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

// Identifies the preprocessed contigs: preprocessing keys plus the dataset's
// manifest and channel list.
std::string contig_cache_hash(const RunConfig& cfg) {
  const fs::path dir = cfg.dataset_path();
  std::string text = cfg.canonical({"dataset.condition", "preprocess.band_lo", "preprocess.band_hi",
                                    "preprocess.target_hz", "preprocess.contig_len", "preprocess.resample_mode"});
  text += read_file(dir / "manifest.csv");
  text += read_file(dir / "channels.txt");
  return hex64(fnv1a64(text));
}

std::string feature_cache_hash(const std::string& contig_hash) { return hex64(fnv1a64("features|" + contig_hash)); }

std::string expected_cache_hash(const RunConfig& cfg, Domain domain) {
  const std::string contig_hash = contig_cache_hash(cfg);
  return domain == Domain::kTime ? contig_hash : feature_cache_hash(contig_hash);
}

fs::path cache_path(const Context& ctx, Domain domain) {
  return ctx.out_dir / (domain == Domain::kTime ? kContigCache : kFeatureCache);
}

// Loads the cache for `domain`, refusing it unless it was built from the
// current config and dataset.
LoadedCohort load_checked_cache(const Context& ctx, Domain domain) {
  const fs::path path = cache_path(ctx, domain);
  if (!fs::exists(path)) {
    throw DataError("missing cache " + path.string() + "; run '" +
                    (domain == Domain::kTime ? "preprocess" : "features") + "' first");
  }
  LoadedCohort loaded = load_cohort(path);
  const std::string expected = expected_cache_hash(ctx.config, domain);
  const auto it = loaded.metadata.find("upstream_hash");
  if (it == loaded.metadata.end() || it->second != expected) {
    throw DataError("stale cache " + path.string() + ": built from a different config or dataset; rerun '" +
                    (domain == Domain::kTime ? "preprocess" : "features") + "'");
  }
  if (loaded.cohort.domain != domain) throw DataError(path.string() + " holds the wrong input domain");
  return loaded;
}

std::string format_list(const std::vector<double>& v) {
  std::vector<std::string> items;
  for (double x : v) items.push_back(format_double(x));
  return join(items, ',');
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(parse_double(item, what));
  return out;
}

CheckpointMetadata norm_metadata(const NormStats& stats) {
  return {{"norm.mode", std::string(norm_mode_name(stats.mode))},
          {"norm.offset", format_list(stats.offset)},
          {"norm.scale", format_list(stats.scale)}};
}

const std::string& need_meta(const CheckpointMetadata& meta, const std::string& key, const fs::path& path) {
  auto it = meta.find(key);
  if (it == meta.end()) throw DataError(path.string() + ": checkpoint metadata lacks '" + key + "'");
  return it->second;
}

NormStats norm_from_metadata(const CheckpointMetadata& meta, const fs::path& path) {
  try {
    NormStats stats;
    stats.mode = parse_norm_mode(need_meta(meta, "norm.mode", path));
    stats.offset = parse_list(need_meta(meta, "norm.offset", path), "norm.offset");
    stats.scale = parse_list(need_meta(meta, "norm.scale", path), "norm.scale");
    return stats;
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::vector<std::size_t> indices_of(const PreparedCohort& cohort, const std::vector<std::string>& ids,
                                    const std::string& where) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) index[cohort.patients[i].patient_id] = i;
  std::vector<std::size_t> out;
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw DataError(where + ": patient '" + id + "' is not in the cache");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> ids_of(const PreparedCohort& cohort, const std::vector<std::size_t>& idx) {
  std::vector<std::string> out;
  for (std::size_t i : idx) out.push_back(cohort.patients[i].patient_id);
  return out;
}

void write_history(const fs::path& path, const TrainHistory& history) {
  auto out = open_output(path);
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < history.epoch_loss.size(); ++e) {
    out << e + 1 << ',' << format_double(history.epoch_loss[e]) << '\n';
  }
}

void write_predictions(const fs::path& path, const PredictionSet& p) {
  auto out = open_output(path);
  out << "patient_id,target,p\n";
  for (std::size_t i = 0; i < p.n_contigs(); ++i) {
    out << csv_field(p.patient_ids[p.contig_patient[i]]) << ',' << int(p.contig_target(i)) << ','
        << format_double(p.p[i]) << '\n';
  }
}

std::string repeat_suffix(std::size_t r) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_r%02zu", r);
  return buf;
}

// ---- subcommands ----

int cmd_synth(const Context& ctx) {
  const SynthConfig synth = ctx.config.synth();
  const fs::path dir = ctx.config.dataset_path();
  DatasetWriter writer(dir, canonical_channel_names());
  for (std::size_t i = 0; i < 2 * synth.n_patients_per_class; ++i) writer.add(generate_synthetic_patient(synth, i));
  writer.finish();
  *ctx.out << "wrote " << 2 * synth.n_patients_per_class << " synthetic recordings to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_preprocess(const Context& ctx) {
  const PreprocessConfig pc = ctx.config.preprocess();
  const DatasetReader reader(ctx.config.dataset_path());
  const PreparedCohort cohort = prepare_cohort(reader, pc, Domain::kTime, ctx.config.condition());
  fs::create_directories(ctx.out_dir);
  save_cohort(cohort, cache_path(ctx, Domain::kTime), {{"upstream_hash", contig_cache_hash(ctx.config)}});
  *ctx.out << "preprocessed " << cohort.patients.size() << " patients into " << cohort.total_samples()
           << " contigs of length " << cohort.contig_len << '\n';
  return kExitOk;
}

int cmd_features(const Context& ctx) {
  const LoadedCohort time = load_checked_cache(ctx, Domain::kTime);
  const PreparedCohort freq = to_frequency(time.cohort);
  save_cohort(freq, cache_path(ctx, Domain::kFrequency),
              {{"upstream_hash", feature_cache_hash(time.metadata.at("upstream_hash"))}});
  *ctx.out << "computed " << kNumSpectralFeatures << " band powers for " << freq.total_samples() << " contigs\n";
  return kExitOk;
}

void save_trained(const Context& ctx, const TrainedSplit& t, const PreparedCohort& cohort,
                  const std::string& cache_hash, const fs::path& path) {
  CheckpointMetadata meta = norm_metadata(t.run.norm);
  meta["contig_len"] = std::to_string(cohort.contig_len);
  meta["sampling_rate_hz"] = format_double(cohort.sampling_rate_hz);
  meta["domain"] = std::string(domain_name(cohort.domain));
  meta["repeat"] = std::to_string(t.run.repeat);
  meta["seed"] = std::to_string(ctx.config.seed());
  meta["cache_hash"] = cache_hash;
  meta["train_ids"] = join(ids_of(cohort, t.run.split.train), ',');
  meta["test_ids"] = join(ids_of(cohort, t.run.split.test), ',');
  save_checkpoint(t.model, path, meta);
}

int cmd_train(const Context& ctx, std::optional<std::size_t> repeat, bool all_repeats, const fs::path& model_path) {
  const ModelConfig model = ctx.config.model();
  const TrainConfig tc = ctx.config.train();
  const SplitSpec spec = ctx.config.split();
  const LoadedCohort cache = load_checked_cache(ctx, tc.domain);
  const std::string& cache_hash = cache.metadata.at("upstream_hash");

  if (!all_repeats) {
    const std::size_t r = repeat.value_or(0);
    const TrainedSplit t = run_split_with_model(cache.cohort, model, tc, spec, r);
    save_trained(ctx, t, cache.cohort, cache_hash, model_path);
    write_history(ctx.out_dir / "history.csv", t.run.history);
    *ctx.out << "trained " << architecture_name(t.model.architecture()) << " (" << t.model.param_count()
             << " parameters) on repeat " << r << "; final loss " << t.run.history.epoch_loss.back() << '\n';
    *ctx.out << "checkpoint: " << model_path.string() << '\n';
    return kExitOk;
  }
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    const TrainedSplit t = run_split_with_model(cache.cohort, model, tc, spec, r);
    const std::string suffix = repeat_suffix(r);
    save_trained(ctx, t, cache.cohort, cache_hash, ctx.out_dir / ("model" + suffix + ".mdl"));
    write_history(ctx.out_dir / ("history" + suffix + ".csv"), t.run.history);
    write_records(ctx.out_dir / ("eval" + suffix + ".csv"), t.run.report.records());
    *ctx.out << "repeat " << r << ": patient macro recall " << t.run.report.patient.recall_macro
             << ", contig macro recall " << t.run.report.contig.recall_macro << '\n';
  }
  return kExitOk;
}

struct LoadedModel {
  Checkpoint checkpoint;
  NormStats norm;
  std::size_t contig_len = 0;
};

LoadedModel load_model(const fs::path& path) {
  LoadedModel m{load_checkpoint(path), {}, 0};
  m.norm = norm_from_metadata(m.checkpoint.metadata, path);
  try {
    m.contig_len = static_cast<std::size_t>(parse_double(need_meta(m.checkpoint.metadata, "contig_len", path), "contig_len"));
  } catch (const ConfigError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return m;
}

int cmd_eval(const Context& ctx, const fs::path& model_path) {
  LoadedModel m = load_model(model_path);
  const Model& model = m.checkpoint.model;
  const std::size_t config_len = ctx.config.preprocess().contig_len;
  if (m.contig_len != config_len) {
    throw DataError("checkpoint " + model_path.string() + " was trained on contigs of length " +
                    std::to_string(m.contig_len) + " but the config asks for " + std::to_string(config_len) +
                    "; re-run preprocess/train with matching preprocess.contig_len");
  }
  const LoadedCohort cache = load_checked_cache(ctx, model.domain());
  if (cache.cohort.sample_shape() != model.input_shape()) {
    throw DataError("cached samples " + shape_str(cache.cohort.sample_shape()) + " do not match the checkpoint's input " +
                    shape_str(model.input_shape()));
  }
  if (need_meta(m.checkpoint.metadata, "cache_hash", model_path) != cache.metadata.at("upstream_hash")) {
    throw DataError("checkpoint " + model_path.string() + " was trained on a different cache");
  }
  const auto test = indices_of(cache.cohort, split(need_meta(m.checkpoint.metadata, "test_ids", model_path), ','),
                               model_path.string());
  const PredictionSet predictions = predict(model, build_samples(cache.cohort, test, m.norm));
  const EvalReport report = evaluate(predictions);
  write_records(ctx.out_dir / "eval.csv", report.records());
  write_predictions(ctx.out_dir / "predictions.csv", predictions);
  *ctx.out << report.table();
  return kExitOk;
}

int cmd_cross_eval(const Context& ctx, const fs::path& model_path, const fs::path& foreign) {
  LoadedModel m = load_model(model_path);
  const Model& model = m.checkpoint.model;
  PreprocessConfig pc = ctx.config.preprocess();
  // Foreign data is segmented to the model's contig shape.
  pc.contig_len = m.contig_len;
  const DatasetReader reader(foreign);
  PreparedCohort cohort = prepare_cohort(reader, pc, Domain::kTime, ctx.config.condition());
  if (model.domain() == Domain::kFrequency) cohort = to_frequency(cohort);
  std::vector<std::size_t> all(cohort.patients.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const EvalReport report = cross_domain_eval(model, m.norm, cohort, all, "foreign:" + foreign.filename().string());
  write_records(ctx.out_dir / "cross_eval.csv", report.records());
  *ctx.out << report.table();
  return kExitOk;
}

int cmd_size_study(const Context& ctx, std::optional<std::size_t> repeats) {
  const ModelConfig model = ctx.config.model();
  const TrainConfig tc = ctx.config.train();
  const SplitSpec spec = ctx.config.split();
  const LoadedCohort cache = load_checked_cache(ctx, tc.domain);
  std::vector<std::string> warnings;
  const auto sizes = ctx.config.study_sizes();
  const auto rows =
      dataset_size_study(cache.cohort, sizes, repeats.value_or(spec.repeats), model, tc, spec, &warnings);
  for (const auto& w : warnings) *ctx.err << "warning: " << w << '\n';
  auto out = open_output(ctx.out_dir / "size_study.csv");
  out << "size,n_patients,repeats";
  for (const char* m : {"contig_recall", "patient_recall", "ece_contig", "ece_patient", "unc_correct", "unc_incorrect"}) {
    out << ',' << m << "_mean," << m << "_std";
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.size_label << ',' << r.n_patients << ',' << r.repeats;
    for (const MeanStd* m : {&r.contig_recall, &r.patient_recall, &r.ece_contig, &r.ece_patient, &r.unc_correct,
                             &r.unc_incorrect}) {
      out << ',' << format_double(m->mean) << ',' << format_double(m->std);
    }
    out << '\n';
    *ctx.out << "size " << r.size_label << ": patient recall " << r.patient_recall.mean << " +/- "
             << r.patient_recall.std << ", contig ECE " << r.ece_contig.mean << '\n';
  }
  return kExitOk;
}

// One cell per non-empty line: ';'-separated key=value overrides, with an
// optional id=<name> entry.
std::vector<GridCell> parse_grid(const RunConfig& base, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read grid file " + path.string());
  std::vector<GridCell> cells;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    RunConfig cfg = base;
    std::string id = "cell" + std::to_string(cells.size());
    for (const auto& item : split(line, ';')) {
      const auto eq = item.find('=');
      const auto b = item.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      if (eq == std::string::npos) {
        throw ConfigError("grid line " + std::to_string(line_no) + ": expected key=value, got '" + item + "'");
      }
      auto strip = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      const std::string key = strip(item.substr(0, eq)), value = strip(item.substr(eq + 1));
      if (key == "id") {
        id = value;
        continue;
      }
      if (key == "model.cnn.layers") {
        throw ConfigError("grid line " + std::to_string(line_no) +
                          ": model.cnn.layers uses ';' and cannot be overridden in a grid file");
      }
      try {
        cfg.set(key, value);
      } catch (const ConfigError& e) {
        throw ConfigError("grid line " + std::to_string(line_no) + ": " + e.what());
      }
    }
    cells.push_back({id, cfg.model(), cfg.train()});
  }
  if (cells.empty()) throw ConfigError("grid file " + path.string() + " defines no cells");
  return cells;
}

int cmd_grid_search(const Context& ctx, const fs::path& grid_path, std::size_t n_splits) {
  const auto cells = parse_grid(ctx.config, grid_path);
  const SplitSpec spec = ctx.config.split();
  std::map<Domain, PreparedCohort> caches;
  const CohortProvider provider = [&](Domain d) -> const PreparedCohort& {
    auto it = caches.find(d);
    if (it == caches.end()) it = caches.emplace(d, load_checked_cache(ctx, d).cohort).first;
    return it->second;
  };
  const GridResult result = grid_search(provider, cells, spec, n_splits);

  auto table = open_output(ctx.out_dir / "grid.csv");
  table << "config_id,split_id,status";
  for (const auto& k : report_keys()) table << ',' << k;
  table << '\n';
  for (const auto& cell : result.cells) {
    if (cell.failed) {
      table << csv_field(cell.id) << ",-," << csv_field("failed: " + cell.error);
      for (std::size_t k = 0; k < report_keys().size(); ++k) table << ',';
      table << '\n';
      continue;
    }
    for (std::size_t s = 0; s < cell.splits.size(); ++s) {
      table << csv_field(cell.id) << ',' << s << ",ok";
      for (const auto& [k, v] : cell.splits[s].records()) table << ',' << csv_field(v);
      table << '\n';
    }
  }
  auto ranking = open_output(ctx.out_dir / "grid_ranking.csv");
  ranking << "rank,config_id,status,mean_patient_recall,mean_contig_recall\n";
  for (std::size_t i = 0; i < result.ranking.size(); ++i) {
    const auto& cell = result.cells[result.ranking[i]];
    ranking << i + 1 << ',' << csv_field(cell.id) << ',' << (cell.failed ? "failed" : "ok") << ','
            << format_double(cell.mean_patient_recall) << ',' << format_double(cell.mean_contig_recall) << '\n';
  }
  const auto& best = result.best();
  *ctx.out << "best config: " << best.id << " (mean patient macro recall " << best.mean_patient_recall << ")\n";
  for (const auto& cell : result.cells) {
    if (cell.failed) *ctx.err << "warning: cell " << cell.id << " failed: " << cell.error << '\n';
  }
  return kExitOk;
}

std::vector<double> rows_of(const SampleSet& set, std::uint8_t target) {
  std::vector<double> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.y[i] != target) continue;
    const auto s = set.sample(i);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

std::vector<std::size_t> groups_of(const SampleSet& set, std::uint8_t target) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.y[i] == target) out.push_back(set.patient[i]);
  }
  return out;
}

int cmd_gmm_overlap(const Context& ctx, std::size_t repeat) {
  const TrainConfig tc = ctx.config.train();
  const SplitSpec spec = ctx.config.split();
  const LoadedCohort cache = load_checked_cache(ctx, Domain::kFrequency);
  const PreparedCohort& cohort = cache.cohort;
  const PatientSplit sp = split_patients(cohort.patient_targets(), spec, repeat);
  const NormStats norm = fit_cohort_norm(cohort, sp.train, tc.norm);
  const SampleSet train = build_samples(cohort, sp.train, norm);
  const SampleSet test = build_samples(cohort, sp.test, norm);
  const std::size_t d = kNumSpectralFeatures;

  GmmConfig gc;
  gc.components = ctx.config.gmm_components();
  gc.seed = derive_seed(ctx.config.seed(), "gmm", repeat);
  const auto cond_train = rows_of(train, 1);
  const GmmFit fit = gmm_fit(cond_train, d, gc);

  std::vector<NamedSample> sets = {
      {"condition_train", gmm_loglik(fit.model, cond_train, d)},
      {"control_train", gmm_loglik(fit.model, rows_of(train, 0), d)},
      {"condition_test", gmm_loglik(fit.model, rows_of(test, 1), d)},
      {"control_test", gmm_loglik(fit.model, rows_of(test, 0), d)},
  };
  const OverlapReport report = overlap_report(sets);

  auto hist = open_output(ctx.out_dir / "loglik_hist.csv");
  hist << "set,bin_lo,bin_hi,count\n";
  for (const auto& h : report.histogram) {
    hist << h.set << ',' << format_double(h.bin_lo) << ',' << format_double(h.bin_hi) << ',' << h.count << '\n';
  }
  auto dist = open_output(ctx.out_dir / "overlap_dist.csv");
  dist << "set_a,set_b,w1\n";
  for (const auto& r : report.distances) dist << r.set_a << ',' << r.set_b << ',' << format_double(r.w1) << '\n';
  // Noise floor: patient-disjoint halves of each test set.
  const std::uint64_t resample_seed = derive_seed(ctx.config.seed(), "resample", repeat);
  for (std::uint8_t target : {1, 0}) {
    const std::string name = target ? "condition_test" : "control_test";
    const auto& values = sets[target ? 2 : 3].values;
    const double w = within_set_distance(values, groups_of(test, target), 20, resample_seed);
    dist << name << ',' << name << "_halves," << format_double(w) << '\n';
  }
  auto trace = open_output(ctx.out_dir / "gmm_trace.csv");
  trace << "iteration,mean_loglik\n";
  for (std::size_t i = 0; i < fit.trace.size(); ++i) trace << i << ',' << format_double(fit.trace[i]) << '\n';

  *ctx.out << "GMM(K=" << gc.components << ") " << (fit.converged ? "converged" : "stopped") << " after "
           << fit.iterations << " EM iterations\n";
  *ctx.out << "W1(condition_test, control_test) = " << report.distance("condition_test", "control_test") << '\n';
  return kExitOk;
}

int cmd_shap(const Context& ctx, const fs::path& model_path, std::size_t n_inputs) {
  LoadedModel m = load_model(model_path);
  const Model& model = m.checkpoint.model;
  const LoadedCohort cache = load_checked_cache(ctx, model.domain());
  if (cache.cohort.sample_shape() != model.input_shape()) {
    throw DataError("cached samples do not match the checkpoint's input shape");
  }
  const auto& meta = m.checkpoint.metadata;
  const auto train_idx = indices_of(cache.cohort, split(need_meta(meta, "train_ids", model_path), ','), "shap");
  const auto test_idx = indices_of(cache.cohort, split(need_meta(meta, "test_ids", model_path), ','), "shap");
  const SampleSet train = build_samples(cache.cohort, train_idx, m.norm);
  const SampleSet test = build_samples(cache.cohort, test_idx, m.norm);
  if (test.size() == 0) throw DataError("shap: no test samples");

  const std::vector<double> train_rows(train.x.begin(), train.x.end());
  const auto background = mean_row(train_rows, train.size());
  // Evenly spaced test samples.
  n_inputs = std::min(n_inputs, test.size());
  std::vector<double> inputs;
  for (std::size_t i = 0; i < n_inputs; ++i) {
    const auto s = test.sample(i * test.size() / n_inputs);
    inputs.insert(inputs.end(), s.begin(), s.end());
  }
  const BatchFunction f = probability_function(model);
  const std::size_t n_perm = ctx.config.shap_permutations();
  const std::uint64_t seed = derive_seed(ctx.config.seed(), "shap");
  std::vector<FeatureGrouping> groupings;
  if (model.domain() == Domain::kFrequency) {
    groupings = {channel_grouping_frequency(), band_grouping()};
  } else {
    groupings = {channel_grouping_time(m.contig_len), position_grouping(m.contig_len)};
  }
  for (const auto& g : groupings) {
    const ShapReport report = shap_attribution(f, inputs, n_inputs, background, g, n_perm, seed);
    auto out = open_output(ctx.out_dir / ("shap_" + g.name + ".csv"));
    out << "group,mean_abs_phi,mean_phi\n";
    for (std::size_t i = 0; i < report.labels.size(); ++i) {
      out << report.labels[i] << ',' << format_double(report.mean_abs_phi[i]) << ','
          << format_double(report.mean_phi[i]) << '\n';
    }
    *ctx.out << "wrote shap_" << g.name << ".csv (" << g.size() << " groups, " << n_inputs << " inputs, " << n_perm
             << " permutations)\n";
  }
  return kExitOk;
}

int cmd_report(const Context& ctx, const std::vector<std::string>& files, const std::string& output) {
  std::vector<std::string> columns;
  std::vector<std::pair<std::string, std::map<std::string, double>>> runs;
  for (const auto& file : files) {
    std::istringstream in(read_file(file));
    std::string line;
    if (!std::getline(in, line) || line != "key,value") throw DataError(file + ": not a key,value metrics file");
    std::map<std::string, double> values;
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw DataError(file + ": malformed line '" + line + "'");
      const std::string key = line.substr(0, comma), value = line.substr(comma + 1);
      double v = 0.0;
      try {
        v = parse_double(value, key);
      } catch (const ConfigError&) {
        continue;  // text-valued records (domain, flags)
      }
      if (values.emplace(key, v).second && runs.empty()) columns.push_back(key);
    }
    runs.emplace_back(fs::path(file).stem().string(), std::move(values));
  }
  auto out = open_output(ctx.out_dir / output);
  out << "run";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (const auto& [name, values] : runs) {
    out << csv_field(name);
    for (const auto& c : columns) {
      auto it = values.find(c);
      if (it == values.end()) throw DataError("metrics file for run '" + name + "' lacks '" + c + "'");
      out << ',' << format_double(it->second);
    }
    out << '\n';
  }
  for (const char* stat : {"mean", "std"}) {
    out << stat;
    for (const auto& c : columns) {
      std::vector<double> col;
      for (const auto& run : runs) col.push_back(run.second.at(c));
      const MeanStd ms = mean_std(col);
      out << ',' << format_double(stat[0] == 'm' ? ms.mean : ms.std);
    }
    out << '\n';
  }
  *ctx.out << "merged " << runs.size() << " runs into " << (ctx.out_dir / output).string() << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"EEG reliability pipeline: synthetic cohorts, preprocessing, models and analyses"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("-c,--config", config_path, "run configuration file (key=value)");
    if (needs_config) opt->required();
    sub->add_option("-o,--out", out_dir, "directory for caches and outputs")->capture_default_str();
    sub->add_option("--seed", seed, "override the config's root seed");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic EEGD dataset at dataset.path");
  add_common(synth);
  auto* preprocess = app.add_subcommand("preprocess", "EEGD dataset -> contig cache");
  add_common(preprocess);
  auto* features = app.add_subcommand("features", "contig cache -> band-power cache");
  add_common(features);

  std::optional<std::size_t> repeat;
  bool all_repeats = false;
  std::string model_path;
  auto* train = app.add_subcommand("train", "train a model on one split (or every repeat)");
  add_common(train);
  train->add_option("--repeat", repeat, "split repeat index (default 0)");
  train->add_flag("--all-repeats", all_repeats, "train and evaluate every split.repeats repeat");
  train->add_option("--model", model_path, "checkpoint path (default <out>/model.mdl)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its held-out patients");
  add_common(eval);
  eval->add_option("--model", model_path, "checkpoint path (default <out>/model.mdl)");

  std::string foreign;
  auto* cross = app.add_subcommand("cross-eval", "evaluate a checkpoint on a foreign EEGD dataset");
  add_common(cross);
  cross->add_option("--model", model_path, "checkpoint path (default <out>/model.mdl)");
  cross->add_option("--foreign", foreign, "foreign EEGD dataset directory")->required();

  std::optional<std::size_t> study_repeats;
  auto* size_study = app.add_subcommand("size-study", "reliability metrics versus cohort size");
  add_common(size_study);
  size_study->add_option("--repeats", study_repeats, "repeats per size (default split.repeats)");

  std::string grid_path;
  std::size_t n_splits = 5;
  auto* grid = app.add_subcommand("grid-search", "train every grid cell on several splits and rank them");
  add_common(grid);
  grid->add_option("--grid", grid_path, "grid file: one cell of ';'-separated overrides per line")->required();
  grid->add_option("--splits", n_splits, "splits per cell")->capture_default_str();

  std::size_t gmm_repeat = 0;
  auto* gmm = app.add_subcommand("gmm-overlap", "GMM log-likelihood overlap between classes");
  add_common(gmm);
  gmm->add_option("--repeat", gmm_repeat, "split repeat index")->capture_default_str();

  std::size_t shap_inputs = 32;
  auto* shap = app.add_subcommand("shap", "grouped Shapley attributions for a checkpoint");
  add_common(shap);
  shap->add_option("--model", model_path, "checkpoint path (default <out>/model.mdl)");
  shap->add_option("--inputs", shap_inputs, "held-out samples to explain")->capture_default_str();

  std::vector<std::string> report_files;
  std::string report_name = "summary.csv";
  auto* report = app.add_subcommand("report", "merge key,value metric files into one table");
  add_common(report, false);
  report->add_option("files", report_files, "metric files (eval*.csv)")->required();
  report->add_option("--name", report_name, "output file name in --out")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    Context ctx;
    ctx.out = &out;
    ctx.err = &err;
    ctx.out_dir = out_dir;
    if (!config_path.empty()) ctx.config = RunConfig::load(config_path);
    if (seed) ctx.config.set("seed", std::to_string(*seed));
    fs::create_directories(ctx.out_dir);
    const fs::path model_file = model_path.empty() ? ctx.out_dir / kDefaultModel : fs::path(model_path);

    if (*synth) return cmd_synth(ctx);
    if (*preprocess) return cmd_preprocess(ctx);
    if (*features) return cmd_features(ctx);
    if (*train) return cmd_train(ctx, repeat, all_repeats, model_file);
    if (*eval) return cmd_eval(ctx, model_file);
    if (*cross) return cmd_cross_eval(ctx, model_file, foreign);
    if (*size_study) return cmd_size_study(ctx, study_repeats);
    if (*grid) return cmd_grid_search(ctx, grid_path, n_splits);
    if (*gmm) return cmd_gmm_overlap(ctx, gmm_repeat);
    if (*shap) return cmd_shap(ctx, model_file, shap_inputs);
    if (*report) return cmd_report(ctx, report_files, report_name);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace eegrel::cli

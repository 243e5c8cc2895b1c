#include "eegrel/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eegrel {

void PredictionSet::validate() const {
  if (patient_targets.size() != patient_ids.size()) throw DataError("predictions: patient label count mismatch");
  if (contig_patient.size() != p.size()) throw DataError("predictions: contig count mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (contig_patient[i] >= patient_ids.size()) throw DataError("predictions: contig maps to an unknown patient");
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw DataError("predictions: probability outside [0, 1]");
  }
}

Vote vote_patient(std::span<const double> p) {
  if (p.empty()) throw DataError("vote_patient: patient has no contigs");
  std::size_t condition = 0;
  for (double v : p) condition += v >= 0.5;
  const std::size_t control = p.size() - condition;
  Vote vote;
  vote.tie = condition == control;
  vote.label = condition >= control ? 1 : 0;
  vote.confidence = static_cast<double>(std::max(condition, control)) / static_cast<double>(p.size());
  return vote;
}

ClassMetrics macro_metrics(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw DataError("macro_metrics: prediction/label length mismatch");
  std::array<std::array<std::size_t, 2>, 2> count{};  // [truth][predicted]
  for (std::size_t i = 0; i < truth.size(); ++i) ++count[truth[i] != 0][predicted[i] != 0];
  ClassMetrics m;
  for (int c = 0; c < 2; ++c) {
    m.support[c] = count[c][0] + count[c][1];
    if (m.support[c] == 0) throw DataError("macro_metrics: labels contain a single class");
  }
  for (int c = 0; c < 2; ++c) {
    const std::size_t tp = count[c][c];
    const std::size_t predicted_c = count[0][c] + count[1][c];
    m.recall[c] = static_cast<double>(tp) / static_cast<double>(m.support[c]);
    m.precision_undefined[c] = predicted_c == 0;
    m.precision[c] = predicted_c == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(predicted_c);
  }
  m.recall_macro = 0.5 * (m.recall[0] + m.recall[1]);
  m.precision_macro = 0.5 * (m.precision[0] + m.precision[1]);
  return m;
}

double ece(std::span<const double> confidence, std::span<const std::uint8_t> correct, std::size_t n_bins) {
  if (confidence.empty()) throw DataError("ece: empty input");
  if (confidence.size() != correct.size()) throw DataError("ece: confidence/correctness length mismatch");
  if (n_bins == 0) throw ConfigError("ece: need at least one bin");
  std::vector<double> conf_sum(n_bins, 0.0), acc_sum(n_bins, 0.0);
  std::vector<std::size_t> n(n_bins, 0);
  for (std::size_t i = 0; i < confidence.size(); ++i) {
    const double c = std::clamp(confidence[i], 0.5, 1.0);
    auto b = static_cast<std::size_t>((c - 0.5) / 0.5 * static_cast<double>(n_bins));
    b = std::min(b, n_bins - 1);
    conf_sum[b] += c;
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
    ++n[b];
  }
  double total = 0.0;
  const double N = static_cast<double>(confidence.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (n[b] == 0) continue;
    const double nb = static_cast<double>(n[b]);
    total += nb / N * std::abs(acc_sum[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

double uncertainty(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("uncertainty: p must lie in [0, 1]");
  return 2.0 * p * (1.0 - p);
}

EvalReport evaluate(const PredictionSet& predictions, std::string domain_tag) {
  predictions.validate();
  EvalReport r;
  r.domain_tag = std::move(domain_tag);
  r.n_contigs = predictions.n_contigs();
  if (r.n_contigs == 0) throw DataError("evaluate: no predictions");

  std::vector<std::uint8_t> pred(r.n_contigs), truth(r.n_contigs), correct(r.n_contigs);
  std::vector<double> conf(r.n_contigs);
  double unc_ok = 0.0, unc_bad = 0.0;
  std::vector<std::vector<double>> per_patient(predictions.n_patients());
  for (std::size_t i = 0; i < r.n_contigs; ++i) {
    const double p = predictions.p[i];
    pred[i] = p >= 0.5;
    truth[i] = predictions.contig_target(i);
    correct[i] = pred[i] == truth[i];
    conf[i] = std::max(p, 1.0 - p);
    (correct[i] ? unc_ok : unc_bad) += uncertainty(p);
    (correct[i] ? r.n_correct_contigs : r.n_incorrect_contigs) += 1;
    per_patient[predictions.contig_patient[i]].push_back(p);
  }
  r.contig = macro_metrics(pred, truth);
  r.ece_contig = ece(conf, correct);
  r.unc_correct = r.n_correct_contigs ? unc_ok / static_cast<double>(r.n_correct_contigs) : 0.0;
  r.unc_incorrect = r.n_incorrect_contigs ? unc_bad / static_cast<double>(r.n_incorrect_contigs) : 0.0;

  std::vector<std::uint8_t> ppred, ptruth, pcorrect;
  std::vector<double> pconf;
  for (std::size_t k = 0; k < per_patient.size(); ++k) {
    if (per_patient[k].empty()) continue;
    const Vote v = vote_patient(per_patient[k]);
    ppred.push_back(v.label);
    ptruth.push_back(predictions.patient_targets[k]);
    pcorrect.push_back(v.label == predictions.patient_targets[k]);
    pconf.push_back(v.confidence);
    r.n_vote_ties += v.tie;
  }
  r.n_patients = ppred.size();
  r.patient = macro_metrics(ppred, ptruth);
  r.ece_patient = ece(pconf, pcorrect);
  return r;
}

const std::vector<std::string>& report_keys() {
  static const std::vector<std::string> keys = {
      "domain",
      "contig_recall_macro",
      "patient_recall_macro",
      "contig_precision_macro",
      "patient_precision_macro",
      "ece_contig",
      "ece_patient",
      "unc_correct",
      "unc_incorrect",
      "contig_recall_control",
      "contig_recall_condition",
      "patient_recall_control",
      "patient_recall_condition",
      "contig_precision_control",
      "contig_precision_condition",
      "patient_precision_control",
      "patient_precision_condition",
      "contig_precision_undefined",
      "patient_precision_undefined",
      "n_contigs",
      "n_patients",
      "n_correct_contigs",
      "n_incorrect_contigs",
      "n_vote_ties",
  };
  return keys;
}

std::vector<std::pair<std::string, std::string>> EvalReport::records() const {
  auto flags = [](const ClassMetrics& m) {
    std::string s;
    if (m.precision_undefined[0]) s += "control";
    if (m.precision_undefined[1]) s += s.empty() ? "condition" : "|condition";
    return s.empty() ? std::string("none") : s;
  };
  const std::vector<std::string> values = {
      domain_tag,
      format_double(contig.recall_macro),
      format_double(patient.recall_macro),
      format_double(contig.precision_macro),
      format_double(patient.precision_macro),
      format_double(ece_contig),
      format_double(ece_patient),
      format_double(unc_correct),
      format_double(unc_incorrect),
      format_double(contig.recall[0]),
      format_double(contig.recall[1]),
      format_double(patient.recall[0]),
      format_double(patient.recall[1]),
      format_double(contig.precision[0]),
      format_double(contig.precision[1]),
      format_double(patient.precision[0]),
      format_double(patient.precision[1]),
      flags(contig),
      flags(patient),
      std::to_string(n_contigs),
      std::to_string(n_patients),
      std::to_string(n_correct_contigs),
      std::to_string(n_incorrect_contigs),
      std::to_string(n_vote_ties),
  };
  const auto& keys = report_keys();
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < keys.size(); ++i) out.emplace_back(keys[i], values[i]);
  return out;
}

std::string EvalReport::table() const {
  char buf[160];
  std::ostringstream out;
  out << "evaluation (" << domain_tag << "): " << n_patients << " patients, " << n_contigs << " contigs\n";
  out << "                     control  condition   macro\n";
  auto row = [&](const char* name, const std::array<double, 2>& v, double macro) {
    std::snprintf(buf, sizeof buf, "%-19s %8.3f %10.3f %7.3f\n", name, v[0], v[1], macro);
    out << buf;
  };
  row("recall (contig)", contig.recall, contig.recall_macro);
  row("recall (patient)", patient.recall, patient.recall_macro);
  row("precision (contig)", contig.precision, contig.precision_macro);
  row("precision (patient)", patient.precision, patient.precision_macro);
  std::snprintf(buf, sizeof buf, "ECE contig %.4f  patient %.4f\n", ece_contig, ece_patient);
  out << buf;
  std::snprintf(buf, sizeof buf, "uncertainty correct %.4f (n=%zu)  incorrect %.4f (n=%zu)\n", unc_correct,
                n_correct_contigs, unc_incorrect, n_incorrect_contigs);
  out << buf;
  if (n_vote_ties) out << n_vote_ties << " patient vote tie(s) resolved toward condition\n";
  for (int c = 0; c < 2; ++c) {
    if (patient.precision_undefined[c]) {
      out << "no patient predicted " << (c ? "condition" : "control") << "; its precision is reported as 0\n";
    }
  }
  return out.str();
}

PredictionSet predict(const Model& model, const SampleSet& samples, std::size_t batch) {
  if (samples.sample_shape != model.input_shape()) {
    throw ShapeError("predict: samples have shape " + shape_str(samples.sample_shape) + ", model expects " +
                     shape_str(model.input_shape()));
  }
  PredictionSet out;
  out.patient_ids = samples.patient_ids;
  out.patient_targets = samples.patient_targets;
  out.contig_patient = samples.patient;
  out.p.reserve(samples.size());
  for (std::size_t begin = 0; begin < samples.size(); begin += batch) {
    const std::size_t end = std::min(samples.size(), begin + batch);
    const auto probs = model.predict_proba(samples.batch(begin, end));
    out.p.insert(out.p.end(), probs.begin(), probs.end());
  }
  return out;
}

EvalReport cross_domain_eval(const Model& model, const NormStats& train_stats, const PreparedCohort& foreign,
                             std::span<const std::size_t> patients, std::string domain_tag) {
  if (foreign.sample_shape() != model.input_shape() || foreign.domain != model.domain()) {
    throw ShapeError("cross_domain_eval: foreign " + std::string(domain_name(foreign.domain)) + " samples " +
                     shape_str(foreign.sample_shape()) + " do not fit a " +
                     std::string(domain_name(model.domain())) + " model expecting " +
                     shape_str(model.input_shape()));
  }
  const SampleSet samples = build_samples(foreign, patients, train_stats);
  return evaluate(predict(model, samples), std::move(domain_tag));
}

}  // namespace eegrel

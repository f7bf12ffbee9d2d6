#include "latentce/pipeline.hpp"

#include <cmath>

#include "latentce/error.hpp"

namespace latentce {

LatentTable to_table(const std::vector<LatentRecord>& records) {
  LatentTable t;
  for (const auto& r : records) t[r.id] = Vector(r.z.begin(), r.z.end());
  return t;
}

std::filesystem::path latent_cache_path(const std::filesystem::path& dir, Split split) {
  return dir / (std::string(split_name(split)) + ".zsem");
}

LatentTable load_latents(const std::filesystem::path& dir, const std::vector<Split>& splits) {
  LatentTable t;
  for (Split s : splits) t.merge(to_table(read_latent_cache(latent_cache_path(dir, s))));
  return t;
}

const Vector& latent_of(const LatentTable& table, int id) {
  auto it = table.find(id);
  if (it == table.end()) throw ConfigError("no cached latent for sample " + std::to_string(id));
  return it->second;
}

ProbeDataset probe_dataset(const std::vector<const SyntheticSample*>& samples, const LatentTable& latents) {
  ProbeDataset d;
  for (const auto* s : samples) {
    if (!s->binary_label || s->grade == 1) continue;
    d.w.push_back(latent_of(latents, s->id));
    d.y.push_back(*s->binary_label);
  }
  return d;
}

Probe fit_probe(const ProbeDataset& data, const ProbeFitOptions& opt) {
  if (data.w.empty()) throw DegenerateDataError("no labelled probe samples");
  const std::size_t dim = data.w.front().size();
  Vector mu(dim, 0.0), sd(dim, 1.0);
  ProbeDataset fit_data = data;
  if (opt.standardize) {
    for (const auto& w : data.w)
      for (std::size_t k = 0; k < dim; ++k) mu[k] += w[k] / data.w.size();
    for (std::size_t k = 0; k < dim; ++k) {
      double v = 0.0;
      for (const auto& w : data.w) v += (w[k] - mu[k]) * (w[k] - mu[k]);
      sd[k] = std::sqrt(v / data.w.size());
      if (!(sd[k] > 0.0)) sd[k] = 1.0;
    }
    for (auto& w : fit_data.w)
      for (std::size_t k = 0; k < dim; ++k) w[k] = (w[k] - mu[k]) / sd[k];
  }
  Probe p;
  p.kind = opt.kind;
  if (opt.kind == "svm") {
    SvmOptions o;
    if (opt.lambda >= 0.0) o.lambda = opt.lambda;
    if (opt.epochs > 0) o.epochs = opt.epochs;
    p.plane = fit_svm(fit_data, o);
  } else if (opt.kind == "logistic") {
    LogisticOptions o;
    if (opt.lambda >= 0.0) o.lambda = opt.lambda;
    if (opt.epochs > 0) o.epochs = opt.epochs;
    p.plane = fit_logistic(fit_data, o);
  } else {
    throw DomainError("unknown probe kind '" + opt.kind + "'");
  }
  if (opt.standardize) {
    // n.((w - mu)/sd) + b == (n/sd).w + (b - sum n mu/sd)
    for (std::size_t k = 0; k < dim; ++k) {
      p.plane.n[k] /= sd[k];
      p.plane.b -= p.plane.n[k] * mu[k];
    }
  }
  return p;
}

Calibration calibrate_probe(const Hyperplane& plane, const std::vector<const SyntheticSample*>& samples,
                            const LatentTable& latents, CalibrationMode mode, int degree) {
  Vector d, g;
  for (const auto* s : samples) {
    d.push_back(signed_distance(latent_of(latents, s->id), plane));
    g.push_back(s->grade);
  }
  return fit_calibration(d, g, mode, degree, kMaxGrade);
}

SplitPredictions predict_split(const Probe& probe, const std::vector<const SyntheticSample*>& samples,
                               const LatentTable& latents) {
  if (!probe.cal) throw ConfigError("probe has no calibration; run calibrate first");
  SplitPredictions p;
  for (const auto* s : samples) {
    const auto pred = predict_grade(latent_of(latents, s->id), probe.plane, *probe.cal);
    p.ids.push_back(s->id);
    p.distances.push_back(pred.distance);
    p.scores.push_back(pred.score);
    p.grades_pred.push_back(pred.grade);
    p.grades_true.push_back(s->grade);
    p.severity.push_back(s->g);
  }
  return p;
}

EvalReport evaluate_predictions(const SplitPredictions& p, const std::string& task) {
  EvalReport r;
  r.task = task;
  r.n_samples = static_cast<int>(p.ids.size());
  std::vector<int> truth_bin, pred_bin;
  std::vector<double> gp, gt;
  for (std::size_t i = 0; i < p.ids.size(); ++i) {
    truth_bin.push_back(binary_label_of(p.grades_true[i]));
    pred_bin.push_back(p.distances[i] > 0.0 ? 1 : 0);
    gp.push_back(p.grades_pred[i]);
    gt.push_back(p.grades_true[i]);
  }
  r.auc = roc_auc(p.distances, truth_bin);
  r.f1_binary = f1(pred_bin, truth_bin, F1Average::Binary);
  r.f1_macro = f1(p.grades_pred, p.grades_true, F1Average::Macro, kMaxGrade + 1);
  r.mae = mae(gp, gt);
  r.confusion = confusion_matrix(p.grades_pred, p.grades_true, kMaxGrade + 1);
  r.extra["spearman(distance, severity)"] = spearman(p.distances, p.severity);
  return r;
}

}  // namespace latentce

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "latentce/dae.hpp"
#include "latentce/geometry.hpp"
#include "latentce/metrics.hpp"
#include "latentce/synthcorpus.hpp"

namespace latentce {

// Semantic latents keyed by sample id.
using LatentTable = std::map<int, Vector>;

LatentTable to_table(const std::vector<LatentRecord>& records);
std::filesystem::path latent_cache_path(const std::filesystem::path& dir, Split split);
// Reads <dir>/<split>.zsem for each requested split.
LatentTable load_latents(const std::filesystem::path& dir, const std::vector<Split>& splits);
const Vector& latent_of(const LatentTable& table, int id);

// Binary probe data: labelled samples of grade 0, 2 or 3 (grade 1 excluded),
// positive class {2, 3}.
ProbeDataset probe_dataset(const std::vector<const SyntheticSample*>& samples, const LatentTable& latents);

struct ProbeFitOptions {
  std::string kind = "svm";  // svm | logistic
  double lambda = -1.0;      // negative: classifier default
  int epochs = -1;
  bool standardize = false;  // fit on z-scored latents, then map back
};
Probe fit_probe(const ProbeDataset& data, const ProbeFitOptions& opt);

Calibration calibrate_probe(const Hyperplane& plane, const std::vector<const SyntheticSample*>& samples,
                            const LatentTable& latents, CalibrationMode mode, int degree = 1);

struct SplitPredictions {
  std::vector<int> ids;
  std::vector<double> distances;
  std::vector<double> scores;
  std::vector<int> grades_pred;
  std::vector<int> grades_true;
  std::vector<double> severity;
};
SplitPredictions predict_split(const Probe& probe, const std::vector<const SyntheticSample*>& samples,
                               const LatentTable& latents);

// Detection and grading metrics; the binary threshold is distance 0.
EvalReport evaluate_predictions(const SplitPredictions& p, const std::string& task);

}  // namespace latentce

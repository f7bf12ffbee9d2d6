#pragma once

#include <map>
#include <string>
#include <vector>

#include "latentce/geometry.hpp"
#include "latentce/image.hpp"

namespace latentce {

// Probability that a random positive outranks a random negative; ties count
// one half.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

enum class F1Average { Binary, Macro };
// Macro averages over `num_classes` classes 0..num_classes-1, or over the
// classes seen in either list when num_classes <= 0. Classes without support
// contribute 0.
double f1(const std::vector<int>& predictions, const std::vector<int>& labels, F1Average avg,
          int num_classes = 0);

double mae(const std::vector<double>& predicted, const std::vector<double>& truth);

// Identical images report 99 dB.
inline constexpr double kPsnrIdentical = 99.0;
double psnr(const Image& a, const Image& b);
// Mean SSIM over all uniform window x window patches, k1 = 0.01, k2 = 0.03.
double ssim(const Image& a, const Image& b, int window = 8);

struct GaussianSummary {
  Vector mean;
  std::vector<Vector> cov;  // D x D, unbiased
};
GaussianSummary summarize(const std::vector<Vector>& samples);

// |mu_A - mu_B|^2 + Tr(S_A + S_B - 2 (S_A S_B)^(1/2)).
double latent_frechet(const std::vector<Vector>& a, const std::vector<Vector>& b);
double frechet_distance(const GaussianSummary& a, const GaussianSummary& b);

struct PcaResult {
  Vector mean;
  std::vector<Vector> components;   // k x D, unit norm
  std::vector<Vector> coords;       // n x k
  Vector eigenvalues;               // all, descending
  Vector explained_variance_ratio;  // first k
  bool rank_deficient = false;      // fewer than k non-zero directions
};
// Sign convention: the largest-magnitude entry of each component is positive.
PcaResult pca_project(const std::vector<Vector>& samples, int k = 2);

// Pearson correlation of average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// rows: true class, columns: predicted class.
std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& predictions,
                                               const std::vector<int>& labels, int num_classes);

struct EvalReport {
  std::string task;
  double auc = 0.0;
  double f1_binary = 0.0;
  double f1_macro = 0.0;
  double mae = 0.0;
  int n_samples = 0;
  std::vector<std::vector<int>> confusion;
  // Further named values, e.g. reconstruction substitutes for perceptual metrics.
  std::map<std::string, double> extra;
};
std::string report_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

}  // namespace latentce

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace latentce {

using Vector = std::vector<double>;

// Decision boundary n . w + b = 0 in latent space.
struct Hyperplane {
  Vector n;
  double b = 0.0;
  double norm() const;
};

// Latents with binary labels in {0,1}.
struct ProbeDataset {
  std::vector<Vector> w;
  std::vector<int> y;
};

struct SvmOptions {
  double lambda = 1e-3;
  int epochs = 200;
  unsigned long long seed = 0;  // initialisation is zero, so unused
};

struct LogisticOptions {
  double lambda = 1e-4;
  int epochs = 500;
};

// Full-batch subgradient descent on lambda/2 |n|^2 + mean hinge with step
// 1/(lambda (epoch+1)). Returns the iterate with the lowest objective.
Hyperplane fit_svm(const ProbeDataset& data, const SvmOptions& opt = {});
double svm_objective(const ProbeDataset& data, const Hyperplane& h, double lambda);

// Full-batch gradient descent on the L2-regularised logistic loss with step
// 1/L, L the gradient Lipschitz bound.
Hyperplane fit_logistic(const ProbeDataset& data, const LogisticOptions& opt = {});
// Gradient of the logistic objective with respect to (n, b), b last.
Vector logistic_gradient(const ProbeDataset& data, const Hyperplane& h, double lambda);
double logistic_probability(const Vector& w, const Hyperplane& h);

// (n . w + b) / |n|.
double signed_distance(const Vector& w, const Hyperplane& h);
Vector unit_normal(const Hyperplane& h);

enum class CalibrationMode { MeansOfExtremes, LeastSquares, Polynomial };
std::string calibration_mode_name(CalibrationMode m);
CalibrationMode parse_calibration_mode(const std::string& name);

// Monotone polynomial s(d) = sum c_k d^k from signed distance to grade.
struct Calibration {
  CalibrationMode mode = CalibrationMode::MeansOfExtremes;
  int degree = 1;
  Vector coeffs;
  double gmax = 3.0;
  double d_min = 0.0;  // observed distance range at fit time
  double d_max = 0.0;
  std::vector<double> grades_used;
};

Calibration fit_calibration(const Vector& distances, const Vector& grades, CalibrationMode mode,
                            int degree = 1, double gmax = 3.0);
double calibrated_score(const Calibration& cal, double d);
// Unique d with s(d) == target. Linear calibrations invert in closed form,
// polynomials by bisection over the fit-time range.
double invert_calibration(const Calibration& cal, double target, bool allow_extrapolation = false);

struct GradePrediction {
  double distance = 0.0;
  double score = 0.0;
  int grade = 0;
};
// Clamp to [0, gmax] then round half away from zero.
int grade_from_score(double score, double gmax);
GradePrediction predict_grade(const Vector& w, const Hyperplane& h, const Calibration& cal);

struct Probe {
  std::string kind = "svm";
  Hyperplane plane;
  std::optional<Calibration> cal;
};

// {"kind", "n", "b", "cal": {"mode", "degree", "coeffs", "gmax", "range", "grades"}}
// with 17 significant digits.
std::string probe_to_json(const Probe& p);
Probe probe_from_json(const std::string& text);
void save_probe(const Probe& p, const std::string& path);
Probe load_probe(const std::string& path);

}  // namespace latentce

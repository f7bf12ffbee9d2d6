#include "latentce/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "latentce/checkpoint.hpp"
#include "latentce/error.hpp"

namespace latentce {

namespace {

constexpr int kMonotoneGrid = 1000;
constexpr double kBisectionTolerance = 1e-10;

double dot(const Vector& a, const Vector& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

void check_dataset(const ProbeDataset& data) {
  if (data.w.empty() || data.w.size() != data.y.size())
    throw ShapeError("probe data needs one label per latent");
  const std::size_t d = data.w.front().size();
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < data.w.size(); ++i) {
    if (data.w[i].size() != d) throw ShapeError("probe latents differ in dimension");
    if (data.y[i] != 0 && data.y[i] != 1) throw DomainError("probe labels must be 0 or 1");
    (data.y[i] ? pos : neg) = true;
  }
  if (!pos || !neg) throw DegenerateDataError("probe data contains a single class");
}

void check_plane(const Hyperplane& h) {
  if (!(h.norm() > 0.0)) throw DomainError("hyperplane normal must be non-zero");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string num_list(const Vector& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + num(v[i]);
  return out + "]";
}

}  // namespace

double Hyperplane::norm() const { return std::sqrt(dot(n, n)); }

double svm_objective(const ProbeDataset& data, const Hyperplane& h, double lambda) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < data.w.size(); ++i) {
    const double y = data.y[i] ? 1.0 : -1.0;
    hinge += std::max(0.0, 1.0 - y * (dot(h.n, data.w[i]) + h.b));
  }
  return 0.5 * lambda * dot(h.n, h.n) + hinge / static_cast<double>(data.w.size());
}

Hyperplane fit_svm(const ProbeDataset& data, const SvmOptions& opt) {
  check_dataset(data);
  if (!(opt.lambda > 0.0) || opt.epochs < 1) throw DomainError("svm needs lambda > 0 and epochs >= 1");
  const std::size_t m = data.w.size(), d = data.w.front().size();
  Hyperplane h{Vector(d, 0.0), 0.0};
  Hyperplane best;
  double best_obj = INFINITY;
  Vector gn(d);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const double eta = 1.0 / (opt.lambda * (epoch + 1));
    for (std::size_t k = 0; k < d; ++k) gn[k] = opt.lambda * h.n[k];
    double gb = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double y = data.y[i] ? 1.0 : -1.0;
      if (y * (dot(h.n, data.w[i]) + h.b) < 1.0) {
        for (std::size_t k = 0; k < d; ++k) gn[k] -= y * data.w[i][k] / static_cast<double>(m);
        gb -= y / static_cast<double>(m);
      }
    }
    for (std::size_t k = 0; k < d; ++k) h.n[k] -= eta * gn[k];
    h.b -= eta * gb;
    const double obj = svm_objective(data, h, opt.lambda);
    if (obj < best_obj && h.norm() > 0.0) {
      best_obj = obj;
      best = h;
    }
  }
  if (best.n.empty()) throw NumericError("svm did not produce a non-zero normal");
  return best;
}

double logistic_probability(const Vector& w, const Hyperplane& h) {
  return 1.0 / (1.0 + std::exp(-(dot(h.n, w) + h.b)));
}

Vector logistic_gradient(const ProbeDataset& data, const Hyperplane& h, double lambda) {
  const std::size_t m = data.w.size(), d = h.n.size();
  Vector g(d + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = logistic_probability(data.w[i], h) - data.y[i];
    for (std::size_t k = 0; k < d; ++k) g[k] += r * data.w[i][k];
    g[d] += r;
  }
  for (std::size_t k = 0; k <= d; ++k) g[k] /= static_cast<double>(m);
  for (std::size_t k = 0; k < d; ++k) g[k] += lambda * h.n[k];
  return g;
}

Hyperplane fit_logistic(const ProbeDataset& data, const LogisticOptions& opt) {
  check_dataset(data);
  if (!(opt.lambda >= 0.0) || opt.epochs < 1) throw DomainError("logistic needs lambda >= 0 and epochs >= 1");
  const std::size_t m = data.w.size(), d = data.w.front().size();
  // L = lambda_max(X^T X) / (4m) + lambda for the bias-augmented design X.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d + 1, d + 1);
  for (const auto& w : data.w) {
    Eigen::VectorXd x(d + 1);
    for (std::size_t k = 0; k < d; ++k) x[k] = w[k];
    x[d] = 1.0;
    gram.selfadjointView<Eigen::Lower>().rankUpdate(x);
  }
  gram = gram.selfadjointView<Eigen::Lower>();
  const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                         .eigenvalues()
                         .maxCoeff();
  const double step = 1.0 / (top / (4.0 * static_cast<double>(m)) + opt.lambda);
  Hyperplane h{Vector(d, 0.0), 0.0};
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    const Vector g = logistic_gradient(data, h, opt.lambda);
    for (std::size_t k = 0; k < d; ++k) h.n[k] -= step * g[k];
    h.b -= step * g[d];
  }
  if (!(h.norm() > 0.0)) throw NumericError("logistic fit produced a zero normal");
  return h;
}

double signed_distance(const Vector& w, const Hyperplane& h) {
  if (w.size() != h.n.size())
    throw ShapeError("latent has " + std::to_string(w.size()) + " dims, hyperplane " +
                     std::to_string(h.n.size()));
  check_plane(h);
  return (dot(h.n, w) + h.b) / h.norm();
}

Vector unit_normal(const Hyperplane& h) {
  check_plane(h);
  Vector u = h.n;
  const double nn = h.norm();
  for (auto& v : u) v /= nn;
  return u;
}

std::string calibration_mode_name(CalibrationMode m) {
  switch (m) {
    case CalibrationMode::MeansOfExtremes: return "means-of-extremes";
    case CalibrationMode::LeastSquares: return "least-squares";
    case CalibrationMode::Polynomial: return "polynomial";
  }
  return "?";
}

CalibrationMode parse_calibration_mode(const std::string& name) {
  for (auto m : {CalibrationMode::MeansOfExtremes, CalibrationMode::LeastSquares,
                 CalibrationMode::Polynomial})
    if (calibration_mode_name(m) == name) return m;
  throw DomainError("unknown calibration mode '" + name + "'");
}

double calibrated_score(const Calibration& cal, double d) {
  double s = 0.0;
  for (auto it = cal.coeffs.rbegin(); it != cal.coeffs.rend(); ++it) s = s * d + *it;
  return s;
}

Calibration fit_calibration(const Vector& distances, const Vector& grades, CalibrationMode mode,
                            int degree, double gmax) {
  if (distances.empty() || distances.size() != grades.size())
    throw ShapeError("calibration needs one grade per distance");
  if (!(gmax > 0.0)) throw DomainError("calibration gmax must be positive");
  Calibration cal;
  cal.mode = mode;
  cal.gmax = gmax;
  cal.degree = mode == CalibrationMode::Polynomial ? degree : 1;
  if (cal.degree < 1) throw DomainError("calibration degree must be at least 1");
  const auto [lo, hi] = std::minmax_element(distances.begin(), distances.end());
  cal.d_min = *lo;
  cal.d_max = *hi;

  if (mode == CalibrationMode::MeansOfExtremes) {
    double s0 = 0.0, s1 = 0.0;
    int n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < grades.size(); ++i) {
      if (grades[i] == 0.0) {
        s0 += distances[i];
        ++n0;
      } else if (grades[i] == gmax) {
        s1 += distances[i];
        ++n1;
      }
    }
    if (n0 == 0 || n1 == 0) throw DegenerateDataError("means-of-extremes needs grade 0 and grade gmax samples");
    const double d0 = s0 / n0, d1 = s1 / n1;
    if (d1 == d0) throw CalibrationError("degenerate calibration: extreme-grade mean distances coincide");
    const double c1 = gmax / (d1 - d0);
    cal.coeffs = {-c1 * d0, c1};
    cal.grades_used = {0.0, gmax};
    return cal;
  }

  std::set<double> distinct(grades.begin(), grades.end());
  if (static_cast<int>(distinct.size()) < cal.degree + 1)
    throw DegenerateDataError("calibration of degree " + std::to_string(cal.degree) + " needs at least " +
                              std::to_string(cal.degree + 1) + " distinct grades");
  cal.grades_used.assign(distinct.begin(), distinct.end());
  const Eigen::Index m = static_cast<Eigen::Index>(distances.size());
  Eigen::MatrixXd v(m, cal.degree + 1);
  Eigen::VectorXd g(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double p = 1.0;
    for (int k = 0; k <= cal.degree; ++k, p *= distances[i]) v(i, k) = p;
    g[i] = grades[i];
  }
  const auto qr = v.colPivHouseholderQr();
  if (qr.rank() < cal.degree + 1) throw CalibrationError("calibration design matrix is rank deficient");
  const Eigen::VectorXd c = qr.solve(g);
  cal.coeffs.assign(c.data(), c.data() + c.size());
  if (cal.degree == 1) {
    if (cal.coeffs[1] == 0.0) throw CalibrationError("calibration slope is zero");
    return cal;
  }
  if (!(cal.d_max > cal.d_min)) throw CalibrationError("calibration distances have no spread");
  int sign = 0;
  double prev = calibrated_score(cal, cal.d_min);
  for (int i = 1; i < kMonotoneGrid; ++i) {
    const double d = cal.d_min + (cal.d_max - cal.d_min) * i / (kMonotoneGrid - 1);
    const double s = calibrated_score(cal, d);
    const int step_sign = s > prev ? 1 : (s < prev ? -1 : 0);
    if (step_sign == 0 || (sign != 0 && step_sign != sign))
      throw CalibrationError("calibration rejected: polynomial is not strictly monotone over the observed range");
    sign = step_sign;
    prev = s;
  }
  return cal;
}

double invert_calibration(const Calibration& cal, double target, bool allow_extrapolation) {
  if (!std::isfinite(target)) throw OutOfRangeError("target grade must be finite");
  if (!allow_extrapolation && (target < 0.0 || target > cal.gmax))
    throw OutOfRangeError("target grade " + num(target) + " outside [0, " + num(cal.gmax) + "]");
  if (cal.coeffs.size() == 2) return (target - cal.coeffs[0]) / cal.coeffs[1];
  double lo = cal.d_min, hi = cal.d_max;
  double s_lo = calibrated_score(cal, lo), s_hi = calibrated_score(cal, hi);
  const bool increasing = s_hi > s_lo;
  if (target < std::min(s_lo, s_hi) || target > std::max(s_lo, s_hi))
    throw OutOfRangeError("target grade " + num(target) + " outside the calibrated range [" +
                          num(std::min(s_lo, s_hi)) + ", " + num(std::max(s_lo, s_hi)) + "]");
  while (hi - lo > kBisectionTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if ((calibrated_score(cal, mid) < target) == increasing)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

int grade_from_score(double score, double gmax) {
  return static_cast<int>(std::round(std::clamp(score, 0.0, gmax)));
}

GradePrediction predict_grade(const Vector& w, const Hyperplane& h, const Calibration& cal) {
  GradePrediction p;
  p.distance = signed_distance(w, h);
  p.score = calibrated_score(cal, p.distance);
  p.grade = grade_from_score(p.score, cal.gmax);
  return p;
}

std::string probe_to_json(const Probe& p) {
  std::ostringstream os;
  os << "{\n  \"kind\": \"" << p.kind << "\",\n  \"n\": " << num_list(p.plane.n) << ",\n  \"b\": "
     << num(p.plane.b);
  if (p.cal) {
    const auto& c = *p.cal;
    os << ",\n  \"cal\": {\n    \"mode\": \"" << calibration_mode_name(c.mode) << "\",\n    \"degree\": "
       << c.degree << ",\n    \"coeffs\": " << num_list(c.coeffs) << ",\n    \"gmax\": " << num(c.gmax)
       << ",\n    \"range\": " << num_list({c.d_min, c.d_max}) << ",\n    \"grades\": "
       << num_list(c.grades_used) << "\n  }";
  }
  os << "\n}\n";
  return os.str();
}

Probe probe_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Probe p;
    p.kind = j.value("kind", "svm");
    p.plane.n = j.at("n").get<Vector>();
    p.plane.b = j.at("b").get<double>();
    check_plane(p.plane);
    if (j.contains("cal")) {
      const auto& c = j.at("cal");
      Calibration cal;
      cal.mode = parse_calibration_mode(c.at("mode").get<std::string>());
      cal.degree = c.at("degree").get<int>();
      cal.coeffs = c.at("coeffs").get<Vector>();
      cal.gmax = c.at("gmax").get<double>();
      if (c.contains("range")) {
        const auto r = c.at("range").get<Vector>();
        if (r.size() != 2) throw FormatError("calibration range needs two values");
        cal.d_min = r[0];
        cal.d_max = r[1];
      }
      if (c.contains("grades")) cal.grades_used = c.at("grades").get<Vector>();
      if (static_cast<int>(cal.coeffs.size()) != cal.degree + 1)
        throw FormatError("calibration has " + std::to_string(cal.coeffs.size()) +
                          " coefficients for degree " + std::to_string(cal.degree));
      p.cal = cal;
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed probe JSON: ") + e.what());
  }
}

void save_probe(const Probe& p, const std::string& path) { write_file_atomic(path, probe_to_json(p)); }

Probe load_probe(const std::string& path) { return probe_from_json(read_file(path)); }

}  // namespace latentce

#include "latentce/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include <Eigen/Dense>
#include <json.hpp>

#include "latentce/error.hpp"

namespace latentce {

namespace {

constexpr double kNegativeEigenTolerance = 1e-8;

// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

Eigen::MatrixXd to_matrix(const std::vector<Vector>& rows) {
  const std::size_t d = rows.front().size();
  Eigen::MatrixXd m(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw ShapeError("samples differ in dimension");
    for (std::size_t k = 0; k < d; ++k) m(i, k) = rows[i][k];
  }
  return m;
}

double f1_of(long tp, long fp, long fn) {
  const double p = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double r = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

void require_same_image(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("image dims differ: " + std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width));
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: one label per score required");
  long pos = 0, neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DomainError("roc_auc: labels must be 0 or 1");
    (y ? pos : neg) += 1;
  }
  if (pos == 0 || neg == 0) throw MetricError("roc_auc is undefined with a single class");
  const auto ranks = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) rank_sum += ranks[i];
  const double u = rank_sum - 0.5 * static_cast<double>(pos) * (pos + 1);
  return u / (static_cast<double>(pos) * neg);
}

double f1(const std::vector<int>& pred, const std::vector<int>& labels, F1Average avg, int num_classes) {
  if (pred.size() != labels.size()) throw ShapeError("f1: one label per prediction required");
  if (pred.empty()) throw MetricError("f1 of an empty list is undefined");
  auto class_f1 = [&](int c) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      tp += pred[i] == c && labels[i] == c;
      fp += pred[i] == c && labels[i] != c;
      fn += pred[i] != c && labels[i] == c;
    }
    return tp + fn == 0 ? 0.0 : f1_of(tp, fp, fn);
  };
  if (avg == F1Average::Binary) return class_f1(1);
  std::set<int> classes;
  if (num_classes > 0) {
    for (int c = 0; c < num_classes; ++c) classes.insert(c);
  } else {
    classes.insert(pred.begin(), pred.end());
    classes.insert(labels.begin(), labels.end());
  }
  double sum = 0.0;
  for (int c : classes) sum += class_f1(c);
  return sum / static_cast<double>(classes.size());
}

double mae(const std::vector<double>& predicted, const std::vector<double>& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("mae: lists differ in length");
  if (predicted.empty()) throw MetricError("mae of an empty list is undefined");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += std::abs(predicted[i] - truth[i]);
  return s / static_cast<double>(predicted.size());
}

double psnr(const Image& a, const Image& b) {
  require_same_image(a, b);
  if (a.size() == 0) throw MetricError("psnr of an empty image is undefined");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, int window) {
  require_same_image(a, b);
  if (window < 2 || window > a.height || window > a.width) throw ShapeError("ssim window does not fit the image");
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const double n = static_cast<double>(window) * window;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + window <= a.height; ++y)
    for (int x = 0; x + window <= a.width; ++x) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < window; ++dy)
        for (int dx = 0; dx < window; ++dx) {
          const double u = a.at(y + dy, x + dx), v = b.at(y + dy, x + dx);
          sa += u;
          sb += v;
          saa += u * u;
          sbb += v * v;
          sab += u * v;
        }
      const double ma = sa / n, mb = sb / n;
      const double va = (saa - n * ma * ma) / (n - 1), vb = (sbb - n * mb * mb) / (n - 1);
      const double cov = (sab - n * ma * mb) / (n - 1);
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

GaussianSummary summarize(const std::vector<Vector>& samples) {
  if (samples.size() < 2) throw MetricError("a Gaussian summary needs at least two samples");
  const Eigen::MatrixXd x = to_matrix(samples);
  const Eigen::VectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(samples.size() - 1);
  cov = 0.5 * (cov + cov.transpose());
  GaussianSummary g;
  g.mean.assign(mu.data(), mu.data() + mu.size());
  g.cov.assign(cov.rows(), Vector(cov.cols()));
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j) g.cov[i][j] = cov(i, j);
  return g;
}

double frechet_distance(const GaussianSummary& a, const GaussianSummary& b) {
  const std::size_t d = a.mean.size();
  if (b.mean.size() != d) throw ShapeError("frechet: summaries differ in dimension");
  Eigen::MatrixXd sa(d, d), sb(d, d);
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
    for (std::size_t j = 0; j < d; ++j) {
      sa(i, j) = a.cov[i][j];
      sb(i, j) = b.cov[i][j];
    }
  }
  if (!sa.allFinite() || !sb.allFinite()) throw NumericError("frechet: non-finite covariance");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(sa);
  const Eigen::VectorXd la = ea.eigenvalues();
  const double scale = std::max({la.cwiseAbs().maxCoeff(), 1e-300});
  if (la.minCoeff() < -kNegativeEigenTolerance * std::max(1.0, scale)) {
    std::ostringstream os;
    os << "frechet: covariance is not positive semidefinite (eigenvalue range [" << la.minCoeff() << ", "
       << la.maxCoeff() << "])";
    throw NumericError(os.str());
  }
  const Eigen::MatrixXd root_a =
      ea.eigenvectors() * la.cwiseMax(0.0).cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
  Eigen::MatrixXd m = root_a * sb * root_a;
  m = 0.5 * (m + m.transpose());
  const Eigen::VectorXd lm = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();
  if (lm.minCoeff() < -kNegativeEigenTolerance * std::max(1.0, lm.cwiseAbs().maxCoeff())) {
    std::ostringstream os;
    const double cond = la.maxCoeff() / std::max(la.minCoeff(), 1e-300);
    os << "frechet: product has negative eigenvalue " << lm.minCoeff() << " (condition number of first covariance "
       << cond << ")";
    throw NumericError(os.str());
  }
  const double trace_root = lm.cwiseMax(0.0).cwiseSqrt().sum();
  return mean_term + sa.trace() + sb.trace() - 2.0 * trace_root;
}

double latent_frechet(const std::vector<Vector>& a, const std::vector<Vector>& b) {
  if (a.empty() || b.empty()) throw MetricError("frechet: empty latent set");
  const std::size_t d = a.front().size();
  if (a.size() <= d || b.size() <= d)
    throw MetricError("frechet: each set needs more samples than dimensions (" + std::to_string(d) + ")");
  return frechet_distance(summarize(a), summarize(b));
}

PcaResult pca_project(const std::vector<Vector>& samples, int k) {
  if (k < 1) throw DomainError("pca: k must be at least 1");
  if (samples.size() < static_cast<std::size_t>(k) + 1) throw MetricError("pca: need at least k+1 samples");
  const Eigen::MatrixXd x = to_matrix(samples);
  if (k > x.cols()) throw DomainError("pca: k exceeds the dimension");
  const Eigen::VectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
  Eigen::MatrixXd cov = (c.transpose() * c) / static_cast<double>(samples.size() - 1);
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::Index d = cov.rows();

  PcaResult r;
  r.mean.assign(mu.data(), mu.data() + d);
  const double total = std::max(es.eigenvalues().sum(), 0.0);
  for (Eigen::Index i = d - 1; i >= 0; --i) r.eigenvalues.push_back(std::max(es.eigenvalues()[i], 0.0));
  const double top = r.eigenvalues.front();
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - j);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    r.components.emplace_back(v.data(), v.data() + d);
    r.explained_variance_ratio.push_back(total > 0.0 ? r.eigenvalues[j] / total : 0.0);
    if (!(r.eigenvalues[j] > 1e-12 * std::max(top, 1e-300))) r.rank_deficient = true;
  }
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    Vector p(k);
    for (int j = 0; j < k; ++j)
      for (Eigen::Index q = 0; q < d; ++q) p[j] += c(i, q) * r.components[j][q];
    r.coords.push_back(std::move(p));
  }
  return r;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("spearman: lists differ in length");
  if (x.size() < 2) throw MetricError("spearman needs at least two points");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw MetricError("spearman is undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& pred, const std::vector<int>& labels,
                                               int num_classes) {
  if (pred.size() != labels.size()) throw ShapeError("confusion: one label per prediction required");
  std::vector<std::vector<int>> m(num_classes, std::vector<int>(num_classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || pred[i] < 0 || pred[i] >= num_classes)
      throw DomainError("confusion: class index out of range");
    ++m[labels[i]][pred[i]];
  }
  return m;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j = {{"task", r.task},         {"auc", r.auc}, {"f1_binary", r.f1_binary},
                      {"f1_macro", r.f1_macro}, {"mae", r.mae}, {"n_samples", r.n_samples},
                      {"confusion", r.confusion}};
  for (const auto& [k, v] : r.extra) j["extra"][k] = v;
  return j.dump(2);
}

std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  char line[96];
  auto row = [&](const std::string& name, double v) {
    std::snprintf(line, sizeof line, "%-32s %12.4f\n", name.c_str(), v);
    os << line;
  };
  os << "task: " << r.task << "  (n = " << r.n_samples << ")\n";
  row("detection AUC", r.auc);
  row("detection F1 (binary)", r.f1_binary);
  row("grading F1 (macro)", r.f1_macro);
  row("grading MAE", r.mae);
  for (const auto& [k, v] : r.extra) row(k, v);
  if (!r.confusion.empty()) {
    os << "confusion (rows true, cols predicted)\n";
    for (std::size_t i = 0; i < r.confusion.size(); ++i) {
      os << "  G" << i << ":";
      for (int c : r.confusion[i]) {
        std::snprintf(line, sizeof line, " %5d", c);
        os << line;
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace latentce

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentce/pipeline.hpp"

namespace latentce::cli {

namespace fs = std::filesystem;

// Artifact root: LATENT_CE_HOME if set, otherwise ./latentce_home.
fs::path default_home();

struct GenerateOptions {
  int n = 1000;
  std::uint64_t seed = 42;
  std::vector<double> fractions{0.6, 0.2, 0.1, 0.1};
  fs::path out;
};
int run_generate(const GenerateOptions& o);

struct TrainOptions {
  fs::path corpus;
  fs::path checkpoint;
  fs::path trace;
  long long steps = 20000;
  int batch = 64;
  double lr = 1e-4;
  std::uint64_t seed = 42;
  int latent_dim = 32;
  long long checkpoint_every = 1000;
  bool quiet = false;
};
int run_train(const TrainOptions& o);

struct EmbedOptions {
  fs::path corpus;
  fs::path checkpoint;
  fs::path out;
  std::vector<std::string> splits;
};
int run_embed(const EmbedOptions& o);

struct FitProbeOptions {
  fs::path corpus;
  fs::path latents;
  fs::path out;
  std::string kind = "svm";
  double lambda = -1.0;  // negative selects the classifier default
  int epochs = -1;
  std::uint64_t seed = 42;
};
int run_fit_probe(const FitProbeOptions& o);

struct CalibrateOptions {
  fs::path corpus;
  fs::path latents;
  fs::path probe;
  fs::path out;
  std::string mode = "means-of-extremes";
  int degree = 1;
  std::string split = "calibrate";
};
int run_calibrate(const CalibrateOptions& o);

struct EvaluateOptions {
  fs::path corpus;
  fs::path latents;
  fs::path probe;
  fs::path checkpoint;  // optional: adds reconstruction metrics
  fs::path out;
  std::string split = "test";
  int recon_limit = 100;
  int encode_steps = 250;
  int decode_steps = 100;
};
int run_evaluate(const EvaluateOptions& o);

struct CounterfactualOptions {
  fs::path corpus;
  fs::path checkpoint;
  fs::path probe;
  fs::path out;
  int id = -1;
  std::string mode;  // reflect | target-grade | sweep; inferred when empty
  std::vector<double> grades;
  std::vector<double> offsets;
  bool allow_extrapolation = false;
  int encode_steps = 250;
  int decode_steps = 100;
};
int run_counterfactual(const CounterfactualOptions& o);

struct ProjectOptions {
  fs::path corpus;
  fs::path latents;
  fs::path out;
  std::string split = "test";
  int k = 2;
};
int run_project(const ProjectOptions& o);

struct ServeOptions {
  fs::path corpus;
  fs::path checkpoint;
  fs::path probe;
  fs::path latents;
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 2;
  int encode_steps = 250;
  int decode_steps = 100;
  std::string cors_origin = "*";
};
int run_serve(const ServeOptions& o);

// PCA coordinates of the split's latents with ids, grades and severities.
nlohmann::json projection_json(const std::vector<const SyntheticSample*>& samples, const LatentTable& latents,
                               int k, const std::string& split);

}  // namespace latentce::cli

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "latentce/dae.hpp"
#include "latentce/geometry.hpp"
#include "latentce/image.hpp"

namespace latentce {

// w - 2 dist(w, P) n/|n|: mirror image across the hyperplane.
Vector reflect(const Vector& w, const Hyperplane& h);
// Moves w along n/|n| until its calibrated score equals `target`.
Vector shift_to_grade(const Vector& w, const Hyperplane& h, const Calibration& cal, double target,
                      bool allow_extrapolation = false);
// w + offset n/|n| (uncalibrated move).
Vector shift_by_distance(const Vector& w, const Hyperplane& h, double offset);
// One shifted latent per grade, in input order. Without extrapolation grades
// are clamped to [0, gmax].
std::vector<Vector> sweep(const Vector& w, const Hyperplane& h, const Calibration& cal,
                          std::span<const double> grades, bool allow_extrapolation = false);
std::vector<Vector> sweep_offsets(const Vector& w, const Hyperplane& h, std::span<const double> offsets);

enum class CeMode { Reflect, TargetGrade, Sweep, Offsets };
std::string ce_mode_name(CeMode m);
CeMode parse_ce_mode(const std::string& name);

struct CounterfactualRequest {
  CeMode mode = CeMode::Reflect;
  std::vector<double> grades;   // target-grade (one) or sweep (two or more)
  std::vector<double> offsets;  // uncalibrated sweep
  bool allow_extrapolation = false;
  int encode_steps = kEncodeSteps;
  int decode_steps = kDecodeSteps;
};
// Throws DomainError when the request is inconsistent with its mode.
void validate_request(const CounterfactualRequest& req, double gmax);

struct CounterfactualFrame {
  double target = 0.0;  // grade, offset, or -score for reflection
  Vector latent;
  double distance = 0.0;
  double score = 0.0;
  int grade = 0;
  Image image;
};

struct CounterfactualResult {
  CeMode mode = CeMode::Reflect;
  Vector latent;
  double distance = 0.0;
  double score = 0.0;
  int grade = 0;
  nn::Tensor x_T;  // the stochastic latent shared by every frame
  Image reconstruction;
  std::vector<CounterfactualFrame> frames;
};

// Encodes each source once, edits its semantic latent, and decodes every frame
// (plus the reconstruction) with the source's original x_T.
std::vector<CounterfactualResult> generate_ce(const DaeModel& model, const Probe& probe,
                                              std::span<const Image* const> sources,
                                              const CounterfactualRequest& req);
CounterfactualResult generate_ce(const DaeModel& model, const Probe& probe, const Image& source,
                                 const CounterfactualRequest& req);

// JSON document with original and edited distances, scores and latents.
// Images are embedded as flat pixel arrays when `inline_images` is set.
std::string ce_result_json(const CounterfactualResult& r, int id, bool inline_images);
// Writes ce_<id>.json plus ce_<id>_<grade>.pgm frames and ce_<id>_recon.pgm.
std::vector<std::filesystem::path> write_ce_outputs(const CounterfactualResult& r, int id,
                                                    const std::filesystem::path& dir);
std::string frame_label(const CounterfactualResult& r, std::size_t frame);

}  // namespace latentce

#include <iostream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "commands.hpp"
#include "latentce/error.hpp"

namespace cli = latentce::cli;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    out.push_back(std::stod(item, &used));
    if (used != item.size()) throw CLI::ValidationError("list", "bad number '" + item + "'");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Activation buffers are large and short-lived; keeping them on the heap
  // instead of fresh mmap regions avoids a page-fault storm every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"latentce: diffusion-autoencoder latent grading and counterfactuals"};
  app.require_subcommand(1);
  std::string home_flag;
  app.add_option("--home", home_flag, "Artifact directory (default: $LATENT_CE_HOME or ./latentce_home)");

  // Defaults are resolved after parsing so --home can move every artifact.
  auto home = [&] { return home_flag.empty() ? cli::default_home() : cli::fs::path(home_flag); };
  auto or_default = [](cli::fs::path& p, const cli::fs::path& d) {
    if (p.empty()) p = d;
  };

  cli::GenerateOptions gen;
  std::string fractions = "0.6,0.2,0.1,0.1";
  auto* g = app.add_subcommand("generate-data", "Generate the synthetic graded corpus");
  g->add_option("--n", gen.n, "Number of samples")->capture_default_str();
  g->add_option("--seed", gen.seed, "Corpus seed")->capture_default_str();
  g->add_option("--fractions", fractions, "train-dae,train-probe,calibrate,test fractions")
      ->capture_default_str();
  g->add_option("--out", gen.out, "Output directory (default: <home>/data)");

  cli::TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train the diffusion autoencoder");
  t->add_option("--corpus", tr.corpus, "Corpus directory or manifest");
  t->add_option("--checkpoint", tr.checkpoint, "Checkpoint output (default: <home>/model.daec)");
  t->add_option("--trace", tr.trace, "Loss trace JSON (default: <home>/train_trace.json)");
  t->add_option("--steps", tr.steps, "Optimisation steps")->capture_default_str();
  t->add_option("--batch", tr.batch, "Batch size")->capture_default_str();
  t->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  t->add_option("--seed", tr.seed, "Training seed")->capture_default_str();
  t->add_option("--latent-dim", tr.latent_dim, "Semantic latent dimension")->capture_default_str();
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Periodic checkpoint interval, 0 disables")
      ->capture_default_str();
  t->add_flag("--quiet", tr.quiet, "Suppress progress output");

  cli::EmbedOptions em;
  auto* e = app.add_subcommand("embed", "Compute semantic latents for corpus splits");
  e->add_option("--corpus", em.corpus, "Corpus directory or manifest");
  e->add_option("--checkpoint", em.checkpoint, "Model checkpoint");
  e->add_option("--out", em.out, "Latent cache directory (default: <home>/latents)");
  e->add_option("--split", em.splits, "Split(s) to embed (default: all)");

  cli::FitProbeOptions fp;
  auto* f = app.add_subcommand("fit-probe", "Fit a linear probe on train-probe latents");
  f->add_option("--corpus", fp.corpus, "Corpus directory or manifest");
  f->add_option("--latents", fp.latents, "Latent cache directory");
  f->add_option("--out", fp.out, "Probe JSON (default: <home>/probe.json)");
  f->add_option("--kind", fp.kind, "svm or logistic")->check(CLI::IsMember({"svm", "logistic"}))
      ->capture_default_str();
  f->add_option("--lambda", fp.lambda, "L2 strength (default: 1e-3 svm, 1e-4 logistic)");
  f->add_option("--epochs", fp.epochs, "Epochs (default: 200 svm, 500 logistic)");
  f->add_option("--seed", fp.seed, "Seed")->capture_default_str();

  cli::CalibrateOptions ca;
  auto* c = app.add_subcommand("calibrate", "Fit the distance-to-grade calibration");
  c->add_option("--corpus", ca.corpus, "Corpus directory or manifest");
  c->add_option("--latents", ca.latents, "Latent cache directory");
  c->add_option("--probe", ca.probe, "Probe JSON to read");
  c->add_option("--out", ca.out, "Probe JSON to write (default: overwrite --probe)");
  c->add_option("--mode", ca.mode, "means-of-extremes, least-squares or polynomial")
      ->check(CLI::IsMember({"means-of-extremes", "least-squares", "polynomial"}))
      ->capture_default_str();
  c->add_option("--degree", ca.degree, "Polynomial degree")->capture_default_str();
  c->add_option("--split", ca.split, "Split providing calibration samples")->capture_default_str();

  cli::EvaluateOptions ev;
  auto* v = app.add_subcommand("evaluate", "Detection, grading and reconstruction metrics");
  v->add_option("--corpus", ev.corpus, "Corpus directory or manifest");
  v->add_option("--latents", ev.latents, "Latent cache directory");
  v->add_option("--probe", ev.probe, "Calibrated probe JSON");
  v->add_option("--checkpoint", ev.checkpoint, "Model checkpoint; enables reconstruction metrics");
  v->add_option("--out", ev.out, "Report directory (default: <home>/eval)");
  v->add_option("--split", ev.split, "Evaluation split")->capture_default_str();
  v->add_option("--recon-limit", ev.recon_limit, "Images used for reconstruction metrics")
      ->capture_default_str();
  v->add_option("--encode-steps", ev.encode_steps, "DDIM inversion steps")->capture_default_str();
  v->add_option("--decode-steps", ev.decode_steps, "DDIM generation steps")->capture_default_str();

  cli::CounterfactualOptions cf;
  std::string offsets;
  auto* x = app.add_subcommand("counterfactual", "Generate counterfactual images for one sample");
  x->add_option("--corpus", cf.corpus, "Corpus directory or manifest");
  x->add_option("--checkpoint", cf.checkpoint, "Model checkpoint");
  x->add_option("--probe", cf.probe, "Calibrated probe JSON");
  x->add_option("--out", cf.out, "Output directory (default: <home>/ce)");
  x->add_option("--id", cf.id, "Sample id")->required();
  x->add_option("--mode", cf.mode, "reflect, target-grade or sweep")
      ->check(CLI::IsMember({"reflect", "target-grade", "sweep"}));
  x->add_option("--grade", cf.grades, "Target grade(s); several imply a sweep");
  x->add_option("--offsets", offsets, "Uncalibrated sweep: comma-separated distance offsets");
  x->add_flag("--allow-extrapolation", cf.allow_extrapolation, "Permit grades outside [0, 3]");
  x->add_option("--encode-steps", cf.encode_steps, "DDIM inversion steps")->capture_default_str();
  x->add_option("--decode-steps", cf.decode_steps, "DDIM generation steps")->capture_default_str();

  cli::ProjectOptions pr;
  auto* p = app.add_subcommand("project", "PCA projection of split latents");
  p->add_option("--corpus", pr.corpus, "Corpus directory or manifest");
  p->add_option("--latents", pr.latents, "Latent cache directory");
  p->add_option("--out", pr.out, "Projection JSON (default: <home>/projection_<split>.json)");
  p->add_option("--split", pr.split, "Split")->capture_default_str();
  p->add_option("--k", pr.k, "Components")->capture_default_str();

  cli::ServeOptions sv;
  auto* s = app.add_subcommand("serve", "Run the HTTP service");
  s->add_option("--corpus", sv.corpus, "Corpus directory or manifest");
  s->add_option("--checkpoint", sv.checkpoint, "Model checkpoint");
  s->add_option("--probe", sv.probe, "Calibrated probe JSON");
  s->add_option("--latents", sv.latents, "Latent cache directory (for projections)");
  s->add_option("--host", sv.host, "Bind address")->capture_default_str();
  s->add_option("--port", sv.port, "Port")->capture_default_str();
  s->add_option("--workers", sv.workers, "Concurrent generation jobs")->capture_default_str();
  s->add_option("--encode-steps", sv.encode_steps, "DDIM inversion steps")->capture_default_str();
  s->add_option("--decode-steps", sv.decode_steps, "DDIM generation steps")->capture_default_str();
  s->add_option("--cors-origin", sv.cors_origin, "Access-Control-Allow-Origin value")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
    if (!fractions.empty()) gen.fractions = parse_list(fractions);
    if (!offsets.empty()) cf.offsets = parse_list(offsets);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n" << app.help();
    return kExitUsage;
  }

  const auto h = home();
  const auto data = h / "data";
  const auto model = h / "model.daec";
  const auto latents = h / "latents";
  const auto probe = h / "probe.json";
  try {
    if (*g) {
      or_default(gen.out, data);
      return cli::run_generate(gen);
    }
    if (*t) {
      or_default(tr.corpus, data);
      or_default(tr.checkpoint, model);
      or_default(tr.trace, h / "train_trace.json");
      return cli::run_train(tr);
    }
    if (*e) {
      or_default(em.corpus, data);
      or_default(em.checkpoint, model);
      or_default(em.out, latents);
      return cli::run_embed(em);
    }
    if (*f) {
      or_default(fp.corpus, data);
      or_default(fp.latents, latents);
      or_default(fp.out, probe);
      return cli::run_fit_probe(fp);
    }
    if (*c) {
      or_default(ca.corpus, data);
      or_default(ca.latents, latents);
      or_default(ca.probe, probe);
      or_default(ca.out, ca.probe);
      return cli::run_calibrate(ca);
    }
    if (*v) {
      or_default(ev.corpus, data);
      or_default(ev.latents, latents);
      or_default(ev.probe, probe);
      or_default(ev.out, h / "eval");
      return cli::run_evaluate(ev);
    }
    if (*x) {
      or_default(cf.corpus, data);
      or_default(cf.checkpoint, model);
      or_default(cf.probe, probe);
      or_default(cf.out, h / "ce");
      return cli::run_counterfactual(cf);
    }
    if (*p) {
      or_default(pr.corpus, data);
      or_default(pr.latents, latents);
      or_default(pr.out, h / ("projection_" + pr.split + ".json"));
      return cli::run_project(pr);
    }
    if (*s) {
      or_default(sv.corpus, data);
      or_default(sv.checkpoint, model);
      or_default(sv.probe, probe);
      or_default(sv.latents, latents);
      return cli::run_serve(sv);
    }
  } catch (const latentce::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& err) {
    std::cerr << "internal error: " << err.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}

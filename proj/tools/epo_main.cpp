#include <iostream>

#include "CLI11.hpp"
#include "epo/app/commands.hpp"

namespace {

struct CommonFlags {
  std::string config;
  epo::app::Overrides o;
};

/// Flags shared by every pipeline command.
void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.o.seed, "Global seed");
  cmd->add_option("--out", f.o.out, "Output directory");
  cmd->add_option("--method", f.o.method, "Refinement loss")->check(CLI::IsMember({"epo-list", "epo-pair", "flowdpo"}));
  cmd->add_option("--sampler", f.o.sampler, "Sampler")->check(CLI::IsMember({"sde", "ode-euler", "ode-heun"}));
  cmd->add_option("--steps", f.o.steps, "Sampler steps T")->check(CLI::PositiveNumber);
  cmd->add_option("--score-norm", f.o.score_norm, "SDE diffusion strength w")->check(CLI::NonNegativeNumber);
  cmd->add_option("--beta", f.o.beta, "Preference temperature")->check(CLI::PositiveNumber);
  cmd->add_option("--k", f.o.k, "List size K")->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  cmd->add_option("--potential", f.o.potential, "Potential preset name");
}

epo::io::RunConfig resolve(const CommonFlags& f) {
  epo::io::RunConfig cfg = f.config.empty() ? epo::io::RunConfig{} : epo::io::load_run_config(f.config);
  return epo::app::apply_overrides(std::move(cfg), f.o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-ranked preference refinement of flow-matching models on analytic landscapes"};
  app.require_subcommand(1);

  CommonFlags pre_f, ref_f, smp_f, ev_f;
  std::string ref_ckpt, ref_resume, smp_ckpt, ev_samples, ev_ckpt, corrupt;
  std::size_t n = 1000, configs = 100;
  std::uint64_t gc_seed = 0;

  auto* pre = app.add_subcommand("pretrain", "Flow-matching pretraining on a (possibly biased) dataset");
  add_common(pre, pre_f);
  pre->add_option("--epochs", pre_f.o.epochs, "Training epochs");

  auto* ref = app.add_subcommand("refine", "Energy-ranked preference refinement of a pretrained checkpoint");
  add_common(ref, ref_f);
  ref->add_option("--checkpoint", ref_ckpt, "Pretrained checkpoint")->check(CLI::ExistingFile);
  ref->add_option("--resume", ref_resume, "Periodic refine checkpoint to continue from")->check(CLI::ExistingFile);
  ref->add_option("--iterations", ref_f.o.iterations, "Refinement iterations");

  auto* smp = app.add_subcommand("sample", "Draw samples from a checkpoint");
  add_common(smp, smp_f);
  smp->add_option("--checkpoint", smp_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  smp->add_option("--n", n, "Number of samples");

  auto* ev = app.add_subcommand("eval", "Metrics of samples against a reference ensemble");
  add_common(ev, ev_f);
  ev->add_option("--samples", ev_samples, "Samples CSV")->check(CLI::ExistingFile);
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint to sample from instead")->check(CLI::ExistingFile);
  ev->add_option("--reference", ev_f.o.reference, "mh-oracle or a reference CSV path");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  gc->add_option("--seed", gc_seed, "Seed of the random configurations");
  gc->add_option("--configs", configs, "Configurations per loss")->check(CLI::PositiveNumber);
  gc->add_option("--corrupt", corrupt, "Perturb the analytic gradient of this loss (negative control)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pre) return epo::app::cmd_pretrain(resolve(pre_f), std::cerr);
    if (*ref) return epo::app::cmd_refine(resolve(ref_f), ref_ckpt, ref_resume, std::cerr);
    if (*smp) return epo::app::cmd_sample(resolve(smp_f), smp_ckpt, n, std::cerr);
    if (*ev) return epo::app::cmd_eval(resolve(ev_f), ev_samples, ev_ckpt, std::cerr);
    if (*gc) return epo::app::cmd_gradcheck(gc_seed, configs, corrupt, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

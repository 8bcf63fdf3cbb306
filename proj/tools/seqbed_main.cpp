#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "seqbed/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sequential experimental design with contrastive information rewards"};
  std::string command;
  std::string config_path;
  std::string checkpoint;
  std::uint64_t seed = 0;
  std::string out_dir;
  int threads = 1;

  app.add_option("command", command, "train, eval, baseline, generalize or oracle")
      ->required()
      ->check(CLI::IsMember({"train", "eval", "baseline", "generalize", "oracle"}));
  app.add_option("--config", config_path, "Run configuration (YAML)")->required();
  auto* checkpoint_opt = app.add_option("--checkpoint", checkpoint, "Trained agent checkpoint");
  auto* seed_opt = app.add_option("--seed", seed, "Overrides run.seed");
  auto* out_opt = app.add_option("--out", out_dir, "Overrides run.output_dir");
  auto* threads_opt =
      app.add_option("--threads", threads, "Evaluation worker threads")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    seqbed::cli::RunConfig config = seqbed::cli::load_config(config_path);
    seqbed::cli::Overrides overrides;
    if (*seed_opt) overrides.seed = seed;
    if (*out_opt) overrides.output_dir = out_dir;
    if (*threads_opt) overrides.threads = threads;
    seqbed::cli::apply_overrides(config, overrides);

    std::optional<std::filesystem::path> ckpt;
    if (*checkpoint_opt) ckpt = checkpoint;

    if (command == "train") return seqbed::cli::cmd_train(config);
    if (command == "eval") {
      if (!ckpt) {
        std::cerr << "seqbed: eval requires --checkpoint\n";
        return 2;
      }
      return seqbed::cli::cmd_eval(config, *ckpt);
    }
    if (command == "baseline") return seqbed::cli::cmd_baseline(config);
    if (command == "generalize") return seqbed::cli::cmd_generalize(config, ckpt);
    return seqbed::cli::cmd_oracle(config, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "seqbed: " << e.what() << '\n';
    return 1;
  }
}

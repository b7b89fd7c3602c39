#include <fmt/format.h>

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "aesynth/pipeline.hpp"

using namespace aesynth;

namespace {

struct Common {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

void add_threads(CLI::App *cmd, Common &c) {
  cmd->add_option("--threads", c.threads, "Worker threads (default: AE_SYNTH_THREADS, else 1)");
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Acoustoelectric imaging simulator and reconstruction toolkit"};
  app.require_subcommand(1);
  Common c;

  auto *simulate = app.add_subcommand("simulate", "Simulate channel data for a scenario");
  bool no_noise = false;
  simulate->add_option("--scenario", c.scenario, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", c.out, "Output channel file")->required();
  simulate->add_option("--seed", c.seed, "Override the scenario seed");
  simulate->add_flag("--no-noise", no_noise, "Disable thermal noise");
  add_threads(simulate, c);

  auto *reconstruct = app.add_subcommand("reconstruct", "Beamform a channel file into images");
  std::string channel_file;
  std::string method = "auto";
  std::optional<double> f_number;
  std::optional<std::string> weighting;
  bool amplitude_correct = false;
  reconstruct->add_option("channel_file", channel_file, "Channel file")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--out", c.out, "Output prefix")->required();
  reconstruct->add_option("--scenario", c.scenario, "Scenario supplying grid, pulse and defaults")
      ->check(CLI::ExistingFile);
  reconstruct->add_option("--method", method, "auto, sa or fus")
      ->check(CLI::IsMember({"auto", "sa", "fus"}));
  reconstruct->add_option("--f-number", f_number, "Receive F-number")->check(CLI::PositiveNumber);
  reconstruct->add_option("--weighting", weighting, "none, cf or cfpl")
      ->check(CLI::IsMember({"none", "cf", "cfpl"}));
  reconstruct->add_flag("--amplitude-correct", amplitude_correct, "Also emit beam map and corrected image");
  add_threads(reconstruct, c);

  auto *evaluate = app.add_subcommand("evaluate", "Compute metrics for reconstructed images");
  std::vector<std::string> images;
  evaluate->add_option("images", images, "Image CSV files (with .meta.txt sidecars)")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--scenario", c.scenario, "Scenario declaring the targets")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("--out", c.out, "Metrics CSV")->required();

  auto *suite = app.add_subcommand("paper-suite", "Run the bundled phantom experiment matrix");
  std::uint64_t suite_seed = 1;
  bool suite_no_noise = false;
  suite->add_option("--out", c.out, "Output directory")->required();
  suite->add_option("--seed", suite_seed, "Noise seed");
  suite->add_flag("--no-noise", suite_no_noise, "Noiseless run with localization checks");
  add_threads(suite, c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      const ChannelDigest digest = cmd_simulate(c.scenario, c.out, {c.seed, no_noise, c.threads});
      fmt::print("{}\n", digest.line());
    } else if (reconstruct->parsed()) {
      const ChannelDataSet data = read_channel_file(channel_file);
      std::optional<Scenario> scenario;
      if (!c.scenario.empty()) scenario = load_scenario(c.scenario);
      ReconstructSettings settings = settings_for(data, scenario);
      settings.method = method == "sa" ? MethodChoice::SA : method == "fus" ? MethodChoice::FUS : MethodChoice::Auto;
      if (f_number) settings.f_number = *f_number;
      if (weighting) settings.weighting = parse_weighting(*weighting);
      if (amplitude_correct) settings.amplitude_correct = true;
      settings.threads = resolve_threads(c.threads);
      const auto written = write_reconstruction(reconstruct_dataset(data, settings), c.out);
      for (const auto &p : written) fmt::print("{}\n", p.string());
    } else if (evaluate->parsed()) {
      std::vector<std::filesystem::path> paths(images.begin(), images.end());
      const EvaluateResult result = cmd_evaluate(paths, c.scenario, c.out);
      fmt::print("{}", result.metrics_csv);
    } else if (suite->parsed()) {
      const SuiteResult result = paper_suite(c.out, suite_seed, suite_no_noise, c.threads);
      fmt::print("{}", result.summary);
      return result.ok() ? 0 : 1;
    }
  } catch (const Error &e) {
    fmt::print(stderr, "error [{}]: {}\n", to_string(e.code()), e.what());
    return 2;
  } catch (const std::exception &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}

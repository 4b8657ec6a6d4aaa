// Command-line front end: ringform <estimate|form|pipeline|sweep|spectral> --config FILE
#include "ringform/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace ringform::cli;

  CLI::App app{"Ring-swarm cardinality estimation and polygon formation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> stride;

  for (Mode m : {Mode::Estimate, Mode::Form, Mode::Pipeline, Mode::Sweep, Mode::Spectral}) {
    auto* sub = app.add_subcommand(to_string(m));
    sub->add_option("-c,--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("-o,--out", out_dir, "override the output directory");
    sub->add_option("--stride", stride, "override the trace snapshot stride");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  const Mode mode = *parse_mode(app.get_subcommands().front()->get_name());
  try {
    RunConfig config = load_config(config_path, mode);
    if (seed) config.seed = *seed;
    if (out_dir) config.output_dir = *out_dir;
    if (stride) config.stride = *stride;
    validate(config);

    const RunOutcome out = execute(config);
    if (out.exit_code != kOk) std::cerr << "ringform: " << out.message << '\n';
    std::cout << out.summary.dump(2) << '\n';
    return out.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "ringform: config error at " << e.what() << '\n';
    return kConfigError;
  } catch (const ringform::InvalidArgument& e) {
    std::cerr << "ringform: invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const ringform::DivergenceError& e) {
    std::cerr << "ringform: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "ringform: " << e.what() << '\n';
    return kInternal;
  }
}

#include <exception>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recseg/cli/commands.hpp"
#include "recseg/cli/config.hpp"
#include "recseg/core/error.hpp"

namespace {

// Builds the run configuration for one verb: optional --config file, then
// any number of --key value overrides collected as extras.
recseg::KeyValueConfig merge_config(const std::string& config_path,
                                    const std::vector<std::string>& extras) {
  recseg::KeyValueConfig cfg;
  if (!config_path.empty())
    cfg = recseg::KeyValueConfig::from_file(config_path);
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& token = extras[i];
    if (token.rfind("--", 0) != 0 || token.size() <= 2)
      throw recseg::ConfigError("expected --key value, got '" + token + "'");
    std::string key = token.substr(2);
    std::string value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (i + 1 >= extras.size())
        throw recseg::ConfigError("missing value for --" + key);
      value = extras[++i];
    }
    cfg.set(key, value);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "recseg: recursive-approximation multi-task segmentation pipeline"};
  app.require_subcommand(1);

  struct Verb {
    const char* name;
    const char* help;
    void (*run)(recseg::KeyValueConfig&);
  };
  const Verb verbs[] = {
      {"gen-data", "generate a synthetic dataset (train/val/test splits)",
       recseg::cmd_gen_data},
      {"train", "run recursive multi-task training", recseg::cmd_train},
      {"evolve", "grow a seed mask toward a prediction mask",
       recseg::cmd_evolve},
      {"eval", "evaluate a checkpoint against ground truth",
       recseg::cmd_eval},
      {"infer", "segment one image with a trained checkpoint",
       recseg::cmd_infer},
  };

  struct Parsed {
    std::string config_path;
    CLI::App* sub = nullptr;
    void (*run)(recseg::KeyValueConfig&) = nullptr;
  };
  std::vector<Parsed> parsed(std::size(verbs));
  for (std::size_t i = 0; i < std::size(verbs); ++i) {
    CLI::App* sub = app.add_subcommand(verbs[i].name, verbs[i].help);
    sub->add_option("--config", parsed[i].config_path,
                    "key = value configuration file");
    sub->allow_extras();
    sub->footer("Any config key can be overridden with --key value.");
    parsed[i].sub = sub;
    parsed[i].run = verbs[i].run;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (const Parsed& p : parsed) {
      if (!p.sub->parsed()) continue;
      recseg::KeyValueConfig cfg =
          merge_config(p.config_path, p.sub->remaining());
      p.run(cfg);
      return 0;
    }
    std::cerr << "no command selected\n";
    return 2;
  } catch (const recseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const recseg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const recseg::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

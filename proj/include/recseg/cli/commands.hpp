#pragma once

#include "recseg/cli/config.hpp"

namespace recseg {

// Command entry points. Each consumes its keys from the config (unknown
// keys are fatal), runs the pipeline stage, and prints a short summary to
// stdout. Errors surface as ConfigError / DataError / NumericError, which
// the binary maps to exit codes 2 / 3 / 4.
void cmd_gen_data(KeyValueConfig& cfg);
void cmd_train(KeyValueConfig& cfg);
void cmd_evolve(KeyValueConfig& cfg);
void cmd_eval(KeyValueConfig& cfg);
void cmd_infer(KeyValueConfig& cfg);

}  // namespace recseg

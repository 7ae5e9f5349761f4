#pragma once

// Command-line front end. run_cli is the whole program minus process exit, so
// tests can drive every subcommand in-process.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kpreg/losses.hpp"
#include "kpreg/optimizer.hpp"
#include "kpreg/synth.hpp"

namespace kpreg::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kInput = 2,   // parse, validation and I/O failures
    kNumeric = 3, // numerical failures, failing gradient checks
};

struct RunManifest {
    std::string command;
    LossFamily loss = LossFamily::nn_cyc;
    Direction direction = Direction::symmetric;
    Model model = Model::affine;
    OptimizerConfig optimizer;
    double alpha = 0.1;
    std::uint64_t seed = 0;
    std::string input;
    std::string output;
    std::string results;
    std::string series;
    Regime regime = Regime::easy;
    std::size_t pairs = 100;
    bool inject_fault = false;

    /// Throws ConfigInvalidError (e.g. a cyclic loss in a one-sided direction).
    void validate() const;
};

/// Parses argv-style arguments (without the program name) and runs the
/// subcommand. Returns the process exit status.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

int cmd_register(const RunManifest &m, std::ostream &out);
int cmd_eval(const RunManifest &m, std::ostream &out);
int cmd_synth(const RunManifest &m, std::ostream &out);
int cmd_gradcheck(const RunManifest &m, std::ostream &out);
int cmd_ablate(const RunManifest &m, std::ostream &out);

struct AblationCell {
    Regime regime;
    LossFamily loss;
    double mean_pck = 0.0;
    std::vector<double> per_pair;
};

/// NN and NN-Cyc (symmetric, affine) on `pairs` easy and `pairs` hard pairs.
std::vector<AblationCell> run_ablation(std::size_t pairs, std::uint64_t seed, const OptimizerConfig &cfg);

} // namespace kpreg::cli

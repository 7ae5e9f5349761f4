#pragma once

// Dataset and results files. Both are JSON documents with a "format_version"
// field (currently "1"); the grammar is documented in README.md.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "kpreg/metrics.hpp"
#include "kpreg/optimizer.hpp"
#include "kpreg/sample.hpp"

namespace kpreg {

inline constexpr const char *kFormatVersion = "1";

/// Parse a dataset document; pixel keypoints are divided per axis by their
/// image width and height. Throws ParseError, ValidationError.
std::vector<PairSample> parse_dataset(const nlohmann::json &doc);
/// Throws IoError, ParseError, ValidationError.
std::vector<PairSample> load_dataset(const std::filesystem::path &path);

nlohmann::json dataset_to_json(std::span<const PairSample> samples);
/// Writes keypoints back in pixel units. Throws IoError.
void save_dataset(std::span<const PairSample> samples, const std::filesystem::path &path);

nlohmann::json transform_to_json(const Transform &t);
/// Throws ParseError.
Transform transform_from_json(const nlohmann::json &j);

struct PairResult {
    std::string pair_id;
    std::optional<std::string> category;
    std::optional<double> pck; ///< absent when the pair has no ground truth
    RegistrationResult registration;
};

struct ResultsFile {
    nlohmann::json config = nlohmann::json::object(); ///< echo of the run settings
    double alpha = 0.1;
    std::vector<PairResult> pairs;
    PckReport report;
};

nlohmann::json results_to_json(const ResultsFile &results);
/// Throws ParseError.
ResultsFile results_from_json(const nlohmann::json &doc);

/// Throws IoError.
void save_results(const ResultsFile &results, const std::filesystem::path &path);
/// Throws IoError, ParseError.
ResultsFile load_results(const std::filesystem::path &path);

/// Throws IoError.
void write_text_file(const std::filesystem::path &path, const std::string &contents);

} // namespace kpreg

#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltm/error.hpp"
#include "ltm/learning.hpp"

namespace ltm {

// Every setting that influences a command's output.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  double smoothing = 1.0;
  int em_max_iterations = 500;
  double em_tolerance = 1e-4;
  int em_restarts = 3;
  int threads = 1;
  double ud_threshold = 3.0;
  double rg_tolerance = 0.1;
  int max_levels = 3;
  double test_fraction = 0.0;
  std::int64_t samples = 0;
  bool binary_latents = false;
  bool all_latents = false;
  int vocab_size = 0;
  std::string format = "text";
  std::vector<std::string> inputs;
  std::string output;

  void check() const { learn_config().check(); }

  LearnConfig learn_config() const {
    LearnConfig cfg;
    cfg.em.seed = seed;
    cfg.em.smoothing = smoothing;
    cfg.em.max_iterations = em_max_iterations;
    cfg.em.tolerance = em_tolerance;
    cfg.em.restarts = em_restarts;
    cfg.em.threads = threads;
    cfg.ud_threshold = ud_threshold;
    cfg.rg_tolerance = rg_tolerance;
    cfg.binary_latents = binary_latents;
    if (threads < 1) throw DataError("threads must be >= 1");
    if (max_levels < 1) throw DataError("max_levels must be >= 1");
    return cfg;
  }

  bool operator==(const RunConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, command, seed, smoothing,
                                                em_max_iterations, em_tolerance, em_restarts,
                                                threads, ud_threshold, rg_tolerance, max_levels,
                                                test_fraction, samples, binary_latents, all_latents,
                                                vocab_size, format, inputs, output)

inline constexpr const char* kRunHeaderPrefix = "# ltm-run ";

// Single header line carrying the configuration as compact JSON.
inline std::string run_header(const RunConfig& cfg) {
  return std::string(kRunHeaderPrefix) + nlohmann::json(cfg).dump() + "\n";
}

// Configuration from the first run header in `text`, or from a bare JSON
// object when no header is present.
inline RunConfig parse_run_config(const std::string& text) {
  try {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
      if (line.rfind(kRunHeaderPrefix, 0) == 0)
        return nlohmann::json::parse(line.substr(std::string(kRunHeaderPrefix).size()))
            .get<RunConfig>();
    return nlohmann::json::parse(text).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed run configuration: ") + e.what());
  }
}

}  // namespace ltm

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "voxatn/model.hpp"
#include "voxatn/padeval.hpp"
#include "voxatn/synthface.hpp"

namespace voxatn::cli {

// Everything a run needs, parsed from an INI-style file with sections
// [data], [model], [train], [protocol]. Unknown keys are an error.
struct RunConfig {
    synthface::DatasetParams data;
    net::ModelConfig model;
    net::TrainConfig train;
    padeval::ProtocolSpec protocol;
    std::uint64_t split_seed = 1;

    // overrides applied after parsing
    void override_seed(std::uint64_t seed);
    void override_resolution(int resolution);
};

RunConfig default_config();

RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);

// Full resolved-config echo; parsing it back reproduces the config.
std::string echo_config(const RunConfig& cfg);

}  // namespace voxatn::cli

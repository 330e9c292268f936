#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "evoctl/analysis.hpp"
#include "evoctl/control.hpp"

namespace evoctl {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SimulateSpec {
    State x0{0.5, 0.5};
    /// Without a schedule the command holds the lowest dose of the range.
    Schedule schedule = Schedule::constant(0.0);
    bool has_schedule = false;
    /// 0 means the schedule's total duration (or 100 for a single constant piece).
    double horizon = 0.0;
    System system = System::full;
};

struct VerifySpec {
    std::string property;
    /// Curve index in build_all order; -1 picks the first curve suited to the property.
    int component = -1;
    std::optional<std::size_t> samples;
    std::optional<std::size_t> points;
    std::optional<std::size_t> schedules;
    std::optional<std::size_t> pairs;
    std::optional<std::size_t> exits;
    std::optional<double> horizon;
    std::optional<double> delta;
    unsigned threads = 0;
};

struct SweepSpec {
    std::vector<double> deltas;
    std::vector<DoseRange> ranges;
};

struct SplitSpec {
    bool enabled = false;
    SplitOptions options;
};

struct ControlSpec {
    State x0{0.28586, 0.32};
    ExperimentOptions experiment;
    std::size_t cycles = 10;
    SplitSpec split;
};

/// One scenario: landscape, dose range, window and per-command sections.
struct ScenarioConfig {
    std::string name = "scenario";
    Landscape landscape;
    DoseRange range;
    Window window;
    int grid_points = 2000;
    std::uint64_t seed = 1;
    std::optional<double> tol;
    SimulateSpec simulate;
    VerifySpec verify;
    SweepSpec sweep;
    ControlSpec control;
    /// The parsed document, kept for hashing.
    nlohmann::json source;
};

/// Parses and validates; unknown keys anywhere raise ConfigError.
ScenarioConfig parse_config(const nlohmann::json& j);
/// Reads a JSON file; a missing or unreadable file raises ConfigError.
ScenarioConfig load_config(const std::string& path);

/// Preset name, or an object with "preset" plus overrides, or a full inline definition.
Landscape parse_landscape(const nlohmann::json& j);
Schedule parse_schedule(const nlohmann::json& pieces);

/// 16 hex digits of FNV-1a over the compact dump of j.
std::string params_hash(const nlohmann::json& j);

nlohmann::json to_json(const Landscape& L);
nlohmann::json to_json(const HypothesisReport& r);
nlohmann::json to_json(const Component& c);
/// Summary without the polyline.
nlohmann::json to_json(const OmegaCurve& o);

}  // namespace evoctl

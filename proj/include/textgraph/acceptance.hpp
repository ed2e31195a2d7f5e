#pragma once

#include "textgraph/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace textgraph::acceptance {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0;
    nlohmann::json data = nlohmann::json::object();
};

struct AcceptanceOptions {
    std::vector<int> only;         ///< empty: every criterion
    std::string work_dir;          ///< scratch space for checkpoints; a temp dir when empty
    std::uint64_t seed = 0;
    std::ostream* log = nullptr;   ///< progress lines
};

inline constexpr int kCriterionCount = 10;

CriterionResult run_criterion(int id, const AcceptanceOptions& options);
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options);

/// "PASS [1] name (1.2 s): detail"
std::string format_line(const CriterionResult& r);
nlohmann::json to_json(const std::vector<CriterionResult>& results);

/// Central-difference check of one layer or of the whole model.
struct GradientCase {
    std::string name;
    double max_rel_error = 0;
    double tolerance = 0;
    std::string worst;
    index_t checked = 0;
    bool passed = false;
};

/// Every layer at 1e-4 and the tiny end-to-end model at 1e-3, h = 1e-5.
std::vector<GradientCase> gradient_suite(std::uint64_t seed = 0);

}  // namespace textgraph::acceptance

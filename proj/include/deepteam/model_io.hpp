#pragma once

#include <string>

#include "deepteam/model.hpp"
#include "json.hpp"

namespace deepteam {

// Strict JSON model format. Unknown keys, wrong types and malformed shapes raise ValidationError with the
// JSON path; pmf sums and kernel row sums are left to validate_model.
//
// {
//   "subpops": [{
//     "name": "users", "size": 200, "major": false,
//     "states": [...], "actions": [...], "noises": [...],
//     "noise_pmf": [p...] | [[p...] per t],
//     "init_pmf": [p...] | "init_states": [symbol per agent],
//     "kernel": {"mode": "table", "P": P[x][u][y]} | {"mode": "table", "P_t": [P per t]}
//             | {"mode": "expr",  "P": E[x][u][y]} | {"mode": "expr",  "P_t": [E per t]}
//             | {"mode": "function", "next": N[x][u][w]}     (N holds state symbols)
//   }],
//   "cost": {"mode": "per_agent", "per_agent": {"users": E[x][u], ...}, "joint": "expr"}
//         | {"mode": "joint", "expr": "expr"},
//   "horizon": {"T": 2} | {"beta": 0.8}
// }
// Expressions follow the language of Expr; "noises"/"noise_pmf" may be omitted for table and expr kernels.
TeamModel model_from_json(const nlohmann::json& doc);
TeamModel load_model_file(const std::string& path);
TeamModel parse_model_text(const std::string& text);

}  // namespace deepteam

#pragma once

#include <string>

#include <json.hpp>

#include "mlc/bundle.hpp"

namespace mlc {

struct HttpResponse {
    int status = 200;
    std::string body;
};

inline HttpResponse json_response(int status, const json& j) { return {status, j.dump() + "\n"}; }

inline HttpResponse error_response(int status, const std::string& code, const std::string& message) {
    return json_response(status, {{"error", {{"code", code}, {"message", message}}}});
}

/// Evaluate a scenario against a fitted bundle. Pure: depends only on its arguments.
inline json evaluate_scenario(const ArtifactBundle& b, const Scenario& s, const GridConfig& gc = {}) {
    const auto& ms = *b.measures;
    const auto& f = *b.frontier;
    auto rows = leaderboard(b.catalog, ms, b.utilities, s);
    auto recs = recommend_all(b.catalog, ms, b.utilities, f, s, gc);
    bool infeasible = feasible_set(b.catalog, ms, s).infeasible;

    json ranking = json::array();
    for (const auto& e : rows)
        if (e.rank) ranking.push_back(e.model_id);
    json rec_j = json::array(), targets = json::object(), binding = json::object(), sens = json::object();
    for (const auto& r : recs) {
        rec_j.push_back(to_json(r));
        targets[r.context] = to_json(r.target);
        binding[r.context] = r.binding;
        if (r.target.solution && r.target.instance)
            sens[r.context] = to_json(sensitivity_report(*r.target.instance, *r.target.solution));
    }
    return {{"scenario", scenario_to_json(s)},
            {"infeasible", infeasible},
            {"ranking", ranking},
            {"leaderboard", to_json(rows)},
            {"recommendations", rec_j},
            {"continuous_targets", targets},
            {"binding_constraints", binding},
            {"sensitivity", sens}};
}

/// Request router shared by the HTTP server and the tests.
inline HttpResponse handle_request(const ArtifactBundle& b, const std::string& method, const std::string& path,
                                   const std::string& body) {
    auto only = [&](const char* m) { return method == m; };
    try {
        if (path == "/health") {
            if (!only("GET")) return error_response(405, "method_not_allowed", "use GET");
            return json_response(200, {{"status", "ok"}, {"schema_version", b.schema_version},
                                       {"catalog_digest", b.catalog_digest}});
        }
        if (path == "/models") {
            if (!only("GET")) return error_response(405, "method_not_allowed", "use GET");
            json j = {{"catalog", to_json(b.catalog)}};
            if (b.measures) j["measures"] = to_json(*b.measures);
            if (b.frontier) j["tiers"] = b.frontier->tiers.tiers;
            return json_response(200, j);
        }
        if (path == "/frontier") {
            if (!only("GET")) return error_response(405, "method_not_allowed", "use GET");
            if (!b.frontier) return error_response(404, "no_frontier", "bundle has no frontier fit");
            return json_response(200, to_json(*b.frontier));
        }
        if (path == "/scenario") {
            if (!only("POST")) return error_response(405, "method_not_allowed", "use POST");
            if (!b.measures || !b.frontier || b.utilities.empty())
                return error_response(409, "bundle_incomplete", "bundle needs measures, frontier and utility models");
            json req;
            try {
                req = json::parse(body);
            } catch (const json::parse_error& e) {
                return error_response(400, "malformed_json", e.what());
            }
            Scenario s;
            try {
                s = parse_scenario(req);
                check_floors(s, b.dim());
                if (!s.context_weights.empty()) group_weights(b.utilities, s);
            } catch (const Error& e) {
                return error_response(422, "invalid_scenario", e.what());
            }
            return json_response(200, evaluate_scenario(b, s));
        }
        return error_response(404, "not_found", "no route for " + path);
    } catch (const Error& e) {
        return error_response(e.kind() == ErrorKind::invalid_input ? 422 : 500, "evaluation_failed", e.what());
    }
}

} // namespace mlc

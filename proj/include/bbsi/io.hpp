#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bbsi/errors.hpp"
#include "bbsi/glm.hpp"
#include "bbsi/inference.hpp"

// JSON layouts
//
// LearningSample:
//   {"zs": [..], "ws": [0|1, ..], "mode": "direct"|"binomial-component",
//    "m_agg": int, "q_threshold": real, "dropped": int}
//
// LearnedSelectionProb:
//   {"mode": .., "m_agg": int, "q_threshold": real, "link": "probit"|"logit",
//    "knots": [lower, interior.., upper], "coefficients": [intercept, ..],
//    "converged": bool, "iterations": int, "fallback_constant": real|null}
// A fallback (constant) estimate has empty "knots" and "coefficients".

namespace bbsi {

inline nlohmann::json to_json(const LearningSample& sample) {
  return {{"zs", sample.zs},
          {"ws", sample.ws},
          {"mode", std::string(to_string(sample.mode))},
          {"m_agg", sample.m_agg},
          {"q_threshold", sample.q_threshold},
          {"dropped", sample.dropped}};
}

inline LearningSample learning_sample_from_json(const nlohmann::json& j) {
  try {
    LearningSample s;
    s.zs = j.at("zs").get<std::vector<double>>();
    s.ws = j.at("ws").get<std::vector<int>>();
    s.mode = label_mode_from_string(j.at("mode").get<std::string>());
    s.m_agg = j.at("m_agg").get<int>();
    s.q_threshold = j.value("q_threshold", 0.5);
    s.dropped = j.value("dropped", 0);
    if (s.zs.size() != s.ws.size()) throw DomainError("\"zs\" and \"ws\" differ in length");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("learning sample JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const LearnedSelectionProb& s) {
  nlohmann::json j{{"mode", std::string(to_string(s.mode()))},
                   {"m_agg", s.m_agg()},
                   {"q_threshold", s.q_threshold()},
                   {"link", std::string(to_string(s.link()))}};
  if (const auto& model = s.model()) {
    j["knots"] = model->spec.knots();
    j["coefficients"] = std::vector<double>(model->coefficients.begin(), model->coefficients.end());
    j["converged"] = model->converged;
    j["iterations"] = model->iterations;
    j["fallback_constant"] = nullptr;
  } else {
    j["knots"] = nlohmann::json::array();
    j["coefficients"] = nlohmann::json::array();
    j["converged"] = true;
    j["iterations"] = 0;
    j["fallback_constant"] = s.fallback_constant();
  }
  return j;
}

inline LearnedSelectionProb learned_selection_prob_from_json(const nlohmann::json& j) {
  try {
    const auto mode = label_mode_from_string(j.at("mode").get<std::string>());
    const int m_agg = j.at("m_agg").get<int>();
    const double q = j.value("q_threshold", 0.5);
    const Link link = link_from_string(j.at("link").get<std::string>());
    const auto& fallback = j.at("fallback_constant");
    if (!fallback.is_null())
      return LearnedSelectionProb::constant(fallback.get<double>(), link, mode, m_agg, q);

    const auto knots = j.at("knots").get<std::vector<double>>();
    const auto coefs = j.at("coefficients").get<std::vector<double>>();
    if (knots.size() < 2) throw DomainError("\"knots\" needs at least the two boundary knots");
    BinaryGlmModel model;
    model.link = link;
    model.spec.lower = knots.front();
    model.spec.upper = knots.back();
    model.spec.interior_knots.assign(knots.begin() + 1, knots.end() - 1);
    model.spec.df = static_cast<int>(knots.size()) - 1;
    model.spec.validate();
    if (coefs.size() != static_cast<std::size_t>(model.spec.df) + 1)
      throw DomainError("\"coefficients\" length must be df + 1");
    model.coefficients = Eigen::Map<const Eigen::VectorXd>(coefs.data(),
                                                           static_cast<Eigen::Index>(coefs.size()));
    model.converged = j.value("converged", true);
    model.iterations = j.value("iterations", 0);
    return LearnedSelectionProb::fitted(std::move(model), mode, m_agg, q);
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("selection probability JSON: ") + e.what());
  }
}

}  // namespace bbsi

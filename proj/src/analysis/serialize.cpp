#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fpt/analysis/analysis.hpp"

namespace fpt::analysis {

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

nlohmann::json to_json(const TokenSimilarityProfile& p) {
  return {{"mean", p.mean},
          {"histogram", p.histogram},
          {"bins", p.histogram.empty() ? 0 : p.histogram.front().size()},
          {"pairs_per_layer", p.pairs_per_layer},
          {"warnings", p.warnings}};
}

nlohmann::json to_json(const PcaAttentionSolution& s) {
  return {{"rank", s.rank},
          {"objective", s.objective},
          {"eigenvalues", s.eigen.eigenvalues},
          {"a_star", matrix_json(s.a_star)}};
}

nlohmann::json to_json(const JacobianCheck& c) {
  return {{"lhs", num(c.lhs)}, {"rhs", num(c.rhs)}, {"rhs_without_n", num(c.rhs_without_n)}, {"holds", c.holds}};
}

nlohmann::json to_json(const JacobianAudit& a) {
  auto checks = nlohmann::json::array();
  for (const auto& c : a.checks) checks.push_back(to_json(c));
  return {{"n_tokens", a.n_tokens}, {"dim", a.dim}, {"trials", a.checks.size()}, {"holds", a.holds()},
          {"checks", checks}};
}

nlohmann::json to_json(const ConvergenceResult& r) {
  auto err = nlohmann::json::array();
  for (double e : r.mean_error) err.push_back(num(e));
  return {{"n", r.n}, {"mean_error", err}, {"slope", num(r.slope)}, {"intercept", num(r.intercept)}};
}

nlohmann::json to_json(const SgdCheck& c) {
  return {{"steps_taken", c.steps_taken}, {"sigma_min", c.sigma_min}, {"optimum", c.optimum}};
}

nlohmann::json to_json(std::span<const SgdRateRow> rows) {
  auto out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"sigma", r.sigma},
                   {"sigma_min", r.sigma_min},
                   {"mean_steps", r.mean_steps},
                   {"steps_times_sigma", r.mean_steps * r.sigma_min}});
  return out;
}

nlohmann::json to_json(std::span<const SweepRow> rows) {
  auto out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"ratio", r.ratio}, {"test_mse", num(r.test_mse)}, {"similarity", to_json(r.similarity)}};
    if (!r.pca_similarity.mean.empty()) j["pca_similarity"] = to_json(r.pca_similarity);
    out.push_back(std::move(j));
  }
  return out;
}

std::string to_csv(const TokenSimilarityProfile& p) {
  std::ostringstream s;
  const std::size_t bins = p.histogram.empty() ? 0 : p.histogram.front().size();
  s << "layer,mean";
  for (std::size_t b = 0; b < bins; ++b) s << ",bin" << b;
  s << '\n';
  for (std::size_t l = 0; l < p.mean.size(); ++l) {
    s << l << ',' << fmt(p.mean[l]);
    for (auto c : p.histogram[l]) s << ',' << c;
    s << '\n';
  }
  return s.str();
}

std::string to_csv(const JacobianAudit& a) {
  std::ostringstream s;
  s << "trial,lhs,rhs,rhs_without_n,holds\n";
  for (std::size_t t = 0; t < a.checks.size(); ++t) {
    const auto& c = a.checks[t];
    s << t << ',' << fmt(c.lhs) << ',' << fmt(c.rhs) << ',' << fmt(c.rhs_without_n) << ',' << (c.holds ? 1 : 0)
      << '\n';
  }
  return s.str();
}

std::string to_csv(const ConvergenceResult& r) {
  std::ostringstream s;
  s << "n,mean_error,log_n,log_error\n";
  for (std::size_t i = 0; i < r.n.size(); ++i) {
    const double e = r.mean_error[i];
    s << r.n[i] << ',' << fmt(e) << ',' << fmt(std::log(static_cast<double>(r.n[i]))) << ','
      << (e > 0.0 ? fmt(std::log(e)) : "") << '\n';
  }
  return s.str();
}

std::string to_csv(std::span<const SgdRateRow> rows) {
  std::ostringstream s;
  s << "sigma,sigma_min,mean_steps,steps_times_sigma\n";
  for (const auto& r : rows)
    s << fmt(r.sigma) << ',' << fmt(r.sigma_min) << ',' << fmt(r.mean_steps) << ',' << fmt(r.mean_steps * r.sigma_min)
      << '\n';
  return s.str();
}

std::string to_csv(std::span<const SweepRow> rows) {
  std::ostringstream s;
  const std::size_t layers = rows.empty() ? 0 : rows.front().similarity.mean.size();
  const bool pca = !rows.empty() && !rows.front().pca_similarity.mean.empty();
  s << "ratio,test_mse";
  for (std::size_t l = 0; l < layers; ++l) s << ",layer" << l;
  if (pca)
    for (std::size_t l = 0; l < layers; ++l) s << ",pca_layer" << l;
  s << '\n';
  for (const auto& r : rows) {
    s << fmt(r.ratio) << ',' << fmt(r.test_mse);
    for (double m : r.similarity.mean) s << ',' << fmt(m);
    if (pca)
      for (double m : r.pca_similarity.mean) s << ',' << fmt(m);
    s << '\n';
  }
  return s.str();
}

}  // namespace fpt::analysis

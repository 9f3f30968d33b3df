#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "macr/error.hpp"

namespace macr::lab {

// Discrete structural model on the fixed graph U->X, U->Y, X->M, M->Y.
// U is never observed; there is no U->M edge.
struct DiscreteScm {
  Eigen::VectorXd p_u;                          // |U|
  Eigen::MatrixXd p_x_given_u;                  // |U| x |X|, rows sum to 1
  Eigen::MatrixXd p_m_given_x;                  // |X| x |M|
  std::vector<Eigen::MatrixXd> p_y_given_m_u;   // one |U| x |Y| table per m

  int u_card() const { return static_cast<int>(p_u.size()); }
  int x_card() const { return static_cast<int>(p_x_given_u.cols()); }
  int m_card() const { return static_cast<int>(p_m_given_x.cols()); }
  int y_card() const { return p_y_given_m_u.empty() ? 0 : static_cast<int>(p_y_given_m_u.front().cols()); }

  // Shapes agree and every row is a distribution within 1e-12.
  void validate() const;

  // Binary model with strong confounding and strong mediation:
  //   U ~ Bern(0.5), P(X=1|u) = 0.2 + 0.6u, P(M=1|x) = 0.1 + 0.8x,
  //   P(Y=1|m,u) = 0.1 + 0.3m + 0.5u - 0.2mu.
  static DiscreteScm scm_a();
};

struct Observation {
  int x = 0;
  int m = 0;
  int y = 0;
};

// Observed (x, m, y) rows; u is discarded at sampling time.
struct SampleSet {
  std::vector<Observation> rows;
  int x_card = 0;
  int m_card = 0;
  int y_card = 0;

  std::size_t count() const { return rows.size(); }
};

class StratumError : public PipelineError {
 public:
  // Pairs are (m, x'); x' = -1 when the treatment stratum X=x itself is empty.
  StratumError(std::vector<std::pair<int, int>> missing, const std::string& what);
  const std::vector<std::pair<int, int>>& missing() const { return missing_; }

 private:
  std::vector<std::pair<int, int>> missing_;
};

// P(Y | do(X=x)) = sum_u p(u) sum_m p(m|x) p(y|m,u), exactly.
Eigen::VectorXd enumerate_interventional(const DiscreteScm& scm, int x);

// P(Y | X=x) under the model, exactly. Differs from the above when U confounds.
Eigen::VectorXd observational_conditional(const DiscreteScm& scm, int x);

// Ancestral sampling u -> x -> m -> y.
SampleSet sample(const DiscreteScm& scm, std::size_t count, std::uint64_t seed);

// Empirical P(Y | X=x).
Eigen::VectorXd naive_estimate(const SampleSet& samples, int x);

// Plug-in front-door estimate sum_m P(m|x) sum_x' P(x') P(Y|m,x').
Eigen::VectorXd frontdoor_estimate(const SampleSet& samples, int x);

// Empirical P(M | X) table, |X| x |M|; rows of unseen x are zero.
Eigen::MatrixXd empirical_m_given_x(const SampleSet& samples);

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar total_variation(const Eigen::MatrixBase<DerivedA>& p, const Eigen::MatrixBase<DerivedB>& q) {
  if (p.size() != q.size()) throw ValidationError("total_variation: length mismatch");
  return (p - q).cwiseAbs().sum() / typename DerivedA::Scalar(2);
}

// Plain-text model file:
//   domain U 2            (likewise X, M, Y)
//   p_u 0.5 0.5
//   p_x|u <u> : <row>
//   p_m|x <x> : <row>
//   p_y|m,u <m> <u> : <row>
DiscreteScm parse_scm(std::istream& in);
DiscreteScm load_scm(const std::filesystem::path& path);
std::string format_scm(const DiscreteScm& scm);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<Eigen::VectorXd> naive;      // per x
  std::vector<Eigen::VectorXd> frontdoor;  // per x
  double naive_tv = 0.0;                   // max over x
  double frontdoor_tv = 0.0;               // max over x
};

struct VerificationReport {
  std::size_t samples = 0;
  std::vector<Eigen::VectorXd> oracle;         // per x
  std::vector<Eigen::VectorXd> observational;  // per x, exact P(Y|X=x)
  std::vector<SeedResult> seeds;

  int frontdoor_within(double tol) const;
  int naive_beyond(double tol) const;
};

VerificationReport verify(const DiscreteScm& scm, std::size_t samples, int seeds, std::uint64_t master_seed);
void write_report(std::ostream& out, const VerificationReport& report);

}  // namespace macr::lab

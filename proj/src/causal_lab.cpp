#include "macr/causal_lab.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "macr/seeds.hpp"

namespace macr::lab {

namespace {

void check_rows(const Eigen::MatrixXd& table, const std::string& name) {
  for (Eigen::Index r = 0; r < table.rows(); ++r) {
    if ((table.row(r).array() < 0.0).any() || !table.row(r).allFinite())
      throw ValidationError(name + " row " + std::to_string(r) + " has a negative or non-finite entry");
    if (std::abs(table.row(r).sum() - 1.0) > 1e-12)
      throw ValidationError(name + " row " + std::to_string(r) + " sums to " + std::to_string(table.row(r).sum()));
  }
}

int draw(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  const double u = rng.uniform01();
  double cum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  // u landed in the rounding gap above the last cumulative sum.
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i)
    if (probs[i] > 0.0) return static_cast<int>(i);
  return 0;
}

void check_x(int x, int card) {
  if (x < 0 || x >= card) throw ValidationError("x=" + std::to_string(x) + " is outside the treatment domain");
}

}  // namespace

StratumError::StratumError(std::vector<std::pair<int, int>> missing, const std::string& what)
    : PipelineError(what), missing_(std::move(missing)) {}

void DiscreteScm::validate() const {
  if (p_u.size() < 1) throw ValidationError("scm: U needs a non-empty domain");
  if (p_x_given_u.rows() != p_u.size()) throw ValidationError("scm: p_x|u needs one row per u");
  if (p_m_given_x.rows() != p_x_given_u.cols()) throw ValidationError("scm: p_m|x needs one row per x");
  if (static_cast<Eigen::Index>(p_y_given_m_u.size()) != p_m_given_x.cols())
    throw ValidationError("scm: p_y|m,u needs one table per m");
  if (x_card() < 1 || m_card() < 1 || y_card() < 1) throw ValidationError("scm: empty domain");
  check_rows(p_u.transpose(), "p_u");
  check_rows(p_x_given_u, "p_x|u");
  check_rows(p_m_given_x, "p_m|x");
  for (int m = 0; m < m_card(); ++m) {
    const auto& t = p_y_given_m_u[static_cast<std::size_t>(m)];
    if (t.rows() != p_u.size() || t.cols() != y_card())
      throw ValidationError("scm: p_y|m,u table for m=" + std::to_string(m) + " has the wrong shape");
    check_rows(t, "p_y|m=" + std::to_string(m) + ",u");
  }
}

DiscreteScm DiscreteScm::scm_a() {
  DiscreteScm s;
  s.p_u = Eigen::Vector2d(0.5, 0.5);
  s.p_x_given_u.resize(2, 2);
  s.p_m_given_x.resize(2, 2);
  for (int u = 0; u < 2; ++u) {
    const double px1 = 0.2 + 0.6 * u;
    s.p_x_given_u.row(u) << 1.0 - px1, px1;
  }
  for (int x = 0; x < 2; ++x) {
    const double pm1 = 0.1 + 0.8 * x;
    s.p_m_given_x.row(x) << 1.0 - pm1, pm1;
  }
  for (int m = 0; m < 2; ++m) {
    Eigen::MatrixXd t(2, 2);
    for (int u = 0; u < 2; ++u) {
      const double py1 = 0.1 + 0.3 * m + 0.5 * u - 0.2 * m * u;
      t.row(u) << 1.0 - py1, py1;
    }
    s.p_y_given_m_u.push_back(t);
  }
  return s;
}

Eigen::VectorXd enumerate_interventional(const DiscreteScm& scm, int x) {
  check_x(x, scm.x_card());
  Eigen::VectorXd py = Eigen::VectorXd::Zero(scm.y_card());
  for (int u = 0; u < scm.u_card(); ++u)
    for (int m = 0; m < scm.m_card(); ++m)
      py += scm.p_u[u] * scm.p_m_given_x(x, m) * scm.p_y_given_m_u[static_cast<std::size_t>(m)].row(u).transpose();
  return py;
}

Eigen::VectorXd observational_conditional(const DiscreteScm& scm, int x) {
  check_x(x, scm.x_card());
  // P(u | x) by Bayes, then the same sum with the posterior in place of p(u).
  Eigen::VectorXd post = scm.p_u.cwiseProduct(scm.p_x_given_u.col(x));
  const double px = post.sum();
  if (!(px > 0.0)) throw ValidationError("P(X=x) is zero; the conditional is undefined");
  post /= px;
  Eigen::VectorXd py = Eigen::VectorXd::Zero(scm.y_card());
  for (int u = 0; u < scm.u_card(); ++u)
    for (int m = 0; m < scm.m_card(); ++m)
      py += post[u] * scm.p_m_given_x(x, m) * scm.p_y_given_m_u[static_cast<std::size_t>(m)].row(u).transpose();
  return py;
}

SampleSet sample(const DiscreteScm& scm, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("sample: count must be >= 1");
  Rng rng(seed);
  SampleSet out;
  out.x_card = scm.x_card();
  out.m_card = scm.m_card();
  out.y_card = scm.y_card();
  out.rows.reserve(count);
  const Eigen::RowVectorXd pu = scm.p_u.transpose();
  for (std::size_t i = 0; i < count; ++i) {
    const int u = draw(pu, rng);
    const int x = draw(scm.p_x_given_u.row(u), rng);
    const int m = draw(scm.p_m_given_x.row(x), rng);
    const int y = draw(scm.p_y_given_m_u[static_cast<std::size_t>(m)].row(u), rng);
    out.rows.push_back({x, m, y});
  }
  return out;
}

Eigen::VectorXd naive_estimate(const SampleSet& samples, int x) {
  check_x(x, samples.x_card);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(samples.y_card);
  for (const auto& r : samples.rows)
    if (r.x == x) counts[r.y] += 1.0;
  const double total = counts.sum();
  if (total == 0.0)
    throw StratumError({{-1, x}}, "naive_estimate: no samples with X=" + std::to_string(x));
  return counts / total;
}

Eigen::MatrixXd empirical_m_given_x(const SampleSet& samples) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(samples.x_card, samples.m_card);
  for (const auto& r : samples.rows) t(r.x, r.m) += 1.0;
  for (Eigen::Index x = 0; x < t.rows(); ++x) {
    const double s = t.row(x).sum();
    if (s > 0.0) t.row(x) /= s;
  }
  return t;
}

Eigen::VectorXd frontdoor_estimate(const SampleSet& samples, int x) {
  check_x(x, samples.x_card);
  const int xc = samples.x_card, mc = samples.m_card, yc = samples.y_card;
  Eigen::VectorXd n_x = Eigen::VectorXd::Zero(xc);
  Eigen::MatrixXd n_xm = Eigen::MatrixXd::Zero(xc, mc);
  // n_mxy[m] is |X| x |Y|.
  std::vector<Eigen::MatrixXd> n_mxy(static_cast<std::size_t>(mc), Eigen::MatrixXd::Zero(xc, yc));
  for (const auto& r : samples.rows) {
    n_x[r.x] += 1.0;
    n_xm(r.x, r.m) += 1.0;
    n_mxy[static_cast<std::size_t>(r.m)](r.x, r.y) += 1.0;
  }
  if (n_x[x] == 0.0)
    throw StratumError({{-1, x}}, "frontdoor_estimate: no samples with X=" + std::to_string(x));

  const double total = static_cast<double>(samples.count());
  const Eigen::VectorXd p_x = n_x / total;
  const Eigen::RowVectorXd p_m = n_xm.row(x) / n_x[x];

  std::vector<std::pair<int, int>> missing;
  for (int m = 0; m < mc; ++m) {
    if (p_m[m] == 0.0) continue;
    for (int xp = 0; xp < xc; ++xp)
      if (p_x[xp] > 0.0 && n_xm(xp, m) == 0.0) missing.emplace_back(m, xp);
  }
  if (!missing.empty()) {
    std::string msg = "frontdoor_estimate: empty strata (m, x'):";
    for (auto [m, xp] : missing) msg += " (" + std::to_string(m) + ", " + std::to_string(xp) + ")";
    throw StratumError(std::move(missing), msg);
  }

  Eigen::VectorXd py = Eigen::VectorXd::Zero(yc);
  for (int m = 0; m < mc; ++m) {
    if (p_m[m] == 0.0) continue;
    Eigen::VectorXd inner = Eigen::VectorXd::Zero(yc);
    for (int xp = 0; xp < xc; ++xp) {
      if (p_x[xp] == 0.0) continue;
      inner += p_x[xp] * n_mxy[static_cast<std::size_t>(m)].row(xp).transpose() / n_xm(xp, m);
    }
    py += p_m[m] * inner;
  }
  return py;
}

// --- file format ------------------------------------------------------------

namespace {

std::vector<double> read_row(std::istringstream& in) {
  std::vector<double> row;
  double v;
  while (in >> v) row.push_back(v);
  return row;
}

Eigen::RowVectorXd to_row(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

DiscreteScm parse_scm(std::istream& in) {
  int card[4] = {0, 0, 0, 0};  // U X M Y
  DiscreteScm s;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  auto fail = [](std::size_t i, const std::string& what) -> ValidationError {
    return ValidationError("scm file, entry " + std::to_string(i + 1) + ": " + what);
  };
  // Domains first so tables can be sized regardless of line order.
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::istringstream ls(lines[i]);
    std::string kw, var;
    int n = 0;
    ls >> kw;
    if (kw != "domain") continue;
    if (!(ls >> var >> n) || n < 1) throw fail(i, "expected 'domain <U|X|M|Y> <size>'");
    const std::string vars = "UXMY";
    const auto pos = vars.find(var);
    if (var.size() != 1 || pos == std::string::npos) throw fail(i, "unknown variable '" + var + "'");
    card[pos] = n;
  }
  for (int c : card)
    if (c == 0) throw ValidationError("scm file: all four domains (U, X, M, Y) must be declared");

  s.p_u = Eigen::VectorXd::Constant(card[0], std::nan(""));
  s.p_x_given_u = Eigen::MatrixXd::Constant(card[0], card[1], std::nan(""));
  s.p_m_given_x = Eigen::MatrixXd::Constant(card[1], card[2], std::nan(""));
  s.p_y_given_m_u.assign(static_cast<std::size_t>(card[2]), Eigen::MatrixXd::Constant(card[0], card[3], std::nan("")));

  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::istringstream ls(lines[i]);
    std::string kw;
    ls >> kw;
    if (kw == "domain") continue;
    std::vector<int> idx;
    if (kw != "p_u") {
      std::string tok;
      while (ls >> tok && tok != ":") {
        try {
          idx.push_back(std::stoi(tok));
        } catch (const std::exception&) {
          throw fail(i, "bad index '" + tok + "'");
        }
      }
      if (tok != ":") throw fail(i, "missing ':' before the row values");
    }
    const auto row = read_row(ls);
    auto expect = [&](std::size_t nidx, int len) {
      if (idx.size() != nidx) throw fail(i, kw + " expects " + std::to_string(nidx) + " index value(s)");
      if (static_cast<int>(row.size()) != len)
        throw fail(i, kw + " expects " + std::to_string(len) + " probabilities, got " + std::to_string(row.size()));
    };
    auto in_range = [&](int v, int c) {
      if (v < 0 || v >= c) throw fail(i, "index " + std::to_string(v) + " out of range");
      return v;
    };
    if (kw == "p_u") {
      expect(0, card[0]);
      s.p_u = to_row(row).transpose();
    } else if (kw == "p_x|u") {
      expect(1, card[1]);
      s.p_x_given_u.row(in_range(idx[0], card[0])) = to_row(row);
    } else if (kw == "p_m|x") {
      expect(1, card[2]);
      s.p_m_given_x.row(in_range(idx[0], card[1])) = to_row(row);
    } else if (kw == "p_y|m,u") {
      expect(2, card[3]);
      s.p_y_given_m_u[static_cast<std::size_t>(in_range(idx[0], card[2]))].row(in_range(idx[1], card[0])) = to_row(row);
    } else {
      throw fail(i, "unknown entry '" + kw + "'");
    }
  }
  s.validate();
  return s;
}

DiscreteScm load_scm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scm file " + path.string());
  return parse_scm(in);
}

std::string format_scm(const DiscreteScm& scm) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "domain U " << scm.u_card() << "\ndomain X " << scm.x_card() << "\ndomain M " << scm.m_card()
      << "\ndomain Y " << scm.y_card() << "\np_u";
  for (int u = 0; u < scm.u_card(); ++u) out << ' ' << scm.p_u[u];
  out << '\n';
  for (int u = 0; u < scm.u_card(); ++u) {
    out << "p_x|u " << u << " :";
    for (int x = 0; x < scm.x_card(); ++x) out << ' ' << scm.p_x_given_u(u, x);
    out << '\n';
  }
  for (int x = 0; x < scm.x_card(); ++x) {
    out << "p_m|x " << x << " :";
    for (int m = 0; m < scm.m_card(); ++m) out << ' ' << scm.p_m_given_x(x, m);
    out << '\n';
  }
  for (int m = 0; m < scm.m_card(); ++m)
    for (int u = 0; u < scm.u_card(); ++u) {
      out << "p_y|m,u " << m << ' ' << u << " :";
      for (int y = 0; y < scm.y_card(); ++y) out << ' ' << scm.p_y_given_m_u[static_cast<std::size_t>(m)](u, y);
      out << '\n';
    }
  return out.str();
}

// --- verification -----------------------------------------------------------

int VerificationReport::frontdoor_within(double tol) const {
  int n = 0;
  for (const auto& s : seeds) n += s.frontdoor_tv <= tol ? 1 : 0;
  return n;
}

int VerificationReport::naive_beyond(double tol) const {
  int n = 0;
  for (const auto& s : seeds) n += s.naive_tv > tol ? 1 : 0;
  return n;
}

VerificationReport verify(const DiscreteScm& scm, std::size_t samples, int seeds, std::uint64_t master_seed) {
  scm.validate();
  if (seeds < 1) throw ValidationError("verify: seeds must be >= 1");
  VerificationReport rep;
  rep.samples = samples;
  for (int x = 0; x < scm.x_card(); ++x) {
    rep.oracle.push_back(enumerate_interventional(scm, x));
    rep.observational.push_back(observational_conditional(scm, x));
  }
  for (int s = 0; s < seeds; ++s) {
    SeedResult r;
    r.seed = derive_seed(master_seed, "scm.seed." + std::to_string(s));
    const SampleSet data = sample(scm, samples, r.seed);
    for (int x = 0; x < scm.x_card(); ++x) {
      r.naive.push_back(naive_estimate(data, x));
      r.frontdoor.push_back(frontdoor_estimate(data, x));
      r.naive_tv = std::max(r.naive_tv, total_variation(r.naive.back(), rep.oracle[static_cast<std::size_t>(x)]));
      r.frontdoor_tv =
          std::max(r.frontdoor_tv, total_variation(r.frontdoor.back(), rep.oracle[static_cast<std::size_t>(x)]));
    }
    rep.seeds.push_back(std::move(r));
  }
  return rep;
}

void write_report(std::ostream& out, const VerificationReport& report) {
  auto vec = [](const Eigen::VectorXd& v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(6);
    for (Eigen::Index i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  out << "# samples=" << report.samples << " seeds=" << report.seeds.size() << '\n';
  out << "seed\tx\toracle\tobservational\tnaive\tfrontdoor\ttv_naive\ttv_frontdoor\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& s : report.seeds)
    for (std::size_t x = 0; x < report.oracle.size(); ++x)
      out << s.seed << '\t' << x << '\t' << vec(report.oracle[x]) << '\t' << vec(report.observational[x]) << '\t'
          << vec(s.naive[x]) << '\t' << vec(s.frontdoor[x]) << '\t' << total_variation(s.naive[x], report.oracle[x])
          << '\t' << total_variation(s.frontdoor[x], report.oracle[x]) << '\n';
  out << "# frontdoor_tv<=0.02: " << report.frontdoor_within(0.02) << "/" << report.seeds.size()
      << "  naive_tv>0.05: " << report.naive_beyond(0.05) << "/" << report.seeds.size() << '\n';
}

}  // namespace macr::lab

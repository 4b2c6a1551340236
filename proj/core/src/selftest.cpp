#include "dense_eval/selftest.hpp"

#include <cmath>
#include <exception>
#include <functional>
#include <random>
#include <sstream>

#include "dense_eval/contrastive.hpp"
#include "dense_eval/metrics.hpp"
#include "dense_eval/scorer.hpp"

namespace dense_eval {

namespace {

std::vector<float> random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  return v;
}

SelfTestCheck check(const std::string& name, const std::function<std::string()>& body) {
  SelfTestCheck result{name, false, {}};
  try {
    result.detail = body();
    result.passed = result.detail.empty();
  } catch (const std::exception& e) {
    result.detail = std::string("exception: ") + e.what();
  }
  return result;
}

std::string expect_near(double got, double want, double tol) {
  if (std::abs(got - want) <= tol) return {};
  std::ostringstream os;
  os.precision(17);
  os << "got " << got << ", want " << want << " (tol " << tol << ")";
  return os.str();
}

}  // namespace

std::vector<SelfTestCheck> run_selftest() {
  std::vector<SelfTestCheck> out;

  out.push_back(check("dot closed forms", [] {
    const std::vector<float> e1{1, 0}, e2{0, 1}, v{2, 3};
    if (dot(e1, e2) != 0.0) return std::string("orthogonal dot != 0");
    return expect_near(dot(v, v), 13.0, 0.0);
  }));

  out.push_back(check("dot vs naive loop", [] {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const auto u = random_vector(rng, 128);
      const auto v = random_vector(rng, 128);
      long double naive = 0;
      for (std::size_t i = 0; i < u.size(); ++i) naive += static_cast<long double>(u[i]) * v[i];
      const double got = dot(u, v);
      const double tol = 1e-12 * std::max(1.0, std::abs(static_cast<double>(naive)));
      if (auto err = expect_near(got, static_cast<double>(naive), tol); !err.empty()) return err;
    }
    return std::string();
  }));

  out.push_back(check("cosine vs normalize-then-dot", [] {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
      const auto u = random_vector(rng, 64);
      const auto v = random_vector(rng, 64);
      if (auto err = expect_near(cosine(u, u), 1.0, 1e-12); !err.empty()) return err;
      const double nu = l2_norm(u), nv = l2_norm(v);
      double ref = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) ref += (u[i] / nu) * (v[i] / nv);
      if (auto err = expect_near(cosine(u, v), ref, 1e-9); !err.empty()) return err;
    }
    return std::string();
  }));

  out.push_back(check("reciprocal rank vs linear scan", [] {
    std::mt19937_64 rng(13);
    RunFile run;
    Qrels qrels;
    double oracle_sum = 0.0;
    const std::size_t k = 100;
    for (int q = 0; q < 200; ++q) {
      const std::string qid = "q" + std::to_string(q);
      const std::size_t depth = 1 + rng() % 300;
      const std::size_t planted = 1 + rng() % depth;
      for (std::size_t r = 1; r <= depth; ++r) {
        run.records.push_back({qid, "d" + std::to_string(r), r,
                               static_cast<double>(depth - r + 1), "selftest"});
      }
      qrels.judgments[qid]["d" + std::to_string(planted)] = 1;
      oracle_sum += planted <= k ? 1.0 / static_cast<double>(planted) : 0.0;
    }
    const auto report = evaluate(run, qrels, k);
    return expect_near(report.mrr(), oracle_sum / 200.0, 1e-12);
  }));

  out.push_back(check("infonce uniform similarities", [] {
    for (std::size_t n : {1u, 7u, 63u}) {
      const std::vector<double> negs(n, 0.25);
      const double got = info_nce_from_similarities(0.25, negs);
      if (auto err = expect_near(got, std::log(static_cast<double>(n + 1)), 1e-12); !err.empty()) {
        return err;
      }
    }
    return std::string();
  }));

  out.push_back(check("infonce saturation and naive formula", [] {
    const std::vector<double> negs{0.0, 0.0, 0.0};
    if (info_nce_from_similarities(50.0, negs) >= 1e-6) return std::string("no saturation");
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
      ContrastiveInstance inst;
      inst.query = random_vector(rng, 16);
      inst.positive = random_vector(rng, 16);
      for (int i = 0; i < 7; ++i) inst.negatives.push_back(random_vector(rng, 16));
      const double pos = std::exp(dot(inst.query, inst.positive));
      double denom = pos;
      for (const auto& neg : inst.negatives) denom += std::exp(dot(inst.query, neg));
      if (auto err = expect_near(info_nce_loss(inst), -std::log(pos / denom), 1e-9);
          !err.empty()) {
        return err;
      }
    }
    return std::string();
  }));

  return out;
}

}  // namespace dense_eval

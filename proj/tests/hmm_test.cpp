#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "toxhmm/error.hpp"
#include "toxhmm/hmm.hpp"
#include "toxhmm/hmm_io.hpp"

using namespace toxhmm;

namespace {

HmmParameters make(std::vector<double> initial, std::vector<double> transition,
                   std::vector<double> emission, std::size_t n_symbols) {
  const std::size_t n = initial.size();
  HmmParameters p;
  p.initial = std::move(initial);
  p.transition = Matrix(n, n, std::move(transition));
  p.emission = Matrix(n, n_symbols, std::move(emission));
  return p;
}

HmmParameters planted_two_state() {
  return make({0.3, 0.7}, {0.6, 0.4, 0.3, 0.7}, {0.10, 0.60, 0.30, 0.00, 0.85, 0.15}, 3);
}

double linf(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

}  // namespace

TEST_SUITE("hmm_core") {

TEST_CASE("log_likelihood of a deterministic emitter is zero") {
  const auto p = make({1.0}, {1.0}, {1.0, 0.0}, 2);
  CHECK(log_likelihood(p, std::vector<int>{0, 0, 0}) == 0.0);
}

TEST_CASE("log_likelihood of an iid emitter") {
  const auto p = make({1.0}, {1.0}, {0.5, 0.5}, 2);
  CHECK(log_likelihood(p, std::vector<int>{0, 1}) == doctest::Approx(2.0 * std::log(0.5)).epsilon(1e-15));
}

TEST_CASE("log_likelihood matches brute-force path enumeration") {
  Rng rng(20240601);
  int checked = 0;
  for (std::size_t n = 1; n <= 3; ++n) {
    for (std::size_t j = 1; j <= 3; ++j) {
      for (int draw = 0; draw < 15; ++draw) {
        const auto p = oracle::random_model(n, j, rng);
        const auto seq = oracle::random_sequence(1 + rng.below(8), j, rng);
        const auto ref = oracle::enumerate_paths(p, seq);
        CHECK(std::abs(log_likelihood(p, seq) - std::log(ref.likelihood)) <= 1e-9);
        ++checked;
      }
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("log_likelihood is -inf for an impossible sequence and rejects bad input") {
  const auto p = make({1.0}, {1.0}, {1.0, 0.0}, 2);
  CHECK(log_likelihood(p, std::vector<int>{1}) == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(log_likelihood(p, std::vector<int>{2}), InputError);
  CHECK_THROWS_AS(log_likelihood(p, std::vector<int>{}), InputError);
  auto bad = p;
  bad.emission(0, 0) = std::nan("");
  CHECK_THROWS_AS(log_likelihood(bad, std::vector<int>{0}), InputError);
}

TEST_CASE("long sequences do not underflow") {
  const auto p = planted_two_state();
  Rng rng(3);
  const auto seq = sample(p, rng, 10000);
  const double ll = log_likelihood(p, seq);
  CHECK(std::isfinite(ll));
  CHECK(ll < -1000.0);
}

TEST_CASE("posteriors of a single-state model are all ones") {
  const auto p = make({1.0}, {1.0}, {0.2, 0.5, 0.3}, 3);
  const auto post = posteriors(p, std::vector<int>{1, 2, 2, 0});
  for (std::size_t t = 0; t < 4; ++t) CHECK(post.gamma(t, 0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("symmetric model has uniform posteriors") {
  const auto p = make({0.5, 0.5}, {0.7, 0.3, 0.3, 0.7}, {0.2, 0.5, 0.3, 0.2, 0.5, 0.3}, 3);
  const auto post = posteriors(p, std::vector<int>{2, 1, 1, 0});
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(std::abs(post.gamma(t, 0) - 0.5) < 1e-12);
    CHECK(std::abs(post.gamma(t, 1) - 0.5) < 1e-12);
  }
}

TEST_CASE("posteriors match enumeration and are normalized") {
  Rng rng(77);
  for (int draw = 0; draw < 60; ++draw) {
    const std::size_t n = 1 + rng.below(3);
    const std::size_t j = 1 + rng.below(3);
    const auto p = oracle::random_model(n, j, rng);
    const auto seq = oracle::random_sequence(1 + rng.below(7), j, rng);
    const auto ref = oracle::enumerate_paths(p, seq);
    const auto post = posteriors(p, seq);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      double row = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(post.gamma(t, i) - ref.gamma[t][i]) <= 1e-9);
        row += post.gamma(t, i);
      }
      CHECK(std::abs(row - 1.0) <= 1e-9);
    }
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      double slice = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double over_next = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          CHECK(std::abs(post.xi[t](i, k) - ref.xi[t][i][k]) <= 1e-9);
          over_next += post.xi[t](i, k);
          slice += post.xi[t](i, k);
        }
        CHECK(std::abs(over_next - post.gamma(t, i)) <= 1e-9);
      }
      CHECK(std::abs(slice - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("posteriors and viterbi reject impossible sequences") {
  const auto p = make({1.0}, {1.0}, {1.0, 0.0}, 2);
  CHECK_THROWS_AS(posteriors(p, std::vector<int>{0, 1}), ImpossibleSequence);
  CHECK_THROWS_AS(viterbi(p, std::vector<int>{1}), ImpossibleSequence);
}

TEST_CASE("viterbi recovers a deterministic chain") {
  // identity transitions, state i always emits symbol i
  const auto p = make({0.0, 1.0}, {1.0, 0.0, 0.0, 1.0}, {1.0, 0.0, 0.0, 1.0}, 2);
  CHECK(viterbi(p, std::vector<int>{1, 1, 1}) == std::vector<int>{1, 1, 1});
  const auto q = make({0.0, 1.0}, {0.0, 1.0, 1.0, 0.0}, {1.0, 0.0, 0.0, 1.0}, 2);
  CHECK(viterbi(q, std::vector<int>{1, 0, 1, 0}) == std::vector<int>{1, 0, 1, 0});
}

TEST_CASE("viterbi breaks ties toward the lowest state") {
  const auto p = make({0.5, 0.5}, {0.5, 0.5, 0.5, 0.5}, {0.2, 0.5, 0.3, 0.2, 0.5, 0.3}, 3);
  CHECK(viterbi(p, std::vector<int>{0, 1, 2, 1}) == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("viterbi path attains the enumerated maximum") {
  Rng rng(5150);
  for (int draw = 0; draw < 100; ++draw) {
    const std::size_t n = 1 + rng.below(3);
    const std::size_t j = 1 + rng.below(3);
    const auto p = oracle::random_model(n, j, rng);
    const auto seq = oracle::random_sequence(1 + rng.below(8), j, rng);
    const auto ref = oracle::enumerate_paths(p, seq);
    const auto path = viterbi(p, seq);
    const double mine = oracle::path_probability(p, seq, path);
    CHECK(std::abs(mine - ref.best_path_probability) <= 1e-12);
    CHECK(mine >= ref.best_path_probability * (1.0 - 1e-12));
  }
}

TEST_CASE("canonicalize_states sorts by terminal emission") {
  const auto p = make({0.4, 0.6}, {0.9, 0.1, 0.2, 0.8}, {0.0, 0.9, 0.1, 0.3, 0.5, 0.2}, 3);
  const auto c = canonicalize_states(p);
  CHECK(c.emission(0, 0) == 0.3);
  CHECK(c.emission(1, 0) == 0.0);
  CHECK(c.initial == std::vector<double>{0.6, 0.4});
  CHECK(c.transition(0, 0) == 0.8);
  CHECK(c.transition(0, 1) == 0.2);
  CHECK(c.transition(1, 1) == 0.9);
  CHECK(canonicalize_states(c) == c);
}

TEST_CASE("canonicalize_states breaks first-column ties by the toxic column") {
  const auto p = make({0.5, 0.5}, {0.5, 0.5, 0.5, 0.5}, {0.1, 0.8, 0.1, 0.1, 0.5, 0.4}, 3);
  const auto c = canonicalize_states(p);
  CHECK(c.emission(0, 2) == 0.4);
}

TEST_CASE("canonicalization preserves likelihood") {
  Rng rng(99);
  for (int draw = 0; draw < 20; ++draw) {
    const auto p = oracle::random_model(3, 3, rng);
    const auto c = canonicalize_states(p);
    for (int s = 0; s < 5; ++s) {
      const auto seq = oracle::random_sequence(1 + rng.below(20), 3, rng);
      CHECK(std::abs(log_likelihood(p, seq) - log_likelihood(c, seq)) <= 1e-12);
    }
  }
}

TEST_CASE("sample honors stop symbol and max length") {
  Rng rng(1);
  const auto ones = make({1.0}, {1.0}, {0.0, 1.0, 0.0}, 3);
  CHECK(sample(ones, rng, 5, 0) == Sequence{1, 1, 1, 1, 1});
  const auto zero = make({1.0}, {1.0}, {1.0, 0.0, 0.0}, 3);
  CHECK(sample(zero, rng, 5, 0) == Sequence{0});
  CHECK_THROWS_AS(sample(zero, rng, 0), InputError);
}

TEST_CASE("sampled symbol frequencies match the stationary distribution") {
  const auto p = planted_two_state();
  Rng rng(42);
  const auto seq = sample(p, rng, 100000);
  std::vector<double> freq(3, 0.0);
  for (int s : seq) freq[s] += 1.0;
  const auto pi = oracle::stationary(p.transition);
  for (std::size_t j = 0; j < 3; ++j) {
    double expected = 0.0;
    for (std::size_t i = 0; i < 2; ++i) expected += pi[i] * p.emission(i, j);
    CHECK(std::abs(freq[j] / 1e5 - expected) < 0.01);
  }
}

TEST_CASE("fit recovers a single-state emitter") {
  const auto p = make({1.0}, {1.0}, {0.2, 0.5, 0.3}, 3);
  Rng rng(11);
  std::vector<Sequence> corpus;
  for (int c = 0; c < 100; ++c) corpus.push_back(sample(p, rng, 100));
  FitConfig cfg;
  cfg.n_restarts = 1;
  const auto fit = baum_welch_fit(corpus, 1, cfg, 7);
  CHECK(linf(fit.params.emission, p.emission) < 0.01);
}

TEST_CASE("fit with zero iterations returns the initialization") {
  std::vector<Sequence> corpus{{1, 2, 0}, {2, 0}};
  FitConfig cfg;
  cfg.max_iterations = 0;
  cfg.n_restarts = 1;
  const auto fit = baum_welch_fit(corpus, 2, cfg, 123);
  Rng rng(mix_seed(123, 0));
  auto init = canonicalize_states(random_parameters(2, 3, rng));
  init.seed = 123;
  CHECK(fit.params == init);
  CHECK_FALSE(fit.converged);
  CHECK(fit.iterations == 0);
  CHECK(fit.log_likelihood_trace.size() == 1);
}

TEST_CASE("fit rejects empty input and handles degenerate corpora") {
  FitConfig cfg;
  CHECK_THROWS_AS(baum_welch_fit(std::vector<Sequence>{}, 2, cfg, 1), InputError);
  std::vector<Sequence> zeros(50, Sequence{0});
  const auto fit = baum_welch_fit(zeros, 2, cfg, 1);
  CHECK(std::isfinite(fit.log_likelihood_trace.back()));
  CHECK(fit.log_likelihood_trace.back() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(fit.converged);
}

TEST_CASE("EM trace is nondecreasing") {
  Rng rng(2718);
  for (int corpus_id = 0; corpus_id < 6; ++corpus_id) {
    const auto truth = oracle::random_model(2 + rng.below(2), 3, rng);
    std::vector<Sequence> corpus;
    for (int c = 0; c < 100; ++c) corpus.push_back(sample(truth, rng, 30, 0));
    FitConfig cfg;
    cfg.n_restarts = 2;
    cfg.acceleration = corpus_id % 2 == 0 ? Acceleration::kSquarem : Acceleration::kNone;
    const auto fit = baum_welch_fit(corpus, 3, cfg, rng());
    for (std::size_t k = 1; k < fit.log_likelihood_trace.size(); ++k) {
      CHECK(fit.log_likelihood_trace[k] >= fit.log_likelihood_trace[k - 1] - 1e-10);
    }
  }
}

TEST_CASE("fit recovers planted two-state emissions") {
  auto truth = planted_two_state();
  truth.initial = {0.5, 0.5};
  truth.transition = Matrix(2, 2, {0.9, 0.1, 0.1, 0.9});
  Rng rng(8);
  std::vector<Sequence> corpus;
  for (int c = 0; c < 20000; ++c) corpus.push_back(sample(truth, rng, 10000, 0));
  const auto fit = baum_welch_fit(corpus, 2, FitConfig{}, 99);
  MESSAGE("recovered emission row 0: " << fit.params.emission(0, 0) << " " << fit.params.emission(0, 1)
                                      << " " << fit.params.emission(0, 2));
  MESSAGE("recovered emission row 1: " << fit.params.emission(1, 0) << " " << fit.params.emission(1, 1)
                                      << " " << fit.params.emission(1, 2));
  CHECK(linf(fit.params.emission, truth.emission) < 0.02);
  CHECK(fit.params.emission(1, 0) < 0.005);
}

TEST_CASE("plain and accelerated EM reach the same optimum") {
  auto truth = planted_two_state();
  truth.transition = Matrix(2, 2, {0.9, 0.1, 0.1, 0.9});
  Rng rng(21);
  std::vector<Sequence> corpus;
  for (int c = 0; c < 2000; ++c) corpus.push_back(sample(truth, rng, 1000, 0));
  FitConfig cfg;
  cfg.n_restarts = 1;
  cfg.tolerance = 1e-12;
  cfg.max_iterations = 20000;
  cfg.acceleration = Acceleration::kNone;
  const auto plain = baum_welch_fit(corpus, 2, cfg, 4);
  cfg.acceleration = Acceleration::kSquarem;
  const auto fast = baum_welch_fit(corpus, 2, cfg, 4);
  CHECK(fast.iterations < plain.iterations);
  CHECK(std::abs(plain.log_likelihood_trace.back() - fast.log_likelihood_trace.back()) < 1e-4);
  CHECK(linf(plain.params.emission, fast.params.emission) < 1e-3);
}

TEST_CASE("parameters round-trip through JSON losslessly") {
  Rng rng(31337);
  for (int draw = 0; draw < 50; ++draw) {
    auto p = oracle::random_model(1 + rng.below(5), 1 + rng.below(4), rng);
    p.seed = rng();
    const auto text = to_json(p).dump();
    const auto back = parameters_from_json(nlohmann::json::parse(text));
    CHECK(back == p);
  }
  CHECK_THROWS_AS(parameters_from_json(nlohmann::json::parse(R"({"initial":[0.5,0.4],"transition":[[1,0],[0,1]],"emission":[[1],[1]]})")),
                  InputError);
}

}  // TEST_SUITE

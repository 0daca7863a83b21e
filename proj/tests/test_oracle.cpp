#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <future>
#include <set>
#include <thread>

#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <json.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "tempshift/oracle.hpp"

using namespace tempshift;
using namespace std::chrono_literals;

namespace {

std::vector<Tokens> singletons(const std::vector<std::string>& vocab) {
  std::vector<Tokens> c;
  for (const auto& w : vocab) c.push_back({w});
  return c;
}

std::unique_ptr<ExternalOracle> peer(const std::string& mode, ExternalOracle::Options opt = {},
                                     const std::string& arg = "") {
  std::vector<std::string> argv{FAKE_ORACLE_PEER, mode};
  if (!arg.empty()) argv.push_back(arg);
  return std::make_unique<ExternalOracle>(ProcessChannel::spawn(argv), opt);
}

const Tokens kPrefix{"a"};

}  // namespace

TEST_CASE("bigram example with add-alpha smoothing") {
  const std::vector<Tokens> corpus{{"a", "b"}, {"a", "b"}};
  for (double alpha : {1.0, 0.1, 1e-3}) {
    NGramLM lm(corpus, 2, alpha);
    const double v = static_cast<double>(lm.vocabulary_size());
    CHECK(v == 3);  // a, b, <unk>
    const std::vector<Tokens> cand{{"b"}};
    CHECK(lm.logprob(kPrefix, cand)[0] == doctest::Approx(std::log((2 + alpha) / (2 + alpha * v))).epsilon(1e-12));
  }
  NGramLM sharp(corpus, 2, 1e-9);
  CHECK(std::exp(sharp.conditional(kPrefix, "b")) == doctest::Approx(1.0).epsilon(1e-8));
  NGramLM flat(corpus, 2, 1e9);
  CHECK(std::exp(flat.conditional(kPrefix, "b")) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("unigram model ignores context") {
  NGramLM lm({{"a", "b", "b"}, {"c"}}, 1, 0.5);
  const Tokens h1{"a"}, h2{"c", "b"};
  CHECK(lm.conditional(h1, "b") == lm.conditional(h2, "b"));
  CHECK(lm.conditional({}, "b") == doctest::Approx(std::log((2 + 0.5) / (4 + 0.5 * 4))).epsilon(1e-12));
}

TEST_CASE("conditional distributions sum to one") {
  Rng rng(8);
  std::vector<Tokens> corpus;
  for (int i = 0; i < 40; ++i) {
    Tokens s;
    for (int j = 0, n = 1 + static_cast<int>(uniform_index(rng, 6)); j < n; ++j) {
      s.push_back("w" + std::to_string(uniform_index(rng, 9)));
    }
    corpus.push_back(s);
  }
  for (std::size_t order : {1u, 2u, 3u, 4u}) {
    NGramLM lm(corpus, order, 0.1);
    const auto cands = singletons(lm.vocabulary());
    for (int trial = 0; trial < 30; ++trial) {
      Tokens prefix;
      for (int j = 0, n = static_cast<int>(uniform_index(rng, 5)); j < n; ++j) {
        prefix.push_back(uniform_index(rng, 10) == 0 ? "oov" : "w" + std::to_string(uniform_index(rng, 9)));
      }
      double total = 0.0;
      for (double lp : lm.logprob(prefix, cands)) {
        CHECK(lp <= 0.0);
        total += std::exp(lp);
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("n-gram model matches the textbook oracle") {
  Rng rng(21);
  std::vector<Tokens> corpus;
  std::set<std::string> vocab;
  for (int i = 0; i < 30; ++i) {
    Tokens s;
    for (int j = 0, n = 1 + static_cast<int>(uniform_index(rng, 7)); j < n; ++j) {
      s.push_back("t" + std::to_string(uniform_index(rng, 6)));
      vocab.insert(s.back());
    }
    corpus.push_back(s);
  }
  for (std::size_t order : {1u, 2u, 3u}) {
    NGramLM lm(corpus, order, 0.3);
    oracles::BruteNGram ref(corpus, order, 0.3, vocab);
    for (int trial = 0; trial < 200; ++trial) {
      Tokens prefix;
      for (int j = 0, n = static_cast<int>(uniform_index(rng, 4)); j < n; ++j) {
        prefix.push_back("t" + std::to_string(uniform_index(rng, 7)));
      }
      const std::string x = "t" + std::to_string(uniform_index(rng, 7));
      CHECK(std::abs(lm.conditional(prefix, x) - ref.logp(prefix, x)) <= 1e-12);
    }
  }
}

TEST_CASE("logprob of a candidate is the sum of its steps") {
  NGramLM lm({{"a", "b", "c"}, {"b", "c", "a"}, {"c", "a", "b"}}, 3, 0.2);
  const Tokens prefix{"a"};
  const std::vector<Tokens> two{{"b", "c"}}, empty{{}};
  const Tokens p2{"a", "b"};
  CHECK(lm.logprob(prefix, two)[0] ==
        doctest::Approx(lm.conditional(prefix, "b") + lm.conditional(p2, "c")).epsilon(1e-14));
  CHECK(lm.logprob(prefix, empty)[0] == 0.0);
  CHECK_THROWS_AS(lm.logprob(prefix, {}), Error);
  const std::vector<Tokens> pair{{"x"}, {"y"}};
  NGramLM uniform({{"x", "y"}}, 1, 1e12);
  auto lp = uniform.logprob({}, pair);
  CHECK(lp[0] == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-9));
  CHECK(lp[0] == lp[1]);
}

TEST_CASE("train_ngram vocabulary is the union plus unknown") {
  auto s1 = fixtures::snapshot("1", {{"a", "b"}});
  auto s2 = fixtures::snapshot("2", {{"b", "c"}});
  const std::array<const Snapshot*, 2> snaps{&s1, &s2};
  auto lm = train_ngram(snaps, 2, 0.1);
  auto v = lm.vocabulary();
  CHECK(std::set<std::string>(v.begin(), v.end()) == std::set<std::string>{"a", "b", "c", "<unk>"});
  CHECK_THROWS_AS(NGramLM({{}}, 2, 0.1), Error);
  CHECK_THROWS_AS(NGramLM({{"a"}}, 0, 0.1), ConfigError);
  CHECK_THROWS_AS(NGramLM({{"a"}}, 2, 0.0), ConfigError);
}

TEST_CASE("external oracle round trip is bit exact") {
  auto o = peer("echo");
  CHECK(o->info().name == "fake-echo");
  CHECK_FALSE(o->info().max_context.has_value());
  const std::vector<Tokens> cands{{"x"}, {"y", "z"}, {}};
  auto lp = o->logprob(kPrefix, cands);
  REQUIRE(lp.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(lp[i] == -static_cast<double>(i + 1) / 3.0);
  CHECK(o->logprob(kPrefix, cands) == lp);
}

TEST_CASE("out-of-order responses are matched by id") {
  constexpr int n = 4;
  auto o = peer("reverse", {}, std::to_string(n));
  std::vector<std::future<std::vector<double>>> futs;
  std::vector<std::vector<Tokens>> cands;
  for (int i = 0; i < n; ++i) cands.push_back(std::vector<Tokens>(static_cast<std::size_t>(i + 1), Tokens{"t"}));
  for (int i = 0; i < n; ++i) {
    futs.push_back(std::async(std::launch::async, [&, i] { return o->logprob(kPrefix, cands[static_cast<std::size_t>(i)]); }));
  }
  for (int i = 0; i < n; ++i) {
    auto lp = futs[static_cast<std::size_t>(i)].get();
    CHECK(lp.size() == static_cast<std::size_t>(i + 1));
  }
}

TEST_CASE("malformed response names the line and request") {
  auto o = peer("malformed");
  const std::vector<Tokens> c{{"x"}};
  try {
    o->logprob(kPrefix, c);
    FAIL("expected OracleError");
  } catch (const OracleError& e) {
    CHECK(e.request_id() == 1);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("request 1") != std::string::npos);
  }
  CHECK_THROWS_AS(o->logprob(kPrefix, c), OracleError);
}

TEST_CASE("peer errors and shape violations surface with the request id") {
  const std::vector<Tokens> c{{"x"}, {"y"}};
  auto err = peer("error");
  CHECK_THROWS_WITH_AS(err->logprob(kPrefix, c), doctest::Contains("model not loaded"), OracleError);
  auto bad = peer("badcount");
  CHECK_THROWS_WITH_AS(bad->logprob(kPrefix, c), doctest::Contains("expected 2 logprobs"), OracleError);
  auto pos = peer("positive");
  CHECK_THROWS_WITH_AS(pos->logprob(kPrefix, c), doctest::Contains("out of range"), OracleError);
  auto ex = peer("exit");
  CHECK_THROWS_WITH_AS(ex->logprob(kPrefix, c), doctest::Contains("peer exited"), OracleError);
  auto ctx = peer("maxctx");
  CHECK(ctx->info().max_context == std::optional<std::size_t>(4));
  const Tokens long_prefix{"a", "b", "c", "d"};
  CHECK_THROWS_WITH_AS(ctx->logprob(long_prefix, c), doctest::Contains("context overflow"), OracleError);
  CHECK(ctx->logprob(kPrefix, c).size() == 2);
}

TEST_CASE("timeouts and idempotent retries") {
  const std::vector<Tokens> c{{"x"}};
  auto silent = peer("silent", {200ms, 0});
  try {
    silent->logprob(kPrefix, c);
    FAIL("expected timeout");
  } catch (const OracleError& e) {
    CHECK(e.request_id() == 1);
    CHECK(std::string(e.what()).find("timeout") != std::string::npos);
  }
  auto flaky = peer("flaky", {200ms, 1});
  CHECK(flaky->logprob(kPrefix, c)[0] == -1.0 / 3.0);
}

TEST_CASE("oracle over a Unix socket") {
  const auto path = fixtures::scratch("sock") / "oracle.sock";
  const int listener = ::socket(AF_UNIX, SOCK_STREAM, 0);
  REQUIRE(listener >= 0);
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  std::snprintf(addr.sun_path, sizeof(addr.sun_path), "%s", path.c_str());
  REQUIRE(::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  REQUIRE(::listen(listener, 1) == 0);

  // Serves one request: a fixed score per candidate.
  std::thread server([listener] {
    const int fd = ::accept(listener, nullptr, nullptr);
    auto send = [fd](const std::string& s) { return ::write(fd, s.data(), s.size()) == static_cast<ssize_t>(s.size()); };
    send("{\"proto\": 1, \"name\": \"sock\", \"max_context\": null}\n");
    std::string line;
    char c;
    while (::read(fd, &c, 1) == 1 && c != '\n') line.push_back(c);
    const auto id = nlohmann::json::parse(line).at("id").get<std::uint64_t>();
    send("{\"id\": " + std::to_string(id) + ", \"logprobs\": [-0.5, -2.25]}\n");
    ::close(fd);
  });
  {
    ExternalOracle o(connect_unix_socket(path));
    CHECK(o.info().name == "sock");
    const std::vector<Tokens> c{{"x"}, {"y", "z"}};
    CHECK(o.logprob(kPrefix, c) == std::vector<double>{-0.5, -2.25});
  }
  server.join();
  ::close(listener);
  CHECK_THROWS_AS(connect_unix_socket(path.parent_path() / "absent.sock"), Error);
}

TEST_CASE("spawn failure is reported") {
  CHECK_THROWS_AS(ExternalOracle(ProcessChannel::spawn({"/nonexistent/oracle-binary"})), Error);
}

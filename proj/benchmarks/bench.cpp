#include <benchmark/benchmark.h>

#include <numeric>
#include <string>

#include "exactk/gattn/decode.hpp"
#include "exactk/graph/graph.hpp"
#include "exactk/numcore/ops.hpp"

namespace nc = exactk::numcore;
namespace ga = exactk::gattn;

namespace {

ga::ModelConfig config_for(std::size_t n, std::size_t k) {
  ga::ModelConfig c;
  c.n = n;
  c.k = k;
  c.features = {exactk::dataio::FeatureMode::id_embedding, 16, 16, 1000, 100};
  return c;
}

nc::Tensor random_inputs(nc::Rng& rng, std::size_t n, std::size_t d) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = nc::uniform(rng, -1.0, 1.0);
  return nc::Tensor({n, d}, std::move(v));
}

void BM_Ned(benchmark::State& state) {
  const std::string a(static_cast<std::size_t>(state.range(0)), 'x');
  std::string b = a;
  for (std::size_t i = 0; i < b.size(); i += 3) b[i] = 'y';
  for (auto _ : state) benchmark::DoNotOptimize(exactk::graph::ned(a, b));
}
BENCHMARK(BM_Ned)->Arg(16)->Arg(64);

void BM_Encode(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  nc::Rng rng(1);
  const ga::PolicyModel m(config_for(n, 4), rng);
  const auto x = random_inputs(rng, n, m.config().d_x);
  nc::NoGradScope no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(m.encode(x));
}
BENCHMARK(BM_Encode)->Arg(10)->Arg(20);

void BM_BeamSearch(benchmark::State& state) {
  nc::Rng rng(2);
  const ga::PolicyModel m(config_for(20, 4), rng);
  nc::NoGradScope no_grad;
  const auto enc = m.encode(random_inputs(rng, 20, m.config().d_x));
  const auto g = exactk::graph::ConstraintGraph::complete(20);
  const auto width = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ga::beam_search(m, enc, g, 4, width));
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(3)->Arg(10);

void BM_LogProbBackward(benchmark::State& state) {
  nc::Rng rng(3);
  const ga::PolicyModel m(config_for(20, 4), rng);
  const auto x = random_inputs(rng, 20, m.config().d_x);
  const auto g = exactk::graph::ConstraintGraph::complete(20);
  const std::vector<exactk::graph::Node> card{3, 7, 11, 15};
  for (auto _ : state) {
    nc::Tape tape;
    nc::TapeScope scope(tape);
    nc::backward(tape, ga::sequence_log_prob(m, m.encode(x), g, card));
  }
}
BENCHMARK(BM_LogProbBackward);

}  // namespace

BENCHMARK_MAIN();

// E-step kernels: OpenMP z-space kernel against the serial reference.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "fjm/estep.hpp"
#include "fjm/simulate.hpp"
#include "fjm/splines.hpp"
#include "fjm/twostep.hpp"

namespace {

struct Fixture {
  fjm::JoinedData data;
  fjm::ModelParams params;
  std::vector<fjm::SubjectDesign> designs;

  Fixture() {
    data = fjm::generate(fjm::case2_spec(200, 7)).joined;
    fjm::BasisConfig basis;
    basis.c = fjm::default_c(static_cast<long long>(data.total_grid_points()));
    params = fjm::init_from_two_step(fjm::fit_two_step(data, 2, 2, basis, {}));
    designs = fjm::build_designs(data.subjects, fjm::OrthonormalBasis(params.basis));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void run(benchmark::State& state, bool reference) {
  const Fixture& f = fixture();
  fjm::EStepOptions o;
  o.Q = static_cast<int>(state.range(0));
  o.reference = reference;
  o.keep_sample = false;
  for (auto _ : state) {
    fjm::PosteriorMoments post = fjm::e_step(f.data.subjects, f.designs, f.params, o);
    benchmark::DoNotOptimize(post.min_ess);
  }
  state.counters["threads"] = reference ? 1 : omp_get_max_threads();
  state.counters["draws/s"] =
      benchmark::Counter(static_cast<double>(state.iterations()) * o.Q * f.data.n(), benchmark::Counter::kIsRate);
}

void BM_EStepReference(benchmark::State& state) { run(state, true); }
void BM_EStepParallel(benchmark::State& state) { run(state, false); }

BENCHMARK(BM_EStepReference)->Arg(500)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EStepParallel)->Arg(500)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

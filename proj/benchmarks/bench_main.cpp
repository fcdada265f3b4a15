#include <benchmark/benchmark.h>

#include "segvit/config.hpp"
#include "segvit/cost_model.hpp"
#include "segvit/dataset.hpp"
#include "segvit/model.hpp"
#include "segvit/ops.hpp"

namespace {

using namespace segvit;

Tensor filled(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = filled({n, n}, 1), b = filled({n, n}, 2);
  for (auto _ : state) {
    Tape tape;
    Var r = matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(r.value().data().data());
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void run_step(benchmark::State& state, Variant variant, HeadKind head) {
  RunConfig cfg = default_run_config();
  cfg.model.shrunk.variant = variant;
  if (variant == Variant::kShrunk) cfg.model.shrunk.qd_layer = 2;
  cfg.model.head = head;
  ParamStore store;
  Rng rng(0);
  init_model(store, cfg.model, rng);
  const Sample s = render_sample(cfg.data, Split::kTrain, 0);
  const Tensor img = image_to_tensor(s.image);
  for (auto _ : state) {
    Tape tape;
    Binder bind(tape, store, true);
    ModelOutput out = model_forward(bind, img, cfg.model);
    LossBreakdown l = model_loss(out, s.labels, cfg.model);
    benchmark::DoNotOptimize(tape.backward(l.total));
  }
}

void BM_TrainStepSingleAtm(benchmark::State& s) { run_step(s, Variant::kSingle, HeadKind::kAtm); }
void BM_TrainStepSingleLinear(benchmark::State& s) { run_step(s, Variant::kSingle, HeadKind::kLinear); }
void BM_TrainStepShrunk(benchmark::State& s) { run_step(s, Variant::kShrunk, HeadKind::kAtm); }
void BM_TrainStepShrunkPP(benchmark::State& s) { run_step(s, Variant::kShrunkPP, HeadKind::kAtm); }
BENCHMARK(BM_TrainStepSingleAtm)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepSingleLinear)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepShrunk)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStepShrunkPP)->Unit(benchmark::kMillisecond);

void BM_CostModelAllPresets(benchmark::State& state) {
  const auto names = preset_names();
  for (auto _ : state) {
    std::uint64_t sum = 0;
    for (const auto& n : names) sum += count_variant_macs(preset_by_name(n)).total();
    benchmark::DoNotOptimize(sum);
  }
}
BENCHMARK(BM_CostModelAllPresets);

}  // namespace

BENCHMARK_MAIN();

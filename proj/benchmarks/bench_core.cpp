#include <benchmark/benchmark.h>

#include "modfuse/encoders.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/ops.hpp"
#include "modfuse/train.hpp"

using namespace modfuse;

namespace {

void BM_Matmul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    const Tensor a = Tensor::uniform(rng, {n, n}, -1, 1);
    const Tensor b = Tensor::uniform(rng, {n, n}, -1, 1);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_Softmax(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(2);
    const Tensor x = Tensor::uniform(rng, {n, n}, -3, 3);
    for (auto _ : state) {
        Tensor y = softmax(x, 1);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_Softmax)->Arg(64)->Arg(256);

void BM_TransformerBlockForward(benchmark::State& state) {
    const int tokens = static_cast<int>(state.range(0));
    const int d = 64;
    Rng rng(3);
    ParamRegistry reg;
    add_block_params(reg, "b.", d, 2 * d, rng);
    const ParamLeaves vals(nullptr, reg);
    const TransformerBlockParams p = block_params(vals, "b.", 4);
    const Tensor x = Tensor::uniform(rng, {tokens, d}, -1, 1);
    for (auto _ : state) {
        Tensor y = transformer_block(x, p);
        benchmark::DoNotOptimize(y.values().data());
    }
}
BENCHMARK(BM_TransformerBlockForward)->Arg(17)->Arg(65);

void BM_VisionEncoderForward(benchmark::State& state) {
    VisionEncoderConfig cfg;  // default geometry: 4 frames of 32x32, patch 8
    Rng rng(4);
    ParamRegistry reg;
    init_vision_params(reg, "vision.", cfg, rng);
    const ParamLeaves vals(nullptr, reg);
    const Tensor frames = Tensor::uniform(rng, {cfg.frames, cfg.height, cfg.width}, -1, 1);
    for (auto _ : state) {
        ModalityFeature f = encode_vision(vals, "vision.", frames, cfg);
        benchmark::DoNotOptimize(f.pooled.values().data());
    }
}
BENCHMARK(BM_VisionEncoderForward);

void BM_TrainStep(benchmark::State& state) {
    // One forward/backward/adam cycle of the fusion stage on one sample.
    FusionConfig fc;
    Rng rng(5);
    ParamRegistry reg;
    init_fusion_params(reg, fc, rng);
    AdamState opt(reg);
    const AdamConfig adam{};
    const Tensor hv = Tensor::uniform(rng, {fc.d_model}, -1, 1);
    const Tensor ha = Tensor::uniform(rng, {fc.d_model}, -1, 1);
    const Tensor he = Tensor::uniform(rng, {fc.d_model}, -1, 1);

    for (auto _ : state) {
        Tape tape;
        const ParamLeaves leaves(&tape, reg);
        const Tensor loss =
            cross_entropy(reshape(fusion_logits(leaves, hv, ha, he, fc), {1, 5}), {2});
        const GradientMap grads = tape.backward(loss);
        std::vector<std::pair<std::string, Tensor>> named;
        for (const auto& e : reg.entries()) {
            named.emplace_back(e.name, grads.grad(leaves[e.name]));
        }
        adam_step(reg, named, opt, adam);
        benchmark::DoNotOptimize(reg.value("fusion.mlp.b2").values().data());
    }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();

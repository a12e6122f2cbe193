// Times the OpenMP kernels against the serial reference implementations and
// checks that both produce bitwise-identical results. Build and run:
//   cmake --build build --target flab-bench && ./build/benchmarks/flab-bench

#include <cstdio>
#include <omp.h>
#include <string>
#include <vector>

#include "flab/model.hpp"
#include "flab/ops.hpp"
#include "flab/rng.hpp"
#include "flab/training.hpp"

using namespace flab;

namespace {

MatF random_mat(Rng& rng, int r, int c) {
    MatF m(r, c);
    rng.fill_normal(m, 1.0);
    return m;
}

template <class F>
double time_best_of(int reps, F&& fn) {
    double best = 1e30;
    for (int i = 0; i < reps; ++i) {
        const double t0 = omp_get_wtime();
        fn();
        best = std::min(best, omp_get_wtime() - t0);
    }
    return best;
}

void bench_matmul(int n) {
    Rng rng(1);
    MatF a = random_mat(rng, n, n), b = random_mat(rng, n, n), c1, c2;
    const double flops = 2.0 * n * n * n;
    const double ts = time_best_of(3, [&] { ops::serial::matmul_nn(a, b, c1); });
    const double tp = time_best_of(3, [&] { ops::matmul_nn(a, b, c2); });
    const bool same = c1.a == c2.a;
    std::printf("matmul_nn %4dx%-4d  serial %7.1f ms (%5.2f GF/s)  omp %7.1f ms (%5.2f GF/s)"
                "  speedup %4.2fx  bitwise %s\n",
                n, n, ts * 1e3, flops / ts / 1e9, tp * 1e3, flops / tp / 1e9, ts / tp,
                same ? "ok" : "MISMATCH");
}

void bench_train_step() {
    Vocabulary vocab = [] {
        std::vector<std::string> words;
        for (int i = 0; i < 250; ++i) words.push_back("w" + std::to_string(i));
        return Vocabulary::from_words(words);
    }();
    ModelConfig comp;
    comp.role = Role::compressor;
    comp.n_layers = 2;
    comp.n_heads = 4;
    comp.d_model = 64;
    comp.d_ff = 256;
    comp.vocab_size = vocab.size();
    comp.max_positions = 160;
    ModelConfig dec = comp;
    dec.role = Role::decoder;
    CompressionConfig cc;
    cc.memory_slots = 8;
    cc.train_prefix_len = 64;

    std::vector<CompressionSample> batch;
    Rng rng(2);
    for (int i = 0; i < 8; ++i) {
        CompressionSample s;
        for (int t = 0; t < 80; ++t)
            s.x.push_back(Vocabulary::kNumReserved +
                          static_cast<int32_t>(rng.randint(0, 243)));
        s.split_k = 64;
        batch.push_back(std::move(s));
    }
    TrainConfig tc;
    tc.steps = 100;
    tc.batch_size = 8;

    Model m1 = Model::init(comp, dec, cc, vocab, 3);
    Model m2 = m1;
    AdamState a1 = AdamState::init(m1.params), a2 = AdamState::init(m2.params);
    const double ts = time_best_of(2, [&] { train_step_serial(batch, m1, a1, tc, 1); });
    const double tp = time_best_of(2, [&] { train_step(batch, m2, a2, tc, 1); });
    bool same = true;
    for (size_t t = 0; t < m1.params.count() && same; ++t)
        same = m1.params.tensors[t].a == m2.params.tensors[t].a;
    std::printf("train_step (2L d64 batch 8 seq 80)  serial %7.1f ms  omp %7.1f ms  "
                "speedup %4.2fx  bitwise %s\n",
                ts * 1e3, tp * 1e3, ts / tp, same ? "ok" : "MISMATCH");
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());
    for (int n : {128, 256, 512}) bench_matmul(n);
    bench_train_step();
    return 0;
}

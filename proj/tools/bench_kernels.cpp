// Times the serial reference kernels against the OpenMP variants on shapes
// the pipeline actually runs, and verifies the results stay bit-identical.
#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#include "dg/kernels.hpp"
#include "dg/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace dg;

namespace {

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

std::vector<float> random_vec(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

template <class F>
double time_best_ms(F&& fn, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        fn();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

struct Result {
    const char* name;
    double serial_ms, omp_ms;
    bool bit_equal;
};

void report(const Result& r) {
    std::printf("%-26s serial %8.3f ms   omp %8.3f ms   speedup %5.2fx   %s\n", r.name,
                r.serial_ms, r.omp_ms, r.serial_ms / r.omp_ms,
                r.bit_equal ? "bit-equal" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif
    Rng rng(17);
    const int reps = 20;

    {  // encoder-scale conv: 16ch 32x32
        auto d = kern::conv_dims(8, 32, 32, 16, 3, 1, 1);
        auto x = random_vec(8 * 32 * 32, rng);
        auto w = random_vec(16 * 8 * 9, rng);
        auto b = random_vec(16, rng);
        std::vector<float> ys(16 * 32 * 32), yp(16 * 32 * 32);
        double ts = time_best_ms(
            [&] { kern::conv2d_fwd_serial(x.data(), w.data(), b.data(), ys.data(), d); }, reps);
        double tp = time_best_ms(
            [&] { kern::conv2d_fwd_omp(x.data(), w.data(), b.data(), yp.data(), d); }, reps);
        report({"conv2d 8->16 @32x32", ts, tp,
                std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0});
    }
    {  // conv backward (weight grads), unet mid scale
        auto d = kern::conv_dims(32, 8, 8, 32, 3, 1, 1);
        auto x = random_vec(32 * 8 * 8, rng);
        auto gy = random_vec(32 * 8 * 8, rng);
        std::vector<float> gws(32 * 32 * 9), gbs(32), gwp(32 * 32 * 9), gbp(32);
        double ts = time_best_ms(
            [&] {
                std::fill(gws.begin(), gws.end(), 0.f);
                std::fill(gbs.begin(), gbs.end(), 0.f);
                kern::conv2d_bwd_weight_serial(gy.data(), x.data(), gws.data(), gbs.data(), d);
            },
            reps);
        double tp = time_best_ms(
            [&] {
                std::fill(gwp.begin(), gwp.end(), 0.f);
                std::fill(gbp.begin(), gbp.end(), 0.f);
                kern::conv2d_bwd_weight_omp(gy.data(), x.data(), gwp.data(), gbp.data(), d);
            },
            reps);
        report({"conv2d bwd-w 32ch @8x8", ts, tp,
                std::memcmp(gws.data(), gwp.data(), gws.size() * sizeof(float)) == 0});
    }
    {  // attention-scale matmul: [64,16] x [16,16]
        auto a = random_vec(64 * 16, rng);
        auto bm = random_vec(16 * 16, rng);
        std::vector<float> cs(64 * 16), cp(64 * 16);
        double ts = time_best_ms(
            [&] { kern::matmul_serial(a.data(), bm.data(), cs.data(), 64, 16, 16, false, false,
                                      false); },
            reps * 10);
        double tp = time_best_ms(
            [&] { kern::matmul_omp(a.data(), bm.data(), cp.data(), 64, 16, 16, false, false,
                                   false); },
            reps * 10);
        report({"matmul 64x16x16", ts, tp,
                std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(float)) == 0});
    }
    {  // big matmul to show scaling headroom
        auto a = random_vec(256 * 256, rng);
        auto bm = random_vec(256 * 256, rng);
        std::vector<float> cs(256 * 256), cp(256 * 256);
        double ts = time_best_ms(
            [&] { kern::matmul_serial(a.data(), bm.data(), cs.data(), 256, 256, 256, false,
                                      false, false); },
            reps);
        double tp = time_best_ms(
            [&] { kern::matmul_omp(a.data(), bm.data(), cp.data(), 256, 256, 256, false, false,
                                   false); },
            reps);
        report({"matmul 256^3", ts, tp,
                std::memcmp(cs.data(), cp.data(), cs.size() * sizeof(float)) == 0});
    }
    {  // softmax rows, attention-map scale
        auto x = random_vec(128 * 8, rng);
        std::vector<float> ys(128 * 8), yp(128 * 8);
        double ts = time_best_ms([&] { kern::softmax_rows_serial(x.data(), ys.data(), 128, 8); },
                                 reps * 10);
        double tp = time_best_ms([&] { kern::softmax_rows_omp(x.data(), yp.data(), 128, 8); },
                                 reps * 10);
        report({"softmax 128x8", ts, tp,
                std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0});
    }
    return 0;
}

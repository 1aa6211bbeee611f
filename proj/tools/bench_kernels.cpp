// Benchmarks the OpenMP kernels against the serial reference implementations
// and verifies that both produce identical results.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include <omp.h>

#include "ecmoe/kernels.hpp"
#include "ecmoe/moe_layer.hpp"
#include "ecmoe/prng.hpp"
#include "ecmoe/routing.hpp"

namespace {

using ecmoe::Matrix;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    ecmoe::SplitMix64 prng(seed);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = prng.next_uniform(-1.0, 1.0);
    }
    return m;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    auto dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
    return dt.count() / reps;
}

void report(const std::string& name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-28s %10.3f ms %10.3f ms %7.2fx   %s\n", name.c_str(), serial_ms, parallel_ms,
                serial_ms / parallel_ms, identical ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main() {
    ecmoe::configure_threads_from_env();
    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    const int reps = 5;

    {
        Matrix a = random_matrix(256, 384, 11), b = random_matrix(384, 256, 12);
        Matrix rs, rp;
        double ts = time_ms([&] { rs = ecmoe::ref::matmul(a, b); }, reps);
        double tp = time_ms([&] { rp = ecmoe::matmul(a, b); }, reps);
        report("matmul 256x384x256", ts, tp, rs == rp);
    }
    {
        Matrix m = random_matrix(4096, 64, 13);
        Matrix rs, rp;
        double ts = time_ms([&] { rs = ecmoe::ref::softmax_rows(m); }, reps);
        double tp = time_ms([&] { rp = ecmoe::softmax_rows(m); }, reps);
        report("softmax_rows 4096x64", ts, tp, rs == rp);
    }
    {
        Matrix m = random_matrix(64, 4096, 14);
        Matrix vs, vp;
        ecmoe::IndexMatrix is, ip;
        double ts = time_ms([&] { std::tie(vs, is) = ecmoe::ref::topk_rows(m, 128); }, reps);
        double tp = time_ms([&] { std::tie(vp, ip) = ecmoe::topk_rows(m, 128); }, reps);
        report("topk_rows 64x4096 k=128", ts, tp, vs == vp && is == ip);
    }
    {
        Matrix m = random_matrix(2048, 512, 15);
        Matrix rs, rp;
        double ts = time_ms([&] { rs = ecmoe::ref::transpose(m); }, reps);
        double tp = time_ms([&] { rp = ecmoe::transpose(m); }, reps);
        report("transpose 2048x512", ts, tp, rs == rp);
    }
    {
        // end to end: affinity + expert-choice routing on a full batch
        Matrix x = random_matrix(4096, 64, 16);
        Matrix w_g = ecmoe::init_gating(17, 64, 64);
        auto run_ref = [&] {
            Matrix s = ecmoe::ref::softmax_rows(ecmoe::ref::matmul(x, w_g));
            auto r = ecmoe::ref::topk_rows(ecmoe::ref::transpose(s), 128);
            (void)r;
        };
        auto run_par = [&] {
            Matrix s = ecmoe::affinity(x, w_g);
            auto a = ecmoe::expert_choice_route(s, 128);
            (void)a;
        };
        Matrix s1 = ecmoe::ref::softmax_rows(ecmoe::ref::matmul(x, w_g));
        Matrix s2 = ecmoe::affinity(x, w_g);
        double ts = time_ms(run_ref, reps);
        double tp = time_ms(run_par, reps);
        report("ec route n=4096 e=64", ts, tp, s1 == s2);
    }
    return 0;
}

#pragma once

#include <cstdint>
#include <random>

#include "flab/mat.hpp"

namespace flab {

// Seeded RNG wrapper. Everything downstream of a fixed seed is deterministic
// on a given platform/libstdc++.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(gen_);
    }

    double uniform(double lo = 0.0, double hi = 1.0) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(gen_);
    }

    // Uniform integer in [lo, hi], inclusive.
    int64_t randint(int64_t lo, int64_t hi) {
        std::uniform_int_distribution<int64_t> d(lo, hi);
        return d(gen_);
    }

    template <class T>
    void fill_normal(Mat<T>& m, double stddev) {
        for (auto& v : m.a) v = static_cast<T>(normal(0.0, stddev));
    }

    template <class It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, gen_);
    }

    // Derives an independent stream; used so sub-generators do not perturb
    // each other's sequences when call orders change.
    Rng fork(uint64_t salt) {
        return Rng(gen_() ^ (salt * 0x9e3779b97f4a7c15ULL));
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

} // namespace flab

// SPDX-License-Identifier: Apache-2.0
//
// satul - uplink transmit covariance design for massive MIMO LEO satellites
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef SATUL_RNG_HPP
#define SATUL_RNG_HPP

#include <complex>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace satul
{
    // Stream purposes. Values are part of the reproducibility contract; do not renumber.
    enum class stream_tag : std::uint64_t
    {
        ut_position = 1,
        ut_azimuth = 2,
        scatter_eigenvalues = 3,
        channel_sample = 4,
        report_pool = 5,
    };

    inline std::uint64_t splitmix64(std::uint64_t &state)
    {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // xoshiro256** seeded by hashing a key path with splitmix64. Streams derived from distinct
    // paths are independent for all practical purposes, so per-(UT, sample) draws do not depend on
    // evaluation order or thread count.
    class rng_stream
    {
    public:
        using result_type = std::uint64_t;

        rng_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
        {
            std::uint64_t h = seed;
            std::uint64_t mix = splitmix64(h);
            for (std::uint64_t p : path)
            {
                std::uint64_t t = mix ^ (p + 0x632BE59BD9B4E019ull);
                mix = splitmix64(t);
            }
            std::uint64_t st = mix;
            for (auto &s : s_)
                s = splitmix64(st);
        }

        static constexpr result_type min() { return 0; }
        static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

        result_type operator()()
        {
            const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
            const std::uint64_t t = s_[1] << 17;
            s_[2] ^= s_[0];
            s_[3] ^= s_[1];
            s_[1] ^= s_[2];
            s_[0] ^= s_[3];
            s_[2] ^= t;
            s_[3] = rotl(s_[3], 45);
            return result;
        }

        // uniform on [0, 1)
        double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

        // circularly symmetric complex Gaussian with E|z|^2 = variance
        std::complex<double> complex_normal(double variance)
        {
            double s = std::sqrt(0.5 * variance);
            return {s * normal_(*this), s * normal_(*this)};
        }

    private:
        static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
        std::uint64_t s_[4];
        std::normal_distribution<double> normal_;
    };

} // namespace satul

#endif

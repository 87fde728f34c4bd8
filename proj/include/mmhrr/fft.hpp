/**
 * Thin FFTW wrapper.
 *
 * Plans are created once per (size, kind) and cached per thread. Planning is
 * serialised through a global mutex because the FFTW planner is not
 * re-entrant; executing a cached plan on caller-owned buffers is.
 */
#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

namespace mmhrr::fft {

using cplx = std::complex<double>;

namespace detail {

enum class Kind { Forward, Inverse, RealForward };

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class Plan {
public:
    Plan(std::size_t n, Kind kind) : kind_(kind) {
        std::lock_guard lock(planner_mutex());
        const int ni = static_cast<int>(n);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        auto* cin = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n + 1)));
        auto* cout = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n + 1)));
        auto* rin = static_cast<double*>(fftw_malloc(sizeof(double) * (n + 1)));
        switch (kind) {
        case Kind::Forward:
            plan_ = fftw_plan_dft_1d(ni, cin, cout, FFTW_FORWARD, flags);
            break;
        case Kind::Inverse:
            plan_ = fftw_plan_dft_1d(ni, cin, cout, FFTW_BACKWARD, flags);
            break;
        case Kind::RealForward:
            plan_ = fftw_plan_dft_r2c_1d(ni, rin, cout, flags);
            break;
        }
        fftw_free(cin);
        fftw_free(cout);
        fftw_free(rin);
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }

    void run(cplx* in, cplx* out) const {
        fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(in),
                         reinterpret_cast<fftw_complex*>(out));
    }
    void run_real(double* in, cplx* out) const {
        fftw_execute_dft_r2c(plan_, in, reinterpret_cast<fftw_complex*>(out));
    }

private:
    Kind kind_;
    fftw_plan plan_{};
};

inline const Plan& plan_for(std::size_t n, Kind kind) {
    thread_local std::map<std::pair<std::size_t, Kind>, std::unique_ptr<Plan>> cache;
    auto& slot = cache[{n, kind}];
    if (!slot) slot = std::make_unique<Plan>(n, kind);
    return *slot;
}

}  // namespace detail

/// Unnormalised forward DFT.
inline std::vector<cplx> forward(std::span<const cplx> x) {
    std::vector<cplx> in(x.begin(), x.end()), out(x.size());
    if (x.empty()) return out;
    detail::plan_for(x.size(), detail::Kind::Forward).run(in.data(), out.data());
    return out;
}

/// Inverse DFT scaled by 1/n, so inverse(forward(x)) == x.
inline std::vector<cplx> inverse(std::span<const cplx> x) {
    std::vector<cplx> in(x.begin(), x.end()), out(x.size());
    if (x.empty()) return out;
    detail::plan_for(x.size(), detail::Kind::Inverse).run(in.data(), out.data());
    const double scale = 1.0 / static_cast<double>(x.size());
    for (auto& v : out) v *= scale;
    return out;
}

/// Half spectrum (nfft/2 + 1 bins) of a real signal zero-padded to nfft.
inline std::vector<cplx> real_spectrum(std::span<const double> x, std::size_t nfft) {
    if (nfft < x.size()) nfft = x.size();
    std::vector<double> in(nfft, 0.0);
    std::copy(x.begin(), x.end(), in.begin());
    std::vector<cplx> out(nfft / 2 + 1);
    if (nfft == 0) return out;
    detail::plan_for(nfft, detail::Kind::RealForward).run_real(in.data(), out.data());
    return out;
}

inline std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace mmhrr::fft

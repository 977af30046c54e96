#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "isacsim/common.hpp"

namespace isacsim {

/// Axis metadata a subcarrier-by-symbol grid carries through the processing
/// chain. Spacing and symbol duration are *effective* values: decimation
/// widens them relative to the radio numerology.
struct GridMeta {
    double carrier_freq_hz = 0.0;
    double subcarrier_spacing_hz = 0.0;
    double symbol_duration_s = 0.0;
};

/// Complex-valued subcarrier x symbol matrix. Carries TX signals, received
/// signals and effective channels. Row-major [subcarrier][symbol]. An
/// optional per-element mask marks allocated resource elements; an empty
/// mask means fully allocated.
class ComplexGrid {
public:
    ComplexGrid() = default;
    ComplexGrid(std::size_t num_subcarriers, std::size_t num_symbols, GridMeta meta)
        : n_(num_subcarriers), m_(num_symbols), meta_(meta), data_(num_subcarriers * num_symbols) {}

    std::size_t num_subcarriers() const { return n_; }
    std::size_t num_symbols() const { return m_; }
    const GridMeta& meta() const { return meta_; }
    GridMeta& meta() { return meta_; }

    Complex& at(std::size_t k, std::size_t l) { return data_[k * m_ + l]; }
    const Complex& at(std::size_t k, std::size_t l) const { return data_[k * m_ + l]; }

    std::vector<Complex>& data() { return data_; }
    const std::vector<Complex>& data() const { return data_; }

    bool fully_allocated() const { return mask_.empty(); }
    bool allocated(std::size_t k, std::size_t l) const {
        return mask_.empty() || mask_[k * m_ + l] != 0;
    }
    void set_allocated(std::size_t k, std::size_t l, bool on) {
        if (mask_.empty()) mask_.assign(n_ * m_, 1);
        mask_[k * m_ + l] = on ? 1 : 0;
    }
    const std::vector<std::uint8_t>& mask() const { return mask_; }
    void set_mask(std::vector<std::uint8_t> mask) { mask_ = std::move(mask); }

    bool same_shape(const ComplexGrid& other) const {
        return n_ == other.n_ && m_ == other.m_;
    }

private:
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    GridMeta meta_;
    std::vector<Complex> data_;
    std::vector<std::uint8_t> mask_;
};

} // namespace isacsim

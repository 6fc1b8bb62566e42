#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace ndl {

// Named f32 tensor, row-major. The unit of model serialization.
struct Tensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    std::size_t size() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

}  // namespace ndl

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace attnlab {

using Token = int32_t;
using TokenSeq = std::vector<Token>;

// Contiguous span of positions [start, start + size) inside a token buffer.
struct BlockRange {
    size_t start = 0;
    size_t size = 0;

    size_t end() const { return start + size; }
    bool contains(size_t pos) const { return pos >= start && pos < end(); }
};

}  // namespace attnlab

#include "pat/geometry.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace pat {

CellSet::CellSet(std::vector<Cell> cells) : cells_(std::move(cells)) {
    std::sort(cells_.begin(), cells_.end());
    cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
}

CellSet CellSet::rectangle(int height, int width) {
    if (height < 0 || width < 0) throw std::invalid_argument("CellSet::rectangle: negative dims");
    std::vector<Cell> cells;
    cells.reserve(std::size_t(height) * std::size_t(width));
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) cells.push_back({r, c});
    return CellSet(std::move(cells));
}

bool CellSet::contains(Cell c) const {
    return std::binary_search(cells_.begin(), cells_.end(), c);
}

bool CellSet::contains_all(const CellSet& other) const {
    return std::includes(cells_.begin(), cells_.end(), other.cells_.begin(), other.cells_.end());
}

Cell CellSet::min_corner() const {
    Cell m{std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
    for (const Cell& c : cells_) {
        m.row = std::min(m.row, c.row);
        m.col = std::min(m.col, c.col);
    }
    return empty() ? Cell{0, 0} : m;
}

Cell CellSet::max_corner() const {
    Cell m{std::numeric_limits<int>::min(), std::numeric_limits<int>::min()};
    for (const Cell& c : cells_) {
        m.row = std::max(m.row, c.row);
        m.col = std::max(m.col, c.col);
    }
    return empty() ? Cell{0, 0} : m;
}

CellSet CellSet::normalized() const {
    const Cell m = min_corner();
    return translated(-m.row, -m.col);
}

CellSet CellSet::translated(int d_row, int d_col) const {
    std::vector<Cell> out;
    out.reserve(cells_.size());
    for (const Cell& c : cells_) out.push_back({c.row + d_row, c.col + d_col});
    CellSet s;
    s.cells_ = std::move(out);  // translation preserves order and uniqueness
    return s;
}

CellSet interior_cells(const CellSet& cells) {
    std::vector<Cell> out;
    for (const Cell& c : cells.cells()) {
        const bool inner = cells.contains({c.row - 1, c.col}) && cells.contains({c.row + 1, c.col}) &&
                           cells.contains({c.row, c.col - 1}) && cells.contains({c.row, c.col + 1});
        if (inner) out.push_back(c);
    }
    return CellSet(std::move(out));
}

CellSet dilate(const CellSet& cells, int radius, Norm norm) {
    if (radius < 0) throw std::invalid_argument("dilate: negative radius");
    if (radius == 0) return cells;
    std::vector<Cell> out;
    for (const Cell& c : cells.cells()) {
        for (int dr = -radius; dr <= radius; ++dr) {
            const int span = norm == Norm::chebyshev ? radius : radius - std::abs(dr);
            for (int dc = -span; dc <= span; ++dc) out.push_back({c.row + dr, c.col + dc});
        }
    }
    return CellSet(std::move(out));
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

std::uint64_t hash_cells(std::uint64_t h, const CellSet& s) {
    for (const Cell& c : s.cells()) {
        const std::array<std::int32_t, 2> rc{c.row, c.col};
        h = fnv1a64(rc.data(), sizeof(rc), h);
    }
    const std::uint64_t n = s.size();
    return fnv1a64(&n, sizeof(n), h);
}

}  // namespace

KernelShape make_kernel_shape(CellSet sensor, CellSet core) {
    if (core.empty()) throw std::invalid_argument("make_kernel_shape: empty core");
    if (!sensor.contains_all(core)) throw std::invalid_argument("make_kernel_shape: core not inside sensor");
    const Cell m = sensor.min_corner();
    KernelShape shape;
    shape.sensor = sensor.translated(-m.row, -m.col);
    shape.core = core.translated(-m.row, -m.col);
    std::uint64_t h = hash_cells(0xcbf29ce484222325ull, shape.sensor);
    h = hash_cells(h, shape.core);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "k%016llx", static_cast<unsigned long long>(h));
    shape.shape_id = buf;
    return shape;
}

KernelShape octagon_shape() {
    static const std::array<std::pair<int, int>, 6> kRowSpan{{
        {2, 3}, {1, 4}, {0, 5}, {0, 5}, {1, 4}, {2, 3},
    }};
    std::vector<Cell> cells;
    for (int r = 0; r < 6; ++r)
        for (int c = kRowSpan[r].first; c <= kRowSpan[r].second; ++c) cells.push_back({r, c});
    CellSet sensor{std::move(cells)};
    return make_kernel_shape(sensor, interior_cells(sensor));
}

KernelShape full_window_shape(int height, int width) {
    CellSet grid = CellSet::rectangle(height, width);
    return make_kernel_shape(grid, grid);
}

DisplacementTable displacements(const KernelShape& shape) {
    const auto& core = shape.core.cells();
    const auto& sensor = shape.sensor.cells();
    DisplacementTable table;
    std::vector<Displacement> all;
    all.reserve(core.size() * sensor.size());
    for (const Cell& u : core)
        for (const Cell& s : sensor) all.push_back({u.row - s.row, u.col - s.col});
    table.distinct = all;
    std::sort(table.distinct.begin(), table.distinct.end());
    table.distinct.erase(std::unique(table.distinct.begin(), table.distinct.end()), table.distinct.end());
    table.pair_index.reserve(all.size());
    for (const Displacement& d : all) {
        const auto it = std::lower_bound(table.distinct.begin(), table.distinct.end(), d);
        table.pair_index.push_back(std::uint32_t(it - table.distinct.begin()));
    }
    return table;
}

}  // namespace pat

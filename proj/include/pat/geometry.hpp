#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace pat {

struct Cell {
    int row = 0;
    int col = 0;
    auto operator<=>(const Cell&) const = default;
};

// Duplicate-free set of grid cells in deterministic row-major order.
class CellSet {
public:
    CellSet() = default;
    explicit CellSet(std::vector<Cell> cells);

    static CellSet rectangle(int height, int width);

    const std::vector<Cell>& cells() const { return cells_; }
    std::vector<Cell>::const_iterator begin() const { return cells_.begin(); }
    std::vector<Cell>::const_iterator end() const { return cells_.end(); }
    std::size_t size() const { return cells_.size(); }
    bool empty() const { return cells_.empty(); }
    bool contains(Cell c) const;
    bool contains_all(const CellSet& other) const;

    Cell min_corner() const;  // (min row, min col), independently per axis
    Cell max_corner() const;
    int frame_height() const { return empty() ? 0 : max_corner().row - min_corner().row + 1; }
    int frame_width() const { return empty() ? 0 : max_corner().col - min_corner().col + 1; }

    bool is_normalized() const { return empty() || (min_corner().row == 0 && min_corner().col == 0); }
    CellSet normalized() const;
    CellSet translated(int d_row, int d_col) const;

    bool operator==(const CellSet&) const = default;

private:
    std::vector<Cell> cells_;
};

// Cells whose four axis-neighbors are all members; coordinates stay in the
// input frame.
CellSet interior_cells(const CellSet& cells);

enum class Norm { chebyshev, manhattan };

// Union of norm balls of the given radius around each cell, in the input
// frame.
CellSet dilate(const CellSet& cells, int radius, Norm norm);

// One kernel shape class: a sensor region and the core (update) cells inside
// it, both in the sensor's frame. shape_id is a content hash of the geometry.
struct KernelShape {
    std::string shape_id;
    CellSet sensor;  // normalized
    CellSet core;    // subset of sensor, sensor frame
    std::size_t sensor_size() const { return sensor.size(); }
    std::size_t core_size() const { return core.size(); }
    bool operator==(const KernelShape&) const = default;
};

// Validates core subset-of sensor and core nonempty, shifts both into the
// normalized sensor frame, and assigns the content-hash id.
KernelShape make_kernel_shape(CellSet sensor, CellSet core);

// The canonical doughnut: 24-cell rasterized octagon sensor with row widths
// (2,4,6,6,4,2) in a 6x6 frame, core = its 12-cell 4-adjacency interior.
KernelShape octagon_shape();

// Degenerate shape where core = sensor = the whole h x w window.
KernelShape full_window_shape(int height, int width);

// update cell minus sensor cell, in grid cells
struct Displacement {
    int d_row = 0;
    int d_col = 0;
    auto operator<=>(const Displacement&) const = default;
};

struct DisplacementTable {
    std::vector<Displacement> distinct;    // sorted row-major, duplicate-free
    std::vector<std::uint32_t> pair_index; // U*S entries, (u * S + s) -> index into distinct
};

DisplacementTable displacements(const KernelShape& shape);

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace pat

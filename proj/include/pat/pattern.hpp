#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pat/geometry.hpp"

namespace pat {

struct LayoutError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One placed kernel: absolute cell sets, clipped to the grid. The anchor is
// the grid position of the normalized shape frame's origin, i.e. the top-left
// corner of the sensor bounding box.
struct KernelInstance {
    std::string shape_id;
    Cell anchor{0, 0};
    CellSet core_cells;    // absolute
    CellSet sensor_cells;  // absolute

    bool operator==(const KernelInstance&) const = default;
};

struct Violation {
    enum class Kind { uncovered_cell, double_covered_cell, out_of_bounds, shape_mismatch };
    Kind kind;
    Cell cell{0, 0};     // for cell-level kinds
    int instance = -1;   // for instance-level kinds
    std::string detail;
};

const char* violation_kind_name(Violation::Kind kind);

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::size_t count(Violation::Kind kind) const;
    std::string to_string() const;
};

struct PatternLayout {
    int height = 0;
    int width = 0;
    Cell phase{0, 0};
    std::map<std::string, KernelShape> shapes;  // shape_id -> class geometry
    std::vector<KernelInstance> instances;      // sorted by anchor, row-major

    std::size_t tokens() const { return std::size_t(height) * std::size_t(width); }
    bool operator==(const PatternLayout& other) const;
};

// Octagon cores on the skew lattice with basis (2,3)/(-2,3) shifted by phase;
// border kernels arise by clipping, kernels whose core leaves the grid are
// dropped. Requires height, width >= 6.
PatternLayout plan_octagon_pattern(int height, int width, Cell phase);

// Non-overlapping core_side x core_side cores on a square lattice with
// sensors dilated by sensor_radius (Chebyshev) and clipped to the grid.
PatternLayout plan_square_pattern(int height, int width, int core_side, int sensor_radius);

// Checks core partition, core-inside-sensor, bounds, and shape-table
// consistency. Reports every offending cell/instance.
ValidationReport validate(const PatternLayout& layout);

struct MultiplicityGrid {
    int height = 0;
    int width = 0;
    std::vector<int> counts;  // row-major
    int at(int r, int c) const { return counts[std::size_t(r) * std::size_t(width) + std::size_t(c)]; }
    int min() const;
    int max() const;
};

// Number of instances whose sensor contains each cell.
MultiplicityGrid multiplicity(const PatternLayout& layout);

// UTF-8 JSON document, byte-stable; absolute cell sets are recomputed on load.
std::string serialize_layout(const PatternLayout& layout);

// Parses and validates; throws LayoutError with a positioned message.
PatternLayout parse_layout(const std::string& text);

// Binary PPM (P6); cores filled with a per-shape-class color, the instance
// whose core holds the center cell gets its sensor outlined.
std::string render_layout(const PatternLayout& layout, int cell_px);

// Row indices (row-major, r * width + c) of a cell set on the layout grid.
std::vector<std::size_t> cell_row_indices(const CellSet& cells, int width);

}  // namespace pat

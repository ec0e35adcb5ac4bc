#include "pat/pattern.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace pat {
namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

CellSet clip_to_grid(const CellSet& cells, int height, int width) {
    std::vector<Cell> kept;
    kept.reserve(cells.size());
    for (const Cell& c : cells) {
        if (c.row >= 0 && c.row < height && c.col >= 0 && c.col < width) kept.push_back(c);
    }
    return CellSet(std::move(kept));
}

void sort_instances(std::vector<KernelInstance>& instances) {
    std::sort(instances.begin(), instances.end(), [](const KernelInstance& a, const KernelInstance& b) {
        if (a.anchor != b.anchor) return a.anchor < b.anchor;
        return a.core_cells.min_corner() < b.core_cells.min_corner();
    });
}

KernelInstance make_instance(PatternLayout& layout, CellSet sensor_abs, CellSet core_abs) {
    KernelShape shape = make_kernel_shape(sensor_abs, core_abs);
    layout.shapes.emplace(shape.shape_id, shape);
    KernelInstance inst;
    inst.shape_id = shape.shape_id;
    inst.anchor = sensor_abs.min_corner();
    inst.sensor_cells = std::move(sensor_abs);
    inst.core_cells = std::move(core_abs);
    return inst;
}

}  // namespace

const char* violation_kind_name(Violation::Kind kind) {
    switch (kind) {
        case Violation::Kind::uncovered_cell: return "uncovered-cell";
        case Violation::Kind::double_covered_cell: return "double-covered-cell";
        case Violation::Kind::out_of_bounds: return "out-of-bounds";
        case Violation::Kind::shape_mismatch: return "shape-mismatch";
    }
    return "unknown";
}

std::size_t ValidationReport::count(Violation::Kind kind) const {
    return std::size_t(std::count_if(violations.begin(), violations.end(),
                                     [kind](const Violation& v) { return v.kind == kind; }));
}

std::string ValidationReport::to_string() const {
    if (ok()) return "ok\n";
    std::string out;
    char buf[160];
    for (const Violation& v : violations) {
        switch (v.kind) {
            case Violation::Kind::uncovered_cell:
            case Violation::Kind::double_covered_cell:
                std::snprintf(buf, sizeof buf, "%s at (%d, %d)", violation_kind_name(v.kind), v.cell.row, v.cell.col);
                break;
            default:
                std::snprintf(buf, sizeof buf, "%s at (%d, %d) instance %d", violation_kind_name(v.kind),
                              v.cell.row, v.cell.col, v.instance);
        }
        out += buf;
        if (!v.detail.empty()) {
            out += ": ";
            out += v.detail;
        }
        out += '\n';
    }
    return out;
}

bool PatternLayout::operator==(const PatternLayout& other) const {
    return height == other.height && width == other.width && phase == other.phase && shapes == other.shapes &&
           instances == other.instances;
}

PatternLayout plan_octagon_pattern(int height, int width, Cell phase) {
    if (height < 6 || width < 6) throw std::invalid_argument("grid too small for octagon pattern");
    const KernelShape proto = octagon_shape();

    PatternLayout layout;
    layout.height = height;
    layout.width = width;
    layout.phase = phase;

    // Core bbox spans rows/cols 1..4 of the 6x6 frame, so translations in
    // [-5, size) cover every kernel whose core can touch the grid.
    for (int tr = -5; tr < height; ++tr) {
        if ((tr - phase.row) % 2 != 0) continue;
        const int m = (tr - phase.row) / 2;
        for (int tc = -5; tc < width; ++tc) {
            if ((tc - phase.col) % 3 != 0) continue;
            const int n = (tc - phase.col) / 3;
            if ((m - n) % 2 != 0) continue;
            CellSet core_abs = clip_to_grid(proto.core.translated(tr, tc), height, width);
            if (core_abs.empty()) continue;
            CellSet sensor_abs = clip_to_grid(proto.sensor.translated(tr, tc), height, width);
            layout.instances.push_back(make_instance(layout, std::move(sensor_abs), std::move(core_abs)));
        }
    }
    sort_instances(layout.instances);
    return layout;
}

PatternLayout plan_square_pattern(int height, int width, int core_side, int sensor_radius) {
    if (core_side < 1) throw std::invalid_argument("core side must be positive");
    if (sensor_radius < 0) throw std::invalid_argument("sensor radius must be non-negative");
    if (height < 1 || width < 1) throw std::invalid_argument("grid dims must be positive");

    PatternLayout layout;
    layout.height = height;
    layout.width = width;
    layout.phase = Cell{0, 0};

    for (int r0 = 0; r0 < height; r0 += core_side) {
        const int r1 = std::min(r0 + core_side, height);
        for (int c0 = 0; c0 < width; c0 += core_side) {
            const int c1 = std::min(c0 + core_side, width);
            CellSet core_abs = CellSet::rectangle(r1 - r0, c1 - c0).translated(r0, c0);
            CellSet sensor_abs = clip_to_grid(dilate(core_abs, sensor_radius, Norm::chebyshev), height, width);
            layout.instances.push_back(make_instance(layout, std::move(sensor_abs), std::move(core_abs)));
        }
    }
    sort_instances(layout.instances);
    return layout;
}

ValidationReport validate(const PatternLayout& layout) {
    ValidationReport report;
    const bool grid_ok = layout.height > 0 && layout.width > 0;

    for (std::size_t i = 0; i < layout.instances.size(); ++i) {
        const KernelInstance& inst = layout.instances[i];
        auto it = layout.shapes.find(inst.shape_id);
        if (it == layout.shapes.end()) {
            report.violations.push_back({Violation::Kind::shape_mismatch, inst.anchor, int(i),
                                         "shape '" + inst.shape_id + "' not in shape table"});
        } else {
            const KernelShape& shape = it->second;
            const int nr = -inst.anchor.row, nc = -inst.anchor.col;
            if (inst.sensor_cells.translated(nr, nc) != shape.sensor || inst.core_cells.translated(nr, nc) != shape.core) {
                report.violations.push_back({Violation::Kind::shape_mismatch, inst.anchor, int(i),
                                             "instance geometry does not match shape '" + inst.shape_id + "'"});
            }
        }
        for (const Cell& c : inst.sensor_cells) {
            if (c.row < 0 || c.row >= layout.height || c.col < 0 || c.col >= layout.width)
                report.violations.push_back({Violation::Kind::out_of_bounds, c, int(i), "sensor cell outside grid"});
        }
        for (const Cell& c : inst.core_cells) {
            if (!inst.sensor_cells.contains(c) &&
                (c.row < 0 || c.row >= layout.height || c.col < 0 || c.col >= layout.width))
                report.violations.push_back({Violation::Kind::out_of_bounds, c, int(i), "core cell outside grid"});
        }
    }

    if (grid_ok) {
        std::vector<int> cover(layout.tokens(), 0);
        for (const KernelInstance& inst : layout.instances) {
            for (const Cell& c : inst.core_cells) {
                if (c.row >= 0 && c.row < layout.height && c.col >= 0 && c.col < layout.width)
                    ++cover[std::size_t(c.row) * std::size_t(layout.width) + std::size_t(c.col)];
            }
        }
        for (int r = 0; r < layout.height; ++r) {
            for (int c = 0; c < layout.width; ++c) {
                const int n = cover[std::size_t(r) * std::size_t(layout.width) + std::size_t(c)];
                if (n == 0) {
                    report.violations.push_back({Violation::Kind::uncovered_cell, Cell{r, c}, -1, ""});
                } else if (n > 1) {
                    report.violations.push_back({Violation::Kind::double_covered_cell, Cell{r, c}, -1,
                                                 "covered by " + std::to_string(n) + " cores"});
                }
            }
        }
    }
    return report;
}

MultiplicityGrid multiplicity(const PatternLayout& layout) {
    MultiplicityGrid grid;
    grid.height = layout.height;
    grid.width = layout.width;
    grid.counts.assign(layout.tokens(), 0);
    for (const KernelInstance& inst : layout.instances) {
        for (const Cell& c : inst.sensor_cells) {
            if (c.row >= 0 && c.row < layout.height && c.col >= 0 && c.col < layout.width)
                ++grid.counts[std::size_t(c.row) * std::size_t(layout.width) + std::size_t(c.col)];
        }
    }
    return grid;
}

int MultiplicityGrid::min() const {
    if (counts.empty()) return 0;
    return *std::min_element(counts.begin(), counts.end());
}

int MultiplicityGrid::max() const {
    if (counts.empty()) return 0;
    return *std::max_element(counts.begin(), counts.end());
}

namespace {

ordered_json cells_to_json(const CellSet& cells) {
    ordered_json arr = ordered_json::array();
    for (const Cell& c : cells) arr.push_back(ordered_json::array({c.row, c.col}));
    return arr;
}

CellSet cells_from_json(const json& arr, const std::string& where) {
    if (!arr.is_array()) throw LayoutError(where + ": expected an array of [row, col] pairs");
    std::vector<Cell> cells;
    cells.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const json& e = arr[i];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
            throw LayoutError(where + "[" + std::to_string(i) + "]: expected [row, col]");
        cells.push_back(Cell{e[0].get<int>(), e[1].get<int>()});
    }
    return CellSet(std::move(cells));
}

int int_field(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw LayoutError(where + ": missing field '" + key + "'");
    if (!obj[key].is_number_integer()) throw LayoutError(where + ": field '" + key + "' must be an integer");
    return obj[key].get<int>();
}

void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw LayoutError(where + ": unexpected field '" + it.key() + "'");
    }
}

}  // namespace

std::string serialize_layout(const PatternLayout& layout) {
    ordered_json j;
    j["version"] = 1;
    j["height"] = layout.height;
    j["width"] = layout.width;
    j["phase"] = ordered_json::array({layout.phase.row, layout.phase.col});
    ordered_json shapes = ordered_json::object();
    for (const auto& [id, shape] : layout.shapes) {
        ordered_json s;
        s["sensor"] = cells_to_json(shape.sensor);
        s["core"] = cells_to_json(shape.core);
        shapes[id] = std::move(s);
    }
    j["shapes"] = std::move(shapes);
    ordered_json instances = ordered_json::array();
    for (const KernelInstance& inst : layout.instances) {
        ordered_json e;
        e["shape"] = inst.shape_id;
        e["anchor"] = ordered_json::array({inst.anchor.row, inst.anchor.col});
        instances.push_back(std::move(e));
    }
    j["instances"] = std::move(instances);
    return j.dump(2) + "\n";
}

PatternLayout parse_layout(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw LayoutError(std::string("layout parse error: ") + e.what());
    }
    if (!j.is_object()) throw LayoutError("layout: top level must be an object");
    reject_unknown(j, {"version", "height", "width", "phase", "shapes", "instances"}, "layout");

    if (int_field(j, "version", "layout") != 1) throw LayoutError("layout: unsupported version");
    PatternLayout layout;
    layout.height = int_field(j, "height", "layout");
    layout.width = int_field(j, "width", "layout");
    if (layout.height < 1 || layout.width < 1) throw LayoutError("layout: height and width must be positive");

    if (!j.contains("phase") || !j["phase"].is_array() || j["phase"].size() != 2 ||
        !j["phase"][0].is_number_integer() || !j["phase"][1].is_number_integer())
        throw LayoutError("layout: field 'phase' must be [row, col]");
    layout.phase = Cell{j["phase"][0].get<int>(), j["phase"][1].get<int>()};

    if (!j.contains("shapes") || !j["shapes"].is_object()) throw LayoutError("layout: field 'shapes' must be an object");
    for (auto it = j["shapes"].begin(); it != j["shapes"].end(); ++it) {
        const std::string where = "shapes['" + it.key() + "']";
        if (!it.value().is_object()) throw LayoutError(where + ": expected an object");
        reject_unknown(it.value(), {"sensor", "core"}, where);
        if (!it.value().contains("sensor") || !it.value().contains("core"))
            throw LayoutError(where + ": missing 'sensor' or 'core'");
        CellSet sensor = cells_from_json(it.value()["sensor"], where + ".sensor");
        CellSet core = cells_from_json(it.value()["core"], where + ".core");
        KernelShape shape;
        try {
            shape = make_kernel_shape(std::move(sensor), std::move(core));
        } catch (const std::invalid_argument& e) {
            throw LayoutError(where + ": " + e.what());
        }
        shape.shape_id = it.key();
        layout.shapes.emplace(it.key(), std::move(shape));
    }

    if (!j.contains("instances") || !j["instances"].is_array())
        throw LayoutError("layout: field 'instances' must be an array");
    const json& arr = j["instances"];
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string where = "instances[" + std::to_string(i) + "]";
        const json& e = arr[i];
        if (!e.is_object()) throw LayoutError(where + ": expected an object");
        reject_unknown(e, {"shape", "anchor"}, where);
        if (!e.contains("shape") || !e["shape"].is_string()) throw LayoutError(where + ": missing string field 'shape'");
        const std::string id = e["shape"].get<std::string>();
        auto it = layout.shapes.find(id);
        if (it == layout.shapes.end()) throw LayoutError(where + ": unknown shape '" + id + "'");
        if (!e.contains("anchor") || !e["anchor"].is_array() || e["anchor"].size() != 2 ||
            !e["anchor"][0].is_number_integer() || !e["anchor"][1].is_number_integer())
            throw LayoutError(where + ": field 'anchor' must be [row, col]");
        KernelInstance inst;
        inst.shape_id = id;
        inst.anchor = Cell{e["anchor"][0].get<int>(), e["anchor"][1].get<int>()};
        inst.sensor_cells = it->second.sensor.translated(inst.anchor.row, inst.anchor.col);
        inst.core_cells = it->second.core.translated(inst.anchor.row, inst.anchor.col);
        layout.instances.push_back(std::move(inst));
    }

    ValidationReport report = validate(layout);
    if (!report.ok()) throw LayoutError("invalid layout:\n" + report.to_string());
    return layout;
}

namespace {

struct Rgb {
    unsigned char r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    auto to8 = [](double t) { return (unsigned char)std::lround(255.0 * std::clamp(t, 0.0, 1.0)); };
    return {to8(r + m), to8(g + m), to8(b + m)};
}

Rgb class_color(const std::string& shape_id) {
    const std::uint64_t h = fnv1a64(shape_id.data(), shape_id.size());
    const double hue = double(h % 360);
    const double sat = 0.45 + double((h >> 20) % 26) / 100.0;
    const double val = 0.78 + double((h >> 40) % 18) / 100.0;
    return hsv_to_rgb(hue, sat, val);
}

Rgb darken(Rgb c) {
    return {(unsigned char)(c.r * 11 / 20), (unsigned char)(c.g * 11 / 20), (unsigned char)(c.b * 11 / 20)};
}

}  // namespace

std::string render_layout(const PatternLayout& layout, int cell_px) {
    if (cell_px < 1) throw std::invalid_argument("cell_px must be positive");
    const int iw = layout.width * cell_px;
    const int ih = layout.height * cell_px;
    std::vector<unsigned char> px(std::size_t(iw) * std::size_t(ih) * 3, 255);
    auto put = [&](int x, int y, Rgb c) {
        std::size_t o = (std::size_t(y) * std::size_t(iw) + std::size_t(x)) * 3;
        px[o] = c.r;
        px[o + 1] = c.g;
        px[o + 2] = c.b;
    };

    std::vector<int> owner(layout.tokens(), -1);
    for (std::size_t i = 0; i < layout.instances.size(); ++i) {
        for (const Cell& c : layout.instances[i].core_cells) {
            if (c.row >= 0 && c.row < layout.height && c.col >= 0 && c.col < layout.width)
                owner[std::size_t(c.row) * std::size_t(layout.width) + std::size_t(c.col)] = int(i);
        }
    }
    auto owner_at = [&](int r, int c) -> int {
        if (r < 0 || r >= layout.height || c < 0 || c >= layout.width) return -2;
        return owner[std::size_t(r) * std::size_t(layout.width) + std::size_t(c)];
    };

    for (int r = 0; r < layout.height; ++r) {
        for (int c = 0; c < layout.width; ++c) {
            const int own = owner_at(r, c);
            if (own < 0) continue;
            const Rgb fill = class_color(layout.instances[std::size_t(own)].shape_id);
            const Rgb edge = darken(fill);
            const int x0 = c * cell_px, y0 = r * cell_px;
            for (int y = 0; y < cell_px; ++y)
                for (int x = 0; x < cell_px; ++x) put(x0 + x, y0 + y, fill);
            // seams between neighboring cores make the tiling visible
            const int in_up = owner_at(r - 1, c), in_down = owner_at(r + 1, c);
            const int in_left = owner_at(r, c - 1), in_right = owner_at(r, c + 1);
            for (int x = 0; x < cell_px; ++x) {
                if (in_up != -2 && in_up != own) put(x0 + x, y0, edge);
                if (in_down != -2 && in_down != own) put(x0 + x, y0 + cell_px - 1, edge);
            }
            for (int y = 0; y < cell_px; ++y) {
                if (in_left != -2 && in_left != own) put(x0, y0 + y, edge);
                if (in_right != -2 && in_right != own) put(x0 + cell_px - 1, y0 + y, edge);
            }
        }
    }

    const int center = owner_at(layout.height / 2, layout.width / 2);
    if (center >= 0) {
        const KernelInstance& inst = layout.instances[std::size_t(center)];
        const Rgb black{0, 0, 0};
        for (const Cell& cell : inst.sensor_cells) {
            const int x0 = cell.col * cell_px, y0 = cell.row * cell_px;
            const bool up = cell.row - 1 >= 0 && !inst.sensor_cells.contains(Cell{cell.row - 1, cell.col});
            const bool down = cell.row + 1 < layout.height && !inst.sensor_cells.contains(Cell{cell.row + 1, cell.col});
            const bool left = cell.col - 1 >= 0 && !inst.sensor_cells.contains(Cell{cell.row, cell.col - 1});
            const bool right = cell.col + 1 < layout.width && !inst.sensor_cells.contains(Cell{cell.row, cell.col + 1});
            for (int x = 0; x < cell_px; ++x) {
                if (up) put(x0 + x, y0, black);
                if (down) put(x0 + x, y0 + cell_px - 1, black);
            }
            for (int y = 0; y < cell_px; ++y) {
                if (left) put(x0, y0 + y, black);
                if (right) put(x0 + cell_px - 1, y0 + y, black);
            }
        }
    }

    char header[64];
    std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", iw, ih);
    std::string out(header);
    out.append(reinterpret_cast<const char*>(px.data()), px.size());
    return out;
}

std::vector<std::size_t> cell_row_indices(const CellSet& cells, int width) {
    std::vector<std::size_t> idx;
    idx.reserve(cells.size());
    for (const Cell& c : cells) idx.push_back(std::size_t(c.row) * std::size_t(width) + std::size_t(c.col));
    return idx;
}

}  // namespace pat

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "pat/io.hpp"
#include "pat/model.hpp"
#include "pat/pattern.hpp"

using namespace pat;
using nlohmann::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string fresh_dir(const std::string& leaf) {
    const std::string dir = (std::filesystem::temp_directory_path() / "pat_cli_tests" / leaf).string();
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

RunResult run_pat(const std::string& args) {
    static int counter = 0;
    static const std::string dir = fresh_dir("io");
    const std::string base = dir + "/cmd" + std::to_string(counter++);
    const std::string cmd = std::string("\"") + PAT_BIN + "\" " + args + " > " + base + ".out 2> " + base + ".err";
    const int status = std::system(cmd.c_str());
    RunResult r;
    if (status >= 0 && WIFEXITED(status)) r.code = WEXITSTATUS(status);
    r.out = read_file(base + ".out");
    r.err = read_file(base + ".err");
    return r;
}

json parse_stdout(const RunResult& r) {
    CAPTURE(r.out);
    CAPTURE(r.err);
    return json::parse(r.out);  // throws if stdout is not one JSON document
}

std::string tiny_config_path(const std::string& dir, const char* sharing = "per_head") {
    ModelConfig cfg;
    cfg.embed_dim = 8;
    cfg.depths = {1, 1, 1, 1};
    cfg.heads = {1, 2, 4, 8};
    if (std::string(sharing) == "none")
        cfg.bias_sharing.reset();
    else
        cfg.bias_sharing = bias_sharing_from(sharing);
    cfg.block_bias = false;
    cfg.num_classes = 4;
    cfg.side = 64;
    const std::string path = dir + "/config.json";
    write_file(path, serialize_model_config(cfg));
    return path;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(run_pat("frobnicate").code == 2);
    CHECK(run_pat("pattern gen --bogus 1").code == 2);
    CHECK(run_pat("pattern gen --height 8").code == 2);  // missing required flags
    CHECK(run_pat("pattern validate").code == 2);
    CHECK(run_pat("oracle qkva --h 4").code == 2);
    CHECK(run_pat("bench --layout x --channels 8 --heads 0").code == 2);  // range check

    const std::string dir = fresh_dir("usage");
    RunResult no_core = run_pat("pattern gen --height 8 --width 8 --kernel square --out " + dir + "/l.json");
    CHECK(no_core.code == 2);
    CHECK(no_core.err.find("--core-side") != std::string::npos);

    RunResult bad_phase =
        run_pat("pattern gen --height 8 --width 8 --phase nope --out " + dir + "/l.json");
    CHECK(bad_phase.code == 2);
    CHECK(bad_phase.err.find("--phase") != std::string::npos);
}

TEST_CASE("io failures exit 3") {
    CHECK(run_pat("pattern validate --in /definitely/missing/layout.json").code == 3);
    CHECK(run_pat("count-params --config /definitely/missing/config.json").code == 3);
    CHECK(run_pat("dump-bias --checkpoint /definitely/missing.pat --layer 0 --head 0 --out /tmp/b.csv").code == 3);
    CHECK(run_pat("pattern gen --height 8 --width 8 --out /definitely/missing/dir/l.json").code == 3);
}

TEST_CASE("invalid layouts exit 1 with the violation report") {
    const std::string dir = fresh_dir("invalid_layout");

    write_file(dir + "/garbage.json", "this is not a layout");
    RunResult garbage = run_pat("pattern validate --in " + dir + "/garbage.json --json");
    CHECK(garbage.code == 1);
    json gdoc = parse_stdout(garbage);
    CHECK(gdoc.at("ok") == false);

    REQUIRE(run_pat("pattern gen --height 8 --width 8 --kernel square --core-side 4 --out " + dir + "/sq.json").code ==
            0);

    json layout = json::parse(read_file(dir + "/sq.json"));
    layout["version"] = 2;
    write_file(dir + "/v2.json", layout.dump());
    RunResult v2 = run_pat("pattern validate --in " + dir + "/v2.json --json");
    CHECK(v2.code == 1);
    CHECK(std::string(parse_stdout(v2).at("error")).find("unsupported version") != std::string::npos);

    json doubled = json::parse(read_file(dir + "/sq.json"));
    doubled["instances"].push_back(doubled["instances"][0]);
    write_file(dir + "/doubled.json", doubled.dump());
    RunResult dv = run_pat("pattern validate --in " + dir + "/doubled.json --json");
    CHECK(dv.code == 1);
    CHECK(std::string(parse_stdout(dv).at("error")).find("double-covered") != std::string::npos);
}

TEST_CASE("gen validate render pipeline") {
    const std::string dir = fresh_dir("pipeline");
    const std::string layout_path = dir + "/p.json";

    RunResult gen = run_pat("pattern gen --height 28 --width 28 --kernel octagon --out " + layout_path + " --json");
    REQUIRE(gen.code == 0);
    json gdoc = parse_stdout(gen);
    CHECK(gdoc.at("out") == layout_path);
    CHECK(gdoc.at("height") == 28);
    CHECK(gdoc.at("width") == 28);
    CHECK(gdoc.at("shape_classes").get<int>() >= 3);

    // the file equals the library's own serialization
    CHECK(read_file(layout_path) == serialize_layout(plan_octagon_pattern(28, 28, {0, 0})));

    RunResult gen2 = run_pat("pattern gen --height 28 --width 28 --kernel octagon --out " + dir + "/p2.json");
    REQUIRE(gen2.code == 0);
    CHECK(read_file(dir + "/p2.json") == read_file(layout_path));

    RunResult val = run_pat("pattern validate --in " + layout_path + " --json");
    REQUIRE(val.code == 0);
    json vdoc = parse_stdout(val);
    CHECK(vdoc.at("ok") == true);
    CHECK(vdoc.at("instances") == gdoc.at("instances"));

    RunResult plain = run_pat("pattern validate --in " + layout_path);
    CHECK(plain.code == 0);
    CHECK(plain.out.find("OK:") != std::string::npos);

    RunResult render = run_pat("pattern render --in " + layout_path + " --cell-px 4 --out " + dir + "/p.ppm --json");
    REQUIRE(render.code == 0);
    json rdoc = parse_stdout(render);
    CHECK(rdoc.at("px_width") == 112);
    CHECK(rdoc.at("px_height") == 112);
    const std::string ppm = read_file(dir + "/p.ppm");
    const std::string header = "P6\n112 112\n255\n";
    REQUIRE(ppm.size() == header.size() + 3u * 112 * 112);
    CHECK(ppm.compare(0, header.size(), header) == 0);

    RunResult phase = run_pat("pattern gen --height 12 --width 18 --phase 1,1 --out " + dir + "/ph.json --json");
    CHECK(phase.code == 0);
    CHECK(parse_stdout(phase).at("phase") == json::array({1, 1}));
    CHECK(run_pat("pattern validate --in " + dir + "/ph.json").code == 0);
}

TEST_CASE("qkva oracle subcommand") {
    RunResult r = run_pat("oracle qkva --h 6 --w 5 --trials 100 --json");
    REQUIRE(r.code == 0);
    json doc = parse_stdout(r);
    CHECK(doc.at("pass") == true);
    CHECK(doc.at("trials") == 100);
    CHECK(doc.at("max_rel_err").get<double>() <= 1e-12);

    CHECK(run_pat("oracle qkva --h 6 --w 5 --trials 5").code == 0);

    // identical seeds give identical reports
    RunResult a = run_pat("oracle qkva --h 4 --w 3 --trials 7 --seed 9 --json");
    RunResult b = run_pat("oracle qkva --h 4 --w 3 --trials 7 --seed 9 --json");
    CHECK(a.out == b.out);
}

TEST_CASE("count-params agrees with the library") {
    const std::string dir = fresh_dir("count");
    ModelConfig cfg;
    cfg.embed_dim = 96;
    cfg.depths = {1, 1, 15, 1};
    cfg.heads = {3, 6, 12, 24};
    cfg.bias_sharing = BiasSharing::per_head;
    write_file(dir + "/ref.json", serialize_model_config(cfg));

    RunResult r = run_pat("count-params --config " + dir + "/ref.json --json");
    REQUIRE(r.code == 0);
    json doc = parse_stdout(r);
    const ParamCount expect = count_params(cfg);
    CHECK(doc.at("total").get<std::uint64_t>() == expect.total);
    CHECK(doc.at("by_group").at("weights").get<std::uint64_t>() == expect.weights);
    CHECK(doc.at("by_group").at("kernel_bias").get<std::uint64_t>() == expect.kernel_bias);
    CHECK(doc.at("by_group").at("block_bias").get<std::uint64_t>() == expect.block_bias);

    write_file(dir + "/bad.json", "{\"embed_dim\": 96}");
    CHECK(run_pat("count-params --config " + dir + "/bad.json --json").code == 1);
}

TEST_CASE("gradcheck subcommand gates on tolerance") {
    const std::string dir = fresh_dir("gradcheck");
    const std::string cfg = tiny_config_path(dir);

    RunResult pass = run_pat("gradcheck --config " + cfg + " --seed 2 --json");
    REQUIRE(pass.code == 0);
    json doc = parse_stdout(pass);
    CHECK(doc.at("pass") == true);
    CHECK(doc.at("max_rel_err").get<double>() <= 1e-4);
    bool saw_bias_group = false;
    for (const json& g : doc.at("groups"))
        if (g.at("group") == "attn.bias") saw_bias_group = !g.at("skipped").get<bool>();
    CHECK(saw_bias_group);

    RunResult fail = run_pat("gradcheck --config " + cfg + " --seed 2 --tol 1e-12 --json");
    CHECK(fail.code == 1);
    CHECK(parse_stdout(fail).at("pass") == false);
}

TEST_CASE("bench reports the winnow ratio") {
    const std::string dir = fresh_dir("bench");
    REQUIRE(run_pat("pattern gen --height 28 --width 28 --out " + dir + "/p.json").code == 0);

    RunResult r = run_pat("bench --layout " + dir + "/p.json --channels 96 --heads 3 --iters 1 --json");
    REQUIRE(r.code == 0);
    json doc = parse_stdout(r);
    CHECK(doc.at("flops").at("winnow").at("p_stage").get<std::uint64_t>() <
          doc.at("flops").at("full").at("p_stage").get<std::uint64_t>());
    CHECK(doc.at("p_stage_ratio").get<double>() < 1.0);
    bool interior_half = false;
    for (const json& cls : doc.at("by_class")) {
        CHECK(cls.at("p_stage_ratio").get<double>() <= 1.0);
        if (cls.at("sensor") == 24 && cls.at("core") == 12) interior_half = cls.at("p_stage_ratio").get<double>() == 0.5;
    }
    CHECK(interior_half);

    RunResult again = run_pat("bench --layout " + dir + "/p.json --channels 96 --heads 3 --iters 1 --json");
    json d1 = parse_stdout(r), d2 = parse_stdout(again);
    d1.erase("wall_ms_per_iter");
    d2.erase("wall_ms_per_iter");
    CHECK(d1 == d2);

    CHECK(run_pat("bench --layout " + dir + "/p.json --channels 96 --heads 3 --winnow off --iters 1 --json").code == 0);
    CHECK(run_pat("bench --layout " + dir + "/p.json --channels 96 --heads 5 --iters 1").code == 1);  // 96 % 5 != 0
}

TEST_CASE("train emits a deterministic json report") {
    const std::string dir = fresh_dir("train");
    const std::string cfg = tiny_config_path(dir);

    RunResult a = run_pat("train --config " + cfg + " --steps 3 --seed 1 --out " + dir + "/a --json");
    REQUIRE(a.code == 0);
    json da = parse_stdout(a);
    REQUIRE(da.at("series").size() == 3);
    CHECK(da.at("batch") == 32);
    CHECK(std::filesystem::exists(dir + "/a/checkpoint.pat"));
    CHECK(std::filesystem::exists(dir + "/a/metrics.csv"));
    CHECK(read_file(dir + "/a/metrics.csv").rfind("step,loss,accuracy,lr\n", 0) == 0);

    RunResult b = run_pat("train --config " + cfg + " --steps 3 --seed 1 --out " + dir + "/b --threads 2 --json");
    REQUIRE(b.code == 0);
    json db = parse_stdout(b);
    for (json* doc : {&da, &db}) {
        doc->erase("checkpoint");
        doc->erase("metrics");
        doc->erase("threads");
    }
    CHECK(da == db);
    CHECK(read_file(dir + "/a/checkpoint.pat") == read_file(dir + "/b/checkpoint.pat"));
    CHECK(read_file(dir + "/a/metrics.csv") == read_file(dir + "/b/metrics.csv"));

    CHECK(run_pat("train --config " + cfg + " --steps 3 --seed 1").code == 2);  // --out is required
}

TEST_CASE("dump-bias writes the dominant kernel matrix") {
    const std::string dir = fresh_dir("dump_bias");
    const std::string cfg = tiny_config_path(dir);
    REQUIRE(run_pat("train --config " + cfg + " --steps 1 --seed 1 --out " + dir + "/run --json").code == 0);
    const std::string ckpt = dir + "/run/checkpoint.pat";

    RunResult r = run_pat("dump-bias --checkpoint " + ckpt + " --layer 0 --head 0 --out " + dir + "/b.csv --json");
    REQUIRE(r.code == 0);
    json doc = parse_stdout(r);
    CHECK(doc.at("rows") == 12);
    CHECK(doc.at("cols") == 24);
    CHECK(doc.at("stage") == 1);

    const std::string csv = read_file(dir + "/b.csv");
    std::size_t lines = 0, commas = 0;
    for (char c : csv) {
        lines += c == '\n';
        commas += c == ',';
    }
    CHECK(lines == 12);
    CHECK(commas == 12 * 23);

    CHECK(run_pat("dump-bias --checkpoint " + ckpt + " --layer 99 --head 0 --out " + dir + "/x.csv").code == 1);
    CHECK(run_pat("dump-bias --checkpoint " + ckpt + " --layer 0 --head 5 --out " + dir + "/x.csv").code == 1);

    std::string truncated = read_file(ckpt);
    truncated.resize(truncated.size() / 2);
    write_file(dir + "/trunc.pat", truncated);
    CHECK(run_pat("dump-bias --checkpoint " + dir + "/trunc.pat --layer 0 --head 0 --out " + dir + "/x.csv").code == 1);

    const std::string none_dir = fresh_dir("dump_bias_none");
    const std::string none_cfg = tiny_config_path(none_dir, "none");
    REQUIRE(run_pat("train --config " + none_cfg + " --steps 1 --seed 1 --out " + none_dir + "/run --json").code == 0);
    RunResult none = run_pat("dump-bias --checkpoint " + none_dir + "/run/checkpoint.pat --layer 0 --head 0 --out " +
                             none_dir + "/b.csv");
    CHECK(none.code == 1);
    CHECK(none.err.find("no kernel bias") != std::string::npos);
}

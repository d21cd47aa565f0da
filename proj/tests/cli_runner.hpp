// Runs the fwrd binary as a subprocess and captures its streams.
#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "fixtures.hpp"

namespace fixture {

struct CliResult {
    int code = -1;
    std::string out, err;
};

inline std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline CliResult run_cli(const std::string& args, const std::string& scratch) {
    const std::string out = scratch + "/.stdout", err = scratch + "/.stderr";
    const std::string cmd = std::string(FWRD_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

/// Writes the micro configuration as an INI file and returns its path.
inline std::string write_micro_config(const std::string& dir, std::uint64_t seed = 1) {
    const std::string path = dir + "/micro.ini";
    fwrd::save_config(path, micro_config(seed));
    return path;
}

/// build-dataset -> train -> infer -> eval into `dir`; returns the first failing step.
inline CliResult run_pipeline(const std::string& dir, std::uint64_t seed) {
    const std::string cfg = write_micro_config(dir, seed);
    const std::string common = " --config " + cfg + " --seed " + std::to_string(seed);
    for (const std::string& step :
         {"build-dataset" + common + " --out " + dir + "/data",
          "train" + common + " --data " + dir + "/data --out " + dir + "/train",
          "infer" + common + " --checkpoint " + dir + "/train/best.ckpt --data " + dir + "/data --out " + dir +
              "/infer",
          "eval" + common + " --scores " + dir + "/infer --data " + dir + "/data --out " + dir + "/eval"}) {
        auto r = run_cli(step, dir);
        if (r.code != 0) return r;
    }
    return {0, {}, {}};
}

}  // namespace fixture

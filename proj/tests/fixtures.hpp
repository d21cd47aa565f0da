// Small configurations that keep end-to-end tests in the seconds range.
#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "fwrd/fwrd.hpp"

namespace fixture {

inline fwrd::RunConfig micro_config(std::uint64_t seed = 1) {
    fwrd::RunConfig c;
    c.seed = seed;
    c.encoder.channels = {8, 16, 32};
    c.encoder.input_size = 32;
    c.encoder.fusion_channels = 32;
    c.dataset.slide.size = 256;
    c.dataset.n_train_slides = 2;
    c.dataset.n_normal_train = 24;
    c.dataset.n_tumor_train = 8;
    c.dataset.n_val_per_class = 16;
    c.dataset.n_test_per_class = 16;
    c.dataset.n_test_normal_slides = 1;
    c.dataset.n_test_tumor_slides = 1;
    c.teacher.per_class = 16;
    c.teacher.epochs = 1;
    c.train.epochs = 2;
    c.train.batch_size = 8;
    c.infer_stride = 16;
    return c;
}

inline std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("fwrd_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace fixture

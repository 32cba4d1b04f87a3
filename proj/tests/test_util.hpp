#pragma once

#include <filesystem>
#include <string>

#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"

namespace testutil {

// Scratch directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = (std::filesystem::temp_directory_path() /
                 ("depthfill_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++)))
                    .string();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }
    std::string sub(const std::string& name) const { return path_ + "/" + name; }

private:
    std::string path_;
};

template <class T>
depthfill::Tensor<T> random_tensor(std::vector<int> shape, depthfill::Rng& rng, double lo = -1.0,
                                   double hi = 1.0) {
    depthfill::Tensor<T> t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

}  // namespace testutil

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "svae/data.hpp"

namespace svae::cli {

/// Train / validation / test split for a --data source: an MNIST directory or
/// the word "toy". Sizes of 0 select the source's defaults.
struct DataSplits {
    Dataset train;
    Dataset valid;
    Dataset test;
};

enum class DataNeeds { all, test_only, train_and_test };

DataSplits load_data(const std::string& source, DataNeeds needs, std::size_t train_size = 0,
                     std::size_t valid_size = 0, std::size_t test_size = 0);

/// Runs one command line (args excludes the program name). Returns the exit code:
/// 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace svae::cli

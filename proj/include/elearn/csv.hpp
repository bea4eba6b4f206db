#pragma once

#include <string>
#include <vector>

#include "elearn/dataset.hpp"

namespace elearn {

// Reads a dataset written as x1..xp,a,y with a header row.  Columns named
// "a" and "y" hold the arm label and outcome; every other column is taken
// as a covariate in file order.  Errors name the file line and column.
Dataset read_dataset_csv(const std::string& path);

// Writes x1..xp,a,y with full-precision decimal floats.
void write_dataset_csv(const Dataset& data, const std::string& path);

// Covariate-only CSV (any header, all columns numeric).
Eigen::MatrixXd read_matrix_csv(const std::string& path,
                                std::vector<std::string>* header = nullptr);

// One arm recommendation per input row, column header "arm".
void write_arms_csv(const Eigen::VectorXi& arms, const std::string& path);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace elearn

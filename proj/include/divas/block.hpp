#pragma once

#include <string>
#include <utility>

#include "divas/core.hpp"

namespace divas {

/// One observed view: a traits x objects matrix plus preprocessing metadata.
/// Rows are traits, columns are objects; all blocks in a study share the
/// object set (the column count).
struct DataBlock {
  Matrix values;  // d_k x n
  std::string name;
  bool trait_centered = false;   // every row sums to zero
  bool object_centered = false;  // every column sums to zero
  bool logit_transformed = false;

  Index traits() const { return values.rows(); }
  Index objects() const { return values.cols(); }

  void validate() const {
    require(values.rows() >= 2 && values.cols() >= 2, "DataBlock: need at least a 2x2 matrix");
    require(values.allFinite(), "DataBlock '" + name + "': entries must be finite");
    if (trait_centered) {
      for (Index i = 0; i < values.rows(); ++i) {
        const double tol = 1e-8 * std::max(1.0, values.row(i).norm());
        require(std::abs(values.row(i).sum()) <= tol,
                "DataBlock '" + name + "': trait_centered set but row sums are nonzero");
      }
    }
    if (object_centered) {
      for (Index j = 0; j < values.cols(); ++j) {
        const double tol = 1e-8 * std::max(1.0, values.col(j).norm());
        require(std::abs(values.col(j).sum()) <= tol,
                "DataBlock '" + name + "': object_centered set but column sums are nonzero");
      }
    }
  }
};

inline DataBlock make_block(Matrix values, std::string name) {
  DataBlock b;
  b.values = std::move(values);
  b.name = std::move(name);
  return b;
}

}  // namespace divas

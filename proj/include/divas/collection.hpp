#pragma once

#include <algorithm>
#include <initializer_list>
#include <map>
#include <string>
#include <vector>

#include "divas/core.hpp"

namespace divas {

/// A nonempty set of 1-based block indices, kept sorted. Collections are
/// visited in search order: larger cardinality first, ties broken
/// lexicographically on the sorted indices.
struct BlockCollection {
  std::vector<int> indices;

  static BlockCollection of(std::initializer_list<int> ids) {
    BlockCollection c;
    c.indices.assign(ids);
    c.normalize();
    return c;
  }
  static BlockCollection of(std::vector<int> ids) {
    BlockCollection c;
    c.indices = std::move(ids);
    c.normalize();
    return c;
  }

  void normalize() {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    require(!indices.empty(), "BlockCollection: must be nonempty");
    require(indices.front() >= 1, "BlockCollection: indices are 1-based");
  }

  std::size_t size() const { return indices.size(); }
  bool contains(int k) const { return std::binary_search(indices.begin(), indices.end(), k); }

  bool is_superset_of(const BlockCollection& o) const {
    return std::includes(indices.begin(), indices.end(), o.indices.begin(), o.indices.end());
  }
  bool is_strict_superset_of(const BlockCollection& o) const {
    return size() > o.size() && is_superset_of(o);
  }

  bool operator==(const BlockCollection& o) const = default;
};

/// Strict weak order implementing the search sequence.
struct SearchOrder {
  bool operator()(const BlockCollection& a, const BlockCollection& b) const {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.indices < b.indices;
  }
};

template <class T>
using CollectionMap = std::map<BlockCollection, T, SearchOrder>;

/// Every nonempty subset of {1, ..., K}, already in search order.
inline std::vector<BlockCollection> all_collections(int total_blocks) {
  require(total_blocks >= 1 && total_blocks <= 20, "all_collections: unsupported block count");
  std::vector<BlockCollection> out;
  for (unsigned mask = 1; mask < (1u << total_blocks); ++mask) {
    BlockCollection c;
    for (int k = 0; k < total_blocks; ++k)
      if (mask & (1u << k)) c.indices.push_back(k + 1);
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(), SearchOrder{});
  return out;
}

inline std::string to_string(const BlockCollection& c) {
  std::string s = "{";
  for (std::size_t i = 0; i < c.indices.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(c.indices[i]);
  }
  s += "}";
  return s;
}

}  // namespace divas

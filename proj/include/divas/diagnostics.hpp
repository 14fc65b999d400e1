#pragma once

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "divas/angles.hpp"
#include "divas/collection.hpp"
#include "divas/core.hpp"
#include "divas/noise.hpp"
#include "divas/reconstruct.hpp"
#include "divas/search.hpp"
#include "divas/svd.hpp"

namespace divas {

/// Effective number of cases of a unit score vector: 1 / sum v_j^4, between
/// 1 (one object carries the direction) and n (all objects contribute
/// equally).
inline double enc(const Vector& v) {
  require(std::abs(v.norm() - 1.0) <= 1e-8, "enc: vector must have unit norm");
  const double s4 = v.array().pow(4).sum();
  return 1.0 / s4;
}

/// Effective contribution of traits of a loadings vector, scale invariant
/// and normalized by the trait count: (sum l^2)^2 / (d * sum l^4) in (0, 1].
inline double ect(const Vector& l) {
  const double s2 = l.squaredNorm();
  require(s2 > 0.0, "ect: zero vector");
  const double s4 = l.array().pow(4).sum();
  return (s2 * s2) / (static_cast<double>(l.size()) * s4);
}

struct TraitAngleEntry {
  int block = 0;
  bool included = false;
  double angle = 90.0;        // to the block's estimated signal trait space
  double upper_bound = 90.0;  // angle + projection-path percentile
  bool degenerate = false;    // candidate orthogonal to the estimate
  bool correlated_excluded = false;  // excluded block, yet bound below theta0
};

struct ObjectAngleEntry {
  int block = 0;
  double angle = 90.0;
  double upper_bound = 90.0;
  bool degenerate = false;
  double ect_value = 0.0;
};

/// Angle diagnostics for one rotated basis direction of one collection:
/// trait angles against every block with signal, object angles for included
/// blocks (computed on the fitted loading columns), concentration summaries.
struct DirectionDiagnostics {
  BlockCollection collection;
  int direction = 1;  // 1-based within the rotated basis
  double enc_value = 0.0;
  std::vector<TraitAngleEntry> trait;
  std::vector<ObjectAngleEntry> object;
};

inline DirectionDiagnostics direction_diagnostics(const BlockCollection& collection, int direction,
                                                  const Vector& score,
                                                  const std::vector<SearchBlock>& blocks,
                                                  const std::vector<Vector>& included_loadings,
                                                  double theta2_quantile = 0.95) {
  DirectionDiagnostics out;
  out.collection = collection;
  out.direction = direction;
  out.enc_value = enc(score);

  for (std::size_t kb = 0; kb < blocks.size(); ++kb) {
    const SearchBlock& sb = blocks[kb];
    const int k = static_cast<int>(kb) + 1;
    if (sb.signal_free()) continue;
    TraitAngleEntry e;
    e.block = k;
    e.included = collection.contains(k);
    const SubspaceBasis basis{sb.v_check, SpaceTag::trait};
    e.angle = vector_subspace_angle(score, basis);
    const Theta2Star t2 = theta2_star_percentile(score, basis, sb.cache.trait_aligns, theta2_quantile);
    e.degenerate = t2.orthogonal_to_estimate;
    e.upper_bound = std::min(90.0, e.angle + t2.degrees);
    if (!e.included && e.upper_bound < sb.bounds.theta0_trait) e.correlated_excluded = true;
    out.trait.push_back(e);
  }

  std::size_t li = 0;
  for (int k : collection.indices) {
    const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
    require(li < included_loadings.size(), "direction_diagnostics: missing loading column");
    const Vector& l = included_loadings[li++];
    ObjectAngleEntry e;
    e.block = k;
    const SubspaceBasis basis{sb.u_check, SpaceTag::object};
    e.angle = vector_subspace_angle(l, basis);
    const Theta2Star t2 = theta2_star_percentile(l, basis, sb.cache.object_aligns, theta2_quantile);
    e.degenerate = t2.orthogonal_to_estimate;
    e.upper_bound = std::min(90.0, e.angle + t2.degrees);
    e.ect_value = ect(l);
    out.object.push_back(e);
  }
  return out;
}

struct BlockRankRow {
  std::string name;
  Index traits = 0;
  Index objects = 0;
  Index estimated_rank = 0;  // pre-filter
  Index filtered_rank = 0;
  Index final_rank = 0;  // numerical rank of all structure touching the block
  Index maximum_rank = 0;
  double sigma_hat = 0.0;
  double phi_hat = 90.0;
  double psi_hat = 90.0;
  double theta0_trait = 0.0;
  double theta0_object = 0.0;
  bool signal_free = true;
};

struct QQBlockData {
  std::string name;
  Vector observed;  // ascending eigenvalues of the imputed residual, unit scale
  Vector theoretical;
  Vector env_min;  // empty when the envelope was not simulated
  Vector env_max;
};

/// Full diagnostics payload of one run. Assembled deterministically; the
/// JSON serialization below is the report file format.
struct DiagnosticsReport {
  int schema_version = 1;
  nlohmann::ordered_json config_echo;
  std::vector<BlockRankRow> blocks;
  CollectionMap<Index> collection_ranks;
  std::vector<DirectionDiagnostics> directions;
  std::vector<QQBlockData> qq;
};

/// Numerical rank (at tolerance) of the concatenation of all score bases
/// whose collection contains the block. Can exceed the filtered rank when
/// non-orthogonal sibling structure was selected.
inline Index final_rank_of_block(int block, const CollectionMap<JointStructure>& structures,
                                 Index objects, double tol = 1e-7) {
  Matrix concat(objects, 0);
  for (const auto& [c, s] : structures)
    if (c.contains(block)) {
      Matrix wider(objects, concat.cols() + s.rank());
      wider << concat, s.scores_basis;
      concat = std::move(wider);
    }
  if (concat.cols() == 0) return 0;
  const Vector s = singular_values(concat);
  Index rank = 0;
  while (rank < s.size() && s(rank) > tol * std::max(1.0, s(0))) ++rank;
  return rank;
}

inline DiagnosticsReport assemble_report(const std::vector<SearchBlock>& blocks,
                                         const std::vector<Index>& estimated_ranks,
                                         const std::vector<double>& sigma_hats,
                                         const CollectionMap<JointStructure>& structures,
                                         const Reconstruction& recon,
                                         std::vector<QQBlockData> qq,
                                         nlohmann::ordered_json config_echo,
                                         double theta2_quantile = 0.95) {
  DiagnosticsReport report;
  report.config_echo = std::move(config_echo);
  report.qq = std::move(qq);

  for (std::size_t kb = 0; kb < blocks.size(); ++kb) {
    const SearchBlock& sb = blocks[kb];
    BlockRankRow row;
    row.name = sb.name;
    row.traits = sb.traits;
    row.objects = sb.objects;
    row.estimated_rank = estimated_ranks[kb];
    row.filtered_rank = sb.bounds.filtered_rank;
    row.final_rank = final_rank_of_block(static_cast<int>(kb) + 1, structures, sb.objects);
    row.maximum_rank = std::min(sb.traits, sb.objects);
    row.sigma_hat = sigma_hats[kb];
    row.signal_free = sb.signal_free();
    if (!row.signal_free) {
      row.phi_hat = sb.bounds.phi_hat;
      row.psi_hat = sb.bounds.psi_hat;
      row.theta0_trait = sb.bounds.theta0_trait;
      row.theta0_object = sb.bounds.theta0_object;
    }
    report.blocks.push_back(std::move(row));
  }

  for (const auto& [c, s] : structures) {
    report.collection_ranks[c] = s.rank();
    const Matrix& rotated = recon.rotated_scores.at(c);
    for (Index j = 0; j < rotated.cols(); ++j) {
      std::vector<Vector> loadings;
      for (int k : c.indices)
        loadings.push_back(recon.rotated_loadings(c, k).col(j));
      report.directions.push_back(direction_diagnostics(c, static_cast<int>(j) + 1, rotated.col(j),
                                                        blocks, loadings, theta2_quantile));
    }
  }
  return report;
}

namespace detail {

// Angles and summary statistics carry four decimals in the report; rounding
// happens on the value so the serialization is reproducible byte for byte.
inline double round4(double x) { return std::round(x * 1e4) / 1e4; }

inline nlohmann::ordered_json vector_to_json(const Vector& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const DiagnosticsReport& report) {
  using json = nlohmann::ordered_json;
  json root;
  root["schema_version"] = report.schema_version;
  root["config_echo"] = report.config_echo;

  root["blocks"] = json::array();
  for (const auto& b : report.blocks) {
    json jb;
    jb["name"] = b.name;
    jb["traits"] = b.traits;
    jb["objects"] = b.objects;
    jb["estimated_rank"] = b.estimated_rank;
    jb["filtered_rank"] = b.filtered_rank;
    jb["final_rank"] = b.final_rank;
    jb["maximum_rank"] = b.maximum_rank;
    jb["sigma_hat"] = b.sigma_hat;
    jb["signal_free"] = b.signal_free;
    jb["phi_hat"] = detail::round4(b.phi_hat);
    jb["psi_hat"] = detail::round4(b.psi_hat);
    jb["theta0_trait"] = detail::round4(b.theta0_trait);
    jb["theta0_object"] = detail::round4(b.theta0_object);
    root["blocks"].push_back(std::move(jb));
  }

  root["collections"] = json::array();
  for (const auto& [c, r] : report.collection_ranks) {
    json jc;
    jc["indices"] = c.indices;
    jc["rank"] = r;
    root["collections"].push_back(std::move(jc));
  }

  root["directions"] = json::array();
  for (const auto& d : report.directions) {
    json jd;
    jd["collection"] = d.collection.indices;
    jd["direction"] = d.direction;
    jd["enc"] = detail::round4(d.enc_value);
    jd["trait"] = json::array();
    for (const auto& t : d.trait) {
      json jt;
      jt["block"] = t.block;
      jt["included"] = t.included;
      jt["angle"] = detail::round4(t.angle);
      jt["upper_bound"] = detail::round4(t.upper_bound);
      jt["degenerate"] = t.degenerate;
      jt["correlated_excluded"] = t.correlated_excluded;
      jd["trait"].push_back(std::move(jt));
    }
    jd["object"] = json::array();
    for (const auto& o : d.object) {
      json jo;
      jo["block"] = o.block;
      jo["angle"] = detail::round4(o.angle);
      jo["upper_bound"] = detail::round4(o.upper_bound);
      jo["degenerate"] = o.degenerate;
      jo["ect"] = detail::round4(o.ect_value);
      jd["object"].push_back(std::move(jo));
    }
    root["directions"].push_back(std::move(jd));
  }

  root["qq"] = json::array();
  for (const auto& q : report.qq) {
    json jq;
    jq["name"] = q.name;
    jq["observed"] = detail::vector_to_json(q.observed);
    jq["theoretical"] = detail::vector_to_json(q.theoretical);
    jq["env_min"] = detail::vector_to_json(q.env_min);
    jq["env_max"] = detail::vector_to_json(q.env_max);
    root["qq"].push_back(std::move(jq));
  }
  return root;
}

namespace detail {

inline Vector vector_from_json(const nlohmann::ordered_json& arr) {
  Vector v(arr.size());
  Index at = 0;
  for (const auto& x : arr) v(at++) = x.get<double>();
  return v;
}

}  // namespace detail

/// Parses a serialized report back; used to re-render plots from a file.
inline DiagnosticsReport report_from_json(const nlohmann::ordered_json& root) {
  DiagnosticsReport report;
  report.schema_version = root.at("schema_version").get<int>();
  report.config_echo = root.at("config_echo");
  for (const auto& jb : root.at("blocks")) {
    BlockRankRow b;
    b.name = jb.at("name").get<std::string>();
    b.traits = jb.at("traits").get<Index>();
    b.objects = jb.at("objects").get<Index>();
    b.estimated_rank = jb.at("estimated_rank").get<Index>();
    b.filtered_rank = jb.at("filtered_rank").get<Index>();
    b.final_rank = jb.at("final_rank").get<Index>();
    b.maximum_rank = jb.at("maximum_rank").get<Index>();
    b.sigma_hat = jb.at("sigma_hat").get<double>();
    b.signal_free = jb.at("signal_free").get<bool>();
    b.phi_hat = jb.at("phi_hat").get<double>();
    b.psi_hat = jb.at("psi_hat").get<double>();
    b.theta0_trait = jb.at("theta0_trait").get<double>();
    b.theta0_object = jb.at("theta0_object").get<double>();
    report.blocks.push_back(std::move(b));
  }
  for (const auto& jc : root.at("collections"))
    report.collection_ranks[BlockCollection::of(jc.at("indices").get<std::vector<int>>())] =
        jc.at("rank").get<Index>();
  for (const auto& jd : root.at("directions")) {
    DirectionDiagnostics d;
    d.collection = BlockCollection::of(jd.at("collection").get<std::vector<int>>());
    d.direction = jd.at("direction").get<int>();
    d.enc_value = jd.at("enc").get<double>();
    for (const auto& jt : jd.at("trait")) {
      TraitAngleEntry t;
      t.block = jt.at("block").get<int>();
      t.included = jt.at("included").get<bool>();
      t.angle = jt.at("angle").get<double>();
      t.upper_bound = jt.at("upper_bound").get<double>();
      t.degenerate = jt.at("degenerate").get<bool>();
      t.correlated_excluded = jt.at("correlated_excluded").get<bool>();
      d.trait.push_back(t);
    }
    for (const auto& jo : jd.at("object")) {
      ObjectAngleEntry o;
      o.block = jo.at("block").get<int>();
      o.angle = jo.at("angle").get<double>();
      o.upper_bound = jo.at("upper_bound").get<double>();
      o.degenerate = jo.at("degenerate").get<bool>();
      o.ect_value = jo.at("ect").get<double>();
      d.object.push_back(o);
    }
    report.directions.push_back(std::move(d));
  }
  for (const auto& jq : root.at("qq")) {
    QQBlockData q;
    q.name = jq.at("name").get<std::string>();
    q.observed = detail::vector_from_json(jq.at("observed"));
    q.theoretical = detail::vector_from_json(jq.at("theoretical"));
    q.env_min = detail::vector_from_json(jq.at("env_min"));
    q.env_max = detail::vector_from_json(jq.at("env_max"));
    report.qq.push_back(std::move(q));
  }
  return report;
}

}  // namespace divas

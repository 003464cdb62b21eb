#pragma once

// Task corpus generation and the line-delimited corpus file.
//
// Each cluster draws one prototype sequence uniformly over the non-EOS
// tokens; a task in that cluster draws its length from the cluster's range
// and takes the prototype prefix of that length as its target. Longer
// targets are harder for the same per-position confidence.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcrl/errors.hpp"
#include "vcrl/rollout_env.hpp"

namespace vcrl {

struct ClusterSpec {
  int min_len = 1;
  int max_len = 1;
  int count = 0;

  friend bool operator==(const ClusterSpec&, const ClusterSpec&) = default;
};

using Corpus = std::vector<SyntheticTask>;

// Parses "2:100,5:100,9:100" or ranged lengths "2-4:50".
inline std::vector<ClusterSpec> parse_cluster_specs(const std::string& text) {
  std::vector<ClusterSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("cluster spec '" + item + "' is not LEN:COUNT");
    }
    ClusterSpec spec;
    try {
      const std::string lens = item.substr(0, colon);
      const auto dash = lens.find('-');
      std::size_t used = 0;
      if (dash == std::string::npos) {
        spec.min_len = spec.max_len = std::stoi(lens, &used);
        if (used != lens.size()) throw std::invalid_argument(lens);
      } else {
        spec.min_len = std::stoi(lens.substr(0, dash));
        spec.max_len = std::stoi(lens.substr(dash + 1));
      }
      const std::string count = item.substr(colon + 1);
      spec.count = std::stoi(count, &used);
      if (used != count.size()) throw std::invalid_argument(count);
    } catch (const std::logic_error&) {
      throw ConfigError("cluster spec '" + item + "' is not LEN:COUNT");
    }
    out.push_back(spec);
  }
  if (out.empty()) throw ConfigError("empty cluster spec");
  return out;
}

inline Corpus gen_corpus(std::uint64_t seed, const std::vector<ClusterSpec>& clusters,
                         WorldShape shape) {
  shape.validate();
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& s = clusters[c];
    if (s.min_len < 1 || s.max_len > shape.max_len || s.min_len > s.max_len) {
      throw ConfigError("cluster " + std::to_string(c) + " length range [" +
                        std::to_string(s.min_len) + ", " + std::to_string(s.max_len) +
                        "] outside [1, " + std::to_string(shape.max_len) + "]");
    }
    if (s.count < 0) throw ConfigError("negative cluster count");
  }

  Corpus corpus;
  std::uint32_t next_id = 0;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& s = clusters[c];
    auto rng = make_stream({seed, static_cast<std::uint64_t>(c)});
    std::vector<int> prototype(static_cast<std::size_t>(s.max_len));
    for (int& tok : prototype) {
      tok = static_cast<int>(rng() % static_cast<std::uint64_t>(shape.vocab));
    }
    const auto span = static_cast<std::uint64_t>(s.max_len - s.min_len + 1);
    for (int i = 0; i < s.count; ++i) {
      const int len = s.min_len + static_cast<int>(rng() % span);
      corpus.push_back(SyntheticTask{
          QueryId{next_id++}, static_cast<int>(c),
          std::vector<int>(prototype.begin(), prototype.begin() + len)});
    }
  }
  return corpus;
}

inline int cluster_count(const Corpus& corpus) {
  int c = 0;
  for (const auto& t : corpus) c = std::max(c, t.cluster + 1);
  return c;
}

inline void validate_corpus(const Corpus& corpus, WorldShape shape) {
  if (corpus.empty()) throw ConfigError("corpus is empty");
  std::map<std::uint32_t, int> seen;
  for (const auto& t : corpus) {
    if (t.cluster < 0) throw ConfigError("negative cluster id");
    if (t.target.empty() || static_cast<int>(t.target.size()) > shape.max_len) {
      throw ConfigError("task " + to_string(t.id) + " target length " +
                        std::to_string(t.target.size()) + " outside [1, " +
                        std::to_string(shape.max_len) + "]");
    }
    for (int tok : t.target) {
      if (tok < 0 || tok >= shape.vocab) {
        throw ConfigError("task " + to_string(t.id) + " token " +
                          std::to_string(tok) + " outside vocab " +
                          std::to_string(shape.vocab));
      }
    }
    if (++seen[to_index(t.id)] > 1) {
      throw ConfigError("duplicate query id " + to_string(t.id));
    }
  }
}

inline std::string corpus_record(const SyntheticTask& t) {
  nlohmann::ordered_json j;
  j["query_id"] = to_index(t.id);
  j["cluster_id"] = t.cluster;
  j["target"] = t.target;
  return j.dump();
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open corpus for writing");
  for (const auto& t : corpus) out << corpus_record(t) << '\n';
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

inline Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open corpus");
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SyntheticTask t;
      t.id = QueryId{j.at("query_id").get<std::uint32_t>()};
      t.cluster = j.at("cluster_id").get<int>();
      t.target = j.at("target").get<std::vector<int>>();
      corpus.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace vcrl

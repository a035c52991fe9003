#pragma once

// JSON trace format for model pairs.  A trace file pins both conditional
// tables explicitly:
//
//   {
//     "vocab_size": 2,
//     "horizon": 1,
//     "zero_permitting": false,
//     "nodes": {
//       "":  {"p": [0.6, 0.4], "q": [0.3, 0.7]},
//       "0": {"p": [0.2, 0.8], "q": [0.6, 0.4]},
//       "1": {"p": [0.9, 0.1], "q": [0.5, 0.5]}
//     }
//   }
//
// Context keys are comma-separated token ids ("" is the empty context); every
// context up to the horizon must be present.  Rows whose sum drifts from 1 by
// at most kLoadRenormTol are renormalized on load; anything worse is rejected
// with the offending context named.

#include <fstream>
#include <string>

#include "json.hpp"
#include "specverify/errors.hpp"
#include "specverify/seqspace.hpp"

namespace specverify::trace_io {

inline constexpr double kLoadRenormTol = 1e-6;

inline seqspace::ModelPair trace_from_json(const nlohmann::json& root) {
  using seqspace::TokenSeq;
  if (!root.is_object()) throw InputError("trace: top level must be a JSON object");
  for (const char* key : {"vocab_size", "horizon", "nodes"})
    if (!root.contains(key)) throw InputError(std::string("trace: missing field \"") + key + "\"");

  seqspace::ModelPair pair;
  if (!root["vocab_size"].is_number_integer() || !root["horizon"].is_number_integer())
    throw InputError("trace: vocab_size and horizon must be integers");
  pair.vocab = root["vocab_size"].get<int>();
  pair.horizon = root["horizon"].get<int>();
  if (pair.vocab < 2) throw InputError("trace: vocab_size must be >= 2");
  if (pair.horizon < 1) throw InputError("trace: horizon must be >= 1");
  pair.zero_permitting = root.value("zero_permitting", false);

  seqspace::TreeShape tree = pair.ctx_tree();
  std::size_t cells = static_cast<std::size_t>(tree.total_nodes()) * pair.vocab;
  pair.p.assign(cells, -1.0);  // sentinel marks contexts not yet seen
  pair.q.assign(cells, -1.0);

  const nlohmann::json& nodes = root["nodes"];
  if (!nodes.is_object()) throw InputError("trace: \"nodes\" must be an object");
  for (const auto& [key, entry] : nodes.items()) {
    TokenSeq ctx = seqspace::parse_context_key(key, pair.vocab);
    if (static_cast<int>(ctx.size()) > pair.horizon)
      throw InputError("trace: context \"" + key + "\" deeper than horizon");
    std::int64_t node = tree.id_of_seq(ctx);
    if (!entry.is_object() || !entry.contains("p") || !entry.contains("q"))
      throw InputError("trace: context \"" + key + "\" needs \"p\" and \"q\" arrays");
    auto read_row = [&](const nlohmann::json& arr, double* dst) {
      if (!arr.is_array() || static_cast<int>(arr.size()) != pair.vocab)
        throw InputError("trace: context \"" + key + "\": row length != vocab_size");
      double sum = 0.0;
      for (int x = 0; x < pair.vocab; ++x) {
        if (!arr[x].is_number())
          throw InputError("trace: context \"" + key + "\": non-numeric probability");
        double v = arr[x].get<double>();
        if (!(v >= 0.0))
          throw InputError("trace: context \"" + key + "\": negative probability");
        dst[x] = v;
        sum += v;
      }
      if (std::abs(sum - 1.0) > kLoadRenormTol)
        throw InputError("trace: context \"" + key + "\": probabilities sum to " +
                         std::to_string(sum));
      for (int x = 0; x < pair.vocab; ++x) dst[x] /= sum;
    };
    read_row(entry["p"], pair.p.data() + static_cast<std::size_t>(node) * pair.vocab);
    read_row(entry["q"], pair.q.data() + static_cast<std::size_t>(node) * pair.vocab);
  }

  for (std::int64_t node = 0; node < tree.total_nodes(); ++node)
    if (pair.p[static_cast<std::size_t>(node) * pair.vocab] < 0.0)
      throw InputError("trace: missing context \"" +
                       seqspace::context_key(tree.seq_at(tree.level_of(node), tree.rank_of(node))) +
                       "\"");

  seqspace::validate_pair(pair);
  return pair;
}

inline nlohmann::ordered_json trace_to_json(const seqspace::ModelPair& pair) {
  seqspace::TreeShape tree = pair.ctx_tree();
  nlohmann::ordered_json nodes = nlohmann::ordered_json::object();
  for (int lv = 0; lv <= pair.horizon; ++lv) {
    for (std::int64_t rk = 0; rk < tree.level_count(lv); ++rk) {
      std::int64_t node = tree.id(lv, rk);
      nodes[seqspace::context_key(tree.seq_at(lv, rk))] = {
          {"p", pair.p_vec(node)},
          {"q", pair.q_vec(node)},
      };
    }
  }
  return nlohmann::ordered_json{
      {"vocab_size", pair.vocab},
      {"horizon", pair.horizon},
      {"zero_permitting", pair.zero_permitting},
      {"nodes", std::move(nodes)},
  };
}

inline seqspace::ModelPair parse_trace(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("trace: JSON parse failed: ") + e.what());
  }
  return trace_from_json(root);
}

inline seqspace::ModelPair load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open trace file \"" + path + "\"");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_trace(text);
}

inline std::string trace_to_string(const seqspace::ModelPair& pair) {
  return trace_to_json(pair).dump(2) + "\n";
}

inline void save_trace(const seqspace::ModelPair& pair, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open \"" + path + "\" for writing");
  out << trace_to_string(pair);
  if (!out) throw InputError("write to \"" + path + "\" failed");
}

}  // namespace specverify::trace_io

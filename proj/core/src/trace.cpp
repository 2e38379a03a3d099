#include "moestress/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "moestress/errors.hpp"

namespace moestress {

RoutingTrace::RoutingTrace(int layers, int experts_per_layer, int top_k)
    : layers_(layers), experts_per_layer_(experts_per_layer), top_k_(top_k) {
  // The degenerate all-zero shape is allowed so an empty file can round-trip.
  const bool empty = layers == 0 && experts_per_layer == 0 && top_k == 0;
  if (!empty) {
    if (layers <= 0) throw ConfigError("trace needs a positive layer count");
    if (experts_per_layer <= 0) {
      throw ConfigError("trace needs a positive expert count");
    }
    if (top_k <= 0 || top_k > experts_per_layer) {
      throw ConfigError("trace top_k must be in [1, experts_per_layer]");
    }
  }
  selections_.resize(layers_);
}

void RoutingTrace::append_token(const std::vector<TokenSelection>& per_layer) {
  if (static_cast<int>(per_layer.size()) != layers_) {
    throw Error("token supplies " + std::to_string(per_layer.size()) +
                " layer selections, trace has " + std::to_string(layers_));
  }
  for (int l = 0; l < layers_; ++l) {
    const TokenSelection& sel = per_layer[l];
    if (static_cast<int>(sel.experts.size()) != top_k_ ||
        sel.weights.size() != sel.experts.size()) {
      throw Error("layer " + std::to_string(l) + " selection is not top-" +
                  std::to_string(top_k_));
    }
    std::unordered_set<int> seen;
    double sum = 0.0;
    for (std::size_t i = 0; i < sel.experts.size(); ++i) {
      const int e = sel.experts[i];
      if (e < 0 || e >= experts_per_layer_) {
        throw Error("layer " + std::to_string(l) + " routes to invalid expert " +
                    std::to_string(e));
      }
      if (!seen.insert(e).second) {
        throw Error("layer " + std::to_string(l) + " repeats expert " +
                    std::to_string(e));
      }
      const double w = sel.weights[i];
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error("layer " + std::to_string(l) + " has invalid weight");
      }
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw Error("layer " + std::to_string(l) + " weights sum to " +
                  std::to_string(sum) + ", expected 1");
    }
  }
  for (int l = 0; l < layers_; ++l) selections_[l].push_back(per_layer[l]);
  ++num_tokens_;
}

ExpertLoadProfile::ExpertLoadProfile(std::vector<std::vector<double>> rho,
                                     int top_k)
    : rho_(std::move(rho)), top_k_(top_k) {
  if (rho_.empty()) throw Error("load profile needs at least one layer");
  if (top_k_ <= 0) throw Error("load profile needs positive top_k");
  const std::size_t experts = rho_.front().size();
  for (const auto& layer : rho_) {
    if (layer.size() != experts || experts == 0) {
      throw Error("load profile layers have mismatched expert counts");
    }
  }
}

ExpertLoadProfile load_profile_from_trace(const RoutingTrace& trace) {
  if (trace.num_tokens() == 0) {
    throw Error("load profile is undefined for an empty trace");
  }
  std::vector<std::vector<double>> rho(
      trace.layers(), std::vector<double>(trace.experts_per_layer(), 0.0));
  for (int l = 0; l < trace.layers(); ++l) {
    for (int t = 0; t < trace.num_tokens(); ++t) {
      for (int e : trace.selection(l, t).experts) rho[l][e] += 1.0;
    }
    for (double& x : rho[l]) x /= trace.num_tokens();
  }
  return ExpertLoadProfile(std::move(rho), trace.top_k());
}

namespace {

nlohmann::json parse_line(const std::string& line, std::size_t line_no) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
  }
}

}  // namespace

RoutingTrace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace: " + path.string());

  std::string line;
  std::size_t line_no = 0;

  // Skip leading blank lines; a file with no records at all is the empty
  // trace.
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) {
      break;
    }
  }
  if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
    return RoutingTrace(0, 0, 0);
  }

  const nlohmann::json header = parse_line(line, line_no);
  int layers = 0, experts = 0, top_k = 0, num_tokens = 0;
  try {
    layers = header.at("layers").get<int>();
    experts = header.at("experts").get<int>();
    top_k = header.at("top_k").get<int>();
    num_tokens = header.at("num_tokens").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad trace header: ") + e.what(), line_no);
  }
  if (num_tokens < 0) throw ParseError("negative num_tokens", line_no);
  if (num_tokens == 0) return RoutingTrace(layers, experts, top_k);

  // Records may arrive in any order; collect then append token-by-token so
  // append_token's validation applies uniformly.
  std::vector<std::vector<TokenSelection>> per_token(
      num_tokens, std::vector<TokenSelection>(layers));
  std::vector<std::vector<bool>> seen(num_tokens,
                                      std::vector<bool>(layers, false));
  std::size_t records = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const nlohmann::json rec = parse_line(line, line_no);
    int token = 0, layer = 0;
    TokenSelection sel;
    try {
      token = rec.at("token").get<int>();
      layer = rec.at("layer").get<int>();
      sel.experts = rec.at("experts").get<std::vector<int>>();
      sel.weights = rec.at("weights").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad trace record: ") + e.what(), line_no);
    }
    if (token < 0 || token >= num_tokens) {
      throw ParseError("token index out of range", line_no);
    }
    if (layer < 0 || layer >= layers) {
      throw ParseError("layer index out of range", line_no);
    }
    if (seen[token][layer]) {
      throw ParseError("duplicate (token, layer) record", line_no);
    }
    seen[token][layer] = true;
    per_token[token][layer] = std::move(sel);
    ++records;
  }
  if (records != static_cast<std::size_t>(num_tokens) * layers) {
    throw ParseError("trace has " + std::to_string(records) + " records, " +
                     "header promises " +
                     std::to_string(static_cast<std::size_t>(num_tokens) *
                                    layers));
  }

  RoutingTrace trace(layers, experts, top_k);
  for (int t = 0; t < num_tokens; ++t) trace.append_token(per_token[t]);
  return trace;
}

void write_trace(const RoutingTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace: " + path.string());
  if (trace.num_tokens() == 0 && trace.layers() == 0) return;

  nlohmann::json header;
  header["layers"] = trace.layers();
  header["experts"] = trace.experts_per_layer();
  header["top_k"] = trace.top_k();
  header["num_tokens"] = trace.num_tokens();
  out << header.dump() << '\n';

  for (int t = 0; t < trace.num_tokens(); ++t) {
    for (int l = 0; l < trace.layers(); ++l) {
      const TokenSelection& sel = trace.selection(l, t);
      nlohmann::json rec;
      rec["token"] = t;
      rec["layer"] = l;
      rec["experts"] = sel.experts;
      rec["weights"] = sel.weights;
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw Error("failed writing trace: " + path.string());
}

}  // namespace moestress

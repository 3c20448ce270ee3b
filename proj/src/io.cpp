#include "signnet/io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

#include "signnet/errors.hpp"

namespace signnet {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const fs::path& file, std::size_t line, const std::string& reason) {
  std::string where = file.filename().string();
  if (line > 0) where += ":" + std::to_string(line);
  throw ValidationError(where + ": " + reason);
}

// Splits on spaces and tabs.
std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(path, 0, "cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  // Trailing blank lines are not records.
  while (!lines.empty() && tokens(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_matrix(const Eigen::MatrixXd& m) {
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 12);
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out.push_back(' ');
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), m(i, j));
      out.append(buf, ptr);
    }
    out.push_back('\n');
  }
  return out;
}

void write_matrix(const fs::path& path, const Eigen::MatrixXd& m) { write_text(path, format_matrix(m)); }

Eigen::MatrixXd read_matrix(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<double> values;
  Eigen::Index cols = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = tokens(lines[i]);
    if (cols < 0) cols = static_cast<Eigen::Index>(toks.size());
    if (static_cast<Eigen::Index>(toks.size()) != cols) {
      fail(path, i + 1, "expected " + std::to_string(cols) + " values, found " +
                            std::to_string(toks.size()));
    }
    for (auto t : toks) {
      double v = 0;
      if (!parse_number(t, v)) fail(path, i + 1, "not a number: '" + std::string(t) + "'");
      values.push_back(v);
    }
  }
  const auto rows = static_cast<Eigen::Index>(lines.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, cols);
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[i] = kDigits[v & 0xF];
  return out;
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a(read_text(path))); }

// ---------------------------------------------------------------------------

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("dataset directory not found: " + dir.string());
  const fs::path meta_path = dir / "meta.json";
  ordered_json meta;
  try {
    meta = ordered_json::parse(read_text(meta_path));
  } catch (const nlohmann::json::exception& e) {
    fail(meta_path, 0, e.what());
  }
  long long n = 0, d = 0, u = 0;
  std::string name;
  try {
    n = meta.at("n").get<long long>();
    d = meta.at("d").get<long long>();
    u = meta.at("u").get<long long>();
    name = meta.value("name", dir.filename().string());
  } catch (const nlohmann::json::exception& e) {
    fail(meta_path, 0, e.what());
  }
  if (n <= 0 || d <= 0 || u <= 0) fail(meta_path, 0, "n, d and u must be positive");

  const fs::path labels_path = dir / "labels.txt";
  const auto label_lines = read_lines(labels_path);
  if (static_cast<long long>(label_lines.size()) != n) {
    fail(labels_path, label_lines.size(), "meta.json declares n = " + std::to_string(n) +
                                              " but the file has " +
                                              std::to_string(label_lines.size()) + " lines");
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const auto toks = tokens(label_lines[i]);
    if (toks.size() != 1 || !parse_number(toks[0], labels[i])) {
      fail(labels_path, i + 1, "expected one integer label");
    }
    if (labels[i] < 0 || labels[i] >= u) {
      fail(labels_path, i + 1, "label " + std::to_string(labels[i]) + " outside [0, " +
                                   std::to_string(u) + ")");
    }
  }

  const fs::path features_path = dir / "features.txt";
  const auto feature_lines = read_lines(features_path);
  if (static_cast<long long>(feature_lines.size()) != n) {
    fail(features_path, feature_lines.size(),
         "meta.json declares n = " + std::to_string(n) + " but the file has " +
             std::to_string(feature_lines.size()) + " lines");
  }
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < feature_lines.size(); ++i) {
    const auto toks = tokens(feature_lines[i]);
    if (static_cast<long long>(toks.size()) != d) {
      fail(features_path, i + 1, "expected d = " + std::to_string(d) + " values, found " +
                                     std::to_string(toks.size()));
    }
    for (std::size_t j = 0; j < toks.size(); ++j) {
      double v = 0;
      if (!parse_number(toks[j], v)) {
        fail(features_path, i + 1, "not a number: '" + std::string(toks[j]) + "'");
      }
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
    }
  }

  const fs::path edges_path = dir / "edges.txt";
  const auto edge_lines = read_lines(edges_path);
  std::vector<Edge> edges;
  edges.reserve(edge_lines.size());
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    const auto toks = tokens(edge_lines[i]);
    if (toks.empty()) continue;
    NodeId a = 0, b = 0;
    if (toks.size() != 2 || !parse_number(toks[0], a) || !parse_number(toks[1], b)) {
      fail(edges_path, i + 1, "expected two integer node ids");
    }
    if (a < 0 || a >= n || b < 0 || b >= n) {
      fail(edges_path, i + 1, "node id outside [0, " + std::to_string(n) + ")");
    }
    edges.emplace_back(a, b);
  }

  return Dataset{name, Graph(static_cast<NodeId>(n), edges, std::move(x), std::move(labels),
                             static_cast<int>(u))};
}

void save_dataset(const fs::path& dir, const Dataset& dataset) {
  const Graph& g = dataset.graph;
  fs::create_directories(dir);
  std::string edges;
  for (const auto& [a, b] : g.edges()) edges += std::to_string(a) + '\t' + std::to_string(b) + '\n';
  write_text(dir / "edges.txt", edges);
  write_matrix(dir / "features.txt", g.features());
  std::string labels;
  for (int y : g.labels()) labels += std::to_string(y) + '\n';
  write_text(dir / "labels.txt", labels);
  ordered_json meta = {{"n", g.num_nodes()},
                       {"d", g.feature_dim()},
                       {"u", g.num_classes()},
                       {"name", dataset.name}};
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

void write_subgraphs(const fs::path& path, const SubgraphSet& set) {
  std::string out;
  for (const auto& seqs : set) {
    for (const auto& s : seqs) {
      out += std::to_string(s.target);
      out.push_back('\t');
      for (std::size_t i = 0; i < s.nodes.size(); ++i) {
        if (i > 0) out.push_back(' ');
        out += std::to_string(s.nodes[i]);
      }
      out.push_back('\n');
    }
  }
  write_text(path, out);
}

SubgraphSet read_subgraphs(const fs::path& path, NodeId num_nodes) {
  const auto lines = read_lines(path);
  SubgraphSet set(num_nodes);
  NodeId previous = -1;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) fail(path, i + 1, "missing tab after target id");
    SubgraphSequence seq;
    const auto target_toks = tokens(std::string_view(lines[i]).substr(0, tab));
    if (target_toks.size() != 1 || !parse_number(target_toks[0], seq.target)) {
      fail(path, i + 1, "bad target id");
    }
    if (seq.target < 0 || seq.target >= num_nodes) fail(path, i + 1, "target id out of range");
    if (seq.target < previous) fail(path, i + 1, "sequences are not grouped by node");
    previous = seq.target;
    for (auto t : tokens(std::string_view(lines[i]).substr(tab + 1))) {
      NodeId id = 0;
      if (!parse_number(t, id) || id < 0 || id >= num_nodes) {
        fail(path, i + 1, "bad node id '" + std::string(t) + "'");
      }
      seq.nodes.push_back(id);
    }
    if (seq.nodes.empty() || seq.nodes[0] != seq.target) {
      fail(path, i + 1, "sequence must start with its target");
    }
    set[seq.target].push_back(std::move(seq));
  }
  for (NodeId v = 0; v < num_nodes; ++v) {
    if (set[v].empty()) fail(path, 0, "no sequences for node " + std::to_string(v));
  }
  return set;
}

void write_splits(const fs::path& path, const SplitMasks& masks) {
  std::string out;
  for (Split s : masks.assignment) {
    out += to_string(s);
    out.push_back('\n');
  }
  write_text(path, out);
}

SplitMasks read_splits(const fs::path& path, NodeId num_nodes) {
  const auto lines = read_lines(path);
  if (static_cast<NodeId>(lines.size()) != num_nodes) {
    fail(path, lines.size(), "expected " + std::to_string(num_nodes) + " lines");
  }
  SplitMasks masks;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = tokens(lines[i]);
    if (toks.size() == 1 && toks[0] == "train") {
      masks.assignment.push_back(Split::kTrain);
    } else if (toks.size() == 1 && toks[0] == "val") {
      masks.assignment.push_back(Split::kVal);
    } else if (toks.size() == 1 && toks[0] == "test") {
      masks.assignment.push_back(Split::kTest);
    } else {
      fail(path, i + 1, "expected train, val or test");
    }
  }
  return masks;
}

// ---------------------------------------------------------------------------

void RunConfig::validate() const {
  if (!(tau >= -1.0 && tau <= 1.0)) throw ValidationError("tau must lie in [-1, 1]");
  if (!(sampler.c > 0.0 && sampler.c <= 1.0)) throw ValidationError("sampler.c must lie in (0, 1]");
  if (sampler.k1 < 0) throw ValidationError("sampler.k1 must be nonnegative");
  if (sampler.q < 1) throw ValidationError("sampler.q must be at least 1");
  if (split.train < 0 || split.val < 0 || split.test < 0 ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must be nonnegative and sum to 1");
  }
  model_config().validate();
  train_config().validate();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.k1 = sampler.k1;
  m.q = sampler.q;
  return m;
}

TrainConfig RunConfig::train_config() const { return TrainConfig{gcn, transformer, seed}; }

namespace {

class Reader {
 public:
  Reader(const ordered_json& j, std::string path, const std::string& source)
      : j_(j), path_(std::move(path)), source_(source) {
    if (!j_.is_object()) throw ValidationError(source_ + ": " + where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(source_ + ": bad value for " + qualified(key));
    }
  }

  Reader section(const char* key) {
    seen_.push_back(key);
    static const ordered_json empty = ordered_json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, qualified(key), source_);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ValidationError(source_ + ": unknown key " + qualified(key.c_str()));
      }
    }
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "document" : path_; }

  const ordered_json& j_;
  std::string path_;
  const std::string& source_;
  std::vector<std::string> seen_;
};

}  // namespace

RunConfig parse_config(std::string_view text, const std::string& source) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(source + ": " + e.what());
  }
  RunConfig c;
  Reader root(j, "", source);
  root.get("seed", c.seed);
  root.get("tau", c.tau);

  Reader split = root.section("split");
  split.get("train", c.split.train);
  split.get("val", c.split.val);
  split.get("test", c.split.test);
  split.finish();

  Reader enrichment = root.section("enrichment");
  std::string reps = c.enrichment.class_reps_all ? "all" : "train";
  enrichment.get("class_reps", reps);
  if (reps != "train" && reps != "all") {
    throw ValidationError(source + ": enrichment.class_reps must be \"train\" or \"all\"");
  }
  c.enrichment.class_reps_all = reps == "all";
  enrichment.get("deg_norm", c.enrichment.deg_norm);
  enrichment.finish();

  Reader sampler = root.section("sampler");
  sampler.get("c", c.sampler.c);
  sampler.get("k1", c.sampler.k1);
  sampler.get("q", c.sampler.q);
  std::string propagation = to_string(c.sampler.propagation);
  sampler.get("propagation", propagation);
  c.sampler.propagation = propagation_from_string(propagation);
  sampler.finish();

  Reader gcn = root.section("gcn");
  gcn.get("lr", c.gcn.lr);
  gcn.get("weight_decay", c.gcn.weight_decay);
  gcn.get("hidden", c.gcn.hidden);
  gcn.get("dropout", c.gcn.dropout);
  gcn.get("epochs", c.gcn.epochs);
  gcn.get("layers", c.gcn.layers);
  gcn.finish();

  Reader model = root.section("model");
  model.get("hidden", c.model.hidden);
  model.get("layers", c.model.layers);
  model.get("heads", c.model.heads);
  model.get("dropout", c.model.dropout);
  model.get("M", c.model.num_encodings);
  model.get("ffn_hidden", c.model.ffn_hidden);
  model.finish();

  Reader transformer = root.section("transformer");
  transformer.get("lr_start", c.transformer.lr_start);
  transformer.get("lr_end", c.transformer.lr_end);
  transformer.get("weight_decay", c.transformer.weight_decay);
  transformer.get("batch", c.transformer.batch);
  transformer.get("epochs", c.transformer.epochs);
  transformer.get("patience", c.transformer.patience);
  transformer.finish();

  root.finish();
  c.model.k1 = c.sampler.k1;
  c.model.q = c.sampler.q;
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  return parse_config(read_text(path), path.filename().string());
}

std::string config_to_json(const RunConfig& c, int indent) {
  ordered_json j;
  j["seed"] = c.seed;
  j["tau"] = c.tau;
  j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
  j["enrichment"] = {{"class_reps", c.enrichment.class_reps_all ? "all" : "train"},
                     {"deg_norm", c.enrichment.deg_norm}};
  j["sampler"] = {{"c", c.sampler.c},
                  {"k1", c.sampler.k1},
                  {"q", c.sampler.q},
                  {"propagation", to_string(c.sampler.propagation)}};
  j["gcn"] = {{"lr", c.gcn.lr},           {"weight_decay", c.gcn.weight_decay},
              {"hidden", c.gcn.hidden},   {"dropout", c.gcn.dropout},
              {"epochs", c.gcn.epochs},   {"layers", c.gcn.layers}};
  j["model"] = {{"hidden", c.model.hidden},   {"layers", c.model.layers},
                {"heads", c.model.heads},     {"dropout", c.model.dropout},
                {"M", c.model.num_encodings}, {"ffn_hidden", c.model.ffn_hidden}};
  j["transformer"] = {{"lr_start", c.transformer.lr_start},
                      {"lr_end", c.transformer.lr_end},
                      {"weight_decay", c.transformer.weight_decay},
                      {"batch", c.transformer.batch},
                      {"epochs", c.transformer.epochs},
                      {"patience", c.transformer.patience}};
  return j.dump(indent);
}

}  // namespace signnet

#pragma once

// File formats and configuration: TAB-separated edge lists, label files,
// draw/state CSVs, JSON diagnostics, PPC envelopes, affiliations, Sankey
// flows, run configuration and corpus ingestion.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "chain.hpp"
#include "diagnostics.hpp"
#include "errors.hpp"
#include "inference.hpp"
#include "model.hpp"

namespace dynsnetoc::io {

using json = nlohmann::json;

inline constexpr int kEdgeListVersion = 1;

// ---------------------------------------------------------------------------
// Low-level helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string() + " for reading", 0);
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class Int>
Int parse_int(std::string_view field, std::size_t line, const char* what) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec == std::errc::result_out_of_range) throw ParseError(std::string(what) + " overflows", line);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
    throw ParseError(std::string("invalid ") + what + " '" + std::string(field) + "'", line);
  return value;
}

inline double parse_double(const std::string& field, std::size_t line) {
  if (field.empty()) throw ParseError("empty numeric field", line);
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size()) throw ParseError("invalid number '" + field + "'", line);
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool getline_lf(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

// CSV field quoting: fields with commas, quotes or newlines are wrapped in
// double quotes with embedded quotes doubled.
inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false, in_quotes = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && field.empty() && !quoted) {
      in_quotes = quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      quoted = false;
    } else {
      field += c;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted field", line_no);
  out.push_back(std::move(field));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Edge lists and labels
// ---------------------------------------------------------------------------

// Header `# dynsnetoc-edges v1 T=<T> N=<N>`, then `t\ti\tj\tcount` lines with
// 1-based t, 0-based i <= j, sorted by (t, i, j).
inline void write_graph(const DynamicMultigraph& g, std::ostream& out) {
  out << "# dynsnetoc-edges v" << kEdgeListVersion << " T=" << g.num_timesteps() << " N=" << g.num_nodes() << '\n';
  for (std::size_t t = 0; t < g.num_timesteps(); ++t)
    for (const auto& [pair, n] : g.slice(t)) out << t + 1 << '\t' << pair.first << '\t' << pair.second << '\t' << n << '\n';
}

inline DynamicMultigraph read_graph(std::istream& in) {
  std::string line;
  if (!detail::getline_lf(in, line)) throw ParseError("missing header", 1);
  const std::string prefix = "# dynsnetoc-edges v";
  if (line.rfind(prefix, 0) != 0) throw ParseError("missing '# dynsnetoc-edges' header", 1);
  const auto fields = detail::split(std::string_view(line).substr(prefix.size()), ' ');
  if (fields.size() != 3 || fields[1].rfind("T=", 0) != 0 || fields[2].rfind("N=", 0) != 0)
    throw ParseError("malformed header", 1);
  const int version = detail::parse_int<int>(fields[0], 1, "version");
  if (version != kEdgeListVersion) throw ParseError("unsupported edge-list version " + std::to_string(version), 1);
  const auto T = detail::parse_int<std::size_t>(fields[1].substr(2), 1, "T");
  const auto N = detail::parse_int<std::size_t>(fields[2].substr(2), 1, "N");
  if (T < 1) throw ParseError("T must be >= 1", 1);

  DynamicMultigraph g(T, N);
  std::size_t line_no = 1;
  while (detail::getline_lf(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::split(line, '\t');
    if (f.size() != 4) throw ParseError("expected 4 TAB-separated fields", line_no);
    const auto t = detail::parse_int<std::size_t>(f[0], line_no, "timestep");
    const auto i = detail::parse_int<std::size_t>(f[1], line_no, "node index");
    const auto j = detail::parse_int<std::size_t>(f[2], line_no, "node index");
    const auto n = detail::parse_int<std::uint64_t>(f[3], line_no, "count");
    if (t < 1 || t > T) throw ParseError("timestep out of range [1, T]", line_no);
    if (i > j) throw ParseError("node indices must satisfy i <= j", line_no);
    if (j >= N) throw ParseError("node index exceeds declared N", line_no);
    if (n < 1) throw ParseError("count must be >= 1", line_no);
    if (g.count(t - 1, i, j) != 0) throw ParseError("duplicate pair", line_no);
    g.set_count(t - 1, i, j, n);
  }
  return g;
}

inline void save_graph(const DynamicMultigraph& g, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  write_graph(g, out);
}

inline DynamicMultigraph load_graph(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return read_graph(in);
}

// One UTF-8 label per line, line k labelling node k - 1.
inline void save_labels(const std::vector<std::string>& labels, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  for (const auto& l : labels) {
    if (l.find('\n') != std::string::npos) throw ShapeError("labels may not contain newlines");
    out << l << '\n';
  }
}

inline std::vector<std::string> load_labels(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<std::string> labels;
  std::string line;
  while (detail::getline_lf(in, line)) labels.push_back(line);
  return labels;
}

// ---------------------------------------------------------------------------
// Draws and latent states
// ---------------------------------------------------------------------------

// Header `lp,<column names>`, one row per draw, 17 significant digits.
inline void save_draws(const Chain& chain, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "lp";
  for (const auto& name : chain.layout().column_names()) out << ',' << name;
  out << '\n';
  for (std::size_t n = 0; n < chain.size(); ++n) {
    out << detail::format_double(chain.log_posterior_trace()[n]);
    for (double v : chain.draw(n)) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

// Recovers (T, p, L) from the header and checks every column name.
inline DrawLayout layout_from_header(const std::vector<std::string>& header) {
  if (header.empty() || header[0] != "lp") throw ParseError("draws header must start with 'lp'", 1);
  std::size_t p = 0, L = 0, nbeta = 0;
  for (const auto& h : header) {
    if (h.rfind("a.", 0) == 0) ++p;
    if (h.rfind("w0.", 0) == 0) ++L;
    if (h.rfind("beta.", 0) == 0) ++nbeta;
  }
  if (p == 0 || L == 0 || nbeta % (p * L) != 0) throw ParseError("cannot infer dimensions from draws header", 1);
  const DrawLayout lay{nbeta / (p * L), p, L};
  const auto names = lay.column_names();
  if (header.size() != names.size() + 1)
    throw ParseError("draws header has " + std::to_string(header.size()) + " columns, expected " +
                         std::to_string(names.size() + 1),
                     1);
  for (std::size_t c = 0; c < names.size(); ++c)
    if (header[c + 1] != names[c]) throw ParseError("unexpected column '" + header[c + 1] + "'", 1);
  return lay;
}

inline Chain load_draws(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!detail::getline_lf(in, line)) throw ParseError("empty draws file", 1);
  const DrawLayout lay = layout_from_header(detail::csv_split(line, 1));
  Chain chain(lay);
  std::vector<double> row(lay.num_columns());
  std::size_t line_no = 1;
  while (detail::getline_lf(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::csv_split(line, line_no);
    if (f.size() != lay.num_columns() + 1)
      throw ParseError("row has " + std::to_string(f.size()) + " columns, expected " +
                           std::to_string(lay.num_columns() + 1),
                       line_no);
    const double lp = detail::parse_double(f[0], line_no);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = detail::parse_double(f[c + 1], line_no);
    chain.push_back(row, lp);
  }
  return chain;
}

// A latent state plus hyperparameters in the draws format, as a single row
// whose lp column holds `log_posterior` (NaN when not evaluated).
inline void save_state(const LatentState& s, const Hyperparams& h, const std::filesystem::path& path,
                       double log_posterior = std::nan("")) {
  Chain c(DrawLayout{s.T, s.p, s.L});
  c.push_back(pack_draw(s, h), log_posterior);
  save_draws(c, path);
}

struct StateFile {
  LatentState state;
  Hyperparams hyper;
};

inline StateFile load_state(const std::filesystem::path& path) {
  const Chain c = load_draws(path);
  if (c.size() != 1) throw ParseError("state file must contain exactly one row", 2);
  return {c.state(0), c.hyper(0)};
}

// ---------------------------------------------------------------------------
// JSON documents
// ---------------------------------------------------------------------------

inline void save_json(const json& j, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

inline json load_json(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0);
  }
}

inline json diagnostics_json(const std::vector<Chain>& chains) {
  json out;
  out["chains"] = json::array();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& ch = chains[c];
    out["chains"].push_back({{"chain", c},
                             {"seed", ch.seed},
                             {"num_draws", ch.size()},
                             {"num_iterations", ch.stats.num_iterations},
                             {"step_size", ch.stats.step_size},
                             {"divergences", ch.stats.divergences},
                             {"warmup_divergences", ch.stats.warmup_divergences},
                             {"divergence_rate", divergence_rate(ch)},
                             {"mean_accept_stat", ch.stats.mean_accept_stat},
                             {"mean_tree_depth", ch.stats.mean_tree_depth},
                             {"total_leapfrog", ch.stats.total_leapfrog}});
  }
  if (chains.size() >= 2 && chains[0].size() >= 4) {
    std::vector<std::vector<double>> lp;
    for (const auto& ch : chains) lp.push_back(ch.log_posterior_trace());
    out["rhat_lp"] = split_rhat(lp);
  } else {
    out["rhat_lp"] = nullptr;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Posterior predictive envelopes
// ---------------------------------------------------------------------------

// Columns t (1-based), degree, lower, upper, empirical.
inline void save_ppc(const std::vector<PpcRow>& rows, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "t,degree,lower,upper,empirical\n";
  for (const auto& r : rows)
    out << r.t + 1 << ',' << r.degree << ',' << detail::format_double(r.lower) << ','
        << detail::format_double(r.upper) << ',' << detail::format_double(r.empirical) << '\n';
}

inline std::vector<PpcRow> load_ppc(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!detail::getline_lf(in, line) || line != "t,degree,lower,upper,empirical")
    throw ParseError("unexpected PPC header", 1);
  std::vector<PpcRow> rows;
  std::size_t line_no = 1;
  while (detail::getline_lf(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::csv_split(line, line_no);
    if (f.size() != 5) throw ParseError("expected 5 columns", line_no);
    PpcRow r;
    r.t = detail::parse_int<std::size_t>(f[0], line_no, "timestep");
    if (r.t < 1) throw ParseError("timestep must be >= 1", line_no);
    --r.t;
    r.degree = detail::parse_int<std::size_t>(f[1], line_no, "degree");
    r.lower = detail::parse_double(f[2], line_no);
    r.upper = detail::parse_double(f[3], line_no);
    r.empirical = detail::parse_double(f[4], line_no);
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Affiliations and Sankey flows
// ---------------------------------------------------------------------------

// Columns t (1-based), node, label, degree, share.1 .. share.p.
inline void save_affiliations(const AffiliationTable& table, const std::filesystem::path& path) {
  auto out = detail::open_out(path);
  out << "t,node,label,degree";
  for (std::size_t k = 0; k < table.p; ++k) out << ",share." << k + 1;
  out << '\n';
  for (const auto& r : table.rows) {
    out << r.t + 1 << ',' << r.node << ',' << detail::csv_quote(r.label) << ',' << detail::format_double(r.degree);
    for (double s : r.share) out << ',' << detail::format_double(s);
    out << '\n';
  }
}

inline AffiliationTable load_affiliations(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!detail::getline_lf(in, line)) throw ParseError("empty affiliations file", 1);
  const auto header = detail::csv_split(line, 1);
  if (header.size() < 5 || header[0] != "t" || header[1] != "node" || header[2] != "label" || header[3] != "degree")
    throw ParseError("unexpected affiliations header", 1);
  AffiliationTable table;
  table.p = header.size() - 4;
  std::size_t line_no = 1;
  while (detail::getline_lf(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = detail::csv_split(line, line_no);
    if (f.size() != header.size()) throw ParseError("wrong number of columns", line_no);
    AffiliationRow r;
    r.t = detail::parse_int<std::size_t>(f[0], line_no, "timestep") - 1;
    r.node = detail::parse_int<std::size_t>(f[1], line_no, "node");
    r.label = f[2];
    r.degree = detail::parse_double(f[3], line_no);
    for (std::size_t k = 0; k < table.p; ++k) r.share.push_back(detail::parse_double(f[4 + k], line_no));
    table.T = std::max(table.T, r.t + 1);
    table.num_nodes = std::max(table.num_nodes, r.node + 1);
    table.rows.push_back(std::move(r));
  }
  if (table.rows.size() != table.T * table.num_nodes) throw ParseError("affiliation table is not rectangular", line_no);
  for (std::size_t n = 0; n < table.rows.size(); ++n) {
    const auto& r = table.rows[n];
    if (r.t * table.num_nodes + r.node != n) throw ParseError("affiliation rows out of order", n + 2);
  }
  return table;
}

// Array of {t, from, to, count, labels}; t is the 1-based origin timestep and
// community -1 marks a node entering or leaving the top-k set.
inline json sankey_json(const std::vector<FlowRecord>& records) {
  json arr = json::array();
  for (const auto& r : records)
    arr.push_back({{"t", r.t + 1}, {"from", r.from}, {"to", r.to}, {"count", r.count}, {"labels", r.labels}});
  return arr;
}

inline std::vector<FlowRecord> sankey_from_json(const json& arr) {
  if (!arr.is_array()) throw ParseError("Sankey document must be a JSON array", 0);
  std::vector<FlowRecord> out;
  for (const auto& e : arr) {
    static const std::set<std::string> keys{"t", "from", "to", "count", "labels"};
    if (!e.is_object() || e.size() != keys.size()) throw ParseError("Sankey record must have exactly 5 fields", 0);
    for (const auto& [k, v] : e.items())
      if (!keys.count(k)) throw ParseError("unknown Sankey field '" + k + "'", 0);
    if (!e["t"].is_number_integer() || !e["from"].is_number_integer() || !e["to"].is_number_integer() ||
        !e["count"].is_number_integer() || !e["labels"].is_array())
      throw ParseError("Sankey record has fields of the wrong type", 0);
    FlowRecord r;
    const auto t = e["t"].get<long long>();
    if (t < 1) throw ParseError("Sankey t must be >= 1", 0);
    r.t = static_cast<std::size_t>(t - 1);
    r.from = e["from"].get<int>();
    r.to = e["to"].get<int>();
    r.count = e["count"].get<std::size_t>();
    for (const auto& l : e["labels"]) {
      if (!l.is_string()) throw ParseError("Sankey labels must be strings", 0);
      r.labels.push_back(l.get<std::string>());
    }
    if (r.labels.size() != r.count) throw ParseError("Sankey record count differs from label count", 0);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus ingestion
// ---------------------------------------------------------------------------

struct Document {
  std::size_t t;  // 1-based timestep
  std::vector<std::string> tokens;
};

// Each sentence adds 1 to n_ij for every unordered pair of distinct tokens
// (each pair once per sentence when `dedup` is set). Tokens seen fewer than
// vocab_min_count times in the whole corpus are dropped; surviving tokens are
// numbered by first appearance and become the node labels.
inline DynamicMultigraph ingest_corpus(const std::vector<Document>& docs, std::size_t vocab_min_count = 1,
                                       bool dedup = true) {
  if (docs.empty()) throw InsufficientDataError("ingest: empty corpus");
  std::set<std::size_t> steps;
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& d : docs) {
    if (d.t < 1) throw ParseError("ingest: timesteps start at 1", 0);
    steps.insert(d.t);
    for (const auto& tok : d.tokens) ++freq[tok];
  }
  const std::size_t T = *steps.rbegin();
  if (steps.size() != T) throw ParseError("ingest: timesteps must be contiguous from 1", 0);

  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::string> labels;
  for (const auto& d : docs)
    for (const auto& tok : d.tokens)
      if (freq[tok] >= vocab_min_count && !index.count(tok)) {
        index.emplace(tok, labels.size());
        labels.push_back(tok);
      }

  DynamicMultigraph g(T, labels.size());
  for (const auto& d : docs) {
    std::vector<std::size_t> ids;
    for (const auto& tok : d.tokens) {
      auto it = index.find(tok);
      if (it != index.end()) ids.push_back(it->second);
    }
    if (dedup) {
      std::set<std::pair<std::size_t, std::size_t>> pairs;
      for (std::size_t x = 0; x < ids.size(); ++x)
        for (std::size_t y = x + 1; y < ids.size(); ++y)
          if (ids[x] != ids[y]) pairs.insert(std::minmax(ids[x], ids[y]));
      for (const auto& [i, j] : pairs) g.add_edges(d.t - 1, i, j, 1);
    } else {
      for (std::size_t x = 0; x < ids.size(); ++x)
        for (std::size_t y = x + 1; y < ids.size(); ++y)
          if (ids[x] != ids[y]) g.add_edges(d.t - 1, std::min(ids[x], ids[y]), std::max(ids[x], ids[y]), 1);
    }
  }
  g.set_labels(labels);
  return g;
}

// Corpus text format: one sentence per line, `t<TAB>token token ...`.
inline std::vector<Document> load_corpus(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (detail::getline_lf(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected 't<TAB>sentence'", line_no);
    Document d;
    d.t = detail::parse_int<std::size_t>(std::string_view(line).substr(0, tab), line_no, "timestep");
    std::istringstream words(line.substr(tab + 1));
    std::string w;
    while (words >> w) d.tokens.push_back(w);
    docs.push_back(std::move(d));
  }
  return docs;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

// Every documented key with its default; `model.p` has none and must be given.
inline json default_config() {
  return json::parse(R"({
    "model": {
      "p": null,
      "alpha": 20.0, "sigma": 0.2, "tau": 1.0, "psi": 5.0,
      "a": 1.0, "b": 1.0,
      "prior_scale": {"alpha": 10.0, "sigma": 1.0, "tau": 10.0, "psi": 10.0, "a": 10.0, "b": 10.0}
    },
    "sim": {"T": 3, "epsilon": 0.001, "seed": 1},
    "infer": {
      "L": 0, "num_warmup": 1000, "num_samples": 1000, "thin": 1,
      "target_accept": 0.8, "max_tree_depth": 10, "chains": 1, "seed": 1,
      "tau_fixed": true, "init_jitter": 0.1, "progress_every": 0
    },
    "ppc": {"n_rep": 500, "seed": 1, "level": 0.95},
    "scan": {"alphas": [30, 60, 120, 240], "seeds": [1, 2, 3, 4, 5], "epsilon": 0.0001},
    "export": {"top_k": 50},
    "ingest": {"vocab_min_count": 1, "dedup": true},
    "output": {"directory": "out"}
  })");
}

struct RunConfig {
  Hyperparams hyper;
  PriorSpec priors;
  SimConfig sim;
  InferenceConfig infer;
  std::size_t ppc_n_rep = 500;
  std::uint64_t ppc_seed = 1;
  double ppc_level = 0.95;
  std::vector<double> scan_alphas;
  std::vector<std::uint64_t> scan_seeds;
  double scan_epsilon = 1e-4;
  std::size_t top_k = 50;
  std::size_t vocab_min_count = 1;
  bool dedup = true;
  std::filesystem::path output_directory;
  json document;  // the merged configuration
};

namespace detail {

inline void reject_unknown(const json& doc, const json& schema, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key '" + name + "'");
    if (schema[key].is_object()) reject_unknown(value, schema[key], name);
  }
}

template <class T>
T get_as(const json& doc, const std::string& path) {
  const json* node = &doc;
  for (auto part : split(path, '.')) node = &node->at(std::string(part));
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + path + "' has the wrong type");
  }
}

// Scalars broadcast to all p communities.
inline std::vector<double> per_community(const json& doc, const std::string& path, std::size_t p) {
  const json* node = &doc;
  for (auto part : split(path, '.')) node = &node->at(std::string(part));
  if (node->is_number()) return std::vector<double>(p, node->get<double>());
  auto v = get_as<std::vector<double>>(doc, path);
  if (v.size() != p) throw ConfigError("config key '" + path + "' must have p entries");
  return v;
}

}  // namespace detail

// Applies `key=value` overrides; the value is parsed as JSON when possible,
// otherwise taken as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  const auto parts = detail::split(key, '.');
  for (std::size_t n = 0; n + 1 < parts.size(); ++n) node = &(*node)[std::string(parts[n])];
  (*node)[std::string(parts.back())] = value;
}

inline RunConfig build_config(const json& user) {
  const json defaults = default_config();
  detail::reject_unknown(user, defaults, "");
  json doc = defaults;
  doc.merge_patch(user);
  // merge_patch drops keys set to null; restore the sentinel so lookups work.
  if (!doc["model"].contains("p")) doc["model"]["p"] = nullptr;
  if (doc["model"]["p"].is_null()) throw ConfigError("config key 'model.p' is required");

  RunConfig cfg;
  cfg.document = doc;
  using detail::get_as;
  const auto p = get_as<std::size_t>(doc, "model.p");
  if (p < 1) throw ConfigError("model.p must be >= 1");
  cfg.hyper.alpha = get_as<double>(doc, "model.alpha");
  cfg.hyper.sigma = get_as<double>(doc, "model.sigma");
  cfg.hyper.tau = get_as<double>(doc, "model.tau");
  cfg.hyper.psi = get_as<double>(doc, "model.psi");
  cfg.hyper.a = detail::per_community(doc, "model.a", p);
  cfg.hyper.b = detail::per_community(doc, "model.b", p);
  cfg.priors.alpha = get_as<double>(doc, "model.prior_scale.alpha");
  cfg.priors.sigma = get_as<double>(doc, "model.prior_scale.sigma");
  cfg.priors.tau = get_as<double>(doc, "model.prior_scale.tau");
  cfg.priors.psi = get_as<double>(doc, "model.prior_scale.psi");
  cfg.priors.a = get_as<double>(doc, "model.prior_scale.a");
  cfg.priors.b = get_as<double>(doc, "model.prior_scale.b");

  cfg.sim.hyper = cfg.hyper;
  cfg.sim.T = get_as<std::size_t>(doc, "sim.T");
  cfg.sim.epsilon = get_as<double>(doc, "sim.epsilon");
  cfg.sim.seed = get_as<std::uint64_t>(doc, "sim.seed");

  auto& in = cfg.infer;
  in.p = p;
  in.L = get_as<std::size_t>(doc, "infer.L");
  in.num_warmup = get_as<std::size_t>(doc, "infer.num_warmup");
  in.num_samples = get_as<std::size_t>(doc, "infer.num_samples");
  in.thin = get_as<std::size_t>(doc, "infer.thin");
  in.target_accept = get_as<double>(doc, "infer.target_accept");
  in.max_tree_depth = get_as<int>(doc, "infer.max_tree_depth");
  in.chains = get_as<std::size_t>(doc, "infer.chains");
  in.seed = get_as<std::uint64_t>(doc, "infer.seed");
  if (get_as<bool>(doc, "infer.tau_fixed")) {
    in.tau_fixed_value = cfg.hyper.tau;
  } else {
    in.tau_fixed_value.reset();
  }
  in.init_jitter = get_as<double>(doc, "infer.init_jitter");
  in.progress_every = get_as<std::size_t>(doc, "infer.progress_every");
  in.prior_scales = cfg.priors;

  cfg.ppc_n_rep = get_as<std::size_t>(doc, "ppc.n_rep");
  cfg.ppc_seed = get_as<std::uint64_t>(doc, "ppc.seed");
  cfg.ppc_level = get_as<double>(doc, "ppc.level");
  cfg.scan_alphas = get_as<std::vector<double>>(doc, "scan.alphas");
  cfg.scan_seeds = get_as<std::vector<std::uint64_t>>(doc, "scan.seeds");
  cfg.scan_epsilon = get_as<double>(doc, "scan.epsilon");
  cfg.top_k = get_as<std::size_t>(doc, "export.top_k");
  cfg.vocab_min_count = get_as<std::size_t>(doc, "ingest.vocab_min_count");
  cfg.dedup = get_as<bool>(doc, "ingest.dedup");
  cfg.output_directory = get_as<std::string>(doc, "output.directory");

  try {
    in.validate();
  } catch (const ParameterDomainError& e) {
    throw ConfigError(e.what());
  }
  if (!(cfg.ppc_level > 0.0 && cfg.ppc_level < 1.0)) throw ConfigError("ppc.level must lie in (0, 1)");
  return cfg;
}

// Loads an optional JSON file and applies overrides in order.
inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
  json user = json::object();
  if (!path.empty()) {
    try {
      user = load_json(path);
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  for (const auto& o : overrides) apply_override(user, o);
  return build_config(user);
}

}  // namespace dynsnetoc::io

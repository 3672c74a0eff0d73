#include "ecotraj/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "ecotraj/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ecotraj {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("file_missing", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_data("file_write", "cannot write " + path);
  out << content;
}

double parse_double(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size())
    throw_data("parse_number", where + ": '" + t + "' is not a number");
  return v;
}

long long parse_int(const std::string& cell, const std::string& where) {
  const std::string t = trim(cell);
  long long v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size())
    throw_data("parse_number", where + ": '" + t + "' is not an integer");
  return v;
}

struct CsvTable {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;  // source line per row

  std::string where(std::size_t row) const {
    return name + ":" + std::to_string(lines[row]);
  }
  int column(const std::string& header) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c] == header) return static_cast<int>(c);
    return -1;
  }
  int require_column(const std::string& header) const {
    const int c = column(header);
    if (c < 0) throw_data("csv_header", name + ": missing column '" + header + "'");
    return c;
  }
};

CsvTable read_csv(const std::string& path) {
  CsvTable t;
  t.name = fs::path(path).filename().string();
  std::istringstream in(read_file(path));
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(stripped);
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    if (stripped.back() == ',') cells.emplace_back();
    if (t.columns.empty()) {
      t.columns = std::move(cells);
    } else {
      if (cells.size() != t.columns.size())
        throw_data("csv_shape", t.name + ":" + std::to_string(line_no) + ": expected " +
                                    std::to_string(t.columns.size()) + " cells, got " +
                                    std::to_string(cells.size()));
      t.rows.push_back(std::move(cells));
      t.lines.push_back(line_no);
    }
  }
  if (t.columns.empty()) throw_data("csv_empty", t.name + ": no header row");
  return t;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

Config Config::from_string(const std::string& text) {
  Config c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw_config("config_syntax",
                   "line " + std::to_string(line_no) + ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw_config("config_syntax", "line " + std::to_string(line_no) + ": empty key");
    c.kv_[key] = value;
  }
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw_config("config_missing", "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

std::string Config::require_string(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw_config("config_key", "missing required config key '" + key + "'");
  return it->second;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  return parse_int(it->second, "config key '" + key + "'");
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  return parse_double(it->second, "config key '" + key + "'");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw_config("config_bool", "config key '" + key + "': '" + v + "' is not a boolean");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) return fallback;
  const std::string t = trim(it->second);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size())
    throw_config("config_u64", "config key '" + key + "': '" + t + "' is not an unsigned integer");
  return v;
}

std::string config_hash(const Config& config) {
  std::string canon;
  for (const auto& [k, v] : config.entries()) canon += k + "=" + v + "\n";
  return hex64(fnv1a(canon));
}

std::string file_digest(const std::string& path) { return hex64(fnv1a(read_file(path))); }

double beers_aspect(double aspect_degrees) {
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  return std::cos((45.0 - aspect_degrees) * kDegToRad) + 1.0;
}

int Dataset::state_index(const std::string& label) const {
  for (std::size_t i = 0; i < categories.size(); ++i)
    if (categories[i] == label) return static_cast<int>(i) + 1;
  throw_data("state_label", "unknown state label '" + label + "'");
}

std::vector<int> Dataset::start_states_by_site() const {
  std::vector<int> out(design.n_sites(), 0);
  std::map<int, int> plot_index;
  for (int i = 0; i < design.n_plots(); ++i) plot_index[design.plots()[i].plot_id] = i;
  for (const auto& y : observations) {
    const int i = plot_index.at(y.plot);
    if (y.year == design.start_year(i)) out[design.site(i, y.subplot - 1)] = y.state;
  }
  return out;
}

namespace {

struct StandardizeResult {
  Eigen::MatrixXd values;
  Standardization transform;
};

StandardizeResult standardize_columns(const Eigen::MatrixXd& raw,
                                      const std::vector<std::string>& names, bool already_done) {
  StandardizeResult out;
  out.values = raw;
  out.transform.columns = names;
  out.transform.mean = Eigen::VectorXd::Zero(raw.cols());
  out.transform.sd = Eigen::VectorXd::Ones(raw.cols());
  if (already_done || raw.rows() < 2) return out;
  for (int c = 0; c < raw.cols(); ++c) {
    const double mean = raw.col(c).mean();
    const double sd = std::sqrt((raw.col(c).array() - mean).square().sum() / (raw.rows() - 1));
    if (!(sd > 0.0))
      throw_data("covariate_constant",
                 "covariate column '" + names[c] + "' has zero variance; cannot standardize");
    out.transform.mean[c] = mean;
    out.transform.sd[c] = sd;
    out.values.col(c) = (raw.col(c).array() - mean) / sd;
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  fs::path json_path(path);
  if (fs::is_directory(json_path)) json_path /= "dataset.json";
  const fs::path base_dir = json_path.parent_path();

  json spec;
  try {
    spec = json::parse(read_file(json_path.string()));
  } catch (const json::exception& e) {
    throw_data("dataset_json", json_path.string() + ": " + e.what());
  }

  const int schema_version = spec.value("schema_version", 1);
  if (schema_version != 1)
    throw_data("schema_version", "unsupported schema version " + std::to_string(schema_version));

  if (!spec.contains("categories") || !spec["categories"].is_array() || spec["categories"].size() < 2)
    throw_data("categories", "dataset.json needs an ordered 'categories' array of two or more labels");
  std::vector<std::string> categories = spec["categories"].get<std::vector<std::string>>();
  {
    std::set<std::string> uniq(categories.begin(), categories.end());
    if (uniq.size() != categories.size()) throw_data("categories", "category labels must be unique");
  }
  const int K = static_cast<int>(categories.size());

  const json files = spec.value("files", json::object());
  auto file_of = [&](const char* key, const char* fallback) {
    return (base_dir / files.value(key, fallback)).string();
  };
  const bool standardized = spec.value("covariates_standardized", false);

  // --- plots ---
  CsvTable plots_csv = read_csv(file_of("plots", "plots.csv"));
  const int c_pid = plots_csv.require_column("plot_id");
  const int c_lat = plots_csv.require_column("lat");
  const int c_lon = plots_csv.require_column("lon");
  std::vector<PlotGeometry> plots;
  std::map<int, int> plot_index;
  for (std::size_t r = 0; r < plots_csv.rows.size(); ++r) {
    PlotGeometry g;
    g.plot_id = static_cast<int>(parse_int(plots_csv.rows[r][c_pid], plots_csv.where(r)));
    g.lat = parse_double(plots_csv.rows[r][c_lat], plots_csv.where(r));
    g.lon = parse_double(plots_csv.rows[r][c_lon], plots_csv.where(r));
    if (std::abs(g.lat) > 90.0 || std::abs(g.lon) > 180.0)
      throw_data("plot_coords", plots_csv.where(r) + ": coordinates outside valid range");
    if (!plot_index.emplace(g.plot_id, static_cast<int>(plots.size())).second)
      throw_data("plot_duplicate", plots_csv.where(r) + ": duplicate plot_id " +
                                       std::to_string(g.plot_id));
    plots.push_back(g);
  }
  if (plots.empty()) throw_data("plots_empty", "plots table has no rows");
  const int n_plots = static_cast<int>(plots.size());

  // --- lattice ---
  int lattice_rings = -1;
  std::vector<std::pair<int, int>> adjacency_edges;
  HexLattice lattice = build_hex_lattice(0);
  if (spec.contains("lattice") && spec["lattice"].contains("adjacency")) {
    const int n_sub = spec["lattice"].value("n_subplots", 0);
    if (n_sub < 1) throw_data("lattice_size", "lattice.n_subplots required with an adjacency file");
    CsvTable adj = read_csv((base_dir / spec["lattice"]["adjacency"].get<std::string>()).string());
    const int ca = adj.require_column("subplot_a");
    const int cb = adj.require_column("subplot_b");
    for (std::size_t r = 0; r < adj.rows.size(); ++r)
      adjacency_edges.emplace_back(static_cast<int>(parse_int(adj.rows[r][ca], adj.where(r))),
                                   static_cast<int>(parse_int(adj.rows[r][cb], adj.where(r))));
    lattice = lattice_from_edges(n_sub, adjacency_edges);
  } else {
    lattice_rings = spec.contains("lattice") ? spec["lattice"].value("n_rings", 3) : 3;
    lattice = build_hex_lattice(lattice_rings);
  }
  const int n_sub = lattice.n_subplots();

  // --- observations ---
  CsvTable obs_csv = read_csv(file_of("observations", "observations.csv"));
  const int oc_pid = obs_csv.require_column("plot_id");
  const int oc_sid = obs_csv.require_column("subplot_id");
  const int oc_year = obs_csv.require_column("year");
  int oc_state = obs_csv.column("state_label");
  if (oc_state < 0) oc_state = obs_csv.require_column("state");
  std::vector<StateObservation> observations;
  std::set<std::tuple<int, int, int>> seen;
  std::map<int, std::set<int>> plot_years;
  for (std::size_t r = 0; r < obs_csv.rows.size(); ++r) {
    const std::string& where = obs_csv.where(r);
    StateObservation y;
    y.plot = static_cast<int>(parse_int(obs_csv.rows[r][oc_pid], where));
    y.subplot = static_cast<int>(parse_int(obs_csv.rows[r][oc_sid], where));
    y.year = static_cast<int>(parse_int(obs_csv.rows[r][oc_year], where));
    if (!plot_index.count(y.plot))
      throw_data("obs_plot", where + ": unknown plot_id " + std::to_string(y.plot));
    if (y.subplot < 1 || y.subplot > n_sub)
      throw_data("obs_subplot", where + ": subplot_id " + std::to_string(y.subplot) +
                                    " outside 1.." + std::to_string(n_sub));
    const std::string& label = obs_csv.rows[r][oc_state];
    auto cat = std::find(categories.begin(), categories.end(), label);
    if (cat != categories.end()) {
      y.state = static_cast<int>(cat - categories.begin()) + 1;
    } else {
      long long idx = 0;
      auto [p, ec] = std::from_chars(label.data(), label.data() + label.size(), idx);
      if (ec != std::errc() || p != label.data() + label.size())
        throw_data("obs_state", where + ": unknown state label '" + label + "'");
      if (idx < 1 || idx > K)
        throw_data("obs_state", where + ": state index " + std::to_string(idx) + " outside 1.." +
                                    std::to_string(K));
      y.state = static_cast<int>(idx);
    }
    if (!seen.emplace(y.plot, y.subplot, y.year).second)
      throw_data("obs_duplicate", where + ": duplicate observation for plot " +
                                      std::to_string(y.plot) + ", subplot " +
                                      std::to_string(y.subplot) + ", year " +
                                      std::to_string(y.year));
    plot_years[y.plot].insert(y.year);
    observations.push_back(y);
  }

  std::vector<int> start_year(n_plots), end_year(n_plots);
  for (const auto& [pid, years] : plot_years) {
    if (years.size() != 2)
      throw_data("obs_years", "plot " + std::to_string(pid) + " has " +
                                  std::to_string(years.size()) + " observation years; need exactly 2");
    start_year[plot_index.at(pid)] = *years.begin();
    end_year[plot_index.at(pid)] = *years.rbegin();
  }
  // Every (plot, subplot) needs both surveys.
  std::map<std::pair<int, int>, int> site_count;
  for (const auto& y : observations) ++site_count[{y.plot, y.subplot}];
  if (static_cast<int>(site_count.size()) != n_plots * n_sub)
    throw_data("obs_coverage", "observations must cover every (plot, subplot) pair");
  for (const auto& [key, count] : site_count)
    if (count != 2)
      throw_data("obs_pair", "plot " + std::to_string(key.first) + ", subplot " +
                                 std::to_string(key.second) + " has " + std::to_string(count) +
                                 " observations; need exactly 2");

  // --- landscape covariates ---
  CsvTable land_csv = read_csv(file_of("landscape", "landscape.csv"));
  const int lc_pid = land_csv.require_column("plot_id");
  const int lc_sid = land_csv.column("subplot_id");
  const bool plot_level = lc_sid < 0;
  std::vector<std::string> landscape_columns;
  std::vector<int> land_value_cols;
  for (std::size_t c = 0; c < land_csv.columns.size(); ++c)
    if (static_cast<int>(c) != lc_pid && static_cast<int>(c) != lc_sid) {
      landscape_columns.push_back(land_csv.columns[c]);
      land_value_cols.push_back(static_cast<int>(c));
    }

  Eigen::MatrixXd landscape_raw(0, 0);
  StandardizeResult land_std;
  std::map<std::string, std::string> landscape_column_transforms;
  Eigen::MatrixXd h = Eigen::MatrixXd::Ones(n_plots * n_sub, 1);
  if (!landscape_columns.empty()) {
    const int expected_rows = plot_level ? n_plots : n_plots * n_sub;
    if (static_cast<int>(land_csv.rows.size()) != expected_rows)
      throw_data("landscape_rows", "landscape table has " + std::to_string(land_csv.rows.size()) +
                                       " rows; expected " + std::to_string(expected_rows));
    landscape_raw.resize(expected_rows, static_cast<int>(landscape_columns.size()));
    std::map<std::pair<int, int>, int> land_row_of;
    for (std::size_t r = 0; r < land_csv.rows.size(); ++r) {
      const std::string& where = land_csv.where(r);
      const int pid = static_cast<int>(parse_int(land_csv.rows[r][lc_pid], where));
      if (!plot_index.count(pid)) throw_data("landscape_plot", where + ": unknown plot_id");
      const int sid = plot_level ? 0 : static_cast<int>(parse_int(land_csv.rows[r][lc_sid], where));
      if (!plot_level && (sid < 1 || sid > n_sub))
        throw_data("landscape_subplot", where + ": subplot_id outside lattice");
      if (!land_row_of.emplace(std::make_pair(pid, sid), static_cast<int>(r)).second)
        throw_data("landscape_duplicate", where + ": duplicate landscape row");
      for (std::size_t c = 0; c < land_value_cols.size(); ++c)
        landscape_raw(static_cast<int>(r), static_cast<int>(c)) =
            parse_double(land_csv.rows[r][land_value_cols[c]], where);
    }

    // Named column transforms (aspect onto Beers' linear spectrum).
    Eigen::MatrixXd landscape_pre = landscape_raw;
    if (spec.contains("landscape_transforms")) {
      for (const auto& [col, kind] : spec["landscape_transforms"].items()) {
        if (kind.get<std::string>() != "beers")
          throw_data("landscape_transform", "unknown transform '" + kind.get<std::string>() + "'");
        auto it = std::find(landscape_columns.begin(), landscape_columns.end(), col);
        if (it == landscape_columns.end())
          throw_data("landscape_transform", "transform names unknown column '" + col + "'");
        landscape_column_transforms[col] = kind.get<std::string>();
        const int c = static_cast<int>(it - landscape_columns.begin());
        for (int r = 0; r < landscape_pre.rows(); ++r)
          landscape_pre(r, c) = beers_aspect(landscape_pre(r, c));
      }
    }

    land_std = standardize_columns(landscape_pre, landscape_columns, standardized);

    h.conservativeResize(Eigen::NoChange, 1 + land_std.values.cols());
    h.col(0).setOnes();
    for (int i = 0; i < n_plots; ++i)
      for (int s = 0; s < n_sub; ++s) {
        const auto key = plot_level ? std::make_pair(plots[i].plot_id, 0)
                                    : std::make_pair(plots[i].plot_id, s + 1);
        auto it = land_row_of.find(key);
        if (it == land_row_of.end())
          throw_data("landscape_missing", "no landscape row for plot " +
                                              std::to_string(plots[i].plot_id) + ", subplot " +
                                              std::to_string(s + 1));
        h.row(i * n_sub + s).tail(land_std.values.cols()) = land_std.values.row(it->second);
      }
  }

  // --- climate covariates ---
  CsvTable clim_csv = read_csv(file_of("climate", "climate.csv"));
  const int cc_pid = clim_csv.require_column("plot_id");
  const int cc_year = clim_csv.require_column("year");
  std::vector<std::string> climate_columns;
  std::vector<int> clim_value_cols;
  for (std::size_t c = 0; c < clim_csv.columns.size(); ++c)
    if (static_cast<int>(c) != cc_pid && static_cast<int>(c) != cc_year) {
      climate_columns.push_back(clim_csv.columns[c]);
      clim_value_cols.push_back(static_cast<int>(c));
    }

  Eigen::MatrixXd climate_raw(static_cast<int>(clim_csv.rows.size()),
                              static_cast<int>(climate_columns.size()));
  std::vector<int> climate_plot_ids(clim_csv.rows.size()), climate_years(clim_csv.rows.size());
  std::map<std::pair<int, int>, int> clim_row_of;
  for (std::size_t r = 0; r < clim_csv.rows.size(); ++r) {
    const std::string& where = clim_csv.where(r);
    const int pid = static_cast<int>(parse_int(clim_csv.rows[r][cc_pid], where));
    const int year = static_cast<int>(parse_int(clim_csv.rows[r][cc_year], where));
    if (!plot_index.count(pid)) throw_data("climate_plot", where + ": unknown plot_id");
    if (!clim_row_of.emplace(std::make_pair(pid, year), static_cast<int>(r)).second)
      throw_data("climate_duplicate", where + ": duplicate (plot_id, year) row");
    climate_plot_ids[r] = pid;
    climate_years[r] = year;
    for (std::size_t c = 0; c < clim_value_cols.size(); ++c)
      climate_raw(static_cast<int>(r), static_cast<int>(c)) =
          parse_double(clim_csv.rows[r][clim_value_cols[c]], where);
  }

  StandardizeResult clim_std = standardize_columns(climate_raw, climate_columns, standardized);

  std::map<int, int> first_clim_year;
  for (std::size_t r = 0; r < climate_plot_ids.size(); ++r) {
    auto it = first_clim_year.find(climate_plot_ids[r]);
    if (it == first_clim_year.end() || climate_years[r] < it->second)
      first_clim_year[climate_plot_ids[r]] = climate_years[r];
  }

  std::vector<Eigen::MatrixXd> climate(n_plots);
  for (int i = 0; i < n_plots; ++i) {
    const int pid = plots[i].plot_id;
    const int T = end_year[i] - start_year[i];
    Eigen::MatrixXd x(T, 1 + clim_std.values.cols());
    x.col(0).setOnes();
    auto first_it = first_clim_year.find(pid);
    for (int t = 0; t < T && climate_columns.size() > 0; ++t) {
      const int year = start_year[i] + 1 + t;
      auto it = clim_row_of.find({pid, year});
      if (it == clim_row_of.end() && first_it != first_clim_year.end() && year < first_it->second) {
        // Carry-back: years before the earliest record reuse that record.
        it = clim_row_of.find({pid, first_it->second});
      }
      if (it == clim_row_of.end())
        throw_data("climate_missing", "no climate row for plot " + std::to_string(pid) +
                                          ", year " + std::to_string(year));
      x.row(t).tail(clim_std.values.cols()) = clim_std.values.row(it->second);
    }
    climate[i] = std::move(x);
  }

  StudyDesign design(std::move(plots), std::move(lattice), std::move(start_year),
                     std::move(end_year), std::move(h), std::move(climate));

  return Dataset{schema_version,
                 std::move(categories),
                 std::move(design),
                 std::move(observations),
                 std::move(land_std.transform),
                 std::move(clim_std.transform),
                 std::move(landscape_columns),
                 std::move(landscape_raw),
                 plot_level,
                 std::move(landscape_column_transforms),
                 std::move(climate_columns),
                 std::move(climate_plot_ids),
                 std::move(climate_years),
                 std::move(climate_raw),
                 standardized,
                 lattice_rings,
                 std::move(adjacency_edges)};
}

void save_dataset(const Dataset& dataset, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);

  json spec;
  spec["schema_version"] = dataset.schema_version;
  spec["categories"] = dataset.categories;
  spec["files"] = {{"observations", "observations.csv"},
                   {"plots", "plots.csv"},
                   {"landscape", "landscape.csv"},
                   {"climate", "climate.csv"}};
  if (dataset.lattice_rings >= 0) {
    spec["lattice"] = {{"n_rings", dataset.lattice_rings}};
  } else {
    spec["lattice"] = {{"adjacency", "adjacency.csv"},
                       {"n_subplots", dataset.design.n_subplots()}};
    std::string adj = "subplot_a,subplot_b\n";
    for (const auto& [a, b] : dataset.adjacency_edges)
      adj += std::to_string(a) + "," + std::to_string(b) + "\n";
    write_file((dir / "adjacency.csv").string(), adj);
  }
  spec["covariates_standardized"] = dataset.covariates_standardized_on_disk;
  if (!dataset.landscape_column_transforms.empty())
    spec["landscape_transforms"] = dataset.landscape_column_transforms;
  write_file((dir / "dataset.json").string(), spec.dump(2) + "\n");

  std::string plots = "plot_id,lat,lon\n";
  for (const auto& p : dataset.design.plots())
    plots += std::to_string(p.plot_id) + "," + fmt_double(p.lat) + "," + fmt_double(p.lon) + "\n";
  write_file((dir / "plots.csv").string(), plots);

  std::string obs = "plot_id,subplot_id,year,state_label\n";
  for (const auto& y : dataset.observations)
    obs += std::to_string(y.plot) + "," + std::to_string(y.subplot) + "," +
           std::to_string(y.year) + "," + dataset.categories[y.state - 1] + "\n";
  write_file((dir / "observations.csv").string(), obs);

  std::string land = "plot_id";
  if (!dataset.landscape_plot_level) land += ",subplot_id";
  for (const auto& c : dataset.landscape_columns) land += "," + c;
  land += "\n";
  const int n_sub = dataset.design.n_subplots();
  for (int r = 0; r < dataset.landscape_raw.rows(); ++r) {
    const int plot = dataset.landscape_plot_level ? r : r / n_sub;
    land += std::to_string(dataset.design.plots()[plot].plot_id);
    if (!dataset.landscape_plot_level) land += "," + std::to_string(r % n_sub + 1);
    for (int c = 0; c < dataset.landscape_raw.cols(); ++c)
      land += "," + fmt_double(dataset.landscape_raw(r, c));
    land += "\n";
  }
  write_file((dir / "landscape.csv").string(), land);

  std::string clim = "plot_id,year";
  for (const auto& c : dataset.climate_columns) clim += "," + c;
  clim += "\n";
  for (int r = 0; r < dataset.climate_raw.rows(); ++r) {
    clim += std::to_string(dataset.climate_plot_ids[r]) + "," +
            std::to_string(dataset.climate_years[r]);
    for (int c = 0; c < dataset.climate_raw.cols(); ++c)
      clim += "," + fmt_double(dataset.climate_raw(r, c));
    clim += "\n";
  }
  write_file((dir / "climate.csv").string(), clim);
}

Dataset dataset_from_simulation(StudyDesign design, std::vector<StateObservation> observations,
                                std::vector<std::string> categories) {
  const int n_plots = design.n_plots();
  const int p_h = design.n_landscape_covariates() - 1;
  const int p_x = design.n_climate_covariates() - 1;

  std::vector<std::string> landscape_columns, climate_columns;
  for (int c = 1; c <= p_h; ++c) landscape_columns.push_back("h" + std::to_string(c));
  for (int c = 1; c <= p_x; ++c) climate_columns.push_back("x" + std::to_string(c));

  Eigen::MatrixXd landscape_raw = design.landscape().rightCols(p_h);

  int n_rows = 0;
  for (int i = 0; i < n_plots; ++i) n_rows += design.interval_years(i);
  Eigen::MatrixXd climate_raw(n_rows, p_x);
  std::vector<int> climate_plot_ids(n_rows), climate_years(n_rows);
  int r = 0;
  for (int i = 0; i < n_plots; ++i)
    for (int year = design.start_year(i) + 1; year <= design.end_year(i); ++year, ++r) {
      climate_plot_ids[r] = design.plots()[i].plot_id;
      climate_years[r] = year;
      climate_raw.row(r) = design.climate_row(i, year).tail(p_x);
    }

  Standardization identity_h, identity_x;
  identity_h.columns = landscape_columns;
  identity_h.mean = Eigen::VectorXd::Zero(p_h);
  identity_h.sd = Eigen::VectorXd::Ones(p_h);
  identity_x.columns = climate_columns;
  identity_x.mean = Eigen::VectorXd::Zero(p_x);
  identity_x.sd = Eigen::VectorXd::Ones(p_x);

  const int rings = design.lattice().n_rings();
  std::vector<std::pair<int, int>> edges;
  if (rings < 0) {
    const auto& W = design.lattice().adjacency();
    for (int a = 0; a < W.rows(); ++a)
      for (int b = a + 1; b < W.cols(); ++b)
        if (W(a, b) > 0.0) edges.emplace_back(a + 1, b + 1);
  }

  return Dataset{1,
                 std::move(categories),
                 std::move(design),
                 std::move(observations),
                 std::move(identity_h),
                 std::move(identity_x),
                 std::move(landscape_columns),
                 std::move(landscape_raw),
                 false,
                 {},
                 std::move(climate_columns),
                 std::move(climate_plot_ids),
                 std::move(climate_years),
                 std::move(climate_raw),
                 true,
                 rings,
                 std::move(edges)};
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  json j;
  j["tool_version"] = manifest.tool_version;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["config_digest"] = manifest.config_digest;
  j["input_digests"] = manifest.input_digests;
  j["dimensions"] = manifest.dimensions;
  j["timings_ms"] = manifest.timings_ms;
  write_file(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw_data("manifest_json", path + ": " + e.what());
  }
  RunManifest m;
  m.tool_version = j.value("tool_version", "");
  m.command = j.value("command", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.config_digest = j.value("config_digest", "");
  if (j.contains("input_digests"))
    m.input_digests = j["input_digests"].get<std::map<std::string, std::string>>();
  if (j.contains("dimensions"))
    m.dimensions = j["dimensions"].get<std::map<std::string, long long>>();
  if (j.contains("timings_ms"))
    m.timings_ms = j["timings_ms"].get<std::map<std::string, double>>();
  return m;
}

void write_samples_csv(const PosteriorSamples& samples, const std::string& path) {
  std::string out;
  for (std::size_t c = 0; c < samples.param_names.size(); ++c) {
    if (c) out += ",";
    out += samples.param_names[c];
  }
  out += "\n";
  for (int r = 0; r < samples.params.rows(); ++r) {
    for (int c = 0; c < samples.params.cols(); ++c) {
      if (c) out += ",";
      out += fmt_double(samples.params(r, c));
    }
    out += "\n";
  }
  write_file(path, out);
}

void write_latent_csv(const PosteriorSamples& samples, const StudyDesign& design,
                      const std::string& path) {
  const int K1 = samples.n_states - 1;
  std::string out;
  bool first = true;
  for (const char* kind : {"eta0", "delta"})
    for (int i = 0; i < design.n_plots(); ++i)
      for (int s = 0; s < design.n_subplots(); ++s)
        for (int k = 1; k <= K1; ++k) {
          if (!first) out += ",";
          first = false;
          out += std::string(kind) + "[" + std::to_string(design.plots()[i].plot_id) + "][" +
                 std::to_string(s + 1) + "][" + std::to_string(k) + "]";
        }
  out += "\n";
  for (int r = 0; r < samples.eta0.rows(); ++r) {
    for (int c = 0; c < samples.eta0.cols(); ++c) {
      if (c) out += ",";
      out += fmt_double(samples.eta0(r, c));
    }
    for (int c = 0; c < samples.delta.cols(); ++c) out += "," + fmt_double(samples.delta(r, c));
    out += "\n";
  }
  write_file(path, out);
}

PosteriorSamples read_samples(const std::string& samples_csv, const std::string& latent_csv,
                              const RunManifest& manifest) {
  PosteriorSamples s;
  auto dim = [&](const char* key) -> long long {
    auto it = manifest.dimensions.find(key);
    if (it == manifest.dimensions.end())
      throw_data("manifest_dim", std::string("manifest missing dimension '") + key + "'");
    return it->second;
  };
  s.n_chains = static_cast<int>(dim("n_chains"));
  s.draws_per_chain = static_cast<int>(dim("draws_per_chain"));
  s.burn_in = static_cast<int>(dim("burn_in"));
  s.thin = static_cast<int>(dim("thin"));
  s.n_states = static_cast<int>(dim("n_states"));
  s.n_sites = static_cast<int>(dim("n_sites"));
  s.seed = manifest.seed;

  CsvTable t = read_csv(samples_csv);
  s.param_names = t.columns;
  s.params.resize(static_cast<int>(t.rows.size()), static_cast<int>(t.columns.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      s.params(static_cast<int>(r), static_cast<int>(c)) = parse_double(t.rows[r][c], t.where(r));
  if (s.params.rows() != s.n_chains * s.draws_per_chain)
    throw_data("samples_rows", "samples row count disagrees with the manifest");

  if (!latent_csv.empty() && fs::exists(latent_csv)) {
    CsvTable lt = read_csv(latent_csv);
    const int K1 = s.n_states - 1;
    const int half = s.n_sites * K1;
    if (static_cast<int>(lt.columns.size()) != 2 * half)
      throw_data("latent_cols", "latent CSV column count disagrees with the manifest");
    if (lt.rows.size() != static_cast<std::size_t>(s.params.rows()))
      throw_data("latent_rows", "latent CSV row count disagrees with the samples");
    s.eta0.resize(static_cast<int>(lt.rows.size()), half);
    s.delta.resize(static_cast<int>(lt.rows.size()), half);
    for (std::size_t r = 0; r < lt.rows.size(); ++r)
      for (int c = 0; c < 2 * half; ++c) {
        const double v = parse_double(lt.rows[r][c], lt.where(r));
        if (c < half)
          s.eta0(static_cast<int>(r), c) = v;
        else
          s.delta(static_cast<int>(r), c - half) = v;
      }
  }
  return s;
}

void write_truth_json(const TrajectoryParams& params, const std::string& path) {
  json j;
  j["alpha"] = std::vector<std::vector<double>>();
  for (int r = 0; r < params.alpha.rows(); ++r) {
    std::vector<double> row(params.alpha.cols());
    for (int c = 0; c < params.alpha.cols(); ++c) row[c] = params.alpha(r, c);
    j["alpha"].push_back(row);
  }
  j["beta"] = std::vector<std::vector<double>>();
  for (int r = 0; r < params.beta.rows(); ++r) {
    std::vector<double> row(params.beta.cols());
    for (int c = 0; c < params.beta.cols(); ++c) row[c] = params.beta(r, c);
    j["beta"].push_back(row);
  }
  j["sigma2_zeta"] = params.sigma2_zeta;
  j["sigma2_xi"] = params.sigma2_xi;
  j["sigma2_eps"] = params.sigma2_eps;
  j["phi"] = params.phi;
  write_file(path, j.dump(2) + "\n");
}

TrajectoryParams read_truth_json(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw_data("truth_json", path + ": " + e.what());
  }
  TrajectoryParams p;
  const auto a = j["alpha"].get<std::vector<std::vector<double>>>();
  const auto b = j["beta"].get<std::vector<std::vector<double>>>();
  p.alpha.resize(a.size(), a.empty() ? 0 : a.front().size());
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c) p.alpha(r, c) = a[r][c];
  p.beta.resize(b.size(), b.empty() ? 0 : b.front().size());
  for (std::size_t r = 0; r < b.size(); ++r)
    for (std::size_t c = 0; c < b[r].size(); ++c) p.beta(r, c) = b[r][c];
  p.sigma2_zeta = j.value("sigma2_zeta", 1.0);
  p.sigma2_xi = j.value("sigma2_xi", 1.0);
  p.sigma2_eps = j.value("sigma2_eps", 1.0);
  p.phi = j.value("phi", 1.0);
  return p;
}

void write_transition_csv(const TransitionMatrix& tm, const std::vector<std::string>& labels,
                          const std::string& path) {
  std::string out = "from";
  for (const auto& l : labels) out += "," + l;
  out += "\n";
  for (int r = 0; r < tm.n_states(); ++r) {
    out += labels[r];
    for (int c = 0; c < tm.n_states(); ++c) out += "," + fmt_double(tm.probs(r, c));
    out += "\n";
  }
  write_file(path, out);
}

void write_transition_long_csv(const TransitionMatrix& tm, const std::vector<std::string>& labels,
                               const std::string& path) {
  std::string out = "from,to,mean,lo,hi\n";
  for (int r = 0; r < tm.n_states(); ++r)
    for (int c = 0; c < tm.n_states(); ++c) {
      out += labels[r] + "," + labels[c] + "," + fmt_double(tm.probs(r, c));
      if (tm.has_interval())
        out += "," + fmt_double(tm.lower(r, c)) + "," + fmt_double(tm.upper(r, c));
      else
        out += ",,";
      out += "\n";
    }
  write_file(path, out);
}

void write_transition_json(const PredictiveResult& result, const std::vector<std::string>& labels,
                           const ClimateScenario* scenario, const std::string& path) {
  const TransitionMatrix& tm = result.estimate;
  auto matrix_to_json = [&](const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    for (int r = 0; r < m.rows(); ++r) {
      std::vector<double> row(m.cols());
      for (int c = 0; c < m.cols(); ++c) row[c] = m(r, c);
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json j;
  j["labels"] = labels;
  j["mean"] = matrix_to_json(tm.probs);
  if (tm.has_interval()) {
    j["lower"] = matrix_to_json(tm.lower);
    j["upper"] = matrix_to_json(tm.upper);
  }
  j["row_counts"] = std::vector<double>(tm.row_counts.data(),
                                        tm.row_counts.data() + tm.row_counts.size());
  j["empty_rows"] = tm.empty_rows;
  j["n_draws"] = result.n_draws;
  if (result.defined_draws.size())
    j["defined_draws"] = std::vector<int>(result.defined_draws.data(),
                                          result.defined_draws.data() + result.defined_draws.size());
  if (scenario) {
    j["scenario"] = {{"name", scenario->name},
                     {"time", scenario->horizon_years},
                     {"temp", scenario->delta_temp},
                     {"pcpt", scenario->delta_precip}};
  }
  write_file(path, j.dump(2) + "\n");
}

void write_diagnostics_csv(const std::vector<ParamSummary>& summaries, const std::string& path) {
  std::string out = "param,mean,sd,q2.5,q50,q97.5,ess,rhat,degenerate\n";
  for (const auto& s : summaries) {
    out += s.name + "," + fmt_double(s.mean) + "," + fmt_double(s.sd) + "," + fmt_double(s.q025) +
           "," + fmt_double(s.q500) + "," + fmt_double(s.q975) + "," + fmt_double(s.ess) + "," +
           fmt_double(s.rhat) + "," + (s.degenerate ? "true" : "false") + "\n";
  }
  write_file(path, out);
}

Eigen::MatrixXd parse_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string row_text;
  while (std::getline(in, row_text, ';')) {
    std::vector<double> row;
    std::string cell;
    std::istringstream rs(row_text);
    // entries separated by commas or whitespace
    while (std::getline(rs, cell, ',')) {
      std::istringstream ws(cell);
      std::string tok;
      while (ws >> tok) row.push_back(parse_double(tok, "matrix literal"));
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw_config("matrix_empty", "empty matrix literal");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size())
      throw_config("matrix_ragged", "matrix literal rows have unequal lengths");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

ClimateScenario scenario_from_config(const Config& config, const std::string& base_dir) {
  ClimateScenario s;
  s.name = config.get_string("scenario.name", "custom");
  s.horizon_years = static_cast<int>(config.get_int("scenario.horizon", 120));
  s.delta_temp = config.get_double("scenario.delta_temp", 0.0);
  s.delta_precip = config.get_double("scenario.delta_precip", 0.0);
  const std::string path_csv = config.get_string("scenario.path_csv", "");
  if (!path_csv.empty()) {
    CsvTable t = read_csv((fs::path(base_dir) / path_csv).string());
    Eigen::MatrixXd path(static_cast<int>(t.rows.size()), static_cast<int>(t.columns.size()));
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      for (std::size_t c = 0; c < t.columns.size(); ++c)
        path(static_cast<int>(r), static_cast<int>(c)) = parse_double(t.rows[r][c], t.where(r));
    s.yearly_path = std::move(path);
    s.horizon_years = static_cast<int>(s.yearly_path.rows());
  }
  return s;
}

}  // namespace ecotraj

#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rspin/correlators.hpp"
#include "rspin/verify.hpp"

namespace rspin::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kCap = 3, kIo = 4 };

/// Settings shared by all commands.  Precedence: flags > config file > defaults.
struct RunConfig {
  int r = 3;
  int max_insertions = 6;
  int max_descendant_depth = 2;
  int genus_max = 1;
  std::vector<std::string> suites;
  std::string format = "json";
  std::string output;  // empty: stdout
};

/// Thrown for malformed input; mapped to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Reads "key = value" lines ('#' starts a comment) into a map.
inline std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  auto as_int = [](const std::string& k, const std::string& v) {
    try {
      size_t used = 0;
      int x = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return x;
    } catch (const std::logic_error&) {
      throw UsageError("config key '" + k + "' needs an integer, got '" + v + "'");
    }
  };
  for (const auto& [k, v] : kv) {
    if (k == "r")
      cfg.r = as_int(k, v);
    else if (k == "max_insertions" || k == "max_n")
      cfg.max_insertions = as_int(k, v);
    else if (k == "max_descendant_depth" || k == "max_d")
      cfg.max_descendant_depth = as_int(k, v);
    else if (k == "genus_max")
      cfg.genus_max = as_int(k, v);
    else if (k == "suites")
      cfg.suites = split_list(v);
    else if (k == "format")
      cfg.format = v;
    else if (k == "output" || k == "out")
      cfg.output = v;
    else
      throw UsageError("unknown config key '" + k + "'");
  }
}

inline void validate(const RunConfig& cfg) {
  if (cfg.r < 2) throw UsageError("r must be at least 2");
  if (cfg.max_insertions < 1 || cfg.max_descendant_depth < 0 || cfg.genus_max < 0) throw UsageError("caps must be positive");
  if (cfg.format != "json" && cfg.format != "csv" && cfg.format != "text") throw UsageError("format must be json, csv or text");
  for (const auto& s : cfg.suites)
    if (std::find(suite_names().begin(), suite_names().end(), s) == suite_names().end()) throw UsageError("unknown suite '" + s + "'");
}

using Json = nlohmann::ordered_json;

inline Json value_json(const Rational& q) { return Json{{"num", q.num_str()}, {"den", q.den_str()}}; }

inline Json insertions_json(const CorrelatorKey& key) {
  Json a = Json::array();
  for (const auto& p : key.insertions) a.push_back(Json{{"twist", p.twist}, {"desc", p.desc}});
  return a;
}

inline std::string insertions_text(const CorrelatorKey& key) {
  std::string s;
  for (const auto& p : key.insertions) {
    if (!s.empty()) s += ",";
    s += std::to_string(p.twist) + ":" + std::to_string(p.desc);
  }
  return s;
}

/// Writes to the configured path or to `out`; IO failures are reported by exit code.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& out) : path_(path), out_(out) {}
  std::ostream& stream() { return path_.empty() ? out_ : buf_; }
  bool flush(std::ostream& err) {
    if (path_.empty()) return true;
    std::ofstream f(path_, std::ios::binary);
    if (!f) {
      err << "error: cannot write '" << path_ << "'\n";
      return false;
    }
    f << buf_.str();
    f.flush();
    if (!f) {
      err << "error: write to '" << path_ << "' failed\n";
      return false;
    }
    return true;
  }

 private:
  std::string path_;
  std::ostream& out_;
  std::ostringstream buf_;
};

struct Evaluated {
  Rational value;
  Provenance provenance;
};

/// Value of a key with the pipelines that apply to it; a disagreement is an
/// Inconsistent error.
inline Evaluated evaluate(const CorrelatorKey& key, const Hierarchy& H, const ExtendedEngine& engine) {
  switch (key.sector) {
    case Sector::closed:
      H.require_in_cap(key);
      return {H.value(key), Provenance::hierarchy};
    case Sector::extended: {
      if (key.minus_desc != 0) return {engine.value(key), Provenance::recursion};
      H.require_in_cap(key);
      const Rational a = engine.value(key), b = H.value(key);
      if (a != b) throw Inconsistent(key.str() + ": recursion " + a.str() + ", hierarchy " + b.str());
      return {a, Provenance::both_agree};
    }
    case Sector::open: {
      H.require_in_cap(key);
      const Rational b = H.value(key);
      Rational a(0);
      if (key.boundary >= 1) {
        Points p = key.insertions;
        for (int c = 0; c < key.boundary; ++c) p.push_back({key.r - 1, 0});
        p.push_back({-1, 0});
        a = pow(Rational(-key.r), key.boundary - 1) * engine.value(p);
      }
      if (a != b) throw Inconsistent(key.str() + ": dictionary " + a.str() + ", open potential " + b.str());
      return {a, Provenance::both_agree};
    }
  }
  return {Rational(0), Provenance::hierarchy};
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact genus-zero r-spin correlators: Gelfand-Dickey hierarchy versus geometric recursions", "rspin"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  RunConfig cfg;
  std::string config_path;
  int r = 0, max_n = 0, max_d = 0, genus_max = 0;
  std::string format, output;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--r", r, "r >= 2");
    sub->add_option("--max-n", max_n, "maximum number of insertions (tau^{-1} not counted)");
    sub->add_option("--max-d", max_d, "maximum total descendant depth");
    sub->add_option("--format", format, "json, csv or text");
    sub->add_option("--out", output, "output file (default: stdout)");
  };

  auto* c_cor = app.add_subcommand("correlator", "Compute one correlator");
  add_common(c_cor);
  std::string sector_text = "ext", ins_text;
  int boundary = 0, minus_desc = 0;
  c_cor->add_option("--sector", sector_text, "closed, ext or open");
  c_cor->add_option("--ins", ins_text, "insertions twist:desc, comma separated");
  c_cor->add_option("--boundary", boundary, "number of boundary points (open sector)");
  c_cor->add_option("--minus-desc", minus_desc, "descendant on the tau^{-1} point (extended sector)");

  auto* c_table = app.add_subcommand("table", "Write every nonzero correlator of a sector within the caps");
  add_common(c_table);
  std::string table_sector = "ext";
  c_table->add_option("--sector", table_sector, "closed, ext or open");

  auto* c_verify = app.add_subcommand("verify", "Run property suites");
  add_common(c_verify);
  std::vector<std::string> suites;
  bool corrupt = false;
  c_verify->add_option("--suite", suites, "suite name (repeatable; default: all)");
  c_verify->add_option("--genus-max", genus_max, "highest genus layer checked by the dispersive suite");
  c_verify->add_flag("--corrupt-jet", corrupt, "test mode: perturb the Lax jet before certifying the flows");

  auto* c_lax = app.add_subcommand("lax", "Dump the Lax operator jet");
  add_common(c_lax);
  int degree = 3, nflows = 0;
  bool dispersive = false, slice = false, layers = false;
  c_lax->add_option("--degree", degree, "highest degree in T_2, T_3, ... kept in the dump");
  c_lax->add_option("--flows", nflows, "number of times T_1..T_N (default 2r)");
  c_lax->add_flag("--dispersive", dispersive, "dump the dispersive operator");
  c_lax->add_flag("--slice", slice, "restrict to T_{>=2} = 0 (same as --degree 0)");
  c_lax->add_flag("--layers", layers, "dispersive: list the genus layers f_i^[g]");
  c_lax->add_option("--genus-max", genus_max, "dispersive: highest layer listed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!config_path.empty()) apply_config(cfg, read_config_file(config_path));
    if (sub->count("--r")) cfg.r = r;
    if (sub->count("--max-n")) cfg.max_insertions = max_n;
    if (sub->count("--max-d")) cfg.max_descendant_depth = max_d;
    if (sub->count("--format")) cfg.format = format;
    if (sub->count("--out")) cfg.output = output;
    if (sub->get_option_no_throw("--genus-max") && sub->count("--genus-max")) cfg.genus_max = genus_max;
    if (sub == c_verify && !suites.empty()) cfg.suites = suites;
    validate(cfg);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    Sink sink(cfg.output, out);
    std::ostream& o = sink.stream();
    int code = kOk;

    if (sub == c_cor) {
      const Sector sector = parse_sector(sector_text);
      const Points ins = parse_insertions(ins_text);
      CorrelatorKey key = sector == Sector::closed     ? CorrelatorKey::closed(cfg.r, ins)
                          : sector == Sector::extended ? CorrelatorKey::extended(cfg.r, ins, minus_desc)
                                                       : CorrelatorKey::open(cfg.r, ins, boundary);
      Hierarchy H(cfg.r, Caps{cfg.max_insertions, cfg.max_descendant_depth});
      ExtendedEngine engine(cfg.r, H.closed_source());
      const Evaluated ev = evaluate(key, H, engine);
      if (cfg.format == "json") {
        Json j{{"schema_version", 1}, {"r", cfg.r}, {"sector", sector_name(key.sector)}, {"insertions", insertions_json(key)}};
        if (key.sector == Sector::open) j["boundary"] = key.boundary;
        if (key.sector == Sector::extended && key.minus_desc) j["minus_desc"] = key.minus_desc;
        j["value"] = value_json(ev.value);
        j["provenance"] = provenance_name(ev.provenance);
        o << j.dump() << "\n";
      } else if (cfg.format == "csv") {
        o << "schema_version,r,sector,insertions,boundary,num,den,provenance\n";
        o << "1," << cfg.r << "," << sector_name(key.sector) << ",\"" << insertions_text(key) << "\"," << key.boundary << ","
          << ev.value.num_str() << "," << ev.value.den_str() << "," << provenance_name(ev.provenance) << "\n";
      } else {
        o << key.str() << " = " << ev.value.str() << "  [" << provenance_name(ev.provenance) << "]\n";
      }
    } else if (sub == c_table) {
      const Sector sector = parse_sector(table_sector);
      Hierarchy H(cfg.r, Caps{cfg.max_insertions, cfg.max_descendant_depth});
      ExtendedEngine engine(cfg.r, H.closed_source());
      CorrelatorTable table;
      std::vector<CorrelatorKey> keys;
      const int n = cfg.max_insertions, d = cfg.max_descendant_depth;
      if (sector == Sector::closed) {
        for (const auto& p : enumerate_insertions(cfg.r, cfg.r - 1, 3, n, d)) keys.push_back(CorrelatorKey::closed(cfg.r, p));
      } else if (sector == Sector::extended) {
        for (const auto& p : enumerate_insertions(cfg.r, cfg.r - 1, 0, n, d)) keys.push_back(CorrelatorKey::extended(cfg.r, p));
      } else {
        for (int m = 1; m <= n; ++m)
          for (const auto& p : enumerate_insertions(cfg.r, cfg.r - 1, 0, n - m, d)) keys.push_back(CorrelatorKey::open(cfg.r, p, m));
      }
      for (const auto& key : keys) {
        if (sector == Sector::closed) {
          table.record(key, Scalar(H.value(key)), Provenance::hierarchy);
        } else if (sector == Sector::extended) {
          table.record(key, Scalar(engine.value(key)), Provenance::recursion);
          table.record(key, Scalar(H.value(key)), Provenance::hierarchy);
        } else {
          const Evaluated ev = evaluate(key, H, engine);
          table.record(key, Scalar(H.value(key)), Provenance::hierarchy);
          table.record(key, Scalar(ev.value), Provenance::recursion);
        }
      }
      if (table.poisoned()) {
        err << "error: pipelines disagree on " << table.conflicts().front().str() << "\n";
        code = kFailure;
      }
      Json entries = Json::array();
      std::ostringstream csv, text;
      for (const auto& [key, e] : table.entries()) {
        if (e.value.is_zero()) continue;
        const Rational v = as_rational(e.value);
        Json entry{{"insertions", insertions_json(key)}};
        if (sector == Sector::open) entry["boundary"] = key.boundary;
        entry["value"] = value_json(v);
        entry["provenance"] = provenance_name(e.provenance);
        entries.push_back(entry);
        csv << cfg.r << "," << sector_name(sector) << ",\"" << insertions_text(key) << "\"," << key.boundary << "," << v.num_str() << ","
            << v.den_str() << "," << provenance_name(e.provenance) << "\n";
        text << key.str() << " = " << v.str() << "  [" << provenance_name(e.provenance) << "]\n";
      }
      if (cfg.format == "json") {
        Json j{{"schema_version", 1}, {"r", cfg.r}, {"sector", sector_name(sector)}, {"entries", entries}};
        o << j.dump(1) << "\n";
      } else if (cfg.format == "csv") {
        o << "# schema_version=1\nr,sector,insertions,boundary,num,den,provenance\n" << csv.str();
      } else {
        o << text.str();
      }
    } else if (sub == c_verify) {
      VerifyConfig vc{cfg.r, Caps{cfg.max_insertions, cfg.max_descendant_depth}, cfg.genus_max, corrupt};
      Verifier V(vc);
      const std::vector<std::string> names = cfg.suites.empty() ? suite_names() : cfg.suites;
      Json report = Json::array();
      for (const auto& name : names) {
        const SuiteResult res = V.run(name);
        if (!res.passed()) code = kFailure;
        if (cfg.format == "json") {
          Json s{{"suite", name}, {"passed", res.passed()}, {"checks", res.checks}};
          if (res.counterexample) s["counterexample"] = *res.counterexample;
          report.push_back(s);
        } else if (cfg.format == "csv") {
          o << name << "," << (res.passed() ? "pass" : "fail") << "," << res.checks << ",\"" << res.counterexample.value_or("") << "\"\n";
        } else {
          o << (res.passed() ? "PASS " : "FAIL ") << name << " (" << res.checks << " checks)";
          if (res.counterexample) o << ": " << *res.counterexample;
          o << "\n";
        }
      }
      if (cfg.format == "json") {
        Json j{{"schema_version", 1},
               {"r", cfg.r},
               {"max_n", cfg.max_insertions},
               {"max_d", cfg.max_descendant_depth},
               {"note", "closed correlators entering the recursion are read from the hierarchy-side closed potential"},
               {"suites", report},
               {"passed", code == kOk}};
        o << j.dump(1) << "\n";
      }
    } else if (sub == c_lax) {
      const int N = nflows > 0 ? nflows : 2 * cfg.r;
      if (degree < 0) throw UsageError("degree must be nonnegative");
      // --degree counts the degree in T_2, T_3, ...; the jet is built one order
      // deeper so the linear T_1 terms of the seed are present.
      if (degree < 0) throw UsageError("degree must be nonnegative");
      const int keep = slice ? 0 : degree;
      auto in_window = [keep](const Monomial& m) { return m.degree() - m.exponent(0) <= keep; };
      if (dispersive) {
        DispersiveLaxJet D = build_L_dispersive(cfg.r, keep + 1, N);
        for (auto& f : D.ft) f = f.filtered(in_window);
        o << D.str() << "\n";
        if (layers)
          for (int i = 0; i <= cfg.r - 2; ++i)
            for (int g = 0; g <= cfg.genus_max; ++g) o << "f" << i << "[" << g << "] = " << D.layer(i, g).str() << "\n";
      } else {
        LaxJet L = build_L0(cfg.r, keep + 1, N);
        o << L.symbol().map([&](const RSeries& c) { return c.filtered(in_window); }).str() << "\n";
      }
    }
    if (!sink.flush(err)) return kIo;
    return code;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const BadKey& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TwoMinusOneInsertions& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CapExceeded& e) {
    err << "error: " << e.what() << "\n";
    return kCap;
  } catch (const OutOfCap& e) {
    err << "error: " << e.what() << "\n";
    return kCap;
  } catch (const Inconsistent& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace rspin::cli

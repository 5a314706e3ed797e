#include "skillcal/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "skillcal/csv.hpp"
#include "skillcal/error.hpp"
#include "skillcal/metrics.hpp"

namespace skillcal {

using json = nlohmann::ordered_json;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(',', start);
    const std::string item = trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::Config, "config key '" + key + "': '" + value + "' is not an integer");
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::Config, "config key '" + key + "': '" + value + "' is not a number");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  fail(ErrorCode::Config, "config key '" + key + "': '" + value + "' is not a boolean");
}

std::string fixed(double value, int decimals) {
  if (!std::isfinite(value)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

std::string rounded(double value, int decimals) {
  if (!std::isfinite(value)) return "NA";
  const double scale = std::pow(10.0, decimals);
  return fixed(std::floor(value * scale + 0.5) / scale, decimals);
}

void write_file(const std::filesystem::path& path, const std::string& content, PipelineResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << content;
  result.files.push_back(path);
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string format_percent(double fraction) { return rounded(fraction * 100.0, 1); }

RunConfig RunConfig::parse(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string collapse_text;
  bool in_collapse = false;
  std::size_t line_no = 0;
  auto resolve = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t.front() == '[') {
      if (t != "[collapse]") fail(ErrorCode::Config, "config line " + std::to_string(line_no) + ": unknown section " + t);
      in_collapse = true;
      continue;
    }
    if (in_collapse) {
      collapse_text += t + "\n";
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Config, "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key == "ads") {
      cfg.ads_text = value;
      cfg.ads = resolve(value);
    } else if (key == "totals") {
      cfg.totals_text = value;
      cfg.totals = resolve(value);
    } else if (key == "output") {
      cfg.output = resolve(value);
    } else if (key == "estimators") {
      cfg.estimators = split_list(value);
    } else if (key == "skills") {
      cfg.skills = value == "all" ? std::vector<std::string>{} : split_list(value);
    } else if (key == "waves") {
      cfg.waves.clear();
      for (const auto& w : split_list(value)) cfg.waves.push_back(static_cast<Wave>(parse_int(key, w)));
    } else if (key == "replicates") {
      cfg.replicates = static_cast<int>(parse_int(key, value));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
    } else if (key == "workers") {
      cfg.workers = static_cast<int>(parse_int(key, value));
    } else if (key == "folds") {
      cfg.folds = static_cast<int>(parse_int(key, value));
    } else if (key == "gamma") {
      cfg.gamma = parse_real(key, value);
    } else if (key == "collapse_threshold") {
      cfg.collapse_threshold = static_cast<std::size_t>(parse_int(key, value));
    } else if (key == "freeze_lambda") {
      cfg.freeze_lambda = parse_bool(key, value);
    } else if (key == "totals_noise") {
      cfg.totals_noise = parse_bool(key, value);
    } else if (key == "dump_draws") {
      cfg.dump_draws = parse_bool(key, value);
    } else {
      fail(ErrorCode::Config, "unknown config key '" + key + "'");
    }
  }
  cfg.collapse = CollapseMap::parse(collapse_text);
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.parent_path());
}

std::vector<EstimatorSpec> RunConfig::estimator_specs() const {
  std::vector<EstimatorSpec> specs;
  for (const auto& name : estimators) specs.push_back(EstimatorSpec::standard(parse_estimator(name)));
  return specs;
}

void RunConfig::validate(bool bootstrap) const {
  if (estimators.empty()) fail(ErrorCode::Config, "no estimators requested");
  std::set<std::string> seen;
  for (const auto& name : estimators) {
    parse_estimator(name);
    if (!seen.insert(name).second) fail(ErrorCode::Config, "estimator '" + name + "' listed twice");
  }
  const SkillCatalog catalog = SkillCatalog::standard();
  for (const auto& s : skills) {
    if (!catalog.find(s)) fail(ErrorCode::Config, "unknown skill '" + s + "'");
  }
  if (ads.empty() || !std::filesystem::exists(ads)) fail(ErrorCode::Config, "ads file not found: " + ads.string());
  if (totals.empty() || !std::filesystem::exists(totals)) {
    fail(ErrorCode::Config, "totals file not found: " + totals.string());
  }
  if (output.empty()) fail(ErrorCode::Config, "no output directory configured");
  if (folds < 2) fail(ErrorCode::Config, "folds must be at least 2");
  if (!(gamma > 0.0)) fail(ErrorCode::Config, "gamma must be positive");
  if (workers < 1) fail(ErrorCode::Config, "workers must be at least 1");
  if (bootstrap && replicates < 2) fail(ErrorCode::Config, "bootstrap needs at least 2 replicates");
}

std::string RunConfig::canonical_text() const {
  std::ostringstream out;
  auto join = [](const auto& items) {
    std::ostringstream s;
    for (std::size_t i = 0; i < items.size(); ++i) s << (i ? "," : "") << items[i];
    return s.str();
  };
  out << "ads=" << ads_text << "\n"
      << "totals=" << totals_text << "\n"
      << "estimators=" << join(estimators) << "\n"
      << "skills=" << (skills.empty() ? std::string("all") : join(skills)) << "\n"
      << "waves=" << (waves.empty() ? std::string("all") : join(waves)) << "\n"
      << "replicates=" << replicates << "\n"
      << "seed=" << seed << "\n"
      << "folds=" << folds << "\n"
      << "gamma=" << csv::format_double(gamma) << "\n"
      << "collapse_threshold=" << collapse_threshold << "\n"
      << "freeze_lambda=" << (freeze_lambda ? "true" : "false") << "\n"
      << "totals_noise=" << (totals_noise ? "true" : "false") << "\n"
      << "dump_draws=" << (dump_draws ? "true" : "false") << "\n"
      << "[collapse]\n"
      << collapse.to_string();
  return out.str();
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical_text()); }

PipelineResult run_pipeline(const RunConfig& config, RunMode mode) {
  config.validate(mode == RunMode::bootstrap);
  const std::vector<EstimatorSpec> specs = config.estimator_specs();
  PipelineResult result;

  // Inputs.
  const SkillCatalog catalog = SkillCatalog::standard();
  LoadAdsOptions load_options;
  load_options.allowed_waves = config.waves;
  AdSample raw = load_ads(config.ads, catalog, load_options);
  TotalsByWave all_totals = load_totals(config.totals);
  const std::vector<Wave> waves = config.waves.empty() ? raw.waves() : config.waves;
  const std::vector<std::string> skills = config.skills.empty() ? catalog.names : config.skills;

  ImputationSummary imputation;
  AdSample sample = impute_gower_1nn(raw, imputation);
  const CollapseMap active = active_rules(config.collapse, sample, config.collapse_threshold);
  sample = apply_collapse(sample, active);
  TotalsByWave totals;
  for (Wave w : waves) {
    auto it = all_totals.find(w);
    if (it == all_totals.end()) fail(ErrorCode::MissingGrandTotal, "totals file has no wave " + std::to_string(w));
    TotalsTable t = apply_collapse(it->second, active);
    t.validate();
    totals.emplace(w, std::move(t));
  }

  // Point estimates.
  ModelSettings settings;
  settings.folds = config.folds;
  settings.gamma = config.gamma;
  settings.seed = config.seed;
  const ModelCache cache(sample, specs, skills, settings);
  const EstimateResults point = estimate_all(specs, sample, totals, skills, waves, cache);
  for (const auto& f : point.failures) {
    result.errors.push_back(std::string(estimator_name(f.estimator)) + "/" + f.skill + "/" + std::to_string(f.wave) +
                            ": " + std::string(error_code_name(f.code)) + ": " + f.message);
  }

  std::map<std::pair<std::string, EstimatorName>, std::map<Wave, double>> values;
  for (const auto& pe : point.estimates) values[{pe.skill, pe.estimator}][pe.wave] = pe.value;
  auto pooled_value = [&](const std::string& skill, EstimatorName name) {
    auto it = values.find({skill, name});
    if (it == values.end() || it->second.size() != waves.size()) return nan();
    double sum = 0.0;
    for (const auto& [w, v] : it->second) sum += v;
    return sum / static_cast<double>(waves.size());
  };

  // Bootstrap.
  std::optional<BootstrapResult> boot;
  if (mode == RunMode::bootstrap) {
    BootstrapConfig bc;
    bc.replicates = config.replicates;
    bc.seed = config.seed;
    bc.estimators = specs;
    bc.skills = skills;
    bc.waves = waves;
    bc.workers = config.workers;
    bc.freeze_lambda = config.freeze_lambda;
    bc.perturb_totals = config.totals_noise;
    bc.models = settings;
    try {
      boot = run_bootstrap(bc, sample, totals);
    } catch (const Error& e) {
      result.errors.push_back(std::string("bootstrap: ") + e.what());
    }
  }

  std::vector<EstimatorName> model_names;
  for (const auto& s : specs) {
    if (s.has_model()) model_names.push_back(s.name);
  }
  auto auc_value = [&](const std::string& skill, EstimatorName name) {
    if (boot) {
      auto it = boot->mean_auc.find({skill, name});
      return it == boot->mean_auc.end() ? nan() : it->second;
    }
    try {
      return cache.model(name, skill).auc;
    } catch (const Error&) {
      return nan();
    }
  };
  auto cv_value = [&](const std::string& skill, EstimatorName name) {
    double sum = 0.0;
    for (Wave w : waves) {
      auto it = boot->distributions.find({skill, name, w});
      if (it == boot->distributions.end()) return nan();
      sum += it->second.cv_pct;
    }
    return sum / static_cast<double>(waves.size());
  };

  std::filesystem::create_directories(config.output);
  const auto& dir = config.output;

  // Table of pooled point estimates (percent).
  {
    std::ostringstream out;
    out << "skill";
    for (const auto& s : specs) out << ',' << estimator_name(s.name);
    out << '\n';
    for (const auto& skill : skills) {
      out << csv::escape(skill);
      for (const auto& s : specs) out << ',' << format_percent(pooled_value(skill, s.name));
      out << '\n';
    }
    write_file(dir / "point_estimates.csv", out.str(), result);
  }
  {
    std::ostringstream out;
    out << "skill,estimator,wave,value,percent,out_of_range,degenerate_model,separation_fallback\n";
    for (const auto& pe : point.estimates) {
      out << csv::escape(pe.skill) << ',' << estimator_name(pe.estimator) << ',' << pe.wave << ','
          << csv::format_double(pe.value) << ',' << format_percent(pe.value) << ',' << pe.out_of_range << ','
          << pe.degenerate_model << ',' << pe.separation_fallback << '\n';
    }
    write_file(dir / "point_estimates_by_wave.csv", out.str(), result);
  }
  {
    std::ostringstream out;
    out << "skill,estimator,wave,weight_min,weight_max,weight_sum,negative_weights\n";
    for (const auto& pe : point.estimates) {
      out << csv::escape(pe.skill) << ',' << estimator_name(pe.estimator) << ',' << pe.wave << ','
          << csv::format_double(pe.weights.min) << ',' << csv::format_double(pe.weights.max) << ','
          << csv::format_double(pe.weights.sum) << ',' << pe.weights.negative_count << '\n';
    }
    write_file(dir / "weight_diagnostics.csv", out.str(), result);
  }
  if (!model_names.empty()) {
    std::ostringstream out;
    out << "skill";
    for (auto n : model_names) out << ',' << estimator_name(n);
    out << '\n';
    for (const auto& skill : skills) {
      out << csv::escape(skill);
      for (auto n : model_names) out << ',' << rounded(auc_value(skill, n), 3);
      out << '\n';
    }
    write_file(dir / "auc.csv", out.str(), result);

    std::ostringstream models;
    models << "estimator,skill,lambda,nonzero,separation_fallback,in_sample_auc\n";
    for (auto n : model_names) {
      for (const auto& skill : skills) {
        models << estimator_name(n) << ',' << csv::escape(skill) << ',';
        try {
          const FittedModel& m = cache.model(n, skill);
          const auto nonzero = (m.fit.coefficients.array() != 0.0).count();
          models << csv::format_double(m.fit.lambda) << ',' << nonzero << ',' << m.separation_fallback << ','
                 << csv::format_double(m.auc) << '\n';
        } catch (const Error& e) {
          models << "NA,NA,NA,NA\n";
        }
      }
    }
    write_file(dir / "models.csv", models.str(), result);
  }

  std::map<std::pair<std::string, Covariate>, double> cramer;
  {
    std::ostringstream out;
    out << "skill,occupation,nace,province\n";
    for (const auto& skill : skills) {
      const std::size_t k = sample.catalog.index_of(skill);
      out << csv::escape(skill);
      for (Covariate c : kAllCovariates) {
        std::vector<int> a, b;
        a.reserve(sample.records.size());
        b.reserve(sample.records.size());
        for (const auto& r : sample.records) {
          a.push_back(r.category(c));
          b.push_back(r.skills[k]);
        }
        double v = nan();
        try {
          v = cramers_v(a, b);
        } catch (const Error&) {
        }
        cramer[{skill, c}] = v;
        out << ',' << rounded(v, 2);
      }
      out << '\n';
    }
    write_file(dir / "cramers_v.csv", out.str(), result);
  }

  if (boot) {
    std::ostringstream cv;
    cv << "skill";
    for (const auto& s : specs) cv << ',' << estimator_name(s.name);
    cv << '\n';
    for (const auto& skill : skills) {
      cv << csv::escape(skill);
      for (const auto& s : specs) cv << ',' << rounded(cv_value(skill, s.name), 1);
      cv << '\n';
    }
    write_file(dir / "cv.csv", cv.str(), result);

    std::ostringstream summary;
    summary << "skill,estimator,wave,replicates,mean,variance,sd,cv_pct\n";
    for (const auto& skill : skills) {
      for (const auto& s : specs) {
        for (Wave w : waves) {
          auto it = boot->distributions.find({skill, s.name, w});
          if (it == boot->distributions.end()) continue;
          const auto& d = it->second;
          summary << csv::escape(skill) << ',' << estimator_name(s.name) << ',' << w << ',' << d.draws.size() << ','
                  << csv::format_double(d.mean) << ',' << csv::format_double(d.variance) << ','
                  << csv::format_double(d.sd) << ',' << csv::format_double(d.cv_pct) << '\n';
        }
      }
    }
    write_file(dir / "bootstrap_summary.csv", summary.str(), result);
    if (config.dump_draws) {
      write_draws_csv(dir / "draws.csv", *boot);
      result.files.push_back(dir / "draws.csv");
    }
  }

  // Machine-readable results.
  json results;
  results["mode"] = mode == RunMode::bootstrap ? "bootstrap" : "estimate";
  results["estimators"] = config.estimators;
  results["skills"] = skills;
  results["waves"] = waves;
  json point_json = json::object();
  for (const auto& skill : skills) {
    for (const auto& s : specs) {
      json entry;
      entry["pooled"] = number_or_null(pooled_value(skill, s.name));
      json by_wave = json::object();
      auto it = values.find({skill, s.name});
      if (it != values.end()) {
        for (const auto& [w, v] : it->second) by_wave[std::to_string(w)] = v;
      }
      entry["by_wave"] = by_wave;
      point_json[skill][std::string(estimator_name(s.name))] = entry;
    }
  }
  results["point"] = point_json;
  json auc_json = json::object();
  for (const auto& skill : skills) {
    for (auto n : model_names) auc_json[skill][std::string(estimator_name(n))] = number_or_null(auc_value(skill, n));
  }
  results["auc"] = auc_json;
  json cramer_json = json::object();
  for (const auto& [key, v] : cramer) cramer_json[key.first][std::string(covariate_name(key.second))] = number_or_null(v);
  results["cramers_v"] = cramer_json;
  if (boot) {
    json cv_json = json::object();
    for (const auto& skill : skills) {
      for (const auto& s : specs) {
        json entry;
        entry["pooled"] = number_or_null(cv_value(skill, s.name));
        json by_wave = json::object();
        for (Wave w : waves) {
          auto it = boot->distributions.find({skill, s.name, w});
          if (it != boot->distributions.end()) by_wave[std::to_string(w)] = number_or_null(it->second.cv_pct);
        }
        entry["by_wave"] = by_wave;
        cv_json[skill][std::string(estimator_name(s.name))] = entry;
      }
    }
    results["cv_pct"] = cv_json;
  }
  results["errors"] = result.errors;
  write_file(dir / "results.json", results.dump(2) + "\n", result);

  json manifest;
  manifest["tool"] = "skillcal";
  manifest["mode"] = results["mode"];
  manifest["seed"] = config.seed;
  {
    std::ostringstream h;
    h << std::hex << std::setw(16) << std::setfill('0') << config.hash();
    manifest["config_hash"] = h.str();
  }
  manifest["config"] = config.canonical_text();
  manifest["records"] = sample.records.size();
  json per_wave = json::object();
  for (Wave w : waves) per_wave[std::to_string(w)] = sample.count(w);
  manifest["records_per_wave"] = per_wave;
  manifest["imputation"] = {{"records_imputed", imputation.records_imputed},
                            {"occupation_cells", imputation.cells_imputed[0]},
                            {"nace_cells", imputation.cells_imputed[1]},
                            {"province_cells", imputation.cells_imputed[2]}};
  manifest["active_collapse_rules"] = active.to_string();
  if (mode == RunMode::bootstrap) {
    manifest["replicates"] = config.replicates;
    manifest["dropped_replicates"] = boot ? boot->dropped : static_cast<std::size_t>(config.replicates);
    manifest["truncated_totals"] = boot ? boot->truncated_totals : 0;
    manifest["drop_reasons"] = boot ? boot->drop_reasons : std::vector<std::string>{};
  }
  std::size_t negative = 0, out_of_range = 0;
  for (const auto& pe : point.estimates) {
    negative += pe.weights.negative_count > 0;
    out_of_range += pe.out_of_range;
  }
  manifest["estimates_with_negative_weights"] = negative;
  manifest["estimates_out_of_range"] = out_of_range;
  manifest["errors"] = result.errors;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n", result);

  result.exit_code = result.errors.empty() ? 0 : 1;
  return result;
}

namespace {

std::string render_table(const std::string& title, const json& table, const std::vector<std::string>& skills,
                         const std::vector<std::string>& columns, const std::function<std::string(const json&)>& cell) {
  std::ostringstream out;
  out << title << "\n";
  std::size_t width = 6;
  for (const auto& s : skills) width = std::max(width, s.size());
  out << std::left << std::setw(static_cast<int>(width) + 2) << "SKILLS";
  for (const auto& c : columns) out << std::right << std::setw(11) << c;
  out << "\n";
  for (const auto& s : skills) {
    out << std::left << std::setw(static_cast<int>(width) + 2) << s;
    for (const auto& c : columns) {
      std::string v = "NA";
      if (table.contains(s) && table[s].contains(c)) v = cell(table[s][c]);
      out << std::right << std::setw(11) << v;
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace

std::string render_report(const std::filesystem::path& dir) {
  std::ifstream in(dir / "results.json");
  if (!in) fail(ErrorCode::Io, "cannot read " + (dir / "results.json").string());
  const json r = json::parse(in);
  const auto skills = r.at("skills").get<std::vector<std::string>>();
  const auto estimators = r.at("estimators").get<std::vector<std::string>>();
  auto number = [](const json& v, int decimals, double scale) {
    return v.is_number() ? rounded(v.get<double>() * scale, decimals) : std::string("NA");
  };

  std::ostringstream out;
  out << render_table("Point estimates, percent (mean over waves)", r.at("point"), skills, estimators,
                      [&](const json& e) { return number(e.at("pooled"), 1, 100.0); });
  if (r.contains("cv_pct")) {
    out << "\n"
        << render_table("Relative standard error, percent (mean over waves)", r.at("cv_pct"), skills, estimators,
                        [&](const json& e) { return number(e.at("pooled"), 1, 1.0); });
  }
  std::vector<std::string> models;
  for (const auto& e : estimators) {
    if (EstimatorSpec::standard(parse_estimator(e)).has_model()) models.push_back(e);
  }
  if (!models.empty()) {
    out << "\n"
        << render_table(r.at("mode") == "bootstrap" ? "AUC (mean over replicates)" : "AUC (in-sample)", r.at("auc"),
                        skills, models, [&](const json& e) { return number(e, 3, 1.0); });
  }
  out << "\n"
      << render_table("Cramer's V", r.at("cramers_v"), skills, {"occupation", "nace", "province"},
                      [&](const json& e) { return number(e, 2, 1.0); });
  const auto errors = r.at("errors").get<std::vector<std::string>>();
  for (const auto& e : errors) out << "error: " << e << "\n";
  return out.str();
}

}  // namespace skillcal

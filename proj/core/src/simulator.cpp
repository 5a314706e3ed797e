#include "skillcal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "skillcal/bootstrap.hpp"
#include "skillcal/csv.hpp"
#include "skillcal/error.hpp"
#include "skillcal/glm.hpp"
#include "skillcal/random.hpp"

namespace skillcal {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(ErrorCode::Config, "design key '" + key + "': '" + v + "' is not a number");
  }
}

std::size_t to_count(const std::string& v, const std::string& key) {
  const double d = to_double(v, key);
  if (d < 0.0 || d != std::floor(d)) fail(ErrorCode::Config, "design key '" + key + "' needs a non-negative integer");
  return static_cast<std::size_t>(d);
}

Wave to_wave(const std::string& v, const std::string& key) { return static_cast<Wave>(to_count(v, key)); }

std::size_t level_index(const std::vector<std::string>& levels, const std::string& code, const std::string& key) {
  auto it = std::find(levels.begin(), levels.end(), code);
  if (it == levels.end()) fail(ErrorCode::Config, "design key '" + key + "': unknown level '" + code + "'");
  return static_cast<std::size_t>(it - levels.begin());
}

void normalize(std::vector<double>& v, const std::string& what) {
  double sum = 0.0;
  for (double x : v) {
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::Config, what + " has a negative or non-finite share");
    sum += x;
  }
  if (!(sum > 0.0)) fail(ErrorCode::Config, what + " shares sum to zero");
  for (double& x : v) x /= sum;
}

}  // namespace

std::size_t SyntheticDesign::cell_count() const {
  return levels[0].size() * levels[1].size() * levels[2].size();
}

SyntheticDesign SyntheticDesign::uniform(std::array<std::vector<std::string>, kCovariateCount> lv,
                                         std::vector<Wave> ws, std::size_t population_size, std::size_t n) {
  SyntheticDesign d;
  d.levels = std::move(lv);
  d.waves = std::move(ws);
  for (Wave w : d.waves) {
    d.population[w] = population_size;
    d.sample_size[w] = n;
    d.missing_rate[w] = {0.0, 0.0, 0.0};
    for (const auto& code : d.levels[1]) d.nace_rel_se[w][code] = 0.0;
  }
  const std::size_t no = d.levels[0].size(), nn = d.levels[1].size(), np = d.levels[2].size();
  d.occupation_share.assign(no, 1.0 / static_cast<double>(no));
  d.nace_given_occupation.assign(no, std::vector<double>(nn, 1.0 / static_cast<double>(nn)));
  d.province_share.assign(np, 1.0 / static_cast<double>(np));
  d.skill_intercept.assign(d.catalog.size(), 0.0);
  d.skill_effect.resize(d.catalog.size());
  for (auto& s : d.skill_effect) {
    for (std::size_t c = 0; c < kCovariateCount; ++c) s[c].assign(d.levels[c].size(), 0.0);
  }
  for (std::size_t c = 0; c < kCovariateCount; ++c) d.selection_effect[c].assign(d.levels[c].size(), 0.0);
  return d;
}

SyntheticDesign SyntheticDesign::parse(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Config, "design line " + std::to_string(line_no) + ": expected key = value");
    entries.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }

  // Structural keys first: they size everything else.
  std::array<std::vector<std::string>, kCovariateCount> lv;
  std::vector<Wave> ws;
  SkillCatalog catalog = SkillCatalog::standard();
  for (const auto& [key, value] : entries) {
    if (key == "waves") {
      for (const auto& w : split(value, ',')) ws.push_back(to_wave(w, key));
    } else if (key.rfind("levels.", 0) == 0) {
      lv[covariate_slot(parse_covariate(key.substr(7)))] = split(value, ',');
    } else if (key == "skills") {
      catalog.names = split(value, ',');
    }
  }
  if (ws.empty()) fail(ErrorCode::Config, "design needs 'waves'");
  for (Covariate c : kAllCovariates) {
    if (lv[covariate_slot(c)].empty()) fail(ErrorCode::Config, "design needs levels." + std::string(covariate_name(c)));
  }
  catalog.validate();

  SyntheticDesign d = uniform(lv, ws, 0, 0);
  d.catalog = catalog;
  d.skill_intercept.assign(catalog.size(), 0.0);
  d.skill_effect.assign(catalog.size(), {});
  for (auto& s : d.skill_effect) {
    for (std::size_t c = 0; c < kCovariateCount; ++c) s[c].assign(lv[c].size(), 0.0);
  }

  std::vector<double> nace_share(lv[1].size(), 1.0);
  std::vector<bool> has_given(lv[0].size(), false);
  std::vector<std::vector<double>> given(lv[0].size(), std::vector<double>(lv[1].size(), 0.0));

  for (const auto& [key, value] : entries) {
    if (key == "waves" || key == "skills" || key.rfind("levels.", 0) == 0) continue;
    const auto parts = split(key, '.');
    const std::string& head = parts[0];
    if (head == "population" && parts.size() == 2) {
      d.population[to_wave(parts[1], key)] = to_count(value, key);
    } else if (head == "sample" && parts.size() == 2) {
      d.sample_size[to_wave(parts[1], key)] = to_count(value, key);
    } else if (head == "share" && parts.size() == 3) {
      const Covariate c = parse_covariate(parts[1]);
      const std::size_t i = level_index(lv[covariate_slot(c)], parts[2], key);
      const double x = to_double(value, key);
      if (c == Covariate::occupation) d.occupation_share[i] = x;
      if (c == Covariate::nace) nace_share[i] = x;
      if (c == Covariate::province) d.province_share[i] = x;
    } else if (head == "nace" && parts.size() == 4 && parts[1] == "given") {
      const std::size_t o = level_index(lv[0], parts[2], key);
      given[o][level_index(lv[1], parts[3], key)] = to_double(value, key);
      has_given[o] = true;
    } else if (head == "skill" && parts.size() >= 3) {
      const std::size_t k = catalog.index_of(parts[1]);
      if (parts.size() == 3 && parts[2] == "intercept") {
        d.skill_intercept[k] = to_double(value, key);
      } else if (parts.size() == 4) {
        const Covariate c = parse_covariate(parts[2]);
        d.skill_effect[k][covariate_slot(c)][level_index(lv[covariate_slot(c)], parts[3], key)] = to_double(value, key);
      } else {
        fail(ErrorCode::Config, "unknown design key '" + key + "'");
      }
    } else if (head == "selection" && parts.size() == 3) {
      const Covariate c = parse_covariate(parts[1]);
      d.selection_effect[covariate_slot(c)][level_index(lv[covariate_slot(c)], parts[2], key)] = to_double(value, key);
    } else if (head == "oversample" && parts.size() == 1) {
      d.oversample = to_double(value, key);
    } else if (head == "missing" && parts.size() == 3) {
      d.missing_rate[to_wave(parts[1], key)][covariate_slot(parse_covariate(parts[2]))] = to_double(value, key);
    } else if (head == "rel_se" && parts.size() == 3) {
      const Wave w = to_wave(parts[1], key);
      if (parts[2] == "total") {
        d.grand_rel_se[w] = to_double(value, key);
      } else {
        level_index(lv[1], parts[2], key);
        d.nace_rel_se[w][parts[2]] = to_double(value, key);
      }
    } else if (head == "totals_scale" && parts.size() == 1) {
      d.totals_scale = to_double(value, key);
    } else if (head == "emit_cross" && parts.size() == 1) {
      d.emit_cross = value == "true" || value == "1";
    } else {
      fail(ErrorCode::Config, "unknown design key '" + key + "'");
    }
  }
  normalize(d.occupation_share, "occupation");
  normalize(d.province_share, "province");
  normalize(nace_share, "nace");
  for (std::size_t o = 0; o < lv[0].size(); ++o) {
    d.nace_given_occupation[o] = has_given[o] ? given[o] : nace_share;
    normalize(d.nace_given_occupation[o], "nace given occupation " + lv[0][o]);
  }
  d.validate();
  return d;
}

SyntheticDesign SyntheticDesign::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot read design " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void SyntheticDesign::validate() const {
  if (waves.empty()) fail(ErrorCode::Config, "design has no waves");
  for (Wave w : waves) {
    if (!population.count(w) || !sample_size.count(w)) {
      fail(ErrorCode::Config, "wave " + std::to_string(w) + " needs population and sample sizes");
    }
    if (sample_size.at(w) < 1) fail(ErrorCode::Config, "wave " + std::to_string(w) + " has an empty sample");
    auto m = missing_rate.find(w);
    if (m != missing_rate.end()) {
      for (double r : m->second) {
        if (!(r >= 0.0 && r < 1.0)) fail(ErrorCode::Config, "missing rates must lie in [0, 1)");
      }
    }
  }
  if (occupation_share.size() != levels[0].size() || nace_given_occupation.size() != levels[0].size() ||
      province_share.size() != levels[2].size()) {
    fail(ErrorCode::Config, "share vectors do not match the levels");
  }
  for (const auto& row : nace_given_occupation) {
    if (row.size() != levels[1].size()) fail(ErrorCode::Config, "nace conditional has the wrong length");
  }
  if (skill_intercept.size() != catalog.size() || skill_effect.size() != catalog.size()) {
    fail(ErrorCode::Config, "skill model does not match the catalog");
  }
  if (!(oversample >= 1.0)) fail(ErrorCode::Config, "oversample must be at least 1");
  if (!(totals_scale > 0.0)) fail(ErrorCode::Config, "totals_scale must be positive");
}

namespace {

struct CellGrid {
  std::size_t no, nn, np;
  std::vector<double> cumulative;

  explicit CellGrid(const SyntheticDesign& d)
      : no(d.levels[0].size()), nn(d.levels[1].size()), np(d.levels[2].size()) {
    cumulative.reserve(no * nn * np);
    double acc = 0.0;
    for (std::size_t o = 0; o < no; ++o) {
      for (std::size_t n = 0; n < nn; ++n) {
        for (std::size_t p = 0; p < np; ++p) {
          acc += d.occupation_share[o] * d.nace_given_occupation[o][n] * d.province_share[p];
          cumulative.push_back(acc);
        }
      }
    }
    for (double& c : cumulative) c /= acc;
  }

  std::uint32_t draw(std::mt19937_64& rng) const {
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return static_cast<std::uint32_t>(std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1));
  }
  std::array<std::size_t, 3> split(std::uint32_t cell) const {
    return {cell / (nn * np), (cell / np) % nn, cell % np};
  }
};

double cell_logit(const std::array<std::vector<double>, kCovariateCount>& effect, const std::array<std::size_t, 3>& c) {
  return effect[0][c[0]] + effect[1][c[1]] + effect[2][c[2]];
}

// Intercept a with sum_c count_c * sigmoid(a + s_c) = target.
double solve_selection_intercept(const std::vector<double>& counts, const std::vector<double>& logits, double target) {
  auto expected = [&](double a) {
    double sum = 0.0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] > 0.0) sum += counts[c] * inverse_logit(a + logits[c]);
    }
    return sum;
  };
  double lo = -60.0, hi = 60.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SimulationOutput generate(const SyntheticDesign& design, std::uint64_t seed, const SimulateOptions& options) {
  design.validate();
  const CellGrid grid(design);
  const std::size_t cells = design.cell_count();
  const std::size_t k_skills = design.catalog.size();

  SimulationOutput out;
  out.sample.catalog = design.catalog;
  for (Covariate c : kAllCovariates) out.sample.dictionaries[covariate_slot(c)] = CategoryDictionary(design.levels[covariate_slot(c)]);

  // Per-cell skill probabilities and selection logits.
  std::vector<std::vector<double>> skill_p(cells, std::vector<double>(k_skills));
  std::vector<double> sel_logit(cells);
  for (std::uint32_t c = 0; c < cells; ++c) {
    const auto idx = grid.split(c);
    for (std::size_t k = 0; k < k_skills; ++k) {
      skill_p[c][k] = inverse_logit(design.skill_intercept[k] + cell_logit(design.skill_effect[k], idx));
    }
    sel_logit[c] = cell_logit(design.selection_effect, idx);
  }

  std::vector<Wave> waves = design.waves;
  std::sort(waves.begin(), waves.end());
  for (std::size_t t = 0; t < waves.size(); ++t) {
    const Wave w = waves[t];
    std::mt19937_64 rng = make_stream(seed, static_cast<std::uint64_t>(t));
    const std::size_t n_pop = design.population.at(w);
    const std::size_t target = design.sample_size.at(w);
    if (target > n_pop) {
      fail(ErrorCode::InfeasibleDesign, "wave " + std::to_string(w) + ": sample size exceeds the population");
    }

    std::vector<std::uint32_t> unit_cell(n_pop);
    std::vector<double> cell_count(cells, 0.0);
    for (auto& uc : unit_cell) {
      uc = grid.draw(rng);
      cell_count[uc] += 1.0;
    }

    const double wanted = std::min(static_cast<double>(n_pop), design.oversample * static_cast<double>(target));
    const double a = solve_selection_intercept(cell_count, sel_logit, wanted);
    std::vector<double> sel_p(cells);
    for (std::size_t c = 0; c < cells; ++c) sel_p[c] = inverse_logit(a + sel_logit[c]);

    std::vector<double> skill_count(k_skills, 0.0);
    std::vector<std::size_t> selected;
    std::vector<std::vector<std::uint8_t>> selected_skills;
    std::vector<std::uint8_t> skills(k_skills);
    for (std::size_t i = 0; i < n_pop; ++i) {
      const auto& p = skill_p[unit_cell[i]];
      for (std::size_t k = 0; k < k_skills; ++k) {
        skills[k] = uniform01(rng) < p[k] ? 1 : 0;
        skill_count[k] += skills[k];
      }
      if (uniform01(rng) < sel_p[unit_cell[i]]) {
        selected.push_back(i);
        selected_skills.push_back(skills);
      }
    }
    if (selected.size() < target) {
      fail(ErrorCode::InfeasibleDesign, "wave " + std::to_string(w) + ": only " + std::to_string(selected.size()) +
                                            " units selected for a sample of " + std::to_string(target));
    }

    // Random truncation to the target, keeping population order.
    std::vector<std::size_t> order(selected.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);
    order.resize(target);
    std::sort(order.begin(), order.end());

    const auto missing = design.missing_rate.count(w) ? design.missing_rate.at(w) : std::array<double, 3>{0, 0, 0};
    for (std::size_t pos : order) {
      AdRecord rec;
      rec.wave = w;
      const auto idx = grid.split(unit_cell[selected[pos]]);
      for (std::size_t c = 0; c < kCovariateCount; ++c) {
        rec.covariates[c] = uniform01(rng) < missing[c] ? kMissing : static_cast<CategoryIndex>(idx[c]);
      }
      rec.skills = std::move(selected_skills[pos]);
      out.sample.records.push_back(std::move(rec));
    }

    for (std::size_t k = 0; k < k_skills; ++k) {
      out.truth.true_prevalence[{design.catalog.names[k], w}] = skill_count[k] / static_cast<double>(n_pop);
    }

    // Exact totals of the realised population.
    TotalsTable tt;
    tt.wave = w;
    // Counts are integers; rounding to 1e-9 keeps scaled values short in CSV.
    const auto scale = [&](double count) { return std::round(design.totals_scale * count * 1e9) / 1e9; };
    tt.grand_total = scale(static_cast<double>(n_pop));
    if (design.grand_rel_se.count(w)) tt.grand_rel_se = design.grand_rel_se.at(w);
    std::array<std::vector<double>, kCovariateCount> marg;
    for (std::size_t c = 0; c < kCovariateCount; ++c) marg[c].assign(design.levels[c].size(), 0.0);
    std::vector<std::vector<double>> cross(grid.nn, std::vector<double>(grid.no, 0.0));
    for (std::uint32_t c = 0; c < cells; ++c) {
      if (cell_count[c] == 0.0) continue;
      const auto idx = grid.split(c);
      for (std::size_t j = 0; j < kCovariateCount; ++j) marg[j][idx[j]] += cell_count[c];
      cross[idx[1]][idx[0]] += cell_count[c];
    }
    for (Covariate c : kAllCovariates) {
      const auto s = covariate_slot(c);
      for (std::size_t j = 0; j < marg[s].size(); ++j) {
        if (marg[s][j] > 0.0) tt.marginal_totals[{c, design.levels[s][j]}] = scale(marg[s][j]);
      }
    }
    if (design.emit_cross) {
      for (std::size_t n = 0; n < grid.nn; ++n) {
        for (std::size_t o = 0; o < grid.no; ++o) {
          if (cross[n][o] > 0.0) tt.cross_totals[{design.levels[1][n], design.levels[0][o]}] = scale(cross[n][o]);
        }
      }
    }
    if (design.nace_rel_se.count(w)) {
      for (const auto& [code, se] : design.nace_rel_se.at(w)) {
        if (tt.marginal_totals.count({Covariate::nace, code})) tt.rel_se[{Covariate::nace, code}] = se;
      }
    }
    if (options.noisy_totals) tt = perturb_totals(tt, rng);
    tt.validate();
    out.totals.emplace(w, std::move(tt));
  }
  out.sample = canonical_dictionaries(out.sample);
  return out;
}

void save_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << "skill,wave,true_prevalence\n";
  for (const auto& [key, value] : truth.true_prevalence) {
    out << csv::escape(key.first) << ',' << key.second << ',' << csv::format_double(value) << '\n';
  }
}

GroundTruth load_truth(const std::filesystem::path& path) {
  const csv::Table table = csv::read_file(path);
  const long skill = table.column("skill"), wave = table.column("wave"), value = table.column("true_prevalence");
  if (skill < 0 || wave < 0 || value < 0) fail(ErrorCode::MissingColumn, path.string() + ": bad truth header");
  GroundTruth truth;
  for (const auto& row : table.rows) {
    truth.true_prevalence[{row.at(static_cast<std::size_t>(skill)), std::stoi(row.at(static_cast<std::size_t>(wave)))}] =
        std::stod(row.at(static_cast<std::size_t>(value)));
  }
  return truth;
}

}  // namespace skillcal

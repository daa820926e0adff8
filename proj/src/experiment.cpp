#include "pfsburst/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/random/normal_distribution.hpp>

#include "pfsburst/errors.hpp"

namespace pfs {

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(field) + ": must be positive");
  };
  if (layout.rings < 0) throw ConfigError("layout.rings: must be non-negative");
  positive(layout.inter_site_distance_m, "layout.inter_site_distance_m");
  if (users_per_cell < 1) throw ConfigError("users_per_cell: must be at least 1");
  if (!(min_distance_m >= 0.0)) throw ConfigError("min_distance_m: must be non-negative");
  if (!(shadowing_sigma_db >= 0.0)) throw ConfigError("shadowing_sigma_db: must be non-negative");
  if (!std::isfinite(tx_power_dbm)) throw ConfigError("tx_power_dbm: must be finite");
  if (!std::isfinite(noise_figure_db)) throw ConfigError("noise_figure_db: must be finite");
  positive(bandwidth_hz, "bandwidth_hz");
  positive(sinr_cap, "sinr_cap");
  if (!(traffic.alpha > 1.0)) throw ConfigError("traffic.alpha: must exceed 1");
  positive(traffic.beta, "traffic.beta");
  if (traffic.lambda_off) positive(*traffic.lambda_off, "traffic.lambda_off");
  if (!traffic.lambda_off && traffic.rho.empty()) throw ConfigError("traffic.rho: at least one load required");
  for (double rho : traffic.rho) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("traffic.rho: loads must lie in (0, 1]");
  }
  if (user_sweep.users_per_cell.empty()) throw ConfigError("user_sweep.users_per_cell: must be non-empty");
  for (int n : user_sweep.users_per_cell) {
    if (n < 1) throw ConfigError("user_sweep.users_per_cell: entries must be at least 1");
  }
  if (!(user_sweep.rho > 0.0 && user_sweep.rho <= 1.0)) {
    throw ConfigError("user_sweep.rho: must lie in (0, 1]");
  }
  try {
    scheduler.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("scheduler.") + (e.what() + std::string("scheduler: ").size()));
  }
  if (measure_tti < 1) throw ConfigError("measure_tti: must be positive");
  if (warmup_s && !(*warmup_s >= 0.0)) throw ConfigError("warmup_s: must be non-negative");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  if (threads < 0) throw ConfigError("threads: must be non-negative");
  if (!(min_distance_m < layout.inter_site_distance_m / 2.0)) {
    throw ConfigError("min_distance_m: must be below half the inter-site distance");
  }
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

const char* kind_name(SchedulerKind kind) {
  return kind == SchedulerKind::ProportionalFair ? "proportional_fair" : "round_robin";
}

const char* cold_start_name(ColdStart mode) {
  return mode == ColdStart::ResetPerSession ? "reset_per_session" : "persist";
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["layout"] = {{"rings", c.layout.rings},
                 {"inter_site_distance_m", c.layout.inter_site_distance_m},
                 {"wraparound", c.layout.wraparound}};
  j["users_per_cell"] = c.users_per_cell;
  j["min_distance_m"] = c.min_distance_m;
  j["shadowing_sigma_db"] = c.shadowing_sigma_db;
  j["tx_power_dbm"] = c.tx_power_dbm;
  j["noise_figure_db"] = c.noise_figure_db;
  j["rate_map"] = {{"bandwidth_hz", c.bandwidth_hz}, {"sinr_cap", c.sinr_cap}};
  j["traffic"] = {{"alpha", c.traffic.alpha}, {"beta_s", c.traffic.beta}, {"rho", c.traffic.rho}};
  j["traffic"]["lambda_off"] = c.traffic.lambda_off ? nlohmann::json(*c.traffic.lambda_off) : nlohmann::json();
  j["user_sweep"] = {{"users_per_cell", c.user_sweep.users_per_cell}, {"rho", c.user_sweep.rho}};
  j["scheduler"] = {{"kind", kind_name(c.scheduler.kind)},
                    {"pf_time_constant_tti", c.scheduler.pf_time_constant},
                    {"tti_s", c.scheduler.tti_duration},
                    {"cold_start", cold_start_name(c.scheduler.cold_start)}};
  j["measure_tti"] = c.measure_tti;
  j["warmup_s"] = c.warmup_s ? nlohmann::json(*c.warmup_s) : nlohmann::json();
  j["seeds"] = c.seeds;
  j["drop_seed"] = c.drop_seed;
  j["threads"] = c.threads;
  j["output_dir"] = c.output_dir;
  return j;
}

namespace {

// Typed field access with the dotted path in every diagnostic.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <typename T>
  void read_optional(const char* key, std::optional<T>& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T value{};
    read_value(key, value);
    out = value;
  }

  Fields child(const char* key) {
    seen_.push_back(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return Fields(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  std::string text(const char* key, const std::string& fallback) {
    std::string out = fallback;
    read(key, out);
    return out;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), item.key()) == seen_.end()) {
        throw ConfigError(where(item.key().c_str()) + ": unknown field");
      }
    }
  }

  std::string where(const char* key) const {
    if (path_.empty()) return key;
    if (*key == '\0') return path_;
    return path_ + "." + key;
  }

 private:
  template <typename T>
  void read_value(const char* key, T& out) {
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const nlohmann::json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = default_config();
  Fields root(j, "");
  {
    Fields f = root.child("layout");
    f.read("rings", c.layout.rings);
    f.read("inter_site_distance_m", c.layout.inter_site_distance_m);
    f.read("wraparound", c.layout.wraparound);
    f.finish();
  }
  root.read("users_per_cell", c.users_per_cell);
  root.read("min_distance_m", c.min_distance_m);
  root.read("shadowing_sigma_db", c.shadowing_sigma_db);
  root.read("tx_power_dbm", c.tx_power_dbm);
  root.read("noise_figure_db", c.noise_figure_db);
  {
    Fields f = root.child("rate_map");
    f.read("bandwidth_hz", c.bandwidth_hz);
    f.read("sinr_cap", c.sinr_cap);
    f.finish();
  }
  {
    Fields f = root.child("traffic");
    f.read("alpha", c.traffic.alpha);
    f.read("beta_s", c.traffic.beta);
    f.read("rho", c.traffic.rho);
    f.read_optional("lambda_off", c.traffic.lambda_off);
    f.finish();
  }
  {
    Fields f = root.child("user_sweep");
    f.read("users_per_cell", c.user_sweep.users_per_cell);
    f.read("rho", c.user_sweep.rho);
    f.finish();
  }
  {
    Fields f = root.child("scheduler");
    const std::string kind = f.text("kind", kind_name(c.scheduler.kind));
    if (kind == "proportional_fair") {
      c.scheduler.kind = SchedulerKind::ProportionalFair;
    } else if (kind == "round_robin") {
      c.scheduler.kind = SchedulerKind::RoundRobin;
    } else {
      throw ConfigError(f.where("kind") + ": expected proportional_fair or round_robin");
    }
    f.read("pf_time_constant_tti", c.scheduler.pf_time_constant);
    f.read("tti_s", c.scheduler.tti_duration);
    const std::string cold = f.text("cold_start", cold_start_name(c.scheduler.cold_start));
    if (cold == "reset_per_session") {
      c.scheduler.cold_start = ColdStart::ResetPerSession;
    } else if (cold == "persist") {
      c.scheduler.cold_start = ColdStart::Persist;
    } else {
      throw ConfigError(f.where("cold_start") + ": expected reset_per_session or persist");
    }
    f.finish();
  }
  root.read("measure_tti", c.measure_tti);
  root.read_optional("warmup_s", c.warmup_s);
  root.read("seeds", c.seeds);
  root.read("drop_seed", c.drop_seed);
  root.read("threads", c.threads);
  root.read("output_dir", c.output_dir);
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t offset = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n');
    const auto last_newline = text.rfind('\n', offset > 0 ? offset - 1 : 0);
    const std::size_t column =
        last_newline == std::string::npos || offset == 0 ? offset + 1 : offset - last_newline;
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(column) +
                      ": syntax error: " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

RateMap rate_map(const ExperimentConfig& config) {
  return RateMap::make(config.bandwidth_hz, config.sinr_cap);
}

double noise_power_w(const ExperimentConfig& config) {
  const double dbm = -174.0 + 10.0 * std::log10(config.bandwidth_hz) + config.noise_figure_db;
  return dbm_to_watt(dbm);
}

// ---------------------------------------------------------------------------
// Drops and estimates

namespace {

enum DropPurpose : std::uint32_t { kDropPosition = 11 };

template <typename Fn>
void parallel_for(std::size_t jobs, int threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(
      jobs, threads > 0 ? static_cast<std::size_t>(threads)
                        : std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

Drop make_drop(const ExperimentConfig& config, int users_per_cell, std::uint64_t drop_seed) {
  Drop drop{CellLayout::hexagonal(config.layout.rings, config.layout.inter_site_distance_m,
                                  config.layout.wraparound),
            rate_map(config), {}};
  const double tx = dbm_to_watt(config.tx_power_dbm);
  const double noise = noise_power_w(config);
  const std::size_t sites = drop.layout.size();
  drop.links.resize(sites);
  boost::random::normal_distribution<double> shadow(0.0, config.shadowing_sigma_db);
  for (std::size_t b = 0; b < sites; ++b) {
    for (int u = 0; u < users_per_cell; ++u) {
      Rng rng = make_stream(drop_seed, {static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(u),
                                        kDropPosition});
      const Eigen::Vector2d position = drop.layout.drop_user(b, config.min_distance_m, rng);
      double serving_gain = 0.0;
      Eigen::VectorXd interferers(static_cast<Eigen::Index>(sites - 1));
      Eigen::Index k = 0;
      for (std::size_t j = 0; j < sites; ++j) {
        const double gain = large_scale_gain(drop.layout.distance(position, j), shadow(rng));
        if (j == b) {
          serving_gain = gain;
        } else {
          interferers[k++] = tx * gain;
        }
      }
      drop.links[b].push_back(LinkBudget::make(tx, serving_gain, std::move(interferers), noise));
    }
  }
  return drop;
}

Scenario make_scenario(const Drop& drop, const ExperimentConfig& config, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("make_scenario: load must lie in (0, 1]");
  std::optional<OnOffConfig> traffic;
  if (rho < 1.0) {
    traffic = OnOffConfig{config.traffic.alpha, config.traffic.beta,
                          lambda_for_load(config.traffic.alpha, config.traffic.beta, rho)};
  }
  Scenario scenario{drop.map, {}};
  for (const auto& cell : drop.links) {
    SimCell sim_cell;
    for (const auto& link : cell) sim_cell.users.push_back(SimUser{link, traffic});
    scenario.cells.push_back(std::move(sim_cell));
  }
  return scenario;
}

std::vector<CellUserSet> make_cell_sets(const Drop& drop, double rho) {
  std::vector<CellUserSet> sets;
  for (const auto& cell : drop.links) {
    std::vector<CellUser> users;
    for (const auto& link : cell) {
      const auto model = SinrModeld::from_link(link);
      users.push_back(CellUser{rate_stats(model, drop.map), model});
    }
    sets.emplace_back(std::move(users), rho, drop.map);
  }
  return sets;
}

DropEstimates estimate_drop(const Drop& drop, const MiaOptions& opts) {
  DropEstimates out;
  out.cells = make_cell_sets(drop, 1.0);
  out.mia.resize(out.cells.size());
  parallel_for(out.cells.size(), 0, [&](std::size_t c) { out.mia[c] = mia_saturated_rates(out.cells[c], opts); });
  return out;
}

EstimateReport estimate_at_load(const DropEstimates& drop, double rho) {
  std::vector<EstimateReport> per_cell;
  Eigen::Index total = 0;
  for (std::size_t c = 0; c < drop.cells.size(); ++c) {
    per_cell.push_back(estimate(drop.cells[c].with_load(rho), drop.mia[c]));
    total += per_cell.back().rr_rate.size();
  }
  EstimateReport out;
  auto concat = [&](Eigen::VectorXd EstimateReport::*field) {
    Eigen::VectorXd v(total);
    Eigen::Index offset = 0;
    for (const auto& rep : per_cell) {
      const Eigen::VectorXd& part = rep.*field;
      v.segment(offset, part.size()) = part;
      offset += part.size();
    }
    out.*field = v;
  };
  concat(&EstimateReport::rr_rate);
  concat(&EstimateReport::ga_rate);
  concat(&EstimateReport::ga_gain);
  concat(&EstimateReport::mia_sat_rate);
  concat(&EstimateReport::mia_gain);
  concat(&EstimateReport::ha_gain);
  concat(&EstimateReport::ha_rate);
  return out;
}

RunLength run_length(const ExperimentConfig& config, double rho) {
  double warmup_s = 0.0;
  if (config.warmup_s) {
    warmup_s = *config.warmup_s;
  } else if (rho < 1.0) {
    const OnOffConfig traffic{config.traffic.alpha, config.traffic.beta,
                              lambda_for_load(config.traffic.alpha, config.traffic.beta, rho)};
    warmup_s = 10.0 * (mean_on(traffic) + mean_off(traffic));
  }
  const auto warmup_tti = static_cast<long long>(std::ceil(warmup_s / config.scheduler.tti_duration));
  return {warmup_tti + config.measure_tti, warmup_tti};
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

double estimator_rate(const DetailRow& row, int e) {
  switch (e) {
    case 0: return row.rr_rate;
    case 1: return row.ga_rate;
    case 2: return row.mia_rate;
    default: return row.ha_rate;
  }
}

std::vector<DetailRow> detail_rows(double sweep_value, double rho, int users_per_cell,
                                   const SimReport& sim, const EstimateReport& est) {
  std::vector<DetailRow> rows;
  rows.reserve(sim.users.size());
  for (std::size_t i = 0; i < sim.users.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const UserSimStats& s = sim.users[i];
    DetailRow row;
    row.sweep_value = sweep_value;
    row.rho = rho;
    row.users_per_cell = users_per_cell;
    row.seed = sim.seed;
    row.cell = s.cell;
    row.user = s.index;
    row.sim_rate = s.mean_rate;
    row.sim_rate_normalized = s.load_normalized_rate;
    row.active_share = s.active_share;
    row.scheduled_share = s.scheduled_share;
    row.rr_rate = est.rr_rate[k];
    row.ga_rate = est.ga_rate[k];
    // At rho < 1 the saturated MIA rate is scaled to the load like RR.
    row.mia_rate = est.mia_gain[k] * est.rr_rate[k];
    row.ha_rate = est.ha_rate[k];
    rows.push_back(row);
  }
  return rows;
}

struct SweepPoint {
  double sweep_value;
  double rho;
  int users_per_cell;
  const Drop* drop;
  const DropEstimates* estimates;
};

SweepResult run_points(const ExperimentConfig& config, const std::vector<SweepPoint>& points) {
  const std::size_t seeds = config.seeds.size();
  std::vector<Scenario> scenarios;
  std::vector<EstimateReport> reports;
  for (const auto& p : points) {
    scenarios.push_back(make_scenario(*p.drop, config, p.rho));
    reports.push_back(estimate_at_load(*p.estimates, p.rho));
  }
  std::vector<std::vector<DetailRow>> blocks(points.size() * seeds);
  parallel_for(blocks.size(), config.threads, [&](std::size_t job) {
    const std::size_t p = job / seeds;
    const std::uint64_t seed = config.seeds[job % seeds];
    const SimReport sim = run(scenarios[p], config.scheduler, run_length(config, points[p].rho), seed);
    blocks[job] = detail_rows(points[p].sweep_value, points[p].rho, points[p].users_per_cell, sim, reports[p]);
  });
  SweepResult result;
  for (std::size_t p = 0; p < points.size(); ++p) {
    std::vector<DetailRow> rows;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto& block = blocks[p * seeds + s];
      rows.insert(rows.end(), block.begin(), block.end());
    }
    result.summary.push_back(summarize(rows));
    result.details.push_back(std::move(rows));
  }
  return result;
}

}  // namespace

SummaryRow summarize(const std::vector<DetailRow>& rows) {
  SummaryRow out;
  if (rows.empty()) return out;
  out.sweep_value = rows.front().sweep_value;
  out.rho = rows.front().rho;
  out.users_per_cell = rows.front().users_per_cell;
  out.rows = rows.size();
  std::vector<std::uint64_t> seeds;
  double duty = 0.0;
  for (const auto& row : rows) {
    if (std::find(seeds.begin(), seeds.end(), row.seed) == seeds.end()) seeds.push_back(row.seed);
    duty += row.active_share;
    if (!(row.sim_rate_normalized > 0.0)) ++out.excluded;
  }
  out.seeds = seeds.size();
  out.measured_duty_cycle = duty / static_cast<double>(rows.size());

  // Per user across seeds: configured load x delivered bits / active time.
  // Every seed measures the same window, so shares and rates pool directly.
  struct Pool {
    double rate = 0.0;
    double active = 0.0;
  };
  std::map<std::pair<std::size_t, std::size_t>, Pool> pooled;
  std::vector<std::pair<std::size_t, std::size_t>> order;
  for (const auto& row : rows) {
    auto key = std::make_pair(row.cell, row.user);
    auto [it, inserted] = pooled.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.rate += row.sim_rate;
    it->second.active += row.active_share;
  }

  for (int e = 0; e < 4; ++e) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::VectorXd sim(n), raw(n), est(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = rows[static_cast<std::size_t>(i)];
      sim[i] = row.sim_rate_normalized;
      raw[i] = row.sim_rate;
      est[i] = estimator_rate(row, e);
    }
    const RateErrors per_row = measure_error(sim, est);
    const RateErrors time_avg = measure_error(raw, est);

    std::map<std::pair<std::size_t, std::size_t>, double> user_est;
    for (const auto& row : rows) user_est.try_emplace({row.cell, row.user}, estimator_rate(row, e));
    Eigen::VectorXd pooled_sim(static_cast<Eigen::Index>(order.size()));
    Eigen::VectorXd pooled_est(static_cast<Eigen::Index>(order.size()));
    for (std::size_t k = 0; k < order.size(); ++k) {
      const Pool& acc = pooled.at(order[k]);
      pooled_sim[static_cast<Eigen::Index>(k)] = acc.active > 0.0 ? out.rho * acc.rate / acc.active : 0.0;
      pooled_est[static_cast<Eigen::Index>(k)] = user_est.at(order[k]);
    }
    const RateErrors pooled_err = measure_error(pooled_sim, pooled_est);

    // Cell aggregate: summed estimate against summed simulated rate per
    // (seed, cell).
    std::map<std::pair<std::uint64_t, std::size_t>, std::pair<double, double>> cells;
    for (const auto& row : rows) {
      auto& acc = cells[{row.seed, row.cell}];
      acc.first += row.sim_rate_normalized;
      acc.second += estimator_rate(row, e);
    }
    Eigen::VectorXd cell_sim(static_cast<Eigen::Index>(cells.size()));
    Eigen::VectorXd cell_est(static_cast<Eigen::Index>(cells.size()));
    Eigen::Index k = 0;
    for (const auto& [key, acc] : cells) {
      cell_sim[k] = acc.first;
      cell_est[k++] = acc.second;
    }
    const RateErrors cell_err = measure_error(cell_sim, cell_est);

    out.est[e] = EstimatorSummary{per_row.signed_mean, per_row.mean_abs, per_row.p05, per_row.p95,
                                  pooled_err.mean_abs, time_avg.mean_abs, cell_err.mean_abs};
  }
  return out;
}

SweepResult run_sweep(const ExperimentConfig& config) {
  config.validate();
  const Drop drop = make_drop(config, config.users_per_cell, config.drop_seed);
  const DropEstimates estimates = estimate_drop(drop);
  std::vector<double> loads = config.traffic.rho;
  if (config.traffic.lambda_off) {
    loads = {duty_cycle(OnOffConfig{config.traffic.alpha, config.traffic.beta, *config.traffic.lambda_off})};
  }
  std::vector<SweepPoint> points;
  for (double rho : loads) points.push_back({rho, rho, config.users_per_cell, &drop, &estimates});
  return run_points(config, points);
}

SweepResult run_user_sweep(const ExperimentConfig& config) {
  config.validate();
  std::vector<Drop> drops;
  std::vector<DropEstimates> estimates;
  drops.reserve(config.user_sweep.users_per_cell.size());
  estimates.reserve(config.user_sweep.users_per_cell.size());
  for (int n : config.user_sweep.users_per_cell) {
    drops.push_back(make_drop(config, n, config.drop_seed));
    estimates.push_back(estimate_drop(drops.back()));
  }
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < drops.size(); ++i) {
    const int n = config.user_sweep.users_per_cell[i];
    points.push_back({static_cast<double>(n), config.user_sweep.rho, n, &drops[i], &estimates[i]});
  }
  return run_points(config, points);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ConfigError("csv: not a number: '" + s + "'");
  return v;
}

const char* kDetailHeader =
    "sweep_value,rho,users_per_cell,seed,cell,user,sim_rate,sim_rate_normalized,active_share,"
    "scheduled_share,rr_rate,ga_rate,mia_rate,ha_rate,err_rr,err_ga,err_mia,err_ha";

std::string summary_header() {
  std::string h = "sweep_value,rho,users_per_cell,seeds,rows,excluded,measured_duty_cycle";
  for (const char* e : kEstimatorNames) {
    for (const char* m : {"signed_mean", "mean_abs", "p05", "p95", "pooled_mean_abs", "time_avg_mean_abs",
                          "cell_mean_abs"}) {
      h += std::string(",") + e + "_" + m;
    }
  }
  return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::string& header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::getline(in, header);
  return in;
}

}  // namespace

void write_detail_csv(const std::filesystem::path& path, const std::vector<DetailRow>& rows) {
  auto out = open_out(path);
  out << kDetailHeader << '\n';
  for (const auto& r : rows) {
    auto err = [&](int e) {
      return r.sim_rate_normalized > 0.0
                 ? fmt_double((estimator_rate(r, e) - r.sim_rate_normalized) / r.sim_rate_normalized)
                 : std::string("nan");
    };
    out << fmt_double(r.sweep_value) << ',' << fmt_double(r.rho) << ',' << r.users_per_cell << ','
        << r.seed << ',' << r.cell << ',' << r.user << ',' << fmt_double(r.sim_rate) << ','
        << fmt_double(r.sim_rate_normalized) << ',' << fmt_double(r.active_share) << ','
        << fmt_double(r.scheduled_share) << ',' << fmt_double(r.rr_rate) << ','
        << fmt_double(r.ga_rate) << ',' << fmt_double(r.mia_rate) << ',' << fmt_double(r.ha_rate)
        << ',' << err(0) << ',' << err(1) << ',' << err(2) << ',' << err(3) << '\n';
  }
}

std::vector<DetailRow> read_detail_csv(const std::filesystem::path& path) {
  std::string header;
  auto in = open_in(path, header);
  if (header != kDetailHeader) throw ConfigError(path.string() + ": unexpected detail header");
  std::vector<DetailRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 18) throw ConfigError(path.string() + ": wrong field count");
    DetailRow r;
    r.sweep_value = parse_double(f[0]);
    r.rho = parse_double(f[1]);
    r.users_per_cell = std::stoi(f[2]);
    r.seed = std::stoull(f[3]);
    r.cell = std::stoull(f[4]);
    r.user = std::stoull(f[5]);
    r.sim_rate = parse_double(f[6]);
    r.sim_rate_normalized = parse_double(f[7]);
    r.active_share = parse_double(f[8]);
    r.scheduled_share = parse_double(f[9]);
    r.rr_rate = parse_double(f[10]);
    r.ga_rate = parse_double(f[11]);
    r.mia_rate = parse_double(f[12]);
    r.ha_rate = parse_double(f[13]);
    rows.push_back(r);
  }
  return rows;
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  out << summary_header() << '\n';
  for (const auto& r : rows) {
    out << fmt_double(r.sweep_value) << ',' << fmt_double(r.rho) << ',' << r.users_per_cell << ','
        << r.seeds << ',' << r.rows << ',' << r.excluded << ',' << fmt_double(r.measured_duty_cycle);
    for (const auto& e : r.est) {
      out << ',' << fmt_double(e.signed_mean) << ',' << fmt_double(e.mean_abs) << ','
          << fmt_double(e.p05) << ',' << fmt_double(e.p95) << ',' << fmt_double(e.pooled_mean_abs)
          << ',' << fmt_double(e.time_avg_mean_abs) << ',' << fmt_double(e.cell_mean_abs);
    }
    out << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::string header;
  auto in = open_in(path, header);
  if (header != summary_header()) throw ConfigError(path.string() + ": unexpected summary header");
  std::vector<SummaryRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7 + 4 * 7) throw ConfigError(path.string() + ": wrong field count");
    SummaryRow r;
    r.sweep_value = parse_double(f[0]);
    r.rho = parse_double(f[1]);
    r.users_per_cell = std::stoi(f[2]);
    r.seeds = std::stoull(f[3]);
    r.rows = std::stoull(f[4]);
    r.excluded = std::stoull(f[5]);
    r.measured_duty_cycle = parse_double(f[6]);
    for (int e = 0; e < 4; ++e) {
      const std::size_t b = 7 + 7 * static_cast<std::size_t>(e);
      r.est[e] = EstimatorSummary{parse_double(f[b]),     parse_double(f[b + 1]), parse_double(f[b + 2]),
                                  parse_double(f[b + 3]), parse_double(f[b + 4]), parse_double(f[b + 5]),
                                  parse_double(f[b + 6])};
    }
    rows.push_back(r);
  }
  return rows;
}

void write_outputs(const std::filesystem::path& dir, const std::string& kind,
                   const ExperimentConfig& config, const SweepResult& result) {
  std::filesystem::create_directories(dir);
  const char* key = kind == "user-sweep" ? "users" : "rho";
  for (std::size_t p = 0; p < result.details.size(); ++p) {
    char name[64];
    std::snprintf(name, sizeof name, "detail_%s_%g.csv", key, result.summary[p].sweep_value);
    write_detail_csv(dir / name, result.details[p]);
  }
  write_summary_csv(dir / "summary.csv", result.summary);
  nlohmann::json sidecar;
  sidecar["csv_schema"] = kCsvSchema;
  sidecar["command"] = kind;
  sidecar["config"] = to_json(config);
  auto out = open_out(dir / "effective_config.json");
  out << sidecar.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Validation

namespace {

template <typename Fn>
CheckResult check(const std::string& name, Fn&& fn) {
  try {
    std::string detail;
    const bool ok = fn(detail);
    return {name, ok ? "pass" : "fail", detail};
  } catch (const NumericalError& e) {
    return {name, "tolerance-miss", e.what()};
  } catch (const std::exception& e) {
    return {name, "fail", e.what()};
  }
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace

std::vector<CheckResult> validate_estimators(const ExperimentConfig& config,
                                             const ValidateOptions& options) {
  config.validate();
  std::vector<CheckResult> results;
  const QuadratureOptions quad{0.0, options.quadrature_rel_tol, 4000};

  results.push_back(check("order_statistics", [&](std::string& detail) {
    const double l2 = gaussian_max_expectation(2);
    const double l3 = gaussian_max_expectation(3);
    const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
    double worst = 0.0;
    bool increasing = true;
    for (int n = 1; n <= 64; ++n) {
      worst = std::max(worst, std::abs(l_mixture(n, 1.0) - gaussian_max_expectation(n)));
      if (n > 1 && !(gaussian_max_expectation(n) > gaussian_max_expectation(n - 1))) increasing = false;
    }
    const double e2 = std::abs(l2 - inv_sqrt_pi);
    const double e3 = std::abs(l3 - 1.5 * inv_sqrt_pi);
    detail = "L(2) err " + num(e2) + ", L(3) err " + num(e3) + ", l(N,1)-L(N) max " + num(worst);
    return gaussian_max_expectation(1) == 0.0 && e2 <= 1e-6 && e3 <= 1e-6 && worst <= 1e-12 && increasing;
  }));

  const Drop drop = make_drop(config, std::min(config.users_per_cell, 12), config.drop_seed);
  const RateMap map = drop.map;
  std::vector<CellUser> users;
  for (const auto& link : drop.links.front()) {
    const auto model = SinrModeld::from_link(link);
    users.push_back(CellUser{rate_stats(model, map), model});
  }

  results.push_back(check("burst_sum_equivalence", [&](std::string& detail) {
    Rng rng = make_stream(config.drop_seed, {0xE0u});
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int n = 1 + static_cast<int>(uniform_open0(rng) * 12.0 - 1e-12);
      const double rho = 0.1 * std::ceil(uniform_open0(rng) * 10.0);
      std::vector<CellUser> cell;
      for (int u = 0; u < n; ++u) {
        const auto& base = users[static_cast<std::size_t>(u) % users.size()];
        cell.push_back(CellUser{{base.stats.mean_rate * (0.5 + uniform_open0(rng)),
                                 base.stats.std_rate * (0.5 + uniform_open0(rng))},
                                std::nullopt});
      }
      const CellUserSet set(cell, rho, map);
      std::vector<CellUser> perturbed = cell;
      for (auto& user : perturbed) user.stats.std_rate *= 1.0 + options.sigma_perturbation;
      const CellUserSet oracle_set(perturbed, rho, map);
      const SubsetGain gain = ga_subset_gain(oracle_set);
      for (std::size_t u = 0; u < set.size(); ++u) {
        const double closed = ga_rate(set, u);
        const double exact = exact_burst_rate(oracle_set, u, gain);
        worst = std::max(worst, std::abs(exact - closed) / closed);
      }
    }
    detail = "max relative difference " + num(worst);
    return worst <= 1e-10;
  }));

  results.push_back(check("ga_gain_identities", [&](std::string& detail) {
    double worst = 0.0;
    bool at_least_one = true;
    for (double rho : {0.1, 0.25, 0.5, 0.75, 1.0}) {
      const CellUserSet set(users, rho, map);
      for (std::size_t u = 0; u < set.size(); ++u) {
        const double g = ga_gain(set, u);
        if (!(g >= 1.0)) at_least_one = false;
        worst = std::max(worst, std::abs(g * rr_rate(set, u) - ga_rate(set, u)) / ga_rate(set, u));
      }
    }
    detail = "max |g*RR - GA| / GA " + num(worst);
    return at_least_one && worst <= 1e-12;
  }));

  results.push_back(check("sinr_pdf_normalization", [&](std::string& detail) {
    double worst = 0.0;
    for (const auto& user : users) {
      const auto& model = *user.sinr;
      auto f = [&](double phi) { return phi > 0.0 ? sinr_pdf(model, phi) : 0.0; };
      const double total = integrate_mapped<double>(f, 0.0, std::numeric_limits<double>::infinity(), quad).value;
      worst = std::max(worst, std::abs(total - 1.0));
    }
    detail = "max |integral - 1| " + num(worst);
    return worst <= 1e-8;
  }));

  results.push_back(check("cdf_pdf_consistency", [&](std::string& detail) {
    Rng rng = make_stream(config.drop_seed, {0xE1u});
    double worst = 0.0;
    for (const auto& user : users) {
      const auto& model = *user.sinr;
      for (int k = 0; k < 5; ++k) {
        const double a = std::pow(10.0, -3.0 + 6.0 * uniform_open0(rng));
        const double b = a * (1.0 + 10.0 * uniform_open0(rng));
        auto f = [&](double phi) { return sinr_pdf(model, phi); };
        const double integral = integrate<double>(f, a, b, quad).value;
        worst = std::max(worst, std::abs(sinr_cdf(model, b) - sinr_cdf(model, a) - integral));
      }
    }
    detail = "max |F(b) - F(a) - integral| " + num(worst);
    return worst <= 1e-8;
  }));

  const CellUserSet saturated(users, 1.0, map);
  std::optional<MiaSolution> mia;
  results.push_back(check("mia_fixed_point", [&](std::string& detail) {
    mia = mia_saturated_rates(saturated);
    detail = std::to_string(mia->iterations) + " sweeps, residual " + num(mia->max_residual);
    return mia->iterations < 500 && mia->max_residual < 1e-8;
  }));

  results.push_back(check("ha_limits", [&](std::string& detail) {
    if (!mia) throw NumericalError("ha_limits: no MIA solution", 0.0);
    double at_one = 0.0;
    double near_zero = 0.0;
    const CellUserSet low = saturated.with_load(1e-6);
    for (std::size_t u = 0; u < saturated.size(); ++u) {
      const double g = mia_gain(saturated, *mia, u);
      at_one = std::max(at_one, std::abs(ha_gain(saturated, u, g) - g));
      near_zero = std::max(near_zero, std::abs(ha_gain(low, u, g) - ga_gain(low, u)) / ga_gain(low, u));
    }
    detail = "|HA(1) - MIA| " + num(at_one) + ", |HA(1e-6) - GA| / GA " + num(near_zero);
    return at_one <= 1e-12 && near_zero <= 1e-4;
  }));

  results.push_back(check("mia_scale_equivariance", [&](std::string& detail) {
    if (!mia) throw NumericalError("mia_scale_equivariance: no MIA solution", 0.0);
    const double c = 3.0;
    const RateMap scaled_map = RateMap::make(map.bandwidth * c, map.sinr_cap);
    std::vector<CellUser> scaled_users = users;
    for (auto& user : scaled_users) user.stats = rate_stats(*user.sinr, scaled_map);
    const CellUserSet scaled(scaled_users, 1.0, scaled_map);
    const MiaSolution other = mia_saturated_rates(scaled);
    double worst_rate = 0.0;
    double worst_gain = 0.0;
    for (std::size_t u = 0; u < saturated.size(); ++u) {
      const auto i = static_cast<Eigen::Index>(u);
      worst_rate = std::max(worst_rate, std::abs(other.rates[i] / (c * mia->rates[i]) - 1.0));
      worst_gain = std::max(worst_gain, std::abs(mia_gain(scaled, other, u) - mia_gain(saturated, *mia, u)));
    }
    detail = "rate scaling err " + num(worst_rate) + ", gain diff " + num(worst_gain);
    return worst_rate <= 1e-7 && worst_gain <= 1e-7;
  }));

  return results;
}

}  // namespace pfs

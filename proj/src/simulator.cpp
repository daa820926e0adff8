#include "pfsburst/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "pfsburst/errors.hpp"

namespace pfs {

void SchedulerConfig::validate() const {
  if (!(pf_time_constant >= 2.0)) throw ConfigError("scheduler: pf_time_constant must be >= 2 TTIs");
  if (!(tti_duration > 0.0)) throw ConfigError("scheduler: tti_duration must be positive");
}

std::size_t Scenario::user_count() const {
  std::size_t n = 0;
  for (const auto& cell : cells) n += cell.users.size();
  return n;
}

Eigen::VectorXd SimReport::mean_rates() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(users.size()));
  for (std::size_t i = 0; i < users.size(); ++i) out[static_cast<Eigen::Index>(i)] = users[i].mean_rate;
  return out;
}

Eigen::VectorXd SimReport::load_normalized_rates() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(users.size()));
  for (std::size_t i = 0; i < users.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = users[i].load_normalized_rate;
  }
  return out;
}

namespace {

enum StreamPurpose : std::uint32_t { kTraffic = 1, kFading = 2, kTieBreak = 3 };
constexpr std::uint32_t kCellStream = 0xFFFFFFFFu;

struct UserState {
  std::optional<OnOffProcess> process;
  Rng traffic_rng;
  double average = 0.0;
  bool needs_init = true;
  bool was_active = false;
  double rate = 0.0;
  double bits = 0.0;
  long long scheduled = 0;
  long long active = 0;
};

void run_cell(const Scenario& scenario, std::size_t c, const SchedulerConfig& scheduler,
              const RunLength& length, std::uint64_t seed, const TtiObserver& observer,
              SimReport& report) {
  const SimCell& cell = scenario.cells[c];
  const auto cell_id = static_cast<std::uint32_t>(c);
  const std::size_t n = cell.users.size();
  const double dt = scheduler.tti_duration;
  const double ewma = 1.0 / scheduler.pf_time_constant;
  const bool pf = scheduler.kind == SchedulerKind::ProportionalFair;
  const bool reset_per_session = scheduler.cold_start == ColdStart::ResetPerSession;
  const RateMap& map = scenario.map;

  Rng fading = make_stream(seed, {cell_id, kCellStream, kFading});
  Rng tie_rng = make_stream(seed, {cell_id, kCellStream, kTieBreak});

  std::vector<UserState> states;
  states.reserve(n);
  const double warmup_end = static_cast<double>(length.warmup_tti) * dt;
  for (std::size_t u = 0; u < n; ++u) {
    UserState state{std::nullopt, make_stream(seed, {cell_id, static_cast<std::uint32_t>(u), kTraffic})};
    if (const auto& traffic = cell.users[u].traffic) {
      state.process.emplace(*traffic, state.traffic_rng);
      state.process->advance_to(warmup_end, state.traffic_rng);
    }
    states.push_back(std::move(state));
  }

  CellSimStats cell_stats;
  std::vector<std::size_t> active;
  active.reserve(n);
  std::size_t rr_next = 0;

  for (long long tti = length.warmup_tti; tti < length.horizon_tti; ++tti) {
    const double t = static_cast<double>(tti) * dt;
    active.clear();
    for (std::size_t u = 0; u < n; ++u) {
      UserState& s = states[u];
      bool on = true;
      if (s.process) {
        s.process->advance_to(t, s.traffic_rng);
        on = s.process->is_on();
      }
      if (on) {
        if (!s.was_active && reset_per_session) s.needs_init = true;
        ++s.active;
        active.push_back(u);
      }
      s.was_active = on;
    }

    std::optional<std::size_t> chosen;
    double chosen_rate = 0.0;
    if (!active.empty()) {
      if (pf) {
        double best = -1.0;
        int ties = 0;
        for (std::size_t u : active) {
          UserState& s = states[u];
          s.rate = rate(map, sample_sinr(cell.users[u].link, fading));
          if (s.needs_init) {
            s.average = s.rate;
            s.needs_init = false;
          }
          const double metric =
              s.average > 0.0 ? s.rate / s.average : std::numeric_limits<double>::infinity();
          if (metric > best) {
            best = metric;
            chosen = u;
            ties = 1;
          } else if (metric == best) {
            ++ties;
            if (uniform_open0(tie_rng) * ties <= 1.0) chosen = u;
          }
        }
        for (std::size_t u : active) {
          UserState& s = states[u];
          s.average = (1.0 - ewma) * s.average + (u == *chosen ? ewma * s.rate : 0.0);
        }
        chosen_rate = states[*chosen].rate;
      } else {
        const auto next = std::lower_bound(active.begin(), active.end(), rr_next);
        chosen = next == active.end() ? active.front() : *next;
        rr_next = *chosen + 1;
        chosen_rate = rate(map, sample_sinr(cell.users[*chosen].link, fading));
      }
      UserState& winner = states[*chosen];
      winner.bits += chosen_rate * dt;
      ++winner.scheduled;
      cell_stats.served_rate_sum += chosen_rate;
    } else {
      ++cell_stats.idle_ttis;
    }

    if (observer) observer(TtiRecord{c, tti, chosen, chosen_rate, active.size()});
  }

  const long long measured = length.horizon_tti - length.warmup_tti;
  const double seconds = static_cast<double>(measured) * dt;
  for (std::size_t u = 0; u < n; ++u) {
    const UserState& s = states[u];
    UserSimStats stats;
    stats.cell = c;
    stats.index = u;
    stats.delivered_bits = s.bits;
    stats.scheduled_ttis = s.scheduled;
    stats.active_ttis = s.active;
    stats.mean_rate = s.bits / seconds;
    stats.scheduled_share = static_cast<double>(s.scheduled) / static_cast<double>(measured);
    stats.active_share = static_cast<double>(s.active) / static_cast<double>(measured);
    const double load = cell.users[u].traffic ? duty_cycle(*cell.users[u].traffic) : 1.0;
    stats.load_normalized_rate =
        s.active > 0 ? load * s.bits / (static_cast<double>(s.active) * dt) : 0.0;
    cell_stats.delivered_bits += s.bits;
    report.users.push_back(stats);
  }
  report.cells.push_back(cell_stats);
}

}  // namespace

SimReport run(const Scenario& scenario, const SchedulerConfig& scheduler, const RunLength& length,
              std::uint64_t seed, const TtiObserver& observer) {
  scheduler.validate();
  if (length.warmup_tti < 0) throw ConfigError("run: warm-up must be non-negative");
  if (length.horizon_tti <= length.warmup_tti) {
    throw ConfigError("run: horizon must exceed the warm-up");
  }
  for (const auto& cell : scenario.cells) {
    for (const auto& user : cell.users) {
      if (user.traffic) user.traffic->validate();
    }
  }

  SimReport report;
  report.seed = seed;
  report.warmup_tti = length.warmup_tti;
  report.measured_tti = length.horizon_tti - length.warmup_tti;
  report.tti_duration = scheduler.tti_duration;
  report.users.reserve(scenario.user_count());
  for (std::size_t c = 0; c < scenario.cells.size(); ++c) {
    run_cell(scenario, c, scheduler, length, seed, observer, report);
  }
  double share = 0.0;
  for (const auto& user : report.users) share += user.active_share;
  report.measured_duty_cycle = report.users.empty() ? 0.0 : share / static_cast<double>(report.users.size());
  return report;
}

double percentile(std::vector<double> values, double q) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RateErrors measure_error(const Eigen::VectorXd& simulated, const Eigen::VectorXd& estimated) {
  if (simulated.size() != estimated.size()) {
    throw DomainError("measure_error: simulated and estimated vectors differ in length");
  }
  RateErrors out;
  out.relative.resize(simulated.size());
  std::vector<double> kept;
  double sum = 0.0;
  double sum_abs = 0.0;
  for (Eigen::Index i = 0; i < simulated.size(); ++i) {
    if (!(simulated[i] > 0.0)) {
      out.relative[i] = std::numeric_limits<double>::quiet_NaN();
      ++out.excluded;
      continue;
    }
    const double e = (estimated[i] - simulated[i]) / simulated[i];
    out.relative[i] = e;
    kept.push_back(e);
    sum += e;
    sum_abs += std::abs(e);
  }
  if (kept.empty()) {
    out.signed_mean = out.mean_abs = out.p05 = out.p95 = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double count = static_cast<double>(kept.size());
  out.signed_mean = sum / count;
  out.mean_abs = sum_abs / count;
  out.p05 = percentile(kept, 0.05);
  out.p95 = percentile(kept, 0.95);
  return out;
}

RateErrors measure_error(const SimReport& sim, const Eigen::VectorXd& estimated, SimRate which) {
  return measure_error(which == SimRate::MeanRate ? sim.mean_rates() : sim.load_normalized_rates(),
                       estimated);
}

}  // namespace pfs

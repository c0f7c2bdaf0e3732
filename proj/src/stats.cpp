#include "evade/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include <boost/math/distributions/students_t.hpp>

#include "evade/csv.hpp"
#include "evade/errors.hpp"
#include "evade/rng.hpp"
#include "log.hpp"

namespace evade::stats {

double rmse(std::span<const double> estimates, std::span<const double> observed) {
  if (estimates.size() != observed.size())
    throw DataError("rmse: length mismatch (" + std::to_string(estimates.size()) + " vs " +
                    std::to_string(observed.size()) + ")");
  if (estimates.empty()) throw DataError("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = estimates[i] - observed[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(estimates.size()));
}

namespace {

std::vector<double> histogram(std::span<const double> xs, double lo, double hi, int bins) {
  std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
  const double width = hi - lo;
  for (double x : xs) {
    auto k = static_cast<long>(std::floor((x - lo) / width * bins));
    k = std::clamp(k, 0L, static_cast<long>(bins) - 1);
    h[static_cast<std::size_t>(k)] += 1.0;
  }
  for (double& v : h) v /= static_cast<double>(xs.size());
  return h;
}

double kl_to_mixture(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0) continue;
    const double m = 0.5 * (a[i] + b[i]);
    acc += a[i] * std::log(a[i] / m);
  }
  return acc;
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q, int bins) {
  if (p.empty() || q.empty()) throw DataError("jsd: empty sample");
  if (bins < 2) throw ConfigError("jsd: bins must be at least 2");
  const auto [pmin, pmax] = std::minmax_element(p.begin(), p.end());
  const auto [qmin, qmax] = std::minmax_element(q.begin(), q.end());
  const double lo = std::min(*pmin, *qmin);
  const double hi = std::max(*pmax, *qmax);
  if (!(hi > lo)) return 0.0;
  const auto hp = histogram(p, lo, hi, bins);
  const auto hq = histogram(q, lo, hi, bins);
  // Summing the two halves in a fixed order keeps jsd(p, q) == jsd(q, p).
  const double a = kl_to_mixture(hp, hq);
  const double b = kl_to_mixture(hq, hp);
  const double v = 0.5 * (std::min(a, b) + std::max(a, b));
  return std::clamp(v, 0.0, std::log(2.0));
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw DataError("pearson: at least 3 pairs required");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DataError("pearson: zero variance");
  Correlation c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(c.r) == 1.0) {
    c.p_value = 0.0;
  } else {
    const double dof = static_cast<double>(n - 2);
    const double t = c.r * std::sqrt(dof / (1.0 - c.r * c.r));
    const boost::math::students_t dist(dof);
    c.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  }
  return c;
}

std::optional<double> risk_rate(const SiteAggregate& s) {
  if (s.gps_count <= 0) return std::nullopt;
  return static_cast<double>(s.risk_count) / static_cast<double>(s.gps_count);
}

std::optional<double> crash_rate(const SiteAggregate& s) {
  if (!(s.aadt > 0.0)) return std::nullopt;
  return static_cast<double>(s.crash_count) / s.aadt;
}

std::optional<KindFilter> parse_kind_filter(std::string_view text) {
  if (text == "rear") return KindFilter::Rear;
  if (text == "side") return KindFilter::Side;
  if (text == "all") return KindFilter::All;
  return std::nullopt;
}

std::string_view to_string(KindFilter k) {
  switch (k) {
    case KindFilter::Rear: return "rear";
    case KindFilter::Side: return "side";
    case KindFilter::All: return "all";
  }
  return "all";
}

namespace {

bool kind_matches(ssm::ConflictKind kind, KindFilter filter) {
  switch (filter) {
    case KindFilter::Rear: return kind == ssm::ConflictKind::RearEnd;
    case KindFilter::Side: return kind == ssm::ConflictKind::Sideswipe;
    case KindFilter::All: return kind != ssm::ConflictKind::None;
  }
  return false;
}

std::int64_t crashes_for(const Site& s, KindFilter filter) {
  switch (filter) {
    case KindFilter::Rear: return s.rear_crashes;
    case KindFilter::Side: return s.sideswipe_crashes;
    case KindFilter::All: return s.rear_crashes + s.sideswipe_crashes;
  }
  return 0;
}

std::map<std::string, std::size_t, std::less<>> site_index(std::span<const Site> sites) {
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (!index.emplace(sites[i].segment_id, i).second)
      throw DataError("duplicate segment_id in sites: " + sites[i].segment_id);
  }
  return index;
}

}  // namespace

std::vector<SiteAggregate> aggregate(std::span<const RiskPoint> points, std::span<const Site> sites,
                                     KindFilter filter, double threshold) {
  const auto index = site_index(sites);
  std::vector<SiteAggregate> out(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    out[i].segment_id = sites[i].segment_id;
    out[i].aadt = sites[i].aadt;
    out[i].crash_count = crashes_for(sites[i], filter);
  }
  for (const auto& p : points) {
    const auto it = index.find(p.segment_id);
    if (it == index.end()) continue;
    SiteAggregate& agg = out[it->second];
    ++agg.gps_count;
    if (kind_matches(p.ttc.kind, filter) && ssm::classify_risk(p.ttc, threshold)) ++agg.risk_count;
  }
  return out;
}

std::vector<double> threshold_grid(double min, double max, double step) {
  if (!(step > 0.0)) throw ConfigError("threshold step must be positive");
  if (!(max >= min)) throw ConfigError("threshold max must not be below min");
  const auto n = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Snap to a 1e-9 lattice so 0.5 + 28 * 0.1 prints as 3.3.
    grid.push_back(std::round((min + static_cast<double>(k) * step) * 1e9) / 1e9);
  }
  return grid;
}

SweepResult threshold_sweep(std::span<const RiskPoint> points, std::span<const Site> sites,
                            KindFilter filter, std::span<const double> thresholds) {
  {
    std::size_t unknown = 0;
    const auto index = site_index(sites);
    for (const auto& p : points)
      if (!index.contains(p.segment_id)) ++unknown;
    if (unknown > 0)
      detail::log().warn("{} points reference segments missing from the site table", unknown);
    for (const auto& s : sites)
      if (!(s.aadt > 0.0)) detail::log().warn("segment {} excluded: AADT not positive", s.segment_id);
  }

  SweepResult result;
  bool warned_empty = false;
  for (double threshold : thresholds) {
    const auto aggs = aggregate(points, sites, filter, threshold);
    std::vector<double> risk, crash;
    for (const auto& a : aggs) {
      const auto rr = risk_rate(a);
      const auto cr = crash_rate(a);
      if (!rr || !cr) {
        if (!rr && !warned_empty)
          detail::log().warn("segment {} excluded: no GPS points", a.segment_id);
        continue;
      }
      risk.push_back(*rr);
      crash.push_back(*cr);
    }
    warned_empty = true;
    SweepEntry e;
    e.threshold = threshold;
    e.segments = risk.size();
    const auto [rmin, rmax] = std::minmax_element(risk.begin(), risk.end());
    const auto [cmin, cmax] = std::minmax_element(crash.begin(), crash.end());
    const bool defined = risk.size() >= 3 && *rmax > *rmin && *cmax > *cmin;
    if (defined) {
      const Correlation c = pearson(risk, crash);
      e.r = c.r;
      e.p_value = c.p_value;
      if (!result.best || *e.r > *result.best->r) result.best = e;
    }
    result.curve.push_back(e);
  }
  return result;
}

std::vector<RiskPoint> read_points_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  const std::size_t cs = t.require("segment_id"), clon = t.require("ttc_lon"),
                    clat = t.require("ttc_lat"), ckind = t.require("kind");
  std::vector<RiskPoint> out;
  out.reserve(t.rows());
  auto ttc_field = [&](std::size_t i, std::size_t c) -> ssm::Ttc {
    const std::string& f = t.row(i)[c];
    if (f.empty() || f == "inf") return std::nullopt;
    const auto v = csv::to_double(f);
    if (!v || !(*v >= 0.0))
      throw DataError(path.string() + ":" + std::to_string(t.line(i)) + ": bad TTC value '" + f +
                      "'");
    return *v;
  };
  for (std::size_t i = 0; i < t.rows(); ++i) {
    RiskPoint p;
    p.segment_id = t.row(i)[cs];
    if (p.segment_id.empty())
      throw DataError(path.string() + ":" + std::to_string(t.line(i)) + ": missing segment_id");
    p.ttc.lon = ttc_field(i, clon);
    p.ttc.lat = ttc_field(i, clat);
    if (p.ttc.lon && p.ttc.lat)
      p.ttc.combined = std::min(*p.ttc.lon, *p.ttc.lat);
    else
      p.ttc.combined = p.ttc.lon ? p.ttc.lon : p.ttc.lat;
    const auto kind = ssm::parse_conflict_kind(t.row(i)[ckind]);
    if (!kind)
      throw DataError(path.string() + ":" + std::to_string(t.line(i)) + ": unknown kind '" +
                      t.row(i)[ckind] + "'");
    p.ttc.kind = *kind;
    if ((p.ttc.kind == ssm::ConflictKind::None) != !p.ttc.combined)
      throw DataError(path.string() + ":" + std::to_string(t.line(i)) +
                      ": kind inconsistent with TTC values");
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Site> read_sites_csv(const std::filesystem::path& path) {
  const csv::Table t = csv::Table::read(path);
  const std::size_t cs = t.require("segment_id"), ca = t.require("aadt"),
                    cr = t.require("rear_crashes"), cw = t.require("sideswipe_crashes");
  std::vector<Site> out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    const auto& row = t.row(i);
    const auto aadt = csv::to_double(row[ca]);
    const auto rear = csv::to_int(row[cr]);
    const auto side = csv::to_int(row[cw]);
    if (row[cs].empty() || !aadt || !rear || !side || *rear < 0 || *side < 0)
      throw DataError(path.string() + ":" + std::to_string(t.line(i)) + ": malformed site row");
    out.push_back({row[cs], *aadt, *rear, *side});
  }
  site_index(out);
  return out;
}

void write_sweep_csv(std::ostream& out, const SweepResult& s) {
  csv::Writer w(out);
  w.row({"threshold_s", "pearson_r", "p_value", "segments", "defined"});
  for (const auto& e : s.curve) {
    w.field(e.threshold).field(e.r).field(e.p_value);
    w.field(static_cast<std::int64_t>(e.segments)).field(e.r ? "1" : "0");
    w.end_row();
  }
}

void write_sweep_markdown(std::ostream& out, const SweepResult& s, KindFilter filter) {
  out << "| Conflict type | Optimal threshold (s) | Pearson r | p-value |\n";
  out << "|---|---|---|---|\n";
  out << "| " << to_string(filter) << " | ";
  if (s.best) {
    out << csv::format(s.best->threshold) << " | " << csv::format(*s.best->r) << " | "
        << csv::format(*s.best->p_value) << " |\n";
  } else {
    out << "undefined | | |\n";
  }
}

const VariableMetric& MetricReport::at(std::string_view name) const {
  for (std::size_t i = 0; i < kMetricVariables.size(); ++i)
    if (kMetricVariables[i] == name) return variables[i];
  throw std::invalid_argument("unknown metric variable");
}

env::Policy net_policy(const nn::Mlp& net, double action_bound) {
  return [net, action_bound](const env::EnvState& s) {
    const auto in = s.to_array();
    const auto out = net.forward(std::span<const double>(in));
    return env::clamp({out[0], out[1]}, action_bound);
  };
}

MetricReport evaluate_policy(const env::Policy& policy,
                             std::span<const traj::ConflictEvent> conflicts, int bins) {
  std::array<std::vector<double>, 6> sim, obs;
  for (const auto& c : conflicts) {
    const std::vector<env::EnvState> states = env::observe(c);
    for (std::size_t t = 0; t + 1 < states.size(); ++t) {
      const env::Action a = env::clamp(policy(states[t]));
      const env::Action human = env::human_action(c.records[t]);
      const env::EnvState next = env::step_kinematics(states[t], a);
      const env::EnvState& truth = states[t + 1];
      const std::array<double, 6> s{next.d_lon, next.v_lon, a.a_lon,
                                    next.d_lat, next.v_lat, a.a_lat};
      const std::array<double, 6> o{truth.d_lon, truth.v_lon, human.a_lon,
                                    truth.d_lat, truth.v_lat, human.a_lat};
      for (std::size_t k = 0; k < 6; ++k) {
        sim[k].push_back(s[k]);
        obs[k].push_back(o[k]);
      }
    }
  }
  if (sim[0].empty()) throw DataError("evaluation set holds no transition");
  MetricReport m;
  m.transitions = sim[0].size();
  for (std::size_t k = 0; k < 6; ++k) {
    m.variables[k].rmse = rmse(sim[k], obs[k]);
    m.variables[k].jsd = jsd(sim[k], obs[k], bins);
  }
  return m;
}

void write_metrics_csv(std::ostream& out, const MetricReport& m) {
  csv::Writer w(out);
  w.row({"variable", "rmse", "jsd"});
  for (std::size_t k = 0; k < kMetricVariables.size(); ++k) {
    w.field(kMetricVariables[k]).field(m.variables[k].rmse).field(m.variables[k].jsd);
    w.end_row();
  }
}

void write_metrics_markdown(std::ostream& out, std::span<const std::string> names,
                            std::span<const MetricReport> reports) {
  out << "| Variable |";
  for (const auto& n : names) out << ' ' << n << " RMSE | " << n << " JSD |";
  out << "\n|---|";
  for (std::size_t i = 0; i < names.size(); ++i) out << "---|---|";
  out << '\n';
  for (std::size_t k = 0; k < kMetricVariables.size(); ++k) {
    out << "| " << kMetricVariables[k] << " |";
    for (const auto& r : reports)
      out << ' ' << csv::format(r.variables[k].rmse) << " | " << csv::format(r.variables[k].jsd)
          << " |";
    out << '\n';
  }
}

NnResult nn_fit(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                const NnConfig& config) {
  if (inputs.cols() == 0 || inputs.cols() != targets.cols())
    throw DataError("benchmark fit needs matching, non-empty inputs and targets");
  if (config.batch_size == 0 || config.epochs < 0) throw ConfigError("invalid benchmark config");
  Rng rng(config.seed);
  std::vector<int> sizes{static_cast<int>(inputs.rows())};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  sizes.push_back(static_cast<int>(targets.rows()));

  NnResult res;
  res.net = nn::Mlp::random(sizes, nn::OutputActivation::Identity, 1.0, rng);
  nn::Adam opt(res.net, {.learning_rate = config.learning_rate});

  const auto n = static_cast<std::size_t>(inputs.cols());
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t m = std::min(config.batch_size, n - start);
      Eigen::MatrixXd x(inputs.rows(), static_cast<Eigen::Index>(m));
      Eigen::MatrixXd y(targets.rows(), static_cast<Eigen::Index>(m));
      for (std::size_t j = 0; j < m; ++j) {
        x.col(static_cast<Eigen::Index>(j)) = inputs.col(order[start + j]);
        y.col(static_cast<Eigen::Index>(j)) = targets.col(order[start + j]);
      }
      nn::ForwardCache cache;
      const Eigen::MatrixXd diff = res.net.forward(x, &cache) - y;
      const double denom = static_cast<double>(diff.size());
      loss_sum += diff.squaredNorm() / denom;
      ++batches;
      opt.step(res.net, res.net.backward(cache, (2.0 / denom) * diff));
    }
    res.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  return res;
}

NnResult nn_benchmark_train(std::span<const traj::ConflictEvent> conflicts,
                            const NnConfig& config, int bins) {
  std::vector<std::array<double, 6>> xs;
  std::vector<env::Action> ys;
  for (const auto& c : conflicts) {
    // The last record has no successor and is not a transition.
    for (std::size_t t = 0; t + 1 < c.records.size(); ++t) {
      xs.push_back(env::observe(c.records[t]).to_array());
      ys.push_back(env::human_action(c.records[t]));
    }
  }
  if (xs.empty()) throw DataError("training set holds no transition");
  Eigen::MatrixXd x(6, static_cast<Eigen::Index>(xs.size()));
  Eigen::MatrixXd y(2, static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t k = 0; k < 6; ++k) x(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = xs[i][k];
    y(0, static_cast<Eigen::Index>(i)) = ys[i].a_lon;
    y(1, static_cast<Eigen::Index>(i)) = ys[i].a_lat;
  }
  NnResult res = nn_fit(x, y, config);
  res.train_report = evaluate_policy(net_policy(res.net), conflicts, bins);
  return res;
}

Split split_conflicts(std::span<const traj::ConflictEvent> conflicts, double train_fraction,
                      std::uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
    throw ConfigError("train fraction must lie in [0, 1]");
  std::vector<std::size_t> order(conflicts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(order.size())));
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<long>(n_train), order.end());
  // Keep the original conflict order inside each part.
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  Split s;
  for (auto i : train_idx) s.train.push_back(conflicts[i]);
  for (auto i : test_idx) s.test.push_back(conflicts[i]);
  return s;
}

}  // namespace evade::stats
